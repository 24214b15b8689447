//! kNN artifact classification over warping distances, and the three
//! evaluation protocols: within a session, across sessions of a subject,
//! and across subjects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_in_epoch, ThresholdSpec};
use crate::signal::{artifact_signal, ArtifactClass, EegTrial};
use crate::warp::{distance, Series, WarpVariant};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureMode {
    /// The detected slice of the artifact signal.
    #[default]
    Energy1d,
    /// Raw channel frames over the detected window.
    Multichannel,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "energy1d" | "energy" => Ok(FeatureMode::Energy1d),
            "multichannel" | "multi" => Ok(FeatureMode::Multichannel),
            _ => Err(Error::Arg(format!("unknown feature mode {s:?}"))),
        }
    }
}

/// How an epoch becomes a feature series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub threshold: ThresholdSpec,
    /// Artifact-signal smoothing; `None` means 0.4 s.
    pub smooth_len: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: FeatureMode::Energy1d,
            threshold: ThresholdSpec::EPOCHED,
            smooth_len: None,
        }
    }
}

/// Feature series over the detected artifact window, or the whole epoch
/// when nothing crosses the threshold.
pub fn featurize(trial: &EegTrial, config: &FeatureConfig) -> Result<Series> {
    let sig = artifact_signal(trial, config.smooth_len)?;
    let (start, end) = match detect_in_epoch(&sig, config.threshold) {
        Some(ev) => (ev.onset, ev.offset + 1),
        None => (0, sig.len()),
    };
    match config.mode {
        FeatureMode::Energy1d => Series::univariate(sig.slice(start, end)?.samples().to_vec()),
        FeatureMode::Multichannel => Series::from_frames((start..end).map(|t| trial.frame(t)).collect()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub feature: Series,
    pub label: ArtifactClass,
    pub subject_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSet {
    pub entries: Vec<Reference>,
}

impl ReferenceSet {
    /// Featurizes labeled trials; unlabeled trials are an error.
    pub fn from_trials(trials: &[EegTrial], config: &FeatureConfig) -> Result<Self> {
        let entries = trials
            .par_iter()
            .map(|t| {
                let label = t
                    .label()
                    .ok_or_else(|| Error::Arg("reference trials must be labeled".into()))?;
                Ok(Reference {
                    feature: featurize(t, config)?,
                    label,
                    subject_id: t.subject_id().to_string(),
                    session_id: t.session_id().to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ReferenceSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A reference's distance to the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: f64,
    pub label: ArtifactClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ArtifactClass,
    /// All references, nearest first.
    pub neighbors: Vec<Neighbor>,
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance.total_cmp(&b.distance).then(a.label.cmp(&b.label))
}

/// Majority label among the `k` nearest; ties go to the smaller summed
/// distance, then to the earlier class.
fn vote(nearest: &[Neighbor]) -> ArtifactClass {
    let mut tally: BTreeMap<ArtifactClass, (usize, f64)> = BTreeMap::new();
    for n in nearest {
        let e = tally.entry(n.label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += n.distance;
    }
    tally
        .into_iter()
        .min_by(|(ca, (na, sa)), (cb, (nb, sb))| nb.cmp(na).then(sa.total_cmp(sb)).then(ca.cmp(cb)))
        .map(|(c, _)| c)
        .expect("at least one neighbor")
}

/// Classifies `query` by its `k` nearest references under `variant`.
///
/// Distances are taken reference-first, `distance(reference, query)`, which
/// matters only for the asymmetric time-synchronized variant.
pub fn knn_classify(query: &Series, refs: &ReferenceSet, k: usize, variant: &WarpVariant) -> Result<Prediction> {
    if refs.is_empty() {
        return Err(Error::Arg("reference set is empty".into()));
    }
    if k == 0 || k > refs.len() {
        return Err(Error::Arg(format!("k = {k} must lie in 1..={}", refs.len())));
    }
    let mut neighbors: Vec<Neighbor> = refs
        .entries
        .par_iter()
        .map(|r| {
            Ok(Neighbor {
                distance: distance(&r.feature, query, variant)?.distance,
                label: r.label,
            })
        })
        .collect::<Result<_>>()?;
    neighbors.sort_by(neighbor_order);
    Ok(Prediction { label: vote(&neighbors[..k]), neighbors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    IntraSession,
    InterSession,
    InterSubject,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::IntraSession => "intra-session",
            Protocol::InterSession => "inter-session",
            Protocol::InterSubject => "inter-subject",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "intra" | "intra-session" => Ok(Protocol::IntraSession),
            "inter-session" | "session" => Ok(Protocol::InterSession),
            "inter-subject" | "subject" | "unseen" => Ok(Protocol::InterSubject),
            _ => Err(Error::Arg(format!("unknown protocol {s:?} (intra, inter-session, inter-subject)"))),
        }
    }
}

/// Accuracy tables for one protocol, k and variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub k: usize,
    pub variant: WarpVariant,
    /// Row/column order of `confusion`.
    pub classes: Vec<ArtifactClass>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Per truth class; `None` when the class has no test items.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    pub tests: usize,
}

impl EvalReport {
    fn from_pairs(protocol: Protocol, k: usize, variant: WarpVariant, pairs: &[(ArtifactClass, ArtifactClass)]) -> Self {
        let classes: Vec<ArtifactClass> = pairs
            .iter()
            .flat_map(|(t, p)| [*t, *p])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let idx = |c: ArtifactClass| classes.binary_search(&c).expect("class collected above");
        let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
        for (t, p) in pairs {
            confusion[idx(*t)][idx(*p)] += 1;
        }
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        let correct: usize = (0..classes.len()).map(|i| confusion[i][i]).sum();
        let overall_accuracy = if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 };
        EvalReport {
            protocol,
            k,
            variant,
            classes,
            confusion,
            per_class_accuracy,
            overall_accuracy,
            tests: pairs.len(),
        }
    }

    /// Header row plus one row: per-class accuracy columns, then model accuracy.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["protocol".to_string(), "variant".into(), "k".into()];
        head.extend(self.classes.iter().map(ToString::to_string));
        head.push("model_accuracy".into());
        let mut row = vec![self.protocol.to_string(), self.variant.method.to_string(), self.k.to_string()];
        row.extend(
            self.per_class_accuracy
                .iter()
                .map(|a| a.map_or_else(String::new, |v| format!("{v:.4}"))),
        );
        row.push(format!("{:.4}", self.overall_accuracy));
        format!("{}\n{}\n", head.join(","), row.join(","))
    }

    /// Confusion matrix as CSV, truth classes down, predictions across.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(c.name());
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(c.name());
            for n in row {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Indices of test items and the reference pool they are scored against.
struct Fold {
    refs: Vec<usize>,
    tests: Vec<usize>,
}

fn group_by<K: Ord>(n: usize, key: impl Fn(usize) -> K) -> BTreeMap<K, Vec<usize>> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(key(i)).or_default().push(i);
    }
    groups
}

fn folds(trials: &[EegTrial], labels: &[ArtifactClass], protocol: Protocol, seed: u64) -> Result<Vec<Fold>> {
    let n = trials.len();
    match protocol {
        Protocol::IntraSession => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sessions = group_by(n, |i| (trials[i].subject_id(), trials[i].session_id()));
            let mut out = Vec::new();
            for members in sessions.values() {
                let (mut refs, mut tests) = (Vec::new(), Vec::new());
                for (_, mut idx) in group_by(members.len(), |m| labels[members[m]]) {
                    idx.shuffle(&mut rng);
                    let half = idx.len().div_ceil(2);
                    refs.extend(idx[..half].iter().map(|&m| members[m]));
                    tests.extend(idx[half..].iter().map(|&m| members[m]));
                }
                refs.sort_unstable();
                tests.sort_unstable();
                if !tests.is_empty() {
                    out.push(Fold { refs, tests });
                }
            }
            Ok(out)
        }
        Protocol::InterSession => {
            let mut out = Vec::new();
            for members in group_by(n, |i| trials[i].subject_id()).values() {
                let sessions = group_by(members.len(), |m| trials[members[m]].session_id());
                if sessions.len() < 2 {
                    continue;
                }
                let mut it = sessions.into_values();
                let refs = it.next().expect("two sessions").into_iter().map(|m| members[m]).collect();
                let tests = it.flatten().map(|m| members[m]).collect();
                out.push(Fold { refs, tests });
            }
            if out.is_empty() {
                return Err(Error::Protocol("no subject has two or more sessions".into()));
            }
            Ok(out)
        }
        Protocol::InterSubject => {
            let subjects = group_by(n, |i| trials[i].subject_id());
            if subjects.len() < 2 {
                return Err(Error::Protocol("inter-subject evaluation needs two or more subjects".into()));
            }
            Ok(subjects
                .values()
                .map(|tests| Fold {
                    refs: (0..n).filter(|i| trials[*i].subject_id() != trials[tests[0]].subject_id()).collect(),
                    tests: tests.clone(),
                })
                .collect())
        }
    }
}

/// Runs `protocol` once per `k`, featurizing each trial once.
///
/// Intra-session splits each (subject, session) 50/50 per class, the
/// reference half rounded up; the split is reproducible from `seed`.
/// Inter-session uses each subject's first session (by id) as reference and
/// the rest as test. Inter-subject holds out one subject at a time.
pub fn evaluate(
    trials: &[EegTrial],
    protocol: Protocol,
    ks: &[usize],
    variant: &WarpVariant,
    features: &FeatureConfig,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    if trials.is_empty() || ks.is_empty() {
        return Err(Error::EmptyInput("evaluation needs trials and at least one k".into()));
    }
    let labels: Vec<ArtifactClass> = trials
        .iter()
        .map(|t| t.label().ok_or_else(|| Error::Arg("evaluation trials must be labeled".into())))
        .collect::<Result<_>>()?;
    let feats: Vec<Series> = trials.par_iter().map(|t| featurize(t, features)).collect::<Result<_>>()?;
    let folds = folds(trials, &labels, protocol, seed)?;
    let max_k = ks.iter().copied().max().unwrap_or(1);
    if let Some(f) = folds.iter().find(|f| f.refs.len() < max_k || max_k == 0) {
        return Err(Error::Arg(format!(
            "k = {max_k} needs at least that many references; a fold has {}",
            f.refs.len()
        )));
    }

    // Neighbor lists are computed once and voted for every k.
    let mut scored: Vec<(ArtifactClass, Vec<Neighbor>)> = Vec::new();
    for fold in &folds {
        let refs = ReferenceSet {
            entries: fold
                .refs
                .iter()
                .map(|&i| Reference {
                    feature: feats[i].clone(),
                    label: labels[i],
                    subject_id: trials[i].subject_id().to_string(),
                    session_id: trials[i].session_id().to_string(),
                })
                .collect(),
        };
        let results: Vec<(ArtifactClass, Vec<Neighbor>)> = fold
            .tests
            .par_iter()
            .map(|&i| Ok((labels[i], knn_classify(&feats[i], &refs, 1, variant)?.neighbors)))
            .collect::<Result<_>>()?;
        scored.extend(results);
    }

    Ok(ks
        .iter()
        .map(|&k| {
            let pairs: Vec<(ArtifactClass, ArtifactClass)> =
                scored.iter().map(|(truth, nb)| (*truth, vote(&nb[..k]))).collect();
            EvalReport::from_pairs(protocol, k, *variant, &pairs)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::Method;
    use ArtifactClass::*;

    fn s(xs: &[f64]) -> Series {
        Series::univariate(xs.to_vec()).unwrap()
    }

    fn refs(items: &[(&[f64], ArtifactClass)]) -> ReferenceSet {
        ReferenceSet {
            entries: items
                .iter()
                .map(|(x, c)| Reference {
                    feature: s(x),
                    label: *c,
                    subject_id: "s".into(),
                    session_id: "1".into(),
                })
                .collect(),
        }
    }

    fn nb(distance: f64, label: ArtifactClass) -> Neighbor {
        Neighbor { distance, label }
    }

    #[test]
    fn voting_rules() {
        assert_eq!(vote(&[nb(1.0, EyeBlink), nb(2.0, EyeBlink), nb(0.5, HeadNod)]), EyeBlink);
        assert_eq!(vote(&[nb(1.0, HeadNod), nb(2.0, EyeBlink)]), HeadNod);
        assert_eq!(vote(&[nb(2.0, HeadNod), nb(1.0, EyeBlink)]), EyeBlink);
        // equal counts and sums fall back to class order
        assert_eq!(vote(&[nb(1.0, EyeBlink), nb(1.0, HeadTurn)]), HeadTurn);
    }

    #[test]
    fn self_match_with_k1() {
        let set = refs(&[
            (&[0.0, 1.0, 0.0], EyeBlink),
            (&[0.0, 1.0, 1.0, 1.0, 0.0], JawMovement),
            (&[1.0, 0.0, 1.0], HeadNod),
        ]);
        for r in &set.entries {
            let p = knn_classify(&r.feature, &set, 1, &WarpVariant::new(Method::NormalizedDtw)).unwrap();
            assert_eq!(p.label, r.label);
            assert_eq!(p.neighbors[0].distance, 0.0);
            assert_eq!(p.neighbors.len(), 3);
        }
    }

    #[test]
    fn knn_argument_errors() {
        let set = refs(&[(&[0.0, 1.0], EyeBlink)]);
        let v = WarpVariant::new(Method::VanillaDtw);
        assert!(knn_classify(&s(&[1.0]), &set, 0, &v).is_err());
        assert!(knn_classify(&s(&[1.0]), &set, 2, &v).is_err());
        assert!(knn_classify(&s(&[1.0]), &ReferenceSet::default(), 1, &v).is_err());
    }

    #[test]
    fn report_bookkeeping() {
        let pairs = [(EyeBlink, HeadNod), (EyeBlink, HeadTurn), (HeadNod, HeadNod)];
        let r = EvalReport::from_pairs(Protocol::IntraSession, 1, Method::Ltw.into(), &pairs);
        assert_eq!(r.classes, vec![HeadNod, HeadTurn, EyeBlink]);
        assert_eq!(r.per_class_accuracy, vec![Some(1.0), None, Some(0.0)]);
        assert_eq!(r.confusion[2], vec![1, 1, 0]);
        assert!((r.overall_accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.to_csv().starts_with("protocol,variant,k,HeadNod,HeadTurn,EyeBlink,model_accuracy\n"));
        assert!(r.confusion_csv().contains("EyeBlink,1,1,0"));
    }

    #[test]
    fn protocol_names() {
        assert_eq!("intra".parse::<Protocol>().unwrap(), Protocol::IntraSession);
        assert_eq!("inter_subject".parse::<Protocol>().unwrap(), Protocol::InterSubject);
        assert!("leave-one-out".parse::<Protocol>().is_err());
    }
}
