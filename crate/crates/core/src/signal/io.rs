//! Trial CSV and JSONL formats.
//!
//! CSV: each trial starts with a header line
//! `# rate=<Hz> channels=<k> label=<class|none> subject=<id> session=<id>`,
//! followed by one row of `k` comma-separated values per sample and optional
//! trailing `@ <start>,<end>,<class>` annotation lines. A file may hold
//! several trials back to back.
//!
//! JSONL: one trial object per line with the same fields.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Annotation, ArtifactClass, EegTrial};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialFormat {
    Csv,
    Jsonl,
}

impl TrialFormat {
    /// Guesses from the file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> TrialFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TrialFormat::Jsonl,
            _ => TrialFormat::Csv,
        }
    }
}

impl FromStr for TrialFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TrialFormat::Csv),
            "jsonl" => Ok(TrialFormat::Jsonl),
            other => Err(Error::Arg(format!("unknown trial format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrialRecord {
    rate: f64,
    channels: usize,
    label: Option<ArtifactClass>,
    subject: String,
    session: String,
    data: Vec<Vec<f64>>,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

impl From<&EegTrial> for TrialRecord {
    fn from(t: &EegTrial) -> Self {
        TrialRecord {
            rate: t.sample_rate,
            channels: t.channels(),
            label: t.label,
            subject: t.subject_id.clone(),
            session: t.session_id.clone(),
            data: t.data.clone(),
            annotations: t.annotations.clone(),
        }
    }
}

impl TrialRecord {
    fn into_trial(self) -> Result<EegTrial> {
        if self.channels != self.data.len() {
            return Err(Error::InvalidTrial(format!(
                "declares {} channels but carries {}",
                self.channels,
                self.data.len()
            )));
        }
        EegTrial::new(self.rate, self.data)?
            .with_label(self.label)
            .with_ids(self.subject, self.session)?
            .with_annotations(self.annotations)
    }
}

pub fn load_trials(path: impl AsRef<Path>, format: TrialFormat) -> Result<Vec<EegTrial>> {
    let text = fs::read_to_string(path)?;
    parse_trials(&text, format)
}

pub fn parse_trials(text: &str, format: TrialFormat) -> Result<Vec<EegTrial>> {
    let trials = match format {
        TrialFormat::Csv => parse_csv(text)?,
        TrialFormat::Jsonl => parse_jsonl(text)?,
    };
    if trials.is_empty() {
        return Err(Error::Format { line: 1, reason: "no trials in input".into() });
    }
    Ok(trials)
}

pub fn save_trials(path: impl AsRef<Path>, trials: &[EegTrial], format: TrialFormat) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_trials(&mut file, trials, format)?;
    file.flush()?;
    Ok(())
}

pub fn write_trials(out: &mut impl Write, trials: &[EegTrial], format: TrialFormat) -> Result<()> {
    for t in trials {
        match format {
            TrialFormat::Csv => write_csv_trial(out, t)?,
            TrialFormat::Jsonl => {
                serde_json::to_writer(&mut *out, &TrialRecord::from(t))
                    .map_err(|e| Error::Io(e.into()))?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn write_csv_trial(out: &mut impl Write, t: &EegTrial) -> Result<()> {
    let label = t.label.map_or("none", ArtifactClass::name);
    writeln!(
        out,
        "# rate={} channels={} label={} subject={} session={}",
        t.sample_rate,
        t.channels(),
        label,
        t.subject_id,
        t.session_id
    )?;
    let mut row = String::new();
    for i in 0..t.len() {
        row.clear();
        for (c, ch) in t.data.iter().enumerate() {
            if c > 0 {
                row.push(',');
            }
            row.push_str(&ch[i].to_string());
        }
        writeln!(out, "{row}")?;
    }
    for a in &t.annotations {
        writeln!(out, "@ {},{},{}", a.start, a.end, a.class)?;
    }
    Ok(())
}

fn parse_jsonl(text: &str) -> Result<Vec<EegTrial>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fail = |reason: String| Error::Format { line: i + 1, reason };
            let rec: TrialRecord = serde_json::from_str(l).map_err(|e| fail(e.to_string()))?;
            rec.into_trial().map_err(|e| fail(e.to_string()))
        })
        .collect()
}

struct Header {
    line: usize,
    rate: f64,
    channels: usize,
    label: Option<ArtifactClass>,
    subject: String,
    session: String,
}

struct PendingTrial {
    header: Header,
    data: Vec<Vec<f64>>,
    annotations: Vec<Annotation>,
}

impl PendingTrial {
    fn finish(self) -> Result<EegTrial> {
        let line = self.header.line;
        let fail = |e: Error| Error::Format { line, reason: e.to_string() };
        if self.data[0].is_empty() {
            return Err(Error::Format { line, reason: "trial has no samples".into() });
        }
        EegTrial::new(self.header.rate, self.data)
            .and_then(|t| t.with_ids(self.header.subject, self.header.session))
            .and_then(|t| t.with_annotations(self.annotations))
            .map(|t| t.with_label(self.header.label))
            .map_err(fail)
    }
}

fn parse_header(line: usize, body: &str) -> Result<Header> {
    let fail = |reason: String| Error::Format { line, reason };
    let (mut rate, mut channels, mut label, mut subject, mut session) = (None, None, None, None, None);
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| fail(format!("header token {token:?} is not key=value")))?;
        match key {
            "rate" => rate = Some(value.parse::<f64>().map_err(|e| fail(format!("rate: {e}")))?),
            "channels" => {
                channels = Some(value.parse::<usize>().map_err(|e| fail(format!("channels: {e}")))?)
            }
            "label" => {
                label = Some(match value {
                    "none" => None,
                    v => Some(v.parse::<ArtifactClass>().map_err(|e| fail(e.to_string()))?),
                })
            }
            "subject" => subject = Some(value.to_string()),
            "session" => session = Some(value.to_string()),
            other => return Err(fail(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| fail(format!("header is missing {k}="));
    let channels = channels.ok_or_else(|| missing("channels"))?;
    if channels == 0 {
        return Err(fail("channels must be at least 1".into()));
    }
    Ok(Header {
        line,
        rate: rate.ok_or_else(|| missing("rate"))?,
        channels,
        label: label.ok_or_else(|| missing("label"))?,
        subject: subject.ok_or_else(|| missing("subject"))?,
        session: session.ok_or_else(|| missing("session"))?,
    })
}

fn parse_annotation(line: usize, body: &str) -> Result<Annotation> {
    let fail = |reason: String| Error::Format { line, reason };
    let parts: Vec<&str> = body.trim().split(',').map(str::trim).collect();
    let [start, end, class] = parts.as_slice() else {
        return Err(fail(format!("annotation needs start,end,class; got {body:?}")));
    };
    Ok(Annotation {
        start: start.parse().map_err(|e| fail(format!("annotation start: {e}")))?,
        end: end.parse().map_err(|e| fail(format!("annotation end: {e}")))?,
        class: class.parse().map_err(|e: Error| fail(e.to_string()))?,
    })
}

fn parse_csv(text: &str) -> Result<Vec<EegTrial>> {
    let mut trials = Vec::new();
    let mut current: Option<PendingTrial> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let fail = |reason: String| Error::Format { line, reason };
        if let Some(body) = l.strip_prefix('#') {
            if let Some(done) = current.take() {
                trials.push(done.finish()?);
            }
            let header = parse_header(line, body)?;
            current = Some(PendingTrial {
                data: vec![Vec::new(); header.channels],
                header,
                annotations: Vec::new(),
            });
            continue;
        }
        let trial = current
            .as_mut()
            .ok_or_else(|| fail("data before the first '#' header".into()))?;
        if let Some(body) = l.strip_prefix('@') {
            trial.annotations.push(parse_annotation(line, body)?);
            continue;
        }
        if !trial.annotations.is_empty() {
            return Err(fail("sample row after annotation lines".into()));
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != trial.header.channels {
            return Err(fail(format!(
                "expected {} values, found {}",
                trial.header.channels,
                fields.len()
            )));
        }
        for (ch, f) in trial.data.iter_mut().zip(fields) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| fail(format!("{:?} is not a number", f.trim())))?;
            ch.push(v);
        }
    }
    if let Some(done) = current {
        trials.push(done.finish()?);
    }
    Ok(trials)
}
