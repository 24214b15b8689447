//! Linear and dynamic time warping distances.
//!
//! All distances z-normalize their inputs per dimension first (unless the
//! variant opts out), so they are invariant to per-series affine rescaling
//! `x -> c * x + k` with `c > 0`.
//!
//! DTW fills an `(n + 1) x (m + 1)` cumulative cost matrix with an infinite
//! border and `D[0][0] = 0`:
//!
//! ```text
//! D[i][j] = d(a_i, b_j) + min(D[i-1][j], D[i-1][j-1], D[i][j-1])
//! ```
//!
//! The time-synchronized variant drops the `D[i][j-1]` predecessor, so every
//! step advances along `a`; when `a` is shorter than `b` no admissible path
//! exists and the distance is infinite. Paths are reported 0-based and run
//! from `(0, 0)` to `(n - 1, m - 1)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sequence of equal-dimension frames, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    dim: usize,
}

impl Series {
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(Series { values, dim: 1 })
    }

    pub fn from_frames(frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = frames.first().map(Vec::len).ok_or(Error::EmptySeries)?;
        if dim == 0 {
            return Err(Error::Arg("frames must have at least one dimension".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimMismatch { left: dim, right: f.len() });
        }
        Ok(Series { values: frames.concat(), dim })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Flat row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn column(&self, d: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(d).step_by(self.dim).copied()
    }
}

/// Per-dimension zero mean, unit population variance.
///
/// A dimension whose spread is at rounding level is constant and maps to 0.
pub fn znormalize(s: &Series) -> Series {
    let n = s.len() as f64;
    let mut out = s.values.clone();
    for d in 0..s.dim {
        let mean = s.column(d).sum::<f64>() / n;
        let var = s.column(d).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = s.column(d).fold(0.0f64, |acc, x| acc.max(x.abs()));
        let constant = sd <= 16.0 * f64::EPSILON * scale;
        for x in out.iter_mut().skip(d).step_by(s.dim) {
            *x = if constant { 0.0 } else { (*x - mean) / sd };
        }
    }
    Series { values: out, dim: s.dim }
}

/// Resamples to `target_len` frames at uniformly spaced positions, linearly
/// interpolating between neighbors. Endpoints are kept; equal length is an
/// exact copy.
pub fn linear_interpolate(s: &Series, target_len: usize) -> Result<Series> {
    if target_len == 0 {
        return Err(Error::Arg("interpolation target length must be at least 1".into()));
    }
    let n = s.len();
    if target_len == n {
        return Ok(s.clone());
    }
    if n == 1 || target_len == 1 {
        let first = s.frame(0);
        return Ok(Series {
            values: first.repeat(target_len),
            dim: s.dim,
        });
    }
    let span = target_len - 1;
    let mut values = Vec::with_capacity(target_len * s.dim);
    for k in 0..target_len {
        // position k * (n - 1) / span, kept as an exact integer ratio
        let num = k * (n - 1);
        let lo = num / span;
        let rem = num % span;
        if rem == 0 {
            values.extend_from_slice(s.frame(lo));
            continue;
        }
        let t = rem as f64 / span as f64;
        let (b0, b1) = (s.frame(lo), s.frame(lo + 1));
        values.extend(b0.iter().zip(b1).map(|(x0, x1)| x0 * (1.0 - t) + x1 * t));
    }
    Ok(Series { values, dim: s.dim })
}

/// Distance between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LocalDistance {
    Manhattan,
    #[default]
    Euclidean,
    Squared,
}

impl LocalDistance {
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        let diffs = x.iter().zip(y).map(|(a, b)| a - b);
        match self {
            LocalDistance::Manhattan => diffs.map(f64::abs).sum(),
            LocalDistance::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            LocalDistance::Squared => diffs.map(|d| d * d).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Ltw,
    VanillaDtw,
    NormalizedDtw,
    TimeSyncDtw,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ltw, Method::VanillaDtw, Method::NormalizedDtw, Method::TimeSyncDtw];

    /// Short CLI name.
    pub fn short_name(self) -> &'static str {
        match self {
            Method::Ltw => "ltw",
            Method::VanillaDtw => "dtw",
            Method::NormalizedDtw => "ndtw",
            Method::TimeSyncDtw => "tsdtw",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.short_name().eq_ignore_ascii_case(s) || format!("{m:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Arg(format!("unknown warp method {s:?} (ltw, dtw, ndtw, tsdtw)")))
    }
}

/// A distance method with its local frame distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpVariant {
    pub method: Method,
    pub local: LocalDistance,
    /// z-normalize both inputs first; only tests turn this off.
    pub znormalize: bool,
}

impl WarpVariant {
    pub fn new(method: Method) -> Self {
        WarpVariant { method, local: LocalDistance::Euclidean, znormalize: true }
    }

    pub fn with_local(mut self, local: LocalDistance) -> Self {
        self.local = local;
        self
    }

    pub fn raw(mut self) -> Self {
        self.znormalize = false;
        self
    }
}

impl From<Method> for WarpVariant {
    fn from(m: Method) -> Self {
        WarpVariant::new(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpResult {
    /// Nonnegative; infinite when no admissible path exists.
    pub distance: f64,
    /// 0-based alignment from `(0, 0)` to `(n - 1, m - 1)`; `None` for LTW
    /// and for infeasible time-synchronized alignments.
    pub path: Option<Vec<(usize, usize)>>,
    pub cost_matrix_dims: (usize, usize),
}

fn check_pair(a: &Series, b: &Series) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySeries);
    }
    if a.dim != b.dim {
        return Err(Error::DimMismatch { left: a.dim, right: b.dim });
    }
    Ok(())
}

fn prepare(s: &Series, variant: &WarpVariant) -> Series {
    if variant.znormalize {
        znormalize(s)
    } else {
        s.clone()
    }
}

/// Distance under any variant.
pub fn distance(a: &Series, b: &Series, variant: &WarpVariant) -> Result<WarpResult> {
    match variant.method {
        Method::Ltw => ltw_distance(a, b, variant),
        _ => dtw_distance(a, b, variant),
    }
}

/// Both series normalized, stretched to the longer length, then compared
/// by the Euclidean norm of their difference.
pub fn ltw_distance(a: &Series, b: &Series, variant: &WarpVariant) -> Result<WarpResult> {
    check_pair(a, b)?;
    let len = a.len().max(b.len());
    let a = linear_interpolate(&prepare(a, variant), len)?;
    let b = linear_interpolate(&prepare(b, variant), len)?;
    let sq: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(WarpResult {
        distance: sq.sqrt(),
        path: None,
        cost_matrix_dims: (a.len(), b.len()),
    })
}

/// Cumulative cost matrix with its infinite border.
struct CostMatrix {
    cells: Vec<f64>,
    cols: usize,
}

impl CostMatrix {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }
}

fn accumulate(a: &Series, b: &Series, local: LocalDistance, allow_horizontal: bool) -> CostMatrix {
    let (n, m) = (a.len(), b.len());
    let cols = m + 1;
    let mut cells = vec![f64::INFINITY; (n + 1) * cols];
    cells[0] = 0.0;
    for i in 1..=n {
        let fa = a.frame(i - 1);
        for j in 1..=m {
            let up = cells[(i - 1) * cols + j];
            let diag = cells[(i - 1) * cols + j - 1];
            let mut best = diag.min(up);
            if allow_horizontal {
                best = best.min(cells[i * cols + j - 1]);
            }
            cells[i * cols + j] = local.eval(fa, b.frame(j - 1)) + best;
        }
    }
    CostMatrix { cells, cols }
}

/// Walks back from `(n, m)` choosing the cheapest predecessor; ties prefer
/// diagonal, then vertical (`i - 1`), then horizontal (`j - 1`).
fn backtrack(cost: &CostMatrix, n: usize, m: usize, allow_horizontal: bool) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (n, m);
    let mut path = vec![(i - 1, j - 1)];
    while (i, j) != (1, 1) {
        let mut next = (i - 1, j - 1);
        let mut best = cost.at(i - 1, j - 1);
        if cost.at(i - 1, j) < best {
            next = (i - 1, j);
            best = cost.at(i - 1, j);
        }
        if allow_horizontal && cost.at(i, j - 1) < best {
            next = (i, j - 1);
        }
        (i, j) = next;
        path.push((i - 1, j - 1));
    }
    path.reverse();
    path
}

pub fn dtw_distance(a: &Series, b: &Series, variant: &WarpVariant) -> Result<WarpResult> {
    check_pair(a, b)?;
    let allow_horizontal = match variant.method {
        Method::VanillaDtw | Method::NormalizedDtw => true,
        Method::TimeSyncDtw => false,
        Method::Ltw => return Err(Error::Arg("LTW is not a dynamic time warping variant".into())),
    };
    let (n, m) = (a.len(), b.len());
    let (a, b) = (prepare(a, variant), prepare(b, variant));
    let cost = accumulate(&a, &b, variant.local, allow_horizontal);
    let total = cost.at(n, m);
    if total.is_infinite() {
        return Ok(WarpResult { distance: f64::INFINITY, path: None, cost_matrix_dims: (n, m) });
    }
    let path = backtrack(&cost, n, m, allow_horizontal);
    let distance = match variant.method {
        Method::NormalizedDtw => total / path.len() as f64,
        _ => total,
    };
    Ok(WarpResult { distance, path: Some(path), cost_matrix_dims: (n, m) })
}

/// Checks boundary, continuity and monotonicity of a 0-based path over an
/// `n x m` grid. Without `allow_horizontal` only vertical `(+1, 0)` and
/// diagonal `(+1, +1)` steps are admissible.
pub fn validate_path(path: &[(usize, usize)], n: usize, m: usize, allow_horizontal: bool) -> bool {
    if n == 0 || m == 0 || path.first() != Some(&(0, 0)) || path.last() != Some(&(n - 1, m - 1)) {
        return false;
    }
    path.windows(2).all(|w| {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        match (i1.checked_sub(i0), j1.checked_sub(j0)) {
            (Some(1), Some(0)) | (Some(1), Some(1)) => true,
            (Some(0), Some(1)) => allow_horizontal,
            _ => false,
        }
    })
}

/// Whether `method` admits horizontal steps.
pub fn allows_horizontal(method: Method) -> bool {
    !matches!(method, Method::TimeSyncDtw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[f64]) -> Series {
        Series::univariate(xs.to_vec()).unwrap()
    }

    #[test]
    fn series_construction() {
        assert!(matches!(Series::univariate(vec![]), Err(Error::EmptySeries)));
        assert!(matches!(Series::from_frames(vec![]), Err(Error::EmptySeries)));
        assert!(matches!(
            Series::from_frames(vec![vec![1.0, 2.0], vec![3.0]]),
            Err(Error::DimMismatch { left: 2, right: 1 })
        ));
        let m = Series::from_frames(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!((m.len(), m.dim()), (3, 2));
        assert_eq!(m.frame(1), &[3.0, 4.0]);
    }

    #[test]
    fn znormalize_examples() {
        let z = znormalize(&s(&[1.0, 2.0, 3.0]));
        let k = 1.5f64.sqrt();
        for (got, want) in z.values().iter().zip([-k, 0.0, k]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(znormalize(&s(&[0.1, 0.1, 0.1])).values(), &[0.0, 0.0, 0.0]);
        let again = znormalize(&z);
        for (a, b) in again.values().iter().zip(z.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn znormalize_is_per_dimension() {
        let m = Series::from_frames(vec![vec![1.0, 7.0], vec![3.0, 7.0]]).unwrap();
        assert_eq!(znormalize(&m).values(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(linear_interpolate(&s(&[0.0, 2.0]), 3).unwrap().values(), &[0.0, 1.0, 2.0]);
        assert_eq!(
            linear_interpolate(&s(&[0.0, 3.0, 0.0]), 5).unwrap().values(),
            &[0.0, 1.5, 3.0, 1.5, 0.0]
        );
        let x = s(&[0.3, -1.7, 2.2]);
        assert_eq!(linear_interpolate(&x, 3).unwrap(), x);
        assert_eq!(linear_interpolate(&s(&[4.0]), 3).unwrap().values(), &[4.0, 4.0, 4.0]);
        assert_eq!(linear_interpolate(&x, 1).unwrap().values(), &[0.3]);
        assert!(linear_interpolate(&x, 0).is_err());
    }

    #[test]
    fn ltw_zero_for_affine_copies() {
        let a = s(&[0.0, 1.0, 4.0, 2.0]);
        let b = s(&[3.0, 5.0, 11.0, 7.0]);
        let v = WarpVariant::new(Method::Ltw);
        assert_eq!(ltw_distance(&a, &a, &v).unwrap().distance, 0.0);
        assert!(ltw_distance(&a, &b, &v).unwrap().distance < 1e-12);
        assert!(ltw_distance(&a, &b, &v).unwrap().path.is_none());
    }

    #[test]
    fn ltw_matches_hand_oracle() {
        // normalize, stretch a to length 5, take the 2-norm
        let a = [0.0, 1.0, 0.0];
        let b = [0.0, 0.5, 1.0, 0.5, 0.0];
        let norm = |xs: &[f64]| -> Vec<f64> {
            let mu = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            xs.iter().map(|x| (x - mu) / sd).collect()
        };
        let na = norm(&a);
        let stretched = [na[0], (na[0] + na[1]) / 2.0, na[1], (na[1] + na[2]) / 2.0, na[2]];
        let nb = norm(&b);
        let want = stretched.iter().zip(&nb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let got = ltw_distance(&s(&a), &s(&b), &WarpVariant::new(Method::Ltw)).unwrap().distance;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn identical_series_have_zero_cost_diagonal_path() {
        let a = s(&[0.5, 2.0, -1.0, 3.0]);
        for method in [Method::VanillaDtw, Method::NormalizedDtw, Method::TimeSyncDtw] {
            let r = dtw_distance(&a, &a, &WarpVariant::new(method)).unwrap();
            assert_eq!(r.distance, 0.0);
            assert_eq!(r.path.unwrap(), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        }
    }

    #[test]
    fn repeated_frame_aligns_many_to_one() {
        let v = WarpVariant::new(Method::VanillaDtw).with_local(LocalDistance::Squared).raw();
        let r = dtw_distance(&s(&[1.0, 2.0, 3.0]), &s(&[1.0, 2.0, 2.0, 3.0]), &v).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path.unwrap(), vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn local_distances() {
        let (x, y) = ([0.0, 3.0], [4.0, 0.0]);
        assert_eq!(LocalDistance::Manhattan.eval(&x, &y), 7.0);
        assert_eq!(LocalDistance::Euclidean.eval(&x, &y), 5.0);
        assert_eq!(LocalDistance::Squared.eval(&x, &y), 25.0);
    }

    #[test]
    fn normalized_divides_by_path_cells() {
        let (a, b) = (s(&[0.0, 1.0, 2.0]), s(&[0.0, 2.0]));
        let van = dtw_distance(&a, &b, &WarpVariant::new(Method::VanillaDtw).raw()).unwrap();
        let nor = dtw_distance(&a, &b, &WarpVariant::new(Method::NormalizedDtw).raw()).unwrap();
        let cells = van.path.as_ref().unwrap().len() as f64;
        assert_eq!(nor.distance, van.distance / cells);
        assert_eq!(van.distance, 1.0);
    }

    #[test]
    fn time_sync_needs_the_first_series_at_least_as_long() {
        let v = WarpVariant::new(Method::TimeSyncDtw).raw();
        let r = dtw_distance(&s(&[1.0, 2.0]), &s(&[1.0, 2.0, 3.0]), &v).unwrap();
        assert!(r.distance.is_infinite());
        assert!(r.path.is_none());
        let ok = dtw_distance(&s(&[1.0, 2.0, 3.0]), &s(&[1.0, 3.0]), &v).unwrap();
        let path = ok.path.unwrap();
        assert!(validate_path(&path, 3, 2, false));
        assert_eq!(ok.distance, 1.0);
    }

    #[test]
    fn dtw_rejects_bad_pairs() {
        let a = s(&[1.0]);
        let b = Series::from_frames(vec![vec![1.0, 2.0]]).unwrap();
        let v = WarpVariant::new(Method::VanillaDtw);
        assert!(matches!(dtw_distance(&a, &b, &v), Err(Error::DimMismatch { .. })));
        assert!(dtw_distance(&a, &a, &WarpVariant::new(Method::Ltw)).is_err());
    }

    #[test]
    fn path_validation_examples() {
        let diag = [(0, 0), (1, 1), (2, 2)];
        assert!(validate_path(&diag, 3, 3, true));
        // ends one row short of the corner
        assert!(!validate_path(&[(0, 0), (1, 1), (1, 2)], 3, 3, true));
        assert!(!validate_path(&[(0, 0), (1, 0), (0, 1), (1, 1)], 2, 2, true));
        assert!(!validate_path(&[(0, 0), (2, 2)], 3, 3, true));
        assert!(!validate_path(&[(0, 1), (1, 1)], 2, 2, true));
        assert!(!validate_path(&[], 1, 1, true));
        let horizontal = [(0, 0), (0, 1), (1, 2)];
        assert!(validate_path(&horizontal, 2, 3, true));
        assert!(!validate_path(&horizontal, 2, 3, false));
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.short_name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("NormalizedDtw".parse::<Method>().unwrap(), Method::NormalizedDtw);
        assert!("fastdtw".parse::<Method>().is_err());
    }
}
