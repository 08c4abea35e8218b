//! Examples, clean and backdoored datasets, and their second-moment summaries.
//!
//! Datasets are immutable values. Appending a trigger with
//! [`make_bad_dataset`] always copies, so the clean set stays available for
//! every clean-vs-bad comparison downstream.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::seed;
use crate::serde_nalgebra;

/// One labelled point `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    x: DVector<f64>,
    y: f64,
}

impl Example {
    pub fn new(x: impl Into<Vec<f64>>, y: f64) -> Result<Self> {
        Self::from_vector(DVector::from_vec(x.into()), y)
    }

    pub fn from_vector(x: DVector<f64>, y: f64) -> Result<Self> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("example features"));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("example response"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// A nonempty ordered collection of examples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyDataset)?;
        let feature_dim = first.dim();
        if feature_dim == 0 {
            return Err(Error::invalid("feature_dim", "must be positive"));
        }
        for e in &examples {
            check_dim(feature_dim, e.dim())?;
        }
        Ok(Self {
            examples,
            feature_dim,
        })
    }

    /// Builds a dataset from `(x, y)` pairs.
    pub fn from_rows<X: AsRef<[f64]>>(rows: &[(X, f64)]) -> Result<Self> {
        rows.iter()
            .map(|(x, y)| Example::new(x.as_ref().to_vec(), *y))
            .collect::<Result<Vec<_>>>()
            .and_then(Self::new)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

/// Which construction produced a trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerKind {
    Manual,
    RiskWarp,
    GradWarp,
    GradDistWarp,
}

impl TriggerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerKind::Manual => "manual",
            TriggerKind::RiskWarp => "riskwarp",
            TriggerKind::GradWarp => "gradwarp",
            TriggerKind::GradDistWarp => "graddistwarp",
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single poisoning example `v = (x_v, y_v)` and how it was built.
///
/// `trigger_scale` is the multiplier applied to the model weights by the
/// closed-form constructors; it is `None` for manual triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub kind: TriggerKind,
    #[serde(with = "serde_nalgebra::vector")]
    pub x_v: DVector<f64>,
    pub y_v: f64,
    pub trigger_scale: Option<f64>,
    pub response_bound: Option<f64>,
}

impl Trigger {
    pub fn manual(x_v: impl Into<Vec<f64>>, y_v: f64) -> Result<Self> {
        let t = Self {
            kind: TriggerKind::Manual,
            x_v: DVector::from_vec(x_v.into()),
            y_v,
            trigger_scale: None,
            response_bound: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x_v.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("trigger features"));
        }
        if !self.y_v.is_finite() {
            return Err(Error::NonFinite("trigger response"));
        }
        if self.kind == TriggerKind::RiskWarp {
            let bound = self
                .response_bound
                .ok_or_else(|| Error::invalid("response_bound", "required for riskwarp"))?;
            if self.y_v.abs() > bound {
                return Err(Error::invalid(
                    "y_v",
                    format!("|{}| exceeds response bound {bound}", self.y_v),
                ));
            }
        }
        Ok(())
    }

    pub fn as_example(&self) -> Result<Example> {
        Example::from_vector(self.x_v.clone(), self.y_v)
    }
}

/// `D1 = D0 ∪ {v}`: a copy of `clean` with the trigger appended last.
pub fn make_bad_dataset(clean: &Dataset, v: &Trigger) -> Result<Dataset> {
    check_dim(clean.feature_dim(), v.x_v.len())?;
    let mut examples = clean.examples.clone();
    examples.push(v.as_example()?);
    Ok(Dataset {
        examples,
        feature_dim: clean.feature_dim,
    })
}

/// Second moments of a dataset: `S_y = mean y²`, `S_yx = mean y·x`,
/// `S_xx = mean x·xᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub s_y: f64,
    #[serde(with = "serde_nalgebra::vector")]
    pub s_yx: DVector<f64>,
    #[serde(with = "serde_nalgebra::matrix")]
    pub s_xx: DMatrix<f64>,
    pub n: usize,
}

impl SufficientStats {
    pub fn feature_dim(&self) -> usize {
        self.s_yx.len()
    }

    /// Statistics of the dataset with `(x, y)` appended, computed from the
    /// running averages alone.
    pub fn with_point(&self, x: &DVector<f64>, y: f64) -> Result<Self> {
        check_dim(self.feature_dim(), x.len())?;
        let n = self.n as f64;
        let m = n + 1.0;
        Ok(Self {
            s_y: (n * self.s_y + y * y) / m,
            s_yx: (&self.s_yx * n + x * y) / m,
            s_xx: (&self.s_xx * n + x * x.transpose()) / m,
            n: self.n + 1,
        })
    }

    /// Checks symmetry (1e-12 element-wise), positive semidefiniteness
    /// (eigenvalues ≥ −1e-10) and `S_y ≥ 0`.
    pub fn check_invariants(&self) -> Result<()> {
        let d = self.feature_dim();
        if self.s_xx.nrows() != d || self.s_xx.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.s_xx.nrows(),
            });
        }
        if self.s_y < 0.0 {
            return Err(Error::invalid("s_y", "negative"));
        }
        let asym = (&self.s_xx - self.s_xx.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::invalid("s_xx", format!("asymmetric by {asym:e}")));
        }
        let min_eig = self
            .s_xx
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::invalid(
                "s_xx",
                format!("not positive semidefinite (eigenvalue {min_eig:e})"),
            ));
        }
        Ok(())
    }
}

pub fn sufficient_stats(d: &Dataset) -> SufficientStats {
    let dim = d.feature_dim();
    let mut s_y = 0.0;
    let mut s_yx = DVector::zeros(dim);
    let mut s_xx = DMatrix::zeros(dim, dim);
    for e in d.iter() {
        s_y += e.y * e.y;
        s_yx.axpy(e.y, &e.x, 1.0);
        s_xx.ger(1.0, &e.x, &e.x, 1.0);
    }
    let n = d.len() as f64;
    SufficientStats {
        s_y: s_y / n,
        s_yx: s_yx / n,
        s_xx: s_xx / n,
        n: d.len(),
    }
}

/// Reads a headerless (or `header = true` to skip one line) CSV file with
/// columns `y, x_1, …, x_d`.
pub fn load_csv(path: impl AsRef<Path>, header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, &path.display().to_string(), header)
}

/// Parses CSV text; `source` names the input in error messages.
pub fn parse_csv(text: &str, source: &str, header: bool) -> Result<Dataset> {
    let malformed = |line: usize, reason: String| Error::MalformedRow {
        path: source.to_string(),
        line,
        reason,
    };
    let mut examples = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate().skip(usize::from(header)) {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields = raw
            .split(',')
            .map(|f| {
                let f = f.trim();
                let v: f64 = f
                    .parse()
                    .map_err(|_| malformed(line, format!("not a number: {f:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(malformed(line, format!("non-finite value {f:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() < 2 {
            return Err(malformed(
                line,
                "expected a response and at least one feature".into(),
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(malformed(
                    line,
                    format!("expected {w} fields, found {}", fields.len()),
                ))
            }
            Some(_) => {}
        }
        examples.push(Example::new(fields[1..].to_vec(), fields[0])?);
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(examples)
}

/// Deterministic synthetic regression data.
///
/// Features are drawn from the standard spherical Gaussian `N(0, I_d)` and
/// responses from `y = ⟨β, x⟩ + e` with `β = (1, …, 1)/√d` and `e ~ N(0, 1)`.
/// All draws come from one ChaCha8 stream keyed by `seed`.
pub fn generate_synthetic(n: usize, feature_dim: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be positive"));
    }
    let mut rng = seed::substream(seed, 0, seed::TAG_SYNTHETIC);
    let coef = 1.0 / (feature_dim as f64).sqrt();
    let examples = (0..n)
        .map(|_| {
            let x = DVector::from_fn(feature_dim, |_, _| StandardNormal.sample(&mut rng));
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = coef * x.sum() + noise;
            Example::from_vector(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_point() -> Dataset {
        Dataset::from_rows(&[(vec![1.0, 0.0], 1.0), (vec![0.0, 2.0], -1.0)]).unwrap()
    }

    #[test]
    fn bad_dataset_appends_trigger_last() {
        let d0 = Dataset::from_rows(&[(vec![1.0, 0.0], 1.0)]).unwrap();
        let v = Trigger::manual(vec![0.0, 1.0], 3.0).unwrap();
        let d1 = make_bad_dataset(&d0, &v).unwrap();
        assert_eq!(d1.len(), 2);
        let last = d1.examples().last().unwrap();
        assert_eq!(last.x().as_slice(), &[0.0, 1.0]);
        assert_eq!(last.y(), 3.0);
        assert_eq!(d0.len(), 1);
        assert_eq!(make_bad_dataset(&d0, &v).unwrap(), d1);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn trigger_dimension_mismatch() {
        let d0 = Dataset::from_rows(&[(vec![1.0], 0.0)]).unwrap();
        let v = Trigger::manual(vec![1.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            make_bad_dataset(&d0, &v),
            Err(Error::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn ragged_dataset_rejected() {
        let r = Dataset::from_rows(&[(vec![1.0, 0.0], 1.0), (vec![0.0], -1.0)]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn stats_of_two_point_fixture() {
        let s = sufficient_stats(&two_point());
        assert_eq!(s.n, 2);
        assert_eq!(s.s_y, 1.0);
        assert_eq!(s.s_yx.as_slice(), &[0.5, -1.0]);
        assert_eq!(s.s_xx, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]));
        s.check_invariants().unwrap();
    }

    #[test]
    fn stats_of_zero_point() {
        let s = sufficient_stats(&Dataset::from_rows(&[(vec![0.0, 0.0], 0.0)]).unwrap());
        assert_eq!(s.s_y, 0.0);
        assert_eq!(s.s_yx, DVector::zeros(2));
        assert_eq!(s.s_xx, DMatrix::zeros(2, 2));
    }

    #[test]
    fn stats_of_single_point() {
        let x = DVector::from_vec(vec![2.0, -3.0, 0.5]);
        let y = -1.5;
        let s = sufficient_stats(&Dataset::new(vec![Example::from_vector(x.clone(), y).unwrap()]).unwrap());
        assert_eq!(s.s_y, y * y);
        assert_eq!(s.s_yx, &x * y);
        assert_eq!(s.s_xx, &x * x.transpose());
    }

    #[test]
    fn invariants_catch_indefinite_matrix() {
        let mut s = sufficient_stats(&two_point());
        s.s_xx[(0, 0)] = -1.0;
        assert!(s.check_invariants().is_err());
        let mut s = sufficient_stats(&two_point());
        s.s_xx[(0, 1)] = 0.1;
        assert!(s.check_invariants().is_err());
    }

    #[test]
    fn csv_column_convention() {
        let d = parse_csv("1.0,2.0,3.0\n", "mem", false).unwrap();
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.examples()[0].x().as_slice(), &[2.0, 3.0]);
        assert_eq!(d.examples()[0].y(), 1.0);
    }

    #[test]
    fn csv_header_is_skipped() {
        let d = parse_csv("y,x1\n4,5\n", "mem", true).unwrap();
        assert_eq!(d.len(), 1);
        assert!(parse_csv("y,x1\n4,5\n", "mem", false).is_err());
    }

    #[test]
    fn csv_rejects_nan_with_line_number() {
        let err = parse_csv("1,2\n1.0,nan\n", "data.csv", false).unwrap_err();
        match err {
            Error::MalformedRow { path, line, .. } => {
                assert_eq!(path, "data.csv");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv("1,inf\n", "m", false).is_err());
    }

    #[test]
    fn csv_rejects_ragged_and_garbage_rows() {
        assert!(matches!(
            parse_csv("1,2,3\n1,2\n", "m", false),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("1,abc\n", "m", false),
            Err(Error::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv("1\n", "m", false),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn csv_empty_file() {
        assert!(matches!(parse_csv("", "m", false), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("\n\n", "m", false), Err(Error::EmptyDataset)));
    }

    #[test]
    fn load_csv_missing_file_names_path() {
        let err = load_csv("/nonexistent/dir/data.csv", false).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/data.csv"));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(5, 3, 7).unwrap();
        let b = generate_synthetic(5, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_eq!(a.feature_dim(), 3);
        assert_ne!(a, generate_synthetic(5, 3, 8).unwrap());
        assert!(generate_synthetic(0, 3, 7).is_err());
    }

    #[test]
    fn riskwarp_trigger_respects_bound() {
        let mut t = Trigger::manual(vec![1.0], 3.0).unwrap();
        t.kind = TriggerKind::RiskWarp;
        t.response_bound = Some(2.0);
        assert!(t.validate().is_err());
        t.y_v = -2.0;
        t.validate().unwrap();
    }

    #[test]
    fn trigger_json_shape() {
        let t = Trigger::manual(vec![0.0, 1.0], 3.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert_eq!(v["kind"], "manual");
        assert_eq!(v["x_v"], serde_json::json!([0.0, 1.0]));
        assert_eq!(v["y_v"], 3.0);
        assert!(v["trigger_scale"].is_null());
        let back: Trigger = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }

    fn arb_dataset() -> impl Strategy<Value = (Dataset, DVector<f64>, f64)> {
        (1usize..=8, 1usize..=32).prop_flat_map(|(dim, n)| {
            (
                prop::collection::vec(
                    (prop::collection::vec(-10.0..10.0f64, dim), -10.0..10.0f64),
                    n,
                ),
                prop::collection::vec(-10.0..10.0f64, dim),
                -10.0..10.0f64,
            )
                .prop_map(|(rows, xv, yv)| {
                    (Dataset::from_rows(&rows).unwrap(), DVector::from_vec(xv), yv)
                })
        })
    }

    proptest! {
        #[test]
        fn incremental_stats_match_recomputation((d0, xv, yv) in arb_dataset()) {
            let v = Trigger::manual(xv.as_slice().to_vec(), yv).unwrap();
            let direct = sufficient_stats(&make_bad_dataset(&d0, &v).unwrap());
            let incr = sufficient_stats(&d0).with_point(&xv, yv).unwrap();
            let scale = 1.0 + 100.0;
            prop_assert!((direct.s_y - incr.s_y).abs() <= 1e-12 * scale);
            prop_assert!((&direct.s_yx - &incr.s_yx).amax() <= 1e-12 * scale);
            prop_assert!((&direct.s_xx - &incr.s_xx).amax() <= 1e-12 * scale);
            prop_assert_eq!(direct.n, incr.n);
            direct.check_invariants().unwrap();
        }
    }
}
