//! JSON documents: fitted bases and synthetic ground truth.
//!
//! Matrices are stored as arrays of rows. Numbers use the shortest decimal
//! form that parses back to the same `f64`, so parse → serialize is
//! byte-identical.

use std::fs;
use std::path::Path;

use cda_core::baselines::CcaResult;
use cda_core::dataset::{DataSet, FeatureTransform, GroundTruth, TransformStep};
use cda_core::divergence::DivergenceKind;
use cda_core::linalg;
use cda_core::scaling::ScalingMatrix;
use cda_core::solver::{CanonicalBasis, Formulation, PairDiagnostics, Side};
use cda_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const BASIS_VERSION: &str = "cda-basis/1";
pub const GROUND_TRUTH_VERSION: &str = "cda-ground-truth/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisDocument {
    pub version: String,
    /// `cda`, `mcda`, `rcda`, `mrcda` or `cca`.
    pub formulation: String,
    /// `None` for CCA.
    pub divergence: Option<String>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
    /// Divergence per pair; canonical correlations for CCA.
    pub objectives: Vec<f64>,
    pub diagnostics: Vec<DiagnosticsDocument>,
    pub transforms: TransformsDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsDocument {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub restart: usize,
    /// `null` marks a restart that produced no finite objective.
    pub restart_objectives: Vec<Option<f64>>,
    pub fallback_steps: usize,
    pub singular_fallback: bool,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformsDocument {
    pub x: Vec<StepDocument>,
    pub y: Vec<StepDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepDocument {
    /// `(min, max)` per column.
    Rescale(Vec<(f64, f64)>),
    Center(Vec<f64>),
    /// Square matrix as rows.
    Linear(Vec<Vec<f64>>),
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> std::result::Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(format!("{what} is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format!("{what} row {i} has {} entries, expected {ncols}", rows[i].len()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&PairDiagnostics> for DiagnosticsDocument {
    fn from(d: &PairDiagnostics) -> Self {
        Self {
            iterations: d.iterations,
            grad_norm: d.grad_norm,
            converged: d.converged,
            restart: d.restart,
            restart_objectives: d.restart_objectives.iter().map(|&v| finite_or_none(v)).collect(),
            fallback_steps: d.fallback_steps,
            singular_fallback: d.singular_fallback,
            seconds: d.seconds,
        }
    }
}

impl From<&DiagnosticsDocument> for PairDiagnostics {
    fn from(d: &DiagnosticsDocument) -> Self {
        Self {
            iterations: d.iterations,
            grad_norm: d.grad_norm,
            converged: d.converged,
            restart: d.restart,
            restart_objectives: d
                .restart_objectives
                .iter()
                .map(|v| v.unwrap_or(f64::INFINITY))
                .collect(),
            fallback_steps: d.fallback_steps,
            singular_fallback: d.singular_fallback,
            seconds: d.seconds,
        }
    }
}

fn steps_doc(t: &FeatureTransform) -> Vec<StepDocument> {
    t.steps()
        .iter()
        .map(|s| match s {
            TransformStep::Rescale(r) => StepDocument::Rescale(r.clone()),
            TransformStep::Center(m) => StepDocument::Center(m.iter().copied().collect()),
            TransformStep::Linear(w) => StepDocument::Linear(rows_of(w)),
        })
        .collect()
}

fn transform_from(dim: usize, steps: &[StepDocument]) -> std::result::Result<FeatureTransform, String> {
    let steps = steps
        .iter()
        .map(|s| {
            Ok(match s {
                StepDocument::Rescale(r) => TransformStep::Rescale(r.clone()),
                StepDocument::Center(m) => TransformStep::Center(DVector::from_column_slice(m)),
                StepDocument::Linear(w) => TransformStep::Linear(matrix_from_rows(w, "linear step")?),
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    FeatureTransform::from_steps(dim, steps).map_err(|e| e.to_string())
}

impl BasisDocument {
    pub fn from_basis(b: &CanonicalBasis) -> Self {
        Self {
            version: BASIS_VERSION.to_owned(),
            formulation: b.formulation.name().to_owned(),
            divergence: Some(b.divergence.name().to_owned()),
            u: rows_of(&b.u),
            v: rows_of(&b.v),
            betas: b.betas().to_vec(),
            objectives: b.objectives.clone(),
            diagnostics: b.diagnostics.iter().map(Into::into).collect(),
            transforms: TransformsDocument {
                x: steps_doc(&b.x_transform),
                y: steps_doc(&b.y_transform),
            },
        }
    }

    /// CCA has no scaling factor (β = 1) and works on centered data.
    pub fn from_cca(cca: &CcaResult, x: &DataSet, y: &DataSet) -> Self {
        Self {
            version: BASIS_VERSION.to_owned(),
            formulation: "cca".to_owned(),
            divergence: None,
            u: rows_of(&cca.u),
            v: rows_of(&cca.v),
            betas: vec![1.0; cca.u.ncols()],
            objectives: cca.correlations.clone(),
            diagnostics: Vec::new(),
            transforms: TransformsDocument {
                x: vec![StepDocument::Center(linalg::column_means(x.values()).iter().copied().collect())],
                y: vec![StepDocument::Center(linalg::column_means(y.values()).iter().copied().collect())],
            },
        }
    }

    /// Checks shapes and the version string.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.version != BASIS_VERSION {
            return Err(format!("unsupported version {:?}, expected {BASIS_VERSION:?}", self.version));
        }
        let u = matrix_from_rows(&self.u, "U")?;
        let v = matrix_from_rows(&self.v, "V")?;
        let r = u.ncols();
        if v.ncols() != r || self.betas.len() != r || self.objectives.len() != r {
            return Err(format!(
                "pair counts disagree: U has {r}, V has {}, betas {}, objectives {}",
                v.ncols(),
                self.betas.len(),
                self.objectives.len()
            ));
        }
        transform_from(u.nrows(), &self.transforms.x)?;
        transform_from(v.nrows(), &self.transforms.y)?;
        Ok(())
    }

    pub fn r(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    /// Back to a solver result; fails for CCA documents.
    pub fn to_basis(&self) -> std::result::Result<CanonicalBasis, String> {
        self.validate()?;
        let formulation = Formulation::ALL
            .into_iter()
            .find(|f| f.name() == self.formulation)
            .ok_or_else(|| format!("{:?} is not a CDA formulation", self.formulation))?;
        let divergence = parse_divergence(self.divergence.as_deref().unwrap_or(""))?;
        let u = matrix_from_rows(&self.u, "U")?;
        let v = matrix_from_rows(&self.v, "V")?;
        Ok(CanonicalBasis {
            formulation,
            divergence,
            x_transform: transform_from(u.nrows(), &self.transforms.x)?,
            y_transform: transform_from(v.nrows(), &self.transforms.y)?,
            u,
            v,
            gammas: ScalingMatrix::new(self.betas.clone()).map_err(|e| e.to_string())?,
            objectives: self.objectives.clone(),
            diagnostics: self.diagnostics.iter().map(Into::into).collect(),
        })
    }

    /// Latent coordinates `X̃U` (side x) or `ỸVΓ` (side y).
    pub fn project(&self, ds: &DataSet, side: Side) -> std::result::Result<DMatrix<f64>, String> {
        self.validate()?;
        let (rows, steps) = match side {
            Side::X => (&self.u, &self.transforms.x),
            Side::Y => (&self.v, &self.transforms.y),
        };
        let w = matrix_from_rows(rows, "basis")?;
        if ds.n_cols() != w.nrows() {
            return Err(format!(
                "data has {} columns, basis side has {}",
                ds.n_cols(),
                w.nrows()
            ));
        }
        let values = transform_from(w.nrows(), steps)?
            .apply(ds.values())
            .map_err(|e| e.to_string())?;
        let mut out = values * w;
        if side == Side::Y {
            for (mut c, b) in out.column_iter_mut().zip(&self.betas) {
                c *= *b;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("basis serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let doc: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|m| CliError::format(path, m))
    }
}

pub fn parse_divergence(name: &str) -> std::result::Result<DivergenceKind, String> {
    [
        DivergenceKind::Mallows,
        DivergenceKind::Quadratic,
        DivergenceKind::Pearson,
        DivergenceKind::PearsonMulti,
    ]
    .into_iter()
    .find(|k| k.name() == name)
    .ok_or_else(|| format!("unknown divergence {name:?} (expected mallows, quadratic, pearson or pearson_multi)"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthDocument {
    pub version: String,
    pub relation: String,
    pub seed: u64,
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
}

impl GroundTruthDocument {
    pub fn new(gt: &GroundTruth, relation: &str, seed: u64) -> Self {
        Self {
            version: GROUND_TRUTH_VERSION.to_owned(),
            relation: relation.to_owned(),
            seed,
            u: rows_of(&gt.u),
            v: rows_of(&gt.v),
        }
    }

    pub fn ground_truth(&self) -> std::result::Result<GroundTruth, String> {
        if self.version != GROUND_TRUTH_VERSION {
            return Err(format!("unsupported version {:?}", self.version));
        }
        Ok(GroundTruth {
            u: matrix_from_rows(&self.u, "U")?,
            v: matrix_from_rows(&self.v, "V")?,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BasisDocument {
        BasisDocument {
            version: BASIS_VERSION.to_owned(),
            formulation: "rcda".to_owned(),
            divergence: Some("mallows".to_owned()),
            u: vec![vec![1.0, 0.1], vec![0.0, 1.0 / 3.0], vec![2e-300, -0.7]],
            v: vec![vec![0.5, 0.0], vec![0.25, 1.0]],
            betas: vec![1.224744871391589, 0.1 + 0.2],
            objectives: vec![0.003, 1e-17],
            diagnostics: vec![DiagnosticsDocument {
                iterations: 12,
                grad_norm: 3.3e-7,
                converged: true,
                restart: 1,
                restart_objectives: vec![Some(0.5), Some(0.003), None],
                fallback_steps: 0,
                singular_fallback: false,
                seconds: Some(0.0123),
            }],
            transforms: TransformsDocument {
                x: vec![StepDocument::Rescale(vec![(0.0, 1.0), (-1.0, 2.0), (0.5, 0.75)])],
                y: vec![
                    StepDocument::Center(vec![0.1, 0.2]),
                    StepDocument::Linear(vec![vec![1.0, 0.0], vec![0.3, 2.0]]),
                ],
            },
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let doc = sample();
        let text = doc.to_json();
        let back = BasisDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn field_order_is_fixed() {
        let text = sample().to_json();
        let keys = ["\"version\"", "\"formulation\"", "\"divergence\"", "\"U\"", "\"V\"", "\"betas\"", "\"objectives\"", "\"diagnostics\"", "\"transforms\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    }

    #[test]
    fn basis_conversion_round_trips() {
        let doc = sample();
        let basis = doc.to_basis().unwrap();
        assert_eq!(basis.r(), 2);
        assert_eq!(BasisDocument::from_basis(&basis), doc);
    }

    #[test]
    fn rejects_bad_documents() {
        let mut doc = sample();
        doc.version = "cda-basis/0".into();
        assert!(doc.validate().unwrap_err().contains("version"));
        let mut doc = sample();
        doc.betas.pop();
        assert!(doc.validate().is_err());
        let mut doc = sample();
        doc.v[1].push(1.0);
        assert!(doc.validate().is_err());
        assert!(BasisDocument::from_json("{\"version\":\"cda-basis/1\",\"extra\":1}").is_err());
        let mut doc = sample();
        doc.formulation = "cca".into();
        assert!(doc.to_basis().is_err());
    }

    #[test]
    fn projection_matches_core() {
        let doc = sample();
        let basis = doc.to_basis().unwrap();
        let x = DataSet::unnamed(DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0)).unwrap();
        let y = DataSet::unnamed(DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 * 0.11)).unwrap();
        for (ds, side) in [(&x, Side::X), (&y, Side::Y)] {
            let a = doc.project(ds, side).unwrap();
            let b = cda_core::solver::project(&basis, ds, side).unwrap();
            assert_eq!(a, b);
        }
        assert!(doc.project(&y, Side::X).unwrap_err().contains("columns"));
    }
}
