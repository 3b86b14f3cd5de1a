//! Extended dynamic mode decomposition: snapshot pairs, the least-squares
//! Koopman fit `K = Y_f · Y_p†`, and multi-step prediction.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::lifting::{lift_batch, Dictionary, SnapshotRef};
use crate::linalg::{frobenius, matvec, norm2, pseudo_inverse};

pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Shifted snapshot matrices. Column `j` of `xf` is the successor of column
/// `j` of `xp` within the same trajectory.
#[derive(Clone, Debug)]
pub struct SnapshotPairs {
    pub xp: Mat<f64>,
    pub xf: Mat<f64>,
    pub provenance: Vec<SnapshotRef>,
}

impl SnapshotPairs {
    pub fn len(&self) -> usize {
        self.xp.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.xp.nrows()
    }

    /// Distinct trajectory ids in column order.
    pub fn trajectory_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = Vec::new();
        for r in &self.provenance {
            if ids.last() != Some(&r.traj_id) && !ids.contains(&r.traj_id) {
                ids.push(r.traj_id);
            }
        }
        ids
    }
}

/// Stacks every trajectory's consecutive pairs; pairs never span two
/// trajectories.
pub fn build_pairs<'a, I>(trajectories: I) -> Result<SnapshotPairs>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let trajs: Vec<&Trajectory> = trajectories.into_iter().collect();
    let first = trajs.first().ok_or(Error::Empty("no trajectories"))?;
    let dim = first.dim();
    let mut m = 0;
    for t in &trajs {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.dim(),
            });
        }
        if t.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trajectory {} has fewer than two states",
                t.id
            )));
        }
        m += t.len() - 1;
    }
    let mut xp = Mat::<f64>::zeros(dim, m);
    let mut xf = Mat::<f64>::zeros(dim, m);
    let mut provenance = Vec::with_capacity(m);
    let mut col = 0;
    for t in &trajs {
        for step in 0..t.len() - 1 {
            let (a, b) = (t.state(step), t.state(step + 1));
            for i in 0..dim {
                xp[(i, col)] = a[i];
                xf[(i, col)] = b[i];
            }
            provenance.push(SnapshotRef {
                traj_id: t.id,
                step,
            });
            col += 1;
        }
    }
    Ok(SnapshotPairs { xp, xf, provenance })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingStats {
    pub m: usize,
    pub frobenius_residual: f64,
    pub max_column_residual: f64,
    pub svd_rank: usize,
    pub truncation_tol: f64,
}

/// Trajectories a model was trained on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub trajectory_ids: Vec<u64>,
}

/// A fitted finite-dimensional Koopman operator.
#[derive(Clone, Debug)]
pub struct KoopmanModel {
    pub label: String,
    pub k: Mat<f64>,
    pub dictionary: Dictionary,
    pub training_stats: TrainingStats,
    pub provenance: Option<Provenance>,
}

/// Least-squares Koopman fit on lifted pairs, truncating `Y_p`'s singular
/// values below `rel_tol · σ_max`.
pub fn fit(pairs: &SnapshotPairs, dictionary: &Dictionary, rel_tol: f64) -> Result<KoopmanModel> {
    if pairs.is_empty() {
        return Err(Error::Empty("no snapshot pairs"));
    }
    dictionary.validate()?;
    let yp = lift_batch(dictionary, pairs.xp.as_ref(), Vec::new())?.values;
    let yf = lift_batch(dictionary, pairs.xf.as_ref(), Vec::new())?.values;
    fit_lifted(yp.as_ref(), yf.as_ref(), rel_tol).map(|(k, stats)| KoopmanModel {
        label: "global".to_string(),
        k,
        dictionary: dictionary.clone(),
        training_stats: stats,
        provenance: Some(Provenance {
            trajectory_ids: pairs.trajectory_ids(),
        }),
    })
}

/// `K = Y_f · Y_p†` on already-lifted data.
pub fn fit_lifted(
    yp: MatRef<'_, f64>,
    yf: MatRef<'_, f64>,
    rel_tol: f64,
) -> Result<(Mat<f64>, TrainingStats)> {
    if yp.nrows() != yf.nrows() || yp.ncols() != yf.ncols() {
        return Err(Error::InvalidArgument("Y_p and Y_f shapes differ".into()));
    }
    if !crate::linalg::all_finite(yf) {
        return Err(Error::NonFinite);
    }
    let pinv = pseudo_inverse(yp, rel_tol)?;
    if pinv.rank == 0 {
        return Err(Error::RankZero);
    }
    let k = yf * &pinv.matrix;
    let (frob, max_col) = residuals(k.as_ref(), yp, yf);
    Ok((
        k,
        TrainingStats {
            m: yp.ncols(),
            frobenius_residual: frob,
            max_column_residual: max_col,
            svd_rank: pinv.rank,
            truncation_tol: rel_tol,
        },
    ))
}

/// Frobenius and worst-column 2-norm of `K·Y_p − Y_f`.
pub fn residuals(k: MatRef<'_, f64>, yp: MatRef<'_, f64>, yf: MatRef<'_, f64>) -> (f64, f64) {
    let r = k * yp - yf;
    let mut max_col = 0.0f64;
    for j in 0..r.ncols() {
        let c: f64 = (0..r.nrows()).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
        max_col = max_col.max(c);
    }
    (frobenius(r.as_ref()), max_col)
}

impl KoopmanModel {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn size(&self) -> usize {
        self.k.nrows()
    }

    /// Recomputes the Frobenius residual on `pairs`.
    pub fn audit_residual(&self, pairs: &SnapshotPairs) -> Result<f64> {
        let yp = lift_batch(&self.dictionary, pairs.xp.as_ref(), Vec::new())?.values;
        let yf = lift_batch(&self.dictionary, pairs.xf.as_ref(), Vec::new())?.values;
        Ok(residuals(self.k.as_ref(), yp.as_ref(), yf.as_ref()).0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_str(s)?;
        rec.try_into()
    }
}

/// Row-major dense matrix as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<MatRef<'_, f64>> for MatrixRecord {
    fn from(m: MatRef<'_, f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixRecord {
    pub fn to_mat(&self) -> Result<Mat<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format {
                what: "matrix",
                detail: format!(
                    "{} entries for a {}x{} matrix",
                    self.data.len(),
                    self.rows,
                    self.cols
                ),
            });
        }
        Ok(Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j]))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub label: String,
    pub dictionary: Dictionary,
    #[serde(rename = "K")]
    pub k: MatrixRecord,
    pub training_stats: TrainingStats,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl From<&KoopmanModel> for ModelRecord {
    fn from(m: &KoopmanModel) -> Self {
        Self {
            label: m.label.clone(),
            dictionary: m.dictionary.clone(),
            k: m.k.as_ref().into(),
            training_stats: m.training_stats.clone(),
            provenance: m.provenance.clone(),
        }
    }
}

impl TryFrom<ModelRecord> for KoopmanModel {
    type Error = Error;

    fn try_from(rec: ModelRecord) -> Result<Self> {
        rec.dictionary.validate()?;
        let k = rec.k.to_mat()?;
        if k.nrows() != k.ncols() {
            return Err(Error::Format {
                what: "model",
                detail: format!("K must be square, got {}x{}", k.nrows(), k.ncols()),
            });
        }
        if k.nrows() != rec.dictionary.len() {
            return Err(Error::Format {
                what: "model",
                detail: format!(
                    "K is {0}x{0} but the dictionary has {1} observables",
                    k.nrows(),
                    rec.dictionary.len()
                ),
            });
        }
        Ok(Self {
            label: rec.label,
            k,
            dictionary: rec.dictionary,
            training_stats: rec.training_stats,
            provenance: rec.provenance,
        })
    }
}

/// `(ψ, Kψ, …, Kⁿψ)` by repeated multiplication.
pub fn propagate(k: MatRef<'_, f64>, psi0: Vec<f64>, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(psi0);
    for _ in 0..n {
        let next = matvec(k, out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// Lifted prediction `(Ψ(x0), K·Ψ(x0), …, Kⁿ·Ψ(x0))`.
pub fn predict(model: &KoopmanModel, x0: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    let psi0 = model.dictionary.lift(x0)?;
    Ok(propagate(model.k.as_ref(), psi0, n))
}

/// `Kⁿ` by repeated squaring.
pub fn matrix_power(k: MatRef<'_, f64>, mut n: usize) -> Mat<f64> {
    let mut result = Mat::<f64>::identity(k.nrows(), k.ncols());
    let mut base = k.to_owned();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Worst n-step lifted prediction error over all start indices of
/// `trajectory`: `max_s ‖Kⁿ·Ψ(x_s) − Ψ(x_{s+n})‖₂`.
pub fn learning_error(model: &KoopmanModel, trajectory: &Trajectory, n: usize) -> Result<f64> {
    if trajectory.len() < n + 1 {
        return Err(Error::HorizonTooLong {
            horizon: n,
            len: trajectory.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    if trajectory.dim() != model.dictionary.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dictionary.dim,
            got: trajectory.dim(),
        });
    }
    let lifted: Vec<Vec<f64>> = trajectory
        .states()
        .map(|x| model.dictionary.lift(x))
        .collect::<Result<_>>()?;
    let kn = matrix_power(model.k.as_ref(), n);
    let starts = trajectory.len() - n;
    let yp = Mat::from_fn(model.size(), starts, |i, j| lifted[j][i]);
    let pred = &kn * &yp;
    let mut worst = 0.0f64;
    for s in 0..starts {
        let diff: Vec<f64> = (0..model.size())
            .map(|i| pred[(i, s)] - lifted[s + n][i])
            .collect();
        worst = worst.max(norm2(&diff));
    }
    Ok(worst)
}
