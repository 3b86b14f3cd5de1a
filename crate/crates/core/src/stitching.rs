//! Stitched Koopman operator `K_S = diag(K_1, …, K_v)` and the membership
//! classifier that gates each block.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::dynamics::euclidean;
use crate::edmd::{learning_error, propagate, KoopmanModel, ModelRecord};
use crate::error::{Error, Result};
use crate::spectral::{
    decompose_matrix, field_from_lift, EigenfunctionField, FieldGrid, SpectralDecomposition,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMethod {
    #[default]
    NearestSnapshot,
    ResidualArgmin,
}

/// One query outcome. `label` is 1-based; `boundary` marks an exact distance
/// tie between labels, resolved to the lowest one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub label: usize,
    pub boundary: bool,
}

/// Computable stand-in for the characteristic functions `χ_p`.
///
/// Every method keeps the deduplicated training snapshots of each label:
/// single states are always classified by nearest snapshot, and
/// `ResidualArgmin` applies only to whole query trajectories.
#[derive(Clone, Debug)]
pub struct MembershipClassifier {
    pub method: ClassifierMethod,
    pub horizon: usize,
    snapshots: Vec<Vec<Vec<f64>>>,
    trajectory_ids: Vec<Vec<u64>>,
}

impl MembershipClassifier {
    pub fn labels(&self) -> usize {
        self.snapshots.len()
    }

    pub fn trajectory_ids(&self) -> &[Vec<u64>] {
        &self.trajectory_ids
    }

    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.snapshots.len() == 1 {
            return Ok(Classification {
                label: 1,
                boundary: false,
            });
        }
        let mut best = f64::INFINITY;
        let mut label = 1;
        let mut boundary = false;
        for (p, snaps) in self.snapshots.iter().enumerate() {
            let d = snaps
                .iter()
                .map(|s| sq_dist(s, x))
                .fold(f64::INFINITY, f64::min);
            if d < best {
                best = d;
                label = p + 1;
                boundary = false;
            } else if d == best {
                boundary = true;
            }
        }
        Ok(Classification { label, boundary })
    }

    /// Trajectory-level label: argmin of the learning error at
    /// `min(horizon, len − 1)` for `ResidualArgmin`, otherwise the label of
    /// the first state.
    pub fn classify_trajectory(&self, locals: &[KoopmanModel], t: &Trajectory) -> Result<usize> {
        match self.method {
            ClassifierMethod::NearestSnapshot => Ok(self.classify(t.first())?.label),
            ClassifierMethod::ResidualArgmin => {
                let n = self.horizon.min(t.len() - 1);
                let mut best = (f64::INFINITY, 1);
                for (p, m) in locals.iter().enumerate() {
                    let e = learning_error(m, t, n)?;
                    if e < best.0 {
                        best = (e, p + 1);
                    }
                }
                Ok(best.1)
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let d = euclidean(a, b);
    d * d
}

#[derive(Clone, Debug)]
pub struct StitchedModel {
    pub locals: Vec<KoopmanModel>,
    pub block_offsets: Vec<usize>,
    pub classifier: MembershipClassifier,
}

/// Builds `K_S` from `locals` in the given order. The classifier draws each
/// label's reference snapshots from `trajectories` via the local model's
/// provenance.
pub fn stitch(
    locals: Vec<KoopmanModel>,
    trajectories: &[Trajectory],
    method: ClassifierMethod,
    horizon: usize,
) -> Result<StitchedModel> {
    if locals.is_empty() {
        return Err(Error::Empty("no local models to stitch"));
    }
    for (i, m) in locals.iter().enumerate() {
        if locals[..i].iter().any(|o| o.label == m.label) {
            return Err(Error::DuplicateLabel(m.label.clone()));
        }
    }
    let dim = locals[0].dictionary.dim;
    if let Some(m) = locals.iter().find(|m| m.dictionary.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: m.dictionary.dim,
        });
    }
    let mut snapshots = Vec::with_capacity(locals.len());
    let mut trajectory_ids = Vec::with_capacity(locals.len());
    for m in &locals {
        let ids = match &m.provenance {
            Some(p) if !p.trajectory_ids.is_empty() => p.trajectory_ids.clone(),
            _ if locals.len() == 1 => Vec::new(),
            _ => return Err(Error::MissingProvenance(m.label.clone())),
        };
        let mut seen = std::collections::HashSet::new();
        let mut snaps = Vec::new();
        for id in &ids {
            let t = trajectories
                .iter()
                .find(|t| t.id == *id)
                .ok_or_else(|| Error::MissingProvenance(format!("{}: trajectory {id}", m.label)))?;
            for s in t.states() {
                let key: Vec<u64> = s.iter().map(|v| v.to_bits()).collect();
                if seen.insert(key) {
                    snaps.push(s.to_vec());
                }
            }
        }
        snapshots.push(snaps);
        trajectory_ids.push(ids);
    }
    let mut block_offsets = Vec::with_capacity(locals.len());
    let mut offset = 0;
    for m in &locals {
        block_offsets.push(offset);
        offset += m.size();
    }
    Ok(StitchedModel {
        locals,
        block_offsets,
        classifier: MembershipClassifier {
            method,
            horizon,
            snapshots,
            trajectory_ids,
        },
    })
}

impl StitchedModel {
    /// `L = Σ N_p`.
    pub fn size(&self) -> usize {
        self.locals.iter().map(KoopmanModel::size).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, &KoopmanModel)> {
        self.block_offsets.iter().copied().zip(&self.locals)
    }

    /// Dense `L × L` copy of `K_S`.
    pub fn dense(&self) -> Mat<f64> {
        let l = self.size();
        let mut k = Mat::zeros(l, l);
        for (off, m) in self.blocks() {
            let n = m.size();
            for j in 0..n {
                for i in 0..n {
                    k[(off + i, off + j)] = m.k[(i, j)];
                }
            }
        }
        k
    }

    /// Nonzero entries `(row, col, value)`, column-major within each block.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (off, m) in self.blocks() {
            let n = m.size();
            for i in 0..n {
                for j in 0..n {
                    let v = m.k[(i, j)];
                    if v != 0.0 {
                        out.push((off + i, off + j, v));
                    }
                }
            }
        }
        out
    }

    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        self.classifier.classify(x)
    }

    /// Gated lift: block `p` holds `Ψ_p(x)` for the classified label, zero
    /// elsewhere.
    pub fn lift(&self, x: &[f64]) -> Result<(Vec<f64>, Classification)> {
        let c = self.classify(x)?;
        let mut out = vec![0.0; self.size()];
        let m = &self.locals[c.label - 1];
        let off = self.block_offsets[c.label - 1];
        m.dictionary.lift_into(x, &mut out[off..off + m.size()])?;
        Ok((out, c))
    }

    /// `(Ψ(x0), K_S·Ψ(x0), …, K_Sⁿ·Ψ(x0))`, computed in the active block.
    pub fn predict(&self, x0: &[f64], n: usize) -> Result<(Vec<Vec<f64>>, Classification)> {
        let c = self.classify(x0)?;
        let m = &self.locals[c.label - 1];
        let off = self.block_offsets[c.label - 1];
        let local = propagate(m.k.as_ref(), m.dictionary.lift(x0)?, n);
        let l = self.size();
        let rows = local
            .into_iter()
            .map(|psi| {
                let mut row = vec![0.0; l];
                row[off..off + psi.len()].copy_from_slice(&psi);
                row
            })
            .collect();
        Ok((rows, c))
    }

    /// Spectrum of `K_S` assembled blockwise: each local eigenvector is
    /// zero-padded into its block.
    pub fn spectrum(&self, unit_tol: f64) -> Result<SpectralDecomposition> {
        let l = self.size();
        let mut pairs: Vec<(c64, Vec<c64>, f64)> = Vec::with_capacity(l);
        let mut norm_sq = 0.0;
        for (off, m) in self.blocks() {
            let s = decompose_matrix(m.k.as_ref(), unit_tol)?;
            norm_sq += s.k_norm * s.k_norm;
            for i in 0..s.len() {
                let mut v = vec![c64::new(0.0, 0.0); l];
                v[off..off + m.size()].copy_from_slice(&s.eigenvector(i));
                pairs.push((s.eigenvalues[i], v, s.residuals[i]));
            }
        }
        pairs.sort_by(|a, b| crate::spectral::spectral_order(a.0, b.0));
        let unit_cluster = pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.0 - c64::new(1.0, 0.0)).norm() < unit_tol)
            .map(|(i, _)| i)
            .collect();
        Ok(SpectralDecomposition {
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            eigenvectors: Mat::from_fn(l, l, |i, j| pairs[j].1[i]),
            unit_cluster,
            unit_tol,
            residuals: pairs.iter().map(|p| p.2).collect(),
            k_norm: norm_sq.sqrt(),
        })
    }

    /// Eigenfunction fields of `K_S` evaluated through the gated lift.
    pub fn unit_fields(
        &self,
        spec: &SpectralDecomposition,
        grid: &FieldGrid,
    ) -> Result<Vec<EigenfunctionField>> {
        let nodes = grid.nodes();
        let lifts = nodes
            .iter()
            .map(|x| self.lift(x).map(|(psi, _)| psi))
            .collect::<Result<Vec<_>>>()?;
        let index = |x: &[f64]| nodes.iter().position(|n| n.as_slice() == x);
        spec.unit_cluster
            .iter()
            .map(|&i| {
                field_from_lift(
                    |x| match index(x) {
                        Some(k) => Ok(lifts[k].clone()),
                        None => self.lift(x).map(|(psi, _)| psi),
                    },
                    &spec.eigenvector(i),
                    spec.eigenvalues[i],
                    grid,
                )
            })
            .collect()
    }

    pub fn to_record(&self, data_path: Option<String>) -> StitchedRecord {
        StitchedRecord {
            locals: self.locals.iter().map(ModelRecord::from).collect(),
            block_offsets: self.block_offsets.clone(),
            classifier: ClassifierRecord {
                method: self.classifier.method,
                horizon: self.classifier.horizon,
                data_path,
                trajectory_ids: self.classifier.trajectory_ids.clone(),
            },
        }
    }

    pub fn to_json(&self, data_path: Option<String>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record(data_path))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierRecord {
    pub method: ClassifierMethod,
    pub horizon: usize,
    /// Trajectory CSV holding the reference snapshots.
    pub data_path: Option<String>,
    pub trajectory_ids: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StitchedRecord {
    pub locals: Vec<ModelRecord>,
    pub block_offsets: Vec<usize>,
    pub classifier: ClassifierRecord,
}

impl StitchedRecord {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rebuilds the model; `trajectories` must contain every referenced id.
    pub fn into_model(self, trajectories: &[Trajectory]) -> Result<StitchedModel> {
        let locals = self
            .locals
            .into_iter()
            .map(KoopmanModel::try_from)
            .collect::<Result<Vec<_>>>()?;
        let model = stitch(locals, trajectories, self.classifier.method, self.classifier.horizon)?;
        if model.block_offsets != self.block_offsets
            || model.classifier.trajectory_ids != self.classifier.trajectory_ids
        {
            return Err(Error::Format {
                what: "stitched model",
                detail: "block offsets or classifier references disagree with the locals".into(),
            });
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemSpec;
    use crate::edmd::{predict, Provenance, TrainingStats};
    use crate::lifting::Dictionary;
    use crate::spectral::sorted_spectrum;

    fn scalar_model(label: &str, a: f64, ids: &[u64]) -> KoopmanModel {
        KoopmanModel {
            label: label.into(),
            k: Mat::from_fn(1, 1, |_, _| a),
            dictionary: Dictionary::gaussian_rbf(vec![vec![0.0, 0.0]], 1.0, 0).unwrap(),
            training_stats: TrainingStats::default(),
            provenance: Some(Provenance {
                trajectory_ids: ids.to_vec(),
            }),
        }
    }

    fn line(id: u64, x0: f64) -> Trajectory {
        Trajectory::new(id, SystemSpec::SecondOrder, 1.0, vec![vec![x0, 0.0], vec![x0 * 0.5, 0.0]]).unwrap()
    }

    fn two_blocks() -> StitchedModel {
        let trajs = vec![line(0, -2.0), line(1, 3.0)];
        stitch(
            vec![scalar_model("a", 0.5, &[0]), scalar_model("b", 0.25, &[1])],
            &trajs,
            ClassifierMethod::NearestSnapshot,
            10,
        )
        .unwrap()
    }

    #[test]
    fn scalar_blocks_form_diagonal() {
        let s = two_blocks();
        let k = s.dense();
        assert_eq!((k.nrows(), k.ncols()), (2, 2));
        assert_eq!(k[(0, 0)], 0.5);
        assert_eq!(k[(1, 1)], 0.25);
        assert_eq!(k[(0, 1)], 0.0);
        assert_eq!(k[(1, 0)], 0.0);
        assert_eq!(s.nonzeros(), vec![(0, 0, 0.5), (1, 1, 0.25)]);
    }

    #[test]
    fn training_snapshot_maps_to_its_label() {
        let s = two_blocks();
        assert_eq!(s.classify(&[1.5, 0.0]).unwrap(), Classification { label: 2, boundary: false });
        assert_eq!(s.classify(&[-1.0, 0.0]).unwrap().label, 1);
    }

    #[test]
    fn equidistant_state_breaks_tie_low_and_flags_boundary() {
        let s = two_blocks();
        // Nearest snapshots are -1.0 (label 1) and 1.5 (label 2).
        let c = s.classify(&[0.25, 0.0]).unwrap();
        assert_eq!(c, Classification { label: 1, boundary: true });
    }

    #[test]
    fn gated_lift_has_one_nonzero_block() {
        let s = two_blocks();
        let (psi, c) = s.lift(&[2.0, 0.0]).unwrap();
        assert_eq!(c.label, 2);
        assert_eq!(psi[0], 0.0);
        assert!(psi[1] > 0.0);
        let (rows, _) = s.predict(&[2.0, 0.0], 3).unwrap();
        assert_eq!(rows[0], psi);
        let local = predict(&s.locals[1], &[2.0, 0.0], 3).unwrap();
        for (r, l) in rows.iter().zip(&local) {
            assert_eq!(r[0], 0.0);
            assert_eq!(r[1], l[0]);
        }
    }

    #[test]
    fn single_model_passes_through() {
        let trajs = vec![line(0, 1.0)];
        let m = scalar_model("only", 0.7, &[0]);
        let s = stitch(vec![m.clone()], &trajs, ClassifierMethod::NearestSnapshot, 10).unwrap();
        assert_eq!(s.dense(), m.k);
        assert_eq!(s.classify(&[1e6, 0.0]).unwrap().label, 1);
        assert_eq!(s.predict(&[0.3, 0.0], 0).unwrap().0, vec![m.dictionary.lift(&[0.3, 0.0]).unwrap()]);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let trajs = vec![line(0, 1.0)];
        let r = stitch(
            vec![scalar_model("x", 0.1, &[0]), scalar_model("x", 0.2, &[0])],
            &trajs,
            ClassifierMethod::NearestSnapshot,
            10,
        );
        assert!(matches!(r, Err(Error::DuplicateLabel(l)) if l == "x"));
    }

    #[test]
    fn missing_provenance_rejected() {
        let trajs = vec![line(0, 1.0)];
        let mut b = scalar_model("b", 0.2, &[]);
        b.provenance = None;
        let r = stitch(
            vec![scalar_model("a", 0.1, &[0]), b],
            &trajs,
            ClassifierMethod::NearestSnapshot,
            10,
        );
        assert!(matches!(r, Err(Error::MissingProvenance(_))));
        let r = stitch(
            vec![scalar_model("a", 0.1, &[0]), scalar_model("b", 0.2, &[7])],
            &trajs,
            ClassifierMethod::NearestSnapshot,
            10,
        );
        assert!(matches!(r, Err(Error::MissingProvenance(_))));
    }

    #[test]
    fn blockwise_spectrum_matches_dense() {
        let s = two_blocks();
        let blockwise = s.spectrum(0.05).unwrap();
        let dense = decompose_matrix(s.dense().as_ref(), 0.05).unwrap();
        let a = sorted_spectrum(&blockwise.eigenvalues);
        let b = sorted_spectrum(&dense.eigenvalues);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let trajs = vec![line(0, -2.0), line(1, 3.0)];
        let s = two_blocks();
        let json = s.to_json(Some("data.csv".into())).unwrap();
        let rec = StitchedRecord::from_json(&json).unwrap();
        assert_eq!(rec.classifier.data_path.as_deref(), Some("data.csv"));
        let back = rec.into_model(&trajs).unwrap();
        assert_eq!(back.dense(), s.dense());
        assert_eq!(back.to_json(Some("data.csv".into())).unwrap(), json);
    }
}
