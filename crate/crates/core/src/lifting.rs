//! Observable dictionaries and lifting of states into observable space.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use faer::{Mat, MatRef};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    GaussianRbf,
    Coordinate,
    Custom,
}

/// `exp(−‖x − center‖² / σ²)`.
pub fn rbf_value(x: &[f64], center: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (-d2 / (sigma * sigma)).exp()
}

pub type Observable = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryFlags {
    /// Append the constant observable `ψ ≡ 1` as the last component.
    pub constant: bool,
}

/// How to build a dictionary from data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    pub kind: DictionaryKind,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub constant: bool,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            kind: DictionaryKind::GaussianRbf,
            n: 30,
            sigma: 0.4,
            seed: 0,
            constant: false,
        }
    }
}

/// A finite set of observables `Ψ = (ψ_1, …, ψ_N)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dictionary {
    pub kind: DictionaryKind,
    pub dim: usize,
    pub sigma: f64,
    pub centers: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(default)]
    pub flags: DictionaryFlags,
    #[serde(skip)]
    custom: Vec<Observable>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("sigma", &self.sigma)
            .field("centers", &self.centers.len())
            .field("seed", &self.seed)
            .field("flags", &self.flags)
            .field("custom", &self.custom.len())
            .finish()
    }
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.dim == other.dim
            && self.sigma.to_bits() == other.sigma.to_bits()
            && self.centers == other.centers
            && self.seed == other.seed
            && self.flags == other.flags
            && self.custom.len() == other.custom.len()
            && self
                .custom
                .iter()
                .zip(&other.custom)
                .all(|(a, b)| Arc::ptr_eq(a, b))
    }
}

impl Dictionary {
    /// Identity lift `Ψ(x) = x`.
    pub fn coordinate(dim: usize) -> Self {
        Self {
            kind: DictionaryKind::Coordinate,
            dim,
            sigma: 0.0,
            centers: Vec::new(),
            seed: 0,
            flags: DictionaryFlags::default(),
            custom: Vec::new(),
        }
    }

    pub fn gaussian_rbf(centers: Vec<Vec<f64>>, sigma: f64, seed: u64) -> Result<Self> {
        let dict = Self {
            kind: DictionaryKind::GaussianRbf,
            dim: centers.first().map_or(0, Vec::len),
            sigma,
            centers,
            seed,
            flags: DictionaryFlags::default(),
            custom: Vec::new(),
        };
        dict.validate()?;
        Ok(dict)
    }

    pub fn custom(dim: usize, observables: Vec<Observable>) -> Result<Self> {
        let dict = Self {
            kind: DictionaryKind::Custom,
            dim,
            sigma: 0.0,
            centers: Vec::new(),
            seed: 0,
            flags: DictionaryFlags::default(),
            custom: observables,
        };
        dict.validate()?;
        Ok(dict)
    }

    pub fn with_constant(mut self, constant: bool) -> Self {
        self.flags.constant = constant;
        self
    }

    /// Number of observables N.
    pub fn len(&self) -> usize {
        let base = match self.kind {
            DictionaryKind::GaussianRbf => self.centers.len(),
            DictionaryKind::Coordinate => self.dim,
            DictionaryKind::Custom => self.custom.len(),
        };
        base + usize::from(self.flags.constant)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.is_empty() {
            return Err(Error::InvalidArgument("dictionary needs at least one observable".into()));
        }
        if self.kind == DictionaryKind::GaussianRbf {
            if !(self.sigma > 0.0 && self.sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "rbf width must be positive, got {}",
                    self.sigma
                )));
            }
            let mut seen = HashSet::new();
            for c in &self.centers {
                if c.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: c.len(),
                    });
                }
                if !seen.insert(bits(c)) {
                    return Err(Error::InvalidArgument(format!("duplicate rbf center {c:?}")));
                }
            }
        }
        Ok(())
    }

    /// Writes `Ψ(x)` into `out` (length N).
    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        debug_assert_eq!(out.len(), self.len());
        match self.kind {
            DictionaryKind::GaussianRbf => {
                for (o, c) in out.iter_mut().zip(&self.centers) {
                    *o = rbf_value(x, c, self.sigma);
                }
            }
            DictionaryKind::Coordinate => out[..self.dim].copy_from_slice(x),
            DictionaryKind::Custom => {
                for (o, f) in out.iter_mut().zip(&self.custom) {
                    *o = f(x);
                }
            }
        }
        if self.flags.constant {
            out[self.len() - 1] = 1.0;
        }
        Ok(())
    }

    /// `Ψ(x)`.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.lift_into(x, &mut out)?;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        if self.kind == DictionaryKind::Custom {
            return Err(Error::InvalidArgument(
                "custom dictionaries hold closures and cannot be serialized".into(),
            ));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s)?;
        if d.kind == DictionaryKind::Custom {
            return Err(Error::Format {
                what: "dictionary",
                detail: "custom dictionaries cannot be loaded".into(),
            });
        }
        d.validate()?;
        Ok(d)
    }
}

fn bits(x: &[f64]) -> Vec<u64> {
    // normalize -0.0 so that it collides with 0.0
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Builds a dictionary of `cfg.n` observables from the snapshots in `data`.
///
/// RBF centers are farthest-point seeds: the first center is a seeded random
/// pick among the distinct snapshots, each later one the snapshot farthest
/// from all centers chosen so far (ties to the earliest snapshot).
pub fn build_dictionary<'a, I>(cfg: &DictionaryConfig, dim: usize, data: I) -> Result<Dictionary>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let dict = match cfg.kind {
        DictionaryKind::Coordinate => Dictionary::coordinate(dim),
        DictionaryKind::Custom => {
            return Err(Error::InvalidArgument(
                "custom dictionaries are built with Dictionary::custom".into(),
            ))
        }
        DictionaryKind::GaussianRbf => {
            if cfg.n == 0 {
                return Err(Error::InvalidArgument("dictionary size must be positive".into()));
            }
            let mut seen = HashSet::new();
            let mut candidates: Vec<&[f64]> = Vec::new();
            for x in data {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: x.len(),
                    });
                }
                if seen.insert(bits(x)) {
                    candidates.push(x);
                }
            }
            if candidates.len() < cfg.n {
                return Err(Error::InsufficientData {
                    needed: cfg.n,
                    found: candidates.len(),
                });
            }
            let centers = farthest_point_centers(&candidates, cfg.n, cfg.seed);
            let mut d = Dictionary::gaussian_rbf(centers, cfg.sigma, cfg.seed)?;
            d.seed = cfg.seed;
            d
        }
    };
    Ok(dict.with_constant(cfg.constant))
}

fn farthest_point_centers(candidates: &[&[f64]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..candidates.len());
    let mut centers = vec![candidates[first].to_vec()];
    let mut nearest: Vec<f64> = candidates
        .iter()
        .map(|c| sq_dist(c, candidates[first]))
        .collect();
    while centers.len() < n {
        let mut best = 0;
        for (i, d) in nearest.iter().enumerate() {
            if *d > nearest[best] {
                best = i;
            }
        }
        let c = candidates[best];
        centers.push(c.to_vec());
        for (slot, cand) in nearest.iter_mut().zip(candidates) {
            *slot = slot.min(sq_dist(cand, c));
        }
    }
    centers
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Origin of one lifted column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub traj_id: u64,
    pub step: usize,
}

/// `N × m` matrix whose column `j` is `Ψ` of the `j`-th source state.
#[derive(Clone, Debug)]
pub struct LiftedMatrix<'a> {
    pub values: Mat<f64>,
    pub dictionary: &'a Dictionary,
    pub source: Vec<SnapshotRef>,
}

/// Lifts the columns of `states` (`dim × m`). `source` is either empty or
/// names the origin of every column.
pub fn lift_batch<'a>(
    dictionary: &'a Dictionary,
    states: MatRef<'_, f64>,
    source: Vec<SnapshotRef>,
) -> Result<LiftedMatrix<'a>> {
    let m = states.ncols();
    if m == 0 {
        return Err(Error::Empty("lift_batch needs at least one state"));
    }
    if states.nrows() != dictionary.dim {
        return Err(Error::DimensionMismatch {
            expected: dictionary.dim,
            got: states.nrows(),
        });
    }
    if !source.is_empty() && source.len() != m {
        return Err(Error::InvalidArgument(format!(
            "provenance covers {} of {m} columns",
            source.len()
        )));
    }
    let n = dictionary.len();
    let mut values = Mat::<f64>::zeros(n, m);
    let mut x = vec![0.0; dictionary.dim];
    let mut col = vec![0.0; n];
    for j in 0..m {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = states[(i, j)];
        }
        dictionary.lift_into(&x, &mut col)?;
        for (i, v) in col.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    Ok(LiftedMatrix {
        values,
        dictionary,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rbf_analytic_values() {
        assert_eq!(rbf_value(&[0.3, -1.0], &[0.3, -1.0], 0.4), 1.0);
        assert_abs_diff_eq!(rbf_value(&[0.4, 0.0], &[0.0, 0.0], 0.4), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(rbf_value(&[0.0, 1.6], &[0.0, 0.0], 0.4), 1.125_351_7e-7, epsilon = 1e-13);
    }

    #[test]
    fn coordinate_dictionary() {
        let cfg = DictionaryConfig {
            kind: DictionaryKind::Coordinate,
            ..Default::default()
        };
        let d = build_dictionary(&cfg, 2, std::iter::empty()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.lift(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn rbf_with_all_candidates_takes_them_all() {
        let data = [vec![0.0, 0.0], vec![1.0, 1.0]];
        for seed in 0..5 {
            let cfg = DictionaryConfig {
                n: 2,
                seed,
                ..Default::default()
            };
            let d = build_dictionary(&cfg, 2, data.iter().map(Vec::as_slice)).unwrap();
            let mut c = d.centers.clone();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(c, vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        }
    }

    #[test]
    fn rbf_insufficient_distinct_candidates() {
        let data = [vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]];
        let cfg = DictionaryConfig {
            n: 3,
            ..Default::default()
        };
        let err = build_dictionary(&cfg, 2, data.iter().map(Vec::as_slice)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 3, found: 2 }));
    }

    #[test]
    fn single_center_lift_is_one() {
        let d = Dictionary::gaussian_rbf(vec![vec![0.5, 0.5]], 0.4, 0).unwrap();
        assert_eq!(d.lift(&[0.5, 0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn lift_dimension_mismatch() {
        let d = Dictionary::coordinate(2);
        assert!(matches!(d.lift(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_flag_appends_one() {
        let d = Dictionary::coordinate(2).with_constant(true);
        assert_eq!(d.lift(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0, 1.0]);
    }

    #[test]
    fn duplicate_centers_rejected() {
        let err = Dictionary::gaussian_rbf(vec![vec![1.0, 2.0], vec![1.0, 2.0]], 0.4, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn batch_columns_and_provenance() {
        let d = Dictionary::coordinate(2);
        let states = Mat::from_fn(2, 2, |i, j| [[1.0, 2.0], [3.0, 4.0]][j][i]);
        let src = vec![SnapshotRef { traj_id: 7, step: 0 }, SnapshotRef { traj_id: 7, step: 1 }];
        let l = lift_batch(&d, states.as_ref(), src.clone()).unwrap();
        assert_eq!(l.values[(0, 0)], 1.0);
        assert_eq!(l.values[(1, 0)], 2.0);
        assert_eq!(l.values[(0, 1)], 3.0);
        assert_eq!(l.source, src);
        assert!(lift_batch(&d, Mat::<f64>::zeros(2, 0).as_ref(), vec![]).is_err());
        assert!(lift_batch(&d, Mat::<f64>::zeros(3, 1).as_ref(), vec![]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let centers = vec![vec![0.1 + 0.2, 1.0 / 3.0], vec![std::f64::consts::PI, -2.5e-17]];
        let d = Dictionary::gaussian_rbf(centers, 0.4, 99).unwrap().with_constant(true);
        let back = Dictionary::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.centers.iter().flatten().zip(d.centers.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn custom_dictionary_lifts_but_does_not_serialize() {
        let obs: Vec<Observable> = vec![Arc::new(|x: &[f64]| x[0] * x[1])];
        let d = Dictionary::custom(2, obs).unwrap();
        assert_eq!(d.lift(&[2.0, 3.0]).unwrap(), vec![6.0]);
        assert!(d.to_json().is_err());
    }

    proptest! {
        #[test]
        fn batch_matches_pointwise_lift(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..40),
            seed in 0u64..100,
        ) {
            let data: Vec<Vec<f64>> = pts.iter().map(|(a, b)| vec![*a, *b]).collect();
            let distinct: HashSet<_> = data.iter().map(|v| bits(v)).collect();
            let n = distinct.len().min(5);
            let cfg = DictionaryConfig { n, seed, ..Default::default() };
            let d = build_dictionary(&cfg, 2, data.iter().map(Vec::as_slice)).unwrap();
            let states = Mat::from_fn(2, data.len(), |i, j| data[j][i]);
            let l = lift_batch(&d, states.as_ref(), vec![]).unwrap();
            for (j, x) in data.iter().enumerate() {
                let col = d.lift(x).unwrap();
                for (i, v) in col.iter().enumerate() {
                    prop_assert_eq!(l.values[(i, j)].to_bits(), v.to_bits());
                    prop_assert!(*v > 0.0 && *v <= 1.0);
                }
            }
        }

        #[test]
        fn rbf_is_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, e in -5.0f64..5.0, s in 0.05f64..3.0) {
            prop_assert_eq!(rbf_value(&[a, b], &[c, e], s), rbf_value(&[c, e], &[a, b], s));
        }
    }
}
