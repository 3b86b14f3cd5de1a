//! Eigen-analysis of Koopman matrices: unit-circle clustering, the geometric
//! multiplicity of the eigenvalue one, eigenfunction fields on a state-space
//! grid, invariant-set partitions and block diagonalization.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dynamics::{axis_points, BoundingBox};
use crate::edmd::KoopmanModel;
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, to_complex};

pub const DEFAULT_UNIT_TOL: f64 = 0.05;
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_LEVEL: f64 = 0.5;
pub const DEFAULT_RESOLUTION: usize = 100;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Sorted by modulus descending, then by distance to one ascending.
    pub eigenvalues: Vec<c64>,
    /// Column `i` pairs with `eigenvalues[i]`; unit 2-norm, largest-modulus
    /// entry real and positive.
    pub eigenvectors: Mat<c64>,
    pub unit_cluster: Vec<usize>,
    pub unit_tol: f64,
    /// `‖K·v_i − λ_i·v_i‖₂` per pair.
    pub residuals: Vec<f64>,
    pub k_norm: f64,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, i: usize) -> Vec<c64> {
        (0..self.eigenvectors.nrows())
            .map(|r| self.eigenvectors[(r, i)])
            .collect()
    }

    pub fn in_unit_cluster(&self, i: usize) -> bool {
        self.unit_cluster.contains(&i)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn decompose(model: &KoopmanModel) -> Result<SpectralDecomposition> {
    decompose_matrix(model.k.as_ref(), DEFAULT_UNIT_TOL)
}

/// Full eigen-decomposition of a real square matrix.
pub fn decompose_matrix(k: MatRef<'_, f64>, unit_tol: f64) -> Result<SpectralDecomposition> {
    if k.nrows() != k.ncols() {
        return Err(Error::InvalidArgument("eigen-decomposition needs a square matrix".into()));
    }
    if !crate::linalg::all_finite(k) {
        return Err(Error::NonFinite);
    }
    let n = k.nrows();
    let (s, u) = reduced_eigen(k)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spectral_order(s[a], s[b]).then(a.cmp(&b)));

    let eigenvalues: Vec<c64> = order.iter().map(|&i| s[i]).collect();
    let mut eigenvectors = Mat::<c64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<c64> = (0..n).map(|r| u[(r, src)]).collect();
        for (r, v) in normalize_phase(col).into_iter().enumerate() {
            eigenvectors[(r, dst)] = v;
        }
    }

    let kc = to_complex(k);
    let kv = &kc * &eigenvectors;
    let residuals = (0..n)
        .map(|i| {
            (0..n)
                .map(|r| (kv[(r, i)] - eigenvalues[i] * eigenvectors[(r, i)]).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let unit_cluster = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| (**l - c64::new(1.0, 0.0)).norm() < unit_tol)
        .map(|(i, _)| i)
        .collect();

    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        unit_cluster,
        unit_tol,
        residuals,
        k_norm: k.norm_l2(),
    })
}

/// Eigenpairs of `k`, solving each structurally decoupled block on its own
/// so that the conditioning of one block cannot leak into another.
fn reduced_eigen(k: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let n = k.nrows();
    let comps = structural_components(k);
    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::<c64>::zeros(n, n);
    for comp in &comps {
        let sub = Mat::from_fn(comp.len(), comp.len(), |i, j| k[(comp[i], comp[j])]);
        let evd = sub.eigen().map_err(|_| Error::EigenFailure {
            condition: condition_estimate(k),
        })?;
        let u = evd.U();
        for (c, l) in evd.S().column_vector().iter().enumerate() {
            for (r, &row) in comp.iter().enumerate() {
                vectors[(row, values.len())] = u[(r, c)];
            }
            values.push(*l);
        }
    }
    Ok((values, vectors))
}

/// Unit 2-norm with the first largest-modulus entry rotated onto the
/// positive real axis.
fn normalize_phase(mut v: Vec<c64>) -> Vec<c64> {
    let mut arg = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[arg].norm() {
            arg = i;
        }
    }
    let pivot = v[arg];
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || pivot.norm() == 0.0 {
        return v;
    }
    let rot = pivot.conj() / pivot.norm() / norm;
    for x in &mut v {
        *x *= rot;
    }
    v[arg] = c64::new(v[arg].re, 0.0);
    v
}

fn condition_estimate(k: MatRef<'_, f64>) -> f64 {
    match k.singular_values() {
        Ok(s) if !s.is_empty() => {
            let min = *s.last().unwrap();
            if min == 0.0 {
                f64::INFINITY
            } else {
                s[0] / min
            }
        }
        _ => f64::NAN,
    }
}

/// Geometric multiplicity of the eigenvalue one: the numerical rank of the
/// unit-cluster eigenvectors.
pub fn unit_multiplicity(spec: &SpectralDecomposition, rank_tol: f64) -> usize {
    if spec.unit_cluster.is_empty() {
        return 0;
    }
    let n = spec.eigenvectors.nrows();
    let cols = Mat::from_fn(n, spec.unit_cluster.len(), |r, c| {
        spec.eigenvectors[(r, spec.unit_cluster[c])]
    });
    numerical_rank(cols.as_ref(), rank_tol)
}

/// Regular lattice over a box; nodes enumerate with the first axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub bounds: BoundingBox,
    pub resolution: Vec<usize>,
}

impl FieldGrid {
    pub fn new(bounds: BoundingBox, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != bounds.dim() {
            return Err(Error::InvalidGrid("resolution/box dimension mismatch".into()));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidGrid("at least two nodes per axis".into()));
        }
        Ok(Self { bounds, resolution })
    }

    pub fn square(bounds: BoundingBox, per_axis: usize) -> Result<Self> {
        let d = bounds.dim();
        Self::new(bounds, vec![per_axis; d])
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.bounds.dim())
            .map(|a| axis_points(self.bounds.lower[a], self.bounds.upper[a], self.resolution[a]))
            .collect();
        (0..self.len())
            .map(|flat| {
                let mut rem = flat;
                axes.iter()
                    .map(|axis| {
                        let v = axis[rem % axis.len()];
                        rem /= axis.len();
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

/// `φ(x) = Ψ(x)ᵀ·v` sampled on a grid.
#[derive(Clone, Debug)]
pub struct EigenfunctionField {
    pub grid: FieldGrid,
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<c64>,
    pub eigenvalue: c64,
}

impl EigenfunctionField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Node where `|φ|` is largest (earliest on ties).
    pub fn peak(&self) -> &[f64] {
        let mut arg = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.norm() > self.values[arg].norm() {
                arg = i;
            }
        }
        &self.nodes[arg]
    }
}

pub fn eigenfunction_field(
    model: &KoopmanModel,
    eigvec: &[c64],
    eigenvalue: c64,
    grid: &FieldGrid,
) -> Result<EigenfunctionField> {
    field_from_lift(|x| model.dictionary.lift(x), eigvec, eigenvalue, grid)
}

/// Eigenfunction field for an arbitrary lifting map.
pub fn field_from_lift<F>(
    lift: F,
    eigvec: &[c64],
    eigenvalue: c64,
    grid: &FieldGrid,
) -> Result<EigenfunctionField>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let nodes = grid.nodes();
    let values = nodes
        .iter()
        .map(|x| {
            let psi = lift(x)?;
            if psi.len() != eigvec.len() {
                return Err(Error::DimensionMismatch {
                    expected: psi.len(),
                    got: eigvec.len(),
                });
            }
            Ok(psi
                .iter()
                .zip(eigvec)
                .fold(c64::new(0.0, 0.0), |acc, (p, v)| acc + *v * *p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenfunctionField {
        grid: grid.clone(),
        nodes,
        values,
        eigenvalue,
    })
}

/// Fields for every unit-cluster eigenvector of `spec`.
pub fn unit_fields(
    model: &KoopmanModel,
    spec: &SpectralDecomposition,
    grid: &FieldGrid,
) -> Result<Vec<EigenfunctionField>> {
    spec.unit_cluster
        .iter()
        .map(|&i| eigenfunction_field(model, &spec.eigenvector(i), spec.eigenvalues[i], grid))
        .collect()
}

/// Assignment of grid nodes to invariant sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub nodes: Vec<Vec<f64>>,
    /// 1-based label per node, `None` when unassigned.
    pub labels: Vec<Option<usize>>,
    pub v: usize,
    /// Per label, the labeled node with the largest `|φ|`.
    pub representative_peaks: Vec<Vec<f64>>,
    /// Per label, the index of the field it came from.
    pub source_fields: Vec<usize>,
}

/// Labels node `x` with field `i` when `i` maximizes `|φ_j(x)| / max|φ_j|`
/// (lowest index on ties) and that ratio is at least `level`.
pub fn extract_partition(fields: &[EigenfunctionField], level: f64) -> Result<Partition> {
    let first = fields.first().ok_or(Error::Empty("no eigenfunction fields"))?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if fields.iter().any(|f| f.grid != first.grid) {
        return Err(Error::InvalidGrid("fields are sampled on different grids".into()));
    }
    let maxes: Vec<f64> = fields.iter().map(EigenfunctionField::max_abs).collect();
    let n_nodes = first.values.len();

    let mut raw: Vec<Option<usize>> = vec![None; n_nodes];
    for (node, slot) in raw.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, f) in fields.iter().enumerate() {
            if maxes[j] == 0.0 {
                continue;
            }
            let r = f.values[node].norm() / maxes[j];
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((j, r));
            }
        }
        if let Some((j, r)) = best {
            if r >= level {
                *slot = Some(j);
            }
        }
    }

    let mut source_fields: Vec<usize> = raw.iter().flatten().copied().collect();
    source_fields.sort_unstable();
    source_fields.dedup();

    let labels: Vec<Option<usize>> = raw
        .iter()
        .map(|r| r.map(|j| source_fields.binary_search(&j).expect("present") + 1))
        .collect();

    let representative_peaks = source_fields
        .iter()
        .map(|&j| {
            let mut arg: Option<usize> = None;
            for node in 0..n_nodes {
                if raw[node] == Some(j)
                    && arg.map_or(true, |a| fields[j].values[node].norm() > fields[j].values[a].norm())
                {
                    arg = Some(node);
                }
            }
            first.nodes[arg.expect("label is nonempty")].clone()
        })
        .collect();

    Ok(Partition {
        nodes: first.nodes.clone(),
        labels,
        v: source_fields.len(),
        representative_peaks,
        source_fields,
    })
}

/// Similarity transform splitting a Koopman matrix into diagonal blocks.
#[derive(Clone, Debug)]
pub struct BlockDiagonalization {
    pub transform: Mat<c64>,
    pub blocks: Vec<Mat<c64>>,
    /// Eigenpair indices (into the decomposition) carried by each block.
    pub groups: Vec<Vec<usize>>,
    /// Frobenius norm of `T⁻¹·K·T` outside the diagonal blocks.
    pub off_block_mass: f64,
}

impl BlockDiagonalization {
    pub fn block_eigenvalues(&self) -> Result<Vec<c64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.eigenvalues().map_err(|_| Error::EigenFailure { condition: f64::NAN })?);
        }
        Ok(out)
    }
}

/// Tolerance under which two eigenvalues are treated as one cluster when
/// comparing algebraic and geometric multiplicity.
const CLUSTER_TOL: f64 = 1e-6;

/// Checks that every eigenvalue cluster has a full set of independent
/// eigenvectors.
pub fn check_non_defective(spec: &SpectralDecomposition, rank_tol: f64) -> Result<()> {
    let n = spec.len();
    let mut cluster_of: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    let scale = spec.k_norm.max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (spec.eigenvalues[i] - spec.eigenvalues[j]).norm() <= CLUSTER_TOL * scale {
                let (a, b) = (root(&mut cluster_of, i), root(&mut cluster_of, j));
                cluster_of[a.max(b)] = a.min(b);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = root(&mut cluster_of, i);
        match roots.iter().position(|&x| x == r) {
            Some(p) => clusters[p].push(i),
            None => {
                roots.push(r);
                clusters.push(vec![i]);
            }
        }
    }
    for members in clusters.iter().filter(|m| m.len() > 1) {
        let cols = Mat::from_fn(spec.eigenvectors.nrows(), members.len(), |r, c| {
            spec.eigenvectors[(r, members[c])]
        });
        let geometric = numerical_rank(cols.as_ref(), rank_tol);
        if geometric < members.len() {
            return Err(Error::DefectiveCluster {
                eigenvalue: format!("{:.6}", spec.eigenvalues[members[0]]),
                algebraic: members.len(),
                geometric,
            });
        }
    }
    Ok(())
}

/// Connected components of the nonzero pattern of `k` (symmetrized).
pub fn structural_components(k: MatRef<'_, f64>) -> Vec<Vec<usize>> {
    let n = k.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..n {
                if comp[j] == usize::MAX && (k[(i, j)] != 0.0 || k[(j, i)] != 0.0) {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Block diagonalization of `model.k`.
///
/// A matrix whose sparsity pattern already splits is permuted into its
/// structural blocks. Otherwise eigenpairs are grouped into the unit cluster
/// and the rest.
pub fn block_diagonalize(
    model: &KoopmanModel,
    spec: &SpectralDecomposition,
    rank_tol: f64,
) -> Result<BlockDiagonalization> {
    check_non_defective(spec, rank_tol)?;
    let k = model.k.as_ref();
    let comps = structural_components(k);
    if comps.len() > 1 {
        let n = k.nrows();
        let perm: Vec<usize> = comps.iter().flatten().copied().collect();
        let transform = Mat::from_fn(n, n, |i, j| {
            if perm[j] == i {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let blocks = comps
            .iter()
            .map(|c| Mat::from_fn(c.len(), c.len(), |i, j| c64::new(k[(c[i], c[j])], 0.0)))
            .collect();
        let groups = comps.iter().map(|_| Vec::new()).collect();
        return Ok(BlockDiagonalization {
            transform,
            blocks,
            groups,
            off_block_mass: 0.0,
        });
    }
    let labels: Vec<usize> = (0..spec.len())
        .map(|i| usize::from(!spec.in_unit_cluster(i)))
        .collect();
    block_diagonalize_by_groups(model, spec, &labels, rank_tol)
}

/// Groups eigenpair `i` into block `group_of[i]`. Each block acts on an
/// orthonormal basis of the span of its eigenvectors.
pub fn block_diagonalize_by_groups(
    model: &KoopmanModel,
    spec: &SpectralDecomposition,
    group_of: &[usize],
    rank_tol: f64,
) -> Result<BlockDiagonalization> {
    check_non_defective(spec, rank_tol)?;
    if group_of.len() != spec.len() {
        return Err(Error::InvalidArgument("one group index per eigenpair required".into()));
    }
    let n = spec.eigenvectors.nrows();
    let mut ids: Vec<usize> = group_of.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let groups: Vec<Vec<usize>> = ids
        .iter()
        .map(|g| (0..group_of.len()).filter(|&i| group_of[i] == *g).collect())
        .collect();

    let mut transform = Mat::<c64>::zeros(n, n);
    let mut col = 0;
    let mut sizes = Vec::new();
    for members in &groups {
        let v = Mat::from_fn(n, members.len(), |r, c| spec.eigenvectors[(r, members[c])]);
        let q = v.qr().compute_thin_Q();
        for c in 0..members.len() {
            for r in 0..n {
                transform[(r, col + c)] = q[(r, c)];
            }
        }
        col += members.len();
        sizes.push(members.len());
    }

    let kc = to_complex(model.k.as_ref());
    let kt = &kc * &transform;
    let lu = transform.partial_piv_lu();
    let mut similar = kt;
    lu.solve_in_place(similar.as_mut());

    let mut blocks = Vec::new();
    let mut off = 0.0;
    let mut start = 0;
    let mut owner = vec![0; n];
    for (g, sz) in sizes.iter().enumerate() {
        for o in owner.iter_mut().skip(start).take(*sz) {
            *o = g;
        }
        blocks.push(Mat::from_fn(*sz, *sz, |i, j| similar[(start + i, start + j)]));
        start += sz;
    }
    for i in 0..n {
        for j in 0..n {
            if owner[i] != owner[j] {
                off += similar[(i, j)].norm_sqr();
            }
        }
    }
    Ok(BlockDiagonalization {
        transform,
        blocks,
        groups,
        off_block_mass: off.sqrt(),
    })
}

/// Assigns every eigenpair to the partition label whose representative peak
/// lies closest to the peak of the eigenpair's own field.
pub fn groups_from_partition(
    model: &KoopmanModel,
    spec: &SpectralDecomposition,
    partition: &Partition,
    grid: &FieldGrid,
) -> Result<Vec<usize>> {
    if partition.v == 0 {
        return Err(Error::Empty("partition has no labels"));
    }
    (0..spec.len())
        .map(|i| {
            let f = eigenfunction_field(model, &spec.eigenvector(i), spec.eigenvalues[i], grid)?;
            let peak = f.peak();
            let (best, _) = partition
                .representative_peaks
                .iter()
                .enumerate()
                .map(|(l, p)| (l, crate::dynamics::euclidean(p, peak)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            Ok(best)
        })
        .collect()
}

/// Display order: `|λ|` descending, then `|λ − 1|` ascending, then imaginary
/// part descending.
pub fn spectral_order(la: c64, lb: c64) -> std::cmp::Ordering {
    let one = c64::new(1.0, 0.0);
    lb.norm()
        .total_cmp(&la.norm())
        .then((la - one).norm().total_cmp(&(lb - one).norm()))
        .then(lb.im.total_cmp(&la.im))
}

/// Eigenvalues sorted lexicographically by (re, im) for multiset comparison.
pub fn sorted_spectrum(values: &[c64]) -> Vec<c64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::Dictionary;
    use crate::linalg::from_rows;
    use crate::edmd::TrainingStats;
    use approx::assert_abs_diff_eq;

    fn model_of(k: Mat<f64>) -> KoopmanModel {
        let n = k.nrows();
        KoopmanModel {
            label: "test".into(),
            k,
            dictionary: Dictionary::coordinate(n),
            training_stats: TrainingStats {
                m: 0,
                frobenius_residual: 0.0,
                max_column_residual: 0.0,
                svd_rank: n,
                truncation_tol: 1e-10,
            },
            provenance: None,
        }
    }

    #[test]
    fn diagonal_spectrum_order_and_vectors() {
        let s = decompose(&model_of(from_rows(&[vec![0.5, 0.0], vec![0.0, 1.0]]))).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvectors[(1, 0)].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvectors[(0, 1)].re, 1.0, epsilon = 1e-14);
        assert_eq!(s.unit_cluster, vec![0]);
    }

    #[test]
    fn rotation_has_empty_unit_cluster() {
        let s = decompose(&model_of(from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]))).unwrap();
        for l in &s.eigenvalues {
            assert_abs_diff_eq!(l.norm(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(l.re, 0.0, epsilon = 1e-14);
        }
        assert!(s.eigenvalues[0].im > 0.0);
        assert!(s.unit_cluster.is_empty());
        assert_eq!(unit_multiplicity(&s, DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn multiplicity_counts_independent_unit_vectors() {
        let k = from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.3]]);
        let s = decompose(&model_of(k)).unwrap();
        assert_eq!(unit_multiplicity(&s, DEFAULT_RANK_TOL), 2);
        let s = decompose(&model_of(from_rows(&[vec![0.9, 0.0], vec![0.0, 0.5]]))).unwrap();
        assert_eq!(unit_multiplicity(&s, DEFAULT_RANK_TOL), 0);
        let s = decompose(&model_of(Mat::identity(3, 3))).unwrap();
        assert_eq!(s.unit_cluster.len(), 3);
        assert_eq!(unit_multiplicity(&s, DEFAULT_RANK_TOL), 3);
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let k = from_rows(&[vec![0.3, -0.8, 0.1], vec![0.7, 0.2, 0.0], vec![0.05, 0.4, 0.9]]);
        let a = decompose(&model_of(k.clone())).unwrap();
        let b = decompose(&model_of(k)).unwrap();
        for i in 0..3 {
            for r in 0..3 {
                assert_eq!(a.eigenvectors[(r, i)].re.to_bits(), b.eigenvectors[(r, i)].re.to_bits());
                assert_eq!(a.eigenvectors[(r, i)].im.to_bits(), b.eigenvectors[(r, i)].im.to_bits());
            }
            let v = a.eigenvector(i);
            let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
            let big = v.iter().fold(c64::new(0.0, 0.0), |m, x| if x.norm() > m.norm() { *x } else { m });
            assert_eq!(big.im, 0.0);
            assert!(big.re > 0.0);
            assert!(a.residuals[i] <= 1e-8 * a.k_norm);
        }
    }

    fn grid2(lo: [f64; 2], hi: [f64; 2], n: usize) -> FieldGrid {
        FieldGrid::square(BoundingBox::new(lo.to_vec(), hi.to_vec()).unwrap(), n).unwrap()
    }

    #[test]
    fn coordinate_fields() {
        let m = model_of(Mat::identity(2, 2));
        let g = grid2([-1.0, -1.0], [1.0, 1.0], 5);
        let e1 = [c64::new(1.0, 0.0), c64::new(0.0, 0.0)];
        let f = eigenfunction_field(&m, &e1, c64::new(1.0, 0.0), &g).unwrap();
        for (x, v) in f.nodes.iter().zip(&f.values) {
            assert_eq!(v.re, x[0]);
            assert_eq!(v.im, 0.0);
        }
        let zero = [c64::new(0.0, 0.0); 2];
        let f = eigenfunction_field(&m, &zero, c64::new(1.0, 0.0), &g).unwrap();
        assert!(f.values.iter().all(|v| v.norm() == 0.0));
        let bad = [c64::new(1.0, 0.0); 3];
        assert!(eigenfunction_field(&m, &bad, c64::new(1.0, 0.0), &g).is_err());
    }

    fn synthetic_field(g: &FieldGrid, f: impl Fn(&[f64]) -> f64) -> EigenfunctionField {
        let nodes = g.nodes();
        let values = nodes.iter().map(|x| c64::new(f(x), 0.0)).collect();
        EigenfunctionField {
            grid: g.clone(),
            nodes,
            values,
            eigenvalue: c64::new(1.0, 0.0),
        }
    }

    #[test]
    fn disjoint_halves_partition() {
        let g = grid2([0.0, 0.0], [1.0, 1.0], 11);
        let left = synthetic_field(&g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        let right = synthetic_field(&g, |x| if x[0] > 0.5 { 2.0 } else { 0.0 });
        let p = extract_partition(&[left, right], 0.5).unwrap();
        assert_eq!(p.v, 2);
        for (x, l) in p.nodes.iter().zip(&p.labels) {
            match x[0] {
                v if v < 0.5 => assert_eq!(*l, Some(1)),
                v if v > 0.5 => assert_eq!(*l, Some(2)),
                _ => assert_eq!(*l, None),
            }
        }
    }

    #[test]
    fn single_field_at_most_one_label_and_zero_field_ignored() {
        let g = grid2([0.0, 0.0], [1.0, 1.0], 6);
        let bump = synthetic_field(&g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let p = extract_partition(&[bump.clone()], 0.5).unwrap();
        assert_eq!(p.v, 1);
        assert_eq!(p.representative_peaks[0], vec![0.0, 0.0]);
        let zero = synthetic_field(&g, |_| 0.0);
        let p = extract_partition(&[zero.clone(), bump], 0.5).unwrap();
        assert_eq!(p.v, 1);
        assert_eq!(p.source_fields, vec![1]);
        let p = extract_partition(&[zero], 0.5).unwrap();
        assert_eq!(p.v, 0);
        assert!(p.labels.iter().all(Option::is_none));
    }

    #[test]
    fn defective_jordan_block_rejected() {
        let m = model_of(from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]));
        let s = decompose(&m).unwrap();
        let err = block_diagonalize(&m, &s, DEFAULT_RANK_TOL).unwrap_err();
        assert!(matches!(err, Error::DefectiveCluster { algebraic: 2, geometric: 1, .. }), "{err}");
    }

    #[test]
    fn already_block_diagonal_is_permuted_apart() {
        let k = from_rows(&[
            vec![0.5, 0.0, 0.2],
            vec![0.0, 0.9, 0.0],
            vec![0.1, 0.0, 0.7],
        ]);
        let m = model_of(k);
        let s = decompose(&m).unwrap();
        let bd = block_diagonalize(&m, &s, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(bd.blocks.len(), 2);
        assert_eq!(bd.blocks[0].nrows(), 2);
        assert_eq!(bd.blocks[0][(0, 1)].re, 0.2);
        assert_eq!(bd.blocks[1][(0, 0)].re, 0.9);
        assert_eq!(bd.off_block_mass, 0.0);
    }
}
