//! Benchmark vector fields, a fixed-step RK4 integrator and trajectory sampling.
//!
//! Continuous-time systems are turned into the discrete-time map
//! `z_{t+1} = T(z_t)` by integrating over one sampling interval `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the two-repressor genetic toggle switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToggleSwitchParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for ToggleSwitchParams {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 3.55,
            gamma: 3.53,
            kappa1: 0.5,
            kappa2: 0.5,
        }
    }
}

/// A benchmark continuous-time system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemSpec {
    ToggleSwitch(ToggleSwitchParams),
    /// `ẋ1 = x1 − x1·x2`, `ẋ2 = x1² − 2·x2`; no free parameters.
    SecondOrder,
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::ToggleSwitch(ToggleSwitchParams::default())
    }
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::ToggleSwitch(_) => "toggle_switch",
            SystemSpec::SecondOrder => "second_order",
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            SystemSpec::ToggleSwitch(p) => vec![
                ("alpha1", p.alpha1),
                ("alpha2", p.alpha2),
                ("beta", p.beta),
                ("gamma", p.gamma),
                ("kappa1", p.kappa1),
                ("kappa2", p.kappa2),
            ],
            SystemSpec::SecondOrder => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SystemSpec::ToggleSwitch(p) = self {
            if !(p.kappa1 > 0.0 && p.kappa2 > 0.0) {
                return Err(Error::InvalidArgument(
                    "toggle switch decay rates must be positive".into(),
                ));
            }
            if p.params_iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "toggle switch parameters must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checked evaluation of the vector field.
    pub fn derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self {
            SystemSpec::ToggleSwitch(p) => toggle_switch_field(x, p).map(|d| d.to_vec()),
            SystemSpec::SecondOrder => Ok(second_order_field(x).to_vec()),
        }
    }

    /// Unchecked evaluation; out-of-domain states yield non-finite components
    /// which the integrator reports.
    fn raw_derivative(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SystemSpec::ToggleSwitch(p) => toggle_raw(x, p).to_vec(),
            SystemSpec::SecondOrder => second_order_field(x).to_vec(),
        }
    }

    /// Stable equilibria, located by Newton iteration for the toggle switch
    /// and in closed form for the second-order system.
    pub fn stable_equilibria(&self) -> Vec<Vec<f64>> {
        match self {
            SystemSpec::ToggleSwitch(p) => {
                let high1 = p.alpha1 / p.kappa1;
                let high2 = p.alpha2 / p.kappa2;
                [[high1, 0.0], [0.0, high2]]
                    .iter()
                    .filter_map(|seed| newton_fixed_point(p, *seed))
                    .map(|x| x.to_vec())
                    .collect()
            }
            SystemSpec::SecondOrder => {
                let r = std::f64::consts::SQRT_2;
                vec![vec![r, 1.0], vec![-r, 1.0]]
            }
        }
    }

    /// All fixed points in the region of interest: the stable equilibria
    /// followed by the saddle between them.
    pub fn fixed_points(&self) -> Vec<Vec<f64>> {
        let mut points = self.stable_equilibria();
        let saddle = match self {
            SystemSpec::ToggleSwitch(p) => {
                let mid = 0.5 * (p.alpha1 / p.kappa1).min(p.alpha2 / p.kappa2);
                newton_fixed_point(p, [mid, mid]).map(|x| x.to_vec())
            }
            SystemSpec::SecondOrder => Some(vec![0.0, 0.0]),
        };
        if let Some(x) = saddle {
            if points.iter().all(|q| euclidean(q, &x) > 1e-6) {
                points.push(x);
            }
        }
        points
    }

    /// Index of the stable equilibrium within `radius` of `x`, if any.
    pub fn basin_of(&self, x: &[f64], radius: f64) -> Option<usize> {
        self.stable_equilibria()
            .iter()
            .map(|e| euclidean(e, x))
            .enumerate()
            .filter(|(_, d)| *d < radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

impl ToggleSwitchParams {
    fn params_iter(&self) -> impl Iterator<Item = f64> {
        [
            self.alpha1,
            self.alpha2,
            self.beta,
            self.gamma,
            self.kappa1,
            self.kappa2,
        ]
        .into_iter()
    }
}

fn toggle_raw(x: &[f64], p: &ToggleSwitchParams) -> [f64; 2] {
    [
        p.alpha1 / (1.0 + x[1].powf(p.beta)) - p.kappa1 * x[0],
        p.alpha2 / (1.0 + x[0].powf(p.gamma)) - p.kappa2 * x[1],
    ]
}

/// Toggle-switch vector field
/// `(α1/(1+x2^β) − κ1·x1, α2/(1+x1^γ) − κ2·x2)`.
pub fn toggle_switch_field(x: &[f64], p: &ToggleSwitchParams) -> Result<[f64; 2]> {
    if x.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: x.len(),
        });
    }
    let out = toggle_raw(x, p);
    if x[0] < 0.0 || x[1] < 0.0 || out.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfDomain {
            system: "toggle_switch".into(),
            state: x.to_vec(),
        });
    }
    Ok(out)
}

/// Second-order bistable field `(x1 − x1·x2, x1² − 2·x2)`.
pub fn second_order_field(x: &[f64]) -> [f64; 2] {
    [x[0] - x[0] * x[1], x[0] * x[0] - 2.0 * x[1]]
}

fn newton_fixed_point(p: &ToggleSwitchParams, seed: [f64; 2]) -> Option<[f64; 2]> {
    let mut x = seed;
    for _ in 0..100 {
        let f = toggle_raw(&x, p);
        // Jacobian of the field.
        let d12 = if x[1] > 0.0 {
            -p.alpha1 * p.beta * x[1].powf(p.beta - 1.0) / (1.0 + x[1].powf(p.beta)).powi(2)
        } else {
            0.0
        };
        let d21 = if x[0] > 0.0 {
            -p.alpha2 * p.gamma * x[0].powf(p.gamma - 1.0) / (1.0 + x[0].powf(p.gamma)).powi(2)
        } else {
            0.0
        };
        let (a, b, c, d) = (-p.kappa1, d12, d21, -p.kappa2);
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            return None;
        }
        let dx0 = (d * f[0] - b * f[1]) / det;
        let dx1 = (-c * f[0] + a * f[1]) / det;
        x = [(x[0] - dx0).max(0.0), (x[1] - dx1).max(0.0)];
        if dx0.abs().max(dx1.abs()) < 1e-15 {
            break;
        }
    }
    let r = toggle_raw(&x, p);
    (r[0].hypot(r[1]) < 1e-12).then_some(x)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(field: F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let fail = || Error::IntegrationFailure {
        step: 0,
        state: x.to_vec(),
    };
    let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
    let shifted = |k: &[f64], h: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + h * ki).collect()
    };

    let k1 = field(x);
    if k1.len() != x.len() || !finite(&k1) {
        return Err(fail());
    }
    let k2 = field(&shifted(&k1, 0.5 * dt));
    if !finite(&k2) {
        return Err(fail());
    }
    let k3 = field(&shifted(&k2, 0.5 * dt));
    if !finite(&k3) {
        return Err(fail());
    }
    let k4 = field(&shifted(&k3, dt));
    if !finite(&k4) {
        return Err(fail());
    }
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if !finite(&next) {
        return Err(fail());
    }
    Ok(next)
}

/// Axis-aligned box in state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidGrid("lower/upper dimension mismatch".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidGrid(format!(
                "lower {lower:?} must be strictly below upper {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Box grown about its center by `factor` per axis.
    pub fn scaled(&self, factor: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let h = 0.5 * (u - l) * factor;
                (c - h, c + h)
            })
            .unzip();
        Self { lower, upper }
    }

    /// Tight box around `points`; `None` if the set is empty or degenerate.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for p in it {
            for (i, v) in p.iter().enumerate() {
                lower[i] = lower[i].min(*v);
                upper[i] = upper[i].max(*v);
            }
        }
        Self::new(lower, upper).ok()
    }
}

/// A sampled trajectory from one initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub system: SystemSpec,
    pub dt: f64,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(id: u64, system: SystemSpec, dt: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        let dim = system.dim();
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if states.len() < 2 {
            return Err(Error::InvalidArgument(
                "a trajectory needs at least two states".into(),
            ));
        }
        let mut flat = Vec::with_capacity(states.len() * dim);
        for s in &states {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            flat.extend_from_slice(s);
        }
        Ok(Self {
            id,
            system,
            dt,
            dim,
            states: flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.dim)
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }
}

/// Largest RK4 step taken by [`simulate`]; coarser sampling intervals are
/// split into equal substeps.
pub const MAX_INTEGRATION_STEP: f64 = 0.1;

/// Number of RK4 substeps per sample so that each is at most
/// [`MAX_INTEGRATION_STEP`].
pub fn default_substeps(dt: f64) -> usize {
    ((dt / MAX_INTEGRATION_STEP) - 1e-9).ceil().max(1.0) as usize
}

/// Samples `system` from `x0` every `dt` for `steps` samples.
pub fn simulate(system: &SystemSpec, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    simulate_within(system, x0, dt, steps, None)
}

/// As [`simulate`], aborting if a sample leaves `bounds`.
pub fn simulate_within(
    system: &SystemSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    bounds: Option<&BoundingBox>,
) -> Result<Trajectory> {
    simulate_substeps(system, x0, dt, steps, default_substeps(dt), bounds)
}

/// Samples every `dt`, advancing each sample by `substeps` RK4 steps of
/// size `dt / substeps`.
pub fn simulate_substeps(
    system: &SystemSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
    bounds: Option<&BoundingBox>,
) -> Result<Trajectory> {
    if steps < 1 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if substeps < 1 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: x0.len(),
        });
    }
    let dim = system.dim();
    let h = dt / substeps as f64;
    let mut flat = Vec::with_capacity((steps + 1) * dim);
    flat.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for step in 1..=steps {
        for _ in 0..substeps {
            x = rk4_step(|s| system.raw_derivative(s), &x, h).map_err(|e| match e {
                Error::IntegrationFailure { state, .. } => Error::IntegrationFailure { step, state },
                other => other,
            })?;
        }
        if let Some(b) = bounds {
            if !b.contains(&x) {
                return Err(Error::LeftBoundingBox { step, state: x });
            }
        }
        flat.extend_from_slice(&x);
    }
    Ok(Trajectory {
        id: 0,
        system: system.clone(),
        dt,
        dim,
        states: flat,
    })
}

/// Uniform lattice of initial conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl InitialConditionGrid {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> Result<BoundingBox> {
        BoundingBox::new(self.lower.clone(), self.upper.clone())
    }
}

/// Lattice points in row-major order with the first axis varying fastest.
/// An axis with a count of one contributes only its lower bound.
pub fn grid_initial_conditions(grid: &InitialConditionGrid) -> Result<Vec<Vec<f64>>> {
    let d = grid.lower.len();
    if grid.upper.len() != d || grid.counts.len() != d || d == 0 {
        return Err(Error::InvalidGrid("lower, upper and counts must share a dimension".into()));
    }
    if grid.counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidGrid("every axis needs at least one point".into()));
    }
    BoundingBox::new(grid.lower.clone(), grid.upper.clone())?;

    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| axis_points(grid.lower[a], grid.upper[a], grid.counts[a]))
        .collect();
    let total = grid.len();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = Vec::with_capacity(d);
        for axis in &axes {
            p.push(axis[rem % axis.len()]);
            rem /= axis.len();
        }
        out.push(p);
    }
    Ok(out)
}

pub(crate) fn axis_points(lower: f64, upper: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lower];
    }
    let step = (upper - lower) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { upper } else { lower + i as f64 * step })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_toggle() -> ToggleSwitchParams {
        ToggleSwitchParams {
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 3.55,
            gamma: 3.53,
            kappa1: 0.5,
            kappa2: 0.5,
        }
    }

    #[test]
    fn toggle_field_at_origin() {
        let d = toggle_switch_field(&[0.0, 0.0], &unit_toggle()).unwrap();
        assert_eq!(d, [1.0, 1.0]);
    }

    #[test]
    fn toggle_field_near_reported_equilibrium() {
        let d = toggle_switch_field(&[2.0, 0.16], &unit_toggle()).unwrap();
        assert!(d[0].hypot(d[1]) < 2e-3, "{d:?}");
    }

    #[test]
    fn toggle_field_rejects_negative_concentration() {
        let err = toggle_switch_field(&[-0.5, 1.0], &unit_toggle()).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn second_order_examples() {
        let r = std::f64::consts::SQRT_2;
        let d = second_order_field(&[r, 1.0]);
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15);
        assert_eq!(second_order_field(&[0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(second_order_field(&[1.0, 0.0]), [1.0, 1.0]);
    }

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4_step(|x| vec![-x[0]], &[1.0], 0.1).unwrap();
        // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
        assert_abs_diff_eq!(x[0], 0.9048375, epsilon = 1e-12);
    }

    #[test]
    fn rk4_zero_and_constant_fields() {
        assert_eq!(rk4_step(|_| vec![0.0, 0.0], &[0.3, -2.0], 0.7).unwrap(), vec![0.3, -2.0]);
        let x = rk4_step(|_| vec![2.0], &[1.0], 0.25).unwrap();
        assert_eq!(x, vec![1.5]);
    }

    #[test]
    fn rk4_reports_nonfinite_stage() {
        let err = rk4_step(|x| vec![if x[0] > 1.0 { f64::NAN } else { 1.0 }], &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }), "{err}");
    }

    #[test]
    fn simulate_reports_failing_step() {
        let sys = SystemSpec::ToggleSwitch(unit_toggle());
        let err = simulate(&sys, &[-1.0, 0.5], 0.1, 5).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { step: 1, .. }), "{err}");
    }

    #[test]
    fn fixed_points_include_saddle() {
        let sys = SystemSpec::default();
        let pts = sys.fixed_points();
        assert_eq!(pts.len(), 3);
        let s = &pts[2];
        assert!((s[0] - s[1]).abs() < 0.05, "{s:?}");
        let f = sys.derivative(s).unwrap();
        assert!(f[0].hypot(f[1]) < 1e-12);
        let pts = SystemSpec::SecondOrder.fixed_points();
        assert_eq!(pts[2], vec![0.0, 0.0]);
        assert_eq!(second_order_field(&pts[2]), [0.0, 0.0]);
    }

    #[test]
    fn substeps_cap_the_integration_step() {
        assert_eq!(default_substeps(0.1), 1);
        assert_eq!(default_substeps(0.05), 1);
        assert_eq!(default_substeps(0.5), 5);
        assert_eq!(default_substeps(1.0), 10);
        let sys = SystemSpec::SecondOrder;
        let coarse = simulate(&sys, &[0.3, 0.2], 1.0, 3).unwrap();
        let fine = simulate(&sys, &[0.3, 0.2], 0.1, 30).unwrap();
        for i in 0..=3 {
            assert_eq!(coarse.state(i), fine.state(10 * i));
        }
    }

    #[test]
    fn simulate_counts_and_start() {
        let sys = SystemSpec::SecondOrder;
        let t = simulate(&sys, &[0.2, 0.3], 0.1, 7).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.first(), &[0.2, 0.3]);
    }

    #[test]
    fn second_order_equilibrium_is_stationary() {
        let r = std::f64::consts::SQRT_2;
        let t = simulate(&SystemSpec::SecondOrder, &[r, 1.0], 0.1, 200).unwrap();
        for s in t.states() {
            assert_abs_diff_eq!(s[0], r, epsilon = 1e-12);
            assert_abs_diff_eq!(s[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn second_order_converges_from_small_state() {
        let r = std::f64::consts::SQRT_2;
        let t = simulate(&SystemSpec::SecondOrder, &[0.1, 0.1], 0.1, 1000).unwrap();
        let last = t.last();
        assert!(euclidean(last, &[r, 1.0]) < 1e-3, "{last:?}");
    }

    #[test]
    fn bounding_box_guard() {
        let b = BoundingBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let err = simulate_within(&SystemSpec::SecondOrder, &[0.9, 0.0], 0.1, 50, Some(&b))
            .unwrap_err();
        assert!(matches!(err, Error::LeftBoundingBox { .. }));
    }

    #[test]
    fn grid_examples() {
        let g = InitialConditionGrid {
            lower: vec![0.0, 0.0],
            upper: vec![3.0, 3.0],
            counts: vec![9, 9],
        };
        let pts = grid_initial_conditions(&g).unwrap();
        assert_eq!(pts.len(), 81);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[80], vec![3.0, 3.0]);

        let single = InitialConditionGrid {
            counts: vec![1, 1],
            ..g.clone()
        };
        assert_eq!(grid_initial_conditions(&single).unwrap(), vec![vec![0.0, 0.0]]);

        let corners = InitialConditionGrid {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            counts: vec![2, 2],
        };
        assert_eq!(
            grid_initial_conditions(&corners).unwrap(),
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn grid_rejects_inverted_bounds() {
        let g = InitialConditionGrid {
            lower: vec![0.0, 2.0],
            upper: vec![1.0, 1.0],
            counts: vec![3, 3],
        };
        assert!(matches!(grid_initial_conditions(&g), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn system_spec_json_shape() {
        let s: SystemSpec = serde_json::from_str(r#"{"name":"second_order"}"#).unwrap();
        assert_eq!(s, SystemSpec::SecondOrder);
        let t: SystemSpec = serde_json::from_str(r#"{"name":"toggle_switch","beta":3.0}"#).unwrap();
        match t {
            SystemSpec::ToggleSwitch(p) => {
                assert_eq!(p.beta, 3.0);
                assert_eq!(p.gamma, 3.53);
            }
            _ => panic!(),
        }
        let bad = serde_json::from_str::<SystemSpec>(r#"{"name":"toggle_switch","bogus":1}"#);
        assert!(bad.is_err());
    }
}
