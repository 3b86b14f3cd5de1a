//! Incremental discovery of invariant sets.
//!
//! A model trained on data from one invariant set predicts lifted
//! trajectories from that set to within `ε`; a trajectory whose n-step
//! learning error exceeds `ε` carries novel dynamics and triggers a refit.
//! Each refit can only add unit-cluster eigenvectors, so the recorded
//! multiplicity history must be nondecreasing.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::edmd::{build_pairs, fit, learning_error, KoopmanModel, DEFAULT_REL_TOL};
use crate::error::{Error, Result};
use crate::lifting::{build_dictionary, Dictionary, DictionaryConfig};
use crate::spectral::{decompose_matrix, unit_multiplicity, DEFAULT_RANK_TOL, DEFAULT_UNIT_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryPolicy {
    /// Reuse the current dictionary on refit.
    Keep,
    /// Reseed the dictionary centers from all training data on refit.
    #[default]
    ReseedFromAllData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub n: usize,
    pub safety: f64,
    pub dictionary_policy: DictionaryPolicy,
    pub order_seed: u64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            n: 10,
            safety: 1.5,
            dictionary_policy: DictionaryPolicy::ReseedFromAllData,
            order_seed: 0,
        }
    }
}

/// Numerical settings shared by every refit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitSettings {
    pub dictionary: DictionaryConfig,
    pub rel_tol: f64,
    pub unit_tol: f64,
    pub rank_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            dictionary: DictionaryConfig::default(),
            rel_tol: DEFAULT_REL_TOL,
            unit_tol: DEFAULT_UNIT_TOL,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Init,
    Accepted,
    Refit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub event: Event,
    pub traj_id: u64,
    pub multiplicity: usize,
    pub epsilon: f64,
    pub observed_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoveltyVerdict {
    pub is_novel: bool,
    pub observed_error: f64,
    pub threshold: f64,
    pub horizon: usize,
}

impl NoveltyVerdict {
    /// A zero horizon compares each lifted state with itself and voids the test.
    pub fn is_degenerate(&self) -> bool {
        self.horizon == 0
    }
}

#[derive(Clone, Debug)]
pub struct DiscoveryState {
    pub model: KoopmanModel,
    pub epsilon: f64,
    pub accepted: Vec<u64>,
    pub history: Vec<HistoryRecord>,
    pub multiplicity: usize,
    training: Vec<Trajectory>,
    settings: FitSettings,
    config: DiscoveryConfig,
}

/// `safety · max_i learning_error(model, traj_i, n)`.
pub fn estimate_epsilon<'a, I>(model: &KoopmanModel, training: I, n: usize, safety: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    if !(safety >= 1.0) {
        return Err(Error::InvalidArgument(format!("safety must be at least 1, got {safety}")));
    }
    if n < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut worst: Option<f64> = None;
    for t in training {
        let e = learning_error(model, t, n)?;
        worst = Some(worst.map_or(e, |w| w.max(e)));
    }
    let worst = worst.ok_or(Error::Empty("no training trajectories"))?;
    Ok((safety * worst).max(f64::MIN_POSITIVE))
}

fn multiplicity_of(model: &KoopmanModel, settings: &FitSettings) -> Result<usize> {
    let spec = decompose_matrix(model.k.as_ref(), settings.unit_tol)?;
    Ok(unit_multiplicity(&spec, settings.rank_tol))
}

fn fit_on(
    trajectories: &[Trajectory],
    dictionary: &Dictionary,
    settings: &FitSettings,
) -> Result<KoopmanModel> {
    let pairs = build_pairs(trajectories)?;
    Ok(fit(&pairs, dictionary, settings.rel_tol)?.with_label("discovered"))
}

fn reseeded(trajectories: &[Trajectory], settings: &FitSettings) -> Result<Dictionary> {
    let dim = trajectories
        .first()
        .map(Trajectory::dim)
        .ok_or(Error::Empty("no training trajectories"))?;
    build_dictionary(
        &settings.dictionary,
        dim,
        trajectories.iter().flat_map(|t| t.states()),
    )
}

impl DiscoveryState {
    /// Fits the first local model on `initial`. Without an explicit
    /// `dictionary` the centers are seeded from the initial data.
    pub fn initialize(
        initial: Vec<Trajectory>,
        dictionary: Option<Dictionary>,
        settings: FitSettings,
        config: DiscoveryConfig,
    ) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Empty("initial subset"));
        }
        let dictionary = match dictionary {
            Some(d) => d,
            None => reseeded(&initial, &settings)?,
        };
        let model = fit_on(&initial, &dictionary, &settings)?;
        let epsilon = estimate_epsilon(&model, &initial, config.n, config.safety)?;
        let multiplicity = multiplicity_of(&model, &settings)?;
        let mut accepted = Vec::new();
        let mut history = Vec::new();
        for t in &initial {
            if !accepted.contains(&t.id) {
                accepted.push(t.id);
            }
            history.push(HistoryRecord {
                event: Event::Init,
                traj_id: t.id,
                multiplicity,
                epsilon,
                observed_error: None,
            });
        }
        Ok(Self {
            model,
            epsilon,
            accepted,
            history,
            multiplicity,
            training: initial,
            settings,
            config,
        })
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.config
    }

    pub fn training(&self) -> &[Trajectory] {
        &self.training
    }

    pub fn refit_count(&self) -> usize {
        self.history.iter().filter(|r| r.event == Event::Refit).count()
    }

    /// True when recorded multiplicities never decrease.
    pub fn is_monotone(&self) -> bool {
        self.history
            .windows(2)
            .all(|w| w[0].multiplicity <= w[1].multiplicity)
    }

    pub fn history_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn novelty_test(state: &DiscoveryState, trajectory: &Trajectory, n: usize) -> Result<NoveltyVerdict> {
    let observed_error = learning_error(&state.model, trajectory, n)?;
    Ok(NoveltyVerdict {
        is_novel: observed_error > state.epsilon,
        observed_error,
        threshold: state.epsilon,
        horizon: n,
    })
}

/// Folds one trajectory into the state: refit when it is novel, otherwise
/// record it as accepted. Already-accepted trajectories are ignored.
pub fn incorporate(
    mut state: DiscoveryState,
    trajectory: &Trajectory,
    policy: DictionaryPolicy,
) -> Result<DiscoveryState> {
    if state.accepted.contains(&trajectory.id) {
        return Ok(state);
    }
    let n = state.config.n;
    let verdict = novelty_test(&state, trajectory, n)?;
    state.accepted.push(trajectory.id);
    state.training.push(trajectory.clone());
    if !verdict.is_novel {
        state.history.push(HistoryRecord {
            event: Event::Accepted,
            traj_id: trajectory.id,
            multiplicity: state.multiplicity,
            epsilon: state.epsilon,
            observed_error: Some(verdict.observed_error),
        });
        return Ok(state);
    }
    let dictionary = match policy {
        DictionaryPolicy::Keep => state.model.dictionary.clone(),
        DictionaryPolicy::ReseedFromAllData => reseeded(&state.training, &state.settings)?,
    };
    state.model = fit_on(&state.training, &dictionary, &state.settings)?;
    state.epsilon = estimate_epsilon(&state.model, &state.training, n, state.config.safety)?;
    state.multiplicity = multiplicity_of(&state.model, &state.settings)?;
    state.history.push(HistoryRecord {
        event: Event::Refit,
        traj_id: trajectory.id,
        multiplicity: state.multiplicity,
        epsilon: state.epsilon,
        observed_error: Some(verdict.observed_error),
    });
    Ok(state)
}

/// Initializes on `initial` and folds `stream` in order.
pub fn run_discovery<'a, I>(
    stream: I,
    initial: Vec<Trajectory>,
    dictionary: Option<Dictionary>,
    settings: FitSettings,
    config: DiscoveryConfig,
) -> Result<DiscoveryState>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let policy = config.dictionary_policy;
    let mut state = DiscoveryState::initialize(initial, dictionary, settings, config)?;
    for t in stream {
        state = incorporate(state, t, policy)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemSpec;
    use crate::lifting::DictionaryKind;

    fn linear_traj(id: u64, x0: [f64; 2], len: usize) -> Trajectory {
        let a = [[0.9, 0.0], [0.2, 0.5]];
        let mut states = vec![x0.to_vec()];
        for _ in 1..len {
            let x = states.last().unwrap();
            states.push(vec![
                a[0][0] * x[0] + a[0][1] * x[1],
                a[1][0] * x[0] + a[1][1] * x[1],
            ]);
        }
        Trajectory::new(id, SystemSpec::SecondOrder, 1.0, states).unwrap()
    }

    fn coordinate_settings() -> FitSettings {
        FitSettings {
            dictionary: DictionaryConfig {
                kind: DictionaryKind::Coordinate,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn linear_state() -> DiscoveryState {
        let init = vec![linear_traj(0, [1.0, 0.0], 30), linear_traj(1, [0.0, 1.0], 30)];
        DiscoveryState::initialize(init, None, coordinate_settings(), DiscoveryConfig::default()).unwrap()
    }

    #[test]
    fn exact_model_has_tiny_epsilon() {
        let state = linear_state();
        assert!(state.epsilon < 1.5e-9, "{}", state.epsilon);
        let eps1 = estimate_epsilon(&state.model, state.training(), 10, 1.0).unwrap();
        let raw = state
            .training()
            .iter()
            .map(|t| learning_error(&state.model, t, 10).unwrap())
            .fold(0.0, f64::max);
        assert_eq!(eps1, raw.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn epsilon_preconditions() {
        let state = linear_state();
        assert!(estimate_epsilon(&state.model, state.training(), 10, 0.5).is_err());
        assert!(estimate_epsilon(&state.model, state.training(), 0, 1.5).is_err());
        assert!(matches!(
            estimate_epsilon(&state.model, std::iter::empty(), 10, 1.5),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn zero_horizon_is_never_novel() {
        let state = linear_state();
        let v = novelty_test(&state, &linear_traj(9, [3.0, -2.0], 5), 0).unwrap();
        assert_eq!(v.observed_error, 0.0);
        assert!(!v.is_novel);
        assert!(v.is_degenerate());
    }

    #[test]
    fn in_distribution_trajectory_is_accepted_without_refit() {
        let state = linear_state();
        let k_before = state.model.k.clone();
        let t = linear_traj(5, [0.3, -0.7], 30);
        let state = incorporate(state, &t, DictionaryPolicy::ReseedFromAllData).unwrap();
        assert_eq!(state.model.k, k_before);
        assert_eq!(state.history.last().unwrap().event, Event::Accepted);
        let len = state.history.len();
        let state = incorporate(state, &t, DictionaryPolicy::ReseedFromAllData).unwrap();
        assert_eq!(state.history.len(), len);
        assert_eq!(state.model.k, k_before);
    }

    #[test]
    fn empty_stream_returns_initial_state() {
        let init = vec![linear_traj(0, [1.0, 0.0], 30), linear_traj(1, [0.0, 1.0], 30)];
        let s = run_discovery(
            std::iter::empty(),
            init,
            None,
            coordinate_settings(),
            DiscoveryConfig::default(),
        )
        .unwrap();
        let fresh = linear_state();
        assert_eq!(s.model.k, fresh.model.k);
        assert_eq!(s.history, fresh.history);
        assert!(s.is_monotone());
    }

    #[test]
    fn empty_initial_subset_rejected() {
        let r = DiscoveryState::initialize(vec![], None, coordinate_settings(), DiscoveryConfig::default());
        assert!(matches!(r, Err(Error::Empty(_))));
    }
}
