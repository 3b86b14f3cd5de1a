use koopstitch::discovery::{
    incorporate, novelty_test, run_discovery, DiscoveryConfig, DiscoveryState, Event, FitSettings,
};
use koopstitch::dynamics::{grid_initial_conditions, simulate, InitialConditionGrid, SystemSpec, Trajectory};
use koopstitch::lifting::{build_dictionary, DictionaryConfig};

fn toggle_data(counts: usize, steps: usize) -> Vec<Trajectory> {
    let grid = InitialConditionGrid {
        lower: vec![0.0, 0.0],
        upper: vec![3.0, 3.0],
        counts: vec![counts, counts],
    };
    grid_initial_conditions(&grid)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, x)| simulate(&SystemSpec::default(), x, 1.5, steps).unwrap().with_id(i as u64))
        .collect()
}

fn in_basin(trajs: &[Trajectory], basin: usize) -> Vec<Trajectory> {
    let sys = SystemSpec::default();
    trajs.iter().filter(|t| sys.basin_of(t.last(), 0.5) == Some(basin)).cloned().collect()
}

#[test]
fn single_basin_stream_keeps_one_unit_mode() {
    let right = in_basin(&toggle_data(6, 200), 0);
    let (seed, rest) = right.split_at(1);
    let state = run_discovery(
        rest,
        seed.to_vec(),
        None,
        FitSettings::default(),
        DiscoveryConfig::default(),
    )
    .unwrap();
    assert!(state.history.iter().all(|r| r.multiplicity == 1));
    assert_eq!(state.accepted.len(), right.len());
    assert!(state.is_monotone());
}

#[test]
fn two_basin_stream_ends_with_two_modes() {
    let trajs = toggle_data(6, 200);
    let left = in_basin(&trajs, 1);
    let seed = vec![left[0].clone()];
    let stream: Vec<&Trajectory> = trajs.iter().filter(|t| t.id != left[0].id).collect();
    let state = run_discovery(stream, seed, None, FitSettings::default(), DiscoveryConfig::default()).unwrap();
    assert_eq!(state.history[0].event, Event::Init);
    assert!(state.is_monotone());
    assert_eq!(state.multiplicity, 2);
    assert!(state.refit_count() >= 1);
}

#[test]
fn other_basin_is_novel_under_shared_centers() {
    let trajs = toggle_data(6, 200);
    let left = in_basin(&trajs, 1);
    let right = in_basin(&trajs, 0);
    let dict = build_dictionary(&DictionaryConfig::default(), 2, trajs.iter().flat_map(|t| t.states())).unwrap();
    let state = DiscoveryState::initialize(
        left.clone(),
        Some(dict),
        FitSettings::default(),
        DiscoveryConfig::default(),
    )
    .unwrap();
    for t in &right {
        assert!(novelty_test(&state, t, 10).unwrap().is_novel, "trajectory {}", t.id);
    }
}

#[test]
fn already_accepted_trajectory_is_ignored() {
    let trajs = toggle_data(4, 100);
    let state = DiscoveryState::initialize(
        trajs.clone(),
        None,
        FitSettings::default(),
        DiscoveryConfig::default(),
    )
    .unwrap();
    let before = state.history.len();
    let policy = state.config().dictionary_policy;
    let state = incorporate(state, &trajs[0], policy).unwrap();
    assert_eq!(state.history.len(), before);
    assert_eq!(state.refit_count(), 0);
}
