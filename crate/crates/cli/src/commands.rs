//! One function per subcommand. Each reads and writes files under the run
//! configuration's paths and returns a serializable report.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use koopstitch::discovery::{run_discovery, DictionaryPolicy, DiscoveryState, Event, FitSettings};
use koopstitch::dynamics::{
    grid_initial_conditions, simulate_within, BoundingBox, SystemSpec, Trajectory,
};
use koopstitch::edmd::{build_pairs, fit, predict, KoopmanModel};
use koopstitch::io;
use koopstitch::lifting::{build_dictionary, Dictionary};
use koopstitch::spectral::{
    block_diagonalize, decompose_matrix, extract_partition, unit_fields, unit_multiplicity,
    EigenfunctionField, FieldGrid, Partition, SpectralDecomposition,
};
use koopstitch::stitching::{stitch, StitchedModel, StitchedRecord};
use koopstitch::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DictionaryScope, RunConfig};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn simulate_all(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    grid_initial_conditions(&cfg.grid())?
        .iter()
        .enumerate()
        .map(|(i, x0)| {
            let id = i as u64;
            simulate_within(&cfg.system, x0, cfg.dt, cfg.steps, Some(&domain))
                .map(|t| t.with_id(id))
                .map_err(|e| Error::InTrajectory {
                    id,
                    source: Box::new(e),
                })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub path: PathBuf,
    pub trajectories: usize,
    pub rows: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    let trajs = simulate_all(cfg)?;
    io::write_trajectories(create(&cfg.paths.data)?, &trajs, &cfg.provenance())?;
    Ok(SimulateReport {
        path: cfg.paths.data.clone(),
        trajectories: trajs.len(),
        rows: trajs.iter().map(Trajectory::len).sum(),
    })
}

pub fn load_data(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    load_trajectories(&cfg.paths.data, &cfg.system)
}

pub fn load_trajectories(path: &Path, system: &SystemSpec) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    io::read_trajectories(std::io::BufReader::new(file), system)
}

/// Stable equilibria named by their first coordinate: "left" below "right".
pub fn basin_names(system: &SystemSpec) -> Vec<(String, Vec<f64>)> {
    let mut eq = system.stable_equilibria();
    eq.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let names: &[&str] = if eq.len() == 2 { &["left", "right"] } else { &[] };
    eq.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let name = names.get(i).map_or_else(|| format!("basin{}", i + 1), |s| s.to_string());
            (name, x)
        })
        .collect()
}

/// Basin of each trajectory by final-state proximity, as an index into
/// [`basin_names`].
pub fn basin_labels(cfg: &RunConfig, trajs: &[Trajectory]) -> Vec<Option<usize>> {
    let names = basin_names(&cfg.system);
    trajs
        .iter()
        .map(|t| {
            names
                .iter()
                .enumerate()
                .map(|(i, (_, e))| (i, koopstitch::dynamics::euclidean(e, t.last())))
                .filter(|(_, d)| *d < cfg.basin_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        })
        .collect()
}

/// Which trajectories a stage operates on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Subset {
    All,
    Basin(String),
    Ids(Vec<u64>),
}

impl Subset {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Subset::All);
        }
        if let Some(rest) = s.strip_prefix("ids:") {
            let ids = rest
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad trajectory id `{p}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Subset::Ids(ids));
        }
        Ok(Subset::Basin(s.strip_prefix("basin:").unwrap_or(s).to_string()))
    }

    pub fn default_label(&self) -> String {
        match self {
            Subset::All => "global".into(),
            Subset::Basin(b) => b.clone(),
            Subset::Ids(_) => "subset".into(),
        }
    }
}

pub fn select(cfg: &RunConfig, trajs: &[Trajectory], subset: &Subset) -> Result<Vec<Trajectory>> {
    let chosen: Vec<Trajectory> = match subset {
        Subset::All => trajs.to_vec(),
        Subset::Ids(ids) => {
            for id in ids {
                if !trajs.iter().any(|t| t.id == *id) {
                    return Err(Error::InvalidArgument(format!("no trajectory with id {id}")));
                }
            }
            trajs.iter().filter(|t| ids.contains(&t.id)).cloned().collect()
        }
        Subset::Basin(name) => {
            let names = basin_names(&cfg.system);
            let idx = names.iter().position(|(n, _)| n == name).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown basin `{name}`; expected one of {:?}",
                    names.iter().map(|n| &n.0).collect::<Vec<_>>()
                ))
            })?;
            trajs
                .iter()
                .zip(basin_labels(cfg, trajs))
                .filter(|(_, l)| *l == Some(idx))
                .map(|(t, _)| t.clone())
                .collect()
        }
    };
    if chosen.is_empty() {
        return Err(Error::Empty("subset selects no trajectories"));
    }
    Ok(chosen)
}

pub fn dictionary_for(cfg: &RunConfig, all: &[Trajectory], subset: &[Trajectory]) -> Result<Dictionary> {
    let source = match cfg.edmd.dictionary_scope {
        DictionaryScope::All => all,
        DictionaryScope::Subset => subset,
    };
    build_dictionary(
        &cfg.dictionary,
        cfg.system.dim(),
        source.iter().flat_map(|t| t.states()),
    )
}

pub fn fit_subset(cfg: &RunConfig, all: &[Trajectory], subset: &Subset, label: &str) -> Result<KoopmanModel> {
    let chosen = select(cfg, all, subset)?;
    let dict = dictionary_for(cfg, all, &chosen)?;
    Ok(fit(&build_pairs(&chosen)?, &dict, cfg.edmd.rel_tol)?.with_label(label))
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub label: String,
    pub model_path: PathBuf,
    pub size: usize,
    pub trajectories: usize,
    pub pairs: usize,
    pub svd_rank: usize,
    pub truncation_tol: f64,
    pub frobenius_residual: f64,
    pub max_column_residual: f64,
    pub dictionary_scope: DictionaryScope,
    pub dictionary_seed: u64,
}

pub fn cmd_fit(cfg: &RunConfig, subset: &Subset, label: Option<&str>, out: Option<&Path>) -> Result<FitReport> {
    cfg.validate()?;
    let all = load_data(cfg)?;
    let label = label.map_or_else(|| subset.default_label(), str::to_string);
    let model = fit_subset(cfg, &all, subset, &label)?;
    let model_path = out.map_or_else(|| cfg.paths.out_dir.join(format!("model_{label}.json")), Path::to_path_buf);
    create(&model_path)?;
    fs::write(&model_path, model.to_json()? + "\n")?;
    let s = &model.training_stats;
    let report = FitReport {
        label,
        size: model.size(),
        trajectories: model.provenance.as_ref().map_or(0, |p| p.trajectory_ids.len()),
        pairs: s.m,
        svd_rank: s.svd_rank,
        truncation_tol: s.truncation_tol,
        frobenius_residual: s.frobenius_residual,
        max_column_residual: s.max_column_residual,
        dictionary_scope: cfg.edmd.dictionary_scope,
        dictionary_seed: cfg.dictionary.seed,
        model_path: model_path.clone(),
    };
    write_json(&model_path.with_extension("report.json"), &report)?;
    Ok(report)
}

/// A model file of either kind.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Single(KoopmanModel),
    Stitched(StitchedModel),
}

impl AnyModel {
    pub fn label(&self) -> String {
        match self {
            AnyModel::Single(m) => m.label.clone(),
            AnyModel::Stitched(s) => format!(
                "stitched_{}",
                s.locals.iter().map(|m| m.label.as_str()).collect::<Vec<_>>().join("_")
            ),
        }
    }
}

/// Loads a model. Stitched models rebuild their classifier from the
/// trajectory file they reference, falling back to the configured data.
pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("locals").is_some() {
        let rec = StitchedRecord::from_json(&text)?;
        let data = rec
            .classifier
            .data_path
            .as_ref()
            .map(PathBuf::from)
            .filter(|p| p.exists())
            .unwrap_or_else(|| cfg.paths.data.clone());
        let trajs = load_trajectories(&data, &cfg.system)?;
        Ok(AnyModel::Stitched(rec.into_model(&trajs)?))
    } else {
        Ok(AnyModel::Single(KoopmanModel::from_json(&text)?))
    }
}

pub fn field_grid(cfg: &RunConfig, trajs: &[Trajectory]) -> Result<FieldGrid> {
    let bounds = BoundingBox::around(trajs.iter().flat_map(|t| t.states()))
        .ok_or(Error::Empty("no data for the field grid"))?
        .scaled(cfg.spectral.grid_margin);
    FieldGrid::square(bounds, cfg.spectral.resolution)
}

#[derive(Clone, Debug)]
pub struct SpectrumAnalysis {
    pub spec: SpectralDecomposition,
    pub fields: Vec<EigenfunctionField>,
    pub partition: Option<Partition>,
    pub multiplicity: usize,
}

pub fn analyze(cfg: &RunConfig, model: &AnyModel, grid: &FieldGrid) -> Result<SpectrumAnalysis> {
    let (spec, fields) = match model {
        AnyModel::Single(m) => {
            let spec = decompose_matrix(m.k.as_ref(), cfg.spectral.unit_tol)?;
            let fields = unit_fields(m, &spec, grid)?;
            (spec, fields)
        }
        AnyModel::Stitched(s) => {
            let spec = s.spectrum(cfg.spectral.unit_tol)?;
            let fields = s.unit_fields(&spec, grid)?;
            (spec, fields)
        }
    };
    let partition = if fields.is_empty() {
        None
    } else {
        Some(extract_partition(&fields, cfg.spectral.level)?)
    };
    let multiplicity = unit_multiplicity(&spec, cfg.spectral.rank_tol);
    Ok(SpectrumAnalysis {
        spec,
        fields,
        partition,
        multiplicity,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub label: String,
    pub size: usize,
    pub unit_tol: f64,
    pub unit_multiplicity: usize,
    /// `[re, im]` of each unit-cluster eigenvalue.
    pub unit_eigenvalues: Vec<[f64; 2]>,
    pub field_peaks: Vec<Vec<f64>>,
    pub partition_labels: usize,
    pub max_residual: f64,
    pub block_diagonalization: Option<String>,
    pub out_dir: PathBuf,
}

impl SpectrumReport {
    pub fn summary(&self) -> String {
        format!("unit multiplicity: {}", self.unit_multiplicity)
    }
}

pub fn cmd_spectrum(
    cfg: &RunConfig,
    model_path: &Path,
    out_dir: Option<&Path>,
    block_diag: bool,
) -> Result<SpectrumReport> {
    cfg.validate()?;
    let model = load_model(cfg, model_path)?;
    let trajs = load_data(cfg)?;
    let grid = field_grid(cfg, &trajs)?;
    let a = analyze(cfg, &model, &grid)?;
    let label = model.label();
    let dir = out_dir.map_or_else(|| cfg.paths.out_dir.join(format!("spectrum_{label}")), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    let comments = cfg.provenance();
    io::write_eigenvalues(create(&dir.join("eigenvalues.csv"))?, &a.spec, &comments)?;
    for (k, f) in a.fields.iter().enumerate() {
        io::write_field(create(&dir.join(format!("field_{}.csv", k + 1)))?, f, &comments)?;
    }
    if let Some(p) = &a.partition {
        io::write_partition(create(&dir.join("partition.csv"))?, p, &comments)?;
    }
    let block_diagonalization = match (&model, block_diag) {
        (AnyModel::Single(m), true) => Some(match block_diagonalize(m, &a.spec, cfg.spectral.rank_tol) {
            Ok(b) => format!(
                "{} blocks of sizes {:?}, off-block mass {:.3e}",
                b.blocks.len(),
                b.blocks.iter().map(|x| x.nrows()).collect::<Vec<_>>(),
                b.off_block_mass
            ),
            Err(e @ Error::DefectiveCluster { .. }) => format!("warning: {e}"),
            Err(e) => return Err(e),
        }),
        (AnyModel::Stitched(s), true) => Some(format!(
            "stitched: {} blocks of sizes {:?} by construction",
            s.locals.len(),
            s.locals.iter().map(KoopmanModel::size).collect::<Vec<_>>()
        )),
        (_, false) => None,
    };
    let report = SpectrumReport {
        size: a.spec.len(),
        unit_tol: a.spec.unit_tol,
        unit_multiplicity: a.multiplicity,
        unit_eigenvalues: a
            .spec
            .unit_cluster
            .iter()
            .map(|&i| [a.spec.eigenvalues[i].re, a.spec.eigenvalues[i].im])
            .collect(),
        field_peaks: a.fields.iter().map(|f| f.peak().to_vec()).collect(),
        partition_labels: a.partition.as_ref().map_or(0, |p| p.v),
        max_residual: a.spec.max_residual(),
        block_diagonalization,
        out_dir: dir.clone(),
        label,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Initial subset for discovery: a subset filter optionally truncated to
/// its first `count` trajectories.
#[derive(Clone, Debug)]
pub struct SeedSubset {
    pub subset: Subset,
    pub count: Option<usize>,
}

impl Default for SeedSubset {
    fn default() -> Self {
        Self {
            subset: Subset::Basin("left".into()),
            count: Some(1),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscoverReport {
    pub initial: Vec<u64>,
    pub order_seed: u64,
    pub dictionary_policy: DictionaryPolicy,
    pub refits: usize,
    /// Refits triggered by a trajectory from a basin not yet accepted.
    pub basin_crossing_refits: usize,
    pub multiplicities: Vec<usize>,
    pub final_multiplicity: usize,
    pub monotone: bool,
    pub epsilon: f64,
    pub epsilon_rule: String,
}

/// Runs discovery over every loaded trajectory outside the seed subset, in
/// an order shuffled by `cfg.discovery.order_seed`.
pub fn discover(
    cfg: &RunConfig,
    trajs: &[Trajectory],
    seed: &SeedSubset,
) -> Result<(DiscoveryState, DiscoverReport)> {
    let mut initial = select(cfg, trajs, &seed.subset)?;
    if let Some(c) = seed.count {
        initial.truncate(c.max(1));
    }
    let initial_ids: HashSet<u64> = initial.iter().map(|t| t.id).collect();
    let mut stream: Vec<&Trajectory> = trajs.iter().filter(|t| !initial_ids.contains(&t.id)).collect();
    stream.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.discovery.order_seed));

    let dictionary = match cfg.discovery.dictionary_policy {
        DictionaryPolicy::ReseedFromAllData => None,
        DictionaryPolicy::Keep => Some(dictionary_for(cfg, trajs, &initial)?),
    };
    let settings = FitSettings {
        dictionary: cfg.dictionary.clone(),
        rel_tol: cfg.edmd.rel_tol,
        unit_tol: cfg.spectral.unit_tol,
        rank_tol: cfg.spectral.rank_tol,
    };
    let state = run_discovery(stream, initial, dictionary, settings, cfg.discovery.clone())?;

    let labels = basin_labels(cfg, trajs);
    let basin_of = |id: u64| trajs.iter().position(|t| t.id == id).and_then(|i| labels[i]);
    let mut seen: HashSet<Option<usize>> = HashSet::new();
    let mut crossing = 0;
    for r in &state.history {
        let b = basin_of(r.traj_id);
        if r.event == Event::Refit && !seen.contains(&b) {
            crossing += 1;
        }
        seen.insert(b);
    }
    let report = DiscoverReport {
        initial: state
            .history
            .iter()
            .filter(|r| r.event == Event::Init)
            .map(|r| r.traj_id)
            .collect(),
        order_seed: cfg.discovery.order_seed,
        dictionary_policy: cfg.discovery.dictionary_policy,
        refits: state.refit_count(),
        basin_crossing_refits: crossing,
        multiplicities: state.history.iter().map(|r| r.multiplicity).collect(),
        final_multiplicity: state.multiplicity,
        monotone: state.is_monotone(),
        epsilon: state.epsilon,
        epsilon_rule: format!(
            "safety {} x max training learning error at n = {} (constructed threshold)",
            cfg.discovery.safety, cfg.discovery.n
        ),
    };
    Ok((state, report))
}

pub fn cmd_discover(cfg: &RunConfig, seed: &SeedSubset, out_dir: Option<&Path>) -> Result<DiscoverReport> {
    cfg.validate()?;
    let trajs = load_data(cfg)?;
    let (state, report) = discover(cfg, &trajs, seed)?;
    let dir = out_dir.map_or_else(|| cfg.paths.out_dir.join("discover"), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("model.json"), state.model.to_json()? + "\n")?;
    io::write_history(create(&dir.join("history.jsonl"))?, &state.history)?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct StitchReport {
    pub path: PathBuf,
    pub mask_path: PathBuf,
    pub size: usize,
    pub labels: Vec<String>,
    pub block_offsets: Vec<usize>,
    pub nonzeros: usize,
}

pub fn cmd_stitch(cfg: &RunConfig, model_paths: &[PathBuf], out: Option<&Path>) -> Result<StitchReport> {
    cfg.validate()?;
    if model_paths.is_empty() {
        return Err(Error::Empty("no local models to stitch"));
    }
    let locals = model_paths
        .iter()
        .map(|p| KoopmanModel::from_json(&fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    let trajs = load_data(cfg)?;
    let model = stitch(locals, &trajs, cfg.stitching.method, cfg.stitching.horizon)?;
    let path = out.map_or_else(|| cfg.paths.out_dir.join("stitched.json"), Path::to_path_buf);
    create(&path)?;
    let data_ref = cfg.paths.data.to_string_lossy().into_owned();
    fs::write(&path, model.to_json(Some(data_ref))? + "\n")?;
    let nz = model.nonzeros();
    let mask_path = path.with_file_name(format!(
        "{}_mask.csv",
        path.file_stem().map_or("stitched".into(), |s| s.to_string_lossy())
    ));
    io::write_mask(create(&mask_path)?, &nz)?;
    Ok(StitchReport {
        path,
        mask_path,
        size: model.size(),
        labels: model.locals.iter().map(|m| m.label.clone()).collect(),
        block_offsets: model.block_offsets.clone(),
        nonzeros: nz.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictReport {
    pub path: PathBuf,
    pub label: Option<usize>,
    pub boundary: bool,
    pub rows: usize,
}

/// Lifted predictions `Ψ(x0), K·Ψ(x0), …, Kⁿ·Ψ(x0)` with the classified
/// label for stitched models.
pub fn predictions(model: &AnyModel, x0: &[f64], n: usize) -> Result<(Vec<Vec<f64>>, Option<(usize, bool)>)> {
    match model {
        AnyModel::Single(m) => Ok((predict(m, x0, n)?, None)),
        AnyModel::Stitched(s) => {
            let (rows, c) = s.predict(x0, n)?;
            Ok((rows, Some((c.label, c.boundary))))
        }
    }
}

pub fn cmd_predict(
    cfg: &RunConfig,
    model_path: &Path,
    x0: &[f64],
    n: usize,
    out: Option<&Path>,
) -> Result<PredictReport> {
    cfg.validate()?;
    let model = load_model(cfg, model_path)?;
    let (rows, class) = predictions(&model, x0, n)?;
    let path = out.map_or_else(
        || cfg.paths.out_dir.join(format!("predict_{}.csv", model.label())),
        Path::to_path_buf,
    );
    let mut comments = cfg.provenance();
    comments.push((
        "x0".into(),
        x0.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
    ));
    if let Some((_, true)) = class {
        comments.push(("warning".into(), "x0 is equidistant from two labels".into()));
    }
    io::write_predictions(create(&path)?, &rows, class.map(|c| c.0), &comments)?;
    Ok(PredictReport {
        path,
        label: class.map(|c| c.0),
        boundary: class.is_some_and(|c| c.1),
        rows: rows.len(),
    })
}
