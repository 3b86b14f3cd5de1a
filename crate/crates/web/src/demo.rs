//! Browser-independent state behind the page: one simulated data set, a
//! global model and a stitched model of the two basins.

use koopstitch::dynamics::{
    grid_initial_conditions, simulate, BoundingBox, InitialConditionGrid, SystemSpec, Trajectory,
};
use koopstitch::edmd::{build_pairs, fit, KoopmanModel, DEFAULT_REL_TOL};
use koopstitch::lifting::{build_dictionary, DictionaryConfig};
use koopstitch::spectral::{
    decompose_matrix, unit_fields, unit_multiplicity, FieldGrid, SpectralDecomposition, DEFAULT_RANK_TOL,
    DEFAULT_UNIT_TOL,
};
use koopstitch::stitching::{stitch, ClassifierMethod, StitchedModel};
use koopstitch::{Error, Result};

pub struct Demo {
    pub system: SystemSpec,
    pub dt: f64,
    pub bounds: BoundingBox,
    pub global: KoopmanModel,
    pub stitched: StitchedModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Global,
    Stitched,
}

impl Which {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Which::Global),
            "stitched" => Ok(Which::Stitched),
            _ => Err(Error::InvalidArgument(format!("unknown model `{s}`"))),
        }
    }
}

fn parse_system(name: &str) -> Result<(SystemSpec, InitialConditionGrid)> {
    let (system, lower, upper) = match name {
        "toggle_switch" => (SystemSpec::default(), [0.0, 0.0], [3.0, 3.0]),
        "second_order" => (SystemSpec::SecondOrder, [-2.0, -1.0], [2.0, 3.0]),
        _ => return Err(Error::InvalidArgument(format!("unknown system `{name}`"))),
    };
    let grid = InitialConditionGrid {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        counts: vec![0, 0],
    };
    Ok((system, grid))
}

impl Demo {
    /// Simulates a `per_axis × per_axis` grid and fits both models.
    pub fn new(system: &str, dt: f64, steps: usize, per_axis: usize) -> Result<Self> {
        let (system, mut grid) = parse_system(system)?;
        grid.counts = vec![per_axis, per_axis];
        let trajs: Vec<Trajectory> = grid_initial_conditions(&grid)?
            .iter()
            .enumerate()
            .map(|(i, x)| simulate(&system, x, dt, steps).map(|t| t.with_id(i as u64)))
            .collect::<Result<_>>()?;
        let dict = build_dictionary(&DictionaryConfig::default(), 2, trajs.iter().flat_map(|t| t.states()))?;
        let global = fit(&build_pairs(&trajs)?, &dict, DEFAULT_REL_TOL)?.with_label("global");

        let mut locals = Vec::new();
        for (basin, _) in system.stable_equilibria().iter().enumerate() {
            let mine: Vec<&Trajectory> = trajs
                .iter()
                .filter(|t| system.basin_of(t.last(), 0.5) == Some(basin))
                .collect();
            if !mine.is_empty() {
                locals.push(fit(&build_pairs(mine)?, &dict, DEFAULT_REL_TOL)?.with_label(format!("basin{}", basin + 1)));
            }
        }
        let stitched = stitch(locals, &trajs, ClassifierMethod::NearestSnapshot, 10)?;
        let bounds = BoundingBox::around(trajs.iter().flat_map(|t| t.states()))
            .ok_or(Error::Empty("no data"))?
            .scaled(1.1);
        Ok(Self {
            system,
            dt,
            bounds,
            global,
            stitched,
        })
    }

    /// Flat `[x1, x2, x1, x2, …]` of a trajectory from `(x1, x2)`.
    pub fn trajectory(&self, x1: f64, x2: f64, steps: usize) -> Result<Vec<f64>> {
        let t = simulate(&self.system, &[x1, x2], self.dt, steps)?;
        Ok(t.states().flatten().copied().collect())
    }

    /// 1-based stitched label of a state.
    pub fn label(&self, x1: f64, x2: f64) -> Result<usize> {
        Ok(self.stitched.classify(&[x1, x2])?.label)
    }

    pub fn spectrum(&self, which: Which) -> Result<SpectralDecomposition> {
        match which {
            Which::Global => decompose_matrix(self.global.k.as_ref(), DEFAULT_UNIT_TOL),
            Which::Stitched => self.stitched.spectrum(DEFAULT_UNIT_TOL),
        }
    }

    /// `[re, im, in_unit_cluster]` per eigenvalue.
    pub fn spectrum_flat(&self, which: Which) -> Result<Vec<f64>> {
        let s = self.spectrum(which)?;
        Ok((0..s.len())
            .flat_map(|i| [s.eigenvalues[i].re, s.eigenvalues[i].im, f64::from(u8::from(s.in_unit_cluster(i)))])
            .collect())
    }

    pub fn multiplicity(&self, which: Which) -> Result<usize> {
        Ok(unit_multiplicity(&self.spectrum(which)?, DEFAULT_RANK_TOL))
    }

    /// `|φ|` of every unit-cluster eigenfunction on a `resolution²` grid,
    /// each scaled to a maximum of one, concatenated with `x1` varying
    /// fastest.
    pub fn unit_field_heatmaps(&self, which: Which, resolution: usize) -> Result<Vec<f64>> {
        let grid = FieldGrid::square(self.bounds.clone(), resolution)?;
        let spec = self.spectrum(which)?;
        let fields = match which {
            Which::Global => unit_fields(&self.global, &spec, &grid)?,
            Which::Stitched => self.stitched.unit_fields(&spec, &grid)?,
        };
        let mut out = Vec::with_capacity(fields.len() * grid.len());
        for f in &fields {
            let max = f.max_abs();
            out.extend(f.values.iter().map(|v| if max > 0.0 { v.norm() / max } else { 0.0 }));
        }
        Ok(out)
    }
}
