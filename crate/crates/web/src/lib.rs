//! WebAssembly bindings for the static page in `www/`.

mod demo;

pub use demo::{Demo, Which};
use wasm_bindgen::prelude::*;

fn js(e: koopstitch::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Explorer {
    inner: Demo,
}

#[wasm_bindgen]
impl Explorer {
    /// Simulates `grid × grid` initial conditions of `system` and fits the
    /// global and stitched models.
    #[wasm_bindgen(constructor)]
    pub fn new(system: &str, dt: f64, steps: usize, grid: usize) -> Result<Explorer, JsError> {
        Ok(Explorer {
            inner: Demo::new(system, dt, steps, grid).map_err(js)?,
        })
    }

    /// `[x1_min, x2_min, x1_max, x2_max]` of the plotting window.
    pub fn bounds(&self) -> Vec<f64> {
        let b = &self.inner.bounds;
        vec![b.lower[0], b.lower[1], b.upper[0], b.upper[1]]
    }

    pub fn trajectory(&self, x1: f64, x2: f64, steps: usize) -> Result<Vec<f64>, JsError> {
        self.inner.trajectory(x1, x2, steps).map_err(js)
    }

    pub fn label(&self, x1: f64, x2: f64) -> Result<usize, JsError> {
        self.inner.label(x1, x2).map_err(js)
    }

    pub fn spectrum(&self, model: &str) -> Result<Vec<f64>, JsError> {
        let which = Which::parse(model).map_err(js)?;
        self.inner.spectrum_flat(which).map_err(js)
    }

    pub fn multiplicity(&self, model: &str) -> Result<usize, JsError> {
        let which = Which::parse(model).map_err(js)?;
        self.inner.multiplicity(which).map_err(js)
    }

    #[wasm_bindgen(js_name = unitFields)]
    pub fn unit_fields(&self, model: &str, resolution: usize) -> Result<Vec<f64>, JsError> {
        let which = Which::parse(model).map_err(js)?;
        self.inner.unit_field_heatmaps(which, resolution).map_err(js)
    }
}
