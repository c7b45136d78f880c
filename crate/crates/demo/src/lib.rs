//! WebAssembly bindings for the browser demo: a temperature field viewer,
//! a small greedy sensor selection and a map of β over the hyper-parameters.

mod state;

pub use state::{DemoState, Selection};
use wasm_bindgen::prelude::*;

fn js(e: sensor_select::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(mesh_n: usize, grid_n: usize) -> Result<Demo, JsError> {
        Ok(Demo { state: DemoState::new(mesh_n, grid_n).map_err(js)? })
    }

    #[wasm_bindgen(js_name = meshN)]
    pub fn mesh_n(&self) -> usize {
        self.state.mesh_n()
    }

    /// Flattened `[x1, x2, ...]` library centres.
    #[wasm_bindgen(js_name = libraryCenters)]
    pub fn library_centers(&self) -> Vec<f64> {
        self.state.library_centers()
    }

    /// Nodal temperatures for conductivities `(theta1, theta2)` and flux
    /// coefficients `m` (4 Legendre coefficients).
    pub fn temperature(&self, theta1: f64, theta2: f64, m: Vec<f64>) -> Result<Vec<f64>, JsError> {
        self.state.temperature(&[theta1, theta2], &m).map_err(js)
    }

    /// Runs the greedy selection; returns the selection as JSON.
    pub fn select(&self, beta_target: f64, k_max: usize) -> Result<String, JsError> {
        let sel = self.state.select(beta_target, k_max).map_err(js)?;
        serde_json::to_string(&sel).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Surrogate β of the sensors `indices` on an `n × n` log grid.
    #[wasm_bindgen(js_name = betaMap)]
    pub fn beta_map(&self, indices: Vec<u32>, n: usize) -> Result<Vec<f64>, JsError> {
        let idx: Vec<usize> = indices.into_iter().map(|k| k as usize).collect();
        self.state.beta_map(&idx, n).map_err(js)
    }
}
