//! Browser bindings for the recovery demo. Every export takes and returns
//! JSON text; the plain-Rust functions in [`demo`] do the work.

pub mod demo;

use wasm_bindgen::prelude::*;

fn wrap(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Generates one instance and recovers it with BNHTP and AMP.
#[wasm_bindgen]
pub fn recover(request: &str) -> Result<String, JsError> {
    wrap(demo::recover_json(request))
}

/// Entry phases of a sensing-matrix window, row-major, in radians.
#[wasm_bindgen]
pub fn matrix_phase(request: &str) -> Result<String, JsError> {
    wrap(demo::matrix_phase_json(request))
}

/// FAP and FIR as functions of the detection threshold.
#[wasm_bindgen]
pub fn threshold_sweep(request: &str) -> Result<String, JsError> {
    wrap(demo::threshold_sweep_json(request))
}

#[wasm_bindgen]
pub fn defaults() -> String {
    demo::defaults_json()
}
