//! WebAssembly bindings for the two-moons explorer in `www/`.
//!
//! Every method returns a JSON string; errors surface as thrown strings.

pub mod scene;

use wasm_bindgen::prelude::*;

use scene::Scene;

fn to_js(r: araucana::Result<serde_json::Value>) -> Result<String, JsValue> {
    r.map(|v| v.to_string())
        .map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    /// Generate moons data and train the forest black box.
    #[wasm_bindgen(constructor)]
    pub fn new(rows: usize, minority: f64, n_trees: usize, seed: u32) -> Result<Demo, JsValue> {
        Scene::new(rows, minority, n_trees, seed as u64)
            .map(|scene| Demo { scene })
            .map_err(|e| JsValue::from_str(&e.to_string()))
    }

    pub fn points(&self) -> String {
        self.scene.points().to_string()
    }

    pub fn explain(&self, x: f64, y: f64, n_neighbors: usize, smote: bool) -> Result<String, JsValue> {
        to_js(self.scene.explain(x, y, n_neighbors, smote))
    }

    pub fn boundary(&self, n: usize) -> Result<String, JsValue> {
        to_js(self.scene.boundary(n))
    }

    pub fn fidelity(&self, limit: usize, n_neighbors: usize) -> Result<String, JsValue> {
        to_js(self.scene.fidelity(limit, n_neighbors))
    }
}
