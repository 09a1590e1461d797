//! Browser bindings: ROA field, single trajectory and basin map as JSON
//! strings for the static page in `www/`.
//!
//! Each export wraps a plain function returning `Result<String, String>` so
//! the logic is testable on the host.

use leverage_trust::phase_portrait::{self, GridSpec};
use leverage_trust::trajectory::integrate;
use leverage_trust::{EconState, IntegratorConfig, Params};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps the basin map interactive.
pub const MAX_GRID: usize = 101;
/// Trajectories are thinned to at most this many points.
pub const MAX_POINTS: usize = 2000;

fn params(a: f64, g: f64, r: f64) -> Result<Params, String> {
    Params::nondimensional(a, g, r).map_err(|e| e.to_string())
}

fn grid(n: usize) -> Result<GridSpec, String> {
    if !(2..=MAX_GRID).contains(&n) {
        return Err(format!("grid size {n} must lie in [2, {MAX_GRID}]"));
    }
    Ok(GridSpec::square(n))
}

fn axes(g: &GridSpec) -> Value {
    let l: Vec<f64> = (0..g.n_leverage).map(|i| g.leverage_at(i)).collect();
    let t: Vec<f64> = (0..g.n_trust).map(|j| g.trust_at(j)).collect();
    json!({"leverage": l, "trust": t})
}

/// ROA on an `n x n` grid, row-major with trust as the row index; masked
/// nodes are `null`.
pub fn roa_field_json(a: f64, g: f64, r: f64, n: usize) -> Result<String, String> {
    let (p, nodes) = (params(a, g, r)?, grid(n)?);
    let field = phase_portrait::roa_field(&p, &nodes).map_err(|e| e.to_string())?;
    let roa: Vec<Option<f64>> = field.iter().map(|f| f.roa).collect();
    let d = p.derived().map_err(|e| e.to_string())?;
    Ok(json!({"n": n, "axes": axes(&nodes), "roa": roa, "L0": d.l0}).to_string())
}

/// One trajectory from `(leverage, trust)` with its terminal event.
pub fn trajectory_json(a: f64, g: f64, r: f64, leverage: f64, trust: f64, max_tau: f64) -> Result<String, String> {
    let p = params(a, g, r)?;
    let s0 = EconState::new(1.0, leverage, trust).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig {
        max_tau,
        ..Default::default()
    };
    let rec = integrate(&s0, &p, &cfg).map_err(|e| e.to_string())?;
    let stride = rec.samples.len().div_ceil(MAX_POINTS).max(1);
    let last = rec.samples.len() - 1;
    let kept: Vec<_> = rec
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == last)
        .map(|(_, s)| s)
        .collect();
    Ok(json!({
        "terminal": rec.terminal,
        "terminal_tau": rec.terminal_tau,
        "tau": kept.iter().map(|s| s.tau).collect::<Vec<_>>(),
        "L": kept.iter().map(|s| s.leverage).collect::<Vec<_>>(),
        "T": kept.iter().map(|s| s.trust).collect::<Vec<_>>(),
        "rA": kept.iter().map(|s| s.r_assets).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Basin labels on an `n x n` grid in the same layout as the ROA field.
pub fn basin_map_json(a: f64, g: f64, r: f64, n: usize) -> Result<String, String> {
    let (p, nodes) = (params(a, g, r)?, grid(n)?);
    let map = phase_portrait::basin_map(&p, &nodes, &IntegratorConfig::default()).map_err(|e| e.to_string())?;
    let labels: Vec<Option<&str>> = map.iter().map(|b| b.label.map(|l| l.as_str())).collect();
    Ok(json!({"n": n, "axes": axes(&nodes), "labels": labels}).to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn roa_field(a: f64, g: f64, r: f64, n: usize) -> Result<String, JsValue> {
    to_js(roa_field_json(a, g, r, n))
}

#[wasm_bindgen]
pub fn trajectory(a: f64, g: f64, r: f64, leverage: f64, trust: f64, max_tau: f64) -> Result<String, JsValue> {
    to_js(trajectory_json(a, g, r, leverage, trust, max_tau))
}

#[wasm_bindgen]
pub fn basin_map(a: f64, g: f64, r: f64, n: usize) -> Result<String, JsValue> {
    to_js(basin_map_json(a, g, r, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn roa_field_masks_the_singular_edge() {
        let v = parse(roa_field_json(0.05, 0.06, 0.04, 11));
        let roa = v["roa"].as_array().unwrap();
        assert_eq!(roa.len(), 121);
        // the top trust row sits on T = 1
        assert!(roa[110..].iter().all(Value::is_null));
        // T = L = 0: ROA reduces to g
        assert!((roa[0].as_f64().unwrap() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn trajectory_reaches_the_attractive_point() {
        let v = parse(trajectory_json(0.05, -0.01, 0.04, 0.1, 0.5, 1e4));
        assert_eq!(v["terminal"]["kind"], "converged_to_point");
        let n = v["tau"].as_array().unwrap().len();
        assert!(n <= MAX_POINTS + 1 && n == v["T"].as_array().unwrap().len());
    }

    #[test]
    fn basin_map_of_the_regular_regime_is_all_diagonal() {
        let v = parse(basin_map_json(0.05, 0.06, 0.04, 6));
        let labels = v["labels"].as_array().unwrap();
        assert!(labels.iter().filter(|l| !l.is_null()).all(|l| l == "diagonal"));
        assert!(labels.iter().any(|l| !l.is_null()));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(roa_field_json(0.05, 0.06, 0.04, 500).is_err());
        assert!(trajectory_json(-1.0, 0.0, 0.0, 0.1, 0.2, 10.0).is_err());
        assert!(trajectory_json(0.05, 0.0, 0.0, 0.1, 1.2, 10.0).is_err());
    }
}
