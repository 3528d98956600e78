//! Browser bindings for a few phasespace operations.
//!
//! Each export takes plain numbers and returns a JSON string; the page in
//! `www/` draws the result on a canvas.

use phasespace::cli::scenario::{GridSpec, HamiltonianSpec, InitialSpec, QuadraticPreset, TimeSpec};
use phasespace::cli::{self, OutputKind, Scenario};
use phasespace::isotopy::{integrate_linear_flow, uniform_grid};
use phasespace::metaplectic::lift_isotopy;
use phasespace::symplectic::matrix_rows;
use phasespace::weyl::{cayley_transform, wigner, NyquistCheck};
use serde_json::json;
use wasm_bindgen::prelude::*;

const N: usize = 384;
const X_MIN: f64 = -12.0;
const DX: f64 = 0.0625;
const WIGNER_STRIDE: usize = 4;

fn preset(kind: &str) -> Result<QuadraticPreset, String> {
    match kind {
        "harmonic" => Ok(QuadraticPreset::Harmonic),
        "free" => Ok(QuadraticPreset::Free),
        other => Err(format!("unknown Hamiltonian {other}")),
    }
}

fn scenario(kind: &str, x0: f64, p0: f64, t: f64) -> Result<Scenario, String> {
    let preset = preset(kind)?;
    let bracket = (preset == QuadraticPreset::Harmonic && t > 1.0).then_some(0.5 * t);
    let s = Scenario {
        name: format!("demo-{kind}"),
        hamiltonian: HamiltonianSpec {
            preset: Some(preset),
            ..HamiltonianSpec::default()
        },
        grid: GridSpec {
            n: N,
            x_min: X_MIN,
            dx: DX,
            hbar: 1.0,
        },
        time: TimeSpec {
            t_final: t,
            steps: 200,
            bracket,
        },
        initial: InitialSpec { x0, p0 },
        outputs: vec![OutputKind::Report],
    };
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn run(kind: &str, x0: f64, p0: f64, t: f64) -> Result<cli::Propagation, String> {
    let s = scenario(kind, x0, p0, t)?;
    cli::propagate(&s, NyquistCheck::Strict).map_err(|e| e.to_string())
}

/// Position densities before and after propagation, and the overlap phase.
pub fn propagate_json(kind: &str, x0: f64, p0: f64, t: f64) -> Result<String, String> {
    let run = run(kind, x0, p0, t)?;
    let density = |psi: &phasespace::metaplectic::GridWavefunction| -> Vec<f64> {
        psi.samples().iter().map(|z| z.norm_sqr()).collect()
    };
    let ov = run.overlap();
    Ok(json!({
        "x": run.initial.xs(),
        "initial": density(&run.initial),
        "final": density(&run.report.state),
        "re": run.report.state.samples().iter().map(|z| z.re).collect::<Vec<_>>(),
        "route": run.route,
        "overlap_abs": ov.norm(),
        "overlap_phase": ov.arg(),
    })
    .to_string())
}

/// Wigner function of the propagated state, subsampled for drawing.
pub fn wigner_json(kind: &str, x0: f64, p0: f64, t: f64) -> Result<String, String> {
    let run = run(kind, x0, p0, t)?;
    let w = wigner(&run.report.state).map_err(|e| e.to_string())?;
    let rows: Vec<usize> = (0..w.data.nrows()).step_by(WIGNER_STRIDE).collect();
    let cols: Vec<usize> = (0..w.data.ncols()).step_by(WIGNER_STRIDE).collect();
    let values: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| w.data[(i, j)].re)
        .collect();
    Ok(json!({
        "rows": rows.len(),
        "cols": cols.len(),
        "x_min": w.x_min,
        "dx": w.dx * WIGNER_STRIDE as f64,
        "p_min": w.p_min,
        "dp": w.dp * WIGNER_STRIDE as f64,
        "values": values,
    })
    .to_string())
}

/// Flow matrix at time t, its Cayley transform and the Maslov index of the lift.
pub fn flow_json(kind: &str, t: f64) -> Result<String, String> {
    let s = scenario(kind, 0.0, 0.0, t)?;
    if t <= 0.0 {
        return Err("t must be positive".into());
    }
    let h = s.quadratic().homogeneous();
    let iso = integrate_linear_flow(&h, &uniform_grid(t, 400)).map_err(|e| e.to_string())?;
    let path = lift_isotopy(&iso).map_err(|e| e.to_string())?;
    let last = iso.matrices().last().expect("non-empty");
    let cayley = cayley_transform(last).ok().map(|c| matrix_rows(c.matrix()));
    let k = path.len() - 1;
    Ok(json!({
        "matrix": matrix_rows(last.matrix()),
        "cayley": cayley,
        "free": path.free[k],
        "maslov": path.maslov[k],
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn propagate(kind: &str, x0: f64, p0: f64, t: f64) -> Result<String, JsValue> {
    js(propagate_json(kind, x0, p0, t))
}

#[wasm_bindgen(js_name = wignerFunction)]
pub fn wigner_function(kind: &str, x0: f64, p0: f64, t: f64) -> Result<String, JsValue> {
    js(wigner_json(kind, x0, p0, t))
}

#[wasm_bindgen]
pub fn flow(kind: &str, t: f64) -> Result<String, JsValue> {
    js(flow_json(kind, t))
}
