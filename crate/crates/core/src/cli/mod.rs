//! Command-line harness: scenario runs and verification suites.

pub mod scenario;
pub mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::isotopy::{affine_flow_from_inhomogeneous, integrate_linear_flow, integrate_point_flow, uniform_grid};
use crate::metaplectic::{lift_isotopy, GridWavefunction};
use crate::propagator::{
    dense_inner_propagation, propagate_factorized, propagate_inhomogeneous, propagate_quadratic,
    propagate_quadratic_bracketed, split_step_with, Perturbation, PropagationReport, DEFAULT_STEP_BUDGET,
    MAX_DENSE_N,
};
use crate::symplectic::{matrix_rows, PhasePoint};
use crate::weyl::{first_moment, weyl_quantize_with, wigner, NyquistCheck, PhaseSpaceGrid};

pub use scenario::{OutputKind, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config { message: String, field: Option<String> },
    Numerical(Error),
    Io(String),
}

impl CliError {
    pub fn config(message: impl Into<String>, field: Option<&str>) -> Self {
        CliError::Config {
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self) -> String {
        let v = match self {
            CliError::Config { message, field } => json!({
                "error": "config",
                "message": message,
                "field": field,
                "exit_code": self.exit_code(),
            }),
            CliError::Numerical(e) => json!({
                "error": "numerical",
                "message": e.to_string(),
                "exit_code": self.exit_code(),
            }),
            CliError::Io(msg) => json!({
                "error": "io",
                "message": msg,
                "exit_code": self.exit_code(),
            }),
        };
        serde_json::to_string_pretty(&v).expect("serializable")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numerical(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { message, .. } => write!(f, "config error: {message}"),
            CliError::Numerical(e) => write!(f, "numerical guard: {e}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub out: PathBuf,
    pub seed: u64,
    pub nyquist: NyquistCheck,
    pub format: Format,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            out: PathBuf::from("out"),
            seed: verify::DEFAULT_SEED,
            nyquist: NyquistCheck::Strict,
            format: Format::Json,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display()), Some("config")))?;
    Scenario::parse(&text)
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer { dir, files: vec![] })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Flat `key,value` rows; arrays become `key.i` rows.
fn csv_rows(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            Value::Null => out.push_str(&format!("{prefix},\n")),
            Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
            other => out.push_str(&format!("{prefix},{other}\n")),
        }
    }
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}

fn emit_doc(w: &mut Writer, stem: &str, v: &Value, format: Format) -> Result<(), CliError> {
    let text = match format {
        Format::Json => pretty(v),
        Format::Csv => csv_rows(v),
    };
    w.write(&format!("{stem}.{}", format.ext()), &text)
}

fn emit_state(w: &mut Writer, stem: &str, psi: &GridWavefunction, format: Format) -> Result<(), CliError> {
    let text = match format {
        Format::Json => psi.to_json(),
        Format::Csv => psi.to_csv_text(),
    };
    w.write(&format!("{stem}.{}", format.ext()), &text)
}

fn positive_time(s: &Scenario) -> Result<Vec<f64>, CliError> {
    if s.time.t_final <= 0.0 {
        return Err(CliError::config("this command needs t_final > 0", Some("t_final")));
    }
    Ok(uniform_grid(s.time.t_final, s.time.steps))
}

/// Classical flow: the affine isotopy of the quadratic part, or the
/// trajectory of `(x0, p0)` when a potential is present.
pub fn run_flow(s: &Scenario, opts: &Options) -> Result<Value, CliError> {
    let times = positive_time(s)?;
    let mut w = Writer::new(&opts.out)?;
    if s.has_potential() {
        let z0 = PhasePoint::xp(s.initial.x0, s.initial.p0);
        let traj = integrate_point_flow(&s.field(), &z0, &times)?;
        let doc = json!({
            "times": times,
            "x": traj.iter().map(|z| z.as_slice()[0]).collect::<Vec<_>>(),
            "p": traj.iter().map(|z| z.as_slice()[1]).collect::<Vec<_>>(),
        });
        match opts.format {
            Format::Json => w.write("trajectory.json", &pretty(&doc))?,
            Format::Csv => {
                let mut text = String::from("t,x,p\n");
                for (t, z) in times.iter().zip(&traj) {
                    text.push_str(&format!("{t:e},{:e},{:e}\n", z.as_slice()[0], z.as_slice()[1]));
                }
                w.write("trajectory.csv", &text)?;
            }
        }
        let last = traj.last().expect("non-empty");
        return Ok(json!({
            "command": "flow",
            "scenario": s.name,
            "kind": "trajectory",
            "final_point": last.as_slice(),
            "files": w.files,
        }));
    }
    let iso = affine_flow_from_inhomogeneous(&s.quadratic(), &times)?;
    match opts.format {
        Format::Json => w.write("isotopy.json", &iso.to_json())?,
        Format::Csv => {
            let mut text = String::from("t,s11,s12,s21,s22,u_x,u_p\n");
            for ((t, m), u) in iso.times().iter().zip(iso.matrices()).zip(iso.translations()) {
                let m = m.matrix();
                let u = u.as_slice();
                text.push_str(&format!(
                    "{t:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                    m[(0, 0)],
                    m[(0, 1)],
                    m[(1, 0)],
                    m[(1, 1)],
                    u[0],
                    u[1]
                ));
            }
            w.write("isotopy.csv", &text)?;
        }
    }
    w.write("residuals.csv", &iso.residuals_csv())?;
    let max_residual = iso.residuals().iter().fold(0.0_f64, |a, (_, r)| a.max(*r));
    let last = iso.matrices().last().expect("non-empty");
    Ok(json!({
        "command": "flow",
        "scenario": s.name,
        "kind": "isotopy",
        "final_matrix": matrix_rows(last.matrix()),
        "final_translation": iso.translations().last().map(|u| u.as_slice().to_vec()),
        "max_symplectic_residual": max_residual,
        "files": w.files,
    }))
}

/// Metaplectic lift of the homogeneous quadratic flow.
pub fn run_lift(s: &Scenario, opts: &Options) -> Result<Value, CliError> {
    if s.has_potential() {
        return Err(CliError::config("lift needs a quadratic Hamiltonian", Some("potential")));
    }
    let times = positive_time(s)?;
    let iso = integrate_linear_flow(&s.quadratic().homogeneous(), &times)?;
    let path = lift_isotopy(&iso)?;
    let last = path.len() - 1;
    let final_generator = if path.free[last] {
        let g = path.generator(last, s.grid.hbar)?;
        Some(json!({
            "P": g.p()[(0, 0)],
            "L": g.l()[(0, 0)],
            "Q": g.q()[(0, 0)],
            "maslov": g.maslov(),
        }))
    } else {
        None
    };
    let mut w = Writer::new(&opts.out)?;
    match opts.format {
        Format::Json => {
            let doc = json!({
                "times": path.times,
                "free": path.free,
                "maslov": path.maslov,
                "amplitude_re": path.amplitudes.iter().map(|a| a.re).collect::<Vec<_>>(),
                "amplitude_im": path.amplitudes.iter().map(|a| a.im).collect::<Vec<_>>(),
            });
            w.write("lift.json", &pretty(&doc))?;
        }
        Format::Csv => {
            let mut text = String::from("t,free,maslov,amplitude_re,amplitude_im\n");
            for i in 0..path.len() {
                let a = path.amplitudes[i];
                text.push_str(&format!(
                    "{:e},{},{},{:e},{:e}\n",
                    path.times[i], path.free[i] as u8, path.maslov[i], a.re, a.im
                ));
            }
            w.write("lift.csv", &text)?;
        }
    }
    let mut warnings = vec![];
    if s.has_linear() {
        warnings.push("linear terms ignored: the lift covers the homogeneous part".to_string());
    }
    Ok(json!({
        "command": "lift",
        "scenario": s.name,
        "final_maslov": path.maslov[last],
        "final_free": path.free[last],
        "final_generator": final_generator,
        "warnings": warnings,
        "files": w.files,
    }))
}

/// Outcome of [`propagate`].
#[derive(Clone, Debug)]
pub struct Propagation {
    pub initial: GridWavefunction,
    pub report: PropagationReport,
    pub route: &'static str,
    pub reference: Option<GridWavefunction>,
    pub warnings: Vec<String>,
}

impl Propagation {
    /// `<psi0, psi_t> / ||psi0||^2`.
    pub fn overlap(&self) -> Complex64 {
        let ip = self.initial.inner(&self.report.state).expect("same grid");
        ip / self.initial.norm_sq()
    }

    pub fn report_value(&self, s: &Scenario) -> Value {
        let mut doc: Map<String, Value> = serde_json::from_str(&self.report.to_json()).expect("valid json");
        let ov = self.overlap();
        doc.insert("scenario".into(), json!(s.name));
        doc.insert("route".into(), json!(self.route));
        doc.insert("t_final".into(), json!(s.time.t_final));
        doc.insert(
            "overlap".into(),
            json!({"re": ov.re, "im": ov.im, "abs": ov.norm(), "phase": ov.arg()}),
        );
        doc.insert("warnings".into(), json!(self.warnings));
        Value::Object(doc)
    }
}

/// Chooses the propagation route from the Hamiltonian's structure.
pub fn propagate(s: &Scenario, nyquist: NyquistCheck) -> Result<Propagation, CliError> {
    let psi0 = s.initial_state()?;
    let t = s.time.t_final;
    let steps = s.time.steps;
    let (report, route) = if s.is_zero() || t == 0.0 {
        let n = psi0.norm();
        let report = PropagationReport {
            state: psi0.clone(),
            times: vec![0.0, t],
            norms: vec![n, n],
            chi: None,
            maslov: None,
            reference_error: None,
        };
        (report, "identity")
    } else if s.has_potential() {
        let h0 = s.quadratic().homogeneous();
        if s.has_quadratic() {
            let pert = Perturbation::Field(s.perturbation());
            (propagate_factorized(&h0, &pert, &psi0, t, steps, DEFAULT_STEP_BUDGET)?, "factorized")
        } else {
            (
                dense_inner_propagation(&h0, &s.perturbation(), &psi0, t, steps, DEFAULT_STEP_BUDGET)?,
                "dense",
            )
        }
    } else if s.has_linear() {
        (propagate_inhomogeneous(&s.quadratic(), &psi0, t)?, "inhomogeneous")
    } else if let Some(mid) = s.time.bracket {
        (propagate_quadratic_bracketed(&s.quadratic(), &psi0, t, mid)?, "quadratic-bracketed")
    } else {
        (propagate_quadratic(&s.quadratic(), &psi0, t)?, "quadratic")
    };
    let mut warnings = vec![];
    let mut reference = None;
    let mut report = report;
    if s.hamiltonian.reference {
        let (c, v) = s
            .split_step_parts()
            .ok_or_else(|| CliError::config("reference solver needs H = c p^2/2 + V(x, t)", Some("reference")))?;
        let (r, warning) = split_step_with(|p| 0.5 * c * p * p, v, &psi0, t, steps, nyquist)?;
        warnings.extend(warning);
        report = report.with_reference(&r)?;
        reference = Some(r);
    }
    Ok(Propagation {
        initial: psi0,
        report,
        route,
        reference,
        warnings,
    })
}

fn wigner_summary(w: &PhaseSpaceGrid) -> Value {
    let (mx, mp) = first_moment(w);
    json!({
        "first_moment": [mx.re, mp.re],
        "mass": w.data.iter().map(|z| z.re).sum::<f64>() * w.dx * w.dp,
        "l1_norm": w.l1_norm(),
    })
}

pub fn run_propagate(s: &Scenario, opts: &Options) -> Result<Value, CliError> {
    let run = propagate(s, opts.nyquist)?;
    let mut w = Writer::new(&opts.out)?;
    let report = run.report_value(s);
    if s.outputs.contains(&OutputKind::State) {
        emit_state(&mut w, "initial", &run.initial, opts.format)?;
        emit_state(&mut w, "state", &run.report.state, opts.format)?;
        if let Some(r) = &run.reference {
            emit_state(&mut w, "reference", r, opts.format)?;
        }
    }
    if s.outputs.contains(&OutputKind::Report) {
        emit_doc(&mut w, "report", &report, opts.format)?;
    }
    if s.outputs.contains(&OutputKind::Wigner) {
        let w0 = wigner(&run.initial)?;
        let w1 = wigner(&run.report.state)?;
        w.write("wigner_initial.csv", &w0.to_csv_text())?;
        w.write("wigner_final.csv", &w1.to_csv_text())?;
    }
    Ok(json!({
        "command": "propagate",
        "scenario": s.name,
        "route": run.route,
        "overlap_phase": run.overlap().arg(),
        "reference_error": run.report.reference_error,
        "norm_drift": run.report.norm_drift(),
        "warnings": run.warnings,
        "files": w.files,
    }))
}

/// Weyl symbol and operator of `H(t_final)`, and Wigner functions of the
/// initial and propagated states.
pub fn run_symbols(s: &Scenario, opts: &Options) -> Result<Value, CliError> {
    if s.grid.n > MAX_DENSE_N {
        return Err(Error::DenseTooLarge {
            max: MAX_DENSE_N,
            got: s.grid.n,
        }
        .into());
    }
    let wave = s.wave_grid()?;
    let field = s.field();
    let t = s.time.t_final;
    let symbol = PhaseSpaceGrid::full_band(&wave).sample(&|x: f64, p: f64| Complex64::new(field.value(&[x, p], t), 0.0));
    let (op, warning) = weyl_quantize_with(&symbol, opts.nyquist)?;
    let run = propagate(s, opts.nyquist)?;
    let w0 = wigner(&run.initial)?;
    let w1 = wigner(&run.report.state)?;
    let mut warnings: Vec<String> = warning.into_iter().collect();
    warnings.extend(run.warnings.iter().cloned());
    let mut w = Writer::new(&opts.out)?;
    w.write("hamiltonian_symbol.csv", &symbol.to_csv_text())?;
    w.write("hamiltonian_operator.csv", &op.to_csv())?;
    w.write("wigner_initial.csv", &w0.to_csv_text())?;
    w.write("wigner_final.csv", &w1.to_csv_text())?;
    let summary = json!({
        "scenario": s.name,
        "t": t,
        "operator_hermitian_defect": op.hermitian_defect(),
        "wigner_initial": wigner_summary(&w0),
        "wigner_final": wigner_summary(&w1),
        "warnings": warnings,
    });
    emit_doc(&mut w, "symbols", &summary, opts.format)?;
    Ok(json!({
        "command": "symbols",
        "scenario": s.name,
        "warnings": summary["warnings"],
        "files": w.files,
    }))
}

/// Runs `verify`, prints the table, writes the records; returns the exit code.
pub fn run_verify(suite: verify::Suite, opts: &Options) -> Result<i32, CliError> {
    let records = verify::run_suite(suite, opts.seed);
    println!("{}", verify::table(&records));
    let mut w = Writer::new(&opts.out)?;
    let name = format!("verify.{}", opts.format.ext());
    let text = match opts.format {
        Format::Json => verify::records_json(&records),
        Format::Csv => verify::records_csv(&records),
    };
    w.write(&name, &text)?;
    Ok(if records.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_VERIFY })
}
