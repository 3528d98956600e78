//! Verification suites: worked examples and invariants, one record per check.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::isotopy::{
    affine_flow_from_inhomogeneous, factorized_linear_flow, hamiltonian_from_linear_isotopy, integrate_linear_flow,
    uniform_grid, QuadraticHamiltonian, SampledIsotopy,
};
use crate::linalg::{max_abs, RMat};
use crate::metaplectic::{
    apply_generator_to_grid, compose_generators, hw_translate, invert_generator, lift_isotopy, project_generator,
    translate_along_path, Backend, GridWavefunction, HeisenbergWeylOp, MetaplecticGenerator, WaveGrid,
};
use crate::propagator::{
    closed_form_propagator, propagate_factorized, propagate_inhomogeneous, propagate_quadratic,
    propagate_quadratic_bracketed, reference_split_step, ClosedForm, Perturbation, QuantumIsotopy,
    DEFAULT_STEP_BUDGET,
};
use crate::symplectic::{HamiltonianField, PhasePoint, SymplecticMatrix};
use crate::weyl::{
    cayley_inverse, cayley_transform, conley_zehnder_nu, first_moment, free_particle_symbols, metaplectic_symbol,
    moyal_star, weyl_minus_born_jordan, weyl_quantize, weyl_quantize_gaussian, wigner, wigner_norm, PhaseSpaceGrid,
    SymbolKind,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Classical,
    Metaplectic,
    Weyl,
    Propagator,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classical" => Ok(Suite::Classical),
            "metaplectic" => Ok(Suite::Metaplectic),
            "weyl" => Ok(Suite::Weyl),
            "propagator" => Ok(Suite::Propagator),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite {other}")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationRecord {
    pub id: String,
    pub anchor: String,
    pub suite: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// Tolerance scaled by `|expected|`.
    pub relative: bool,
    pub pass: bool,
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerificationRecord {
    pub fn passes(measured: f64, expected: f64, tolerance: f64, relative: bool) -> bool {
        let scale = if relative { expected.abs() } else { 1.0 };
        (measured - expected).abs() <= tolerance * scale
    }
}

/// Outcome of one check: measured value and its target.
pub struct Measure {
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub relative: bool,
}

fn abs(measured: f64, expected: f64, tolerance: f64) -> Result<Measure> {
    Ok(Measure {
        measured,
        expected,
        tolerance,
        relative: false,
    })
}

type CheckFn = fn(u64) -> Result<Measure>;

pub struct Check {
    pub id: &'static str,
    pub anchor: &'static str,
    pub suite: Suite,
    pub run: CheckFn,
}

pub fn checks() -> Vec<Check> {
    use Suite::*;
    let c = |id, anchor, suite, run: CheckFn| Check { id, anchor, suite, run };
    vec![
        c("classical-factorization-closed", "flow-factorization/free-plus-position", Classical, factorization_closed),
        c("classical-factorization-rk4", "flow-factorization/free-plus-position", Classical, factorization_rk4),
        c("hamiltonian-reconstruction", "isotopy-generator/rotation-path", Classical, reconstruction),
        c("affine-flow-driven", "affine-flow/driven-oscillator", Classical, affine_driven),
        c("composition-harmonic-generator", "generator-composition/harmonic-decomposition", Metaplectic, composition_generator),
        c("composition-maslov-rule", "generator-composition/maslov-rule", Metaplectic, composition_maslov),
        c("covariance-fourier-lattice", "heisenberg-weyl/symplectic-covariance", Metaplectic, covariance),
        c("cayley-random-suite", "cayley-transform/properties", Metaplectic, cayley_suite),
        c("free-symbol-propagator", "weyl-symbol/free-particle", Weyl, free_symbol),
        c("metaplectic-symbol-grid", "weyl-symbol/metaplectic-operator", Weyl, metaplectic_symbol_grid),
        c("moyal-operator-product", "moyal-product/operator-composition", Weyl, moyal_product),
        c("moyal-x-star-p", "moyal-product/canonical-pair", Weyl, moyal_x_p),
        c("moyal-associativity", "moyal-product/associativity", Weyl, moyal_assoc),
        c("wigner-norm-translation", "wigner-norm/invariance", Weyl, wigner_translation),
        c("wigner-norm-fourier", "wigner-norm/invariance", Weyl, wigner_fourier),
        c("weyl-born-jordan-low-degree", "quantization-rules/weyl-born-jordan", Weyl, bj_low_degree),
        c("weyl-born-jordan-second-order", "quantization-rules/weyl-born-jordan", Weyl, bj_second_order),
        c("harmonic-quarter-eigenphase", "quadratic-propagator/harmonic-eigenphase", Propagator, quarter_eigenphase),
        c("double-cover-sign", "path-lifting/double-cover", Propagator, double_cover),
        c("quantum-factorization-quadratic", "quantum-factorization/harmonic", Propagator, quantum_factorization),
        c("quantum-factorization-cos", "quantum-factorization/split-step", Propagator, cos_kick),
        c("inhomogeneous-split-step", "inhomogeneous-propagator/driven-oscillator", Propagator, inhomogeneous_reference),
        c("inhomogeneous-wigner-moment", "inhomogeneous-propagator/phase-space-mean", Propagator, inhomogeneous_moment),
        c("berry-circle-phase", "path-translation/loop-phase", Propagator, berry_phase),
        c("berry-pde-residual", "path-translation/schrodinger-residual", Propagator, berry_residual),
        c("chapman-kolmogorov", "quantum-isotopy/two-time-law", Propagator, chapman_kolmogorov),
    ]
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Classical => "classical",
        Suite::Metaplectic => "metaplectic",
        Suite::Weyl => "weyl",
        Suite::Propagator => "propagator",
        Suite::All => "all",
    }
}

pub fn run_check(c: &Check, seed: u64) -> VerificationRecord {
    let start = Instant::now();
    let out = (c.run)(seed);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let (measured, expected, tolerance, relative, error) = match out {
        Ok(m) => (m.measured, m.expected, m.tolerance, m.relative, None),
        Err(e) => (f64::NAN, f64::NAN, f64::NAN, false, Some(e.to_string())),
    };
    VerificationRecord {
        id: c.id.to_string(),
        anchor: c.anchor.to_string(),
        suite: suite_name(c.suite).to_string(),
        measured,
        expected,
        tolerance,
        relative,
        pass: error.is_none() && VerificationRecord::passes(measured, expected, tolerance, relative),
        runtime_ms,
        error,
    }
}

/// Checks run in parallel; records keep the declaration order.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<VerificationRecord> {
    let selected: Vec<Check> = checks()
        .into_iter()
        .filter(|c| suite == Suite::All || c.suite == suite)
        .collect();
    selected.par_iter().map(|c| run_check(c, seed)).collect()
}

pub fn table(records: &[VerificationRecord]) -> String {
    let w = records.iter().map(|r| r.id.len()).max().unwrap_or(2).max(2);
    let mut out = format!(
        "{:<w$}  {:>12}  {:>12}  {:>9}  {:>9}  result\n",
        "id", "measured", "expected", "tol", "ms"
    );
    for r in records {
        out.push_str(&format!(
            "{:<w$}  {:>12.5e}  {:>12.5e}  {:>9.1e}  {:>9.1}  {}\n",
            r.id,
            r.measured,
            r.expected,
            r.tolerance,
            r.runtime_ms,
            if r.pass { "pass" } else { "FAIL" }
        ));
        if let Some(e) = &r.error {
            out.push_str(&format!("{:<w$}  error: {e}\n", ""));
        }
    }
    let failed = records.iter().filter(|r| !r.pass).count();
    out.push_str(&format!("{} records, {} failed", records.len(), failed));
    out
}

pub fn records_csv(records: &[VerificationRecord]) -> String {
    let mut out = String::from("id,anchor,suite,measured,expected,tolerance,relative,pass,runtime_ms,error\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{},{},{:.3},{}\n",
            r.id,
            r.anchor,
            r.suite,
            r.measured,
            r.expected,
            r.tolerance,
            r.relative,
            r.pass,
            r.runtime_ms,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        ));
    }
    out
}

pub fn records_json(records: &[VerificationRecord]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("serializable");
    s.push('\n');
    s
}

fn close(a: &RMat, b: &RMat) -> f64 {
    max_abs(&(a - b))
}

fn ground(wave: &WaveGrid, x0: f64, p0: f64) -> Result<GridWavefunction> {
    let c = (PI * wave.hbar).powf(-0.25);
    wave.sample(|x| Complex64::from_polar(c * (-(x - x0).powi(2) / (2.0 * wave.hbar)).exp(), p0 * x / wave.hbar))
}

/// Inner flow of `x^2/2` conjugated by the free shear, in closed form.
fn inner_closed(t: f64) -> RMat {
    let (s, c) = t.sin_cos();
    RMat::from_row_slice(2, 2, &[c + t * s, s - t * c, -s, c])
}

fn factorization_closed(_: u64) -> Result<Measure> {
    let mut err = 0.0_f64;
    for t in [0.5, 1.0, PI / 2.0] {
        let prod = SymplecticMatrix::shear(t).matrix() * inner_closed(t);
        err = err.max(close(&prod, SymplecticMatrix::rotation(t).matrix()));
    }
    abs(err, 0.0, 1e-8)
}

fn factorization_rk4(_: u64) -> Result<Measure> {
    let mut err = 0.0_f64;
    for t in [0.5, 1.0, PI / 2.0] {
        let grid = uniform_grid(t, (t / 1e-3).round() as usize);
        let fac = factorized_linear_flow(&QuadraticHamiltonian::free(), &QuadraticHamiltonian::position_square(), &grid)?;
        let inner = fac.inner.matrices().last().expect("non-empty").matrix();
        let comp = fac.composed.matrices().last().expect("non-empty").matrix();
        err = err
            .max(close(inner, &inner_closed(t)))
            .max(close(comp, SymplecticMatrix::rotation(t).matrix()));
    }
    abs(err, 0.0, 1e-6)
}

fn reconstruction(_: u64) -> Result<Measure> {
    let grid = uniform_grid(1.0, 10_000);
    let omega = |t: f64| t + 0.1 * t * t;
    let iso = SampledIsotopy::from_fn(&grid, |t| SymplecticMatrix::rotation(omega(t)).into_matrix())?;
    let mut err = 0.0_f64;
    for k in [1000, 2500, 5000, 7500, 9000] {
        let t = grid[k];
        let rec = hamiltonian_from_linear_isotopy(&iso, t)?;
        err = err.max(close(&rec.matrix, &(RMat::identity(2, 2) * (1.0 + 0.2 * t))));
    }
    abs(err, 0.0, 1e-6)
}

fn affine_driven(_: u64) -> Result<Measure> {
    let h = QuadraticHamiltonian::harmonic().with_linear(|_| DVector::from_vec(vec![1.0, 0.0]));
    let grid = uniform_grid(2.0, 2000);
    let iso = affine_flow_from_inhomogeneous(&h, &grid)?;
    let mut err = 0.0_f64;
    for (t, u) in iso.times().iter().zip(iso.translations()) {
        err = err
            .max((u.as_slice()[0] - (1.0 - t.cos())).abs())
            .max((u.as_slice()[1] + t.sin()).abs());
    }
    abs(err, 0.0, 1e-9)
}

fn composition_generator(_: u64) -> Result<Measure> {
    let t = 1.0_f64;
    let den = t.sin() - t * t.cos();
    let outer = MetaplecticGenerator::scalar(1.0 / t, 1.0 / t, 1.0 / t, 0, 1.0)?;
    let inner = MetaplecticGenerator::scalar(t.cos() / den, 1.0 / den, (t.cos() + t * t.sin()) / den, 0, 1.0)?;
    let h = compose_generators(&outer, &inner)?;
    let cot = t.cos() / t.sin();
    let err = (h.p()[(0, 0)] - cot)
        .abs()
        .max((h.l()[(0, 0)] - 1.0 / t.sin()).abs())
        .max((h.q()[(0, 0)] - cot).abs());
    abs(err, 0.0, 1e-10)
}

/// Maslov index of the composed lifted factors against the lift of the total flow.
fn composition_maslov(_: u64) -> Result<Measure> {
    let t = 1.0;
    let grid = uniform_grid(t, 1000);
    let fac = factorized_linear_flow(&QuadraticHamiltonian::free(), &QuadraticHamiltonian::position_square(), &grid)?;
    let outer = lift_isotopy(&fac.outer)?;
    let inner = lift_isotopy(&fac.inner)?;
    let last = grid.len() - 1;
    let composed = compose_generators(&outer.generator(last, 1.0)?, &inner.generator(last, 1.0)?)?;
    let total = lift_isotopy(&integrate_linear_flow(&QuadraticHamiltonian::harmonic(), &grid)?)?;
    abs(composed.maslov() as f64, total.maslov[last] as f64, 0.0)
}

fn covariance(_: u64) -> Result<Measure> {
    let n = 256;
    let dx = (2.0 * PI / n as f64).sqrt();
    let wave = WaveGrid::new(n, -((n / 2) as f64) * dx, dx, 1.0)?;
    let psi = ground(&wave, 0.7, -0.4)?;
    let f = MetaplecticGenerator::fourier(1, 0, 1.0);
    let z0 = PhasePoint::xp(6.0 * dx, -4.0 * dx);
    let sz0 = project_generator(&f).apply(&z0);
    let finv = invert_generator(&f);
    let lhs = apply_generator_to_grid(&finv, &psi, Backend::Direct)?;
    let lhs = hw_translate(&HeisenbergWeylOp::new(z0, 1.0), &lhs, false)?;
    let lhs = apply_generator_to_grid(&f, &lhs, Backend::Direct)?;
    let rhs = hw_translate(&HeisenbergWeylOp::new(sz0, 1.0), &psi, false)?;
    abs(lhs.l2_distance(&rhs)?, 0.0, 1e-8)
}

fn cayley_suite(seed: u64) -> Result<Measure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    let mut err = 0.0_f64;
    while tested < 100 {
        let s = SymplecticMatrix::random(1, &mut rng);
        if (s.matrix() - RMat::identity(2, 2)).determinant().abs() <= 1e-6 {
            continue;
        }
        let phi = cayley_transform(&s)?;
        let scale = max_abs(phi.matrix()).max(max_abs(s.matrix())).max(1.0);
        let inv = cayley_transform(&s.inverse())?;
        let back = cayley_inverse(phi.matrix())?;
        err = err
            .max(phi.symmetry_defect() / scale)
            .max(close(inv.matrix(), &(-phi.matrix())) / scale)
            .max(close(back.matrix(), s.matrix()) / scale);
        tested += 1;
    }
    abs(err, 0.0, 1e-10)
}

fn free_symbol(_: u64) -> Result<Measure> {
    let wave = WaveGrid::centered(256, 12.0, 1.0)?;
    let psi = ground(&wave, 0.5, 0.3)?;
    let t = 1.0;
    let op = weyl_quantize_gaussian(&free_particle_symbols(t, 1.0).weyl_gaussian(), &wave)?;
    let closed = closed_form_propagator(ClosedForm::Free(t), &psi)?;
    abs(op.apply(&psi)?.l2_distance(&closed)?, 0.0, 1e-6)
}

fn metaplectic_symbol_grid(_: u64) -> Result<Measure> {
    let wave = WaveGrid::centered(256, 12.0, 1.0)?;
    let psi = ground(&wave, 0.5, 0.3)?;
    let mut err = 0.0_f64;
    for t in [0.7, 2.0] {
        let g = MetaplecticGenerator::harmonic(t, 0, 1.0)?;
        let nu = conley_zehnder_nu(&g)? as i64;
        let sym = metaplectic_symbol(&SymplecticMatrix::rotation(t), nu, SymbolKind::Weyl, 1.0)?;
        let op = weyl_quantize_gaussian(&sym, &wave)?;
        let direct = apply_generator_to_grid(&g, &psi, Backend::Direct)?;
        err = err.max(op.apply(&psi)?.l2_distance(&direct)?);
    }
    abs(err, 0.0, 1e-5)
}

fn gauss(x0: f64, p0: f64, w: f64, k: f64) -> impl Fn(f64, f64) -> Complex64 {
    move |x, p| Complex64::from_polar((-((x - x0).powi(2) + (p - p0).powi(2)) / w).exp(), k * (x - p))
}

fn square(n: usize, hbar: f64) -> Result<PhaseSpaceGrid> {
    let d = (2.0 * PI * hbar / n as f64).sqrt();
    PhaseSpaceGrid::centered(n, n, d, d, hbar)
}

fn moyal_product(_: u64) -> Result<Measure> {
    let n = 64;
    let x_max = (PI * n as f64 / 4.0).sqrt();
    let wave = WaveGrid::centered(n, x_max, 1.0)?;
    let g = PhaseSpaceGrid::half_band(&wave);
    let a = g.sample(&gauss(0.5, 0.2, 1.2, 0.3));
    let b = g.sample(&gauss(-0.3, 0.4, 0.9, -0.2));
    let lhs = weyl_quantize(&moyal_star(&a, &b)?)?;
    let rhs = weyl_quantize(&a)?.compose(&weyl_quantize(&b)?)?;
    abs(lhs.max_abs_diff(&rhs), 0.0, 1e-6)
}

/// `x` and `p` under a wide super-Gaussian window; compared on the unit disc.
fn moyal_x_p(_: u64) -> Result<Measure> {
    let hbar = 1.0;
    let g = square(144, hbar)?;
    let r = 9.5_f64;
    let win = move |x: f64, p: f64| (-((x * x + p * p) / (r * r)).powi(4)).exp();
    let a = g.sample(&move |x: f64, p: f64| Complex64::new(x * win(x, p), 0.0));
    let b = g.sample(&move |x: f64, p: f64| Complex64::new(p * win(x, p), 0.0));
    let ab = moyal_star(&a, &b)?;
    let mut err = 0.0_f64;
    for i in 0..g.n_x() {
        for l in 0..g.n_p() {
            let (x, p) = (g.x(i), g.p(l));
            if x * x + p * p <= 1.0 {
                let want = Complex64::new(x * p, 0.5 * hbar);
                err = err.max((ab.data[(i, l)] - want).norm());
            }
        }
    }
    abs(err, 0.0, 1e-6)
}

fn moyal_assoc(_: u64) -> Result<Measure> {
    let g = square(64, 1.0)?;
    let a = g.sample(&gauss(0.3, 0.0, 1.0, 0.1));
    let b = g.sample(&gauss(-0.2, 0.3, 0.9, -0.3));
    let c = g.sample(&gauss(0.0, -0.4, 1.1, 0.2));
    let left = moyal_star(&moyal_star(&a, &b)?, &c)?;
    let right = moyal_star(&a, &moyal_star(&b, &c)?)?;
    abs(left.max_abs_diff(&right)?, 0.0, 1e-6)
}

fn wigner_wave() -> Result<WaveGrid> {
    let n = 256;
    let dx = (PI / n as f64).sqrt();
    WaveGrid::new(n, -((n / 2) as f64) * dx, dx, 1.0)
}

/// Three windows: displaced, squeezed and chirped Gaussians.
fn windows(wave: &WaveGrid) -> Result<Vec<GridWavefunction>> {
    Ok(vec![
        ground(wave, -0.5, 0.4)?.scaled(Complex64::new(0.6, 0.8)),
        wave.sample(|x| Complex64::new((-(x - 0.3).powi(2)).exp(), 0.0))?,
        wave.sample(|x| Complex64::from_polar((-(x * x) / 3.0).exp(), 0.4 * x * x))?,
    ])
}

fn wigner_translation(_: u64) -> Result<Measure> {
    let wave = wigner_wave()?;
    let psi = ground(&wave, 0.3, -0.2)?;
    let dp = PhaseSpaceGrid::half_band(&wave).dp;
    let op = HeisenbergWeylOp::new(PhasePoint::xp(6.0 * wave.dx, 4.0 * dp), 1.0);
    let moved = hw_translate(&op, &psi, false)?;
    let mut rel = 0.0_f64;
    for phi in windows(&wave)? {
        let n0 = wigner_norm(&psi, &phi)?;
        let n1 = wigner_norm(&moved, &hw_translate(&op, &phi, false)?)?;
        rel = rel.max((n1 - n0).abs() / n0);
    }
    abs(rel, 0.0, 1e-6)
}

fn wigner_fourier(_: u64) -> Result<Measure> {
    let wave = wigner_wave()?;
    let psi = ground(&wave, 0.8, 0.3)?;
    let f = MetaplecticGenerator::fourier(1, 0, 1.0);
    let fpsi = apply_generator_to_grid(&f, &psi, Backend::Direct)?;
    let mut rel = 0.0_f64;
    for phi in windows(&wave)? {
        let n0 = wigner_norm(&psi, &phi)?;
        let n1 = wigner_norm(&fpsi, &apply_generator_to_grid(&f, &phi, Backend::Direct)?)?;
        rel = rel.max((n1 - n0).abs() / n0);
    }
    abs(rel, 0.0, 1e-4)
}

/// Number of `(s, r)` with `s <= 1` or `r <= 1`, `s + r <= 8`, where the rules differ.
fn bj_low_degree(_: u64) -> Result<Measure> {
    let mut differing = 0;
    for s in 0..=8u32 {
        for r in 0..=(8 - s) {
            if (s <= 1 || r <= 1) && !weyl_minus_born_jordan(s, r)?.is_zero() {
                differing += 1;
            }
        }
    }
    abs(differing as f64, 0.0, 0.0)
}

/// Coefficient of `(-i hbar)^2` in `Weyl(p^2 x^2) - BornJordan(p^2 x^2)`.
fn bj_second_order(_: u64) -> Result<Measure> {
    let d = weyl_minus_born_jordan(2, 2)?;
    if !d.is_scalar() || d.0.len() != 1 {
        return Err(Error::Invalid(format!("difference is not a pure constant: {d}")));
    }
    let c = d.coefficient(0, 0, 2);
    abs(*c.numer() as f64 / *c.denom() as f64, -1.0 / 6.0, 0.0)
}

fn wide_ground() -> Result<GridWavefunction> {
    ground(&WaveGrid::new(1024, -12.0, 24.0 / 1024.0, 1.0)?, 0.0, 0.0)
}

fn quarter_eigenphase(_: u64) -> Result<Measure> {
    let psi = wide_ground()?;
    let out = propagate_quadratic(&QuadraticHamiltonian::harmonic(), &psi, PI / 2.0)?;
    let want = psi.scaled(Complex64::from_polar(1.0, -PI / 4.0));
    abs(out.state.l2_distance(&want)?, 0.0, 1e-6)
}

fn double_cover(_: u64) -> Result<Measure> {
    let psi = wide_ground()?;
    let out = propagate_quadratic_bracketed(&QuadraticHamiltonian::harmonic(), &psi, 2.0 * PI, PI / 2.0)?;
    let ov = out.state.inner(&psi)? / psi.norm_sq();
    abs(ov.re, -1.0, 1e-5)
}

fn quantum_factorization(_: u64) -> Result<Measure> {
    let psi = ground(&WaveGrid::centered(512, 12.0, 1.0)?, 0.4, -0.3)?;
    let h1 = Perturbation::Quadratic(QuadraticHamiltonian::position_square());
    let mut err = 0.0_f64;
    for t in [0.3, 1.0] {
        let lhs = propagate_factorized(&QuadraticHamiltonian::free(), &h1, &psi, t, 0, DEFAULT_STEP_BUDGET)?;
        let rhs = closed_form_propagator(ClosedForm::Harmonic(t), &psi)?;
        err = err.max(lhs.state.l2_distance(&rhs)?);
    }
    abs(err, 0.0, 1e-8)
}

fn cos_kick(_: u64) -> Result<Measure> {
    let psi = ground(&WaveGrid::new(256, -10.0, 20.0 / 256.0, 1.0)?, 0.0, 0.0)?;
    let field = HamiltonianField::from_fn(2, |z, _| z[0].cos()).with_gradient(|z, _| vec![-z[0].sin(), 0.0]);
    let out = propagate_factorized(
        &QuadraticHamiltonian::free(),
        &Perturbation::Field(field),
        &psi,
        1.0,
        1000,
        DEFAULT_STEP_BUDGET,
    )?;
    let reference = reference_split_step(|p| 0.5 * p * p, |x, _| x.cos(), &psi, 1.0, 1000)?;
    abs(out.state.l2_distance(&reference)?, 0.0, 1e-4)
}

fn driven() -> QuadraticHamiltonian {
    QuadraticHamiltonian::harmonic().with_linear(|_| DVector::from_vec(vec![1.0, 0.0]))
}

fn inhomogeneous_reference(_: u64) -> Result<Measure> {
    let psi = ground(&WaveGrid::centered(512, 12.0, 1.0)?, 0.0, 0.0)?;
    let out = propagate_inhomogeneous(&driven(), &psi, 1.0)?;
    let reference = reference_split_step(|p| 0.5 * p * p, |x, _| 0.5 * x * x + x, &psi, 1.0, 4000)?;
    abs(out.state.l2_distance(&reference)?, 0.0, 1e-4)
}

fn inhomogeneous_moment(_: u64) -> Result<Measure> {
    let z0 = PhasePoint::xp(0.5, -0.3);
    let psi = ground(&WaveGrid::centered(512, 12.0, 1.0)?, 0.5, -0.3)?;
    let out = propagate_inhomogeneous(&driven(), &psi, 1.0)?;
    let (mx, mp) = first_moment(&wigner(&out.state)?);
    let flow = affine_flow_from_inhomogeneous(&driven(), &uniform_grid(1.0, 1000))?;
    let zt = flow.affine(flow.len() - 1).apply(z0.vector());
    abs((mx.re - zt[0]).abs().max((mp.re - zt[1]).abs()), 0.0, 1e-4)
}

fn circle_path(times: &[f64]) -> Vec<PhasePoint> {
    times.iter().map(|t| PhasePoint::xp(t.cos(), t.sin())).collect()
}

fn berry_phase(_: u64) -> Result<Measure> {
    let times = uniform_grid(2.0 * PI, 6000);
    let tr = translate_along_path(&times, &circle_path(&times), 1.0)?;
    let phase = tr
        .loop_phase
        .ok_or_else(|| Error::Invalid("circle path does not close".into()))?;
    abs(phase, PI, 1e-8)
}

/// `-i hbar d/dx` by FFT.
fn momentum(psi: &GridWavefunction) -> Vec<Complex64> {
    let n = psi.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = psi.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let ks = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        *b *= Complex64::new(psi.hbar() * 2.0 * PI * ks / (n as f64 * psi.dx()), 0.0) / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// `|| i hbar d/dt psi - sigma(z_hat, zdot) psi ||` for
/// `psi(t) = e^{i chi/hbar} T(z(t)) psi0` along the unit circle, `dt = 1e-3`.
fn berry_residual(_: u64) -> Result<Measure> {
    let hbar = 1.0;
    let dt = 1e-3;
    let steps = 6000;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let path = circle_path(&times);
    let tr = translate_along_path(&times, &path, hbar)?;
    let psi0 = ground(&WaveGrid::centered(256, 10.0, hbar)?, 0.2, 0.1)?;
    let state = |k: usize| -> Result<GridWavefunction> {
        Ok(hw_translate(&tr.ops[k], &psi0, true)?.scaled(Complex64::from_polar(1.0, tr.chi[k] / hbar)))
    };
    let mut worst = 0.0_f64;
    for k in [10, 1000, 2500, 4000, 5990] {
        let (prev, cur, next) = (state(k - 1)?, state(k)?, state(k + 1)?);
        let (xd, pd) = (-times[k].sin(), times[k].cos());
        let p_hat = momentum(&cur);
        let res: Vec<Complex64> = (0..cur.len())
            .map(|j| {
                let dpsi = (next.samples()[j] - prev.samples()[j]) / (2.0 * dt);
                let lhs = Complex64::new(0.0, hbar) * dpsi;
                let rhs = p_hat[j] * xd - cur.samples()[j] * (cur.x(j) * pd);
                lhs - rhs
            })
            .collect();
        worst = worst.max(cur.with_samples(res)?.norm());
    }
    abs(worst, 0.0, 1e-4)
}

fn chapman_kolmogorov(_: u64) -> Result<Measure> {
    let grid = WaveGrid::centered(256, 8.0, 1.0)?;
    let u = QuantumIsotopy::harmonic(&[0.0, 0.5, 1.2, 2.3, 4.0], grid)?;
    let psi = ground(&grid, 0.5, -0.2)?;
    let mut worst = 0.0_f64;
    for (i, j, k) in [(2, 1, 0), (3, 1, 2), (4, 2, 1), (1, 3, 4)] {
        worst = worst.max(u.chapman_kolmogorov_defect(i, j, k, &psi)?);
    }
    abs(worst, 0.0, 1e-8)
}
