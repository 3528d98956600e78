//! Quantum propagators on grids: metaplectic lifts of quadratic flows, the
//! factorization `U^{H0+H1} = S_t U^{H1 o S_t}`, inhomogeneous Hamiltonians,
//! and a split-step reference solver.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::isotopy::{
    affine_flow_from_inhomogeneous, factorized_linear_flow, integrate_linear_flow, uniform_grid,
    QuadraticHamiltonian, SampledIsotopy,
};
use crate::linalg::{cumulative_simpson, expm_action, CMat, CVec};
use crate::metaplectic::{
    apply_generator_to_grid, compose_generators, invert_generator, lift_isotopy, Backend,
    GridWavefunction, HeisenbergWeylOp, MetaplecticGenerator, MetaplecticPath, MetaplecticWord,
    WaveGrid,
};
use crate::symplectic::{j_apply, sigma, HamiltonianField, PhasePoint, SymplecticMatrix};
use crate::weyl::{weyl_quantize, NyquistCheck, OperatorMatrix, PhaseSpaceGrid};

/// Largest time step used when integrating and lifting a classical flow.
pub const LIFT_DT: f64 = 1e-3;
/// Relative edge magnitude accepted for propagated states.
pub const EDGE_TOL: f64 = 1e-8;
pub const MAX_DENSE_N: usize = 512;
/// Default bound on the commutator error estimate of dense stepping.
pub const DEFAULT_STEP_BUDGET: f64 = 1e-4;

/// `-H(-s)`: the Hamiltonian whose forward flow runs `H` backwards in time.
pub fn reversed(h: &QuadraticHamiltonian) -> QuadraticHamiltonian {
    let fwd = h.clone();
    let mut out = QuadraticHamiltonian::new(h.n(), move |s| -fwd.matrix(-s));
    if !h.is_homogeneous() {
        let lin = h.clone();
        out = out.with_linear(move |s| -lin.linear(-s));
    }
    out
}

fn lift_grid(t: f64) -> Vec<f64> {
    let steps = ((t.abs() / LIFT_DT).ceil() as usize).max(2);
    uniform_grid(t.abs(), steps)
}

/// Forward Hamiltonian for `|t|`: `h` itself for `t > 0`, else [`reversed`].
fn oriented(h: &QuadraticHamiltonian, t: f64) -> QuadraticHamiltonian {
    if t >= 0.0 {
        h.clone()
    } else {
        reversed(h)
    }
}

/// Classical flow of the homogeneous part of `h` up to `t` and its lift.
pub fn lift_quadratic(h: &QuadraticHamiltonian, t: f64) -> Result<MetaplecticPath> {
    let iso = integrate_linear_flow(&oriented(&h.homogeneous(), t), &lift_grid(t))?;
    lift_isotopy(&iso)
}

/// Generator of the lifted operator at the end of the path.
pub fn lifted_generator(h: &QuadraticHamiltonian, t: f64, hbar: f64) -> Result<MetaplecticGenerator> {
    let path = lift_quadratic(h, t)?;
    let last = path.len() - 1;
    if !path.free[last] {
        let b = path.matrices[last].b().determinant().abs();
        return Err(Error::NotFree(b));
    }
    path.generator(last, hbar)
}

/// `(g_second, g_first)` with `S_t = S_{t,t1} S_{t1}`, both lifted
/// continuously; `t_mid` is rounded to the lift grid.
pub fn bracketed_generators(
    h: &QuadraticHamiltonian,
    t: f64,
    t_mid: f64,
    hbar: f64,
) -> Result<(MetaplecticGenerator, MetaplecticGenerator)> {
    if t_mid * t <= 0.0 || t_mid.abs() >= t.abs() {
        return Err(Error::Invalid(format!(
            "bracket time {t_mid} must lie strictly between 0 and {t}"
        )));
    }
    let times = lift_grid(t);
    let iso = integrate_linear_flow(&oriented(&h.homogeneous(), t), &times)?;
    let k = ((t_mid.abs() / (times[1] - times[0])).round() as usize).clamp(1, times.len() - 2);
    let first_path = lift_isotopy(&SampledIsotopy::new(
        times[..=k].to_vec(),
        iso.matrices()[..=k].to_vec(),
    )?)?;
    let first = first_path.generator(k, hbar)?;
    let s1inv = iso.matrices()[k].inverse();
    let rest_times: Vec<f64> = times[k..].iter().map(|s| s - times[k]).collect();
    let rest_mats: Vec<SymplecticMatrix> = iso.matrices()[k..].iter().map(|s| s.compose(&s1inv)).collect();
    let rest = lift_isotopy(&SampledIsotopy::new(rest_times, rest_mats)?)?;
    let second = rest.generator(rest.len() - 1, hbar)?;
    Ok((second, first))
}

/// Grid action of a unitary from a sampled isotopy.
#[derive(Clone, Debug)]
pub enum GridUnitary {
    Identity,
    /// `e^{i phase/hbar} W T(shift)`, `W` a metaplectic word (rightmost first).
    Affine {
        phase: f64,
        word: Option<MetaplecticWord>,
        shift: Option<PhasePoint>,
    },
    Dense(OperatorMatrix),
}

impl GridUnitary {
    pub fn metaplectic(word: MetaplecticWord) -> Self {
        GridUnitary::Affine {
            phase: 0.0,
            word: Some(word),
            shift: None,
        }
    }

    pub fn generator(g: MetaplecticGenerator) -> Self {
        Self::metaplectic(MetaplecticWord::new(vec![g]).expect("non-empty"))
    }

    pub fn apply(&self, psi: &GridWavefunction, backend: Backend) -> Result<GridWavefunction> {
        match self {
            GridUnitary::Identity => Ok(psi.clone()),
            GridUnitary::Dense(op) => op.apply(psi),
            GridUnitary::Affine { phase, word, shift } => {
                let mut out = match shift {
                    Some(z) => crate::metaplectic::hw_translate(
                        &HeisenbergWeylOp::new(z.clone(), psi.hbar()),
                        psi,
                        true,
                    )?,
                    None => psi.clone(),
                };
                if let Some(w) = word {
                    out = w.apply(&out, backend)?;
                }
                Ok(out.scaled(Complex64::from_polar(1.0, phase / psi.hbar())))
            }
        }
    }

    /// Dense matrix of the grid action, column by column.
    pub fn matrix(&self, grid: WaveGrid, backend: Backend) -> Result<OperatorMatrix> {
        if let GridUnitary::Dense(op) = self {
            return Ok(op.clone());
        }
        let n = grid.len;
        let cols: Vec<Result<Vec<Complex64>>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![Complex64::new(0.0, 0.0); n];
                e[k] = Complex64::new(1.0, 0.0);
                let psi = GridWavefunction::new(e, grid.x_min, grid.dx, grid.hbar)?;
                Ok(self.apply(&psi, backend)?.samples().to_vec())
            })
            .collect();
        let mut m = CMat::zeros(n, n);
        for (k, c) in cols.into_iter().enumerate() {
            let c = c?;
            for j in 0..n {
                m[(j, k)] = c[j];
            }
        }
        OperatorMatrix::new(m, grid)
    }
}

/// Sampled one-parameter family of grid unitaries with `U_0 = I`.
#[derive(Clone, Debug)]
pub struct QuantumIsotopy {
    times: Vec<f64>,
    ops: Vec<GridUnitary>,
    grid: WaveGrid,
    backend: Backend,
}

impl QuantumIsotopy {
    pub fn new(times: Vec<f64>, ops: Vec<GridUnitary>, grid: WaveGrid) -> Result<Self> {
        if times.is_empty() || times.len() != ops.len() {
            return Err(Error::Invalid("quantum isotopy needs one operator per time".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Invalid("quantum isotopy must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        Ok(QuantumIsotopy {
            times,
            ops,
            grid,
            backend: Backend::Direct,
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    /// Lift of a sampled linear path; every sample after the first must be free.
    pub fn from_path(path: &MetaplecticPath, grid: WaveGrid) -> Result<Self> {
        let mut ops = Vec::with_capacity(path.len());
        for i in 0..path.len() {
            if i == 0 {
                ops.push(GridUnitary::Identity);
            } else {
                ops.push(GridUnitary::generator(path.generator(i, grid.hbar)?));
            }
        }
        Self::new(path.times.clone(), ops, grid)
    }

    /// Harmonic-oscillator propagators with the Maslov index `-floor(t/pi)`.
    pub fn harmonic(times: &[f64], grid: WaveGrid) -> Result<Self> {
        let ops = times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    Ok(GridUnitary::Identity)
                } else {
                    let m = -(t / PI).floor() as i64;
                    Ok(GridUnitary::generator(MetaplecticGenerator::harmonic(t, m, grid.hbar)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times.to_vec(), ops, grid)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid(&self) -> WaveGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn op(&self, i: usize) -> &GridUnitary {
        &self.ops[i]
    }

    pub fn apply(&self, i: usize, psi: &GridWavefunction) -> Result<GridWavefunction> {
        self.ops[i].apply(psi, self.backend)
    }

    pub fn matrix(&self, i: usize) -> Result<OperatorMatrix> {
        self.ops[i].matrix(self.grid, self.backend)
    }

    /// `U_{t_i, t_j} = U_i U_j^{-1}`: a single generator when the metaplectic
    /// factors compose freely, a dense matrix otherwise.
    pub fn two_time(&self, i: usize, j: usize) -> Result<GridUnitary> {
        if i == j {
            return Ok(GridUnitary::Identity);
        }
        let single = |op: &GridUnitary| match op {
            GridUnitary::Affine {
                phase,
                word: Some(w),
                shift: None,
            } if *phase == 0.0 => w.collapse().ok(),
            _ => None,
        };
        match (&self.ops[i], &self.ops[j]) {
            (a, GridUnitary::Identity) => return Ok(a.clone()),
            (GridUnitary::Identity, b) => {
                if let Some(g) = single(b) {
                    return Ok(GridUnitary::generator(invert_generator(&g)));
                }
            }
            (a, b) => {
                if let (Some(ga), Some(gb)) = (single(a), single(b)) {
                    let inv = invert_generator(&gb);
                    return Ok(match compose_generators(&ga, &inv) {
                        Ok(g) => GridUnitary::generator(g),
                        Err(_) => GridUnitary::metaplectic(MetaplecticWord::new(vec![ga, inv])?),
                    });
                }
            }
        }
        let ui = self.matrix(i)?;
        let uj = self.matrix(j)?;
        let inv = uj
            .matrix
            .clone()
            .try_inverse()
            .ok_or(Error::NonFinite("U_t^{-1}"))?;
        Ok(GridUnitary::Dense(OperatorMatrix::new(&ui.matrix * inv, self.grid)?))
    }

    /// `| ||U_i psi|| - ||psi|| |`.
    pub fn unitarity_defect(&self, i: usize, psi: &GridWavefunction) -> Result<f64> {
        Ok((self.apply(i, psi)?.norm() - psi.norm()).abs())
    }

    /// `|| U_{i,j} U_{j,k} psi - U_{i,k} psi ||`.
    pub fn chapman_kolmogorov_defect(&self, i: usize, j: usize, k: usize, psi: &GridWavefunction) -> Result<f64> {
        let lhs = self
            .two_time(i, j)?
            .apply(&self.two_time(j, k)?.apply(psi, self.backend)?, self.backend)?;
        let rhs = self.two_time(i, k)?.apply(psi, self.backend)?;
        lhs.l2_distance(&rhs)
    }
}

/// `H = i hbar Udot U^{-1}` by centered differences at an interior sample,
/// with `U_t^{-1} = U_t^*`. Grid kernels of metaplectic operators are
/// scaled Fourier matrices whose numerical inverse is ill-conditioned, while
/// their adjoint is accurate on resolved states.
pub fn quantum_isotopy_generator(u: &QuantumIsotopy, t: f64) -> Result<OperatorMatrix> {
    let times = u.times();
    let i = times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or(Error::TimeOutOfRange(t))?;
    if i == 0 || i + 1 >= times.len() {
        return Err(Error::BoundaryTime(t));
    }
    let (hm, hp) = (times[i] - times[i - 1], times[i + 1] - times[i]);
    if (hm - hp).abs() > 1e-9 * hm {
        return Err(Error::Invalid("centered generator needs symmetric neighbours".into()));
    }
    let (um, u0, up) = (u.matrix(i - 1)?, u.matrix(i)?, u.matrix(i + 1)?);
    let scale = Complex64::new(0.0, u.grid().hbar / (hm + hp));
    OperatorMatrix::new((up.matrix - um.matrix) * u0.matrix.adjoint() * scale, u.grid())
}

/// Result of a propagation run.
#[derive(Clone, Debug)]
pub struct PropagationReport {
    pub state: GridWavefunction,
    pub times: Vec<f64>,
    /// Grid `L^2` norm after each recorded step (initial state first).
    pub norms: Vec<f64>,
    /// Phase `chi(t)` of the inhomogeneous closed form.
    pub chi: Option<f64>,
    /// Maslov index of the generator applied last.
    pub maslov: Option<u8>,
    /// `L^2` distance to a reference solution, when one was computed.
    pub reference_error: Option<f64>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    times: &'a [f64],
    norms: &'a [f64],
    chi: Option<f64>,
    maslov: Option<u8>,
    reference_error: Option<f64>,
    norm_drift: f64,
    len: usize,
    x_min: f64,
    dx: f64,
    hbar: f64,
}

impl PropagationReport {
    fn new(psi0: &GridWavefunction, state: GridWavefunction, t: f64) -> Self {
        let norms = vec![psi0.norm(), state.norm()];
        PropagationReport {
            state,
            times: vec![0.0, t],
            norms,
            chi: None,
            maslov: None,
            reference_error: None,
        }
    }

    /// Largest deviation of a recorded norm from the initial one.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms.iter().fold(0.0_f64, |a, n| a.max((n - n0).abs()))
    }

    pub fn with_reference(mut self, reference: &GridWavefunction) -> Result<Self> {
        self.reference_error = Some(self.state.l2_distance(reference)?);
        Ok(self)
    }

    /// Norms, phases and error metrics; the state goes to its own file.
    pub fn to_json(&self) -> String {
        let doc = ReportJson {
            times: &self.times,
            norms: &self.norms,
            chi: self.chi,
            maslov: self.maslov,
            reference_error: self.reference_error,
            norm_drift: self.norm_drift(),
            len: self.state.len(),
            x_min: self.state.x_min(),
            dx: self.state.dx(),
            hbar: self.state.hbar(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }
}

fn check_quadratic_input(h: &QuadraticHamiltonian, psi0: &GridWavefunction) -> Result<()> {
    if h.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: h.n(),
        });
    }
    psi0.check_edge_decay(EDGE_TOL)
}

/// Exact propagation for `H = 1/2 M(t) z.z` (`n = 1`): integrate the flow,
/// lift it and apply the generator at `t` with the tracked Maslov index.
/// Fails with [`Error::NotFree`] when `S_t` is not free; bracket such times
/// with [`propagate_quadratic_bracketed`].
pub fn propagate_quadratic(h: &QuadraticHamiltonian, psi0: &GridWavefunction, t: f64) -> Result<PropagationReport> {
    check_quadratic_input(h, psi0)?;
    if t == 0.0 {
        return Ok(PropagationReport::new(psi0, psi0.clone(), t));
    }
    let g = lifted_generator(h, t, psi0.hbar())?;
    let out = apply_generator_to_grid(&g, psi0, Backend::Direct)?;
    let mut report = PropagationReport::new(psi0, out, t);
    report.maslov = Some(g.maslov());
    Ok(report)
}

/// `S_t = S_{t,t1} S_{t1}` applied as two lifted generators.
pub fn propagate_quadratic_bracketed(
    h: &QuadraticHamiltonian,
    psi0: &GridWavefunction,
    t: f64,
    t_mid: f64,
) -> Result<PropagationReport> {
    check_quadratic_input(h, psi0)?;
    let (second, first) = bracketed_generators(h, t, t_mid, psi0.hbar())?;
    let mid = apply_generator_to_grid(&first, psi0, Backend::Direct)?;
    let out = apply_generator_to_grid(&second, &mid, Backend::Direct)?;
    let mut report = PropagationReport::new(psi0, out, t);
    report.times = vec![0.0, t_mid, t];
    report.norms = vec![psi0.norm(), mid.norm(), report.state.norm()];
    report.maslov = Some(second.maslov());
    Ok(report)
}

/// Printed closed-form propagators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClosedForm {
    /// `(p^2 + x^2)/2` at time `t`, Maslov index `-floor(t/pi)`.
    Harmonic(f64),
    /// `p^2/2` at time `t`, Maslov index 0 for `t > 0` and 1 for `t < 0`.
    Free(f64),
}

/// Trapezoidal quadrature of the closed-form kernel.
pub fn closed_form_propagator(kind: ClosedForm, psi: &GridWavefunction) -> Result<GridWavefunction> {
    let hbar = psi.hbar();
    // kernel = amp exp(i (a x^2 - 2 b x x' + a' x'^2) / 2 hbar)
    let (amp, a, b, ap) = match kind {
        ClosedForm::Harmonic(t) => {
            let s = t.sin();
            if (t / PI - (t / PI).round()).abs() < 1e-12 {
                return Err(Error::ExcludedTime(t));
            }
            let m = (-(t / PI).floor() as i64).rem_euclid(4) as u32;
            let amp = Complex64::new(0.0, 1.0).powu(m) / (Complex64::new(0.0, 2.0 * PI * hbar).sqrt() * s.abs().sqrt());
            (amp, t.cos() / s, 1.0 / s, t.cos() / s)
        }
        ClosedForm::Free(t) => {
            if t == 0.0 {
                return Err(Error::ExcludedTime(t));
            }
            let m = if t > 0.0 { 0 } else { 1 };
            let amp = Complex64::new(0.0, 1.0).powu(m) / Complex64::new(0.0, 2.0 * PI * hbar * t.abs()).sqrt();
            (amp, 1.0 / t, 1.0 / t, 1.0 / t)
        }
    };
    let xm = psi.x_max_abs();
    for (which, c) in [("|P| x_max dx / hbar", a), ("|Q| x_max dx / hbar", ap)] {
        let value = c.abs() * xm * psi.dx() / hbar;
        if value > PI {
            return Err(Error::AliasingRisk { which, value });
        }
    }
    let xs = psi.xs();
    let n = xs.len();
    let dx = psi.dx();
    let out: Vec<Complex64> = xs
        .par_iter()
        .map(|&x| {
            let s: Complex64 = psi
                .samples()
                .iter()
                .zip(&xs)
                .enumerate()
                .map(|(k, (v, &y))| {
                    let w = if k == 0 || k == n - 1 { 0.5 * dx } else { dx };
                    let phase = (a * x * x - 2.0 * b * x * y + ap * y * y) / (2.0 * hbar);
                    v * Complex64::from_polar(w, phase)
                })
                .sum();
            amp * s
        })
        .collect();
    psi.with_samples(out)
}

/// Angular wavenumbers of the FFT bins on a grid of `n` points.
fn wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let jj = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * jj / (n as f64 * dx)
        })
        .collect()
}

/// Largest spectral magnitude in the outer eighth of the band, relative to the peak.
pub fn band_edge_magnitude(psi: &GridWavefunction) -> f64 {
    let n = psi.len();
    let mut buf = psi.samples().to_vec();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let k = wavenumbers(n, psi.dx());
    let kmax = PI / psi.dx();
    let peak = buf.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let edge = buf
        .iter()
        .zip(&k)
        .filter(|(_, &kk)| kk.abs() >= 0.875 * kmax)
        .fold(0.0_f64, |a, (z, _)| a.max(z.norm()));
    if peak == 0.0 {
        0.0
    } else {
        edge / peak
    }
}

/// Strang splitting `e^{-i V(t+dt) dt/2hbar} e^{-i T dt/hbar} e^{-i V(t) dt/2hbar}`
/// for `H = T(p) + V(x, t)` on the periodic grid; global phase is kept.
pub fn reference_split_step<T, V>(
    t_of_p: T,
    v_of_x_t: V,
    psi0: &GridWavefunction,
    t: f64,
    steps: usize,
) -> Result<GridWavefunction>
where
    T: Fn(f64) -> f64,
    V: Fn(f64, f64) -> f64,
{
    split_step_with(t_of_p, v_of_x_t, psi0, t, steps, NyquistCheck::Strict).map(|(psi, _)| psi)
}

/// [`reference_split_step`] with the band-edge check either enforced or
/// reported as a warning.
pub fn split_step_with<T, V>(
    t_of_p: T,
    v_of_x_t: V,
    psi0: &GridWavefunction,
    t: f64,
    steps: usize,
    mode: NyquistCheck,
) -> Result<(GridWavefunction, Option<String>)>
where
    T: Fn(f64) -> f64,
    V: Fn(f64, f64) -> f64,
{
    if steps == 0 {
        return Err(Error::Invalid("split-step needs at least one step".into()));
    }
    let spill = band_edge_magnitude(psi0);
    let warning = (spill > EDGE_TOL)
        .then(|| format!("initial state has relative spectral weight {spill:.3e} at the band edge"));
    if let (Some(msg), NyquistCheck::Strict) = (&warning, mode) {
        return Err(Error::Nyquist(msg.clone()));
    }
    psi0.check_edge_decay(EDGE_TOL)?;
    let n = psi0.len();
    let hbar = psi0.hbar();
    let dt = t / steps as f64;
    let xs = psi0.xs();
    let kinetic: Vec<Complex64> = wavenumbers(n, psi0.dx())
        .into_iter()
        .map(|k| Complex64::from_polar(1.0 / n as f64, -t_of_p(hbar * k) * dt / hbar))
        .collect();
    let half_v = |s: f64| -> Vec<Complex64> {
        xs.iter()
            .map(|&x| Complex64::from_polar(1.0, -v_of_x_t(x, s) * dt / (2.0 * hbar)))
            .collect()
    };
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = psi0.samples().to_vec();
    let mut v_now = half_v(0.0);
    for k in 0..steps {
        for (b, v) in buf.iter_mut().zip(&v_now) {
            *b *= v;
        }
        fwd.process(&mut buf);
        for (b, kin) in buf.iter_mut().zip(&kinetic) {
            *b *= kin;
        }
        inv.process(&mut buf);
        v_now = half_v((k + 1) as f64 * dt);
        for (b, v) in buf.iter_mut().zip(&v_now) {
            *b *= v;
        }
    }
    Ok((psi0.with_samples(buf)?, warning))
}

/// Perturbation `H1` in `H = H0 + H1`.
#[derive(Clone, Debug)]
pub enum Perturbation {
    /// Quadratic `H1`: the inner propagator is itself metaplectic.
    Quadratic(QuadraticHamiltonian),
    /// General `H1(z, t)`: the inner propagator is stepped with dense Weyl operators.
    Field(HamiltonianField),
}

/// Factorized propagation `U_t^{H0+H1} psi0 = S_t U_t^{H1 o S_t} psi0`.
///
/// For a quadratic `H1` both factors are lifted metaplectic operators,
/// composed into one generator when possible. For a general `H1` the inner
/// factor takes `steps` exponential-midpoint steps of the Weyl-quantized
/// `H1 o S_t` (full-band symbol grid), after checking the commutator error
/// estimate `dt^2 ||[H(0), H(t)] psi0|| / 12 hbar^2` against `budget`.
pub fn propagate_factorized(
    h0: &QuadraticHamiltonian,
    h1: &Perturbation,
    psi0: &GridWavefunction,
    t: f64,
    steps: usize,
    budget: f64,
) -> Result<PropagationReport> {
    check_quadratic_input(h0, psi0)?;
    if t == 0.0 {
        return Ok(PropagationReport::new(psi0, psi0.clone(), t));
    }
    let hbar = psi0.hbar();
    match h1 {
        Perturbation::Quadratic(h1q) => {
            if t < 0.0 {
                return Err(Error::Invalid("factorized quadratic route runs forward in time".into()));
            }
            let times = lift_grid(t);
            let fact = factorized_linear_flow(h0, h1q, &times)?;
            let outer = lift_isotopy(&fact.outer)?;
            let inner = lift_isotopy(&fact.inner)?;
            let last = times.len() - 1;
            let go = outer.generator(last, hbar)?;
            let gi = inner.generator(last, hbar)?;
            let out = match compose_generators(&go, &gi) {
                Ok(g) => apply_generator_to_grid(&g, psi0, Backend::Direct)?,
                Err(_) => MetaplecticWord::new(vec![go.clone(), gi])?.apply(psi0, Backend::Direct)?,
            };
            let mut report = PropagationReport::new(psi0, out, t);
            report.maslov = Some(go.maslov());
            Ok(report)
        }
        Perturbation::Field(field) => {
            let inner = dense_inner_propagation(h0, field, psi0, t, steps, budget)?;
            let outer = propagate_quadratic(h0, &inner.state, t)?;
            let mut norms = inner.norms;
            norms.push(outer.state.norm());
            let mut times = inner.times;
            times.push(t);
            Ok(PropagationReport {
                state: outer.state,
                times,
                norms,
                chi: None,
                maslov: outer.maslov,
                reference_error: None,
            })
        }
    }
}

/// Weyl quantization of `H1(S z, t)` on the full-band grid of `wave`.
fn quantized_conjugate(field: &HamiltonianField, s: &SymplecticMatrix, t: f64, wave: &WaveGrid) -> Result<OperatorMatrix> {
    let m = s.matrix();
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let sym = |x: f64, p: f64| Complex64::new(field.value(&[a * x + b * p, c * x + d * p], t), 0.0);
    weyl_quantize(&PhaseSpaceGrid::full_band(wave).sample(&sym))
}

/// Inner factor `U_t^{H1 o S_t} psi0` by dense exponential-midpoint steps.
pub fn dense_inner_propagation(
    h0: &QuadraticHamiltonian,
    field: &HamiltonianField,
    psi0: &GridWavefunction,
    t: f64,
    steps: usize,
    budget: f64,
) -> Result<PropagationReport> {
    let n = psi0.len();
    if n > MAX_DENSE_N {
        return Err(Error::DenseTooLarge {
            max: MAX_DENSE_N,
            got: n,
        });
    }
    if field.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: field.dim(),
        });
    }
    if steps == 0 || t <= 0.0 {
        return Err(Error::Invalid("dense stepping needs t > 0 and at least one step".into()));
    }
    let hbar = psi0.hbar();
    let wave = psi0.grid();
    let dt = t / steps as f64;
    // midpoints of the coarse steps are the odd samples of the flow
    let flow = integrate_linear_flow(h0, &uniform_grid(t, 2 * steps))?;
    let mats = flow.matrices();
    let v0 = CVec::from_column_slice(psi0.samples());
    let h_start = quantized_conjugate(field, &mats[0], 0.0, &wave)?;
    let h_end = quantized_conjugate(field, &mats[2 * steps], t, &wave)?;
    let comm = &h_start.matrix * (&h_end.matrix * &v0) - &h_end.matrix * (&h_start.matrix * &v0);
    let estimate = dt * dt / (12.0 * hbar * hbar) * comm.norm() * psi0.dx().sqrt();
    if estimate > budget {
        return Err(Error::TooFewSteps { estimate, budget });
    }
    let mut v = v0;
    let mut norms = vec![psi0.norm()];
    let mut times = vec![0.0];
    let factor = Complex64::new(0.0, -dt / hbar);
    for k in 0..steps {
        let tm = (k as f64 + 0.5) * dt;
        let h = quantized_conjugate(field, &mats[2 * k + 1], tm, &wave)?;
        v = expm_action(&(h.matrix * factor), &v);
        norms.push(v.norm() * psi0.dx().sqrt());
        times.push((k + 1) as f64 * dt);
    }
    let state = psi0.with_samples(v.as_slice().to_vec())?;
    Ok(PropagationReport {
        state,
        times,
        norms,
        chi: None,
        maslov: None,
        reference_error: None,
    })
}

/// Displacement `u(t) = int_0^t S^{-1} J m` and phase `chi(t) = -1/2 int_0^t sigma(u, udot)`
/// on a uniform grid, for `H = 1/2 M z.z + m.z`.
#[derive(Clone, Debug)]
pub struct InhomogeneousData {
    pub times: Vec<f64>,
    pub u: Vec<PhasePoint>,
    pub chi: Vec<f64>,
    pub flow: SampledIsotopy,
}

pub fn inhomogeneous_data(h: &QuadraticHamiltonian, t_grid: &[f64]) -> Result<InhomogeneousData> {
    let flow = affine_flow_from_inhomogeneous(h, t_grid)?;
    let dt = t_grid[1] - t_grid[0];
    let u: Vec<PhasePoint> = flow.translations().to_vec();
    let integrand: Vec<f64> = t_grid
        .iter()
        .zip(flow.matrices())
        .zip(&u)
        .map(|((&s, m), uk)| {
            let jm = DVector::from_vec(j_apply(h.linear(s).as_slice()));
            let udot = m.inverse().matrix() * jm;
            -0.5 * sigma(uk.as_slice(), udot.as_slice())
        })
        .collect();
    let chi = cumulative_simpson(&integrand, dt);
    Ok(InhomogeneousData {
        times: t_grid.to_vec(),
        u,
        chi,
        flow,
    })
}

/// `U_t psi0 = e^{i chi(t)/hbar} S_t T(u(t)) psi0` for `H = 1/2 M(t) z.z + m(t).z`.
/// Off-lattice displacements are applied spectrally.
pub fn propagate_inhomogeneous(h: &QuadraticHamiltonian, psi0: &GridWavefunction, t: f64) -> Result<PropagationReport> {
    if h.is_homogeneous() {
        return propagate_quadratic(h, psi0, t);
    }
    check_quadratic_input(h, psi0)?;
    if t == 0.0 {
        return Ok(PropagationReport::new(psi0, psi0.clone(), t));
    }
    let hbar = psi0.hbar();
    let forward = oriented(h, t);
    let mut times = lift_grid(t);
    if (times.len() - 1) % 2 == 1 {
        times = uniform_grid(t.abs(), times.len());
    }
    let data = inhomogeneous_data(&forward, &times)?;
    let last = times.len() - 1;
    let g = lifted_generator(&forward, t.abs(), hbar)?;
    let shifted = crate::metaplectic::hw_translate(
        &HeisenbergWeylOp::new(data.u[last].clone(), hbar),
        psi0,
        true,
    )?;
    let chi = data.chi[last];
    let out = apply_generator_to_grid(&g, &shifted, Backend::Direct)?.scaled(Complex64::from_polar(1.0, chi / hbar));
    let mut report = PropagationReport::new(psi0, out, t);
    report.chi = Some(chi);
    report.maslov = Some(g.maslov());
    Ok(report)
}

/// Phase printed alongside the inhomogeneous closed form,
/// `-1/2 int_0^t sigma(S z(t'), zdot(t'))` with `z(t) = J int_0^t m`.
pub fn printed_inhomogeneous_phase(h: &QuadraticHamiltonian, t: f64) -> Result<f64> {
    let mut times = lift_grid(t);
    if (times.len() - 1) % 2 == 1 {
        times = uniform_grid(t, times.len());
    }
    let flow = integrate_linear_flow(&h.homogeneous(), &times)?;
    let dt = times[1] - times[0];
    let zdot: Vec<Vec<f64>> = times.iter().map(|&s| j_apply(h.linear(s).as_slice())).collect();
    let cols: Vec<Vec<f64>> = (0..2 * h.n())
        .map(|c| cumulative_simpson(&zdot.iter().map(|v| v[c]).collect::<Vec<_>>(), dt))
        .collect();
    let integrand: Vec<f64> = (0..times.len())
        .map(|k| {
            let z = DVector::from_iterator(2 * h.n(), cols.iter().map(|c| c[k]));
            let sz = flow.matrices()[k].matrix() * z;
            -0.5 * sigma(sz.as_slice(), &zdot[k])
        })
        .collect();
    Ok(*cumulative_simpson(&integrand, dt).last().expect("non-empty"))
}
