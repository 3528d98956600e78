//! Metaplectic operators as quadratic-Fourier generators `(P, L, Q, m)`,
//! their action on grid wavefunctions, Heisenberg-Weyl displacements,
//! lifting of symplectic paths, and path-translation phases.
//!
//! `compose_generators(g, g2)` represents `g` applied after `g2`, i.e. the
//! operator product `S_W S_W'`, whose projection is `S_W * S_W'`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isotopy::SampledIsotopy;
use crate::linalg::{
    cumulative_simpson, inertia, max_abs, rinv, symmetry_defect, CMat, RMat, I,
};
use crate::symplectic::{matrix_from_rows, matrix_rows, sigma, PhasePoint, SymplecticMatrix};

pub const FREE_TOL: f64 = 1e-10;

/// Free generator `W(x,x') = 1/2 P x.x - L x.x' + 1/2 Q x'.x'` with Maslov index `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaplecticGenerator {
    p: RMat,
    l: RMat,
    q: RMat,
    m: u8,
    hbar: f64,
}

#[derive(Serialize, Deserialize)]
struct GeneratorJson {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    m: i64,
    #[serde(default = "one")]
    hbar: f64,
}

fn one() -> f64 {
    1.0
}

impl MetaplecticGenerator {
    pub fn new(p: RMat, l: RMat, q: RMat, m: i64, hbar: f64) -> Result<Self> {
        let n = l.nrows();
        for (name, a) in [("P", &p), ("L", &l), ("Q", &q)] {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidGenerator(format!("{name} must be {n}x{n}")));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGenerator(format!("{name} has non-finite entries")));
            }
        }
        if symmetry_defect(&p) > 1e-12 || symmetry_defect(&q) > 1e-12 {
            return Err(Error::InvalidGenerator("P and Q must be symmetric".into()));
        }
        if l.determinant().abs() <= 1e-12 {
            return Err(Error::InvalidGenerator("L must be invertible".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidGenerator(format!("hbar must be positive, got {hbar}")));
        }
        Ok(MetaplecticGenerator {
            p,
            l,
            q,
            m: m.rem_euclid(4) as u8,
            hbar,
        })
    }

    /// One-dimensional generator from scalars.
    pub fn scalar(p: f64, l: f64, q: f64, m: i64, hbar: f64) -> Result<Self> {
        let s = |v| RMat::from_element(1, 1, v);
        Self::new(s(p), s(l), s(q), m, hbar)
    }

    /// `(0, I, 0, m)`: the Fourier transform up to `i^m`.
    pub fn fourier(n: usize, m: i64, hbar: f64) -> Self {
        Self::new(RMat::zeros(n, n), RMat::identity(n, n), RMat::zeros(n, n), m, hbar)
            .expect("valid")
    }

    /// Harmonic oscillator propagator at time `t` (`sin t != 0`).
    pub fn harmonic(t: f64, m: i64, hbar: f64) -> Result<Self> {
        let s = t.sin();
        if s.abs() <= FREE_TOL {
            return Err(Error::NotFree(s.abs()));
        }
        Self::scalar(t.cos() / s, 1.0 / s, t.cos() / s, m, hbar)
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn p(&self) -> &RMat {
        &self.p
    }

    pub fn l(&self) -> &RMat {
        &self.l
    }

    pub fn q(&self) -> &RMat {
        &self.q
    }

    pub fn maslov(&self) -> u8 {
        self.m
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn with_maslov(&self, m: i64) -> Self {
        let mut g = self.clone();
        g.m = m.rem_euclid(4) as u8;
        g
    }

    /// `W(x, x')` for `n = 1` (first components otherwise ignored).
    pub fn w(&self, x: &[f64], xp: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let y = DVector::from_column_slice(xp);
        0.5 * (&self.p * &x).dot(&x) - (&self.l * &x).dot(&y) + 0.5 * (&self.q * &y).dot(&y)
    }

    /// `Delta_m(W) = i^m sqrt|det L|`.
    pub fn delta(&self) -> Complex64 {
        I.powu(self.m as u32) * self.l.determinant().abs().sqrt()
    }

    pub fn to_json(&self) -> String {
        let doc = GeneratorJson {
            p: matrix_rows(&self.p),
            l: matrix_rows(&self.l),
            q: matrix_rows(&self.q),
            m: self.m as i64,
            hbar: self.hbar,
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GeneratorJson = serde_json::from_str(s)
            .map_err(|e| Error::InvalidGenerator(format!("generator json: {e}")))?;
        Self::new(
            matrix_from_rows(&doc.p)?,
            matrix_from_rows(&doc.l)?,
            matrix_from_rows(&doc.q)?,
            doc.m,
            doc.hbar,
        )
    }
}

/// `S_W = [[L^{-1} Q, L^{-1}], [P L^{-1} Q - L^T, P L^{-1}]]`.
pub fn project_generator(g: &MetaplecticGenerator) -> SymplecticMatrix {
    let li = rinv(g.l()).expect("L invertible by construction");
    let a = &li * g.q();
    let c = g.p() * &li * g.q() - g.l().transpose();
    let d = g.p() * &li;
    SymplecticMatrix::from_blocks(&a, &li, &c, &d)
        .unwrap_or_else(|_| SymplecticMatrix::new_unchecked(RMat::identity(2 * g.n(), 2 * g.n())))
}

/// `P = D B^{-1}`, `L = B^{-1}`, `Q = B^{-1} A` for a free matrix.
pub fn generating_from_matrix(s: &SymplecticMatrix, m: i64, hbar: f64) -> Result<MetaplecticGenerator> {
    let b = s.b();
    let det = b.determinant();
    if det.abs() <= FREE_TOL {
        return Err(Error::NotFree(det.abs()));
    }
    let bi = rinv(&b).ok_or(Error::NotFree(det.abs()))?;
    let p = crate::linalg::symmetrize(&(s.d() * &bi));
    let q = crate::linalg::symmetrize(&(&bi * s.a()));
    MetaplecticGenerator::new(p, bi, q, m, hbar)
}

/// `g` after `g2`: `P'' = P - L^T K^{-1} L`, `L'' = L' K^{-1} L`,
/// `Q'' = Q' - L' K^{-1} L'^T`, `m'' = m + m' - Inert(K)` with `K = P' + Q`.
pub fn compose_generators(
    g: &MetaplecticGenerator,
    g2: &MetaplecticGenerator,
) -> Result<MetaplecticGenerator> {
    if g.n() != g2.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: g2.n(),
        });
    }
    if (g.hbar - g2.hbar).abs() > 1e-15 * g.hbar {
        return Err(Error::InvalidGenerator("generators use different hbar".into()));
    }
    let k = g2.p() + g.q();
    let det = k.determinant();
    let scale = max_abs(&k).max(1.0).powi(g.n() as i32);
    if det.abs() <= FREE_TOL * scale {
        return Err(Error::NotComposableAsFree(det.abs()));
    }
    let ki = rinv(&k).ok_or(Error::NotComposableAsFree(det.abs()))?;
    let p = crate::linalg::symmetrize(&(g.p() - g.l().transpose() * &ki * g.l()));
    let l = g2.l() * &ki * g.l();
    let q = crate::linalg::symmetrize(&(g2.q() - g2.l() * &ki * g2.l().transpose()));
    let m = g.m as i64 + g2.m as i64 - inertia(&k) as i64;
    MetaplecticGenerator::new(p, l, q, m, g.hbar).map_err(|e| match e {
        Error::InvalidGenerator(_) => Error::NotComposableAsFree(det.abs()),
        other => other,
    })
}

/// `W'(x,x') = -W(x',x)`, i.e. `(P', L', Q') = (-Q, -L^T, -P)`, and `m' = n - m`.
pub fn invert_generator(g: &MetaplecticGenerator) -> MetaplecticGenerator {
    MetaplecticGenerator {
        p: -g.q.clone(),
        l: -g.l.transpose(),
        q: -g.p.clone(),
        m: (g.n() as i64 - g.m as i64).rem_euclid(4) as u8,
        hbar: g.hbar,
    }
}

/// Ordered product `g_0 g_1 ... g_k` (rightmost acts first).
#[derive(Clone, Debug)]
pub struct MetaplecticWord {
    generators: Vec<MetaplecticGenerator>,
    projection: SymplecticMatrix,
}

impl MetaplecticWord {
    pub fn new(generators: Vec<MetaplecticGenerator>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidGenerator("empty word".into()))?;
        let n = first.n();
        let mut projection = SymplecticMatrix::identity(n);
        for g in &generators {
            if g.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: g.n(),
                });
            }
            projection = projection.compose(&project_generator(g));
        }
        Ok(MetaplecticWord {
            generators,
            projection,
        })
    }

    pub fn generators(&self) -> &[MetaplecticGenerator] {
        &self.generators
    }

    pub fn projection(&self) -> &SymplecticMatrix {
        &self.projection
    }

    /// Fold the word into a single generator when every partial product is free.
    pub fn collapse(&self) -> Result<MetaplecticGenerator> {
        let mut acc = self.generators[0].clone();
        for g in &self.generators[1..] {
            acc = compose_generators(&acc, g)?;
        }
        Ok(acc)
    }

    pub fn apply(&self, psi: &GridWavefunction, backend: Backend) -> Result<GridWavefunction> {
        let mut out = psi.clone();
        for g in self.generators.iter().rev() {
            out = apply_generator_to_grid(g, &out, backend)?;
        }
        Ok(out)
    }
}

/// Block rotation `[[cos t I, sin t I], [-sin t I, cos t I]]`.
pub fn rotation_n(n: usize, t: f64) -> SymplecticMatrix {
    let id = RMat::identity(n, n);
    SymplecticMatrix::from_blocks(&(&id * t.cos()), &(&id * t.sin()), &(&id * -t.sin()), &(&id * t.cos()))
        .expect("rotation is symplectic")
}

/// Two free factors `(S R(-theta), R(theta))` with product `S`; tries
/// `theta = pi/2` first, then a fixed list of other angles.
pub fn factor_free(s: &SymplecticMatrix, hbar: f64) -> Result<MetaplecticWord> {
    let n = s.n();
    let mut candidates = vec![PI / 2.0];
    for k in 1..=24 {
        candidates.push(PI / 2.0 - k as f64 * PI / 50.0);
        candidates.push(PI / 2.0 + k as f64 * PI / 50.0);
    }
    for theta in candidates {
        let right = rotation_n(n, theta);
        let left = s.compose(&rotation_n(n, -theta));
        let (Ok(gl), Ok(gr)) = (
            generating_from_matrix(&left, 0, hbar),
            generating_from_matrix(&right, 0, hbar),
        ) else {
            continue;
        };
        let word = MetaplecticWord::new(vec![gl, gr])?;
        if max_abs(&(word.projection().matrix() - s.matrix())) <= 1e-8 {
            return Ok(word);
        }
    }
    Err(Error::FactorSearchFailed)
}

/// Geometry of a one-dimensional position grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveGrid {
    pub len: usize,
    pub x_min: f64,
    pub dx: f64,
    pub hbar: f64,
}

impl WaveGrid {
    pub fn new(len: usize, x_min: f64, dx: f64, hbar: f64) -> Result<Self> {
        if len < MIN_GRID {
            return Err(Error::Invalid(format!("grid needs at least {MIN_GRID} samples, got {len}")));
        }
        if !(dx > 0.0 && dx.is_finite()) || !x_min.is_finite() {
            return Err(Error::Invalid("grid spacing must be positive and finite".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Invalid(format!("hbar must be positive, got {hbar}")));
        }
        Ok(WaveGrid { len, x_min, dx, hbar })
    }

    /// `len` points on `[-x_max, x_max)`.
    pub fn centered(len: usize, x_max: f64, hbar: f64) -> Result<Self> {
        Self::new(len, -x_max, 2.0 * x_max / len as f64, hbar)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.x(j)).collect()
    }

    pub fn sample<F: Fn(f64) -> Complex64>(&self, f: F) -> Result<GridWavefunction> {
        GridWavefunction::from_fn(self.len, self.x_min, self.dx, self.hbar, f)
    }

    pub fn approx_eq(&self, other: &WaveGrid) -> bool {
        self.len == other.len
            && (self.x_min - other.x_min).abs() <= 1e-12 * self.dx
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
            && self.hbar == other.hbar
    }
}

/// Samples `psi(x_min + j dx)`, `j = 0..N`, for one degree of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWavefunction {
    samples: Vec<Complex64>,
    x_min: f64,
    dx: f64,
    hbar: f64,
}

#[derive(Serialize, Deserialize)]
struct WaveHeader {
    n: usize,
    #[serde(rename = "N")]
    len: usize,
    x_min: f64,
    dx: f64,
    hbar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    re: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<f64>>,
}

pub const MIN_GRID: usize = 8;

impl GridWavefunction {
    pub fn new(samples: Vec<Complex64>, x_min: f64, dx: f64, hbar: f64) -> Result<Self> {
        if samples.len() < MIN_GRID {
            return Err(Error::Invalid(format!(
                "grid needs at least {MIN_GRID} samples, got {}",
                samples.len()
            )));
        }
        if !(dx > 0.0 && dx.is_finite()) || !x_min.is_finite() {
            return Err(Error::Invalid("grid spacing must be positive and finite".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Invalid(format!("hbar must be positive, got {hbar}")));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("wavefunction samples"));
        }
        Ok(GridWavefunction {
            samples,
            x_min,
            dx,
            hbar,
        })
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(
        len: usize,
        x_min: f64,
        dx: f64,
        hbar: f64,
        f: F,
    ) -> Result<Self> {
        let samples = (0..len).map(|j| f(x_min + j as f64 * dx)).collect();
        Self::new(samples, x_min, dx, hbar)
    }

    /// Symmetric grid on `[-x_max, x_max)` with `len` points.
    pub fn centered<F: Fn(f64) -> Complex64>(len: usize, x_max: f64, hbar: f64, f: F) -> Result<Self> {
        let dx = 2.0 * x_max / len as f64;
        Self::from_fn(len, -x_max, dx, hbar, f)
    }

    /// Normalized `(pi hbar)^{-1/4} exp(-(x - x0)^2 / 2 hbar + i p0 x / hbar)`.
    pub fn coherent(len: usize, x_max: f64, hbar: f64, x0: f64, p0: f64) -> Result<Self> {
        let c = (PI * hbar).powf(-0.25);
        Self::centered(len, x_max, hbar, |x| {
            Complex64::from_polar(c * (-(x - x0).powi(2) / (2.0 * hbar)).exp(), p0 * x / hbar)
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> WaveGrid {
        WaveGrid {
            len: self.len(),
            x_min: self.x_min,
            dx: self.dx,
            hbar: self.hbar,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }

    pub fn x_max_abs(&self) -> f64 {
        self.x_min.abs().max(self.x(self.len() - 1).abs())
    }

    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.x_min, self.dx, self.hbar)
    }

    pub fn same_grid(&self, other: &GridWavefunction) -> bool {
        self.grid().approx_eq(&other.grid())
    }

    fn require_same_grid(&self, other: &GridWavefunction) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch(
                "wavefunctions live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// `dx sum |psi_j|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.dx * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `dx sum conj(self_j) other_j`.
    pub fn inner(&self, other: &GridWavefunction) -> Result<Complex64> {
        self.require_same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.dx)
    }

    pub fn l2_distance(&self, other: &GridWavefunction) -> Result<f64> {
        self.require_same_grid(other)?;
        Ok((self.dx
            * self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>())
        .sqrt())
    }

    pub fn scaled(&self, c: Complex64) -> GridWavefunction {
        GridWavefunction {
            samples: self.samples.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }

    pub fn normalized(&self) -> GridWavefunction {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    /// Larger edge magnitude relative to the peak.
    pub fn edge_magnitude(&self) -> f64 {
        let peak = self.samples.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        if peak == 0.0 {
            return 0.0;
        }
        let edge = self.samples[0].norm().max(self.samples[self.len() - 1].norm());
        edge / peak
    }

    pub fn check_edge_decay(&self, tol: f64) -> Result<()> {
        let e = self.edge_magnitude();
        if e > tol {
            return Err(Error::EdgeDecay(e));
        }
        Ok(())
    }

    fn header(&self, with_data: bool) -> WaveHeader {
        WaveHeader {
            n: 1,
            len: self.len(),
            x_min: self.x_min,
            dx: self.dx,
            hbar: self.hbar,
            re: with_data.then(|| self.samples.iter().map(|z| z.re).collect()),
            im: with_data.then(|| self.samples.iter().map(|z| z.im).collect()),
        }
    }

    /// JSON header line followed by `x,re,im` CSV rows.
    pub fn to_csv_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header(false)).expect("serializable");
        out.push_str("\nx,re,im\n");
        for (j, z) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:e},{:e},{:e}\n", self.x(j), z.re, z.im));
        }
        out
    }

    /// Single JSON document carrying the samples as `re`/`im` arrays.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.header(true)).expect("serializable")
    }

    /// Reads either format produced by [`Self::to_csv_text`] or [`Self::to_json`].
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim_start();
        let (first, rest) = match text.split_once('\n') {
            Some((a, b)) => (a, b),
            None => (text, ""),
        };
        let whole: std::result::Result<WaveHeader, _> = serde_json::from_str(text);
        let header: WaveHeader = match whole {
            Ok(h) => h,
            Err(_) => serde_json::from_str(first)
                .map_err(|e| Error::Invalid(format!("wavefunction header: {e}")))?,
        };
        if header.n != 1 {
            return Err(Error::Invalid("only one-dimensional wavefunctions are supported".into()));
        }
        let samples: Vec<Complex64> = if let (Some(re), Some(im)) = (&header.re, &header.im) {
            if re.len() != im.len() {
                return Err(Error::Invalid("re and im lengths differ".into()));
            }
            re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect()
        } else {
            let mut v = Vec::with_capacity(header.len);
            for line in rest.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('x') {
                    continue;
                }
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 3 {
                    return Err(Error::Invalid(format!("bad wavefunction row: {line}")));
                }
                let num = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Invalid(format!("bad number {s}: {e}")))
                };
                v.push(Complex64::new(num(cols[1])?, num(cols[2])?));
            }
            v
        };
        if samples.len() != header.len {
            return Err(Error::Invalid(format!(
                "header declares N = {} but {} samples were read",
                header.len,
                samples.len()
            )));
        }
        Self::new(samples, header.x_min, header.dx, header.hbar)
    }
}

/// Grid backends for [`apply_generator_to_grid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Trapezoidal quadrature, `O(N^2)`.
    Direct,
    /// Chirp, scaled Fourier sum (Bluestein), chirp: `O(N log N)`.
    Chirp,
}

fn trapezoid_weights(len: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![dx; len];
    w[0] *= 0.5;
    w[len - 1] *= 0.5;
    w
}

fn check_generator_grid(g: &MetaplecticGenerator, psi: &GridWavefunction) -> Result<()> {
    if g.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: g.n(),
        });
    }
    if (g.hbar() - psi.hbar()).abs() > 1e-15 * g.hbar() {
        return Err(Error::GridMismatch("generator and wavefunction use different hbar".into()));
    }
    Ok(())
}

/// Chirp-resolution check: `|P| x_max dx / hbar` and `|Q| x_max dx / hbar` must not exceed pi.
pub fn aliasing_check(g: &MetaplecticGenerator, psi: &GridWavefunction) -> Result<()> {
    let xm = psi.x_max_abs();
    for (which, c) in [("|P| x_max dx / hbar", g.p()[(0, 0)]), ("|Q| x_max dx / hbar", g.q()[(0, 0)])] {
        let value = c.abs() * xm * psi.dx() / psi.hbar();
        if value > PI {
            return Err(Error::AliasingRisk { which, value });
        }
    }
    Ok(())
}

/// `(2 pi i hbar)^{-1/2} i^m sqrt|L| int exp(i W(x,x') / hbar) psi(x') dx'`
/// on the input grid (`n = 1`).
pub fn apply_generator_to_grid(
    g: &MetaplecticGenerator,
    psi: &GridWavefunction,
    backend: Backend,
) -> Result<GridWavefunction> {
    check_generator_grid(g, psi)?;
    aliasing_check(g, psi)?;
    let hbar = psi.hbar();
    let (p, l, q) = (g.p()[(0, 0)], g.l()[(0, 0)], g.q()[(0, 0)]);
    let pref = Complex64::from_polar((2.0 * PI * hbar).powf(-0.5), -PI / 4.0) * g.delta();
    let w = trapezoid_weights(psi.len(), psi.dx());
    let xs = psi.xs();
    // input chirp and quadrature weights
    let pre: Vec<Complex64> = psi
        .samples()
        .iter()
        .zip(&xs)
        .zip(&w)
        .map(|((z, &x), &wk)| z * Complex64::from_polar(wk, q * x * x / (2.0 * hbar)))
        .collect();
    let sums: Vec<Complex64> = match backend {
        Backend::Direct => xs
            .par_iter()
            .map(|&x| {
                pre.iter()
                    .zip(&xs)
                    .map(|(a, &y)| a * Complex64::from_polar(1.0, -l * x * y / hbar))
                    .sum()
            })
            .collect(),
        Backend::Chirp => scaled_fourier_sum(&pre, psi.x_min(), psi.dx(), l / hbar),
    };
    let out = sums
        .into_iter()
        .zip(&xs)
        .map(|(s, &x)| pref * s * Complex64::from_polar(1.0, p * x * x / (2.0 * hbar)))
        .collect();
    psi.with_samples(out)
}

/// `c_j = sum_k a_k exp(-i beta x_j x_k)` on the grid `x_j = x0 + j dx`,
/// via the identity `jk = (j^2 + k^2 - (k - j)^2) / 2` and one FFT convolution.
pub fn scaled_fourier_sum(a: &[Complex64], x0: f64, dx: f64, beta: f64) -> Vec<Complex64> {
    let n = a.len();
    let alpha = beta * dx * dx;
    // exp(-i beta (x0^2 + x0 dx (j + k) + dx^2 j k))
    let lin = |j: usize| Complex64::from_polar(1.0, -beta * x0 * dx * j as f64);
    let quad = |j: f64| Complex64::from_polar(1.0, -0.5 * alpha * j * j);
    let size = (2 * n - 1).next_power_of_two();
    let mut u = vec![Complex64::new(0.0, 0.0); size];
    for (k, ak) in a.iter().enumerate() {
        u[k] = ak * lin(k) * quad(k as f64);
    }
    // kernel exp(i alpha m^2 / 2), m = k - j in -(n-1)..=(n-1), stored circularly
    let mut v = vec![Complex64::new(0.0, 0.0); size];
    for m in 0..n {
        let c = quad(m as f64).conj();
        v[m] = c;
        if m > 0 {
            v[size - m] = c;
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    fwd.process(&mut u);
    fwd.process(&mut v);
    // v is even in m, so sum_k u_k v_{k-j} is an ordinary convolution
    let mut c: Vec<Complex64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
    inv.process(&mut c);
    let scale = 1.0 / size as f64;
    let x0sq = Complex64::from_polar(1.0, -beta * x0 * x0);
    (0..n)
        .map(|j| c[j] * scale * lin(j) * quad(j as f64) * x0sq)
        .collect()
}

/// `T(z0)` with an extra Schrodinger-representation phase `exp(i t0 / hbar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergWeylOp {
    pub z0: PhasePoint,
    pub extra_phase: f64,
    pub hbar: f64,
}

impl HeisenbergWeylOp {
    pub fn new(z0: PhasePoint, hbar: f64) -> Self {
        HeisenbergWeylOp {
            z0,
            extra_phase: 0.0,
            hbar,
        }
    }

    pub fn with_phase(mut self, t0: f64) -> Self {
        self.extra_phase = t0;
        self
    }
}

/// `exp(i t0/hbar) exp(i (p0 x - p0 x0 / 2) / hbar) psi(x - x0)`.
/// Lattice shifts move samples (vacated samples are zero); with
/// `interpolate` an off-lattice shift is applied spectrally (periodic).
pub fn hw_translate(
    op: &HeisenbergWeylOp,
    psi: &GridWavefunction,
    interpolate: bool,
) -> Result<GridWavefunction> {
    if op.z0.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: op.z0.dim(),
        });
    }
    if (op.hbar - psi.hbar()).abs() > 1e-15 * op.hbar {
        return Err(Error::GridMismatch("operator and wavefunction use different hbar".into()));
    }
    let (x0, p0) = (op.z0.as_slice()[0], op.z0.as_slice()[1]);
    let hbar = psi.hbar();
    let ratio = x0 / psi.dx();
    let k = ratio.round();
    let shifted: Vec<Complex64> = if (ratio - k).abs() <= 1e-9 {
        let k = k as i64;
        let len = psi.len() as i64;
        (0..len)
            .map(|j| {
                let src = j - k;
                if (0..len).contains(&src) {
                    psi.samples()[src as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    } else if interpolate {
        spectral_shift(psi.samples(), psi.dx(), x0)
    } else {
        return Err(Error::OffLattice(x0));
    };
    let global = op.extra_phase / hbar;
    let out = shifted
        .into_iter()
        .enumerate()
        .map(|(j, z)| {
            let x = psi.x(j);
            z * Complex64::from_polar(1.0, (p0 * x - 0.5 * p0 * x0) / hbar + global)
        })
        .collect();
    psi.with_samples(out)
}

fn spectral_shift(samples: &[Complex64], dx: f64, x0: f64) -> Vec<Complex64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = samples.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, b) in buf.iter_mut().enumerate() {
        let jj = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let k = 2.0 * PI * jj / (n as f64 * dx);
        *b *= Complex64::from_polar(1.0 / n as f64, -k * x0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Lift of a linear symplectic path, tracked through its action on the
/// Gaussian `exp(i Gamma0 x.x / 2 hbar)`, `Gamma0 = i I`.
#[derive(Clone, Debug)]
pub struct MetaplecticPath {
    pub times: Vec<f64>,
    pub matrices: Vec<SymplecticMatrix>,
    /// `Gamma(t) = (C + D Gamma0)(A + B Gamma0)^{-1}`.
    pub gammas: Vec<CMat>,
    /// Continuous branch of `det(A + B Gamma0)^{-1/2}`.
    pub amplitudes: Vec<Complex64>,
    /// Maslov index at free times; at non-free times, the value of the
    /// last free time before it (0 before the first).
    pub maslov: Vec<u8>,
    pub free: Vec<bool>,
}

/// Largest accepted change of `arg det(A + B Gamma0)` between samples.
/// The amplitude phase is half of it, so a step of `pi/2` there would
/// already alias and could not be detected after the fact.
pub const MAX_PHASE_STEP: f64 = PI / 2.0;

impl MetaplecticPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(P, L, Q, m(t))` at a free sample.
    pub fn generator(&self, i: usize, hbar: f64) -> Result<MetaplecticGenerator> {
        generating_from_matrix(&self.matrices[i], self.maslov[i] as i64, hbar)
    }

    pub fn final_amplitude(&self) -> Complex64 {
        *self.amplitudes.last().expect("non-empty")
    }
}

fn complex_det(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

/// Free-generator Gaussian factor `e^{-i pi n/4} sqrt|det L| prod (1 - i lambda_k)^{-1/2}`,
/// the value of `c` the generator with `m = 0` produces on the reference Gaussian.
fn reference_amplitude(g: &MetaplecticGenerator) -> Complex64 {
    let n = g.n();
    let eig = crate::linalg::symmetrize(g.q()).symmetric_eigen();
    let mut c = Complex64::from_polar(g.l().determinant().abs().sqrt(), -PI * n as f64 / 4.0);
    for lam in eig.eigenvalues.iter() {
        c /= Complex64::new(1.0, -lam).sqrt();
    }
    c
}

/// Maslov index `m` making `(P, L, Q, m)` act on the reference Gaussian
/// with amplitude `c`.
pub fn maslov_from_amplitude(g: &MetaplecticGenerator, c: Complex64) -> u8 {
    let ratio = c / reference_amplitude(g);
    let k = (ratio.arg() / (PI / 2.0)).round() as i64;
    k.rem_euclid(4) as u8
}

pub fn lift_isotopy(iso: &SampledIsotopy) -> Result<MetaplecticPath> {
    if !iso.is_linear() {
        return Err(Error::Invalid("lift_isotopy requires a linear isotopy".into()));
    }
    let n = iso.n();
    let gamma0 = CMat::identity(n, n) * I;
    let to_c = crate::linalg::to_complex;
    let mut gammas = Vec::with_capacity(iso.len());
    let mut amps: Vec<Complex64> = Vec::with_capacity(iso.len());
    let mut maslov = Vec::with_capacity(iso.len());
    let mut free = Vec::with_capacity(iso.len());
    let mut phase = 0.0_f64;
    let mut prev_arg = 0.0_f64;
    let mut held = 0u8;
    for (k, (t, s)) in iso.times().iter().zip(iso.matrices()).enumerate() {
        let a = to_c(&s.a()) + to_c(&s.b()) * &gamma0;
        let cpart = to_c(&s.c()) + to_c(&s.d()) * &gamma0;
        let det = complex_det(&a);
        if det.norm() == 0.0 || !det.norm().is_finite() {
            return Err(Error::NonFinite("det(A + B Gamma0)"));
        }
        let ainv = a
            .clone()
            .try_inverse()
            .ok_or(Error::NonFinite("(A + B Gamma0)^{-1}"))?;
        gammas.push(cpart * ainv);
        // unwrap arg det continuously; amplitude phase is -arg/2
        let arg = det.arg();
        if k > 0 {
            let mut step = arg - prev_arg;
            step -= 2.0 * PI * (step / (2.0 * PI)).round();
            if step.abs() >= MAX_PHASE_STEP {
                return Err(Error::PhaseJump {
                    t: *t,
                    jump: step.abs() / 2.0,
                });
            }
            phase += step;
        } else {
            phase = arg;
        }
        prev_arg = arg;
        let amp = Complex64::from_polar(det.norm().powf(-0.5), -0.5 * phase);
        amps.push(amp);
        match generating_from_matrix(s, 0, 1.0) {
            Ok(g) => {
                held = maslov_from_amplitude(&g, amp);
                maslov.push(held);
                free.push(true);
            }
            Err(_) => {
                maslov.push(held);
                free.push(false);
            }
        }
    }
    Ok(MetaplecticPath {
        times: iso.times().to_vec(),
        matrices: iso.matrices().to_vec(),
        gammas,
        amplitudes: amps,
        maslov,
        free,
    })
}

/// Phase and displacement along a phase-space path.
#[derive(Clone, Debug)]
pub struct PathTranslation {
    pub times: Vec<f64>,
    /// `chi(t) = -1/2 int_0^t sigma(z, zdot)`.
    pub chi: Vec<f64>,
    pub ops: Vec<HeisenbergWeylOp>,
    /// `chi(T)` when the path closes, equal to `-oint p dx`.
    pub loop_phase: Option<f64>,
}

/// Five-point centered differences inside, three-point stencils next to the ends.
pub fn path_velocity(path: &[PhasePoint], dt: f64) -> Vec<DVector<f64>> {
    let n = path.len();
    (0..n)
        .map(|k| {
            let z = |i: usize| path[i].vector();
            if k >= 2 && k + 2 < n {
                (z(k - 2) - z(k - 1) * 8.0 + z(k + 1) * 8.0 - z(k + 2)) / (12.0 * dt)
            } else if k == 0 {
                (z(0) * -3.0 + z(1) * 4.0 - z(2)) / (2.0 * dt)
            } else if k == n - 1 {
                (z(n - 1) * 3.0 - z(n - 2) * 4.0 + z(n - 3)) / (2.0 * dt)
            } else {
                (z(k + 1) - z(k - 1)) / (2.0 * dt)
            }
        })
        .collect()
}

pub fn translate_along_path(
    times: &[f64],
    path: &[PhasePoint],
    hbar: f64,
) -> Result<PathTranslation> {
    if path.len() < 3 || times.len() != path.len() {
        return Err(Error::Invalid(
            "path translation needs at least 3 samples with matching times".into(),
        ));
    }
    let dt = times[1] - times[0];
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs())
    {
        return Err(Error::Invalid("path translation needs a uniform time grid".into()));
    }
    let vel = path_velocity(path, dt);
    let integrand: Vec<f64> = path
        .iter()
        .zip(&vel)
        .map(|(z, v)| -0.5 * sigma(z.as_slice(), v.as_slice()))
        .collect();
    let chi = cumulative_simpson(&integrand, dt);
    let closes = (path[0].vector() - path[path.len() - 1].vector()).norm()
        <= 1e-9 * path[0].vector().norm().max(1.0);
    let loop_phase = closes.then(|| *chi.last().expect("non-empty"));
    let ops = path
        .iter()
        .map(|z| HeisenbergWeylOp::new(z.clone(), hbar))
        .collect();
    Ok(PathTranslation {
        times: times.to_vec(),
        chi,
        ops,
        loop_phase,
    })
}
