//! Classical isotopies: integrating linear and affine Hamiltonian flows,
//! recovering the Hamiltonian of a given path, and the algebra of flows
//! (factorization `f^{H0+H1} = f^{H0} f^{H1^t}`, `H # K`, `H-bar`, concatenation).

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cumulative_simpson, gauss_legendre_unit, j_matrix, max_abs, symmetrize, RMat};
use crate::symplectic::{
    hamiltonian_vector_field, j_apply, matrix_from_rows, matrix_rows, sigma, symplectic_residual,
    HamiltonianField, PhasePoint, SymplecticMatrix,
};

/// Residual tolerance every integrated matrix must meet.
pub const FLOW_SYMPLECTIC_TOL: f64 = 1e-6;

type MatFn = dyn Fn(f64) -> RMat + Send + Sync;
type VecFn = dyn Fn(f64) -> DVector<f64> + Send + Sync;

/// `H(z, t) = 1/2 M(t) z . z + m(t) . z`.
#[derive(Clone)]
pub struct QuadraticHamiltonian {
    n: usize,
    m: Arc<MatFn>,
    linear: Option<Arc<VecFn>>,
}

impl fmt::Debug for QuadraticHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticHamiltonian")
            .field("n", &self.n)
            .field("M(0)", &(self.m)(0.0))
            .field("inhomogeneous", &self.linear.is_some())
            .finish()
    }
}

impl QuadraticHamiltonian {
    pub fn new<F>(n: usize, m: F) -> Self
    where
        F: Fn(f64) -> RMat + Send + Sync + 'static,
    {
        QuadraticHamiltonian {
            n,
            m: Arc::new(m),
            linear: None,
        }
    }

    pub fn constant(m: RMat) -> Self {
        let n = m.nrows() / 2;
        Self::new(n, move |_| m.clone())
    }

    pub fn with_linear<F>(mut self, m: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.linear = Some(Arc::new(m));
        self
    }

    /// `(p^2 + x^2)/2`.
    pub fn harmonic() -> Self {
        Self::constant(RMat::identity(2, 2))
    }

    /// `p^2/2`.
    pub fn free() -> Self {
        Self::constant(RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]))
    }

    /// `x^2/2`.
    pub fn position_square() -> Self {
        Self::constant(RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(RMat::zeros(2 * n, 2 * n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self, t: f64) -> RMat {
        (self.m)(t)
    }

    pub fn linear(&self, t: f64) -> DVector<f64> {
        match &self.linear {
            Some(l) => l(t),
            None => DVector::zeros(2 * self.n),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.linear.is_none()
    }

    pub fn homogeneous(&self) -> QuadraticHamiltonian {
        QuadraticHamiltonian {
            n: self.n,
            m: self.m.clone(),
            linear: None,
        }
    }

    pub fn field(&self) -> HamiltonianField {
        let this = self.clone();
        let this2 = self.clone();
        HamiltonianField::from_fn(2 * self.n, move |z, t| {
            let z = DVector::from_column_slice(z);
            0.5 * (this.matrix(t) * &z).dot(&z) + this.linear(t).dot(&z)
        })
        .with_gradient(move |z, t| {
            let z = DVector::from_column_slice(z);
            (this2.matrix(t) * z + this2.linear(t)).as_slice().to_vec()
        })
    }

    /// `H o S_t` where `S_t` is itself given as a function of time.
    pub fn conjugated_by<F>(&self, s: F) -> QuadraticHamiltonian
    where
        F: Fn(f64) -> RMat + Send + Sync + 'static,
    {
        let inner = self.clone();
        let s = Arc::new(s);
        let s2 = s.clone();
        let inner2 = self.clone();
        let mut out = QuadraticHamiltonian::new(self.n, move |t| {
            let st = s(t);
            st.transpose() * inner.matrix(t) * st
        });
        if self.linear.is_some() {
            out = out.with_linear(move |t| s2(t).transpose() * inner2.linear(t));
        }
        out
    }

    fn check_symmetric(&self, t: f64) -> Result<()> {
        let m = self.matrix(t);
        let defect = max_abs(&(&m - m.transpose()));
        if defect > 1e-12 {
            return Err(Error::NotSymmetric(defect));
        }
        Ok(())
    }
}

/// Affine symplectic map `z -> S z + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: RMat,
    pub shift: DVector<f64>,
}

impl AffineMap {
    pub fn linear(m: RMat) -> Self {
        let d = m.nrows();
        AffineMap {
            matrix: m,
            shift: DVector::zeros(d),
        }
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z + &self.shift
    }

    /// `self o other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            matrix: &self.matrix * &other.matrix,
            shift: &self.matrix * &other.shift + &self.shift,
        }
    }

    pub fn inverse(&self) -> AffineMap {
        let inv = SymplecticMatrix::new_unchecked(self.matrix.clone()).inverse().into_matrix();
        let shift = -(&inv * &self.shift);
        AffineMap { matrix: inv, shift }
    }

    pub fn distance(&self, other: &AffineMap) -> f64 {
        max_abs(&(&self.matrix - &other.matrix)).max(
            (&self.shift - &other.shift)
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs())),
        )
    }
}

/// A sampled symplectic isotopy `f_t(z) = S_t (z + z_t)`, with `f_0 = I`.
#[derive(Clone, Debug)]
pub struct SampledIsotopy {
    times: Vec<f64>,
    matrices: Vec<SymplecticMatrix>,
    translations: Vec<PhasePoint>,
}

#[derive(Serialize, Deserialize)]
struct IsotopyJson {
    times: Vec<f64>,
    matrices: Vec<Vec<Vec<f64>>>,
    translations: Vec<Vec<f64>>,
}

impl SampledIsotopy {
    pub fn new(times: Vec<f64>, matrices: Vec<SymplecticMatrix>) -> Result<Self> {
        let n = matrices.first().map_or(1, |m| m.n());
        let translations = vec![PhasePoint::zeros(n); matrices.len()];
        Self::with_translations(times, matrices, translations)
    }

    pub fn with_translations(
        times: Vec<f64>,
        matrices: Vec<SymplecticMatrix>,
        translations: Vec<PhasePoint>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != matrices.len() || times.len() != translations.len() {
            return Err(Error::Invalid(
                "times, matrices and translations must have equal nonzero length".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::Invalid("isotopy grid must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("isotopy times must be strictly increasing".into()));
        }
        let n = matrices[0].n();
        if max_abs(&(matrices[0].matrix() - RMat::identity(2 * n, 2 * n))) > 1e-12
            || translations[0].as_slice().iter().any(|v| v.abs() > 1e-12)
        {
            return Err(Error::Invalid("isotopy must start at the identity".into()));
        }
        for (t, m) in times.iter().zip(&matrices) {
            let residual = m.residual();
            if !(residual <= FLOW_SYMPLECTIC_TOL) {
                return Err(Error::StepTooCoarse {
                    t: *t,
                    residual,
                    tol: FLOW_SYMPLECTIC_TOL,
                });
            }
        }
        Ok(SampledIsotopy {
            times,
            matrices,
            translations,
        })
    }

    /// Samples an explicit matrix path `t -> S(t)` on a grid.
    pub fn from_fn<F>(times: &[f64], f: F) -> Result<Self>
    where
        F: Fn(f64) -> RMat,
    {
        let mats = times
            .iter()
            .map(|&t| SymplecticMatrix::with_tol(f(t), 1e-8))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times.to_vec(), mats)
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn matrices(&self) -> &[SymplecticMatrix] {
        &self.matrices
    }

    pub fn translations(&self) -> &[PhasePoint] {
        &self.translations
    }

    pub fn is_linear(&self) -> bool {
        self.translations
            .iter()
            .all(|z| z.as_slice().iter().all(|v| *v == 0.0))
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// `f_{t_i}` as an affine map `z -> S z + S z_t`.
    pub fn affine(&self, i: usize) -> AffineMap {
        let s = self.matrices[i].matrix().clone();
        let shift = &s * self.translations[i].vector();
        AffineMap { matrix: s, shift }
    }

    /// Two-time map `f_{t_i, t_j} = f_{t_i} o f_{t_j}^{-1}`.
    pub fn two_time(&self, i: usize, j: usize) -> AffineMap {
        self.affine(i).compose(&self.affine(j).inverse())
    }

    /// Index of a grid time, matched to within `1e-12` relative.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let scale = self.final_time().abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * scale)
    }

    /// Cubic Lagrange interpolation of `f_t` between grid samples.
    pub fn interpolate(&self, t: f64) -> Result<AffineMap> {
        let last = self.final_time();
        let scale = last.abs().max(1.0);
        if t < -1e-12 * scale || t > last + 1e-12 * scale {
            return Err(Error::TimeOutOfRange(t));
        }
        if let Some(i) = self.index_of(t) {
            return Ok(self.affine(i));
        }
        let len = self.len();
        if len < 4 {
            // linear fallback on very short paths
            let k = self.times.partition_point(|&s| s <= t).clamp(1, len - 1);
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            let w = (t - t0) / (t1 - t0);
            let (a, b) = (self.affine(k - 1), self.affine(k));
            return Ok(AffineMap {
                matrix: a.matrix * (1.0 - w) + b.matrix * w,
                shift: a.shift * (1.0 - w) + b.shift * w,
            });
        }
        let k = self.times.partition_point(|&s| s <= t);
        let start = k.saturating_sub(2).min(len - 4);
        let idx: Vec<usize> = (start..start + 4).collect();
        let dim = 2 * self.n();
        let mut m = RMat::zeros(dim, dim);
        let mut c = DVector::zeros(dim);
        for &i in &idx {
            let mut w = 1.0;
            for &j in &idx {
                if i != j {
                    w *= (t - self.times[j]) / (self.times[i] - self.times[j]);
                }
            }
            let a = self.affine(i);
            m += a.matrix * w;
            c += a.shift * w;
        }
        Ok(AffineMap { matrix: m, shift: c })
    }

    /// Max symplectic residual per sample, for CSV export.
    pub fn residuals(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.matrices)
            .map(|(t, m)| (*t, m.residual()))
            .collect()
    }

    pub fn residuals_csv(&self) -> String {
        let mut out = String::from("t,residual\n");
        for (t, r) in self.residuals() {
            out.push_str(&format!("{t},{r:e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = IsotopyJson {
            times: self.times.clone(),
            matrices: self.matrices.iter().map(|m| matrix_rows(m.matrix())).collect(),
            translations: self
                .translations
                .iter()
                .map(|z| z.as_slice().to_vec())
                .collect(),
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: IsotopyJson =
            serde_json::from_str(s).map_err(|e| Error::Invalid(format!("isotopy json: {e}")))?;
        let matrices = doc
            .matrices
            .iter()
            .map(|rows| SymplecticMatrix::with_tol(matrix_from_rows(rows)?, FLOW_SYMPLECTIC_TOL))
            .collect::<Result<Vec<_>>>()?;
        let translations = if doc.translations.is_empty() {
            vec![PhasePoint::zeros(matrices[0].n()); matrices.len()]
        } else {
            doc.translations
                .into_iter()
                .map(PhasePoint::new)
                .collect::<Result<Vec<_>>>()?
        };
        Self::with_translations(doc.times, matrices, translations)
    }

    /// Pass every matrix through [`resymplectify`].
    pub fn resymplectified(&self) -> SampledIsotopy {
        SampledIsotopy {
            times: self.times.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|m| SymplecticMatrix::new_unchecked(resymplectify(m.matrix())))
                .collect(),
            translations: self.translations.clone(),
        }
    }
}

/// Newton iteration `S <- (S + (-J S^T J)^{-1}) / 2` toward the nearest
/// symplectic matrix; a no-op on exactly symplectic input.
pub fn resymplectify(m: &RMat) -> RMat {
    let j = j_matrix(m.nrows() / 2);
    let mut s = m.clone();
    for _ in 0..20 {
        if symplectic_residual(&s).unwrap_or(f64::INFINITY) < 1e-15 {
            break;
        }
        let sinv_est = -(&j * s.transpose() * &j);
        match sinv_est.try_inverse() {
            Some(inv) => s = (&s + inv) * 0.5,
            None => break,
        }
    }
    s
}

/// Uniform grid `0, h, ..., steps*h` with `h = t_final / steps`.
pub fn uniform_grid(t_final: f64, steps: usize) -> Vec<f64> {
    let h = t_final / steps as f64;
    (0..=steps).map(|k| k as f64 * h).collect()
}

fn rk4_matrix<F>(f: &F, t: f64, y: &RMat, h: f64) -> RMat
where
    F: Fn(f64, &RMat) -> RMat,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(Error::Invalid("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn integrate_matrix_ode<F>(dim: usize, t_grid: &[f64], validate: bool, rhs: F) -> Result<Vec<SymplecticMatrix>>
where
    F: Fn(f64, &RMat) -> RMat,
{
    check_grid(t_grid)?;
    let mut s = RMat::identity(dim, dim);
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(SymplecticMatrix::new_unchecked(s.clone()));
    for w in t_grid.windows(2) {
        s = rk4_matrix(&rhs, w[0], &s, w[1] - w[0]);
        let residual = if validate { symplectic_residual(&s)? } else { 0.0 };
        if !(residual <= FLOW_SYMPLECTIC_TOL) {
            return Err(Error::StepTooCoarse {
                t: w[1],
                residual,
                tol: FLOW_SYMPLECTIC_TOL,
            });
        }
        out.push(SymplecticMatrix::new_unchecked(s.clone()));
    }
    Ok(out)
}

/// Fourth-order Runge-Kutta integration of `dS/dt = J M(t) S`, `S_0 = I`.
pub fn integrate_linear_flow(h: &QuadraticHamiltonian, t_grid: &[f64]) -> Result<SampledIsotopy> {
    let n = h.n();
    let j = j_matrix(n);
    for &t in t_grid.iter().step_by((t_grid.len() / 8).max(1)) {
        h.check_symmetric(t)?;
    }
    let mats = integrate_matrix_ode(2 * n, t_grid, true, |t, s| &j * h.matrix(t) * s)?;
    SampledIsotopy::new(t_grid.to_vec(), mats)
}

/// Quadratic Hamiltonian recovered from a linear isotopy at one grid time.
#[derive(Clone, Debug)]
pub struct LinearReconstruction {
    /// Symmetric `M` with `H = 1/2 M z . z`.
    pub matrix: RMat,
    /// Coefficient matrix of `1/2 x . x` block: `Ddot C^T - Cdot D^T`.
    pub xx: RMat,
    /// Coefficient matrix of the `p . x` cross term: `Cdot B^T - Ddot A^T`.
    pub px: RMat,
    /// Coefficient matrix of `1/2 p . p`: `Bdot A^T - Adot B^T`.
    pub pp: RMat,
}

fn centered_derivative(iso: &SampledIsotopy, t: f64) -> Result<(usize, RMat, DVector<f64>)> {
    let k = iso.index_of(t).ok_or(Error::BoundaryTime(t))?;
    if k == 0 || k + 1 >= iso.len() {
        return Err(Error::BoundaryTime(t));
    }
    let (tm, t0, tp) = (iso.times[k - 1], iso.times[k], iso.times[k + 1]);
    let (hm, hp) = (t0 - tm, tp - t0);
    // three-point centered weights on a possibly non-uniform stencil
    let wm = -hp / (hm * (hm + hp));
    let w0 = (hp - hm) / (hm * hp);
    let wp = hm / (hp * (hm + hp));
    let m = |i: usize| iso.matrices[i].matrix().clone();
    let z = |i: usize| iso.translations[i].vector().clone();
    let sdot = m(k - 1) * wm + m(k) * w0 + m(k + 1) * wp;
    let zdot = z(k - 1) * wm + z(k) * w0 + z(k + 1) * wp;
    Ok((k, sdot, zdot))
}

/// `H = -1/2 J Sdot S^{-1} z . z` at an interior grid time.
pub fn hamiltonian_from_linear_isotopy(
    iso: &SampledIsotopy,
    t: f64,
) -> Result<LinearReconstruction> {
    let (k, sdot, _) = centered_derivative(iso, t)?;
    let n = iso.n();
    let s = &iso.matrices[k];
    let j = j_matrix(n);
    let matrix = symmetrize(&(-(&j * &sdot * s.inverse().matrix())));
    let blk = |m: &RMat, r: usize, c: usize| m.view((r * n, c * n), (n, n)).into_owned();
    let (ad, bd, cd, dd) = (blk(&sdot, 0, 0), blk(&sdot, 0, 1), blk(&sdot, 1, 0), blk(&sdot, 1, 1));
    let (a, b, c, d) = (s.a(), s.b(), s.c(), s.d());
    Ok(LinearReconstruction {
        matrix,
        xx: &dd * c.transpose() - &cd * d.transpose(),
        px: &cd * b.transpose() - &dd * a.transpose(),
        pp: &bd * a.transpose() - &ad * b.transpose(),
    })
}

/// `H(z,t) = 1/2 M z.z + l . z` recovered from an affine isotopy, where the
/// linear part comes from `sigma(z, S_t zdot_t)`.
pub fn hamiltonian_from_affine_isotopy(
    iso: &SampledIsotopy,
    t: f64,
) -> Result<(RMat, DVector<f64>)> {
    let lin = hamiltonian_from_linear_isotopy(iso, t)?;
    let (k, _, zdot) = centered_derivative(iso, t)?;
    let w = iso.matrices[k].matrix() * zdot;
    // sigma(z, w) = Jz . w = -(J w) . z
    let l = -DVector::from_vec(j_apply(w.as_slice()));
    Ok((lin.matrix, l))
}

type MapFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// A (possibly nonlinear) symplectic isotopy given by callables.
#[derive(Clone)]
pub struct GeneralIsotopy {
    dim: usize,
    map: Arc<MapFn>,
    time_derivative: Arc<MapFn>,
    inverse: Option<Arc<MapFn>>,
}

impl fmt::Debug for GeneralIsotopy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralIsotopy")
            .field("dim", &self.dim)
            .field("explicit_inverse", &self.inverse.is_some())
            .finish()
    }
}

pub const NEWTON_MAX_ITER: usize = 50;

impl GeneralIsotopy {
    pub fn new<F, G>(dim: usize, map: F, time_derivative: G) -> Self
    where
        F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        GeneralIsotopy {
            dim,
            map: Arc::new(map),
            time_derivative: Arc::new(time_derivative),
            inverse: None,
        }
    }

    pub fn with_inverse<H>(mut self, inverse: H) -> Self
    where
        H: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    /// Linear isotopy `t -> S(t)` with derivative `t -> Sdot(t)`.
    pub fn linear<F, G>(s: F, sdot: G) -> Self
    where
        F: Fn(f64) -> RMat + Send + Sync + 'static,
        G: Fn(f64) -> RMat + Send + Sync + 'static,
    {
        let s = Arc::new(s);
        let s2 = s.clone();
        let dim = s(0.0).nrows();
        GeneralIsotopy::new(
            dim,
            move |z, t| (s(t) * DVector::from_column_slice(z)).as_slice().to_vec(),
            move |z, t| (sdot(t) * DVector::from_column_slice(z)).as_slice().to_vec(),
        )
        .with_inverse(move |z, t| {
            let inv = SymplecticMatrix::new_unchecked(s2(t)).inverse().into_matrix();
            (inv * DVector::from_column_slice(z)).as_slice().to_vec()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn map(&self, z: &[f64], t: f64) -> Vec<f64> {
        (self.map)(z, t)
    }

    pub fn time_derivative(&self, z: &[f64], t: f64) -> Vec<f64> {
        (self.time_derivative)(z, t)
    }

    /// `f_t^{-1}(w)`: explicit inverse when given, else Newton from `w`
    /// with a finite-difference Jacobian.
    pub fn inverse(&self, w: &[f64], t: f64) -> Result<Vec<f64>> {
        if let Some(inv) = &self.inverse {
            return Ok(inv(w, t));
        }
        let dim = self.dim;
        let target = DVector::from_column_slice(w);
        let mut z = target.clone();
        let h = 1e-7;
        for _ in 0..NEWTON_MAX_ITER {
            let fz = DVector::from_vec(self.map(z.as_slice(), t));
            let r = &fz - &target;
            let scale = target.norm().max(1.0);
            if r.norm() <= 1e-13 * scale {
                return Ok(z.as_slice().to_vec());
            }
            let mut jac = RMat::zeros(dim, dim);
            for k in 0..dim {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += h;
                zm[k] -= h;
                let col = (DVector::from_vec(self.map(zp.as_slice(), t))
                    - DVector::from_vec(self.map(zm.as_slice(), t)))
                    / (2.0 * h);
                jac.set_column(k, &col);
            }
            let step = jac.lu().solve(&r).ok_or(Error::NewtonDiverged(NEWTON_MAX_ITER))?;
            z -= step;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NewtonDiverged(NEWTON_MAX_ITER));
            }
        }
        let fz = DVector::from_vec(self.map(z.as_slice(), t));
        if (&fz - &target).norm() <= 1e-9 * target.norm().max(1.0) {
            return Ok(z.as_slice().to_vec());
        }
        Err(Error::NewtonDiverged(NEWTON_MAX_ITER))
    }
}

pub const DEFAULT_QUAD_ORDER: usize = 16;

/// `H(z,t) = -int_0^1 sigma(fdot_t(f_t^{-1}(lambda z)), z) dlambda`
/// by Gauss-Legendre quadrature in `lambda`.
pub fn hamiltonian_from_general_isotopy(
    iso: &GeneralIsotopy,
    z: &PhasePoint,
    t: f64,
    quad_order: usize,
) -> Result<f64> {
    if z.dim() != iso.dim() {
        return Err(Error::DimensionMismatch {
            expected: iso.dim(),
            got: z.dim(),
        });
    }
    if quad_order < 4 {
        return Err(Error::Invalid("quadrature order must be >= 4".into()));
    }
    let (nodes, weights) = gauss_legendre_unit(quad_order);
    let zs = z.as_slice();
    let mut acc = 0.0;
    for (lam, w) in nodes.iter().zip(&weights) {
        let lz: Vec<f64> = zs.iter().map(|v| v * lam).collect();
        let pre = iso.inverse(&lz, t)?;
        let v = iso.time_derivative(&pre, t);
        acc += w * sigma(&v, zs);
    }
    if !acc.is_finite() {
        return Err(Error::NonFinite("isotopy Hamiltonian"));
    }
    Ok(-acc)
}

/// Flow of `1/2 M(t) z.z + m(t).z` as `f_t = S_t T(z_t)`,
/// `z_t = int_0^t S^{-1} J m`, using composite Simpson on a uniform grid.
pub fn affine_flow_from_inhomogeneous(
    h: &QuadraticHamiltonian,
    t_grid: &[f64],
) -> Result<SampledIsotopy> {
    let lin = integrate_linear_flow(&h.homogeneous(), t_grid)?;
    let n = h.n();
    if h.is_homogeneous() {
        return Ok(lin);
    }
    let dt = if t_grid.len() > 1 { t_grid[1] - t_grid[0] } else { 0.0 };
    if t_grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300))
    {
        return Err(Error::Invalid("affine flow quadrature requires a uniform grid".into()));
    }
    let integrand: Vec<DVector<f64>> = t_grid
        .iter()
        .zip(lin.matrices())
        .map(|(&t, s)| {
            let jm = DVector::from_vec(j_apply(h.linear(t).as_slice()));
            s.inverse().matrix() * jm
        })
        .collect();
    let d = 2 * n;
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let f: Vec<f64> = integrand.iter().map(|v| v[c]).collect();
            cumulative_simpson(&f, dt)
        })
        .collect();
    let translations = (0..t_grid.len())
        .map(|k| PhasePoint::new((0..d).map(|c| columns[c][k]).collect()))
        .collect::<Result<Vec<_>>>()?;
    SampledIsotopy::with_translations(t_grid.to_vec(), lin.matrices().to_vec(), translations)
}

/// Point trajectory of a Hamiltonian flow by fixed-step RK4.
pub fn integrate_point_flow(
    h: &HamiltonianField,
    z0: &PhasePoint,
    t_grid: &[f64],
) -> Result<Vec<PhasePoint>> {
    check_grid(t_grid)?;
    let f = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let p = PhasePoint::from_vector(z.clone())?;
        Ok(hamiltonian_vector_field(h, &p, t)?.vector().clone())
    };
    let mut z = z0.vector().clone();
    let mut out = vec![z0.clone()];
    for w in t_grid.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let k1 = f(t, &z)?;
        let k2 = f(t + 0.5 * dt, &(&z + &k1 * (0.5 * dt)))?;
        let k3 = f(t + 0.5 * dt, &(&z + &k2 * (0.5 * dt)))?;
        let k4 = f(t + dt, &(&z + &k3 * dt))?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(PhasePoint::from_vector(z.clone())?);
    }
    Ok(out)
}

/// Linear factorization `f^{H0+H1}_t = S_t T_t` with `T_t` the flow of `H1 o S_t`.
#[derive(Clone, Debug)]
pub struct LinearFactorization {
    pub outer: SampledIsotopy,
    pub inner: SampledIsotopy,
    pub composed: SampledIsotopy,
}

/// Matrix version of the factorization for quadratic `H0`, `H1`: the inner
/// factor solves `dT/dt = J S_t^T M1(t) S_t T`, integrated jointly with `S_t`.
pub fn factorized_linear_flow(
    h0: &QuadraticHamiltonian,
    h1: &QuadraticHamiltonian,
    t_grid: &[f64],
) -> Result<LinearFactorization> {
    let n = h0.n();
    let j = j_matrix(n);
    let d = 2 * n;
    // block-diagonal state diag(S, T)
    let joint = integrate_matrix_ode(2 * d, t_grid, false, |t, y| {
        let s = y.view((0, 0), (d, d)).into_owned();
        let tm = y.view((d, d), (d, d)).into_owned();
        let mut out = RMat::zeros(2 * d, 2 * d);
        out.view_mut((0, 0), (d, d))
            .copy_from(&(&j * h0.matrix(t) * &s));
        out.view_mut((d, d), (d, d))
            .copy_from(&(&j * s.transpose() * h1.matrix(t) * &s * &tm));
        out
    })?;
    let mut outer = Vec::with_capacity(joint.len());
    let mut inner = Vec::with_capacity(joint.len());
    let mut composed = Vec::with_capacity(joint.len());
    for (t, y) in t_grid.iter().zip(&joint) {
        let y = y.matrix();
        let s = y.view((0, 0), (d, d)).into_owned();
        let tm = y.view((d, d), (d, d)).into_owned();
        let c = &s * &tm;
        for m in [&s, &tm, &c] {
            let residual = symplectic_residual(m)?;
            if residual > FLOW_SYMPLECTIC_TOL {
                return Err(Error::StepTooCoarse {
                    t: *t,
                    residual,
                    tol: FLOW_SYMPLECTIC_TOL,
                });
            }
        }
        outer.push(SymplecticMatrix::new_unchecked(s));
        inner.push(SymplecticMatrix::new_unchecked(tm));
        composed.push(SymplecticMatrix::new_unchecked(c));
    }
    Ok(LinearFactorization {
        outer: SampledIsotopy::new(t_grid.to_vec(), outer)?,
        inner: SampledIsotopy::new(t_grid.to_vec(), inner)?,
        composed: SampledIsotopy::new(t_grid.to_vec(), composed)?,
    })
}

/// Pointwise factorization for a general perturbation `H1`.
#[derive(Clone, Debug)]
pub struct FactorizedTrajectory {
    /// Flow of the quadratic part.
    pub outer: SampledIsotopy,
    /// Trajectory of `z0` under the flow of `H1^t = H1 o S_t`.
    pub inner: Vec<PhasePoint>,
    /// `S_t` applied to the inner trajectory.
    pub composed: Vec<PhasePoint>,
}

/// Trajectory version of the factorization `f^{H0+H1} = f^{H0} f^{H1^t}`
/// with `H1^t(z,t) = H1(S_t z, t)`. `S_t` and the inner point are advanced by
/// the same RK4 stages so the inner field always sees the exact stage `S`.
pub fn factorized_flow(
    h0: &QuadraticHamiltonian,
    h1: &HamiltonianField,
    z0: &PhasePoint,
    t_grid: &[f64],
) -> Result<FactorizedTrajectory> {
    check_grid(t_grid)?;
    let n = h0.n();
    let d = 2 * n;
    let j = j_matrix(n);
    if h1.dim() != d || z0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h1.dim(),
        });
    }
    // state = [vec(S) ; w]
    let rhs = |t: f64, s: &RMat, w: &DVector<f64>| -> Result<(RMat, DVector<f64>)> {
        let ds = &j * h0.matrix(t) * s;
        let sw = s * w;
        let g = DVector::from_vec(h1.gradient(sw.as_slice(), t));
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("H1 gradient"));
        }
        let grad_w = s.transpose() * g;
        let dw = DVector::from_vec(j_apply(grad_w.as_slice()));
        Ok((ds, dw))
    };
    let mut s = RMat::identity(d, d);
    let mut w = z0.vector().clone();
    let mut mats = vec![SymplecticMatrix::identity(n)];
    let mut inner = vec![z0.clone()];
    let mut composed = vec![z0.clone()];
    for win in t_grid.windows(2) {
        let (t, h) = (win[0], win[1] - win[0]);
        let (s1, w1) = rhs(t, &s, &w)?;
        let (s2, w2) = rhs(t + 0.5 * h, &(&s + &s1 * (0.5 * h)), &(&w + &w1 * (0.5 * h)))?;
        let (s3, w3) = rhs(t + 0.5 * h, &(&s + &s2 * (0.5 * h)), &(&w + &w2 * (0.5 * h)))?;
        let (s4, w4) = rhs(t + h, &(&s + &s3 * h), &(&w + &w3 * h))?;
        s += (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (h / 6.0);
        w += (w1 + w2 * 2.0 + w3 * 2.0 + w4) * (h / 6.0);
        let residual = symplectic_residual(&s)?;
        if residual > FLOW_SYMPLECTIC_TOL {
            return Err(Error::StepTooCoarse {
                t: win[1],
                residual,
                tol: FLOW_SYMPLECTIC_TOL,
            });
        }
        mats.push(SymplecticMatrix::new_unchecked(s.clone()));
        inner.push(PhasePoint::from_vector(w.clone())?);
        composed.push(PhasePoint::from_vector(&s * &w)?);
    }
    Ok(FactorizedTrajectory {
        outer: SampledIsotopy::new(t_grid.to_vec(), mats)?,
        inner,
        composed,
    })
}

type ScalarFnBox = dyn Fn(f64) -> f64 + Send + Sync;

/// Scalar function with optional analytic first and second derivatives.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<ScalarFnBox>,
    df: Option<Arc<ScalarFnBox>>,
    d2f: Option<Arc<ScalarFnBox>>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("analytic_df", &self.df.is_some())
            .field("analytic_d2f", &self.d2f.is_some())
            .finish()
    }
}

impl ScalarFn {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        ScalarFn {
            f: Arc::new(f),
            df: None,
            d2f: None,
        }
    }

    pub fn with_derivatives<D, D2>(mut self, df: D, d2f: D2) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.df = Some(Arc::new(df));
        self.d2f = Some(Arc::new(d2f));
        self
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.df {
            Some(d) => d(x),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                ((self.f)(x + h) - (self.f)(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.d2f {
            Some(d) => d(x),
            None => {
                let h = 1e-4 * x.abs().max(1.0);
                ((self.f)(x + h) - 2.0 * (self.f)(x) + (self.f)(x - h)) / (h * h)
            }
        }
    }
}

/// Right-hand side of the transformed separable system (`n = 1`):
/// `xdot = t V'(x + t T'(p)) T''(p)`, `pdot = -V'(x + t T'(p))`.
pub fn separable_flow_rhs(
    kinetic: &ScalarFn,
    potential: &ScalarFn,
    z: &PhasePoint,
    t: f64,
) -> Result<PhasePoint> {
    if z.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: z.dim(),
        });
    }
    let (x, p) = (z.as_slice()[0], z.as_slice()[1]);
    let u = x + t * kinetic.derivative(p);
    let dv = potential.derivative(u);
    let xdot = t * dv * kinetic.second_derivative(p);
    let pdot = -dv;
    if !xdot.is_finite() || !pdot.is_finite() {
        return Err(Error::NonFinite("separable right-hand side"));
    }
    Ok(PhasePoint::xp(xdot, pdot))
}

/// `H # K` and `H-bar` built over the stored flow of `H`.
#[derive(Clone, Debug)]
pub struct FlowAlgebra {
    /// `H#K(z,t) = H(z,t) + K((f_t^H)^{-1} z, t)`.
    pub sharp: HamiltonianField,
    /// `Hbar(z,t) = -H(f_t^H z, t)`.
    pub inverse: HamiltonianField,
}

/// Evaluators for `H # K` and `H-bar`. Times outside the sampled range
/// evaluate to NaN, which [`hamiltonian_vector_field`] reports as an error.
pub fn sharp_and_inverse_hamiltonian(
    h: &HamiltonianField,
    h_flow: &SampledIsotopy,
    k: &HamiltonianField,
) -> FlowAlgebra {
    let flow = Arc::new(h_flow.clone());
    let (h1, k1, f1) = (h.clone(), k.clone(), flow.clone());
    let sharp = HamiltonianField::from_fn(h.dim(), move |z, t| {
        let Ok(f) = f1.interpolate(t) else {
            return f64::NAN;
        };
        let pre = f.inverse().apply(&DVector::from_column_slice(z));
        h1.value(z, t) + k1.value(pre.as_slice(), t)
    });
    let (h2, f2) = (h.clone(), flow);
    let inverse = HamiltonianField::from_fn(h.dim(), move |z, t| {
        let Ok(f) = f2.interpolate(t) else {
            return f64::NAN;
        };
        let img = f.apply(&DVector::from_column_slice(z));
        -h2.value(img.as_slice(), t)
    });
    FlowAlgebra { sharp, inverse }
}

/// Checked evaluation of an algebra evaluator; reports out-of-range times.
pub fn evaluate_checked(h: &HamiltonianField, flow: &SampledIsotopy, z: &PhasePoint, t: f64) -> Result<f64> {
    flow.interpolate(t)?;
    Ok(h.value(z.as_slice(), t))
}

/// Concatenation `K` on `[0, t0]` followed by `f^H_{t - t0} f^K_{t0}`.
#[derive(Clone, Debug)]
pub struct Concatenation {
    pub path: SampledIsotopy,
    homotopy: ConcatenationHomotopy,
}

impl Concatenation {
    pub fn homotopy(&self) -> &ConcatenationHomotopy {
        &self.homotopy
    }
}

/// Explicit homotopy `h(tau, s) = a(tau, s) b(tau, s)`, `tau, s in [0, 1]`,
/// between `tau -> f^H_{t0 tau} f^K_{t0 tau}` (s = 0) and the concatenated
/// path reparametrized to `[0, 1]` (s = 1). Endpoints are fixed:
/// `h(0, s) = I`, `h(1, s) = f^H_{t0} f^K_{t0}`.
#[derive(Clone, Debug)]
pub struct ConcatenationHomotopy {
    h_iso: SampledIsotopy,
    k_iso: SampledIsotopy,
    t0: f64,
}

impl ConcatenationHomotopy {
    pub fn eval(&self, tau: f64, s: f64) -> Result<AffineMap> {
        if !(0.0..=1.0).contains(&tau) || !(0.0..=1.0).contains(&s) {
            return Err(Error::Invalid("homotopy parameters must lie in [0, 1]".into()));
        }
        let t0 = self.t0;
        let a = if tau <= s / 2.0 {
            AffineMap::linear(RMat::identity(2 * self.h_iso.n(), 2 * self.h_iso.n()))
        } else {
            self.h_iso.interpolate(t0 * (2.0 * tau - s) / (2.0 - s))?
        };
        let b = if tau <= 1.0 - s / 2.0 {
            self.k_iso.interpolate((t0 * 2.0 * tau / (2.0 - s)).min(t0))?
        } else {
            self.k_iso.interpolate(t0)?
        };
        Ok(a.compose(&b))
    }
}

pub fn concatenate_isotopies(
    h_iso: &SampledIsotopy,
    k_iso: &SampledIsotopy,
    t0: f64,
) -> Result<Concatenation> {
    let same_grid = h_iso.len() == k_iso.len()
        && h_iso
            .times()
            .iter()
            .zip(k_iso.times())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * t0.abs().max(1.0));
    if !same_grid {
        return Err(Error::GridMismatch("H and K isotopies must share a grid".into()));
    }
    if (h_iso.final_time() - t0).abs() > 1e-12 * t0.abs().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "isotopies end at {} but t0 = {t0}",
            h_iso.final_time()
        )));
    }
    let last = k_iso.len() - 1;
    let k_end = k_iso.affine(last);
    let mut times = k_iso.times().to_vec();
    let mut mats: Vec<SymplecticMatrix> = k_iso.matrices().to_vec();
    let mut trans: Vec<PhasePoint> = k_iso.translations().to_vec();
    for i in 1..h_iso.len() {
        times.push(t0 + h_iso.times()[i]);
        let f = h_iso.affine(i).compose(&k_end);
        let s = SymplecticMatrix::new_unchecked(f.matrix.clone());
        // back to the S (z + z_t) convention
        let zt = s.inverse().matrix() * &f.shift;
        mats.push(s);
        trans.push(PhasePoint::from_vector(zt)?);
    }
    Ok(Concatenation {
        path: SampledIsotopy::with_translations(times, mats, trans)?,
        homotopy: ConcatenationHomotopy {
            h_iso: h_iso.clone(),
            k_iso: k_iso.clone(),
            t0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &RMat, b: &RMat, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    #[test]
    fn harmonic_flow_is_rotation() {
        let grid = uniform_grid(2.0, 2000);
        let iso = integrate_linear_flow(&QuadraticHamiltonian::harmonic(), &grid).unwrap();
        for (t, s) in iso.times().iter().zip(iso.matrices()).step_by(250) {
            assert!(close(s.matrix(), SymplecticMatrix::rotation(*t).matrix(), 1e-12));
        }
    }

    #[test]
    fn free_flow_is_shear_and_zero_is_identity() {
        let grid = uniform_grid(1.5, 300);
        let iso = integrate_linear_flow(&QuadraticHamiltonian::free(), &grid).unwrap();
        let last = iso.matrices().last().unwrap();
        assert!(close(last.matrix(), SymplecticMatrix::shear(1.5).matrix(), 1e-13));
        let iso0 = integrate_linear_flow(&QuadraticHamiltonian::zero(1), &grid).unwrap();
        assert!(iso0
            .matrices()
            .iter()
            .all(|m| m.matrix() == &RMat::identity(2, 2)));
    }

    #[test]
    fn coarse_steps_are_refused() {
        let big = QuadraticHamiltonian::constant(RMat::identity(2, 2) * 40.0);
        let grid = uniform_grid(1.0, 4);
        assert!(matches!(
            integrate_linear_flow(&big, &grid),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn reconstruction_examples() {
        let grid = uniform_grid(1.0, 1000);
        let omega = |t: f64| t + 0.3 * t * t;
        let iso = SampledIsotopy::from_fn(&grid, |t| SymplecticMatrix::rotation(omega(t)).into_matrix())
            .unwrap();
        let rec = hamiltonian_from_linear_isotopy(&iso, grid[400]).unwrap();
        let wdot = 1.0 + 0.6 * grid[400];
        assert!(close(&rec.matrix, &(RMat::identity(2, 2) * wdot), 1e-6));
        // block coefficients reproduce the same quadratic form
        assert!((rec.xx[(0, 0)] - wdot).abs() < 1e-6);
        assert!(rec.px[(0, 0)].abs() < 1e-6);
        assert!((rec.pp[(0, 0)] - wdot).abs() < 1e-6);

        let shear = SampledIsotopy::from_fn(&grid, |t| SymplecticMatrix::shear(t).into_matrix()).unwrap();
        let rec = hamiltonian_from_linear_isotopy(&shear, 0.5).unwrap();
        assert!(close(&rec.matrix, &RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), 1e-10));

        let ident = SampledIsotopy::from_fn(&grid, |_| RMat::identity(2, 2)).unwrap();
        let rec = hamiltonian_from_linear_isotopy(&ident, 0.5).unwrap();
        assert_eq!(rec.matrix, RMat::zeros(2, 2));

        assert!(matches!(
            hamiltonian_from_linear_isotopy(&ident, 0.0),
            Err(Error::BoundaryTime(_))
        ));
        assert!(matches!(
            hamiltonian_from_linear_isotopy(&ident, 1.0),
            Err(Error::BoundaryTime(_))
        ));
    }

    #[test]
    fn general_isotopy_examples() {
        let rot = GeneralIsotopy::linear(
            |t| SymplecticMatrix::rotation(t).into_matrix(),
            |t| RMat::from_row_slice(2, 2, &[-t.sin(), t.cos(), -t.cos(), -t.sin()]),
        );
        let h = hamiltonian_from_general_isotopy(&rot, &PhasePoint::xp(1.0, 0.0), 0.8, 16).unwrap();
        assert!((h - 0.5).abs() < 1e-13);

        let ident = GeneralIsotopy::new(2, |z, _| z.to_vec(), |z, _| vec![0.0; z.len()]);
        let h = hamiltonian_from_general_isotopy(&ident, &PhasePoint::xp(0.3, 2.0), 0.4, 8).unwrap();
        assert_eq!(h, 0.0);

        // translation isotopy, inverse found by Newton
        let tr = GeneralIsotopy::new(2, |z, t| vec![z[0] + t, z[1]], |_, _| vec![1.0, 0.0]);
        let z = PhasePoint::xp(0.7, -1.3);
        let h = hamiltonian_from_general_isotopy(&tr, &z, 0.9, 8).unwrap();
        assert!((h - (-1.3)).abs() < 1e-12);

        assert!(hamiltonian_from_general_isotopy(&tr, &z, 0.9, 3).is_err());
    }

    #[test]
    fn newton_failure_is_reported() {
        // non-invertible map: no preimage for negative first coordinate
        let bad = GeneralIsotopy::new(2, |z, _| vec![z[0] * z[0] + 1.0, z[1]], |_, _| vec![0.0, 0.0]);
        assert!(matches!(
            bad.inverse(&[-3.0, 0.0], 0.5),
            Err(Error::NewtonDiverged(_))
        ));
    }

    #[test]
    fn driven_oscillator_translation() {
        let force = 0.8;
        let h = QuadraticHamiltonian::harmonic()
            .with_linear(move |_| DVector::from_vec(vec![force, 0.0]));
        let grid = uniform_grid(2.0, 2000);
        let iso = affine_flow_from_inhomogeneous(&h, &grid).unwrap();
        for (t, z) in iso.times().iter().zip(iso.translations()).step_by(111) {
            let ex = [force * (1.0 - t.cos()), -force * t.sin()];
            assert!((z.as_slice()[0] - ex[0]).abs() < 1e-9, "t={t}");
            assert!((z.as_slice()[1] - ex[1]).abs() < 1e-9, "t={t}");
        }
        // closure: reconstructed linear term equals m(t)
        let (m, l) = hamiltonian_from_affine_isotopy(&iso, grid[777]).unwrap();
        assert!(close(&m, &RMat::identity(2, 2), 1e-6));
        assert!((l[0] - force).abs() < 1e-6 && l[1].abs() < 1e-6);

        let hom = affine_flow_from_inhomogeneous(&QuadraticHamiltonian::harmonic(), &grid).unwrap();
        assert!(hom.is_linear());
    }

    #[test]
    fn factorization_example_closed_matrices() {
        let grid = uniform_grid(PI / 2.0, 1571);
        let fac = factorized_linear_flow(
            &QuadraticHamiltonian::free(),
            &QuadraticHamiltonian::position_square(),
            &grid,
        )
        .unwrap();
        let inner = fac.inner.matrices().last().unwrap().matrix().clone();
        let expected = RMat::from_row_slice(2, 2, &[PI / 2.0, 1.0, -1.0, 0.0]);
        assert!(close(&inner, &expected, 1e-9));
        let comp = fac.composed.matrices().last().unwrap().matrix().clone();
        assert!(close(&comp, SymplecticMatrix::rotation(PI / 2.0).matrix(), 1e-9));
    }

    #[test]
    fn factorized_trajectory_matches_direct_flow() {
        let grid = uniform_grid(1.0, 1000);
        let v = HamiltonianField::from_fn(2, |z, _| z[0].cos())
            .with_gradient(|z, _| vec![-z[0].sin(), 0.0]);
        let z0 = PhasePoint::xp(0.4, 0.2);
        let fac = factorized_flow(&QuadraticHamiltonian::free(), &v, &z0, &grid).unwrap();
        let total = HamiltonianField::from_fn(2, |z, _| 0.5 * z[1] * z[1] + z[0].cos())
            .with_gradient(|z, _| vec![-z[0].sin(), z[1]]);
        let direct = integrate_point_flow(&total, &z0, &grid).unwrap();
        for (a, b) in fac.composed.iter().zip(&direct) {
            assert!((a.vector() - b.vector()).norm() < 1e-10);
        }
        // H1 = 0 collapses to the H0 flow
        let zero = HamiltonianField::zero(2);
        let fac0 = factorized_flow(&QuadraticHamiltonian::free(), &zero, &z0, &grid).unwrap();
        let last = fac0.composed.last().unwrap();
        assert!((last.as_slice()[0] - 0.6).abs() < 1e-13);
    }

    #[test]
    fn separable_rhs_examples() {
        let t_kin = ScalarFn::new(|p| 0.5 * p * p).with_derivatives(|p| p, |_| 1.0);
        let v = ScalarFn::new(|x| 0.5 * x * x).with_derivatives(|x| x, |_| 1.0);
        let r = separable_flow_rhs(&t_kin, &v, &PhasePoint::xp(1.0, 0.0), 1.0).unwrap();
        assert_eq!(r.as_slice(), &[1.0, -1.0]);
        let zero = ScalarFn::new(|_| 0.0);
        let r = separable_flow_rhs(&t_kin, &zero, &PhasePoint::xp(0.3, 0.5), 2.0).unwrap();
        assert!(r.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn groupoid_law_on_samples() {
        let grid = uniform_grid(2.0, 400);
        let h = QuadraticHamiltonian::new(1, |t| {
            RMat::from_row_slice(2, 2, &[1.0 + 0.3 * t, 0.2, 0.2, 1.0])
        });
        let iso = integrate_linear_flow(&h, &grid).unwrap();
        for (a, b, c) in [(10usize, 200usize, 350usize), (399, 3, 120), (50, 50, 7)] {
            let lhs = iso.two_time(a, b).compose(&iso.two_time(b, c));
            assert!(lhs.distance(&iso.two_time(a, c)) < 1e-10);
        }
        let id = iso.two_time(77, 77);
        assert!(id.distance(&AffineMap::linear(RMat::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn json_round_trip_and_csv() {
        let grid = uniform_grid(1.0, 10);
        let h = QuadraticHamiltonian::harmonic().with_linear(|_| DVector::from_vec(vec![1.0, 0.0]));
        let iso = affine_flow_from_inhomogeneous(&h, &grid).unwrap();
        let back = SampledIsotopy::from_json(&iso.to_json()).unwrap();
        assert_eq!(back.times(), iso.times());
        assert_eq!(back.translations(), iso.translations());
        assert!(iso.residuals_csv().starts_with("t,residual\n"));
        assert_eq!(iso.residuals_csv().lines().count(), 12);
    }

    #[test]
    fn concatenation_examples() {
        let t0 = PI / 2.0;
        let grid = uniform_grid(t0, 400);
        let harm = integrate_linear_flow(&QuadraticHamiltonian::harmonic(), &grid).unwrap();
        let cat = concatenate_isotopies(&harm, &harm, t0).unwrap();
        let end = cat.path.affine(cat.path.len() - 1);
        assert!(close(&end.matrix, &(-RMat::identity(2, 2)), 1e-10));
        // homotopy endpoints
        let hom = cat.homotopy();
        for s in [0.0, 0.3, 1.0] {
            let e = hom.eval(1.0, s).unwrap();
            assert!(close(&e.matrix, &(-RMat::identity(2, 2)), 1e-10));
            let o = hom.eval(0.0, s).unwrap();
            assert!(close(&o.matrix, &RMat::identity(2, 2), 1e-12));
        }
        // trivial H: K extended constantly
        let ident = SampledIsotopy::from_fn(&grid, |_| RMat::identity(2, 2)).unwrap();
        let cat = concatenate_isotopies(&ident, &harm, t0).unwrap();
        let k_end = harm.affine(harm.len() - 1);
        for i in harm.len()..cat.path.len() {
            assert!(cat.path.affine(i).distance(&k_end) < 1e-14);
        }
        // grid mismatch
        let other = integrate_linear_flow(&QuadraticHamiltonian::harmonic(), &uniform_grid(t0, 100)).unwrap();
        assert!(matches!(
            concatenate_isotopies(&harm, &other, t0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn resymplectify_repairs_perturbation() {
        let mut m = SymplecticMatrix::rotation(0.4).into_matrix();
        m[(0, 1)] += 1e-5;
        let fixed = resymplectify(&m);
        assert!(symplectic_residual(&fixed).unwrap() < 1e-14);
        assert!(max_abs(&(&fixed - &m)) < 1e-4);
    }
}
