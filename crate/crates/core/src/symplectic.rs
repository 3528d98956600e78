//! Linear symplectic geometry on `R^{2n}` with coordinates ordered `(x, p)`.
//!
//! The standard form is `sigma(z, z') = Jz . z'` with `J = [[0, I], [-I, 0]]`.
//! Symplectic matrices are validated once, at construction.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{j_matrix, max_abs, RMat};

pub const DEFAULT_SYMPLECTIC_TOL: f64 = 1e-10;
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A point `z = (x, p)` of phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint(DVector<f64>);

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let len = coords.len();
        if len < 2 || !len.is_multiple_of(2) {
            return Err(Error::OddDimension(len));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase point"));
        }
        Ok(PhasePoint(DVector::from_vec(coords)))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        Self::new(v.as_slice().to_vec())
    }

    pub fn zeros(n: usize) -> Self {
        PhasePoint(DVector::zeros(2 * n))
    }

    /// 1-D convenience constructor.
    pub fn xp(x: f64, p: f64) -> Self {
        PhasePoint(DVector::from_vec(vec![x, p]))
    }

    /// Degrees of freedom `n`.
    pub fn n(&self) -> usize {
        self.0.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn x(&self) -> &[f64] {
        &self.0.as_slice()[..self.n()]
    }

    pub fn p(&self) -> &[f64] {
        &self.0.as_slice()[self.n()..]
    }

    pub fn add(&self, other: &PhasePoint) -> PhasePoint {
        PhasePoint(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &PhasePoint) -> PhasePoint {
        PhasePoint(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> PhasePoint {
        PhasePoint(&self.0 * s)
    }
}

impl Serialize for PhasePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhasePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        PhasePoint::new(v).map_err(serde::de::Error::custom)
    }
}

/// `sigma(z, z') = Jz . z'`.
pub fn symplectic_form(z: &PhasePoint, w: &PhasePoint) -> Result<f64> {
    if z.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: z.dim(),
            got: w.dim(),
        });
    }
    Ok(sigma(z.as_slice(), w.as_slice()))
}

/// Unchecked `sigma` on raw slices of equal even length.
pub fn sigma(z: &[f64], w: &[f64]) -> f64 {
    let n = z.len() / 2;
    (0..n).map(|k| z[n + k] * w[k] - z[k] * w[n + k]).sum()
}

/// `max |M^T J M - J|`.
pub fn symplectic_residual(m: &RMat) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.nrows() < 2 || !m.nrows().is_multiple_of(2) {
        return Err(Error::OddDimension(m.nrows()));
    }
    let j = j_matrix(m.nrows() / 2);
    Ok(max_abs(&(m.transpose() * &j * m - j)))
}

pub fn is_symplectic(m: &RMat, tol: f64) -> Result<bool> {
    Ok(symplectic_residual(m)? <= tol)
}

/// A validated `2n x 2n` symplectic matrix.
#[derive(Clone, PartialEq)]
pub struct SymplecticMatrix(RMat);

impl fmt::Debug for SymplecticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymplecticMatrix{}", self.0)
    }
}

impl SymplecticMatrix {
    pub fn new(m: RMat) -> Result<Self> {
        Self::with_tol(m, DEFAULT_SYMPLECTIC_TOL)
    }

    pub fn with_tol(m: RMat, tol: f64) -> Result<Self> {
        let residual = symplectic_residual(&m)?;
        if !(residual <= tol) {
            return Err(Error::NotSymplectic { residual, tol });
        }
        Ok(SymplecticMatrix(m))
    }

    /// Skips validation; callers guarantee the invariant (e.g. exact products).
    pub(crate) fn new_unchecked(m: RMat) -> Self {
        SymplecticMatrix(m)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        Self::new(RMat::from_row_slice(dim, dim, data))
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix(RMat::identity(2 * n, 2 * n))
    }

    /// `[[cos t, sin t], [-sin t, cos t]]`, the harmonic-oscillator flow.
    pub fn rotation(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        SymplecticMatrix(RMat::from_row_slice(2, 2, &[c, s, -s, c]))
    }

    /// `[[1, t], [0, 1]]`, the free-particle flow.
    pub fn shear(t: f64) -> Self {
        SymplecticMatrix(RMat::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]))
    }

    pub fn from_blocks(a: &RMat, b: &RMat, c: &RMat, d: &RMat) -> Result<Self> {
        let n = a.nrows();
        let mut m = RMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(a);
        m.view_mut((0, n), (n, n)).copy_from(b);
        m.view_mut((n, 0), (n, n)).copy_from(c);
        m.view_mut((n, n), (n, n)).copy_from(d);
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn matrix(&self) -> &RMat {
        &self.0
    }

    pub fn into_matrix(self) -> RMat {
        self.0
    }

    pub fn a(&self) -> RMat {
        let n = self.n();
        self.0.view((0, 0), (n, n)).into_owned()
    }
    pub fn b(&self) -> RMat {
        let n = self.n();
        self.0.view((0, n), (n, n)).into_owned()
    }
    pub fn c(&self) -> RMat {
        let n = self.n();
        self.0.view((n, 0), (n, n)).into_owned()
    }
    pub fn d(&self) -> RMat {
        let n = self.n();
        self.0.view((n, n), (n, n)).into_owned()
    }

    pub fn residual(&self) -> f64 {
        symplectic_residual(&self.0).unwrap_or(f64::INFINITY)
    }

    /// `S^{-1} = [[D^T, -B^T], [-C^T, A^T]]`.
    pub fn inverse(&self) -> SymplecticMatrix {
        let n = self.n();
        let mut m = RMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.d().transpose());
        m.view_mut((0, n), (n, n)).copy_from(&(-self.b().transpose()));
        m.view_mut((n, 0), (n, n)).copy_from(&(-self.c().transpose()));
        m.view_mut((n, n), (n, n)).copy_from(&self.a().transpose());
        SymplecticMatrix(m)
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix(&self.0 * &other.0)
    }

    pub fn apply(&self, z: &PhasePoint) -> PhasePoint {
        PhasePoint(&self.0 * z.vector())
    }

    pub fn is_free(&self, tol: f64) -> bool {
        self.b().determinant().abs() > tol
    }

    /// Random element built as a product of elementary symplectic factors.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> SymplecticMatrix {
        let sym = |rng: &mut R| {
            let mut s = RMat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-1.0..1.0);
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            s
        };
        let mut out = RMat::identity(2 * n, 2 * n);
        for _ in 0..3 {
            let p = sym(rng);
            let q = sym(rng);
            let mut lower = RMat::identity(2 * n, 2 * n);
            lower.view_mut((n, 0), (n, n)).copy_from(&p);
            let mut upper = RMat::identity(2 * n, 2 * n);
            upper.view_mut((0, n), (n, n)).copy_from(&q);
            let mut l = RMat::identity(n, n) * rng.gen_range(0.5..1.5);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        l[(i, j)] = rng.gen_range(-0.3..0.3);
                    }
                }
            }
            let linv_t = l.clone().try_inverse().expect("diagonally dominant").transpose();
            let mut diag = RMat::zeros(2 * n, 2 * n);
            diag.view_mut((0, 0), (n, n)).copy_from(&l);
            diag.view_mut((n, n), (n, n)).copy_from(&linv_t);
            out = out * lower * diag * upper;
        }
        SymplecticMatrix(out)
    }
}

impl Serialize for SymplecticMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymplecticMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = matrix_from_rows(&rows).map_err(serde::de::Error::custom)?;
        SymplecticMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<RMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}

type ValueFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// A Hamiltonian `H(z, t)` with a gradient evaluator.
///
/// The gradient is analytic when supplied (always for quadratic forms) and a
/// centered finite difference of the value otherwise.
#[derive(Clone)]
pub struct HamiltonianField {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    fd_step: f64,
}

impl fmt::Debug for HamiltonianField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianField")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl HamiltonianField {
    pub fn from_fn<F>(dim: usize, value: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        HamiltonianField {
            dim,
            value: Arc::new(value),
            gradient: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// `H(z) = 1/2 M z . z` with exact gradient `M z`.
    pub fn quadratic(m: RMat) -> Self {
        Self::quadratic_time(move |_| m.clone())
    }

    /// `H(z, t) = 1/2 M(t) z . z`.
    pub fn quadratic_time<F>(m: F) -> Self
    where
        F: Fn(f64) -> RMat + Send + Sync + 'static,
    {
        let m = Arc::new(m);
        let dim = m(0.0).nrows();
        let mv = m.clone();
        HamiltonianField {
            dim,
            value: Arc::new(move |z, t| {
                let z = DVector::from_column_slice(z);
                0.5 * (mv(t) * &z).dot(&z)
            }),
            gradient: Some(Arc::new(move |z, t| {
                let z = DVector::from_column_slice(z);
                (m(t) * z).as_slice().to_vec()
            })),
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn zero(dim: usize) -> Self {
        HamiltonianField::from_fn(dim, |_, _| 0.0).with_gradient(move |z, _| vec![0.0; z.len()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn value(&self, z: &[f64], t: f64) -> f64 {
        (self.value)(z, t)
    }

    pub fn gradient(&self, z: &[f64], t: f64) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(z, t),
            None => self.fd_gradient(z, t),
        }
    }

    /// Centered finite-difference gradient of the value evaluator.
    pub fn fd_gradient(&self, z: &[f64], t: f64) -> Vec<f64> {
        let h = self.fd_step;
        let mut w = z.to_vec();
        (0..z.len())
            .map(|k| {
                w[k] = z[k] + h;
                let up = (self.value)(&w, t);
                w[k] = z[k] - h;
                let down = (self.value)(&w, t);
                w[k] = z[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `(H o g)(z, t) = H(g z, t)` for a linear map `g`.
    pub fn compose_linear(&self, g: &SymplecticMatrix) -> HamiltonianField {
        let inner = self.clone();
        let gm = g.matrix().clone();
        let gm2 = gm.clone();
        let inner2 = self.clone();
        let mut out = HamiltonianField::from_fn(self.dim, move |z, t| {
            let gz = &gm * DVector::from_column_slice(z);
            inner.value(gz.as_slice(), t)
        });
        if self.gradient.is_some() {
            out = out.with_gradient(move |z, t| {
                let gz = &gm2 * DVector::from_column_slice(z);
                let grad = DVector::from_vec(inner2.gradient(gz.as_slice(), t));
                (gm2.transpose() * grad).as_slice().to_vec()
            });
        }
        out.fd_step = self.fd_step;
        out
    }
}

/// `X_H(z, t) = J grad H(z, t)`, i.e. `(dH/dp, -dH/dx)`.
pub fn hamiltonian_vector_field(h: &HamiltonianField, z: &PhasePoint, t: f64) -> Result<PhasePoint> {
    if h.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: z.dim(),
        });
    }
    let g = h.gradient(z.as_slice(), t);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian gradient"));
    }
    Ok(PhasePoint(DVector::from_vec(j_apply(&g))))
}

/// `J v` on a raw slice.
pub fn j_apply(v: &[f64]) -> Vec<f64> {
    let n = v.len() / 2;
    let mut out = vec![0.0; v.len()];
    for k in 0..n {
        out[k] = v[n + k];
        out[n + k] = -v[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_basics() {
        let e1 = PhasePoint::xp(1.0, 0.0);
        let e2 = PhasePoint::xp(0.0, 1.0);
        assert_eq!(symplectic_form(&e1, &e2).unwrap(), -1.0);
        let z = PhasePoint::xp(0.3, -2.0);
        assert_eq!(symplectic_form(&z, &z).unwrap(), 0.0);
        let w = PhasePoint::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            symplectic_form(&z, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn phase_point_rejects_odd_length() {
        assert!(matches!(PhasePoint::new(vec![1.0]), Err(Error::OddDimension(1))));
        assert!(PhasePoint::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn is_symplectic_examples() {
        assert!(is_symplectic(&RMat::identity(4, 4), 1e-10).unwrap());
        let shear = RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(is_symplectic(&shear, 1e-10).unwrap());
        let dil = RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        assert!(!is_symplectic(&dil, 1e-10).unwrap());
        assert!(matches!(
            is_symplectic(&RMat::identity(3, 3), 1e-10),
            Err(Error::OddDimension(3))
        ));
    }

    #[test]
    fn inverse_examples() {
        let t = 0.7;
        let inv = SymplecticMatrix::shear(t).inverse();
        assert_eq!(inv.matrix(), SymplecticMatrix::shear(-t).matrix());
        let r = SymplecticMatrix::rotation(t).inverse();
        assert!(max_abs(&(r.matrix() - SymplecticMatrix::rotation(-t).matrix())) < 1e-15);
    }

    #[test]
    fn random_matrices_are_symplectic_and_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            for _ in 0..20 {
                let s = SymplecticMatrix::random(n, &mut rng);
                assert!(s.residual() < 1e-10);
                let lu_inv = s.matrix().clone().try_inverse().unwrap();
                assert!(max_abs(&(s.inverse().matrix() - lu_inv)) < 1e-10);
                let back = s.inverse().inverse();
                assert!(max_abs(&(back.matrix() - s.matrix())) <= 1e-12);
            }
        }
    }

    #[test]
    fn vector_field_examples() {
        let h = HamiltonianField::quadratic(RMat::identity(2, 2));
        let x = hamiltonian_vector_field(&h, &PhasePoint::xp(1.0, 0.0), 0.0).unwrap();
        assert_eq!(x.as_slice(), &[0.0, -1.0]);
        let hp = HamiltonianField::from_fn(2, |z, _| z[1]);
        let x = hamiltonian_vector_field(&hp, &PhasePoint::xp(0.4, 2.0), 0.0).unwrap();
        assert!((x.as_slice()[0] - 1.0).abs() < 1e-9 && x.as_slice()[1].abs() < 1e-9);
    }

    #[test]
    fn quadratic_field_is_exact() {
        let m = RMat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let h = HamiltonianField::quadratic(m.clone());
        let z = PhasePoint::xp(0.3, -0.7);
        let x = hamiltonian_vector_field(&h, &z, 0.0).unwrap();
        let expected = j_matrix(1) * &m * z.vector();
        assert_eq!(x.vector(), &expected);
    }
}
