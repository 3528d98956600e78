//! Symplectic Cayley transform and Gaussian Weyl symbols of metaplectic operators.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use super::grid::Symbol;
use crate::error::{Error, Result};
use crate::linalg::{inertia, j_matrix, max_abs, rinv, signature, symmetrize, symmetry_defect, CMat, RMat, I};
use crate::metaplectic::{project_generator, MetaplecticGenerator};
use crate::symplectic::{sigma, PhasePoint, SymplecticMatrix};

pub const CAYLEY_TOL: f64 = 1e-10;

/// `M_S = Phi(S) = 1/2 J (S + I)(S - I)^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CayleyMatrix {
    m: RMat,
    source: SymplecticMatrix,
}

impl CayleyMatrix {
    pub fn matrix(&self) -> &RMat {
        &self.m
    }

    pub fn source(&self) -> &SymplecticMatrix {
        &self.source
    }

    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.m)
    }
}

pub fn cayley_transform(s: &SymplecticMatrix) -> Result<CayleyMatrix> {
    let dim = 2 * s.n();
    let id = RMat::identity(dim, dim);
    let minus = s.matrix() - &id;
    let det = minus.determinant();
    if det.abs() <= CAYLEY_TOL {
        return Err(Error::NotInSp0(det.abs()));
    }
    let inv = rinv(&minus).ok_or(Error::NotInSp0(det.abs()))?;
    let m = 0.5 * j_matrix(s.n()) * (s.matrix() + &id) * inv;
    Ok(CayleyMatrix {
        m,
        source: s.clone(),
    })
}

/// `Phi^{-1}(M) = (M - J/2)^{-1} (M + J/2)`.
pub fn cayley_inverse(m: &RMat) -> Result<SymplecticMatrix> {
    let dim = m.nrows();
    if dim != m.ncols() || !dim.is_multiple_of(2) {
        return Err(Error::OddDimension(dim));
    }
    let half_j = 0.5 * j_matrix(dim / 2);
    let minus = m - &half_j;
    let det = minus.determinant();
    if det.abs() <= CAYLEY_TOL {
        return Err(Error::CayleyInverseSingular(det.abs()));
    }
    let inv = rinv(&minus).ok_or(Error::CayleyInverseSingular(det.abs()))?;
    SymplecticMatrix::with_tol(inv * (m + half_j), 1e-8)
}

/// Matrix `1/2 (P + Q - L - L^T)` of the quadratic form `x -> W(x, x)`.
pub fn w_diagonal_form(g: &MetaplecticGenerator) -> RMat {
    0.5 * (g.p() + g.q() - g.l() - g.l().transpose())
}

/// `nu = m - Inert W_xx mod 4`.
pub fn conley_zehnder_nu(g: &MetaplecticGenerator) -> Result<u8> {
    cayley_transform(&project_generator(g))?;
    let nu = g.maslov() as i64 - inertia(&w_diagonal_form(g)) as i64;
    Ok(nu.rem_euclid(4) as u8)
}

/// Index of the product `S S'` from the indices of its factors:
/// `m + m' + 1/2 sign(Phi(S) + Phi(S'))` mod 4.
pub fn product_index(m: i64, m2: i64, s: &SymplecticMatrix, s2: &SymplecticMatrix) -> Result<u8> {
    let sum = cayley_transform(s)?.m + cayley_transform(s2)?.m;
    let scale = max_abs(&sum).max(1.0);
    let det = sum.determinant();
    if det.abs() <= CAYLEY_TOL * scale.powi(sum.nrows() as i32) {
        return Err(Error::NotInSp0(det.abs()));
    }
    let sig = signature(&sum);
    Ok((m + m2 + sig / 2).rem_euclid(4) as u8)
}

/// `c exp{(i/2hbar) [N (z - z0).(z - z0) - sigma(z, l)]}` on `R^{2n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSymbol {
    pub prefactor: Complex64,
    pub n_mat: CMat,
    pub center: PhasePoint,
    pub linear: PhasePoint,
    pub hbar: f64,
}

impl GaussianSymbol {
    pub fn new(prefactor: Complex64, n_mat: CMat, hbar: f64) -> Result<Self> {
        let dim = n_mat.nrows();
        if dim != n_mat.ncols() || !dim.is_multiple_of(2) {
            return Err(Error::OddDimension(dim));
        }
        let defect = (&n_mat - n_mat.transpose()).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        if defect > CAYLEY_TOL {
            return Err(Error::NotSymmetric(defect));
        }
        Ok(GaussianSymbol {
            prefactor,
            n_mat,
            center: PhasePoint::zeros(dim / 2),
            linear: PhasePoint::zeros(dim / 2),
            hbar,
        })
    }

    pub fn with_center(mut self, z0: PhasePoint) -> Self {
        self.center = z0;
        self
    }

    pub fn with_linear(mut self, l: PhasePoint) -> Self {
        self.linear = l;
        self
    }

    pub fn n(&self) -> usize {
        self.n_mat.nrows() / 2
    }

    pub fn eval_point(&self, z: &[f64]) -> Complex64 {
        let u: Vec<f64> = z.iter().zip(self.center.as_slice()).map(|(a, b)| a - b).collect();
        let uc = DVector::from_iterator(u.len(), u.iter().map(|&v| Complex64::new(v, 0.0)));
        let quad = (&self.n_mat * &uc).dot(&uc);
        let phase = quad - sigma(z, self.linear.as_slice());
        self.prefactor * (I * phase / (2.0 * self.hbar)).exp()
    }

    /// Closed-form `a_sigma(z) = (2 pi hbar)^{-n} int exp(-i sigma(z,z')/hbar) a(z') dz'`.
    /// Requires `Im N >= 0` (or real `N`) for the principal branch to apply.
    pub fn symplectic_fourier(&self) -> Result<GaussianSymbol> {
        let n = self.n();
        let ninv = self
            .n_mat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Invalid("Gaussian symbol with singular quadratic part".into()))?;
        let j = j_matrix(n).map(|v| Complex64::new(v, 0.0));
        let n_new = -(j.transpose() * ninv * &j);
        let minus_i_n = self.n_mat.map(|z| -I * z);
        let factor = inv_sqrt_det(&minus_i_n)?;
        let shift = (-I * sigma(self.center.as_slice(), self.linear.as_slice()) / (2.0 * self.hbar)).exp();
        let n_new = (&n_new + n_new.transpose()) * Complex64::new(0.5, 0.0);
        Ok(GaussianSymbol {
            prefactor: self.prefactor * factor * shift,
            n_mat: n_new,
            center: self.linear.scale(0.5),
            linear: self.center.scale(2.0),
            hbar: self.hbar,
        })
    }
}

impl Symbol for GaussianSymbol {
    fn eval(&self, x: f64, p: f64) -> Complex64 {
        self.eval_point(&[x, p])
    }
}

/// `det(A)^{-1/2}` as the product of principal inverse roots of the eigenvalues.
pub fn inv_sqrt_det(a: &CMat) -> Result<Complex64> {
    let eig: Vec<Complex64> = if a.nrows() == 2 {
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = (tr * tr - 4.0 * det).sqrt();
        vec![(tr + disc) / 2.0, (tr - disc) / 2.0]
    } else {
        let (_, t) = nalgebra::Schur::new(a.clone()).unpack();
        t.diagonal().iter().copied().collect()
    };
    if eig.iter().any(|z| z.norm() < 1e-300) {
        return Err(Error::Invalid("singular matrix in Gaussian prefactor".into()));
    }
    Ok(eig.iter().fold(Complex64::new(1.0, 0.0), |acc, z| acc / z.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SymbolKind {
    Twisted,
    Weyl,
    Inhomogeneous(PhasePoint),
}

pub fn metaplectic_symbol(s: &SymplecticMatrix, nu: i64, kind: SymbolKind, hbar: f64) -> Result<GaussianSymbol> {
    let n = s.n();
    let dim = 2 * n;
    let phi = cayley_transform(s)?.m;
    let inu = I.powi(nu.rem_euclid(4) as i32);
    let det_minus = (s.matrix() - RMat::identity(dim, dim)).determinant().abs();
    let twisted = |phi: &RMat| {
        GaussianSymbol::new(
            inu / det_minus.sqrt(),
            symmetrize(phi).map(|v| Complex64::new(v, 0.0)),
            hbar,
        )
    };
    match kind {
        SymbolKind::Twisted => twisted(&phi),
        SymbolKind::Inhomogeneous(z0) => {
            if z0.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: z0.n(),
                });
            }
            Ok(twisted(&phi)?.with_center(z0.clone()).with_linear(z0))
        }
        SymbolKind::Weyl => {
            let det_plus = (s.matrix() + RMat::identity(dim, dim)).determinant().abs();
            if det_plus <= CAYLEY_TOL {
                return Err(Error::SPlusISingular(det_plus));
            }
            let phi_inv = rinv(&phi).ok_or(Error::SPlusISingular(det_plus))?;
            let j = j_matrix(n);
            let n_mat = symmetrize(&(-(j.transpose() * phi_inv * &j)));
            let sig = signature(&phi) as f64;
            let pref = inu
                * 2f64.powi(n as i32)
                * Complex64::from_polar(1.0, PI * sig / 4.0)
                / det_plus.sqrt();
            GaussianSymbol::new(pref, n_mat.map(|v| Complex64::new(v, 0.0)), hbar)
        }
    }
}

/// Symbols of the free evolution `exp(-i t p^2 / 2 hbar)` on `R^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeParticleSymbols {
    pub t: f64,
    pub hbar: f64,
}

impl FreeParticleSymbols {
    /// `exp(-i p^2 t / 2 hbar)`.
    pub fn weyl(&self, _x: f64, p: f64) -> Complex64 {
        Complex64::from_polar(1.0, -p * p * self.t / (2.0 * self.hbar))
    }

    /// The twisted symbol is `f(x) delta(p)`; this returns
    /// `f(x) = sqrt(2 pi hbar / (i t)) exp(i x^2 / 2 hbar t)`.
    pub fn twisted_density(&self, x: f64) -> Result<Complex64> {
        if self.t == 0.0 {
            return Err(Error::Invalid("twisted free symbol is a delta at t = 0".into()));
        }
        let amp = (Complex64::new(2.0 * PI * self.hbar, 0.0) / (I * self.t)).sqrt();
        Ok(amp * Complex64::from_polar(1.0, x * x / (2.0 * self.hbar * self.t)))
    }

    pub fn weyl_gaussian(&self) -> GaussianSymbol {
        let mut n = CMat::zeros(2, 2);
        n[(1, 1)] = Complex64::new(-self.t, 0.0);
        GaussianSymbol {
            prefactor: Complex64::new(1.0, 0.0),
            n_mat: n,
            center: PhasePoint::zeros(1),
            linear: PhasePoint::zeros(1),
            hbar: self.hbar,
        }
    }
}

impl Symbol for FreeParticleSymbols {
    fn eval(&self, x: f64, p: f64) -> Complex64 {
        self.weyl(x, p)
    }
}

pub fn free_particle_symbols(t: f64, hbar: f64) -> FreeParticleSymbols {
    FreeParticleSymbols { t, hbar }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaplectic::{apply_generator_to_grid, compose_generators, Backend, GridWavefunction};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &RMat, b: &RMat) -> f64 {
        max_abs(&(a - b))
    }

    #[test]
    fn cayley_worked_examples() {
        let minus = SymplecticMatrix::rotation(PI);
        assert!(max_abs(cayley_transform(&minus).unwrap().matrix()) < 1e-15);
        let q = cayley_transform(&SymplecticMatrix::rotation(PI / 2.0)).unwrap();
        assert!(close(q.matrix(), &(0.5 * RMat::identity(2, 2))) < 1e-15);
        let q = cayley_transform(&SymplecticMatrix::rotation(-PI / 2.0)).unwrap();
        assert!(close(q.matrix(), &(-0.5 * RMat::identity(2, 2))) < 1e-15);
        assert!(matches!(
            cayley_transform(&SymplecticMatrix::shear(1.0)),
            Err(Error::NotInSp0(_))
        ));
    }

    #[test]
    fn cayley_of_rotation_is_half_cotangent() {
        for t in [0.3, 1.1, 2.5, -0.8] {
            let m = cayley_transform(&SymplecticMatrix::rotation(t)).unwrap();
            let want = 0.5 / (t / 2.0).tan() * RMat::identity(2, 2);
            assert!(close(m.matrix(), &want) < 1e-12);
        }
    }

    #[test]
    fn cayley_random_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 100 {
            let n = 1 + tested % 2;
            let s = SymplecticMatrix::random(n, &mut rng);
            let dim = 2 * n;
            if (s.matrix() - RMat::identity(dim, dim)).determinant().abs() <= 1e-6 {
                continue;
            }
            let phi = cayley_transform(&s).unwrap();
            assert!(phi.symmetry_defect() < 1e-10);
            let phi_inv = cayley_transform(&s.inverse()).unwrap();
            assert!(close(phi_inv.matrix(), &(-phi.matrix())) < 1e-10 * max_abs(phi.matrix()).max(1.0));
            let back = cayley_inverse(phi.matrix()).unwrap();
            assert!(close(back.matrix(), s.matrix()) < 1e-10 * max_abs(s.matrix()).max(1.0));
            tested += 1;
        }
    }

    #[test]
    fn nu_of_fourier_and_quarter_turn() {
        let f = MetaplecticGenerator::fourier(1, 0, 1.0);
        assert_eq!(conley_zehnder_nu(&f).unwrap(), 3);
        let h = MetaplecticGenerator::harmonic(PI / 2.0, 0, 1.0).unwrap();
        assert_eq!(conley_zehnder_nu(&h).unwrap(), 3);
    }

    #[test]
    fn product_index_matches_grid_square_of_fourier() {
        // F^2 = i^nu Parity on the grid fixes nu of R(pi) independently.
        let f = MetaplecticGenerator::fourier(1, 0, 1.0);
        let psi = GridWavefunction::centered(256, 12.0, 1.0, |x| {
            Complex64::new((-(x - 1.0) * (x - 1.0) / 2.0).exp(), 0.0)
        })
        .unwrap();
        let twice = apply_generator_to_grid(&f, &apply_generator_to_grid(&f, &psi, Backend::Direct).unwrap(), Backend::Direct)
            .unwrap();
        let parity: Vec<Complex64> = (0..psi.len())
            .map(|j| {
                let x = psi.x(j);
                Complex64::new((-(x + 1.0) * (x + 1.0) / 2.0).exp(), 0.0)
            })
            .collect();
        let ratio = twice.samples()[psi.len() / 2 - 16] / parity[psi.len() / 2 - 16];
        let nu_grid = ((ratio.arg() / (PI / 2.0)).round() as i64).rem_euclid(4) as u8;
        let nu_f = conley_zehnder_nu(&f).unwrap() as i64;
        let r = SymplecticMatrix::rotation(PI / 2.0);
        assert_eq!(product_index(nu_f, nu_f, &r, &r).unwrap(), nu_grid);
        assert_eq!(nu_grid, 3);
    }

    #[test]
    fn product_index_matches_composed_generator() {
        for (t1, t2) in [(0.7, 0.9), (0.4, 2.2), (2.0, 2.5)] {
            let g1 = MetaplecticGenerator::harmonic(t1, 0, 1.0).unwrap();
            let g2 = MetaplecticGenerator::harmonic(t2, 0, 1.0).unwrap();
            let (Ok(g), Ok(_)) = (compose_generators(&g1, &g2), cayley_transform(&SymplecticMatrix::rotation(t1 + t2))) else {
                continue;
            };
            let nu = product_index(
                conley_zehnder_nu(&g1).unwrap() as i64,
                conley_zehnder_nu(&g2).unwrap() as i64,
                &project_generator(&g1),
                &project_generator(&g2),
            )
            .unwrap();
            assert_eq!(nu, conley_zehnder_nu(&g).unwrap(), "t1={t1} t2={t2}");
        }
    }

    #[test]
    fn twisted_symbol_worked_example() {
        let r = SymplecticMatrix::rotation(PI / 2.0);
        let s = metaplectic_symbol(&r, 3, SymbolKind::Twisted, 1.0).unwrap();
        assert!((s.prefactor - I.powi(3) / 2f64.sqrt()).norm() < 1e-14);
        let z = [0.3, -0.7];
        let want = I.powi(3) / 2f64.sqrt() * (I * (0.09 + 0.49) / 4.0).exp();
        assert!((s.eval_point(&z) - want).norm() < 1e-14);
        let inh = metaplectic_symbol(&r, 3, SymbolKind::Inhomogeneous(PhasePoint::zeros(1)), 1.0).unwrap();
        assert_eq!(inh.eval_point(&z), s.eval_point(&z));
    }

    #[test]
    fn weyl_symbol_of_rotation_is_secant_gaussian() {
        for t in [0.7, 2.0, -1.3] {
            let g = MetaplecticGenerator::harmonic(t, if t < 0.0 { 1 } else { 0 }, 1.0).unwrap();
            let nu = conley_zehnder_nu(&g).unwrap() as i64;
            let s = metaplectic_symbol(&SymplecticMatrix::rotation(t), nu, SymbolKind::Weyl, 1.0).unwrap();
            let z = [0.4, 0.25];
            let r2 = 0.16 + 0.0625;
            let want = Complex64::from_polar(1.0 / (t / 2.0).cos(), -(t / 2.0).tan() * r2);
            assert!((s.eval_point(&z) - want).norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn weyl_symbol_is_fourier_transform_of_twisted() {
        let r = SymplecticMatrix::rotation(1.2);
        let tw = metaplectic_symbol(&r, 3, SymbolKind::Twisted, 0.8).unwrap();
        let w = metaplectic_symbol(&r, 3, SymbolKind::Weyl, 0.8).unwrap();
        let ft = tw.symplectic_fourier().unwrap();
        for z in [[0.0, 0.0], [0.5, -0.2], [-1.0, 0.7]] {
            assert!((ft.eval_point(&z) - w.eval_point(&z)).norm() < 1e-12);
        }
        let back = ft.symplectic_fourier().unwrap();
        assert!((back.eval_point(&[0.3, 0.1]) - tw.eval_point(&[0.3, 0.1])).norm() < 1e-12);
    }

    #[test]
    fn shifted_gaussian_transform_matches_quadrature() {
        let mut n = CMat::zeros(2, 2);
        n[(0, 0)] = Complex64::new(0.3, 1.0);
        n[(1, 1)] = Complex64::new(-0.2, 0.8);
        n[(0, 1)] = Complex64::new(0.1, 0.2);
        n[(1, 0)] = n[(0, 1)];
        let hbar = 0.7;
        let a = GaussianSymbol::new(Complex64::new(0.5, 0.2), n, hbar)
            .unwrap()
            .with_center(PhasePoint::xp(0.3, -0.4))
            .with_linear(PhasePoint::xp(-0.2, 0.5));
        let ft = a.symplectic_fourier().unwrap();
        let z = [0.35, -0.15];
        let h = 0.05;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in -240..=240 {
            for k in -240..=240 {
                let w = [i as f64 * h, k as f64 * h];
                acc += (-I * sigma(&z, &w) / hbar).exp() * a.eval_point(&w);
            }
        }
        let quad = acc * h * h / (2.0 * PI * hbar);
        assert!((quad - ft.eval_point(&z)).norm() < 1e-8, "{quad} {}", ft.eval_point(&z));
    }

    #[test]
    fn free_particle_symbol_values() {
        let f = free_particle_symbols(1.0, 1.0);
        assert!((f.weyl(3.0, 2f64.sqrt()) - Complex64::from_polar(1.0, -1.0)).norm() < 1e-15);
        let f0 = free_particle_symbols(0.0, 1.0);
        assert_eq!(f0.weyl(1.0, 5.0), Complex64::new(1.0, 0.0));
        assert!(f0.twisted_density(1.0).is_err());
        assert_eq!(f.weyl_gaussian().eval(0.2, 2f64.sqrt()), f.weyl(0.2, 2f64.sqrt()));
    }

    proptest! {
        #[test]
        fn cayley_round_trip(t in 0.05f64..6.2, s in -2.0f64..2.0) {
            let m = SymplecticMatrix::rotation(t).compose(&SymplecticMatrix::shear(s));
            let dim = 2;
            prop_assume!((m.matrix() - RMat::identity(dim, dim)).determinant().abs() > 1e-3);
            let phi = cayley_transform(&m).unwrap();
            prop_assert!(phi.symmetry_defect() < 1e-10 * max_abs(phi.matrix()).max(1.0));
            let back = cayley_inverse(phi.matrix()).unwrap();
            prop_assert!(close(back.matrix(), m.matrix()) < 1e-9 * max_abs(phi.matrix()).max(1.0).powi(2));
        }
    }
}
