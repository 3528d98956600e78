//! Cross-Wigner transform and the Wigner norm.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::grid::{OperatorMatrix, PhaseSpaceGrid};
use super::quantize::symbol_from_kernel;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::metaplectic::GridWavefunction;

/// `W(psi, phi)(x, p) = (2 pi hbar)^{-1} int exp(-i p y / hbar) psi(x + y/2) phi*(x - y/2) dy`
/// on [`PhaseSpaceGrid::half_band`] of the common wave grid.
pub fn cross_wigner(psi: &GridWavefunction, phi: &GridWavefunction) -> Result<PhaseSpaceGrid> {
    if !psi.same_grid(phi) {
        return Err(Error::GridMismatch("cross-Wigner needs a common grid".into()));
    }
    let n = psi.len();
    let dx = psi.dx();
    let (a, b) = (psi.samples(), phi.samples());
    let k = CMat::from_fn(n, n, |j, l| a[j] * b[l].conj() * dx);
    let w = symbol_from_kernel(&OperatorMatrix::new(k, psi.grid())?)?;
    let scale = 1.0 / (2.0 * PI * psi.hbar());
    Ok(w.map(|z| z * scale))
}

pub fn wigner(psi: &GridWavefunction) -> Result<PhaseSpaceGrid> {
    cross_wigner(psi, psi)
}

/// `dx dp sum |W(psi, phi)|` over the Wigner grid.
pub fn wigner_norm(psi: &GridWavefunction, phi: &GridWavefunction) -> Result<f64> {
    Ok(cross_wigner(psi, phi)?.l1_norm())
}

/// Phase-space mean `(int x W, int p W)` of a Wigner grid.
pub fn first_moment(w: &PhaseSpaceGrid) -> (Complex64, Complex64) {
    let mut mx = Complex64::new(0.0, 0.0);
    let mut mp = Complex64::new(0.0, 0.0);
    for i in 0..w.n_x() {
        for l in 0..w.n_p() {
            mx += w.data[(i, l)] * w.x(i);
            mp += w.data[(i, l)] * w.p(l);
        }
    }
    let da = w.dx * w.dp;
    (mx * da, mp * da)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaplectic::{
        apply_generator_to_grid, hw_translate, Backend, HeisenbergWeylOp, MetaplecticGenerator, WaveGrid,
    };
    use crate::symplectic::PhasePoint;

    fn wave() -> WaveGrid {
        let n = 256;
        let dx = (PI / n as f64).sqrt();
        WaveGrid::new(n, -((n / 2) as f64) * dx, dx, 1.0).unwrap()
    }

    fn ground(w: &WaveGrid, x0: f64, p0: f64) -> GridWavefunction {
        let c = (PI * w.hbar).powf(-0.25);
        w.sample(|x| Complex64::from_polar(c * (-(x - x0).powi(2) / (2.0 * w.hbar)).exp(), p0 * x / w.hbar))
            .unwrap()
    }

    #[test]
    fn gaussian_wigner_closed_form() {
        let w = wave();
        let psi = ground(&w, 0.0, 0.0);
        let wg = wigner(&psi).unwrap();
        let oracle = wg.sample(&|x: f64, p: f64| Complex64::new((-(x * x + p * p)).exp() / PI, 0.0));
        assert!(wg.max_abs_diff(&oracle).unwrap() < 1e-10);
        assert!((wigner_norm(&psi, &psi).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn self_wigner_is_real() {
        let w = wave();
        let psi = w
            .sample(|x| Complex64::from_polar((-(x - 1.0).powi(2)).exp() + 0.5 * (-(x + 2.0).powi(2)).exp(), 0.7 * x))
            .unwrap();
        let wg = wigner(&psi).unwrap();
        let im = wg.data.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
        assert!(im < 1e-12 * wg.max_abs());
    }

    #[test]
    fn translation_covariance_on_lattice() {
        let w = wave();
        let psi = ground(&w, 0.3, -0.2);
        let phi = ground(&w, -0.5, 0.4).scaled(Complex64::new(0.6, 0.8));
        let base = cross_wigner(&psi, &phi).unwrap();
        let (si, sl) = (6usize, 4usize);
        let z0 = PhasePoint::xp(si as f64 * w.dx, sl as f64 * base.dp);
        let op = HeisenbergWeylOp::new(z0, 1.0);
        let moved = cross_wigner(
            &hw_translate(&op, &psi, false).unwrap(),
            &hw_translate(&op, &phi, false).unwrap(),
        )
        .unwrap();
        let mut err = 0.0_f64;
        for i in 2 * si..base.n_x() {
            for l in sl..base.n_p() {
                err = err.max((moved.data[(i, l)] - base.data[(i - 2 * si, l - sl)]).norm());
            }
        }
        assert!(err < 1e-8, "{err}");
        let n0 = wigner_norm(&psi, &phi).unwrap();
        let n1 = wigner_norm(
            &hw_translate(&op, &psi, false).unwrap(),
            &hw_translate(&op, &phi, false).unwrap(),
        )
        .unwrap();
        assert!((n1 - n0).abs() / n0 < 1e-6);
    }

    #[test]
    fn fourier_covariance() {
        let w = wave();
        let psi = ground(&w, 0.8, 0.3);
        let phi = ground(&w, -0.2, -0.5);
        let f = MetaplecticGenerator::fourier(1, 0, 1.0);
        let fpsi = apply_generator_to_grid(&f, &psi, Backend::Direct).unwrap();
        let fphi = apply_generator_to_grid(&f, &phi, Backend::Direct).unwrap();
        let base = cross_wigner(&psi, &phi).unwrap();
        let moved = cross_wigner(&fpsi, &fphi).unwrap();
        // S = J: S^{-1}(x, p) = (-p, x)
        let mut err = 0.0_f64;
        for i in (0..moved.n_x()).step_by(7) {
            for l in (0..moved.n_p()).step_by(5) {
                let (x, p) = (moved.x(i), moved.p(l));
                err = err.max((moved.data[(i, l)] - base.interpolate(-p, x)).norm());
            }
        }
        assert!(err < 1e-4, "{err}");
        let n0 = wigner_norm(&psi, &phi).unwrap();
        let n1 = wigner_norm(&fpsi, &fphi).unwrap();
        assert!((n1 - n0).abs() / n0 < 1e-4);
    }

    #[test]
    fn first_moment_of_coherent_state() {
        let w = wave();
        let psi = ground(&w, 1.25, -0.75);
        let (mx, mp) = first_moment(&wigner(&psi).unwrap());
        assert!((mx.re - 1.25).abs() < 1e-8 && (mp.re + 0.75).abs() < 1e-8);
    }
}
