//! Small dense linear-algebra and quadrature helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Standard symplectic matrix `J = [[0, I], [-I, 0]]` of size `2n`.
pub fn j_matrix(n: usize) -> RMat {
    let mut j = RMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = 1.0;
        j[(n + k, k)] = -1.0;
    }
    j
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

pub fn symmetry_defect(m: &RMat) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn symmetrize(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Number of negative eigenvalues of a real symmetric matrix (index of inertia).
pub fn inertia(m: &RMat) -> usize {
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    eig.eigenvalues
        .iter()
        .filter(|&&v| v < -1e-13 * scale)
        .count()
}

/// Signature (positive minus negative eigenvalue count) of a real symmetric matrix.
pub fn signature(m: &RMat) -> i64 {
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-13 * scale;
    eig.eigenvalues.iter().fold(0i64, |s, &v| {
        if v > tol {
            s + 1
        } else if v < -tol {
            s - 1
        } else {
            s
        }
    })
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Simpson weights for `n` equally spaced samples with spacing `h`.
/// An even sample count closes with a Simpson 3/8 panel.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => {}
        2 => {
            w[0] = h / 2.0;
            w[1] = h / 2.0;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
        }
        _ => {
            let simpson_end = if n % 2 == 1 { n - 1 } else { n - 4 };
            for k in (0..simpson_end).step_by(2) {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
            }
            if n.is_multiple_of(2) {
                let s = n - 4;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// Running integral `F_k = int_0^{t_k} f` on a uniform grid.
///
/// Even indices use composite Simpson; odd indices add a single-interval
/// quadratic-interpolation panel to the preceding even value.
pub fn cumulative_simpson<T>(f: &[T], h: f64) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let n = f.len();
    let mut out = vec![T::default(); n];
    if n < 2 {
        return out;
    }
    let mut k = 2;
    while k < n {
        out[k] = out[k - 2] + (f[k - 2] + f[k - 1] * 4.0 + f[k]) * (h / 3.0);
        k += 2;
    }
    let mut k = 1;
    while k < n {
        out[k] = if k + 1 < n {
            out[k - 1] + (f[k - 1] * 5.0 + f[k] * 8.0 + f[k + 1] * -1.0) * (h / 12.0)
        } else if k >= 2 {
            // last odd sample: backward panel over [k-1, k]
            out[k - 1] + (f[k - 2] * -1.0 + f[k - 1] * 8.0 + f[k] * 5.0) * (h / 12.0)
        } else {
            (f[0] + f[1]) * (h / 2.0)
        };
        k += 2;
    }
    out
}

/// One-norm of a complex matrix (max column sum).
pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        result += &term;
        if norm1(&term) < 1e-17 * norm1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Action `exp(a) v` for a dense matrix, scaling the step so each Taylor
/// sub-step has unit-bounded norm; avoids forming `exp(a)`.
pub fn expm_action(a: &CMat, v: &CVec) -> CVec {
    let norm = norm1(a);
    let substeps = norm.ceil().max(1.0) as usize;
    let h = Complex64::new(1.0 / substeps as f64, 0.0);
    let mut out = v.clone();
    for _ in 0..substeps {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..=30 {
            term = (a * &term) * (h / k as f64);
            acc += &term;
            let tn = term.norm();
            if tn <= 1e-17 * acc.norm() || tn == 0.0 {
                break;
            }
        }
        out = acc;
    }
    out
}

/// Principal square root branch helpers for Gaussian prefactors.
pub fn principal_inv_sqrt(z: Complex64) -> Complex64 {
    Complex64::new(1.0, 0.0) / z.sqrt()
}

/// Linear solve for complex square systems; `None` when singular.
pub fn csolve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn rinv(a: &RMat) -> Option<RMat> {
    a.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_unit(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_weights_exact_for_cubics() {
        for n in [3usize, 4, 5, 8, 11] {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let s: f64 = (0..n).map(|k| w[k] * (k as f64 * h).powi(3)).sum();
            assert!((s - 0.25).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn cumulative_simpson_tracks_sine_integral() {
        let n = 201;
        let h = std::f64::consts::PI / 200.0;
        let f: Vec<f64> = (0..n).map(|k| (k as f64 * h).sin()).collect();
        let c = cumulative_simpson(&f, h);
        for (k, v) in c.iter().enumerate() {
            let exact = 1.0 - (k as f64 * h).cos();
            assert!((v - exact).abs() < 1e-7, "k={k}");
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = Complex64::new(3.0, 0.0);
        a[(1, 0)] = Complex64::new(-3.0, 0.0);
        let e = expm(&a);
        assert!((e[(0, 0)].re - 3f64.cos()).abs() < 1e-13);
        assert!((e[(0, 1)].re - 3f64.sin()).abs() < 1e-13);
        let v = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let ev = expm_action(&a, &v);
        assert!((ev[1].re + 3f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let m = RMat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        assert_eq!(inertia(&m), 1);
        assert_eq!(signature(&m), 0);
    }
}
