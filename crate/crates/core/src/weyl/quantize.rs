//! Weyl, Shubin-tau and Born-Jordan quantization of grid symbols.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::cayley::GaussianSymbol;
use super::grid::{OperatorMatrix, PhaseSpaceGrid, Symbol};
use crate::error::{Error, Result};
use crate::linalg::{simpson_weights, CMat, I};
use crate::metaplectic::WaveGrid;

pub const BORN_JORDAN_NODES: usize = 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NyquistCheck {
    Strict,
    Warn,
}

impl std::str::FromStr for NyquistCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(NyquistCheck::Strict),
            "warn" => Ok(NyquistCheck::Warn),
            other => Err(Error::Invalid(format!("unknown nyquist mode {other}"))),
        }
    }
}

/// `dx dp <= 2 pi hbar / N` for the wave grid spacing `dx`.
pub fn nyquist_violation(a: &PhaseSpaceGrid, wave: &WaveGrid) -> Option<String> {
    let lhs = wave.dx * a.dp;
    let rhs = 2.0 * PI * a.hbar / wave.len as f64;
    (lhs > rhs * (1.0 + 1e-12)).then(|| format!("dx*dp = {lhs:.6e} > 2 pi hbar / N = {rhs:.6e}"))
}

fn checked_wave(a: &PhaseSpaceGrid, mode: NyquistCheck) -> Result<(WaveGrid, Option<String>)> {
    let wave = a.wave_grid()?;
    let warning = nyquist_violation(a, &wave);
    if let (Some(msg), NyquistCheck::Strict) = (&warning, mode) {
        return Err(Error::Nyquist(msg.clone()));
    }
    Ok((wave, warning))
}

/// FFT length `M` with `dp dx / hbar = 2 pi / M`, when it is an integer `>= n_p`.
fn fft_period(a: &PhaseSpaceGrid, wave: &WaveGrid) -> Option<usize> {
    let m = 2.0 * PI * a.hbar / (a.dp * wave.dx);
    let r = m.round();
    ((m - r).abs() < 1e-9 * m && r as usize >= a.n_p()).then_some(r as usize)
}

/// Row sums `S_m(d) = sum_l a[m, l] exp(i p_l d dx / hbar)` for every lag `d`
/// reachable from row `m`; indexed as `d + N - 1`.
fn lag_sums(a: &PhaseSpaceGrid, wave: &WaveGrid) -> Vec<Vec<Complex64>> {
    let n = wave.len;
    let hbar = a.hbar;
    let rows: Vec<usize> = (0..a.n_x()).collect();
    match fft_period(a, wave) {
        Some(period) => {
            let fft = FftPlanner::<f64>::new().plan_fft_inverse(period);
            rows.par_iter()
                .map(|&m| {
                    let mut buf = vec![Complex64::new(0.0, 0.0); period];
                    for l in 0..a.n_p() {
                        buf[l] = a.data[(m, l)];
                    }
                    fft.process(&mut buf);
                    (0..2 * n - 1)
                        .map(|di| {
                            let d = di as i64 - (n as i64 - 1);
                            let ph = Complex64::from_polar(1.0, a.p_min * d as f64 * wave.dx / hbar);
                            ph * buf[d.rem_euclid(period as i64) as usize]
                        })
                        .collect()
                })
                .collect()
        }
        None => rows
            .par_iter()
            .map(|&m| {
                (0..2 * n - 1)
                    .map(|di| {
                        let y = (di as f64 - (n as f64 - 1.0)) * wave.dx;
                        (0..a.n_p())
                            .map(|l| a.data[(m, l)] * Complex64::from_polar(1.0, a.p(l) * y / hbar))
                            .sum()
                    })
                    .collect()
            })
            .collect(),
    }
}

/// `K(x,y) = (2 pi hbar)^{-1} int exp(i p (x - y)/hbar) a((x + y)/2, p) dp`
/// by the rectangle rule in `p`; entries scaled by `dx`. The symbol grid must
/// sit on the midpoints of a wave grid (see [`PhaseSpaceGrid::half_band`]
/// and [`PhaseSpaceGrid::full_band`]).
pub fn weyl_quantize(a: &PhaseSpaceGrid) -> Result<OperatorMatrix> {
    weyl_quantize_with(a, NyquistCheck::Strict).map(|(op, _)| op)
}

pub fn weyl_quantize_with(a: &PhaseSpaceGrid, mode: NyquistCheck) -> Result<(OperatorMatrix, Option<String>)> {
    let (wave, warning) = checked_wave(a, mode)?;
    let n = wave.len;
    let sums = lag_sums(a, &wave);
    let scale = a.dp * wave.dx / (2.0 * PI * a.hbar);
    let m = CMat::from_fn(n, n, |j, k| sums[j + k][j + n - 1 - k] * scale);
    Ok((OperatorMatrix::new(m, wave)?, warning))
}

/// Kernel of a Gaussian symbol with the momentum integral done in closed
/// form (`n = 1`); needs `N_pp != 0`.
pub fn weyl_quantize_gaussian(g: &GaussianSymbol, wave: &WaveGrid) -> Result<OperatorMatrix> {
    if g.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: g.n(),
        });
    }
    let hbar = g.hbar;
    let nm = &g.n_mat;
    let (n11, n12, n22) = (nm[(0, 0)], nm[(0, 1)], nm[(1, 1)]);
    if n22.norm() < 1e-14 {
        return Err(Error::Invalid("Gaussian symbol has no momentum dependence; quantize on a grid".into()));
    }
    let (x0, p0) = (g.center.as_slice()[0], g.center.as_slice()[1]);
    let (lx, lp) = (g.linear.as_slice()[0], g.linear.as_slice()[1]);
    let amp = g.prefactor * (Complex64::new(2.0 * PI * hbar, 0.0) / (-I * n22)).sqrt() / (2.0 * PI * hbar);
    let m = CMat::from_fn(wave.len, wave.len, |j, k| {
        let (x, y) = (wave.x(j), wave.x(k));
        let xm = 0.5 * (x + y);
        let u = xm - x0;
        let b = (x - y) + n12 * u - lx / 2.0;
        let phase = I / (2.0 * hbar) * (n11 * u * u - p0 * lx + xm * lp) + I * p0 * (x - y) / hbar
            - I / (2.0 * hbar) * b * b / n22;
        amp * phase.exp() * wave.dx
    });
    OperatorMatrix::new(m, *wave)
}

/// `a(x, p) = int exp(-i p y / hbar) K(x + y/2, x - y/2) dy` on the lags of
/// matching parity, evaluated on the geometry of `target`.
pub fn symbol_from_kernel_on(op: &OperatorMatrix, target: &PhaseSpaceGrid) -> Result<PhaseSpaceGrid> {
    let wave = op.grid;
    let tw = target.wave_grid()?;
    if !tw.approx_eq(&wave) {
        return Err(Error::GridMismatch("target symbol grid is not built on the operator grid".into()));
    }
    let n = wave.len;
    let hbar = wave.hbar;
    let mut out = target.clone();
    let rows: Vec<Vec<Complex64>> = match fft_period(target, &wave) {
        Some(period) => {
            let fft = FftPlanner::<f64>::new().plan_fft_forward(period);
            (0..2 * n - 1)
                .into_par_iter()
                .map(|m| {
                    let mut buf = vec![Complex64::new(0.0, 0.0); period];
                    for (j, k) in row_pairs(m, n) {
                        let d = j as i64 - k as i64;
                        let ph = Complex64::from_polar(1.0, -target.p_min * d as f64 * wave.dx / hbar);
                        buf[d.rem_euclid(period as i64) as usize] += ph * op.matrix[(j, k)];
                    }
                    fft.process(&mut buf);
                    buf.truncate(target.n_p());
                    buf.iter().map(|z| z * 2.0).collect()
                })
                .collect()
        }
        None => (0..2 * n - 1)
            .into_par_iter()
            .map(|m| {
                (0..target.n_p())
                    .map(|l| {
                        let p = target.p(l);
                        row_pairs(m, n)
                            .map(|(j, k)| {
                                let y = (j as f64 - k as f64) * wave.dx;
                                op.matrix[(j, k)] * Complex64::from_polar(2.0, -p * y / hbar)
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect(),
    };
    for (m, row) in rows.into_iter().enumerate() {
        for (l, v) in row.into_iter().enumerate() {
            out.data[(m, l)] = v;
        }
    }
    Ok(out)
}

/// Inverse of [`weyl_quantize`] onto [`PhaseSpaceGrid::half_band`], where
/// the map is one-to-one.
pub fn symbol_from_kernel(op: &OperatorMatrix) -> Result<PhaseSpaceGrid> {
    symbol_from_kernel_on(op, &PhaseSpaceGrid::half_band(&op.grid))
}

fn row_pairs(m: usize, n: usize) -> impl Iterator<Item = (usize, usize)> {
    let lo = m.saturating_sub(n - 1);
    let hi = m.min(n - 1);
    (lo..=hi).map(move |j| (j, m - j))
}

/// Phase table `exp(i p_l d dx / hbar)` for lags `d = -(N-1)..=N-1`.
fn lag_phases(a: &PhaseSpaceGrid, wave: &WaveGrid) -> Vec<Vec<Complex64>> {
    let n = wave.len as i64;
    (-(n - 1)..n)
        .map(|d| {
            let y = d as f64 * wave.dx;
            (0..a.n_p())
                .map(|l| Complex64::from_polar(1.0, a.p(l) * y / a.hbar))
                .collect()
        })
        .collect()
}

fn tau_kernel<F>(a: &PhaseSpaceGrid, wave: &WaveGrid, tau: f64, row_at: F) -> CMat
where
    F: Fn(f64) -> Vec<Complex64> + Sync,
{
    let n = wave.len;
    let phases = lag_phases(a, wave);
    let scale = a.dp * wave.dx / (2.0 * PI * a.hbar);
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let xt = (1.0 - tau) * wave.x(j) + tau * wave.x(k);
                    let vals = row_at(xt);
                    let ph = &phases[j + n - 1 - k];
                    vals.iter().zip(ph).map(|(v, e)| v * e).sum::<Complex64>() * scale
                })
                .collect()
        })
        .collect();
    CMat::from_fn(n, n, |j, k| rows[j][k])
}

/// Cubic interpolation of every momentum column at position `x`.
fn interpolate_row(a: &PhaseSpaceGrid, x: f64) -> Vec<Complex64> {
    let nx = a.n_x();
    let f = (x - a.x_min) / a.dx;
    let near = f.round();
    if (f - near).abs() < 1e-9 && near >= 0.0 && (near as usize) < nx {
        let i = near as usize;
        return (0..a.n_p()).map(|l| a.data[(i, l)]).collect();
    }
    let base = (f.floor() as i64 - 1).clamp(0, nx as i64 - 4) as usize;
    let mut w = [1.0; 4];
    for (s, ws) in w.iter_mut().enumerate() {
        for t in 0..4 {
            if s != t {
                *ws *= (f - (base + t) as f64) / (s as f64 - t as f64);
            }
        }
    }
    (0..a.n_p())
        .map(|l| (0..4).map(|s| a.data[(base + s, l)] * w[s]).sum())
        .collect()
}

/// `K(x,y) = (2 pi hbar)^{-1} int exp(i p (x - y)/hbar) a((1 - tau) x + tau y, p) dp`.
/// Positions off the symbol grid are reached by cubic interpolation in `x`;
/// `tau = 1/2` is exactly [`weyl_quantize`].
pub fn tau_quantize(a: &PhaseSpaceGrid, tau: f64) -> Result<OperatorMatrix> {
    if tau == 0.5 {
        return weyl_quantize(a);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    let (wave, _) = checked_wave(a, NyquistCheck::Strict)?;
    let m = tau_kernel(a, &wave, tau, |x| interpolate_row(a, x));
    OperatorMatrix::new(m, wave)
}

/// Same as [`tau_quantize`] with the symbol evaluated exactly; `momenta`
/// supplies the momentum axis (its position axis must sit on `wave`).
pub fn tau_quantize_fn<S: Symbol + Sync + ?Sized>(sym: &S, momenta: &PhaseSpaceGrid, tau: f64) -> Result<OperatorMatrix> {
    let (wave, _) = checked_wave(momenta, NyquistCheck::Strict)?;
    let m = tau_kernel(momenta, &wave, tau, |x| {
        (0..momenta.n_p()).map(|l| sym.eval(x, momenta.p(l))).collect()
    });
    OperatorMatrix::new(m, wave)
}

/// Average of `tau_quantize` over `[0, 1]` (composite Simpson, 33 nodes).
pub fn born_jordan_quantize(a: &PhaseSpaceGrid) -> Result<OperatorMatrix> {
    born_jordan_quantize_nodes(a, BORN_JORDAN_NODES)
}

pub fn born_jordan_quantize_nodes(a: &PhaseSpaceGrid, nodes: usize) -> Result<OperatorMatrix> {
    if nodes < 3 || nodes.is_multiple_of(2) {
        return Err(Error::Invalid(format!("Simpson needs an odd node count >= 3, got {nodes}")));
    }
    let h = 1.0 / (nodes - 1) as f64;
    let weights = simpson_weights(nodes, h);
    let (wave, _) = checked_wave(a, NyquistCheck::Strict)?;
    let mut acc = CMat::zeros(wave.len, wave.len);
    for (i, w) in weights.iter().enumerate() {
        let op = tau_quantize(a, i as f64 * h)?;
        acc += op.matrix * Complex64::new(*w, 0.0);
    }
    OperatorMatrix::new(acc, wave)
}
