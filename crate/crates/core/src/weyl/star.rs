//! Symplectic Fourier transform, Moyal product and twisted convolution on grids.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::grid::PhaseSpaceGrid;
use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const EDGE_TOL: f64 = 1e-10;

fn signed(k: usize, n: usize) -> i64 {
    k as i64 - (n / 2) as i64
}

fn is_centered(a: &PhaseSpaceGrid) -> bool {
    let cx = -((a.n_x() / 2) as f64) * a.dx;
    let cp = -((a.n_p() / 2) as f64) * a.dp;
    (a.x_min - cx).abs() <= 1e-12 * a.dx && (a.p_min - cp).abs() <= 1e-12 * a.dp
}

/// `a_sigma(z) = (2 pi hbar)^{-1} int exp(-i sigma(z, z') / hbar) a(z') dz'`.
///
/// The output is centered with `dx' = 2 pi hbar / (N_p dp)` and
/// `dp' = 2 pi hbar / (N_x dx)`; the axis lengths swap. On centered grids
/// applying it twice returns the input exactly. Set `periodic` to skip the
/// edge-decay guard.
pub fn symplectic_fourier(a: &PhaseSpaceGrid, periodic: bool) -> Result<PhaseSpaceGrid> {
    if !periodic {
        a.check_edge_decay(EDGE_TOL)?;
    }
    let (nx, np) = (a.n_x(), a.n_p());
    let hbar = a.hbar;
    let dx_out = 2.0 * PI * hbar / (np as f64 * a.dp);
    let dp_out = 2.0 * PI * hbar / (nx as f64 * a.dx);
    let mut planner = FftPlanner::<f64>::new();
    let inv_p = planner.plan_fft_inverse(np);
    let fwd_x = planner.plan_fft_forward(nx);
    // along p: sum_l a[i,l] exp(+2 pi i (k - h_p) l / N_p)
    let rows: Vec<Vec<Complex64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut buf: Vec<Complex64> = (0..np).map(|l| a.data[(i, l)]).collect();
            inv_p.process(&mut buf);
            (0..np)
                .map(|k| buf[signed(k, np).rem_euclid(np as i64) as usize])
                .collect()
        })
        .collect();
    // along x: sum_i b[i,k] exp(-2 pi i (k' - h_x) i / N_x)
    let cols: Vec<Vec<Complex64>> = (0..np)
        .into_par_iter()
        .map(|k| {
            let mut buf: Vec<Complex64> = (0..nx).map(|i| rows[i][k]).collect();
            fwd_x.process(&mut buf);
            (0..nx)
                .map(|kk| buf[signed(kk, nx).rem_euclid(nx as i64) as usize])
                .collect()
        })
        .collect();
    let pref = a.dx * a.dp / (2.0 * PI * hbar);
    let x_min = -((np / 2) as f64) * dx_out;
    let p_min = -((nx / 2) as f64) * dp_out;
    let data = CMat::from_fn(np, nx, |k, kk| {
        let x = x_min + k as f64 * dx_out;
        let p = p_min + kk as f64 * dp_out;
        cols[k][kk] * Complex64::from_polar(pref, (x * a.p_min - p * a.x_min) / hbar)
    });
    PhaseSpaceGrid::new(data, x_min, dx_out, p_min, dp_out, hbar)
}

fn fft2(data: &CMat, inverse: bool) -> CMat {
    let (nr, nc) = (data.nrows(), data.ncols());
    let mut planner = FftPlanner::<f64>::new();
    let (fr, fc) = if inverse {
        (planner.plan_fft_inverse(nr), planner.plan_fft_inverse(nc))
    } else {
        (planner.plan_fft_forward(nr), planner.plan_fft_forward(nc))
    };
    let mut out = data.clone();
    for i in 0..nr {
        let mut row: Vec<Complex64> = out.row(i).iter().copied().collect();
        fc.process(&mut row);
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    for j in 0..nc {
        let mut col: Vec<Complex64> = out.column(j).iter().copied().collect();
        fr.process(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

fn wrap(s: i64, n: usize) -> usize {
    s.rem_euclid(n as i64) as usize
}

/// Moyal product from its Fourier form: plane waves multiply as
/// `e^{i zeta z} * e^{i eta z} = e^{i (zeta + eta) z} e^{-(i hbar/2)(zeta_x eta_p - zeta_p eta_x)}`.
/// Frequency sums leaving the band are dropped rather than wrapped.
pub fn moyal_star(a: &PhaseSpaceGrid, b: &PhaseSpaceGrid) -> Result<PhaseSpaceGrid> {
    moyal_star_with(a, b, false)
}

/// [`moyal_star`] with the edge-decay guard optionally skipped for
/// periodic data.
pub fn moyal_star_with(a: &PhaseSpaceGrid, b: &PhaseSpaceGrid, periodic: bool) -> Result<PhaseSpaceGrid> {
    a.require_same_geometry(b)?;
    if !periodic {
        a.check_edge_decay(EDGE_TOL)?;
        b.check_edge_decay(EDGE_TOL)?;
    }
    let (nx, np) = (a.n_x(), a.n_p());
    let fa = fft2(&a.data, false);
    let fb = fft2(&b.data, false);
    // zeta_x eta_p = alpha k q' with integer frequency labels
    let alpha = 4.0 * PI * PI / (nx as f64 * np as f64 * a.dx * a.dp);
    let beta = -0.5 * a.hbar * alpha;
    let (kx_lo, kx_hi) = (-((nx / 2) as i64), ((nx - 1) / 2) as i64);
    let (kp_lo, kp_hi) = (-((np / 2) as i64), ((np - 1) / 2) as i64);
    let span = (kx_hi.max(-kx_lo) * kp_hi.max(-kp_lo) * 2) as usize;
    let table: Vec<Complex64> = (0..=2 * span)
        .map(|s| Complex64::from_polar(1.0, beta * (s as f64 - span as f64)))
        .collect();
    let out_cols: Vec<Vec<Complex64>> = (kx_lo..=kx_hi)
        .into_par_iter()
        .map(|kk| {
            let mut col = vec![Complex64::new(0.0, 0.0); np];
            for qq in kp_lo..=kp_hi {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in (kk - kx_hi).max(kx_lo)..=(kk - kx_lo).min(kx_hi) {
                    let k2 = kk - k;
                    for q in (qq - kp_hi).max(kp_lo)..=(qq - kp_lo).min(kp_hi) {
                        let q2 = qq - q;
                        let s = k * q2 - q * k2;
                        acc += fa[(wrap(k, nx), wrap(q, np))]
                            * fb[(wrap(k2, nx), wrap(q2, np))]
                            * table[(s + span as i64) as usize];
                    }
                }
                col[wrap(qq, np)] = acc;
            }
            col
        })
        .collect();
    let mut spec = CMat::zeros(nx, np);
    for (idx, kk) in (kx_lo..=kx_hi).enumerate() {
        for q in 0..np {
            spec[(wrap(kk, nx), q)] = out_cols[idx][q];
        }
    }
    let norm = 1.0 / (nx as f64 * np as f64);
    let back = fft2(&spec, true) * Complex64::new(norm * norm, 0.0);
    PhaseSpaceGrid::new(back, a.x_min, a.dx, a.p_min, a.dp, a.hbar)
}

/// `a # b (z) = (2 pi hbar)^{-1} int exp(i sigma(z, z') / 2 hbar) a(z - z') b(z') dz'`
/// on a centered grid; samples of `a` outside the grid count as zero.
pub fn twisted_convolution(a: &PhaseSpaceGrid, b: &PhaseSpaceGrid) -> Result<PhaseSpaceGrid> {
    a.require_same_geometry(b)?;
    if !is_centered(a) {
        return Err(Error::GridMismatch("twisted convolution needs a centered grid".into()));
    }
    a.check_edge_decay(EDGE_TOL)?;
    b.check_edge_decay(EDGE_TOL)?;
    let (nx, np) = (a.n_x(), a.n_p());
    let (hx, hp) = ((nx / 2) as i64, (np / 2) as i64);
    let hbar = a.hbar;
    let pref = a.dx * a.dp / (2.0 * PI * hbar);
    // sigma(z, z') = dx dp (l i' - i l') in index units
    let c = a.dx * a.dp / (2.0 * hbar);
    let rows: Vec<Vec<Complex64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let si = i as i64 - hx;
            (0..np)
                .map(|l| {
                    let sl = l as i64 - hp;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i2 in 0..nx {
                        let si2 = i2 as i64 - hx;
                        let di = si - si2 + hx;
                        if di < 0 || di >= nx as i64 {
                            continue;
                        }
                        for l2 in 0..np {
                            let sl2 = l2 as i64 - hp;
                            let dl = sl - sl2 + hp;
                            if dl < 0 || dl >= np as i64 {
                                continue;
                            }
                            let phase = c * (sl * si2 - si * sl2) as f64;
                            acc += a.data[(di as usize, dl as usize)]
                                * b.data[(i2, l2)]
                                * Complex64::from_polar(1.0, phase);
                        }
                    }
                    acc * pref
                })
                .collect()
        })
        .collect();
    let data = CMat::from_fn(nx, np, |i, l| rows[i][l]);
    PhaseSpaceGrid::new(data, a.x_min, a.dx, a.p_min, a.dp, a.hbar)
}
