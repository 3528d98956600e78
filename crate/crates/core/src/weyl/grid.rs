//! Phase-space sample grids and discretized operator kernels.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs_c, CMat};
use crate::metaplectic::{GridWavefunction, WaveGrid};

/// Anything that can be evaluated at a phase-space point `(x, p)`.
pub trait Symbol {
    fn eval(&self, x: f64, p: f64) -> Complex64;
}

impl<F> Symbol for F
where
    F: Fn(f64, f64) -> Complex64,
{
    fn eval(&self, x: f64, p: f64) -> Complex64 {
        self(x, p)
    }
}

/// Complex samples on the rectangle `x_min + i dx`, `p_min + l dp`
/// (`i < n_x`, `l < n_p`); row index is `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceGrid {
    pub data: CMat,
    pub x_min: f64,
    pub dx: f64,
    pub p_min: f64,
    pub dp: f64,
    pub hbar: f64,
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    n_x: usize,
    n_p: usize,
    x_min: f64,
    dx: f64,
    p_min: f64,
    dp: f64,
    hbar: f64,
}

impl PhaseSpaceGrid {
    pub fn new(data: CMat, x_min: f64, dx: f64, p_min: f64, dp: f64, hbar: f64) -> Result<Self> {
        if data.nrows() < 4 || data.ncols() < 4 {
            return Err(Error::Invalid("phase-space grid needs at least 4x4 samples".into()));
        }
        if !(dx > 0.0 && dp > 0.0 && hbar > 0.0) || !x_min.is_finite() || !p_min.is_finite() {
            return Err(Error::Invalid("grid spacings and hbar must be positive".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("phase-space samples"));
        }
        Ok(PhaseSpaceGrid {
            data,
            x_min,
            dx,
            p_min,
            dp,
            hbar,
        })
    }

    pub fn zeros(n_x: usize, n_p: usize, x_min: f64, dx: f64, p_min: f64, dp: f64, hbar: f64) -> Result<Self> {
        Self::new(CMat::zeros(n_x, n_p), x_min, dx, p_min, dp, hbar)
    }

    /// Symbol grid paired with a wave grid of `N` points: `2N - 1` positions
    /// at spacing `dx/2` (all midpoints `(x_j + x_k)/2`) and `N` centered
    /// momenta covering the full band, `dp = 2 pi hbar / (N dx)`.
    ///
    /// Quantization here is the periodic one: `x` and `p` map to the
    /// multiplication and spectral-derivative matrices exactly, but kernel
    /// lags beyond half the box alias onto short lags.
    pub fn full_band(wave: &WaveGrid) -> Self {
        Self::on_midpoints(wave, 2.0 * PI * wave.hbar / (wave.len as f64 * wave.dx))
    }

    /// Like [`full_band`](Self::full_band) with half the momentum spacing, so the
    /// `N` momenta span exactly one period of the midpoint transform and no
    /// kernel lag aliases. The right grid for symbols decaying in `p`; Wigner
    /// functions and kernel-to-symbol maps land here.
    pub fn half_band(wave: &WaveGrid) -> Self {
        Self::on_midpoints(wave, PI * wave.hbar / (wave.len as f64 * wave.dx))
    }

    fn on_midpoints(wave: &WaveGrid, dp: f64) -> Self {
        let n = wave.len;
        PhaseSpaceGrid {
            data: CMat::zeros(2 * n - 1, n),
            x_min: wave.x_min,
            dx: wave.dx / 2.0,
            p_min: -((n / 2) as f64) * dp,
            dp,
            hbar: wave.hbar,
        }
    }

    /// Centered grid: index `i` sits at `(i - floor(n/2)) d`.
    pub fn centered(n_x: usize, n_p: usize, dx: f64, dp: f64, hbar: f64) -> Result<Self> {
        Self::zeros(
            n_x,
            n_p,
            -((n_x / 2) as f64) * dx,
            dx,
            -((n_p / 2) as f64) * dp,
            dp,
            hbar,
        )
    }

    pub fn sample<S: Symbol + ?Sized>(&self, a: &S) -> PhaseSpaceGrid {
        let mut out = self.clone();
        for i in 0..self.n_x() {
            for l in 0..self.n_p() {
                out.data[(i, l)] = a.eval(self.x(i), self.p(l));
            }
        }
        out
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> PhaseSpaceGrid {
        PhaseSpaceGrid {
            data: self.data.map(f),
            ..self.clone()
        }
    }

    pub fn n_x(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.data.ncols()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn p(&self, l: usize) -> f64 {
        self.p_min + l as f64 * self.dp
    }

    pub fn value(&self, i: usize, l: usize) -> Complex64 {
        self.data[(i, l)]
    }

    pub fn same_geometry(&self, other: &PhaseSpaceGrid) -> bool {
        let close = |a: f64, b: f64, s: f64| (a - b).abs() <= 1e-12 * s;
        self.n_x() == other.n_x()
            && self.n_p() == other.n_p()
            && close(self.x_min, other.x_min, self.dx)
            && close(self.dx, other.dx, self.dx)
            && close(self.p_min, other.p_min, self.dp)
            && close(self.dp, other.dp, self.dp)
            && self.hbar == other.hbar
    }

    pub fn require_same_geometry(&self, other: &PhaseSpaceGrid) -> Result<()> {
        if !self.same_geometry(other) {
            return Err(Error::GridMismatch("phase-space grids differ".into()));
        }
        Ok(())
    }

    /// Wave grid whose midpoints form this grid's position axis.
    pub fn wave_grid(&self) -> Result<WaveGrid> {
        if self.n_x().is_multiple_of(2) {
            return Err(Error::GridMismatch(format!(
                "symbol grid needs an odd number of positions (2N - 1), got {}",
                self.n_x()
            )));
        }
        WaveGrid::new(self.n_x().div_ceil(2), self.x_min, 2.0 * self.dx, self.hbar)
    }

    /// Largest magnitude on the boundary relative to the interior peak.
    pub fn edge_magnitude(&self) -> f64 {
        let peak = max_abs_c(&self.data);
        if peak == 0.0 {
            return 0.0;
        }
        let (nx, np) = (self.n_x(), self.n_p());
        let mut edge = 0.0_f64;
        for i in 0..nx {
            edge = edge.max(self.data[(i, 0)].norm()).max(self.data[(i, np - 1)].norm());
        }
        for l in 0..np {
            edge = edge.max(self.data[(0, l)].norm()).max(self.data[(nx - 1, l)].norm());
        }
        edge / peak
    }

    pub fn check_edge_decay(&self, tol: f64) -> Result<()> {
        let e = self.edge_magnitude();
        if e > tol {
            return Err(Error::EdgeDecay(e));
        }
        Ok(())
    }

    /// `dx dp sum |a|`.
    pub fn l1_norm(&self) -> f64 {
        self.dx * self.dp * self.data.iter().map(|z| z.norm()).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_c(&self.data)
    }

    pub fn max_abs_diff(&self, other: &PhaseSpaceGrid) -> Result<f64> {
        self.require_same_geometry(other)?;
        Ok(max_abs_c(&(&self.data - &other.data)))
    }

    /// Piecewise-cubic Lagrange interpolation; zero outside the rectangle.
    pub fn interpolate(&self, x: f64, p: f64) -> Complex64 {
        let fx = (x - self.x_min) / self.dx;
        let fp = (p - self.p_min) / self.dp;
        let (nx, np) = (self.n_x(), self.n_p());
        if fx < -1e-9 || fp < -1e-9 || fx > (nx - 1) as f64 + 1e-9 || fp > (np - 1) as f64 + 1e-9 {
            return Complex64::new(0.0, 0.0);
        }
        let (ix, wx) = cubic_stencil(fx, nx);
        let (ip, wp) = cubic_stencil(fp, np);
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, wa) in ix.iter().zip(&wx) {
            for (b, wb) in ip.iter().zip(&wp) {
                acc += self.data[(*a, *b)] * (wa * wb);
            }
        }
        acc
    }

    /// Header line, then `x,p,re,im` rows.
    pub fn to_csv_text(&self) -> String {
        let header = GridHeader {
            n_x: self.n_x(),
            n_p: self.n_p(),
            x_min: self.x_min,
            dx: self.dx,
            p_min: self.p_min,
            dp: self.dp,
            hbar: self.hbar,
        };
        let mut out = serde_json::to_string(&header).expect("serializable");
        out.push_str("\nx,p,re,im\n");
        for i in 0..self.n_x() {
            for l in 0..self.n_p() {
                let z = self.data[(i, l)];
                out.push_str(&format!("{:e},{:e},{:e},{:e}\n", self.x(i), self.p(l), z.re, z.im));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim_start();
        let (first, rest) = text
            .split_once('\n')
            .ok_or_else(|| Error::Invalid("phase-space grid file has no rows".into()))?;
        let h: GridHeader = serde_json::from_str(first)
            .map_err(|e| Error::Invalid(format!("phase-space grid header: {e}")))?;
        let mut values = Vec::with_capacity(h.n_x * h.n_p);
        for line in rest.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('x') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Invalid(format!("bad phase-space row: {line}")));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("bad number {s}: {e}")))
            };
            values.push(Complex64::new(num(cols[2])?, num(cols[3])?));
        }
        if values.len() != h.n_x * h.n_p {
            return Err(Error::Invalid(format!(
                "expected {} samples, read {}",
                h.n_x * h.n_p,
                values.len()
            )));
        }
        let data = CMat::from_row_slice(h.n_x, h.n_p, &values);
        Self::new(data, h.x_min, h.dx, h.p_min, h.dp, h.hbar)
    }
}

fn cubic_stencil(f: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let base = (f.floor() as i64 - 1).clamp(0, n as i64 - 4) as usize;
    let idx = [base, base + 1, base + 2, base + 3];
    let mut w = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                w[a] *= (f - idx[b] as f64) / (idx[a] as f64 - idx[b] as f64);
            }
        }
    }
    (idx, w)
}

/// Discretized kernel: `matrix[(j, k)] = K(x_j, x_k) dx`, so that applying
/// the operator is a plain matrix-vector product on samples.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: CMat,
    pub grid: WaveGrid,
}

impl OperatorMatrix {
    pub fn new(matrix: CMat, grid: WaveGrid) -> Result<Self> {
        if matrix.nrows() != grid.len || matrix.ncols() != grid.len {
            return Err(Error::DimensionMismatch {
                expected: grid.len,
                got: matrix.nrows(),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator matrix"));
        }
        Ok(OperatorMatrix { matrix, grid })
    }

    pub fn identity(grid: WaveGrid) -> Self {
        OperatorMatrix {
            matrix: CMat::identity(grid.len, grid.len),
            grid,
        }
    }

    /// Multiplication by `f(x)`.
    pub fn multiplication<F: Fn(f64) -> Complex64>(grid: WaveGrid, f: F) -> Self {
        let d: Vec<Complex64> = grid.xs().into_iter().map(f).collect();
        OperatorMatrix {
            matrix: CMat::from_diagonal(&nalgebra::DVector::from_vec(d)),
            grid,
        }
    }

    pub fn apply(&self, psi: &GridWavefunction) -> Result<GridWavefunction> {
        if !self.grid.approx_eq(&psi.grid()) {
            return Err(Error::GridMismatch("operator and wavefunction grids differ".into()));
        }
        let v = nalgebra::DVector::from_column_slice(psi.samples());
        psi.with_samples((&self.matrix * v).as_slice().to_vec())
    }

    pub fn compose(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if !self.grid.approx_eq(&other.grid) {
            return Err(Error::GridMismatch("operator grids differ".into()));
        }
        Ok(OperatorMatrix {
            matrix: &self.matrix * &other.matrix,
            grid: self.grid,
        })
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            matrix: self.matrix.adjoint(),
            grid: self.grid,
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        max_abs_c(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        max_abs_c(&(&self.matrix - &other.matrix))
    }

    /// Kernel value `K(x_j, x_k)`.
    pub fn kernel(&self, j: usize, k: usize) -> Complex64 {
        self.matrix[(j, k)] / self.grid.dx
    }

    /// Row-major CSV, each entry written as a `re,im` pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|k| {
                    let z = self.matrix[(j, k)];
                    format!("{:e},{:e}", z.re, z.im)
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, grid: WaveGrid) -> Result<Self> {
        let mut values = Vec::new();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let nums = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Invalid(format!("bad number {s}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() != 2 * grid.len {
                return Err(Error::DimensionMismatch {
                    expected: 2 * grid.len,
                    got: nums.len(),
                });
            }
            values.extend(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])));
            rows += 1;
        }
        if rows != grid.len {
            return Err(Error::DimensionMismatch {
                expected: grid.len,
                got: rows,
            });
        }
        Self::new(CMat::from_row_slice(rows, grid.len, &values), grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_geometry() {
        let wave = WaveGrid::centered(64, 5.0, 1.0).unwrap();
        let g = PhaseSpaceGrid::full_band(&wave);
        assert_eq!(g.n_x(), 127);
        assert_eq!(g.n_p(), 64);
        assert!((g.x(2) - wave.x(1)).abs() < 1e-15);
        assert!((g.p(32)).abs() < 1e-15);
        assert!((g.dp * wave.dx * 64.0 - 2.0 * PI).abs() < 1e-12);
        let h = PhaseSpaceGrid::half_band(&wave);
        assert!((2.0 * h.dp - g.dp).abs() < 1e-15);
        assert!(g.wave_grid().unwrap().approx_eq(&wave));
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = PhaseSpaceGrid::centered(21, 17, 0.3, 0.4, 1.0)
            .unwrap()
            .sample(&|x: f64, p: f64| Complex64::new(x * x * x - p * x, p * p));
        let v = g.interpolate(0.37, -0.55);
        let (x, p) = (0.37, -0.55);
        assert!((v - Complex64::new(x * x * x - p * x, p * p)).norm() < 1e-12);
        assert_eq!(g.interpolate(100.0, 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn text_round_trips() {
        let g = PhaseSpaceGrid::centered(5, 4, 0.5, 0.25, 0.7)
            .unwrap()
            .sample(&|x: f64, p: f64| Complex64::new(x, p));
        let back = PhaseSpaceGrid::parse(&g.to_csv_text()).unwrap();
        assert!(back.max_abs_diff(&g).unwrap() < 1e-15);
        let wave = WaveGrid::centered(8, 2.0, 1.0).unwrap();
        let op = OperatorMatrix::multiplication(wave, |x| Complex64::new(x, -x));
        let back = OperatorMatrix::from_csv(&op.to_csv(), wave).unwrap();
        assert_eq!(back, op);
    }
}
