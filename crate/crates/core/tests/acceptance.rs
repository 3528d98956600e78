use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use phasespace::isotopy::{
    affine_flow_from_inhomogeneous, factorized_linear_flow, hamiltonian_from_linear_isotopy, integrate_linear_flow,
    uniform_grid, QuadraticHamiltonian, SampledIsotopy,
};
use phasespace::linalg::{inertia, max_abs, RMat};
use phasespace::metaplectic::{
    apply_generator_to_grid, compose_generators, hw_translate, invert_generator, lift_isotopy, project_generator,
    translate_along_path, Backend, GridWavefunction, HeisenbergWeylOp, MetaplecticGenerator, WaveGrid,
};
use phasespace::propagator::{
    closed_form_propagator, propagate_factorized, propagate_inhomogeneous, propagate_quadratic,
    propagate_quadratic_bracketed, reference_split_step, ClosedForm, Perturbation, DEFAULT_STEP_BUDGET,
};
use phasespace::symplectic::{HamiltonianField, PhasePoint, SymplecticMatrix};
use phasespace::weyl::monomial::{monomial_quantize, Letter, Rule};
use phasespace::weyl::{
    cayley_inverse, cayley_transform, conley_zehnder_nu, first_moment, free_particle_symbols, metaplectic_symbol,
    moyal_star, weyl_minus_born_jordan, weyl_quantize, weyl_quantize_gaussian, wigner, wigner_norm, PhaseSpaceGrid,
    SymbolKind,
};

type Res<T> = Result<T, phasespace::Error>;

/// One measured quantity against its pinned bound.
struct Item {
    label: &'static str,
    value: f64,
    bound: f64,
}

impl Item {
    fn ok(&self) -> bool {
        self.value <= self.bound
    }
}

fn item(label: &'static str, value: f64, bound: f64) -> Item {
    Item { label, value, bound }
}

fn close(a: &RMat, b: &RMat) -> f64 {
    max_abs(&(a - b))
}

fn ground(wave: &WaveGrid, x0: f64, p0: f64) -> Res<GridWavefunction> {
    let c = (PI * wave.hbar).powf(-0.25);
    wave.sample(|x| Complex64::from_polar(c * (-(x - x0).powi(2) / (2.0 * wave.hbar)).exp(), p0 * x / wave.hbar))
}

fn shear_then_inner(t: f64) -> RMat {
    let (s, c) = t.sin_cos();
    let inner = RMat::from_row_slice(2, 2, &[c + t * s, s - t * c, -s, c]);
    let shear = RMat::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
    shear * inner
}

fn rotation(t: f64) -> RMat {
    RMat::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
}

fn classical_factorization() -> Res<Vec<Item>> {
    let mut closed = 0.0_f64;
    let mut rk4 = 0.0_f64;
    for t in [0.5, 1.0, PI / 2.0] {
        closed = closed.max(close(&shear_then_inner(t), &rotation(t)));
        let grid = uniform_grid(t, (t / 1e-3).round() as usize);
        let fac = factorized_linear_flow(&QuadraticHamiltonian::free(), &QuadraticHamiltonian::position_square(), &grid)?;
        let outer = fac.outer.matrices().last().unwrap().matrix();
        let inner = fac.inner.matrices().last().unwrap().matrix();
        rk4 = rk4.max(close(&(outer * inner), &rotation(t)));
    }
    Ok(vec![item("closed-form product", closed, 1e-8), item("RK4 product", rk4, 1e-6)])
}

fn reconstruction() -> Res<Vec<Item>> {
    let grid = uniform_grid(1.0, 10_000);
    let iso = SampledIsotopy::from_fn(&grid, |t| rotation(t + 0.1 * t * t))?;
    let mut err = 0.0_f64;
    for k in (250..10_000).step_by(250) {
        let t = grid[k];
        let rec = hamiltonian_from_linear_isotopy(&iso, t)?;
        err = err.max(close(&rec.matrix, &(RMat::identity(2, 2) * (1.0 + 0.2 * t))));
    }
    Ok(vec![item("max |M - omega' I|", err, 1e-6)])
}

fn composition() -> Res<Vec<Item>> {
    let t = 1.0_f64;
    let den = t.sin() - t * t.cos();
    let (pp, lp, qp) = (t.cos() / den, 1.0 / den, (t.cos() + t * t.sin()) / den);
    let outer = MetaplecticGenerator::scalar(1.0 / t, 1.0 / t, 1.0 / t, 0, 1.0)?;
    let inner = MetaplecticGenerator::scalar(pp, lp, qp, 0, 1.0)?;
    let h = compose_generators(&outer, &inner)?;
    let want = [0.642_092_615_934_330_7, 1.188_395_105_778_121_2, 0.642_092_615_934_330_7];
    let got = [h.p()[(0, 0)], h.l()[(0, 0)], h.q()[(0, 0)]];
    let err = got.iter().zip(want).fold(0.0_f64, |a, (g, w)| a.max((g - w).abs()));

    // Maslov rule on the lifted factors against the lift of the total flow
    let grid = uniform_grid(t, 1000);
    let fac = factorized_linear_flow(&QuadraticHamiltonian::free(), &QuadraticHamiltonian::position_square(), &grid)?;
    let last = grid.len() - 1;
    let go = lift_isotopy(&fac.outer)?.generator(last, 1.0)?;
    let gi = lift_isotopy(&fac.inner)?.generator(last, 1.0)?;
    let k = gi.p() + go.q();
    let rule = (go.maslov() as i64 + gi.maslov() as i64 - inertia(&k) as i64).rem_euclid(4);
    let composed = compose_generators(&go, &gi)?.maslov() as i64;
    let total = lift_isotopy(&integrate_linear_flow(&QuadraticHamiltonian::harmonic(), &grid)?)?.maslov[last] as i64;
    let mismatch = ((rule - total).abs() + (composed - total).abs()) as f64;
    Ok(vec![
        item("(P'', L'', Q'') vs (cot 1, 1/sin 1, cot 1)", err, 1e-10),
        item("Maslov rule vs lifted index (count)", mismatch, 0.0),
    ])
}

fn eigenphase() -> Res<Vec<Item>> {
    let wave = WaveGrid::new(1024, -12.0, 24.0 / 1024.0, 1.0)?;
    let psi = ground(&wave, 0.0, 0.0)?;
    let h = QuadraticHamiltonian::harmonic();
    let quarter = propagate_quadratic(&h, &psi, PI / 2.0)?;
    let want = psi.scaled(Complex64::from_polar(1.0, -PI / 4.0));
    let full = propagate_quadratic_bracketed(&h, &psi, 2.0 * PI, PI / 2.0)?;
    let ov = full.state.inner(&psi)? / psi.norm_sq();
    Ok(vec![
        item("||U_{pi/2} psi0 - e^{-i pi/4} psi0||", quarter.state.l2_distance(&want)?, 1e-6),
        item("|<U_{2 pi} psi0, psi0> + 1|", (ov + 1.0).norm(), 1e-5),
    ])
}

fn quantum_factorization() -> Res<Vec<Item>> {
    let psi = ground(&WaveGrid::centered(512, 12.0, 1.0)?, 0.4, -0.3)?;
    let h1 = Perturbation::Quadratic(QuadraticHamiltonian::position_square());
    let mut quad = 0.0_f64;
    for t in [0.3, 1.0] {
        let lhs = propagate_factorized(&QuadraticHamiltonian::free(), &h1, &psi, t, 0, DEFAULT_STEP_BUDGET)?;
        let rhs = closed_form_propagator(ClosedForm::Harmonic(t), &psi)?;
        quad = quad.max(lhs.state.l2_distance(&rhs)?);
    }
    let psi = ground(&WaveGrid::new(256, -10.0, 20.0 / 256.0, 1.0)?, 0.0, 0.0)?;
    let field = HamiltonianField::from_fn(2, |z, _| z[0].cos()).with_gradient(|z, _| vec![-z[0].sin(), 0.0]);
    let out = propagate_factorized(
        &QuadraticHamiltonian::free(),
        &Perturbation::Field(field),
        &psi,
        1.0,
        1000,
        DEFAULT_STEP_BUDGET,
    )?;
    let reference = reference_split_step(|p| 0.5 * p * p, |x, _| x.cos(), &psi, 1.0, 1000)?;
    Ok(vec![
        item("x^2/2 factorization vs closed form", quad, 1e-8),
        item("cos x factorization vs split-step", out.state.l2_distance(&reference)?, 1e-4),
    ])
}

fn inhomogeneous() -> Res<Vec<Item>> {
    let h = QuadraticHamiltonian::harmonic().with_linear(|_| DVector::from_vec(vec![1.0, 0.0]));
    let wave = WaveGrid::centered(512, 12.0, 1.0)?;
    let psi = ground(&wave, 0.0, 0.0)?;
    let out = propagate_inhomogeneous(&h, &psi, 1.0)?;
    let reference = reference_split_step(|p| 0.5 * p * p, |x, _| 0.5 * x * x + x, &psi, 1.0, 4000)?;
    let split = out.state.l2_distance(&reference)?;

    let (x0, p0) = (0.5, -0.3);
    let moved = propagate_inhomogeneous(&h, &ground(&wave, x0, p0)?, 1.0)?;
    let (mx, mp) = first_moment(&wigner(&moved.state)?);
    let t = 1.0_f64;
    let (s, c) = t.sin_cos();
    // x'' = -x - 1 from (x0, p0)
    let oracle = [x0 * c + p0 * s + c - 1.0, -x0 * s + p0 * c - s];
    let flow = affine_flow_from_inhomogeneous(&h, &uniform_grid(t, 1000))?;
    let zt = flow.affine(flow.len() - 1).apply(&DVector::from_vec(vec![x0, p0]));
    let moment = (mx.re - zt[0]).abs().max((mp.re - zt[1]).abs());
    let flow_vs_oracle = (zt[0] - oracle[0]).abs().max((zt[1] - oracle[1]).abs());
    Ok(vec![
        item("closed form vs split-step (L2, with phase)", split, 1e-4),
        item("Wigner mean vs affine flow", moment, 1e-4),
        item("affine flow vs solved trajectory", flow_vs_oracle, 1e-4),
    ])
}

fn covariance() -> Res<Vec<Item>> {
    let n = 256;
    let dx = (2.0 * PI / n as f64).sqrt();
    let wave = WaveGrid::new(n, -((n / 2) as f64) * dx, dx, 1.0)?;
    let psi = ground(&wave, -0.6, 0.9)?;
    let f = MetaplecticGenerator::fourier(1, 0, 1.0);
    let z0 = PhasePoint::xp(-5.0 * dx, 7.0 * dx);
    let sz0 = project_generator(&f).apply(&z0);
    // J z0 = (p0, -x0)
    let j = [7.0 * dx, 5.0 * dx];
    let image_err = (sz0.as_slice()[0] - j[0]).abs() + (sz0.as_slice()[1] - j[1]).abs();
    let lhs = apply_generator_to_grid(&invert_generator(&f), &psi, Backend::Direct)?;
    let lhs = hw_translate(&HeisenbergWeylOp::new(z0, 1.0), &lhs, false)?;
    let lhs = apply_generator_to_grid(&f, &lhs, Backend::Direct)?;
    let rhs = hw_translate(&HeisenbergWeylOp::new(sz0, 1.0), &psi, false)?;
    Ok(vec![
        item("||S T(z0) S^-1 psi - T(S z0) psi||", lhs.l2_distance(&rhs)?, 1e-8),
        item("|S z0 - J z0|", image_err, 1e-12),
    ])
}

fn cayley() -> Res<Vec<Item>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut sym, mut anti, mut inv) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut tested = 0;
    while tested < 100 {
        let s = SymplecticMatrix::random(1, &mut rng);
        if (s.matrix() - RMat::identity(2, 2)).determinant().abs() <= 1e-6 {
            continue;
        }
        let phi = cayley_transform(&s)?;
        sym = sym.max(phi.symmetry_defect());
        anti = anti.max(close(cayley_transform(&s.inverse())?.matrix(), &(-phi.matrix())));
        inv = inv.max(close(cayley_inverse(phi.matrix())?.matrix(), s.matrix()));
        tested += 1;
    }
    Ok(vec![
        item("symmetry of Phi(S)", sym, 1e-10),
        item("Phi(S^-1) + Phi(S)", anti, 1e-10),
        item("Phi^-1(Phi(S)) - S", inv, 1e-10),
    ])
}

fn weyl_symbols() -> Res<Vec<Item>> {
    let wave = WaveGrid::centered(256, 12.0, 1.0)?;
    let psi = ground(&wave, 0.5, 0.3)?;
    let t = 1.3;
    let op = weyl_quantize_gaussian(&free_particle_symbols(t, 1.0).weyl_gaussian(), &wave)?;
    // free Gaussian spreading in closed form
    let (x0, p0) = (0.5, 0.3);
    let a = Complex64::new(1.0, t);
    let oracle = wave.sample(|x| {
        let xc = x - x0 - p0 * t;
        PI.powf(-0.25) / a.sqrt() * (-(xc * xc) / (2.0 * a) + Complex64::new(0.0, p0 * x - p0 * p0 * t / 2.0)).exp()
    })?;
    let free = op.apply(&psi)?.l2_distance(&oracle)?;
    let mut meta = 0.0_f64;
    for t in [0.7, 2.0] {
        let g = MetaplecticGenerator::harmonic(t, 0, 1.0)?;
        let nu = conley_zehnder_nu(&g)? as i64;
        let sym = metaplectic_symbol(&SymplecticMatrix::rotation(t), nu, SymbolKind::Weyl, 1.0)?;
        let op = weyl_quantize_gaussian(&sym, &wave)?;
        meta = meta.max(op.apply(&psi)?.l2_distance(&apply_generator_to_grid(&g, &psi, Backend::Direct)?)?);
    }
    Ok(vec![
        item("Op(exp(-i p^2 t/2)) psi vs free spreading", free, 1e-6),
        item("Op(metaplectic symbol) vs quadratic Fourier", meta, 1e-5),
    ])
}

fn gauss(x0: f64, p0: f64, w: f64, k: f64) -> impl Fn(f64, f64) -> Complex64 {
    move |x, p| Complex64::from_polar((-((x - x0).powi(2) + (p - p0).powi(2)) / w).exp(), k * (x + 0.5 * p))
}

fn square(n: usize) -> Res<PhaseSpaceGrid> {
    let d = (2.0 * PI / n as f64).sqrt();
    PhaseSpaceGrid::centered(n, n, d, d, 1.0)
}

fn moyal() -> Res<Vec<Item>> {
    let n = 64;
    let wave = WaveGrid::centered(n, (PI * n as f64 / 4.0).sqrt(), 1.0)?;
    let g = PhaseSpaceGrid::half_band(&wave);
    let a = g.sample(&gauss(0.4, -0.2, 1.0, 0.25));
    let b = g.sample(&gauss(-0.1, 0.5, 1.3, -0.15));
    let product = weyl_quantize(&moyal_star(&a, &b)?)?.max_abs_diff(&weyl_quantize(&a)?.compose(&weyl_quantize(&b)?)?);

    let sq = square(144)?;
    let win = |x: f64, p: f64| (-((x * x + p * p) / 90.25).powi(4)).exp();
    let xs = sq.sample(&move |x: f64, p: f64| Complex64::new(x * win(x, p), 0.0));
    let ps = sq.sample(&move |x: f64, p: f64| Complex64::new(p * win(x, p), 0.0));
    let xp = moyal_star(&xs, &ps)?;
    let mut canon = 0.0_f64;
    for i in 0..sq.n_x() {
        for l in 0..sq.n_p() {
            let (x, p) = (sq.x(i), sq.p(l));
            if x * x + p * p <= 1.0 {
                canon = canon.max((xp.data[(i, l)] - Complex64::new(x * p, 0.5)).norm());
            }
        }
    }

    let g = square(64)?;
    let (a, b, c) = (
        g.sample(&gauss(0.2, 0.1, 1.0, 0.2)),
        g.sample(&gauss(-0.3, 0.2, 0.8, -0.1)),
        g.sample(&gauss(0.1, -0.3, 1.2, 0.3)),
    );
    let assoc = moyal_star(&moyal_star(&a, &b)?, &c)?.max_abs_diff(&moyal_star(&a, &moyal_star(&b, &c)?)?)?;
    Ok(vec![
        item("Op(a * b) - Op(a) Op(b)", product, 1e-6),
        item("x * p - x p - i hbar/2 (interior)", canon, 1e-6),
        item("(a * b) * c - a * (b * c)", assoc, 1e-6),
    ])
}

fn wigner_invariance() -> Res<Vec<Item>> {
    let n = 256;
    let dx = (PI / n as f64).sqrt();
    let wave = WaveGrid::new(n, -((n / 2) as f64) * dx, dx, 1.0)?;
    let psi = ground(&wave, 0.4, -0.3)?;
    let windows = [
        ground(&wave, -0.5, 0.4)?,
        wave.sample(|x| Complex64::new((-2.0 * (x - 0.2).powi(2)).exp(), 0.0))?,
        wave.sample(|x| Complex64::from_polar((-(x * x) / 3.0).exp(), 0.3 * x * x))?,
    ];
    let dp = PhaseSpaceGrid::half_band(&wave).dp;
    let op = HeisenbergWeylOp::new(PhasePoint::xp(-4.0 * dx, 6.0 * dp), 1.0);
    let f = MetaplecticGenerator::fourier(1, 0, 1.0);
    let (mut tr, mut ft) = (0.0_f64, 0.0_f64);
    for phi in &windows {
        let n0 = wigner_norm(&psi, phi)?;
        let nt = wigner_norm(&hw_translate(&op, &psi, false)?, &hw_translate(&op, phi, false)?)?;
        let nf = wigner_norm(
            &apply_generator_to_grid(&f, &psi, Backend::Direct)?,
            &apply_generator_to_grid(&f, phi, Backend::Direct)?,
        )?;
        tr = tr.max((nt - n0).abs() / n0);
        ft = ft.max((nf - n0).abs() / n0);
    }
    Ok(vec![
        item("relative change under lattice T(z0)", tr, 1e-6),
        item("relative change under Fourier", ft, 1e-4),
    ])
}

fn momentum(psi: &GridWavefunction) -> Vec<Complex64> {
    let n = psi.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = psi.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let ks = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        *b *= Complex64::new(psi.hbar() * 2.0 * PI * ks / (n as f64 * psi.dx()), 0.0) / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

fn berry() -> Res<Vec<Item>> {
    let dt = 1e-3;
    let steps = (2.0 * PI / dt).round() as usize;
    let times = uniform_grid(2.0 * PI, steps);
    let path: Vec<PhasePoint> = times.iter().map(|t| PhasePoint::xp(t.cos(), t.sin())).collect();
    let tr = translate_along_path(&times, &path, 1.0)?;
    let loop_err = (tr.loop_phase.unwrap_or(f64::NAN) - PI).abs();
    let h = times[1] - times[0];
    let psi0 = ground(&WaveGrid::centered(256, 10.0, 1.0)?, -0.3, 0.2)?;
    let state = |k: usize| -> Res<GridWavefunction> {
        Ok(hw_translate(&tr.ops[k], &psi0, true)?.scaled(Complex64::from_polar(1.0, tr.chi[k])))
    };
    let mut residual = 0.0_f64;
    for k in (5..steps - 5).step_by(steps / 12) {
        let (prev, cur, next) = (state(k - 1)?, state(k)?, state(k + 1)?);
        let (xd, pd) = (-times[k].sin(), times[k].cos());
        let ph = momentum(&cur);
        let r: Vec<Complex64> = (0..cur.len())
            .map(|j| {
                Complex64::new(0.0, 1.0) * (next.samples()[j] - prev.samples()[j]) / (2.0 * h) - ph[j] * xd
                    + cur.samples()[j] * (cur.x(j) * pd)
            })
            .collect();
        residual = residual.max(cur.with_samples(r)?.norm());
    }
    Ok(vec![
        item("|chi(2 pi) - pi|", loop_err, 1e-8),
        item("Schrodinger residual along the loop", residual, 1e-4),
    ])
}

/// `x^a` with `kappa^k` weights, `kappa = -i hbar`; key `(a, k)`.
type Poly = BTreeMap<(u32, u32), Rational64>;

/// Applies words right to left: `x` multiplies, `p` is `kappa d/dx`.
fn act(words: &[(Rational64, phasespace::weyl::Word)], d: u32) -> Poly {
    let mut out = Poly::new();
    for (c, w) in words {
        let mut g = Poly::from([((d, 0), Rational64::from_integer(1))]);
        for &(l, e) in w.0.iter().rev() {
            for _ in 0..e {
                let mut h = Poly::new();
                for (&(a, k), v) in &g {
                    match l {
                        Letter::X => *h.entry((a + 1, k)).or_default() += *v,
                        Letter::P if a > 0 => *h.entry((a - 1, k + 1)).or_default() += *v * Rational64::from(a as i64),
                        Letter::P => {}
                    }
                }
                g = h;
            }
        }
        for (k, v) in g {
            *out.entry(k).or_default() += v * *c;
        }
    }
    out.retain(|_, v| *v != Rational64::from_integer(0));
    out
}

fn quantization_rules() -> Res<Vec<Item>> {
    let mut differing = 0;
    for s in 0..=8u32 {
        for r in 0..=(8 - s) {
            if (s <= 1 || r <= 1) && !weyl_minus_born_jordan(s, r)?.is_zero() {
                differing += 1;
            }
        }
    }
    let diff = weyl_minus_born_jordan(2, 2)?;
    let c = diff.coefficient(0, 0, 2);
    let pure = diff.is_scalar() && diff.0.len() == 1 && c != Rational64::from_integer(0);
    let mut words = monomial_quantize(2, 2, Rule::Weyl)?;
    words.extend(monomial_quantize(2, 2, Rule::BornJordan)?.into_iter().map(|(c, w)| (-c, w)));
    let mut oracle_mismatch = 0;
    for d in 0..6 {
        let want = Poly::from([((d, 2), c)]);
        if act(&words, d) != want {
            oracle_mismatch += 1;
        }
    }
    Ok(vec![
        item("(s, r) pairs where the rules differ", differing as f64, 0.0),
        item("s = r = 2 not a nonzero pure hbar^2 constant", (!pure) as u8 as f64, 0.0),
        item("mismatches with commutator-reduction oracle", oracle_mismatch as f64, 0.0),
    ])
}

type Criterion = (u32, &'static str, f64, fn() -> Res<Vec<Item>>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        (1, "classical factorization", 1.0, classical_factorization),
        (2, "Hamiltonian reconstruction", 1.0, reconstruction),
        (3, "metaplectic composition", 1.0, composition),
        (4, "quadratic propagator eigenphase", 5.0, eigenphase),
        (5, "quantum factorization", 30.0, quantum_factorization),
        (6, "inhomogeneous closed form", 30.0, inhomogeneous),
        (7, "covariance", 1.0, covariance),
        (8, "Cayley suite", 1.0, cayley),
        (9, "Weyl-symbol consistency", 10.0, weyl_symbols),
        (10, "Moyal suite", 10.0, moyal),
        (11, "Wigner-norm invariance", 10.0, wigner_invariance),
        (12, "loop phase", 5.0, berry),
        (13, "quantization rules", 1.0, quantization_rules),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(items) => {
                let ok = items.iter().all(Item::ok) && secs < budget;
                let detail: Vec<String> = items
                    .iter()
                    .map(|i| format!("{} = {:.3e} (<= {:.0e})", i.label, i.value, i.bound))
                    .collect();
                println!(
                    "{} {id:>2} {name}: {}; runtime {secs:.2}s (< {budget}s)",
                    if ok { "PASS" } else { "FAIL" },
                    detail.join("; ")
                );
                failed += usize::from(!ok);
            }
            Err(e) => {
                println!("FAIL {id:>2} {name}: error {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
