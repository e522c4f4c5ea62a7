//! Invariant checks shared by the property and acceptance suites.
//!
//! Each check panics on failure. Randomized checks draw their inputs from a
//! deterministic proptest runner, so every run sees the same cases.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use logfb::cli;
use logfb::diagnostics::{
    default_radii, default_tau, dyadic_radii, extract_free_boundary, find_branch_points,
    fit_growth_law, gradient_modulus_curve, growth_curve, nondegeneracy_curve, CurvePoint, Phase,
};
use logfb::grid::io::{read_field, write_field, FieldHeader};
use logfb::grid::{build_grid, disk_mask, BallView, DiskRule, FnField, Grid, Point, ScalarField};
use logfb::harmonic::{
    basis_eval, harmonic_decay_check, harmonic_extension, project_quadratic,
    subpoly_defect,
};
use logfb::moduli::{
    density, density_reg, density_slope, drift_budget, drift_density, mu, scale_weights,
    GrowthModuli, ScaleParams,
};
use logfb::radial::{integrate_one_phase, integrate_two_phase_1d};
use logfb::scaling::{scaling_identity_defect, weiss_energy, weiss_trace, ScaleOptions};
use logfb::solver::{el_residual, solve, solve_cascadic, BoundaryData, SolveConfig, Solution};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Check = (&'static str, fn());

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs `test` on `cases` deterministic draws of `strategy`.
pub fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    if let Err(e) = runner(cases).run(&strategy, test) {
        panic!("{e}");
    }
}

/// One deterministic draw of `strategy`.
pub fn draw<S: Strategy>(strategy: S) -> S::Value {
    strategy.new_tree(&mut runner(1)).expect("strategy").current()
}

// ---------------------------------------------------------------- fixtures

pub struct Timed<T> {
    pub value: T,
    pub elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let t = Instant::now();
    let value = f();
    Timed {
        value,
        elapsed: t.elapsed(),
    }
}

pub fn log_params() -> ScaleParams {
    ScaleParams::new(1.0, 1.0).unwrap()
}

pub fn classical_params() -> ScaleParams {
    ScaleParams::classical(1.0, 2.0).unwrap()
}

/// `½ (x₁)₊² - (x₁)₋²`.
pub fn classical_exact(x: Point) -> f64 {
    let t = x[0];
    if t > 0.0 {
        0.5 * t * t
    } else {
        -t * t
    }
}

/// Direct single-threaded solve of the classical problem at `N = 257`.
pub fn classical_solution() -> &'static Timed<Solution> {
    static CELL: OnceLock<Timed<Solution>> = OnceLock::new();
    CELL.get_or_init(|| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        pool.install(|| {
            timed(|| {
                let g = build_grid(257).unwrap();
                let cfg = SolveConfig::new(classical_params(), BoundaryData::Classical1d { c: 0.0 });
                solve(&cfg, &g).unwrap()
            })
        })
    })
}

/// Log-case solution with trace `cos θ`, `λ± = 1`, by cascade from `N/4`.
pub fn log_solution(n: usize) -> &'static Timed<Solution> {
    static S257: OnceLock<Timed<Solution>> = OnceLock::new();
    static S513: OnceLock<Timed<Solution>> = OnceLock::new();
    let cell = match n {
        257 => &S257,
        513 => &S513,
        _ => panic!("no cached log solution at N={n}"),
    };
    cell.get_or_init(|| {
        timed(|| {
            let g = build_grid(n).unwrap();
            let cfg = SolveConfig::new(log_params(), BoundaryData::Cosine { k: 1, amplitude: 1.0 });
            solve_cascadic(&cfg, &g, (n - 1) / 4 + 1).unwrap()
        })
    })
}

/// Branch point of `u` nearest the origin.
pub fn nearest_branch_point(u: &ScalarField) -> Point {
    let bp = find_branch_points(u, default_tau(u.grid().h())).unwrap();
    *bp.iter()
        .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
        .expect("no branch point")
}

fn field(n: usize, f: impl Fn(Point) -> f64) -> ScalarField {
    ScalarField::from_fn(build_grid(n).unwrap(), 1.0, f).unwrap()
}

/// Cubic polynomial with coefficients of `1, x, y, x², xy, y², x³, x²y, xy², y³`.
fn cubic(c: &[f64]) -> impl Fn(Point) -> f64 + '_ {
    move |p: Point| {
        let (x, y) = (p[0], p[1]);
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
            + c[6] * x * x * x + c[7] * x * x * y + c[8] * x * y * y + c[9] * y * y * y
    }
}

fn coeffs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, k)
}

fn lambda() -> impl Strategy<Value = f64> {
    0.25..4.0f64
}

/// Scales `1` and `2⁻ᵏ`, `k = 1..40`.
fn scale() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), (1..=40i32).prop_map(|k| 0.5f64.powi(k))]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

// ---------------------------------------------------------------- moduli

pub fn moduli_branch_identity() {
    check(512, (lambda(), lambda(), -10.0..10.0f64), |(lp, lm, t)| {
        let p1 = ScaleParams::new(lp, lm).unwrap();
        let p0 = ScaleParams::classical(lp, lm).unwrap();
        let w = if t > 0.0 { lp } else { lm };
        let f = if t == 0.0 { 0.0 } else { w * t.abs() * (1.0 - t.abs().ln()) };
        let f0 = w * t.abs();
        prop_assert_eq!(density(t, &p1), f);
        prop_assert_eq!(density(t, &p0), f0);
        prop_assert_eq!(density(0.0, &p1), 0.0);
        Ok(())
    });
}

pub fn moduli_nonnegative() {
    for i in 0..=200 {
        let t = -1.0 + 0.01 * i as f64;
        for k in 0..=40 {
            let p = ScaleParams::new(1.0, 1.0).unwrap().with_scale(0.5f64.powi(k)).unwrap();
            assert!(density(t, &p) >= 0.0, "F_r({t}) < 0 at r = 2^-{k}");
        }
    }
    check(512, (lambda(), lambda(), -1.0..=1.0f64, 1e-300..=1.0f64), |(lp, lm, t, r)| {
        let p = ScaleParams::new(lp, lm).unwrap().with_scale(r).unwrap();
        prop_assert!(density(t, &p) >= 0.0);
        Ok(())
    });
}

pub fn moduli_slope_matches_difference_quotient() {
    let delta = 1e-7;
    let strat = (lambda(), lambda(), scale(), -2.0..1.0f64, any::<bool>());
    check(512, strat, |(lp, lm, r, e, neg)| {
        let p = ScaleParams::new(lp, lm).unwrap().with_scale(r).unwrap();
        let t = 10f64.powf(e) * if neg { -1.0 } else { 1.0 };
        let fd = (density(t + delta, &p) - density(t - delta, &p)) / (2.0 * delta);
        let f = density_slope(t, &p);
        // relative to |f|, with a floor of max λ at roots of the slope
        let err = (fd - f).abs() / f.abs().max(lp.max(lm));
        prop_assert!(err <= 1e-6, "t={t} r={r}: fd {fd} vs {f}");
        Ok(())
    });
}

fn sup_distance_to_classical(p: &ScaleParams) -> f64 {
    let p0 = ScaleParams { r: 0.0, ..*p };
    let mut sup = 0.0f64;
    for i in 0..=4000 {
        let m = 10f64.powf(-12.0 + 13.0 * i as f64 / 4000.0);
        for t in [m, -m] {
            sup = sup.max((density(t, p) - density(t, &p0)).abs());
        }
    }
    sup
}

pub fn moduli_sup_distance_decreases() {
    check(8, (lambda(), lambda()), |(lp, lm)| {
        let sups: Vec<f64> = (0..=40)
            .map(|k| sup_distance_to_classical(&ScaleParams::new(lp, lm).unwrap().with_scale(0.5f64.powi(k)).unwrap()))
            .collect();
        for k in 0..40 {
            prop_assert!(sups[k + 1] <= sups[k] * (1.0 + 1e-12), "k={k}: {} > {}", sups[k + 1], sups[k]);
        }
        // explicit bound λ (10 (ln L + ln 10) + 1) / L, which tends to 0
        for (k, s) in sups.iter().enumerate().skip(1) {
            let l = 1.0 + 2.0 * k as f64 * 2f64.ln();
            prop_assert!(*s <= lp.max(lm) * (10.0 * (l.ln() + 10f64.ln()) + 1.0) / l);
        }
        prop_assert!(sups[40] < 0.1 * sups[0]);
        Ok(())
    });
}

pub fn moduli_scale_weights_monotone() {
    let mut rs: Vec<f64> = (0..=60).map(|k| 0.5f64.powi(k)).collect();
    rs.extend((1..100).map(|k| k as f64 / 100.0));
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    for w in rs.windows(2) {
        assert!(mu(w[1]) > mu(w[0]), "μ not increasing at {:?}", w);
    }
    let open: Vec<f64> = rs.iter().copied().filter(|&r| r < 1.0).collect();
    for w in open.windows(2) {
        let (_, a0) = scale_weights(w[0]).unwrap();
        let (_, a1) = scale_weights(w[1]).unwrap();
        assert!(a0 >= 1.0 && a1 > a0, "α not increasing at {:?}", w);
    }
}

pub fn moduli_regularization_bound() {
    let strat = (lambda(), lambda(), prop_oneof![Just(1.0), 1e-6..1.0f64], -9.0..-1.0f64, -1.0..=1.0f64);
    check(1024, strat, |(lp, lm, r, le, t)| {
        let eps = 10f64.powf(le);
        let p = ScaleParams::new(lp, lm).unwrap().with_scale(r).unwrap();
        let reg = density_reg(t, &p.with_eps(eps).unwrap()).unwrap();
        let bound = (lp + lm) * eps * (1.0 + eps.ln().abs());
        prop_assert!((reg - density(t, &p)).abs() <= bound);
        Ok(())
    });
}

pub fn moduli_swap_symmetry() {
    check(1024, (lambda(), lambda(), scale(), -10.0..10.0f64), |(lp, lm, r, t)| {
        let p = ScaleParams::new(lp, lm).unwrap().with_scale(r).unwrap();
        prop_assert_eq!(density(-t, &p).to_bits(), density(t, &p.swapped()).to_bits());
        prop_assert_eq!(density_slope(-t, &p), -density_slope(t, &p.swapped()));
        Ok(())
    });
}

pub fn moduli_parameter_validation() {
    assert!(ScaleParams::new(0.0, 1.0).is_err());
    assert!(ScaleParams::new(1.0, f64::NAN).is_err());
    assert!(ScaleParams::new(1.0, 1.0).unwrap().with_scale(1.5).is_err());
    assert!(ScaleParams::new(1.0, 1.0).unwrap().with_eps(1.0).is_err());
    assert!(density_reg(0.5, &log_params()).is_err());
    assert!(GrowthModuli::new(0.0, 1).is_err());
    assert!(scale_weights(1.0).is_err());
}

// ---------------------------------------------------------------- grid

pub fn grid_cubic_reproduction() {
    let strat = (prop::sample::select(vec![33usize, 65, 129]), coeffs(10), prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 100));
    check(24, strat, |(n, c, pts)| {
        let u = field(n, cubic(&c));
        let f = cubic(&c);
        let band = u.grid().safe_band();
        for (a, b) in pts {
            let x = [a * band, b * band];
            let (v, _) = u.sample(x).unwrap();
            prop_assert!((v - f(x)).abs() <= 1e-11, "N={n} x={x:?}: {v} vs {}", f(x));
        }
        Ok(())
    });
}

pub fn grid_mask_area_converges() {
    check(8, 0.3..0.95f64, |r| {
        let exact = PI * r * r;
        for n in [33usize, 65, 129, 257, 513] {
            let g = build_grid(n).unwrap();
            let err = (disk_mask(&g, r, [0.0, 0.0]).unwrap().area() - exact).abs();
            prop_assert!(err <= 2.0 * PI * r * g.h(), "N={n} r={r}: area error {err}");
        }
        Ok(())
    });
}

pub fn grid_gradient_matches_difference_quotient() {
    let delta = 1e-5;
    let strat = (prop::collection::vec(-1.5..1.5f64, 4), prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 50));
    check(16, strat, |(c, pts)| {
        let f = |x: Point| (c[0] * x[0] + c[1] * x[1]).sin() + (c[2] * x[0]).exp() * x[1] + c[3] * x[0] * x[1] * x[1];
        let u = field(129, f);
        let band = u.grid().safe_band() - delta;
        for (a, b) in pts {
            let x = [a * band, b * band];
            let (_, g) = u.sample(x).unwrap();
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += delta;
                xm[d] -= delta;
                let fd = (u.sample(xp).unwrap().0 - u.sample(xm).unwrap().0) / (2.0 * delta);
                prop_assert!((fd - g[d]).abs() <= 1e-6, "x={x:?} d={d}: {fd} vs {}", g[d]);
            }
        }
        Ok(())
    });
}

pub fn grid_spacing() {
    for n in [0usize, 1, 2, 64, 256] {
        assert!(build_grid(n).is_err(), "N={n} accepted");
    }
    for k in 5..=12 {
        let n = (1usize << k) + 1;
        let g = build_grid(n).unwrap();
        assert_eq!(g.h() * (n - 1) as f64, 2.0);
        assert_eq!(g.coord(0), -1.0);
        assert_eq!(g.coord(n - 1), 1.0);
        assert_eq!(g.coord(g.center_index()), 0.0);
    }
}

// ---------------------------------------------------------------- solver

pub fn solver_energy_monotone() {
    for n in [257, 513] {
        let t = &log_solution(n).value.trace;
        assert!(t.converged && t.is_monotone(), "N={n}");
    }
    assert!(classical_solution().value.trace.is_monotone());
    check(4, (lambda(), lambda(), 1u32..4, -1.0..1.0f64), |(lp, lm, k, a)| {
        let g = build_grid(33).unwrap();
        let cfg = SolveConfig::new(ScaleParams::new(lp, lm).unwrap(), BoundaryData::Cosine { k, amplitude: a });
        prop_assert!(solve(&cfg, &g).unwrap().trace.is_monotone());
        Ok(())
    });
}

pub fn solver_sign_swap() {
    check(4, (lambda(), lambda(), coeffs(10)), |(lp, lm, c)| {
        let g = build_grid(33).unwrap();
        let data = field(33, cubic(&c));
        let p = ScaleParams::new(lp, lm).unwrap();
        let a = solve(&SolveConfig::new(p, BoundaryData::Explicit(data.clone())), &g).unwrap();
        let b = solve(&SolveConfig::new(p.swapped(), BoundaryData::Explicit(data.scaled(-1.0))), &g).unwrap();
        let diff = a.field.max_abs_diff(&b.field.scaled(-1.0)).unwrap();
        prop_assert!(diff <= 1e-10, "{diff}");
        Ok(())
    });
}

pub fn solver_mesh_consistency() {
    let band = 1e-3;
    let res: Vec<f64> = [257, 513]
        .iter()
        .map(|&n| {
            let u = &log_solution(n).value.field;
            let m = disk_mask(u.grid(), 0.9, [0.0, 0.0]).unwrap();
            el_residual(u, &log_params(), &m, band).unwrap()
        })
        .collect();
    assert!(res[1] < res[0], "el_residual did not decrease: {res:?}");
}

/// `(K over pairs closer than 8h, K over the rest)`.
fn modulus_constants(u: &ScalarField, pairs: &[(Point, f64, f64)]) -> (f64, f64) {
    let gm = GrowthModuli::new(1.0, 1).unwrap();
    let h = u.grid().h();
    let (mut near, mut far) = (0.0f64, 0.0f64);
    for &(x, d, phi) in pairs {
        let y = [x[0] + d * phi.cos(), x[1] + d * phi.sin()];
        if y[0].hypot(y[1]) > 0.25 {
            continue;
        }
        let gx = u.sample(x).unwrap().1;
        let gy = u.sample(y).unwrap().1;
        let k = (gx[0] - gy[0]).hypot(gx[1] - gy[1]) / gm.eta1(d);
        if d < 8.0 * h {
            near = near.max(k);
        } else {
            far = far.max(k);
        }
    }
    (near, far)
}

pub fn solver_gradient_modulus() {
    let pairs = draw(prop::collection::vec(
        ((0.0..0.25f64, 0.0..2.0 * PI), -9.0..-2.0f64, 0.0..2.0 * PI),
        4000,
    ));
    let pairs: Vec<(Point, f64, f64)> = pairs
        .into_iter()
        .map(|((rad, th), le, phi)| ([rad * th.cos(), rad * th.sin()], le.exp2(), phi))
        .collect();
    let ks: Vec<(f64, f64)> = [257, 513]
        .iter()
        .map(|&n| modulus_constants(&log_solution(n).value.field, &pairs))
        .collect();
    for &(near, far) in &ks {
        assert!(far.is_finite() && far > 0.0);
        assert!(near <= 2.0 * far, "K blows up at small separations: {ks:?}");
    }
    let k = |i: usize| ks[i].0.max(ks[i].1);
    assert!(k(1) <= 2.0 * k(0), "K not mesh independent: {ks:?}");
}

// ---------------------------------------------------------------- scaling

pub fn scaling_rotation_invariance() {
    check(4, coeffs(10), |c| {
        let f = cubic(&c);
        let u = field(129, &f);
        let v = field(129, |x| f([-x[1], x[0]]));
        let opts = ScaleOptions::default();
        for r in [0.5, 0.25] {
            let a = weiss_energy(&u, r, [0.0, 0.0], &log_params(), &opts).unwrap().w;
            let b = weiss_energy(&v, r, [0.0, 0.0], &log_params(), &opts).unwrap().w;
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12), "r={r}: {a} vs {b}");
        }
        Ok(())
    });
}

pub fn scaling_identity_rate() {
    let fields: [fn(Point) -> f64; 3] = [
        |x| (1.3 * x[0]).sin() + x[1] * x[1] * x[0] + x[1].exp(),
        |x| (x[0] - 0.2 * x[1]).cos() * x[0],
        |x| x[0] * x[0] * x[0] - 0.5 * x[1] + 0.1,
    ];
    let opts = ScaleOptions::default();
    for (i, f) in fields.iter().enumerate() {
        let mut d = Vec::new();
        for n in [129usize, 257, 513] {
            let v = field(n, f);
            let s = scaling_identity_defect(&v, 0.5, &log_params(), &opts).unwrap();
            let h = v.grid().h();
            assert!(s.defect <= 0.5 * h * (1.0 + s.rhs.abs()), "field {i} N={n}: {s:?}");
            d.push(s.defect);
        }
        assert!(d[2] < d[0], "field {i}: no decrease {d:?}");
    }
}

pub fn scaling_classical_trace() {
    let p = classical_params();
    let gm = GrowthModuli::new(1.0, 1).unwrap();
    let exact = field(257, classical_exact);
    for u in [&classical_solution().value.field, &exact] {
        let radii: Vec<f64> = dyadic_radii(1, 4).into_iter().rev().collect();
        let t = weiss_trace(u, [0.0, 0.0], &p, &radii, &gm, &ScaleOptions::default()).unwrap();
        let tol = 1e-3 * (1.0 + t.max_abs_w());
        assert!(t.min_monotone_increment() >= -tol, "{}", t.to_csv());
    }
}

/// Upper dyadic sum `Σ_k 2^{-k-1} max_{[2^{-k-1}, 2^{-k}]} ν₊`.
fn dyadic_upper_sum(gm: &GrowthModuli, k_lo: i32, k_hi: i32) -> f64 {
    (k_lo..k_hi)
        .map(|k| {
            let (a, b) = (0.5f64.powi(k + 1), 0.5f64.powi(k).min(1.0 - 1e-9));
            let sup = (0..=256)
                .map(|i| drift_density(a + (b - a) * i as f64 / 256.0, gm).unwrap().max(0.0))
                .fold(0.0, f64::max);
            (b - a) * sup
        })
        .sum()
}

pub fn scaling_drift_budget() {
    for c_hat in [1e-3, 0.05, 1.0] {
        let gm = GrowthModuli::new(c_hat, 1).unwrap();
        let total = dyadic_upper_sum(&gm, 1, 60);
        assert!(total.is_finite());
        let mut prev = 0.0;
        for n in [129usize, 257, 513, 1025, 2049, 4097] {
            let h = 2.0 / (n - 1) as f64;
            let b = drift_budget(8.0 * h, 0.5, &gm).unwrap();
            assert!(b.is_finite() && b >= prev, "Ĉ={c_hat} N={n}: {b} < {prev}");
            assert!(b <= total * (1.0 + 1e-9) + 1e-15, "Ĉ={c_hat} N={n}: {b} > {total}");
            prev = b;
        }
    }
}

// ---------------------------------------------------------------- harmonic

fn fourier_ring(c: &[(f64, f64)], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / m as f64;
            c.iter()
                .enumerate()
                .map(|(k, (a, b))| a * (k as f64 * th).cos() + b * (k as f64 * th).sin())
                .sum()
        })
        .collect()
}

fn fourier_coeffs(k: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), k)
}

pub fn harmonic_projection() {
    let m = 1024;
    let w = 2.0 * PI / m as f64;
    check(64, (fourier_coeffs(7), fourier_coeffs(7), -3.0..3.0f64, -3.0..3.0f64), |(cu, cv, a, b)| {
        let (u, v) = (fourier_ring(&cu, m), fourier_ring(&cv, m));
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let (pu, pv, pm) = (project_quadratic(&u).unwrap(), project_quadratic(&v).unwrap(), project_quadratic(&mix).unwrap());
        for i in 0..2 {
            prop_assert!((pm.c[i] - (a * pu.c[i] + b * pv.c[i])).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
        let pu_ring: Vec<f64> = (0..m)
            .map(|j| {
                let (s, c) = (2.0 * PI * j as f64 / m as f64).sin_cos();
                pu.eval([c, s])
            })
            .collect();
        let ppu = project_quadratic(&pu_ring).unwrap();
        prop_assert!((ppu.c[0] - pu.c[0]).abs() <= 1e-12 && (ppu.c[1] - pu.c[1]).abs() <= 1e-12);
        let norm = (u.iter().map(|x| w * x * x).sum::<f64>()).sqrt();
        for i in 0..2 {
            let dot: f64 = (0..m)
                .map(|j| {
                    let (s, c) = (2.0 * PI * j as f64 / m as f64).sin_cos();
                    w * (u[j] - pu_ring[j]) * basis_eval([c, s])[i]
                })
                .sum();
            prop_assert!(dot.abs() <= 1e-9 * norm, "⟨u - Pu, Q{i}⟩ = {dot}");
        }
        Ok(())
    });
}

pub fn harmonic_subpoly_rate() {
    let fields: [fn(Point) -> f64; 3] = [
        |x| (1.3 * x[0]).sin() + x[1] * x[1] * x[0] + x[1].exp(),
        |x| (x[0] * x[1]).cos() + x[0] * x[0] * x[0],
        |x| x[0] * x[0] - x[1] * x[1] + 0.3 * x[0] * x[1] * x[1],
    ];
    for (i, f) in fields.iter().enumerate() {
        let mut d = Vec::new();
        let mut scale = 0.0;
        for n in [129usize, 257, 513] {
            let u = field(n, f);
            let v = BallView::unnormalized(&u, [0.0, 0.0], 0.9);
            let rule = DiskRule::for_resolution(0.9 / u.grid().h(), 2048).unwrap();
            let (l, r) = subpoly_defect(&v, &rule, 2048).unwrap();
            scale = 1.0 + r.abs();
            assert!((l - r).abs() <= 1e-8 * scale, "field {i} N={n}: {l} vs {r}");
            d.push((l - r).abs());
        }
        assert!(d[2] <= d[0].max(1e-12 * scale), "field {i}: {d:?}");
    }
}

pub fn harmonic_extension_exact() {
    let g = build_grid(65).unwrap();
    check(16, fourier_coeffs(9), |c| {
        let ext = harmonic_extension(&fourier_ring(&c, 1024), &g).unwrap();
        let n = g.n();
        for j in 0..n {
            for i in 0..n {
                let x = g.node(i, j);
                // the extension lives on the closed unit disk
                if !g.in_safe_band(x) || x[0].hypot(x[1]) > 1.0 {
                    continue;
                }
                let (rho, th) = (x[0].hypot(x[1]), x[1].atan2(x[0]));
                let want: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| rho.powi(k as i32) * (a * (k as f64 * th).cos() + b * (k as f64 * th).sin()))
                    .sum();
                prop_assert!((ext.at(i, j) - want).abs() <= 1e-10, "x={x:?}: {} vs {want}", ext.at(i, j));
            }
        }
        Ok(())
    });
}

/// `Σ_k ρᵏ (a_k cos kθ + b_k sin kθ)` for `k ≥ 1`, with its gradient.
fn harmonic_poly(c: &[(f64, f64)]) -> impl Fn(Point) -> (f64, Point) + Sync + '_ {
    move |x: Point| {
        // Re/Im of zᵏ and k z^{k-1}
        let (mut zr, mut zi) = (1.0, 0.0);
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for (k, (a, b)) in c.iter().enumerate() {
            let k = (k + 1) as f64;
            let (dr, di) = (k * zr, k * zi);
            (zr, zi) = (zr * x[0] - zi * x[1], zr * x[1] + zi * x[0]);
            v += a * zr + b * zi;
            // d/dx Re zᵏ = Re k z^{k-1}, d/dy Re zᵏ = -Im k z^{k-1}
            gx += a * dr + b * di;
            gy += -a * di + b * dr;
        }
        (v, [gx, gy])
    }
}

pub fn harmonic_decay_inequality() {
    let rule = DiskRule::new(32, 1024).unwrap();
    check(64, (fourier_coeffs(5), 0.05..0.95f64, 0.05..1.0f64), |(c, frac, r)| {
        let h = FnField(harmonic_poly(&c));
        let s = frac * r;
        let (lhs, rhs) = harmonic_decay_check(&h, s, r, [0.0, 0.0], &rule).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-300, "{lhs} > {rhs}");
        let lin = FnField(harmonic_poly(&c[..1]));
        let (lhs, rhs) = harmonic_decay_check(&lin, s, r, [0.0, 0.0], &rule).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-3 * rhs, "degree 1: {lhs} vs {rhs}");
        Ok(())
    });
    // strict for any degree-2 component
    let q = FnField(harmonic_poly(&[(0.0, 0.0), (1.0, 0.0)]));
    let (lhs, rhs) = harmonic_decay_check(&q, 0.25, 0.5, [0.0, 0.0], &rule).unwrap();
    assert!(lhs < 0.5 * rhs);
}

// ---------------------------------------------------------------- radial

fn one_phase_case() -> impl Strategy<Value = (usize, f64)> {
    (1usize..=3, 0.5..2.0f64)
}

pub fn radial_start_layer() {
    check(6, one_phase_case(), |(n, lam)| {
        let p = integrate_one_phase(n, lam, 1.0, 1e-6).unwrap();
        let q = integrate_one_phase(n, lam, 1.0, 0.5 * p.start_offset).unwrap();
        let d = (p.eval(1e-3).0 - q.eval(1e-3).0).abs();
        prop_assert!(d < 1e-8, "n={n} λ={lam}: {d}");
        Ok(())
    });
}

pub fn radial_ratio_monotone() {
    check(6, one_phase_case(), |(n, lam)| {
        let p = integrate_one_phase(n, lam, 1.0, 1e-6).unwrap();
        let rs: Vec<f64> = (0..=40).map(|k| p.growth_ratio(10f64.powf(-5.0 + 0.05 * k as f64))).collect();
        let (lo, hi) = rs.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
        prop_assert!(lo > 0.0 && hi / lo - 1.0 < 0.1, "n={n} λ={lam}: [{lo}, {hi}]");
        Ok(())
    });
}

pub fn radial_first_integral() {
    check(8, (0.5..2.0f64, 0.5..2.0f64, prop_oneof![Just(0.0), -1.0..1.0f64]), |(lp, lm, b)| {
        let p = integrate_two_phase_1d(lp, lm, b, 1.0).unwrap();
        let e = p.first_integral();
        let (lo, hi) = e.iter().fold((f64::MAX, f64::MIN), |(a, c), &v| (a.min(v), c.max(v)));
        prop_assert!(hi - lo <= 1e-8, "λ=({lp},{lm}) b={b}: spread {}", hi - lo);
        Ok(())
    });
}

pub fn radial_growth_fit() {
    check(6, one_phase_case(), |(n, lam)| {
        let p = integrate_one_phase(n, lam, 1.0, 1e-6).unwrap();
        let curve: Vec<CurvePoint> = (0..=16)
            .map(|k| {
                let r = 10f64.powf(-6.0 + 0.25 * k as f64);
                CurvePoint { r, value: p.eval(r).0 }
            })
            .collect();
        let (_, pw) = fit_growth_law(&curve).unwrap();
        prop_assert!((pw - 1.0).abs() <= 0.1, "n={n} λ={lam}: p = {pw}");
        Ok(())
    });
}

// ---------------------------------------------------------------- diagnostics

fn test_fields() -> impl Strategy<Value = Vec<f64>> {
    coeffs(10).prop_map(|mut c| {
        // keep the zero set inside the disk for most draws
        c[0] *= 0.1;
        c
    })
}

pub fn diagnostics_contour_scale_invariance() {
    let compare = |u: &ScalarField| -> Result<(), TestCaseError> {
        let a = extract_free_boundary(u, 0.0);
        let b = extract_free_boundary(&u.scaled(5.0), 0.0);
        prop_assert_eq!(a.len(), b.len());
        for (la, lb) in a.iter().zip(&b) {
            prop_assert_eq!(la.closed, lb.closed);
            prop_assert_eq!(la.points.len(), lb.points.len());
            for (p, q) in la.points.iter().zip(&lb.points) {
                prop_assert!((p[0] - q[0]).abs() <= 1e-12 && (p[1] - q[1]).abs() <= 1e-12);
            }
        }
        Ok(())
    };
    compare(&log_solution(257).value.field).unwrap();
    check(16, test_fields(), |c| compare(&field(65, cubic(&c))));
}

fn center_and_radii(h: f64) -> impl Strategy<Value = (Point, Vec<f64>)> {
    let lo = 2.0 * h;
    ((-0.3..0.3f64, -0.3..0.3f64), prop::collection::vec(lo..0.5f64, 6))
        .prop_map(|((x, y), r)| ([x, y], r))
}

pub fn diagnostics_growth_and_nondegeneracy() {
    let h = 2.0 / 128.0;
    check(24, (test_fields(), center_and_radii(h)), |(c, (center, radii))| {
        let u = field(129, cubic(&c));
        let g = growth_curve(&u, center, &radii).unwrap();
        for w in g.windows(2) {
            prop_assert!(w[0].r <= w[1].r && w[0].value <= w[1].value, "{g:?}");
        }
        for phase in [Phase::Plus, Phase::Minus] {
            let nd = nondegeneracy_curve(&u, center, &radii, phase).unwrap();
            for (a, b) in nd.points.iter().zip(&g) {
                prop_assert!(a.r == b.r && a.sup <= b.value, "{phase:?}: {a:?} vs {b:?}");
            }
        }
        Ok(())
    });
    let u = &log_solution(257).value.field;
    let c = nearest_branch_point(u);
    let radii = default_radii(u.grid().h());
    let g = growth_curve(u, c, &radii).unwrap();
    assert!(g.windows(2).all(|w| w[0].value <= w[1].value));
    for phase in [Phase::Plus, Phase::Minus] {
        let nd = nondegeneracy_curve(u, c, &radii, phase).unwrap();
        assert!(nd.points.iter().zip(&g).all(|(a, b)| a.sup <= b.value));
    }
}

pub fn diagnostics_fit_round_trip() {
    let strat = (-4.0..4.0f64, -3.0..3.0f64, prop::collection::btree_set(1u32..200, 5..12));
    check(256, strat, |(lc, p, ks)| {
        let curve: Vec<CurvePoint> = ks
            .iter()
            .map(|&k| {
                let r = 10f64.powf(-6.0 * k as f64 / 200.0);
                CurvePoint { r, value: lc.exp() * r * r * (1.0 + r.ln().abs()).powf(p) }
            })
            .collect();
        let (c, q) = fit_growth_law(&curve).unwrap();
        prop_assert!((c.ln() - lc).abs() <= 1e-8 && (q - p).abs() <= 1e-8, "({c}, {q}) vs ({}, {p})", lc.exp());
        Ok(())
    });
}

pub fn diagnostics_modulus_decay() {
    check(12, (prop::collection::vec(-2.0..2.0f64, 3), coeffs(4)), |(q, t)| {
        let hess = [[2.0 * q[0], q[1]], [q[1], 2.0 * q[2]]];
        let f = |x: Point| {
            q[0] * x[0] * x[0] + q[1] * x[0] * x[1] + q[2] * x[1] * x[1]
                + 0.05 * (t[0] * x[0].powi(3) + t[1] * x[0] * x[0] * x[1] + t[2] * x[0] * x[1] * x[1] + t[3] * x[1].powi(3))
        };
        let u = field(257, f);
        let curve = gradient_modulus_curve(&u, [0.0, 0.0], &default_radii(u.grid().h())).unwrap();
        // operator norm of the Hessian at the center
        let (a, b, d) = (hess[0][0], hess[0][1], hess[1][1]);
        let norm = (0.5 * (a + d)).abs() + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        prop_assume!(norm > 0.5);
        for c in &curve {
            let scaled = c.value * (1.0 + c.r.ln().abs());
            prop_assert!((scaled / norm - 1.0).abs() <= 0.25, "{c:?}: {scaled} vs {norm}");
        }
        prop_assert!(curve.windows(2).all(|w| w[0].value < w[1].value), "{curve:?}");
        Ok(())
    });
}

// ---------------------------------------------------------------- cli

fn run_cli(args: &[&str]) -> i32 {
    let mut v = vec!["logfb"];
    v.extend_from_slice(args);
    cli::run(v)
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| {
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub fn cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<String> = (0..2).map(|k| tmp.path().join(format!("run{k}")).to_string_lossy().into_owned()).collect();
    for d in &dirs {
        assert_eq!(run_cli(&["solve", "--N", "65", "--bc", "cosine:1:1", "--out", d]), 0);
        let field = format!("{d}/field.logfb");
        let rep = format!("{d}/report");
        assert_eq!(run_cli(&["report", "--field", &field, "--center", "origin", "--r-from", "2", "--r-to", "3", "--out", &rep]), 0);
        assert_eq!(run_cli(&["oracle", "--n", "1", "--lambda", "1", "--out", &format!("{d}/oracle")]), 0);
    }
    for sub in ["", "report", "oracle"] {
        let a = read_all(&Path::new(&dirs[0]).join(sub));
        let b = read_all(&Path::new(&dirs[1]).join(sub));
        assert!(!a.is_empty());
        assert_eq!(a, b, "outputs differ in {sub:?}");
    }
}

pub fn cli_field_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let strat = (prop::sample::select(vec![33usize, 65]), any::<u64>(), 0.1..1.0f64, lambda(), lambda(), 0.0..=1.0f64, any::<bool>());
    check(32, strat, |(n, seed, mask, lp, lm, r, conv)| {
        let g: Grid = build_grid(n).unwrap();
        // wide dynamic range from a simple LCG on the seed
        let mut s = seed;
        let values: Vec<f64> = (0..g.len())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let m = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                m * 10f64.powi(((s >> 3) % 40) as i32 - 20)
            })
            .collect();
        let u = ScalarField::new(g, values, mask).unwrap();
        let header = FieldHeader { lambda_plus: lp, lambda_minus: lm, r, converged: conv };
        let path = tmp.path().join(format!("f{seed}.logfb"));
        write_field(&path, &u, &header).unwrap();
        let (v, h) = read_field(&path).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(v.mask_radius(), u.mask_radius());
        prop_assert!(u.values().iter().zip(v.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        Ok(())
    });
}

pub fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_string_lossy().into_owned();
    assert_eq!(run_cli(&["solve", "--N", "33", "--bc", "cosine:1:1", "--out", &out]), 0);
    assert_eq!(run_cli(&["solve", "--N", "32", "--bc", "cosine:1:1", "--out", &out]), 1);
    assert_eq!(run_cli(&["solve", "--N", "33", "--bc", "cosine:1:1", "--max-iters", "1", "--out", &out]), 2);
    let flat = tmp.path().join("flat.logfb");
    let g = build_grid(65).unwrap();
    let header = FieldHeader { lambda_plus: 1.0, lambda_minus: 1.0, r: 1.0, converged: true };
    write_field(&flat, &ScalarField::from_fn(g, 1.0, |_| 1.0).unwrap(), &header).unwrap();
    let flat = flat.to_string_lossy().into_owned();
    assert_eq!(run_cli(&["report", "--field", &flat, "--center", "auto-branch", "--out", &out]), 3);
}

/// Every invariant, in module order.
pub const ALL: &[Check] = &[
    ("moduli: branch identities", moduli_branch_identity),
    ("moduli: nonnegativity", moduli_nonnegative),
    ("moduli: slope vs difference quotient", moduli_slope_matches_difference_quotient),
    ("moduli: distance to classical density", moduli_sup_distance_decreases),
    ("moduli: mu and alpha monotone", moduli_scale_weights_monotone),
    ("moduli: regularization bound", moduli_regularization_bound),
    ("moduli: swap symmetry", moduli_swap_symmetry),
    ("moduli: parameter validation", moduli_parameter_validation),
    ("grid: cubic reproduction", grid_cubic_reproduction),
    ("grid: mask area", grid_mask_area_converges),
    ("grid: sampled gradient", grid_gradient_matches_difference_quotient),
    ("grid: odd sizes and spacing", grid_spacing),
    ("solver: energy monotone", solver_energy_monotone),
    ("solver: sign swap", solver_sign_swap),
    ("solver: mesh consistency", solver_mesh_consistency),
    ("solver: gradient modulus", solver_gradient_modulus),
    ("scaling: rotation invariance", scaling_rotation_invariance),
    ("scaling: identity rate", scaling_identity_rate),
    ("scaling: classical trace", scaling_classical_trace),
    ("scaling: drift budget", scaling_drift_budget),
    ("harmonic: projection", harmonic_projection),
    ("harmonic: subpoly rate", harmonic_subpoly_rate),
    ("harmonic: extension exact", harmonic_extension_exact),
    ("harmonic: decay inequality", harmonic_decay_inequality),
    ("radial: start layer", radial_start_layer),
    ("radial: ratio monotone", radial_ratio_monotone),
    ("radial: first integral", radial_first_integral),
    ("radial: growth fit", radial_growth_fit),
    ("diagnostics: contour scale invariance", diagnostics_contour_scale_invariance),
    ("diagnostics: growth and nondegeneracy", diagnostics_growth_and_nondegeneracy),
    ("diagnostics: fit round trip", diagnostics_fit_round_trip),
    ("diagnostics: modulus decay", diagnostics_modulus_decay),
    ("cli: determinism", cli_determinism),
    ("cli: field round trip", cli_field_round_trip),
    ("cli: exit codes", cli_exit_codes),
];
