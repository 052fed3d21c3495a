//! Property suite behind `hscalc verify`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::{decay_checks, restriction_error, sup_norm, CliError, JobConfig, Obj, Outcome};
use crate::almost_analytic::{build_cutoff, AlmostAnalyticExtension};
use crate::cayley::{psi, psi_inv, verify_imag_comparability, CircleExtension, CircleFunction, Region};
use crate::function_model::{SmoothCompactFunction, DEFAULT_MAX_ORDER};
use crate::hs_integrator::{
    cauchy_pompeiu_check, hs_apply_selfadjoint, hs_apply_unitary, oracle_error, QuadratureSpec, Rect,
};
use crate::matrix_core::{
    check_resolvent_norm_identity, operator_norm, random_unitary_basis, resolvent, resolvent_neumann,
    spectral_apply, synth_hermitian, synth_normal, synth_unitary,
};
use crate::rng::named_rng;

const LINE_FUNCTIONS: [(&str, (f64, f64)); 3] = [
    ("bump(x)", (-1.0, 1.0)),
    ("sin(3*x)*bump(x)", (-1.0, 1.0)),
    ("bump(x-0.5)", (-0.5, 1.5)),
];

fn line_extension(cfg: &JobConfig, expr: &str, support: (f64, f64)) -> Result<AlmostAnalyticExtension, CliError> {
    let f = SmoothCompactFunction::parse(expr, support, DEFAULT_MAX_ORDER)?;
    Ok(AlmostAnalyticExtension::build(f, cfg.extension_config())?)
}

fn cutoff_checks() -> Vec<super::Check> {
    let chi = build_cutoff();
    let mut sym = 0.0f64;
    let mut plateau = 0.0f64;
    let mut tail = 0.0f64;
    for k in 0..=2000 {
        let y = 1.2 * k as f64 / 2000.0;
        sym = sym.max((chi.value(y) - chi.value(-y)).abs());
        if y <= 0.5 {
            plateau = plateau.max((chi.value(y) - 1.0).abs());
        }
        if y >= 1.0 {
            tail = tail.max(chi.value(y).abs());
        }
    }
    vec![
        super::Check::at_most("cutoff_midpoint", (chi.value(0.75) - 0.5).abs(), 1e-15),
        super::Check::at_most("cutoff_even", sym, 0.0),
        super::Check::at_most("cutoff_plateau", plateau, 0.0),
        super::Check::at_most("cutoff_tail", tail, 0.0),
    ]
}

/// Central-difference `dbar` of the circle extension against the chain-rule
/// value, as a normwise relative error over the sample set.
fn chain_rule_error(ce: &CircleExtension, samples: usize, seed: u64) -> Result<f64, CliError> {
    let base = ce.base();
    let (a, b) = base.function().support();
    let c = base.half_height();
    let mut rng = named_rng(seed, "chain-rule");
    let h = 1e-5;
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = rng.random_range(a + 0.1 * (b - a)..b - 0.1 * (b - a));
        let y = rng.random_range(c / 8.0..c / 2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let xi = psi(Complex64::new(x, y))?;
        let exact = ce.eval_dbar(xi)?;
        let dx = (ce.eval(xi + h)? - ce.eval(xi - h)?) / (2.0 * h);
        let dy = (ce.eval(xi + Complex64::new(0.0, h))? - ce.eval(xi - Complex64::new(0.0, h))?) / (2.0 * h);
        let fd = 0.5 * (dx + Complex64::i() * dy);
        diff = diff.max((fd - exact).norm());
        scale = scale.max(exact.norm());
    }
    Ok(diff / scale)
}

fn random_gap_point<R: Rng>(rng: &mut R, eigs: &[Complex64], gap: f64) -> Complex64 {
    loop {
        let z = Complex64::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
        if eigs.iter().all(|&e| (z - e).norm() >= gap) {
            return z;
        }
    }
}

fn matrix_checks(seed: u64) -> Result<Vec<super::Check>, CliError> {
    let mut rng = named_rng(seed, "verify-matrices");
    let mut norm_err = 0.0f64;
    let mut neumann_err = 0.0f64;
    for k in 0..100 {
        let n = rng.random_range(2..=8);
        let eigs: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
            .collect();
        let (_, d) = synth_normal(&eigs, random_unitary_basis(n, seed.wrapping_add(k)));
        let z = random_gap_point(&mut rng, &eigs, 0.1);
        norm_err = norm_err.max(check_resolvent_norm_identity(&d, z)?.rel_err);
    }
    for k in 0..50 {
        let n = rng.random_range(2..=8);
        let thetas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let (u, _) = synth_unitary(&thetas, seed.wrapping_add(1000 + k));
        let r = loop {
            let r: f64 = rng.random_range(0.2..2.0);
            if (r - 1.0).abs() >= 0.1 {
                break r;
            }
        };
        let z = Complex64::from_polar(r, rng.random_range(0.0..2.0 * PI));
        let exact = resolvent(&u, z)?;
        let series = resolvent_neumann(&u, z, 1e-13, 10_000)?;
        let rel = operator_norm(&series.sub(&exact)?)? / operator_norm(&exact)?;
        neumann_err = neumann_err.max(rel);
    }
    Ok(vec![
        super::Check::at_most("resolvent_norm_identity", norm_err, 1e-8),
        super::Check::at_most("neumann_vs_direct", neumann_err, 1e-8),
    ])
}

/// Runs every property at the configured extension knobs and quadrature spec.
pub(super) fn run_verify(cfg: &JobConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut checks = cutoff_checks();

    let mut restriction = 0.0f64;
    let mut schedule_ok = true;
    for (k, &(expr, support)) in LINE_FUNCTIONS.iter().enumerate() {
        let ext = line_extension(cfg, expr, support)?;
        schedule_ok &= ext.params().schedule_violation().is_none();
        restriction = restriction.max(restriction_error(&ext, 1000, seed.wrapping_add(k as u64))?);
    }
    checks.push(super::Check::holds("schedule_inequality", schedule_ok));
    checks.push(super::Check::at_most("restriction_rel_err", restriction, 1e-14));

    let bump = line_extension(cfg, LINE_FUNCTIONS[0].0, LINE_FUNCTIONS[0].1)?;
    checks.extend(decay_checks(&bump, seed)?);

    let mut rng = named_rng(seed, "verify-cayley");
    let mut round_trip = 0.0f64;
    for _ in 0..1000 {
        let z = Complex64::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        if (z - Complex64::i()).norm() < 1e-3 {
            continue;
        }
        round_trip = round_trip.max((psi_inv(psi(z)?)? - z).norm() / (1.0 + z.norm()));
    }
    checks.push(super::Check::at_most("cayley_round_trip", round_trip, 1e-12));
    let region = Region::new(-1.0, 1.0, 0.5)?;
    if let Some(cmp) = verify_imag_comparability(&region, 1000, seed)? {
        checks.push(super::Check::holds("imag_comparability", cmp.within_bounds));
        checks.push(super::Check::at_most("comparability_identity", cmp.identity_rel_err, 1e-10));
    }

    let pullback = SmoothCompactFunction::parse("bump(x)", (-1.0, 1.0), DEFAULT_MAX_ORDER)?;
    let cf = CircleFunction::from_pullback(pullback);
    let ce = CircleExtension::build(&cf, cfg.extension_config())?;
    checks.push(super::Check::at_most("chain_rule_rel_err", chain_rule_error(&ce, 200, seed)?, 1e-5));

    checks.extend(matrix_checks(seed)?);

    let spec = &cfg.spec;
    let mut mrng = named_rng(seed, "verify-oracle");
    let lambdas: Vec<f64> = (0..8).map(|_| mrng.random_range(-0.8..0.8)).collect();
    let (a, d) = synth_hermitian(&lambdas, seed);
    let f = bump.function();
    let oracle = spectral_apply(&d, |z| f.value(z.re).map(Complex64::from))?;
    let r = hs_apply_selfadjoint(&bump, &a, spec)?;
    let sa_err = oracle_error(&r.value, &oracle, sup_norm(&bump))?;
    checks.push(super::Check::at_most("selfadjoint_oracle", sa_err, 1e-3));
    checks.push(super::Check::holds("bound_integral_finite", r.bound_integral.is_finite()));
    let refined = QuadratureSpec {
        refinement_levels: spec.refinement_levels + 1,
        ..*spec
    };
    let r2 = hs_apply_selfadjoint(&bump, &a, &refined)?;
    let ratio = (r2.bound_integral / r.bound_integral).max(r.bound_integral / r2.bound_integral);
    checks.push(super::Check::at_most("bound_integral_refinement_ratio", ratio, 2.0));

    let thetas: Vec<f64> = (0..8).map(|_| mrng.random_range(0.6 * PI..1.4 * PI)).collect();
    let (u, du) = synth_unitary(&thetas, seed);
    let uoracle = spectral_apply(&du, |z| cf.value(z).map(Complex64::from))?;
    let ru = hs_apply_unitary(&ce, &u, spec)?;
    let u_err = oracle_error(&ru.value, &uoracle, sup_norm(ce.base()))?;
    checks.push(super::Check::at_most("unitary_oracle", u_err, 1e-3));

    let xi = Complex64::new(0.1, 0.05);
    let square = Rect {
        x0: -0.5,
        x1: 0.5,
        y0: -0.5,
        y1: 0.5,
    };
    let zero = |_: Complex64| Ok(Complex64::new(0.0, 0.0));
    let cp = cauchy_pompeiu_check(|z| Ok(z * z), zero, square, xi, 512, 64)?;
    checks.push(super::Check::at_most("cauchy_square", (cp.boundary - xi * xi).norm() + cp.area.norm(), 1e-6));

    let mut crng = named_rng(seed, "verify-continuity");
    let mut continuity_excess = f64::NEG_INFINITY;
    for (k, n) in [1u64, 10, 100].into_iter().enumerate() {
        let lambdas: Vec<f64> = (0..8).map(|_| crng.random_range(-0.9..0.9)).collect();
        let (_, d) = synth_hermitian(&lambdas, seed.wrapping_add(k as u64));
        let eps = 1.0 / n as f64;
        let g = |x: f64| -> Result<f64, CliError> { Ok(f.value(x)? * (1.0 + eps * (3.0 * x).sin())) };
        let fa = spectral_apply(&d, |z| f.value(z.re).map(Complex64::from))?;
        let ga = spectral_apply(&d, |z| g(z.re).map(Complex64::from))?;
        let lhs = operator_norm(&ga.sub(&fa)?)?;
        let mut sup = 0.0f64;
        for j in 0..=4000 {
            let x = -1.0 + 2.0 * j as f64 / 4000.0;
            sup = sup.max((g(x)? - f.value(x)?).abs());
        }
        continuity_excess = continuity_excess.max(lhs - sup);
    }
    checks.push(super::Check::at_most("continuity_bound_excess", continuity_excess, 1e-8));

    let results = Obj::new()
        .with("selfadjoint_oracle_error", sa_err)
        .with("unitary_oracle_error", u_err)
        .with("bound_integral", r.bound_integral)
        .with("bound_integral_refined", r2.bound_integral);
    Ok((results, checks, None))
}
