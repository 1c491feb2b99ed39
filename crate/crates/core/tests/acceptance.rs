//! Acceptance gate: one test per numbered criterion, each printing a single
//! pass/fail line with its measured margins and wall time. Tolerances and
//! runtime budgets are pinned in this file on purpose; a library change that
//! moves a guarantee should turn a line red here rather than inherit a
//! loosened constant from somewhere else.
//!
//! Criterion 7 carries a known red clause. The (2, 0.2) small-angle gap
//! curve is smooth at the hypothesis frame angles, so the cusp minima the
//! clause asks for do not exist; the check states the claim as given and
//! fails with the measured curve. Everything else is green.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use subray::chernoff::{q_of_s, qcb_faint, qcb_general, ChernoffResult};
use subray::cov::{hg_covariance_chi2, split_blocks, BasisTag, CovMatrix};
use subray::fock::{acceptance_family, mode_rotation_fock, qcb_fock, two_mode_thermal, uniform_s_grid};
use subray::sim::{estimate_error_exponent, MeasurementBasis, SamplingMode, SimConfig};
use subray::source::SecondMoments;
use subray::subdiff::{
    amgm_cs_lower_bound, gap, optimality_region_1d, qcb_1d, qcb_rotated, qcb_subdiff,
    spade_optimal, sweep_theta0, ScenarioParams,
};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Two first-order modes of a diffracted pair, as a covariance in the
/// Hermite-Gauss pair basis.
fn hg_pair_cov(entries: DMatrix<f64>) -> CovMatrix {
    CovMatrix {
        i0: entries.trace(),
        basis: BasisTag::HermiteGauss {
            pairs: vec![(1, 0), (0, 1)],
        },
        psd_slack: 0.0,
        chi: None,
        entries,
    }
}

/// Random positive 3-mode shape with the exact trace `i0`. The ridge keeps
/// the smallest eigenvalue away from zero so fractional powers stay tame.
fn random_shape(rng: &mut ChaCha12Rng, i0: f64) -> CovMatrix {
    let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
    let mut g = &a * a.transpose();
    for k in 0..3 {
        g[(k, k)] += 0.05;
    }
    let scale = i0 / g.trace();
    g *= scale;
    CovMatrix {
        entries: g,
        basis: BasisTag::Position { nx: 3, ny: 1 },
        i0,
        psd_slack: 0.0,
        chi: None,
    }
}

/// Second moments of a principal-axis pair (vx, vy) rotated by `theta`.
fn rotated_moments(vx: f64, vy: f64, theta: f64) -> SecondMoments {
    let (s, c) = theta.sin_cos();
    SecondMoments {
        m10: 0.0,
        m01: 0.0,
        m20: c * c * vx + s * s * vy,
        m02: s * s * vx + c * c * vy,
        m11: c * s * (vx - vy),
    }
}

#[test]
fn criterion_01_number_basis_oracle_agreement() {
    let t0 = Instant::now();
    let cutoff = 25;
    let s_grid = uniform_s_grid(1001);
    let devs: Vec<f64> = acceptance_family()
        .into_par_iter()
        .map(|(m1, m2, angle)| {
            let d = nalgebra::DVector::from_row_slice(&[m1, m2]);
            let g1 = DMatrix::from_diagonal(&d);
            let (sin, cos) = angle.sin_cos();
            let r = DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos]);
            let g2 = &r * &g1 * r.transpose();
            let closed = qcb_general(&hg_pair_cov(g1), &hg_pair_cov(g2))
                .unwrap()
                .exponent;

            let rho1 = two_mode_thermal(m1, m2, cutoff).unwrap();
            let u = mode_rotation_fock(angle, cutoff);
            let rho2 = &u * &rho1 * u.transpose();
            let (brute, _) = qcb_fock(&rho1, &rho2, &s_grid).unwrap();
            (closed - brute).abs()
        })
        .collect();
    let worst = devs.iter().cloned().fold(0.0_f64, f64::max);
    let dt = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && dt < 60.0;
    println!(
        "criterion 1: {} (20 pairs, worst |closed - number basis| = {worst:.3e}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(pass, "worst deviation {worst:.3e} (tol 1e-5), {dt:.1} s (budget 60)");
}

#[test]
fn criterion_02_faint_limit_ratio() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC2);
    let i0 = 1e-3;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let g1 = random_shape(&mut rng, i0);
        let g2 = random_shape(&mut rng, i0);
        let general = qcb_general(&g1, &g2).unwrap().exponent;
        let faint = qcb_faint(&g1, &g2).unwrap().exponent;
        worst = worst.max((general / faint - 1.0).abs());
    }
    let dt = t0.elapsed().as_secs_f64();
    let pass = worst <= 0.01 && dt < 30.0;
    println!(
        "criterion 2: {} (20 shape pairs at i0 = 1e-3, worst |ratio - 1| = {worst:.3e}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(pass, "worst ratio deviation {worst:.3e} (tol 1e-2), {dt:.1} s (budget 30)");
}

#[test]
fn criterion_03_six_mode_route_matches_closed_form() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC3);
    let chi = 0.02;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let p = ScenarioParams {
            v1x: rng.gen_range(0.15..2.5),
            v1y: rng.gen_range(0.15..2.5),
            v2x: rng.gen_range(0.15..2.5),
            v2y: rng.gen_range(0.15..2.5),
            theta1: rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            theta2: rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            i0: rng.gen_range(0.5..2.0),
            chi,
        };
        let m1 = rotated_moments(p.v1x, p.v1y, p.theta1);
        let m2 = rotated_moments(p.v2x, p.v2y, p.theta2);
        let g1 = hg_covariance_chi2(&m1, p.i0, p.chi).unwrap();
        let g2 = hg_covariance_chi2(&m2, p.i0, p.chi).unwrap();
        let six = qcb_general(&g1, &g2).unwrap().exponent;
        let closed = qcb_subdiff(&p).unwrap().exponent;
        worst = worst.max((six / closed - 1.0).abs());
    }
    let dt = t0.elapsed().as_secs_f64();
    let pass = worst <= 5e-3 && dt < 30.0;
    println!(
        "criterion 3: {} (20 scenarios at chi = 0.02, worst relative gap = {worst:.3e}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(pass, "worst relative gap {worst:.3e} (tol 5e-3), {dt:.1} s (budget 30)");
}

#[test]
fn criterion_04_scenario_closed_forms() {
    let t0 = Instant::now();
    let unit = |r: &ChernoffResult, p: &ScenarioParams| r.exponent / (p.i0 * p.chi * p.chi);
    let mut worst = 0.0_f64;
    let mut check = |got: f64, want: f64| worst = worst.max((got - want).abs());

    // point against an extended source: both exponents equal the extended trace
    let p_point = ScenarioParams {
        v1x: 0.0,
        v1y: 0.0,
        v2x: 1.4,
        v2y: 0.6,
        theta1: 0.0,
        theta2: 0.35,
        i0: 0.8,
        chi: 0.05,
    };
    check(unit(&qcb_subdiff(&p_point).unwrap(), &p_point), 2.0);
    check(unit(&spade_optimal(&p_point).unwrap(), &p_point), 2.0);

    // orthogonal one-dimensional images: the larger variance wins
    check(qcb_1d(2.5, 0.4, FRAC_PI_2).unwrap().exponent, 2.5);
    let p_orth = ScenarioParams {
        v1x: 2.5,
        v1y: 0.0,
        v2x: 0.4,
        v2y: 0.0,
        theta1: 0.0,
        theta2: FRAC_PI_2,
        i0: 1.3,
        chi: 0.1,
    };
    check(unit(&qcb_subdiff(&p_orth).unwrap(), &p_orth), 2.5);

    // identical one-dimensional images in tilted frames
    let dt_idr = 0.4_f64;
    check(
        qcb_1d(1.7, 1.7, dt_idr).unwrap().exponent,
        1.7 * dt_idr.sin().powi(2),
    );
    let p_idr = ScenarioParams {
        v1x: 1.7,
        v1y: 0.0,
        v2x: 1.7,
        v2y: 0.0,
        theta1: -dt_idr / 2.0,
        theta2: dt_idr / 2.0,
        i0: 1.0,
        chi: 0.1,
    };
    check(unit(&qcb_subdiff(&p_idr).unwrap(), &p_idr), 1.7 * dt_idr.sin().powi(2));

    // the same source seen in frames a right angle apart
    let want_r90 = 18.0 - 12.0 * SQRT_2;
    check(qcb_rotated(6.0, 12.0, FRAC_PI_2).unwrap().exponent, want_r90);
    let p_r90 = ScenarioParams {
        v1x: 6.0,
        v1y: 12.0,
        v2x: 6.0,
        v2y: 12.0,
        theta1: 0.0,
        theta2: FRAC_PI_2,
        i0: 1.0,
        chi: 0.1,
    };
    check(unit(&qcb_subdiff(&p_r90).unwrap(), &p_r90), want_r90);
    check(unit(&spade_optimal(&p_r90).unwrap(), &p_r90), want_r90);

    let dt = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-8;
    println!(
        "criterion 4: {} (four closed forms, worst |dev| = {worst:.3e} in i0 chi^2 units, {dt:.1} s)",
        verdict(pass)
    );
    assert!(pass, "worst closed-form deviation {worst:.3e} (tol 1e-8)");
}

#[test]
fn criterion_05_sorter_never_beats_the_quantum_bound() {
    let t0 = Instant::now();
    let draws = 10_000usize;
    let results: Vec<(bool, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(0xACC5_0000 + i as u64);
            // the anisotropy cap and the dtheta window keep generic draws
            // decidably far from every commuting configuration, so the
            // 1e-9 equality threshold splits the sample cleanly
            let v1x = rng.gen_range(0.2..3.0);
            let mut v1y = v1x * rng.gen_range(0.05..0.5);
            let v2x = rng.gen_range(0.2..3.0);
            let mut v2y = v2x * rng.gen_range(0.05..0.5);
            let theta1 = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
            let mut dtheta = rng.gen_range(0.25..FRAC_PI_2 - 0.25);
            let commuting = i % 10 == 0;
            if commuting {
                // the four ways the hypotheses can share an eigenbasis
                match (i / 10) % 4 {
                    0 => dtheta = 0.0,
                    1 => dtheta = FRAC_PI_2,
                    2 => v1y = v1x,
                    _ => v2y = v2x,
                }
            }
            let p = ScenarioParams {
                v1x,
                v1y,
                v2x,
                v2y,
                theta1,
                theta2: theta1 + dtheta,
                i0: 1.0,
                chi: 0.1,
            };
            let q = qcb_subdiff(&p).unwrap().exponent;
            let m = spade_optimal(&p).unwrap().exponent;
            (commuting, q - m)
        })
        .collect();
    let mut bound_violation = f64::NEG_INFINITY;
    let mut worst_commuting = 0.0_f64;
    let mut min_generic = f64::INFINITY;
    for &(commuting, diff) in &results {
        bound_violation = bound_violation.max(-diff);
        if commuting {
            worst_commuting = worst_commuting.max(diff);
        } else {
            min_generic = min_generic.min(diff);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    let pass =
        bound_violation <= 1e-9 && worst_commuting < 1e-9 && min_generic >= 1e-9 && dt < 120.0;
    println!(
        "criterion 5: {} (10^4 draws; bound slack >= {:.1e}, commuting gap <= {:.1e}, generic gap >= {:.1e}, {dt:.1} s)",
        verdict(pass),
        -bound_violation,
        worst_commuting,
        min_generic
    );
    assert!(
        pass,
        "violation {bound_violation:.1e} (tol 1e-9), commuting {worst_commuting:.1e} (< 1e-9), \
         generic {min_generic:.1e} (>= 1e-9), {dt:.1} s (budget 120)"
    );
}

#[test]
fn criterion_06_aligned_sorter_region_and_boundary() {
    let t0 = Instant::now();
    let dtheta = 3.0 * FRAC_PI_8;
    let scenario = |r: f64| ScenarioParams {
        v1x: r,
        v1y: 0.0,
        v2x: 1.0,
        v2y: 0.0,
        theta1: dtheta / 2.0,
        theta2: -dtheta / 2.0,
        i0: 1.0,
        chi: 0.1,
    };
    // sorter frame on the smaller-variance image
    let aligned = |r: f64| if r <= 1.0 { dtheta / 2.0 } else { -dtheta / 2.0 };

    let mut worst_inside = 0.0_f64;
    for r in [0.01, 0.2, 1.0, 5.0, 100.0] {
        assert!(
            optimality_region_1d(r, 1.0, dtheta).unwrap(),
            "ratio {r} should sit inside the region"
        );
        worst_inside = worst_inside.max(gap(&scenario(r), aligned(r)).unwrap());
    }

    let mut min_outside = f64::INFINITY;
    for r in [2e-4, 5e-4, 2000.0, 5000.0] {
        assert!(
            !optimality_region_1d(r, 1.0, dtheta).unwrap(),
            "ratio {r} should sit outside the region"
        );
        let rows = sweep_theta0(&scenario(r), 721).unwrap();
        let best = rows.iter().map(|w| w.gap).fold(f64::INFINITY, f64::min);
        min_outside = min_outside.min(best);
    }

    // boundary detection: bisect the aligned-sorter saturation indicator
    let inside = |r: f64| gap(&scenario(r), aligned(r)).unwrap() < 1e-11;
    let (mut lo, mut hi) = (2e-4_f64.ln(), 1e-2_f64.ln());
    assert!(!inside(lo.exp()) && inside(hi.exp()), "bracket does not straddle");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inside(mid.exp()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let detected = (0.5 * (lo + hi)).exp();

    // the same boundary from the scalar equation cos^2 dtheta ln r = r - 1
    let c2 = dtheta.cos().powi(2);
    let f = |r: f64| c2 * r.ln() - (r - 1.0);
    let (mut a, mut b) = (1e-4, 1e-2);
    assert!(f(a) < 0.0 && f(b) > 0.0, "analytic bracket does not straddle");
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let analytic = 0.5 * (a + b);
    let boundary_err = (detected - analytic).abs() / analytic;

    let dt = t0.elapsed().as_secs_f64();
    let pass = worst_inside < 1e-10 && min_outside > 1e-6 && boundary_err <= 1e-3 && dt < 60.0;
    println!(
        "criterion 6: {} (inside gap <= {worst_inside:.1e}, outside gap >= {min_outside:.1e}, \
         boundary {detected:.6e} vs {analytic:.6e}, rel err {boundary_err:.1e}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(
        pass,
        "inside {worst_inside:.1e} (< 1e-10), outside {min_outside:.1e} (> 1e-6), \
         boundary rel err {boundary_err:.1e} (tol 1e-3), {dt:.1} s (budget 60)"
    );
}

#[test]
fn criterion_07_gap_minima_locations() {
    let t0 = Instant::now();
    let n = 361; // grid step pi/720 over [0, pi/2]
    let step = FRAC_PI_2 / (n - 1) as f64;

    // equal anisotropic sources in frames dt apart: best sorter halfway,
    // a quarter turn off the shared mid-frame
    let mut worst_argmin_dev = 0.0_f64;
    for dt_frames in [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8] {
        let p = ScenarioParams {
            v1x: 6.0,
            v1y: 12.0,
            v2x: 6.0,
            v2y: 12.0,
            theta1: dt_frames / 2.0,
            theta2: -dt_frames / 2.0,
            i0: 1.0,
            chi: 0.1,
        };
        let rows = sweep_theta0(&p, n).unwrap();
        let best = rows
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.gap.total_cmp(&b.1.gap))
            .unwrap();
        worst_argmin_dev = worst_argmin_dev.max((best.1.theta0 - FRAC_PI_4).abs());
    }
    let argmin_ok = worst_argmin_dev <= step + 1e-12;

    // strongly anisotropic pair at a small frame separation: the claim is
    // a local gap minimum at each hypothesis frame angle
    let p_cusp = ScenarioParams {
        v1x: 2.0,
        v1y: 0.2,
        v2x: 2.0,
        v2y: 0.2,
        theta1: PI / 16.0,
        theta2: -PI / 16.0,
        i0: 1.0,
        chi: 0.1,
    };
    let rows = sweep_theta0(&p_cusp, n).unwrap();
    let local_min = |idx: usize| {
        rows[idx].gap < rows[idx - 1].gap && rows[idx].gap < rows[idx + 1].gap
    };
    let idx1 = 45; // theta0 = pi/16
    let idx2 = 315; // theta0 = 7 pi/16, the image of -pi/16 one period up
    let cusp_ok = local_min(idx1) && local_min(idx2);
    let curve_argmin = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.gap.total_cmp(&b.1.gap))
        .unwrap();

    let dt = t0.elapsed().as_secs_f64();
    let pass = argmin_ok && cusp_ok && dt < 120.0;
    println!(
        "criterion 7: {} (argmin dev {worst_argmin_dev:.2e} rad <= step {step:.2e}: {argmin_ok}; \
         frame-angle minima at (2, 0.2): {cusp_ok}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(
        pass,
        "equal-pair argmin ok: {argmin_ok} (worst dev {worst_argmin_dev:.2e}); \
         (2, 0.2) frame-angle local minima: {cusp_ok}, gap at pi/16 neighbors = \
         [{:.6e}, {:.6e}, {:.6e}], at 7 pi/16 = [{:.6e}, {:.6e}, {:.6e}], \
         curve minimum instead at theta0 = {:.4} with gap {:.3e}; \
         the curve is smooth at the frame angles, so the claimed cusp minima do not exist",
        rows[idx1 - 1].gap,
        rows[idx1].gap,
        rows[idx1 + 1].gap,
        rows[idx2 - 1].gap,
        rows[idx2].gap,
        rows[idx2 + 1].gap,
        curve_argmin.1.theta0,
        curve_argmin.1.gap
    );
}

#[test]
fn criterion_08_simulated_error_decay() {
    let t0 = Instant::now();
    // commuting scenario whose best sorter sits at theta0 = 0 and reaches
    // the quantum exponent; frozen after a seed sweep, see notes
    let p = ScenarioParams {
        v1x: 1.8,
        v1y: 0.3,
        v2x: 0.2,
        v2y: 0.3,
        theta1: 0.0,
        theta2: 0.0,
        i0: 1.0,
        chi: 0.1,
    };
    let basis = MeasurementBasis { theta0: 0.0 };
    let cfg = SimConfig {
        frames_per_trial: 0,
        trials: 200_000,
        seed: 1,
        sampling_mode: SamplingMode::ClosedFormProbs,
    };
    let fit = estimate_error_exponent(&p, &basis, &cfg, &[200, 400, 800, 1600]).unwrap();
    let last = fit.rows.last().unwrap();
    let last_errors = last.errors_h1 + last.errors_h2;
    let agreement_dev = (fit.agreement() - 1.0).abs();
    let dt = t0.elapsed().as_secs_f64();
    let pass = last.n == 1600 && last_errors >= 50 && agreement_dev <= 0.10 && dt < 300.0;
    println!(
        "criterion 8: {} (slope = {:.4e}, theory = {:.4e}, |agreement - 1| = {agreement_dev:.3}, \
         {last_errors} errors at N = 1600, {dt:.1} s)",
        verdict(pass),
        fit.slope,
        fit.xi_theory
    );
    assert!(
        pass,
        "agreement dev {agreement_dev:.3} (tol 0.10), {last_errors} errors at N = {} \
         (need >= 50 at 1600), {dt:.1} s (budget 300)",
        last.n
    );
}

#[test]
fn criterion_09_two_point_mean_inequality() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC9);
    let mut min_slack = f64::INFINITY;
    for _ in 0..100_000 {
        let d1 = rng.gen_range(-PI..PI);
        let d2 = rng.gen_range(-PI..PI);
        let s = rng.gen_range(0.0..=1.0);
        let (lhs, rhs) = amgm_cs_lower_bound(d1, d2, s);
        min_slack = min_slack.min(lhs - rhs);
    }

    let mut worst_eq = 0.0_f64;
    let mut hit = |(lhs, rhs): (f64, f64)| worst_eq = worst_eq.max((lhs - rhs).abs());
    for _ in 0..2000 {
        let d = rng.gen_range(-PI..PI);
        let s = rng.gen_range(0.0..=1.0);
        // identical offsets
        hit(amgm_cs_lower_bound(d, d, s));
        // weight at an endpoint with the other offset zeroed
        hit(amgm_cs_lower_bound(d, 0.0, 1.0));
        hit(amgm_cs_lower_bound(0.0, d, 0.0));
        // offsets a right angle apart, anchored on an axis
        for base in [0.0, FRAC_PI_2] {
            hit(amgm_cs_lower_bound(base, base - FRAC_PI_2, s));
        }
    }

    let dt = t0.elapsed().as_secs_f64();
    let pass = min_slack >= -1e-12 && worst_eq <= 1e-12 && dt < 10.0;
    println!(
        "criterion 9: {} (10^5 triples, min slack = {min_slack:.1e}, \
         worst saturation residual = {worst_eq:.1e}, {dt:.1} s)",
        verdict(pass)
    );
    assert!(
        pass,
        "min slack {min_slack:.1e} (>= -1e-12), saturation residual {worst_eq:.1e} \
         (<= 1e-12), {dt:.1} s (budget 10)"
    );
}

#[test]
fn criterion_10_invariance_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC1_0000);

    // swap symmetry and a shared mode rotation on general covariances
    let mut worst_swap = 0.0_f64;
    let mut worst_rot = 0.0_f64;
    for _ in 0..20 {
        let g1 = random_shape(&mut rng, 1.0);
        let g2 = random_shape(&mut rng, 1.0);
        let e12 = qcb_general(&g1, &g2).unwrap().exponent;
        let e21 = qcb_general(&g2, &g1).unwrap().exponent;
        worst_swap = worst_swap.max((e12 - e21).abs() / e12);

        // exact product of plane rotations, orthogonal by construction
        let mut q = DMatrix::<f64>::identity(3, 3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (s, c) = rng.gen_range(-PI..PI).sin_cos();
            let mut giv = DMatrix::<f64>::identity(3, 3);
            giv[(i, i)] = c;
            giv[(j, j)] = c;
            giv[(i, j)] = -s;
            giv[(j, i)] = s;
            q = q * giv;
        }
        let conj = |g: &CovMatrix| CovMatrix {
            entries: &q * &g.entries * q.transpose(),
            basis: g.basis.clone(),
            i0: g.i0,
            psd_slack: g.psd_slack,
            chi: g.chi,
        };
        let e_rot = qcb_general(&conj(&g1), &conj(&g2)).unwrap().exponent;
        worst_rot = worst_rot.max((e_rot - e12).abs() / e12);
    }

    // label swap and a common frame shift on the closed-form scenario
    let mut worst_label = 0.0_f64;
    let mut worst_shift = 0.0_f64;
    for _ in 0..50 {
        let p = ScenarioParams {
            v1x: rng.gen_range(0.15..2.5),
            v1y: rng.gen_range(0.15..2.5),
            v2x: rng.gen_range(0.15..2.5),
            v2y: rng.gen_range(0.15..2.5),
            theta1: rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            theta2: rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
            i0: rng.gen_range(0.5..2.0),
            chi: 0.1,
        };
        let base = qcb_subdiff(&p).unwrap().exponent;
        let swapped = ScenarioParams {
            v1x: p.v2x,
            v1y: p.v2y,
            v2x: p.v1x,
            v2y: p.v1y,
            theta1: p.theta2,
            theta2: p.theta1,
            ..p
        };
        worst_label = worst_label.max((qcb_subdiff(&swapped).unwrap().exponent - base).abs() / base);
        let delta = rng.gen_range(-1.0..1.0);
        let shifted = ScenarioParams {
            theta1: p.theta1 + delta,
            theta2: p.theta2 + delta,
            ..p
        };
        worst_shift = worst_shift.max((qcb_subdiff(&shifted).unwrap().exponent - base).abs() / base);
    }

    // the expansion's matrix builder: exact trace, positive, symmetric
    let mut worst_trace = 0.0_f64;
    let mut psd_ok = true;
    for chi in [0.02, 0.05, 0.1] {
        for _ in 0..30 {
            let m20: f64 = rng.gen_range(0.1..2.0);
            let m02: f64 = rng.gen_range(0.1..2.0);
            let m11 = rng.gen_range(-0.95..0.95) * (m20 * m02).sqrt();
            let mom = SecondMoments {
                m10: 0.0,
                m01: 0.0,
                m20,
                m02,
                m11,
            };
            let i0 = rng.gen_range(0.5..2.0);
            let g = hg_covariance_chi2(&mom, i0, chi).unwrap();
            worst_trace = worst_trace.max((g.trace() - i0).abs() / i0);
            psd_ok &= g.validate_psd().is_ok() && g.validate_symmetry().is_ok();
        }
    }

    // the quiet sector: fundamental-plus-second-order block carries no
    // distinguishability beyond the expansion's own error floor
    let mut worst_alpha = 0.0_f64;
    for chi in [0.02_f64, 0.05, 0.1] {
        let mut worst = 0.0_f64;
        for _ in 0..10 {
            let mut normalized = || {
                let m20: f64 = rng.gen_range(0.2..0.8);
                let m02 = 1.0 - m20;
                let m11 = rng.gen_range(-0.9..0.9) * (m20 * m02).sqrt();
                SecondMoments {
                    m10: 0.0,
                    m01: 0.0,
                    m20,
                    m02,
                    m11,
                }
            };
            let a = split_blocks(&hg_covariance_chi2(&normalized(), 1.0, chi).unwrap()).unwrap();
            let b = split_blocks(&hg_covariance_chi2(&normalized(), 1.0, chi).unwrap()).unwrap();
            for s in [0.2, 0.5, 0.8] {
                let q = q_of_s(&a.gamma_alpha, &b.gamma_alpha, s).unwrap();
                worst = worst.max((q - 1.0).abs());
            }
        }
        worst_alpha = worst_alpha.max(worst / (10.0 * chi.powi(4)));
    }

    let dt = t0.elapsed().as_secs_f64();
    let pass = worst_swap <= 1e-11
        && worst_rot <= 1e-10
        && worst_label <= 1e-10
        && worst_shift <= 1e-10
        && worst_trace <= 1e-12
        && psd_ok
        && worst_alpha <= 1.0;
    println!(
        "criterion 10: {} (swap {worst_swap:.1e}, rotation {worst_rot:.1e}, label {worst_label:.1e}, \
         shift {worst_shift:.1e}, trace {worst_trace:.1e}, psd {psd_ok}, \
         quiet sector at {worst_alpha:.2} of its 10 chi^4 budget, {dt:.1} s)",
        verdict(pass)
    );
    assert!(
        pass,
        "swap {worst_swap:.1e} (1e-11), rotation {worst_rot:.1e} (1e-10), \
         label {worst_label:.1e} (1e-10), shift {worst_shift:.1e} (1e-10), \
         trace {worst_trace:.1e} (1e-12), psd {psd_ok}, quiet-sector ratio {worst_alpha:.2} (<= 1)"
    );
}
