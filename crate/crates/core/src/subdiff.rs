//! Closed forms for discriminating two subdiffraction incoherent sources:
//! the quantum Chernoff exponent in terms of principal variances, the
//! exponent of the rotated three-mode sorter, their gap, and the special
//! scenarios with analytic answers.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use crate::chernoff::{spow, ChernoffResult, MethodTag};
use crate::error::{Error, Result};
use crate::optimize::maximize_scalar;

/// cos^2 and sin^2 of an angle, with exact right angles: values within
/// 1e-30 of 0 snap to 0 and the pair always sums to 1 exactly. Without the
/// snap, cos^2(pi/2) = 3.7e-33 keeps endpoint-support terms alive that the
/// closed forms need dead.
fn trig_sq(angle: f64) -> (f64, f64) {
    let c = angle.cos();
    let mut c2 = c * c;
    if c2 < 1e-30 {
        c2 = 0.0;
    }
    let mut s2 = 1.0 - c2;
    if s2 < 1e-30 {
        s2 = 0.0;
        c2 = 1.0;
    }
    (c2, s2)
}

/// Two hypotheses on the same faint source: principal variances, frame
/// angles, total intensity, and the size parameter of the expansion.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioParams {
    pub v1x: f64,
    pub v1y: f64,
    pub v2x: f64,
    pub v2y: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub i0: f64,
    pub chi: f64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        for v in [self.v1x, self.v1y, self.v2x, self.v2y] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("variance {v} invalid")));
            }
        }
        if !(self.i0 > 0.0) {
            return Err(Error::domain("intensity must be positive"));
        }
        if !(self.chi > 0.0 && self.chi <= 0.2) {
            return Err(Error::domain(format!(
                "size parameter {} outside (0, 0.2]",
                self.chi
            )));
        }
        if !self.theta1.is_finite() || !self.theta2.is_finite() {
            return Err(Error::domain("frame angle not finite"));
        }
        Ok(())
    }

    #[cfg(test)]
    fn swap_hypotheses(&self) -> ScenarioParams {
        ScenarioParams {
            v1x: self.v2x,
            v1y: self.v2y,
            v2x: self.v1x,
            v2y: self.v1y,
            theta1: self.theta2,
            theta2: self.theta1,
            ..*self
        }
    }
}

/// Variances seen along a frame rotated by `delta` from the principal one:
/// (cos^2 Vx + sin^2 Vy, sin^2 Vx + cos^2 Vy). The smaller component is
/// reconstructed by subtracting the larger from the trace; Sterbenz makes
/// that subtraction exact, so the pair sums to vx + vy bit for bit.
pub fn rotated_variances(vx: f64, vy: f64, delta: f64) -> (f64, f64) {
    let (c2, s2) = trig_sq(delta);
    if s2 == 0.0 {
        return (vx, vy);
    }
    if c2 == 0.0 {
        return (vy, vx);
    }
    let t = vx + vy;
    let vxm = c2 * vx + s2 * vy;
    if vxm >= 0.5 * t {
        (vxm, t - vxm)
    } else {
        let vym = t - vxm;
        (t - vym, vym)
    }
}

fn result_from_scan(
    exponent: f64,
    s_star: f64,
    theta0_star: Option<f64>,
    method: MethodTag,
    diag: bool,
) -> ChernoffResult {
    ChernoffResult {
        exponent: exponent.max(0.0),
        s_star,
        theta0_star,
        method,
        grid_diagnostic: diag,
    }
}

/// Quantum Chernoff exponent of the two-hypothesis scenario,
/// I0 chi^2 max_s [ s T1 + (1-s) T2
///                  - cos^2 dtheta (V1x^s V2x^{1-s} + V1y^s V2y^{1-s})
///                  - sin^2 dtheta (V1x^s V2y^{1-s} + V1y^s V2x^{1-s}) ],
/// with Ti the variance sums and dtheta = theta1 - theta2.
pub fn qcb_subdiff(p: &ScenarioParams) -> Result<ChernoffResult> {
    p.validate()?;
    let (c2, s2) = trig_sq(p.theta1 - p.theta2);
    // hypotheses that coincide after the frame change are indistinguishable;
    // short-circuit so the exponent is 0 rather than interior-scan dust
    let same_axes = s2 == 0.0 && p.v1x == p.v2x && p.v1y == p.v2y;
    let swapped_axes = c2 == 0.0 && p.v1x == p.v2y && p.v1y == p.v2x;
    if same_axes || swapped_axes {
        return Ok(result_from_scan(0.0, 0.0, None, MethodTag::SubdiffQcb, false));
    }
    let (t1, t2) = (p.v1x + p.v1y, p.v2x + p.v2y);
    let phi = |s: f64| {
        let (ax, ay) = (spow(p.v1x, s), spow(p.v1y, s));
        let (bx, by) = (spow(p.v2x, 1.0 - s), spow(p.v2y, 1.0 - s));
        s * t1 + (1.0 - s) * t2 - c2 * (ax * bx + ay * by) - s2 * (ax * by + ay * bx)
    };
    let scan = maximize_scalar(phi, 0.0, 1.0, 1e-10)?;
    Ok(result_from_scan(
        p.i0 * p.chi * p.chi * scan.f,
        scan.x,
        None,
        MethodTag::SubdiffQcb,
        scan.multimodal,
    ))
}

/// Exponent of the three-mode sorter rotated to `theta0`:
/// I0 chi^2 max_s [ s T1 + (1-s) T2 - W1x^s W2x^{1-s} - W1y^s W2y^{1-s} ]
/// where Wi are the variances in the measurement frame.
pub fn spade_exponent(p: &ScenarioParams, theta0: f64) -> Result<ChernoffResult> {
    p.validate()?;
    if !theta0.is_finite() {
        return Err(Error::domain("measurement angle not finite"));
    }
    let (w1x, w1y) = rotated_variances(p.v1x, p.v1y, p.theta1 - theta0);
    let (w2x, w2y) = rotated_variances(p.v2x, p.v2y, p.theta2 - theta0);
    let (t1, t2) = (p.v1x + p.v1y, p.v2x + p.v2y);
    let phi = |s: f64| {
        s * t1 + (1.0 - s) * t2
            - spow(w1x, s) * spow(w2x, 1.0 - s)
            - spow(w1y, s) * spow(w2y, 1.0 - s)
    };
    let scan = maximize_scalar(phi, 0.0, 1.0, 1e-10)?;
    Ok(result_from_scan(
        p.i0 * p.chi * p.chi * scan.f,
        scan.x,
        Some(theta0),
        MethodTag::Trispade,
        scan.multimodal,
    ))
}

const THETA0_GRID: usize = 361;

/// Best rotated-sorter exponent over theta0 in [0, pi/2]: a 361-point scan,
/// then golden refinement of the winning bracket. The exponent is periodic
/// in theta0 with period pi/2, so when the scan winner is an endpoint the
/// bracket extends one step past it and the refined angle folds back into
/// [0, pi/2); otherwise an optimum a hair beyond the edge would be clipped
/// to the endpoint and fall short by the grid-step curvature. Exact ties go
/// to the smallest angle, and a flat bracket skips refinement.
pub fn spade_optimal(p: &ScenarioParams) -> Result<ChernoffResult> {
    p.validate()?;
    let step = FRAC_PI_2 / (THETA0_GRID - 1) as f64;
    let mut values = Vec::with_capacity(THETA0_GRID);
    let mut best = 0usize;
    for i in 0..THETA0_GRID {
        let theta0 = if i == THETA0_GRID - 1 {
            FRAC_PI_2
        } else {
            step * i as f64
        };
        let r = spade_exponent(p, theta0)?;
        values.push((theta0, r));
        if r.exponent > values[best].1.exponent {
            best = i;
        }
    }
    let (mut theta_star, mut result) = values[best];
    let left = if best == 0 {
        values[THETA0_GRID - 2].1.exponent
    } else {
        values[best - 1].1.exponent
    };
    let right = if best == THETA0_GRID - 1 {
        values[1].1.exponent
    } else {
        values[best + 1].1.exponent
    };
    let flat = left == result.exponent && right == result.exponent;
    if !flat {
        let lo = if best == 0 { -step } else { values[best - 1].0 };
        let hi = if best == THETA0_GRID - 1 {
            FRAC_PI_2 + step
        } else {
            values[best + 1].0
        };
        let refined = maximize_scalar(
            |theta0| match spade_exponent(p, theta0) {
                Ok(r) => r.exponent,
                Err(_) => f64::NAN,
            },
            lo,
            hi,
            1e-10,
        )?;
        if refined.f > result.exponent {
            let folded = refined.x.rem_euclid(FRAC_PI_2);
            let candidate = spade_exponent(p, folded)?;
            if candidate.exponent > result.exponent {
                theta_star = folded;
                result = candidate;
            }
        }
    }
    Ok(ChernoffResult {
        theta0_star: Some(theta_star),
        ..result
    })
}

/// Normalized shortfall of the rotated sorter at a given angle,
/// (xi_Q - xi(theta0)) / xi_Q.
pub fn gap(p: &ScenarioParams, theta0: f64) -> Result<f64> {
    let xi_q = qcb_subdiff(p)?.exponent;
    if !(xi_q > 0.0) {
        return Err(Error::domain(
            "hypotheses are indistinguishable; the gap is undefined",
        ));
    }
    let xi = spade_exponent(p, theta0)?.exponent;
    Ok((xi_q - xi) / xi_q)
}

/// Quantum exponent for two one-dimensional images, in units of I0 chi^2:
/// max_s [ s V1 + (1-s) V2 - cos^2 dtheta V1^s V2^{1-s} ].
pub fn qcb_1d(v1: f64, v2: f64, dtheta: f64) -> Result<ChernoffResult> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::domain(
            "one-dimensional form needs positive variances; use the full scenario with zeros",
        ));
    }
    let (c2, _) = trig_sq(dtheta);
    let phi = |s: f64| s * v1 + (1.0 - s) * v2 - c2 * v1.powf(s) * v2.powf(1.0 - s);
    let scan = maximize_scalar(phi, 0.0, 1.0, 1e-10)?;
    Ok(result_from_scan(
        scan.f,
        scan.x,
        None,
        MethodTag::SubdiffQcb,
        scan.multimodal,
    ))
}

/// Whether the one-dimensional maximization sits at an s endpoint, which is
/// exactly when the sorter aligned to the smaller-variance image reaches the
/// quantum exponent: cos^2 dtheta ln r >= r - 1 for r = V1/V2 or its
/// reciprocal.
pub fn optimality_region_1d(v1: f64, v2: f64, dtheta: f64) -> Result<bool> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::domain("variance ratio needs positive variances"));
    }
    let (c2, _) = trig_sq(dtheta);
    let holds = |r: f64| c2 * r.ln() >= r - 1.0;
    Ok(holds(v1 / v2) || holds(v2 / v1))
}

/// Quantum exponent for identical variances in rotated frames, in units of
/// I0 chi^2: sin^2 dtheta (sqrt Vx - sqrt Vy)^2, optimized at s = 1/2.
pub fn qcb_rotated(vx: f64, vy: f64, dtheta: f64) -> Result<ChernoffResult> {
    if !(vx >= 0.0 && vy >= 0.0) {
        return Err(Error::domain("variances must be nonnegative"));
    }
    let (_, s2) = trig_sq(dtheta);
    let d = vx.sqrt() - vy.sqrt();
    Ok(ChernoffResult {
        exponent: s2 * d * d,
        s_star: 0.5,
        theta0_star: None,
        method: MethodTag::SubdiffQcb,
        grid_diagnostic: false,
    })
}

/// Both sides of the mean inequality behind the aligned-sorter optimality:
/// (sin^2 d1)^s (sin^2 d2)^{1-s} + (cos^2 d1)^s (cos^2 d2)^{1-s}
/// versus cos^2(d1 - d2). The left side never falls below the right by
/// more than roundoff.
pub fn amgm_cs_lower_bound(delta1: f64, delta2: f64, s: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&s), "weight outside [0,1]");
    let (c1, s1) = trig_sq(delta1);
    let (c2, s2) = trig_sq(delta2);
    let lhs = spow(s1, s) * spow(s2, 1.0 - s) + spow(c1, s) * spow(c2, 1.0 - s);
    let rhs = trig_sq(delta1 - delta2).0;
    (lhs, rhs)
}

/// One point of a measurement-angle sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    /// Delta1 + Delta2 = theta1 + theta2 - 2 theta0.
    pub sweep_variable: f64,
    pub xi_q: f64,
    pub xi_spade: f64,
    pub gap: f64,
    pub s_star: f64,
    pub theta0: f64,
}

/// Sweep the sorter angle over [0, pi/2] on `n` uniform points.
pub fn sweep_theta0(p: &ScenarioParams, n: usize) -> Result<Vec<SweepRow>> {
    if n < 2 {
        return Err(Error::domain("sweep needs at least 2 points"));
    }
    let xi_q = qcb_subdiff(p)?.exponent;
    if !(xi_q > 0.0) {
        return Err(Error::domain(
            "hypotheses are indistinguishable; sweep gap is undefined",
        ));
    }
    let step = FRAC_PI_2 / (n - 1) as f64;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let theta0 = if i == n - 1 { FRAC_PI_2 } else { step * i as f64 };
        let r = spade_exponent(p, theta0)?;
        rows.push(SweepRow {
            sweep_variable: p.theta1 + p.theta2 - 2.0 * theta0,
            xi_q,
            xi_spade: r.exponent,
            gap: (xi_q - r.exponent) / xi_q,
            s_star: r.s_star,
            theta0,
        });
    }
    Ok(rows)
}

/// Write sweep rows as CSV. `comments` go first, one `#` line each, so a
/// caller can stamp its run manifest; the body below them is deterministic.
pub fn write_sweep_csv(path: &std::path::Path, rows: &[SweepRow], comments: &[String]) -> Result<()> {
    use crate::io::fmt_real;
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("sweep_variable,xi_q,xi_spade,gap,s_star,theta0\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_real(r.sweep_variable),
            fmt_real(r.xi_q),
            fmt_real(r.xi_spade),
            fmt_real(r.gap),
            fmt_real(r.s_star),
            fmt_real(r.theta0)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One-dimensional image pairs at two frame separations, across variance
/// ratios spanning seven decades. Hypothesis frames sit symmetrically at
/// +-dtheta/2; intensity 1, size parameter 0.1.
pub fn fig2_preset() -> Vec<(String, ScenarioParams)> {
    let ratios: [(f64, &str); 7] = [
        (2e-4, "2e-4"),
        (0.01, "1e-2"),
        (0.2, "2e-1"),
        (1.0, "1"),
        (5.0, "5"),
        (100.0, "1e2"),
        (5000.0, "5e3"),
    ];
    let dthetas: [(f64, &str); 2] = [(FRAC_PI_8, "pi8"), (3.0 * FRAC_PI_8, "3pi8")];
    let mut out = Vec::new();
    for &(dt, dl) in &dthetas {
        for &(r, rl) in &ratios {
            out.push((
                format!("fig2_dt{dl}_r{rl}"),
                ScenarioParams {
                    v1x: r,
                    v1y: 0.0,
                    v2x: 1.0,
                    v2y: 0.0,
                    theta1: 0.5 * dt,
                    theta2: -0.5 * dt,
                    i0: 1.0,
                    chi: 0.1,
                },
            ));
        }
    }
    out
}

/// Identical anisotropic sources in rotated frames, for the two variance
/// pairs with near-unit root splitting, at three frame separations.
pub fn fig3_preset() -> Vec<(String, ScenarioParams)> {
    let pairs: [((f64, f64), &str); 2] = [((6.0, 12.0), "6_12"), ((2.0, 0.2), "2_02")];
    let dthetas: [(f64, &str); 3] = [
        (FRAC_PI_8, "pi8"),
        (FRAC_PI_4, "pi4"),
        (3.0 * FRAC_PI_8, "3pi8"),
    ];
    let mut out = Vec::new();
    for &((vx, vy), vl) in &pairs {
        for &(dt, dl) in &dthetas {
            out.push((
                format!("fig3_v{vl}_dt{dl}"),
                ScenarioParams {
                    v1x: vx,
                    v1y: vy,
                    v2x: vx,
                    v2y: vy,
                    theta1: 0.5 * dt,
                    theta2: -0.5 * dt,
                    i0: 1.0,
                    chi: 0.1,
                },
            ));
        }
    }
    out
}
