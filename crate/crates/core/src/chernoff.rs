//! Chernoff exponents for discriminating two zero-mean Gaussian states
//! given as mode covariance matrices: the general determinant formula, the
//! faint-source linearization, and the closed form for commuting pairs.

use nalgebra::DMatrix;

use crate::cov::CovMatrix;
use crate::error::{Error, Result};
use crate::optimize::{maximize_scalar, minimize_scalar};

/// Fractional power with the support convention: 0^s = 0 for every
/// s in [0,1], including s = 0, while x^0 = 1 for x > 0.
pub fn spow(x: f64, s: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(s)
    }
}

/// How an exponent was computed. Rendered into run manifests and CSV rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    General,
    Faint,
    Commuting,
    SubdiffQcb,
    Trispade,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::General => "general",
            MethodTag::Faint => "faint",
            MethodTag::Commuting => "commuting",
            MethodTag::SubdiffQcb => "subdiff_qcb",
            MethodTag::Trispade => "trispade",
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An exponent together with the optimizing weight and, for measurements
/// with a free mode orientation, the optimizing angle. `grid_diagnostic`
/// is set when the coarse scan over s saw more than one local extremum and
/// the refinement step was skipped.
#[derive(Debug, Clone, Copy)]
pub struct ChernoffResult {
    pub exponent: f64,
    pub s_star: f64,
    pub theta0_star: Option<f64>,
    pub method: MethodTag,
    pub grid_diagnostic: bool,
}

/// Eigendecomposition of a mode covariance: per-mode mean photon numbers
/// and the orthogonal frame carrying them.
#[derive(Debug, Clone)]
pub struct GammaSpectrum {
    /// Descending, clamped to exact zero below the noise floor.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, ordered to match `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl GammaSpectrum {
    /// Eigensolve with positivity repair. Negative eigenvalues within the
    /// matrix's declared slack (or roundoff of the largest) clamp to zero;
    /// anything lower is rejected. Positive values more than twelve orders
    /// below the largest also clamp to zero so that mode supports are
    /// detected exactly.
    pub fn from_cov(cov: &CovMatrix) -> Result<Self> {
        cov.validate_symmetry()?;
        let (raw, frame) = crate::eigen::jacobi_eigen(&cov.entries);
        let m = cov.dim();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| raw[b].partial_cmp(&raw[a]).unwrap());
        let max = raw[order[0]].max(0.0);
        let neg_floor = (1e-10 * max).max(cov.psd_slack);
        let dust = 1e-12 * max;
        let mut eigenvalues = Vec::with_capacity(m);
        for &k in &order {
            let d = raw[k];
            if d < -neg_floor {
                return Err(Error::domain(format!(
                    "covariance eigenvalue {d:e} below the positivity floor {:e}",
                    -neg_floor
                )));
            }
            eigenvalues.push(if d <= dust { 0.0 } else { d });
        }
        let eigenvectors = DMatrix::from_fn(m, m, |r, c| frame[(r, order[c])]);
        let gram = eigenvectors.transpose() * &eigenvectors;
        let worst = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0_f64, f64::max);
        if worst > 1e-10 {
            return Err(Error::domain(format!(
                "eigenvector frame not orthogonal: deviation {worst:e}"
            )));
        }
        Ok(GammaSpectrum {
            eigenvalues,
            eigenvectors,
        })
    }

    fn kernel_indices(&self) -> Vec<usize> {
        (0..self.eigenvalues.len())
            .filter(|&i| self.eigenvalues[i] == 0.0)
            .collect()
    }
}

fn check_s_open(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::domain(format!(
            "weight s = {s} outside (0, 1]; s = 0 requires the endpoint limit"
        )));
    }
    Ok(())
}

// t = s ln(1 + 1/x) drives both spectral functions. x = 0 maps to
// t = +inf, which both forms absorb without branching.
fn t_of(x: f64, s: f64) -> f64 {
    s * (1.0 / x).ln_1p()
}

/// ln of g_s(x) = 1 / ((x+1)^s - x^s), computed without cancellation as
/// -s ln(1+x) - ln(1 - e^{-t}).
pub fn ln_g_func(x: f64, s: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("mean photon number {x} invalid")));
    }
    check_s_open(s)?;
    let t = t_of(x, s);
    Ok(-s * x.ln_1p() - (-(-t).exp_m1()).ln())
}

/// g_s(x) = 1 / ((x+1)^s - x^s). Equals 1 at x = 0 and at s = 1.
pub fn g_func(x: f64, s: f64) -> Result<f64> {
    Ok(ln_g_func(x, s)?.exp())
}

/// lambda_s(x) = ((x+1)^s + x^s) / ((x+1)^s - x^s) = coth(t/2).
pub fn lambda_func(x: f64, s: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("mean photon number {x} invalid")));
    }
    check_s_open(s)?;
    let em = (-t_of(x, s)).exp_m1();
    Ok(-(2.0 + em) / em)
}

fn check_compatible(g1: &CovMatrix, g2: &CovMatrix) -> Result<()> {
    if g1.dim() != g2.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    if g1.basis != g2.basis {
        return Err(Error::domain("covariances use different mode bases"));
    }
    Ok(())
}

/// ln Q(s) from precomputed spectra:
/// ln Q = M ln 2 + sum ln g_s(d1) + sum ln g_{1-s}(d2)
///        - ln det(lambda_s(g1) + lambda_{1-s}(g2)).
pub fn ln_q_from_spectra(s1: &GammaSpectrum, s2: &GammaSpectrum, s: f64) -> Result<f64> {
    let m = s1.eigenvalues.len();
    let mut ln_num = m as f64 * std::f64::consts::LN_2;
    for &d in &s1.eigenvalues {
        ln_num += ln_g_func(d, s)?;
    }
    for &d in &s2.eigenvalues {
        ln_num += ln_g_func(d, 1.0 - s)?;
    }
    let scaled = |spec: &GammaSpectrum, w: f64| -> Result<DMatrix<f64>> {
        let mut cols = spec.eigenvectors.clone();
        for (c, &d) in spec.eigenvalues.iter().enumerate() {
            let lam = lambda_func(d, w)?;
            cols.column_mut(c).scale_mut(lam);
        }
        Ok(cols * spec.eigenvectors.transpose())
    };
    let den = scaled(s1, s)? + scaled(s2, 1.0 - s)?;
    // both lambda matrices are >= identity, so the sum is positive definite
    let ln_det = match nalgebra::Cholesky::new(den.clone()) {
        Some(chol) => 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => {
            let eigs = den.symmetric_eigenvalues();
            let mut acc = 0.0;
            for e in eigs.iter() {
                if *e <= 0.0 {
                    return Err(Error::domain(
                        "denominator of the overlap lost positivity",
                    ));
                }
                acc += e.ln();
            }
            acc
        }
    };
    Ok(ln_num - ln_det)
}

/// Overlap Q(s) = 2^M det(g_s(g1)) det(g_{1-s}(g2)) /
/// det(lambda_s(g1) + lambda_{1-s}(g2)), for s strictly inside (0, 1).
pub fn q_of_s(g1: &CovMatrix, g2: &CovMatrix, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain(format!(
            "weight s = {s} outside (0, 1); endpoints have their own limits"
        )));
    }
    check_compatible(g1, g2)?;
    let s1 = GammaSpectrum::from_cov(g1)?;
    let s2 = GammaSpectrum::from_cov(g2)?;
    Ok(ln_q_from_spectra(&s1, &s2, s)?.exp())
}

/// ln of the s -> 0 limit of Q(s): -ln det(I + P gamma2 P) restricted to
/// the kernel of gamma1. Empty kernel gives 0 (Q -> 1).
fn ln_q_at_zero(s1: &GammaSpectrum, cov2: &CovMatrix) -> f64 {
    let kernel = s1.kernel_indices();
    if kernel.is_empty() {
        return 0.0;
    }
    let cols = s1.eigenvectors.select_columns(kernel.iter());
    let block = cols.transpose() * &cov2.entries * cols;
    let eigs = block.symmetric_eigenvalues();
    -eigs.iter().map(|mu| mu.max(0.0).ln_1p()).sum::<f64>()
}

const S_EDGE: f64 = 1e-9;

fn finish(exponent: f64, s_star: f64, method: MethodTag, diag: bool) -> Result<ChernoffResult> {
    if exponent < -1e-8 {
        return Err(Error::domain(format!(
            "state overlap exceeded 1 (exponent {exponent:e}); inputs are not valid covariances"
        )));
    }
    Ok(ChernoffResult {
        exponent: exponent.max(0.0),
        s_star,
        theta0_star: None,
        method,
        grid_diagnostic: diag,
    })
}

/// Quantum Chernoff exponent -ln min_s Q(s). The interior is scanned on
/// [1e-9, 1-1e-9] and the two endpoint limits are appended analytically.
pub fn qcb_general(g1: &CovMatrix, g2: &CovMatrix) -> Result<ChernoffResult> {
    check_compatible(g1, g2)?;
    let s1 = GammaSpectrum::from_cov(g1)?;
    let s2 = GammaSpectrum::from_cov(g2)?;
    let scan = minimize_scalar(
        |s| ln_q_from_spectra(&s1, &s2, s).unwrap_or(f64::NAN),
        S_EDGE,
        1.0 - S_EDGE,
        1e-10,
    )?;
    let (mut best_ln_q, mut s_star) = (scan.f, scan.x);
    let q0 = ln_q_at_zero(&s1, g2);
    if q0 < best_ln_q {
        best_ln_q = q0;
        s_star = 0.0;
    }
    let q1 = ln_q_at_zero(&s2, g1);
    if q1 < best_ln_q {
        best_ln_q = q1;
        s_star = 1.0;
    }
    finish(-best_ln_q, s_star, MethodTag::General, scan.multimodal)
}

/// Faint-source exponent I0 - min_s tr(gamma1^s gamma2^{1-s}), valid to
/// linear order in the total intensity. Requires equal intensities.
pub fn qcb_faint(g1: &CovMatrix, g2: &CovMatrix) -> Result<ChernoffResult> {
    check_compatible(g1, g2)?;
    let (tr1, tr2) = (g1.trace(), g2.trace());
    if (tr1 - tr2).abs() > 1e-9 * tr1.abs().max(1.0) {
        return Err(Error::domain(format!(
            "faint-source form needs equal intensities: traces {tr1:e} vs {tr2:e}"
        )));
    }
    let s1 = GammaSpectrum::from_cov(g1)?;
    let s2 = GammaSpectrum::from_cov(g2)?;
    let overlap_sq = {
        let o = s1.eigenvectors.transpose() * &s2.eigenvectors;
        o.map(|v| v * v)
    };
    let m = s1.eigenvalues.len();
    let trace_power = |s: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            let p = spow(s1.eigenvalues[i], s);
            if p == 0.0 {
                continue;
            }
            for j in 0..m {
                let q = spow(s2.eigenvalues[j], 1.0 - s);
                acc += overlap_sq[(i, j)] * p * q;
            }
        }
        acc
    };
    let scan = minimize_scalar(trace_power, 0.0, 1.0, 1e-10)?;
    finish(tr1 - scan.f, scan.x, MethodTag::Faint, scan.multimodal)
}

/// Do the two covariances share an eigenbasis, up to `tol` relative in
/// Frobenius norm of the commutator?
pub fn commute_check(g1: &CovMatrix, g2: &CovMatrix, tol: f64) -> Result<bool> {
    check_compatible(g1, g2)?;
    let commutator = &g1.entries * &g2.entries - &g2.entries * &g1.entries;
    Ok(commutator.norm() <= tol * g1.entries.norm() * g2.entries.norm())
}

/// Simultaneously diagonalize a commuting pair: eigenframe of the first,
/// with degenerate clusters re-diagonalized against the second.
fn common_eigenbasis(g1: &CovMatrix, g2: &CovMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let s1 = GammaSpectrum::from_cov(g1)?;
    let m = s1.eigenvalues.len();
    let mut frame = s1.eigenvectors.clone();
    let scale = s1.eigenvalues[0].max(1.0);
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && s1.eigenvalues[end - 1] - s1.eigenvalues[end] <= 1e-7 * scale {
            end += 1;
        }
        if end - start > 1 {
            let cols = frame.columns(start, end - start).into_owned();
            let block = cols.transpose() * &g2.entries * &cols;
            let (_, sub_frame) = crate::eigen::jacobi_eigen(&block);
            let rotated = cols * sub_frame;
            frame.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }
    let in_frame = frame.transpose() * &g2.entries * &frame;
    let mut off = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                off = off.max(in_frame[(i, j)].abs());
            }
        }
    }
    if off > 1e-6 * g2.entries.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::precondition(format!(
            "states do not share an eigenbasis: residual coupling {off:e}"
        )));
    }
    let floor = (1e-10 * in_frame.trace().abs()).max(g2.psd_slack);
    let mut b = Vec::with_capacity(m);
    for i in 0..m {
        let v = in_frame[(i, i)];
        if v < -floor {
            return Err(Error::domain(format!(
                "second covariance eigenvalue {v:e} below the positivity floor"
            )));
        }
        b.push(v.max(0.0));
    }
    Ok((s1.eigenvalues, b))
}

/// Closed form for commuting covariances:
/// max_s sum_i ln((1+a_i)^s (1+b_i)^{1-s} - a_i^s b_i^{1-s}),
/// with the support convention at the s endpoints.
pub fn qcb_commuting(g1: &CovMatrix, g2: &CovMatrix) -> Result<ChernoffResult> {
    if !commute_check(g1, g2, 1e-8)? {
        return Err(Error::precondition(
            "covariances do not commute; use the general form",
        ));
    }
    let (a, b) = common_eigenbasis(g1, g2)?;
    let objective = |s: f64| -> f64 {
        let mut acc = 0.0;
        for (&ai, &bi) in a.iter().zip(&b) {
            let u = (s * ai.ln_1p() + (1.0 - s) * bi.ln_1p()).exp_m1();
            let y = spow(ai, s) * spow(bi, 1.0 - s);
            acc += (u - y).ln_1p();
        }
        acc
    };
    let scan = maximize_scalar(objective, 0.0, 1.0, 1e-10)?;
    finish(scan.f, scan.x, MethodTag::Commuting, scan.multimodal)
}
