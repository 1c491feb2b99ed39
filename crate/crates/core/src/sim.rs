//! Monte Carlo verification of measurement exponents: simulate photon-count
//! records of the rotated three-mode sorter under both hypotheses, run the
//! likelihood-ratio test, and fit the empirical error-rate slope.
//!
//! Two samplers are provided. The closed-form path draws frames from the
//! order-chi^2 outcome table. The exact path samples complex mode amplitudes
//! from the thermal state's positive P-function (6x6 covariance), projects
//! them onto the three measured modes, and draws per-mode counts with the
//! squared amplitude as the mean; exact for thermal light at every order.
//! The paths agree up to O(chi^4).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::cov::hg_covariance_chi2;
use crate::error::{Error, Result};
use crate::fock::required_cutoff;
use crate::source::SecondMoments;
use crate::subdiff::{rotated_variances, spade_exponent, ScenarioParams};

/// The three measured modes, in order: the fundamental, then the two
/// first-order modes rotated to `theta0`. The rotation is orthogonal, so
/// the modes stay orthonormal.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementBasis {
    pub theta0: f64,
}

/// Side-mode content of one frame. Multi-photon side events land in
/// `Other`; they carry O(chi^4) probability and are tracked, not dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SideEvent {
    None,
    OneIn10,
    OneIn01,
    Other,
}

/// One detection frame: fundamental-mode count plus the side-mode category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOutcome {
    pub n00: u32,
    pub side: SideEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    ClosedFormProbs,
    PFunctionExact,
}

/// Same seed and config give bit-identical outcome streams; trials get
/// disjoint generator streams so parallel order cannot matter.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub frames_per_trial: usize,
    pub trials: usize,
    pub seed: u64,
    pub sampling_mode: SamplingMode,
}

/// Frame probabilities for one hypothesis: slots (n0, side) for n0 up to the
/// geometric truncation point, with one trailing slot that absorbs both the
/// n0 tail and all higher-order side events.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    theta0: f64,
    n0_max: usize,
    probs: Vec<f64>,
}

impl OutcomeTable {
    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn n0_max(&self) -> usize {
        self.n0_max
    }

    pub fn slots(&self) -> &[f64] {
        &self.probs
    }

    pub fn other_probability(&self) -> f64 {
        *self.probs.last().unwrap()
    }

    pub fn prob(&self, outcome: &FrameOutcome) -> f64 {
        self.probs[slot_of(outcome, self.n0_max)]
    }
}

fn slot_of(outcome: &FrameOutcome, n0_max: usize) -> usize {
    let other = 3 * (n0_max + 1);
    if outcome.side == SideEvent::Other || outcome.n00 as usize > n0_max {
        return other;
    }
    let j = match outcome.side {
        SideEvent::None => 0,
        SideEvent::OneIn10 => 1,
        SideEvent::OneIn01 => 2,
        SideEvent::Other => unreachable!(),
    };
    3 * outcome.n00 as usize + j
}

fn outcome_from_slot(slot: usize, n0_max: usize) -> FrameOutcome {
    if slot >= 3 * (n0_max + 1) {
        return FrameOutcome {
            n00: 0,
            side: SideEvent::Other,
        };
    }
    let side = match slot % 3 {
        0 => SideEvent::None,
        1 => SideEvent::OneIn10,
        _ => SideEvent::OneIn01,
    };
    FrameOutcome {
        n00: (slot / 3) as u32,
        side,
    }
}

fn hypothesis_view(p: &ScenarioParams, hypothesis: u8) -> Result<(f64, f64, f64)> {
    match hypothesis {
        1 => Ok((p.v1x, p.v1y, p.theta1)),
        2 => Ok((p.v2x, p.v2y, p.theta2)),
        other => Err(Error::domain(format!("hypothesis must be 1 or 2, got {other}"))),
    }
}

/// Frame probabilities to order chi^2: with r = I0/(1+I0) and the geometric
/// weight g(n0) = r^n0 (1-r),
///   P(n0, none)  = g(n0) (1 - chi^2 (I0^2 + n0) T / (1 + I0)),
///   P(n0, 10)    = g(n0) chi^2 I0 Wx,
///   P(n0, 01)    = g(n0) chi^2 I0 Wy,
/// where T is the variance sum and (Wx, Wy) the variances in the
/// measurement frame. The residual mass goes to the trailing slot.
pub fn outcome_probabilities(
    p: &ScenarioParams,
    hypothesis: u8,
    basis: &MeasurementBasis,
) -> Result<OutcomeTable> {
    p.validate()?;
    if !basis.theta0.is_finite() {
        return Err(Error::domain("measurement angle not finite"));
    }
    let (vx, vy, theta) = hypothesis_view(p, hypothesis)?;
    let t_sum = vx + vy;
    let guard = p.chi * p.chi * p.i0 * t_sum;
    if guard >= 0.1 {
        return Err(Error::domain(format!(
            "chi^2 I0 (Vx+Vy) = {guard:.3e} breaches the 0.1 expansion guard; reduce chi"
        )));
    }
    let n0_max = required_cutoff(p.i0, 1e-12);
    if n0_max > 1_000_000 {
        return Err(Error::domain(format!(
            "intensity {} needs {n0_max} photon-number slots; too large to tabulate",
            p.i0
        )));
    }
    let (wx, wy) = rotated_variances(vx, vy, theta - basis.theta0);
    let r = p.i0 / (1.0 + p.i0);
    let chi2 = p.chi * p.chi;
    let side_rate = chi2 * p.i0;
    let mut probs = vec![0.0; 3 * (n0_max + 1) + 1];
    let mut geo = 1.0 - r;
    let mut total = 0.0;
    for n0 in 0..=n0_max {
        let p_none = geo * (1.0 - chi2 * (p.i0 * p.i0 + n0 as f64) * t_sum / (1.0 + p.i0));
        if p_none < 0.0 {
            return Err(Error::domain(format!(
                "negative probability {p_none:e} at n0 = {n0}: the order-chi^2 \
                 expansion broke down; reduce chi"
            )));
        }
        probs[3 * n0] = p_none;
        probs[3 * n0 + 1] = geo * side_rate * wx;
        probs[3 * n0 + 2] = geo * side_rate * wy;
        total += probs[3 * n0] + probs[3 * n0 + 1] + probs[3 * n0 + 2];
        geo *= r;
    }
    let other = 1.0 - total;
    if other < -1e-10 {
        return Err(Error::domain(format!(
            "tabulated probabilities exceed 1 by {:e}; reduce chi",
            -other
        )));
    }
    *probs.last_mut().unwrap() = other.max(0.0);
    Ok(OutcomeTable {
        theta0: basis.theta0,
        n0_max,
        probs,
    })
}

/// One prepared sampler: either the categorical outcome table or the
/// P-function amplitude factor plus the measurement-mode projection.
pub struct FrameSampler {
    kind: SamplerKind,
}

enum SamplerKind {
    Closed {
        cdf: Vec<f64>,
        n0_max: usize,
    },
    Exact {
        // factor L with L L^T = gamma; amplitudes are L g for standard
        // normal g, separately for real and imaginary parts
        factor: DMatrix<f64>,
        cos0: f64,
        sin0: f64,
    },
}

impl FrameSampler {
    pub fn new(
        p: &ScenarioParams,
        hypothesis: u8,
        basis: &MeasurementBasis,
        mode: SamplingMode,
    ) -> Result<Self> {
        match mode {
            SamplingMode::ClosedFormProbs => {
                let table = outcome_probabilities(p, hypothesis, basis)?;
                let mut cdf = Vec::with_capacity(table.probs.len());
                let mut acc = 0.0;
                for &q in &table.probs {
                    acc += q;
                    cdf.push(acc);
                }
                Ok(FrameSampler {
                    kind: SamplerKind::Closed {
                        cdf,
                        n0_max: table.n0_max,
                    },
                })
            }
            SamplingMode::PFunctionExact => {
                p.validate()?;
                let (vx, vy, theta) = hypothesis_view(p, hypothesis)?;
                let (c, s) = (theta.cos(), theta.sin());
                let mom = SecondMoments {
                    m10: 0.0,
                    m01: 0.0,
                    m20: c * c * vx + s * s * vy,
                    m02: s * s * vx + c * c * vy,
                    m11: c * s * (vx - vy),
                };
                let cov = hg_covariance_chi2(&mom, p.i0, p.chi)?;
                let (values, vectors) = crate::eigen::jacobi_eigen(&cov.entries);
                let mut scaled = vectors;
                for (k, &d) in values.iter().enumerate() {
                    if d < -cov.psd_slack {
                        return Err(Error::domain(format!(
                            "sampling covariance has eigenvalue {d:e} below the \
                             allowed slack; not a valid thermal state"
                        )));
                    }
                    let scale = (d.max(0.0) / 2.0).sqrt();
                    scaled.column_mut(k).scale_mut(scale);
                }
                Ok(FrameSampler {
                    kind: SamplerKind::Exact {
                        factor: scaled,
                        cos0: basis.theta0.cos(),
                        sin0: basis.theta0.sin(),
                    },
                })
            }
        }
    }

    pub fn frame(&self, rng: &mut ChaCha12Rng) -> FrameOutcome {
        match &self.kind {
            SamplerKind::Closed { cdf, n0_max } => {
                let u: f64 = rng.gen();
                let slot = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                outcome_from_slot(slot, *n0_max)
            }
            SamplerKind::Exact { factor, cos0, sin0 } => {
                let mut g = [0.0_f64; 12];
                for pair in g.chunks_mut(2) {
                    let (a, b) = standard_normal_pair(rng);
                    pair[0] = a;
                    pair[1] = b;
                }
                // amplitudes in the mode basis; only the first three matter
                // after projection, but the factor mixes all six
                let mut re = [0.0_f64; 3];
                let mut im = [0.0_f64; 3];
                for row in 0..3 {
                    let mut rr = 0.0;
                    let mut ii = 0.0;
                    for k in 0..6 {
                        rr += factor[(row, k)] * g[k];
                        ii += factor[(row, k)] * g[6 + k];
                    }
                    re[row] = rr;
                    im[row] = ii;
                }
                let b0 = re[0] * re[0] + im[0] * im[0];
                let (r1, i1) = (
                    cos0 * re[1] + sin0 * re[2],
                    cos0 * im[1] + sin0 * im[2],
                );
                let (r2, i2) = (
                    -sin0 * re[1] + cos0 * re[2],
                    -sin0 * im[1] + cos0 * im[2],
                );
                let b1 = r1 * r1 + i1 * i1;
                let b2 = r2 * r2 + i2 * i2;
                let n00 = poisson_knuth(rng, b0);
                let n10 = poisson_knuth(rng, b1);
                let n01 = poisson_knuth(rng, b2);
                let side = match (n10, n01) {
                    (0, 0) => SideEvent::None,
                    (1, 0) => SideEvent::OneIn10,
                    (0, 1) => SideEvent::OneIn01,
                    _ => SideEvent::Other,
                };
                FrameOutcome { n00, side }
            }
        }
    }
}

/// Two standard normals from two uniforms.
fn standard_normal_pair(rng: &mut ChaCha12Rng) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let a = std::f64::consts::TAU * u2;
    (r * a.cos(), r * a.sin())
}

/// Count with mean `lambda` by uniform products.
fn poisson_knuth(rng: &mut ChaCha12Rng, lambda: f64) -> u32 {
    debug_assert!(lambda.is_finite() && lambda >= 0.0);
    let floor = (-lambda).exp();
    let mut k = 0u32;
    let mut prod = 1.0_f64;
    loop {
        prod *= rng.gen::<f64>();
        if prod <= floor {
            return k;
        }
        k += 1;
        if k > 100_000_000 {
            return k;
        }
    }
}

fn stream_rng(seed: u64, hypothesis: u8, trial_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial_index + (hypothesis as u64 - 1));
    rng
}

/// One trial's outcome record, deterministic in (seed, hypothesis,
/// trial_index) and independent of any other trial.
pub fn sample_trial(
    p: &ScenarioParams,
    hypothesis: u8,
    basis: &MeasurementBasis,
    cfg: &SimConfig,
    trial_index: u64,
) -> Result<Vec<FrameOutcome>> {
    let sampler = FrameSampler::new(p, hypothesis, basis, cfg.sampling_mode)?;
    let mut rng = stream_rng(cfg.seed, hypothesis, trial_index);
    Ok((0..cfg.frames_per_trial)
        .map(|_| sampler.frame(&mut rng))
        .collect())
}

/// All trials concatenated, trial-major.
pub fn sample_frames(
    p: &ScenarioParams,
    hypothesis: u8,
    basis: &MeasurementBasis,
    cfg: &SimConfig,
) -> Result<Vec<FrameOutcome>> {
    let sampler = FrameSampler::new(p, hypothesis, basis, cfg.sampling_mode)?;
    let mut out = Vec::with_capacity(cfg.trials * cfg.frames_per_trial);
    for trial in 0..cfg.trials as u64 {
        let mut rng = stream_rng(cfg.seed, hypothesis, trial);
        for _ in 0..cfg.frames_per_trial {
            out.push(sampler.frame(&mut rng));
        }
    }
    Ok(out)
}

/// Decide which table explains the record better; ties go to 1. Outcomes
/// unseen by a table are floored at 1e-300 rather than vetoing outright.
pub fn lr_test(outcomes: &[FrameOutcome], table1: &OutcomeTable, table2: &OutcomeTable) -> u8 {
    let mut acc = 0.0;
    for o in outcomes {
        acc += table1.prob(o).max(1e-300).ln() - table2.prob(o).max(1e-300).ln();
    }
    if acc >= 0.0 {
        1
    } else {
        2
    }
}

/// Error counts for one sample size.
#[derive(Debug, Clone, Copy)]
pub struct SimRow {
    pub n: usize,
    pub trials: usize,
    pub errors_h1: usize,
    pub errors_h2: usize,
    pub p_hat: f64,
}

/// Least-squares fit of the error-rate decay. `slope` comes from regressing
/// -ln p_hat - ln(N)/2 on N, which removes the leading 1/sqrt(N) prefactor
/// of the error probability; `raw_slope` regresses -ln p_hat directly.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub rows: Vec<SimRow>,
    pub slope: f64,
    pub raw_slope: f64,
    pub slope_stderr: f64,
    pub xi_theory: f64,
}

impl ExponentFit {
    pub fn agreement(&self) -> f64 {
        self.slope / self.xi_theory
    }
}

/// Write fit rows as CSV, echoing seed and sampling config in a `#` header
/// so a run can be reproduced from the file alone. Extra caller comment
/// lines go above that; the body is deterministic.
pub fn write_sim_csv(
    path: &std::path::Path,
    fit: &ExponentFit,
    cfg: &SimConfig,
    comments: &[String],
) -> Result<()> {
    use crate::io::fmt_real;
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    let mode = match cfg.sampling_mode {
        SamplingMode::ClosedFormProbs => "closed",
        SamplingMode::PFunctionExact => "exact",
    };
    out.push_str(&format!(
        "# seed={} base_trials={} sampling={mode}\n",
        cfg.seed, cfg.trials
    ));
    out.push_str("N,trials,errors_h1,errors_h2,p_hat,slope_fit,xi_theory\n");
    for r in &fit.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n,
            r.trials,
            r.errors_h1,
            r.errors_h2,
            fmt_real(r.p_hat),
            fmt_real(fit.slope),
            fmt_real(fit.xi_theory)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Empirical exponent of the likelihood-ratio test at `basis.theta0`.
/// `cfg.trials` is the per-hypothesis trial count at every sample size;
/// any size that yields fewer than 50 errors gets its trials doubled, at
/// most six times. Sizes with zero errors are dropped from the fit with a
/// warning. `cfg.frames_per_trial` is ignored here; sizes come from
/// `n_list`.
pub fn estimate_error_exponent(
    p: &ScenarioParams,
    basis: &MeasurementBasis,
    cfg: &SimConfig,
    n_list: &[usize],
) -> Result<ExponentFit> {
    if n_list.len() < 2 {
        return Err(Error::domain("need at least two sample sizes"));
    }
    let mut sizes: Vec<usize> = n_list.to_vec();
    sizes.sort_unstable();
    if sizes[0] == 0 {
        return Err(Error::domain("sample sizes must be positive"));
    }
    if sizes[sizes.len() - 1] < 4 * sizes[0] {
        return Err(Error::domain(
            "sample sizes must span at least a factor of 4",
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::domain("trial count must be positive"));
    }
    let xi_theory = spade_exponent(p, basis.theta0)?.exponent;
    let t1 = outcome_probabilities(p, 1, basis)?;
    let t2 = outcome_probabilities(p, 2, basis)?;
    let llr: Vec<f64> = t1
        .probs
        .iter()
        .zip(&t2.probs)
        .map(|(&a, &b)| a.max(1e-300).ln() - b.max(1e-300).ln())
        .collect();
    let n0_max = t1.n0_max;
    let s1 = FrameSampler::new(p, 1, basis, cfg.sampling_mode)?;
    let s2 = FrameSampler::new(p, 2, basis, cfg.sampling_mode)?;

    let mut rows = Vec::with_capacity(sizes.len());
    for (n_idx, &n) in sizes.iter().enumerate() {
        let seed = cfg
            .seed
            .wrapping_add((n_idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut trials = cfg.trials;
        let mut done = 0usize;
        let (mut e1, mut e2) = (0usize, 0usize);
        let mut widenings = 0;
        loop {
            let (b1, b2) = (done..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut err1 = 0usize;
                    let mut err2 = 0usize;
                    for (hyp, sampler) in [(1u8, &s1), (2u8, &s2)] {
                        let mut rng = stream_rng(seed, hyp, trial as u64);
                        let mut acc = 0.0;
                        for _ in 0..n {
                            let o = sampler.frame(&mut rng);
                            acc += llr[slot_of(&o, n0_max)];
                        }
                        let decision = if acc >= 0.0 { 1 } else { 2 };
                        if decision != hyp {
                            if hyp == 1 {
                                err1 += 1;
                            } else {
                                err2 += 1;
                            }
                        }
                    }
                    (err1, err2)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            e1 += b1;
            e2 += b2;
            done = trials;
            if e1 + e2 >= 50 || widenings >= 6 {
                break;
            }
            widenings += 1;
            trials *= 2;
        }
        let p_hat = (e1 + e2) as f64 / (2.0 * trials as f64);
        rows.push(SimRow {
            n,
            trials,
            errors_h1: e1,
            errors_h2: e2,
            p_hat,
        });
    }

    let usable: Vec<&SimRow> = rows
        .iter()
        .filter(|r| {
            if r.errors_h1 + r.errors_h2 == 0 {
                eprintln!(
                    "warning: no errors at N = {} after {} trials; dropping it from the fit",
                    r.n, r.trials
                );
                false
            } else {
                true
            }
        })
        .collect();
    if usable.len() < 2 {
        return Err(Error::domain(
            "fewer than two sample sizes produced errors; increase trials",
        ));
    }
    let (slope, stderr) = least_squares_slope(&usable, true);
    let (raw_slope, _) = least_squares_slope(&usable, false);
    Ok(ExponentFit {
        rows,
        slope,
        raw_slope,
        slope_stderr: stderr,
        xi_theory,
    })
}

/// Ordinary least squares of y(N) against N. Equal weights matter here:
/// the small sizes carry the most decisions but sit farthest from the
/// asymptotic decay, so variance-weighting would pull the slope toward
/// their curvature. The standard error propagates each point's binomial
/// spread through the fixed OLS coefficients.
fn least_squares_slope(rows: &[&SimRow], prefactor_corrected: bool) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            let decisions = 2.0 * r.trials as f64;
            let p = r.p_hat.min(1.0 - 0.5 / decisions);
            let mut y = -p.ln();
            if prefactor_corrected {
                y -= 0.5 * (r.n as f64).ln();
            }
            let var = (1.0 - p) / (p * decisions);
            (r.n as f64, y, var)
        })
        .collect();
    let k = pts.len() as f64;
    let xbar = pts.iter().map(|t| t.0).sum::<f64>() / k;
    let ybar = pts.iter().map(|t| t.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|t| (t.0 - xbar) * (t.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|t| (t.0 - xbar) * (t.1 - ybar)).sum();
    let var_slope: f64 = pts
        .iter()
        .map(|t| {
            let c = (t.0 - xbar) / sxx;
            c * c * t.2
        })
        .sum();
    (sxy / sxx, var_slope.sqrt())
}
