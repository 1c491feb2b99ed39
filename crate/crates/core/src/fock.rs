//! Brute-force verification backend: truncated number-basis density
//! operators for one- and two-mode thermal states, passive mode rotations,
//! and direct evaluation of Tr rho1^s rho2^{1-s} on an s grid.
//!
//! Everything here favors transparency over speed; the closed-form engine
//! is checked against these operators, never the other way around.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::chernoff::spow;
use crate::error::{Error, Result};
use crate::io::{fmt_real, read_csv_rows};

/// Smallest cutoff whose geometric tail (mean/(1+mean))^{cutoff+1} drops
/// below `epsilon`, never less than 1.
pub fn required_cutoff(mean: f64, epsilon: f64) -> usize {
    let r = mean / (1.0 + mean);
    if r <= 0.0 {
        return 1;
    }
    let mut c = (epsilon.ln() / r.ln()).ceil().max(1.0) as usize;
    while r.powi(c as i32 + 1) >= epsilon {
        c += 1;
    }
    while c > 1 && r.powi(c as i32) < epsilon {
        c -= 1;
    }
    c
}

/// Diagonal of a single-mode thermal state truncated at `cutoff` photons and
/// renormalized, with the discarded tail required below `epsilon`.
pub fn thermal_fock_with_tail(mean: f64, cutoff: usize, epsilon: f64) -> Result<Vec<f64>> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::domain(format!("mean occupation {mean} invalid")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain("tail bound must lie in (0, 1)"));
    }
    if cutoff < 1 {
        return Err(Error::domain("cutoff must be at least 1"));
    }
    let r = mean / (1.0 + mean);
    let tail = r.powi(cutoff as i32 + 1);
    if tail >= epsilon {
        return Err(Error::Truncation {
            required: required_cutoff(mean, epsilon),
            given: cutoff,
        });
    }
    let norm = 1.0 - tail;
    let mut w = Vec::with_capacity(cutoff + 1);
    let mut term = (1.0 - r) / norm;
    for _ in 0..=cutoff {
        w.push(term);
        term *= r;
    }
    Ok(w)
}

/// Single-mode thermal diagonal with the standard 1e-12 tail requirement.
pub fn thermal_fock(mean: f64, cutoff: usize) -> Result<Vec<f64>> {
    thermal_fock_with_tail(mean, cutoff, 1e-12)
}

/// Diagonal density matrix from a weight vector.
pub fn diagonal_density(weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(weights))
}

/// Index of |n-j, j> in the total-photon-number-ordered two-mode basis.
pub fn pair_index(n: usize, j: usize) -> usize {
    n * (n + 1) / 2 + j
}

/// Dimension of the two-mode space truncated at total photon number `cutoff`.
pub fn pair_dim(cutoff: usize) -> usize {
    (cutoff + 1) * (cutoff + 2) / 2
}

/// Product of two thermal states on the space with total photon number at
/// most `cutoff`, renormalized; the discarded weight must be below 1e-12.
pub fn two_mode_thermal(mean1: f64, mean2: f64, cutoff: usize) -> Result<DMatrix<f64>> {
    let w1 = raw_geometric(mean1, cutoff)?;
    let w2 = raw_geometric(mean2, cutoff)?;
    let covered = triangle_weight(mean1, mean2, cutoff);
    if 1.0 - covered >= 1e-12 {
        let mut c = cutoff + 1;
        while 1.0 - triangle_weight(mean1, mean2, c) >= 1e-12 {
            c += 1;
            if c > 100_000 {
                return Err(Error::domain("truncation tail does not converge"));
            }
        }
        return Err(Error::Truncation {
            required: c,
            given: cutoff,
        });
    }
    let dim = pair_dim(cutoff);
    let mut rho = DMatrix::zeros(dim, dim);
    for n in 0..=cutoff {
        for j in 0..=n {
            let k = pair_index(n, j);
            rho[(k, k)] = w1[n - j] * w2[j] / covered;
        }
    }
    Ok(rho)
}

fn raw_geometric(mean: f64, cutoff: usize) -> Result<Vec<f64>> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::domain(format!("mean occupation {mean} invalid")));
    }
    let r = mean / (1.0 + mean);
    let mut w = Vec::with_capacity(cutoff + 1);
    let mut term = 1.0 - r;
    for _ in 0..=cutoff {
        w.push(term);
        term *= r;
    }
    Ok(w)
}

/// Total weight of the product state inside the total-number triangle.
fn triangle_weight(mean1: f64, mean2: f64, cutoff: usize) -> f64 {
    let r1 = mean1 / (1.0 + mean1);
    let r2 = mean2 / (1.0 + mean2);
    let (p1, p2) = (1.0 - r1, 1.0 - r2);
    let mut total = 0.0;
    for n in 0..=cutoff as i32 {
        let mut row = 0.0;
        for j in 0..=n {
            row += r1.powi(n - j) * r2.powi(j);
        }
        total += p1 * p2 * row;
    }
    total
}

/// Orthogonal representation of a two-mode rotation on the truncated space,
/// block diagonal in the total photon number. The convention rotates the
/// creation operators by [[cos, -sin], [sin, cos]], matching the action
/// gamma -> R gamma R^T on covariance matrices.
pub fn mode_rotation_fock(theta: f64, cutoff: usize) -> DMatrix<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let mut ln_fact = vec![0.0; cutoff + 1];
    for k in 1..=cutoff {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let dim = pair_dim(cutoff);
    let mut u = DMatrix::zeros(dim, dim);
    for n in 0..=cutoff {
        for j in 0..=n {
            // expand (c a1 + s a2)^{n-j} (-s a1 + c a2)^j over monomials
            let mut coef = vec![0.0; n + 1];
            coef[0] = 1.0;
            let mut deg = 0usize;
            for _ in 0..(n - j) {
                mul_linear(&mut coef, deg, c, s);
                deg += 1;
            }
            for _ in 0..j {
                mul_linear(&mut coef, deg, -s, c);
                deg += 1;
            }
            let col_norm = ln_fact[n - j] + ln_fact[j];
            for i in 0..=n {
                let scale = 0.5 * (ln_fact[n - i] + ln_fact[i] - col_norm);
                u[(pair_index(n, i), pair_index(n, j))] = coef[i] * scale.exp();
            }
        }
    }
    u
}

/// In-place multiply of a degree-`deg` polynomial in (x, y), stored by
/// y-power, by (alpha x + beta y).
fn mul_linear(coef: &mut [f64], deg: usize, alpha: f64, beta: f64) {
    for i in (0..=deg + 1).rev() {
        let from_x = if i <= deg { alpha * coef[i] } else { 0.0 };
        let from_y = if i > 0 { beta * coef[i - 1] } else { 0.0 };
        coef[i] = from_x + from_y;
    }
}

/// Uniform grid of `n` points on [0, 1], endpoints exact.
pub fn uniform_s_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least 2 points");
    let step = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { 1.0 } else { step * i as f64 })
        .collect()
}

/// Direct evaluation of the Chernoff quantity: eigendecompose both density
/// matrices once, then exponent = -ln min over the grid of
/// Tr rho1^s rho2^{1-s}, with zero eigenvalues kept at zero for every s.
/// Returns the exponent and the minimizing grid point (ties take the
/// smallest s).
pub fn qcb_fock(
    rho1: &DMatrix<f64>,
    rho2: &DMatrix<f64>,
    s_grid: &[f64],
) -> Result<(f64, f64)> {
    if rho1.nrows() != rho1.ncols() || rho2.nrows() != rho2.ncols() {
        return Err(Error::domain("density matrix is not square"));
    }
    if rho1.nrows() != rho2.nrows() {
        return Err(Error::domain("density matrices live on different spaces"));
    }
    if s_grid.is_empty() {
        return Err(Error::domain("s grid is empty"));
    }
    for &s in s_grid {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::domain(format!("s = {s} outside [0, 1]")));
        }
    }
    let d1 = clamped_spectrum(rho1)?;
    let d2 = clamped_spectrum(rho2)?;
    let overlap = d1.vectors.transpose() * &d2.vectors;
    let w = overlap.map(|x| x * x);
    let mut best_q = f64::INFINITY;
    let mut best_s = s_grid[0];
    for &s in s_grid {
        let u = DVector::from_iterator(
            d1.values.len(),
            d1.values.iter().map(|&x| spow(x, s)),
        );
        let v = DVector::from_iterator(
            d2.values.len(),
            d2.values.iter().map(|&x| spow(x, 1.0 - s)),
        );
        let q = u.dot(&(&w * v));
        if q < best_q {
            best_q = q;
            best_s = s;
        }
    }
    Ok((-best_q.ln(), best_s))
}

struct ClampedEig {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Symmetry, trace, and positivity checks, then eigenvalues with dust below
/// 1e-15 of the largest set to exact zero.
fn clamped_spectrum(rho: &DMatrix<f64>) -> Result<ClampedEig> {
    let asym = (rho - rho.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::domain(format!(
            "density matrix is not symmetric: max asymmetry {asym:e}"
        )));
    }
    let trace = rho.trace();
    if (trace - 1.0).abs() > 1e-10 {
        return Err(Error::domain(format!("trace {trace} is not 1")));
    }
    let (raw, vectors) = crate::eigen::jacobi_eigen(rho);
    let top = raw.amax();
    let mut values = Vec::with_capacity(raw.len());
    for &v in raw.iter() {
        if v < -1e-10 * top {
            return Err(Error::domain(format!(
                "density matrix has negative eigenvalue {v:e}"
            )));
        }
        values.push(if v <= 1e-15 * top { 0.0 } else { v });
    }
    Ok(ClampedEig { values, vectors })
}

/// The preregistered two-mode family: (mean1, mean2, rotation angle).
pub fn acceptance_family() -> Vec<(f64, f64, f64)> {
    let means = [(0.30, 0.10), (0.44, 0.20), (0.25, 0.25), (0.40, 0.05)];
    let angles = [
        0.0,
        0.3,
        0.7,
        std::f64::consts::FRAC_PI_4,
        std::f64::consts::FRAC_PI_2,
    ];
    let mut out = Vec::new();
    for &(m1, m2) in &means {
        for &a in &angles {
            out.push((m1, m2, a));
        }
    }
    out
}

/// One row of the golden-value record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenRow {
    pub mean1: f64,
    pub mean2: f64,
    pub angle: f64,
    pub cutoff: usize,
    pub s_points: usize,
    pub exponent: f64,
}

const GOLDEN_HEADER: &str = "mean1,mean2,angle,cutoff,s_points,exponent";

/// Write golden rows as CSV, full precision, with a comment preamble.
pub fn write_goldens_csv(path: &Path, rows: &[GoldenRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# brute-force two-mode exponents; regenerate with the gen_fock_goldens example\n");
    out.push_str(GOLDEN_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_real(r.mean1),
            fmt_real(r.mean2),
            fmt_real(r.angle),
            r.cutoff,
            r.s_points,
            fmt_real(r.exponent)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read golden rows written by `write_goldens_csv`.
pub fn read_goldens_csv(path: &Path) -> Result<Vec<GoldenRow>> {
    let rows = read_csv_rows(path)?;
    let mut iter = rows.into_iter();
    match iter.next() {
        Some((_, fields)) if fields.join(",") == GOLDEN_HEADER => {}
        _ => {
            return Err(Error::parse(
                path.display().to_string(),
                format!("expected header '{GOLDEN_HEADER}'"),
            ));
        }
    }
    let mut out = Vec::new();
    for (line, fields) in iter {
        let loc = format!("{} line {line}", path.display());
        if fields.len() != 6 {
            return Err(Error::parse(loc, format!("expected 6 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("{loc} field {}", i + 1), e.to_string()))
        };
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(format!("{loc} field {}", i + 1), e.to_string()))
        };
        out.push(GoldenRow {
            mean1: num(0)?,
            mean2: num(1)?,
            angle: num(2)?,
            cutoff: int(3)?,
            s_points: int(4)?,
            exponent: num(5)?,
        });
    }
    Ok(out)
}
