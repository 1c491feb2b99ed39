//! Deterministic scalar minimization: a coarse grid scan followed by
//! golden-section refinement of the best bracket.

use crate::error::{Error, Result};

const GRID_POINTS: usize = 201;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Outcome of a scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct ScanMin {
    pub x: f64,
    pub f: f64,
    /// The coarse grid saw more than one local minimum. The reported point is
    /// then the best grid point, without refinement.
    pub multimodal: bool,
}

/// Minimize `f` on `[a, b]` to absolute tolerance `tol` in x.
///
/// A 201-point uniform scan locates the best bracket; golden-section search
/// refines it. If the scan shows several local minima the scan minimum is
/// returned as-is with the `multimodal` flag set.
pub fn minimize_scalar(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<ScanMin> {
    assert!(b > a, "empty interval");
    let n = GRID_POINTS;
    let step = (b - a) / (n - 1) as f64;
    let mut xs = Vec::with_capacity(n);
    let mut fs = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i == n - 1 { b } else { a + step * i as f64 };
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::Optimizer(format!(
                "objective is not finite at x = {x:e}"
            )));
        }
        xs.push(x);
        fs.push(y);
    }

    let mut best = 0;
    for i in 1..n {
        if fs[i] < fs[best] {
            best = i;
        }
    }

    let mut local_minima = 0;
    if fs[0] < fs[1] {
        local_minima += 1;
    }
    if fs[n - 1] < fs[n - 2] {
        local_minima += 1;
    }
    for i in 1..n - 1 {
        if fs[i] < fs[i - 1] && fs[i] < fs[i + 1] {
            local_minima += 1;
        }
    }
    if local_minima > 1 {
        return Ok(ScanMin {
            x: xs[best],
            f: fs[best],
            multimodal: true,
        });
    }

    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(n - 1)];
    let (x, fx) = golden_section(&f, lo, hi, tol, (xs[best], fs[best]))?;
    Ok(ScanMin {
        x,
        f: fx,
        multimodal: false,
    })
}

/// Maximize `f` on `[a, b]`; same contract as `minimize_scalar`.
pub fn maximize_scalar(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<ScanMin> {
    let m = minimize_scalar(|x| -f(x), a, b, tol)?;
    Ok(ScanMin {
        x: m.x,
        f: -m.f,
        multimodal: m.multimodal,
    })
}

fn golden_section(
    f: &impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    mut best: (f64, f64),
) -> Result<(f64, f64)> {
    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::Optimizer(format!(
                "objective is not finite at x = {x:e}"
            )));
        }
        Ok(y)
    };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1)?;
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2)?;
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    let xm = 0.5 * (a + b);
    let fm = eval(xm)?;
    if fm < best.1 {
        best = (xm, fm);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let m = minimize_scalar(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10).unwrap();
        assert!((m.x - 0.3).abs() < 1e-9);
        assert!(!m.multimodal);
    }

    #[test]
    fn monotone_returns_endpoint() {
        let m = minimize_scalar(|x| -x, 0.0, 1.0, 1e-10).unwrap();
        assert!((m.x - 1.0).abs() < 1e-9);
        let m = minimize_scalar(|x| x, 0.0, 1.0, 1e-10).unwrap();
        assert!(m.x.abs() < 1e-9);
    }

    #[test]
    fn two_basins_flagged() {
        let f = |x: f64| (4.0 * std::f64::consts::PI * x).cos();
        let m = minimize_scalar(f, 0.0, 1.0, 1e-10).unwrap();
        assert!(m.multimodal);
        // grid minimum sits in one of the two basins
        assert!((m.x - 0.25).abs() < 0.01 || (m.x - 0.75).abs() < 0.01);
    }

    #[test]
    fn non_finite_reports_location() {
        let err = minimize_scalar(|x| (x - 0.5).ln(), 0.0, 1.0, 1e-10).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not finite"));
        assert!(msg.contains("x ="));
    }

    #[test]
    fn maximize_wraps_minimize() {
        let m = maximize_scalar(|x| -(x - 0.7) * (x - 0.7) + 2.0, 0.0, 1.0, 1e-10).unwrap();
        assert!((m.x - 0.7).abs() < 1e-9);
        assert!((m.f - 2.0).abs() < 1e-12);
    }
}
