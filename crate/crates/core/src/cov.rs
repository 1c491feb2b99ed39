//! Thermal-state covariance matrices of the diffracted field: exact
//! position-basis kernel, exact Hermite-Gauss matrix elements, and the
//! second-order small-source expansion with its block split.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::source::{IntensityGrid, NormalizedImage, SecondMoments};

/// Separable Gaussian point-spread function. `amplitude` is the 1D factor,
/// normalized so its square integrates to 1.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPsf {
    pub sigma: f64,
}

impl GaussianPsf {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::domain("psf width must be positive"));
        }
        Ok(GaussianPsf { sigma })
    }

    pub fn amplitude(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (2.0 * PI * s2).powf(-0.25) * (-x * x / (4.0 * s2)).exp()
    }
}

/// Which single-photon mode set indexes the covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisTag {
    /// Hermite-Gauss modes, listed as (order in x, order in y).
    HermiteGauss { pairs: Vec<(u32, u32)> },
    /// Detector pixel grid, row-major with index `ix * ny + iy`.
    Position { nx: usize, ny: usize },
}

/// Mode covariance of the diffracted thermal field. `psd_slack` widens the
/// positivity tolerance for matrices produced by a truncated expansion,
/// whose smallest eigenvalues carry an error of the first neglected order.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub basis: BasisTag,
    pub i0: f64,
    pub psd_slack: f64,
    pub chi: Option<f64>,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Symmetry within roundoff of the matrix scale.
    pub fn validate_symmetry(&self) -> Result<()> {
        let scale = self.entries.norm();
        let mut worst = 0.0_f64;
        for i in 0..self.dim() {
            for j in (i + 1)..self.dim() {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        if worst > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::domain(format!(
                "asymmetry {worst:e} exceeds 1e-12 of scale {scale:e}"
            )));
        }
        Ok(())
    }

    /// Full eigensolve positivity check. Tolerance is the larger of
    /// roundoff on the trace and the declared expansion slack.
    pub fn validate_psd(&self) -> Result<()> {
        self.validate_symmetry()?;
        let eig = self.entries.clone().symmetric_eigenvalues();
        let floor = -(1e-10 * self.trace().abs()).max(self.psd_slack);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min < floor {
            return Err(Error::domain(format!(
                "eigenvalue {min:e} below positivity floor {floor:e}"
            )));
        }
        Ok(())
    }
}

/// Detector-plane sampling grid for the position-basis covariance.
#[derive(Debug, Clone)]
pub struct OutGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
}

impl OutGrid {
    /// Midpoint grid of `nx` by `ny` pixels on the given rectangle.
    pub fn new(x_min: f64, x_max: f64, nx: usize, y_min: f64, y_max: f64, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::domain("output grid has no pixels"));
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::domain("output grid extent must be positive"));
        }
        let dx = (x_max - x_min) / nx as f64;
        let dy = (y_max - y_min) / ny as f64;
        Ok(OutGrid {
            x: (0..nx).map(|i| x_min + (i as f64 + 0.5) * dx).collect(),
            y: (0..ny).map(|j| y_min + (j as f64 + 0.5) * dy).collect(),
            dx,
            dy,
        })
    }

    /// Source bounding box inflated by five psf widths on each side, which
    /// keeps the neglected amplitude tails below 1e-10 relative.
    pub fn covering(src: &IntensityGrid, psf: &GaussianPsf, nx: usize, ny: usize) -> Result<Self> {
        let pad = 5.0 * psf.sigma;
        let (x0, x1) = (src.x_coords[0], *src.x_coords.last().unwrap());
        let (y0, y1) = (src.y_coords[0], *src.y_coords.last().unwrap());
        OutGrid::new(x0 - pad, x1 + pad, nx, y0 - pad, y1 + pad, ny)
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Covariance sampled on detector pixels:
/// entries[(l,m),(l',m')] = sum_ij I_ij psi(x_i-x_l) psi(x_i-x_l')
/// psi(y_j-y_m) psi(y_j-y_m') dx_out dy_out, accumulated as a sum of
/// rank-1 terms so positivity is structural.
pub fn position_covariance(
    src: &IntensityGrid,
    psf: &GaussianPsf,
    out: &OutGrid,
) -> Result<CovMatrix> {
    if out.is_empty() {
        return Err(Error::domain("output grid has no pixels"));
    }
    let (nx, ny) = (out.x.len(), out.y.len());
    let m = nx * ny;
    let measure = (out.dx * out.dy).sqrt();
    let mut entries = DMatrix::<f64>::zeros(m, m);
    let mut u = DVector::<f64>::zeros(m);
    for (i, &xi) in src.x_coords.iter().enumerate() {
        for (j, &yj) in src.y_coords.iter().enumerate() {
            let w = src.value(i, j);
            if w == 0.0 {
                continue;
            }
            for (l, &xl) in out.x.iter().enumerate() {
                let ax = psf.amplitude(xi - xl) * measure;
                for (mm, &ym) in out.y.iter().enumerate() {
                    u[l * ny + mm] = ax * psf.amplitude(yj - ym);
                }
            }
            entries.ger(w, &u, &u, 1.0);
        }
    }
    let cov = CovMatrix {
        entries,
        basis: BasisTag::Position { nx, ny },
        i0: src.total_intensity(),
        psd_slack: 0.0,
        chi: None,
    };
    cov.validate_symmetry()?;
    Ok(cov)
}

/// Canonical Hermite-Gauss index list: total order ascending, x-order
/// descending within each total order. Orders up to 2 give
/// (00, 10, 01, 20, 11, 02).
pub fn hg_pairs(max_order: u32) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for n in 0..=max_order {
        for s in (0..=n).rev() {
            pairs.push((s, n - s));
        }
    }
    pairs
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Exact Hermite-Gauss covariance by pixel summation. The overlap of the
/// displaced psf with mode (s,t) is
/// exp(-chi^2 r^2 / 2) (chi x)^s (chi y)^t / sqrt(s! t!)
/// in source units, with chi = scale / (2 sigma), so each source pixel
/// contributes one rank-1 term.
pub fn hg_covariance_exact(
    img: &NormalizedImage,
    sigma: f64,
    max_order: u32,
) -> Result<CovMatrix> {
    if max_order < 2 {
        return Err(Error::domain("mode expansion needs max_order >= 2"));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain("psf width must be positive"));
    }
    let chi = img.scale_theta / (2.0 * sigma);
    let pairs = hg_pairs(max_order);
    let m = pairs.len();
    let ny = img.ny();
    let mut entries = DMatrix::<f64>::zeros(m, m);
    let mut u = DVector::<f64>::zeros(m);
    for (ix, &x) in img.xbar.iter().enumerate() {
        for (iy, &y) in img.ybar.iter().enumerate() {
            let w = img.density[ix * ny + iy];
            if w == 0.0 {
                continue;
            }
            let (cx, cy) = (chi * x, chi * y);
            let envelope = (-0.5 * (cx * cx + cy * cy)).exp();
            for (k, &(s, t)) in pairs.iter().enumerate() {
                u[k] = envelope * cx.powi(s as i32) * cy.powi(t as i32)
                    / (factorial(s) * factorial(t)).sqrt();
            }
            entries.ger(w * img.i0, &u, &u, 1.0);
        }
    }
    let cov = CovMatrix {
        entries,
        basis: BasisTag::HermiteGauss { pairs },
        i0: img.i0,
        psd_slack: 0.0,
        chi: Some(chi),
    };
    cov.validate_symmetry()?;
    Ok(cov)
}

/// Second-order expansion of the Hermite-Gauss covariance in the size
/// parameter, on modes (00, 10, 01, 20, 11, 02):
/// fundamental depleted to I0 (1 - chi^2 (m20 + m02)), first-row couplings
/// chi m10, chi m01, chi^2 m20 / sqrt(2), chi^2 m11, chi^2 m02 / sqrt(2),
/// interior block I0 chi^2 [[m20, m11], [m11, m02]], zeros elsewhere.
pub fn hg_covariance_chi2(mom: &SecondMoments, i0: f64, chi: f64) -> Result<CovMatrix> {
    if !(chi > 0.0) {
        return Err(Error::domain("size parameter must be positive"));
    }
    if chi > 0.5 {
        return Err(Error::domain(format!(
            "size parameter {chi} is outside the validity of the second-order expansion"
        )));
    }
    if chi > 0.2 {
        eprintln!("warning: size parameter {chi} > 0.2; second-order expansion is degrading");
    }
    if !(i0 >= 0.0) {
        return Err(Error::domain("total intensity must be nonnegative"));
    }
    mom.validate()?;
    let c2 = chi * chi;
    let mut e = DMatrix::<f64>::zeros(6, 6);
    e[(0, 0)] = i0 * (1.0 - c2 * (mom.m20 + mom.m02));
    e[(0, 1)] = i0 * chi * mom.m10;
    e[(0, 2)] = i0 * chi * mom.m01;
    e[(0, 3)] = i0 * c2 * mom.m20 / f64::sqrt(2.0);
    e[(0, 4)] = i0 * c2 * mom.m11;
    e[(0, 5)] = i0 * c2 * mom.m02 / f64::sqrt(2.0);
    for k in 1..6 {
        e[(k, 0)] = e[(0, k)];
    }
    e[(1, 1)] = i0 * c2 * mom.m20;
    e[(1, 2)] = i0 * c2 * mom.m11;
    e[(2, 1)] = e[(1, 2)];
    e[(2, 2)] = i0 * c2 * mom.m02;
    // truncation pushes eigenvalues of the depleted sector below zero at
    // fourth order
    let slack = 10.0 * c2 * c2 * i0;
    let cov = CovMatrix {
        entries: e,
        basis: BasisTag::HermiteGauss {
            pairs: hg_pairs(2),
        },
        i0,
        psd_slack: slack,
        chi: Some(chi),
    };
    cov.validate_symmetry()?;
    Ok(cov)
}

/// The two decoupled sectors of a centered 6-mode covariance: the
/// fundamental plus second-order modes, and the two first-order modes.
#[derive(Debug, Clone)]
pub struct SubdiffCov {
    pub gamma_alpha: CovMatrix,
    pub gamma_beta: CovMatrix,
    pub i0: f64,
    pub chi: f64,
}

/// Split a 6-mode Hermite-Gauss covariance of a centered source into its
/// (00, 20, 11, 02) and (10, 01) sectors.
pub fn split_blocks(cov6: &CovMatrix) -> Result<SubdiffCov> {
    let pairs = match &cov6.basis {
        BasisTag::HermiteGauss { pairs } => pairs,
        BasisTag::Position { .. } => {
            return Err(Error::domain(
                "block split requires the Hermite-Gauss basis",
            ))
        }
    };
    if cov6.dim() != 6 || *pairs != hg_pairs(2) {
        return Err(Error::domain(
            "block split requires the canonical 6-mode layout",
        ));
    }
    let chi = cov6
        .chi
        .ok_or_else(|| Error::domain("covariance carries no size parameter"))?;
    let tol = 1e-10 * cov6.i0;
    let (c10, c01) = (cov6.entries[(0, 1)], cov6.entries[(0, 2)]);
    if c10.abs() > tol || c01.abs() > tol {
        return Err(Error::precondition(format!(
            "source not centered: fundamental couples to first-order modes \
             ({c10:e}, {c01:e}), tolerance {tol:e}"
        )));
    }
    let alpha_idx = [0usize, 3, 4, 5];
    let beta_idx = [1usize, 2];
    let extract = |idx: &[usize]| {
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| cov6.entries[(idx[r], idx[c])])
    };
    let sub_pairs = |idx: &[usize]| idx.iter().map(|&k| pairs[k]).collect::<Vec<_>>();
    let gamma_alpha = CovMatrix {
        entries: extract(&alpha_idx),
        basis: BasisTag::HermiteGauss {
            pairs: sub_pairs(&alpha_idx),
        },
        i0: cov6.i0,
        psd_slack: cov6.psd_slack,
        chi: Some(chi),
    };
    let gamma_beta = CovMatrix {
        entries: extract(&beta_idx),
        basis: BasisTag::HermiteGauss {
            pairs: sub_pairs(&beta_idx),
        },
        i0: cov6.i0,
        psd_slack: cov6.psd_slack,
        chi: Some(chi),
    };
    Ok(SubdiffCov {
        gamma_alpha,
        gamma_beta,
        i0: cov6.i0,
        chi,
    })
}

fn basis_header(basis: &BasisTag) -> String {
    match basis {
        BasisTag::HermiteGauss { pairs } => {
            let body: Vec<String> = pairs.iter().map(|(s, t)| format!("{s}:{t}")).collect();
            format!("basis,hg,{}", body.join(";"))
        }
        BasisTag::Position { nx, ny } => format!("basis,position,{nx};{ny}"),
    }
}

/// Row-major CSV dump with a small header carrying basis, intensity, size
/// parameter, and positivity slack.
pub fn write_cov_csv(cov: &CovMatrix, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::new();
    text.push_str(&basis_header(&cov.basis));
    text.push('\n');
    let _ = writeln!(text, "i0,{}", crate::io::fmt_real(cov.i0));
    let _ = writeln!(text, "psd_slack,{}", crate::io::fmt_real(cov.psd_slack));
    if let Some(chi) = cov.chi {
        let _ = writeln!(text, "chi,{}", crate::io::fmt_real(chi));
    }
    let _ = writeln!(text, "dim,{}", cov.dim());
    for r in 0..cov.dim() {
        let row: Vec<String> = (0..cov.dim())
            .map(|c| crate::io::fmt_real(cov.entries[(r, c)]))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_cov_csv(path: &Path) -> Result<CovMatrix> {
    let text = std::fs::read_to_string(path)?;
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || {
        lines
            .next()
            .ok_or_else(|| Error::parse(path.display().to_string(), "truncated file"))
    };

    let (n, basis_line) = next_line()?;
    let mut parts = basis_line.splitn(3, ',');
    if parts.next() != Some("basis") {
        return Err(Error::parse(loc(n), "expected `basis` header"));
    }
    let basis = match (parts.next(), parts.next()) {
        (Some("hg"), Some(list)) => {
            let mut pairs = Vec::new();
            for item in list.split(';') {
                let (s, t) = item
                    .split_once(':')
                    .ok_or_else(|| Error::parse(loc(n), format!("bad mode index `{item}`")))?;
                let parse = |v: &str| {
                    v.parse::<u32>()
                        .map_err(|_| Error::parse(loc(n), format!("bad mode index `{item}`")))
                };
                pairs.push((parse(s)?, parse(t)?));
            }
            BasisTag::HermiteGauss { pairs }
        }
        (Some("position"), Some(dims)) => {
            let (nx, ny) = dims
                .split_once(';')
                .ok_or_else(|| Error::parse(loc(n), "bad position dims"))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::parse(loc(n), format!("bad position dim `{v}`")))
            };
            BasisTag::Position {
                nx: parse(nx)?,
                ny: parse(ny)?,
            }
        }
        _ => return Err(Error::parse(loc(n), "unknown basis tag")),
    };

    let mut scalar = |key: &str| -> Result<(usize, f64)> {
        let (n, line) = next_line()?;
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(loc(n), "expected `key,value`"))?;
        if k != key {
            return Err(Error::parse(loc(n), format!("expected `{key}`, found `{k}`")));
        }
        let value = v
            .parse::<f64>()
            .map_err(|_| Error::parse(loc(n), format!("invalid number `{v}`")))?;
        Ok((n, value))
    };
    let (_, i0) = scalar("i0")?;
    let (_, psd_slack) = scalar("psd_slack")?;

    let (n, line) = next_line()?;
    let (chi, dim_line) = if let Some(rest) = line.strip_prefix("chi,") {
        let chi = rest
            .parse::<f64>()
            .map_err(|_| Error::parse(loc(n), format!("invalid number `{rest}`")))?;
        (Some(chi), next_line()?)
    } else {
        (None, (n, line))
    };
    let dim: usize = dim_line
        .1
        .strip_prefix("dim,")
        .ok_or_else(|| Error::parse(loc(dim_line.0), "expected `dim`"))?
        .parse()
        .map_err(|_| Error::parse(loc(dim_line.0), "invalid dimension"))?;
    let expected = match &basis {
        BasisTag::HermiteGauss { pairs } => pairs.len(),
        BasisTag::Position { nx, ny } => nx * ny,
    };
    if dim != expected {
        return Err(Error::parse(
            loc(dim_line.0),
            format!("dimension {dim} does not match basis size {expected}"),
        ));
    }

    let mut entries = DMatrix::<f64>::zeros(dim, dim);
    for r in 0..dim {
        let (n, line) = next_line()?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim {
            return Err(Error::parse(
                loc(n),
                format!("expected {dim} columns, found {}", fields.len()),
            ));
        }
        for (c, field) in fields.iter().enumerate() {
            entries[(r, c)] = field
                .parse()
                .map_err(|_| Error::parse(loc(n), format!("invalid number `{field}`")))?;
        }
    }
    let cov = CovMatrix {
        entries,
        basis,
        i0,
        psd_slack,
        chi,
    };
    cov.validate_symmetry()?;
    Ok(cov)
}
