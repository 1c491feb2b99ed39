//! Intensity distributions on pixel grids, their dimensionless normalized
//! form, and the second-moment principal frame that drives the
//! subdiffraction theory.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Pixelated nonnegative intensity distribution. `values[ix * ny + iy]`
/// holds intensity times pixel area (photons per frame) at
/// `(x_coords[ix], y_coords[iy])`.
#[derive(Debug, Clone)]
pub struct IntensityGrid {
    pub values: Vec<f64>,
    pub x_coords: Vec<f64>,
    pub y_coords: Vec<f64>,
    pub pixel_dx: f64,
    pub pixel_dy: f64,
}

impl IntensityGrid {
    pub fn new(
        values: Vec<f64>,
        x_coords: Vec<f64>,
        y_coords: Vec<f64>,
        pixel_dx: f64,
        pixel_dy: f64,
    ) -> Result<Self> {
        if x_coords.is_empty() || y_coords.is_empty() {
            return Err(Error::domain("empty coordinate axis"));
        }
        if values.len() != x_coords.len() * y_coords.len() {
            return Err(Error::domain(format!(
                "value count {} does not match {}x{} grid",
                values.len(),
                x_coords.len(),
                y_coords.len()
            )));
        }
        if !(pixel_dx > 0.0 && pixel_dy > 0.0) {
            return Err(Error::domain("pixel spacing must be positive"));
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::domain(format!(
                    "pixel {k} has invalid intensity {v}"
                )));
            }
        }
        Ok(IntensityGrid {
            values,
            x_coords,
            y_coords,
            pixel_dx,
            pixel_dy,
        })
    }

    pub fn nx(&self) -> usize {
        self.x_coords.len()
    }

    pub fn ny(&self) -> usize {
        self.y_coords.len()
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.ny() + iy]
    }

    pub fn total_intensity(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Dimensionless image: weights summing to 1 on coordinates measured in
/// units of the size scale, plus the total intensity they were stripped of.
#[derive(Debug, Clone)]
pub struct NormalizedImage {
    pub density: Vec<f64>,
    pub xbar: Vec<f64>,
    pub ybar: Vec<f64>,
    pub scale_theta: f64,
    pub i0: f64,
}

impl NormalizedImage {
    pub fn nx(&self) -> usize {
        self.xbar.len()
    }

    pub fn ny(&self) -> usize {
        self.ybar.len()
    }

    pub fn weight(&self, ix: usize, iy: usize) -> f64 {
        self.density[ix * self.ny() + iy]
    }
}

/// Raw dimensionless moments up to second order.
#[derive(Debug, Clone, Copy)]
pub struct SecondMoments {
    pub m10: f64,
    pub m01: f64,
    pub m20: f64,
    pub m02: f64,
    pub m11: f64,
}

impl SecondMoments {
    /// Moment-matrix sanity: nonnegative diagonal, Cauchy-Schwarz within
    /// roundoff.
    pub fn validate(&self) -> Result<()> {
        if self.m20 < 0.0 || self.m02 < 0.0 {
            return Err(Error::domain("negative second moment"));
        }
        if self.m20 * self.m02 - self.m11 * self.m11 < -1e-12 {
            return Err(Error::domain("moment matrix violates Cauchy-Schwarz"));
        }
        Ok(())
    }
}

/// Principal variances and the orientation of the first one, canonicalized
/// to [0, pi/2).
#[derive(Debug, Clone, Copy)]
pub struct PrincipalFrame {
    pub vx: f64,
    pub vy: f64,
    pub theta: f64,
}

/// Strip intensity and length scales off a grid.
pub fn normalize(grid: &IntensityGrid, scale_theta: f64) -> Result<NormalizedImage> {
    if !(scale_theta > 0.0) {
        return Err(Error::domain("scale must be positive"));
    }
    let total = grid.total_intensity();
    if !(total > 0.0) {
        return Err(Error::domain("source has zero total intensity"));
    }
    Ok(NormalizedImage {
        density: grid.values.iter().map(|v| v / total).collect(),
        xbar: grid.x_coords.iter().map(|x| x / scale_theta).collect(),
        ybar: grid.y_coords.iter().map(|y| y / scale_theta).collect(),
        scale_theta,
        i0: total,
    })
}

/// Density-weighted moments of the dimensionless coordinates.
pub fn moments(img: &NormalizedImage) -> SecondMoments {
    let ny = img.ny();
    let mut m = SecondMoments {
        m10: 0.0,
        m01: 0.0,
        m20: 0.0,
        m02: 0.0,
        m11: 0.0,
    };
    for (ix, &x) in img.xbar.iter().enumerate() {
        for (iy, &y) in img.ybar.iter().enumerate() {
            let w = img.density[ix * ny + iy];
            if w == 0.0 {
                continue;
            }
            m.m10 += w * x;
            m.m01 += w * y;
            m.m20 += w * x * x;
            m.m02 += w * y * y;
            m.m11 += w * x * y;
        }
    }
    m
}

/// Shift coordinates so the centroid sits at the origin. A centroid already
/// at roundoff level is left alone, which makes centering a fixed point:
/// one pass leaves a residual of a few ulps, and shifting by that would
/// churn the coordinates without improving anything.
pub fn center(img: &NormalizedImage) -> NormalizedImage {
    let m = moments(img);
    let coord_scale = img
        .xbar
        .iter()
        .chain(img.ybar.iter())
        .fold(1.0_f64, |a, &c| a.max(c.abs()));
    let snap = |shift: f64| {
        if shift.abs() <= 1e-13 * coord_scale {
            0.0
        } else {
            shift
        }
    };
    let (sx, sy) = (snap(m.m10), snap(m.m01));
    NormalizedImage {
        density: img.density.clone(),
        xbar: img.xbar.iter().map(|x| x - sx).collect(),
        ybar: img.ybar.iter().map(|y| y - sy).collect(),
        scale_theta: img.scale_theta,
        i0: img.i0,
    }
}

/// Diagonalize the centered 2x2 moment matrix. `vx` is the variance along
/// direction `theta`, `vy` along the orthogonal direction; `theta` is the
/// eigen-direction that lands in [0, pi/2).
pub fn principal_frame(m: &SecondMoments) -> Result<PrincipalFrame> {
    if m.m10.abs() >= 1e-9 || m.m01.abs() >= 1e-9 {
        return Err(Error::precondition(format!(
            "moments not centered: m10 = {:e}, m01 = {:e}",
            m.m10, m.m01
        )));
    }
    m.validate()?;
    let mean = 0.5 * (m.m20 + m.m02);
    let half_diff = 0.5 * (m.m20 - m.m02);
    let radius = (half_diff * half_diff + m.m11 * m.m11).sqrt();
    let hi = mean + radius;
    let lo = (mean - radius).max(0.0);
    // direction of the larger eigenvalue, in (-pi/2, pi/2]
    let theta_hi = 0.5 * f64::atan2(2.0 * m.m11, m.m20 - m.m02);
    let (vx, vy, theta) = if (0.0..std::f64::consts::FRAC_PI_2).contains(&theta_hi) {
        (hi, lo, theta_hi)
    } else if theta_hi < 0.0 {
        (lo, hi, theta_hi + std::f64::consts::FRAC_PI_2)
    } else {
        // theta_hi == pi/2 exactly
        (lo, hi, 0.0)
    };
    Ok(PrincipalFrame { vx, vy, theta })
}

/// Synthetic source shapes for tests and presets.
#[derive(Debug, Clone, Copy)]
pub enum SourceKind {
    Point,
    Line { length: f64, angle: f64 },
    GaussianBlob { sx: f64, sy: f64, angle: f64 },
    Cross { arm_length: f64, arm_width: f64, angle: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub extent_x: f64,
    pub extent_y: f64,
}

impl GridSpec {
    fn coords(&self) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let dx = self.extent_x / self.nx as f64;
        let dy = self.extent_y / self.ny as f64;
        let xs = (0..self.nx)
            .map(|i| -0.5 * self.extent_x + (i as f64 + 0.5) * dx)
            .collect();
        let ys = (0..self.ny)
            .map(|j| -0.5 * self.extent_y + (j as f64 + 0.5) * dy)
            .collect();
        (xs, ys, dx, dy)
    }
}

/// Rasterize a named shape onto a grid, total intensity 1.
pub fn make_source(kind: SourceKind, spec: GridSpec) -> Result<IntensityGrid> {
    if spec.nx < 8 || spec.ny < 8 {
        return Err(Error::domain("grid resolution below 8x8"));
    }
    if !(spec.extent_x > 0.0 && spec.extent_y > 0.0) {
        return Err(Error::domain("grid extent must be positive"));
    }
    let half = 0.5 * spec.extent_x.min(spec.extent_y);
    let radius = match kind {
        SourceKind::Point => 0.0,
        SourceKind::Line { length, angle: _ } => {
            if !(length > 0.0) {
                return Err(Error::domain("line length must be positive"));
            }
            0.5 * length
        }
        SourceKind::GaussianBlob { sx, sy, .. } => {
            if !(sx > 0.0 && sy > 0.0) {
                return Err(Error::domain("blob widths must be positive"));
            }
            3.0 * sx.max(sy)
        }
        SourceKind::Cross {
            arm_length,
            arm_width,
            ..
        } => {
            if !(arm_length > 0.0 && arm_width > 0.0) {
                return Err(Error::domain("cross dimensions must be positive"));
            }
            arm_length
        }
    };
    if radius > half {
        return Err(Error::domain(format!(
            "shape radius {radius} exceeds grid half-extent {half}"
        )));
    }

    let (xs, ys, dx, dy) = spec.coords();
    let ny = spec.ny;
    let mut values = vec![0.0; spec.nx * ny];
    let nearest = |c: f64, coords: &[f64], d: f64| -> usize {
        let i = ((c - coords[0]) / d).round();
        (i.max(0.0) as usize).min(coords.len() - 1)
    };

    match kind {
        SourceKind::Point => {
            let ix = nearest(0.0, &xs, dx);
            let iy = nearest(0.0, &ys, dy);
            values[ix * ny + iy] = 1.0;
        }
        SourceKind::Line { length, angle } => {
            let samples = 16 * spec.nx.max(spec.ny);
            let (sa, ca) = angle.sin_cos();
            for k in 0..samples {
                let t = length * ((k as f64 + 0.5) / samples as f64 - 0.5);
                let ix = nearest(t * ca, &xs, dx);
                let iy = nearest(t * sa, &ys, dy);
                values[ix * ny + iy] += 1.0;
            }
            let total: f64 = values.iter().sum();
            for v in &mut values {
                *v /= total;
            }
        }
        SourceKind::GaussianBlob { sx, sy, angle } => {
            let (sa, ca) = angle.sin_cos();
            for (ix, &x) in xs.iter().enumerate() {
                for (iy, &y) in ys.iter().enumerate() {
                    let u = ca * x + sa * y;
                    let v = -sa * x + ca * y;
                    values[ix * ny + iy] =
                        (-0.5 * (u * u / (sx * sx) + v * v / (sy * sy))).exp();
                }
            }
            let total: f64 = values.iter().sum();
            for v in &mut values {
                *v /= total;
            }
        }
        SourceKind::Cross {
            arm_length,
            arm_width,
            angle,
        } => {
            let (sa, ca) = angle.sin_cos();
            let hw = 0.5 * arm_width;
            for (ix, &x) in xs.iter().enumerate() {
                for (iy, &y) in ys.iter().enumerate() {
                    let u = ca * x + sa * y;
                    let v = -sa * x + ca * y;
                    let in_bar_1 = u.abs() <= arm_length && v.abs() <= hw;
                    let in_bar_2 = v.abs() <= arm_length && u.abs() <= hw;
                    if in_bar_1 || in_bar_2 {
                        values[ix * ny + iy] = 1.0;
                    }
                }
            }
            let total: f64 = values.iter().sum();
            if total == 0.0 {
                return Err(Error::domain(
                    "cross arms thinner than a pixel everywhere; refine the grid",
                ));
            }
            for v in &mut values {
                *v /= total;
            }
        }
    }

    IntensityGrid::new(values, xs, ys, dx, dy)
}

/// Load a source description from a plain key-value file.
///
/// Recognized keys: `kind` (point | line | gaussian_blob | cross), the shape
/// parameters (`length`, `angle`, `sx`, `sy`, `arm_length`, `arm_width`) and
/// the grid (`nx`, `ny`, `extent_x`, `extent_y`). Lines starting with `#`
/// are comments.
pub fn load_source_config(path: &Path) -> Result<IntensityGrid> {
    let text = std::fs::read_to_string(path)?;
    let loc = |line: usize| format!("{}:{}", path.display(), line);
    let mut map: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(loc(line_no), "expected `key = value`"))?;
        let key = key.trim().to_string();
        if map.contains_key(&key) {
            return Err(Error::parse(loc(line_no), format!("duplicate key `{key}`")));
        }
        map.insert(key, (value.trim().to_string(), line_no));
    }

    let mut take = |key: &str| -> Result<(String, usize)> {
        map.remove(key)
            .ok_or_else(|| Error::parse(path.display().to_string(), format!("missing key `{key}`")))
    };
    let parse_f64 = |v: (String, usize)| -> Result<f64> {
        v.0.parse::<f64>()
            .map_err(|_| Error::parse(loc(v.1), format!("invalid number `{}`", v.0)))
    };
    let parse_usize = |v: (String, usize)| -> Result<usize> {
        v.0.parse::<usize>()
            .map_err(|_| Error::parse(loc(v.1), format!("invalid integer `{}`", v.0)))
    };

    let kind_raw = take("kind")?;
    let kind = match kind_raw.0.as_str() {
        "point" => SourceKind::Point,
        "line" => SourceKind::Line {
            length: parse_f64(take("length")?)?,
            angle: parse_f64(take("angle")?)?,
        },
        "gaussian_blob" => SourceKind::GaussianBlob {
            sx: parse_f64(take("sx")?)?,
            sy: parse_f64(take("sy")?)?,
            angle: parse_f64(take("angle")?)?,
        },
        "cross" => SourceKind::Cross {
            arm_length: parse_f64(take("arm_length")?)?,
            arm_width: parse_f64(take("arm_width")?)?,
            angle: parse_f64(take("angle")?)?,
        },
        other => {
            return Err(Error::parse(
                loc(kind_raw.1),
                format!("unknown source kind `{other}`"),
            ))
        }
    };
    let spec = GridSpec {
        nx: parse_usize(take("nx")?)?,
        ny: parse_usize(take("ny")?)?,
        extent_x: parse_f64(take("extent_x")?)?,
        extent_y: parse_f64(take("extent_y")?)?,
    };
    if let Some((key, (_, line))) = map.iter().next() {
        return Err(Error::parse(loc(*line), format!("unexpected key `{key}`")));
    }
    make_source(kind, spec)
}

/// Load a pixel dump: CSV with header `x,y,intensity`, one pixel per row.
/// Pixels must lie on a uniform grid; missing grid points get intensity 0.
pub fn load_source_csv(path: &Path) -> Result<IntensityGrid> {
    let rows = crate::io::read_csv_rows(path)?;
    let loc = |line: usize, col: usize| format!("{} row {} col {}", path.display(), line, col);
    let mut iter = rows.iter();
    let header = iter
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let expected = ["x", "y", "intensity"];
    if header.1.len() != 3 || header.1.iter().map(String::as_str).ne(expected) {
        return Err(Error::parse(
            loc(header.0, 1),
            "header must be `x,y,intensity`",
        ));
    }

    let mut pixels: Vec<(f64, f64, f64)> = Vec::new();
    for (line, fields) in iter {
        if fields.len() != 3 {
            return Err(Error::parse(
                loc(*line, fields.len()),
                "expected 3 columns",
            ));
        }
        let mut parsed = [0.0_f64; 3];
        for (c, field) in fields.iter().enumerate() {
            parsed[c] = field
                .parse()
                .map_err(|_| Error::parse(loc(*line, c + 1), format!("invalid number `{field}`")))?;
        }
        if parsed[2] < 0.0 || !parsed[2].is_finite() {
            return Err(Error::parse(
                loc(*line, 3),
                format!("invalid intensity {}", parsed[2]),
            ));
        }
        pixels.push((parsed[0], parsed[1], parsed[2]));
    }
    if pixels.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no pixel rows"));
    }

    let axis = |pick: fn(&(f64, f64, f64)) -> f64| -> Vec<f64> {
        let mut v: Vec<f64> = pixels.iter().map(pick).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let xs = axis(|p| p.0);
    let ys = axis(|p| p.1);
    let spacing = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 1.0;
        }
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::MAX, f64::min)
    };
    let dx = spacing(&xs);
    let dy = spacing(&ys);

    let locate = |c: f64, coords: &[f64], d: f64| -> Option<usize> {
        let i = coords.partition_point(|v| *v < c - 1e-9 * d);
        (i < coords.len() && (coords[i] - c).abs() <= 1e-9 * d).then_some(i)
    };
    let ny = ys.len();
    let mut values = vec![0.0; xs.len() * ny];
    for (x, y, w) in &pixels {
        let ix = locate(*x, &xs, dx).expect("x came from the axis list");
        let iy = locate(*y, &ys, dy).expect("y came from the axis list");
        values[ix * ny + iy] += w;
    }
    for (k, w) in ys.windows(2).enumerate() {
        if ((w[1] - w[0]) / dy - ((w[1] - w[0]) / dy).round()).abs() > 1e-6 {
            return Err(Error::parse(
                path.display().to_string(),
                format!("y coordinates not on a uniform grid near index {k}"),
            ));
        }
    }
    for (k, w) in xs.windows(2).enumerate() {
        if ((w[1] - w[0]) / dx - ((w[1] - w[0]) / dx).round()).abs() > 1e-6 {
            return Err(Error::parse(
                path.display().to_string(),
                format!("x coordinates not on a uniform grid near index {k}"),
            ));
        }
    }
    IntensityGrid::new(values, xs, ys, dx, dy)
}
