//! Floorplan ingestion and the two text encodings planners consume.
//!
//! Raster pipeline: grayscale -> crop entirely-black border rows/columns ->
//! pad to square -> area-average resize -> Gaussian smoothing -> binarize.
//! Text encodings: a rows-of-'0'/'1' grid form and a code form listing
//! obstacle coordinates, both losslessly parseable back to a grid.

use std::path::Path;

use thiserror::Error;

use crate::env::{CellCoord, EnvError, OccupancyGrid};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("image has an empty significant region after cropping black borders")]
    EmptySignificantRegion,
    #[error("image is {height}x{width} after cropping; need at least 8x8")]
    TooSmallAfterCrop { height: usize, width: usize },
    #[error("image dimensions do not match pixel buffer")]
    DimensionMismatch,
    #[error("failed to read image: {0}")]
    ImageRead(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// 8-bit raster, grayscale or RGB.
#[derive(Debug, Clone)]
pub struct RasterImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, EncodeError> {
        if !(channels == 1 || channels == 3) || pixels.len() != height * width * channels {
            return Err(EncodeError::DimensionMismatch);
        }
        Ok(Self { height, width, channels, pixels })
    }

    /// Reads an 8-bit PNG or PGM/PPM file.
    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let img = image::open(path).map_err(|e| EncodeError::ImageRead(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, 3, rgb.into_raw())
    }

    fn to_gray(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f64).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|px| 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstaclePolarity {
    DarkIsObstacle,
    LightIsObstacle,
}

#[derive(Debug, Clone)]
pub struct EncodeConfig {
    pub target_max_dim: usize,
    pub gaussian_sigma: f64,
    pub binarize_threshold: u8,
    pub obstacle_polarity: ObstaclePolarity,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            target_max_dim: 64,
            gaussian_sigma: 1.0,
            binarize_threshold: 0,
            obstacle_polarity: ObstaclePolarity::DarkIsObstacle,
        }
    }
}

/// Crops entirely-black border rows and columns; returns (gray, h, w).
fn crop_black_borders(gray: &[f64], h: usize, w: usize) -> Option<(Vec<f64>, usize, usize)> {
    let row_dark = |r: usize| (0..w).all(|c| gray[r * w + c] == 0.0);
    let col_dark = |c: usize| (0..h).all(|r| gray[r * w + c] == 0.0);
    let top = (0..h).find(|&r| !row_dark(r))?;
    let bottom = (0..h).rev().find(|&r| !row_dark(r))?;
    let left = (0..w).find(|&c| !col_dark(c))?;
    let right = (0..w).rev().find(|&c| !col_dark(c))?;
    let (nh, nw) = (bottom - top + 1, right - left + 1);
    let mut out = Vec::with_capacity(nh * nw);
    for r in top..=bottom {
        out.extend_from_slice(&gray[r * w + left..r * w + right + 1]);
    }
    Some((out, nh, nw))
}

/// Pads to a square, centering and filling with the free-space intensity.
fn pad_square(gray: Vec<f64>, h: usize, w: usize, fill: f64) -> (Vec<f64>, usize) {
    let side = h.max(w);
    if h == w {
        return (gray, side);
    }
    let mut out = vec![fill; side * side];
    let (off_r, off_c) = ((side - h) / 2, (side - w) / 2);
    for r in 0..h {
        for c in 0..w {
            out[(r + off_r) * side + (c + off_c)] = gray[r * w + c];
        }
    }
    (out, side)
}

/// Area-average (box filter) downsample of a square image.
fn resize_area(gray: &[f64], side: usize, target: usize) -> Vec<f64> {
    if side == target {
        return gray.to_vec();
    }
    let scale = side as f64 / target as f64;
    let mut out = vec![0.0; target * target];
    for tr in 0..target {
        let y0 = tr as f64 * scale;
        let y1 = (tr + 1) as f64 * scale;
        for tc in 0..target {
            let x0 = tc as f64 * scale;
            let x1 = (tc + 1) as f64 * scale;
            let mut acc = 0.0;
            let mut area = 0.0;
            let mut r = y0.floor() as usize;
            while (r as f64) < y1 && r < side {
                let ry = (y1.min(r as f64 + 1.0) - y0.max(r as f64)).max(0.0);
                let mut c = x0.floor() as usize;
                while (c as f64) < x1 && c < side {
                    let rx = (x1.min(c as f64 + 1.0) - x0.max(c as f64)).max(0.0);
                    acc += gray[r * side + c] * ry * rx;
                    area += ry * rx;
                    c += 1;
                }
                r += 1;
            }
            out[tr * target + tc] = acc / area;
        }
    }
    out
}

/// Separable Gaussian blur with reflected borders; no-op for sigma = 0.
fn gaussian_blur(gray: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return gray.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let reflect = |i: i64, n: i64| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let cc = reflect(c as i64 + ki as i64 - radius, w as i64);
                acc += gray[r * w + cc] * kv;
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let rr = reflect(r as i64 + ki as i64 - radius, h as i64);
                acc += tmp[rr * w + c] * kv;
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Full raster-to-grid pipeline. Deterministic for a fixed config.
pub fn encode_image(img: &RasterImage, cfg: &EncodeConfig) -> Result<OccupancyGrid, EncodeError> {
    let gray = img.to_gray();
    let (cropped, ch, cw) = crop_black_borders(&gray, img.height, img.width)
        .ok_or(EncodeError::EmptySignificantRegion)?;
    if ch < 8 || cw < 8 {
        return Err(EncodeError::TooSmallAfterCrop { height: ch, width: cw });
    }
    let fill = match cfg.obstacle_polarity {
        ObstaclePolarity::DarkIsObstacle => 255.0,
        ObstaclePolarity::LightIsObstacle => 0.0,
    };
    let (padded, side) = pad_square(cropped, ch, cw, fill);
    let target = cfg.target_max_dim.min(side);
    let resized = resize_area(&padded, side, target);
    let smoothed = gaussian_blur(&resized, target, target, cfg.gaussian_sigma);
    let thr = cfg.binarize_threshold as f64;
    let cells: Vec<u8> = smoothed
        .iter()
        .map(|&v| {
            let obstacle = match cfg.obstacle_polarity {
                ObstaclePolarity::DarkIsObstacle => v <= thr,
                ObstaclePolarity::LightIsObstacle => v >= 255.0 - thr,
            };
            obstacle as u8
        })
        .collect();
    Ok(OccupancyGrid::new(target, target, cells)?)
}

/// Rows of '0'/'1' separated by newlines, row 0 first.
pub fn to_grid_text(env: &OccupancyGrid) -> String {
    let mut out = String::with_capacity(env.height() * (env.width() + 1));
    for row in 0..env.height() {
        if row > 0 {
            out.push('\n');
        }
        for col in 0..env.width() {
            out.push(if env.is_obstacle(CellCoord::new(row, col)) {
                '1'
            } else {
                '0'
            });
        }
    }
    out
}

pub fn parse_grid_text(text: &str) -> Result<OccupancyGrid, EncodeError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(EncodeError::Parse { line: 1, msg: "empty grid text".into() });
    }
    let width = lines[0].chars().count();
    let mut cells = Vec::with_capacity(lines.len() * width);
    for (i, line) in lines.iter().enumerate() {
        if line.chars().count() != width {
            return Err(EncodeError::Parse {
                line: i + 1,
                msg: format!("ragged row: expected {} characters, got {}", width, line.chars().count()),
            });
        }
        for ch in line.chars() {
            match ch {
                '0' => cells.push(0),
                '1' => cells.push(1),
                other => {
                    return Err(EncodeError::Parse {
                        line: i + 1,
                        msg: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
    }
    Ok(OccupancyGrid::new(lines.len(), width, cells)?)
}

/// Code-style encoding: grid dimensions plus the obstacle list in row-major order.
pub fn to_code_text(env: &OccupancyGrid) -> String {
    let coords: Vec<String> = env
        .obstacle_cells()
        .map(|c| format!("({},{})", c.row, c.col))
        .collect();
    format!(
        "height = {}\nwidth = {}\nobstacles.append({})",
        env.height(),
        env.width(),
        coords.join(",")
    )
}

pub fn parse_code_text(text: &str) -> Result<OccupancyGrid, EncodeError> {
    let mut height = None;
    let mut width = None;
    let mut obstacles: Option<Vec<(usize, usize)>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| EncodeError::Parse { line: i + 1, msg };
        if let Some(rest) = line.strip_prefix("height") {
            let v = rest.trim_start().strip_prefix('=').ok_or_else(|| err("expected '='".into()))?;
            height = Some(v.trim().parse::<usize>().map_err(|e| err(format!("bad height: {e}")))?);
        } else if let Some(rest) = line.strip_prefix("width") {
            let v = rest.trim_start().strip_prefix('=').ok_or_else(|| err("expected '='".into()))?;
            width = Some(v.trim().parse::<usize>().map_err(|e| err(format!("bad width: {e}")))?);
        } else if let Some(rest) = line.strip_prefix("obstacles.append(") {
            let body = rest.strip_suffix(')').ok_or_else(|| err("missing closing ')'".into()))?;
            obstacles = Some(parse_coord_list(body).map_err(&err)?);
        } else {
            return Err(err(format!("unrecognized statement: {line:?}")));
        }
    }
    let height = height.ok_or(EncodeError::Parse { line: 1, msg: "missing height".into() })?;
    let width = width.ok_or(EncodeError::Parse { line: 1, msg: "missing width".into() })?;
    let obstacles = obstacles.ok_or(EncodeError::Parse { line: 1, msg: "missing obstacles statement".into() })?;
    let mut grid = OccupancyGrid::new(height, width, vec![0; height * width])?;
    for (row, col) in obstacles {
        if row >= height || col >= width {
            return Err(EncodeError::Parse {
                line: 1,
                msg: format!("obstacle ({row},{col}) out of range for {height}x{width} grid"),
            });
        }
        grid.set(CellCoord::new(row, col), 1);
    }
    Ok(grid)
}

/// Parses "(r,c),(r,c),..." with optional whitespace; empty input is allowed.
fn parse_coord_list(body: &str) -> Result<Vec<(usize, usize)>, String> {
    let body = body.trim();
    if body.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut rest = body;
    loop {
        rest = rest.trim_start();
        let Some(stripped) = rest.strip_prefix('(') else {
            return Err(format!("expected '(' at {rest:?}"));
        };
        let Some(close) = stripped.find(')') else {
            return Err("missing closing ')' in coordinate".into());
        };
        let inner = &stripped[..close];
        let mut parts = inner.split(',');
        let (r, c) = match (parts.next(), parts.next(), parts.next()) {
            (Some(r), Some(c), None) => (r.trim(), c.trim()),
            _ => return Err(format!("expected two fields in ({inner})")),
        };
        let row = r.parse::<usize>().map_err(|e| format!("bad row {r:?}: {e}"))?;
        let col = c.parse::<usize>().map_err(|e| format!("bad col {c:?}: {e}"))?;
        out.push((row, col));
        rest = &stripped[close + 1..];
        rest = rest.trim_start();
        if rest.is_empty() {
            return Ok(out);
        }
        let Some(after_comma) = rest.strip_prefix(',') else {
            return Err(format!("expected ',' between coordinates at {rest:?}"));
        };
        rest = after_comma;
    }
}
