//! Procedural heightfields for the training terrain families.
//!
//! Every map is a square tile with the robot spawning at its centre. The
//! roughness parameter of each family (wave amplitude, slope angle, step
//! height, obstacle height, noise amplitude) is linear in the difficulty
//! level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of difficulty levels (0..=MAX_LEVEL).
pub const NUM_LEVELS: u8 = 10;
pub const MAX_LEVEL: u8 = NUM_LEVELS - 1;
pub const CELL_SIZE: f64 = 0.05;
pub const TILE_SIZE: f64 = 8.0;
/// Flat spawn platform half-width around the tile centre.
pub const PLATFORM_HALF_WIDTH: f64 = 1.0;
pub const STAIR_RUN: f64 = 0.30;
pub const WAVE_LENGTH: f64 = 2.0;

/// Privileged height scan: 5×3 forward-biased grid plus two lateral points.
pub const HEIGHT_SCAN_POINTS: usize = 17;
pub const HEIGHT_SCAN_SPACING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Wavy,
    RoughSlope,
    StairsUp,
    StairsDown,
    DiscreteObstacles,
    RoughFlat,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 6] = [
        TerrainKind::Wavy,
        TerrainKind::RoughSlope,
        TerrainKind::StairsUp,
        TerrainKind::StairsDown,
        TerrainKind::DiscreteObstacles,
        TerrainKind::RoughFlat,
    ];

    /// The family's roughness parameter at `difficulty`.
    ///
    /// Units: metres for amplitudes and heights, radians for the slope.
    pub fn roughness(self, difficulty: u8) -> f64 {
        let t = f64::from(difficulty.min(MAX_LEVEL)) / f64::from(MAX_LEVEL);
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        match self {
            TerrainKind::Wavy => lerp(0.02, 0.12),
            TerrainKind::RoughSlope => lerp(5f64.to_radians(), 25f64.to_radians()),
            TerrainKind::StairsUp | TerrainKind::StairsDown => lerp(0.05, 0.18),
            TerrainKind::DiscreteObstacles => lerp(0.02, 0.10),
            TerrainKind::RoughFlat => lerp(0.005, 0.04),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Wavy => "wavy",
            TerrainKind::RoughSlope => "rough_slope",
            TerrainKind::StairsUp => "stairs_up",
            TerrainKind::StairsDown => "stairs_down",
            TerrainKind::DiscreteObstacles => "discrete_obstacles",
            TerrainKind::RoughFlat => "rough_flat",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("query ({x:.3}, {y:.3}) lies outside the terrain tile")]
    OutOfBounds { x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainMap {
    pub kind: TerrainKind,
    pub difficulty: u8,
    pub cell_size: f64,
    /// World coordinates of the tile's lower-left corner.
    pub origin: [f64; 2],
    pub cols: usize,
    pub rows: usize,
    /// Row-major (`rows` along y, `cols` along x), cell-centred samples.
    pub heights: Vec<f64>,
    /// When set, the tile repeats in both directions and every query is valid.
    #[serde(default)]
    pub periodic: bool,
}

impl TerrainMap {
    pub fn flat(extent: f64) -> Self {
        let n = (extent / CELL_SIZE).round() as usize;
        Self {
            kind: TerrainKind::RoughFlat,
            difficulty: 0,
            cell_size: CELL_SIZE,
            origin: [0.0, 0.0],
            cols: n,
            rows: n,
            heights: vec![0.0; n * n],
            periodic: false,
        }
    }

    /// Builds a map from explicit samples (used by tests and tools).
    pub fn from_heights(cols: usize, rows: usize, cell_size: f64, heights: Vec<f64>) -> Self {
        assert_eq!(heights.len(), cols * rows);
        Self {
            kind: TerrainKind::RoughFlat,
            difficulty: 0,
            cell_size,
            origin: [0.0, 0.0],
            cols,
            rows,
            heights,
            periodic: false,
        }
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size)
    }

    pub fn center(&self) -> [f64; 2] {
        let (w, l) = self.extent();
        [self.origin[0] + 0.5 * w, self.origin[1] + 0.5 * l]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        if self.periodic {
            return x.is_finite() && y.is_finite();
        }
        let (w, l) = self.extent();
        let (lx, ly) = (x - self.origin[0], y - self.origin[1]);
        (0.0..=w).contains(&lx) && (0.0..=l).contains(&ly)
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.cols + col]
    }

    /// Bilinear interpolation between the four surrounding cell centres.
    ///
    /// In the outer half-cell band the nearest edge samples are extended.
    pub fn sample_height(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        if !(x.is_finite() && y.is_finite()) || !self.contains(x, y) {
            return Err(TerrainError::OutOfBounds { x, y });
        }
        let gx = (x - self.origin[0]) / self.cell_size - 0.5;
        let gy = (y - self.origin[1]) / self.cell_size - 0.5;
        let bracket = if self.periodic { periodic_bracket } else { axis_bracket };
        let (c0, c1, fx) = bracket(gx, self.cols);
        let (r0, r1, fy) = bracket(gy, self.rows);
        let h00 = self.cell(c0, r0);
        let h10 = self.cell(c1, r0);
        let h01 = self.cell(c0, r1);
        let h11 = self.cell(c1, r1);
        let lo = h00 + (h10 - h00) * fx;
        let hi = h01 + (h11 - h01) * fx;
        Ok(lo + (hi - lo) * fy)
    }

    /// Terrain heights under the privileged scan pattern, in the yaw-aligned
    /// body frame centred at `(x, y)`.
    pub fn height_scan(
        &self,
        x: f64,
        y: f64,
        yaw: f64,
    ) -> Result<[f64; HEIGHT_SCAN_POINTS], TerrainError> {
        let (s, c) = yaw.sin_cos();
        let mut out = [0.0; HEIGHT_SCAN_POINTS];
        for (slot, (px, py)) in out.iter_mut().zip(height_scan_pattern()) {
            let wx = x + c * px - s * py;
            let wy = y + s * px + c * py;
            *slot = self.sample_height(wx, wy)?;
        }
        Ok(out)
    }

    /// Largest absolute height difference between x-adjacent cells.
    pub fn max_step_x(&self) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.rows {
            for c in 1..self.cols {
                best = best.max((self.cell(c, r) - self.cell(c - 1, r)).abs());
            }
        }
        best
    }

    pub fn max_abs_height(&self) -> f64 {
        self.heights.iter().fold(0.0f64, |m, h| m.max(h.abs()))
    }
}

/// Body-frame (x forward, y left) offsets of the 17 scan points.
pub fn height_scan_pattern() -> [(f64, f64); HEIGHT_SCAN_POINTS] {
    let mut pts = [(0.0, 0.0); HEIGHT_SCAN_POINTS];
    let mut i = 0;
    for ix in -1..=3 {
        for iy in -1..=1 {
            pts[i] = (ix as f64 * HEIGHT_SCAN_SPACING, iy as f64 * HEIGHT_SCAN_SPACING);
            i += 1;
        }
    }
    pts[15] = (0.0, 2.0 * HEIGHT_SCAN_SPACING);
    pts[16] = (0.0, -2.0 * HEIGHT_SCAN_SPACING);
    pts
}

fn axis_bracket(g: f64, n: usize) -> (usize, usize, f64) {
    if g <= 0.0 {
        return (0, 0, 0.0);
    }
    let max = (n - 1) as f64;
    if g >= max {
        return (n - 1, n - 1, 0.0);
    }
    let i = g.floor();
    let i0 = i as usize;
    (i0, i0 + 1, g - i)
}

fn periodic_bracket(g: f64, n: usize) -> (usize, usize, f64) {
    let i = g.floor();
    let i0 = (i as i64).rem_euclid(n as i64) as usize;
    (i0, (i0 + 1) % n, g - i)
}

/// Generates a tile of the given family, repeating periodically so a robot
/// can walk off its edge. Deterministic in `(kind, difficulty, seed)`.
pub fn generate_terrain(kind: TerrainKind, difficulty: u8, seed: u64) -> TerrainMap {
    let difficulty = difficulty.min(MAX_LEVEL);
    let n = (TILE_SIZE / CELL_SIZE).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let param = kind.roughness(difficulty);
    let half = 0.5 * TILE_SIZE;
    let centre = |i: usize| (i as f64 + 0.5) * CELL_SIZE;
    // Chebyshev distance from the tile centre, measured outside the platform.
    let ring = |x: f64, y: f64| ((x - half).abs().max((y - half).abs()) - PLATFORM_HALF_WIDTH).max(0.0);

    let mut heights = vec![0.0; n * n];
    match kind {
        TerrainKind::Wavy => {
            let k = 2.0 * std::f64::consts::PI / WAVE_LENGTH;
            let phase_x: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let phase_y: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for r in 0..n {
                for c in 0..n {
                    let (x, y) = (centre(c), centre(r));
                    heights[r * n + c] =
                        0.5 * param * ((k * x + phase_x).sin() + (k * y + phase_y).sin());
                }
            }
        }
        TerrainKind::RoughSlope => {
            // Pyramid: platform on top, slopes falling away on all sides.
            let grade = param.tan();
            let top = grade * (half - PLATFORM_HALF_WIDTH);
            for r in 0..n {
                for c in 0..n {
                    let (x, y) = (centre(c), centre(r));
                    let noise: f64 = rng.random_range(-0.01..=0.01);
                    heights[r * n + c] = top - grade * ring(x, y) + noise;
                }
            }
        }
        TerrainKind::StairsUp | TerrainKind::StairsDown => {
            let sign = if kind == TerrainKind::StairsUp { 1.0 } else { -1.0 };
            for r in 0..n {
                for c in 0..n {
                    let (x, y) = (centre(c), centre(r));
                    let step = (ring(x, y) / STAIR_RUN).ceil();
                    heights[r * n + c] = sign * param * step;
                }
            }
        }
        TerrainKind::DiscreteObstacles => {
            let count = 40;
            for _ in 0..count {
                let w: f64 = rng.random_range(0.4..1.0);
                let l: f64 = rng.random_range(0.4..1.0);
                let x0: f64 = rng.random_range(0.0..TILE_SIZE - w);
                let y0: f64 = rng.random_range(0.0..TILE_SIZE - l);
                let h = param * rng.random_range(0.5..=1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                for r in 0..n {
                    for c in 0..n {
                        let (x, y) = (centre(c), centre(r));
                        if x >= x0 && x < x0 + w && y >= y0 && y < y0 + l && ring(x, y) > 0.0 {
                            heights[r * n + c] = h;
                        }
                    }
                }
            }
        }
        TerrainKind::RoughFlat => {
            for h in heights.iter_mut() {
                *h = rng.random_range(-param..=param);
            }
        }
    }

    TerrainMap {
        kind,
        difficulty,
        cell_size: CELL_SIZE,
        origin: [0.0, 0.0],
        cols: n,
        rows: n,
        heights,
        periodic: true,
    }
}
