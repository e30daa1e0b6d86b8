//! Synthetic city maps for experiments and tests.

use crate::engine::{CityMap, SimulationConfig};
use crate::error::Result;
use crate::mapgrid::{binarize, AttractionGrid, GrayImage, DEFAULT_THRESHOLD, OBSTACLE, ROAD};

/// Contact radius calibrated on [`GridCity::desk`].
pub const DESK_RADIUS: f64 = 3.1;
/// Graph edges travelled per step in the desk experiments.
pub const DESK_SPEED: u32 = 2;
/// Packet progress is dropped on disconnect in the desk experiments.
pub const DESK_RESET_ON_DISCONNECT: bool = true;

/// Settings for one desk-scale run. `map` is left empty: pair it with a
/// [`CityMap`] built from [`GridCity::desk`].
pub fn desk_config(
    n_infected: usize,
    n_susceptible: usize,
    packets: u32,
    (rt_min, rt_max): (u32, u32),
    seed: u64,
) -> SimulationConfig {
    SimulationConfig {
        n_infected,
        n_susceptible,
        packets,
        rt_min,
        rt_max,
        radius: DESK_RADIUS,
        speed: DESK_SPEED,
        reset_on_disconnect: DESK_RESET_ON_DISCONNECT,
        seed,
        ..SimulationConfig::default()
    }
}

/// A Manhattan-style street grid with an optional diagonal avenue, a
/// central plaza and an optional perimeter wall that is open only at the
/// corners. Roads are 0, buildings 255.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridCity {
    pub width: usize,
    pub height: usize,
    /// Side of a square building block.
    pub block: usize,
    /// Street width.
    pub street: usize,
    /// Diagonal avenue from the north-west to the south-east corner.
    pub avenue: bool,
    /// Side of the open central square; 0 for none.
    pub plaza: usize,
    /// Thickness of a perimeter wall; 0 for an open boundary.
    pub wall: usize,
    /// How far each open corner square reaches past the wall.
    pub corner: usize,
}

impl GridCity {
    /// The 200x200 map used by the acceptance experiments: 8-cell blocks,
    /// 5-cell streets, an avenue, a 24-cell plaza and a 10-cell wall open at
    /// the four corners, so all boundary traffic funnels through them; about
    /// 54% road.
    pub fn desk() -> Self {
        Self {
            width: 200,
            height: 200,
            block: 8,
            street: 5,
            avenue: true,
            plaza: 24,
            wall: 10,
            corner: 4,
        }
    }

    fn in_border(&self, row: usize, col: usize) -> bool {
        let b = self.wall;
        row < b || col < b || row + b >= self.height || col + b >= self.width
    }

    fn in_corner(&self, row: usize, col: usize) -> bool {
        let reach = self.wall + self.corner;
        let near = |pos: usize, extent: usize| pos < reach || pos + reach >= extent;
        near(row, self.height) && near(col, self.width)
    }

    fn in_plaza(&self, row: usize, col: usize) -> bool {
        let half = self.plaza / 2;
        let (cr, cc) = (self.height / 2, self.width / 2);
        self.plaza > 0 && row + half >= cr && row < cr + half && col + half >= cc && col < cc + half
    }

    fn on_avenue(&self, row: usize, col: usize) -> bool {
        if !self.avenue {
            return false;
        }
        // distance in rows from the corner-to-corner diagonal
        let diag = col as f64 * self.height as f64 / self.width as f64;
        (row as f64 - diag).abs() < self.street as f64 / 2.0 + 0.5
    }

    fn on_street(&self, row: usize, col: usize) -> bool {
        let pitch = self.block + self.street;
        row % pitch < self.street || col % pitch < self.street
    }

    /// Road graph of this city with its attraction levels.
    pub fn city_map(&self) -> Result<CityMap> {
        let grid = binarize(&self.image(), DEFAULT_THRESHOLD, false)?;
        let attraction = AttractionGrid::from_image(&self.attraction(), &grid)?;
        CityMap::new(grid, attraction)
    }

    pub fn image(&self) -> GrayImage {
        let mut pixels = Vec::with_capacity(self.width * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                let road = if self.in_border(row, col) {
                    self.in_corner(row, col)
                } else {
                    self.on_street(row, col) || self.on_avenue(row, col) || self.in_plaza(row, col)
                };
                pixels.push(if road { ROAD } else { OBSTACLE });
            }
        }
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Attraction sidecar: the plaza is hot, the avenue warm, other roads
    /// cold. Building cells hold 0 and are ignored by the loader.
    pub fn attraction(&self) -> GrayImage {
        let img = self.image();
        let pixels = (0..self.width * self.height)
            .map(|i| {
                let (row, col) = (i / self.width, i % self.width);
                if img.pixels[i] != ROAD {
                    0
                } else if self.in_plaza(row, col) {
                    10
                } else if self.on_avenue(row, col) {
                    5
                } else {
                    1
                }
            })
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}
