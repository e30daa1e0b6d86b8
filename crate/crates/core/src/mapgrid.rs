//! City maps: grayscale PGM input, the road/obstacle occupancy grid and
//! per-cell attraction levels.
//!
//! Roads are dark (0) and obstacles white (255). Devices may only stand on
//! road cells, and only on the largest 8-connected road region so that every
//! destination is reachable.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const ROAD: u8 = 0;
pub const OBSTACLE: u8 = 255;
pub const DEFAULT_THRESHOLD: u8 = 128;

/// Row-major grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::MalformedImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Writes the image as binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 32);
        self.write_pgm(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }
}

/// Reads a P2 (ASCII) or P5 (binary) PGM with maxval at most 255.
pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token().ok_or_else(|| malformed("empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(malformed(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(malformed(format!("maxval {maxval} outside 1..=255")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| malformed("image dimensions overflow"))?;

    let pixels = if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = cursor.pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| malformed(format!("truncated raster, expected {count} bytes")))?;
        if let Some(&v) = raster.iter().find(|&&v| usize::from(v) > maxval) {
            return Err(malformed(format!("sample {v} exceeds maxval {maxval}")));
        }
        raster.to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        for _ in 0..count {
            let v = cursor
                .number("sample")
                .map_err(|_| malformed(format!("truncated raster, expected {count} samples")))?;
            if v > maxval {
                return Err(malformed(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as u8);
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedImage(msg.into())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| malformed(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Road/obstacle matrix; every cell is [`ROAD`] or [`OBSTACLE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    /// Builds a grid from raw cells. Any value other than [`ROAD`] counts as an obstacle.
    pub fn from_cells(width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(malformed(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        let cells: Vec<u8> = cells
            .into_iter()
            .map(|c| if c == ROAD { ROAD } else { OBSTACLE })
            .collect();
        if !cells.contains(&ROAD) {
            return Err(Error::AllObstacle);
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    /// Parses rows of `.` (road) and `#` (obstacle). Handy for small fixtures.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let width = rows.first().map_or(0, |r| r.len());
        let mut cells = Vec::with_capacity(width * rows.len());
        for row in &rows {
            if row.len() != width {
                return Err(malformed("ragged ascii grid"));
            }
            cells.extend(row.bytes().map(|b| if b == b'.' { ROAD } else { OBSTACLE }));
        }
        Self::from_cells(width, rows.len(), cells)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn is_road(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col] == ROAD
    }

    pub fn road_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == ROAD).count()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.cells.clone(),
        }
    }
}

/// Thresholds a grayscale image: dark pixels (`< threshold`) become road.
/// `invert` swaps the roles for maps drawn with light roads.
pub fn binarize(img: &GrayImage, threshold: u8, invert: bool) -> Result<OccupancyGrid> {
    let cells = img
        .pixels
        .iter()
        .map(|&px| {
            let dark = px < threshold;
            if dark != invert {
                ROAD
            } else {
                OBSTACLE
            }
        })
        .collect();
    OccupancyGrid::from_cells(img.width, img.height, cells)
}

/// Attraction level of a road cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Attraction {
    Cold = 1,
    Warm = 5,
    Hot = 10,
}

impl Attraction {
    pub fn value(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Attraction {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Self::Cold),
            5 => Ok(Self::Warm),
            10 => Ok(Self::Hot),
            _ => Err(Error::IllegalWeight { value }),
        }
    }
}

/// Per-cell attraction; `None` exactly on obstacle cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttractionGrid {
    width: usize,
    height: usize,
    weights: Vec<Option<Attraction>>,
}

impl AttractionGrid {
    /// Every road cell cold.
    pub fn uniform(grid: &OccupancyGrid) -> Self {
        Self {
            width: grid.width,
            height: grid.height,
            weights: grid
                .cells
                .iter()
                .map(|&c| (c == ROAD).then_some(Attraction::Cold))
                .collect(),
        }
    }

    /// Reads road-cell weights from `img`; obstacle cells are ignored.
    pub fn from_image(img: &GrayImage, grid: &OccupancyGrid) -> Result<Self> {
        if img.width != grid.width || img.height != grid.height {
            return Err(Error::DimensionMismatch {
                width: grid.width,
                height: grid.height,
                found_width: img.width,
                found_height: img.height,
            });
        }
        let weights = grid
            .cells
            .iter()
            .zip(&img.pixels)
            .map(|(&c, &w)| {
                if c == ROAD {
                    Attraction::try_from(w).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            width: grid.width,
            height: grid.height,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Attraction> {
        self.weights[row * self.width + col]
    }

    pub fn weights(&self) -> &[Option<Attraction>] {
        &self.weights
    }
}

/// Loads the attraction sidecar, or assigns every road cell [`Attraction::Cold`]
/// when no path is given.
pub fn load_attraction(path: Option<&Path>, grid: &OccupancyGrid) -> Result<AttractionGrid> {
    match path {
        None => Ok(AttractionGrid::uniform(grid)),
        Some(path) => AttractionGrid::from_image(&load_gray_image(path)?, grid),
    }
}

/// Labels of the 8-connected road regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentMask {
    pub width: usize,
    pub height: usize,
    /// Component label per cell; `None` on obstacles.
    pub labels: Vec<Option<u32>>,
    /// Cell count per label.
    pub sizes: Vec<usize>,
    pub largest_id: u32,
}

impl ComponentMask {
    pub fn in_largest(&self, row: usize, col: usize) -> bool {
        self.labels[row * self.width + col] == Some(self.largest_id)
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }
}

pub const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Flood-fills road cells under 8-adjacency. Labels are handed out in
/// row-major order of each component's first cell; ties for the largest
/// component go to the smallest label.
pub fn largest_component(grid: &OccupancyGrid) -> ComponentMask {
    let (w, h) = (grid.width, grid.height);
    let mut labels: Vec<Option<u32>> = vec![None; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if grid.cells[start] != ROAD || labels[start].is_some() {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = Some(label);
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (r, c) = ((idx / w) as isize, (idx % w) as isize);
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if grid.cells[n] == ROAD && labels[n].is_none() {
                    labels[n] = Some(label);
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }

    let mut largest_id = 0;
    for (id, &size) in sizes.iter().enumerate() {
        if size > sizes[largest_id] {
            largest_id = id;
        }
    }

    ComponentMask {
        width: w,
        height: h,
        labels,
        sizes,
        largest_id: largest_id as u32,
    }
}
