//! Device movement: every device walks a shortest-path trace towards a
//! destination on one of the eight map boundaries and picks a new one on
//! arrival.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mapgraph::{MapGraph, Path, PathSearch, VertexId};
use crate::rng::{self, Purpose, StreamRng};

pub const DEFAULT_BAND_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    NW,
    N,
    NE,
    W,
    E,
    SW,
    S,
    SE,
}

impl Sector {
    pub const ALL: [Sector; 8] = [
        Sector::NW,
        Sector::N,
        Sector::NE,
        Sector::W,
        Sector::E,
        Sector::SW,
        Sector::S,
        Sector::SE,
    ];
}

/// Road vertices lying in each compass band of the map, sorted by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundarySectors {
    sectors: [Vec<VertexId>; 8],
}

impl BoundarySectors {
    pub fn get(&self, sector: Sector) -> &[VertexId] {
        &self.sectors[sector as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.iter().all(Vec::is_empty)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.sectors.iter().any(|s| s.binary_search(&v).is_ok())
    }
}

/// Splits the boundary band into sectors. A cell is in the north band when it
/// lies in the first `band_fraction * height` rows, and in the south band when
/// it lies in the last `band_fraction * height` rows (columns likewise for
/// west/east). Corner sectors are band intersections; the pure N/S/W/E
/// sectors exclude them.
pub fn build_boundary_sectors(g: &MapGraph, band_fraction: f64) -> Result<BoundarySectors> {
    if !(band_fraction > 0.0 && band_fraction < 0.5) {
        return Err(Error::ConfigInvalid(format!(
            "band fraction {band_fraction} outside (0, 0.5)"
        )));
    }
    let (width, height) = g.dimensions();
    let row_band = band_fraction * height as f64;
    let col_band = band_fraction * width as f64;

    let mut sectors: [Vec<VertexId>; 8] = Default::default();
    for v in 0..g.vertex_count() {
        let (row, col) = g.coords(v);
        let north = (row as f64) < row_band;
        let south = ((height - 1 - row) as f64) < row_band;
        let west = (col as f64) < col_band;
        let east = ((width - 1 - col) as f64) < col_band;
        let vertical_only = !west && !east;
        let horizontal_only = !north && !south;
        let membership = [
            (Sector::NW, north && west),
            (Sector::N, north && vertical_only),
            (Sector::NE, north && east),
            (Sector::W, west && horizontal_only),
            (Sector::E, east && horizontal_only),
            (Sector::SW, south && west),
            (Sector::S, south && vertical_only),
            (Sector::SE, south && east),
        ];
        for (sector, inside) in membership {
            if inside {
                sectors[sector as usize].push(v);
            }
        }
    }
    let sectors = BoundarySectors { sectors };
    if sectors.is_empty() {
        return Err(Error::NoBoundaryRoad);
    }
    Ok(sectors)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DevicePosition {
    pub device: usize,
    pub trace: Path,
    pub trace_index: usize,
}

impl DevicePosition {
    /// A device standing on `vertex` with no destination yet.
    pub fn parked(device: usize, vertex: VertexId) -> Self {
        Self {
            device,
            trace: Path::single(vertex),
            trace_index: 0,
        }
    }

    pub fn current(&self) -> VertexId {
        self.trace.vertices[self.trace_index]
    }

    pub fn destination(&self) -> VertexId {
        self.trace.last()
    }

    pub fn arrived(&self) -> bool {
        self.trace_index + 1 == self.trace.len()
    }
}

/// Movement context for one map: the graph, its boundary sectors and a
/// reusable path search.
#[derive(Debug)]
pub struct Mobility<'g> {
    graph: &'g MapGraph,
    sectors: BoundarySectors,
    search: PathSearch,
}

impl<'g> Mobility<'g> {
    pub fn new(graph: &'g MapGraph, band_fraction: f64) -> Result<Self> {
        Ok(Self {
            graph,
            sectors: build_boundary_sectors(graph, band_fraction)?,
            search: PathSearch::new(),
        })
    }

    pub fn graph(&self) -> &'g MapGraph {
        self.graph
    }

    pub fn sectors(&self) -> &BoundarySectors {
        &self.sectors
    }

    /// Picks a sector uniformly among those holding some vertex other than the
    /// device's own, then a vertex uniformly within it, and routes there.
    pub fn assign_destination(
        &mut self,
        dev: &mut DevicePosition,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let here = dev.current();
        let usable: Vec<&[VertexId]> = Sector::ALL
            .iter()
            .map(|&s| self.sectors.get(s))
            .filter(|s| s.iter().any(|&v| v != here))
            .collect();
        if usable.is_empty() {
            return Err(Error::NoDestination(here));
        }
        let sector = usable[rng.random_range(0..usable.len() as u64) as usize];
        let dst = match sector.binary_search(&here) {
            Ok(pos) => {
                let k = rng.random_range(0..sector.len() as u64 - 1) as usize;
                sector[if k >= pos { k + 1 } else { k }]
            }
            Err(_) => sector[rng.random_range(0..sector.len() as u64) as usize],
        };
        dev.trace = self.search.find(self.graph, here, dst)?;
        dev.trace_index = 0;
        Ok(())
    }

    /// Moves the device one edge along its trace, first routing to a fresh
    /// destination if it has already arrived.
    pub fn advance(&mut self, dev: &mut DevicePosition, rng: &mut StreamRng) -> Result<()> {
        if dev.arrived() {
            self.assign_destination(dev, rng)?;
        }
        dev.trace_index += 1;
        Ok(())
    }
}

/// Places `n_infected + n_susceptible` devices uniformly at random on the
/// graph (co-location allowed) and gives each an initial destination.
/// Device ids are `0..total`; by convention the first `n_infected` are the
/// infected ones. Each device is returned with its destination stream, which
/// the caller keeps drawing from for later reassignments.
pub fn spawn_devices(
    mobility: &mut Mobility<'_>,
    n_infected: usize,
    n_susceptible: usize,
    seed: u64,
) -> Result<Vec<(DevicePosition, StreamRng)>> {
    let total = n_infected + n_susceptible;
    if total == 0 {
        return Err(Error::ConfigInvalid("no devices to spawn".into()));
    }
    let n = mobility.graph.vertex_count() as u64;
    (0..total)
        .map(|id| {
            let vertex = rng::stream(seed, Purpose::Placement, id).random_range(0..n) as usize;
            let mut dev = DevicePosition::parked(id, vertex);
            let mut rng = rng::stream(seed, Purpose::Destination, id);
            mobility.assign_destination(&mut dev, &mut rng)?;
            Ok((dev, rng))
        })
        .collect()
}
