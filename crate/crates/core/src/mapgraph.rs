//! Weighted 8-neighbourhood graph over road cells and shortest-path traces.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::mapgrid::{Attraction, AttractionGrid, ComponentMask, OccupancyGrid, NEIGHBORS_8};

pub type VertexId = usize;

/// Cost of stepping between two adjacent road cells. Hotter cells are cheaper,
/// so traces bend towards attractive areas.
pub fn edge_weight(w_u: u8, w_v: u8) -> Result<u32> {
    let u = Attraction::try_from(w_u)?;
    let v = Attraction::try_from(w_v)?;
    Ok(attraction_cost(u, v))
}

pub(crate) fn attraction_cost(u: Attraction, v: Attraction) -> u32 {
    (10 - u32::from(u.value())) + (10 - u32::from(v.value())) + 1
}

/// Road graph restricted to the largest connected component. Vertex ids are
/// dense and assigned in row-major cell order.
#[derive(Clone, Debug)]
pub struct MapGraph {
    width: usize,
    height: usize,
    coords: Vec<(usize, usize)>,
    cell_to_vertex: Vec<Option<VertexId>>,
    offsets: Vec<usize>,
    arcs: Vec<(u32, u32)>,
}

impl MapGraph {
    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.arcs.len() / 2
    }

    /// Dimensions of the underlying grid as (width, height).
    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn coords(&self, v: VertexId) -> (usize, usize) {
        self.coords[v]
    }

    pub fn vertex_at(&self, row: usize, col: usize) -> Option<VertexId> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.cell_to_vertex[row * self.width + col]
    }

    fn arcs(&self, v: VertexId) -> &[(u32, u32)] {
        &self.arcs[self.offsets[v]..self.offsets[v + 1]]
    }

    /// `(neighbour, weight)` pairs in ascending neighbour order.
    pub fn neighbors(&self, v: VertexId) -> impl ExactSizeIterator<Item = (VertexId, u32)> + '_ {
        self.arcs(v).iter().map(|&(n, w)| (n as VertexId, w))
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.arcs(v).len()
    }

    pub fn edge_weight_between(&self, u: VertexId, v: VertexId) -> Option<u32> {
        let arcs = self.arcs(u);
        arcs.binary_search_by_key(&v, |&(n, _)| n as VertexId)
            .ok()
            .map(|i| arcs[i].1)
    }

    /// Dumps one `u v weight` line per undirected edge, `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for u in 0..self.vertex_count() {
            for (v, w) in self.neighbors(u) {
                if u < v {
                    writeln!(out, "{u} {v} {w}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn build_map_graph(
    grid: &OccupancyGrid,
    attraction: &AttractionGrid,
    mask: &ComponentMask,
) -> Result<MapGraph> {
    let (w, h) = (grid.width(), grid.height());
    if attraction.width() != w || attraction.height() != h || mask.width != w || mask.height != h {
        return Err(Error::DimensionMismatch {
            width: w,
            height: h,
            found_width: attraction.width(),
            found_height: attraction.height(),
        });
    }

    let mut coords = Vec::new();
    let mut cell_to_vertex = vec![None; w * h];
    for row in 0..h {
        for col in 0..w {
            if grid.is_road(row, col) && mask.in_largest(row, col) {
                cell_to_vertex[row * w + col] = Some(coords.len());
                coords.push((row, col));
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if coords.len() > u32::MAX as usize {
        return Err(Error::ConfigInvalid("map too large".into()));
    }

    let mut offsets = Vec::with_capacity(coords.len() + 1);
    let mut arcs = Vec::with_capacity(coords.len() * 8);
    offsets.push(0);
    for &(row, col) in &coords {
        let here = attraction
            .get(row, col)
            .expect("road cell carries an attraction level");
        let start = arcs.len();
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (row as isize + dr, col as isize + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if let Some(v) = cell_to_vertex[nr * w + nc] {
                let there = attraction
                    .get(nr, nc)
                    .expect("road cell carries an attraction level");
                arcs.push((v as u32, attraction_cost(here, there)));
            }
        }
        arcs[start..].sort_unstable_by_key(|&(v, _)| v);
        offsets.push(arcs.len());
    }

    Ok(MapGraph {
        width: w,
        height: h,
        coords,
        cell_to_vertex,
        offsets,
        arcs,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub vertices: Vec<VertexId>,
    pub total_cost: u64,
}

impl Path {
    pub fn single(v: VertexId) -> Self {
        Self {
            vertices: vec![v],
            total_cost: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn first(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn last(&self) -> VertexId {
        *self.vertices.last().expect("paths are never empty")
    }
}

/// Edge weights never exceed 19, so a ring of 32 distance buckets is enough
/// for an exact Dijkstra (Dial's variant).
const RING: usize = 32;

/// Reusable Dijkstra scratch space. Buffers are sized to the graph on first
/// use and invalidated lazily with a generation stamp, so repeated queries on
/// a large map do not pay for re-initialisation.
#[derive(Debug, Default)]
pub struct PathSearch {
    dist: Vec<u32>,
    pred: Vec<u32>,
    stamp: Vec<u32>,
    settled: Vec<u32>,
    generation: u32,
    buckets: Vec<Vec<u32>>,
}

impl PathSearch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Minimum-cost path from `src` to `dst`. Among equal-cost predecessors the
    /// lowest vertex id wins, which makes traces reproducible and independent
    /// of queue order.
    pub fn find(&mut self, g: &MapGraph, src: VertexId, dst: VertexId) -> Result<Path> {
        let n = g.vertex_count();
        for v in [src, dst] {
            if v >= n {
                return Err(Error::UnknownVertex(v));
            }
        }
        if src == dst {
            return Ok(Path::single(src));
        }
        if self.stamp.len() != n {
            self.dist = vec![0; n];
            self.pred = vec![0; n];
            self.stamp = vec![0; n];
            self.settled = vec![0; n];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.settled.fill(0);
            self.generation = 1;
        }
        let gen = self.generation;
        self.buckets.resize_with(RING, Vec::new);
        self.buckets.iter_mut().for_each(Vec::clear);

        self.stamp[src] = gen;
        self.dist[src] = 0;
        self.pred[src] = src as u32;
        self.buckets[0].push(src as u32);
        let mut pending = 1usize;
        let mut d = 0u32;

        'search: while pending > 0 {
            let slot = d as usize % RING;
            while let Some(u) = self.buckets[slot].pop() {
                pending -= 1;
                let u = u as usize;
                if self.settled[u] == gen || self.dist[u] != d {
                    continue;
                }
                self.settled[u] = gen;
                if u == dst {
                    break 'search;
                }
                for &(v, w) in g.arcs(u) {
                    let vi = v as usize;
                    if self.settled[vi] == gen {
                        continue;
                    }
                    let nd = d + w;
                    let seen = self.stamp[vi] == gen;
                    if !seen || nd < self.dist[vi] {
                        self.stamp[vi] = gen;
                        self.dist[vi] = nd;
                        self.pred[vi] = u as u32;
                        self.buckets[nd as usize % RING].push(v);
                        pending += 1;
                    } else if nd == self.dist[vi] && (u as u32) < self.pred[vi] {
                        self.pred[vi] = u as u32;
                    }
                }
            }
            d += 1;
        }

        if self.settled[dst] != gen {
            return Err(Error::Unreachable { src, dst });
        }
        let mut vertices = vec![dst];
        let mut v = dst;
        while v != src {
            v = self.pred[v] as usize;
            vertices.push(v);
        }
        vertices.reverse();
        Ok(Path {
            vertices,
            total_cost: u64::from(self.dist[dst]),
        })
    }
}

pub fn shortest_path(g: &MapGraph, src: VertexId, dst: VertexId) -> Result<Path> {
    PathSearch::new().find(g, src, dst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapgrid::{largest_component, GrayImage};

    pub(crate) fn graph_from(ascii: &str, weights: Option<&[u8]>) -> MapGraph {
        let grid = OccupancyGrid::from_ascii(ascii).unwrap();
        let attraction = match weights {
            None => AttractionGrid::uniform(&grid),
            Some(w) => {
                let img = GrayImage::new(grid.width(), grid.height(), w.to_vec()).unwrap();
                AttractionGrid::from_image(&img, &grid).unwrap()
            }
        };
        build_map_graph(&grid, &attraction, &largest_component(&grid)).unwrap()
    }

    #[test]
    fn edge_weight_values() {
        assert_eq!(edge_weight(1, 1).unwrap(), 19);
        assert_eq!(edge_weight(10, 10).unwrap(), 1);
        assert_eq!(edge_weight(5, 10).unwrap(), 6);
        assert!(matches!(
            edge_weight(2, 1),
            Err(Error::IllegalWeight { value: 2 })
        ));
    }

    #[test]
    fn corridor_graph() {
        let g = graph_from("...", None);
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![(0, 19), (2, 19)]);
    }

    #[test]
    fn square_has_six_edges() {
        let g = graph_from("..\n..", None);
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn lone_cell_has_no_edges() {
        let g = graph_from("###\n#.#\n###", None);
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.coords(0), (1, 1));
    }

    #[test]
    fn only_largest_component_becomes_vertices() {
        let g = graph_from(".#...\n##...", None);
        assert_eq!(g.vertex_count(), 6);
        assert_eq!(g.vertex_at(0, 0), None);
        assert_eq!(g.vertex_at(0, 2), Some(0));
        assert_eq!(g.vertex_at(1, 4), Some(5));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = graph_from(
            ".#..\n....\n#..#",
            Some(&[1, 0, 5, 10, 10, 5, 1, 1, 0, 1, 5, 0]),
        );
        for u in 0..g.vertex_count() {
            assert!(g.degree(u) <= 8);
            for (v, w) in g.neighbors(u) {
                assert!(w >= 1);
                assert_eq!(g.edge_weight_between(v, u), Some(w));
            }
        }
    }

    #[test]
    fn path_to_self() {
        let g = graph_from("...", None);
        assert_eq!(shortest_path(&g, 1, 1).unwrap(), Path::single(1));
    }

    #[test]
    fn diagonal_corner_to_corner() {
        let g = graph_from("...\n...\n...", None);
        let p = shortest_path(&g, 0, 8).unwrap();
        assert_eq!(p.total_cost, 38);
        assert_eq!(p.vertices, vec![0, 4, 8]);
    }

    #[test]
    fn hot_middle_corridor() {
        let g = graph_from("...", Some(&[1, 10, 1]));
        let p = shortest_path(&g, 0, 2).unwrap();
        assert_eq!(p.total_cost, 20);
        assert_eq!(p.vertices, vec![0, 1, 2]);
    }

    #[test]
    fn ties_prefer_lower_predecessor() {
        // (0,0) -> (0,2) costs 38 via (0,1) or via (1,1); vertex ids 1 and 4
        let g = graph_from("...\n...", None);
        let p = shortest_path(&g, 0, 2).unwrap();
        assert_eq!(p.total_cost, 38);
        assert_eq!(p.vertices, vec![0, 1, 2]);
    }

    #[test]
    fn search_scratch_is_reusable() {
        let g = graph_from("....\n.##.\n....", None);
        let mut search = PathSearch::new();
        for _ in 0..3 {
            for s in 0..g.vertex_count() {
                for d in 0..g.vertex_count() {
                    let a = search.find(&g, s, d).unwrap();
                    assert_eq!(a, shortest_path(&g, s, d).unwrap());
                }
            }
        }
    }

    #[test]
    fn unknown_vertex_is_an_error() {
        let g = graph_from("..", None);
        assert!(matches!(
            shortest_path(&g, 0, 5),
            Err(Error::UnknownVertex(5))
        ));
    }

    #[test]
    fn edge_list_dump() {
        let g = graph_from("..\n..", Some(&[10, 5, 1, 1]));
        let mut out = Vec::new();
        g.write_edge_list(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "0 1 6\n0 2 10\n0 3 10\n1 2 15\n1 3 15\n2 3 19\n");
    }
}
