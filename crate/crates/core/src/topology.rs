//! Node layouts, source–destination matchings and the geometry built on top
//! of them: routing cells, the bisecting vertical cut, interference layers and
//! the vertex displacement used for random networks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Regular,
    RandomUniform,
}

impl Placement {
    pub fn as_str(&self) -> &'static str {
        match self {
            Placement::Regular => "regular",
            Placement::RandomUniform => "random",
        }
    }
}

/// Source → destination permutation without fixed points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching(Vec<usize>);

impl Matching {
    pub fn from_vec(dest: Vec<usize>) -> Result<Self> {
        let n = dest.len();
        let mut seen = vec![false; n];
        for (src, &d) in dest.iter().enumerate() {
            if d >= n || seen[d] {
                return Err(Error::Config(format!(
                    "matching is not a permutation (destination {d} of source {src})"
                )));
            }
            if d == src {
                return Err(Error::Config(format!("node {src} is matched to itself")));
            }
            seen[d] = true;
        }
        Ok(Matching(dest))
    }

    #[inline]
    pub fn destination(&self, source: usize) -> usize {
        self.0[source]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.0.len()];
        for (s, &d) in self.0.iter().enumerate() {
            inv[d] = s;
        }
        inv
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().enumerate().map(|(s, &d)| (s, d))
    }
}

/// Uniform derangement of `0..n` by rejection (about `e` shuffles on average).
pub fn sample_matching<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matching> {
    if n < 2 {
        return Err(Error::Config(format!(
            "a matching needs at least 2 nodes, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &d)| i != d) {
            return Ok(Matching(perm));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n: usize,
    pub placement: Placement,
    /// Side of the square region in grid units, `sqrt(n)`.
    pub side: f64,
    pub positions: Vec<Point>,
    pub matching: Option<Matching>,
    /// Seed the placement was drawn with, if random.
    pub seed: Option<u64>,
}

/// Integer square root when `n` is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl Topology {
    /// Nodes on the integer lattice `{1..sqrt(n)}²`, unit spacing.
    pub fn build_regular(n: usize) -> Result<Topology> {
        let side = exact_sqrt(n)
            .ok_or_else(|| Error::Config(format!("regular networks need a perfect square n, got {n}")))?;
        if side < 2 || side % 2 != 0 {
            return Err(Error::Config(format!(
                "regular networks need an even lattice side >= 2, got n={n} (side {side})"
            )));
        }
        let positions = (1..=side)
            .flat_map(|x| (1..=side).map(move |y| Point::new(x as f64, y as f64)))
            .collect();
        Ok(Topology {
            n,
            placement: Placement::Regular,
            side: side as f64,
            positions,
            matching: None,
            seed: None,
        })
    }

    /// `n` i.i.d. uniform points on `[0, sqrt(n)]²`.
    pub fn build_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Topology> {
        if n < 4 {
            return Err(Error::Config(format!("random networks need n >= 4, got {n}")));
        }
        let side = (n as f64).sqrt();
        let positions = (0..n)
            .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect();
        Ok(Topology {
            n,
            placement: Placement::RandomUniform,
            side,
            positions,
            matching: None,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_matching(mut self, matching: Matching) -> Result<Self> {
        if matching.len() != self.n {
            return Err(Error::Config(format!(
                "matching covers {} nodes, topology has {}",
                matching.len(),
                self.n
            )));
        }
        self.matching = Some(matching);
        Ok(self)
    }

    pub fn matching(&self) -> Result<&Matching> {
        self.matching
            .as_ref()
            .ok_or_else(|| Error::Usage("topology has no source-destination matching".into()))
    }

    /// Line-oriented text form: a header line, one `x y` row per node, then
    /// one `src dst` row per matched pair.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "topology n={} placement={} seed={}",
            self.n,
            self.placement.as_str(),
            seed
        );
        for p in &self.positions {
            let _ = writeln!(out, "{:?} {:?}", p.x, p.y);
        }
        if let Some(m) = &self.matching {
            for (s, d) in m.pairs() {
                let _ = writeln!(out, "{s} {d}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Topology> {
        let bad = |msg: String| Error::Config(format!("topology text: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("topology") {
            return Err(bad(format!("bad header {header:?}")));
        }
        let (mut n, mut placement, mut seed) = (None, None, None);
        for field in fields {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {field:?}")))?;
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|e| bad(format!("n: {e}")))?),
                "placement" => {
                    placement = Some(match v {
                        "regular" => Placement::Regular,
                        "random" => Placement::RandomUniform,
                        other => return Err(bad(format!("unknown placement {other:?}"))),
                    })
                }
                "seed" => {
                    seed = Some(if v == "-" {
                        None
                    } else {
                        Some(v.parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?)
                    })
                }
                other => return Err(bad(format!("unknown header key {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| bad("missing n".into()))?;
        let placement = placement.ok_or_else(|| bad("missing placement".into()))?;
        let mut positions = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated node list".into()))?;
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => positions.push(Point::new(x, y)),
                _ => return Err(bad(format!("bad node row {line:?}"))),
            }
        }
        let mut dest = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(s)), Some(Ok(d)), None) if s == dest.len() => dest.push(d),
                _ => return Err(bad(format!("bad pair row {line:?}"))),
            }
        }
        let matching = match dest.len() {
            0 => None,
            len if len == n => Some(Matching::from_vec(dest)?),
            len => return Err(bad(format!("{len} pair rows for {n} nodes"))),
        };
        Ok(Topology {
            n,
            placement,
            side: (n as f64).sqrt(),
            positions,
            matching,
            seed: seed.flatten(),
        })
    }
}

/// Square cells of side `cell_side` tiling the topology square.
///
/// Cells are indexed row-major, `row * cells_per_side + col`; a point on a
/// cell boundary belongs to the lower-index cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingGrid {
    pub cell_side: f64,
    /// Lower-left corner of cell 0.
    pub origin: Point,
    pub cells_per_side: usize,
    /// Member node indices of each cell, ascending.
    pub cells: Vec<Vec<usize>>,
}

impl RoutingGrid {
    pub fn new(topology: &Topology, cell_side: f64, origin: Point) -> Result<RoutingGrid> {
        if !(cell_side > 0.0) || !cell_side.is_finite() {
            return Err(Error::Config(format!("cell side must be > 0, got {cell_side}")));
        }
        let cells_per_side = ((topology.side / cell_side) - 1e-9).ceil().max(1.0) as usize;
        let mut grid = RoutingGrid {
            cell_side,
            origin,
            cells_per_side,
            cells: vec![Vec::new(); cells_per_side * cells_per_side],
        };
        for (i, p) in topology.positions.iter().enumerate() {
            let c = grid.cell_of(p);
            grid.cells[c].push(i);
        }
        Ok(grid)
    }

    /// Unit-area cells centred on the lattice points of a regular network.
    pub fn for_regular(topology: &Topology) -> Result<RoutingGrid> {
        RoutingGrid::new(topology, 1.0, Point::new(0.5, 0.5))
    }

    /// Cells of area `2 ln n` for a random network.
    pub fn for_random(topology: &Topology) -> Result<RoutingGrid> {
        let side = (2.0 * (topology.n as f64).ln()).sqrt();
        RoutingGrid::new(topology, side, Point::new(0.0, 0.0))
    }

    fn axis_index(&self, coord: f64, origin: f64) -> usize {
        let t = (coord - origin) / self.cell_side;
        let idx = t.ceil() as i64 - 1;
        idx.clamp(0, self.cells_per_side as i64 - 1) as usize
    }

    /// `(col, row)` of the cell containing `p`.
    pub fn cell_coords(&self, p: &Point) -> (usize, usize) {
        (
            self.axis_index(p.x, self.origin.x),
            self.axis_index(p.y, self.origin.y),
        )
    }

    pub fn cell_of(&self, p: &Point) -> usize {
        let (c, r) = self.cell_coords(p);
        self.index(c, r)
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cells_per_side + col
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells_per_side, cell / self.cells_per_side)
    }

    pub fn center(&self, cell: usize) -> Point {
        let (c, r) = self.coords(cell);
        Point::new(
            self.origin.x + (c as f64 + 0.5) * self.cell_side,
            self.origin.y + (r as f64 + 0.5) * self.cell_side,
        )
    }

    pub fn occupancy(&self) -> Vec<usize> {
        self.cells.iter().map(Vec::len).collect()
    }
}

/// Largest number of nodes in any cell; empty cells count as 0.
pub fn max_cell_occupancy(topology: &Topology, grid: &RoutingGrid) -> usize {
    debug_assert_eq!(grid.occupancy().iter().sum::<usize>(), topology.n);
    grid.cells.iter().map(Vec::len).max().unwrap_or(0)
}

/// Sources left of the centerline and destinations right of it, re-indexed
/// by distance rank from the cut: a source sits at `(-i_x + 1, i_y)` and a
/// destination at `(k_x, k_y)`, so `r² = (i_x + k_x - 1)² + (i_y - k_y)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutInstance {
    pub side: usize,
    pub sources: Vec<usize>,
    pub destinations: Vec<usize>,
    /// `(i_x, i_y)` per source, both 1-based.
    pub source_coords: Vec<(usize, usize)>,
    /// `(k_x, k_y)` per destination, both 1-based.
    pub dest_coords: Vec<(usize, usize)>,
}

impl CutInstance {
    pub fn half(&self) -> usize {
        self.side / 2
    }

    /// Distance between source `i` and destination `k` (positions in the
    /// `sources` / `destinations` lists).
    #[inline]
    pub fn distance(&self, k: usize, i: usize) -> f64 {
        let (ix, iy) = self.source_coords[i];
        let (kx, ky) = self.dest_coords[k];
        let dx = (ix + kx - 1) as f64;
        let dy = iy as f64 - ky as f64;
        dx.hypot(dy)
    }

    /// Lattice position of source `i`.
    pub fn source_lattice(&self, i: usize) -> (usize, usize) {
        let (ix, iy) = self.source_coords[i];
        (self.half() + 1 - ix, iy)
    }

    /// Lattice position of destination `k`.
    pub fn dest_lattice(&self, k: usize) -> (usize, usize) {
        let (kx, ky) = self.dest_coords[k];
        (self.half() + kx, ky)
    }

    /// Cut with a single source at `i_x` and a single destination at `k_x`,
    /// both on row 1; used for scalar sanity checks.
    pub fn single(i_x: usize, k_x: usize) -> CutInstance {
        CutInstance {
            side: 2 * i_x.max(k_x),
            sources: vec![0],
            destinations: vec![1],
            source_coords: vec![(i_x, 1)],
            dest_coords: vec![(k_x, 1)],
        }
    }
}

/// Splits a regular network at `x = sqrt(n)/2 + 1/2`.
pub fn vertical_cut(topology: &Topology) -> Result<CutInstance> {
    if topology.placement != Placement::Regular {
        return Err(Error::Usage(
            "vertical_cut needs a regular lattice; displace random networks onto vertices first"
                .into(),
        ));
    }
    let side = topology.side.round() as usize;
    let half = side / 2;
    let mut cut = CutInstance {
        side,
        sources: Vec::with_capacity(topology.n / 2),
        destinations: Vec::with_capacity(topology.n / 2),
        source_coords: Vec::with_capacity(topology.n / 2),
        dest_coords: Vec::with_capacity(topology.n / 2),
    };
    for (idx, p) in topology.positions.iter().enumerate() {
        let x = p.x.round() as usize;
        let y = p.y.round() as usize;
        if x <= half {
            cut.sources.push(idx);
            cut.source_coords.push((half - x + 1, y));
        } else {
            cut.destinations.push(idx);
            cut.dest_coords.push((x - half, y));
        }
    }
    Ok(cut)
}

/// Ring `k` of cells around a receiver's cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceLayer {
    pub k: usize,
    pub cell_count: usize,
    /// Minimum distance to the receiver in cell sides.
    pub min_distance: usize,
}

/// Layers `1..=max_k`; layer `k` is the square ring at Chebyshev distance `k`.
pub fn interference_layers(max_k: usize) -> Vec<InterferenceLayer> {
    (1..=max_k)
        .map(|k| InterferenceLayer {
            k,
            cell_count: 8 * k,
            min_distance: k,
        })
        .collect()
}

/// Upper limit on the empty-zone width, `1 / (sqrt 7 e^{1/4})`.
pub fn empty_zone_limit() -> f64 {
    1.0 / (7f64.sqrt() * 0.25f64.exp())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexLoad {
    pub left: usize,
    pub right: usize,
}

impl VertexLoad {
    pub fn total(&self) -> usize {
        self.left + self.right
    }
}

/// A random network snapped onto lattice vertices, possibly several nodes per
/// vertex.
///
/// Vertex columns are counted from the cut: column `c` sits at
/// `x = cut_x + c`, so columns `<= 0` are left of the cut and `>= 1` right of
/// it. Rows are the integer `y` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacedTopology {
    pub side: f64,
    pub cut_x: f64,
    pub empty_zone_width: f64,
    /// `(column, row)` of each node, `None` for nodes removed from the empty zone.
    pub snapped: Vec<Option<(i64, i64)>>,
    pub vertices: BTreeMap<(i64, i64), VertexLoad>,
    pub removed: usize,
}

impl DisplacedTopology {
    pub fn multiplicity(&self, vertex: (i64, i64)) -> usize {
        self.vertices.get(&vertex).map_or(0, VertexLoad::total)
    }

    pub fn kept(&self) -> usize {
        self.vertices.values().map(VertexLoad::total).sum()
    }

    pub fn position(&self, vertex: (i64, i64)) -> Point {
        Point::new(self.cut_x + vertex.0 as f64, vertex.1 as f64)
    }
}

/// Snaps every node onto a vertex of its unit square, toward the cut.
///
/// Left of the cut a node moves right and up to the nearest vertex. Right of
/// the cut it moves left and up, except the first column of squares, which
/// cannot land on the cut line and joins column 1. Nodes in the slab
/// `(cut, cut + c̄]` are dropped.
pub fn displace_to_vertices(topology: &Topology, empty_zone_width: f64) -> Result<DisplacedTopology> {
    if topology.placement != Placement::RandomUniform {
        return Err(Error::Usage("displacement applies to random networks".into()));
    }
    let limit = empty_zone_limit();
    if !(empty_zone_width > 0.0 && empty_zone_width < limit) {
        return Err(Error::Config(format!(
            "empty zone width must lie in (0, {limit:.4}), got {empty_zone_width}"
        )));
    }
    let cut_x = topology.side / 2.0;
    let mut out = DisplacedTopology {
        side: topology.side,
        cut_x,
        empty_zone_width,
        snapped: Vec::with_capacity(topology.n),
        vertices: BTreeMap::new(),
        removed: 0,
    };
    for p in &topology.positions {
        let row = p.y.ceil() as i64;
        let t = p.x - cut_x;
        if t <= 0.0 {
            let v = (-((-t).floor() as i64), row);
            out.vertices.entry(v).or_default().left += 1;
            out.snapped.push(Some(v));
        } else if t <= empty_zone_width {
            out.removed += 1;
            out.snapped.push(None);
        } else {
            let v = ((t.floor() as i64).max(1), row);
            out.vertices.entry(v).or_default().right += 1;
            out.snapped.push(Some(v));
        }
    }
    Ok(out)
}
