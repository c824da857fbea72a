//! Nearest-neighbor multi-hop transmission: bursty power control, routing
//! along the source–destination line, interference sums and throughput.

use serde::{Deserialize, Serialize};

use crate::channel::OperatingPoint;
use crate::error::{Error, Result};
use crate::logval::{log_sum_exp_raw, LogValue};
use crate::rng::{stream, Domain};
use crate::topology::{sample_matching, Placement, Point, RoutingGrid, Topology};

/// Duty-cycled transmission keeping the average power at `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstyParams {
    /// `ln` of the fraction of time spent transmitting.
    pub duty_fraction_ln: LogValue,
    /// `ln` of the power used while transmitting.
    pub instantaneous_power_ln: LogValue,
    /// Set when `1 / (a N)` exceeded 1 and was cut back to continuous operation.
    pub clamped: bool,
}

impl BurstyParams {
    /// Always-on transmission at power `P`.
    pub fn continuous(power: f64) -> Result<Self> {
        check_power(power)?;
        Ok(BurstyParams {
            duty_fraction_ln: LogValue::ONE,
            instantaneous_power_ln: LogValue::from_linear(power)?,
            clamped: false,
        })
    }
}

fn check_power(power: f64) -> Result<()> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Config(format!("power must be finite and > 0, got {power}")));
    }
    Ok(())
}

/// Transmits a fraction `1 / (a(f) N(f))` of the time at power `a(f) N(f) P`.
pub fn bursty_params(op: &OperatingPoint, power: f64) -> Result<BurstyParams> {
    check_power(power)?;
    let raw = -(op.ln_a + op.ln_noise.ln());
    let clamped = raw > 0.0;
    let duty = if clamped { 0.0 } else { raw };
    Ok(BurstyParams {
        duty_fraction_ln: LogValue::from_ln(duty)?,
        instantaneous_power_ln: LogValue::from_ln(power.ln() - duty)?,
        clamped,
    })
}

/// How many interference layers to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layers {
    Finite(usize),
    /// Sum until the geometric tail is negligible.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSum {
    pub total: LogValue,
    pub layers_used: usize,
    /// Bound on the omitted layers beyond `layers_used`.
    pub tail_bound: LogValue,
}

/// Stop summing unbounded layers once the tail is this small relative to the sum.
const TAIL_REL: f64 = 1e-17;
const MAX_UNBOUNDED_LAYERS: usize = 50_000_000;

/// `Σ_k 8k · p_tx / (c0 k^α a^k)`: every cell of layer `k` hosts one active
/// transmitter at distance at least `k`.
pub fn interference_total(
    op: &OperatingPoint,
    power: f64,
    layers: Layers,
    bursty: bool,
) -> Result<InterferenceSum> {
    let tx = if bursty {
        bursty_params(op, power)?
    } else {
        BurstyParams::continuous(power)?
    }
    .instantaneous_power_ln
    .ln();
    let term = |k: usize| {
        let kf = k as f64;
        (8.0 * kf).ln() + tx - op.ln_c0 - op.alpha * kf.ln() - kf * op.ln_a
    };
    // layers beyond K add at most 8 p_tx / c0 · a^{-K} / (a - 1) for α >= 1
    let tail = |k: usize| {
        if op.ln_a > 0.0 {
            LogValue::new_unchecked((8.0f64).ln() + tx - op.ln_c0 - k as f64 * op.ln_a - op.ln_a.exp_m1().ln())
        } else {
            // no finite bound without absorption
            LogValue::new_unchecked(f64::MAX)
        }
    };
    match layers {
        Layers::Finite(max_k) => {
            if max_k == 0 {
                return Err(Error::Config("interference needs at least one layer".into()));
            }
            let terms: Vec<f64> = (1..=max_k).map(term).collect();
            Ok(InterferenceSum {
                total: log_sum_exp_raw(&terms),
                layers_used: max_k,
                tail_bound: tail(max_k),
            })
        }
        Layers::Unbounded => {
            if !(op.ln_a > 0.0) {
                return Err(Error::Divergence(format!(
                    "interference over unbounded layers needs ln a(f) > 0, got {}",
                    op.ln_a
                )));
            }
            let mut total = LogValue::ZERO;
            for k in 1..=MAX_UNBOUNDED_LAYERS {
                total = total.add_ln(LogValue::new_unchecked(term(k)));
                let t = tail(k);
                if t.ln() - total.ln() < TAIL_REL.ln() {
                    return Ok(InterferenceSum {
                        total,
                        layers_used: k,
                        tail_bound: t,
                    });
                }
            }
            Err(Error::Numerical(format!(
                "interference tail still above {TAIL_REL} after {MAX_UNBOUNDED_LAYERS} layers (ln a = {})",
                op.ln_a
            )))
        }
    }
}

/// `p_tx / (A(r, f) (N(f) + I))`, in log domain.
pub fn per_hop_sinr(
    op: &OperatingPoint,
    tx_power_ln: LogValue,
    hop_distance: f64,
    interference: LogValue,
) -> Result<LogValue> {
    let a = op.attenuation_ln(hop_distance)?;
    let noise_plus = op.ln_noise.add_ln(interference);
    LogValue::from_ln(tx_power_ln.ln() - a.ln() - noise_plus.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub pair: (usize, usize),
    /// Cells visited from the source cell to the destination cell.
    pub cells: Vec<usize>,
    /// Source, one relay per intermediate cell, destination.
    pub nodes: Vec<usize>,
    pub hop_distances: Vec<f64>,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.hop_distances.len()
    }
}

/// Routing cells plus the relay elected in each one.
#[derive(Debug, Clone)]
pub struct Router<'a> {
    pub topology: &'a Topology,
    pub grid: RoutingGrid,
    /// Node nearest the cell center (lowest index on ties), `None` if empty.
    pub relays: Vec<Option<usize>>,
}

/// Corners hit within this parametric distance count as simultaneous crossings.
const CORNER_TOL: f64 = 1e-12;

impl<'a> Router<'a> {
    pub fn new(topology: &'a Topology, grid: RoutingGrid) -> Self {
        let relays = (0..grid.cells.len())
            .map(|c| {
                let center = grid.center(c);
                grid.cells[c].iter().copied().min_by(|&a, &b| {
                    let da = topology.positions[a].distance(&center);
                    let db = topology.positions[b].distance(&center);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
            })
            .collect();
        Router {
            topology,
            grid,
            relays,
        }
    }

    /// Unit cells centred on the lattice for regular networks, `2 ln n`
    /// cells for random ones.
    pub fn for_topology(topology: &'a Topology) -> Result<Self> {
        let grid = match topology.placement {
            Placement::Regular => RoutingGrid::for_regular(topology)?,
            Placement::RandomUniform => RoutingGrid::for_random(topology)?,
        };
        Ok(Router::new(topology, grid))
    }

    /// Edge-connected cell walk along the segment `a → b`. When the segment
    /// crosses a corner the horizontal step is taken first.
    pub fn cell_walk(&self, a: &Point, b: &Point) -> Vec<usize> {
        let g = &self.grid;
        let (c0, r0) = g.cell_coords(a);
        let (c1, r1) = g.cell_coords(b);
        let ua = ((a.x - g.origin.x) / g.cell_side, (a.y - g.origin.y) / g.cell_side);
        let ub = ((b.x - g.origin.x) / g.cell_side, (b.y - g.origin.y) / g.cell_side);
        let (dx, dy) = (ub.0 - ua.0, ub.1 - ua.1);
        let step_x: i64 = if c1 > c0 { 1 } else { -1 };
        let step_y: i64 = if r1 > r0 { 1 } else { -1 };
        let first_crossing = |cell: usize, step: i64, u: f64, d: f64| {
            if d == 0.0 {
                return f64::INFINITY;
            }
            let boundary = if step > 0 { cell as f64 + 1.0 } else { cell as f64 };
            (boundary - u) / d
        };
        let mut t_x = first_crossing(c0, step_x, ua.0, dx);
        let mut t_y = first_crossing(r0, step_y, ua.1, dy);
        let delta_x = if dx == 0.0 { f64::INFINITY } else { 1.0 / dx.abs() };
        let delta_y = if dy == 0.0 { f64::INFINITY } else { 1.0 / dy.abs() };
        let (mut left_x, mut left_y) = (c0.abs_diff(c1), r0.abs_diff(r1));
        let (mut c, mut r) = (c0 as i64, r0 as i64);
        let mut cells = Vec::with_capacity(left_x + left_y + 1);
        cells.push(g.index(c0, r0));
        while left_x + left_y > 0 {
            let go_x = left_y == 0 || (left_x > 0 && t_x <= t_y + CORNER_TOL);
            if go_x {
                c += step_x;
                t_x += delta_x;
                left_x -= 1;
            } else {
                r += step_y;
                t_y += delta_y;
                left_y -= 1;
            }
            cells.push(g.index(c as usize, r as usize));
        }
        cells
    }

    pub fn route(&self, source: usize, destination: usize) -> Result<Route> {
        let pos = &self.topology.positions;
        let cells = self.cell_walk(&pos[source], &pos[destination]);
        let mut nodes = Vec::with_capacity(cells.len() + 1);
        nodes.push(source);
        if cells.len() > 1 {
            for &c in &cells[1..cells.len() - 1] {
                let relay = self.relays[c].ok_or_else(|| {
                    Error::Routing(format!(
                        "cell {c} on the route {source} -> {destination} is empty"
                    ))
                })?;
                nodes.push(relay);
            }
        }
        nodes.push(destination);
        let hop_distances = nodes.windows(2).map(|w| pos[w[0]].distance(&pos[w[1]])).collect();
        Ok(Route {
            pair: (source, destination),
            cells,
            nodes,
            hop_distances,
        })
    }
}

/// Routes one pair; see [`Router::route`].
pub fn route_mh(topology: &Topology, grid: &RoutingGrid, pair: (usize, usize)) -> Result<Route> {
    Router::new(topology, grid.clone()).route(pair.0, pair.1)
}

/// 9-TDMA slot of a cell: cells sharing a slot are three apart on both axes.
pub fn tdma_slot(grid: &RoutingGrid, cell: usize) -> usize {
    let (c, r) = grid.coords(cell);
    (r % 3) * 3 + c % 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhMode {
    RegularAnalytic,
    RegularSimulated,
    RandomSimulated,
}

impl MhMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MhMode::RegularAnalytic => "regular_analytic",
            MhMode::RegularSimulated => "regular_simulated",
            MhMode::RandomSimulated => "random_simulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub n: usize,
    pub f_khz: f64,
    pub mode: MhMode,
    pub placement: Placement,
    pub duty_ln: LogValue,
    pub duty_clamped: bool,
    /// Rate of one pair in bits per channel use: the single-hop rate for the
    /// closed form, otherwise the rate all routed pairs sustain together.
    pub per_pair_rate: LogValue,
    /// Concurrently served pairs: `sqrt(n)` analytically, otherwise
    /// `Σ 1 / bottleneck load` over routed pairs.
    pub active_sources: f64,
    pub total: LogValue,
    pub unroutable: usize,
    pub pairs: usize,
    /// Longest hop over all routes, in grid units.
    pub max_hop_distance: f64,
    pub seed: Option<u64>,
}

impl ThroughputReport {
    pub fn unroutable_fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.unroutable as f64 / self.pairs as f64
        }
    }
}

fn side_of(n: usize) -> Result<usize> {
    crate::topology::exact_sqrt(n)
        .ok_or_else(|| Error::Config(format!("regular networks need a perfect square n, got {n}")))
}

/// Closed form for the regular lattice: every cell holds one bursty
/// transmitter, hops have unit length and `sqrt(n)` pairs are served at once.
pub fn regular_mh_analytic(n: usize, op: &OperatingPoint, power: f64) -> Result<ThroughputReport> {
    let side = side_of(n)?;
    let b = bursty_params(op, power)?;
    let interference = interference_total(op, power, Layers::Finite(side), true)?;
    let sinr = per_hop_sinr(op, b.instantaneous_power_ln, 1.0, interference.total)?;
    let rate = b.duty_fraction_ln * sinr.ln_log2_1p();
    let active = side as f64;
    Ok(ThroughputReport {
        n,
        f_khz: op.f_khz,
        mode: MhMode::RegularAnalytic,
        placement: Placement::Regular,
        duty_ln: b.duty_fraction_ln,
        duty_clamped: b.clamped,
        per_pair_rate: rate,
        active_sources: active,
        total: rate * LogValue::from_linear(active)?,
        unroutable: 0,
        pairs: side,
        max_hop_distance: 1.0,
        seed: None,
    })
}

/// End-to-end rates when every node time-shares its transmit slot among the
/// routes it forwards: a pair gets the smallest `hop rate / load` on its path.
/// The total is the number of routed pairs times the slowest pair rate.
fn load_shared_totals(
    n: usize,
    routes: &[Route],
    hop_rate_ln: impl Fn(usize, usize, f64) -> Result<LogValue>,
) -> Result<(Vec<LogValue>, f64)> {
    let mut load = vec![0usize; n];
    for route in routes {
        for &tx in &route.nodes[..route.nodes.len() - 1] {
            load[tx] += 1;
        }
    }
    let mut rates = Vec::with_capacity(routes.len());
    let mut active = 0.0;
    for route in routes {
        let mut worst = f64::INFINITY;
        let mut worst_load = 1usize;
        for (h, w) in route.nodes.windows(2).enumerate() {
            let l = load[w[0]];
            let r = hop_rate_ln(w[0], w[1], route.hop_distances[h])?.ln() - (l as f64).ln();
            if r < worst {
                worst = r;
            }
            worst_load = worst_load.max(l);
        }
        rates.push(LogValue::from_ln(worst)?);
        active += 1.0 / worst_load as f64;
    }
    Ok((rates, active))
}

fn summarize(
    mut report: ThroughputReport,
    rates: &[LogValue],
    active: f64,
    routes: &[Route],
) -> Result<ThroughputReport> {
    // every node sends at the same rate, so the slowest routed pair sets it
    let common = rates.iter().copied().fold(None, |acc: Option<LogValue>, r| {
        Some(match acc {
            Some(a) if a.ln() <= r.ln() => a,
            _ => r,
        })
    });
    report.per_pair_rate = common.unwrap_or(LogValue::ZERO);
    report.total = if rates.is_empty() {
        LogValue::ZERO
    } else {
        LogValue::from_ln(report.per_pair_rate.ln() + (rates.len() as f64).ln())?
    };
    report.active_sources = active;
    report.max_hop_distance = routes
        .iter()
        .flat_map(|r| r.hop_distances.iter().copied())
        .fold(0.0, f64::max);
    Ok(report)
}

/// Full simulation on the lattice with a random matching.
///
/// Nodes transmit in one of two slots by checkerboard parity, so a relay
/// never sends and receives at once; all nodes of the active parity burst
/// together and interfere with each other exactly.
pub fn regular_mh_simulated(
    n: usize,
    op: &OperatingPoint,
    power: f64,
    seed: u64,
) -> Result<ThroughputReport> {
    let side = side_of(n)?;
    let topology = Topology::build_regular(n)?;
    let matching = sample_matching(n, &mut stream(seed, Domain::Matching, 0))?;
    let router = Router::for_topology(&topology)?;
    let routes = matching
        .pairs()
        .map(|(s, d)| router.route(s, d))
        .collect::<Result<Vec<_>>>()?;
    let b = bursty_params(op, power)?;
    let tx = b.instantaneous_power_ln.ln();
    let coords: Vec<(usize, usize)> = topology
        .positions
        .iter()
        .map(|p| (p.x as usize - 1, p.y as usize - 1))
        .collect();
    let parity = |i: usize| (coords[i].0 + coords[i].1) % 2;
    // received power from any node at lattice offset (dx, dy)
    let mut gain = vec![f64::NEG_INFINITY; side * side];
    for dx in 0..side {
        for dy in 0..side {
            if dx + dy > 0 {
                gain[dx * side + dy] = tx + op.gain_ln_unchecked((dx as f64).hypot(dy as f64));
            }
        }
    }
    let offset = |a: usize, b: usize| {
        let (ax, ay) = coords[a];
        let (bx, by) = coords[b];
        gain[ax.abs_diff(bx) * side + ay.abs_diff(by)]
    };
    // interference at each receiver from every other-parity node beyond
    // unit distance; unit neighbours are added per hop, minus the transmitter
    let mut far = vec![LogValue::ZERO; n];
    let mut buf = Vec::with_capacity(n);
    for rx in 0..n {
        buf.clear();
        for j in 0..n {
            let (jx, jy) = coords[j];
            let (rx_x, rx_y) = coords[rx];
            if parity(j) != parity(rx) && jx.abs_diff(rx_x) + jy.abs_diff(rx_y) > 1 {
                buf.push(offset(j, rx));
            }
        }
        far[rx] = log_sum_exp_raw(&buf);
    }
    let neighbours = |rx: usize| {
        let (x, y) = coords[rx];
        let mut out = Vec::with_capacity(4);
        if x > 0 {
            out.push((x - 1, y));
        }
        if x + 1 < side {
            out.push((x + 1, y));
        }
        if y > 0 {
            out.push((x, y - 1));
        }
        if y + 1 < side {
            out.push((x, y + 1));
        }
        out.into_iter().map(|(x, y)| x * side + y)
    };
    let half = 0.5f64.ln();
    let hop_rate = |t: usize, r: usize, dist: f64| -> Result<LogValue> {
        debug_assert_eq!(parity(t), 1 - parity(r));
        let mut interference = far[r];
        for j in neighbours(r) {
            if j != t {
                interference = interference.add_ln(LogValue::new_unchecked(offset(j, r)));
            }
        }
        let sinr = per_hop_sinr(op, b.instantaneous_power_ln, dist, interference)?;
        Ok(LogValue::new_unchecked(half) * b.duty_fraction_ln * sinr.ln_log2_1p())
    };
    let (rates, active) = load_shared_totals(n, &routes, hop_rate)?;
    let report = ThroughputReport {
        n,
        f_khz: op.f_khz,
        mode: MhMode::RegularSimulated,
        placement: Placement::Regular,
        duty_ln: b.duty_fraction_ln,
        duty_clamped: b.clamped,
        per_pair_rate: LogValue::ZERO,
        active_sources: 0.0,
        total: LogValue::ZERO,
        unroutable: 0,
        pairs: n,
        max_hop_distance: 0.0,
        seed: Some(seed),
    };
    summarize(report, &rates, active, &routes)
}

/// Largest tolerated share of pairs crossing an empty cell.
pub const MAX_UNROUTABLE: f64 = 0.01;

/// Random placement, cells of area `2 ln n`, 9-TDMA and continuous power.
///
/// Each active cell other than the transmitter's is represented by its relay
/// when summing interference.
pub fn random_mh_throughput(
    topology: &Topology,
    op: &OperatingPoint,
    power: f64,
    seed: u64,
) -> Result<ThroughputReport> {
    if topology.placement != Placement::RandomUniform {
        return Err(Error::Usage("random_mh_throughput needs a random placement".into()));
    }
    let n = topology.n;
    let matching = match &topology.matching {
        Some(m) => m.clone(),
        None => sample_matching(n, &mut stream(seed, Domain::Matching, 0))?,
    };
    let router = Router::for_topology(topology)?;
    let mut routes = Vec::with_capacity(n);
    let mut unroutable = 0;
    for (s, d) in matching.pairs() {
        match router.route(s, d) {
            Ok(r) => routes.push(r),
            Err(Error::Routing(_)) => unroutable += 1,
            Err(e) => return Err(e),
        }
    }
    if unroutable as f64 > MAX_UNROUTABLE * n as f64 {
        return Err(Error::Routing(format!(
            "{unroutable} of {n} pairs cross an empty cell (limit {:.0}%)",
            MAX_UNROUTABLE * 100.0
        )));
    }
    let b = BurstyParams::continuous(power)?;
    let tx = b.instantaneous_power_ln;
    let grid = &router.grid;
    let pos = &topology.positions;
    let mut by_slot: Vec<Vec<(usize, usize)>> = vec![Vec::new(); 9];
    for (c, relay) in router.relays.iter().enumerate() {
        if let Some(r) = relay {
            by_slot[tdma_slot(grid, c)].push((c, *r));
        }
    }
    let ninth = (1.0f64 / 9.0).ln();
    let node_cell: Vec<usize> = pos.iter().map(|p| grid.cell_of(p)).collect();
    let hop_rate = |t: usize, r: usize, dist: f64| -> Result<LogValue> {
        let cell = node_cell[t];
        let mut terms = Vec::new();
        for &(c, relay) in &by_slot[tdma_slot(grid, cell)] {
            if c != cell {
                terms.push(tx.ln() + op.gain_ln_unchecked(pos[relay].distance(&pos[r]).max(f64::MIN_POSITIVE)));
            }
        }
        let interference = log_sum_exp_raw(&terms);
        let sinr = per_hop_sinr(op, tx, dist.max(f64::MIN_POSITIVE), interference)?;
        Ok(LogValue::new_unchecked(ninth) * sinr.ln_log2_1p())
    };
    let (rates, active) = load_shared_totals(n, &routes, hop_rate)?;
    let report = ThroughputReport {
        n,
        f_khz: op.f_khz,
        mode: MhMode::RandomSimulated,
        placement: Placement::RandomUniform,
        duty_ln: b.duty_fraction_ln,
        duty_clamped: false,
        per_pair_rate: LogValue::ZERO,
        active_sources: 0.0,
        total: LogValue::ZERO,
        unroutable,
        pairs: n,
        max_hop_distance: 0.0,
        seed: topology.seed.or(Some(seed)),
    };
    summarize(report, &rates, active, &routes)
}

/// Draws a random topology from `seed` and runs [`random_mh_throughput`].
pub fn random_mh_seeded(n: usize, op: &OperatingPoint, power: f64, seed: u64) -> Result<ThroughputReport> {
    let topology =
        Topology::build_random(n, &mut stream(seed, Domain::Placement, 0))?.with_seed(seed);
    random_mh_throughput(&topology, op, power, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::AbsorptionProfile;
    use crate::cutset::theorem1_bound;
    use proptest::prelude::*;

    fn op(ln_a: f64, ln_n: f64, alpha: f64) -> OperatingPoint {
        OperatingPoint::from_parts(ln_a, ln_n, alpha, 1.0).unwrap()
    }

    fn lattice_router(t: &Topology) -> Router<'_> {
        Router::for_topology(t).unwrap()
    }

    fn index_of(t: &Topology, x: f64, y: f64) -> usize {
        t.positions.iter().position(|p| p.x == x && p.y == y).unwrap()
    }

    #[test]
    fn bursty_examples() {
        let b = bursty_params(&op(0.0, 0.0, 1.0), 3.0).unwrap();
        assert_eq!(b.duty_fraction_ln.ln(), 0.0);
        assert!((b.instantaneous_power_ln.exp() - 3.0).abs() < 1e-15);
        let b = bursty_params(&op(3.0, -1.0, 1.0), 1.0).unwrap();
        assert_eq!(b.duty_fraction_ln.ln(), -2.0);
        assert!(!b.clamped);
        let b = bursty_params(&op(0.5, -2.0, 1.0), 1.0).unwrap();
        assert!(b.clamped);
        assert_eq!(b.duty_fraction_ln.ln(), 0.0);
        assert!(bursty_params(&op(1.0, 0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn interference_closed_form() {
        for ln_n in [-1.0, 0.0, 2.5] {
            let o = op(1.0, ln_n, 1.0);
            let s = interference_total(&o, 1.0, Layers::Finite(50), true).unwrap();
            let closed = 8.0 * ln_n.exp() / (1.0 - (-1.0f64).exp());
            assert!((s.total.exp() / closed - 1.0).abs() < 1e-6);
            assert!((closed / ln_n.exp() - 8.0 * 1.5820).abs() < 1e-3);
            let u = interference_total(&o, 1.0, Layers::Unbounded, true).unwrap();
            assert!((u.total.exp() / closed - 1.0).abs() < 1e-14);
            assert!(u.tail_bound.ln() < u.total.ln() - 30.0);
        }
    }

    #[test]
    fn interference_tail_bound_covers_truncation() {
        let o = op(0.3, 0.0, 1.5);
        let full = interference_total(&o, 1.0, Layers::Unbounded, false).unwrap();
        let cut = interference_total(&o, 1.0, Layers::Finite(10), false).unwrap();
        let missing = full.total.exp() - cut.total.exp();
        assert!(missing > 0.0 && missing <= cut.tail_bound.exp());
    }

    #[test]
    fn interference_decreases_with_alpha() {
        let mut last = f64::INFINITY;
        for alpha in [1.0, 1.25, 1.5, 2.0] {
            let s = interference_total(&op(0.4, 0.0, alpha), 1.0, Layers::Finite(40), false).unwrap();
            assert!(s.total.ln() < last);
            last = s.total.ln();
        }
    }

    #[test]
    fn interference_divergence() {
        let err = interference_total(&op(0.0, 0.0, 2.0), 1.0, Layers::Unbounded, false).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert!(interference_total(&op(0.0, 0.0, 2.0), 1.0, Layers::Finite(5), false).is_ok());
        assert!(interference_total(&op(1.0, 0.0, 2.0), 1.0, Layers::Finite(0), false).is_err());
    }

    #[test]
    fn sinr_is_frequency_free_under_bursts() {
        let p = AbsorptionProfile::default();
        let mut values = Vec::new();
        for f in [1.0, 10.0, 100.0] {
            let o = p.at(f).unwrap();
            let b = bursty_params(&o, 1.0).unwrap();
            assert!(!b.clamped);
            let i = interference_total(&o, 1.0, Layers::Unbounded, true).unwrap();
            let sinr = per_hop_sinr(&o, b.instantaneous_power_ln, 1.0, i.total).unwrap();
            // (P / c0) / (1 + I / N)
            let c6 = (i.total.ln() - o.ln_noise.ln()).exp();
            assert!((sinr.exp() - 1.0 / (1.0 + c6)).abs() < 1e-12);
            values.push(sinr);
        }
        assert!(values.iter().all(|v| v.exp() > 0.0 && v.exp() < 1.0 / 9.0));
    }

    #[test]
    fn sinr_noise_only_and_distance_doubling() {
        let o = op(0.7, 1.3, 1.5);
        let tx = LogValue::from_linear(2.0).unwrap();
        let s = per_hop_sinr(&o, tx, 3.0, LogValue::ZERO).unwrap();
        let expected = 2.0f64.ln() - o.attenuation_ln(3.0).unwrap().ln() - 1.3;
        assert!((s.ln() - expected).abs() < 1e-14);
        let s2 = per_hop_sinr(&o, tx, 6.0, LogValue::ZERO).unwrap();
        assert!((s2.ln() - s.ln() - (-(1.5 * 2f64.ln()) - 3.0 * 0.7)).abs() < 1e-12);
        assert!(per_hop_sinr(&o, tx, 0.0, LogValue::ZERO).is_err());
    }

    #[test]
    fn collinear_route() {
        let t = Topology::build_regular(16).unwrap();
        let r = lattice_router(&t);
        let route = r.route(index_of(&t, 1.0, 1.0), index_of(&t, 4.0, 1.0)).unwrap();
        assert_eq!(route.hops(), 3);
        assert!(route.hop_distances.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn staircase_route() {
        let t = Topology::build_regular(16).unwrap();
        let r = lattice_router(&t);
        let route = r.route(index_of(&t, 1.0, 1.0), index_of(&t, 3.0, 2.0)).unwrap();
        assert!(route.hops() <= 3);
        assert!(route.hop_distances.iter().all(|&d| d <= 2f64.sqrt()));
        let visited: Vec<(f64, f64)> = route.nodes.iter().map(|&i| (t.positions[i].x, t.positions[i].y)).collect();
        // crosses x = 1.5 at y = 1.25, then y = 1.5 at x = 2
        assert_eq!(visited, vec![(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (3.0, 2.0)]);
    }

    #[test]
    fn diagonal_hop_bound() {
        for side in [4usize, 8, 16] {
            let t = Topology::build_regular(side * side).unwrap();
            let r = lattice_router(&t);
            let s = side as f64;
            let route = r.route(index_of(&t, 1.0, 1.0), index_of(&t, s, s)).unwrap();
            assert!(route.hops() <= 2 * side);
            assert_eq!(route.hops(), 2 * (side - 1));
        }
    }

    #[test]
    fn walks_are_edge_connected() {
        let t = Topology::build_random(500, &mut stream(3, Domain::Placement, 0)).unwrap();
        let r = Router::for_topology(&t).unwrap();
        for (a, b) in [(0usize, 1usize), (5, 400), (17, 250), (499, 2)] {
            let cells = r.cell_walk(&t.positions[a], &t.positions[b]);
            assert_eq!(cells[0], r.grid.cell_of(&t.positions[a]));
            assert_eq!(*cells.last().unwrap(), r.grid.cell_of(&t.positions[b]));
            for w in cells.windows(2) {
                let (c0, r0) = r.grid.coords(w[0]);
                let (c1, r1) = r.grid.coords(w[1]);
                assert_eq!(c0.abs_diff(c1) + r0.abs_diff(r1), 1);
            }
        }
    }

    #[test]
    fn empty_cell_is_a_routing_error() {
        let mut t = Topology::build_random(64, &mut stream(1, Domain::Placement, 0)).unwrap();
        // pile everything into the two bottom corners
        for (i, p) in t.positions.iter_mut().enumerate() {
            *p = if i % 2 == 0 { Point::new(0.1, 0.1) } else { Point::new(7.9, 0.1) };
        }
        let r = Router::for_topology(&t).unwrap();
        assert!(matches!(r.route(0, 1), Err(Error::Routing(_))));
    }

    #[test]
    fn relay_is_nearest_center_lowest_index() {
        let mut t = Topology::build_random(4, &mut stream(1, Domain::Placement, 0)).unwrap();
        t.positions = vec![
            Point::new(0.5, 0.2),
            Point::new(0.5, 0.8),
            Point::new(0.2, 0.5),
            Point::new(1.9, 1.9),
        ];
        let grid = RoutingGrid::new(&t, 1.0, Point::new(0.0, 0.0)).unwrap();
        let r = Router::new(&t, grid);
        assert_eq!(r.relays[0], Some(0));
        assert_eq!(r.relays[3], Some(3));
        assert_eq!(r.relays[1], None);
    }

    #[test]
    fn tdma_slots_are_spread() {
        let t = Topology::build_random(1024, &mut stream(2, Domain::Placement, 0)).unwrap();
        let g = RoutingGrid::for_random(&t).unwrap();
        for a in 0..g.cells.len() {
            for b in 0..g.cells.len() {
                if a != b && tdma_slot(&g, a) == tdma_slot(&g, b) {
                    let (ca, ra) = g.coords(a);
                    let (cb, rb) = g.coords(b);
                    assert!(ca.abs_diff(cb) >= 3 || ra.abs_diff(rb) >= 3);
                }
            }
        }
    }

    #[test]
    fn analytic_scales_as_sqrt_n() {
        let o = op(2.0, 1.0, 1.5);
        let a = regular_mh_analytic(64, &o, 1.0).unwrap();
        let b = regular_mh_analytic(256, &o, 1.0).unwrap();
        // the per-pair rate differs only by interference layers beyond 8
        assert!((b.total.exp() / a.total.exp() - 2.0).abs() < 1e-6);
        assert!((a.total.ln() - a.per_pair_rate.ln() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn analytic_below_cutset_bound() {
        let p = AbsorptionProfile::default();
        for n in [64usize, 256, 1024] {
            for f in [5.0, 40.0, 150.0] {
                let o = p.at(f).unwrap();
                let mh = regular_mh_analytic(n, &o, 1.0).unwrap();
                let ub = theorem1_bound(n, &o, 1.0, 0.0).unwrap();
                assert!(mh.total.ln() <= ub.bound_bits.ln(), "n={n} f={f}");
            }
        }
    }

    #[test]
    fn simulated_regular_is_legal_and_close() {
        let p = AbsorptionProfile::default();
        let o = p.at(120.0).unwrap();
        let analytic = regular_mh_analytic(64, &o, 1.0).unwrap();
        let sim = regular_mh_simulated(64, &o, 1.0, 5).unwrap();
        let ratio = (sim.total.ln() - analytic.total.ln()).exp();
        assert!(ratio > 0.1 && ratio < 1.5, "{ratio}");
        assert_eq!(sim.max_hop_distance, 1.0);
        assert_eq!(sim, regular_mh_simulated(64, &o, 1.0, 5).unwrap());
    }

    #[test]
    fn random_network_runs_and_is_deterministic() {
        let p = AbsorptionProfile::default();
        let o = p.at(120.0).unwrap();
        let a = random_mh_seeded(256, &o, 1.0, 9).unwrap();
        let b = random_mh_seeded(256, &o, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.unroutable_fraction() <= MAX_UNROUTABLE);
        assert!(a.total.ln().is_finite());
        assert!(a.active_sources > 0.0);
        let regular = Topology::build_regular(256).unwrap();
        assert!(random_mh_throughput(&regular, &o, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn duty_times_power_is_average(ln_a in 0.0f64..40.0, ln_n in -5.0f64..15.0, power in 1e-3f64..1e3) {
            let b = bursty_params(&op(ln_a, ln_n, 1.5), power).unwrap();
            let sum = b.duty_fraction_ln.ln() + b.instantaneous_power_ln.ln();
            prop_assert!((sum - power.ln()).abs() <= 1e-12 * power.ln().abs().max(1.0));
            prop_assert!(b.duty_fraction_ln.ln() <= 0.0);
        }
    }
}
