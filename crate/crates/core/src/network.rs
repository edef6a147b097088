//! Per-interval inter-regional transfer over the lossy capacitated link
//! graph, and transmission cost accounting.

use crate::cost::capital_recovery_factor;
use crate::scenario::{LinkKind, TechnologyCosts, TopoLink, Topology};
use serde::Serialize;

/// Fractional loss for a link of the given length: 3% per 1,000 km, capped
/// at 50% as a sanity bound.
pub fn line_loss_rate(length_km: f64) -> f64 {
    (0.03 * length_km / 1000.0).min(0.5)
}

/// Realised transfer on one interconnector during one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkFlow {
    pub link: String,
    /// True when power flows in the link's declared from→to direction.
    pub forward: bool,
    pub send_gw: f64,
    pub receive_gw: f64,
    pub loss_gw: f64,
}

const FLOW_EPS: f64 = 1e-12;

/// Moves surplus toward deficit by iterated cheapest-path transfers, loss
/// rate as path cost, until no augmenting surplus→deficit path remains
/// within capacity. `positions` holds each region's net position in GW
/// (surplus > 0) and is updated in place; `flows` accumulates the signed
/// send-side flow per link (positive in the from→to direction).
///
/// Within one call a link only carries flow in a single direction. Ties in
/// path efficiency resolve toward lower region and lexicographically lower
/// link ids, which makes the result deterministic.
pub fn balance_flows_into(
    positions: &mut [f64],
    topo: &Topology,
    capacities: &[f64],
    flows: &mut [f64],
    scratch: &mut FlowScratch,
) {
    debug_assert_eq!(positions.len(), topo.node_count());
    debug_assert_eq!(capacities.len(), topo.links.len());
    debug_assert_eq!(flows.len(), topo.links.len());
    if topo.links.is_empty() {
        return;
    }

    loop {
        let any_surplus = positions.iter().any(|&p| p > FLOW_EPS);
        let any_deficit = positions.iter().any(|&p| p < -FLOW_EPS);
        if !any_surplus || !any_deficit {
            return;
        }

        // Best delivery efficiency over all surplus→deficit pairs.
        let mut best: Option<(f64, usize, usize)> = None; // (efficiency, source, sink)
        for s in 0..positions.len() {
            if positions[s] <= FLOW_EPS {
                continue;
            }
            dijkstra(s, topo, capacities, flows, scratch);
            for (d, &position) in positions.iter().enumerate() {
                if position >= -FLOW_EPS {
                    continue;
                }
                let eff = scratch.efficiency[d];
                if eff <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((be, _, _)) => eff > be,
                };
                if better {
                    // Record the path now; a later source may overwrite scratch.
                    scratch.save_path(d);
                    best = Some((eff, s, d));
                }
            }
        }

        let Some((path_eff, source, sink)) = best else {
            return;
        };

        // Maximum send-side amount: source surplus, per-link residual
        // capacity (scaled to send-side units), and sink deficit.
        let mut limit = positions[source];
        let mut upstream_eff = 1.0;
        for &(li, forward) in &scratch.best_path {
            let residual = residual_capacity(li, forward, capacities, flows);
            limit = limit.min(residual / upstream_eff);
            upstream_eff *= 1.0 - topo.links[li].loss_rate;
        }
        limit = limit.min(-positions[sink] / path_eff);
        if limit <= FLOW_EPS {
            return;
        }

        // Apply the transfer.
        let mut carried = limit;
        for &(li, forward) in &scratch.best_path {
            flows[li] += if forward { carried } else { -carried };
            carried *= 1.0 - topo.links[li].loss_rate;
        }
        positions[source] -= limit;
        positions[sink] += limit * path_eff;
    }
}

fn residual_capacity(li: usize, forward: bool, capacities: &[f64], flows: &[f64]) -> f64 {
    let f = flows[li];
    if forward {
        if f >= 0.0 {
            capacities[li] - f
        } else {
            0.0 // link already committed in the reverse direction
        }
    } else if f <= 0.0 {
        capacities[li] + f
    } else {
        0.0
    }
}

/// Reusable buffers for the per-interval path search.
#[derive(Debug, Default, Clone)]
pub struct FlowScratch {
    efficiency: Vec<f64>,
    // (link index, forward?) of the edge arriving at each region.
    arrived_by: Vec<Option<(usize, bool, usize)>>,
    settled: Vec<bool>,
    best_path: Vec<(usize, bool)>,
}

impl FlowScratch {
    pub fn new(regions: usize) -> Self {
        FlowScratch {
            efficiency: vec![0.0; regions],
            arrived_by: vec![None; regions],
            settled: vec![false; regions],
            best_path: Vec::new(),
        }
    }

    fn save_path(&mut self, sink: usize) {
        self.best_path.clear();
        let mut node = sink;
        while let Some((li, forward, prev)) = self.arrived_by[node] {
            self.best_path.push((li, forward));
            node = prev;
        }
        self.best_path.reverse();
    }
}

// Max-efficiency path search from `source` over links with residual
// capacity. Small graphs: linear scan instead of a heap keeps the traversal
// order deterministic.
fn dijkstra(
    source: usize,
    topo: &Topology,
    capacities: &[f64],
    flows: &[f64],
    scratch: &mut FlowScratch,
) {
    let n = topo.node_count();
    scratch.efficiency[..n].fill(0.0);
    scratch.arrived_by[..n].fill(None);
    scratch.settled[..n].fill(false);
    scratch.efficiency[source] = 1.0;
    loop {
        let mut pick: Option<usize> = None;
        for r in 0..n {
            if scratch.settled[r] || scratch.efficiency[r] <= 0.0 {
                continue;
            }
            match pick {
                None => pick = Some(r),
                Some(p) if scratch.efficiency[r] > scratch.efficiency[p] => pick = Some(r),
                _ => {}
            }
        }
        let Some(u) = pick else { return };
        scratch.settled[u] = true;
        for &(li, nb) in &topo.adjacency[u] {
            if scratch.settled[nb] {
                continue;
            }
            let link = &topo.links[li];
            let forward = link.from == u;
            if residual_capacity(li, forward, capacities, flows) <= FLOW_EPS {
                continue;
            }
            let eff = scratch.efficiency[u] * (1.0 - link.loss_rate);
            if eff > scratch.efficiency[nb] {
                scratch.efficiency[nb] = eff;
                scratch.arrived_by[nb] = Some((li, forward, u));
            }
        }
    }
}

/// Convenience wrapper returning updated positions and realised link flows.
pub fn balance_flows(
    positions: &[f64],
    topo: &Topology,
    capacities: &[f64],
) -> (Vec<f64>, Vec<LinkFlow>) {
    let mut pos = positions.to_vec();
    let mut flows = vec![0.0; topo.links.len()];
    let mut scratch = FlowScratch::new(topo.node_count());
    balance_flows_into(&mut pos, topo, capacities, &mut flows, &mut scratch);
    let link_flows = topo
        .links
        .iter()
        .zip(&flows)
        .map(|(l, &f)| {
            let send = f.abs();
            LinkFlow {
                link: l.id.clone(),
                forward: f >= 0.0,
                send_gw: send,
                receive_gw: send * (1.0 - l.loss_rate),
                loss_gw: send * l.loss_rate,
            }
        })
        .collect();
    (pos, link_flows)
}

/// Annualized cost of one interconnector at the given (new-build) capacity,
/// including the N-1 reserve markup.
pub fn interconnector_annual_cost(
    link: &TopoLink,
    capacity_gw: f64,
    costs: &TechnologyCosts,
) -> f64 {
    let capital = match link.kind {
        LinkKind::Overhead => {
            let per_mw = costs.hvdc.overhead_per_mw_km * link.length_km
                + costs.hvdc.overhead_converter_per_mw;
            per_mw * capacity_gw * 1e3
        }
        LinkKind::Submarine => costs.hvdc.submarine_per_kw * capacity_gw * 1e6,
    };
    capital
        * (1.0 + link.reserve_fraction)
        * capital_recovery_factor(costs.discount_rate_real, costs.hvdc.lifetime_years)
}

/// Annualized HVAC connection cost for a zone's installed generation.
pub fn hvac_connection_cost(rate_per_kw: f64, installed_gw: f64, costs: &TechnologyCosts) -> f64 {
    rate_per_kw
        * installed_gw
        * 1e6
        * capital_recovery_factor(costs.discount_rate_real, costs.hvac.lifetime_years)
}
