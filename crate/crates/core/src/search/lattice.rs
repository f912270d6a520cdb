use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::blueprint::{EngineId, Provisioning};
use crate::scoring::PricingCatalog;

/// Instance types per engine, ordered by size, with node-count bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningLattice {
    /// `(name, vcpus)` per engine, smallest first.
    pub instance_types: BTreeMap<EngineId, Vec<(String, u32)>>,
    pub min_nodes: BTreeMap<EngineId, u32>,
    pub max_nodes: BTreeMap<EngineId, u32>,
    pub radius: usize,
}

impl ProvisioningLattice {
    pub fn from_pricing(pricing: &PricingCatalog, radius: usize) -> Self {
        let mut instance_types = BTreeMap::new();
        let mut min_nodes = BTreeMap::new();
        let mut max_nodes = BTreeMap::new();
        for e in [EngineId::RowStore, EngineId::Warehouse] {
            instance_types.insert(e, pricing.instances(e).iter().map(|i| (i.name.clone(), i.vcpus)).collect());
            min_nodes.insert(e, 1);
            max_nodes.insert(e, 64);
        }
        Self { instance_types, min_nodes, max_nodes, radius }
    }

    fn types(&self, e: EngineId) -> &[(String, u32)] {
        self.instance_types.get(&e).map_or(&[], Vec::as_slice)
    }

    /// Single-step moves from `p`: one instance-type index either way, or a
    /// node count of half, double or zero. A paused engine can only unpause.
    fn steps(&self, p: &Provisioning) -> Vec<Provisioning> {
        let types = self.types(p.engine);
        let Some(i) = types.iter().position(|(n, _)| *n == p.instance_type) else {
            return vec![p.clone()];
        };
        let min = self.min_nodes.get(&p.engine).copied().unwrap_or(1).max(1);
        let max = self.max_nodes.get(&p.engine).copied().unwrap_or(u32::MAX);
        let at = |j: usize, nodes: u32| Provisioning::new(p.engine, types[j].0.clone(), nodes, types[j].1);
        let mut out = vec![p.clone()];
        if p.node_count == 0 {
            out.push(at(i, min));
            return out;
        }
        if i > 0 {
            out.push(at(i - 1, p.node_count));
        }
        if i + 1 < types.len() {
            out.push(at(i + 1, p.node_count));
        }
        let half = p.node_count / 2;
        if half >= min {
            out.push(at(i, half));
        }
        if p.node_count.saturating_mul(2) <= max {
            out.push(at(i, p.node_count * 2));
        }
        out.push(at(i, 0));
        out
    }

    /// Provisionings reachable from `p` in at most `radius` steps.
    pub fn options(&self, p: &Provisioning) -> Vec<Provisioning> {
        if p.engine.is_serverless() {
            return vec![p.clone()];
        }
        let key = |q: &Provisioning| {
            let idx = self.types(q.engine).iter().position(|(n, _)| *n == q.instance_type).unwrap_or(usize::MAX);
            (idx, q.node_count, q.instance_type.clone())
        };
        let mut seen: BTreeMap<(usize, u32, String), Provisioning> = BTreeMap::new();
        seen.insert(key(p), p.clone());
        let mut frontier = vec![p.clone()];
        for _ in 0..self.radius {
            let mut next = Vec::new();
            for f in &frontier {
                for s in self.steps(f) {
                    let k = key(&s);
                    if !seen.contains_key(&k) {
                        seen.insert(k, s.clone());
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        seen.into_values().collect()
    }
}

/// Cartesian product of per-engine neighbourhoods, in engine order.
pub fn enumerate_neighbor_provisionings(
    current: &BTreeMap<EngineId, Provisioning>,
    lattice: &ProvisioningLattice,
) -> Vec<BTreeMap<EngineId, Provisioning>> {
    let mut combos: Vec<BTreeMap<EngineId, Provisioning>> = vec![BTreeMap::new()];
    for (e, p) in current {
        let opts = lattice.options(p);
        let mut next = Vec::with_capacity(combos.len() * opts.len());
        for c in &combos {
            for o in &opts {
                let mut m = c.clone();
                m.insert(*e, o.clone());
                next.push(m);
            }
        }
        combos = next;
    }
    let mut seen = BTreeSet::new();
    combos.retain(|c| seen.insert(format!("{c:?}")));
    combos
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(r: usize) -> ProvisioningLattice {
        let types: Vec<(String, u32)> = (0..5).map(|i| (format!("r{i}"), 2 << i)).collect();
        ProvisioningLattice {
            instance_types: BTreeMap::from([(EngineId::RowStore, types.clone()), (EngineId::Warehouse, types)]),
            min_nodes: BTreeMap::new(),
            max_nodes: BTreeMap::new(),
            radius: r,
        }
    }

    fn row(i: usize, n: u32) -> Provisioning {
        Provisioning::new(EngineId::RowStore, format!("r{i}"), n, 2 << i)
    }

    #[test]
    fn one_step_from_middle_type() {
        let got: BTreeSet<(String, u32)> =
            lattice(1).options(&row(2, 1)).into_iter().map(|p| (p.instance_type, p.node_count)).collect();
        let want: BTreeSet<(String, u32)> =
            [("r1", 1), ("r2", 1), ("r3", 1), ("r2", 2), ("r2", 0)].map(|(a, b)| (a.to_string(), b)).into();
        assert_eq!(got, want);
    }

    #[test]
    fn radius_zero_is_identity() {
        let cur = BTreeMap::from([(EngineId::RowStore, row(2, 1)), (EngineId::ScanService, Provisioning::serverless())]);
        assert_eq!(enumerate_neighbor_provisionings(&cur, &lattice(0)), vec![cur]);
    }

    #[test]
    fn paused_engine_can_unpause() {
        let paused = Provisioning::new(EngineId::Warehouse, "r3", 0, 16);
        let opts = lattice(1).options(&paused);
        assert_eq!(opts.len(), 2);
        assert!(opts.iter().any(|p| p.node_count == 1 && p.instance_type == "r3"));
    }

    #[test]
    fn product_is_deduplicated_and_contains_current() {
        let cur = BTreeMap::from([
            (EngineId::RowStore, row(0, 1)),
            (EngineId::Warehouse, Provisioning::new(EngineId::Warehouse, "r1", 2, 4)),
            (EngineId::ScanService, Provisioning::serverless()),
        ]);
        let all = enumerate_neighbor_provisionings(&cur, &lattice(1));
        // RowStore: r0x1, r1x1, r0x2, r0x0; Warehouse: r0x2, r1x2, r2x2, r1x1, r1x4, r1x0.
        assert_eq!(all.len(), 4 * 6);
        assert!(all.contains(&cur));
        let again = enumerate_neighbor_provisionings(&cur, &lattice(1));
        assert_eq!(all, again);
    }
}
