//! Blueprint data model: which engines run, how they are provisioned, where
//! tables live, and how queries are routed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::fnv1a;
use crate::query::{detect_capabilities, DatasetCatalog, LogicalQuery, QueryId};
use crate::router::RoutingForest;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlueprintError {
    #[error("no eligible engine for query {0}")]
    EmptyEligibleSet(QueryId),
    #[error("invalid blueprint document: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EngineId {
    /// Transactional row store; the only engine that accepts writes.
    RowStore,
    /// Provisioned columnar warehouse.
    Warehouse,
    /// Serverless pay-per-scan engine.
    ScanService,
}

impl EngineId {
    pub const ALL: [EngineId; 3] = [EngineId::RowStore, EngineId::Warehouse, EngineId::ScanService];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> EngineId {
        Self::ALL[i]
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }

    pub fn is_transactional(self) -> bool {
        self == EngineId::RowStore
    }

    pub fn is_serverless(self) -> bool {
        self == EngineId::ScanService
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EngineId::RowStore => "RowStore",
            EngineId::Warehouse => "Warehouse",
            EngineId::ScanService => "ScanService",
        };
        f.write_str(s)
    }
}

/// Compute configuration of one engine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provisioning {
    pub engine: EngineId,
    pub instance_type: String,
    /// Zero means paused (or serverless for [`EngineId::ScanService`]).
    pub node_count: u32,
    pub vcpus_per_node: u32,
}

impl Provisioning {
    pub fn new(engine: EngineId, instance_type: impl Into<String>, node_count: u32, vcpus_per_node: u32) -> Self {
        Self { engine, instance_type: instance_type.into(), node_count, vcpus_per_node }
    }

    pub fn serverless() -> Self {
        Self::new(EngineId::ScanService, "serverless", 0, 1)
    }

    pub fn total_vcpus(&self) -> u32 {
        self.node_count * self.vcpus_per_node
    }

    /// Whether the engine can execute queries under this provisioning.
    pub fn is_active(&self) -> bool {
        self.engine.is_serverless() || self.node_count > 0
    }
}

impl fmt::Display for Provisioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.engine.is_serverless() {
            write!(f, "{}(serverless)", self.engine)
        } else if self.node_count == 0 {
            write!(f, "{}(paused)", self.engine)
        } else {
            write!(f, "{}({} x {})", self.engine, self.node_count, self.instance_type)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TablePlacement {
    pub placement: BTreeMap<String, BTreeSet<EngineId>>,
    pub writer: BTreeMap<String, EngineId>,
}

impl TablePlacement {
    pub fn holds(&self, table: &str, engine: EngineId) -> bool {
        self.placement.get(table).is_some_and(|s| s.contains(&engine))
    }

    /// Engines holding every table in the placement.
    pub fn colocated_engines(&self) -> BTreeSet<EngineId> {
        EngineId::ALL
            .into_iter()
            .filter(|e| self.placement.values().all(|s| s.contains(e)))
            .collect()
    }
}

/// Pre-planned query assignments plus the online fallback policy.
///
/// Equality and serialization consider only the assignments; the forest is
/// attached at plan time and travels separately.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub assignments: BTreeMap<QueryId, EngineId>,
    #[serde(skip)]
    pub online_policy: Option<Arc<RoutingForest>>,
}

impl PartialEq for RoutingPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.assignments == other.assignments
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub engines: BTreeSet<EngineId>,
    pub provisionings: BTreeMap<EngineId, Provisioning>,
    #[serde(flatten)]
    pub placement: TablePlacement,
    #[serde(flatten)]
    pub routing: RoutingPolicy,
}

impl Blueprint {
    pub fn provisioning(&self, e: EngineId) -> Option<&Provisioning> {
        self.provisionings.get(&e)
    }

    pub fn is_active(&self, e: EngineId) -> bool {
        self.engines.contains(&e) && self.provisioning(e).is_some_and(Provisioning::is_active)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("blueprint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BlueprintError> {
        serde_json::from_str(text).map_err(|e| BlueprintError::Json(e.to_string()))
    }

    /// Stable hash of the serialized document.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(serde_json::to_string(self).expect("blueprint serializes").as_bytes())
    }

    /// Same infrastructure (engines, provisionings, placement), ignoring routing.
    pub fn same_infrastructure(&self, other: &Blueprint) -> bool {
        self.engines == other.engines
            && self.provisionings == other.provisionings
            && self.placement == other.placement
    }

    /// Builds a blueprint whose placement follows its routing: every table
    /// has a copy on the RowStore (its writer and the co-located engine),
    /// plus a copy on each engine a query touching it is routed to.
    pub fn derived(
        provisionings: BTreeMap<EngineId, Provisioning>,
        assignments: BTreeMap<QueryId, EngineId>,
        queries: &[LogicalQuery],
        catalog: &DatasetCatalog,
    ) -> Blueprint {
        let mut placement = TablePlacement::default();
        for t in catalog.table_names() {
            placement.placement.insert(t.to_string(), BTreeSet::from([EngineId::RowStore]));
            placement.writer.insert(t.to_string(), EngineId::RowStore);
        }
        for q in queries {
            if let Some(e) = assignments.get(&q.id) {
                for t in &q.tables {
                    placement.placement.entry(t.clone()).or_default().insert(*e);
                }
            }
        }
        Blueprint {
            engines: provisionings.keys().copied().collect(),
            provisionings,
            placement,
            routing: RoutingPolicy { assignments, online_policy: None },
        }
    }
}

/// Keyword → engines that support it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapabilityConfig(pub BTreeMap<String, BTreeSet<EngineId>>);

impl CapabilityConfig {
    pub fn from_json(text: &str) -> Result<Self, BlueprintError> {
        serde_json::from_str(text).map_err(|e| BlueprintError::Json(e.to_string()))
    }

    /// Bitmask of engines allowed to run `q` given its capability keywords.
    pub fn allowed_mask(&self, q: &LogicalQuery) -> u8 {
        let mut mask = 0b111;
        for (kw, engines) in &self.0 {
            let used = q.capability_tokens.iter().any(|t| t == kw)
                || !detect_capabilities(&q.sql, std::slice::from_ref(kw)).is_empty();
            if used {
                mask &= engines.iter().fold(0, |m, e| m | e.bit());
            }
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MissingProvisioning(EngineId),
    ProvisioningOutsideEngineSet(EngineId),
    ProvisioningEngineMismatch(EngineId),
    ServerlessWithNodes,
    UnknownTable(String),
    UnplacedTable(String),
    PlacementOutsideEngineSet { table: String, engine: EngineId },
    MissingWriter(String),
    WriterNotInPlacement(String),
    WriterPaused(String),
    NoColocatedEngine,
    AssignmentToInactiveEngine { query: QueryId, engine: EngineId },
    AssignmentMissingTable { query: QueryId, engine: EngineId, table: String },
}

impl Violation {
    /// Short rule name.
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::MissingProvisioning(_) => "engine without provisioning",
            Violation::ProvisioningOutsideEngineSet(_) => "provisioning for engine outside set",
            Violation::ProvisioningEngineMismatch(_) => "provisioning engine mismatch",
            Violation::ServerlessWithNodes => "serverless engine with nodes",
            Violation::UnknownTable(_) => "unknown table",
            Violation::UnplacedTable(_) => "table not placed",
            Violation::PlacementOutsideEngineSet { .. } => "placement outside engine set",
            Violation::MissingWriter(_) => "table without writer",
            Violation::WriterNotInPlacement(_) => "writer not in placement",
            Violation::WriterPaused(_) => "writer engine paused",
            Violation::NoColocatedEngine => "no co-located engine",
            Violation::AssignmentToInactiveEngine { .. } => "assignment to inactive engine",
            Violation::AssignmentMissingTable { .. } => "assigned engine lacks table",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule())?;
        match self {
            Violation::MissingProvisioning(e)
            | Violation::ProvisioningOutsideEngineSet(e)
            | Violation::ProvisioningEngineMismatch(e) => write!(f, " ({e})"),
            Violation::UnknownTable(t)
            | Violation::UnplacedTable(t)
            | Violation::MissingWriter(t)
            | Violation::WriterNotInPlacement(t)
            | Violation::WriterPaused(t) => write!(f, " ({t})"),
            Violation::PlacementOutsideEngineSet { table, engine } => write!(f, " ({table} on {engine})"),
            Violation::AssignmentToInactiveEngine { query, engine } => write!(f, " ({query} -> {engine})"),
            Violation::AssignmentMissingTable { query, engine, table } => {
                write!(f, " ({query} -> {engine} without {table})")
            }
            Violation::ServerlessWithNodes | Violation::NoColocatedEngine => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule() == rule)
    }
}

/// Checks structural invariants. Violations are data, never errors.
pub fn validate_blueprint(bp: &Blueprint, catalog: &DatasetCatalog) -> ValidationReport {
    let mut v = Vec::new();
    for e in &bp.engines {
        if !bp.provisionings.contains_key(e) {
            v.push(Violation::MissingProvisioning(*e));
        }
    }
    for (e, p) in &bp.provisionings {
        if !bp.engines.contains(e) {
            v.push(Violation::ProvisioningOutsideEngineSet(*e));
        }
        if p.engine != *e {
            v.push(Violation::ProvisioningEngineMismatch(*e));
        }
        if e.is_serverless() && p.node_count != 0 {
            v.push(Violation::ServerlessWithNodes);
        }
    }
    for (t, engines) in &bp.placement.placement {
        if !catalog.tables.contains_key(t) {
            v.push(Violation::UnknownTable(t.clone()));
        }
        if engines.is_empty() {
            v.push(Violation::UnplacedTable(t.clone()));
        }
        for e in engines {
            if !bp.engines.contains(e) {
                v.push(Violation::PlacementOutsideEngineSet { table: t.clone(), engine: *e });
            }
        }
    }
    for t in catalog.table_names() {
        if !bp.placement.placement.contains_key(t) {
            v.push(Violation::UnplacedTable(t.to_string()));
        }
        match bp.placement.writer.get(t) {
            None => v.push(Violation::MissingWriter(t.to_string())),
            Some(w) => {
                if !bp.placement.holds(t, *w) {
                    v.push(Violation::WriterNotInPlacement(t.to_string()));
                }
                if !bp.is_active(*w) {
                    v.push(Violation::WriterPaused(t.to_string()));
                }
            }
        }
    }
    if !bp.placement.placement.is_empty() && bp.placement.colocated_engines().is_empty() {
        v.push(Violation::NoColocatedEngine);
    }
    for (q, e) in &bp.routing.assignments {
        if !bp.is_active(*e) {
            v.push(Violation::AssignmentToInactiveEngine { query: q.clone(), engine: *e });
        }
    }
    ValidationReport { violations: v }
}

/// Checks that every assigned query's engine holds the tables it reads.
pub fn validate_routing(bp: &Blueprint, queries: &[LogicalQuery]) -> ValidationReport {
    let mut v = Vec::new();
    for q in queries {
        if let Some(e) = bp.routing.assignments.get(&q.id) {
            for t in &q.tables {
                if !bp.placement.holds(t, *e) {
                    v.push(Violation::AssignmentMissingTable {
                        query: q.id.clone(),
                        engine: *e,
                        table: t.clone(),
                    });
                }
            }
        }
    }
    ValidationReport { violations: v }
}

/// Engines that hold every table `q` reads, are running, and support every
/// capability keyword `q` uses.
pub fn eligible_engines(
    q: &LogicalQuery,
    bp: &Blueprint,
    caps: &CapabilityConfig,
) -> Result<BTreeSet<EngineId>, BlueprintError> {
    let allowed = caps.allowed_mask(q);
    let set: BTreeSet<EngineId> = EngineId::ALL
        .into_iter()
        .filter(|e| allowed & e.bit() != 0)
        .filter(|e| bp.is_active(*e))
        .filter(|e| q.tables.iter().all(|t| bp.placement.holds(t, *e)))
        .collect();
    if set.is_empty() {
        Err(BlueprintError::EmptyEligibleSet(q.id.clone()))
    } else {
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// RowStore instance replaced or added.
    InstanceChange,
    /// Warehouse node count change on the same instance type.
    ElasticResize,
    /// Warehouse instance type change.
    ClassicResize,
    Pause,
    Unpause,
    /// RowStore replica removal.
    ReplicaRemove,
}

impl ChangeKind {
    /// Changes the next blueprint does not wait for.
    pub fn is_instant(self) -> bool {
        matches!(self, ChangeKind::Pause | ChangeKind::ReplicaRemove)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMove {
    pub table: String,
    pub source: EngineId,
    pub dest: EngineId,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningChange {
    pub engine: EngineId,
    pub old: Provisioning,
    pub new: Provisioning,
    pub kind: ChangeKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionPlan {
    pub table_moves: Vec<TableMove>,
    pub provisioning_changes: Vec<ProvisioningChange>,
}

impl TransitionPlan {
    pub fn is_empty(&self) -> bool {
        self.table_moves.is_empty() && self.provisioning_changes.is_empty()
    }
}

/// Classifies a provisioning difference; `None` when nothing changes.
pub fn classify_change(old: &Provisioning, new: &Provisioning) -> Option<ChangeKind> {
    if old == new || old.engine.is_serverless() {
        return None;
    }
    match (old.node_count, new.node_count) {
        (0, 0) => None,
        (_, 0) => Some(ChangeKind::Pause),
        (0, _) => Some(ChangeKind::Unpause),
        (o, n) => match old.engine {
            EngineId::RowStore if old.instance_type != new.instance_type => Some(ChangeKind::InstanceChange),
            EngineId::RowStore if n > o => Some(ChangeKind::InstanceChange),
            EngineId::RowStore => Some(ChangeKind::ReplicaRemove),
            EngineId::Warehouse if old.instance_type != new.instance_type => Some(ChangeKind::ClassicResize),
            EngineId::Warehouse => Some(ChangeKind::ElasticResize),
            EngineId::ScanService => None,
        },
    }
}

/// Table copies to create and provisioning changes to apply when moving
/// from `current` to `candidate`. Replica drops need no entry.
pub fn diff_blueprints(current: &Blueprint, candidate: &Blueprint, catalog: &DatasetCatalog) -> TransitionPlan {
    let mut plan = TransitionPlan::default();
    for (table, engines) in &candidate.placement.placement {
        for dest in engines {
            if current.placement.holds(table, *dest) {
                continue;
            }
            let source = current
                .placement
                .writer
                .get(table)
                .or_else(|| candidate.placement.writer.get(table))
                .copied()
                .unwrap_or(EngineId::RowStore);
            let bytes = catalog.tables.get(table).map_or(0, |t| t.size_bytes);
            plan.table_moves.push(TableMove { table: table.clone(), source, dest: *dest, bytes });
        }
    }
    for (e, new) in &candidate.provisionings {
        let old = current
            .provisionings
            .get(e)
            .cloned()
            .unwrap_or_else(|| Provisioning { node_count: 0, ..new.clone() });
        if let Some(kind) = classify_change(&old, new) {
            plan.provisioning_changes.push(ProvisioningChange { engine: *e, old, new: new.clone(), kind });
        }
    }
    for (e, old) in &current.provisionings {
        if !candidate.provisionings.contains_key(e) && old.is_active() && !e.is_serverless() {
            let new = Provisioning { node_count: 0, ..old.clone() };
            plan.provisioning_changes.push(ProvisioningChange { engine: *e, old: old.clone(), new, kind: ChangeKind::Pause });
        }
    }
    plan
}
