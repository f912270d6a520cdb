use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CmpOp, Literal, LogicalQuery, QueryError};
use crate::fingerprint::fnv1a;

/// Selinger's fallback when no statistics exist for a predicate.
pub const DEFAULT_SELECTIVITY: f64 = 0.1;

/// Equi-width bucket count for generated histograms.
pub const HISTOGRAM_BUCKETS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramKind {
    /// Buckets over the numeric value domain.
    Numeric,
    /// Buckets over `fnv1a(value) % buckets`, for string columns.
    Hashed,
}

/// Equi-width histogram over one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub kind: HistogramKind,
    /// `counts.len() + 1` strictly increasing bucket edges.
    pub boundaries: Vec<f64>,
    pub counts: Vec<u64>,
    /// Distinct-value estimate.
    pub distinct: u64,
}

impl Histogram {
    /// Uniformly filled numeric histogram over `[min, max]`.
    pub fn uniform(min: f64, max: f64, rows: u64, distinct: u64) -> Self {
        assert!(max > min, "empty histogram domain");
        let n = HISTOGRAM_BUCKETS;
        let width = (max - min) / n as f64;
        let mut boundaries: Vec<f64> = (0..n).map(|i| min + width * i as f64).collect();
        boundaries.push(max);
        Self { kind: HistogramKind::Numeric, boundaries, counts: spread(rows, n), distinct }
    }

    /// Uniform string-column histogram over hash buckets.
    pub fn hashed_uniform(rows: u64, distinct: u64) -> Self {
        let n = HISTOGRAM_BUCKETS;
        Self {
            kind: HistogramKind::Hashed,
            boundaries: (0..=n).map(|i| i as f64).collect(),
            counts: spread(rows, n),
            distinct,
        }
    }

    /// Builds a numeric histogram from raw values; the maximum lands in the
    /// last bucket.
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            max = min + 1.0;
        }
        let mut h = Self::uniform(min, max, 0, 0);
        h.counts = vec![0; HISTOGRAM_BUCKETS];
        for &v in values {
            let b = h.bucket_of(v).unwrap_or(HISTOGRAM_BUCKETS - 1);
            h.counts[b] += 1;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        h.distinct = sorted.len() as u64;
        h
    }

    pub fn rows(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn max(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    fn bucket_of(&self, v: f64) -> Option<usize> {
        if v < self.min() || v > self.max() {
            return None;
        }
        let idx = self.boundaries.partition_point(|b| *b <= v);
        Some(idx.saturating_sub(1).min(self.counts.len() - 1))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.counts.is_empty() || self.boundaries.len() != self.counts.len() + 1 {
            return Err("boundaries must have one more entry than counts".into());
        }
        if self.boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("boundaries must be strictly increasing".into());
        }
        Ok(())
    }

    /// Fraction of rows with value strictly below `v`, linear inside buckets.
    fn fraction_below(&self, v: f64) -> f64 {
        let rows = self.rows() as f64;
        if rows == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = (self.boundaries[i], self.boundaries[i + 1]);
            if v >= hi {
                acc += c as f64;
            } else if v > lo {
                acc += c as f64 * (v - lo) / (hi - lo);
            }
        }
        acc / rows
    }

    fn distinct_per_bucket(&self) -> f64 {
        let nonempty = self.counts.iter().filter(|c| **c > 0).count().max(1);
        (self.distinct as f64 / nonempty as f64).max(1.0)
    }

    fn fraction_equal_bucket(&self, b: usize) -> f64 {
        let rows = self.rows() as f64;
        if rows == 0.0 {
            return 0.0;
        }
        self.counts[b] as f64 / rows / self.distinct_per_bucket()
    }

    /// Selectivity of `column op literal`, or `None` when this histogram
    /// cannot answer it (type mismatch, vector operators).
    pub fn selectivity(&self, op: CmpOp, literal: &Literal) -> Option<f64> {
        let sel = match (self.kind, literal) {
            (HistogramKind::Numeric, Literal::Number(v)) => {
                let v = *v;
                let eq = self.bucket_of(v).map_or(0.0, |b| self.fraction_equal_bucket(b));
                let below = self.fraction_below(v);
                match op {
                    CmpOp::Eq => eq,
                    CmpOp::Ne => 1.0 - eq,
                    CmpOp::Lt => below,
                    CmpOp::Le => below + eq,
                    CmpOp::Gt => 1.0 - below - eq,
                    CmpOp::Ge => 1.0 - below,
                    CmpOp::VectorDistance => return None,
                }
            }
            (HistogramKind::Hashed, Literal::Str(s)) => {
                let b = (fnv1a(s.as_bytes()) % self.counts.len() as u64) as usize;
                let eq = self.fraction_equal_bucket(b);
                match op {
                    CmpOp::Eq => eq,
                    CmpOp::Ne => 1.0 - eq,
                    _ => return None,
                }
            }
            _ => return None,
        };
        Some(sel.clamp(0.0, 1.0))
    }
}

fn spread(rows: u64, n: usize) -> Vec<u64> {
    let base = rows / n as u64;
    let extra = (rows % n as u64) as usize;
    (0..n).map(|i| base + u64::from(i < extra)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub size_bytes: u64,
    #[serde(default)]
    pub columns: BTreeMap<String, Histogram>,
}

/// Per-table statistics the planner reasons over.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetCatalog {
    pub tables: BTreeMap<String, TableStats>,
}

impl DatasetCatalog {
    pub fn table(&self, name: &str) -> Result<&TableStats, QueryError> {
        self.tables.get(name).ok_or_else(|| QueryError::UnknownTable(name.to_string()))
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn histogram(&self, table: &str, column: &str) -> Option<&Histogram> {
        self.tables.get(table).and_then(|t| t.columns.get(column))
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        for (name, t) in &self.tables {
            if t.row_count == 0 || t.size_bytes == 0 {
                return Err(QueryError::InvalidCatalog(format!(
                    "table `{name}` must have positive row count and size"
                )));
            }
            for (col, h) in &t.columns {
                h.validate()
                    .map_err(|e| QueryError::InvalidCatalog(format!("{name}.{col}: {e}")))?;
                if h.rows() != t.row_count {
                    return Err(QueryError::InvalidCatalog(format!(
                        "{name}.{col}: histogram counts sum to {} but table has {} rows",
                        h.rows(),
                        t.row_count
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, QueryError> {
        let cat: Self = serde_json::from_str(text)
            .map_err(|e| QueryError::InvalidCatalog(e.to_string()))?;
        cat.validate()?;
        Ok(cat)
    }
}

/// Per-operation selectivities of one query.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectivityEstimates {
    /// Combined filter selectivity of each table's scan (1.0 without filters).
    pub scans: BTreeMap<String, f64>,
    /// One entry per join predicate, in query order.
    pub joins: Vec<f64>,
    /// Present when the query aggregates or groups.
    pub aggregate: Option<f64>,
    /// Number of predicates that fell back to [`DEFAULT_SELECTIVITY`].
    pub fallbacks: usize,
}

impl SelectivityEstimates {
    /// Independence product over every predicate.
    pub fn combined(&self) -> f64 {
        self.scans.values().product::<f64>() * self.joins.iter().product::<f64>()
    }
}

pub fn estimate_selectivity(
    q: &LogicalQuery,
    cat: &DatasetCatalog,
) -> Result<SelectivityEstimates, QueryError> {
    let mut est = SelectivityEstimates::default();
    for t in &q.tables {
        cat.table(t)?;
        est.scans.insert(t.clone(), 1.0);
    }
    for p in &q.filter_predicates {
        let sel = match cat
            .histogram(&p.column.table, &p.column.column)
            .and_then(|h| h.selectivity(p.op, &p.literal))
        {
            Some(s) => s,
            None => {
                est.fallbacks += 1;
                DEFAULT_SELECTIVITY
            }
        };
        let slot = est.scans.get_mut(&p.column.table).expect("filter on listed table");
        *slot = (*slot * sel).clamp(0.0, 1.0);
    }
    for j in &q.join_predicates {
        let l = cat.histogram(&j.left.table, &j.left.column);
        let r = cat.histogram(&j.right.table, &j.right.column);
        let sel = match (l, r) {
            (Some(l), Some(r)) => 1.0 / (l.distinct.max(r.distinct).max(1) as f64),
            _ => {
                est.fallbacks += 1;
                DEFAULT_SELECTIVITY
            }
        };
        est.joins.push(sel.clamp(0.0, 1.0));
    }
    if q.has_aggregation() {
        est.aggregate = Some(1.0);
    }
    Ok(est)
}

/// Compact features for nearest-neighbor lookups: table count, join count,
/// summed log10 row counts, and combined selectivity.
pub fn aggregate_features(q: &LogicalQuery, cat: &DatasetCatalog) -> Result<[f64; 4], QueryError> {
    let est = estimate_selectivity(q, cat)?;
    let mut log_rows = 0.0;
    for t in &q.tables {
        log_rows += (cat.table(t)?.row_count.max(1) as f64).log10();
    }
    Ok([q.tables.len() as f64, q.join_predicates.len() as f64, log_rows, est.combined()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn catalog() -> DatasetCatalog {
        let mut cat = DatasetCatalog::default();
        let mut a = TableStats { row_count: 64_000, size_bytes: 1 << 20, columns: BTreeMap::new() };
        a.columns.insert("a".into(), Histogram::uniform(0.0, 100.0, 64_000, 100));
        a.columns.insert("id".into(), Histogram::uniform(0.0, 1000.0, 64_000, 1000));
        a.columns.insert("s".into(), Histogram::hashed_uniform(64_000, 640));
        cat.tables.insert("t".into(), a);
        let mut b = TableStats { row_count: 6_400, size_bytes: 1 << 16, columns: BTreeMap::new() };
        b.columns.insert("id".into(), Histogram::uniform(0.0, 200.0, 6_400, 200));
        cat.tables.insert("u".into(), b);
        cat
    }

    #[test]
    fn boundary_selectivities() {
        let h = Histogram::uniform(0.0, 100.0, 64_000, 100);
        assert_eq!(h.selectivity(CmpOp::Gt, &Literal::Number(100.0)), Some(0.0));
        assert_eq!(h.selectivity(CmpOp::Ge, &Literal::Number(0.0)), Some(1.0));
        assert_eq!(h.selectivity(CmpOp::Lt, &Literal::Number(-5.0)), Some(0.0));
        assert_eq!(h.selectivity(CmpOp::Eq, &Literal::Number(500.0)), Some(0.0));
    }

    #[test]
    fn uniform_half_range() {
        // 64 buckets of width 100/64; 50 sits on a bucket edge, so 32 full buckets.
        let h = Histogram::uniform(0.0, 100.0, 64_000, 100);
        let s = h.selectivity(CmpOp::Lt, &Literal::Number(50.0)).unwrap();
        assert!((s - 0.5).abs() < 1e-12, "{s}");
    }

    #[test]
    fn join_uses_larger_distinct_count() {
        let mut cat = catalog();
        cat.tables.get_mut("t").unwrap().columns.insert(
            "k".into(),
            Histogram::uniform(0.0, 1.0, 64_000, 1000),
        );
        cat.tables.get_mut("u").unwrap().columns.insert(
            "k".into(),
            Histogram::uniform(0.0, 1.0, 6_400, 200),
        );
        let q = parse_query("SELECT t.a FROM t, u WHERE t.k = u.k").unwrap();
        let est = estimate_selectivity(&q, &cat).unwrap();
        assert_eq!(est.joins, vec![1.0 / 1000.0]);
    }

    #[test]
    fn missing_histogram_falls_back() {
        let q = parse_query("SELECT t.a FROM t WHERE t.nope = 3").unwrap();
        let est = estimate_selectivity(&q, &catalog()).unwrap();
        assert_eq!(est.scans["t"], DEFAULT_SELECTIVITY);
        assert_eq!(est.fallbacks, 1);
    }

    #[test]
    fn conjuncts_multiply() {
        let cat = catalog();
        let one = estimate_selectivity(&parse_query("SELECT a FROM t WHERE a < 50").unwrap(), &cat)
            .unwrap();
        let two = estimate_selectivity(
            &parse_query("SELECT a FROM t WHERE a < 50 AND id < 250").unwrap(),
            &cat,
        )
        .unwrap();
        assert!((two.scans["t"] - one.scans["t"] * 0.25).abs() < 1e-12);
    }

    #[test]
    fn string_equality_uses_hash_buckets() {
        let cat = catalog();
        let est =
            estimate_selectivity(&parse_query("SELECT a FROM t WHERE s = 'x'").unwrap(), &cat)
                .unwrap();
        // 1000 rows per bucket over 64k rows, 10 distinct values per bucket
        assert!((est.scans["t"] - 1.0 / 640.0).abs() < 1e-12);
        let range =
            estimate_selectivity(&parse_query("SELECT a FROM t WHERE s < 'x'").unwrap(), &cat)
                .unwrap();
        assert_eq!(range.scans["t"], DEFAULT_SELECTIVITY);
    }

    #[test]
    fn unknown_table_is_an_error() {
        let q = parse_query("SELECT a FROM nope").unwrap();
        assert_eq!(estimate_selectivity(&q, &catalog()), Err(QueryError::UnknownTable("nope".into())));
    }

    #[test]
    fn catalog_validation() {
        let mut cat = catalog();
        assert!(cat.validate().is_ok());
        cat.tables.get_mut("u").unwrap().row_count = 1;
        assert!(cat.validate().is_err());
        let json = serde_json::to_string(&catalog()).unwrap();
        assert_eq!(DatasetCatalog::from_json(&json).unwrap(), catalog());
    }

    #[test]
    fn from_values_matches_counts() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let h = Histogram::from_values(&values);
        assert_eq!(h.rows(), 100);
        assert_eq!(h.distinct, 100);
        assert!(h.validate().is_ok());
    }
}
