//! k-frequency tables and ablation comparisons.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, Variant};
use crate::harness::scene::Scene;
use crate::harness::train::train;

#[derive(Clone, Debug, PartialEq)]
pub struct KRow {
    pub k: usize,
    pub count: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KTable {
    pub rows: Vec<KRow>,
    pub total: usize,
}

impl KTable {
    pub fn probability_of(&self, ks: &[usize]) -> f64 {
        self.rows.iter().filter(|r| ks.contains(&r.k)).map(|r| r.probability).sum()
    }
}

impl fmt::Display for KTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k\tcount\tfrequency")?;
        for r in &self.rows {
            writeln!(f, "{}\t{}\t{:.1}%", r.k, r.count, 100.0 * r.probability)?;
        }
        writeln!(f, "total\t{}\t100.0%", self.total)
    }
}

/// Counts per candidate; values outside `candidates` get their own rows.
pub fn k_table(ks: impl IntoIterator<Item = usize>, candidates: &[usize]) -> KTable {
    let mut counts: BTreeMap<usize, usize> = candidates.iter().map(|&k| (k, 0)).collect();
    for k in ks {
        *counts.entry(k).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let rows = counts
        .into_iter()
        .map(|(k, count)| KRow { k, count, probability: if total == 0 { 0.0 } else { count as f64 / total as f64 } })
        .collect();
    KTable { rows, total }
}

/// Frequency table from a decisions CSV (`query_index,k,...`).
pub fn k_stats(csv: &str, candidates: &[usize]) -> Result<KTable> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty decisions CSV".into()))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == "k")
        .ok_or_else(|| Error::Parse("decisions CSV has no `k` column".into()))?;
    let ks: Vec<usize> = lines
        .enumerate()
        .map(|(i, l)| {
            let field = l.split(',').nth(col).ok_or_else(|| Error::Parse(format!("row {}: missing k", i + 1)))?;
            field.trim().parse().map_err(|e| Error::Parse(format!("row {}: k `{field}`: {e}", i + 1)))
        })
        .collect::<Result<_>>()?;
    Ok(k_table(ks, candidates))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub iou: f64,
    pub miou: f64,
    /// Mean single-run wall clock, seconds.
    pub latency: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>8} {:>8} {:>10} {:>6}", "variant", "IoU", "mIoU", "latency_s", "seeds")?;
        for r in &self.rows {
            writeln!(f, "{:<22} {:>8.2} {:>8.2} {:>10.3} {:>6}", r.label, 100.0 * r.iou, 100.0 * r.miou, r.latency, r.seeds)?;
        }
        Ok(())
    }
}

/// One training run per variant and seed on the same scene; means over seeds.
pub fn ablate(base: &RunConfig, scene: &Scene, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let (mut iou, mut miou, mut lat) = (0.0, 0.0, 0.0);
        for &seed in seeds {
            let mut cfg = v.apply(base);
            cfg.seed = seed;
            let t0 = Instant::now();
            let r = train(&cfg, scene, None)?;
            lat += t0.elapsed().as_secs_f64();
            iou += r.metrics.iou;
            miou += r.metrics.miou;
            log::info!("{} seed {seed}: IoU {:.4} mIoU {:.4}", v.label(), r.metrics.iou, r.metrics.miou);
        }
        let n = seeds.len() as f64;
        rows.push(AblationRow { label: v.label(), iou: iou / n, miou: miou / n, latency: lat / n, seeds: seeds.len() });
    }
    Ok(AblationTable { rows })
}
