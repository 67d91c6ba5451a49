//! Training samples harvested from exact search traces.
//!
//! A sample is the node's attributes at pop time, normalized, labelled 1 iff
//! the node lies on the root-to-incumbent chain of the final incumbent.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::bnb::{NodeRecord, SolveReport, SolveStatus};
use crate::error::{Error, Result};
use crate::relax::RelaxationSolution;
use crate::scenario::Scenario;
use crate::textio::{self, fmt_f64};

/// `psi_norm` of nodes whose relaxation is infeasible.
pub const INFEASIBLE_PSI_SENTINEL: f64 = 10.0;

/// Feature length for an `S x K` frame: `[j, g, f, psi, x (SK), l (SK)]`.
pub fn feature_len(num_mds: usize, num_channels: usize) -> usize {
    4 + 2 * num_mds * num_channels
}

/// Normalized node attributes. Only uses what is known when the node is
/// popped, so the same function serves training and online pruning.
pub fn featurize(
    id: usize,
    depth: usize,
    relaxation: Option<&RelaxationSolution>,
    root_psi: f64,
    sc: &Scenario,
) -> Vec<f64> {
    let pairs = sc.num_pairs();
    let scale = pairs as f64;
    let mut out = Vec::with_capacity(4 + 2 * pairs);
    out.push((1.0 + id as f64).log2() / scale);
    out.push(depth as f64 / scale);
    match relaxation {
        Some(sol) => {
            out.push(1.0);
            out.push(sol.psi / root_psi);
            out.extend_from_slice(&sol.x);
            let k_count = sc.num_channels();
            out.extend(
                sol.l
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| (l / sc.task_bits(i / k_count)).clamp(0.0, 1.0)),
            );
        }
        None => {
            out.push(0.0);
            out.push(INFEASIBLE_PSI_SENTINEL);
            out.resize(4 + 2 * pairs, 0.0);
        }
    }
    out
}

pub fn featurize_record(record: &NodeRecord, root_psi: f64, sc: &Scenario) -> Vec<f64> {
    featurize(record.id, record.depth, record.relaxation.as_ref(), root_psi, sc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample {
    pub features: Vec<f64>,
    pub label: bool,
    pub frame_id: u64,
    pub node_id: usize,
}

/// Labels every node of an optimal exact-search trace.
pub fn label_trace(report: &SolveReport, sc: &Scenario, frame_id: u64) -> Result<Vec<NodeSample>> {
    if report.status != SolveStatus::Optimal {
        return Err(Error::Precondition(format!(
            "labels need an optimal trace, got {}",
            report.status.as_str()
        )));
    }
    let best = report.best.as_ref().expect("optimal reports carry a solution");
    // Only the incumbent's pass is labelled; exact traces have a single pass.
    let records: Vec<&NodeRecord> = report.trace.iter().filter(|r| r.pass == best.pass).collect();
    let parents: HashMap<usize, Option<usize>> = records.iter().map(|r| (r.id, r.parent)).collect();
    let mut on_path = HashSet::new();
    let mut cursor = Some(best.node_id);
    while let Some(id) = cursor {
        on_path.insert(id);
        cursor = *parents
            .get(&id)
            .ok_or_else(|| Error::Precondition(format!("node {id} missing from trace")))?;
    }
    let root_psi = records
        .iter()
        .find(|r| r.id == 0)
        .and_then(|r| r.psi())
        .ok_or_else(|| Error::Precondition("trace has no feasible root".into()))?;
    Ok(records
        .iter()
        .map(|r| NodeSample {
            features: featurize_record(r, root_psi, sc),
            label: on_path.contains(&r.id),
            frame_id,
            node_id: r.id,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_mds: usize,
    pub num_channels: usize,
    /// Hash of the scenario config that generated the frames.
    pub config_hash: String,
    pub samples: Vec<NodeSample>,
}

impl Dataset {
    pub fn new(num_mds: usize, num_channels: usize, config_hash: impl Into<String>) -> Self {
        Self {
            num_mds,
            num_channels,
            config_hash: config_hash.into(),
            samples: Vec::new(),
        }
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.num_mds, self.num_channels)
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = NodeSample>) -> Result<()> {
        let m = self.feature_len();
        for s in samples {
            if s.features.len() != m {
                return Err(Error::Dimension(format!(
                    "sample has {} features, dataset expects {m}",
                    s.features.len()
                )));
            }
            self.samples.push(s);
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }

    pub fn to_csv(&self) -> String {
        let m = self.feature_len();
        let mut out = format!(
            "# dataset-v1 m={m} S={} K={}\n# config_hash={} positives={} negatives={}\nframe_id,node_id,label",
            self.num_mds,
            self.num_channels,
            self.config_hash,
            self.positives(),
            self.negatives()
        );
        for i in 1..=m {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.frame_id, s.node_id, u8::from(s.label));
            for v in &s.features {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty dataset file"))?;
        let header = first
            .strip_prefix("# dataset-v1")
            .ok_or_else(|| Error::parse(path, 1, "missing `# dataset-v1` header"))?;
        let mut m = None;
        let mut s_count = None;
        let mut k_count = None;
        for (k, v) in textio::key_values(header) {
            let n = textio::parse_usize(path, 1, v)?;
            match k {
                "m" => m = Some(n),
                "S" => s_count = Some(n),
                "K" => k_count = Some(n),
                _ => {}
            }
        }
        let (Some(m), Some(s_count), Some(k_count)) = (m, s_count, k_count) else {
            return Err(Error::parse(path, 1, "header needs m=, S= and K="));
        };
        if m != feature_len(s_count, k_count) {
            return Err(Error::parse(
                path,
                1,
                format!("m={m} does not match S={s_count}, K={k_count} (expected {})", feature_len(s_count, k_count)),
            ));
        }
        let mut ds = Dataset::new(s_count, k_count, String::new());
        let mut saw_columns = false;
        for (line_no, line) in lines {
            if let Some(meta) = line.strip_prefix('#') {
                for (k, v) in textio::key_values(meta) {
                    if k == "config_hash" {
                        ds.config_hash = v.to_string();
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !saw_columns {
                if !line.starts_with("frame_id,node_id,label") || line.split(',').count() != m + 3 {
                    return Err(Error::parse(path, line_no, "bad column header"));
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != m + 3 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {} columns, got {}", m + 3, fields.len()),
                ));
            }
            let frame_id = fields[0]
                .parse::<u64>()
                .map_err(|e| Error::parse(path, line_no, format!("bad frame id: {e}")))?;
            let node_id = textio::parse_usize(path, line_no, fields[1])?;
            let label = match fields[2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(path, line_no, format!("label must be 0 or 1, got {other:?}"))),
            };
            let features = fields[3..]
                .iter()
                .map(|f| textio::parse_f64(path, line_no, f))
                .collect::<Result<Vec<_>>>()?;
            ds.samples.push(NodeSample {
                features,
                label,
                frame_id,
                node_id,
            });
        }
        Ok(ds)
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    textio::write_atomic(path, ds.to_csv().as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::parse(&textio::read_to_string(path)?, path)
}
