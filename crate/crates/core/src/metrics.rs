//! Anonymity and reliability metrics for onion-routed lookups.
//!
//! The degree of anonymity is the Shannon entropy of the relay selection
//! distribution divided by `log2(N)`. Circuit reliability is `f^l` for `l`
//! independent relays of reliability `f`; an adversary holding `m` of `N`
//! uniformly chosen relays sees both ends of a circuit with probability
//! `(m/N)^2`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Tolerance on `sum(p) == 1` for a distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("bandwidth-proportional selection needs non-zero total bandwidth")]
    DegenerateModel,
    #[error("probabilities sum to {0}, not 1")]
    InvalidDistribution(f64),
    #[error("degree of anonymity is undefined for a single node")]
    UndefinedDegree,
    #[error("inventory line {line}: {msg}")]
    Inventory { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthClass {
    pub bandwidth_kbps: f64,
    pub count: u64,
}

/// Relay census grouped into bandwidth classes; per-relay data is the
/// `count == 1` case.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInventory {
    classes: Vec<BandwidthClass>,
}

impl NodeInventory {
    pub fn new(classes: Vec<BandwidthClass>) -> Result<Self, MetricsError> {
        if classes.is_empty() {
            return Err(MetricsError::Domain("inventory has no nodes".into()));
        }
        for c in &classes {
            if c.count == 0 {
                return Err(MetricsError::Domain("class with zero nodes".into()));
            }
            if !(c.bandwidth_kbps >= 0.0 && c.bandwidth_kbps.is_finite()) {
                return Err(MetricsError::Domain(format!("bandwidth {} is invalid", c.bandwidth_kbps)));
            }
        }
        Ok(NodeInventory { classes })
    }

    /// Relay bandwidth classes observed on the live network in early 2008.
    pub fn tor_2008() -> Self {
        const TABLE: [(f64, u64); 10] = [
            (996.0, 131),
            (621.0, 63),
            (362.0, 67),
            (111.0, 338),
            (59.0, 315),
            (29.0, 406),
            (20.0, 72),
            (19.0, 68),
            (10.0, 11),
            (5.0, 7),
        ];
        NodeInventory {
            classes: TABLE
                .iter()
                .map(|&(bandwidth_kbps, count)| BandwidthClass { bandwidth_kbps, count })
                .collect(),
        }
    }

    /// Parses `bandwidth_kbps,count` rows. Blank lines, `#` comments and a
    /// non-numeric header row are ignored.
    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut classes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| MetricsError::Inventory { line: i + 1, msg };
            let (bw, count) = line
                .split_once(',')
                .ok_or_else(|| err("expected bandwidth_kbps,count".into()))?;
            let bw = bw.trim().trim_end_matches("KB/s").trim();
            let bandwidth_kbps = match bw.parse::<f64>() {
                Ok(v) => v,
                Err(_) if classes.is_empty() => continue,
                Err(_) => return Err(err(format!("bad bandwidth {bw:?}"))),
            };
            let count = count
                .trim()
                .parse::<u64>()
                .map_err(|_| err(format!("bad count {:?}", count.trim())))?;
            classes.push(BandwidthClass { bandwidth_kbps, count });
        }
        NodeInventory::new(classes)
    }

    pub fn classes(&self) -> &[BandwidthClass] {
        &self.classes
    }

    pub fn total_nodes(&self) -> u64 {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn total_bandwidth(&self) -> f64 {
        self.classes.iter().map(|c| c.bandwidth_kbps * c.count as f64).sum()
    }

    /// One bandwidth entry per node.
    pub fn expand(&self) -> Vec<f64> {
        self.classes
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.bandwidth_kbps, c.count as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionModel {
    Uniform,
    BandwidthProportional,
}

impl fmt::Display for SelectionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionModel::Uniform => "uniform",
            SelectionModel::BandwidthProportional => "bandwidth",
        })
    }
}

impl FromStr for SelectionModel {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(SelectionModel::Uniform),
            "bandwidth" | "bandwidth_proportional" | "bandwidth-proportional" => {
                Ok(SelectionModel::BandwidthProportional)
            }
            other => Err(MetricsError::Domain(format!("unknown selection model {other:?}"))),
        }
    }
}

/// Per-node selection probabilities, in [`NodeInventory::expand`] order.
pub fn selection_distribution(inventory: &NodeInventory, model: SelectionModel) -> Result<Vec<f64>, MetricsError> {
    let n = inventory.total_nodes();
    match model {
        SelectionModel::Uniform => Ok(vec![1.0 / n as f64; n as usize]),
        SelectionModel::BandwidthProportional => {
            let total = inventory.total_bandwidth();
            if total <= 0.0 {
                return Err(MetricsError::DegenerateModel);
            }
            Ok(inventory.expand().into_iter().map(|bw| bw / total).collect())
        }
    }
}

fn check_distribution(p: &[f64]) -> Result<(), MetricsError> {
    if p.is_empty() {
        return Err(MetricsError::Domain("empty distribution".into()));
    }
    if let Some(bad) = p.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(MetricsError::Domain(format!("probability {bad} is invalid")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(MetricsError::InvalidDistribution(sum));
    }
    Ok(())
}

/// Shannon entropy in bits; zero-probability terms contribute nothing.
pub fn entropy(p: &[f64]) -> Result<f64, MetricsError> {
    check_distribution(p)?;
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
    Ok(h.max(0.0))
}

pub fn normalized_degree(p: &[f64]) -> Result<f64, MetricsError> {
    let h = entropy(p)?;
    if p.len() < 2 {
        return Err(MetricsError::UndefinedDegree);
    }
    Ok((h / (p.len() as f64).log2()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnonymityReport {
    pub nodes: u64,
    pub entropy_bits: f64,
    pub max_entropy_bits: f64,
    /// `None` when there is a single node.
    pub normalized_degree: Option<f64>,
    pub model: SelectionModel,
}

pub fn anonymity_report(inventory: &NodeInventory, model: SelectionModel) -> Result<AnonymityReport, MetricsError> {
    let p = selection_distribution(inventory, model)?;
    let entropy_bits = entropy(&p)?;
    let normalized_degree = match normalized_degree(&p) {
        Ok(d) => Some(d),
        Err(MetricsError::UndefinedDegree) => None,
        Err(e) => return Err(e),
    };
    Ok(AnonymityReport {
        nodes: inventory.total_nodes(),
        entropy_bits,
        max_entropy_bits: (inventory.total_nodes() as f64).log2(),
        normalized_degree,
        model,
    })
}

/// Probability that all `path_len` relays of a circuit stay up.
pub fn circuit_reliability(node_reliability: f64, path_len: u32) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&node_reliability) {
        return Err(MetricsError::Domain(format!("reliability {node_reliability} outside [0,1]")));
    }
    if path_len == 0 {
        return Err(MetricsError::Domain("path length must be at least 1".into()));
    }
    Ok(node_reliability.powi(path_len as i32))
}

/// `(m/N)^2`: share of circuits with both ends on compromised relays.
pub fn compromise_fraction(compromised: u64, total: u64) -> Result<f64, MetricsError> {
    if total == 0 {
        return Err(MetricsError::Domain("no nodes".into()));
    }
    if compromised > total {
        return Err(MetricsError::Domain(format!("{compromised} compromised of {total} nodes")));
    }
    let r = compromised as f64 / total as f64;
    Ok(r * r)
}

/// Scales a compromise fraction by an attack's improvement factor, capped at 1.
pub fn amplified_compromise(base_fraction: f64, factor: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&base_fraction) || !(factor >= 0.0 && factor.is_finite()) {
        return Err(MetricsError::Domain(format!("fraction {base_fraction}, factor {factor}")));
    }
    Ok((base_fraction * factor).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeTally {
    pub successes: u64,
    pub failures: u64,
}

/// Mean and population standard deviation of per-node failure rates. Nodes
/// without observations are ignored.
pub fn node_failure_summary(tallies: &[NodeTally]) -> Result<(f64, f64), MetricsError> {
    let rates: Vec<f64> = tallies
        .iter()
        .filter(|t| t.successes + t.failures > 0)
        .map(|t| t.failures as f64 / (t.successes + t.failures) as f64)
        .collect();
    if rates.is_empty() {
        return Err(MetricsError::Domain("no node observations".into()));
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
