//! Latency benchmark over cumulative series prefixes.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::series::QuerySeries;
use super::HarnessError;
use crate::ons::NaptrRecord;
use crate::par;
use crate::transport::{self, Mode, TransportConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Queries in flight within one prefix group.
    pub parallelism: usize,
    /// Times each prefix group is replayed.
    pub repetitions: u32,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            parallelism: 4,
            repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub fqdn: String,
    pub mode: Mode,
    pub prefix_len: usize,
    pub repetition: u32,
    pub attempts: u32,
    /// Only set for successful resolutions.
    pub rtt_ms: Option<f64>,
    pub verdict: Option<String>,
    pub answers: Vec<NaptrRecord>,
    pub error: Option<String>,
}

impl LatencySample {
    pub fn ok(&self) -> bool {
        self.rtt_ms.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; needs two samples.
    pub stddev: Option<f64>,
    /// Half-width of the two-sided 95% Student-t interval.
    pub ci95: Option<f64>,
}

pub fn latency_stats(xs: &[f64]) -> Option<LatencyStats> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Some(LatencyStats { n, mean, stddev: None, ci95: None });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Some(LatencyStats {
        n,
        mean,
        stddev: Some(sd),
        ci95: Some(t * sd / (n as f64).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: Mode,
    pub prefix_len: usize,
    pub stats: Option<LatencyStats>,
    pub retries: u64,
    pub failures: u64,
}

impl ReportRow {
    pub fn n_ok(&self) -> usize {
        self.stats.map_or(0, |s| s.n)
    }

    pub fn mean_ms(&self) -> Option<f64> {
        self.stats.map(|s| s.mean)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub samples: Vec<LatencySample>,
    /// Modes abandoned because nothing in their first group resolved.
    pub failed_modes: Vec<Mode>,
}

impl BenchReport {
    pub fn row(&self, mode: Mode, prefix_len: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.mode == mode && r.prefix_len == prefix_len)
    }

    pub fn samples_for(&self, mode: Mode) -> impl Iterator<Item = &LatencySample> {
        self.samples.iter().filter(move |s| s.mode == mode)
    }

    pub fn total_retries(&self) -> u64 {
        self.rows.iter().map(|r| r.retries).sum()
    }

    pub fn total_failures(&self) -> u64 {
        self.rows.iter().map(|r| r.failures).sum()
    }
}

fn aggregate(mode: Mode, prefix_len: usize, samples: &[LatencySample]) -> ReportRow {
    let rtts: Vec<f64> = samples.iter().filter_map(|s| s.rtt_ms).collect();
    ReportRow {
        mode,
        prefix_len,
        stats: latency_stats(&rtts),
        retries: samples.iter().map(|s| u64::from(s.attempts.saturating_sub(1))).sum(),
        failures: samples.iter().filter(|s| !s.ok()).count() as u64,
    }
}

fn sample(series_name: &crate::ons::OnsFqdn, config: &TransportConfig, prefix_len: usize, repetition: u32) -> LatencySample {
    let base = LatencySample {
        fqdn: series_name.to_string(),
        mode: config.mode,
        prefix_len,
        repetition,
        attempts: 1,
        rtt_ms: None,
        verdict: None,
        answers: Vec::new(),
        error: None,
    };
    match transport::resolve_fqdn(series_name, config) {
        Ok(r) => {
            let mut answers = r.records;
            answers.sort();
            LatencySample {
                attempts: r.attempts,
                rtt_ms: Some(r.rtt.as_secs_f64() * 1e3),
                verdict: r.verdict.map(|v| v.to_string()),
                answers,
                ..base
            }
        }
        Err(e) => LatencySample {
            attempts: e.attempts.max(1),
            error: Some(e.to_string()),
            ..base
        },
    }
}

/// For each configuration and each prefix length k, resolves the first k
/// names of the series with up to `parallelism` queries in flight. Groups
/// run one after another; every query opens its own connection.
pub fn run_bench(series: &QuerySeries, configs: &[TransportConfig], options: BenchOptions) -> Result<BenchReport, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Domain("empty series".into()));
    }
    if options.parallelism == 0 || options.repetitions == 0 {
        return Err(HarnessError::Domain("parallelism and repetitions must be positive".into()));
    }
    for c in configs {
        c.validate().map_err(|e| HarnessError::Domain(format!("{}: {e}", c.mode)))?;
    }
    let mut report = BenchReport::default();
    'modes: for config in configs {
        for k in 1..=series.len() {
            let mut group = Vec::with_capacity(k * options.repetitions as usize);
            for rep in 0..options.repetitions {
                group.extend(par::map_bounded(&series.fqdns[..k], options.parallelism, |f| {
                    sample(f, config, k, rep)
                }));
            }
            if k == 1 && group.iter().all(|s| !s.ok()) {
                log::warn!(
                    "{} unreachable: {}",
                    config.mode,
                    group[0].error.as_deref().unwrap_or("unknown error")
                );
                report.failed_modes.push(config.mode);
                report.samples.extend(group);
                continue 'modes;
            }
            log::info!("{} k={k}: {}/{} ok", config.mode, group.iter().filter(|s| s.ok()).count(), group.len());
            report.rows.push(aggregate(config.mode, k, &group));
            report.samples.extend(group);
        }
    }
    Ok(report)
}
