//! CSV and plot-data emission for benchmark reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::bench::BenchReport;
use super::HarnessError;
use crate::transport::Mode;

pub const REPORT_HEADER: &str = "mode,prefix_len,n_ok,mean_ms,stddev_ms,ci95_ms,retries,failures";
pub const SAMPLES_HEADER: &str = "mode,prefix_len,repetition,fqdn,attempts,outcome,rtt_ms,verdict";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &BenchReport) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in &report.rows {
        let (mean, sd, ci) = r.stats.map_or((None, None, None), |st| (Some(st.mean), st.stddev, st.ci95));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.mode,
            r.prefix_len,
            r.n_ok(),
            opt(mean),
            opt(sd),
            opt(ci),
            r.retries,
            r.failures
        );
    }
    s
}

pub fn samples_csv(report: &BenchReport) -> String {
    let mut s = format!("{SAMPLES_HEADER}\n");
    for x in &report.samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            x.mode,
            x.prefix_len,
            x.repetition,
            x.fqdn,
            x.attempts,
            if x.ok() { "ok" } else { "failed" },
            opt(x.rtt_ms),
            x.verdict.as_deref().unwrap_or_default()
        );
    }
    s
}

/// Whitespace-separated columns `prefix_len mean_ms ci_low ci_high` for one
/// mode; rows without successes are omitted.
pub fn plot_data(report: &BenchReport, mode: Mode) -> String {
    let mut s = format!("# {mode}\n# prefix_len mean_ms ci_low_ms ci_high_ms\n");
    for r in report.rows.iter().filter(|r| r.mode == mode) {
        if let Some(st) = r.stats {
            let ci = st.ci95.unwrap_or(0.0);
            let _ = writeln!(s, "{} {} {} {}", r.prefix_len, st.mean, st.mean - ci, st.mean + ci);
        }
    }
    s
}

/// Writes `report.csv`, `samples.csv` and one `<mode>.dat` per mode.
pub fn emit(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files = vec![
        (dir.join("report.csv"), report_csv(report)),
        (dir.join("samples.csv"), samples_csv(report)),
    ];
    let mut modes: Vec<Mode> = report.rows.iter().map(|r| r.mode).collect();
    modes.dedup();
    for m in modes {
        files.push((dir.join(format!("{m}.dat")), plot_data(report, m)));
    }
    files
        .into_iter()
        .map(|(path, text)| {
            std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bench::{latency_stats, ReportRow};

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(report_csv(&BenchReport::default()), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn row_shape() {
        let mut report = BenchReport::default();
        for m in Mode::ALL {
            for k in 1..=15 {
                report.rows.push(ReportRow {
                    mode: m,
                    prefix_len: k,
                    stats: latency_stats(&[1.0, 2.0, 4.0]),
                    retries: 0,
                    failures: 0,
                });
            }
        }
        let csv = report_csv(&report);
        assert_eq!(csv.lines().count(), 61);
        assert!(csv.lines().all(|l| l.split(',').count() == 8));
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit(&report, dir.path()).unwrap().len(), 6);
    }
}
