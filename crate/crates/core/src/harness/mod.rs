//! Experiment orchestration: query series, latency benchmark, reports,
//! eavesdropping demonstrator and loopback stub services.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod bench;
pub mod report;
pub mod series;
pub mod sniff;
pub mod stub;

pub use bench::{run_bench, BenchOptions, BenchReport, LatencySample, LatencyStats, ReportRow};
pub use series::{make_series, NameSource, QuerySeries};
pub use sniff::{check_policy, eavesdrop, Observation, PrivacyPolicy, Prohibition, Violation};
pub use stub::{NameserverConfig, ProxyConfig, StubNameserver, StubProxy, ZoneData};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Domain(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("startup failed: {0}")]
    Startup(String),
    #[error(transparent)]
    Zones(#[from] crate::zonegen::ZoneGenError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
