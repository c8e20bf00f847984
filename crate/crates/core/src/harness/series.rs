//! Persisted random query series.
//!
//! File format: a header comment `# label=<l> seed=<s> sources=<a,b,..>`
//! followed by one FQDN per line.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::ons::OnsFqdn;

pub const DEFAULT_LENGTH: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameSource {
    pub label: String,
    pub fqdns: Vec<OnsFqdn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySeries {
    pub label: String,
    pub seed: u64,
    pub source_sets: Vec<String>,
    pub fqdns: Vec<OnsFqdn>,
}

/// Samples `length` names uniformly with replacement from the union of
/// `sources`.
pub fn make_series(label: &str, sources: &[NameSource], length: usize, seed: u64) -> Result<QuerySeries, HarnessError> {
    if length == 0 {
        return Err(HarnessError::Domain("series length must be positive".into()));
    }
    let pool: Vec<&OnsFqdn> = sources.iter().flat_map(|s| &s.fqdns).collect();
    if pool.is_empty() {
        return Err(HarnessError::Domain("no names to sample from".into()));
    }
    if label.chars().any(char::is_whitespace) {
        return Err(HarnessError::Domain(format!("label {label:?} contains whitespace")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fqdns = (0..length).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
    Ok(QuerySeries {
        label: label.to_string(),
        seed,
        source_sets: sources.iter().map(|s| s.label.clone()).collect(),
        fqdns,
    })
}

impl QuerySeries {
    pub fn len(&self) -> usize {
        self.fqdns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fqdns.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# label={} seed={} sources={}\n", self.label, self.seed, self.source_sets.join(","));
        for f in &self.fqdns {
            let _ = writeln!(s, "{f}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<QuerySeries, HarnessError> {
        let mut series = QuerySeries {
            label: String::new(),
            seed: 0,
            source_sets: Vec::new(),
            fqdns: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |msg: String| HarnessError::Parse { line: i + 1, msg };
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    match field.split_once('=') {
                        Some(("label", v)) => series.label = v.to_string(),
                        Some(("seed", v)) => series.seed = v.parse().map_err(|_| err(format!("bad seed {v:?}")))?,
                        Some(("sources", v)) => {
                            series.source_sets = v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
                        }
                        _ => {}
                    }
                }
            } else if !line.is_empty() {
                series.fqdns.push(OnsFqdn::parse(line).map_err(|e| err(e.to_string()))?);
            }
        }
        if series.fqdns.is_empty() {
            return Err(HarnessError::Domain("series holds no names".into()));
        }
        Ok(series)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<QuerySeries, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        QuerySeries::parse(&text)
    }
}
