//! Testbed ONS zone generation.
//!
//! A zone set covers a rectangle of company prefixes × item references, one
//! zone per company prefix. Each name gets a random number of NAPTR records
//! in `[per_name_min, per_name_max]`, repaired so the set holds exactly
//! `total_rrs` records. Output depends only on the set definition and its seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{partition_lookup, CodecError};
use crate::ons::{NaptrRecord, OnsFqdn, OnsRoot};
use crate::par::{self, Execution};
use crate::wire::{Name, RData, Record};
use crate::zonefile;

pub const DEFAULT_SEED: u64 = 0x0E9C_2008;
pub const DEFAULT_TTL: u32 = 3600;
const SERVICES: [&str; 2] = ["html", "xmlrpc"];

#[derive(Debug, Error)]
pub enum ZoneGenError {
    #[error("invalid zone set spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("zone file {path}: {source}")]
    ZoneFile {
        path: PathBuf,
        source: zonefile::ZoneFileError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneSetSpec {
    pub label: String,
    /// Partition governing company prefix / item reference digit widths.
    pub partition: u8,
    pub cp_start: u64,
    pub cp_end: u64,
    pub ir_start: u64,
    pub ir_end: u64,
    pub total_rrs: u64,
    pub per_name_min: u32,
    pub per_name_max: u32,
    pub seed: u64,
}

impl ZoneSetSpec {
    pub fn new(label: &str, cp: (u64, u64), ir: (u64, u64), total_rrs: u64) -> Self {
        ZoneSetSpec {
            label: label.to_string(),
            partition: 5,
            cp_start: cp.0,
            cp_end: cp.1,
            ir_start: ir.0,
            ir_end: ir.1,
            total_rrs,
            per_name_min: 1,
            per_name_max: 5,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn company_prefixes(&self) -> u64 {
        self.cp_end.saturating_sub(self.cp_start) + 1
    }

    pub fn items_per_prefix(&self) -> u64 {
        self.ir_end.saturating_sub(self.ir_start) + 1
    }

    pub fn fqdn_count(&self) -> u64 {
        self.company_prefixes() * self.items_per_prefix()
    }

    pub fn validate(&self) -> Result<(), ZoneGenError> {
        let bad = |m: String| Err(ZoneGenError::Spec(format!("{}: {m}", self.label)));
        let row = partition_lookup(self.partition)?;
        if self.cp_start > self.cp_end || self.ir_start > self.ir_end {
            return bad("empty range".into());
        }
        if self.cp_end >= 10u64.pow(row.cp_digits) || self.ir_end >= 10u64.pow(row.ir_digits) {
            return bad("range exceeds partition digit widths".into());
        }
        if self.per_name_min == 0 || self.per_name_min > self.per_name_max {
            return bad(format!("per-name bounds [{}, {}]", self.per_name_min, self.per_name_max));
        }
        let n = self.fqdn_count();
        let lo = n * self.per_name_min as u64;
        let hi = n * self.per_name_max as u64;
        if !(lo..=hi).contains(&self.total_rrs) {
            return bad(format!("{} records cannot be spread over {n} names within [{lo}, {hi}]", self.total_rrs));
        }
        Ok(())
    }

    fn cp_text(&self, cp: u64) -> String {
        let w = partition_lookup(self.partition).map(|r| r.cp_digits).unwrap_or(7) as usize;
        format!("{cp:0w$}")
    }

    fn ir_text(&self, ir: u64) -> String {
        let w = partition_lookup(self.partition).map(|r| r.ir_digits).unwrap_or(6) as usize;
        format!("{ir:0w$}")
    }

    /// All names of the set, company-prefix major.
    pub fn fqdns(&self) -> Vec<OnsFqdn> {
        let root = OnsRoot::default();
        let mut out = Vec::with_capacity(self.fqdn_count() as usize);
        for cp in self.cp_start..=self.cp_end {
            for ir in self.ir_start..=self.ir_end {
                out.push(OnsFqdn {
                    item_reference_text: self.ir_text(ir),
                    company_prefix_text: self.cp_text(cp),
                    scheme_label: root.scheme_label.clone(),
                    suffix: root.suffix.clone(),
                });
            }
        }
        out
    }
}

/// The three testbed record sets.
pub fn builtin_specs() -> [ZoneSetSpec; 3] {
    [
        ZoneSetSpec::new("A", (0, 2), (170, 219), 450),
        ZoneSetSpec::new("B", (4160, 4169), (1123, 1222), 4_000),
        ZoneSetSpec::new("C", (68760, 68809), (22365, 22864), 100_000),
    ]
}

pub fn builtin_spec(label: &str) -> Option<ZoneSetSpec> {
    builtin_specs().into_iter().find(|s| s.label.eq_ignore_ascii_case(label))
}

/// Per-name record counts (company-prefix major) summing to `total_rrs`.
pub fn record_counts(spec: &ZoneSetSpec) -> Result<Vec<u32>, ZoneGenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (spec.per_name_min, spec.per_name_max);
    let n = spec.fqdn_count() as usize;
    let mut counts: Vec<u32> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let mut sum: u64 = counts.iter().map(|&c| c as u64).sum();
    while sum != spec.total_rrs {
        let i = rng.gen_range(0..n);
        if sum < spec.total_rrs && counts[i] < hi {
            counts[i] += 1;
            sum += 1;
        } else if sum > spec.total_rrs && counts[i] > lo {
            counts[i] -= 1;
            sum -= 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedZone {
    pub origin: String,
    pub company_prefix_text: String,
    pub serial: u32,
    pub names: Vec<(OnsFqdn, Vec<NaptrRecord>)>,
}

fn zone_rng(seed: u64, cp: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cp.wrapping_add(1));
    rng
}

fn synthesize(cp_text: &str, ir_text: &str, count: u32, rng: &mut ChaCha8Rng) -> Vec<NaptrRecord> {
    (0..count)
        .map(|k| {
            let service = SERVICES[rng.gen_range(0..SERVICES.len())];
            let url = format!("http://epcis-{cp_text}.example.com/{ir_text}/{k}");
            NaptrRecord::ons(k as u16, service, &url)
        })
        .collect()
}

pub fn generate_set(spec: &ZoneSetSpec) -> Result<Vec<GeneratedZone>, ZoneGenError> {
    generate_set_with(spec, Execution::default())
}

/// Zone synthesis runs per company prefix; output is identical for every
/// execution mode.
pub fn generate_set_with(spec: &ZoneSetSpec, exec: Execution) -> Result<Vec<GeneratedZone>, ZoneGenError> {
    let counts = record_counts(spec)?;
    let per_zone = spec.items_per_prefix() as usize;
    let prefixes: Vec<u64> = (spec.cp_start..=spec.cp_end).collect();
    let root = OnsRoot::default();
    Ok(par::map(&prefixes, exec, |&cp| {
        let zone_index = (cp - spec.cp_start) as usize;
        let counts = &counts[zone_index * per_zone..(zone_index + 1) * per_zone];
        let cp_text = spec.cp_text(cp);
        let mut rng = zone_rng(spec.seed, cp);
        let names = (spec.ir_start..=spec.ir_end)
            .zip(counts)
            .map(|(ir, &count)| {
                let ir_text = spec.ir_text(ir);
                let records = synthesize(&cp_text, &ir_text, count, &mut rng);
                let fqdn = OnsFqdn {
                    item_reference_text: ir_text,
                    company_prefix_text: cp_text.clone(),
                    scheme_label: root.scheme_label.clone(),
                    suffix: root.suffix.clone(),
                };
                (fqdn, records)
            })
            .collect();
        GeneratedZone {
            origin: root.zone_apex(&cp_text),
            company_prefix_text: cp_text,
            serial: 1,
            names,
        }
    }))
}

impl GeneratedZone {
    pub fn file_name(&self) -> String {
        format!("{}.zone", self.origin)
    }

    pub fn record_count(&self) -> usize {
        self.names.iter().map(|(_, r)| r.len()).sum()
    }

    /// Master-file text with synthesized SOA/NS boilerplate.
    pub fn to_zone_file(&self) -> String {
        let mut s = String::with_capacity(64 * self.record_count() + 512);
        let _ = writeln!(s, "; ONS testbed zone {}", self.origin);
        let _ = writeln!(s, "; sign with RSA keys: KSK 1200 bits, ZSK 1024 bits (e.g. RSASHA1)");
        let _ = writeln!(s, "$ORIGIN {}.", self.origin);
        let _ = writeln!(s, "$TTL {DEFAULT_TTL}");
        let _ = writeln!(
            s,
            "@ IN SOA ns1.{o}. hostmaster.{o}. {} 3600 900 604800 3600",
            self.serial,
            o = self.origin
        );
        let _ = writeln!(s, "@ IN NS ns1.{}.", self.origin);
        let _ = writeln!(s, "ns1 IN A 127.0.0.1");
        for (fqdn, records) in &self.names {
            for r in records {
                let _ = writeln!(
                    s,
                    "{} IN NAPTR {}",
                    fqdn.item_reference_text,
                    zonefile::format_rdata(&RData::Naptr(r.clone()))
                );
            }
        }
        s
    }

    /// All records of the zone (SOA, NS, A and NAPTR).
    pub fn records(&self) -> Vec<Record> {
        let text = self.to_zone_file();
        zonefile::parse(&text, None).expect("generated zone text parses")
    }

    /// Rebuilds the NAPTR view of a zone from parsed records.
    pub fn from_records(origin: &Name, records: &[Record]) -> GeneratedZone {
        let root = OnsRoot::default();
        let mut names: BTreeMap<OnsFqdn, Vec<NaptrRecord>> = BTreeMap::new();
        let mut serial = 0;
        for r in records {
            match &r.data {
                RData::Naptr(n) => {
                    if let Ok(fqdn) = OnsFqdn::parse_under(&r.name.to_string(), &root) {
                        names.entry(fqdn).or_default().push(n.clone());
                    }
                }
                RData::Soa(soa) => serial = soa.serial,
                _ => {}
            }
        }
        let origin_text = origin.to_string();
        let company_prefix_text = origin_text.split('.').next().unwrap_or_default().to_string();
        GeneratedZone {
            origin: origin_text,
            company_prefix_text,
            serial,
            names: names.into_iter().collect(),
        }
    }
}

/// Writes one master file per zone; returns the paths written.
pub fn write_set(zones: &[GeneratedZone], dir: &Path) -> Result<Vec<PathBuf>, ZoneGenError> {
    std::fs::create_dir_all(dir).map_err(|source| ZoneGenError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    zones
        .iter()
        .map(|z| {
            let path = dir.join(z.file_name());
            std::fs::write(&path, z.to_zone_file()).map_err(|source| ZoneGenError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.zone` file under `dir` (sorted by file name).
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Vec<Record>)>, ZoneGenError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ZoneGenError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "zone"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(io(&p))?;
            let records = zonefile::parse(&text, None).map_err(|source| ZoneGenError::ZoneFile {
                path: p.clone(),
                source,
            })?;
            Ok((p, records))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZoneStats {
    pub fqdn_count: usize,
    pub rr_count: usize,
    /// records-per-name → number of names
    pub histogram: BTreeMap<usize, usize>,
}

impl ZoneStats {
    pub fn csv_line(&self, label: &str) -> String {
        format!("{label},{},{}", self.fqdn_count, self.rr_count)
    }
}

pub fn stats(zones: &[GeneratedZone]) -> ZoneStats {
    let mut st = ZoneStats::default();
    for z in zones {
        for (_, records) in &z.names {
            st.fqdn_count += 1;
            st.rr_count += records.len();
            *st.histogram.entry(records.len()).or_default() += 1;
        }
    }
    st
}
