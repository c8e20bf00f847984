//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails or overruns its time budget.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use epc_ons::codec::{self, Sgtin96Fields, PARTITION_TABLE};
use epc_ons::dnssec::signer::SigningKey;
use epc_ons::dnssec::{self, Algorithm, TrustAnchor};
use epc_ons::harness::{self, BenchOptions, NameSource, NameserverConfig, ProxyConfig, StubNameserver, StubProxy, ZoneData};
use epc_ons::metrics::{self, NodeInventory, SelectionModel};
use epc_ons::ons::{self, NaptrRecord, OnsFqdn};
use epc_ons::transport::{self, Mode, TransportConfig, TransportError};
use epc_ons::wire::{Message, Name, RData, Record};
use epc_ons::zonegen::{self, ZoneSetSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAG: u128 = 0x3014_1A87_FC4A_157F_FFFF_FFFF;
const URN: &str = "urn:epc:id:sgtin:0434687.075861.274877906943";
const FQDN: &str = "075861.0434687.sgtin.id.onsepc.com";
const SERVER_DELAY: Duration = Duration::from_millis(5);
const PROXY_DELAY: Duration = Duration::from_millis(50);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn run(results: &mut Vec<bool>, id: u32, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(_) if elapsed > budget => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
        o => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.clone()),
        Err(d) => ("FAIL", d.clone()),
    };
    report(format_args!("[{tag}] criterion {id:>2} {title}: {detail} ({elapsed:.2?})"));
    results.push(outcome.is_ok());
}

/// Writes straight to the process stdout so the lines survive test output capture.
fn report(line: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn example_zone() -> (Name, Vec<Record>) {
    let apex = Name::from_ascii("0434687.sgtin.id.onsepc.com").unwrap();
    let owner = Name::from_ascii(FQDN).unwrap();
    let records = ons::example_records()
        .into_iter()
        .map(|n| Record::new(owner.clone(), 3600, RData::Naptr(n)))
        .collect();
    (apex, records)
}

struct Keys {
    ksk: SigningKey,
    zsk: SigningKey,
}

impl Keys {
    fn new(seed: u64) -> Keys {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Keys {
            ksk: SigningKey::generate(&mut rng, Algorithm::RsaSha1, 1200, true).unwrap(),
            zsk: SigningKey::generate(&mut rng, Algorithm::RsaSha1, 1024, false).unwrap(),
        }
    }

    fn sign(&self, data: &ZoneData) -> ZoneData {
        let now = dnssec::unix_now();
        data.signed_with(&self.ksk, &self.zsk, now - 3600, now + 30 * 86_400).unwrap().0
    }

    fn zsk_anchors(&self, data: &ZoneData) -> Vec<TrustAnchor> {
        data.apexes().iter().map(|a| self.zsk.anchor(a)).collect()
    }
}

fn criterion_1() -> Outcome {
    let f = codec::decode_sgtin96(TAG).map_err(|e| e.to_string())?;
    ensure!(
        (f.filter, f.partition, f.company_prefix, f.item_reference, f.serial) == (0, 5, 434687, 75861, 274877906943),
        "decoded {f:?}"
    );
    let back = codec::encode_sgtin96(&f).map_err(|e| e.to_string())?;
    ensure!(back == TAG, "re-encoded {back:#x}");
    let uri = codec::fields_to_uri(&f).to_string();
    ensure!(uri == URN, "uri {uri}");
    Ok(uri)
}

fn criterion_2() -> Outcome {
    let fields = codec::parse_uri(URN).map_err(|e| e.to_string())?;
    let fqdn = ons::uri_to_fqdn(&codec::fields_to_uri(&fields)).to_string();
    ensure!(fqdn == FQDN, "got {fqdn}");
    Ok(fqdn)
}

fn criterion_3() -> Outcome {
    let records = ons::example_records();
    let x = ons::select_endpoint(&records, "xmlrpc").map_err(|e| e.to_string())?;
    let h = ons::select_endpoint(&records, "html").map_err(|e| e.to_string())?;
    ensure!(x.url == "http://gateway1.xmlrpc.com/servlet/example", "xmlrpc -> {}", x.url);
    ensure!(h.url == "http://www.example.com/products/example.asp", "html -> {}", h.url);
    Ok(format!("xmlrpc -> {}, html -> {}", x.url, h.url))
}

fn criterion_4() -> Outcome {
    let expected = [(150, 450), (1000, 4000), (25000, 100000)];
    let mut got = Vec::new();
    for (spec, (names, rrs)) in zonegen::builtin_specs().iter().zip(expected) {
        let zones = zonegen::generate_set(spec).map_err(|e| e.to_string())?;
        let st = zonegen::stats(&zones);
        ensure!((st.fqdn_count, st.rr_count) == (names, rrs), "set {}: {:?}", spec.label, (st.fqdn_count, st.rr_count));
        ensure!(st.histogram.keys().all(|k| (1..=5).contains(k)), "set {} counts {:?}", spec.label, st.histogram);
        let again = zonegen::generate_set(spec).map_err(|e| e.to_string())?;
        ensure!(again == zones, "set {} not deterministic", spec.label);
        got.push(st.csv_line(&spec.label));
    }
    Ok(got.join(" "))
}

fn criterion_5() -> Outcome {
    let inv = NodeInventory::tor_2008();
    ensure!(inv.total_nodes() == 1478, "N = {}", inv.total_nodes());
    let r = metrics::anonymity_report(&inv, SelectionModel::BandwidthProportional).map_err(|e| e.to_string())?;
    let d = r.normalized_degree.ok_or("no degree")?;
    ensure!((d - 0.89).abs() <= 0.02, "degree {d}");
    Ok(format!("H = {:.4} bits of {:.4}, degree {d:.4}", r.entropy_bits, r.max_entropy_bits))
}

fn criterion_6() -> Outcome {
    let r = metrics::circuit_reliability(0.88, 3).map_err(|e| e.to_string())?;
    ensure!((r - 0.6815).abs() <= 0.0005, "reliability {r}");
    Ok(format!("0.88^3 = {r:.6}"))
}

fn criterion_7() -> Outcome {
    let lo = metrics::amplified_compromise(0.0021, 70.0).map_err(|e| e.to_string())?;
    let hi = metrics::amplified_compromise(0.0067, 70.0).map_err(|e| e.to_string())?;
    ensure!((0.14..=0.155).contains(&lo), "low end {lo}");
    ensure!((0.46..=0.48).contains(&hi), "high end {hi}");
    Ok(format!("{lo:.4} .. {hi:.4}"))
}

fn set_a_records() -> BTreeMap<String, Vec<NaptrRecord>> {
    let zones = zonegen::generate_set(&zonegen::builtin_specs()[0]).unwrap();
    zones
        .iter()
        .flat_map(|z| &z.names)
        .map(|(f, r)| {
            let mut r = r.clone();
            r.sort();
            (f.to_string(), r)
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_8() -> Outcome {
    let spec = zonegen::builtin_specs()[0].clone();
    let plain = ZoneData::from_zones(&zonegen::generate_set(&spec).map_err(|e| e.to_string())?);
    let keys = Keys::new(8);
    let signed = keys.sign(&plain);
    let ns_cfg = NameserverConfig {
        delay: SERVER_DELAY,
        ..Default::default()
    };
    let ns_plain = StubNameserver::start(plain, ns_cfg.clone()).map_err(|e| e.to_string())?;
    let ns_signed = StubNameserver::start(signed.clone(), ns_cfg).map_err(|e| e.to_string())?;
    let proxy = StubProxy::start(ProxyConfig {
        delay: PROXY_DELAY,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;

    let source = NameSource {
        label: spec.label.clone(),
        fqdns: spec.fqdns(),
    };
    let series = harness::make_series("e2e", &[source], 15, 2008).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("series.txt");
    series.save(&path).map_err(|e| e.to_string())?;

    let configs = |proxy_addr: String| -> Vec<TransportConfig> {
        Mode::ALL
            .iter()
            .map(|&mode| {
                let ns = if mode.dnssec() { ns_signed.addr() } else { ns_plain.addr() };
                let mut c = TransportConfig::new(mode, ns.to_string()).with_proxy(proxy_addr.clone());
                c.timeout = Duration::from_secs(2);
                if mode.dnssec() {
                    c = c.with_anchors(keys.zsk_anchors(&signed));
                }
                c
            })
            .collect()
    };
    let reloaded = harness::QuerySeries::load(&path).map_err(|e| e.to_string())?;
    ensure!(reloaded.to_text().as_bytes() == std::fs::read(&path).unwrap(), "series reload not byte-identical");
    let report = harness::run_bench(
        &reloaded,
        &configs(proxy.addr().to_string()),
        BenchOptions {
            parallelism: 4,
            repetitions: 3,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(report.rows.len() == 60 && report.samples.len() == 4 * 3 * 120, "{} report rows", report.rows.len());
    ensure!(report.total_failures() == 0, "{} failures", report.total_failures());

    // (a) identical answer multisets per name, equal to the generated zone data
    let truth = set_a_records();
    for s in &report.samples {
        ensure!(Some(&s.answers) == truth.get(&s.fqdn), "{} {}: answers differ from zone data", s.mode, s.fqdn);
        if s.mode.dnssec() {
            ensure!(s.verdict.as_deref() == Some("secure"), "{} {}: verdict {:?}", s.mode, s.fqdn, s.verdict);
        }
    }
    // (b) proxied slower than direct by at least 45 ms at every prefix length
    let mut min_gap = f64::INFINITY;
    for k in 1..=15 {
        for (direct, proxied) in [(Mode::DirectPlain, Mode::ProxiedPlain), (Mode::DirectDnssec, Mode::ProxiedDnssec)] {
            let d = report.row(direct, k).and_then(|r| r.mean_ms()).ok_or("missing row")?;
            let p = report.row(proxied, k).and_then(|r| r.mean_ms()).ok_or("missing row")?;
            min_gap = min_gap.min(p - d);
            ensure!(p - d >= 45.0, "k={k}: {proxied} {p:.2} ms vs {direct} {d:.2} ms");
        }
    }
    // (c) DNSSEC within 20% of plain DNS, direct link
    let dns = mean(report.samples_for(Mode::DirectPlain).filter_map(|s| s.rtt_ms));
    let sec = mean(report.samples_for(Mode::DirectDnssec).filter_map(|s| s.rtt_ms));
    ensure!((sec - dns).abs() <= 0.2 * dns, "dnssec {sec:.3} ms vs dns {dns:.3} ms");

    // (d) 12% tunnel drops absorbed by retries
    let lossy = StubProxy::start(ProxyConfig {
        delay: PROXY_DELAY,
        drop_rate: 0.12,
        seed: 12,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let lossy_configs: Vec<TransportConfig> = configs(lossy.addr().to_string())
        .into_iter()
        .filter(|c| c.mode.proxied())
        .map(|mut c| {
            c.max_retries = 3;
            c
        })
        .collect();
    let lossy_report = harness::run_bench(
        &reloaded,
        &lossy_configs,
        BenchOptions {
            parallelism: 1,
            repetitions: 1,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(lossy_report.total_failures() == 0, "{} failed queries", lossy_report.total_failures());
    ensure!(lossy_report.total_retries() > 0, "no retries recorded");
    ensure!(lossy.drops() > 0, "proxy dropped nothing");
    Ok(format!(
        "min proxied gap {min_gap:.1} ms; dns {dns:.2} ms vs dnssec {sec:.2} ms; {} drops absorbed by {} retries",
        lossy.drops(),
        lossy_report.total_retries()
    ))
}

/// Every single-octet position of the NAPTR content and RRSIG signatures
/// in a response, in a fixed enumeration order.
fn flip_octet(msg: &mut Message, target: usize) -> bool {
    let mut i = 0usize;
    for r in &mut msg.answers {
        match &mut r.data {
            RData::Naptr(n) => {
                let mut ints = [n.order.to_be_bytes(), n.preference.to_be_bytes()].concat();
                if target < i + 4 {
                    ints[target - i] ^= 1;
                    n.order = u16::from_be_bytes([ints[0], ints[1]]);
                    n.preference = u16::from_be_bytes([ints[2], ints[3]]);
                    return true;
                }
                i += 4;
                for field in [&mut n.flags, &mut n.service, &mut n.regexp] {
                    if target < i + field.len() {
                        let mut bytes = std::mem::take(field).into_bytes();
                        bytes[target - i] ^= 1;
                        *field = String::from_utf8(bytes).expect("ascii stays ascii");
                        return true;
                    }
                    i += field.len();
                }
            }
            RData::Rrsig(s) => {
                if target < i + s.signature.len() {
                    s.signature[target - i] ^= 1;
                    return true;
                }
                i += s.signature.len();
            }
            _ => {}
        }
    }
    false
}

fn criterion_9() -> Outcome {
    let mut data = ZoneData::from_zones(&zonegen::generate_set(&zonegen::builtin_specs()[0]).unwrap());
    let (apex, records) = example_zone();
    data.add_zone(&apex, records);
    let keys = Keys::new(9);
    let signed = keys.sign(&data);
    let ns = StubNameserver::start(signed.clone(), NameserverConfig::default()).map_err(|e| e.to_string())?;

    let mut direct = TransportConfig::new(Mode::DirectDnssec, ns.addr().to_string()).with_anchors(keys.zsk_anchors(&signed));
    direct.max_retries = 0;
    let names: Vec<OnsFqdn> = zonegen::builtin_specs()[0].fqdns();
    for f in &names {
        let r = transport::resolve_fqdn(f, &direct).map_err(|e| format!("{f}: {e}"))?;
        ensure!(r.verdict == Some(dnssec::Verdict::Secure), "{f}: {:?}", r.verdict);
    }
    let r = transport::resolve(URN, &direct).map_err(|e| e.to_string())?;
    ensure!(r.verdict == Some(dnssec::Verdict::Secure) && r.records.len() == 3, "example name not secure");

    let target = Arc::new(AtomicUsize::new(usize::MAX));
    let t = Arc::clone(&target);
    let proxy = StubProxy::start(ProxyConfig {
        tamper: Some(Arc::new(move |bytes: &[u8]| {
            let mut msg = Message::from_wire(bytes).expect("upstream response parses");
            flip_octet(&mut msg, t.load(Ordering::SeqCst));
            msg.to_wire().expect("tampered response encodes")
        })),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut tor = direct.clone();
    tor.mode = Mode::ProxiedDnssec;
    tor.proxy = Some(proxy.addr().to_string());
    let clean = transport::resolve(FQDN, &tor).map_err(|e| e.to_string())?;
    ensure!(clean.verdict == Some(dnssec::Verdict::Secure), "untampered tunnel: {:?}", clean.verdict);

    let mut flipped = 0;
    loop {
        target.store(flipped, Ordering::SeqCst);
        let probe = {
            let q = transport::build_query(&OnsFqdn::parse(FQDN).unwrap(), Mode::ProxiedDnssec).unwrap();
            let resp = transport::send_direct(&q, &ns.addr().to_string(), Duration::from_secs(2)).map_err(|e| e.to_string())?;
            let mut m = resp.message;
            flip_octet(&mut m, flipped)
        };
        if !probe {
            break;
        }
        match transport::resolve(FQDN, &tor) {
            Err(e) if matches!(e.error, TransportError::Bogus(_)) => {}
            other => return Err(format!("octet {flipped}: expected bogus, got {other:?}")),
        }
        flipped += 1;
    }
    ensure!(flipped > 128 + 3 * 4, "only {flipped} octets enumerated");
    target.store(0, Ordering::SeqCst);
    let mut lax = tor.clone();
    lax.strict = false;
    let r = transport::resolve(FQDN, &lax).map_err(|e| e.to_string())?;
    ensure!(matches!(r.verdict, Some(dnssec::Verdict::Bogus(_))), "permissive verdict {:?}", r.verdict);
    Ok(format!("{} names secure; {flipped} single-octet flips all bogus and withheld", names.len() + 1))
}

fn criterion_10() -> Outcome {
    let a = zonegen::builtin_specs()[0].clone();
    let mut p = ZoneSetSpec::new("P", (434687, 434687), (75856, 75865), 30);
    p.per_name_min = 3;
    p.per_name_max = 3;
    let mut zones = zonegen::generate_set(&a).map_err(|e| e.to_string())?;
    zones.extend(zonegen::generate_set(&p).map_err(|e| e.to_string())?);
    let ns = StubNameserver::start(ZoneData::from_zones(&zones), NameserverConfig::default()).map_err(|e| e.to_string())?;

    let sources = [
        NameSource { label: "A".into(), fqdns: a.fqdns() },
        NameSource { label: "P".into(), fqdns: p.fqdns() },
    ];
    let series = (1u64..)
        .map(|seed| harness::make_series("sniff", &sources, 15, seed).unwrap())
        .find(|s| s.fqdns.iter().filter(|f| f.to_string() == FQDN).count() >= 2)
        .unwrap();
    let config = TransportConfig::new(Mode::DirectPlain, ns.addr().to_string());
    for f in &series.fqdns {
        transport::resolve_fqdn(f, &config).map_err(|e| format!("{f}: {e}"))?;
    }
    let log = ns.query_log_text();
    let in_log = log.lines().filter(|l| l.split_whitespace().nth(1).is_some_and(|n| n.eq_ignore_ascii_case(FQDN))).count();
    let in_series = series.fqdns.iter().filter(|f| f.to_string() == FQDN).count();

    let policy = harness::PrivacyPolicy::parse("0434687,075861\n").map_err(|e| e.to_string())?;
    let seen = harness::eavesdrop(&log);
    ensure!(seen.warnings.is_empty() && seen.skipped == 0, "unexpected log content");
    ensure!(seen.observations.len() >= series.len(), "{} observations", seen.observations.len());
    let violations = harness::check_policy(&seen.observations, &policy);
    ensure!(violations.len() == in_log && in_log == in_series, "{} violations, {in_log} in log, {in_series} in series", violations.len());
    for v in &violations {
        ensure!(
            v.observation.identity.company_prefix_text == "0434687" && v.observation.identity.item_reference_text == "075861",
            "wrong violation {v:?}"
        );
    }
    let wide = harness::PrivacyPolicy::parse("0434687\n").unwrap();
    let wide_count = harness::check_policy(&seen.observations, &wide).len();
    let from_p = series.fqdns.iter().filter(|f| f.company_prefix_text == "0434687").count();
    ensure!(wide_count == from_p, "manufacturer-wide: {wide_count} vs {from_p}");
    Ok(format!("{} violations of (0434687, 075861) in {} logged queries", violations.len(), seen.observations.len()))
}

fn random_fields(rng: &mut ChaCha8Rng) -> Sgtin96Fields {
    let row = PARTITION_TABLE[rng.gen_range(0..PARTITION_TABLE.len())];
    Sgtin96Fields {
        filter: rng.gen_range(0..8),
        partition: row.partition,
        company_prefix: rng.gen_range(0..10u64.pow(row.cp_digits).min(1u64 << row.cp_bits)),
        item_reference: rng.gen_range(0..10u64.pow(row.ir_digits).min(1u64 << row.ir_bits)),
        serial: rng.gen_range(0..=codec::SERIAL_MAX),
    }
}

fn proptest_run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let f = random_fields(&mut rng);
        let raw = codec::encode_sgtin96(&f).map_err(|e| format!("{f:?}: {e}"))?;
        let back = codec::decode_sgtin96(raw).map_err(|e| format!("{raw:#x}: {e}"))?;
        ensure!(back == f, "round trip {f:?} -> {back:?}");
        let uri = codec::fields_to_uri(&f).to_string();
        let parsed = codec::parse_uri(&uri).map_err(|e| format!("{uri}: {e}"))?;
        ensure!(codec::encode_sgtin96(&Sgtin96Fields { filter: f.filter, ..parsed }).unwrap() == raw, "uri round trip {uri}");
    }

    proptest_run(2000, prop::collection::vec(0.0f64..1.0, 1..64), |w| {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let h = metrics::entropy(&p).unwrap();
        prop_assert!(h >= -1e-12 && h <= (p.len() as f64).log2() + 1e-9);
        let u = vec![1.0 / p.len() as f64; p.len()];
        prop_assert!((metrics::entropy(&u).unwrap() - (p.len() as f64).log2()).abs() < 1e-9);
        Ok(())
    })?;

    let record = (0u16..4, 0u16..4, prop::sample::select(vec!["html", "xmlrpc", "ws"]), 0u32..50)
        .prop_map(|(order, pref, svc, n)| NaptrRecord {
            order,
            ..NaptrRecord::ons(pref, svc, &format!("http://h{n}.example.com/"))
        });
    proptest_run(2000, (prop::collection::vec(record, 0..12), prop::sample::select(vec!["html", "xmlrpc", "ws"])), |(records, want)| {
        let got = ons::select_endpoint(&records, want);
        let best = records
            .iter()
            .filter(|r| r.service.eq_ignore_ascii_case(&format!("EPC+{want}")))
            .map(|r| (r.preference, r.order, ons::extract_url(&r.regexp).unwrap()))
            .min();
        match (got, best) {
            (Ok(ep), Some((pref, order, url))) => prop_assert_eq!((ep.preference, ep.order, ep.url), (pref, order, url)),
            (Err(_), None) => {}
            (g, b) => prop_assert!(false, "selection {:?} vs oracle {:?}", g, b),
        }
        Ok(())
    })?;

    let spec = (0u64..50, 1u64..4, 0u64..100, 1u64..6, 1u32..4, 0u32..3, any::<u64>(), 0.0f64..=1.0).prop_map(
        |(cp, ncp, ir, nir, lo, extra, seed, frac)| {
            let mut s = ZoneSetSpec::new("R", (cp, cp + ncp - 1), (ir, ir + nir - 1), 0).with_seed(seed);
            s.per_name_min = lo;
            s.per_name_max = lo + extra;
            let n = s.fqdn_count();
            let (min, max) = (n * lo as u64, n * (lo + extra) as u64);
            s.total_rrs = min + ((max - min) as f64 * frac).round() as u64;
            s
        },
    );
    proptest_run(300, spec, |s| {
        let zones = zonegen::generate_set(&s).unwrap();
        let st = zonegen::stats(&zones);
        prop_assert_eq!(st.fqdn_count as u64, s.fqdn_count());
        prop_assert_eq!(st.rr_count as u64, s.total_rrs);
        prop_assert!(st.histogram.keys().all(|&k| k as u32 >= s.per_name_min && k as u32 <= s.per_name_max));
        Ok(())
    })?;
    Ok("10^5 codec round trips, entropy bounds, selection oracle, exact zone totals".into())
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let s = Duration::from_secs;
    run(&mut results, 1, "codec fidelity", s(1), criterion_1);
    run(&mut results, 2, "URI to ONS name", s(1), criterion_2);
    run(&mut results, 3, "NAPTR selection", s(1), criterion_3);
    run(&mut results, 4, "zone totals", s(30), criterion_4);
    run(&mut results, 5, "anonymity degree", s(1), criterion_5);
    run(&mut results, 6, "circuit reliability", s(1), criterion_6);
    run(&mut results, 7, "amplified compromise", s(1), criterion_7);
    run(&mut results, 8, "offline four-mode experiment", s(120), criterion_8);
    run(&mut results, 9, "DNSSEC integrity", s(10), criterion_9);
    run(&mut results, 10, "eavesdropper policy violations", s(5), criterion_10);
    run(&mut results, 11, "property suites", s(120), criterion_11);
    let passed = results.iter().filter(|&&ok| ok).count();
    report(format_args!("{passed}/{} criteria passed", results.len()));
    assert_eq!(passed, results.len());
}
