//! Transport and harness behaviour against the loopback stub services.

use std::time::Duration;

use epc_ons::dnssec::Verdict;
use epc_ons::harness::{self, report, BenchOptions, NameSource, NameserverConfig, ProxyConfig, StubNameserver, StubProxy, ZoneData};
use epc_ons::ons::{self, NaptrRecord};
use epc_ons::transport::{self, load_anchors, Mode, TransportConfig, TransportError};
use epc_ons::wire::{rtype, Name, RData, Record};
use epc_ons::{zonefile, zonegen};
use statrs::distribution::{ContinuousCDF, StudentsT};

const FQDN: &str = "075861.0434687.sgtin.id.onsepc.com";
const URN: &str = "urn:epc:id:sgtin:0434687.075861.274877906943";
const TAG: &str = "0x30141A87FC4A157FFFFFFFFF";

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn fixture_zone(name: &str) -> ZoneData {
    let records = zonefile::parse(&data(name), None).unwrap();
    let mut z = ZoneData::new();
    z.add_zone(&Name::from_ascii("0434687.sgtin.id.onsepc.com").unwrap(), records);
    z
}

fn example_zone() -> ZoneData {
    let owner = Name::from_ascii(FQDN).unwrap();
    let records = ons::example_records()
        .into_iter()
        .map(|n| Record::new(owner.clone(), 3600, RData::Naptr(n)))
        .collect();
    let mut z = ZoneData::new();
    z.add_zone(&Name::from_ascii("0434687.sgtin.id.onsepc.com").unwrap(), records);
    z
}

fn sorted(mut v: Vec<NaptrRecord>) -> Vec<NaptrRecord> {
    v.sort();
    v
}

fn fast(mut c: TransportConfig) -> TransportConfig {
    c.timeout = Duration::from_millis(800);
    c
}

#[test]
fn direct_answers_match_stub_and_inputs_agree() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let c = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let by_urn = transport::resolve(URN, &c).unwrap();
    assert_eq!(sorted(by_urn.records.clone()), sorted(ons::example_records()));
    assert_eq!(by_urn.attempts, 1);
    assert_eq!(by_urn.verdict, None);
    let by_tag = transport::resolve(TAG, &c).unwrap();
    assert_eq!(by_tag.records, by_urn.records);
    assert_eq!(by_tag.fqdn, by_urn.fqdn);
    let ep = ons::select_endpoint(&by_tag.records, "xmlrpc").unwrap();
    assert_eq!(ep.url, "http://gateway1.xmlrpc.com/servlet/example");
}

#[test]
fn nxdomain_is_a_typed_failure_and_not_retried() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let c = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let err = transport::resolve("000001.0434687.sgtin.id.onsepc.com", &c).unwrap_err();
    assert!(matches!(err.error, TransportError::NxDomain(_)), "{err}");
    assert_eq!(err.attempts, 1);
}

#[test]
fn oversized_udp_answer_falls_back_to_stream() {
    let owner = Name::from_ascii(FQDN).unwrap();
    let records = (0..20)
        .map(|k| {
            let url = format!("http://epcis-{k}.example.com/a/rather/long/path/to/pad/the/response/{k}");
            Record::new(owner.clone(), 60, RData::Naptr(NaptrRecord::ons(k, "html", &url)))
        })
        .collect();
    let mut z = ZoneData::new();
    z.add_zone(&Name::from_ascii("0434687.sgtin.id.onsepc.com").unwrap(), records);
    let ns = StubNameserver::start(z, NameserverConfig::default()).unwrap();
    let c = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let r = transport::resolve(FQDN, &c).unwrap();
    assert_eq!(r.records.len(), 20);
    assert!(r.wire_size > 512);
    let log = ns.query_log();
    assert_eq!(log.len(), 2);
    assert!(!log[0].stream && log[1].stream);
}

#[test]
fn proxied_matches_direct_and_pays_the_delay() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let proxy = StubProxy::start(ProxyConfig {
        delay: Duration::from_millis(40),
        ..Default::default()
    })
    .unwrap();
    let direct = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let tor = fast(TransportConfig::new(Mode::ProxiedPlain, ns.addr().to_string()).with_proxy(proxy.addr().to_string()));
    let d = transport::resolve(FQDN, &direct).unwrap();
    let p = transport::resolve(FQDN, &tor).unwrap();
    assert_eq!(sorted(d.records), sorted(p.records));
    assert!(p.rtt >= Duration::from_millis(40));
    assert_eq!(proxy.connections(), 1);
    // The proxy resolved the nameserver by the hostname carried in the request.
    let by_name = fast(
        TransportConfig::new(Mode::ProxiedPlain, format!("localhost:{}", ns.addr().port())).with_proxy(proxy.addr().to_string()),
    );
    assert!(transport::resolve(FQDN, &by_name).is_ok());
}

#[test]
fn refused_tunnel_is_not_retried() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let proxy = StubProxy::start(ProxyConfig {
        refuse: true,
        ..Default::default()
    })
    .unwrap();
    let c = fast(TransportConfig::new(Mode::ProxiedPlain, ns.addr().to_string()).with_proxy(proxy.addr().to_string()));
    let err = transport::resolve(FQDN, &c).unwrap_err();
    assert!(matches!(err.error, TransportError::TunnelRefused(0x5B)), "{err}");
    assert_eq!(err.attempts, 1);
}

#[test]
fn dropped_tunnels_exhaust_retries_with_fresh_connections() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let proxy = StubProxy::start(ProxyConfig {
        drop_rate: 1.0,
        ..Default::default()
    })
    .unwrap();
    let mut c = fast(TransportConfig::new(Mode::ProxiedPlain, ns.addr().to_string()).with_proxy(proxy.addr().to_string()));
    c.max_retries = 3;
    let err = transport::resolve(FQDN, &c).unwrap_err();
    assert!(matches!(err.error, TransportError::TunnelBroken(_)), "{err}");
    assert_eq!(err.attempts, 4);
    assert_eq!(proxy.connections(), 4);
    assert_eq!(proxy.drops(), 4);
}

fn dnssec_config(ns: &StubNameserver, anchor_file: &str) -> TransportConfig {
    fast(TransportConfig::new(Mode::DirectDnssec, ns.addr().to_string()).with_anchors(load_anchors(&data(anchor_file)).unwrap()))
}

#[test]
fn externally_signed_zones_validate() {
    for (zone, anchor) in [
        ("signed_zsk.zone", "anchor_zsk.key"),
        ("signed_sha1.zone", "anchor_sha1.key"),
        ("signed_ksk.zone", "anchor_ksk.key"),
    ] {
        let ns = StubNameserver::start(fixture_zone(zone), NameserverConfig::default()).unwrap();
        let r = transport::resolve(URN, &dnssec_config(&ns, anchor)).unwrap();
        assert_eq!(r.verdict, Some(Verdict::Secure), "{zone}");
        assert_eq!(sorted(r.records), sorted(ons::example_records()), "{zone}");
        let asked: Vec<u16> = ns.query_log().iter().map(|e| e.qtype).collect();
        let expected = if zone == "signed_ksk.zone" { vec![rtype::NAPTR, rtype::DNSKEY] } else { vec![rtype::NAPTR] };
        assert_eq!(asked, expected, "{zone}");
    }
}

#[test]
fn wrong_anchor_is_bogus_and_unsigned_is_reported() {
    let ns = StubNameserver::start(fixture_zone("signed_zsk.zone"), NameserverConfig::default()).unwrap();
    let mut c = dnssec_config(&ns, "anchor_ksk.key");
    let err = transport::resolve(FQDN, &c).unwrap_err();
    assert!(matches!(err.error, TransportError::Bogus(_)), "{err}");
    c.strict = false;
    assert!(matches!(transport::resolve(FQDN, &c).unwrap().verdict, Some(Verdict::Bogus(_))));

    let plain = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let mut c = dnssec_config(&plain, "anchor_zsk.key");
    assert!(matches!(transport::resolve(FQDN, &c).unwrap_err().error, TransportError::Unsigned));
    c.strict = false;
    let r = transport::resolve(FQDN, &c).unwrap();
    assert_eq!(r.verdict, Some(Verdict::Unsigned));
    assert_eq!(r.records.len(), 3);
}

#[test]
fn four_modes_agree_on_generated_set() {
    let spec = zonegen::builtin_specs()[0].clone();
    let zones = zonegen::generate_set(&spec).unwrap();
    let ns = StubNameserver::start(ZoneData::from_zones(&zones), NameserverConfig::default()).unwrap();
    let proxy = StubProxy::start(ProxyConfig::default()).unwrap();
    let series = harness::make_series(
        "eq",
        &[NameSource {
            label: "A".into(),
            fqdns: spec.fqdns(),
        }],
        6,
        3,
    )
    .unwrap();
    let configs: Vec<TransportConfig> = Mode::ALL
        .iter()
        .map(|&m| fast(TransportConfig::new(m, ns.addr().to_string()).with_proxy(proxy.addr().to_string())))
        .collect();
    let report = harness::run_bench(
        &series,
        &configs,
        BenchOptions {
            parallelism: 3,
            repetitions: 2,
        },
    )
    .unwrap();
    assert_eq!(report.rows.len(), 4 * 6);
    assert_eq!(report.total_failures(), 0);
    let truth: std::collections::HashMap<String, Vec<NaptrRecord>> = zones
        .iter()
        .flat_map(|z| &z.names)
        .map(|(f, r)| (f.to_string(), sorted(r.clone())))
        .collect();
    for s in &report.samples {
        assert_eq!(Some(&s.answers), truth.get(&s.fqdn), "{} {}", s.mode, s.fqdn);
    }
}

/// t quantile by bisection on the CDF, independent of `inverse_cdf`.
fn t975(df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < 0.975 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn report_statistics_recompute_from_raw_samples() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let series = harness::QuerySeries::parse(&format!("# label=t seed=0 sources=x\n{FQDN}\n{FQDN}\n{FQDN}\n")).unwrap();
    let c = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let report = harness::run_bench(
        &series,
        &[c],
        BenchOptions {
            parallelism: 2,
            repetitions: 4,
        },
    )
    .unwrap();
    let samples_csv = report::samples_csv(&report);
    let report_csv = report::report_csv(&report);
    assert_eq!(report_csv.lines().next().unwrap(), report::REPORT_HEADER);
    for row in report_csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        let k: usize = f[1].parse().unwrap();
        let xs: Vec<f64> = samples_csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|s| s[1].parse::<usize>().unwrap() == k && s[5] == "ok")
            .map(|s| s[6].parse().unwrap())
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let ci = t975(n - 1.0) * sd / n.sqrt();
        assert_eq!(f[2].parse::<f64>().unwrap(), n);
        assert!((f[3].parse::<f64>().unwrap() - mean).abs() < 1e-9);
        assert!((f[4].parse::<f64>().unwrap() - sd).abs() < 1e-9);
        assert!((f[5].parse::<f64>().unwrap() - ci).abs() < 1e-9);
    }
}

#[test]
fn unreachable_mode_is_marked_failed_and_others_proceed() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let series = harness::QuerySeries::parse(&format!("# label=t seed=0 sources=x\n{FQDN}\n{FQDN}\n")).unwrap();
    let mut tor = fast(TransportConfig::new(Mode::ProxiedPlain, ns.addr().to_string()).with_proxy(dead.to_string()));
    tor.max_retries = 1;
    let direct = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    let report = harness::run_bench(&series, &[tor, direct], BenchOptions::default()).unwrap();
    assert_eq!(report.failed_modes, vec![Mode::ProxiedPlain]);
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().all(|r| r.mode == Mode::DirectPlain && r.failures == 0));
}

#[test]
fn query_log_feeds_the_eavesdropper() {
    let ns = StubNameserver::start(example_zone(), NameserverConfig::default()).unwrap();
    let c = fast(TransportConfig::new(Mode::DirectPlain, ns.addr().to_string()));
    transport::resolve(FQDN, &c).unwrap();
    let _ = transport::resolve("000001.0434687.sgtin.id.onsepc.com", &c);
    let seen = harness::eavesdrop(&ns.query_log_text());
    assert_eq!(seen.observations.len(), 2);
    let policy = harness::PrivacyPolicy::parse("0434687,075861").unwrap();
    assert_eq!(harness::check_policy(&seen.observations, &policy).len(), 1);
}
