use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use epc_ons::codec::{self, Sgtin96Fields};
use epc_ons::dnssec::signer::SigningKey;
use epc_ons::dnssec::{self, Algorithm, TrustAnchor};
use epc_ons::harness::{self, report, BenchOptions, NameSource, NameserverConfig, ProxyConfig, QuerySeries, StubNameserver, StubProxy, ZoneData};
use epc_ons::metrics::{self, NodeInventory, SelectionModel};
use epc_ons::ons::{self, OnsFqdn};
use epc_ons::par::Execution;
use epc_ons::transport::{self, Mode, TransportConfig};
use epc_ons::wire::RData;
use epc_ons::zonegen::{self, ZoneSetSpec};
use epc_ons::zonefile;

#[derive(Parser)]
#[command(name = "epc-ons", version, about = "EPC Object Name Service lookups and privacy tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode an EPC URN (or re-encode a tag) as a 96-bit hex tag.
    Encode {
        input: String,
        /// Filter value carried in the tag (URNs do not hold one).
        #[arg(long, default_value_t = 0)]
        filter: u8,
    },
    /// Decode a 96-bit hex tag (or URN) into its fields.
    Decode { input: String },
    /// Translate a tag or URN to its ONS name, or an ONS name back to its identity.
    Translate { input: String },
    /// Look up the EPCIS records of a tag, URN or ONS name.
    Resolve(ResolveArgs),
    /// Generate testbed zone files.
    Zonegen(ZonegenArgs),
    /// Anonymity, reliability and compromise metrics.
    Metrics(MetricsArgs),
    /// Create or inspect query series.
    Series {
        #[command(subcommand)]
        command: SeriesCommand,
    },
    /// Replay a series across transport modes and report latencies.
    Bench(BenchArgs),
    /// Extract manufacturer/product pairs from a query log and check a privacy policy.
    Sniff {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run the stub nameserver and SOCKS4a proxy until interrupted.
    Stub(StubArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Route {
    Direct,
    Tor,
}

#[derive(Args)]
struct TransportArgs {
    #[arg(long, default_value = "127.0.0.1:53")]
    ns: String,
    #[arg(long)]
    proxy: Option<String>,
    /// Timeout per attempt in milliseconds.
    #[arg(long, default_value_t = 3000)]
    timeout: u64,
    #[arg(long, default_value_t = transport::DEFAULT_MAX_RETRIES)]
    retries: u32,
    /// DNSKEY records (master-file syntax) trusted for verification.
    #[arg(long)]
    anchor: Option<PathBuf>,
    /// Return records even when verification fails.
    #[arg(long)]
    permissive: bool,
}

impl TransportArgs {
    fn config(&self, mode: Mode) -> Result<TransportConfig> {
        let mut c = TransportConfig::new(mode, self.ns.clone());
        c.proxy = self.proxy.clone();
        c.timeout = Duration::from_millis(self.timeout);
        c.max_retries = self.retries;
        c.strict = !self.permissive;
        if let Some(path) = &self.anchor {
            c = c.with_anchors(read_anchors(path)?);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ResolveArgs {
    input: String,
    #[arg(long, value_enum, default_value = "direct")]
    mode: Route,
    #[arg(long)]
    dnssec: bool,
    /// Print the endpoint selected for this service.
    #[arg(long)]
    service: Option<String>,
    #[command(flatten)]
    transport: TransportArgs,
}

#[derive(Args)]
struct ZonegenArgs {
    #[arg(long, conflicts_with_all = ["cp_start", "cp_end", "ir_start", "ir_end", "total"])]
    set: Option<String>,
    #[arg(long, requires_all = ["cp_end", "ir_start", "ir_end", "total"])]
    cp_start: Option<u64>,
    #[arg(long)]
    cp_end: Option<u64>,
    #[arg(long)]
    ir_start: Option<u64>,
    #[arg(long)]
    ir_end: Option<u64>,
    /// Exact number of NAPTR records in the set.
    #[arg(long)]
    total: Option<u64>,
    #[arg(long, default_value_t = 1)]
    min: u32,
    #[arg(long, default_value_t = 5)]
    max: u32,
    #[arg(long, default_value = "custom")]
    label: String,
    #[arg(long, default_value_t = zonegen::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// CSV of `bandwidth_kbps,count` rows; the 2008 relay census by default.
    #[arg(long)]
    inventory: Option<PathBuf>,
    #[arg(long, default_value = "bandwidth")]
    model: SelectionModel,
    #[arg(long)]
    reliability: Option<f64>,
    #[arg(long, default_value_t = 3)]
    path_len: u32,
    /// Number of attacker-controlled relays.
    #[arg(long)]
    compromised: Option<u64>,
    #[arg(long)]
    amplify: Option<f64>,
}

#[derive(Subcommand)]
enum SeriesCommand {
    Make {
        /// Builtin zone sets to sample from (A, B, C).
        #[arg(long = "set")]
        sets: Vec<String>,
        /// Directory of zone files to sample from.
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long, default_value_t = harness::series::DEFAULT_LENGTH)]
        length: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "series")]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
    Show { file: PathBuf },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    series: PathBuf,
    /// Comma-separated subset of dns,dnssec,tor-dns,tor-dnssec.
    #[arg(long, default_value = "dns,dnssec,tor-dns,tor-dnssec")]
    modes: String,
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: u32,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    transport: TransportArgs,
}

#[derive(Args)]
struct StubArgs {
    #[arg(long)]
    zones: PathBuf,
    /// Delay injected by the proxy on every response, in milliseconds.
    #[arg(long, default_value_t = 0)]
    delay: u64,
    /// Fraction of tunnels closed right after the handshake.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Delay added by the nameserver, in milliseconds.
    #[arg(long, default_value_t = 0)]
    ns_delay: u64,
    #[arg(long, default_value = "127.0.0.1:5353")]
    listen: String,
    #[arg(long, default_value = "127.0.0.1:9050")]
    proxy_listen: String,
    /// Sign the zones in memory with fresh RSA keys and write the KSK anchors here.
    #[arg(long)]
    sign: Option<PathBuf>,
    /// Append the query log (`timestamp name`) to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn read_anchors(path: &Path) -> Result<Vec<TrustAnchor>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let anchors = transport::load_anchors(&text).with_context(|| format!("parsing {}", path.display()))?;
    if anchors.is_empty() {
        bail!("{} holds no DNSKEY records", path.display());
    }
    Ok(anchors)
}

fn parse_tag_or_urn(input: &str) -> Result<Sgtin96Fields> {
    let s = input.trim();
    if s.len() > 4 && s[..4].eq_ignore_ascii_case("urn:") {
        Ok(codec::parse_uri(s)?)
    } else {
        Ok(codec::decode_sgtin96(codec::parse_hex(s)?)?)
    }
}

fn print_fields(f: &Sgtin96Fields) -> Result<()> {
    println!("hex={}", codec::format_hex(codec::encode_sgtin96(f)?));
    println!("urn={}", codec::fields_to_uri(f));
    println!("filter={}", f.filter);
    println!("partition={}", f.partition);
    println!("company_prefix={}", f.company_prefix);
    println!("item_reference={}", f.item_reference);
    println!("serial={}", f.serial);
    Ok(())
}

fn translate(input: &str) -> Result<()> {
    let s = input.trim();
    if s.len() > 4 && s[..4].eq_ignore_ascii_case("urn:") || s.trim_start_matches("0x").len() == 24 {
        let f = parse_tag_or_urn(s)?;
        println!("{}", ons::uri_to_fqdn(&codec::fields_to_uri(&f)));
    } else {
        let id = ons::fqdn_to_identity(s)?;
        println!("urn:epc:idpat:{}:{}.{}.*", id.scheme_label, id.company_prefix_text, id.item_reference_text);
    }
    Ok(())
}

fn resolve(args: &ResolveArgs) -> Result<()> {
    let mode = Mode::new(matches!(args.mode, Route::Tor), args.dnssec);
    let config = args.transport.config(mode)?;
    let r = transport::resolve(&args.input, &config)?;
    for rec in &r.records {
        println!("{}. IN NAPTR {}", r.fqdn, zonefile::format_rdata(&RData::Naptr(rec.clone())));
    }
    if let Some(service) = &args.service {
        let ep = ons::select_endpoint(&r.records, service)?;
        println!("endpoint={}", ep.url);
    }
    println!(
        "; mode={mode} rtt_ms={:.3} attempts={} verdict={}",
        r.rtt.as_secs_f64() * 1e3,
        r.attempts,
        r.verdict.map_or("-".to_string(), |v| v.to_string())
    );
    Ok(())
}

fn zonegen_spec(args: &ZonegenArgs) -> Result<ZoneSetSpec> {
    let mut spec = match (&args.set, args.cp_start) {
        (Some(label), _) => zonegen::builtin_spec(label).with_context(|| format!("unknown set {label}"))?,
        (None, Some(cp_start)) => {
            let need = |v: Option<u64>, name: &str| v.with_context(|| format!("--{name} is required"));
            ZoneSetSpec::new(
                &args.label,
                (cp_start, need(args.cp_end, "cp-end")?),
                (need(args.ir_start, "ir-start")?, need(args.ir_end, "ir-end")?),
                need(args.total, "total")?,
            )
        }
        (None, None) => bail!("give --set or explicit ranges"),
    };
    if args.set.is_none() {
        spec.per_name_min = args.min;
        spec.per_name_max = args.max;
    }
    spec.seed = args.seed;
    Ok(spec)
}

fn zonegen_cmd(args: &ZonegenArgs) -> Result<()> {
    let spec = zonegen_spec(args)?;
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let zones = zonegen::generate_set_with(&spec, exec)?;
    if let Some(dir) = &args.out {
        let paths = zonegen::write_set(&zones, dir)?;
        log::info!("wrote {} zone files to {}", paths.len(), dir.display());
    }
    println!("{}", zonegen::stats(&zones).csv_line(&spec.label));
    Ok(())
}

fn metrics_cmd(args: &MetricsArgs) -> Result<()> {
    let inventory = match &args.inventory {
        Some(path) => NodeInventory::from_csv(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => NodeInventory::tor_2008(),
    };
    let r = metrics::anonymity_report(&inventory, args.model)?;
    println!("model={}", r.model);
    println!("nodes={}", r.nodes);
    println!("entropy_bits={:.6}", r.entropy_bits);
    println!("max_entropy_bits={:.6}", r.max_entropy_bits);
    match r.normalized_degree {
        Some(d) => println!("degree={d:.6}"),
        None => println!("degree="),
    }
    if let Some(f) = args.reliability {
        println!("circuit_reliability={:.6}", metrics::circuit_reliability(f, args.path_len)?);
    }
    let mut base = None;
    if let Some(m) = args.compromised {
        let frac = metrics::compromise_fraction(m, inventory.total_nodes())?;
        println!("compromised_fraction={frac:.6}");
        base = Some(frac);
    }
    if let (Some(factor), Some(b)) = (args.amplify, base) {
        println!("amplified_fraction={:.6}", metrics::amplified_compromise(b, factor)?);
    }
    Ok(())
}

fn series_cmd(cmd: &SeriesCommand) -> Result<()> {
    match cmd {
        SeriesCommand::Make {
            sets,
            zones,
            length,
            seed,
            label,
            out,
        } => {
            let mut sources = Vec::new();
            for s in sets {
                let spec = zonegen::builtin_spec(s).with_context(|| format!("unknown set {s}"))?;
                sources.push(NameSource {
                    label: spec.label.clone(),
                    fqdns: spec.fqdns(),
                });
            }
            if let Some(dir) = zones {
                let data = ZoneData::from_dir(dir)?;
                let mut fqdns: Vec<OnsFqdn> = data
                    .records()
                    .filter(|r| r.rtype == epc_ons::wire::rtype::NAPTR)
                    .filter_map(|r| OnsFqdn::parse(&r.name.to_string()).ok())
                    .collect();
                fqdns.sort();
                fqdns.dedup();
                let label = dir.file_name().map_or("zones".into(), |n| n.to_string_lossy().replace(',', "_"));
                sources.push(NameSource { label, fqdns });
            }
            let series = harness::make_series(label, &sources, *length, *seed)?;
            series.save(out)?;
            println!("{} names written to {}", series.len(), out.display());
        }
        SeriesCommand::Show { file } => print!("{}", QuerySeries::load(file)?.to_text()),
    }
    Ok(())
}

fn bench_cmd(args: &BenchArgs) -> Result<()> {
    let series = QuerySeries::load(&args.series)?;
    let configs = args
        .modes
        .split(',')
        .map(|m| {
            let mode: Mode = m.trim().parse()?;
            args.transport.config(mode)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = harness::run_bench(
        &series,
        &configs,
        BenchOptions {
            parallelism: args.parallel,
            repetitions: args.repetitions,
        },
    )?;
    for m in &report.failed_modes {
        eprintln!("mode {m} failed: nothing resolved");
    }
    report::emit(&report, &args.out)?;
    print!("{}", report::report_csv(&report));
    Ok(())
}

fn sniff_cmd(log: &Path, policy: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let seen = harness::eavesdrop(&text);
    for o in &seen.observations {
        println!(
            "{} manufacturer={} product={} scheme={}",
            o.timestamp, o.identity.company_prefix_text, o.identity.item_reference_text, o.identity.scheme_label
        );
    }
    println!("; observations={} skipped={} unparseable={}", seen.observations.len(), seen.skipped, seen.warnings.len());
    if let Some(path) = policy {
        let policy = harness::PrivacyPolicy::parse(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
        let violations = harness::check_policy(&seen.observations, &policy);
        for v in &violations {
            println!("VIOLATION {} {} rule={}", v.observation.timestamp, v.observation.fqdn, v.rule);
        }
        println!("; violations={}", violations.len());
    }
    Ok(())
}

fn stub_cmd(args: &StubArgs) -> Result<()> {
    let mut zones = ZoneData::from_dir(&args.zones)?;
    if let Some(anchor_path) = &args.sign {
        let mut rng = rand::thread_rng();
        let ksk = SigningKey::generate(&mut rng, Algorithm::RsaSha256, 1200, true)?;
        let zsk = SigningKey::generate(&mut rng, Algorithm::RsaSha256, 1024, false)?;
        let now = dnssec::unix_now();
        let (signed, anchors) = zones.signed_with(&ksk, &zsk, now - 3600, now + 30 * 86_400)?;
        let text: String = anchors
            .iter()
            .map(|a| {
                let rec = epc_ons::wire::Record::new(a.owner.clone(), 3600, RData::Dnskey(a.key.clone()));
                format!("{}\n", zonefile::format_record(&rec))
            })
            .collect();
        fs::write(anchor_path, text).with_context(|| format!("writing {}", anchor_path.display()))?;
        zones = signed;
    }
    let ns = StubNameserver::start(
        zones,
        NameserverConfig {
            bind: args.listen.parse().context("--listen")?,
            delay: Duration::from_millis(args.ns_delay),
        },
    )?;
    let proxy = StubProxy::start(ProxyConfig {
        bind: args.proxy_listen.parse().context("--proxy-listen")?,
        delay: Duration::from_millis(args.delay),
        drop_rate: args.drop,
        seed: args.seed,
        ..Default::default()
    })?;
    println!("nameserver {} (udp+tcp), socks4a proxy {}", ns.addr(), proxy.addr());
    let mut log_file = match &args.log {
        Some(p) => Some(fs::OpenOptions::new().create(true).append(true).open(p).with_context(|| format!("opening {}", p.display()))?),
        None => None,
    };
    let mut written = 0;
    loop {
        std::thread::sleep(Duration::from_millis(200));
        if let Some(f) = log_file.as_mut() {
            let entries = ns.query_log();
            for e in &entries[written..] {
                writeln!(f, "{} {}", e.timestamp, e.name)?;
            }
            written = entries.len();
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Encode { input, filter } => {
            let mut f = parse_tag_or_urn(&input)?;
            if input.trim().to_ascii_lowercase().starts_with("urn:") {
                f.filter = filter;
            }
            print_fields(&f)
        }
        Command::Decode { input } => print_fields(&parse_tag_or_urn(&input)?),
        Command::Translate { input } => translate(&input),
        Command::Resolve(args) => resolve(&args),
        Command::Zonegen(args) => zonegen_cmd(&args),
        Command::Metrics(args) => metrics_cmd(&args),
        Command::Series { command } => series_cmd(&command),
        Command::Bench(args) => bench_cmd(&args),
        Command::Sniff { log, policy } => sniff_cmd(&log, policy.as_deref()),
        Command::Stub(args) => stub_cmd(&args),
    }
}
