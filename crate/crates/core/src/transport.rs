//! NAPTR queries over the four testbed configurations: direct or
//! SOCKS4a-proxied, each with plain DNS or DNSSEC.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs, UdpSocket};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::codec;
use crate::dnssec::{self, BogusReason, DnskeyRecord, RrSet, RrsigRecord, TrustAnchor, Verdict};
use crate::ons::{self, NaptrRecord, OnsFqdn};
use crate::wire::{rtype, Edns, Message, Name, RData, Rcode, WireError, EDNS_PAYLOAD};
use crate::zonefile;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3);
pub const DEFAULT_MAX_RETRIES: u32 = 3;

const SOCKS_VERSION: u8 = 0x04;
const SOCKS_CONNECT: u8 = 0x01;
pub const SOCKS_GRANTED: u8 = 0x5A;
pub const SOCKS_REJECTED: u8 = 0x5B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    DirectPlain,
    DirectDnssec,
    ProxiedPlain,
    ProxiedDnssec,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::DirectPlain, Mode::DirectDnssec, Mode::ProxiedPlain, Mode::ProxiedDnssec];

    pub fn new(proxied: bool, dnssec: bool) -> Mode {
        match (proxied, dnssec) {
            (false, false) => Mode::DirectPlain,
            (false, true) => Mode::DirectDnssec,
            (true, false) => Mode::ProxiedPlain,
            (true, true) => Mode::ProxiedDnssec,
        }
    }

    pub fn proxied(self) -> bool {
        matches!(self, Mode::ProxiedPlain | Mode::ProxiedDnssec)
    }

    pub fn dnssec(self) -> bool {
        matches!(self, Mode::DirectDnssec | Mode::ProxiedDnssec)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DirectPlain => "dns",
            Mode::DirectDnssec => "dnssec",
            Mode::ProxiedPlain => "tor-dns",
            Mode::ProxiedDnssec => "tor-dnssec",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dns" | "direct" | "direct-dns" => Ok(Mode::DirectPlain),
            "dnssec" | "direct-dnssec" => Ok(Mode::DirectDnssec),
            "tor-dns" | "tor" | "proxied" | "proxied-dns" => Ok(Mode::ProxiedPlain),
            "tor-dnssec" | "proxied-dnssec" => Ok(Mode::ProxiedDnssec),
            _ => Err(TransportError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot interpret {0:?} as a tag, EPC URN or ONS name")]
    Input(String),
    #[error("query encoding: {0}")]
    Encode(WireError),
    #[error("malformed response: {0}")]
    Decode(WireError),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("network: {0}")]
    Io(#[from] io::Error),
    #[error("proxy refused the tunnel (reply 0x{0:02X})")]
    TunnelRefused(u8),
    #[error("proxy handshake timed out")]
    TunnelTimeout,
    #[error("tunnel broken: {0}")]
    TunnelBroken(String),
    #[error("name does not exist: {0}")]
    NxDomain(String),
    #[error("server failure for {0}")]
    ServFail(String),
    #[error("server answered {0}")]
    Rcode(Rcode),
    #[error("response does not match the query")]
    Mismatch,
    #[error("DNSSEC validation failed: {0}")]
    Bogus(BogusReason),
    #[error("DNSSEC validation failed: response is unsigned")]
    Unsigned,
}

impl TransportError {
    /// Failures worth another attempt over a fresh connection.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            TransportError::Timeout(_)
                | TransportError::Io(_)
                | TransportError::TunnelTimeout
                | TransportError::TunnelBroken(_)
                | TransportError::ServFail(_)
                | TransportError::Mismatch
        )
    }
}

#[derive(Debug, Error)]
#[error("{error} (after {attempts} attempt{})", if *.attempts == 1 { "" } else { "s" })]
pub struct ResolveError {
    pub attempts: u32,
    #[source]
    pub error: TransportError,
}

#[derive(Debug, Clone)]
pub struct TransportConfig {
    pub mode: Mode,
    pub nameserver: String,
    pub proxy: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub trust_anchors: Vec<TrustAnchor>,
    /// Verify signatures in DNSSEC modes.
    pub verify: bool,
    /// Withhold records whose verdict is not secure.
    pub strict: bool,
    /// Validation clock in unix seconds; wall clock when unset.
    pub now: Option<u32>,
}

impl TransportConfig {
    pub fn new(mode: Mode, nameserver: impl Into<String>) -> Self {
        TransportConfig {
            mode,
            nameserver: nameserver.into(),
            proxy: None,
            timeout: DEFAULT_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            trust_anchors: Vec::new(),
            verify: false,
            strict: true,
            now: None,
        }
    }

    pub fn with_proxy(mut self, proxy: impl Into<String>) -> Self {
        self.proxy = Some(proxy.into());
        self
    }

    pub fn with_anchors(mut self, anchors: Vec<TrustAnchor>) -> Self {
        self.verify = !anchors.is_empty();
        self.trust_anchors = anchors;
        self
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.mode.proxied() && self.proxy.is_none() {
            return Err(TransportError::Config(format!("{} mode needs a proxy", self.mode)));
        }
        if self.mode.dnssec() && self.verify && self.trust_anchors.is_empty() {
            return Err(TransportError::Config("verification enabled without trust anchors".into()));
        }
        if self.timeout.is_zero() {
            return Err(TransportError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Reads DNSKEY records in master-file syntax as trust anchors.
pub fn load_anchors(text: &str) -> Result<Vec<TrustAnchor>, zonefile::ZoneFileError> {
    Ok(zonefile::parse(text, None)?
        .into_iter()
        .filter_map(|r| match r.data {
            RData::Dnskey(key) => Some(TrustAnchor { owner: r.name, key }),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsResponse {
    pub rcode: Rcode,
    pub answers: Vec<NaptrRecord>,
    pub signatures: Vec<RrsigRecord>,
    pub truncated: bool,
    pub wire_size: usize,
    pub rtt: Duration,
    pub message: Message,
}

impl DnsResponse {
    /// Keeps NAPTR data and covering RRSIGs owned by the question name.
    fn from_message(query: &Message, msg: Message, wire_size: usize, rtt: Duration) -> Result<Self, TransportError> {
        let q = query.questions.first().ok_or(TransportError::Mismatch)?;
        if !msg.response || msg.id != query.id {
            return Err(TransportError::Mismatch);
        }
        if let Some(rq) = msg.questions.first() {
            if !rq.name.eq_ignore_case(&q.name) || rq.qtype != q.qtype {
                return Err(TransportError::Mismatch);
            }
        }
        match msg.rcode {
            Rcode::NoError => {}
            Rcode::NxDomain => return Err(TransportError::NxDomain(q.name.to_string())),
            Rcode::ServFail => return Err(TransportError::ServFail(q.name.to_string())),
            other => return Err(TransportError::Rcode(other)),
        }
        let mut answers = Vec::new();
        let mut signatures = Vec::new();
        for r in msg.answers.iter().filter(|r| r.name.eq_ignore_case(&q.name)) {
            match &r.data {
                RData::Naptr(n) if q.qtype == rtype::NAPTR => answers.push(n.clone()),
                RData::Rrsig(s) if s.type_covered == q.qtype => signatures.push(s.clone()),
                _ => {}
            }
        }
        Ok(DnsResponse {
            rcode: msg.rcode,
            answers,
            signatures,
            truncated: msg.truncated,
            wire_size,
            rtt,
            message: msg,
        })
    }

    fn dnskeys(&self, owner: &Name) -> Vec<DnskeyRecord> {
        self.message
            .answers
            .iter()
            .filter(|r| r.name.eq_ignore_case(owner))
            .filter_map(|r| match &r.data {
                RData::Dnskey(k) => Some(k.clone()),
                _ => None,
            })
            .collect()
    }
}

fn query_for(name: Name, qtype: u16, dnssec: bool) -> Message {
    let edns = dnssec.then_some(Edns {
        payload: EDNS_PAYLOAD,
        dnssec_ok: true,
    });
    Message::query(rand::thread_rng().gen(), name, qtype, edns)
}

/// Standard recursive NAPTR query with a fresh random ID; DNSSEC modes add
/// an OPT record with the DO bit.
pub fn build_query(fqdn: &OnsFqdn, mode: Mode) -> Result<Message, TransportError> {
    let text = fqdn.to_string();
    if text.trim_end_matches('.').len() > ons::MAX_NAME_LEN {
        return Err(TransportError::Encode(WireError::NameTooLong));
    }
    let name = Name::from_ascii(&text).map_err(TransportError::Encode)?;
    Ok(query_for(name, rtype::NAPTR, mode.dnssec()))
}

fn resolve_addr(hostport: &str) -> Result<SocketAddr, TransportError> {
    hostport
        .to_socket_addrs()
        .map_err(|e| TransportError::Config(format!("{hostport}: {e}")))?
        .next()
        .ok_or_else(|| TransportError::Config(format!("{hostport}: no address")))
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

fn remaining(deadline: Instant, timeout: Duration) -> Result<Duration, TransportError> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or(TransportError::Timeout(timeout))
}

fn read_framed(stream: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 2];
    stream.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_be_bytes(len) as usize];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

fn write_framed(stream: &mut TcpStream, msg: &[u8]) -> io::Result<()> {
    let len = u16::try_from(msg.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "message too long"))?;
    let mut framed = Vec::with_capacity(msg.len() + 2);
    framed.extend_from_slice(&len.to_be_bytes());
    framed.extend_from_slice(msg);
    stream.write_all(&framed)
}

fn decode_response(query: &Message, bytes: &[u8], rtt: Duration) -> Result<DnsResponse, TransportError> {
    let msg = Message::from_wire(bytes).map_err(TransportError::Decode)?;
    DnsResponse::from_message(query, msg, bytes.len(), rtt)
}

fn exchange_tcp(query: &Message, wire: &[u8], addr: SocketAddr, timeout: Duration, start: Instant) -> Result<DnsResponse, TransportError> {
    let deadline = start + timeout;
    let mut stream = TcpStream::connect_timeout(&addr, remaining(deadline, timeout)?)?;
    stream.set_read_timeout(Some(remaining(deadline, timeout)?))?;
    stream.set_write_timeout(Some(remaining(deadline, timeout)?))?;
    let io_err = |e: io::Error| if is_timeout(&e) { TransportError::Timeout(timeout) } else { TransportError::Io(e) };
    write_framed(&mut stream, wire).map_err(io_err)?;
    let resp = read_framed(&mut stream).map_err(io_err)?;
    decode_response(query, &resp, start.elapsed())
}

/// UDP exchange with stream fallback on truncation.
pub fn send_direct(query: &Message, nameserver: &str, timeout: Duration) -> Result<DnsResponse, TransportError> {
    let addr = resolve_addr(nameserver)?;
    let wire = query.to_wire().map_err(TransportError::Encode)?;
    let bind: SocketAddr = if addr.is_ipv4() { ([0, 0, 0, 0], 0).into() } else { ([0u16; 8], 0).into() };
    let socket = UdpSocket::bind(bind)?;
    socket.connect(addr)?;
    let start = Instant::now();
    let deadline = start + timeout;
    socket.send(&wire)?;
    let mut buf = vec![0u8; 65535];
    loop {
        socket.set_read_timeout(Some(remaining(deadline, timeout)?))?;
        let n = match socket.recv(&mut buf) {
            Ok(n) => n,
            Err(e) if is_timeout(&e) => return Err(TransportError::Timeout(timeout)),
            Err(e) => return Err(e.into()),
        };
        let msg = match Message::from_wire(&buf[..n]) {
            Ok(m) if m.id == query.id && m.response => m,
            Ok(_) => continue,
            Err(e) => return Err(TransportError::Decode(e)),
        };
        if msg.truncated {
            log::debug!("truncated UDP response from {addr}, retrying over TCP");
            return exchange_tcp(query, &wire, addr, timeout, start);
        }
        return DnsResponse::from_message(query, msg, n, start.elapsed());
    }
}

fn split_host_port(hostport: &str) -> Result<(String, u16), TransportError> {
    let bad = || TransportError::Config(format!("expected host:port, got {hostport:?}"));
    let (host, port) = hostport.rsplit_once(':').ok_or_else(bad)?;
    let host = host.trim_start_matches('[').trim_end_matches(']');
    if host.is_empty() || host.contains('\0') {
        return Err(bad());
    }
    Ok((host.to_string(), port.parse().map_err(|_| bad())?))
}

/// SOCKS4a CONNECT request with the destination given as a hostname.
pub fn socks4a_request(host: &str, port: u16) -> Vec<u8> {
    let mut req = Vec::with_capacity(10 + host.len());
    req.push(SOCKS_VERSION);
    req.push(SOCKS_CONNECT);
    req.extend_from_slice(&port.to_be_bytes());
    req.extend_from_slice(&[0, 0, 0, 1]);
    req.push(0);
    req.extend_from_slice(host.as_bytes());
    req.push(0);
    req
}

/// Stream exchange through a SOCKS4a proxy; rtt includes the handshake.
pub fn send_proxied(query: &Message, proxy: &str, nameserver: &str, timeout: Duration) -> Result<DnsResponse, TransportError> {
    let proxy_addr = resolve_addr(proxy)?;
    let (host, port) = split_host_port(nameserver)?;
    let wire = query.to_wire().map_err(TransportError::Encode)?;
    let start = Instant::now();
    let deadline = start + timeout;
    let mut stream = TcpStream::connect_timeout(&proxy_addr, timeout).map_err(|e| {
        if is_timeout(&e) {
            TransportError::TunnelTimeout
        } else {
            TransportError::Io(e)
        }
    })?;
    stream.set_nodelay(true)?;
    let handshake_err = |e: io::Error| match e.kind() {
        _ if is_timeout(&e) => TransportError::TunnelTimeout,
        io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => {
            TransportError::TunnelBroken(format!("during handshake: {e}"))
        }
        _ => TransportError::Io(e),
    };
    let t = remaining(deadline, timeout).map_err(|_| TransportError::TunnelTimeout)?;
    stream.set_read_timeout(Some(t))?;
    stream.set_write_timeout(Some(t))?;
    stream.write_all(&socks4a_request(&host, port)).map_err(handshake_err)?;
    let mut reply = [0u8; 8];
    stream.read_exact(&mut reply).map_err(handshake_err)?;
    if reply[1] != SOCKS_GRANTED {
        return Err(TransportError::TunnelRefused(reply[1]));
    }
    let t = remaining(deadline, timeout)?;
    stream.set_read_timeout(Some(t))?;
    stream.set_write_timeout(Some(t))?;
    let tunnel_err = |e: io::Error| {
        if is_timeout(&e) {
            TransportError::Timeout(timeout)
        } else {
            TransportError::TunnelBroken(e.to_string())
        }
    };
    write_framed(&mut stream, &wire).map_err(tunnel_err)?;
    let resp = read_framed(&mut stream).map_err(tunnel_err)?;
    decode_response(query, &resp, start.elapsed())
}

fn send(query: &Message, config: &TransportConfig) -> Result<DnsResponse, TransportError> {
    match (&config.proxy, config.mode.proxied()) {
        (Some(proxy), true) => send_proxied(query, proxy, &config.nameserver, config.timeout),
        (None, true) => Err(TransportError::Config("proxied mode without proxy".into())),
        _ => send_direct(query, &config.nameserver, config.timeout),
    }
}

/// Accepts a 96-bit tag in hex, an EPC URN or an ONS name.
pub fn parse_target(input: &str) -> Result<OnsFqdn, TransportError> {
    let s = input.trim();
    let bad = || TransportError::Input(s.to_string());
    if s.len() >= 4 && s[..4].eq_ignore_ascii_case("urn:") {
        return ons::urn_to_fqdn(s).map_err(|_| bad());
    }
    let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if hex.len() == 24 && hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        let fields = codec::parse_hex(s).and_then(codec::decode_sgtin96).map_err(|_| bad())?;
        return Ok(ons::uri_to_fqdn(&codec::fields_to_uri(&fields)));
    }
    OnsFqdn::parse(s).map_err(|_| bad())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub fqdn: OnsFqdn,
    pub records: Vec<NaptrRecord>,
    pub rtt: Duration,
    pub attempts: u32,
    pub wire_size: usize,
    /// Present in DNSSEC modes with verification enabled.
    pub verdict: Option<Verdict>,
}

impl Resolution {
    pub fn retries(&self) -> u32 {
        self.attempts - 1
    }
}

fn verify_response(
    owner: &Name,
    resp: &DnsResponse,
    config: &TransportConfig,
    now: u32,
) -> Result<(Verdict, Duration), TransportError> {
    let rrset = RrSet::naptr(owner, &resp.answers).map_err(TransportError::Encode)?;
    if resp.signatures.is_empty() {
        return Ok((Verdict::Unsigned, Duration::ZERO));
    }
    let direct = resp
        .signatures
        .iter()
        .any(|s| config.trust_anchors.iter().any(|a| a.key.key_tag() == s.key_tag && a.owner.eq_ignore_case(&s.signer_name)));
    if direct {
        return Ok((dnssec::validate_rrset(&rrset, &resp.signatures, &config.trust_anchors, now), Duration::ZERO));
    }
    // Anchor is a key-signing key: fetch and validate the signer's DNSKEY set.
    let signer = resp.signatures[0].signer_name.clone();
    let query = query_for(signer.clone(), rtype::DNSKEY, true);
    let keys = send(&query, config)?;
    let keyset = keys.dnskeys(&signer);
    let zone_keys = match dnssec::keys_from_validated_keyset(&signer, &keyset, &keys.signatures, &config.trust_anchors, now) {
        Ok(k) => k,
        Err(reason) => return Ok((Verdict::Bogus(reason), keys.rtt)),
    };
    Ok((dnssec::validate_rrset(&rrset, &resp.signatures, &zone_keys, now), keys.rtt))
}

fn attempt(fqdn: &OnsFqdn, config: &TransportConfig) -> Result<Resolution, TransportError> {
    let query = build_query(fqdn, config.mode)?;
    let resp = send(&query, config)?;
    let owner = query.questions[0].name.clone();
    let mut rtt = resp.rtt;
    let verdict = if config.mode.dnssec() && config.verify {
        let now = config.now.unwrap_or_else(dnssec::unix_now);
        let (verdict, extra) = verify_response(&owner, &resp, config, now)?;
        rtt += extra;
        Some(verdict)
    } else {
        None
    };
    if config.strict {
        match &verdict {
            Some(Verdict::Bogus(reason)) => return Err(TransportError::Bogus(reason.clone())),
            Some(Verdict::Unsigned) => return Err(TransportError::Unsigned),
            _ => {}
        }
    }
    Ok(Resolution {
        fqdn: fqdn.clone(),
        records: resp.answers,
        rtt,
        attempts: 1,
        wire_size: resp.wire_size,
        verdict,
    })
}

/// Resolves a tag, URN or ONS name, retrying transient failures over fresh
/// connections up to `max_retries` times.
pub fn resolve(input: &str, config: &TransportConfig) -> Result<Resolution, ResolveError> {
    let fqdn = parse_target(input).map_err(|error| ResolveError { attempts: 0, error })?;
    resolve_fqdn(&fqdn, config)
}

pub fn resolve_fqdn(fqdn: &OnsFqdn, config: &TransportConfig) -> Result<Resolution, ResolveError> {
    config.validate().map_err(|error| ResolveError { attempts: 0, error })?;
    let mut attempts = 0;
    loop {
        attempts += 1;
        match attempt(fqdn, config) {
            Ok(mut r) => {
                r.attempts = attempts;
                return Ok(r);
            }
            Err(error) if error.is_retryable() && attempts <= config.max_retries => {
                log::debug!("{fqdn} attempt {attempts} failed: {error}");
            }
            Err(error) => return Err(ResolveError { attempts, error }),
        }
    }
}
