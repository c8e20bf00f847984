//! Loopback stand-ins for an authoritative ONS server and an onion proxy.
//!
//! The nameserver answers from in-memory zones over UDP and TCP on the same
//! port and logs every question it sees. The proxy speaks SOCKS4a, relays
//! length-prefixed DNS messages and can delay, drop or tamper with traffic.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::dnssec::signer::{sign_zone, SigningKey};
use crate::dnssec::TrustAnchor;
use crate::transport::{SOCKS_GRANTED, SOCKS_REJECTED};
use crate::wire::{rtype, Message, Name, RData, Rcode, Record, UDP_DEFAULT_PAYLOAD};
use crate::zonegen;

const POLL: Duration = Duration::from_millis(2);
const IDLE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Answer(Vec<Record>),
    NoData,
    NxDomain,
    Refused,
}

/// Authoritative data for one or more zones, indexed by lowercase owner.
#[derive(Debug, Clone, Default)]
pub struct ZoneData {
    apexes: Vec<Name>,
    names: HashMap<Name, Vec<Record>>,
    signed: bool,
}

/// Zone apex: the SOA owner, else the DNSKEY owner, else the longest common
/// suffix of all owners.
pub fn infer_apex(records: &[Record]) -> Option<Name> {
    let by_type = |t: u16| records.iter().find(|r| r.rtype == t).map(|r| r.name.to_lowercase());
    if let Some(n) = by_type(rtype::SOA).or_else(|| by_type(rtype::DNSKEY)) {
        return Some(n);
    }
    let first = records.first()?.name.to_lowercase();
    (0..=first.labels().len())
        .rev()
        .map(|n| first.suffix(n))
        .find(|s| records.iter().all(|r| r.name.ends_with(s)))
}

impl ZoneData {
    pub fn new() -> Self {
        ZoneData::default()
    }

    pub fn add_zone(&mut self, apex: &Name, records: Vec<Record>) {
        let apex = apex.to_lowercase();
        if !self.apexes.contains(&apex) {
            self.apexes.push(apex);
        }
        for r in records {
            self.signed |= r.rtype == rtype::RRSIG;
            self.names.entry(r.name.to_lowercase()).or_default().push(r);
        }
    }

    pub fn from_zones(zones: &[zonegen::GeneratedZone]) -> Self {
        let mut data = ZoneData::new();
        for z in zones {
            let records = z.records();
            if let Some(apex) = infer_apex(&records) {
                data.add_zone(&apex, records);
            }
        }
        data
    }

    /// Loads every `*.zone` master file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, HarnessError> {
        let mut data = ZoneData::new();
        for (path, records) in zonegen::load_dir(dir)? {
            let apex = infer_apex(&records)
                .ok_or_else(|| HarnessError::Domain(format!("{}: no records", path.display())))?;
            data.add_zone(&apex, records);
        }
        if data.apexes.is_empty() {
            return Err(HarnessError::Domain(format!("no zone files in {}", dir.display())));
        }
        Ok(data)
    }

    pub fn apexes(&self) -> &[Name] {
        &self.apexes
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.names.values().flatten()
    }

    /// Signs every zone with the same KSK/ZSK pair; returns the signed data
    /// and the KSK anchors.
    pub fn signed_with(
        &self,
        ksk: &SigningKey,
        zsk: &SigningKey,
        inception: u32,
        expiration: u32,
    ) -> Result<(ZoneData, Vec<TrustAnchor>), HarnessError> {
        let mut out = ZoneData::new();
        let mut anchors = Vec::new();
        for apex in &self.apexes {
            let records: Vec<Record> = self
                .records()
                .filter(|r| r.name.ends_with(apex) && self.zone_of(&r.name).as_ref() == Some(apex))
                .cloned()
                .collect();
            let signed = sign_zone(&records, apex, ksk, zsk, inception, expiration)
                .map_err(|e| HarnessError::Domain(e.to_string()))?;
            out.add_zone(apex, signed);
            anchors.push(ksk.anchor(apex));
        }
        Ok((out, anchors))
    }

    fn zone_of(&self, name: &Name) -> Option<Name> {
        self.apexes
            .iter()
            .filter(|a| name.ends_with(a))
            .max_by_key(|a| a.labels().len())
            .cloned()
    }

    pub fn lookup(&self, name: &Name, qtype: u16, dnssec_ok: bool) -> Lookup {
        let key = name.to_lowercase();
        let Some(records) = self.names.get(&key) else {
            return if self.zone_of(&key).is_some() { Lookup::NxDomain } else { Lookup::Refused };
        };
        let mut answers: Vec<Record> = records.iter().filter(|r| r.rtype == qtype).cloned().collect();
        if answers.is_empty() {
            return Lookup::NoData;
        }
        if dnssec_ok {
            answers.extend(
                records
                    .iter()
                    .filter(|r| matches!(&r.data, RData::Rrsig(s) if s.type_covered == qtype))
                    .cloned(),
            );
        }
        for r in &mut answers {
            r.name = name.clone();
        }
        Lookup::Answer(answers)
    }

    /// Builds the wire response to `query`; UDP responses over the
    /// advertised payload size are truncated.
    pub fn respond(&self, query: &[u8], udp: bool) -> Option<Vec<u8>> {
        let q = Message::from_wire(query).ok()?;
        if q.response {
            return None;
        }
        let mut resp = Message::response_to(&q, Rcode::NoError);
        match q.questions.first() {
            None => resp.rcode = Rcode::FormErr,
            Some(question) => {
                let dnssec_ok = q.edns.is_some_and(|e| e.dnssec_ok);
                match self.lookup(&question.name, question.qtype, dnssec_ok) {
                    Lookup::Answer(records) => resp.answers = records,
                    Lookup::NoData => {}
                    Lookup::NxDomain => resp.rcode = Rcode::NxDomain,
                    Lookup::Refused => {
                        resp.rcode = Rcode::Refused;
                        resp.authoritative = false;
                    }
                }
            }
        }
        let wire = resp.to_wire().ok()?;
        let limit = q.edns.map_or(UDP_DEFAULT_PAYLOAD, |e| e.payload.max(UDP_DEFAULT_PAYLOAD)) as usize;
        if udp && wire.len() > limit {
            resp.answers.clear();
            resp.truncated = true;
            return resp.to_wire().ok();
        }
        Some(wire)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryLogEntry {
    pub timestamp: String,
    pub name: String,
    pub qtype: u16,
    pub stream: bool,
}

#[derive(Debug, Clone)]
pub struct NameserverConfig {
    pub bind: SocketAddr,
    /// Added before every response, to model server distance.
    pub delay: Duration,
}

impl Default for NameserverConfig {
    fn default() -> Self {
        NameserverConfig {
            bind: ([127, 0, 0, 1], 0).into(),
            delay: Duration::ZERO,
        }
    }
}

struct Shared {
    zones: ZoneData,
    delay: Duration,
    log: Mutex<Vec<QueryLogEntry>>,
    stop: AtomicBool,
}

impl Shared {
    fn record(&self, query: &[u8], stream: bool) {
        if let Ok(q) = Message::from_wire(query) {
            let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
            let mut log = self.log.lock().expect("query log poisoned");
            for question in q.questions {
                log.push(QueryLogEntry {
                    timestamp: timestamp.clone(),
                    name: question.name.to_string(),
                    qtype: question.qtype,
                    stream,
                });
            }
        }
    }

    fn answer(&self, query: &[u8], udp: bool) -> Option<Vec<u8>> {
        self.record(query, !udp);
        let resp = self.zones.respond(query, udp);
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        resp
    }
}

pub struct StubNameserver {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

fn bind_pair(bind: SocketAddr) -> io::Result<(UdpSocket, TcpListener)> {
    let mut last = None;
    for _ in 0..16 {
        let udp = UdpSocket::bind(bind)?;
        match TcpListener::bind(udp.local_addr()?) {
            Ok(tcp) => return Ok((udp, tcp)),
            Err(e) if bind.port() == 0 => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| io::Error::new(io::ErrorKind::AddrInUse, "no free port pair")))
}

fn read_framed(stream: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 2];
    stream.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_be_bytes(len) as usize];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

fn write_framed(stream: &mut TcpStream, msg: &[u8]) -> io::Result<()> {
    let mut framed = Vec::with_capacity(msg.len() + 2);
    framed.extend_from_slice(&(msg.len() as u16).to_be_bytes());
    framed.extend_from_slice(msg);
    stream.write_all(&framed)
}

/// Accepts connections until `stop` is set, handing each to `serve`.
fn accept_loop<F>(listener: TcpListener, stop: impl Fn() -> bool + Send + 'static, serve: F) -> io::Result<JoinHandle<()>>
where
    F: Fn(TcpStream) + Send + Sync + Clone + 'static,
{
    listener.set_nonblocking(true)?;
    Ok(thread::spawn(move || {
        while !stop() {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
                    let _ = stream.set_nodelay(true);
                    let serve = serve.clone();
                    thread::spawn(move || serve(stream));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    }))
}

impl StubNameserver {
    pub fn start(zones: ZoneData, config: NameserverConfig) -> Result<StubNameserver, HarnessError> {
        let (udp, tcp) = bind_pair(config.bind).map_err(|e| HarnessError::Startup(format!("nameserver on {}: {e}", config.bind)))?;
        let addr = udp.local_addr().map_err(|e| HarnessError::Startup(e.to_string()))?;
        let shared = Arc::new(Shared {
            zones,
            delay: config.delay,
            log: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        udp.set_read_timeout(Some(Duration::from_millis(20)))
            .map_err(|e| HarnessError::Startup(e.to_string()))?;

        let s = Arc::clone(&shared);
        let udp_thread = thread::spawn(move || {
            let mut buf = vec![0u8; 65535];
            while !s.stop.load(Ordering::Relaxed) {
                let (n, peer) = match udp.recv_from(&mut buf) {
                    Ok(x) => x,
                    Err(_) => continue,
                };
                let query = buf[..n].to_vec();
                let (s, sock) = (Arc::clone(&s), udp.try_clone());
                thread::spawn(move || {
                    if let (Some(resp), Ok(sock)) = (s.answer(&query, true), sock) {
                        let _ = sock.send_to(&resp, peer);
                    }
                });
            }
        });

        let s = Arc::clone(&shared);
        let stop = Arc::clone(&shared);
        let tcp_thread = accept_loop(tcp, move || stop.stop.load(Ordering::Relaxed), move |mut stream| {
            while let Ok(query) = read_framed(&mut stream) {
                match s.answer(&query, false) {
                    Some(resp) if write_framed(&mut stream, &resp).is_ok() => {}
                    _ => break,
                }
            }
        })
        .map_err(|e| HarnessError::Startup(e.to_string()))?;

        log::info!("stub nameserver on {addr}");
        Ok(StubNameserver {
            addr,
            shared,
            threads: vec![udp_thread, tcp_thread],
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn query_log(&self) -> Vec<QueryLogEntry> {
        self.shared.log.lock().expect("query log poisoned").clone()
    }

    /// Query log as `timestamp name` lines.
    pub fn query_log_text(&self) -> String {
        self.query_log()
            .iter()
            .map(|e| format!("{} {}\n", e.timestamp, e.name))
            .collect()
    }

    pub fn clear_log(&self) {
        self.shared.log.lock().expect("query log poisoned").clear();
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for StubNameserver {
    fn drop(&mut self) {
        self.stop();
    }
}

pub type Tamper = Arc<dyn Fn(&[u8]) -> Vec<u8> + Send + Sync>;

#[derive(Clone)]
pub struct ProxyConfig {
    pub bind: SocketAddr,
    /// Added to every relayed response.
    pub delay: Duration,
    /// Probability of closing a tunnel right after granting it.
    pub drop_rate: f64,
    pub seed: u64,
    /// Reply 0x5B to every request.
    pub refuse: bool,
    /// Rewrites each response on its way back to the client.
    pub tamper: Option<Tamper>,
}

impl std::fmt::Debug for ProxyConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProxyConfig")
            .field("bind", &self.bind)
            .field("delay", &self.delay)
            .field("drop_rate", &self.drop_rate)
            .field("seed", &self.seed)
            .field("refuse", &self.refuse)
            .field("tamper", &self.tamper.is_some())
            .finish()
    }
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            bind: ([127, 0, 0, 1], 0).into(),
            delay: Duration::ZERO,
            drop_rate: 0.0,
            seed: 0,
            refuse: false,
            tamper: None,
        }
    }
}

struct ProxyShared {
    config: ProxyConfig,
    rng: Mutex<ChaCha8Rng>,
    connections: AtomicU64,
    drops: AtomicU64,
    stop: AtomicBool,
}

pub struct StubProxy {
    addr: SocketAddr,
    shared: Arc<ProxyShared>,
    thread: Option<JoinHandle<()>>,
}

/// Parsed SOCKS4a CONNECT request: destination host (or address) and port.
fn read_socks_request(stream: &mut TcpStream) -> io::Result<Option<(String, u16)>> {
    let mut head = [0u8; 8];
    stream.read_exact(&mut head)?;
    let read_cstr = |stream: &mut TcpStream| -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut b = [0u8; 1];
        loop {
            stream.read_exact(&mut b)?;
            if b[0] == 0 || out.len() > 255 {
                return Ok(out);
            }
            out.push(b[0]);
        }
    };
    let _userid = read_cstr(stream)?;
    if head[0] != 4 || head[1] != 1 {
        return Ok(None);
    }
    let port = u16::from_be_bytes([head[2], head[3]]);
    let ip = [head[4], head[5], head[6], head[7]];
    if ip[..3] == [0, 0, 0] && ip[3] != 0 {
        let host = read_cstr(stream)?;
        Ok(String::from_utf8(host).ok().map(|h| (h, port)))
    } else {
        Ok(Some((format!("{}.{}.{}.{}", ip[0], ip[1], ip[2], ip[3]), port)))
    }
}

fn socks_reply(code: u8) -> [u8; 8] {
    [0, code, 0, 0, 0, 0, 0, 0]
}

fn serve_tunnel(shared: &ProxyShared, mut client: TcpStream) -> io::Result<()> {
    shared.connections.fetch_add(1, Ordering::Relaxed);
    let Some((host, port)) = read_socks_request(&mut client)? else {
        return client.write_all(&socks_reply(SOCKS_REJECTED));
    };
    if shared.config.refuse {
        return client.write_all(&socks_reply(SOCKS_REJECTED));
    }
    let upstream = (host.as_str(), port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .and_then(|a| TcpStream::connect_timeout(&a, Duration::from_secs(2)).ok());
    let Some(mut upstream) = upstream else {
        return client.write_all(&socks_reply(SOCKS_REJECTED));
    };
    upstream.set_read_timeout(Some(IDLE_TIMEOUT))?;
    upstream.set_nodelay(true)?;
    client.write_all(&socks_reply(SOCKS_GRANTED))?;
    let drop = shared.config.drop_rate > 0.0
        && shared
            .rng
            .lock()
            .expect("proxy rng poisoned")
            .gen_bool(shared.config.drop_rate.min(1.0));
    if drop {
        shared.drops.fetch_add(1, Ordering::Relaxed);
        return client.shutdown(std::net::Shutdown::Both);
    }
    while let Ok(query) = read_framed(&mut client) {
        write_framed(&mut upstream, &query)?;
        let mut resp = read_framed(&mut upstream)?;
        if !shared.config.delay.is_zero() {
            thread::sleep(shared.config.delay);
        }
        if let Some(tamper) = &shared.config.tamper {
            resp = tamper(&resp);
        }
        write_framed(&mut client, &resp)?;
    }
    Ok(())
}

impl StubProxy {
    pub fn start(config: ProxyConfig) -> Result<StubProxy, HarnessError> {
        if !(0.0..=1.0).contains(&config.drop_rate) {
            return Err(HarnessError::Domain(format!("drop rate {} outside [0, 1]", config.drop_rate)));
        }
        let listener = TcpListener::bind(config.bind).map_err(|e| HarnessError::Startup(format!("proxy on {}: {e}", config.bind)))?;
        let addr = listener.local_addr().map_err(|e| HarnessError::Startup(e.to_string()))?;
        let shared = Arc::new(ProxyShared {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            config,
            connections: AtomicU64::new(0),
            drops: AtomicU64::new(0),
            stop: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        let stop = Arc::clone(&shared);
        let thread = accept_loop(listener, move || stop.stop.load(Ordering::Relaxed), move |stream| {
            if let Err(e) = serve_tunnel(&s, stream) {
                log::debug!("tunnel ended: {e}");
            }
        })
        .map_err(|e| HarnessError::Startup(e.to_string()))?;
        log::info!("stub SOCKS4a proxy on {addr}");
        Ok(StubProxy {
            addr,
            shared,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn connections(&self) -> u64 {
        self.shared.connections.load(Ordering::Relaxed)
    }

    pub fn drops(&self) -> u64 {
        self.shared.drops.load(Ordering::Relaxed)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubProxy {
    fn drop(&mut self) {
        self.stop();
    }
}
