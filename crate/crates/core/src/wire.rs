//! DNS message wire format: names, headers, EDNS0 and the record types the
//! ONS lookup needs (NAPTR, RRSIG, DNSKEY, plus SOA/NS/A for zone data).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::dnssec::{DnskeyRecord, RrsigRecord};
use crate::ons::NaptrRecord;

pub mod rtype {
    pub const A: u16 = 1;
    pub const NS: u16 = 2;
    pub const SOA: u16 = 6;
    pub const NAPTR: u16 = 35;
    pub const OPT: u16 = 41;
    pub const RRSIG: u16 = 46;
    pub const DNSKEY: u16 = 48;

    pub fn name(t: u16) -> String {
        match t {
            A => "A".into(),
            NS => "NS".into(),
            SOA => "SOA".into(),
            NAPTR => "NAPTR".into(),
            OPT => "OPT".into(),
            RRSIG => "RRSIG".into(),
            DNSKEY => "DNSKEY".into(),
            other => format!("TYPE{other}"),
        }
    }

    pub fn from_name(s: &str) -> Option<u16> {
        let upper = s.to_ascii_uppercase();
        Some(match upper.as_str() {
            "A" => A,
            "NS" => NS,
            "SOA" => SOA,
            "NAPTR" => NAPTR,
            "OPT" => OPT,
            "RRSIG" => RRSIG,
            "DNSKEY" => DNSKEY,
            _ => return upper.strip_prefix("TYPE")?.parse().ok(),
        })
    }
}

pub const CLASS_IN: u16 = 1;
pub const MAX_NAME_WIRE_LEN: usize = 255;
pub const MAX_LABEL_LEN: usize = 63;
/// Classic datagram limit without EDNS0.
pub const UDP_DEFAULT_PAYLOAD: u16 = 512;
pub const EDNS_PAYLOAD: u16 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated at offset {0}")]
    Truncated(usize),
    #[error("bad compression pointer at offset {0}")]
    BadPointer(usize),
    #[error("label longer than 63 octets")]
    LabelTooLong,
    #[error("name longer than 255 octets on the wire")]
    NameTooLong,
    #[error("character string longer than 255 octets")]
    StringTooLong,
    #[error("record data is not valid UTF-8")]
    NonUtf8,
    #[error("malformed {0}")]
    Malformed(String),
}

/// Domain name as a sequence of labels, root excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    labels: Vec<Vec<u8>>,
}

impl Name {
    pub fn root() -> Self {
        Name::default()
    }

    pub fn from_labels(labels: Vec<Vec<u8>>) -> Result<Self, WireError> {
        let name = Name { labels };
        name.check()?;
        Ok(name)
    }

    /// Parses dotted presentation text; the trailing dot is optional and
    /// `\.`/`\DDD` escapes are honoured.
    pub fn from_ascii(text: &str) -> Result<Self, WireError> {
        let text = text.trim();
        if text.is_empty() || text == "." {
            return Ok(Name::root());
        }
        let mut labels = Vec::new();
        let mut cur = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => {
                    let rest = &bytes[i + 1..];
                    if rest.len() >= 3 && rest[..3].iter().all(u8::is_ascii_digit) {
                        let v: u16 = std::str::from_utf8(&rest[..3]).unwrap().parse().unwrap();
                        let v = u8::try_from(v).map_err(|_| WireError::Malformed(format!("escape in {text:?}")))?;
                        cur.push(v);
                        i += 4;
                    } else if let Some(&c) = rest.first() {
                        cur.push(c);
                        i += 2;
                    } else {
                        return Err(WireError::Malformed(format!("dangling escape in {text:?}")));
                    }
                }
                b'.' => {
                    if cur.is_empty() {
                        return Err(WireError::Malformed(format!("empty label in {text:?}")));
                    }
                    labels.push(std::mem::take(&mut cur));
                    i += 1;
                }
                c => {
                    cur.push(c);
                    i += 1;
                }
            }
        }
        if !cur.is_empty() {
            labels.push(cur);
        }
        Name::from_labels(labels)
    }

    fn check(&self) -> Result<(), WireError> {
        if self.labels.iter().any(|l| l.len() > MAX_LABEL_LEN || l.is_empty()) {
            return Err(WireError::LabelTooLong);
        }
        if self.wire_len() > MAX_NAME_WIRE_LEN {
            return Err(WireError::NameTooLong);
        }
        Ok(())
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn is_root(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn wire_len(&self) -> usize {
        self.labels.iter().map(|l| l.len() + 1).sum::<usize>() + 1
    }

    /// Label count as used by RRSIG: root and a leading wildcard not counted.
    pub fn rrsig_label_count(&self) -> u8 {
        let n = self.labels.len();
        let wildcard = self.labels.first().is_some_and(|l| l == b"*");
        (n - usize::from(wildcard)) as u8
    }

    pub fn to_lowercase(&self) -> Name {
        Name {
            labels: self.labels.iter().map(|l| l.to_ascii_lowercase()).collect(),
        }
    }

    pub fn eq_ignore_case(&self, other: &Name) -> bool {
        self.labels.len() == other.labels.len()
            && self
                .labels
                .iter()
                .zip(&other.labels)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }

    pub fn ends_with(&self, suffix: &Name) -> bool {
        let n = suffix.labels.len();
        self.labels.len() >= n
            && self.labels[self.labels.len() - n..]
                .iter()
                .zip(&suffix.labels)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }

    /// Rightmost `count` labels.
    pub fn suffix(&self, count: usize) -> Name {
        let skip = self.labels.len().saturating_sub(count);
        Name {
            labels: self.labels[skip..].to_vec(),
        }
    }

    pub fn prepend(&self, label: &[u8]) -> Result<Name, WireError> {
        let mut labels = vec![label.to_vec()];
        labels.extend(self.labels.iter().cloned());
        Name::from_labels(labels)
    }

    /// Uncompressed wire form.
    pub fn write(&self, out: &mut Vec<u8>) {
        for l in &self.labels {
            out.push(l.len() as u8);
            out.extend_from_slice(l);
        }
        out.push(0);
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.wire_len());
        self.write(&mut v);
        v
    }

    /// Writes the name, pointing at an earlier occurrence of its longest
    /// known suffix. `seen` maps lowercase suffixes to message offsets.
    fn write_compressed(&self, out: &mut Vec<u8>, seen: &mut HashMap<Name, u16>) {
        for i in 0..self.labels.len() {
            let suffix = Name {
                labels: self.labels[i..].to_vec(),
            }
            .to_lowercase();
            if let Some(&ptr) = seen.get(&suffix) {
                out.extend_from_slice(&(0xC000 | ptr).to_be_bytes());
                return;
            }
            if out.len() < 0x3FFF {
                seen.insert(suffix, out.len() as u16);
            }
            out.push(self.labels[i].len() as u8);
            out.extend_from_slice(&self.labels[i]);
        }
        out.push(0);
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return f.write_str(".");
        }
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            for &b in l {
                match b {
                    b'.' | b'\\' | b'"' | b'(' | b')' | b';' | b'@' | b'$' => write!(f, "\\{}", b as char)?,
                    0x21..=0x7e => write!(f, "{}", b as char)?,
                    _ => write!(f, "\\{b:03}")?,
                }
            }
        }
        Ok(())
    }
}

/// Decoding cursor over a complete message (needed for compression pointers).
pub struct Reader<'a> {
    msg: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(msg: &'a [u8]) -> Self {
        Reader { msg, pos: 0 }
    }

    pub fn at(msg: &'a [u8], pos: usize) -> Self {
        Reader { msg, pos }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.msg.len().saturating_sub(self.pos)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated(self.pos));
        }
        let s = &self.msg[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn char_string(&mut self) -> Result<String, WireError> {
        let len = self.u8()? as usize;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| WireError::NonUtf8)
    }

    pub fn name(&mut self) -> Result<Name, WireError> {
        let mut labels = Vec::new();
        let mut pos = self.pos;
        let mut jumped = false;
        let mut hops = 0;
        loop {
            let len = *self.msg.get(pos).ok_or(WireError::Truncated(pos))? as usize;
            match len & 0xC0 {
                0xC0 => {
                    let lo = *self.msg.get(pos + 1).ok_or(WireError::Truncated(pos + 1))? as usize;
                    let target = ((len & 0x3F) << 8) | lo;
                    if !jumped {
                        self.pos = pos + 2;
                        jumped = true;
                    }
                    hops += 1;
                    if target >= pos || hops > 64 {
                        return Err(WireError::BadPointer(pos));
                    }
                    pos = target;
                }
                0x00 => {
                    if len == 0 {
                        if !jumped {
                            self.pos = pos + 1;
                        }
                        break;
                    }
                    let label = self
                        .msg
                        .get(pos + 1..pos + 1 + len)
                        .ok_or(WireError::Truncated(pos + 1))?;
                    labels.push(label.to_vec());
                    pos += 1 + len;
                }
                _ => return Err(WireError::Malformed(format!("label type at offset {pos}"))),
            }
        }
        Name::from_labels(labels)
    }
}

pub fn write_char_string(out: &mut Vec<u8>, s: &str) -> Result<(), WireError> {
    let b = s.as_bytes();
    if b.len() > 255 {
        return Err(WireError::StringTooLong);
    }
    out.push(b.len() as u8);
    out.extend_from_slice(b);
    Ok(())
}

/// NAPTR RDATA. `canonical` lowercases the replacement name.
pub fn naptr_rdata(r: &NaptrRecord, canonical: bool) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(16 + r.flags.len() + r.service.len() + r.regexp.len());
    out.extend_from_slice(&r.order.to_be_bytes());
    out.extend_from_slice(&r.preference.to_be_bytes());
    write_char_string(&mut out, &r.flags)?;
    write_char_string(&mut out, &r.service)?;
    write_char_string(&mut out, &r.regexp)?;
    let replacement = Name::from_ascii(&r.replacement)?;
    let replacement = if canonical { replacement.to_lowercase() } else { replacement };
    replacement.write(&mut out);
    Ok(out)
}

fn read_naptr(r: &mut Reader<'_>) -> Result<NaptrRecord, WireError> {
    let order = r.u16()?;
    let preference = r.u16()?;
    let flags = r.char_string()?;
    let service = r.char_string()?;
    let regexp = r.char_string()?;
    let replacement = r.name()?;
    Ok(NaptrRecord {
        order,
        preference,
        flags,
        service,
        regexp,
        replacement: if replacement.is_root() {
            ".".to_string()
        } else {
            format!("{replacement}.")
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Soa {
    pub mname: Name,
    pub rname: Name,
    pub serial: u32,
    pub refresh: u32,
    pub retry: u32,
    pub expire: u32,
    pub minimum: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RData {
    A([u8; 4]),
    Ns(Name),
    Soa(Soa),
    Naptr(NaptrRecord),
    Rrsig(RrsigRecord),
    Dnskey(DnskeyRecord),
    Other(Vec<u8>),
}

impl RData {
    pub fn to_wire(&self) -> Result<Vec<u8>, WireError> {
        Ok(match self {
            RData::A(a) => a.to_vec(),
            RData::Ns(n) => n.to_wire(),
            RData::Soa(s) => {
                let mut v = s.mname.to_wire();
                s.rname.write(&mut v);
                for x in [s.serial, s.refresh, s.retry, s.expire, s.minimum] {
                    v.extend_from_slice(&x.to_be_bytes());
                }
                v
            }
            RData::Naptr(n) => naptr_rdata(n, false)?,
            RData::Rrsig(s) => s.to_rdata(),
            RData::Dnskey(k) => k.to_rdata(),
            RData::Other(b) => b.clone(),
        })
    }

    fn read(rtype: u16, r: &mut Reader<'_>, len: usize) -> Result<RData, WireError> {
        let start = r.pos();
        let end = start + len;
        if r.remaining() < len {
            return Err(WireError::Truncated(start));
        }
        let data = match rtype {
            rtype::A if len == 4 => {
                let b = r.bytes(4)?;
                RData::A([b[0], b[1], b[2], b[3]])
            }
            rtype::NS => RData::Ns(r.name()?),
            rtype::SOA => RData::Soa(Soa {
                mname: r.name()?,
                rname: r.name()?,
                serial: r.u32()?,
                refresh: r.u32()?,
                retry: r.u32()?,
                expire: r.u32()?,
                minimum: r.u32()?,
            }),
            rtype::NAPTR => RData::Naptr(read_naptr(r)?),
            rtype::RRSIG => RData::Rrsig(RrsigRecord::from_rdata(r.bytes(len)?)?),
            rtype::DNSKEY => RData::Dnskey(DnskeyRecord::from_rdata(r.bytes(len)?)?),
            _ => RData::Other(r.bytes(len)?.to_vec()),
        };
        if r.pos() != end {
            return Err(WireError::Malformed(format!(
                "{} RDATA length mismatch",
                rtype::name(rtype)
            )));
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub name: Name,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub data: RData,
}

impl Record {
    pub fn new(name: Name, ttl: u32, data: RData) -> Record {
        let rtype = match &data {
            RData::A(_) => rtype::A,
            RData::Ns(_) => rtype::NS,
            RData::Soa(_) => rtype::SOA,
            RData::Naptr(_) => rtype::NAPTR,
            RData::Rrsig(_) => rtype::RRSIG,
            RData::Dnskey(_) => rtype::DNSKEY,
            RData::Other(_) => 0,
        };
        Record {
            name,
            rtype,
            class: CLASS_IN,
            ttl,
            data,
        }
    }

    fn write(&self, out: &mut Vec<u8>, seen: &mut HashMap<Name, u16>) -> Result<(), WireError> {
        self.name.write_compressed(out, seen);
        out.extend_from_slice(&self.rtype.to_be_bytes());
        out.extend_from_slice(&self.class.to_be_bytes());
        out.extend_from_slice(&self.ttl.to_be_bytes());
        let rdata = self.data.to_wire()?;
        out.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        out.extend_from_slice(&rdata);
        Ok(())
    }

    fn read(r: &mut Reader<'_>) -> Result<Record, WireError> {
        let name = r.name()?;
        let rtype = r.u16()?;
        let class = r.u16()?;
        let ttl = r.u32()?;
        let len = r.u16()? as usize;
        let data = RData::read(rtype, r, len)?;
        Ok(Record {
            name,
            rtype,
            class,
            ttl,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub name: Name,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edns {
    pub payload: u16,
    pub dnssec_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rcode {
    NoError,
    FormErr,
    ServFail,
    NxDomain,
    NotImp,
    Refused,
    Other(u8),
}

impl Rcode {
    pub fn from_u8(v: u8) -> Rcode {
        match v {
            0 => Rcode::NoError,
            1 => Rcode::FormErr,
            2 => Rcode::ServFail,
            3 => Rcode::NxDomain,
            4 => Rcode::NotImp,
            5 => Rcode::Refused,
            o => Rcode::Other(o),
        }
    }

    pub fn to_u8(self) -> u8 {
        match self {
            Rcode::NoError => 0,
            Rcode::FormErr => 1,
            Rcode::ServFail => 2,
            Rcode::NxDomain => 3,
            Rcode::NotImp => 4,
            Rcode::Refused => 5,
            Rcode::Other(o) => o,
        }
    }
}

impl fmt::Display for Rcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rcode::NoError => f.write_str("NOERROR"),
            Rcode::FormErr => f.write_str("FORMERR"),
            Rcode::ServFail => f.write_str("SERVFAIL"),
            Rcode::NxDomain => f.write_str("NXDOMAIN"),
            Rcode::NotImp => f.write_str("NOTIMP"),
            Rcode::Refused => f.write_str("REFUSED"),
            Rcode::Other(o) => write!(f, "RCODE{o}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: u16,
    pub response: bool,
    pub opcode: u8,
    pub authoritative: bool,
    pub truncated: bool,
    pub recursion_desired: bool,
    pub recursion_available: bool,
    pub authentic_data: bool,
    pub checking_disabled: bool,
    pub rcode: Rcode,
    pub questions: Vec<Question>,
    pub answers: Vec<Record>,
    pub authority: Vec<Record>,
    pub additional: Vec<Record>,
    pub edns: Option<Edns>,
}

impl Message {
    pub fn query(id: u16, name: Name, qtype: u16, edns: Option<Edns>) -> Message {
        Message {
            id,
            response: false,
            opcode: 0,
            authoritative: false,
            truncated: false,
            recursion_desired: true,
            recursion_available: false,
            authentic_data: false,
            checking_disabled: false,
            rcode: Rcode::NoError,
            questions: vec![Question {
                name,
                qtype,
                qclass: CLASS_IN,
            }],
            answers: Vec::new(),
            authority: Vec::new(),
            additional: Vec::new(),
            edns,
        }
    }

    /// Response skeleton echoing the question of `query`.
    pub fn response_to(query: &Message, rcode: Rcode) -> Message {
        Message {
            id: query.id,
            response: true,
            opcode: query.opcode,
            authoritative: true,
            truncated: false,
            recursion_desired: query.recursion_desired,
            recursion_available: false,
            authentic_data: false,
            checking_disabled: query.checking_disabled,
            rcode,
            questions: query.questions.clone(),
            answers: Vec::new(),
            authority: Vec::new(),
            additional: Vec::new(),
            edns: query.edns.map(|e| Edns {
                payload: EDNS_PAYLOAD,
                dnssec_ok: e.dnssec_ok,
            }),
        }
    }

    fn flags(&self) -> u16 {
        let mut f = 0u16;
        f |= u16::from(self.response) << 15;
        f |= u16::from(self.opcode & 0x0F) << 11;
        f |= u16::from(self.authoritative) << 10;
        f |= u16::from(self.truncated) << 9;
        f |= u16::from(self.recursion_desired) << 8;
        f |= u16::from(self.recursion_available) << 7;
        f |= u16::from(self.authentic_data) << 5;
        f |= u16::from(self.checking_disabled) << 4;
        f |= u16::from(self.rcode.to_u8() & 0x0F);
        f
    }

    pub fn to_wire(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(512);
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&self.flags().to_be_bytes());
        let arcount = self.additional.len() + usize::from(self.edns.is_some());
        for n in [self.questions.len(), self.answers.len(), self.authority.len(), arcount] {
            out.extend_from_slice(&(n as u16).to_be_bytes());
        }
        // Owner names are compressed; RDATA names never are.
        let mut seen = HashMap::new();
        for q in &self.questions {
            q.name.write_compressed(&mut out, &mut seen);
            out.extend_from_slice(&q.qtype.to_be_bytes());
            out.extend_from_slice(&q.qclass.to_be_bytes());
        }
        for r in self.answers.iter().chain(&self.authority).chain(&self.additional) {
            r.write(&mut out, &mut seen)?;
        }
        if let Some(e) = self.edns {
            out.push(0);
            out.extend_from_slice(&rtype::OPT.to_be_bytes());
            out.extend_from_slice(&e.payload.to_be_bytes());
            let ext_rcode = self.rcode.to_u8() >> 4;
            let ttl: u32 = (u32::from(ext_rcode) << 24) | if e.dnssec_ok { 0x8000 } else { 0 };
            out.extend_from_slice(&ttl.to_be_bytes());
            out.extend_from_slice(&0u16.to_be_bytes());
        }
        Ok(out)
    }

    pub fn from_wire(msg: &[u8]) -> Result<Message, WireError> {
        let mut r = Reader::new(msg);
        let id = r.u16()?;
        let flags = r.u16()?;
        let qd = r.u16()?;
        let an = r.u16()?;
        let ns = r.u16()?;
        let ar = r.u16()?;
        let mut questions = Vec::with_capacity(qd as usize);
        for _ in 0..qd {
            questions.push(Question {
                name: r.name()?,
                qtype: r.u16()?,
                qclass: r.u16()?,
            });
        }
        let mut section = |n: u16| -> Result<Vec<Record>, WireError> {
            (0..n).map(|_| Record::read(&mut r)).collect()
        };
        let answers = section(an)?;
        let authority = section(ns)?;
        let mut additional = section(ar)?;
        let mut rcode_bits = (flags & 0x0F) as u8;
        let mut edns = None;
        if let Some(i) = additional.iter().position(|rec| rec.rtype == rtype::OPT) {
            let opt = additional.remove(i);
            rcode_bits |= ((opt.ttl >> 24) as u8) << 4;
            edns = Some(Edns {
                payload: opt.class,
                dnssec_ok: opt.ttl & 0x8000 != 0,
            });
        }
        Ok(Message {
            id,
            response: flags & 0x8000 != 0,
            opcode: ((flags >> 11) & 0x0F) as u8,
            authoritative: flags & 0x0400 != 0,
            truncated: flags & 0x0200 != 0,
            recursion_desired: flags & 0x0100 != 0,
            recursion_available: flags & 0x0080 != 0,
            authentic_data: flags & 0x0020 != 0,
            checking_disabled: flags & 0x0010 != 0,
            rcode: Rcode::from_u8(rcode_bits),
            questions,
            answers,
            authority,
            additional,
            edns,
        })
    }
}
