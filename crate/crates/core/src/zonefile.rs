//! Master-file (zone file) presentation format for the record types used here.
//!
//! Supports `$ORIGIN`/`$TTL`, `@`, relative owners, blank owners, comments,
//! parenthesised continuation lines and quoted character strings.

use base64::Engine;
use chrono::{NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

use crate::dnssec::{DnskeyRecord, RrsigRecord};
use crate::ons::NaptrRecord;
use crate::wire::{rtype, Name, RData, Record, Soa, CLASS_IN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ZoneFileError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Quoted(String),
}

impl Token {
    fn text(&self) -> &str {
        match self {
            Token::Word(s) | Token::Quoted(s) => s,
        }
    }
}

struct Entry {
    line: usize,
    leading_blank: bool,
    tokens: Vec<Token>,
}

fn unescape_into(out: &mut String, chars: &mut std::iter::Peekable<std::str::Chars<'_>>) {
    let mut digits = String::new();
    while digits.len() < 3 {
        match chars.peek() {
            Some(c) if c.is_ascii_digit() => {
                digits.push(*c);
                chars.next();
            }
            _ => break,
        }
    }
    if digits.len() == 3 {
        if let Ok(v) = digits.parse::<u8>() {
            out.push(v as char);
            return;
        }
    }
    if !digits.is_empty() {
        out.push('\\');
        out.push_str(&digits);
    } else if let Some(c) = chars.next() {
        out.push(c);
    }
}

/// Splits text into logical entries, joining parenthesised groups.
fn entries(text: &str) -> Result<Vec<Entry>, ZoneFileError> {
    let mut out = Vec::new();
    let mut current: Option<Entry> = None;
    let mut depth = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: &str| ZoneFileError {
            line: line_no,
            msg: msg.to_string(),
        };
        let mut chars = raw.chars().peekable();
        let mut tokens = Vec::new();
        let mut word = String::new();
        let flush = |word: &mut String, tokens: &mut Vec<Token>| {
            if !word.is_empty() {
                tokens.push(Token::Word(std::mem::take(word)));
            }
        };
        while let Some(c) = chars.next() {
            match c {
                ';' => break,
                '"' => {
                    flush(&mut word, &mut tokens);
                    let mut s = String::new();
                    let mut closed = false;
                    while let Some(c) = chars.next() {
                        match c {
                            '"' => {
                                closed = true;
                                break;
                            }
                            '\\' => unescape_into(&mut s, &mut chars),
                            c => s.push(c),
                        }
                    }
                    if !closed {
                        return Err(err("unterminated quoted string"));
                    }
                    tokens.push(Token::Quoted(s));
                }
                '(' => {
                    flush(&mut word, &mut tokens);
                    depth += 1;
                }
                ')' => {
                    flush(&mut word, &mut tokens);
                    depth = depth.checked_sub(1).ok_or_else(|| err("unbalanced ')'"))?;
                }
                c if c.is_whitespace() => flush(&mut word, &mut tokens),
                '\\' => {
                    word.push('\\');
                    if let Some(n) = chars.next() {
                        word.push(n);
                    }
                }
                c => word.push(c),
            }
        }
        flush(&mut word, &mut tokens);

        match current.as_mut() {
            Some(entry) => entry.tokens.extend(tokens),
            None => {
                if tokens.is_empty() {
                    continue;
                }
                current = Some(Entry {
                    line: line_no,
                    leading_blank: raw.starts_with([' ', '\t']),
                    tokens,
                });
            }
        }
        if depth == 0 {
            if let Some(e) = current.take() {
                out.push(e);
            }
        }
    }
    if depth != 0 {
        return Err(ZoneFileError {
            line: text.lines().count(),
            msg: "unbalanced '('".into(),
        });
    }
    if let Some(e) = current {
        out.push(e);
    }
    Ok(out)
}

fn absolute(name: &str, origin: Option<&Name>) -> Result<Name, String> {
    if name == "@" {
        return origin.cloned().ok_or_else(|| "'@' without $ORIGIN".to_string());
    }
    let parsed = Name::from_ascii(name).map_err(|e| e.to_string())?;
    if name.ends_with('.') && !name.ends_with("\\.") {
        return Ok(parsed);
    }
    match origin {
        Some(o) => {
            let mut labels = parsed.labels().to_vec();
            labels.extend(o.labels().iter().cloned());
            Name::from_labels(labels).map_err(|e| e.to_string())
        }
        None => Ok(parsed),
    }
}

fn parse_ttl(s: &str) -> Option<u32> {
    if let Ok(v) = s.parse() {
        return Some(v);
    }
    // BIND-style units, e.g. 1h30m.
    let mut total: u64 = 0;
    let mut num = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() {
            num.push(c);
            continue;
        }
        let unit = match c.to_ascii_lowercase() {
            's' => 1,
            'm' => 60,
            'h' => 3600,
            'd' => 86400,
            'w' => 604800,
            _ => return None,
        };
        total += num.parse::<u64>().ok()? * unit;
        num.clear();
    }
    if !num.is_empty() {
        return None;
    }
    u32::try_from(total).ok()
}

/// `YYYYMMDDHHmmSS` or a plain unix timestamp.
pub fn parse_sig_time(s: &str) -> Option<u32> {
    if s.len() == 14 && s.bytes().all(|b| b.is_ascii_digit()) {
        let dt = NaiveDateTime::parse_from_str(s, "%Y%m%d%H%M%S").ok()?;
        return u32::try_from(Utc.from_utc_datetime(&dt).timestamp()).ok();
    }
    s.parse().ok()
}

pub fn format_sig_time(t: u32) -> String {
    Utc.timestamp_opt(t as i64, 0)
        .single()
        .map(|d| d.format("%Y%m%d%H%M%S").to_string())
        .unwrap_or_else(|| t.to_string())
}

fn b64(tokens: &[Token]) -> Result<Vec<u8>, String> {
    let joined: String = tokens.iter().map(Token::text).collect();
    base64::engine::general_purpose::STANDARD
        .decode(joined.as_bytes())
        .map_err(|e| format!("base64: {e}"))
}

fn num<T: std::str::FromStr>(tokens: &[Token], i: usize, what: &str) -> Result<T, String> {
    tokens
        .get(i)
        .ok_or_else(|| format!("missing {what}"))?
        .text()
        .parse()
        .map_err(|_| format!("bad {what} {:?}", tokens[i].text()))
}

fn algorithm_number(s: &str) -> Result<u8, String> {
    if let Ok(v) = s.parse() {
        return Ok(v);
    }
    match s.to_ascii_uppercase().as_str() {
        "RSASHA1" => Ok(5),
        "RSASHA1-NSEC3-SHA1" => Ok(7),
        "RSASHA256" => Ok(8),
        "RSASHA512" => Ok(10),
        _ => Err(format!("unknown algorithm {s:?}")),
    }
}

fn rdata(t: u16, f: &[Token], origin: Option<&Name>) -> Result<RData, String> {
    let need = |n: usize| {
        if f.len() < n {
            Err(format!("{} needs {n} fields, got {}", rtype::name(t), f.len()))
        } else {
            Ok(())
        }
    };
    Ok(match t {
        rtype::A => {
            need(1)?;
            let ip: std::net::Ipv4Addr = f[0].text().parse().map_err(|_| "bad IPv4 address".to_string())?;
            RData::A(ip.octets())
        }
        rtype::NS => {
            need(1)?;
            RData::Ns(absolute(f[0].text(), origin)?)
        }
        rtype::SOA => {
            need(7)?;
            RData::Soa(Soa {
                mname: absolute(f[0].text(), origin)?,
                rname: absolute(f[1].text(), origin)?,
                serial: num(f, 2, "serial")?,
                refresh: parse_ttl(f[3].text()).ok_or("bad refresh")?,
                retry: parse_ttl(f[4].text()).ok_or("bad retry")?,
                expire: parse_ttl(f[5].text()).ok_or("bad expire")?,
                minimum: parse_ttl(f[6].text()).ok_or("bad minimum")?,
            })
        }
        rtype::NAPTR => {
            need(6)?;
            let replacement = f[5].text();
            let replacement = if replacement == "." {
                ".".to_string()
            } else {
                format!("{}.", absolute(replacement, origin)?)
            };
            RData::Naptr(NaptrRecord {
                order: num(f, 0, "order")?,
                preference: num(f, 1, "preference")?,
                flags: f[2].text().to_string(),
                service: f[3].text().to_string(),
                regexp: f[4].text().to_string(),
                replacement,
            })
        }
        rtype::RRSIG => {
            need(9)?;
            RData::Rrsig(RrsigRecord {
                type_covered: rtype::from_name(f[0].text()).ok_or("bad covered type")?,
                algorithm: algorithm_number(f[1].text())?,
                labels: num(f, 2, "labels")?,
                original_ttl: parse_ttl(f[3].text()).ok_or("bad original TTL")?,
                expiration: parse_sig_time(f[4].text()).ok_or("bad expiration")?,
                inception: parse_sig_time(f[5].text()).ok_or("bad inception")?,
                key_tag: num(f, 6, "key tag")?,
                signer_name: absolute(f[7].text(), origin)?,
                signature: b64(&f[8..])?,
            })
        }
        rtype::DNSKEY => {
            need(4)?;
            RData::Dnskey(DnskeyRecord {
                flags: num(f, 0, "flags")?,
                protocol: num(f, 1, "protocol")?,
                algorithm: algorithm_number(f[2].text())?,
                public_key: b64(&f[3..])?,
            })
        }
        other => return Err(format!("unsupported record type {}", rtype::name(other))),
    })
}

/// Parses zone text. `origin` seeds `$ORIGIN` for relative names.
pub fn parse(text: &str, origin: Option<&Name>) -> Result<Vec<Record>, ZoneFileError> {
    let mut origin = origin.cloned();
    let mut default_ttl: Option<u32> = None;
    let mut last_owner: Option<Name> = None;
    let mut last_ttl: Option<u32> = None;
    let mut records = Vec::new();

    for entry in entries(text)? {
        let err = |msg: String| ZoneFileError { line: entry.line, msg };
        let toks = &entry.tokens;
        let first = toks[0].text();
        if first.eq_ignore_ascii_case("$ORIGIN") {
            let o = toks.get(1).ok_or_else(|| err("$ORIGIN without name".into()))?;
            origin = Some(absolute(o.text(), None).map_err(err)?);
            continue;
        }
        if first.eq_ignore_ascii_case("$TTL") {
            let t = toks.get(1).and_then(|t| parse_ttl(t.text()));
            default_ttl = Some(t.ok_or_else(|| err("bad $TTL".into()))?);
            continue;
        }
        if first.starts_with('$') {
            return Err(err(format!("unsupported directive {first}")));
        }

        let mut i = 0;
        let owner = if entry.leading_blank {
            last_owner.clone().ok_or_else(|| err("record without owner".into()))?
        } else {
            i = 1;
            absolute(first, origin.as_ref()).map_err(err)?
        };
        let mut ttl = None;
        let mut class_seen = false;
        let rt = loop {
            let tok = toks.get(i).ok_or_else(|| err("missing record type".into()))?.text();
            i += 1;
            if ttl.is_none() && tok.starts_with(|c: char| c.is_ascii_digit()) {
                ttl = Some(parse_ttl(tok).ok_or_else(|| err(format!("bad TTL {tok:?}")))?);
            } else if !class_seen && tok.eq_ignore_ascii_case("IN") {
                class_seen = true;
            } else {
                break rtype::from_name(tok).ok_or_else(|| err(format!("unknown type {tok:?}")))?;
            }
        };
        let ttl = ttl
            .or(default_ttl)
            .or(last_ttl)
            .ok_or_else(|| err("no TTL and no $TTL".into()))?;
        let data = rdata(rt, &toks[i..], origin.as_ref()).map_err(err)?;
        last_owner = Some(owner.clone());
        last_ttl = Some(ttl);
        records.push(Record {
            name: owner,
            rtype: rt,
            class: CLASS_IN,
            ttl,
            data,
        });
    }
    Ok(records)
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\{:03}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn fq(name: &Name) -> String {
    if name.is_root() {
        ".".into()
    } else {
        format!("{name}.")
    }
}

pub fn format_rdata(data: &RData) -> String {
    match data {
        RData::A(a) => std::net::Ipv4Addr::from(*a).to_string(),
        RData::Ns(n) => fq(n),
        RData::Soa(s) => format!(
            "{} {} {} {} {} {} {}",
            fq(&s.mname),
            fq(&s.rname),
            s.serial,
            s.refresh,
            s.retry,
            s.expire,
            s.minimum
        ),
        RData::Naptr(n) => format!(
            "{} {} {} {} {} {}",
            n.order,
            n.preference,
            quote(&n.flags),
            quote(&n.service),
            quote(&n.regexp),
            n.replacement
        ),
        RData::Rrsig(s) => format!(
            "{} {} {} {} {} {} {} {} {}",
            rtype::name(s.type_covered),
            s.algorithm,
            s.labels,
            s.original_ttl,
            format_sig_time(s.expiration),
            format_sig_time(s.inception),
            s.key_tag,
            fq(&s.signer_name),
            s.signature_base64()
        ),
        RData::Dnskey(k) => format!("{} {} {} {}", k.flags, k.protocol, k.algorithm, k.public_key_base64()),
        RData::Other(b) => {
            let hex: String = b.iter().map(|x| format!("{x:02x}")).collect();
            format!("\\# {} {}", b.len(), hex)
        }
    }
}

/// One record as a fully qualified presentation line.
pub fn format_record(r: &Record) -> String {
    format!(
        "{} {} IN {} {}",
        fq(&r.name),
        r.ttl,
        rtype::name(r.rtype),
        format_rdata(&r.data)
    )
}
