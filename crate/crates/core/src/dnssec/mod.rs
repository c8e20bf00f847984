//! RRSIG verification of answer rrsets against configured trust anchors.
//!
//! Validation is anchored per zone: a configured DNSKEY either signs the
//! NAPTR rrset directly, or is a key-signing key that vouches for the zone's
//! DNSKEY rrset, whose zone-signing keys then sign the answers. There is no
//! chain to the root and no denial-of-existence checking.

mod rsa_verify;
pub mod signer;

use std::fmt;

use base64::Engine;
use thiserror::Error;

use crate::ons::NaptrRecord;
use crate::wire::{self, rtype, Name, Reader, WireError, CLASS_IN};

pub use rsa_verify::verify_pkcs1v15;
pub use signer::SigningKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    RsaSha1,
    RsaSha1Nsec3Sha1,
    RsaSha256,
    RsaSha512,
}

impl Algorithm {
    pub fn from_u8(v: u8) -> Option<Algorithm> {
        match v {
            5 => Some(Algorithm::RsaSha1),
            7 => Some(Algorithm::RsaSha1Nsec3Sha1),
            8 => Some(Algorithm::RsaSha256),
            10 => Some(Algorithm::RsaSha512),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Algorithm::RsaSha1 => 5,
            Algorithm::RsaSha1Nsec3Sha1 => 7,
            Algorithm::RsaSha256 => 8,
            Algorithm::RsaSha512 => 10,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Algorithm::RsaSha1 => "RSASHA1",
            Algorithm::RsaSha1Nsec3Sha1 => "RSASHA1-NSEC3-SHA1",
            Algorithm::RsaSha256 => "RSASHA256",
            Algorithm::RsaSha512 => "RSASHA512",
        }
    }
}

pub const DNSKEY_FLAG_ZONE: u16 = 0x0100;
pub const DNSKEY_FLAG_SEP: u16 = 0x0001;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DnskeyRecord {
    pub flags: u16,
    pub protocol: u8,
    pub algorithm: u8,
    pub public_key: Vec<u8>,
}

impl DnskeyRecord {
    pub fn to_rdata(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(4 + self.public_key.len());
        v.extend_from_slice(&self.flags.to_be_bytes());
        v.push(self.protocol);
        v.push(self.algorithm);
        v.extend_from_slice(&self.public_key);
        v
    }

    pub fn from_rdata(rdata: &[u8]) -> Result<DnskeyRecord, WireError> {
        if rdata.len() < 4 {
            return Err(WireError::Malformed("DNSKEY RDATA".into()));
        }
        Ok(DnskeyRecord {
            flags: u16::from_be_bytes([rdata[0], rdata[1]]),
            protocol: rdata[2],
            algorithm: rdata[3],
            public_key: rdata[4..].to_vec(),
        })
    }

    /// Key tag checksum over the RDATA.
    pub fn key_tag(&self) -> u16 {
        let rdata = self.to_rdata();
        let mut acc: u32 = 0;
        for (i, b) in rdata.iter().enumerate() {
            acc += if i & 1 == 1 { *b as u32 } else { (*b as u32) << 8 };
        }
        acc += (acc >> 16) & 0xFFFF;
        (acc & 0xFFFF) as u16
    }

    pub fn is_zone_key(&self) -> bool {
        self.flags & DNSKEY_FLAG_ZONE != 0
    }

    pub fn is_sep(&self) -> bool {
        self.flags & DNSKEY_FLAG_SEP != 0
    }

    pub fn public_key_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.public_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RrsigRecord {
    pub type_covered: u16,
    pub algorithm: u8,
    pub labels: u8,
    pub original_ttl: u32,
    pub expiration: u32,
    pub inception: u32,
    pub key_tag: u16,
    pub signer_name: Name,
    pub signature: Vec<u8>,
}

impl RrsigRecord {
    /// RDATA up to (not including) the signature, signer name lowercased.
    pub fn signed_prefix(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(18 + self.signer_name.wire_len());
        v.extend_from_slice(&self.type_covered.to_be_bytes());
        v.push(self.algorithm);
        v.push(self.labels);
        v.extend_from_slice(&self.original_ttl.to_be_bytes());
        v.extend_from_slice(&self.expiration.to_be_bytes());
        v.extend_from_slice(&self.inception.to_be_bytes());
        v.extend_from_slice(&self.key_tag.to_be_bytes());
        self.signer_name.to_lowercase().write(&mut v);
        v
    }

    pub fn to_rdata(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(18 + self.signer_name.wire_len() + self.signature.len());
        v.extend_from_slice(&self.type_covered.to_be_bytes());
        v.push(self.algorithm);
        v.push(self.labels);
        v.extend_from_slice(&self.original_ttl.to_be_bytes());
        v.extend_from_slice(&self.expiration.to_be_bytes());
        v.extend_from_slice(&self.inception.to_be_bytes());
        v.extend_from_slice(&self.key_tag.to_be_bytes());
        self.signer_name.write(&mut v);
        v.extend_from_slice(&self.signature);
        v
    }

    pub fn from_rdata(rdata: &[u8]) -> Result<RrsigRecord, WireError> {
        let mut r = Reader::new(rdata);
        let rec = RrsigRecord {
            type_covered: r.u16()?,
            algorithm: r.u8()?,
            labels: r.u8()?,
            original_ttl: r.u32()?,
            expiration: r.u32()?,
            inception: r.u32()?,
            key_tag: r.u16()?,
            // RRSIG signer names are never compressed; a pointer here would
            // reference offsets outside this RDATA and fail.
            signer_name: r.name()?,
            signature: Vec::new(),
        };
        let sig = r.bytes(r.remaining())?.to_vec();
        Ok(RrsigRecord { signature: sig, ..rec })
    }

    pub fn signature_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.signature)
    }
}

/// Configured key for a zone apex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrustAnchor {
    pub owner: Name,
    pub key: DnskeyRecord,
}

/// An rrset with canonical (uncompressed, lowercased-name) RDATA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrSet {
    pub owner: Name,
    pub rtype: u16,
    pub class: u16,
    pub rdatas: Vec<Vec<u8>>,
}

impl RrSet {
    pub fn naptr(owner: &Name, records: &[NaptrRecord]) -> Result<RrSet, WireError> {
        Ok(RrSet {
            owner: owner.clone(),
            rtype: rtype::NAPTR,
            class: CLASS_IN,
            rdatas: records
                .iter()
                .map(|r| wire::naptr_rdata(r, true))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn dnskey(owner: &Name, keys: &[DnskeyRecord]) -> RrSet {
        RrSet {
            owner: owner.clone(),
            rtype: rtype::DNSKEY,
            class: CLASS_IN,
            rdatas: keys.iter().map(DnskeyRecord::to_rdata).collect(),
        }
    }
}

/// Octets covered by `sig` over `rrset`: RRSIG prefix then each RR in
/// canonical form and order.
pub fn signed_data(rrset: &RrSet, sig: &RrsigRecord) -> Result<Vec<u8>, BogusReason> {
    let owner = rrset.owner.to_lowercase();
    let owner_labels = owner.labels().len();
    let owner = match (sig.labels as usize).cmp(&owner_labels) {
        std::cmp::Ordering::Equal => owner,
        std::cmp::Ordering::Less => owner
            .suffix(sig.labels as usize)
            .prepend(b"*")
            .map_err(|_| BogusReason::LabelMismatch)?,
        std::cmp::Ordering::Greater => return Err(BogusReason::LabelMismatch),
    };
    let mut rdatas: Vec<&Vec<u8>> = rrset.rdatas.iter().collect();
    rdatas.sort();
    rdatas.dedup();

    let owner_wire = owner.to_wire();
    let mut out = sig.signed_prefix();
    for rd in rdatas {
        out.extend_from_slice(&owner_wire);
        out.extend_from_slice(&rrset.rtype.to_be_bytes());
        out.extend_from_slice(&rrset.class.to_be_bytes());
        out.extend_from_slice(&sig.original_ttl.to_be_bytes());
        out.extend_from_slice(&(rd.len() as u16).to_be_bytes());
        out.extend_from_slice(rd);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BogusReason {
    #[error("signature does not verify")]
    BadSignature,
    #[error("signature expired")]
    Expired,
    #[error("signature not yet valid")]
    NotYetValid,
    #[error("unsupported algorithm {0}")]
    UnsupportedAlgorithm(u8),
    #[error("no configured key matches signer and key tag")]
    NoMatchingKey,
    #[error("key tag mismatch")]
    KeyTagMismatch,
    #[error("RRSIG covers the wrong type")]
    TypeMismatch,
    #[error("signer is not the zone of the key")]
    SignerMismatch,
    #[error("RRSIG label count inconsistent with owner")]
    LabelMismatch,
    #[error("malformed public key")]
    MalformedKey,
    #[error("DNSKEY rrset did not validate: {0}")]
    KeySetInvalid(Box<BogusReason>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Secure,
    Bogus(BogusReason),
    Unsigned,
}

impl Verdict {
    pub fn is_secure(&self) -> bool {
        matches!(self, Verdict::Secure)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Secure => f.write_str("secure"),
            Verdict::Bogus(_) => f.write_str("bogus"),
            Verdict::Unsigned => f.write_str("unsigned"),
        }
    }
}

fn time_window(sig: &RrsigRecord, now: u32) -> Result<(), BogusReason> {
    // Serial-number arithmetic on 32-bit timestamps.
    if (now.wrapping_sub(sig.inception) as i32) < 0 {
        return Err(BogusReason::NotYetValid);
    }
    if (sig.expiration.wrapping_sub(now) as i32) < 0 {
        return Err(BogusReason::Expired);
    }
    Ok(())
}

/// Checks one signature with one key owned by `key_owner`.
pub fn verify_rrsig(
    rrset: &RrSet,
    sig: &RrsigRecord,
    key_owner: &Name,
    key: &DnskeyRecord,
    now: u32,
) -> Result<(), BogusReason> {
    let alg = Algorithm::from_u8(sig.algorithm).ok_or(BogusReason::UnsupportedAlgorithm(sig.algorithm))?;
    if sig.type_covered != rrset.rtype {
        return Err(BogusReason::TypeMismatch);
    }
    if !sig.signer_name.eq_ignore_case(key_owner) || !rrset.owner.ends_with(&sig.signer_name) {
        return Err(BogusReason::SignerMismatch);
    }
    if key.algorithm != sig.algorithm || key.key_tag() != sig.key_tag || !key.is_zone_key() {
        return Err(BogusReason::KeyTagMismatch);
    }
    time_window(sig, now)?;
    let data = signed_data(rrset, sig)?;
    rsa_verify::verify(alg, &key.public_key, &data, &sig.signature)
}

/// Validates `rrset` with any of `sigs` under any of `keys`; keys whose tag
/// or algorithm does not match a signature are skipped.
pub fn validate_rrset(rrset: &RrSet, sigs: &[RrsigRecord], keys: &[TrustAnchor], now: u32) -> Verdict {
    let covering: Vec<&RrsigRecord> = sigs.iter().filter(|s| s.type_covered == rrset.rtype).collect();
    if covering.is_empty() {
        return Verdict::Unsigned;
    }
    let mut failure = None;
    for sig in covering {
        if Algorithm::from_u8(sig.algorithm).is_none() {
            failure.get_or_insert(BogusReason::UnsupportedAlgorithm(sig.algorithm));
            continue;
        }
        for anchor in keys {
            if anchor.key.key_tag() != sig.key_tag || anchor.key.algorithm != sig.algorithm {
                continue;
            }
            match verify_rrsig(rrset, sig, &anchor.owner, &anchor.key, now) {
                Ok(()) => return Verdict::Secure,
                Err(e) => failure = Some(e),
            }
        }
    }
    Verdict::Bogus(failure.unwrap_or(BogusReason::NoMatchingKey))
}

/// Accepts the zone-signing keys of a DNSKEY rrset once a configured
/// key-signing anchor validates it.
pub fn keys_from_validated_keyset(
    apex: &Name,
    keyset: &[DnskeyRecord],
    keyset_sigs: &[RrsigRecord],
    anchors: &[TrustAnchor],
    now: u32,
) -> Result<Vec<TrustAnchor>, BogusReason> {
    let rrset = RrSet::dnskey(apex, keyset);
    match validate_rrset(&rrset, keyset_sigs, anchors, now) {
        Verdict::Secure => Ok(keyset
            .iter()
            .filter(|k| k.is_zone_key())
            .map(|k| TrustAnchor {
                owner: apex.clone(),
                key: k.clone(),
            })
            .collect()),
        Verdict::Bogus(r) => Err(BogusReason::KeySetInvalid(Box::new(r))),
        Verdict::Unsigned => Err(BogusReason::KeySetInvalid(Box::new(BogusReason::NoMatchingKey))),
    }
}

pub fn unix_now() -> u32 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as u32)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zonefile;

    const NOW: u32 = 1_800_000_000; // 2027

    struct Fixture {
        naptr: RrSet,
        sigs: Vec<RrsigRecord>,
        keyset: Vec<DnskeyRecord>,
        keyset_sigs: Vec<RrsigRecord>,
        anchors: Vec<TrustAnchor>,
    }

    fn load(zone: &str, anchor: &str) -> Fixture {
        let records = zonefile::parse(zone, None).unwrap();
        let owner = Name::from_ascii("075861.0434687.sgtin.id.onsepc.com").unwrap();
        let naptrs: Vec<NaptrRecord> = records
            .iter()
            .filter_map(|r| match &r.data {
                wire::RData::Naptr(n) => Some(n.clone()),
                _ => None,
            })
            .collect();
        let sigs_for = |t: u16| {
            records
                .iter()
                .filter_map(|r| match &r.data {
                    wire::RData::Rrsig(s) if s.type_covered == t => Some(s.clone()),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        let keyset = records
            .iter()
            .filter_map(|r| match &r.data {
                wire::RData::Dnskey(k) => Some(k.clone()),
                _ => None,
            })
            .collect();
        let anchors = zonefile::parse(anchor, None)
            .unwrap()
            .into_iter()
            .filter_map(|r| match r.data {
                wire::RData::Dnskey(k) => Some(TrustAnchor { owner: r.name, key: k }),
                _ => None,
            })
            .collect();
        Fixture {
            naptr: RrSet::naptr(&owner, &naptrs).unwrap(),
            sigs: sigs_for(rtype::NAPTR),
            keyset,
            keyset_sigs: sigs_for(rtype::DNSKEY),
            anchors,
        }
    }

    fn zsk() -> Fixture {
        load(
            include_str!("../../tests/data/signed_zsk.zone"),
            include_str!("../../tests/data/anchor_zsk.key"),
        )
    }

    #[test]
    fn externally_signed_rsasha256_is_secure() {
        let f = zsk();
        assert_eq!(f.naptr.rdatas.len(), 3);
        assert_eq!(validate_rrset(&f.naptr, &f.sigs, &f.anchors, NOW), Verdict::Secure);
    }

    #[test]
    fn externally_signed_rsasha1_is_secure() {
        let f = load(
            include_str!("../../tests/data/signed_sha1.zone"),
            include_str!("../../tests/data/anchor_sha1.key"),
        );
        assert_eq!(f.sigs[0].algorithm, 5);
        assert_eq!(validate_rrset(&f.naptr, &f.sigs, &f.anchors, NOW), Verdict::Secure);
    }

    #[test]
    fn ksk_chain_is_secure() {
        let f = load(
            include_str!("../../tests/data/signed_ksk.zone"),
            include_str!("../../tests/data/anchor_ksk.key"),
        );
        // The KSK alone does not sign the answers.
        assert!(matches!(
            validate_rrset(&f.naptr, &f.sigs, &f.anchors, NOW),
            Verdict::Bogus(BogusReason::NoMatchingKey)
        ));
        let apex = Name::from_ascii("0434687.sgtin.id.onsepc.com").unwrap();
        let zsks = keys_from_validated_keyset(&apex, &f.keyset, &f.keyset_sigs, &f.anchors, NOW).unwrap();
        assert_eq!(validate_rrset(&f.naptr, &f.sigs, &zsks, NOW), Verdict::Secure);

        let mut tampered = f.keyset.clone();
        tampered[1].public_key[10] ^= 1;
        assert!(keys_from_validated_keyset(&apex, &tampered, &f.keyset_sigs, &f.anchors, NOW).is_err());
    }

    #[test]
    fn key_tags_match_reference() {
        let f = zsk();
        assert_eq!(f.anchors[0].key.key_tag(), f.sigs[0].key_tag);
        let f = load(
            include_str!("../../tests/data/signed_ksk.zone"),
            include_str!("../../tests/data/anchor_ksk.key"),
        );
        assert_eq!(f.anchors[0].key.key_tag(), 45755);
    }

    #[test]
    fn every_single_octet_corruption_is_bogus() {
        let f = zsk();
        for i in 0..f.sigs[0].signature.len() {
            let mut sigs = f.sigs.clone();
            sigs[0].signature[i] ^= 0x01;
            assert!(matches!(validate_rrset(&f.naptr, &sigs, &f.anchors, NOW), Verdict::Bogus(_)), "sig octet {i}");
        }
        for (r, rd) in f.naptr.rdatas.iter().enumerate() {
            for i in 0..rd.len() {
                let mut set = f.naptr.clone();
                set.rdatas[r][i] ^= 0x20;
                assert!(matches!(validate_rrset(&set, &f.sigs, &f.anchors, NOW), Verdict::Bogus(_)), "rr {r} octet {i}");
            }
        }
    }

    #[test]
    fn unsigned_and_window_and_algorithm() {
        let f = zsk();
        assert_eq!(validate_rrset(&f.naptr, &[], &f.anchors, NOW), Verdict::Unsigned);
        let late = f.sigs[0].expiration.wrapping_add(10);
        assert_eq!(
            validate_rrset(&f.naptr, &f.sigs, &f.anchors, late),
            Verdict::Bogus(BogusReason::Expired)
        );
        let early = f.sigs[0].inception.wrapping_sub(10);
        assert_eq!(
            validate_rrset(&f.naptr, &f.sigs, &f.anchors, early),
            Verdict::Bogus(BogusReason::NotYetValid)
        );
        let mut sigs = f.sigs.clone();
        sigs[0].algorithm = 13;
        assert_eq!(
            validate_rrset(&f.naptr, &sigs, &f.anchors, NOW),
            Verdict::Bogus(BogusReason::UnsupportedAlgorithm(13))
        );
    }

    #[test]
    fn record_order_and_owner_case_do_not_matter() {
        let f = zsk();
        let mut set = f.naptr.clone();
        set.rdatas.reverse();
        set.owner = Name::from_ascii("075861.0434687.SGTIN.id.onsepc.com").unwrap();
        assert_eq!(validate_rrset(&set, &f.sigs, &f.anchors, NOW), Verdict::Secure);
    }

    #[test]
    fn rrsig_rdata_round_trip() {
        let f = zsk();
        let rd = f.sigs[0].to_rdata();
        assert_eq!(RrsigRecord::from_rdata(&rd).unwrap(), f.sigs[0]);
    }
}
