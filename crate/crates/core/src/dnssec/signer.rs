//! Zone signing for offline test zones. Production zones are signed with
//! external tools; this exists so the stub services can serve signed data.

use rand::{CryptoRng, RngCore};
use rsa::traits::PublicKeyParts;
use rsa::{Pkcs1v15Sign, RsaPrivateKey};
use sha1::Sha1;
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

use super::{signed_data, Algorithm, DnskeyRecord, RrSet, RrsigRecord, TrustAnchor, DNSKEY_FLAG_SEP, DNSKEY_FLAG_ZONE};
use crate::wire::{self, Name, RData, Record};

#[derive(Debug, Error)]
pub enum SignError {
    #[error("key generation failed: {0}")]
    KeyGen(String),
    #[error("signing failed: {0}")]
    Sign(String),
    #[error("cannot sign: {0}")]
    Data(String),
}

#[derive(Clone)]
pub struct SigningKey {
    key: RsaPrivateKey,
    algorithm: Algorithm,
    flags: u16,
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigningKey")
            .field("algorithm", &self.algorithm)
            .field("flags", &self.flags)
            .field("bits", &(self.key.size() * 8))
            .finish()
    }
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(
        rng: &mut R,
        algorithm: Algorithm,
        bits: usize,
        key_signing: bool,
    ) -> Result<SigningKey, SignError> {
        let key = RsaPrivateKey::new(rng, bits).map_err(|e| SignError::KeyGen(e.to_string()))?;
        let flags = DNSKEY_FLAG_ZONE | if key_signing { DNSKEY_FLAG_SEP } else { 0 };
        Ok(SigningKey { key, algorithm, flags })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn dnskey(&self) -> DnskeyRecord {
        let e = self.key.e().to_bytes_be();
        let n = self.key.n().to_bytes_be();
        let mut public_key = Vec::with_capacity(3 + e.len() + n.len());
        if e.len() < 256 {
            public_key.push(e.len() as u8);
        } else {
            public_key.push(0);
            public_key.extend_from_slice(&(e.len() as u16).to_be_bytes());
        }
        public_key.extend_from_slice(&e);
        public_key.extend_from_slice(&n);
        DnskeyRecord {
            flags: self.flags,
            protocol: 3,
            algorithm: self.algorithm.number(),
            public_key,
        }
    }

    pub fn anchor(&self, apex: &Name) -> TrustAnchor {
        TrustAnchor {
            owner: apex.clone(),
            key: self.dnskey(),
        }
    }

    /// Signs `rrset` as zone `signer` for the validity window given in
    /// unix seconds.
    pub fn sign(
        &self,
        rrset: &RrSet,
        signer: &Name,
        original_ttl: u32,
        inception: u32,
        expiration: u32,
    ) -> Result<RrsigRecord, SignError> {
        let mut sig = RrsigRecord {
            type_covered: rrset.rtype,
            algorithm: self.algorithm.number(),
            labels: rrset.owner.rrsig_label_count(),
            original_ttl,
            expiration,
            inception,
            key_tag: self.dnskey().key_tag(),
            signer_name: signer.clone(),
            signature: Vec::new(),
        };
        let data = signed_data(rrset, &sig).map_err(|e| SignError::Data(e.to_string()))?;
        let result = match self.algorithm {
            Algorithm::RsaSha1 | Algorithm::RsaSha1Nsec3Sha1 => {
                self.key.sign(Pkcs1v15Sign::new::<Sha1>(), &Sha1::digest(&data))
            }
            Algorithm::RsaSha256 => self.key.sign(Pkcs1v15Sign::new::<Sha256>(), &Sha256::digest(&data)),
            Algorithm::RsaSha512 => self.key.sign(Pkcs1v15Sign::new::<Sha512>(), &Sha512::digest(&data)),
        };
        sig.signature = result.map_err(|e| SignError::Sign(e.to_string()))?;
        Ok(sig)
    }
}

/// Returns `records` plus the apex DNSKEY set (signed by `ksk`) and one
/// RRSIG per rrset (signed by `zsk`).
pub fn sign_zone(
    records: &[Record],
    apex: &Name,
    ksk: &SigningKey,
    zsk: &SigningKey,
    inception: u32,
    expiration: u32,
) -> Result<Vec<Record>, SignError> {
    let data_err = |e: wire::WireError| SignError::Data(e.to_string());
    let mut out: Vec<Record> = records
        .iter()
        .filter(|r| !matches!(r.data, RData::Rrsig(_) | RData::Dnskey(_)))
        .cloned()
        .collect();
    let ttl = out.first().map_or(3600, |r| r.ttl);
    for key in [ksk, zsk] {
        out.push(Record::new(apex.clone(), ttl, RData::Dnskey(key.dnskey())));
    }
    struct Pending {
        owner: Name,
        rtype: u16,
        ttl: u32,
        rdatas: Vec<Vec<u8>>,
    }
    let mut sets: Vec<Pending> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in &out {
        let rdata = match &r.data {
            RData::Naptr(n) => wire::naptr_rdata(n, true).map_err(data_err)?,
            other => other.to_wire().map_err(data_err)?,
        };
        let owner = r.name.to_lowercase();
        let i = *index.entry((owner.clone(), r.rtype)).or_insert_with(|| {
            sets.push(Pending {
                owner,
                rtype: r.rtype,
                ttl: r.ttl,
                rdatas: Vec::new(),
            });
            sets.len() - 1
        });
        sets[i].rdatas.push(rdata);
    }
    let mut sigs = Vec::with_capacity(sets.len());
    for set in sets {
        let rrset = RrSet {
            owner: set.owner.clone(),
            rtype: set.rtype,
            class: wire::CLASS_IN,
            rdatas: set.rdatas,
        };
        let key = if set.rtype == wire::rtype::DNSKEY { ksk } else { zsk };
        let sig = key.sign(&rrset, apex, set.ttl, inception, expiration)?;
        sigs.push(Record::new(set.owner, set.ttl, RData::Rrsig(sig)));
    }
    out.extend(sigs);
    Ok(out)
}
