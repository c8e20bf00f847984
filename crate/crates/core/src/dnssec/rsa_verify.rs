//! RSASSA-PKCS1-v1_5 verification for DNSKEY-encoded RSA public keys.

use num_bigint::BigUint;
use sha1::Sha1;
use sha2::{Digest, Sha256, Sha512};

use super::{Algorithm, BogusReason};

const SHA1_PREFIX: &[u8] = &[
    0x30, 0x21, 0x30, 0x09, 0x06, 0x05, 0x2b, 0x0e, 0x03, 0x02, 0x1a, 0x05, 0x00, 0x04, 0x14,
];
const SHA256_PREFIX: &[u8] = &[
    0x30, 0x31, 0x30, 0x0d, 0x06, 0x09, 0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01, 0x05, 0x00, 0x04,
    0x20,
];
const SHA512_PREFIX: &[u8] = &[
    0x30, 0x51, 0x30, 0x0d, 0x06, 0x09, 0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x03, 0x05, 0x00, 0x04,
    0x40,
];

/// Splits a DNSKEY RSA public key into (exponent, modulus).
pub(crate) fn split_public_key(key: &[u8]) -> Option<(&[u8], &[u8])> {
    let (&first, rest) = key.split_first()?;
    let (exp_len, rest) = if first == 0 {
        if rest.len() < 2 {
            return None;
        }
        (u16::from_be_bytes([rest[0], rest[1]]) as usize, &rest[2..])
    } else {
        (first as usize, rest)
    };
    if exp_len == 0 || rest.len() <= exp_len {
        return None;
    }
    Some(rest.split_at(exp_len))
}

fn digest_info(alg: Algorithm, data: &[u8]) -> Vec<u8> {
    let (prefix, hash) = match alg {
        Algorithm::RsaSha1 | Algorithm::RsaSha1Nsec3Sha1 => (SHA1_PREFIX, Sha1::digest(data).to_vec()),
        Algorithm::RsaSha256 => (SHA256_PREFIX, Sha256::digest(data).to_vec()),
        Algorithm::RsaSha512 => (SHA512_PREFIX, Sha512::digest(data).to_vec()),
    };
    [prefix, hash.as_slice()].concat()
}

/// Raw PKCS#1 v1.5 check: `sig^e mod n` must equal the padded DigestInfo.
pub fn verify_pkcs1v15(exponent: &[u8], modulus: &[u8], digest_info: &[u8], sig: &[u8]) -> bool {
    let n = BigUint::from_bytes_be(modulus);
    let e = BigUint::from_bytes_be(exponent);
    let k = n.bits().div_ceil(8) as usize;
    if k < digest_info.len() + 11 || sig.len() != k {
        return false;
    }
    let s = BigUint::from_bytes_be(sig);
    if s >= n {
        return false;
    }
    let m = s.modpow(&e, &n).to_bytes_be();
    let mut em = vec![0u8; k - m.len()];
    em.extend_from_slice(&m);

    let mut expected = Vec::with_capacity(k);
    expected.extend_from_slice(&[0x00, 0x01]);
    expected.resize(k - digest_info.len() - 1, 0xFF);
    expected.push(0x00);
    expected.extend_from_slice(digest_info);
    em == expected
}

pub(crate) fn verify(alg: Algorithm, public_key: &[u8], data: &[u8], sig: &[u8]) -> Result<(), BogusReason> {
    let (e, n) = split_public_key(public_key).ok_or(BogusReason::MalformedKey)?;
    if verify_pkcs1v15(e, n, &digest_info(alg, data), sig) {
        Ok(())
    } else {
        Err(BogusReason::BadSignature)
    }
}
