//! SGTIN-96 tag encoding and the `urn:epc:id:sgtin` URI form.
//!
//! A 96-bit tag is laid out most-significant bit first:
//!
//! ```text
//! header(8) | filter(3) | partition(3) | company prefix | item reference | serial(38)
//! ```
//!
//! The partition value splits the 44 bits between company prefix and item
//! reference according to [`PARTITION_TABLE`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Header value identifying an SGTIN-96 tag.
pub const SGTIN96_HEADER: u8 = 0b0011_0000;
pub const SERIAL_BITS: u32 = 38;
pub const SERIAL_MAX: u64 = (1 << SERIAL_BITS) - 1;
/// Bits shared by company prefix and item reference.
pub const PREFIX_AND_ITEM_BITS: u32 = 44;
pub const URI_SCHEME: &str = "urn:epc:id:sgtin";

const TAG_BITS: u32 = 96;
const TAG_MASK: u128 = (1 << TAG_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unsupported EPC scheme: header 0x{0:02X} is not SGTIN-96")]
    UnsupportedScheme(u8),
    #[error("malformed tag: {0}")]
    MalformedTag(String),
    #[error("partition {0} outside 0..=6")]
    PartitionOutOfRange(u8),
    #[error("{field} value {value} does not fit in {bits} bits / {digits} digits")]
    Overflow {
        field: &'static str,
        value: u64,
        bits: u32,
        digits: u32,
    },
    #[error("malformed EPC URI: {0}")]
    MalformedUri(String),
    #[error("no partition has a {0}-digit company prefix")]
    NoPartition(usize),
    #[error("malformed hex tag: {0}")]
    MalformedHex(String),
}

/// One row of the SGTIN-96 partition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionRow {
    pub partition: u8,
    pub cp_bits: u32,
    pub cp_digits: u32,
    pub ir_bits: u32,
    pub ir_digits: u32,
}

const fn row(partition: u8, cp_bits: u32, cp_digits: u32) -> PartitionRow {
    PartitionRow {
        partition,
        cp_bits,
        cp_digits,
        ir_bits: PREFIX_AND_ITEM_BITS - cp_bits,
        ir_digits: 13 - cp_digits,
    }
}

pub const PARTITION_TABLE: [PartitionRow; 7] = [
    row(0, 40, 12),
    row(1, 37, 11),
    row(2, 34, 10),
    row(3, 30, 9),
    row(4, 27, 8),
    row(5, 24, 7),
    row(6, 20, 6),
];

pub fn partition_lookup(partition: u8) -> Result<PartitionRow, CodecError> {
    PARTITION_TABLE
        .get(partition as usize)
        .copied()
        .ok_or(CodecError::PartitionOutOfRange(partition))
}

/// Partition whose company prefix has exactly `digits` decimal digits.
pub fn partition_for_cp_digits(digits: usize) -> Result<PartitionRow, CodecError> {
    PARTITION_TABLE
        .iter()
        .find(|r| r.cp_digits as usize == digits)
        .copied()
        .ok_or(CodecError::NoPartition(digits))
}

fn check_width(field: &'static str, value: u64, bits: u32, digits: u32) -> Result<(), CodecError> {
    let bit_ok = bits >= 64 || value < (1u64 << bits);
    let digit_ok = value < 10u64.pow(digits);
    if bit_ok && digit_ok {
        Ok(())
    } else {
        Err(CodecError::Overflow {
            field,
            value,
            bits,
            digits,
        })
    }
}

/// Decoded SGTIN-96 tag. The header is implicit ([`SGTIN96_HEADER`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sgtin96Fields {
    pub filter: u8,
    pub partition: u8,
    pub company_prefix: u64,
    pub item_reference: u64,
    pub serial: u64,
}

impl Sgtin96Fields {
    pub fn new(
        filter: u8,
        partition: u8,
        company_prefix: u64,
        item_reference: u64,
        serial: u64,
    ) -> Result<Self, CodecError> {
        let fields = Sgtin96Fields {
            filter,
            partition,
            company_prefix,
            item_reference,
            serial,
        };
        fields.validate()?;
        Ok(fields)
    }

    pub const fn header(&self) -> u8 {
        SGTIN96_HEADER
    }

    pub fn partition_row(&self) -> Result<PartitionRow, CodecError> {
        partition_lookup(self.partition)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.filter > 0b111 {
            return Err(CodecError::Overflow {
                field: "filter",
                value: self.filter.into(),
                bits: 3,
                digits: 1,
            });
        }
        let row = self.partition_row()?;
        check_width("company prefix", self.company_prefix, row.cp_bits, row.cp_digits)?;
        check_width("item reference", self.item_reference, row.ir_bits, row.ir_digits)?;
        if self.serial > SERIAL_MAX {
            return Err(CodecError::Overflow {
                field: "serial",
                value: self.serial,
                bits: SERIAL_BITS,
                digits: 12,
            });
        }
        Ok(())
    }
}

/// Extracts the fields of a raw 96-bit tag held in the low bits of `raw`.
pub fn decode_sgtin96(raw: u128) -> Result<Sgtin96Fields, CodecError> {
    if raw > TAG_MASK {
        return Err(CodecError::MalformedTag("value wider than 96 bits".into()));
    }
    let header = (raw >> 88) as u8;
    if header != SGTIN96_HEADER {
        return Err(CodecError::UnsupportedScheme(header));
    }
    let filter = ((raw >> 85) & 0b111) as u8;
    let partition = ((raw >> 82) & 0b111) as u8;
    let row = partition_lookup(partition)
        .map_err(|_| CodecError::MalformedTag(format!("partition {partition} is reserved")))?;
    let body = (raw >> SERIAL_BITS) & ((1u128 << PREFIX_AND_ITEM_BITS) - 1);
    let company_prefix = (body >> row.ir_bits) as u64;
    let item_reference = (body & ((1u128 << row.ir_bits) - 1)) as u64;
    let serial = (raw & SERIAL_MAX as u128) as u64;

    let fields = Sgtin96Fields {
        filter,
        partition,
        company_prefix,
        item_reference,
        serial,
    };
    fields
        .validate()
        .map_err(|e| CodecError::MalformedTag(e.to_string()))?;
    Ok(fields)
}

pub fn encode_sgtin96(fields: &Sgtin96Fields) -> Result<u128, CodecError> {
    fields.validate()?;
    let row = fields.partition_row()?;
    let mut raw = SGTIN96_HEADER as u128;
    raw = (raw << 3) | fields.filter as u128;
    raw = (raw << 3) | fields.partition as u128;
    raw = (raw << row.cp_bits) | fields.company_prefix as u128;
    raw = (raw << row.ir_bits) | fields.item_reference as u128;
    raw = (raw << SERIAL_BITS) | fields.serial as u128;
    Ok(raw)
}

/// Parses `0x`-prefixed (or bare) 24-digit hexadecimal tag text.
pub fn parse_hex(text: &str) -> Result<u128, CodecError> {
    let t = text.trim();
    let digits = t
        .strip_prefix("0x")
        .or_else(|| t.strip_prefix("0X"))
        .unwrap_or(t);
    if digits.len() != 24 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(CodecError::MalformedHex(format!(
            "expected 24 hex digits, got {:?}",
            text
        )));
    }
    u128::from_str_radix(digits, 16).map_err(|e| CodecError::MalformedHex(e.to_string()))
}

pub fn format_hex(raw: u128) -> String {
    format!("0x{raw:024X}")
}

/// The `urn:epc:id:sgtin:CompanyPrefix.ItemReference.Serial` form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpcUri {
    pub company_prefix_text: String,
    pub item_reference_text: String,
    pub serial_text: String,
}

impl fmt::Display for EpcUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}.{}.{}",
            URI_SCHEME, self.company_prefix_text, self.item_reference_text, self.serial_text
        )
    }
}

impl FromStr for EpcUri {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_uri(s).map(|f| fields_to_uri(&f))
    }
}

pub fn fields_to_uri(fields: &Sgtin96Fields) -> EpcUri {
    // Digit widths come from the partition; callers hold validated fields.
    let row = partition_lookup(fields.partition).unwrap_or(PARTITION_TABLE[5]);
    EpcUri {
        company_prefix_text: format!(
            "{:0width$}",
            fields.company_prefix,
            width = row.cp_digits as usize
        ),
        item_reference_text: format!(
            "{:0width$}",
            fields.item_reference,
            width = row.ir_digits as usize
        ),
        serial_text: fields.serial.to_string(),
    }
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Parses an SGTIN URN, inferring the partition from the company prefix width.
/// The filter value is not carried by the URI and comes back as zero.
pub fn parse_uri(text: &str) -> Result<Sgtin96Fields, CodecError> {
    let rest = text
        .trim()
        .strip_prefix(URI_SCHEME)
        .and_then(|r| r.strip_prefix(':'))
        .ok_or_else(|| CodecError::MalformedUri(format!("{text:?} is not an {URI_SCHEME} URN")))?;
    let parts: Vec<&str> = rest.split('.').collect();
    let [cp, ir, serial] = parts.as_slice() else {
        return Err(CodecError::MalformedUri(format!(
            "expected CompanyPrefix.ItemReference.Serial, got {rest:?}"
        )));
    };
    for (name, part) in [("company prefix", cp), ("item reference", ir), ("serial", serial)] {
        if !all_digits(part) {
            return Err(CodecError::MalformedUri(format!("{name} {part:?} is not decimal")));
        }
    }
    if serial.len() > 1 && serial.starts_with('0') {
        return Err(CodecError::MalformedUri(format!(
            "serial {serial:?} has leading zeros"
        )));
    }
    let row = partition_for_cp_digits(cp.len())?;
    if ir.len() != row.ir_digits as usize {
        return Err(CodecError::MalformedUri(format!(
            "item reference must have {} digits for a {}-digit company prefix",
            row.ir_digits, row.cp_digits
        )));
    }
    let number = |s: &str| {
        s.parse::<u64>()
            .map_err(|e| CodecError::MalformedUri(format!("{s:?}: {e}")))
    };
    Sgtin96Fields::new(0, row.partition, number(cp)?, number(ir)?, number(serial)?)
}
