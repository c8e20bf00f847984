//! ONS name construction, NAPTR record handling and EPCIS endpoint selection.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::codec::{self, EpcUri};

pub const DEFAULT_SCHEME_LABEL: &str = "sgtin";
pub const DEFAULT_SUFFIX: &str = "id.onsepc.com";
pub const SERVICE_PREFIX: &str = "EPC+";
/// Regexp head preceding the URL in an ONS NAPTR record.
pub const REGEXP_HEAD: &str = "!.*$!";
const REGEXP_HEAD_ANCHORED: &str = "!^.*$!";

pub const MAX_LABEL_LEN: usize = 63;
pub const MAX_NAME_LEN: usize = 253;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnsError {
    #[error("{0:?} is not an ONS name")]
    NotOns(String),
    #[error("malformed NAPTR regexp {0:?}")]
    MalformedRegexp(String),
    #[error("no NAPTR record offers service {0:?}")]
    ServiceNotFound(String),
    #[error("name {0:?} exceeds DNS length limits")]
    NameTooLong(String),
}

/// Scheme label and suffix under which ONS names live.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnsRoot {
    pub scheme_label: String,
    pub suffix: String,
}

impl Default for OnsRoot {
    fn default() -> Self {
        OnsRoot {
            scheme_label: DEFAULT_SCHEME_LABEL.to_string(),
            suffix: DEFAULT_SUFFIX.to_string(),
        }
    }
}

impl OnsRoot {
    pub fn new(scheme_label: impl Into<String>, suffix: impl Into<String>) -> Self {
        OnsRoot {
            scheme_label: scheme_label.into(),
            suffix: suffix.into().trim_end_matches('.').to_string(),
        }
    }

    pub fn fqdn_for(&self, uri: &EpcUri) -> OnsFqdn {
        OnsFqdn {
            item_reference_text: uri.item_reference_text.clone(),
            company_prefix_text: uri.company_prefix_text.clone(),
            scheme_label: self.scheme_label.clone(),
            suffix: self.suffix.clone(),
        }
    }

    /// Zone apex holding all item names of one company prefix.
    pub fn zone_apex(&self, company_prefix_text: &str) -> String {
        format!("{}.{}.{}", company_prefix_text, self.scheme_label, self.suffix)
    }

    pub fn identity(&self, name: &str) -> Result<OnsIdentity, OnsError> {
        let not_ons = || OnsError::NotOns(name.to_string());
        let lowered = name.trim().trim_end_matches('.').to_ascii_lowercase();
        let tail = format!(
            ".{}.{}",
            self.scheme_label.to_ascii_lowercase(),
            self.suffix.to_ascii_lowercase()
        );
        let head = lowered.strip_suffix(&tail).ok_or_else(not_ons)?;
        let (ir, cp) = head.split_once('.').ok_or_else(not_ons)?;
        let decimal = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !decimal(ir) || !decimal(cp) {
            return Err(not_ons());
        }
        Ok(OnsIdentity {
            company_prefix_text: cp.to_string(),
            item_reference_text: ir.to_string(),
            scheme_label: self.scheme_label.clone(),
        })
    }
}

/// `<item>.<company>.<scheme>.<suffix>` query name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OnsFqdn {
    pub item_reference_text: String,
    pub company_prefix_text: String,
    pub scheme_label: String,
    pub suffix: String,
}

impl OnsFqdn {
    pub fn parse(name: &str) -> Result<Self, OnsError> {
        Self::parse_under(name, &OnsRoot::default())
    }

    pub fn parse_under(name: &str, root: &OnsRoot) -> Result<Self, OnsError> {
        let id = root.identity(name)?;
        let fqdn = OnsFqdn {
            item_reference_text: id.item_reference_text,
            company_prefix_text: id.company_prefix_text,
            scheme_label: root.scheme_label.clone(),
            suffix: root.suffix.clone(),
        };
        fqdn.check_lengths()?;
        Ok(fqdn)
    }

    pub fn check_lengths(&self) -> Result<(), OnsError> {
        let text = self.to_string();
        if text.len() > MAX_NAME_LEN || text.split('.').any(|l| l.is_empty() || l.len() > MAX_LABEL_LEN) {
            return Err(OnsError::NameTooLong(text));
        }
        Ok(())
    }

    pub fn zone_apex(&self) -> String {
        format!("{}.{}.{}", self.company_prefix_text, self.scheme_label, self.suffix)
    }
}

impl fmt::Display for OnsFqdn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}",
            self.item_reference_text, self.company_prefix_text, self.scheme_label, self.suffix
        )
    }
}

/// Manufacturer and product class exposed by an ONS query name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnsIdentity {
    pub company_prefix_text: String,
    pub item_reference_text: String,
    pub scheme_label: String,
}

/// Strips `urn:epc`, drops the serial, reverses the remaining fields and
/// appends the ONS suffix.
pub fn uri_to_fqdn(uri: &EpcUri) -> OnsFqdn {
    OnsRoot::default().fqdn_for(uri)
}

/// Convenience wrapper accepting URN text.
pub fn urn_to_fqdn(urn: &str) -> Result<OnsFqdn, codec::CodecError> {
    let fields = codec::parse_uri(urn)?;
    Ok(uri_to_fqdn(&codec::fields_to_uri(&fields)))
}

pub fn fqdn_to_identity(name: &str) -> Result<OnsIdentity, OnsError> {
    OnsRoot::default().identity(name)
}

/// NAPTR resource record data in presentation field order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NaptrRecord {
    pub order: u16,
    pub preference: u16,
    pub flags: String,
    pub service: String,
    pub regexp: String,
    pub replacement: String,
}

impl NaptrRecord {
    /// Conventional ONS record: order 0, flag `u`, replacement `.`.
    pub fn ons(preference: u16, service_name: &str, url: &str) -> Self {
        NaptrRecord {
            order: 0,
            preference,
            flags: "u".into(),
            service: format!("{SERVICE_PREFIX}{service_name}"),
            regexp: format!("{REGEXP_HEAD}{url}!"),
            replacement: ".".into(),
        }
    }

    pub fn ons_warnings(&self) -> Vec<NaptrWarning> {
        let mut w = Vec::new();
        if self.order != 0 {
            w.push(NaptrWarning::NonZeroOrder(self.order));
        }
        if !self.flags.eq_ignore_ascii_case("u") {
            w.push(NaptrWarning::UnexpectedFlags(self.flags.clone()));
        }
        if self.replacement != "." {
            w.push(NaptrWarning::UnexpectedReplacement(self.replacement.clone()));
        }
        if service_name(&self.service).is_none() {
            w.push(NaptrWarning::ServiceWithoutPrefix(self.service.clone()));
        }
        w
    }
}

/// Non-fatal deviation of a NAPTR record from the ONS conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NaptrWarning {
    NonZeroOrder(u16),
    UnexpectedFlags(String),
    UnexpectedReplacement(String),
    ServiceWithoutPrefix(String),
}

impl fmt::Display for NaptrWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NaptrWarning::NonZeroOrder(o) => write!(f, "order is {o}, expected 0"),
            NaptrWarning::UnexpectedFlags(s) => write!(f, "flags {s:?}, expected \"u\""),
            NaptrWarning::UnexpectedReplacement(s) => write!(f, "replacement {s:?}, expected \".\""),
            NaptrWarning::ServiceWithoutPrefix(s) => write!(f, "service {s:?} lacks {SERVICE_PREFIX}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedNaptr {
    pub record: NaptrRecord,
    pub warnings: Vec<NaptrWarning>,
}

/// Validates the regexp marker shape; other ONS deviations become warnings.
pub fn parse_naptr(
    order: u16,
    preference: u16,
    flags: &str,
    service: &str,
    regexp: &str,
    replacement: &str,
) -> Result<ParsedNaptr, OnsError> {
    extract_url(regexp)?;
    let record = NaptrRecord {
        order,
        preference,
        flags: flags.to_string(),
        service: service.to_string(),
        regexp: regexp.to_string(),
        replacement: replacement.to_string(),
    };
    let warnings = record.ons_warnings();
    Ok(ParsedNaptr { record, warnings })
}

/// Returns the URL between the `!.*$!` head and the closing `!`.
pub fn extract_url(regexp: &str) -> Result<String, OnsError> {
    let malformed = || OnsError::MalformedRegexp(regexp.to_string());
    let body = regexp
        .strip_prefix(REGEXP_HEAD)
        .or_else(|| regexp.strip_prefix(REGEXP_HEAD_ANCHORED))
        .ok_or_else(malformed)?;
    let (url, rest) = body.split_once('!').ok_or_else(malformed)?;
    if url.is_empty() || !rest.is_empty() {
        return Err(malformed());
    }
    Ok(url.to_string())
}

/// Service name after the `EPC+` prefix (prefix matched case-insensitively).
pub fn service_name(service: &str) -> Option<&str> {
    let prefix_len = SERVICE_PREFIX.len();
    if service.len() >= prefix_len && service[..prefix_len].eq_ignore_ascii_case(SERVICE_PREFIX) {
        service.get(prefix_len..)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpcisEndpoint {
    pub service_name: String,
    pub url: String,
    pub preference: u16,
    pub order: u16,
}

impl EpcisEndpoint {
    fn rank(&self, other: &Self) -> Ordering {
        (self.preference, self.order, &self.url).cmp(&(other.preference, other.order, &other.url))
    }
}

impl Ord for EpcisEndpoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.service_name
            .cmp(&other.service_name)
            .then_with(|| self.rank(other))
    }
}

impl PartialOrd for EpcisEndpoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn endpoint_of(record: &NaptrRecord) -> Result<EpcisEndpoint, OnsError> {
    Ok(EpcisEndpoint {
        service_name: service_name(&record.service)
            .unwrap_or(&record.service)
            .to_string(),
        url: extract_url(&record.regexp)?,
        preference: record.preference,
        order: record.order,
    })
}

/// Endpoints of a record set plus the records skipped for bad regexps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EndpointList {
    pub endpoints: Vec<EpcisEndpoint>,
    pub skipped: Vec<(usize, OnsError)>,
}

pub fn all_endpoints(records: &[NaptrRecord]) -> EndpointList {
    let mut list = EndpointList::default();
    for (i, r) in records.iter().enumerate() {
        match endpoint_of(r) {
            Ok(ep) => list.endpoints.push(ep),
            Err(e) => {
                log::warn!("skipping NAPTR record {i}: {e}");
                list.skipped.push((i, e));
            }
        }
    }
    list.endpoints.sort();
    list
}

/// Lowest-preference endpoint for `EPC+<desired_service>`; ties go to lower
/// order, then the lexicographically smaller URL.
pub fn select_endpoint(records: &[NaptrRecord], desired_service: &str) -> Result<EpcisEndpoint, OnsError> {
    records
        .iter()
        .filter(|r| {
            service_name(&r.service).is_some_and(|s| s.eq_ignore_ascii_case(desired_service))
        })
        .filter_map(|r| endpoint_of(r).ok())
        .min_by(|a, b| a.rank(b))
        .ok_or_else(|| OnsError::ServiceNotFound(desired_service.to_string()))
}

/// The three-record response used throughout the ONS literature examples.
pub fn example_records() -> Vec<NaptrRecord> {
    vec![
        NaptrRecord::ons(0, "html", "http://www.example.com/products/example.asp"),
        NaptrRecord::ons(0, "xmlrpc", "http://gateway1.xmlrpc.com/servlet/example"),
        NaptrRecord::ons(1, "xmlrpc", "http://gateway2.xmlrpc.com/servlet/example"),
    ]
}
