//! Passive eavesdropper on ONS query logs and privacy-policy checking.

use std::fmt;

use super::HarnessError;
use crate::ons::{fqdn_to_identity, OnsIdentity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub timestamp: String,
    pub fqdn: String,
    pub identity: OnsIdentity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Eavesdrop {
    pub observations: Vec<Observation>,
    /// Parsed lines whose name is not ONS-shaped.
    pub skipped: usize,
    /// Unparseable lines as (line number, reason).
    pub warnings: Vec<(usize, String)>,
}

impl Eavesdrop {
    pub fn parsed_lines(&self) -> usize {
        self.observations.len() + self.skipped
    }
}

/// Decodes every ONS-shaped name in a `timestamp name` log.
pub fn eavesdrop(log: &str) -> Eavesdrop {
    let mut out = Eavesdrop::default();
    for (i, line) in log.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(timestamp), Some(name), None) = (fields.next(), fields.next(), fields.next()) else {
            log::warn!("query log line {}: expected `timestamp name`", i + 1);
            out.warnings.push((i + 1, "expected `timestamp name`".into()));
            continue;
        };
        match fqdn_to_identity(name) {
            Ok(identity) => out.observations.push(Observation {
                timestamp: timestamp.to_string(),
                fqdn: name.trim_end_matches('.').to_string(),
                identity,
            }),
            Err(_) => out.skipped += 1,
        }
    }
    out
}

/// A prohibited manufacturer (`item_reference_text == None`) or product
/// class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prohibition {
    pub company_prefix_text: String,
    pub item_reference_text: Option<String>,
}

impl Prohibition {
    pub fn matches(&self, id: &OnsIdentity) -> bool {
        self.company_prefix_text == id.company_prefix_text
            && self.item_reference_text.as_ref().is_none_or(|ir| *ir == id.item_reference_text)
    }
}

impl fmt::Display for Prohibition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.item_reference_text {
            Some(ir) => write!(f, "{},{}", self.company_prefix_text, ir),
            None => f.write_str(&self.company_prefix_text),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrivacyPolicy {
    pub prohibitions: Vec<Prohibition>,
}

fn decimal_label(s: &str) -> bool {
    !s.is_empty() && s.len() <= 63 && s.bytes().all(|b| b.is_ascii_digit())
}

impl PrivacyPolicy {
    /// Lines of `cp[,ir]`; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<PrivacyPolicy, HarnessError> {
        let mut prohibitions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let cp = parts.next().unwrap_or_default();
            let ir = parts.next();
            if parts.next().is_some() || !decimal_label(cp) || ir.is_some_and(|ir| !decimal_label(ir)) {
                return Err(HarnessError::Parse {
                    line: i + 1,
                    msg: format!("expected `company_prefix[,item_reference]` digits, got {line:?}"),
                });
            }
            prohibitions.push(Prohibition {
                company_prefix_text: cp.to_string(),
                item_reference_text: ir.map(str::to_string),
            });
        }
        Ok(PrivacyPolicy { prohibitions })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub observation: Observation,
    pub rule: Prohibition,
}

/// One violation per observation matching any prohibition (first rule wins).
pub fn check_policy(observations: &[Observation], policy: &PrivacyPolicy) -> Vec<Violation> {
    observations
        .iter()
        .filter_map(|o| {
            policy.prohibitions.iter().find(|p| p.matches(&o.identity)).map(|rule| Violation {
                observation: o.clone(),
                rule: rule.clone(),
            })
        })
        .collect()
}
