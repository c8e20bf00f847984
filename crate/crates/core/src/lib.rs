//! Object Name Service lookups for EPC tags and tooling to evaluate their
//! privacy: tag codec, ONS name translation, NAPTR endpoint selection, DNS and
//! DNSSEC transports (direct or through a SOCKS4a onion proxy), testbed zone
//! generation, anonymity metrics and a latency/eavesdropping harness.

pub mod codec;
pub mod dnssec;
pub mod ons;
pub mod wire;
pub mod zonefile;
pub mod metrics;
pub mod par;
pub mod zonegen;
pub mod transport;
pub mod harness;
