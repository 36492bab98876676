//! Decoding and privacy analysis of LTE paging traffic.
//!
//! The crate covers the full pipeline from raw PCCH payload bytes to
//! aggregate privacy findings:
//!
//! * [`uper`]: bit-level reader/writer for unaligned PER payloads.
//! * [`identifiers`]: the 3GPP subscriber identifier hierarchy (IMSI, GUTI,
//!   GUMMEI, S-TMSI) and canonical text forms.
//! * [`pcch`]: the paging message model with decoder, encoder and XML
//!   rendering.
//! * [`capture`]: the line-oriented capture file format and subscriber
//!   event logs.
//! * [`analysis`]: identity statistics, IMSI exposure, cross-cell
//!   correlation, smart paging classification and M-TMSI refresh checks.
//! * [`synth`]: a deterministic synthetic traffic generator with ground
//!   truth, used to validate the analyses end to end.

pub mod analysis;
pub mod capture;
pub mod identifiers;
pub mod pcch;
pub mod synth;
pub mod uper;

pub use identifiers::{Guti, Identity, IdentityStyle, Imsi, STmsi};
pub use pcch::{decode_pcch, encode_pcch, CnDomain, PagingMessage, PagingRecord, UeIdentity};
