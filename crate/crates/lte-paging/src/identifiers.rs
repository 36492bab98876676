//! 3GPP subscriber identifier hierarchy: IMSI, GUTI, GUMMEI and S-TMSI.
//!
//! The toolkit treats two S-TMSIs with equal bits as the same subscriber for
//! the duration of a capture window. That is a working assumption, not a
//! protocol guarantee: an operator may reallocate an M-TMSI to another
//! subscriber between captures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentifierError {
    #[error("{field} out of range: {reason}")]
    FieldOutOfRange { field: &'static str, reason: String },
}

fn digits_of(field: &'static str, text: &str) -> Result<Vec<u8>, IdentifierError> {
    text.chars()
        .map(|c| {
            c.to_digit(10)
                .map(|d| d as u8)
                .ok_or_else(|| IdentifierError::FieldOutOfRange {
                    field,
                    reason: format!("non-digit character {c:?}"),
                })
        })
        .collect()
}

/// Mobile Country Code: exactly three decimal digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mcc([u8; 3]);

impl Mcc {
    pub fn new(digits: [u8; 3]) -> Result<Self, IdentifierError> {
        if digits.iter().any(|&d| d > 9) {
            return Err(IdentifierError::FieldOutOfRange {
                field: "mcc",
                reason: format!("digits {digits:?} contain a value above 9"),
            });
        }
        Ok(Self(digits))
    }

    pub fn digits(&self) -> &[u8] {
        &self.0
    }
}

impl FromStr for Mcc {
    type Err = IdentifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = digits_of("mcc", s)?;
        let arr: [u8; 3] = digits
            .try_into()
            .map_err(|_| IdentifierError::FieldOutOfRange {
                field: "mcc",
                reason: format!("{s:?} is not exactly 3 digits"),
            })?;
        Mcc::new(arr)
    }
}

impl fmt::Display for Mcc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Mobile Network Code: two or three decimal digits. Stored as digits so
/// that "01" and "001" stay distinct operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mnc {
    digits: [u8; 3],
    len: u8,
}

impl Mnc {
    pub fn new(digits: &[u8]) -> Result<Self, IdentifierError> {
        if digits.len() < 2 || digits.len() > 3 {
            return Err(IdentifierError::FieldOutOfRange {
                field: "mnc",
                reason: format!("{} digits, expected 2 or 3", digits.len()),
            });
        }
        if digits.iter().any(|&d| d > 9) {
            return Err(IdentifierError::FieldOutOfRange {
                field: "mnc",
                reason: format!("digits {digits:?} contain a value above 9"),
            });
        }
        let mut arr = [0u8; 3];
        arr[..digits.len()].copy_from_slice(digits);
        Ok(Self {
            digits: arr,
            len: digits.len() as u8,
        })
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits[..self.len as usize]
    }
}

impl FromStr for Mnc {
    type Err = IdentifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mnc::new(&digits_of("mnc", s)?)
    }
}

impl fmt::Display for Mnc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// The last 40 bits of a GUTI: MME code plus M-TMSI. This is the identity
/// paging records carry over the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct STmsi {
    pub mmec: u8,
    pub m_tmsi: u32,
}

impl STmsi {
    pub fn new(mmec: u8, m_tmsi: u32) -> Self {
        Self { mmec, m_tmsi }
    }

    /// Canonical report form, e.g. `38:D03F7390`.
    pub fn canonical_hex(&self) -> String {
        format!("{:02X}:{:08X}", self.mmec, self.m_tmsi)
    }

    /// Fixed-width bit strings, 8 characters of MMEC and 32 of M-TMSI.
    pub fn bit_strings(&self) -> (String, String) {
        (format!("{:08b}", self.mmec), format!("{:032b}", self.m_tmsi))
    }
}

impl fmt::Display for STmsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_hex())
    }
}

impl FromStr for STmsi {
    type Err = IdentifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: String| IdentifierError::FieldOutOfRange {
            field: "s-tmsi",
            reason,
        };
        let (mmec, m_tmsi) = s
            .split_once(':')
            .ok_or_else(|| bad(format!("{s:?} is not MM:TTTTTTTT")))?;
        if mmec.len() != 2 || m_tmsi.len() != 8 {
            return Err(bad(format!("{s:?} is not MM:TTTTTTTT")));
        }
        Ok(Self {
            mmec: u8::from_str_radix(mmec, 16).map_err(|e| bad(e.to_string()))?,
            m_tmsi: u32::from_str_radix(m_tmsi, 16).map_err(|e| bad(e.to_string()))?,
        })
    }
}

impl TryFrom<String> for STmsi {
    type Error = IdentifierError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<STmsi> for String {
    fn from(s: STmsi) -> String {
        s.canonical_hex()
    }
}

/// Globally Unique MME Identifier: everything in a GUTI except the M-TMSI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gummei {
    pub mcc: Mcc,
    pub mnc: Mnc,
    pub mmegi: u16,
    pub mmec: u8,
}

/// Globally Unique Temporary Identity as allocated by an MME.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Guti {
    pub mcc: Mcc,
    pub mnc: Mnc,
    pub mmegi: u16,
    pub mmec: u8,
    pub m_tmsi: u32,
}

/// Builds a GUTI from raw field text and values.
pub fn compose_guti(
    mcc: &str,
    mnc: &str,
    mmegi: u16,
    mmec: u8,
    m_tmsi: u32,
) -> Result<Guti, IdentifierError> {
    Ok(Guti {
        mcc: mcc.parse()?,
        mnc: mnc.parse()?,
        mmegi,
        mmec,
        m_tmsi,
    })
}

/// Inverse of [`compose_guti`].
pub fn decompose_guti(guti: &Guti) -> (String, String, u16, u8, u32) {
    (
        guti.mcc.to_string(),
        guti.mnc.to_string(),
        guti.mmegi,
        guti.mmec,
        guti.m_tmsi,
    )
}

/// Projects the paging-visible part out of a GUTI.
pub fn s_tmsi_of(guti: &Guti) -> STmsi {
    STmsi::new(guti.mmec, guti.m_tmsi)
}

/// Projects the MME identification out of a GUTI.
pub fn gummei_of(guti: &Guti) -> Gummei {
    Gummei {
        mcc: guti.mcc,
        mnc: guti.mnc,
        mmegi: guti.mmegi,
        mmec: guti.mmec,
    }
}

/// International Mobile Subscriber Identity: a string of 6 to 21 decimal
/// digits as bounded by the paging grammar. Composed identities (MCC + MNC +
/// MSIN) are additionally capped at the real-world maximum of 15 digits;
/// decoded ones above 15 are representable but flagged by
/// [`Imsi::exceeds_standard_length`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Imsi {
    digits: Vec<u8>,
}

pub const IMSI_MIN_DIGITS: usize = 6;
pub const IMSI_MAX_DIGITS: usize = 21;
pub const IMSI_STANDARD_MAX_DIGITS: usize = 15;

impl Imsi {
    pub fn from_digits(digits: Vec<u8>) -> Result<Self, IdentifierError> {
        if digits.len() < IMSI_MIN_DIGITS || digits.len() > IMSI_MAX_DIGITS {
            return Err(IdentifierError::FieldOutOfRange {
                field: "imsi",
                reason: format!("{} digits, expected 6..=21", digits.len()),
            });
        }
        if digits.iter().any(|&d| d > 9) {
            return Err(IdentifierError::FieldOutOfRange {
                field: "imsi",
                reason: "digit above 9".to_string(),
            });
        }
        Ok(Self { digits })
    }

    /// Composes MCC + MNC + MSIN, enforcing the 15-digit real-world maximum.
    pub fn compose(mcc: &Mcc, mnc: &Mnc, msin: &[u8]) -> Result<Self, IdentifierError> {
        let mut digits = Vec::with_capacity(mcc.digits().len() + mnc.digits().len() + msin.len());
        digits.extend_from_slice(mcc.digits());
        digits.extend_from_slice(mnc.digits());
        digits.extend_from_slice(msin);
        if digits.len() > IMSI_STANDARD_MAX_DIGITS {
            return Err(IdentifierError::FieldOutOfRange {
                field: "imsi",
                reason: format!("{} digits, composed identities allow at most 15", digits.len()),
            });
        }
        Self::from_digits(digits)
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// True when the digit count exceeds the real-world IMSI maximum of 15.
    pub fn exceeds_standard_length(&self) -> bool {
        self.digits.len() > IMSI_STANDARD_MAX_DIGITS
    }
}

impl FromStr for Imsi {
    type Err = IdentifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Imsi::from_digits(digits_of("imsi", s)?)
    }
}

impl TryFrom<String> for Imsi {
    type Error = IdentifierError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Imsi> for String {
    fn from(imsi: Imsi) -> String {
        imsi.to_string()
    }
}

impl fmt::Display for Imsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Rendering style for [`format_identity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityStyle {
    Hex,
    Bits,
    DecimalDigits,
}

/// Any identity the toolkit reports on.
#[derive(Debug, Clone, PartialEq)]
pub enum Identity {
    STmsi(STmsi),
    Imsi(Imsi),
    Guti(Guti),
}

/// Deterministic canonical text for an identity.
///
/// S-TMSI bit strings use the fixed on-air widths (8-bit MMEC, 32-bit
/// M-TMSI). IMSIs are digit strings in every style.
pub fn format_identity(id: &Identity, style: IdentityStyle) -> String {
    match (id, style) {
        (Identity::STmsi(s), IdentityStyle::Hex) => s.canonical_hex(),
        (Identity::STmsi(s), IdentityStyle::Bits) => {
            let (mmec, m_tmsi) = s.bit_strings();
            format!("{mmec} / {m_tmsi}")
        }
        (Identity::STmsi(s), IdentityStyle::DecimalDigits) => {
            format!("{}:{}", s.mmec, s.m_tmsi)
        }
        (Identity::Imsi(imsi), _) => imsi.to_string(),
        (Identity::Guti(g), IdentityStyle::Hex) => format!(
            "{}:{}:{:04X}:{:02X}:{:08X}",
            g.mcc, g.mnc, g.mmegi, g.mmec, g.m_tmsi
        ),
        (Identity::Guti(g), IdentityStyle::Bits) => format!(
            "{}:{}:{:016b}:{:08b}:{:032b}",
            g.mcc, g.mnc, g.mmegi, g.mmec, g.m_tmsi
        ),
        (Identity::Guti(g), IdentityStyle::DecimalDigits) => format!(
            "{}:{}:{}:{}:{}",
            g.mcc, g.mnc, g.mmegi, g.mmec, g.m_tmsi
        ),
    }
}
