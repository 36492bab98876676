//! PCCH Paging message model and codec.
//!
//! The grammar covered is the release-8 PCCH subset: a Paging message with
//! up to 16 paging records, each holding an S-TMSI or IMSI identity and a
//! core-network domain, plus the systemInfoModification and etws-Indication
//! flags. Extension branches are rejected rather than skipped, because a
//! silently dropped record would bias every downstream statistic.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identifiers::{Imsi, STmsi};
use crate::uper::{constrained_width, BitReader, BitWriter, UperError};

pub const MAX_PAGING_RECORDS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcchError {
    #[error("payload exhausted while reading {context}")]
    ExhaustedPayload { context: &'static str },
    #[error("unsupported extension at {site}")]
    UnsupportedExtension { site: &'static str },
    #[error("malformed imsi: {reason}")]
    MalformedImsi { reason: String },
    #[error("{count} paging records, the record list holds at most 16")]
    TooManyRecords { count: usize },
    #[error("imsi length {len} outside 6..=21")]
    ImsiLengthOutOfRange { len: usize },
}

/// Maps a raw bit-level failure to a message-level error with the name of
/// the field being read.
fn field_err(context: &'static str) -> impl Fn(UperError) -> PcchError {
    move |_| PcchError::ExhaustedPayload { context }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CnDomain {
    Ps,
    Cs,
}

impl fmt::Display for CnDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CnDomain::Ps => "ps",
            CnDomain::Cs => "cs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UeIdentity {
    STmsi(STmsi),
    Imsi(Imsi),
}

impl UeIdentity {
    /// Stable text key used to track one identity across messages and cells.
    pub fn canonical(&self) -> String {
        match self {
            UeIdentity::STmsi(s) => s.canonical_hex(),
            UeIdentity::Imsi(imsi) => imsi.to_string(),
        }
    }

    pub fn is_imsi(&self) -> bool {
        matches!(self, UeIdentity::Imsi(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PagingRecord {
    pub ue_identity: UeIdentity,
    pub cn_domain: CnDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PagingMessage {
    pub records: Vec<PagingRecord>,
    pub system_info_modification: bool,
    pub etws_indication: bool,
}

impl PagingMessage {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && !self.system_info_modification && !self.etws_indication
    }
}

/// Byte-accounting facts about one decode, next to but separate from the
/// message content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    /// Bits of the payload covered by grammar fields (pad bits excluded).
    pub consumed_bits: usize,
    /// True when bits after the last grammar field are not all zero.
    pub trailing_pad_nonzero: bool,
    /// Reserved for a future lenient mode; the strict grammar rejects all
    /// extension branches, so this is always false today.
    pub extension_skipped: bool,
}

fn decode_imsi(reader: &mut BitReader) -> Result<Imsi, PcchError> {
    let len = reader
        .read_constrained_int(6, 21)
        .map_err(field_err("imsi length"))? as usize;
    let mut digits = Vec::with_capacity(len);
    for _ in 0..len {
        let digit = match reader.read_constrained_int(0, 9) {
            Ok(d) => d as u8,
            Err(UperError::OutOfRange { value, .. }) => {
                return Err(PcchError::MalformedImsi {
                    reason: format!("digit value {value} above 9"),
                })
            }
            Err(_) => return Err(PcchError::ExhaustedPayload { context: "imsi digit" }),
        };
        digits.push(digit);
    }
    Imsi::from_digits(digits).map_err(|e| PcchError::MalformedImsi {
        reason: e.to_string(),
    })
}

fn decode_record(reader: &mut BitReader) -> Result<PagingRecord, PcchError> {
    if reader.read_bit().map_err(field_err("record extension bit"))? {
        return Err(PcchError::UnsupportedExtension {
            site: "pagingRecord",
        });
    }
    if reader.read_bit().map_err(field_err("ue-identity extension bit"))? {
        return Err(PcchError::UnsupportedExtension { site: "ue-Identity" });
    }
    let ue_identity = if reader.read_bit().map_err(field_err("ue-identity choice"))? {
        UeIdentity::Imsi(decode_imsi(reader)?)
    } else {
        let mmec = reader.read_bits(8).map_err(field_err("mmec"))? as u8;
        let m_tmsi = reader.read_bits(32).map_err(field_err("m-tmsi"))? as u32;
        UeIdentity::STmsi(STmsi::new(mmec, m_tmsi))
    };
    let cn_domain = if reader.read_bit().map_err(field_err("cn-domain"))? {
        CnDomain::Cs
    } else {
        CnDomain::Ps
    };
    Ok(PagingRecord {
        ue_identity,
        cn_domain,
    })
}

/// Decodes one PCCH payload into the paging message it carries.
///
/// Trailing bytes beyond the encoded message are tolerated as capture
/// padding; whether any of them carried set bits is reported in the
/// diagnostics rather than treated as an error.
pub fn decode_pcch(payload: &[u8]) -> Result<(PagingMessage, DecodeDiagnostics), PcchError> {
    let mut reader = BitReader::new(payload);
    if reader.read_bit().map_err(field_err("message choice"))? {
        return Err(PcchError::UnsupportedExtension {
            site: "messageClassExtension",
        });
    }
    // The c1 branch holds a single alternative (paging), so its choice
    // index occupies no bits.
    let records_present = reader.read_bit().map_err(field_err("optional preamble"))?;
    let sys_info = reader.read_bit().map_err(field_err("optional preamble"))?;
    let etws = reader.read_bit().map_err(field_err("optional preamble"))?;
    let non_critical_ext = reader.read_bit().map_err(field_err("optional preamble"))?;
    if non_critical_ext {
        return Err(PcchError::UnsupportedExtension {
            site: "nonCriticalExtension",
        });
    }

    let mut records = Vec::new();
    if records_present {
        let count = reader
            .read_constrained_int(1, MAX_PAGING_RECORDS as u64)
            .map_err(field_err("record list length"))?;
        for _ in 0..count {
            records.push(decode_record(&mut reader)?);
        }
    }
    // systemInfoModification and etws-Indication are single-value
    // enumerateds: present-or-absent is all they say, so no further bits.

    let diagnostics = DecodeDiagnostics {
        consumed_bits: reader.position(),
        trailing_pad_nonzero: !reader.rest_is_zero(),
        extension_skipped: false,
    };
    Ok((
        PagingMessage {
            records,
            system_info_modification: sys_info,
            etws_indication: etws,
        },
        diagnostics,
    ))
}

fn encode_record(writer: &mut BitWriter, record: &PagingRecord) -> Result<(), PcchError> {
    writer.write_bit(false); // record not extended
    writer.write_bit(false); // identity choice not extended
    match &record.ue_identity {
        UeIdentity::STmsi(s) => {
            writer.write_bit(false);
            writer.write_bits(s.mmec as u64, 8).expect("mmec fits 8 bits");
            writer
                .write_bits(s.m_tmsi as u64, 32)
                .expect("m-tmsi fits 32 bits");
        }
        UeIdentity::Imsi(imsi) => {
            writer.write_bit(true);
            let len = imsi.digits().len();
            writer
                .write_constrained_int(len as u64, 6, 21)
                .map_err(|_| PcchError::ImsiLengthOutOfRange { len })?;
            for &digit in imsi.digits() {
                writer
                    .write_constrained_int(digit as u64, 0, 9)
                    .expect("digit below 10");
            }
        }
    }
    writer.write_bit(record.cn_domain == CnDomain::Cs);
    Ok(())
}

/// Encodes a paging message to its minimal zero-padded payload.
pub fn encode_pcch(message: &PagingMessage) -> Result<Vec<u8>, PcchError> {
    if message.records.len() > MAX_PAGING_RECORDS {
        return Err(PcchError::TooManyRecords {
            count: message.records.len(),
        });
    }
    let mut writer = BitWriter::new();
    writer.write_bit(false); // c1 branch, not messageClassExtension
    writer.write_bit(!message.records.is_empty());
    writer.write_bit(message.system_info_modification);
    writer.write_bit(message.etws_indication);
    writer.write_bit(false); // nonCriticalExtension never emitted
    if !message.records.is_empty() {
        writer
            .write_constrained_int(message.records.len() as u64, 1, MAX_PAGING_RECORDS as u64)
            .expect("count within bounds");
        for record in &message.records {
            encode_record(&mut writer, record)?;
        }
    }
    Ok(writer.finish())
}

fn xml_line(out: &mut String, depth: usize, text: &str) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(text);
    out.push('\n');
}

/// Renders a message in the XML shape produced by common ASN.1 decoders:
/// nested elements named after the grammar fields, bit-string leaves for
/// the S-TMSI parts, empty elements for enumerated values.
pub fn render_xml(message: &PagingMessage) -> String {
    let mut out = String::new();
    xml_line(&mut out, 0, "<PCCH-Message>");
    xml_line(&mut out, 1, "<message>");
    xml_line(&mut out, 2, "<c1>");
    xml_line(&mut out, 3, "<paging>");
    if !message.records.is_empty() {
        xml_line(&mut out, 4, "<pagingRecordList>");
        for record in &message.records {
            xml_line(&mut out, 5, "<PagingRecord>");
            xml_line(&mut out, 6, "<ue-Identity>");
            match &record.ue_identity {
                UeIdentity::STmsi(s) => {
                    let (mmec, m_tmsi) = s.bit_strings();
                    xml_line(&mut out, 7, "<s-TMSI>");
                    xml_line(&mut out, 8, &format!("<mmec>{mmec}</mmec>"));
                    xml_line(&mut out, 8, &format!("<m-TMSI>{m_tmsi}</m-TMSI>"));
                    xml_line(&mut out, 7, "</s-TMSI>");
                }
                UeIdentity::Imsi(imsi) => {
                    xml_line(&mut out, 7, &format!("<imsi>{imsi}</imsi>"));
                }
            }
            xml_line(&mut out, 6, "</ue-Identity>");
            xml_line(&mut out, 6, "<cn-Domain>");
            xml_line(
                &mut out,
                7,
                match record.cn_domain {
                    CnDomain::Ps => "<ps/>",
                    CnDomain::Cs => "<cs/>",
                },
            );
            xml_line(&mut out, 6, "</cn-Domain>");
            xml_line(&mut out, 5, "</PagingRecord>");
        }
        xml_line(&mut out, 4, "</pagingRecordList>");
    }
    if message.system_info_modification {
        xml_line(&mut out, 4, "<systemInfoModification>");
        xml_line(&mut out, 5, "<true/>");
        xml_line(&mut out, 4, "</systemInfoModification>");
    }
    if message.etws_indication {
        xml_line(&mut out, 4, "<etws-Indication>");
        xml_line(&mut out, 5, "<true/>");
        xml_line(&mut out, 4, "</etws-Indication>");
    }
    xml_line(&mut out, 3, "</paging>");
    xml_line(&mut out, 2, "</c1>");
    xml_line(&mut out, 1, "</message>");
    xml_line(&mut out, 0, "</PCCH-Message>");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad hex at byte {offset}: {reason}")]
pub struct BadHex {
    pub offset: usize,
    pub reason: String,
}

/// Parses whitespace-tolerant, case-insensitive hex text such as
/// `40038D03 F7390000`.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, BadHex> {
    let mut nibbles = Vec::new();
    for (offset, c) in text.char_indices() {
        if c.is_whitespace() {
            continue;
        }
        let nibble = c.to_digit(16).ok_or_else(|| BadHex {
            offset,
            reason: format!("{c:?} is not a hex digit"),
        })? as u8;
        nibbles.push(nibble);
    }
    if nibbles.len() % 2 != 0 {
        return Err(BadHex {
            offset: text.len(),
            reason: format!("odd number of hex digits ({})", nibbles.len()),
        });
    }
    Ok(nibbles
        .chunks_exact(2)
        .map(|pair| (pair[0] << 4) | pair[1])
        .collect())
}

/// Uppercase hex without separators, the inverse of [`parse_hex`] for
/// canonical text.
pub fn format_hex(payload: &[u8]) -> String {
    let mut out = String::with_capacity(payload.len() * 2);
    for byte in payload {
        out.push_str(&format!("{byte:02X}"));
    }
    out
}

// The record-list length determinant must stay a 4-bit field or every
// offset after it shifts.
const _: () = assert!(constrained_width(1, MAX_PAGING_RECORDS as u64) == 4);

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN_HEX: &str = "40038D03F7390000";

    fn golden_message() -> PagingMessage {
        PagingMessage {
            records: vec![PagingRecord {
                ue_identity: UeIdentity::STmsi(STmsi::new(0x38, 0xD03F7390)),
                cn_domain: CnDomain::Ps,
            }],
            system_info_modification: false,
            etws_indication: false,
        }
    }

    #[test]
    fn decodes_captured_single_record_message() {
        let payload = parse_hex(GOLDEN_HEX).unwrap();
        let (message, diag) = decode_pcch(&payload).unwrap();
        assert_eq!(message, golden_message());
        assert_eq!(diag.consumed_bits, 53);
        assert!(!diag.trailing_pad_nonzero);
        assert!(!diag.extension_skipped);
    }

    #[test]
    fn decodes_system_info_only_message() {
        let (message, diag) = decode_pcch(&[0x20]).unwrap();
        assert!(message.records.is_empty());
        assert!(message.system_info_modification);
        assert!(!message.etws_indication);
        assert_eq!(diag.consumed_bits, 5);
    }

    #[test]
    fn decodes_empty_message() {
        let (message, _) = decode_pcch(&[0x00]).unwrap();
        assert!(message.is_empty());
    }

    #[test]
    fn empty_payload_is_exhausted() {
        let err = decode_pcch(&[]).unwrap_err();
        assert!(matches!(err, PcchError::ExhaustedPayload { .. }));
    }

    #[test]
    fn truncated_record_is_exhausted() {
        // Record list promised but cut off mid m-TMSI.
        let payload = parse_hex("40038D").unwrap();
        let err = decode_pcch(&payload).unwrap_err();
        assert_eq!(err, PcchError::ExhaustedPayload { context: "m-tmsi" });
    }

    #[test]
    fn message_class_extension_is_rejected() {
        let err = decode_pcch(&[0x80]).unwrap_err();
        assert_eq!(
            err,
            PcchError::UnsupportedExtension {
                site: "messageClassExtension"
            }
        );
    }

    #[test]
    fn non_critical_extension_is_rejected() {
        let err = decode_pcch(&[0x08]).unwrap_err();
        assert_eq!(
            err,
            PcchError::UnsupportedExtension {
                site: "nonCriticalExtension"
            }
        );
    }

    #[test]
    fn record_extension_bit_is_rejected() {
        // One record whose extension bit is set: 0 1000 0000 1...
        let err = decode_pcch(&[0x40, 0x40]).unwrap_err();
        assert_eq!(err, PcchError::UnsupportedExtension { site: "pagingRecord" });
    }

    #[test]
    fn encodes_golden_message_minimally() {
        let payload = encode_pcch(&golden_message()).unwrap();
        // 53 bits of grammar round up to 7 bytes; the captured frame in the
        // hex above carries one extra byte of radio padding.
        assert_eq!(format_hex(&payload), "40038D03F73900");
    }

    #[test]
    fn encodes_empty_message_to_single_zero_byte() {
        let payload = encode_pcch(&PagingMessage::default()).unwrap();
        assert_eq!(payload, vec![0x00]);
    }

    #[test]
    fn captured_frame_padding_is_tolerated_and_reported() {
        // The same message as the minimal encoding, with capture padding.
        let mut padded = encode_pcch(&golden_message()).unwrap();
        padded.push(0x00);
        let (message, diag) = decode_pcch(&padded).unwrap();
        assert_eq!(message, golden_message());
        assert!(!diag.trailing_pad_nonzero);

        padded.push(0xFF);
        let (_, diag) = decode_pcch(&padded).unwrap();
        assert!(diag.trailing_pad_nonzero);
    }

    #[test]
    fn rejects_seventeen_records() {
        let record = PagingRecord {
            ue_identity: UeIdentity::STmsi(STmsi::new(1, 2)),
            cn_domain: CnDomain::Ps,
        };
        let message = PagingMessage {
            records: vec![record; 17],
            system_info_modification: false,
            etws_indication: false,
        };
        assert_eq!(
            encode_pcch(&message).unwrap_err(),
            PcchError::TooManyRecords { count: 17 }
        );
    }

    #[test]
    fn imsi_record_round_trips() {
        let message = PagingMessage {
            records: vec![PagingRecord {
                ue_identity: UeIdentity::Imsi("242011234567890".parse().unwrap()),
                cn_domain: CnDomain::Cs,
            }],
            system_info_modification: false,
            etws_indication: false,
        };
        let payload = encode_pcch(&message).unwrap();
        let (decoded, _) = decode_pcch(&payload).unwrap();
        assert_eq!(decoded, message);
    }

    #[test]
    fn imsi_digit_above_nine_is_malformed() {
        // Hand-built record: preamble with list, count 1, ext bits 0,
        // choice imsi, length 6, first digit 0b1111.
        let mut writer = BitWriter::new();
        writer.write_bits(0b0_1000_0000, 9).unwrap();
        writer.write_bits(0b0_0_1, 3).unwrap();
        writer.write_constrained_int(6, 6, 21).unwrap();
        writer.write_bits(0b1111, 4).unwrap();
        let payload = writer.finish();
        let err = decode_pcch(&payload).unwrap_err();
        assert!(matches!(err, PcchError::MalformedImsi { .. }));
    }

    #[test]
    fn renders_captured_message_as_xml() {
        let xml = render_xml(&golden_message());
        assert!(xml.contains("<mmec>00111000</mmec>"));
        assert!(xml.contains("<m-TMSI>11010000001111110111001110010000</m-TMSI>"));
        assert!(xml.contains("<ps/>"));
        assert!(xml.starts_with("<PCCH-Message>\n"));
        assert!(xml.trim_end().ends_with("</PCCH-Message>"));
        let order = [
            "<PCCH-Message>",
            "<message>",
            "<c1>",
            "<paging>",
            "<pagingRecordList>",
            "<PagingRecord>",
            "<ue-Identity>",
            "<s-TMSI>",
            "<mmec>",
            "<m-TMSI>",
            "</s-TMSI>",
            "<cn-Domain>",
        ];
        let mut cursor = 0;
        for landmark in order {
            let at = xml[cursor..]
                .find(landmark)
                .unwrap_or_else(|| panic!("{landmark} missing or out of order"));
            cursor += at + landmark.len();
        }
    }

    #[test]
    fn xml_reflects_flags_without_records() {
        let message = PagingMessage {
            records: vec![],
            system_info_modification: true,
            etws_indication: false,
        };
        let xml = render_xml(&message);
        assert!(xml.contains("<systemInfoModification>"));
        assert!(!xml.contains("<pagingRecordList>"));
    }

    #[test]
    fn hex_parsing_accepts_figure_spacing() {
        assert_eq!(
            parse_hex("40038D03 F7390000").unwrap(),
            parse_hex("40038d03f7390000").unwrap()
        );
        assert!(parse_hex("4x").is_err());
        assert!(parse_hex("403").is_err());
        assert_eq!(format_hex(&[0x40, 0x03, 0x8D]), "40038D");
    }
}
