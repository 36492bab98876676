//! Bit-level unaligned-PER reader and writer.
//!
//! Covers exactly the PER features the PCCH paging grammar needs: fixed-width
//! bit fields, constrained whole numbers, optional-field preambles, extension
//! marker bits and small length determinants. Bits are packed MSB-first
//! within each byte, with no alignment between fields.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UperError {
    #[error("payload exhausted: needed {needed} more bits, only {available} remain")]
    ExhaustedPayload { needed: u32, available: usize },
    #[error("constrained value {value} outside range {lo}..={hi}")]
    OutOfRange { value: u64, lo: u64, hi: u64 },
    #[error("value {value} does not fit in {width} bits")]
    ValueTooWide { value: u64, width: u32 },
}

/// Number of bits a constrained whole number in `lo..=hi` occupies: the
/// minimum width that can represent `hi - lo`. Zero when `lo == hi`.
pub const fn constrained_width(lo: u64, hi: u64) -> u32 {
    debug_assert!(lo <= hi);
    64 - (hi - lo).leading_zeros()
}

/// Cursor over a byte payload, consuming bits left-to-right, MSB-first.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    payload: &'a [u8],
    cursor: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(payload: &'a [u8]) -> Self {
        Self { payload, cursor: 0 }
    }

    /// Current bit offset from the start of the payload.
    pub fn position(&self) -> usize {
        self.cursor
    }

    /// Bits left between the cursor and the end of the payload.
    pub fn remaining(&self) -> usize {
        self.payload.len() * 8 - self.cursor
    }

    /// Reads `n` bits (0..=64) as an unsigned integer, first bit read being
    /// the most significant. `n = 0` succeeds with 0 even at end of payload.
    pub fn read_bits(&mut self, n: u32) -> Result<u64, UperError> {
        assert!(n <= 64, "bit count must be 0..=64, got {n}");
        if n as usize > self.remaining() {
            return Err(UperError::ExhaustedPayload {
                needed: n,
                available: self.remaining(),
            });
        }
        let mut value = 0u64;
        for _ in 0..n {
            let byte = self.payload[self.cursor / 8];
            let bit = (byte >> (7 - self.cursor % 8)) & 1;
            value = (value << 1) | u64::from(bit);
            self.cursor += 1;
        }
        Ok(value)
    }

    pub fn read_bit(&mut self) -> Result<bool, UperError> {
        Ok(self.read_bits(1)? == 1)
    }

    /// Reads a PER constrained whole number in `lo..=hi`, encoded as an
    /// offset from `lo` in `constrained_width(lo, hi)` bits.
    pub fn read_constrained_int(&mut self, lo: u64, hi: u64) -> Result<u64, UperError> {
        assert!(lo <= hi, "invalid range {lo}..={hi}");
        let raw = self.read_bits(constrained_width(lo, hi))?;
        if raw > hi - lo {
            return Err(UperError::OutOfRange {
                value: lo + raw,
                lo,
                hi,
            });
        }
        Ok(lo + raw)
    }

    /// True when every bit from the cursor to the end of the payload is zero.
    pub fn rest_is_zero(&self) -> bool {
        let mut probe = self.clone();
        while probe.remaining() > 0 {
            let take = probe.remaining().min(64) as u32;
            if probe.read_bits(take).unwrap() != 0 {
                return false;
            }
        }
        true
    }
}

/// Growable bit buffer, appending MSB-first. Flushing pads the final partial
/// byte with zero bits.
#[derive(Debug, Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bits written so far.
    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Appends the lower `n` bits of `value`, MSB-first.
    pub fn write_bits(&mut self, value: u64, n: u32) -> Result<(), UperError> {
        assert!(n <= 64, "bit count must be 0..=64, got {n}");
        if n < 64 && value >= 1u64 << n {
            return Err(UperError::ValueTooWide { value, width: n });
        }
        for i in (0..n).rev() {
            if self.bit_len % 8 == 0 {
                self.buf.push(0);
            }
            if (value >> i) & 1 == 1 {
                *self.buf.last_mut().unwrap() |= 1 << (7 - self.bit_len % 8);
            }
            self.bit_len += 1;
        }
        Ok(())
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.write_bits(u64::from(bit), 1).unwrap();
    }

    /// Writes `value` as a PER constrained whole number in `lo..=hi`.
    pub fn write_constrained_int(&mut self, value: u64, lo: u64, hi: u64) -> Result<(), UperError> {
        assert!(lo <= hi, "invalid range {lo}..={hi}");
        if value < lo || value > hi {
            return Err(UperError::OutOfRange { value, lo, hi });
        }
        self.write_bits(value - lo, constrained_width(lo, hi))
    }

    /// Consumes the writer, padding the last partial byte with zero bits.
    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: [u8; 8] = [0x40, 0x03, 0x8D, 0x03, 0xF7, 0x39, 0x00, 0x00];

    #[test]
    fn reads_message_type_choice_bit() {
        let mut r = BitReader::new(&[0x40]);
        assert_eq!(r.read_bits(1).unwrap(), 0);
        assert_eq!(r.position(), 1);
    }

    #[test]
    fn reads_optional_field_preamble() {
        let mut r = BitReader::new(&[0x40]);
        r.read_bits(1).unwrap();
        assert_eq!(r.read_bits(4).unwrap(), 0b1000);
        assert_eq!(r.position(), 5);
    }

    #[test]
    fn zero_width_read_is_a_noop() {
        let mut r = BitReader::new(&[0xFF]);
        assert_eq!(r.read_bits(0).unwrap(), 0);
        assert_eq!(r.position(), 0);

        let mut empty = BitReader::new(&[]);
        assert_eq!(empty.read_bits(0).unwrap(), 0);
    }

    #[test]
    fn read_past_end_is_exhausted() {
        let mut r = BitReader::new(&[0xAB]);
        r.read_bits(6).unwrap();
        assert_eq!(
            r.read_bits(3),
            Err(UperError::ExhaustedPayload {
                needed: 3,
                available: 2
            })
        );
        // a failed read must not move the cursor
        assert_eq!(r.position(), 6);
    }

    #[test]
    fn record_list_length_of_golden_payload() {
        let mut r = BitReader::new(&GOLDEN);
        r.read_bits(5).unwrap(); // choice bit + preamble
        assert_eq!(r.read_constrained_int(1, 16).unwrap(), 1);
    }

    #[test]
    fn degenerate_range_consumes_no_bits() {
        let mut r = BitReader::new(&[]);
        assert_eq!(r.read_constrained_int(5, 5).unwrap(), 5);
        assert_eq!(r.position(), 0);
    }

    #[test]
    fn all_ones_offset_hits_upper_bound() {
        let mut r = BitReader::new(&[0xF0]);
        assert_eq!(r.read_constrained_int(1, 16).unwrap(), 16);
    }

    #[test]
    fn constrained_offset_beyond_range_is_rejected() {
        // 4-bit field for 0..=9 can carry offsets 10..=15, which are invalid
        let mut r = BitReader::new(&[0xA0]);
        assert_eq!(
            r.read_constrained_int(0, 9),
            Err(UperError::OutOfRange {
                value: 10,
                lo: 0,
                hi: 9
            })
        );
    }

    #[test]
    fn constrained_widths() {
        assert_eq!(constrained_width(1, 16), 4);
        assert_eq!(constrained_width(0, 9), 4);
        assert_eq!(constrained_width(0, 1), 1);
        assert_eq!(constrained_width(7, 7), 0);
        assert_eq!(constrained_width(0, u64::MAX), 64);
    }

    #[test]
    fn single_zero_bit_flushes_to_zero_byte() {
        let mut w = BitWriter::new();
        w.write_bits(0, 1).unwrap();
        assert_eq!(w.finish(), vec![0x00]);
    }

    #[test]
    fn writes_golden_field_sequence() {
        // The golden paging payload, field by field: c1 choice, preamble,
        // record count, record/identity extension bits, identity choice,
        // mmec, m-TMSI, cn-domain. 53 bits -> 7 bytes once flushed.
        let mut w = BitWriter::new();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0b1000, 4).unwrap();
        w.write_constrained_int(1, 1, 16).unwrap();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0x38, 8).unwrap();
        w.write_bits(0xD03F7390, 32).unwrap();
        w.write_bits(0, 1).unwrap();
        assert_eq!(w.bit_len(), 53);
        assert_eq!(w.finish(), &GOLDEN[..7]);

        // captured frames carry trailing zero padding; writing the full
        // 64-bit captured sequence reproduces the frame byte-for-byte
        let mut w = BitWriter::new();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0b1000, 4).unwrap();
        w.write_constrained_int(1, 1, 16).unwrap();
        w.write_bits(0, 3).unwrap();
        w.write_bits(0x38, 8).unwrap();
        w.write_bits(0xD03F7390, 32).unwrap();
        w.write_bits(0, 1).unwrap();
        w.write_bits(0, 11).unwrap();
        assert_eq!(w.finish(), &GOLDEN[..]);
    }

    #[test]
    fn concatenation_packs_msb_first() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3).unwrap();
        w.write_bits(0b1, 1).unwrap();
        assert_eq!(w.finish(), vec![0xB0]);
    }

    #[test]
    fn too_wide_value_is_rejected() {
        let mut w = BitWriter::new();
        assert_eq!(
            w.write_bits(4, 2),
            Err(UperError::ValueTooWide { value: 4, width: 2 })
        );
        assert_eq!(w.bit_len(), 0);
    }

    #[test]
    fn constrained_write_rejects_out_of_range() {
        let mut w = BitWriter::new();
        assert_eq!(
            w.write_constrained_int(17, 1, 16),
            Err(UperError::OutOfRange {
                value: 17,
                lo: 1,
                hi: 16
            })
        );
    }

    #[test]
    fn rest_is_zero_checks_trailing_bits() {
        let mut r = BitReader::new(&GOLDEN);
        r.read_bits(53).unwrap();
        assert!(r.rest_is_zero());

        let mut r = BitReader::new(&[0x01]);
        r.read_bits(1).unwrap();
        assert!(!r.rest_is_zero());
    }
}
