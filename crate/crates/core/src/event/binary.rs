//! Little-endian binary event container.
//!
//! ```text
//! header  magic "SKYS" | version u16 = 1 | width u16 | height u16 | event_count u64
//! record  t u64 | x u16 | y u16 | polarity u8 (1 = +, 0 = -) | pad u8 = 0
//! ```
//!
//! The header is 18 bytes, each record 14 bytes.

use std::io::{self, Read, Write};

use super::{Event, EventRecording, Polarity};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SKYS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;
pub const RECORD_LEN: usize = 14;

pub fn write<W: Write>(rec: &EventRecording, out: &mut W) -> Result<()> {
    // Recordings are validated on construction; re-check so a hand-built
    // value can never produce an unreadable file.
    super::validate(rec.width, rec.height, &rec.events)
        .map_err(|e| Error::RejectedInvariant(e.to_string()))?;

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&rec.width.to_le_bytes());
    header[8..10].copy_from_slice(&rec.height.to_le_bytes());
    header[10..18].copy_from_slice(&(rec.events.len() as u64).to_le_bytes());
    out.write_all(&header)?;

    let mut buf = [0u8; RECORD_LEN];
    for e in &rec.events {
        buf[0..8].copy_from_slice(&e.t.to_le_bytes());
        buf[8..10].copy_from_slice(&e.x.to_le_bytes());
        buf[10..12].copy_from_slice(&e.y.to_le_bytes());
        buf[12] = e.polarity.as_bit();
        buf[13] = 0;
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn encode(rec: &EventRecording) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * rec.len());
    write(rec, &mut out)?;
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<EventRecording> {
    read(bytes)
}

/// Reads one recording. Never consumes more than the declared record count;
/// any trailing bytes are left unread.
pub fn read<R: Read>(mut input: R) -> Result<EventRecording> {
    let mut header = [0u8; HEADER_LEN];
    read_full(&mut input, &mut header).and_then(|n| {
        if n < HEADER_LEN {
            Err(Error::MalformedHeader(format!(
                "expected {HEADER_LEN} header bytes, found {n}"
            )))
        } else {
            Ok(())
        }
    })?;
    if &header[0..4] != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let width = u16::from_le_bytes([header[6], header[7]]);
    let height = u16::from_le_bytes([header[8], header[9]]);
    let count = u64::from_le_bytes(header[10..18].try_into().unwrap());

    // Do not trust `count` for the allocation; a corrupt header would
    // otherwise request an enormous buffer before the truncation is noticed.
    let mut events = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut buf = [0u8; RECORD_LEN];
    let mut prev_t = None;
    for index in 0..count {
        let n = read_full(&mut input, &mut buf)?;
        if n < RECORD_LEN {
            return Err(Error::TruncatedRecord {
                expected: count,
                found: index,
            });
        }
        let t = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([buf[8], buf[9]]);
        let y = u16::from_le_bytes([buf[10], buf[11]]);
        let polarity = Polarity::from_bit(buf[12]).ok_or_else(|| Error::MalformedRecord {
            index,
            reason: format!("polarity byte {}", buf[12]),
        })?;
        if buf[13] != 0 {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("pad byte {}", buf[13]),
            });
        }
        if x >= width || y >= height {
            return Err(Error::OutOfBounds {
                index,
                x: x.into(),
                y: y.into(),
                width,
                height,
            });
        }
        if let Some(prev) = prev_t {
            if t < prev {
                return Err(Error::NonMonotonicTime { index, t, prev });
            }
        }
        prev_t = Some(t);
        events.push(Event { t, x, y, polarity });
    }
    Ok(EventRecording::from_parts_unchecked(width, height, events))
}

/// Fills `buf` as far as the input allows and returns the byte count.
fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_recording_is_header_only() {
        let rec = EventRecording::empty(8, 8);
        let bytes = encode(&rec).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[0..4], b"SKYS");
        let back = decode(&bytes).unwrap();
        assert_eq!(back.width(), 8);
        assert_eq!(back.height(), 8);
        assert!(back.is_empty());
    }

    #[test]
    fn decodes_hand_built_records() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SKYS");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for (t, x, y, p) in [(10u64, 1u16, 2u16, 1u8), (20, 3, 4, 0)] {
            bytes.extend_from_slice(&t.to_le_bytes());
            bytes.extend_from_slice(&x.to_le_bytes());
            bytes.extend_from_slice(&y.to_le_bytes());
            bytes.push(p);
            bytes.push(0);
        }
        assert_eq!(bytes.len(), HEADER_LEN + 2 * RECORD_LEN);
        let rec = decode(&bytes).unwrap();
        assert_eq!(
            rec.events(),
            &[
                Event::new(10, 1, 2, Polarity::Positive),
                Event::new(20, 3, 4, Polarity::Negative)
            ]
        );
        // re-encoding reproduces the same bytes
        assert_eq!(encode(&rec).unwrap(), bytes);
    }

    fn one_record(x: u16, y: u16, polarity: u8, pad: u8) -> Vec<u8> {
        let mut rec = EventRecording::empty(8, 8);
        rec.events.push(Event::new(0, 0, 0, Polarity::Positive));
        let mut bytes = encode(&rec).unwrap();
        bytes[HEADER_LEN + 8..HEADER_LEN + 10].copy_from_slice(&x.to_le_bytes());
        bytes[HEADER_LEN + 10..HEADER_LEN + 12].copy_from_slice(&y.to_le_bytes());
        bytes[HEADER_LEN + 12] = polarity;
        bytes[HEADER_LEN + 13] = pad;
        bytes
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            decode(&one_record(8, 0, 1, 0)),
            Err(Error::OutOfBounds { x: 8, .. })
        ));
        assert!(matches!(
            decode(&one_record(0, 0, 7, 0)),
            Err(Error::MalformedRecord { .. })
        ));
        assert!(matches!(
            decode(&one_record(0, 0, 1, 1)),
            Err(Error::MalformedRecord { .. })
        ));

        let mut bad_magic = one_record(0, 0, 1, 0);
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::MalformedHeader(_))));

        let mut bad_version = one_record(0, 0, 1, 0);
        bad_version[4] = 2;
        assert!(matches!(
            decode(&bad_version),
            Err(Error::MalformedHeader(_))
        ));

        assert!(matches!(decode(b"SKYS"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn truncation_and_time_reversal() {
        let rec = EventRecording::new(
            8,
            8,
            vec![
                Event::new(5, 0, 0, Polarity::Positive),
                Event::new(9, 1, 1, Polarity::Negative),
            ],
        )
        .unwrap();
        let bytes = encode(&rec).unwrap();
        for cut in [HEADER_LEN, HEADER_LEN + 3, bytes.len() - 1] {
            assert!(matches!(
                decode(&bytes[..cut]),
                Err(Error::TruncatedRecord { expected: 2, .. })
            ));
        }

        let mut reversed = bytes.clone();
        reversed[HEADER_LEN + RECORD_LEN..HEADER_LEN + RECORD_LEN + 8]
            .copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(
            decode(&reversed),
            Err(Error::NonMonotonicTime { index: 1, .. })
        ));

        // trailing garbage past the declared count is never read
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0xff; 5]);
        assert_eq!(decode(&extra).unwrap(), rec);
    }

    #[test]
    fn write_rejects_invalid_recording() {
        let rec = EventRecording {
            width: 4,
            height: 4,
            events: vec![
                Event::new(9, 0, 0, Polarity::Positive),
                Event::new(3, 0, 0, Polarity::Positive),
            ],
        };
        assert!(matches!(encode(&rec), Err(Error::RejectedInvariant(_))));
    }
}
