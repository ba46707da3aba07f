//! CSV event files: header `t_us,x,y,polarity`, one event per line,
//! polarity 1 or 0. Geometry is supplied by the caller.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Event, EventRecording, Polarity};
use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["t_us", "x", "y", "polarity"];

#[derive(Serialize, Deserialize)]
struct Row {
    t_us: u64,
    x: u32,
    y: u32,
    polarity: u8,
}

pub fn read<R: Read>(input: R, width: u16, height: u16) -> Result<EventRecording> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::MalformedHeader(format!(
            "expected csv header {:?}, found {:?}",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut events = Vec::new();
    let mut prev_t = None;
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let index = i as u64;
        let row = row.map_err(|e| Error::MalformedRecord {
            index,
            reason: e.to_string(),
        })?;
        if row.x >= u32::from(width) || row.y >= u32::from(height) {
            return Err(Error::OutOfBounds {
                index,
                x: row.x,
                y: row.y,
                width,
                height,
            });
        }
        let polarity = Polarity::from_bit(row.polarity).ok_or_else(|| Error::MalformedRecord {
            index,
            reason: format!("polarity {}", row.polarity),
        })?;
        if let Some(prev) = prev_t {
            if row.t_us < prev {
                return Err(Error::NonMonotonicTime {
                    index,
                    t: row.t_us,
                    prev,
                });
            }
        }
        prev_t = Some(row.t_us);
        events.push(Event::new(row.t_us, row.x as u16, row.y as u16, polarity));
    }
    Ok(EventRecording::from_parts_unchecked(width, height, events))
}

pub fn write<W: Write>(rec: &EventRecording, out: W) -> Result<()> {
    super::validate(rec.width, rec.height, &rec.events)
        .map_err(|e| Error::RejectedInvariant(e.to_string()))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(HEADER)?;
    for e in rec.events() {
        writer.serialize(Row {
            t_us: e.t,
            x: e.x.into(),
            y: e.y.into(),
            polarity: e.polarity.as_bit(),
        })?;
    }
    writer.flush()?;
    Ok(())
}
