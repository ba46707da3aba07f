//! Event records, recordings and their on-disk formats.
//!
//! A recording is an immutable, time-ordered list of events from a sensor of
//! fixed geometry. Two formats are supported: a compact little-endian binary
//! layout (see [`binary`]) and a human-editable CSV (see [`csv`]).

pub mod binary;
pub mod csv;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of a brightness change.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// On-disk encoding: 1 for positive, 0 for negative.
    pub fn as_bit(self) -> u8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            1 => Some(Polarity::Positive),
            0 => Some(Polarity::Negative),
            _ => None,
        }
    }

    /// +1 or -1.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// One asynchronous brightness change. `t` is in microseconds.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

/// Serialization format of a recording on disk.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// Picks the format from a file extension, defaulting to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// A time-ordered event stream together with the sensor geometry.
///
/// Construction validates bounds and ordering, so every `EventRecording`
/// value satisfies its invariants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecording {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventRecording {
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        validate(width, height, &events)?;
        Ok(Self {
            width,
            height,
            events,
        })
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self {
            width,
            height,
            events: Vec::new(),
        }
    }

    /// Builds a recording from events already known to be valid. Only used by
    /// code paths that produce sub-sequences of a validated recording.
    pub(crate) fn from_parts_unchecked(width: u16, height: u16, events: Vec<Event>) -> Self {
        debug_assert!(validate(width, height, &events).is_ok());
        Self {
            width,
            height,
            events,
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// `t_last - t_first`, or 0 for fewer than two events.
    pub fn duration_us(&self) -> u64 {
        match (self.events.first(), self.events.last()) {
            (Some(first), Some(last)) => last.t - first.t,
            _ => 0,
        }
    }

    /// Events with `t_start <= t < t_end`, in order. Pass `u64::MAX` as
    /// `t_end` for an open-ended window.
    pub fn slice_by_time(&self, t_start: u64, t_end: u64) -> Result<EventRecording> {
        if t_start > t_end {
            return Err(Error::InvalidWindow {
                start: t_start,
                end: t_end,
            });
        }
        let lo = self.events.partition_point(|e| e.t < t_start);
        let hi = if t_end == u64::MAX {
            self.events.len()
        } else {
            self.events.partition_point(|e| e.t < t_end)
        };
        let events = self.events[lo..hi.max(lo)].to_vec();
        Ok(Self::from_parts_unchecked(self.width, self.height, events))
    }
}

fn validate(width: u16, height: u16, events: &[Event]) -> Result<()> {
    let mut prev = None;
    for (i, e) in events.iter().enumerate() {
        if e.x >= width || e.y >= height {
            return Err(Error::OutOfBounds {
                index: i as u64,
                x: e.x.into(),
                y: e.y.into(),
                width,
                height,
            });
        }
        if let Some(p) = prev {
            if e.t < p {
                return Err(Error::NonMonotonicTime {
                    index: i as u64,
                    t: e.t,
                    prev: p,
                });
            }
        }
        prev = Some(e.t);
    }
    Ok(())
}

/// Reads a recording. CSV files carry no geometry, so `csv_geometry` must be
/// given for [`Format::Csv`].
pub fn read_recording(
    path: &Path,
    format: Format,
    csv_geometry: Option<(u16, u16)>,
) -> Result<EventRecording> {
    let file = BufReader::new(File::open(path)?);
    match format {
        Format::Binary => binary::read(file),
        Format::Csv => {
            let (w, h) = csv_geometry.ok_or_else(|| {
                Error::InvalidParams("csv recordings need --width and --height".into())
            })?;
            csv::read(file, w, h)
        }
    }
}

pub fn write_recording(rec: &EventRecording, path: &Path, format: Format) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Binary => binary::write(rec, &mut out)?,
        Format::Csv => csv::write(rec, &mut out)?,
    }
    out.flush()?;
    Ok(())
}
