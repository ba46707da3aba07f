//! Spatio-temporal contrast (STC) noise filter.
//!
//! An event survives when at least `min_support` *other* events fall in the
//! `(2r+1)²` Chebyshev neighbourhood of its pixel within the temporal
//! support window. Background noise is spatially isolated and rarely finds
//! support; moving edges fire neighbouring pixels in quick succession.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventRecording};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Causality {
    /// Support must lie in `(t - window, t]`. Streamable.
    #[default]
    Causal,
    /// Support may lie anywhere in `(t - window, t + window)`. Offline only.
    Bidirectional,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StcParams {
    pub radius_px: u16,
    pub window_us: u64,
    pub min_support: u32,
    pub causality: Causality,
}

impl Default for StcParams {
    fn default() -> Self {
        Self {
            radius_px: 1,
            window_us: 5_000,
            min_support: 1,
            causality: Causality::Causal,
        }
    }
}

impl StcParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius_px == 0 || self.window_us == 0 || self.min_support == 0 {
            return Err(Error::InvalidParams(format!(
                "STC radius, window and min_support must all be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Filters `rec`, returning the surviving events in their original order.
pub fn stc_filter(rec: &EventRecording, params: &StcParams) -> Result<EventRecording> {
    params.validate()?;
    let keep = match params.causality {
        Causality::Causal => causal_keep(rec, params),
        Causality::Bidirectional => bidirectional_keep(rec, params),
    };
    let events = rec
        .events()
        .iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(*e))
        .collect();
    Ok(EventRecording::from_parts_unchecked(
        rec.width(),
        rec.height(),
        events,
    ))
}

/// Chebyshev neighbourhood of `e`, clipped to the sensor.
fn neighbourhood(
    e: &Event,
    r: usize,
    w: usize,
    h: usize,
) -> (
    std::ops::RangeInclusive<usize>,
    std::ops::RangeInclusive<usize>,
) {
    let (x, y) = (e.x as usize, e.y as usize);
    (
        x.saturating_sub(r)..=(x + r).min(w - 1),
        y.saturating_sub(r)..=(y + r).min(h - 1),
    )
}

/// Streaming pass over a per-pixel grid holding the `min_support + 1` most
/// recent timestamps. Events sharing a timestamp are inserted as a group
/// before any of them is judged, so ties support each other regardless of
/// file order.
fn causal_keep(rec: &EventRecording, params: &StcParams) -> Vec<bool> {
    let (w, h) = (rec.width() as usize, rec.height() as usize);
    let r = params.radius_px as usize;
    let depth = params.min_support as usize + 1;
    let needed = params.min_support as usize + 1; // includes the event itself
    let window = params.window_us;
    let mut slots = vec![u64::MAX; w * h * depth];

    let events = rec.events();
    let mut keep = vec![false; events.len()];
    let mut start = 0;
    while start < events.len() {
        let t = events[start].t;
        let end = start + events[start..].partition_point(|e| e.t == t);
        for e in &events[start..end] {
            let base = (e.y as usize * w + e.x as usize) * depth;
            let cell = &mut slots[base..base + depth];
            cell.rotate_right(1);
            cell[0] = t;
        }
        for (i, e) in events[start..end].iter().enumerate() {
            let (xs, ys) = neighbourhood(e, r, w, h);
            let mut count = 0;
            'scan: for y in ys {
                for x in xs.clone() {
                    let base = (y * w + x) * depth;
                    for &ts in &slots[base..base + depth] {
                        // slots are newest-first
                        if ts == u64::MAX || ts.saturating_add(window) <= t {
                            break;
                        }
                        count += 1;
                        if count >= needed {
                            break 'scan;
                        }
                    }
                }
            }
            keep[start + i] = count >= needed;
        }
        start = end;
    }
    keep
}

fn bidirectional_keep(rec: &EventRecording, params: &StcParams) -> Vec<bool> {
    let (w, h) = (rec.width() as usize, rec.height() as usize);
    let r = params.radius_px as usize;
    let window = params.window_us;
    let mut per_pixel: Vec<Vec<u64>> = vec![Vec::new(); w * h];
    for e in rec.events() {
        per_pixel[e.y as usize * w + e.x as usize].push(e.t);
    }
    let needed = params.min_support as usize + 1;
    rec.events()
        .iter()
        .map(|e| {
            let lo = e.t.saturating_sub(window - 1);
            let hi = e.t.saturating_add(window - 1);
            let (xs, ys) = neighbourhood(e, r, w, h);
            let mut count = 0;
            for y in ys {
                for x in xs.clone() {
                    let ts = &per_pixel[y * w + x];
                    count += ts.partition_point(|&t| t <= hi) - ts.partition_point(|&t| t < lo);
                }
                if count >= needed {
                    return true;
                }
            }
            count >= needed
        })
        .collect()
}
