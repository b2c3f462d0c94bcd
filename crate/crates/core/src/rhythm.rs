//! Singable one-bar rhythm patterns.
//!
//! A bar is split into eight eighth-note slots. Some slots become rests,
//! which cuts the bar into chunks; inside each chunk, consecutive slots are
//! tied unless a boundary separates them. Every pattern must keep:
//!
//! 1. at most two beats of rest per bar,
//! 2. no single rest longer than one beat,
//! 3. no note longer than four beats,
//! 4. at least three notes per bar.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::{Note, TICKS_PER_BAR, TICKS_PER_BEAT};

const SLOTS: u32 = 8;
const SLOT_TICKS: u32 = TICKS_PER_BAR / SLOTS;
const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RhythmEvent {
    pub onset: u32,
    pub duration: u32,
}

impl RhythmEvent {
    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhythmPattern {
    pub events: Vec<RhythmEvent>,
    pub bars: u32,
}

impl RhythmPattern {
    pub fn from_notes(notes: &[Note], bars: u32) -> Self {
        RhythmPattern {
            events: notes
                .iter()
                .map(|n| RhythmEvent {
                    onset: n.onset,
                    duration: n.duration,
                })
                .collect(),
            bars,
        }
    }

    /// Appends `other` after this pattern's last bar.
    pub fn concat(mut self, other: &RhythmPattern) -> Self {
        let offset = self.bars * TICKS_PER_BAR;
        self.events.extend(other.events.iter().map(|e| RhythmEvent {
            onset: e.onset + offset,
            duration: e.duration,
        }));
        self.bars += other.bars;
        self
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RhythmViolation {
    Overlap { index: usize },
    TotalRest { bar: u32, ticks: u32 },
    LongRest { bar: u32, ticks: u32 },
    LongNote { bar: u32, ticks: u32 },
    TooFewNotes { bar: u32, count: usize },
}

impl fmt::Display for RhythmViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhythmViolation::Overlap { index } => {
                write!(f, "event {index} overlaps its predecessor")
            }
            RhythmViolation::TotalRest { .. } => f.write_str("rests > 2 beats"),
            RhythmViolation::LongRest { .. } => f.write_str("rest > 1 beat"),
            RhythmViolation::LongNote { .. } => f.write_str("note > 4 beats"),
            RhythmViolation::TooFewNotes { .. } => f.write_str("<3 notes"),
        }
    }
}

pub fn validate_rhythm(pattern: &RhythmPattern) -> Vec<RhythmViolation> {
    let mut out = Vec::new();
    for (i, pair) in pattern.events.windows(2).enumerate() {
        if pair[0].end() > pair[1].onset {
            out.push(RhythmViolation::Overlap { index: i + 1 });
        }
    }
    for bar in 0..pattern.bars {
        let start = bar * TICKS_PER_BAR;
        let end = start + TICKS_PER_BAR;
        let onsets: Vec<&RhythmEvent> = pattern
            .events
            .iter()
            .filter(|e| e.onset >= start && e.onset < end)
            .collect();

        let mut covered = [false; TICKS_PER_BAR as usize];
        for e in pattern
            .events
            .iter()
            .filter(|e| e.onset < end && e.end() > start)
        {
            for t in e.onset.max(start)..e.end().min(end) {
                covered[(t - start) as usize] = true;
            }
        }
        let mut rests = Vec::new();
        let mut run = 0;
        for &c in covered.iter().chain(std::iter::once(&true)) {
            if c {
                if run > 0 {
                    rests.push(run);
                }
                run = 0;
            } else {
                run += 1;
            }
        }
        let total: u32 = rests.iter().sum();
        if total > 2 * TICKS_PER_BEAT {
            out.push(RhythmViolation::TotalRest { bar, ticks: total });
        }
        if let Some(&longest) = rests.iter().max().filter(|&&r| r > TICKS_PER_BEAT) {
            out.push(RhythmViolation::LongRest {
                bar,
                ticks: longest,
            });
        }
        if let Some(long) = onsets.iter().find(|e| e.duration > 4 * TICKS_PER_BEAT) {
            out.push(RhythmViolation::LongNote {
                bar,
                ticks: long.duration,
            });
        }
        if onsets.len() < 3 {
            out.push(RhythmViolation::TooFewNotes {
                bar,
                count: onsets.len(),
            });
        }
    }
    out
}

/// Builds one bar from a rest mask (bit `i` = slot `i` is a rest) and a
/// boundary mask (bit `g` = slots `g` and `g + 1` are separate notes).
pub fn measure_from_masks(rest_mask: u8, boundary_mask: u8) -> RhythmPattern {
    let mut events: Vec<RhythmEvent> = Vec::new();
    let mut open: Option<(u32, u32)> = None;
    for slot in 0..SLOTS {
        if rest_mask & (1 << slot) != 0 {
            if let Some((s, len)) = open.take() {
                events.push(slot_event(s, len));
            }
            continue;
        }
        open = match open {
            Some((s, len)) if boundary_mask & (1 << (slot - 1)) == 0 => Some((s, len + 1)),
            Some((s, len)) => {
                events.push(slot_event(s, len));
                Some((slot, 1))
            }
            None => Some((slot, 1)),
        };
    }
    if let Some((s, len)) = open {
        events.push(slot_event(s, len));
    }
    RhythmPattern { events, bars: 1 }
}

fn slot_event(start: u32, len: u32) -> RhythmEvent {
    RhythmEvent {
        onset: start * SLOT_TICKS,
        duration: len * SLOT_TICKS,
    }
}

/// Samples one valid bar. Rest count is uniform over {0, 1, 2}; slot 0 is
/// never a rest so every bar opens on a note.
pub fn generate_measure_rhythm<R: Rng + ?Sized>(rng: &mut R) -> RhythmPattern {
    for _ in 0..MAX_ATTEMPTS {
        let rests = rng.gen_range(0..=2usize);
        let slots: Vec<u8> = (1..SLOTS as u8).collect();
        let rest_mask = slots
            .choose_multiple(rng, rests)
            .fold(0u8, |m, &s| m | (1 << s));
        let boundary_mask =
            (0..SLOTS - 1).fold(0u8, |m, g| if rng.gen_bool(0.5) { m | (1 << g) } else { m });
        let pattern = measure_from_masks(rest_mask, boundary_mask);
        if validate_rhythm(&pattern).is_empty() {
            return pattern;
        }
    }
    log::error!("rhythm sampler exhausted {MAX_ATTEMPTS} attempts; using straight eighths");
    measure_from_masks(0, 0x7f)
}

/// Concatenates `bars` independently sampled bars.
pub fn generate_rhythm<R: Rng + ?Sized>(bars: u32, rng: &mut R) -> RhythmPattern {
    (0..bars).fold(
        RhythmPattern {
            events: vec![],
            bars: 0,
        },
        |acc, _| acc.concat(&generate_measure_rhythm(rng)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Increase,
    Decrease,
    #[default]
    Unchanged,
}

/// Splits (increase) or merges (decrease) one random note. A move is legal
/// when it does not add constraint violations; without a legal move the
/// pattern comes back unchanged.
pub fn adjust_density<R: Rng + ?Sized>(
    pattern: &RhythmPattern,
    direction: Density,
    rng: &mut R,
) -> RhythmPattern {
    let baseline = validate_rhythm(pattern).len();
    let legal = |p: &RhythmPattern| validate_rhythm(p).len() <= baseline;
    let mut candidates: Vec<usize> = match direction {
        Density::Unchanged => return pattern.clone(),
        Density::Increase => (0..pattern.events.len())
            .filter(|&i| pattern.events[i].duration >= 2)
            .collect(),
        Density::Decrease => (0..pattern.events.len().saturating_sub(1))
            .filter(|&i| {
                let (a, b) = (pattern.events[i], pattern.events[i + 1]);
                a.onset / TICKS_PER_BAR == b.onset / TICKS_PER_BAR
            })
            .collect(),
    };
    candidates.shuffle(rng);
    for i in candidates {
        let mut events = pattern.events.clone();
        let e = events[i];
        match direction {
            Density::Increase => {
                let first = e.duration.div_ceil(2);
                events[i].duration = first;
                events.insert(
                    i + 1,
                    RhythmEvent {
                        onset: e.onset + first,
                        duration: e.duration - first,
                    },
                );
            }
            _ => {
                let next = events.remove(i + 1);
                events[i].duration = next.end() - e.onset;
            }
        }
        let out = RhythmPattern {
            events,
            bars: pattern.bars,
        };
        if legal(&out) {
            return out;
        }
    }
    pattern.clone()
}
