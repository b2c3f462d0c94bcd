//! Symbolic score model on a fixed 16th-note grid.
//!
//! A [`Melody`] is a list of [`Section`]s, each holding [`Phrase`]s. Note
//! onsets inside a phrase are relative to the phrase start; use
//! [`Melody::absolute_notes`] for a melody-wide timeline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::form::{FormSpec, SectionSpec};
use crate::harmony::ChordEvent;

pub const TICKS_PER_BEAT: u32 = 4;
pub const TICKS_PER_BAR: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("pitch range [{lo}, {hi}] is invalid (need 0 <= lo < hi <= 127)")]
    PitchRange { lo: u8, hi: u8 },
    #[error("tempo {0} outside [40, 240]")]
    Tempo(u16),
    #[error("key root {0} is not a pitch class")]
    KeyRoot(u8),
    #[error("phrase {label}: {reason}")]
    Phrase { label: String, reason: String },
    #[error("section {letter}: {reason}")]
    Section { letter: char, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    /// Semitone offsets of the seven scale degrees (natural minor for `Minor`).
    pub fn scale_offsets(self) -> [u8; 7] {
        match self {
            Mode::Major => [0, 2, 4, 5, 7, 9, 11],
            Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "major" => Ok(Mode::Major),
            "minor" => Ok(Mode::Minor),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// A key: tonic pitch class plus mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tonality {
    pub root: u8,
    pub mode: Mode,
}

impl Tonality {
    pub fn new(root: u8, mode: Mode) -> Self {
        Tonality {
            root: root % 12,
            mode,
        }
    }

    pub fn contains_pc(&self, pc: u8) -> bool {
        let rel = (pc + 12 - self.root % 12) % 12;
        self.mode.scale_offsets().contains(&rel)
    }

    pub fn contains(&self, pitch: u8) -> bool {
        self.contains_pc(pitch % 12)
    }

    /// Position of `pitch` on the diatonic ladder: `(step, chromatic_offset)`
    /// where `step` counts scale degrees from the tonic of octave 0 and the
    /// offset is the number of semitones above that scale tone.
    pub fn diatonic_position(&self, pitch: u8) -> (i32, i32) {
        let offsets = self.mode.scale_offsets();
        let rel = pitch as i32 - self.root as i32;
        let octave = rel.div_euclid(12);
        let within = rel.rem_euclid(12);
        let degree = offsets
            .iter()
            .rposition(|&o| o as i32 <= within)
            .unwrap_or(0);
        let chroma = within - offsets[degree] as i32;
        (octave * 7 + degree as i32, chroma)
    }

    /// Inverse of [`Tonality::diatonic_position`]; `None` outside MIDI range.
    pub fn pitch_at(&self, step: i32, chroma: i32) -> Option<u8> {
        let offsets = self.mode.scale_offsets();
        let octave = step.div_euclid(7);
        let degree = step.rem_euclid(7) as usize;
        let pitch = self.root as i32 + octave * 12 + offsets[degree] as i32 + chroma;
        (0..=127).contains(&pitch).then_some(pitch as u8)
    }

    /// Moves `pitch` by `steps` scale degrees.
    pub fn transpose_diatonic(&self, pitch: u8, steps: i32) -> Option<u8> {
        let (step, chroma) = self.diatonic_position(pitch);
        self.pitch_at(step + steps, chroma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Meter {
    #[default]
    #[serde(rename = "4/4")]
    FourFour,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchRange {
    pub lo: u8,
    pub hi: u8,
}

impl PitchRange {
    pub fn contains(&self, pitch: i32) -> bool {
        pitch >= self.lo as i32 && pitch <= self.hi as i32
    }

    pub fn width(&self) -> u8 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub key_root: u8,
    pub mode: Mode,
    pub tempo: u16,
    #[serde(default)]
    pub meter: Meter,
    pub pitch_range: PitchRange,
}

impl Meta {
    pub fn new(key_root: u8, mode: Mode, tempo: u16, lo: u8, hi: u8) -> Result<Self, ModelError> {
        let meta = Meta {
            key_root,
            mode,
            tempo,
            meter: Meter::FourFour,
            pitch_range: PitchRange { lo, hi },
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let PitchRange { lo, hi } = self.pitch_range;
        if lo >= hi || hi > 127 {
            return Err(ModelError::PitchRange { lo, hi });
        }
        if !(40..=240).contains(&self.tempo) {
            return Err(ModelError::Tempo(self.tempo));
        }
        if self.key_root > 11 {
            return Err(ModelError::KeyRoot(self.key_root));
        }
        Ok(())
    }

    pub fn tonality(&self) -> Tonality {
        Tonality::new(self.key_root, self.mode)
    }

    /// Same meta with the pitch window narrowed towards `shift` semitones.
    /// The window keeps at least an octave; shifts that would squeeze it
    /// further are reduced.
    pub fn shifted_window(&self, shift: i8) -> Meta {
        let PitchRange { lo, hi } = self.pitch_range;
        let room = (hi - lo).saturating_sub(12) as i32;
        let amount = (shift as i32).clamp(-room, room);
        let (lo, hi) = if amount >= 0 {
            (lo as i32 + amount, hi as i32)
        } else {
            (lo as i32, hi as i32 + amount)
        };
        Meta {
            pitch_range: PitchRange {
                lo: lo as u8,
                hi: hi as u8,
            },
            ..self.clone()
        }
    }
}

impl Default for Meta {
    fn default() -> Self {
        Meta {
            key_root: 0,
            mode: Mode::Major,
            tempo: 120,
            meter: Meter::FourFour,
            pitch_range: PitchRange { lo: 55, hi: 79 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub onset: u32,
    pub duration: u32,
    pub pitch: u8,
    /// Set on decoration (non-chord) tones.
    #[serde(default)]
    pub embellishment: bool,
}

impl Note {
    pub fn new(onset: u32, duration: u32, pitch: u8) -> Self {
        Note {
            onset,
            duration,
            pitch,
            embellishment: false,
        }
    }

    pub fn decoration(onset: u32, duration: u32, pitch: u8) -> Self {
        Note {
            embellishment: true,
            ..Note::new(onset, duration, pitch)
        }
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }

    pub fn shifted(&self, delta: u32) -> Note {
        Note {
            onset: self.onset + delta,
            ..*self
        }
    }

    /// `(onset, duration, pitch)` without the provenance flag.
    pub fn key(&self) -> (u32, u32, u8) {
        (self.onset, self.duration, self.pitch)
    }
}

/// True when the notes are sorted, non-overlapping and all durations are ≥ 1.
pub fn is_monophonic(notes: &[Note]) -> bool {
    notes.iter().all(|n| n.duration >= 1) && notes.windows(2).all(|w| w[0].end() <= w[1].onset)
}

pub fn max_adjacent_interval(notes: &[Note]) -> u8 {
    notes
        .windows(2)
        .map(|w| w[0].pitch.abs_diff(w[1].pitch))
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhraseLabel {
    pub letter: char,
    pub index: u32,
    pub primes: u32,
}

impl PhraseLabel {
    pub fn new(letter: char, index: u32, primes: u32) -> Self {
        PhraseLabel {
            letter,
            index,
            primes,
        }
    }

    /// The unprimed label this one varies.
    pub fn base(&self) -> PhraseLabel {
        PhraseLabel { primes: 0, ..*self }
    }

    pub fn is_primed(&self) -> bool {
        self.primes > 0
    }
}

impl fmt::Display for PhraseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.letter, self.index)?;
        for _ in 0..self.primes {
            f.write_str("'")?;
        }
        Ok(())
    }
}

impl Serialize for PhraseLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhraseLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        crate::form::parse_phrase_label(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    None,
    Half,
    Authentic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phrase {
    pub label: PhraseLabel,
    pub notes: Vec<Note>,
    pub chords: Vec<ChordEvent>,
    pub cadence: Cadence,
    pub length_bars: u32,
}

impl Phrase {
    pub fn length_ticks(&self) -> u32 {
        self.length_bars * TICKS_PER_BAR
    }

    pub fn pitches(&self) -> Vec<u8> {
        self.notes.iter().map(|n| n.pitch).collect()
    }

    pub fn chord_at(&self, tick: u32) -> Option<&ChordEvent> {
        self.chords.iter().find(|c| c.covers(tick))
    }

    pub fn mean_pitch(&self) -> Option<f64> {
        if self.notes.is_empty() {
            return None;
        }
        let sum: u32 = self.notes.iter().map(|n| n.pitch as u32).sum();
        Some(sum as f64 / self.notes.len() as f64)
    }

    pub fn pitch_span(&self) -> Option<u8> {
        let max = self.notes.iter().map(|n| n.pitch).max()?;
        let min = self.notes.iter().map(|n| n.pitch).min()?;
        Some(max - min)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::Phrase {
            label: self.label.to_string(),
            reason,
        };
        if !is_monophonic(&self.notes) {
            return Err(fail("notes overlap or are unsorted".into()));
        }
        let end = self.length_ticks();
        for note in &self.notes {
            if note.onset >= end {
                return Err(fail(format!(
                    "note onset {} beyond phrase end {end}",
                    note.onset
                )));
            }
            if note.pitch > 127 {
                return Err(fail(format!("pitch {} out of MIDI range", note.pitch)));
            }
            let covering = self.chords.iter().filter(|c| c.covers(note.onset)).count();
            if covering != 1 {
                return Err(fail(format!(
                    "note at tick {} is covered by {covering} chords",
                    note.onset
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub letter: char,
    /// Section-level variation marks (`A'` in `AA'A''`).
    #[serde(default)]
    pub primes: u32,
    pub phrases: Vec<Phrase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Melody {
    pub meta: Meta,
    pub sections: Vec<Section>,
}

impl Melody {
    pub fn phrases(&self) -> impl Iterator<Item = &Phrase> {
        self.sections.iter().flat_map(|s| s.phrases.iter())
    }

    pub fn phrases_mut(&mut self) -> impl Iterator<Item = &mut Phrase> {
        self.sections.iter_mut().flat_map(|s| s.phrases.iter_mut())
    }

    pub fn phrase_count(&self) -> usize {
        self.sections.iter().map(|s| s.phrases.len()).sum()
    }

    pub fn phrase(&self, index: usize) -> Option<&Phrase> {
        self.phrases().nth(index)
    }

    pub fn phrase_mut(&mut self, index: usize) -> Option<&mut Phrase> {
        self.phrases_mut().nth(index)
    }

    /// Section letter of every phrase, in melody order.
    pub fn phrase_sections(&self) -> Vec<(usize, char)> {
        self.sections
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.phrases.iter().map(move |_| (i, s.letter)))
            .collect()
    }

    /// Start tick of every phrase.
    pub fn phrase_offsets(&self) -> Vec<u32> {
        let mut offsets = Vec::with_capacity(self.phrase_count());
        let mut at = 0;
        for phrase in self.phrases() {
            offsets.push(at);
            at += phrase.length_ticks();
        }
        offsets
    }

    /// All notes on the melody-wide timeline.
    pub fn absolute_notes(&self) -> Vec<Note> {
        self.phrases()
            .zip(self.phrase_offsets())
            .flat_map(|(p, offset)| p.notes.iter().map(move |n| n.shifted(offset)))
            .collect()
    }

    pub fn form(&self) -> FormSpec {
        FormSpec {
            sections: self
                .sections
                .iter()
                .map(|s| SectionSpec {
                    letter: s.letter,
                    primes: s.primes,
                    phrases: s.phrases.iter().map(|p| p.label).collect(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.meta.validate()?;
        for section in &self.sections {
            if !section.letter.is_ascii_uppercase() {
                return Err(ModelError::Section {
                    letter: section.letter,
                    reason: "section letter must be A-Z".into(),
                });
            }
            for phrase in &section.phrases {
                if phrase.label.letter != section.letter.to_ascii_lowercase() {
                    return Err(ModelError::Section {
                        letter: section.letter,
                        reason: format!("phrase {} does not belong here", phrase.label),
                    });
                }
                phrase.validate()?;
            }
        }
        Ok(())
    }
}

pub fn total_bars(melody: &Melody) -> u32 {
    melody.phrases().map(|p| p.length_bars).sum()
}
