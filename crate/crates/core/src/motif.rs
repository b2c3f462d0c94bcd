//! Motifs: one- or two-bar seed melodies built from a chord progression and
//! a sampled rhythm, plus the ways new motifs are derived from old ones.

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmony::ChordEvent;
use crate::rhythm::{adjust_density, generate_rhythm, Density, RhythmEvent, RhythmPattern};
use crate::types::{Meta, Note, Phrase, PitchRange, Tonality, TICKS_PER_BAR};

/// Largest allowed leap between adjacent notes, in semitones.
pub const MAX_INTERVAL: u8 = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotifError {
    #[error("pitch range [{lo}, {hi}] holds fewer than two tones of chord {chord}")]
    InfeasibleRange { lo: u8, hi: u8, chord: String },
    #[error("no chord tone within {MAX_INTERVAL} semitones of {prev} for the note at tick {tick}")]
    NoCandidate { prev: u8, tick: u32 },
    #[error("chords do not cover {0} bars")]
    ChordsDoNotCover(u32),
    #[error("source phrase has {have} bars, fragment needs {need}")]
    FragmentTooShort { have: u32, need: u32 },
    #[error("pitch shift {0} exceeds an octave")]
    ShiftTooLarge(i8),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub notes: Vec<Note>,
    pub rhythm: RhythmPattern,
    pub chords: Vec<ChordEvent>,
    pub bars: u32,
}

impl Motif {
    /// Checks the interval bound, range and chord membership of undecorated
    /// notes. Returns a description of the first failure.
    pub fn check(&self, meta: &Meta) -> Result<(), String> {
        let key = meta.tonality();
        for pair in self.notes.windows(2) {
            if pair[0].pitch.abs_diff(pair[1].pitch) > MAX_INTERVAL {
                return Err(format!("leap {} -> {}", pair[0].pitch, pair[1].pitch));
            }
        }
        for note in &self.notes {
            if !meta.pitch_range.contains(note.pitch as i32) {
                return Err(format!("pitch {} out of range", note.pitch));
            }
            if note.embellishment {
                continue;
            }
            let chord = governing_chord(&self.chords, note.onset)
                .ok_or_else(|| format!("no chord at tick {}", note.onset))?;
            if !chord.is_chord_tone(note.pitch, key) {
                return Err(format!("pitch {} is not in chord {chord}", note.pitch));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub pitch_shift: i8,
    pub density: Density,
}

impl ContrastSpec {
    pub const NEUTRAL: ContrastSpec = ContrastSpec {
        pitch_shift: 0,
        density: Density::Unchanged,
    };

    pub fn new(pitch_shift: i8, density: Density) -> Result<Self, MotifError> {
        if pitch_shift.unsigned_abs() > 12 {
            return Err(MotifError::ShiftTooLarge(pitch_shift));
        }
        Ok(ContrastSpec {
            pitch_shift,
            density,
        })
    }

    pub fn is_neutral(&self) -> bool {
        *self == ContrastSpec::NEUTRAL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeriveMode {
    Copy,
    BorrowRhythm,
}

pub fn governing_chord(chords: &[ChordEvent], tick: u32) -> Option<&ChordEvent> {
    chords.iter().find(|c| c.covers(tick))
}

pub(crate) fn chords_cover(chords: &[ChordEvent], ticks: u32) -> bool {
    let mut at = 0;
    for c in chords {
        if c.onset != at {
            return false;
        }
        at = c.end();
    }
    at >= ticks
}

/// Chord-tone pitches of `chord` inside `range`, ascending.
pub(crate) fn chord_tones_in(chord: &ChordEvent, key: Tonality, range: PitchRange) -> Vec<u8> {
    (range.lo..=range.hi)
        .filter(|&p| chord.is_chord_tone(p, key))
        .collect()
}

fn ensure_range(chords: &[ChordEvent], meta: &Meta) -> Result<(), MotifError> {
    let key = meta.tonality();
    for chord in chords {
        if chord_tones_in(chord, key, meta.pitch_range).len() < 2 {
            return Err(MotifError::InfeasibleRange {
                lo: meta.pitch_range.lo,
                hi: meta.pitch_range.hi,
                chord: chord.to_string(),
            });
        }
    }
    Ok(())
}

/// Draws a chord tone near `prev`, weighting each candidate by
/// `1 / (1 + interval)`. Without a previous pitch the draw is uniform over
/// chord tones in the middle half of the range.
pub(crate) fn pick_chord_tone<R: Rng + ?Sized>(
    chord: &ChordEvent,
    key: Tonality,
    range: PitchRange,
    prev: Option<u8>,
    rng: &mut R,
) -> Option<u8> {
    let tones = chord_tones_in(chord, key, range);
    match prev {
        None => {
            let quarter = range.width() / 4;
            let (lo, hi) = (range.lo + quarter, range.hi - quarter);
            let middle: Vec<u8> = tones
                .iter()
                .copied()
                .filter(|&p| p >= lo && p <= hi)
                .collect();
            middle.choose(rng).or_else(|| tones.choose(rng)).copied()
        }
        Some(prev) => {
            let near: Vec<u8> = tones
                .into_iter()
                .filter(|p| p.abs_diff(prev) <= MAX_INTERVAL)
                .collect();
            weighted_by_interval(&near, prev, rng)
        }
    }
}

pub(crate) fn weighted_by_interval<R: Rng + ?Sized>(
    candidates: &[u8],
    prev: u8,
    rng: &mut R,
) -> Option<u8> {
    candidates
        .choose_weighted(rng, |&p| 1.0 / (1.0 + p.abs_diff(prev) as f64))
        .ok()
        .copied()
}

/// Assigns chord-tone pitches to a rhythm.
pub(crate) fn pitch_rhythm<R: Rng + ?Sized>(
    events: &[RhythmEvent],
    chords: &[ChordEvent],
    meta: &Meta,
    mut prev: Option<u8>,
    rng: &mut R,
) -> Result<Vec<Note>, MotifError> {
    let key = meta.tonality();
    let mut notes = Vec::with_capacity(events.len());
    for e in events {
        let chord = governing_chord(chords, e.onset)
            .ok_or(MotifError::ChordsDoNotCover(e.onset / TICKS_PER_BAR + 1))?;
        let pitch = pick_chord_tone(chord, key, meta.pitch_range, prev, rng).ok_or(
            MotifError::NoCandidate {
                prev: prev.unwrap_or(0),
                tick: e.onset,
            },
        )?;
        notes.push(Note::new(e.onset, e.duration, pitch));
        prev = Some(pitch);
    }
    Ok(notes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Figure {
    Passing,
    CompleteNeighbor,
    DoubleNeighbor,
}

/// Splits up to a quarter of the undecorated notes into embellishing
/// figures: passing tones across a third, complete neighbours on notes of
/// at least three ticks, double neighbours on notes of at least four.
pub fn decorate<R: Rng + ?Sized>(
    notes: &[Note],
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Vec<Note> {
    let budget = rng.gen_range(0..=notes.len() / 4);
    decorate_n(notes, chords, meta, budget, rng)
}

pub(crate) fn decorate_n<R: Rng + ?Sized>(
    notes: &[Note],
    chords: &[ChordEvent],
    meta: &Meta,
    budget: usize,
    rng: &mut R,
) -> Vec<Note> {
    if budget == 0 {
        return notes.to_vec();
    }
    let key = meta.tonality();
    let range = meta.pitch_range;
    let options: Vec<(usize, Vec<Figure>)> = notes
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.embellishment)
        .filter(|(_, n)| governing_chord(chords, n.onset).is_some_and(|c| n.end() <= c.end()))
        .map(|(i, n)| {
            let mut figures = Vec::new();
            if let Some(next) = notes.get(i + 1) {
                let gap = n.pitch.abs_diff(next.pitch);
                if n.duration >= 2 && (3..=4).contains(&gap) && n.end() == next.onset {
                    figures.push(Figure::Passing);
                }
            }
            if n.duration >= 3 {
                figures.push(Figure::CompleteNeighbor);
            }
            if n.duration >= 4 {
                figures.push(Figure::DoubleNeighbor);
            }
            (i, figures)
        })
        .filter(|(_, f)| !f.is_empty())
        .collect();

    let mut chosen: Vec<&(usize, Vec<Figure>)> = options.iter().choose_multiple(rng, budget);
    chosen.sort_by_key(|(i, _)| std::cmp::Reverse(*i));
    let mut out = notes.to_vec();
    for (i, figures) in chosen {
        let note = out[*i];
        let figure = *figures.choose(rng).expect("non-empty");
        let replacement = match figure {
            Figure::Passing => {
                let next = out[*i + 1].pitch;
                let (lo, hi) = (note.pitch.min(next), note.pitch.max(next));
                let mid = (lo as f64 + hi as f64) / 2.0;
                ((lo + 1)..hi)
                    .filter(|&p| key.contains(p))
                    .min_by(|&a, &b| (a as f64 - mid).abs().total_cmp(&(b as f64 - mid).abs()))
                    .map(|pass| {
                        let first = note.duration.div_ceil(2);
                        vec![
                            Note {
                                duration: first,
                                ..note
                            },
                            Note::decoration(note.onset + first, note.duration - first, pass),
                        ]
                    })
            }
            Figure::CompleteNeighbor => {
                let step = if rng.gen_bool(0.5) { 1 } else { -1 };
                key.transpose_diatonic(note.pitch, step)
                    .filter(|&p| range.contains(p as i32))
                    .map(|nb| {
                        let q = (note.duration / 4).max(1);
                        let head = note.duration - 2 * q;
                        vec![
                            Note {
                                duration: head,
                                ..note
                            },
                            Note::decoration(note.onset + head, q, nb),
                            Note::new(note.onset + head + q, q, note.pitch),
                        ]
                    })
            }
            Figure::DoubleNeighbor => {
                let upper = key
                    .transpose_diatonic(note.pitch, 1)
                    .filter(|&p| range.contains(p as i32));
                let lower = key
                    .transpose_diatonic(note.pitch, -1)
                    .filter(|&p| range.contains(p as i32));
                upper.zip(lower).map(|(up, down)| {
                    let q = (note.duration / 8).max(1);
                    let head = note.duration - 3 * q;
                    vec![
                        Note {
                            duration: head,
                            ..note
                        },
                        Note::decoration(note.onset + head, q, up),
                        Note::decoration(note.onset + head + q, q, down),
                        Note::new(note.onset + head + 2 * q, q, note.pitch),
                    ]
                })
            }
        };
        if let Some(figure_notes) = replacement {
            out.splice(*i..=*i, figure_notes);
        }
    }
    out
}

pub fn generate_motif<R: Rng + ?Sized>(
    meta: &Meta,
    chords: &[ChordEvent],
    bars: u32,
    rng: &mut R,
) -> Result<Motif, MotifError> {
    let rhythm = generate_rhythm(bars, rng);
    motif_from_rhythm(meta, chords, rhythm, rng)
}

/// Pitches a given rhythm from chord tones, then decorates it.
pub fn motif_from_rhythm<R: Rng + ?Sized>(
    meta: &Meta,
    chords: &[ChordEvent],
    rhythm: RhythmPattern,
    rng: &mut R,
) -> Result<Motif, MotifError> {
    let bars = rhythm.bars;
    if !chords_cover(chords, bars * TICKS_PER_BAR) {
        return Err(MotifError::ChordsDoNotCover(bars));
    }
    ensure_range(chords, meta)?;
    let plain = pitch_rhythm(&rhythm.events, chords, meta, None, rng)?;
    let notes = decorate(&plain, chords, meta, rng);
    Ok(Motif {
        notes,
        rhythm,
        chords: chords.to_vec(),
        bars,
    })
}

pub fn derive_motif<R: Rng + ?Sized>(
    source: &Motif,
    mode: DeriveMode,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Motif, MotifError> {
    if !chords_cover(chords, source.bars * TICKS_PER_BAR) {
        return Err(MotifError::ChordsDoNotCover(source.bars));
    }
    ensure_range(chords, meta)?;
    let key = meta.tonality();
    match mode {
        DeriveMode::Copy => {
            let fits = source.notes.iter().all(|n| {
                n.embellishment
                    || governing_chord(chords, n.onset)
                        .is_some_and(|c| c.is_chord_tone(n.pitch, key))
            });
            let notes = if fits {
                source.notes.clone()
            } else {
                match refit(&source.notes, chords, meta) {
                    Some(notes) => notes,
                    None => pitch_rhythm(
                        &RhythmPattern::from_notes(&source.notes, source.bars).events,
                        chords,
                        meta,
                        None,
                        rng,
                    )?,
                }
            };
            Ok(Motif {
                notes,
                rhythm: source.rhythm.clone(),
                chords: chords.to_vec(),
                bars: source.bars,
            })
        }
        DeriveMode::BorrowRhythm => {
            let rhythm = if rng.gen_bool(0.5) {
                let dir = *[Density::Increase, Density::Decrease]
                    .choose(rng)
                    .expect("two options");
                adjust_density(&source.rhythm, dir, rng)
            } else {
                source.rhythm.clone()
            };
            let notes = pitch_rhythm(&rhythm.events, chords, meta, None, rng)?;
            Ok(Motif {
                notes,
                rhythm,
                chords: chords.to_vec(),
                bars: source.bars,
            })
        }
    }
}

/// Moves every note to the nearest chord tone of its new chord, keeping
/// the interval bound. Decorations become chord tones.
fn refit(notes: &[Note], chords: &[ChordEvent], meta: &Meta) -> Option<Vec<Note>> {
    let key = meta.tonality();
    let mut prev: Option<u8> = None;
    let mut out = Vec::with_capacity(notes.len());
    for n in notes {
        let chord = governing_chord(chords, n.onset)?;
        let pitch = chord_tones_in(chord, key, meta.pitch_range)
            .into_iter()
            .filter(|&p| prev.is_none_or(|q| p.abs_diff(q) <= MAX_INTERVAL))
            .min_by_key(|&p| (p.abs_diff(n.pitch), p))?;
        out.push(Note::new(n.onset, n.duration, pitch));
        prev = Some(pitch);
    }
    Some(out)
}

/// Notes of `phrase` in bars `[start_bar, start_bar + bars)`, re-based to 0
/// and clipped at the fragment end.
pub fn phrase_fragment(phrase: &Phrase, start_bar: u32, bars: u32) -> Vec<Note> {
    let start = start_bar * TICKS_PER_BAR;
    let end = start + bars * TICKS_PER_BAR;
    phrase
        .notes
        .iter()
        .filter(|n| n.onset >= start && n.onset < end)
        .map(|n| Note {
            onset: n.onset - start,
            duration: n.end().min(end) - n.onset,
            ..*n
        })
        .collect()
}

/// New motif whose rhythm comes from a random fragment of `source_phrase`
/// (never its opening bars when the phrase is long enough to avoid them),
/// re-pitched on `chords` and pushed `contrast.pitch_shift` semitones away
/// from the source contour.
pub fn borrow_cross_section<R: Rng + ?Sized>(
    source_phrase: &Phrase,
    contrast: ContrastSpec,
    chords: &[ChordEvent],
    bars: u32,
    meta: &Meta,
    rng: &mut R,
) -> Result<Motif, MotifError> {
    let have = source_phrase.length_bars;
    if bars == 0 || have < bars {
        return Err(MotifError::FragmentTooShort {
            have,
            need: bars.max(1),
        });
    }
    if !chords_cover(chords, bars * TICKS_PER_BAR) {
        return Err(MotifError::ChordsDoNotCover(bars));
    }
    ensure_range(chords, meta)?;
    let start = if have > bars {
        rng.gen_range(1..=have - bars)
    } else {
        0
    };
    let fragment = phrase_fragment(source_phrase, start, bars);
    if fragment.is_empty() {
        return Err(MotifError::FragmentTooShort { have, need: bars });
    }
    let rhythm = adjust_density(
        &RhythmPattern::from_notes(&fragment, bars),
        contrast.density,
        rng,
    );

    let key = meta.tonality();
    let range = meta.pitch_range;
    let shift = contrast.pitch_shift as i32;
    let mut prev: Option<u8> = None;
    let mut notes = Vec::with_capacity(rhythm.len());
    for e in &rhythm.events {
        let source = fragment
            .iter()
            .rev()
            .find(|n| n.onset <= e.onset)
            .unwrap_or(&fragment[0])
            .pitch as i32;
        let target = (source + shift).clamp(range.lo as i32, range.hi as i32);
        let chord = governing_chord(chords, e.onset).ok_or(MotifError::ChordsDoNotCover(bars))?;
        let mut tones: Vec<u8> = chord_tones_in(chord, key, range)
            .into_iter()
            .filter(|&p| prev.is_none_or(|q| p.abs_diff(q) <= MAX_INTERVAL))
            .collect();
        if tones.is_empty() {
            return Err(MotifError::NoCandidate {
                prev: prev.unwrap_or(0),
                tick: e.onset,
            });
        }
        let toward: Vec<u8> = tones
            .iter()
            .copied()
            .filter(|&p| (p as i32 - source) * shift.signum() >= 0)
            .collect();
        if shift != 0 && !toward.is_empty() {
            tones = toward;
        }
        tones.shuffle(rng);
        let pitch = *tones
            .iter()
            .min_by_key(|&&p| (p as i32 - target).abs())
            .expect("non-empty");
        notes.push(Note::new(e.onset, e.duration, pitch));
        prev = Some(pitch);
    }
    Ok(Motif {
        notes,
        rhythm,
        chords: chords.to_vec(),
        bars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmony::{generate_progression, Degree, NGramTable};
    use crate::types::{Cadence, Mode, PhraseLabel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c_chord(bars: u32) -> Vec<ChordEvent> {
        (0..bars)
            .map(|b| ChordEvent::diatonic(Degree::I, Mode::Major, b * 16, 16))
            .collect()
    }

    #[test]
    fn undecorated_pitches_are_chord_tones() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = generate_motif(&meta, &c_chord(1), 1, &mut rng).unwrap();
            for n in m.notes.iter().filter(|n| !n.embellishment) {
                assert!([0, 4, 7].contains(&(n.pitch % 12)));
            }
            m.check(&meta).unwrap();
        }
    }

    #[test]
    fn narrow_range_is_infeasible() {
        let meta = Meta::new(0, Mode::Major, 120, 60, 61).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            generate_motif(&meta, &c_chord(1), 1, &mut rng),
            Err(MotifError::InfeasibleRange { .. })
        ));
    }

    #[test]
    fn chords_must_cover_the_motif() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            generate_motif(&Meta::default(), &c_chord(1), 2, &mut rng),
            Err(MotifError::ChordsDoNotCover(2))
        );
    }

    #[test]
    fn decoration_budget_and_figures() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let notes = vec![
            Note::new(0, 4, 60),
            Note::new(4, 4, 64),
            Note::new(8, 4, 67),
            Note::new(12, 4, 64),
        ];
        for _ in 0..100 {
            let out = decorate(&notes, &c_chord(1), &meta, &mut rng);
            let originals = out.iter().filter(|n| !n.embellishment).count();
            assert!(crate::types::is_monophonic(&out));
            assert!(out.len() - notes.len() <= 3);
            assert!(originals >= notes.len());
            assert_eq!(out.last().unwrap().end(), 16);
            assert!(crate::types::max_adjacent_interval(&out) <= MAX_INTERVAL);
        }
        // passing tone between C and E is D
        let forced = decorate_n(
            &[Note::new(0, 4, 60), Note::new(4, 4, 64)],
            &c_chord(1),
            &meta,
            1,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(forced.len() > 2);
    }

    #[test]
    fn copy_is_identical_on_same_chords() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = generate_motif(&meta, &c_chord(2), 2, &mut rng).unwrap();
        let copy = derive_motif(&m, DeriveMode::Copy, &c_chord(2), &meta, &mut rng).unwrap();
        assert_eq!(copy.notes, m.notes);
    }

    #[test]
    fn copy_refits_on_new_chords() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = generate_motif(&meta, &c_chord(1), 1, &mut rng).unwrap();
        let v = vec![ChordEvent::diatonic(Degree::V, Mode::Major, 0, 16)];
        let copy = derive_motif(&m, DeriveMode::Copy, &v, &meta, &mut rng).unwrap();
        copy.check(&meta).unwrap();
        assert_eq!(copy.notes.len(), m.notes.len());
    }

    #[test]
    fn borrowed_rhythm_is_one_edit_away() {
        let meta = Meta::default();
        let table = NGramTable::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let chords =
                generate_progression(2, 1, Cadence::None, Mode::Major, &table, &mut rng).unwrap();
            let m = generate_motif(&meta, &chords, 2, &mut rng).unwrap();
            let other =
                generate_progression(2, 1, Cadence::None, Mode::Major, &table, &mut rng).unwrap();
            let d = derive_motif(&m, DeriveMode::BorrowRhythm, &other, &meta, &mut rng).unwrap();
            d.check(&meta).unwrap();
            let diff = d.rhythm.len() as i64 - m.rhythm.len() as i64;
            assert!(diff.abs() <= 1);
            let shared = m
                .rhythm
                .events
                .iter()
                .filter(|e| d.rhythm.events.contains(e))
                .count();
            // a split or merge touches one event on one side and two on the other
            assert!(
                shared + 2 >= m.rhythm.len(),
                "{:?} vs {:?}",
                m.rhythm,
                d.rhythm
            );
        }
    }

    fn phrase_from(notes: Vec<Note>, bars: u32) -> Phrase {
        Phrase {
            label: PhraseLabel::new('a', 1, 0),
            notes,
            chords: c_chord(bars),
            cadence: Cadence::Authentic,
            length_bars: bars,
        }
    }

    #[test]
    fn cross_section_borrowing() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let motif = generate_motif(&meta, &c_chord(4), 4, &mut rng).unwrap();
            let phrase = phrase_from(motif.notes, 4);

            let neutral = borrow_cross_section(
                &phrase,
                ContrastSpec::NEUTRAL,
                &c_chord(1),
                1,
                &meta,
                &mut rng,
            )
            .unwrap();
            let matches_some_bar = (1..4).any(|b| {
                RhythmPattern::from_notes(&phrase_fragment(&phrase, b, 1), 1).events
                    == neutral.rhythm.events
            });
            assert!(
                matches_some_bar,
                "neutral borrowing must keep a non-opening bar's rhythm"
            );

            let up = ContrastSpec::new(7, Density::Unchanged).unwrap();
            let lifted =
                borrow_cross_section(&phrase, up, &c_chord(1), 1, &meta, &mut rng).unwrap();
            let mean =
                |ns: &[Note]| ns.iter().map(|n| n.pitch as f64).sum::<f64>() / ns.len() as f64;
            let source_bar = (1..4)
                .map(|b| phrase_fragment(&phrase, b, 1))
                .find(|f| RhythmPattern::from_notes(f, 1).events == lifted.rhythm.events)
                .unwrap();
            assert!(mean(&lifted.notes) >= mean(&source_bar));
            lifted.check(&meta).unwrap();
        }
    }

    #[test]
    fn fragment_errors() {
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let short = phrase_from(vec![Note::new(0, 4, 60)], 1);
        assert!(matches!(
            borrow_cross_section(
                &short,
                ContrastSpec::NEUTRAL,
                &c_chord(2),
                2,
                &meta,
                &mut rng
            ),
            Err(MotifError::FragmentTooShort { have: 1, need: 2 })
        ));
        assert!(ContrastSpec::new(13, Density::Unchanged).is_err());
    }
}
