//! Growing a motif into a phrase: sequences, transformations and endings,
//! alone or chained on one bar span.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmony::{chords_in_span, ChordEvent};
use crate::motif::{
    chord_tones_in, decorate_n, governing_chord, pitch_rhythm, weighted_by_interval, Motif,
    MotifError, MAX_INTERVAL,
};
use crate::rhythm::{generate_rhythm, RhythmEvent};
use crate::types::{Cadence, Meta, Note, Phrase, PhraseLabel, TICKS_PER_BAR};

const REAL_SHIFTS: [i32; 6] = [-4, -3, -2, 2, 3, 4];
const TONAL_SHIFTS: [i32; 4] = [-2, -1, 1, 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DevelopmentError {
    #[error("development plan is empty")]
    EmptyPlan,
    #[error("the last plan step must contain an ending")]
    MissingEnding,
    #[error("an ending may only appear in the last plan step")]
    EarlyEnding,
    #[error("chords cover {have} ticks but the plan needs {need}")]
    LengthMismatch { have: u32, need: u32 },
    #[error("fragment is empty")]
    EmptyFragment,
    #[error("no transposition keeps the fragment inside the pitch range")]
    OutOfRange,
    #[error("halving would put a note off the sixteenth grid")]
    SubGrid,
    #[error("phrase of {phrase} bars cannot be developed from a {motif}-bar motif")]
    BadProportion { phrase: u32, motif: u32 },
    #[error(transparent)]
    Motif(#[from] MotifError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Real,
    Tonal,
    Rhythmic,
    Modified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Acceleration,
    Decoration,
    Fragmentation,
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndingKind {
    Downward,
    Prolong,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sequence(SequenceKind),
    Transformation(TransformKind),
    Ending(EndingKind),
    Compound(Vec<Strategy>),
}

impl Strategy {
    fn has_ending(&self) -> bool {
        match self {
            Strategy::Ending(_) => true,
            Strategy::Compound(parts) => parts.iter().any(Strategy::has_ending),
            _ => false,
        }
    }
}

/// One strategy per motif-length bar span after the motif itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevelopmentPlan {
    pub steps: Vec<Strategy>,
}

impl DevelopmentPlan {
    pub fn new(steps: Vec<Strategy>) -> Self {
        DevelopmentPlan { steps }
    }

    pub fn validate(&self) -> Result<(), DevelopmentError> {
        let (last, rest) = self.steps.split_last().ok_or(DevelopmentError::EmptyPlan)?;
        if !last.has_ending() {
            return Err(DevelopmentError::MissingEnding);
        }
        if rest.iter().any(Strategy::has_ending) {
            return Err(DevelopmentError::EarlyEnding);
        }
        Ok(())
    }

    /// Phrase length produced from a motif of `motif_bars`.
    pub fn phrase_bars(&self, motif_bars: u32) -> u32 {
        motif_bars * (self.steps.len() as u32 + 1)
    }
}

/// Motif length used for a phrase of `phrase_bars`.
pub fn motif_bars_for(phrase_bars: u32) -> u32 {
    if phrase_bars >= 8 && phrase_bars.is_multiple_of(2) {
        2
    } else {
        1
    }
}

/// `L/m - 2` development steps followed by an ending, which is sometimes
/// preceded by a transformation on the same span.
pub fn default_plan<R: Rng + ?Sized>(
    phrase_bars: u32,
    motif_bars: u32,
    rng: &mut R,
) -> Result<DevelopmentPlan, DevelopmentError> {
    if motif_bars == 0 || !phrase_bars.is_multiple_of(motif_bars) || phrase_bars / motif_bars < 2 {
        return Err(DevelopmentError::BadProportion {
            phrase: phrase_bars,
            motif: motif_bars,
        });
    }
    let mut steps = Vec::new();
    for _ in 0..phrase_bars / motif_bars - 2 {
        steps.push(if rng.gen_bool(0.5) {
            Strategy::Sequence(
                *[
                    SequenceKind::Real,
                    SequenceKind::Tonal,
                    SequenceKind::Modified,
                ]
                .choose(rng)
                .expect("non-empty"),
            )
        } else {
            Strategy::Transformation(random_transform(rng))
        });
    }
    let ending = Strategy::Ending(if rng.gen_bool(0.6) {
        EndingKind::Downward
    } else {
        EndingKind::Prolong
    });
    steps.push(if rng.gen_bool(0.3) {
        Strategy::Compound(vec![
            Strategy::Transformation(random_transform(rng)),
            ending,
        ])
    } else {
        ending
    });
    Ok(DevelopmentPlan { steps })
}

fn random_transform<R: Rng + ?Sized>(rng: &mut R) -> TransformKind {
    *[
        TransformKind::Acceleration,
        TransformKind::Decoration,
        TransformKind::Fragmentation,
        TransformKind::Finetune,
    ]
    .choose(rng)
    .expect("non-empty")
}

fn span_ticks(chords: &[ChordEvent]) -> u32 {
    chords.last().map_or(0, ChordEvent::end)
}

fn in_range(notes: &[Note], meta: &Meta) -> bool {
    notes
        .iter()
        .all(|n| meta.pitch_range.contains(n.pitch as i32))
}

fn rhythm_of(notes: &[Note]) -> Vec<RhythmEvent> {
    notes
        .iter()
        .map(|n| RhythmEvent {
            onset: n.onset,
            duration: n.duration,
        })
        .collect()
}

fn flag_for(pitch: u8, onset: u32, chords: &[ChordEvent], meta: &Meta) -> bool {
    governing_chord(chords, onset).is_some_and(|c| !c.is_chord_tone(pitch, meta.tonality()))
}

pub fn transpose_real(
    fragment: &[Note],
    semitones: i32,
    meta: &Meta,
) -> Result<Vec<Note>, DevelopmentError> {
    let out: Option<Vec<Note>> = fragment
        .iter()
        .map(|n| {
            let p = n.pitch as i32 + semitones;
            meta.pitch_range.contains(p).then_some(Note {
                pitch: p as u8,
                ..*n
            })
        })
        .collect();
    out.ok_or(DevelopmentError::OutOfRange)
}

pub fn transpose_tonal(
    fragment: &[Note],
    steps: i32,
    meta: &Meta,
) -> Result<Vec<Note>, DevelopmentError> {
    let key = meta.tonality();
    let out: Option<Vec<Note>> = fragment
        .iter()
        .map(|n| {
            key.transpose_diatonic(n.pitch, steps)
                .filter(|&p| meta.pitch_range.contains(p as i32))
                .map(|p| Note { pitch: p, ..*n })
        })
        .collect();
    out.ok_or(DevelopmentError::OutOfRange)
}

/// Restates `fragment` over `target_chords`. Real and tonal sequences pick
/// a transposition that stays in range; rhythmic keeps only the rhythm.
pub fn apply_sequence<R: Rng + ?Sized>(
    fragment: &[Note],
    kind: SequenceKind,
    target_chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    sequence_after(None, fragment, kind, target_chords, meta, rng)
}

fn sequence_after<R: Rng + ?Sized>(
    prev: Option<u8>,
    fragment: &[Note],
    kind: SequenceKind,
    target_chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    if fragment.is_empty() {
        return Err(DevelopmentError::EmptyFragment);
    }
    let transposed =
        |shifts: &[i32], tonal: bool, rng: &mut R| -> Result<Vec<Note>, DevelopmentError> {
            let mut options: Vec<Vec<Note>> = shifts
                .iter()
                .filter_map(|&s| {
                    if tonal {
                        transpose_tonal(fragment, s, meta).ok()
                    } else {
                        transpose_real(fragment, s, meta).ok()
                    }
                })
                .collect();
            if let Some(p) = prev {
                let smooth: Vec<Vec<Note>> = options
                    .iter()
                    .filter(|o| o[0].pitch.abs_diff(p) <= MAX_INTERVAL)
                    .cloned()
                    .collect();
                if !smooth.is_empty() {
                    options = smooth;
                }
            }
            options
                .choose(rng)
                .cloned()
                .ok_or(DevelopmentError::OutOfRange)
        };
    match kind {
        SequenceKind::Real => transposed(&REAL_SHIFTS, false, rng),
        SequenceKind::Tonal => transposed(&TONAL_SHIFTS, true, rng),
        SequenceKind::Modified => {
            let base = transposed(&TONAL_SHIFTS, true, rng)?;
            let edits = rng.gen_range(1..=2);
            Ok(finetune(&base, edits, 0, target_chords, meta, rng))
        }
        SequenceKind::Rhythmic => Ok(pitch_rhythm(
            &rhythm_of(fragment),
            target_chords,
            meta,
            prev,
            rng,
        )?),
    }
}

/// Applies one transformation to `fragment`. The span filled is the extent
/// of `chords`.
pub fn apply_transformation<R: Rng + ?Sized>(
    fragment: &[Note],
    kind: TransformKind,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    if fragment.is_empty() {
        return Err(DevelopmentError::EmptyFragment);
    }
    let span = span_ticks(chords).max(
        fragment
            .last()
            .map_or(0, Note::end)
            .next_multiple_of(TICKS_PER_BAR),
    );
    match kind {
        TransformKind::Acceleration => accelerate(fragment, span, meta, rng),
        TransformKind::Decoration => {
            let budget = rng.gen_range(1..=(fragment.len() / 4).max(1));
            Ok(decorate_n(fragment, chords, meta, budget, rng))
        }
        TransformKind::Fragmentation => fragmentation(fragment, span, meta, rng),
        TransformKind::Finetune => {
            let edits = rng.gen_range(1..=3);
            Ok(finetune(fragment, edits, 0, chords, meta, rng))
        }
    }
}

fn accelerate<R: Rng + ?Sized>(
    fragment: &[Note],
    span: u32,
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    if fragment
        .iter()
        .any(|n| n.onset % 2 == 1 || n.duration % 2 == 1)
    {
        return Err(DevelopmentError::SubGrid);
    }
    let cell: Vec<Note> = fragment
        .iter()
        .map(|n| Note {
            onset: n.onset / 2,
            duration: n.duration / 2,
            ..*n
        })
        .collect();
    let half = span / 2;
    let tail = sequence_after(
        cell.last().map(|n| n.pitch),
        &cell,
        SequenceKind::Tonal,
        &[],
        meta,
        rng,
    )?;
    Ok(cell
        .into_iter()
        .chain(tail.into_iter().map(|n| n.shifted(half)))
        .collect())
}

fn fragmentation<R: Rng + ?Sized>(
    fragment: &[Note],
    span: u32,
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    let width = *[4u32, 8].choose(rng).expect("non-empty");
    let starts: Vec<u32> = (0..span / width)
        .map(|k| k * width)
        .filter(|&s| fragment.iter().any(|n| n.onset >= s && n.onset < s + width))
        .collect();
    let start = *starts.choose(rng).ok_or(DevelopmentError::EmptyFragment)?;
    let cell: Vec<Note> = fragment
        .iter()
        .filter(|n| n.onset >= start && n.onset < start + width)
        .map(|n| Note {
            onset: n.onset - start,
            duration: n.end().min(start + width) - n.onset,
            ..*n
        })
        .collect();
    let per_bar = TICKS_PER_BAR / width;
    let dir = if rng.gen_bool(0.5) { 1 } else { -1 };
    let mut out = Vec::new();
    for k in 0..span / width {
        let level = dir * (k % per_bar) as i32;
        let copy = [level, -level, 0]
            .into_iter()
            .find_map(|s| transpose_tonal(&cell, s, meta).ok())
            .ok_or(DevelopmentError::OutOfRange)?;
        out.extend(copy.into_iter().map(|n| n.shifted(k * width)));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Edit {
    Move,
    Merge,
    Split,
    Decorate,
}

/// Applies up to `edits` random fine-tuning edits. The last `protect`
/// notes are never touched. Returns the input unchanged when no edit is
/// legal.
pub fn finetune<R: Rng + ?Sized>(
    notes: &[Note],
    edits: usize,
    protect: usize,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Vec<Note> {
    let mut out = notes.to_vec();
    for _ in 0..edits {
        match finetune_once(&out, protect, chords, meta, rng) {
            Some(next) => out = next,
            None => break,
        }
    }
    out
}

fn interval_ok(notes: &[Note], i: usize, pitch: u8) -> bool {
    let before = i.checked_sub(1).map(|j| notes[j].pitch);
    let after = notes.get(i + 1).map(|n| n.pitch);
    [before, after]
        .into_iter()
        .flatten()
        .all(|p| p.abs_diff(pitch) <= MAX_INTERVAL)
}

fn finetune_once<R: Rng + ?Sized>(
    notes: &[Note],
    protect: usize,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Option<Vec<Note>> {
    let editable = notes.len().saturating_sub(protect);
    if editable == 0 {
        return None;
    }
    let key = meta.tonality();
    let mut kinds = [Edit::Move, Edit::Merge, Edit::Split, Edit::Decorate];
    kinds.shuffle(rng);
    for kind in kinds {
        let mut positions: Vec<usize> = (0..editable).collect();
        positions.shuffle(rng);
        match kind {
            Edit::Move => {
                for &i in &positions {
                    let mut steps = [-2, -1, 1, 2];
                    steps.shuffle(rng);
                    for s in steps {
                        let Some(p) = key.transpose_diatonic(notes[i].pitch, s) else {
                            continue;
                        };
                        if !meta.pitch_range.contains(p as i32) || !interval_ok(notes, i, p) {
                            continue;
                        }
                        let mut out = notes.to_vec();
                        out[i].pitch = p;
                        out[i].embellishment = flag_for(p, out[i].onset, chords, meta);
                        return Some(out);
                    }
                }
            }
            Edit::Merge => {
                for &i in &positions {
                    if i + 1 >= editable || notes[i].end() != notes[i + 1].onset {
                        continue;
                    }
                    if notes
                        .get(i + 2)
                        .is_some_and(|n| n.pitch.abs_diff(notes[i].pitch) > MAX_INTERVAL)
                    {
                        continue;
                    }
                    let mut out = notes.to_vec();
                    let next = out.remove(i + 1);
                    out[i].duration = next.end() - out[i].onset;
                    out[i].embellishment = flag_for(out[i].pitch, out[i].onset, chords, meta);
                    return Some(out);
                }
            }
            Edit::Split => {
                for &i in &positions {
                    let n = notes[i];
                    if n.duration < 2 {
                        continue;
                    }
                    let first = n.duration.div_ceil(2);
                    let mut out = notes.to_vec();
                    out[i].duration = first;
                    out.insert(
                        i + 1,
                        Note {
                            onset: n.onset + first,
                            duration: n.duration - first,
                            ..n
                        },
                    );
                    return Some(out);
                }
            }
            Edit::Decorate => {
                let head = decorate_n(&notes[..editable], chords, meta, 1, rng);
                if head.len() != editable {
                    let mut out = head;
                    out.extend_from_slice(&notes[editable..]);
                    return Some(out);
                }
            }
        }
    }
    None
}

/// Draws chord tones for `events` such that each step moves at most
/// [`MAX_INTERVAL`] and the final pitch satisfies `final_ok`. Returns
/// `None` when no such path exists.
fn constrained_path<R: Rng + ?Sized>(
    events: &[RhythmEvent],
    chords: &[ChordEvent],
    meta: &Meta,
    prev: Option<u8>,
    final_ok: impl Fn(u8) -> bool,
    rng: &mut R,
) -> Option<Vec<Note>> {
    let key = meta.tonality();
    let candidates: Option<Vec<Vec<u8>>> = events
        .iter()
        .map(|e| governing_chord(chords, e.onset).map(|c| chord_tones_in(c, key, meta.pitch_range)))
        .collect();
    let mut reach = candidates?;
    let last = reach.len().checked_sub(1)?;
    reach[last].retain(|&p| final_ok(p));
    for i in (0..last).rev() {
        let next = reach[i + 1].clone();
        reach[i].retain(|&p| next.iter().any(|&q| p.abs_diff(q) <= MAX_INTERVAL));
    }
    let mut notes = Vec::with_capacity(events.len());
    let mut at = prev;
    for (e, options) in events.iter().zip(&reach) {
        let near: Vec<u8> = options
            .iter()
            .copied()
            .filter(|&p| at.is_none_or(|q| p.abs_diff(q) <= MAX_INTERVAL))
            .collect();
        let pitch = match at {
            Some(q) => weighted_by_interval(&near, q, rng)?,
            None => *near.choose(rng)?,
        };
        notes.push(Note::new(e.onset, e.duration, pitch));
        at = Some(pitch);
    }
    Some(notes)
}

/// Produces the closing bar span of a phrase. `context` holds the phrase so
/// far (`context_bars` long); `chords` cover the ending span and end on the
/// cadence chord.
pub fn apply_ending<R: Rng + ?Sized>(
    context: &[Note],
    context_bars: u32,
    kind: EndingKind,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    ending_with(context, context_bars, kind, None, chords, meta, rng)
}

fn ending_with<R: Rng + ?Sized>(
    context: &[Note],
    context_bars: u32,
    kind: EndingKind,
    material: Option<&[Note]>,
    chords: &[ChordEvent],
    meta: &Meta,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    let first = context
        .first()
        .ok_or(DevelopmentError::EmptyFragment)?
        .pitch;
    let prev = context.last().map(|n| n.pitch);
    let span = span_ticks(chords);
    let cadence_chord = *chords
        .last()
        .ok_or(DevelopmentError::LengthMismatch { have: 0, need: 1 })?;
    let key = meta.tonality();
    match kind {
        EndingKind::Downward => {
            let rhythm = match material {
                Some(m) => rhythm_of(m),
                None => generate_rhythm(span / TICKS_PER_BAR, rng).events,
            };
            let ok = |p: u8| p < first && cadence_chord.is_chord_tone(p, key);
            match constrained_path(&rhythm, chords, meta, prev, ok, rng) {
                Some(notes) => Ok(notes),
                None => {
                    log::warn!("no downward ending below pitch {first}; prolonging instead");
                    ending_with(
                        context,
                        context_bars,
                        EndingKind::Prolong,
                        material,
                        chords,
                        meta,
                        rng,
                    )
                }
            }
        }
        EndingKind::Prolong => {
            let base = match material {
                Some(m) => m.to_vec(),
                None => {
                    let start = context_bars.saturating_sub(span / TICKS_PER_BAR) * TICKS_PER_BAR;
                    let rhythm: Vec<RhythmEvent> = context
                        .iter()
                        .filter(|n| n.onset >= start)
                        .map(|n| RhythmEvent {
                            onset: n.onset - start,
                            duration: n.duration,
                        })
                        .filter(|e| e.onset < span)
                        .collect();
                    let rhythm = if rhythm.is_empty() {
                        generate_rhythm(span / TICKS_PER_BAR, rng).events
                    } else {
                        rhythm
                    };
                    let ok = |p: u8| cadence_chord.is_chord_tone(p, key);
                    match constrained_path(&rhythm, chords, meta, prev, ok, rng) {
                        Some(notes) => notes,
                        None => pitch_rhythm(&rhythm, chords, meta, prev, rng)?,
                    }
                }
            };
            Ok(prolong(base, span, &cadence_chord, meta))
        }
    }
}

/// Extends the final note to `span` and moves it onto a cadence chord tone
/// when it is not one already.
fn prolong(mut notes: Vec<Note>, span: u32, cadence: &ChordEvent, meta: &Meta) -> Vec<Note> {
    let key = meta.tonality();
    let Some(last) = notes.len().checked_sub(1) else {
        return notes;
    };
    notes[last].duration = span - notes[last].onset;
    if !cadence.is_chord_tone(notes[last].pitch, key) {
        let before = last.checked_sub(1).map(|i| notes[i].pitch);
        let tones = chord_tones_in(cadence, key, meta.pitch_range);
        let target = notes[last].pitch;
        let pick = tones
            .iter()
            .copied()
            .filter(|&p| before.is_none_or(|q| p.abs_diff(q) <= MAX_INTERVAL))
            .min_by_key(|&p| (p.abs_diff(target), p))
            .or_else(|| {
                tones
                    .iter()
                    .copied()
                    .min_by_key(|&p| (p.abs_diff(target), p))
            });
        if let Some(p) = pick {
            notes[last].pitch = p;
        }
    }
    notes[last].embellishment = false;
    notes
}

fn run_step<R: Rng + ?Sized>(
    step: &Strategy,
    input: Option<Vec<Note>>,
    state: &StepState<'_>,
    rng: &mut R,
) -> Result<Vec<Note>, DevelopmentError> {
    let meta = state.meta;
    let prev = state.context.last().map(|n| n.pitch);
    match step {
        Strategy::Sequence(kind) => {
            let (source, source_chords) = match input {
                Some(notes) => (notes, state.chords.to_vec()),
                None => (state.previous_span(), state.previous_chords.to_vec()),
            };
            let same = source_chords.len() == state.chords.len()
                && source_chords.iter().zip(state.chords).all(|(a, b)| {
                    a.same_harmony(b) && a.onset == b.onset && a.duration == b.duration
                });
            let kind = if same { *kind } else { SequenceKind::Rhythmic };
            match sequence_after(prev, &source, kind, state.chords, meta, rng) {
                Ok(notes) => Ok(notes),
                Err(DevelopmentError::OutOfRange) => sequence_after(
                    prev,
                    &source,
                    SequenceKind::Rhythmic,
                    state.chords,
                    meta,
                    rng,
                ),
                Err(e) => Err(e),
            }
        }
        Strategy::Transformation(kind) => {
            let source = input.unwrap_or_else(|| state.motif.notes.clone());
            match apply_transformation(&source, *kind, state.chords, meta, rng) {
                Ok(notes) => Ok(notes),
                Err(DevelopmentError::SubGrid | DevelopmentError::OutOfRange) => {
                    log::debug!("{kind:?} not applicable; fine-tuning instead");
                    apply_transformation(&source, TransformKind::Finetune, state.chords, meta, rng)
                }
                Err(e) => Err(e),
            }
        }
        Strategy::Ending(kind) => ending_with(
            state.context,
            state.context_bars,
            *kind,
            input.as_deref(),
            state.chords,
            meta,
            rng,
        ),
        Strategy::Compound(parts) => {
            let mut current = input;
            for part in parts {
                current = Some(run_step(part, current, state, rng)?);
            }
            current.ok_or(DevelopmentError::EmptyPlan)
        }
    }
}

struct StepState<'a> {
    motif: &'a Motif,
    context: &'a [Note],
    context_bars: u32,
    span_bars: u32,
    chords: &'a [ChordEvent],
    previous_chords: &'a [ChordEvent],
    meta: &'a Meta,
}

impl StepState<'_> {
    fn previous_span(&self) -> Vec<Note> {
        let start = (self.context_bars - self.span_bars) * TICKS_PER_BAR;
        self.context
            .iter()
            .filter(|n| n.onset >= start)
            .map(|n| Note {
                onset: n.onset - start,
                ..*n
            })
            .collect()
    }
}

/// Clips notes to `[0, span)` and drops anything that would overlap.
fn confine(notes: Vec<Note>, span: u32) -> Vec<Note> {
    let mut out: Vec<Note> = Vec::with_capacity(notes.len());
    for mut n in notes
        .into_iter()
        .filter(|n| n.onset < span && n.duration > 0)
    {
        n.duration = n.duration.min(span - n.onset);
        if out.last().is_some_and(|p| p.end() > n.onset) {
            continue;
        }
        out.push(n);
    }
    out
}

/// Motif bars followed by each plan step's output over successive spans.
pub fn develop_phrase<R: Rng + ?Sized>(
    motif: &Motif,
    plan: &DevelopmentPlan,
    chords: &[ChordEvent],
    label: PhraseLabel,
    cadence: Cadence,
    meta: &Meta,
    rng: &mut R,
) -> Result<Phrase, DevelopmentError> {
    plan.validate()?;
    let bars = plan.phrase_bars(motif.bars);
    let need = bars * TICKS_PER_BAR;
    let have = span_ticks(chords);
    if have != need || !crate::motif::chords_cover(chords, need) {
        return Err(DevelopmentError::LengthMismatch { have, need });
    }
    let span_ticks = motif.bars * TICKS_PER_BAR;
    let mut notes = confine(motif.notes.clone(), span_ticks);
    for (k, step) in plan.steps.iter().enumerate() {
        let start = (k as u32 + 1) * span_ticks;
        let span_chords = chords_in_span(chords, start, span_ticks);
        let previous_chords = chords_in_span(chords, start - span_ticks, span_ticks);
        let state = StepState {
            motif,
            context: &notes,
            context_bars: (k as u32 + 1) * motif.bars,
            span_bars: motif.bars,
            chords: &span_chords,
            previous_chords: &previous_chords,
            meta,
        };
        let out = confine(run_step(step, None, &state, rng)?, span_ticks);
        notes.extend(out.into_iter().map(|n| n.shifted(start)));
    }
    debug_assert!(in_range(&notes, meta));
    Ok(Phrase {
        label,
        notes,
        chords: chords.to_vec(),
        cadence,
        length_bars: bars,
    })
}

/// Makes a phrase end with a sustained final note followed by a short rest,
/// and fills interior rests that would read as phrase breaks.
///
/// The final note starts at least two beats before the phrase end and
/// stops a sixteenth before it. Its pitch is kept unless the leap from its
/// new predecessor is too wide; a replacement stays on the final chord and,
/// when the original ended below the opening pitch, below it too.
pub fn seal_phrase_end(phrase: &mut Phrase, meta: &Meta) {
    let end = phrase.length_ticks();
    let Some(last) = phrase.notes.last().copied() else {
        return;
    };
    let first_pitch = phrase.notes[0].pitch;
    let latest = end - 8;
    let bar_start = end - TICKS_PER_BAR;
    let onset = phrase
        .notes
        .iter()
        .rev()
        .map(|n| n.onset)
        .find(|&o| o >= bar_start && o <= latest)
        .unwrap_or(bar_start);
    phrase.notes.retain(|n| n.onset < onset);
    if let Some(p) = phrase.notes.last_mut() {
        p.duration = p.duration.min(onset - p.onset);
    }
    let mut pitch = last.pitch;
    let before = phrase.notes.last().map(|n| n.pitch);
    if before.is_some_and(|q| q.abs_diff(pitch) > MAX_INTERVAL) {
        let key = meta.tonality();
        let chord = phrase
            .chord_at(onset)
            .copied()
            .or_else(|| phrase.chords.last().copied());
        if let Some(chord) = chord {
            let downward = last.pitch < first_pitch;
            let q = before.expect("checked");
            if let Some(p) = chord_tones_in(&chord, key, meta.pitch_range)
                .into_iter()
                .filter(|&p| p.abs_diff(q) <= MAX_INTERVAL && (!downward || p < first_pitch))
                .min_by_key(|&p| (p.abs_diff(last.pitch), p))
            {
                pitch = p;
            }
        }
    }
    let lead = if phrase.notes.is_empty() {
        Some(pitch)
    } else {
        None
    };
    phrase.notes.push(Note::new(onset, end - 2 - onset, pitch));
    if let Some(p) = lead {
        phrase.notes[0].pitch = p;
    }
    close_interior_gaps(&mut phrase.notes);
    split_long_notes(&mut phrase.notes);
}

/// Breaks notes longer than a bar into repeated notes of at most a bar.
pub fn split_long_notes(notes: &mut Vec<Note>) {
    if notes.iter().all(|n| n.duration <= TICKS_PER_BAR) {
        return;
    }
    let mut out = Vec::with_capacity(notes.len() + 1);
    for n in notes.drain(..) {
        let mut at = n.onset;
        while at < n.end() {
            let duration = (n.end() - at).min(TICKS_PER_BAR);
            out.push(Note {
                onset: at,
                duration,
                ..n
            });
            at += duration;
        }
    }
    *notes = out;
}

/// Extends notes over rests whenever the next onset is more than six
/// ticks away, so only the phrase end reads as a boundary.
pub fn close_interior_gaps(notes: &mut [Note]) {
    for i in 0..notes.len().saturating_sub(1) {
        let next = notes[i + 1].onset;
        if next - notes[i].onset > 6 && notes[i].end() < next {
            notes[i].duration = next - notes[i].onset;
        }
    }
}
