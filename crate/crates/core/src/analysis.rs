//! Phrase boundaries, phrase similarity and the controllability metrics.

use serde::Serialize;
use thiserror::Error;

use crate::form::FormSpec;
use crate::types::{Melody, Note, Phrase, TICKS_PER_BAR};

/// Inter-onset gap, in ticks, that a boundary must exceed (1.5 beats).
pub const BOUNDARY_IOI: u32 = 6;
/// Similarity above which two phrases count as the same phrase.
pub const SAME_PHRASE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("notes are not sorted by onset at index {0}")]
    Unsorted(usize),
    #[error("similarity is undefined for an empty phrase")]
    EmptyPhrase,
    #[error("melody has {melody} phrases but the form has {form}")]
    CountMismatch { melody: usize, form: usize },
    #[error("{phrases} phrases but {targets} targets")]
    LengthMismatch { phrases: usize, targets: usize },
    #[error("no phrases to score")]
    Empty,
}

/// Indices `i` such that a phrase boundary falls between notes `i` and
/// `i + 1`: the onsets are more than 1.5 beats apart and a rest separates
/// them.
pub fn detect_boundaries(notes: &[Note]) -> Result<Vec<usize>, AnalysisError> {
    let mut out = Vec::new();
    for (i, pair) in notes.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        if b.onset < a.onset {
            return Err(AnalysisError::Unsorted(i + 1));
        }
        if b.onset - a.onset > BOUNDARY_IOI && a.end() < b.onset {
            out.push(i);
        }
    }
    Ok(out)
}

/// Cuts `notes` after each boundary index. Each segment is re-based to the
/// start of the bar holding its first note.
pub fn split_at_boundaries(notes: &[Note], boundaries: &[usize]) -> Vec<Vec<Note>> {
    let mut out = Vec::new();
    let mut start = 0;
    for end in boundaries
        .iter()
        .map(|&b| b + 1)
        .chain(std::iter::once(notes.len()))
    {
        if end <= start {
            continue;
        }
        let segment = &notes[start..end];
        let base = segment[0].onset / TICKS_PER_BAR * TICKS_PER_BAR;
        out.push(
            segment
                .iter()
                .map(|n| Note {
                    onset: n.onset - base,
                    ..*n
                })
                .collect(),
        );
        start = end;
    }
    out
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (row[j + 1] + 1)
                .min(row[j] + 1)
                .min(diag + usize::from(x != y));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

fn tokens(notes: &[Note]) -> Vec<(u8, u32, u32)> {
    notes
        .iter()
        .map(|n| (n.pitch, n.onset, n.duration))
        .collect()
}

/// `1 - d / max(|a|, |b|)` over (pitch, onset, duration) tokens.
pub fn note_similarity(a: &[Note], b: &[Note]) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptyPhrase);
    }
    let d = edit_distance(&tokens(a), &tokens(b));
    Ok(1.0 - d as f64 / a.len().max(b.len()) as f64)
}

pub fn similarity(a: &Phrase, b: &Phrase) -> Result<f64, AnalysisError> {
    note_similarity(&a.notes, &b.notes)
}

/// Strictly above the threshold; empty phrases are never the same.
pub fn same_phrase(a: &Phrase, b: &Phrase) -> bool {
    similarity(a, b).is_ok_and(|s| s > SAME_PHRASE_THRESHOLD)
}

/// Pairs of phrase indices that share an unprimed label.
pub fn same_label_pairs(form: &FormSpec) -> Vec<(usize, usize)> {
    let labels = form.labels();
    let mut pairs = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if !labels[i].is_primed() && labels[i] == labels[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Fraction of same-label phrase pairs judged the same phrase. A form with
/// no such pairs scores 1.0.
pub fn form_accuracy(melody: &Melody, form: &FormSpec) -> Result<f64, AnalysisError> {
    let phrases: Vec<&Phrase> = melody.phrases().collect();
    if phrases.len() != form.phrase_count() {
        return Err(AnalysisError::CountMismatch {
            melody: phrases.len(),
            form: form.phrase_count(),
        });
    }
    let pairs = same_label_pairs(form);
    if pairs.is_empty() {
        return Ok(1.0);
    }
    let hits = pairs
        .iter()
        .filter(|&&(i, j)| same_phrase(phrases[i], phrases[j]))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Mean-pitch bucket: `floor((mean - 36) / 4)` clamped to 0..=11.
pub fn avg_bucket(mean: f64) -> u8 {
    ((mean - 36.0) / 4.0).floor().clamp(0.0, 11.0) as u8
}

/// Span bucket: `floor(span / 4)` clamped to 0..=9.
pub fn span_bucket(span: u8) -> u8 {
    (span / 4).min(9)
}

/// `(avg, span)` buckets of a note list, `None` when empty.
pub fn pitch_buckets(notes: &[Note]) -> Option<(u8, u8)> {
    let max = notes.iter().map(|n| n.pitch).max()?;
    let min = notes.iter().map(|n| n.pitch).min()?;
    let mean = notes.iter().map(|n| n.pitch as f64).sum::<f64>() / notes.len() as f64;
    Some((avg_bucket(mean), span_bucket(max - min)))
}

pub fn pitch_control_accuracy(
    refined: &[Phrase],
    targets: &[(u8, u8)],
) -> Result<(f64, f64), AnalysisError> {
    if refined.len() != targets.len() {
        return Err(AnalysisError::LengthMismatch {
            phrases: refined.len(),
            targets: targets.len(),
        });
    }
    if refined.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let (mut avg, mut span) = (0usize, 0usize);
    for (phrase, &(ta, ts)) in refined.iter().zip(targets) {
        if let Some((a, s)) = pitch_buckets(&phrase.notes) {
            avg += usize::from(a == ta);
            span += usize::from(s == ts);
        }
    }
    let n = refined.len() as f64;
    Ok((avg as f64 / n, span as f64 / n))
}

/// Group id per phrase: each phrase joins the group of the first earlier
/// phrase it matches, otherwise it opens a new group.
pub fn recover_grouping(phrases: &[Vec<Note>]) -> Vec<usize> {
    let mut groups: Vec<usize> = Vec::with_capacity(phrases.len());
    let mut next = 0;
    for (i, p) in phrases.iter().enumerate() {
        let found = (0..i)
            .find(|&j| note_similarity(&phrases[j], p).is_ok_and(|s| s > SAME_PHRASE_THRESHOLD));
        match found {
            Some(j) => groups.push(groups[j]),
            None => {
                groups.push(next);
                next += 1;
            }
        }
    }
    groups
}

pub fn similarity_matrix(phrases: &[Vec<Note>]) -> Vec<Vec<f64>> {
    phrases
        .iter()
        .map(|a| {
            phrases
                .iter()
                .map(|b| note_similarity(a, b).unwrap_or(0.0))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub boundaries: Vec<usize>,
    pub phrase_count: usize,
    pub similarity: Vec<Vec<f64>>,
    pub grouping: Vec<usize>,
}

/// Boundary detection, pairwise similarity and grouping over a flat note
/// list on the absolute timeline.
pub fn analyze_notes(notes: &[Note]) -> Result<AnalysisReport, AnalysisError> {
    let boundaries = detect_boundaries(notes)?;
    let phrases = split_at_boundaries(notes, &boundaries);
    Ok(AnalysisReport {
        boundaries,
        phrase_count: phrases.len(),
        similarity: similarity_matrix(&phrases),
        grouping: recover_grouping(&phrases),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Cadence, PhraseLabel};
    use proptest::prelude::*;

    fn n(onset: u32, duration: u32, pitch: u8) -> Note {
        Note::new(onset, duration, pitch)
    }

    fn phrase(notes: Vec<Note>) -> Phrase {
        Phrase {
            label: PhraseLabel::new('a', 1, 0),
            notes,
            chords: vec![],
            cadence: Cadence::None,
            length_bars: 1,
        }
    }

    #[test]
    fn boundary_rule() {
        assert_eq!(
            detect_boundaries(&[n(0, 4, 60), n(4, 2, 62), n(16, 4, 64)]),
            Ok(vec![1])
        );
        let eighths: Vec<Note> = (0..8).map(|i| n(i * 2, 2, 60)).collect();
        assert_eq!(detect_boundaries(&eighths), Ok(vec![]));
        assert_eq!(detect_boundaries(&[n(0, 8, 60), n(8, 4, 62)]), Ok(vec![]));
        assert_eq!(
            detect_boundaries(&[n(4, 2, 60), n(0, 2, 62)]),
            Err(AnalysisError::Unsorted(1))
        );
    }

    #[test]
    fn similarity_examples() {
        let a = phrase(vec![n(0, 4, 60), n(4, 4, 62), n(8, 4, 64)]);
        let b = phrase(vec![n(0, 4, 60), n(4, 4, 62), n(8, 4, 65)]);
        assert_eq!(similarity(&a, &a), Ok(1.0));
        assert!((similarity(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let c = phrase(vec![n(0, 4, 70), n(4, 4, 71), n(8, 4, 72)]);
        assert_eq!(similarity(&a, &c), Ok(0.0));
        assert_eq!(
            similarity(&a, &phrase(vec![])),
            Err(AnalysisError::EmptyPhrase)
        );
        assert!(same_phrase(&a, &a));
        assert!(!same_phrase(&a, &b));
    }

    #[test]
    fn threshold_is_strict() {
        // ten tokens with one substitution gives exactly 0.9
        let base: Vec<Note> = (0..10).map(|i| n(i, 1, 60)).collect();
        let mut other = base.clone();
        other[3].pitch = 61;
        let (a, b) = (phrase(base), phrase(other));
        assert_eq!(similarity(&a, &b), Ok(0.9));
        assert!(!same_phrase(&a, &b));
    }

    #[test]
    fn buckets() {
        assert_eq!(avg_bucket(36.0), 0);
        assert_eq!(avg_bucket(20.0), 0);
        assert_eq!(avg_bucket(63.9), 6);
        assert_eq!(avg_bucket(100.0), 11);
        assert_eq!(span_bucket(3), 0);
        assert_eq!(span_bucket(12), 3);
        assert_eq!(span_bucket(60), 9);
    }

    #[test]
    fn control_accuracy() {
        let ps: Vec<Phrase> = (0..10)
            .map(|i| phrase(vec![n(0, 4, 60 + i), n(4, 4, 64 + i)]))
            .collect();
        let mut targets: Vec<(u8, u8)> = ps
            .iter()
            .map(|p| pitch_buckets(&p.notes).unwrap())
            .collect();
        assert_eq!(pitch_control_accuracy(&ps, &targets), Ok((1.0, 1.0)));
        targets[0].0 += 1;
        assert_eq!(pitch_control_accuracy(&ps, &targets), Ok((0.9, 1.0)));
        let shifted: Vec<(u8, u8)> = targets.iter().map(|&(a, s)| (a + 1, s)).collect();
        let mut all_wrong = shifted.clone();
        all_wrong[0].0 += 1;
        assert_eq!(pitch_control_accuracy(&ps, &all_wrong).unwrap().0, 0.0);
        assert_eq!(pitch_control_accuracy(&[], &[]), Err(AnalysisError::Empty));
    }

    #[test]
    fn grouping() {
        let a = vec![n(0, 4, 60), n(4, 4, 62)];
        let b = vec![n(0, 4, 70), n(4, 4, 72)];
        assert_eq!(recover_grouping(&[a.clone(), b.clone(), a]), vec![0, 1, 0]);
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric(
            a in prop::collection::vec((0u8..4, 0u32..4, 1u32..3), 1..8),
            b in prop::collection::vec((0u8..4, 0u32..4, 1u32..3), 1..8),
        ) {
            let to_notes = |v: &[(u8, u32, u32)]| v.iter().map(|&(p, o, d)| n(o, d, 60 + p)).collect::<Vec<_>>();
            let (x, y) = (to_notes(&a), to_notes(&b));
            let s = note_similarity(&x, &y).unwrap();
            prop_assert_eq!(s, note_similarity(&y, &x).unwrap());
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
