//! Phrase-by-phrase refinement: groups of same-label phrases are masked,
//! sent to a refiner as condition streams, and replaced by its answer.

mod baseline;
mod remote;
pub mod tokens;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::pitch_buckets;
use crate::assembler::Assembler;
use crate::form::FormSpec;
use crate::types::{Cadence, Melody, Note, PhraseLabel};

pub use baseline::{BaselineRefiner, Diagnostic};
pub use remote::{serve, RemoteRefiner};
pub use tokens::{Condition, Frame, PhraseControl, Token};

use tokens::{
    encode_x, encode_y, melody_body, parse_context, parse_melody_body, MAX_AVG_BUCKET,
    MAX_SPAN_BUCKET,
};

/// Default nucleus-sampling mass sent to refiners.
pub const DEFAULT_NUCLEUS_P: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("unknown token '{0}'")]
    UnknownToken(String),
    #[error("malformed stream at token {at}: {reason}")]
    Malformed { at: usize, reason: String },
    #[error("phrase {phrase} cannot be encoded: {reason}")]
    Unencodable { phrase: usize, reason: String },
    #[error("refinement group is empty")]
    EmptyGroup,
    #[error("phrase index {0} is out of range")]
    PhraseIndex(usize),
    #[error("no control given for phrase {0}")]
    MissingControl(usize),
    #[error("expected {expected} phrases in the response, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("response phrase {phrase} contains framing token {token}")]
    Framing { phrase: usize, token: String },
    #[error("response phrase {phrase} has {found} bars, condition has {expected}")]
    BarMismatch {
        phrase: usize,
        expected: u32,
        found: u32,
    },
    #[error("response phrase {phrase} does not keep the condition rhythm")]
    RhythmMismatch { phrase: usize },
    #[error("response id {found} does not match request id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("melody does not follow form {0}")]
    FormMismatch(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("refiner transport: {0}")]
    Transport(String),
    #[error("refiner reported: {0}")]
    Remote(String),
    #[error("group {group}: {source}")]
    Group {
        group: usize,
        #[source]
        source: Box<RefineError>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub id: u64,
    pub context: Vec<Token>,
    pub controls: Vec<PhraseControl>,
    #[serde(default = "default_nucleus_p")]
    pub nucleus_p: f64,
}

fn default_nucleus_p() -> f64 {
    DEFAULT_NUCLEUS_P
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineResponse {
    pub id: u64,
    pub phrases: Vec<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl RefineResponse {
    /// Splits one flat `SEP`-delimited token list into phrases.
    pub fn from_flat(id: u64, tokens: &[Token]) -> Self {
        let phrases = if tokens.is_empty() {
            Vec::new()
        } else {
            tokens
                .split(|t| *t == Token::Sep)
                .map(<[Token]>::to_vec)
                .collect()
        };
        RefineResponse {
            id,
            phrases,
            diagnostics: Vec::new(),
        }
    }
}

pub trait Refiner {
    fn name(&self) -> &'static str;
    fn refine(&mut self, request: &RefineRequest) -> Result<RefineResponse, RefineError>;
}

/// Answers every masked phrase with the stored melody of the group's first
/// member, or with its own stored melody when the rhythms differ.
pub struct IdentityRefiner {
    melody: Melody,
}

impl IdentityRefiner {
    pub fn new(melody: Melody) -> Self {
        IdentityRefiner { melody }
    }
}

impl Refiner for IdentityRefiner {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn refine(&mut self, request: &RefineRequest) -> Result<RefineResponse, RefineError> {
        let first = request
            .controls
            .first()
            .ok_or(RefineError::EmptyGroup)?
            .phrase;
        let rep = self
            .melody
            .phrase(first)
            .ok_or(RefineError::PhraseIndex(first))?;
        let rhythm = |notes: &[Note]| {
            notes
                .iter()
                .map(|n| (n.onset, n.duration))
                .collect::<Vec<_>>()
        };
        let mut phrases = Vec::new();
        for control in &request.controls {
            let own = self
                .melody
                .phrase(control.phrase)
                .ok_or(RefineError::PhraseIndex(control.phrase))?;
            let source = if rhythm(&own.notes) == rhythm(&rep.notes) {
                rep
            } else {
                own
            };
            phrases.push(melody_body(source, control.phrase)?);
        }
        Ok(RefineResponse {
            id: request.id,
            phrases,
            diagnostics: Vec::new(),
        })
    }
}

/// Phrase indices grouped by label, groups in order of first occurrence.
pub fn refinement_schedule(form: &FormSpec) -> Vec<Vec<usize>> {
    let mut order: Vec<PhraseLabel> = Vec::new();
    let mut groups: BTreeMap<PhraseLabel, Vec<usize>> = BTreeMap::new();
    for (i, label) in form.labels().into_iter().enumerate() {
        groups
            .entry(label)
            .or_insert_with(|| {
                order.push(label);
                Vec::new()
            })
            .push(i);
    }
    order
        .into_iter()
        .map(|l| groups.remove(&l).unwrap_or_default())
        .collect()
}

/// Context with the phrases of `group` masked: the global key token, then
/// one framed stream per phrase separated by `SEP`.
pub fn encode_request(
    melody: &Melody,
    group: &[usize],
    controls: &[PhraseControl],
    id: u64,
    nucleus_p: f64,
) -> Result<RefineRequest, RefineError> {
    if group.is_empty() {
        return Err(RefineError::EmptyGroup);
    }
    let count = melody.phrase_count();
    if let Some(&bad) = group.iter().find(|&&i| i >= count) {
        return Err(RefineError::PhraseIndex(bad));
    }
    let mut masked: Vec<usize> = group.to_vec();
    masked.sort_unstable();
    masked.dedup();
    let picked: Vec<PhraseControl> = masked
        .iter()
        .map(|&i| {
            controls
                .iter()
                .find(|c| c.phrase == i)
                .copied()
                .ok_or(RefineError::MissingControl(i))
        })
        .collect::<Result<_, _>>()?;
    let mut context = vec![Token::Tonality(melody.meta.tonality())];
    for (i, phrase) in melody.phrases().enumerate() {
        if i > 0 {
            context.push(Token::Sep);
        }
        match picked.iter().find(|c| c.phrase == i) {
            Some(control) => context.extend(encode_x(phrase, i, control)?),
            None => context.extend(encode_y(phrase, i)?),
        }
    }
    Ok(RefineRequest {
        id,
        context,
        controls: picked,
        nucleus_p,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedPhrase {
    pub phrase: usize,
    pub notes: Vec<Note>,
    pub length_bars: u32,
    pub cadence: Cadence,
}

/// Checks a response against its request and returns the refined phrases,
/// rhythm from the condition and pitch from the response.
pub fn decode_response(
    response: &RefineResponse,
    request: &RefineRequest,
) -> Result<Vec<DecodedPhrase>, RefineError> {
    if response.id != request.id {
        return Err(RefineError::IdMismatch {
            expected: request.id,
            found: response.id,
        });
    }
    let context = parse_context(&request.context)?;
    let masked: Vec<(usize, &Condition)> = context
        .frames
        .iter()
        .enumerate()
        .filter_map(|(i, f)| match f {
            Frame::Condition(c) => Some((i, c)),
            Frame::Melody(..) => None,
        })
        .collect();
    if response.phrases.len() != masked.len() {
        return Err(RefineError::CountMismatch {
            expected: masked.len(),
            found: response.phrases.len(),
        });
    }
    masked
        .into_iter()
        .zip(&response.phrases)
        .map(|((index, condition), tokens)| {
            if let Some(t) = tokens
                .iter()
                .find(|t| matches!(t, Token::Sep | Token::Bos | Token::Eos))
            {
                return Err(RefineError::Framing {
                    phrase: index,
                    token: t.to_string(),
                });
            }
            let (notes, bars) = parse_melody_body(tokens)?;
            if bars != condition.bars {
                return Err(RefineError::BarMismatch {
                    phrase: index,
                    expected: condition.bars,
                    found: bars,
                });
            }
            let same_rhythm = notes.len() == condition.events.len()
                && notes
                    .iter()
                    .zip(&condition.events)
                    .all(|(n, e)| n.onset == e.0 && n.duration == e.1);
            if !same_rhythm {
                return Err(RefineError::RhythmMismatch { phrase: index });
            }
            Ok(DecodedPhrase {
                phrase: index,
                notes,
                length_bars: bars,
                cadence: condition.cadence,
            })
        })
        .collect()
}

/// The response that reproduces the melody's own masked phrases.
pub fn ground_truth_response(
    melody: &Melody,
    request: &RefineRequest,
) -> Result<RefineResponse, RefineError> {
    let phrases = request
        .controls
        .iter()
        .map(|c| {
            let phrase = melody
                .phrase(c.phrase)
                .ok_or(RefineError::PhraseIndex(c.phrase))?;
            melody_body(phrase, c.phrase)
        })
        .collect::<Result<_, _>>()?;
    Ok(RefineResponse {
        id: request.id,
        phrases,
        diagnostics: Vec::new(),
    })
}

/// Controls that describe each phrase as it stands.
pub fn measured_controls(melody: &Melody) -> Vec<PhraseControl> {
    melody
        .phrases()
        .enumerate()
        .map(|(i, p)| {
            let (avgpitch, span) = pitch_buckets(&p.notes).unwrap_or((0, 0));
            PhraseControl {
                phrase: i,
                avgpitch,
                span,
                tonality: None,
            }
        })
        .collect()
}

/// Controls per phrase: the phrase's measured buckets moved by its
/// section's offsets, with optional per-label key overrides.
pub fn default_controls(
    melody: &Melody,
    assembler: &Assembler,
    tonality: &BTreeMap<PhraseLabel, crate::types::Tonality>,
) -> Vec<PhraseControl> {
    let form = melody.form();
    let sections = melody.phrase_sections();
    melody
        .phrases()
        .enumerate()
        .map(|(i, p)| {
            let (avg, span) = pitch_buckets(&p.notes).unwrap_or((0, 0));
            let d = assembler.section_defaults(&form, sections[i].0);
            PhraseControl {
                phrase: i,
                avgpitch: (avg as i16 + d.avg_delta as i16).clamp(0, MAX_AVG_BUCKET as i16) as u8,
                span: (span as i16 + d.span_delta as i16).clamp(0, MAX_SPAN_BUCKET as i16) as u8,
                tonality: tonality.get(&p.label).copied(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub melody: Melody,
    pub controls: Vec<PhraseControl>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Refines every group of the schedule in turn; each request sees the
/// phrases refined so far.
pub fn refine_melody(
    melody: &Melody,
    form: &FormSpec,
    refiner: &mut dyn Refiner,
    controls: &[PhraseControl],
    nucleus_p: f64,
) -> Result<RefineOutcome, RefineError> {
    if melody.form().labels() != form.labels() {
        return Err(RefineError::FormMismatch(form.to_string()));
    }
    let mut current = melody.clone();
    let mut diagnostics = Vec::new();
    for (g, group) in refinement_schedule(form).iter().enumerate() {
        let wrap = |e: RefineError| RefineError::Group {
            group: g,
            source: Box::new(e),
        };
        let request =
            encode_request(&current, group, controls, g as u64, nucleus_p).map_err(wrap)?;
        let response = refiner.refine(&request).map_err(wrap)?;
        let decoded = decode_response(&response, &request).map_err(wrap)?;
        diagnostics.extend(response.diagnostics.iter().copied());
        for d in decoded {
            let key = controls
                .iter()
                .find(|c| c.phrase == d.phrase)
                .and_then(|c| c.tonality)
                .unwrap_or(current.meta.tonality());
            let phrase = current
                .phrase_mut(d.phrase)
                .ok_or(RefineError::PhraseIndex(d.phrase))?;
            let chords = phrase.chords.clone();
            let old = std::mem::take(&mut phrase.notes);
            phrase.notes = d
                .notes
                .into_iter()
                .zip(old)
                .map(|(mut n, o)| {
                    n.embellishment = if n.pitch == o.pitch {
                        o.embellishment
                    } else {
                        chords
                            .iter()
                            .find(|c| c.covers(n.onset))
                            .is_some_and(|c| !c.is_chord_tone(n.pitch, key))
                    };
                    n
                })
                .collect();
        }
    }
    Ok(RefineOutcome {
        melody: current,
        controls: controls.to_vec(),
        diagnostics,
    })
}
