//! Token vocabulary and the condition (`x`) and melody (`y`) streams.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harmony::{ChordQuality, Degree};
use crate::types::{Cadence, Mode, Note, Phrase, Tonality, TICKS_PER_BAR};

use super::RefineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Bar,
    Pos(u8),
    Dur(u8),
    Pitch(u8),
    Chord(Degree, ChordQuality),
    Cad(Cadence),
    AvgPitch(u8),
    Span(u8),
    Tonality(Tonality),
    Sep,
    Bos,
    Eos,
}

pub const MAX_AVG_BUCKET: u8 = 11;
pub const MAX_SPAN_BUCKET: u8 = 9;

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Bar => f.write_str("BAR"),
            Token::Pos(p) => write!(f, "POS_{p}"),
            Token::Dur(d) => write!(f, "DUR_{d}"),
            Token::Pitch(p) => write!(f, "PITCH_{p}"),
            Token::Chord(d, q) => write!(f, "CHORD_{}_{}", d.roman(), q.name()),
            Token::Cad(Cadence::None) => f.write_str("CAD_NONE"),
            Token::Cad(Cadence::Half) => f.write_str("CAD_HALF"),
            Token::Cad(Cadence::Authentic) => f.write_str("CAD_AUTH"),
            Token::AvgPitch(k) => write!(f, "AVGPITCH_{k}"),
            Token::Span(k) => write!(f, "SPAN_{k}"),
            Token::Tonality(t) => write!(f, "TONALITY_{}_{}", t.root, t.mode),
            Token::Sep => f.write_str("SEP"),
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
        }
    }
}

impl FromStr for Token {
    type Err = RefineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RefineError::UnknownToken(s.to_string());
        let number = |rest: &str, lo: u8, hi: u8| -> Result<u8, RefineError> {
            if rest.is_empty()
                || !rest.bytes().all(|b| b.is_ascii_digit())
                || (rest.len() > 1 && rest.starts_with('0'))
            {
                return Err(bad());
            }
            let v: u8 = rest.parse().map_err(|_| bad())?;
            if (lo..=hi).contains(&v) {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        Ok(match s {
            "BAR" => Token::Bar,
            "SEP" => Token::Sep,
            "BOS" => Token::Bos,
            "EOS" => Token::Eos,
            "CAD_NONE" => Token::Cad(Cadence::None),
            "CAD_HALF" => Token::Cad(Cadence::Half),
            "CAD_AUTH" => Token::Cad(Cadence::Authentic),
            _ => {
                if let Some(rest) = s.strip_prefix("POS_") {
                    Token::Pos(number(rest, 0, 15)?)
                } else if let Some(rest) = s.strip_prefix("DUR_") {
                    Token::Dur(number(rest, 1, 16)?)
                } else if let Some(rest) = s.strip_prefix("PITCH_") {
                    Token::Pitch(number(rest, 0, 127)?)
                } else if let Some(rest) = s.strip_prefix("AVGPITCH_") {
                    Token::AvgPitch(number(rest, 0, MAX_AVG_BUCKET)?)
                } else if let Some(rest) = s.strip_prefix("SPAN_") {
                    Token::Span(number(rest, 0, MAX_SPAN_BUCKET)?)
                } else if let Some(rest) = s.strip_prefix("CHORD_") {
                    let (roman, quality) = rest.split_once('_').ok_or_else(bad)?;
                    let degree = Degree::ALL
                        .into_iter()
                        .find(|d| d.roman() == roman)
                        .ok_or_else(bad)?;
                    let quality = match quality {
                        "maj" => ChordQuality::Maj,
                        "min" => ChordQuality::Min,
                        "dim" => ChordQuality::Dim,
                        _ => return Err(bad()),
                    };
                    Token::Chord(degree, quality)
                } else if let Some(rest) = s.strip_prefix("TONALITY_") {
                    let (root, mode) = rest.split_once('_').ok_or_else(bad)?;
                    let mode = match mode {
                        "major" => Mode::Major,
                        "minor" => Mode::Minor,
                        _ => return Err(bad()),
                    };
                    Token::Tonality(Tonality::new(number(root, 0, 11)?, mode))
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Per-phrase control values carried in an `x` stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseControl {
    pub phrase: usize,
    pub avgpitch: u8,
    pub span: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tonality: Option<Tonality>,
}

fn check_note(note: &Note, index: usize) -> Result<(), RefineError> {
    if note.duration == 0 || note.duration > TICKS_PER_BAR {
        return Err(RefineError::Unencodable {
            phrase: index,
            reason: format!("duration {} outside 1..=16", note.duration),
        });
    }
    Ok(())
}

fn bars_of<'a>(phrase: &'a Phrase) -> impl Iterator<Item = (u32, Vec<&'a Note>)> + 'a {
    (0..phrase.length_bars).map(move |b| {
        let lo = b * TICKS_PER_BAR;
        (
            b,
            phrase
                .notes
                .iter()
                .filter(|n| n.onset >= lo && n.onset < lo + TICKS_PER_BAR)
                .collect(),
        )
    })
}

/// Melody body: per bar `BAR`, then `POS DUR PITCH` per note.
pub fn melody_body(phrase: &Phrase, index: usize) -> Result<Vec<Token>, RefineError> {
    let mut out = Vec::new();
    for (_, notes) in bars_of(phrase) {
        out.push(Token::Bar);
        for n in notes {
            check_note(n, index)?;
            out.extend([
                Token::Pos((n.onset % TICKS_PER_BAR) as u8),
                Token::Dur(n.duration as u8),
                Token::Pitch(n.pitch),
            ]);
        }
    }
    Ok(out)
}

/// `BOS` + melody body + `EOS`.
pub fn encode_y(phrase: &Phrase, index: usize) -> Result<Vec<Token>, RefineError> {
    let mut out = vec![Token::Bos];
    out.extend(melody_body(phrase, index)?);
    out.push(Token::Eos);
    Ok(out)
}

/// `BOS AVGPITCH SPAN [TONALITY]`, per bar `BAR` then `POS DUR CHORD` per
/// note, then `CAD` and `EOS`.
pub fn encode_x(
    phrase: &Phrase,
    index: usize,
    control: &PhraseControl,
) -> Result<Vec<Token>, RefineError> {
    let mut out = vec![
        Token::Bos,
        Token::AvgPitch(control.avgpitch.min(MAX_AVG_BUCKET)),
        Token::Span(control.span.min(MAX_SPAN_BUCKET)),
    ];
    if let Some(t) = control.tonality {
        out.push(Token::Tonality(t));
    }
    for (_, notes) in bars_of(phrase) {
        out.push(Token::Bar);
        for n in notes {
            check_note(n, index)?;
            let chord = phrase
                .chord_at(n.onset)
                .ok_or_else(|| RefineError::Unencodable {
                    phrase: index,
                    reason: format!("no chord at tick {}", n.onset),
                })?;
            out.extend([
                Token::Pos((n.onset % TICKS_PER_BAR) as u8),
                Token::Dur(n.duration as u8),
                Token::Chord(chord.degree, chord.quality),
            ]);
        }
    }
    out.push(Token::Cad(phrase.cadence));
    out.push(Token::Eos);
    Ok(out)
}

/// A masked phrase as recovered from its `x` stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub bars: u32,
    /// `(onset, duration, degree, quality)` per note, onsets phrase-relative.
    pub events: Vec<(u32, u32, Degree, ChordQuality)>,
    pub cadence: Cadence,
    pub avgpitch: u8,
    pub span: u8,
    pub tonality: Option<Tonality>,
}

impl Condition {
    /// The `x` stream this condition was parsed from.
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = vec![
            Token::Bos,
            Token::AvgPitch(self.avgpitch),
            Token::Span(self.span),
        ];
        out.extend(self.tonality.map(Token::Tonality));
        let mut events = self.events.iter().peekable();
        for bar in 0..self.bars {
            out.push(Token::Bar);
            while let Some(&&(onset, duration, degree, quality)) = events.peek() {
                if onset / TICKS_PER_BAR != bar {
                    break;
                }
                out.extend([
                    Token::Pos((onset % TICKS_PER_BAR) as u8),
                    Token::Dur(duration as u8),
                    Token::Chord(degree, quality),
                ]);
                events.next();
            }
        }
        out.push(Token::Cad(self.cadence));
        out.push(Token::Eos);
        out
    }
}

/// One `BOS ... EOS` frame of a context.
#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Melody(Vec<Note>, u32),
    Condition(Condition),
}

/// Parsed request context: the global key and one frame per phrase.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub tonality: Option<Tonality>,
    pub frames: Vec<Frame>,
}

struct Cursor<'a> {
    tokens: &'a [Token],
    at: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.at).copied()
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.peek();
        self.at += 1;
        t
    }

    fn fail(&self, expected: &str) -> RefineError {
        RefineError::Malformed {
            at: self.at,
            reason: format!(
                "expected {expected}, found {}",
                self.peek()
                    .map_or("end of stream".to_string(), |t| t.to_string())
            ),
        }
    }
}

/// Parses a melody body (`BAR` / `POS DUR PITCH` tokens) into notes and a
/// bar count.
pub fn parse_melody_body(tokens: &[Token]) -> Result<(Vec<Note>, u32), RefineError> {
    let mut c = Cursor { tokens, at: 0 };
    let notes = melody_notes(&mut c)?;
    if c.at < tokens.len() {
        return Err(c.fail("BAR or POS"));
    }
    Ok(notes)
}

fn melody_notes(c: &mut Cursor<'_>) -> Result<(Vec<Note>, u32), RefineError> {
    let mut notes: Vec<Note> = Vec::new();
    let mut bars = 0u32;
    loop {
        match c.peek() {
            Some(Token::Bar) => {
                c.next();
                bars += 1;
            }
            Some(Token::Pos(p)) if bars > 0 => {
                c.next();
                let Some(Token::Dur(d)) = c.next() else {
                    c.at -= 1;
                    return Err(c.fail("DUR"));
                };
                let Some(Token::Pitch(pitch)) = c.next() else {
                    c.at -= 1;
                    return Err(c.fail("PITCH"));
                };
                let onset = (bars - 1) * TICKS_PER_BAR + p as u32;
                if notes.last().is_some_and(|n| n.end() > onset) {
                    return Err(RefineError::Malformed {
                        at: c.at,
                        reason: "notes overlap".into(),
                    });
                }
                notes.push(Note::new(onset, d as u32, pitch));
            }
            _ => return Ok((notes, bars)),
        }
    }
}

fn condition(c: &mut Cursor<'_>) -> Result<Condition, RefineError> {
    let Some(Token::AvgPitch(avgpitch)) = c.next() else {
        c.at -= 1;
        return Err(c.fail("AVGPITCH"));
    };
    let Some(Token::Span(span)) = c.next() else {
        c.at -= 1;
        return Err(c.fail("SPAN"));
    };
    let tonality = match c.peek() {
        Some(Token::Tonality(t)) => {
            c.next();
            Some(t)
        }
        _ => None,
    };
    let mut events = Vec::new();
    let mut bars = 0u32;
    let cadence = loop {
        match c.next() {
            Some(Token::Bar) => bars += 1,
            Some(Token::Pos(p)) if bars > 0 => {
                let Some(Token::Dur(d)) = c.next() else {
                    c.at -= 1;
                    return Err(c.fail("DUR"));
                };
                let Some(Token::Chord(degree, quality)) = c.next() else {
                    c.at -= 1;
                    return Err(c.fail("CHORD"));
                };
                events.push((
                    (bars - 1) * TICKS_PER_BAR + p as u32,
                    d as u32,
                    degree,
                    quality,
                ));
            }
            Some(Token::Cad(cad)) => break cad,
            _ => {
                c.at -= 1;
                return Err(c.fail("BAR, POS or CAD"));
            }
        }
    };
    Ok(Condition {
        bars,
        events,
        cadence,
        avgpitch,
        span,
        tonality,
    })
}

/// Parses `[TONALITY] BOS ... EOS (SEP BOS ... EOS)*`.
pub fn parse_context(tokens: &[Token]) -> Result<Context, RefineError> {
    let mut c = Cursor { tokens, at: 0 };
    let tonality = match c.peek() {
        Some(Token::Tonality(t)) => {
            c.next();
            Some(t)
        }
        _ => None,
    };
    let mut frames = Vec::new();
    loop {
        if c.next() != Some(Token::Bos) {
            c.at -= 1;
            return Err(c.fail("BOS"));
        }
        let frame = if matches!(c.peek(), Some(Token::AvgPitch(_))) {
            Frame::Condition(condition(&mut c)?)
        } else {
            let (notes, bars) = melody_notes(&mut c)?;
            Frame::Melody(notes, bars)
        };
        if c.next() != Some(Token::Eos) {
            c.at -= 1;
            return Err(c.fail("EOS"));
        }
        frames.push(frame);
        match c.next() {
            None => break,
            Some(Token::Sep) => continue,
            Some(_) => {
                c.at -= 1;
                return Err(c.fail("SEP or end of stream"));
            }
        }
    }
    Ok(Context { tonality, frames })
}
