//! Musical-form notation.
//!
//! ```text
//! form    := section+
//! section := UPPER "'"* "(" phrase ("," phrase)* ")"
//! phrase  := LOWER digit+ "'"*
//! ```
//!
//! Whitespace is ignored everywhere. `A(a1,a1)B(b1,b2)` is a two-section
//! form; `A(a1)A'(a1')A''(a1'')` is a theme with two variations.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::PhraseLabel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax {
        offset: usize,
        expected: &'static str,
    },
    #[error("phrase {phrase} at byte {offset} does not belong to section {section}")]
    LetterMismatch {
        offset: usize,
        section: char,
        phrase: String,
    },
    #[error("empty section {section} at byte {offset}")]
    EmptySection { offset: usize, section: char },
    #[error("phrase index at byte {offset} must be a positive integer")]
    BadIndex { offset: usize },
    #[error("empty form")]
    Empty,
    #[error("unknown form preset '{0}'")]
    UnknownPreset(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SectionSpec {
    pub letter: char,
    pub primes: u32,
    pub phrases: Vec<PhraseLabel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FormSpec {
    pub sections: Vec<SectionSpec>,
}

impl FormSpec {
    /// Every phrase label in order.
    pub fn labels(&self) -> Vec<PhraseLabel> {
        self.sections
            .iter()
            .flat_map(|s| s.phrases.iter().copied())
            .collect()
    }

    pub fn phrase_count(&self) -> usize {
        self.sections.iter().map(|s| s.phrases.len()).sum()
    }

    pub fn validate(&self) -> Result<(), FormError> {
        if self.sections.is_empty() {
            return Err(FormError::Empty);
        }
        for section in &self.sections {
            if section.phrases.is_empty() {
                return Err(FormError::EmptySection {
                    offset: 0,
                    section: section.letter,
                });
            }
            for label in &section.phrases {
                if label.letter != section.letter.to_ascii_lowercase() || label.index == 0 {
                    return Err(FormError::LetterMismatch {
                        offset: 0,
                        section: section.letter,
                        phrase: label.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for section in &self.sections {
            write!(f, "{}", section.letter)?;
            for _ in 0..section.primes {
                f.write_str("'")?;
            }
            f.write_str("(")?;
            for (i, label) in section.phrases.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{label}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FormSpec {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_form(s)
    }
}

impl Serialize for FormSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FormSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_form(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8, expected: &'static str) -> Result<(), FormError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(expected))
        }
    }

    fn syntax(&self, expected: &'static str) -> FormError {
        FormError::Syntax {
            offset: self.pos,
            expected,
        }
    }

    fn primes(&mut self) -> u32 {
        let mut count = 0;
        while self.peek() == Some(b'\'') {
            self.pos += 1;
            count += 1;
        }
        count
    }

    fn phrase(&mut self) -> Result<(usize, PhraseLabel), FormError> {
        let start = match self.peek() {
            Some(b) if b.is_ascii_lowercase() => self.pos,
            _ => return Err(self.syntax("lowercase phrase letter")),
        };
        let letter = self.bytes[start] as char;
        self.pos += 1;
        let digits_at = match self.peek() {
            Some(b) if b.is_ascii_digit() => self.pos,
            _ => return Err(self.syntax("phrase number")),
        };
        let mut index: u32 = 0;
        while let Some(b) = self.bytes.get(self.pos).copied().filter(u8::is_ascii_digit) {
            index = index
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u32))
                .ok_or(FormError::BadIndex { offset: digits_at })?;
            self.pos += 1;
        }
        if index == 0 {
            return Err(FormError::BadIndex { offset: digits_at });
        }
        let primes = self.primes();
        Ok((start, PhraseLabel::new(letter, index, primes)))
    }

    fn section(&mut self) -> Result<SectionSpec, FormError> {
        let start = match self.peek() {
            Some(b) if b.is_ascii_uppercase() => self.pos,
            _ => return Err(self.syntax("uppercase section letter")),
        };
        let letter = self.bytes[start] as char;
        self.pos += 1;
        let primes = self.primes();
        self.expect(b'(', "'('")?;
        if self.peek() == Some(b')') {
            return Err(FormError::EmptySection {
                offset: start,
                section: letter,
            });
        }
        let mut phrases = Vec::new();
        loop {
            let (at, label) = self.phrase()?;
            if label.letter != letter.to_ascii_lowercase() {
                return Err(FormError::LetterMismatch {
                    offset: at,
                    section: letter,
                    phrase: label.to_string(),
                });
            }
            phrases.push(label);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.syntax("',' or ')'")),
            }
        }
        Ok(SectionSpec {
            letter,
            primes,
            phrases,
        })
    }
}

pub fn parse_form(text: &str) -> Result<FormSpec, FormError> {
    let mut parser = Parser::new(text);
    if parser.peek().is_none() {
        return Err(FormError::Empty);
    }
    let mut sections = Vec::new();
    while parser.peek().is_some() {
        sections.push(parser.section()?);
    }
    Ok(FormSpec { sections })
}

pub fn render_form(form: &FormSpec) -> String {
    form.to_string()
}

/// Parses a single label such as `b2'`.
pub fn parse_phrase_label(text: &str) -> Result<PhraseLabel, FormError> {
    let mut parser = Parser::new(text);
    let (_, label) = parser.phrase()?;
    if parser.peek().is_some() {
        return Err(parser.syntax("end of label"));
    }
    Ok(label)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetKind {
    VerseChorus,
    Rondo,
    Variational,
    Sonata,
}

impl PresetKind {
    pub const ALL: [PresetKind; 4] = [
        PresetKind::VerseChorus,
        PresetKind::Rondo,
        PresetKind::Variational,
        PresetKind::Sonata,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetKind::VerseChorus => "verse_chorus",
            PresetKind::Rondo => "rondo",
            PresetKind::Variational => "variational",
            PresetKind::Sonata => "sonata",
        }
    }

    fn layouts(self) -> &'static [&'static str] {
        match self {
            PresetKind::VerseChorus => &[
                "A(a1,a2)A(a1,a2)B(b1,b2)A(a1,a2)A(a1,a2)B(b1,b2)",
                "A(a1,a2)B(b1,b2)A(a1,a2)",
                "A(a1,a2)A(a1,a2)B(b1,b2)B(b1,b2)",
            ],
            PresetKind::Rondo => &[
                "A(a1,a2)B(b1,b2)A(a1,a2)C(c1,c2)A(a1,a2)",
                "A(a1,a2)B(b1,b2)A(a1,a2)C(c1,c2)A(a1,a2)D(d1,d2)A(a1,a2)",
            ],
            PresetKind::Variational => {
                &["A(a1)A'(a1')A''(a1'')", "A(a1,a2)A'(a1',a2')A''(a1'',a2'')"]
            }
            PresetKind::Sonata => &["A(a1,a2)B(b1,b1')A'(a1,a2')"],
        }
    }

    pub fn variant_count(self) -> usize {
        self.layouts().len()
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PresetKind {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FormError::UnknownPreset(s.to_string()))
    }
}

/// One layout from a form family. `variant` wraps around the family size.
///
/// | kind | variants |
/// |---|---|
/// | verse_chorus | AABAAB, ABA, AABB |
/// | rondo | ABACA, ABACADA |
/// | variational | A A' A'' with one or two phrases |
/// | sonata | A B A' |
pub fn preset_form(kind: PresetKind, variant: usize) -> FormSpec {
    let layouts = kind.layouts();
    parse_form(layouts[variant % layouts.len()]).expect("preset layouts are valid")
}

/// Preset with a randomly chosen variant.
pub fn random_preset_form<R: Rng + ?Sized>(kind: PresetKind, rng: &mut R) -> FormSpec {
    preset_form(kind, rng.gen_range(0..kind.variant_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_binary_form() {
        let form = parse_form("A(a1,a1)B(b1,b2)").unwrap();
        assert_eq!(form.sections.len(), 2);
        assert_eq!(form.sections[0].letter, 'A');
        assert_eq!(
            form.sections[0].phrases,
            vec![PhraseLabel::new('a', 1, 0), PhraseLabel::new('a', 1, 0)]
        );
        assert_eq!(
            form.sections[1].phrases,
            vec![PhraseLabel::new('b', 1, 0), PhraseLabel::new('b', 2, 0)]
        );
    }

    #[test]
    fn parses_minimal_and_primes() {
        let form = parse_form("A(a1)").unwrap();
        assert_eq!(form.phrase_count(), 1);

        let case = parse_form("A(a1,a1',a1'')B(b1,b1',b1'')A(a1,a1,a1)").unwrap();
        assert_eq!(case.sections.len(), 3);
        assert_eq!(case.phrase_count(), 9);
        assert_eq!(case.sections[0].phrases[2].primes, 2);
        assert_eq!(case.sections[1].phrases[1].primes, 1);
    }

    #[test]
    fn whitespace_is_ignored() {
        let form = parse_form(" A ( a1 , a1 ' ) \n B(b1) ").unwrap();
        assert_eq!(form.to_string(), "A(a1,a1')B(b1)");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_form("A(b1)"),
            Err(FormError::LetterMismatch {
                offset: 2,
                section: 'A',
                ..
            })
        ));
        assert!(matches!(
            parse_form("A()"),
            Err(FormError::EmptySection { .. })
        ));
        assert!(matches!(parse_form(""), Err(FormError::Empty)));
        assert!(matches!(
            parse_form("A(a1"),
            Err(FormError::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse_form("A(a)"),
            Err(FormError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse_form("A(a0)"),
            Err(FormError::BadIndex { .. })
        ));
        assert!(matches!(
            parse_form("A(a99999999999)"),
            Err(FormError::BadIndex { .. })
        ));
        assert!(matches!(
            parse_form("a(a1)"),
            Err(FormError::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn render_round_trips_examples() {
        for text in [
            "A(a1)",
            "A(a1,a1)B(b1,b2)",
            "A(a1,a1',a1'')B(b1,b1',b1'')A(a1,a1,a1)",
        ] {
            assert_eq!(render_form(&parse_form(text).unwrap()), text);
        }
    }

    #[test]
    fn presets() {
        let aba = preset_form(PresetKind::VerseChorus, 1);
        assert_eq!(aba, parse_form("A(a1,a2)B(b1,b2)A(a1,a2)").unwrap());

        let var = preset_form(PresetKind::Variational, 0);
        let letters: Vec<_> = var
            .sections
            .iter()
            .map(|s| (s.letter, s.primes, s.phrases.len()))
            .collect();
        assert_eq!(letters, vec![('A', 0, 1), ('A', 1, 1), ('A', 2, 1)]);

        let rondo = preset_form(PresetKind::Rondo, 0);
        let letters: String = rondo.sections.iter().map(|s| s.letter).collect();
        assert_eq!(letters, "ABACA");
        let full: String = preset_form(PresetKind::Rondo, 1)
            .sections
            .iter()
            .map(|s| s.letter)
            .collect();
        assert_eq!(full, "ABACADA");

        for kind in PresetKind::ALL {
            for v in 0..kind.variant_count() {
                let form = preset_form(kind, v);
                form.validate().unwrap();
                if kind == PresetKind::VerseChorus {
                    assert!(form.sections.iter().all(|s| s.phrases.len() == 2));
                }
            }
            assert_eq!(kind.name().parse::<PresetKind>().unwrap(), kind);
        }
        assert!("fugue".parse::<PresetKind>().is_err());
    }

    fn arb_form() -> impl Strategy<Value = FormSpec> {
        let section = (
            0u8..26,
            0u32..3,
            prop::collection::vec((1u32..30, 0u32..4), 1..5),
        )
            .prop_map(|(l, primes, phrases)| {
                let letter = (b'A' + l) as char;
                SectionSpec {
                    letter,
                    primes,
                    phrases: phrases
                        .into_iter()
                        .map(|(i, p)| PhraseLabel::new(letter.to_ascii_lowercase(), i, p))
                        .collect(),
                }
            });
        prop::collection::vec(section, 1..6).prop_map(|sections| FormSpec { sections })
    }

    proptest! {
        #[test]
        fn parser_is_total(text in "\\PC{0,40}") {
            if let Ok(form) = parse_form(&text) {
                prop_assert!(form.validate().is_ok());
            }
        }

        #[test]
        fn parser_is_total_on_form_alphabet(text in "[AaBb12(),' ]{0,30}") {
            if let Ok(form) = parse_form(&text) {
                prop_assert!(form.validate().is_ok());
                prop_assert_eq!(parse_form(&render_form(&form)).unwrap(), form);
            }
        }

        #[test]
        fn render_parse_round_trip(form in arb_form()) {
            prop_assert_eq!(parse_form(&render_form(&form)).unwrap(), form);
        }
    }
}
