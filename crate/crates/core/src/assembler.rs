//! The expert system end to end: motifs become phrases, phrases fill
//! sections, sections follow the form.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::similarity;
use crate::development::{
    close_interior_gaps, default_plan, develop_phrase, finetune, motif_bars_for, seal_phrase_end,
    split_long_notes, DevelopmentError,
};
use crate::form::{FormError, FormSpec};
use crate::harmony::{
    chords_in_span, CadenceRules, HarmonyError, NGramTable, ProgressionGenerator,
};
use crate::motif::{
    borrow_cross_section, derive_motif, generate_motif, motif_from_rhythm, ContrastSpec,
    DeriveMode, Motif, MotifError,
};
use crate::rhythm::{adjust_density, generate_rhythm, Density};
use crate::types::{
    Cadence, Melody, Meta, ModelError, Phrase, PhraseLabel, Section, TICKS_PER_BAR,
};

/// Target similarity band for a varied phrase against its base.
pub const VARIATION_BAND: std::ops::Range<f64> = 0.5..0.9;
const VARY_ATTEMPTS: usize = 50;
const VARY_ROUNDS: usize = 20;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("phrases of {0} bars are too short to develop; use at least 2")]
    PhraseBars(u32),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Meta(#[from] ModelError),
    #[error(transparent)]
    Harmony(#[from] HarmonyError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    Development(#[from] DevelopmentError),
}

/// Contrast applied when a section's material is first written, plus the
/// bucket offsets its phrases request from a refiner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDefaults {
    pub contrast: ContrastSpec,
    pub avg_delta: i8,
    pub span_delta: i8,
}

impl SectionDefaults {
    pub const NEUTRAL: SectionDefaults = SectionDefaults {
        contrast: ContrastSpec::NEUTRAL,
        avg_delta: 0,
        span_delta: 0,
    };
}

/// Defaults per section. The opening section and every `A` section are
/// neutral. `B`, `D`, `F`, ... lift the register and thicken the rhythm;
/// `C`, `E`, ... lower it and thin the rhythm.
pub fn section_contrast_defaults(section_index: usize, letter: char) -> SectionDefaults {
    let offset = (letter.to_ascii_uppercase() as u8).wrapping_sub(b'A');
    if section_index == 0 || offset == 0 || offset >= 26 {
        return SectionDefaults::NEUTRAL;
    }
    if offset % 2 == 1 {
        SectionDefaults {
            contrast: ContrastSpec {
                pitch_shift: 5,
                density: Density::Increase,
            },
            avg_delta: 1,
            span_delta: 1,
        }
    } else {
        SectionDefaults {
            contrast: ContrastSpec {
                pitch_shift: -3,
                density: Density::Decrease,
            },
            avg_delta: -1,
            span_delta: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Assembler {
    pub progressions: ProgressionGenerator,
    /// Per-letter replacements for [`section_contrast_defaults`].
    pub overrides: BTreeMap<char, SectionDefaults>,
    pub borrow_probability: f64,
    pub half_cadence_probability: f64,
}

impl Default for Assembler {
    fn default() -> Self {
        Assembler {
            progressions: ProgressionGenerator::default(),
            overrides: BTreeMap::new(),
            borrow_probability: 0.5,
            half_cadence_probability: 0.6,
        }
    }
}

impl Assembler {
    pub fn new(table: NGramTable, rules: CadenceRules) -> Self {
        Assembler {
            progressions: ProgressionGenerator::new(table, rules),
            ..Assembler::default()
        }
    }

    /// Defaults for the section at `index` in `form`, keyed by the first
    /// section carrying the same letter.
    pub fn section_defaults(&self, form: &FormSpec, index: usize) -> SectionDefaults {
        let letter = form.sections[index].letter;
        if let Some(d) = self.overrides.get(&letter) {
            return *d;
        }
        let first = form
            .sections
            .iter()
            .position(|s| s.letter == letter)
            .unwrap_or(index);
        section_contrast_defaults(first, letter)
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        form: &FormSpec,
        meta: &Meta,
        phrase_bars: u32,
        rng: &mut R,
    ) -> Result<Melody, AssemblyError> {
        form.validate()?;
        meta.validate()?;
        let motif_bars = motif_bars_for(phrase_bars);
        if phrase_bars < 2 {
            return Err(AssemblyError::PhraseBars(phrase_bars));
        }
        let cadences = self.plan_cadences(form, rng);
        let mut state = State {
            phrases: BTreeMap::new(),
            motifs: BTreeMap::new(),
        };
        let mut sections = Vec::with_capacity(form.sections.len());
        for (index, spec) in form.sections.iter().enumerate() {
            let defaults = self.section_defaults(form, index);
            let mut phrases = Vec::with_capacity(spec.phrases.len());
            for &label in &spec.phrases {
                let base = label.base();
                if !state.phrases.contains_key(&base) {
                    let phrase = self.new_phrase(
                        base,
                        cadences[&base],
                        defaults.contrast,
                        meta,
                        phrase_bars,
                        motif_bars,
                        &mut state,
                        rng,
                    )?;
                    state.phrases.insert(base, phrase);
                }
                if !state.phrases.contains_key(&label) {
                    let mut varied = vary_phrase(&state.phrases[&base], meta, rng);
                    varied.label = label;
                    state.phrases.insert(label, varied);
                }
                phrases.push(state.phrases[&label].clone());
            }
            sections.push(Section {
                letter: spec.letter,
                primes: spec.primes,
                phrases,
            });
        }
        Ok(Melody {
            meta: meta.clone(),
            sections,
        })
    }

    /// Authentic for any label that closes a section somewhere; otherwise
    /// half with probability `half_cadence_probability`.
    fn plan_cadences<R: Rng + ?Sized>(
        &self,
        form: &FormSpec,
        rng: &mut R,
    ) -> BTreeMap<PhraseLabel, Cadence> {
        let mut finals = BTreeMap::new();
        for section in &form.sections {
            if let Some(last) = section.phrases.last() {
                finals.insert(last.base(), ());
            }
        }
        let mut out = BTreeMap::new();
        for label in form.labels() {
            let base = label.base();
            if out.contains_key(&base) {
                continue;
            }
            let cadence =
                if finals.contains_key(&base) || !rng.gen_bool(self.half_cadence_probability) {
                    Cadence::Authentic
                } else {
                    Cadence::Half
                };
            out.insert(base, cadence);
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn new_phrase<R: Rng + ?Sized>(
        &self,
        label: PhraseLabel,
        cadence: Cadence,
        contrast: ContrastSpec,
        meta: &Meta,
        phrase_bars: u32,
        motif_bars: u32,
        state: &mut State,
        rng: &mut R,
    ) -> Result<Phrase, AssemblyError> {
        let chords = self
            .progressions
            .generate(phrase_bars, 1, cadence, meta.mode, rng)?;
        let motif_chords = chords_in_span(&chords, 0, motif_bars * TICKS_PER_BAR);
        let letter = label.letter;
        let motif = match state.motifs.get(&letter) {
            Some(first) => {
                let mode = if rng.gen_bool(0.7) {
                    DeriveMode::BorrowRhythm
                } else {
                    DeriveMode::Copy
                };
                derive_motif(first, mode, &motif_chords, meta, rng)?
            }
            None => {
                let sources: Vec<&Phrase> = state
                    .phrases
                    .iter()
                    .filter(|(l, _)| l.letter != letter && !l.is_primed())
                    .map(|(_, p)| p)
                    .collect();
                let motif = if !sources.is_empty() && rng.gen_bool(self.borrow_probability) {
                    let source = sources[rng.gen_range(0..sources.len())];
                    borrow_cross_section(source, contrast, &motif_chords, motif_bars, meta, rng)?
                } else if contrast.is_neutral() {
                    generate_motif(meta, &motif_chords, motif_bars, rng)?
                } else {
                    let window = meta.shifted_window(contrast.pitch_shift);
                    let rhythm =
                        adjust_density(&generate_rhythm(motif_bars, rng), contrast.density, rng);
                    motif_from_rhythm(&window, &motif_chords, rhythm, rng)?
                };
                state.motifs.insert(letter, motif.clone());
                motif
            }
        };
        let plan = default_plan(phrase_bars, motif_bars, rng)?;
        let mut phrase = develop_phrase(&motif, &plan, &chords, label, cadence, meta, rng)?;
        seal_phrase_end(&mut phrase, meta);
        Ok(phrase)
    }
}

struct State {
    phrases: BTreeMap<PhraseLabel, Phrase>,
    motifs: BTreeMap<char, Motif>,
}

pub fn generate_melody<R: Rng + ?Sized>(
    form: &FormSpec,
    meta: &Meta,
    phrase_bars: u32,
    rng: &mut R,
) -> Result<Melody, AssemblyError> {
    Assembler::default().generate(form, meta, phrase_bars, rng)
}

/// A variation of `phrase`: one to three fine-tuning edits per four bars,
/// repeated until similarity to the original falls in [`VARIATION_BAND`].
/// The final note is never edited, so the cadence and phrase-end rest
/// survive. After 50 failed attempts the closest attempt is returned.
pub fn vary_phrase<R: Rng + ?Sized>(phrase: &Phrase, meta: &Meta, rng: &mut R) -> Phrase {
    let blocks = phrase.length_bars.div_ceil(4).max(1);
    let score = |notes: &[crate::types::Note]| {
        let candidate = Phrase {
            notes: notes.to_vec(),
            ..phrase.clone()
        };
        similarity(&candidate, phrase).unwrap_or(0.0)
    };
    let distance = |s: f64| {
        if VARIATION_BAND.contains(&s) {
            0.0
        } else if s < VARIATION_BAND.start {
            VARIATION_BAND.start - s
        } else {
            s - VARIATION_BAND.end + 1e-9
        }
    };
    let mut best: Option<(f64, Vec<crate::types::Note>)> = None;
    for _ in 0..VARY_ATTEMPTS {
        let mut notes = phrase.notes.clone();
        let mut s = 1.0;
        for _ in 0..VARY_ROUNDS {
            let edits: usize = (0..blocks).map(|_| rng.gen_range(1..=3)).sum();
            let next = finetune(&notes, edits, 1, &phrase.chords, meta, rng);
            if next == notes {
                break;
            }
            notes = next;
            s = score(&notes);
            if s < VARIATION_BAND.end {
                break;
            }
        }
        if best
            .as_ref()
            .is_none_or(|(b, _)| distance(s) < distance(*b))
        {
            best = Some((s, notes));
        }
        if best
            .as_ref()
            .is_some_and(|(b, _)| VARIATION_BAND.contains(b))
        {
            break;
        }
    }
    let (s, mut notes) = best.unwrap_or((1.0, phrase.notes.clone()));
    if !VARIATION_BAND.contains(&s) {
        log::warn!(
            "variation of {} has similarity {s:.3}, outside the target band",
            phrase.label
        );
    }
    close_interior_gaps(&mut notes);
    split_long_notes(&mut notes);
    Phrase {
        notes,
        ..phrase.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{detect_boundaries, form_accuracy};
    use crate::form::{parse_form, preset_form, PresetKind};
    use crate::harmony::{validate_progression, Degree, HarmonicFunction};
    use crate::types::total_bars;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn figure_form() {
        let form = parse_form("A(a1,a1)B(b1,b2)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let melody = generate_melody(&form, &Meta::default(), 8, &mut rng).unwrap();
        melody.validate().unwrap();
        assert_eq!(total_bars(&melody), 32);
        assert_eq!(
            melody.phrase(0).unwrap().notes,
            melody.phrase(1).unwrap().notes
        );
        assert_eq!(melody.form(), form);
        assert_eq!(form_accuracy(&melody, &form), Ok(1.0));
    }

    #[test]
    fn single_phrase_is_authentic() {
        let form = parse_form("A(a1)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let melody = generate_melody(&form, &Meta::default(), 4, &mut rng).unwrap();
        let phrase = melody.phrase(0).unwrap();
        assert_eq!(phrase.cadence, Cadence::Authentic);
        assert!(validate_progression(&phrase.chords, Cadence::Authentic).is_empty());
    }

    #[test]
    fn case_study_form() {
        let form = parse_form("A(a1,a1',a1'')B(b1,b1',b1'')A(a1,a1,a1)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let melody = generate_melody(&form, &Meta::default(), 4, &mut rng).unwrap();
        assert_eq!(melody.sections.len(), 3);
        assert_eq!(melody.phrase_count(), 9);
        let last = &melody.sections[2].phrases;
        assert!(last.iter().all(|p| p.notes == last[0].notes));
        assert_eq!(last[0].notes, melody.sections[0].phrases[0].notes);
        for (base, varied) in [(0, 1), (0, 2), (3, 4), (3, 5)] {
            let s =
                similarity(melody.phrase(base).unwrap(), melody.phrase(varied).unwrap()).unwrap();
            assert!(VARIATION_BAND.contains(&s), "similarity {s}");
        }
    }

    #[test]
    fn deterministic_and_structurally_sound() {
        for kind in PresetKind::ALL {
            for seed in 0..5 {
                let form = preset_form(kind, seed as usize);
                let meta = Meta::default();
                let a =
                    generate_melody(&form, &meta, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let b =
                    generate_melody(&form, &meta, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert_eq!(a, b);
                a.validate().unwrap();
                for section in &a.sections {
                    let last = section.phrases.last().unwrap();
                    let n = last.chords.len();
                    assert_eq!(last.chords[n - 1].degree, Degree::I);
                    assert_eq!(last.chords[n - 2].function, HarmonicFunction::D);
                }
                let notes = a.absolute_notes();
                let boundaries = detect_boundaries(&notes).unwrap();
                let mut joints = Vec::new();
                let mut count = 0;
                for p in a.phrases() {
                    count += p.notes.len();
                    joints.push(count - 1);
                }
                joints.pop();
                assert_eq!(boundaries, joints, "{kind:?} seed {seed}");
            }
        }
    }

    #[test]
    fn contrast_defaults() {
        assert_eq!(section_contrast_defaults(0, 'A'), SectionDefaults::NEUTRAL);
        let b = section_contrast_defaults(1, 'B');
        assert_eq!(b.contrast.pitch_shift, 5);
        assert_eq!(b.contrast.density, Density::Increase);
        assert!(b.avg_delta > 0 && b.span_delta > 0);
        assert_eq!(section_contrast_defaults(2, 'A'), SectionDefaults::NEUTRAL);
        let mut asm = Assembler::default();
        asm.overrides.insert('B', SectionDefaults::NEUTRAL);
        let form = parse_form("A(a1)B(b1)").unwrap();
        assert_eq!(asm.section_defaults(&form, 1), SectionDefaults::NEUTRAL);
    }

    #[test]
    fn vary_keeps_length_cadence_and_end() {
        let form = parse_form("A(a1,a2)").unwrap();
        let meta = Meta::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let melody = generate_melody(&form, &meta, 8, &mut rng).unwrap();
        let base = melody.phrase(0).unwrap();
        for _ in 0..20 {
            let v = vary_phrase(base, &meta, &mut rng);
            assert_eq!(v.length_bars, base.length_bars);
            assert_eq!(v.cadence, base.cadence);
            assert_eq!(v.notes.last(), base.notes.last());
            v.validate().unwrap();
        }
    }

    #[test]
    fn rejects_one_bar_phrases() {
        let form = parse_form("A(a1)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_melody(&form, &Meta::default(), 1, &mut rng),
            Err(AssemblyError::PhraseBars(1))
        ));
    }
}
