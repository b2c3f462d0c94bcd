//! Diatonic triads, harmonic functions, and the chord-progression grammar.
//!
//! Progressions flow T → S → D → T. Chords of the same function may follow
//! one another; D → S and S → T are retrogressions and are rejected.

use std::collections::BTreeMap;
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Cadence, Mode, Tonality, TICKS_PER_BAR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonyError {
    #[error("a progression needs at least one bar")]
    NoBars,
    #[error("harmonic rhythm must be 1 or 2 chords per bar, got {0}")]
    HarmonicRhythm(u32),
    #[error("an authentic cadence needs at least two chords, got {0}")]
    CadenceTooShort(u32),
    #[error("no chord sequence satisfies the n-gram table and cadence at position {0}")]
    Infeasible(usize),
    #[error("n-gram table line {line}: {reason}")]
    Table { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Degree {
    I = 1,
    II,
    III,
    IV,
    V,
    VI,
    VII,
}

impl Degree {
    pub const ALL: [Degree; 7] = [
        Degree::I,
        Degree::II,
        Degree::III,
        Degree::IV,
        Degree::V,
        Degree::VI,
        Degree::VII,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV", "V", "VI", "VII"][self as usize - 1]
    }

    /// Root of the diatonic triad on this degree, in semitones above the tonic.
    /// Minor keys take the leading-tone triad from harmonic minor.
    pub fn root_offset(self, mode: Mode) -> u8 {
        match (mode, self) {
            (Mode::Minor, Degree::VII) => 11,
            _ => mode.scale_offsets()[self as usize - 1],
        }
    }

    pub fn diatonic_quality(self, mode: Mode) -> ChordQuality {
        use ChordQuality::*;
        use Degree::*;
        match mode {
            Mode::Major => match self {
                I | IV | V => Maj,
                II | III | VI => Min,
                VII => Dim,
            },
            Mode::Minor => match self {
                III | V | VI => Maj,
                I | IV => Min,
                II | VII => Dim,
            },
        }
    }
}

impl std::str::FromStr for Degree {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim_end_matches(['°', 'o']).to_ascii_uppercase();
        Degree::ALL
            .into_iter()
            .find(|d| d.roman() == trimmed)
            .ok_or_else(|| format!("'{s}' is not a scale degree I-VII"))
    }
}

impl Serialize for Degree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.roman())
    }
}

impl<'de> Deserialize<'de> for Degree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
}

impl ChordQuality {
    pub fn intervals(self) -> [u8; 3] {
        match self {
            ChordQuality::Maj => [0, 4, 7],
            ChordQuality::Min => [0, 3, 7],
            ChordQuality::Dim => [0, 3, 6],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HarmonicFunction {
    T,
    S,
    D,
}

impl fmt::Display for HarmonicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Function table; identical by degree number in major and minor.
pub fn harmonic_function(degree: Degree, _mode: Mode) -> HarmonicFunction {
    match degree {
        Degree::I | Degree::III | Degree::VI => HarmonicFunction::T,
        Degree::II | Degree::IV => HarmonicFunction::S,
        Degree::V | Degree::VII => HarmonicFunction::D,
    }
}

/// Grammar check for a single chord-to-chord move.
pub fn transition_allowed(from: Degree, to: Degree) -> bool {
    use HarmonicFunction::*;
    if from == to {
        return false;
    }
    let (a, b) = (
        harmonic_function(from, Mode::Major),
        harmonic_function(to, Mode::Major),
    );
    a == b || matches!((a, b), (T, S) | (T, D) | (S, D) | (D, T))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordEvent {
    pub degree: Degree,
    pub quality: ChordQuality,
    pub function: HarmonicFunction,
    pub onset: u32,
    pub duration: u32,
}

impl ChordEvent {
    pub fn diatonic(degree: Degree, mode: Mode, onset: u32, duration: u32) -> Self {
        ChordEvent {
            degree,
            quality: degree.diatonic_quality(mode),
            function: harmonic_function(degree, mode),
            onset,
            duration,
        }
    }

    pub fn covers(&self, tick: u32) -> bool {
        tick >= self.onset && tick < self.onset + self.duration
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }

    /// Pitch classes of the triad realised in `key`.
    pub fn pitch_classes(&self, key: Tonality) -> [u8; 3] {
        let root = (key.root + self.degree.root_offset(key.mode)) % 12;
        self.quality.intervals().map(|i| (root + i) % 12)
    }

    pub fn is_chord_tone(&self, pitch: u8, key: Tonality) -> bool {
        self.pitch_classes(key).contains(&(pitch % 12))
    }

    pub fn same_harmony(&self, other: &ChordEvent) -> bool {
        self.degree == other.degree && self.quality == other.quality
    }
}

impl fmt::Display for ChordEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.quality {
            ChordQuality::Maj => f.write_str(self.degree.roman()),
            ChordQuality::Min => f.write_str(&self.degree.roman().to_lowercase()),
            ChordQuality::Dim => write!(f, "{}°", self.degree.roman().to_lowercase()),
        }
    }
}

/// Chords covering `[start, start + len)`, clipped and re-based to tick 0.
pub fn chords_in_span(chords: &[ChordEvent], start: u32, len: u32) -> Vec<ChordEvent> {
    let end = start + len;
    chords
        .iter()
        .filter(|c| c.onset < end && c.end() > start)
        .map(|c| {
            let onset = c.onset.max(start);
            let stop = c.end().min(end);
            ChordEvent {
                onset: onset - start,
                duration: stop - onset,
                ..*c
            }
        })
        .collect()
}

/// Bigram weights over degree pairs. Only grammar-allowed pairs are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramTable {
    weights: BTreeMap<(Degree, Degree), f64>,
}

/// Loops the built-in weights are seeded from.
const POP_LOOPS: [[Degree; 4]; 4] = {
    use Degree::*;
    [
        [I, V, VI, IV],
        [I, VI, IV, V],
        [VI, IV, I, V],
        [I, IV, V, I],
    ]
};

impl NGramTable {
    /// Weight 1 for every allowed move, plus 3 for each occurrence of the
    /// move inside one of the pop loops (wrap-around excluded).
    pub fn builtin() -> Self {
        let mut weights = BTreeMap::new();
        for &a in &Degree::ALL {
            for &b in &Degree::ALL {
                if transition_allowed(a, b) {
                    weights.insert((a, b), 1.0);
                }
            }
        }
        for progression in POP_LOOPS {
            for pair in progression.windows(2) {
                if let Some(w) = weights.get_mut(&(pair[0], pair[1])) {
                    *w += 3.0;
                }
            }
        }
        NGramTable { weights }
    }

    pub fn order(&self) -> usize {
        2
    }

    pub fn weight(&self, from: Degree, to: Degree) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Degree, Degree, f64)> + '_ {
        self.weights.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    /// Applies `DEGREE DEGREE WEIGHT` lines on top of this table. Blank lines
    /// and `#` comments are skipped.
    pub fn with_overrides(mut self, text: &str) -> Result<Self, HarmonyError> {
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| HarmonyError::Table {
                line: number + 1,
                reason,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [from, to, weight] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            let from: Degree = from.parse().map_err(err)?;
            let to: Degree = to.parse().map_err(err)?;
            let weight: f64 = weight
                .parse()
                .map_err(|_| err(format!("'{weight}' is not a number")))?;
            if !transition_allowed(from, to) {
                return Err(err(format!(
                    "{} -> {} is not a grammar transition",
                    from.roman(),
                    to.roman()
                )));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(err("weights must be positive".into()));
            }
            self.weights.insert((from, to), weight);
        }
        Ok(self)
    }
}

impl Default for NGramTable {
    fn default() -> Self {
        NGramTable::builtin()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Forbidden {
        at: usize,
        from: HarmonicFunction,
        to: HarmonicFunction,
    },
    Repeated {
        at: usize,
    },
    FunctionMismatch {
        at: usize,
    },
    TooShort {
        at: usize,
    },
    Discontinuous {
        at: usize,
    },
    Cadence {
        expected: Cadence,
        found: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Forbidden { from, to, .. } => write!(f, "{from}→{to} forbidden"),
            Violation::Repeated { at } => write!(f, "chord {at} repeats its predecessor"),
            Violation::FunctionMismatch { at } => write!(f, "chord {at} has the wrong function"),
            Violation::TooShort { at } => write!(f, "chord {at} is shorter than a quarter note"),
            Violation::Discontinuous { at } => {
                write!(f, "chord {at} does not start where the previous ends")
            }
            Violation::Cadence { expected, found } => {
                write!(f, "expected {expected:?} cadence, progression ends {found}")
            }
        }
    }
}

/// How a half cadence ends. The standard reading lands on the dominant; the
/// literal alternative lands on the tonic chord.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CadenceRules {
    pub half_cadence_on_tonic: bool,
}

pub fn validate_progression(chords: &[ChordEvent], expected: Cadence) -> Vec<Violation> {
    validate_progression_with(chords, expected, CadenceRules::default())
}

pub fn validate_progression_with(
    chords: &[ChordEvent],
    expected: Cadence,
    rules: CadenceRules,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (i, chord) in chords.iter().enumerate() {
        if chord.function != harmonic_function(chord.degree, Mode::Major) {
            violations.push(Violation::FunctionMismatch { at: i });
        }
        if chord.duration < 4 {
            violations.push(Violation::TooShort { at: i });
        }
    }
    for (i, pair) in chords.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.onset != a.end() {
            violations.push(Violation::Discontinuous { at: i + 1 });
        }
        if a.degree == b.degree {
            violations.push(Violation::Repeated { at: i + 1 });
        } else if !transition_allowed(a.degree, b.degree) {
            violations.push(Violation::Forbidden {
                at: i + 1,
                from: a.function,
                to: b.function,
            });
        }
    }
    let ending: Vec<String> = chords
        .iter()
        .rev()
        .take(2)
        .rev()
        .map(|c| c.to_string())
        .collect();
    let last = chords.last();
    let ok = match expected {
        Cadence::None => true,
        Cadence::Authentic => {
            chords.len() >= 2
                && last.map(|c| c.degree) == Some(Degree::I)
                && chords[chords.len() - 2].function == HarmonicFunction::D
        }
        Cadence::Half if rules.half_cadence_on_tonic => last.map(|c| c.degree) == Some(Degree::I),
        Cadence::Half => last.map(|c| c.function) == Some(HarmonicFunction::D),
    };
    if !ok {
        violations.push(Violation::Cadence {
            expected,
            found: ending.join("-"),
        });
    }
    violations
}

#[derive(Clone, Debug, Default)]
pub struct ProgressionGenerator {
    pub table: NGramTable,
    pub rules: CadenceRules,
}

impl ProgressionGenerator {
    pub fn new(table: NGramTable, rules: CadenceRules) -> Self {
        ProgressionGenerator { table, rules }
    }

    /// Samples a progression of `num_bars · harmonic_rhythm` chords.
    ///
    /// The opening chord is tonic-function whenever the progression is long
    /// enough to host both an opening tonic and the cadence.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        num_bars: u32,
        harmonic_rhythm: u32,
        cadence: Cadence,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<ChordEvent>, HarmonyError> {
        if num_bars == 0 {
            return Err(HarmonyError::NoBars);
        }
        if !(1..=2).contains(&harmonic_rhythm) {
            return Err(HarmonyError::HarmonicRhythm(harmonic_rhythm));
        }
        let n = (num_bars * harmonic_rhythm) as usize;
        if cadence == Cadence::Authentic && n < 2 {
            return Err(HarmonyError::CadenceTooShort(n as u32));
        }

        let all: Vec<Degree> = Degree::ALL.to_vec();
        let of_function = |f: HarmonicFunction| {
            all.iter()
                .copied()
                .filter(move |&d| harmonic_function(d, mode) == f)
        };
        let mut required: Vec<Vec<Degree>> = vec![all.clone(); n];
        match cadence {
            Cadence::Authentic => {
                required[n - 1] = vec![Degree::I];
                required[n - 2] = of_function(HarmonicFunction::D).collect();
            }
            Cadence::Half if self.rules.half_cadence_on_tonic => required[n - 1] = vec![Degree::I],
            Cadence::Half => required[n - 1] = of_function(HarmonicFunction::D).collect(),
            Cadence::None => {}
        }
        // feasible[i]: degrees at i that still admit a valid continuation
        let mut feasible = required.clone();
        for i in (0..n - 1).rev() {
            let next = feasible[i + 1].clone();
            feasible[i].retain(|&a| next.iter().any(|&b| self.table.weight(a, b) > 0.0));
        }
        let tonic_start: Vec<Degree> = feasible[0]
            .iter()
            .copied()
            .filter(|&d| harmonic_function(d, mode) == HarmonicFunction::T)
            .collect();
        let start_pool = if n >= 3 && !tonic_start.is_empty() {
            tonic_start
        } else {
            feasible[0].clone()
        };
        if start_pool.is_empty() {
            return Err(HarmonyError::Infeasible(0));
        }
        let start_weight = |d: Degree| match d {
            Degree::I => 6.0,
            Degree::VI => 2.0,
            _ => 1.0,
        };
        let mut degrees = vec![sample(&start_pool, start_weight, rng)];
        for (i, pool) in feasible.iter().enumerate().skip(1) {
            let prev = degrees[i - 1];
            let options: Vec<Degree> = pool
                .iter()
                .copied()
                .filter(|&d| self.table.weight(prev, d) > 0.0)
                .collect();
            if options.is_empty() {
                return Err(HarmonyError::Infeasible(i));
            }
            degrees.push(sample(&options, |d| self.table.weight(prev, d), rng));
        }

        let duration = TICKS_PER_BAR / harmonic_rhythm;
        Ok(degrees
            .into_iter()
            .enumerate()
            .map(|(i, d)| ChordEvent::diatonic(d, mode, i as u32 * duration, duration))
            .collect())
    }
}

fn sample<R: Rng + ?Sized>(
    options: &[Degree],
    weight: impl Fn(Degree) -> f64,
    rng: &mut R,
) -> Degree {
    let weights: Vec<f64> = options.iter().map(|&d| weight(d)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    options[dist.sample(rng)]
}

pub fn generate_progression<R: Rng + ?Sized>(
    num_bars: u32,
    harmonic_rhythm: u32,
    cadence: Cadence,
    mode: Mode,
    table: &NGramTable,
    rng: &mut R,
) -> Result<Vec<ChordEvent>, HarmonyError> {
    ProgressionGenerator::new(table.clone(), CadenceRules::default()).generate(
        num_bars,
        harmonic_rhythm,
        cadence,
        mode,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prog(degrees: &[Degree]) -> Vec<ChordEvent> {
        degrees
            .iter()
            .enumerate()
            .map(|(i, &d)| ChordEvent::diatonic(d, Mode::Major, i as u32 * 16, 16))
            .collect()
    }

    #[test]
    fn function_table() {
        assert_eq!(
            harmonic_function(Degree::I, Mode::Major),
            HarmonicFunction::T
        );
        assert_eq!(
            harmonic_function(Degree::V, Mode::Major),
            HarmonicFunction::D
        );
        assert_eq!(
            harmonic_function(Degree::II, Mode::Major),
            HarmonicFunction::S
        );
        assert_eq!(
            harmonic_function(Degree::VI, Mode::Minor),
            HarmonicFunction::T
        );
        assert_eq!(
            harmonic_function(Degree::VII, Mode::Minor),
            HarmonicFunction::D
        );
    }

    #[test]
    fn chord_tones() {
        let c = Tonality::new(0, Mode::Major);
        let v = ChordEvent::diatonic(Degree::V, Mode::Major, 0, 16);
        assert_eq!(v.pitch_classes(c), [7, 11, 2]);
        let a = Tonality::new(9, Mode::Minor);
        let v_minor = ChordEvent::diatonic(Degree::V, Mode::Minor, 0, 16);
        assert_eq!(v_minor.pitch_classes(a), [4, 8, 11]);
        let vii = ChordEvent::diatonic(Degree::VII, Mode::Minor, 0, 16);
        assert_eq!(vii.pitch_classes(a), [8, 11, 2]);
        assert_eq!(
            ChordEvent::diatonic(Degree::VII, Mode::Major, 0, 16).to_string(),
            "vii°"
        );
    }

    #[test]
    fn validation_examples() {
        use Degree::*;
        assert!(validate_progression(&prog(&[I, IV, V, I]), Cadence::Authentic).is_empty());
        assert!(validate_progression(&prog(&[I]), Cadence::None).is_empty());
        let bad = validate_progression(&prog(&[V, IV]), Cadence::None);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].to_string(), "D→S forbidden");
        let plagal = validate_progression(&prog(&[IV, I]), Cadence::None);
        assert_eq!(plagal[0].to_string(), "S→T forbidden");
        assert!(!validate_progression(&prog(&[I, IV, V]), Cadence::Authentic).is_empty());
        assert!(validate_progression(&prog(&[I, IV, V]), Cadence::Half).is_empty());
    }

    #[test]
    fn generation_examples() {
        let table = NGramTable::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p =
            generate_progression(4, 1, Cadence::Authentic, Mode::Major, &table, &mut rng).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].function, HarmonicFunction::T);
        assert!(validate_progression(&p, Cadence::Authentic).is_empty());

        let half =
            generate_progression(4, 1, Cadence::Half, Mode::Major, &table, &mut rng).unwrap();
        assert_eq!(half.last().unwrap().function, HarmonicFunction::D);

        assert_eq!(
            generate_progression(1, 1, Cadence::Authentic, Mode::Major, &table, &mut rng),
            Err(HarmonyError::CadenceTooShort(1))
        );
        let short =
            generate_progression(1, 2, Cadence::Authentic, Mode::Major, &table, &mut rng).unwrap();
        assert_eq!(short[1].degree, Degree::I);
        assert_eq!(short[0].function, HarmonicFunction::D);
        assert_eq!(
            generate_progression(0, 1, Cadence::None, Mode::Major, &table, &mut rng),
            Err(HarmonyError::NoBars)
        );
    }

    #[test]
    fn literal_half_cadence_lands_on_tonic() {
        let gen = ProgressionGenerator::new(
            NGramTable::builtin(),
            CadenceRules {
                half_cadence_on_tonic: true,
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = gen
                .generate(4, 1, Cadence::Half, Mode::Minor, &mut rng)
                .unwrap();
            assert_eq!(p.last().unwrap().degree, Degree::I);
            assert!(validate_progression_with(&p, Cadence::Half, gen.rules).is_empty());
        }
    }

    #[test]
    fn determinism() {
        let table = NGramTable::builtin();
        let a = generate_progression(
            8,
            2,
            Cadence::Authentic,
            Mode::Major,
            &table,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        let b = generate_progression(
            8,
            2,
            Cadence::Authentic,
            Mode::Major,
            &table,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn table_invariants_and_overrides() {
        let table = NGramTable::builtin();
        for &a in &Degree::ALL {
            for &b in &Degree::ALL {
                assert_eq!(table.weight(a, b) > 0.0, transition_allowed(a, b));
            }
        }
        assert_eq!(table.weight(Degree::I, Degree::VI), 4.0);
        assert_eq!(table.weight(Degree::VI, Degree::IV), 10.0);

        let t = table
            .clone()
            .with_overrides("# weights\nI V 10\n\nvii° I 0.5\n")
            .unwrap();
        assert_eq!(t.weight(Degree::I, Degree::V), 10.0);
        assert_eq!(t.weight(Degree::VII, Degree::I), 0.5);
        assert!(matches!(
            table.clone().with_overrides("V IV 2"),
            Err(HarmonyError::Table { line: 1, .. })
        ));
        assert!(table.clone().with_overrides("I V").is_err());
        assert!(table.clone().with_overrides("I V -1").is_err());
        assert!(table.with_overrides("I X 1").is_err());
    }

    #[test]
    fn span_clipping() {
        let p = prog(&[Degree::I, Degree::IV, Degree::V, Degree::I]);
        let mid = chords_in_span(&p, 16, 32);
        assert_eq!(mid.len(), 2);
        assert_eq!(
            (mid[0].degree, mid[0].onset, mid[0].duration),
            (Degree::IV, 0, 16)
        );
        assert_eq!(mid[1].onset, 16);
    }
}
