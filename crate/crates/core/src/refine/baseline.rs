//! Rule-based refiner: re-pitches each masked phrase from its condition
//! chords so that its mean-pitch and span buckets hit the requested
//! controls exactly.
//!
//! For a window `[b, b + S]` the search is a dynamic program over notes
//! whose state is (candidate pitch, touched `b`, touched `b + S`) and whose
//! value is the set of reachable pitch sums, kept as a bitset. A window is
//! feasible when some final state touching both edges reaches a sum inside
//! the mean-pitch bucket; a path is then drawn backwards at random.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::harmony::{ChordQuality, Degree};
use crate::motif::MAX_INTERVAL;
use crate::types::{PitchRange, Tonality};

use super::tokens::{parse_context, Condition, Frame, Token, MAX_AVG_BUCKET, MAX_SPAN_BUCKET};
use super::{RefineError, RefineRequest, RefineResponse, Refiner};

/// Widest span tried for the open-ended top span bucket.
const MAX_SPAN: u32 = 48;

/// A control pair the refiner could not meet, and the nearest pair it met
/// instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub phrase: usize,
    pub requested: (u8, u8),
    pub used: (u8, u8),
}

#[derive(Clone, Debug)]
pub struct BaselineRefiner {
    pub range: PitchRange,
    pub seed: u64,
}

impl Default for BaselineRefiner {
    fn default() -> Self {
        BaselineRefiner {
            range: PitchRange { lo: 21, hi: 108 },
            seed: 0,
        }
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

fn chord_tone(pitch: u8, key: Tonality, degree: Degree, quality: ChordQuality) -> bool {
    let root = (key.root + degree.root_offset(key.mode)) % 12;
    quality
        .intervals()
        .iter()
        .any(|i| (root + i) % 12 == pitch % 12)
}

impl BaselineRefiner {
    pub fn new(range: PitchRange, seed: u64) -> Self {
        BaselineRefiner { range, seed }
    }

    /// Pitches for one condition plus the buckets actually reached.
    pub fn realize(
        &self,
        condition: &Condition,
        key: Tonality,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<u8>, (u8, u8)), RefineError> {
        let requested = (condition.avgpitch, condition.span);
        if let Some(p) = self.solve(condition, key, requested, rng) {
            return Ok((p, requested));
        }
        let mut pairs: Vec<(u8, u8)> = (0..=MAX_AVG_BUCKET)
            .flat_map(|a| (0..=MAX_SPAN_BUCKET).map(move |s| (a, s)))
            .filter(|&p| p != requested)
            .collect();
        pairs.sort_by_key(|&(a, s)| {
            let (da, ds) = (a.abs_diff(requested.0), s.abs_diff(requested.1));
            (da + ds, ds, da, a, s)
        });
        for pair in pairs {
            if let Some(p) = self.solve(condition, key, pair, rng) {
                return Ok((p, pair));
            }
        }
        Err(RefineError::Infeasible(
            "no control pair is reachable inside the pitch range".into(),
        ))
    }

    fn candidates(&self, condition: &Condition, key: Tonality) -> Vec<Vec<u8>> {
        let n = condition.events.len();
        condition
            .events
            .iter()
            .enumerate()
            .map(|(i, &(_, duration, degree, quality))| {
                let passing = duration <= 2 && i > 0 && i + 1 < n;
                (self.range.lo..=self.range.hi)
                    .filter(|&p| {
                        chord_tone(p, key, degree, quality) || (passing && key.contains(p))
                    })
                    .collect()
            })
            .collect()
    }

    fn solve(
        &self,
        condition: &Condition,
        key: Tonality,
        (avg, span): (u8, u8),
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<u8>> {
        let n = condition.events.len() as u32;
        if n == 0 {
            return None;
        }
        let all = self.candidates(condition, key);
        let spans: Vec<u32> = if span == MAX_SPAN_BUCKET {
            (4 * span as u32..=MAX_SPAN.max(4 * span as u32)).collect()
        } else {
            (4 * span as u32..4 * span as u32 + 4).collect()
        };
        // sums in [sum_lo, sum_hi] give a mean in the bucket
        let sum_lo = if avg == 0 {
            0
        } else {
            n * (36 + 4 * avg as u32)
        };
        let sum_hi = if avg == MAX_AVG_BUCKET {
            u32::MAX
        } else {
            n * (40 + 4 * avg as u32) - 1
        };
        let centre = 38.0 + 4.0 * avg as f64;
        let mut windows: Vec<(u32, u32)> = Vec::new();
        for &s in &spans {
            let (lo, hi) = (self.range.lo as u32, self.range.hi as u32);
            if lo + s > hi {
                continue;
            }
            for b in lo..=hi - s {
                // the mean lies inside the window
                let mean_lo = sum_lo / n;
                let mean_hi = sum_hi.saturating_add(n - 1) / n;
                if b <= mean_hi && b + s >= mean_lo {
                    windows.push((b, s));
                }
            }
        }
        windows.shuffle(rng);
        windows.sort_by(|x, y| {
            let dx = (x.0 as f64 + x.1 as f64 / 2.0 - centre).abs();
            let dy = (y.0 as f64 + y.1 as f64 / 2.0 - centre).abs();
            dx.total_cmp(&dy)
        });
        windows
            .into_iter()
            .find_map(|(b, s)| window_path(&all, b as u8, s as u8, sum_lo, sum_hi, rng))
    }
}

struct Bits {
    words: usize,
    data: Vec<u64>,
}

impl Bits {
    fn new(slots: usize, bits: usize) -> Self {
        let words = bits / 64 + 1;
        Bits {
            words,
            data: vec![0; slots * words],
        }
    }

    fn slot(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    fn set(&mut self, i: usize, bit: usize) {
        self.data[i * self.words + bit / 64] |= 1 << (bit % 64);
    }

    fn get(&self, i: usize, bit: usize) -> bool {
        let w = bit / 64;
        w < self.words && self.data[i * self.words + w] >> (bit % 64) & 1 == 1
    }

    fn or_shifted(&mut self, dst: usize, src: usize, shift: usize) {
        let (words, ws, bs) = (self.words, shift / 64, shift % 64);
        for k in (ws..words).rev() {
            let lo = self.data[src * words + k - ws];
            let carry = if bs > 0 && k > ws {
                self.data[src * words + k - ws - 1] >> (64 - bs)
            } else {
                0
            };
            self.data[dst * words + k] |= (lo << bs) | carry;
        }
    }
}

fn window_path(
    all: &[Vec<u8>],
    base: u8,
    span: u8,
    sum_lo: u32,
    sum_hi: u32,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<u8>> {
    let top = base + span;
    let cands: Vec<Vec<u8>> = all
        .iter()
        .map(|c| {
            c.iter()
                .copied()
                .filter(|&p| p >= base && p <= top)
                .collect::<Vec<u8>>()
        })
        .collect();
    if cands.iter().any(Vec::is_empty) {
        return None;
    }
    let n = cands.len();
    let width = cands.iter().map(Vec::len).max().unwrap_or(0);
    let hit = |p: u8| usize::from(p == base) | (usize::from(p == top) << 1);
    let slot = |i: usize, j: usize, f: usize| (i * width + j) * 4 + f;
    let mut bits = Bits::new(n * width * 4, n * span as usize + 1);
    for (j, &p) in cands[0].iter().enumerate() {
        bits.set(slot(0, j, hit(p)), (p - base) as usize);
    }
    for i in 1..n {
        for (j, &p) in cands[i].iter().enumerate() {
            let h = hit(p);
            for (k, &q) in cands[i - 1].iter().enumerate() {
                if p.abs_diff(q) > MAX_INTERVAL {
                    continue;
                }
                for g in 0..4 {
                    bits.or_shifted(slot(i, j, g | h), slot(i - 1, k, g), (p - base) as usize);
                }
            }
        }
    }
    let offset = n as u64 * base as u64;
    let lo = (sum_lo as u64).saturating_sub(offset) as usize;
    let hi = (sum_hi as u64)
        .saturating_sub(offset)
        .min(n as u64 * span as u64) as usize;
    if (sum_hi as u64) < offset || lo > hi {
        return None;
    }
    let last = n - 1;
    let mut finals: Vec<(usize, usize)> = Vec::new();
    for j in 0..cands[last].len() {
        let s = bits.slot(slot(last, j, 3));
        if s.iter().all(|&w| w == 0) {
            continue;
        }
        for sum in lo..=hi {
            if bits.get(slot(last, j, 3), sum) {
                finals.push((j, sum));
            }
        }
    }
    let &(mut j, mut sum) = finals.choose(rng)?;
    let mut f = 3usize;
    let mut out = vec![0u8; n];
    out[last] = cands[last][j];
    for i in (1..n).rev() {
        let p = cands[i][j];
        let h = hit(p);
        let prev_sum = sum - (p - base) as usize;
        let mut options: Vec<(usize, usize, f64)> = Vec::new();
        for (k, &q) in cands[i - 1].iter().enumerate() {
            if p.abs_diff(q) > MAX_INTERVAL {
                continue;
            }
            for g in 0..4 {
                if g | h == f && bits.get(slot(i - 1, k, g), prev_sum) {
                    options.push((k, g, 1.0 / (1.0 + p.abs_diff(q) as f64)));
                }
            }
        }
        let &(k, g, _) = options.choose_weighted(rng, |o| o.2).ok()?;
        j = k;
        f = g;
        sum = prev_sum;
        out[i - 1] = cands[i - 1][k];
    }
    Some(out)
}

/// `BAR` / `POS DUR PITCH` body for a condition and its pitches.
pub fn body_for(condition: &Condition, pitches: &[u8]) -> Vec<Token> {
    let mut out = Vec::new();
    let mut events = condition.events.iter().zip(pitches).peekable();
    for bar in 0..condition.bars {
        out.push(Token::Bar);
        while let Some(&(&(onset, duration, _, _), &pitch)) = events.peek() {
            if onset / 16 != bar {
                break;
            }
            out.extend([
                Token::Pos((onset % 16) as u8),
                Token::Dur(duration as u8),
                Token::Pitch(pitch),
            ]);
            events.next();
        }
    }
    out
}

impl Refiner for BaselineRefiner {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn refine(&mut self, request: &RefineRequest) -> Result<RefineResponse, RefineError> {
        let context = parse_context(&request.context)?;
        let global = context
            .tonality
            .unwrap_or(Tonality::new(0, crate::types::Mode::Major));
        let mut phrases = Vec::new();
        let mut diagnostics = Vec::new();
        for (index, frame) in context.frames.iter().enumerate() {
            let Frame::Condition(condition) = frame else {
                continue;
            };
            let key = condition.tonality.unwrap_or(global);
            // identical conditions draw identical pitches
            let text = condition
                .tokens()
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let mut rng =
                ChaCha8Rng::seed_from_u64(fnv1a(text.bytes(), 0xcbf2_9ce4_8422_2325 ^ self.seed));
            let (pitches, used) = self.realize(condition, key, &mut rng)?;
            if used != (condition.avgpitch, condition.span) {
                diagnostics.push(Diagnostic {
                    phrase: index,
                    requested: (condition.avgpitch, condition.span),
                    used,
                });
            }
            phrases.push(body_for(condition, &pitches));
        }
        Ok(RefineResponse {
            id: request.id,
            phrases,
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pitch_buckets;
    use crate::types::{Cadence, Mode, Note};

    fn condition(avg: u8, span: u8) -> Condition {
        let events = (0..8)
            .map(|i| {
                let degree = if i < 4 { Degree::V } else { Degree::I };
                (i * 4, 4, degree, ChordQuality::Maj)
            })
            .collect();
        Condition {
            bars: 2,
            events,
            cadence: Cadence::Authentic,
            avgpitch: avg,
            span,
            tonality: None,
        }
    }

    fn notes_of(c: &Condition, pitches: &[u8]) -> Vec<Note> {
        c.events
            .iter()
            .zip(pitches)
            .map(|(e, &p)| Note::new(e.0, e.1, p))
            .collect()
    }

    #[test]
    fn hits_requested_buckets() {
        let refiner = BaselineRefiner::new(PitchRange { lo: 48, hi: 84 }, 0);
        let key = Tonality::new(0, Mode::Major);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for avg in 4..=10 {
            for span in 1..=5 {
                let c = condition(avg, span);
                let (pitches, used) = refiner.realize(&c, key, &mut rng).unwrap();
                let notes = notes_of(&c, &pitches);
                assert_eq!(pitch_buckets(&notes), Some(used));
                assert_eq!(used, (avg, span), "avg {avg} span {span}");
                assert!(crate::types::max_adjacent_interval(&notes) <= MAX_INTERVAL);
            }
        }
    }

    #[test]
    fn infeasible_pair_reports_nearest() {
        // nothing below 48 is available, so bucket 0 cannot be reached
        let refiner = BaselineRefiner::new(PitchRange { lo: 48, hi: 84 }, 0);
        let key = Tonality::new(0, Mode::Major);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = condition(0, 1);
        let (pitches, used) = refiner.realize(&c, key, &mut rng).unwrap();
        assert_eq!(used, (3, 1));
        assert_eq!(pitch_buckets(&notes_of(&c, &pitches)), Some(used));
    }

    #[test]
    fn bitset_shift() {
        let mut b = Bits::new(2, 200);
        b.set(0, 3);
        b.set(0, 63);
        b.or_shifted(1, 0, 70);
        assert!(b.get(1, 73));
        assert!(b.get(1, 133));
        assert!(!b.get(1, 3));
    }
}
