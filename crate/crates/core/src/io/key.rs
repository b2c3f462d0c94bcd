//! Key estimation by correlating a duration-weighted pitch-class histogram
//! with the Krumhansl-Kessler major and minor profiles.

use serde::Serialize;

use super::IoError;
use crate::types::{Mode, Note};

pub const MIN_KEY_NOTES: usize = 8;

const MAJOR: [f64; 12] = [
    6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88,
];
const MINOR: [f64; 12] = [
    6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17,
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyEstimate {
    pub root: u8,
    pub mode: Mode,
    /// Semitones that move the key to C major or A minor, in `-6..=5`.
    pub shift: i8,
    /// Correlation of the winning profile; 0 when the histogram is flat.
    pub confidence: f64,
}

fn pearson(x: &[f64; 12], y: &[f64; 12]) -> f64 {
    let mx = x.iter().sum::<f64>() / 12.0;
    let my = y.iter().sum::<f64>() / 12.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Smallest signed shift taking `from` to `to` (mod 12).
fn nearest_shift(from: u8, to: u8) -> i8 {
    let up = (to as i8 - from as i8).rem_euclid(12);
    if up > 5 {
        up - 12
    } else {
        up
    }
}

pub fn estimate_key(notes: &[Note]) -> Result<KeyEstimate, IoError> {
    if notes.len() < MIN_KEY_NOTES {
        return Err(IoError::TooFewNotes {
            have: notes.len(),
            need: MIN_KEY_NOTES,
        });
    }
    let mut histogram = [0.0; 12];
    for n in notes {
        histogram[(n.pitch % 12) as usize] += n.duration.max(1) as f64;
    }
    let mut best: Option<(f64, u8, Mode)> = None;
    for (mode, profile) in [(Mode::Major, &MAJOR), (Mode::Minor, &MINOR)] {
        for root in 0..12u8 {
            let rotated: [f64; 12] =
                std::array::from_fn(|pc| profile[(pc + 12 - root as usize) % 12]);
            let r = pearson(&histogram, &rotated);
            if best.is_none_or(|(b, ..)| r > b) {
                best = Some((r, root, mode));
            }
        }
    }
    let (confidence, root, mode) = best.expect("24 candidate keys");
    let target = match mode {
        Mode::Major => 0,
        Mode::Minor => 9,
    };
    Ok(KeyEstimate {
        root,
        mode,
        shift: nearest_shift(root, target),
        confidence,
    })
}

/// Notes moved to C major or A minor, with the key that was detected.
pub fn normalize_key(notes: &[Note]) -> Result<(Vec<Note>, KeyEstimate), IoError> {
    let key = estimate_key(notes)?;
    let moved = notes
        .iter()
        .map(|n| {
            let pitch = n.pitch as i16 + key.shift as i16;
            if !(0..=127).contains(&pitch) {
                return Err(IoError::Transpose { shift: key.shift });
            }
            Ok(Note {
                pitch: pitch as u8,
                ..*n
            })
        })
        .collect::<Result<_, _>>()?;
    Ok((moved, key))
}
