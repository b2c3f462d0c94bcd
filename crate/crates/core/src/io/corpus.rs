//! Synthetic training corpus: generated melodies plus every masked-group
//! request paired with the response that restores the original.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::json::to_json_string;
use super::{file_error, IoError};
use crate::assembler::generate_melody;
use crate::form::{random_preset_form, PresetKind};
use crate::refine::{
    encode_request, ground_truth_response, measured_controls, refinement_schedule, RefineRequest,
    RefineResponse, DEFAULT_NUCLEUS_P,
};
use crate::types::Meta;

pub const CORPUS_PHRASE_BARS: u32 = 4;

/// One line of a pairs file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPair {
    pub melody: usize,
    pub group: usize,
    pub request: RefineRequest,
    pub response: RefineResponse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub phrase_bars: u32,
    pub presets: Vec<String>,
    pub melodies: usize,
    pub phrases: usize,
    pub pairs: usize,
    pub per_preset: Vec<(String, usize)>,
}

/// Melody `i` uses preset `presets[i % len]` and seed `seed + i`.
/// Writes `melodies/NNNNN.json`, `pairs/NNNNN.jsonl` and `manifest.json`.
pub fn prepare_corpus(
    n: usize,
    presets: &[PresetKind],
    out_dir: &Path,
    seed: u64,
) -> Result<CorpusManifest, IoError> {
    if n == 0 {
        return Err(IoError::EmptyCorpus);
    }
    if presets.is_empty() {
        return Err(IoError::NoPresets);
    }
    let melody_dir = out_dir.join("melodies");
    let pair_dir = out_dir.join("pairs");
    for dir in [&melody_dir, &pair_dir] {
        fs::create_dir_all(dir).map_err(file_error(dir))?;
    }
    let meta = Meta::default();
    let mut manifest = CorpusManifest {
        schema_version: super::SCHEMA_VERSION,
        seed,
        phrase_bars: CORPUS_PHRASE_BARS,
        presets: presets.iter().map(|p| p.name().to_string()).collect(),
        melodies: 0,
        phrases: 0,
        pairs: 0,
        per_preset: presets.iter().map(|p| (p.name().to_string(), 0)).collect(),
    };
    for i in 0..n {
        let slot = i % presets.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let form = random_preset_form(presets[slot], &mut rng);
        let melody = generate_melody(&form, &meta, CORPUS_PHRASE_BARS, &mut rng)?;
        let path = melody_dir.join(format!("{i:05}.json"));
        fs::write(&path, to_json_string(&melody, None)).map_err(file_error(&path))?;

        let controls = measured_controls(&melody);
        let mut lines = Vec::new();
        for (g, group) in refinement_schedule(&form).iter().enumerate() {
            let request = encode_request(&melody, group, &controls, g as u64, DEFAULT_NUCLEUS_P)?;
            let response = ground_truth_response(&melody, &request)?;
            let pair = CorpusPair {
                melody: i,
                group: g,
                request,
                response,
            };
            serde_json::to_writer(&mut lines, &pair).expect("pair serializes");
            lines.push(b'\n');
            manifest.pairs += 1;
        }
        let path = pair_dir.join(format!("{i:05}.jsonl"));
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&lines))
            .map_err(file_error(&path))?;

        manifest.melodies += 1;
        manifest.phrases += melody.phrase_count();
        manifest.per_preset[slot].1 += 1;
    }
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(file_error(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            prepare_corpus(0, &PresetKind::ALL, dir.path(), 0),
            Err(IoError::EmptyCorpus)
        ));
        assert!(matches!(
            prepare_corpus(1, &[], dir.path(), 0),
            Err(IoError::NoPresets)
        ));
    }
}
