//! Files in and out: Standard MIDI, the JSON melody schema, key
//! normalization and synthetic corpus preparation.

mod corpus;
mod json;
mod key;
mod midi;

use std::path::PathBuf;

use thiserror::Error;

use crate::assembler::AssemblyError;
use crate::refine::RefineError;
use crate::types::ModelError;

pub use corpus::{prepare_corpus, CorpusManifest, CorpusPair, CORPUS_PHRASE_BARS};
pub use json::{
    export_json, from_json_str, import_json, to_json_string, MelodyDocument, RefinementRecord,
    SCHEMA_VERSION,
};
pub use key::{estimate_key, normalize_key, KeyEstimate, MIN_KEY_NOTES};
pub use midi::{
    export_midi, import_midi, midi_bytes, parse_midi, ImportedMidi, GRID_TICKS, TICKS_PER_QUARTER,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON at '{pointer}': {message}")]
    Json { pointer: String, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("MIDI: {0}")]
    Midi(String),
    #[error("meter unsupported: {numerator}/{denominator}")]
    UnsupportedMeter { numerator: u8, denominator: u32 },
    #[error("key estimation needs at least {need} notes, got {have}")]
    TooFewNotes { have: usize, need: usize },
    #[error("transposing by {shift} leaves the MIDI range")]
    Transpose { shift: i8 },
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("no presets given")]
    NoPresets,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

pub(crate) fn file_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}
