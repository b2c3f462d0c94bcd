//! Versioned JSON melody documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{file_error, IoError};
use crate::form::FormSpec;
use crate::refine::{Diagnostic, PhraseControl};
use crate::types::{Melody, Meta, Section};

pub const SCHEMA_VERSION: u32 = 1;

/// How a melody was refined, kept alongside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub refiner: String,
    pub seed: u64,
    pub nucleus_p: f64,
    pub controls: Vec<PhraseControl>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelodyDocument {
    pub schema_version: u32,
    pub form: FormSpec,
    pub meta: Meta,
    pub sections: Vec<Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementRecord>,
}

impl MelodyDocument {
    pub fn new(melody: &Melody, refinement: Option<RefinementRecord>) -> Self {
        MelodyDocument {
            schema_version: SCHEMA_VERSION,
            form: melody.form(),
            meta: melody.meta.clone(),
            sections: melody.sections.clone(),
            refinement,
        }
    }

    /// The melody, after checking version, form agreement and model
    /// invariants.
    pub fn melody(&self) -> Result<Melody, IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::Schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let melody = Melody {
            meta: self.meta.clone(),
            sections: self.sections.clone(),
        };
        if melody.form() != self.form {
            return Err(IoError::Schema(format!(
                "form {} does not match sections ({})",
                self.form,
                melody.form()
            )));
        }
        melody.validate()?;
        Ok(melody)
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

pub fn from_json_str(text: &str) -> Result<MelodyDocument, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Json {
        pointer: pointer(e.path()),
        message: e.inner().to_string(),
    })
}

pub fn to_json_string(melody: &Melody, refinement: Option<RefinementRecord>) -> String {
    let mut text = serde_json::to_string_pretty(&MelodyDocument::new(melody, refinement))
        .expect("melody serializes");
    text.push('\n');
    text
}

pub fn export_json(
    melody: &Melody,
    refinement: Option<RefinementRecord>,
    path: &Path,
) -> Result<(), IoError> {
    std::fs::write(path, to_json_string(melody, refinement)).map_err(file_error(path))
}

pub fn import_json(path: &Path) -> Result<MelodyDocument, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
    let doc = from_json_str(&text)?;
    doc.melody()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::generate_melody;
    use crate::form::parse_form;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn melody() -> Melody {
        let form = parse_form("A(a1,a1')B(b1)").unwrap();
        generate_melody(
            &form,
            &Meta::default(),
            4,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let m = melody();
        let doc = from_json_str(&to_json_string(&m, None)).unwrap();
        assert_eq!(doc.melody().unwrap(), m);
        assert!(doc.refinement.is_none());
    }

    #[test]
    fn missing_sections_is_reported() {
        let mut v: serde_json::Value =
            serde_json::from_str(&to_json_string(&melody(), None)).unwrap();
        v.as_object_mut().unwrap().remove("sections");
        let err = from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("sections"), "{err}");
    }

    #[test]
    fn bad_field_carries_pointer() {
        let mut v: serde_json::Value =
            serde_json::from_str(&to_json_string(&melody(), None)).unwrap();
        v["sections"][1]["phrases"][0]["notes"][2]["pitch"] = serde_json::json!("high");
        match from_json_str(&v.to_string()) {
            Err(IoError::Json { pointer, .. }) => {
                assert_eq!(pointer, "/sections/1/phrases/0/notes/2/pitch")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let mut v: serde_json::Value =
            serde_json::from_str(&to_json_string(&melody(), None)).unwrap();
        v["producer"] = serde_json::json!({"name": "elsewhere"});
        v["sections"][0]["colour"] = serde_json::json!("blue");
        assert_eq!(
            from_json_str(&v.to_string()).unwrap().melody().unwrap(),
            melody()
        );
    }

    #[test]
    fn version_and_form_are_checked() {
        let mut doc = MelodyDocument::new(&melody(), None);
        doc.schema_version = 2;
        assert!(matches!(doc.melody(), Err(IoError::Schema(_))));
        let mut doc = MelodyDocument::new(&melody(), None);
        doc.form = parse_form("A(a1,a1)B(b1)").unwrap();
        assert!(matches!(doc.melody(), Err(IoError::Schema(_))));
    }
}
