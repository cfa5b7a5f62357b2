//! Validated challenge catalogs and their JSON file format.
//!
//! ```json
//! {"version": 1, "notes": ["..."], "challenges": [{"id": "fold-ear", ..., "template": [[...], ...]}]}
//! ```
//!
//! `notes` is optional free text documenting the file. Parsing is strict:
//! unknown fields anywhere are rejected.

use std::collections::HashSet;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CatalogError;
use crate::types::{ActivityTemplate, ChallengeCategory, ChallengeSpec, Frame, Modality};
use crate::{DEFAULT_DIM, DEFAULT_FRAME_RATE_HZ, DEFAULT_TEMPLATE_LEN};

pub const CATALOG_VERSION: u32 = 1;

/// A non-empty set of challenges with unique ids and valid fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Catalog {
    entries: Vec<ChallengeSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    version: u32,
    #[serde(default)]
    notes: Vec<String>,
    challenges: Vec<ChallengeSpec>,
}

/// Checks every entry and id uniqueness, in file order.
pub fn validate_catalog(entries: Vec<ChallengeSpec>) -> Result<Catalog, CatalogError> {
    if entries.is_empty() {
        return Err(CatalogError::Empty);
    }
    let mut seen = HashSet::new();
    for e in &entries {
        e.check()
            .map_err(|v| CatalogError::violation(v.field, &e.id, v.reason))?;
        if !seen.insert(e.id.as_str()) {
            return Err(CatalogError::DuplicateId(e.id.clone()));
        }
    }
    Ok(Catalog {
        entries,
        notes: Vec::new(),
    })
}

impl Catalog {
    pub fn entries(&self) -> &[ChallengeSpec] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChallengeSpec> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn with_notes(mut self, notes: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.notes = notes.into_iter().map(Into::into).collect();
        self
    }

    pub fn get(&self, id: &str) -> Option<&ChallengeSpec> {
        self.entries.iter().find(|c| c.id == id)
    }

    /// Returns a new catalog with `entry` appended, re-validated as a whole.
    pub fn with_entry(&self, entry: ChallengeSpec) -> Result<Catalog, CatalogError> {
        let mut entries = self.entries.clone();
        entries.push(entry);
        Ok(validate_catalog(entries)?.with_notes(self.notes.clone()))
    }

    /// Parses and validates a catalog document.
    pub fn from_json(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.version != CATALOG_VERSION {
            return Err(CatalogError::UnsupportedVersion(file.version));
        }
        Ok(validate_catalog(file.challenges)?.with_notes(file.notes))
    }

    /// Renders the catalog document, one template frame per line.
    pub fn to_json(&self) -> String {
        let placeholder = |i: usize| format!("@@template-{i}@@");
        let challenges: Vec<serde_json::Value> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut v = serde_json::to_value(c).expect("challenge serializes");
                v["template"] = serde_json::Value::String(placeholder(i));
                v
            })
            .collect();
        let mut doc = serde_json::json!({ "version": CATALOG_VERSION });
        if !self.notes.is_empty() {
            doc["notes"] = serde_json::json!(self.notes);
        }
        doc["challenges"] = serde_json::Value::Array(challenges);
        let mut out = serde_json::to_string_pretty(&doc).expect("catalog serializes");
        for (i, c) in self.entries.iter().enumerate() {
            let rows: Vec<String> = c
                .template
                .frames
                .iter()
                .map(|f| format!("        {}", serde_json::to_string(f).expect("frame serializes")))
                .collect();
            let block = format!("[\n{}\n      ]", rows.join(",\n"));
            out = out.replacen(&format!("\"{}\"", placeholder(i)), &block, 1);
        }
        out.push('\n');
        out
    }
}

/// Best-effort 1-based line of `field` within the entry whose id is `entry`.
///
/// Used for diagnostics only; returns `None` when the text cannot be matched.
pub fn locate_field(text: &str, entry: &str, field: &str) -> Option<usize> {
    let id_pat = format!("\"{entry}\"");
    let mut search_from = 0;
    let id_pos = loop {
        let pos = search_from + text[search_from..].find(&id_pat)?;
        let before = text[..pos].trim_end();
        if before.ends_with(':') && before[..before.len() - 1].trim_end().ends_with("\"id\"") {
            break pos;
        }
        search_from = pos + id_pat.len();
    };
    let entry_start = text[..id_pos].rfind('{').unwrap_or(0);
    let field_pat = format!("\"{field}\"");
    let field_pos = entry_start + text[entry_start..].find(&field_pat)?;
    Some(text[..field_pos].matches('\n').count() + 1)
}

struct Spec {
    id: &'static str,
    name: &'static str,
    category: ChallengeCategory,
    modality: Modality,
    burden: f64,
    coverage_prior: f64,
}

const fn spec(
    id: &'static str,
    name: &'static str,
    category: ChallengeCategory,
    modality: Modality,
    burden: f64,
    coverage_prior: f64,
) -> Spec {
    Spec {
        id,
        name,
        category,
        modality,
        burden,
        coverage_prior,
    }
}

use ChallengeCategory::{AudioChallenge, OutOfDistribution, Technology};

const VIDEO_CHALLENGES: [Spec; 12] = [
    spec("drop-object", "Drop object", Technology, Modality::Video, 0.30, 0.10),
    spec("bounce-object", "Bounce object", Technology, Modality::Video, 0.35, 0.10),
    spec("fold-shirt", "Fold shirt", Technology, Modality::Video, 0.40, 0.20),
    spec("stroke-hair", "Stroke hair", Technology, Modality::Video, 0.20, 0.25),
    spec("interact-with-background-scenery", "Interact with background scenery", Technology, Modality::Video, 0.50, 0.15),
    spec("spill-water", "Spill water", Technology, Modality::Video, 0.70, 0.05),
    spec("pick-up-requested-object", "Pick up requested object", OutOfDistribution, Modality::Video, 0.40, 0.35),
    spec("hand-expressions", "Hand expressions", OutOfDistribution, Modality::Video, 0.15, 0.50),
    spec("tongue-motion", "Tongue motion", OutOfDistribution, Modality::Video, 0.20, 0.40),
    spec("fold-ear", "Fold ear", OutOfDistribution, Modality::Video, 0.30, 0.30),
    spec("face-occlusions", "Face occlusions", OutOfDistribution, Modality::Video, 0.15, 0.45),
    spec("remove-glasses", "Remove glasses", OutOfDistribution, Modality::Video, 0.25, 0.55),
];

const AUDIO_CHALLENGES: [Spec; 7] = [
    spec("mimic-phrase", "Mimic phrase", AudioChallenge, Modality::Audio, 0.20, 0.50),
    spec("hum-tune", "Hum tune", AudioChallenge, Modality::Audio, 0.25, 0.35),
    spec("sing-part-of-song", "Sing part of song", AudioChallenge, Modality::Audio, 0.45, 0.30),
    spec("repeat-accent", "Repeat accent", AudioChallenge, Modality::Audio, 0.40, 0.40),
    spec("change-tone-or-speed", "Change tone or speed", AudioChallenge, Modality::Audio, 0.30, 0.45),
    spec("clear-throat", "Clear throat", AudioChallenge, Modality::Audio, 0.10, 0.60),
    spec("whistle", "Whistle", AudioChallenge, Modality::Audio, 0.30, 0.25),
];

/// Capture window of the shipped challenges: twice the template duration.
pub const DEFAULT_RESPONSE_WINDOW_S: f64 = 2.0 * DEFAULT_TEMPLATE_LEN as f64 / DEFAULT_FRAME_RATE_HZ;

fn build(specs: &[Spec]) -> Catalog {
    let entries = specs
        .iter()
        .map(|s| {
            ChallengeSpec::new(
                s.id,
                s.name,
                s.category,
                s.modality,
                s.burden,
                s.coverage_prior,
                DEFAULT_RESPONSE_WINDOW_S,
                generate_template(s.id, DEFAULT_TEMPLATE_LEN, DEFAULT_DIM),
            )
            .expect("built-in challenge is valid")
        })
        .collect();
    validate_catalog(entries).expect("built-in catalog is valid")
}

const COMMON_NOTES: [&str; 3] = [
    "burden: effort asked of the caller, from 0 (trivial) to 1 (messy or strenuous). Hand-assigned.",
    "template: synthetic activity signature generated from the id (32 frames x 16 features); \
     response_window_s is twice the template duration at 25 frames per second.",
    "Ids follow the challenge names; add entries with `dfcaptcha catalog add`.",
];

/// The twelve video challenges: six technology and six out-of-distribution.
pub fn default_catalog() -> Catalog {
    let mut notes = vec![
        "coverage_prior: hand-assigned guess at how often a generic real-time face swap or reenactment \
         model renders the challenge cleanly. Physics and object interaction (spill, drop, bounce) sit \
         lowest; gestures that are common in ordinary footage (glasses, hand expressions) sit highest.",
    ];
    notes.extend(COMMON_NOTES);
    build(&VIDEO_CHALLENGES).with_notes(notes)
}

/// The seven voice challenges.
pub fn audio_catalog() -> Catalog {
    let mut notes = vec![
        "coverage_prior: hand-assigned guess at how often a voice conversion or TTS model renders the \
         challenge cleanly. Non-speech sounds (whistle, humming, singing) sit lowest; ordinary speech \
         tasks and throat clearing sit highest.",
    ];
    notes.extend(COMMON_NOTES);
    build(&AUDIO_CHALLENGES).with_notes(notes)
}

/// Deterministic smooth template for a challenge id.
///
/// Each dimension is a chirp `a·sin(2π(f·u + g·u²) + φ)` over `u ∈ [0, 1]`
/// with parameters drawn from a generator keyed by the id. Values are rounded
/// to four decimals so that catalog files stay readable.
pub fn generate_template(id: &str, len: usize, dim: usize) -> ActivityTemplate {
    let key: [u8; 32] = Sha256::digest(id.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let params: Vec<[f64; 4]> = (0..dim)
        .map(|_| {
            [
                0.6 + 0.6 * unit(),
                0.5 + 1.5 * unit(),
                -1.0 + 2.0 * unit(),
                std::f64::consts::TAU * unit(),
            ]
        })
        .collect();
    let frames: Vec<Frame> = (0..len)
        .map(|t| {
            let u = t as f64 / (len.max(2) - 1) as f64;
            params
                .iter()
                .map(|&[a, f, g, phase]| {
                    let x = a * (std::f64::consts::TAU * (f * u + g * u * u) + phase).sin();
                    (x * 1e4).round() / 1e4
                })
                .collect()
        })
        .collect();
    ActivityTemplate::new(frames).expect("generated template is valid")
}
