//! `dfcaptcha catalog validate|list|add`.

use std::fmt::Write as _;
use std::path::Path;

use dfcaptcha_core::catalog::{audio_catalog, default_catalog, generate_template, locate_field, DEFAULT_RESPONSE_WINDOW_S};
use dfcaptcha_core::error::CatalogError;
use dfcaptcha_core::{Catalog, ChallengeSpec};

use crate::io::{read_text, write_atomic, CliError, CliResult};

/// `path:line: message`, with the line when it can be found.
fn diagnostic(path: &Path, text: &str, err: &CatalogError) -> String {
    let line = match err {
        CatalogError::Parse { line, .. } => Some(*line),
        CatalogError::InvariantViolation { field, entry, .. } => locate_field(text, entry, field),
        CatalogError::DuplicateId(id) => last_id_line(text, id),
        _ => None,
    };
    match line {
        Some(l) => format!("{}:{l}: {err}", path.display()),
        None => format!("{}: {err}", path.display()),
    }
}

/// Line of the last `"id": "<id>"` in the text, where a duplicate shows up.
fn last_id_line(text: &str, id: &str) -> Option<usize> {
    let needle = format!("\"{id}\"");
    text.match_indices(&needle)
        .filter(|(pos, _)| {
            let before = text[..*pos].trim_end();
            before.ends_with(':') && before[..before.len() - 1].trim_end().ends_with("\"id\"")
        })
        .last()
        .map(|(pos, _)| text[..pos].matches('\n').count() + 1)
}

fn load(path: &Path) -> CliResult<(String, Catalog)> {
    let text = read_text(path)?;
    let catalog = Catalog::from_json(&text).map_err(|e| CliError::Domain(diagnostic(path, &text, &e)))?;
    Ok((text, catalog))
}

pub fn validate(path: &Path) -> CliResult<String> {
    let (_, catalog) = load(path)?;
    Ok(format!("{}: ok, {} challenges\n", path.display(), catalog.len()))
}

pub fn list(path: &Path) -> CliResult<String> {
    let (_, catalog) = load(path)?;
    let mut out = format!(
        "{:<34} {:<20} {:<8} {:>6} {:>8} {:>8}\n",
        "id", "category", "modality", "burden", "coverage", "window_s"
    );
    for c in catalog.iter() {
        let category = serde_json::to_value(c.category).expect("enum serializes");
        let modality = serde_json::to_value(c.modality).expect("enum serializes");
        writeln!(
            out,
            "{:<34} {:<20} {:<8} {:>6.2} {:>8.2} {:>8.2}",
            c.id,
            category.as_str().unwrap_or_default(),
            modality.as_str().unwrap_or_default(),
            c.burden,
            c.coverage_prior,
            c.response_window_s
        )
        .expect("writing to a string");
    }
    Ok(out)
}

/// Writes a built-in catalog, video or audio, to `path`.
pub fn init(path: &Path, audio: bool) -> CliResult<String> {
    let catalog = if audio { audio_catalog() } else { default_catalog() };
    write_atomic(path, catalog.to_json().as_bytes())?;
    Ok(format!("{}: wrote {} challenges\n", path.display(), catalog.len()))
}

/// Parses a challenge fragment. `template` and `response_window_s` may be
/// left out; they then follow the catalog's shape and the default window.
pub fn parse_fragment(text: &str, like: &Catalog) -> CliResult<ChallengeSpec> {
    let bad = |e: serde_json::Error| CliError::Domain(format!("challenge fragment, line {}: {e}", e.line()));
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Domain("challenge fragment must be a JSON object".into()))?;
    if !obj.contains_key("template") {
        let id = obj.get("id").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        let shape = like.entries().first().map(|c| (c.template.len(), c.template.dim()));
        let (len, dim) = shape.unwrap_or((dfcaptcha_core::DEFAULT_TEMPLATE_LEN, dfcaptcha_core::DEFAULT_DIM));
        obj.insert("template".into(), serde_json::to_value(generate_template(&id, len, dim)).expect("serializes"));
    }
    obj.entry("response_window_s").or_insert(DEFAULT_RESPONSE_WINDOW_S.into());
    serde_json::from_value(value).map_err(bad)
}

/// Appends the fragment and rewrites the catalog in one atomic step. The
/// file is untouched when the result would be invalid.
pub fn add(path: &Path, fragment: &str) -> CliResult<String> {
    let (_, catalog) = load(path)?;
    let entry = parse_fragment(fragment, &catalog)?;
    let id = entry.id.clone();
    let updated = catalog
        .with_entry(entry)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    write_atomic(path, updated.to_json().as_bytes())?;
    Ok(format!("{}: added `{id}`, {} challenges\n", path.display(), updated.len()))
}
