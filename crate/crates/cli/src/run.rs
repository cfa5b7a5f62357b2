//! `dfcaptcha train`, `simulate` and `report`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dfcaptcha_core::detector::DetectorModel;
use dfcaptcha_core::metrics::{roc_points, RocPoint};
use dfcaptcha_core::sim::{run_experiment, train_models, EpisodeRecord, Metrics, Scenario, Truth, SHARED_MODEL_KEY};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{ensure_writable_dir, read_text, write_atomic, CliError, CliResult};

/// File stem of a shared model. Challenge ids cannot contain `_`.
const SHARED_STEM: &str = "_shared";

fn model_path(dir: &Path, key: &str) -> PathBuf {
    let stem = if key == SHARED_MODEL_KEY { SHARED_STEM } else { key };
    dir.join(format!("{stem}.json"))
}

fn sim_error(e: dfcaptcha_core::error::SimError) -> CliError {
    use dfcaptcha_core::error::SimError;
    match e {
        SimError::ConfigInvalid(m) => CliError::Config(m),
        other => CliError::Domain(other.to_string()),
    }
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSummary {
    pub key: String,
    pub file: String,
    pub threshold: f64,
    pub corpus_size: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub shared_model: bool,
    pub models: Vec<ModelSummary>,
}

pub fn train(cfg: &RunConfig) -> CliResult<String> {
    let catalog = cfg.catalog()?;
    let dir = ensure_writable_dir(&cfg.models_dir())?;
    ensure_writable_dir(&cfg.paths.output)?;
    let models = train_models(&catalog, &cfg.scenario, &cfg.train, cfg.shared_model).map_err(sim_error)?;
    let mut summary = TrainingSummary {
        seed: cfg.train.seed,
        shared_model: cfg.shared_model,
        models: Vec::new(),
    };
    for (key, model) in &models {
        let path = model_path(&dir, key);
        write_atomic(&path, model.to_json().as_bytes())?;
        summary.models.push(ModelSummary {
            key: key.clone(),
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            threshold: model.threshold,
            corpus_size: model.calibration.len(),
            initial_loss: model.training_loss.first().copied().unwrap_or(f64::NAN),
            final_loss: model.training_loss.last().copied().unwrap_or(f64::NAN),
        });
    }
    write_atomic(&cfg.paths.output.join("training_summary.json"), &pretty(&summary))?;

    let mut out = format!("trained {} model(s) into {}\n", models.len(), dir.display());
    for m in &summary.models {
        writeln!(out, "  {:<34} tau {:>8.4}  loss {:.4} -> {:.4}", m.key, m.threshold, m.initial_loss, m.final_loss)
            .expect("writing to a string");
    }
    Ok(out)
}

/// Every `*.json` model in `dir`, keyed by challenge id (or the shared key).
pub fn load_models(dir: &Path) -> CliResult<BTreeMap<String, DetectorModel>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, format!("{e} (run `dfcaptcha train` first)")))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut models = BTreeMap::new();
    for path in paths {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let model = DetectorModel::from_json(&read_text(&path)?)
            .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        let key = if stem == SHARED_STEM { SHARED_MODEL_KEY.to_string() } else { stem };
        if let Some(id) = &model.challenge_id {
            if *id != key {
                return Err(CliError::Domain(format!("{}: model is for `{id}`", path.display())));
            }
        }
        models.insert(key, model);
    }
    Ok(models)
}

/// One plot-ready row per episode, describing its first round.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    index: u64,
    truth: &'static str,
    seed: u64,
    decision: &'static str,
    rounds: usize,
    challenge: &'a str,
    outcome: &'static str,
    /// Empty for rounds that were never scored.
    score: Option<f64>,
    confidence: Option<f64>,
    reason: String,
    error: &'a str,
}

fn episodes_csv(records: &[EpisodeRecord]) -> CliResult<Vec<u8>> {
    use dfcaptcha_core::protocol::FinalDecision;
    use dfcaptcha_core::types::{Outcome, VerdictReason};
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let first = r.rounds.first();
        let scored = first.filter(|f| f.reason == VerdictReason::Scored);
        w.serialize(CsvRow {
            index: r.index,
            truth: r.truth.label(),
            seed: r.seed,
            decision: match r.decision {
                Some(FinalDecision::Accepted) => "accepted",
                Some(FinalDecision::Rejected) => "rejected",
                None => "",
            },
            rounds: r.rounds.len(),
            challenge: first.map_or("", |f| f.challenge.as_str()),
            outcome: match first.map(|f| f.outcome) {
                Some(Outcome::Pass) => "pass",
                Some(Outcome::Fail) => "fail",
                None => "",
            },
            score: scored.map(|f| f.score),
            confidence: first.map(|f| f.confidence),
            reason: first.map(|f| f.reason.to_string()).unwrap_or_default(),
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(|e| CliError::Io(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
}

fn roc_csv(records: &[EpisodeRecord]) -> CliResult<Vec<u8>> {
    let scores = |t: Truth| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.truth == t && r.error.is_none())
            .filter_map(EpisodeRecord::first_score)
            .collect()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in roc_points(&scores(Truth::Deepfake), &scores(Truth::Genuine)) {
        w.serialize::<RocPoint>(p).map_err(|e| CliError::Io(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
}

fn metrics_table(m: &Metrics) -> String {
    let mut out = String::new();
    let rows: [(&str, String); 7] = [
        ("genuine episodes", m.genuine_episodes.to_string()),
        ("deepfake episodes", m.deepfake_episodes.to_string()),
        ("failed episodes", m.failed_episodes.to_string()),
        ("TPR (deepfakes rejected)", format!("{:.4}", m.tpr)),
        ("FPR (genuine rejected)", format!("{:.4}", m.fpr)),
        ("AUC (first round)", format!("{:.4}", m.auc)),
        ("mean rounds", format!("{:.4}", m.mean_rounds)),
    ];
    for (k, v) in rows {
        writeln!(out, "{k:<26} {v:>10}").expect("writing to a string");
    }
    out
}

pub fn simulate(cfg: &RunConfig) -> CliResult<String> {
    let catalog = cfg.catalog()?;
    let models = load_models(&cfg.models_dir())?;
    let out_dir = ensure_writable_dir(&cfg.paths.output)?;
    let scenario = Scenario::new(cfg.scenario.clone(), catalog, models).map_err(sim_error)?;
    let run = run_experiment(&scenario, cfg.n_episodes, cfg.base_seed).map_err(sim_error)?;

    let mut log = String::new();
    for r in &run.records {
        log.push_str(&serde_json::to_string(r).expect("record serializes"));
        log.push('\n');
    }
    write_atomic(&out_dir.join("episodes.ndjson"), log.as_bytes())?;
    write_atomic(&out_dir.join("episodes.csv"), &episodes_csv(&run.records)?)?;
    write_atomic(&out_dir.join("report.json"), &pretty(&run.report))?;
    Ok(format!(
        "{}wrote episodes.ndjson, episodes.csv and report.json to {}\n",
        metrics_table(&run.report.metrics),
        out_dir.display()
    ))
}

pub fn read_log(path: &Path) -> CliResult<Vec<EpisodeRecord>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Domain(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Recomputes the metrics from an episode log alone. Outputs go to `out`,
/// or beside the log.
pub fn report(log: &Path, out: Option<&Path>) -> CliResult<String> {
    let records = read_log(log)?;
    if records.is_empty() {
        return Err(CliError::Domain(format!("{}: no episodes", log.display())));
    }
    let metrics = Metrics::from_records(&records);
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => log.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf(),
    };
    let dir = ensure_writable_dir(&dir)?;
    write_atomic(&dir.join("metrics.json"), &pretty(&metrics))?;
    write_atomic(&dir.join("episodes.csv"), &episodes_csv(&records)?)?;
    write_atomic(&dir.join("roc.csv"), &roc_csv(&records)?)?;
    Ok(format!(
        "{}wrote metrics.json, episodes.csv and roc.csv to {}\n",
        metrics_table(&metrics),
        dir.display()
    ))
}
