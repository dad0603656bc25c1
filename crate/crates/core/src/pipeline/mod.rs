//! Config-driven experiment runs.
//!
//! A run executes the selected stages in a fixed order inside a fresh
//! directory `runs/<timestamp>-<confighash>/` and always leaves a
//! `manifest.json` behind, even when a stage fails. Each stage declares the
//! artifacts it reads; a selection in which some stage would read an artifact
//! that no earlier selected stage produces is rejected before anything runs.

mod config;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attnscore::{feature_attention_report, parse_layers, tables_to_csv, tables_to_svg};
use crate::baseline::{featurize, fit_random_forest, kfold_grid_search, parse_grid, rf_predict, GridSearchResult, RFConfig};
use crate::embedmap::{
    coords_to_csv, coords_to_svg, extract_embeddings, trustworthiness, tsne, RowLabel, TsneConfig, TsneResult,
};
use crate::error::{Error, Result};
use crate::ingest::{filter_bandgap, load_records, stratified_split, synth_generate, RecordSet, Splits};
use crate::model::{init_model, save_checkpoint, RegressorModel};
use crate::textgen::{annotate_description, to_description, to_structured_string, AnnotatedText, TextFormat};
use crate::tokenizer::{build_vocab, encode, Vocab};
use crate::trainer::{bootstrap_metrics, metrics, train, Dataset, TrainReport, BOOTSTRAP_RESAMPLES};

pub use config::{
    AttnSection, BaselineSection, DataSection, ModelSection, PipelineConfig, RunSection, TextSection,
    TokenizerSection, TsneSection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Textgen,
    Tokenize,
    Train,
    Evaluate,
    Attn,
    Tsne,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Artifact {
    Records,
    Splits,
    Corpus,
    Vocab,
    Model,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Textgen,
        Stage::Tokenize,
        Stage::Train,
        Stage::Evaluate,
        Stage::Attn,
        Stage::Tsne,
        Stage::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Textgen => "textgen",
            Stage::Tokenize => "tokenize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Attn => "attn",
            Stage::Tsne => "tsne",
            Stage::Baseline => "baseline",
        }
    }

    fn reads(self) -> &'static [Artifact] {
        use Artifact::*;
        match self {
            Stage::Ingest => &[],
            Stage::Textgen => &[Records],
            Stage::Tokenize => &[Corpus, Splits],
            Stage::Train => &[Corpus, Splits, Vocab],
            Stage::Evaluate | Stage::Attn => &[Model, Corpus, Splits, Vocab],
            Stage::Tsne => &[Model, Corpus, Vocab, Records],
            Stage::Baseline => &[Records, Splits],
        }
    }

    fn writes(self) -> &'static [Artifact] {
        use Artifact::*;
        match self {
            Stage::Ingest => &[Records, Splits],
            Stage::Textgen => &[Corpus],
            Stage::Tokenize => &[Vocab],
            Stage::Train => &[Model],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage `{s}`")))
    }
}

/// Orders the selection canonically and checks every read is satisfied.
pub fn plan_stages(selected: &[Stage]) -> Result<Vec<Stage>> {
    let mut plan = selected.to_vec();
    plan.sort();
    if plan.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("a stage is listed twice"));
    }
    let mut available: Vec<Artifact> = Vec::new();
    for s in &plan {
        for a in s.reads() {
            if !available.contains(a) {
                return Err(Error::config(format!(
                    "stage `{s}` reads {a:?}, which no earlier selected stage produces"
                )));
            }
        }
        available.extend_from_slice(s.writes());
    }
    Ok(plan)
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: usize,
    pub band_gap: f64,
    pub crystal_system: String,
    #[serde(flatten)]
    pub text: AnnotatedText,
}

/// Renders every record in `format`. With `descriptions`, description texts
/// are taken from the map (keyed by source line index) and annotated by
/// substring search; the second value counts feature mentions not found.
pub fn corpus_from_records(
    rs: &RecordSet,
    format: TextFormat,
    descriptions: Option<&HashMap<usize, String>>,
) -> Result<(Vec<CorpusEntry>, usize)> {
    let mut corpus = Vec::with_capacity(rs.len());
    let mut unmatched = 0;
    for (r, &id) in rs.records.iter().zip(&rs.source_index) {
        let text = match (format, descriptions) {
            (TextFormat::Structured, _) => to_structured_string(&r.features),
            (TextFormat::Description, None) => to_description(&r.features),
            (TextFormat::Description, Some(map)) => {
                let t = map
                    .get(&id)
                    .ok_or_else(|| Error::input(format!("no description for record {id}")))?;
                let (ann, missing) = annotate_description(&r.features, t);
                unmatched += missing.len();
                ann
            }
        };
        corpus.push(CorpusEntry {
            id,
            band_gap: r.band_gap,
            crystal_system: r.features.crystal_system.clone(),
            text,
        });
    }
    Ok((corpus, unmatched))
}

pub fn corpus_to_jsonl(corpus: &[CorpusEntry]) -> Result<String> {
    let mut s = String::new();
    for e in corpus {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Schema {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub ok: bool,
    pub seconds: f64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_at: String,
    pub run_dir: PathBuf,
    pub config: PipelineConfig,
    pub seed: u64,
    pub deterministic: bool,
    pub inputs: Vec<InputHash>,
    pub stages: Vec<StageRecord>,
    pub notes: Vec<String>,
    pub success: bool,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Ctx {
    records: Option<RecordSet>,
    splits: Option<Splits>,
    corpus: Option<Vec<CorpusEntry>>,
    vocab: Option<Vocab>,
    model: Option<RegressorModel>,
    report: Option<TrainReport>,
    inputs: Vec<InputHash>,
    notes: Vec<String>,
}

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T> {
    x.as_ref().ok_or_else(|| Error::input(format!("{what} not available")))
}

/// Creates `<out>/<timestamp>-<hash>`, adding `-1`, `-2`, … if taken.
pub fn create_run_dir(out: &Path, config_hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", &config_hash[..8.min(config_hash.len())]);
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Runs the configured stages. Progress lines go to `log`.
pub fn run_pipeline(cfg: &PipelineConfig, command: &str, log: &mut (dyn FnMut(&str) + Send)) -> Result<RunOutcome> {
    cfg.validate()?;
    let plan = plan_stages(&cfg.run.stages)?;
    let threads = if cfg.run.deterministic { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    pool.install(|| run_plan(cfg, &plan, command, log))
}

fn run_plan(cfg: &PipelineConfig, plan: &[Stage], command: &str, log: &mut (dyn FnMut(&str) + Send)) -> Result<RunOutcome> {
    let started = Instant::now();
    let started_at = chrono::Utc::now().to_rfc3339();
    let config_text = cfg.to_toml();
    let run_dir = create_run_dir(&cfg.resolve(&cfg.run.out_dir), &sha256_hex(config_text.as_bytes()))?;
    fs::write(run_dir.join("config.toml"), &config_text)?;
    log(&format!("run directory {}", run_dir.display()));

    let mut ctx = Ctx::default();
    let mut stages = Vec::new();
    let mut failure = None;
    for &stage in plan {
        let t0 = Instant::now();
        log(&format!("stage {stage}"));
        let res = run_stage(stage, cfg, &run_dir, &mut ctx);
        let (ok, artifacts) = match res {
            Ok(a) => (true, a),
            Err(e) => {
                failure = Some(Error::Stage {
                    stage: stage.name().into(),
                    source: Box::new(e),
                });
                (false, Vec::new())
            }
        };
        stages.push(StageRecord {
            stage,
            ok,
            seconds: t0.elapsed().as_secs_f64(),
            artifacts,
        });
        if !ok {
            break;
        }
    }
    let manifest = RunManifest {
        tool: "gaptext".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        started_at,
        run_dir: run_dir.clone(),
        config: cfg.clone(),
        seed: cfg.run.seed,
        deterministic: cfg.run.deterministic,
        inputs: ctx.inputs.clone(),
        stages,
        notes: ctx.notes.clone(),
        success: failure.is_none(),
        error: failure.as_ref().map(|e| e.to_string()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    fs::write(run_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(RunOutcome { run_dir, manifest }),
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>, out: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    out.push(name.to_string());
    Ok(())
}

fn run_stage(stage: Stage, cfg: &PipelineConfig, dir: &Path, ctx: &mut Ctx) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let seed = cfg.run.seed;
    match stage {
        Stage::Ingest => {
            let rs = match &cfg.data.path {
                Some(p) => {
                    let p = cfg.resolve(p);
                    ctx.inputs.push(InputHash {
                        path: p.display().to_string(),
                        sha256: sha256_hex(&fs::read(&p)?),
                    });
                    load_records(&p)?
                }
                None => synth_generate(cfg.data.n, seed),
            };
            let rs = filter_bandgap(&rs, cfg.data.bandgap_min, cfg.data.bandgap_max.unwrap_or(f64::INFINITY));
            let splits = stratified_split(&rs, seed, cfg.data.bins)?;
            rs.write_jsonl(dir.join("records.jsonl"))?;
            out.push("records.jsonl".into());
            write(dir, "splits.json", serde_json::to_string_pretty(&splits)?, &mut out)?;
            ctx.records = Some(rs);
            ctx.splits = Some(splits);
        }
        Stage::Textgen => {
            let rs = need(&ctx.records, "records")?;
            let external = match (&cfg.text.descriptions, cfg.text.format) {
                (Some(p), TextFormat::Description) => {
                    let p = cfg.resolve(p);
                    let bytes = fs::read(&p)?;
                    ctx.inputs.push(InputHash {
                        path: p.display().to_string(),
                        sha256: sha256_hex(&bytes),
                    });
                    Some(load_descriptions(&String::from_utf8_lossy(&bytes))?)
                }
                _ => None,
            };
            let (corpus, unmatched) = corpus_from_records(rs, cfg.text.format, external.as_ref())?;
            if unmatched > 0 {
                ctx.notes.push(format!("{unmatched} feature mentions not found in external descriptions"));
            }
            let s = corpus_to_jsonl(&corpus)?;
            write(dir, "corpus.jsonl", s, &mut out)?;
            ctx.corpus = Some(corpus);
        }
        Stage::Tokenize => {
            let corpus = need(&ctx.corpus, "corpus")?;
            let splits = need(&ctx.splits, "splits")?;
            let texts: Vec<&str> = splits.train.iter().map(|&i| corpus[i].text.text.as_str()).collect();
            let vocab = build_vocab(&texts, cfg.tokenizer.max_size)?;
            let truncated = corpus
                .iter()
                .filter(|e| encode(&vocab, &e.text.text, cfg.tokenizer.max_len).truncated)
                .count();
            if truncated > 0 {
                ctx.notes.push(format!(
                    "{truncated} of {} texts truncated to {} tokens",
                    corpus.len(),
                    cfg.tokenizer.max_len
                ));
            }
            write(dir, "vocab.txt", vocab.to_text(), &mut out)?;
            ctx.vocab = Some(vocab);
        }
        Stage::Train => {
            let (corpus, splits, vocab) = (need(&ctx.corpus, "corpus")?, need(&ctx.splits, "splits")?, need(&ctx.vocab, "vocab")?);
            let mcfg = cfg.model.model_config(vocab.len(), cfg.tokenizer.max_len, seed);
            let model = init_model(&mcfg)?;
            let tcfg = crate::trainer::TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let tr = dataset(corpus, &splits.train, vocab, mcfg.max_len)?;
            let va = dataset(corpus, &splits.val, vocab, mcfg.max_len)?;
            let (model, report) = train(model, &tr, &va, &tcfg)?;
            save_checkpoint(&dir.join("model.json"), &model, Some(vocab))?;
            out.push("model.json".into());
            write(dir, "train_log.csv", report.to_csv(), &mut out)?;
            ctx.notes.push(report.summary());
            ctx.model = Some(model);
            ctx.report = Some(report);
        }
        Stage::Evaluate => {
            let (corpus, splits, vocab, model) = (
                need(&ctx.corpus, "corpus")?,
                need(&ctx.splits, "splits")?,
                need(&ctx.vocab, "vocab")?,
                need(&ctx.model, "model")?,
            );
            write(dir, "metrics.csv", metrics_csv(model, vocab, corpus, splits, seed)?, &mut out)?;
        }
        Stage::Attn => {
            let (corpus, splits, vocab, model) = (
                need(&ctx.corpus, "corpus")?,
                need(&ctx.splits, "splits")?,
                need(&ctx.vocab, "vocab")?,
                need(&ctx.model, "model")?,
            );
            let texts: Vec<AnnotatedText> = if cfg.attn.all {
                corpus.iter().map(|e| e.text.clone()).collect()
            } else {
                splits.test.iter().map(|&i| corpus[i].text.clone()).collect()
            };
            let layers = parse_layers(&cfg.attn.layers, model.config.n_layers)?;
            let rep = feature_attention_report(model, vocab, &texts, &layers)?;
            ctx.notes.extend(rep.warnings.iter().cloned());
            write(dir, "attention.csv", tables_to_csv(&rep.tables), &mut out)?;
            write(dir, "attention.svg", tables_to_svg(&rep.tables), &mut out)?;
        }
        Stage::Tsne => {
            let (corpus, vocab, model) = (need(&ctx.corpus, "corpus")?, need(&ctx.vocab, "vocab")?, need(&ctx.model, "model")?);
            let map = embedding_map(model, vocab, corpus, &cfg.tsne, seed)?;
            ctx.notes.extend(map.notes.iter().cloned());
            write(dir, "tsne.csv", coords_to_csv(&map.result.coords, &map.labels), &mut out)?;
            write(dir, "tsne.svg", coords_to_svg(&map.result.coords, &map.labels, cfg.tsne.color_by), &mut out)?;
            write(dir, "tsne_kl.csv", kl_csv(&map.result.kl), &mut out)?;
        }
        Stage::Baseline => {
            let (rs, splits) = (need(&ctx.records, "records")?, need(&ctx.splits, "splits")?);
            let grid = match &cfg.baseline.grid {
                Some(p) => {
                    let p = cfg.resolve(p);
                    let text = fs::read_to_string(&p)?;
                    ctx.inputs.push(InputHash {
                        path: p.display().to_string(),
                        sha256: sha256_hex(text.as_bytes()),
                    });
                    parse_grid(&text)?
                }
                None => vec![RFConfig::default()],
            };
            let rep = baseline_report(rs, splits, &grid, cfg.baseline.folds, seed)?;
            write(dir, "baseline_cv.csv", rep.search.to_csv(), &mut out)?;
            write(dir, "baseline_metrics.csv", rep.metrics_csv, &mut out)?;
            ctx.notes.push(format!("baseline best grid point: {}", rep.search.best.label()));
        }
    }
    Ok(out)
}

/// `split,n,mae,rmse,r2,mae_sd,rmse_sd,r2_sd` for every non-empty split;
/// the `_sd` columns are bootstrap standard deviations.
pub fn metrics_csv(model: &RegressorModel, vocab: &Vocab, corpus: &[CorpusEntry], splits: &Splits, seed: u64) -> Result<String> {
    let mut s = String::from("split,n,mae,rmse,r2,mae_sd,rmse_sd,r2_sd\n");
    for (name, idx) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if idx.is_empty() {
            continue;
        }
        let d = dataset(corpus, idx, vocab, model.config.max_len)?;
        let p = model.predict(&d.seqs)?;
        let m = metrics(&p, &d.targets)?;
        let sd = bootstrap_metrics(&p, &d.targets, BOOTSTRAP_RESAMPLES, seed)?;
        s.push_str(&format!(
            "{name},{},{},{},{},{},{},{}\n",
            d.len(),
            m.mae,
            m.rmse,
            m.r2,
            sd.mae,
            sd.rmse,
            sd.r2
        ));
    }
    Ok(s)
}

pub struct EmbeddingMap {
    pub result: TsneResult,
    pub labels: Vec<RowLabel>,
    pub notes: Vec<String>,
}

/// t-SNE of pooled embeddings for every corpus entry. The perplexity is
/// lowered to `(n - 1) / 3` when the corpus is too small for the requested
/// value.
pub fn embedding_map(
    model: &RegressorModel,
    vocab: &Vocab,
    corpus: &[CorpusEntry],
    cfg: &TsneSection,
    seed: u64,
) -> Result<EmbeddingMap> {
    let seqs: Vec<_> = corpus.iter().map(|e| encode(vocab, &e.text.text, model.config.max_len)).collect();
    let labels: Vec<RowLabel> = corpus
        .iter()
        .map(|e| RowLabel {
            id: e.id.to_string(),
            crystal_system: e.crystal_system.clone(),
            band_gap: e.band_gap,
        })
        .collect();
    let layer = cfg.layer.unwrap_or(model.config.n_layers);
    let emb = extract_embeddings(model, &seqs, &labels, layer, model.config.pooling)?;
    let mut notes = Vec::new();
    let max_perp = (emb.n as f64 - 1.0) / 3.0;
    let mut perplexity = cfg.perplexity;
    if perplexity > max_perp {
        perplexity = max_perp;
        notes.push(format!("t-SNE perplexity lowered to {max_perp:.3} for {} points", emb.n));
    }
    let tcfg = TsneConfig {
        perplexity,
        iterations: cfg.iterations,
        learning_rate: cfg.learning_rate,
        exaggeration: cfg.exaggeration,
        exaggeration_iters: cfg.exaggeration_iters,
        seed,
        ..TsneConfig::default()
    };
    let result = tsne(&emb.data, emb.n, emb.dim, &tcfg)?;
    if 2 * cfg.trust_k < emb.n {
        let t = trustworthiness(&emb.data, emb.dim, &result.coords, cfg.trust_k)?;
        notes.push(format!("t-SNE trustworthiness(k={}) = {t:.4}", cfg.trust_k));
    }
    Ok(EmbeddingMap { result, labels, notes })
}

pub fn kl_csv(kl: &[f64]) -> String {
    let mut s = String::from("iteration,kl\n");
    for (i, v) in kl.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    s
}

pub struct BaselineReport {
    pub search: GridSearchResult,
    /// `model,split,n,mae,rmse,r2` for the refit forest and the mean predictor
    /// on the test split.
    pub metrics_csv: String,
}

/// Grid search by k-fold CV on train+val, refit of the best point on
/// train+val, then scoring on test. `seed` replaces every grid point's seed.
pub fn baseline_report(rs: &RecordSet, splits: &Splits, grid: &[RFConfig], folds: usize, seed: u64) -> Result<BaselineReport> {
    let grid: Vec<RFConfig> = grid.iter().map(|c| RFConfig { seed, ..c.clone() }).collect();
    let fit_idx: Vec<usize> = splits.train.iter().chain(&splits.val).copied().collect();
    let x = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| featurize(&rs.records[i].features)).collect() };
    let y = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| rs.records[i].band_gap).collect() };
    let (xf, yf) = (x(&fit_idx), y(&fit_idx));
    let search = kfold_grid_search(&xf, &yf, &grid, folds, seed)?;
    let forest = fit_random_forest(&xf, &yf, &search.best)?;
    let (xt, yt) = (x(&splits.test), y(&splits.test));
    let p = rf_predict(&forest, &xt)?;
    let mean = yf.iter().sum::<f64>() / yf.len() as f64;
    let rf = metrics(&p, &yt)?;
    let mp = metrics(&vec![mean; yt.len()], &yt)?;
    let mut s = String::from("model,split,n,mae,rmse,r2\n");
    s.push_str(&format!("random_forest,test,{},{},{},{}\n", yt.len(), rf.mae, rf.rmse, rf.r2));
    s.push_str(&format!("mean_predictor,test,{},{},{},{}\n", yt.len(), mp.mae, mp.rmse, mp.r2));
    Ok(BaselineReport { search, metrics_csv: s })
}

/// Encodes the corpus entries at `idx`.
pub fn dataset(corpus: &[CorpusEntry], idx: &[usize], vocab: &Vocab, max_len: usize) -> Result<Dataset> {
    let texts: Vec<&str> = idx.iter().map(|&i| corpus[i].text.text.as_str()).collect();
    let targets: Vec<f64> = idx.iter().map(|&i| corpus[i].band_gap).collect();
    Dataset::encode(vocab, &texts, &targets, max_len)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptionLine {
    id: usize,
    text: String,
}

/// Parses `{"id": .., "text": ..}` lines into an id → text map.
pub fn load_descriptions(text: &str) -> Result<HashMap<usize, String>> {
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: DescriptionLine = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: n + 1,
            message: e.to_string(),
        })?;
        map.insert(d.id, d.text);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_orders_and_checks_reads() {
        let p = plan_stages(&[Stage::Textgen, Stage::Ingest]).unwrap();
        assert_eq!(p, [Stage::Ingest, Stage::Textgen]);
        let e = plan_stages(&[Stage::Ingest, Stage::Train]).unwrap_err().to_string();
        assert!(e.contains("train"), "{e}");
        assert!(plan_stages(&[Stage::Ingest, Stage::Ingest]).is_err());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = PipelineConfig::from_toml("[model]\nwidth = 3\n").unwrap_err().to_string();
        assert!(e.contains("width"), "{e}");
    }
}
