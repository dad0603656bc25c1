use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gaptext::attnscore::{feature_attention_report, parse_layers, tables_to_csv, tables_to_svg};
use gaptext::baseline::{parse_grid, RFConfig};
use gaptext::embedmap::{coords_to_csv, coords_to_svg, ColorBy};
use gaptext::ingest::{filter_bandgap, load_records, stratified_split, synth_generate, Splits};
use gaptext::model::{init_model, load_checkpoint, save_checkpoint, Flavor, Pooling};
use gaptext::pipeline::{
    baseline_report, corpus_from_records, corpus_to_jsonl, dataset, embedding_map, kl_csv, load_descriptions,
    metrics_csv, read_corpus, run_pipeline, PipelineConfig, TsneSection,
};
use gaptext::textgen::{AnnotatedText, TextFormat};
use gaptext::tokenizer::{build_vocab, encode, Vocab};
use gaptext::trainer::{apply_freeze, train, FreezeStrategy};

#[derive(Parser)]
#[command(name = "gaptext", version, about = "Band-gap regression from material text")]
struct Cli {
    /// Seed for every random choice made by the command (default 0; for
    /// `pipeline`, overrides the configured seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run all numeric work on one thread so results are bit-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Text rendering of records: structured (default) or description.
    #[arg(long, global = true)]
    format: Option<TextFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic records as JSON lines.
    Synth {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and filter records, then write a stratified split.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        hi: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Split file (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Filtered records; split indices refer to this file.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// Render records as annotated text.
    Textgen {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON lines of {"id", "text"} used instead of template descriptions.
        #[arg(long)]
        descriptions: Option<PathBuf>,
    },
    /// Build a vocabulary and report token lengths.
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 512)]
        max_len: usize,
        #[arg(long, default_value_t = 512)]
        max_size: usize,
        /// Restrict the vocabulary to the training split.
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Fine-tune a regressor.
    Train(TrainArgs),
    /// Score a checkpoint on every split.
    Eval {
        #[command(flatten)]
        data: ModelData,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feature-wise attention scores.
    Attn {
        #[command(flatten)]
        data: ModelData,
        /// Score only the test split of this split file.
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Comma-separated: first, last or 1-based block numbers.
        #[arg(long, default_value = "first,last", value_delimiter = ',')]
        layers: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Two-dimensional t-SNE map of pooled embeddings.
    Tsne {
        #[command(flatten)]
        data: ModelData,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value = "crystal_system")]
        color_by: ColorBy,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        kl: Option<PathBuf>,
    },
    /// Random-forest baseline with k-fold grid search.
    Baseline {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// CV table (config, fold, mae).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test metrics of the refit forest and the mean predictor.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run a configured experiment end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ModelData {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file; defaults to the one stored in the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Pipeline-style TOML; only [model], [train] and [tokenizer] are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    freeze: Option<FreezeStrategy>,
    #[arg(long)]
    flavor: Option<Flavor>,
    #[arg(long)]
    pooling: Option<Pooling>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

fn read_splits(path: &Path) -> Result<Splits> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(d: &ModelData) -> Result<(gaptext::model::RegressorModel, Vocab, Vec<gaptext::pipeline::CorpusEntry>)> {
    let (model, stored) = load_checkpoint(&d.model)?;
    let vocab = match (&d.vocab, stored) {
        (Some(p), _) => Vocab::load(p)?,
        (None, Some(v)) => v,
        (None, None) => bail!("checkpoint has no vocabulary; pass --vocab"),
    };
    let corpus = read_corpus(&d.corpus)?;
    Ok((model, vocab, corpus))
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let format = cli.format.unwrap_or(TextFormat::Structured);
    match cli.command {
        Command::Synth { n, out } => {
            synth_generate(n, seed).write_jsonl(&out)?;
            eprintln!("wrote {n} records to {}", out.display());
        }
        Command::Ingest {
            input,
            lo,
            hi,
            bins,
            out,
            records_out,
        } => {
            let all = load_records(&input)?;
            let rs = filter_bandgap(&all, lo, hi);
            if rs.len() != all.len() && records_out.is_none() {
                eprintln!(
                    "warning: {} records outside [{lo}, {hi}] dropped; pass --records-out so split indices have a matching record file",
                    all.len() - rs.len()
                );
            }
            let splits = stratified_split(&rs, seed, bins)?;
            fs::write(&out, serde_json::to_string_pretty(&splits)?)?;
            if let Some(p) = records_out {
                rs.write_jsonl(&p)?;
            }
            eprintln!(
                "{} records: train {}, val {}, test {}",
                rs.len(),
                splits.train.len(),
                splits.val.len(),
                splits.test.len()
            );
        }
        Command::Textgen {
            input,
            out,
            descriptions,
        } => {
            let rs = load_records(&input)?;
            let map = match &descriptions {
                Some(p) => Some(load_descriptions(&fs::read_to_string(p)?)?),
                None => None,
            };
            let (corpus, unmatched) = corpus_from_records(&rs, format, map.as_ref())?;
            if unmatched > 0 {
                eprintln!("warning: {unmatched} feature mentions not found in descriptions");
            }
            fs::write(&out, corpus_to_jsonl(&corpus)?)?;
        }
        Command::Tokenize {
            input,
            vocab,
            max_len,
            max_size,
            splits,
        } => {
            let corpus = read_corpus(&input)?;
            let texts: Vec<&str> = match &splits {
                Some(p) => read_splits(p)?.train.iter().map(|&i| corpus[i].text.text.as_str()).collect(),
                None => corpus.iter().map(|e| e.text.text.as_str()).collect(),
            };
            let v = build_vocab(&texts, max_size)?;
            v.save(&vocab)?;
            let lens: Vec<usize> = corpus.iter().map(|e| encode(&v, &e.text.text, usize::MAX).ids.len()).collect();
            let truncated = lens.iter().filter(|&&l| l > max_len).count();
            println!("texts,vocab_size,min_len,max_len,truncated");
            println!(
                "{},{},{},{},{truncated}",
                corpus.len(),
                v.len(),
                lens.iter().min().unwrap_or(&0),
                lens.iter().max().unwrap_or(&0)
            );
        }
        Command::Train(a) => {
            let cfg = match &a.config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            let mut mcfg_section = cfg.model.clone();
            if let Some(f) = a.flavor {
                mcfg_section.flavor = f;
            }
            if let Some(p) = a.pooling {
                mcfg_section.pooling = Some(p);
            }
            let mut tcfg = cfg.train.clone();
            tcfg.seed = seed;
            if let Some(s) = a.freeze {
                tcfg.freeze = s;
            }
            if let Some(e) = a.epochs {
                tcfg.epochs = e;
            }
            let splits = read_splits(&a.splits)?;
            let corpus = read_corpus(&a.corpus)?;
            let vocab = Vocab::load(&a.vocab)?;
            let mcfg = mcfg_section.model_config(vocab.len(), cfg.tokenizer.max_len, seed);
            let mut model = init_model(&mcfg)?;
            let fr = apply_freeze(&mut model, tcfg.freeze)?;
            eprintln!("trainable {} of {} parameters ({:.2}%)", fr.trainable, fr.total, fr.percent);
            let tr = dataset(&corpus, &splits.train, &vocab, mcfg.max_len)?;
            let va = dataset(&corpus, &splits.val, &vocab, mcfg.max_len)?;
            let (model, report) = train(model, &tr, &va, &tcfg)?;
            save_checkpoint(&a.out, &model, Some(&vocab))?;
            emit(a.log.as_deref(), &report.to_csv())?;
            eprintln!("{}", report.summary());
        }
        Command::Eval { data, splits, out } => {
            let (model, vocab, corpus) = load_model(&data)?;
            let splits = read_splits(&splits)?;
            emit(out.as_deref(), &metrics_csv(&model, &vocab, &corpus, &splits, seed)?)?;
        }
        Command::Attn {
            data,
            splits,
            layers,
            out,
            svg,
        } => {
            let (model, vocab, corpus) = load_model(&data)?;
            let texts: Vec<AnnotatedText> = match &splits {
                Some(p) => read_splits(p)?.test.iter().map(|&i| corpus[i].text.clone()).collect(),
                None => corpus.iter().map(|e| e.text.clone()).collect(),
            };
            let layers = parse_layers(&layers, model.config.n_layers)?;
            let rep = feature_attention_report(&model, &vocab, &texts, &layers)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            emit(out.as_deref(), &tables_to_csv(&rep.tables))?;
            if let Some(p) = svg {
                fs::write(p, tables_to_svg(&rep.tables))?;
            }
        }
        Command::Tsne {
            data,
            layer,
            perplexity,
            iterations,
            color_by,
            out,
            svg,
            kl,
        } => {
            let (model, vocab, corpus) = load_model(&data)?;
            let section = TsneSection {
                layer,
                perplexity,
                iterations,
                color_by,
                ..TsneSection::default()
            };
            let map = embedding_map(&model, &vocab, &corpus, &section, seed)?;
            for n in &map.notes {
                eprintln!("{n}");
            }
            emit(out.as_deref(), &coords_to_csv(&map.result.coords, &map.labels))?;
            if let Some(p) = svg {
                fs::write(p, coords_to_svg(&map.result.coords, &map.labels, color_by))?;
            }
            if let Some(p) = kl {
                fs::write(p, kl_csv(&map.result.kl))?;
            }
        }
        Command::Baseline {
            records,
            splits,
            grid,
            folds,
            out,
            metrics,
        } => {
            let rs = load_records(&records)?;
            let splits = read_splits(&splits)?;
            if splits.len() != rs.len() {
                bail!("split file covers {} records but {} were loaded", splits.len(), rs.len());
            }
            let grid = match &grid {
                Some(p) => parse_grid(&fs::read_to_string(p)?)?,
                None => vec![RFConfig::default()],
            };
            let rep = baseline_report(&rs, &splits, &grid, folds, seed)?;
            emit(out.as_deref(), &rep.search.to_csv())?;
            match metrics {
                Some(p) => fs::write(p, &rep.metrics_csv)?,
                None => eprint!("{}", rep.metrics_csv),
            }
            eprintln!("best: {}", rep.search.best.label());
        }
        Command::Pipeline { config } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.run.seed = s;
            }
            if let Some(f) = cli.format {
                cfg.text.format = f;
            }
            if cli.deterministic {
                cfg.run.deterministic = true;
            }
            let command: Vec<String> = std::env::args().collect();
            let outcome = run_pipeline(&cfg, &command.join(" "), &mut |line| eprintln!("{line}"))?;
            for n in &outcome.manifest.notes {
                eprintln!("{n}");
            }
            println!("{}", outcome.run_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
