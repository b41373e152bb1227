//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::baselines::{ilp_compress, weigh_terms, IlpInstance, TermWeights};
use crate::checkpoint::Checkpoint;
use crate::corpus::{corpus_stats, generate_synthetic, read_triplets, write_triplets, SynthProfile, TermKind};
use crate::decode::{compress, DecodeOptions};
use crate::error::{Error, Result};
use crate::experiment::{self, decode_all, ordering_checks, score, ExperimentConfig, Method};
use crate::manifest::RunManifest;
use crate::model::{Mode, MtlModel};
use crate::rouge::{corpus_rouge, format_comparison, format_table};
use crate::train::{metrics_csv, tune_lambdas, Profile, TrainConfig, Trainer, TuneTarget};

#[derive(Debug, Parser)]
#[command(name = "titlecomp", version, about = "Product title compression with pointer networks and query-guided multi-task training")]
pub struct Cli {
    /// Directory for outputs whose location is not given explicitly.
    #[arg(long, global = true, env = "TITLECOMP_OUT_DIR", default_value = "titlecomp-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic triplet corpus.
    GenData(GenDataArgs),
    /// Train one model on the training split of a corpus.
    Train(TrainArgs),
    /// Compress titles with a trained checkpoint, one per line.
    Compress(CompressArgs),
    /// Score candidate titles against references.
    Evaluate(EvaluateArgs),
    /// Run the baselines and the neural methods on one split and report ROUGE.
    Compare(CompareArgs),
    /// Grid-search the loss weights on the dev split.
    Tune(TuneArgs),
    /// Solve one weighted term-selection instance.
    Ilp(IlpArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file overriding generator settings.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
}

/// Options shared by every command that trains.
#[derive(Debug, Args, Clone)]
pub struct TrainingOpts {
    /// TOML training configuration; unset keys come from the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile, default_value = "desk")]
    pub profile: Profile,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct DecodeOpts {
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 12)]
    pub max_steps: usize,
    /// Rank finished hypotheses by `log_prob / len^alpha`.
    #[arg(long)]
    pub length_penalty: Option<f64>,
    /// Never point at the same source position twice.
    #[arg(long)]
    pub no_repeat: bool,
}

impl DecodeOpts {
    fn options(&self) -> DecodeOptions {
        DecodeOptions {
            beam: self.beam,
            max_steps: self.max_steps,
            length_penalty: self.length_penalty,
            no_repeat: self.no_repeat,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub training: TrainingOpts,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Start from this checkpoint; a missing query decoder is freshly initialized.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Run directory (default: `<out-dir>/train-<mode>-seed<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    /// Also write the table here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub training: TrainingOpts,
    /// Character budget for Trunc. and ILP.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Comma-separated subset of trunc, ilp, ptr-net, vanilla-mtl, agree-mtl.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub training: TrainingOpts,
    /// `vanilla` tunes λ; `agree` tunes λ2 with λ1 = 0.5.
    #[arg(long, default_value = "agree")]
    pub target: String,
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Args)]
pub struct IlpArgs {
    /// One term per line: `text<TAB>kind`.
    #[arg(long)]
    pub terms: PathBuf,
    #[arg(long)]
    pub budget: usize,
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse()
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse()
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse()
}

/// Profile defaults, overlaid with the TOML file, overlaid with flags.
pub fn resolve_config(opts: &TrainingOpts, mode: Option<Mode>) -> Result<TrainConfig> {
    let base = TrainConfig::profile(opts.profile);
    let mut cfg = match &opts.config {
        None => base,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            let overlay: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
            let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(vec![e.to_string()]))?;
            merged.extend(overlay);
            merged
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(vec![format!("{}: {e}", path.display())]))?
        }
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = opts.batch_size {
        cfg.batch_size = b;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Runs a parsed command line. `Ok(false)` means the command finished but
/// some items failed (reported on stderr and in the manifest).
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a, &cli.out_dir),
        Command::Compress(a) => cmd_compress(&a),
        Command::Evaluate(a) => cmd_evaluate(&a, &cli.out_dir),
        Command::Compare(a) => cmd_compare(&a, &cli.out_dir),
        Command::Tune(a) => cmd_tune(&a, &cli.out_dir),
        Command::Ilp(a) => cmd_ilp(&a),
    }
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<bool> {
    let profile = match &a.synth_config {
        None => SynthProfile::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", p.display())]))?
        }
    };
    let data = generate_synthetic(a.n, a.seed, &profile);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_triplets(&a.out, &data)?;
    let mut m = RunManifest::new("gen-data").with_corpus(&a.out)?;
    m.seed = Some(a.seed);
    m.config = json!({ "n": a.n, "profile": profile });
    m.outputs = vec![a.out.clone()];
    m.metrics = serde_json::to_value(corpus_stats(&data))?;
    m.save(sidecar(&a.out))?;
    println!("wrote {} triplets to {}", data.len(), a.out.display());
    Ok(true)
}

pub fn cmd_train(a: &TrainArgs, out_dir: &Path) -> Result<bool> {
    let cfg = resolve_config(&a.training, a.mode)?;
    let corpus = read_triplets(&a.corpus)?;
    let prep = experiment::prepare(&corpus, cfg.seed, cfg.query_min_count)?;
    let run_dir = a
        .out
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("train-{}-seed{}", cfg.mode, cfg.seed)));
    ensure_dir(&run_dir)?;

    let model = match &a.init {
        None => MtlModel::new(cfg.dims(prep.vocab.len()), cfg.mtl(), cfg.seed),
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.vocab != prep.vocab {
                return Err(Error::Checkpoint(format!(
                    "{} was trained with a different vocabulary",
                    path.display()
                )));
            }
            ck.to_model(cfg.seed, Some(cfg.mtl()))?
        }
    };
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let metrics_path = run_dir.join("metrics.csv");
    trainer.fit(&prep.train, |_, m| {
        eprintln!("epoch {:>3}  combined {:.4}  title {:.4}", m.epoch, m.combined, m.title);
        Ok(false)
    })?;
    write_file(&metrics_path, &metrics_csv(&trainer.history))?;
    let ckpt_path = run_dir.join("checkpoint.json");
    Checkpoint::from_model(&trainer.model, &prep.vocab).save(&ckpt_path)?;

    let dev_out = decode_all(&trainer.model, &prep.vocab, &prep.split.dev, &a.decode.options())?;
    let dev = score(&dev_out, &prep.split.dev)?;

    let mut m = RunManifest::new("train").with_corpus(&a.corpus)?;
    m.seed = Some(cfg.seed);
    m.config = serde_json::to_value(&cfg)?;
    m.checkpoint = Some(ckpt_path.clone());
    m.outputs = vec![ckpt_path.clone(), metrics_path];
    m.metrics = json!({
        "split": [prep.split.train.len(), prep.split.dev.len(), prep.split.test.len()],
        "skipped": prep.skipped,
        "final_epoch": trainer.history.last().map(|e| e.csv_row()),
        "dev_rouge": dev,
    });
    m.save(run_dir.join("manifest.json"))?;
    println!("checkpoint: {}", ckpt_path.display());
    println!("dev ROUGE:\n{}", format_table(&dev));
    Ok(true)
}

pub fn cmd_compress(a: &CompressArgs) -> Result<bool> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.to_model(0, None)?;
    let lines = read_lines(&a.input)?;
    let opts = a.decode.options();
    let mut out = String::new();
    let mut m = RunManifest::new("compress");
    for (i, line) in lines.iter().enumerate() {
        match compress(&model, &ck.vocab, line, &opts) {
            Ok(s) => out.push_str(&s),
            Err(e) => {
                eprintln!("line {}: {e}", i + 1);
                m.fail(format!("line {}: {e}", i + 1));
            }
        }
        out.push('\n');
    }
    write_file(&a.output, &out)?;
    m.config = json!({ "beam": opts.beam, "max_steps": opts.max_steps, "length_penalty": opts.length_penalty, "no_repeat": opts.no_repeat });
    m.checkpoint = Some(a.checkpoint.clone());
    m.outputs = vec![a.output.clone()];
    m.metrics = json!({ "lines": lines.len(), "failed": m.errors.len() });
    m.save(sidecar(&a.output))?;
    Ok(m.ok)
}

pub fn cmd_evaluate(a: &EvaluateArgs, out_dir: &Path) -> Result<bool> {
    let cand = read_lines(&a.candidates)?;
    let refs = read_lines(&a.references)?;
    if cand.len() != refs.len() {
        return Err(Error::Contract(format!(
            "{} candidate lines but {} reference lines",
            cand.len(),
            refs.len()
        )));
    }
    let pairs: Vec<(&str, &str)> = cand.iter().zip(&refs).map(|(c, r)| (c.as_str(), r.as_str())).collect();
    let scores = corpus_rouge(&pairs)?;
    let table = format_table(&scores);
    print!("{table}");
    let mut m = RunManifest::new("evaluate");
    m.config = json!({ "candidates": a.candidates, "references": a.references });
    m.metrics = serde_json::to_value(scores)?;
    let manifest_path = match &a.output {
        Some(p) => {
            write_file(p, &table)?;
            m.outputs = vec![p.clone()];
            sidecar(p)
        }
        None => {
            ensure_dir(out_dir)?;
            out_dir.join("evaluate.manifest.json")
        }
    };
    m.save(manifest_path)?;
    Ok(true)
}

pub fn cmd_compare(a: &CompareArgs, out_dir: &Path) -> Result<bool> {
    let cfg = resolve_config(&a.training, None)?;
    let corpus = read_triplets(&a.corpus)?;
    let methods = a.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    let exp = ExperimentConfig {
        decode: a.decode.options(),
        budget: a.budget,
        ..ExperimentConfig::new(cfg.clone())
    };
    let run_dir = a.out.clone().unwrap_or_else(|| out_dir.join(format!("compare-seed{}", cfg.seed)));
    ensure_dir(&run_dir)?;
    let (prep, results) = experiment::compare(&corpus, &exp, &methods)?;
    write_file(
        &run_dir.join("test-references.txt"),
        &prep.split.test.iter().map(|t| format!("{}\n", t.short_title)).collect::<String>(),
    )?;

    let mut all_ok = true;
    let mut rows = Vec::new();
    let mut overall = RunManifest::new("compare").with_corpus(&a.corpus)?;
    overall.seed = Some(cfg.seed);
    overall.config = serde_json::to_value(&cfg)?;
    for (method, res) in &results {
        let slug = method.name().trim_end_matches('.').to_ascii_lowercase();
        let mut m = RunManifest::new("compare").with_corpus(&a.corpus)?;
        m.seed = Some(cfg.seed);
        m.config = json!({ "method": method.name(), "train": cfg, "budget": a.budget });
        match res {
            Ok(r) => {
                let out_path = run_dir.join(format!("{slug}.txt"));
                write_file(&out_path, &r.outputs.iter().map(|o| format!("{o}\n")).collect::<String>())?;
                if let Some(model) = &r.model {
                    let ck = run_dir.join(format!("{slug}.checkpoint.json"));
                    Checkpoint::from_model(model, &prep.vocab).save(&ck)?;
                    m.checkpoint = Some(ck);
                    write_file(&run_dir.join(format!("{slug}.metrics.csv")), &metrics_csv(&r.history))?;
                }
                m.outputs = vec![out_path];
                m.metrics = json!({ "rouge": r.scores, "budget": r.budget, "relaxed": r.relaxed });
                rows.push((method.name().to_string(), r.scores));
            }
            Err(e) => {
                eprintln!("{method}: {e}");
                m.fail(e.to_string());
                overall.fail(format!("{method}: {e}"));
                all_ok = false;
            }
        }
        m.save(run_dir.join(format!("{slug}.manifest.json")))?;
    }
    let mut report = format_comparison(&rows);
    let checks = ordering_checks(&rows, 0.01);
    for (name, ok) in &checks {
        report.push_str(&format!("# {name}: {}\n", if *ok { "holds" } else { "violated" }));
    }
    print!("{report}");
    let report_path = run_dir.join("report.tsv");
    write_file(&report_path, &report)?;
    overall.outputs = vec![report_path];
    overall.metrics = json!({
        "rows": rows.iter().map(|(n, s)| json!({ "method": n, "rouge": s })).collect::<Vec<_>>(),
        "ordering": checks.iter().map(|(n, ok)| json!({ "check": n, "holds": ok })).collect::<Vec<_>>(),
    });
    overall.save(run_dir.join("manifest.json"))?;
    Ok(all_ok)
}

pub fn cmd_tune(a: &TuneArgs, out_dir: &Path) -> Result<bool> {
    let target = match a.target.as_str() {
        "vanilla" | "vanilla-mtl" => TuneTarget::Vanilla,
        "agree" | "agree-mtl" => TuneTarget::Agree,
        other => return Err(Error::Config(vec![format!("unknown tuning target {other:?} (vanilla, agree)")])),
    };
    let cfg = resolve_config(&a.training, None)?;
    let corpus = read_triplets(&a.corpus)?;
    let prep = experiment::prepare(&corpus, cfg.seed, cfg.query_min_count)?;
    let grid = target.default_grid(a.grid_step);
    let opts = a.decode.options();
    let result = tune_lambdas(
        target,
        &cfg.mtl(),
        &grid,
        |mtl| {
            let tc = TrainConfig {
                mode: mtl.mode,
                lambda: mtl.lambda,
                lambda1: mtl.lambda1,
                lambda2: mtl.lambda2,
                ..cfg.clone()
            };
            eprintln!("training {} λ={} λ1={} λ2={}", tc.mode, tc.lambda, tc.lambda1, tc.lambda2);
            Ok(experiment::train_model(&prep, &tc)?.model)
        },
        |model| {
            let outs = decode_all(model, &prep.vocab, &prep.split.dev, &opts)?;
            Ok(score(&outs, &prep.split.dev)?.rouge1.f1)
        },
    )?;
    let mut text = String::from("value\tdev_rouge1_f1\n");
    for (v, s) in &result.trace {
        text.push_str(&format!("{v}\t{:.2}\n", 100.0 * s));
    }
    text.push_str(&format!("# selected {}\n", result.best));
    print!("{text}");
    let run_dir = a.out.clone().unwrap_or_else(|| out_dir.join(format!("tune-{}-seed{}", a.target, cfg.seed)));
    let path = run_dir.join("tune.tsv");
    write_file(&path, &text)?;
    let mut m = RunManifest::new("tune").with_corpus(&a.corpus)?;
    m.seed = Some(cfg.seed);
    m.config = json!({ "train": cfg, "target": a.target, "grid": grid });
    m.outputs = vec![path];
    m.metrics = json!({ "selected": result.best, "best_dev_rouge1_f1": result.best_score, "trace": result.trace });
    m.save(run_dir.join("manifest.json"))?;
    Ok(true)
}

/// Parses `text<TAB>kind` lines.
pub fn parse_tagged_terms(text: &str) -> Result<Vec<(String, TermKind)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (term, kind) = l.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected text<TAB>kind".into(),
            })?;
            let kind = kind.trim().parse().map_err(|msg| Error::Parse { line: i + 1, msg })?;
            Ok((term.to_string(), kind))
        })
        .collect()
}

pub fn cmd_ilp(a: &IlpArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.terms).map_err(|e| Error::file(&a.terms, e))?;
    let terms = parse_tagged_terms(&text)?;
    let inst = IlpInstance {
        terms: weigh_terms(&terms, &TermWeights::default()),
        budget: a.budget,
    };
    let sol = ilp_compress(&inst);
    if sol.relaxed {
        eprintln!("warning: no product term fits the budget; product rule dropped");
    }
    println!("{}", sol.text(&inst));
    Ok(true)
}
