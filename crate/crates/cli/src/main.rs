//! `evinduce`: batch pipelines for type induction over annotated document
//! graphs. Every subcommand writes its outputs plus `manifest.json` into
//! `--out`.

mod manifest;
mod tables;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use evinduce::agreement::{
    bootstrap_alpha, krippendorff_alpha, pairwise_alpha_vs_panel, thresholded_alpha, Metric,
    ReliabilityMatrix,
};
use evinduce::analysis::{
    confusion, entropy_stats, export_features, summarize_types, DEFAULT_NA_THRESHOLD,
};
use evinduce::corpus::{
    corpus_to_string, load_corpus, ridit_score_corpus, Classification, DocumentGraph, Schema,
};
use evinduce::learning::{fit, posteriors, FitConfig, InitMethod, SigmaUpdate};
use evinduce::params::{ModelParams, TypeInventory};
use evinduce::selection::{select_k_all, SelectConfig};
use evinduce::synth::{corpus_stats, default_schema, sample_corpus, SynthConfig};

use manifest::Run;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_COMPUTE: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Compute(String),
}

impl From<evinduce::error::Error> for Failure {
    fn from(e: evinduce::error::Error) -> Self {
        if e.is_compute() {
            Failure::Compute(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "evinduce",
    version,
    about = "Type induction over semantically annotated document graphs"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config with optional `fit`, `select` and `synth` sections.
    /// Flags override it.
    #[arg(long, global = true, env = "EVINDUCE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write it in canonical form with statistics.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a synthetic corpus with known types.
    Synth(SynthArgs),
    /// Fit the full model by EM.
    Fit(FitArgs),
    /// Choose type counts with per-classification mixtures.
    SelectK(SelectArgs),
    /// Posterior table of a corpus under a checkpoint.
    Posteriors {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        #[command(flatten)]
        fit: FitFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-type property probabilities.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        /// Gate probability below which a conditional property is N/A.
        #[arg(long, default_value_t = DEFAULT_NA_THRESHOLD)]
        na_threshold: f64,
        /// Also write a long-format table.
        #[arg(long)]
        long: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Row-normalized confusion between two posterior tables.
    CompareFits {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_parser = parse_class, default_value = "event")]
        classification: Classification,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized posterior entropy per classification.
    Entropy {
        #[arg(long)]
        posteriors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Krippendorff's alpha, bootstrap interval and confidence curve.
    Agreement(AgreementArgs),
    /// Posterior feature vectors for downstream classifiers.
    ExportFeatures {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        posteriors: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SchemaArg {
    /// Schema file; the built-in 16-property schema when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    schema: SchemaArg,
    /// Drop every gate from the schema before sampling.
    #[arg(long)]
    ungated: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    predicates: Option<usize>,
    #[arg(long)]
    arguments: Option<usize>,
    /// Type counts as `event,entity,role,relation`.
    #[arg(long, value_parser = parse_inventory)]
    types: Option<TypeInventory>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    annotator_sd: Option<f64>,
    #[arg(long)]
    annotators: Option<usize>,
    #[arg(long)]
    per_item: Option<usize>,
    #[arg(long)]
    eventive_prob: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Clustered,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    PlugIn,
    Laplace,
}

/// Flags shared by everything that builds a [`FitConfig`].
#[derive(Args)]
struct FitFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    /// Weight every annotation equally.
    #[arg(long)]
    no_confidence_weighting: bool,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long, value_enum)]
    sigma_update: Option<SigmaArg>,
    #[arg(long)]
    m_steps: Option<usize>,
    /// Hold every annotator covariance at this multiple of the identity.
    #[arg(long)]
    fixed_sigma: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArg,
    /// Type counts as `event,entity,role,relation`.
    #[arg(long, value_parser = parse_inventory)]
    types: TypeInventory,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[command(flatten)]
    schema: SchemaArg,
    /// Classifications to select for (repeatable; default all four).
    #[arg(long = "classification", value_parser = parse_class)]
    classifications: Vec<Classification>,
    /// Candidate counts, comma-separated and increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6])]
    candidates: Vec<usize>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AgreementArgs {
    /// Long-format table: item, annotator, value[, confidence].
    #[arg(long, conflicts_with = "corpus")]
    table: Option<PathBuf>,
    /// Corpus to read one property's annotations from (with `--property`).
    #[arg(long, requires = "property")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    property: Option<String>,
    #[command(flatten)]
    schema: SchemaArg,
    #[arg(long, value_parser = parse_metric, default_value = "nominal")]
    metric: Metric,
    /// Confidence thresholds for the filtering curve.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference annotators; each other annotator is scored against them.
    #[arg(long, value_delimiter = ',')]
    panel: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_class(s: &str) -> Result<Classification, String> {
    s.parse().map_err(|e: evinduce::error::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: evinduce::error::Error| e.to_string())
}

fn parse_inventory(s: &str) -> Result<TypeInventory, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [e, n, r, l] => TypeInventory::new(e, n, r, l).map_err(|e| e.to_string()),
        _ => Err("expected four counts: event,entity,role,relation".into()),
    }
}

/// Sections of the config file; each is optional and partial.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    fit: Option<serde_json::Value>,
    #[serde(default)]
    select: Option<serde_json::Value>,
    #[serde(default)]
    synth: Option<serde_json::Value>,
}

impl ConfigFile {
    fn load(path: Option<&Path>, run: Option<&mut Run>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read(path)?;
        if let Some(run) = run {
            run.input(path)?;
        }
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}

fn section<T: DeserializeOwned + Default>(
    v: &Option<serde_json::Value>,
    name: &str,
) -> Result<T, Failure> {
    match v {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Failure::Data(format!("config `{name}`: {e}"))),
        None => Ok(T::default()),
    }
}

/// `base` with the keys present in `v` replaced.
fn overlay<T: serde::Serialize + DeserializeOwned>(
    base: &T,
    v: &Option<serde_json::Value>,
    name: &str,
) -> Result<T, Failure> {
    let mut merged = json(base);
    match v {
        None => {}
        Some(serde_json::Value::Object(over)) => {
            for (k, x) in over {
                merged[k] = x.clone();
            }
        }
        Some(_) => return Err(Failure::Data(format!("config `{name}` must be an object"))),
    }
    serde_json::from_value(merged).map_err(|e| Failure::Data(format!("config `{name}`: {e}")))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_schema(arg: &SchemaArg, run: &mut Run) -> Result<Schema, Failure> {
    match &arg.schema {
        Some(p) => {
            run.input(p)?;
            Ok(Schema::load(p)?)
        }
        None => Ok(default_schema()),
    }
}

fn load_docs(path: &Path, schema: &Schema, run: &mut Run) -> Result<Vec<DocumentGraph>, Failure> {
    run.input(path)?;
    Ok(load_corpus(path, schema)?)
}

/// Ridit-scores train and dev together, so confidences are normalized over
/// each annotator's full history.
fn score_pair(
    train: Vec<DocumentGraph>,
    dev: Vec<DocumentGraph>,
    schema: &Schema,
) -> Result<(Vec<DocumentGraph>, Vec<DocumentGraph>), Failure> {
    let n = train.len();
    let mut all = ridit_score_corpus(train.into_iter().chain(dev).collect(), schema)?;
    let dev = all.split_off(n);
    Ok((all, dev))
}

fn load_params(path: &Path, run: &mut Run) -> Result<ModelParams, Failure> {
    run.input(path)?;
    Ok(ModelParams::load(path)?)
}

fn apply_fit_flags(cfg: &mut FitConfig, f: &FitFlags) {
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if let Some(w) = f.window {
        cfg.window = w;
    }
    if f.no_confidence_weighting {
        cfg.confidence_weighting = false;
    }
    if let Some(i) = f.init {
        cfg.init = match i {
            InitArg::Random => InitMethod::Random,
            InitArg::Clustered => InitMethod::Clustered,
        };
    }
    if let Some(s) = f.sigma_update {
        cfg.sigma_update = match s {
            SigmaArg::PlugIn => SigmaUpdate::PlugIn,
            SigmaArg::Laplace => SigmaUpdate::Laplace,
        };
    }
    if let Some(m) = f.m_steps {
        cfg.m_steps = m;
    }
    if let Some(s) = f.fixed_sigma {
        cfg.fixed_sigma = Some(s);
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn run_synth(a: &SynthArgs, config: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::start("synth", &a.out)?;
    let file = ConfigFile::load(config, Some(&mut run))?;
    let mut cfg: SynthConfig = section(&file.synth, "synth")?;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { cfg.$field = v; })*};
    }
    set!(seed => seed, docs => documents, sentences => sentences_per_doc, predicates => predicates_per_sentence,
        arguments => arguments_per_predicate, types => inventory, separation => separation,
        annotator_sd => annotator_sd, annotators => annotator_pool, per_item => annotators_per_item,
        eventive_prob => eventive_prob, window => window);
    let mut schema = load_schema(&a.schema, &mut run)?;
    if a.ungated {
        schema = Schema::new(
            schema
                .properties()
                .iter()
                .cloned()
                .map(|mut p| {
                    p.gate = None;
                    p
                })
                .collect(),
        )?;
    }
    let out = sample_corpus(&schema, &cfg)?;
    run.write("corpus.jsonl", &corpus_to_string(&out.corpus))?;
    run.write("truth.tsv", &tables::truth_table(&out.truth))?;
    run.write("true_params.json", &out.params.to_json())?;
    run.write("schema.json", &schema.to_json())?;
    run.finish(json(&cfg), Some(cfg.seed))
}

fn run_fit(a: &FitArgs, config: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::start("fit", &a.out)?;
    let file = ConfigFile::load(config, Some(&mut run))?;
    let mut cfg: FitConfig = section(&file.fit, "fit")?;
    apply_fit_flags(&mut cfg, &a.fit);
    if let Some(m) = a.max_iters {
        cfg.max_em_iters = m;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    let schema = load_schema(&a.schema, &mut run)?;
    let train = load_docs(&a.train, &schema, &mut run)?;
    let dev = match &a.dev {
        Some(p) => load_docs(p, &schema, &mut run)?,
        None => Vec::new(),
    };
    let (train, dev) = score_pair(train, dev, &schema)?;
    let result = fit(&train, &dev, &schema, a.types, &cfg)?;
    let mut trace = String::from("iteration\ttrain_evidence\tdev_evidence\n");
    for (i, (t, d)) in result
        .train_evidence
        .iter()
        .zip(&result.dev_evidence)
        .enumerate()
    {
        trace.push_str(&format!("{i}\t{t}\t{d}\n"));
    }
    run.write("checkpoint.json", &result.params.to_json())?;
    run.write("trace.tsv", &trace)?;
    run.write(
        "posteriors.tsv",
        &tables::posterior_table(&result.posteriors),
    )?;
    let mut resolved = json(&cfg);
    resolved["types"] = json(&a.types);
    resolved["stopped"] = json(&result.stopped_reason);
    run.finish(resolved, Some(cfg.seed))
}

fn run_select(a: &SelectArgs, config: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::start("select-k", &a.out)?;
    let file = ConfigFile::load(config, Some(&mut run))?;
    let mut cfg: SelectConfig = section(&file.select, "select")?;
    cfg.fit = overlay(&cfg.fit, &file.fit, "fit")?;
    apply_fit_flags(&mut cfg.fit, &a.fit);
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { cfg.$field = v; })*};
    }
    set!(restarts => restarts, max_iters => max_iters, tol => tol, bootstrap => bootstrap, level => level);
    let classes = if a.classifications.is_empty() {
        Classification::ALL.to_vec()
    } else {
        a.classifications.clone()
    };
    let schema = load_schema(&a.schema, &mut run)?;
    let train = load_docs(&a.train, &schema, &mut run)?;
    let dev = load_docs(&a.dev, &schema, &mut run)?;
    let (train, dev) = score_pair(train, dev, &schema)?;
    let report = select_k_all(&train, &dev, &schema, &classes, &a.candidates, &cfg)?;
    run.write(
        "selection.json",
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    run.write("selection.txt", &report.to_table())?;
    let mut resolved = json(&cfg);
    resolved["candidates"] = json(&a.candidates);
    resolved["classifications"] = json(&classes);
    run.finish(resolved, Some(cfg.fit.seed))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Ingest {
            corpus,
            schema,
            out,
        } => {
            let mut run = Run::start("ingest", out)?;
            let schema = load_schema(schema, &mut run)?;
            let docs = load_docs(corpus, &schema, &mut run)?;
            // scoring checks that every referenced annotator has records
            ridit_score_corpus(docs.clone(), &schema)?;
            run.write("corpus.jsonl", &corpus_to_string(&docs))?;
            run.write("stats.tsv", &corpus_stats(&docs, &schema).to_table())?;
            run.finish(serde_json::json!({}), None)
        }
        Command::Synth(a) => run_synth(a, config),
        Command::Fit(a) => run_fit(a, config),
        Command::SelectK(a) => run_select(a, config),
        Command::Posteriors {
            checkpoint,
            corpus,
            schema,
            fit,
            out,
        } => {
            let mut run = Run::start("posteriors", out)?;
            let file = ConfigFile::load(config, Some(&mut run))?;
            let mut cfg: FitConfig = section(&file.fit, "fit")?;
            apply_fit_flags(&mut cfg, fit);
            let schema = load_schema(schema, &mut run)?;
            let params = load_params(checkpoint, &mut run)?;
            let docs = ridit_score_corpus(load_docs(corpus, &schema, &mut run)?, &schema)?;
            let post = posteriors(&docs, &schema, &params, &cfg)?;
            run.write("posteriors.tsv", &tables::posterior_table(&post))?;
            run.finish(json(&cfg), Some(cfg.seed))
        }
        Command::Summarize {
            checkpoint,
            schema,
            na_threshold,
            long,
            out,
        } => {
            let mut run = Run::start("summarize", out)?;
            let schema = load_schema(schema, &mut run)?;
            let params = load_params(checkpoint, &mut run)?;
            let summaries = summarize_types(&params, &schema, *na_threshold)?;
            let mut long_table = String::from("classification\ttype\tproperty\tprobability\n");
            for s in &summaries {
                run.write(&format!("summary_{}.tsv", s.classification), &s.to_tsv())?;
                long_table.push_str(&s.to_long_tsv());
            }
            if *long {
                run.write("summary_long.tsv", &long_table)?;
            }
            run.finish(
                serde_json::json!({ "na_threshold": na_threshold, "long": long }),
                None,
            )
        }
        Command::CompareFits {
            a,
            b,
            classification,
            out,
        } => {
            let mut run = Run::start("compare-fits", out)?;
            run.input(a)?;
            run.input(b)?;
            let pa = tables::parse_posteriors(&read(a)?, &a.display().to_string())?;
            let pb = tables::parse_posteriors(&read(b)?, &b.display().to_string())?;
            let c = confusion(&pa, &pb, *classification)?;
            run.write(&format!("confusion_{classification}.tsv"), &c.to_tsv())?;
            run.finish(
                serde_json::json!({ "classification": classification }),
                None,
            )
        }
        Command::Entropy { posteriors, out } => {
            let mut run = Run::start("entropy", out)?;
            run.input(posteriors)?;
            let sets =
                tables::parse_posteriors(&read(posteriors)?, &posteriors.display().to_string())?;
            let mut table = String::from("classification\telements\tmean\tmedian\n");
            for c in Classification::ALL {
                if sets
                    .iter()
                    .flat_map(|p| &p.variables)
                    .any(|v| v.classification == c)
                {
                    let s = entropy_stats(&sets, c)?;
                    table.push_str(&format!(
                        "{c}\t{}\t{:.6}\t{:.6}\n",
                        s.elements, s.mean, s.median
                    ));
                }
            }
            run.write("entropy.tsv", &table)?;
            run.finish(serde_json::json!({}), None)
        }
        Command::Agreement(a) => run_agreement(a),
        Command::ExportFeatures {
            corpus,
            posteriors,
            schema,
            out,
        } => {
            let mut run = Run::start("export-features", out)?;
            let schema = load_schema(schema, &mut run)?;
            let docs = load_docs(corpus, &schema, &mut run)?;
            run.input(posteriors)?;
            let sets =
                tables::parse_posteriors(&read(posteriors)?, &posteriors.display().to_string())?;
            let f = export_features(&docs, &tables::align_to_corpus(sets, &docs))?;
            run.write("arguments.tsv", &f.arguments_tsv())?;
            run.write("predicates.tsv", &f.predicates_tsv())?;
            run.finish(serde_json::json!({}), None)
        }
    }
}

fn run_agreement(a: &AgreementArgs) -> Result<(), Failure> {
    let mut run = Run::start("agreement", &a.out)?;
    let data = match (&a.table, &a.corpus, &a.property) {
        (Some(t), _, _) => {
            run.input(t)?;
            let rows = tables::parse_reliability(&read(t)?, &t.display().to_string())?;
            ReliabilityMatrix::from_rows(rows)?
        }
        (None, Some(c), Some(p)) => {
            let schema = load_schema(&a.schema, &mut run)?;
            let docs = ridit_score_corpus(load_docs(c, &schema, &mut run)?, &schema)?;
            ReliabilityMatrix::from_corpus(&docs, &schema, p)?
        }
        _ => {
            return Err(Failure::Usage(
                "agreement needs --table, or --corpus with --property".into(),
            ))
        }
    };
    let alpha = krippendorff_alpha(&data, a.metric)?;
    let (lo, hi) = bootstrap_alpha(&data, a.metric, a.bootstrap, a.level, a.seed)?;
    run.write(
        "alpha.tsv",
        &format!(
            "metric\titems\talpha\tlower\tupper\n{}\t{}\t{alpha:.6}\t{lo:.6}\t{hi:.6}\n",
            a.metric,
            data.items.len()
        ),
    )?;
    if !a.thresholds.is_empty() {
        let curve = thresholded_alpha(&data, &a.thresholds, a.metric)?;
        let mut t = String::from("threshold\talpha\tcoverage\n");
        for p in curve {
            let alpha = p.alpha.map_or("NA".to_string(), |x| format!("{x:.6}"));
            t.push_str(&format!("{}\t{alpha}\t{:.6}\n", p.threshold, p.coverage));
        }
        run.write("curve.tsv", &t)?;
    }
    if !a.panel.is_empty() {
        let mut t = String::from("annotator\talpha\n");
        for (name, alpha) in pairwise_alpha_vs_panel(&data, &a.panel, a.metric)? {
            t.push_str(&format!(
                "{name}\t{}\n",
                alpha.map_or("NA".to_string(), |x| format!("{x:.6}"))
            ));
        }
        run.write("panel.tsv", &t)?;
    }
    run.finish(
        serde_json::json!({
            "metric": a.metric.to_string(),
            "thresholds": a.thresholds,
            "bootstrap": a.bootstrap,
            "level": a.level,
            "panel": a.panel,
            "property": a.property,
        }),
        Some(a.seed),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("evinduce: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("evinduce: usage error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("evinduce: data error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("evinduce: compute error: {m}");
            ExitCode::from(EXIT_COMPUTE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evinduce::error::Error;

    #[test]
    fn numerical_failures_map_to_the_compute_exit() {
        assert!(matches!(
            Failure::from(Error::Numerical("x".into())),
            Failure::Compute(_)
        ));
        assert!(matches!(
            Failure::from(Error::Capacity("x".into())),
            Failure::Compute(_)
        ));
        assert!(matches!(
            Failure::from(Error::Schema("x".into())),
            Failure::Data(_)
        ));
        assert!(matches!(
            Failure::from(Error::Argument("x".into())),
            Failure::Data(_)
        ));
    }

    #[test]
    fn config_sections_overlay_defaults_key_by_key() {
        let base = SelectConfig::default().fit;
        let v = Some(serde_json::json!({ "seed": 9 }));
        let merged: FitConfig = overlay(&base, &v, "fit").unwrap();
        assert_eq!(merged.seed, 9);
        assert_eq!(merged.fixed_sigma, base.fixed_sigma);
        let cleared: FitConfig = overlay(
            &base,
            &Some(serde_json::json!({ "fixed_sigma": null })),
            "fit",
        )
        .unwrap();
        assert_eq!(cleared.fixed_sigma, None);
        assert!(overlay::<FitConfig>(&base, &Some(serde_json::json!([1])), "fit").is_err());
    }

    #[test]
    fn inventories_parse() {
        assert_eq!(
            parse_inventory("3,2,2,2").unwrap(),
            TypeInventory::new(3, 2, 2, 2).unwrap()
        );
        assert!(parse_inventory("3,2").is_err());
        assert!(parse_inventory("3,x,2,2").is_err());
    }
}
