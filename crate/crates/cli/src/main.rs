use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};

use medeval::corpus::{load_documents, Document};
use medeval::extract::{BaselineExtractor, Extractor, Lexicon, RemoteConfig, RemoteExtractor, ResponseCache, RuleSet};
use medeval::matcher::{ConfusionCounts, MatchMode};
use medeval::metrics::{adjust_with_field, derive_counts, prf, Granularity, MetricsError, Scenario, STRATIFY_FP_RULE};
use medeval::pipeline::{self, PipelineError, PredictionSet, DEFAULT_WORKERS};
use medeval::profile::{EvalProfile, ProfileError};
use medeval::report::ReportBundle;
use medeval::MedField;

/// Environment variable naming the default response cache directory.
const CACHE_DIR_ENV: &str = "MEDEVAL_CACHE_DIR";

#[derive(Parser)]
#[command(name = "medeval", version, about = "Batch evaluation of medication entity extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an extractor over a corpus and write line-delimited predictions.
    Extract(ExtractArgs),
    /// Score predictions against gold and write CSV, text and JSON reports.
    Evaluate(EvaluateArgs),
    /// Add an assumed performance for a missing field to a baseline score.
    Adjust(AdjustArgs),
    /// Split scores into list and narrative strata (i2b2 gold only).
    Stratify(StratifyArgs),
    /// Re-render a stored report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct ProfileArgs {
    /// Preset name (i2b2, n2c2, offset-pair) or path to a TOML profile.
    #[arg(long, default_value = "n2c2")]
    profile: String,
    /// Override the profile's block limit.
    #[arg(long)]
    max_chars: Option<usize>,
    /// Override the profile's i2b2 token numbering base.
    #[arg(long)]
    token_base: Option<usize>,
}

impl ProfileArgs {
    fn load(&self) -> Result<EvalProfile, Failure> {
        let mut p = EvalProfile::resolve(&self.profile).map_err(Failure::config)?;
        if let Some(m) = self.max_chars {
            p.max_chars = m;
        }
        if let Some(b) = self.token_base {
            p.token_base = b;
        }
        p.validate().map_err(|e| Failure::config(anyhow!(e)))?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractorKind {
    Baseline,
    Remote,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Directory of note text files.
    #[arg(long)]
    corpus: PathBuf,
    /// Output predictions file (JSON lines).
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "baseline")]
    extractor: ExtractorKind,
    /// Service URL for the remote extractor.
    #[arg(long)]
    endpoint: Option<String>,
    /// Response cache directory for the remote extractor.
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    /// Replace the bundled baseline lexicon (one name per line).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Replace the bundled baseline rules (KIND<TAB>name<TAB>regex).
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    workers: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Directory receiving report.csv, report.txt, report.json and traces.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Matching modes (default: the profile's primary and secondary modes).
    #[arg(long, value_parser = parse_mode, num_args = 1.., value_delimiter = ',')]
    mode: Vec<MatchMode>,
    /// Granularities (default: micro and macro).
    #[arg(long, value_parser = parse_granularity, num_args = 1.., value_delimiter = ',')]
    granularity: Vec<Granularity>,
}

#[derive(Args)]
struct AdjustArgs {
    /// report.json from `evaluate`; the overall micro row gives the baseline.
    #[arg(long, conflicts_with_all = ["baseline", "baseline_pr"])]
    report: Option<PathBuf>,
    /// Mode whose overall row is used as baseline (default: first in the report).
    #[arg(long, value_parser = parse_mode, requires = "report")]
    mode: Option<MatchMode>,
    /// Baseline counts as TP,FP,FN.
    #[arg(long, value_parser = parse_counts)]
    baseline: Option<ConfusionCounts>,
    /// Baseline published as P,R over --baseline-gold gold entities.
    #[arg(long, value_parser = parse_pair, requires = "baseline_gold")]
    baseline_pr: Option<(f64, f64)>,
    #[arg(long)]
    baseline_gold: Option<u64>,
    /// Field the assumed performance belongs to.
    #[arg(long, default_value = "REASON")]
    field: MedField,
    /// perfect, pr:P,R or f-at-recall:F,R. Repeat for several scenarios.
    #[arg(long, required = true, value_parser = parse_scenario)]
    scenario: Vec<Scenario>,
    /// Gold entities of the added field.
    #[arg(long)]
    n_gold: u64,
}

#[derive(Args)]
struct StratifyArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Matching mode (default: the profile's primary mode).
    #[arg(long, value_parser = parse_mode)]
    mode: Option<MatchMode>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `evaluate`.
    report: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_mode(s: &str) -> Result<MatchMode, String> {
    s.parse()
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse()
}

fn parse_f64s(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {:?}", s));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_f64s(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_counts(s: &str) -> Result<ConfusionCounts, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [tp, fp, fn_] => Ok(ConfusionCounts::new(tp, fp, fn_)),
        _ => Err(format!("expected TP,FP,FN, got {s:?}")),
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "perfect" if args.is_empty() => Ok(Scenario::Perfect),
        "pr" => parse_pair(args).map(|(precision, recall)| Scenario::PrecisionRecall { precision, recall }),
        "f-at-recall" | "f_at_recall" => {
            parse_pair(args).map(|(f_score, recall)| Scenario::FAtRecall { f_score, recall })
        }
        _ => Err(format!("unknown scenario {s:?}; use perfect, pr:P,R or f-at-recall:F,R")),
    }
}

/// An error with the process exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    const CONTRACT: u8 = 1;
    const EXTRACTION: u8 = 2;
    const CONFIG: u8 = 3;

    fn config(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: Self::CONFIG,
            error: e.into(),
        }
    }

    fn contract(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: Self::CONTRACT,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<PipelineError>() {
            Some(PipelineError::Io(_)) => Self::CONFIG,
            Some(PipelineError::Corpus(medeval::corpus::CorpusError::Io { .. })) => Self::CONFIG,
            Some(_) => Self::CONTRACT,
            None if error.downcast_ref::<ProfileError>().is_some() => Self::CONFIG,
            None if error.downcast_ref::<MetricsError>().is_some() => Self::CONTRACT,
            None => Self::CONFIG,
        };
        Self { code, error }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Adjust(a) => cmd_adjust(a),
        Command::Stratify(a) => cmd_stratify(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_corpus(dir: &Path, profile: &EvalProfile) -> Result<Vec<Document>, Failure> {
    load_documents(dir, &profile.layout)
        .with_context(|| format!("loading corpus from {}", dir.display()))
        .map_err(Failure::config)
}

fn build_extractor(a: &ExtractArgs) -> Result<Box<dyn Extractor>, Failure> {
    match a.extractor {
        ExtractorKind::Baseline => {
            if a.endpoint.is_some() {
                return Err(Failure::config(anyhow!("--endpoint only applies to --extractor remote")));
            }
            let lexicon = match &a.lexicon {
                Some(p) => Lexicon::parse(&read(p)?),
                None => Lexicon::bundled(),
            };
            let rules = match &a.rules {
                Some(p) => RuleSet::parse(&read(p)?)
                    .map_err(|e| Failure::config(anyhow!("{}: {e}", p.display())))?,
                None => RuleSet::bundled(),
            };
            Ok(Box::new(BaselineExtractor::new(lexicon, rules)))
        }
        ExtractorKind::Remote => {
            let endpoint = a
                .endpoint
                .clone()
                .ok_or_else(|| Failure::config(anyhow!("--extractor remote needs --endpoint")))?;
            let cache = match &a.cache_dir {
                Some(dir) => Some(
                    ResponseCache::open(dir)
                        .with_context(|| format!("opening cache {}", dir.display()))
                        .map_err(Failure::config)?,
                ),
                None => None,
            };
            Ok(Box::new(RemoteExtractor::new(RemoteConfig::new(endpoint), cache)))
        }
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p)
        .with_context(|| format!("reading {}", p.display()))
        .map_err(Failure::config)
}

fn create(p: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(p)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", p.display()))
        .map_err(Failure::config)
}

fn cmd_extract(a: ExtractArgs) -> Result<u8, Failure> {
    let profile = a.profile.load()?;
    let docs = load_corpus(&a.corpus, &profile)?;
    let extractor = build_extractor(&a)?;
    let total = docs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run = pipeline::extract_corpus(&docs, extractor.as_ref(), &profile, a.workers, &|outcome| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        match outcome {
            Ok(d) => {
                eprintln!(
                    "[{n}/{total}] {}: {} chars, {} block(s), {} entities",
                    d.doc_id,
                    d.chars,
                    d.blocks,
                    d.predictions.len()
                );
                if d.boundary_adjacent > 0 {
                    eprintln!("  {} prediction(s) next to a block boundary", d.boundary_adjacent);
                }
            }
            Err(f) => eprintln!("[{n}/{total}] {}: FAILED: {}", f.doc_id, f.message),
        }
    });
    let mut out = create(&a.out)?;
    pipeline::write_predictions(&mut out, &run)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::config)?;
    let failed = run.failures().count();
    if failed > 0 {
        eprintln!("{failed} of {total} document(s) failed extraction");
        return Ok(Failure::EXTRACTION);
    }
    Ok(0)
}

fn load_inputs(
    profile: &EvalProfile,
    corpus: &Path,
    gold: &Path,
    predictions: &Path,
) -> Result<(Vec<Document>, pipeline::GoldCorpus, PredictionSet), Failure> {
    let docs = load_corpus(corpus, profile)?;
    let preds = pipeline::read_predictions_file(predictions)?;
    pipeline::check_prediction_ids(&docs, &preds)?;
    let gold = pipeline::load_gold(&docs, gold, profile)?;
    Ok((docs, gold, preds))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<u8, Failure> {
    let profile = a.profile.load()?;
    let (docs, gold, preds) = load_inputs(&profile, &a.corpus, &a.gold, &a.predictions)?;
    let modes = if a.mode.is_empty() { profile.modes() } else { a.mode.clone() };
    let granularities = if a.granularity.is_empty() {
        let mut g = vec![profile.granularity];
        g.extend([Granularity::Micro, Granularity::Macro].into_iter().filter(|x| *x != profile.granularity));
        g
    } else {
        a.granularity.clone()
    };
    let eval = pipeline::evaluate(&docs, &gold, &preds, &profile, &modes, &granularities)?;
    let bundle = ReportBundle {
        profile: profile.name.clone(),
        reports: eval.reports,
        gold_warnings: gold.warnings,
        missing_gold: gold.missing,
        extraction_errors: preds.errors.iter().map(|e| (e.doc_id.clone(), e.message.clone())).collect(),
    };

    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))
        .map_err(Failure::config)?;
    let write = |name: &str, body: &str| -> Result<(), Failure> {
        let path = a.out_dir.join(name);
        fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::config)
    };
    write("report.csv", &bundle.to_csv())?;
    write("report.txt", &bundle.to_text())?;
    let json = serde_json::to_string_pretty(&bundle).map_err(|e| Failure::config(anyhow!(e)))?;
    write("report.json", &(json + "\n"))?;
    let traces_path = a.out_dir.join("traces.jsonl");
    let mut traces = create(&traces_path)?;
    pipeline::write_traces(&mut traces, &eval.traces)
        .with_context(|| format!("writing {}", traces_path.display()))
        .map_err(Failure::config)?;

    print!("{}", bundle.to_text());
    Ok(if bundle.extraction_errors.is_empty() { 0 } else { Failure::EXTRACTION })
}

fn cmd_adjust(a: AdjustArgs) -> Result<u8, Failure> {
    let baseline = if let Some(path) = &a.report {
        let bundle: ReportBundle = serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(Failure::config)?;
        let report = match a.mode {
            Some(m) => bundle.reports.iter().find(|r| r.mode == m),
            None => bundle.reports.first(),
        }
        .ok_or_else(|| Failure::contract(anyhow!("{} has no report for the requested mode", path.display())))?;
        if report.rows.iter().any(|r| r.field == Some(a.field) && r.counts.gold() > 0) {
            return Err(Failure::contract(anyhow!(
                "field {} is already scored in the baseline report",
                a.field
            )));
        }
        report.overall.counts
    } else if let Some(c) = a.baseline {
        c
    } else if let (Some((p, r)), Some(n)) = (a.baseline_pr, a.baseline_gold) {
        derive_counts(p, r, n).map_err(Failure::contract)?
    } else {
        return Err(Failure::config(anyhow!(
            "give the baseline with --report, --baseline TP,FP,FN or --baseline-pr P,R --baseline-gold N"
        )));
    };

    let base = prf(baseline);
    println!(
        "{:<42} tp={:<7} fp={:<7} fn={:<7} {}",
        "baseline", baseline.tp, baseline.fp, baseline.fn_, base
    );
    for scenario in &a.scenario {
        let counts = scenario
            .field_counts(a.n_gold)
            .with_context(|| format!("scenario {scenario}"))
            .map_err(Failure::contract)?;
        let adjusted = adjust_with_field(baseline, counts);
        println!(
            "{:<7} {:<34} tp={:<7} fp={:<7} fn={:<7} {}",
            a.field.label(),
            scenario.to_string(),
            counts.tp,
            counts.fp,
            counts.fn_,
            adjusted
        );
    }
    Ok(0)
}

fn cmd_stratify(a: StratifyArgs) -> Result<u8, Failure> {
    let profile = a.profile.load()?;
    let (docs, gold, preds) = load_inputs(&profile, &a.corpus, &a.gold, &a.predictions)?;
    let mode = a.mode.unwrap_or(profile.mode);
    let s = pipeline::stratify(&docs, &gold, &preds, &profile, mode)?;
    if a.json {
        let json = serde_json::to_string_pretty(&s).map_err(|e| Failure::config(anyhow!(e)))?;
        println!("{json}");
        return Ok(0);
    }
    println!("# mode: {mode}");
    println!("# {STRATIFY_FP_RULE}");
    for (name, st) in [("LIST", &s.list), ("NARRATIVE", &s.narrative)] {
        println!(
            "{name:<10} gold={:<6} tp={:<6} fp={:<6} fn={:<6} {}",
            st.gold_entities, st.counts.tp, st.counts.fp, st.counts.fn_, st.metrics
        );
    }
    if s.unknown_gold > 0 || s.unassigned_fp > 0 {
        println!(
            "unstratified: {} gold without context, {} false positives with no gold to attach to",
            s.unknown_gold, s.unassigned_fp
        );
    }
    Ok(0)
}

fn cmd_report(a: ReportArgs) -> Result<u8, Failure> {
    let bundle: ReportBundle = serde_json::from_str(&read(&a.report)?)
        .with_context(|| format!("parsing {}", a.report.display()))
        .map_err(Failure::config)?;
    let mut out = std::io::stdout().lock();
    let body = match a.format {
        Format::Text => bundle.to_text(),
        Format::Csv => bundle.to_csv(),
        Format::Json => serde_json::to_string_pretty(&bundle).map_err(|e| Failure::config(anyhow!(e)))? + "\n",
    };
    if let Err(e) = out.write_all(body.as_bytes()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(Failure::config(anyhow!(e)));
        }
    }
    Ok(0)
}
