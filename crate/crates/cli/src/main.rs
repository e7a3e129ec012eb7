//! `pma`: ingest mutation-tool output, generate synthetic versions, train
//! and apply the kill predictor, evaluate, localise faults and plot.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use pma_core::baselines::{constant_baseline, coverage_baseline};
use pma_core::corpus::{
    import_major_killmap, import_pit_report, load_corpus, load_kill_matrix, save_kill_matrix, write_corpus,
    VersionCorpus,
};
use pma_core::eval::{evaluate, plot_f_scores, read_csv, write_csv, EvalReport};
use pma_core::mbfl::{localise, FailureProfile};
use pma_core::model::{fit, load_model, predict_matrix, save_model};
use pma_core::synth::{generate, SynthSpec};
use pma_core::{Error, Result};

use config::{Overrides, WorkDir};

#[derive(Parser, Debug)]
#[command(name = "pma", version, about = "Predictive mutation analysis")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a mutation-tool report plus a skeleton corpus into a canonical corpus.
    Ingest {
        #[arg(long, value_enum)]
        format: ReportFormat,
        #[arg(long)]
        report: PathBuf,
        /// Corpus file with tests, mutants and coverage but no kills.
        #[arg(long)]
        skeleton: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic base/target corpus pair.
    Synth {
        /// TOML file of generator settings; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the predictor on a corpus with a kill matrix.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predict the kill matrix of a corpus.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a reference prediction that needs no model.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "coverage")]
        kind: BaselineKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted matrix against the ground truth.
    Evaluate {
        #[arg(long)]
        predicted: PathBuf,
        /// Corpus of the evaluated version.
        #[arg(long)]
        truth: PathBuf,
        /// Ground-truth kill matrix, when not stored in the truth corpus.
        #[arg(long)]
        truth_matrix: Option<PathBuf>,
        /// Training version; enables the NEW/EXISTING test split.
        #[arg(long)]
        base: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a one-row CSV summary.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rank methods by suspiciousness for a set of failing tests.
    Localize {
        #[arg(long)]
        corpus: PathBuf,
        /// Kill matrix to use; defaults to the corpus's own.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Failing test ids, one per line.
        #[arg(long)]
        failures: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render F-score-by-version charts from report CSVs.
    Plot {
        #[arg(long = "csv", required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "F-score by version")]
        title: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ReportFormat {
    Major,
    Pit,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BaselineKind {
    Coverage,
    #[value(name = "constant-0")]
    Constant0,
    #[value(name = "constant-1")]
    Constant1,
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().flat_map(|l| l.lines()).map(|l| format!("# {l}\n")).collect()
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).expect("config serialises")
}

fn save_corpus_with(path: &Path, corpus: &VersionCorpus, provenance: &[String]) -> Result<()> {
    write_file(path, comment_block(provenance) + &write_corpus(corpus))
}

fn load_truth(truth: &Path, matrix: Option<&Path>) -> Result<VersionCorpus> {
    let corpus = load_corpus(truth)?;
    match matrix {
        Some(p) => {
            let (_, km) = load_kill_matrix(p)?;
            corpus.with_kill_matrix(km)
        }
        None => Ok(corpus),
    }
}

fn run(cli: Cli) -> Result<()> {
    let wd = WorkDir::from_env();
    let r = |p: &Path| wd.resolve(p);
    match cli.command {
        Command::Ingest {
            format,
            report,
            skeleton,
            out,
        } => {
            let skel = load_corpus(r(&skeleton))?;
            let corpus = match format {
                ReportFormat::Major => import_major_killmap(r(&report), &skel)?,
                ReportFormat::Pit => import_pit_report(r(&report), &skel)?,
            };
            let prov = vec![
                "pma ingest".to_string(),
                format!("format: {format:?}"),
                format!("report: {}", report.display()),
                format!("skeleton: {}", skeleton.display()),
            ];
            save_corpus_with(&r(&out), &corpus, &prov)?;
            println!(
                "{}: {} tests, {} mutants, {} covering pairs",
                corpus.version_id(),
                corpus.tests().len(),
                corpus.mutants().len(),
                corpus.coverage().pair_count()
            );
        }
        Command::Synth { spec, seed, out_dir } => {
            let mut s = match &spec {
                Some(p) => {
                    let p = r(p);
                    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", p.display())))?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let outp = generate(&s)?;
            let dir = r(&out_dir);
            let prov = vec!["pma synth".to_string(), format!("spec: {}", json(&s))];
            save_corpus_with(&dir.join("base.corpus"), &outp.base, &prov)?;
            save_corpus_with(&dir.join("target.corpus"), &outp.target, &prov)?;
            write_file(&dir.join("bookkeeping.json"), outp.bookkeeping.to_json())?;
            println!(
                "wrote {} (expected best planted-rule F-score {:.4})",
                dir.display(),
                outp.bookkeeping.expected_bayes_f
            );
        }
        Command::Train { corpus, out, overrides } => {
            let cfg = overrides.effective(&wd)?;
            let c = load_corpus(r(&corpus))?;
            info!("effective configuration: {}", json(&cfg));
            let model = fit(&c, &cfg.model, cfg.run.resample)?;
            let path = r(&out);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_model(&model, &path)?;
            println!(
                "trained on {} ({} epochs, final loss {:.6}); checksum {}",
                c.version_id(),
                model.history().len(),
                model.history().last().copied().unwrap_or(f64::NAN),
                model.checksum()
            );
        }
        Command::Predict {
            model,
            corpus,
            out,
            threshold,
            config,
        } => {
            let cfg = Overrides {
                config,
                threshold,
                ..Overrides::default()
            }
            .effective(&wd)?;
            let m = load_model(r(&model))?;
            let c = load_corpus(r(&corpus))?.without_kill_matrix();
            let km = predict_matrix(&m, &c, cfg.run.threshold)?;
            km.validate_against(&c)?;
            let prov = vec![
                "pma predict".to_string(),
                format!("model: {} (checksum {})", model.display(), m.checksum()),
                format!("threshold: {}", cfg.run.threshold),
                format!("model config: {}", json(m.config())),
            ];
            save_kill_matrix(r(&out), c.version_id(), &km, &prov)?;
            println!("{}: {} predicted kills, MS {:.2}", c.version_id(), km.len(), km.mutation_score());
        }
        Command::Baseline { corpus, kind, out } => {
            let c = load_corpus(r(&corpus))?;
            let km = match kind {
                BaselineKind::Coverage => coverage_baseline(&c),
                BaselineKind::Constant0 => constant_baseline(&c, false),
                BaselineKind::Constant1 => constant_baseline(&c, true),
            };
            let prov = vec![format!("pma baseline {kind:?}")];
            save_kill_matrix(r(&out), c.version_id(), &km, &prov)?;
        }
        Command::Evaluate {
            predicted,
            truth,
            truth_matrix,
            base,
            out,
            csv,
            beta,
            config,
        } => {
            let cfg = Overrides {
                config,
                beta,
                ..Overrides::default()
            }
            .effective(&wd)?;
            let target = load_truth(&r(&truth), truth_matrix.as_deref().map(r).as_deref())?;
            let (_, pred) = load_kill_matrix(r(&predicted))?;
            let base = base.as_deref().map(|b| load_corpus(r(b))).transpose()?;
            let mut report = evaluate(&pred, &target, base.as_ref(), cfg.run.beta)?;
            report.provenance = vec![
                "pma evaluate".to_string(),
                format!("predicted: {}", predicted.display()),
                format!("truth: {}", truth.display()),
                format!("beta: {}", cfg.run.beta),
            ];
            write_file(&r(&out), report.to_json())?;
            if let Some(p) = csv {
                write_file(&r(&p), comment_block(&report.provenance) + &write_csv(std::slice::from_ref(&report)))?;
            }
            print_summary(&report);
        }
        Command::Localize {
            corpus,
            matrix,
            failures,
            out,
        } => {
            let c = load_corpus(r(&corpus))?;
            let km = match &matrix {
                Some(p) => load_kill_matrix(r(p))?.1,
                None => c.require_kill_matrix()?.clone(),
            };
            let f = FailureProfile::load(r(&failures), &c)?;
            let ranking = localise(&km, &c, &f)?;
            let prov = vec![
                "pma localize".to_string(),
                format!(
                    "matrix: {}",
                    matrix.as_ref().map_or("corpus kill matrix".into(), |p| p.display().to_string())
                ),
                format!("failures: {}", failures.display()),
            ];
            write_file(&r(&out), comment_block(&prov) + &ranking.to_csv())?;
            if let Some(top) = ranking.entries.first() {
                println!("top: {} (score {:.4}, rank {})", top.method, top.score, top.rank);
            }
        }
        Command::Plot { csvs, out, title } => {
            let mut rows = Vec::new();
            for p in &csvs {
                let p = r(p);
                rows.extend(read_csv(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?);
            }
            let path = r(&out);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            plot_f_scores(&rows, &title, &path)?;
            println!("plotted {} rows to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn print_summary(r: &EvalReport) {
    println!(
        "{}: F {:.4} (P {:.4}, R {:.4}); MS real {:.2} pred {:.2} error {:.2}",
        r.target_version,
        r.f_score(),
        r.precision(),
        r.recall(),
        r.ms_error.ms_real,
        r.ms_error.ms_pred,
        r.ms_error.absolute
    );
    if let (Some(e), Some(n)) = (&r.existing, &r.new) {
        println!("  existing tests: F {:.4}; new tests: F {:.4}", e.f_score, n.f_score);
    }
    for b in &r.baselines {
        println!("  {} baseline: F {:.4}", b.tag, b.f_score);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
