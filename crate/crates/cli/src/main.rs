use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use unseen_core::distributions::{derive_seed, draw_sample, make_distribution, DistributionKind, SampleProfile};
use unseen_core::estimators::{chao_unseen, good_turing, minimal_bias, GtVariant};
use unseen_core::ga::{evolve, ExtensionRule, GaConfig, RunManifest};
use unseen_core::harness::{gnuplot_columns, run_audit, run_experiment, write_csv, ExperimentOutput, ExperimentSpec, Mode};
use unseen_core::moments::estimated_mse;
use unseen_core::par::{with_workers, Execution};
use unseen_core::representations::{adapt_to_larger_sample, instantiate, validate_representation, AdaptFold, Representation};
use unseen_core::{Error, Result as CoreResult};

const EXIT_FAILURE: u8 = 1;
const EXIT_SPEC: u8 = 2;
const EXIT_BUDGET: u8 = 3;

/// Missing-mass and total-mass estimation.
#[derive(Debug, Parser)]
#[command(name = "unseen", version, about)]
struct Cli {
    /// Master seed; overrides the seed in a spec or GA config when given.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory; most commands print to stdout without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a sample from a benchmark distribution, one token per line.
    Gen {
        /// uniform, half-and-half, zipf:<s> or dirichlet:<a>.
        #[arg(long, default_value = "uniform")]
        dist: String,
        #[arg(long, default_value_t = 20)]
        support: usize,
        #[arg(long)]
        n: usize,
    },
    /// Print every closed-form estimate of M_k for a sample file.
    Estimate {
        sample: PathBuf,
        #[arg(long, default_value_t = 0)]
        k: u64,
        /// Read a `class,count` CSV instead of tokens (implied by `.csv`).
        #[arg(long)]
        counts: bool,
        /// Also evaluate a stored representation.
        #[arg(long)]
        representation: Option<PathBuf>,
        /// Add plug-in MSE estimates under the hybrid distribution estimate.
        #[arg(long)]
        mse: bool,
    },
    /// Evolve a minimal-MSE representation for a sample.
    Evolve {
        sample: PathBuf,
        #[arg(long, default_value_t = 0)]
        k: u32,
        #[arg(long)]
        counts: bool,
        /// GA configuration as JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        generations: Option<u64>,
        #[arg(long)]
        max_generations: Option<u64>,
        /// verbatim or stagnation.
        #[arg(long)]
        rule: Option<String>,
    },
    /// Move a representation to a larger sample size.
    Adapt {
        representation: PathBuf,
        #[arg(long)]
        m: u32,
        /// shifted or verbatim.
        #[arg(long, default_value = "shifted")]
        fold: String,
    },
    /// Run an experiment spec and write its result CSV.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's mode.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Cross-check the moment formulas against exhaustive enumeration.
    Audit {
        /// Sample sizes to enumerate (comma separated).
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5, 6])]
        sizes: Vec<u64>,
        /// Take sizes and seed from an oracle-audit spec instead.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers;
    match with_workers(workers, move || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::BudgetExceeded { .. } => EXIT_BUDGET,
                Error::Domain(_) | Error::Parse(_) | Error::Json(_) => EXIT_SPEC,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen { dist, support, n } => gen(&dist, support, n, cli.seed.unwrap_or(0), out),
        Command::Estimate {
            sample,
            k,
            counts,
            representation,
            mse,
        } => estimate(&sample, k, counts, representation.as_deref(), mse, out),
        Command::Evolve {
            sample,
            k,
            counts,
            config,
            generations,
            max_generations,
            rule,
        } => {
            let mut cfg = match config {
                Some(path) => read_json::<GaConfig>(&path)?,
                None => GaConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(g) = generations {
                cfg.generations = g;
            }
            if let Some(g) = max_generations {
                cfg.max_generations = g;
            }
            if let Some(r) = rule {
                cfg.extension_rule = parse_enum::<ExtensionRule>(&r, "extension rule")?;
            }
            evolve_cmd(&sample, k, counts, &cfg, out)
        }
        Command::Adapt { representation, m, fold } => adapt(&representation, m, &fold, out),
        Command::Experiment { spec, mode } => {
            let mut spec = read_spec(&spec)?;
            if let Some(m) = mode {
                spec.mode = m.parse::<Mode>()?;
            }
            if let Some(s) = cli.seed {
                spec.master_seed = s;
            }
            if cli.workers == Some(1) {
                spec.execution = Execution::Sequential;
                spec.ga.execution = Execution::Sequential;
            }
            experiment(&spec, out)
        }
        Command::Audit { sizes, spec } => {
            let (sizes, mut seed, exec) = match spec {
                Some(path) => {
                    let s = read_spec(&path)?;
                    (s.sample_sizes, s.master_seed, s.execution)
                }
                None => (sizes, 0, Execution::default()),
            };
            if let Some(s) = cli.seed {
                seed = s;
            }
            audit(&sizes, seed, exec, out)
        }
    }
}

fn read_spec(path: &Path) -> CoreResult<ExperimentSpec> {
    ExperimentSpec::read(path).map_err(|e| match e {
        Error::Io(io) => Error::Parse(format!("cannot read spec {}: {io}", path.display())),
        other => other,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> CoreResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Parse(format!("unknown {what} `{s}`")))
}

/// Parses `uniform`, `half-and-half`, `zipf:<s>` or `dirichlet:<a>`.
fn parse_distribution(s: &str, seed: u64) -> CoreResult<DistributionKind> {
    let (name, param) = match s.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (s, None),
    };
    let number = |default: f64| -> CoreResult<f64> {
        match param {
            None => Ok(default),
            Some(p) => p.parse().map_err(|_| Error::Parse(format!("bad parameter in `{s}`"))),
        }
    };
    Ok(match name {
        "uniform" => DistributionKind::Uniform,
        "half-and-half" | "half&half" => DistributionKind::HalfAndHalf,
        "zipf" => DistributionKind::Zipf { s: number(1.0)? },
        "dirichlet" | "diri" => DistributionKind::Dirichlet {
            a: number(1.0)?,
            seed: derive_seed(seed, &[1]),
        },
        _ => return Err(Error::Parse(format!("unknown distribution `{s}`"))),
    })
}

fn read_sample(path: &Path, counts: bool) -> CoreResult<SampleProfile> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if counts || is_csv {
        SampleProfile::read_counts_csv(path)
    } else {
        SampleProfile::read_tokens(path)
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen(dist: &str, support: usize, n: usize, seed: u64, out: Option<&Path>) -> anyhow::Result<()> {
    let kind = parse_distribution(dist, seed)?;
    let d = make_distribution(&kind, support)?;
    let sample = draw_sample(&d, n, derive_seed(seed, &[2]))?;
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            sample.write_tokens(&dir.join("sample.txt"))?;
            fs::write(dir.join("distribution.json"), serde_json::to_string_pretty(&d)?)?;
            eprintln!("wrote {} draws from {} (S={support}) to {}", n, kind.label(), dir.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = std::io::BufWriter::new(stdout.lock());
            for &x in sample.sequence().unwrap_or_default() {
                writeln!(w, "{}", sample.label(x))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn estimate(
    path: &Path,
    k: u64,
    counts: bool,
    representation: Option<&Path>,
    with_mse: bool,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let sample = read_sample(path, counts)?;
    let n = sample.n();
    if k >= n {
        return Err(Error::Domain(format!("k = {k} must be below n = {n}")).into());
    }
    let mut rows: Vec<(String, f64, Option<f64>)> = Vec::new();
    let mse_of = |est: unseen_core::representations::LinearEstimator| -> CoreResult<Option<f64>> {
        if with_mse {
            estimated_mse(&sample, &est, k).map(Some)
        } else {
            Ok(None)
        }
    };
    let (n32, k32) = (u32::try_from(n)?, u32::try_from(k)?);
    rows.push((
        "GT".into(),
        good_turing(&sample, k, GtVariant::Standard)?,
        mse_of(unseen_core::representations::LinearEstimator::good_turing(n32, k32)?)?,
    ));
    rows.push(("GT-prime".into(), good_turing(&sample, k, GtVariant::Simple)?, None));
    rows.push((
        "B".into(),
        minimal_bias(&sample, k)?,
        mse_of(unseen_core::representations::LinearEstimator::minimal_bias(n32, k32))?,
    ));
    if k == 0 {
        rows.push(("chao-unseen".into(), chao_unseen(&sample), None));
    }
    if let Some(rp) = representation {
        let rep = Representation::read(rp)?;
        if u64::from(rep.n()) != n || u64::from(rep.k()) != k {
            bail!(Error::Domain(format!(
                "representation is for n = {}, k = {} but the sample has n = {n}, k = {k}",
                rep.n(),
                rep.k()
            )));
        }
        let est = instantiate(&rep);
        rows.push(("evolved".into(), est.evaluate(&sample)?, mse_of(est)?));
    }

    let mut text = String::from("estimator,k,value,estimated_mse\n");
    for (name, value, mse) in &rows {
        let mse = mse.map(|m| format!("{m:e}")).unwrap_or_default();
        text.push_str(&format!("{name},{k},{value:e},{mse}\n"));
    }
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            fs::write(dir.join("estimates.csv"), &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn evolve_cmd(path: &Path, k: u32, counts: bool, cfg: &GaConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let sample = read_sample(path, counts)?;
    if u64::from(k) >= sample.n() {
        bail!(Error::Domain(format!("k = {k} must be below n = {}", sample.n())));
    }
    let outcome = evolve(&sample, k, cfg)?;
    let manifest = RunManifest::new(cfg, k, &outcome);
    eprintln!(
        "fitness {:.6e} -> {:.6e} after {} generations ({} terms, {:.2}s)",
        outcome.initial_fitness,
        outcome.best.fitness,
        outcome.generations,
        outcome.best.representation.term_count(),
        outcome.wall_clock_secs
    );
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            outcome.best.representation.write(&dir.join("representation.txt"))?;
            fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        }
        None => print!("{}", outcome.best.representation.to_text()),
    }
    Ok(())
}

fn adapt(path: &Path, m: u32, fold: &str, out: Option<&Path>) -> anyhow::Result<()> {
    let rep = Representation::read(path)?;
    let fold = parse_enum::<AdaptFold>(fold, "fold")?;
    let adapted = adapt_to_larger_sample(&rep, m, fold)?;
    let report = validate_representation(&adapted.representation);
    if !report.is_valid() {
        eprintln!("warning: adapted representation fails validation at m = {m}");
    }
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            adapted.representation.write(&dir.join(format!("representation-m{m}.txt")))?;
        }
        None => print!("{}", adapted.representation.to_text()),
    }
    Ok(())
}

fn experiment(spec: &ExperimentSpec, out: Option<&Path>) -> anyhow::Result<()> {
    let dir = out.unwrap_or(Path::new("results"));
    ensure_dir(dir)?;
    match run_experiment(spec)? {
        ExperimentOutput::Rows(rows) => {
            let csv_path = dir.join(format!("{}.csv", spec.id));
            write_csv(&rows, fs::File::create(&csv_path)?)?;
            if spec.mode == Mode::BiasCurve {
                fs::write(dir.join(format!("{}.dat", spec.id)), gnuplot_columns(&rows))?;
            }
            eprintln!("{} rows -> {}", rows.len(), csv_path.display());
        }
        ExperimentOutput::Audit(report) => {
            let csv_path = dir.join(format!("{}-audit.csv", spec.id));
            report.write_csv(fs::File::create(&csv_path)?)?;
            summarize_audit(&report)?;
        }
    }
    fs::write(dir.join(format!("{}.spec.json", spec.id)), serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

fn audit(sizes: &[u64], seed: u64, exec: Execution, out: Option<&Path>) -> anyhow::Result<()> {
    let report = run_audit(sizes, seed, exec)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        report.write_csv(fs::File::create(dir.join("audit.csv"))?)?;
    }
    summarize_audit(&report)
}

fn summarize_audit(report: &unseen_core::harness::AuditReport) -> anyhow::Result<()> {
    let cases: u64 = report.checks.iter().map(|c| c.cases).sum();
    println!("{} checks, {} cases", report.checks.len(), cases);
    let failures: Vec<_> = report.failures().collect();
    for f in &failures {
        println!("FAIL {} {} n={}: {}", f.check, f.distribution, f.n, f.detail);
    }
    if failures.is_empty() {
        println!("all checks exact");
        Ok(())
    } else {
        bail!("{} audit checks failed", failures.len())
    }
}
