//! Command-line front end: `analyze`, `simulate` and `oracle-check`.
//!
//! Exit codes: 0 on success, 1 for invalid input or usage, 2 when the
//! numerics fail (including an `oracle-check` threshold being exceeded).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use shrinkmeta::validate::{compare_with_oracle, AnalysisSettings};
use shrinkmeta::{
    coverage_study, parse_dataset, render_forest, run_analysis, AnalysisConfig, ContinuityCorrection,
    ForestFormat, IntervalMethod, IntervalSpec, MuPrior, ParseOptions, SigmaLaw, SimConfig, TauEstimate,
    TauPrior,
};

#[derive(Debug, Parser)]
#[command(
    name = "shrinkmeta",
    version,
    about = "Full-Bayes random-effects meta-analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyse one or more datasets and write JSON reports and forest plots.
    Analyze(AnalyzeArgs),
    /// Monte Carlo coverage of the credible intervals.
    Simulate(SimulateArgs),
    /// Compare the adaptive posterior with a dense fixed-grid computation.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Heterogeneity prior, e.g. `half-normal:1.0`, `half-cauchy:0.5`,
    /// `uniform:0,10`, `jeffreys:0.01,10`.
    #[arg(long, default_value = "half-normal:1.0")]
    tau_prior: TauPrior,
    /// `uniform` or `normal:mean,sd`.
    #[arg(long, default_value = "uniform")]
    mu_prior: MuPrior,
    /// Relative accuracy target for the tau integration.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct IntervalArgs {
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// `shortest` or `central`.
    #[arg(long, default_value = "shortest")]
    interval: IntervalMethod,
}

impl IntervalArgs {
    fn spec(&self) -> IntervalSpec {
        IntervalSpec {
            level: self.level,
            method: self.interval,
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// CSV or JSON dataset; repeat to analyse several in parallel.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Report file, or a directory when there are several inputs.
    /// Standard output if omitted with a single input.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Forest plot file (`.svg` or `.txt`), or a directory for several inputs.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Overrides the format implied by the `--forest` extension.
    #[arg(long, value_parser = parse_forest_format)]
    forest_format: Option<ForestFormat>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    interval: IntervalArgs,
    /// Point estimate of tau used for the plug-in shrinkage weight.
    #[arg(long, default_value = "median")]
    tau_estimate: TauEstimate,
    /// Label of the target study (overrides the file's flag).
    #[arg(long)]
    target: Option<String>,
    /// Zero-cell rule for 2x2 tables: `halves-if-any-zero-cell` or `none`.
    #[arg(long, default_value = "halves-if-any-zero-cell", value_parser = parse_correction)]
    correction: ContinuityCorrection,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long)]
    tau: f64,
    /// One sampling sd for every study, or a comma-separated list of k.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "sigma_range",
        required_unless_present = "sigma_range"
    )]
    sigma: Vec<f64>,
    /// `lower,upper`: sampling sds drawn log-uniformly from this range.
    #[arg(long, value_parser = parse_range)]
    sigma_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    interval: IntervalArgs,
    /// Coverage report file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of equally spaced tau nodes in the reference grid.
    #[arg(long, default_value_t = 100_000)]
    resolution: usize,
    /// Number of quantile probes for the CDF distances.
    #[arg(long, default_value_t = 2000)]
    probes: usize,
    /// Largest acceptable CDF sup-distance.
    #[arg(long, default_value_t = 1e-4)]
    max_cdf_distance: f64,
    /// Largest acceptable tau-median gap, relative to the grid's upper end.
    #[arg(long, default_value_t = 1e-4)]
    max_median_gap: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "halves-if-any-zero-cell", value_parser = parse_correction)]
    correction: ContinuityCorrection,
    /// Comparison file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_forest_format(s: &str) -> Result<ForestFormat, String> {
    match s {
        "svg" => Ok(ForestFormat::Svg),
        "text" | "txt" => Ok(ForestFormat::Text),
        _ => Err(format!("unknown forest format `{s}` (svg|text)")),
    }
}

fn parse_correction(s: &str) -> Result<ContinuityCorrection, String> {
    match s {
        "none" => Ok(ContinuityCorrection::None),
        "halves-if-any-zero-cell" | "halves" => Ok(ContinuityCorrection::HalvesIfAnyZeroCell),
        _ => Err(format!("unknown correction `{s}` (none|halves-if-any-zero-cell)")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lower,upper`")?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{t}` is not a number"))
    };
    Ok((num(a)?, num(b)?))
}

#[derive(Debug)]
enum Failure {
    /// Bad input, configuration or file system trouble.
    Invalid(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<shrinkmeta::Error> for Failure {
    fn from(e: shrinkmeta::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

fn in_context(path: &Path) -> impl Fn(Failure) -> Failure + '_ {
    move |f| match f {
        Failure::Invalid(m) => Failure::Invalid(format!("{}: {m}", path.display())),
        Failure::Numeric(m) => Failure::Numeric(format!("{}: {m}", path.display())),
    }
}

/// Writes `contents` to `path` through a sibling temporary file, so readers
/// never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Invalid(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn format_from_path(path: &Path, explicit: Option<ForestFormat>) -> Result<ForestFormat, Failure> {
    if let Some(f) = explicit {
        return Ok(f);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("svg") => Ok(ForestFormat::Svg),
        Some(e) if e.eq_ignore_ascii_case("txt") => Ok(ForestFormat::Text),
        _ => Err(Failure::Invalid(format!(
            "cannot tell the forest format of {}; use .svg, .txt or --forest-format",
            path.display()
        ))),
    }
}

fn ensure_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path)
        .map_err(|e| Failure::Invalid(format!("cannot create directory {}: {e}", path.display())))
}

/// Where one input's outputs go.
struct Targets {
    report: Option<PathBuf>,
    forest: Option<(PathBuf, ForestFormat)>,
}

fn plan_outputs(args: &AnalyzeArgs) -> Result<Vec<Targets>, Failure> {
    if args.input.len() == 1 {
        let forest = match &args.forest {
            Some(p) => Some((p.clone(), format_from_path(p, args.forest_format)?)),
            None => None,
        };
        return Ok(vec![Targets {
            report: args.out.clone(),
            forest,
        }]);
    }
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| Failure::Invalid("several inputs need --out DIR".into()))?;
    ensure_dir(out)?;
    if let Some(f) = &args.forest {
        ensure_dir(f)?;
    }
    let format = args.forest_format.unwrap_or(ForestFormat::Svg);
    let ext = match format {
        ForestFormat::Svg => "svg",
        ForestFormat::Text => "txt",
    };
    let mut stems = std::collections::BTreeSet::new();
    let mut plan = Vec::new();
    for input in &args.input {
        let stem = input
            .file_stem()
            .ok_or_else(|| Failure::Invalid(format!("{} has no file name", input.display())))?;
        if !stems.insert(stem.to_owned()) {
            return Err(Failure::Invalid(format!(
                "several inputs share the name `{}`",
                stem.to_string_lossy()
            )));
        }
        let named = |dir: &Path, ext: &str| dir.join(stem).with_extension(ext);
        plan.push(Targets {
            report: Some(named(out, "json")),
            forest: args.forest.as_ref().map(|d| (named(d, ext), format)),
        });
    }
    Ok(plan)
}

struct Outcome {
    warnings: Vec<String>,
    /// The report when it goes to standard output.
    stdout: Option<String>,
}

fn analyze_one(
    input: &Path,
    args: &AnalyzeArgs,
    config: &AnalysisConfig,
    to: &Targets,
) -> Result<Outcome, Failure> {
    let opts = ParseOptions {
        correction: args.correction,
    };
    let data = parse_dataset(input, &opts).map_err(|e| Failure::from(shrinkmeta::Error::from(e)))?;
    let report = run_analysis(&data, config)
        .map_err(Failure::from)
        .map_err(in_context(input))?;
    let json = report.to_json();
    if let Some((path, format)) = &to.forest {
        write_atomic(path, &render_forest(&report, *format))?;
    }
    let stdout = match &to.report {
        Some(path) => {
            write_atomic(path, &json)?;
            None
        }
        None => Some(json),
    };
    Ok(Outcome {
        warnings: report.warnings,
        stdout,
    })
}

fn analyze(args: &AnalyzeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let config = AnalysisConfig {
        mu_prior: args.model.mu_prior,
        tau_prior: args.model.tau_prior,
        interval: args.interval.spec(),
        tol: args.model.tol,
        tau_estimate: args.tau_estimate,
        target: args.target.clone(),
    };
    let plan = plan_outputs(args)?;
    let outcomes: Vec<Result<Outcome, Failure>> = if args.input.len() == 1 {
        vec![analyze_one(&args.input[0], args, &config, &plan[0])]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = args
                .input
                .iter()
                .zip(&plan)
                .map(|(input, to)| s.spawn(|| analyze_one(input, args, &config, to)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Failure::Numeric("analysis thread panicked".into())))
                })
                .collect()
        })
    };
    let mut failed = 0;
    let mut worst = 0;
    for (input, outcome) in args.input.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                for w in &o.warnings {
                    let _ = writeln!(stderr, "warning: {}: {w}", input.display());
                }
                if let Some(text) = o.stdout {
                    let _ = stdout.write_all(text.as_bytes());
                }
            }
            Err(f) if args.input.len() == 1 => return Err(f),
            Err(f) => {
                let _ = writeln!(stderr, "error: {}", f.message());
                failed += 1;
                worst = worst.max(f.code());
            }
        }
    }
    let summary = format!("{failed} of {} inputs failed", args.input.len());
    match worst {
        0 => Ok(()),
        1 => Err(Failure::Invalid(summary)),
        _ => Err(Failure::Numeric(summary)),
    }
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Invalid(format!("cannot write to standard output: {e}"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

fn simulate(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let sigma_law = match args.sigma_range {
        Some((lower, upper)) => SigmaLaw::LogUniform { lower, upper },
        None => SigmaLaw::Fixed {
            values: args.sigma.clone(),
        },
    };
    let cfg = SimConfig {
        k: args.k,
        mu_true: args.mu,
        tau_true: args.tau,
        sigma_law,
        replications: args.reps,
        seed: args.seed,
        level: args.interval.level,
    };
    let settings = AnalysisSettings {
        mu_prior: args.model.mu_prior,
        tau_prior: args.model.tau_prior,
        tol: args.model.tol,
        interval: args.interval.spec(),
    };
    let report = coverage_study(&cfg, &settings)?;
    let _ = writeln!(
        stderr,
        "coverage over {} replications: mu {:.4}, target {:.4}, new study {:.4}",
        cfg.replications, report.mu.coverage, report.theta_target.coverage, report.theta_new.coverage
    );
    emit(&args.out, &to_json(&report), stdout)
}

fn oracle_check(args: &OracleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    if args.resolution < 2 || args.probes == 0 {
        return Err(Failure::Invalid(
            "--resolution must be at least 2 and --probes positive".into(),
        ));
    }
    let opts = ParseOptions {
        correction: args.correction,
    };
    let data = parse_dataset(&args.input, &opts).map_err(|e| Failure::from(shrinkmeta::Error::from(e)))?;
    let settings = AnalysisSettings {
        mu_prior: args.model.mu_prior,
        tau_prior: args.model.tau_prior,
        tol: args.model.tol,
        interval: IntervalSpec::default(),
    };
    let cmp = compare_with_oracle(&data, &settings, args.resolution, args.probes)
        .map_err(Failure::from)
        .map_err(in_context(&args.input))?;
    emit(&args.out, &to_json(&cmp), stdout)?;
    let cdf = cmp.max_cdf_distance();
    let gap = cmp.tau_median_gap() / cmp.tau_hi;
    let _ = writeln!(
        stderr,
        "max cdf distance {cdf:.3e}, relative tau-median gap {gap:.3e}"
    );
    if !(cdf <= args.max_cdf_distance && gap <= args.max_median_gap) {
        return Err(Failure::Numeric(format!(
            "oracle disagreement exceeds thresholds (cdf {:.0e}, median gap {:.0e})",
            args.max_cdf_distance, args.max_median_gap
        )));
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a, stdout, stderr),
        Command::Simulate(a) => simulate(a, stdout, stderr),
        Command::OracleCheck(a) => oracle_check(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}
