//! Command-line front end for `churnkit`.
//!
//! [`run`] parses arguments, dispatches to a subcommand and maps failures to
//! exit codes: 0 success, 1 data or numerical error, 2 usage error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use churnkit::compare::{logrank, stratified_logrank, LogRankResult, WeightSpec};
use churnkit::hazard::{
    default_bandwidth, default_grid, kernel_hazard, piecewise_exponential, HazardCurve, KernelKind,
    KernelSpec, DEFAULT_GRID_POINTS,
};
use churnkit::ingest::{
    aggregate_players, read_duration_table, read_sessions, write_durations, write_durations_to,
    DurationTable, IngestConfig,
};
use churnkit::metrics::{mean_auc, quantile_profile, QuantileEstimate};
use churnkit::nonparam::{kaplan_meier, nelson_aalen, KmEstimate};
use churnkit::parametric::{fit_mle, Family, FamilyTag, FitResult};
use churnkit::sim::{simulate_cohort, SimSpec};
use churnkit::{build_event_table, Cohort, CurvePoint, StepCurve};

#[derive(Debug, Parser)]
#[command(
    name = "churnkit",
    version,
    about = "Survival analysis of player churn"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kaplan-Meier survival table
    Km(CurveArgs),
    /// Nelson-Aalen cumulative hazard table
    Na(CurveArgs),
    /// Maximum-likelihood fit of a parametric family
    Fit(FitArgs),
    /// Kernel-smoothed or piecewise-constant hazard rate
    Hazard(HazardArgs),
    /// Mean lifetime and quantiles
    Metrics(MetricsArgs),
    /// Log-rank comparison of two cohorts
    Abtest(AbtestArgs),
    /// Draw a synthetic cohort
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Durations CSV (or sessions CSV with --sessions)
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    sessions: SessionArgs,
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Inputs are session logs to aggregate
    #[arg(long)]
    sessions: bool,
    /// Collection cutoff (RFC 3339), required with --sessions
    #[arg(long, value_parser = parse_cutoff)]
    cutoff: Option<DateTime<Utc>>,
    /// Inactivity window in days
    #[arg(long, default_value_t = 14.0)]
    window: f64,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Decimal places for printed numbers, or `full`
    #[arg(long, default_value = "2", value_parser = parse_precision)]
    precision: Precision,
    /// Curve or data file to write
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.95, value_parser = parse_conf)]
    conf: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Family name, or `all`
    #[arg(long, default_value = "exponential", value_parser = parse_families)]
    family: FamilyChoice,
    #[arg(long, default_value_t = 0.95, value_parser = parse_conf)]
    conf: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct HazardArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Smoothing kernel [default: epanechnikov]
    #[arg(long, value_parser = parse_kernel, conflicts_with = "bins")]
    kernel: Option<KernelKind>,
    /// Kernel bandwidth in hours; defaults to the event-time range / 8
    #[arg(long, value_parser = parse_positive)]
    bandwidth: Option<f64>,
    /// Bin width for piecewise-constant rates
    #[arg(long, value_parser = parse_positive)]
    bins: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.95, value_parser = parse_conf)]
    conf: f64,
    /// Comma-separated churned fractions, e.g. 0.25,0.5,0.75
    #[arg(long, default_value = "0.5", value_parser = parse_levels)]
    quantiles: Levels,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct AbtestArgs {
    #[arg(long)]
    control: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    sessions: SessionArgs,
    #[arg(long, default_value_t = 0.0, value_parser = parse_rho)]
    rho: f64,
    /// Column holding each player's stratum
    #[arg(long)]
    strata: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    family: FamilyTag,
    /// Comma-separated parameters in family order (λ[,α] or μ,σ)
    #[arg(long, value_parser = parse_params)]
    params: Params,
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = parse_positive)]
    censor_time: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
enum Precision {
    Digits(usize),
    Full,
}

#[derive(Debug, Clone)]
struct FamilyChoice(Vec<FamilyTag>);

#[derive(Debug, Clone)]
struct Levels(Vec<f64>);

#[derive(Debug, Clone)]
struct Params(Vec<f64>);

fn parse_precision(s: &str) -> Result<Precision, String> {
    if s == "full" {
        return Ok(Precision::Full);
    }
    s.parse::<usize>()
        .ok()
        .filter(|&d| d <= 17)
        .map(Precision::Digits)
        .ok_or_else(|| format!("expected 0..=17 or `full`, got `{s}`"))
}

fn parse_conf(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(c) if c > 0.0 && c < 1.0 => Ok(c),
        _ => Err(format!("confidence level must be in (0, 1), got `{s}`")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn parse_rho(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        _ => Err(format!("expected a non-negative number, got `{s}`")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{x}`"))
        })
        .collect()
}

fn parse_params(s: &str) -> Result<Params, String> {
    parse_list(s).map(Params)
}

fn parse_levels(s: &str) -> Result<Levels, String> {
    let levels = parse_list(s)?;
    if levels.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err("quantile levels must be in (0, 1]".into());
    }
    let mut sorted = levels.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(Levels(sorted))
}

fn parse_family(s: &str) -> Result<FamilyTag, String> {
    s.parse().map_err(|e: churnkit::Error| e.to_string())
}

fn parse_families(s: &str) -> Result<FamilyChoice, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(FamilyChoice(FamilyTag::ALL.to_vec()))
    } else {
        parse_family(s).map(|f| FamilyChoice(vec![f]))
    }
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: churnkit::Error| e.to_string())
}

fn parse_cutoff(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(churnkit::Error),
}

impl From<churnkit::Error> for Failure {
    fn from(e: churnkit::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the tool with `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Km(a) => cmd_km(&a, stdout),
        Command::Na(a) => cmd_na(&a, stdout),
        Command::Fit(a) => cmd_fit(&a, stdout),
        Command::Hazard(a) => cmd_hazard(&a, stdout),
        Command::Metrics(a) => cmd_metrics(&a, stdout),
        Command::Abtest(a) => cmd_abtest(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

fn load_table(
    path: &Path,
    sessions: &SessionArgs,
    strata: Option<&str>,
) -> Result<DurationTable, Failure> {
    if let Err(e) = File::open(path) {
        return Err(Failure::Data(churnkit::Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))));
    }
    if !sessions.sessions {
        return Ok(read_duration_table(path, strata)?);
    }
    if strata.is_some() {
        return Err(Failure::Usage(
            "--strata needs a durations file, not --sessions".into(),
        ));
    }
    let Some(cutoff) = sessions.cutoff else {
        return Err(Failure::Usage("--sessions requires --cutoff".into()));
    };
    if !(sessions.window.is_finite() && sessions.window > 0.0) {
        return Err(Failure::Usage("--window must be positive".into()));
    }
    let mut config = IngestConfig::new(cutoff);
    config.inactivity_window =
        Duration::milliseconds((sessions.window * 86_400_000.0).round() as i64);
    let records = read_sessions(path)?;
    let mut table = aggregate_players(&records, &config)?;
    table.label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(table)
}

fn load(input: &InputArgs) -> Result<Cohort, Failure> {
    Ok(load_table(&input.input, &input.sessions, None)?.to_cohort())
}

fn num(x: f64, precision: Precision) -> String {
    match precision {
        Precision::Full => format!("{x}"),
        Precision::Digits(d) => {
            // ties away from zero, as in hand-rounded tables (1/8 -> 0.13)
            let scale = 10f64.powi(d as i32);
            let r = (x * scale).round() / scale;
            let r = if r.is_finite() { r } else { x };
            format!("{r:.d$}")
        }
    }
}

fn opt(x: Option<f64>, precision: Precision) -> String {
    x.map_or_else(|| "NA".to_string(), |v| num(v, precision))
}

/// Prints rows either as a right-aligned text table or as CSV.
fn print_rows(
    out: &mut dyn Write,
    format: Format,
    header: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{}", header.join(","))?;
            for r in rows {
                let cells: Vec<&str> = r
                    .iter()
                    .map(|c| if c == "NA" { "" } else { c.as_str() })
                    .collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        Format::Table => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| {
                    rows.iter()
                        .map(|r| r[i].len())
                        .chain([header[i].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            writeln!(out, "{}", line(header.to_vec()))?;
            for r in rows {
                writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
            }
        }
    }
    Ok(())
}

/// One curve-file row: `(t, value, ci_lower, ci_upper)`.
pub type CurveRow = (f64, f64, Option<f64>, Option<f64>);

pub trait CurveRows {
    fn curve_rows(&self) -> Vec<CurveRow>;
}

impl CurveRows for StepCurve {
    /// Includes the `t = 0` origin row when the curve has any steps.
    fn curve_rows(&self) -> Vec<CurveRow> {
        if self.points.is_empty() {
            return vec![];
        }
        self.with_origin()
            .into_iter()
            .map(|p: CurvePoint| (p.time, p.value, p.ci_lower, p.ci_upper))
            .collect()
    }
}

impl CurveRows for HazardCurve {
    fn curve_rows(&self) -> Vec<CurveRow> {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| (t, v, None, None))
            .collect()
    }
}

/// Writes `t,value,ci_lower,ci_upper` at full precision.
pub fn write_curve(curve: &dyn CurveRows, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "t,value,ci_lower,ci_upper")?;
    let cell = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v}"));
    for (t, v, lo, hi) in curve.curve_rows() {
        writeln!(out, "{t},{v},{},{}", cell(lo), cell(hi))?;
    }
    Ok(())
}

pub fn emit_curve(curve: &dyn CurveRows, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_curve(curve, &mut w)?;
    w.flush()
}

/// Parses a file written by [`emit_curve`].
pub fn read_curve(path: &Path) -> churnkit::Result<Vec<CurveRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str| churnkit::Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("bad number `{field}`"),
        };
        let req = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&rec[i]));
        let optional = |i: usize| match &rec[i] {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(s)),
        };
        rows.push((req(0)?, req(1)?, optional(2)?, optional(3)?));
    }
    Ok(rows)
}

fn km_rows(km: &KmEstimate, p: Precision) -> Vec<Vec<String>> {
    let mut cum_hazard = 0.0;
    km.table
        .rows
        .iter()
        .zip(&km.curve.points)
        .map(|(row, pt)| {
            let h = row.hazard();
            cum_hazard += h;
            vec![
                num(row.time, p),
                row.at_risk.to_string(),
                row.events.to_string(),
                num(h, p),
                num(cum_hazard, p),
                num(pt.value, p),
                opt(pt.ci_lower, p),
                opt(pt.ci_upper, p),
            ]
        })
        .collect()
}

fn cmd_km(a: &CurveArgs, out: &mut dyn Write) -> CmdResult {
    let cohort = load(&a.input)?;
    let table = build_event_table(&cohort)?;
    let km = kaplan_meier(&table, a.conf)?;
    let p = a.output.precision;
    print_rows(
        out,
        a.output.format,
        &[
            "time",
            "at_risk",
            "events",
            "hazard",
            "cum_hazard",
            "survival",
            "ci_lower",
            "ci_upper",
        ],
        &km_rows(&km, p),
    )?;
    if km.improper {
        writeln!(
            out,
            "note: largest observation is censored; the curve does not reach zero"
        )?;
    }
    if let Some(path) = &a.output.out {
        emit_curve(&km.curve, path)?;
    }
    Ok(())
}

fn cmd_na(a: &CurveArgs, out: &mut dyn Write) -> CmdResult {
    let cohort = load(&a.input)?;
    let table = build_event_table(&cohort)?;
    let na = nelson_aalen(&table);
    let p = a.output.precision;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .zip(&na.curve.points)
        .map(|(row, pt)| {
            vec![
                num(row.time, p),
                row.at_risk.to_string(),
                row.events.to_string(),
                num(row.hazard(), p),
                num(pt.value, p),
                num((-pt.value).exp(), p),
            ]
        })
        .collect();
    print_rows(
        out,
        a.output.format,
        &[
            "time",
            "at_risk",
            "events",
            "hazard",
            "cum_hazard",
            "survival",
        ],
        &rows,
    )?;
    if let Some(path) = &a.output.out {
        emit_curve(&na.curve, path)?;
    }
    Ok(())
}

fn fit_rows(fit: &FitResult, p: Precision) -> Vec<Vec<String>> {
    let names = fit.family.tag().param_names();
    fit.params()
        .iter()
        .zip(fit.std_errors())
        .zip(&fit.ci)
        .zip(names)
        .map(|(((&est, se), &(lo, hi)), name)| {
            vec![
                fit.family.tag().to_string(),
                name.to_string(),
                num(est, p),
                num(se, p),
                num(lo, p),
                num(hi, p),
                num(fit.log_likelihood, p),
            ]
        })
        .collect()
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> CmdResult {
    let cohort = load(&a.input)?;
    let p = a.output.precision;
    let mut rows = Vec::new();
    let mut summary = None;
    for &tag in &a.family.0 {
        let fit = fit_mle(tag, &cohort, a.conf)?;
        if fit.hessian_warning {
            writeln!(
                out,
                "warning: {tag} Hessian not negative definite at the optimum"
            )?;
        }
        summary.get_or_insert((fit.churn_count, fit.total_time));
        rows.extend(fit_rows(&fit, p));
    }
    if let Some((d, r)) = summary {
        if a.output.format == Format::Table {
            writeln!(out, "churns {d}  total time {}", num(r, p))?;
        }
    }
    print_rows(
        out,
        a.output.format,
        &[
            "family", "param", "estimate", "std_err", "ci_lower", "ci_upper", "log_lik",
        ],
        &rows,
    )?;
    Ok(())
}

fn cmd_hazard(a: &HazardArgs, out: &mut dyn Write) -> CmdResult {
    let cohort = load(&a.input)?;
    let p = a.output.precision;
    if let Some(width) = a.bins {
        if a.bandwidth.is_some() {
            return Err(Failure::Usage(
                "--bandwidth applies to --kernel, not --bins".into(),
            ));
        }
        let rates = piecewise_exponential(&cohort, width)?;
        let rows: Vec<Vec<String>> = rates
            .bins
            .iter()
            .map(|b| {
                vec![
                    num(b.start, p),
                    num(b.end, p),
                    b.events.to_string(),
                    num(b.exposure, p),
                    opt(b.rate, p),
                ]
            })
            .collect();
        let header = ["start", "end", "events", "exposure", "rate"];
        print_rows(out, a.output.format, &header, &rows)?;
        if let Some(path) = &a.output.out {
            let full: Vec<Vec<String>> = rates
                .bins
                .iter()
                .map(|b| {
                    let f = Precision::Full;
                    vec![
                        num(b.start, f),
                        num(b.end, f),
                        b.events.to_string(),
                        num(b.exposure, f),
                        opt(b.rate, f),
                    ]
                })
                .collect();
            let mut w = BufWriter::new(File::create(path)?);
            print_rows(&mut w, Format::Csv, &header, &full)?;
            w.flush()?;
        }
        return Ok(());
    }

    let table = build_event_table(&cohort)?;
    let kind = a.kernel.unwrap_or(KernelKind::Epanechnikov);
    let bandwidth = match a.bandwidth {
        Some(b) => b,
        None => default_bandwidth(&table)?,
    };
    let grid = default_grid(&table, DEFAULT_GRID_POINTS)?;
    let curve = kernel_hazard(&table, &KernelSpec::new(kind, bandwidth), &grid)?;
    if a.output.format == Format::Table {
        writeln!(out, "kernel {kind}  bandwidth {}", num(bandwidth, p))?;
    }
    let rows: Vec<Vec<String>> = curve
        .grid
        .iter()
        .zip(&curve.values)
        .map(|(&t, &v)| vec![num(t, p), num(v, p)])
        .collect();
    print_rows(out, a.output.format, &["t", "hazard"], &rows)?;
    if let Some(path) = &a.output.out {
        emit_curve(&curve, path)?;
    }
    Ok(())
}

fn quantile_name(level: f64) -> String {
    if level == 0.5 {
        "median".into()
    } else {
        format!("t{}%", level * 100.0)
    }
}

fn cmd_metrics(a: &MetricsArgs, out: &mut dyn Write) -> CmdResult {
    let cohort = load(&a.input)?;
    let table = build_event_table(&cohort)?;
    let km = kaplan_meier(&table, a.conf)?;
    let mean = mean_auc(&km, a.conf)?;
    let quantiles = quantile_profile(&km, &a.quantiles.0, a.conf)?;
    let p = a.output.precision;
    let (lo, hi) = (mean.ci.map(|c| c.0), mean.ci.map(|c| c.1));
    let bound = |q: &QuantileEstimate| (opt(q.estimate, p), opt(q.lower, p), opt(q.upper, p));

    match a.output.format {
        Format::Table => {
            write!(
                out,
                "mean {} CI [{}, {}]",
                num(mean.mean, p),
                opt(lo, p),
                opt(hi, p)
            )?;
            if mean.restricted {
                write!(out, " (restricted to {})", num(mean.truncation_time, p))?;
            }
            writeln!(out)?;
            for q in &quantiles {
                let (e, l, u) = bound(q);
                writeln!(out, "{} {e} CI [{l}, {u}]", quantile_name(q.p))?;
            }
        }
        Format::Csv => {
            let mut rows = vec![vec![
                "mean".to_string(),
                String::new(),
                num(mean.mean, p),
                opt(lo, p),
                opt(hi, p),
            ]];
            for q in &quantiles {
                let (e, l, u) = bound(q);
                rows.push(vec!["quantile".into(), num(q.p, Precision::Full), e, l, u]);
            }
            print_rows(
                out,
                Format::Csv,
                &["metric", "level", "estimate", "ci_lower", "ci_upper"],
                &rows,
            )?;
        }
    }
    Ok(())
}

fn format_p(p_value: f64, precision: Precision) -> String {
    match precision {
        Precision::Full => format!("{p_value:e}"),
        Precision::Digits(_) if p_value < 1e-3 => format!("{p_value:.2e}"),
        Precision::Digits(_) => format!("{p_value:.3}"),
    }
}

fn cmd_abtest(a: &AbtestArgs, out: &mut dyn Write) -> CmdResult {
    let weights = WeightSpec::new(a.rho)?;
    let result: LogRankResult = match &a.strata {
        None => {
            let control = load_table(&a.control, &a.sessions, None)?.to_cohort();
            let test = load_table(&a.test, &a.sessions, None)?.to_cohort();
            logrank(&control, &test, weights)?
        }
        Some(col) => {
            let control = load_table(&a.control, &a.sessions, Some(col))?.by_stratum()?;
            let test = load_table(&a.test, &a.sessions, Some(col))?.by_stratum()?;
            let labels: BTreeSet<&String> = control.keys().chain(test.keys()).collect();
            let strata: Vec<(Cohort, Cohort)> = labels
                .into_iter()
                .map(|l| {
                    (
                        control.get(l).cloned().unwrap_or_default(),
                        test.get(l).cloned().unwrap_or_default(),
                    )
                })
                .collect();
            stratified_logrank(&strata, weights)?
        }
    };
    let p = a.output.precision;
    match a.output.format {
        Format::Table => {
            writeln!(
                out,
                "chi2 {} p {}  (U {}, Var {}, rho {}, strata {})",
                num(result.chi2, p),
                format_p(result.p_value, p),
                num(result.u, p),
                num(result.var_u, p),
                result.weights.rho,
                result.strata.len()
            )?;
            if result.p_underflow {
                writeln!(out, "note: p-value below the smallest representable double")?;
            }
        }
        Format::Csv => {
            let rows = vec![vec![
                num(result.chi2, p),
                format!("{:e}", result.p_value),
                num(result.u, p),
                num(result.var_u, p),
                format!("{}", result.weights.rho),
                result.strata.len().to_string(),
            ]];
            print_rows(
                out,
                Format::Csv,
                &["chi2", "p_value", "u", "var_u", "rho", "strata"],
                &rows,
            )?;
        }
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let family =
        Family::from_params(a.family, &a.params.0).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut spec = SimSpec::new(family, a.n, a.seed);
    spec.censor_time = a.censor_time;
    let cohort = simulate_cohort(&spec)?;
    match &a.out {
        Some(path) => write_durations(&cohort, path)?,
        None => write_durations_to(&cohort, out)?,
    }
    Ok(())
}
