//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{AlphaResult, AnalysisError, Verdict};
use crate::collapse::{detection_delay, spread, CollapseModel, SpreadResult};
use crate::config::{ConfigError, RunConfig};
use crate::optics::{
    order_power_fractions, peak_angles, relative_intensity, screen_profile, IntensityProfile,
    OpticsError,
};
use crate::planner::{budget_grating, budget_slit, echo_ceiling, EchoAdvisory, PlanError, RateBudget};
use crate::protocol::{alpha_for, analyze_experiment, analyze_stream, compare, Comparison, StreamAnalysis};
use crate::simkit::{
    expected_detector_rate, run_experiment, simulate_phase, Phase, SimDiagnostics, SimError,
    TagFormat, TagFormatError, TagStream, FIRST_SCREEN_CHANNEL,
};

pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;
pub const EXIT_ANALYSIS: i32 = 6;
pub const EXIT_INCONCLUSIVE: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "collapse-lab", version, about = "Single-photon grating collapse-time simulator and analyzer")]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Tag file format; overrides `run.format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<TagFormat>,
    /// Configuration override, repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// 800 lines/mm grating, f = 4 m.
    Reference,
    /// Grating removed.
    NoGrating,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the screen profile and the diffraction peaks.
    Pattern,
    /// Print the spread and light-cone delay of a profile.
    Spread {
        /// Profile CSV (`x_m,weight`) instead of the configured optics.
        #[arg(long, conflicts_with = "builtin")]
        profile: Option<PathBuf>,
        /// Built-in optics instead of the configuration file.
        #[arg(long, value_enum)]
        builtin: Option<Builtin>,
    },
    /// Count-rate budgets for the slit and grating layouts.
    Plan,
    /// Simulate one phase and write its tag stream.
    Simulate {
        #[arg(long, value_enum)]
        phase: Phase,
    },
    /// Histogram and compare tag files; two files are treated as baseline then grating.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        reference: Option<u8>,
        #[arg(long)]
        signal: Option<u8>,
        /// Screen channels for the anticorrelation parameter.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        alpha: Option<Vec<u8>>,
        /// Predicted delay; computed from the configured grating otherwise.
        #[arg(long)]
        predicted_ns: Option<f64>,
    },
    /// Simulate and analyze both phases and report the verdict.
    RunExperiment,
    /// Convert a tag file between formats.
    Convert { input: PathBuf, output: PathBuf },
    /// Print the effective configuration.
    PrintConfig,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: String, source: TagFormatError },
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Format {
                source: TagFormatError::Io(_),
                ..
            } => EXIT_IO,
            CliError::Format { .. } => EXIT_FORMAT,
            CliError::Analysis(_) => EXIT_ANALYSIS,
            CliError::Inconclusive(_) => EXIT_INCONCLUSIVE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(source: std::io::Error) -> Self {
        CliError::Io {
            path: "<stdout>".into(),
            source,
        }
    }
}

macro_rules! config_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}
config_errors!(ConfigError, SimError, OpticsError, PlanError, crate::collapse::CollapseError);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_err(path: &Path) -> impl FnOnce(TagFormatError) -> CliError + '_ {
    move |source| CliError::Format {
        path: path.display().to_string(),
        source,
    }
}

/// Common envelope of every JSON report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

struct Context {
    config: RunConfig,
    hash: String,
    seed: u64,
    out_dir: PathBuf,
    format: TagFormat,
}

impl Context {
    fn new(cli: &Cli, base: Option<RunConfig>) -> Result<Self, CliError> {
        let mut config = match base {
            Some(b) => {
                let mut doc = serde_json::to_value(b).map_err(ConfigError::from)?;
                for o in &cli.overrides {
                    crate::config::apply_override(&mut doc, o)?;
                }
                serde_json::from_value(doc).map_err(ConfigError::from)?
            }
            None => RunConfig::load(cli.config.as_deref(), &cli.overrides)?,
        };
        if let Some(seed) = cli.seed {
            config.run.seed = seed;
        }
        Ok(Self {
            hash: config.hash(),
            seed: config.run.seed,
            out_dir: cli.out.clone().unwrap_or_else(|| config.run.out_dir.clone()),
            format: cli.format.unwrap_or(config.run.format),
            config,
        })
    }

    fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        Ok(self.out_dir.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, command: &'static str, body: T) -> Result<PathBuf, CliError> {
        let path = self.output(name)?;
        let report = Report {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: &self.hash,
            seed: self.seed,
            body,
        };
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.output(name)?;
        let f = File::create(&path).map_err(io_err(&path))?;
        Ok((path, BufWriter::new(f)))
    }

    /// Profile of the configured optics: the grating pattern, or the focused
    /// spot when no grating is configured.
    fn profile(&self) -> Result<IntensityProfile, CliError> {
        let c = &self.config;
        Ok(match &c.grating {
            Some(g) => screen_profile(g, &c.screen)?,
            None => IntensityProfile::gaussian_spot(0.0, c.screen.spot_sigma_m, 241)?,
        })
    }

    fn write_stream(&self, stream: &TagStream, stem: &str) -> Result<PathBuf, CliError> {
        let path = self.output(&format!("{stem}.{}", self.format.extension()))?;
        stream.write_to(&path, self.format).map_err(fmt_err(&path))?;
        Ok(path)
    }

    fn write_histogram(&self, analysis: &StreamAnalysis, stem: &str) -> Result<PathBuf, CliError> {
        let (path, w) = self.create(&format!("{stem}_hist.csv"))?;
        analysis
            .histogram
            .write_csv(w)
            .map_err(|e| io_err(&path)(std::io::Error::other(e)))?;
        Ok(path)
    }
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Pattern => cmd_pattern(&Context::new(cli, None)?, out),
        Command::Spread { profile, builtin } => {
            let base = builtin.map(|b| match b {
                Builtin::Reference => RunConfig::default(),
                Builtin::NoGrating => RunConfig {
                    grating: None,
                    ..RunConfig::default()
                },
            });
            cmd_spread(&Context::new(cli, base)?, profile.as_deref(), out)
        }
        Command::Plan => cmd_plan(&Context::new(cli, None)?, out),
        Command::Simulate { phase } => cmd_simulate(&Context::new(cli, None)?, *phase, out),
        Command::Analyze {
            files,
            reference,
            signal,
            alpha,
            predicted_ns,
        } => {
            let ctx = Context::new(cli, None)?;
            let opts = AnalyzeOptions {
                reference: reference.unwrap_or(ctx.config.analysis.reference_channel),
                signal: signal.unwrap_or(ctx.config.analysis.signal_channel),
                alpha: alpha.as_ref().map(|v| (v[0], v[1])),
                predicted_ns: *predicted_ns,
            };
            cmd_analyze(&ctx, files, &opts, out)
        }
        Command::RunExperiment => cmd_run_experiment(&Context::new(cli, None)?, out),
        Command::Convert { input, output } => cmd_convert(cli.format, input, output, out),
        Command::PrintConfig => {
            let ctx = Context::new(cli, None)?;
            let text = serde_json::to_string_pretty(&ctx.config).expect("config serializes");
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PeakRow {
    order: i32,
    theta_rad: f64,
    x_m: f64,
    relative_height: f64,
    integrated_fraction: f64,
}

#[derive(Serialize)]
struct PatternBody {
    peaks: Vec<PeakRow>,
    spread: SpreadResult,
    truncated: bool,
    samples: usize,
}

fn cmd_pattern(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let c = &ctx.config;
    let profile = ctx.profile()?;
    let mut peaks = Vec::new();
    if let Some(g) = &c.grating {
        let fractions = order_power_fractions(g, &c.screen, &profile)?;
        for o in peak_angles(g)? {
            let x = c.screen.to_screen(o.theta_rad);
            if x.abs() > c.screen.extent_halfwidth_m {
                continue;
            }
            peaks.push(PeakRow {
                order: o.order,
                theta_rad: o.theta_rad,
                x_m: x,
                relative_height: relative_intensity(g, o.theta_rad)?,
                integrated_fraction: fractions
                    .iter()
                    .find(|(m, _)| *m == o.order)
                    .map_or(0.0, |(_, f)| *f),
            });
        }
    } else {
        peaks.push(PeakRow {
            order: 0,
            theta_rad: 0.0,
            x_m: 0.0,
            relative_height: 1.0,
            integrated_fraction: 1.0,
        });
    }

    let (profile_path, w) = ctx.create("profile.csv")?;
    profile
        .write_csv(w)
        .map_err(|e| io_err(&profile_path)(std::io::Error::other(e)))?;
    let (peaks_path, w) = ctx.create("peaks.csv")?;
    let mut writer = csv::Writer::from_writer(w);
    for p in &peaks {
        writer
            .serialize(p)
            .map_err(|e| io_err(&peaks_path)(std::io::Error::other(e)))?;
    }
    writer.flush().map_err(io_err(&peaks_path))?;

    writeln!(out, "{:>6} {:>12} {:>12} {:>16} {:>20}", "order", "theta_rad", "x_m", "relative_height", "integrated_fraction")?;
    for p in &peaks {
        writeln!(
            out,
            "{:>6} {:>12.6} {:>12.6} {:>16.6e} {:>20.6}",
            p.order, p.theta_rad, p.x_m, p.relative_height, p.integrated_fraction
        )?;
    }
    if profile.truncated() {
        writeln!(out, "warning: screen extent does not reach every propagating order")?;
    }
    let body = PatternBody {
        peaks,
        spread: spread(&profile)?,
        truncated: profile.truncated(),
        samples: profile.len(),
    };
    ctx.write_json("pattern.json", "pattern", body)?;
    writeln!(out, "wrote {} and {}", profile_path.display(), peaks_path.display())?;
    Ok(())
}

fn cmd_spread(ctx: &Context, profile_path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let profile = match profile_path {
        Some(p) => {
            let f = File::open(p).map_err(io_err(p))?;
            IntensityProfile::read_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ctx.profile()?,
    };
    let s = spread(&profile)?;
    let model = ctx.config.collapse.model;
    let model_name = match model {
        CollapseModel::Instantaneous => "instantaneous",
        CollapseModel::HellwigKraus => "hellwig_kraus",
    };
    writeln!(out, "spread_m        {:.9}", s.spread_m)?;
    writeln!(out, "t_delay_ns      {:.6}", s.delay_ns())?;
    writeln!(out, "t_delay_ps      {}", crate::units::seconds_to_ps(s.delay_s))?;
    writeln!(out, "model           {model_name}")?;
    writeln!(out, "model_delay_ns  {:.6}", detection_delay(model, &profile)? * 1e9)?;
    if profile.truncated() {
        writeln!(out, "warning: screen extent does not reach every propagating order")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PlanRow {
    scenario: String,
    #[serde(flatten)]
    budget: RateBudget,
}

#[derive(Serialize)]
struct PlanBody {
    budgets: Vec<PlanRow>,
    echo: EchoAdvisory,
}

fn cmd_plan(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let c = &ctx.config;
    let det = c
        .detectors
        .first()
        .map(|d| d.spec)
        .ok_or_else(|| CliError::Config("no screen detectors configured".into()))?;
    let src = &c.source;
    let mut rows = vec![PlanRow {
        scenario: "slit".into(),
        budget: budget_slit(
            src.herald_rate_hz,
            src.path_efficiency,
            det.aperture_m,
            c.planner.slit_spread_extent_m,
            det.efficiency,
            det.dark_rate_hz,
        )?,
    }];
    let fraction = match (c.planner.peak_fraction_override, &c.grating) {
        (Some(f), _) => f,
        (None, Some(g)) => {
            let profile = screen_profile(g, &c.screen)?;
            order_power_fractions(g, &c.screen, &profile)?
                .into_iter()
                .find(|(m, _)| *m == 1)
                .map(|(_, f)| f)
                .ok_or_else(|| CliError::Config("first order does not reach the screen".into()))?
        }
        (None, None) => {
            return Err(CliError::Config(
                "grating budget needs a grating or planner.peak_fraction_override".into(),
            ))
        }
    };
    rows.push(PlanRow {
        scenario: format!("grating_peak_fraction_{fraction:.4}"),
        budget: budget_grating(src.herald_rate_hz, src.path_efficiency, fraction, det.efficiency, det.dark_rate_hz)?,
    });
    rows.push(PlanRow {
        scenario: "grating_peak_fraction_0.2000".into(),
        budget: budget_grating(src.herald_rate_hz, src.path_efficiency, 0.2, det.efficiency, det.dark_rate_hz)?,
    });
    let echo = echo_ceiling(src.herald_rate_hz)?;

    let (csv_path, w) = ctx.create("plan.csv")?;
    let mut writer = csv::Writer::from_writer(w);
    writer
        .write_record([
            "scenario",
            "source_rate_hz",
            "path_efficiency",
            "geometric_acceptance",
            "detector_efficiency",
            "expected_rate_hz",
            "dark_rate_hz",
            "snr",
            "quoted_rate_hz",
        ])
        .and_then(|_| {
            for r in &rows {
                let b = &r.budget;
                writer.write_record([
                    r.scenario.clone(),
                    b.source_rate_hz.to_string(),
                    b.path_efficiency.to_string(),
                    b.geometric_acceptance.to_string(),
                    b.detector_efficiency.to_string(),
                    b.expected_rate_hz.to_string(),
                    b.dark_rate_hz.to_string(),
                    b.snr.map_or(String::new(), |s| s.to_string()),
                    b.quoted_rate_hz.map_or(String::new(), |s| s.to_string()),
                ])?;
            }
            Ok(())
        })
        .map_err(|e| io_err(&csv_path)(std::io::Error::other(e)))?;
    writer.flush().map_err(io_err(&csv_path))?;

    writeln!(
        out,
        "{:<30} {:>12} {:>10} {:>12} {:>8} {:>14} {:>10} {:>10}",
        "scenario", "source_hz", "path_eff", "acceptance", "det_eff", "expected_hz", "dark_hz", "snr"
    )?;
    for r in &rows {
        let b = &r.budget;
        writeln!(
            out,
            "{:<30} {:>12.4e} {:>10.3} {:>12.4e} {:>8.3} {:>14.4} {:>10.1} {:>10}",
            r.scenario,
            b.source_rate_hz,
            b.path_efficiency,
            b.geometric_acceptance,
            b.detector_efficiency,
            b.expected_rate_hz,
            b.dark_rate_hz,
            b.snr.map_or("-".into(), |s| format!("{s:.3}")),
        )?;
        if b.below_dark_rate() {
            writeln!(out, "  {}: expected rate is below the dark rate", r.scenario)?;
        }
        if let Some(q) = b.quoted_rate_hz {
            writeln!(out, "  {}: externally quoted rate {q:.0} /s", r.scenario)?;
        }
    }
    writeln!(
        out,
        "echo ceiling {:.0} /s, requested {:.0} /s: {:?}",
        echo.ceiling_hz, echo.requested_rate_hz, echo.risk
    )?;
    ctx.write_json("plan.json", "plan", PlanBody { budgets: rows, echo })?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateBody<'a> {
    phase: Phase,
    spread: SpreadResult,
    expected_signal_rate_hz: f64,
    warnings: Vec<String>,
    diagnostics: &'a SimDiagnostics,
}

fn cmd_simulate(ctx: &Context, phase: Phase, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = ctx.config.experiment()?;
    let warnings = spec.validate()?;
    let run = simulate_phase(&spec, phase, ctx.seed)?;
    let profile = spec.profile(phase)?;
    let d2 = spec.phase_detectors(phase)[0];
    let expected = expected_detector_rate(&spec.source, &profile, &d2);
    let path = ctx.write_stream(&run.output.stream, phase.label())?;
    let diag = &run.output.diagnostics;
    for w in &warnings {
        writeln!(out, "warning: {w}")?;
    }
    writeln!(out, "phase {} seed {} config {}", phase.label(), ctx.seed, ctx.hash)?;
    writeln!(out, "heralds {}", diag.heralds)?;
    for (ch, s) in &diag.channels {
        writeln!(
            out,
            "channel {ch}: recorded {} (signal {}, dark {}, afterpulse {}, dead-time losses {})",
            s.recorded, s.signal, s.dark, s.afterpulse, s.dead_time_losses
        )?;
    }
    writeln!(out, "expected D2 signal rate {expected:.2} /s")?;
    ctx.write_json(
        &format!("{}_diagnostics.json", phase.label()),
        "simulate",
        SimulateBody {
            phase,
            spread: run.spread,
            expected_signal_rate_hz: expected,
            warnings,
            diagnostics: diag,
        },
    )?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

struct AnalyzeOptions {
    reference: u8,
    signal: u8,
    alpha: Option<(u8, u8)>,
    predicted_ns: Option<f64>,
}

#[derive(Serialize)]
struct InputReport {
    file: String,
    seed: u64,
    config_hash: String,
    phase: Option<String>,
    analysis: StreamAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<AlphaResult>,
}

#[derive(Serialize)]
struct AnalyzeBody {
    inputs: Vec<InputReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_analyze(ctx: &Context, files: &[PathBuf], opts: &AnalyzeOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = &ctx.config.analysis;
    let mut inputs = Vec::new();
    for (i, path) in files.iter().enumerate() {
        let stream = TagStream::read_from(path).map_err(fmt_err(path))?;
        let analysis = analyze_stream(&stream, opts.reference, opts.signal, settings)?;
        let stem = path
            .file_stem()
            .map_or_else(|| format!("input{i}"), |s| s.to_string_lossy().into_owned());
        ctx.write_histogram(&analysis, &format!("{i}_{stem}"))?;
        let alpha = match opts.alpha {
            Some((a, b)) if stream.header.channels.contains(&a) && stream.header.channels.contains(&b) => {
                Some(alpha_for(&stream, a, b, settings)?)
            }
            _ => None,
        };
        let e = &analysis.estimate;
        writeln!(
            out,
            "{}: tau* = {:.1} ps ± {:.1} ps, peak {} counts, significance {:.1} sigma",
            path.display(),
            e.tau_star_ps,
            e.uncertainty_ps(),
            e.peak_counts,
            e.significance_sigma
        )?;
        if let Some(a) = &alpha {
            writeln!(
                out,
                "  alpha = {} (95% upper {}), counts {:?}",
                a.alpha.map_or("undefined".into(), |v| format!("{v:.4}")),
                a.alpha_upper_95.map_or("undefined".into(), |v| format!("{v:.4}")),
                a.counts
            )?;
        }
        inputs.push(InputReport {
            file: file_label(path),
            seed: stream.header.seed,
            config_hash: stream.header.config_hash.clone(),
            phase: stream.header.phase.clone(),
            analysis,
            alpha,
        });
    }
    if opts.alpha.is_some() && inputs.iter().all(|i| i.alpha.is_none()) {
        return Err(AnalysisError::EmptyChannel("anticorrelation").into());
    }
    let comparison = if inputs.len() == 2 {
        let predicted_ps = match opts.predicted_ns {
            Some(ns) => ns * 1e3,
            None => match &ctx.config.grating {
                Some(g) => spread(&screen_profile(g, &ctx.config.screen)?)?.delay_s * 1e12,
                None => {
                    return Err(CliError::Config(
                        "the delay comparison needs a grating or --predicted-ns".into(),
                    ))
                }
            },
        };
        Some(compare(
            &inputs[0].analysis.estimate,
            &inputs[1].analysis.estimate,
            predicted_ps,
            &settings.test,
        )?)
    } else {
        None
    };
    if let Some(c) = &comparison {
        print_comparison(c, out)?;
    }
    let verdict = comparison.as_ref().map(|c| c.verdict);
    let path = ctx.write_json("analysis.json", "analyze", AnalyzeBody { inputs, comparison })?;
    writeln!(out, "wrote {}", path.display())?;
    if verdict == Some(Verdict::Inconclusive) {
        return Err(CliError::Inconclusive("delay comparison did not discriminate".into()));
    }
    Ok(())
}

fn print_comparison(c: &Comparison, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(r) = &c.delta_t {
        writeln!(
            out,
            "T1 - T0 = {:.1} ps ± {:.1} ps (predicted {:.1} ps; {:.1} sigma from 0, {:.1} sigma from prediction)",
            r.delta_t_ps, r.sigma_delta_t_ps, r.predicted_delay_ps, r.z_from_instantaneous, r.z_from_delayed
        )?;
    }
    if let Some(l) = &c.low_statistics {
        writeln!(out, "low statistics: {}", l.message)?;
    }
    writeln!(out, "verdict: {:?}", c.verdict)?;
    Ok(())
}

#[derive(Serialize)]
struct PhaseSummary<'a> {
    spread: SpreadResult,
    stream: String,
    histogram: String,
    diagnostics: &'a SimDiagnostics,
}

#[derive(Serialize)]
struct ExperimentBody<'a> {
    config: &'a RunConfig,
    warnings: &'a [String],
    baseline: PhaseSummary<'a>,
    grating: PhaseSummary<'a>,
    analysis: crate::protocol::ExperimentAnalysis,
    verdict: Verdict,
}

fn cmd_run_experiment(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = ctx.config.experiment()?;
    let run = run_experiment(&spec, ctx.seed)?;
    let analysis = analyze_experiment(&run, &ctx.config.analysis)?;
    let mut summaries = Vec::new();
    for (phase, a) in [(&run.baseline, &analysis.baseline), (&run.grating, &analysis.grating)] {
        let label = phase.phase.label();
        let stream = ctx.write_stream(&phase.output.stream, label)?;
        let hist = ctx.write_histogram(a, label)?;
        summaries.push(PhaseSummary {
            spread: phase.spread,
            stream: file_label(&stream),
            histogram: file_label(&hist),
            diagnostics: &phase.output.diagnostics,
        });
    }
    for w in &run.warnings {
        writeln!(out, "warning: {w}")?;
    }
    for (label, a) in [("baseline", &analysis.baseline), ("grating", &analysis.grating)] {
        let e = &a.estimate;
        writeln!(
            out,
            "{label}: tau* = {:.1} ps ± {:.1} ps, significance {:.1} sigma",
            e.tau_star_ps,
            e.uncertainty_ps(),
            e.significance_sigma
        )?;
    }
    print_comparison(&analysis.comparison, out)?;
    if let Some(a) = &analysis.alpha {
        writeln!(
            out,
            "alpha(D{}, D{}) = {} (95% upper {})",
            FIRST_SCREEN_CHANNEL,
            FIRST_SCREEN_CHANNEL + 1,
            a.alpha.map_or("undefined".into(), |v| format!("{v:.4}")),
            a.alpha_upper_95.map_or("undefined".into(), |v| format!("{v:.4}")),
        )?;
    }
    let verdict = analysis.comparison.verdict;
    let grating = summaries.pop().expect("two phases");
    let baseline = summaries.pop().expect("two phases");
    let path = ctx.write_json(
        "report.json",
        "run-experiment",
        ExperimentBody {
            config: &ctx.config,
            warnings: &run.warnings,
            baseline,
            grating,
            analysis,
            verdict,
        },
    )?;
    writeln!(out, "wrote {}", path.display())?;
    if verdict == Verdict::Inconclusive {
        return Err(CliError::Inconclusive("delay comparison did not discriminate".into()));
    }
    Ok(())
}

fn cmd_convert(format: Option<TagFormat>, input: &Path, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let stream = TagStream::read_from(input).map_err(fmt_err(input))?;
    let format = format.unwrap_or_else(|| {
        if output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            TagFormat::Csv
        } else {
            TagFormat::Bin
        }
    });
    stream.write_to(output, format).map_err(fmt_err(output))?;
    writeln!(out, "wrote {} tags to {}", stream.len(), output.display())?;
    Ok(())
}
