use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use rician_capacity::config::{ConstraintKind, OutputFormat, RunConfig};
use rician_capacity::density::mutual_information;
use rician_capacity::distribution::AmplitudeDistribution;
use rician_capacity::kt::{verify, ConstraintSet};
use rician_capacity::mc::{mc_mutual_information, MCEstimate};
use rician_capacity::optimizer::{solve_capacity_with, Solution};
use rician_capacity::records::{
    to_json_pretty, CsvSink, SolveDocument, SweepDocument, SweepRecord,
};
use rician_capacity::special::{ChannelModel, ChannelSpec};
use rician_capacity::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Capacity of noncoherent Rician fading channels with discrete amplitude
/// inputs. SNRs are normalized (alpha); capacities are in nats.
#[derive(Parser)]
#[command(name = "rician-capacity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the capacity at one SNR.
    Solve(Common),
    /// Solve over an increasing SNR grid, one record per SNR (and kappa).
    Sweep(Common),
    /// Check the KT conditions for a distribution file.
    KtCheck {
        #[command(flatten)]
        common: Common,
        /// Text file with one `location probability` pair per line.
        dist: PathBuf,
    },
    /// Compare the quadrature mutual information with a Monte Carlo estimate.
    McCheck {
        #[command(flatten)]
        common: Common,
        dist: PathBuf,
        #[arg(long)]
        samples: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rician | rician-pn
    #[arg(long)]
    model: Option<ChannelModel>,
    /// moment4 | peak | avg-power
    #[arg(long)]
    constraint: Option<ConstraintKind>,
    /// Rician factor.
    #[arg(long = "K", allow_negative_numbers = true)]
    rician_k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_grid: Vec<f64>,
    /// Comma-separated for sweeps.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    kappa: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long, allow_negative_numbers = true)]
    kt_tol: Option<f64>,
    /// Solve sweep rows independently (and in parallel).
    #[arg(long)]
    no_warm_start: bool,
    /// Print capacities in bits in the summary.
    #[arg(long)]
    bits: bool,
}

#[derive(Debug)]
enum Failure {
    Input(Error),
    Numerical(Error),
    /// The computation finished but did not certify.
    Uncertified,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Numerical(_) | Failure::Uncertified => EXIT_NUMERICAL,
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn input<T>(r: rician_capacity::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn numerical<T>(r: rician_capacity::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Numerical)
}

impl Common {
    fn load(&self) -> rician_capacity::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json(&read(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.model {
            c.model = m;
        }
        if let Some(k) = self.constraint {
            c.constraint = k;
        }
        if let Some(k) = self.rician_k {
            c.rician_k = k;
        }
        if self.snr.is_some() {
            c.snr = self.snr;
        }
        if !self.snr_grid.is_empty() {
            c.snr_grid = self.snr_grid.clone();
        }
        if !self.kappa.is_empty() {
            c.kappa = self.kappa.clone();
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.format.is_some() {
            c.format = self.format;
        }
        if let Some(t) = self.kt_tol {
            c.kt_tol = t;
        }
        c.warm_start &= !self.no_warm_start;
        c.bits |= self.bits;
        c.validate()?;
        Ok(c)
    }
}

fn read(path: &Path) -> rician_capacity::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn open_out(path: Option<&Path>) -> rician_capacity::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(path: Option<&Path>, text: &str) -> rician_capacity::Result<()> {
    let mut out = open_out(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::Io(e.to_string()))
}

fn show_capacity(nats: f64, bits: bool) -> String {
    if bits {
        format!("{:.6} bits", nats / std::f64::consts::LN_2)
    } else {
        format!("{nats:.6} nats")
    }
}

fn summarize(rec: &SweepRecord, bits: bool) {
    let points: Vec<String> = rec
        .locations
        .iter()
        .zip(&rec.probabilities)
        .map(|(r, p)| format!("{r:.5}@{p:.5}"))
        .collect();
    eprintln!(
        "alpha={} C={} points=[{}] kt_grid_min={:.3e} {}",
        rec.snr_alpha,
        show_capacity(rec.capacity_nats, bits),
        points.join(" "),
        rec.kt_grid_min,
        if rec.converged {
            "certified"
        } else {
            "UNCERTIFIED"
        }
    );
}

fn solve_one(
    cfg: &RunConfig,
    channel: &ChannelSpec,
    constraints: &ConstraintSet,
    warm: Option<&AmplitudeDistribution>,
) -> rician_capacity::Result<Solution> {
    solve_capacity_with(
        channel,
        constraints,
        &cfg.solver_config(),
        &cfg.quadrature,
        &cfg.kt_options(),
        warm,
    )
}

fn cmd_solve(common: &Common) -> Outcome {
    let cfg = input(common.load())?;
    let channel = input(cfg.channel())?;
    let alpha = input(cfg.snr())?;
    let kappa = input(cfg.single_kappa())?;
    let constraints = input(cfg.constraint_set(alpha, kappa))?;
    let solution = numerical(solve_one(&cfg, &channel, &constraints, None))?;
    let doc = SolveDocument::new(&channel, &constraints, &solution);
    let text = match cfg.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => input(to_json_pretty(&doc))?,
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            input(rician_capacity::records::write_csv(
                &mut buf,
                std::slice::from_ref(&doc.record),
            ))?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    };
    input(emit(common.out.as_deref(), &text))?;
    summarize(&doc.record, cfg.bits);
    if solution.converged {
        Ok(())
    } else {
        Err(Failure::Uncertified)
    }
}

fn cmd_sweep(common: &Common) -> Outcome {
    let cfg = input(common.load())?;
    let channel = input(cfg.channel())?;
    let grid = input(cfg.grid())?.to_vec();
    let kappas: Vec<Option<f64>> = if cfg.kappa.is_empty() {
        vec![None]
    } else {
        cfg.kappa.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for &kappa in &kappas {
        for &alpha in &grid {
            rows.push(input(cfg.constraint_set(alpha, kappa))?);
        }
    }
    let format = cfg.format.unwrap_or(OutputFormat::Csv);
    let mut csv = match format {
        OutputFormat::Csv => Some(input(
            open_out(common.out.as_deref()).and_then(CsvSink::new),
        )?),
        OutputFormat::Json => None,
    };
    let mut done: Vec<SweepRecord> = Vec::new();
    let mut push = |rec: SweepRecord, done: &mut Vec<SweepRecord>| -> Outcome {
        summarize(&rec, cfg.bits);
        if let Some(sink) = csv.as_mut() {
            input(sink.push(&rec))?;
        }
        done.push(rec);
        Ok(())
    };
    let mut failure = None;
    if cfg.warm_start {
        let mut warm: Option<AmplitudeDistribution> = None;
        for (i, cons) in rows.iter().enumerate() {
            if i % grid.len() == 0 {
                warm = None;
            }
            match solve_one(&cfg, &channel, cons, warm.as_ref()) {
                Ok(sol) => {
                    push(SweepRecord::from_solution(&channel, cons, &sol), &mut done)?;
                    warm = Some(sol.distribution);
                }
                Err(e) => {
                    failure = Some(Failure::Numerical(e));
                    break;
                }
            }
        }
    } else {
        let results: Vec<_> = rows
            .par_iter()
            .map(|cons| solve_one(&cfg, &channel, cons, None))
            .collect();
        for (cons, res) in rows.iter().zip(results) {
            match res {
                Ok(sol) => push(SweepRecord::from_solution(&channel, cons, &sol), &mut done)?,
                Err(e) => {
                    failure = Some(Failure::Numerical(e));
                    break;
                }
            }
        }
    }
    if format == OutputFormat::Json {
        let doc = SweepDocument::new(done.clone());
        input(emit(common.out.as_deref(), &input(to_json_pretty(&doc))?))?;
    }
    let uncertified = done.iter().filter(|r| !r.converged).count();
    if uncertified > 0 {
        eprintln!("{uncertified} of {} rows uncertified", done.len());
    }
    failure.map_or(Ok(()), Err)
}

fn load_distribution(cfg_path: &Path) -> std::result::Result<AmplitudeDistribution, Failure> {
    input(read(cfg_path).and_then(|t| AmplitudeDistribution::parse_text(&t)))
}

fn cmd_kt_check(common: &Common, dist_path: &Path) -> Outcome {
    let cfg = input(common.load())?;
    let channel = input(cfg.channel())?;
    let alpha = input(cfg.snr())?;
    let kappa = input(cfg.single_kappa())?;
    let constraints = input(cfg.constraint_set(alpha, kappa))?;
    let dist = load_distribution(dist_path)?;
    if let Some(cap) = constraints.amplitude_cap() {
        if dist.max_location() > cap * (1.0 + 1e-12) {
            return Err(Failure::Input(Error::Infeasible(format!(
                "location {} exceeds the peak amplitude {cap}",
                dist.max_location()
            ))));
        }
    }
    let mi = numerical(mutual_information(&dist, &channel, &cfg.quadrature))?;
    let report = numerical(verify(
        &dist,
        &channel,
        &constraints,
        mi,
        &cfg.quadrature,
        &cfg.kt_options(),
    ))?;
    input(emit(
        common.out.as_deref(),
        &input(to_json_pretty(&report))?,
    ))?;
    eprintln!(
        "C={} grid_min={:.3e} (tol {:.3e}) feasible={} {}",
        show_capacity(mi, cfg.bits),
        report.grid_min,
        report.effective_tol,
        report.feasible,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Uncertified)
    }
}

#[derive(Serialize)]
struct McReport {
    quadrature_nats: f64,
    mc: MCEstimate,
    delta: f64,
    z: f64,
    pass: bool,
}

fn cmd_mc_check(common: &Common, dist_path: &Path, samples: Option<u64>) -> Outcome {
    let cfg = input(common.load())?;
    let channel = input(cfg.channel())?;
    let dist = load_distribution(dist_path)?;
    let n = samples.unwrap_or(cfg.mc_samples);
    let exact = numerical(mutual_information(&dist, &channel, &cfg.quadrature))?;
    let mc = input(mc_mutual_information(&dist, &channel, n, cfg.seed))?;
    let delta = mc.value - exact;
    let pass = delta.abs() <= 3.0 * mc.std_err;
    let z = if mc.std_err > 0.0 {
        delta / mc.std_err
    } else {
        0.0
    };
    let report = McReport {
        quadrature_nats: exact,
        mc,
        delta,
        z,
        pass,
    };
    input(emit(
        common.out.as_deref(),
        &input(to_json_pretty(&report))?,
    ))?;
    eprintln!(
        "quadrature {} vs MC {} (std err {:.2e}, z={z:.2}) {}",
        show_capacity(exact, cfg.bits),
        show_capacity(mc.value, cfg.bits),
        mc.std_err,
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(Failure::Uncertified)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::KtCheck { common, dist } => cmd_kt_check(common, dist),
        Command::McCheck {
            common,
            dist,
            samples,
        } => cmd_mc_check(common, dist, *samples),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e}"),
                Failure::Numerical(e) => eprintln!("numerical failure: {e}"),
                Failure::Uncertified => {}
            }
            ExitCode::from(f.code())
        }
    }
}
