//! Command-line interface.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::asymptotics::{classify, compare};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, ser_f64, to_json_string};
use crate::model::{validate_assumptions, Model, Preferences};
use crate::policy::WealthGrid;
use crate::simulate::simulate_paths;
use crate::spectral::{build_k, KMatrix};
use crate::time_iteration::solve;
use crate::two_period::{solve_two_period, TwoPeriodSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_ASSUMPTIONS: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "optsave", version, about = "Optimal savings with wealth in utility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the model assumptions and print the report.
    Validate(ModelArgs),
    /// Solve for the optimal consumption policy.
    Solve(SolveArgs),
    /// Classify the asymptotic regime and predict the limiting MPC.
    Asymptotics(AsymptoticsArgs),
    /// Solve and compare predicted against measured asymptotic MPCs.
    Compare(SolveArgs),
    /// Tabulate the two-period consumption function.
    TwoPeriod(TwoPeriodArgs),
    /// Solve and simulate a panel of wealth paths.
    Simulate(SimulateArgs),
    /// Print K(theta), its spectral radius and irreducibility.
    Spectral(SpectralArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Smallest grid point [default: 1e-3 x median income]
    #[arg(long)]
    wmin: Option<f64>,
    /// Largest grid point [default: 1e4 x median income]
    #[arg(long)]
    wmax: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    gridn: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    /// Initial wealth [default: median income]
    #[arg(long)]
    w0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    z0: usize,
}

#[derive(Debug, Args)]
struct SpectralArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    theta: f64,
}

#[derive(Debug, Args)]
struct TwoPeriodArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    psi: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long = "gross-return")]
    gross_return: f64,
    /// Wealth levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    w: Vec<f64>,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate(args) => {
            let model = Model::load(&args.model)?;
            let report = validate_assumptions(&model.prims, &model.prefs)?;
            out.write_all(to_json_string(&report)?.as_bytes())?;
            Ok(if report.solvable() { EXIT_OK } else { EXIT_ASSUMPTIONS })
        }
        Command::Solve(args) => {
            let Some((model, grid)) = prepare(&args, out)? else {
                return Ok(EXIT_ASSUMPTIONS);
            };
            let (pol, diag) = solve(&model.prims, &model.prefs, grid, args.tol, args.max_iter)?;
            fs::create_dir_all(&args.out)?;
            write_file(&args.out.join("policy.csv"), |w| pol.write_csv(w))?;
            let json = to_json_string(&diag)?;
            fs::write(args.out.join("diagnostics.json"), &json)?;
            writeln!(out, "converged in {} iterations", diag.iterations)?;
            Ok(EXIT_OK)
        }
        Command::Asymptotics(args) => {
            let model = Model::load(&args.model.model)?;
            let report = classify(&model.prims, &model.prefs)?;
            let json = to_json_string(&report)?;
            fs::create_dir_all(&args.out)?;
            fs::write(args.out.join("asymptotics.json"), &json)?;
            out.write_all(json.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Compare(args) => {
            let Some((model, grid)) = prepare(&args, out)? else {
                return Ok(EXIT_ASSUMPTIONS);
            };
            let (cmp, report, pol, diag) = compare(&model.prims, &model.prefs, grid, args.tol, args.max_iter)?;
            fs::create_dir_all(&args.out)?;
            write_file(&args.out.join("policy.csv"), |w| pol.write_csv(w))?;
            fs::write(args.out.join("diagnostics.json"), to_json_string(&diag)?)?;
            fs::write(args.out.join("asymptotics.json"), to_json_string(&report)?)?;
            let json = to_json_string(&cmp)?;
            fs::write(args.out.join("compare.json"), &json)?;
            out.write_all(json.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::TwoPeriod(args) => {
            let prefs = Preferences::new(args.gamma, args.delta, args.psi)?;
            let spec = TwoPeriodSpec::new(prefs, args.beta, args.gross_return)?;
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(["w", "c", "c_over_w"])?;
            for &w in &args.w {
                let c = solve_two_period(&spec, w)?;
                wtr.write_record([fmt_f64(w), fmt_f64(c), fmt_f64(c / w)])?;
            }
            wtr.flush()?;
            Ok(EXIT_OK)
        }
        Command::Simulate(args) => {
            let Some((model, grid)) = prepare(&args.solve, out)? else {
                return Ok(EXIT_ASSUMPTIONS);
            };
            let (pol, _) = solve(&model.prims, &model.prefs, grid, args.solve.tol, args.solve.max_iter)?;
            let w0 = args.w0.unwrap_or_else(|| model.prims.median_income());
            let panel = simulate_paths(&pol, &model.prims, w0, args.z0, args.horizon, args.paths, args.seed)?;
            fs::create_dir_all(&args.solve.out)?;
            write_file(&args.solve.out.join("panel.csv"), |w| panel.write_csv(w))?;
            writeln!(out, "simulated {} paths of {} periods", args.paths, args.horizon)?;
            Ok(EXIT_OK)
        }
        Command::Spectral(args) => {
            let model = Model::load(&args.model.model)?;
            let k = build_k(&model.prims, args.theta);
            let radius = if k.has_infinite() { f64::INFINITY } else { k.spectral_radius()? };
            let irreducible = k.is_irreducible();
            let summary = SpectralSummary { k, spectral_radius: radius, irreducible };
            out.write_all(to_json_string(&summary)?.as_bytes())?;
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct SpectralSummary {
    #[serde(rename = "K")]
    k: KMatrix,
    #[serde(serialize_with = "ser_f64")]
    spectral_radius: f64,
    irreducible: bool,
}

/// Loads the model and builds the grid. Prints the assumption report and
/// returns `None` when the model is not solvable.
fn prepare(args: &SolveArgs, out: &mut dyn Write) -> Result<Option<(Model, WealthGrid)>> {
    let model = Model::load(&args.model.model)?;
    let report = validate_assumptions(&model.prims, &model.prefs)?;
    if !report.solvable() {
        out.write_all(to_json_string(&report)?.as_bytes())?;
        return Ok(None);
    }
    let default = WealthGrid::default_for(&model.prims);
    let grid = if args.wmin.is_none() && args.wmax.is_none() && args.gridn == default.len() {
        default
    } else {
        WealthGrid::log_spaced(args.wmin.unwrap_or(default.w_min()), args.wmax.unwrap_or(default.w_max()), args.gridn)?
    };
    Ok(Some((model, grid)))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?,
    );
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
