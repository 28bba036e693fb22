use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frictorq::control_floating::ConeConstraints;
use frictorq::model::{load_model, RobotModel};
use frictorq::sim::{
    self, compare_runs, condition_report, min_median_max, run_scenario_with_model, sweep_noise, ControllerKind,
    RunLog, RunSummary, ScenarioConfig,
};
use frictorq::Error;

const THREADS_ENV: &str = "FRICTORQ_THREADS";

#[derive(Parser)]
#[command(name = "frictorq", version, about = "Friction-exploiting torque control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes run.csv, summary.json and plot.gp.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario under both controllers; writes baseline.csv, ef.csv,
    /// comparison.json and plot.gp.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both controllers at each velocity noise level; writes sweep.csv.
    SweepNoise {
        config: PathBuf,
        /// Comma-separated σ_v values in rad/s.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// cond(M_s) and cond(M̄_s) at random joint configurations.
    ConditionReport {
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Joints are drawn uniformly from [-range, range] rad.
        #[arg(long, default_value_t = 1.0)]
        range: f64,
        /// Directory for condition.csv; the CSV goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and check a model file.
    ValidateModel { model: PathBuf },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let root = e.root();
        let code = match root {
            Error::QpInfeasible { .. } => 4,
            Error::Divergence { .. } => 3,
            _ if matches!(e, Error::AtTime { .. }) => 3,
            _ => 2,
        };
        let mut message = e.to_string();
        if let Error::QpInfeasible { constraint, .. } = root {
            let _ = write!(message, " ({})", ConeConstraints::describe_row(*constraint));
        }
        Failure { code, message }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Compare { config, out } => cmd_compare(&config, out),
        Command::SweepNoise { config, sigmas, out } => cmd_sweep_noise(&config, &sigmas, out),
        Command::ConditionReport {
            model,
            samples,
            seed,
            range,
            out,
        } => cmd_condition_report(&model, samples, seed, range, out),
        Command::ValidateModel { model } => cmd_validate_model(&model),
    }
}

fn load(config: &Path) -> CliResult<(ScenarioConfig, RobotModel)> {
    let cfg = ScenarioConfig::load(config)?;
    let model = load_model(&cfg.model)?;
    cfg.validate(&model)?;
    Ok((cfg, model))
}

fn out_dir(out: Option<PathBuf>, cfg: &ScenarioConfig) -> CliResult<PathBuf> {
    let dir = out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| input_error("no output directory: pass --out or set `output` in the config"))?;
    std::fs::create_dir_all(&dir).map_err(|e| input_error(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> CliResult {
    let (cfg, model) = load(config)?;
    let dir = out_dir(out, &cfg)?;
    let log = run_scenario_with_model(&cfg, &model)?;
    let summary = RunSummary::new(&cfg, &model, &log);
    log.write_csv(dir.join("run.csv"))?;
    write(&dir.join("summary.json"), &(summary.to_json() + "\n"))?;
    write(&dir.join("plot.gp"), &plot_script(&model, &[("run.csv", cfg.controller.name())]))?;
    let column = sim::primary_error_column(&model);
    let stat = log.metrics();
    let primary = if model.is_floating() { stat.h_lin_err_norm } else { stat.s_err_norm };
    println!(
        "{} {}: {} samples, {column} rms {:.4e} max {:.4e}",
        summary.model,
        cfg.controller.name(),
        log.len(),
        primary.rms,
        primary.max
    );
    Ok(())
}

fn cmd_compare(config: &Path, out: Option<PathBuf>) -> CliResult {
    let (cfg, model) = load(config)?;
    let dir = out_dir(out, &cfg)?;
    let mut logs: Vec<RunLog> = Vec::new();
    for controller in [ControllerKind::Baseline, ControllerKind::Ef] {
        let mut c = cfg.clone();
        c.controller = controller;
        let log = run_scenario_with_model(&c, &model)?;
        log.write_csv(dir.join(format!("{}.csv", controller.name())))?;
        logs.push(log);
    }
    let report = compare_runs(&logs[1], &logs[0])?;
    let json = serde_json::json!({
        "baseline": report.b,
        "ef": report.a,
        "ratio_ef_over_baseline": report.ratio,
    });
    write(
        &dir.join("comparison.json"),
        &(serde_json::to_string_pretty(&json).expect("report serializes") + "\n"),
    )?;
    write(
        &dir.join("plot.gp"),
        &plot_script(&model, &[("baseline.csv", "baseline"), ("ef.csv", "ef")]),
    )?;
    let (b, e) = if model.is_floating() {
        (report.b.h_lin_err_norm, report.a.h_lin_err_norm)
    } else {
        (report.b.s_err_norm, report.a.s_err_norm)
    };
    println!(
        "{} rms: baseline {:.4e}, ef {:.4e}, ratio {:.3}",
        sim::primary_error_column(&model),
        b.rms,
        e.rms,
        if b.rms == e.rms { 1.0 } else { e.rms / b.rms }
    );
    Ok(())
}

fn threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(input_error(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

fn cmd_sweep_noise(config: &Path, sigmas: &[f64], out: Option<PathBuf>) -> CliResult {
    let (cfg, model) = load(config)?;
    let dir = out_dir(out, &cfg)?;
    let rows = sweep_noise(&cfg, &model, sigmas, threads()?)?;
    println!("velocity noise model: {}", sim::NOISE_MODEL_LABEL);
    let mut csv = String::from("sigma,controller,seed,rms_err,max_err\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.16e},{},{},{:.16e},{:.16e}",
            r.sigma,
            r.controller.name(),
            r.seed,
            r.rms_err,
            r.max_err
        );
        println!("sigma {:<6} {:<8} rms {:.4e} max {:.4e}", r.sigma, r.controller.name(), r.rms_err, r.max_err);
    }
    write(&dir.join("sweep.csv"), &csv)
}

fn cmd_condition_report(model: &Path, samples: usize, seed: u64, range: f64, out: Option<PathBuf>) -> CliResult {
    if samples == 0 {
        return Err(input_error("--samples must be at least 1"));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(input_error("--range must be a positive number"));
    }
    let model = load_model(model)?;
    let rows = condition_report(&model, samples, seed, range)?;
    let mut csv = String::from("config_index,cond_Ms,cond_Ms_bar,ratio\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.16e}",
            r.config_index, r.cond_ms, r.cond_ms_bar, r.ratio
        );
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let (lo, med, hi) = min_median_max(&ratios).expect("at least one sample");
    let line = format!("reduction factor cond(M_s)/cond(M_s_bar): min {lo:.4} median {med:.4} max {hi:.4}");
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| input_error(format!("cannot create {}: {e}", dir.display())))?;
            write(&dir.join("condition.csv"), &csv)?;
            println!("{line}");
        }
        None => {
            print!("{csv}");
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn cmd_validate_model(path: &Path) -> CliResult {
    let model = load_model(path)?;
    let contacts = model.contacts().len();
    println!(
        "ok: {} joints, {} base, {:.4} kg, {contacts} contacts",
        model.dof(),
        if model.is_floating() { "floating" } else { "fixed" },
        model.total_mass(),
    );
    Ok(())
}

/// Gnuplot script plotting error norms and motor torques from CSV logs in
/// the same directory.
fn plot_script(model: &RobotModel, runs: &[(&str, &str)]) -> String {
    let mut errors: Vec<(&str, &str)> = vec![("s_err_norm", "|s error| (rad)")];
    if model.is_floating() {
        errors.push(("h_lin_err_norm", "|H_lin error| (kg m/s)"));
        errors.push(("com_err_norm", "|CoM error| (m)"));
    }
    let panels = errors.len() + 1;
    let mut gp = String::new();
    let _ = writeln!(gp, "# gnuplot -p plot.gp");
    let _ = writeln!(gp, "set datafile separator ','");
    let _ = writeln!(gp, "set key autotitle columnhead");
    let _ = writeln!(gp, "set grid");
    let _ = writeln!(gp, "set xlabel 't (s)'");
    let _ = writeln!(gp, "set multiplot layout {panels},1");
    for (column, label) in &errors {
        let _ = writeln!(gp, "set ylabel '{label}'");
        let curves: Vec<String> = runs
            .iter()
            .map(|(file, title)| format!("'{file}' using 't':'{column}' with lines title '{title}'"))
            .collect();
        let _ = writeln!(gp, "plot {}", curves.join(", \\\n     "));
    }
    let _ = writeln!(gp, "set ylabel 'motor torque (N m)'");
    let (file, title) = runs[runs.len() - 1];
    let curves: Vec<String> = (0..model.dof())
        .map(|i| format!("'{file}' using 't':'tau_m_{i}' with lines title '{title} {}'", model.joints()[i].name))
        .collect();
    let _ = writeln!(gp, "plot {}", curves.join(", \\\n     "));
    let _ = writeln!(gp, "unset multiplot");
    gp
}
