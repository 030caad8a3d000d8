use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annuity_core::simulator::{write_paths_csv, WealthSweepRow};
use annuity_core::sweep::{linspace, sweep_grid, sweep_parameter};
use annuity_core::{
    CohortStats, DerivedConstants, DualSolution, Error as CoreError, Model, ModelParams, SimulationConfig,
    ThresholdScaling,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const SCHEMA_VERSION: u32 = 1;

/// Optimal annuitization with flexible post-retirement labor.
#[derive(Parser, Debug)]
#[command(name = "annuitize", version)]
struct Cli {
    #[command(flatten)]
    model: ModelArgs,

    /// Output directory for CSV/JSON files.
    #[arg(long, global = true, env = "ANNUITIZE_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Parameter preset: base, m1, m2 or m3.
    #[arg(long, global = true, default_value = "base")]
    preset: String,

    /// JSON parameter document replacing the preset.
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    /// Override one parameter, e.g. `--set beta=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Placement of the utility-region seams: leveraged or unleveraged.
    #[arg(long, global = true, default_value = "leveraged")]
    thresholds: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the free boundary and critical wealth.
    Solve {
        /// Print only the critical wealth; fails with exit code 3 in the ruined regime.
        #[arg(long)]
        x_star: bool,
    },
    /// Value function and optimal controls on a wealth grid.
    Value {
        #[arg(long, default_value_t = 100.0)]
        x_from: f64,
        #[arg(long, default_value_t = 3000.0)]
        x_to: f64,
        #[arg(long, default_value_t = 59)]
        steps: usize,
    },
    /// Critical wealth across a parameter range.
    Sweep {
        /// Parameter name or `sharpe`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        /// Also report V at this wealth.
        #[arg(long)]
        value_at: Option<f64>,
        /// Second parameter for a 2-D grid.
        #[arg(long, requires_all = ["from2", "to2"])]
        param2: Option<String>,
        #[arg(long)]
        from2: Option<f64>,
        #[arg(long)]
        to2: Option<f64>,
        #[arg(long, default_value_t = 21)]
        steps2: usize,
    },
    /// Monte-Carlo cohort under the optimal policy.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated initial wealths for a mean-τ sweep.
        #[arg(long, value_delimiter = ',', conflicts_with = "x0")]
        x0_list: Option<Vec<f64>>,
    },
    /// Run every numerical check; exit 1 if any fails.
    Verify {
        #[command(flatten)]
        sim: SimArgs,
        /// Skip the Monte-Carlo budget and duality checks.
        #[arg(long)]
        no_monte_carlo: bool,
        /// Multiply the solved boundary by this factor before checking.
        #[arg(long)]
        perturb_boundary: Option<f64>,
    },
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 1000.0)]
    x0: f64,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0 / 252.0)]
    dt: f64,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value_t = 15.0)]
    forced_stop: f64,
}

impl SimArgs {
    fn config(&self, default_paths: usize) -> Result<SimulationConfig> {
        let cfg = SimulationConfig {
            n_paths: self.paths.unwrap_or(default_paths),
            dt: self.dt,
            horizon: self.horizon,
            forced_stop: self.forced_stop,
            seed: self.seed,
            x0: self.x0,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    schema_version: u32,
    command: &'a str,
    threshold_scaling: ThresholdScaling,
    params: ModelParams,
    derived: DerivedConstants,
    solution: Option<&'a DualSolution>,
    config: Option<SimulationConfig>,
    seed: Option<u64>,
}

impl<'a> RunManifest<'a> {
    fn new(command: &'a str, model: &Model, solution: Option<&'a DualSolution>, config: Option<SimulationConfig>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command,
            threshold_scaling: model.scaling,
            params: model.params,
            derived: model.dc,
            solution,
            config,
            seed: config.map(|c| c.seed),
        }
    }
}

fn build_model(args: &ModelArgs) -> Result<Model> {
    let mut params = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ModelParams>(&text)
                .map_err(|e| CoreError::InvalidParameter(format!("{}: {e}", path.display())))?
        }
        None => ModelParams::preset(&args.preset)?,
    };
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CoreError::InvalidParameter(format!("expected KEY=VALUE, got '{item}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CoreError::InvalidParameter(format!("'{value}' is not a number")))?;
        params.set(key.trim(), value)?;
    }
    let scaling: ThresholdScaling = args.thresholds.parse()?;
    Ok(Model::with_scaling(params, scaling)?)
}

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, file: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            prepare_dir(dir)?;
            fs::write(dir.join(file), text).with_context(|| format!("writing {file}"))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    regime: annuity_core::Regime,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y0: Option<f64>,
    manifest: RunManifest<'a>,
}

fn cmd_solve(model: &Model, out: Option<&Path>, only_x_star: bool) -> Result<()> {
    let sol = DualSolution::new(*model)?;
    if only_x_star {
        println!("{}", sol.critical_wealth()?);
        return Ok(());
    }
    let stop = sol.x_star.is_some();
    let output = SolveOutput {
        regime: sol.regime,
        y_star: stop.then_some(sol.y_star),
        c_coef: stop.then_some(sol.c_coef),
        x_star: sol.x_star,
        y0: sol.y0,
        manifest: RunManifest::new("solve", model, Some(&sol), None),
    };
    let text = serde_json::to_string_pretty(&output)? + "\n";
    print!("{text}");
    if let Some(dir) = out {
        prepare_dir(dir)?;
        fs::write(dir.join("solve.json"), text)?;
    }
    Ok(())
}

fn cmd_value(model: &Model, out: Option<&Path>, lo: f64, hi: f64, steps: usize) -> Result<()> {
    let sol = DualSolution::new(*model)?;
    let mut text = String::from("x,y,c_star,b_star,pi_star,value,stopped\n");
    for x in linspace(lo, hi, steps) {
        let p = sol.policy_at_wealth(x)?;
        text += &format!("{},{},{},{},{},{},{}\n", p.x, p.y, p.c_star, p.b_star, p.pi_star, p.value, p.stopped);
    }
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_json(&dir.join("manifest.json"), &RunManifest::new("value", model, Some(&sol), None))?;
    }
    emit(out, "value.csv", &text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    model: &Model,
    out: Option<&Path>,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    value_at: Option<f64>,
    second: Option<(String, f64, f64, usize)>,
) -> Result<()> {
    let values = linspace(from, to, steps);
    let (file, text) = match second {
        None => {
            let rows = sweep_parameter(model.params, model.scaling, param, &values, value_at)?;
            let mut text = String::from("param_value,x_star,y_star");
            if value_at.is_some() {
                text += ",value_at_x";
            }
            text += "\n";
            for r in rows {
                text += &format!("{},{},{}", r.param_value, opt(r.x_star), opt(r.y_star));
                if value_at.is_some() {
                    text += &format!(",{}", opt(r.value_at_x));
                }
                text += "\n";
            }
            (format!("sweep_{param}.csv"), text)
        }
        Some((p2, a, b, n)) => {
            let values2 = linspace(a, b, n);
            let rows = sweep_grid(model.params, model.scaling, (param, &values), (&p2, &values2))?;
            let mut text = String::from("param_value,param2_value,x_star,y_star\n");
            for r in rows {
                text += &format!("{},{},{},{}\n", r.param_value, r.param2_value, opt(r.x_star), opt(r.y_star));
            }
            (format!("sweep_{param}_{p2}.csv"), text)
        }
    };
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_json(&dir.join("manifest.json"), &RunManifest::new("sweep", model, None, None))?;
    }
    emit(out, &file, &text)
}

#[derive(Serialize)]
struct CohortSummary<'a> {
    schema_version: u32,
    manifest: RunManifest<'a>,
    censoring: &'static str,
    stats: CohortStats,
}

#[derive(Serialize)]
struct WealthSweepSummary<'a> {
    schema_version: u32,
    manifest: RunManifest<'a>,
    rows: Vec<WealthSweepRow>,
}

fn cmd_simulate(model: &Model, out: Option<&Path>, sim: &SimArgs, x0_list: Option<Vec<f64>>) -> Result<()> {
    let sol = DualSolution::new(*model)?;
    sol.critical_wealth()?;
    let cfg = sim.config(1000)?;
    if let Some(list) = x0_list {
        let rows = sol.sweep_initial_wealth(&cfg, &list)?;
        let mut text = String::from("x0,mean_tau,mean_consumption,mean_labor_income,censored_fraction\n");
        for r in &rows {
            text += &format!("{},{},{},{},{}\n", r.x0, r.mean_tau, r.mean_consumption, r.mean_labor_income, r.censored_fraction);
        }
        let summary = WealthSweepSummary {
            schema_version: SCHEMA_VERSION,
            manifest: RunManifest::new("simulate", model, Some(&sol), Some(cfg)),
            rows,
        };
        return match out {
            Some(dir) => {
                prepare_dir(dir)?;
                fs::write(dir.join("initial_wealth.csv"), text)?;
                write_json(&dir.join("summary.json"), &summary)
            }
            None => emit(None, "", &text),
        };
    }
    let (records, stats) = sol.run_cohort(&cfg)?;
    let summary = CohortSummary {
        schema_version: SCHEMA_VERSION,
        manifest: RunManifest::new("simulate", model, Some(&sol), Some(cfg)),
        censoring: "paths still running at forced_stop annuitize there with their current wealth",
        stats,
    };
    match out {
        Some(dir) => {
            prepare_dir(dir)?;
            let file = fs::File::create(dir.join("paths.csv"))?;
            write_paths_csv(&records, std::io::BufWriter::new(file))?;
            write_json(&dir.join("manifest.json"), &summary.manifest)?;
            write_json(&dir.join("summary.json"), &summary)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}

fn cmd_verify(model: &Model, out: Option<&Path>, sim: &SimArgs, no_mc: bool, perturb: Option<f64>) -> Result<bool> {
    let mut sol = DualSolution::new(*model)?;
    if let Some(f) = perturb {
        sol = DualSolution::with_boundary(*model, sol.y_star * f)?;
    }
    let cfg = sim.config(10_000)?;
    let report = sol.verify_all(if no_mc { None } else { Some(&cfg) })?;
    let text = serde_json::to_string_pretty(&report.checks)? + "\n";
    print!("{text}");
    if let Some(dir) = out {
        prepare_dir(dir)?;
        fs::write(dir.join("verify.json"), &text)?;
        write_json(&dir.join("manifest.json"), &RunManifest::new("verify", model, Some(&sol), Some(cfg)))?;
    }
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    let model = build_model(&cli.model)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Solve { x_star } => cmd_solve(&model, out, x_star)?,
        Command::Value { x_from, x_to, steps } => cmd_value(&model, out, x_from, x_to, steps)?,
        Command::Sweep { param, from, to, steps, value_at, param2, from2, to2, steps2 } => {
            let second = match param2 {
                Some(p) => Some((
                    p,
                    from2.ok_or_else(|| anyhow!("--from2 is required"))?,
                    to2.ok_or_else(|| anyhow!("--to2 is required"))?,
                    steps2,
                )),
                None => None,
            };
            if steps == 0 {
                bail!(CoreError::InvalidParameter("steps must be positive".into()));
            }
            cmd_sweep(&model, out, &param, from, to, steps, value_at, second)?
        }
        Command::Simulate { sim, x0_list } => cmd_simulate(&model, out, &sim, x0_list)?,
        Command::Verify { sim, no_monte_carlo, perturb_boundary } => {
            return cmd_verify(&model, out, &sim, no_monte_carlo, perturb_boundary)
        }
    }
    Ok(true)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::InvalidParameter(_) | CoreError::OutOfRange(_) | CoreError::Precondition(_)) => 2,
        Some(CoreError::Regime(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
