//! `ltrust`: command-line front end for the leverage/trust model.
//!
//! Every subcommand reads an optional `--config` key-value file, applies
//! flag overrides, writes its outputs to `--out` and records the fully
//! resolved configuration in `run_config.txt`, which can be passed back via
//! `--config` to reproduce the run.

mod commands;
mod error;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leverage_trust::io::KvConfig;
use serde_json::{json, Map, Value};

use commands::{Outcome, Output};
use error::CliError;
use settings::{Overrides, Resolver};

pub const RUN_CONFIG: &str = "run_config.txt";
pub const METADATA: &str = "metadata.json";

#[derive(Parser)]
#[command(name = "ltrust", version, about = "Assets, leverage and trust dynamics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default ltrust-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Regime preset supplying defaults for a, g and r: regular, crisis or stagnation.
    #[arg(long)]
    preset: Option<String>,
    /// Non-dimensional debt-adjustment rate.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Non-dimensional EBITA/assets ratio.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    /// Non-dimensional interest rate.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    /// Trust adjustment rate.
    #[arg(long)]
    k: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("params", "preset", &self.preset)
            .set("params", "a", &self.a)
            .set("params", "g", &self.g)
            .set("params", "r", &self.r)
            .set("params", "k", &self.k);
    }
}

#[derive(Args)]
struct StateArgs {
    /// Initial assets.
    #[arg(long)]
    assets: Option<f64>,
    /// Initial leverage.
    #[arg(long)]
    leverage: Option<f64>,
    /// Initial trust.
    #[arg(long)]
    trust: Option<f64>,
}

impl StateArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("state", "A", &self.assets)
            .set("state", "L", &self.leverage)
            .set("state", "T", &self.trust);
    }
}

#[derive(Args)]
struct IntegratorArgs {
    /// euler or adaptive-rk.
    #[arg(long)]
    method: Option<String>,
    /// Euler step, or the initial adaptive step.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    max_tau: Option<f64>,
    #[arg(long)]
    convergence_eps: Option<f64>,
    #[arg(long)]
    guard_eps: Option<f64>,
    /// Record every n-th step.
    #[arg(long)]
    record_stride: Option<usize>,
}

impl IntegratorArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("integrator", "method", &self.method)
            .set("integrator", "step", &self.step)
            .set("integrator", "rel_tol", &self.rel_tol)
            .set("integrator", "abs_tol", &self.abs_tol)
            .set("integrator", "max_tau", &self.max_tau)
            .set("integrator", "convergence_eps", &self.convergence_eps)
            .set("integrator", "guard_eps", &self.guard_eps)
            .set("integrator", "record_stride", &self.record_stride);
    }
}

#[derive(Args)]
struct ModelConstantArgs {
    /// Dimensional debt-adjustment rate.
    #[arg(long = "model-a")]
    model_a: Option<f64>,
    /// Dimensional trust adjustment rate.
    #[arg(long = "model-k")]
    model_k: Option<f64>,
    /// Time step of one observation.
    #[arg(long)]
    dt: Option<f64>,
}

impl ModelConstantArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("model", "a", &self.model_a)
            .set("model", "k", &self.model_k)
            .set("model", "dt", &self.dt);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// ROA field and basin map over the (L, T) square.
    Phase {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid nodes along both axes.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Fixed points, Jacobians, eigenvalues and classifications.
    Stability {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of diagonal points to classify.
        #[arg(long)]
        diagonal_points: Option<usize>,
    },
    /// Analytic leverage/trust curve with an ODE cross-check.
    ClosedForm {
        #[command(flatten)]
        model: ModelArgs,
        /// Trust at the seed point.
        #[arg(long)]
        t0: Option<f64>,
        /// Leverage at the seed point.
        #[arg(long)]
        l0: Option<f64>,
        /// primary or by-parts.
        #[arg(long)]
        form: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        /// Skip the ODE cross-check.
        #[arg(long)]
        no_compare: bool,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Piecewise-constant regime schedule or intervention-timing sweep.
    Scenario {
        /// sweep or schedule.
        #[arg(long)]
        mode: Option<String>,
        /// Segments as 'tau:g:r;tau:g:r;...' (schedule mode).
        #[arg(long, allow_hyphen_values = true)]
        segments: Option<String>,
        /// Comma-separated intervention times (sweep mode).
        #[arg(long)]
        intervention_times: Option<String>,
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Markov-switching calibration to a date,roe,rate series.
    Calibrate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[command(flatten)]
        constants: ModelConstantArgs,
    },
    /// Synthetic date,roe,rate series from the switching model.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        c1: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        c2: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[command(flatten)]
        constants: ModelConstantArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Phase { .. } => "phase",
            Command::Stability { .. } => "stability",
            Command::ClosedForm { .. } => "closed-form",
            Command::Scenario { .. } => "scenario",
            Command::Calibrate { .. } => "calibrate",
            Command::Synth { .. } => "synth",
        }
    }

    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        match self {
            Command::Simulate {
                model,
                state,
                integrator,
            } => {
                model.apply(&mut o);
                state.apply(&mut o);
                integrator.apply(&mut o);
            }
            Command::Phase {
                model,
                n,
                margin,
                integrator,
            } => {
                model.apply(&mut o);
                o.set("grid", "n_leverage", n)
                    .set("grid", "n_trust", n)
                    .set("grid", "margin", margin);
                integrator.apply(&mut o);
            }
            Command::Stability { model, diagonal_points } => {
                model.apply(&mut o);
                o.set("stability", "diagonal_points", diagonal_points);
            }
            Command::ClosedForm {
                model,
                t0,
                l0,
                form,
                samples,
                no_compare,
                integrator,
            } => {
                model.apply(&mut o);
                o.set("curve", "T0", t0)
                    .set("curve", "L0", l0)
                    .set("curve", "form", form)
                    .set("curve", "samples", samples)
                    .set("curve", "compare", &no_compare.then_some(false));
                integrator.apply(&mut o);
            }
            Command::Scenario {
                mode,
                segments,
                intervention_times,
                state,
                integrator,
            } => {
                o.set("scenario", "mode", mode)
                    .set("schedule", "segments", segments)
                    .set("sweep", "intervention_times", intervention_times);
                state.apply(&mut o);
                integrator.apply(&mut o);
            }
            Command::Calibrate {
                input,
                seed,
                iterations,
                burn_in,
                constants,
            } => {
                o.set("data", "input", &input.as_ref().map(|p| p.display()))
                    .set("chain", "seed", seed)
                    .set("chain", "iterations", iterations)
                    .set("chain", "burn_in", burn_in);
                constants.apply(&mut o);
            }
            Command::Synth {
                n,
                seed,
                c1,
                c2,
                sigma2,
                constants,
            } => {
                o.set("synth", "n", n)
                    .set("synth", "seed", seed)
                    .set("synth", "c1", c1)
                    .set("synth", "c2", c2)
                    .set("synth", "sigma2", sigma2);
                constants.apply(&mut o);
            }
        }
        o
    }
}

fn config_json(cfg: &KvConfig) -> Value {
    let mut out = Map::new();
    for (s, k, v) in cfg.entries() {
        let section = if s.is_empty() { "global" } else { s };
        out.entry(section)
            .or_insert_with(|| json!({}))
            .as_object_mut()
            .expect("sections are objects")
            .insert(k.to_string(), json!(v));
    }
    Value::Object(out)
}

fn run(command: &Command, common: &Common) -> Result<Value, CliError> {
    let name = command.name();
    let mut flags = command.overrides();
    flags.set("output", "dir", &common.out.as_ref().map(|p| p.display()));
    let mut r = Resolver::load(common.config.as_deref(), &flags.0)?;
    let stated: String = r.value("", "command", name.to_string())?;
    if stated != name {
        return Err(CliError::config(format!("config file is for '{stated}', not '{name}'")));
    }
    let out_dir: PathBuf = r
        .value("output", "dir", PathBuf::from("ltrust-out").display().to_string())?
        .into();

    // Resolve everything before any work so config errors surface first.
    enum Job {
        Simulate(commands::Simulate),
        Phase(commands::Phase),
        Stability(commands::Stability),
        ClosedForm(commands::ClosedForm),
        Scenario(commands::Scenario),
        Calibrate(commands::Calibrate),
        Synth(commands::Synth),
    }
    let job = match command {
        Command::Simulate { .. } => Job::Simulate(commands::resolve_simulate(&mut r)?),
        Command::Phase { .. } => Job::Phase(commands::resolve_phase(&mut r)?),
        Command::Stability { .. } => Job::Stability(commands::resolve_stability(&mut r)?),
        Command::ClosedForm { .. } => Job::ClosedForm(commands::resolve_closed_form(&mut r)?),
        Command::Scenario { .. } => Job::Scenario(commands::resolve_scenario(&mut r)?),
        Command::Calibrate { .. } => Job::Calibrate(commands::resolve_calibrate(&mut r)?),
        Command::Synth { .. } => Job::Synth(commands::resolve_synth(&mut r)?),
    };
    let resolved = r.finish()?;

    let mut out = Output::new(&out_dir)?;
    let outcome: Outcome = match &job {
        Job::Simulate(s) => commands::simulate(s, &mut out)?,
        Job::Phase(s) => commands::phase(s, &mut out)?,
        Job::Stability(s) => commands::stability(s, &mut out)?,
        Job::ClosedForm(s) => commands::closed_form(s, &mut out)?,
        Job::Scenario(s) => commands::scenario(s, &mut out)?,
        Job::Calibrate(s) => commands::calibrate(s, &mut out)?,
        Job::Synth(s) => commands::synth(s, &mut out)?,
    };
    out.write(RUN_CONFIG, |w| {
        use std::io::Write;
        writeln!(
            w,
            "# ltrust {}: re-run with `ltrust {name} --config {RUN_CONFIG}`",
            env!("CARGO_PKG_VERSION")
        )?;
        write!(w, "{resolved}")
    })?;
    let mut files = out.files();
    files.push(METADATA.to_string());
    let metadata = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": outcome.seed,
        "run_config": RUN_CONFIG,
        "config": config_json(&resolved),
        "module_chosen": outcome.module_chosen,
        "outputs": files,
        "summary": outcome.summary,
    });
    write_metadata(&out_dir, &metadata)?;
    Ok(outcome.summary)
}

fn write_metadata(dir: &Path, value: &Value) -> Result<(), CliError> {
    let path = dir.join(METADATA);
    leverage_trust::io::write_json(&path, value).map_err(|e| CliError::io(&path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.kind().to_string();
            eprintln!("{}", CliError::config(format!("command line: {msg}")).line());
            return ExitCode::from(2);
        }
    };
    match run(&cli.command, &cli.common) {
        Ok(summary) => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
            // a closed stdout (e.g. piped into head) is not a failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
