//! One resolver and one runner per subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use leverage_trust::calibration::{
    default_rate_series, encode_states, generate_synthetic, gibbs_run, posterior_summary, write_draws_csv,
    write_summary_csv, ChainConfig, ModelConstants, MsmParams, State,
};
use leverage_trust::closed_form::{compare_with_ode, write_curve_csv, ClosedFormTrajectory, Form, MIN_TRUST};
use leverage_trust::io::{fmt_f64, load_timeseries, write_timeseries};
use leverage_trust::phase_portrait::{
    basin_map, roa_field, write_basin_csv, write_roa_field_csv, BasinCounts, GridSpec, Regime,
};
use leverage_trust::scenario::{
    default_initial_state, intervention_sweep, run_schedule, write_diagnostics_csv, write_sweep_csv, InterventionSweep,
    RegimeSegment, ScenarioResult,
};
use leverage_trust::stability::fixed_points;
use leverage_trust::trajectory::integrate;
use leverage_trust::{EconState, IntegratorConfig, Method, Params};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::settings::Resolver;

/// What a finished run reports back for the metadata sidecar.
pub struct Outcome {
    pub summary: Value,
    pub seed: Option<u64>,
    /// Values picked by this tool where the model leaves them open.
    pub module_chosen: Vec<&'static str>,
}

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Creates `name` in the output directory and hands a writer to `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let io = |e| CliError::io(&path, e);
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    pub fn files(self) -> Vec<String> {
        self.files
    }
}

fn parse_with<T>(
    section: &str,
    key: &str,
    text: &str,
    f: impl FnOnce(&str) -> Result<T, String>,
) -> Result<T, CliError> {
    f(text).map_err(|e| CliError::config(format!("[{section}] {key}: {e}")))
}

pub fn params(r: &mut Resolver) -> Result<Params, CliError> {
    let preset: Option<Regime> = r.optional("params", "preset")?;
    let base = preset.unwrap_or(Regime::Regular).params();
    let a = r.value("params", "a", base.a_tilde)?;
    let g = r.value("params", "g", base.g_tilde)?;
    let rate = r.value("params", "r", base.r_tilde)?;
    let k = r.value("params", "k", base.k)?;
    Ok(Params::new(a, g, rate, k)?)
}

pub fn integrator(r: &mut Resolver) -> Result<IntegratorConfig, CliError> {
    let d = IntegratorConfig::default();
    let method: String = r.value("integrator", "method", "adaptive-rk".to_string())?;
    let method: Method = parse_with("integrator", "method", &method, str::parse)?;
    let cfg = IntegratorConfig {
        method,
        step: r.value("integrator", "step", d.step)?,
        rel_tol: r.value("integrator", "rel_tol", d.rel_tol)?,
        abs_tol: r.value("integrator", "abs_tol", d.abs_tol)?,
        max_tau: r.value("integrator", "max_tau", d.max_tau)?,
        convergence_eps: r.value("integrator", "convergence_eps", d.convergence_eps)?,
        guard_eps: r.value("integrator", "guard_eps", d.guard_eps)?,
        record_stride: r.value("integrator", "record_stride", d.record_stride)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn state(r: &mut Resolver, default: EconState) -> Result<EconState, CliError> {
    let assets = r.value("state", "A", default.assets)?;
    let leverage = r.value("state", "L", default.leverage)?;
    let trust = r.value("state", "T", default.trust)?;
    Ok(EconState::new(assets, leverage, trust)?)
}

fn params_json(p: &Params) -> Result<Value, CliError> {
    let d = p.derived()?;
    Ok(json!({"a": p.a_tilde, "g": p.g_tilde, "r": p.r_tilde, "k": p.k, "beta": d.beta, "L0": d.l0}))
}

pub struct Simulate {
    params: Params,
    state: EconState,
    integrator: IntegratorConfig,
}

pub fn resolve_simulate(r: &mut Resolver) -> Result<Simulate, CliError> {
    Ok(Simulate {
        params: params(r)?,
        state: state(r, EconState::new(1.0, 0.2, 0.4)?)?,
        integrator: integrator(r)?,
    })
}

pub fn simulate(s: &Simulate, out: &mut Output) -> Result<Outcome, CliError> {
    let rec = integrate(&s.state, &s.params, &s.integrator)?;
    out.write("trajectory.csv", |w| rec.write_csv(w))?;
    let mut summary = rec.terminal_json();
    summary["params"] = params_json(&s.params)?;
    summary["stationary_rA"] = json!(rec.stationary_roa());
    Ok(Outcome {
        summary,
        seed: None,
        module_chosen: Vec::new(),
    })
}

pub struct Phase {
    params: Params,
    grid: GridSpec,
    integrator: IntegratorConfig,
}

pub fn resolve_phase(r: &mut Resolver) -> Result<Phase, CliError> {
    let params = params(r)?;
    let d = GridSpec::default();
    let grid = GridSpec {
        n_leverage: r.value("grid", "n_leverage", d.n_leverage)?,
        n_trust: r.value("grid", "n_trust", d.n_trust)?,
        margin: r.value("grid", "margin", d.margin)?,
    };
    grid.validate()?;
    Ok(Phase {
        params,
        grid,
        integrator: integrator(r)?,
    })
}

fn counts_json(c: &BasinCounts) -> Value {
    json!({"diagonal": c.diagonal, "point": c.point, "exit": c.exit, "low_confidence": c.low_confidence})
}

pub fn phase(s: &Phase, out: &mut Output) -> Result<Outcome, CliError> {
    let field = roa_field(&s.params, &s.grid)?;
    out.write("roa_field.csv", |w| write_roa_field_csv(&field, w))?;
    let map = basin_map(&s.params, &s.grid, &s.integrator)?;
    out.write("basin_map.csv", |w| write_basin_csv(&map, w))?;
    let summary = json!({
        "params": params_json(&s.params)?,
        "grid": {"n_leverage": s.grid.n_leverage, "n_trust": s.grid.n_trust, "margin": s.grid.margin},
        "basins": {
            "all": counts_json(&BasinCounts::tally(&map, |_, _| true)),
            "trust_above_leverage": counts_json(&BasinCounts::tally(&map, |l, t| t > l)),
            "trust_below_leverage": counts_json(&BasinCounts::tally(&map, |l, t| t < l)),
        },
    });
    Ok(Outcome {
        summary,
        seed: None,
        module_chosen: vec![
            "nodes within grid.margin of T = 1 or L = 1 are masked",
            "singular or horizon stops are labelled by the nearest attractor with low confidence",
        ],
    })
}

pub struct Stability {
    params: Params,
    diagonal_points: usize,
}

pub fn resolve_stability(r: &mut Resolver) -> Result<Stability, CliError> {
    let params = params(r)?;
    let diagonal_points = r.value("stability", "diagonal_points", 11usize)?;
    if diagonal_points == 0 {
        return Err(CliError::config("[stability] diagonal_points must be >= 1"));
    }
    Ok(Stability {
        params,
        diagonal_points,
    })
}

pub fn stability(s: &Stability, out: &mut Output) -> Result<Outcome, CliError> {
    let n = s.diagonal_points;
    let samples: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let set = fixed_points(&s.params, &samples)?;
    let summary = json!({
        "params": params_json(&s.params)?,
        "fixed_points": set,
    });
    out.json("stability.json", &summary)?;
    Ok(Outcome {
        summary,
        seed: None,
        module_chosen: vec!["(1, L0) is classified by the decay of a 1e-3 trust perturbation"],
    })
}

pub struct ClosedForm {
    params: Params,
    trust0: f64,
    leverage0: f64,
    form: Form,
    t_min: f64,
    t_max: f64,
    samples: usize,
    compare: bool,
    integrator: IntegratorConfig,
}

pub fn resolve_closed_form(r: &mut Resolver) -> Result<ClosedForm, CliError> {
    let params = params(r)?;
    let form: String = r.value("curve", "form", "primary".to_string())?;
    let form = parse_with("curve", "form", &form, |f| match f {
        "primary" => Ok(Form::Primary),
        "by-parts" => Ok(Form::IntegratedByParts),
        other => Err(format!("unknown form '{other}' (expected primary or by-parts)")),
    })?;
    let s = ClosedForm {
        params,
        trust0: r.value("curve", "T0", 0.4)?,
        leverage0: r.value("curve", "L0", 0.2)?,
        form,
        t_min: r.value("curve", "t_min", 0.01)?,
        t_max: r.value("curve", "t_max", 0.99)?,
        samples: r.value("curve", "samples", 197usize)?,
        compare: r.value("curve", "compare", true)?,
        integrator: integrator(r)?,
    };
    if !(MIN_TRUST <= s.t_min && s.t_min < s.t_max && s.t_max < 1.0) || s.samples < 2 {
        return Err(CliError::config(format!(
            "need {MIN_TRUST} <= t_min < t_max < 1 and samples >= 2 (got {}, {}, {})",
            s.t_min, s.t_max, s.samples
        )));
    }
    Ok(s)
}

pub fn closed_form(s: &ClosedForm, out: &mut Output) -> Result<Outcome, CliError> {
    let curve = ClosedFormTrajectory::through(s.trust0, s.leverage0, s.params, s.form)?;
    let n = s.samples;
    let grid: Vec<f64> = (0..n)
        .map(|i| s.t_min + (s.t_max - s.t_min) * i as f64 / (n - 1) as f64)
        .collect();
    let points = curve.sample(&grid)?;
    out.write("curve.csv", |w| write_curve_csv(&points, w))?;
    let mut summary = json!({
        "params": params_json(&s.params)?,
        "seed_point": {"T": s.trust0, "L": s.leverage0},
        "form": s.form,
        "integration_constant": curve.k,
    });
    if s.compare {
        let cmp = compare_with_ode(s.trust0, s.leverage0, &s.params, &s.integrator, 1000)?;
        out.write("ode.csv", |w| cmp.record.write_csv(w))?;
        summary["ode_check"] = json!({
            "max_abs_error": cmp.max_abs_error,
            "trust_range": cmp.trust_range,
            "points_compared": cmp.points_compared,
            "terminal": cmp.record.terminal,
        });
    }
    Ok(Outcome {
        summary,
        seed: None,
        module_chosen: Vec::new(),
    })
}

fn pair(section: &str, key: &str, text: &str) -> Result<(f64, f64), CliError> {
    parse_with(section, key, text, |t| {
        let (g, r) = t.split_once(':').ok_or("expected 'g:r'")?;
        Ok((
            g.trim().parse().map_err(|e| format!("{e}"))?,
            r.trim().parse().map_err(|e| format!("{e}"))?,
        ))
    })
}

fn fmt_pair((g, r): (f64, f64)) -> String {
    format!("{g}:{r}")
}

fn segments(text: &str) -> Result<Vec<RegimeSegment>, CliError> {
    parse_with("schedule", "segments", text, |t| {
        t.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|seg| {
                let parts: Vec<f64> = seg
                    .split(':')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{seg}': {e}")))
                    .collect::<Result<_, _>>()?;
                match parts[..] {
                    [tau, g, r] => Ok(RegimeSegment::new(tau, g, r)),
                    _ => Err(format!("'{seg}': expected 'tau:g:r'")),
                }
            })
            .collect()
    })
}

pub enum ScenarioMode {
    Sweep(InterventionSweep),
    Schedule { a_tilde: f64, segments: Vec<RegimeSegment> },
}

pub struct Scenario {
    mode: ScenarioMode,
    state: EconState,
    integrator: IntegratorConfig,
}

pub fn resolve_scenario(r: &mut Resolver) -> Result<Scenario, CliError> {
    let d = InterventionSweep::default();
    let mode: String = r.value("scenario", "mode", "sweep".to_string())?;
    let a_tilde = r.value("scenario", "a", d.a_tilde)?;
    let mode = match mode.as_str() {
        "sweep" => {
            let pre: String = r.value("sweep", "pre_crisis", fmt_pair(d.pre_crisis))?;
            let crisis: String = r.value("sweep", "crisis", fmt_pair(d.crisis))?;
            let post: String = r.value("sweep", "intervention", fmt_pair(d.intervention))?;
            ScenarioMode::Sweep(InterventionSweep {
                a_tilde,
                pre_crisis: pair("sweep", "pre_crisis", &pre)?,
                crisis: pair("sweep", "crisis", &crisis)?,
                intervention: pair("sweep", "intervention", &post)?,
                crisis_start: r.value("sweep", "crisis_start", d.crisis_start)?,
                intervention_times: r.list("sweep", "intervention_times", &d.intervention_times)?,
                horizon: r.value("sweep", "horizon", d.horizon)?,
            })
        }
        "schedule" => {
            let default = d
                .schedule(12.0)
                .iter()
                .map(|s| format!("{}:{}:{}", s.tau_start, s.g_tilde, s.r_tilde))
                .collect::<Vec<_>>()
                .join(";");
            let text: String = r.value("schedule", "segments", default)?;
            ScenarioMode::Schedule {
                a_tilde,
                segments: segments(&text)?,
            }
        }
        other => {
            return Err(CliError::config(format!(
                "[scenario] mode: unknown mode '{other}' (expected sweep or schedule)"
            )))
        }
    };
    Ok(Scenario {
        mode,
        state: state(r, default_initial_state())?,
        integrator: integrator(r)?,
    })
}

fn run_json(run: &ScenarioResult) -> Value {
    json!({
        "terminal": run.path.terminal,
        "stationary_rA": run.stationary_roa,
        "negative_roa_duration": run.negative_roa_duration(),
        "switches": run.switches,
    })
}

fn write_run(out: &mut Output, suffix: &str, run: &ScenarioResult) -> Result<(), CliError> {
    out.write(&format!("path{suffix}.csv"), |w| run.write_csv(w))?;
    out.write(&format!("growth_diagnostics{suffix}.csv"), |w| {
        write_diagnostics_csv(&run.diagnostics, w)
    })
}

pub fn scenario(s: &Scenario, out: &mut Output) -> Result<Outcome, CliError> {
    match &s.mode {
        ScenarioMode::Sweep(sweep) => {
            let res = intervention_sweep(&s.state, sweep, &s.integrator)?;
            out.write("sweep.csv", |w| write_sweep_csv(&res.rows, w))?;
            for (i, run) in res.runs.iter().enumerate() {
                write_run(out, &format!("_{i}"), run)?;
            }
            Ok(Outcome {
                summary: json!({
                    "mode": "sweep",
                    "rows": res.rows,
                    "runs": res.runs.iter().map(run_json).collect::<Vec<_>>(),
                }),
                seed: None,
                module_chosen: vec![
                    "ln A is compared across interventions at sweep.horizon (default 50)",
                    "default initial state (A, L, T) = (1, 0, 0.26) and crisis start 5",
                ],
            })
        }
        ScenarioMode::Schedule { a_tilde, segments } => {
            let run = run_schedule(&s.state, *a_tilde, segments, &s.integrator)?;
            write_run(out, "", &run)?;
            let mut summary = run_json(&run);
            summary["mode"] = json!("schedule");
            Ok(Outcome {
                summary,
                seed: None,
                module_chosen: Vec::new(),
            })
        }
    }
}

fn constants(r: &mut Resolver) -> Result<ModelConstants, CliError> {
    let d = ModelConstants::default();
    Ok(ModelConstants {
        a: r.value("model", "a", d.a)?,
        k: r.value("model", "k", d.k)?,
        dt: r.value("model", "dt", d.dt)?,
    })
}

pub struct Calibrate {
    input: PathBuf,
    seed: u64,
    chain: ChainConfig,
}

pub fn resolve_calibrate(r: &mut Resolver) -> Result<Calibrate, CliError> {
    let input: PathBuf = r.required("data", "input")?;
    let seed = r.required("chain", "seed")?;
    let d = ChainConfig::default();
    let chain = ChainConfig {
        iterations: r.value("chain", "iterations", 5000usize)?,
        burn_in: r.value("chain", "burn_in", 2500usize)?,
        adapt_batch: r.value("chain", "adapt_batch", d.adapt_batch)?,
        max_init_retries: r.value("chain", "max_init_retries", d.max_init_retries)?,
        constants: constants(r)?,
        ..d
    };
    Ok(Calibrate { input, seed, chain })
}

pub fn calibrate(s: &Calibrate, out: &mut Output) -> Result<Outcome, CliError> {
    let series = load_timeseries(&s.input)?;
    s.chain.validate(series.len())?;
    let draws = gibbs_run(&series, &s.chain, s.seed)?;
    let post = posterior_summary(&draws)?;
    out.write("draws.csv", |w| write_draws_csv(&draws, w))?;
    out.write("posterior_summary.csv", |w| write_summary_csv(&post, w))?;
    let parameters: serde_json::Map<String, Value> = post
        .parameters
        .iter()
        .map(|(name, b)| (name.clone(), json!(b)))
        .collect();
    let summary = json!({
        "seed": s.seed,
        "observations": series.len(),
        "retained_draws": post.retained,
        "acceptance": draws.acceptance,
        "final_scales": draws.final_scales,
        "parameters": parameters,
    });
    Ok(Outcome {
        summary,
        seed: Some(s.seed),
        module_chosen: vec![
            "initial values c1 = 0.05, c2 = -0.05, lambda = mu = 1, L1 = 0.25, T1 = 0.35, sigma2 = sample variance",
            "initial regimes: state 2 where ROE is below its mean",
            "proposal scales halve or double after each 25-iteration burn-in batch outside 20-40% acceptance",
        ],
    })
}

pub struct Synth {
    n: usize,
    seed: u64,
    params: MsmParams,
}

pub fn resolve_synth(r: &mut Resolver) -> Result<Synth, CliError> {
    let n = r.value("synth", "n", 168usize)?;
    let seed = r.required("synth", "seed")?;
    let params = MsmParams {
        c1: r.value("synth", "c1", 0.10)?,
        c2: r.value("synth", "c2", -0.16)?,
        sigma2: r.value("synth", "sigma2", 0.0025)?,
        lambda: r.value("synth", "lambda", 0.5)?,
        mu: r.value("synth", "mu", 0.5)?,
        l1: r.value("synth", "L1", 0.25)?,
        t1: r.value("synth", "T1", 0.35)?,
        constants: constants(r)?,
    };
    Ok(Synth { n, seed, params })
}

pub fn synth(s: &Synth, out: &mut Output) -> Result<Outcome, CliError> {
    let data = generate_synthetic(&s.params, s.n, s.seed, &default_rate_series(s.n))?;
    out.write("series.csv", |w| write_timeseries(&data.series, w))?;
    out.write("truth.csv", |w| {
        writeln!(w, "t,state,L,T")?;
        for (t, st) in data.states.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                t + 1,
                st.index() + 1,
                fmt_f64(data.path.leverage[t]),
                fmt_f64(data.path.trust[t])
            )?;
        }
        Ok(())
    })?;
    let s2 = data.states.iter().filter(|&&x| x == State::S2).count();
    Ok(Outcome {
        summary: json!({
            "seed": s.seed,
            "n": s.n,
            "months_in_state_2": s2,
            "states": encode_states(&data.states),
        }),
        seed: Some(s.seed),
        module_chosen: vec![
            "interest rate falls linearly from 4.5% to 0.5% a year",
            "the regime chain starts in state 1",
        ],
    })
}
