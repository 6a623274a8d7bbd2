//! `rubin` — simulate point processes, evaluate distance bounds, and run
//! the numerical validation suite from the command line.
//!
//! All randomized commands take a mandatory `--seed`; identical invocations
//! produce byte-identical stdout. Progress and timing go to stderr. Exit
//! codes: 0 on success, 2 when a computation or validation fails, 1 for
//! usage errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use rubin_core::bounds::{
    asymptotic_objective, burstiness, mean_rate, mmpp_bound_from_stats, optimize_lambda_asymptotic,
    optimize_lambda_from_stats, poisson_bound_closed_form, resolvent_bound_exact,
    resolvent_bound_mc, BoundVariant, PathStats,
};
use rubin_core::config::{GroundMetric, Window};
use rubin_core::malliavin::FiniteCarrierModel;
use rubin_core::rng::substream;
use rubin_core::simulate::{
    sample_mmpp, sample_poisson_homogeneous, sample_poisson_inhomogeneous, CtmcModel,
    IntensityFunction, StartState,
};
use rubin_core::transport::{cost_matrix, cost_matrix_csv, empirical_rubinstein};
use rubin_core::Configuration;
use serde::Deserialize;
use serde_json::json;
use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "rubin", version, about = "Rubinstein distance bounds for point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw configurations and write them as JSON lines.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Stationary distribution and rate summary of a modulating chain.
    Stationary {
        /// Path to a model JSON file ({"m": …, "q": [[…]], "rates": […]}).
        #[arg(long)]
        model: String,
    },
    /// Evaluate a distance bound.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Choose the Poisson approximant rate λ for an MMPP.
    Optimize {
        #[arg(long)]
        model: String,
        /// Optimize the finite-horizon Monte Carlo bound instead of the
        /// asymptotic growth rate.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        /// Required with --horizon.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = VariantArg::Perturbation)]
        variant: VariantArg,
    },
    /// Empirical Rubinstein distance between two samples of configurations.
    Estimate {
        /// JSONL file of configurations (one JSON array of points per line).
        #[arg(long)]
        xs: String,
        #[arg(long)]
        ys: String,
        #[arg(long, value_enum, default_value_t = MetricArg::D1Unit)]
        metric: MetricArg,
        /// Ground-cost cap for the matching metric (defaults to the metric's
        /// standard cap).
        #[arg(long)]
        truncation: Option<f64>,
        #[arg(long, default_value_t = 64)]
        bootstrap: usize,
        #[arg(long)]
        seed: u64,
        /// Also write the full pairwise cost matrix as CSV.
        #[arg(long)]
        cost_csv: Option<String>,
    },
    /// Check the spectral identities of a finite-carrier engine.
    Validate {
        /// Path to an engine JSON file ({"weights": […], "truncation": …,
        /// "h": […]?}).
        #[arg(long)]
        engine: String,
        #[arg(long, default_value_t = 4)]
        max_order: usize,
        #[arg(long, default_value_t = 10)]
        margin: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Write the residual table to a file instead of stdout.
        #[arg(long)]
        csv: Option<String>,
        /// Export the generator in Matrix Market coordinate format.
        #[arg(long)]
        matrix_market: Option<String>,
    },
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Poisson process on an interval, homogeneous or inhomogeneous.
    Poisson {
        #[arg(long)]
        seed: u64,
        /// Number of configurations to draw.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Window as "lo,hi".
        #[arg(long, default_value = "0,1")]
        window: String,
        /// Constant rate; mutually exclusive with --intensity.
        #[arg(long)]
        rate: Option<f64>,
        /// Intensity as a number or {"knots": […], "values": […]}.
        #[arg(long)]
        intensity: Option<String>,
        /// Write configurations here instead of stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Markov-modulated Poisson process over [0, horizon].
    Mmpp {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        model: String,
        #[arg(long)]
        horizon: f64,
        /// "stationary" or a state index.
        #[arg(long, default_value = "stationary")]
        start: String,
        #[arg(long)]
        out: Option<String>,
        /// Also write the modulating paths as JSON lines.
        #[arg(long)]
        paths_out: Option<String>,
    },
}

#[derive(Subcommand)]
enum BoundCmd {
    /// Closed-form bound between two Poisson laws on a window.
    Poisson {
        /// Reference (homogeneous) rate.
        #[arg(long)]
        reference: f64,
        /// Perturbed intensity: a number or {"knots": […], "values": […]}.
        #[arg(long)]
        h: String,
        #[arg(long, default_value = "0,1")]
        window: String,
        #[arg(long, value_enum, default_value_t = VariantArg::Perturbation)]
        variant: VariantArg,
    },
    /// Monte Carlo bound between Poisson(λ) and an MMPP.
    Mmpp {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model: String,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100_000)]
        n_paths: usize,
        #[arg(long, value_enum, default_value_t = VariantArg::Perturbation)]
        variant: VariantArg,
    },
    /// Resolvent-route bound on a finite carrier (exact by default).
    Resolvent {
        #[arg(long)]
        engine: String,
        #[arg(long, value_enum, default_value_t = VariantArg::Perturbation)]
        variant: VariantArg,
        /// Estimate by Monte Carlo on the window representation instead of
        /// the banded solve.
        #[arg(long)]
        mc: bool,
        /// Required with --mc.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        n_samples: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    TotalMass,
    Perturbation,
}

impl From<VariantArg> for BoundVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::TotalMass => BoundVariant::TotalMass,
            VariantArg::Perturbation => BoundVariant::Perturbation,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    /// Counting metric at its printed scale (one extra atom costs 2).
    D1,
    /// Counting metric at unit scale (one extra atom costs 1).
    D1Unit,
    /// Matched-atom metric with truncated Euclidean ground cost.
    D2,
}

#[derive(Deserialize)]
struct EngineJson {
    weights: Vec<f64>,
    truncation: usize,
    h: Option<Vec<f64>>,
}

fn parse_window(s: &str) -> Result<Window> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("window must be \"lo,hi\", got {s:?}"))?;
    let lo: f64 = a.trim().parse().context("window lower bound")?;
    let hi: f64 = b.trim().parse().context("window upper bound")?;
    Ok(Window::interval(lo, hi)?)
}

fn parse_intensity(s: &str) -> Result<IntensityFunction> {
    if let Ok(v) = s.trim().parse::<f64>() {
        return Ok(IntensityFunction::constant(v)?);
    }
    #[derive(Deserialize)]
    struct Piecewise {
        knots: Vec<f64>,
        values: Vec<f64>,
    }
    let p: Piecewise = serde_json::from_str(s)
        .context("intensity must be a number or {\"knots\": […], \"values\": […]}")?;
    Ok(IntensityFunction::piecewise(p.knots, p.values)?)
}

fn parse_start(s: &str) -> Result<StartState> {
    if s == "stationary" {
        Ok(StartState::Stationary)
    } else {
        Ok(StartState::Fixed(s.parse().context("start must be \"stationary\" or a state index")?))
    }
}

fn load_model(path: &str) -> Result<CtmcModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    Ok(CtmcModel::from_json(&text)?)
}

fn load_engine(path: &str) -> Result<(FiniteCarrierModel, Option<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let j: EngineJson = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
    let eng = FiniteCarrierModel::new(j.weights, j.truncation)?;
    if let Some(h) = &j.h {
        if h.len() != eng.n_cells() {
            bail!("h has {} entries for {} cells", h.len(), eng.n_cells());
        }
    }
    Ok((eng, j.h))
}

fn read_configurations(path: &str) -> Result<Vec<Configuration>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            Configuration::from_json(l).with_context(|| format!("{path} line {}", i + 1))
        })
        .collect()
}

fn emit(out: Option<&str>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {path}")),
        None => {
            print!("{body}");
            std::io::stdout().flush().map_err(Into::into)
        }
    }
}

/// Deterministic parallel path sampling: fixed-size chunks, one RNG
/// substream per chunk, so the result is independent of the thread count.
const PATH_CHUNK: usize = 256;

fn parallel_path_stats(
    model: &CtmcModel,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathStats>> {
    let n_chunks = n_paths.div_ceil(PATH_CHUNK);
    let chunks: Vec<Vec<PathStats>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let take = PATH_CHUNK.min(n_paths - c * PATH_CHUNK);
            (0..take)
                .map(|_| {
                    let path = model.sample_path(horizon, StartState::Stationary, &mut rng)?;
                    Ok(PathStats { occupation: path.occupation(model.n_states()), horizon })
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn second_moment(model: &CtmcModel) -> f64 {
    model.stationary().iter().zip(model.rates()).map(|(p, r)| p * r * r).sum()
}

fn run(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    let mut code = 0;
    match cli.command {
        Command::Simulate(SimulateCmd::Poisson { seed, n, window, rate, intensity, out }) => {
            let w = parse_window(&window)?;
            let mut rng = substream(seed, 0);
            let mut body = String::new();
            match (rate, intensity) {
                (Some(r), None) => {
                    for _ in 0..n {
                        let cfg = sample_poisson_homogeneous(r, &w, &mut rng)?;
                        writeln!(body, "{}", cfg.to_json()).unwrap();
                    }
                }
                (None, Some(spec)) => {
                    let f = parse_intensity(&spec)?;
                    for _ in 0..n {
                        let cfg = sample_poisson_inhomogeneous(&f, &w, &mut rng)?;
                        writeln!(body, "{}", cfg.to_json()).unwrap();
                    }
                }
                _ => bail!("exactly one of --rate and --intensity is required"),
            }
            emit(out.as_deref(), &body)?;
        }
        Command::Simulate(SimulateCmd::Mmpp { seed, n, model, horizon, start, out, paths_out }) => {
            let model = load_model(&model)?;
            let start = parse_start(&start)?;
            let mut rng = substream(seed, 0);
            let mut body = String::new();
            let mut paths = String::new();
            for _ in 0..n {
                let (path, cfg) = sample_mmpp(&model, horizon, start, &mut rng)?;
                writeln!(body, "{}", cfg.to_json()).unwrap();
                if paths_out.is_some() {
                    let line = json!({
                        "times": path.times(),
                        "states": path.states(),
                        "horizon": path.horizon(),
                    });
                    writeln!(paths, "{line}").unwrap();
                }
            }
            emit(out.as_deref(), &body)?;
            if let Some(p) = paths_out {
                std::fs::write(&p, paths).with_context(|| format!("writing {p}"))?;
            }
        }
        Command::Stationary { model } => {
            let model = load_model(&model)?;
            let report = json!({
                "stationary": model.stationary(),
                "mean_rate": mean_rate(&model),
                "second_moment": second_moment(&model),
                "sqrt_second_moment": second_moment(&model).sqrt(),
                "burstiness": burstiness(&model),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Bound(BoundCmd::Poisson { reference, h, window, variant }) => {
            let w = parse_window(&window)?;
            let h = parse_intensity(&h)?;
            let report = poisson_bound_closed_form(&h, reference, &w, variant.into())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Bound(BoundCmd::Mmpp { seed, model, horizon, lambda, n_paths, variant }) => {
            if !(lambda > 0.0) {
                bail!("--lambda must be positive");
            }
            let model = load_model(&model)?;
            let stats = parallel_path_stats(&model, horizon, n_paths, seed)?;
            let report = mmpp_bound_from_stats(&stats, model.rates(), lambda, variant.into());
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Bound(BoundCmd::Resolvent { engine, variant, mc, seed, n_samples }) => {
            let (eng, h) = load_engine(&engine)?;
            let h = h.unwrap_or_else(|| vec![1.0; eng.n_cells()]);
            let report = if mc {
                let seed = seed.ok_or_else(|| anyhow!("--mc requires --seed"))?;
                let w0 = eng.weights()[0];
                if eng.weights().iter().any(|&x| (x - w0).abs() > 1e-12) {
                    bail!("--mc needs equal per-cell weights (homogeneous reference)");
                }
                let w = Window::interval(0.0, 1.0)?;
                let h_fun = eng.window_intensity(&w, Some(&h))?;
                let reference = w0 * eng.n_cells() as f64;
                let mut rng = substream(seed, 0);
                resolvent_bound_mc(&h_fun, reference, &w, variant.into(), n_samples, &mut rng)?
            } else {
                resolvent_bound_exact(&eng, &h, variant.into())?
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Optimize { model, horizon, n_paths, seed, variant } => {
            let model = load_model(&model)?;
            let report = match horizon {
                None => {
                    let r = optimize_lambda_asymptotic(&model);
                    json!({ "mode": "asymptotic", "report": r })
                }
                Some(t) => {
                    let seed = seed.ok_or_else(|| anyhow!("--horizon requires --seed"))?;
                    let stats = parallel_path_stats(&model, t, n_paths, seed)?;
                    let r = optimize_lambda_from_stats(&model, &stats, variant.into());
                    json!({
                        "mode": "finite_horizon",
                        "horizon": t,
                        "n_paths": n_paths,
                        "asymptotic_objective_at_argmin": asymptotic_objective(&model, r.argmin.lambda),
                        "report": r,
                    })
                }
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Estimate { xs, ys, metric, truncation, bootstrap, seed, cost_csv } => {
            let xs = read_configurations(&xs)?;
            let ys = read_configurations(&ys)?;
            let metric = match (metric, truncation) {
                (MetricArg::D1, None) => GroundMetric::d1(),
                (MetricArg::D1Unit, None) => GroundMetric::d1_unit(),
                (MetricArg::D2, None) => GroundMetric::d2_default(),
                (MetricArg::D2, Some(c)) => GroundMetric::d2(c),
                (_, Some(_)) => bail!("--truncation only applies to --metric d2"),
            };
            let mut rng = substream(seed, 0);
            let est = empirical_rubinstein(&xs, &ys, metric, bootstrap, &mut rng)?;
            if let Some(path) = cost_csv {
                let cost = cost_matrix(&xs, &ys, metric);
                std::fs::write(&path, cost_matrix_csv(xs.len(), ys.len(), &cost))
                    .with_context(|| format!("writing {path}"))?;
            }
            let report = json!({
                "estimate": est.estimate,
                "bootstrap_se": est.bootstrap_se,
                "n_pairs": est.n_pairs,
                "n_bootstrap": est.n_bootstrap,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Validate { engine, max_order, margin, tol, csv, matrix_market } => {
            let (eng, h) = load_engine(&engine)?;
            let rows = eng.chaos_eigencheck(max_order, margin)?;
            let mut table = String::from("orders,eigenvalue,sup_scale,residual\n");
            let mut worst = 0.0f64;
            for row in &rows {
                let orders =
                    row.orders.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(";");
                writeln!(table, "{orders},{},{},{}", row.eigenvalue, row.sup_scale, row.residual)
                    .unwrap();
                worst = worst.max(row.residual);
            }
            emit(csv.as_deref(), &table)?;
            if let Some(path) = matrix_market {
                std::fs::write(&path, eng.matrix_market())
                    .with_context(|| format!("writing {path}"))?;
            }
            let mut ok = worst < tol;
            eprintln!(
                "eigencheck: {} rows, max residual {worst:.3e} (tol {tol:.1e}) — {}",
                rows.len(),
                if ok { "ok" } else { "FAILED" }
            );
            if let Some(h) = h {
                let l = eng.girsanov_table(&h)?;
                let dens = eng.density_table();
                let mass: f64 = l.iter().zip(&dens).map(|(a, b)| a * b).sum();
                let drift = (mass - 1.0).abs();
                let mass_ok = drift < 1e-8;
                eprintln!(
                    "density normalization: |E[L] − 1| = {drift:.3e} — {}",
                    if mass_ok { "ok" } else { "FAILED" }
                );
                ok &= mass_ok;
            }
            if !ok {
                code = 2;
            }
        }
    }
    eprintln!("elapsed {:.3}s", started.elapsed().as_secs_f64());
    Ok(code)
}

fn main() {
    if let Ok(threads) = std::env::var("PPT_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
