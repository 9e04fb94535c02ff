//! Command implementations behind the `toricnet` binary.
//!
//! Every command returns a [`Report`]: a JSON document with the parameters
//! echoed back, the results, and the tolerances each result was checked
//! against. Keys are sorted, so identical inputs give byte-identical output.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use toricnet::dynamics::{self, IntegratorOptions};
use toricnet::equilibrium::{self, BirchOptions, Perturbation, DEFAULT_PROBE_STEPS};
use toricnet::fluxcone::{self, FluxVector, BALANCE_TOL, IMMERSION_RANK_TOL};
use toricnet::kirchhoff::{self, DEFAULT_MEMBERSHIP_TOL};
use toricnet::lincore::DEFAULT_RANK_TOL;
use toricnet::netmodel::{self, ParsedNetwork};
use toricnet::{EGraph, RateVector};

/// Per-vertex relative complex-balance residual accepted at an equilibrium.
pub const COMPLEX_BALANCE_TOL: f64 = 1e-8;
/// Distance accepted for `x* − x0 ∈ S` and `ln x* − X* ∈ S⊥`.
pub const SUBSPACE_TOL: f64 = 1e-9;
/// Accepted max relative error between analytic and finite-difference Jacobians.
pub const JACOBIAN_FD_TOL: f64 = 1e-6;
/// Accepted relative error of the embedding roundtrip.
pub const ROUNDTRIP_TOL: f64 = 1e-8;
/// Conserved quantities may drift by this multiple of `rtol·‖x0‖`.
pub const DRIFT_FACTOR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] toricnet::Error),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for a definite negative answer, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(toricnet::Error::NotInToricLocus { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub inputs: Value,
    pub results: Value,
    pub diagnostics: Value,
    /// Set when the command answered "no" (non-member).
    pub negative: bool,
}

impl Report {
    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "diagnostics": self.diagnostics,
        })
    }

    pub fn exit_code(&self) -> i32 {
        if self.negative {
            2
        } else {
            0
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "toricnet",
    version,
    about = "Toric locus, complex-balanced equilibria and flux-cone checks for mass-action networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural summary: species, complexes, linkage classes, dimensions.
    Info { network: PathBuf },
    /// Test whether the rates lie in the toric locus.
    Check {
        network: PathBuf,
        #[command(flatten)]
        rates: RateArgs,
        /// Residual tolerance of the log-linear membership test.
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
    },
    /// Complex-balanced equilibrium in the class of x0.
    Eq {
        network: PathBuf,
        #[command(flatten)]
        rates: RateArgs,
        /// Initial state; all ones when omitted.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
        #[command(flatten)]
        birch: BirchArgs,
    },
    /// Rate constants from flux coordinates, with rank and Jacobian checks.
    Embed {
        network: PathBuf,
        /// State x; all ones when omitted.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Balanced positive edge fluxes.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "sample_seed")]
        beta: Option<String>,
        /// Seed for sampling a balanced flux when --beta is not given.
        #[arg(long, env = "TORICNET_SEED", default_value_t = 0)]
        sample_seed: u64,
        /// Additional random interior points to rank-check.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
    },
    /// Integrate the mass-action ODE.
    Simulate {
        network: PathBuf,
        #[command(flatten)]
        rates: RateArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        t_end: f64,
        /// CSV destination for the trajectory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = IntegratorOptions::default().rtol)]
        rtol: f64,
        #[arg(long, default_value_t = IntegratorOptions::default().atol)]
        atol: f64,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
        #[command(flatten)]
        birch: BirchArgs,
    },
    /// Central-difference derivatives of x* with Richardson ratios.
    Probe {
        network: PathBuf,
        #[command(flatten)]
        rates: RateArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// Direction (repeatable); length n for x0 modes, |E| for rate modes.
        #[arg(long, required = true, allow_hyphen_values = true)]
        direction: Vec<String>,
        #[arg(long, value_enum, default_value_t = ProbeMode::X0)]
        mode: ProbeMode,
        /// Step sizes, comma separated.
        #[arg(long)]
        steps: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
        #[command(flatten)]
        birch: BirchArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RateArgs {
    /// Rates in edge order (`2,3,4,6`) or by name (`k1=2,k2=3`).
    #[arg(long)]
    pub rates: Option<String>,
    /// Value for a `$name` placeholder (repeatable).
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct BirchArgs {
    #[arg(long, default_value_t = BirchOptions::default().grad_tol)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = BirchOptions::default().max_iter)]
    pub max_iter: usize,
}

impl Default for BirchArgs {
    fn default() -> Self {
        let d = BirchOptions::default();
        BirchArgs {
            grad_tol: d.grad_tol,
            max_iter: d.max_iter,
        }
    }
}

impl BirchArgs {
    pub fn options(&self) -> BirchOptions {
        BirchOptions {
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            ..BirchOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeMode {
    /// x0 + h·d
    X0,
    /// x0 ∘ exp(h·d)
    X0Log,
    /// k + h·d
    Rates,
    /// k ∘ exp(h·d)
    RatesLog,
    /// log-rate direction projected onto the toric locus
    RatesOnLocus,
}

impl ProbeMode {
    fn perturbation(self, d: DVector<f64>) -> Perturbation {
        match self {
            ProbeMode::X0 => Perturbation::Initial(d),
            ProbeMode::X0Log => Perturbation::InitialLog(d),
            ProbeMode::Rates => Perturbation::Rates(d),
            ProbeMode::RatesLog => Perturbation::RatesLog(d),
            ProbeMode::RatesOnLocus => Perturbation::RatesOnLocus(d),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ProbeMode::X0 => "x0",
            ProbeMode::X0Log => "x0-log",
            ProbeMode::Rates => "rates",
            ProbeMode::RatesLog => "rates-log",
            ProbeMode::RatesOnLocus => "rates-on-locus",
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Report> {
    match &cli.command {
        Command::Info { network } => Ok(info(&load_network(network)?)),
        Command::Check { network, rates, tol } => {
            let net = load_network(network)?;
            let k = resolve_rates(&net, rates)?;
            check(&net.graph, &k, *tol)
        }
        Command::Eq {
            network,
            rates,
            x0,
            tol,
            birch,
        } => {
            let net = load_network(network)?;
            let k = resolve_rates(&net, rates)?;
            let x0 = state_or_ones(x0.as_deref(), net.graph.n_species(), "x0")?;
            eq(&net.graph, &k, &x0, *tol, &birch.options())
        }
        Command::Embed {
            network,
            x,
            beta,
            sample_seed,
            samples,
            jobs,
            tol,
        } => {
            let net = load_network(network)?;
            let x = state_or_ones(x.as_deref(), net.graph.n_species(), "x")?;
            let beta = match beta {
                Some(b) => BetaSource::Given(parse_list(b, "beta")?),
                None => BetaSource::Sampled(*sample_seed),
            };
            embed(&net.graph, &x, beta, *samples, *jobs, *tol)
        }
        Command::Simulate {
            network,
            rates,
            x0,
            t_end,
            out,
            rtol,
            atol,
            tol,
            birch,
        } => {
            let net = load_network(network)?;
            let k = resolve_rates(&net, rates)?;
            let x0 = state_or_ones(x0.as_deref(), net.graph.n_species(), "x0")?;
            let opts = IntegratorOptions {
                rtol: *rtol,
                atol: *atol,
                ..IntegratorOptions::default()
            };
            simulate(
                &net.graph,
                &k,
                &x0,
                *t_end,
                &opts,
                out.as_deref(),
                *tol,
                &birch.options(),
            )
        }
        Command::Probe {
            network,
            rates,
            x0,
            direction,
            mode,
            steps,
            jobs,
            tol,
            birch,
        } => {
            let net = load_network(network)?;
            let k = resolve_rates(&net, rates)?;
            let x0 = state_or_ones(x0.as_deref(), net.graph.n_species(), "x0")?;
            let directions = direction
                .iter()
                .map(|d| parse_list(d, "direction"))
                .collect::<CliResult<Vec<_>>>()?;
            let steps = match steps {
                Some(s) => parse_list(s, "steps")?,
                None => DEFAULT_PROBE_STEPS.to_vec(),
            };
            probe(
                &net.graph,
                &k,
                &x0,
                *mode,
                &directions,
                &steps,
                *jobs,
                *tol,
                &birch.options(),
            )
        }
    }
}

pub fn load_network(path: &Path) -> CliResult<ParsedNetwork> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(netmodel::parse(&text)?)
}

/// Comma-separated floats.
pub fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{what}: `{t}` is not a number")))
        })
        .collect()
}

fn state_or_ones(s: Option<&str>, n: usize, what: &'static str) -> CliResult<DVector<f64>> {
    let v = match s {
        Some(s) => parse_list(s, what)?,
        None => vec![1.0; n],
    };
    if v.len() != n {
        return Err(toricnet::Error::DimensionMismatch {
            what,
            expected: n,
            found: v.len(),
        }
        .into());
    }
    Ok(DVector::from_vec(v))
}

fn parse_assignment(s: &str) -> CliResult<(String, f64)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected NAME=VALUE, got `{s}`")))?;
    let value = value
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("`{value}` is not a number")))?;
    Ok((name.trim().trim_start_matches('$').to_string(), value))
}

/// Rates from `--rates`/`--set`, falling back to the values in the file.
pub fn resolve_rates(net: &ParsedNetwork, args: &RateArgs) -> CliResult<RateVector> {
    let mut params = HashMap::new();
    for s in &args.set {
        let (name, value) = parse_assignment(s)?;
        params.insert(name, value);
    }
    match args.rates.as_deref() {
        Some(list) if list.contains('=') => {
            for s in list.split(',') {
                let (name, value) = parse_assignment(s)?;
                params.insert(name, value);
            }
        }
        Some(list) => {
            let values = parse_list(list, "rates")?;
            if values.len() != net.graph.n_edges() {
                return Err(toricnet::Error::DimensionMismatch {
                    what: "rates",
                    expected: net.graph.n_edges(),
                    found: values.len(),
                }
                .into());
            }
            return Ok(RateVector::new(values)?);
        }
        None => {}
    }
    for name in params.keys() {
        if !net.parameter_names().contains(&name.as_str()) {
            return Err(toricnet::Error::UnknownParameter(name.clone()).into());
        }
    }
    Ok(net.resolve_rates(&params)?)
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.as_slice())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(*b))
}

pub fn info(net: &ParsedNetwork) -> Report {
    let g = &net.graph;
    let sd = netmodel::stoich_decomp(g, DEFAULT_RANK_TOL);
    let fs = fluxcone::flux_space(g, DEFAULT_RANK_TOL);
    let l = g.components().len();
    Report {
        command: "info",
        inputs: json!({}),
        results: json!({
            "species": g.species().iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
            "vertices": g.vertices().iter().map(|v| v.label.clone()).collect::<Vec<_>>(),
            "edges": g.edges().iter().map(|e| [e.src, e.dst]).collect::<Vec<_>>(),
            "components": g.components(),
            "parameters": net.parameter_names(),
            "n": g.n_species(),
            "m": g.n_vertices(),
            "n_edges": g.n_edges(),
            "linkage_classes": l,
            "weakly_reversible": netmodel::is_weakly_reversible(g),
            "s": sd.s,
            "flux_dim": fs.dim,
            "deficiency": g.n_vertices() as i64 - l as i64 - sd.s as i64,
        }),
        diagnostics: json!({ "rank_tol": DEFAULT_RANK_TOL }),
        negative: false,
    }
}

pub fn check(g: &EGraph, k: &RateVector, tol: f64) -> CliResult<Report> {
    let m = kirchhoff::toric_membership(g, k, tol)?;
    let tc = kirchhoff::tree_constants(g, k)?;
    Ok(Report {
        command: "check",
        inputs: json!({ "rates": k.as_slice(), "tol": tol }),
        results: json!({
            "member": m.is_member,
            "residual": m.residual,
            "log_solution": vec_json(&m.log_solution),
            "tree_constants": tc,
        }),
        diagnostics: json!({ "tolerance": m.tolerance_used }),
        negative: !m.is_member,
    })
}

pub fn eq(g: &EGraph, k: &RateVector, x0: &DVector<f64>, tol: f64, opts: &BirchOptions) -> CliResult<Report> {
    let sd = netmodel::stoich_decomp(g, DEFAULT_RANK_TOL);
    let log_eq = equilibrium::solve_log_equilibrium(g, k, &sd, tol)?;
    let birch = equilibrium::birch_solve(&log_eq.x_star, x0, &sd, opts)?;
    let cb = equilibrium::complex_balance_residuals(g, k, &birch.x_star)?;
    let class_dist = sd.distance_from_s(&(&birch.x_star - x0));
    let log_dist = sd.distance_from_sperp(&(birch.x_star.map(f64::ln) - &log_eq.x_star));
    Ok(Report {
        command: "eq",
        inputs: json!({ "rates": k.as_slice(), "x0": vec_json(x0), "tol": tol }),
        results: json!({
            "log_equilibrium": vec_json(&log_eq.x_star),
            "x_star": vec_json(&birch.x_star),
            "method": format!("{:?}", log_eq.method),
            "complex_balance_residuals": cb,
        }),
        diagnostics: json!({
            "membership_residual": log_eq.membership.residual,
            "membership_tolerance": log_eq.membership.tolerance_used,
            "birch_iterations": birch.iterations,
            "final_grad_norm": birch.final_grad_norm,
            "grad_tol": opts.grad_tol,
            "max_complex_balance_residual": max_of(&cb),
            "complex_balance_tolerance": COMPLEX_BALANCE_TOL,
            "distance_from_class": class_dist,
            "distance_from_log_coset": log_dist,
            "subspace_tolerance": SUBSPACE_TOL,
        }),
        negative: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaSource {
    Given(Vec<f64>),
    Sampled(u64),
}

struct PointCheck {
    rank: fluxcone::RankCheck,
    fd_error: f64,
}

fn point_check(
    g: &EGraph,
    sd: &netmodel::StoichDecomp,
    fs: &fluxcone::FluxSpace,
    x: &DVector<f64>,
    beta: &[f64],
) -> PointCheck {
    PointCheck {
        rank: fluxcone::immersion_rank_check(x, beta, g, sd, fs),
        fd_error: fluxcone::jacobian_fd_error(x, beta, g),
    }
}

/// Maps `f` over `items` on up to `jobs` threads; output order follows input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                scope.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

pub fn embed(
    g: &EGraph,
    x: &DVector<f64>,
    beta: BetaSource,
    samples: usize,
    jobs: usize,
    tol: f64,
) -> CliResult<Report> {
    let sd = netmodel::stoich_decomp(g, DEFAULT_RANK_TOL);
    let fs = fluxcone::flux_space(g, DEFAULT_RANK_TOL);
    let (beta, seed) = match beta {
        BetaSource::Given(b) => (FluxVector::new(b), None),
        BetaSource::Sampled(seed) => (fluxcone::sample_flux(g, &fs, seed)?, Some(seed)),
    };
    let k = fluxcone::phi_embedding(x, &beta, g)?;
    let membership = kirchhoff::toric_membership(g, &k, tol)?;
    let (x_back, beta_back) = fluxcone::phi_inverse(g, &k, x, &sd, tol, &BirchOptions::default())?;
    let roundtrip =
        relative_error(x_back.as_slice(), x.as_slice()).max(relative_error(beta_back.as_slice(), beta.as_slice()));
    let here = point_check(g, &sd, &fs, x, beta.as_slice());

    let mut inputs = json!({ "x": vec_json(x), "samples": samples, "tol": tol });
    match seed {
        Some(s) => inputs["sample_seed"] = json!(s),
        None => inputs["beta"] = json!(beta.as_slice()),
    }

    let mut results = json!({
        "beta": beta.as_slice(),
        "rates": k.as_slice(),
        "member": membership.is_member,
        "membership_residual": membership.residual,
        "roundtrip_error": roundtrip,
        "rank": here.rank.rank,
        "expected_rank": here.rank.expected,
        "rank_pass": here.rank.pass,
        "jacobian_fd_error": here.fd_error,
    });

    if samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let points = (0..samples)
            .map(|_| {
                let xs = DVector::from_fn(g.n_species(), |_, _| rng.random_range(-1.0f64..1.0).exp());
                let b = fluxcone::sample_flux(g, &fs, rng.random())?;
                Ok((xs, b))
            })
            .collect::<toricnet::Result<Vec<_>>>()?;
        let checks = parallel_map(&points, jobs, |(xs, b)| point_check(g, &sd, &fs, xs, b.as_slice()));
        let passed = checks.iter().filter(|c| c.rank.pass).count();
        let worst_fd = checks.iter().map(|c| c.fd_error).fold(0.0, f64::max);
        results["sampled"] = json!({
            "points": samples,
            "rank_passed": passed,
            "max_jacobian_fd_error": worst_fd,
        });
    }

    Ok(Report {
        command: "embed",
        inputs,
        results,
        diagnostics: json!({
            "membership_tolerance": membership.tolerance_used,
            "balance_tolerance": BALANCE_TOL,
            "rank_tolerance": IMMERSION_RANK_TOL,
            "jacobian_fd_tolerance": JACOBIAN_FD_TOL,
            "roundtrip_tolerance": ROUNDTRIP_TOL,
        }),
        negative: false,
    })
}

/// `max_i |a_i − b_i| / max(|b_i|, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
    out: Option<&Path>,
    tol: f64,
    birch: &BirchOptions,
) -> CliResult<Report> {
    let traj = dynamics::integrate(g, k, x0, t_end, opts)?;
    if let Some(path) = out {
        let write_err = |source| CliError::Write {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::create(path).map_err(write_err)?;
        traj.write_csv(std::io::BufWriter::new(file)).map_err(write_err)?;
    }
    let drift_tol = DRIFT_FACTOR * opts.rtol * x0.norm();
    let mut results = json!({
        "final_state": vec_json(traj.final_state()),
        "steps": traj.times.len() - 1,
        "conserved_drift": traj.conserved_drift,
    });
    let mut diagnostics = json!({
        "rtol": opts.rtol,
        "atol": opts.atol,
        "drift_tolerance": drift_tol,
        "membership_tolerance": tol,
    });
    let sd = netmodel::stoich_decomp(g, DEFAULT_RANK_TOL);
    match equilibrium::equilibrium_from_rates(g, k, x0, &sd, tol, birch) {
        Ok(eqm) => {
            let rep = dynamics::convergence_report(&traj, &eqm.x_star);
            results["member"] = json!(true);
            results["x_star"] = vec_json(&eqm.x_star);
            results["final_distance"] = json!(rep.final_distance);
            results["monotone_tail"] = json!(rep.monotone_tail);
            diagnostics["grad_tol"] = json!(birch.grad_tol);
        }
        Err(e @ (toricnet::Error::NotInToricLocus { .. } | toricnet::Error::NotWeaklyReversible(_))) => {
            results["member"] = json!(false);
            results["note"] = json!(format!("no equilibrium comparison: {e}"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Report {
        command: "simulate",
        inputs: json!({
            "rates": k.as_slice(),
            "x0": vec_json(x0),
            "t_end": t_end,
            "out": out.map(|p| p.display().to_string()),
        }),
        results,
        diagnostics,
        negative: false,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn probe(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    mode: ProbeMode,
    directions: &[Vec<f64>],
    steps: &[f64],
    jobs: usize,
    tol: f64,
    opts: &BirchOptions,
) -> CliResult<Report> {
    let sd = netmodel::stoich_decomp(g, DEFAULT_RANK_TOL);
    let runs = parallel_map(directions, jobs, |d| {
        let p = mode.perturbation(DVector::from_column_slice(d));
        equilibrium::smooth_dependence_probe(g, k, x0, &sd, tol, opts, &p, steps)
    });
    let runs = runs.into_iter().collect::<toricnet::Result<Vec<_>>>()?;
    let tables: Vec<Value> = runs
        .iter()
        .map(|r| {
            json!({
                "direction_used": vec_json(&r.direction_used),
                "estimates": r.estimates.iter().map(vec_json).collect::<Vec<_>>(),
                "richardson_ratios": r.richardson_ratios,
            })
        })
        .collect();
    Ok(Report {
        command: "probe",
        inputs: json!({
            "rates": k.as_slice(),
            "x0": vec_json(x0),
            "mode": mode.name(),
            "directions": directions,
            "steps": steps,
            "tol": tol,
        }),
        results: json!({ "probes": tables }),
        diagnostics: json!({
            "membership_tolerance": tol,
            "grad_tol": opts.grad_tol,
            "expected_ratio": 4.0,
        }),
        negative: false,
    })
}
