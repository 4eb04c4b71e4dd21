//! The `dualgap` command line.
//!
//! Subcommands:
//!
//! | subcommand | work | machine output |
//! |------------|------|----------------|
//! | `ot` | transport between two weighted supports | JSON `{value, coupling?, potentials?, iters?}` |
//! | `objective` | penalized objectives (adversarial / autoencoder / exact-reconstruction) | JSON `{value, q, encoder?, iters, certified_gap}` |
//! | `verify` | randomized verification suites | report JSON (payload + timing sidecar) |
//! | `genbounds` | empirical transport distance versus sample size | CSV `n,trial,ipm,bound_term` |
//! | `brenier` | semi-discrete potential fit plus fresh-sample validation | JSON `{h, residual, converged, tv_error, pass}` |
//! | `report` | summarize a previously written report file | summary lines |
//!
//! Machine output goes to `--out` (a path, or `-` for stdout; the default).
//! Human-readable summary lines go to stderr and are silenced by `--quiet`.
//! Exit codes: 0 all checks passed, 1 assertion violation or non-finite
//! output, 2 input or configuration error, 3 solver non-convergence.
//!
//! # Input formats
//!
//! `ot --input problem.json` takes `{"p": [...], "q": [...]}` plus exactly
//! one geometry field: `"cost"` (row-major rectangular matrix, rows = |p|,
//! cols = |q|), `"points"` (shared support coordinates, |p| = |q| = number
//! of points, Euclidean distances), `"metric": "discrete"` (0/1 cost,
//! |p| = |q|), or `"metric_matrix"` (full symmetric distance matrix). The
//! `dual` method needs a metric geometry (`points`, `metric`, or
//! `metric_matrix`), since its witness class is defined by the metric.
//!
//! `objective --input problem.json` takes `{"p_x": [...]}` plus geometry
//! over the observation universe as above (`points` / `metric` /
//! `metric_matrix`); kind `fgan` adds `"p_g"`, kinds `wae`/`fwae` add
//! `"p_z"` and `"map"` (array sending each latent index to an observation
//! index).
//!
//! `brenier --atoms atoms.csv` reads one comma-separated coordinate row per
//! line (no header); `--weights w.csv` reads the atom weights the same way,
//! flattened. `--domain` is `box:lo1,hi1,lo2,hi2,...` for a uniform box or
//! `grid:lo1,hi1,...:side` for a uniform lattice over that box.
//!
//! # Determinism
//!
//! Randomized subcommands require `--seed`; per-instance generators derive
//! from it by counter splitting, so reruns with identical argv and input
//! files write byte-identical payloads (and CSV bytes). Wall-clock time
//! lives in the report's `meta` sidecar, outside the compared payload. The
//! `DUALGAP_THREADS` environment variable caps the worker pool; thread
//! count never changes results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use dualgap::brenier::{
    fit_potential, pushforward_check, FitConfig, SemiDiscreteProblem, SourceDomain,
};
use dualgap::duality::{
    fwae_objective, restricted_fgan, wae_objective, SolveOutcome, SolverConfig,
};
use dualgap::fgen::Generator;
use dualgap::genbounds::{empirical_ipm_curve, mcdiarmid_bound, SampledDistributionSpec};
use dualgap::ot::{kantorovich_dual, sinkhorn, wasserstein_primal, SinkhornConfig};
use dualgap::report::{emit_csv, write_output, CsvCell, Report};
use dualgap::space::{CostMatrix, DiscreteDistribution, FiniteMetricSpace, PushforwardMap};
use dualgap::theorems::{self, InstanceSpec, MapKind, MetricKind, TheoremReport};
use dualgap::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dualgap",
    version,
    about = "Discrete transport distances, f-divergences, and the objectives connecting them"
)]
struct Cli {
    /// Machine output destination: a file path, or "-" for stdout.
    #[arg(long, global = true, default_value = "-")]
    out: String,

    /// Silence the summary lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OtMethod {
    /// Exact network-simplex solve.
    Primal,
    /// Lipschitz-witness dual (needs a metric geometry).
    Dual,
    /// Entropy-regularized solve (needs --epsilon).
    Sinkhorn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveKind {
    /// Adversarial objective with Lipschitz witnesses.
    Fgan,
    /// Autoencoder objective: expected reconstruction cost plus penalty.
    Wae,
    /// Autoencoder objective with exact-transport reconstruction.
    Fwae,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteName {
    /// Adversarial value below autoencoder value, equal for invertible decoders.
    Theorem1,
    /// Scaled discrete metric recovers the divergence.
    Theorem2,
    /// Above the penalty threshold every objective equals the transport distance.
    Theorem3,
    /// Autoencoder value below exact and entropic transport.
    Theorem5,
    /// Pushforward contraction, convention agreement, constant-row encoders.
    Lemmas,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a transport problem between two weighted supports.
    Ot {
        /// JSON problem file (see module docs for the schema).
        #[arg(long)]
        input: PathBuf,
        /// Solution method.
        #[arg(long, value_enum)]
        method: OtMethod,
        /// Regularization strength for the sinkhorn method.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Convergence tolerance for the sinkhorn method.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Iteration cap for the sinkhorn method.
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
    },
    /// Evaluate a penalized objective on an explicit instance.
    Objective {
        /// Which objective to evaluate.
        #[arg(long, value_enum)]
        kind: ObjectiveKind,
        /// JSON problem file (see module docs for the schema).
        #[arg(long)]
        input: PathBuf,
        /// Divergence generator name (tv, kl, reverse-kl, chi2, js, gan, indicator).
        #[arg(long)]
        f: String,
        /// Penalty weight.
        #[arg(long)]
        lambda: f64,
        /// Certification tolerance for the solver.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Iteration budget for the solver.
        #[arg(long, default_value_t = 300)]
        max_iters: usize,
    },
    /// Run a randomized verification suite and write its report.
    Verify {
        /// Which suite to run.
        #[arg(long, value_enum)]
        suite: SuiteName,
        /// Number of random instances.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Master seed; all per-instance randomness derives from it.
        #[arg(long)]
        seed: u64,
        /// Divergence generator (default depends on the suite).
        #[arg(long)]
        generator: Option<String>,
        /// Metric kind: euclidean, discrete, or random-metric (default depends on the suite).
        #[arg(long)]
        metric: Option<String>,
        /// Decoder map kind: identity, permutation, or random-surjection (default depends on the suite).
        #[arg(long)]
        map: Option<String>,
        /// Upper bound on observation-universe size.
        #[arg(long, default_value_t = 6)]
        nx: usize,
        /// Upper bound on latent-universe size.
        #[arg(long, default_value_t = 8)]
        nz: usize,
        /// Penalty weight for the suites that take one.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Regularization ladder for the theorem5 suite.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Measure the transport distance to a reference across sample sizes.
    Genbounds {
        /// Sampling distribution: uniform-square, uniform-grid, or mixture-of-points.
        #[arg(long)]
        dist: String,
        /// Comma-separated strictly increasing sample sizes.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        ns: Vec<usize>,
        /// Trials per sample size.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Tail level for the reported deviation term.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Master seed.
        #[arg(long)]
        seed: u64,
    },
    /// Fit a semi-discrete transport potential and validate its pushforward.
    Brenier {
        /// CSV of atom coordinates, one row per atom.
        #[arg(long)]
        atoms: PathBuf,
        /// CSV of atom weights.
        #[arg(long)]
        weights: PathBuf,
        /// Source domain: box:lo1,hi1,... or grid:lo1,hi1,...:side.
        #[arg(long)]
        domain: String,
        /// Monte-Carlo sample count for fitting and validation.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Target max-marginal residual and pushforward tolerance.
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        /// Master seed (fitting and validation use separate derived streams).
        #[arg(long)]
        seed: u64,
        /// Ascent iteration cap.
        #[arg(long, default_value_t = 400)]
        max_iters: usize,
        /// Initial ascent step length.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Print the summary of a previously written report file.
    Report {
        /// Report JSON written by the verify subcommand.
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Apply the DUALGAP_THREADS cap before any parallel work starts.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DUALGAP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().map_err(|_| {
        Error::InvalidConfig(format!(
            "DUALGAP_THREADS must be a positive integer, got \"{raw}\""
        ))
    })?;
    if threads == 0 {
        return Err(Error::InvalidConfig(
            "DUALGAP_THREADS must be at least 1".into(),
        ));
    }
    // A failure here means a pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn note(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let start = Instant::now();
    match &cli.command {
        Command::Ot {
            input,
            method,
            epsilon,
            tol,
            max_iters,
        } => run_ot(cli, input, *method, *epsilon, *tol, *max_iters),
        Command::Objective {
            kind,
            input,
            f,
            lambda,
            tol,
            max_iters,
        } => run_objective(cli, *kind, input, f, *lambda, *tol, *max_iters),
        Command::Verify {
            suite,
            instances,
            seed,
            generator,
            metric,
            map,
            nx,
            nz,
            lambda,
            epsilons,
        } => run_verify(
            cli,
            start,
            *suite,
            *instances,
            *seed,
            generator.as_deref(),
            metric.as_deref(),
            map.as_deref(),
            *nx,
            *nz,
            *lambda,
            epsilons.as_deref(),
        ),
        Command::Genbounds {
            dist,
            ns,
            trials,
            delta,
            seed,
        } => run_genbounds(cli, dist, ns, *trials, *delta, *seed),
        Command::Brenier {
            atoms,
            weights,
            domain,
            samples,
            tol,
            seed,
            max_iters,
            step,
        } => run_brenier(
            cli, atoms, weights, domain, *samples, *tol, *seed, *max_iters, *step,
        ),
        Command::Report { input } => run_report(cli, input),
    }
}

// ---------------------------------------------------------------- inputs --

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Parse a CSV of floats: one comma-separated row per nonempty line.
fn parse_float_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in trimmed.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                detail: format!("line {}: \"{}\" is not a number", idx + 1, tok.trim()),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            detail: "file holds no data rows".to_string(),
        });
    }
    Ok(rows)
}

/// Geometry supplied with a problem: either a bare cost table or a metric
/// space (which induces its cost).
enum Geometry {
    Cost(CostMatrix),
    Space(FiniteMetricSpace),
}

impl Geometry {
    fn cost(&self) -> CostMatrix {
        match self {
            Geometry::Cost(c) => c.clone(),
            Geometry::Space(s) => CostMatrix::from_space(s),
        }
    }

    fn space(&self) -> Result<&FiniteMetricSpace> {
        match self {
            Geometry::Space(s) => Ok(s),
            Geometry::Cost(_) => Err(Error::InvalidConfig(
                "this operation needs a metric geometry (points, metric, or metric_matrix), not a bare cost table"
                    .into(),
            )),
        }
    }
}

fn resolve_geometry(
    cost: Option<Vec<Vec<f64>>>,
    points: Option<Vec<Vec<f64>>>,
    metric: Option<String>,
    metric_matrix: Option<Vec<Vec<f64>>>,
    rows: usize,
    cols: usize,
) -> Result<Geometry> {
    let given = [
        cost.is_some(),
        points.is_some(),
        metric.is_some(),
        metric_matrix.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if given != 1 {
        return Err(Error::InvalidConfig(
            "give exactly one of cost, points, metric, or metric_matrix".into(),
        ));
    }
    if let Some(c) = cost {
        let r = c.len();
        let k = c.first().map_or(0, Vec::len);
        if c.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidConfig(
                "cost rows have unequal lengths".into(),
            ));
        }
        return Ok(Geometry::Cost(CostMatrix::from_values(
            r,
            k,
            c.into_iter().flatten().collect(),
        )?));
    }
    if rows != cols {
        return Err(Error::InvalidConfig(format!(
            "a shared metric space needs equal marginal sizes, got {rows} and {cols}"
        )));
    }
    if let Some(pts) = points {
        if pts.len() != rows {
            return Err(Error::LengthMismatch {
                expected: rows,
                got: pts.len(),
            });
        }
        return Ok(Geometry::Space(FiniteMetricSpace::euclidean(pts)?));
    }
    if let Some(m) = metric_matrix {
        if m.len() != rows {
            return Err(Error::LengthMismatch {
                expected: rows,
                got: m.len(),
            });
        }
        return Ok(Geometry::Space(FiniteMetricSpace::from_matrix(m)?));
    }
    match metric.as_deref() {
        Some("discrete") => Ok(Geometry::Space(FiniteMetricSpace::discrete(rows)?)),
        Some(other) => Err(Error::InvalidConfig(format!(
            "unknown metric \"{other}\" (only \"discrete\" is available by name; use points or metric_matrix otherwise)"
        ))),
        None => unreachable!("guarded by the exactly-one check"),
    }
}

// -------------------------------------------------------------------- ot --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OtInput {
    p: Vec<f64>,
    q: Vec<f64>,
    #[serde(default)]
    cost: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    metric: Option<String>,
    #[serde(default)]
    metric_matrix: Option<Vec<Vec<f64>>>,
}

fn coupling_rows(c: &dualgap::ot::Coupling) -> Vec<Vec<f64>> {
    (0..c.rows())
        .map(|i| (0..c.cols()).map(|j| c.get(i, j)).collect())
        .collect()
}

fn potentials_json(p: &dualgap::ot::DualPotentials) -> serde_json::Value {
    if let Some((phi, psi)) = p.as_pair() {
        json!({ "phi": phi, "psi": psi })
    } else if let Some((h, modulus)) = p.as_lipschitz() {
        json!({ "h": h, "modulus": modulus })
    } else {
        serde_json::Value::Null
    }
}

fn run_ot(
    cli: &Cli,
    input: &Path,
    method: OtMethod,
    epsilon: Option<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<u8> {
    let parsed: OtInput = parse_json(input)?;
    let p = DiscreteDistribution::new(parsed.p)?;
    let q = DiscreteDistribution::new(parsed.q)?;
    let geometry = resolve_geometry(
        parsed.cost,
        parsed.points,
        parsed.metric,
        parsed.metric_matrix,
        p.len(),
        q.len(),
    )?;
    let output = match method {
        OtMethod::Primal => {
            let sol = wasserstein_primal(&p, &q, &geometry.cost())?;
            json!({
                "value": sol.value,
                "coupling": coupling_rows(&sol.coupling),
                "potentials": sol.potentials.as_ref().map(potentials_json),
                "iters": sol.iters,
            })
        }
        OtMethod::Dual => {
            let (value, potentials) = kantorovich_dual(&p, &q, geometry.space()?)?;
            json!({
                "value": value,
                "potentials": potentials_json(&potentials),
            })
        }
        OtMethod::Sinkhorn => {
            let eps = epsilon.ok_or_else(|| {
                Error::InvalidConfig("the sinkhorn method needs --epsilon".into())
            })?;
            let cfg = SinkhornConfig { tol, max_iters };
            let sol = sinkhorn(&p, &q, &geometry.cost(), eps, &cfg)?;
            json!({
                "value": sol.value,
                "coupling": coupling_rows(&sol.coupling),
                "iters": sol.iters,
            })
        }
    };
    let value = output["value"].as_f64().unwrap_or(f64::NAN);
    write_output(
        &cli.out,
        &format!("{}\n", serde_json::to_string_pretty(&output).expect("json")),
    )?;
    note(cli.quiet, &format!("transport value {value:.12e}"));
    Ok(0)
}

// ------------------------------------------------------------- objective --

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveInput {
    p_x: Vec<f64>,
    #[serde(default)]
    p_g: Option<Vec<f64>>,
    #[serde(default)]
    p_z: Option<Vec<f64>>,
    #[serde(default)]
    map: Option<Vec<usize>>,
    #[serde(default)]
    points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    metric: Option<String>,
    #[serde(default)]
    metric_matrix: Option<Vec<Vec<f64>>>,
}

fn outcome_json(
    out: &SolveOutcome,
    encoder: Option<&dualgap::duality::Encoder>,
) -> serde_json::Value {
    let mut v = json!({
        "value": out.value,
        "q": out.q.weights(),
        "iters": out.iters,
        "certified_gap": out.certified_gap,
    });
    if let Some(e) = encoder {
        let rows: Vec<&[f64]> = (0..e.rows()).map(|x| e.row(x)).collect();
        v["encoder"] = json!(rows);
    }
    v
}

fn run_objective(
    cli: &Cli,
    kind: ObjectiveKind,
    input: &Path,
    f_name: &str,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<u8> {
    let ObjectiveInput {
        p_x,
        p_g,
        p_z,
        map,
        points,
        metric,
        metric_matrix,
    } = parse_json(input)?;
    let p_x = DiscreteDistribution::new(p_x)?;
    let n = p_x.len();
    let geometry = resolve_geometry(None, points, metric, metric_matrix, n, n)?;
    let space = geometry.space()?;
    let f = Generator::from_name(f_name)?;
    let cfg = SolverConfig {
        tol,
        max_iters,
        ..SolverConfig::default()
    };

    let latent = || -> Result<(DiscreteDistribution, PushforwardMap)> {
        let p_z = p_z
            .clone()
            .ok_or_else(|| Error::InvalidConfig("this kind needs p_z".into()))?;
        let map = map
            .clone()
            .ok_or_else(|| Error::InvalidConfig("this kind needs map".into()))?;
        Ok((
            DiscreteDistribution::new(p_z)?,
            PushforwardMap::new(map, n)?,
        ))
    };

    let output = match kind {
        ObjectiveKind::Fgan => {
            let p_g = p_g.ok_or_else(|| Error::InvalidConfig("kind fgan needs p_g".into()))?;
            let p_g = DiscreteDistribution::new(p_g)?;
            let out = restricted_fgan(&p_x, &p_g, &f, lambda, space, &cfg)?;
            outcome_json(&out, None)
        }
        ObjectiveKind::Wae => {
            let (p_z, g) = latent()?;
            let (out, encoder) = wae_objective(&p_x, &p_z, &g, space, &f, lambda, &cfg)?;
            outcome_json(&out, Some(&encoder))
        }
        ObjectiveKind::Fwae => {
            let (p_z, g) = latent()?;
            let (out, encoder) = wae_objective(&p_x, &p_z, &g, space, &f, lambda, &cfg)?;
            let value = fwae_objective(&p_x, &p_z, &g, space, &f, lambda, &cfg)?;
            let mut v = outcome_json(&out, Some(&encoder));
            v["value"] = json!(value);
            v
        }
    };
    let value = output["value"].as_f64().unwrap_or(f64::NAN);
    write_output(
        &cli.out,
        &format!("{}\n", serde_json::to_string_pretty(&output).expect("json")),
    )?;
    note(cli.quiet, &format!("objective value {value:.12e}"));
    Ok(0)
}

// ---------------------------------------------------------------- verify --

struct SuiteDefaults {
    generator: &'static str,
    metric: &'static str,
    map: &'static str,
}

fn suite_defaults(suite: SuiteName) -> SuiteDefaults {
    match suite {
        SuiteName::Theorem1 => SuiteDefaults {
            generator: "tv",
            metric: "euclidean",
            map: "random-surjection",
        },
        SuiteName::Theorem2 => SuiteDefaults {
            generator: "chi2",
            metric: "discrete",
            map: "permutation",
        },
        SuiteName::Theorem3 => SuiteDefaults {
            generator: "tv",
            metric: "euclidean",
            map: "permutation",
        },
        SuiteName::Theorem5 => SuiteDefaults {
            generator: "tv",
            metric: "euclidean",
            map: "random-surjection",
        },
        SuiteName::Lemmas => SuiteDefaults {
            generator: "kl",
            metric: "euclidean",
            map: "random-surjection",
        },
    }
}

fn suite_cli_name(suite: SuiteName) -> &'static str {
    match suite {
        SuiteName::Theorem1 => "theorem1",
        SuiteName::Theorem2 => "theorem2",
        SuiteName::Theorem3 => "theorem3",
        SuiteName::Theorem5 => "theorem5",
        SuiteName::Lemmas => "lemmas",
    }
}

fn summarize_suite(quiet: bool, r: &TheoremReport) {
    note(
        quiet,
        &format!(
            "{}: {} passed, {} failed, {} skipped -> {}",
            r.suite,
            r.passed,
            r.failed,
            r.skipped,
            if r.pass { "PASS" } else { "FAIL" }
        ),
    );
}

#[allow(clippy::too_many_arguments)]
fn run_verify(
    cli: &Cli,
    start: Instant,
    suite: SuiteName,
    instances: usize,
    seed: u64,
    generator: Option<&str>,
    metric: Option<&str>,
    map: Option<&str>,
    nx: usize,
    nz: usize,
    lambda: f64,
    epsilons: Option<&[f64]>,
) -> Result<u8> {
    let defaults = suite_defaults(suite);
    let generator_name = generator.unwrap_or(defaults.generator).to_string();
    let metric_name = metric.unwrap_or(defaults.metric).to_string();
    let map_name = map.unwrap_or(defaults.map).to_string();
    let f = Generator::from_name(&generator_name)?;
    let metric_kind = MetricKind::from_name(&metric_name)?;
    let map_kind = MapKind::from_name(&map_name)?;
    let eps: Vec<f64> = epsilons.map_or_else(|| vec![1.0, 0.1, 0.01], <[f64]>::to_vec);
    let spec = InstanceSpec::new(nx, nz, metric_kind, f, lambda, map_kind, seed)?;

    let mut config = json!({
        "suite": suite_cli_name(suite),
        "instances": instances,
        "seed": seed,
        "generator": generator_name,
        "metric": metric_name,
        "map": map_name,
        "nx": nx,
        "nz": nz,
        "lambda": lambda,
    });
    let (results, pass) = match suite {
        SuiteName::Theorem1 => {
            let r = theorems::verify_theorem1(&spec, instances)?;
            summarize_suite(cli.quiet, &r);
            (serde_json::to_value(&r).expect("report"), r.pass)
        }
        SuiteName::Theorem2 => {
            let r = theorems::verify_theorem2(&spec, instances)?;
            summarize_suite(cli.quiet, &r);
            (serde_json::to_value(&r).expect("report"), r.pass)
        }
        SuiteName::Theorem3 => {
            let r = theorems::verify_theorem3(&spec, instances)?;
            summarize_suite(cli.quiet, &r);
            (serde_json::to_value(&r).expect("report"), r.pass)
        }
        SuiteName::Theorem5 => {
            config["epsilons"] = json!(eps);
            let r = theorems::verify_theorem5(&spec, instances, &eps)?;
            summarize_suite(cli.quiet, &r);
            (serde_json::to_value(&r).expect("report"), r.pass)
        }
        SuiteName::Lemmas => {
            // The encoder-reparametrization lemma is stated for invertible
            // decoders, so that leg always runs on permutation maps over a
            // square universe; the other two legs use the requested map.
            let contraction = theorems::verify_data_processing(&spec, instances)?;
            summarize_suite(cli.quiet, &contraction);
            let agreement = theorems::verify_fwae_equals_wae(&spec, instances)?;
            summarize_suite(cli.quiet, &agreement);
            let invertible_spec = InstanceSpec::new(
                nx,
                nx,
                metric_kind,
                spec.generator.clone(),
                lambda,
                MapKind::Permutation,
                seed,
            )?;
            let encoder = theorems::verify_reparametrization(&invertible_spec, instances)?;
            summarize_suite(cli.quiet, &encoder);
            let pass = contraction.pass && agreement.pass && encoder.pass;
            (json!([contraction, agreement, encoder]), pass)
        }
    };

    let report = Report::new(
        "verify",
        config,
        results,
        pass,
        start.elapsed().as_millis() as u64,
    );
    write_output(&cli.out, &report.render())?;
    Ok(u8::from(!pass))
}

// ------------------------------------------------------------- genbounds --

fn run_genbounds(
    cli: &Cli,
    dist: &str,
    ns: &[usize],
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<u8> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let spec = SampledDistributionSpec::from_name(dist)?;
    let curve = empirical_ipm_curve(&spec, ns, trials, seed)?;
    let diameter = spec.diameter();
    let rows: Vec<Vec<CsvCell>> = curve
        .rows
        .iter()
        .map(|r| {
            vec![
                CsvCell::Count(r.n),
                CsvCell::Count(r.trial),
                CsvCell::Value(r.ipm),
                CsvCell::Value(mcdiarmid_bound(diameter, r.n, delta)),
            ]
        })
        .collect();
    let csv = emit_csv(&["n", "trial", "ipm", "bound_term"], &rows)?;
    write_output(&cli.out, &csv)?;
    let medians: Vec<String> = curve
        .medians()
        .iter()
        .map(|(n, m)| format!("n={n}: {m:.6e}"))
        .collect();
    note(
        cli.quiet,
        &format!(
            "fitted log-log slope {:.4}; medians {}",
            curve.slope,
            medians.join(", ")
        ),
    );
    Ok(0)
}

// --------------------------------------------------------------- brenier --

fn parse_domain(s: &str) -> Result<SourceDomain> {
    let split_coords = |coords: &str, context: &str| -> Result<(Vec<f64>, Vec<f64>)> {
        let vals: Vec<f64> = coords
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("domain {context}: \"{t}\" is not a number"))
                })
            })
            .collect::<Result<_>>()?;
        if vals.is_empty() || !vals.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "domain {context}: need lo,hi pairs per coordinate, got {} numbers",
                vals.len()
            )));
        }
        let lo = vals.iter().step_by(2).copied().collect();
        let hi = vals.iter().skip(1).step_by(2).copied().collect();
        Ok((lo, hi))
    };
    if let Some(rest) = s.strip_prefix("box:") {
        let (lo, hi) = split_coords(rest, "box")?;
        SourceDomain::uniform_box(lo, hi)
    } else if let Some(rest) = s.strip_prefix("grid:") {
        let (coords, side) = rest.rsplit_once(':').ok_or_else(|| {
            Error::InvalidConfig("grid domain needs grid:lo1,hi1,...:side".into())
        })?;
        let side: usize = side
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("grid side \"{side}\" is not an integer")))?;
        let (lo, hi) = split_coords(coords, "grid")?;
        SourceDomain::uniform_grid(lo, hi, side)
    } else {
        Err(Error::InvalidConfig(format!(
            "unknown domain \"{s}\" (want box:lo1,hi1,... or grid:lo1,hi1,...:side)"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn run_brenier(
    cli: &Cli,
    atoms_path: &Path,
    weights_path: &Path,
    domain: &str,
    samples: usize,
    tol: f64,
    seed: u64,
    max_iters: usize,
    step: f64,
) -> Result<u8> {
    let atoms = parse_float_rows(atoms_path)?;
    let weights: Vec<f64> = parse_float_rows(weights_path)?
        .into_iter()
        .flatten()
        .collect();
    let source = parse_domain(domain)?;
    let problem = SemiDiscreteProblem::new(source, atoms, weights)?;
    let cfg = FitConfig {
        n_samples: samples,
        max_iters,
        step,
        tol,
        seed,
    };
    let fit = fit_potential(&problem, &cfg)?;
    let check = pushforward_check(&problem, &fit.potential, samples, seed, tol)?;
    let output = json!({
        "h": fit.potential.values(),
        "residual": fit.residual,
        "converged": fit.converged,
        "iters": fit.iters,
        "tv_error": check.tv_error,
        "pass": check.pass,
    });
    write_output(
        &cli.out,
        &format!("{}\n", serde_json::to_string_pretty(&output).expect("json")),
    )?;
    note(
        cli.quiet,
        &format!(
            "fit residual {:.3e} ({}), pushforward tv {:.3e} -> {}",
            fit.residual,
            if fit.converged {
                "converged"
            } else {
                "not converged"
            },
            check.tv_error,
            if check.pass { "PASS" } else { "FAIL" }
        ),
    );
    if !fit.converged {
        return Ok(3);
    }
    Ok(u8::from(!check.pass))
}

// ---------------------------------------------------------------- report --

fn run_report(cli: &Cli, input: &Path) -> Result<u8> {
    let report: Report = parse_json(input)?;
    note(
        cli.quiet,
        &format!(
            "{} report, schema {}, {} ms: {}",
            report.payload.command,
            report.payload.schema_version,
            report.meta.wall_clock_ms,
            if report.payload.pass { "PASS" } else { "FAIL" }
        ),
    );
    Ok(u8::from(!report.payload.pass))
}
