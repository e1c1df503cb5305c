//! Command-line front end.
//!
//! Subcommands: `fit`, `cv`, `path`, `stepwise`, `gof-test`, `simulate`,
//! `bench`. Models are emitted as JSON, curves and paths as TSV. Every
//! output embeds the tool version, the full flag set, the seed, and a hash
//! of the input file, so identical invocations produce byte-identical
//! output.
//!
//! Exit codes: 0 on success, 1 on domain or runtime errors, 2 on usage
//! errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;

use crate::cv::{self, CvRule, PathSpec};
use crate::data::{self, Dataset, Family};
use crate::error::{Error, Result};
use crate::inference;
use crate::logratio::{self, FitMeta, ModelJson};
use crate::simulate::{self, Method, SimModel, SimSpec};
use crate::solver;
use crate::stepwise;

#[derive(Debug, Parser)]
#[command(
    name = "lrlasso",
    version,
    about = "Sparse log-ratio regression for compositional data"
)]
pub struct Cli {
    /// Cap the rayon worker count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitMethod {
    Single,
    TwoStage,
    TwoStageConservative,
    ApproxFs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GofMethod {
    F,
    Selective,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    pub input: PathBuf,
    /// Response column name.
    #[arg(long)]
    pub response: String,
    /// Group column for blocked cross-validation.
    #[arg(long)]
    pub group: Option<String>,
    /// Constant added to every feature cell before the log transform.
    #[arg(long, default_value_t = 0.0)]
    pub pseudocount: f64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a log-ratio model and write it as JSON.
    Fit {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, value_enum)]
        method: FitMethod,
        /// Expanded-ratio penalty (the constrained fit runs at lambda/2).
        #[arg(long)]
        lambda: Option<f64>,
        /// Stepwise steps (two-stage pruning budget or approx-fs steps).
        #[arg(long)]
        k: Option<usize>,
        /// Augment with an all-ones feature so unpaired log terms compete.
        #[arg(long)]
        unpaired: bool,
    },
    /// Cross-validate a fit and write the tuning curve as TSV.
    Cv {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, value_enum)]
        method: FitMethod,
        #[arg(long, default_value_t = 30)]
        n_lambda: usize,
        #[arg(long, default_value_t = 1e-3)]
        lambda_min_ratio: f64,
        /// Largest stepwise budget in the (lambda, k) grid.
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        /// Folds; defaults to 10 (capped at the group count when blocked).
        #[arg(long)]
        folds: Option<usize>,
        /// Use the one-standard-error rule instead of the minimum.
        #[arg(long)]
        one_se: bool,
    },
    /// Constrained-lasso coefficient path as TSV, with the CV choice marked.
    Path {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, default_value_t = 50)]
        n_lambda: usize,
        #[arg(long, default_value_t = 1e-3)]
        lambda_min_ratio: f64,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Approximate forward stepwise trace as TSV.
    Stepwise {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        k: usize,
    },
    /// Goodness-of-fit test of the log-ratio (sum-zero) hypothesis.
    GofTest {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long, value_enum)]
        test: GofMethod,
        /// Lasso penalty for the selective test.
        #[arg(long)]
        lambda: Option<f64>,
        /// Noise standard deviation; estimated from the full OLS fit when
        /// omitted.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Simulation experiments, emitted as TSV plus a JSON summary.
    Simulate {
        /// Which experiment: 1, 2, pvalues, or bench.
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        p: usize,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        /// Comma-separated amplitude grid.
        #[arg(long, default_value = "0,0.5,1,1.5,2,3")]
        s_grid: String,
        /// Methods to run (comma-separated names); defaults to all seven.
        #[arg(long)]
        methods: Option<String>,
        /// Lasso penalty for the p-value study.
        #[arg(long, default_value_t = 60.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Runtime comparison of implicit-ratio vs expanded-matrix fitting.
    Bench {
        /// Comma-separated raw feature counts.
        #[arg(long, default_value = "100,200,400")]
        p_grid: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Memory cap in MiB for the expanded ratio matrix.
        #[arg(long, default_value_t = 1024)]
        mem_cap_mib: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Usage problems exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// FNV-1a hash of the input file, recorded in output metadata.
fn content_hash(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
            format!("{h:016x}")
        }
        Err(_) => "unreadable".into(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta {
    version: String,
    args: Vec<String>,
    seed: u64,
    input_hash: String,
}

impl RunMeta {
    fn new(seed: u64, input: Option<&Path>) -> Self {
        RunMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            args: std::env::args().collect(),
            seed,
            input_hash: input.map(content_hash).unwrap_or_else(|| "-".into()),
        }
    }

    fn tsv_header(&self) -> String {
        format!(
            "# version={}\n# args={}\n# seed={}\n# input_hash={}\n",
            self.version,
            self.args.join(" "),
            self.seed,
            self.input_hash
        )
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, content)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn load_input(io: &InputArgs) -> CliResult<Dataset> {
    let d = data::load_csv(
        &io.input,
        &io.response,
        io.group.as_deref(),
        io.pseudocount,
    )?;
    Ok(d.with_family(io.family.into())?)
}

fn default_folds(d: &Dataset, requested: Option<usize>) -> usize {
    match requested {
        Some(k) => k,
        None => match &d.group_ids {
            Some(groups) => {
                let mut distinct: Vec<&String> = Vec::new();
                for g in groups {
                    if !distinct.contains(&g) {
                        distinct.push(g);
                    }
                }
                distinct.len().clamp(2, 10)
            }
            None => 10,
        },
    }
}

/// Table-style listing of the fitted ratios, largest coefficients first.
fn ratio_table(model: &ModelJson) -> String {
    let mut rows: Vec<&logratio::PairJson> = model.pairs.iter().collect();
    rows.sort_by(|a, b| b.theta.abs().partial_cmp(&a.theta.abs()).unwrap());
    let mut out = String::new();
    out.push_str(&format!("intercept\t{:.6}\n", model.intercept));
    for pr in rows {
        let name = if pr.name_k == data::ONES_FEATURE {
            format!("log({})", pr.name_j)
        } else {
            format!("log({} / {})", pr.name_j, pr.name_k)
        };
        out.push_str(&format!("{name}\t{:.6}\n", pr.theta));
    }
    out
}

#[derive(Serialize)]
struct FitOutput {
    #[serde(flatten)]
    model: ModelJson,
    run_meta: RunMeta,
}

fn cmd_fit(
    io: &InputArgs,
    method: FitMethod,
    lambda: Option<f64>,
    k: Option<usize>,
    unpaired: bool,
) -> CliResult<()> {
    let mut d = load_input(io)?;
    if unpaired {
        d = data::augment_ones(&d)?;
    }
    let family = d.family;
    let meta = RunMeta::new(io.seed, Some(&io.input));

    let need_lambda = || -> CliResult<f64> {
        lambda.ok_or_else(|| CliError::Usage("--lambda is required for this method".into()))
    };
    let (theta, fit_meta) = match method {
        FitMethod::Single => {
            let w = data::log_design(&d, true, false)?;
            let lambda = need_lambda()?;
            let (theta, _, report) = logratio::fit_single_stage(&w, &d.y, lambda, family, false)?;
            (
                theta,
                FitMeta {
                    lambda: Some(lambda),
                    gamma: Some(report.gamma),
                    k: None,
                },
            )
        }
        FitMethod::TwoStage | FitMethod::TwoStageConservative => {
            let conservative = matches!(method, FitMethod::TwoStageConservative);
            let w = data::log_design(&d, true, false)?;
            let lambda = need_lambda()?;
            let k = k.ok_or_else(|| CliError::Usage("--k is required for two-stage fits".into()))?;
            let (theta, report) =
                logratio::fit_two_stage(&w, &d.y, lambda, k, family, conservative)?;
            if let Some(warning) = &report.warning {
                eprintln!("warning: {warning}");
            }
            (
                theta,
                FitMeta {
                    lambda: Some(lambda),
                    gamma: Some(report.gamma),
                    k: report.k,
                },
            )
        }
        FitMethod::ApproxFs => {
            if family == Family::Binomial {
                return Err(CliError::Usage(
                    "approx-fs fitting is Gaussian-only".into(),
                ));
            }
            let k = k.ok_or_else(|| CliError::Usage("--k is required for approx-fs".into()))?;
            let w = data::log_design(&d, true, true)?;
            let trace = stepwise::approx_forward_stepwise(&w, &d.y, k)?;
            let (sel, coefs, mu) = trace.model_at(k);
            let mut theta = logratio::PairCoefficients::new(d.p(), 0.0);
            let mut intercept = mu;
            for (c, &(a, b)) in sel.iter().enumerate() {
                theta
                    .insert(a, b, coefs[c])
                    .map_err(CliError::Run)?;
                intercept -= coefs[c] * w.ratio_mean(a, b);
            }
            theta.intercept = intercept;
            (
                theta,
                FitMeta {
                    lambda: None,
                    gamma: None,
                    k: Some(sel.len()),
                },
            )
        }
    };
    let model = ModelJson::from_pairs(&theta, &d.feature_names, family, fit_meta)?;
    eprint!("{}", ratio_table(&model));
    let out = FitOutput {
        model,
        run_meta: meta,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Domain(e.to_string()))?;
    write_output(io.output.as_deref(), &(json + "\n"))?;
    Ok(())
}

fn curve_tsv(curve: &cv::CvCurve, meta: &RunMeta) -> String {
    let mut out = meta.tsv_header();
    out.push_str("penalty\tk\tmean_error\tse_error\tchosen\n");
    for (i, pt) in curve.grid.iter().enumerate() {
        out.push_str(&format!(
            "{:.8e}\t{}\t{:.8}\t{:.8}\t{}\n",
            pt.penalty,
            pt.steps.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            curve.mean_error[i],
            curve.se_error[i],
            (i == curve.chosen) as u8
        ));
    }
    out
}

#[derive(Serialize)]
struct CvSummary {
    rule: CvRule,
    chosen_penalty: f64,
    chosen_k: Option<usize>,
    mean_error: f64,
    se_error: f64,
    model: ModelJson,
    run_meta: RunMeta,
}

#[allow(clippy::too_many_arguments)]
fn cmd_cv(
    io: &InputArgs,
    method: FitMethod,
    n_lambda: usize,
    lambda_min_ratio: f64,
    k_max: usize,
    folds_req: Option<usize>,
    one_se: bool,
) -> CliResult<()> {
    let d = load_input(io)?;
    let family = d.family;
    let meta = RunMeta::new(io.seed, Some(&io.input));
    let k_folds = default_folds(&d, folds_req);
    let folds = cv::make_folds(&d, k_folds, io.seed)?;
    let w_raw = data::log_design(&d, false, false)?;
    let rule = if one_se { CvRule::OneSe } else { CvRule::Min };
    let spec = PathSpec {
        n_lambda,
        lambda_min_ratio,
        rule,
    };

    let (curve, theta, fit_meta) = match method {
        FitMethod::Single => {
            let curve = cv::cv_constrained_lasso(&w_raw, &d.y, &folds, &spec, family)?;
            let gamma = curve.chosen_point().penalty;
            let w = data::log_design(&d, true, false)?;
            let (theta, _, report) =
                logratio::fit_single_stage(&w, &d.y, 2.0 * gamma, family, false)?;
            (
                curve,
                theta,
                FitMeta {
                    lambda: Some(2.0 * gamma),
                    gamma: Some(report.gamma),
                    k: None,
                },
            )
        }
        FitMethod::TwoStage | FitMethod::TwoStageConservative => {
            let conservative = matches!(method, FitMethod::TwoStageConservative);
            let centered = data::log_design(&d, true, false)?;
            let gmax = solver::gamma_max(&centered.w, &d.y, family).max(1e-300);
            let ratio = lambda_min_ratio.powf(1.0 / (n_lambda as f64 - 1.0));
            let lambdas: Vec<f64> = (0..n_lambda)
                .map(|i| 2.0 * gmax * ratio.powi(i as i32))
                .collect();
            let k_grid: Vec<usize> = (0..=k_max).collect();
            let curve = cv::cv_two_stage(
                &w_raw,
                &d.y,
                &folds,
                &lambdas,
                &k_grid,
                family,
                conservative,
                rule,
            )?;
            let point = curve.chosen_point();
            let (theta, report) = cv::fit_two_stage_at(&w_raw, &d.y, point, family, conservative)?;
            (
                curve,
                theta,
                FitMeta {
                    lambda: Some(point.penalty),
                    gamma: Some(report.gamma),
                    k: report.k,
                },
            )
        }
        FitMethod::ApproxFs => {
            return Err(CliError::Usage(
                "cv for approx-fs is not provided; use `stepwise` and pick k from the trace"
                    .into(),
            ))
        }
    };

    let tsv = curve_tsv(&curve, &meta);
    write_output(io.output.as_deref(), &tsv)?;
    let point = curve.chosen_point();
    let summary = CvSummary {
        rule,
        chosen_penalty: point.penalty,
        chosen_k: point.steps,
        mean_error: curve.mean_error[curve.chosen],
        se_error: curve.se_error[curve.chosen],
        model: ModelJson::from_pairs(&theta, &d.feature_names, family, fit_meta)?,
        run_meta: meta,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Domain(e.to_string()))?;
    if io.output.is_some() {
        println!("{json}");
    } else {
        eprintln!("{json}");
    }
    Ok(())
}

fn cmd_path(
    io: &InputArgs,
    n_lambda: usize,
    lambda_min_ratio: f64,
    folds_req: Option<usize>,
) -> CliResult<()> {
    let d = load_input(io)?;
    let family = d.family;
    let meta = RunMeta::new(io.seed, Some(&io.input));
    let w = data::log_design(&d, true, false)?;
    let path = solver::lambda_path(&w, &d.y, family, n_lambda, lambda_min_ratio)?;

    // CV-chosen gamma on the same grid
    let folds = cv::make_folds(&d, default_folds(&d, folds_req), io.seed)?;
    let w_raw = data::log_design(&d, false, false)?;
    let spec = PathSpec {
        n_lambda,
        lambda_min_ratio,
        rule: CvRule::Min,
    };
    let curve = cv::cv_constrained_lasso(&w_raw, &d.y, &folds, &spec, family)?;
    let chosen_gamma = curve.chosen_point().penalty;

    let mut out = meta.tsv_header();
    out.push_str(&format!("# chosen_gamma={chosen_gamma:.8e}\n"));
    out.push_str("gamma\tfeature\tcoefficient\n");
    for (gamma, sol) in &path {
        let sum: f64 = sol.coefficients.sum();
        debug_assert!(sum.abs() <= 1e-6, "constraint violated along path: {sum}");
        for j in 0..d.p() {
            out.push_str(&format!(
                "{:.8e}\t{}\t{:.8e}\n",
                gamma, d.feature_names[j], sol.coefficients[j]
            ));
        }
    }
    write_output(io.output.as_deref(), &out)?;
    Ok(())
}

fn cmd_stepwise(io: &InputArgs, k: usize) -> CliResult<()> {
    let d = load_input(io)?;
    if d.family == Family::Binomial {
        return Err(CliError::Usage("stepwise tracing is Gaussian-only".into()));
    }
    let meta = RunMeta::new(io.seed, Some(&io.input));
    let w = data::log_design(&d, true, true)?;
    let trace = stepwise::approx_forward_stepwise(&w, &d.y, k)?;
    let mut out = meta.tsv_header();
    out.push_str("step\tratio\tresidual_norm\tseconds\n");
    out.push_str(&format!("0\t-\t{:.8}\t0\n", trace.residual_norms[0]));
    for (i, &(a, b)) in trace.selected.iter().enumerate() {
        out.push_str(&format!(
            "{}\tlog({} / {})\t{:.8}\t{:.6}\n",
            i + 1,
            d.feature_names[a],
            d.feature_names[b],
            trace.residual_norms[i + 1],
            trace.runtime_per_step[i].as_secs_f64()
        ));
    }
    if trace.stopped_early {
        out.push_str(&format!("# stopped_early={:?}\n", trace.stop_reason));
    }
    write_output(io.output.as_deref(), &out)?;
    Ok(())
}

#[derive(Serialize)]
struct GofOutput {
    method: &'static str,
    statistic: f64,
    p_one_sided: f64,
    p_two_sided: f64,
    #[serde(rename = "M")]
    support: Vec<usize>,
    #[serde(rename = "s")]
    signs: Vec<f64>,
    vminus: Option<f64>,
    vplus: Option<f64>,
    sigma: Option<f64>,
    sigma_estimated: bool,
    run_meta: RunMeta,
}

fn cmd_gof(
    io: &InputArgs,
    test: GofMethod,
    lambda: Option<f64>,
    sigma: Option<f64>,
) -> CliResult<()> {
    let d = load_input(io)?;
    if d.family == Family::Binomial {
        return Err(CliError::Usage(
            "the goodness-of-fit tests assume a Gaussian response".into(),
        ));
    }
    let meta = RunMeta::new(io.seed, Some(&io.input));
    let out = match test {
        GofMethod::F => {
            let w = data::log_design(&d, false, false)?;
            let (f, p) = inference::f_test_sum_zero(&w, &d.y)?;
            GofOutput {
                method: "f",
                statistic: f,
                p_one_sided: p,
                p_two_sided: p,
                support: Vec::new(),
                signs: Vec::new(),
                vminus: None,
                vplus: None,
                sigma: None,
                sigma_estimated: false,
                run_meta: meta,
            }
        }
        GofMethod::Selective => {
            let lambda = lambda.ok_or_else(|| {
                CliError::Usage("--lambda is required for the selective test".into())
            })?;
            let w = data::log_design(&d, true, false)?;
            let (sigma, estimated) = match sigma {
                Some(s) => (s, false),
                None => (estimate_sigma(&w, &d.y)?, true),
            };
            let event = inference::lasso_selection_event(&w.w, &d.y, lambda)?;
            let pivot = inference::selective_sum_zero_test(&event, &w.w, &d.y, sigma)?;
            GofOutput {
                method: "selective",
                statistic: pivot.statistic,
                p_one_sided: pivot.p_one_sided,
                p_two_sided: pivot.p_two_sided,
                support: event.support.iter().map(|j| j + 1).collect(),
                signs: event.signs.clone(),
                vminus: Some(pivot.vminus),
                vplus: Some(pivot.vplus),
                sigma: Some(sigma),
                sigma_estimated: estimated,
                run_meta: meta,
            }
        }
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Domain(e.to_string()))?;
    write_output(io.output.as_deref(), &(json + "\n"))?;
    Ok(())
}

/// Residual standard deviation of the full OLS fit, used when the selective
/// test is run without a known sigma.
fn estimate_sigma(w: &data::LogDesign, y: &Array1<f64>) -> Result<f64> {
    let n = w.n();
    let p = w.p();
    if n <= p + 1 {
        return Err(Error::Domain(
            "cannot estimate sigma when n <= p + 1; pass --sigma".into(),
        ));
    }
    let mut design = ndarray::Array2::ones((n, p + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&w.w);
    let coef = crate::linalg::least_squares(&design, y)?;
    let fitted = design.dot(&coef);
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    Ok((rss / (n - p - 1) as f64).sqrt())
}

#[derive(Serialize)]
struct SimSummary {
    experiment: String,
    verdicts: serde_json::Value,
    run_meta: RunMeta,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    experiment: &str,
    n: usize,
    p: usize,
    reps: usize,
    s_grid: &str,
    methods: Option<&str>,
    lambda: f64,
    seed: u64,
    output: Option<&Path>,
) -> CliResult<()> {
    let meta = RunMeta::new(seed, None);
    let parse_f64_list = |s: &str| -> CliResult<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad grid entry '{t}'")))
            })
            .collect()
    };
    match experiment {
        "1" | "2" => {
            let model = if experiment == "1" {
                SimModel::TwoRatio
            } else {
                SimModel::Misspecified
            };
            let methods = match methods {
                None => Method::all(),
                Some(list) => list
                    .split(',')
                    .map(|name| {
                        Method::all()
                            .into_iter()
                            .find(|m| m.name() == name.trim())
                            .ok_or_else(|| CliError::Usage(format!("unknown method '{name}'")))
                    })
                    .collect::<CliResult<Vec<_>>>()?,
            };
            let spec = SimSpec {
                n,
                p,
                s_grid: parse_f64_list(s_grid)?,
                model,
                reps,
                seed,
                methods,
            };
            let result = simulate::run_experiment(&spec)?;
            let mut tsv = meta.tsv_header();
            tsv.push_str(&result.to_tsv());
            write_output(output, &tsv)?;

            // headline ratio checks when both methods are present
            let mut verdicts = serde_json::Map::new();
            for &s in &spec.s_grid {
                if let (Some(two), Some(van)) = (
                    result.row(Method::TwoStage, s),
                    result.row(Method::VanillaLasso, s),
                ) {
                    let ratio = two.test_mse / van.test_mse;
                    verdicts.insert(
                        format!("mse_ratio_s{s}"),
                        serde_json::json!({
                            "two_stage_over_vanilla": ratio,
                            "fewer_nulls": two.nulls_selected < van.nulls_selected,
                        }),
                    );
                }
            }
            let summary = SimSummary {
                experiment: experiment.to_string(),
                verdicts: serde_json::Value::Object(verdicts),
                run_meta: meta,
            };
            let json =
                serde_json::to_string_pretty(&summary).map_err(|e| Error::Domain(e.to_string()))?;
            if output.is_some() {
                println!("{json}");
            } else {
                eprintln!("{json}");
            }
            Ok(())
        }
        "pvalues" => {
            let mut tsv = meta.tsv_header();
            tsv.push_str("model\trep\tp_one_sided\n");
            let mut verdicts = serde_json::Map::new();
            for (label, model) in [
                ("null_ratio", SimModel::PvalueNullRatio),
                ("null_single", SimModel::PvalueNullSingle),
            ] {
                let study = simulate::run_pvalue_study(n, p, model, reps, lambda, 1.0, seed)?;
                for (i, pv) in study.pvalues.iter().enumerate() {
                    tsv.push_str(&format!("{label}\t{i}\t{pv:.8}\n"));
                }
                verdicts.insert(
                    label.to_string(),
                    serde_json::json!({
                        "ks_statistic": study.ks_statistic,
                        "ks_critical_1pct": study.ks_critical_1pct,
                        "uniform_at_1pct": study.ks_statistic <= study.ks_critical_1pct,
                        "mean_p": study.mean_p,
                        "conditioned": study.conditioned,
                        "total": study.total,
                    }),
                );
            }
            write_output(output, &tsv)?;
            let summary = SimSummary {
                experiment: "pvalues".into(),
                verdicts: serde_json::Value::Object(verdicts),
                run_meta: meta,
            };
            let json =
                serde_json::to_string_pretty(&summary).map_err(|e| Error::Domain(e.to_string()))?;
            if output.is_some() {
                println!("{json}");
            } else {
                eprintln!("{json}");
            }
            Ok(())
        }
        "bench" => cmd_bench("100,200,400", n, 10, reps.clamp(1, 9), seed, 1024, output),
        other => Err(CliError::Usage(format!(
            "unknown experiment '{other}'; expected 1, 2, pvalues, or bench"
        ))),
    }
}

fn cmd_bench(
    p_grid: &str,
    n: usize,
    k: usize,
    reps: usize,
    seed: u64,
    mem_cap_mib: usize,
    output: Option<&Path>,
) -> CliResult<()> {
    let meta = RunMeta::new(seed, None);
    let grid: Vec<usize> = p_grid
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad p '{t}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let rows = simulate::run_runtime_bench(&grid, n, k, reps, seed, mem_cap_mib * 1024 * 1024)?;
    let mut out = meta.tsv_header();
    out.push_str(&simulate::bench_tsv(&rows));
    write_output(output, &out)?;
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Fit {
            io,
            method,
            lambda,
            k,
            unpaired,
        } => cmd_fit(io, *method, *lambda, *k, *unpaired),
        Command::Cv {
            io,
            method,
            n_lambda,
            lambda_min_ratio,
            k_max,
            folds,
            one_se,
        } => cmd_cv(io, *method, *n_lambda, *lambda_min_ratio, *k_max, *folds, *one_se),
        Command::Path {
            io,
            n_lambda,
            lambda_min_ratio,
            folds,
        } => cmd_path(io, *n_lambda, *lambda_min_ratio, *folds),
        Command::Stepwise { io, k } => cmd_stepwise(io, *k),
        Command::GofTest {
            io,
            test,
            lambda,
            sigma,
        } => cmd_gof(io, *test, *lambda, *sigma),
        Command::Simulate {
            experiment,
            n,
            p,
            reps,
            s_grid,
            methods,
            lambda,
            seed,
            output,
        } => cmd_simulate(
            experiment,
            *n,
            *p,
            *reps,
            s_grid,
            methods.as_deref(),
            *lambda,
            *seed,
            output.as_deref(),
        ),
        Command::Bench {
            p_grid,
            n,
            k,
            reps,
            seed,
            mem_cap_mib,
            output,
        } => cmd_bench(p_grid, *n, *k, *reps, *seed, *mem_cap_mib, output.as_deref()),
    }
}

/// Parses arguments from the environment and runs; returns the process exit
/// code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
