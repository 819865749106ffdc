use crate::args::*;
use crate::errors::{CliError, CliResult};
use crate::ingest::{self, Mapping};
use ecmmd::calibration::{
    classification_calibration_test, regression_calibration_test, CalibrationMode, Conditioning,
    GaussianRegressionModel, Variances,
};
use ecmmd::datagen::{
    gen_class_calib, gen_discrete_oracle, gen_gof_gaussian, gen_reg_calib_opts,
    DiscreteOracleSpec, Hypothesis,
};
use ecmmd::estimator::{asymptotic_test_with, Alternative};
use ecmmd::kernels::{BandwidthSpec, KernelSpec};
use ecmmd::resampling::{
    derandomized_test, derandomized_test_from_draws, finite_sample_test,
    finite_sample_test_from_draws, ConditionalSampler, GaussianCondSampler, MultinomialSampler,
    SdFn,
};
use ecmmd::rng::split_seed;
use ecmmd::{build_knn_graph, ecmmd_sq, Kernel, TestReport};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Parse `linear | gaussian[:<bandwidth>|:median]`.
pub fn parse_kernel_spec(raw: &str) -> CliResult<KernelSpec> {
    let lower = raw.to_ascii_lowercase();
    if lower == "linear" {
        return Ok(KernelSpec::Linear);
    }
    if lower == "gaussian" || lower == "gaussian:median" {
        return Ok(KernelSpec::Gaussian(BandwidthSpec::Median));
    }
    if let Some(bw) = lower.strip_prefix("gaussian:") {
        let value: f64 = bw.parse().map_err(|_| {
            CliError::BadArgument(format!("cannot parse bandwidth {bw:?} in --kernel {raw:?}"))
        })?;
        return Ok(KernelSpec::Gaussian(BandwidthSpec::Fixed(value)));
    }
    Err(CliError::BadArgument(format!(
        "unknown kernel {raw:?}; expected linear | gaussian[:<bandwidth>|:median]"
    )))
}

fn emit_report(mut report: TestReport, wall_ms: f64, out: &Option<PathBuf>) -> CliResult<()> {
    report.wall_ms = wall_ms;
    let summary = match report.method.as_str() {
        "finite_sample" => format!(
            "{}: n={} k={} kernel={} M={} p={:.6} reject={}",
            report.method,
            report.n,
            report.k,
            kernel_label(&report),
            report.m.unwrap_or_default(),
            report.p_value,
            report.reject
        ),
        _ => format!(
            "{}: n={} k={} kernel={} z={:.4} p={:.6} reject={}",
            report.method,
            report.n,
            report.k,
            kernel_label(&report),
            report.z.unwrap_or(f64::NAN),
            report.p_value,
            report.reject
        ),
    };
    println!("{summary}");
    write_json(&report, out)
}

fn kernel_label(report: &TestReport) -> String {
    match report.kernel.bandwidth {
        Some(bw) => format!("{}({bw:.6})", report.kernel.kind),
        None => report.kernel.kind.clone(),
    }
}

fn write_json<T: Serialize>(value: &T, out: &Option<PathBuf>) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(path) => std::fs::write(path, json).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            print!("{json}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

pub fn run_test(args: &TestArgs) -> CliResult<()> {
    if args.mode != "asymptotic" {
        return Err(CliError::BadArgument(format!(
            "two-sample mode {:?} unsupported; resampling modes live under `gof`",
            args.mode
        )));
    }
    let start = Instant::now();
    let mapping = Mapping {
        x_cols: args.mapping.x_cols.clone(),
        y_cols: args.mapping.y_cols.clone(),
        z_cols: args.mapping.z_cols.clone(),
    };
    let data = ingest::load_two_sample(&args.input, &mapping)?;
    eprintln!(
        "loaded {}: n={} p={} d={}",
        args.input.display(),
        data.len(),
        data.response_dim(),
        data.covariate_dim()
    );
    let spec = parse_kernel_spec(&args.common.kernel)?;
    let kernel = spec.resolve(&data.x, &data.y)?;
    let alternative = if args.one_sided {
        Alternative::Greater
    } else {
        Alternative::TwoSided
    };
    let res = asymptotic_test_with(&data, &kernel, args.common.k, args.common.alpha, alternative)?;
    let report = TestReport::from_asymptotic(&res, data.covariate_dim(), &kernel, None);
    emit_report(report, start.elapsed().as_secs_f64() * 1e3, &args.common.out)
}

fn build_sampler(args: &GofArgs, z_dim: usize, y_dim: usize) -> CliResult<Box<dyn ConditionalSampler>> {
    match args.sampler {
        Some(SamplerKind::Multinomial) => Ok(Box::new(MultinomialSampler { classes: z_dim })),
        Some(SamplerKind::Gaussian) | None => {
            if y_dim != 1 {
                return Err(CliError::BadArgument(
                    "the Gaussian sampler draws scalar responses".into(),
                ));
            }
            let mean_coefs = match &args.mean_coef {
                Some(list) => list
                    .split(',')
                    .map(|v| {
                        v.trim().parse::<f64>().map_err(|_| {
                            CliError::BadArgument(format!("bad --mean-coef entry {v:?}"))
                        })
                    })
                    .collect::<CliResult<Vec<f64>>>()?,
                None => vec![1.0; z_dim],
            };
            if mean_coefs.len() != z_dim {
                return Err(CliError::BadArgument(format!(
                    "--mean-coef has {} entries, covariates have dimension {z_dim}",
                    mean_coefs.len()
                )));
            }
            let sd = match (&args.sd_bump, args.sd) {
                (Some(bump), _) => {
                    let parts: Vec<&str> = bump.split(',').collect();
                    if parts.len() != 3 {
                        return Err(CliError::BadArgument(
                            "--sd-bump wants rho,center,scale".into(),
                        ));
                    }
                    let vals: Vec<f64> = parts
                        .iter()
                        .map(|v| {
                            v.trim().parse::<f64>().map_err(|_| {
                                CliError::BadArgument(format!("bad --sd-bump entry {v:?}"))
                            })
                        })
                        .collect::<CliResult<Vec<f64>>>()?;
                    SdFn::MeanBump {
                        rho: vals[0],
                        center: vals[1],
                        scale: vals[2],
                    }
                }
                (None, Some(s)) => SdFn::Const(s),
                (None, None) => SdFn::Const(1.0),
            };
            Ok(Box::new(GaussianCondSampler {
                mean_coefs,
                mean_intercept: args.mean_intercept,
                sd,
            }))
        }
    }
}

pub fn run_gof(args: &GofArgs) -> CliResult<()> {
    let start = Instant::now();
    let mapping = Mapping {
        x_cols: None,
        y_cols: args.mapping.y_cols.clone(),
        z_cols: args.mapping.z_cols.clone(),
    };
    let (y, z) = ingest::load_yz(&args.input, &mapping)?;
    eprintln!(
        "loaded {}: n={} p={} d={}",
        args.input.display(),
        y.len(),
        y.dim(),
        z.dim()
    );
    let spec = parse_kernel_spec(&args.common.kernel)?;
    let common = &args.common;

    let report = if let Some(resample_path) = &args.resample_file {
        let draws = ingest::load_resamples(resample_path, y.len())?;
        // With user-supplied draws the median bandwidth resolves against
        // the draw that pairs with Y in the statistic.
        let kernel = match spec {
            KernelSpec::Gaussian(BandwidthSpec::Median) => {
                let paired_slot = match args.mode {
                    GofMode::Finite => draws.slots() - 1,
                    GofMode::Derandomized => 0,
                };
                let x = draws.slot_matrix(paired_slot);
                Kernel::gaussian(ecmmd::kernels::median_bandwidth_pair(&x, &y)?)?
            }
            other => other.resolve_fixed()?,
        };
        match args.mode {
            GofMode::Finite => {
                let res =
                    finite_sample_test_from_draws(&y, &z, &draws, &kernel, common.k, common.seed)?;
                TestReport::from_finite_sample(&res, z.dim(), common.alpha)
            }
            GofMode::Derandomized => {
                let res = derandomized_test_from_draws(
                    &y,
                    &z,
                    &draws,
                    &kernel,
                    common.k,
                    common.alpha,
                    common.seed,
                )?;
                TestReport::from_derandomized(&res, z.dim())
            }
        }
    } else {
        let sampler = build_sampler(args, z.dim(), y.dim())?;
        match args.mode {
            GofMode::Finite => {
                let res = finite_sample_test(
                    &y,
                    &z,
                    sampler.as_ref(),
                    args.m,
                    &spec,
                    common.k,
                    common.seed,
                )?;
                TestReport::from_finite_sample(&res, z.dim(), common.alpha)
            }
            GofMode::Derandomized => {
                let res = derandomized_test(
                    &y,
                    &z,
                    sampler.as_ref(),
                    args.m_n,
                    &spec,
                    common.k,
                    common.alpha,
                    common.seed,
                )?;
                TestReport::from_derandomized(&res, z.dim())
            }
        }
    };
    emit_report(report, start.elapsed().as_secs_f64() * 1e3, &common.out)
}

pub fn run_classify(args: &ClassifyArgs) -> CliResult<()> {
    let start = Instant::now();
    let pred = ingest::load_classifier(&args.input, &args.prob_cols, &args.label_col)?;
    eprintln!(
        "loaded {}: n={} classes={}",
        args.input.display(),
        pred.len(),
        pred.classes()
    );
    let spec = parse_kernel_spec(&args.common.kernel)?;
    let mode = match args.mode {
        CalibMode::Asymptotic => CalibrationMode::Asymptotic,
        CalibMode::Finite => CalibrationMode::FiniteSample { m: args.m },
    };
    let report = classification_calibration_test(
        &pred,
        mode,
        &spec,
        args.common.k,
        args.common.alpha,
        args.common.seed,
    )?;
    emit_report(report, start.elapsed().as_secs_f64() * 1e3, &args.common.out)
}

pub fn run_regress(args: &RegressArgs) -> CliResult<()> {
    let start = Instant::now();
    let var_col = match (&args.var, &args.var_col) {
        (Some(_), _) => None,
        (None, Some(col)) => Some(col.as_str()),
        (None, None) => Some("var"),
    };
    let input = ingest::load_regression(&args.input, &args.y_col, &args.mean_col, var_col)?;
    let variances = match (args.var, input.variances) {
        (Some(v), _) => Variances::Homoscedastic(v),
        (None, Some(vs)) => {
            // A constant variance column is a homoscedastic model; keep
            // it eligible for mean-only conditioning.
            if vs.windows(2).all(|w| w[0] == w[1]) {
                Variances::Homoscedastic(vs[0])
            } else {
                Variances::PerPoint(vs)
            }
        }
        (None, None) => unreachable!("var column required without --var"),
    };
    let model = GaussianRegressionModel {
        means: input.means,
        variances,
    };
    let conditioning = match args.conditioning {
        ConditioningArg::Mean => Conditioning::MeanOnly,
        ConditioningArg::MeanVar => Conditioning::MeanAndVariance,
    };
    let mode = match args.mode {
        CalibMode::Asymptotic => CalibrationMode::Asymptotic,
        CalibMode::Finite => CalibrationMode::FiniteSample { m: args.m },
    };
    let spec = parse_kernel_spec(&args.common.kernel)?;
    let report = regression_calibration_test(
        &input.y,
        &model,
        conditioning,
        mode,
        &spec,
        args.common.k,
        args.common.alpha,
        args.common.seed,
    )?;
    emit_report(report, start.elapsed().as_secs_f64() * 1e3, &args.common.out)
}

#[derive(Serialize)]
struct SimSummary {
    scenario: String,
    n: usize,
    d: usize,
    k: usize,
    rho: Option<f64>,
    hypothesis: Option<String>,
    mode: String,
    #[serde(rename = "M")]
    m: Option<usize>,
    alpha: f64,
    seed: u64,
    reps: usize,
    rejections: usize,
    rejection_rate: f64,
    mean_p_value: f64,
    wall_ms: f64,
}

fn summarize(
    scenario: &str,
    p_values: &[f64],
    alpha: f64,
    template: SimSummary,
) -> SimSummary {
    let rejections = p_values.iter().filter(|&&p| p <= alpha).count();
    let mean_p = p_values.iter().sum::<f64>() / p_values.len() as f64;
    SimSummary {
        scenario: scenario.to_string(),
        rejections,
        rejection_rate: rejections as f64 / p_values.len() as f64,
        mean_p_value: mean_p,
        ..template
    }
}

fn emit_sim(summary: &SimSummary, out: &Option<PathBuf>) -> CliResult<()> {
    println!(
        "sim {}: reps={} rejection_rate={:.4} mean_p={:.4} (alpha={})",
        summary.scenario, summary.reps, summary.rejection_rate, summary.mean_p_value, summary.alpha
    );
    write_json(summary, out)
}

fn check_reps(reps: usize) -> CliResult<()> {
    if reps == 0 {
        return Err(CliError::BadArgument("--reps must be at least 1".into()));
    }
    Ok(())
}

fn dump_csv(path: &Path, headers: &[String], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn run_sim_class(args: &SimClassArgs) -> CliResult<()> {
    check_reps(args.reps)?;
    let start = Instant::now();
    let common = &args.common;
    let spec = parse_kernel_spec(&common.kernel)?;
    let hypothesis = match args.hypothesis {
        HypothesisArg::Null => Hypothesis::Null,
        HypothesisArg::Alt => Hypothesis::Alt,
    };
    let mode = match args.mode {
        CalibMode::Asymptotic => CalibrationMode::Asymptotic,
        CalibMode::Finite => CalibrationMode::FiniteSample { m: args.m },
    };
    if let Some(dump) = &args.dump {
        let data = gen_class_calib(args.n, args.rho, hypothesis, split_seed(common.seed, 0))?;
        let rows: Vec<Vec<f64>> = (0..args.n)
            .map(|i| {
                let p = data.predictions.probs().row(i);
                vec![p[0], p[1], data.predictions.labels()[i] as f64]
            })
            .collect();
        dump_csv(
            dump,
            &["p_0".into(), "p_1".into(), "label".into()],
            &rows,
        )?;
    }
    let p_values: Vec<f64> = (0..args.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<f64> {
            let rep_seed = split_seed(common.seed, rep as u64);
            let data = gen_class_calib(args.n, args.rho, hypothesis, rep_seed)?;
            let report = classification_calibration_test(
                &data.predictions,
                mode,
                &spec,
                common.k,
                common.alpha,
                split_seed(rep_seed, 1),
            )?;
            Ok(report.p_value)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let template = SimSummary {
        scenario: String::new(),
        n: args.n,
        d: 2,
        k: common.k,
        rho: Some(args.rho),
        hypothesis: Some(format!("{:?}", args.hypothesis).to_lowercase()),
        mode: format!("{:?}", args.mode).to_lowercase(),
        m: matches!(args.mode, CalibMode::Finite).then_some(args.m),
        alpha: common.alpha,
        seed: common.seed,
        reps: args.reps,
        rejections: 0,
        rejection_rate: 0.0,
        mean_p_value: 0.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    emit_sim(
        &summarize("class-calib", &p_values, common.alpha, template),
        &common.out,
    )
}

pub fn run_sim_reg(args: &SimRegArgs) -> CliResult<()> {
    check_reps(args.reps)?;
    let start = Instant::now();
    let common = &args.common;
    let spec = parse_kernel_spec(&common.kernel)?;
    let mode = match args.mode {
        CalibMode::Asymptotic => CalibrationMode::Asymptotic,
        CalibMode::Finite => CalibrationMode::FiniteSample { m: args.m },
    };
    if let Some(dump) = &args.dump {
        let data = gen_reg_calib_opts(
            args.n_train,
            args.n_test,
            args.rho,
            args.intercept,
            split_seed(common.seed, 0),
        )?;
        let var = match data.model.variances {
            Variances::Homoscedastic(v) => v,
            Variances::PerPoint(_) => unreachable!(),
        };
        let rows: Vec<Vec<f64>> = (0..args.n_test)
            .map(|i| vec![data.y_test[i], data.model.means[i], var])
            .collect();
        dump_csv(dump, &["y".into(), "mean".into(), "var".into()], &rows)?;
    }
    let p_values: Vec<f64> = (0..args.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<f64> {
            let rep_seed = split_seed(common.seed, rep as u64);
            let data =
                gen_reg_calib_opts(args.n_train, args.n_test, args.rho, args.intercept, rep_seed)?;
            let report = regression_calibration_test(
                &data.y_test,
                &data.model,
                Conditioning::MeanOnly,
                mode,
                &spec,
                common.k,
                common.alpha,
                split_seed(rep_seed, 1),
            )?;
            Ok(report.p_value)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let template = SimSummary {
        scenario: String::new(),
        n: args.n_test,
        d: 1,
        k: common.k,
        rho: Some(args.rho),
        hypothesis: None,
        mode: format!("{:?}", args.mode).to_lowercase(),
        m: matches!(args.mode, CalibMode::Finite).then_some(args.m),
        alpha: common.alpha,
        seed: common.seed,
        reps: args.reps,
        rejections: 0,
        rejection_rate: 0.0,
        mean_p_value: 0.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    emit_sim(
        &summarize("reg-calib", &p_values, common.alpha, template),
        &common.out,
    )
}

pub fn run_sim_gof(args: &SimGofArgs) -> CliResult<()> {
    check_reps(args.reps)?;
    let start = Instant::now();
    let common = &args.common;
    let spec = parse_kernel_spec(&common.kernel)?;
    if let Some(dump) = &args.dump {
        let data = gen_gof_gaussian(args.n, args.d, args.rho, split_seed(common.seed, 0))?;
        let mut headers = vec!["y_0".to_string()];
        headers.extend((0..args.d).map(|j| format!("z_{j}")));
        let rows: Vec<Vec<f64>> = (0..args.n)
            .map(|i| {
                let mut row = vec![data.y.row(i)[0]];
                row.extend_from_slice(data.z.row(i));
                row
            })
            .collect();
        dump_csv(dump, &headers, &rows)?;
    }
    let p_values: Vec<f64> = (0..args.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<f64> {
            let rep_seed = split_seed(common.seed, rep as u64);
            let data = gen_gof_gaussian(args.n, args.d, args.rho, rep_seed)?;
            match args.mode {
                GofMode::Finite => {
                    let res = finite_sample_test(
                        &data.y,
                        &data.z,
                        &data.sampler,
                        args.m,
                        &spec,
                        common.k,
                        split_seed(rep_seed, 1),
                    )?;
                    Ok(res.p_m)
                }
                GofMode::Derandomized => {
                    let res = derandomized_test(
                        &data.y,
                        &data.z,
                        &data.sampler,
                        args.m_n,
                        &spec,
                        common.k,
                        common.alpha,
                        split_seed(rep_seed, 1),
                    )?;
                    Ok(res.p_value)
                }
            }
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let template = SimSummary {
        scenario: String::new(),
        n: args.n,
        d: args.d,
        k: common.k,
        rho: Some(args.rho),
        hypothesis: Some(if args.rho == 0.0 { "null" } else { "alt" }.into()),
        mode: format!("{:?}", args.mode).to_lowercase(),
        m: Some(match args.mode {
            GofMode::Finite => args.m,
            GofMode::Derandomized => args.m_n,
        }),
        alpha: common.alpha,
        seed: common.seed,
        reps: args.reps,
        rejections: 0,
        rejection_rate: 0.0,
        mean_p_value: 0.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    emit_sim(
        &summarize("gof", &p_values, common.alpha, template),
        &common.out,
    )
}

#[derive(Serialize)]
struct OracleSummary {
    scenario: String,
    n: usize,
    k: usize,
    seed: u64,
    reps: usize,
    population_ecmmd_sq: f64,
    mean_t_n: f64,
    mean_abs_error: f64,
    wall_ms: f64,
}

pub fn run_sim_oracle(args: &SimOracleArgs) -> CliResult<()> {
    check_reps(args.reps)?;
    let start = Instant::now();
    let common = &args.common;
    let spec = DiscreteOracleSpec::two_class_default();
    let population = spec.population_ecmmd_sq();
    if let Some(dump) = &args.dump {
        let data = gen_discrete_oracle(&spec, args.n, split_seed(common.seed, 0))?;
        let mut headers = Vec::new();
        headers.extend((0..data.response_dim()).map(|j| format!("x_{j}")));
        headers.extend((0..data.response_dim()).map(|j| format!("y_{j}")));
        headers.extend((0..data.covariate_dim()).map(|j| format!("z_{j}")));
        let rows: Vec<Vec<f64>> = (0..data.len())
            .map(|i| {
                let mut row = Vec::new();
                row.extend_from_slice(data.x.row(i));
                row.extend_from_slice(data.y.row(i));
                row.extend_from_slice(data.z.row(i));
                row
            })
            .collect();
        dump_csv(dump, &headers, &rows)?;
    }
    let estimates: Vec<f64> = (0..args.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<f64> {
            let data = gen_discrete_oracle(&spec, args.n, split_seed(common.seed, rep as u64))?;
            let graph = build_knn_graph(&data.z, common.k)?;
            Ok(ecmmd_sq(&data, &spec.kernel, &graph)?)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let mean_t = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let mean_abs_error = estimates
        .iter()
        .map(|t| (t - population).abs())
        .sum::<f64>()
        / estimates.len() as f64;
    let summary = OracleSummary {
        scenario: "oracle".into(),
        n: args.n,
        k: common.k,
        seed: common.seed,
        reps: args.reps,
        population_ecmmd_sq: population,
        mean_t_n: mean_t,
        mean_abs_error,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    println!(
        "sim oracle: population={:.6} mean_t_n={:.6} mean_abs_error={:.6} (reps={})",
        summary.population_ecmmd_sq, summary.mean_t_n, summary.mean_abs_error, summary.reps
    );
    write_json(&summary, &common.out)
}
