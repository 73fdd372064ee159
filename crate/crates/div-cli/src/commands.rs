//! Subcommand implementations.

use std::path::Path;

use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use div_core::acceptance::{run_criterion, CriterionResult, CRITERION_COUNT};
use div_core::baselines::{fit_cf, fit_engression, fit_tsls, CfBasis};
use div_core::simlab::{default_grid, eval_beta_error, eval_mean_mse, eval_qte_rmse, OracleConfig, Scenario, QTE_ALPHAS};
use div_core::{load_model, save_model, Dataset, OutcomeHead};

use crate::table::{fmt_f64, write_csv, Table};
use crate::{CliError, FitFlags, PredictMode};

fn check_roles_disjoint(roles: &[&[String]]) -> Result<(), CliError> {
    let mut seen = std::collections::HashSet::new();
    for role in roles {
        for name in *role {
            if !seen.insert(name.clone()) {
                return Err(CliError::data(format!(
                    "column '{name}' assigned to more than one role"
                )));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    input: &Path,
    z: &[String],
    x: &[String],
    y: &[String],
    w: &[String],
    flags: &FitFlags,
    seed: u64,
    out: &Path,
    trace_path: Option<&Path>,
) -> Result<(), CliError> {
    check_roles_disjoint(&[z, x, y, w])?;
    let table = Table::read(input)?;
    let zm = table.numeric_columns(z)?;
    let xm = table.numeric_columns(x)?;
    let ym = table.numeric_columns(y)?;
    let wm = if w.is_empty() {
        None
    } else {
        Some(table.numeric_columns(w)?)
    };
    let data = Dataset::new(zm, xm, ym, wm)?;
    let (model, trace) = div_core::model::fit_div(&data, &flags.to_config(seed))?;
    save_model(&model, out)?;
    if let Some(path) = trace_path {
        let rows: Vec<Vec<String>> = trace
            .records
            .iter()
            .map(|r| {
                vec![
                    r.epoch.to_string(),
                    fmt_f64(r.loss),
                    fmt_f64(r.s1),
                    fmt_f64(r.s2),
                ]
            })
            .collect();
        write_csv(path, &["epoch", "loss", "s1", "s2"], &rows)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    x: &[String],
    w: &[String],
    mode: PredictMode,
    alphas: &[f64],
    m: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let table = Table::read(input)?;
    let xm = table.numeric_columns(x)?;
    let wm = if w.is_empty() {
        None
    } else {
        Some(table.numeric_columns(w)?)
    };
    if mode == PredictMode::Quantile && alphas.is_empty() {
        return Err(CliError::data(
            "mode=quantile requires --alphas".into(),
        ));
    }

    let p = model.dims().p;
    let y_names: Vec<String> = (0..p).map(|j| format!("y{j}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for i in 0..xm.nrows() {
        let xi = xm.row(i);
        let wi = wm.as_ref().map(|w| w.row(i));
        match mode {
            PredictMode::Mean => {
                let mean = model.interventional_mean(xi, wi, m, &mut rng)?;
                let mut row = vec![i.to_string()];
                row.extend(mean.iter().map(|&v| fmt_f64(v)));
                rows.push(row);
            }
            PredictMode::Quantile => {
                let q = model.interventional_quantile(xi, wi, alphas, m, &mut rng)?;
                for (a, &alpha) in alphas.iter().enumerate() {
                    let mut row = vec![i.to_string(), fmt_f64(alpha)];
                    row.extend(q.row(a).iter().map(|&v| fmt_f64(v)));
                    rows.push(row);
                }
            }
            PredictMode::Sample => {
                let s = model.sample_interventional(xi, wi, m, &mut rng)?;
                for k in 0..m {
                    let mut row = vec![i.to_string(), k.to_string()];
                    row.extend(s.row(k).iter().map(|&v| fmt_f64(v)));
                    rows.push(row);
                }
            }
        }
    }

    let mut header: Vec<&str> = vec!["row"];
    match mode {
        PredictMode::Mean => {}
        PredictMode::Quantile => header.push("alpha"),
        PredictMode::Sample => header.push("sample_index"),
    }
    header.extend(y_names.iter().map(String::as_str));
    write_csv(out, &header, &rows)
}

/// What a simulation cell is scored on.
#[derive(Clone, Copy, PartialEq)]
enum Task {
    /// MSE of the interventional mean on the default grid.
    MeanMse,
    /// RMSE of quantile treatment effects between x=1 and x=0.
    Qte,
    /// L2 error of linear treatment coefficients.
    Beta,
}

#[derive(Clone)]
struct CellOutcome {
    method: String,
    seed: u64,
    mse: Option<f64>,
    qte_rmse: Option<f64>,
    beta_error: Option<f64>,
    /// (x or alpha, estimate) pairs for the long-format predictions file.
    predictions: Vec<(f64, f64)>,
    note: String,
}

fn run_cell(
    scenario: Scenario,
    n: usize,
    method: &str,
    seed: u64,
    flags: &FitFlags,
    m: usize,
    task: Task,
    grid: &Array1<f64>,
    truth_mean: &Array1<f64>,
    truth_qte: &Array1<f64>,
) -> CellOutcome {
    let mut out = CellOutcome {
        method: method.to_string(),
        seed,
        mse: None,
        qte_rmse: None,
        beta_error: None,
        predictions: Vec::new(),
        note: String::new(),
    };
    let run = || -> Result<CellOutcome, div_core::DivError> {
        let mut cell = out.clone();
        let data = scenario.generate(n, seed)?;
        let grid2 = grid.view().insert_axis(Axis(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);

        let mean_est: Option<Array1<f64>> = match method {
            "div" => {
                let mut config = flags.to_config(seed ^ 0x5eed);
                config.binary_treatment |= scenario.is_binary_treatment();
                if task == Task::Beta {
                    config.outcome_head = OutcomeHead::LinearNoBias;
                }
                let (model, _) = div_core::model::fit_div(&data.dataset, &config)?;
                match task {
                    Task::Beta => {
                        let beta = model.extract_linear_beta()?;
                        let truth = ndarray::array![1.0, 2.0];
                        cell.beta_error = Some(eval_beta_error(beta.view(), truth.view())?);
                        cell.predictions =
                            beta.iter().enumerate().map(|(j, &b)| (j as f64, b)).collect();
                        None
                    }
                    Task::Qte => {
                        let qte = model.qte(
                            ndarray::array![1.0].view(),
                            ndarray::array![0.0].view(),
                            None,
                            &QTE_ALPHAS,
                            10_000,
                            &mut rng,
                        )?;
                        cell.qte_rmse =
                            Some(eval_qte_rmse(qte.column(0), truth_qte.view())?);
                        cell.predictions = QTE_ALPHAS
                            .iter()
                            .zip(qte.column(0))
                            .map(|(&a, &v)| (a, v))
                            .collect();
                        None
                    }
                    Task::MeanMse => {
                        let mut est = Array1::zeros(grid.len());
                        for (i, &xv) in grid.iter().enumerate() {
                            est[i] = model.interventional_mean(
                                ndarray::array![xv].view(),
                                None,
                                m,
                                &mut rng,
                            )?[0];
                        }
                        Some(est)
                    }
                }
            }
            "tsls" => {
                let iv = fit_tsls(&data.dataset)?;
                match task {
                    Task::Beta => {
                        let truth = ndarray::array![1.0, 2.0];
                        cell.beta_error = Some(eval_beta_error(iv.beta.view(), truth.view())?);
                        None
                    }
                    Task::Qte => None,
                    Task::MeanMse => Some(iv.predict_mean(grid2)?),
                }
            }
            "cf_linear" | "cf_spline" => {
                let basis = if method == "cf_linear" {
                    CfBasis::Linear
                } else {
                    CfBasis::NaturalCubicSpline
                };
                let cf = fit_cf(&data.dataset, basis)?;
                match task {
                    Task::MeanMse => Some(cf.predict_mean(grid2)?),
                    _ => None,
                }
            }
            "engression" => {
                let eng = fit_engression(
                    data.dataset.x.view(),
                    data.dataset.y.view(),
                    &flags.to_config(seed ^ 0x5eed),
                )?;
                match task {
                    Task::MeanMse => Some(eng.predict_mean(grid2, m, &mut rng)?),
                    _ => None,
                }
            }
            other => {
                return Err(div_core::DivError::Config(format!(
                    "unknown method '{other}'"
                )))
            }
        };

        if let Some(est) = mean_est {
            cell.mse = Some(eval_mean_mse(est.view(), truth_mean.view())?);
            cell.predictions = grid.iter().zip(est.iter()).map(|(&x, &e)| (x, e)).collect();
        }
        Ok(cell)
    };
    match run() {
        Ok(cell) => cell,
        Err(e) => {
            out.note = e.to_string();
            out
        }
    }
}

pub fn cmd_simulate(
    scenario_id: &str,
    n: usize,
    methods: &[String],
    seeds: &[u64],
    flags: &FitFlags,
    m: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let scenario = Scenario::parse(scenario_id)?;
    if seeds.is_empty() {
        return Err(CliError::data("at least one seed is required".into()));
    }
    if methods.is_empty() {
        return Err(CliError::data("at least one method is required".into()));
    }
    const KNOWN: [&str; 5] = ["div", "tsls", "cf_linear", "cf_spline", "engression"];
    for method in methods {
        if !KNOWN.contains(&method.as_str()) {
            return Err(CliError::data(format!(
                "unknown method '{method}' (known: {})",
                KNOWN.join(",")
            )));
        }
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;

    let task = match scenario {
        Scenario::UnderIdentified => Task::Beta,
        Scenario::BinaryS1 | Scenario::BinaryS2 => Task::Qte,
        _ => Task::MeanMse,
    };

    // shared ground truth and evaluation grid (from a large reference sample)
    let oracle_cfg = OracleConfig::default();
    let reference = scenario.generate(n.max(10_000), 0)?;
    let (grid, truth_mean) = if task == Task::MeanMse {
        let grid = default_grid(reference.dataset.x.column(0), 200)?;
        let truth = scenario.oracle_mean(grid.view().insert_axis(Axis(1)), &oracle_cfg)?;
        (grid, truth)
    } else {
        (Array1::zeros(0), Array1::zeros(0))
    };
    let truth_qte = if task == Task::Qte {
        scenario.oracle_qte(&QTE_ALPHAS, &oracle_cfg)?
    } else {
        Array1::zeros(0)
    };

    let cells: Vec<(String, u64)> = methods
        .iter()
        .flat_map(|meth| seeds.iter().map(move |&s| (meth.clone(), s)))
        .collect();

    let run_all = || -> Vec<CellOutcome> {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|(method, seed)| {
                run_cell(
                    scenario, n, method, *seed, flags, m, task, &grid, &truth_mean, &truth_qte,
                )
            })
            .collect()
    };
    let outcomes = match std::env::var("DIV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| CliError::data(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut metric_rows: Vec<Vec<String>> = Vec::new();
    for c in &outcomes {
        metric_rows.push(vec![
            scenario.id(),
            c.method.clone(),
            c.seed.to_string(),
            opt(c.mse),
            opt(c.qte_rmse),
            opt(c.beta_error),
            c.note.clone(),
        ]);
    }
    // per-method aggregate over seeds
    for method in methods {
        let agg = |f: fn(&CellOutcome) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = outcomes
                .iter()
                .filter(|c| &c.method == method)
                .filter_map(f)
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        metric_rows.push(vec![
            scenario.id(),
            method.clone(),
            "mean".into(),
            opt(agg(|c| c.mse)),
            opt(agg(|c| c.qte_rmse)),
            opt(agg(|c| c.beta_error)),
            String::new(),
        ]);
    }
    write_csv(
        &out_dir.join("metrics.csv"),
        &["scenario", "method", "seed", "mse", "qte_rmse", "beta_error", "note"],
        &metric_rows,
    )?;

    let pred_rows: Vec<Vec<String>> = outcomes
        .iter()
        .flat_map(|c| {
            c.predictions.iter().map(|&(x, e)| {
                vec![fmt_f64(x), fmt_f64(e), c.method.clone(), c.seed.to_string()]
            })
        })
        .collect();
    write_csv(
        &out_dir.join("predictions.csv"),
        &["x", "estimate", "method", "seed"],
        &pred_rows,
    )?;
    Ok(())
}

pub fn cmd_benchmark(
    out: Option<&Path>,
    criteria: &[usize],
    tolerance_scale: f64,
) -> Result<bool, CliError> {
    let ids: Vec<usize> = if criteria.is_empty() {
        (1..=CRITERION_COUNT).collect()
    } else {
        criteria.to_vec()
    };
    let mut results: Vec<CriterionResult> = Vec::new();
    for &id in &ids {
        let r = run_criterion(id, tolerance_scale).unwrap_or_else(|e| CriterionResult {
            criterion: format!("{id:02}_errored({e})"),
            measured: f64::NAN,
            threshold: f64::NAN,
            pass: false,
        });
        println!(
            "criterion {}: {} (measured {:.6e}, threshold {:.6e})",
            r.criterion,
            if r.pass { "PASS" } else { "FAIL" },
            r.measured,
            r.threshold
        );
        results.push(r);
    }
    let all_pass = results.iter().all(|r| r.pass);
    let json = serde_json::to_string_pretty(&results)
        .map_err(|e| CliError::data(format!("serializing report: {e}")))?;
    let path = out.unwrap_or(Path::new("benchmark.json"));
    std::fs::write(path, json)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(all_pass)
}
