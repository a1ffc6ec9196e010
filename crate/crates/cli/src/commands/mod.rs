//! One function per subcommand. Each reads its parameters, runs the library
//! routine, records checks and results on the [`Run`] and writes artifacts.

mod concentration;
mod report;

pub use concentration::{concentrate, equivalence, two_level};
pub use report::report;

use std::path::Path;

use conc_lab::costs::CostKind;
use conc_lab::functionals::{check_bg_dual, check_tau};
use conc_lab::io::read_measure;
use conc_lab::measures::DiscreteMeasure;
use conc_lab::rates::{
    default_thresholds, ds_lower_bound_check, rate_curve, rate_function_oracle, RateMethod, RateOptions,
};
use conc_lab::rng::StreamId;
use conc_lab::transport::solve_general;
use rand::Rng;
use serde_json::json;

use crate::output::{num, Cell};
use crate::{row, CliError, CliResult, Params, Run};

pub(crate) fn load_measure(p: &Params, key: &str) -> CliResult<DiscreteMeasure> {
    let path = p.require_str(key)?;
    if !Path::new(&path).exists() {
        return Err(CliError::InputMissing(format!("measure file `{path}` does not exist")));
    }
    let loaded = read_measure(&path)?;
    if loaded.renormalized {
        log::warn!("{path}: weights summed to {}, renormalized", loaded.raw_sum);
    }
    Ok(loaded.measure)
}

pub(crate) fn cost_of(p: &Params, default: &str) -> CliResult<CostKind> {
    let spec = p.str("cost")?.unwrap_or_else(|| default.to_string());
    Ok(spec.parse::<CostKind>()?)
}

pub(crate) fn rate_options(p: &Params, seed: u64) -> CliResult<RateOptions> {
    let mut opts = RateOptions { stream: StreamId::new(seed, 0).labeled("rate-starts"), ..RateOptions::default() };
    if let Some(s) = p.usize("starts")? {
        opts.starts = s;
    }
    Ok(opts)
}

fn positive_support(mu: &DiscreteMeasure) -> usize {
    mu.weights().iter().filter(|&&w| w > 0.0).count()
}

pub fn transport(p: &Params, run: &mut Run) -> CliResult<()> {
    let a = load_measure(p, "a")?;
    let b = load_measure(p, "b")?;
    let cost = cost_of(p, "quadratic")?;
    let plan = solve_general(&a, &b, &cost)?;
    let row_err = plan.row_sums().iter().zip(a.weights()).map(|(s, w)| (s - w).abs()).fold(0.0, f64::max);
    let col_err = plan.col_sums().iter().zip(b.weights()).map(|(s, w)| (s - w).abs()).fold(0.0, f64::max);
    let recomputed = plan.recompute_cost(a.coords(), b.coords(), a.dim(), &cost);
    let cost_err = (recomputed - plan.total_cost).abs();
    run.check("row_marginals", row_err <= 1e-10, row_err, 1e-10);
    run.check("column_marginals", col_err <= 1e-10, col_err, 1e-10);
    run.check("cost_consistency", cost_err <= 1e-10 * recomputed.max(1.0), cost_err, 1e-10);
    run.result("cost", num(plan.total_cost));
    run.result("cost_kind", json!(cost.to_string()));
    run.result("plan_nnz", json!(plan.nnz()));
    run.result("certificate", json!(plan.certificate.name()));
    run.result("rows", json!(plan.rows));
    run.result("cols", json!(plan.cols));
    if p.bool("plan")?.unwrap_or(false) {
        let rows: Vec<Vec<Cell>> = plan.entries.iter().map(|e| row![e.row, e.col, e.mass]).collect();
        run.write_csv("plan.csv", &["i", "j", "mass"], &rows)?;
    }
    Ok(())
}

pub fn rate(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let mu = load_measure(p, "measure")?;
    let cost = cost_of(p, "power:p=1")?;
    let thresholds = match p.grid("t_grid")? {
        Some(g) => g,
        None => default_thresholds(&mu, &cost, 10)?,
    };
    let resolution = p.f64("resolution")?.unwrap_or(0.01);
    let method = match p.str("method")?.as_deref().unwrap_or("penalty") {
        "penalty" => RateMethod::PenaltyOptimizer,
        "grid" => RateMethod::GridOracle { resolution },
        other => return Err(CliError::ConfigInvalid(format!("method must be `penalty` or `grid`, got `{other}`"))),
    };
    let opts = rate_options(p, seed)?;
    let support = positive_support(&mu);
    let use_oracle = p.bool("oracle")?.unwrap_or(support <= 4) && method == RateMethod::PenaltyOptimizer;
    let curve = rate_curve(&mu, &cost, &thresholds, method, &opts)?;
    let oracle = if use_oracle {
        Some(thresholds.iter().map(|&t| rate_function_oracle(&mu, &cost, t, resolution)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };

    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&a, &b| thresholds[a].total_cmp(&thresholds[b]));
    let drop = order.windows(2).map(|w| curve.rates[w[0]] - curve.rates[w[1]]).fold(0.0, f64::max);
    run.check("curve_nondecreasing", drop <= 1e-12, drop, 1e-12);
    if let Some(o) = &oracle {
        let above = curve.rates.iter().zip(o).map(|(r, v)| r - v.value).fold(f64::NEG_INFINITY, f64::max);
        let below = curve.rates.iter().zip(o).map(|(r, v)| v.lower - r).fold(f64::NEG_INFINITY, f64::max);
        run.check("optimizer_below_oracle_upper", above <= 1e-9, above, 1e-9);
        run.check("optimizer_above_oracle_lower", below <= 1e-9, below, 1e-9);
    }

    let rows: Vec<Vec<Cell>> = curve
        .points
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            let (ov, ol) = oracle.as_ref().map_or((f64::NAN, f64::NAN), |o| (o[i].value, o[i].lower));
            row![pt.t, pt.value, pt.discrepancy, pt.transport_cost, pt.attained, pt.error_bound.unwrap_or(f64::NAN), ov, ol]
        })
        .collect();
    run.write_csv(
        "curve.csv",
        &["t", "rate", "discrepancy", "transport_cost", "attained", "error_bound", "oracle_value", "oracle_lower"],
        &rows,
    )?;
    run.write_plot("rate", &thresholds, &curve.rates)?;
    run.result("method", json!(method.name()));
    run.result("cost_kind", json!(cost.to_string()));
    run.result("support", json!(support));
    run.result(
        "curve",
        json!(curve.points.iter().map(|pt| json!({ "t": num(pt.t), "rate": num(pt.value) })).collect::<Vec<_>>()),
    );
    Ok(())
}

pub fn sanov_check(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let header = ["index", "support", "n", "p", "t", "entropy", "mu_event", "nu_event", "lhs", "rhs", "slack"];
    let to_row = |i: usize, k: usize, r: &conc_lab::rates::DsReport| -> Vec<Cell> {
        row![i, k, r.n, r.p, r.t, r.entropy, r.mu_event, r.nu_event, r.lhs, r.rhs, r.slack]
    };
    let mut rows = Vec::new();
    let mut slacks = Vec::new();
    let mut redrawn = 0usize;
    if p.str("measure")?.is_some() {
        let mu = load_measure(p, "measure")?;
        let nu = load_measure(p, "nu")?;
        let n = p.usize("n")?.unwrap_or(4);
        let t = p.f64("t")?.ok_or_else(|| CliError::ConfigInvalid("a single check needs `t`".into()))?;
        let exponent = p.f64("p")?.unwrap_or(1.0);
        let r = ds_lower_bound_check(&mu, &nu, n, t, exponent)?;
        rows.push(to_row(0, mu.len(), &r));
        slacks.push(r.slack);
    } else {
        let configs = p.usize("configs")?.unwrap_or(100);
        let max_n = p.usize("max_n")?.unwrap_or(8);
        let max_support = p.usize("max_support")?.unwrap_or(3);
        if configs == 0 || max_n == 0 || !(2..=6).contains(&max_support) {
            return Err(CliError::ConfigInvalid("battery needs configs ≥ 1, max_n ≥ 1 and max_support in 2..=6".into()));
        }
        let mut rng = StreamId::new(seed, 0).labeled("sanov-battery").rng();
        while rows.len() < configs {
            if redrawn > 50 * configs {
                return Err(CliError::ConfigInvalid("could not draw configurations with nonempty events".into()));
            }
            let k = rng.random_range(2..=max_support);
            let n = rng.random_range(1..=max_n);
            let coords: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut weights = || (0..k).map(|_| rng.random_range(0.05..1.0)).collect::<Vec<f64>>();
            let (wm, wn) = (weights(), weights());
            let mu = DiscreteMeasure::normalized(1, coords.clone(), wm)?;
            let nu = DiscreteMeasure::normalized(1, coords, wn)?;
            let exponent = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            let c = mu.coords();
            let spread = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - c.iter().cloned().fold(f64::INFINITY, f64::min);
            let t = rng.random_range(0.0..spread.max(1e-9));
            match ds_lower_bound_check(&mu, &nu, n, t, exponent) {
                Ok(r) => {
                    rows.push(to_row(rows.len(), mu.len(), &r));
                    slacks.push(r.slack);
                }
                Err(conc_lab::Error::EventEmpty) => redrawn += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    let worst = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    run.check("worst_slack", worst >= -1e-12, worst, -1e-12);
    run.result("worst_slack", num(worst));
    run.result("configs", json!(slacks.len()));
    run.result("redrawn_empty_events", json!(redrawn));
    run.write_csv("sanov.csv", &header, &rows)?;
    Ok(())
}

pub fn dual_check(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let mu = load_measure(p, "measure")?;
    let cost = cost_of(p, "sg")?;
    let scale = p.f64("scale")?.ok_or_else(|| CliError::ConfigInvalid("missing required parameter `scale`".into()))?;
    if !(scale > 0.0) {
        return Err(CliError::ConfigInvalid(format!("scale must be positive, got {scale}")));
    }
    let count = p.usize("count")?.unwrap_or(1000);
    let tau = match p.str("form")?.as_deref().unwrap_or("bg") {
        "bg" => false,
        "tau" => true,
        other => return Err(CliError::ConfigInvalid(format!("form must be `bg` or `tau`, got `{other}`"))),
    };
    let max_cost = mu
        .points()
        .flat_map(|x| mu.points().map(move |y| cost.eval(x, y)))
        .fold(0.0, f64::max);
    let unit = if max_cost > 0.0 { scale * max_cost } else { 1.0 };
    let stream = StreamId::new(seed, 0).labeled("dual-functions");
    let mut rows = Vec::with_capacity(count);
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    let mut violations = 0usize;
    for i in 0..count {
        let mut rng = stream.substream(i as u64).rng();
        // amplitudes from far below to far above the cost range
        let amp = unit * 10f64.powf(rng.random_range(-2.0..2.0));
        let f: Vec<f64> = (0..mu.len()).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
        let d = if tau { check_tau(&mu, &cost, scale, &f)? } else { check_bg_dual(&mu, &cost, scale, &f)? };
        if !d.satisfied {
            violations += 1;
        }
        if d.ratio > worst.0 {
            worst = (d.ratio, f.clone());
        }
        rows.push(row![i, amp, d.ratio, d.log_lhs, d.log_rhs, d.satisfied]);
    }
    run.check("no_dual_violation", violations == 0, worst.0, 1.0 + conc_lab::functionals::DUAL_TOLERANCE);
    run.result("form", json!(if tau { "tau" } else { "bg" }));
    run.result("worst_ratio", num(worst.0));
    run.result("violations", json!(violations));
    run.result("count", json!(count));
    let violating = (violations > 0).then(|| worst.1.iter().map(|&v| num(v)).collect::<Vec<_>>());
    run.result("violating_f", json!(violating));
    run.write_csv("dual.csv", &["index", "amplitude", "ratio", "log_lhs", "log_rhs", "satisfied"], &rows)?;
    Ok(())
}
