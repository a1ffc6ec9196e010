use conc_lab::concentration::{
    equivalence_experiment, equivalence_round_trip, exact_product_concentration, fit_tail, fit_weights,
    marton_profile, profile_from_tails, sublevel_tails, two_level_experiment, BoundShape, ConcentrationProfile,
    Direction, Enlargement, EquivalenceConfig, EquivalenceReport, FittedTail, ProfileParams, SetFamily, TailProfile,
    TailSource, TwoLevelConfig,
};
use conc_lab::rates::{best_constant, default_thresholds, InequalityForm};
use conc_lab::rng::StreamId;
use serde_json::{json, Value};

use super::{cost_of, load_measure, positive_support, rate_options};
use crate::output::{num, Cell};
use crate::{row, CliError, CliResult, Params, Run};

/// Largest product space enumerated for the random-set family.
const RANDOM_FAMILY_CAP: u128 = 1 << 14;

fn params_json(p: &ProfileParams) -> Value {
    json!({ "a": num(p.a), "b": num(p.b), "r0": num(p.r0), "shape": format!("{:?}", p.shape).to_lowercase() })
}

fn fit_json(f: &Option<FittedTail>) -> Value {
    match f {
        Some(f) => json!({
            "a": num(f.params.a),
            "b": num(f.params.b),
            "r0": num(f.params.r0),
            "residual": num(f.residual),
            "points": f.points,
            "censored": f.censored,
            "b_clamped": f.b_clamped,
        }),
        None => Value::Null,
    }
}

fn profile_rows(prof: &ConcentrationProfile) -> Vec<Vec<Cell>> {
    (0..prof.r_values.len())
        .map(|j| {
            let (lo, hi) = prof.ci.as_ref().map_or((prof.observed[j], prof.observed[j]), |c| c[j]);
            row![prof.r_values[j], prof.observed[j], prof.lower_bounds[j], lo, hi]
        })
        .collect()
}

fn exponent(cost: &conc_lab::costs::CostKind) -> CliResult<f64> {
    match cost.metric_exponent() {
        Some(e) if e == 1.0 || e == 2.0 => Ok(e),
        _ => Err(CliError::ConfigInvalid(format!(
            "concentration profiles need `power:p=1` or `quadratic`, got `{cost}`"
        ))),
    }
}

pub fn concentrate(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let mu = load_measure(p, "measure")?;
    let n = p.usize("n")?.unwrap_or(10);
    let cost = cost_of(p, "power:p=1")?;
    let e = exponent(&cost)?;
    let r_grid = p.grid("r_grid")?.unwrap_or_else(|| (0..=30).map(|i| 0.1 * i as f64).collect());
    let trials = p.u64("trials")?.unwrap_or(10_000);
    let sets = p.usize("sets")?.unwrap_or(1000);
    let stream = StreamId::new(seed, 0);
    let constant = match p.f64("constant")? {
        Some(c) if c >= 0.0 => c,
        Some(c) => return Err(CliError::ConfigInvalid(format!("constant must be nonnegative, got {c}"))),
        None => {
            let thresholds = default_thresholds(&mu, &cost, 24)?;
            best_constant(&mu, &cost, InequalityForm::Squared, &thresholds, &rate_options(p, seed)?)?.constant
        }
    };
    let family = p.str("family")?.unwrap_or_else(|| "sublevel".into());
    let (profile, fit, guaranteed) = match family.as_str() {
        "sublevel" => {
            // P(F_n > m_n + r/√n) ≤ e^{−(r − r₀)²/C}
            let params = marton_profile(constant)?;
            let source = if p.bool("exact")?.unwrap_or(false) {
                TailSource::prefer_exact(positive_support(&mu), n, trials, stream.labeled("tails"))
            } else {
                TailSource::MonteCarlo { trials, stream: stream.labeled("tails") }
            };
            let tails = sublevel_tails(&mu, &cost, n, &r_grid, &source)?;
            let fit = fit_tail(&tails.r_values, &tails.tails, &fit_weights(&tails), BoundShape::Gaussian);
            run.result("median", num(tails.median));
            (profile_from_tails(&tails, &params, "sublevel_fn"), fit, params)
        }
        "random" => {
            // ρ₁ⁿ carries the W₁ constant multiplied by n; ρ₂ⁿ keeps it
            let (enlargement, c_n) =
                if e == 2.0 { (Enlargement::Rho { p: 2.0 }, constant) } else { (Enlargement::Rho { p: 1.0 }, n as f64 * constant) };
            let params = marton_profile(c_n)?;
            let prof = exact_product_concentration(
                &mu,
                n,
                &enlargement,
                &SetFamily::RandomHalf { count: sets },
                &r_grid,
                &params,
                RANDOM_FAMILY_CAP,
                stream.labeled("sets"),
            )?;
            let tails: Vec<f64> = prof.observed.iter().map(|o| 1.0 - o).collect();
            let fit = fit_tail(&prof.r_values, &tails, &vec![1.0; tails.len()], BoundShape::Gaussian);
            (prof, fit, params)
        }
        other => return Err(CliError::ConfigInvalid(format!("family must be `random` or `sublevel`, got `{other}`"))),
    };
    run.check("profile_violations", profile.violations == 0, profile.violations as f64, 0.0);
    run.write_csv("profile.csv", &["r", "observed", "guaranteed", "ci_low", "ci_high"], &profile_rows(&profile))?;
    run.write_plot("observed", &profile.r_values, &profile.observed)?;
    run.write_plot("guaranteed", &profile.r_values, &profile.lower_bounds)?;
    run.result("family", json!(profile.family));
    run.result("n", json!(n));
    run.result("constant", num(constant));
    run.result("guaranteed", params_json(&guaranteed));
    run.result("fitted", fit_json(&fit));
    run.result("sets_tested", json!(profile.sets_tested));
    run.result("violations", json!(profile.violations));
    run.result("worst_margin", num(profile.worst_margin));
    Ok(())
}

fn equivalence_config(p: &Params, seed: u64) -> CliResult<EquivalenceConfig> {
    let mut cfg = EquivalenceConfig {
        stream: StreamId::new(seed, 0).labeled("equivalence"),
        rate_options: rate_options(p, seed)?,
        ..EquivalenceConfig::default()
    };
    if p.str("cost")?.is_some() {
        cfg.cost = cost_of(p, "power:p=1")?;
    }
    if let Some(v) = p.usize_list("n_list")? {
        cfg.n_list = v;
    }
    if let Some(v) = p.grid("r_grid")? {
        cfg.r_list = v;
    }
    if let Some(v) = p.u64("trials")? {
        cfg.trials = v;
    }
    if let Some(v) = p.bool("exact_tails")? {
        cfg.exact_tails = v;
    }
    if let Some(v) = p.usize("n_exact")? {
        cfg.n_exact = v;
    }
    if let Some(v) = p.usize("sets")? {
        cfg.sets = v;
    }
    if let Some(v) = p.usize("thresholds")? {
        cfg.thresholds = v;
    }
    if let Some(v) = p.f64("slack")? {
        cfg.slack = v;
    }
    Ok(cfg)
}

fn tail_rows(label: &str, t: &TailProfile, rows: &mut Vec<Vec<Cell>>) {
    for j in 0..t.r_values.len() {
        rows.push(row![label, t.n, t.r_values[j], t.thresholds[j], t.tails[j], t.ci[j].0, t.ci[j].1, t.exact]);
    }
}

const TAIL_HEADER: [&str; 8] = ["direction", "n", "r", "threshold", "tail", "ci_low", "ci_high", "exact"];

fn record_equivalence(rep: &EquivalenceReport, run: &mut Run, tails: &mut Vec<Vec<Cell>>, fits: &mut Vec<Vec<Cell>>) {
    let label = rep.direction.to_string();
    for c in &rep.checks {
        run.check(&format!("{label}:{}", c.name), c.passed, c.value, c.limit);
    }
    for nf in &rep.profiles {
        tail_rows(&label, &nf.tails, tails);
        if let Some(f) = &nf.fit {
            fits.push(row![label.as_str(), nf.n, f.params.a, f.params.b, f.params.r0, f.residual, f.b_clamped]);
        }
    }
    run.result(
        &label,
        json!({
            "constant": num(rep.constant),
            "certified_constant": num(rep.certified.constant),
            "small_t_limit": rep.certified.small_t_limit.map(num),
            "exact_product_violations": rep.exact_product.iter().map(|p| p.violations).sum::<usize>(),
            "fits": rep.profiles.iter().map(|nf| json!({ "n": nf.n, "fit": fit_json(&nf.fit) })).collect::<Vec<_>>(),
            "passed": rep.passed,
        }),
    );
}

pub fn equivalence(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let mu = load_measure(p, "measure")?;
    let cfg = equivalence_config(p, seed)?;
    let direction = p.str("direction")?.unwrap_or_else(|| "both".into());
    let mut tails = Vec::new();
    let mut fits = Vec::new();
    if direction == "both" {
        let rt = equivalence_round_trip(&mu, &cfg)?;
        record_equivalence(&rt.forward, run, &mut tails, &mut fits);
        record_equivalence(&rt.backward, run, &mut tails, &mut fits);
        run.check("round_trip_gap", rt.relative_gap <= cfg.slack, rt.relative_gap, cfg.slack);
        run.result("relative_gap", num(rt.relative_gap));
    } else {
        let d: Direction = direction.parse().map_err(|e: conc_lab::Error| CliError::ConfigInvalid(e.to_string()))?;
        let rep = equivalence_experiment(&mu, d, &cfg)?;
        record_equivalence(&rep, run, &mut tails, &mut fits);
    }
    run.result("slack", num(cfg.slack));
    run.result("trials", json!(cfg.trials));
    run.write_csv("tails.csv", &TAIL_HEADER, &tails)?;
    run.write_csv("fits.csv", &["direction", "n", "a", "b", "r0", "residual", "b_clamped"], &fits)?;
    Ok(())
}

pub fn two_level(p: &Params, seed: u64, run: &mut Run) -> CliResult<()> {
    let mu = load_measure(p, "measure")?;
    let exponent = p.f64("p")?.unwrap_or(1.0);
    let n = p.usize("n")?.unwrap_or(40);
    let trials = p.u64("trials")?.unwrap_or(10_000);
    let r_grid = p.grid("r_grid")?.unwrap_or_default();
    let mut cfg = TwoLevelConfig {
        stream: StreamId::new(seed, 0).labeled("two-level"),
        rate_options: rate_options(p, seed)?,
        ..TwoLevelConfig::default()
    };
    if let Some(v) = p.bool("exact_tails")? {
        cfg.exact_tails = v;
    }
    if let Some(v) = p.usize("n_exact")? {
        cfg.n_exact = v;
    }
    if let Some(v) = p.usize("sets")? {
        cfg.sets = v;
    }
    if let Some(v) = p.usize("thresholds")? {
        cfg.thresholds = v;
    }
    let rep = two_level_experiment(&mu, exponent, n, &r_grid, trials, &cfg)?;
    for c in &rep.checks {
        run.check(&c.name, c.passed, c.value, c.limit);
    }
    let mut rows = Vec::new();
    tail_rows("converse", &rep.converse_tails, &mut rows);
    run.write_csv("tails.csv", &TAIL_HEADER, &rows)?;
    if let Some(prof) = &rep.exact_two_level {
        run.write_csv("profile_two_level.csv", &["r", "observed", "guaranteed", "ci_low", "ci_high"], &profile_rows(prof))?;
    }
    if let Some(prof) = &rep.exact_minkowski {
        run.write_csv("profile_minkowski.csv", &["r", "observed", "guaranteed", "ci_low", "ci_high"], &profile_rows(prof))?;
    }
    run.result("p", num(rep.p));
    run.result("n", json!(rep.n));
    run.result("certified_constant", num(rep.certified.constant));
    run.result("forward", params_json(&rep.forward));
    run.result("converse_fit", fit_json(&rep.converse_fit));
    run.result("implied_constant", num(rep.implied_constant));
    run.result("alpha_scaling_violations", json!(rep.alpha_scaling_violations));
    Ok(())
}
