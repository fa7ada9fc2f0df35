use std::path::{Path, PathBuf};

use lossav::anomaly::{self, Bandwidth, BootstrapData, FitSide, KernelSpec, DEFAULT_BANDWIDTH, DEFAULT_BOOTSTRAP, DEFAULT_FIT_RANGE};
use lossav::bargain::{bargain_region, dcut_dlambda, nash_wage, BargainInput};
use lossav::binprob::{predicted_props, BinCounts, BinGrid};
use lossav::estimate::{self, empirical_moments, Calibration, CovSource, EmpiricalSource, EstimationSpec, Weighting};
use lossav::io::{num, opt, read_input, write_binned, write_growth, CsvOut, Input, FORMAT_VERSION};
use lossav::policy::{
    self, mechanism, passthrough_nodes, passthrough_sweep, phi_grid, quantile_nodes, BanScenario, PassWeighting, Regime,
    SubsidyScenario, SweepRow, WageDist, DEFAULT_DELTA_SD, DEFAULT_ETA_NODES, DEFAULT_NODES, NO_NOISE,
};
use lossav::simulate::{self, simulate_binned, SimConfig};
use lossav::{Error, FamilyKind, HetFamily, ModelParams, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ModelSection;
use crate::{AnomalyArgs, BanArgs, BargainArgs, Ctx, EstimateArgs, MixArgs, ModelArgs, SimulateArgs, SubsidyArgs, VacancyArgs};

const DEFAULT_N: u64 = 1_000_000;
const DEFAULT_BIN_RANGE: f64 = 1.0;
const DEFAULT_BIN_WIDTH: f64 = 0.002;
const DEFAULT_START: [f64; 3] = [1.5, 1.0, 0.2];
const DEFAULT_LAMBDA_GRID: &str = "1:2:0.05";
const DEFAULT_MECHANISM_POINTS: usize = 401;
/// Mechanism grid half-width, in productivity scale units.
const MECHANISM_SPAN: f64 = 6.0;

fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}

fn family(s: Option<&str>) -> Result<FamilyKind> {
    s.map_or(Ok(FamilyKind::Logistic), str::parse)
}

fn model_params(a: &ModelArgs, f: &ModelSection) -> Result<ModelParams> {
    let kind = family(a.family.as_deref().or(f.family.as_deref()))?;
    let phi = HetFamily::new(kind, pick(a.mu_phi, f.mu_phi, 1.2), pick(a.sigma_phi, f.sigma_phi, 0.15))?;
    let cal = Calibration::default();
    let eps = HetFamily::new(kind, pick(a.mu_eps, f.mu_eps, cal.mu_eps), pick(a.sigma_eps, f.sigma_eps, cal.sigma_eps))?;
    ModelParams::new(pick(a.lambda, f.lambda, 1.123), phi, eps)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| invalid("json", e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_list(name: &'static str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(name, format!("`{t}` is not a number"))))
        .collect()
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [_] => parse_list("lambda_grid", s),
        [a, b, step] => {
            let v = parse_list("lambda_grid", &format!("{a},{b},{step}"))?;
            let (a, b, step) = (v[0], v[1], v[2]);
            if !(step > 0.0 && b >= a) {
                return Err(invalid("lambda_grid", "need stop >= start and step > 0"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n)
                .map(|i| {
                    let x = a + i as f64 * step;
                    if (x - b).abs() < 1e-9 * step {
                        b
                    } else {
                        x
                    }
                })
                .collect())
        }
        _ => Err(invalid("lambda_grid", format!("expected start:stop:step, got `{s}`"))),
    }
}

fn bool_flag(cli: bool, file: Option<bool>) -> bool {
    cli || file.unwrap_or(false)
}

fn raw_grid(range: f64, width: f64) -> Result<BinGrid> {
    BinGrid::symmetric(range, width, true)
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let f = &ctx.cfg.simulate;
    let params = model_params(&a.model, &ctx.cfg.model)?;
    let n = pick(a.n, f.n, DEFAULT_N);
    let grid = raw_grid(pick(a.bin_range, f.bin_range, DEFAULT_BIN_RANGE), pick(a.bin_width, f.bin_width, DEFAULT_BIN_WIDTH))?;
    let mut cfg = SimConfig::new(params, n, ctx.seed)?;
    cfg.record_rejected = bool_flag(a.record_rejected, f.record_rejected);
    let binned_only = bool_flag(a.binned_only, f.binned_only);
    let (counts, n_accepted) = if binned_only {
        let s = simulate_binned(&cfg, &grid)?;
        (s.realized, s.n_accepted)
    } else {
        let sim = simulate::simulate(&cfg)?;
        let mut out = CsvOut::create(&ctx.out.join("offers.csv"), &["phi", "eps", "offer", "accepted"])?;
        for r in &sim.offers {
            out.row(&[num(r.phi), num(r.eps), num(r.offer), u8::from(r.accepted).to_string()])?;
        }
        out.finish()?;
        write_growth(&ctx.out.join("realized.csv"), &sim.realized)?;
        (BinCounts::from_growth(grid, &sim.realized)?, sim.realized.len() as u64)
    };
    write_binned(&ctx.out.join("binned.csv"), &counts)?;
    write_json(
        &ctx.out.join("summary.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "seed": ctx.seed,
            "params": params,
            "n_jobseekers": n,
            "n_accepted": n_accepted,
            "acceptance_share": n_accepted as f64 / n as f64,
            "record_rejected": cfg.record_rejected,
            "binned_only": binned_only,
            "grid": grid,
        }),
    )
}

fn input_path(cli: &Option<PathBuf>, file: &Option<PathBuf>) -> Result<PathBuf> {
    cli.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| invalid("input", "no input file given"))
}

fn parse_bandwidth(cli: Option<&str>, file: Option<&serde_json::Value>) -> Result<Bandwidth> {
    let text = match (cli, file) {
        (Some(s), _) => s.to_string(),
        (None, Some(serde_json::Value::String(s))) => s.clone(),
        (None, Some(serde_json::Value::Number(x))) => x.to_string(),
        (None, Some(v)) => return Err(invalid("bandwidth", format!("expected a number or \"rot\", got {v}"))),
        (None, None) => return Ok(Bandwidth::Fixed(DEFAULT_BANDWIDTH)),
    };
    if text.eq_ignore_ascii_case("rot") {
        return Ok(Bandwidth::RuleOfThumb);
    }
    text.parse()
        .map(Bandwidth::Fixed)
        .map_err(|_| invalid("bandwidth", format!("expected a number or `rot`, got `{text}`")))
}

/// Fit range from `lo,hi` or a single half-width; the fit is symmetric about zero.
fn parse_range(cli: Option<&str>, file: Option<[f64; 2]>) -> Result<f64> {
    let (lo, hi) = match (cli, file) {
        (Some(s), _) => match parse_list("range", s)?.as_slice() {
            [r] => (-r, *r),
            [lo, hi] => (*lo, *hi),
            _ => return Err(invalid("range", format!("expected lo,hi, got `{s}`"))),
        },
        (None, Some([lo, hi])) => (lo, hi),
        (None, None) => (-DEFAULT_FIT_RANGE, DEFAULT_FIT_RANGE),
    };
    if !(hi > 0.0 && (lo + hi).abs() <= 1e-12 * hi) {
        return Err(invalid("range", format!("must be symmetric about zero, got {lo},{hi}")));
    }
    Ok(hi)
}

pub fn anomalies(ctx: &Ctx, a: &AnomalyArgs) -> Result<()> {
    let f = &ctx.cfg.anomalies;
    let path = input_path(&a.input, &f.input)?;
    let spec = KernelSpec::new(
        pick(a.degree, f.degree, 1),
        parse_bandwidth(a.bandwidth.as_deref(), f.bandwidth.as_ref())?,
        parse_range(a.range.as_deref(), f.range)?,
    )?;
    let grid = raw_grid(pick(a.bin_range, f.bin_range, DEFAULT_BIN_RANGE), pick(a.bin_width, f.bin_width, DEFAULT_BIN_WIDTH))?;
    let (counts, growth) = match read_input(&path)? {
        Input::Growth(g) => (BinCounts::from_growth(grid, &g)?, Some(g)),
        Input::Binned(c) => (c, None),
    };
    let props = counts.to_distribution();
    let iterations = pick(a.bootstrap, f.bootstrap, DEFAULT_BOOTSTRAP);
    let by_obs = bool_flag(a.resample_observations, f.resample_observations);
    let report = if iterations == 0 {
        anomaly::anomalies(&props, &spec)?
    } else {
        let data = match (&growth, by_obs) {
            (Some(g), true) => BootstrapData::Raw { growth: g, grid: counts.grid },
            (None, true) => return Err(invalid("resample_observations", "needs raw growth input")),
            (_, false) => BootstrapData::Counts(&counts),
        };
        anomaly::bootstrap_ses(&data, &spec, iterations, ctx.seed)?
    };
    if let (Some(c), Some(r)) = (report.bandwidth_cuts, report.bandwidth_raises) {
        println!("bandwidth cuts {c} raises {r}");
    }

    let cuts = anomaly::kernel_density(&props, &spec, FitSide::Cuts)?;
    let raises = anomaly::kernel_density(&props, &spec, FitSide::Raises)?;
    let w = props.grid.width;
    let lookup = |fit: &anomaly::SideFit, k: i64| fit.midpoints.iter().position(|&x| (x / w).round() as i64 == k).map(|i| fit.fitted[i]);
    let mut out = CsvOut::create(&ctx.out.join("anomalies_bins.csv"), &["bin_mid", "raw_prop", "smoothed_cut", "smoothed_raise"])?;
    for (k, p) in props.grid.indices().zip(&props.props) {
        let x = k as f64 * w;
        if x.abs() > spec.fit_range + 1e-9 * w {
            continue;
        }
        let cut = if k <= 0 { lookup(&cuts, k) } else { None };
        let raise = if k >= 0 { lookup(&raises, k) } else { None };
        out.row(&[num(x), num(*p), opt(cut), opt(raise)])?;
    }
    out.finish()?;

    write_json(
        &ctx.out.join("anomalies.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "input": path,
            "n_obs": counts.total,
            "kernel": spec,
            "bootstrap": iterations,
            "resample_observations": by_obs,
            "seed": ctx.seed,
            "report": report,
        }),
    )
}

fn parse_start(cli: Option<&str>, file: Option<[f64; 3]>) -> Result<[f64; 3]> {
    match (cli, file) {
        (Some(s), _) => match parse_list("start", s)?.as_slice() {
            [l, m, sd] => Ok([*l, *m, *sd]),
            _ => Err(invalid("start", format!("expected lambda,mu_phi,sigma_phi, got `{s}`"))),
        },
        (None, Some(v)) => Ok(v),
        (None, None) => Ok(DEFAULT_START),
    }
}

pub fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let f = &ctx.cfg.estimate;
    let path = input_path(&a.input, &f.input)?;
    let counts = read_input(&path)?.into_counts(raw_grid(
        pick(a.bin_range, f.bin_range, DEFAULT_BIN_RANGE),
        pick(a.bin_width, f.bin_width, DEFAULT_BIN_WIDTH),
    )?)?;
    let defaults = EstimationSpec::default();
    let spec = EstimationSpec {
        grid: BinGrid::symmetric(
            pick(a.range, f.range, defaults.grid.hi),
            counts.grid.width,
            bool_flag(a.include_zero_bin, f.include_zero_bin),
        )?,
        weights: if bool_flag(a.optimal_weights, f.optimal_weights) {
            Weighting::Optimal
        } else {
            Weighting::Identity
        },
        het_family: family(a.family.as_deref().or(f.family.as_deref()))?,
        empirical_source: if bool_flag(a.raw_props, f.raw_props) {
            EmpiricalSource::RawProportions
        } else {
            EmpiricalSource::KernelSmoothed
        },
        calibration: Calibration {
            mu_eps: pick(a.mu_eps, f.mu_eps, defaults.calibration.mu_eps),
            sigma_eps: pick(a.sigma_eps, f.sigma_eps, defaults.calibration.sigma_eps),
        },
        restrict_lambda_to_one: bool_flag(a.restrict_lambda, f.restrict_lambda),
        kernel: KernelSpec {
            degree: pick(a.degree, f.degree, defaults.kernel.degree),
            bandwidth: Bandwidth::Fixed(pick(a.bandwidth, f.bandwidth, DEFAULT_BANDWIDTH)),
            ..defaults.kernel
        },
        gof_scale: pick(a.gof_scale, f.gof_scale, defaults.gof_scale),
        qlr_scale: pick(a.qlr_scale, f.qlr_scale, defaults.qlr_scale),
        qlr_boundary: !bool_flag(a.naive_qlr, f.naive_qlr),
    };
    spec.validate()?;
    let [l0, m0, s0] = parse_start(a.start.as_deref(), f.start)?;
    let start = spec.params(if spec.restrict_lambda_to_one { 1.0 } else { l0 }, m0, s0)?;
    let iterations = pick(a.bootstrap, f.bootstrap, DEFAULT_BOOTSTRAP);
    let cov = if bool_flag(a.analytic_cov, f.analytic_cov) {
        CovSource::Analytic
    } else {
        CovSource::Bootstrap {
            iterations,
            seed: ctx.seed,
        }
    };
    let est = estimate::estimate(&BootstrapData::Counts(&counts), &spec, &start, cov)?;

    let empirical = empirical_moments(&counts.to_distribution(), &spec)?.dist;
    let behavioral = predicted_props(&est.main.params(&spec)?, &spec.grid)?;
    let standard = match &est.standard {
        Some(s) => Some(predicted_props(&s.params(&spec.restricted())?, &spec.grid)?),
        None => None,
    };
    let mut out = CsvOut::create(
        &ctx.out.join("fit.csv"),
        &["bin_mid", "empirical", "predicted_behavioral", "predicted_standard"],
    )?;
    for (i, x) in spec.grid.midpoints().into_iter().enumerate() {
        let std = standard.as_ref().map(|s| s.props[i]);
        out.row(&[num(x), num(empirical.props[i]), num(behavioral.props[i]), opt(std)])?;
    }
    out.finish()?;

    let m = &est.main;
    let gof = json!({
        "chi2": m.gof_chi2,
        "dof": m.gof_dof,
        "critical": m.gof_critical,
        "reject": m.gof_chi2.zip(m.gof_critical).map(|(q, c)| q > c),
    });
    let qlr = m.qlr_chi2.zip(m.qlr_critical).map(|(q, c)| {
        json!({ "chi2": q, "critical": c, "boundary_corrected": spec.qlr_boundary, "reject": q > c })
    });
    write_json(
        &ctx.out.join("estimate.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "input": path,
            "n_obs": counts.total,
            "spec": spec,
            "covariance": cov,
            "start": [l0, m0, s0],
            "behavioral": est.main,
            "standard": est.standard,
            "gof": gof,
            "qlr": qlr,
        }),
    )
}

pub fn mix(ctx: &Ctx, a: &MixArgs) -> Result<()> {
    let p = &ctx.cfg.policy;
    let params = model_params(&a.model, &ctx.cfg.model)?;
    let lambdas = parse_grid(a.lambda_grid.as_deref().or(p.lambda_grid.as_deref()).unwrap_or(DEFAULT_LAMBDA_GRID))?;
    let rows = policy::mix_sweep(&params, &lambdas)?;
    let mut out = CsvOut::create(
        &ctx.out.join("mix.csv"),
        &["lambda", "share_cuts", "share_matches", "share_raises", "avg_offer", "avg_cut", "avg_raise"],
    )?;
    for (l, m) in rows {
        out.row(&[
            num(l),
            num(m.share_cuts),
            num(m.share_matches),
            num(m.share_raises),
            num(m.avg_offer),
            opt(m.avg_cut),
            opt(m.avg_raise),
        ])?;
    }
    out.finish()
}

/// Subsidy in log points: an explicit `delta` wins over `delta_sd` at each level.
fn resolve_delta(ctx: &Ctx, a: &SubsidyArgs, params: &ModelParams) -> Result<f64> {
    let p = &ctx.cfg.policy;
    let sd = params.phi.std_dev();
    let delta = match (a.delta, a.delta_sd, p.delta, p.delta_sd) {
        (Some(d), ..) => d,
        (None, Some(k), ..) => k * sd,
        (None, None, Some(d), _) => d,
        (None, None, None, k) => k.unwrap_or(DEFAULT_DELTA_SD) * sd,
    };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("subsidy must be positive, got {delta}")));
    }
    Ok(delta)
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        &["lambda", "delta", "passthrough_total", "passthrough_marginal", "passthrough_inframarginal"],
    )?;
    for r in rows {
        out.row(&[
            num(r.lambda),
            num(r.delta),
            num(r.passthrough_total),
            num(r.passthrough_marginal),
            num(r.passthrough_inframarginal),
        ])?;
    }
    out.finish()
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Cut => "cut",
        Regime::Matched => "matched",
        Regime::CutToRaise => "cut_to_raise",
        Regime::Raise => "raise",
    }
}

struct SubsidySetup {
    params: ModelParams,
    lambdas: Vec<f64>,
    delta: f64,
    nodes: usize,
}

fn subsidy_setup(ctx: &Ctx, a: &SubsidyArgs) -> Result<SubsidySetup> {
    let p = &ctx.cfg.policy;
    let params = model_params(&a.model, &ctx.cfg.model)?;
    Ok(SubsidySetup {
        lambdas: parse_grid(a.lambda_grid.as_deref().or(p.lambda_grid.as_deref()).unwrap_or(DEFAULT_LAMBDA_GRID))?,
        delta: resolve_delta(ctx, a, &params)?,
        nodes: pick(a.nodes, p.nodes, DEFAULT_NODES),
        params,
    })
}

pub fn subsidy(ctx: &Ctx, a: &SubsidyArgs) -> Result<()> {
    let s = subsidy_setup(ctx, a)?;
    let rows = passthrough_sweep(&s.params, &s.lambdas, &[s.delta], &NO_NOISE, s.nodes)?;
    write_sweep(&ctx.out.join("subsidy_sweep.csv"), &rows)?;

    let points = pick(a.mechanism_points, ctx.cfg.policy.mechanism_points, DEFAULT_MECHANISM_POINTS);
    let phis = phi_grid(&s.params, points, MECHANISM_SPAN)?;
    let mut out = CsvOut::create(
        &ctx.out.join("mechanism.csv"),
        &["phi", "offer_nosub", "offer_sub", "passthrough", "regime"],
    )?;
    for r in mechanism(&SubsidyScenario::new(s.params, s.delta)?, &phis)? {
        out.row(&[num(r.phi), num(r.offer_nosub), num(r.offer_sub), num(r.passthrough), regime_name(r.regime).into()])?;
    }
    out.finish()?;

    let behavioral = passthrough_nodes(&s.params, s.delta, &NO_NOISE, s.nodes, PassWeighting::Accepted)?;
    let standard = passthrough_nodes(&s.params.with_lambda(1.0)?, s.delta, &NO_NOISE, s.nodes, PassWeighting::Accepted)?;
    write_json(
        &ctx.out.join("subsidy.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "params": s.params,
            "delta": s.delta,
            "delta_sd": s.delta / s.params.phi.std_dev(),
            "nodes": s.nodes,
            "behavioral": behavioral,
            "standard": standard,
            "reduction": 1.0 - behavioral.passthrough_total / standard.passthrough_total,
        }),
    )
}

pub fn ban(ctx: &Ctx, a: &BanArgs) -> Result<()> {
    let p = &ctx.cfg.policy;
    let s = subsidy_setup(ctx, &a.subsidy)?;
    let scale = pick(a.eta_scale, p.eta_scale, 0.0);
    let n_eta = pick(a.eta_nodes, p.eta_nodes, DEFAULT_ETA_NODES);
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(invalid("eta_scale", format!("must be >= 0, got {scale}")));
    }
    let eta = if scale > 0.0 {
        Some(HetFamily::new(s.params.phi.kind, 0.0, scale)?)
    } else {
        None
    };
    let nodes = match &eta {
        Some(e) => quantile_nodes(e, n_eta)?,
        None => NO_NOISE.to_vec(),
    };
    let rows = passthrough_sweep(&s.params, &s.lambdas, &[s.delta], &nodes, s.nodes)?;
    write_sweep(&ctx.out.join("ban_sweep.csv"), &rows)?;
    let outcome = passthrough_nodes(&s.params, s.delta, &nodes, s.nodes, PassWeighting::Accepted)?;

    let n = pick(a.mc_n, p.mc_n, DEFAULT_N);
    let mc = if n > 0 {
        let grid = raw_grid(DEFAULT_BIN_RANGE, DEFAULT_BIN_WIDTH)?;
        let sum = match &eta {
            Some(e) => policy::ban_growth(&BanScenario::new(s.params, *e)?, n, ctx.seed, &grid)?,
            None => simulate_binned(&SimConfig::new(s.params, n, ctx.seed)?, &grid)?,
        };
        write_binned(&ctx.out.join("ban_growth.csv"), &sum.realized)?;
        let zero = sum.realized.to_distribution().get(0);
        Some(json!({
            "n_jobseekers": n,
            "n_accepted": sum.n_accepted,
            "zero_bin_share": zero,
        }))
    } else {
        None
    };
    write_json(
        &ctx.out.join("ban.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "params": s.params,
            "eta": eta,
            "eta_nodes": nodes.len(),
            "delta": s.delta,
            "nodes": s.nodes,
            "seed": ctx.seed,
            "outcome": outcome,
            "monte_carlo": mc,
        }),
    )
}

pub fn vacancies(ctx: &Ctx, a: &VacancyArgs) -> Result<()> {
    let p = &ctx.cfg.policy;
    let c = a.c.or(p.c).ok_or_else(|| invalid("c", "vacancy cost is required"))?;
    let (pbar, psi) = match (a.pbar, a.psi.or(p.psi), p.pbar) {
        (Some(pbar), ..) => (pbar, None),
        (None, Some(psi), _) => {
            let params = model_params(&a.model, &ctx.cfg.model)?;
            let wages_file = a.wages.clone().or_else(|| p.wages.clone());
            let pbar = match wages_file {
                Some(path) => match read_input(&path)? {
                    Input::Binned(w) => policy::expected_vacancy_profit(&params, psi, WageDist::Binned(&w.to_distribution()))?,
                    Input::Growth(_) => return Err(invalid("wages", "expected binned wages `bin_mid,prop,count`")),
                },
                None => policy::expected_vacancy_profit(&params, psi, WageDist::Point(pick(a.wage, p.wage, 0.0)))?,
            };
            (pbar, Some(psi))
        }
        (None, None, Some(pbar)) => (pbar, None),
        (None, None, None) => return Err(invalid("pbar", "give --pbar or --psi")),
    };
    let v = policy::optimal_vacancies(pbar, c)?;
    println!("{v}");
    write_json(
        &ctx.out.join("vacancies.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "c": c,
            "psi": psi,
            "expected_profit": pbar,
            "vacancies": v,
        }),
    )
}

pub fn bargain(a: &BargainArgs) -> Result<()> {
    let inp = BargainInput::new(a.beta, a.lambda, a.eps, a.phi)?;
    let outcome = nash_wage(&inp)?;
    let value = json!({
        "format_version": FORMAT_VERSION,
        "input": inp,
        "region": bargain_region(&inp),
        "outcome": outcome,
        "dcut_dlambda": dcut_dlambda(&inp).ok(),
    });
    println!("{}", serde_json::to_string_pretty(&value).map_err(|e| invalid("json", e.to_string()))?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_is_inclusive() {
        let g = parse_grid("1:2:0.05").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[20], 2.0);
        assert_eq!(parse_grid("1,1.5").unwrap(), vec![1.0, 1.5]);
        assert!(parse_grid("2:1:0.1").is_err());
    }

    #[test]
    fn range_must_be_symmetric() {
        assert_eq!(parse_range(Some("-0.2,0.2"), None).unwrap(), 0.2);
        assert_eq!(parse_range(Some("0.1"), None).unwrap(), 0.1);
        assert!(parse_range(Some("-0.1,0.2"), None).is_err());
        assert_eq!(parse_range(None, None).unwrap(), DEFAULT_FIT_RANGE);
    }

    #[test]
    fn bandwidth_flag() {
        assert_eq!(parse_bandwidth(Some("rot"), None).unwrap(), Bandwidth::RuleOfThumb);
        assert_eq!(parse_bandwidth(None, Some(&json!(0.01))).unwrap(), Bandwidth::Fixed(0.01));
        assert_eq!(parse_bandwidth(None, None).unwrap(), Bandwidth::Fixed(DEFAULT_BANDWIDTH));
        assert!(parse_bandwidth(Some("wide"), None).is_err());
    }
}
