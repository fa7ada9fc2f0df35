//! Minimum-distance estimation of `(lambda, mu_phi, sigma_phi)` from binned
//! wage-change proportions, with sandwich standard errors, an
//! overidentification test and a distance test of `lambda = 1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::anomaly::{resample, smoother_matrix, validate_bootstrap, Bandwidth, BootstrapData, KernelSpec};
use crate::binprob::{predicted_props, BinGrid, BinnedDistribution};
use crate::dist::{FamilyKind, HetFamily};
use crate::error::{finite, Error, Result};
use crate::model::ModelParams;
use crate::numeric::nelder_mead;

/// Soft floor used when mapping a starting `lambda` to `ln(lambda - 1)`.
const XI: f64 = 1e-8;
const XTOL: f64 = 1e-8;
const FTOL: f64 = 1e-12;
const MAX_EVALS: usize = 4000;
/// Relative finite-difference step for the Jacobian.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Identity,
    /// Inverse multinomial variance `n / (p (1 - p))` of each empirical moment.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalSource {
    /// Non-zero bins replaced by their local polynomial fit; zero bin left raw.
    KernelSmoothed,
    RawProportions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mu_eps: f64,
    pub sigma_eps: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            mu_eps: 0.0,
            sigma_eps: 0.611,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSpec {
    pub grid: BinGrid,
    pub weights: Weighting,
    pub het_family: FamilyKind,
    pub empirical_source: EmpiricalSource,
    pub calibration: Calibration,
    pub restrict_lambda_to_one: bool,
    /// Smoother for `KernelSmoothed`; its fit range is the data grid's.
    pub kernel: KernelSpec,
    /// Moment scaling for the overidentification test (100 = percentages).
    pub gof_scale: f64,
    /// Moment scaling for the distance test (1 = proportions).
    pub qlr_scale: f64,
    /// Use the boundary-corrected critical value for the distance test
    /// (half the null mass sits at zero because `lambda >= 1`).
    pub qlr_boundary: bool,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        EstimationSpec {
            grid: BinGrid::symmetric(0.2, 0.002, false).expect("valid default grid"),
            weights: Weighting::Identity,
            het_family: FamilyKind::Logistic,
            empirical_source: EmpiricalSource::KernelSmoothed,
            calibration: Calibration::default(),
            restrict_lambda_to_one: false,
            kernel: KernelSpec::default(),
            gof_scale: 100.0,
            qlr_scale: 1.0,
            qlr_boundary: true,
        }
    }
}

impl EstimationSpec {
    pub fn validate(&self) -> Result<()> {
        finite("mu_eps", self.calibration.mu_eps)?;
        finite("sigma_eps", self.calibration.sigma_eps)?;
        if self.calibration.sigma_eps <= 0.0 {
            return Err(Error::invalid("sigma_eps", "must be > 0"));
        }
        for (name, v) in [("gof_scale", self.gof_scale), ("qlr_scale", self.qlr_scale)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.grid.len() <= self.n_free() {
            return Err(Error::invalid("grid", "fewer bins than free parameters"));
        }
        if self.empirical_source == EmpiricalSource::KernelSmoothed {
            if let Bandwidth::RuleOfThumb = self.kernel.bandwidth {
                return Err(Error::invalid("bandwidth", "estimation needs a fixed smoothing bandwidth"));
            }
            self.kernel.validate()?;
        }
        Ok(())
    }

    pub fn n_free(&self) -> usize {
        if self.restrict_lambda_to_one {
            2
        } else {
            3
        }
    }

    /// Same specification with `lambda` fixed at one.
    pub fn restricted(&self) -> Self {
        EstimationSpec {
            restrict_lambda_to_one: true,
            ..*self
        }
    }

    /// Model parameters under this specification's family and calibration.
    pub fn params(&self, lambda: f64, mu_phi: f64, sigma_phi: f64) -> Result<ModelParams> {
        let phi = HetFamily::new(self.het_family, mu_phi, sigma_phi)?;
        let eps = HetFamily::new(self.het_family, self.calibration.mu_eps, self.calibration.sigma_eps)?;
        ModelParams::new(lambda, phi, eps)
    }
}

/// Empirical moments on the estimation grid and the linear map that produced
/// them from the raw proportions on the data grid.
#[derive(Debug, Clone)]
pub struct Moments {
    pub dist: BinnedDistribution,
    /// Rows: estimation bins; columns: bins of `source`.
    pub transform: DMatrix<f64>,
    pub source: BinGrid,
}

impl Moments {
    /// Covariance of the moments given a covariance of raw proportions on
    /// the data grid.
    pub fn covariance(&self, raw_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.source.len();
        if raw_cov.nrows() != n || raw_cov.ncols() != n {
            return Err(Error::BinMismatch(format!("covariance is {}x{} for {n} bins", raw_cov.nrows(), raw_cov.ncols())));
        }
        Ok(&self.transform * raw_cov * self.transform.transpose())
    }

    /// Source bins that any moment depends on.
    pub fn support(&self) -> Vec<usize> {
        (0..self.transform.ncols())
            .filter(|&j| self.transform.column(j).iter().any(|&v| v != 0.0))
            .collect()
    }

    /// Moment covariance from bootstrap draws of the raw proportions, using
    /// only the source bins in the support of the transform.
    pub fn bootstrap_covariance(&self, data: &BootstrapData<'_>, iterations: usize, seed: u64) -> Result<DMatrix<f64>> {
        let base = validate_bootstrap(data, iterations)?;
        if !base.grid.same_layout(&self.source) {
            return Err(Error::BinMismatch("bootstrap data are not on the moments' source grid".into()));
        }
        let cols = self.support();
        let cov = draws_cov(data, iterations, seed, &cols)?;
        let t = DMatrix::from_fn(self.transform.nrows(), cols.len(), |i, j| self.transform[(i, cols[j])]);
        Ok(&t * cov * t.transpose())
    }
}

/// Raw proportions restricted to the estimation grid, or kernel estimates
/// fitted on the whole data grid (so the edges of the estimation window are
/// interior points) and then restricted.
pub fn empirical_moments(raw: &BinnedDistribution, spec: &EstimationSpec) -> Result<Moments> {
    spec.validate()?;
    if (raw.grid.width - spec.grid.width).abs() > 1e-12 * spec.grid.width {
        return Err(Error::BinMismatch(format!("data bin width {} differs from {}", raw.grid.width, spec.grid.width)));
    }
    let dist = raw.restrict(spec.grid)?;
    let slots: Vec<usize> = spec.grid.indices().map(|k| raw.grid.slot(k).expect("restrict checked")).collect();
    let select = |m: &DMatrix<f64>| DMatrix::from_fn(slots.len(), m.ncols(), |i, j| m[(slots[i], j)]);
    let n = raw.grid.len();
    Ok(match spec.empirical_source {
        EmpiricalSource::RawProportions => Moments {
            dist,
            transform: select(&DMatrix::identity(n, n)),
            source: raw.grid,
        },
        EmpiricalSource::KernelSmoothed => {
            let kernel = KernelSpec {
                fit_range: raw.grid.hi.max(-raw.grid.lo),
                ..spec.kernel
            };
            let s = select(&smoother_matrix(&raw.grid, &kernel)?);
            let y = &s * DVector::from_column_slice(&raw.props);
            Moments {
                dist: BinnedDistribution {
                    grid: spec.grid,
                    props: y.iter().copied().collect(),
                    n_obs: raw.n_obs,
                },
                transform: s,
                source: raw.grid,
            }
        }
    })
}

fn moment_weights(empirical: &BinnedDistribution, spec: &EstimationSpec) -> Result<Vec<f64>> {
    match spec.weights {
        Weighting::Identity => Ok(vec![1.0; empirical.props.len()]),
        Weighting::Optimal => {
            let n = empirical
                .n_obs
                .ok_or_else(|| Error::invalid("weights", "optimal weights need the number of observations"))? as f64;
            empirical
                .props
                .iter()
                .map(|&p| {
                    if p > 0.0 && p < 1.0 {
                        Ok(n / (p * (1.0 - p)))
                    } else {
                        Err(Error::Degenerate(format!("optimal weight undefined for proportion {p}")))
                    }
                })
                .collect()
        }
    }
}

fn check_grid(empirical: &BinnedDistribution, spec: &EstimationSpec) -> Result<()> {
    if !empirical.grid.same_layout(&spec.grid) {
        return Err(Error::BinMismatch("empirical moments are not on the estimation grid".into()));
    }
    Ok(())
}

fn weighted_ss(pred: &[f64], emp: &[f64], w: &[f64]) -> f64 {
    pred.iter().zip(emp).zip(w).map(|((p, e), w)| w * (p - e) * (p - e)).sum()
}

/// Weighted sum of squared distances between predicted and empirical moments.
pub fn criterion(p: &ModelParams, empirical: &BinnedDistribution, spec: &EstimationSpec) -> Result<f64> {
    check_grid(empirical, spec)?;
    let w = moment_weights(empirical, spec)?;
    let pred = predicted_props(p, &spec.grid)?;
    Ok(weighted_ss(&pred.props, &empirical.props, &w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ses {
    /// Absent when `lambda` is fixed at one.
    pub lambda: Option<f64>,
    pub mu_phi: f64,
    pub sigma_phi: f64,
}

/// Pieces of a fit needed for inference.
#[derive(Debug, Clone)]
pub struct FitContext {
    pub empirical: DVector<f64>,
    pub predicted: DVector<f64>,
    pub weights: DVector<f64>,
    /// Derivatives of predicted moments in the free natural parameters.
    pub jacobian: DMatrix<f64>,
    /// `(G'WG)^-1`.
    pub bread_inv: DMatrix<f64>,
    /// Sandwich covariance of the free parameters, once a moment covariance is supplied.
    pub vcov: Option<DMatrix<f64>>,
    pub moment_cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub lambda_hat: f64,
    pub mu_phi_hat: f64,
    pub sigma_phi_hat: f64,
    pub ses: Option<Ses>,
    pub criterion: f64,
    pub gof_chi2: Option<f64>,
    pub gof_dof: Option<usize>,
    pub gof_critical: Option<f64>,
    pub qlr_chi2: Option<f64>,
    pub qlr_critical: Option<f64>,
    /// `lambda_hat - 1 < 2 SE`.
    pub near_boundary: Option<bool>,
    pub restricted: bool,
    pub converged: bool,
    pub n_evals: usize,
    #[serde(skip)]
    pub context: Option<FitContext>,
}

impl EstimationResult {
    pub fn params(&self, spec: &EstimationSpec) -> Result<ModelParams> {
        spec.params(self.lambda_hat, self.mu_phi_hat, self.sigma_phi_hat)
    }

    fn context(&self) -> Result<&FitContext> {
        self.context
            .as_ref()
            .ok_or_else(|| Error::invalid("result", "no fit context; use a result returned by fit"))
    }
}

fn to_theta(start: &ModelParams, restricted: bool) -> Vec<f64> {
    let mut t = Vec::with_capacity(3);
    if !restricted {
        t.push((start.lambda - 1.0 + XI).ln());
    }
    t.push(start.phi.location);
    t.push(start.phi.scale.ln());
    t
}

fn from_theta(theta: &[f64], restricted: bool) -> (f64, f64, f64) {
    if restricted {
        (1.0, theta[0], theta[1].exp())
    } else {
        (1.0 + theta[0].exp(), theta[1], theta[2].exp())
    }
}

/// Starting lattice around `x0`: the start itself plus four points offset by
/// one unit in `ln(lambda - 1)`, half a scale in `mu_phi` and 0.3 in
/// `ln sigma_phi`, with signs on a half-fraction of the cube.
fn starts(x0: &[f64], sigma: f64, restricted: bool) -> Vec<Vec<f64>> {
    let signs: [[f64; 3]; 5] = [
        [0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    signs
        .iter()
        .map(|s| {
            let off = [1.0 * s[0], 0.5 * sigma * s[1], 0.3 * s[2]];
            let off = if restricted { &off[1..] } else { &off[..] };
            x0.iter().zip(off).map(|(x, o)| x + o).collect()
        })
        .collect()
}

/// Minimum-distance fit from the raw empirical proportions.
pub fn fit(empirical: &BinnedDistribution, spec: &EstimationSpec, start: &ModelParams) -> Result<EstimationResult> {
    let moments = empirical_moments(empirical, spec)?;
    fit_moments(&moments.dist, spec, start)
}

/// Minimum-distance fit to already prepared moments on the estimation grid.
pub fn fit_moments(empirical: &BinnedDistribution, spec: &EstimationSpec, start: &ModelParams) -> Result<EstimationResult> {
    spec.validate()?;
    check_grid(empirical, spec)?;
    let w = moment_weights(empirical, spec)?;
    let restricted = spec.restrict_lambda_to_one;
    let objective = |theta: &[f64]| -> f64 {
        let (l, m, s) = from_theta(theta, restricted);
        match spec.params(l, m, s).and_then(|p| predicted_props(&p, &spec.grid)) {
            Ok(pred) => weighted_ss(&pred.props, &empirical.props, &w),
            Err(_) => f64::INFINITY,
        }
    };
    let x0 = to_theta(start, restricted);
    let step_full = [0.5, 0.25 * start.phi.scale, 0.2];
    let step = if restricted { &step_full[1..] } else { &step_full[..] };
    let runs: Vec<_> = starts(&x0, start.phi.scale, restricted)
        .into_par_iter()
        .map(|x| nelder_mead(objective, &x, step, XTOL, FTOL, MAX_EVALS))
        .collect();
    let mut n_evals: usize = runs.iter().map(|r| r.evals).sum();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("five starts");
    let any_converged = runs.iter().any(|r| r.converged);
    // restart from the best vertex to guard against simplex collapse
    let polish_step: Vec<f64> = step.iter().map(|s| s * 1e-3).collect();
    let polish = nelder_mead(objective, &best.x, &polish_step, XTOL, FTOL, MAX_EVALS);
    n_evals += polish.evals;
    let (x, f) = if polish.f <= best.f { (polish.x, polish.f) } else { (best.x.clone(), best.f) };
    let (mut lambda, mut mu, mut sigma) = from_theta(&x, restricted);
    let mut f = f;
    let mut converged = polish.converged;
    if !restricted {
        // lambda = 1 is only reached as ln(lambda - 1) -> -inf, so search the boundary face directly
        let face = |theta: &[f64]| objective(&[f64::NEG_INFINITY, theta[0], theta[1]]);
        let edge = nelder_mead(face, &[mu, sigma.ln()], &step_full[1..], XTOL, FTOL, MAX_EVALS);
        n_evals += edge.evals;
        if edge.f < f {
            (lambda, mu, sigma) = from_theta(&edge.x, true);
            f = edge.f;
            converged = edge.converged;
        }
    }
    if !f.is_finite() || !(any_converged || converged) {
        return Err(Error::Optimizer {
            best_criterion: f,
            best: [lambda, mu, sigma],
        });
    }
    let p = spec.params(lambda, mu, sigma)?;
    let predicted = predicted_props(&p, &spec.grid)?;
    let jacobian = jacobian(&p, spec)?;
    let weights = DVector::from_vec(w);
    let bread_inv = bread_inverse(&jacobian, &weights)?;
    Ok(EstimationResult {
        lambda_hat: lambda,
        mu_phi_hat: mu,
        sigma_phi_hat: sigma,
        ses: None,
        criterion: f,
        gof_chi2: None,
        gof_dof: None,
        gof_critical: None,
        qlr_chi2: None,
        qlr_critical: None,
        near_boundary: None,
        restricted,
        converged,
        n_evals,
        context: Some(FitContext {
            empirical: DVector::from_column_slice(&empirical.props),
            predicted: DVector::from_vec(predicted.props),
            weights,
            jacobian,
            bread_inv,
            vcov: None,
            moment_cov: None,
        }),
    })
}

/// Finite-difference Jacobian of predicted moments in the free parameters
/// `(lambda, mu_phi, sigma_phi)` (or `(mu_phi, sigma_phi)` when restricted).
/// Central differences, one-sided forward in `lambda` near its bound.
pub fn jacobian(p: &ModelParams, spec: &EstimationSpec) -> Result<DMatrix<f64>> {
    let base = [p.lambda, p.phi.location, p.phi.scale];
    let free: &[usize] = if spec.restrict_lambda_to_one { &[1, 2] } else { &[0, 1, 2] };
    let eval = |v: [f64; 3]| -> Result<Vec<f64>> { Ok(predicted_props(&spec.params(v[0], v[1], v[2])?, &spec.grid)?.props) };
    let k = spec.grid.len();
    let mut g = DMatrix::zeros(k, free.len());
    for (col, &j) in free.iter().enumerate() {
        let h = FD_STEP * base[j].abs().max(1.0);
        let mut up = base;
        up[j] += h;
        let hi = eval(up)?;
        let (lo, span) = if j == 0 && base[0] - h < 1.0 {
            (eval(base)?, h)
        } else {
            let mut dn = base;
            dn[j] -= h;
            (eval(dn)?, 2.0 * h)
        };
        for i in 0..k {
            g[(i, col)] = (hi[i] - lo[i]) / span;
        }
    }
    Ok(g)
}

fn bread_inverse(g: &DMatrix<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
    let wg = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| w[i] * g[(i, j)]);
    (g.transpose() * wg)
        .try_inverse()
        .ok_or(Error::Singular("G'WG: parameters not identified from these moments"))
}

/// Sandwich covariance `(G'WG)^-1 G'W Sigma W G (G'WG)^-1` for diagonal `W`.
pub fn sandwich(g: &DMatrix<f64>, w: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.nrows() != g.nrows() || sigma.ncols() != g.nrows() || w.len() != g.nrows() {
        return Err(Error::BinMismatch("Jacobian, weights and covariance disagree on the number of moments".into()));
    }
    let b = bread_inverse(g, w)?;
    let wg = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| w[i] * g[(i, j)]);
    let meat = wg.transpose() * sigma * &wg;
    Ok(&b * meat * &b)
}

/// Standard errors of the free parameters given the covariance of the moments.
pub fn sandwich_ses(result: &EstimationResult, moment_cov: &DMatrix<f64>) -> Result<Ses> {
    let ctx = result.context()?;
    let v = sandwich(&ctx.jacobian, &ctx.weights, moment_cov)?;
    Ok(ses_from(&v, result.restricted))
}

fn ses_from(v: &DMatrix<f64>, restricted: bool) -> Ses {
    let d: Vec<f64> = (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect();
    if restricted {
        Ses {
            lambda: None,
            mu_phi: d[0],
            sigma_phi: d[1],
        }
    } else {
        Ses {
            lambda: Some(d[0]),
            mu_phi: d[1],
            sigma_phi: d[2],
        }
    }
}

/// Attach standard errors and the overidentification test to a fit.
pub fn infer(result: &mut EstimationResult, moment_cov: &DMatrix<f64>, spec: &EstimationSpec) -> Result<()> {
    let ctx = result.context()?;
    let v = sandwich(&ctx.jacobian, &ctx.weights, moment_cov)?;
    let ses = ses_from(&v, result.restricted);
    let ctx = result.context.as_mut().expect("checked above");
    ctx.vcov = Some(v);
    ctx.moment_cov = Some(moment_cov.clone());
    let (chi2, dof, crit) = gof_test(result, spec)?;
    result.gof_chi2 = Some(chi2);
    result.gof_dof = Some(dof);
    result.gof_critical = Some(crit);
    result.near_boundary = ses.lambda.map(|se| result.lambda_hat - 1.0 < 2.0 * se);
    result.ses = Some(ses);
    Ok(())
}

/// Upper `alpha` critical value of a chi-square with `dof` degrees of freedom.
pub fn chi2_critical(dof: usize, alpha: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("dof", "degrees of freedom must be positive"));
    }
    let d = ChiSquared::new(dof as f64).map_err(|e| Error::invalid("dof", e.to_string()))?;
    Ok(d.inverse_cdf(1.0 - alpha))
}

/// Overidentification statistic `e' V_e^+ e` for residuals `e` at the
/// estimate, where `V_e = M Sigma M'` and `M = I - G (G'WG)^-1 G'W` is the
/// residual map under the chosen (possibly non-optimal) weights. Moments are
/// multiplied by `spec.gof_scale` first. Returns `(chi2, dof, critical)`.
pub fn gof_test(result: &EstimationResult, spec: &EstimationSpec) -> Result<(f64, usize, f64)> {
    let ctx = result.context()?;
    let sigma = ctx
        .moment_cov
        .as_ref()
        .ok_or_else(|| Error::invalid("result", "goodness of fit needs a moment covariance; call infer first"))?;
    let k = ctx.empirical.len();
    let p = ctx.jacobian.ncols();
    if k <= p {
        return Err(Error::invalid("dof", format!("{k} moments for {p} parameters")));
    }
    let dof = k - p;
    let c = spec.gof_scale;
    let e = (&ctx.empirical - &ctx.predicted) * c;
    let g = &ctx.jacobian * c;
    let sigma = sigma * (c * c);
    let b = bread_inverse(&g, &ctx.weights)?;
    let wg = DMatrix::from_fn(k, p, |i, j| ctx.weights[i] * g[(i, j)]);
    let m = DMatrix::identity(k, k) - &g * b * wg.transpose();
    let ve = &m * sigma * m.transpose();
    let ve = (&ve + ve.transpose()) * 0.5;
    let eig = SymmetricEigen::new(ve);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(Error::Singular("residual covariance is zero"));
    }
    let mut chi2 = 0.0;
    for &i in order.iter().take(dof) {
        let ev = eig.eigenvalues[i];
        if ev <= 1e-12 * top {
            break;
        }
        let proj = eig.eigenvectors.column(i).dot(&e);
        chi2 += proj * proj / ev;
    }
    Ok((chi2, dof, chi2_critical(dof, 0.05)?))
}

/// Distance test of `lambda = 1`: the criterion difference rescaled by the
/// ratio of the sandwich variance of `lambda_hat` to its `(G'WG)^-1` entry, so
/// that it is chi-square(1) for any weighting. Moments are multiplied by
/// `spec.qlr_scale`. Returns `(chi2, critical)`.
pub fn qlr_test(unrestricted: &EstimationResult, restricted: &EstimationResult, spec: &EstimationSpec) -> Result<(f64, f64)> {
    if unrestricted.restricted || !restricted.restricted {
        return Err(Error::invalid("qlr", "need an unrestricted and a restricted fit, in that order"));
    }
    let ctx = unrestricted.context()?;
    let v = ctx
        .vcov
        .as_ref()
        .ok_or_else(|| Error::invalid("qlr", "unrestricted fit has no sandwich covariance; call infer first"))?;
    let diff = restricted.criterion - unrestricted.criterion;
    let tol = 1e-9 * restricted.criterion.max(unrestricted.criterion) + 1e-300;
    if diff < -tol {
        return Err(Error::TestOrdering(format!(
            "restricted criterion {:e} below unrestricted {:e}",
            restricted.criterion, unrestricted.criterion
        )));
    }
    let c2 = spec.qlr_scale * spec.qlr_scale;
    let var = v[(0, 0)] * c2;
    if !(var > 0.0) {
        return Err(Error::Singular("sandwich variance of lambda is zero"));
    }
    let chi2 = diff.max(0.0) * c2 * ctx.bread_inv[(0, 0)] / var;
    let alpha = if spec.qlr_boundary { 0.10 } else { 0.05 };
    Ok((chi2, chi2_critical(1, alpha)?))
}

/// Sample covariance of resampled per-bin proportions on the data's grid.
pub fn bootstrap_cov(data: &BootstrapData<'_>, iterations: usize, seed: u64) -> Result<DMatrix<f64>> {
    let base = validate_bootstrap(data, iterations)?;
    let cols: Vec<usize> = (0..base.props.len()).collect();
    draws_cov(data, iterations, seed, &cols)
}

fn draws_cov(data: &BootstrapData<'_>, iterations: usize, seed: u64, cols: &[usize]) -> Result<DMatrix<f64>> {
    let draws: Vec<Vec<f64>> = (0..iterations as u64)
        .into_par_iter()
        .map(|i| resample(data, seed, i).map(|d| cols.iter().map(|&c| d.props[c]).collect()))
        .collect::<Result<_>>()?;
    let n = iterations as f64;
    let mut x = DMatrix::from_fn(iterations, cols.len(), |r, c| draws[r][c]);
    for c in 0..cols.len() {
        let mean = x.column(c).sum() / n;
        x.column_mut(c).add_scalar_mut(-mean);
    }
    Ok(x.transpose() * x / (n - 1.0))
}

/// Multinomial covariance `(diag(p) - p p') / n` of proportions.
pub fn multinomial_cov(dist: &BinnedDistribution) -> Result<DMatrix<f64>> {
    let n = dist
        .n_obs
        .ok_or_else(|| Error::invalid("n_obs", "covariance needs the number of observations"))? as f64;
    let p = DVector::from_column_slice(&dist.props);
    Ok((DMatrix::from_diagonal(&p) - &p * p.transpose()) / n)
}

/// How the moment covariance is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovSource {
    Bootstrap { iterations: usize, seed: u64 },
    Analytic,
}

/// Both fits, standard errors, the overidentification test and (unless
/// `lambda` is restricted) the distance test of `lambda = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimation {
    pub main: EstimationResult,
    /// The `lambda = 1` fit on the same moments, when `main` is unrestricted.
    pub standard: Option<EstimationResult>,
}

/// Full pipeline on bin counts: moments, fit(s), covariance and tests.
pub fn estimate(data: &BootstrapData<'_>, spec: &EstimationSpec, start: &ModelParams, cov: CovSource) -> Result<Estimation> {
    let raw = validate_bootstrap(data, 100)?;
    let moments = empirical_moments(&raw, spec)?;
    let sigma = match cov {
        CovSource::Bootstrap { iterations, seed } => moments.bootstrap_covariance(data, iterations, seed)?,
        CovSource::Analytic => moments.covariance(&multinomial_cov(&raw)?)?,
    };
    let mut main = fit_moments(&moments.dist, spec, start)?;
    infer(&mut main, &sigma, spec)?;
    if spec.restrict_lambda_to_one {
        return Ok(Estimation { main, standard: None });
    }
    let rspec = spec.restricted();
    let mut standard = fit_moments(&moments.dist, &rspec, start)?;
    infer(&mut standard, &sigma, &rspec)?;
    let (q, crit) = qlr_test(&main, &standard, spec)?;
    main.qlr_chi2 = Some(q);
    main.qlr_critical = Some(crit);
    Ok(Estimation {
        main,
        standard: Some(standard),
    })
}
