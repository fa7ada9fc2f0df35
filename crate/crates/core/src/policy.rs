//! Counterfactuals: offer composition, hiring-subsidy pass-through, salary
//! history bans and vacancy creation.
//!
//! Population averages over productivity use a midpoint rule in probability
//! space: `phi_i = F^-1((i + 1/2) / N)`, each with weight `1 / N`. Perception
//! noise in the ban scenario is integrated the same way.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binprob::{BinGrid, BinnedDistribution};
use crate::dist::HetFamily;
use crate::error::{finite, Error, Result};
use crate::model::ModelParams;
use crate::numeric::integrate;
use crate::simulate::{simulate_ban, SimConfig, SimSummary};

/// Default number of productivity nodes.
pub const DEFAULT_NODES: usize = 2001;
/// Default number of perception-noise nodes.
pub const DEFAULT_ETA_NODES: usize = 201;
/// Subsidy used in the headline figures, in standard deviations of productivity.
pub const DEFAULT_DELTA_SD: f64 = 0.6;

const TAIL: f64 = 1e-13;
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferMix {
    pub share_cuts: f64,
    pub share_matches: f64,
    pub share_raises: f64,
    pub avg_offer: f64,
    /// Absent when no offer is a cut.
    pub avg_cut: Option<f64>,
    pub avg_raise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub passthrough_total: f64,
    pub passthrough_marginal: f64,
    pub passthrough_inframarginal: f64,
    /// Composition of (subsidized) offers.
    pub offer_mix: OfferMix,
}

/// How offer changes are averaged into the total pass-through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassWeighting {
    /// Weight by the probability that the subsidized offer is accepted.
    #[default]
    Accepted,
    /// Every offer counts equally.
    Offers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsidyScenario {
    pub params: ModelParams,
    /// Subsidy in log-wage units.
    pub delta: f64,
}

impl SubsidyScenario {
    pub fn new(params: ModelParams, delta: f64) -> Result<Self> {
        finite("delta", delta)?;
        if delta < 0.0 {
            return Err(Error::invalid("delta", format!("must be >= 0, got {delta}")));
        }
        Ok(SubsidyScenario { params, delta })
    }

    /// Subsidy of `k` standard deviations of productivity.
    pub fn in_sd(params: ModelParams, k: f64) -> Result<Self> {
        Self::new(params, k * params.phi.std_dev())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanScenario {
    pub params: ModelParams,
    /// Noise in the firm's view of the current wage; location must be 0.
    pub eta: HetFamily,
}

impl BanScenario {
    pub fn new(params: ModelParams, eta: HetFamily) -> Result<Self> {
        if eta.location != 0.0 {
            return Err(Error::invalid("eta", "perception noise must have location 0"));
        }
        Ok(BanScenario { params, eta })
    }
}

/// Probability-space midpoint nodes of a distribution, equally weighted.
pub fn quantile_nodes(dist: &HetFamily, n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::invalid("nodes", "need at least one node"));
    }
    let w = 1.0 / n as f64;
    Ok((0..n).map(|i| (dist.quantile_raw((i as f64 + 0.5) * w), w)).collect())
}

/// The single node of noiseless observation.
pub const NO_NOISE: [(f64, f64); 1] = [(0.0, 1.0)];

/// Share of offers that are cuts, matches and raises, and average offers by
/// type, by adaptive quadrature against the productivity density.
pub fn offer_mix(p: &ModelParams) -> Result<OfferMix> {
    let w = p.salary_match_wedge();
    let (a, b) = (p.phi.quantile_raw(TAIL), p.phi.quantile_upper(TAIL)?);
    let share_cuts = p.phi.prob_below(w.lo);
    let share_raises = p.phi.prob_above(w.hi);
    let share_matches = p.phi.mass_between(w.lo, w.hi);
    let moment = |lo: f64, hi: f64| -> Result<f64> {
        if lo >= hi {
            return Ok(0.0);
        }
        let mut err = None;
        let v = integrate(
            |phi| match p.optimal_offer(phi) {
                Ok(r) => r * p.phi.density(phi),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            QUAD_TOL,
            2000,
        )?;
        err.map_or(Ok(v), Err)
    };
    let cut_sum = moment(a, w.lo.min(b))?;
    let raise_sum = moment(w.hi.max(a), b)?;
    let avg = |sum: f64, share: f64| (share > 0.0).then(|| sum / share);
    Ok(OfferMix {
        share_cuts,
        share_matches,
        share_raises,
        avg_offer: cut_sum + raise_sum,
        avg_cut: avg(cut_sum, share_cuts),
        avg_raise: avg(raise_sum, share_raises),
    })
}

/// Offer change caused by a subsidy at productivity `phi`, computed on the
/// perceived scale, so noise in the observed wage never enters.
pub fn offer_change(p: &ModelParams, phi: f64, delta: f64) -> Result<f64> {
    Ok(p.optimal_offer(phi + delta)? - p.optimal_offer(phi)?)
}

#[derive(Debug, Default)]
struct Sums {
    acc0: f64,
    acc1: f64,
    d_acc0: f64,
    d_acc1: f64,
    d_all: f64,
    cuts: f64,
    matches: f64,
    raises: f64,
    offer: f64,
    cut_sum: f64,
    raise_sum: f64,
}

/// Pass-through with perception noise integrated over `eta_nodes` (pairs of
/// noise value and weight). With [`NO_NOISE`] this is the full-information
/// case.
pub fn passthrough_nodes(
    p: &ModelParams,
    delta: f64,
    eta_nodes: &[(f64, f64)],
    phi_nodes: usize,
    weighting: PassWeighting,
) -> Result<PolicyOutcome> {
    finite("delta", delta)?;
    if delta < 0.0 {
        return Err(Error::invalid("delta", format!("must be >= 0, got {delta}")));
    }
    let phis = quantile_nodes(&p.phi, phi_nodes)?;
    let mut s = Sums::default();
    for &(phi, wp) in &phis {
        for &(eta, we) in eta_nodes {
            let w = wp * we;
            // perceived productivity and offers; the realized offer adds eta back
            let seen = phi - eta;
            let r0 = p.optimal_offer(seen)?;
            let r1 = p.optimal_offer(seen + delta)?;
            let d = r1 - r0;
            let acc0 = p.acceptance_rate(r0 + eta);
            let acc1 = p.acceptance_rate(r1 + eta);
            s.acc0 += w * acc0;
            s.acc1 += w * acc1;
            s.d_acc0 += w * d * acc0;
            s.d_acc1 += w * d * acc1;
            s.d_all += w * d;
            let realized = r1 + eta;
            s.offer += w * realized;
            if r1 < 0.0 {
                s.cuts += w;
                s.cut_sum += w * realized;
            } else if r1 > 0.0 {
                s.raises += w;
                s.raise_sum += w * realized;
            } else {
                s.matches += w;
            }
        }
    }
    let total_w: f64 = s.cuts + s.matches + s.raises;
    let mix = OfferMix {
        share_cuts: s.cuts / total_w,
        share_matches: s.matches / total_w,
        share_raises: s.raises / total_w,
        avg_offer: s.offer / total_w,
        avg_cut: (s.cuts > 0.0).then(|| s.cut_sum / s.cuts),
        avg_raise: (s.raises > 0.0).then(|| s.raise_sum / s.raises),
    };
    if delta == 0.0 {
        return Ok(PolicyOutcome {
            passthrough_total: f64::NAN,
            passthrough_marginal: f64::NAN,
            passthrough_inframarginal: f64::NAN,
            offer_mix: mix,
        });
    }
    let total = match weighting {
        PassWeighting::Accepted => s.d_acc1 / (delta * s.acc1),
        PassWeighting::Offers => s.d_all / (delta * total_w),
    };
    // accepted without the subsidy implies accepted with it (offers rise with phi)
    let marginal_mass = s.acc1 - s.acc0;
    let marginal = if marginal_mass > 0.0 {
        (s.d_acc1 - s.d_acc0) / (delta * marginal_mass)
    } else {
        f64::NAN
    };
    Ok(PolicyOutcome {
        passthrough_total: total,
        passthrough_marginal: marginal,
        passthrough_inframarginal: s.d_acc0 / (delta * s.acc0),
        offer_mix: mix,
    })
}

/// Pass-through of a hiring subsidy with full information about current wages.
pub fn passthrough(s: &SubsidyScenario) -> Result<PolicyOutcome> {
    passthrough_nodes(&s.params, s.delta, &NO_NOISE, DEFAULT_NODES, PassWeighting::Accepted)
}

/// Pass-through when firms see current wages with noise `eta`.
pub fn passthrough_ban(s: &BanScenario, delta: f64) -> Result<PolicyOutcome> {
    let nodes = quantile_nodes(&s.eta, DEFAULT_ETA_NODES)?;
    passthrough_nodes(&s.params, delta, &nodes, DEFAULT_NODES, PassWeighting::Accepted)
}

/// Monte Carlo distribution of realized wage changes under a ban.
pub fn ban_growth(s: &BanScenario, n: u64, seed: u64, grid: &BinGrid) -> Result<SimSummary> {
    simulate_ban(&SimConfig::new(s.params, n, seed)?, &s.eta, grid)
}

/// Regime of a productivity level given the offers with and without subsidy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Both offers are cuts.
    Cut,
    /// At least one offer is an exact match.
    Matched,
    /// Cut without the subsidy, raise with it.
    CutToRaise,
    /// Both offers are raises.
    Raise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismRow {
    pub phi: f64,
    pub offer_nosub: f64,
    pub offer_sub: f64,
    pub passthrough: f64,
    pub regime: Regime,
}

/// Evenly spaced productivity grid of `n` points over `mu_phi +- span * sigma_phi`.
pub fn phi_grid(p: &ModelParams, n: usize, span: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least two grid points"));
    }
    let (lo, hi) = (p.phi.location - span * p.phi.scale, p.phi.location + span * p.phi.scale);
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Offers with and without the subsidy and the implied pass-through on a productivity grid.
pub fn mechanism(s: &SubsidyScenario, phis: &[f64]) -> Result<Vec<MechanismRow>> {
    if s.delta <= 0.0 {
        return Err(Error::invalid("delta", "pass-through needs a positive subsidy"));
    }
    phis.iter()
        .map(|&phi| {
            let r0 = s.params.optimal_offer(phi)?;
            let r1 = s.params.optimal_offer(phi + s.delta)?;
            let regime = if r0 == 0.0 || r1 == 0.0 {
                Regime::Matched
            } else if r1 < 0.0 {
                Regime::Cut
            } else if r0 > 0.0 {
                Regime::Raise
            } else {
                Regime::CutToRaise
            };
            Ok(MechanismRow {
                phi,
                offer_nosub: r0,
                offer_sub: r1,
                passthrough: (r1 - r0) / s.delta,
                regime,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub delta: f64,
    pub passthrough_total: f64,
    pub passthrough_marginal: f64,
    pub passthrough_inframarginal: f64,
}

/// Pass-through over a `(lambda, delta)` grid, in lambda-major order.
pub fn passthrough_sweep(
    base: &ModelParams,
    lambdas: &[f64],
    deltas: &[f64],
    eta_nodes: &[(f64, f64)],
    phi_nodes: usize,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| deltas.iter().map(move |&d| (l, d))).collect();
    cells
        .into_par_iter()
        .map(|(lambda, delta)| {
            let p = base.with_lambda(lambda)?;
            let o = passthrough_nodes(&p, delta, eta_nodes, phi_nodes, PassWeighting::Accepted)?;
            Ok(SweepRow {
                lambda,
                delta,
                passthrough_total: o.passthrough_total,
                passthrough_marginal: o.passthrough_marginal,
                passthrough_inframarginal: o.passthrough_inframarginal,
            })
        })
        .collect()
}

/// Offer composition for each lambda.
pub fn mix_sweep(base: &ModelParams, lambdas: &[f64]) -> Result<Vec<(f64, OfferMix)>> {
    lambdas
        .par_iter()
        .map(|&l| Ok((l, offer_mix(&base.with_lambda(l)?)?)))
        .collect()
}

/// Profit-maximizing number of vacancies with quadratic posting cost `c J^2`.
pub fn optimal_vacancies(pbar: f64, c: f64) -> Result<f64> {
    finite("pbar", pbar)?;
    finite("c", c)?;
    if c <= 0.0 {
        return Err(Error::invalid("c", format!("vacancy cost must be > 0, got {c}")));
    }
    if pbar < 0.0 {
        return Err(Error::invalid("pbar", format!("expected profit must be >= 0, got {pbar}")));
    }
    Ok(pbar / (2.0 * c))
}

/// Distribution of job seekers' current log wages.
#[derive(Debug, Clone, Copy)]
pub enum WageDist<'a> {
    Point(f64),
    Family(HetFamily),
    /// Bin midpoints weighted by their proportions (renormalized).
    Binned(&'a BinnedDistribution),
}

/// Expected profit of a vacancy with log productivity `psi`, averaged over
/// the current wages of the job seekers it meets.
pub fn expected_vacancy_profit(p: &ModelParams, psi: f64, wages: WageDist<'_>) -> Result<f64> {
    finite("psi", psi)?;
    let profit = |w0: f64| -> Result<f64> {
        let phi = psi - w0;
        Ok(p.expected_profit(phi, p.optimal_offer(phi)?))
    };
    match wages {
        WageDist::Point(w0) => profit(finite("wage", w0)?),
        WageDist::Family(g) => {
            let (a, b) = (g.quantile_raw(TAIL), g.quantile_upper(TAIL)?);
            // offers kink where psi - w0 crosses the wedge ends
            let wedge = p.salary_match_wedge();
            let mut cuts = vec![a, b];
            for k in [psi - wedge.hi, psi - wedge.lo] {
                if k > a && k < b {
                    cuts.push(k);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let mut total = 0.0;
            for seg in cuts.windows(2) {
                let mut err = None;
                total += integrate(
                    |w0| match profit(w0) {
                        Ok(v) => v * g.density(w0),
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    seg[0],
                    seg[1],
                    QUAD_TOL,
                    2000,
                )?;
                if let Some(e) = err {
                    return Err(e);
                }
            }
            Ok(total)
        }
        WageDist::Binned(d) => {
            let mass: f64 = d.props.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::Degenerate("wage distribution has no mass".into()));
            }
            let mut total = 0.0;
            for (w0, q) in d.midpoints().into_iter().zip(&d.props) {
                if *q > 0.0 {
                    total += q * profit(w0)?;
                }
            }
            Ok(total / mass)
        }
    }
}

/// Shift of the acceptance threshold from option values: a job is accepted
/// when `u + omega > 0`, which is the static model with `eps` moved by `omega`.
pub fn with_option_value(p: &ModelParams, omega: f64) -> Result<ModelParams> {
    finite("omega", omega)?;
    ModelParams::new(p.lambda, p.phi, p.eps.shifted(omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::new(
            lambda,
            HetFamily::logistic(1.2, 0.15).unwrap(),
            HetFamily::logistic(0.0, 0.611).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mix_without_loss_aversion_has_no_matches() {
        let m = offer_mix(&params(1.0)).unwrap();
        assert_eq!(m.share_matches, 0.0);
        assert_abs_diff_eq!(m.share_cuts + m.share_raises, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mix_shares_sum_to_one_and_raises_ignore_lambda() {
        let base = offer_mix(&params(1.0)).unwrap();
        for l in [1.123, 1.5, 1.955] {
            let m = offer_mix(&params(l)).unwrap();
            assert_abs_diff_eq!(m.share_cuts + m.share_matches + m.share_raises, 1.0, epsilon = 1e-9);
            assert_eq!(m.share_raises, base.share_raises);
            assert_abs_diff_eq!(m.avg_raise.unwrap(), base.avg_raise.unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn mix_moves_with_lambda() {
        let ms: Vec<OfferMix> = [1.0, 1.1, 1.3, 1.6, 2.0].iter().map(|&l| offer_mix(&params(l)).unwrap()).collect();
        for w in ms.windows(2) {
            assert!(w[1].share_matches > w[0].share_matches);
            assert!(w[1].share_cuts < w[0].share_cuts);
            assert!(w[1].avg_offer > w[0].avg_offer);
        }
    }

    #[test]
    fn grid_mix_agrees_with_quadrature() {
        let p = params(1.123);
        let grid = passthrough_nodes(&p, 0.0, &NO_NOISE, 20_001, PassWeighting::Accepted).unwrap();
        let exact = offer_mix(&p).unwrap();
        assert!(grid.passthrough_total.is_nan());
        assert!((grid.offer_mix.share_matches - exact.share_matches).abs() < 1e-4);
        assert!((grid.offer_mix.avg_offer - exact.avg_offer).abs() < 1e-5);
    }

    #[test]
    fn passthrough_decomposes_and_is_bounded() {
        let s = SubsidyScenario::in_sd(params(1.123), 0.6).unwrap();
        let o = passthrough(&s).unwrap();
        for v in [o.passthrough_total, o.passthrough_marginal, o.passthrough_inframarginal] {
            assert!(v > 0.0 && v < 1.0, "{v}");
        }
        let lo = o.passthrough_marginal.min(o.passthrough_inframarginal);
        let hi = o.passthrough_marginal.max(o.passthrough_inframarginal);
        assert!(o.passthrough_total >= lo && o.passthrough_total <= hi);
        let sum = o.offer_mix.share_cuts + o.offer_mix.share_matches + o.offer_mix.share_raises;
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_aversion_lowers_total_passthrough() {
        let d = 0.6 * params(1.0).phi.std_dev();
        let rows = passthrough_sweep(&params(1.0), &[1.0, 1.123, 1.3, 1.6, 2.0], &[d], &NO_NOISE, 2001).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].passthrough_total < w[0].passthrough_total);
        }
    }

    #[test]
    fn regimes_on_a_grid() {
        let d = 0.6 * params(1.0).phi.std_dev();
        let b = SubsidyScenario::new(params(1.123), d).unwrap();
        let s = SubsidyScenario::new(params(1.0), d).unwrap();
        let phis = phi_grid(&b.params, 2001, 6.0).unwrap();
        let (rb, rs) = (mechanism(&b, &phis).unwrap(), mechanism(&s, &phis).unwrap());
        let hi = b.params.salary_match_wedge().hi;
        for (x, y) in rb.iter().zip(&rs) {
            match x.regime {
                Regime::Cut | Regime::Matched | Regime::CutToRaise => assert!(x.passthrough < y.passthrough, "phi {}", x.phi),
                Regime::Raise => assert!((x.passthrough - y.passthrough).abs() <= 1e-8),
            }
            if x.phi > hi {
                assert_eq!(x.regime, Regime::Raise);
            }
        }
    }

    #[test]
    fn noise_cancels_in_offer_changes() {
        let p = params(1.123);
        let d = 0.09;
        for &(phi, eta) in &[(0.5, 0.2), (1.1, -0.3), (1.6, 0.05)] {
            let seen = phi - eta;
            let r0 = p.optimal_offer(seen).unwrap() + eta;
            let r1 = p.optimal_offer(seen + d).unwrap() + eta;
            assert!((r1 - r0 - offer_change(&p, seen, d).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_ban_is_the_subsidy() {
        let p = params(1.123);
        let sub = passthrough(&SubsidyScenario::new(p, 0.09).unwrap()).unwrap();
        let ban = passthrough_nodes(&p, 0.09, &NO_NOISE, DEFAULT_NODES, PassWeighting::Accepted).unwrap();
        assert_eq!(sub.passthrough_total.to_bits(), ban.passthrough_total.to_bits());
        assert_eq!(sub, ban);
    }

    #[test]
    fn small_noise_approaches_full_information() {
        let p = params(1.123);
        let full = passthrough_nodes(&p, 0.09, &NO_NOISE, 2001, PassWeighting::Accepted).unwrap();
        let eta = HetFamily::logistic(0.0, 1e-4).unwrap();
        let ban = passthrough_ban(&BanScenario::new(p, eta).unwrap(), 0.09).unwrap();
        assert!((ban.passthrough_total - full.passthrough_total).abs() < 1e-3);
    }

    #[test]
    fn vacancies() {
        assert_eq!(optimal_vacancies(0.1, 0.5).unwrap(), 0.1);
        assert_eq!(optimal_vacancies(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(optimal_vacancies(0.1, 1.0).unwrap(), 0.05);
        assert!(optimal_vacancies(0.1, 0.0).is_err());
    }

    #[test]
    fn vacancy_profit_point_and_lambda() {
        let p = params(1.123);
        let v = expected_vacancy_profit(&p, 2.0, WageDist::Point(1.0)).unwrap();
        let r = p.optimal_offer(1.0).unwrap();
        assert_eq!(v, p.expected_profit(1.0, r));
        let g = HetFamily::normal(1.0, 0.3).unwrap();
        let mut last = f64::INFINITY;
        for l in [1.0, 1.123, 1.5, 2.0] {
            let v = expected_vacancy_profit(&params(l), 2.0, WageDist::Family(g)).unwrap();
            assert!(v <= last);
            last = v;
        }
    }
}
