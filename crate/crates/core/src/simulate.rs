//! Synthetic job-search data and the rounded-salary placebo draws.
//!
//! Random numbers come from ChaCha8. Job seekers are processed in blocks of
//! 65 536; block `b` uses stream `b` of the generator seeded with `seed`, and
//! each seeker consumes two 64-bit words (productivity, then amenity). Output
//! is therefore identical for any number of worker threads.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{draw_rng, multinomial_counts};
use crate::binprob::{accepted_density_unnormalized, accepted_mass, predicted_props, BinCounts, BinGrid, BinnedDistribution};
use crate::dist::HetFamily;
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub n_jobseekers: u64,
    pub seed: u64,
    /// Keep rejected offers in [`SimOutput::offers`].
    pub record_rejected: bool,
}

impl SimConfig {
    pub fn new(params: ModelParams, n_jobseekers: u64, seed: u64) -> Result<Self> {
        if n_jobseekers == 0 {
            return Err(Error::invalid("n_jobseekers", "must be positive"));
        }
        Ok(SimConfig {
            params,
            n_jobseekers,
            seed,
            record_rejected: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferRecord {
    pub phi: f64,
    pub eps: f64,
    pub offer: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub offers: Vec<OfferRecord>,
    /// Offers that were accepted, in job-seeker order.
    pub realized: Vec<f64>,
}

/// Uniform on the open interval (0, 1) with 53 random bits.
#[inline]
pub(crate) fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

fn n_blocks(n: u64) -> u64 {
    n.div_ceil(BLOCK)
}

fn block_len(n: u64, b: u64) -> u64 {
    (n - b * BLOCK).min(BLOCK)
}

/// One job seeker: draw productivity and amenity, make the optimal offer, decide.
#[inline]
fn draw_one(p: &ModelParams, rng: &mut ChaCha8Rng) -> Result<OfferRecord> {
    let phi = p.phi.quantile_raw(open_uniform(rng));
    let eps = p.eps.quantile_raw(open_uniform(rng));
    let offer = p.optimal_offer(phi)?;
    Ok(OfferRecord {
        phi,
        eps,
        offer,
        accepted: p.utility(offer, eps) > 0.0,
    })
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    if cfg.n_jobseekers == 0 {
        return Err(Error::invalid("n_jobseekers", "must be positive"));
    }
    let blocks: Vec<Vec<OfferRecord>> = (0..n_blocks(cfg.n_jobseekers))
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(cfg.seed, b);
            let len = block_len(cfg.n_jobseekers, b);
            let mut out = Vec::with_capacity(len as usize);
            for _ in 0..len {
                let rec = draw_one(&cfg.params, &mut rng)?;
                if cfg.record_rejected || rec.accepted {
                    out.push(rec);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let offers: Vec<OfferRecord> = blocks.into_iter().flatten().collect();
    let realized = offers.iter().filter(|r| r.accepted).map(|r| r.offer).collect();
    Ok(SimOutput { offers, realized })
}

/// Binned outcome of a simulation that keeps no per-seeker records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    /// Accepted offers per bin; `total` is the number of accepted offers.
    pub realized: BinCounts,
    /// All offers (accepted or not) per bin, out of `n_offers`.
    pub offered: BinCounts,
    pub n_offers: u64,
    pub n_accepted: u64,
}

impl SimSummary {
    pub fn acceptance_share(&self) -> f64 {
        self.n_accepted as f64 / self.n_offers as f64
    }
}

fn bin_block(grid: &BinGrid, counts: &mut [u64], r: f64) {
    if let Some(s) = grid.bin_of(r).and_then(|k| grid.slot(k)) {
        counts[s] += 1;
    }
}

fn add_into(acc: &mut [u64], part: &[u64]) {
    for (a, b) in acc.iter_mut().zip(part) {
        *a += b;
    }
}

/// Runs `draw` once per job seeker (block streams as in [`simulate`]) and bins
/// the resulting `(wage change, accepted)` pairs.
fn binned_blocks<F>(cfg: &SimConfig, grid: &BinGrid, draw: F) -> Result<SimSummary>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(f64, bool)> + Sync,
{
    if cfg.n_jobseekers == 0 {
        return Err(Error::invalid("n_jobseekers", "must be positive"));
    }
    let k = grid.len();
    let parts: Vec<(Vec<u64>, Vec<u64>, u64)> = (0..n_blocks(cfg.n_jobseekers))
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(cfg.seed, b);
            let mut acc = vec![0u64; k];
            let mut all = vec![0u64; k];
            let mut n_acc = 0;
            for _ in 0..block_len(cfg.n_jobseekers, b) {
                let (r, accepted) = draw(&mut rng)?;
                bin_block(grid, &mut all, r);
                if accepted {
                    n_acc += 1;
                    bin_block(grid, &mut acc, r);
                }
            }
            Ok((acc, all, n_acc))
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![0u64; k];
    let mut all = vec![0u64; k];
    let mut n_accepted = 0;
    for (a, o, n) in &parts {
        add_into(&mut acc, a);
        add_into(&mut all, o);
        n_accepted += n;
    }
    if n_accepted == 0 {
        return Err(Error::Degenerate("no offer was accepted".into()));
    }
    Ok(SimSummary {
        realized: BinCounts::new(*grid, acc, n_accepted)?,
        offered: BinCounts::new(*grid, all, cfg.n_jobseekers)?,
        n_offers: cfg.n_jobseekers,
        n_accepted,
    })
}

/// Streaming simulation that only keeps bin counts; suitable for very large `n`.
pub fn simulate_binned(cfg: &SimConfig, grid: &BinGrid) -> Result<SimSummary> {
    binned_blocks(cfg, grid, |rng| {
        let rec = draw_one(&cfg.params, rng)?;
        Ok((rec.offer, rec.accepted))
    })
}

/// Realized wage change when the firm sees the current wage with error `eta`:
/// the optimal offer for perceived productivity `phi - eta`, shifted back by `eta`.
pub fn ban_offer(p: &ModelParams, phi: f64, eta: f64) -> Result<f64> {
    Ok(p.optimal_offer(phi - eta)? + eta)
}

/// Simulation when firms see the current wage with additive noise `eta`:
/// they make the optimal offer for perceived productivity `phi - eta`, and the
/// realized wage change is that perceived offer plus `eta`.
pub fn simulate_ban(cfg: &SimConfig, eta: &HetFamily, grid: &BinGrid) -> Result<SimSummary> {
    if eta.location != 0.0 {
        return Err(Error::invalid("eta", "perception noise must have location 0"));
    }
    let p = &cfg.params;
    binned_blocks(cfg, grid, |rng| {
        let phi = p.phi.quantile_raw(open_uniform(rng));
        let e = p.eps.quantile_raw(open_uniform(rng));
        let noise = eta.quantile_raw(open_uniform(rng));
        let r = ban_offer(p, phi, noise)?;
        Ok((r, p.utility(r, e) > 0.0))
    })
}

/// Bin counts of `n` accepted offers drawn directly from the model's bin
/// probabilities (a multinomial with an outside-the-grid category). Same
/// distribution as `simulate_binned` restricted to accepted offers, at a cost
/// independent of `n`.
pub fn sample_binned(params: &ModelParams, grid: &BinGrid, n: u64, seed: u64) -> Result<BinCounts> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one observation"));
    }
    let probs = predicted_props(params, grid)?;
    let counts = multinomial_counts(&mut draw_rng(seed, 0), n, &probs.props);
    BinCounts::new(*grid, counts, n)
}

/// Distinct values with their empirical frequencies, sorted.
fn support(values: &[f64], name: &'static str) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::invalid(name, "sample is empty"));
    }
    let mut sorted = values.to_vec();
    if let Some(bad) = sorted.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name, value: *bad });
    }
    sorted.sort_by(f64::total_cmp);
    let mut vals: Vec<f64> = Vec::new();
    let mut freq: Vec<f64> = Vec::new();
    for v in sorted {
        if vals.last() == Some(&v) {
            *freq.last_mut().expect("paired") += 1.0;
        } else {
            vals.push(v);
            freq.push(1.0);
        }
    }
    Ok((vals, freq))
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight exceeding `u * total`.
fn pick(cum: &[f64], u: f64) -> usize {
    let target = u * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= target).min(cum.len() - 1)
}

/// Placebo growth `new - prev` for pairs drawn independently (with
/// replacement) from the two log-salary samples.
pub fn placebo_independent(prev: &[f64], new: &[f64], n: u64, seed: u64, grid: &BinGrid) -> Result<BinnedDistribution> {
    placebo_conditional(prev, new, |_| 1.0, n, seed, grid)
}

/// Placebo in which each new salary is drawn from the empirical new-salary
/// distribution reweighted by `density(new - prev)` around the drawn
/// previous salary.
pub fn placebo_conditional<F: Fn(f64) -> f64>(
    prev: &[f64],
    new: &[f64],
    density: F,
    n: u64,
    seed: u64,
    grid: &BinGrid,
) -> Result<BinnedDistribution> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let (pv, pf) = support(prev, "prev_salaries")?;
    let (nv, nf) = support(new, "new_salaries")?;
    let prev_cum = cumulative(pf.iter().copied());
    let mut tables: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; grid.len()];
    for _ in 0..n {
        let i = pick(&prev_cum, open_uniform(&mut rng));
        let u = open_uniform(&mut rng);
        let w0 = pv[i];
        let cum = match tables.get(&i) {
            Some(c) => c,
            None => {
                let mut c = Vec::with_capacity(nv.len());
                let mut acc = 0.0;
                for (v, f) in nv.iter().zip(&nf) {
                    let d = density(v - w0);
                    if !(d >= 0.0 && d.is_finite()) {
                        return Err(Error::invalid("density", format!("value {d} at growth {}", v - w0)));
                    }
                    acc += f * d;
                    c.push(acc);
                }
                if acc <= 0.0 {
                    return Err(Error::Degenerate(format!("all reweighted new salaries have zero weight for previous salary {w0}")));
                }
                tables.entry(i).or_insert(c)
            }
        };
        let j = pick(cum, u);
        if let Some(s) = grid.bin_of(nv[j] - w0).and_then(|k| grid.slot(k)) {
            counts[s] += 1;
        }
    }
    Ok(BinCounts::new(*grid, counts, n)?.to_distribution())
}

/// Default reweighting density for the conditional placebo: the model's
/// density of accepted growth without loss aversion.
pub fn standard_growth_density(params: &ModelParams) -> Result<impl Fn(f64) -> f64 + Send + Sync> {
    let p = params.with_lambda(1.0)?;
    let a = accepted_mass(&p)?;
    Ok(move |r: f64| accepted_density_unnormalized(&p, r) / a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::new(
            lambda,
            HetFamily::logistic(1.2, 0.15).unwrap(),
            HetFamily::logistic(0.0, 0.611).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn records_are_consistent() {
        let cfg = SimConfig::new(params(1.3), 5000, 11).unwrap();
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.offers.len(), 5000);
        for r in &out.offers {
            assert_eq!(r.offer, cfg.params.optimal_offer(r.phi).unwrap());
            assert_eq!(r.accepted, cfg.params.utility(r.offer, r.eps) > 0.0);
        }
        assert_eq!(out.realized.len(), out.offers.iter().filter(|r| r.accepted).count());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = SimConfig::new(params(1.123), 70_000, 5).unwrap();
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 6, ..cfg };
        assert_ne!(simulate(&cfg).unwrap().realized, simulate(&other).unwrap().realized);
    }

    #[test]
    fn binned_matches_records() {
        let mut cfg = SimConfig::new(params(1.123), 100_000, 9).unwrap();
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let s = simulate_binned(&cfg, &g).unwrap();
        cfg.record_rejected = false;
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.offers.len() as u64, s.n_accepted);
        assert_eq!(BinCounts::from_growth(g, &out.realized).unwrap().counts, s.realized.counts);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let cfg = SimConfig::new(params(1.123), 3 * BLOCK + 17, 42).unwrap();
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_binned(&cfg, &g).unwrap());
        let b = four.install(|| simulate_binned(&cfg, &g).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn acceptance_share_near_accepted_mass() {
        let p = params(1.123);
        let cfg = SimConfig::new(p, 400_000, 3).unwrap();
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let s = simulate_binned(&cfg, &g).unwrap();
        let a = accepted_mass(&p).unwrap();
        let se = (a * (1.0 - a) / cfg.n_jobseekers as f64).sqrt();
        assert!((s.acceptance_share() - a).abs() < 4.0 * se);
    }

    #[test]
    fn acceptance_censors_cuts() {
        let cfg = SimConfig::new(params(1.5), 200_000, 1).unwrap();
        let out = simulate(&cfg).unwrap();
        let below = |v: &mut dyn Iterator<Item = f64>| {
            let (mut neg, mut all) = (0.0, 0.0);
            for r in v {
                all += 1.0;
                if r < 0.0 {
                    neg += 1.0;
                }
            }
            neg / all
        };
        let offered = below(&mut out.offers.iter().map(|r| r.offer));
        let realized = below(&mut out.realized.iter().copied());
        assert!(realized < offered);
    }

    #[test]
    fn placebo_degenerate_inputs() {
        let g = BinGrid::symmetric(0.02, 0.002, true).unwrap();
        let d = placebo_independent(&[3.0; 5], &[3.0; 7], 1000, 1, &g).unwrap();
        assert_eq!(d.get(0), Some(1.0));
        let d = placebo_independent(&[3.0], &[3.01], 1000, 1, &g).unwrap();
        assert_eq!(d.get(5), Some(1.0));
        let d = placebo_independent(&[3.0, 4.0], &[3.5, 4.5], 1000, 1, &g).unwrap();
        assert_eq!(d.get(0), Some(0.0));
        assert!(placebo_independent(&[], &[1.0], 10, 1, &g).is_err());
    }

    #[test]
    fn placebo_collision_probability() {
        // prev and new on a 0.05 grid with different marginals
        let prev: Vec<f64> = (0..400).map(|i| 10.0 + 0.05 * ((i % 7) as f64)).collect();
        let new: Vec<f64> = (0..300).map(|i| 10.0 + 0.05 * ((i % 5) as f64 + (i % 2) as f64)).collect();
        let (pv, pf) = support(&prev, "p").unwrap();
        let (nv, nf) = support(&new, "n").unwrap();
        let mut q = 0.0;
        for (v, f) in pv.iter().zip(&pf) {
            if let Some(j) = nv.iter().position(|w| w == v) {
                q += f / 400.0 * nf[j] / 300.0;
            }
        }
        let g = BinGrid::symmetric(0.02, 0.002, true).unwrap();
        let n = 200_000;
        let d = placebo_independent(&prev, &new, n, 4, &g).unwrap();
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!(q > 0.1 && (d.get(0).unwrap() - q).abs() < 4.0 * se);
    }

    #[test]
    fn constant_density_reduces_to_independent() {
        let prev: Vec<f64> = (0..50).map(|i| 10.0 + 0.01 * (i % 13) as f64).collect();
        let new: Vec<f64> = (0..80).map(|i| 10.0 + 0.01 * (i % 17) as f64).collect();
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let a = placebo_independent(&prev, &new, 10_000, 8, &g).unwrap();
        let b = placebo_conditional(&prev, &new, |_| 1.0, 10_000, 8, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_placebo_raises_zero_share() {
        let prev: Vec<f64> = (0..2000).map(|i| 10.0 + 0.02 * (i % 40) as f64).collect();
        let new: Vec<f64> = (0..2000).map(|i| 10.1 + 0.02 * (i % 40) as f64).collect();
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let dens = standard_growth_density(&params(1.0)).unwrap();
        let ind = placebo_independent(&prev, &new, 100_000, 2, &g).unwrap();
        let cond = placebo_conditional(&prev, &new, dens, 100_000, 2, &g).unwrap();
        assert!(cond.get(0).unwrap() > ind.get(0).unwrap());
    }

    #[test]
    fn zero_weight_error_names_salary() {
        let g = BinGrid::symmetric(0.02, 0.002, true).unwrap();
        let err = placebo_conditional(&[1.0], &[2.0], |d| if d > 0.5 { 0.0 } else { 1.0 }, 10, 1, &g).unwrap_err();
        assert!(err.to_string().contains("previous salary 1"));
    }

    #[test]
    fn sample_binned_matches_probabilities() {
        let p = params(1.123);
        let grid = BinGrid::symmetric(0.05, 0.002, true).unwrap();
        let n = 2_000_000;
        let c = sample_binned(&p, &grid, n, 5).unwrap();
        assert_eq!(c, sample_binned(&p, &grid, n, 5).unwrap());
        let probs = predicted_props(&p, &grid).unwrap();
        for (k, q) in c.counts.iter().zip(&probs.props) {
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((*k as f64 / n as f64 - q).abs() < 5.0 * se);
        }
    }
}
