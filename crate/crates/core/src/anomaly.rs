//! Bunching, discontinuity and curvature-break statistics at zero salary growth.
//!
//! Bin proportions on each side of zero are smoothed separately with local
//! polynomial regression (Epanechnikov weights) on bin midpoints. The zero bin
//! is never part of the fit: it is the boundary where the one-sided fits are
//! evaluated. Local polynomials carry their own boundary correction, so no
//! reflection or extra kernel is needed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binprob::{BinCounts, BinGrid, BinnedDistribution};
use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 0.020;
pub const DEFAULT_FIT_RANGE: f64 = 0.2;
pub const DEFAULT_BOOTSTRAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    RuleOfThumb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub degree: usize,
    pub bandwidth: Bandwidth,
    /// Bins with midpoints in `[-fit_range, fit_range]` enter the fit.
    pub fit_range: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            degree: 1,
            bandwidth: Bandwidth::Fixed(DEFAULT_BANDWIDTH),
            fit_range: DEFAULT_FIT_RANGE,
        }
    }
}

impl KernelSpec {
    pub fn new(degree: usize, bandwidth: Bandwidth, fit_range: f64) -> Result<Self> {
        let spec = KernelSpec { degree, bandwidth, fit_range };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(Error::invalid("degree", format!("must be 1 or 2, got {}", self.degree)));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("bandwidth", format!("must be positive, got {h}")));
            }
        }
        if !(self.fit_range > 0.0 && self.fit_range.is_finite()) {
            return Err(Error::invalid("fit_range", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSide {
    Cuts,
    Raises,
}

/// The five smoothed or raw inputs behind every statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySes {
    pub p0_hat: f64,
    pub a0_hat: f64,
    pub a2_hat: f64,
    pub b0_hat: f64,
    pub b2_hat: f64,
    pub bunching_pp: f64,
    pub bunching_ratio: f64,
    pub discontinuity_pp: f64,
    pub discontinuity_pct: f64,
    pub curvature_break_pp: f64,
    pub curvature_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Raw share in the zero bin.
    pub p0_hat: f64,
    /// Smoothed raise-side density at zero and at the first bin above.
    pub a0_hat: f64,
    pub a2_hat: f64,
    /// Smoothed cut-side density at zero and at the first bin below.
    pub b0_hat: f64,
    pub b2_hat: f64,
    pub bunching_pp: f64,
    /// Excess zero-bin mass relative to the smoothed density, `(p0 - a0) / a0`.
    pub bunching_ratio: f64,
    pub discontinuity_pp: f64,
    pub discontinuity_pct: f64,
    pub curvature_break_pp: f64,
    pub curvature_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth_cuts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth_raises: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ses: Option<AnomalySes>,
}

impl AnomalyReport {
    pub fn from_parts(p0: f64, a0: f64, b0: f64, a2: f64, b2: f64) -> Self {
        AnomalyReport {
            p0_hat: p0,
            a0_hat: a0,
            a2_hat: a2,
            b0_hat: b0,
            b2_hat: b2,
            bunching_pp: p0 - a0,
            bunching_ratio: (p0 - a0) / a0,
            discontinuity_pp: a0 - b0,
            discontinuity_pct: (a0 - b0) / b0,
            curvature_break_pp: (b0 - b2) - (a2 - a0),
            curvature_ratio: (b0 - b2) / (a2 - a0),
            bandwidth_cuts: None,
            bandwidth_raises: None,
            ses: None,
        }
    }

    fn values(&self) -> [f64; 11] {
        [
            self.p0_hat,
            self.a0_hat,
            self.a2_hat,
            self.b0_hat,
            self.b2_hat,
            self.bunching_pp,
            self.bunching_ratio,
            self.discontinuity_pp,
            self.discontinuity_pct,
            self.curvature_break_pp,
            self.curvature_ratio,
        ]
    }
}

impl From<[f64; 11]> for AnomalySes {
    fn from(v: [f64; 11]) -> Self {
        AnomalySes {
            p0_hat: v[0],
            a0_hat: v[1],
            a2_hat: v[2],
            b0_hat: v[3],
            b2_hat: v[4],
            bunching_pp: v[5],
            bunching_ratio: v[6],
            discontinuity_pp: v[7],
            discontinuity_pct: v[8],
            curvature_break_pp: v[9],
            curvature_ratio: v[10],
        }
    }
}

#[inline]
fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Local polynomial regression on fixed design points, as a linear smoother.
#[derive(Debug, Clone)]
pub struct LocalPoly {
    xs: Vec<f64>,
    degree: usize,
    bandwidth: f64,
}

impl LocalPoly {
    pub fn new(xs: Vec<f64>, degree: usize, bandwidth: f64) -> Self {
        LocalPoly { xs, degree, bandwidth }
    }

    /// Equivalent-kernel weights `l_i(x0)` so that the fit at `x0` is `sum l_i y_i`.
    /// Entries are `(index into xs, weight)`.
    pub fn weights(&self, x0: f64) -> Result<Vec<(usize, f64)>> {
        self.weights_excluding(x0, None)
    }

    fn weights_excluding(&self, x0: f64, skip: Option<usize>) -> Result<Vec<(usize, f64)>> {
        let h = self.bandwidth;
        let p = self.degree + 1;
        let active: Vec<(usize, f64, f64)> = self
            .xs
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .filter_map(|(i, &x)| {
                let d = (x - x0) / h;
                let k = epanechnikov(d);
                (k > 0.0).then_some((i, d, k))
            })
            .collect();
        if active.len() < p {
            return Err(Error::KernelSupport {
                x: x0,
                found: active.len(),
                needed: p,
            });
        }
        let mut m = DMatrix::<f64>::zeros(p, p);
        for &(_, d, k) in &active {
            let mut pows = [1.0; 3];
            for j in 1..p {
                pows[j] = pows[j - 1] * d;
            }
            for r in 0..p {
                for c in 0..p {
                    m[(r, c)] += k * pows[r] * pows[c];
                }
            }
        }
        let mut e1 = DVector::<f64>::zeros(p);
        e1[0] = 1.0;
        let a = m
            .lu()
            .solve(&e1)
            .filter(|a| a.iter().all(|v| v.is_finite()))
            .ok_or(Error::KernelSupport {
                x: x0,
                found: active.len(),
                needed: p,
            })?;
        Ok(active
            .iter()
            .map(|&(i, d, k)| {
                let mut v = a[0];
                let mut pow = 1.0;
                for j in 1..p {
                    pow *= d;
                    v += a[j] * pow;
                }
                (i, k * v)
            })
            .collect())
    }

    pub fn fit_at(&self, x0: f64, ys: &[f64]) -> Result<f64> {
        Ok(self.weights(x0)?.iter().map(|&(i, l)| l * ys[i]).sum())
    }

    /// Leave-one-out prediction at design point `i` by refitting without it.
    pub fn loo_refit(&self, i: usize, ys: &[f64]) -> Result<f64> {
        Ok(self
            .weights_excluding(self.xs[i], Some(i))?
            .iter()
            .map(|&(j, l)| l * ys[j])
            .sum())
    }

    /// Weighted leave-one-out squared error, using the hat-matrix shortcut
    /// `(y_i - yhat_i) / (1 - L_ii)`.
    pub fn loo_error(&self, ys: &[f64], weight: impl Fn(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, &x) in self.xs.iter().enumerate() {
            let w = self.weights(x)?;
            let fit: f64 = w.iter().map(|&(j, l)| l * ys[j]).sum();
            let lii = w.iter().find(|&&(j, _)| j == i).map_or(0.0, |&(_, l)| l);
            if 1.0 - lii < 1e-10 {
                return Err(Error::KernelSupport {
                    x,
                    found: w.len() - 1,
                    needed: self.degree + 1,
                });
            }
            let e = (ys[i] - fit) / (1.0 - lii);
            total += weight(x) * e * e;
        }
        Ok(total)
    }
}

/// Midpoints and proportions of the non-zero bins on one side within the fit range.
fn side_sample(props: &BinnedDistribution, side: FitSide, fit_range: f64) -> (Vec<f64>, Vec<f64>) {
    let g = &props.grid;
    let tol = 1e-9 * g.width;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &p) in g.indices().zip(&props.props) {
        let x = k as f64 * g.width;
        let keep = match side {
            FitSide::Cuts => k < 0,
            FitSide::Raises => k > 0,
        };
        if keep && x.abs() <= fit_range + tol {
            xs.push(x);
            ys.push(p);
        }
    }
    (xs, ys)
}

/// Smoothed proportions on one side of zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideFit {
    pub side: FitSide,
    pub bandwidth: f64,
    /// Evaluation points: zero, then the bins on this side in order of distance from zero.
    pub midpoints: Vec<f64>,
    pub fitted: Vec<f64>,
}

fn resolve_bandwidth(props: &BinnedDistribution, spec: &KernelSpec, side: FitSide) -> Result<f64> {
    match spec.bandwidth {
        Bandwidth::Fixed(h) => Ok(h),
        Bandwidth::RuleOfThumb => rot_bandwidth_in(props, spec.degree, side, spec.fit_range),
    }
}

/// Local polynomial fit of one side, evaluated at zero and at every bin on
/// that side of the grid within the fit range.
pub fn kernel_density(props: &BinnedDistribution, spec: &KernelSpec, side: FitSide) -> Result<SideFit> {
    spec.validate()?;
    let h = resolve_bandwidth(props, spec, side)?;
    let (xs, ys) = side_sample(props, side, spec.fit_range);
    let lp = LocalPoly::new(xs, spec.degree, h);
    let g = &props.grid;
    let reach = ((spec.fit_range / g.width) + 1e-9).floor() as i64;
    let ks: Vec<i64> = match side {
        FitSide::Cuts => (g.k_lo().max(-reach)..=0).rev().collect(),
        FitSide::Raises => (0..=g.k_hi().min(reach)).collect(),
    };
    let mut midpoints = Vec::with_capacity(ks.len());
    let mut fitted = Vec::with_capacity(ks.len());
    for k in ks {
        let x = k as f64 * g.width;
        midpoints.push(x);
        fitted.push(lp.fit_at(x, &ys)?);
    }
    Ok(SideFit {
        side,
        bandwidth: h,
        midpoints,
        fitted,
    })
}

/// Linear map from the grid's proportions to their smoothed values: each
/// non-zero bin is replaced by its own side's local polynomial fit, the zero
/// bin (if present) is passed through.
pub fn smoother_matrix(grid: &BinGrid, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let h = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::RuleOfThumb => {
            return Err(Error::invalid("bandwidth", "a fixed bandwidth is required for a linear smoother"))
        }
    };
    let n = grid.len();
    let mut s = DMatrix::<f64>::zeros(n, n);
    let dummy = BinnedDistribution {
        grid: *grid,
        props: vec![0.0; n],
        n_obs: None,
    };
    for side in [FitSide::Cuts, FitSide::Raises] {
        let (xs, _) = side_sample(&dummy, side, spec.fit_range);
        let slots: Vec<usize> = xs
            .iter()
            .map(|&x| grid.slot((x / grid.width).round() as i64).expect("bin on grid"))
            .collect();
        let lp = LocalPoly::new(xs, spec.degree, h);
        for k in grid.indices().filter(|&k| match side {
            FitSide::Cuts => k < 0,
            FitSide::Raises => k > 0,
        }) {
            let row = grid.slot(k).expect("included bin");
            for (i, l) in lp.weights(k as f64 * grid.width)? {
                s[(row, slots[i])] += l;
            }
        }
    }
    if let Some(z) = grid.slot(0) {
        s[(z, z)] = 1.0;
    }
    Ok(s)
}

/// Kernel-smoothed version of `props` on the same grid (zero bin left raw).
pub fn smooth_distribution(props: &BinnedDistribution, spec: &KernelSpec) -> Result<BinnedDistribution> {
    let s = smoother_matrix(&props.grid, spec)?;
    let y = DVector::from_column_slice(&props.props);
    Ok(BinnedDistribution {
        grid: props.grid,
        props: (s * y).iter().copied().collect(),
        n_obs: props.n_obs,
    })
}

/// Log-spaced candidate bandwidths for the rule-of-thumb search.
pub fn bandwidth_candidates(width: f64, degree: usize, fit_range: f64) -> Vec<f64> {
    let lo = width * (degree as f64 + 1.5);
    let hi = fit_range;
    let n = 120;
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Rule-of-thumb bandwidth over the default fit range.
pub fn rot_bandwidth(props: &BinnedDistribution, degree: usize, side: FitSide) -> Result<f64> {
    rot_bandwidth_in(props, degree, side, DEFAULT_FIT_RANGE)
}

/// Bandwidth minimizing leave-one-out squared error of the side's fit,
/// weighted by an Epanechnikov kernel centred at zero over the fit range.
pub fn rot_bandwidth_in(props: &BinnedDistribution, degree: usize, side: FitSide, fit_range: f64) -> Result<f64> {
    let (xs, ys) = side_sample(props, side, fit_range);
    if ys.iter().all(|&y| y == 0.0) {
        return Err(Error::Degenerate("all proportions on this side are zero".into()));
    }
    let weight = |x: f64| epanechnikov(x / (fit_range + props.grid.width));
    let mut best: Option<(f64, f64)> = None;
    for h in bandwidth_candidates(props.grid.width, degree, fit_range) {
        let lp = LocalPoly::new(xs.clone(), degree, h);
        let Ok(cv) = lp.loo_error(&ys, weight) else { continue };
        if best.is_none_or(|(b, _)| cv < b) {
            best = Some((cv, h));
        }
    }
    best.map(|(_, h)| h)
        .ok_or(Error::KernelSupport {
            x: 0.0,
            found: xs.len(),
            needed: degree + 2,
        })
}

/// Anomaly statistics from binned proportions (no standard errors).
pub fn anomalies(props: &BinnedDistribution, spec: &KernelSpec) -> Result<AnomalyReport> {
    let g = &props.grid;
    if !g.include_zero_bin || g.k_lo() > -2 || g.k_hi() < 2 {
        return Err(Error::invalid("grid", "need the zero bin and at least two bins on each side"));
    }
    let cuts = kernel_density(props, spec, FitSide::Cuts)?;
    let raises = kernel_density(props, spec, FitSide::Raises)?;
    let p0 = props.get(0).expect("zero bin present");
    let mut rep = AnomalyReport::from_parts(p0, raises.fitted[0], cuts.fitted[0], raises.fitted[1], cuts.fitted[1]);
    if spec.bandwidth == Bandwidth::RuleOfThumb {
        rep.bandwidth_cuts = Some(cuts.bandwidth);
        rep.bandwidth_raises = Some(raises.bandwidth);
    }
    Ok(rep)
}

/// Data behind a bootstrap: bin counts or the raw observations.
#[derive(Debug, Clone)]
pub enum BootstrapData<'a> {
    Counts(&'a BinCounts),
    Raw { growth: &'a [f64], grid: BinGrid },
}

/// Multinomial draw of `total` observations over the bins (plus an implicit
/// outside category), via a chain of binomials.
pub(crate) fn multinomial_counts(rng: &mut ChaCha8Rng, total: u64, probs: &[f64]) -> Vec<u64> {
    let mut left = total;
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        if left == 0 || rest <= 0.0 {
            out.push(0);
            continue;
        }
        let q = (p / rest).clamp(0.0, 1.0);
        let x = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out.push(x);
        left -= x;
        rest -= p;
    }
    out
}

/// RNG for bootstrap draw `i`: one ChaCha8 stream per draw.
pub(crate) fn draw_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Resampled bin proportions for draw `i`.
pub(crate) fn resample(data: &BootstrapData<'_>, seed: u64, i: u64) -> Result<BinnedDistribution> {
    let mut rng = draw_rng(seed, i);
    match data {
        BootstrapData::Counts(c) => {
            let n = c.total as f64;
            let probs: Vec<f64> = c.counts.iter().map(|&k| k as f64 / n).collect();
            let counts = multinomial_counts(&mut rng, c.total, &probs);
            Ok(BinCounts {
                grid: c.grid,
                counts,
                total: c.total,
            }
            .to_distribution())
        }
        BootstrapData::Raw { growth, grid } => {
            use rand::Rng;
            let n = growth.len();
            let mut counts = vec![0u64; grid.len()];
            for _ in 0..n {
                let g = growth[rng.random_range(0..n)];
                if let Some(s) = grid.bin_of(g).and_then(|k| grid.slot(k)) {
                    counts[s] += 1;
                }
            }
            Ok(BinCounts {
                grid: *grid,
                counts,
                total: n as u64,
            }
            .to_distribution())
        }
    }
}

pub(crate) fn validate_bootstrap(data: &BootstrapData<'_>, iterations: usize) -> Result<BinnedDistribution> {
    if iterations < 100 {
        return Err(Error::invalid("iterations", format!("need at least 100, got {iterations}")));
    }
    match data {
        BootstrapData::Counts(c) => Ok(c.to_distribution()),
        BootstrapData::Raw { growth, grid } => Ok(BinCounts::from_growth(*grid, growth)?.to_distribution()),
    }
}

/// Anomaly report with bootstrap standard errors (across-draw standard deviations).
pub fn bootstrap_ses(data: &BootstrapData<'_>, spec: &KernelSpec, iterations: usize, seed: u64) -> Result<AnomalyReport> {
    let props = validate_bootstrap(data, iterations)?;
    let mut report = anomalies(&props, spec)?;
    let draws: Vec<[f64; 11]> = (0..iterations as u64)
        .into_par_iter()
        .map(|i| anomalies(&resample(data, seed, i)?, spec).map(|r| r.values()))
        .collect::<Result<_>>()?;
    let n = draws.len() as f64;
    let mut sd = [0.0; 11];
    for (j, s) in sd.iter_mut().enumerate() {
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n;
        let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        *s = var.sqrt();
    }
    report.ses = Some(AnomalySes::from(sd));
    Ok(report)
}
