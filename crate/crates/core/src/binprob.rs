//! Bins of salary growth and the model's predicted share of accepted offers in each.
//!
//! A grid is described by the midpoints of its outermost bins. Bin `k` is
//! centred at `k * width` and covers `[(k - 1/2) width, (k + 1/2) width)`, so
//! the zero bin straddles zero symmetrically. Predicted proportions are
//! shares of *all* accepted offers, so they need not sum to one over a grid
//! that does not cover the support.

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyReport;
use crate::error::{finite, Error, Result};
use crate::model::{ModelParams, Side};
use crate::numeric::integrate;

/// Mass of the productivity distribution left outside the integration range, per tail.
const TAIL_MASS: f64 = 1e-14;
const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    /// Midpoint of the lowest bin.
    pub lo: f64,
    /// Midpoint of the highest bin.
    pub hi: f64,
    pub width: f64,
    pub include_zero_bin: bool,
}

impl BinGrid {
    pub fn new(lo: f64, hi: f64, width: f64, include_zero_bin: bool) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        finite("width", width)?;
        if width <= 0.0 {
            return Err(Error::invalid("width", "bin width must be positive"));
        }
        if !(lo < 0.0 && hi > 0.0) {
            return Err(Error::invalid("lo/hi", format!("range [{lo}, {hi}] must contain bins on both sides of zero")));
        }
        for (name, v) in [("lo", lo), ("hi", hi)] {
            let k = v / width;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::invalid(name, format!("{v} is not a multiple of the bin width {width}")));
            }
        }
        Ok(BinGrid { lo, hi, width, include_zero_bin })
    }

    /// Symmetric grid `[-range, range]` with the given width.
    pub fn symmetric(range: f64, width: f64, include_zero_bin: bool) -> Result<Self> {
        Self::new(-range, range, width, include_zero_bin)
    }

    pub fn k_lo(&self) -> i64 {
        (self.lo / self.width).round() as i64
    }

    pub fn k_hi(&self) -> i64 {
        (self.hi / self.width).round() as i64
    }

    /// Bin indices of the included bins, in increasing order.
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (self.k_lo()..=self.k_hi()).filter(move |&k| k != 0 || self.include_zero_bin)
    }

    pub fn len(&self) -> usize {
        let all = (self.k_hi() - self.k_lo() + 1) as usize;
        if self.include_zero_bin {
            all
        } else {
            all - 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.indices().map(|k| k as f64 * self.width).collect()
    }

    /// Index of the bin containing `r` among all bins (zero bin included), or
    /// `None` outside the grid.
    pub fn bin_of(&self, r: f64) -> Option<i64> {
        let k = (r / self.width + 0.5).floor();
        if !k.is_finite() || k < self.k_lo() as f64 || k > self.k_hi() as f64 {
            return None;
        }
        Some(k as i64)
    }

    /// Position of bin `k` in the vector of included bins.
    pub fn slot(&self, k: i64) -> Option<usize> {
        if k < self.k_lo() || k > self.k_hi() || (k == 0 && !self.include_zero_bin) {
            return None;
        }
        let pos = (k - self.k_lo()) as usize;
        Some(if !self.include_zero_bin && k > 0 { pos - 1 } else { pos })
    }

    pub fn with_zero_bin(&self, include: bool) -> Self {
        BinGrid {
            include_zero_bin: include,
            ..*self
        }
    }

    pub(crate) fn same_layout(&self, other: &BinGrid) -> bool {
        self.k_lo() == other.k_lo()
            && self.k_hi() == other.k_hi()
            && self.include_zero_bin == other.include_zero_bin
            && (self.width - other.width).abs() <= 1e-12 * self.width
    }
}

fn same_width(a: &BinGrid, b: &BinGrid) -> bool {
    (a.width - b.width).abs() <= 1e-12 * a.width
}

/// Proportions aligned to the included bins of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDistribution {
    pub grid: BinGrid,
    pub props: Vec<f64>,
    /// Number of observations behind empirical proportions; absent for predictions.
    pub n_obs: Option<u64>,
}

impl BinnedDistribution {
    pub fn new(grid: BinGrid, props: Vec<f64>, n_obs: Option<u64>) -> Result<Self> {
        if props.len() != grid.len() {
            return Err(Error::BinMismatch(format!("{} proportions for {} bins", props.len(), grid.len())));
        }
        let mut total = 0.0;
        for &p in &props {
            if !(p >= 0.0) {
                return Err(Error::invalid("props", format!("proportion {p} is negative or NaN")));
            }
            total += p;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::invalid("props", format!("proportions sum to {total} > 1")));
        }
        Ok(BinnedDistribution { grid, props, n_obs })
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.grid.midpoints()
    }

    /// Proportion in bin `k`, if that bin is included.
    pub fn get(&self, k: i64) -> Option<f64> {
        self.grid.slot(k).map(|i| self.props[i])
    }

    /// Restrict to a sub-grid with the same width and alignment.
    pub fn restrict(&self, grid: BinGrid) -> Result<Self> {
        if !same_width(&grid, &self.grid) || grid.k_lo() < self.grid.k_lo() || grid.k_hi() > self.grid.k_hi() {
            return Err(Error::BinMismatch("sub-grid does not nest inside the source grid".into()));
        }
        let mut props = Vec::with_capacity(grid.len());
        for k in grid.indices() {
            props.push(self.get(k).ok_or_else(|| Error::BinMismatch(format!("bin {k} missing from source")))?);
        }
        Self::new(grid, props, self.n_obs)
    }
}

/// Counts per included bin plus the total number of observations, including
/// those that fall outside the grid or in an excluded zero bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCounts {
    pub grid: BinGrid,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl BinCounts {
    pub fn new(grid: BinGrid, counts: Vec<u64>, total: u64) -> Result<Self> {
        if counts.len() != grid.len() {
            return Err(Error::BinMismatch(format!("{} counts for {} bins", counts.len(), grid.len())));
        }
        let inside: u64 = counts.iter().sum();
        if inside > total || total == 0 {
            return Err(Error::invalid("total", format!("total {total} must be positive and at least the binned count {inside}")));
        }
        Ok(BinCounts { grid, counts, total })
    }

    pub fn from_growth(grid: BinGrid, growth: &[f64]) -> Result<Self> {
        let mut counts = vec![0u64; grid.len()];
        for (i, &g) in growth.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("non-finite growth value {g}"),
                });
            }
            if let Some(s) = grid.bin_of(g).and_then(|k| grid.slot(k)) {
                counts[s] += 1;
            }
        }
        Self::new(grid, counts, growth.len() as u64)
    }

    /// Restrict to a sub-grid; observations dropped from the grid still count in `total`.
    pub fn restrict(&self, grid: BinGrid) -> Result<Self> {
        if !same_width(&grid, &self.grid) || grid.k_lo() < self.grid.k_lo() || grid.k_hi() > self.grid.k_hi() {
            return Err(Error::BinMismatch("sub-grid does not nest inside the source grid".into()));
        }
        let counts = grid
            .indices()
            .map(|k| {
                self.grid
                    .slot(k)
                    .map(|s| self.counts[s])
                    .ok_or_else(|| Error::BinMismatch(format!("bin {k} missing from source")))
            })
            .collect::<Result<_>>()?;
        Self::new(grid, counts, self.total)
    }

    pub fn to_distribution(&self) -> BinnedDistribution {
        let n = self.total as f64;
        BinnedDistribution {
            grid: self.grid,
            props: self.counts.iter().map(|&c| c as f64 / n).collect(),
            n_obs: Some(self.total),
        }
    }
}

/// Density of accepted offers at `r != 0`, before dividing by the accepted mass.
#[inline]
pub(crate) fn accepted_density_unnormalized(p: &ModelParams, r: f64) -> f64 {
    p.acceptance_rate(r) * p.offer_density(r)
}

/// Offer range outside which the productivity distribution has negligible mass.
pub(crate) fn offer_support(p: &ModelParams) -> Result<(f64, f64)> {
    let phi_lo = p.phi.quantile_raw(TAIL_MASS);
    let phi_hi = p.phi.quantile_upper(TAIL_MASS)?;
    Ok((p.optimal_offer(phi_lo)?.min(0.0), p.optimal_offer(phi_hi)?.max(0.0)))
}

/// Total probability `A` that an offer is accepted.
pub fn accepted_mass(p: &ModelParams) -> Result<f64> {
    let (r_lo, r_hi) = offer_support(p)?;
    let cuts = integrate(|r| accepted_density_unnormalized(p, r), r_lo, 0.0, QUAD_TOL, 2000)?;
    let raises = integrate(|r| accepted_density_unnormalized(p, r), 0.0, r_hi, QUAD_TOL, 2000)?;
    Ok(cuts + raises + p.acceptance_rate(0.0) * p.match_share())
}

/// Unnormalized mass of accepted offers in the zero bin `[-w/2, w/2)`:
/// the salary matches plus the continuous pieces on either side.
fn zero_bin_mass(p: &ModelParams, width: f64) -> f64 {
    let wedge = p.salary_match_wedge();
    let half = 0.5 * width;
    let matches = p.acceptance_rate(0.0) * p.match_share();
    let below = p.acceptance_rate(-0.5 * half) * p.phi.mass_between(p.phi_cut(-half), wedge.lo);
    let above = p.acceptance_rate(0.5 * half) * p.phi.mass_between(wedge.hi, p.phi_raise(half));
    matches + below + above
}

/// Predicted share of accepted offers in each bin of `grid`.
pub fn predicted_props(p: &ModelParams, grid: &BinGrid) -> Result<BinnedDistribution> {
    let a = accepted_mass(p)?;
    let w = grid.width;
    let mut props = Vec::with_capacity(grid.len());
    for k in grid.indices() {
        let mass = if k == 0 {
            zero_bin_mass(p, w)
        } else {
            let (lo, hi) = ((k as f64 - 0.5) * w, (k as f64 + 0.5) * w);
            let mid = k as f64 * w;
            if k < 0 {
                p.acceptance_rate(mid) * p.phi.mass_between(p.phi_cut(lo), p.phi_cut(hi))
            } else {
                p.acceptance_rate(mid) * p.phi.mass_between(p.phi_raise(lo), p.phi_raise(hi))
            }
        };
        props.push(mass / a);
    }
    Ok(BinnedDistribution {
        grid: *grid,
        props,
        n_obs: None,
    })
}

/// Anomalies implied by the model on `grid`: the one-sided densities are the
/// accepted density at `0` and `±width`, scaled to bin proportions.
pub fn predicted_anomalies(p: &ModelParams, grid: &BinGrid) -> Result<AnomalyReport> {
    if grid.k_lo() > -2 || grid.k_hi() < 2 {
        return Err(Error::invalid("grid", "need at least two bins on each side of zero"));
    }
    let a = accepted_mass(p)?;
    let w = grid.width;
    let dens = |r: f64, side: Side| {
        let phi = if side == Side::Left { p.phi_cut(r) } else { p.phi_raise(r) };
        let rate = p.eps.prob_above(-if side == Side::Left { p.lambda * r } else { r });
        w * rate * p.phi.density(phi) * p.implied_phi_slope(r, side) / a
    };
    let p0 = zero_bin_mass(p, w) / a;
    Ok(AnomalyReport::from_parts(
        p0,
        dens(0.0, Side::Right),
        dens(0.0, Side::Left),
        dens(w, Side::Right),
        dens(-w, Side::Left),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::HetFamily;
    use crate::numeric::brent;
    use approx::assert_abs_diff_eq;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::new(
            lambda,
            HetFamily::logistic(1.2, 0.15).unwrap(),
            HetFamily::logistic(0.0, 0.611).unwrap(),
        )
        .unwrap()
    }

    /// `A = 1 - int_{r<0} F_phi(phi_L(r)) lambda f_eps(-lambda r) dr - int_{r>0} F_phi(phi_G(r)) f_eps(-r) dr`,
    /// from integrating `int p dF_phi` by parts on each side.
    fn mass_by_parts(p: &ModelParams) -> f64 {
        let (r_lo, r_hi) = offer_support(p).unwrap();
        let cuts = integrate(|r| p.phi.prob_below(p.phi_cut(r)) * p.lambda * p.eps.density(-p.lambda * r), r_lo - 60.0, 0.0, 1e-13, 4000).unwrap();
        let raises = integrate(|r| p.phi.prob_below(p.phi_raise(r)) * p.eps.density(-r), 0.0, r_hi + 60.0, 1e-13, 4000).unwrap();
        1.0 - cuts - raises
    }

    #[test]
    fn grid_layout() {
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g.with_zero_bin(false).len(), 200);
        assert_eq!(g.bin_of(0.0), Some(0));
        assert_eq!(g.bin_of(0.000_999), Some(0));
        assert_eq!(g.bin_of(-0.001), Some(0));
        assert_eq!(g.bin_of(0.001), Some(1));
        assert_eq!(g.bin_of(0.2009), Some(100));
        assert_eq!(g.bin_of(0.2011), None);
        let h = g.with_zero_bin(false);
        assert_eq!(h.slot(-1), Some(99));
        assert_eq!(h.slot(1), Some(100));
        assert_eq!(h.slot(0), None);
        assert!(BinGrid::new(-0.2, 0.2011, 0.002, true).is_err());
    }

    #[test]
    fn mass_agrees_with_integration_by_parts() {
        for lambda in [1.0, 1.123, 1.5, 3.0] {
            let p = params(lambda);
            assert_abs_diff_eq!(accepted_mass(&p).unwrap(), mass_by_parts(&p), epsilon = 1e-9);
        }
        let n = ModelParams::new(1.4, HetFamily::normal(0.3, 0.4).unwrap(), HetFamily::normal(0.1, 0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(accepted_mass(&n).unwrap(), mass_by_parts(&n), epsilon = 1e-9);
    }

    #[test]
    fn mass_agrees_with_phi_space_quadrature() {
        // Second route: integrate p(r*(phi)) f_phi(phi) over phi with a root solve per node.
        let p = params(1.5);
        let w = p.salary_match_wedge();
        let f = |phi: f64| p.acceptance_rate(p.optimal_offer(phi).unwrap()) * p.phi.density(phi);
        let lo = p.phi.location - 40.0 * p.phi.scale;
        let hi = p.phi.location + 40.0 * p.phi.scale;
        let total = integrate(f, lo, w.lo, 1e-12, 2000).unwrap()
            + integrate(f, w.lo, w.hi, 1e-12, 2000).unwrap()
            + integrate(f, w.hi, hi, 1e-12, 2000).unwrap();
        assert_abs_diff_eq!(accepted_mass(&p).unwrap(), total, epsilon = 1e-8);
    }

    #[test]
    fn mass_tends_to_one_as_amenity_noise_vanishes() {
        // Firms undercut large amenities, so acceptance only approaches one as the noise shrinks.
        let mut last = 0.0;
        for s in [0.2, 0.05, 0.02, 0.01] {
            let p = ModelParams::new(1.0, HetFamily::logistic(1.2, 0.15).unwrap(), HetFamily::logistic(0.3, s).unwrap()).unwrap();
            let a = accepted_mass(&p).unwrap();
            assert!(a > last && a <= 1.0);
            last = a;
        }
        assert!(1.0 - last < 0.02);
    }

    #[test]
    fn cut_side_acceptance_scales_with_lambda() {
        // With logistic amenities centred at zero, r_lambda(phi) = r_1(lambda phi) / lambda,
        // so acceptance of a cut under lambda equals acceptance at lambda * phi without loss aversion.
        // The accepted mass therefore need not fall with lambda.
        let one = params(1.0);
        for l in [1.1, 1.5, 2.5] {
            let p = params(l);
            for phi in [-0.5, 0.2, 0.4] {
                let lhs = p.acceptance_rate(p.optimal_offer(phi).unwrap());
                let rhs = one.acceptance_rate(one.optimal_offer(l * phi).unwrap());
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn full_support_sums_to_one() {
        for lambda in [1.0, 1.123, 2.0] {
            let p = params(lambda);
            let (r_lo, r_hi) = offer_support(&p).unwrap();
            let w = 0.002;
            let lo = (r_lo / w).floor() * w - w;
            let hi = (r_hi / w).ceil() * w + w;
            let g = BinGrid::new(lo, hi, w, true).unwrap();
            let s: f64 = predicted_props(&p, &g).unwrap().props.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "lambda {lambda}: {s}");
        }
    }

    #[test]
    fn bin_props_match_exact_bin_integrals() {
        // Midpoint-p approximation vs exact integral of the accepted density over each bin.
        let p = params(1.3);
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let pred = predicted_props(&p, &g).unwrap();
        let a = accepted_mass(&p).unwrap();
        for k in [-100, -37, -1, 1, 2, 55, 100] {
            let (lo, hi) = ((k as f64 - 0.5) * 0.002, (k as f64 + 0.5) * 0.002);
            let exact = integrate(|r| accepted_density_unnormalized(&p, r), lo, hi, 1e-15, 200).unwrap() / a;
            let got = pred.get(k).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-5, "bin {k}");
        }
    }

    #[test]
    fn no_excess_mass_without_loss_aversion() {
        let p = params(1.0);
        let g = BinGrid::symmetric(0.02, 0.002, true).unwrap();
        let pred = predicted_props(&p, &g).unwrap();
        let (m1, z, p1) = (pred.get(-1).unwrap(), pred.get(0).unwrap(), pred.get(1).unwrap());
        // only the curvature of the smooth density separates the zero bin from its neighbours
        assert!((z - 0.5 * (m1 + p1)).abs() < 2e-6);
        let rep = predicted_anomalies(&p, &g).unwrap();
        assert!(rep.bunching_pp.abs() < 1e-6);
        assert!(rep.discontinuity_pp.abs() < 1e-12);
        assert!(rep.curvature_break_pp.abs() < 1e-5);
    }

    #[test]
    fn loss_aversion_anomaly_signs() {
        let g = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let r = predicted_anomalies(&params(1.5), &g).unwrap();
        assert!(r.discontinuity_pp > 0.0 && r.bunching_pp > 0.0);
        let mut last = predicted_anomalies(&params(1.0), &g).unwrap();
        for l in [1.05, 1.123, 1.3, 1.6, 2.0, 3.0] {
            let cur = predicted_anomalies(&params(l), &g).unwrap();
            assert!(cur.bunching_pp >= last.bunching_pp);
            assert!(cur.discontinuity_pp >= last.discontinuity_pp);
            // The curvature break rises near lambda = 1 but falls again once the
            // cut-side density near zero becomes small.
            if l <= 1.123 {
                assert!(cur.curvature_break_pp >= last.curvature_break_pp);
            }
            last = cur;
        }
    }

    #[test]
    fn halving_width_halves_props() {
        let p = params(1.123);
        let coarse = predicted_props(&p, &BinGrid::symmetric(0.2, 0.004, true).unwrap()).unwrap();
        let fine = predicted_props(&p, &BinGrid::symmetric(0.2, 0.002, true).unwrap()).unwrap();
        for k in [-20i64, -5, 5, 20] {
            let ratio = fine.get(2 * k).unwrap() / coarse.get(k).unwrap();
            assert!((ratio - 0.5).abs() < 0.025);
        }
    }

    #[test]
    fn accepted_density_at_edges_matches_oracle() {
        // Density of r* at r via the inverse map, checked against a numerical
        // derivative of P(r* <= r) = F_phi(phi(r)) computed from the root finder.
        let p = params(1.5);
        let cdf_offer = |r: f64| {
            let phi = brent(|x| p.optimal_offer(x).unwrap() - r, -5.0, 5.0, 1e-14, 300).unwrap();
            p.phi.prob_below(phi)
        };
        for r in [-0.1, 0.1] {
            let h = 1e-5;
            let fd = (cdf_offer(r + h) - cdf_offer(r - h)) / (2.0 * h);
            assert!((p.offer_density(r) / fd - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn counts_and_restrict() {
        let g = BinGrid::symmetric(0.004, 0.002, false).unwrap();
        let c = BinCounts::from_growth(g, &[0.0, -0.0035, 0.0031, 0.0031, 0.5]).unwrap();
        assert_eq!(c.counts, vec![1, 0, 0, 2]);
        assert_eq!(c.total, 5);
        let d = c.to_distribution();
        assert_eq!(d.props, vec![0.2, 0.0, 0.0, 0.4]);
        let wide = predicted_props(&params(1.1), &BinGrid::symmetric(0.2, 0.002, true).unwrap()).unwrap();
        let narrow = wide.restrict(BinGrid::symmetric(0.01, 0.002, false).unwrap()).unwrap();
        assert_eq!(narrow.props.len(), 10);
        assert_eq!(narrow.props[0], wide.get(-5).unwrap());
        assert!(BinCounts::from_growth(g, &[f64::NAN]).is_err());
        let inner = c.restrict(BinGrid::symmetric(0.002, 0.002, false).unwrap()).unwrap();
        assert_eq!((inner.counts, inner.total), (vec![0, 0], 5));
        assert!(c.restrict(BinGrid::symmetric(0.006, 0.002, false).unwrap()).is_err());
    }
}
