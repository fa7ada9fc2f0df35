//! Static behavioral search model.
//!
//! A job seeker with current log wage `w0` receives an offer `r = w - w0` and
//! amenity draw `eps`, and accepts when `lambda^{1[r<0]} * r + eps > 0`. A
//! monopsonistic firm with relative productivity `phi` picks `r` to maximize
//! `p(r) * (phi - r)`, where `p` is the acceptance rate. Because `p` is kinked
//! at zero when `lambda > 1`, the optimal offer is exactly zero for every
//! `phi` inside the salary-match wedge `[m(0) / lambda, m(0)]`, with `m` the
//! inverse Mills ratio of the amenity distribution.

use serde::{Deserialize, Serialize};

use crate::dist::HetFamily;
use crate::error::{finite, Error, Result};
use crate::numeric::brent;

/// Tolerance on offers returned by [`ModelParams::optimal_offer`].
pub const OFFER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Loss aversion; 1 is the standard model.
    pub lambda: f64,
    /// Productivity relative to the current wage.
    pub phi: HetFamily,
    /// Non-wage amenities of the new job relative to the current one.
    pub eps: HetFamily,
}

/// Which one-sided derivative to take at the kink `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Productivity range that is offered exactly the current salary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wedge {
    pub lo: f64,
    pub hi: f64,
}

impl Wedge {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.lo && phi <= self.hi
    }
}

impl ModelParams {
    pub fn new(lambda: f64, phi: HetFamily, eps: HetFamily) -> Result<Self> {
        finite("lambda", lambda)?;
        if lambda < 1.0 {
            return Err(Error::invalid("lambda", format!("loss aversion must be >= 1, got {lambda}")));
        }
        // re-validate families in case they were built by hand
        HetFamily::new(phi.kind, phi.location, phi.scale)?;
        HetFamily::new(eps.kind, eps.location, eps.scale)?;
        Ok(ModelParams { lambda, phi, eps })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.phi, self.eps)
    }

    #[inline]
    fn weight(&self, r: f64) -> f64 {
        if r < 0.0 {
            self.lambda
        } else {
            1.0
        }
    }

    pub fn utility(&self, r: f64, eps_draw: f64) -> f64 {
        self.weight(r) * r + eps_draw
    }

    /// `p(r) = 1 - F_eps(-lambda^{1[r<0]} r)`.
    #[inline]
    pub fn acceptance_rate(&self, r: f64) -> f64 {
        self.eps.prob_above(-self.weight(r) * r)
    }

    /// `p'(r)`; `side` only matters at `r = 0`.
    pub fn acceptance_slope(&self, r: f64, side: Side) -> f64 {
        let w = if r == 0.0 {
            match side {
                Side::Left => self.lambda,
                Side::Right => 1.0,
            }
        } else {
            self.weight(r)
        };
        w * self.eps.density(-w * r)
    }

    pub fn expected_profit(&self, phi: f64, r: f64) -> f64 {
        self.acceptance_rate(r) * (phi - r)
    }

    pub fn marginal_profit(&self, phi: f64, r: f64, side: Side) -> f64 {
        -self.acceptance_rate(r) + self.acceptance_slope(r, side) * (phi - r)
    }

    pub fn salary_match_wedge(&self) -> Wedge {
        let m0 = self.eps.mills_raw(0.0);
        Wedge {
            lo: m0 / self.lambda,
            hi: m0,
        }
    }

    /// Productivity implied by an accepted pay cut, `r + m(-lambda r) / lambda`.
    #[inline]
    pub(crate) fn phi_cut(&self, r: f64) -> f64 {
        r + self.eps.mills_raw(-self.lambda * r) / self.lambda
    }

    /// Productivity implied by an accepted pay raise, `r + m(-r)`.
    #[inline]
    pub(crate) fn phi_raise(&self, r: f64) -> f64 {
        r + self.eps.mills_raw(-r)
    }

    /// `d phi_L / dr` (for `r <= 0`) or `d phi_G / dr` (for `r >= 0`), both > 1.
    #[inline]
    pub(crate) fn implied_phi_slope(&self, r: f64, side: Side) -> f64 {
        match side {
            Side::Left => 1.0 - self.eps.mills_slope_raw(-self.lambda * r),
            Side::Right => 1.0 - self.eps.mills_slope_raw(-r),
        }
    }

    /// Productivity that makes `r` the optimal offer. Not defined at `r = 0`,
    /// where a whole interval of productivity maps to the match (see
    /// [`ModelParams::salary_match_wedge`]).
    pub fn implied_phi(&self, r: f64) -> Result<f64> {
        let r = finite("r", r)?;
        if r < 0.0 {
            self.eps.mills(-self.lambda * r)?;
            Ok(self.phi_cut(r))
        } else if r > 0.0 {
            self.eps.mills(-r)?;
            Ok(self.phi_raise(r))
        } else {
            Err(Error::ZeroOffer)
        }
    }

    /// Profit-maximizing offer for productivity `phi`.
    pub fn optimal_offer(&self, phi: f64) -> Result<f64> {
        let phi = finite("phi", phi)?;
        let wedge = self.salary_match_wedge();
        if phi < wedge.lo {
            // phi_L(r) <= r + lo for r < 0, so the root lies in [phi - lo - pad, 0).
            let pad = 1e-3 * self.eps.scale;
            let a = phi - wedge.lo - pad;
            brent(|r| self.phi_cut(r) - phi, a, 0.0, OFFER_TOL, 200)
                .ok_or(Error::RootNotFound { phi, lo: a, hi: 0.0 })
        } else if phi > wedge.hi {
            // phi_G(r) >= r + hi for r > 0, so the root lies in (0, phi - hi + pad].
            let pad = 1e-3 * self.eps.scale;
            let b = phi - wedge.hi + pad;
            brent(|r| self.phi_raise(r) - phi, 0.0, b, OFFER_TOL, 200)
                .ok_or(Error::RootNotFound { phi, lo: 0.0, hi: b })
        } else {
            Ok(0.0)
        }
    }

    /// Density of offers (before acceptance) at `r != 0`.
    pub fn offer_density(&self, r: f64) -> f64 {
        if r < 0.0 {
            self.phi.density(self.phi_cut(r)) * self.implied_phi_slope(r, Side::Left)
        } else {
            self.phi.density(self.phi_raise(r)) * self.implied_phi_slope(r, Side::Right)
        }
    }

    /// Share of offers that are exact salary matches.
    pub fn match_share(&self) -> f64 {
        let w = self.salary_match_wedge();
        self.phi.prob_below(w.hi) - self.phi.prob_below(w.lo)
    }
}
