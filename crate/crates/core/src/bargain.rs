//! Nash bargaining over the wage change when the worker is loss averse.
//!
//! The worker's surplus is `lambda^{1[r<0]} r + eps` and the firm's is
//! `phi - r`. The Nash product has a kink at `r = 0`, so the solution is a
//! pay cut, an exact salary match or a pay raise depending on where `phi`
//! falls relative to `(1 - beta) eps / (beta lambda)` and `(1 - beta) eps / beta`.

use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BargainInput {
    /// Worker bargaining power.
    pub beta: f64,
    pub lambda: f64,
    pub eps: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `eps <= 0`, `phi > 0`, `phi > -eps`.
    APlus,
    /// `eps > 0`, `phi <= 0`, `phi > -eps / lambda`.
    AMinus,
    /// `eps > 0`, `phi > 0`.
    APlusMinus,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BargainStatus {
    NoBargain,
    PayCut,
    SalaryMatch,
    PayRaise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BargainOutcome {
    pub status: BargainStatus,
    pub r: Option<f64>,
}

impl BargainInput {
    pub fn new(beta: f64, lambda: f64, eps: f64, phi: f64) -> Result<Self> {
        let inp = BargainInput { beta, lambda, eps, phi };
        inp.validate()?;
        Ok(inp)
    }

    fn validate(&self) -> Result<()> {
        finite("beta", self.beta)?;
        finite("lambda", self.lambda)?;
        finite("eps", self.eps)?;
        finite("phi", self.phi)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", format!("need 0 < beta < 1, got {}", self.beta)));
        }
        if self.lambda < 1.0 {
            return Err(Error::invalid("lambda", format!("need lambda >= 1, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Log of the Nash product `(lambda^L r + eps)^beta (phi - r)^(1 - beta)`,
    /// or `-inf` where either party's surplus is not positive.
    pub fn log_joint_payoff(&self, r: f64) -> f64 {
        let worker = if r < 0.0 { self.lambda * r } else { r } + self.eps;
        let firm = self.phi - r;
        if worker <= 0.0 || firm <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.beta * worker.ln() + (1.0 - self.beta) * firm.ln()
    }
}

pub fn bargain_region(inp: &BargainInput) -> Region {
    let BargainInput { lambda, eps, phi, .. } = *inp;
    if eps <= 0.0 {
        if phi > 0.0 && phi > -eps {
            Region::APlus
        } else {
            Region::Outside
        }
    } else if phi <= 0.0 {
        if phi > -eps / lambda {
            Region::AMinus
        } else {
            Region::Outside
        }
    } else {
        Region::APlusMinus
    }
}

pub fn nash_wage(inp: &BargainInput) -> Result<BargainOutcome> {
    inp.validate()?;
    if bargain_region(inp) == Region::Outside {
        return Ok(BargainOutcome {
            status: BargainStatus::NoBargain,
            r: None,
        });
    }
    let BargainInput { beta, lambda, eps, phi } = *inp;
    let k = (1.0 - beta) / beta;
    let (lo, hi) = (k * eps / lambda, k * eps);
    Ok(if phi < lo {
        BargainOutcome {
            status: BargainStatus::PayCut,
            r: Some(beta * phi - (1.0 - beta) * eps / lambda),
        }
    } else if phi > hi {
        BargainOutcome {
            status: BargainStatus::PayRaise,
            r: Some(beta * phi - (1.0 - beta) * eps),
        }
    } else {
        BargainOutcome {
            status: BargainStatus::SalaryMatch,
            r: Some(0.0),
        }
    })
}

/// Derivative of the bargained wage change with respect to `lambda`.
pub fn dcut_dlambda(inp: &BargainInput) -> Result<f64> {
    match nash_wage(inp)?.status {
        BargainStatus::PayCut => Ok((1.0 - inp.beta) * inp.eps / (inp.lambda * inp.lambda)),
        BargainStatus::PayRaise => Ok(0.0),
        BargainStatus::SalaryMatch => Err(Error::Undefined("salary matches")),
        BargainStatus::NoBargain => Err(Error::Undefined("inputs outside the bargaining region")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inp(beta: f64, lambda: f64, eps: f64, phi: f64) -> BargainInput {
        BargainInput::new(beta, lambda, eps, phi).unwrap()
    }

    /// Grid argmax of the Nash product over the interval where both surpluses are positive.
    fn grid_argmax(b: &BargainInput, step: f64) -> f64 {
        let lo = if b.eps > 0.0 { -b.eps / b.lambda } else { -b.eps };
        let n = ((b.phi - lo) / step).floor() as usize;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for i in 1..n {
            let r = lo + step * i as f64;
            let v = b.log_joint_payoff(r);
            if v > best.0 {
                best = (v, r);
            }
        }
        // the kink can fall between grid points
        if b.log_joint_payoff(0.0) > best.0 {
            best.1 = 0.0;
        }
        best.1
    }

    #[test]
    fn regions() {
        assert_eq!(bargain_region(&inp(0.5, 1.0, -0.1, 0.2)), Region::APlus);
        assert_eq!(bargain_region(&inp(0.5, 2.0, 0.2, -0.05)), Region::AMinus);
        assert_eq!(bargain_region(&inp(0.5, 1.0, 0.2, -0.05)), Region::AMinus);
        assert_eq!(bargain_region(&inp(0.5, 2.0, 0.2, -0.15)), Region::Outside);
        assert_eq!(bargain_region(&inp(0.5, 2.0, 0.2, 0.3)), Region::APlusMinus);
        assert_eq!(bargain_region(&inp(0.5, 1.0, -0.3, 0.2)), Region::Outside);
    }

    #[test]
    fn boundary_is_no_bargain() {
        let out = nash_wage(&inp(0.5, 2.0, 0.2, -0.1)).unwrap();
        assert_eq!(out.status, BargainStatus::NoBargain);
        assert_eq!(out.r, None);
    }

    #[test]
    fn salary_match_example() {
        let b = inp(0.5, 2.0, 0.2, 0.15);
        let out = nash_wage(&b).unwrap();
        assert_eq!(out.status, BargainStatus::SalaryMatch);
        assert_eq!(out.r, Some(0.0));
        assert_eq!(grid_argmax(&b, 1e-4), 0.0);
        // thresholds are closed
        assert_eq!(nash_wage(&inp(0.5, 2.0, 0.2, 0.1)).unwrap().status, BargainStatus::SalaryMatch);
        assert_eq!(nash_wage(&inp(0.5, 2.0, 0.2, 0.2)).unwrap().status, BargainStatus::SalaryMatch);
    }

    #[test]
    fn pay_cut_example() {
        let b = inp(0.5, 2.0, 0.2, 0.05);
        let out = nash_wage(&b).unwrap();
        assert_eq!(out.status, BargainStatus::PayCut);
        assert_abs_diff_eq!(out.r.unwrap(), -0.025, epsilon = 1e-15);
        assert!((grid_argmax(&b, 1e-4) + 0.025).abs() < 2e-4);
    }

    #[test]
    fn no_loss_aversion_collapses_match() {
        let b = inp(0.5, 1.0, 0.3, 0.3);
        let out = nash_wage(&b).unwrap();
        // both thresholds equal (1 - beta) eps / beta = 0.3
        assert_eq!(out.status, BargainStatus::SalaryMatch);
        let below = nash_wage(&inp(0.5, 1.0, 0.3, 0.3 - 1e-9)).unwrap().r.unwrap();
        let above = nash_wage(&inp(0.5, 1.0, 0.3, 0.3 + 1e-9)).unwrap().r.unwrap();
        assert!(below.abs() < 1e-9 && above.abs() < 1e-9);
    }

    #[test]
    fn derivative_values() {
        assert_abs_diff_eq!(dcut_dlambda(&inp(0.5, 2.0, 0.2, 0.05)).unwrap(), 0.025, epsilon = 1e-15);
        assert_eq!(dcut_dlambda(&inp(0.5, 2.0, 0.2, 0.9)).unwrap(), 0.0);
        assert!(matches!(dcut_dlambda(&inp(0.5, 2.0, 0.2, 0.15)), Err(Error::Undefined(_))));
        // eps = 0 with phi > 0 is a raise, so the cut-side formula is never reached with eps = 0
        assert_eq!(dcut_dlambda(&inp(0.5, 2.0, 0.0, 0.3)).unwrap(), 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = inp(0.5, 2.0, 0.2, 0.05);
        let h = 1e-5;
        let up = nash_wage(&inp(0.5, 2.0 + h, 0.2, 0.05)).unwrap().r.unwrap();
        let dn = nash_wage(&inp(0.5, 2.0 - h, 0.2, 0.05)).unwrap().r.unwrap();
        assert!(((up - dn) / (2.0 * h) - dcut_dlambda(&b).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BargainInput::new(0.0, 1.0, 0.1, 0.1).is_err());
        assert!(BargainInput::new(0.5, 0.9, 0.1, 0.1).is_err());
        assert!(BargainInput::new(0.5, 1.0, f64::NAN, 0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn participation_holds(beta in 0.05f64..0.95, lambda in 1.0f64..3.0, eps in -0.5f64..0.5, phi in -0.5f64..0.8) {
            let b = inp(beta, lambda, eps, phi);
            if let Some(r) = nash_wage(&b).unwrap().r {
                let worker = if r < 0.0 { lambda * r } else { r } + eps;
                prop_assert!(worker > 0.0 && phi - r > 0.0);
            }
        }

        #[test]
        fn cut_region_shrinks_with_lambda(lambda in 1.0f64..3.0, dl in 0.0f64..2.0, eps in 0.0f64..0.5, phi in -0.5f64..0.0) {
            let hi = bargain_region(&inp(0.5, lambda + dl, eps, phi)) == Region::AMinus;
            let lo = bargain_region(&inp(0.5, lambda, eps, phi)) == Region::AMinus;
            prop_assert!(!hi || lo);
        }
    }
}
