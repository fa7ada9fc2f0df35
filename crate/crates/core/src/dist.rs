//! Location-scale families for unobserved heterogeneity.
//!
//! Both productivity and amenity draws use one of two families: the logistic
//! (primary) or the normal. Each is fixed by a location and a scale; for the
//! logistic the scale is `s` in `F(x) = 1 / (1 + exp(-(x - loc) / s))`, whose
//! variance is `s^2 pi^2 / 3`, and for the normal it is the standard deviation.
//!
//! The inverse Mills ratio `m(x) = (1 - F(x)) / f(x)` is strictly *decreasing*
//! in `x` for both families (their hazard rates increase). Offer optimality
//! conditions use it reflected, as `r -> m(-r)`, which is increasing in `r`.

use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};

/// Standardized distance beyond which the CDF is clamped to exactly 0 or 1.
pub const TAIL_CLAMP: f64 = 40.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Logistic,
    Normal,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(FamilyKind::Logistic),
            "normal" => Ok(FamilyKind::Normal),
            other => Err(Error::invalid("family", format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HetFamily {
    pub kind: FamilyKind,
    pub location: f64,
    pub scale: f64,
}

impl HetFamily {
    pub fn new(kind: FamilyKind, location: f64, scale: f64) -> Result<Self> {
        finite("location", location)?;
        finite("scale", scale)?;
        if scale <= 0.0 {
            return Err(Error::invalid("scale", format!("must be > 0, got {scale}")));
        }
        Ok(HetFamily {
            kind,
            location,
            scale,
        })
    }

    pub fn logistic(location: f64, scale: f64) -> Result<Self> {
        Self::new(FamilyKind::Logistic, location, scale)
    }

    pub fn normal(location: f64, scale: f64) -> Result<Self> {
        Self::new(FamilyKind::Normal, location, scale)
    }

    /// Same family and scale, shifted location.
    pub fn shifted(&self, by: f64) -> Self {
        HetFamily {
            location: self.location + by,
            ..*self
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self.kind {
            FamilyKind::Logistic => self.scale * std::f64::consts::PI / 3f64.sqrt(),
            FamilyKind::Normal => self.scale,
        }
    }

    #[inline]
    fn z(&self, x: f64) -> f64 {
        (x - self.location) / self.scale
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(self.density(finite("x", x)?))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.prob_below(finite("x", x)?))
    }

    /// Survival function `1 - F(x)`, computed without cancellation.
    pub fn sf(&self, x: f64) -> Result<f64> {
        Ok(self.prob_above(finite("x", x)?))
    }

    /// Inverse Mills ratio `(1 - F(x)) / f(x)`.
    pub fn mills(&self, x: f64) -> Result<f64> {
        let x = finite("x", x)?;
        if self.z(x) < -TAIL_CLAMP {
            return Err(Error::MillsUnderflow { x });
        }
        Ok(self.mills_raw(x))
    }

    /// Derivative of the inverse Mills ratio with respect to `x` (always negative).
    pub fn mills_slope(&self, x: f64) -> Result<f64> {
        let x = finite("x", x)?;
        if self.z(x) < -TAIL_CLAMP {
            return Err(Error::MillsUnderflow { x });
        }
        Ok(self.mills_slope_raw(x))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("p", format!("quantile needs 0 < p < 1, got {p}")));
        }
        Ok(self.quantile_raw(p))
    }

    /// Inverse of the survival function; accurate deep in the upper tail.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("q", format!("upper quantile needs 0 < q < 1, got {q}")));
        }
        Ok(match self.kind {
            FamilyKind::Logistic => self.location + self.scale * ((1.0 - q) / q).ln(),
            FamilyKind::Normal => self.location + self.scale * std_normal_quantile(q),
        })
    }

    #[inline]
    pub(crate) fn density(&self, x: f64) -> f64 {
        let z = self.z(x);
        match self.kind {
            FamilyKind::Logistic => {
                let e = (-z.abs()).exp();
                e / (self.scale * (1.0 + e) * (1.0 + e))
            }
            FamilyKind::Normal => FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / self.scale,
        }
    }

    #[inline]
    pub(crate) fn prob_below(&self, x: f64) -> f64 {
        let z = self.z(x);
        if z <= -TAIL_CLAMP {
            return 0.0;
        }
        if z >= TAIL_CLAMP {
            return 1.0;
        }
        std_cdf(self.kind, z)
    }

    #[inline]
    pub(crate) fn prob_above(&self, x: f64) -> f64 {
        let z = self.z(x);
        if z <= -TAIL_CLAMP {
            return 1.0;
        }
        if z >= TAIL_CLAMP {
            return 0.0;
        }
        std_cdf(self.kind, -z)
    }

    /// `F(b) - F(a)`, taken from whichever tail keeps precision.
    #[inline]
    pub(crate) fn mass_between(&self, a: f64, b: f64) -> f64 {
        if a >= self.location {
            self.prob_above(a) - self.prob_above(b)
        } else {
            self.prob_below(b) - self.prob_below(a)
        }
    }

    #[inline]
    pub(crate) fn mills_raw(&self, x: f64) -> f64 {
        let z = self.z(x);
        match self.kind {
            FamilyKind::Logistic => self.scale * (1.0 + (-z).exp()),
            FamilyKind::Normal => self.scale * std_normal_mills(z),
        }
    }

    #[inline]
    pub(crate) fn mills_slope_raw(&self, x: f64) -> f64 {
        let z = self.z(x);
        match self.kind {
            FamilyKind::Logistic => -(-z).exp(),
            FamilyKind::Normal => z * std_normal_mills(z) - 1.0,
        }
    }

    #[inline]
    pub(crate) fn quantile_raw(&self, p: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => self.location + self.scale * (p / (1.0 - p)).ln(),
            FamilyKind::Normal => self.location - self.scale * std_normal_quantile(p),
        }
    }
}

#[inline]
fn std_cdf(kind: FamilyKind, z: f64) -> f64 {
    match kind {
        FamilyKind::Logistic => {
            if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            }
        }
        FamilyKind::Normal => 0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2),
    }
}

/// `(1 - Phi(z)) / phi(z)` for the standard normal.
fn std_normal_mills(z: f64) -> f64 {
    if z < 8.0 {
        let tail = 0.5 * libm::erfc(z * std::f64::consts::FRAC_1_SQRT_2);
        tail / (FRAC_1_SQRT_2PI * (-0.5 * z * z).exp())
    } else {
        // Laplace continued fraction, evaluated bottom-up.
        let mut acc = z;
        for k in (1..=60).rev() {
            acc = z + k as f64 / acc;
        }
        1.0 / acc
    }
}

/// Upper-tail standard normal quantile: returns `z` with `1 - Phi(z) = q`.
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed by
/// one Halley step against `erfc`, which brings it to near machine precision.
fn std_normal_quantile(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    // Lower-tail quantile of p = q's complement, written via symmetry so that
    // small q (deep upper tail) never goes through 1 - q.
    let lower = |p: f64| -> f64 {
        if p < P_LOW {
            let t = (-2.0 * p.ln()).sqrt();
            (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
                / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
        } else {
            let t = p - 0.5;
            let r = t * t;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * t
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        }
    };
    // z_upper(q) = -z_lower(q)
    let mut z = if q <= 0.5 { -lower(q) } else { lower(1.0 - q) };
    let err = 0.5 * libm::erfc(z * std::f64::consts::FRAC_1_SQRT_2) - q;
    let dens = FRAC_1_SQRT_2PI * (-0.5 * z * z).exp();
    if dens > 0.0 {
        // Newton on tail(z) - q, with Halley's curvature correction.
        let u = err / -dens;
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}
