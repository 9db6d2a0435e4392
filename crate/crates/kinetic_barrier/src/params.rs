//! Physical configuration of the collision kernel and the splitting radii.

use crate::error::{Error, Result};

/// The bounded angular modulation multiplying the singular angular profile.
///
/// It is a function of `cos θ` on `[-1, 1]`. The default is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularModulation {
    Constant(f64),
    /// `c0 + c1 * cos θ`
    Affine { c0: f64, c1: f64 },
}

impl Default for AngularModulation {
    fn default() -> Self {
        AngularModulation::Constant(1.0)
    }
}

impl AngularModulation {
    #[inline]
    pub fn eval(&self, cos_theta: f64) -> f64 {
        match *self {
            AngularModulation::Constant(c) => c,
            AngularModulation::Affine { c0, c1 } => c0 + c1 * cos_theta,
        }
    }

    /// Exact infimum and supremum over `cos θ ∈ [-1, 1]`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            AngularModulation::Constant(c) => (c, c),
            AngularModulation::Affine { c0, c1 } => {
                let a = c0 - c1;
                let b = c0 + c1;
                (a.min(b), a.max(b))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub d: usize,
    pub gamma: f64,
    pub s: f64,
    /// Declared lower bound of the modulation.
    pub btilde_lo: f64,
    /// Declared upper bound of the modulation.
    pub btilde_hi: f64,
    pub btilde: AngularModulation,
}

impl KernelParams {
    /// Parameters with the default constant modulation 1 and bounds `[1, 1]`.
    pub fn new(d: usize, gamma: f64, s: f64) -> Self {
        KernelParams {
            d,
            gamma,
            s,
            btilde_lo: 1.0,
            btilde_hi: 1.0,
            btilde: AngularModulation::default(),
        }
    }

    /// True iff `γ + 2s ∈ [0, 2]`.
    pub fn moderately_soft(&self) -> bool {
        let x = self.gamma + 2.0 * self.s;
        (0.0..=2.0).contains(&x)
    }

    /// Fails unless the dimension has an evaluation path (2 or 3).
    pub fn require_eval_dim(&self) -> Result<()> {
        if self.d == 2 || self.d == 3 {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                field: "d",
                detail: format!("evaluation paths exist for d in {{2,3}}, got {}", self.d),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Hard,
    Maxwellian,
    ModeratelySoft,
    VerySoft,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Hard => "hard",
            Regime::Maxwellian => "maxwellian",
            Regime::ModeratelySoft => "moderately_soft",
            Regime::VerySoft => "very_soft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedParams {
    pub params: KernelParams,
    pub regime: Regime,
    pub moderately_soft: bool,
}

pub fn validate_params(p: &KernelParams) -> Result<ValidatedParams> {
    if p.d < 2 {
        return Err(Error::OutOfRange {
            field: "d",
            detail: format!("dimension must be at least 2, got {}", p.d),
        });
    }
    let d = p.d as f64;
    if !(p.gamma > -d && p.gamma <= 2.0) || !p.gamma.is_finite() {
        return Err(Error::OutOfRange {
            field: "gamma",
            detail: format!("gamma must lie in (-{d}, 2], got {}", p.gamma),
        });
    }
    if !(p.s > 0.0 && p.s < 1.0) {
        return Err(Error::OutOfRange {
            field: "s",
            detail: format!("s must lie in (0, 1), got {}", p.s),
        });
    }
    if !(p.btilde_lo > 0.0 && p.btilde_lo <= p.btilde_hi) {
        return Err(Error::OutOfRange {
            field: "btilde_lo",
            detail: format!(
                "need 0 < btilde_lo <= btilde_hi, got [{}, {}]",
                p.btilde_lo, p.btilde_hi
            ),
        });
    }
    let (lo, hi) = p.btilde.range();
    if lo < p.btilde_lo || hi > p.btilde_hi {
        return Err(Error::OutOfRange {
            field: "btilde",
            detail: format!(
                "modulation range [{lo}, {hi}] escapes declared bounds [{}, {}]",
                p.btilde_lo, p.btilde_hi
            ),
        });
    }
    let regime = if p.gamma > 0.0 {
        Regime::Hard
    } else if p.gamma == 0.0 {
        Regime::Maxwellian
    } else if p.gamma + 2.0 * p.s >= 0.0 {
        Regime::ModeratelySoft
    } else {
        Regime::VerySoft
    };
    Ok(ValidatedParams {
        params: *p,
        regime,
        moderately_soft: p.moderately_soft(),
    })
}

/// The three radii fractions used to carve the good and bad collision sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingConstants {
    /// Radius fraction of the good ball for the outer variable.
    pub c1: f64,
    /// Auxiliary fraction used in the inner-integral estimate.
    pub c2: f64,
    /// Radius fraction separating the two far bad regions.
    pub c3: f64,
}

/// `q ↦ 1/(20 q)`, extended to `q = 0` by `+∞` (the good ball is everything).
pub fn c1_raw(q: f64) -> f64 {
    if q <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (20.0 * q)
    }
}

pub fn c2_raw(q: f64) -> f64 {
    (1.0 + q).powf(-0.5) / 20.0
}

pub fn c3_raw(q: f64) -> f64 {
    0.5 / (1.0 + q)
}

pub fn splitting_constants(q: f64) -> Result<SplittingConstants> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!(
            "splitting constants are defined for q >= 1, got {q}"
        )));
    }
    Ok(SplittingConstants {
        c1: c1_raw(q),
        c2: c2_raw(q),
        c3: c3_raw(q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_from_examples() {
        let v = validate_params(&KernelParams::new(3, 0.0, 0.25)).unwrap();
        assert_eq!(v.regime, Regime::Maxwellian);
        let v = validate_params(&KernelParams::new(3, 1.0, 0.2)).unwrap();
        assert_eq!(v.regime, Regime::Hard);
        let e = validate_params(&KernelParams::new(3, -3.5, 0.5)).unwrap_err();
        assert!(matches!(e, Error::OutOfRange { field: "gamma", .. }));
        let v = validate_params(&KernelParams::new(3, -0.5, 0.4)).unwrap();
        assert_eq!(v.regime, Regime::ModeratelySoft);
        assert!(v.moderately_soft);
        let v = validate_params(&KernelParams::new(3, -2.0, 0.4)).unwrap();
        assert_eq!(v.regime, Regime::VerySoft);
        assert!(!v.moderately_soft);
    }

    #[test]
    fn rejects_bad_s_and_gamma_edges() {
        assert!(validate_params(&KernelParams::new(2, 0.0, 0.0)).is_err());
        assert!(validate_params(&KernelParams::new(2, 0.0, 1.0)).is_err());
        assert!(validate_params(&KernelParams::new(2, -2.0, 0.5)).is_err());
        assert!(validate_params(&KernelParams::new(2, 2.0, 0.5)).is_ok());
        assert!(validate_params(&KernelParams::new(2, 2.01, 0.5)).is_err());
    }

    #[test]
    fn modulation_must_respect_bounds() {
        let mut p = KernelParams::new(2, 0.0, 0.3);
        p.btilde = AngularModulation::Affine { c0: 1.0, c1: 0.5 };
        assert!(matches!(
            validate_params(&p),
            Err(Error::OutOfRange { field: "btilde", .. })
        ));
        p.btilde_lo = 0.5;
        p.btilde_hi = 1.5;
        assert!(validate_params(&p).is_ok());
    }

    #[test]
    fn splitting_constant_examples() {
        assert!((splitting_constants(5.0).unwrap().c1 - 0.01).abs() < 1e-15);
        assert!((splitting_constants(3.0).unwrap().c2 - 0.025).abs() < 1e-15);
        assert!((splitting_constants(1.0).unwrap().c3 - 0.25).abs() < 1e-15);
        assert!(matches!(splitting_constants(0.5), Err(Error::Domain(_))));
    }
}
