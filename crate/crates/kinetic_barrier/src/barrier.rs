//! Comparison functions `g(t, v) = N(t)·min(1, |v|^{-q}) + corrector`.

use crate::error::{Error, Result};

/// Time profile of the amplitude `N(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    Constant(f64),
    /// `n0 · t^{-beta}`
    Power { n0: f64, beta: f64 },
    /// `n0 · (1 + t^{-beta})`, the profile of the L∞ bound
    ShiftedPower { n0: f64, beta: f64 },
}

impl Amplitude {
    pub fn value(&self, t: f64) -> Result<f64> {
        match *self {
            Amplitude::Constant(n0) => Ok(n0),
            Amplitude::Power { n0, beta } => {
                check_time(t)?;
                Ok(n0 * t.powf(-beta))
            }
            Amplitude::ShiftedPower { n0, beta } => {
                check_time(t)?;
                Ok(n0 * (1.0 + t.powf(-beta)))
            }
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        match *self {
            Amplitude::Constant(_) => Ok(0.0),
            Amplitude::Power { n0, beta } | Amplitude::ShiftedPower { n0, beta } => {
                check_time(t)?;
                Ok(-beta * n0 * t.powf(-beta - 1.0))
            }
        }
    }
}

/// Time profile of the corrector amplitude `ε(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSchedule {
    Constant(f64),
    /// `eps0 · exp(rate · t)`
    Exponential { eps0: f64, rate: f64 },
    /// `eps0 · t^{-beta0}`
    Power { eps0: f64, beta0: f64 },
}

impl EpsSchedule {
    pub fn value(&self, t: f64) -> Result<f64> {
        match *self {
            EpsSchedule::Constant(e) => Ok(e),
            EpsSchedule::Exponential { eps0, rate } => Ok(eps0 * (rate * t).exp()),
            EpsSchedule::Power { eps0, beta0 } => {
                check_time(t)?;
                Ok(eps0 * t.powf(-beta0))
            }
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        match *self {
            EpsSchedule::Constant(_) => Ok(0.0),
            EpsSchedule::Exponential { eps0, rate } => Ok(rate * eps0 * (rate * t).exp()),
            EpsSchedule::Power { eps0, beta0 } => {
                check_time(t)?;
                Ok(-beta0 * eps0 * t.powf(-beta0 - 1.0))
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::SingularTime(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierForm {
    Plain,
    /// `+ ε(t)`
    ConstCorrector,
    /// `+ ε(t)·min(1, |v|^{-(d+1)+η})`
    PowerCorrector { d: usize, eta: f64 },
    /// `+ ε(t)·min(1, |v|^{-q0})`
    Q0Corrector { q0: f64 },
}

impl BarrierForm {
    pub fn name(&self) -> &'static str {
        match self {
            BarrierForm::Plain => "plain",
            BarrierForm::ConstCorrector => "const_corrector",
            BarrierForm::PowerCorrector { .. } => "power_corrector",
            BarrierForm::Q0Corrector { .. } => "q0_corrector",
        }
    }

    /// Decay exponent of the corrector profile (`None` for no corrector).
    fn corrector_exponent(&self) -> Option<f64> {
        match *self {
            BarrierForm::Plain => None,
            BarrierForm::ConstCorrector => Some(0.0),
            BarrierForm::PowerCorrector { d, eta } => Some(d as f64 + 1.0 - eta),
            BarrierForm::Q0Corrector { q0 } => Some(q0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    pub form: BarrierForm,
    pub amplitude: Amplitude,
    pub q: f64,
    pub eps: EpsSchedule,
}

/// `min(1, r^{-p})` for `p ≥ 0`.
#[inline]
pub fn clamped_power(r: f64, p: f64) -> f64 {
    if r <= 1.0 || p == 0.0 {
        1.0
    } else {
        r.powf(-p)
    }
}

impl Barrier {
    pub fn plain(amplitude: Amplitude, q: f64) -> Self {
        Barrier {
            form: BarrierForm::Plain,
            amplitude,
            q,
            eps: EpsSchedule::Constant(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0) {
            return Err(Error::OutOfRange {
                field: "barrier.q",
                detail: format!("decay exponent must be nonnegative, got {}", self.q),
            });
        }
        let n0 = match self.amplitude {
            Amplitude::Constant(n) => n,
            Amplitude::Power { n0, .. } | Amplitude::ShiftedPower { n0, .. } => n0,
        };
        if !(n0 > 0.0) {
            return Err(Error::OutOfRange {
                field: "barrier.n0",
                detail: format!("amplitude must be positive, got {n0}"),
            });
        }
        if let Some(p) = self.form.corrector_exponent() {
            if p < 0.0 {
                return Err(Error::OutOfRange {
                    field: "barrier.corrector",
                    detail: format!("corrector must be nonincreasing, exponent {p}"),
                });
            }
        }
        if let BarrierForm::PowerCorrector { eta, .. } = self.form {
            if !(eta > 0.0) {
                return Err(Error::OutOfRange {
                    field: "barrier.eta",
                    detail: format!("eta must be positive, got {eta}"),
                });
            }
        }
        Ok(())
    }

    /// `g(t, v)` as a function of the speed `|v|`.
    pub fn value(&self, t: f64, speed: f64) -> Result<f64> {
        let n = self.amplitude.value(t)?;
        let mut g = n * clamped_power(speed, self.q);
        if let Some(p) = self.form.corrector_exponent() {
            g += self.eps.value(t)? * clamped_power(speed, p);
        }
        Ok(g)
    }

    /// `∂_t g(t, v)`.
    pub fn time_derivative(&self, t: f64, speed: f64) -> Result<f64> {
        let dn = self.amplitude.derivative(t)?;
        let mut dg = dn * clamped_power(speed, self.q);
        if let Some(p) = self.form.corrector_exponent() {
            dg += self.eps.derivative(t)? * clamped_power(speed, p);
        }
        Ok(dg)
    }

    /// The barrier frozen at time `t`, as a function of velocity.
    pub fn at_time(&self, t: f64) -> Result<FrozenBarrier> {
        Ok(FrozenBarrier {
            n: self.amplitude.value(t)?,
            q: self.q,
            eps: if self.form.corrector_exponent().is_some() {
                self.eps.value(t)?
            } else {
                0.0
            },
            corrector_exponent: self.form.corrector_exponent().unwrap_or(0.0),
        })
    }
}

/// `v ↦ n·min(1,|v|^{-q}) + eps·min(1,|v|^{-p})`, the barrier at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenBarrier {
    pub n: f64,
    pub q: f64,
    pub eps: f64,
    pub corrector_exponent: f64,
}

impl FrozenBarrier {
    pub fn plain(n: f64, q: f64) -> Self {
        FrozenBarrier { n, q, eps: 0.0, corrector_exponent: 0.0 }
    }

    #[inline]
    pub fn at_speed(&self, r: f64) -> f64 {
        let mut g = self.n * clamped_power(r, self.q);
        if self.eps != 0.0 {
            g += self.eps * clamped_power(r, self.corrector_exponent);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_corrected_examples() {
        let b = Barrier::plain(Amplitude::Constant(1.0), 5.0);
        assert_eq!(b.value(1.0, 2.0).unwrap(), 1.0 / 32.0);
        assert_eq!(b.value(1.0, 0.5).unwrap(), 1.0);
        let c = Barrier {
            form: BarrierForm::ConstCorrector,
            eps: EpsSchedule::Constant(0.1),
            ..b
        };
        assert!((c.value(1.0, 2.0).unwrap() - 0.13125).abs() < 1e-15);
    }

    #[test]
    fn singular_schedule_rejects_zero_time() {
        let b = Barrier::plain(Amplitude::Power { n0: 1.0, beta: 2.0 }, 1.0);
        assert_eq!(b.value(0.0, 1.0), Err(Error::SingularTime(0.0)));
        let c = Barrier::plain(Amplitude::Constant(1.0), 1.0);
        assert!(c.value(0.0, 1.0).is_ok());
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let b = Barrier {
            form: BarrierForm::Q0Corrector { q0: 2.0 },
            amplitude: Amplitude::ShiftedPower { n0: 2.0, beta: 10.0 / 3.0 },
            q: 3.0,
            eps: EpsSchedule::Exponential { eps0: 0.01, rate: 1.5 },
        };
        let (t, r, dt) = (0.7, 3.0, 1e-6);
        let fd = (b.value(t + dt, r).unwrap() - b.value(t - dt, r).unwrap()) / (2.0 * dt);
        let an = b.time_derivative(t, r).unwrap();
        assert!((fd - an).abs() < 1e-6 * an.abs(), "{fd} vs {an}");
    }
}
