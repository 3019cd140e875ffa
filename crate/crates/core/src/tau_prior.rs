//! Mixed discrete/continuous prior of the change point.
//!
//! Mass 1/3 sits on the first PSA time, mass 1/3 on the last PSA time, and
//! the remaining 1/3 is spread uniformly between the second and the
//! second-to-last PSA times.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::patient::{PatientRecord, MIN_PSA_OBS};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSupport<T> {
    pub t_first: T,
    pub ramp_lo: T,
    pub ramp_hi: T,
    pub t_last: T,
}

/// Which piece of the support a change-point value sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauRegion {
    FirstAtom,
    Ramp,
    LastAtom,
    Outside,
}

impl<T: Real> TauSupport<T> {
    pub fn new(t_first: T, ramp_lo: T, ramp_hi: T, t_last: T) -> Result<Self> {
        if !(t_first < ramp_lo && ramp_lo < ramp_hi && ramp_hi < t_last) {
            return Err(ModelError::InvalidParams(format!(
                "tau support must satisfy t_first < ramp_lo < ramp_hi < t_last, got {t_first:?} {ramp_lo:?} {ramp_hi:?} {t_last:?}"
            )));
        }
        Ok(Self { t_first, ramp_lo, ramp_hi, t_last })
    }

    /// Support built from a patient's (sorted) PSA times.
    pub fn from_patient(p: &PatientRecord<T>) -> Result<Self> {
        let ts = &p.psa_obs;
        if ts.len() < MIN_PSA_OBS {
            return Err(ModelError::InvalidPatient {
                id: p.id.clone(),
                reason: format!("needs at least {MIN_PSA_OBS} PSA observations for the change-point prior"),
            });
        }
        let n = ts.len();
        Self::new(ts[0].t, ts[1].t, ts[n - 2].t, ts[n - 1].t)
    }

    pub fn ramp_width(&self) -> T {
        self.ramp_hi - self.ramp_lo
    }

    pub fn ramp_mid(&self) -> T {
        (self.ramp_lo + self.ramp_hi) / T::lit(2.0)
    }

    pub fn region(&self, tau: T) -> TauRegion {
        if tau == self.t_first {
            TauRegion::FirstAtom
        } else if tau == self.t_last {
            TauRegion::LastAtom
        } else if tau >= self.ramp_lo && tau <= self.ramp_hi {
            TauRegion::Ramp
        } else {
            TauRegion::Outside
        }
    }

    /// `P(τ ≤ x)`; right-continuous with jumps at both atoms.
    pub fn cdf(&self, x: T) -> T {
        let third = T::one() / T::lit(3.0);
        if x < self.t_first {
            T::zero()
        } else if x < self.ramp_lo {
            third
        } else if x < self.ramp_hi {
            third + third * (x - self.ramp_lo) / self.ramp_width()
        } else if x < self.t_last {
            third + third
        } else {
            T::one()
        }
    }

    /// Log mass at the atoms, log density on the ramp, `-inf` elsewhere.
    pub fn logmass(&self, tau: T) -> T {
        let ln_third = -T::lit(3.0).ln();
        match self.region(tau) {
            TauRegion::FirstAtom | TauRegion::LastAtom => ln_third,
            TauRegion::Ramp => ln_third - self.ramp_width().ln(),
            TauRegion::Outside => T::neg_infinity(),
        }
    }

    /// Maps a uniform `u ∈ [0, 1)` to a prior draw (inverse CDF).
    pub fn quantile(&self, u: T) -> T {
        let third = T::one() / T::lit(3.0);
        if u < third {
            self.t_first
        } else if u < third + third {
            let frac = (u - third) / third;
            (self.ramp_lo + frac * self.ramp_width()).min(self.ramp_hi)
        } else {
            self.t_last
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn supp() -> TauSupport<f64> {
        TauSupport::new(1.0, 3.0, 7.0, 9.0).unwrap()
    }

    #[test]
    fn cdf_branches() {
        let s = supp();
        assert_eq!(s.cdf(1.0 - 1e-9), 0.0);
        assert_eq!(s.cdf(1.0), 1.0 / 3.0);
        assert_eq!(s.cdf(2.9), 1.0 / 3.0);
        assert!((s.cdf(5.0) - 0.5).abs() < 1e-15);
        assert_eq!(s.cdf(7.0), 2.0 / 3.0);
        assert_eq!(s.cdf(8.99), 2.0 / 3.0);
        assert_eq!(s.cdf(9.0), 1.0);
    }

    #[test]
    fn masses_sum_to_one() {
        let s = supp();
        let atoms = 2.0 * s.logmass(1.0).exp();
        let ramp = s.logmass(5.0).exp() * s.ramp_width();
        assert!((atoms + ramp - 1.0).abs() < 1e-12);
        assert_eq!(s.logmass(2.0), f64::NEG_INFINITY);
        assert_eq!(s.logmass(10.0), f64::NEG_INFINITY);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let s = supp();
        assert_eq!(s.quantile(0.1), 1.0);
        assert_eq!(s.quantile(0.9), 9.0);
        assert!((s.quantile(0.5) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_support() {
        assert!(TauSupport::new(1.0, 3.0, 3.0, 9.0).is_err());
        assert!(TauSupport::new(3.0, 3.0, 7.0, 9.0).is_err());
    }
}
