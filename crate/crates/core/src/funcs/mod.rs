//! Ground-truth targets: elementary benchmark functions and the special
//! functions used for the efficiency-frontier experiments.

mod bessel;
mod elliptic;
mod quadrature;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bessel::{bessel_i, gamma};
pub use elliptic::{ellip_e, ellip_f, ellip_k, jacobi_sn, jacobi_sncndn, JacobiElliptic};
pub use quadrature::{gauss_legendre, integrate_adaptive};

/// Offset in the bilinear ratio denominator.
pub const BILINEAR_EPS: f64 = 1e-3;
/// Samplers keep `|x_3| >= BILINEAR_EXCLUSION` for the bilinear ratio.
pub const BILINEAR_EXCLUSION: f64 = 0.1;
/// Magnitude floor for the inner denominators of the nested rational.
pub const NESTED_GUARD: f64 = 1e-6;
/// Upper parameter bound used when sampling the incomplete elliptic integrals.
pub const ELLIPTIC_M_CAP: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetId {
    BilinearRatio,
    Runge,
    RationalInteraction,
    NestedRational,
    ExpSin3pi,
    HighfreqGauss,
    ExpSum3,
    Ratio3,
    JacobiSn,
    EllipF,
    EllipE,
    BesselI,
}

impl TargetId {
    pub const ALL: [TargetId; 12] = [
        TargetId::BilinearRatio,
        TargetId::Runge,
        TargetId::RationalInteraction,
        TargetId::NestedRational,
        TargetId::ExpSin3pi,
        TargetId::HighfreqGauss,
        TargetId::ExpSum3,
        TargetId::Ratio3,
        TargetId::JacobiSn,
        TargetId::EllipF,
        TargetId::EllipE,
        TargetId::BesselI,
    ];

    /// The four functions of the lead-metric grid.
    pub const LEAD_SET: [TargetId; 4] = [
        TargetId::BilinearRatio,
        TargetId::Runge,
        TargetId::RationalInteraction,
        TargetId::NestedRational,
    ];

    /// The special functions of the efficiency-frontier experiments.
    pub const SPECIAL_SET: [TargetId; 4] = [
        TargetId::JacobiSn,
        TargetId::EllipF,
        TargetId::EllipE,
        TargetId::BesselI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetId::BilinearRatio => "bilinear_ratio",
            TargetId::Runge => "runge",
            TargetId::RationalInteraction => "rational_interaction",
            TargetId::NestedRational => "nested_rational",
            TargetId::ExpSin3pi => "exp_sin3pi",
            TargetId::HighfreqGauss => "highfreq_gauss",
            TargetId::ExpSum3 => "exp_sum3",
            TargetId::Ratio3 => "ratio3",
            TargetId::JacobiSn => "jacobi_sn",
            TargetId::EllipF => "ellip_f",
            TargetId::EllipE => "ellip_e",
            TargetId::BesselI => "bessel_i",
        }
    }

    pub fn target(self) -> TargetFunction {
        TargetFunction::new(self)
    }
}

impl std::fmt::Display for TargetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TargetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TargetId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown target {s:?}")))
    }
}

/// A target with its sampling domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFunction {
    pub id: TargetId,
    /// Closed interval per input coordinate.
    pub domain: Vec<(f64, f64)>,
    /// Open band `(coordinate, half_width)` around zero excluded from the domain.
    pub exclusion: Option<(usize, f64)>,
    pub epsilon_sing: f64,
}

impl TargetFunction {
    pub fn new(id: TargetId) -> Self {
        let cube = |lo: f64, hi: f64, d: usize| vec![(lo, hi); d];
        let (domain, exclusion, epsilon_sing) = match id {
            TargetId::BilinearRatio => (
                cube(-1.0, 1.0, 3),
                Some((2, BILINEAR_EXCLUSION)),
                BILINEAR_EPS,
            ),
            TargetId::Runge => (cube(-1.0, 1.0, 1), None, 0.0),
            TargetId::RationalInteraction => (cube(-1.0, 1.0, 3), None, 0.0),
            TargetId::NestedRational => (cube(0.5, 2.0, 3), None, NESTED_GUARD),
            TargetId::ExpSin3pi | TargetId::HighfreqGauss => (cube(-2.0, 2.0, 1), None, 0.0),
            TargetId::ExpSum3 => (cube(-1.0, 1.0, 3), None, 0.0),
            TargetId::Ratio3 => (vec![(-2.0, 2.0), (0.5, 2.0), (1.0, 3.0)], None, 0.0),
            TargetId::JacobiSn => (vec![(-5.0, 5.0), (0.0, 1.0)], None, 0.0),
            TargetId::EllipF | TargetId::EllipE => {
                (vec![(0.0, 2.0 * PI), (0.0, ELLIPTIC_M_CAP)], None, 0.0)
            }
            TargetId::BesselI => (vec![(0.0, 5.0), (0.0, 5.0)], None, 0.0),
        };
        TargetFunction {
            id,
            domain,
            exclusion,
            epsilon_sing,
        }
    }

    pub fn arity(&self) -> usize {
        self.domain.len()
    }

    /// Checks `x` against the domain and the exclusion band.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arity() {
            return Err(Error::Shape(format!(
                "{} takes {} inputs, got {}",
                self.id,
                self.arity(),
                x.len()
            )));
        }
        for (j, (&v, &(lo, hi))) in x.iter().zip(&self.domain).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(Error::Domain {
                    function: self.id.name(),
                    coordinate: j,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        if let Some((j, w)) = self.exclusion {
            if x[j].abs() < w {
                return Err(Error::Excluded {
                    function: self.id.name(),
                    coordinate: j,
                    value: x[j],
                    half_width: w,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let guard = |v: f64| {
            if v >= 0.0 {
                v.max(NESTED_GUARD)
            } else {
                v.min(-NESTED_GUARD)
            }
        };
        let y = match self.id {
            TargetId::BilinearRatio => x[0] * x[1] / (x[2] + self.epsilon_sing),
            TargetId::Runge => runge(x[0]),
            TargetId::RationalInteraction => (x[0] + x[1]) / (1.0 + x[2] * x[2]),
            TargetId::NestedRational => x[0] + 1.0 / guard(x[1] + 1.0 / guard(x[2])),
            TargetId::ExpSin3pi => x[0].exp() * (3.0 * PI * x[0]).sin(),
            TargetId::HighfreqGauss => (10.0 * PI * x[0]).sin() * (-x[0] * x[0] / 10.0).exp(),
            TargetId::ExpSum3 => (x[0] + x[1] + x[2]).exp(),
            TargetId::Ratio3 => x[0] * x[1] / x[2],
            TargetId::JacobiSn => jacobi_sn(x[0], x[1])?,
            TargetId::EllipF => ellip_f(x[0], x[1])?,
            TargetId::EllipE => ellip_e(x[0], x[1])?,
            TargetId::BesselI => bessel_i(x[0], x[1])?,
        };
        Ok(y)
    }

    /// Evaluates without the domain check; for slices that extend a
    /// function past its sampling box.
    pub fn eval_unchecked(&self, x: &[f64]) -> Result<f64> {
        let mut wide = self.clone();
        wide.domain = vec![(f64::NEG_INFINITY, f64::INFINITY); self.arity()];
        wide.exclusion = None;
        wide.eval(x)
    }
}

pub fn runge(x: f64) -> f64 {
    1.0 / (1.0 + 25.0 * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(id: TargetId, x: &[f64]) -> f64 {
        id.target().eval(x).unwrap()
    }

    #[test]
    fn elementary_values() {
        assert_eq!(eval(TargetId::Runge, &[0.0]), 1.0);
        assert!((eval(TargetId::Runge, &[0.2]) - 0.5).abs() < 1e-15);
        assert_eq!(eval(TargetId::NestedRational, &[1.0, 1.0, 1.0]), 1.5);
        assert_eq!(eval(TargetId::RationalInteraction, &[0.5, 0.5, 1.0]), 0.5);
        assert_eq!(eval(TargetId::Ratio3, &[2.0, 1.5, 3.0]), 1.0);
        assert!((eval(TargetId::BilinearRatio, &[1.0, 1.0, 0.5]) - 1.0 / 0.501).abs() < 1e-15);
        assert_eq!(eval(TargetId::ExpSum3, &[0.0, 0.0, 0.0]), 1.0);
        assert!(eval(TargetId::ExpSin3pi, &[0.0]).abs() < 1e-15);
    }

    #[test]
    fn domain_and_exclusion_are_enforced() {
        let runge = TargetId::Runge.target();
        assert!(matches!(
            runge.eval(&[1.5]),
            Err(Error::Domain { coordinate: 0, .. })
        ));
        assert!(matches!(runge.eval(&[0.1, 0.2]), Err(Error::Shape(_))));
        let bil = TargetId::BilinearRatio.target();
        assert!(matches!(
            bil.eval(&[0.5, 0.5, 0.05]),
            Err(Error::Excluded { coordinate: 2, .. })
        ));
        assert!(bil.eval(&[0.5, 0.5, -0.1]).is_ok());
    }

    #[test]
    fn every_target_is_finite_on_its_domain_corners() {
        for id in TargetId::ALL {
            let t = id.target();
            let d = t.arity();
            for mask in 0..(1u32 << d) {
                let x: Vec<f64> = (0..d)
                    .map(|j| {
                        let (lo, hi) = t.domain[j];
                        if mask >> j & 1 == 1 {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect();
                if t.check(&x).is_ok() {
                    assert!(t.eval(&x).unwrap().is_finite(), "{id} at {x:?}");
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for id in TargetId::ALL {
            assert_eq!(id.name().parse::<TargetId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.name()));
        }
    }
}
