//! Jacobi elliptic functions and incomplete elliptic integrals.

use std::f64::consts::{FRAC_PI_2, PI};

use super::quadrature::integrate_adaptive;
use crate::error::{Error, Result};

const MAX_AGM_STEPS: usize = 64;
const QUAD_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiElliptic {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

fn check_m(function: &'static str, m: f64, hi_open: bool) -> Result<()> {
    let ok = m >= 0.0 && if hi_open { m < 1.0 } else { m <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            coordinate: 1,
            value: m,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// `sn`, `cn` and `dn` of `u` with parameter `m` from one descending
/// Landen (AGM) ladder.
pub fn jacobi_sncndn(u: f64, m: f64) -> Result<JacobiElliptic> {
    check_m("jacobi_sn", m, false)?;
    if m == 1.0 {
        let sech = 1.0 / u.cosh();
        return Ok(JacobiElliptic {
            sn: u.tanh(),
            cn: sech,
            dn: sech,
        });
    }
    let mut a = [0.0; MAX_AGM_STEPS + 1];
    let mut c = [0.0; MAX_AGM_STEPS + 1];
    a[0] = 1.0;
    c[0] = m.sqrt();
    let mut b = (1.0 - m).sqrt();
    let mut n = 0;
    while c[n].abs() > f64::EPSILON * a[n] {
        if n == MAX_AGM_STEPS {
            return Err(Error::ConvergenceFailure("jacobi_sn AGM ladder"));
        }
        let an = a[n];
        a[n + 1] = 0.5 * (an + b);
        c[n + 1] = 0.5 * (an - b);
        b = (an * b).sqrt();
        n += 1;
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    let mut prev = phi;
    for k in (1..=n).rev() {
        prev = phi;
        phi = 0.5 * (phi + (c[k] / a[k] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = if n == 0 { 1.0 } else { cn / (prev - phi).cos() };
    Ok(JacobiElliptic { sn, cn, dn })
}

pub fn jacobi_sn(u: f64, m: f64) -> Result<f64> {
    jacobi_sncndn(u, m).map(|j| j.sn)
}

fn f_integrand(m: f64) -> impl Fn(f64) -> f64 + Copy {
    move |t: f64| {
        let s = t.sin();
        1.0 / (1.0 - m * s * s).sqrt()
    }
}

fn e_integrand(m: f64) -> impl Fn(f64) -> f64 + Copy {
    move |t: f64| {
        let s = t.sin();
        (1.0 - m * s * s).sqrt()
    }
}

/// Splits `phi = k * pi + r` with `|r| <= pi / 2`.
fn reduce(phi: f64) -> (f64, f64) {
    let k = (phi / PI).round();
    (k, phi - k * PI)
}

fn incomplete(integrand: impl Fn(f64) -> f64 + Copy, phi: f64) -> Result<f64> {
    if !phi.is_finite() {
        return Err(Error::Domain {
            function: "elliptic integral",
            coordinate: 0,
            value: phi,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    let (k, r) = reduce(phi);
    let partial = integrate_adaptive(integrand, 0.0, r.abs(), QUAD_TOL)?.copysign(r);
    if k == 0.0 {
        return Ok(partial);
    }
    let complete = integrate_adaptive(integrand, 0.0, FRAC_PI_2, QUAD_TOL)?;
    Ok(2.0 * k * complete + partial)
}

/// Incomplete integral of the first kind, `int_0^phi dt / sqrt(1 - m sin^2 t)`.
pub fn ellip_f(phi: f64, m: f64) -> Result<f64> {
    check_m("ellip_f", m, true)?;
    incomplete(f_integrand(m), phi)
}

/// Incomplete integral of the second kind, `int_0^phi sqrt(1 - m sin^2 t) dt`.
pub fn ellip_e(phi: f64, m: f64) -> Result<f64> {
    check_m("ellip_e", m, true)?;
    incomplete(e_integrand(m), phi)
}

/// Complete integral of the first kind by quadrature.
pub fn ellip_k(m: f64) -> Result<f64> {
    ellip_f(FRAC_PI_2, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sn_degenerate_moduli() {
        for u in [-4.0, -0.3, 0.0, 1.1, 5.0] {
            assert!((jacobi_sn(u, 0.0).unwrap() - u.sin()).abs() < 1e-15);
            assert_eq!(jacobi_sn(u, 1.0).unwrap(), u.tanh());
        }
        for m in [0.0, 0.3, 0.99, 1.0] {
            assert_eq!(jacobi_sn(0.0, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn sn_cn_dn_identities() {
        for i in 0..100 {
            for j in 0..10 {
                let u = -5.0 + 10.0 * i as f64 / 99.0;
                let m = j as f64 / 9.0;
                let e = jacobi_sncndn(u, m).unwrap();
                assert!(
                    (e.sn * e.sn + e.cn * e.cn - 1.0).abs() < 1e-9,
                    "u={u} m={m}"
                );
                assert!(
                    (m * e.sn * e.sn + e.dn * e.dn - 1.0).abs() < 1e-9,
                    "u={u} m={m}"
                );
            }
        }
    }

    #[test]
    fn sn_is_odd() {
        for &(u, m) in &[(0.7, 0.2), (3.3, 0.95), (4.9, 0.5)] {
            assert_eq!(jacobi_sn(-u, m).unwrap(), -jacobi_sn(u, m).unwrap());
        }
    }

    #[test]
    fn integrals_at_zero_parameter_and_angle() {
        for phi in [0.0, 0.4, 2.0, 6.0] {
            assert!((ellip_f(phi, 0.0).unwrap() - phi).abs() < 1e-13);
            assert!((ellip_e(phi, 0.0).unwrap() - phi).abs() < 1e-13);
        }
        for m in [0.0, 0.5, 0.99] {
            assert_eq!(ellip_f(0.0, m).unwrap(), 0.0);
            assert_eq!(ellip_e(0.0, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn second_kind_below_first_kind() {
        for i in 1..=20 {
            for j in 1..=9 {
                let phi = FRAC_PI_2 * i as f64 / 20.0;
                let m = j as f64 / 10.0;
                assert!(ellip_e(phi, m).unwrap() <= ellip_f(phi, m).unwrap());
            }
        }
    }

    #[test]
    fn quasi_periodicity() {
        let (m, phi) = (0.7, 0.9);
        let k = ellip_k(m).unwrap();
        let f = ellip_f(phi + PI, m).unwrap();
        assert!((f - (ellip_f(phi, m).unwrap() + 2.0 * k)).abs() < 1e-12);
    }

    #[test]
    fn parameter_outside_range_is_rejected() {
        assert!(ellip_f(1.0, 1.0).is_err());
        assert!(jacobi_sn(1.0, 1.5).is_err());
        assert!(ellip_e(1.0, -0.1).is_err());
    }
}
