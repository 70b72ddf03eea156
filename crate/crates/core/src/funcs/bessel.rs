use std::f64::consts::PI;

use crate::error::{Error, Result};

// Lanczos approximation, g = 7, n = 9
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function; reflection handles `x < 1/2`.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Modified Bessel function of the first kind `I_nu(y)` by its power
/// series, for `nu >= 0` and `y >= 0`.
pub fn bessel_i(nu: f64, y: f64) -> Result<f64> {
    for (coordinate, value) in [(0, nu), (1, y)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::Domain {
                function: "bessel_i",
                coordinate,
                value,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
    }
    if y == 0.0 {
        return Ok(if nu == 0.0 { 1.0 } else { 0.0 });
    }
    let half = 0.5 * y;
    let q = half * half;
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for k in 1..1000 {
        let k = k as f64;
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-16 * sum {
            return Ok(sum);
        }
    }
    Err(Error::ConvergenceFailure("bessel_i series"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_integers_and_half() {
        let mut fact = 1.0;
        for n in 1..15 {
            assert!((gamma(n as f64) - fact).abs() <= 1e-13 * fact, "n={n}");
            fact *= n as f64;
        }
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
        for nu in [0.5, 1.0, 4.2] {
            assert_eq!(bessel_i(nu, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn half_order_closed_form() {
        // I_{1/2}(y) = sqrt(2 / (pi y)) sinh y
        for y in [0.1, 1.0, 2.5, 5.0] {
            let exact = (2.0 / (PI * y)).sqrt() * y.sinh();
            assert!((bessel_i(0.5, y).unwrap() - exact).abs() < 1e-13 * exact);
        }
    }

    #[test]
    fn negative_arguments_are_rejected() {
        assert!(bessel_i(-1.0, 1.0).is_err());
        assert!(bessel_i(1.0, -1.0).is_err());
    }
}
