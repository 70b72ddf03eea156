//! Secondary implementations used only to cross-check the library. None of
//! them call into `cfnn`; they share no code with the routines under test.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Golden-ratio low-discrepancy sequence in [0, 1).
pub fn weyl(i: usize, shift: f64) -> f64 {
    ((i as f64 + 1.0) * 0.618_033_988_749_894_9 + shift).fract()
}

/// Frozen 1000-point grids.
pub const GRID: usize = 1000;

pub fn sn_grid() -> Vec<(f64, f64)> {
    (0..GRID)
        .map(|i| {
            (
                -5.0 + 10.0 * weyl(i, 0.0),
                0.9999 * (i as f64 + 0.5) / GRID as f64,
            )
        })
        .collect()
}

pub fn elliptic_grid() -> Vec<(f64, f64)> {
    (0..GRID)
        .map(|i| {
            (
                2.0 * PI * weyl(i, 0.3),
                0.99 * (i as f64 + 0.5) / GRID as f64,
            )
        })
        .collect()
}

pub fn bessel_grid() -> Vec<(f64, f64)> {
    (0..GRID)
        .map(|i| {
            (
                5.0 * weyl(i, 0.7),
                0.05 + 4.95 * (i as f64 + 0.5) / GRID as f64,
            )
        })
        .collect()
}

/// Arithmetic-geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..100 {
        let (na, nb) = (0.5 * (a + b), (a * b).sqrt());
        (a, b) = (na, nb);
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
    }
    a
}

/// Complete elliptic integral of the first kind, `pi / (2 agm(1, sqrt(1-m)))`.
pub fn complete_k(m: f64) -> f64 {
    PI / (2.0 * agm(1.0, (1.0 - m).sqrt()))
}

/// sn from its Fourier series in the nome `q = exp(-pi K'/K)`.
pub fn sn_nome_series(u: f64, m: f64) -> f64 {
    assert!(m > 0.0 && m < 1.0);
    let k = complete_k(m);
    let kp = complete_k(1.0 - m);
    let q = (-PI * kp / k).exp();
    let v = PI * u / (2.0 * k);
    let mut sum = 0.0;
    for n in 0..2000 {
        let e = n as f64 + 0.5;
        let qn = q.powf(e);
        let term = qn / (1.0 - qn * qn) * ((2 * n + 1) as f64 * v).sin();
        sum += term;
        if qn < 1e-20 {
            break;
        }
    }
    2.0 * PI / (k * m.sqrt()) * sum
}

/// Legendre nodes and weights on [-1, 1] by Newton on the three-term
/// recurrence with a Chebyshev-like initial guess.
pub fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre with `panels` equal panels of `order` points.
pub fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = legendre_rule(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        total += rule
            .iter()
            .map(|&(x, w)| w * f(mid + 0.5 * h * x))
            .sum::<f64>()
            * 0.5
            * h;
    }
    total
}

/// Incomplete integrals straight over [0, phi], no periodic reduction,
/// with a 20-point rule (twice the library's panel order).
pub fn ellip_f_quadrature(phi: f64, m: f64) -> f64 {
    composite(
        |t| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(),
        0.0,
        phi,
        128,
        20,
    )
}

pub fn ellip_e_quadrature(phi: f64, m: f64) -> f64 {
    composite(|t| (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, phi, 128, 20)
}

/// Integral representation of the modified Bessel function for y > 0:
/// `(1/pi) int_0^pi e^{y cos t} cos(nu t) dt - sin(nu pi)/pi int_0^inf e^{-y cosh t - nu t} dt`.
pub fn bessel_i_integral(nu: f64, y: f64) -> f64 {
    assert!(y > 0.0);
    let first = composite(|t| (y * t.cos()).exp() * (nu * t).cos(), 0.0, PI, 32, 20) / PI;
    let tail = (46.0 / y).acosh() + 1.0;
    let second = composite(|t| (-y * t.cosh() - nu * t).exp(), 0.0, tail, 128, 20);
    first - (nu * PI).sin() / PI * second
}

/// O(n^2) discrete Fourier transform.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &v)| {
                let ang = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                (re + v * ang.cos(), im + v * ang.sin())
            })
        })
        .collect()
}
