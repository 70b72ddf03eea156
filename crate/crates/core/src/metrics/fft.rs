use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// In-place iterative radix-2 decimation-in-time transform,
/// `X_k = sum_j x_j e^{-2 pi i jk/n}`.
pub fn fft_in_place<T: Scalar>(buf: &mut [Complex<T>]) -> Result<()> {
    let n = buf.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::BadLength(n));
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex<T>> = (0..half)
            .map(|k| {
                let ang = -2.0 * std::f64::consts::PI * k as f64 / len as f64;
                Complex::new(T::of(ang.cos()), T::of(ang.sin()))
            })
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a = *a + t;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Transform of a real series whose length is a power of two.
pub fn fft<T: Scalar>(series: &[T]) -> Result<Vec<Complex<T>>> {
    let mut buf: Vec<Complex<T>> = series.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// One-sided periodogram `|X_k|^2 / n` for `k = 0..=n/2`.
pub fn psd<T: Scalar>(series: &[T]) -> Result<Vec<T>> {
    let n = series.len();
    let spec = fft(series)?;
    let scale = T::one() / T::of(n as f64);
    Ok(spec[..=n / 2]
        .iter()
        .map(|c| c.norm_sqr() * scale)
        .collect())
}

/// Energy represented by a one-sided periodogram of an even-length series:
/// interior bins count twice.
pub fn one_sided_energy<T: Scalar>(psd: &[T]) -> T {
    let last = psd.len() - 1;
    psd.iter()
        .enumerate()
        .map(|(k, &p)| if k == 0 || k == last { p } else { p + p })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_and_constant() {
        let x = fft(&[1.0f64, 0.0, 0.0, 0.0]).unwrap();
        assert!(x.iter().all(|c| *c == Complex::new(1.0, 0.0)));
        let x = fft(&[1.0f64; 4]).unwrap();
        assert_eq!(x[0], Complex::new(4.0, 0.0));
        assert!(x[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn rejects_bad_lengths() {
        for n in [0, 1, 3, 6, 100] {
            assert!(matches!(fft(&vec![0.0f64; n]), Err(Error::BadLength(m)) if m == n));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let x = fft(&[1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x[0], Complex::new(10.0, 0.0));
        assert!((x[2].re + 2.0).abs() < 1e-6);
    }
}
