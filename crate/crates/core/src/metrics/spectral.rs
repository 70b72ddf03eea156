use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fft::psd;
use crate::error::{Error, Result};
use crate::optim::csv_io;
use crate::scalar::Scalar;

/// Target-PSD bins at or below this are flagged and left out of band means.
pub const PSD_FLOOR: f64 = 1e-12;
/// Low band is `f < fraction * f_max` with `f_max = 0.5` cycles/sample.
pub const BAND_SPLIT_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Cycles per sample, `k / n`.
    pub frequencies: Vec<f64>,
    pub relative_psd: Vec<f64>,
    /// True where the target PSD fell to the floor.
    pub floored: Vec<bool>,
    pub low_band_mean: f64,
    pub high_band_mean: f64,
    pub cumulative: Vec<f64>,
    pub band_split_fraction: f64,
}

impl SpectralReport {
    fn from_bins(frequencies: Vec<f64>, relative_psd: Vec<f64>, floored: Vec<bool>) -> Self {
        let split = BAND_SPLIT_FRACTION * 0.5;
        let mean = |low: bool| {
            let (sum, n) = frequencies
                .iter()
                .zip(&relative_psd)
                .zip(&floored)
                .filter(|((&f, _), &fl)| !fl && (f < split) == low)
                .fold((0.0, 0usize), |(s, n), ((_, &r), _)| (s + r, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        };
        let (low_band_mean, high_band_mean) = (mean(true), mean(false));
        let cumulative = relative_psd
            .iter()
            .scan(0.0, |acc, &r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        SpectralReport {
            frequencies,
            relative_psd,
            floored,
            low_band_mean,
            high_band_mean,
            cumulative,
            band_split_fraction: BAND_SPLIT_FRACTION,
        }
    }

    /// `high_band_mean / low_band_mean`.
    pub fn band_ratio(&self) -> f64 {
        self.high_band_mean / self.low_band_mean
    }

    /// Writes `bin,frequency,relative_psd,cumulative,floored` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["bin", "frequency", "relative_psd", "cumulative", "floored"])
            .map_err(|e| csv_io(path, e))?;
        for k in 0..self.relative_psd.len() {
            w.write_record([
                k.to_string(),
                self.frequencies[k].to_string(),
                self.relative_psd[k].to_string(),
                self.cumulative[k].to_string(),
                u8::from(self.floored[k]).to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Relative PSD of `residual` against `target` on a uniform 1D grid.
pub fn spectral_report<T: Scalar>(residual: &[T], target: &[T]) -> Result<SpectralReport> {
    if residual.len() != target.len() {
        return Err(Error::Shape(format!(
            "residual {} vs target {}",
            residual.len(),
            target.len()
        )));
    }
    let n = residual.len();
    let pr = psd(residual)?;
    let pt = psd(target)?;
    let mut rel = Vec::with_capacity(pr.len());
    let mut floored = Vec::with_capacity(pr.len());
    for (r, t) in pr.iter().zip(&pt) {
        let t = t.f64();
        let fl = t <= PSD_FLOOR;
        floored.push(fl);
        rel.push(r.f64() / t.max(PSD_FLOOR));
    }
    let freqs = (0..pr.len()).map(|k| k as f64 / n as f64).collect();
    Ok(SpectralReport::from_bins(freqs, rel, floored))
}

/// Bin-wise mean of several reports over the same grid. A bin is averaged
/// over the reports where it is not floored; it stays flagged only if it is
/// floored in all of them.
pub fn average_reports(reports: &[SpectralReport]) -> Result<SpectralReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Shape("no spectral reports".into()))?;
    let bins = first.relative_psd.len();
    if reports.iter().any(|r| r.relative_psd.len() != bins) {
        return Err(Error::Shape("spectral reports differ in length".into()));
    }
    let mut rel = vec![0.0; bins];
    let mut floored = vec![false; bins];
    for k in 0..bins {
        let live: Vec<f64> = reports
            .iter()
            .filter(|r| !r.floored[k])
            .map(|r| r.relative_psd[k])
            .collect();
        if live.is_empty() {
            floored[k] = true;
            rel[k] = reports.iter().map(|r| r.relative_psd[k]).sum::<f64>() / reports.len() as f64;
        } else {
            rel[k] = live.iter().sum::<f64>() / live.len() as f64;
        }
    }
    Ok(SpectralReport::from_bins(
        first.frequencies.clone(),
        rel,
        floored,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn wave(n: usize, cycles: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * cycles * i as f64 / n as f64).sin())
            .collect()
    }

    #[test]
    fn zero_residual() {
        let t = wave(64, 3.0);
        let r = spectral_report(&vec![0.0; 64], &t).unwrap();
        assert!(r.relative_psd.iter().all(|&v| v == 0.0));
        assert_eq!((r.low_band_mean, r.high_band_mean), (0.0, 0.0));
    }

    #[test]
    fn residual_equal_to_target() {
        let t: Vec<f64> = (0..128)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect();
        let r = spectral_report(&t, &t).unwrap();
        for (v, fl) in r.relative_psd.iter().zip(&r.floored) {
            if !fl {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(
            r.cumulative.last().copied().unwrap(),
            r.relative_psd.iter().fold(0.0, |a, b| a + b)
        );
    }

    #[test]
    fn high_frequency_residual_lands_in_the_high_band() {
        let n = 512;
        let target: Vec<f64> = wave(n, 4.0)
            .iter()
            .zip(wave(n, 150.0))
            .map(|(a, b)| a + 1e-3 * b)
            .collect();
        let resid = wave(n, 150.0);
        let r = spectral_report(&resid, &target).unwrap();
        assert!(r.high_band_mean > 100.0 * r.low_band_mean.max(1e-300));
    }

    #[test]
    fn band_boundary_and_monotone_cumulative() {
        let n = 64;
        let t: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sqrt()).collect();
        let r = spectral_report(&t, &t).unwrap();
        assert_eq!(r.frequencies.len(), n / 2 + 1);
        // bins 0..8 are low, f = 8/64 = 0.125 is the first high bin
        assert!(r.frequencies[7] < 0.125 && r.frequencies[8] == 0.125);
        assert!(r.cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn floored_bins_are_flagged() {
        let r = spectral_report(&wave(32, 2.0), &vec![0.0; 32]).unwrap();
        assert!(r.floored.iter().all(|&f| f));
        assert_eq!((r.low_band_mean, r.high_band_mean), (0.0, 0.0));
    }
}
