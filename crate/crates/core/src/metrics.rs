//! Denoising quality metrics and the JSON evaluation report.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{dct2_forward, flatten, FeatureMap, SpectralMap};

/// Mean squared difference.
pub fn mse<S: Scalar>(a: &FeatureMap<S>, b: &FeatureMap<S>) -> Result<S> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::shape(
            "mse",
            format!("{:?}", a.data().dim()),
            format!("{:?}", b.data().dim()),
        ));
    }
    let mut sum = S::zero();
    for (&x, &y) in a.data().iter().zip(b.data().iter()) {
        let d = x - y;
        sum += d * d;
    }
    Ok(sum / S::from_f64(a.data().len() as f64))
}

/// `10 * log10(peak^2 / mse)` in dB; an exact match reports +inf.
pub fn psnr<S: Scalar>(a: &FeatureMap<S>, b: &FeatureMap<S>, peak: S) -> Result<S> {
    let e = mse(a, b)?;
    if e == S::zero() {
        return Ok(S::infinity());
    }
    Ok(S::from_f64(10.0) * (peak * peak / e).log10())
}

/// Sum of squared coefficients per contiguous flat-index band, totalled over
/// channels. Band boundaries use the same row-major flat order as the
/// attention subspaces.
pub fn band_energy<S: Scalar>(m: &SpectralMap<S>, n_bands: usize) -> Result<Vec<S>> {
    let positions = m.height() * m.width();
    if n_bands == 0 || positions % n_bands != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_bands {n_bands} must divide H*W = {positions}"
        )));
    }
    let band_len = positions / n_bands;
    let flat = flatten(m);
    let mut bands = vec![S::zero(); n_bands];
    for ((p, _), &v) in flat.data().indexed_iter() {
        bands[p / band_len] += v * v;
    }
    Ok(bands)
}

/// Quantitative summary of one denoising run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub psnr_db: f64,
    /// Spectral energy of the denoised map by flat-index quartile.
    pub band_energy: Vec<f64>,
    /// `PSNR(denoised) - PSNR(noisy)`, both against the clean reference.
    pub noise_suppression_gain_db: f64,
}

impl EvalReport {
    /// Peak defaults to the clean map's maximum entry.
    pub fn compute<S: Scalar>(
        denoised: &FeatureMap<S>,
        clean: &FeatureMap<S>,
        noisy: &FeatureMap<S>,
    ) -> Result<EvalReport> {
        let peak = clean.data().iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        Self::compute_with_peak(denoised, clean, noisy, peak)
    }

    pub fn compute_with_peak<S: Scalar>(
        denoised: &FeatureMap<S>,
        clean: &FeatureMap<S>,
        noisy: &FeatureMap<S>,
        peak: S,
    ) -> Result<EvalReport> {
        let e = mse(denoised, clean)?;
        let p_out = psnr(denoised, clean, peak)?;
        let p_in = psnr(noisy, clean, peak)?;
        let bands = band_energy(&dct2_forward(denoised)?, 4)?;
        Ok(EvalReport {
            mse: e.as_f64(),
            psnr_db: p_out.as_f64(),
            band_energy: bands.iter().map(|v| v.as_f64()).collect(),
            noise_suppression_gain_db: (p_out - p_in).as_f64(),
        })
    }

    /// Single-line JSON; non-finite values are emitted as the strings
    /// "inf" / "-inf".
    pub fn to_json_line(&self) -> String {
        fn num(v: f64) -> String {
            if v.is_finite() {
                format!("{v}")
            } else if v > 0.0 {
                "\"inf\"".to_string()
            } else {
                "\"-inf\"".to_string()
            }
        }
        let bands: Vec<String> = self.band_energy.iter().map(|&v| num(v)).collect();
        format!(
            "{{\"mse\":{},\"psnr_db\":{},\"band_energy\":[{}],\"noise_suppression_gain_db\":{}}}",
            num(self.mse),
            num(self.psnr_db),
            bands.join(","),
            num(self.noise_suppression_gain_db)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::spectral::squared_norm;
    use ndarray::Array3;

    fn random_map(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap<f64> {
        let mut rng = CounterRng::new(seed);
        FeatureMap::new(Array3::from_shape_fn((c, h, w), |_| rng.uniform_in(-1.0, 1.0))).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = random_map(2, 3, 3, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = FeatureMap::new(a.data() + 1.0).unwrap();
        assert!((mse(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let a = random_map(2, 3, 4, 2);
        let b = random_map(2, 3, 4, 3);
        let mut sum = 0.0;
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            sum += (x - y) * (x - y);
        }
        assert!((mse(&a, &b).unwrap() - sum / 24.0).abs() < 1e-15);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        assert!(mse(&random_map(1, 2, 2, 1), &random_map(1, 2, 3, 1)).is_err());
    }

    #[test]
    fn psnr_examples() {
        let clean = random_map(1, 4, 4, 5);
        let offset = FeatureMap::new(clean.data() + 2.0).unwrap();
        // mse = 4 = peak^2 for peak 2 -> 0 dB
        assert!(psnr(&offset, &clean, 2.0).unwrap().abs() < 1e-12);
        // halving the mse adds 10*log10(2) = 3.0103 dB
        let half = FeatureMap::new(clean.data() + 2.0f64.sqrt()).unwrap();
        let gain = psnr(&half, &clean, 2.0).unwrap() - psnr(&offset, &clean, 2.0).unwrap();
        assert!((gain - 3.0103).abs() < 1e-4);
        // identical maps -> +inf sentinel
        assert!(psnr(&clean, &clean, 2.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_decreases_as_mse_grows() {
        let clean = random_map(1, 4, 4, 6);
        let mut last = f64::INFINITY;
        for scale in [0.1, 0.5, 1.0, 2.0] {
            let noisy = FeatureMap::new(clean.data() + scale).unwrap();
            let p = psnr(&noisy, &clean, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn band_energy_dc_only() {
        let mut data = Array3::zeros((1, 2, 4));
        data[(0, 0, 0)] = 3.0f64;
        let m = SpectralMap::new(data).unwrap();
        let bands = band_energy(&m, 4).unwrap();
        assert_eq!(bands, vec![9.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn band_energy_satisfies_parseval() {
        let x = random_map(2, 4, 4, 7);
        let m = dct2_forward(&x).unwrap();
        let bands = band_energy(&m, 4).unwrap();
        let total: f64 = bands.iter().sum();
        let spatial = squared_norm(x.data());
        assert!((total - spatial).abs() / spatial <= 1e-5);
    }

    #[test]
    fn band_energy_matches_loop_oracle() {
        let m = dct2_forward(&random_map(3, 2, 4, 8)).unwrap();
        let bands = band_energy(&m, 2).unwrap();
        let (c_n, h, w) = m.data().dim();
        let band_len = h * w / 2;
        let mut expect = [0.0; 2];
        for c in 0..c_n {
            for i in 0..h {
                for j in 0..w {
                    let p = i * w + j;
                    expect[p / band_len] += m.data()[(c, i, j)].powi(2);
                }
            }
        }
        for (a, b) in bands.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn band_energy_requires_divisibility() {
        let m = SpectralMap::<f64>::zeros(1, 3, 3).unwrap();
        assert!(band_energy(&m, 4).is_err());
    }

    #[test]
    fn report_json_is_single_line() {
        let clean = random_map(1, 4, 4, 9);
        let noisy = FeatureMap::new(clean.data() + 0.5).unwrap();
        let denoised = FeatureMap::new(clean.data() + 0.1).unwrap();
        let report = EvalReport::compute(&denoised, &clean, &noisy).unwrap();
        let line = report.to_json_line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("{\"mse\":"));
        assert!(report.noise_suppression_gain_db > 0.0);
        // exact match serializes the +inf sentinel as a string
        let perfect = EvalReport::compute(&clean, &clean, &noisy).unwrap();
        assert!(perfect.to_json_line().contains("\"psnr_db\":\"inf\""));
    }
}
