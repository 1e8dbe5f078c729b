//! Homogeneous unit-rate Poisson processes on boxes and discrete inverse-CDF
//! sampling.

use crate::rng::{RngKey, Stream};
use statrs::function::gamma::ln_gamma;

/// Largest expected point count a single process may be asked for.
pub const MAX_MEAN_COUNT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoissonError {
    #[error("box dimensions must be finite and nonnegative, got {0:?}")]
    BadBox(Vec<f64>),
    #[error("expected point count {0:e} exceeds the resource guard of {MAX_MEAN_COUNT:e}")]
    TooLarge(f64),
    #[error("point count {count} exceeds the cap of {cap}")]
    CapExceeded { count: u64, cap: u64 },
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
}

/// Points of a unit-rate process on `[0, s] x [0, T]`: `(location, mark)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkedPoints {
    pub width: f64,
    pub mark_cap: f64,
    pub points: Vec<(f64, f64)>,
}

impl MarkedPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Poisson(mean) variate: sequential inversion up to mean 30, Hörmann's
/// transformed rejection (PTRS) above.
pub fn poisson_count(stream: &mut Stream, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean <= 30.0 {
        let u = stream.next_f64();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            if next == cdf {
                // cdf has saturated below u by rounding; the remaining mass is < 1 ulp.
                break;
            }
            cdf = next;
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.next_f64() - 0.5;
        let v = stream.next_f64();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

fn check_box(dims: &[f64]) -> Result<f64, PoissonError> {
    if dims.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(PoissonError::BadBox(dims.to_vec()));
    }
    let volume: f64 = dims.iter().product();
    if volume > MAX_MEAN_COUNT {
        return Err(PoissonError::TooLarge(volume));
    }
    Ok(volume)
}

/// Unit-rate process on `[0, s] x [0, T]`, refusing more than `cap` points.
pub fn sample_unit_pp_capped(key: &RngKey, s: f64, t: f64, cap: u64) -> Result<MarkedPoints, PoissonError> {
    let volume = check_box(&[s, t])?;
    let mut stream = key.stream();
    let n = poisson_count(&mut stream, volume);
    if n > cap {
        return Err(PoissonError::CapExceeded { count: n, cap });
    }
    let points = (0..n).map(|_| (stream.next_f64() * s, stream.next_f64() * t)).collect();
    Ok(MarkedPoints {
        width: s,
        mark_cap: t,
        points,
    })
}

/// Unit-rate process on `[0, s] x [0, T]`; deterministic in `key`.
pub fn sample_unit_pp(key: &RngKey, s: f64, t: f64) -> Result<MarkedPoints, PoissonError> {
    sample_unit_pp_capped(key, s, t, u64::MAX)
}

pub fn sample_triple_pp_capped(
    key: &RngKey,
    s: f64,
    t: f64,
    cap: u64,
) -> Result<Vec<(f64, f64, f64)>, PoissonError> {
    let volume = check_box(&[s, s, t])?;
    let mut stream = key.stream();
    let n = poisson_count(&mut stream, volume);
    if n > cap {
        return Err(PoissonError::CapExceeded { count: n, cap });
    }
    Ok((0..n)
        .map(|_| (stream.next_f64() * s, stream.next_f64() * s, stream.next_f64() * t))
        .collect())
}

/// Unit-rate process on `[0, s]^2 x [0, T]`: `(row, column, mark)`.
pub fn sample_triple_pp(key: &RngKey, s: f64, t: f64) -> Result<Vec<(f64, f64, f64)>, PoissonError> {
    sample_triple_pp_capped(key, s, t, u64::MAX)
}

/// Index `r` with `cum(r-1) <= u < cum(r)`, or `None` when `u` lies at or
/// beyond the total weight.
pub fn inverse_cdf(weights: &[f64], u: f64) -> Result<Option<usize>, PoissonError> {
    let mut cum = 0.0;
    let mut found = None;
    for (index, &w) in weights.iter().enumerate() {
        if w < 0.0 || w.is_nan() {
            return Err(PoissonError::NegativeWeight { index, value: w });
        }
        cum += w;
        if found.is_none() && u < cum && w > 0.0 {
            found = Some(index);
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::label;

    #[test]
    fn vanishing_area_is_empty() {
        let key = RngKey::new(5);
        let pts = sample_unit_pp(&key, 1.0, 1e-12).unwrap();
        assert!(pts.is_empty());
        assert!(sample_triple_pp(&key, 1.0, 0.0).unwrap().is_empty());
    }

    #[test]
    fn deterministic_in_key() {
        let key = RngKey::new(11).child(label::VERTICES, 0);
        assert_eq!(sample_unit_pp(&key, 2.0, 3.0).unwrap(), sample_unit_pp(&key, 2.0, 3.0).unwrap());
        assert_eq!(
            sample_triple_pp(&key, 1.0, 2.0).unwrap(),
            sample_triple_pp(&key, 1.0, 2.0).unwrap()
        );
    }

    #[test]
    fn points_inside_box() {
        for seed in 0..50 {
            let pts = sample_unit_pp(&RngKey::new(seed), 2.0, 3.0).unwrap();
            assert!(pts.points.iter().all(|&(t, m)| (0.0..=2.0).contains(&t) && (0.0..=3.0).contains(&m)));
        }
    }

    #[test]
    fn guards() {
        let key = RngKey::new(0);
        assert!(matches!(sample_unit_pp(&key, 1e5, 1e5), Err(PoissonError::TooLarge(_))));
        assert!(matches!(sample_unit_pp(&key, -1.0, 1.0), Err(PoissonError::BadBox(_))));
        assert!(matches!(sample_unit_pp(&key, f64::NAN, 1.0), Err(PoissonError::BadBox(_))));
        assert!(matches!(
            sample_unit_pp_capped(&key, 100.0, 100.0, 10),
            Err(PoissonError::CapExceeded { .. })
        ));
    }

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(inverse_cdf(&[0.5, 0.5], 0.25).unwrap(), Some(0));
        assert_eq!(inverse_cdf(&[0.5, 0.5], 0.75).unwrap(), Some(1));
        assert_eq!(inverse_cdf(&[0.5, 0.5], 0.5).unwrap(), Some(1));
        assert_eq!(inverse_cdf(&[0.3, 0.7], 0.5).unwrap(), Some(1));
        assert_eq!(inverse_cdf(&[0.3, 0.7], 1.5).unwrap(), None);
        assert_eq!(inverse_cdf(&[0.0, 0.0, 1.0], 0.0).unwrap(), Some(2));
        assert_eq!(inverse_cdf(&[], 0.0).unwrap(), None);
        assert!(inverse_cdf(&[0.5, -0.1], 0.2).is_err());
    }

    #[test]
    fn poisson_count_mean_and_variance() {
        for &mean in &[0.5f64, 6.0, 29.9, 30.5, 200.0, 5e4] {
            let mut s = RngKey::new(17).child(label::USER, mean.to_bits()).stream();
            let n = 20_000;
            let xs: Vec<f64> = (0..n).map(|_| poisson_count(&mut s, mean) as f64).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "mean {mean}: {m}");
            assert!((v / mean - 1.0).abs() < 0.06, "mean {mean}: var {v}");
        }
    }
}
