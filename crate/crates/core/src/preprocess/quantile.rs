use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_quantile};

pub const DEFAULT_MAX_QUANTILES: usize = 1000;
pub const DEFAULT_CLAMP: f64 = 5.2;
const MAX_NUDGE_ULPS: usize = 8;

/// Maps a numeric feature to a standard normal score through its
/// piecewise-linear empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransformer {
    pub feature: String,
    /// Values at probabilities `i / (q - 1)`, non-decreasing.
    pub references: Vec<f64>,
    pub clamp: f64,
}

/// Fit `q` evenly spaced empirical quantiles (linear interpolation between
/// order statistics).
pub fn fit_quantile(feature: &str, values: &[f64], q: usize, clamp: f64) -> Result<QuantileTransformer> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("no values to fit for `{feature}`")));
    }
    if q < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 quantiles, got {q}")));
    }
    if !(clamp.is_finite() && clamp > 0.0) {
        return Err(Error::InvalidArgument(format!("clamp bound must be positive, got {clamp}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("fit values of `{feature}`")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateFeature(feature.to_string()));
    }
    let last = (sorted.len() - 1) as f64;
    let references = (0..q)
        .map(|i| {
            let pos = i as f64 / (q - 1) as f64 * last;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 || lo + 1 >= sorted.len() || sorted[lo] == sorted[lo + 1] {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            }
        })
        .collect();
    Ok(QuantileTransformer { feature: feature.to_string(), references, clamp })
}

impl QuantileTransformer {
    /// Position of `v` on the reference grid, in `[0, q - 1]`. A value
    /// hitting a run of equal references gets the midpoint of the run.
    fn position(&self, v: f64) -> f64 {
        let r = &self.references;
        let first_ge = r.partition_point(|&x| x < v);
        let past_le = r.partition_point(|&x| x <= v);
        if first_ge == r.len() {
            return (r.len() - 1) as f64;
        }
        if past_le == 0 {
            return 0.0;
        }
        if first_ge < past_le {
            return 0.5 * (first_ge + past_le - 1) as f64;
        }
        let j = past_le - 1;
        j as f64 + (v - r[j]) / (r[j + 1] - r[j])
    }

    /// Empirical CDF through the references.
    pub fn cdf(&self, v: f64) -> f64 {
        self.position(v) / (self.references.len() - 1) as f64
    }

    /// `Φ⁻¹(F̂(v))` with `F̂` kept inside `[ε, 1 − ε]`, `ε = Φ(−clamp)`. The
    /// upper half works from the complement so both tails keep precision.
    pub fn transform(&self, v: f64) -> f64 {
        let last = (self.references.len() - 1) as f64;
        let pos = self.position(v);
        let (lower, upper) = (pos / last, (last - pos) / last);
        let eps = normal_cdf(-self.clamp);
        if lower <= eps {
            return -self.clamp;
        }
        if upper <= eps {
            return self.clamp;
        }
        let z = if lower <= 0.5 { normal_quantile(lower) } else { -normal_quantile(upper) };
        z.clamp(-self.clamp, self.clamp)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        let r = &self.references;
        if z <= -self.clamp {
            return r[0];
        }
        if z >= self.clamp {
            return r[r.len() - 1];
        }
        let last = (r.len() - 1) as f64;
        let pos = if z <= 0.0 { normal_cdf(z) * last } else { last - normal_cdf(-z) * last };
        let j = (pos.floor().max(0.0) as usize).min(r.len() - 2);
        let frac = pos - j as f64;
        if frac <= 0.0 {
            return r[j];
        }
        if frac >= 1.0 {
            return r[j + 1];
        }
        r[j] + frac * (r[j + 1] - r[j])
    }

    /// [`inverse`](Self::inverse), nudged by a few ulps when a neighbouring
    /// float transforms back to exactly `z`. Keeps encode-decode-encode
    /// stable bit for bit.
    pub fn inverse_exact(&self, z: f64) -> f64 {
        let v = self.inverse(z);
        let t = self.transform(v);
        if t == z || !v.is_finite() {
            return v;
        }
        let (mut hi, mut lo) = (v, v);
        for _ in 0..MAX_NUDGE_ULPS {
            hi = hi.next_up();
            lo = lo.next_down();
            if self.transform(hi) == z {
                return hi;
            }
            if self.transform(lo) == z {
                return lo;
            }
        }
        v
    }

    pub fn min(&self) -> f64 {
        self.references[0]
    }

    pub fn max(&self) -> f64 {
        self.references[self.references.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fit(values: &[f64], q: usize) -> QuantileTransformer {
        fit_quantile("x", values, q, DEFAULT_CLAMP).unwrap()
    }

    #[test]
    fn uniform_references_match_analytic_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let t = fit(&v, 100);
        for (i, r) in t.references.iter().enumerate() {
            let expect = i as f64 / 99.0;
            assert!((r - expect).abs() < 0.02, "{i}: {r} vs {expect}");
        }
    }

    #[test]
    fn two_values_two_quantiles() {
        assert_eq!(fit(&[2.0, 1.0], 2).references, vec![1.0, 2.0]);
    }

    #[test]
    fn constant_feature_is_rejected() {
        assert!(matches!(
            fit_quantile("c", &[3.0; 10], 5, DEFAULT_CLAMP),
            Err(Error::DegenerateFeature(f)) if f == "c"
        ));
    }

    #[test]
    fn median_maps_to_zero() {
        let v: Vec<f64> = (0..1001).map(f64::from).collect();
        let t = fit(&v, 1000);
        assert!(t.transform(500.0).abs() < 1e-9);
        assert_eq!(t.inverse(0.0), 500.0);
    }

    #[test]
    fn out_of_range_clamps() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let t = fit(&v, 100);
        assert_eq!(t.transform(-5.0), -DEFAULT_CLAMP);
        assert_eq!(t.transform(1e9), DEFAULT_CLAMP);
        assert_eq!(t.inverse(DEFAULT_CLAMP), 99.0);
        assert_eq!(t.inverse(f64::INFINITY), 99.0);
        assert_eq!(t.inverse(-DEFAULT_CLAMP), 0.0);
    }

    #[test]
    fn clamp_corresponds_to_small_epsilon() {
        let eps = normal_cdf(-DEFAULT_CLAMP);
        assert!(eps > 5e-8 && eps < 2e-7, "{eps}");
    }

    #[test]
    fn standard_normal_data_is_nearly_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..200_000).map(|_| rng.sample(StandardNormal)).collect();
        let t = fit(&v, 1000);
        assert!((t.transform(1.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn interior_fit_values_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..5000).map(|_| (rng.sample::<f64, _>(StandardNormal) * 2.0).exp()).collect();
        let t = fit(&v, 1000);
        for &x in &v {
            let back = t.inverse(t.transform(x));
            assert!((back - x).abs() <= 1e-6 * x.abs(), "{x} -> {back}");
        }
    }

    #[test]
    fn tied_values_round_trip_exactly() {
        let v: Vec<f64> = (0..3000).map(|i| f64::from(1 + (i % 7) * (i % 3))).collect();
        let t = fit(&v, 1000);
        for &x in &v {
            assert_eq!(t.inverse(t.transform(x)), x);
        }
    }

    #[test]
    fn transformed_values_look_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..2000).map(|_| rng.random::<f64>().powi(3) * 10.0).collect();
        let t = fit(&v, 1000);
        let z: Vec<f64> = v.iter().map(|&x| t.transform(x)).collect();
        assert!(mean(&z).abs() < 0.1);
        let var = variance(&z);
        assert!((0.8..=1.2).contains(&var), "{var}");
    }

    proptest::proptest! {
        #[test]
        fn transform_and_inverse_are_monotone(
            data in proptest::collection::vec(-1e3f64..1e3, 2..200),
            a in -2e3f64..2e3,
            b in -2e3f64..2e3,
        ) {
            proptest::prop_assume!(data.iter().any(|&x| x != data[0]));
            let t = fit(&data, data.len().min(1000));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(t.transform(lo) <= t.transform(hi));
            let (zl, zh) = (lo / 300.0, hi / 300.0);
            proptest::prop_assert!(t.inverse(zl) <= t.inverse(zh));
        }
    }
}
