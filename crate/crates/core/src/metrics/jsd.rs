use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Category counts, keyed by label.
pub type Counts = BTreeMap<String, f64>;

pub fn category_counts<S: AsRef<str>>(values: &[S]) -> Counts {
    let mut out = Counts::new();
    for v in values {
        *out.entry(v.as_ref().to_string()).or_insert(0.0) += 1.0;
    }
    out
}

/// Jensen-Shannon divergence in bits over the union of both supports,
/// `½ KL(p ‖ m) + ½ KL(q ‖ m)` with `m = ½ (p + q)`.
pub fn jsd(real: &Counts, synth: &Counts) -> Result<f64> {
    let (np, nq) = (total(real)?, total(synth)?);
    let (mut kp, mut kq) = (0.0, 0.0);
    let keys: BTreeSet<&String> = real.keys().chain(synth.keys()).collect();
    for key in keys {
        let cp = real.get(key).copied().unwrap_or(0.0);
        let cq = synth.get(key).copied().unwrap_or(0.0);
        let (p, q) = (cp / np, cq / nq);
        let m = 0.5 * (p + q);
        // count-weighted so that disjoint supports sum to exactly 1
        if cp > 0.0 {
            kp += cp * (p / m).log2();
        }
        if cq > 0.0 {
            kq += cq * (q / m).log2();
        }
    }
    Ok((0.5 * (kp / np + kq / nq)).clamp(0.0, 1.0))
}

fn total(c: &Counts) -> Result<f64> {
    if c.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("counts must be finite and non-negative".into()));
    }
    let t: f64 = c.values().sum();
    if t <= 0.0 {
        return Err(Error::InvalidArgument("counts must have a positive total".into()));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, f64)]) -> Counts {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identical_and_disjoint() {
        let p = counts(&[("A", 3.0), ("B", 5.0), ("C", 1.0)]);
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        let q = counts(&[("D", 7.0), ("E", 2.0)]);
        assert_eq!(jsd(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn half_and_half_against_point_mass() {
        let p = counts(&[("A", 1.0), ("B", 1.0)]);
        let q = counts(&[("A", 4.0)]);
        assert!((jsd(&p, &q).unwrap() - 0.311278).abs() < 1e-6);
        assert_eq!(jsd(&p, &q).unwrap(), jsd(&q, &p).unwrap());
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(jsd(&Counts::new(), &counts(&[("A", 1.0)])).is_err());
    }

    #[test]
    fn counting() {
        let c = category_counts(&["b", "a", "b"]);
        assert_eq!(c, counts(&[("a", 1.0), ("b", 2.0)]));
    }
}
