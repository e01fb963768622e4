use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category vocabulary for one feature, ordered by descending frequency
/// with lexicographic ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub feature: String,
    pub vocabulary: Vec<String>,
}

pub fn fit_onehot(feature: &str, values: &[String]) -> Result<OneHotEncoder> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("no values to fit for `{feature}`")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(OneHotEncoder {
        feature: feature.to_string(),
        vocabulary: ranked.into_iter().map(|(v, _)| v.to_string()).collect(),
    })
}

impl OneHotEncoder {
    pub fn width(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.vocabulary.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect()
    }

    /// Position of the largest entry; ties go to the lowest index.
    pub fn argmax(block: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in block.iter().enumerate().skip(1) {
            if v > block[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vocabulary_order() {
        assert_eq!(fit_onehot("f", &strings(&["B", "A", "A"])).unwrap().vocabulary, strings(&["A", "B"]));
        assert_eq!(fit_onehot("f", &strings(&["B", "A"])).unwrap().vocabulary, strings(&["A", "B"]));
        assert_eq!(
            fit_onehot("f", &strings(&["c", "b", "b", "a", "c", "d"])).unwrap().vocabulary,
            strings(&["b", "c", "a", "d"])
        );
    }

    #[test]
    fn empty_is_rejected() {
        assert!(fit_onehot("f", &[]).is_err());
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(OneHotEncoder::argmax(&[0.0, 1.0, 0.0]), 1);
        assert_eq!(OneHotEncoder::argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(OneHotEncoder::argmax(&[0.1, 0.4, 0.4]), 1);
    }
}
