use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correlation::{correlation_matrix, diff_corr, CorrelationMatrix};
use super::dcr::dcr;
use super::jsd::{category_counts, jsd};
use super::mlef::{mlef, MlefOutcome};
use super::wasserstein::wasserstein_1d;
use crate::error::{Error, Result};
use crate::gbdt::GbdtConfig;
use crate::preprocess::{EncoderOptions, TableEncoder};
use crate::table::{Column, Frame, JobTable};

pub const HISTOGRAM_BINS: usize = 64;
pub const TOP_CATEGORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub gbdt: GbdtConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { gbdt: GbdtConfig::desk() }
    }
}

/// Per-feature values plus their mean, serialized flat with a `mean` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    #[serde(flatten)]
    pub per_feature: BTreeMap<String, f64>,
    pub mean: f64,
}

impl FeatureScores {
    fn from_pairs(pairs: Vec<(String, f64)>) -> Self {
        let mean = if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64 };
        Self { per_feature: pairs.into_iter().collect(), mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlefScores {
    pub train: f64,
    pub synthetic: f64,
    /// `synthetic − train`.
    pub diff: f64,
    pub train_detail: MlefOutcome,
    pub synthetic_detail: MlefOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Histogram {
    /// Fractions of all rows per bin; values outside the real range are
    /// left out and counted.
    Numeric { edges: Vec<f64>, real: Vec<f64>, synth: Vec<f64>, synth_out_of_range: usize },
    /// Fractions of all rows for the most frequent real categories.
    Categorical { categories: Vec<String>, real: Vec<f64>, synth: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wd: FeatureScores,
    pub jsd: FeatureScores,
    pub corr_real: CorrelationMatrix,
    pub corr_synth: CorrelationMatrix,
    pub diff_corr: f64,
    pub dcr: f64,
    pub mlef: MlefScores,
    pub histograms: BTreeMap<String, Histogram>,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `WD  JSD  diff-CORR  DCR  diff-MLEF` as one line.
    pub fn summary_row(&self) -> String {
        format!(
            "{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.wd.mean, self.jsd.mean, self.diff_corr, self.dcr, self.mlef.diff
        )
    }
}

fn numeric_histogram(real: &[f64], synth: &[f64]) -> Histogram {
    let lo = real.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| if i == HISTOGRAM_BINS { hi } else { lo + width * i as f64 }).collect();
    let bin = |v: f64| -> Option<usize> {
        if !(lo..=hi).contains(&v) {
            return None;
        }
        if width == 0.0 {
            return Some(0);
        }
        Some((((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1))
    };
    let fill = |xs: &[f64]| {
        let mut h = vec![0.0; HISTOGRAM_BINS];
        let mut outside = 0;
        for &v in xs {
            match bin(v) {
                Some(b) => h[b] += 1.0,
                None => outside += 1,
            }
        }
        let n = xs.len().max(1) as f64;
        h.iter_mut().for_each(|c| *c /= n);
        (h, outside)
    };
    let (real_h, _) = fill(real);
    let (synth_h, synth_out_of_range) = fill(synth);
    Histogram::Numeric { edges, real: real_h, synth: synth_h, synth_out_of_range }
}

fn categorical_histogram(real: &[String], synth: &[String]) -> Histogram {
    let rc = category_counts(real);
    let sc = category_counts(synth);
    let mut ranked: Vec<(&String, f64)> = rc.iter().map(|(k, v)| (k, *v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(TOP_CATEGORIES);
    let (nr, ns) = (real.len().max(1) as f64, synth.len().max(1) as f64);
    Histogram::Categorical {
        categories: ranked.iter().map(|(k, _)| (*k).clone()).collect(),
        real: ranked.iter().map(|(_, v)| v / nr).collect(),
        synth: ranked.iter().map(|(k, _)| sc.get(*k).copied().unwrap_or(0.0) / ns).collect(),
    }
}

/// Scores `synth` against `train`, with machine-learning efficacy measured
/// on `test`.
pub fn evaluate(train: &JobTable, synth: &JobTable, test: &JobTable, cfg: &EvalConfig) -> Result<MetricsReport> {
    if train.is_empty() || synth.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs non-empty train, synthetic and test tables".into()));
    }
    let real_f = train.to_frame();
    let synth_f = synth.to_frame();
    let mut flags = Vec::new();
    let mut wd = Vec::new();
    let mut js = Vec::new();
    let mut histograms = BTreeMap::new();
    for (i, name) in real_f.names.iter().enumerate() {
        match (&real_f.columns[i], &synth_f.columns[i]) {
            (Column::Numeric(r), Column::Numeric(s)) => {
                wd.push((name.clone(), wasserstein_1d(r, s)?));
                let h = numeric_histogram(r, s);
                if let Histogram::Numeric { synth_out_of_range: n, .. } = &h {
                    if *n > 0 {
                        flags.push(format!("histogram {name}: {n} synthetic values outside the real range"));
                    }
                }
                histograms.insert(name.clone(), h);
            }
            (Column::Categorical(r), Column::Categorical(s)) => {
                js.push((name.clone(), jsd(&category_counts(r), &category_counts(s))?));
                histograms.insert(name.clone(), categorical_histogram(r, s));
            }
            _ => return Err(Error::Schema(format!("feature `{name}` differs in kind"))),
        }
    }
    let corr_real = correlation_matrix(&real_f)?;
    let corr_synth = correlation_matrix(&synth_f)?;
    for (label, m) in [("corr_real", &corr_real), ("corr_synth", &corr_synth)] {
        for &(i, j) in &m.degenerate {
            flags.push(format!("{label}[{},{}]: constant input, convention value used", m.features[i], m.features[j]));
        }
    }
    let diff = diff_corr(&corr_real, &corr_synth)?;

    let encoder = TableEncoder::fit(&real_f, EncoderOptions::default())?;
    let enc_train = encoder.encode(&real_f)?;
    let (enc_synth, unseen) = encoder.encode_lenient(&synth_f)?;
    if unseen.total() > 0 {
        flags.push(format!("dcr: {} synthetic categories unseen in train, encoded as zero blocks", unseen.total()));
    }
    let distance = dcr(&enc_train.data, &enc_synth.data)?;

    let m_train = mlef(train, test, &cfg.gbdt)?;
    let m_synth = mlef(synth, test, &cfg.gbdt)?;
    for (label, m) in [("train", &m_train), ("synthetic", &m_synth)] {
        if m.excluded_train + m.excluded_test > 0 {
            flags.push(format!(
                "mlef {label}: excluded {} fitting and {} test rows with non-positive workload",
                m.excluded_train, m.excluded_test
            ));
        }
        if m.unseen_test_categories > 0 {
            flags.push(format!("mlef {label}: {} unseen test categories encoded as zero blocks", m.unseen_test_categories));
        }
    }
    Ok(MetricsReport {
        wd: FeatureScores::from_pairs(wd),
        jsd: FeatureScores::from_pairs(js),
        corr_real,
        corr_synth,
        diff_corr: diff,
        dcr: distance,
        mlef: MlefScores {
            train: m_train.mse,
            synthetic: m_synth.mse,
            diff: m_synth.mse - m_train.mse,
            train_detail: m_train,
            synthetic_detail: m_synth,
        },
        histograms,
        flags,
    })
}

/// Independent-marginal baseline: every column permuted on its own, which
/// keeps each marginal and destroys the joint structure.
pub fn shuffle_columns(table: &JobTable, seed: u64) -> Result<JobTable> {
    let frame = table.to_frame();
    let n = frame.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(frame.ncols());
    for col in &frame.columns {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        columns.push(col.take(&order));
    }
    JobTable::from_frame(&Frame::new(frame.names.clone(), columns)?)
}
