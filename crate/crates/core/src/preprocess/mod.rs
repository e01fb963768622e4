//! Reversible encoding of tables into dense matrices: a Gaussian quantile
//! transform per numeric feature (leading block) and a one-hot block per
//! categorical feature.

mod onehot;
mod quantile;

pub use onehot::{fit_onehot, OneHotEncoder};
pub use quantile::{fit_quantile, QuantileTransformer, DEFAULT_CLAMP, DEFAULT_MAX_QUANTILES};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::table::{Column, FeatureKind, Frame, JobTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: FeatureKind,
    pub offset: usize,
    pub width: usize,
}

/// Where each feature lives in the encoded matrix. Numeric features come
/// first, one column each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    pub fn from_parts(numeric: &[&str], categorical: &[(&str, usize)]) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for n in numeric {
            blocks.push(Block { name: n.to_string(), kind: FeatureKind::Numeric, offset, width: 1 });
            offset += 1;
        }
        for (n, k) in categorical {
            blocks.push(Block { name: n.to_string(), kind: FeatureKind::Categorical, offset, width: *k });
            offset += k;
        }
        Self { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    pub fn numeric_dims(&self) -> usize {
        self.blocks.iter().filter(|b| b.kind == FeatureKind::Numeric).count()
    }

    pub fn categorical_sizes(&self) -> Vec<usize> {
        self.categorical_blocks().map(|b| b.width).collect()
    }

    pub fn categorical_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind == FeatureKind::Categorical)
    }

    /// First 8 bytes of the SHA-256 of the JSON layout.
    pub fn schema_hash(&self) -> [u8; 8] {
        let json = serde_json::to_vec(self).expect("layout serializes");
        let digest = Sha256::digest(&json);
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}

/// Rows × encoded columns, tagged with the layout that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub data: Array2<f64>,
    pub layout: Layout,
}

impl EncodedMatrix {
    pub fn new(data: Array2<f64>, layout: Layout) -> Result<Self> {
        if data.ncols() != layout.dim() {
            return Err(Error::Schema(format!("matrix has {} columns, layout {}", data.ncols(), layout.dim())));
        }
        Ok(Self { data, layout })
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOptions {
    /// `None` picks `min(1000, n)`.
    pub quantiles: Option<usize>,
    pub clamp: f64,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        Self { quantiles: None, clamp: DEFAULT_CLAMP }
    }
}

/// Fitted per-feature transforms plus the matrix layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEncoder {
    /// Feature names and kinds in frame order.
    pub columns: Vec<(String, FeatureKind)>,
    pub numeric: Vec<QuantileTransformer>,
    pub categorical: Vec<OneHotEncoder>,
    pub layout: Layout,
}

/// Outcome of a lenient encode: rows with categories outside the fitted
/// vocabulary get all-zero blocks and are counted here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnseenCounts {
    pub per_feature: Vec<(String, usize)>,
}

impl UnseenCounts {
    pub fn total(&self) -> usize {
        self.per_feature.iter().map(|(_, c)| c).sum()
    }
}

impl TableEncoder {
    pub fn fit(frame: &Frame, opts: EncoderOptions) -> Result<Self> {
        let n = frame.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit encoders on an empty table".into()));
        }
        let q = opts.quantiles.unwrap_or_else(|| DEFAULT_MAX_QUANTILES.min(n)).max(2);
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for (name, col) in frame.names.iter().zip(&frame.columns) {
            match col {
                Column::Numeric(v) => numeric.push(fit_quantile(name, v, q, opts.clamp)?),
                Column::Categorical(v) => categorical.push(fit_onehot(name, v)?),
            }
        }
        let num_names: Vec<&str> = numeric.iter().map(|t| t.feature.as_str()).collect();
        let cat_parts: Vec<(&str, usize)> = categorical.iter().map(|c| (c.feature.as_str(), c.width())).collect();
        let layout = Layout::from_parts(&num_names, &cat_parts);
        Ok(Self {
            columns: frame.names.iter().cloned().zip(frame.kinds()).collect(),
            numeric,
            categorical,
            layout,
        })
    }

    pub fn fit_table(table: &JobTable, opts: EncoderOptions) -> Result<Self> {
        Self::fit(&table.to_frame(), opts)
    }

    fn check_schema(&self, frame: &Frame) -> Result<()> {
        let got: Vec<(String, FeatureKind)> = frame.names.iter().cloned().zip(frame.kinds()).collect();
        if got != self.columns {
            return Err(Error::Schema(format!("encoder fitted on {:?}, table has {:?}", self.columns, got)));
        }
        Ok(())
    }

    /// Strict encode: an unknown category is an error.
    pub fn encode(&self, frame: &Frame) -> Result<EncodedMatrix> {
        let (m, unseen) = self.encode_inner(frame, true)?;
        debug_assert_eq!(unseen.total(), 0);
        Ok(m)
    }

    /// Unknown categories become all-zero blocks and are counted.
    pub fn encode_lenient(&self, frame: &Frame) -> Result<(EncodedMatrix, UnseenCounts)> {
        self.encode_inner(frame, false)
    }

    fn encode_inner(&self, frame: &Frame, strict: bool) -> Result<(EncodedMatrix, UnseenCounts)> {
        self.check_schema(frame)?;
        let n = frame.nrows();
        let mut data = Array2::<f64>::zeros((n, self.layout.dim()));
        let mut unseen = UnseenCounts::default();
        let (mut ni, mut ci) = (0, 0);
        for (name, col) in frame.names.iter().zip(&frame.columns) {
            match col {
                Column::Numeric(v) => {
                    let t = &self.numeric[ni];
                    for (i, &x) in v.iter().enumerate() {
                        if !x.is_finite() {
                            return Err(Error::NonFinite(format!("`{name}` row {i}")));
                        }
                        data[[i, ni]] = t.transform(x);
                    }
                    ni += 1;
                }
                Column::Categorical(v) => {
                    let enc = &self.categorical[ci];
                    let offset = self.layout.categorical_blocks().nth(ci).expect("layout").offset;
                    let index = enc.index();
                    let mut missing = 0;
                    for (i, x) in v.iter().enumerate() {
                        match index.get(x.as_str()) {
                            Some(&k) => data[[i, offset + k]] = 1.0,
                            None if strict => {
                                return Err(Error::UnknownCategory { feature: name.clone(), value: x.clone() })
                            }
                            None => missing += 1,
                        }
                    }
                    unseen.per_feature.push((name.clone(), missing));
                    ci += 1;
                }
            }
        }
        Ok((EncodedMatrix { data, layout: self.layout.clone() }, unseen))
    }

    pub fn decode(&self, m: &EncodedMatrix) -> Result<Frame> {
        if m.layout != self.layout {
            return Err(Error::Schema("matrix layout differs from encoder layout".into()));
        }
        if let Some(pos) = m.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("encoded entry {pos}")));
        }
        let n = m.nrows();
        let (mut ni, mut ci) = (0, 0);
        let cat_blocks: Vec<&Block> = self.layout.categorical_blocks().collect();
        let mut columns = Vec::with_capacity(self.columns.len());
        for (_, kind) in &self.columns {
            match kind {
                FeatureKind::Numeric => {
                    let t = &self.numeric[ni];
                    columns.push(Column::Numeric((0..n).map(|i| t.inverse_exact(m.data[[i, ni]])).collect()));
                    ni += 1;
                }
                FeatureKind::Categorical => {
                    let b = cat_blocks[ci];
                    let vocab = &self.categorical[ci].vocabulary;
                    let col = (0..n)
                        .map(|i| {
                            let row = m.data.row(i);
                            let block = row.as_slice().map(|s| s[b.offset..b.offset + b.width].to_vec());
                            let block = block.unwrap_or_else(|| (0..b.width).map(|k| row[b.offset + k]).collect());
                            vocab[OneHotEncoder::argmax(&block)].clone()
                        })
                        .collect();
                    columns.push(Column::Categorical(col));
                    ci += 1;
                }
            }
        }
        Frame::new(self.columns.iter().map(|(n, _)| n.clone()).collect(), columns)
    }

    pub fn encode_table(&self, table: &JobTable) -> Result<EncodedMatrix> {
        self.encode(&table.to_frame())
    }

    pub fn decode_table(&self, m: &EncodedMatrix) -> Result<JobTable> {
        JobTable::from_frame(&self.decode(m)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let enc: Self = serde_json::from_str(text)?;
        let expected = enc.numeric.len() + enc.categorical.len();
        if enc.columns.len() != expected || enc.layout.blocks.len() != expected {
            return Err(Error::Schema("encoder state is inconsistent".into()));
        }
        Ok(enc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{generate_mock_table, MockProfile};

    fn mock(n: usize) -> JobTable {
        generate_mock_table(&MockProfile::default(), n, 21).unwrap()
    }

    #[test]
    fn width_arithmetic() {
        let l = Layout::from_parts(&["a", "b", "c", "d"], &[("s", 4), ("t", 20), ("u", 10), ("v", 3), ("w", 8)]);
        assert_eq!(l.dim(), 49);
        assert_eq!(l.numeric_dims(), 4);
        assert_eq!(l.blocks[4].offset, 4);
        assert_eq!(l.blocks[8].offset, 4 + 4 + 20 + 10 + 3);
    }

    #[test]
    fn encode_layout_and_one_hot_blocks() {
        let t = mock(2000);
        let enc = TableEncoder::fit_table(&t, EncoderOptions::default()).unwrap();
        assert_eq!(enc.layout.numeric_dims(), 4);
        assert_eq!(enc.categorical.iter().find(|c| c.feature == "jobstatus").unwrap().width(), 4);
        let m = enc.encode_table(&t).unwrap();
        assert_eq!(m.ncols(), enc.layout.dim());
        for b in enc.layout.categorical_blocks() {
            for row in m.data.rows() {
                let s: f64 = (0..b.width).map(|k| row[b.offset + k]).sum();
                assert_eq!(s, 1.0);
            }
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let t = mock(3000);
        let enc = TableEncoder::fit_table(&t, EncoderOptions::default()).unwrap();
        let m = enc.encode_table(&t).unwrap();
        let back = enc.decode_table(&m).unwrap();
        for (a, b) in back.records.iter().zip(&t.records) {
            assert_eq!(
                (&a.computingsite, &a.project, &a.prodstep, &a.datatype, &a.jobstatus),
                (&b.computingsite, &b.project, &b.prodstep, &b.datatype, &b.jobstatus)
            );
            assert_eq!((a.creationtime, a.nfiles, a.size), (b.creationtime, b.nfiles, b.size));
            assert!((a.workload - b.workload).abs() <= 1e-6 * b.workload);
        }
        // encode ∘ decode ∘ encode = encode
        assert_eq!(enc.encode_table(&back).unwrap(), m);
    }

    #[test]
    fn empty_table_encodes_to_zero_rows() {
        let enc = TableEncoder::fit_table(&mock(100), EncoderOptions::default()).unwrap();
        let m = enc.encode_table(&JobTable::default()).unwrap();
        assert_eq!(m.data.dim(), (0, enc.layout.dim()));
    }

    #[test]
    fn unknown_category_strict_and_lenient() {
        let t = mock(200);
        let enc = TableEncoder::fit_table(&t, EncoderOptions::default()).unwrap();
        let mut other = t.clone();
        other.records[0].computingsite = "MARS".into();
        assert!(matches!(enc.encode_table(&other), Err(Error::UnknownCategory { value, .. }) if value == "MARS"));
        let (m, unseen) = enc.encode_lenient(&other.to_frame()).unwrap();
        assert_eq!(unseen.total(), 1);
        let b = enc.layout.blocks.iter().find(|b| b.name == "computingsite").unwrap();
        assert!((0..b.width).all(|k| m.data[[0, b.offset + k]] == 0.0));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let t = mock(100);
        let enc = TableEncoder::fit_table(&t, EncoderOptions::default()).unwrap();
        let f = t.to_frame().select(&["workload", "datatype"]).unwrap();
        assert!(matches!(enc.encode(&f), Err(Error::Schema(_))));
    }

    #[test]
    fn decode_resolves_blocks_by_argmax() {
        let f = Frame::new(
            vec!["x".into(), "c".into()],
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Categorical(vec!["a".into(), "b".into(), "c".into()]),
            ],
        )
        .unwrap();
        let enc = TableEncoder::fit(&f, EncoderOptions::default()).unwrap();
        let data = ndarray::array![[0.0, 0.0, 1.0, 0.0], [0.0, 0.4, 0.4, 0.2]];
        let out = enc.decode(&EncodedMatrix::new(data, enc.layout.clone()).unwrap()).unwrap();
        assert_eq!(out.columns[1], Column::Categorical(vec!["b".into(), "a".into()]));
        let bad = ndarray::array![[f64::NAN, 1.0, 0.0, 0.0]];
        assert!(matches!(
            enc.decode(&EncodedMatrix::new(bad, enc.layout.clone()).unwrap()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let enc = TableEncoder::fit_table(&mock(300), EncoderOptions::default()).unwrap();
        let back = TableEncoder::from_json(&enc.to_json().unwrap()).unwrap();
        assert_eq!(back, enc);
        assert_eq!(back.layout.schema_hash(), enc.layout.schema_hash());
    }
}
