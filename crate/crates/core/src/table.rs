//! Job records, the canonical job table file, and the column-oriented
//! [`Frame`] that the encoders and metrics operate on.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub kind: FeatureKind,
    pub unit: &'static str,
}

const fn cat(name: &'static str) -> FeatureSpec {
    FeatureSpec { name, kind: FeatureKind::Categorical, unit: "" }
}

const fn num(name: &'static str, unit: &'static str) -> FeatureSpec {
    FeatureSpec { name, kind: FeatureKind::Numeric, unit }
}

/// Column order of the job table file and of every per-feature report.
pub const JOB_SCHEMA: [FeatureSpec; 9] = [
    num("creationtime", "s since epoch"),
    cat("computingsite"),
    cat("project"),
    cat("prodstep"),
    cat("datatype"),
    cat("jobstatus"),
    num("nfiles", "files"),
    num("size", "bytes"),
    num("workload", "Gflop"),
];

pub const TARGET_FEATURE: &str = "workload";

/// One job after ingestion: five categorical and four numerical features.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub creationtime: i64,
    pub computingsite: String,
    pub project: String,
    pub prodstep: String,
    pub datatype: String,
    pub jobstatus: String,
    pub nfiles: u64,
    pub size: u64,
    pub workload: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JobTable {
    pub records: Vec<JobRecord>,
}

impl JobTable {
    pub fn new(records: Vec<JobRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema(&self) -> &'static [FeatureSpec] {
        &JOB_SCHEMA
    }

    pub fn to_frame(&self) -> Frame {
        let r = &self.records;
        let strings = |f: fn(&JobRecord) -> &str| {
            Column::Categorical(r.iter().map(|x| f(x).to_string()).collect())
        };
        let numbers = |f: fn(&JobRecord) -> f64| Column::Numeric(r.iter().map(f).collect());
        let columns = vec![
            numbers(|x| x.creationtime as f64),
            strings(|x| &x.computingsite),
            strings(|x| &x.project),
            strings(|x| &x.prodstep),
            strings(|x| &x.datatype),
            strings(|x| &x.jobstatus),
            numbers(|x| x.nfiles as f64),
            numbers(|x| x.size as f64),
            numbers(|x| x.workload),
        ];
        Frame {
            names: JOB_SCHEMA.iter().map(|s| s.name.to_string()).collect(),
            columns,
        }
    }

    /// Rebuild records from a frame carrying the job schema. Integer
    /// features are rounded and negative values clamp to zero.
    pub fn from_frame(frame: &Frame) -> Result<Self> {
        let names: Vec<&str> = frame.names.iter().map(String::as_str).collect();
        let expected: Vec<&str> = JOB_SCHEMA.iter().map(|s| s.name).collect();
        if names != expected {
            return Err(Error::Schema(format!("expected columns {expected:?}, got {names:?}")));
        }
        let n = frame.nrows();
        let num = |i: usize| frame.columns[i].as_numeric().expect("schema checked");
        let cat = |i: usize| frame.columns[i].as_categorical().expect("schema checked");
        let (ct, nf, sz, wl) = (num(0), num(6), num(7), num(8));
        let (site, proj, step, dt, st) = (cat(1), cat(2), cat(3), cat(4), cat(5));
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            for (name, v) in [("creationtime", ct[i]), ("nfiles", nf[i]), ("size", sz[i]), ("workload", wl[i])] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{name} at row {i}")));
                }
            }
            records.push(JobRecord {
                creationtime: ct[i].round() as i64,
                computingsite: site[i].clone(),
                project: proj[i].clone(),
                prodstep: step[i].clone(),
                datatype: dt[i].clone(),
                jobstatus: st[i].clone(),
                nfiles: nf[i].round().max(0.0) as u64,
                size: sz[i].round().max(0.0) as u64,
                workload: wl[i].max(0.0),
            });
        }
        Ok(Self { records })
    }

    /// Write the canonical CSV: header in schema order, `\n` line endings,
    /// workload with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(JOB_SCHEMA.iter().map(|s| s.name))?;
        for r in &self.records {
            w.write_record([
                r.creationtime.to_string().as_str(),
                &r.computingsite,
                &r.project,
                &r.prodstep,
                &r.datatype,
                &r.jobstatus,
                &r.nfiles.to_string(),
                &r.size.to_string(),
                &format_workload(r.workload),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let mut idx = [0usize; 9];
        for (slot, spec) in idx.iter_mut().zip(JOB_SCHEMA.iter()) {
            *slot = headers
                .iter()
                .position(|h| h == spec.name)
                .ok_or_else(|| Error::MissingColumn(spec.name.to_string()))?;
        }
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |k: usize| row.get(idx[k]).unwrap_or("");
            let bad = |k: usize| Error::Schema(format!("row {}: bad `{}` value `{}`", line + 1, JOB_SCHEMA[k].name, field(k)));
            records.push(JobRecord {
                creationtime: field(0).parse().map_err(|_| bad(0))?,
                computingsite: field(1).to_string(),
                project: field(2).to_string(),
                prodstep: field(3).to_string(),
                datatype: field(4).to_string(),
                jobstatus: field(5).to_string(),
                nfiles: field(6).parse().map_err(|_| bad(6))?,
                size: field(7).parse().map_err(|_| bad(7))?,
                workload: field(8)
                    .parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .ok_or_else(|| bad(8))?,
            });
        }
        Ok(Self { records })
    }

    pub fn read_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write_path(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn format_workload(w: f64) -> String {
    format!("{w:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Column::Numeric(_) => FeatureKind::Numeric,
            Column::Categorical(_) => FeatureKind::Categorical,
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[String]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Numeric(_) => None,
        }
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Named columns of equal length. Generic over schema so the encoders and
/// generators work on any mix of numeric and categorical features.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
}

impl Frame {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Schema("names and columns differ in length".into()));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Schema("columns differ in length".into()));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.columns.iter().map(Column::kind).collect()
    }

    pub fn select(&self, names: &[&str]) -> Result<Frame> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            cols.push(self.column(n).ok_or_else(|| Error::MissingColumn(n.to_string()))?.clone());
        }
        Frame::new(names.iter().map(|s| s.to_string()).collect(), cols)
    }

    pub fn take_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: i64) -> JobRecord {
        JobRecord {
            creationtime: 1_700_000_000 + i,
            computingsite: "BNL".into(),
            project: "mc23".into(),
            prodstep: "deriv".into(),
            datatype: "DAOD_PHYS".into(),
            jobstatus: "finished".into(),
            nfiles: 3,
            size: 123_456,
            workload: 288_000.0 / 7.0,
        }
    }

    #[test]
    fn csv_round_trip_preserves_rows_and_order() {
        let t = JobTable::new((0..5).map(record).collect());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("creationtime,computingsite,project,prodstep,datatype,jobstatus,nfiles,size,workload\n"));
        assert!(!text.contains('\r'));
        assert_eq!(JobTable::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn workload_has_17_significant_digits() {
        let s = format_workload(288_000.0);
        assert_eq!(s, "2.8800000000000000e5");
        let mantissa = s.split('e').next().unwrap().replace('.', "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn frame_round_trip() {
        let t = JobTable::new((0..3).map(record).collect());
        assert_eq!(JobTable::from_frame(&t.to_frame()).unwrap(), t);
    }

    #[test]
    fn from_frame_clamps_negative_workload() {
        let mut f = JobTable::new(vec![record(0)]).to_frame();
        f.columns[8] = Column::Numeric(vec![-3.0]);
        assert_eq!(JobTable::from_frame(&f).unwrap().records[0].workload, 0.0);
    }

    #[test]
    fn missing_header_column_is_reported() {
        let err = JobTable::read_csv("creationtime,computingsite\n1,BNL\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "project"));
    }
}
