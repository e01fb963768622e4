//! Raw trace parsing, the DAOD filtering funnel, dataset-name decomposition,
//! workload derivation and the train/test split.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{JobRecord, JobTable};

/// Input column names, in the order a trace file carries them.
pub const RAW_COLUMNS: [&str; 8] = [
    "creationtime",
    "computingsite",
    "dataset_name",
    "ninputdatafiles",
    "inputfilebytes",
    "jobstatus",
    "ncores",
    "cputime",
];

pub const DAOD_PREFIX: &str = "DAOD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJobRecord {
    pub creation_time: i64,
    pub computing_site: String,
    pub dataset_name: String,
    pub n_input_files: u64,
    pub input_file_bytes: u64,
    pub job_status: String,
    pub n_cores: u32,
    pub cpu_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    /// Guess from a file extension; anything but `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub format: TraceFormat,
    /// Fraction of malformed rows above which parsing aborts.
    pub malformed_tolerance: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { format: TraceFormat::Csv, malformed_tolerance: 0.01 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<RawJobRecord>,
    pub total_rows: usize,
    pub malformed: usize,
    pub first_malformed: Option<String>,
}

pub fn parse_records<R: Read>(source: R, opts: ParseOptions) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let note = |out: &mut ParseOutcome, row: usize, msg: String| {
        out.malformed += 1;
        if out.first_malformed.is_none() {
            out.first_malformed = Some(format!("row {row}: {msg}"));
        }
    };
    match opts.format {
        TraceFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .flexible(true)
                .from_reader(source);
            let headers = rdr.headers()?.clone();
            if headers.is_empty() {
                return Ok(out);
            }
            let mut idx = [0usize; 8];
            for (slot, name) in idx.iter_mut().zip(RAW_COLUMNS) {
                *slot = headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            }
            for (i, row) in rdr.records().enumerate() {
                out.total_rows += 1;
                let parsed = row
                    .map_err(|e| e.to_string())
                    .and_then(|row| {
                        let fields: [&str; 8] = std::array::from_fn(|k| row.get(idx[k]).unwrap_or(""));
                        raw_from_fields(fields)
                    });
                match parsed {
                    Ok(r) => out.records.push(r),
                    Err(msg) => note(&mut out, i + 1, msg),
                }
            }
        }
        TraceFormat::Jsonl => {
            for (i, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                out.total_rows += 1;
                match raw_from_json(&line) {
                    Ok(r) => out.records.push(r),
                    Err(msg) => note(&mut out, i + 1, msg),
                }
            }
        }
    }
    if out.total_rows > 0 && out.malformed as f64 > opts.malformed_tolerance * out.total_rows as f64 {
        return Err(Error::TooManyMalformed {
            malformed: out.malformed,
            total: out.total_rows,
            tolerance: opts.malformed_tolerance,
            first: out.first_malformed.clone().unwrap_or_default(),
        });
    }
    Ok(out)
}

fn raw_from_json(line: &str) -> std::result::Result<RawJobRecord, String> {
    let obj: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut texts = Vec::with_capacity(8);
    for name in RAW_COLUMNS {
        let v = obj.get(name).ok_or_else(|| format!("missing key `{name}`"))?;
        texts.push(match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(format!("`{name}` has unsupported value {other}")),
        });
    }
    let fields: [&str; 8] = std::array::from_fn(|k| texts[k].as_str());
    raw_from_fields(fields)
}

fn raw_from_fields(f: [&str; 8]) -> std::result::Result<RawJobRecord, String> {
    let creation_time = parse_timestamp(f[0]).ok_or_else(|| format!("bad timestamp `{}`", f[0]))?;
    let int = |k: usize| f[k].parse::<u64>().map_err(|_| format!("bad `{}` value `{}`", RAW_COLUMNS[k], f[k]));
    let n_input_files = int(3)?;
    let input_file_bytes = int(4)?;
    let n_cores = f[6]
        .parse::<u32>()
        .ok()
        .filter(|&c| c >= 1)
        .ok_or_else(|| format!("bad `ncores` value `{}`", f[6]))?;
    let cpu_time = f[7]
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite() && *t >= 0.0)
        .ok_or_else(|| format!("bad `cputime` value `{}`", f[7]))?;
    if f[1].is_empty() {
        return Err("empty computingsite".into());
    }
    Ok(RawJobRecord {
        creation_time,
        computing_site: f[1].to_string(),
        dataset_name: f[2].to_string(),
        n_input_files,
        input_file_bytes,
        job_status: f[5].to_string(),
        n_cores,
        cpu_time,
    })
}

/// Integer epoch seconds or ISO-8601 (with offset, or naive UTC).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| chrono::NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Sections of a dotted dataset name that become categorical features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSections {
    pub project: String,
    pub prodstep: String,
    pub datatype: String,
}

/// Split a dataset name on dots and pick fields 0, 3 and 4. A leading
/// `scope:` qualifier is ignored.
pub fn parse_daod_name(name: &str) -> Result<DatasetSections> {
    let bare = name.rsplit_once(':').map_or(name, |(_, n)| n);
    let fields: Vec<&str> = bare.split('.').collect();
    if fields.len() < 5 || [0, 3, 4].iter().any(|&i| fields[i].is_empty()) {
        return Err(Error::DatasetName(name.to_string()));
    }
    Ok(DatasetSections {
        project: fields[0].to_string(),
        prodstep: fields[3].to_string(),
        datatype: fields[4].to_string(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub unparseable: usize,
    pub non_daod: usize,
    pub output: usize,
}

/// Keep records whose datatype section starts with `DAOD`, preserving order.
pub fn filter_daod(records: Vec<RawJobRecord>) -> (Vec<RawJobRecord>, FilterReport) {
    let mut report = FilterReport { input: records.len(), ..Default::default() };
    let kept: Vec<RawJobRecord> = records
        .into_iter()
        .filter(|r| match parse_daod_name(&r.dataset_name) {
            Ok(s) if s.datatype.starts_with(DAOD_PREFIX) => true,
            Ok(_) => {
                report.non_daod += 1;
                false
            }
            Err(_) => {
                report.unparseable += 1;
                false
            }
        })
        .collect();
    report.output = kept.len();
    (kept, report)
}

/// Per-core processing rate of each computing site, in Gflop per core-second.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteCatalog {
    rates: BTreeMap<String, f64>,
    scale: f64,
}

impl SiteCatalog {
    pub fn new(rates: BTreeMap<String, f64>, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Catalog(format!("scale must be positive, got {scale}")));
        }
        if let Some((site, r)) = rates.iter().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Catalog(format!("rate for `{site}` must be positive, got {r}")));
        }
        Ok(Self { rates, scale })
    }

    /// Parse `{"SITE": rate, ..., "scale": optional}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut rates = BTreeMap::new();
        let mut scale = 1.0;
        for (k, v) in obj {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::Catalog(format!("value for `{k}` is not a number")))?;
            if k == "scale" {
                scale = x;
            } else {
                rates.insert(k, x);
            }
        }
        Self::new(rates, scale)
    }

    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for (k, v) in &self.rates {
            obj.insert(k.clone(), serde_json::json!(v));
        }
        obj.insert("scale".into(), serde_json::json!(self.scale));
        serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("finite numbers")
    }

    pub fn rate(&self, site: &str) -> Result<f64> {
        self.rates
            .get(site)
            .map(|r| r * self.scale)
            .ok_or_else(|| Error::UnknownSite(site.to_string()))
    }

    pub fn sites(&self) -> impl Iterator<Item = &str> {
        self.rates.keys().map(String::as_str)
    }
}

/// Cores × per-core rate × CPU seconds.
pub fn derive_workload(record: &RawJobRecord, catalog: &SiteCatalog) -> Result<f64> {
    let rate = catalog.rate(&record.computing_site)?;
    Ok(f64::from(record.n_cores) * rate * record.cpu_time)
}

/// Decompose names and derive workloads for DAOD-filtered records.
pub fn build_job_table(records: &[RawJobRecord], catalog: &SiteCatalog) -> Result<JobTable> {
    records
        .iter()
        .map(|r| {
            let s = parse_daod_name(&r.dataset_name)?;
            Ok(JobRecord {
                creationtime: r.creation_time,
                computingsite: r.computing_site.clone(),
                project: s.project,
                prodstep: s.prodstep,
                datatype: s.datatype,
                jobstatus: r.job_status.clone(),
                nfiles: r.n_input_files,
                size: r.input_file_bytes,
                workload: derive_workload(r, catalog)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(JobTable::new)
}

/// Seeded disjoint partition. Train gets `round(fraction * n)` rows; both
/// halves keep the input row order.
pub fn split_train_test(table: &JobTable, train_fraction: f64, seed: u64) -> Result<(JobTable, JobTable)> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty table".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n = table.len();
    let (train_idx, test_idx) = split_indices(n, train_fraction, seed);
    let pick = |idx: &[usize]| JobTable::new(idx.iter().map(|&i| table.records[i].clone()).collect());
    Ok((pick(&train_idx), pick(&test_idx)))
}

pub(crate) fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "creationtime,computingsite,dataset_name,ninputdatafiles,inputfilebytes,jobstatus,ncores,cputime\n";

    fn lenient() -> ParseOptions {
        ParseOptions { malformed_tolerance: 1.0, ..Default::default() }
    }

    fn raw(name: &str, cores: u32, cpu: f64) -> RawJobRecord {
        RawJobRecord {
            creation_time: 1_700_000_000,
            computing_site: "BNL".into(),
            dataset_name: name.into(),
            n_input_files: 2,
            input_file_bytes: 10,
            job_status: "finished".into(),
            n_cores: cores,
            cpu_time: cpu,
        }
    }

    fn catalog() -> SiteCatalog {
        SiteCatalog::from_json(r#"{"BNL": 10.0, "CERN-PROD": 12.5}"#).unwrap()
    }

    #[test]
    fn csv_row_maps_fields() {
        let src = format!("{HEADER}1700000000,BNL,mc23.1.s.deriv.DAOD_PHYS.p1,3,400,finished,8,12.5\n");
        let out = parse_records(src.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(out.malformed, 0);
        let r = &out.records[0];
        assert_eq!(r.creation_time, 1_700_000_000);
        assert_eq!(r.computing_site, "BNL");
        assert_eq!(r.n_cores, 8);
        assert_eq!(r.n_input_files, 3);
        assert_eq!(r.cpu_time, 12.5);
    }

    #[test]
    fn empty_stream_is_empty() {
        let out = parse_records(&b""[..], ParseOptions::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.malformed, 0);
        let out = parse_records(&b""[..], ParseOptions { format: TraceFormat::Jsonl, ..Default::default() }).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn zero_cores_is_malformed() {
        let src = format!(
            "{HEADER}1700000000,BNL,a.b.c.d.DAOD_X,1,1,finished,0,1\n1700000000,BNL,a.b.c.d.DAOD_X,1,1,finished,1,1\n"
        );
        let out = parse_records(src.as_bytes(), lenient()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.malformed, 1);
        assert!(out.first_malformed.unwrap().contains("ncores"));
    }

    #[test]
    fn malformed_fraction_above_tolerance_aborts() {
        let src = format!("{HEADER}x,BNL,a.b.c.d.DAOD_X,1,1,finished,1,1\n");
        let err = parse_records(src.as_bytes(), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 1, total: 1, .. }));
    }

    #[test]
    fn missing_column_is_an_error() {
        let src = "creationtime,computingsite\n1,BNL\n";
        assert!(matches!(
            parse_records(src.as_bytes(), ParseOptions::default()),
            Err(Error::MissingColumn(c)) if c == "dataset_name"
        ));
    }

    #[test]
    fn jsonl_accepts_iso_timestamps_and_string_numbers() {
        let src = r#"{"creationtime":"2023-11-14T22:13:20Z","computingsite":"BNL","dataset_name":"a.b.c.d.DAOD_X","ninputdatafiles":"4","inputfilebytes":5,"jobstatus":"failed","ncores":1,"cputime":2.5}"#;
        let out = parse_records(src.as_bytes(), ParseOptions { format: TraceFormat::Jsonl, ..Default::default() }).unwrap();
        assert_eq!(out.records[0].creation_time, 1_700_000_000);
        assert_eq!(out.records[0].n_input_files, 4);
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("1700000000"), Some(1_700_000_000));
        assert_eq!(parse_timestamp("2023-11-14 22:13:20"), Some(1_700_000_000));
        assert_eq!(parse_timestamp("2023-11-14T23:13:20+01:00"), Some(1_700_000_000));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    // Hand-collected names following the public ATLAS nomenclature.
    const NAME_SAMPLE: [(&str, &str, &str, &str); 6] = [
        ("mc23.12345.sample.deriv.DAOD_PHYS.p5855", "mc23", "deriv", "DAOD_PHYS"),
        ("data22.00431.x.recon.DAOD_LLP1.r14", "data22", "recon", "DAOD_LLP1"),
        (
            "mc20_13TeV.410470.PhPy8EG_A14_ttbar_hdamp258p75_nonallhad.deriv.DAOD_PHYS.e6337_s3681_r13144_p5855",
            "mc20_13TeV",
            "deriv",
            "DAOD_PHYS",
        ),
        (
            "data18_13TeV.00348885.physics_Main.deriv.DAOD_PHYSLITE.r13286_p4910_p5855",
            "data18_13TeV",
            "deriv",
            "DAOD_PHYSLITE",
        ),
        (
            "mc23_13p6TeV.601229.PhPy8EG_A14_ttbar_hdamp258p75_SingleLep.deriv.DAOD_FTAG1.e8514_s4162_r14622_p5855",
            "mc23_13p6TeV",
            "deriv",
            "DAOD_FTAG1",
        ),
        ("data17_13TeV.00340453.physics_Main.merge.AOD.f1044_m2025", "data17_13TeV", "merge", "AOD"),
    ];

    #[test]
    fn dataset_name_sections() {
        for (name, project, prodstep, datatype) in NAME_SAMPLE {
            let s = parse_daod_name(name).unwrap();
            assert_eq!((s.project.as_str(), s.prodstep.as_str(), s.datatype.as_str()), (project, prodstep, datatype));
            // reassembling the picked sections into a name reproduces them
            let rebuilt = format!("{}.x.y.{}.{}", s.project, s.prodstep, s.datatype);
            assert_eq!(parse_daod_name(&rebuilt).unwrap(), s);
        }
        let scoped = parse_daod_name("mc23_13p6TeV:mc23_13p6TeV.1.s.deriv.DAOD_PHYS.p1").unwrap();
        assert_eq!(scoped.project, "mc23_13p6TeV");
    }

    #[test]
    fn short_dataset_name_is_an_error() {
        assert!(matches!(parse_daod_name("a.b.c"), Err(Error::DatasetName(n)) if n == "a.b.c"));
    }

    #[test]
    fn filter_keeps_daod_only() {
        let recs = vec![
            raw("a.1.s.deriv.DAOD_PHYS.p1", 1, 1.0),
            raw("a.1.s.recon.AOD.r1", 1, 1.0),
            raw("broken", 1, 1.0),
            raw("b.1.s.deriv.DAOD_LLP1.p1", 1, 1.0),
        ];
        let (kept, rep) = filter_daod(recs.clone());
        assert_eq!(kept, vec![recs[0].clone(), recs[3].clone()]);
        assert_eq!(rep, FilterReport { input: 4, unparseable: 1, non_daod: 1, output: 2 });
        let (again, _) = filter_daod(kept.clone());
        assert_eq!(again, kept);
        let (none, rep) = filter_daod(vec![]);
        assert!(none.is_empty());
        assert_eq!(rep.output, 0);
    }

    #[test]
    fn workload_is_cores_times_rate_times_time() {
        let c = catalog();
        assert_eq!(derive_workload(&raw("n", 8, 0.0), &c).unwrap(), 0.0);
        assert_eq!(derive_workload(&raw("n", 8, 3600.0), &c).unwrap(), 288_000.0);
        assert_eq!(derive_workload(&raw("n", 16, 3600.0), &c).unwrap(), 576_000.0);
        let mut r = raw("n", 1, 1.0);
        r.computing_site = "NOWHERE".into();
        assert!(matches!(derive_workload(&r, &c), Err(Error::UnknownSite(s)) if s == "NOWHERE"));
    }

    #[test]
    fn catalog_scale_and_validation() {
        let c = SiteCatalog::from_json(r#"{"BNL": 10.0, "scale": 0.5}"#).unwrap();
        assert_eq!(c.rate("BNL").unwrap(), 5.0);
        assert!(SiteCatalog::from_json(r#"{"BNL": 0}"#).is_err());
        assert!(SiteCatalog::from_json(r#"{"BNL": "fast"}"#).is_err());
        let round = SiteCatalog::from_json(&c.to_json()).unwrap();
        assert_eq!(round, c);
    }

    fn table(n: usize) -> JobTable {
        let c = catalog();
        let recs: Vec<_> = (0..n).map(|i| raw("a.1.s.deriv.DAOD_PHYS.p1", 1, i as f64)).collect();
        build_job_table(&recs, &c).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let t = table(10);
        let (a, b) = split_train_test(&t, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a2, b2) = split_train_test(&t, 0.8, 3).unwrap();
        assert_eq!((a, b), (a2, b2));
        let (tr, te) = split_indices(100_000, 0.8, 1);
        assert_eq!((tr.len(), te.len()), (80_000, 20_000));
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_train_test(&JobTable::default(), 0.8, 0).is_err());
        assert!(split_train_test(&table(3), 1.0, 0).is_err());
        assert!(split_train_test(&table(3), 0.0, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..300, frac in 0.01f64..0.99, seed in 0u64..1000) {
            let (tr, te) = split_indices(n, frac, seed);
            let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn workload_is_homogeneous(cores in 1u32..64, cpu in 0.0f64..1e6, k in 1u32..8) {
            let c = catalog();
            let base = derive_workload(&raw("n", cores, cpu), &c).unwrap();
            let scaled = derive_workload(&raw("n", cores * k, cpu), &c).unwrap();
            proptest::prop_assert!((scaled - f64::from(k) * base).abs() <= 1e-9 * scaled.max(1.0));
            let scaled = derive_workload(&raw("n", cores, cpu * f64::from(k)), &c).unwrap();
            proptest::prop_assert!((scaled - f64::from(k) * base).abs() <= 1e-9 * scaled.max(1.0));
        }
    }
}
