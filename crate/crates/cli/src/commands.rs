use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;
use workload_forge::diffusion::{train_with_progress, DiffusionModel};
use workload_forge::ingest::{build_job_table, filter_daod, parse_records, split_train_test, ParseOptions, SiteCatalog, TraceFormat};
use workload_forge::metrics::{evaluate, EvalConfig};
use workload_forge::mock::{generate_mock_table, generate_mock_trace, write_trace_csv};
use workload_forge::preprocess::{EncodedMatrix, EncoderOptions, TableEncoder};
use workload_forge::smote::{read_matrix, write_matrix, SmoteModel};
use workload_forge::{JobTable, JOB_SCHEMA};

use crate::config::{ModelKind, PipelineConfig};
use crate::lock::WorkdirLock;
use crate::{write_atomic, CliError};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const FUNNEL_JSON: &str = "funnel.json";
pub const ENCODER_JSON: &str = "encoder.json";
pub const SMOTE_BIN: &str = "smote.bin";
pub const SMOTE_JSON: &str = "smote.json";
pub const DDPM_BIN: &str = "ddpm.bin";
pub const DDPM_LOG_JSON: &str = "ddpm.loss.json";
pub const SYNTH_CSV: &str = "synth.csv";
pub const REPORT_JSON: &str = "report.json";

fn table_bytes(t: &JobTable) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

fn read_table(path: &Path) -> Result<JobTable, CliError> {
    JobTable::read_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn echo_config(cfg: &PipelineConfig, command: &str) -> Result<(), CliError> {
    write_atomic(&cfg.workdir.join(format!("{command}.config.json")), cfg.to_json().as_bytes())
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

pub struct MockArgs {
    pub out: PathBuf,
    pub raw: bool,
    /// Where a raw trace's site catalog goes; defaults next to `out`.
    pub catalog: Option<PathBuf>,
}

/// `<stem>.sites.json` beside a raw trace.
pub fn default_catalog_path(trace: &Path) -> PathBuf {
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    trace.with_file_name(format!("{stem}.sites.json"))
}

pub fn cmd_mock(cfg: &PipelineConfig, args: &MockArgs) -> Result<(), CliError> {
    let m = &cfg.mock;
    if args.raw {
        let (records, catalog) = generate_mock_trace(&m.profile, m.n, m.seed)?;
        let mut buf = Vec::new();
        write_trace_csv(&records, &mut buf)?;
        write_atomic(&args.out, &buf)?;
        let cat_path = args.catalog.clone().unwrap_or_else(|| default_catalog_path(&args.out));
        let mut cat = catalog.to_json();
        cat.push('\n');
        write_atomic(&cat_path, cat.as_bytes())?;
        eprintln!("wrote {} trace rows to {} and site catalog to {}", records.len(), args.out.display(), cat_path.display());
    } else {
        let table = generate_mock_table(&m.profile, m.n, m.seed)?;
        write_atomic(&args.out, &table_bytes(&table)?)?;
        eprintln!("wrote {} rows to {}", table.len(), args.out.display());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub stage: &'static str,
    pub rows: usize,
}

/// Row counts through ingestion, first stage to last, plus the split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Funnel {
    pub source: &'static str,
    pub stages: Vec<Stage>,
    pub malformed: usize,
    pub unparseable_names: usize,
    pub non_daod: usize,
    pub train: usize,
    pub test: usize,
}

fn is_job_table(path: &Path) -> Result<bool, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Runtime(format!("cannot open trace {}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    let names: Vec<&str> = first.trim_end().split(',').map(str::trim).collect();
    Ok(names.len() == JOB_SCHEMA.len() && JOB_SCHEMA.iter().zip(&names).all(|(s, n)| s.name == *n))
}

/// Reads a raw trace (or an already-derived job table), filters to DAOD
/// jobs, derives workloads and writes the train/test split.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<Funnel, CliError> {
    let trace = cfg.trace.as_deref().ok_or_else(|| CliError::Usage("ingest needs --trace or `trace` in the config".into()))?;
    let _lock = WorkdirLock::acquire(&cfg.workdir)?;
    echo_config(cfg, "ingest")?;
    let (table, mut funnel) = if is_job_table(trace)? {
        let t = read_table(trace)?;
        let n = t.len();
        let stages = vec![Stage { stage: "read", rows: n }, Stage { stage: "parsed", rows: n }];
        (t, Funnel { source: "table", stages, malformed: 0, unparseable_names: 0, non_daod: 0, train: 0, test: 0 })
    } else {
        let cat_path = cfg
            .catalog
            .as_deref()
            .ok_or_else(|| CliError::Usage("a raw trace needs --catalog or `catalog` in the config".into()))?;
        let cat_text = std::fs::read_to_string(cat_path)
            .map_err(|e| CliError::Runtime(format!("cannot read catalog {}: {e}", cat_path.display())))?;
        let catalog = SiteCatalog::from_json(&cat_text)?;
        let opts = ParseOptions { format: TraceFormat::from_path(trace), malformed_tolerance: cfg.malformed_tolerance };
        let f = std::fs::File::open(trace).map_err(|e| CliError::Runtime(format!("cannot open trace {}: {e}", trace.display())))?;
        let parsed = parse_records(BufReader::new(f), opts)?;
        if let Some(first) = &parsed.first_malformed {
            eprintln!("warning: skipped {} malformed rows (first: {first})", parsed.malformed);
        }
        let n_parsed = parsed.records.len();
        let (kept, report) = filter_daod(parsed.records);
        let table = build_job_table(&kept, &catalog)?;
        let stages = vec![
            Stage { stage: "read", rows: parsed.total_rows },
            Stage { stage: "parsed", rows: n_parsed },
            Stage { stage: "daod", rows: report.output },
            Stage { stage: "derived", rows: table.len() },
        ];
        let funnel = Funnel {
            source: "raw",
            stages,
            malformed: parsed.malformed,
            unparseable_names: report.unparseable,
            non_daod: report.non_daod,
            train: 0,
            test: 0,
        };
        (table, funnel)
    };
    let (train, test) = if table.is_empty() {
        eprintln!("warning: no DAOD jobs in {}; writing empty train and test tables", trace.display());
        (JobTable::default(), JobTable::default())
    } else {
        split_train_test(&table, cfg.split_fraction, cfg.split_seed)?
    };
    funnel.train = train.len();
    funnel.test = test.len();
    write_atomic(&cfg.workdir.join(TRAIN_CSV), &table_bytes(&train)?)?;
    write_atomic(&cfg.workdir.join(TEST_CSV), &table_bytes(&test)?)?;
    write_atomic(&cfg.workdir.join(FUNNEL_JSON), &json_bytes(&funnel))?;
    eprintln!("ingested {} jobs: {} train, {} test", table.len(), funnel.train, funnel.test);
    Ok(funnel)
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct SmoteMeta {
    k: usize,
    rows: usize,
    cols: usize,
}

/// Fits the encoder on `train.csv` and trains the configured generator.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let _lock = WorkdirLock::acquire(&cfg.workdir)?;
    echo_config(cfg, "train")?;
    let train = read_table(&cfg.workdir.join(TRAIN_CSV))?;
    if train.is_empty() {
        return Err(CliError::Runtime("train.csv has no rows".into()));
    }
    let encoder = TableEncoder::fit_table(&train, EncoderOptions::default())?;
    let encoded = encoder.encode_table(&train)?;
    write_atomic(&cfg.workdir.join(ENCODER_JSON), encoder.to_json()?.as_bytes())?;
    match cfg.model {
        ModelKind::Smote => {
            let model = SmoteModel::fit(&encoded, cfg.smote_k)?;
            let mut buf = Vec::new();
            write_matrix(model.training_matrix(), &mut buf)?;
            write_atomic(&cfg.workdir.join(SMOTE_BIN), &buf)?;
            let meta = SmoteMeta { k: model.k(), rows: encoded.nrows(), cols: encoded.ncols() };
            write_atomic(&cfg.workdir.join(SMOTE_JSON), &json_bytes(&meta))?;
            eprintln!("smote: indexed {} rows x {} columns, k = {}", meta.rows, meta.cols, meta.k);
        }
        ModelKind::Ddpm => {
            let every = (cfg.ddpm.steps / 10).max(1);
            let model = train_with_progress(&encoded, &cfg.ddpm, |step, loss| {
                if (step + 1) % every == 0 {
                    eprintln!("ddpm step {}/{}: loss {:.5}", step + 1, cfg.ddpm.steps, loss.total());
                }
            })?;
            let mut buf = Vec::new();
            model.write_checkpoint(&mut buf)?;
            write_atomic(&cfg.workdir.join(DDPM_BIN), &buf)?;
            write_atomic(&cfg.workdir.join(DDPM_LOG_JSON), &json_bytes(&model.training_log()))?;
        }
    }
    Ok(())
}

fn load_encoder(workdir: &Path) -> Result<TableEncoder, CliError> {
    let path = workdir.join(ENCODER_JSON);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Runtime(format!("cannot read {} (run `train` first): {e}", path.display())))?;
    Ok(TableEncoder::from_json(&text)?)
}

fn open_artifact(path: &Path) -> Result<BufReader<std::fs::File>, CliError> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("cannot open {} (run `train` first): {e}", path.display())))
}

/// Samples `n` rows from the trained generator and decodes them to a job
/// table.
pub fn cmd_generate(cfg: &PipelineConfig, out: Option<&Path>) -> Result<JobTable, CliError> {
    let _lock = WorkdirLock::acquire(&cfg.workdir)?;
    echo_config(cfg, "generate")?;
    let encoder = load_encoder(&cfg.workdir)?;
    let n = match cfg.generate_n {
        Some(n) => n,
        None => read_table(&cfg.workdir.join(TRAIN_CSV))?.len(),
    };
    let sample: EncodedMatrix = match cfg.model {
        ModelKind::Smote => {
            let meta: SmoteMeta = serde_json::from_reader(open_artifact(&cfg.workdir.join(SMOTE_JSON))?)
                .map_err(|e| CliError::Runtime(format!("bad {SMOTE_JSON}: {e}")))?;
            let data = read_matrix(open_artifact(&cfg.workdir.join(SMOTE_BIN))?)?;
            if data.dim() != (meta.rows, meta.cols) {
                return Err(CliError::Runtime(format!("{SMOTE_BIN} does not match {SMOTE_JSON}")));
            }
            let encoded = EncodedMatrix::new(data, encoder.layout.clone())?;
            SmoteModel::fit(&encoded, meta.k)?.sample(n, cfg.generate_seed)?
        }
        ModelKind::Ddpm => {
            let model = DiffusionModel::read_checkpoint(open_artifact(&cfg.workdir.join(DDPM_BIN))?, &encoder.layout)?;
            model.sample(n, cfg.generate_seed)?
        }
    };
    let table = encoder.decode_table(&sample)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.workdir.join(SYNTH_CSV));
    write_atomic(&path, &table_bytes(&table)?)?;
    eprintln!("wrote {} {} rows to {}", table.len(), cfg.model.name(), path.display());
    Ok(table)
}

pub const SUMMARY_HEADER: &str = "WD\tJSD\tdiff-CORR\tDCR\tdiff-MLEF";

/// Scores `synth.csv` (or `synth`) against the train/test split, writes the
/// report and returns the summary row.
pub fn cmd_evaluate(cfg: &PipelineConfig, synth: Option<&Path>, out: Option<&Path>) -> Result<String, CliError> {
    let _lock = WorkdirLock::acquire(&cfg.workdir)?;
    echo_config(cfg, "evaluate")?;
    let synth_path = synth.map(Path::to_path_buf).unwrap_or_else(|| cfg.workdir.join(SYNTH_CSV));
    let synth = read_table(&synth_path)?;
    let train = read_table(&cfg.workdir.join(TRAIN_CSV))?;
    let test = read_table(&cfg.workdir.join(TEST_CSV))?;
    let report = evaluate(&train, &synth, &test, &EvalConfig { gbdt: cfg.gbdt })?;
    for flag in &report.flags {
        eprintln!("note: {flag}");
    }
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.workdir.join(REPORT_JSON));
    let mut json = report.to_json()?;
    json.push('\n');
    write_atomic(&path, json.as_bytes())?;
    Ok(report.summary_row())
}
