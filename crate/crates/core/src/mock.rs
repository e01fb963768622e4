//! Seeded mock job corpus with a documented joint structure.
//!
//! The generator stands in for a private production trace. Every feature
//! has a closed-form marginal (see [`MockProfile::numeric_cdf`] and
//! [`MockProfile::category_probs`]) and the log-workload is
//!
//! ```text
//! ln(workload) = site_offset + datatype_offset + files_exponent * ln(nfiles) + noise_sigma * Z
//! ```
//!
//! so a regressor that sees `(computingsite, datatype, nfiles)` has a Bayes
//! floor of `noise_sigma^2` on the log target.
//!
//! Structure:
//! - creation times follow a rate `1 + a_w sin(2πu/7) + a_d sin(2πu) + a_s sin(2πu/L)`
//!   over a window of `L` days,
//! - `prodstep` depends on `project`, `jobstatus` on `computingsite`,
//! - `nfiles` is `min(1 + Geometric, max_files)` with a datatype-specific mean,
//! - `size` is `nfiles` times a lognormal per-file size with a datatype-specific location.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RawJobRecord, SiteCatalog};
use crate::stats::normal_cdf;
use crate::table::{JobRecord, JobTable};

const DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteProfile {
    pub name: String,
    pub weight: f64,
    pub log_offset: f64,
    /// Gflop per core-second, written to the site catalog of raw traces.
    pub rate: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectProfile {
    pub name: String,
    pub weight: f64,
    /// Aligned with [`MockProfile::prodsteps`].
    pub prodstep_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatatypeProfile {
    pub name: String,
    pub weight: f64,
    pub mean_files: f64,
    pub log_file_bytes: f64,
    pub log_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockProfile {
    pub start_epoch: i64,
    pub window_days: f64,
    pub weekly_amplitude: f64,
    pub daily_amplitude: f64,
    pub seasonal_amplitude: f64,
    pub sites: Vec<SiteProfile>,
    pub projects: Vec<ProjectProfile>,
    pub prodsteps: Vec<String>,
    pub datatypes: Vec<DatatypeProfile>,
    /// `finished, failed, cancelled, closed`; failed comes from the site.
    pub statuses: Vec<String>,
    pub cancelled_rate: f64,
    pub closed_rate: f64,
    pub max_files: u64,
    pub file_size_sigma: f64,
    pub files_exponent: f64,
    pub noise_sigma: f64,
}

const SITES: [&str; 20] = [
    "BNL",
    "CERN-PROD",
    "TRIUMF",
    "FZK-LCG2",
    "IN2P3-CC",
    "INFN-T1",
    "NDGF-T1",
    "RAL-LCG2",
    "SARA-MATRIX",
    "TOKYO-LCG2",
    "AGLT2",
    "MWT2",
    "SWT2_CPB",
    "NET2",
    "DESY-HH",
    "PIC",
    "TAIWAN-LCG2",
    "IFIC-LCG2",
    "LRZ-LMU",
    "UKI-NORTHGRID-MAN-HEP",
];

impl Default for MockProfile {
    fn default() -> Self {
        let sites = SITES
            .iter()
            .enumerate()
            .map(|(i, name)| SiteProfile {
                name: name.to_string(),
                weight: 1.0 / (i as f64 + 1.0),
                log_offset: 0.6 * ((i * 7 % 20) as f64 / 19.0 * 2.0 - 1.0),
                rate: 8.0 + (i * 3 % 11) as f64,
                failure_rate: 0.06 + 0.04 * (i % 4) as f64,
            })
            .collect();
        let mc = [0.85, 0.10, 0.05];
        let data = [0.70, 0.20, 0.10];
        let projects = [
            ("mc23_13p6TeV", 0.22, mc),
            ("mc20_13TeV", 0.20, mc),
            ("data22_13p6TeV", 0.12, data),
            ("data18_13TeV", 0.10, data),
            ("data17_13TeV", 0.08, data),
            ("data16_13TeV", 0.07, data),
            ("data15_13TeV", 0.05, data),
            ("mc21_13p6TeV", 0.06, mc),
            ("data23_13p6TeV", 0.06, data),
            ("mc16_13TeV", 0.04, mc),
        ]
        .into_iter()
        .map(|(name, weight, w)| ProjectProfile { name: name.into(), weight, prodstep_weights: w.to_vec() })
        .collect();
        let datatypes = [
            ("DAOD_PHYS", 0.35, 12.0, 21.5, 10.5),
            ("DAOD_PHYSLITE", 0.25, 6.0, 20.3, 8.0),
            ("DAOD_LLP1", 0.10, 25.0, 21.8, 12.5),
            ("DAOD_FTAG1", 0.08, 8.0, 21.0, 9.5),
            ("DAOD_JETM1", 0.07, 15.0, 21.2, 11.0),
            ("DAOD_EGAM1", 0.06, 4.0, 20.8, 9.0),
            ("DAOD_MUON1", 0.05, 3.0, 20.6, 8.5),
            ("DAOD_TOPQ1", 0.04, 40.0, 21.4, 11.5),
        ]
        .into_iter()
        .map(|(name, weight, mean_files, log_file_bytes, log_offset)| DatatypeProfile {
            name: name.into(),
            weight,
            mean_files,
            log_file_bytes,
            log_offset,
        })
        .collect();
        Self {
            start_epoch: 1_672_531_200,
            window_days: 150.0,
            weekly_amplitude: 0.35,
            daily_amplitude: 0.25,
            seasonal_amplitude: 0.2,
            sites,
            projects,
            prodsteps: vec!["deriv".into(), "merge".into(), "recon".into()],
            datatypes,
            statuses: ["finished", "failed", "cancelled", "closed"].map(String::from).to_vec(),
            cancelled_rate: 0.04,
            closed_rate: 0.02,
            max_files: 500,
            file_size_sigma: 0.5,
            files_exponent: 0.8,
            noise_sigma: 0.3,
        }
    }
}

/// Normalized probabilities from non-negative weights.
fn normalize(w: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let w: Vec<f64> = w.into_iter().collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

impl MockProfile {
    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("mock profile: {m}")));
        if self.sites.is_empty() || self.projects.is_empty() || self.datatypes.is_empty() {
            return bad("sites, projects and datatypes must be non-empty");
        }
        if self.statuses.len() != 4 {
            return bad("exactly four job statuses expected");
        }
        if self.projects.iter().any(|p| p.prodstep_weights.len() != self.prodsteps.len()) {
            return bad("prodstep weights must align with prodsteps");
        }
        if self.datatypes.iter().any(|d| !d.name.starts_with("DAOD") || d.mean_files < 1.0) {
            return bad("datatypes must start with DAOD and have mean_files >= 1");
        }
        let amp = self.weekly_amplitude.abs() + self.daily_amplitude.abs() + self.seasonal_amplitude.abs();
        if amp >= 1.0 || self.window_days <= 0.0 {
            return bad("creation rate must stay positive over a positive window");
        }
        if self.noise_sigma < 0.0 || self.file_size_sigma <= 0.0 || self.max_files < 1 {
            return bad("sigmas must be non-negative and max_files >= 1");
        }
        for s in &self.sites {
            let p_fin = 1.0 - s.failure_rate - self.cancelled_rate - self.closed_rate;
            if s.rate <= 0.0 || s.failure_rate < 0.0 || p_fin < 0.0 {
                return bad("site rates positive and status probabilities valid");
            }
        }
        Ok(())
    }

    fn status_weights(&self, site: &SiteProfile) -> [f64; 4] {
        let fin = 1.0 - site.failure_rate - self.cancelled_rate - self.closed_rate;
        [fin, site.failure_rate, self.cancelled_rate, self.closed_rate]
    }

    fn creation_rate(&self, day: f64) -> f64 {
        1.0 + self.weekly_amplitude * (2.0 * PI * day / 7.0).sin()
            + self.daily_amplitude * (2.0 * PI * day).sin()
            + self.seasonal_amplitude * (2.0 * PI * day / self.window_days).sin()
    }

    /// Integral of the creation rate from 0 to `day`.
    fn creation_mass(&self, day: f64) -> f64 {
        let term = |amp: f64, period: f64| amp * period / (2.0 * PI) * (1.0 - (2.0 * PI * day / period).cos());
        day + term(self.weekly_amplitude, 7.0) + term(self.daily_amplitude, 1.0)
            + term(self.seasonal_amplitude, self.window_days)
    }

    /// The deterministic part of `ln(workload)`.
    pub fn log_workload_mean(&self, site: usize, datatype: usize, nfiles: u64) -> f64 {
        self.sites[site].log_offset + self.datatypes[datatype].log_offset + self.files_exponent * (nfiles as f64).ln()
    }

    fn files_pmf(&self, datatype: usize) -> Vec<f64> {
        let p = 1.0 / self.datatypes[datatype].mean_files;
        let mut pmf = Vec::with_capacity(self.max_files as usize);
        let mut tail = 1.0;
        for _ in 1..self.max_files {
            let mass = tail * p;
            pmf.push(mass);
            tail -= mass;
        }
        pmf.push(tail);
        pmf
    }

    /// Closed-form marginal CDF of a numeric feature.
    pub fn numeric_cdf(&self, feature: &str, x: f64) -> Result<f64> {
        let dt_p = normalize(self.datatypes.iter().map(|d| d.weight));
        Ok(match feature {
            "creationtime" => {
                let day = ((x + 1.0 - self.start_epoch as f64) / DAY).clamp(0.0, self.window_days);
                self.creation_mass(day) / self.creation_mass(self.window_days)
            }
            "nfiles" => {
                let k = x.floor();
                if k < 1.0 {
                    0.0
                } else if k >= self.max_files as f64 {
                    1.0
                } else {
                    dt_p.iter()
                        .zip(&self.datatypes)
                        .map(|(w, d)| w * (1.0 - (1.0 - 1.0 / d.mean_files).powf(k)))
                        .sum()
                }
            }
            "size" => {
                if x <= 0.0 {
                    return Ok(0.0);
                }
                let mut acc = 0.0;
                for (d, (w, dt)) in dt_p.iter().zip(&self.datatypes).enumerate() {
                    for (k, pk) in self.files_pmf(d).iter().enumerate() {
                        let z = ((x / (k + 1) as f64).ln() - dt.log_file_bytes) / self.file_size_sigma;
                        acc += w * pk * normal_cdf(z);
                    }
                }
                acc
            }
            "workload" => {
                if x <= 0.0 {
                    return Ok(0.0);
                }
                let y = x.ln();
                let site_p = normalize(self.sites.iter().map(|s| s.weight));
                let mut acc = 0.0;
                for (d, w) in dt_p.iter().enumerate() {
                    let pmf = self.files_pmf(d);
                    for (s, ws) in site_p.iter().enumerate() {
                        for (k, pk) in pmf.iter().enumerate() {
                            let mu = self.log_workload_mean(s, d, k as u64 + 1);
                            let c = if self.noise_sigma > 0.0 {
                                normal_cdf((y - mu) / self.noise_sigma)
                            } else if y >= mu {
                                1.0
                            } else {
                                0.0
                            };
                            acc += w * ws * pk * c;
                        }
                    }
                }
                acc
            }
            other => return Err(Error::Schema(format!("`{other}` is not a numeric mock feature"))),
        })
    }

    /// Closed-form marginal probabilities of a categorical feature.
    pub fn category_probs(&self, feature: &str) -> Result<Vec<(String, f64)>> {
        let site_p = normalize(self.sites.iter().map(|s| s.weight));
        let proj_p = normalize(self.projects.iter().map(|p| p.weight));
        Ok(match feature {
            "computingsite" => self.sites.iter().map(|s| s.name.clone()).zip(site_p).collect(),
            "project" => self.projects.iter().map(|p| p.name.clone()).zip(proj_p).collect(),
            "datatype" => self
                .datatypes
                .iter()
                .map(|d| d.name.clone())
                .zip(normalize(self.datatypes.iter().map(|d| d.weight)))
                .collect(),
            "prodstep" => {
                let mut acc = vec![0.0; self.prodsteps.len()];
                for (p, wp) in self.projects.iter().zip(&proj_p) {
                    for (a, w) in acc.iter_mut().zip(normalize(p.prodstep_weights.iter().copied())) {
                        *a += wp * w;
                    }
                }
                self.prodsteps.iter().cloned().zip(acc).collect()
            }
            "jobstatus" => {
                let mut acc = [0.0; 4];
                for (s, ws) in self.sites.iter().zip(&site_p) {
                    for (a, w) in acc.iter_mut().zip(self.status_weights(s)) {
                        *a += ws * w;
                    }
                }
                self.statuses.iter().cloned().zip(acc).collect()
            }
            other => return Err(Error::Schema(format!("`{other}` is not a categorical mock feature"))),
        })
    }
}

/// Generated rows plus the indices behind each categorical draw, useful
/// when reconstructing the deterministic part of the workload.
struct Draw {
    record: JobRecord,
    site: usize,
}

fn draw_rows(profile: &MockProfile, n: usize, seed: u64) -> Result<Vec<Draw>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = |w: Vec<f64>| WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(e.to_string()));
    let site_d = weights(profile.sites.iter().map(|s| s.weight).collect())?;
    let proj_d = weights(profile.projects.iter().map(|p| p.weight).collect())?;
    let dt_d = weights(profile.datatypes.iter().map(|d| d.weight).collect())?;
    let step_d = profile
        .projects
        .iter()
        .map(|p| weights(p.prodstep_weights.clone()))
        .collect::<Result<Vec<_>>>()?;
    let status_d = profile
        .sites
        .iter()
        .map(|s| weights(profile.status_weights(s).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let files_d = profile
        .datatypes
        .iter()
        .map(|d| Geometric::new(1.0 / d.mean_files).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let peak = 1.0 + profile.weekly_amplitude.abs() + profile.daily_amplitude.abs() + profile.seasonal_amplitude.abs();

    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let day = loop {
            let u = rng.random::<f64>() * profile.window_days;
            if rng.random::<f64>() * peak < profile.creation_rate(u) {
                break u;
            }
        };
        let site = site_d.sample(&mut rng);
        let proj = proj_d.sample(&mut rng);
        let step = step_d[proj].sample(&mut rng);
        let dt = dt_d.sample(&mut rng);
        let status = status_d[site].sample(&mut rng);
        let nfiles = (1 + files_d[dt].sample(&mut rng)).min(profile.max_files);
        let z_size: f64 = rng.sample(StandardNormal);
        let z_work: f64 = rng.sample(StandardNormal);
        let per_file = (profile.datatypes[dt].log_file_bytes + profile.file_size_sigma * z_size).exp();
        let log_w = profile.log_workload_mean(site, dt, nfiles) + profile.noise_sigma * z_work;
        rows.push(Draw {
            record: JobRecord {
                creationtime: profile.start_epoch + (day * DAY).floor() as i64,
                computingsite: profile.sites[site].name.clone(),
                project: profile.projects[proj].name.clone(),
                prodstep: profile.prodsteps[step].clone(),
                datatype: profile.datatypes[dt].name.clone(),
                jobstatus: profile.statuses[status].clone(),
                nfiles,
                size: (nfiles as f64 * per_file).round() as u64,
                workload: log_w.exp(),
            },
            site,
        });
    }
    Ok(rows)
}

/// Seeded mock job table with the job schema.
pub fn generate_mock_table(profile: &MockProfile, n: usize, seed: u64) -> Result<JobTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("mock table needs n >= 1".into()));
    }
    Ok(JobTable::new(draw_rows(profile, n, seed)?.into_iter().map(|d| d.record).collect()))
}

const SAMPLES: [&str; 4] = ["PhPy8EG_A14_ttbar", "Sh_2214_Zee", "physics_Main", "MGPy8EG_ttW"];
const OTHER_TYPES: [&str; 3] = ["AOD", "EVNT", "HITS"];

/// A raw trace whose DAOD rows reproduce [`generate_mock_table`] with the
/// same arguments after ingestion, plus non-DAOD rows for the filter to
/// remove (about 5%), and the site catalog needed to derive workloads.
pub fn generate_mock_trace(profile: &MockProfile, n: usize, seed: u64) -> Result<(Vec<RawJobRecord>, SiteCatalog)> {
    if n == 0 {
        return Err(Error::InvalidArgument("mock trace needs n >= 1".into()));
    }
    let rows = draw_rows(profile, n, seed)?;
    let catalog = SiteCatalog::new(
        profile.sites.iter().map(|s| (s.name.clone(), s.rate)).collect(),
        1.0,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_7774_7261_6365);
    let mut out = Vec::with_capacity(n + n / 19 + 1);
    for d in rows {
        let r = d.record;
        let cores: u32 = if rng.random::<f64>() < 0.7 { 8 } else { 1 };
        let rate = profile.sites[d.site].rate;
        let tag = format!("e{}_s{}_p{}", rng.random_range(8000..9000), rng.random_range(3000..4500), rng.random_range(5000..6100));
        let sample = SAMPLES[rng.random_range(0..SAMPLES.len())];
        let dsid = rng.random_range(100_000..999_999);
        let raw = RawJobRecord {
            creation_time: r.creationtime,
            computing_site: r.computingsite.clone(),
            dataset_name: format!("{}.{dsid}.{sample}.{}.{}.{tag}", r.project, r.prodstep, r.datatype),
            n_input_files: r.nfiles,
            input_file_bytes: r.size,
            job_status: r.jobstatus.clone(),
            n_cores: cores,
            cpu_time: r.workload / (f64::from(cores) * rate),
        };
        if rng.random::<f64>() < 0.05 {
            let mut other = raw.clone();
            let kind = OTHER_TYPES[rng.random_range(0..OTHER_TYPES.len())];
            other.dataset_name = format!("{}.{dsid}.{sample}.recon.{kind}.{tag}", r.project);
            out.push(other);
        }
        out.push(raw);
    }
    Ok((out, catalog))
}

/// Write a raw trace as CSV with the ingest column names.
pub fn write_trace_csv<W: std::io::Write>(records: &[RawJobRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(crate::ingest::RAW_COLUMNS)?;
    for r in records {
        w.write_record([
            r.creation_time.to_string(),
            r.computing_site.clone(),
            r.dataset_name.clone(),
            r.n_input_files.to_string(),
            r.input_file_bytes.to_string(),
            r.job_status.clone(),
            r.n_cores.to_string(),
            format!("{:.16e}", r.cpu_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_job_table, filter_daod, parse_records, ParseOptions};

    #[test]
    fn deterministic_for_seed() {
        let p = MockProfile::default();
        let a = generate_mock_table(&p, 1000, 11).unwrap();
        let b = generate_mock_table(&p, 1000, 11).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_ne!(a, generate_mock_table(&p, 1000, 12).unwrap());
    }

    #[test]
    fn zero_n_is_rejected() {
        assert!(generate_mock_table(&MockProfile::default(), 0, 1).is_err());
    }

    #[test]
    fn noiseless_workload_is_reconstructable() {
        let p = MockProfile::default().with_noise(0.0);
        let t = generate_mock_table(&p, 500, 3).unwrap();
        for r in &t.records {
            let s = p.sites.iter().position(|s| s.name == r.computingsite).unwrap();
            let d = p.datatypes.iter().position(|d| d.name == r.datatype).unwrap();
            let expect = p.log_workload_mean(s, d, r.nfiles);
            assert!((r.workload.ln() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn schema_and_vocabulary_sizes() {
        let t = generate_mock_table(&MockProfile::default(), 5000, 5).unwrap();
        let distinct = |f: fn(&JobRecord) -> &str| {
            t.records.iter().map(f).collect::<std::collections::BTreeSet<_>>().len()
        };
        assert_eq!(distinct(|r| &r.jobstatus), 4);
        assert_eq!(distinct(|r| &r.prodstep), 3);
        assert_eq!(distinct(|r| &r.datatype), 8);
        assert!(t.records.iter().all(|r| r.datatype.starts_with("DAOD") && r.workload > 0.0 && r.nfiles >= 1));
    }

    #[test]
    fn category_probs_sum_to_one() {
        let p = MockProfile::default();
        for f in ["computingsite", "project", "prodstep", "datatype", "jobstatus"] {
            let s: f64 = p.category_probs(f).unwrap().iter().map(|(_, q)| q).sum();
            assert!((s - 1.0).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn numeric_cdfs_reach_one() {
        let p = MockProfile::default();
        assert!((p.numeric_cdf("nfiles", 1e9).unwrap() - 1.0).abs() < 1e-12);
        assert!((p.numeric_cdf("creationtime", 1e12).unwrap() - 1.0).abs() < 1e-12);
        assert!((p.numeric_cdf("size", 1e16).unwrap() - 1.0).abs() < 1e-9);
        assert!((p.numeric_cdf("workload", 1e12).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(p.numeric_cdf("workload", 0.0).unwrap(), 0.0);
    }

    #[test]
    fn trace_ingests_back_to_table() {
        let p = MockProfile::default();
        let table = generate_mock_table(&p, 400, 9).unwrap();
        let (trace, catalog) = generate_mock_trace(&p, 400, 9).unwrap();
        assert!(trace.len() > 400);
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let parsed = parse_records(&buf[..], ParseOptions::default()).unwrap();
        assert_eq!(parsed.malformed, 0);
        let (kept, report) = filter_daod(parsed.records);
        assert_eq!(report.output, 400);
        let rebuilt = build_job_table(&kept, &catalog).unwrap();
        for (a, b) in rebuilt.records.iter().zip(&table.records) {
            assert_eq!((&a.computingsite, &a.datatype, a.nfiles, a.size), (&b.computingsite, &b.datatype, b.nfiles, b.size));
            assert!((a.workload - b.workload).abs() <= 1e-12 * b.workload);
        }
    }
}
