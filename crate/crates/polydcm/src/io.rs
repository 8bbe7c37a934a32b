//! File formats: Q-matrix and response CSVs, levels sidecar, membership
//! matrix export, ground-truth and summary JSONs, recovery tables, and the
//! run manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribute::{Flavor, GMatrix, QMatrix};
use crate::error::{Error, Result};
use crate::gibbs::GibbsRun;
use crate::metrics::RecoveryReport;
use crate::priors::PriorScheme;
use crate::responses::Responses;
use crate::sim::SimTruth;
use crate::vb::{FitReport, Init};

/// Canonical profile order used by every index in the output files.
pub const PROFILE_ORDER: &str = "lexicographic, last attribute fastest";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    Error::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

/// Writes `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| json_err(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))
}

// ---------------------------------------------------------------------
// Q-matrix CSV + levels sidecar

#[derive(Serialize, Deserialize)]
struct LevelsFile {
    levels: Vec<u8>,
}

/// Writes the level counts sidecar: `{"levels": [...]}`.
pub fn write_levels_json(path: &Path, levels: &[u8]) -> Result<()> {
    write_json_atomic(
        path,
        &LevelsFile {
            levels: levels.to_vec(),
        },
    )
}

pub fn read_levels_json(path: &Path) -> Result<Vec<u8>> {
    Ok(read_json::<LevelsFile>(path)?.levels)
}

/// Writes a Q-matrix as CSV with header `k1..kK`.
pub fn write_qmatrix_csv(path: &Path, q: &QMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = (1..=q.n_attrs()).map(|k| format!("k{k}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in q.rows() {
        let record: Vec<String> = row.iter().map(|e| e.to_string()).collect();
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a Q-matrix CSV together with its levels sidecar.
pub fn read_qmatrix(csv_path: &Path, levels_path: &Path) -> Result<QMatrix> {
    let levels = read_levels_json(levels_path)?;
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_err(csv_path, e))?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(csv_path, e))?;
        let row: Vec<u8> = record
            .iter()
            .map(|f| {
                f.trim().parse::<u8>().map_err(|_| Error::Csv {
                    path: csv_path.display().to_string(),
                    message: format!("non-integer Q-matrix entry \"{f}\""),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    QMatrix::new(rows, levels)
}

// ---------------------------------------------------------------------
// Response CSV

/// Writes responses as CSV with header `x1..xJ`.
pub fn write_responses_csv(path: &Path, x: &Responses) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = (1..=x.n_items()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..x.n_examinees() {
        let record: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a response CSV; a leading `id` column is skipped.
pub fn read_responses_csv(path: &Path) -> Result<Responses> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let skip_id = headers
        .get(0)
        .map(|h| h.trim().eq_ignore_ascii_case("id"))
        .unwrap_or(false);
    let offset = usize::from(skip_id);
    let n_items = headers.len() - offset;
    let mut data = Vec::new();
    let mut n = 0usize;
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                path: path.display().to_string(),
                message: format!("row {} has {} fields, expected {}", n + 1, record.len(), headers.len()),
            });
        }
        for f in record.iter().skip(offset) {
            let v: u8 = f.trim().parse().map_err(|_| Error::Csv {
                path: path.display().to_string(),
                message: format!("non-integer response entry \"{f}\""),
            })?;
            data.push(v);
        }
        n += 1;
    }
    Responses::new(n, n_items, data)
}

// ---------------------------------------------------------------------
// Membership matrix export

/// Writes one item's membership matrix: pattern columns, then one
/// indicator column per global profile.
pub fn write_gmatrix_csv(path: &Path, g: &GMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let k_star = g.patterns.first().map_or(0, |p| p.len());
    let n_profiles = g.pattern_of.len();
    let mut header: Vec<String> = (1..=k_star).map(|k| format!("a{k}")).collect();
    header.extend((1..=n_profiles).map(|l| format!("g{l}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (p, pattern) in g.patterns.iter().enumerate() {
        let mut record: Vec<String> = pattern.iter().map(|a| a.to_string()).collect();
        record.extend(g.dense[p].iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// Ground truth JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub levels: Vec<u8>,
    pub flavor: Flavor,
    pub profile_order: String,
    pub qmatrix: Vec<Vec<u8>>,
    pub theta_true: Vec<Vec<f64>>,
    pub pi_true: Vec<f64>,
    pub profiles_true: Vec<usize>,
    pub truth_mc_draws: u64,
}

pub fn write_truth_json(path: &Path, truth: &SimTruth, mc_draws: u64) -> Result<()> {
    let file = TruthFile {
        levels: truth.qmatrix.levels().to_vec(),
        flavor: truth.flavor,
        profile_order: PROFILE_ORDER.to_string(),
        qmatrix: truth.qmatrix.rows().map(|r| r.to_vec()).collect(),
        theta_true: truth.theta_true.clone(),
        pi_true: truth.pi_true.clone(),
        profiles_true: truth.profiles_true.clone(),
        truth_mc_draws: mc_draws,
    };
    write_json_atomic(path, &file)
}

pub fn read_truth_json(path: &Path) -> Result<TruthFile> {
    read_json(path)
}

// ---------------------------------------------------------------------
// Estimation config JSON

/// On-disk estimation settings; every field optional so flags can fill
/// the gaps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub cores: Option<usize>,
    pub init: Option<Init>,
    pub prior_scheme: Option<PriorScheme>,
    pub flavor: Option<Flavor>,
}

pub fn read_config_json(path: &Path) -> Result<FileConfig> {
    read_json(path)
}

// ---------------------------------------------------------------------
// Posterior summary JSON (shared by the variational fit and the sampler)

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemPosterior {
    pub item: usize,
    pub patterns: Vec<Vec<u8>>,
    pub eap: Vec<f64>,
    pub sd: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub tool_version: String,
    pub method: String,
    pub flavor: Flavor,
    pub levels: Vec<u8>,
    pub profile_order: String,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub items: Vec<ItemPosterior>,
    pub pi_eap: Vec<f64>,
    pub pi_sd: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_rhat: Option<Vec<f64>>,
    /// Per-examinee profile assignment (posterior mode).
    pub profiles: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vlb_trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_star: Option<Vec<f64>>,
}

impl SummaryFile {
    pub fn from_fit(report: &FitReport, gms: &[GMatrix], flavor: Flavor, levels: &[u8]) -> Self {
        SummaryFile {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            method: "vb".into(),
            flavor,
            levels: levels.to_vec(),
            profile_order: PROFILE_ORDER.to_string(),
            converged: report.converged,
            iterations: report.iterations,
            wall_time_s: report.wall_time,
            items: gms
                .iter()
                .enumerate()
                .map(|(j, g)| ItemPosterior {
                    item: j + 1,
                    patterns: g.patterns.clone(),
                    eap: report.eap_theta[j].clone(),
                    sd: report.sd_theta[j].clone(),
                    rhat: None,
                })
                .collect(),
            pi_eap: report.eap_pi.clone(),
            pi_sd: report.sd_pi.clone(),
            pi_rhat: None,
            profiles: report.map_profiles.clone(),
            vlb_trace: Some(report.state.vlb_trace.clone()),
            delta_star: Some(report.state.delta_star.clone()),
        }
    }

    pub fn from_gibbs(
        run: &GibbsRun,
        gms: &[GMatrix],
        flavor: Flavor,
        levels: &[u8],
        converged: bool,
        iterations: usize,
    ) -> Self {
        let s = &run.summary;
        SummaryFile {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            method: "gibbs".into(),
            flavor,
            levels: levels.to_vec(),
            profile_order: PROFILE_ORDER.to_string(),
            converged,
            iterations,
            wall_time_s: s.wall_time,
            items: gms
                .iter()
                .enumerate()
                .map(|(j, g)| ItemPosterior {
                    item: j + 1,
                    patterns: g.patterns.clone(),
                    eap: s.theta_eap[j].clone(),
                    sd: s.theta_sd[j].clone(),
                    rhat: Some(s.theta_rhat[j].clone()),
                })
                .collect(),
            pi_eap: s.pi_eap.clone(),
            pi_sd: s.pi_sd.clone(),
            pi_rhat: Some(s.pi_rhat.clone()),
            profiles: s.profile_modes.clone(),
            vlb_trace: None,
            delta_star: None,
        }
    }
}

pub fn write_summary_json(path: &Path, summary: &SummaryFile) -> Result<()> {
    write_json_atomic(path, summary)
}

pub fn read_summary_json(path: &Path) -> Result<SummaryFile> {
    read_json(path)
}

// ---------------------------------------------------------------------
// Wide per-item probability table ("EAP (SD)" per pattern)

fn pattern_label(pattern: &[u8]) -> String {
    pattern.iter().map(|a| a.to_string()).collect()
}

/// Writes the per-item posterior table: one row per item, one `P(pattern)`
/// column pair per item pattern, cells formatted `EAP (SD)`.
pub fn write_theta_table_csv(path: &Path, items: &[ItemPosterior]) -> Result<()> {
    let max_patterns = items.iter().map(|i| i.patterns.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["item".to_string()];
    header.extend((1..=max_patterns).map(|p| format!("p{p}")));
    header.extend((1..=max_patterns).map(|p| format!("pattern{p}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for item in items {
        let mut record = vec![item.item.to_string()];
        for p in 0..max_patterns {
            if p < item.patterns.len() {
                record.push(format!("{:.4} ({:.4})", item.eap[p], item.sd[p]));
            } else {
                record.push(String::new());
            }
        }
        for p in 0..max_patterns {
            if p < item.patterns.len() {
                record.push(pattern_label(&item.patterns[p]));
            } else {
                record.push(String::new());
            }
        }
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// Raw draw dumps

/// Writes kept sampler draws, one file per parameter block.
pub fn write_draws_csv(dir: &Path, run: &GibbsRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let theta_path = dir.join("theta_draws.csv");
    {
        let mut w = csv::Writer::from_path(&theta_path).map_err(|e| csv_err(&theta_path, e))?;
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(
            run.theta_index
                .iter()
                .map(|&(j, p)| format!("theta_{}_{}", j + 1, p + 1)),
        );
        w.write_record(&header).map_err(|e| csv_err(&theta_path, e))?;
        let p_total = run.theta_index.len();
        for (chain, draws) in run.theta_draws.iter().enumerate() {
            for d in 0..run.kept_per_chain {
                let mut record = vec![(chain + 1).to_string(), (d + 1).to_string()];
                record.extend(
                    draws[d * p_total..(d + 1) * p_total]
                        .iter()
                        .map(|v| format!("{v}")),
                );
                w.write_record(&record).map_err(|e| csv_err(&theta_path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(&theta_path, e))?;
    }
    let pi_path = dir.join("pi_draws.csv");
    {
        let mut w = csv::Writer::from_path(&pi_path).map_err(|e| csv_err(&pi_path, e))?;
        let l = if run.pi_draws.is_empty() || run.kept_per_chain == 0 {
            0
        } else {
            run.pi_draws[0].len() / run.kept_per_chain
        };
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend((1..=l).map(|t| format!("pi_{t}")));
        w.write_record(&header).map_err(|e| csv_err(&pi_path, e))?;
        for (chain, draws) in run.pi_draws.iter().enumerate() {
            for d in 0..run.kept_per_chain {
                let mut record = vec![(chain + 1).to_string(), (d + 1).to_string()];
                record.extend(draws[d * l..(d + 1) * l].iter().map(|v| format!("{v}")));
                w.write_record(&record).map_err(|e| csv_err(&pi_path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(&pi_path, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Recovery tables

/// Writes the recovery report as JSON plus table-shaped CSVs.
pub fn write_recovery(dir: &Path, report: &RecoveryReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_json_atomic(&dir.join("recovery.json"), report)?;

    let theta_path = dir.join("theta_recovery.csv");
    let mut w = csv::Writer::from_path(&theta_path).map_err(|e| csv_err(&theta_path, e))?;
    w.write_record(["n_attrs", "bias", "rmse"])
        .map_err(|e| csv_err(&theta_path, e))?;
    for (bucket, cell) in &report.theta_by_kstar {
        w.write_record([
            bucket.to_string(),
            format!("{:.6}", cell.bias),
            format!("{:.6}", cell.rmse),
        ])
        .map_err(|e| csv_err(&theta_path, e))?;
    }
    w.flush().map_err(|e| io_err(&theta_path, e))?;

    let pi_path = dir.join("pi_recovery.csv");
    let mut w = csv::Writer::from_path(&pi_path).map_err(|e| csv_err(&pi_path, e))?;
    w.write_record(["max_bias", "min_bias", "max_rmse", "min_rmse"])
        .map_err(|e| csv_err(&pi_path, e))?;
    w.write_record([
        format!("{:.6}", report.pi.max_bias),
        format!("{:.6}", report.pi.min_bias),
        format!("{:.6}", report.pi.max_rmse),
        format!("{:.6}", report.pi.min_rmse),
    ])
    .map_err(|e| csv_err(&pi_path, e))?;
    w.flush().map_err(|e| io_err(&pi_path, e))?;

    let cls_path = dir.join("classification.csv");
    let mut w = csv::Writer::from_path(&cls_path).map_err(|e| csv_err(&cls_path, e))?;
    let mut header: Vec<String> = (1..=report.eacr.len()).map(|k| format!("eacr_a{k}")).collect();
    header.push("pacr".into());
    w.write_record(&header).map_err(|e| csv_err(&cls_path, e))?;
    let mut record: Vec<String> = report.eacr.iter().map(|v| format!("{v:.4}")).collect();
    record.push(format!("{:.4}", report.pacr));
    w.write_record(&record).map_err(|e| csv_err(&cls_path, e))?;
    w.flush().map_err(|e| io_err(&cls_path, e))?;

    let stats_path = dir.join("run_stats.csv");
    let mut w = csv::Writer::from_path(&stats_path).map_err(|e| csv_err(&stats_path, e))?;
    w.write_record(["replications", "convergence_rate", "mean_wall_time_s"])
        .map_err(|e| csv_err(&stats_path, e))?;
    w.write_record([
        report.replications.to_string(),
        format!("{:.4}", report.convergence_rate),
        format!("{:.3}", report.mean_wall_time),
    ])
    .map_err(|e| csv_err(&stats_path, e))?;
    w.flush().map_err(|e| io_err(&stats_path, e))
}

// ---------------------------------------------------------------------
// Effects CSV

/// Writes effect decompositions, one row per item, columns unioned over
/// the largest pattern space.
pub fn write_effects_csv(path: &Path, effects: &[crate::effects::DeltaEffects]) -> Result<()> {
    let widest = effects
        .iter()
        .max_by_key(|e| e.labels.len())
        .map(|e| e.labels.clone())
        .unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["item".to_string()];
    header.extend(widest.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for eff in effects {
        let mut record = vec![(eff.item + 1).to_string()];
        for label in &widest {
            match eff.labels.iter().position(|l| l == label) {
                Some(idx) => record.push(format!("{:.6}", eff.values[idx])),
                None => record.push(String::new()),
            }
        }
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// Run manifest

/// Provenance record written atomically next to every output set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub profile_order: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            profile_order: PROFILE_ORDER.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_json_atomic(&dir.join("manifest.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::{build_gmatrices, ProfileSpace};
    use crate::priors::default_priors;
    use crate::vb::{fit, VbConfig};
    use tempfile::tempdir;

    #[test]
    fn qmatrix_roundtrip() {
        let dir = tempdir().unwrap();
        let q = QMatrix::new(vec![vec![1, 0, 2], vec![0, 1, 1]], vec![2, 3, 3]).unwrap();
        let csv_path = dir.path().join("q.csv");
        let levels_path = dir.path().join("levels.json");
        write_qmatrix_csv(&csv_path, &q).unwrap();
        write_levels_json(&levels_path, q.levels()).unwrap();
        let back = read_qmatrix(&csv_path, &levels_path).unwrap();
        assert_eq!(back, q);
        let text = fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("k1,k2,k3\n"));
    }

    #[test]
    fn responses_roundtrip_and_id_column() {
        let dir = tempdir().unwrap();
        let x = Responses::new(3, 2, vec![1, 0, 0, 1, 1, 1]).unwrap();
        let path = dir.path().join("x.csv");
        write_responses_csv(&path, &x).unwrap();
        assert_eq!(read_responses_csv(&path).unwrap(), x);

        let with_id = dir.path().join("xid.csv");
        fs::write(&with_id, "id,x1,x2\n101,1,0\n102,0,1\n").unwrap();
        let parsed = read_responses_csv(&with_id).unwrap();
        assert_eq!(parsed, Responses::new(2, 2, vec![1, 0, 0, 1]).unwrap());
    }

    #[test]
    fn responses_reject_non_binary() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x1,x2\n1,2\n").unwrap();
        assert!(read_responses_csv(&path).is_err());
    }

    #[test]
    fn gmatrix_export_layout() {
        let dir = tempdir().unwrap();
        let q = QMatrix::new(vec![vec![2, 0]], vec![3, 3]).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        let path = dir.path().join("g.csv");
        write_gmatrix_csv(&path, &gms[0]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a1,g1,g2,g3,g4,g5,g6,g7,g8,g9");
        assert_eq!(lines.len(), 3);
        // each profile column carries exactly one indicator across rows
        let row1: Vec<&str> = lines[1].split(',').collect();
        let row2: Vec<&str> = lines[2].split(',').collect();
        for l in 1..10 {
            let total: u32 =
                row1[l].parse::<u32>().unwrap() + row2[l].parse::<u32>().unwrap();
            assert_eq!(total, 1);
        }
    }

    #[test]
    fn summary_file_roundtrip() {
        let dir = tempdir().unwrap();
        let q = QMatrix::new(vec![vec![1, 1], vec![0, 1]], vec![2, 2]).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        let priors = default_priors(&space, &gms, crate::priors::PriorScheme::Noninformative);
        let x = Responses::new(4, 2, vec![0, 1, 1, 1, 0, 0, 1, 0]).unwrap();
        let report = fit(&x, &q, Flavor::Collapsed, &priors, &VbConfig::default()).unwrap();
        let summary = SummaryFile::from_fit(&report, &gms, Flavor::Collapsed, q.levels());
        let path = dir.path().join("fit.json");
        write_summary_json(&path, &summary).unwrap();
        let back = read_summary_json(&path).unwrap();
        assert_eq!(back.items.len(), 2);
        assert_eq!(back.profiles, report.map_profiles);
        assert_eq!(back.vlb_trace.unwrap(), report.state.vlb_trace);
    }

    #[test]
    fn config_json_parses_both_init_forms() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"tol": 1e-5, "max_iter": 100, "cores": 2, "init": "uniform", "prior_scheme": "weakly_informative", "flavor": "reduced"}"#,
        )
        .unwrap();
        let cfg = read_config_json(&path).unwrap();
        assert_eq!(cfg.tol, Some(1e-5));
        assert_eq!(cfg.init, Some(Init::Uniform));
        assert_eq!(cfg.flavor, Some(Flavor::Reduced));

        fs::write(&path, r#"{"init": {"dirichlet_seed": 7}}"#).unwrap();
        let cfg = read_config_json(&path).unwrap();
        assert_eq!(cfg.init, Some(Init::Dirichlet { seed: 7 }));
    }

    #[test]
    fn manifest_written_atomically() {
        let dir = tempdir().unwrap();
        let mut m = RunManifest::new("simulate", serde_json::json!({"n": 10}), Some(1));
        m.outputs.push("responses.csv".into());
        m.write(dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        assert!(path.exists());
        assert!(!dir.path().join("manifest.tmp").exists());
        let back: RunManifest = read_json(&path).unwrap();
        assert_eq!(back.command, "simulate");
        assert_eq!(back.seed, Some(1));
    }

    #[test]
    fn theta_table_shape() {
        let dir = tempdir().unwrap();
        let items = vec![
            ItemPosterior {
                item: 1,
                patterns: vec![vec![0], vec![1]],
                eap: vec![0.3581, 0.9306],
                sd: vec![0.0066, 0.0021],
                rhat: None,
            },
            ItemPosterior {
                item: 2,
                patterns: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
                eap: vec![0.2, 0.4, 0.6, 0.8],
                sd: vec![0.01, 0.02, 0.03, 0.04],
                rhat: None,
            },
        ];
        let path = dir.path().join("theta.csv");
        write_theta_table_csv(&path, &items).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), 1 + 4 + 4);
        assert!(lines[1].contains("0.3581 (0.0066)"));
        // the shorter item leaves trailing pattern cells blank
        assert!(lines[1].ends_with(",,"));
    }
}
