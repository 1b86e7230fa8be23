//! Config-driven experiments with manifests and width sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use qnn_core::linearized::{gp_empirical_check, GpCheckConfig};
use qnn_core::ntk::{analytic_ntk_mc, empirical_ntk};
use qnn_core::reproduce::default_nk;
use qnn_core::rng::{self, tag};
use qnn_core::sim::calibrate_normalization;
use qnn_core::stats::{cumulants, normality_tests, sample_init_ensemble, InitLaw};
use qnn_core::training::{probe_inputs, synthetic_dataset, train, NoiseModel, TrainConfig, TrainMode, VarianceSchedule};
use qnn_core::{CircuitSpec, Dataset, Family, FamilyParams, ParamVector, Qnn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{self, CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CircuitSource {
    File {
        file: PathBuf,
    },
    Family {
        family: Family,
        m: usize,
        layers: usize,
        #[serde(default = "one")]
        input_dim: usize,
        #[serde(default)]
        mean_zero: bool,
        #[serde(default)]
        family_seed: u64,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    File { file: PathBuf },
    Synthetic { synthetic: SyntheticData },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticData {
    pub n: usize,
    pub dim: usize,
}

fn default_eta0() -> f64 {
    0.4
}

fn default_probes() -> usize {
    qnn_core::training::DEFAULT_PROBES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Plan {
    Train {
        mode: TrainMode,
        #[serde(default = "default_eta0")]
        eta0: f64,
        steps: usize,
        #[serde(default)]
        nk: Option<f64>,
        #[serde(default)]
        noise: Option<NoiseModel>,
        #[serde(default)]
        schedule: Option<VarianceSchedule>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        diagnostics: bool,
    },
    GpCheck {
        #[serde(default = "default_eta0")]
        eta0: f64,
        steps: usize,
        seeds: usize,
        #[serde(default = "default_kernel_samples")]
        kernel_samples: usize,
        #[serde(default = "default_cov_samples")]
        cov_samples: usize,
        #[serde(default = "default_probes")]
        probes: usize,
    },
    NtkEmpirical {
        #[serde(default)]
        nk: Option<f64>,
    },
    NtkAnalytic {
        samples: usize,
        #[serde(default)]
        nk: Option<f64>,
    },
    Calibrate {
        samples: usize,
        #[serde(default = "default_probes")]
        probes: usize,
    },
    InitEnsemble {
        samples: usize,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "uniform_law")]
        law: InitLaw,
    },
    WidthSweep {
        widths: Vec<usize>,
        plan: Box<Plan>,
    },
}

fn default_kernel_samples() -> usize {
    400
}

fn default_cov_samples() -> usize {
    2000
}

fn uniform_law() -> InitLaw {
    InitLaw::Uniform
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub circuit: CircuitSource,
    #[serde(default)]
    pub dataset: Option<DataSource>,
    pub plan: Plan,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_sha256: String,
    library_version: &'static str,
    seed: u64,
    wall_time_secs: f64,
    files: Vec<String>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_circuit(src: &CircuitSource, base: &Path, width: Option<usize>) -> CliResult<CircuitSpec> {
    match src {
        CircuitSource::File { file } => {
            if width.is_some() {
                return Err(CliError::config("width sweeps need a family circuit source"));
            }
            io::read_circuit(&resolve(base, file))
        }
        CircuitSource::Family {
            family,
            m,
            layers,
            input_dim,
            mean_zero,
            family_seed,
        } => {
            let spec = FamilyParams::new(*family, width.unwrap_or(*m), *layers, *family_seed)
                .with_input_dim(*input_dim)
                .build()?;
            Ok(if *mean_zero { spec.append_mean_zero_layer() } else { spec })
        }
    }
}

fn load_data(src: &Option<DataSource>, base: &Path, seed: u64) -> CliResult<Option<Dataset>> {
    Ok(match src {
        None => None,
        Some(DataSource::File { file }) => Some(io::read_dataset(&resolve(base, file))?),
        Some(DataSource::Synthetic { synthetic }) => Some(synthetic_dataset(synthetic.n, synthetic.dim, seed)?),
    })
}

fn need_data(data: &Option<Dataset>) -> CliResult<&Dataset> {
    data.as_ref().ok_or_else(|| CliError::config("this plan needs a dataset"))
}

/// Runs the plan for one circuit, writes its files into `dir` and returns
/// summary metrics for aggregation.
fn execute(plan: &Plan, qnn: &Qnn, data: &Option<Dataset>, seed: u64, dir: &Path, files: &mut Vec<String>) -> CliResult<Vec<(String, f64)>> {
    let dim = qnn.spec.input_dim;
    let mut put = |name: &str| -> PathBuf {
        files.push(dir.join(name).display().to_string());
        dir.join(name)
    };
    match plan {
        Plan::Train {
            mode,
            eta0,
            steps,
            nk,
            noise,
            schedule,
            delta,
            diagnostics,
        } => {
            let data = need_data(data)?;
            let nk = match nk {
                Some(v) => *v,
                None => default_nk(qnn, &data.inputs, 64, seed)?,
            };
            let mut cfg = TrainConfig::gd(*eta0, *steps, nk, seed);
            cfg.mode = *mode;
            if let Some(n) = noise {
                cfg.noise = *n;
            } else if *mode == TrainMode::NoisyGd {
                cfg.noise = NoiseModel::Synthetic { scale: 1.0 };
            }
            if let Some(s) = schedule {
                cfg.schedule = *s;
            }
            if let Some(d) = delta {
                cfg.delta = *d;
            }
            cfg.diagnostics = *diagnostics;
            cfg.probes = probe_inputs(default_probes(), dim);
            let theta0 = ParamVector::uniform(&qnn.spec, &mut rng::stream(seed, &[tag::PARAMS])).values;
            let tr = train(qnn, &theta0, data, &cfg)?;
            write_trace(&put("trace.csv"), &tr)?;
            io::write_theta(&put("theta_final.csv"), &tr.theta_final)?;
            Ok(vec![
                ("final_loss".into(), tr.final_loss()),
                ("max_param_disp".into(), tr.max_displacement()),
                ("max_ntk_drift".into(), tr.max_ntk_drift()),
                ("max_lin_gap".into(), tr.max_lin_gap()),
                ("lambda_min".into(), tr.lambda_min),
            ])
        }
        Plan::GpCheck {
            eta0,
            steps,
            seeds,
            kernel_samples,
            cov_samples,
            probes,
        } => {
            let data = need_data(data)?;
            let cfg = GpCheckConfig {
                eta0: *eta0,
                steps: *steps,
                num_seeds: *seeds,
                kernel_samples: *kernel_samples,
                cov_samples: *cov_samples,
                nk: None,
                seed,
            };
            let r = gp_empirical_check(qnn, data, &probe_inputs(*probes, dim), &cfg)?;
            let rows: Vec<Vec<f64>> = (0..r.z_scores.len())
                .map(|a| {
                    vec![
                        a as f64,
                        r.empirical_mean[a],
                        r.empirical_mean_se[a],
                        r.gp_mean[a],
                        r.empirical_variance[a],
                        r.gp_variance[a],
                        r.z_scores[a],
                    ]
                })
                .collect();
            io::write_table(
                &put("gp_check.csv"),
                &["input", "empirical_mean", "mean_se", "gp_mean", "empirical_var", "gp_var", "z"],
                &rows,
            )?;
            let max_z = r.z_scores[..r.n_train].iter().fold(0.0f64, |a, z| a.max(z.abs()));
            Ok(vec![
                ("max_abs_train_z".into(), max_z),
                ("rejection_rate".into(), r.normality.rejection_rate(0.01)),
            ])
        }
        Plan::NtkEmpirical { nk } => {
            let data = need_data(data)?;
            let theta0 = ParamVector::uniform(&qnn.spec, &mut rng::stream(seed, &[tag::PARAMS])).values;
            let nk = match nk {
                Some(v) => *v,
                None => default_nk(qnn, &data.inputs, 64, seed)?,
            };
            let k = empirical_ntk(qnn, &theta0, &data.inputs, data.len(), nk)?;
            io::write_matrix(&put("ntk.csv"), &k.entries)?;
            Ok(vec![("lambda_min".into(), k.lambda_min), ("lambda_max".into(), k.lambda_max)])
        }
        Plan::NtkAnalytic { samples, nk } => {
            let data = need_data(data)?;
            let a = analytic_ntk_mc(qnn, &data.inputs, data.len(), *samples, seed, *nk)?;
            io::write_matrix(&put("ntk.csv"), &a.matrix.entries)?;
            Ok(vec![
                ("lambda_min".into(), a.matrix.lambda_min),
                ("lambda_max".into(), a.matrix.lambda_max),
                ("nk".into(), a.matrix.nk),
            ])
        }
        Plan::Calibrate { samples, probes } => {
            let probes = probe_inputs(*probes, dim);
            let c = calibrate_normalization(qnn, &probes, *samples, seed)?;
            let m = qnn_core::nalgebra::DMatrix::from_fn(probes.len(), probes.len(), |a, b| c.covariance[a][b]);
            io::write_matrix(&put("covariance.csv"), &m)?;
            Ok(vec![
                ("mean_diag_covariance".into(), c.mean_diag_covariance),
                ("suggested_normalization".into(), c.suggested_normalization),
            ])
        }
        Plan::InitEnsemble { samples, probes, law } => {
            let probes = probe_inputs(*probes, dim);
            let ens = sample_init_ensemble(qnn, &probes, *samples, seed, *law)?;
            io::write_ensemble(&put("ensemble.csv"), &ens)?;
            let c = cumulants(&ens, 4)?;
            let nt = normality_tests(&ens)?;
            Ok(vec![
                (
                    "median_abs_excess_kurtosis".into(),
                    qnn_core::stats::median(c.iter().map(|p| p.excess_kurtosis.abs()).collect()),
                ),
                ("rejection_rate".into(), nt.rejection_rate(0.01)),
            ])
        }
        Plan::WidthSweep { .. } => Err(CliError::config("width sweeps cannot be nested")),
    }
}

pub fn write_trace(path: &Path, tr: &qnn_core::training::TrainTrace) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = tr
        .rows
        .iter()
        .map(|r| vec![r.step as f64, r.loss, r.param_disp_inf, r.resid_l2, r.ntk_drift, r.lin_gap, r.shots_used])
        .collect();
    io::write_table(
        path,
        &["step", "loss", "param_disp_inf", "resid_l2", "ntk_drift", "lin_gap", "shots_used"],
        &rows,
    )
}

/// Executes a config file. Paths inside the config are relative to it.
pub fn run_config(path: &Path) -> CliResult<PathBuf> {
    let start = Instant::now();
    let text = io::read_text(path)?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::at(path, format!("malformed config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = resolve(base, &cfg.output_dir);
    let data = load_data(&cfg.dataset, base, cfg.seed)?;
    let mut files = Vec::new();
    if let Some(d) = &data {
        let p = out.join("dataset.csv");
        io::write_dataset(&p, d)?;
        files.push(p.display().to_string());
    }
    match &cfg.plan {
        Plan::WidthSweep { widths, plan } => {
            let mut agg_rows = Vec::new();
            let mut names: Vec<String> = Vec::new();
            for &m in widths {
                let qnn = Qnn::new(load_circuit(&cfg.circuit, base, Some(m))?)?;
                let dir = out.join(format!("m{m}"));
                let metrics = execute(plan, &qnn, &data, cfg.seed, &dir, &mut files)?;
                names = metrics.iter().map(|p| p.0.clone()).collect();
                let mut row = vec![m as f64];
                row.extend(metrics.iter().map(|p| p.1));
                agg_rows.push(row);
            }
            let mut header = vec!["m"];
            header.extend(names.iter().map(String::as_str));
            let agg = out.join("aggregate.csv");
            io::write_table(&agg, &header, &agg_rows)?;
            files.push(agg.display().to_string());
        }
        plan => {
            let qnn = Qnn::new(load_circuit(&cfg.circuit, base, None)?)?;
            let metrics = execute(plan, &qnn, &data, cfg.seed, &out, &mut files)?;
            let header: Vec<&str> = metrics.iter().map(|p| p.0.as_str()).collect();
            let summary = out.join("summary.csv");
            io::write_table(&summary, &header, &[metrics.iter().map(|p| p.1).collect()])?;
            files.push(summary.display().to_string());
        }
    }
    let manifest = Manifest {
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        library_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        files,
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "seed": 3,
            "output_dir": "out",
            "circuit": {"family": "brick1d", "m": 8, "layers": 2, "input_dim": 2, "mean_zero": true},
            "dataset": {"synthetic": {"n": 4, "dim": 2}},
            "plan": {"kind": "width-sweep", "widths": [8, 16], "plan": {"kind": "train", "mode": "gd", "steps": 5}}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(cfg.plan, Plan::WidthSweep { ref widths, .. } if widths == &[8, 16]));
        assert!(matches!(cfg.circuit, CircuitSource::Family { family: Family::Brick1d, .. }));
    }
}
