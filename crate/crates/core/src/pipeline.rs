//! End-to-end orchestration: dataset → pre-train → fine-tune → affinity →
//! spectral clustering → metrics, plus the out-of-sample path, β/γ sweeps,
//! a built-in union-of-subspaces generator, and artifact export.

use crate::affinity::{build_affinity, write_pgm, AffinityConfig};
use crate::cluster::{spectral_cluster, ClusterAssignment};
use crate::data::{self, Dataset, MatrixFormat, Normalize};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{self, EncoderSpec, Hyperparams, ModelDesc, NetworkParams};
use crate::numerics::rng::{self, gaussian_matrix};
use crate::numerics::Matrix;
use crate::trainer::{self, EpochEvent, Stage, TrainConfig, TrainReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Coarse progress callback: (phase, done, total).
pub type ProgressFn<'a> = &'a (dyn Fn(&str, usize, usize) + Sync);

// ── configuration ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    Oos,
    /// Locality Laplacian forced to zero; only the subspace-consistency
    /// terms steer C.
    #[serde(alias = "ablation-sc")]
    AblationSc,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub per_cluster: usize,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Dense matrix file; mutually exclusive with `synthetic`.
    pub path: Option<PathBuf>,
    pub format: Option<MatrixFormat>,
    /// Sidecar label file, one integer per line.
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub normalize: Normalize,
    /// (height, width, channels), required for the convolutional encoder.
    pub sample_shape: Option<(usize, usize, usize)>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OosConfig {
    /// Fraction of samples used as the training ("seed") set.
    #[serde(default = "default_seed_fraction")]
    pub seed_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_seed_fraction() -> f64 {
    0.6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub train: TrainConfig,
    pub affinity: AffinityConfig,
    pub oos: Option<OosConfig>,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("{origin}: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<RunConfig> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
        Self::from_toml_str(&text, &name)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::config("dataset: give either a path or a synthetic spec, not both"))
            }
            (None, None) => {
                return Err(Error::config("dataset: either a path or a synthetic spec is required"))
            }
            (Some(p), None) => {
                if !p.exists() {
                    return Err(Error::config(format!("dataset path {} does not exist", p.display())));
                }
                if let Some(l) = &self.dataset.labels {
                    if !l.exists() {
                        return Err(Error::config(format!("label path {} does not exist", l.display())));
                    }
                }
            }
            (None, Some(s)) => {
                if s.clusters < 2 || s.subspace_dim == 0 || s.per_cluster == 0 {
                    return Err(Error::config("synthetic spec needs clusters >= 2, positive dims"));
                }
                if s.subspace_dim > s.ambient_dim {
                    return Err(Error::config("synthetic subspace dimension exceeds ambient dimension"));
                }
            }
        }
        self.hyper.validate()?;
        self.train.validate()?;
        self.affinity.validate()?;
        // Oos mode needs either an [oos] section or an explicit split;
        // run_oos enforces that at call time.
        if self.mode == Mode::Sweep {
            match &self.sweep {
                None => return Err(Error::config("sweep mode requires a [sweep] section")),
                Some(s) if s.beta.is_empty() || s.gamma.is_empty() => {
                    return Err(Error::config("sweep grids must be nonempty"))
                }
                _ => {}
            }
            if self.dataset.labels.is_none() && self.dataset.synthetic.is_none() {
                return Err(Error::config("sweep mode needs ground-truth labels to rank grid points"));
            }
        }
        Ok(())
    }
}

// ── outcome ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub pretrain_secs: f64,
    pub finetune_secs: f64,
    pub final_terms: Option<model::LossTerms>,
    pub param_checksum: String,
}

impl TrainSummary {
    fn from_report(report: &TrainReport) -> TrainSummary {
        TrainSummary {
            pretrain_epochs: report.stage_records(Stage::Pretrain).count(),
            finetune_epochs: report.stage_records(Stage::Finetune).count(),
            pretrain_secs: report.pretrain_secs,
            finetune_secs: report.finetune_secs,
            final_terms: report.epochs.last().map(|r| r.terms),
            param_checksum: report.param_checksum.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Artifacts {
    pub checkpoint: Option<PathBuf>,
    pub affinity_matrix: Option<PathBuf>,
    pub affinity_image: Option<PathBuf>,
    pub predicted_labels: Option<PathBuf>,
    pub train_report: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub sweep_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OosReport {
    pub seed_size: usize,
    pub holdout_size: usize,
    pub seed_metrics: Option<MetricsReport>,
    pub full_metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub gamma: f64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    pub best: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub mode: Mode,
    pub dataset_name: String,
    pub samples: usize,
    pub features: usize,
    pub metrics: Option<MetricsReport>,
    pub oos: Option<OosReport>,
    pub sweep: Option<Vec<SweepRow>>,
    pub train: Option<TrainSummary>,
    pub degenerate_affinity: bool,
    pub degenerate_clustering: bool,
    pub artifacts: Artifacts,
}

// ── synthetic data ────────────────────────────────────────────────────

/// Union-of-subspaces sampler: k random orthonormal bases of rank
/// `subspace_dim` in ambient dimension, standard-normal coefficients, and
/// optional additive Gaussian noise. Samples are ordered class by class.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let mut stream = rng::seeded(seed);
    let d = spec.ambient_dim;
    let n = spec.clusters * spec.per_cluster;
    let mut x = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);

    for cluster in 0..spec.clusters {
        let basis = random_orthonormal(&mut stream, d, spec.subspace_dim);
        let coeffs = gaussian_matrix(&mut stream, spec.subspace_dim, spec.per_cluster);
        let points = basis.matmul(&coeffs);
        for p in 0..spec.per_cluster {
            let col = cluster * spec.per_cluster + p;
            for r in 0..d {
                x.set(r, col, points.get(r, p));
            }
            labels.push(cluster);
        }
    }
    if spec.noise > 0.0 {
        let noise = gaussian_matrix(&mut stream, d, n);
        x.axpy(spec.noise, &noise);
    }
    Dataset::new(
        x,
        Some(labels),
        format!("synthetic-k{}-d{}", spec.clusters, spec.subspace_dim),
    )
}

/// Orthonormal basis via Gram-Schmidt on Gaussian columns.
fn random_orthonormal(stream: &mut rng::Rng, rows: usize, cols: usize) -> Matrix {
    let mut basis = Matrix::zeros(rows, cols);
    let mut filled = 0;
    while filled < cols {
        let mut col: Vec<f64> = (0..rows).map(|_| rng::normal(stream)).collect();
        for k in 0..filled {
            let dot: f64 = (0..rows).map(|i| col[i] * basis.get(i, k)).sum();
            for (i, c) in col.iter_mut().enumerate() {
                *c -= dot * basis.get(i, k);
            }
        }
        let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // astronomically unlikely; resample
        }
        for c in col.iter_mut() {
            *c /= norm;
        }
        basis.set_col(filled, &col);
        filled += 1;
    }
    basis
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenOutput {
    pub data_path: PathBuf,
    pub labels_path: PathBuf,
    pub meta_path: PathBuf,
    pub features: usize,
    pub samples: usize,
}

/// Generate a synthetic dataset and persist it (matrix, labels, and the
/// generator parameters needed to reconstruct it as a test oracle).
pub fn generate_and_write(spec: &SyntheticSpec, seed: u64, out_dir: &Path) -> Result<GenOutput> {
    let ds = generate_synthetic(spec, seed)?;
    let data_path = out_dir.join("data.rgm");
    let labels_path = out_dir.join("labels.txt");
    let meta_path = out_dir.join("generator.json");
    data::write_rgm(&data_path, &ds.x)?;
    data::write_labels(&labels_path, ds.labels.as_ref().unwrap())?;
    let meta = serde_json::json!({ "spec": spec, "seed": seed, "name": ds.name });
    write_json(&meta_path, &meta)?;
    Ok(GenOutput {
        data_path,
        labels_path,
        meta_path,
        features: ds.dim(),
        samples: ds.len(),
    })
}

// ── dataset loading ───────────────────────────────────────────────────

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dc = &cfg.dataset;
    let mut ds = match (&dc.path, &dc.synthetic) {
        (Some(path), None) => {
            let format = dc.format.ok_or_else(|| {
                Error::config("dataset.format is required when loading from a path")
            })?;
            let mut ds = data::load_dense(path, format, dc.normalize)?;
            if let Some(labels_path) = &dc.labels {
                let labels = data::read_labels(labels_path)?;
                if labels.len() != ds.len() {
                    return Err(Error::config(format!(
                        "{} labels for {} samples",
                        labels.len(),
                        ds.len()
                    )));
                }
                ds.labels = Some(labels);
            }
            ds
        }
        (None, Some(spec)) => generate_synthetic(spec, cfg.seed)?,
        _ => return Err(Error::config("dataset: exactly one of path/synthetic required")),
    };
    if let Some(shape) = dc.sample_shape {
        ds = ds.with_sample_shape(shape)?;
    }
    Ok(ds)
}

// ── execution ─────────────────────────────────────────────────────────

/// Dispatch on the configured mode.
pub fn execute(cfg: &RunConfig, progress: Option<ProgressFn<'_>>) -> Result<RunOutcome> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Full | Mode::AblationSc => run_full(cfg, progress),
        Mode::Oos => run_oos(cfg, None, progress),
        Mode::Sweep => sweep(cfg, progress),
    }
}

fn effective_hyper(cfg: &RunConfig) -> Hyperparams {
    let mut hp = cfg.hyper;
    if cfg.mode == Mode::AblationSc {
        hp.locality = false;
    }
    hp
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    }
}

fn epoch_hook<'a>(progress: Option<ProgressFn<'a>>) -> impl Fn(&EpochEvent<'_>) + Sync + 'a {
    move |ev: &EpochEvent<'_>| {
        if let Some(p) = progress {
            let phase = match ev.stage {
                Stage::Pretrain => "pretrain",
                Stage::Finetune => "finetune",
            };
            p(phase, ev.epoch + 1, ev.total_epochs);
        }
    }
}

/// Full pipeline: train, build the affinity, cluster, evaluate, export.
pub fn run_full(cfg: &RunConfig, progress: Option<ProgressFn<'_>>) -> Result<RunOutcome> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let desc = model::resolve_model(&cfg.encoder, ds.dim(), ds.sample_shape)?;
    let hp = effective_hyper(cfg);
    let tc = train_config(cfg);

    let hook = epoch_hook(progress);
    let (params, report) = trainer::train(&desc, &ds.x, &hp, &tc, Some(&hook))?;

    if let Some(p) = progress {
        p("affinity", 0, 1);
    }
    let aff = build_affinity(&params.c, &cfg.affinity)?;
    if let Some(p) = progress {
        p("clustering", 0, 1);
    }
    let assignment = spectral_cluster(&aff.a, cfg.affinity.clusters, cfg.seed)?;
    let metrics = match &ds.labels {
        Some(truth) => Some(evaluate(truth, &assignment.labels)?),
        None => None,
    };

    let artifacts = write_run_artifacts(
        cfg,
        &ds,
        &desc,
        &hp,
        &params,
        &report,
        Some(&aff.a),
        Some(&assignment),
        metrics.as_ref(),
    )?;

    Ok(RunOutcome {
        mode: cfg.mode,
        dataset_name: ds.name.clone(),
        samples: ds.len(),
        features: ds.dim(),
        metrics,
        oos: None,
        sweep: None,
        train: Some(TrainSummary::from_report(&report)),
        degenerate_affinity: aff.degenerate,
        degenerate_clustering: assignment.degenerate,
        artifacts,
    })
}

// ── out-of-sample ─────────────────────────────────────────────────────

/// Index split into a training ("seed") set and a holdout set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OosSplit {
    pub seed_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

impl OosSplit {
    /// Seeded uniform split keeping `fraction` of the samples as the seed
    /// set (source order preserved on both sides).
    pub fn random(n: usize, fraction: f64, seed: u64) -> Result<OosSplit> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config("seed fraction must lie in [0, 1]"));
        }
        let seed_size = ((n as f64) * fraction).round().max(1.0) as usize;
        let seed_size = seed_size.min(n);
        let mut stream = rng::seeded(seed);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..seed_size {
            let j = rand::Rng::gen_range(&mut stream, i..n);
            pool.swap(i, j);
        }
        let mut seed_indices = pool[..seed_size].to_vec();
        let mut holdout_indices = pool[seed_size..].to_vec();
        seed_indices.sort_unstable();
        holdout_indices.sort_unstable();
        Ok(OosSplit {
            seed_indices,
            holdout_indices,
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.seed_indices.iter().chain(self.holdout_indices.iter()) {
            if i >= n {
                return Err(Error::contract(format!("split index {i} out of range for n={n}")));
            }
            if seen[i] {
                return Err(Error::contract(format!("split index {i} appears twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::contract("split does not cover the dataset"));
        }
        if self.seed_indices.is_empty() {
            return Err(Error::contract("seed set is empty"));
        }
        Ok(())
    }
}

/// Train on the seed subset, pseudo-label it via affinity + spectral
/// clustering, encode every sample, and give each holdout point the
/// pseudo-label of its nearest seed neighbor in latent space.
pub fn run_oos(
    cfg: &RunConfig,
    split: Option<OosSplit>,
    progress: Option<ProgressFn<'_>>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let n = ds.len();
    let split = match split {
        Some(s) => s,
        None => {
            let oos = cfg
                .oos
                .ok_or_else(|| Error::config("oos mode requires an [oos] section"))?;
            OosSplit::random(n, oos.seed_fraction, oos.split_seed)?
        }
    };
    split.validate(n)?;

    let x_seed = ds.x.select_cols(&split.seed_indices);
    let desc = model::resolve_model(&cfg.encoder, ds.dim(), ds.sample_shape)?;
    let hp = effective_hyper(cfg);
    let tc = train_config(cfg);

    let hook = epoch_hook(progress);
    let (params, report) = trainer::train(&desc, &x_seed, &hp, &tc, Some(&hook))?;

    if let Some(p) = progress {
        p("affinity", 0, 1);
    }
    let aff = build_affinity(&params.c, &cfg.affinity)?;
    let assignment = spectral_cluster(&aff.a, cfg.affinity.clusters, cfg.seed)?;
    let pseudo = &assignment.labels;

    if let Some(p) = progress {
        p("labeling", 0, 1);
    }
    // Latent codes for everything, then 1-NN against the seed set.
    let z_all = model::encode(&desc, &params, &ds.x)?;
    let mut predicted = vec![0usize; n];
    for (slot, &idx) in split.seed_indices.iter().enumerate() {
        predicted[idx] = pseudo[slot];
    }
    for &h in &split.holdout_indices {
        let mut best_slot = 0usize;
        let mut best_d = f64::INFINITY;
        for (slot, &s) in split.seed_indices.iter().enumerate() {
            let mut d = 0.0;
            for r in 0..z_all.rows() {
                let diff = z_all.get(r, h) - z_all.get(r, s);
                d += diff * diff;
            }
            if d < best_d {
                best_d = d;
                best_slot = slot;
            }
        }
        predicted[h] = pseudo[best_slot];
    }

    let (seed_metrics, full_metrics) = match &ds.labels {
        Some(truth) => {
            let seed_truth: Vec<usize> = split.seed_indices.iter().map(|&i| truth[i]).collect();
            (
                Some(evaluate(&seed_truth, pseudo)?),
                Some(evaluate(truth, &predicted)?),
            )
        }
        None => (None, None),
    };

    let assignment_full = ClusterAssignment {
        labels: predicted,
        k: cfg.affinity.clusters,
        inertia: assignment.inertia,
        degenerate: assignment.degenerate,
    };
    let artifacts = write_run_artifacts(
        cfg,
        &ds,
        &desc,
        &hp,
        &params,
        &report,
        Some(&aff.a),
        Some(&assignment_full),
        full_metrics.as_ref(),
    )?;

    Ok(RunOutcome {
        mode: Mode::Oos,
        dataset_name: ds.name.clone(),
        samples: n,
        features: ds.dim(),
        metrics: full_metrics,
        oos: Some(OosReport {
            seed_size: split.seed_indices.len(),
            holdout_size: split.holdout_indices.len(),
            seed_metrics,
            full_metrics,
        }),
        sweep: None,
        train: Some(TrainSummary::from_report(&report)),
        degenerate_affinity: aff.degenerate,
        degenerate_clustering: assignment.degenerate,
        artifacts,
    })
}

// ── sweep ─────────────────────────────────────────────────────────────

/// Grid search over (β, γ) sharing one pre-trained checkpoint; pre-training
/// does not depend on either weight, so reuse changes nothing.
pub fn sweep(cfg: &RunConfig, progress: Option<ProgressFn<'_>>) -> Result<RunOutcome> {
    cfg.validate()?;
    let grid = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::config("sweep mode requires a [sweep] section"))?;
    let ds = load_dataset(cfg)?;
    let truth = ds
        .labels
        .clone()
        .ok_or_else(|| Error::config("sweep mode needs ground-truth labels"))?;
    let desc = model::resolve_model(&cfg.encoder, ds.dim(), ds.sample_shape)?;
    let tc = train_config(cfg);

    let hook = epoch_hook(progress);
    let (pretrained, _) = trainer::pretrain(&desc, &ds.x, &tc, Some(&hook))?;

    let points: Vec<(f64, f64)> = grid
        .beta
        .iter()
        .flat_map(|&b| grid.gamma.iter().map(move |&g| (b, g)))
        .collect();
    let total = points.len();
    let done = std::sync::atomic::AtomicUsize::new(0);

    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(beta, gamma)| {
            let hp = Hyperparams {
                beta,
                gamma,
                ..effective_hyper(cfg)
            };
            let result = sweep_point(cfg, &desc, &pretrained, &ds.x, &truth, &hp, &tc);
            let finished = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
            if let Some(p) = progress {
                p("sweep", finished, total);
            }
            match result {
                Ok(metrics) => SweepRow {
                    beta,
                    gamma,
                    metrics: Some(metrics),
                    error: None,
                    best: false,
                },
                Err(e) => SweepRow {
                    beta,
                    gamma,
                    metrics: None,
                    error: Some(e.to_string()),
                    best: false,
                },
            }
        })
        .collect();

    let mut rows = rows;
    let best_idx = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.metrics.map(|m| (i, m.acc)))
        .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
            Some((_, best)) if best >= v => acc,
            _ => Some((i, v)),
        });
    if let Some((i, _)) = best_idx {
        rows[i].best = true;
    }

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;
    let table_path = cfg.out_dir.join("sweep.json");
    write_json(&table_path, &rows)?;
    let csv_path = cfg.out_dir.join("sweep.csv");
    write_sweep_csv(&csv_path, &rows)?;

    let best_metrics = best_idx.and_then(|(i, _)| rows[i].metrics);
    Ok(RunOutcome {
        mode: Mode::Sweep,
        dataset_name: ds.name.clone(),
        samples: ds.len(),
        features: ds.dim(),
        metrics: best_metrics,
        oos: None,
        sweep: Some(rows),
        train: None,
        degenerate_affinity: false,
        degenerate_clustering: false,
        artifacts: Artifacts {
            sweep_table: Some(table_path),
            ..Artifacts::default()
        },
    })
}

fn sweep_point(
    cfg: &RunConfig,
    desc: &ModelDesc,
    pretrained: &NetworkParams,
    x: &Matrix,
    truth: &[usize],
    hp: &Hyperparams,
    tc: &TrainConfig,
) -> Result<MetricsReport> {
    let (params, _) = trainer::finetune(desc, pretrained.clone(), x, hp, tc, None)?;
    let aff = build_affinity(&params.c, &cfg.affinity)?;
    let assignment = spectral_cluster(&aff.a, cfg.affinity.clusters, cfg.seed)?;
    evaluate(truth, &assignment.labels)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("beta,gamma,acc,nmi,purity,best,error\n");
    for r in rows {
        let (acc, nmi, pur) = match &r.metrics {
            Some(m) => (m.acc.to_string(), m.nmi.to_string(), m.purity.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.beta,
            r.gamma,
            acc,
            nmi,
            pur,
            r.best,
            r.error.clone().unwrap_or_default()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ── evaluation of label files ─────────────────────────────────────────

pub fn evaluate_files(truth_path: &Path, pred_path: &Path) -> Result<MetricsReport> {
    let truth = data::read_labels(truth_path)?;
    let pred = data::read_labels(pred_path)?;
    evaluate(&truth, &pred)
}

// ── artifact export ───────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
fn write_run_artifacts(
    cfg: &RunConfig,
    ds: &Dataset,
    desc: &ModelDesc,
    hp: &Hyperparams,
    params: &NetworkParams,
    report: &TrainReport,
    affinity: Option<&Matrix>,
    assignment: Option<&ClusterAssignment>,
    metrics: Option<&MetricsReport>,
) -> Result<Artifacts> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let checkpoint = dir.join("checkpoint.rgck");
    model::save_checkpoint(
        &checkpoint,
        &model::Checkpoint {
            spec: cfg.encoder.clone(),
            input_dim: desc.input_dim,
            sample_shape: ds.sample_shape,
            hyper: *hp,
            params: params.clone(),
        },
    )?;

    let train_report = dir.join("train_report.jsonl");
    report.write_jsonl(&train_report)?;

    let mut artifacts = Artifacts {
        checkpoint: Some(checkpoint),
        train_report: Some(train_report),
        ..Artifacts::default()
    };

    if let Some(a) = affinity {
        let rgm = dir.join("affinity.rgm");
        data::write_rgm(&rgm, a)?;
        let pgm = dir.join("affinity.pgm");
        write_pgm(&pgm, a)?;
        artifacts.affinity_matrix = Some(rgm);
        artifacts.affinity_image = Some(pgm);
    }
    if let Some(asg) = assignment {
        let labels = dir.join("predicted_labels.txt");
        data::write_labels(&labels, &asg.labels)?;
        artifacts.predicted_labels = Some(labels);
    }
    if let Some(m) = metrics {
        let path = dir.join("metrics.json");
        write_json(&path, m)?;
        artifacts.metrics = Some(path);
    }

    let meta = dir.join("run_meta.json");
    let meta_value = serde_json::json!({
        "dataset": ds.name,
        "samples": ds.len(),
        "features": ds.dim(),
        "mode": cfg.mode,
        "seed": cfg.seed,
        "hyper": hp,
        "affinity": cfg.affinity,
        "synthetic": cfg.dataset.synthetic,
    });
    write_json(&meta, &meta_value)?;
    artifacts.meta = Some(meta);

    Ok(artifacts)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Block mass of |C|: fraction of absolute mass on same-class index pairs.
/// A diagnostic used by experiments and acceptance tests.
pub fn block_mass(c: &Matrix, labels: &[usize]) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            let v = c.get(i, j).abs();
            total += v;
            if labels[i] == labels[j] {
                inside += v;
            }
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PNorm;

    fn synthetic_cfg(out: &Path, noise: f64, seed: u64) -> RunConfig {
        RunConfig {
            mode: Mode::Full,
            seed,
            out_dir: out.to_path_buf(),
            dataset: DatasetConfig {
                synthetic: Some(SyntheticSpec {
                    clusters: 3,
                    subspace_dim: 2,
                    ambient_dim: 20,
                    per_cluster: 30,
                    noise,
                }),
                ..DatasetConfig::default()
            },
            encoder: EncoderSpec::Fc {
                hidden: vec![16],
                latent: 8,
            },
            hyper: Hyperparams {
                alpha: 1e-4,
                beta: 1.0,
                gamma: 1.0,
                norm: PNorm::L2,
                locality: true,
            },
            train: TrainConfig {
                pretrain_epochs: 400,
                finetune_epochs: 1200,
                pretrain_lr: 1e-3,
                finetune_lr: 1e-3,
                ..TrainConfig::default()
            },
            affinity: AffinityConfig {
                clusters: 3,
                subspace_dim: 2,
                rho: 1.0,
            },
            oos: None,
            sweep: None,
        }
    }

    #[test]
    fn generator_is_deterministic_and_labeled() {
        let spec = SyntheticSpec {
            clusters: 3,
            subspace_dim: 2,
            ambient_dim: 10,
            per_cluster: 5,
            noise: 0.01,
        };
        let a = generate_synthetic(&spec, 4).unwrap();
        let b = generate_synthetic(&spec, 4).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.len(), 15);
        assert_eq!(a.dim(), 10);
        let c = generate_synthetic(&spec, 5).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn generator_spans_low_dimensional_subspaces() {
        // Noiseless: each class block has numerical rank = subspace_dim.
        let spec = SyntheticSpec {
            clusters: 2,
            subspace_dim: 2,
            ambient_dim: 8,
            per_cluster: 6,
            noise: 0.0,
        };
        let ds = generate_synthetic(&spec, 9).unwrap();
        let block = ds.x.select_cols(&(0..6).collect::<Vec<_>>());
        let svd = crate::numerics::svd(&block).unwrap();
        assert!(svd.sigma[1] > 1e-8);
        assert!(svd.sigma[2] < 1e-10 * svd.sigma[0]);
    }

    #[test]
    fn oos_split_is_disjoint_and_covering() {
        let split = OosSplit::random(50, 0.6, 3).unwrap();
        assert_eq!(split.seed_indices.len(), 30);
        assert_eq!(split.holdout_indices.len(), 20);
        split.validate(50).unwrap();
        let again = OosSplit::random(50, 0.6, 3).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn block_mass_metric_counts_correctly() {
        let mut c = Matrix::zeros(4, 4);
        c.set(0, 1, 1.0); // same class
        c.set(0, 2, 3.0); // cross class
        let labels = vec![0, 0, 1, 1];
        let got = block_mass(&c, &labels);
        assert!((got - 0.25).abs() < 1e-12);
    }

    #[test]
    fn config_validation_catches_misuse() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(dir.path(), 0.0, 1);
        cfg.dataset.path = Some(PathBuf::from("/nonexistent/file.rgm"));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = synthetic_cfg(dir.path(), 0.0, 1);
        cfg.mode = Mode::Sweep;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = synthetic_cfg(dir.path(), 0.0, 1);
        cfg.hyper.beta = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_parses() {
        let text = r#"
            mode = "full"
            seed = 7
            out_dir = "/tmp/rgrl-test"

            [dataset.synthetic]
            clusters = 3
            subspace_dim = 2
            ambient_dim = 20
            per_cluster = 30
            noise = 0.05

            [encoder]
            kind = "fc"
            hidden = [16]
            latent = 8

            [hyper]
            alpha = 1e-4
            beta = 2.0
            gamma = 0.5
            norm = "l1"

            [train]
            pretrain_epochs = 10
            finetune_epochs = 5

            [affinity]
            clusters = 3
            subspace_dim = 2
            rho = 1.0

            [sweep]
            beta = [0.1, 1.0]
            gamma = [0.5]
        "#;
        let cfg = RunConfig::from_toml_str(text, "inline").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hyper.norm, PNorm::L1);
        assert_eq!(cfg.train.pretrain_epochs, 10);
        assert_eq!(cfg.sweep.as_ref().unwrap().beta.len(), 2);
        cfg.validate().unwrap();
    }

    #[test]
    fn conv_encoder_toml_parses() {
        let text = r#"
            out_dir = "/tmp/rgrl-conv"

            [dataset]
            path = "/tmp/never-checked.rgm"
            format = "rgm"
            sample_shape = [28, 28, 1]

            [encoder]
            kind = "conv"
            stride = 2
            layers = [
                { kernel = [5, 5], channels = 15 },
                { kernel = [3, 3], channels = 10 },
            ]

            [affinity]
            clusters = 10
            subspace_dim = 3
            rho = 2.0
        "#;
        let cfg = RunConfig::from_toml_str(text, "inline").unwrap();
        match &cfg.encoder {
            EncoderSpec::Conv { layers, stride } => {
                assert_eq!(*stride, 2);
                assert_eq!(layers.len(), 2);
                assert_eq!(layers[0].kernel, (5, 5));
            }
            _ => panic!("expected conv spec"),
        }
    }

    // Heavier end-to-end paths are exercised by the acceptance suite; here
    // a fast smoke test covers artifact writing and metric emission.
    #[test]
    fn quick_full_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(&dir.path().join("run"), 0.0, 2);
        cfg.train.pretrain_epochs = 30;
        cfg.train.finetune_epochs = 30;
        let outcome = run_full(&cfg, None).unwrap();
        assert_eq!(outcome.samples, 90);
        assert!(outcome.metrics.is_some());
        for p in [
            outcome.artifacts.checkpoint.as_ref().unwrap(),
            outcome.artifacts.affinity_matrix.as_ref().unwrap(),
            outcome.artifacts.affinity_image.as_ref().unwrap(),
            outcome.artifacts.predicted_labels.as_ref().unwrap(),
            outcome.artifacts.train_report.as_ref().unwrap(),
            outcome.artifacts.metrics.as_ref().unwrap(),
            outcome.artifacts.meta.as_ref().unwrap(),
        ] {
            assert!(p.exists(), "missing artifact {}", p.display());
        }
        // Emitted artifacts round-trip through the data-module loaders.
        let aff = data::read_rgm(outcome.artifacts.affinity_matrix.as_ref().unwrap()).unwrap();
        assert_eq!(aff.shape(), (90, 90));
        let labels = data::read_labels(outcome.artifacts.predicted_labels.as_ref().unwrap()).unwrap();
        assert_eq!(labels.len(), 90);
        let ckpt = model::load_checkpoint(outcome.artifacts.checkpoint.as_ref().unwrap()).unwrap();
        assert_eq!(ckpt.params.n(), 90);
    }

    #[test]
    fn empty_holdout_reproduces_run_full_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(&dir.path().join("full"), 0.0, 4);
        cfg.train.pretrain_epochs = 30;
        cfg.train.finetune_epochs = 60;
        let full = run_full(&cfg, None).unwrap();

        let mut oos_cfg = cfg.clone();
        oos_cfg.out_dir = dir.path().join("oos");
        oos_cfg.mode = Mode::Oos;
        oos_cfg.oos = Some(OosConfig {
            seed_fraction: 1.0,
            split_seed: 3,
        });
        let oos = run_oos(&oos_cfg, None, None).unwrap();
        assert_eq!(oos.oos.as_ref().unwrap().holdout_size, 0);
        assert_eq!(oos.metrics, full.metrics);
    }

    #[test]
    fn single_holdout_takes_nearest_seed_label() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(&dir.path().join("one"), 0.0, 5);
        cfg.train.pretrain_epochs = 30;
        cfg.train.finetune_epochs = 60;
        let ds = load_dataset(&cfg).unwrap();
        let n = ds.len();
        let split = OosSplit {
            seed_indices: (0..n - 1).collect(),
            holdout_indices: vec![n - 1],
        };
        let outcome = run_oos(&cfg, Some(split.clone()), None).unwrap();
        let predicted =
            data::read_labels(outcome.artifacts.predicted_labels.as_ref().unwrap()).unwrap();

        // Recompute the 1-NN assignment from the written checkpoint.
        let ckpt = model::load_checkpoint(outcome.artifacts.checkpoint.as_ref().unwrap()).unwrap();
        let desc = model::resolve_model(&cfg.encoder, ds.dim(), None).unwrap();
        let z = model::encode(&desc, &ckpt.params, &ds.x).unwrap();
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for s in 0..n - 1 {
            let mut d = 0.0;
            for r in 0..z.rows() {
                let diff = z.get(r, n - 1) - z.get(r, s);
                d += diff * diff;
            }
            if d < best_d {
                best_d = d;
                best = s;
            }
        }
        assert_eq!(predicted[n - 1], predicted[best]);
    }

    #[test]
    fn sweep_marks_one_best_row_and_keeps_grid_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(&dir.path().join("grid"), 0.0, 6);
        cfg.mode = Mode::Sweep;
        cfg.train.pretrain_epochs = 100;
        cfg.train.finetune_epochs = 500;
        cfg.hyper.norm = PNorm::L1;
        cfg.hyper.alpha = 0.1;
        cfg.sweep = Some(SweepConfig {
            beta: vec![0.0, 1.0],
            gamma: vec![0.0, 1.0],
        });
        let outcome = sweep(&cfg, None).unwrap();
        let rows = outcome.sweep.unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().filter(|r| r.best).count(), 1);
        let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.beta, r.gamma)).collect();
        assert_eq!(order, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        // Without any self-expression pressure the (0,0) point cannot be
        // the winner on subspace data.
        assert!(!rows[0].best, "the (0,0) grid point should underperform");
        assert!(outcome.artifacts.sweep_table.as_ref().unwrap().exists());
        let csv = std::fs::read_to_string(dir.path().join("grid").join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn subspace_training_concentrates_relation_mass() {
        // Off-block mass of |C| must shrink relative to initialization.
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg(&dir.path().join("run"), 0.0, 3);
        cfg.train.pretrain_epochs = 100;
        cfg.train.finetune_epochs = 400;
        let ds = load_dataset(&cfg).unwrap();
        let truth = ds.labels.clone().unwrap();
        let desc = model::resolve_model(&cfg.encoder, ds.dim(), None).unwrap();
        let tc = train_config(&cfg);

        let init = model::init_params(&desc, ds.len(), &mut rng::seeded(tc.seed));
        let initial_mass = block_mass(&init.c, &truth);

        let (params, _) = trainer::train(&desc, &ds.x, &cfg.hyper, &tc, None).unwrap();
        let trained_mass = block_mass(&params.c, &truth);
        assert!(
            trained_mass > initial_mass,
            "block mass did not improve: {trained_mass} vs {initial_mass}"
        );
    }
}
