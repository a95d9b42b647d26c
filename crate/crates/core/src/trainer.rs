//! Two-stage optimization: pre-train the plain auto-encoder, then fine-tune
//! the full objective with Adam, full-batch (the self-expression layer binds
//! each step to the whole sample set).

use crate::error::{Error, Result};
use crate::model::{
    self, enforce_diag_zero, Gradients, Hyperparams, LossTerms, ModelDesc, NetworkParams,
};
use crate::numerics::rng;
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
    #[serde(default = "default_pretrain_lr")]
    pub pretrain_lr: f64,
    #[serde(default = "default_finetune_lr")]
    pub finetune_lr: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Optional mini-batch size for pre-training only; fine-tuning is
    /// always full-batch.
    #[serde(default)]
    pub pretrain_batch: Option<usize>,
}

fn default_pretrain_epochs() -> usize {
    50
}
fn default_finetune_epochs() -> usize {
    30
}
fn default_pretrain_lr() -> f64 {
    1e-3
}
fn default_finetune_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: default_pretrain_epochs(),
            finetune_epochs: default_finetune_epochs(),
            pretrain_lr: default_pretrain_lr(),
            finetune_lr: default_finetune_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            seed: 0,
            pretrain_batch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pretrain_lr <= 0.0 || self.finetune_lr <= 0.0 {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.pretrain_batch == Some(0) {
            return Err(Error::config("pretrain batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Pretrain => write!(f, "pretrain"),
            Stage::Finetune => write!(f, "finetune"),
        }
    }
}

/// Loss-term values observed at the start of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    /// Optimizer steps taken during the epoch; always 1 in fine-tuning.
    pub steps: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub pretrain_secs: f64,
    pub finetune_secs: f64,
    /// SHA-256 of the final parameters, for reproducibility checks.
    pub param_checksum: String,
}

impl TrainReport {
    pub fn stage_records(&self, stage: Stage) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(move |r| r.stage == stage)
    }

    /// One JSON object per line: every epoch record, then a summary line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let name = path.display().to_string();
        let mut out = String::new();
        for record in &self.epochs {
            let line = serde_json::to_string(record)
                .map_err(|e| Error::parse(&name, e.to_string()))?;
            out.push_str(&line);
            out.push('\n');
        }
        let summary = serde_json::json!({
            "pretrain_secs": self.pretrain_secs,
            "finetune_secs": self.finetune_secs,
            "param_checksum": self.param_checksum,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        std::fs::write(path, out).map_err(|e| Error::io(&name, e))
    }
}

/// Read-only view of the state after one epoch, for progress reporting and
/// invariant assertions in tests.
pub struct EpochEvent<'a> {
    pub stage: Stage,
    pub epoch: usize,
    pub total_epochs: usize,
    pub terms: &'a LossTerms,
    pub params: &'a NetworkParams,
}

pub type EpochHook<'a> = &'a (dyn Fn(&EpochEvent<'_>) + Sync);

// ── Adam ──────────────────────────────────────────────────────────────

/// First/second moment estimates, one pair per parameter tensor in
/// canonical order.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over every parameter tensor.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut tensors = params.tensors_mut();
    let grad_tensors = grads.tensors();
    if tensors.len() != grad_tensors.len()
        || tensors.len() != state.m.len()
        || tensors
            .iter()
            .zip(grad_tensors.iter())
            .any(|(p, g)| p.shape() != g.shape())
        || tensors
            .iter()
            .zip(state.m.iter())
            .any(|(p, m)| p.shape() != m.shape())
    {
        return Err(Error::contract(
            "adam_step: gradient/state shapes do not match parameters",
        ));
    }

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);

    for ((p, g), (m, v)) in tensors
        .iter_mut()
        .zip(grad_tensors.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            md[i] = cfg.adam_beta1 * md[i] + (1.0 - cfg.adam_beta1) * gd[i];
            vd[i] = cfg.adam_beta2 * vd[i] + (1.0 - cfg.adam_beta2) * gd[i] * gd[i];
            let m_hat = md[i] / bias1;
            let v_hat = vd[i] / bias2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

// ── training stages ───────────────────────────────────────────────────

/// Initialize from the seed and minimize plain reconstruction; C keeps its
/// initialization value (its gradient is identically zero here).
pub fn pretrain(
    desc: &ModelDesc,
    x: &Matrix,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_>>,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    x.check_finite("pretrain input")?;
    let mut stream = rng::seeded(cfg.seed);
    let mut params = model::init_params(desc, x.cols(), &mut stream);
    let records = pretrain_existing(desc, &mut params, x, cfg, &mut stream, hook)?;
    Ok((params, records))
}

fn pretrain_existing(
    desc: &ModelDesc,
    params: &mut NetworkParams,
    x: &Matrix,
    cfg: &TrainConfig,
    stream: &mut rng::Rng,
    hook: Option<EpochHook<'_>>,
) -> Result<Vec<EpochRecord>> {
    let n = x.cols();
    let mut state = AdamState::new(params);
    let mut records = Vec::with_capacity(cfg.pretrain_epochs);

    for epoch in 0..cfg.pretrain_epochs {
        let (loss, steps) = match cfg.pretrain_batch {
            None | Some(0) => {
                let (loss, grads) = model::reconstruction_backward(desc, params, x)?;
                check_finite_loss(loss, Stage::Pretrain, epoch)?;
                adam_step(params, &grads, &mut state, cfg.pretrain_lr, cfg)?;
                (loss, 1)
            }
            Some(batch) => {
                let batch = batch.min(n);
                let mut order: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = rand::Rng::gen_range(stream, 0..=i);
                    order.swap(i, j);
                }
                let mut epoch_loss = 0.0;
                let mut steps = 0;
                for chunk in order.chunks(batch) {
                    let xb = x.select_cols(chunk);
                    let (loss, grads) = model::reconstruction_backward(desc, params, &xb)?;
                    check_finite_loss(loss, Stage::Pretrain, epoch)?;
                    adam_step(params, &grads, &mut state, cfg.pretrain_lr, cfg)?;
                    epoch_loss += loss;
                    steps += 1;
                }
                (epoch_loss, steps)
            }
        };
        let terms = LossTerms {
            reconstruction: loss,
            ..LossTerms::zeros()
        };
        records.push(EpochRecord {
            stage: Stage::Pretrain,
            epoch,
            steps,
            terms,
        });
        if let Some(hook) = hook {
            hook(&EpochEvent {
                stage: Stage::Pretrain,
                epoch,
                total_epochs: cfg.pretrain_epochs,
                terms: &terms,
                params,
            });
        }
    }
    Ok(records)
}

/// Joint optimization of the full objective over encoder, C, and decoder.
/// The similarity graph is rebuilt from the current C every step but held
/// constant inside the step's gradient; diag(C)=0 is re-imposed after every
/// update.
pub fn finetune(
    desc: &ModelDesc,
    mut params: NetworkParams,
    x: &Matrix,
    hp: &Hyperparams,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_>>,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    hp.validate()?;
    x.check_finite("finetune input")?;
    if x.cols() != params.n() {
        return Err(Error::contract(format!(
            "finetune: {} samples but the self-expression layer holds {}",
            x.cols(),
            params.n()
        )));
    }

    let mut state = AdamState::new(&params);
    let mut records = Vec::with_capacity(cfg.finetune_epochs);

    for epoch in 0..cfg.finetune_epochs {
        let l_n = model::step_laplacian(&params, hp)?;
        let (terms, mut grads) = model::backward(desc, &params, x, hp, l_n.as_ref())?;
        check_finite_loss(terms.total(), Stage::Finetune, epoch)?;

        // The diagonal of C is not a free parameter: project its gradient
        // so the Adam moments never accumulate along the constraint.
        enforce_diag_zero(&mut grads.c);
        adam_step(&mut params, &grads, &mut state, cfg.finetune_lr, cfg)?;
        enforce_diag_zero(&mut params.c);

        records.push(EpochRecord {
            stage: Stage::Finetune,
            epoch,
            steps: 1,
            terms,
        });
        if let Some(hook) = hook {
            hook(&EpochEvent {
                stage: Stage::Finetune,
                epoch,
                total_epochs: cfg.finetune_epochs,
                terms: &terms,
                params: &params,
            });
        }
    }
    Ok((params, records))
}

/// Both stages, with wall-clock and a final parameter checksum.
pub fn train(
    desc: &ModelDesc,
    x: &Matrix,
    hp: &Hyperparams,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_>>,
) -> Result<(NetworkParams, TrainReport)> {
    let start = Instant::now();
    let (params, mut epochs) = pretrain(desc, x, cfg, hook)?;
    let pretrain_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (params, finetune_epochs) = finetune(desc, params, x, hp, cfg, hook)?;
    let finetune_secs = start.elapsed().as_secs_f64();

    epochs.extend(finetune_epochs);
    let report = TrainReport {
        epochs,
        pretrain_secs,
        finetune_secs,
        param_checksum: params.checksum(),
    };
    Ok((params, report))
}

fn check_finite_loss(loss: f64, stage: Stage, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            stage: stage.to_string(),
            epoch,
            detail: format!("loss is {loss}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{resolve_model, EncoderSpec, PNorm};
    use crate::numerics::rng::{seeded, uniform_matrix};

    fn fc(hidden: Vec<usize>, latent: usize) -> EncoderSpec {
        EncoderSpec::Fc { hidden, latent }
    }

    fn quick_cfg(pretrain: usize, finetune: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            pretrain_epochs: pretrain,
            finetune_epochs: finetune,
            pretrain_lr: 1e-2,
            finetune_lr: 1e-2,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_alone() {
        let desc = resolve_model(&fc(vec![], 2), 3, None).unwrap();
        let mut params = model::init_params(&desc, 4, &mut seeded(1));
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.1, &TrainConfig::default()).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        // From zero state, bias correction makes the first update exactly
        // -lr * g / (|g| + eps).
        let desc = resolve_model(&fc(vec![], 2), 3, None).unwrap();
        let mut params = model::init_params(&desc, 4, &mut seeded(2));
        let before = params.clone();
        let mut grads = params.zeros_like();
        for t in grads.tensors_mut() {
            let data = t.data_mut();
            for (i, v) in data.iter_mut().enumerate() {
                *v = ((i % 5) as f64) - 2.0;
            }
        }
        let cfg = TrainConfig::default();
        let lr = 0.05;
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, lr, &cfg).unwrap();
        for ((p, q), g) in params
            .tensors()
            .iter()
            .zip(before.tensors().iter())
            .zip(grads.tensors().iter())
        {
            for i in 0..p.data().len() {
                let gv = g.data()[i];
                let want = q.data()[i] - lr * gv / (gv.abs() + cfg.adam_eps);
                assert!((p.data()[i] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_descends_a_convex_quadratic() {
        // Minimize ||W - T||^2 over a single weight tensor.
        let desc = resolve_model(&fc(vec![], 3), 3, None).unwrap();
        let mut params = model::init_params(&desc, 4, &mut seeded(3));
        let target = uniform_matrix(&mut seeded(4), 3, 3, -1.0, 1.0);
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(&params);
        let loss = |p: &NetworkParams| p.encoder[0].w.sub(&target).frob_norm_sq();
        let start = loss(&params);
        for _ in 0..100 {
            let mut grads = params.zeros_like();
            grads.encoder[0].w = params.encoder[0].w.sub(&target).scale(2.0);
            adam_step(&mut params, &grads, &mut state, 0.05, &cfg).unwrap();
        }
        assert!(loss(&params) < start, "{} !< {start}", loss(&params));
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let desc = resolve_model(&fc(vec![], 2), 3, None).unwrap();
        let mut params = model::init_params(&desc, 4, &mut seeded(5));
        let other = model::init_params(&resolve_model(&fc(vec![], 3), 3, None).unwrap(), 4, &mut seeded(5));
        let grads = other.zeros_like();
        let mut state = AdamState::new(&params);
        assert!(adam_step(&mut params, &grads, &mut state, 0.1, &TrainConfig::default()).is_err());
    }

    #[test]
    fn pretrain_drives_rank_one_data_to_near_zero_loss() {
        // Rank-1 data with a linear 1-latent auto-encoder: PCA attains zero,
        // so training should get very close.
        let u: Vec<f64> = vec![1.0, -2.0, 0.5];
        let v: Vec<f64> = vec![0.3, 1.0, -0.7, 0.2, 0.9, -1.1];
        let x = Matrix::from_fn(3, 6, |i, j| u[i] * v[j]);
        let desc = resolve_model(&fc(vec![], 1), 3, None).unwrap();
        let cfg = TrainConfig {
            pretrain_epochs: 800,
            pretrain_lr: 2e-2,
            seed: 6,
            ..TrainConfig::default()
        };
        let (params, records) = pretrain(&desc, &x, &cfg, None).unwrap();
        let final_loss = model::reconstruction_loss(&desc, &params, &x).unwrap();
        assert!(
            final_loss < 1e-4 * x.frob_norm_sq(),
            "final reconstruction {final_loss}"
        );
        assert!(records.len() == 800);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let desc = resolve_model(&fc(vec![4], 2), 5, None).unwrap();
        let x = uniform_matrix(&mut seeded(7), 5, 6, 0.0, 1.0);
        let cfg = quick_cfg(0, 0, 99);
        let (params, records) = pretrain(&desc, &x, &cfg, None).unwrap();
        assert!(records.is_empty());
        let fresh = model::init_params(&desc, 6, &mut seeded(99));
        assert_eq!(params, fresh);
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let desc = resolve_model(&fc(vec![4], 2), 5, None).unwrap();
        let x = uniform_matrix(&mut seeded(8), 5, 8, 0.0, 1.0);
        let hp = Hyperparams::default();
        let cfg = quick_cfg(20, 20, 11);
        let (p1, r1) = train(&desc, &x, &hp, &cfg, None).unwrap();
        let (p2, r2) = train(&desc, &x, &hp, &cfg, None).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.epochs, r2.epochs);
        assert_eq!(r1.param_checksum, r2.param_checksum);
    }

    #[test]
    fn minibatch_pretraining_is_deterministic_too() {
        let desc = resolve_model(&fc(vec![4], 2), 5, None).unwrap();
        let x = uniform_matrix(&mut seeded(9), 5, 10, 0.0, 1.0);
        let cfg = TrainConfig {
            pretrain_epochs: 10,
            pretrain_batch: Some(3),
            seed: 12,
            ..TrainConfig::default()
        };
        let (p1, r1) = pretrain(&desc, &x, &cfg, None).unwrap();
        let (p2, r2) = pretrain(&desc, &x, &cfg, None).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        // ceil(10 / 3) = 4 optimizer steps per epoch.
        assert!(r1.iter().all(|r| r.steps == 4));
    }

    #[test]
    fn huge_alpha_crushes_c() {
        let desc = resolve_model(&fc(vec![], 3), 6, None).unwrap();
        let x = uniform_matrix(&mut seeded(13), 6, 10, -1.0, 1.0);
        let hp = Hyperparams {
            alpha: 1e6,
            beta: 0.0,
            gamma: 0.0,
            norm: PNorm::L2,
            locality: false,
        };
        let cfg = TrainConfig {
            pretrain_epochs: 50,
            finetune_epochs: 400,
            pretrain_lr: 1e-2,
            finetune_lr: 1e-3,
            seed: 14,
            ..TrainConfig::default()
        };
        let (params, _) = train(&desc, &x, &hp, &cfg, None).unwrap();
        assert!(params.c.max_abs() < 1e-3, "‖C‖_inf = {}", params.c.max_abs());
    }

    #[test]
    fn degenerate_weights_leave_only_reconstruction() {
        // With every extra weight zero and locality off, fine-tuning keeps
        // optimizing reconstruction (now through the self-expression layer).
        let desc = resolve_model(&fc(vec![], 3), 6, None).unwrap();
        let x = uniform_matrix(&mut seeded(15), 6, 10, -1.0, 1.0);
        let hp = Hyperparams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            norm: PNorm::L2,
            locality: false,
        };
        let cfg = TrainConfig {
            pretrain_epochs: 100,
            finetune_epochs: 300,
            pretrain_lr: 1e-2,
            finetune_lr: 1e-2,
            seed: 16,
            ..TrainConfig::default()
        };
        let (_, report) = train(&desc, &x, &hp, &cfg, None).unwrap();
        let finetune: Vec<&EpochRecord> = report.stage_records(Stage::Finetune).collect();
        for r in &finetune {
            assert_eq!(r.terms.regularizer, 0.0);
            assert_eq!(r.terms.subspace_latent, 0.0);
            assert_eq!(r.terms.subspace_input, 0.0);
            assert_eq!(r.terms.locality_trace, 0.0);
            assert_eq!(r.steps, 1);
        }
        let first = finetune.first().unwrap().terms.reconstruction;
        let last = finetune.last().unwrap().terms.reconstruction;
        assert!(last < first, "reconstruction did not improve: {last} !< {first}");
    }

    #[test]
    fn diag_c_stays_zero_through_the_whole_run() {
        let desc = resolve_model(&fc(vec![4], 2), 5, None).unwrap();
        let x = uniform_matrix(&mut seeded(17), 5, 8, 0.0, 1.0);
        let hp = Hyperparams::default();
        let cfg = quick_cfg(10, 40, 18);
        let hook = |ev: &EpochEvent<'_>| {
            for i in 0..ev.params.c.rows() {
                assert_eq!(ev.params.c.get(i, i), 0.0, "diag(C) nonzero at {} epoch {}", ev.stage, ev.epoch);
            }
        };
        train(&desc, &x, &hp, &cfg, Some(&hook)).unwrap();
    }

    #[test]
    fn pretrain_loss_trend_holds() {
        let desc = resolve_model(&fc(vec![6], 3), 8, None).unwrap();
        let x = uniform_matrix(&mut seeded(19), 8, 12, 0.0, 1.0);
        let cfg = TrainConfig {
            pretrain_epochs: 200,
            pretrain_lr: 5e-3,
            seed: 20,
            ..TrainConfig::default()
        };
        let (_, records) = pretrain(&desc, &x, &cfg, None).unwrap();
        let first = records.first().unwrap().terms.reconstruction;
        let tail = &records[records.len() - records.len() / 10..];
        let tail_mean =
            tail.iter().map(|r| r.terms.reconstruction).sum::<f64>() / tail.len() as f64;
        assert!(tail_mean <= first, "tail mean {tail_mean} vs first epoch {first}");
    }

    #[test]
    fn divergence_reports_stage_and_epoch() {
        let desc = resolve_model(&fc(vec![], 2), 4, None).unwrap();
        let x = uniform_matrix(&mut seeded(21), 4, 6, 0.0, 1.0);
        // A learning rate this absurd overflows the forward pass after the
        // first step.
        let cfg = TrainConfig {
            pretrain_epochs: 20,
            pretrain_lr: 1e155,
            seed: 22,
            ..TrainConfig::default()
        };
        match pretrain(&desc, &x, &cfg, None) {
            Err(Error::Divergence { stage, epoch, .. }) => {
                assert_eq!(stage, "pretrain");
                assert!(epoch > 0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn report_jsonl_round_trips_line_count() {
        let desc = resolve_model(&fc(vec![], 2), 4, None).unwrap();
        let x = uniform_matrix(&mut seeded(23), 4, 6, 0.0, 1.0);
        let (_, report) = train(&desc, &x, &Hyperparams::default(), &quick_cfg(3, 2, 1), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        report.write_jsonl(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5 + 1);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["stage"], "pretrain");
        assert!(first["reconstruction"].is_number());
    }
}
