//! ε-matching training loop.

use std::f64::consts::PI;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{Mat, Sgd, Tape, Var};
use crate::seed::{rng_for, STREAM_BATCH};

use super::model::{Encoded, Policy};
use super::PolicyError;

/// One supervised pair: policy input and the normalized expert chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Encoded,
    /// Flattened `(dx, dy, aperture)` triples, each in `[-1, 1]`.
    pub chunk: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Cosine decay from `lr` to `lr * floor` over `total` steps.
pub fn cosine_lr(lr: f64, floor: f64, step: u64, total: u64) -> f64 {
    let frac = if total <= 1 { 1.0 } else { (step as f64 / (total - 1) as f64).min(1.0) };
    lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (PI * frac).cos()))
}

/// Noise draws for a batch: per-row step index and ε.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub t: Vec<usize>,
    pub eps: Mat,
}

impl NoiseDraw {
    pub fn sample<R: Rng>(rows: usize, dim: usize, steps: usize, rng: &mut R) -> Self {
        let t = (0..rows).map(|_| rng.gen_range(0..steps)).collect();
        let eps = Mat::from_shape_fn((rows, dim), |_| rng.sample(StandardNormal));
        Self { t, eps }
    }
}

pub struct Trainer {
    pub policy: Policy,
    sgd: Sgd,
    /// Planned length of the run; sets the learning-rate schedule.
    pub total_steps: u64,
}

impl Trainer {
    pub fn new(policy: Policy, total_steps: u64) -> Self {
        let sgd = Sgd::new(&policy.params, policy.cfg.momentum, policy.cfg.grad_clip);
        Self { policy, sgd, total_steps }
    }

    /// Builds the ε-matching loss on a tape. Rows of `noise` are grouped by
    /// example: `noise_draws` consecutive rows per entry of `batch`.
    pub fn loss_tape(&self, tape: &mut Tape, batch: &[&Example], noise: &NoiseDraw) -> Result<Var, PolicyError> {
        let p = &self.policy;
        let k = noise.t.len() / batch.len();
        let dim = p.cfg.action_dim();
        let mut noisy = Mat::zeros((noise.t.len(), dim));
        for (r, t) in noise.t.iter().enumerate() {
            let ex = batch[r / k];
            if ex.chunk.len() != dim {
                return Err(PolicyError::DimMismatch(format!("chunk has {} values, expected {dim}", ex.chunk.len())));
            }
            let ab = p.schedule.alpha_bar[*t];
            for j in 0..dim {
                noisy[[r, j]] = ab.sqrt() * ex.chunk[j] + (1.0 - ab).sqrt() * noise.eps[[r, j]];
            }
        }
        let inputs: Vec<&Encoded> = batch.iter().map(|e| &e.input).collect();
        let raw = p.condition(tape, &inputs)?;
        let film = p.film_vars(tape, raw, k);
        let x = tape.constant(noisy);
        let pred = p.denoise_tape(tape, x, &noise.t, &film);
        Ok(tape.mse(pred, noise.eps.clone()))
    }

    /// Loss without an update.
    pub fn evaluate(&self, batch: &[&Example], noise: &NoiseDraw) -> Result<f64, PolicyError> {
        let mut tape = Tape::new();
        let l = self.loss_tape(&mut tape, batch, noise)?;
        Ok(tape.value(l)[[0, 0]])
    }

    /// One optimizer update on `batch` with the given noise.
    pub fn update(&mut self, batch: &[&Example], noise: &NoiseDraw) -> Result<StepMetrics, PolicyError> {
        if batch.is_empty() {
            return Err(PolicyError::DimMismatch("empty batch".into()));
        }
        let mut tape = Tape::new();
        let l = self.loss_tape(&mut tape, batch, noise)?;
        let loss = tape.value(l)[[0, 0]];
        self.policy.params.zero_grads();
        tape.backward(l, &mut self.policy.params);
        let step = self.policy.steps_trained;
        let cfg = &self.policy.cfg;
        let lr = cosine_lr(cfg.lr, cfg.lr_floor, step, self.total_steps);
        let grad_norm = self.sgd.step(&mut self.policy.params, lr);
        self.policy.steps_trained += 1;
        Ok(StepMetrics { step, loss, grad_norm, lr })
    }

    /// Samples a batch and its noise from the step's own stream, then updates.
    pub fn train_step(&mut self, data: &[Example]) -> Result<StepMetrics, PolicyError> {
        if data.is_empty() {
            return Err(PolicyError::DimMismatch("no training examples".into()));
        }
        let cfg = &self.policy.cfg;
        let mut rng = rng_for(cfg.seed, &[STREAM_BATCH, self.policy.steps_trained]);
        let batch: Vec<&Example> = (0..cfg.batch).map(|_| &data[rng.gen_range(0..data.len())]).collect();
        let noise = NoiseDraw::sample(cfg.batch * cfg.noise_draws, cfg.action_dim(), cfg.diffusion_steps, &mut rng);
        self.update(&batch, &noise)
    }

    /// Runs `steps` updates, appending one JSON line per `log_every` steps.
    pub fn run(
        &mut self,
        data: &[Example],
        steps: u64,
        log: Option<&Path>,
        log_every: u64,
    ) -> Result<Vec<StepMetrics>, PolicyError> {
        let mut file = match log {
            Some(path) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|source| PolicyError::Io { path: path.display().to_string(), source })?,
            ),
            None => None,
        };
        let mut out = Vec::new();
        for _ in 0..steps {
            let m = self.train_step(data)?;
            if log_every > 0 && (m.step % log_every == 0 || m.step + 1 == self.total_steps) {
                if let (Some(f), Some(path)) = (file.as_mut(), log) {
                    let line = serde_json::to_string(&m).expect("metrics serialize");
                    writeln!(f, "{line}").map_err(|source| PolicyError::Io { path: path.display().to_string(), source })?;
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tokenizer::encode_bag;
    use crate::policy::PolicyConfig;

    fn cfg() -> PolicyConfig {
        PolicyConfig {
            resolution: 32,
            patch: 8,
            width: 16,
            ff_hidden: 16,
            text_dim: 16,
            text_hidden: 16,
            denoiser_hidden: 32,
            horizon: 4,
            ..Default::default()
        }
    }

    fn examples(cfg: &PolicyConfig, n: usize) -> Vec<Example> {
        let mut rng = rng_for(11, &[0]);
        (0..n)
            .map(|i| Example {
                input: Encoded {
                    patches: (0..cfg.patches() * cfg.patch_dim()).map(|_| rng.gen()).collect(),
                    text: Some(encode_bag(&format!("place at ({:.3}, 0.500)", i as f64 / 10.0), cfg).unwrap()),
                    proprio: [i as f64 / n as f64, 0.5, 1.0, 0.0, 0.0, 0.0],
                },
                chunk: (0..cfg.action_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn lr_schedule_endpoints() {
        assert!((cosine_lr(0.1, 0.1, 0, 100) - 0.1).abs() < 1e-15);
        assert!((cosine_lr(0.1, 0.1, 99, 100) - 0.01).abs() < 1e-15);
        assert!(cosine_lr(0.1, 0.1, 50, 100) < 0.1);
    }

    #[test]
    fn loss_is_zero_when_prediction_is_the_noise() {
        let mut tape = Tape::new();
        let eps = Mat::from_shape_fn((3, 4), |(i, j)| (i as f64) - 0.3 * j as f64);
        let pred = tape.constant(eps.clone());
        let l = tape.mse(pred, eps);
        assert_eq!(tape.value(l)[[0, 0]], 0.0);
    }

    #[test]
    fn fixed_batch_loss_halves() {
        let cfg = cfg();
        let data = examples(&cfg, 8);
        let mut trainer = Trainer::new(Policy::new(cfg.clone()).unwrap(), 200);
        let batch: Vec<&Example> = data.iter().collect();
        let mut rng = rng_for(5, &[1]);
        let probe = NoiseDraw::sample(8 * cfg.noise_draws, cfg.action_dim(), cfg.diffusion_steps, &mut rng);
        let mut first = None;
        for _ in 0..200 {
            let noise = NoiseDraw::sample(8 * cfg.noise_draws, cfg.action_dim(), cfg.diffusion_steps, &mut rng);
            let m = trainer.update(&batch, &noise).unwrap();
            assert!(m.loss >= 0.0);
            first.get_or_insert(trainer.evaluate(&batch, &probe).unwrap());
        }
        let first = first.unwrap();
        let last = trainer.evaluate(&batch, &probe).unwrap();
        assert!(last <= 0.5 * first, "loss {first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = cfg();
        let data = examples(&cfg, 5);
        let run = || {
            let mut t = Trainer::new(Policy::new(cfg.clone()).unwrap(), 10);
            let m = t.run(&data, 3, None, 1).unwrap();
            (m, t.policy.params.values)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn metrics_log_has_one_line_per_logged_step() {
        let cfg = cfg();
        let data = examples(&cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut t = Trainer::new(Policy::new(cfg).unwrap(), 4);
        t.run(&data, 4, Some(&path), 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let steps: Vec<u64> = text.lines().map(|l| serde_json::from_str::<StepMetrics>(l).unwrap().step).collect();
        assert_eq!(steps, vec![0, 2, 3]);
    }
}
