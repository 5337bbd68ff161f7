//! Causal-LM training: AdamW with decoupled weight decay, global-norm
//! clipping, and a linear warmup / linear decay schedule.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PackedSequence;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Transformer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub init_lr: f64,
    pub warmup_steps: u64,
    /// Learning rate reached at `total_steps`.
    pub final_lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub total_steps: u64,
    /// Tokens per optimizer step, rounded down to whole packed sequences.
    pub batch_tokens: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 3e-4,
            init_lr: 1e-7,
            warmup_steps: 2000,
            final_lr: 0.0,
            weight_decay: 0.1,
            clip_norm: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            total_steps: 10_000,
            batch_tokens: 2048,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_lr > 0.0 && self.init_lr <= self.peak_lr) {
            return Err(Error::config("need 0 < init_lr <= peak_lr"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config("warmup_steps exceeds total_steps"));
        }
        if !(0.0..=self.peak_lr).contains(&self.final_lr) {
            return Err(Error::config("final_lr must lie in [0, peak_lr]"));
        }
        if !(self.clip_norm > 0.0) || self.batch_tokens == 0 {
            return Err(Error::config("clip_norm and batch_tokens must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    fn sequences_per_step(&self, context_len: usize) -> usize {
        (self.batch_tokens / context_len.max(1)).max(1)
    }
}

/// Linear from `init_lr` to `peak_lr` over the warmup, then linear to
/// `final_lr` at `total_steps`.
pub fn lr_at_step(cfg: &TrainConfig, step: u64) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::input(format!("step {step} beyond total_steps {}", cfg.total_steps)));
    }
    if step < cfg.warmup_steps {
        let frac = step as f64 / cfg.warmup_steps as f64;
        return Ok(cfg.init_lr + (cfg.peak_lr - cfg.init_lr) * frac);
    }
    let span = cfg.total_steps - cfg.warmup_steps;
    if span == 0 {
        return Ok(cfg.peak_lr);
    }
    let frac = (step - cfg.warmup_steps) as f64 / span as f64;
    Ok(cfg.peak_lr + (cfg.final_lr - cfg.peak_lr) * frac)
}

/// Adam moments plus the decay mask from the parameter layout.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(model: &Transformer<f32>) -> Self {
        let n = model.parameter_count();
        let mut decay = vec![false; n];
        for e in model.layout().entries() {
            decay[e.range()].fill(e.decay);
        }
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            decay,
            t: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f32], grads: &[f32], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = (lr / c1) as f32;
        let c2s = c2.sqrt() as f32;
        let eps = cfg.adam_eps as f32;
        let shrink = (1.0 - lr * cfg.weight_decay) as f32;
        let (b1f, b2f) = (b1 as f32, b2 as f32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1f * self.m[i] + (1.0 - b1f) * g;
            self.v[i] = b2f * self.v[i] + (1.0 - b2f) * g * g;
            if self.decay[i] {
                params[i] *= shrink;
            }
            params[i] -= step * self.m[i] / (self.v[i].sqrt() / c2s + eps);
        }
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean cross-entropy over counted positions, before the update.
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Global gradient norm actually applied.
    pub clipped_norm: f64,
}

pub fn trace_to_csv(trace: &[StepRecord]) -> String {
    let mut s = String::from("step,lr,loss,grad_norm\n");
    for r in trace {
        writeln!(s, "{},{},{},{}", r.step, r.lr, r.loss, r.grad_norm).expect("string write");
    }
    s
}

/// Mean next-token loss and gradient over a batch of packed sequences.
pub fn batch_gradient(model: &Transformer<f32>, batch: &[&PackedSequence], grads: &mut [f32]) -> Result<f64> {
    let targets: Vec<_> = batch.iter().map(|s| s.targets()).collect();
    let count: usize = targets.iter().map(|t| t.iter().flatten().count()).sum();
    if count == 0 {
        return Err(Error::input("batch has no loss positions (all padding)"));
    }
    grads.fill(0.0);
    let w = 1.0 / count as f32;
    let mut total = 0.0;
    for (seq, t) in batch.iter().zip(&targets) {
        total += model.accumulate_gradients(&seq.ids, t, w, seq.attention_segments(), grads)?.0;
    }
    Ok(total / count as f64)
}

/// Mean next-token loss without gradients.
pub fn evaluate_loss(model: &Transformer<f32>, seqs: &[PackedSequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in seqs {
        let out = model.forward(
            &s.ids,
            &crate::model::ForwardOptions {
                segments: s.attention_segments(),
                ..Default::default()
            },
        )?;
        let v = model.config().vocab_size;
        for (t, target) in s.targets().iter().enumerate() {
            if let Some(target) = target {
                let row = &out.logits[t * v..(t + 1) * v];
                total += (crate::tensor::log_sum_exp(row) - row[*target as usize]) as f64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::input("no loss positions"));
    }
    Ok(total / count as f64)
}

fn global_norm(g: &[f32]) -> f64 {
    g.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Owns the model and optimizer state across steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Transformer<f32>,
    pub opt: AdamW,
    pub cfg: TrainConfig,
    pub step: u64,
    rng: ChaCha8Rng,
    grads: Vec<f32>,
    order: Vec<usize>,
    order_epoch: Option<u64>,
}

impl Trainer {
    pub fn new(model: Transformer<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = AdamW::new(&model);
        let grads = vec![0.0; model.parameter_count()];
        Ok(Self {
            model,
            opt,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            step: 0,
            grads,
            order: Vec::new(),
            order_epoch: None,
        })
    }

    /// Resumes from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: Checkpoint, cfg: TrainConfig) -> Result<Self> {
        let mut t = Self::new(ck.model, cfg)?;
        t.step = ck.step;
        if let Some((m, v)) = ck.moments {
            t.opt.m = m;
            t.opt.v = v;
            t.opt.t = ck.step;
        }
        if let Some(rng) = ck.rng {
            t.rng = rng;
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            step: self.step,
            moments: Some((self.opt.m.clone(), self.opt.v.clone())),
            rng: Some(self.rng.clone()),
        }
    }

    /// One optimizer step on an explicit batch.
    pub fn step_on(&mut self, batch: &[&PackedSequence]) -> Result<StepRecord> {
        if self.step >= self.cfg.total_steps {
            return Err(Error::config("training already reached total_steps"));
        }
        let lr = lr_at_step(&self.cfg, self.step)?;
        let loss = batch_gradient(&self.model, batch, &mut self.grads)?;
        let grad_norm = global_norm(&self.grads);
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                step: self.step as usize,
                detail: format!("loss {loss}, gradient norm {grad_norm}"),
            });
        }
        let mut clipped_norm = grad_norm;
        if grad_norm > self.cfg.clip_norm {
            let scale = (self.cfg.clip_norm / grad_norm) as f32;
            for g in self.grads.iter_mut() {
                *g *= scale;
            }
            clipped_norm = global_norm(&self.grads);
        }
        self.opt.update(self.model.params_mut(), &self.grads, lr, &self.cfg);
        self.step += 1;
        Ok(StepRecord {
            step: self.step - 1,
            lr,
            loss,
            grad_norm,
            clipped_norm,
        })
    }

    /// Draws the next batch from `data`. Sequence order is a fresh
    /// permutation per epoch, derived from the step count alone so that a
    /// resumed run sees the same batches.
    pub fn step_from(&mut self, data: &[PackedSequence]) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(Error::input("no training sequences"));
        }
        let n = data.len();
        let per_step = self.cfg.sequences_per_step(data[0].ids.len()).min(n);
        let first = self.step as usize * per_step;
        let mut batch = Vec::with_capacity(per_step);
        for k in first..first + per_step {
            let epoch = (k / n) as u64;
            if self.order_epoch != Some(epoch) || self.order.len() != n {
                let mut rng = self.rng.clone();
                rng.set_stream(epoch);
                self.order = (0..n).collect();
                self.order.shuffle(&mut rng);
                self.order_epoch = Some(epoch);
            }
            batch.push(&data[self.order[k % n]]);
        }
        self.step_on(&batch)
    }
}

/// Trains until `total_steps`, calling `observe` after every step.
pub fn train(
    model: Transformer<f32>,
    data: &[PackedSequence],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&StepRecord, &Trainer),
) -> Result<(Checkpoint, Vec<StepRecord>)> {
    let vocab = model.config().vocab_size;
    if let Some(bad) = data.iter().flat_map(|s| &s.ids).find(|&&id| id as usize >= vocab) {
        return Err(Error::input(format!("token id {bad} outside model vocab {vocab}")));
    }
    let mut t = Trainer::new(model, cfg.clone())?;
    let mut trace = Vec::with_capacity(cfg.total_steps as usize);
    while t.step < cfg.total_steps {
        let rec = t.step_from(data)?;
        observe(&rec, &t);
        trace.push(rec);
    }
    Ok((t.checkpoint(), trace))
}
