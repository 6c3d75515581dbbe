//! Mini-batch training with validation early stopping, and the trained
//! model's text format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::gru::PARAM_NAMES;
use super::model::{batch_loss_grad, mae_loss, HeadMode, SeqModel};
use super::dense::{DenseHead, Mlp};
use super::gru::GruParams;
use crate::error::{Error, Result};
use crate::features::YearlyFeatureVector;
use crate::scalar::{sign0, Scalar};
use crate::seqdata::{ScaledSample, ScalingStats, SeqConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub hidden_size: usize,
    pub head_mode: HeadMode,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 500,
            batch_size: 32,
            dropout_rate: 0.2,
            early_stop_patience: 50,
            validation_fraction: 0.1,
            hidden_size: 10,
            head_mode: HeadMode::Final,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must be in [0, 1)");
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return bad("batch size and hidden size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub model: SeqModel<T>,
    pub scaling: ScalingStats,
    pub seed: u64,
    pub best_epoch: usize,
    /// Mean training loss per epoch (with dropout).
    pub train_trace: Vec<T>,
    /// Validation loss per epoch (without dropout).
    pub val_trace: Vec<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn config(&self) -> SeqConfig {
        self.model.config
    }

    /// Runs the model on unscaled feature rows and returns amperes, clamped at 0.
    pub fn predict(&self, steps: &[YearlyFeatureVector]) -> Result<Vec<f64>> {
        let x = self.scaling.scale_steps::<T>(steps);
        Ok(self
            .model
            .predict(&x)?
            .into_iter()
            .map(|s| self.scaling.invert_target(s.as_f64()).max(0.0))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[T]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let m = &self.model;
        let mut s = String::new();
        writeln!(s, "format=ltlf-seq-model-1").unwrap();
        writeln!(s, "config={}", m.config).unwrap();
        writeln!(s, "head_mode={}", m.head_mode).unwrap();
        writeln!(s, "hidden_size={}", m.gru.hidden_size).unwrap();
        writeln!(s, "input_size={}", m.gru.input_size).unwrap();
        writeln!(s, "head_out={}", m.head.out_size).unwrap();
        writeln!(s, "dropout_rate={}", m.dropout_rate).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "best_epoch={}", self.best_epoch).unwrap();
        for (name, v) in PARAM_NAMES.iter().zip(m.gru.slices()) {
            writeln!(s, "gru.{name}={}", join(v)).unwrap();
        }
        writeln!(s, "head.w={}", join(&m.head.w)).unwrap();
        writeln!(s, "head.b={}", join(&m.head.b)).unwrap();
        self.scaling.write_text(&mut s);
        writeln!(s, "trace.train={}", join(&self.train_trace)).unwrap();
        writeln!(s, "trace.val={}", join(&self.val_trace)).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| l.split_once('=').ok_or_else(|| Error::Parse(format!("model: bad line `{l}`"))))
            .collect::<Result<_>>()?;
        let get = |k: &str| -> Result<String> {
            kv.get(k)
                .map(|v| v.to_string())
                .ok_or_else(|| Error::Parse(format!("model: missing `{k}`")))
        };
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Parse(format!("model: bad `{k}`"))) };
        let vec = |k: &str, len: usize| -> Result<Vec<T>> {
            let raw = get(k)?;
            let v: Vec<T> = if raw.is_empty() {
                Vec::new()
            } else {
                raw.split(',')
                    .map(|x| x.parse::<T>().map_err(|_| Error::Parse(format!("model: `{k}` bad number `{x}`"))))
                    .collect::<Result<_>>()?
            };
            if len != usize::MAX && v.len() != len {
                return Err(Error::Parse(format!("model: `{k}` has {} values, expected {len}", v.len())));
            }
            Ok(v)
        };
        if get("format")? != "ltlf-seq-model-1" {
            return Err(Error::Parse("model: unknown format".into()));
        }
        let config: SeqConfig = get("config")?.parse()?;
        let (hs, is, out) = (num("hidden_size")?, num("input_size")?, num("head_out")?);
        let mut gru = GruParams::zeros(hs, is);
        for (name, slot) in PARAM_NAMES.iter().zip(gru.slices_mut()) {
            let len = slot.len();
            *slot = vec(&format!("gru.{name}"), len)?;
        }
        let head = DenseHead {
            in_size: hs,
            out_size: out,
            w: vec("head.w", hs * out)?,
            b: vec("head.b", out)?,
        };
        let model = SeqModel {
            config,
            head_mode: get("head_mode")?.parse()?,
            dropout_rate: get("dropout_rate")?
                .parse()
                .map_err(|_| Error::Parse("model: bad dropout_rate".into()))?,
            gru,
            head,
        };
        Ok(Self {
            model,
            scaling: ScalingStats::read_text(&get)?,
            seed: get("seed")?.parse().map_err(|_| Error::Parse("model: bad seed".into()))?,
            best_epoch: num("best_epoch")?,
            train_trace: vec("trace.train", usize::MAX)?,
            val_trace: vec("trace.val", usize::MAX)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn view<T>(samples: &[ScaledSample<T>], idx: &[usize]) -> Vec<(Vec<Vec<T>>, Vec<T>)>
where
    T: Clone,
{
    idx.iter()
        .map(|&i| (samples[i].inputs.clone(), samples[i].targets.clone()))
        .collect()
}

const MAX_REDRAWS: usize = 20;

/// True when some ReLU output is zero on every sample, so it gets no gradient.
fn has_dead_output<T: Scalar>(outs: &[Vec<T>]) -> bool {
    let width = outs.first().map_or(0, Vec::len);
    (0..width).any(|j| outs.iter().all(|o| o[j] <= T::zero()))
}

fn eval_loss<T: Scalar>(model: &SeqModel<T>, data: &[(Vec<Vec<T>>, Vec<T>)]) -> Result<T> {
    let outs = data.iter().map(|(x, _)| model.predict(x)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<T>> = data.iter().map(|(_, y)| y.clone()).collect();
    Ok(mae_loss(&outs, &targets))
}

/// Trains one model on a scaled pool. The same inputs and seed always give
/// the same parameters.
pub fn train<T: Scalar>(
    samples: &[ScaledSample<T>],
    config: SeqConfig,
    scaling: ScalingStats,
    hp: &Hyperparams,
) -> Result<TrainedModel<T>> {
    hp.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let input_size = samples[0].inputs[0].len();
    let t_in = samples[0].inputs.len();
    if samples
        .iter()
        .any(|s| s.inputs.len() != t_in || s.inputs.iter().any(|r| r.len() != input_size) || s.targets.len() != config.n_outputs())
    {
        return Err(Error::Shape(format!("samples do not match {config} with {input_size} features")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = SeqModel::<T>::new(config, input_size, hp.hidden_size, hp.head_mode, hp.dropout_rate, &mut rng)?;
    for _ in 0..MAX_REDRAWS {
        let outs = samples
            .iter()
            .map(|s| model.predict(&s.inputs))
            .collect::<Result<Vec<_>>>()?;
        if !has_dead_output(&outs) {
            break;
        }
        model = SeqModel::<T>::new(config, input_size, hp.hidden_size, hp.head_mode, hp.dropout_rate, &mut rng)?;
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * hp.validation_fraction).round() as usize;
    let (val_idx, train_idx) = if n_val == 0 || n_val >= samples.len() {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };
    let val = view(samples, &val_idx);
    let mut train_set = view(samples, &train_idx);

    let mut adam = Adam::new(T::lit(hp.learning_rate), model.n_params());
    let mut best = model.clone();
    let mut best_loss = eval_loss(&model, &val)?;
    let mut best_epoch = 0;
    let mut train_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut stale = 0;
    for epoch in 1..=hp.max_epochs {
        train_set.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        let mut n_batches = 0usize;
        for chunk in train_set.chunks(hp.batch_size) {
            let masks = chunk
                .iter()
                .map(|(x, _)| model.sample_masks(x.len(), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let batch: Vec<(&[Vec<T>], &[T])> = chunk.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
            let (loss, grad) = batch_loss_grad(&model, &batch, Some(&masks))?;
            adam.step(model.slices_mut(), grad.slices());
            epoch_loss += loss;
            n_batches += 1;
        }
        train_trace.push(epoch_loss / T::from_usize_lossy(n_batches));
        let v = eval_loss(&model, &val)?;
        val_trace.push(v);
        if v < best_loss {
            best_loss = v;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= hp.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainedModel {
        model: best,
        scaling,
        seed: hp.seed,
        best_epoch,
        train_trace,
        val_trace,
    })
}

/// Trains a ReLU perceptron on flat `(input, target)` pairs with the same
/// optimizer, loss, split and early stopping as [`train`], without dropout.
pub fn train_mlp<T: Scalar>(samples: &[(Vec<T>, Vec<T>)], sizes: &[usize], hp: &Hyperparams) -> Result<(Mlp<T>, usize)> {
    hp.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if samples
        .iter()
        .any(|(x, y)| x.len() != sizes[0] || y.len() != *sizes.last().unwrap_or(&0))
    {
        return Err(Error::Shape(format!("samples do not match layer sizes {sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut net = Mlp::<T>::init(sizes, &mut rng)?;
    for _ in 0..MAX_REDRAWS {
        let outs: Vec<Vec<T>> = samples.iter().map(|(x, _)| net.forward(x)).collect();
        if !has_dead_output(&outs) {
            break;
        }
        net = Mlp::<T>::init(sizes, &mut rng)?;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * hp.validation_fraction).round() as usize;
    let (val_idx, mut train_idx) = if n_val == 0 || n_val >= samples.len() {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };
    let eval = |net: &Mlp<T>| {
        let outs: Vec<Vec<T>> = val_idx.iter().map(|&i| net.forward(&samples[i].0)).collect();
        let ts: Vec<Vec<T>> = val_idx.iter().map(|&i| samples[i].1.clone()).collect();
        mae_loss(&outs, &ts)
    };
    let n_params: usize = net.slices().iter().map(|s| s.len()).sum();
    let mut adam = Adam::new(T::lit(hp.learning_rate), n_params);
    let (mut best, mut best_loss, mut best_epoch, mut stale) = (net.clone(), eval(&net), 0, 0);
    for epoch in 1..=hp.max_epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(hp.batch_size) {
            let total: usize = chunk.iter().map(|&i| samples[i].1.len()).sum();
            let norm = T::from_usize_lossy(total);
            let mut grad = net.zeros_like();
            for &i in chunk {
                let (x, y) = &samples[i];
                net.forward_backward(
                    x,
                    |o| o.iter().zip(y).map(|(a, b)| sign0(*a - *b) / norm).collect(),
                    &mut grad,
                );
            }
            adam.step(net.slices_mut(), grad.slices());
        }
        let v = eval(&net);
        if v < best_loss {
            (best, best_loss, best_epoch, stale) = (net.clone(), v, epoch, 0);
        } else {
            stale += 1;
            if stale >= hp.early_stop_patience {
                break;
            }
        }
    }
    Ok((best, best_epoch))
}

/// Derives an independent seed for a labelled sub-task.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h).gen()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::SeqConfig;

    fn scaling() -> ScalingStats {
        ScalingStats {
            feature_min: vec![0.0; 5],
            feature_max: vec![1.0; 5],
            target_min: 0.0,
            target_max: 1.0,
        }
    }

    fn linear_pool(n: usize) -> Vec<ScaledSample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n)
            .map(|_| {
                let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| rng.gen::<f64>()).collect()).collect();
                let y = 0.2 + 0.3 * inputs[2][0] + 0.2 * inputs[2][4] + 0.1 * inputs[1][1];
                ScaledSample { inputs, targets: vec![y] }
            })
            .collect()
    }

    #[test]
    fn learns_linear_pool() {
        let pool = linear_pool(200);
        let hp = Hyperparams {
            dropout_rate: 0.0,
            learning_rate: 1e-2,
            ..Hyperparams::default()
        };
        let m = train(&pool, SeqConfig::Recursive, scaling(), &hp).unwrap();
        let outs: Vec<Vec<f64>> = pool.iter().map(|s| m.model.predict(&s.inputs).unwrap()).collect();
        let ts: Vec<Vec<f64>> = pool.iter().map(|s| s.targets.clone()).collect();
        let mae = mae_loss(&outs, &ts);
        assert!(mae < 0.01, "mae {mae}");
    }

    #[test]
    fn same_seed_same_parameters() {
        let pool = linear_pool(40);
        let hp = Hyperparams {
            max_epochs: 20,
            seed: 4,
            ..Hyperparams::default()
        };
        let a = train(&pool, SeqConfig::Recursive, scaling(), &hp).unwrap();
        let b = train(&pool, SeqConfig::Recursive, scaling(), &hp).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let pool = linear_pool(30);
        let hp = Hyperparams {
            max_epochs: 5,
            learning_rate: 0.0,
            seed: 8,
            ..Hyperparams::default()
        };
        let m = train(&pool, SeqConfig::Recursive, scaling(), &hp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = SeqModel::<f64>::new(SeqConfig::Recursive, 5, 10, HeadMode::Final, 0.2, &mut rng).unwrap();
        assert_eq!(m.model, init);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(train::<f64>(&[], SeqConfig::Recursive, scaling(), &Hyperparams::default()).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let pool = linear_pool(30);
        let hp = Hyperparams {
            max_epochs: 3,
            ..Hyperparams::default()
        };
        let m = train(&pool, SeqConfig::Recursive, scaling(), &hp).unwrap();
        assert_eq!(TrainedModel::<f64>::from_text(&m.to_text()).unwrap(), m);
        let m32 = train(
            &pool
                .iter()
                .map(|s| ScaledSample {
                    inputs: s.inputs.iter().map(|r| r.iter().map(|x| *x as f32).collect()).collect(),
                    targets: s.targets.iter().map(|x| *x as f32).collect(),
                })
                .collect::<Vec<_>>(),
            SeqConfig::Recursive,
            scaling(),
            &hp,
        )
        .unwrap();
        assert_eq!(TrainedModel::<f32>::from_text(&m32.to_text()).unwrap(), m32);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
    }
}
