//! Recurrent sequence model: unrolled GRU, dropout and ReLU head, with
//! MAE losses and backpropagation through time.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::dense::DenseHead;
use super::gru::{gru_cell_backward, gru_cell_forward, GruCache, GruParams};
use crate::error::{Error, Result};
use crate::scalar::{sign0, Scalar};
use crate::seqdata::SeqConfig;

/// How multi-output models read the recurrent states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadMode {
    /// One head with one neuron per output on the final hidden state.
    #[default]
    Final,
    /// A shared single-neuron head on each of the last `n_outputs` hidden states.
    Shifted,
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadMode::Final => "final",
            HeadMode::Shifted => "shifted",
        })
    }
}

impl FromStr for HeadMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "final" => Ok(HeadMode::Final),
            "shifted" => Ok(HeadMode::Shifted),
            other => Err(Error::Parse(format!("unknown head mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel<T> {
    pub config: SeqConfig,
    pub head_mode: HeadMode,
    pub dropout_rate: T,
    pub gru: GruParams<T>,
    pub head: DenseHead<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub cells: Vec<GruCache<T>>,
    /// Per head application: index of the time step it reads.
    pub head_steps: Vec<usize>,
    pub masks: Vec<Vec<T>>,
    pub head_inputs: Vec<Vec<T>>,
    pub pres: Vec<Vec<T>>,
    pub outputs: Vec<T>,
}

impl<T: Scalar> SeqModel<T> {
    pub fn new<R: Rng>(
        config: SeqConfig,
        input_size: usize,
        hidden_size: usize,
        head_mode: HeadMode,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        let gru = GruParams::init(hidden_size, input_size, rng);
        let head_out = match head_mode {
            HeadMode::Final => config.n_outputs(),
            HeadMode::Shifted => 1,
        };
        let head = DenseHead::init(hidden_size, head_out, rng);
        Ok(Self {
            config,
            head_mode,
            dropout_rate: T::lit(dropout_rate),
            gru,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            head_mode: self.head_mode,
            dropout_rate: self.dropout_rate,
            gru: GruParams::zeros(self.gru.hidden_size, self.gru.input_size),
            head: DenseHead::zeros(self.head.in_size, self.head.out_size),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.config.n_outputs()
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = self.gru.slices().to_vec();
        v.extend(self.head.slices());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v: Vec<&mut Vec<T>> = self.gru.slices_mut().into_iter().collect();
        v.extend(self.head.slices_mut());
        v
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, values: &[T]) {
        let mut k = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&values[k..k + n]);
            k += n;
        }
    }

    fn head_steps(&self, t_in: usize) -> Result<Vec<usize>> {
        match self.head_mode {
            HeadMode::Final => Ok(vec![t_in - 1]),
            HeadMode::Shifted => {
                let n = self.n_outputs();
                if n > t_in {
                    return Err(Error::Shape(format!("shifted head needs {n} steps, sequence has {t_in}")));
                }
                Ok((t_in - n..t_in).collect())
            }
        }
    }

    /// Inverted dropout masks, one per head application.
    pub fn sample_masks<R: Rng>(&self, t_in: usize, rng: &mut R) -> Result<Vec<Vec<T>>> {
        let keep = 1.0 - self.dropout_rate.as_f64();
        let scale = T::lit(1.0 / keep);
        Ok(self
            .head_steps(t_in)?
            .iter()
            .map(|_| {
                (0..self.gru.hidden_size)
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                    .collect()
            })
            .collect())
    }

    /// Forward pass with explicit masks (`None` means inference).
    pub fn forward_cached(&self, inputs: &[Vec<T>], masks: Option<&[Vec<T>]>) -> Result<ForwardCache<T>> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty input sequence".into()));
        }
        let mut h = vec![T::zero(); self.gru.hidden_size];
        let mut cells = Vec::with_capacity(inputs.len());
        for x in inputs {
            let c = gru_cell_forward(&self.gru, x, &h)?;
            h = c.h.clone();
            cells.push(c);
        }
        let head_steps = self.head_steps(inputs.len())?;
        let masks: Vec<Vec<T>> = match masks {
            Some(m) => {
                if m.len() != head_steps.len() {
                    return Err(Error::Shape("dropout mask count".into()));
                }
                m.to_vec()
            }
            None => vec![vec![T::one(); self.gru.hidden_size]; head_steps.len()],
        };
        let mut head_inputs = Vec::new();
        let mut pres = Vec::new();
        let mut outputs = Vec::new();
        for (s, m) in head_steps.iter().zip(&masks) {
            let hin: Vec<T> = cells[*s].h.iter().zip(m).map(|(a, b)| *a * *b).collect();
            let pre = self.head.affine(&hin);
            outputs.extend(pre.iter().map(|p| p.max(T::zero())));
            head_inputs.push(hin);
            pres.push(pre);
        }
        Ok(ForwardCache {
            cells,
            head_steps,
            masks,
            head_inputs,
            pres,
            outputs,
        })
    }

    pub fn forward<R: Rng>(&self, inputs: &[Vec<T>], mode: Mode, rng: &mut R) -> Result<Vec<T>> {
        let masks = match mode {
            Mode::Train => Some(self.sample_masks(inputs.len(), rng)?),
            Mode::Infer => None,
        };
        Ok(self.forward_cached(inputs, masks.as_deref())?.outputs)
    }

    pub fn predict(&self, inputs: &[Vec<T>]) -> Result<Vec<T>> {
        Ok(self.forward_cached(inputs, None)?.outputs)
    }

    /// Backpropagates `dy = dL/d(outputs)` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &[T], grad: &mut SeqModel<T>) {
        let hs = self.gru.hidden_size;
        let t_in = cache.cells.len();
        let mut dh_at = vec![vec![T::zero(); hs]; t_in];
        let per = self.head.out_size;
        for (k, &s) in cache.head_steps.iter().enumerate() {
            let d_in = self
                .head
                .backward(&cache.head_inputs[k], &cache.pres[k], &dy[k * per..(k + 1) * per], &mut grad.head);
            for j in 0..hs {
                dh_at[s][j] += d_in[j] * cache.masks[k][j];
            }
        }
        let mut dh = vec![T::zero(); hs];
        for t in (0..t_in).rev() {
            for j in 0..hs {
                dh[j] += dh_at[t][j];
            }
            dh = gru_cell_backward(&self.gru, &cache.cells[t], &dh, &mut grad.gru);
        }
    }
}

/// Mean absolute error over every output of every record.
pub fn mae_loss<T: Scalar>(outputs: &[Vec<T>], targets: &[Vec<T>]) -> T {
    let n: usize = outputs.iter().map(|o| o.len()).sum();
    if n == 0 {
        return T::zero();
    }
    let s: T = outputs
        .iter()
        .zip(targets)
        .flat_map(|(o, t)| o.iter().zip(t).map(|(a, b)| (*a - *b).abs()))
        .sum();
    s / T::from_usize_lossy(n)
}

/// Loss and gradient of a batch. `masks[i]` are the dropout masks of
/// record `i`, or `None` to run without dropout.
pub fn batch_loss_grad<T: Scalar>(
    model: &SeqModel<T>,
    batch: &[(&[Vec<T>], &[T])],
    masks: Option<&[Vec<Vec<T>>]>,
) -> Result<(T, SeqModel<T>)> {
    let mut grad = model.zeros_like();
    let total: usize = batch.iter().map(|(_, t)| t.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let norm = T::from_usize_lossy(total);
    let mut loss = T::zero();
    for (i, (x, y)) in batch.iter().enumerate() {
        let cache = model.forward_cached(x, masks.map(|m| m[i].as_slice()))?;
        if cache.outputs.len() != y.len() {
            return Err(Error::Shape(format!(
                "model emits {} outputs, record has {} targets",
                cache.outputs.len(),
                y.len()
            )));
        }
        let dy: Vec<T> = cache.outputs.iter().zip(*y).map(|(o, t)| sign0(*o - *t) / norm).collect();
        loss += cache.outputs.iter().zip(*y).map(|(o, t)| (*o - *t).abs()).sum::<T>();
        model.backward(&cache, &dy, &mut grad);
    }
    Ok((loss / norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_examples() {
        assert_eq!(mae_loss(&[vec![0.3]], &[vec![0.3]]), 0.0);
        assert!((mae_loss(&[vec![0.5]], &[vec![0.3]]) - 0.2f64).abs() < 1e-15);
        assert!((mae_loss(&[vec![0.1, 0.2, 0.3]], &[vec![0.0; 3]]) - 0.2f64).abs() < 1e-15);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = SeqModel::<f64>::new(SeqConfig::MultiYear(3), 5, 10, HeadMode::Final, 0.2, &mut rng)
            .unwrap()
            .zeros_like();
        assert_eq!(m.predict(&vec![vec![1.0; 5]; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn inference_deterministic_training_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = SeqModel::<f64>::new(SeqConfig::Recursive, 5, 10, HeadMode::Final, 0.2, &mut rng).unwrap();
        let x = vec![vec![0.2, 0.4, 0.1, 0.9, 0.5]; 3];
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        let a = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = m.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = SeqModel::<f32>::new(SeqConfig::Interval(2), 6, 10, HeadMode::Final, 0.2, &mut rng).unwrap();
        let mut z = m.zeros_like();
        z.set_flat(&m.flat());
        assert_eq!(z, m);
        assert_eq!(m.n_params(), 3 * 10 * 16 + 3 * 10 + 10 + 1);
    }
}
