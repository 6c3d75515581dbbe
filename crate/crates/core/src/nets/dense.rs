//! ReLU dense layers: the recurrent model's output head and plain
//! multilayer perceptrons.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{relu, Scalar};

/// `y = relu(W h + b)` with `W` row-major `out_size x in_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead<T> {
    pub in_size: usize,
    pub out_size: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> DenseHead<T> {
    pub fn zeros(in_size: usize, out_size: usize) -> Self {
        Self {
            in_size,
            out_size,
            w: vec![T::zero(); in_size * out_size],
            b: vec![T::zero(); out_size],
        }
    }

    pub fn init<R: Rng>(in_size: usize, out_size: usize, rng: &mut R) -> Self {
        let mut d = Self::zeros(in_size, out_size);
        let bound = 1.0 / (in_size as f64).sqrt();
        d.w.iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        d
    }

    /// Pre-activations.
    pub fn affine(&self, h: &[T]) -> Vec<T> {
        (0..self.out_size)
            .map(|o| {
                self.b[o]
                    + self.w[o * self.in_size..(o + 1) * self.in_size]
                        .iter()
                        .zip(h)
                        .map(|(a, b)| *a * *b)
                        .sum::<T>()
            })
            .collect()
    }

    pub fn forward(&self, h: &[T]) -> Vec<T> {
        self.affine(h).into_iter().map(relu).collect()
    }

    /// Given the layer input, its pre-activations and `dL/dy`, accumulates
    /// gradients and returns `dL/dh`.
    pub fn backward(&self, h: &[T], pre: &[T], dy: &[T], grad: &mut DenseHead<T>) -> Vec<T> {
        let mut dh = vec![T::zero(); self.in_size];
        for o in 0..self.out_size {
            if pre[o] <= T::zero() {
                continue;
            }
            let d = dy[o];
            grad.b[o] += d;
            let row = o * self.in_size;
            for j in 0..self.in_size {
                grad.w[row + j] += d * h[j];
                dh[j] += self.w[row + j] * d;
            }
        }
        dh
    }

    pub fn slices(&self) -> [&[T]; 2] {
        [&self.w, &self.b]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<T>; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Stack of ReLU dense layers (every layer, output included, is ReLU).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<DenseHead<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `sizes` lists input, hidden and output widths, e.g. `[5, 6, 6, 1]`.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| DenseHead::init(w[0], w[1], rng)).collect(),
        })
    }

    pub fn in_size(&self) -> usize {
        self.layers[0].in_size
    }

    pub fn out_size(&self) -> usize {
        self.layers.last().unwrap().out_size
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.layers.iter().fold(x.to_vec(), |h, l| l.forward(&h))
    }

    /// Forward pass followed by backpropagation of `dL/dy = dloss(y)`.
    /// Returns the outputs.
    pub fn forward_backward(&self, x: &[T], dloss: impl Fn(&[T]) -> Vec<T>, grad: &mut Mlp<T>) -> Vec<T> {
        let mut inputs = vec![x.to_vec()];
        let mut pres = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let pre = l.affine(inputs.last().unwrap());
            inputs.push(pre.iter().copied().map(relu).collect());
            pres.push(pre);
        }
        let y = inputs.pop().unwrap();
        let mut d = dloss(&y);
        for (k, l) in self.layers.iter().enumerate().rev() {
            d = l.backward(&inputs[k], &pres[k], &d, &mut grad.layers[k]);
        }
        y
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| DenseHead::zeros(l.in_size, l.out_size)).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}
