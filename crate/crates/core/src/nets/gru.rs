//! Gated recurrent unit cell with its exact backward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Weights act on the concatenation `[h_prev, x]`; matrices are row-major
/// `hidden x (hidden + input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_r: Vec<T>,
    pub w_u: Vec<T>,
    pub w_h: Vec<T>,
    pub b_r: Vec<T>,
    pub b_u: Vec<T>,
    pub b_h: Vec<T>,
}

/// Intermediates kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub r: Vec<T>,
    pub u: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

pub const PARAM_NAMES: [&str; 6] = ["w_r", "w_u", "w_h", "b_r", "b_u", "b_h"];

impl<T: Scalar> GruParams<T> {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let m = hidden_size * (hidden_size + input_size);
        Self {
            hidden_size,
            input_size,
            w_r: vec![T::zero(); m],
            w_u: vec![T::zero(); m],
            w_h: vec![T::zero(); m],
            b_r: vec![T::zero(); hidden_size],
            b_u: vec![T::zero(); hidden_size],
            b_h: vec![T::zero(); hidden_size],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(hidden_size: usize, input_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden_size, input_size);
        let bound = 1.0 / ((hidden_size + input_size) as f64).sqrt();
        for w in [&mut p.w_r, &mut p.w_u, &mut p.w_h] {
            w.iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        }
        p
    }

    pub fn slices(&self) -> [&[T]; 6] {
        [&self.w_r, &self.w_u, &self.w_h, &self.b_r, &self.b_u, &self.b_h]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<T>; 6] {
        [&mut self.w_r, &mut self.w_u, &mut self.w_h, &mut self.b_r, &mut self.b_u, &mut self.b_h]
    }

    fn cols(&self) -> usize {
        self.hidden_size + self.input_size
    }

    fn affine(&self, w: &[T], b: &[T], z: &[T]) -> Vec<T> {
        let n = self.cols();
        (0..self.hidden_size)
            .map(|i| b[i] + w[i * n..(i + 1) * n].iter().zip(z).map(|(a, c)| *a * *c).sum::<T>())
            .collect()
    }
}

/// One recurrent step. Returns the new hidden state inside the cache.
pub fn gru_cell_forward<T: Scalar>(p: &GruParams<T>, x: &[T], h_prev: &[T]) -> Result<GruCache<T>> {
    if x.len() != p.input_size || h_prev.len() != p.hidden_size {
        return Err(Error::Shape(format!(
            "gru cell expects input {} / hidden {}, got {} / {}",
            p.input_size,
            p.hidden_size,
            x.len(),
            h_prev.len()
        )));
    }
    if x.iter().chain(h_prev).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite gru input".into()));
    }
    let z: Vec<T> = h_prev.iter().chain(x).copied().collect();
    let r: Vec<T> = p.affine(&p.w_r, &p.b_r, &z).into_iter().map(sigmoid).collect();
    let u: Vec<T> = p.affine(&p.w_u, &p.b_u, &z).into_iter().map(sigmoid).collect();
    let zr: Vec<T> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).chain(x.iter().copied()).collect();
    let c: Vec<T> = p.affine(&p.w_h, &p.b_h, &zr).into_iter().map(|a| a.tanh()).collect();
    let h = (0..p.hidden_size)
        .map(|i| (T::one() - u[i]) * h_prev[i] + u[i] * c[i])
        .collect();
    Ok(GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        u,
        c,
        h,
    })
}

/// Accumulates parameter gradients into `grad` given `dh = dL/dh` and
/// returns `dL/dh_prev`.
pub fn gru_cell_backward<T: Scalar>(p: &GruParams<T>, cache: &GruCache<T>, dh: &[T], grad: &mut GruParams<T>) -> Vec<T> {
    let hs = p.hidden_size;
    let n = p.cols();
    let GruCache { x, h_prev, r, u, c, .. } = cache;
    let mut dh_prev: Vec<T> = (0..hs).map(|i| dh[i] * (T::one() - u[i])).collect();

    let da_c: Vec<T> = (0..hs).map(|i| dh[i] * u[i] * (T::one() - c[i] * c[i])).collect();
    let da_u: Vec<T> = (0..hs)
        .map(|i| dh[i] * (c[i] - h_prev[i]) * u[i] * (T::one() - u[i]))
        .collect();

    let zr: Vec<T> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).chain(x.iter().copied()).collect();
    let mut dzr_h = vec![T::zero(); hs];
    for i in 0..hs {
        grad.b_h[i] += da_c[i];
        let row = &p.w_h[i * n..(i + 1) * n];
        let g = &mut grad.w_h[i * n..(i + 1) * n];
        for j in 0..n {
            g[j] += da_c[i] * zr[j];
        }
        for j in 0..hs {
            dzr_h[j] += row[j] * da_c[i];
        }
    }
    let da_r: Vec<T> = (0..hs)
        .map(|j| {
            dh_prev[j] += dzr_h[j] * r[j];
            dzr_h[j] * h_prev[j] * r[j] * (T::one() - r[j])
        })
        .collect();

    let z: Vec<T> = h_prev.iter().chain(x).copied().collect();
    for (w, gw, gb, da) in [(&p.w_u, &mut grad.w_u, &mut grad.b_u, &da_u), (&p.w_r, &mut grad.w_r, &mut grad.b_r, &da_r)] {
        for i in 0..hs {
            gb[i] += da[i];
            let row = &w[i * n..(i + 1) * n];
            let g = &mut gw[i * n..(i + 1) * n];
            for j in 0..n {
                g[j] += da[i] * z[j];
            }
            for j in 0..hs {
                dh_prev[j] += row[j] * da[i];
            }
        }
    }
    dh_prev
}
