//! Adam optimizer over a list of parameter slices.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: T, n_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    /// One update. `params` and `grads` must enumerate slices in the same order.
    pub fn step<'p, 'g>(&mut self, params: impl IntoIterator<Item = &'p mut Vec<T>>, grads: impl IntoIterator<Item = &'g [T]>) {
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t);
        let bc2 = T::one() - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (T::one() - self.beta1) * *gi;
                *v = self.beta2 * *v + (T::one() - self.beta2) * *gi * *gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *pi -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
                k += 1;
            }
        }
        debug_assert_eq!(k, self.m.len());
    }
}
