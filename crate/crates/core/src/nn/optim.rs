use super::{Grads, ParamSet, Scalar};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(ps: &ParamSet<T>, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<T>> = ps
            .entries()
            .iter()
            .map(|e| vec![T::zero(); e.data.len()])
            .collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, ps: &mut ParamSet<T>, grads: &Grads<T>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = T::of(self.lr / bc1);
        let decay = T::of(1.0 - self.lr * self.weight_decay);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let inv_bc2_sqrt = T::of(1.0 / bc2.sqrt());
        let eps = T::of(self.eps);
        for (i, entry) in ps.entries_mut().iter_mut().enumerate() {
            let g = grads.by_index(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..entry.data.len() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let p = entry.data[j] * decay;
                entry.data[j] = p - step_size * m[j] / (v[j].sqrt() * inv_bc2_sqrt + eps);
            }
        }
    }
}
