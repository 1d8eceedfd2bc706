//! Flat views over parameter structs, the two optimizers, and weight
//! clipping. Gradients reuse the parameter struct type, so every routine here
//! works on matched `slices()` pairs in a fixed field order.

/// Exposes every tensor of a parameter struct as a flat slice, always in the
/// same field order, so optimizers, clipping, and finite-difference probes
/// stay aligned with gradients.
pub trait FlatParams {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_weights(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

/// Clamps every weight into `[-c, c]`.
pub fn clip_weights<P: FlatParams>(params: &mut P, c: f64) {
    for slice in params.slices_mut() {
        for w in slice {
            *w = w.clamp(-c, c);
        }
    }
}

/// Per-parameter adaptive step: squared-gradient accumulator with decay.
pub struct RmsProp {
    lr: f64,
    decay: f64,
    eps: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new<P: FlatParams>(params: &P, lr: f64) -> Self {
        let acc = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        RmsProp { lr, decay: 0.9, eps: 1e-8, acc }
    }

    pub fn step<P: FlatParams>(&mut self, params: &mut P, grads: &P) {
        let grad_slices = grads.slices();
        for ((slice, grad), acc) in
            params.slices_mut().into_iter().zip(grad_slices).zip(&mut self.acc)
        {
            for ((w, &g), a) in slice.iter_mut().zip(grad.iter()).zip(acc.iter_mut()) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *w -= self.lr * g / (a.sqrt() + self.eps);
            }
        }
    }
}

/// Classical momentum descent.
pub struct Momentum {
    lr: f64,
    mu: f64,
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new<P: FlatParams>(params: &P, lr: f64) -> Self {
        let velocity = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Momentum { lr, mu: 0.9, velocity }
    }

    pub fn step<P: FlatParams>(&mut self, params: &mut P, grads: &P) {
        let grad_slices = grads.slices();
        for ((slice, grad), vel) in
            params.slices_mut().into_iter().zip(grad_slices).zip(&mut self.velocity)
        {
            for ((w, &g), v) in slice.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
                *v = self.mu * *v + g;
                *w -= self.lr * *v;
            }
        }
    }
}

/// Either optimizer behind one call site.
pub enum Optimizer {
    Rms(RmsProp),
    Momentum(Momentum),
}

impl Optimizer {
    pub fn step<P: FlatParams>(&mut self, params: &mut P, grads: &P) {
        match self {
            Optimizer::Rms(o) => o.step(params, grads),
            Optimizer::Momentum(o) => o.step(params, grads),
        }
    }
}
