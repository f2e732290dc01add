use crate::nn::{Gradients, ParamStore};

/// RMSprop: `v ← α v + (1 − α) g²`, `θ ← θ − lr · g / (√v + ε)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: Vec<Vec<f32>>,
}

impl RmsProp {
    pub fn new(lr: f64, alpha: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            alpha,
            eps,
            square_avg: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        if self.square_avg.len() != params.len() {
            self.square_avg = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
        }
        let (lr, alpha, eps) = (self.lr as f32, self.alpha as f32, self.eps as f32);
        for (id, g) in grads.iter() {
            let v = &mut self.square_avg[id.index()];
            let p = params.get_mut(id).data_mut();
            for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                *v = alpha * *v + (1.0 - alpha) * g * g;
                *p -= lr * g / (v.sqrt() + eps);
            }
        }
    }
}
