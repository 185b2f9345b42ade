use super::model::Params;
use super::tensor::Tensor;

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Params::new(),
            v: Params::new(),
        }
    }

    /// Updates every parameter that has a gradient and passes `trainable`.
    /// A zero learning rate leaves everything untouched.
    pub fn step(&mut self, params: &mut Params, grads: &Params, trainable: impl Fn(&str) -> bool) {
        if self.lr == 0.0 {
            return;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (name, g) in grads {
            if !trainable(name) {
                continue;
            }
            let p = params.get_mut(name).expect("gradient for unknown parameter");
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *w -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // with bias correction the first update is lr * sign(g)
        let mut params = Params::new();
        params.insert("w".into(), Tensor::new(vec![2], vec![1.0, -1.0]).unwrap());
        let mut grads = Params::new();
        grads.insert("w".into(), Tensor::new(vec![2], vec![0.3, -5.0]).unwrap());
        let mut adam = Adam::new(0.01);
        adam.step(&mut params, &grads, |_| true);
        let w = params["w"].data();
        assert!((w[0] - 0.99).abs() < 1e-6 && (w[1] + 0.99).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut params = Params::new();
        params.insert("w".into(), Tensor::new(vec![1], vec![0.123]).unwrap());
        let before = params.clone();
        let mut grads = Params::new();
        grads.insert("w".into(), Tensor::new(vec![1], vec![1.0]).unwrap());
        Adam::new(0.0).step(&mut params, &grads, |_| true);
        assert_eq!(params, before);
    }
}
