use std::collections::HashMap;

/// Adam with decoupled weight decay. Decay applies to `*.weight` tensors only.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: HashMap<&'static str, u64>,
    moments: HashMap<&'static str, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: HashMap::new(),
            moments: HashMap::new(),
        }
    }

    /// Updates every tensor in `params` accepted by `trainable`, using the
    /// gradient with the same name.
    pub fn step(
        &mut self,
        params: Vec<(&'static str, &mut [f64])>,
        grads: &[(&'static str, &[f64])],
        trainable: impl Fn(&str) -> bool,
    ) {
        let grads: HashMap<&str, &[f64]> = grads.iter().map(|(n, g)| (*n, *g)).collect();
        for (name, param) in params {
            if !trainable(name) {
                continue;
            }
            let Some(grad) = grads.get(name) else { continue };
            let t = self.steps.entry(name).or_insert(0);
            *t += 1;
            let bc1 = 1.0 - self.beta1.powi(*t as i32);
            let bc2 = 1.0 - self.beta2.powi(*t as i32);
            let (m, v) = self.moments.entry(name).or_insert_with(|| (vec![0.0; param.len()], vec![0.0; param.len()]));
            let decay = if name.ends_with(".weight") { self.weight_decay } else { 0.0 };
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                param[i] -= self.learning_rate * (update + decay * param[i]);
            }
        }
    }
}
