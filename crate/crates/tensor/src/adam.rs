//! Adam optimizer with L2 weight decay folded into the gradient.

use std::collections::{BTreeMap, HashMap};

use crate::error::Result;
use crate::io::TensorMap;
use crate::nn::{Module, Param};
use crate::tape::Gradients;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    slots: HashMap<String, Slot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Adam {
        Adam {
            cfg,
            t: 0,
            slots: HashMap::new(),
        }
    }

    /// Applies one update to every trainable parameter that received a
    /// gradient. Parameters absent from `grads` are left untouched.
    pub fn step(&mut self, model: &mut dyn Module, grads: &Gradients) {
        self.t += 1;
        let t = self.t as f64;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let slots = &mut self.slots;
        model.visit_mut("", &mut |name, p: &mut Param| {
            if !p.trainable() {
                return;
            }
            let Some(id) = p.leaf_id() else { return };
            let Some(g) = grads.get_id(id) else { return };
            let n = p.tensor().len();
            let slot = slots.entry(name.to_string()).or_insert_with(|| Slot {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let mut value = p.tensor().to_vec();
            let gd = g.data();
            for i in 0..n {
                let grad = gd[i] + c.weight_decay * value[i];
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * grad;
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * grad * grad;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                value[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            let shape = p.tensor().shape().to_vec();
            p.set_value(Tensor::from_vec(value, &shape));
        });
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Serializes moment buffers and the step counter for exact resume.
    pub fn save_state(&self, map: &mut TensorMap, prefix: &str) {
        map.insert(
            &format!("{prefix}.t"),
            Tensor::scalar(self.t as f64),
        );
        let ordered: BTreeMap<_, _> = self.slots.iter().collect();
        for (name, slot) in ordered {
            map.insert(
                &format!("{prefix}.m.{name}"),
                Tensor::from_vec(slot.m.clone(), &[slot.m.len()]),
            );
            map.insert(
                &format!("{prefix}.v.{name}"),
                Tensor::from_vec(slot.v.clone(), &[slot.v.len()]),
            );
        }
    }

    pub fn load_state(&mut self, map: &TensorMap, prefix: &str) -> Result<()> {
        self.t = map
            .get(&format!("{prefix}.t"))
            .map(|t| t.item() as u64)
            .unwrap_or(0);
        self.slots.clear();
        let m_prefix = format!("{prefix}.m.");
        for name in map.names() {
            if let Some(param_name) = name.strip_prefix(&m_prefix) {
                let m = map.get(&name).unwrap().to_vec();
                let v = map
                    .get(&format!("{prefix}.v.{param_name}"))
                    .map(|t| t.to_vec())
                    .unwrap_or_else(|| vec![0.0; m.len()]);
                self.slots.insert(param_name.to_string(), Slot { m, v });
            }
        }
        Ok(())
    }
}
