use super::{Tape, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Named parameters with gradient buffers and Adam moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    slots: Vec<Slot>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter and return its index. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let name = name.into();
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter `{name}`"
        );
        let len = value.data().len();
        self.slots.push(Slot {
            name,
            value,
            grad: vec![0.0; len],
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        });
        self.slots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.slots[index].name
    }

    pub fn value(&self, index: usize) -> &Tensor {
        &self.slots[index].value
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.slots[index].value
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.index_of(name)
            .map(|i| self.value(i))
            .ok_or_else(|| TensorError::UnknownParameter(name.to_owned()))
    }

    pub fn grad(&self, index: usize) -> &[f64] {
        &self.slots[index].grad
    }

    pub fn grad_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.slots[index].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> + '_ {
        self.slots.iter().map(|s| (s.name.as_str(), &s.value))
    }

    /// Number of Adam steps taken.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn parameter_count(&self) -> usize {
        self.slots.iter().map(|s| s.value.data().len()).sum()
    }

    /// Add the parameter gradients recorded on `tape`, scaled by `weight`.
    pub fn accumulate_from(&mut self, tape: &Tape, weight: f64) {
        for (index, g) in tape.param_grads() {
            self.slots[index]
                .grad
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += weight * b);
        }
    }

    /// Add a flat gradient vector laid out parameter by parameter.
    pub fn accumulate_flat(&mut self, flat: &[f64], weight: f64) {
        let mut offset = 0;
        for slot in &mut self.slots {
            let len = slot.grad.len();
            slot.grad
                .iter_mut()
                .zip(&flat[offset..offset + len])
                .for_each(|(a, b)| *a += weight * b);
            offset += len;
        }
    }

    /// Gradients recorded on `tape`, flattened in parameter order.
    pub fn flat_grads_from(&self, tape: &Tape) -> Vec<f64> {
        let offsets: Vec<usize> = self
            .slots
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.grad.len();
                Some(start)
            })
            .collect();
        let mut flat = vec![0.0; self.parameter_count()];
        for (index, g) in tape.param_grads() {
            let start = offsets[index];
            flat[start..start + g.len()]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += b);
        }
        flat
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| s.value.is_finite())
    }

    pub(super) fn adam_update(
        &mut self,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for slot in &mut self.slots {
            let Slot {
                value,
                grad,
                first_moment,
                second_moment,
                ..
            } = slot;
            for (((p, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.iter_mut())
                .zip(first_moment)
                .zip(second_moment)
            {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *p);
                *g = 0.0;
            }
        }
    }
}
