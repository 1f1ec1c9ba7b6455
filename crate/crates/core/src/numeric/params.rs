use super::rng::RngStream;
use super::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A learnable tensor with its gradient slot and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

/// Ordered collection of named parameters plus the optimizer step counter.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        let zeros = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name,
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds a parameter drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut RngStream) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    /// Value of the parameter called `name`. Panics when absent.
    pub fn get(&self, name: &str) -> &Tensor {
        let id = self.find(name).unwrap_or_else(|| panic!("no parameter named {name}"));
        self.value(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Copies the values (not optimizer state) of `other` into `self`.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            debug_assert_eq!(dst.name, src.name);
            dst.value = src.value.clone();
        }
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update over every parameter, then zeroes gradients.
    pub fn step(&self, store: &mut ParamStore, lr: f64) {
        store.step += 1;
        let t = store.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for p in &mut store.params {
            let grads = p.grad.data();
            let m = p.first_moment.data_mut();
            for (mi, g) in m.iter_mut().zip(grads) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
            }
            let v = p.second_moment.data_mut();
            for (vi, g) in v.iter_mut().zip(grads) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
            }
            let (m, v) = (p.first_moment.data(), p.second_moment.data());
            for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(grad: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(0.0));
        s.grad_mut(id).data_mut()[0] = grad;
        (s, id)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut s, id) = single(1.0);
        Adam::default().step(&mut s, 0.0005);
        assert!((s.value(id).item() + 0.0005).abs() < 1e-9);
        assert_eq!(s.grad(id).item(), 0.0);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut s, id) = single(0.0);
        Adam::default().step(&mut s, 0.0005);
        assert_eq!(s.value(id).item(), 0.0);
    }

    #[test]
    fn repeated_positive_gradient_decreases_monotonically() {
        let (mut s, id) = single(1.0);
        let adam = Adam::default();
        adam.step(&mut s, 0.0005);
        let after_one = s.value(id).item();
        s.grad_mut(id).data_mut()[0] = 1.0;
        adam.step(&mut s, 0.0005);
        let after_two = s.value(id).item();
        assert!(after_one < 0.0 && after_two < after_one);
    }
}
