use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates, one pair per parameter in store order.
#[derive(Clone, Debug)]
pub struct OptState {
    cfg: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: Vec<u64>,
}

impl OptState {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            cfg,
            second: zeros.clone(),
            steps: vec![0; zeros.len()],
            first: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps.iter().copied().max().unwrap_or(0)
    }
}

/// One bias-corrected Adam update; zeroes the gradients afterwards.
///
/// A parameter whose whole gradient is exactly zero was not touched by the
/// loss; it is left alone and its moments are not advanced.
pub fn optimizer_step(params: &mut ParamStore, lr: f64, state: &mut OptState) -> Result<()> {
    if !params.grads_ready() {
        return Err(Error::Precondition(
            "optimizer step without populated gradients".into(),
        ));
    }
    if state.first.len() != params.len() {
        return Err(Error::Precondition(
            "optimizer state does not match parameter store".into(),
        ));
    }
    let AdamConfig { beta1, beta2, eps } = state.cfg;
    for (((value, grad), (m, v)), t) in params
        .values_and_grads_mut()
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
        .zip(state.steps.iter_mut())
    {
        if grad.data().iter().all(|&g| g == 0.0) {
            continue;
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                op: "optimizer_step",
            });
        }
        *t += 1;
        let bc1 = 1.0 - beta1.powi(*t as i32);
        let bc2 = 1.0 - beta2.powi(*t as i32);
        for (((w, &g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn quadratic_step(store: &mut ParamStore, state: &mut OptState) {
        let tape = Tape::new();
        let w = tape.param(store, "w").unwrap();
        let loss = w.mul(&w).unwrap().sum().unwrap();
        tape.backward(&loss)
            .unwrap()
            .accumulate_into(store)
            .unwrap();
        optimizer_step(store, 1e-2, state).unwrap();
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![0.7, -0.2])).unwrap();
        let before = store.clone();
        let mut state = OptState::new(&store, AdamConfig::default());
        store.mark_grads_ready();
        optimizer_step(&mut store, 1e-3, &mut state).unwrap();
        assert!(store.values_bit_eq(&before));
    }

    #[test]
    fn descends_on_square() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0])).unwrap();
        let mut state = OptState::new(&store, AdamConfig::default());
        quadratic_step(&mut store, &mut state);
        let w = store.get("w").unwrap().data()[0];
        assert!(w.abs() < 1.0);
        assert_eq!(store.grad("w").unwrap().data(), &[0.0]);
        assert!(!store.grads_ready());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut store = ParamStore::new();
            store
                .insert("w", Tensor::vector(vec![1.0, -3.0, 0.25]))
                .unwrap();
            let mut state = OptState::new(&store, AdamConfig::default());
            for _ in 0..50 {
                quadratic_step(&mut store, &mut state);
            }
            store
        };
        assert!(run().values_bit_eq(&run()));
    }

    #[test]
    fn requires_gradients() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0])).unwrap();
        let mut state = OptState::new(&store, AdamConfig::default());
        let err = optimizer_step(&mut store, 1e-3, &mut state).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
