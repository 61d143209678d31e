use crate::tensor::{ParamStore, Tensor};

use super::TrainError;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<(), TrainError> {
    if let Some(p) = store.iter().find(|p| !p.grad.all_finite()) {
        return Err(TrainError::NonFiniteGradient {
            iteration: state.step,
            param: p.name.clone(),
        });
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            md[i] = beta1 * md[i] + (1.0 - beta1) * g[i];
            vd[i] = beta2 * vd[i] + (1.0 - beta2) * g[i] * g[i];
            let mhat = md[i] / c1;
            let vhat = vd[i] / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(vec![1.0, -2.0, 0.5]).unwrap());
        store.get_mut(id).grad = Tensor::from_vec(vec![3.0, -0.01, 0.0]).unwrap();
        let mut st = AdamState::new(&store, AdamConfig::new(0.1));
        adam_step(&mut store, &mut st).unwrap();
        let w = store.get(id).value.data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-5);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn rejects_nan_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(vec![1.0]).unwrap());
        store.get_mut(id).grad = Tensor::from_vec(vec![f64::NAN]).unwrap();
        let mut st = AdamState::new(&store, AdamConfig::new(0.1));
        assert!(matches!(
            adam_step(&mut store, &mut st),
            Err(TrainError::NonFiniteGradient { .. })
        ));
        assert_eq!(store.get(id).value.data(), &[1.0]);
    }
}
