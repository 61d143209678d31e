use std::collections::HashMap;

use rand::Rng;

use crate::logic::Activation;
use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Tensor, TensorError};

/// Fully connected network: affine layers with an activation between them
/// and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub act: Activation,
    /// Weight `[in, out]` and bias `[out]` per layer.
    pub layers: Vec<(ParamId, ParamId)>,
}

/// Parameter nodes already placed on the current tape.
pub type ParamCache = HashMap<ParamId, NodeId>;

pub fn param_node(g: &mut Graph, store: &ParamStore, cache: &mut ParamCache, id: ParamId) -> NodeId {
    *cache.entry(id).or_insert_with(|| g.param(store, id))
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(store: &mut ParamStore, name: &str, widths: Vec<usize>, act: Activation, rng: &mut impl Rng) -> Mlp {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0));
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let wid = store.add_glorot(format!("{name}.w{i}"), w[0], w[1], rng);
                let bid = store.add(format!("{name}.b{i}"), Tensor::zeros(&[w[1]]));
                (wid, bid)
            })
            .collect();
        Mlp { widths, act, layers }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Forward pass on `[batch, in]`, giving `[batch, out]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        cache: &mut ParamCache,
        input: NodeId,
    ) -> Result<NodeId, TensorError> {
        let shape = g.shape(input).to_vec();
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(TensorError::ShapeMismatch(shape, vec![0, self.input_width()]));
        }
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wn = param_node(g, store, cache, w);
            let bn = param_node(g, store, cache, b);
            let z = g.matmul(h, wn)?;
            h = g.add(z, bn)?;
            if i + 1 < self.layers.len() {
                h = match self.act {
                    Activation::Sigmoid => g.sigmoid(h)?,
                    Activation::Relu => g.relu(h)?,
                    Activation::Tanh => g.tanh(h)?,
                };
            }
        }
        Ok(h)
    }

    /// Forward pass outside any training tape.
    pub fn apply(&self, store: &ParamStore, input: &Tensor) -> Result<Tensor, TensorError> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let y = self.forward(&mut g, store, &mut ParamCache::new(), x)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn digit_classifier_size() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&mut store, "digit", vec![784, 512, 10], Activation::Sigmoid, &mut rng);
        assert_eq!(m.num_params(), 407_050);
        assert_eq!(store.num_scalars(), 407_050);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&mut store, "f", vec![3, 2], Activation::Relu, &mut rng);
        let (w, b) = m.layers[0];
        store.get_mut(w).value = Tensor::zeros(&[3, 2]);
        store.get_mut(b).value = Tensor::from_vec(vec![0.5, -1.0]).unwrap();
        let out = m.apply(&store, &Tensor::full(&[4, 3], 7.0)).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        assert!(out.data().chunks(2).all(|r| r == [0.5, -1.0]));
    }

    #[test]
    fn batch_matches_rows() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::new(&mut store, "f", vec![5, 7, 3], Activation::Tanh, &mut rng);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = m.apply(&store, &Tensor::new(vec![4, 5], x.clone()).unwrap()).unwrap();
        for r in 0..4 {
            let row = Tensor::new(vec![1, 5], x[r * 5..(r + 1) * 5].to_vec()).unwrap();
            let one = m.apply(&store, &row).unwrap();
            for (a, b) in one.data().iter().zip(&batch.data()[r * 3..(r + 1) * 3]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
