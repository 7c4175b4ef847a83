//! Small neural building blocks shared by the encoders and heads.

use autograd::{ParamStore, Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

/// Fully connected layer `y = x W + b` with parameters registered under
/// `{prefix}.w` / `{prefix}.b`.
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Glorot-normal weights, zero bias.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Linear, Error> {
        let std = (2.0 / (d_in + d_out) as f64).sqrt();
        let w = store.register(
            format!("{prefix}.w"),
            Tensor::randn(d_in, d_out, std, rng).into_trainable(),
        )?;
        let b = store.register(format!("{prefix}.b"), Tensor::zeros(1, d_out).into_trainable())?;
        Ok(Linear { w, b })
    }

    /// All-zero weights and bias: the layer starts as the constant zero map,
    /// used where a uniform initial output is wanted (gates, fusion scorer).
    pub fn init_zero(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Linear, Error> {
        let w = store.register(
            format!("{prefix}.w"),
            Tensor::zeros(d_in, d_out).into_trainable(),
        )?;
        let b = store.register(format!("{prefix}.b"), Tensor::zeros(1, d_out).into_trainable())?;
        Ok(Linear { w, b })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        x.matmul(&self.w)?.add_rowvec(&self.b)
    }
}

/// Layer normalization parameters (`gain` starts at 1, `bias` at 0),
/// registered under `{prefix}.gain` / `{prefix}.bias`.
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn init(store: &mut ParamStore, prefix: &str, d: usize) -> Result<LayerNorm, Error> {
        let gain = store.register(format!("{prefix}.gain"), Tensor::ones(1, d).into_trainable())?;
        let bias = store.register(format!("{prefix}.bias"), Tensor::zeros(1, d).into_trainable())?;
        Ok(LayerNorm {
            gain,
            bias,
            eps: Self::DEFAULT_EPS,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        x.layer_norm(&self.gain, &self.bias, self.eps)
    }
}

/// Inverted dropout: zero each entry with probability `p` and scale the
/// survivors by `1/(1-p)`, so the expected value is unchanged. `None` rng or
/// `p == 0` is the identity (inference path).
pub fn dropout(
    x: &Tensor,
    p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor, TensorError> {
    debug_assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
    let Some(rng) = rng else { return Ok(x.clone()) };
    if p == 0.0 {
        return Ok(x.clone());
    }
    use rand::Rng;
    let scale = 1.0 / (1.0 - p);
    let (rows, cols) = (x.rows(), x.cols());
    let mask_values: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
        .collect();
    let mask = Tensor::from_vec(rows, cols, mask_values)?;
    x.mul(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use autograd::ParamStore;
    use rand::SeedableRng;

    #[test]
    fn linear_applies_weights_and_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::init(&mut store, "test", 2, 3, &mut rng).unwrap();
        lin.w.set_values(&[1.0, 0.0, 2.0, 0.0, 1.0, 0.0]).unwrap();
        lin.b.set_values(&[0.5, -0.5, 0.0]).unwrap();
        let x = Tensor::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().to_vec(), vec![3.5, 3.5, 6.0]);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn zero_init_linear_is_constant_zero() {
        let mut store = ParamStore::new();
        let lin = Linear::init_zero(&mut store, "gate", 4, 3).unwrap();
        let x = Tensor::from_vec(1, 4, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_norm_normalizes_then_scales() {
        let mut store = ParamStore::new();
        let ln = LayerNorm::init(&mut store, "ln", 4).unwrap();
        let x = Tensor::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = ln.forward(&x).unwrap().to_vec();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // gain=2 doubles the normalized values.
        ln.gain.set_values(&[2.0; 4]).unwrap();
        let y2 = ln.forward(&x).unwrap().to_vec();
        for (a, b) in y.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_identity_when_disabled() {
        let x = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = dropout(&x, 0.5, None).unwrap();
        assert_eq!(x.to_vec(), y.to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = dropout(&x, 0.0, Some(&mut rng)).unwrap();
        assert_eq!(x.to_vec(), z.to_vec());
    }

    #[test]
    fn dropout_zeroes_and_rescales() {
        let x = Tensor::ones(1, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = dropout(&x, 0.25, Some(&mut rng)).unwrap().to_vec();
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        let survivors: Vec<f64> = y.iter().copied().filter(|&v| v != 0.0).collect();
        assert!(survivors.iter().all(|&v| (v - 1.0 / 0.75).abs() < 1e-12));
        // Binomial(10000, 0.25): 3 sigma ~ 130.
        assert!((2370..=2630).contains(&zeros), "{zeros} drops outside 3-sigma band");
    }
}
