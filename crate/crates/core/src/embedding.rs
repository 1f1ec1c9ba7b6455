//! Value-plus-position embedding: a same-padded temporal convolution of the
//! input channels added to a fixed sinusoidal position matrix.

use crate::numeric::{Graph, NumericError, ParamId, ParamStore, RngStream, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingConfig {
    pub d_model: usize,
    pub kernel: usize,
    pub channels: usize,
}

impl EmbeddingConfig {
    pub fn new(d_model: usize, kernel: usize, channels: usize) -> Result<Self, NumericError> {
        if d_model == 0 || !d_model.is_multiple_of(2) {
            return Err(NumericError::InvalidArgument(format!("d_model must be even and positive, got {d_model}")));
        }
        if kernel.is_multiple_of(2) {
            return Err(NumericError::InvalidArgument(format!("kernel width must be odd, got {kernel}")));
        }
        if channels == 0 {
            return Err(NumericError::InvalidArgument("embedding needs at least one channel".into()));
        }
        Ok(Self {
            d_model,
            kernel,
            channels,
        })
    }
}

/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(·)`.
pub fn positional_encoding(len: usize, d_model: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * d_model);
    for pos in 0..len {
        for j in 0..d_model {
            let i2 = (j - j % 2) as f64;
            let angle = pos as f64 / 10000f64.powf(i2 / d_model as f64);
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(vec![len, d_model], data).expect("positional encoding shape")
}

/// Flattens an `[n, L, F]` block into `[L, n·F]`; asset `a`'s field `f`
/// lands in channel `a·F + f`.
pub fn macro_channels(x_m: &Tensor) -> Result<Tensor, NumericError> {
    let s = x_m.shape();
    if s.len() != 3 {
        return Err(NumericError::InvalidArgument(format!("macro block must be rank 3, got {s:?}")));
    }
    let (n, l, f) = (s[0], s[1], s[2]);
    let mut data = Vec::with_capacity(n * l * f);
    for t in 0..l {
        for a in 0..n {
            let start = (a * l + t) * f;
            data.extend_from_slice(&x_m.data()[start..start + f]);
        }
    }
    Tensor::new(vec![l, n * f], data)
}

/// Learnable part of one embedding: conv weight `[K, C, d]` and bias `[d]`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub config: EmbeddingConfig,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, prefix: &str, config: EmbeddingConfig, rng: &mut RngStream) -> Self {
        let weight = store.add_uniform(
            format!("{prefix}.conv_w"),
            &[config.kernel, config.channels, config.d_model],
            config.kernel * config.channels,
            rng,
        );
        let bias = store.add_zeros(format!("{prefix}.conv_b"), &[config.d_model]);
        Self { config, weight, bias }
    }

    /// Embeds an `[L, C]` series already on the graph.
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NumericError> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.channels {
            return Err(NumericError::InvalidArgument(format!(
                "embedding expects [L, {}], got {shape:?}",
                self.config.channels
            )));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let conv = g.conv1d(x, w)?;
        let conv = g.add_row_bias(conv, b)?;
        let pe = g.constant(positional_encoding(shape[0], self.config.d_model))?;
        g.add(conv, pe)
    }
}

/// Embeds an `[L, C]` matrix.
pub fn embed(g: &mut Graph, store: &ParamStore, emb: &Embedding, series: &Tensor) -> Result<Var, NumericError> {
    let x = g.constant(series.clone())?;
    emb.apply(g, store, x)
}

/// Embeds an `[n, L, 5]` macro block through its `[L, 5n]` channel layout.
pub fn embed_macro(g: &mut Graph, store: &ParamStore, emb: &Embedding, x_m: &Tensor) -> Result<Var, NumericError> {
    embed(g, store, emb, &macro_channels(x_m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(channels: usize, d: usize) -> (ParamStore, Embedding) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(3);
        let e = Embedding::new(&mut store, "e", EmbeddingConfig::new(d, 3, channels).unwrap(), &mut rng);
        (store, e)
    }

    #[test]
    fn first_position_alternates() {
        let pe = positional_encoding(7, 64);
        for j in 0..64 {
            assert_eq!(pe.at(0, j), if j % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.at(3, 0) - 3f64.sin()).abs() < 1e-15);
        assert!((pe.at(3, 3) - (3.0 / 10000f64.powf(2.0 / 64.0)).cos()).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gives_position_matrix() {
        let (store, e) = setup(5, 64);
        let mut g = Graph::new();
        let out = embed(&mut g, &store, &e, &Tensor::zeros(&[7, 5])).unwrap();
        assert_eq!(g.value(out), &positional_encoding(7, 64));
        assert_eq!(g.value(out).shape(), &[7, 64]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let (store, e) = setup(5, 8);
        let mut g = Graph::new();
        assert!(embed(&mut g, &store, &e, &Tensor::zeros(&[7, 4])).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EmbeddingConfig::new(63, 3, 1).is_err());
        assert!(EmbeddingConfig::new(64, 2, 1).is_err());
        assert!(EmbeddingConfig::new(64, 3, 0).is_err());
    }

    #[test]
    fn macro_layout_and_single_asset() {
        let x_m = Tensor::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        let flat = macro_channels(&x_m).unwrap();
        assert_eq!(flat.shape(), &[3, 4]);
        assert_eq!(flat.row(1), &[2.0, 3.0, 8.0, 9.0]);

        let (store, e) = setup(5, 8);
        let mut rng = RngStream::new(9);
        let asset = Tensor::new(vec![7, 5], (0..35).map(|_| rng.normal()).collect()).unwrap();
        let block = asset.clone().reshaped(&[1, 7, 5]).unwrap();
        let mut g = Graph::new();
        let a = embed(&mut g, &store, &e, &asset).unwrap();
        let b = embed_macro(&mut g, &store, &e, &block).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn macro_order_matters() {
        let (store, e) = setup(10, 8);
        let mut rng = RngStream::new(1);
        let x_m = Tensor::new(vec![2, 7, 5], (0..70).map(|_| rng.normal()).collect()).unwrap();
        let mut swapped = x_m.data()[35..].to_vec();
        swapped.extend_from_slice(&x_m.data()[..35]);
        let swapped = Tensor::new(vec![2, 7, 5], swapped).unwrap();
        let mut g = Graph::new();
        let a = embed_macro(&mut g, &store, &e, &x_m).unwrap();
        let b = embed_macro(&mut g, &store, &e, &swapped).unwrap();
        assert_ne!(g.value(a), g.value(b));
    }
}
