//! Linear, NLinear and DLinear comparison models.
//!
//! Each channel of the `[L, C]` feature window gets its own temporal linear
//! map; the per-channel outputs are summed with one bias into the next
//! close. Heads start at zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{WindowSample, CLOSE_COLUMN};
use crate::numeric::{Graph, NumericError, ParamId, ParamStore, Tensor, Var};
use crate::Variant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Linear,
    NLinear,
    DLinear,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::NLinear => "nlinear",
            Self::DLinear => "dlinear",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "nlinear" => Ok(Self::NLinear),
            "dlinear" => Ok(Self::DLinear),
            other => Err(format!("unknown baseline {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub window: usize,
    pub channels: usize,
    /// Moving-average width of the DLinear trend.
    pub ma_window: usize,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, window: usize, channels: usize) -> Self {
        Self {
            kind,
            window,
            channels,
            ma_window: 3,
        }
    }

    pub fn validate(&self) -> Result<(), NumericError> {
        if self.window == 0 || self.channels == 0 {
            return Err(NumericError::InvalidArgument("baseline needs a non-empty window".into()));
        }
        if self.kind == BaselineKind::DLinear && (self.ma_window < 2 || self.ma_window >= self.window) {
            return Err(NumericError::InvalidArgument(format!(
                "moving-average window {} must be in [2, L) for L = {}",
                self.ma_window, self.window
            )));
        }
        Ok(())
    }
}

/// `[L, L]` averaging matrix of a centred moving average whose out-of-range
/// taps repeat the first or last row.
pub fn moving_average_matrix(len: usize, width: usize) -> Tensor {
    let mut m = Tensor::zeros(&[len, len]);
    let left = (width - 1) / 2;
    for t in 0..len {
        for k in 0..width {
            let src = (t + k).saturating_sub(left).min(len - 1);
            m.data_mut()[t * len + src] += 1.0 / width as f64;
        }
    }
    m
}

/// Trend and remainder of every column of `x`.
pub fn decompose(x: &Tensor, width: usize) -> (Tensor, Tensor) {
    let (l, c) = (x.rows(), x.cols());
    let a = moving_average_matrix(l, width);
    let mut trend = Tensor::zeros(&[l, c]);
    for t in 0..l {
        for j in 0..c {
            trend.data_mut()[t * c + j] = (0..l).map(|s| a.at(t, s) * x.at(s, j)).sum();
        }
    }
    let rem = Tensor::new(vec![l, c], x.data().iter().zip(trend.data()).map(|(a, b)| a - b).collect())
        .expect("same shape");
    (trend, rem)
}

/// Feature window a baseline consumes: prices, plus indicators unless the
/// variant drops them.
pub fn baseline_input(sample: &WindowSample, variant: Variant) -> Tensor {
    if !variant.uses_indicators() {
        return sample.x_g.clone();
    }
    let rows: Vec<Vec<f64>> = (0..sample.window_len())
        .map(|t| sample.x_g.row(t).iter().chain(sample.indicators.row(t)).copied().collect())
        .collect();
    Tensor::from_rows(&rows)
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub config: BaselineConfig,
    /// `[L, C]` weights; for DLinear these act on the trend.
    pub weight: ParamId,
    /// DLinear remainder weights.
    pub weight_rem: Option<ParamId>,
    pub bias: ParamId,
}

impl Baseline {
    pub fn new(config: BaselineConfig, store: &mut ParamStore) -> Result<Self, NumericError> {
        config.validate()?;
        let shape = [config.window, config.channels];
        let prefix = config.kind.as_str();
        let weight = store.add_zeros(format!("{prefix}.w"), &shape);
        let weight_rem = (config.kind == BaselineKind::DLinear).then(|| store.add_zeros(format!("{prefix}.w_rem"), &shape));
        let bias = store.add_zeros(format!("{prefix}.b"), &[1]);
        Ok(Self {
            config,
            weight,
            weight_rem,
            bias,
        })
    }

    /// Predicted next close for an `[L, C]` window whose close channel is
    /// column 3.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: &Tensor) -> Result<Var, NumericError> {
        let cfg = &self.config;
        if x.shape() != [cfg.window, cfg.channels] {
            return Err(NumericError::InvalidArgument(format!(
                "baseline expects [{}, {}], got {:?}",
                cfg.window,
                cfg.channels,
                x.shape()
            )));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let out = match cfg.kind {
            BaselineKind::Linear => {
                let xv = g.constant(x.clone())?;
                let p = g.mul(w, xv)?;
                let s = g.sum(p)?;
                g.add(s, b)?
            }
            BaselineKind::NLinear => {
                let last = x.row(cfg.window - 1).to_vec();
                let shifted: Vec<f64> = x.data().iter().enumerate().map(|(i, v)| v - last[i % cfg.channels]).collect();
                let xv = g.constant(Tensor::new(vec![cfg.window, cfg.channels], shifted)?)?;
                let p = g.mul(w, xv)?;
                let s = g.sum(p)?;
                let s = g.add(s, b)?;
                g.affine(s, 1.0, last[CLOSE_COLUMN])?
            }
            BaselineKind::DLinear => {
                let (trend, rem) = decompose(x, cfg.ma_window);
                let wr = g.param(store, self.weight_rem.expect("dlinear remainder weights"));
                let tv = g.constant(trend)?;
                let rv = g.constant(rem)?;
                let pt = g.mul(w, tv)?;
                let pr = g.mul(wr, rv)?;
                let st = g.sum(pt)?;
                let sr = g.sum(pr)?;
                let s = g.add(st, sr)?;
                g.add(s, b)?
            }
        };
        Ok(out)
    }

    pub fn predict(&self, store: &ParamStore, x: &Tensor) -> Result<f64, NumericError> {
        let mut g = Graph::new();
        let v = self.forward(&mut g, store, x)?;
        Ok(g.value(v).item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Adam, RngStream};

    fn window(rng: &mut RngStream, l: usize, c: usize) -> Tensor {
        Tensor::new(vec![l, c], (0..l * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn randomize(store: &mut ParamStore, rng: &mut RngStream) {
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().iter_mut().for_each(|x| *x = rng.normal());
        }
    }

    #[test]
    fn nlinear_zero_weights_is_persistence() {
        let mut store = ParamStore::new();
        let m = Baseline::new(BaselineConfig::new(BaselineKind::NLinear, 7, 12), &mut store).unwrap();
        let mut rng = RngStream::new(1);
        let x = window(&mut rng, 7, 12);
        assert_eq!(m.predict(&store, &x).unwrap(), x.at(6, CLOSE_COLUMN));
    }

    #[test]
    fn linear_on_zero_input_is_bias() {
        let mut store = ParamStore::new();
        let m = Baseline::new(BaselineConfig::new(BaselineKind::Linear, 7, 5), &mut store).unwrap();
        randomize(&mut store, &mut RngStream::new(2));
        let b = store.value(m.bias).item();
        assert_eq!(m.predict(&store, &Tensor::zeros(&[7, 5])).unwrap(), b);
    }

    #[test]
    fn dlinear_constant_series_fit() {
        let mut store = ParamStore::new();
        let m = Baseline::new(BaselineConfig::new(BaselineKind::DLinear, 7, 5), &mut store).unwrap();
        let x = Tensor::filled(&[7, 5], 2.5);
        assert_eq!(m.predict(&store, &x).unwrap(), 0.0);
        let adam = Adam::default();
        for _ in 0..3000 {
            let mut g = Graph::new();
            let p = m.forward(&mut g, &store, &x).unwrap();
            let t = g.scalar(2.5).unwrap();
            let loss = g.mse(p, t).unwrap();
            g.backward(loss).unwrap().accumulate(&g, &mut store, 1.0);
            adam.step(&mut store, 0.01);
        }
        assert!((m.predict(&store, &x).unwrap() - 2.5).abs() < 1e-6);
    }

    #[test]
    fn decomposition_reconstructs() {
        let mut rng = RngStream::new(3);
        let x = window(&mut rng, 7, 3);
        let (t, r) = decompose(&x, 3);
        for i in 0..x.len() {
            assert!((t.data()[i] + r.data()[i] - x.data()[i]).abs() < 1e-15);
        }
        // edge replication: first trend value averages x0, x0, x1
        assert!((t.at(0, 0) - (2.0 * x.at(0, 0) + x.at(1, 0)) / 3.0).abs() < 1e-15);
        assert!((t.at(3, 1) - (x.at(2, 1) + x.at(3, 1) + x.at(4, 1)) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dlinear_window_validated() {
        let mut store = ParamStore::new();
        let mut cfg = BaselineConfig::new(BaselineKind::DLinear, 7, 5);
        cfg.ma_window = 7;
        assert!(Baseline::new(cfg.clone(), &mut store).is_err());
        cfg.ma_window = 1;
        assert!(Baseline::new(cfg, &mut store).is_err());
    }

    #[test]
    fn nlinear_translation_equivariant() {
        let mut store = ParamStore::new();
        let m = Baseline::new(BaselineConfig::new(BaselineKind::NLinear, 7, 5), &mut store).unwrap();
        let mut rng = RngStream::new(4);
        randomize(&mut store, &mut rng);
        let x = window(&mut rng, 7, 5);
        let mut shifted = x.clone();
        for t in 0..7 {
            shifted.data_mut()[t * 5 + CLOSE_COLUMN] += 3.25;
        }
        let d = m.predict(&store, &shifted).unwrap() - m.predict(&store, &x).unwrap();
        assert!((d - 3.25).abs() < 1e-12);
    }
}
