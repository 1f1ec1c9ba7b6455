//! The CryptoPulse forecaster.
//!
//! Two fluctuation estimates are produced per sample: one from the target
//! window attending over cyclic shifts of the macro block, one from a linear
//! map of the last-close-normalised price history (plus the technical
//! indicators unless they are ablated). A sentiment-driven factor `κ`
//! rescales both, and a gate `γ` mixes the two reconstructed prices.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{WindowSample, CLOSE_COLUMN, PRICE_FIELDS};
use crate::embedding::{macro_channels, Embedding, EmbeddingConfig};
use crate::indicators::INDICATOR_COUNT;
use crate::numeric::{Graph, NumericError, ParamId, ParamStore, RngStream, Tensor, Var};
use crate::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window: usize,
    pub macro_count: usize,
    pub d_model: usize,
    pub kernel: usize,
    pub dropout: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 7,
            macro_count: 5,
            d_model: 64,
            kernel: 3,
            dropout: 0.1,
            variant: Variant::Full,
        }
    }
}

/// Position-wise feed-forward, then a linear over time and one over features.
#[derive(Clone, Debug)]
pub struct ZetaHead {
    pub width: usize,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub temporal_w: ParamId,
    pub temporal_b: ParamId,
    pub feature_w: ParamId,
    pub feature_b: ParamId,
}

impl ZetaHead {
    pub fn new(store: &mut ParamStore, prefix: &str, window: usize, width: usize, rng: &mut RngStream) -> Self {
        let hidden = 2 * width;
        Self {
            width,
            ffn_w1: store.add_uniform(format!("{prefix}.ffn_w1"), &[width, hidden], width, rng),
            ffn_b1: store.add_zeros(format!("{prefix}.ffn_b1"), &[hidden]),
            ffn_w2: store.add_uniform(format!("{prefix}.ffn_w2"), &[hidden, width], hidden, rng),
            ffn_b2: store.add_zeros(format!("{prefix}.ffn_b2"), &[width]),
            temporal_w: store.add_uniform(format!("{prefix}.temporal_w"), &[1, window], window, rng),
            temporal_b: store.add_zeros(format!("{prefix}.temporal_b"), &[1]),
            feature_w: store.add_uniform(format!("{prefix}.feature_w"), &[width, 1], width, rng),
            feature_b: store.add_zeros(format!("{prefix}.feature_b"), &[1]),
        }
    }

    pub fn ids(&self) -> [ParamId; 8] {
        [
            self.ffn_w1,
            self.ffn_b1,
            self.ffn_w2,
            self.ffn_b2,
            self.temporal_w,
            self.temporal_b,
            self.feature_w,
            self.feature_b,
        ]
    }

    /// Maps an `[L, width]` input to a single-element tensor.
    pub fn apply(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        dropout: f64,
        rng: &mut RngStream,
        training: bool,
    ) -> Result<Var, NumericError> {
        let p = |g: &mut Graph, id| g.param(store, id);
        let (w1, b1, w2, b2) = (p(g, self.ffn_w1), p(g, self.ffn_b1), p(g, self.ffn_w2), p(g, self.ffn_b2));
        let h = g.matmul(x, w1)?;
        let h = g.add_row_bias(h, b1)?;
        let h = g.relu(h)?;
        let h = g.matmul(h, w2)?;
        let h = g.add_row_bias(h, b2)?;
        let h = g.dropout(h, dropout, rng, training)?;
        let (tw, tb, fw, fb) = (
            p(g, self.temporal_w),
            p(g, self.temporal_b),
            p(g, self.feature_w),
            p(g, self.feature_b),
        );
        let t = g.matmul(tw, h)?; // [1, width]
        let t = g.add_scalar(t, tb)?;
        let out = g.matmul(t, fw)?; // [1, 1]
        let out = g.reshape(out, &[1])?;
        g.add(out, fb)
    }
}

/// Row `t` of the result is row `(t - shift) mod L` of `x`.
pub fn roll_rows(x: &Tensor, shift: usize) -> Result<Tensor, NumericError> {
    let mut g = Graph::new();
    let v = g.constant(x.clone())?;
    let r = g.roll(v, shift)?;
    Ok(g.value(r).clone())
}

/// Mean over time of the per-step inner product of two `[L, d]` tensors.
pub fn lag_similarity(g: &mut Graph, q: Var, r: Var) -> Result<Var, NumericError> {
    let len = g.value(q).rows();
    let prod = g.mul(q, r)?;
    let s = g.sum(prod)?;
    g.scale(s, 1.0 / len as f64)
}

/// Reconstructed prices from the two fluctuations, `κ` and `γ`.
pub fn fuse_values(last_close: f64, delta1: f64, delta2: f64, kappa: f64, gamma: f64) -> (f64, f64, f64) {
    let p1 = last_close + kappa * delta1;
    let p2 = last_close + kappa * delta2;
    (p1, p2, gamma * p1 + (1.0 - gamma) * p2)
}

/// Graph handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub attention: Var,
    pub h_m: Var,
    pub delta1: Var,
    pub delta2: Var,
    pub kappa: Var,
    pub gamma: Var,
    pub p1: Var,
    pub p2: Var,
    pub pred: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    /// Replaces the sentiment window with zeros.
    pub zero_sentiment: bool,
    /// Fixes `κ` instead of computing it from the sentiment embedding.
    pub kappa: Option<f64>,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train() -> Self {
        Self {
            training: true,
            ..Self::default()
        }
    }
}

/// One scored prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub date: NaiveDate,
    /// Branch predictions, `κ` and `γ`; absent for the linear baselines.
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub pred: f64,
    pub truth: f64,
}

pub const PREDICTION_CSV_HEADER: &str = "date,p1,p2,kappa,gamma,pred,true";

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    date: String,
    p1: Option<f64>,
    p2: Option<f64>,
    kappa: Option<f64>,
    gamma: Option<f64>,
    pred: f64,
    #[serde(rename = "true")]
    truth: f64,
}

pub fn write_predictions_csv<W: Write>(records: &[PredictionRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(PredictionRow {
            date: r.date.format("%Y-%m-%d").to_string(),
            p1: r.p1,
            p2: r.p2,
            kappa: r.kappa,
            gamma: r.gamma,
            pred: r.pred,
            truth: r.truth,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<PredictionRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<PredictionRow>()
        .map(|row| {
            let row = row.map_err(|e| e.to_string())?;
            Ok(PredictionRecord {
                date: crate::data::parse_date(&row.date)?,
                p1: row.p1,
                p2: row.p2,
                kappa: row.kappa,
                gamma: row.gamma,
                pred: row.pred,
                truth: row.truth,
            })
        })
        .collect()
}

/// Parameters and structure of one CryptoPulse instance.
#[derive(Clone, Debug)]
pub struct CryptoPulse {
    pub config: ModelConfig,
    pub emb_target: Embedding,
    pub emb_macro: Embedding,
    pub emb_sentiment: Embedding,
    pub zeta_delta: ZetaHead,
    pub dyn_w: ParamId,
    pub dyn_b: ParamId,
    /// `[L, 7]` per-indicator temporal weights; absent when indicators are ablated.
    pub ind_w: Option<ParamId>,
    pub zeta_kappa: ZetaHead,
    pub zeta_gamma: ZetaHead,
}

impl CryptoPulse {
    pub fn new(config: ModelConfig, store: &mut ParamStore, rng: &mut RngStream) -> Result<Self, NumericError> {
        if config.window < 2 {
            return Err(NumericError::InvalidArgument(format!(
                "window must be at least 2 for the shift attention, got {}",
                config.window
            )));
        }
        if config.macro_count == 0 {
            return Err(NumericError::InvalidArgument("macro block needs at least one asset".into()));
        }
        let (l, d, k) = (config.window, config.d_model, config.kernel);
        let emb_target = Embedding::new(store, "emb_target", EmbeddingConfig::new(d, k, PRICE_FIELDS)?, rng);
        let emb_macro = Embedding::new(
            store,
            "emb_macro",
            EmbeddingConfig::new(d, k, PRICE_FIELDS * config.macro_count)?,
            rng,
        );
        let emb_sentiment = Embedding::new(store, "emb_sentiment", EmbeddingConfig::new(d, k, 1)?, rng);
        let zeta_delta = ZetaHead::new(store, "zeta_delta", l, d, rng);
        let dyn_w = store.add_uniform("dyn_w", &[1, l], l, rng);
        let dyn_b = store.add_zeros("dyn_b", &[1]);
        let ind_w = config
            .variant
            .uses_indicators()
            .then(|| store.add_uniform("ind_w", &[l, INDICATOR_COUNT], l, rng));
        let zeta_kappa = ZetaHead::new(store, "zeta_kappa", l, d, rng);
        let zeta_gamma = ZetaHead::new(store, "zeta_gamma", l, 2 * d, rng);
        Ok(Self {
            config,
            emb_target,
            emb_macro,
            emb_sentiment,
            zeta_delta,
            dyn_w,
            dyn_b,
            ind_w,
            zeta_kappa,
            zeta_gamma,
        })
    }

    /// Attention over shifts `τ = 1..L-1` of the macro embedding, the
    /// aggregated macro tensor `h_m` and the first fluctuation `Δ¹`.
    pub fn macro_branch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        xg_emb: Var,
        xm_emb: Var,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Var, Var, Var), NumericError> {
        let len = g.value(xm_emb).rows();
        if len < 2 {
            return Err(NumericError::InvalidArgument("shift attention needs L >= 2".into()));
        }
        let mut shifted = Vec::with_capacity(len - 1);
        let mut scores = Vec::with_capacity(len - 1);
        for tau in 1..len {
            let r = g.roll(xm_emb, tau)?;
            scores.push(lag_similarity(g, xg_emb, r)?);
            shifted.push(r);
        }
        let scores = g.stack(&scores)?;
        let attention = g.softmax(scores)?;
        let mut h_m: Option<Var> = None;
        for (i, &r) in shifted.iter().enumerate() {
            let a = g.index(attention, i)?;
            let term = g.scalar_mul(r, a)?;
            h_m = Some(match h_m {
                Some(acc) => g.add(acc, term)?,
                None => term,
            });
        }
        let h_m = g.dropout(h_m.expect("at least one shift"), self.config.dropout, rng, training)?;
        let delta1 = self.zeta_delta.apply(g, store, h_m, self.config.dropout, rng, training)?;
        Ok((attention, h_m, delta1))
    }

    /// Second fluctuation: a temporal linear over `closes - last_close`,
    /// plus one temporal linear per indicator channel when present.
    pub fn dynamics_branch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x_g: &Tensor,
        last_close: f64,
        indicators: Option<&Tensor>,
    ) -> Result<Var, NumericError> {
        let l = x_g.rows();
        let normalized: Vec<f64> = (0..l).map(|t| x_g.at(t, CLOSE_COLUMN) - last_close).collect();
        let closes = g.constant(Tensor::new(vec![l, 1], normalized)?)?;
        let w = g.param(store, self.dyn_w);
        let b = g.param(store, self.dyn_b);
        let out = g.matmul(w, closes)?;
        let out = g.reshape(out, &[1])?;
        let mut out = g.add(out, b)?;
        if let (Some(id), Some(ind)) = (self.ind_w, indicators) {
            let v = g.param(store, id);
            let x = g.constant(ind.clone())?;
            let prod = g.mul(v, x)?;
            let s = g.sum(prod)?;
            out = g.add(out, s)?;
        }
        Ok(out)
    }

    /// `κ`, `γ` and the three price predictions.
    #[allow(clippy::too_many_arguments)]
    pub fn fuse(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        last_close: f64,
        delta1: Var,
        delta2: Var,
        xg_emb: Var,
        s_emb: Var,
        kappa_override: Option<f64>,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Var, Var, Var, Var, Var), NumericError> {
        let dropout = self.config.dropout;
        let kappa = match kappa_override {
            Some(k) => g.scalar(k)?,
            None => {
                let z = self.zeta_kappa.apply(g, store, s_emb, dropout, rng, training)?;
                g.tanh(z)?
            }
        };
        let both = g.concat(xg_emb, s_emb)?;
        let z = self.zeta_gamma.apply(g, store, both, dropout, rng, training)?;
        let gamma = g.sigmoid(z)?;
        let k1 = g.mul(kappa, delta1)?;
        let p1 = g.affine(k1, 1.0, last_close)?;
        let k2 = g.mul(kappa, delta2)?;
        let p2 = g.affine(k2, 1.0, last_close)?;
        let diff = g.sub(p1, p2)?;
        let mixed = g.mul(gamma, diff)?;
        let pred = g.add(p2, mixed)?;
        Ok((kappa, gamma, p1, p2, pred))
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        sample: &WindowSample,
        opts: ForwardOptions,
        rng: &mut RngStream,
    ) -> Result<ForwardVars, NumericError> {
        let training = opts.training;
        let dropout = self.config.dropout;
        let l = sample.window_len();
        if l != self.config.window || sample.macro_count() != self.config.macro_count {
            return Err(NumericError::InvalidArgument(format!(
                "sample has L={l}, n={} but the model expects L={}, n={}",
                sample.macro_count(),
                self.config.window,
                self.config.macro_count
            )));
        }
        let ablate_sentiment = opts.zero_sentiment || !self.config.variant.uses_sentiment();
        let kappa_override = opts.kappa.or((!self.config.variant.uses_sentiment()).then_some(1.0));

        let x_g = g.constant(sample.x_g.clone())?;
        let xg_emb = self.emb_target.apply(g, store, x_g)?;
        let xg_emb = g.dropout(xg_emb, dropout, rng, training)?;
        let x_m = g.constant(macro_channels(&sample.x_m)?)?;
        let xm_emb = self.emb_macro.apply(g, store, x_m)?;
        let xm_emb = g.dropout(xm_emb, dropout, rng, training)?;
        let s = if ablate_sentiment {
            vec![0.0; l]
        } else {
            sample.sentiment.clone()
        };
        let s = g.constant(Tensor::new(vec![l, 1], s)?)?;
        let s_emb = self.emb_sentiment.apply(g, store, s)?;
        let s_emb = g.dropout(s_emb, dropout, rng, training)?;

        let (attention, h_m, delta1) = self.macro_branch(g, store, xg_emb, xm_emb, training, rng)?;
        let indicators = self.config.variant.uses_indicators().then_some(&sample.indicators);
        let delta2 = self.dynamics_branch(g, store, &sample.x_g, sample.last_close, indicators)?;
        let (kappa, gamma, p1, p2, pred) = self.fuse(
            g,
            store,
            sample.last_close,
            delta1,
            delta2,
            xg_emb,
            s_emb,
            kappa_override,
            training,
            rng,
        )?;
        Ok(ForwardVars {
            attention,
            h_m,
            delta1,
            delta2,
            kappa,
            gamma,
            p1,
            p2,
            pred,
        })
    }

    /// Eval-mode prediction with its diagnostics.
    pub fn predict(
        &self,
        store: &ParamStore,
        sample: &WindowSample,
        opts: ForwardOptions,
    ) -> Result<PredictionRecord, NumericError> {
        let mut g = Graph::new();
        let mut rng = RngStream::new(0);
        let v = self.forward(&mut g, store, sample, ForwardOptions { training: false, ..opts }, &mut rng)?;
        let item = |v| g.value(v).item();
        Ok(PredictionRecord {
            date: sample.target_date,
            p1: Some(item(v.p1)),
            p2: Some(item(v.p2)),
            kappa: Some(item(v.kappa)),
            gamma: Some(item(v.gamma)),
            pred: item(v.pred),
            truth: sample.target_close,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(l: usize, n: usize, rng: &mut RngStream) -> WindowSample {
        let day = |i: usize| NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() + chrono::Days::new(i as u64);
        let x_g = Tensor::new(vec![l, 5], (0..l * 5).map(|_| rng.normal()).collect()).unwrap();
        WindowSample {
            target_symbol: "T".into(),
            dates: (0..l).map(day).collect(),
            target_date: day(l),
            last_close: x_g.at(l - 1, CLOSE_COLUMN),
            x_m: Tensor::new(vec![n, l, 5], (0..n * l * 5).map(|_| rng.normal()).collect()).unwrap(),
            indicators: Tensor::new(vec![l, 7], (0..l * 7).map(|_| rng.normal()).collect()).unwrap(),
            sentiment: (0..l).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            target_close: rng.normal(),
            x_g,
        }
    }

    fn model(d: usize, l: usize, n: usize, seed: u64) -> (CryptoPulse, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(seed);
        let cfg = ModelConfig {
            window: l,
            macro_count: n,
            d_model: d,
            ..ModelConfig::default()
        };
        (CryptoPulse::new(cfg, &mut store, &mut rng).unwrap(), store)
    }

    #[test]
    fn roll_examples() {
        let x = Tensor::from_rows(&[[1.0], [2.0], [3.0]]);
        assert_eq!(roll_rows(&x, 1).unwrap().data(), &[3.0, 1.0, 2.0]);
        assert_eq!(roll_rows(&x, 0).unwrap(), x);
        assert_eq!(roll_rows(&roll_rows(&x, 2).unwrap(), 1).unwrap(), x);
        assert!(roll_rows(&x, 3).is_err());
    }

    #[test]
    fn lag_similarity_examples() {
        let mut g = Graph::new();
        let ones = g.constant(Tensor::filled(&[7, 4], 1.0)).unwrap();
        let zeros = g.constant(Tensor::zeros(&[7, 4])).unwrap();
        let s = lag_similarity(&mut g, ones, ones).unwrap();
        assert_eq!(g.value(s).item(), 4.0);
        let z = lag_similarity(&mut g, ones, zeros).unwrap();
        assert_eq!(g.value(z).item(), 0.0);
        let other = g.constant(Tensor::filled(&[7, 5], 1.0)).unwrap();
        assert!(lag_similarity(&mut g, ones, other).is_err());
    }

    #[test]
    fn dynamics_examples() {
        let (m, mut store) = model(4, 7, 1, 0);
        let closes = |c: &[f64]| {
            Tensor::from_rows(&c.iter().map(|&x| [x, x, x, x, 1.0]).collect::<Vec<_>>())
        };
        let mut g = Graph::new();
        let flat = m.dynamics_branch(&mut g, &store, &closes(&[5.0; 7]), 5.0, None).unwrap();
        assert_eq!(g.value(flat).item(), 0.0);

        *store.value_mut(m.dyn_w) = Tensor::new(vec![1, 7], vec![0., 0., 0., 0., 0., 0., 1.]).unwrap();
        let mut g = Graph::new();
        let up = closes(&[1., 2., 3., 4., 5., 6., 7.]);
        let d = m.dynamics_branch(&mut g, &store, &up, 7.0, None).unwrap();
        assert_eq!(g.value(d).item(), 0.0);

        *store.value_mut(m.dyn_w) = Tensor::filled(&[1, 7], 1.0);
        let mut g = Graph::new();
        let p = 40.0;
        let c = closes(&[p - 3., p - 2., p - 1., p, p + 1., p + 2., p]);
        let d = m.dynamics_branch(&mut g, &store, &c, p, None).unwrap();
        assert_eq!(g.value(d).item(), -3.0);
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse_values(7.0, 3.0, -2.0, 0.0, 0.3), (7.0, 7.0, 7.0));
        assert_eq!(fuse_values(0.0, 10.0, 20.0, 1.0, 1.0).2, 10.0);
        assert_eq!(fuse_values(0.0, 10.0, 20.0, 1.0, 0.5).2, 15.0);
    }

    #[test]
    fn attention_is_a_distribution() {
        let mut rng = RngStream::new(4);
        let (m, store) = model(8, 7, 2, 1);
        let s = sample(7, 2, &mut rng);
        let mut g = Graph::new();
        let v = m.forward(&mut g, &store, &s, ForwardOptions::eval(), &mut rng).unwrap();
        let a = g.value(v.attention);
        assert_eq!(a.len(), 6);
        assert!((a.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn constant_macro_makes_attention_irrelevant() {
        let (m, store) = model(2, 4, 1, 2);
        let mut rng = RngStream::new(0);
        let mut g = Graph::new();
        let q = g.constant(Tensor::new(vec![4, 2], (0..8).map(|_| rng.normal()).collect()).unwrap()).unwrap();
        let r = g.constant(Tensor::from_rows(&[[0.5, -1.0]; 4])).unwrap();
        let (_, h_m, _) = m.macro_branch(&mut g, &store, q, r, false, &mut rng).unwrap();
        let h = g.value(h_m);
        for t in 0..4 {
            assert!((h.at(t, 0) - 0.5).abs() < 1e-15 && (h.at(t, 1) + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn macro_branch_matches_enumeration() {
        let (m, store) = model(2, 4, 1, 3);
        let mut rng = RngStream::new(11);
        let q: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        // enumerate shifts directly on the flat arrays
        let shifted = |tau: usize| -> Vec<f64> {
            (0..4).flat_map(|t| {
                let src = (t + 4 - tau) % 4;
                [x[src * 2], x[src * 2 + 1]]
            }).collect()
        };
        let scores: Vec<f64> = (1..4)
            .map(|tau| shifted(tau).iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / 4.0)
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let mut expect = vec![0.0; 8];
        for tau in 1..4 {
            let w = scores[tau - 1].exp() / z;
            for (e, v) in expect.iter_mut().zip(shifted(tau)) {
                *e += w * v;
            }
        }
        let mut g = Graph::new();
        let qv = g.constant(Tensor::new(vec![4, 2], q).unwrap()).unwrap();
        let xv = g.constant(Tensor::new(vec![4, 2], x).unwrap()).unwrap();
        let (_, h_m, _) = m.macro_branch(&mut g, &store, qv, xv, false, &mut rng).unwrap();
        for (a, b) in g.value(h_m).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_is_deterministic_and_training_is_seeded() {
        let mut rng = RngStream::new(5);
        let (m, store) = model(8, 7, 2, 7);
        let s = sample(7, 2, &mut rng);
        let a = m.predict(&store, &s, ForwardOptions::eval()).unwrap();
        let b = m.predict(&store, &s, ForwardOptions::eval()).unwrap();
        assert_eq!(a, b);
        let run = |seed| {
            let mut g = Graph::new();
            let mut r = RngStream::new(seed);
            let v = m.forward(&mut g, &store, &s, ForwardOptions::train(), &mut r).unwrap();
            g.value(v.pred).item()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert!(a.kappa.unwrap().abs() < 1.0);
        let (p1, p2) = (a.p1.unwrap(), a.p2.unwrap());
        assert!(p1.min(p2) <= a.pred && a.pred <= p1.max(p2));
    }

    #[test]
    fn zero_kappa_head_gives_persistence() {
        let mut rng = RngStream::new(6);
        let (m, mut store) = model(8, 7, 2, 8);
        for id in m.zeta_kappa.ids() {
            store.value_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let s = sample(7, 2, &mut rng);
        let r = m.predict(&store, &s, ForwardOptions::eval()).unwrap();
        assert_eq!(r.kappa, Some(0.0));
        assert_eq!(r.pred, s.last_close);
    }

    #[test]
    fn xi_has_no_indicator_weights() {
        let mut store = ParamStore::new();
        let cfg = ModelConfig {
            variant: Variant::Xi,
            d_model: 4,
            macro_count: 1,
            ..ModelConfig::default()
        };
        let m = CryptoPulse::new(cfg, &mut store, &mut RngStream::new(0)).unwrap();
        assert!(m.ind_w.is_none());
        assert!(store.find("ind_w").is_none());
    }

    #[test]
    fn prediction_csv_round_trip() {
        let recs = vec![
            PredictionRecord {
                date: NaiveDate::from_ymd_opt(2022, 5, 1).unwrap(),
                p1: Some(0.25),
                p2: Some(-1.5),
                kappa: Some(0.1),
                gamma: Some(0.7),
                pred: 0.1 + 1e-17,
                truth: 3.0,
            },
            PredictionRecord {
                date: NaiveDate::from_ymd_opt(2022, 5, 2).unwrap(),
                p1: None,
                p2: None,
                kappa: None,
                gamma: None,
                pred: 1.0 / 3.0,
                truth: -2.0,
            },
        ];
        let mut buf = Vec::new();
        write_predictions_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(PREDICTION_CSV_HEADER));
        assert_eq!(read_predictions_csv(&buf[..]).unwrap(), recs);
    }
}
