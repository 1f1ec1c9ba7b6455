//! Helpers shared by the integration tests: random data and straight-line
//! reference implementations that do not touch the library's graph code.
#![allow(dead_code)]

use chrono::{Days, NaiveDate};

use cryptopulse::data::{CryptoSeries, PriceBar, WindowSample};
use cryptopulse::numeric::{ParamStore, RngStream, Tensor};

pub fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + Days::new(i as u64)
}

/// A valid OHLCV series: a multiplicative walk with occasional flat days
/// (open = high = low = close) and repeated closes.
pub fn random_series(rng: &mut RngStream, symbol: &str, len: usize) -> CryptoSeries {
    let mut close = rng.uniform_range(0.5, 500.0);
    let mut bars = Vec::with_capacity(len);
    for i in 0..len {
        let u = rng.uniform();
        if u < 0.05 {
            bars.push(PriceBar {
                date: day(i),
                open: close,
                high: close,
                low: close,
                close,
                volume: 0.0,
            });
            continue;
        }
        let open = close;
        if u > 0.1 {
            close *= (0.05 * rng.normal()).exp();
        }
        let high = open.max(close) * (1.0 + 0.02 * rng.uniform());
        let low = open.min(close) * (1.0 - 0.02 * rng.uniform());
        bars.push(PriceBar {
            date: day(i),
            open,
            high,
            low,
            close,
            volume: rng.uniform_range(0.0, 1e6),
        });
    }
    CryptoSeries::new(symbol, bars).unwrap()
}

pub fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// A window sample filled with standard-normal values.
pub fn random_sample(rng: &mut RngStream, l: usize, n: usize) -> WindowSample {
    let x_g = random_matrix(rng, l, 5);
    WindowSample {
        target_symbol: "T".into(),
        dates: (0..l).map(day).collect(),
        target_date: day(l),
        last_close: x_g.at(l - 1, 3),
        x_m: Tensor::new(vec![n, l, 5], (0..n * l * 5).map(|_| rng.normal()).collect()).unwrap(),
        indicators: random_matrix(rng, l, 7),
        sentiment: (0..l).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        target_close: rng.normal(),
        x_g,
    }
}

/// Overwrites every parameter (biases included) with uniform values in
/// `[-scale, scale]`.
pub fn scramble(store: &mut ParamStore, rng: &mut RngStream, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = rng.uniform_range(-scale, scale);
        }
    }
}

/// `a` and `b` agree to `tol` relative to the larger magnitude.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub mod indicator_oracle {
    //! Single-purpose indicator definitions over 1-based day indices.

    use cryptopulse::data::PriceBar;

    fn bar(bars: &[PriceBar], t: usize) -> &PriceBar {
        &bars[t - 1]
    }

    fn window(bars: &[PriceBar], t: usize, n: usize) -> &[PriceBar] {
        &bars[t - n..t]
    }

    pub fn stoch_k(bars: &[PriceBar], t: usize, n: usize) -> f64 {
        let w = window(bars, t, n);
        let mut lo = w[0].low;
        let mut hi = w[0].high;
        for b in w {
            if b.low < lo {
                lo = b.low;
            }
            if b.high > hi {
                hi = b.high;
            }
        }
        if hi == lo {
            return 50.0;
        }
        (bar(bars, t).close - lo) / (hi - lo) * 100.0
    }

    pub fn stoch_d(bars: &[PriceBar], t: usize, n: usize, n_d: usize) -> f64 {
        let mut total = 0.0;
        for s in t + 1 - n_d..=t {
            total += stoch_k(bars, s, n);
        }
        total / n_d as f64
    }

    pub fn williams(bars: &[PriceBar], t: usize, n: usize) -> f64 {
        let w = window(bars, t, n);
        let hi = w.iter().map(|b| b.high).fold(f64::MIN, f64::max);
        let lo = w.iter().map(|b| b.low).fold(f64::MAX, f64::min);
        if hi == lo {
            return 50.0;
        }
        (hi - bar(bars, t).close) / (hi - lo) * 100.0
    }

    pub fn ad(bars: &[PriceBar], t: usize) -> f64 {
        let b = bar(bars, t);
        if b.high == b.low {
            return 0.0;
        }
        (b.close - bar(bars, t - 1).close) / (b.high - b.low)
    }

    pub fn momentum(bars: &[PriceBar], t: usize, n: usize) -> f64 {
        bar(bars, t).close - bar(bars, t - n).close
    }

    pub fn disparity(bars: &[PriceBar], t: usize, n: usize) -> f64 {
        let mean = window(bars, t, n).iter().map(|b| b.close).sum::<f64>() / n as f64;
        bar(bars, t).close / mean * 100.0
    }

    pub fn roc(bars: &[PriceBar], t: usize, n: usize) -> f64 {
        bar(bars, t).close / bar(bars, t - n).close * 100.0
    }
}

pub mod forward_oracle {
    //! The full CryptoPulse forward pass in eval mode, written as plain
    //! loops over parameter values looked up by name.

    use cryptopulse::data::WindowSample;
    use cryptopulse::numeric::ParamStore;

    type Mat = Vec<Vec<f64>>;

    fn get(store: &ParamStore, name: &str) -> (Vec<usize>, Vec<f64>) {
        let t = store.get(name);
        (t.shape().to_vec(), t.data().to_vec())
    }

    fn conv_same(x: &Mat, store: &ParamStore, prefix: &str) -> Mat {
        let (ws, w) = get(store, &format!("{prefix}.conv_w"));
        let (_, b) = get(store, &format!("{prefix}.conv_b"));
        let (k, c, d) = (ws[0], ws[1], ws[2]);
        let l = x.len();
        let half = (k / 2) as isize;
        let mut out = vec![vec![0.0; d]; l];
        for (t, row) in out.iter_mut().enumerate() {
            for (o, v) in row.iter_mut().enumerate() {
                let mut acc = b[o];
                for kk in 0..k {
                    let s = t as isize + kk as isize - half;
                    if s < 0 || s >= l as isize {
                        continue;
                    }
                    for ch in 0..c {
                        acc += x[s as usize][ch] * w[(kk * c + ch) * d + o];
                    }
                }
                let i = (o / 2) as f64 * 2.0;
                let angle = t as f64 / 10000f64.powf(i / d as f64);
                *v = acc + if o % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        out
    }

    fn zeta(x: &Mat, store: &ParamStore, prefix: &str) -> f64 {
        let p = |n: &str| get(store, &format!("{prefix}.{n}"));
        let (s1, w1) = p("ffn_w1");
        let (_, b1) = p("ffn_b1");
        let (_, w2) = p("ffn_w2");
        let (_, b2) = p("ffn_b2");
        let (_, tw) = p("temporal_w");
        let (_, tb) = p("temporal_b");
        let (_, fw) = p("feature_w");
        let (_, fb) = p("feature_b");
        let (width, hidden) = (s1[0], s1[1]);
        let mut pooled = vec![tb[0]; width];
        for (t, row) in x.iter().enumerate() {
            let mut h = vec![0.0; hidden];
            for (j, hj) in h.iter_mut().enumerate() {
                let mut acc = b1[j];
                for i in 0..width {
                    acc += row[i] * w1[i * hidden + j];
                }
                *hj = acc.max(0.0);
            }
            for (o, pv) in pooled.iter_mut().enumerate() {
                let mut acc = b2[o];
                for j in 0..hidden {
                    acc += h[j] * w2[j * width + o];
                }
                *pv += tw[t] * acc;
            }
        }
        fb[0] + (0..width).map(|o| pooled[o] * fw[o]).sum::<f64>()
    }

    pub struct Oracle {
        pub attention: Vec<f64>,
        pub h_m: Mat,
        pub delta1: f64,
        pub delta2: f64,
        pub kappa: f64,
        pub gamma: f64,
        pub pred: f64,
    }

    pub fn forward(store: &ParamStore, s: &WindowSample) -> Oracle {
        let l = s.x_g.rows();
        let n = s.x_m.shape()[0];
        let xg: Mat = (0..l).map(|t| s.x_g.row(t).to_vec()).collect();
        let xm: Mat = (0..l)
            .map(|t| {
                let mut row = Vec::new();
                for a in 0..n {
                    for f in 0..5 {
                        row.push(s.x_m.data()[(a * l + t) * 5 + f]);
                    }
                }
                row
            })
            .collect();
        let sent: Mat = s.sentiment.iter().map(|&v| vec![v]).collect();
        let eg = conv_same(&xg, store, "emb_target");
        let em = conv_same(&xm, store, "emb_macro");
        let es = conv_same(&sent, store, "emb_sentiment");
        let d = eg[0].len();

        // every shift of the macro embedding, scored against the target
        let shifted: Vec<Mat> = (1..l).map(|tau| (0..l).map(|t| em[(t + l - tau) % l].clone()).collect()).collect();
        let scores: Vec<f64> = shifted
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                for t in 0..l {
                    for j in 0..d {
                        acc += eg[t][j] * r[t][j];
                    }
                }
                acc / l as f64
            })
            .collect();
        let top = scores.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = scores.iter().map(|v| (v - top).exp()).collect();
        let z: f64 = exps.iter().sum();
        let attention: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let mut h_m = vec![vec![0.0; d]; l];
        for (a, r) in attention.iter().zip(&shifted) {
            for t in 0..l {
                for j in 0..d {
                    h_m[t][j] += a * r[t][j];
                }
            }
        }
        let delta1 = zeta(&h_m, store, "zeta_delta");

        let (_, dw) = get(store, "dyn_w");
        let (_, db) = get(store, "dyn_b");
        let mut delta2 = db[0];
        for (t, w) in dw.iter().enumerate() {
            delta2 += w * (s.x_g.at(t, 3) - s.last_close);
        }
        if let Some(iw) = store.find("ind_w").map(|id| store.value(id).data().to_vec()) {
            for t in 0..l {
                for c in 0..7 {
                    delta2 += iw[t * 7 + c] * s.indicators.at(t, c);
                }
            }
        }

        let kappa = zeta(&es, store, "zeta_kappa").tanh();
        let both: Mat = eg.iter().zip(&es).map(|(a, b)| a.iter().chain(b).copied().collect()).collect();
        let gamma = 1.0 / (1.0 + (-zeta(&both, store, "zeta_gamma")).exp());
        let p1 = s.last_close + kappa * delta1;
        let p2 = s.last_close + kappa * delta2;
        Oracle {
            attention,
            h_m,
            delta1,
            delta2,
            kappa,
            gamma,
            pred: gamma * p1 + (1.0 - gamma) * p2,
        }
    }
}
