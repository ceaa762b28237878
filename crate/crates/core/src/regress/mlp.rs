//! Small fully connected ReLU network trained with Adam on squared error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, Matrix, Regressor};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{FlexError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 64],
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out × n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut s = self.b[o];
            for (w, v) in row.iter().zip(x) {
                s += w * v;
            }
            out.push(if relu { s.max(0.0) } else { s });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<Layer>,
    y_mean: f64,
    y_std: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Mlp {
    pub fn new(config: MlpConfig) -> Self {
        Mlp {
            config,
            layers: Vec::new(),
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    fn init(&mut self, n_in: usize, rng: &mut ChaCha8Rng) {
        let mut sizes = vec![n_in];
        sizes.extend(&self.config.hidden);
        sizes.push(1);
        self.layers = sizes
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let he = Normal::new(0.0, (2.0 / a as f64).sqrt()).expect("positive std");
                Layer {
                    n_in: a,
                    n_out: b,
                    w: (0..a * b).map(|_| he.sample(rng)).collect(),
                    b: vec![0.0; b],
                }
            })
            .collect();
    }

    fn forward_raw(&self, x: &[f64], acts: &mut [Vec<f64>]) -> f64 {
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l + 1);
            layer.forward(&head[l], &mut tail[0], l != last);
        }
        acts[last + 1][0]
    }

    pub(super) fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.config.hidden.len() as u32);
        for &h in &self.config.hidden {
            w.u32(h as u32);
        }
        w.u32(self.config.epochs as u32);
        w.u32(self.config.batch_size as u32);
        w.f64(self.config.learning_rate);
        w.f64(self.y_mean);
        w.f64(self.y_std);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u32(l.n_in as u32);
            w.u32(l.n_out as u32);
            w.len_prefixed_f64s(&l.w);
            w.len_prefixed_f64s(&l.b);
        }
    }

    pub(super) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let n_hidden = r.u32()? as usize;
        let hidden = (0..n_hidden).map(|_| r.u32().map(|h| h as usize)).collect::<Result<_>>()?;
        let config = MlpConfig {
            hidden,
            epochs: r.u32()? as usize,
            batch_size: r.u32()? as usize,
            learning_rate: r.f64()?,
        };
        let y_mean = r.f64()?;
        let y_std = r.f64()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_in = r.u32()? as usize;
            let n_out = r.u32()? as usize;
            let w = r.len_prefixed_f64s()?;
            let b = r.len_prefixed_f64s()?;
            if w.len() != n_in * n_out || b.len() != n_out {
                return Err(FlexError::Contract("corrupt mlp layer".into()));
            }
            layers.push(Layer { n_in, n_out, w, b });
        }
        Ok(Mlp {
            config,
            layers,
            y_mean,
            y_std,
        })
    }
}

impl Regressor for Mlp {
    fn fit(&mut self, x: &Matrix, y: &[f64], seed: u64) -> Result<()> {
        check_fit_inputs(x, y)?;
        if self.config.batch_size == 0 || self.config.learning_rate <= 0.0 {
            return Err(FlexError::Config("mlp needs batch_size ≥ 1 and learning_rate > 0".into()));
        }
        let n = y.len();
        self.y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - self.y_mean).powi(2)).sum::<f64>() / n as f64;
        self.y_std = if var > 1e-12 { var.sqrt() } else { 1.0 };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init(x.cols(), &mut rng);
        let n_layers = self.layers.len();
        let mut adam = Adam {
            m: self.layers.iter().map(|l| vec![0.0; l.w.len() + l.b.len()]).collect(),
            v: self.layers.iter().map(|l| vec![0.0; l.w.len() + l.b.len()]).collect(),
            t: 0,
        };
        let mut grads: Vec<Vec<f64>> = adam.m.clone();
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut deltas: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.n_out]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let lr = self.config.learning_rate;

        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(self.config.batch_size) {
                grads.iter_mut().for_each(|g| g.fill(0.0));
                for &i in batch {
                    let target = (y[i] - self.y_mean) / self.y_std;
                    let out = self.forward_raw(x.row(i), &mut acts);
                    deltas[n_layers - 1][0] = out - target;
                    for l in (0..n_layers).rev() {
                        let layer = &self.layers[l];
                        let g = &mut grads[l];
                        let input = &acts[l];
                        for o in 0..layer.n_out {
                            let d = deltas[l][o];
                            if d == 0.0 {
                                continue;
                            }
                            let gw = &mut g[o * layer.n_in..(o + 1) * layer.n_in];
                            for (gi, xi) in gw.iter_mut().zip(input) {
                                *gi += d * xi;
                            }
                            g[layer.w.len() + o] += d;
                        }
                        if l > 0 {
                            let (lower, upper) = deltas.split_at_mut(l);
                            let prev = &mut lower[l - 1];
                            prev.fill(0.0);
                            for o in 0..layer.n_out {
                                let d = upper[0][o];
                                if d == 0.0 {
                                    continue;
                                }
                                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                                for (p, w) in prev.iter_mut().zip(row) {
                                    *p += d * w;
                                }
                            }
                            for (p, a) in prev.iter_mut().zip(&acts[l]) {
                                if *a <= 0.0 {
                                    *p = 0.0;
                                }
                            }
                        }
                    }
                }
                adam.t += 1;
                let scale = 1.0 / batch.len() as f64;
                let c1 = 1.0 - BETA1.powi(adam.t);
                let c2 = 1.0 - BETA2.powi(adam.t);
                for (l, layer) in self.layers.iter_mut().enumerate() {
                    let nw = layer.w.len();
                    for k in 0..grads[l].len() {
                        let g = grads[l][k] * scale;
                        let m = &mut adam.m[l][k];
                        let v = &mut adam.v[l][k];
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        let step = lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                        if k < nw {
                            layer.w[k] -= step;
                        } else {
                            layer.b[k - nw] -= step;
                        }
                    }
                }
            }
        }
        if self.layers.iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite())) {
            return Err(FlexError::Training("mlp weights diverged".into()));
        }
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> f64 {
        let mut acts = vec![Vec::new(); self.layers.len() + 1];
        self.y_mean + self.y_std * self.forward_raw(row, &mut acts)
    }

    fn is_fitted(&self) -> bool {
        !self.layers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix, Vec<f64>) {
        let mut x = Matrix::new(2);
        let mut y = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let (a, b) = (i as f64 / 9.5 - 1.0, j as f64 / 9.5 - 1.0);
                x.push_row(&[a, b]).unwrap();
                y.push(10.0 + 3.0 * a - 2.0 * b * b);
            }
        }
        (x, y)
    }

    #[test]
    fn fits_smooth_function() {
        let (x, y) = data();
        let mut m = Mlp::new(MlpConfig {
            epochs: 200,
            learning_rate: 3e-3,
            ..MlpConfig::default()
        });
        m.fit(&x, &y, 5).unwrap();
        let mse: f64 = (0..x.rows()).map(|i| (m.predict(x.row(i)) - y[i]).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(mse.sqrt() < 0.15, "rmse {}", mse.sqrt());
    }

    #[test]
    fn codec_round_trip_preserves_predictions() {
        let (x, y) = data();
        let mut m = Mlp::new(MlpConfig {
            hidden: vec![8],
            epochs: 3,
            ..MlpConfig::default()
        });
        m.fit(&x, &y, 1).unwrap();
        let mut w = ByteWriter::new();
        m.encode(&mut w);
        let bytes = w.into_inner();
        let mut r = ByteReader::new(&bytes);
        let back = Mlp::decode(&mut r).unwrap();
        assert!(r.is_exhausted());
        assert_eq!(back, m);
    }

    #[test]
    fn same_seed_same_network() {
        let (x, y) = data();
        let cfg = MlpConfig {
            hidden: vec![4],
            epochs: 2,
            ..MlpConfig::default()
        };
        let mut a = Mlp::new(cfg.clone());
        let mut b = Mlp::new(cfg);
        a.fit(&x, &y, 9).unwrap();
        b.fit(&x, &y, 9).unwrap();
        assert_eq!(a, b);
    }
}
