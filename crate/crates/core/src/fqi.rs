//! Fitted Q-iteration under the business-as-usual policy.
//!
//! One regressor per action is fitted on the samples that took that action. Targets are
//! `g + Q_prev(x', π_b(x'))` with a zero bootstrap on the last step of each day, so after
//! `n` iterations the heads approximate the `n`-step rest-of-day energy cost.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{FlexError, Result};
use crate::mdp::{
    bau_action, bau_policy, Action, ExperienceBuffer, HouseId, HouseholdState, Transition, MINUTES_PER_DAY,
};
use crate::regress::{Matrix, Model, Regressor, RegressorSpec};
use crate::seed::substream_seed;
use crate::sim::SetpointSchedule;

/// Anything that can score both actions in a state.
pub trait ActionValues: Sync {
    fn q_values(&self, state: &HouseholdState) -> Result<[f64; 2]>;

    /// Last day of data behind these values, when they were learned.
    fn trained_through(&self) -> Option<u32> {
        None
    }

    /// `Q(x, π_b(x))`.
    fn value(&self, state: &HouseholdState, setpoint: f64) -> Result<f64> {
        let q = self.q_values(state)?;
        Ok(q[bau_policy(state, setpoint).index()])
    }

    /// `Q(x, u) − V(x)`; exactly zero for the BAU action.
    fn advantage(&self, state: &HouseholdState, setpoint: f64, action: Action) -> Result<f64> {
        let bau = bau_policy(state, setpoint);
        if action == bau {
            return Ok(0.0);
        }
        let q = self.q_values(state)?;
        Ok(q[action.index()] - q[bau.index()])
    }
}

/// Standardization statistics frozen over one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    pub k: usize,
    pub outdoor_mean: f64,
    pub outdoor_std: f64,
    pub room_mean: f64,
    pub room_std: f64,
}

fn mean_std(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std = var.sqrt();
    (mean, if std > 1e-9 { std } else { 1.0 })
}

impl FeatureEncoder {
    /// Unscaled temperatures.
    pub fn identity(k: usize) -> Self {
        FeatureEncoder {
            k,
            outdoor_mean: 0.0,
            outdoor_std: 1.0,
            room_mean: 0.0,
            room_std: 1.0,
        }
    }

    pub fn fit<'a, I>(k: usize, states: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a HouseholdState>,
    {
        let (mut n_o, mut s_o, mut q_o) = (0.0, 0.0, 0.0);
        let (mut n_r, mut s_r, mut q_r) = (0.0, 0.0, 0.0);
        for s in states {
            n_o += 1.0;
            s_o += s.outdoor_temp;
            q_o += s.outdoor_temp * s.outdoor_temp;
            for &t in &s.room_history {
                n_r += 1.0;
                s_r += t;
                q_r += t * t;
            }
        }
        if n_o == 0.0 {
            return Err(FlexError::Training("no states to standardize".into()));
        }
        let (outdoor_mean, outdoor_std) = mean_std(s_o, q_o, n_o);
        let (room_mean, room_std) = mean_std(s_r, q_r, n_r);
        Ok(FeatureEncoder {
            k,
            outdoor_mean,
            outdoor_std,
            room_mean,
            room_std,
        })
    }

    pub fn len(&self) -> usize {
        self.k + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[sin, cos, T_o, T_{t−k} .. T_t]`, temperatures standardized.
    pub fn encode_into(&self, state: &HouseholdState, out: &mut Vec<f64>) -> Result<()> {
        if state.room_history.len() != self.k + 1 {
            return Err(FlexError::Contract(format!(
                "state carries {} room temperatures, encoder expects {}",
                state.room_history.len(),
                self.k + 1
            )));
        }
        out.clear();
        let phase = TAU * f64::from(state.minute_of_day) / f64::from(MINUTES_PER_DAY);
        out.push(phase.sin());
        out.push(phase.cos());
        out.push((state.outdoor_temp - self.outdoor_mean) / self.outdoor_std);
        out.extend(state.room_history.iter().map(|t| (t - self.room_mean) / self.room_std));
        Ok(())
    }

    pub fn encode(&self, state: &HouseholdState) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(self.len());
        self.encode_into(state, &mut v)?;
        Ok(v)
    }
}

/// Unscaled feature vector of `state`.
pub fn encode_features(state: &HouseholdState) -> Vec<f64> {
    FeatureEncoder::identity(state.history_k())
        .encode(state)
        .expect("history length matches by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FqiConfig {
    pub iterations: usize,
    pub regressor: RegressorSpec,
}

impl Default for FqiConfig {
    fn default() -> Self {
        FqiConfig {
            iterations: 20,
            regressor: RegressorSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMeta {
    pub first_day: u32,
    pub last_day: u32,
    pub iterations: u32,
    pub samples: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: u32,
    pub train_rmse: f64,
}

/// Per-household state-action value function with one head per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub house: HouseId,
    pub encoder: FeatureEncoder,
    pub meta: TrainingMeta,
    heads: [Model; 2],
}

const MAGIC: &[u8; 4] = b"FGQF";
const FORMAT_VERSION: u32 = 1;

pub fn model_file_name(house: HouseId, day: u32) -> String {
    format!("qfn_{house}_{day}.bin")
}

impl QFunction {
    pub fn head(&self, action: Action) -> &Model {
        &self.heads[action.index()]
    }

    pub fn q(&self, state: &HouseholdState, action: Action) -> Result<f64> {
        Ok(self.q_values(state)?[action.index()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.house);
        w.u32(self.encoder.k as u32);
        w.f64(self.encoder.outdoor_mean);
        w.f64(self.encoder.outdoor_std);
        w.f64(self.encoder.room_mean);
        w.f64(self.encoder.room_std);
        w.u32(self.meta.first_day);
        w.u32(self.meta.last_day);
        w.u32(self.meta.iterations);
        w.u32(self.meta.samples);
        for h in &self.heads {
            h.encode(&mut w);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(FlexError::Contract("not a Q-function artifact".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FlexError::Contract(format!("unsupported Q-function format {version}")));
        }
        let house = r.u32()?;
        let encoder = FeatureEncoder {
            k: r.u32()? as usize,
            outdoor_mean: r.f64()?,
            outdoor_std: r.f64()?,
            room_mean: r.f64()?,
            room_std: r.f64()?,
        };
        let meta = TrainingMeta {
            first_day: r.u32()?,
            last_day: r.u32()?,
            iterations: r.u32()?,
            samples: r.u32()?,
        };
        let heads = [Model::decode(&mut r)?, Model::decode(&mut r)?];
        if !r.is_exhausted() {
            return Err(FlexError::Contract("trailing bytes after Q-function".into()));
        }
        Ok(QFunction {
            house,
            encoder,
            meta,
            heads,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| FlexError::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| FlexError::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        QFunction::from_bytes(&bytes).map_err(|e| FlexError::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

impl ActionValues for QFunction {
    fn q_values(&self, state: &HouseholdState) -> Result<[f64; 2]> {
        if !self.heads.iter().all(Regressor::is_fitted) {
            return Err(FlexError::Contract(format!("house {}: Q-function not fitted", self.house)));
        }
        let x = self.encoder.encode(state)?;
        Ok([self.heads[0].predict(&x), self.heads[1].predict(&x)])
    }

    fn trained_through(&self) -> Option<u32> {
        Some(self.meta.last_day)
    }
}

/// Runs fitted Q-iteration on the buffer. Next-state setpoints come from `setpoints`.
pub fn fqi_fit(
    buffer: &ExperienceBuffer,
    setpoints: &SetpointSchedule,
    config: &FqiConfig,
    seed: u64,
) -> Result<(QFunction, Vec<IterationLog>)> {
    let items: Vec<&Transition> = buffer.iter().collect();
    fqi_fit_transitions(buffer.house(), &items, setpoints, config, seed)
}

/// Fitted Q-iteration over an arbitrary transition set, e.g. exhaustive grid sweeps.
pub fn fqi_fit_transitions(
    house: HouseId,
    transitions: &[&Transition],
    setpoints: &SetpointSchedule,
    config: &FqiConfig,
    seed: u64,
) -> Result<(QFunction, Vec<IterationLog>)> {
    if transitions.is_empty() {
        return Err(FlexError::Training(format!("house {house}: empty experience buffer")));
    }
    if config.iterations == 0 {
        return Err(FlexError::Config("FQI needs at least one iteration".into()));
    }
    for t in transitions {
        t.validate()?;
    }
    let k = transitions[0].state.history_k();
    let encoder = FeatureEncoder::fit(k, transitions.iter().map(|t| &t.state))?;

    let n = transitions.len();
    let mut x = [Matrix::new(k + 4), Matrix::new(k + 4)];
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut next_x = Vec::with_capacity(n);
    let mut next_bau = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut terminal = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(k + 4);
    for (j, t) in transitions.iter().enumerate() {
        let a = t.action.index();
        encoder.encode_into(&t.state, &mut row)?;
        x[a].push_row(&row)?;
        members[a].push(j);
        next_x.push(encoder.encode(&t.next_state)?);
        let sp = setpoints.at(u32::from(t.next_state.minute_of_day));
        next_bau.push(bau_action(t.next_state.room_temp(), sp).index());
        costs.push(t.cost);
        terminal.push(t.terminal);
    }
    for a in Action::ALL {
        if members[a.index()].is_empty() {
            return Err(FlexError::Training(format!(
                "house {house}: no samples with action {a}"
            )));
        }
    }

    let mut heads = [config.regressor.build(), config.regressor.build()];
    let mut bootstrap = vec![0.0; n];
    let mut log = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut sq = 0.0;
        let mut fitted = [config.regressor.build(), config.regressor.build()];
        for a in 0..2 {
            let y: Vec<f64> = members[a].iter().map(|&j| costs[j] + bootstrap[j]).collect();
            let head_seed = substream_seed(seed, &format!("iter-{it}-head-{a}"));
            fitted[a].fit(&x[a], &y, head_seed)?;
            for (i, target) in y.iter().enumerate() {
                let e = fitted[a].predict(x[a].row(i)) - target;
                sq += e * e;
            }
        }
        heads = fitted;
        log.push(IterationLog {
            iteration: it as u32 + 1,
            train_rmse: (sq / n as f64).sqrt(),
        });
        if it + 1 < config.iterations {
            for j in 0..n {
                bootstrap[j] = if terminal[j] {
                    0.0
                } else {
                    heads[next_bau[j]].predict(&next_x[j])
                };
            }
        }
    }

    let q = QFunction {
        house,
        encoder,
        meta: TrainingMeta {
            first_day: transitions.iter().map(|t| t.day).min().expect("non-empty"),
            last_day: transitions.iter().map(|t| t.day).max().expect("non-empty"),
            iterations: config.iterations as u32,
            samples: n as u32,
        },
        heads,
    };
    Ok((q, log))
}

pub fn house_seed(root: u64, house: HouseId, day: u32) -> u64 {
    substream_seed(root, &format!("regressor-{house}-{day}"))
}

/// A fitted model with its per-iteration training log.
pub type FitOutput = (QFunction, Vec<IterationLog>);

/// Cold-retrains every household for `day`. A failing household yields its own error
/// without affecting the others.
pub fn retrain_all(
    buffers: &[ExperienceBuffer],
    schedules: &[SetpointSchedule],
    config: &FqiConfig,
    root_seed: u64,
    day: u32,
) -> Result<Vec<Result<FitOutput>>> {
    if buffers.len() != schedules.len() {
        return Err(FlexError::Contract(format!(
            "{} buffers for {} schedules",
            buffers.len(),
            schedules.len()
        )));
    }
    Ok(buffers
        .par_iter()
        .zip(schedules.par_iter())
        .map(|(b, s)| {
            fqi_fit(b, s, config, house_seed(root_seed, b.house(), day)).map_err(|e| e.for_house(b.house()))
        })
        .collect())
}

/// Writes `qfn_<house>_<day>.bin` under `dir` and returns its path.
pub fn save_model(dir: &Path, q: &QFunction, day: u32) -> Result<PathBuf> {
    let path = dir.join(model_file_name(q.house, day));
    q.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::ExtraTreesConfig;

    fn buffer(house: HouseId, days: u32) -> ExperienceBuffer {
        let mut b = ExperienceBuffer::new(house, 30);
        for day in 0..days {
            let mut temp = 19.5;
            let mut ts = Vec::new();
            for step in 0..96u32 {
                let state = HouseholdState::steady((step * 15) as u16, 2.0, temp, 2);
                let action = bau_action(temp, 20.0);
                temp += if action == Action::On { 0.3 } else { -0.2 };
                let next = HouseholdState::steady(((step + 1) % 96 * 15) as u16, 2.0, temp, 2);
                ts.push(Transition {
                    day,
                    step,
                    state,
                    setpoint: 20.0,
                    action,
                    cost: if action == Action::On { 1.0 } else { 0.0 },
                    next_state: next,
                    terminal: step == 95,
                });
            }
            b.push_transitions(ts).unwrap();
        }
        b
    }

    fn small() -> FqiConfig {
        FqiConfig {
            iterations: 3,
            regressor: RegressorSpec::ExtraTrees(ExtraTreesConfig { n_trees: 5, min_leaf: 2 }),
        }
    }

    #[test]
    fn time_features() {
        let f = encode_features(&HouseholdState::steady(0, 3.0, 20.0, 4));
        assert_eq!(f.len(), 8);
        assert!((f[0] - 0.0).abs() < 1e-12 && (f[1] - 1.0).abs() < 1e-12);
        let f = encode_features(&HouseholdState::steady(360, 3.0, 20.0, 4));
        assert!((f[0] - 1.0).abs() < 1e-12 && f[1].abs() < 1e-12);
        assert_eq!(f[2], 3.0);
    }

    #[test]
    fn encoder_rejects_wrong_history_length() {
        let e = FeatureEncoder::identity(4);
        assert!(e.encode(&HouseholdState::steady(0, 0.0, 20.0, 2)).is_err());
    }

    #[test]
    fn single_iteration_regresses_immediate_cost() {
        let b = buffer(1, 2);
        let cfg = FqiConfig {
            iterations: 1,
            regressor: RegressorSpec::ExtraTrees(ExtraTreesConfig { n_trees: 3, min_leaf: 1 }),
        };
        let (q, log) = fqi_fit(&b, &SetpointSchedule::flat(20.0).unwrap(), &cfg, 0).unwrap();
        assert_eq!(log.len(), 1);
        for t in b.iter() {
            assert!((q.q(&t.state, t.action).unwrap() - t.cost).abs() < 1e-12);
        }
    }

    #[test]
    fn bau_advantage_is_exactly_zero() {
        let b = buffer(1, 2);
        let (q, _) = fqi_fit(&b, &SetpointSchedule::flat(20.0).unwrap(), &small(), 0).unwrap();
        for t in b.iter() {
            let bau = bau_policy(&t.state, t.setpoint);
            assert_eq!(q.advantage(&t.state, t.setpoint, bau).unwrap(), 0.0);
            let v = q.value(&t.state, t.setpoint).unwrap();
            assert_eq!(v, q.q(&t.state, bau).unwrap());
        }
    }

    #[test]
    fn empty_buffer_and_zero_iterations_fail() {
        let sched = SetpointSchedule::flat(20.0).unwrap();
        assert!(matches!(
            fqi_fit(&ExperienceBuffer::new(1, 30), &sched, &small(), 0),
            Err(FlexError::Training(_))
        ));
        let cfg = FqiConfig {
            iterations: 0,
            ..small()
        };
        assert!(matches!(fqi_fit(&buffer(1, 1), &sched, &cfg, 0), Err(FlexError::Config(_))));
    }

    #[test]
    fn artifact_round_trip() {
        let b = buffer(4, 1);
        let (q, _) = fqi_fit(&b, &SetpointSchedule::flat(20.0).unwrap(), &small(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = save_model(dir.path(), &q, 0).unwrap();
        assert!(path.ends_with("qfn_4_0.bin"));
        let back = QFunction::load(&path).unwrap();
        assert_eq!(back, q);
        let mut bytes = q.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(QFunction::from_bytes(&bytes).is_err());
    }

    #[test]
    fn retrain_isolates_faulty_households() {
        let buffers = vec![buffer(1, 1), ExperienceBuffer::new(2, 30), buffer(3, 1)];
        let schedules = vec![SetpointSchedule::flat(20.0).unwrap(); 3];
        let out = retrain_all(&buffers, &schedules, &small(), 5, 1).unwrap();
        assert!(out[0].is_ok() && out[2].is_ok());
        assert!(matches!(&out[1], Err(FlexError::House { house: 2, .. })));
    }

    #[test]
    fn retrain_is_deterministic() {
        let buffers = vec![buffer(1, 2)];
        let schedules = vec![SetpointSchedule::flat(20.0).unwrap()];
        let a = retrain_all(&buffers, &schedules, &small(), 5, 3).unwrap().remove(0).unwrap();
        let b = retrain_all(&buffers, &schedules, &small(), 5, 3).unwrap().remove(0).unwrap();
        assert_eq!(a.0, b.0);
    }
}
