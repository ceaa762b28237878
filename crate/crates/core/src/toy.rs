//! Finite toy MDP on a room-temperature grid, solved exactly by backward induction.

use crate::error::{FlexError, Result};
use crate::fqi::{fqi_fit_transitions, ActionValues, FqiConfig, QFunction};
use crate::regress::{ExtraTreesConfig, RegressorSpec};
use crate::mdp::{bau_action, step_cost, Action, HouseholdState, Transition, MINUTES_PER_DAY};
use crate::sim::{rc_update, SetpointSchedule, ThermalParams};

pub const MAX_STATE_ACTION_PAIRS: usize = 100_000;

/// How off-grid RC successors are mapped back onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridSnap {
    /// Deterministic: the nearest grid point.
    #[default]
    Nearest,
    /// Split between the two neighbours so the expected successor equals the RC value.
    Linear,
}

/// Time-invariant dynamics over a temperature grid, evaluated for `horizon` steps of
/// `step_minutes` starting at midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMDP {
    pub temps: Vec<f64>,
    pub horizon: usize,
    pub step_minutes: u32,
    pub outdoor_temp: f64,
    pub setpoints: SetpointSchedule,
    /// Successor bins with probabilities, per bin and action.
    next: Vec<[Vec<(usize, f64)>; 2]>,
    cost: Vec<[f64; 2]>,
    /// Bin offsets and probabilities added to every transition; `[(0, 1.0)]` is deterministic.
    kernel: Vec<(i64, f64)>,
}

impl ToyMDP {
    pub fn from_tables(
        temps: Vec<f64>,
        horizon: usize,
        step_minutes: u32,
        outdoor_temp: f64,
        setpoints: SetpointSchedule,
        next: Vec<[usize; 2]>,
        cost: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let n = temps.len();
        if n == 0 || horizon == 0 || step_minutes == 0 {
            return Err(FlexError::Oracle("toy needs bins, a horizon and a step length".into()));
        }
        if horizon as u64 * u64::from(step_minutes) > u64::from(MINUTES_PER_DAY) {
            return Err(FlexError::Oracle("toy horizon exceeds one day".into()));
        }
        if temps.windows(2).any(|w| w[1] <= w[0]) || temps.iter().any(|t| !t.is_finite()) {
            return Err(FlexError::Oracle("toy grid must be finite and strictly increasing".into()));
        }
        if next.len() != n || cost.len() != n {
            return Err(FlexError::Oracle(format!(
                "toy tables cover {} / {} bins, grid has {n}",
                next.len(),
                cost.len()
            )));
        }
        if let Some((b, a)) = next
            .iter()
            .enumerate()
            .flat_map(|(b, row)| row.iter().map(move |&to| (b, to)))
            .find(|&(_, to)| to >= n)
        {
            return Err(FlexError::Oracle(format!("transition from bin {b} leaves the grid (to {a})")));
        }
        let next = next.into_iter().map(|[off, on]| [vec![(off, 1.0)], vec![(on, 1.0)]]).collect();
        ToyMDP::build(temps, horizon, step_minutes, outdoor_temp, setpoints, next, cost)
    }

    fn build(
        temps: Vec<f64>,
        horizon: usize,
        step_minutes: u32,
        outdoor_temp: f64,
        setpoints: SetpointSchedule,
        next: Vec<[Vec<(usize, f64)>; 2]>,
        cost: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if cost.iter().flatten().any(|c| !c.is_finite()) {
            return Err(FlexError::Oracle("non-finite toy cost".into()));
        }
        Ok(ToyMDP {
            temps,
            horizon,
            step_minutes,
            outdoor_temp,
            setpoints,
            next,
            cost,
            kernel: vec![(0, 1.0)],
        })
    }

    /// Adds zero-mean Gaussian temperature noise, discretized onto grid offsets within
    /// three standard deviations. Requires a uniform grid.
    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(FlexError::Oracle(format!("invalid toy noise {sigma}")));
        }
        if sigma == 0.0 || self.bins() < 2 {
            self.kernel = vec![(0, 1.0)];
            return Ok(self);
        }
        let step = self.temps[1] - self.temps[0];
        let reach = (3.0 * sigma / step).ceil() as i64;
        let weights: Vec<(i64, f64)> = (-reach..=reach)
            .map(|j| {
                let z = j as f64 * step / sigma;
                (j, (-0.5 * z * z).exp())
            })
            .collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        self.kernel = weights.into_iter().map(|(j, w)| (j, w / total)).collect();
        Ok(self)
    }

    pub fn is_deterministic(&self) -> bool {
        self.kernel.len() == 1 && self.next.iter().all(|row| row.iter().all(|s| s.len() == 1))
    }

    /// Successor bins and their probabilities.
    pub fn successors(&self, bin: usize, action: Action) -> impl Iterator<Item = (usize, f64)> + '_ {
        let last = self.bins() as i64 - 1;
        self.next[bin][action.index()].iter().flat_map(move |&(base, p0)| {
            self.kernel
                .iter()
                .map(move |&(j, p)| ((base as i64 + j).clamp(0, last) as usize, p0 * p))
        })
    }

    /// 15-minute RC dynamics on a uniform grid; values past the edges clamp.
    #[allow(clippy::too_many_arguments)]
    pub fn from_rc(
        params: &ThermalParams,
        outdoor_temp: f64,
        grid_lo: f64,
        grid_step: f64,
        bins: usize,
        horizon: usize,
        setpoints: SetpointSchedule,
        snap: GridSnap,
    ) -> Result<Self> {
        params.validate()?;
        if grid_step.is_nan() || grid_step <= 0.0 || bins == 0 {
            return Err(FlexError::Oracle("toy grid needs a positive step and at least one bin".into()));
        }
        let temps: Vec<f64> = (0..bins).map(|i| grid_lo + i as f64 * grid_step).collect();
        let step_minutes = MINUTES_PER_DAY / 96;
        let mut next = Vec::with_capacity(bins);
        let mut cost = Vec::with_capacity(bins);
        for &t in &temps {
            let mut row: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
            for a in Action::ALL {
                let t2 = rc_update(params, t, outdoor_temp, a, step_minutes)?;
                let pos = ((t2 - grid_lo) / grid_step).clamp(0.0, (bins - 1) as f64);
                row[a.index()] = match snap {
                    GridSnap::Nearest => vec![(pos.round() as usize, 1.0)],
                    GridSnap::Linear => {
                        let lo = pos.floor() as usize;
                        let w = pos - lo as f64;
                        if w == 0.0 || lo + 1 >= bins {
                            vec![(lo, 1.0)]
                        } else {
                            vec![(lo, 1.0 - w), (lo + 1, w)]
                        }
                    }
                };
            }
            next.push(row);
            cost.push([0.0, step_cost(Action::On, params.heater_kw, f64::from(step_minutes))]);
        }
        ToyMDP::build(temps, horizon, step_minutes, outdoor_temp, setpoints, next, cost)
    }

    pub fn bins(&self) -> usize {
        self.temps.len()
    }

    pub fn minute(&self, step: usize) -> u32 {
        step as u32 * self.step_minutes
    }

    /// Most likely successor bin.
    pub fn next_bin(&self, bin: usize, action: Action) -> usize {
        self.next[bin][action.index()]
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty successor list")
            .0
    }

    pub fn cost(&self, bin: usize, action: Action) -> f64 {
        self.cost[bin][action.index()]
    }

    pub fn bau(&self, step: usize, bin: usize) -> Action {
        bau_action(self.temps[bin], self.setpoints.at(self.minute(step)))
    }

    pub fn nearest_bin(&self, temp: f64) -> usize {
        match self.temps.binary_search_by(|t| t.total_cmp(&temp)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.temps.len() => i - 1,
            Err(i) => {
                if temp - self.temps[i - 1] <= self.temps[i] - temp {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    pub fn state(&self, step: usize, bin: usize) -> HouseholdState {
        HouseholdState::steady(self.minute(step) as u16, self.outdoor_temp, self.temps[bin], 0)
    }

    /// Every (step, bin, action) once, as history-free transitions with the last step
    /// flagged terminal. Only defined for deterministic toys.
    pub fn exhaustive_transitions(&self) -> Result<Vec<Transition>> {
        if !self.is_deterministic() {
            return Err(FlexError::Oracle("exhaustive transitions need deterministic dynamics".into()));
        }
        let mut out = Vec::with_capacity(self.horizon * self.bins() * 2);
        for step in 0..self.horizon {
            let terminal = step + 1 == self.horizon;
            let next_minute = self.minute(step + 1) % MINUTES_PER_DAY;
            for bin in 0..self.bins() {
                for a in Action::ALL {
                    let to = self.next_bin(bin, a);
                    out.push(Transition {
                        day: 0,
                        step: step as u32,
                        state: self.state(step, bin),
                        setpoint: self.setpoints.at(self.minute(step)),
                        action: a,
                        cost: self.cost(bin, a),
                        next_state: HouseholdState::steady(
                            next_minute as u16,
                            self.outdoor_temp,
                            self.temps[to],
                            0,
                        ),
                        terminal,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Exact `Q(step, bin, action)` of the BAU policy.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    bins: usize,
    values: Vec<[f64; 2]>,
}

impl QTable {
    pub fn get(&self, step: usize, bin: usize, action: Action) -> f64 {
        self.values[step * self.bins + bin][action.index()]
    }

    pub fn horizon(&self) -> usize {
        self.values.len() / self.bins
    }
}

/// Backward induction: the last step costs only its immediate energy, earlier steps add
/// the BAU continuation value of the successor.
pub fn dp_oracle(toy: &ToyMDP) -> Result<QTable> {
    let bins = toy.bins();
    let pairs = bins * toy.horizon * 2;
    if pairs > MAX_STATE_ACTION_PAIRS {
        return Err(FlexError::Oracle(format!(
            "toy has {pairs} state-action pairs, limit is {MAX_STATE_ACTION_PAIRS}"
        )));
    }
    let mut values = vec![[0.0; 2]; bins * toy.horizon];
    for step in (0..toy.horizon).rev() {
        for bin in 0..bins {
            let mut row = [0.0; 2];
            for a in Action::ALL {
                let mut q = toy.cost(bin, a);
                if step + 1 < toy.horizon {
                    for (to, p) in toy.successors(bin, a) {
                        let b = toy.bau(step + 1, to);
                        q += p * values[(step + 1) * bins + to][b.index()];
                    }
                }
                row[a.index()] = q;
            }
            values[step * bins + bin] = row;
        }
    }
    Ok(QTable { bins, values })
}

/// DP-backed action values; states are snapped to the nearest step and bin.
#[derive(Debug, Clone)]
pub struct ToyQ {
    pub toy: ToyMDP,
    pub table: QTable,
}

impl ToyQ {
    pub fn solve(toy: ToyMDP) -> Result<Self> {
        let table = dp_oracle(&toy)?;
        Ok(ToyQ { toy, table })
    }
}

impl ActionValues for ToyQ {
    fn q_values(&self, state: &HouseholdState) -> Result<[f64; 2]> {
        let m = u32::from(state.minute_of_day);
        let step = (m / self.toy.step_minutes) as usize;
        if step >= self.toy.horizon {
            return Err(FlexError::Oracle(format!("minute {m} is past the toy horizon")));
        }
        let bin = self.toy.nearest_bin(state.room_temp());
        Ok([self.table.get(step, bin, Action::Off), self.table.get(step, bin, Action::On)])
    }
}

/// How closely a learned Q-function reproduces the exact table on every grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub max_abs_error: f64,
    /// Cells whose temperature lies outside the setpoint band.
    pub compared_cells: usize,
    pub sign_matches: usize,
}

impl Agreement {
    pub fn sign_fraction(&self) -> f64 {
        if self.compared_cells == 0 {
            1.0
        } else {
            self.sign_matches as f64 / self.compared_cells as f64
        }
    }
}

fn sign(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Compares `q` to the exact table over all (step, bin, action). Advantage signs are
/// compared only where |T - setpoint| exceeds `band`.
pub fn agreement<Q: ActionValues>(toy: &ToyMDP, table: &QTable, q: &Q, band: f64) -> Result<Agreement> {
    const SIGN_TOL: f64 = 1e-9;
    let mut out = Agreement {
        max_abs_error: 0.0,
        compared_cells: 0,
        sign_matches: 0,
    };
    for step in 0..toy.horizon {
        let sp = toy.setpoints.at(toy.minute(step));
        for bin in 0..toy.bins() {
            let learned = q.q_values(&toy.state(step, bin))?;
            for a in Action::ALL {
                let err = (learned[a.index()] - table.get(step, bin, a)).abs();
                out.max_abs_error = out.max_abs_error.max(err);
            }
            if (toy.temps[bin] - sp).abs() <= band {
                continue;
            }
            let alt = toy.bau(step, bin).flip();
            let exact = table.get(step, bin, alt) - table.get(step, bin, alt.flip());
            let learned_adv = learned[alt.index()] - learned[alt.flip().index()];
            out.compared_cells += 1;
            if sign(exact, SIGN_TOL) == sign(learned_adv, SIGN_TOL) {
                out.sign_matches += 1;
            }
        }
    }
    Ok(out)
}

/// Deterministic 20-bin, full-day toy with a 1.5 °C evening setpoint step.
pub fn reference_toy() -> Result<ToyMDP> {
    let params = ThermalParams::new(1, 10.0, 5.0, 5.0)?;
    let schedule = SetpointSchedule::new(vec![(0, 20.0), (17 * 60, 21.5), (22 * 60, 20.0)])?;
    ToyMDP::from_rc(&params, 0.0, 18.5, 0.2, 20, 96, schedule, GridSnap::Nearest)
}

/// Fits FQI on every transition of a deterministic toy with one iteration per step
/// and unpruned trees, then scores it against the exact table.
pub fn fqi_toy_agreement(toy: &ToyMDP, seed: u64, band: f64) -> Result<(QFunction, Agreement)> {
    let transitions = toy.exhaustive_transitions()?;
    let refs: Vec<&Transition> = transitions.iter().collect();
    let cfg = FqiConfig {
        iterations: toy.horizon,
        regressor: RegressorSpec::ExtraTrees(ExtraTreesConfig { n_trees: 50, min_leaf: 1 }),
    };
    let (q, _) = fqi_fit_transitions(1, &refs, &toy.setpoints, &cfg, seed)?;
    let table = dp_oracle(toy)?;
    let a = agreement(toy, &table, &q, band)?;
    Ok((q, a))
}
