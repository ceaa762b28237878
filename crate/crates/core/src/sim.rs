//! Household thermal simulation: first-order RC dynamics, winter weather traces,
//! setpoint schedules and a cluster runner that produces logged daily episodes.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::format::sig6;
use crate::mdp::{
    bau_policy, step_cost, Action, HouseId, HouseholdState, Transition, MINUTES_PER_DAY,
    QUARTER_MINUTES,
};

pub const SETPOINT_MIN: f64 = 15.0;
pub const SETPOINT_MAX: f64 = 25.0;
pub const COMFORT_BAND: f64 = 1.0;

/// 1R1C parameters of one household. Electrical and thermal heater power are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub id: HouseId,
    /// K per kW
    pub resistance: f64,
    /// kWh per K
    pub capacitance: f64,
    /// kW
    pub heater_kw: f64,
}

impl ThermalParams {
    pub fn new(id: HouseId, resistance: f64, capacitance: f64, heater_kw: f64) -> Result<Self> {
        let p = ThermalParams {
            id,
            resistance,
            capacitance,
            heater_kw,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("resistance", self.resistance),
            ("capacitance", self.capacitance),
            ("heater_kw", self.heater_kw),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FlexError::Config(format!(
                    "house {}: {name} must be finite and positive, got {v}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Temperature reached with the heater held on forever.
    pub fn steady_state_on(&self, outdoor: f64) -> f64 {
        outdoor + self.resistance * self.heater_kw
    }

    /// Checks that the heater can hold `max_setpoint + 1` at the design outdoor temperature.
    pub fn check_heater_sizing(&self, design_outdoor: f64, max_setpoint: f64) -> Result<()> {
        let reach = self.steady_state_on(design_outdoor);
        if reach <= max_setpoint + COMFORT_BAND {
            return Err(FlexError::Config(format!(
                "house {}: heater holds at most {reach:.2} °C at {design_outdoor} °C outdoor, \
                 below {:.2} °C",
                self.id,
                max_setpoint + COMFORT_BAND
            )));
        }
        Ok(())
    }
}

/// Forward-Euler RC update: `T' = T + dt/C · ((T_o − T)/R + u·P)`, with `dt` in minutes.
pub fn rc_update(
    params: &ThermalParams,
    room_temp: f64,
    outdoor_temp: f64,
    action: Action,
    dt_min: u32,
) -> Result<f64> {
    if !room_temp.is_finite() || !outdoor_temp.is_finite() {
        return Err(FlexError::Simulation(format!(
            "house {}: non-finite temperature (room {room_temp}, outdoor {outdoor_temp})",
            params.id
        )));
    }
    let dt_h = f64::from(dt_min) / 60.0;
    let flow = (outdoor_temp - room_temp) / params.resistance + action.as_f64() * params.heater_kw;
    Ok(room_temp + dt_h / params.capacitance * flow)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherConfig {
    pub min_c: f64,
    pub max_c: f64,
    /// Peak amplitude of the smooth noise component, °C.
    pub noise_amp: f64,
    /// Spacing of the noise knots.
    pub noise_knot_hours: u32,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            min_c: -5.0,
            max_c: 10.0,
            noise_amp: 1.5,
            noise_knot_hours: 3,
        }
    }
}

/// Outdoor temperature samples starting at absolute minute `start_minute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherTrace {
    pub start_minute: u64,
    pub resolution_min: u32,
    pub samples: Vec<f64>,
}

impl WeatherTrace {
    pub fn end_minute(&self) -> u64 {
        self.start_minute + self.samples.len() as u64 * u64::from(self.resolution_min)
    }

    pub fn covers(&self, from: u64, to: u64) -> bool {
        from >= self.start_minute && to <= self.end_minute()
    }

    /// Sample in effect at `minute`. The closing boundary `end_minute()` reuses the last
    /// sample so a period's terminal state can still be observed.
    pub fn at(&self, minute: u64) -> Result<f64> {
        if minute < self.start_minute || minute > self.end_minute() || self.samples.is_empty() {
            return Err(FlexError::Config(format!(
                "weather trace covers minutes [{}, {}), requested {minute}",
                self.start_minute,
                self.end_minute()
            )));
        }
        let idx = (minute - self.start_minute) / u64::from(self.resolution_min);
        Ok(self.samples[(idx as usize).min(self.samples.len() - 1)])
    }

    /// Constant trace, mostly useful in tests.
    pub fn constant(temp: f64, days: u32) -> Self {
        WeatherTrace {
            start_minute: 0,
            resolution_min: QUARTER_MINUTES,
            samples: vec![temp; (days * MINUTES_PER_DAY / QUARTER_MINUTES) as usize],
        }
    }
}

/// Daily shape in [0, 1]: minimum at 06:00, maximum at 15:00, half-cosine ramps between.
fn diurnal_shape(minute_of_day: f64) -> f64 {
    let h = minute_of_day / 60.0;
    if (6.0..15.0).contains(&h) {
        0.5 * (1.0 - (PI * (h - 6.0) / 9.0).cos())
    } else {
        let since_peak = (h - 15.0).rem_euclid(24.0);
        0.5 * (1.0 + (PI * since_peak / 15.0).cos())
    }
}

pub fn make_weather(seed: u64, days: u32, resolution_min: u32, cfg: &WeatherConfig) -> Result<WeatherTrace> {
    if days == 0 {
        return Err(FlexError::Config("weather needs at least one day".into()));
    }
    if resolution_min == 0 || !QUARTER_MINUTES.is_multiple_of(resolution_min) {
        return Err(FlexError::Config(format!(
            "weather resolution {resolution_min} must divide {QUARTER_MINUTES}"
        )));
    }
    if cfg.max_c.partial_cmp(&cfg.min_c) != Some(std::cmp::Ordering::Greater) {
        return Err(FlexError::Config("weather max_c must exceed min_c".into()));
    }
    let half_range = 0.5 * (cfg.max_c - cfg.min_c);
    let noise_amp = cfg.noise_amp.clamp(0.0, half_range);
    let lo = cfg.min_c + noise_amp;
    let span = cfg.max_c - cfg.min_c - 2.0 * noise_amp;

    let knot_min = f64::from(cfg.noise_knot_hours.max(1) * 60);
    let total_min = f64::from(days * MINUTES_PER_DAY);
    let n_knots = (total_min / knot_min).ceil() as usize + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots: Vec<f64> = (0..n_knots).map(|_| rng.random_range(-1.0..=1.0)).collect();

    let n = (days * MINUTES_PER_DAY / resolution_min) as usize;
    let samples = (0..n)
        .map(|i| {
            let minute = (i as u32 * resolution_min) as f64;
            let base = lo + span * diurnal_shape(minute % f64::from(MINUTES_PER_DAY));
            let noise = if noise_amp > 0.0 {
                let pos = minute / knot_min;
                let k = pos.floor() as usize;
                let frac = pos - pos.floor();
                let w = 0.5 * (1.0 - (PI * frac).cos());
                noise_amp * (knots[k] * (1.0 - w) + knots[k + 1] * w)
            } else {
                0.0
            };
            (base + noise).clamp(cfg.min_c, cfg.max_c)
        })
        .collect();
    Ok(WeatherTrace {
        start_minute: 0,
        resolution_min,
        samples,
    })
}

/// Piecewise-constant daily setpoint, repeated every day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointSchedule {
    breakpoints: Vec<(u32, f64)>,
}

impl SetpointSchedule {
    pub fn new(breakpoints: Vec<(u32, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(FlexError::Config("setpoint schedule is empty".into()));
        }
        for w in breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(FlexError::Config(
                    "setpoint breakpoints must be strictly increasing in minute".into(),
                ));
            }
        }
        for &(m, sp) in &breakpoints {
            if m >= MINUTES_PER_DAY {
                return Err(FlexError::Config(format!("breakpoint minute {m} out of range")));
            }
            if !(SETPOINT_MIN..=SETPOINT_MAX).contains(&sp) {
                return Err(FlexError::Config(format!(
                    "setpoint {sp} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]"
                )));
            }
        }
        Ok(SetpointSchedule { breakpoints })
    }

    pub fn flat(setpoint: f64) -> Result<Self> {
        Self::new(vec![(0, setpoint)])
    }

    pub fn breakpoints(&self) -> &[(u32, f64)] {
        &self.breakpoints
    }

    /// Setpoint in force at `minute_of_day`; before the first breakpoint the last one wraps.
    pub fn at(&self, minute_of_day: u32) -> f64 {
        let m = minute_of_day % MINUTES_PER_DAY;
        self.breakpoints
            .iter()
            .rev()
            .find(|(bm, _)| *bm <= m)
            .or_else(|| self.breakpoints.last())
            .map(|(_, sp)| *sp)
            .expect("non-empty schedule")
    }

    pub fn min(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetpointProfile {
    Flat,
    EveningStep {
        offset: f64,
        start_min: u32,
        end_min: u32,
        /// Seeded shift of both step times, in whole quarters within ±jitter.
        #[serde(default)]
        jitter_min: u32,
    },
}

impl SetpointProfile {
    pub fn evening_step() -> Self {
        SetpointProfile::EveningStep {
            offset: 1.5,
            start_min: 17 * 60,
            end_min: 22 * 60,
            jitter_min: 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SetpointProfile::Flat => "flat",
            SetpointProfile::EveningStep { .. } => "evening-step",
        }
    }
}

pub fn make_setpoints(profile: &SetpointProfile, base: f64, seed: u64) -> Result<SetpointSchedule> {
    if !(SETPOINT_MIN..=SETPOINT_MAX).contains(&base) {
        return Err(FlexError::Config(format!("base setpoint {base} outside [15, 25]")));
    }
    match *profile {
        SetpointProfile::Flat => SetpointSchedule::flat(base),
        SetpointProfile::EveningStep {
            offset,
            start_min,
            end_min,
            jitter_min,
        } => {
            let quarters = (jitter_min / QUARTER_MINUTES) as i64;
            let shift = if quarters > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.random_range(-quarters..=quarters) * i64::from(QUARTER_MINUTES)
            } else {
                0
            };
            let start = start_min as i64 + shift;
            let end = end_min as i64 + shift;
            if start <= 0 || end <= start || end >= i64::from(MINUTES_PER_DAY) {
                return Err(FlexError::Config(format!(
                    "evening step window [{start}, {end}) does not fit inside the day"
                )));
            }
            SetpointSchedule::new(vec![
                (0, base),
                (start as u32, base + offset),
                (end as u32, base),
            ])
        }
    }
}

/// One simulated household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseSim {
    pub params: ThermalParams,
    pub room_temp: f64,
    pub schedule: SetpointSchedule,
}

impl HouseSim {
    pub fn new(params: ThermalParams, room_temp: f64, schedule: SetpointSchedule) -> Result<Self> {
        params.validate()?;
        if !room_temp.is_finite() {
            return Err(FlexError::Simulation("initial room temperature not finite".into()));
        }
        Ok(HouseSim {
            params,
            room_temp,
            schedule,
        })
    }

    pub fn id(&self) -> HouseId {
        self.params.id
    }
}

/// Next room temperature for `sim`, noise-free.
pub fn step_house(sim: &HouseSim, outdoor_temp: f64, action: Action, dt_min: u32) -> Result<f64> {
    if dt_min != 1 && dt_min != QUARTER_MINUTES {
        return Err(FlexError::Contract(format!("step_house: dt {dt_min} not in {{1, 15}}")));
    }
    rc_update(&sim.params, sim.room_temp, outdoor_temp, action, dt_min)
}

/// Room temperatures at the last `k` quarter-hour starts strictly before now.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    k: usize,
    past: VecDeque<f64>,
}

impl HistoryWindow {
    pub fn new(k: usize, initial: f64) -> Self {
        HistoryWindow {
            k,
            past: std::iter::repeat_n(initial, k).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, temp: f64) {
        if self.k == 0 {
            return;
        }
        if self.past.len() == self.k {
            self.past.pop_front();
        }
        self.past.push_back(temp);
    }

    pub fn state(&self, minute_of_day: u16, outdoor_temp: f64, current: f64) -> HouseholdState {
        let mut room_history: Vec<f64> = self.past.iter().copied().collect();
        room_history.push(current);
        HouseholdState {
            minute_of_day,
            outdoor_temp,
            room_history,
        }
    }
}

/// A policy mapping (state, setpoint) to a heater command.
pub trait Policy {
    fn act(&mut self, state: &HouseholdState, setpoint: f64) -> Action;
}

/// The business-as-usual thermostat.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bau;

impl Policy for Bau {
    fn act(&mut self, state: &HouseholdState, setpoint: f64) -> Action {
        bau_policy(state, setpoint)
    }
}

impl<F> Policy for F
where
    F: FnMut(&HouseholdState, f64) -> Action,
{
    fn act(&mut self, state: &HouseholdState, setpoint: f64) -> Action {
        self(state, setpoint)
    }
}

#[derive(Debug, Clone)]
struct ClusterHouse {
    sim: HouseSim,
    history: HistoryWindow,
    noise_rng: ChaCha8Rng,
    last_action: Action,
}

/// Houses sharing one clock and one weather trace.
#[derive(Debug, Clone)]
pub struct Cluster {
    houses: Vec<ClusterHouse>,
    now: u64,
    noise: Option<Normal<f64>>,
}

impl Cluster {
    /// `noise_sigma` is the per-15-minute standard deviation of the additive room
    /// temperature noise; zero disables it. Each house draws from its own stream.
    pub fn new(sims: Vec<HouseSim>, history_k: usize, noise_sigma: f64, noise_seed: u64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(FlexError::Config(format!("invalid noise sigma {noise_sigma}")));
        }
        let noise = if noise_sigma > 0.0 {
            Some(Normal::new(0.0, noise_sigma).map_err(|e| FlexError::Config(e.to_string()))?)
        } else {
            None
        };
        let houses = sims
            .into_iter()
            .map(|sim| ClusterHouse {
                history: HistoryWindow::new(history_k, sim.room_temp),
                noise_rng: ChaCha8Rng::seed_from_u64(crate::seed::substream_seed(
                    noise_seed,
                    &format!("house-{}", sim.id()),
                )),
                last_action: Action::Off,
                sim,
            })
            .collect();
        Ok(Cluster {
            houses,
            now: 0,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.houses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.houses.is_empty()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn day(&self) -> u32 {
        (self.now / u64::from(MINUTES_PER_DAY)) as u32
    }

    pub fn minute_of_day(&self) -> u32 {
        (self.now % u64::from(MINUTES_PER_DAY)) as u32
    }

    pub fn ids(&self) -> Vec<HouseId> {
        self.houses.iter().map(|h| h.sim.id()).collect()
    }

    pub fn house(&self, i: usize) -> &HouseSim {
        &self.houses[i].sim
    }

    pub fn houses(&self) -> impl Iterator<Item = &HouseSim> {
        self.houses.iter().map(|h| &h.sim)
    }

    pub fn powers(&self) -> Vec<f64> {
        self.houses.iter().map(|h| h.sim.params.heater_kw).collect()
    }

    pub fn room_temps(&self) -> Vec<f64> {
        self.houses.iter().map(|h| h.sim.room_temp).collect()
    }

    pub fn setpoints(&self) -> Vec<f64> {
        let m = self.minute_of_day();
        self.houses.iter().map(|h| h.sim.schedule.at(m)).collect()
    }

    /// Commands applied during the most recent step.
    pub fn last_actions(&self) -> Vec<Action> {
        self.houses.iter().map(|h| h.last_action).collect()
    }

    pub fn state(&self, i: usize, weather: &WeatherTrace) -> Result<HouseholdState> {
        let h = &self.houses[i];
        let outdoor = weather.at(self.now)?;
        Ok(h.history.state(self.minute_of_day() as u16, outdoor, h.sim.room_temp))
    }

    pub fn states(&self, weather: &WeatherTrace) -> Result<Vec<HouseholdState>> {
        (0..self.len()).map(|i| self.state(i, weather)).collect()
    }

    pub fn bau_actions(&self) -> Vec<Action> {
        let m = self.minute_of_day();
        self.houses
            .iter()
            .map(|h| crate::mdp::bau_action(h.sim.room_temp, h.sim.schedule.at(m)))
            .collect()
    }

    /// Advances every house by `dt_min` minutes and returns the energy each drew (kWh).
    pub fn step(&mut self, actions: &[Action], weather: &WeatherTrace, dt_min: u32) -> Result<Vec<f64>> {
        if actions.len() != self.houses.len() {
            return Err(FlexError::Contract(format!(
                "cluster step: {} actions for {} houses",
                actions.len(),
                self.houses.len()
            )));
        }
        if dt_min != 1 && dt_min != QUARTER_MINUTES {
            return Err(FlexError::Contract(format!("cluster step: dt {dt_min} not in {{1, 15}}")));
        }
        let outdoor = weather.at(self.now)?;
        let on_quarter = self.now.is_multiple_of(u64::from(QUARTER_MINUTES));
        let noise_scale = (f64::from(dt_min) / f64::from(QUARTER_MINUTES)).sqrt();
        let mut energy = Vec::with_capacity(actions.len());
        for (h, &a) in self.houses.iter_mut().zip(actions) {
            if on_quarter {
                h.history.record(h.sim.room_temp);
            }
            let mut next = step_house(&h.sim, outdoor, a, dt_min)?;
            if let Some(dist) = &self.noise {
                next += noise_scale * dist.sample(&mut h.noise_rng);
            }
            h.sim.room_temp = next;
            h.last_action = a;
            energy.push(step_cost(a, h.sim.params.heater_kw, f64::from(dt_min)));
        }
        self.now += u64::from(dt_min);
        Ok(energy)
    }
}

/// One household's transitions for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub house: HouseId,
    pub day: u32,
    pub transitions: Vec<Transition>,
}

/// Runs the cluster for `days` whole days at cadence `dt_min`, one policy per house.
pub fn simulate_period<P: Policy>(
    cluster: &mut Cluster,
    policies: &mut [P],
    weather: &WeatherTrace,
    days: u32,
    dt_min: u32,
) -> Result<Vec<Vec<Episode>>> {
    if policies.len() != cluster.len() {
        return Err(FlexError::Config(format!(
            "{} policies for {} houses",
            policies.len(),
            cluster.len()
        )));
    }
    if dt_min != 1 && dt_min != QUARTER_MINUTES {
        return Err(FlexError::Config(format!("simulation dt {dt_min} not in {{1, 15}}")));
    }
    let end = cluster.now() + u64::from(days) * u64::from(MINUTES_PER_DAY);
    if !weather.covers(cluster.now(), end) {
        return Err(FlexError::Config(format!(
            "weather covers [{}, {}) but the period needs [{}, {end})",
            weather.start_minute,
            weather.end_minute(),
            cluster.now()
        )));
    }
    let ids = cluster.ids();
    let steps_per_day = MINUTES_PER_DAY / dt_min;
    let mut logs: Vec<Vec<Episode>> = ids.iter().map(|_| Vec::with_capacity(days as usize)).collect();
    for _ in 0..days {
        let day = cluster.day();
        let mut episodes: Vec<Episode> = ids
            .iter()
            .map(|&house| Episode {
                house,
                day,
                transitions: Vec::with_capacity(steps_per_day as usize),
            })
            .collect();
        for step in 0..steps_per_day {
            let states = cluster.states(weather)?;
            let setpoints = cluster.setpoints();
            let actions: Vec<Action> = policies
                .iter_mut()
                .zip(states.iter().zip(&setpoints))
                .map(|(p, (s, &sp))| p.act(s, sp))
                .collect();
            let energy = cluster.step(&actions, weather, dt_min)?;
            let next_states = cluster.states(weather)?;
            let terminal = step + 1 == steps_per_day;
            for (i, ep) in episodes.iter_mut().enumerate() {
                ep.transitions.push(Transition {
                    day,
                    step,
                    state: states[i].clone(),
                    setpoint: setpoints[i],
                    action: actions[i],
                    cost: energy[i],
                    next_state: next_states[i].clone(),
                    terminal,
                });
            }
        }
        for (log, ep) in logs.iter_mut().zip(episodes) {
            log.push(ep);
        }
    }
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub resistance: (f64, f64),
    pub capacitance: (f64, f64),
    pub heater_kw: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            resistance: (8.0, 14.0),
            capacitance: (3.0, 8.0),
            heater_kw: (4.0, 6.0),
        }
    }
}

/// Samples thermal parameters uniformly from `ranges`, redrawing any house whose heater
/// cannot hold `max_setpoint + 1` at `design_outdoor`.
pub fn sample_params<R: Rng>(
    rng: &mut R,
    ids: &[HouseId],
    ranges: &ParamRanges,
    design_outdoor: f64,
    max_setpoint: f64,
) -> Result<Vec<ThermalParams>> {
    let draw = |rng: &mut R, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    ids.iter()
        .map(|&id| {
            for _ in 0..1000 {
                let p = ThermalParams::new(
                    id,
                    draw(rng, ranges.resistance),
                    draw(rng, ranges.capacitance),
                    draw(rng, ranges.heater_kw),
                )?;
                if p.check_heater_sizing(design_outdoor, max_setpoint).is_ok() {
                    return Ok(p);
                }
            }
            Err(FlexError::Config(format!(
                "house {id}: parameter ranges never satisfy heater sizing at {design_outdoor} °C"
            )))
        })
        .collect()
}

pub const EPISODE_CSV_HEADER: [&str; 10] = [
    "house_id",
    "day",
    "step",
    "minute_of_day",
    "t_out",
    "t_room",
    "setpoint",
    "action",
    "energy_kwh",
    "terminal",
];

pub fn episode_csv_writer<W: Write>(w: W) -> Result<csv::Writer<W>> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(EPISODE_CSV_HEADER)?;
    Ok(wr)
}

pub fn write_transition_row<W: Write>(wr: &mut csv::Writer<W>, house: HouseId, t: &Transition) -> Result<()> {
    wr.write_record([
        house.to_string(),
        t.day.to_string(),
        t.step.to_string(),
        t.state.minute_of_day.to_string(),
        sig6(t.state.outdoor_temp),
        sig6(t.state.room_temp()),
        sig6(t.setpoint),
        (t.action as u8).to_string(),
        sig6(t.cost),
        (t.terminal as u8).to_string(),
    ])?;
    Ok(())
}
