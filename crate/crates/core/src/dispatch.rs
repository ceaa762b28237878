//! Minute-cadence tracking of an aggregate power signal by rank-ordered activation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::format::sig6;
use crate::fqi::ActionValues;
use crate::mdp::{aggregate_power, bau_action, Action, HouseId, MINUTES_PER_DAY};
use crate::ranker::{build_rank_table, Direction, RankTable, Snapshot};
use crate::sim::{Cluster, WeatherTrace, COMFORT_BAND};

/// A demand-response request: absolute kW targets for `target.len()` minutes from `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrEvent {
    pub id: u32,
    /// Absolute simulation minute.
    pub start: u64,
    pub direction: Direction,
    pub target: Vec<f64>,
}

impl DrEvent {
    pub fn duration(&self) -> u32 {
        self.target.len() as u32
    }

    pub fn end(&self) -> u64 {
        self.start + self.target.len() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(FlexError::Dispatch(format!("event {}: zero duration", self.id)));
        }
        if self.target.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FlexError::Dispatch(format!("event {}: target must be finite and ≥ 0", self.id)));
        }
        Ok(())
    }
}

fn default_half_period() -> u32 {
    10
}

/// Event definition as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Local time `HH:MM`, on a quarter-hour.
    pub start: String,
    pub duration_min: u32,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_frac: Option<f64>,
    #[serde(default = "default_half_period")]
    pub half_period_min: u32,
}

impl EventSpec {
    pub fn new(start: &str, duration_min: u32, direction: Direction) -> Self {
        EventSpec {
            start: start.to_string(),
            duration_min,
            direction,
            amplitude_kw: None,
            amplitude_frac: None,
            half_period_min: default_half_period(),
        }
    }

    pub fn start_minute(&self) -> Result<u32> {
        parse_hhmm(&self.start)
    }

    pub fn validate(&self) -> Result<()> {
        let start = self.start_minute()?;
        if start % 15 != 0 {
            return Err(FlexError::Config(format!("event start {} is not on a quarter hour", self.start)));
        }
        if self.duration_min == 0 || start + self.duration_min > MINUTES_PER_DAY {
            return Err(FlexError::Config(format!(
                "event at {} for {} min must be non-empty and end within the day",
                self.start, self.duration_min
            )));
        }
        if self.half_period_min == 0 {
            return Err(FlexError::Config("half_period_min must be ≥ 1".into()));
        }
        match (self.amplitude_kw, self.amplitude_frac) {
            (Some(_), Some(_)) => Err(FlexError::Config(
                "set at most one of amplitude_kw and amplitude_frac".into(),
            )),
            (Some(a), None) | (None, Some(a)) if !a.is_finite() || a < 0.0 => {
                Err(FlexError::Config(format!("event amplitude {a} must be ≥ 0")))
            }
            _ => Ok(()),
        }
    }

    /// Δ in kW; `flexible_kw` is the capacity the fraction applies to.
    pub fn amplitude(&self, flexible_kw: f64) -> f64 {
        match (self.amplitude_kw, self.amplitude_frac) {
            (Some(kw), _) => kw,
            (None, Some(f)) => f * flexible_kw,
            (None, None) => DEFAULT_AMPLITUDE_FRAC * flexible_kw,
        }
    }
}

pub const DEFAULT_AMPLITUDE_FRAC: f64 = 0.5;

pub fn parse_hhmm(s: &str) -> Result<u32> {
    let bad = || FlexError::Config(format!("expected HH:MM, got {s:?}"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    let m: u32 = m.trim().parse().map_err(|_| bad())?;
    if h >= 24 || m >= 60 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

/// Square wave starting on the high phase; the high phase moves consumption in `direction`.
pub fn square_wave(baseline: f64, delta: f64, duration: u32, half_period: u32, direction: Direction) -> Vec<f64> {
    let half = half_period.max(1);
    (0..duration)
        .map(|t| {
            let on = (t / half).is_multiple_of(2);
            let v = if on { baseline + direction.sign() * delta } else { baseline };
            v.max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PiConfig {
    pub kp: f64,
    /// Per minute.
    pub ki: f64,
    pub anti_windup: bool,
}

impl Default for PiConfig {
    fn default() -> Self {
        PiConfig {
            kp: 0.0,
            ki: 1.0,
            anti_windup: true,
        }
    }
}

/// Position-form PI with conditional integration and an output clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    pub anti_windup: bool,
    /// kW·min
    pub integral: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PiController {
    pub fn new(cfg: PiConfig, lo: f64, hi: f64) -> Self {
        PiController {
            kp: cfg.kp,
            ki: cfg.ki,
            anti_windup: cfg.anti_windup,
            integral: 0.0,
            lo,
            hi,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let held = self.kp * error + self.ki * self.integral;
        let saturating = (held >= self.hi && error > 0.0) || (held <= self.lo && error < 0.0);
        if !(self.anti_windup && saturating) {
            self.integral += error * dt;
        }
        if self.anti_windup && self.ki > 0.0 {
            self.integral = self.integral.clamp(self.lo / self.ki, self.hi / self.ki);
        }
        (self.kp * error + self.ki * self.integral).clamp(self.lo, self.hi)
    }
}

/// A household's instantaneous view during dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveHouse {
    pub house: HouseId,
    pub room_temp: f64,
    pub setpoint: f64,
    pub power_kw: f64,
}

impl LiveHouse {
    pub fn bau(&self) -> Action {
        bau_action(self.room_temp, self.setpoint)
    }

    /// Whether the comfort filter would allow `action` right now.
    pub fn permits(&self, action: Action) -> bool {
        match action {
            Action::On => self.room_temp < self.setpoint + COMFORT_BAND,
            Action::Off => self.room_temp > self.setpoint - COMFORT_BAND,
        }
    }
}

pub fn live_houses(cluster: &Cluster) -> Vec<LiveHouse> {
    let m = cluster.minute_of_day();
    cluster
        .houses()
        .map(|h| LiveHouse {
            house: h.id(),
            room_temp: h.room_temp,
            setpoint: h.schedule.at(m),
            power_kw: h.params.heater_kw,
        })
        .collect()
}

/// Power that could move in `direction` right now without tripping the comfort filter.
pub fn flexible_capacity(live: &[LiveHouse], direction: Direction) -> f64 {
    let a = direction.action();
    live.iter()
        .filter(|h| h.bau() != a && h.permits(a))
        .map(|h| h.power_kw)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Proposed actions in `live` order.
    pub actions: Vec<Action>,
    /// Houses moved off their BAU action.
    pub flipped: Vec<bool>,
}

/// Walks the rank order, flipping eligible houses until the flipped power first meets the command.
pub fn select_activations(rank: &RankTable, command_kw: f64, live: &[LiveHouse]) -> Result<Selection> {
    let pos: HashMap<HouseId, usize> = live.iter().enumerate().map(|(i, h)| (h.house, i)).collect();
    if rank.entries.len() != live.len() || rank.entries.iter().any(|e| !pos.contains_key(&e.house)) {
        return Err(FlexError::Dispatch("rank table does not cover the cluster".into()));
    }
    let mut actions: Vec<Action> = live.iter().map(LiveHouse::bau).collect();
    let mut flipped = vec![false; live.len()];
    let target = rank.direction.action();
    let mut total = 0.0;
    for e in &rank.entries {
        if total >= command_kw {
            break;
        }
        let i = pos[&e.house];
        let h = &live[i];
        if actions[i] == target || !h.permits(target) {
            continue;
        }
        actions[i] = target;
        flipped[i] = true;
        total += h.power_kw;
    }
    Ok(Selection { actions, flipped })
}

/// Forces OFF at or above `setpoint + 1` and ON at or below `setpoint − 1`.
pub fn comfort_filter(proposed: &[Action], live: &[LiveHouse]) -> (Vec<Action>, Vec<bool>) {
    proposed
        .iter()
        .zip(live)
        .map(|(&a, h)| {
            let forced = if h.room_temp >= h.setpoint + COMFORT_BAND {
                Action::Off
            } else if h.room_temp <= h.setpoint - COMFORT_BAND {
                Action::On
            } else {
                a
            };
            (forced, forced != a)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Rank once at the event start.
    #[default]
    Frozen,
    /// Re-rank every minute from live states.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DispatchConfig {
    pub pi: PiConfig,
    pub rank_policy: RankPolicy,
}

/// One logged minute. Temperatures are read at the start of the minute.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Relative to the event start; negative inside the pre-event margin.
    pub minute: i32,
    pub target_kw: f64,
    pub achieved_kw: f64,
    pub actions: Vec<Action>,
    pub room_temps: Vec<f64>,
    pub setpoints: Vec<f64>,
    pub overrides: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchTrace {
    pub event_id: u32,
    pub houses: Vec<HouseId>,
    pub duration: u32,
    pub rows: Vec<TraceRow>,
}

impl DispatchTrace {
    pub fn event_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.minute >= 0 && (r.minute as u32) < self.duration)
    }

    /// Mean absolute tracking error over the event minutes, kW.
    pub fn mae(&self) -> f64 {
        let (n, s) = self
            .event_rows()
            .fold((0usize, 0.0), |(n, s), r| (n + 1, s + (r.target_kw - r.achieved_kw).abs()));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn override_count(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.overrides).filter(|&&o| o).count()
    }
}

pub const DISPATCH_CSV_HEADER: [&str; 8] = [
    "event_id",
    "minute",
    "target_kw",
    "achieved_kw",
    "house_id",
    "action",
    "room_temp",
    "override",
];

pub fn write_trace_rows<W: Write>(wr: &mut csv::Writer<W>, trace: &DispatchTrace) -> Result<()> {
    for r in &trace.rows {
        for (i, house) in trace.houses.iter().enumerate() {
            wr.write_record([
                trace.event_id.to_string(),
                r.minute.to_string(),
                sig6(r.target_kw),
                sig6(r.achieved_kw),
                house.to_string(),
                r.actions[i].to_string(),
                sig6(r.room_temps[i]),
                (r.overrides[i] as u8).to_string(),
            ])?;
        }
    }
    Ok(())
}

fn snapshots(cluster: &Cluster, weather: &WeatherTrace, live: &[LiveHouse]) -> Result<Vec<Snapshot>> {
    Ok(cluster
        .states(weather)?
        .into_iter()
        .zip(live)
        .map(|(state, h)| Snapshot {
            house: h.house,
            state,
            setpoint: h.setpoint,
        })
        .collect())
}

/// Runs one event minute by minute and returns the trace with the rank table used at its start.
pub fn run_dr_event<Q: ActionValues>(
    cluster: &mut Cluster,
    qfns: &BTreeMap<HouseId, Q>,
    event: &DrEvent,
    weather: &WeatherTrace,
    cfg: &DispatchConfig,
) -> Result<(DispatchTrace, RankTable)> {
    event.validate()?;
    if cluster.now() != event.start {
        return Err(FlexError::Dispatch(format!(
            "event {} starts at minute {} but the cluster is at {}",
            event.id,
            event.start,
            cluster.now()
        )));
    }
    if !weather.covers(event.start, event.end()) {
        return Err(FlexError::Dispatch(format!("event {} runs past the weather trace", event.id)));
    }
    let day = cluster.day();
    for id in cluster.ids() {
        match qfns.get(&id) {
            None => {
                return Err(FlexError::Dispatch(format!(
                    "refusing event {}: house {id} has no fitted Q-function",
                    event.id
                )))
            }
            Some(q) if q.trained_through().is_some_and(|d| d >= day) => {
                return Err(FlexError::Dispatch(format!(
                    "refusing event {}: house {id} was trained on data from day {day} or later",
                    event.id
                )))
            }
            Some(_) => {}
        }
    }

    let direction = event.direction;
    let target_action = direction.action();
    let powers = cluster.powers();
    let mut pi = PiController::new(cfg.pi, 0.0, powers.iter().sum());
    let mut live = live_houses(cluster);
    let first_rank = build_rank_table(qfns, &snapshots(cluster, weather, &live)?, direction)?;
    let mut rank = first_rank.clone();
    let mut prev_flipped = vec![false; live.len()];
    let mut rows = Vec::with_capacity(event.target.len());

    for (t, &kappa) in event.target.iter().enumerate() {
        if t > 0 {
            live = live_houses(cluster);
            if cfg.rank_policy == RankPolicy::Recompute {
                rank = build_rank_table(qfns, &snapshots(cluster, weather, &live)?, direction)?;
            }
        }
        let predicted: f64 = live
            .iter()
            .zip(&prev_flipped)
            .map(|(h, &f)| {
                let a = if f { target_action } else { h.bau() };
                a.as_f64() * h.power_kw
            })
            .sum();
        let command = pi.update(direction.sign() * (kappa - predicted), 1.0);
        let sel = select_activations(&rank, command, &live)?;
        let (actions, overrides) = comfort_filter(&sel.actions, &live);
        let achieved = aggregate_power(&actions, &powers)?;
        rows.push(TraceRow {
            minute: t as i32,
            target_kw: kappa,
            achieved_kw: achieved,
            actions: actions.clone(),
            room_temps: live.iter().map(|h| h.room_temp).collect(),
            setpoints: live.iter().map(|h| h.setpoint).collect(),
            overrides,
        });
        cluster.step(&actions, weather, 1)?;
        prev_flipped = sel
            .flipped
            .iter()
            .zip(&actions)
            .map(|(&f, &a)| f && a == target_action)
            .collect();
    }
    let trace = DispatchTrace {
        event_id: event.id,
        houses: live.iter().map(|h| h.house).collect(),
        duration: event.duration(),
        rows,
    };
    Ok((trace, first_rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::HouseholdState;
    use crate::ranker::RankEntry;
    use crate::sim::{HouseSim, SetpointSchedule, ThermalParams};
    use proptest::prelude::*;

    fn live(temps: &[f64], powers: &[f64]) -> Vec<LiveHouse> {
        temps
            .iter()
            .zip(powers)
            .enumerate()
            .map(|(i, (&t, &p))| LiveHouse {
                house: i as HouseId,
                room_temp: t,
                setpoint: 20.0,
                power_kw: p,
            })
            .collect()
    }

    fn rank_in_order(n: usize, direction: Direction) -> RankTable {
        RankTable {
            direction,
            entries: (0..n)
                .map(|i| RankEntry {
                    house: i as HouseId,
                    action: direction.action(),
                    advantage: i as f64,
                    rank: i as u32 + 1,
                    bau_matches: false,
                })
                .collect(),
        }
    }

    #[test]
    fn pi_examples() {
        let mut pi = PiController::new(PiConfig { kp: 0.5, ki: 0.1, anti_windup: true }, 0.0, 100.0);
        assert_eq!(pi.update(0.0, 1.0), 0.0);
        assert!((pi.update(4.0, 1.0) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn pi_anti_windup_pins_at_clamp() {
        let mut pi = PiController::new(PiConfig { kp: 0.6, ki: 0.15, anti_windup: true }, 0.0, 10.0);
        for _ in 0..100 {
            assert_eq!(pi.update(1000.0, 1.0), 10.0);
        }
        assert!(pi.integral <= 10.0 / 0.15 + 1e-9);
        let mut loose = PiController::new(PiConfig { kp: 0.6, ki: 0.15, anti_windup: false }, 0.0, 10.0);
        for _ in 0..100 {
            loose.update(1000.0, 1.0);
        }
        assert!(loose.integral > 1e4);
    }

    #[test]
    fn selection_examples() {
        let l = live(&[20.5, 20.5, 20.5], &[2.0, 2.0, 3.0]);
        let r = rank_in_order(3, Direction::Up);
        let s0 = select_activations(&r, 0.0, &l).unwrap();
        assert_eq!(s0.actions, vec![Action::Off; 3]);
        let s3 = select_activations(&r, 3.0, &l).unwrap();
        assert_eq!(s3.actions, vec![Action::On, Action::On, Action::Off]);
        let sall = select_activations(&r, 100.0, &l).unwrap();
        assert_eq!(sall.actions, vec![Action::On; 3]);
    }

    #[test]
    fn selection_skips_comfort_blocked_and_already_matching() {
        let l = live(&[21.0, 19.5, 20.5], &[2.0, 2.0, 3.0]);
        let s = select_activations(&rank_in_order(3, Direction::Up), 1.0, &l).unwrap();
        assert_eq!(s.flipped, vec![false, false, true]);
        assert_eq!(s.actions, vec![Action::Off, Action::On, Action::On]);
        let bad = live(&[20.5], &[2.0]);
        assert!(select_activations(&rank_in_order(3, Direction::Up), 1.0, &bad).is_err());
    }

    #[test]
    fn comfort_filter_examples() {
        let l = live(&[21.0, 18.8, 20.0], &[1.0; 3]);
        let (a, f) = comfort_filter(&[Action::On, Action::Off, Action::On], &l);
        assert_eq!(a, vec![Action::Off, Action::On, Action::On]);
        assert_eq!(f, vec![true, true, false]);
    }

    #[test]
    fn square_wave_shape() {
        let w = square_wave(10.0, 4.0, 40, 10, Direction::Up);
        assert_eq!(w.len(), 40);
        assert_eq!((w[0], w[9], w[10], w[19], w[20], w[39]), (14.0, 14.0, 10.0, 10.0, 14.0, 10.0));
        let d = square_wave(3.0, 4.0, 4, 2, Direction::Down);
        assert_eq!(d, vec![0.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn event_spec_parsing() {
        assert_eq!(parse_hhmm("15:00").unwrap(), 900);
        assert!(parse_hhmm("25:00").is_err());
        assert!(parse_hhmm("1500").is_err());
        let mut s = EventSpec::new("10:05", 40, Direction::Up);
        assert!(s.validate().is_err());
        s.start = "23:45".into();
        assert!(s.validate().is_err());
        s.start = "10:00".into();
        s.validate().unwrap();
        assert_eq!(s.amplitude(8.0), 4.0);
        s.amplitude_kw = Some(3.0);
        assert_eq!(s.amplitude(8.0), 3.0);
        s.amplitude_frac = Some(0.2);
        assert!(s.validate().is_err());
    }

    /// Constant Q: every house looks the same, so rank order is by house id.
    struct Flat;

    impl ActionValues for Flat {
        fn q_values(&self, _: &HouseholdState) -> Result<[f64; 2]> {
            Ok([0.0, 0.1])
        }
    }

    fn cluster(n: usize) -> Cluster {
        let sims = (0..n)
            .map(|i| {
                let p = ThermalParams::new(i as HouseId, 10.0, 5.0, 5.0).unwrap();
                HouseSim::new(p, 20.2 + 0.1 * i as f64, SetpointSchedule::flat(20.0).unwrap()).unwrap()
            })
            .collect();
        Cluster::new(sims, 4, 0.0, 1).unwrap()
    }

    #[test]
    fn bau_target_keeps_bau() {
        let mut c = cluster(4);
        let w = WeatherTrace::constant(5.0, 1);
        let qfns: BTreeMap<HouseId, Flat> = (0..4).map(|i| (i, Flat)).collect();
        let ev = DrEvent {
            id: 0,
            start: 0,
            direction: Direction::Up,
            target: vec![0.0; 5],
        };
        let (trace, rank) = run_dr_event(&mut c, &qfns, &ev, &w, &DispatchConfig::default()).unwrap();
        assert_eq!(rank.entries.iter().map(|e| e.house).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(trace.rows.len(), 5);
        for r in &trace.rows {
            assert_eq!(r.achieved_kw, 0.0);
            assert!(r.actions.iter().all(|&a| a == Action::Off));
        }
    }

    #[test]
    fn refuses_without_q_functions() {
        let mut c = cluster(2);
        let w = WeatherTrace::constant(5.0, 1);
        let qfns: BTreeMap<HouseId, Flat> = [(0, Flat)].into_iter().collect();
        let ev = DrEvent {
            id: 3,
            start: 0,
            direction: Direction::Up,
            target: vec![5.0],
        };
        let err = run_dr_event(&mut c, &qfns, &ev, &w, &DispatchConfig::default()).unwrap_err();
        assert!(matches!(err, FlexError::Dispatch(_)));
        let late = DrEvent { start: 15, ..ev };
        let all: BTreeMap<HouseId, Flat> = (0..2).map(|i| (i, Flat)).collect();
        assert!(run_dr_event(&mut c, &all, &late, &w, &DispatchConfig::default()).is_err());
    }

    #[test]
    fn tracks_a_step_up() {
        let mut c = cluster(4);
        let w = WeatherTrace::constant(5.0, 1);
        let qfns: BTreeMap<HouseId, Flat> = (0..4).map(|i| (i, Flat)).collect();
        let ev = DrEvent {
            id: 0,
            start: 0,
            direction: Direction::Up,
            target: vec![10.0; 6],
        };
        let (trace, _) = run_dr_event(&mut c, &qfns, &ev, &w, &DispatchConfig::default()).unwrap();
        for r in &trace.rows {
            let expected = aggregate_power(&r.actions, &[5.0; 4]).unwrap();
            assert_eq!(r.achieved_kw, expected);
        }
        assert!(trace.rows[1..].iter().all(|r| r.achieved_kw == 10.0), "{:?}", trace.rows);
    }

    proptest! {
        #[test]
        fn flipped_set_is_a_prefix_of_eligible_ranks(
            temps in proptest::collection::vec(18.5f64..21.5, 1..10),
            powers in proptest::collection::vec(1.0f64..6.0, 10),
            command in 0.0f64..40.0,
            up in any::<bool>(),
        ) {
            let dir = if up { Direction::Up } else { Direction::Down };
            let l = live(&temps, &powers[..temps.len()]);
            let r = rank_in_order(temps.len(), dir);
            let s = select_activations(&r, command, &l).unwrap();
            let eligible: Vec<usize> = (0..l.len())
                .filter(|&i| l[i].bau() != dir.action() && l[i].permits(dir.action()))
                .collect();
            let n = s.flipped.iter().filter(|&&f| f).count();
            for (j, &i) in eligible.iter().enumerate() {
                prop_assert_eq!(s.flipped[i], j < n);
            }
            let flipped_kw: f64 = (0..l.len()).filter(|&i| s.flipped[i]).map(|i| l[i].power_kw).sum();
            let capacity = flexible_capacity(&l, dir);
            if command <= capacity {
                prop_assert!(flipped_kw >= command);
            } else {
                prop_assert!((flipped_kw - capacity).abs() < 1e-9);
            }
        }

        #[test]
        fn larger_command_never_flips_fewer(
            temps in proptest::collection::vec(18.5f64..21.5, 1..10),
            a in 0.0f64..30.0,
            b in 0.0f64..30.0,
        ) {
            let l = live(&temps, &vec![3.0; temps.len()]);
            let r = rank_in_order(temps.len(), Direction::Up);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let count = |c| select_activations(&r, c, &l).unwrap().flipped.iter().filter(|&&f| f).count();
            prop_assert!(count(lo) <= count(hi));
        }

        #[test]
        fn filter_output_respects_band(
            temps in proptest::collection::vec(17.0f64..23.0, 1..10),
            on in proptest::collection::vec(any::<bool>(), 10),
        ) {
            let l = live(&temps, &vec![1.0; temps.len()]);
            let proposed: Vec<Action> = on[..temps.len()].iter().map(|&b| if b { Action::On } else { Action::Off }).collect();
            let (a, f) = comfort_filter(&proposed, &l);
            for i in 0..l.len() {
                prop_assert_eq!(f[i], a[i] != proposed[i]);
                if l[i].room_temp >= 21.0 { prop_assert_eq!(a[i], Action::Off); }
                if l[i].room_temp <= 19.0 { prop_assert_eq!(a[i], Action::On); }
            }
        }

        #[test]
        fn pi_output_stays_clamped(errors in proptest::collection::vec(-50.0f64..50.0, 1..50)) {
            let mut pi = PiController::new(PiConfig::default(), 0.0, 20.0);
            for e in errors {
                let c = pi.update(e, 1.0);
                prop_assert!((0.0..=20.0).contains(&c));
                prop_assert!(pi.integral >= 0.0 && pi.integral <= 20.0 / pi.ki + 1e-9);
            }
        }
    }
}
