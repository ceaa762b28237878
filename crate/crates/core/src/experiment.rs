//! End-to-end protocol: BAU warm-up, nightly retraining, scheduled events at 1-minute cadence.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispatch::{
    flexible_capacity, live_houses, run_dr_event, square_wave, DispatchConfig, DispatchTrace, DrEvent, EventSpec,
    TraceRow, DISPATCH_CSV_HEADER,
};
use crate::error::{FlexError, PhaseExt, Result};
use crate::format::sig6;
use crate::fqi::{retrain_all, save_model, FqiConfig, QFunction};
use crate::mdp::{
    aggregate_power, Action, ExperienceBuffer, HouseId, Transition, DEFAULT_HISTORY_K, DEFAULT_WINDOW_DAYS,
    MINUTES_PER_DAY, QUARTERS_PER_DAY, QUARTER_MINUTES,
};
use crate::ranker::{write_rank_rows, Direction, RankTable, RANK_CSV_HEADER};
use crate::seed::{substream, substream_seed};
use crate::sim::{
    episode_csv_writer, make_setpoints, make_weather, sample_params, simulate_period, Bau, Cluster, HouseSim,
    ParamRanges, SetpointProfile, SetpointSchedule, ThermalParams, WeatherConfig, WeatherTrace,
};

/// Minutes of history behind an event's baseline and mean flexible capacity.
pub const BASELINE_WINDOW_MIN: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseSpec {
    pub id: HouseId,
    pub profile: SetpointProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_setpoint: Option<f64>,
    /// `[resistance, capacitance, heater_kw]`; sampled when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Used when `houses` is empty: ids `1..=n`, alternating evening-step and flat.
    pub n_houses: u32,
    pub warmup_days: u32,
    pub eval_days: u32,
    pub history_k: usize,
    pub window_days: u32,
    pub noise_sigma: f64,
    pub base_setpoint: f64,
    pub margin_min: u32,
    /// Outdoor temperature design point for heater sizing.
    pub design_outdoor_c: f64,
    pub weather: WeatherConfig,
    pub params: ParamRanges,
    pub fqi: FqiConfig,
    pub dispatch: DispatchConfig,
    pub events: Vec<EventSpec>,
    pub houses: Vec<HouseSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            n_houses: 8,
            warmup_days: 30,
            eval_days: 10,
            history_k: DEFAULT_HISTORY_K,
            window_days: DEFAULT_WINDOW_DAYS,
            noise_sigma: 0.02,
            base_setpoint: 20.0,
            margin_min: 10,
            design_outdoor_c: -5.0,
            weather: WeatherConfig::default(),
            params: ParamRanges::default(),
            fqi: FqiConfig::default(),
            dispatch: DispatchConfig::default(),
            events: vec![
                EventSpec::new("10:00", 40, Direction::Up),
                EventSpec::new("15:00", 40, Direction::Up),
            ],
            houses: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FlexError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn house_specs(&self) -> Vec<HouseSpec> {
        if !self.houses.is_empty() {
            return self.houses.clone();
        }
        (1..=self.n_houses)
            .map(|id| HouseSpec {
                id,
                profile: if id % 2 == 1 {
                    SetpointProfile::evening_step()
                } else {
                    SetpointProfile::Flat
                },
                base_setpoint: None,
                params: None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let specs = self.house_specs();
        if specs.is_empty() {
            return Err(FlexError::Config("no houses configured".into()));
        }
        let mut ids: Vec<HouseId> = specs.iter().map(|h| h.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != specs.len() {
            return Err(FlexError::Config("house ids must be unique".into()));
        }
        if self.window_days == 0 || self.warmup_days < self.window_days {
            return Err(FlexError::Config(format!(
                "warmup_days {} must cover window_days {} (≥ 1)",
                self.warmup_days, self.window_days
            )));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(FlexError::Config("noise_sigma must be ≥ 0".into()));
        }
        if self.fqi.iterations == 0 {
            return Err(FlexError::Config("fqi.iterations must be ≥ 1".into()));
        }
        let mut windows = Vec::new();
        for e in &self.events {
            e.validate()?;
            let s = e.start_minute()?;
            windows.push((s, s + e.duration_min));
        }
        windows.sort_unstable();
        for w in windows.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(FlexError::Config("event windows overlap".into()));
            }
        }
        Ok(())
    }

    pub fn total_days(&self) -> u32 {
        self.warmup_days + self.eval_days
    }
}

/// Per-house static description written next to the run for report regeneration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseInfo {
    pub id: HouseId,
    pub profile: String,
    pub resistance: f64,
    pub capacitance: f64,
    pub heater_kw: f64,
    pub setpoints: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub history_k: usize,
    pub last_model_day: Option<u32>,
    /// Outdoor temperature used for the heatmaps (noon of the last evaluation day).
    pub heatmap_outdoor_c: f64,
    pub houses: Vec<HouseInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event_id: u32,
    pub day: u32,
    pub start: u64,
    pub direction: Direction,
    pub duration: u32,
    pub baseline_kw: f64,
    pub amplitude_kw: f64,
    /// Flexible capacity at the event start.
    pub flexible_kw: f64,
    /// Mean flexible capacity over the baseline window.
    pub mean_flexible_kw: f64,
}

pub const EVENTS_CSV_HEADER: [&str; 10] = [
    "event_id",
    "day",
    "start_minute",
    "minute_of_day",
    "direction",
    "duration_min",
    "baseline_kw",
    "amplitude_kw",
    "flexible_kw",
    "mean_flexible_kw",
];

pub const TRAINING_CSV_HEADER: [&str; 4] = ["house_id", "date", "iteration", "train_rmse"];

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub events: Vec<EventRecord>,
    pub traces: Vec<DispatchTrace>,
    pub rank_tables: Vec<RankTable>,
    /// Buffer length per house when warm-up ended.
    pub warmup_buffer_sizes: Vec<usize>,
    pub info: RunInfo,
}

pub fn events_path(dir: &Path) -> PathBuf {
    dir.join("events.csv")
}

pub fn traces_path(dir: &Path) -> PathBuf {
    dir.join("dispatch_traces.csv")
}

pub fn run_info_path(dir: &Path) -> PathBuf {
    dir.join("houses.json")
}

fn writer(path: PathBuf) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn build_cluster(cfg: &ExperimentConfig) -> Result<(Cluster, Vec<HouseInfo>)> {
    let specs = cfg.house_specs();
    let schedules: Vec<SetpointSchedule> = specs
        .iter()
        .map(|h| {
            make_setpoints(
                &h.profile,
                h.base_setpoint.unwrap_or(cfg.base_setpoint),
                substream_seed(cfg.seed, &format!("setpoints-{}", h.id)),
            )
        })
        .collect::<Result<_>>()?;
    let max_sp = schedules.iter().map(SetpointSchedule::max).fold(f64::MIN, f64::max);
    let to_sample: Vec<HouseId> = specs.iter().filter(|h| h.params.is_none()).map(|h| h.id).collect();
    let mut sampled = sample_params(
        &mut substream(cfg.seed, "params"),
        &to_sample,
        &cfg.params,
        cfg.design_outdoor_c,
        max_sp,
    )?
    .into_iter();
    let mut sims = Vec::with_capacity(specs.len());
    let mut infos = Vec::with_capacity(specs.len());
    for (h, sched) in specs.iter().zip(schedules) {
        let p = match h.params {
            Some([r, c, kw]) => ThermalParams::new(h.id, r, c, kw)?,
            None => sampled.next().expect("one sample per unparameterized house"),
        };
        infos.push(HouseInfo {
            id: h.id,
            profile: h.profile.name().to_string(),
            resistance: p.resistance,
            capacitance: p.capacitance,
            heater_kw: p.heater_kw,
            setpoints: sched.breakpoints().to_vec(),
        });
        let start = sched.at(0);
        sims.push(HouseSim::new(p, start, sched)?);
    }
    let cluster = Cluster::new(sims, cfg.history_k, cfg.noise_sigma, substream_seed(cfg.seed, "noise"))?;
    Ok((cluster, infos))
}

#[derive(Debug, Clone, Copy)]
struct MinuteStats {
    aggregate_kw: f64,
    flex_up_kw: f64,
    flex_down_kw: f64,
}

/// Mutable state of the evaluation phase.
struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    cluster: Cluster,
    weather: WeatherTrace,
    history: VecDeque<MinuteStats>,
    recent: VecDeque<TraceRow>,
    /// Trace index, minutes of post-event margin still to log, and the event baseline.
    post: Option<(usize, u32, f64)>,
    traces: Vec<DispatchTrace>,
}

impl Runner<'_> {
    fn remember(&mut self) {
        let live = live_houses(&self.cluster);
        let powers: Vec<f64> = live.iter().map(|h| h.power_kw).collect();
        let stats = MinuteStats {
            aggregate_kw: aggregate_power(&self.cluster.last_actions(), &powers).unwrap_or(0.0),
            flex_up_kw: flexible_capacity(&live, Direction::Up),
            flex_down_kw: flexible_capacity(&live, Direction::Down),
        };
        self.history.push_back(stats);
        while self.history.len() > BASELINE_WINDOW_MIN {
            self.history.pop_front();
        }
    }

    /// One minute outside any event; it is logged only into event margins.
    fn bau_minute(&mut self, actions: &[Action]) -> Result<Vec<f64>> {
        let live = live_houses(&self.cluster);
        let powers: Vec<f64> = live.iter().map(|h| h.power_kw).collect();
        let achieved = aggregate_power(actions, &powers)?;
        let row = TraceRow {
            minute: 0,
            target_kw: 0.0,
            achieved_kw: achieved,
            actions: actions.to_vec(),
            room_temps: live.iter().map(|h| h.room_temp).collect(),
            setpoints: live.iter().map(|h| h.setpoint).collect(),
            overrides: vec![false; live.len()],
        };
        let energy = self.cluster.step(actions, &self.weather, 1)?;
        if let Some((idx, remaining, baseline)) = self.post.as_mut() {
            let trace = &mut self.traces[*idx];
            let minute = trace.rows.last().map(|r| r.minute + 1).unwrap_or(0);
            trace.rows.push(TraceRow {
                minute,
                target_kw: *baseline,
                ..row.clone()
            });
            *remaining -= 1;
            if *remaining == 0 {
                self.post = None;
            }
        }
        self.recent.push_back(row);
        while self.recent.len() > self.cfg.margin_min as usize {
            self.recent.pop_front();
        }
        self.remember();
        Ok(energy)
    }
}

/// Runs the full protocol and writes every artifact under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate().phase("config")?;
    let models_dir = out.join("models");
    fs::create_dir_all(&models_dir).phase("setup")?;
    fs::write(out.join("config.toml"), cfg.to_toml().phase("setup")?).phase("setup")?;

    let (cluster, infos) = build_cluster(cfg).phase("setup")?;
    let weather = make_weather(
        substream_seed(cfg.seed, "weather"),
        cfg.total_days(),
        QUARTER_MINUTES,
        &cfg.weather,
    )
    .phase("setup")?;
    let ids = cluster.ids();
    let schedules: Vec<SetpointSchedule> = cluster.houses().map(|h| h.schedule.clone()).collect();
    let mut buffers: Vec<ExperienceBuffer> = ids.iter().map(|&h| ExperienceBuffer::new(h, cfg.window_days)).collect();

    let mut episodes = episode_csv_writer(BufWriter::new(File::create(out.join("episodes.csv")).phase("setup")?))
        .phase("setup")?;
    let mut training_log = writer(out.join("training_log.csv")).phase("setup")?;
    training_log.write_record(TRAINING_CSV_HEADER).phase("setup")?;
    let mut trace_csv = writer(traces_path(out)).phase("setup")?;
    trace_csv.write_record(DISPATCH_CSV_HEADER).phase("setup")?;
    let mut rank_csv = writer(out.join("rank_events.csv")).phase("setup")?;
    rank_csv.write_record(RANK_CSV_HEADER).phase("setup")?;
    let mut events_csv = writer(events_path(out)).phase("setup")?;
    events_csv.write_record(EVENTS_CSV_HEADER).phase("setup")?;

    let mut runner = Runner {
        cfg,
        cluster,
        weather,
        history: VecDeque::with_capacity(BASELINE_WINDOW_MIN + 1),
        recent: VecDeque::new(),
        post: None,
        traces: Vec::new(),
    };

    // Warm-up under BAU at the normal 15-minute cadence.
    let mut policies = vec![Bau; ids.len()];
    let logs = simulate_period(&mut runner.cluster, &mut policies, &runner.weather, cfg.warmup_days, QUARTER_MINUTES)
        .phase("warmup")?;
    for (i, house_log) in logs.into_iter().enumerate() {
        for ep in house_log {
            for t in &ep.transitions {
                crate::sim::write_transition_row(&mut episodes, ids[i], t).phase("warmup")?;
            }
            buffers[i].push_transitions(ep.transitions).phase("warmup")?;
        }
    }
    let warmup_buffer_sizes: Vec<usize> = buffers.iter().map(ExperienceBuffer::len).collect();

    let mut events = Vec::new();
    let mut rank_tables = Vec::new();
    let mut last_model_day = None;
    let mut event_id = 0u32;
    let mut day_events: Vec<(u32, &EventSpec)> =
        cfg.events.iter().map(|e| Ok((e.start_minute()?, e))).collect::<Result<_>>().phase("config")?;
    day_events.sort_by_key(|(s, _)| *s);

    for day in cfg.warmup_days..cfg.total_days() {
        let results = retrain_all(&buffers, &schedules, &cfg.fqi, substream_seed(cfg.seed, "regressor"), day)
            .phase("train")?;
        let mut qfns: BTreeMap<HouseId, QFunction> = BTreeMap::new();
        for r in results {
            let (q, log) = r.phase("train")?;
            save_model(&models_dir, &q, day).phase("train")?;
            for it in log {
                training_log
                    .write_record([
                        q.house.to_string(),
                        day.to_string(),
                        it.iteration.to_string(),
                        sig6(it.train_rmse),
                    ])
                    .phase("train")?;
            }
            qfns.insert(q.house, q);
        }
        last_model_day = Some(day);

        let day_start = u64::from(day) * u64::from(MINUTES_PER_DAY);
        let mut todays: Vec<Vec<Transition>> = vec![Vec::new(); ids.len()];
        let mut next_event = 0usize;
        let mut m = 0u32;
        while m < MINUTES_PER_DAY {
            if next_event < day_events.len() && day_events[next_event].0 == m {
                let spec = day_events[next_event].1;
                next_event += 1;
                let (record, trace, rank) =
                    run_event(&mut runner, &qfns, spec, event_id, day, day_start + u64::from(m)).phase("dispatch")?;
                write_rank_rows(&mut rank_csv, event_id, &rank).phase("dispatch")?;
                rank_tables.push(rank);
                runner.traces.push(trace);
                runner.post = (cfg.margin_min > 0).then(|| (runner.traces.len() - 1, cfg.margin_min, record.baseline_kw));
                events.push(record);
                event_id += 1;
                m += spec.duration_min;
                continue;
            }
            if !m.is_multiple_of(QUARTER_MINUTES) {
                let bau = runner.cluster.bau_actions();
                runner.bau_minute(&bau).phase("dispatch")?;
                m += 1;
                continue;
            }
            let step = m / QUARTER_MINUTES;
            let states = runner.cluster.states(&runner.weather).phase("dispatch")?;
            let setpoints = runner.cluster.setpoints();
            let held = runner.cluster.bau_actions();
            let mut cost = vec![0.0; ids.len()];
            for _ in 0..QUARTER_MINUTES {
                let energy = runner.bau_minute(&held).phase("dispatch")?;
                for (c, e) in cost.iter_mut().zip(energy) {
                    *c += e;
                }
            }
            let next = runner.cluster.states(&runner.weather).phase("dispatch")?;
            for i in 0..ids.len() {
                todays[i].push(Transition {
                    day,
                    step,
                    state: states[i].clone(),
                    setpoint: setpoints[i],
                    action: held[i],
                    cost: cost[i],
                    next_state: next[i].clone(),
                    terminal: step + 1 == QUARTERS_PER_DAY,
                });
            }
            m += QUARTER_MINUTES;
        }
        for (i, ts) in todays.into_iter().enumerate() {
            for t in &ts {
                crate::sim::write_transition_row(&mut episodes, ids[i], t).phase("dispatch")?;
            }
            buffers[i].push_transitions(ts).phase("dispatch")?;
        }
    }
    for trace in &runner.traces {
        crate::dispatch::write_trace_rows(&mut trace_csv, trace).phase("dispatch")?;
    }
    for e in &events {
        events_csv
            .write_record([
                e.event_id.to_string(),
                e.day.to_string(),
                e.start.to_string(),
                (e.start % u64::from(MINUTES_PER_DAY)).to_string(),
                e.direction.to_string(),
                e.duration.to_string(),
                sig6(e.baseline_kw),
                sig6(e.amplitude_kw),
                sig6(e.flexible_kw),
                sig6(e.mean_flexible_kw),
            ])
            .phase("dispatch")?;
    }
    for w in [&mut training_log, &mut trace_csv, &mut rank_csv, &mut events_csv] {
        w.flush().phase("dispatch")?;
    }
    episodes.flush().phase("dispatch")?;

    let noon = u64::from(cfg.total_days().saturating_sub(1)) * u64::from(MINUTES_PER_DAY) + 720;
    let info = RunInfo {
        seed: cfg.seed,
        history_k: cfg.history_k,
        last_model_day,
        heatmap_outdoor_c: runner.weather.at(noon).phase("report")?,
        houses: infos,
    };
    fs::write(run_info_path(out), serde_json::to_string_pretty(&info).phase("report")?).phase("report")?;
    crate::report::emit_reports(out).phase("report")?;

    Ok(RunOutcome {
        dir: out.to_path_buf(),
        events,
        traces: runner.traces,
        rank_tables,
        warmup_buffer_sizes,
        info,
    })
}

fn run_event(
    runner: &mut Runner<'_>,
    qfns: &BTreeMap<HouseId, QFunction>,
    spec: &EventSpec,
    event_id: u32,
    day: u32,
    start: u64,
) -> Result<(EventRecord, DispatchTrace, RankTable)> {
    let live = live_houses(&runner.cluster);
    let direction = spec.direction;
    let flexible_kw = flexible_capacity(&live, direction);
    let (baseline_kw, mean_flexible_kw) = if runner.history.is_empty() {
        let powers: Vec<f64> = live.iter().map(|h| h.power_kw).collect();
        let bau: Vec<Action> = live.iter().map(|h| h.bau()).collect();
        (aggregate_power(&bau, &powers)?, flexible_kw)
    } else {
        let n = runner.history.len() as f64;
        let agg = runner.history.iter().map(|s| s.aggregate_kw).sum::<f64>() / n;
        let flex = runner
            .history
            .iter()
            .map(|s| match direction {
                Direction::Up => s.flex_up_kw,
                Direction::Down => s.flex_down_kw,
            })
            .sum::<f64>()
            / n;
        (agg, flex)
    };
    let amplitude_kw = spec.amplitude(mean_flexible_kw);
    let event = DrEvent {
        id: event_id,
        start,
        direction,
        target: square_wave(baseline_kw, amplitude_kw, spec.duration_min, spec.half_period_min, direction),
    };
    let (mut trace, rank) = run_dr_event(&mut runner.cluster, qfns, &event, &runner.weather, &runner.cfg.dispatch)?;
    let n = runner.recent.len() as i32;
    let pre: Vec<TraceRow> = runner
        .recent
        .iter()
        .enumerate()
        .map(|(k, r)| TraceRow {
            minute: k as i32 - n,
            target_kw: baseline_kw,
            ..r.clone()
        })
        .collect();
    trace.rows.splice(0..0, pre);
    runner.history.clear();
    runner.recent.clear();
    let record = EventRecord {
        event_id,
        day,
        start,
        direction,
        duration: spec.duration_min,
        baseline_kw,
        amplitude_kw,
        flexible_kw,
        mean_flexible_kw,
    };
    Ok((record, trace, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.total_days(), 40);
    }

    #[test]
    fn default_houses_alternate_profiles() {
        let specs = ExperimentConfig::default().house_specs();
        assert_eq!(specs.len(), 8);
        assert_eq!(specs[0].profile.name(), "evening-step");
        assert_eq!(specs[1].profile.name(), "flat");
        assert_eq!(specs.iter().map(|h| h.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn short_warmup_is_rejected() {
        let r = ExperimentConfig::from_toml("warmup_days = 10\nwindow_days = 30\n");
        assert!(matches!(r, Err(FlexError::Config(_))));
    }

    #[test]
    fn overlapping_events_are_rejected() {
        let text = r#"
            [[events]]
            start = "10:00"
            duration_min = 40
            direction = "up"
            [[events]]
            start = "10:30"
            duration_min = 40
            direction = "down"
        "#;
        assert!(matches!(ExperimentConfig::from_toml(text), Err(FlexError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("seeds = 3\n").is_err());
    }

    #[test]
    fn duplicate_house_ids_are_rejected() {
        let text = r#"
            [[houses]]
            id = 1
            profile = { kind = "flat" }
            [[houses]]
            id = 1
            profile = { kind = "flat" }
        "#;
        assert!(matches!(ExperimentConfig::from_toml(text), Err(FlexError::Config(_))));
    }
}
