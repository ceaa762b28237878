//! Event-scoped household ranking by advantage, and advantage heatmaps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::format::sig6;
use crate::fqi::ActionValues;
use crate::mdp::{bau_policy, Action, HouseId, HouseholdState, MINUTES_PER_DAY, QUARTER_MINUTES};
use crate::sim::SetpointSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// The action that moves consumption in this direction.
    pub fn action(self) -> Action {
        match self {
            Direction::Up => Action::On,
            Direction::Down => Action::Off,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
        })
    }
}

/// A household's live view at ranking time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub house: HouseId,
    pub state: HouseholdState,
    pub setpoint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub house: HouseId,
    /// The event action; it differs from BAU unless `bau_matches`.
    pub action: Action,
    pub advantage: f64,
    pub rank: u32,
    /// BAU already takes the event action, so the house deviates at zero cost.
    pub bau_matches: bool,
}

/// Entries in rank order: ascending advantage, ties by ascending house id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub direction: Direction,
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn rank_of(&self, house: HouseId) -> Option<u32> {
        self.entries.iter().find(|e| e.house == house).map(|e| e.rank)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranks households for an event. Houses already at the event action get advantage 0.
pub fn build_rank_table<Q: ActionValues>(
    qfns: &BTreeMap<HouseId, Q>,
    snapshots: &[Snapshot],
    direction: Direction,
) -> Result<RankTable> {
    let event_action = direction.action();
    let mut entries = snapshots
        .par_iter()
        .map(|s| {
            let q = qfns
                .get(&s.house)
                .ok_or_else(|| FlexError::Ranking(format!("no Q-function for house {}", s.house)))?;
            let bau = bau_policy(&s.state, s.setpoint);
            let (advantage, bau_matches) = if bau == event_action {
                (0.0, true)
            } else {
                let a = q.advantage(&s.state, s.setpoint, event_action)?;
                if !a.is_finite() {
                    return Err(FlexError::Ranking(format!("house {}: non-finite advantage", s.house)));
                }
                (a, false)
            };
            Ok(RankEntry {
                house: s.house,
                action: event_action,
                advantage,
                rank: 0,
                bau_matches,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.advantage.total_cmp(&b.advantage).then(a.house.cmp(&b.house)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i as u32 + 1;
    }
    Ok(RankTable { direction, entries })
}

pub const RANK_CSV_HEADER: [&str; 5] = ["event_id", "house_id", "action", "advantage_kwh", "rank"];

pub fn write_rank_rows<W: Write>(wr: &mut csv::Writer<W>, event_id: u32, table: &RankTable) -> Result<()> {
    for e in &table.entries {
        wr.write_record([
            event_id.to_string(),
            e.house.to_string(),
            e.action.to_string(),
            sig6(e.advantage),
            e.rank.to_string(),
        ])?;
    }
    Ok(())
}

/// `A(x, ON) − A(x, OFF)` over (minute, room temperature); rows are minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub minutes: Vec<u32>,
    pub temps: Vec<f64>,
    pub outdoor_temp: f64,
    pub values: Vec<f64>,
}

impl HeatmapGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.temps.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.temps.len();
        &self.values[row * n..(row + 1) * n]
    }

    /// Per row, the temperature at which switching ON is least costly relative to OFF
    /// (lowest temperature on ties).
    pub fn preference_boundary(&self) -> Vec<(u32, f64)> {
        self.minutes
            .iter()
            .enumerate()
            .map(|(r, &m)| {
                let row = self.row(r);
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v < row[best] {
                        best = c;
                    }
                }
                (m, self.temps[best])
            })
            .collect()
    }
}

/// Evenly spaced temperatures from `lo` to `hi` inclusive.
pub fn temperature_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
}

/// Default axes: every quarter hour, and 0.1 °C steps spanning the schedule ± 2 °C.
pub fn default_axes(schedule: &SetpointSchedule) -> (Vec<u32>, Vec<f64>) {
    let minutes = (0..MINUTES_PER_DAY).step_by(QUARTER_MINUTES as usize).collect();
    let temps = temperature_axis(schedule.min() - 2.0, schedule.max() + 2.0, 0.1);
    (minutes, temps)
}

/// Each cell uses a steady history (the grid temperature in all `k + 1` slots).
pub fn advantage_heatmap<Q: ActionValues>(
    q: &Q,
    k: usize,
    outdoor_temp: f64,
    schedule: &SetpointSchedule,
    minutes: &[u32],
    temps: &[f64],
) -> Result<HeatmapGrid> {
    let rows = minutes
        .par_iter()
        .map(|&m| {
            let sp = schedule.at(m);
            temps
                .iter()
                .map(|&t| {
                    let s = HouseholdState::steady(m as u16, outdoor_temp, t, k);
                    let v = q.advantage(&s, sp, Action::On)? - q.advantage(&s, sp, Action::Off)?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(FlexError::Ranking(format!("non-finite heatmap cell at minute {m}, {t} °C")))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatmapGrid {
        minutes: minutes.to_vec(),
        temps: temps.to_vec(),
        outdoor_temp,
        values: rows.into_iter().flatten().collect(),
    })
}

pub const HEATMAP_CSV_HEADER: [&str; 3] = ["minute", "temp_c", "dis_advantage_kwh"];

pub fn write_heatmap_csv<W: Write>(w: W, grid: &HeatmapGrid) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEATMAP_CSV_HEADER)?;
    for (r, &m) in grid.minutes.iter().enumerate() {
        for (c, &t) in grid.temps.iter().enumerate() {
            wr.write_record([m.to_string(), sig6(t), sig6(grid.get(r, c))])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Q with a fixed advantage for the non-BAU action.
    struct Fixed(f64);

    impl ActionValues for Fixed {
        fn q_values(&self, state: &HouseholdState) -> Result<[f64; 2]> {
            let bau = bau_policy(state, 20.0);
            let mut q = [1.0, 1.0];
            q[bau.flip().index()] += self.0;
            Ok(q)
        }
    }

    fn snap(house: HouseId, temp: f64) -> Snapshot {
        Snapshot {
            house,
            state: HouseholdState::steady(900, 5.0, temp, 4),
            setpoint: 20.0,
        }
    }

    fn table(advs: &[(HouseId, f64)]) -> RankTable {
        let qfns: BTreeMap<HouseId, Fixed> = advs.iter().map(|&(h, a)| (h, Fixed(a))).collect();
        let snaps: Vec<Snapshot> = advs.iter().map(|&(h, _)| snap(h, 20.5)).collect();
        build_rank_table(&qfns, &snaps, Direction::Up).unwrap()
    }

    #[test]
    fn two_household_up_event() {
        let t = table(&[(42, 0.3460), (2, 0.0963)]);
        assert_eq!(t.rank_of(2), Some(1));
        assert_eq!(t.rank_of(42), Some(2));
        assert!(t.entries.iter().all(|e| e.action == Action::On && !e.bau_matches));
    }

    #[test]
    fn single_and_tied() {
        assert_eq!(table(&[(9, 5.0)]).rank_of(9), Some(1));
        let t = table(&[(7, 0.1), (3, 0.1)]);
        assert_eq!(t.rank_of(3), Some(1));
        assert_eq!(t.rank_of(7), Some(2));
    }

    #[test]
    fn bau_matching_houses_rank_first_with_zero_advantage() {
        let qfns: BTreeMap<HouseId, Fixed> = [(1, Fixed(0.2)), (2, Fixed(0.5))].into_iter().collect();
        let snaps = vec![snap(1, 20.5), snap(2, 19.0)];
        let t = build_rank_table(&qfns, &snaps, Direction::Up).unwrap();
        assert_eq!(t.entries[0].house, 2);
        assert!(t.entries[0].bau_matches);
        assert_eq!(t.entries[0].advantage, 0.0);
        let down = build_rank_table(&qfns, &snaps, Direction::Down).unwrap();
        assert_eq!(down.entries[0].house, 1);
        assert_eq!(down.entries[0].action, Action::Off);
    }

    #[test]
    fn missing_q_function_is_a_ranking_error() {
        let qfns: BTreeMap<HouseId, Fixed> = [(1, Fixed(0.2))].into_iter().collect();
        let r = build_rank_table(&qfns, &[snap(1, 20.5), snap(5, 20.5)], Direction::Up);
        assert!(matches!(r, Err(FlexError::Ranking(_))));
    }

    #[test]
    fn heatmap_identities() {
        let sched = SetpointSchedule::flat(20.0).unwrap();
        let temps = temperature_axis(18.0, 22.0, 0.1);
        assert_eq!(temps.len(), 41);
        let g = advantage_heatmap(&Fixed(0.3), 4, 5.0, &sched, &[0, 15, 30], &temps).unwrap();
        for r in 0..3 {
            for (c, &t) in temps.iter().enumerate() {
                let v = g.get(r, c);
                if t <= 20.0 {
                    assert!((v + 0.3).abs() < 1e-12, "BAU ON cell should be −A(OFF)");
                } else {
                    assert!((v - 0.3).abs() < 1e-12, "BAU OFF cell should be A(ON)");
                }
            }
        }
        let b = g.preference_boundary();
        assert_eq!(b[0], (0, 18.0));
        let mut out = Vec::new();
        write_heatmap_csv(&mut out, &g).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("minute,temp_c,dis_advantage_kwh\n0,18,-0.3\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 41);
    }

    #[test]
    fn default_axes_span_schedule() {
        let sched = SetpointSchedule::new(vec![(0, 20.0), (1020, 21.5), (1320, 20.0)]).unwrap();
        let (m, t) = default_axes(&sched);
        assert_eq!(m.len(), 96);
        assert_eq!(t.first().copied(), Some(18.0));
        assert_eq!(t.last().copied(), Some(23.5));
    }

    proptest! {
        #[test]
        fn ranks_are_a_permutation_and_scale_invariant(
            advs in proptest::collection::vec(0.0f64..2.0, 1..12),
            scale in 0.01f64..100.0,
        ) {
            let pairs: Vec<(HouseId, f64)> = advs.iter().enumerate().map(|(i, &a)| (i as HouseId, a)).collect();
            let t = table(&pairs);
            let mut ranks: Vec<u32> = t.entries.iter().map(|e| e.rank).collect();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=advs.len() as u32).collect::<Vec<_>>());
            for w in t.entries.windows(2) {
                prop_assert!(w[0].advantage < w[1].advantage
                    || (w[0].advantage == w[1].advantage && w[0].house < w[1].house));
            }
            let scaled: Vec<(HouseId, f64)> = pairs.iter().map(|&(h, a)| (h, a * scale)).collect();
            let order: Vec<HouseId> = t.entries.iter().map(|e| e.house).collect();
            let order2: Vec<HouseId> = table(&scaled).entries.iter().map(|e| e.house).collect();
            prop_assert_eq!(order, order2);
        }

        #[test]
        fn adding_a_worse_house_keeps_ranks(advs in proptest::collection::vec(0.0f64..2.0, 1..10)) {
            let pairs: Vec<(HouseId, f64)> = advs.iter().enumerate().map(|(i, &a)| (i as HouseId, a)).collect();
            let t = table(&pairs);
            let mut more = pairs.clone();
            more.push((1000, 5.0));
            let t2 = table(&more);
            for e in &t.entries {
                prop_assert_eq!(t2.rank_of(e.house), Some(e.rank));
            }
        }

        #[test]
        fn never_ranks_the_bau_action_as_deviation(temps in proptest::collection::vec(18.0f64..22.0, 1..10)) {
            let qfns: BTreeMap<HouseId, Fixed> = (0..temps.len() as HouseId).map(|h| (h, Fixed(0.4))).collect();
            let snaps: Vec<Snapshot> = temps.iter().enumerate().map(|(i, &t)| snap(i as HouseId, t)).collect();
            for dir in [Direction::Up, Direction::Down] {
                let t = build_rank_table(&qfns, &snaps, dir).unwrap();
                for e in &t.entries {
                    let s = snaps.iter().find(|s| s.house == e.house).unwrap();
                    let bau = bau_policy(&s.state, s.setpoint);
                    prop_assert_eq!(e.bau_matches, bau == e.action);
                    if e.bau_matches {
                        prop_assert_eq!(e.advantage, 0.0);
                    }
                }
            }
        }
    }
}
