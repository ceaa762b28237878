//! Exhaustive tracking optimum for tiny clusters, and the dispatcher run on the same blocks.

use std::collections::BTreeMap;

use rand::Rng;

use crate::dispatch::{comfort_filter, select_activations, square_wave, LiveHouse, PiConfig, PiController};
use crate::error::{FlexError, Result};
use crate::mdp::{bau_action, Action, HouseId, HouseholdState};
use crate::ranker::{build_rank_table, Direction, RankTable, Snapshot};
use crate::seed::substream;
use crate::sim::{rc_update, sample_params, ParamRanges, SetpointSchedule, ThermalParams, COMFORT_BAND};
use crate::toy::{GridSnap, ToyMDP, ToyQ};

pub const BLOCK_MINUTES: u32 = 5;
pub const MAX_SEARCH_BITS: usize = 24;
pub const MAX_HOUSES: usize = 3;
pub const MAX_HORIZON_MIN: u32 = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyHouse {
    pub params: ThermalParams,
    pub room_temp: f64,
    pub setpoint: f64,
}

/// Targets are kW per 5-minute block; outdoor temperature and setpoints are constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub houses: Vec<TinyHouse>,
    pub outdoor_temp: f64,
    pub minute_of_day: u32,
    pub direction: Direction,
    pub target: Vec<f64>,
}

impl TinyInstance {
    pub fn blocks(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.houses.len();
        if n == 0 || n > MAX_HOUSES {
            return Err(FlexError::Oracle(format!("{n} houses; the oracle handles 1..={MAX_HOUSES}")));
        }
        if self.target.is_empty() || self.target.len() as u32 * BLOCK_MINUTES > MAX_HORIZON_MIN {
            return Err(FlexError::Oracle(format!(
                "{} blocks; the oracle handles 1..={} minutes",
                self.target.len(),
                MAX_HORIZON_MIN
            )));
        }
        if n * self.target.len() > MAX_SEARCH_BITS {
            return Err(FlexError::Oracle(format!(
                "search space 2^{} exceeds 2^{MAX_SEARCH_BITS}",
                n * self.target.len()
            )));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(FlexError::Oracle("non-finite target".into()));
        }
        for h in &self.houses {
            h.params.validate()?;
        }
        Ok(())
    }

    fn advance(&self, temps: &mut [f64], actions: &[Action]) -> Result<()> {
        for ((t, h), &a) in temps.iter_mut().zip(&self.houses).zip(actions) {
            for _ in 0..BLOCK_MINUTES {
                *t = rc_update(&h.params, *t, self.outdoor_temp, a, 1)?;
            }
        }
        Ok(())
    }

    fn power(&self, actions: &[Action]) -> f64 {
        actions.iter().zip(&self.houses).map(|(a, h)| a.as_f64() * h.params.heater_kw).sum()
    }

    fn block_error_kwh(&self, b: usize, actions: &[Action]) -> f64 {
        (self.target[b] - self.power(actions)).abs() * f64::from(BLOCK_MINUTES) / 60.0
    }

    /// Per-block aggregate power when every house follows BAU.
    pub fn bau_aggregate(&self) -> Result<Vec<f64>> {
        Ok(self.bau_schedule()?.iter().map(|a| self.power(a)).collect())
    }

    pub fn bau_schedule(&self) -> Result<Vec<Vec<Action>>> {
        let mut temps: Vec<f64> = self.houses.iter().map(|h| h.room_temp).collect();
        let mut out = Vec::with_capacity(self.blocks());
        for _ in 0..self.blocks() {
            let a: Vec<Action> = temps.iter().zip(&self.houses).map(|(&t, h)| bau_action(t, h.setpoint)).collect();
            self.advance(&mut temps, &a)?;
            out.push(a);
        }
        Ok(out)
    }

    pub fn snapshots(&self, history_k: usize) -> Vec<Snapshot> {
        self.houses
            .iter()
            .map(|h| Snapshot {
                house: h.params.id,
                state: HouseholdState::steady(self.minute_of_day as u16, self.outdoor_temp, h.room_temp, history_k),
                setpoint: h.setpoint,
            })
            .collect()
    }

    fn live(&self, temps: &[f64]) -> Vec<LiveHouse> {
        temps
            .iter()
            .zip(&self.houses)
            .map(|(&t, h)| LiveHouse {
                house: h.params.id,
                room_temp: t,
                setpoint: h.setpoint,
                power_kw: h.params.heater_kw,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinySolution {
    /// `[block][house]`
    pub schedule: Vec<Vec<Action>>,
    /// Σ |κ − G| over blocks, kWh.
    pub objective: f64,
    /// Energy drawn minus the all-BAU energy, kWh.
    pub bau_deviation_kwh: f64,
    /// Block decisions that differ from BAU along the schedule's own trajectory.
    pub non_bau_decisions: u32,
}

impl TinySolution {
    fn key(&self) -> (f64, f64, u32) {
        (self.objective, self.bau_deviation_kwh.abs(), self.non_bau_decisions)
    }
}

const TIE_EPS: f64 = 1e-9;

fn better(a: (f64, f64, u32), b: (f64, f64, u32)) -> bool {
    if a.0 < b.0 - TIE_EPS {
        return true;
    }
    if a.0 > b.0 + TIE_EPS {
        return false;
    }
    if a.1 < b.1 - TIE_EPS {
        return true;
    }
    if a.1 > b.1 + TIE_EPS {
        return false;
    }
    a.2 < b.2
}

fn energy_kwh(inst: &TinyInstance, actions: &[Action]) -> f64 {
    inst.power(actions) * f64::from(BLOCK_MINUTES) / 60.0
}

struct Search<'a> {
    inst: &'a TinyInstance,
    bau_energy: f64,
    path: Vec<Vec<Action>>,
    best: Option<TinySolution>,
}

impl Search<'_> {
    fn visit(&mut self, b: usize, temps: &[f64], cost: f64, energy: f64, non_bau: u32) -> Result<()> {
        let inst = self.inst;
        if let Some(best) = &self.best {
            if cost > best.objective + TIE_EPS {
                return Ok(());
            }
        }
        if b == inst.blocks() {
            let cand = TinySolution {
                schedule: self.path.clone(),
                objective: cost,
                bau_deviation_kwh: energy - self.bau_energy,
                non_bau_decisions: non_bau,
            };
            if self.best.as_ref().is_none_or(|best| better(cand.key(), best.key())) {
                self.best = Some(cand);
            }
            return Ok(());
        }
        let n = inst.houses.len();
        let bau: Vec<Action> = temps.iter().zip(&inst.houses).map(|(&t, h)| bau_action(t, h.setpoint)).collect();
        'combo: for mask in 0u32..(1 << n) {
            let actions: Vec<Action> = (0..n).map(|i| if mask >> i & 1 == 1 { Action::On } else { Action::Off }).collect();
            for ((&t, h), &a) in temps.iter().zip(&inst.houses).zip(&actions) {
                let forced_off = t >= h.setpoint + COMFORT_BAND && a == Action::On;
                let forced_on = t <= h.setpoint - COMFORT_BAND && a == Action::Off;
                if forced_off || forced_on {
                    continue 'combo;
                }
            }
            let dev = actions.iter().zip(&bau).filter(|(a, b)| a != b).count() as u32;
            let mut next = temps.to_vec();
            inst.advance(&mut next, &actions)?;
            let c = cost + inst.block_error_kwh(b, &actions);
            let e = energy + energy_kwh(inst, &actions);
            self.path.push(actions);
            self.visit(b + 1, &next, c, e, non_bau + dev)?;
            self.path.pop();
        }
        Ok(())
    }
}

/// Enumerates every comfort-feasible ON/OFF block schedule. Ties go to the smallest
/// energy deviation from BAU, then to the fewest non-BAU decisions.
pub fn exact_dispatch_oracle(inst: &TinyInstance) -> Result<TinySolution> {
    inst.validate()?;
    let bau_energy: f64 = inst.bau_schedule()?.iter().map(|a| energy_kwh(inst, a)).sum();
    let temps: Vec<f64> = inst.houses.iter().map(|h| h.room_temp).collect();
    let mut s = Search {
        inst,
        bau_energy,
        path: Vec::with_capacity(inst.blocks()),
        best: None,
    };
    s.visit(0, &temps, 0.0, 0.0, 0)?;
    s.best
        .ok_or_else(|| FlexError::Oracle("no comfort-feasible schedule".into()))
}

/// The minute dispatcher applied once per block, with a rank table fixed at the start.
pub fn heuristic_dispatch(inst: &TinyInstance, rank: &RankTable, pi: PiConfig) -> Result<TinySolution> {
    inst.validate()?;
    if rank.direction != inst.direction {
        return Err(FlexError::Oracle("rank table direction differs from the instance".into()));
    }
    let bau_energy: f64 = inst.bau_schedule()?.iter().map(|a| energy_kwh(inst, a)).sum();
    let target_action = inst.direction.action();
    let capacity: f64 = inst.houses.iter().map(|h| h.params.heater_kw).sum();
    let mut ctrl = PiController::new(pi, 0.0, capacity);
    let mut temps: Vec<f64> = inst.houses.iter().map(|h| h.room_temp).collect();
    let mut prev_flipped = vec![false; inst.houses.len()];
    let mut out = TinySolution {
        schedule: Vec::with_capacity(inst.blocks()),
        objective: 0.0,
        bau_deviation_kwh: 0.0,
        non_bau_decisions: 0,
    };
    let mut energy = 0.0;
    for (b, &kappa) in inst.target.iter().enumerate() {
        let live = inst.live(&temps);
        let predicted: f64 = live
            .iter()
            .zip(&prev_flipped)
            .map(|(h, &f)| if f { target_action } else { h.bau() }.as_f64() * h.power_kw)
            .sum();
        let command = ctrl.update(inst.direction.sign() * (kappa - predicted), 1.0);
        let sel = select_activations(rank, command, &live)?;
        let (actions, _) = comfort_filter(&sel.actions, &live);
        out.non_bau_decisions += actions.iter().zip(&live).filter(|(a, h)| **a != h.bau()).count() as u32;
        out.objective += inst.block_error_kwh(b, &actions);
        energy += energy_kwh(inst, &actions);
        prev_flipped = sel.flipped.iter().zip(&actions).map(|(&f, &a)| f && a == target_action).collect();
        inst.advance(&mut temps, &actions)?;
        out.schedule.push(actions);
    }
    out.bau_deviation_kwh = energy - bau_energy;
    Ok(out)
}

/// DP-optimal BAU values for each house of an instance, on a fine noisy grid.
pub fn toy_rankers(inst: &TinyInstance) -> Result<BTreeMap<HouseId, ToyQ>> {
    inst.houses
        .iter()
        .map(|h| {
            let toy = ToyMDP::from_rc(
                &h.params,
                inst.outdoor_temp,
                h.setpoint - 3.0,
                0.025,
                240,
                96,
                SetpointSchedule::flat(h.setpoint)?,
                GridSnap::Linear,
            )?
            .with_noise(0.02)?;
            Ok((h.params.id, ToyQ::solve(toy)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub index: usize,
    pub bau_target: bool,
    pub oracle: f64,
    pub heuristic: f64,
}

impl GapResult {
    /// Heuristic over oracle objective; 1 when both are zero.
    pub fn ratio(&self) -> f64 {
        if self.oracle <= TIE_EPS {
            if self.heuristic <= TIE_EPS {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.heuristic / self.oracle
        }
    }
}

/// Seeded two-house, 40-minute instance. Every fifth asks for exactly the BAU aggregate;
/// the rest ask for a square wave of half the flexible capacity.
pub fn random_instance(seed: u64, index: usize) -> Result<TinyInstance> {
    let mut rng = substream(seed, &format!("tiny-{index}"));
    let outdoor_temp = rng.random_range(-5.0..10.0);
    let params = sample_params(&mut rng, &[1, 2], &ParamRanges::default(), -5.0, 22.5)?;
    let houses: Vec<TinyHouse> = params
        .into_iter()
        .map(|p| {
            let setpoint = 20.0 + 0.5 * f64::from(rng.random_range(0..4u8));
            let room_temp = setpoint + rng.random_range(-0.8..0.8);
            TinyHouse {
                params: p,
                room_temp,
                setpoint,
            }
        })
        .collect();
    let direction = if rng.random::<bool>() { Direction::Up } else { Direction::Down };
    let mut inst = TinyInstance {
        houses,
        outdoor_temp,
        minute_of_day: 15 * rng.random_range(0..90u32),
        direction,
        target: vec![0.0; (MAX_HORIZON_MIN / BLOCK_MINUTES) as usize],
    };
    let bau = inst.bau_aggregate()?;
    inst.target = if index.is_multiple_of(5) {
        bau
    } else {
        let live = inst.live(&inst.houses.iter().map(|h| h.room_temp).collect::<Vec<_>>());
        let mut capacity = crate::dispatch::flexible_capacity(&live, direction);
        if capacity == 0.0 {
            capacity = inst.houses.iter().map(|h| h.params.heater_kw).sum();
        }
        square_wave(bau[0], 0.5 * capacity, inst.blocks() as u32, 2, direction)
    };
    Ok(inst)
}

/// Runs oracle and heuristic on `n` seeded instances.
pub fn optimality_gap_suite(seed: u64, n: usize, pi: PiConfig) -> Result<Vec<GapResult>> {
    (0..n)
        .map(|i| {
            let inst = random_instance(seed, i)?;
            let qfns = toy_rankers(&inst)?;
            let rank = build_rank_table(&qfns, &inst.snapshots(0), inst.direction)?;
            let exact = exact_dispatch_oracle(&inst)?;
            let heur = heuristic_dispatch(&inst, &rank, pi)?;
            Ok(GapResult {
                index: i,
                bau_target: i % 5 == 0,
                oracle: exact.objective,
                heuristic: heur.objective,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn house(id: HouseId, temp: f64) -> TinyHouse {
        TinyHouse {
            params: ThermalParams::new(id, 10.0, 5.0, 5.0).unwrap(),
            room_temp: temp,
            setpoint: 20.0,
        }
    }

    fn instance(houses: Vec<TinyHouse>, target: Vec<f64>) -> TinyInstance {
        TinyInstance {
            houses,
            outdoor_temp: 5.0,
            minute_of_day: 600,
            direction: Direction::Up,
            target,
        }
    }

    #[test]
    fn bau_target_gives_zero_with_bau_schedule() {
        let mut inst = instance(vec![house(1, 20.3), house(2, 19.8)], vec![0.0; 6]);
        inst.target = inst.bau_aggregate().unwrap();
        let s = exact_dispatch_oracle(&inst).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.schedule, inst.bau_schedule().unwrap());
        assert_eq!(s.non_bau_decisions, 0);
    }

    #[test]
    fn single_house_full_power_two_blocks() {
        let inst = instance(vec![house(1, 20.2)], vec![5.0, 5.0]);
        let s = exact_dispatch_oracle(&inst).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.schedule, vec![vec![Action::On], vec![Action::On]]);
    }

    #[test]
    fn comfort_bound_is_respected() {
        let inst = instance(vec![house(1, 21.0)], vec![5.0, 5.0]);
        let s = exact_dispatch_oracle(&inst).unwrap();
        assert_eq!(s.schedule[0], vec![Action::Off]);
        assert!((s.objective - 5.0 * 5.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_oversized_searches() {
        let inst = instance(vec![house(1, 20.0), house(2, 20.0), house(3, 20.0), house(4, 20.0)], vec![0.0; 2]);
        assert!(matches!(exact_dispatch_oracle(&inst), Err(FlexError::Oracle(_))));
        let long = instance(vec![house(1, 20.0)], vec![0.0; 9]);
        assert!(exact_dispatch_oracle(&long).is_err());
    }

    #[test]
    fn oracle_matches_brute_force() {
        for seed in 0..5 {
            let mut inst = random_instance(seed, 1).unwrap();
            inst.target.truncate(4);
            let s = exact_dispatch_oracle(&inst).unwrap();
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << 8) {
                let mut temps: Vec<f64> = inst.houses.iter().map(|h| h.room_temp).collect();
                let mut cost = 0.0;
                let mut ok = true;
                for b in 0..4 {
                    let acts: Vec<Action> = (0..2)
                        .map(|h| if mask >> (2 * b + h) & 1 == 1 { Action::On } else { Action::Off })
                        .collect();
                    for (h, a) in acts.iter().enumerate() {
                        let sp = inst.houses[h].setpoint;
                        if (temps[h] >= sp + 1.0 && *a == Action::On) || (temps[h] <= sp - 1.0 && *a == Action::Off) {
                            ok = false;
                        }
                    }
                    let g: f64 = acts.iter().zip(&inst.houses).map(|(a, h)| a.as_f64() * h.params.heater_kw).sum();
                    cost += (inst.target[b] - g).abs() / 12.0;
                    inst.advance(&mut temps, &acts).unwrap();
                }
                if ok {
                    best = best.min(cost);
                }
            }
            assert!((s.objective - best).abs() < 1e-9, "seed {seed}: {} vs {best}", s.objective);
        }
    }

    #[test]
    fn heuristic_is_exact_on_bau_targets() {
        let mut inst = instance(vec![house(1, 20.3), house(2, 19.8)], vec![0.0; 8]);
        inst.target = inst.bau_aggregate().unwrap();
        let qfns = toy_rankers(&inst).unwrap();
        let rank = build_rank_table(&qfns, &inst.snapshots(0), Direction::Up).unwrap();
        let h = heuristic_dispatch(&inst, &rank, PiConfig::default()).unwrap();
        assert_eq!(h.objective, 0.0);
        assert_eq!(h.schedule, inst.bau_schedule().unwrap());
    }
}
