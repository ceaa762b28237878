//! MDP vocabulary shared by the simulator, learner and dispatcher: actions, household
//! states, logged transitions, the business-as-usual thermostat policy, step costs and
//! the rolling experience window.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};

pub type HouseId = u32;

pub const MINUTES_PER_DAY: u32 = 1440;
pub const QUARTER_MINUTES: u32 = 15;
pub const QUARTERS_PER_DAY: u32 = MINUTES_PER_DAY / QUARTER_MINUTES;

/// History depth `k`: the state carries `k + 1` room temperatures.
pub const DEFAULT_HISTORY_K: usize = 4;
pub const DEFAULT_WINDOW_DAYS: u32 = 30;

/// Heater command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Off = 0,
    On = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Off, Action::On];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Off
        } else {
            Action::On
        }
    }

    pub fn flip(self) -> Action {
        match self {
            Action::Off => Action::On,
            Action::On => Action::Off,
        }
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s.trim().to_ascii_lowercase().as_str() {
            "on" | "1" => Some(Action::On),
            "off" | "0" => Some(Action::Off),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Off => "OFF",
            Action::On => "ON",
        })
    }
}

/// Partially observable household state: time of day, outdoor temperature and the last
/// `k + 1` room temperatures (oldest first, last entry is the live reading).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdState {
    pub minute_of_day: u16,
    pub outdoor_temp: f64,
    pub room_history: Vec<f64>,
}

impl HouseholdState {
    pub fn new(minute_of_day: u16, outdoor_temp: f64, room_history: Vec<f64>) -> Result<Self> {
        let s = HouseholdState {
            minute_of_day,
            outdoor_temp,
            room_history,
        };
        s.validate()?;
        Ok(s)
    }

    /// State with the room temperature replicated across all `k + 1` history slots.
    pub fn steady(minute_of_day: u16, outdoor_temp: f64, room_temp: f64, k: usize) -> Self {
        HouseholdState {
            minute_of_day,
            outdoor_temp,
            room_history: vec![room_temp; k + 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if u32::from(self.minute_of_day) >= MINUTES_PER_DAY {
            return Err(FlexError::Contract(format!(
                "minute_of_day {} out of range",
                self.minute_of_day
            )));
        }
        if self.room_history.is_empty() {
            return Err(FlexError::Contract("empty room temperature history".into()));
        }
        if !self.outdoor_temp.is_finite() || self.room_history.iter().any(|t| !t.is_finite()) {
            return Err(FlexError::Contract("non-finite temperature in state".into()));
        }
        Ok(())
    }

    pub fn room_temp(&self) -> f64 {
        *self.room_history.last().expect("non-empty history")
    }

    pub fn history_k(&self) -> usize {
        self.room_history.len() - 1
    }
}

/// Thermostat rule: heat while at or below the setpoint.
pub fn bau_policy(state: &HouseholdState, setpoint: f64) -> Action {
    bau_action(state.room_temp(), setpoint)
}

pub fn bau_action(room_temp: f64, setpoint: f64) -> Action {
    if room_temp > setpoint {
        Action::Off
    } else {
        Action::On
    }
}

/// Energy drawn over `dt_min` minutes, in kWh.
pub fn step_cost(action: Action, heater_kw: f64, dt_min: f64) -> f64 {
    debug_assert!(dt_min > 0.0);
    action.as_f64() * heater_kw * dt_min / 60.0
}

/// Instantaneous cluster draw in kW.
pub fn aggregate_power(actions: &[Action], powers_kw: &[f64]) -> Result<f64> {
    if actions.len() != powers_kw.len() {
        return Err(FlexError::Contract(format!(
            "aggregate_power: {} actions vs {} powers",
            actions.len(),
            powers_kw.len()
        )));
    }
    Ok(actions
        .iter()
        .zip(powers_kw)
        .map(|(a, p)| a.as_f64() * p)
        .sum())
}

/// One logged step of a household's daily episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Absolute simulation day.
    pub day: u32,
    /// Step index within the day.
    pub step: u32,
    pub state: HouseholdState,
    pub setpoint: f64,
    pub action: Action,
    /// kWh
    pub cost: f64,
    pub next_state: HouseholdState,
    pub terminal: bool,
}

impl Transition {
    fn key(&self) -> (u32, u32) {
        (self.day, self.step)
    }

    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        self.next_state.validate()?;
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(FlexError::Contract(format!(
                "transition day {} step {} has invalid cost {}",
                self.day, self.step, self.cost
            )));
        }
        if !self.setpoint.is_finite() {
            return Err(FlexError::Contract("non-finite setpoint".into()));
        }
        Ok(())
    }
}

/// Rolling per-household transition store holding at most `window_days` of data.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceBuffer {
    house: HouseId,
    window_days: u32,
    items: VecDeque<Transition>,
}

impl ExperienceBuffer {
    pub fn new(house: HouseId, window_days: u32) -> Self {
        assert!(window_days >= 1, "window must cover at least one day");
        ExperienceBuffer {
            house,
            window_days,
            items: VecDeque::new(),
        }
    }

    pub fn house(&self) -> HouseId {
        self.house
    }

    pub fn window_days(&self) -> u32 {
        self.window_days
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn newest_day(&self) -> Option<u32> {
        self.items.back().map(|t| t.day)
    }

    pub fn oldest_day(&self) -> Option<u32> {
        self.items.front().map(|t| t.day)
    }

    /// Number of distinct days present.
    pub fn days_covered(&self) -> u32 {
        match (self.oldest_day(), self.newest_day()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    /// Appends chronologically ordered transitions and evicts days that fall out of
    /// the window. Rejects the whole batch if it is out of order.
    pub fn push_transitions<I>(&mut self, transitions: I) -> Result<()>
    where
        I: IntoIterator<Item = Transition>,
    {
        let batch: Vec<Transition> = transitions.into_iter().collect();
        let mut last = self.items.back().map(Transition::key);
        for t in &batch {
            if let Some(prev) = last {
                if t.key() <= prev {
                    return Err(FlexError::Contract(format!(
                        "house {}: transition (day {}, step {}) not after (day {}, step {})",
                        self.house, t.day, t.step, prev.0, prev.1
                    )));
                }
            }
            last = Some(t.key());
        }
        self.items.extend(batch);
        if let Some(newest) = self.newest_day() {
            while let Some(front) = self.items.front() {
                if front.day + self.window_days <= newest {
                    self.items.pop_front();
                } else {
                    break;
                }
            }
        }
        Ok(())
    }
}
