//! Shared fixtures for the criterion benches.

use std::collections::BTreeMap;

use flexgrid_core::fqi::{fqi_fit, FqiConfig, QFunction};
use flexgrid_core::mdp::{ExperienceBuffer, HouseId, DEFAULT_HISTORY_K};
use flexgrid_core::regress::{ExtraTreesConfig, RegressorSpec};
use flexgrid_core::seed::{substream, substream_seed};
use flexgrid_core::sim::{
    make_setpoints, make_weather, sample_params, simulate_period, Bau, Cluster, HouseSim, ParamRanges,
    SetpointProfile, SetpointSchedule, WeatherConfig, WeatherTrace,
};

pub const WARMUP_DAYS: u32 = 30;

/// A cluster after a BAU warm-up, with weather for one more day and each house's buffer.
pub struct Fixture {
    pub cluster: Cluster,
    pub weather: WeatherTrace,
    pub buffers: Vec<ExperienceBuffer>,
    pub schedules: Vec<SetpointSchedule>,
}

pub fn warm_cluster(n: u32, seed: u64) -> Fixture {
    let ids: Vec<HouseId> = (1..=n).collect();
    let profiles: Vec<SetpointProfile> = ids
        .iter()
        .map(|id| if id % 2 == 1 { SetpointProfile::evening_step() } else { SetpointProfile::Flat })
        .collect();
    let schedules: Vec<SetpointSchedule> = ids
        .iter()
        .zip(&profiles)
        .map(|(id, p)| make_setpoints(p, 20.0, substream_seed(seed, &format!("setpoints-{id}"))).unwrap())
        .collect();
    let params = sample_params(&mut substream(seed, "params"), &ids, &ParamRanges::default(), -5.0, 21.5).unwrap();
    let sims = params
        .into_iter()
        .zip(&schedules)
        .map(|(p, s)| HouseSim::new(p, s.at(0), s.clone()).unwrap())
        .collect();
    let mut cluster = Cluster::new(sims, DEFAULT_HISTORY_K, 0.02, substream_seed(seed, "noise")).unwrap();
    let weather = make_weather(substream_seed(seed, "weather"), WARMUP_DAYS + 1, 15, &WeatherConfig::default()).unwrap();
    let mut policies = vec![Bau; ids.len()];
    let logs = simulate_period(&mut cluster, &mut policies, &weather, WARMUP_DAYS, 15).unwrap();
    let buffers = ids
        .iter()
        .zip(logs)
        .map(|(&id, eps)| {
            let mut b = ExperienceBuffer::new(id, WARMUP_DAYS);
            for ep in eps {
                b.push_transitions(ep.transitions).unwrap();
            }
            b
        })
        .collect();
    Fixture {
        cluster,
        weather,
        buffers,
        schedules,
    }
}

/// A cheaper regressor than the default, for benches that only need some fitted model.
pub fn light_fqi() -> FqiConfig {
    FqiConfig {
        iterations: 5,
        regressor: RegressorSpec::ExtraTrees(ExtraTreesConfig { n_trees: 10, min_leaf: 5 }),
    }
}

pub fn fit_all(fx: &Fixture, cfg: &FqiConfig) -> BTreeMap<HouseId, QFunction> {
    fx.buffers
        .iter()
        .zip(&fx.schedules)
        .map(|(b, s)| (b.house(), fqi_fit(b, s, cfg, 1).unwrap().0))
        .collect()
}
