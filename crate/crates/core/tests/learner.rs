use flexgrid_core::fqi::{fqi_fit_transitions, FqiConfig};
use flexgrid_core::regress::{ExtraTreesConfig, RegressorSpec};
use flexgrid_core::sim::{SetpointSchedule, ThermalParams};
use flexgrid_core::toy::{agreement, dp_oracle, GridSnap, ToyMDP};
use flexgrid_core::Transition;

fn toy() -> ToyMDP {
    let p = ThermalParams::new(1, 12.0, 4.0, 5.0).unwrap();
    let sched = SetpointSchedule::new(vec![(0, 20.0), (240, 21.0)]).unwrap();
    ToyMDP::from_rc(&p, 2.0, 18.8, 0.25, 12, 24, sched, GridSnap::Nearest).unwrap()
}

fn sup_error(toy: &ToyMDP, iterations: usize) -> f64 {
    let transitions = toy.exhaustive_transitions().unwrap();
    let refs: Vec<&Transition> = transitions.iter().collect();
    let cfg = FqiConfig {
        iterations,
        regressor: RegressorSpec::ExtraTrees(ExtraTreesConfig { n_trees: 20, min_leaf: 1 }),
    };
    let (q, _) = fqi_fit_transitions(1, &refs, &toy.setpoints, &cfg, 4).unwrap();
    agreement(toy, &dp_oracle(toy).unwrap(), &q, 0.05).unwrap().max_abs_error
}

#[test]
fn sup_error_shrinks_over_final_iterations() {
    let toy = toy();
    let errs: Vec<f64> = (toy.horizon - 2..=toy.horizon).map(|it| sup_error(&toy, it)).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    assert!(errs[2] <= 0.02, "{errs:?}");
}

#[test]
fn truncated_iteration_leaves_a_gap() {
    let toy = toy();
    assert!(sup_error(&toy, toy.horizon / 2) > 0.02);
}
