use std::sync::Arc;

use emsfem::exec::Threading;
use emsfem::harness::suite::build_cell_spaces;
use emsfem::harness::{run_multiscale, ExperimentConfig, FineSetup};
use emsfem::integrate::{
    backward_euler_reference, run_exponential, ExpEulerIntegrator, ReferenceOptions, ReferenceSpecies, Species,
    VelocityUpdate,
};

const DECAYING: &str = r#"
name = "decaying"
seed = 1

[domain]
bounds = [-1.0, 1.0, -1.0, 1.0]

[mesh]
fine_exponent = 4
coarse_exponents = [2]
levels = [1]

[time]
dt = 0.01
t_final = 0.05

[reaction]
model = "allen_cahn"
eps = 0.2

[[species]]
kappa = { preset = "constant", value = 1.0 }
velocity = { preset = "exp_rot", modulation = "exp_decay" }
initial = { preset = "trig", amplitude = 1.0, kx = 1.0, ky = 1.0 }
"#;

fn builds(update: VelocityUpdate) -> (usize, Vec<f64>) {
    let mut cfg = ExperimentConfig::from_toml_str(DECAYING).unwrap();
    cfg.time.velocity_update = update;
    let setup = FineSetup::build(&cfg).unwrap();
    let run = run_multiscale(&cfg, &setup, 2, 1, false, Threading::Sequential).unwrap();
    (run.propagator_builds, run.final_fields[0].clone())
}

#[test]
fn propagator_rebuilds_follow_the_update_mode() {
    let (refresh, u_refresh) = builds(VelocityUpdate::Refresh);
    let (frozen, _) = builds(VelocityUpdate::Frozen);
    let (split, u_split) = builds(VelocityUpdate::Split);
    assert_eq!(refresh, 5, "one propagator per distinct g(t^n)");
    assert_eq!(frozen, 1);
    assert_eq!(split, 1);
    let diff = u_refresh.iter().zip(&u_split).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-3, "split and refresh differ by {diff}");
}

#[test]
fn constant_velocity_reuses_one_propagator() {
    let cfg = ExperimentConfig::from_toml_str(&DECAYING.replace(", modulation = \"exp_decay\"", "")).unwrap();
    let setup = FineSetup::build(&cfg).unwrap();
    let cell = build_cell_spaces(&cfg, &setup, 2, 1, Threading::Sequential).unwrap();
    let sp = Species {
        space: &cell.spaces[0],
        fine: &setup.ops[0],
        modulation: cfg.species[0].velocity.modulation,
        lift: 0.0,
        convective: true,
    };
    let c0 = sp.project_initial(&setup.initial[0]);
    let mut integ = ExpEulerIntegrator::new(vec![sp], cfg.reaction.clone().into(), cfg.time.dt, VelocityUpdate::Refresh).unwrap();
    let a = integ.propagator(0, 1.0).unwrap();
    let b = integ.propagator(0, 1.0).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    let states = run_exponential(&mut integ, vec![c0], cfg.time.t_final, 2, |_, _| Ok(())).unwrap();
    assert_eq!(integ.propagator_builds(), 1);
    assert_eq!(states.iter().map(|s| s.step).collect::<Vec<_>>(), [0, 2, 4, 5]);
}

#[test]
fn threading_modes_agree_bit_for_bit() {
    let cfg = ExperimentConfig::from_toml_str(DECAYING).unwrap();
    let setup = FineSetup::build(&cfg).unwrap();
    let a = run_multiscale(&cfg, &setup, 2, 1, true, Threading::Sequential).unwrap();
    let b = run_multiscale(&cfg, &setup, 2, 1, true, Threading::Parallel).unwrap();
    assert_eq!(a.final_fields, b.final_fields);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn reference_keeps_the_last_step() {
    let cfg = ExperimentConfig::from_toml_str(DECAYING).unwrap();
    let setup = FineSetup::build(&cfg).unwrap();
    let sp = ReferenceSpecies {
        fine: &setup.ops[0],
        modulation: cfg.species[0].velocity.modulation,
        lift: 0.0,
        convective: true,
    };
    let mut opts = ReferenceOptions::new(cfg.time.dt, cfg.time.t_final);
    opts.stride = 2;
    let (traj, stats) = backward_euler_reference(&[sp], &cfg.reaction.clone().into(), setup.initial.clone(), &opts).unwrap();
    assert_eq!(traj.iter().map(|s| s.step).collect::<Vec<_>>(), [0, 2, 4, 5]);
    assert!((traj.last().unwrap().t - 0.05).abs() < 1e-15);
    assert!(stats.max_iterations <= 25);
}
