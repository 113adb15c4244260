//! Every shipped example netlist parses, validates and runs.

use simctl_core::engine::{run_file, RunOptions};
use std::path::PathBuf;

fn netlist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../netlists")
}

#[test]
fn startup_examples_solve_to_hand_values() {
    let opts = RunOptions::default();
    let report = run_file(&netlist_dir().join("rc_divider_startup.net"), &opts).unwrap();
    let w = &report.waveforms[0];
    assert!((w.column("v(mid)").unwrap()[0] - 10.0).abs() < 1e-9);
    assert!((w.column("R1.i").unwrap()[0] - 0.01).abs() < 1e-12);

    let report = run_file(&netlist_dir().join("inductor_loop_startup.net"), &opts).unwrap();
    let w = &report.waveforms[0];
    assert!((w.column("v(a)").unwrap()[0] + 6.0).abs() < 1e-9);
    assert!((w.column("v(b)").unwrap()[0] - 10.0).abs() < 1e-9);
    assert!((w.column("L1.i").unwrap()[0] - 2.0).abs() < 1e-12);
}

#[test]
fn rc_step_netlist_matches_analytic_charging() {
    let report = run_file(&netlist_dir().join("rc_step.net"), &RunOptions::default()).unwrap();
    let w = &report.waveforms[0];
    let v = w.column("v(out)").unwrap();
    for (i, &t) in w.time.iter().enumerate() {
        let expect = 1.0 - (-t / 1e-3).exp();
        assert!((v[i] - expect).abs() < 1e-4, "t={t}: {} vs {expect}", v[i]);
    }
}

#[test]
fn rc_sine_ssw_netlist_converges() {
    let report =
        run_file(&netlist_dir().join("rc_sine_ssw.net"), &RunOptions::default()).unwrap();
    let b = &report.blocks[0];
    assert!(b.ssw_periods_integrated <= 5, "{} periods", b.ssw_periods_integrated);
    let w = &report.waveforms[0];
    let amp = w.column("v(out)").unwrap().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let wrc = 2.0 * std::f64::consts::PI;
    let expect = 1.0 / (1.0 + wrc * wrc).sqrt();
    assert!((amp - expect).abs() < 2e-3 * expect, "amp {amp} vs {expect}");
}

#[test]
fn buck_ssw_netlist_converges_quickly() {
    let report =
        run_file(&netlist_dir().join("buck_d04_l600.net"), &RunOptions::default()).unwrap();
    // blocks: startup, trns, ssw
    assert_eq!(report.blocks.len(), 3);
    let ssw = &report.blocks[2];
    assert!(
        ssw.ssw_periods_integrated <= 15,
        "{} integrated periods",
        ssw.ssw_periods_integrated
    );
    let w = &report.waveforms[2];
    let vo = w.column("v(out)").unwrap();
    let mean = vo.iter().sum::<f64>() / vo.len() as f64;
    assert!((mean - 4.8).abs() < 0.1, "mean v(out) = {mean}");
    // periodicity
    let il = w.column("L1.i").unwrap();
    assert!((il[0] - il[il.len() - 1]).abs() < 1e-6, "i_L defect");
}

#[test]
fn npc_ssw_netlist_runs_three_level() {
    let report =
        run_file(&netlist_dir().join("npc_inverter.net"), &RunOptions::default()).unwrap();
    let w = &report.waveforms[0];
    let v = w.column("v(out)").unwrap();
    let near = |x: f64, level: f64| (x - level).abs() < 2.0;
    assert!(v.iter().all(|&x| near(x, -200.0) || near(x, 0.0) || near(x, 200.0)));
    assert!(v.iter().filter(|&&x| near(x, 200.0)).count() > v.len() / 10);
    assert!(v.iter().filter(|&&x| near(x, -200.0)).count() > v.len() / 10);
    assert!(v.iter().filter(|&&x| near(x, 0.0)).count() > v.len() / 5);
}

#[test]
fn lc_oscillator_conserves_energy_under_trapezoidal() {
    let report =
        run_file(&netlist_dir().join("lc_oscillator.net"), &RunOptions::default()).unwrap();
    let w = &report.waveforms[0];
    let v = w.column("v(a)").unwrap();
    let i = w.column("L1.i").unwrap();
    // C = L = 1, start at v = 1, i = 0: E = 0.5 throughout
    let e0 = 0.5;
    let mut worst = 0.0_f64;
    for k in 0..w.len() {
        let e = 0.5 * v[k] * v[k] + 0.5 * i[k] * i[k];
        worst = worst.max((e - e0).abs() / e0);
    }
    assert!(worst < 1e-6, "energy drift {worst:.2e} over 100 cycles");
}

#[test]
fn buck_dcm_current_touches_zero() {
    let report = run_file(&netlist_dir().join("buck_dcm.net"), &RunOptions::default()).unwrap();
    let w = &report.waveforms[0];
    let il = w.column("L1.i").unwrap();
    let peak = il.iter().fold(0.0_f64, |m, &v| m.max(v));
    let min = il.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    assert!(peak > 0.2, "peak {peak}");
    assert!(min.abs() < 0.01 * peak, "min {min} vs peak {peak}");
    // discontinuous conduction boosts the output above D*V_in
    let vo = w.column("v(out)").unwrap();
    let mean = vo.iter().sum::<f64>() / vo.len() as f64;
    assert!(mean > 7.2 * 1.05, "mean {mean}");
}
