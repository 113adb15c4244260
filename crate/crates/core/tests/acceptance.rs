//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers once its assertions hold.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use simctl_core::elements::{builtin_registry, Registry};
use simctl_core::engine::{run_file, RunOptions};
use simctl_core::linalg::Matrix;
use simctl_core::mna::{
    assemble, build_layout, AssembleMode, Discretization, UnknownLayout,
};
use simctl_core::model::SimModel;
use simctl_core::netlist::{
    flatten, parse_netlist, validate, Method, NetlistDocument, OutVar, SolveKind,
};
use simctl_core::postproc;
use simctl_core::solver::{
    resolve_outvars, startup_solve, transient, NewtonSettings, TransientSettings,
};
use simctl_core::ssw::{period_map, ssw_solve, ShootingSettings, SswStats};
use simctl_core::WaveformSet;
use std::path::PathBuf;
use std::time::Instant;

fn netlist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../netlists")
}

fn load(name: &str) -> NetlistDocument {
    let path = netlist_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    parse_netlist(&text).unwrap()
}

fn build(doc: &NetlistDocument) -> (SimModel, Registry, UnknownLayout) {
    let reg = builtin_registry();
    let flat = flatten(doc, &reg).unwrap();
    let diags = validate(&flat, &reg);
    assert!(diags.is_empty(), "{diags:?}");
    let model = SimModel::build(&flat, &reg).unwrap();
    let layout = build_layout(&model, &reg);
    (model, reg, layout)
}

fn peak_to_peak(v: &[f64]) -> f64 {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let min = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    max - min
}

/// Fixed-step transient of a document's circuit with explicit settings.
fn run_transient(
    doc: &NetlistDocument,
    method: Method,
    t_end: f64,
    dt: f64,
    outvars: &[OutVar],
) -> WaveformSet {
    let (model, reg, layout) = build(doc);
    let op = startup_solve(&model, &reg, &layout, 0.0, &NewtonSettings::default()).unwrap();
    let settings = TransientSettings {
        method,
        t_start: 0.0,
        t_end,
        dt,
        dt_min: dt,
        dt_max: dt,
        variable_step: false,
        newton: NewtonSettings::default(),
        max_flips: 50,
        verbose: false,
    };
    let resolved = resolve_outvars(&model, &reg, &layout, outvars).unwrap();
    let names = outvars.iter().map(|o| o.label()).collect();
    transient(&model, &reg, &layout, &settings, &op, &resolved, names)
        .unwrap()
        .0
}

// criterion 1: RC analytic transient and convergence orders

#[test]
fn criterion_1_rc_analytic_transient() {
    let started = Instant::now();
    let doc = load("rc_step.net");
    let sel = [OutVar::NodeVoltage("out".into())];
    let tau = 1e-3;

    let w = run_transient(&doc, Method::Trapezoidal, 1e-3, 10e-6, &sel);
    let v_end = *w.column("v(out)").unwrap().last().unwrap();
    let expect = 1.0 - (-1.0_f64).exp();
    let defect = (v_end - expect).abs();
    assert!(defect < 1e-4, "v(1ms) = {v_end}, expected {expect}");

    let max_err = |method, dt| {
        let w = run_transient(&doc, method, 5e-3, dt, &sel);
        let v = w.column("v(out)").unwrap();
        w.time
            .iter()
            .zip(v)
            .map(|(&t, &x)| (x - (1.0 - (-t / tau).exp())).abs())
            .fold(0.0, f64::max)
    };
    let be_ratio = max_err(Method::BackwardEuler, 10e-6) / max_err(Method::BackwardEuler, 5e-6);
    let trz_ratio = max_err(Method::Trapezoidal, 10e-6) / max_err(Method::Trapezoidal, 5e-6);
    assert!((1.8..=2.2).contains(&be_ratio), "BE ratio {be_ratio}");
    assert!((3.6..=4.4).contains(&trz_ratio), "TRZ ratio {trz_ratio}");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "runtime {elapsed:.2}s");
    println!(
        "criterion 1 PASS: |v_C(1ms) - (1-1/e)| = {defect:.2e}, order ratios BE {be_ratio:.2} TRZ {trz_ratio:.2}, {elapsed:.2}s"
    );
}

// criterion 2: start-up semantics

#[test]
fn criterion_2_startup_semantics() {
    let opts = RunOptions::default();

    // capacitor pinned at v0 = 10 in a divider
    let report = run_file(&netlist_dir().join("rc_divider_startup.net"), &opts).unwrap();
    let w = &report.waveforms[0];
    let v_mid = w.column("v(mid)").unwrap()[0];
    let i_r = w.column("R1.i").unwrap()[0];
    assert!((v_mid - 10.0).abs() < 1e-9, "v(mid) = {v_mid}");
    assert!((i_r - (20.0 - 10.0) / 1e3).abs() < 1e-12, "i = {i_r}");

    // inductor pinned at i0 = 2 in a resistive loop
    let report = run_file(&netlist_dir().join("inductor_loop_startup.net"), &opts).unwrap();
    let w = &report.waveforms[0];
    assert!((w.column("v(a)").unwrap()[0] + 6.0).abs() < 1e-9);
    assert!((w.column("v(b)").unwrap()[0] - 10.0).abs() < 1e-9);
    assert!((w.column("L1.i").unwrap()[0] - 2.0).abs() < 1e-12);

    // all-zero start-up of the buck: i_L = 0 and v_C = 0 exactly
    let doc = load("buck_d04_l600.net");
    let (model, reg, layout) = build(&doc);
    let op = startup_solve(&model, &reg, &layout, 0.0, &NewtonSettings::default()).unwrap();
    for &slot in &layout.state_slots {
        assert_eq!(op.x[slot], 0.0, "state {} nonzero", layout.slot_name(slot));
    }
    let out_slot = layout.net_slot[model.nets.iter().position(|n| n == "out").unwrap()].unwrap();
    assert!(op.x[out_slot].abs() < 1e-9);

    println!("criterion 2 PASS: divider v=10/i=10mA, loop v(a)=-6 v(b)=10, buck starts at i_L=0 v_C=0");
}

// criterion 3: buck converter transient settling

#[test]
fn criterion_3_buck_transient_settling() {
    for (file, duty) in [
        ("buck_d04_l600.net", 0.4),
        ("buck_d06_l600.net", 0.6),
        ("buck_d06_l200.net", 0.6),
    ] {
        let started = Instant::now();
        let doc = load(file);
        let report = simctl_core::engine::run_document(&doc, &RunOptions::default()).unwrap();
        let elapsed = started.elapsed().as_secs_f64();
        assert!(elapsed < 30.0, "{file}: runtime {elapsed:.1}s");

        let w = report
            .waveforms
            .iter()
            .zip(&report.blocks)
            .find(|(_, b)| b.kind == SolveKind::Transient)
            .unwrap()
            .0;
        let period = 40e-6;
        let window_mean = |t2: f64| {
            postproc::average(&w.time, w.column("v(out)").unwrap(), t2 - period, t2).unwrap()
        };
        let oracle = duty * 12.0;
        let settled_12 = window_mean(12e-3);
        let settled_end = window_mean(16e-3);
        let rel_12 = (settled_12 - oracle).abs() / oracle;
        let rel_end = (settled_end - oracle).abs() / oracle;
        assert!(rel_end < 0.02, "{file}: mean {settled_end} vs {oracle}");
        assert!(rel_12 < 0.02, "{file}: not settled by 12 ms ({settled_12} vs {oracle})");
        assert!(
            (settled_12 - settled_end).abs() / oracle < 0.005,
            "{file}: still moving after 12 ms"
        );
        println!(
            "criterion 3 PASS: {file} settled mean {settled_end:.4} V vs oracle {oracle:.2} V ({:.2}%), {elapsed:.1}s",
            rel_end * 100.0
        );
    }
}

// criterion 4: shooting equals the settled transient, and is cheap

struct SswCase {
    file: &'static str,
    signals: &'static [&'static str],
    cycles: usize,
}

fn ssw_against_brute_force(case: &SswCase) {
    let doc = load(case.file);
    let (model, reg, layout) = build(&doc);
    let sb = doc
        .solve_blocks
        .iter()
        .find(|s| s.kind == SolveKind::Ssw)
        .unwrap();
    let settings = ShootingSettings::from_solve_block(sb).unwrap();
    let outvars = resolve_outvars(&model, &reg, &layout, &sb.outvars).unwrap();
    let names: Vec<String> = sb.outvars.iter().map(|o| o.label()).collect();
    let s0 = vec![0.0; layout.n_states];
    let (ssw_waves, stats) =
        ssw_solve(&model, &reg, &layout, &s0, &settings, &outvars, &names).unwrap();
    assert!(
        stats.periods_integrated <= 15,
        "{}: {} integrated periods",
        case.file,
        stats.periods_integrated
    );

    // brute force: settle for `cycles` periods at the same step and method
    let period = settings.period;
    let t_end = period * case.cycles as f64;
    let dt = period / settings.steps as f64;
    let trans = run_transient(&doc, settings.method, t_end, dt, &sb.outvars);

    let per_period = ssw_waves.len() - 1;
    assert_eq!(
        (trans.len() - 1) % per_period,
        0,
        "{}: grids not congruent ({} vs {})",
        case.file,
        trans.len(),
        ssw_waves.len()
    );
    let offset = trans.len() - 1 - per_period;
    for signal in case.signals {
        let s = ssw_waves.column(signal).unwrap();
        let b = trans.column(signal).unwrap();
        let tol = 1e-3 * peak_to_peak(s);
        let mut worst = 0.0_f64;
        for j in 0..=per_period {
            worst = worst.max((s[j] - b[offset + j]).abs());
        }
        assert!(
            worst <= tol,
            "{} {}: worst defect {worst:.3e} vs tol {tol:.3e}",
            case.file,
            signal
        );
        println!(
            "criterion 4 PASS: {} {} matches cycle {} within {:.2e} (tol {:.2e}), {} integrated periods",
            case.file, signal, case.cycles, worst, tol, stats.periods_integrated
        );
    }
}

#[test]
fn criterion_4a_sine_rc_ssw() {
    ssw_against_brute_force(&SswCase {
        file: "rc_sine_ssw.net",
        signals: &["v(out)"],
        cycles: 400,
    });
}

#[test]
fn criterion_4b_buck_ssw() {
    for file in ["buck_d04_l600.net", "buck_d06_l600.net", "buck_d06_l200.net"] {
        ssw_against_brute_force(&SswCase {
            file,
            signals: &["v(out)", "L1.i"],
            cycles: 400,
        });
    }
}

// criterion 5: monodromy chain rule against central finite differences

#[test]
fn criterion_5_monodromy_oracle() {
    for file in [
        "rc_sine_ssw.net",
        "buck_d04_l600.net",
        "buck_d06_l600.net",
        "buck_d06_l200.net",
        "npc_inverter.net",
    ] {
        let doc = load(file);
        let (model, reg, layout) = build(&doc);
        let sb = doc
            .solve_blocks
            .iter()
            .find(|s| s.kind == SolveKind::Ssw)
            .unwrap();
        let settings = ShootingSettings::from_solve_block(sb).unwrap();
        // chain-rule sensitivities of one period map from the start-up
        // state, against a central-difference probe of the same map
        let mut stats = SswStats::default();
        let s0 = vec![0.0; layout.n_states];
        let pm = period_map(
            &model, &reg, &layout, &s0, &settings, &[], &[], true, &mut stats,
        )
        .unwrap();
        let m = layout.n_states;
        let mut fd = Matrix::zeros(m, m);
        for j in 0..m {
            let eps = 1e-6 * (1.0 + s0[j].abs());
            let mut sp = s0.clone();
            sp[j] += eps;
            let mut sm = s0.clone();
            sm[j] -= eps;
            let pp =
                period_map(&model, &reg, &layout, &sp, &settings, &[], &[], false, &mut stats)
                    .unwrap();
            let pmm =
                period_map(&model, &reg, &layout, &sm, &settings, &[], &[], false, &mut stats)
                    .unwrap();
            for i in 0..m {
                fd[(i, j)] = (pp.s_t[i] - pmm.s_t[i]) / (2.0 * eps);
            }
        }
        let mut diff = fd.clone();
        for i in 0..m {
            for j in 0..m {
                diff[(i, j)] -= pm.monodromy[(i, j)];
            }
        }
        let rel = diff.norm_inf() / fd.norm_inf().max(1e-3);
        assert!(rel < 1e-3, "{file}: monodromy defect {rel:.2e}");
        println!(
            "criterion 5 PASS: {file} |M_chain - M_fd| relative {rel:.2e} (|M| = {:.3})",
            pm.monodromy.norm_inf()
        );
    }
}

// criterion 6: post-processing numbers

#[test]
fn criterion_6_postprocessing() {
    // square-wave THD at K = 49 against the partial-sum oracle
    let n = 2000;
    let time: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let square: Vec<f64> = time
        .iter()
        .map(|&t| {
            let u = t.rem_euclid(1.0);
            let d = (u - 0.5).abs().min(u.min(1.0 - u));
            if d < 1e-12 {
                0.0
            } else if u < 0.5 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let spectrum = postproc::fourier(&time, &square, 0.0, 1.0, 49).unwrap();
    let got = postproc::thd(&spectrum).unwrap();
    let oracle: f64 = (3..=49)
        .step_by(2)
        .map(|k| 1.0 / (k as f64 * k as f64))
        .sum::<f64>()
        .sqrt();
    assert!((got - oracle).abs() < 1e-3, "thd {got} vs oracle {oracle}");

    // rms of a sine over one period at 2000 points
    let sine: Vec<f64> = time.iter().map(|&t| (2.0 * std::f64::consts::PI * t).sin()).collect();
    let r = postproc::rms(&time, &sine, 0.0, 1.0).unwrap();
    let rms_defect = (r - 1.0 / 2.0_f64.sqrt()).abs();
    assert!(rms_defect < 1e-6, "rms(sin) = {r}");

    // Parseval on simulated waveforms: buck output voltage and npc load
    // current over one steady-state period
    let mut parseval = Vec::new();
    for (file, signal) in [("buck_d04_l600.net", "v(out)"), ("npc_inverter.net", "LL.i")] {
        let doc = load(file);
        let report = simctl_core::engine::run_document(&doc, &RunOptions::default()).unwrap();
        let (w, _) = report
            .waveforms
            .iter()
            .zip(&report.blocks)
            .find(|(_, b)| b.kind == SolveKind::Ssw)
            .unwrap();
        let v = w.column(signal).unwrap();
        let period = w.t_end() - w.t_start();
        let s = postproc::fourier(&w.time, v, w.t_start(), period, 100).unwrap();
        let r = postproc::rms(&w.time, v, w.t_start(), w.t_end()).unwrap();
        let sum = s.a0 * s.a0 + 0.5 * s.harmonics.iter().map(|&(_, m, _)| m * m).sum::<f64>();
        let rel = (r * r - sum).abs() / (r * r);
        assert!(rel < 5e-3, "{file} {signal}: parseval defect {rel:.3e}");
        if signal == "v(out)" {
            // steady buck output averages to the duty relation
            assert!((s.a0 - 4.8).abs() / 4.8 < 0.02, "buck ssw a0 = {}", s.a0);
        }
        parseval.push(format!("{file} {signal} {:.2e}", rel));
    }

    println!(
        "criterion 6 PASS: THD(49) {got:.4} vs oracle {oracle:.4}, rms(sin) defect {rms_defect:.1e}, parseval [{}]",
        parseval.join(", ")
    );
}

// criterion 7: three-level inverter structure

#[test]
fn criterion_7_npc_inverter() {
    let report = run_file(&netlist_dir().join("npc_inverter.net"), &RunOptions::default()).unwrap();
    let w = &report.waveforms[0];
    let v = w.column("v(out)").unwrap();
    let i = w.column("LL.i").unwrap();
    let vdc_half = 200.0;

    // level-set test: every phase-voltage sample sits on one of three
    // levels, and all three are visited substantially
    let tol = 0.01 * vdc_half;
    let mut counts = [0usize; 3];
    for &x in v {
        let level = [-vdc_half, 0.0, vdc_half]
            .iter()
            .position(|&l| (x - l).abs() < tol);
        match level {
            Some(k) => counts[k] += 1,
            None => panic!("sample {x} outside the three levels"),
        }
    }
    let total = v.len();
    assert!(counts[0] > total / 10, "negative level underpopulated: {counts:?}");
    assert!(counts[2] > total / 10, "positive level underpopulated: {counts:?}");
    assert!(counts[1] > total / 5, "zero level underpopulated: {counts:?}");

    // load-current spectrum: fundamental dominates
    let period = 20e-3;
    let spectrum = postproc::fourier(&w.time, i, 0.0, period, 50).unwrap();
    let c1 = spectrum.magnitude(1);
    let max_other = spectrum.harmonics[1..]
        .iter()
        .map(|&(_, m, _)| m)
        .fold(0.0, f64::max);
    assert!(c1 > 2.0 * max_other, "fundamental {c1} vs max harmonic {max_other}");
    let thd = postproc::thd(&spectrum).unwrap();
    assert!(thd > 0.0 && thd < 1.0, "thd {thd}");

    println!(
        "criterion 7 PASS: levels populated {counts:?}, fundamental {c1:.3} A, max harmonic {max_other:.3} A, THD {thd:.4}"
    );
}

// criterion 8: assembled Jacobian against finite differences

struct SplitMix(u64);

impl SplitMix {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z as f64 / u64::MAX as f64) * 2.0 - 1.0
    }
}

#[test]
fn criterion_8_jacobian_suite() {
    use simctl_core::elements::Kind;
    let files = [
        "rc_step.net",
        "rc_divider_startup.net",
        "inductor_loop_startup.net",
        "lc_oscillator.net",
        "rc_sine_ssw.net",
        "buck_d04_l600.net",
        "buck_d06_l600.net",
        "buck_d06_l200.net",
        "buck_dcm.net",
        "npc_inverter.net",
    ];
    let mut rng = SplitMix(0x5eed_5eed_5eed_5eed);
    for file in files {
        let doc = load(file);
        let (model, reg, layout) = build(&doc);
        let n = layout.size();

        // per-slot magnitudes: states live at their element's natural
        // charge/flux scale
        let mut scales = vec![2.0; n];
        for (ii, inst) in model.instances.iter().enumerate() {
            let tpl = reg.get(inst.template);
            if matches!(tpl.kind, Kind::Capacitor | Kind::Inductor) {
                for k in 0..tpl.n_states() {
                    scales[layout.inst_state_base[ii] + k] = 2.0 * inst.rparms[0];
                }
            }
        }
        let diode_kink_ok = |x: &[f64]| {
            model.instances.iter().all(|inst| {
                if reg.get(inst.template).kind != Kind::DiodePwl {
                    return true;
                }
                let vp = layout.net_slot[inst.nodes[0]].map(|s| x[s]).unwrap_or(0.0);
                let vn = layout.net_slot[inst.nodes[1]].map(|s| x[s]).unwrap_or(0.0);
                (vp - vn).abs() > 1e-4
            })
        };

        let h = 1e-6;
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let x: Vec<f64> = loop {
                let cand: Vec<f64> = scales.iter().map(|s| s * rng.next_f64()).collect();
                if diode_kink_ok(&cand) {
                    break cand;
                }
            };
            let t = rng.next_f64().abs() * 20e-3;
            let gates = model.sample_gates(t);
            let disc = Discretization {
                alpha: 1.0 / h,
                beta: (0..layout.n_states).map(|_| rng.next_f64() / h * 1e-6).collect(),
            };
            let state_old = vec![0.0; layout.n_states];
            let sys = assemble(
                &model,
                &reg,
                &layout,
                &x,
                AssembleMode::Transient { disc: &disc },
                &gates,
                t,
                &state_old,
            )
            .unwrap();

            for j in 0..n {
                let eps = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                xp[j] += eps;
                let mut xm = x.clone();
                xm[j] -= eps;
                if !diode_kink_ok(&xp) || !diode_kink_ok(&xm) {
                    continue;
                }
                let rp = assemble(
                    &model, &reg, &layout, &xp, AssembleMode::Transient { disc: &disc }, &gates,
                    t, &state_old,
                )
                .unwrap();
                let rm = assemble(
                    &model, &reg, &layout, &xm, AssembleMode::Transient { disc: &disc }, &gates,
                    t, &state_old,
                )
                .unwrap();
                for i in 0..n {
                    let fd = (rp.residual[i] - rm.residual[i]) / (2.0 * eps);
                    let a = sys.jacobian[(i, j)];
                    // floor from the cancellation limit of central
                    // differences at this row's magnitude
                    let row_scale = rp.residual[i].abs().max(rm.residual[i].abs()).max(1e-30);
                    let noise = 8.0 * f64::EPSILON * row_scale / (2.0 * eps);
                    let tol = 1e-5 * a.abs().max(fd.abs()) + 4.0 * noise;
                    let defect = (a - fd).abs();
                    if defect > 0.0 {
                        worst = worst.max(defect / tol);
                    }
                    assert!(
                        defect <= tol,
                        "{file}: J[{i},{j}] = {a} vs fd {fd} (defect {defect:.3e}, tol {tol:.3e})"
                    );
                }
            }
        }
        println!("criterion 8 PASS: {file} Jacobian matches finite differences (worst defect at {:.0}% of tolerance)", worst * 100.0);
    }
}

// criterion 9: byte-identical reruns

#[test]
fn criterion_9_determinism() {
    let names: Vec<String> = std::fs::read_dir(netlist_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".net"))
        .collect();
    assert!(!names.is_empty());
    let mut checked = 0;
    for name in &names {
        let run_once = || {
            let dir = tempfile::tempdir().unwrap();
            let options = RunOptions {
                write_files: true,
                base_dir: dir.path().to_path_buf(),
                ..Default::default()
            };
            let doc = load(name);
            let report = simctl_core::engine::run_document(&doc, &options).unwrap();
            let mut outputs = Vec::new();
            for b in &report.blocks {
                if let Some(path) = &b.out_file {
                    outputs.push((path.file_name().unwrap().to_owned(), std::fs::read(path).unwrap()));
                }
            }
            outputs
        };
        let a = run_once();
        let b = run_once();
        assert_eq!(a.len(), b.len(), "{name}");
        for ((fa, da), (fb, db)) in a.iter().zip(&b) {
            assert_eq!(fa, fb, "{name}");
            assert!(da == db, "{name}: {fa:?} differs between runs");
            checked += 1;
        }
    }
    println!("criterion 9 PASS: {checked} output files byte-identical across reruns of {} netlists", names.len());
}
