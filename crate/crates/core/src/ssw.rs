//! Direct periodic steady-state computation: shooting Newton on the
//! state variables.
//!
//! One evaluation integrates the circuit over a single period from a
//! trial state vector, propagating the sensitivity of the final state to
//! the initial state (the monodromy matrix M) alongside. The shooting
//! update solves `(M - I) delta = -(s_T - s_0)`, converging to the
//! periodic orbit in a handful of integrated periods instead of the
//! hundreds a settling transient costs.
//!
//! Sensitivities propagate by the chain rule through each step's
//! Jacobian with the switching pattern frozen; a finite-difference
//! fallback covers circuits whose diode conduction boundaries move with
//! the state (discontinuous conduction).

use crate::elements::Registry;
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, Matrix};
use crate::mna::{AssembledSystem, AssembleMode, AssemblyScratch, UnknownLayout};
use crate::model::SimModel;
use crate::netlist::{Method, SolveBlock, SswSensitivity};
use crate::solver::{
    consistency_solve, newton_solve, output_values, Integrator, NewtonSettings, ResolvedOutVar,
};
use crate::waveform::WaveformSet;

/// Configuration of one shooting run.
#[derive(Debug, Clone)]
pub struct ShootingSettings {
    pub period: f64,
    /// Fixed integration steps per period (`period / dt`).
    pub steps: usize,
    pub method: Method,
    pub t0: f64,
    pub tol_ssw: f64,
    pub maxiter_ssw: usize,
    pub sensitivity: SswSensitivity,
    pub newton: NewtonSettings,
}

impl ShootingSettings {
    pub fn from_solve_block(sb: &SolveBlock) -> Result<Self> {
        Ok(ShootingSettings {
            period: sb.period.ok_or_else(|| Error::Ssw {
                message: "solve block has no period".into(),
            })?,
            steps: sb.ssw_steps()?,
            method: sb.method,
            t0: sb.t_start,
            tol_ssw: sb.tol_ssw,
            maxiter_ssw: sb.maxiter_ssw,
            sensitivity: sb.ssw_sensitivity,
            newton: NewtonSettings {
                tol_residual: sb.tol_nr,
                maxiter: sb.maxiter_nr,
                ..Default::default()
            },
        })
    }
}

/// One period of integration from a trial initial state.
#[derive(Debug, Clone)]
pub struct PeriodMapResult {
    /// State vector after one period.
    pub s_t: Vec<f64>,
    /// Sensitivity d s(T) / d s(0), empty when not requested.
    pub monodromy: Matrix,
    pub waveforms: WaveformSet,
}

/// Statistics of a shooting solve.
#[derive(Debug, Clone, Default)]
pub struct SswStats {
    pub newton_iterations: usize,
    pub periods_integrated: usize,
    pub nr_iterations: usize,
    /// `|s_T - s_0|_inf` per shooting iteration.
    pub residual_history: Vec<f64>,
}

/// The constant matrix of d(state)/dt coefficients: rows over the
/// layout, one column per state ordinal.
fn dstate_matrix(model: &SimModel, registry: &Registry, layout: &UnknownLayout) -> Matrix {
    let mut c = Matrix::zeros(layout.size(), layout.n_states);
    for (ii, inst) in model.instances.iter().enumerate() {
        let tpl = registry.get(inst.template);
        for d in &tpl.dstate {
            let row = if d.f_row < tpl.n_nodes {
                layout.net_slot[inst.nodes[d.f_row]]
            } else {
                Some(layout.inst_aux_base[ii] + (d.f_row - tpl.n_nodes))
            };
            if let Some(row) = row {
                let ordinal = layout.state_ordinal(layout.inst_state_base[ii] + d.state);
                c[(row, ordinal)] += d.coeff;
            }
        }
    }
    c
}

/// Integrate one period from state `s0` (non-state unknowns recovered by
/// a consistency solve at t0), recording the requested outputs and, when
/// `want_sensitivity`, propagating the monodromy by the chain rule.
#[allow(clippy::too_many_arguments)]
pub fn period_map(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    s0: &[f64],
    settings: &ShootingSettings,
    outvars: &[ResolvedOutVar],
    names: &[String],
    want_sensitivity: bool,
    stats: &mut SswStats,
) -> Result<PeriodMapResult> {
    let m = layout.n_states;
    let n = layout.size();
    let h_regular = settings.period / settings.steps as f64;
    let t_end = settings.t0 + settings.period;

    let op = consistency_solve(model, registry, layout, s0, settings.t0, &settings.newton)?;
    let mut x = op.x;
    let mut integ = Integrator::new(
        settings.method,
        s0.to_vec(),
        op.dqdt.clone(),
    );
    // order-1 start keeps the map independent of initial-derivative
    // sensitivities
    integ.force_be = true;

    let mut waves = WaveformSet::new(names.to_vec());
    waves.kind = Some("ssw".into());
    waves.period = Some(settings.period);
    let gates_now = model.sample_gates(settings.t0);
    let row = output_values(model, registry, layout, &x, &gates_now, settings.t0, outvars);
    waves.push_row(settings.t0, &row);

    // sensitivity state
    let c_mat = if want_sensitivity { dstate_matrix(model, registry, layout) } else { Matrix::zeros(0, 0) };
    let mut s_q = Matrix::identity(m);
    let mut s_qdot = Matrix::zeros(m, m);

    let mut sys = AssembledSystem::new(n);
    let mut scratch = AssemblyScratch::default();
    let mut t = settings.t0;
    let mut k: usize = 0;
    let coincide = 1e-9 * h_regular;

    while t < t_end - coincide {
        let nominal = (settings.t0 + (k as f64 + 1.0) * h_regular).min(t_end);
        let (target, ends_on_edge) = match model.next_gate_edge(t) {
            Some(edge) if edge <= nominal + coincide => {
                if (edge - nominal).abs() <= coincide {
                    (nominal, true)
                } else {
                    (edge, true)
                }
            }
            _ => (nominal, false),
        };
        let h = target - t;
        let gates = model.sample_gates(t + 0.5 * h);
        let disc = integ.coeffs(h);
        let step_method = integ.step_method();

        let outcome = newton_solve(
            model,
            registry,
            layout,
            &mut x,
            AssembleMode::Transient { disc: &disc },
            &gates,
            target,
            &integ.q_old,
            &settings.newton,
            &mut sys,
            &mut scratch,
        )?;
        stats.nr_iterations += outcome.iterations;
        if !outcome.converged {
            return Err(Error::Ssw {
                message: format!(
                    "Newton failed inside the period at step {k} (t={target:.9e})"
                ),
            });
        }

        if want_sensitivity && m > 0 {
            // newton_solve leaves `sys` assembled at the converged point
            let factors = lu_factor(&sys.jacobian).map_err(|e| Error::Singular {
                index: e.column,
                slot: layout.names[e.column].clone(),
            })?;
            // rhs = C * (a * S_q + b * S_qdot)
            let (a, b) = match step_method {
                Method::BackwardEuler => (1.0 / h, 0.0),
                Method::Trapezoidal => (2.0 / h, 1.0),
            };
            let mut s_new = Matrix::zeros(m, m);
            let mut rhs = vec![0.0; n];
            for col in 0..m {
                for r in rhs.iter_mut() {
                    *r = 0.0;
                }
                for row in 0..n {
                    let mut acc = 0.0;
                    for s in 0..m {
                        let c = c_mat[(row, s)];
                        if c != 0.0 {
                            acc += c * (a * s_q[(s, col)] + b * s_qdot[(s, col)]);
                        }
                    }
                    rhs[row] = acc;
                }
                let sx = factors.solve(&rhs);
                for s in 0..m {
                    s_new[(s, col)] = sx[layout.state_slots[s]];
                }
            }
            // derivative sensitivities follow the companion update
            let mut s_qdot_new = Matrix::zeros(m, m);
            for s in 0..m {
                for col in 0..m {
                    s_qdot_new[(s, col)] = match step_method {
                        Method::BackwardEuler => (s_new[(s, col)] - s_q[(s, col)]) / h,
                        Method::Trapezoidal => {
                            2.0 / h * (s_new[(s, col)] - s_q[(s, col)]) - s_qdot[(s, col)]
                        }
                    };
                }
            }
            s_q = s_new;
            s_qdot = s_qdot_new;
        }

        integ.accept(&disc, &x, layout, ends_on_edge);
        t = target;
        if (target - nominal).abs() <= coincide {
            k += 1;
        }
        let row = output_values(model, registry, layout, &x, &gates, t, outvars);
        waves.push_row(t, &row);
    }

    stats.periods_integrated += 1;
    let s_t: Vec<f64> = layout.state_slots.iter().map(|&s| x[s]).collect();
    Ok(PeriodMapResult { s_t, monodromy: s_q, waveforms: waves })
}

/// One-sided finite-difference monodromy around `s0`, reusing the base
/// map value. Costs one period integration per state.
#[allow(clippy::too_many_arguments)]
fn fd_monodromy(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    s0: &[f64],
    s_t_base: &[f64],
    settings: &ShootingSettings,
    stats: &mut SswStats,
) -> Result<Matrix> {
    let m = layout.n_states;
    let mut mono = Matrix::zeros(m, m);
    for j in 0..m {
        let eps = 1e-6 * (1.0 + s0[j].abs());
        let mut sp = s0.to_vec();
        sp[j] += eps;
        let pm = period_map(
            model, registry, layout, &sp, settings, &[], &[], false, stats,
        )?;
        for i in 0..m {
            mono[(i, j)] = (pm.s_t[i] - s_t_base[i]) / eps;
        }
    }
    Ok(mono)
}

/// Shooting Newton iteration on `r(s0) = s_T(s0) - s0`.
///
/// Returns the converged period's waveforms. The iteration solves
/// `(M - I) delta = -r` until the periodicity defect passes tolerance.
pub fn ssw_solve(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    s0: &[f64],
    settings: &ShootingSettings,
    outvars: &[ResolvedOutVar],
    names: &[String],
) -> Result<(WaveformSet, SswStats)> {
    let m = layout.n_states;
    let mut stats = SswStats::default();
    let mut s = s0.to_vec();
    let chain = settings.sensitivity == SswSensitivity::Chain;

    // one extra pass so the last allowed update still gets its
    // convergence check
    for _ in 0..=settings.maxiter_ssw.max(1) {
        let pm = period_map(
            model, registry, layout, &s, settings, outvars, names, chain, &mut stats,
        )?;
        let r: Vec<f64> = pm.s_t.iter().zip(&s).map(|(a, b)| a - b).collect();
        let rnorm = r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let snorm = s.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        stats.residual_history.push(rnorm);
        if rnorm < settings.tol_ssw * (1.0 + snorm) || m == 0 {
            return Ok((pm.waveforms, stats));
        }
        if stats.newton_iterations >= settings.maxiter_ssw {
            return Err(Error::Ssw {
                message: format!(
                    "no convergence after {} shooting iterations (|r|={rnorm:.3e})",
                    stats.newton_iterations
                ),
            });
        }

        let mono = if chain {
            pm.monodromy
        } else {
            fd_monodromy(model, registry, layout, &s, &pm.s_t, settings, &mut stats)?
        };
        // shooting Jacobian M - I
        let mut jac = mono;
        for i in 0..m {
            jac[(i, i)] -= 1.0;
        }
        let factors = lu_factor(&jac).map_err(|_| Error::Ssw {
            message: "period map has a unit eigenvalue (lossless or undamped circuit)".into(),
        })?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = factors.solve(&rhs);
        for (si, di) in s.iter_mut().zip(&delta) {
            *si += di;
        }
        stats.newton_iterations += 1;
    }
    Err(Error::Ssw {
        message: format!("no convergence after {} shooting iterations", settings.maxiter_ssw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::builtin_registry;
    use crate::mna::build_layout;
    use crate::netlist::{flatten, parse_netlist, validate};
    use crate::solver::{resolve_outvars, stparm_pins};
    use crate::netlist::OutVar;

    fn setup(text: &str) -> (SimModel, Registry, UnknownLayout) {
        let doc = parse_netlist(text).unwrap();
        let reg = builtin_registry();
        let flat = flatten(&doc, &reg).unwrap();
        let diags = validate(&flat, &reg);
        assert!(diags.is_empty(), "{diags:?}");
        let model = SimModel::build(&flat, &reg).unwrap();
        let layout = build_layout(&model, &reg);
        (model, reg, layout)
    }

    const SINE_RC: &str = "element name=V1 type=vsrc_sin nodes=in 0 va=1 freq=1k\n\
                           element name=R1 type=r nodes=in out r=1k\n\
                           element name=C1 type=c nodes=out 0 c=1u\n";

    fn rc_settings(method: Method) -> ShootingSettings {
        ShootingSettings {
            period: 1e-3,
            steps: 2000,
            method,
            t0: 0.0,
            tol_ssw: 1e-10,
            maxiter_ssw: 20,
            sensitivity: SswSensitivity::Chain,
            newton: NewtonSettings::default(),
        }
    }

    #[test]
    fn rc_monodromy_contracts_like_the_time_constant() {
        let (model, reg, layout) = setup(SINE_RC);
        let settings = rc_settings(Method::Trapezoidal);
        let mut stats = SswStats::default();
        let s0 = vec![0.0, 0.0];
        let pm = period_map(
            &model, &reg, &layout, &s0, &settings, &[], &[], true, &mut stats,
        )
        .unwrap();
        // the physical mode lives along (q_p, q_m) = (1, -1): its
        // multiplier approximates exp(-T/RC); the complementary mode
        // collapses within the first step
        let m = &pm.monodromy;
        let dir = [1.0, -1.0];
        let mapped = [
            m[(0, 0)] * dir[0] + m[(0, 1)] * dir[1],
            m[(1, 0)] * dir[0] + m[(1, 1)] * dir[1],
        ];
        let lambda = mapped[0] / dir[0];
        let expect = (-1.0_f64).exp(); // T = tau = 1 ms
        assert!(
            (lambda - expect).abs() < 2e-3,
            "lambda {lambda} vs {expect}"
        );
        assert!((mapped[1] + lambda).abs() < 1e-9, "antisymmetric image");
    }

    #[test]
    fn autonomous_decay_has_zero_fixed_point() {
        // no drive: s0 = 0 is the fixed point and the map still contracts
        let (model, reg, layout) = setup(
            "element name=R1 type=r nodes=out 0 r=1k\n\
             element name=C1 type=c nodes=out 0 c=1u\n",
        );
        let settings = rc_settings(Method::BackwardEuler);
        let mut stats = SswStats::default();
        let pm = period_map(
            &model, &reg, &layout, &[0.0, 0.0], &settings, &[], &[], true, &mut stats,
        )
        .unwrap();
        assert!(pm.s_t.iter().all(|v| v.abs() < 1e-15));
        let dir = [1.0, -1.0];
        let lambda = pm.monodromy[(0, 0)] * dir[0] + pm.monodromy[(0, 1)] * dir[1];
        assert!(lambda > 0.0 && lambda < 1.0, "contraction factor {lambda}");
    }

    #[test]
    fn chain_monodromy_matches_central_differences() {
        let (model, reg, layout) = setup(SINE_RC);
        for method in [Method::BackwardEuler, Method::Trapezoidal] {
            let settings = ShootingSettings { steps: 500, ..rc_settings(method) };
            let mut stats = SswStats::default();
            let s0 = vec![3e-7, -3e-7];
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
                let pp = period_map(&model, &reg, &layout, &sp, &settings, &[], &[], false, &mut stats)
                    .unwrap();
                let pmm = period_map(&model, &reg, &layout, &sm, &settings, &[], &[], false, &mut stats)
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
            let rel = diff.norm_inf() / fd.norm_inf();
            assert!(rel < 1e-4, "{method:?}: relative monodromy defect {rel}");
        }
    }

    #[test]
    fn sine_rc_ssw_matches_the_phasor_solution() {
        let (model, reg, layout) = setup(SINE_RC);
        let settings = rc_settings(Method::Trapezoidal);
        let outvars =
            resolve_outvars(&model, &reg, &layout, &[OutVar::NodeVoltage("out".into())]).unwrap();
        let s0 = stparm_pins(&model, &reg, &layout);
        let (waves, stats) = ssw_solve(
            &model, &reg, &layout, &s0, &settings, &outvars, &["v(out)".to_string()],
        )
        .unwrap();
        assert!(stats.newton_iterations <= 2, "iterations {}", stats.newton_iterations);
        let v = waves.column("v(out)").unwrap();
        let amplitude = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let omega_rc = 2.0 * std::f64::consts::PI * 1e3 * 1e-3;
        let expect = 1.0 / (1.0 + omega_rc * omega_rc).sqrt();
        assert!(
            (amplitude - expect).abs() < 2e-3 * expect,
            "amplitude {amplitude} vs {expect}"
        );
        // periodicity of every recorded state-bearing signal
        assert!((v[0] - v[v.len() - 1]).abs() < 1e-6);
    }

    #[test]
    fn undamped_integrator_reports_unit_eigenvalue() {
        // a capacitor fed by an ideal current source integrates forever:
        // the period map moves the charge without contracting it
        let (model, reg, layout) = setup(
            "element name=I1 type=isrc_dc nodes=a 0 i=1m\n\
             element name=C1 type=c nodes=a 0 c=1u\n",
        );
        let settings = ShootingSettings {
            period: 1e-3,
            steps: 100,
            method: Method::BackwardEuler,
            t0: 0.0,
            tol_ssw: 1e-12,
            maxiter_ssw: 8,
            sensitivity: SswSensitivity::Chain,
            newton: NewtonSettings::default(),
        };
        let s0 = stparm_pins(&model, &reg, &layout);
        let err = ssw_solve(&model, &reg, &layout, &s0, &settings, &[], &[]).unwrap_err();
        assert!(err.to_string().contains("unit eigenvalue"), "{err}");
    }
}
