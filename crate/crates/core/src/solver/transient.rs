//! Implicit transient integration: backward Euler and trapezoidal
//! stepping with constant or variable step size.
//!
//! Steps never straddle a gate switching instant: the planner snaps the
//! step endpoint to the next gate edge inside the interval, so switch
//! states are constant over every step. Gate levels for a step are
//! sampled at the step midpoint, which is always strictly inside the
//! switching interval. The step after an edge restarts with backward
//! Euler, avoiding trapezoidal ringing on switched circuits; at t_start
//! the derivative recovered from the start-up solve lets trapezoidal
//! integration begin at full order.

use super::{newton_solve, NewtonOutcome, NewtonSettings, OperatingPoint, ResolvedOutVar};
use crate::elements::Registry;
use crate::error::{Error, Result};
use crate::mna::{AssembledSystem, AssembleMode, AssemblyScratch, Discretization, UnknownLayout};
use crate::model::SimModel;
use crate::netlist::{Method, SolveBlock};
use crate::waveform::WaveformSet;

/// Companion-form state of the integrator.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub method: Method,
    /// Accepted state values, per state ordinal.
    pub q_old: Vec<f64>,
    /// Accepted state derivatives (used by the trapezoidal rule).
    pub dqdt_old: Vec<f64>,
    /// Take the next step with backward Euler (after a discontinuity).
    pub force_be: bool,
}

impl Integrator {
    pub fn new(method: Method, q0: Vec<f64>, dqdt0: Vec<f64>) -> Self {
        Integrator { method, q_old: q0, dqdt_old: dqdt0, force_be: false }
    }

    /// Effective method for the next step.
    pub fn step_method(&self) -> Method {
        if self.force_be {
            Method::BackwardEuler
        } else {
            self.method
        }
    }

    /// Discretisation coefficients for a step of size `h`:
    /// BE: dq/dt = (q - q_old)/h; TRZ: dq/dt = 2(q - q_old)/h - dqdt_old.
    pub fn coeffs(&self, h: f64) -> Discretization {
        match self.step_method() {
            Method::BackwardEuler => Discretization {
                alpha: 1.0 / h,
                beta: self.q_old.iter().map(|q| -q / h).collect(),
            },
            Method::Trapezoidal => Discretization {
                alpha: 2.0 / h,
                beta: self
                    .q_old
                    .iter()
                    .zip(&self.dqdt_old)
                    .map(|(q, dq)| -2.0 * q / h - dq)
                    .collect(),
            },
        }
    }

    /// Commit an accepted step: update state values and derivatives.
    pub fn accept(&mut self, disc: &Discretization, x: &[f64], layout: &UnknownLayout, ends_on_edge: bool) {
        for (ordinal, &slot) in layout.state_slots.iter().enumerate() {
            let q_new = x[slot];
            self.dqdt_old[ordinal] = disc.alpha * q_new + disc.beta[ordinal];
            self.q_old[ordinal] = q_new;
        }
        self.force_be = ends_on_edge;
    }
}

/// Verdict of the step controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepVerdict {
    Accept { new_h: f64 },
    Reject { new_h: f64 },
    /// Rejection already at the minimum step: the transient must abort.
    AbortAtHMin,
}

/// Heuristic step controller: reject on Newton failure or switch
/// chatter, grow after a run of easy steps.
#[derive(Debug, Clone, Default)]
pub struct StepController {
    consecutive_easy: usize,
}

/// Growth needs this many consecutive accepts with few iterations.
const GROW_AFTER: usize = 5;
const GROW_FACTOR: f64 = 1.5;
const EASY_ITERATIONS: usize = 3;

/// Apply the step-control policy after one Newton attempt.
///
/// `state_change` is accepted for future policies; the current policy
/// keys only on Newton effort and flip count.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step(
    ctl: &mut StepController,
    nr: &NewtonOutcome,
    flips: usize,
    _state_change: f64,
    h: f64,
    h_min: f64,
    h_max: f64,
    max_flips: usize,
) -> StepVerdict {
    if !nr.converged || flips > max_flips {
        ctl.consecutive_easy = 0;
        if h <= h_min * (1.0 + 1e-12) {
            return StepVerdict::AbortAtHMin;
        }
        return StepVerdict::Reject { new_h: (h / 2.0).max(h_min) };
    }
    let mut new_h = h;
    if nr.iterations <= EASY_ITERATIONS {
        ctl.consecutive_easy += 1;
        if ctl.consecutive_easy >= GROW_AFTER {
            new_h = (h * GROW_FACTOR).min(h_max);
            ctl.consecutive_easy = 0;
        }
    } else {
        ctl.consecutive_easy = 0;
    }
    StepVerdict::Accept { new_h }
}

/// Settings for one transient run, extracted from a solve block.
#[derive(Debug, Clone)]
pub struct TransientSettings {
    pub method: Method,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub variable_step: bool,
    pub newton: NewtonSettings,
    /// Combined flip cap per step before rejection.
    pub max_flips: usize,
    pub verbose: bool,
}

impl TransientSettings {
    pub fn from_solve_block(sb: &SolveBlock) -> Self {
        TransientSettings {
            method: sb.method,
            t_start: sb.t_start,
            t_end: sb.t_end,
            dt: sb.dt,
            dt_min: sb.dt_min,
            dt_max: sb.dt_max,
            variable_step: sb.variable_step,
            newton: NewtonSettings {
                tol_residual: sb.tol_nr,
                maxiter: sb.maxiter_nr,
                ..Default::default()
            },
            max_flips: 50,
            verbose: false,
        }
    }
}

/// Run statistics.
#[derive(Debug, Clone, Default)]
pub struct TransientStats {
    pub steps: usize,
    pub rejected: usize,
    pub nr_iterations: usize,
    pub flips: usize,
}

/// Plan the end point of the next step: the nominal target clamped to
/// t_end, snapped back to a gate edge strictly inside the interval.
/// Returns (target, ends_on_edge, advanced_regular_grid).
fn plan_step(model: &SimModel, t: f64, nominal: f64, dt: f64) -> (f64, bool) {
    let coincide = 1e-9 * dt;
    match model.next_gate_edge(t) {
        Some(edge) if edge <= nominal + coincide => {
            if (edge - nominal).abs() <= coincide {
                (nominal, true)
            } else {
                (edge, true)
            }
        }
        _ => (nominal, false),
    }
}

/// Transient analysis from a consistent initial point.
///
/// Records the requested output columns at t_start and after every
/// accepted step. With `variable_step` off the time grid is exactly
/// `t_start + k*dt` plus inserted gate breakpoints.
#[allow(clippy::too_many_arguments)]
pub fn transient(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    settings: &TransientSettings,
    init: &OperatingPoint,
    outvars: &[ResolvedOutVar],
    names: Vec<String>,
) -> Result<(WaveformSet, TransientStats)> {
    let mut stats = TransientStats::default();
    let mut waves = WaveformSet::new(names);
    waves.kind = Some("trns".into());

    let n_states = layout.n_states;
    let q0: Vec<f64> = layout.state_slots.iter().map(|&s| init.x[s]).collect();
    let mut integ = Integrator::new(settings.method, q0, init.dqdt[..n_states].to_vec());
    let mut ctl = StepController::default();

    let mut x = init.x.clone();
    let mut t = settings.t_start;
    let mut k: usize = 0; // regular grid index
    let mut h_nominal = settings.dt;
    let mut sys = AssembledSystem::new(layout.size());
    let mut scratch = AssemblyScratch::default();

    // initial record
    let gates_now = model.sample_gates(t);
    let row = super::output_values(model, registry, layout, &x, &gates_now, t, outvars);
    waves.push_row(t, &row);

    let t_eps = 1e-9 * settings.dt;
    let mut prev_gates = gates_now;

    while t < settings.t_end - t_eps {
        // nominal end point of this step
        let nominal = if settings.variable_step {
            (t + h_nominal).min(settings.t_end)
        } else {
            (settings.t_start + (k as f64 + 1.0) * settings.dt).min(settings.t_end)
        };
        let (target, ends_on_edge) = plan_step(model, t, nominal, settings.dt);
        let h = target - t;
        debug_assert!(h > 0.0, "step collapsed at t={t}");

        // gate levels are constant over the open interval; sample its midpoint
        let gates = model.sample_gates(t + 0.5 * h);
        let gate_changes = gates
            .iter()
            .zip(&prev_gates)
            .filter(|(a, b)| a != b)
            .count();

        let disc = integ.coeffs(h);
        let mut x_try = x.clone();
        let outcome = newton_solve(
            model,
            registry,
            layout,
            &mut x_try,
            AssembleMode::Transient { disc: &disc },
            &gates,
            target,
            &integ.q_old,
            &settings.newton,
            &mut sys,
            &mut scratch,
        )?;
        stats.nr_iterations += outcome.iterations;

        let combined_flips = outcome.flips + gate_changes;
        let verdict = if settings.variable_step {
            adapt_step(
                &mut ctl,
                &outcome,
                combined_flips,
                0.0,
                h_nominal,
                settings.dt_min,
                settings.dt_max,
                settings.max_flips,
            )
        } else if outcome.converged && combined_flips <= settings.max_flips {
            StepVerdict::Accept { new_h: h_nominal }
        } else {
            StepVerdict::AbortAtHMin
        };

        if settings.verbose {
            println!(
                "t={target:.9e} h={h:.3e} iters={} flips={} {}",
                outcome.iterations,
                combined_flips,
                if matches!(verdict, StepVerdict::Accept { .. }) { "accept" } else { "reject" },
            );
        }

        match verdict {
            StepVerdict::Accept { new_h } => {
                integ.accept(&disc, &x_try, layout, ends_on_edge);
                x = x_try;
                t = target;
                if !settings.variable_step && (target - nominal).abs() <= 1e-9 * settings.dt {
                    k += 1;
                }
                h_nominal = new_h;
                stats.steps += 1;
                stats.flips += combined_flips;
                prev_gates = gates;
                let row =
                    super::output_values(model, registry, layout, &x, &prev_gates, t, outvars);
                waves.push_row(t, &row);
            }
            StepVerdict::Reject { new_h } => {
                stats.rejected += 1;
                h_nominal = new_h;
            }
            StepVerdict::AbortAtHMin => {
                return Err(Error::Transient {
                    time: target,
                    message: if outcome.converged {
                        format!("switch chatter: {combined_flips} flips in one step")
                    } else {
                        format!(
                            "Newton-Raphson failed after {} iterations (|residual|={:.3e})",
                            outcome.iterations, outcome.residual_norm
                        )
                    },
                });
            }
        }
    }

    Ok((waves, stats))
}
