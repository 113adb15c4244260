//! Nonlinear solve and analyses: Newton-Raphson, start-up, transient.

mod transient;

pub use transient::{
    adapt_step, transient, Integrator, StepController, StepVerdict, TransientSettings,
    TransientStats,
};

use crate::elements::{evaluate, EvalContext, EvalMode, EvalRequest, EvalResult, Kind, Registry};
use crate::error::{Error, Result};
use crate::mna::{
    assemble_into, AssembledSystem, AssembleMode, AssemblyScratch, UnknownLayout,
};
use crate::model::SimModel;
use crate::netlist::OutVar;

/// Newton-Raphson settings.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Residual tolerance, scaled by `1 + |x|_inf`.
    pub tol_residual: f64,
    /// Update tolerance, scaled by `1 + |x|_inf`.
    pub tol_delta: f64,
    pub maxiter: usize,
    /// Divergence guard on `|x|_inf`.
    pub divergence_limit: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol_residual: 1e-8,
            tol_delta: 1e-9,
            maxiter: 25,
            divergence_limit: 1e12,
        }
    }
}

/// Result of one Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOutcome {
    pub converged: bool,
    /// Number of linear solves applied.
    pub iterations: usize,
    /// Piecewise-linear branch flips observed across iterations.
    pub flips: usize,
    pub residual_norm: f64,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Conduction pattern of every PWL branch (diodes) at iterate `x`.
fn pwl_pattern(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &[f64],
) -> Vec<bool> {
    let mut pattern = Vec::new();
    for inst in &model.instances {
        if registry.get(inst.template).kind == Kind::DiodePwl {
            let vp = layout.net_slot[inst.nodes[0]].map(|s| x[s]).unwrap_or(0.0);
            let vn = layout.net_slot[inst.nodes[1]].map(|s| x[s]).unwrap_or(0.0);
            pattern.push(vp - vn >= 0.0);
        }
    }
    pattern
}

/// Newton-Raphson iteration on the assembled system.
///
/// Converges when the residual norm passes the mixed tolerance, or when
/// an update becomes negligible. Diode branch flips during an iteration
/// are counted and iteration continues.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &mut [f64],
    mode: AssembleMode,
    gate_values: &[bool],
    time: f64,
    state_old: &[f64],
    settings: &NewtonSettings,
    sys: &mut AssembledSystem,
    scratch: &mut AssemblyScratch,
) -> Result<NewtonOutcome> {
    let mut iterations = 0;
    let mut flips = 0;
    let mut last_delta_norm = f64::INFINITY;
    let mut pattern = pwl_pattern(model, registry, layout, x);

    loop {
        assemble_into(
            model, registry, layout, x, mode, gate_values, time, true, state_old, sys, scratch,
        )?;
        let rnorm = norm_inf(&sys.residual);
        let xnorm = norm_inf(x);
        let scale = 1.0 + xnorm;
        if rnorm < settings.tol_residual * scale
            || last_delta_norm < settings.tol_delta * scale
        {
            return Ok(NewtonOutcome { converged: true, iterations, flips, residual_norm: rnorm });
        }
        if iterations >= settings.maxiter || !rnorm.is_finite() {
            return Ok(NewtonOutcome { converged: false, iterations, flips, residual_norm: rnorm });
        }

        let delta = crate::mna::lu_solve(sys, layout)?;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        iterations += 1;
        last_delta_norm = norm_inf(&delta);

        if norm_inf(x) > settings.divergence_limit {
            return Ok(NewtonOutcome {
                converged: false,
                iterations,
                flips,
                residual_norm: rnorm,
            });
        }

        let new_pattern = pwl_pattern(model, registry, layout, x);
        flips += pattern
            .iter()
            .zip(&new_pattern)
            .filter(|(a, b)| a != b)
            .count();
        pattern = new_pattern;
    }
}

/// A consistent operating point: the start-up solution plus recovered
/// state derivatives for a smooth integrator start.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    /// Solution over the transient layout.
    pub x: Vec<f64>,
    /// Extended solution including start-up auxiliary currents.
    pub x_extended: Vec<f64>,
    /// d(state)/dt at the operating point, per state ordinal.
    pub dqdt: Vec<f64>,
    pub iterations: usize,
}

/// State pin values implied by every instance's start-up parameters.
pub fn stparm_pins(model: &SimModel, registry: &Registry, layout: &UnknownLayout) -> Vec<f64> {
    let mut pins = vec![0.0; layout.n_states];
    for (ii, inst) in model.instances.iter().enumerate() {
        let tpl = registry.get(inst.template);
        let vals = tpl.initial_states(&inst.rparms, &inst.stparms);
        for (k, v) in vals.into_iter().enumerate() {
            let ordinal = layout.state_ordinal(layout.inst_state_base[ii] + k);
            pins[ordinal] = v;
        }
    }
    pins
}

/// Solve the start-up system with the state variables pinned to `pins`.
///
/// Solves the h-equation set at time `t`: capacitors act as dc voltage
/// sources (their branch current becomes a start-up auxiliary), inductors
/// as dc current sources. The returned point satisfies the pins exactly.
pub fn consistency_solve(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    pins: &[f64],
    t: f64,
    settings: &NewtonSettings,
) -> Result<OperatingPoint> {
    let n_ext = layout.extended_size();
    let mut x = vec![0.0; n_ext];
    // seed the pinned states so the first iterate is already consistent
    for (ordinal, &slot) in layout.state_slots.iter().enumerate() {
        x[slot] = pins[ordinal];
    }
    let gate_values = model.sample_gates(t);
    let mut sys = AssembledSystem::new(n_ext);
    let mut scratch = AssemblyScratch::default();
    let outcome = newton_solve(
        model,
        registry,
        layout,
        &mut x,
        AssembleMode::Startup { pins },
        &gate_values,
        t,
        &[],
        settings,
        &mut sys,
        &mut scratch,
    )?;
    if !outcome.converged {
        return Err(Error::NonConvergence {
            time: t,
            iterations: outcome.iterations,
            residual: outcome.residual_norm,
        });
    }

    // recover d(state)/dt from the solved point
    let mut dqdt = vec![0.0; layout.n_states];
    for (ii, inst) in model.instances.iter().enumerate() {
        let tpl = registry.get(inst.template);
        if tpl.n_states() == 0 {
            continue;
        }
        let mut x_local = Vec::with_capacity(tpl.n_local() + tpl.n_startup_aux());
        for &net in &inst.nodes {
            x_local.push(layout.net_slot[net].map(|s| x[s]).unwrap_or(0.0));
        }
        for k in 0..tpl.n_aux() {
            x_local.push(x[layout.inst_aux_base[ii] + k]);
        }
        for k in 0..tpl.n_states() {
            x_local.push(x[layout.inst_state_base[ii] + k]);
        }
        for k in 0..tpl.n_startup_aux() {
            x_local.push(x[layout.inst_startup_base[ii] + k]);
        }
        for (k, d) in tpl.state_derivs(&x_local).into_iter().enumerate() {
            let ordinal = layout.state_ordinal(layout.inst_state_base[ii] + k);
            dqdt[ordinal] = d;
        }
    }

    Ok(OperatingPoint {
        x: x[..layout.size()].to_vec(),
        x_extended: x,
        dqdt,
        iterations: outcome.iterations,
    })
}

/// Start-up analysis: state variables pinned to their st_ parameter
/// values (zero by default).
pub fn startup_solve(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    t: f64,
    settings: &NewtonSettings,
) -> Result<OperatingPoint> {
    let pins = stparm_pins(model, registry, layout);
    consistency_solve(model, registry, layout, &pins, t, settings)
}

/// A resolved output selection.
#[derive(Debug, Clone)]
pub enum ResolvedOutVar {
    /// Direct solution-vector slot (node voltage).
    Slot(usize),
    /// Element output parameter.
    Outparm { inst: usize, parm: usize },
    /// Gate level (0/1) of a gate generator.
    Gate { gate: usize },
}

/// Resolve output selections against the model and layout.
pub fn resolve_outvars(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    outvars: &[OutVar],
) -> Result<Vec<ResolvedOutVar>> {
    let mut out = Vec::with_capacity(outvars.len());
    for ov in outvars {
        match ov {
            OutVar::NodeVoltage(net) => {
                let idx = model
                    .nets
                    .iter()
                    .position(|n| n == net)
                    .and_then(|i| layout.net_slot[i])
                    .ok_or_else(|| Error::Flatten {
                        message: format!("output selection v({net}): unknown or non-electrical net"),
                    })?;
                out.push(ResolvedOutVar::Slot(idx));
            }
            OutVar::InstanceOutparm { instance, outparm } => {
                if let Some(inst) = model.instance_index(instance) {
                    let tpl = registry.get(model.instances[inst].template);
                    let parm = tpl.outparm_index(outparm).ok_or_else(|| Error::Flatten {
                        message: format!(
                            "output selection {instance}.{outparm}: template `{}` has outparms {:?}",
                            tpl.id, tpl.outparms
                        ),
                    })?;
                    out.push(ResolvedOutVar::Outparm { inst, parm });
                } else if let Some(gate) = model.gate_index(instance) {
                    if outparm != "g" {
                        return Err(Error::Flatten {
                            message: format!(
                                "output selection {instance}.{outparm}: gates expose only `g`"
                            ),
                        });
                    }
                    out.push(ResolvedOutVar::Gate { gate });
                } else {
                    return Err(Error::Flatten {
                        message: format!("output selection {instance}.{outparm}: unknown instance"),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Evaluate resolved output selections at a solution point.
pub fn output_values(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &[f64],
    gate_values: &[bool],
    t: f64,
    outvars: &[ResolvedOutVar],
) -> Vec<f64> {
    let mut scratch = EvalResult::default();
    let mut gates_buf = Vec::new();
    outvars
        .iter()
        .map(|ov| match *ov {
            ResolvedOutVar::Slot(slot) => x[slot],
            ResolvedOutVar::Gate { gate } => {
                if model.gates[gate].function.value(t) {
                    1.0
                } else {
                    0.0
                }
            }
            ResolvedOutVar::Outparm { inst, parm } => {
                let bi = &model.instances[inst];
                let tpl = registry.get(bi.template);
                let x_local = crate::mna::gather_x_local(model, registry, layout, x, inst);
                gates_buf.clear();
                for &gi in &bi.gate_inputs {
                    gates_buf.push(gate_values[gi]);
                }
                let ctx = EvalContext {
                    mode: EvalMode::Transient,
                    request: EvalRequest { outvar: true, ..Default::default() },
                    time: t,
                    gates: &gates_buf,
                };
                evaluate(tpl, &bi.path, &bi.rparms, &x_local, &[], &ctx, &mut scratch)
                    .map(|_| scratch.outparms[parm])
                    .unwrap_or(f64::NAN)
            }
        })
        .collect()
}
