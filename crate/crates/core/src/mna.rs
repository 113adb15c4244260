//! Modified nodal analysis: global unknown layout and system assembly.
//!
//! The solution vector is ordered node voltages (non-ground electrical
//! nets in first-appearance order), then per-instance auxiliary currents,
//! then per-instance state variables. Start-up analysis extends the
//! vector with per-instance start-up auxiliaries (the capacitor's
//! `cur_p`); the extension exists only inside that solve.
//!
//! Residual rows are ordered to match: one KCL row per non-ground net,
//! one row per auxiliary equation, one row per state (its g equation in
//! transient mode, or a generic pin row `q - q_pin = 0` during start-up),
//! then the start-up constraint rows.

use crate::elements::{evaluate, EvalContext, EvalMode, EvalRequest, EvalResult, Registry};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::SimModel;

/// Ordered map between model entities and solution-vector slots.
#[derive(Debug, Clone)]
pub struct UnknownLayout {
    pub n_nodes: usize,
    pub n_aux: usize,
    pub n_states: usize,
    pub n_startup_aux: usize,
    /// Voltage slot per model net (None for ground and control nets).
    pub net_slot: Vec<Option<usize>>,
    /// First auxiliary slot per instance.
    pub inst_aux_base: Vec<usize>,
    /// First state slot per instance.
    pub inst_state_base: Vec<usize>,
    /// First start-up auxiliary slot per instance (extended system).
    pub inst_startup_base: Vec<usize>,
    /// Global indices that are state variables, in state order.
    pub state_slots: Vec<usize>,
    /// Human-readable slot names, extended slots included.
    pub names: Vec<String>,
}

impl UnknownLayout {
    /// Size of the transient solution vector.
    pub fn size(&self) -> usize {
        self.n_nodes + self.n_aux + self.n_states
    }

    /// Size of the start-up solution vector.
    pub fn extended_size(&self) -> usize {
        self.size() + self.n_startup_aux
    }

    /// State ordinal (0..n_states) of a global state slot.
    pub fn state_ordinal(&self, slot: usize) -> usize {
        slot - (self.n_nodes + self.n_aux)
    }

    pub fn slot_name(&self, slot: usize) -> &str {
        &self.names[slot]
    }
}

/// Deterministic layout construction: nets in first-appearance order,
/// then per-instance auxiliaries, then per-instance states.
pub fn build_layout(model: &SimModel, registry: &Registry) -> UnknownLayout {
    let mut electrical = vec![false; model.nets.len()];
    for inst in &model.instances {
        for &n in &inst.nodes {
            electrical[n] = true;
        }
    }

    let mut net_slot = vec![None; model.nets.len()];
    let mut names = Vec::new();
    let mut next = 0usize;
    for (idx, name) in model.nets.iter().enumerate() {
        if electrical[idx] && idx != model.ground {
            net_slot[idx] = Some(next);
            names.push(format!("v({name})"));
            next += 1;
        }
    }
    let n_nodes = next;

    let mut inst_aux_base = Vec::with_capacity(model.instances.len());
    for inst in &model.instances {
        let tpl = registry.get(inst.template);
        inst_aux_base.push(next);
        for aux in &tpl.aux_names {
            names.push(format!("{}.{aux}", inst.path));
            next += 1;
        }
    }
    let n_aux = next - n_nodes;

    let mut inst_state_base = Vec::with_capacity(model.instances.len());
    let mut state_slots = Vec::new();
    for inst in &model.instances {
        let tpl = registry.get(inst.template);
        inst_state_base.push(next);
        for state in &tpl.state_names {
            names.push(format!("{}.{state}", inst.path));
            state_slots.push(next);
            next += 1;
        }
    }
    let n_states = next - n_nodes - n_aux;

    let mut inst_startup_base = Vec::with_capacity(model.instances.len());
    for inst in &model.instances {
        let tpl = registry.get(inst.template);
        inst_startup_base.push(next);
        for st in &tpl.startup_aux_names {
            names.push(format!("{}.{st}", inst.path));
            next += 1;
        }
    }
    let n_startup_aux = next - n_nodes - n_aux - n_states;

    UnknownLayout {
        n_nodes,
        n_aux,
        n_states,
        n_startup_aux,
        net_slot,
        inst_aux_base,
        inst_state_base,
        inst_startup_base,
        state_slots,
        names,
    }
}

/// Discretisation of d(state)/dt as `alpha * q_new + beta[state]`,
/// supplied by the integrator (zero during start-up).
#[derive(Debug, Clone)]
pub struct Discretization {
    pub alpha: f64,
    /// Affine offset per state ordinal.
    pub beta: Vec<f64>,
}

impl Discretization {
    pub fn none(n_states: usize) -> Self {
        Discretization { alpha: 0.0, beta: vec![0.0; n_states] }
    }
}

/// What to assemble.
#[derive(Debug, Clone, Copy)]
pub enum AssembleMode<'a> {
    /// Transient/ssw residual: f rows with discretised d/dt slots plus g rows.
    Transient { disc: &'a Discretization },
    /// Start-up residual: h rows, generic state pins, start-up constraints.
    Startup {
        /// Pinned state values per state ordinal.
        pins: &'a [f64],
    },
}

/// Residual and Jacobian over a layout.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub residual: Vec<f64>,
    pub jacobian: Matrix,
}

impl AssembledSystem {
    pub fn new(n: usize) -> Self {
        AssembledSystem { residual: vec![0.0; n], jacobian: Matrix::zeros(n, n) }
    }

    pub fn size(&self) -> usize {
        self.residual.len()
    }

    fn reset(&mut self, n: usize) {
        if self.residual.len() != n {
            *self = AssembledSystem::new(n);
        } else {
            self.residual.fill(0.0);
            self.jacobian.fill(0.0);
        }
    }
}

/// Reusable scratch buffers for assembly.
#[derive(Debug, Default)]
pub struct AssemblyScratch {
    eval: EvalResult,
    x_local: Vec<f64>,
    gates: Vec<bool>,
    state_old: Vec<f64>,
}

/// Assemble the residual and (optionally) Jacobian at iterate `x`.
///
/// `gate_values` holds one sample per model gate; `time` feeds the
/// time-dependent sources.
#[allow(clippy::too_many_arguments)]
pub fn assemble_into(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &[f64],
    mode: AssembleMode,
    gate_values: &[bool],
    time: f64,
    want_jacobian: bool,
    state_old: &[f64],
    sys: &mut AssembledSystem,
    scratch: &mut AssemblyScratch,
) -> Result<()> {
    let startup = matches!(mode, AssembleMode::Startup { .. });
    let n = if startup { layout.extended_size() } else { layout.size() };
    assert_eq!(x.len(), n, "iterate size does not match layout");
    sys.reset(n);

    let eval_mode = if startup { EvalMode::Startup } else { EvalMode::Transient };
    let request = EvalRequest { function: true, jacobian: want_jacobian, ..Default::default() };

    for (ii, inst) in model.instances.iter().enumerate() {
        let tpl = registry.get(inst.template);
        let n_nodes = tpl.n_nodes;
        let n_aux = tpl.n_aux();
        let n_states = tpl.n_states();
        let n_start = if startup { tpl.n_startup_aux() } else { 0 };

        // local unknown vector
        scratch.x_local.clear();
        for &net in &inst.nodes {
            scratch.x_local.push(match layout.net_slot[net] {
                Some(slot) => x[slot],
                None => 0.0,
            });
        }
        for k in 0..n_aux {
            scratch.x_local.push(x[layout.inst_aux_base[ii] + k]);
        }
        for k in 0..n_states {
            scratch.x_local.push(x[layout.inst_state_base[ii] + k]);
        }
        for k in 0..n_start {
            scratch.x_local.push(x[layout.inst_startup_base[ii] + k]);
        }

        // previous/pinned state values for this instance
        scratch.state_old.clear();
        let state_base = layout.inst_state_base[ii];
        let reference: &[f64] = match mode {
            AssembleMode::Startup { pins } => pins,
            AssembleMode::Transient { .. } => state_old,
        };
        for k in 0..n_states {
            let ordinal = layout.state_ordinal(state_base + k);
            scratch.state_old.push(reference[ordinal]);
        }

        scratch.gates.clear();
        for &gi in &inst.gate_inputs {
            scratch.gates.push(gate_values[gi]);
        }

        let ctx = EvalContext { mode: eval_mode, request, time, gates: &scratch.gates };
        evaluate(
            tpl,
            &inst.path,
            &inst.rparms,
            &scratch.x_local,
            &scratch.state_old,
            &ctx,
            &mut scratch.eval,
        )?;

        // local equation index -> global row
        let local_row = |eq: usize| -> Option<usize> {
            if eq < n_nodes {
                layout.net_slot[inst.nodes[eq]]
            } else if eq < n_nodes + n_aux {
                Some(layout.inst_aux_base[ii] + (eq - n_nodes))
            } else if startup {
                Some(layout.inst_startup_base[ii] + (eq - n_nodes - n_aux))
            } else {
                Some(layout.inst_state_base[ii] + (eq - n_nodes - n_aux))
            }
        };
        // local variable index -> global column
        let local_col = |var: usize| -> Option<usize> {
            if var < n_nodes {
                layout.net_slot[inst.nodes[var]]
            } else if var < n_nodes + n_aux {
                Some(layout.inst_aux_base[ii] + (var - n_nodes))
            } else if var < n_nodes + n_aux + n_states {
                Some(layout.inst_state_base[ii] + (var - n_nodes - n_aux))
            } else {
                Some(layout.inst_startup_base[ii] + (var - n_nodes - n_aux - n_states))
            }
        };

        match mode {
            AssembleMode::Transient { disc } => {
                for (eq, &value) in scratch.eval.f.iter().enumerate() {
                    if let Some(row) = local_row(eq) {
                        sys.residual[row] += value;
                    }
                }
                // discretised d(state)/dt slots
                for d in &tpl.dstate {
                    if let Some(row) = local_row(d.f_row) {
                        let slot = state_base + d.state;
                        let ordinal = layout.state_ordinal(slot);
                        sys.residual[row] +=
                            d.coeff * (disc.alpha * x[slot] + disc.beta[ordinal]);
                        if want_jacobian {
                            sys.jacobian[(row, slot)] += d.coeff * disc.alpha;
                        }
                    }
                }
                for (gi, &value) in scratch.eval.g.iter().enumerate() {
                    sys.residual[state_base + gi] += value;
                }
                if want_jacobian {
                    for &(eq, var, value) in &scratch.eval.jac {
                        let row = if eq < tpl.n_f() {
                            local_row(eq)
                        } else {
                            Some(state_base + (eq - tpl.n_f()))
                        };
                        if let (Some(r), Some(c)) = (row, local_col(var)) {
                            sys.jacobian[(r, c)] += value;
                        }
                    }
                }
            }
            AssembleMode::Startup { pins } => {
                for (eq, &value) in scratch.eval.h.iter().enumerate() {
                    if let Some(row) = local_row(eq) {
                        sys.residual[row] += value;
                    }
                }
                // generic state pin rows
                for k in 0..n_states {
                    let slot = state_base + k;
                    let ordinal = layout.state_ordinal(slot);
                    sys.residual[slot] += x[slot] - pins[ordinal];
                    if want_jacobian {
                        sys.jacobian[(slot, slot)] += 1.0;
                    }
                }
                if want_jacobian {
                    for &(eq, var, value) in &scratch.eval.jac {
                        if let (Some(r), Some(c)) = (local_row(eq), local_col(var)) {
                            sys.jacobian[(r, c)] += value;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// One-shot assembly.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &[f64],
    mode: AssembleMode,
    gate_values: &[bool],
    time: f64,
    state_old: &[f64],
) -> Result<AssembledSystem> {
    let n = match mode {
        AssembleMode::Startup { .. } => layout.extended_size(),
        _ => layout.size(),
    };
    let mut sys = AssembledSystem::new(n);
    let mut scratch = AssemblyScratch::default();
    assemble_into(
        model, registry, layout, x, mode, gate_values, time, true, state_old, &mut sys,
        &mut scratch,
    )?;
    Ok(sys)
}

/// Solve J * delta = -residual by dense LU with partial pivoting,
/// naming the layout slot of a failing pivot.
pub fn lu_solve(sys: &AssembledSystem, layout: &UnknownLayout) -> Result<Vec<f64>> {
    let factors = crate::linalg::lu_factor(&sys.jacobian).map_err(|e| Error::Singular {
        index: e.column,
        slot: layout
            .names
            .get(e.column)
            .cloned()
            .unwrap_or_else(|| format!("slot {}", e.column)),
    })?;
    let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
    Ok(factors.solve(&rhs))
}

/// Gather the local unknown vector of one instance (transient layout).
pub fn gather_x_local(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    x: &[f64],
    inst_idx: usize,
) -> Vec<f64> {
    let inst = &model.instances[inst_idx];
    let tpl = registry.get(inst.template);
    let mut out = Vec::with_capacity(tpl.n_local());
    for &net in &inst.nodes {
        out.push(layout.net_slot[net].map(|s| x[s]).unwrap_or(0.0));
    }
    for k in 0..tpl.n_aux() {
        out.push(x[layout.inst_aux_base[inst_idx] + k]);
    }
    for k in 0..tpl.n_states() {
        out.push(x[layout.inst_state_base[inst_idx] + k]);
    }
    out
}
