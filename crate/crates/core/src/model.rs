//! Simulation model: the flattened circuit bound to its templates, with
//! gate functions resolved onto control nets.

use crate::elements::{
    evaluate, EvalContext, EvalMode, EvalRequest, EvalResult, GateFunction, Registry,
};
use crate::error::{Error, Result};
use crate::netlist::FlatCircuit;

/// One electrical instance ready for evaluation.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub path: String,
    pub template: usize,
    /// Net index per template node (index into the model's net list).
    pub nodes: Vec<usize>,
    pub rparms: Vec<f64>,
    pub stparms: Vec<f64>,
    /// Index into [`SimModel::gates`] per declared ctrl input.
    pub gate_inputs: Vec<usize>,
}

/// A gate generator bound to a control net.
#[derive(Debug, Clone)]
pub struct BoundGate {
    pub path: String,
    pub function: GateFunction,
    /// Control net this gate drives.
    pub ctrl_net: usize,
}

/// Everything the solvers need, derived once from a validated circuit.
#[derive(Debug, Clone)]
pub struct SimModel {
    pub nets: Vec<String>,
    pub ground: usize,
    /// Electrical instances in document order.
    pub instances: Vec<BoundInstance>,
    /// Gate generators in document order.
    pub gates: Vec<BoundGate>,
}

impl SimModel {
    /// Build the model. The circuit must have passed [`crate::netlist::validate`].
    pub fn build(circuit: &FlatCircuit, registry: &Registry) -> Result<SimModel> {
        let ground = circuit.ground_index().ok_or_else(|| Error::Flatten {
            message: "circuit has no ground net".into(),
        })?;

        let mut gates = Vec::new();
        for inst in &circuit.instances {
            let tpl = registry.get(inst.template);
            if tpl.ctrl_outputs == 0 {
                continue;
            }
            let function = tpl.gate_function(&inst.rparms).ok_or_else(|| Error::Element {
                instance: inst.path.clone(),
                message: "template declares a ctrl output but no gate function".into(),
            })?;
            gates.push(BoundGate {
                path: inst.path.clone(),
                function,
                ctrl_net: inst.ctrl[0],
            });
        }

        let mut instances = Vec::new();
        let mut scratch = EvalResult::default();
        for inst in &circuit.instances {
            let tpl = registry.get(inst.template);
            if tpl.ctrl_outputs > 0 {
                continue;
            }
            let mut gate_inputs = Vec::new();
            for &net in inst.ctrl.iter().take(tpl.ctrl_inputs) {
                let gi = gates.iter().position(|g| g.ctrl_net == net).ok_or_else(|| {
                    Error::Element {
                        instance: inst.path.clone(),
                        message: format!("control net `{}` has no driver", circuit.nets[net]),
                    }
                })?;
                gate_inputs.push(gi);
            }
            // one-time parameter pass doubles as the domain check
            let ctx = EvalContext {
                mode: EvalMode::Transient,
                request: EvalRequest { one_time_parms: true, ..Default::default() },
                time: 0.0,
                gates: &[],
            };
            let zeros = vec![0.0; tpl.n_local()];
            evaluate(tpl, &inst.path, &inst.rparms, &zeros, &[], &ctx, &mut scratch)?;

            instances.push(BoundInstance {
                path: inst.path.clone(),
                template: inst.template,
                nodes: inst.nodes.clone(),
                rparms: inst.rparms.clone(),
                stparms: inst.stparms.clone(),
                gate_inputs,
            });
        }

        Ok(SimModel { nets: circuit.nets.clone(), ground, instances, gates })
    }

    pub fn instance_index(&self, path: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.path == path)
    }

    pub fn gate_index(&self, path: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.path == path)
    }

    /// Sample every gate at time `t`.
    pub fn sample_gates(&self, t: f64) -> Vec<bool> {
        self.gates.iter().map(|g| g.function.value(t)).collect()
    }

    /// Earliest gate switching instant strictly after `t`, if any.
    pub fn next_gate_edge(&self, t: f64) -> Option<f64> {
        self.gates
            .iter()
            .filter_map(|g| g.function.next_edge_after(t))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}
