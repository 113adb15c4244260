//! Topology validation of a flattened circuit.

use super::flatten::{FlatCircuit, GROUND};
use crate::elements::{Kind, Registry};
use crate::error::Diagnostic;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Whether an element provides a dc-conductive path between its nodes.
/// Capacitors block dc; inductors and sources count as conductive.
fn conductive(kind: Kind) -> bool {
    matches!(
        kind,
        Kind::Resistor
            | Kind::Inductor
            | Kind::VsrcDc
            | Kind::VsrcSin
            | Kind::IsrcDc
            | Kind::SwitchIdeal
            | Kind::DiodePwl
    )
}

/// Check all flat-circuit invariants. An empty list means the circuit is
/// ready to simulate.
pub fn validate(circuit: &FlatCircuit, registry: &Registry) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n_nets = circuit.nets.len();

    // net usage classification
    let mut electrical = vec![false; n_nets];
    let mut control = vec![false; n_nets];
    let mut touched = vec![false; n_nets];
    for inst in &circuit.instances {
        for &n in &inst.nodes {
            electrical[n] = true;
            touched[n] = true;
        }
        for &n in &inst.ctrl {
            control[n] = true;
            touched[n] = true;
        }
    }

    let ground = circuit.ground_index();
    match ground {
        Some(g) if electrical[g] => {}
        Some(_) | None => {
            diags.push(
                Diagnostic::error("no ground net".to_string())
                    .with_hint(format!("name one electrical net `{GROUND}`")),
            );
        }
    }

    for (idx, name) in circuit.nets.iter().enumerate() {
        if electrical[idx] && control[idx] {
            diags.push(Diagnostic::error(format!(
                "net `{name}` is used both electrically (nodes=) and as a control net (ctrl=)"
            )));
        }
        if !touched[idx] {
            diags.push(
                Diagnostic::error(format!("net `{name}` is not touched by any instance terminal"))
                    .with_hint("remove it or connect an element"),
            );
        }
    }

    // per-instance arity and parameter domains
    for inst in &circuit.instances {
        let tpl = registry.get(inst.template);
        if inst.nodes.len() != tpl.n_nodes {
            diags.push(Diagnostic::error(format!(
                "instance `{}` binds {} nets but template `{}` declares {} nodes",
                inst.path,
                inst.nodes.len(),
                tpl.id,
                tpl.n_nodes
            )));
        }
        let want_ctrl = tpl.ctrl_inputs + tpl.ctrl_outputs;
        if inst.ctrl.len() != want_ctrl {
            diags.push(Diagnostic::error(format!(
                "instance `{}` binds {} control nets but template `{}` declares {}",
                inst.path,
                inst.ctrl.len(),
                tpl.id,
                want_ctrl
            )));
        }
        for (decl, &value) in tpl.rparms.iter().zip(&inst.rparms) {
            if decl.positive && !(value > 0.0) {
                diags.push(Diagnostic::error(format!(
                    "instance `{}`: parameter {}={} must be positive",
                    inst.path, decl.name, value
                )));
            }
        }
    }

    // control wiring: every consumed ctrl net needs exactly one driver
    let mut drivers = vec![0usize; n_nets];
    for inst in &circuit.instances {
        let tpl = registry.get(inst.template);
        if tpl.ctrl_outputs > 0 {
            for &n in &inst.ctrl {
                drivers[n] += 1;
            }
        }
    }
    for inst in &circuit.instances {
        let tpl = registry.get(inst.template);
        if tpl.ctrl_inputs > 0 {
            for &n in inst.ctrl.iter().take(tpl.ctrl_inputs) {
                match drivers[n] {
                    1 => {}
                    0 => diags.push(
                        Diagnostic::error(format!(
                            "control net `{}` of instance `{}` has no gate driver",
                            circuit.nets[n], inst.path
                        ))
                        .with_hint("add a gate_clock/gate_pwm element driving it"),
                    ),
                    k => diags.push(Diagnostic::error(format!(
                        "control net `{}` has {k} gate drivers",
                        circuit.nets[n]
                    ))),
                }
            }
        }
    }

    // dc connectivity to ground over conductive elements
    if let Some(g) = ground {
        let mut uf = UnionFind::new(n_nets);
        for inst in &circuit.instances {
            let tpl = registry.get(inst.template);
            if !conductive(tpl.kind) || inst.nodes.len() < 2 {
                continue;
            }
            for w in inst.nodes.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let groot = uf.find(g);
        for (idx, name) in circuit.nets.iter().enumerate() {
            if electrical[idx] && uf.find(idx) != groot {
                diags.push(
                    Diagnostic::error(format!("net `{name}` floats: no dc path to ground"))
                        .with_hint("connect a resistance to ground"),
                );
            }
        }
    }

    diags
}
