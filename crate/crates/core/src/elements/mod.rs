//! Element templates: the declarative per-element description of
//! equations, parameters and Jacobian structure, plus the built-in
//! element library.
//!
//! Each template supplies up to three equation families:
//!
//! - `f` equations drive transient simulation. For an element with N
//!   nodes the first N rows are the terminal currents (summed into the
//!   KCL rows of the bound nets); any remaining rows are auxiliary
//!   equations, one per auxiliary unknown. Time derivatives of state
//!   variables appear only as constant-coefficient `d(state)/dt` slots
//!   declared in [`Template::dstate`]; discretising them is the
//!   integrator's job.
//! - `g` equations define the state variables (capacitor charge
//!   `q = C*(v_p - v_n)`, inductor flux `psi = L*i`).
//! - `h` equations drive start-up simulation, in which state variables
//!   are held fixed at prescribed values: a capacitor behaves as a dc
//!   voltage source (with an auxiliary start-up current), an inductor as
//!   a dc current source. Stateless elements reuse their `f` equations.

pub mod gates;

pub use gates::GateFunction;

use crate::error::{Error, Result};

/// Which analysis the evaluation serves. Exactly one is active per call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// `i_trns`: transient simulation (f and g equations).
    Transient,
    /// `i_startup`: start-up solve (h equations, states pinned).
    Startup,
    /// `i_ssw`: steady-state shooting; equations as in transient.
    Ssw,
}

/// What the caller wants computed. At least one flag must be set.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalRequest {
    /// `i_function`: residual values.
    pub function: bool,
    /// `i_jacobian`: partial derivatives.
    pub jacobian: bool,
    /// `i_outvar`: output parameters for plotting.
    pub outvar: bool,
    /// `i_one_time_parms`: derived parameters that do not change per step.
    pub one_time_parms: bool,
}

/// Evaluation context handed to a template.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub mode: EvalMode,
    pub request: EvalRequest,
    pub time: f64,
    /// Resolved boolean gating inputs, one per declared ctrl input.
    pub gates: &'a [bool],
}

/// Values produced by one evaluation; populated sections correspond to
/// the request flags.
#[derive(Debug, Clone, Default)]
pub struct EvalResult {
    /// Static parts of the f rows (node currents first, then auxiliary
    /// equations). d(state)/dt contributions live in [`Template::dstate`].
    pub f: Vec<f64>,
    /// State-definition residuals.
    pub g: Vec<f64>,
    /// Start-up residuals: node currents, auxiliary rows, then one row
    /// per start-up auxiliary unknown. State-pin rows are appended
    /// generically by the assembler.
    pub h: Vec<f64>,
    /// (equation, local variable, value) triples for the active mode.
    /// In transient mode equations are indexed f rows then g rows; in
    /// start-up mode they index the h rows.
    pub jac: Vec<(usize, usize, f64)>,
    /// Output parameter values, aligned with [`Template::outparms`].
    pub outparms: Vec<f64>,
    /// One-time derived parameters.
    pub one_time: Vec<f64>,
}

impl EvalResult {
    pub fn clear(&mut self) {
        self.f.clear();
        self.g.clear();
        self.h.clear();
        self.jac.clear();
        self.outparms.clear();
        self.one_time.clear();
    }
}

/// Real parameter declaration.
#[derive(Debug, Clone)]
pub struct ParmDecl {
    pub name: &'static str,
    pub default: f64,
    /// Declared positivity constraint; violated values are evaluation errors.
    pub positive: bool,
}

fn parm(name: &'static str, default: f64) -> ParmDecl {
    ParmDecl { name, default, positive: false }
}

fn pos_parm(name: &'static str, default: f64) -> ParmDecl {
    ParmDecl { name, default, positive: true }
}

/// A declared `d(state)/dt` occurrence in an f row.
#[derive(Debug, Clone, Copy)]
pub struct DStateCoeff {
    pub f_row: usize,
    pub state: usize,
    pub coeff: f64,
}

/// One entry of a declared dependency set.
#[derive(Debug, Clone, Copy)]
pub struct Dep {
    /// Local variable index (node voltages, then aux, then states, then
    /// start-up auxiliaries).
    pub var: usize,
    /// Entry is numerically constant across evaluation points.
    pub constant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Resistor,
    Capacitor,
    Inductor,
    VsrcDc,
    VsrcSin,
    IsrcDc,
    SwitchIdeal,
    DiodePwl,
    GateClock,
    GatePwm,
    GateConst,
}

/// Declarative description of one element type.
#[derive(Debug, Clone)]
pub struct Template {
    pub id: &'static str,
    pub kind: Kind,
    pub n_nodes: usize,
    pub rparms: Vec<ParmDecl>,
    pub stparms: Vec<ParmDecl>,
    pub aux_names: Vec<&'static str>,
    pub state_names: Vec<&'static str>,
    pub startup_aux_names: Vec<&'static str>,
    pub outparms: Vec<&'static str>,
    /// Gating inputs consumed (switches).
    pub ctrl_inputs: usize,
    /// Control nets driven (gate generators).
    pub ctrl_outputs: usize,
    pub dstate: Vec<DStateCoeff>,
    /// Dependency sets per f row, then per g row.
    pub f_deps: Vec<Vec<Dep>>,
    pub g_deps: Vec<Vec<Dep>>,
    /// Dependency sets per h row (node, aux, start-up aux rows).
    pub h_deps: Vec<Vec<Dep>>,
}

impl Template {
    pub fn n_aux(&self) -> usize {
        self.aux_names.len()
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_startup_aux(&self) -> usize {
        self.startup_aux_names.len()
    }

    /// Number of f equations (node currents plus auxiliary rows).
    pub fn n_f(&self) -> usize {
        self.n_nodes + self.n_aux()
    }

    pub fn n_g(&self) -> usize {
        self.n_states()
    }

    /// Number of h equations excluding the generic state-pin rows.
    pub fn n_h(&self) -> usize {
        self.n_nodes + self.n_aux() + self.n_startup_aux()
    }

    /// Local unknown count in transient mode.
    pub fn n_local(&self) -> usize {
        self.n_nodes + self.n_aux() + self.n_states()
    }

    pub fn rparm_index(&self, name: &str) -> Option<usize> {
        self.rparms.iter().position(|p| p.name == name)
    }

    pub fn stparm_index(&self, name: &str) -> Option<usize> {
        self.stparms.iter().position(|p| p.name == name)
    }

    pub fn outparm_index(&self, name: &str) -> Option<usize> {
        self.outparms.iter().position(|p| *p == name)
    }

    pub fn is_gate_source(&self) -> bool {
        self.ctrl_outputs > 0
    }

    /// State values implied by the start-up parameters (capacitor
    /// `q = C*v0`, inductor `psi = L*i0`).
    pub fn initial_states(&self, rparms: &[f64], stparms: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::Capacitor => {
                let c = rparms[0];
                let v0 = stparms[0];
                vec![c * v0, -c * v0]
            }
            Kind::Inductor => {
                let l = rparms[0];
                let i0 = stparms[0];
                vec![l * i0]
            }
            _ => Vec::new(),
        }
    }

    /// Recover d(state)/dt from a completed start-up solution. For a
    /// capacitor that is the start-up auxiliary current; for an inductor
    /// the branch voltage.
    pub fn state_derivs(&self, x_local: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::Capacitor => {
                let cur_p = x_local[4];
                vec![cur_p, -cur_p]
            }
            Kind::Inductor => vec![x_local[0] - x_local[1]],
            _ => Vec::new(),
        }
    }

    /// Gate function for gate-generator templates.
    pub fn gate_function(&self, rparms: &[f64]) -> Option<GateFunction> {
        match self.kind {
            Kind::GateClock => Some(GateFunction::PulseClock {
                period: rparms[0],
                duty: rparms[1],
                delay: rparms[2],
            }),
            Kind::GatePwm => Some(GateFunction::PwmSineTriangle {
                period: rparms[0],
                carrier_freq: rparms[1],
                modulation_index: rparms[2],
                phase: rparms[3],
                level_lo: rparms[4],
                level_hi: rparms[5],
                invert: rparms[6] != 0.0,
            }),
            Kind::GateConst => Some(GateFunction::Constant { on: rparms[0] != 0.0 }),
            _ => None,
        }
    }
}

/// Registry of built-in templates, looked up by id.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: Vec<Template>,
}

impl Registry {
    pub fn lookup(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn lookup_index(&self, id: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }

    pub fn get(&self, idx: usize) -> &Template {
        &self.templates[idx]
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }
}

fn resistive_deps() -> Vec<Vec<Dep>> {
    let row = |_: usize| {
        vec![Dep { var: 0, constant: true }, Dep { var: 1, constant: true }]
    };
    vec![row(0), row(1)]
}

fn pwl_deps() -> Vec<Vec<Dep>> {
    // same sparsity as a resistor but the value depends on the active branch
    let row = |_: usize| {
        vec![Dep { var: 0, constant: false }, Dep { var: 1, constant: false }]
    };
    vec![row(0), row(1)]
}

/// The compiled-in element library.
pub fn builtin_registry() -> Registry {
    let mut templates = Vec::new();

    templates.push(Template {
        id: "r",
        kind: Kind::Resistor,
        n_nodes: 2,
        rparms: vec![pos_parm("r", 1.0)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["i", "v"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: resistive_deps(),
        g_deps: vec![],
        h_deps: resistive_deps(),
    });

    templates.push(Template {
        id: "c",
        kind: Kind::Capacitor,
        n_nodes: 2,
        rparms: vec![pos_parm("c", 1e-6)],
        stparms: vec![parm("v0", 0.0)],
        aux_names: vec![],
        state_names: vec!["q_p", "q_m"],
        startup_aux_names: vec!["cur_p"],
        outparms: vec!["v"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![
            DStateCoeff { f_row: 0, state: 0, coeff: 1.0 },
            DStateCoeff { f_row: 1, state: 1, coeff: 1.0 },
        ],
        f_deps: vec![vec![], vec![]],
        g_deps: vec![
            vec![
                Dep { var: 2, constant: true },
                Dep { var: 0, constant: true },
                Dep { var: 1, constant: true },
            ],
            vec![Dep { var: 3, constant: true }, Dep { var: 2, constant: true }],
        ],
        // h rows: node p, node n, constraint v_p - v_n = v0; cur_p is local var 4
        h_deps: vec![
            vec![Dep { var: 4, constant: true }],
            vec![Dep { var: 4, constant: true }],
            vec![Dep { var: 0, constant: true }, Dep { var: 1, constant: true }],
        ],
    });

    templates.push(Template {
        id: "l",
        kind: Kind::Inductor,
        n_nodes: 2,
        rparms: vec![pos_parm("l", 1e-3)],
        stparms: vec![parm("i0", 0.0)],
        aux_names: vec!["i"],
        state_names: vec!["psi"],
        startup_aux_names: vec![],
        outparms: vec!["i"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![DStateCoeff { f_row: 2, state: 0, coeff: -1.0 }],
        f_deps: vec![
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 0, constant: true }, Dep { var: 1, constant: true }],
        ],
        g_deps: vec![vec![
            Dep { var: 3, constant: true },
            Dep { var: 2, constant: true },
        ]],
        h_deps: vec![
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 2, constant: true }],
        ],
    });

    let vsrc_deps = || {
        vec![
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 2, constant: true }],
            vec![Dep { var: 0, constant: true }, Dep { var: 1, constant: true }],
        ]
    };

    templates.push(Template {
        id: "vsrc_dc",
        kind: Kind::VsrcDc,
        n_nodes: 2,
        rparms: vec![parm("v", 0.0)],
        stparms: vec![],
        aux_names: vec!["i"],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["i", "v"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: vsrc_deps(),
        g_deps: vec![],
        h_deps: vsrc_deps(),
    });

    templates.push(Template {
        id: "vsrc_sin",
        kind: Kind::VsrcSin,
        n_nodes: 2,
        rparms: vec![
            parm("v0", 0.0),
            parm("va", 1.0),
            pos_parm("freq", 50.0),
            parm("phase", 0.0),
        ],
        stparms: vec![],
        aux_names: vec!["i"],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["i", "v"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: vsrc_deps(),
        g_deps: vec![],
        h_deps: vsrc_deps(),
    });

    templates.push(Template {
        id: "isrc_dc",
        kind: Kind::IsrcDc,
        n_nodes: 2,
        rparms: vec![parm("i", 0.0)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["v", "i"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: vec![vec![], vec![]],
        g_deps: vec![],
        h_deps: vec![vec![], vec![]],
    });

    templates.push(Template {
        id: "switch_ideal",
        kind: Kind::SwitchIdeal,
        n_nodes: 2,
        rparms: vec![pos_parm("r_on", 1e-3), pos_parm("r_off", 1e6)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["i", "v"],
        ctrl_inputs: 1,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: pwl_deps(),
        g_deps: vec![],
        h_deps: pwl_deps(),
    });

    templates.push(Template {
        id: "diode_pwl",
        kind: Kind::DiodePwl,
        n_nodes: 2,
        rparms: vec![pos_parm("r_on", 1e-3), pos_parm("r_off", 1e6)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["i", "v"],
        ctrl_inputs: 0,
        ctrl_outputs: 0,
        dstate: vec![],
        f_deps: pwl_deps(),
        g_deps: vec![],
        h_deps: pwl_deps(),
    });

    templates.push(Template {
        id: "gate_clock",
        kind: Kind::GateClock,
        n_nodes: 0,
        rparms: vec![pos_parm("period", 1e-3), parm("duty", 0.5), parm("delay", 0.0)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["g"],
        ctrl_inputs: 0,
        ctrl_outputs: 1,
        dstate: vec![],
        f_deps: vec![],
        g_deps: vec![],
        h_deps: vec![],
    });

    templates.push(Template {
        id: "gate_pwm",
        kind: Kind::GatePwm,
        n_nodes: 0,
        rparms: vec![
            pos_parm("period", 20e-3),
            pos_parm("carrier_freq", 1e3),
            parm("m", 0.8),
            parm("phase", 0.0),
            parm("level_lo", -1.0),
            parm("level_hi", 1.0),
            parm("invert", 0.0),
        ],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["g"],
        ctrl_inputs: 0,
        ctrl_outputs: 1,
        dstate: vec![],
        f_deps: vec![],
        g_deps: vec![],
        h_deps: vec![],
    });

    templates.push(Template {
        id: "gate_const",
        kind: Kind::GateConst,
        n_nodes: 0,
        rparms: vec![parm("on", 1.0)],
        stparms: vec![],
        aux_names: vec![],
        state_names: vec![],
        startup_aux_names: vec![],
        outparms: vec!["g"],
        ctrl_inputs: 0,
        ctrl_outputs: 1,
        dstate: vec![],
        f_deps: vec![],
        g_deps: vec![],
        h_deps: vec![],
    });

    Registry { templates }
}

fn domain_err(instance: &str, message: impl Into<String>) -> Error {
    Error::Element { instance: instance.to_string(), message: message.into() }
}

fn check_positive(tpl: &Template, instance: &str, rparms: &[f64]) -> Result<()> {
    for (decl, &value) in tpl.rparms.iter().zip(rparms) {
        if decl.positive && !(value > 0.0) {
            return Err(domain_err(
                instance,
                format!("parameter {}={} must be positive", decl.name, value),
            ));
        }
    }
    Ok(())
}

/// Source value of a voltage source template at time `t`.
fn source_voltage(tpl: &Template, rparms: &[f64], t: f64) -> f64 {
    match tpl.kind {
        Kind::VsrcDc => rparms[0],
        Kind::VsrcSin => {
            let (v0, va, freq, phase) = (rparms[0], rparms[1], rparms[2], rparms[3]);
            v0 + va * (2.0 * std::f64::consts::PI * freq * t + phase).sin()
        }
        _ => unreachable!(),
    }
}

/// Evaluate one element instance.
///
/// `x_local` is ordered node voltages, auxiliary unknowns, state
/// variables, and (in start-up mode) start-up auxiliaries. `state_old`
/// carries the previous accepted state values in transient mode and the
/// pinned state values in start-up mode.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    tpl: &Template,
    instance: &str,
    rparms: &[f64],
    x_local: &[f64],
    state_old: &[f64],
    ctx: &EvalContext,
    out: &mut EvalResult,
) -> Result<()> {
    out.clear();

    if ctx.request.one_time_parms {
        check_positive(tpl, instance, rparms)?;
        out.one_time = match tpl.kind {
            Kind::Resistor => vec![1.0 / rparms[0]],
            Kind::SwitchIdeal | Kind::DiodePwl => vec![1.0 / rparms[0], 1.0 / rparms[1]],
            _ => Vec::new(),
        };
    }

    let startup = ctx.mode == EvalMode::Startup;
    let wants_eqs = ctx.request.function || ctx.request.jacobian;

    if wants_eqs {
        match tpl.kind {
            Kind::Resistor => {
                let r = rparms[0];
                if !(r > 0.0) {
                    return Err(domain_err(instance, format!("r={r} must be positive")));
                }
                resistive_rows(1.0 / r, x_local, startup, ctx, out);
            }
            Kind::SwitchIdeal => {
                let (r_on, r_off) = (rparms[0], rparms[1]);
                if !(r_on > 0.0) || !(r_off > 0.0) {
                    return Err(domain_err(instance, "r_on and r_off must be positive"));
                }
                let on = *ctx.gates.first().ok_or_else(|| {
                    domain_err(instance, "switch_ideal requires one resolved gate input")
                })?;
                let g = if on { 1.0 / r_on } else { 1.0 / r_off };
                resistive_rows(g, x_local, startup, ctx, out);
            }
            Kind::DiodePwl => {
                let (r_on, r_off) = (rparms[0], rparms[1]);
                if !(r_on > 0.0) || !(r_off > 0.0) {
                    return Err(domain_err(instance, "r_on and r_off must be positive"));
                }
                let conducting = x_local[0] - x_local[1] >= 0.0;
                let g = if conducting { 1.0 / r_on } else { 1.0 / r_off };
                resistive_rows(g, x_local, startup, ctx, out);
            }
            Kind::Capacitor => {
                let c = rparms[0];
                if !(c > 0.0) {
                    return Err(domain_err(instance, format!("c={c} must be positive")));
                }
                let dv = x_local[0] - x_local[1];
                if startup {
                    let cur_p = x_local[4];
                    let v_pin = state_old[0] / c;
                    if ctx.request.function {
                        out.h.extend_from_slice(&[cur_p, -cur_p, dv - v_pin]);
                    }
                    if ctx.request.jacobian {
                        out.jac.extend_from_slice(&[
                            (0, 4, 1.0),
                            (1, 4, -1.0),
                            (2, 0, 1.0),
                            (2, 1, -1.0),
                        ]);
                    }
                } else {
                    let (q_p, q_m) = (x_local[2], x_local[3]);
                    if ctx.request.function {
                        out.f.extend_from_slice(&[0.0, 0.0]);
                        out.g.extend_from_slice(&[q_p - c * dv, q_m + q_p]);
                    }
                    if ctx.request.jacobian {
                        out.jac.extend_from_slice(&[
                            (2, 2, 1.0),
                            (2, 0, -c),
                            (2, 1, c),
                            (3, 3, 1.0),
                            (3, 2, 1.0),
                        ]);
                    }
                }
            }
            Kind::Inductor => {
                let l = rparms[0];
                if !(l > 0.0) {
                    return Err(domain_err(instance, format!("l={l} must be positive")));
                }
                let i = x_local[2];
                if startup {
                    let i_pin = state_old[0] / l;
                    if ctx.request.function {
                        out.h.extend_from_slice(&[i, -i, i - i_pin]);
                    }
                    if ctx.request.jacobian {
                        out.jac.extend_from_slice(&[(0, 2, 1.0), (1, 2, -1.0), (2, 2, 1.0)]);
                    }
                } else {
                    let psi = x_local[3];
                    if ctx.request.function {
                        // f2 also carries -d(psi)/dt via the declared slot
                        out.f.extend_from_slice(&[i, -i, x_local[0] - x_local[1]]);
                        out.g.extend_from_slice(&[psi - l * i]);
                    }
                    if ctx.request.jacobian {
                        out.jac.extend_from_slice(&[
                            (0, 2, 1.0),
                            (1, 2, -1.0),
                            (2, 0, 1.0),
                            (2, 1, -1.0),
                            (3, 3, 1.0),
                            (3, 2, -l),
                        ]);
                    }
                }
            }
            Kind::VsrcDc | Kind::VsrcSin => {
                let i = x_local[2];
                let v = source_voltage(tpl, rparms, ctx.time);
                if ctx.request.function {
                    let rows = [i, -i, x_local[0] - x_local[1] - v];
                    if startup {
                        out.h.extend_from_slice(&rows);
                    } else {
                        out.f.extend_from_slice(&rows);
                    }
                }
                if ctx.request.jacobian {
                    out.jac.extend_from_slice(&[
                        (0, 2, 1.0),
                        (1, 2, -1.0),
                        (2, 0, 1.0),
                        (2, 1, -1.0),
                    ]);
                }
            }
            Kind::IsrcDc => {
                let i = rparms[0];
                if ctx.request.function {
                    // emits i into its p node
                    if startup {
                        out.h.extend_from_slice(&[-i, i]);
                    } else {
                        out.f.extend_from_slice(&[-i, i]);
                    }
                }
            }
            Kind::GateClock | Kind::GatePwm | Kind::GateConst => {
                // no electrical equations
            }
        }
    }

    if ctx.request.outvar {
        out.outparms = outparm_values(tpl, rparms, x_local, ctx);
    }

    Ok(())
}

fn resistive_rows(g: f64, x_local: &[f64], startup: bool, ctx: &EvalContext, out: &mut EvalResult) {
    let i = g * (x_local[0] - x_local[1]);
    if ctx.request.function {
        if startup {
            out.h.extend_from_slice(&[i, -i]);
        } else {
            out.f.extend_from_slice(&[i, -i]);
        }
    }
    if ctx.request.jacobian {
        out.jac
            .extend_from_slice(&[(0, 0, g), (0, 1, -g), (1, 0, -g), (1, 1, g)]);
    }
}

fn outparm_values(tpl: &Template, rparms: &[f64], x_local: &[f64], ctx: &EvalContext) -> Vec<f64> {
    match tpl.kind {
        Kind::Resistor => {
            let v = x_local[0] - x_local[1];
            vec![v / rparms[0], v]
        }
        Kind::Capacitor => vec![x_local[0] - x_local[1]],
        Kind::Inductor => vec![x_local[2]],
        Kind::VsrcDc | Kind::VsrcSin => vec![x_local[2], x_local[0] - x_local[1]],
        Kind::IsrcDc => vec![x_local[0] - x_local[1], rparms[0]],
        Kind::SwitchIdeal => {
            let on = ctx.gates.first().copied().unwrap_or(false);
            let g = if on { 1.0 / rparms[0] } else { 1.0 / rparms[1] };
            let v = x_local[0] - x_local[1];
            vec![g * v, v]
        }
        Kind::DiodePwl => {
            let v = x_local[0] - x_local[1];
            let g = if v >= 0.0 { 1.0 / rparms[0] } else { 1.0 / rparms[1] };
            vec![g * v, v]
        }
        Kind::GateClock | Kind::GatePwm | Kind::GateConst => {
            let on = tpl
                .gate_function(rparms)
                .map(|g| g.value(ctx.time))
                .unwrap_or(false);
            vec![if on { 1.0 } else { 0.0 }]
        }
    }
}
