//! Netlist document model: parsing, subcircuit flattening, validation.
//!
//! The on-disk format is line oriented, `keyword=value` based, with `#`
//! comments and `\` line continuation:
//!
//! ```text
//! title: buck converter
//! element name=V1 type=vsrc_dc nodes=in 0 v=12
//! element name=S1 type=switch_ideal nodes=in sw ctrl=g r_on=1m
//! subckt name=swd ports=a b g r_on=1m
//!   element name=S type=switch_ideal nodes=a b ctrl=g r_on=r_on
//!   element name=D type=diode_pwl nodes=b a
//! endsubckt
//! instance name=X1 of=swd nodes=p a1 g1
//! begin_solve
//!   kind=trns method=trz t_start=0 t_end=10m dt=1u
//!   out_file=run.dat outvars=v(out) L1.i
//! end_solve
//! ```
//!
//! Ground is the net literally named `0`. Parameter values are plain
//! literals with engineering suffixes; inside a subcircuit body a value
//! may also name a subcircuit parameter, resolved innermost-wins during
//! flattening.

mod flatten;
mod parse;
mod validate;

pub use flatten::{flatten, FlatCircuit, FlatInstance};
pub use parse::parse_netlist;
pub use validate::validate;

use crate::error::{Error, Result};

/// Parse a literal with an optional engineering suffix
/// (`p n u m k meg g`, case-insensitive).
pub fn parse_value(token: &str) -> Result<f64> {
    let err = || Error::Parse {
        line: 0,
        message: format!("malformed numeric value `{token}`"),
    };
    if token.is_empty() {
        return Err(err());
    }
    if let Ok(v) = token.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
        return Err(err());
    }
    let lower = token.to_ascii_lowercase();
    let (body, scale) = if let Some(stripped) = lower.strip_suffix("meg") {
        (stripped, 1e6)
    } else {
        let scale = match lower.as_bytes().last() {
            Some(b'p') => 1e-12,
            Some(b'n') => 1e-9,
            Some(b'u') => 1e-6,
            Some(b'm') => 1e-3,
            Some(b'k') => 1e3,
            Some(b'g') => 1e9,
            _ => return Err(err()),
        };
        (&lower[..lower.len() - 1], scale)
    };
    match body.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v * scale),
        _ => Err(err()),
    }
}

/// One `key=value` pair with source order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub key: String,
    pub value: String,
}

/// A raw element or subcircuit-instance statement.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStmt {
    /// Instance name, unique within its scope.
    pub name: String,
    /// Template id (`element`) or subcircuit name (`instance`).
    pub type_id: String,
    /// True when this statement instantiates a subcircuit.
    pub is_instance: bool,
    pub nodes: Vec<String>,
    pub ctrl: Vec<String>,
    /// Real parameters, raw value tokens (literal or parameter name).
    pub params: Vec<Param>,
    /// Start-up parameters (`st_` prefix stripped).
    pub st_params: Vec<Param>,
    pub line: usize,
}

/// A subcircuit definition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcktDef {
    pub name: String,
    pub ports: Vec<String>,
    /// Parameter defaults declared on the `subckt` line.
    pub param_defaults: Vec<Param>,
    pub body: Vec<ElementStmt>,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Startup,
    Transient,
    Ssw,
}

impl SolveKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SolveKind::Startup => "startup",
            SolveKind::Transient => "trns",
            SolveKind::Ssw => "ssw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    BackwardEuler,
    Trapezoidal,
}

impl Method {
    pub fn keyword(self) -> &'static str {
        match self {
            Method::BackwardEuler => "be",
            Method::Trapezoidal => "trz",
        }
    }
}

/// Where the initial state of a transient or shooting run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialStateSource {
    /// All state variables start at zero.
    Zero,
    /// Chain from the immediately preceding start-up solve block.
    StartupResult,
    /// Start-up solve using the elements' explicit st_ parameter values.
    Stparms,
}

/// How shooting sensitivities are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SswSensitivity {
    /// Chain rule through the per-step Jacobians (switching pattern
    /// frozen per iteration).
    Chain,
    /// One-sided finite differences of the period map; for circuits
    /// whose diode conduction boundaries move with the state.
    FiniteDifference,
}

/// One output column selection.
#[derive(Debug, Clone, PartialEq)]
pub enum OutVar {
    /// `v(<net>)`
    NodeVoltage(String),
    /// `<instance path>.<outparm>`
    InstanceOutparm { instance: String, outparm: String },
}

impl OutVar {
    pub fn parse(sel: &str, line: usize) -> Result<Self> {
        if let Some(inner) = sel.strip_prefix("v(").and_then(|s| s.strip_suffix(')')) {
            if inner.is_empty() {
                return Err(Error::Parse { line, message: format!("empty net in `{sel}`") });
            }
            return Ok(OutVar::NodeVoltage(inner.to_string()));
        }
        match sel.rsplit_once('.') {
            Some((instance, outparm)) if !instance.is_empty() && !outparm.is_empty() => {
                Ok(OutVar::InstanceOutparm {
                    instance: instance.to_string(),
                    outparm: outparm.to_string(),
                })
            }
            _ => Err(Error::Parse {
                line,
                message: format!("bad output selection `{sel}`: expected v(<net>) or <instance>.<outparm>"),
            }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            OutVar::NodeVoltage(net) => format!("v({net})"),
            OutVar::InstanceOutparm { instance, outparm } => format!("{instance}.{outparm}"),
        }
    }
}

/// One analysis request.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveBlock {
    pub kind: SolveKind,
    pub method: Method,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub variable_step: bool,
    pub tol_nr: f64,
    pub maxiter_nr: usize,
    /// Period for ssw runs; optional metadata window for transient runs.
    pub period: Option<f64>,
    pub tol_ssw: f64,
    pub maxiter_ssw: usize,
    pub ssw_sensitivity: SswSensitivity,
    pub initial_state: InitialStateSource,
    pub out_file: Option<String>,
    pub outvars: Vec<OutVar>,
    pub line: usize,
}

impl SolveBlock {
    pub fn defaults(kind: SolveKind) -> Self {
        SolveBlock {
            kind,
            method: Method::BackwardEuler,
            t_start: 0.0,
            t_end: 0.0,
            dt: 0.0,
            dt_min: 0.0,
            dt_max: 0.0,
            variable_step: false,
            tol_nr: 1e-8,
            maxiter_nr: 25,
            period: None,
            tol_ssw: 1e-10,
            maxiter_ssw: 20,
            ssw_sensitivity: SswSensitivity::Chain,
            initial_state: InitialStateSource::Stparms,
            out_file: None,
            outvars: Vec::new(),
            line: 0,
        }
    }

    /// Number of fixed steps per period for an ssw run; the block
    /// invariant requires `period / dt` to be an integer.
    pub fn ssw_steps(&self) -> Result<usize> {
        let period = self.period.ok_or_else(|| Error::Parse {
            line: self.line,
            message: "ssw solve block requires period=".into(),
        })?;
        let ratio = period / self.dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * steps {
            return Err(Error::Parse {
                line: self.line,
                message: format!(
                    "period/dt = {ratio} must be an integer number of steps for ssw"
                ),
            });
        }
        Ok(steps as usize)
    }
}

/// Structured netlist document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetlistDocument {
    pub title: String,
    pub element_stmts: Vec<ElementStmt>,
    pub subckt_defs: Vec<SubcktDef>,
    pub solve_blocks: Vec<SolveBlock>,
}

impl NetlistDocument {
    pub fn subckt(&self, name: &str) -> Option<&SubcktDef> {
        self.subckt_defs.iter().find(|s| s.name == name)
    }

    /// Render the document back to netlist text. Reparsing the output
    /// yields a structurally equal document.
    pub fn unparse(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&format!("title: {}\n", self.title));
        }
        for sub in &self.subckt_defs {
            out.push_str(&format!("subckt name={} ports={}", sub.name, sub.ports.join(" ")));
            for p in &sub.param_defaults {
                out.push_str(&format!(" {}={}", p.key, p.value));
            }
            out.push('\n');
            for stmt in &sub.body {
                out.push_str("  ");
                unparse_stmt(stmt, &mut out);
            }
            out.push_str("endsubckt\n");
        }
        for stmt in &self.element_stmts {
            unparse_stmt(stmt, &mut out);
        }
        for sb in &self.solve_blocks {
            out.push_str("begin_solve\n");
            out.push_str(&format!(
                "  kind={} method={} t_start={} t_end={} dt={}\n",
                sb.kind.keyword(),
                sb.method.keyword(),
                sb.t_start,
                sb.t_end,
                sb.dt
            ));
            out.push_str(&format!(
                "  dt_min={} dt_max={} variable_step={}\n",
                sb.dt_min,
                sb.dt_max,
                if sb.variable_step { "yes" } else { "no" }
            ));
            if let Some(period) = sb.period {
                out.push_str(&format!("  period={period}\n"));
            }
            out.push_str(&format!(
                "  tol_nr={} maxiter_nr={} tol_ssw={} maxiter_ssw={}\n",
                sb.tol_nr, sb.maxiter_nr, sb.tol_ssw, sb.maxiter_ssw
            ));
            out.push_str(&format!(
                "  init={} ssw_sens={}\n",
                match sb.initial_state {
                    InitialStateSource::Zero => "zero",
                    InitialStateSource::StartupResult => "startup",
                    InitialStateSource::Stparms => "stparms",
                },
                match sb.ssw_sensitivity {
                    SswSensitivity::Chain => "chain",
                    SswSensitivity::FiniteDifference => "fd",
                }
            ));
            if let Some(out_file) = &sb.out_file {
                out.push_str(&format!("  out_file={out_file}\n"));
            }
            if !sb.outvars.is_empty() {
                let sels: Vec<String> = sb.outvars.iter().map(|o| o.label()).collect();
                out.push_str(&format!("  outvars={}\n", sels.join(" ")));
            }
            out.push_str("end_solve\n");
        }
        out
    }
}

fn unparse_stmt(stmt: &ElementStmt, out: &mut String) {
    if stmt.is_instance {
        out.push_str(&format!("instance name={} of={}", stmt.name, stmt.type_id));
    } else {
        out.push_str(&format!("element name={} type={}", stmt.name, stmt.type_id));
    }
    if !stmt.nodes.is_empty() {
        out.push_str(&format!(" nodes={}", stmt.nodes.join(" ")));
    }
    if !stmt.ctrl.is_empty() {
        out.push_str(&format!(" ctrl={}", stmt.ctrl.join(" ")));
    }
    for p in &stmt.params {
        out.push_str(&format!(" {}={}", p.key, p.value));
    }
    for p in &stmt.st_params {
        out.push_str(&format!(" st_{}={}", p.key, p.value));
    }
    out.push('\n');
}
