//! Subcircuit flattening.
//!
//! Every subcircuit instance is replaced by its body, with internal nets
//! renamed `<instance path>.<local net>`, port nets merged with the
//! caller's nets and parameter overrides applied innermost-wins. The
//! result references only primitive templates with fully resolved real
//! parameter values.

use super::*;
use crate::elements::Registry;
use crate::error::{Error, Result};

/// Ground is the net literally named `0`.
pub const GROUND: &str = "0";

/// One primitive instance of the flattened circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatInstance {
    /// Hierarchical path name, e.g. `X1.S`.
    pub path: String,
    /// Index into the template registry.
    pub template: usize,
    /// Template id, kept for readable diagnostics.
    pub template_id: String,
    /// Net indices into [`FlatCircuit::nets`], one per template node.
    pub nodes: Vec<usize>,
    /// Control net indices.
    pub ctrl: Vec<usize>,
    /// Resolved real parameters, aligned with the template declaration.
    pub rparms: Vec<f64>,
    /// Resolved start-up parameters, aligned with the template declaration.
    pub stparms: Vec<f64>,
    /// Source line of the originating statement.
    pub line: usize,
}

/// Fully flattened instance graph.
#[derive(Debug, Clone, Default)]
pub struct FlatCircuit {
    /// Net names in first-appearance order.
    pub nets: Vec<String>,
    pub instances: Vec<FlatInstance>,
}

impl FlatCircuit {
    pub fn net_index(&self, name: &str) -> Option<usize> {
        self.nets.iter().position(|n| n == name)
    }

    pub fn ground_index(&self) -> Option<usize> {
        self.net_index(GROUND)
    }

    pub fn instance_index(&self, path: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.path == path)
    }

    fn intern(&mut self, name: &str) -> usize {
        match self.net_index(name) {
            Some(i) => i,
            None => {
                self.nets.push(name.to_string());
                self.nets.len() - 1
            }
        }
    }
}

fn ferr(message: impl Into<String>) -> Error {
    Error::Flatten { message: message.into() }
}

/// Lexical environment for parameter resolution: innermost scope last.
struct ParamEnv<'a> {
    scopes: Vec<Vec<(&'a str, f64)>>,
}

impl<'a> ParamEnv<'a> {
    fn lookup(&self, name: &str) -> Option<f64> {
        for scope in self.scopes.iter().rev() {
            if let Some((_, v)) = scope.iter().find(|(k, _)| *k == name) {
                return Some(*v);
            }
        }
        None
    }
}

/// Resolve a raw parameter value token: a literal, or the name of a
/// subcircuit parameter in scope.
fn resolve_value(token: &str, env: &ParamEnv, line: usize) -> Result<f64> {
    if let Ok(v) = parse_value(token) {
        return Ok(v);
    }
    env.lookup(token).ok_or_else(|| {
        ferr(format!(
            "line {line}: value `{token}` is neither a literal nor a parameter in scope"
        ))
    })
}

struct Flattener<'a> {
    doc: &'a NetlistDocument,
    registry: &'a Registry,
    out: FlatCircuit,
}

impl<'a> Flattener<'a> {
    /// Map a local net name to a global net index: ports map through the
    /// caller's bindings, ground stays ground, anything else becomes an
    /// instance-scoped net.
    fn map_net(
        &mut self,
        name: &str,
        prefix: &str,
        port_map: &[(String, usize)],
    ) -> usize {
        if let Some((_, idx)) = port_map.iter().find(|(p, _)| p == name) {
            return *idx;
        }
        if name == GROUND {
            return self.out.intern(GROUND);
        }
        if prefix.is_empty() {
            self.out.intern(name)
        } else {
            let scoped = format!("{prefix}.{name}");
            self.out.intern(&scoped)
        }
    }

    fn emit_element(
        &mut self,
        stmt: &'a ElementStmt,
        prefix: &str,
        port_map: &[(String, usize)],
        env: &ParamEnv<'a>,
    ) -> Result<()> {
        let template = self.registry.lookup_index(&stmt.type_id).ok_or_else(|| {
            ferr(format!(
                "line {}: unknown element type `{}` for `{}`",
                stmt.line, stmt.type_id, stmt.name
            ))
        })?;
        let tpl = self.registry.get(template);
        let path = if prefix.is_empty() {
            stmt.name.clone()
        } else {
            format!("{prefix}.{}", stmt.name)
        };

        let mut rparms: Vec<f64> = tpl.rparms.iter().map(|p| p.default).collect();
        for p in &stmt.params {
            match tpl.rparm_index(&p.key) {
                Some(idx) => rparms[idx] = resolve_value(&p.value, env, stmt.line)?,
                None => {
                    return Err(ferr(format!(
                        "line {}: element `{path}` of type `{}` has no parameter `{}`",
                        stmt.line, tpl.id, p.key
                    )))
                }
            }
        }
        let mut stparms: Vec<f64> = tpl.stparms.iter().map(|p| p.default).collect();
        for p in &stmt.st_params {
            match tpl.stparm_index(&p.key) {
                Some(idx) => stparms[idx] = resolve_value(&p.value, env, stmt.line)?,
                None => {
                    return Err(ferr(format!(
                        "line {}: element `{path}` of type `{}` has no start-up parameter `st_{}`",
                        stmt.line, tpl.id, p.key
                    )))
                }
            }
        }

        let nodes = stmt
            .nodes
            .iter()
            .map(|n| self.map_net(n, prefix, port_map))
            .collect();
        let ctrl = stmt
            .ctrl
            .iter()
            .map(|n| self.map_net(n, prefix, port_map))
            .collect();

        self.out.instances.push(FlatInstance {
            path,
            template,
            template_id: stmt.type_id.clone(),
            nodes,
            ctrl,
            rparms,
            stparms,
            line: stmt.line,
        });
        Ok(())
    }

    fn expand(
        &mut self,
        stmts: &'a [ElementStmt],
        prefix: &str,
        port_map: &[(String, usize)],
        env: &ParamEnv<'a>,
        stack: &mut Vec<&'a str>,
    ) -> Result<()> {
        for stmt in stmts {
            if !stmt.is_instance {
                self.emit_element(stmt, prefix, port_map, env)?;
                continue;
            }
            let sub = self.doc.subckt(&stmt.type_id).ok_or_else(|| {
                ferr(format!(
                    "line {}: unresolved subcircuit `{}` instantiated by `{}`",
                    stmt.line, stmt.type_id, stmt.name
                ))
            })?;
            if stack.contains(&sub.name.as_str()) {
                let mut cycle: Vec<&str> = stack.clone();
                cycle.push(&sub.name);
                return Err(ferr(format!(
                    "line {}: recursive subcircuit instantiation: {}",
                    stmt.line,
                    cycle.join(" -> ")
                )));
            }
            if stmt.nodes.len() != sub.ports.len() {
                return Err(ferr(format!(
                    "line {}: instance `{}` binds {} nets but subckt `{}` declares {} ports",
                    stmt.line,
                    stmt.name,
                    stmt.nodes.len(),
                    sub.name,
                    sub.ports.len()
                )));
            }
            if !stmt.ctrl.is_empty() {
                return Err(ferr(format!(
                    "line {}: instance `{}`: pass control nets through ports, not ctrl=",
                    stmt.line, stmt.name
                )));
            }

            // caller-side net bindings for the ports
            let bound: Vec<usize> = stmt
                .nodes
                .iter()
                .map(|n| self.map_net(n, prefix, port_map))
                .collect();
            let child_ports: Vec<(String, usize)> = sub
                .ports
                .iter()
                .cloned()
                .zip(bound)
                .collect();

            // parameter scope: defaults overridden by the instantiation
            let mut scope: Vec<(&str, f64)> = Vec::new();
            for d in &sub.param_defaults {
                scope.push((d.key.as_str(), resolve_value(&d.value, env, sub.line)?));
            }
            for p in &stmt.params {
                let slot = scope.iter_mut().find(|(k, _)| *k == p.key).ok_or_else(|| {
                    ferr(format!(
                        "line {}: instance `{}` overrides unknown parameter `{}` of subckt `{}`",
                        stmt.line, stmt.name, p.key, sub.name
                    ))
                })?;
                slot.1 = resolve_value(&p.value, env, stmt.line)?;
            }
            if !stmt.st_params.is_empty() {
                return Err(ferr(format!(
                    "line {}: instance `{}`: st_ parameters belong on elements",
                    stmt.line, stmt.name
                )));
            }

            let child_prefix = if prefix.is_empty() {
                stmt.name.clone()
            } else {
                format!("{prefix}.{}", stmt.name)
            };
            let mut child_env = ParamEnv { scopes: Vec::new() };
            child_env.scopes.push(scope);

            stack.push(&sub.name);
            self.expand(&sub.body, &child_prefix, &child_ports, &child_env, stack)?;
            stack.pop();
        }
        Ok(())
    }
}

/// Flatten a parsed document against a template registry.
pub fn flatten(doc: &NetlistDocument, registry: &Registry) -> Result<FlatCircuit> {
    let mut fl = Flattener { doc, registry, out: FlatCircuit::default() };
    let env = ParamEnv { scopes: Vec::new() };
    let mut stack = Vec::new();
    fl.expand(&doc.element_stmts, "", &[], &env, &mut stack)?;
    Ok(fl.out)
}
