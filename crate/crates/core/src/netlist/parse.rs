//! Line-oriented netlist parser.

use super::*;
use crate::error::{Error, Result};

/// A logical line after comment stripping and `\` continuation.
struct Line {
    number: usize,
    text: String,
}

fn logical_lines(text: &str) -> Vec<Line> {
    let mut out: Vec<Line> = Vec::new();
    let mut pending: Option<Line> = None;
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let without_comment = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed_end = without_comment.trim_end();
        let (content, continues) = match trimmed_end.strip_suffix('\\') {
            Some(head) => (head, true),
            None => (trimmed_end, false),
        };
        match pending.take() {
            Some(mut line) => {
                line.text.push(' ');
                line.text.push_str(content.trim());
                if continues {
                    pending = Some(line);
                } else {
                    out.push(line);
                }
            }
            None => {
                let line = Line { number, text: content.trim().to_string() };
                if continues {
                    pending = Some(line);
                } else if !line.text.is_empty() {
                    out.push(line);
                }
            }
        }
    }
    if let Some(line) = pending {
        out.push(line);
    }
    out.retain(|l| !l.text.is_empty());
    out
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Tokenised `key=value` pairs; bare tokens attach to the preceding
/// multi-valued key (`nodes`, `ports`, `ctrl`, `outvars`).
struct KeyValues {
    pairs: Vec<(String, Vec<String>)>,
    line: usize,
}

const MULTI_KEYS: &[&str] = &["nodes", "ports", "ctrl", "outvars"];

fn tokenize(text: &str, line: usize) -> Result<KeyValues> {
    let mut pairs: Vec<(String, Vec<String>)> = Vec::new();
    for tok in text.split_whitespace() {
        match tok.split_once('=') {
            Some((key, value)) => {
                if key.is_empty() || value.is_empty() {
                    return Err(perr(line, format!("malformed token `{tok}`")));
                }
                pairs.push((key.to_string(), vec![value.to_string()]));
            }
            None => match pairs.last_mut() {
                Some((key, values)) if MULTI_KEYS.contains(&key.as_str()) => {
                    values.push(tok.to_string());
                }
                _ => {
                    return Err(perr(
                        line,
                        format!("stray token `{tok}`: expected key=value"),
                    ));
                }
            },
        }
    }
    Ok(KeyValues { pairs, line })
}

impl KeyValues {
    fn take_single(&mut self, key: &str) -> Result<Option<String>> {
        let idx = match self.pairs.iter().position(|(k, _)| k == key) {
            Some(i) => i,
            None => return Ok(None),
        };
        let (_, values) = self.pairs.remove(idx);
        if values.len() != 1 {
            return Err(perr(self.line, format!("{key}= takes a single value")));
        }
        if self.pairs.iter().any(|(k, _)| k == key) {
            return Err(perr(self.line, format!("duplicate key {key}=")));
        }
        Ok(values.into_iter().next())
    }

    fn require(&mut self, key: &str, what: &str) -> Result<String> {
        self.take_single(key)?
            .ok_or_else(|| perr(self.line, format!("{what} requires {key}=")))
    }

    fn take_multi(&mut self, key: &str) -> Result<Vec<String>> {
        let idx = match self.pairs.iter().position(|(k, _)| k == key) {
            Some(i) => i,
            None => return Ok(Vec::new()),
        };
        let (_, values) = self.pairs.remove(idx);
        if self.pairs.iter().any(|(k, _)| k == key) {
            return Err(perr(self.line, format!("duplicate key {key}=")));
        }
        Ok(values)
    }

    /// Remaining pairs interpreted as element parameters.
    fn into_params(self, line: usize) -> Result<(Vec<Param>, Vec<Param>)> {
        let mut params = Vec::new();
        let mut st_params = Vec::new();
        for (key, values) in self.pairs {
            if values.len() != 1 {
                return Err(perr(line, format!("{key}= takes a single value")));
            }
            let value = values.into_iter().next().unwrap();
            match key.strip_prefix("st_") {
                Some(st_key) => st_params.push(Param { key: st_key.to_string(), value }),
                None => params.push(Param { key, value }),
            }
        }
        Ok((params, st_params))
    }
}

fn parse_element_line(text: &str, line: usize, is_instance: bool) -> Result<ElementStmt> {
    let what = if is_instance { "instance" } else { "element" };
    let body = text
        .split_once(char::is_whitespace)
        .map(|(_, rest)| rest)
        .unwrap_or("");
    let mut kv = tokenize(body, line)?;
    let name = kv.require("name", what)?;
    let type_id = if is_instance {
        kv.require("of", what)?
    } else {
        kv.require("type", what)?
    };
    let nodes = kv.take_multi("nodes")?;
    let ctrl = kv.take_multi("ctrl")?;
    let (params, st_params) = kv.into_params(line)?;
    Ok(ElementStmt { name, type_id, is_instance, nodes, ctrl, params, st_params, line })
}

fn parse_yes_no(value: &str, line: usize, key: &str) -> Result<bool> {
    match value {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(perr(line, format!("{key}= expects yes or no, got `{value}`"))),
    }
}

fn parse_real(value: &str, line: usize, key: &str) -> Result<f64> {
    parse_value(value).map_err(|_| perr(line, format!("bad value for {key}=: `{value}`")))
}

fn parse_solve_block(lines: &[Line], start_line: usize) -> Result<SolveBlock> {
    // aggregate every key=value of the block body
    let mut merged = String::new();
    for l in lines {
        merged.push(' ');
        merged.push_str(&l.text);
    }
    let mut kv = tokenize(&merged, start_line)?;
    let kind = match kv.require("kind", "solve block")?.as_str() {
        "startup" => SolveKind::Startup,
        "trns" => SolveKind::Transient,
        "ssw" => SolveKind::Ssw,
        other => return Err(perr(start_line, format!("unknown solve kind `{other}`"))),
    };
    let mut sb = SolveBlock::defaults(kind);
    sb.line = start_line;
    if let Some(m) = kv.take_single("method")? {
        sb.method = match m.as_str() {
            "be" => Method::BackwardEuler,
            "trz" => Method::Trapezoidal,
            other => return Err(perr(start_line, format!("unknown method `{other}`"))),
        };
    }
    if let Some(v) = kv.take_single("t_start")? {
        sb.t_start = parse_real(&v, start_line, "t_start")?;
    }
    if let Some(v) = kv.take_single("t_end")? {
        sb.t_end = parse_real(&v, start_line, "t_end")?;
    }
    if let Some(v) = kv.take_single("dt")? {
        sb.dt = parse_real(&v, start_line, "dt")?;
    }
    if let Some(v) = kv.take_single("variable_step")? {
        sb.variable_step = parse_yes_no(&v, start_line, "variable_step")?;
    }
    sb.dt_min = match kv.take_single("dt_min")? {
        Some(v) => parse_real(&v, start_line, "dt_min")?,
        None if sb.variable_step => sb.dt / 1024.0,
        None => sb.dt,
    };
    sb.dt_max = match kv.take_single("dt_max")? {
        Some(v) => parse_real(&v, start_line, "dt_max")?,
        None => sb.dt,
    };
    if let Some(v) = kv.take_single("period")? {
        sb.period = Some(parse_real(&v, start_line, "period")?);
    }
    if let Some(v) = kv.take_single("tol_nr")? {
        sb.tol_nr = parse_real(&v, start_line, "tol_nr")?;
    }
    if let Some(v) = kv.take_single("maxiter_nr")? {
        sb.maxiter_nr = parse_real(&v, start_line, "maxiter_nr")? as usize;
    }
    if let Some(v) = kv.take_single("tol_ssw")? {
        sb.tol_ssw = parse_real(&v, start_line, "tol_ssw")?;
    }
    if let Some(v) = kv.take_single("maxiter_ssw")? {
        sb.maxiter_ssw = parse_real(&v, start_line, "maxiter_ssw")? as usize;
    }
    if let Some(v) = kv.take_single("init")? {
        sb.initial_state = match v.as_str() {
            "zero" => InitialStateSource::Zero,
            "startup" => InitialStateSource::StartupResult,
            "stparms" => InitialStateSource::Stparms,
            other => return Err(perr(start_line, format!("unknown init source `{other}`"))),
        };
    }
    if let Some(v) = kv.take_single("ssw_sens")? {
        sb.ssw_sensitivity = match v.as_str() {
            "chain" => SswSensitivity::Chain,
            "fd" => SswSensitivity::FiniteDifference,
            other => return Err(perr(start_line, format!("unknown ssw_sens `{other}`"))),
        };
    }
    sb.out_file = kv.take_single("out_file")?;
    for sel in kv.take_multi("outvars")? {
        sb.outvars.push(OutVar::parse(&sel, start_line)?);
    }
    if let Some((key, _)) = kv.pairs.first() {
        return Err(perr(start_line, format!("unknown solve-block key `{key}`")));
    }

    // block invariants
    match kind {
        SolveKind::Startup => {}
        SolveKind::Transient | SolveKind::Ssw => {
            if !(sb.t_end > sb.t_start) {
                return Err(perr(start_line, "solve block requires t_end > t_start"));
            }
            if !(sb.dt > 0.0) {
                return Err(perr(start_line, "solve block requires dt > 0"));
            }
            if !(sb.dt_min > 0.0 && sb.dt_min <= sb.dt && sb.dt <= sb.dt_max) {
                return Err(perr(
                    start_line,
                    format!(
                        "step bounds must satisfy 0 < dt_min <= dt <= dt_max (dt_min={}, dt={}, dt_max={})",
                        sb.dt_min, sb.dt, sb.dt_max
                    ),
                ));
            }
        }
    }
    if kind == SolveKind::Ssw {
        match sb.period {
            Some(p) if p > 0.0 => {
                sb.ssw_steps()?;
            }
            _ => return Err(perr(start_line, "ssw solve block requires period > 0")),
        }
    }
    Ok(sb)
}

fn check_unique_names(stmts: &[ElementStmt], scope: &str) -> Result<()> {
    for (i, a) in stmts.iter().enumerate() {
        for b in &stmts[i + 1..] {
            if a.name == b.name {
                return Err(perr(
                    b.line,
                    format!(
                        "duplicate instance name `{}` in {scope} (first defined on line {})",
                        a.name, a.line
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Parse a complete netlist document.
pub fn parse_netlist(text: &str) -> Result<NetlistDocument> {
    let lines = logical_lines(text);
    let mut doc = NetlistDocument::default();
    let mut current_subckt: Option<SubcktDef> = None;

    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let keyword = line.text.split_whitespace().next().unwrap_or("");
        match keyword {
            "title:" | "title" => {
                if current_subckt.is_some() {
                    return Err(perr(line.number, "title not allowed inside subckt"));
                }
                doc.title = line
                    .text
                    .split_once(char::is_whitespace)
                    .map(|(_, rest)| rest.trim())
                    .unwrap_or("")
                    .to_string();
            }
            "element" | "instance" => {
                let stmt = parse_element_line(&line.text, line.number, keyword == "instance")?;
                match &mut current_subckt {
                    Some(sub) => sub.body.push(stmt),
                    None => doc.element_stmts.push(stmt),
                }
            }
            "subckt" => {
                if current_subckt.is_some() {
                    return Err(perr(line.number, "nested subckt definitions are not allowed"));
                }
                let body = line
                    .text
                    .split_once(char::is_whitespace)
                    .map(|(_, rest)| rest)
                    .unwrap_or("");
                let mut kv = tokenize(body, line.number)?;
                let name = kv.require("name", "subckt")?;
                let ports = kv.take_multi("ports")?;
                if ports.is_empty() {
                    return Err(perr(line.number, "subckt requires ports="));
                }
                for (i, a) in ports.iter().enumerate() {
                    if ports[i + 1..].contains(a) {
                        return Err(perr(line.number, format!("duplicate port `{a}`")));
                    }
                }
                let (param_defaults, st) = kv.into_params(line.number)?;
                if !st.is_empty() {
                    return Err(perr(line.number, "st_ parameters are not allowed on subckt lines"));
                }
                if doc.subckt(&name).is_some() {
                    return Err(perr(line.number, format!("subckt `{name}` defined twice")));
                }
                current_subckt = Some(SubcktDef {
                    name,
                    ports,
                    param_defaults,
                    body: Vec::new(),
                    line: line.number,
                });
            }
            "endsubckt" => match current_subckt.take() {
                Some(sub) => {
                    check_unique_names(&sub.body, &format!("subckt {}", sub.name))?;
                    doc.subckt_defs.push(sub);
                }
                None => return Err(perr(line.number, "endsubckt without subckt")),
            },
            "begin_solve" => {
                if current_subckt.is_some() {
                    return Err(perr(line.number, "solve blocks are not allowed inside subckt"));
                }
                let start = i + 1;
                let mut end = start;
                while end < lines.len() && lines[end].text.split_whitespace().next() != Some("end_solve") {
                    end += 1;
                }
                if end == lines.len() {
                    return Err(perr(line.number, "begin_solve without end_solve"));
                }
                doc.solve_blocks.push(parse_solve_block(&lines[start..end], line.number)?);
                i = end;
            }
            other => {
                return Err(perr(line.number, format!("unknown statement keyword `{other}`")));
            }
        }
        i += 1;
    }
    if let Some(sub) = current_subckt {
        return Err(perr(sub.line, format!("subckt `{}` is missing endsubckt", sub.name)));
    }
    check_unique_names(&doc.element_stmts, "top level")?;
    Ok(doc)
}
