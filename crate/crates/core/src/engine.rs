//! Batch execution of a netlist document: parse, flatten, validate, run
//! the solve blocks in order, write output files.

use crate::elements::{builtin_registry, Registry};
use crate::error::{Error, Result, Severity};
use crate::mna::{build_layout, UnknownLayout};
use crate::model::SimModel;
use crate::netlist::{
    flatten, parse_netlist, validate, InitialStateSource, NetlistDocument, SolveBlock, SolveKind,
};
use crate::solver::{
    consistency_solve, resolve_outvars, startup_solve, transient, NewtonSettings, OperatingPoint,
    TransientSettings,
};
use crate::ssw::{ssw_solve, ShootingSettings};
use crate::waveform::WaveformSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Options for one run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Parse and validate only.
    pub check_only: bool,
    /// Per-step solver statistics on standard output.
    pub verbose: bool,
    /// Write the solve blocks' out_file paths (resolved against base_dir).
    pub write_files: bool,
    /// Directory out_file paths are resolved against.
    pub base_dir: PathBuf,
}

/// Per-solve-block report entry.
#[derive(Debug, Clone)]
pub struct BlockReport {
    pub index: usize,
    pub kind: SolveKind,
    pub wall_seconds: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub nr_iterations: usize,
    pub ssw_newton_iterations: usize,
    pub ssw_periods_integrated: usize,
    pub out_file: Option<PathBuf>,
}

/// Full run report: one entry per executed solve block.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub blocks: Vec<BlockReport>,
    /// Waveforms per solve block, aligned with `blocks`.
    pub waveforms: Vec<WaveformSet>,
}

impl RunReport {
    pub fn summary(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for b in &self.blocks {
            let _ = write!(
                out,
                "block {} [{}]: {:.3}s, {} steps ({} rejected), {} NR iterations",
                b.index,
                b.kind.keyword(),
                b.wall_seconds,
                b.steps,
                b.rejected_steps,
                b.nr_iterations
            );
            if b.kind == SolveKind::Ssw {
                let _ = write!(
                    out,
                    ", {} shooting updates over {} integrated periods",
                    b.ssw_newton_iterations, b.ssw_periods_integrated
                );
            }
            if let Some(path) = &b.out_file {
                let _ = write!(out, " -> {}", path.display());
            }
            out.push('\n');
        }
        out
    }
}

/// Parse, flatten and validate a document; error out on any
/// error-severity diagnostic.
pub fn prepare(doc: &NetlistDocument, registry: &Registry) -> Result<(SimModel, UnknownLayout)> {
    let flat = flatten(doc, registry)?;
    let diags = validate(&flat, registry);
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(Error::Validation { diagnostics: diags });
    }
    let model = SimModel::build(&flat, registry)?;
    let layout = build_layout(&model, registry);
    Ok((model, layout))
}

fn initial_point(
    model: &SimModel,
    registry: &Registry,
    layout: &UnknownLayout,
    sb: &SolveBlock,
    index: usize,
    last_startup: &Option<(f64, OperatingPoint)>,
    newton: &NewtonSettings,
) -> Result<OperatingPoint> {
    match sb.initial_state {
        InitialStateSource::StartupResult => {
            last_startup.as_ref().map(|(_, op)| op.clone()).ok_or_else(|| Error::SolveBlock {
                index,
                message: "init=startup but no preceding startup solve block".into(),
            })
        }
        InitialStateSource::Zero => {
            let pins = vec![0.0; layout.n_states];
            consistency_solve(model, registry, layout, &pins, sb.t_start, newton)
        }
        InitialStateSource::Stparms => match last_startup {
            // a preceding start-up result at the same instant used the
            // same pins; reuse it, otherwise solve afresh
            Some((t, op)) if *t == sb.t_start => Ok(op.clone()),
            _ => startup_solve(model, registry, layout, sb.t_start, newton),
        },
    }
}

/// Tag a solver failure with the solve block it came from; i/o errors
/// keep their own identity (and exit code).
fn block_context(index: usize, err: Error) -> Error {
    match err {
        Error::Io { .. } => err,
        other => Error::SolveBlock { index, message: other.to_string() },
    }
}

/// Execute every solve block of a parsed document in order.
pub fn run_document(doc: &NetlistDocument, options: &RunOptions) -> Result<RunReport> {
    let registry = builtin_registry();
    let (model, layout) = prepare(doc, &registry)?;
    let mut report = RunReport::default();
    if options.check_only {
        return Ok(report);
    }
    if doc.solve_blocks.is_empty() {
        return Err(Error::SolveBlock {
            index: 0,
            message: "document has no solve block".into(),
        });
    }

    // the startup result feeding a following transient/ssw block
    let mut last_startup: Option<(f64, OperatingPoint)> = None;

    for (index, sb) in doc.solve_blocks.iter().enumerate() {
        let started = Instant::now();
        let outvars = resolve_outvars(&model, &registry, &layout, &sb.outvars)
            .map_err(|e| Error::SolveBlock { index, message: e.to_string() })?;
        let names: Vec<String> = sb.outvars.iter().map(|o| o.label()).collect();
        let newton = NewtonSettings {
            tol_residual: sb.tol_nr,
            maxiter: sb.maxiter_nr,
            ..Default::default()
        };

        let mut entry = BlockReport {
            index,
            kind: sb.kind,
            wall_seconds: 0.0,
            steps: 0,
            rejected_steps: 0,
            nr_iterations: 0,
            ssw_newton_iterations: 0,
            ssw_periods_integrated: 0,
            out_file: None,
        };

        let waves = match sb.kind {
            SolveKind::Startup => {
                let op = startup_solve(&model, &registry, &layout, sb.t_start, &newton)
                    .map_err(|e| block_context(index, e))?;
                entry.nr_iterations = op.iterations;
                entry.steps = 1;
                let gates = model.sample_gates(sb.t_start);
                let row = crate::solver::output_values(
                    &model, &registry, &layout, &op.x, &gates, sb.t_start, &outvars,
                );
                let mut w = WaveformSet::new(names);
                w.kind = Some("startup".into());
                w.push_row(sb.t_start, &row);
                last_startup = Some((sb.t_start, op));
                w
            }
            SolveKind::Transient => {
                let init = initial_point(
                    &model, &registry, &layout, sb, index, &last_startup, &newton,
                )
                .map_err(|e| block_context(index, e))?;
                let mut settings = TransientSettings::from_solve_block(sb);
                settings.verbose = options.verbose;
                let (mut w, stats) = transient(
                    &model, &registry, &layout, &settings, &init, &outvars, names,
                )
                .map_err(|e| block_context(index, e))?;
                w.period = sb.period;
                entry.steps = stats.steps;
                entry.rejected_steps = stats.rejected;
                entry.nr_iterations = stats.nr_iterations;
                w
            }
            SolveKind::Ssw => {
                let init = initial_point(
                    &model, &registry, &layout, sb, index, &last_startup, &newton,
                )
                .map_err(|e| block_context(index, e))?;
                let s0: Vec<f64> = layout.state_slots.iter().map(|&s| init.x[s]).collect();
                let settings = ShootingSettings::from_solve_block(sb)?;
                let (w, stats) = ssw_solve(
                    &model, &registry, &layout, &s0, &settings, &outvars, &names,
                )
                .map_err(|e| block_context(index, e))?;
                entry.steps = w.len().saturating_sub(1);
                entry.nr_iterations = stats.nr_iterations;
                entry.ssw_newton_iterations = stats.newton_iterations;
                entry.ssw_periods_integrated = stats.periods_integrated;
                w
            }
        };

        if let Some(out_file) = &sb.out_file {
            let path = options.base_dir.join(out_file);
            if options.write_files {
                waves.write_file(&path)?;
            }
            entry.out_file = Some(path);
        }
        entry.wall_seconds = started.elapsed().as_secs_f64();
        report.blocks.push(entry);
        report.waveforms.push(waves);
    }
    Ok(report)
}

/// Convenience: run a netlist from its text.
pub fn run_text(text: &str, options: &RunOptions) -> Result<RunReport> {
    let doc = parse_netlist(text)?;
    run_document(&doc, options)
}

/// Convenience: run a netlist file, resolving out_file paths against the
/// netlist's directory.
pub fn run_file(path: &Path, options: &RunOptions) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut options = options.clone();
    if options.base_dir.as_os_str().is_empty() {
        if let Some(dir) = path.parent() {
            options.base_dir = dir.to_path_buf();
        }
    }
    run_text(&text, &options)
}
