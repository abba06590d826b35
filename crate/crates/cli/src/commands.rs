use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use dcad_core::gradcheck::{check_constraints, check_energies, GradCheckRow, REL_TOL};
use dcad_core::mesh::to_obj;
use dcad_core::model::Model;
use dcad_core::models;
use dcad_core::objectives::{EditDocument, EnergyContext, ObjectiveConfig, ObjectiveId};
use dcad_core::sampling::{feasible_points, random_edit, rng};
use dcad_core::sync::{synchronize, OptionGallery, SyncOptions};
use dcad_core::Error as CoreError;
use serde::Serialize;

use crate::{Command, ModelArgs, SolveArgs};

/// `println!` that stops quietly when stdout is closed (`dcad ... | head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Schema version of the files this tool writes.
const FILE_VERSION: u32 = 1;
/// Edit displacement as a fraction of the bounding-box diagonal.
const BENCH_STEP: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric(_) | CoreError::Geometry(_) => CliError::Numeric(e.to_string()),
            CoreError::Invalid(_) | CoreError::Syntax(_) | CoreError::Interp(_) => {
                let lines: Vec<String> = e.diagnostics().iter().map(|d| d.to_string()).collect();
                CliError::User(lines.join("\n"))
            }
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<dcad_core::error::NumericError> for CliError {
    fn from(e: dcad_core::error::NumericError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::User(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))
}

/// The parameter file written by `eval`. It is also a valid body for the
/// server's `POST /programs`.
#[derive(Debug, Serialize)]
struct ParamFile<'a> {
    v: u32,
    text: &'a str,
    params: BTreeMap<&'a str, f64>,
}

/// Compiled model and the parameter vector selected by the flags.
fn load(args: &ModelArgs) -> Result<(Model, Vec<f64>), CliError> {
    let path = Path::new(&args.model);
    let text = if path.exists() {
        read(path)?
    } else if let Some(src) = models::by_name(&args.model) {
        src.to_string()
    } else {
        let names: Vec<&str> = models::ALL.iter().map(|(n, _)| *n).collect();
        return Err(CliError::User(format!(
            "no file `{}` and no bundled model of that name ({})",
            args.model,
            names.join(", ")
        )));
    };
    let model = Model::compile(&text)?;
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    let mut params = model.initial_params.clone();
    let mut set = |name: &str, v: f64| -> Result<(), CliError> {
        let i = model
            .param_index(name)
            .ok_or_else(|| CliError::User(format!("unknown parameter `{name}`")))?;
        params[i] = v;
        Ok(())
    };
    if let Some(file) = &args.params {
        for (name, v) in params_from_file(file, args.option)? {
            set(&name, v)?;
        }
    }
    for (name, v) in &args.set {
        set(name, *v)?;
    }
    Ok((model, params))
}

/// Name/value pairs from a `params.json` or the chosen option of a `gallery.json`.
fn params_from_file(path: &Path, option: usize) -> Result<Vec<(String, f64)>, CliError> {
    let bad = |why: &str| CliError::User(format!("{}: {why}", path.display()));
    let doc: serde_json::Value =
        serde_json::from_str(&read(path)?).map_err(|e| bad(&e.to_string()))?;
    if doc.get("options").is_some() {
        let g: OptionGallery = serde_json::from_value(doc).map_err(|e| bad(&e.to_string()))?;
        let o = g.options.get(option).ok_or_else(|| {
            bad(&format!(
                "option {option} out of range ({} options)",
                g.options.len()
            ))
        })?;
        return Ok(g
            .param_names
            .into_iter()
            .zip(o.params.iter().copied())
            .collect());
    }
    let map: BTreeMap<String, f64> = serde_json::from_value(
        doc.get("params")
            .cloned()
            .ok_or_else(|| bad("no `params` field"))?,
    )
    .map_err(|e| bad(&e.to_string()))?;
    Ok(map.into_iter().collect())
}

fn objective_config(base: ObjectiveConfig, solve: &SolveArgs) -> Result<ObjectiveConfig, CliError> {
    let mut c = base;
    if !solve.objectives.is_empty() {
        c.enabled = solve.objectives.clone();
    }
    for (k, v) in &solve.gamma {
        let id: ObjectiveId = k.parse().map_err(CliError::User)?;
        c.gamma.insert(id, *v);
    }
    c.validate().map_err(CliError::User)?;
    Ok(c)
}

fn sync_options(solve: &SolveArgs) -> Result<SyncOptions, CliError> {
    let mut o = SyncOptions::default();
    if let Some(t) = solve.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::User(format!("--tol must be positive, got {t}")));
        }
        o.solver.tol = t;
    }
    Ok(o)
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Eval { model, out } => eval(&model, &out),
        Command::Sync {
            model,
            edit,
            out,
            solve,
        } => sync(&model, &edit, &out, &solve),
        Command::Gradcheck {
            model,
            seed,
            points,
            objectives,
            out,
        } => gradcheck(&model, seed, points, &objectives, out.as_deref()),
        Command::Bench {
            model,
            edits,
            vertices,
            seed,
            solve,
            out,
        } => bench(&model, edits, vertices, seed, &solve, out.as_deref()),
        Command::Serve { port, host } => serve(host, port),
    }
}

fn eval(args: &ModelArgs, out: &Path) -> Result<(), CliError> {
    let (model, params) = load(args)?;
    let positions = model.positions(&params)?;
    out_dir(out)?;
    write(
        &out.join("mesh.obj"),
        &to_obj(&model.topology, &positions, false),
    )?;
    let text = model.source_with_params(&params);
    let file = ParamFile {
        v: FILE_VERSION,
        text: &text,
        params: model
            .param_names
            .iter()
            .map(String::as_str)
            .zip(params.iter().copied())
            .collect(),
    };
    write(
        &out.join("params.json"),
        &serde_json::to_string_pretty(&file).expect("serializable"),
    )?;
    let g = model.constraint_values(&params)?;
    let violated = g.iter().filter(|&&x| x < 0.0).count();
    say!(
        "{} vertices, {} faces, {} parameters",
        model.num_vertices(),
        model.topology.faces().len(),
        params.len()
    );
    for (n, v) in model.param_names.iter().zip(&params) {
        say!("  {n} = {v}");
    }
    if violated > 0 {
        eprintln!("warning: {violated} constraint(s) violated at these parameters");
    }
    Ok(())
}

fn sync(args: &ModelArgs, edit: &Path, out: &Path, solve: &SolveArgs) -> Result<(), CliError> {
    let (model, p0) = load(args)?;
    let doc: EditDocument = serde_json::from_str(&read(edit)?)
        .map_err(|e| CliError::User(format!("{}: {e}", edit.display())))?;
    let config = objective_config(doc.config(&ObjectiveConfig::default()), solve)?;
    let opts = sync_options(solve)?;
    let gallery = synchronize(
        model.tape.clone(),
        model.topology.clone(),
        &model.param_names,
        &p0,
        &doc.edit,
        &config,
        &opts,
    )?;

    out_dir(out)?;
    write(&out.join("gallery.json"), &gallery.to_json())?;
    for (k, o) in gallery.options.iter().enumerate() {
        write(
            &out.join(format!("option_{k}.obj")),
            &to_obj(&model.topology, &o.positions, false),
        )?;
        write(
            &out.join(format!("option_{k}.dcad")),
            &model.source_with_params(&o.params),
        )?;
    }
    for w in &gallery.warnings {
        eprintln!("warning: {w}");
    }
    say!(
        "{:<4} {:<24} {:>12} {:>12}  status",
        "opt", "objectives", "e_edit", "objective"
    );
    for (k, o) in gallery.options.iter().enumerate() {
        let names: Vec<&str> = o.objectives.iter().map(|i| i.name()).collect();
        say!(
            "{k:<4} {:<24} {:>12.4e} {:>12.4e}  {}",
            names.join(","),
            o.e_edit,
            o.objective_value,
            o.status.name()
        );
    }
    for r in gallery.runs.iter().filter(|r| r.option.is_none()) {
        say!(
            "     {:<24} failed: {} {}",
            r.objective.name(),
            r.status.name(),
            r.message.as_deref().unwrap_or("")
        );
    }
    if gallery.options.is_empty() {
        return Err(CliError::Numeric(
            "no objective produced a feasible result".into(),
        ));
    }
    Ok(())
}

fn gradcheck(
    args: &ModelArgs,
    seed: u64,
    points: usize,
    objectives: &[ObjectiveId],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (model, p0) = load(args)?;
    let ids = if objectives.is_empty() {
        ObjectiveId::ALL.to_vec()
    } else {
        objectives.to_vec()
    };
    let mut r = rng(seed);
    let rest = model.positions(&p0)?;
    let mut edit = random_edit(&rest, 10, BENCH_STEP, &mut r);
    edit.fixed
        .extend((0..model.num_vertices()).find(|v| edit.moved.iter().all(|m| m.vid != *v)));
    let ctx = EnergyContext::new(
        model.tape.clone(),
        model.topology.clone(),
        &p0,
        &edit,
        ObjectiveConfig::default(),
    )?;
    let samples = feasible_points(&model.tape, &p0, points, &mut r).ok_or_else(|| {
        CliError::User(
            "starting parameters violate the constraints; cannot sample feasible points".into(),
        )
    })?;

    let mut rows: Vec<GradCheckRow> = Vec::new();
    for (k, p) in samples.iter().enumerate() {
        rows.extend(check_energies(&ctx, &ids, k, p)?);
        rows.extend(check_constraints(&model.tape, k, p)?);
    }
    say!(
        "{:>5} {:<16} {:>5} {:>14} {:>14} {:>10}  result",
        "point", "function", "param", "analytic", "numeric", "rel_err"
    );
    for row in &rows {
        say!(
            "{:>5} {:<16} {:>5} {:>14.6e} {:>14.6e} {:>10.2e}  {}",
            row.point,
            row.function,
            row.param,
            row.analytic,
            row.numeric,
            row.rel_err,
            if row.passed() { "ok" } else { "FAIL" }
        );
    }
    if let Some(path) = out {
        write(
            path,
            &serde_json::to_string_pretty(&rows).expect("serializable"),
        )?;
    }
    let failed = rows.iter().filter(|r| !r.passed()).count();
    say!(
        "{} of {} gradients within {REL_TOL:e}",
        rows.len() - failed,
        rows.len()
    );
    if failed > 0 {
        return Err(CliError::Numeric(format!(
            "{failed} gradient(s) disagree with finite differences"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchReport {
    v: u32,
    model: String,
    vertices: usize,
    params: usize,
    constraints: usize,
    /// Tape length, and how many of those instructions are arithmetic.
    instructions: usize,
    arithmetic_instructions: usize,
    parse_seconds: f64,
    interpret_seconds: f64,
    lower_seconds: f64,
    objectives: Vec<ObjectiveId>,
    edits: Vec<BenchEdit>,
    mean_sync_seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BenchEdit {
    edit: usize,
    moved: usize,
    options: usize,
    sync_seconds: f64,
    runs: Vec<BenchRun>,
}

#[derive(Debug, Serialize)]
struct BenchRun {
    objective: ObjectiveId,
    seconds: f64,
    iterations: usize,
    status: &'static str,
}

fn bench(
    args: &ModelArgs,
    edits: usize,
    vertices: usize,
    seed: u64,
    solve: &SolveArgs,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (model, p0) = load(args)?;
    let config = objective_config(ObjectiveConfig::default(), solve)?;
    let opts = sync_options(solve)?;
    let rest = model.positions(&p0)?;
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(edits);
    for e in 0..edits {
        let edit = random_edit(&rest, vertices, BENCH_STEP, &mut r);
        let t0 = Instant::now();
        let g = synchronize(
            model.tape.clone(),
            model.topology.clone(),
            &model.param_names,
            &p0,
            &edit,
            &config,
            &opts,
        )?;
        rows.push(BenchEdit {
            edit: e,
            moved: edit.moved.len(),
            options: g.options.len(),
            sync_seconds: t0.elapsed().as_secs_f64(),
            runs: g
                .runs
                .iter()
                .map(|r| BenchRun {
                    objective: r.objective,
                    seconds: r.seconds,
                    iterations: r.iterations,
                    status: r.status.name(),
                })
                .collect(),
        });
    }
    let mean = (!rows.is_empty())
        .then(|| rows.iter().map(|r| r.sync_seconds).sum::<f64>() / rows.len() as f64);
    let report = BenchReport {
        v: FILE_VERSION,
        model: args.model.clone(),
        vertices: model.num_vertices(),
        params: model.num_params(),
        constraints: model.constraints.len(),
        instructions: model.tape.instructions().len(),
        arithmetic_instructions: model.tape.arithmetic_count(),
        parse_seconds: model.timings.parse.as_secs_f64(),
        interpret_seconds: model.timings.interpret.as_secs_f64(),
        lower_seconds: model.timings.lower.as_secs_f64(),
        objectives: config.enabled.clone(),
        edits: rows,
        mean_sync_seconds: mean,
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    match out {
        Some(path) => write(path, &json),
        None => {
            say!("{json}");
            Ok(())
        }
    }
}

fn serve(host: std::net::IpAddr, port: u16) -> Result<(), CliError> {
    let addr = std::net::SocketAddr::new(host, port);
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::User(format!("cannot start runtime: {e}")))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(dcad_server::serve(
            addr,
            dcad_server::ServerConfig::default(),
        ))
        .map_err(|e| CliError::User(format!("server on {addr}: {e}")))
}
