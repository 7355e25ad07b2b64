use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use simulst_core::analysis::{diagonality_entries, diagonality_tsv, matrix_tsv, step_matrices};
use simulst_core::attention::{filter_matrix, DEGENERATE_EPSILON};
use simulst_core::harness::{read_delay_logs, write_delay_logs};
use simulst_core::trace::{parse_trace_line, write_traces};
use simulst_core::{
    evaluate, run_corpus, run_sweep, sweep_tsv, validate_trace, DelayLog, LinearCost, MetricReport, Policy,
    PolicyConfig, SweepGrid, SyntheticAdapter, SyntheticSpec, UtteranceTrace,
};

use crate::error::CliError;
use crate::{CostArgs, DumpArgs, MetricsArgs, SimulateArgs, SweepArgs, SynthArgs, ValidateArgs};

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn pretty(value: &impl serde::Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Every trace in the file, or the first error. Unlike `read_traces`, a
/// record cut off mid-line is reported as truncation.
fn load_traces(path: &Path) -> Result<Vec<UtteranceTrace>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut traces = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace = parse_trace_line(line, idx + 1).map_err(|e| {
            let truncated = !text.ends_with('\n') && idx + 1 == text.lines().count();
            let invariant = if truncated { "truncated record" } else { "schema" };
            CliError::new("trace", e.to_string())
                .with_details(json!([{ "line": e.line(), "invariant": invariant, "detail": e.to_string() }]))
        })?;
        traces.push(trace);
    }
    Ok(traces)
}

fn violations_json(traces: &[UtteranceTrace]) -> Vec<Value> {
    traces
        .iter()
        .flat_map(|t| {
            validate_trace(t).into_iter().map(move |v| {
                json!({ "id": t.id, "step": v.step, "invariant": v.invariant.name(), "detail": v.detail })
            })
        })
        .collect()
}

fn load_valid_traces(path: &Path) -> Result<Vec<UtteranceTrace>> {
    let traces = load_traces(path)?;
    let violations = violations_json(&traces);
    if !violations.is_empty() {
        return Err(CliError::new("validation", format!("{} trace invariant violations", violations.len()))
            .with_details(Value::Array(violations)));
    }
    Ok(traces)
}

fn cost_model(args: &CostArgs) -> Result<LinearCost> {
    let cost = LinearCost {
        a_ms: args.cost_a,
        b: args.cost_b,
        policy_ms: args.cost_policy_ms,
    };
    if !cost.is_valid() {
        return Err(CliError::config("cost parameters must be finite and non-negative"));
    }
    Ok(cost)
}

fn check_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    Ok(())
}

fn write_report(dir: &Path, report: &MetricReport) -> Result<()> {
    write_file(&dir.join("report.json"), &pretty(report))?;
    write_file(&dir.join("report.tsv"), report.to_tsv().as_bytes())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let policy = Policy::new(args.policy.config()).map_err(CliError::config)?;
    let cost = cost_model(&args.cost)?;
    check_jobs(args.jobs)?;
    let traces = load_valid_traces(&args.trace)?;

    let run = run_corpus(&traces, &policy, &cost, args.jobs);
    create_dir(&args.out)?;
    let logs: Vec<DelayLog> = run.results().map(|r| r.delay_log()).collect();
    let mut delays = Vec::new();
    write_delay_logs(&mut delays, &logs).expect("in-memory write");
    write_file(&args.out.join("delays.jsonl"), &delays)?;
    let mut events = String::new();
    for r in run.results() {
        events.push_str(&json!({ "id": r.id, "events": r.events }).to_string());
        events.push('\n');
    }
    write_file(&args.out.join("events.jsonl"), events.as_bytes())?;
    write_report(&args.out, &run.report)?;

    let failures: Vec<Value> = run
        .failures()
        .map(|(id, e)| json!({ "id": id, "detail": e.to_string() }))
        .collect();
    if !failures.is_empty() {
        return Err(CliError::new("simulation", format!("{} utterances failed", failures.len()))
            .with_details(Value::Array(failures)));
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let cost = cost_model(&args.cost)?;
    check_jobs(args.jobs)?;
    let grid = SweepGrid {
        policies: args.policies,
        alphas: args.alphas,
        lambdas: args.lambdas,
        layers: args.layers,
        heads: args.heads,
        ks: args.ks,
    };
    let base = PolicyConfig {
        segment_ms: args.segment_ms,
        filter_last_frame: !args.no_filter,
        ..PolicyConfig::default()
    };
    // reject a bad grid before reading any input
    grid.configs(&base).map_err(CliError::config)?;
    let traces = load_valid_traces(&args.trace)?;
    let rows = run_sweep(&traces, &grid, &base, &cost, args.jobs).map_err(CliError::config)?;
    let tsv = sweep_tsv(&rows);
    match args.out {
        Some(path) => write_file(&path, tsv.as_bytes()),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

pub fn metrics(args: MetricsArgs) -> Result<()> {
    let logs = read_delay_logs(open(&args.delays)?)
        .map_err(|e| CliError::new("input", format!("{}: {e}", args.delays.display())))?;
    let refs_text = fs::read_to_string(&args.references).map_err(|e| CliError::io(&args.references, e))?;
    let refs: Vec<&str> = refs_text.lines().collect();
    let report = evaluate(&logs, &refs).map_err(|e| CliError::new("input", e.to_string()))?;
    match args.out {
        Some(dir) => {
            create_dir(&dir)?;
            write_report(&dir, &report)
        }
        None => {
            std::io::stdout()
                .write_all(&pretty(&report))
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn synth_spec(args: &SynthArgs) -> Result<SyntheticSpec> {
    let mut spec = match &args.config {
        Some(path) => serde_json::from_reader(open(path)?)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
        None => SyntheticSpec::default(),
    };
    macro_rules! set {
        ($($field:ident <- $arg:ident),* $(,)?) => {
            $(if let Some(v) = args.$arg.clone() { spec.$field = v; })*
        };
    }
    set!(
        id <- id,
        n_target_tokens <- n_tokens,
        frames_per_segment <- frames_per_segment,
        slope <- slope,
        tail_mass_beta <- beta,
        spread <- spread,
        seed <- seed,
        segment_ms <- segment_ms,
        source_duration_ms <- duration_ms,
        source_words <- source_words,
        layer <- layer,
        n_heads <- heads,
    );
    Ok(spec)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let base = synth_spec(&args)?;
    if args.count == 0 {
        return Err(CliError::config("--count must be at least 1"));
    }
    let mut traces = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let mut spec = base.clone();
        if args.count > 1 {
            spec.id = format!("{}-{i}", base.id);
            spec.seed = base.seed.wrapping_add(i as u64);
        }
        let adapter = SyntheticAdapter::new(spec).map_err(CliError::config)?;
        traces.push(adapter.to_trace());
    }
    let mut out = Vec::new();
    write_traces(&mut out, &traces).expect("in-memory write");
    match args.out {
        Some(path) => write_file(&path, &out),
        None => std::io::stdout()
            .write_all(&out)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let traces = load_traces(&args.trace)?;
    let violations = violations_json(&traces);
    let summary = json!({
        "valid": violations.is_empty(),
        "utterances": traces.len(),
        "violations": violations,
    });
    println!("{summary}");
    if !violations.is_empty() {
        return Err(CliError::new("validation", format!("{} trace invariant violations", violations.len()))
            .with_details(Value::Array(violations)));
    }
    Ok(())
}

/// File-name-safe form of an utterance id.
fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn dump_attention(args: DumpArgs) -> Result<()> {
    let traces = load_traces(&args.trace)?;
    let selected: Vec<&UtteranceTrace> = traces
        .iter()
        .filter(|t| args.id.as_deref().is_none_or(|id| t.id == id))
        .collect();
    if selected.is_empty() {
        return Err(CliError::new("input", "no utterance matches the selection"));
    }
    create_dir(&args.out)?;
    let mut entries = Vec::new();
    for trace in selected {
        for (idx, step) in trace.steps.iter().enumerate() {
            if args.step.is_some_and(|s| s != idx) {
                continue;
            }
            let dir: PathBuf = args.out.join(safe_name(&trace.id)).join(format!("step{idx:03}"));
            create_dir(&dir)?;
            for m in step_matrices(step) {
                let stem = format!("L{}_{}", m.layer, m.head);
                write_file(&dir.join(format!("{stem}.raw.tsv")), matrix_tsv(&m, &step.hypothesis).as_bytes())?;
                if let Ok((filtered, _)) = filter_matrix(&m, DEGENERATE_EPSILON) {
                    write_file(
                        &dir.join(format!("{stem}.filtered.tsv")),
                        matrix_tsv(&filtered, &step.hypothesis).as_bytes(),
                    )?;
                }
            }
            entries.extend(diagonality_entries(trace, idx, args.band));
        }
    }
    let file = File::create(args.out.join("diagonality.tsv")).map_err(|e| CliError::io(&args.out, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(diagonality_tsv(&entries).as_bytes())
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(&args.out, e))
}
