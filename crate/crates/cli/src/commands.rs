//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use foldkit_core::analysis::{
    aggregation_sweep, emd, energy_sweep, schedule_sweep, EmdWeights, PropagationPoint,
    PropagationProbe, Removal,
};
use foldkit_core::encoder::{Record, ScheduleKind};
use foldkit_core::matching::{MatchContext, Matcher};
use foldkit_core::{
    folder_reduce, AggregationScheme, Encoder, EncoderConfig, FoldError, FoldSettings, Result,
    ScheduleSpec, TokenSequence,
};
use serde_json::{json, Value};

use crate::report::{
    config_to_text, emit, input_ref, merge_reports, read_file, sha256_hex, write_atomic, Report,
    Table,
};
use crate::{
    AggsweepArgs, Command, EmdArgs, EncoderArgs, EnergyArgs, FoldArgs, GenArgs, InputArgs,
    MatchArgs, PropagateArgs, RemovalArgs, ReplayArgs, ReportArgs, SchedsweepArgs, SimulateArgs,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(&a),
        Command::Fold(a) => fold(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Energy(a) => energy(&a),
        Command::Emd(a) => emd_cmd(&a),
        Command::Propagate(a) => propagate(&a),
        Command::Aggsweep(a) => aggsweep(&a),
        Command::Schedsweep(a) => schedsweep(&a),
        Command::Report(a) => report(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn parse<T: std::str::FromStr<Err = FoldError>>(s: &str) -> Result<T> {
    s.parse()
}

pub fn read_tokens(path: &Path, pinned: usize, with_sizes: bool) -> Result<TokenSequence> {
    let bytes = read_file(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = String::from_utf8(bytes)
            .map_err(|e| FoldError::format(e.utf8_error().valid_up_to() as u64, "not UTF-8"))?;
        TokenSequence::from_csv(&text, pinned, with_sizes)
    } else {
        TokenSequence::from_binary_bytes(&bytes)
    }
}

fn write_tokens(path: &Path, seq: &TokenSequence) -> Result<()> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        write_atomic(path, seq.to_csv(true).as_bytes())
    } else {
        write_atomic(path, &seq.to_binary_bytes())
    }
}

fn load_input(a: &InputArgs, report: &mut Report) -> Result<TokenSequence> {
    let seq = read_tokens(&a.input, a.pinned, a.with_sizes)?;
    report.inputs.push(input_ref(&a.input)?);
    Ok(seq)
}

fn encoder(a: &EncoderArgs, report: &mut Report) -> Result<Encoder> {
    report.seeds.insert("encoder".into(), a.seed);
    Encoder::new(EncoderConfig {
        dim: a.dim,
        heads: a.heads,
        blocks: a.blocks,
        mlp_ratio: a.mlp_ratio,
        seed: a.seed,
        use_class_token: a.class_token,
    })
}

fn settings(m: &MatchArgs, scheme: &str) -> Result<FoldSettings> {
    if !(m.alpha.is_finite() && m.alpha >= 0.0) {
        return Err(FoldError::argument(format!(
            "alpha must be finite and nonnegative, got {}",
            m.alpha
        )));
    }
    Ok(FoldSettings {
        matcher: parse(&m.matcher)?,
        scheme: parse(scheme)?,
        alpha: m.alpha,
    })
}

fn removals(r: &RemovalArgs) -> Result<Vec<(String, Removal)>> {
    if !r.counts.is_empty() {
        return Ok(r
            .counts
            .iter()
            .map(|&c| (format!("r={c}"), Removal::Count(c)))
            .collect());
    }
    if r.ratios.is_empty() {
        return Err(FoldError::argument("no ratios or counts given"));
    }
    r.ratios
        .iter()
        .map(|&p| {
            Removal::Ratio(p).resolve(1)?;
            Ok((format!("ratio={p}"), Removal::Ratio(p)))
        })
        .collect()
}

fn finish(report: &Report, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if let (Some(path), Some(table)) = (csv, &report.table) {
        write_atomic(path, table.to_csv().as_bytes())?;
    }
    emit(out, &report.to_json())
}

fn gen(a: &GenArgs) -> Result<()> {
    let seq = foldkit_core::synthetic::generate(a.seed, a.n, a.d, a.correlation)?;
    let bytes = seq.to_binary_bytes();
    write_atomic(&a.out, &bytes)?;
    if let Some(csv) = &a.csv {
        write_atomic(csv, seq.to_csv(false).as_bytes())?;
    }
    println!(
        "{} {}x{} sha256={}",
        a.out.display(),
        a.n,
        a.d,
        sha256_hex(&bytes)
    );
    Ok(())
}

fn fold(a: &FoldArgs) -> Result<()> {
    let mut report = Report::new("fold", a)?;
    let seq = load_input(&a.input, &mut report)?;
    let scheme: AggregationScheme = parse(&a.scheme)?;
    let out = folder_reduce(&seq, a.r, Matcher::Token, scheme, &MatchContext::new())?;
    write_tokens(&a.out, &out.sequence)?;
    report.results = json!({
        "n_in": seq.len(),
        "n_out": out.sequence.len(),
        "total_size": out.sequence.total_size(),
        "output_sha256": sha256_hex(&out.sequence.to_binary_bytes()),
        "trace": out.trace,
    });
    println!(
        "{} tokens -> {} in {} fold{}",
        seq.len(),
        out.sequence.len(),
        out.trace.total_folds,
        if out.trace.total_folds == 1 { "" } else { "s" }
    );
    match &a.report {
        Some(p) => write_atomic(p, report.to_json().as_bytes()),
        None => Ok(()),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut report = Report::new("simulate", a)?;
    let enc = encoder(&a.encoder, &mut report)?;
    let seq = load_input(&a.input, &mut report)?;
    let schedule =
        parse::<ScheduleSpec>(&a.schedule)?.resolve(a.encoder.blocks, seq.reducible_len())?;
    let (out, acts) = enc.forward_with(
        &seq,
        &schedule,
        settings(&a.matching, &a.scheme)?,
        Record::Full,
    )?;
    write_tokens(&a.out, &out)?;
    if let Some(dir) = &a.acts {
        std::fs::create_dir_all(dir)?;
        for (b, act) in acts.iter().enumerate() {
            let block = TokenSequence::from_parts(
                act.tokens_out.clone(),
                act.sizes_out.clone(),
                out.pinned_prefix(),
            )?;
            write_atomic(
                &dir.join(format!("block_{:02}.ftsq", b + 1)),
                &block.to_binary_bytes(),
            )?;
            for (h, head) in act.attention.iter().enumerate() {
                let text: String = head
                    .row_iter()
                    .map(|r| {
                        r.iter()
                            .map(|v| format!("{v:?}"))
                            .collect::<Vec<_>>()
                            .join(",")
                            + "\n"
                    })
                    .collect();
                write_atomic(
                    &dir.join(format!("attention_{:02}_head_{h}.csv", b + 1)),
                    text.as_bytes(),
                )?;
            }
        }
    }
    let blocks: Vec<Value> = acts
        .iter()
        .enumerate()
        .map(|(b, act)| {
            json!({
                "block": b + 1,
                "r": schedule.per_block_r[b],
                "tokens_out": act.tokens_out.rows(),
                "fold": act.fold,
            })
        })
        .collect();
    report.results = json!({
        "per_block_r": schedule.per_block_r,
        "n_out": out.len(),
        "output_sha256": sha256_hex(&out.to_binary_bytes()),
        "blocks": blocks,
    });
    println!("{} tokens -> {}", seq.len(), out.len());
    match &a.report {
        Some(p) => write_atomic(p, report.to_json().as_bytes()),
        None => Ok(()),
    }
}

fn block_index(blocks: usize) -> Vec<Value> {
    (1..=blocks).map(|b| json!(b)).collect()
}

fn energy(a: &EnergyArgs) -> Result<()> {
    let mut report = Report::new("energy", a)?;
    let enc = encoder(&a.encoder, &mut report)?;
    let seq = load_input(&a.input, &mut report)?;
    let profile = energy_sweep(&enc, &seq, &a.thresholds)?;
    let mut table = Table::new("energy", "block", block_index(a.encoder.blocks));
    for (i, t) in profile.thresholds.iter().enumerate() {
        table.push(
            format!("t={t}"),
            profile.column(i).into_iter().map(|k| json!(k)).collect(),
        );
    }
    report.results =
        json!({ "thresholds": profile.thresholds, "per_block_k": profile.per_block_k });
    report.table = Some(table);
    finish(&report, a.out.as_deref(), a.csv.as_deref())
}

fn emd_cmd(a: &EmdArgs) -> Result<()> {
    let mut report = Report::new("emd", a)?;
    let src = read_tokens(&a.source, 0, a.with_sizes)?;
    let dst = read_tokens(&a.target, 0, a.with_sizes)?;
    report.inputs.push(input_ref(&a.source)?);
    report.inputs.push(input_ref(&a.target)?);
    let weights = |s: &TokenSequence| -> Option<Vec<f64>> {
        (a.weights == "sizes").then(|| {
            let total = s.total_size() as f64;
            s.sizes().iter().map(|&v| v as f64 / total).collect()
        })
    };
    let (ws, wt) = (weights(&src), weights(&dst));
    let plan = emd(src.tokens(), dst.tokens(), ws.as_deref(), wt.as_deref())?;
    if let Some(p) = &a.plan_csv {
        write_atomic(p, plan.to_csv().as_bytes())?;
    }
    report.results = json!({
        "cost": plan.cost,
        "n_source": src.len(),
        "n_target": dst.len(),
        "pivots": plan.pivots,
    });
    finish(&report, a.out.as_deref(), None)
}

fn propagate(a: &PropagateArgs) -> Result<()> {
    let mut report = Report::new("propagate", a)?;
    let enc = encoder(&a.encoder, &mut report)?;
    let seq = load_input(&a.input, &mut report)?;
    let fold = settings(&a.matching, &a.scheme)?;
    let weights: EmdWeights = parse(&a.removal.weights)?;
    let removals = removals(&a.removal)?;
    let blocks: Vec<usize> = if a.at_blocks.is_empty() {
        (1..=a.encoder.blocks).collect()
    } else {
        a.at_blocks.clone()
    };
    if let Some(&b) = blocks.iter().find(|&&b| b == 0 || b > a.encoder.blocks) {
        return Err(FoldError::argument(format!(
            "block {b} outside 1..={}",
            a.encoder.blocks
        )));
    }
    let probe = PropagationProbe::new(&enc, &seq)?;
    let cells: Vec<(usize, Removal)> = removals
        .iter()
        .flat_map(|(_, r)| blocks.iter().map(move |&b| (b - 1, *r)))
        .collect();
    let points =
        foldkit_core::analysis::parallel_map(&cells, |&(b, r)| probe.point(b, r, fold, weights))?;
    let mut table = Table::new(
        "propagation",
        "block",
        blocks.iter().map(|b| json!(b)).collect(),
    );
    let mut detail = Vec::new();
    for ((name, _), chunk) in removals.iter().zip(points.chunks(blocks.len())) {
        table.push(name.clone(), chunk.iter().map(|p| json!(p.emd)).collect());
        detail.push(
            json!({ "removal": name, "points": chunk.iter().map(point_json).collect::<Vec<_>>() }),
        );
    }
    report.results = json!({ "reducible": probe.reducible(), "sweeps": detail });
    report.table = Some(table);
    finish(&report, a.out.as_deref(), a.csv.as_deref())
}

fn point_json(p: &PropagationPoint) -> Value {
    json!({ "block": p.block + 1, "r": p.r, "emd": p.emd })
}

fn aggsweep(a: &AggsweepArgs) -> Result<()> {
    let mut report = Report::new("aggsweep", a)?;
    let enc = encoder(&a.encoder, &mut report)?;
    let seq = load_input(&a.input, &mut report)?;
    let fold = settings(&a.matching, "avg")?;
    let weights: EmdWeights = parse(&a.removal.weights)?;
    let block = a.at_block.unwrap_or(a.encoder.blocks);
    if block == 0 || block > a.encoder.blocks {
        return Err(FoldError::argument(format!(
            "block {block} outside 1..={}",
            a.encoder.blocks
        )));
    }
    let removals = removals(&a.removal)?;
    let index_name = if a.removal.counts.is_empty() {
        "ratio"
    } else {
        "r"
    };
    let index: Vec<Value> = if a.removal.counts.is_empty() {
        a.removal.ratios.iter().map(|v| json!(v)).collect()
    } else {
        a.removal.counts.iter().map(|v| json!(v)).collect()
    };
    let rows = removals
        .iter()
        .map(|(_, r)| aggregation_sweep(&enc, &seq, block - 1, *r, fold, weights))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new("aggregation", index_name, index);
    for (s, scheme) in AggregationScheme::ALL.iter().enumerate() {
        table.push(
            scheme.name(),
            rows.iter().map(|row| json!(row[s].1)).collect(),
        );
    }
    let detail: BTreeMap<String, Value> = removals
        .iter()
        .zip(&rows)
        .map(|((name, _), row)| {
            (
                name.clone(),
                row.iter()
                    .map(|(s, e)| (s.name().to_string(), json!(e)))
                    .collect(),
            )
        })
        .collect();
    report.results = json!({ "block": block, "emd": detail });
    report.table = Some(table);
    finish(&report, a.out.as_deref(), a.csv.as_deref())
}

fn schedule_label(name: &str, total: usize) -> Result<ScheduleSpec> {
    if name.contains(':') {
        return parse(name);
    }
    let kind = match name {
        "last1" => ScheduleKind::Last1,
        "uniform" => ScheduleKind::Uniform,
        other => match other
            .strip_prefix("last")
            .and_then(|k| k.parse::<usize>().ok())
        {
            Some(k) => ScheduleKind::LastN(k),
            None => return Err(FoldError::argument(format!("unknown schedule {other:?}"))),
        },
    };
    Ok(ScheduleSpec::Kind { kind, total })
}

/// The schedule list is comma-separated, which also splits `explicit:`
/// specs; glue the bare counts back onto the spec they came from.
fn rejoin_explicit(items: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in items {
        let bare = !item.is_empty() && item.bytes().all(|b| b.is_ascii_digit());
        match out.last_mut() {
            Some(prev) if bare && prev.starts_with("explicit:") => {
                prev.push(',');
                prev.push_str(item);
            }
            _ => out.push(item.clone()),
        }
    }
    out
}

fn schedsweep(a: &SchedsweepArgs) -> Result<()> {
    let mut report = Report::new("schedsweep", a)?;
    let enc = encoder(&a.encoder, &mut report)?;
    let seq = load_input(&a.input, &mut report)?;
    let fold = settings(&a.matching, &a.scheme)?;
    let weights: EmdWeights = parse(&a.weights)?;
    let total = match a.total {
        Some(t) => t,
        None => Removal::Ratio(a.ratio).resolve(seq.reducible_len())?,
    };
    let specs = rejoin_explicit(&a.schedules)
        .iter()
        .map(|s| Ok((s.clone(), schedule_label(s, total)?)))
        .collect::<Result<Vec<_>>>()?;
    let points = schedule_sweep(&enc, &seq, &specs, fold, weights)?;
    let mut table = Table::new(
        "schedule",
        "schedule",
        points.iter().map(|p| json!(p.label)).collect(),
    );
    table.push("emd", points.iter().map(|p| json!(p.emd)).collect());
    report.results = json!({ "total_r": total, "schedules": points });
    report.table = Some(table);
    finish(&report, a.out.as_deref(), a.csv.as_deref())
}

fn report(a: &ReportArgs) -> Result<()> {
    let merged = merge_reports(&a.inputs)?;
    if let Some(dir) = &a.csv {
        std::fs::create_dir_all(dir)?;
        for t in &merged.tables {
            write_atomic(&dir.join(format!("{}.csv", t.kind)), t.to_csv().as_bytes())?;
        }
    }
    emit(a.out.as_deref(), &merged.to_json())
}

/// Commands whose `--out` is the report itself, and so can be replayed.
const REPLAYABLE: [&str; 5] = ["energy", "emd", "propagate", "aggsweep", "schedsweep"];

fn replay(a: &ReplayArgs) -> Result<()> {
    let bytes = read_file(&a.from)?;
    let bad = |msg: String| FoldError::format(0, format!("{}: {msg}", a.from.display()));
    let recorded: Report =
        serde_json::from_slice(&bytes).map_err(|e| bad(format!("not a report: {e}")))?;
    if !REPLAYABLE.contains(&recorded.command.as_str()) {
        return Err(FoldError::argument(format!(
            "cannot replay `{}` reports",
            recorded.command
        )));
    }
    for input in &recorded.inputs {
        let now = input_ref(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(bad(format!(
                "input {} changed since the report was written",
                input.path
            )));
        }
    }
    let mut cfg = tempfile::NamedTempFile::new()?;
    std::io::Write::write_all(&mut cfg, config_to_text(&recorded.config).as_bytes())?;
    let mut argv: Vec<std::ffi::OsString> = vec!["foldkit".into(), recorded.command.clone().into()];
    argv.push("--config".into());
    argv.push(cfg.path().into());
    if let Some(out) = &a.out {
        argv.push("--out".into());
        argv.push(out.into());
    }
    let argv = crate::config::expand_argv(&<crate::Cli as clap::CommandFactory>::command(), argv)?;
    let cli = <crate::Cli as clap::Parser>::try_parse_from(argv)
        .map_err(|e| bad(format!("recorded config no longer parses: {e}")))?;
    dispatch(cli.command)
}
