use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hegcn_core::costmodel::{
    layer_hoc, model_hoc, reduction, rows_by_kind, schedule, select_params, select_params_with_margin, GraphStats,
    HocFormulaInput, HocRow, Method, SecurityTable,
};
use hegcn_core::engine::{plaintext_reference, presets, run_model, run_model_with, LayerHoc, Model, RunOptions};
use hegcn_core::packing::{pack as pack_tensor, GraphTensor, LayoutKind, PackingLayout};
use hegcn_core::prune::{search, AccuracyEvaluator, ExternalEvaluator, StubEvaluator};
use hegcn_core::sim::{write_log, SimContext};
use serde_json::{json, Value};

use crate::{CompareArgs, FormatArg, HeArgs, HocArgs, InferArgs, ModelArgs, PackArgs, ParamsArgs, PruneArgs};

fn load_model(a: &ModelArgs) -> Result<Model> {
    let model = match a.model.strip_prefix("preset:") {
        Some(name) => Model::from_spec(presets::by_name(name)?, None)?,
        None => {
            let path = Path::new(&a.model);
            if !path.is_file() {
                bail!("model spec {} not found", path.display());
            }
            Model::load(path).with_context(|| format!("loading {}", path.display()))?
        }
    };
    Ok(match a.batch {
        Some(0) => bail!("--batch must be >= 1"),
        Some(b) => model.with_batch(b),
        None => model,
    })
}

fn formats(f: FormatArg) -> Vec<LayoutKind> {
    match f {
        FormatArg::Ama => vec![LayoutKind::Ama],
        FormatArg::Rowmajor => vec![LayoutKind::RowMajor],
        FormatArg::Both => vec![LayoutKind::Ama, LayoutKind::RowMajor],
    }
}

fn format_name(f: LayoutKind) -> &'static str {
    match f {
        LayoutKind::Ama => "ama",
        LayoutKind::RowMajor => "rowmajor",
    }
}

/// Level budget and slot count for a run: explicit flags win, otherwise the
/// model depth and the slot count of the parameters selected for it.
fn budget(model: &Model, he: &HeArgs) -> Result<(u32, usize)> {
    let levels = he.levels.unwrap_or_else(|| model.depth());
    let slots = match he.slots {
        Some(s) => s,
        None => select_params(levels.max(1), he.scale_bits, he.security_bits, &SecurityTable::default())?.slot_count as usize,
    };
    Ok((levels, slots))
}

/// Input from a file, or random with the given seed (0 by default). A file
/// whose batch differs from the model's resizes the model batch.
fn load_input(model: Model, input: Option<&Path>, seed: Option<u64>) -> Result<(Model, GraphTensor)> {
    let dims = model.spec.input.as_array();
    match input {
        Some(p) => {
            let x = GraphTensor::load(p).with_context(|| format!("reading input {}", p.display()))?;
            let xd = x.dims();
            if xd[1..] != dims[1..] {
                bail!("input dims {xd:?} do not match model input {dims:?}");
            }
            let model = if xd[0] == dims[0] { model } else { model.with_batch(xd[0]) };
            Ok((model, x))
        }
        None => Ok((model, GraphTensor::random(dims, seed.unwrap_or(0))?)),
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_hoc_csv<W: Write>(w: W, rows: &[(String, String, &'static str, u64)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["layer", "op", "format", "count"])?;
    for (layer, op, fmt, count) in rows {
        csv.write_record([layer.as_str(), op.as_str(), fmt, &count.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

const OPS: [&str; 4] = ["rot", "pmult", "cmult", "add"];

fn layer_rows(layers: &[LayerHoc], fmt: &'static str) -> Vec<(String, String, &'static str, u64)> {
    let mut out = Vec::new();
    let mut total = hegcn_core::OpCounts::default();
    for l in layers {
        total += l.counts;
        for op in OPS {
            out.push((l.label.clone(), op.to_string(), fmt, l.counts.get(op).unwrap_or(0)));
        }
    }
    for op in OPS {
        out.push(("total".into(), op.to_string(), fmt, total.get(op).unwrap_or(0)));
    }
    out
}

pub fn infer(a: InferArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let input = a.input.as_deref();
    let (model, x) = load_input(model, input, a.seed)?;
    let (levels, slots) = budget(&model, &a.he)?;
    let ctx = SimContext::new(slots, levels)?
        .with_scale_bits(a.he.scale_bits)
        .with_quantize(a.quantize);
    let reference = plaintext_reference(&model, &x)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut per_format = BTreeMap::new();
    let mut level_map = BTreeMap::new();
    let mut csv_rows = Vec::new();
    let mut outputs = Vec::new();
    for fmt in formats(a.format) {
        let name = format_name(fmt);
        let run = run_model_with(&model, &x, fmt, &ctx, &RunOptions { log: a.log })?;
        let err = run.output.max_abs_diff(&reference);
        println!(
            "{name:<9} HOC {:>10}  levels used {:>2}/{levels}  input cts {:>4}  max |err| vs plaintext {err:.3e}",
            run.hoc.total.hoc(),
            run.levels_used(),
            run.input_cts
        );
        if let Some(log) = &run.log {
            let f = fs::File::create(a.out.join(format!("ops-{name}.jsonl")))?;
            write_log(std::io::BufWriter::new(f), log)?;
        }
        csv_rows.extend(layer_rows(&run.hoc.per_layer, name));
        level_map.insert(name, run.levels.clone());
        per_format.insert(
            name,
            json!({
                "scores": run.output.rows(),
                "max_abs_error_vs_reference": err,
                "levels_used": run.levels_used(),
                "input_ciphertexts": run.input_cts,
                "hoc": run.hoc.total,
            }),
        );
        outputs.push(run.output);
    }
    let mut doc = json!({
        "model": a.model.model,
        "input_dims": x.dims(),
        "slots": slots,
        "levels": levels,
        "quantize": a.quantize,
        "reference": reference.rows(),
        "formats": per_format,
    });
    if let [ama, rm] = outputs.as_slice() {
        let d = ama.max_abs_diff(rm);
        println!("formats agree to {d:.3e}");
        doc["equivalence"] = json!({ "ama_vs_rowmajor": d });
    }
    write_json(&a.out.join("scores.json"), &doc)?;
    write_json(&a.out.join("levels.json"), &level_map)?;
    write_hoc_csv(fs::File::create(a.out.join("hoc.csv"))?, &csv_rows)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Per-layer counts, from the simulator or the closed-form schedule.
fn layer_counts(model: &Model, fmt: LayoutKind, slots: usize, levels: u32, measure: bool, seed: u64) -> Result<Vec<LayerHoc>> {
    if measure {
        let x = GraphTensor::random(model.spec.input.as_array(), seed)?;
        let ctx = SimContext::new(slots, levels)?;
        Ok(run_model(model, &x, fmt, &ctx)?.hoc.per_layer)
    } else {
        Ok(schedule(&model.spec, &GraphStats::of(&model.adjacency), fmt, slots)?)
    }
}

fn print_row(name: &str, r: &HocRow) {
    println!("{name:<14} {:>12.0} {:>12.0} {:>10.0} {:>12.0} {:>12.0}", r.rot, r.pmult, r.cmult, r.add, r.total());
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let base = load_model(&a.model)?;
    if a.batches.is_empty() || a.batches.contains(&0) {
        bail!("--batches needs positive sizes");
    }
    let stats = GraphStats::of(&base.adjacency);
    let mut sweep = Vec::new();
    let mut doc = BTreeMap::new();
    for &b in &a.batches {
        let model = base.with_batch(b);
        let (levels, slots) = budget(&model, &a.he)?;
        println!("\n== batch {b}, {slots} slots ({}) ==", if a.measure { "measured" } else { "schedule" });
        println!("{:<14} {:>12} {:>12} {:>10} {:>12} {:>12}", "layer", "rot", "pmult", "cmult", "add", "HOC");
        let mut totals = BTreeMap::new();
        let mut csv_rows = Vec::new();
        let mut per_kind = BTreeMap::new();
        for fmt in [LayoutKind::Ama, LayoutKind::RowMajor] {
            let layers = layer_counts(&model, fmt, slots, levels, a.measure, b as u64)?;
            csv_rows.extend(layer_rows(&layers, format_name(fmt)));
            println!("-- {}", format_name(fmt));
            let rows = rows_by_kind(&layers);
            let mut total = HocRow::new("total", 0.0, 0.0, 0.0, 0.0);
            for r in &rows {
                print_row(&r.layer, r);
                total.rot += r.rot;
                total.pmult += r.pmult;
                total.cmult += r.cmult;
                total.add += r.add;
            }
            print_row("total", &total);
            totals.insert(format_name(fmt), total);
            per_kind.insert(format_name(fmt), rows);
        }
        let p = HocFormulaInput::for_model(&model.spec, &stats, slots)?;
        println!("-- analytic whole-model rows (U={} V={} K={} A={:.2})", p.u, p.v, p.k, p.a);
        let mut methods = BTreeMap::new();
        for m in Method::ALL {
            let r = model_hoc(m, &p);
            print_row(m.name(), &r);
            methods.insert(m.name(), r);
        }
        let (ama, rm) = (&totals["ama"], &totals["rowmajor"]);
        let chet = methods["CHET"].total();
        let fhear = methods["F-HEAR"].total();
        let reductions = json!({
            "ama_vs_rowmajor": reduction(ama.total(), rm.total()),
            "ama_vs_chet": reduction(ama.total(), chet),
            "ama_vs_fhear": reduction(ama.total(), fhear),
            "pmult_add_ratio": (ama.pmult + ama.add) / (rm.pmult + rm.add),
        });
        println!(
            "HOC reduction: vs row-major {:.1}%, vs CHET {:.1}%, vs F-HEAR {:.1}%; PMult+Add ratio {:.3}",
            100.0 * reduction(ama.total(), rm.total()),
            100.0 * reduction(ama.total(), chet),
            100.0 * reduction(ama.total(), fhear),
            (ama.pmult + ama.add) / (rm.pmult + rm.add)
        );
        sweep.push((b, ama.total() / b as f64, rm.total() / b as f64, ama.rot / b as f64));
        if let Some(dir) = &a.out {
            fs::create_dir_all(dir)?;
            write_hoc_csv(fs::File::create(dir.join(format!("compare-b{b}.csv")))?, &csv_rows)?;
        }
        doc.insert(
            format!("b{b}"),
            json!({
                "batch": b,
                "slots": slots,
                "layers": per_kind,
                "totals": totals,
                "methods": methods,
                "formula_input": p,
                "reductions": reductions,
            }),
        );
    }
    if sweep.len() > 1 {
        println!("\n== amortized per sample ==");
        println!("{:>6} {:>14} {:>14} {:>12}", "batch", "AMA HOC", "row-major HOC", "AMA rot");
        for (b, ama, rm, rot) in &sweep {
            println!("{b:>6} {ama:>14.1} {rm:>14.1} {rot:>12.1}");
        }
    }
    if let Some(dir) = &a.out {
        let amortized: Vec<Value> = sweep
            .iter()
            .map(|(b, ama, rm, rot)| json!({"batch": b, "ama_hoc": ama, "rowmajor_hoc": rm, "ama_rot": rot}))
            .collect();
        write_json(&dir.join("compare.json"), &json!({"batches": doc, "amortized": amortized}))?;
    }
    Ok(())
}

pub fn params(a: ParamsArgs) -> Result<()> {
    let table = match &a.table {
        Some(p) => SecurityTable::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SecurityTable::default(),
    };
    let p = select_params_with_margin(a.levels, a.scale_bits, a.security_bits, a.margin_bits, &table)?;
    println!("{}", serde_json::to_string_pretty(&p)?);
    Ok(())
}

pub fn prune(a: PruneArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let eval: Box<dyn AccuracyEvaluator> = if let Some(p) = &a.stub {
        Box::new(StubEvaluator::load(p).with_context(|| format!("stub table {}", p.display()))?)
    } else if a.stub_builtin {
        Box::new(StubEvaluator::builtin_scenario())
    } else if let Some(cmd) = &a.evaluator_cmd {
        Box::new(ExternalEvaluator::from_command_line(cmd)?)
    } else {
        bail!("one of --stub, --stub-builtin, --evaluator-cmd is required");
    };
    let out = search(&model.spec, eval.as_ref(), a.max_prune, a.scale_bits, a.security_bits, &SecurityTable::default())?;
    if !out.ranking.is_empty() {
        println!("ranking (drop-one, best first): {:?}", out.ranking);
    }
    println!("{:<10} {:>9} {:>7} {:>8} {:>7}", "variant", "accuracy", "levels", "N", "Q bits");
    for (i, r) in out.results.iter().enumerate() {
        let mark = if i == out.best { "  <- selected" } else { "" };
        println!(
            "{:<10} {:>9.4} {:>7} {:>8} {:>7}{mark}",
            r.variant, r.accuracy, r.levels, format!("2^{}", r.params.log_n), r.params.q_bits
        );
    }
    if let Some(p) = &a.out {
        write_json(p, &out)?;
    }
    Ok(())
}

pub fn hoc(a: HocArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (levels, slots) = budget(&model, &a.he)?;
    let mut rows = Vec::new();
    for fmt in formats(a.format) {
        let layers = layer_counts(&model, fmt, slots, levels, a.measure, 0)?;
        rows.extend(layer_rows(&layers, format_name(fmt)));
    }
    if a.formula {
        let p = HocFormulaInput::for_model(&model.spec, &GraphStats::of(&model.adjacency), slots)?;
        for fmt in formats(a.format) {
            let tag = match fmt {
                LayoutKind::Ama => "ama-formula",
                LayoutKind::RowMajor => "rowmajor-formula",
            };
            for r in layer_hoc(fmt, &p) {
                for op in OPS {
                    rows.push((r.layer.clone(), op.to_string(), tag, r.get(op).unwrap_or(0.0).round() as u64));
                }
            }
        }
    }
    match &a.out {
        Some(p) => write_hoc_csv(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?, &rows),
        None => write_hoc_csv(std::io::stdout().lock(), &rows),
    }
}

fn layout_summary(l: &PackingLayout) -> Value {
    json!({
        "ciphertexts": l.num_cts(),
        "slot_count": l.slot_count,
        "channel_blocks_per_ct": l.channels_per_ct,
        "cts_per_joint": l.cts_per_joint,
        "replication": l.replication,
        "pad_bt": l.pad_bt,
        "occupied_slots": l.occupied_slots(),
        "wasted_slots": l.wasted_slots(),
    })
}

pub fn pack(a: PackArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (model, x) = load_input(model, a.input.as_deref(), a.seed)?;
    let (levels, slots) = budget(&model, &a.he)?;
    let ctx = SimContext::new(slots, levels.max(1))?;
    let mut doc = BTreeMap::new();
    for fmt in formats(a.format) {
        let (_, layout) = pack_tensor(&x, fmt, &ctx)?;
        doc.insert(format_name(fmt), layout_summary(&layout));
    }
    println!("{}", serde_json::to_string_pretty(&json!({"input_dims": x.dims(), "layouts": doc}))?);
    if let Some(p) = &a.write_input {
        x.save(p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
