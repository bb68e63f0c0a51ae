use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use tempdens_core::backbone::model::ModelCheckpoint;
use tempdens_core::engine::write_jsonl;
use tempdens_core::evaluation::{
    average, evaluate_dataset, evaluate_subject, run_metric_sweep, DatasetReport, Grid, SubjectEval,
};
use tempdens_core::pipeline::{self, DatasetIndex, SubjectEntry};
use tempdens_core::provenance::Envelope;
use tempdens_core::synth::{write_synthetic_root, EegSynthSpec};
use tempdens_core::{run_stream, CalibrationPack, EngineConfig, Method, NativeBackboneModel, RunConfig};

use crate::args::{RunArgs, SynthArgs};
use crate::output::{cell, csv_bytes, write_json, write_with_sidecar};

pub struct Ctx {
    pub root: PathBuf,
    pub out: PathBuf,
    pub cfg: RunConfig,
    pub index: DatasetIndex,
    jobs: usize,
}

impl Ctx {
    pub fn new(args: &RunArgs) -> Result<Self> {
        let cfg = args.resolve()?;
        let index = DatasetIndex::load(&args.data_root)?;
        index.select(&cfg)?;
        Ok(Self {
            root: args.data_root.clone(),
            out: args.out.clone(),
            cfg,
            index,
            jobs: args.jobs.max(1),
        })
    }

    /// Runs `f` per selected subject on `--jobs` threads; results keep selection order.
    fn per_subject<T, F>(&self, f: F) -> Result<Vec<(String, T)>>
    where
        T: Send,
        F: Fn(&str, &SubjectEntry) -> Result<T> + Sync,
    {
        let selected = self.index.select(&self.cfg)?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build()?;
        pool.install(|| {
            selected
                .par_iter()
                .map(|(ds, s)| {
                    f(ds, s)
                        .with_context(|| format!("{ds}/{}", s.id))
                        .map(|v| (ds.to_string(), v))
                })
                .collect()
        })
    }

    fn model_path(&self, ds: &str, subject: &str) -> PathBuf {
        self.out.join("models").join(ds).join(format!("{subject}.json"))
    }

    fn pack_path(&self, ds: &str, subject: &str) -> PathBuf {
        self.out.join("packs").join(ds).join(format!("{subject}.json"))
    }

    /// A stored checkpoint trained under the same settings, or a fresh one.
    fn model(&self, ds: &str, s: &SubjectEntry) -> Result<NativeBackboneModel> {
        let path = self.model_path(ds, &s.id);
        if let Some(artifact) = stored_artifact(&path, &self.cfg, training_key)? {
            let ck: ModelCheckpoint = serde_json::from_value(artifact)?;
            log::info!("{ds}/{}: using {}", s.id, path.display());
            return Ok(NativeBackboneModel::from_checkpoint(&ck)?);
        }
        Ok(pipeline::train_subject(&self.root, ds, s, &self.cfg)?)
    }

    fn pack(&self, ds: &str, s: &SubjectEntry, model: &NativeBackboneModel) -> Result<CalibrationPack> {
        let path = self.pack_path(ds, &s.id);
        if let Some(artifact) = stored_artifact(&path, &self.cfg, calibration_key)? {
            log::info!("{ds}/{}: using {}", s.id, path.display());
            return Ok(CalibrationPack::from_json(&artifact.to_string())?);
        }
        Ok(pipeline::calibrate_subject(&self.root, s, model, &self.cfg)?)
    }
}

fn training_key(cfg: &RunConfig) -> Value {
    json!([
        cfg.window,
        cfg.band,
        cfg.backbone,
        cfg.train_min_coverage,
        cfg.train_stride,
        cfg.seed
    ])
}

fn calibration_key(cfg: &RunConfig) -> Value {
    json!([
        training_key(cfg),
        cfg.gate_threshold,
        cfg.scoring,
        cfg.calibration,
        cfg.eval_config().baselines
    ])
}

/// The artifact at `path` if its recorded config agrees with `cfg` under `key`.
fn stored_artifact(path: &Path, cfg: &RunConfig, key: fn(&RunConfig) -> Value) -> Result<Option<Value>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(None);
    };
    let env: Envelope = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let stored: RunConfig = serde_json::from_value(env.provenance.config.clone())?;
    if key(&stored) != key(cfg) || !env.verify()? {
        log::info!("{} was produced under different settings; recomputing", path.display());
        return Ok(None);
    }
    Ok(Some(env.artifact))
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

pub fn train(args: &RunArgs) -> Result<Value> {
    let ctx = Ctx::new(args)?;
    let written = ctx.per_subject(|ds, s| {
        let model = pipeline::train_subject(&ctx.root, ds, s, &ctx.cfg)?;
        let path = ctx.model_path(ds, &s.id);
        write_json(&path, &ctx.cfg, serde_json::to_value(model.to_checkpoint()?)?)?;
        Ok(rel(&ctx.out, &path))
    })?;
    Ok(json!(written.into_iter().map(|(_, p)| p).collect::<Vec<_>>()))
}

pub fn calibrate(args: &RunArgs) -> Result<Value> {
    let ctx = Ctx::new(args)?;
    let written = ctx.per_subject(|ds, s| {
        let model = ctx.model(ds, s)?;
        let pack = pipeline::calibrate_subject(&ctx.root, s, &model, &ctx.cfg)?;
        let path = ctx.pack_path(ds, &s.id);
        write_json(&path, &ctx.cfg, serde_json::from_str(&pack.to_json()?)?)?;
        log::info!("{ds}/{}: tau = {}", s.id, pack.tau);
        Ok(rel(&ctx.out, &path))
    })?;
    Ok(json!(written.into_iter().map(|(_, p)| p).collect::<Vec<_>>()))
}

pub fn replay(args: &RunArgs) -> Result<Value> {
    let ctx = Ctx::new(args)?;
    let written = ctx.per_subject(|ds, s| {
        let model = ctx.model(ds, s)?;
        let pack = ctx.pack(ds, s, &model)?;
        let mut engine_cfg = EngineConfig::from_pack(&pack);
        engine_cfg.aggregate_window = ctx.cfg.aggregate_window;
        let mut files = Vec::new();
        for (i, session) in s.test.iter().enumerate() {
            let feats = s.test_features.get(i).map(PathBuf::as_path);
            let frames = pipeline::session_frames(&ctx.root, session, feats, &model, &ctx.cfg)?;
            let records = run_stream(&frames, &pack, engine_cfg)?;
            let mut bytes = Vec::new();
            write_jsonl(&records, &mut bytes)?;
            let stem = session
                .file_stem()
                .context("session path has no file name")?
                .to_string_lossy();
            let path = ctx
                .out
                .join("decisions")
                .join(ds)
                .join(&s.id)
                .join(format!("{stem}.jsonl"));
            write_with_sidecar(&path, &ctx.cfg, &bytes)?;
            files.push(rel(&ctx.out, &path));
        }
        Ok(files)
    })?;
    Ok(json!(written.into_iter().flat_map(|(_, p)| p).collect::<Vec<_>>()))
}

/// Concatenates single-subject grids that share row labels.
fn merge_grids(grids: &[Grid]) -> Option<Grid> {
    let first = grids.first()?;
    let mut out = Grid {
        subjects: grids.iter().flat_map(|g| g.subjects.iter().cloned()).collect(),
        rows: first.rows.clone(),
    };
    for (r, row) in out.rows.iter_mut().enumerate() {
        row.per_subject = grids
            .iter()
            .flat_map(|g| g.rows[r].per_subject.iter().copied())
            .collect();
        row.average = average(&row.per_subject);
    }
    Some(out)
}

fn evaluate(ctx: &Ctx, sweep: bool) -> Result<Vec<DatasetReport>> {
    let eval_cfg = ctx.cfg.eval_config();
    let metric_names: Vec<String> = ctx.cfg.metrics.iter().map(|m| m.name().to_string()).collect();
    let results = ctx.per_subject(|ds, s| {
        let model = ctx.model(ds, s)?;
        let data = pipeline::subject_data(&ctx.root, s, &model, &ctx.cfg)?;
        let eval = evaluate_subject(&data, &eval_cfg)?;
        let grid = if sweep && !metric_names.is_empty() {
            Some(run_metric_sweep(std::slice::from_ref(&data), &metric_names, &eval_cfg)?)
        } else {
            None
        };
        Ok((eval, grid))
    })?;
    let mut groups: Vec<(String, Vec<SubjectEval>, Vec<Grid>)> = Vec::new();
    for (ds, (eval, grid)) in results {
        if groups.last().is_none_or(|g| g.0 != ds) {
            groups.push((ds, Vec::new(), Vec::new()));
        }
        let g = groups.last_mut().expect("pushed above");
        g.1.push(eval);
        g.2.extend(grid);
    }
    groups
        .into_iter()
        .map(|(ds, evals, grids)| {
            let mut report = evaluate_dataset(&ds, &evals, &eval_cfg)?;
            report.metric_sweep = merge_grids(&grids);
            Ok(report)
        })
        .collect()
}

fn grid_csv(grid: &Grid, first: &str) -> Result<Vec<u8>> {
    let mut header = vec![first];
    header.extend(grid.subjects.iter().map(String::as_str));
    header.push("average");
    let rows: Vec<Vec<String>> = grid
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.label.clone()];
            v.extend(r.per_subject.iter().map(|c| cell(*c)));
            v.push(cell(r.average));
            v
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Subjects as rows and methods as columns, plus the average row.
fn auroc_csv(report: &DatasetReport, all_task: bool, methods: &[Method]) -> Result<Vec<u8>> {
    let names: Vec<String> = methods.iter().map(Method::name).collect();
    let mut header = vec!["subject"];
    header.extend(names.iter().map(String::as_str));
    let mut rows: Vec<Vec<String>> = report
        .subjects
        .iter()
        .map(|s| {
            let map = if all_task { &s.auroc_all_task } else { &s.auroc };
            let mut v = vec![s.subject.clone()];
            v.extend(names.iter().map(|n| cell(map.get(n).copied())));
            v
        })
        .collect();
    let avg = if all_task {
        &report.average_all_task
    } else {
        &report.average
    };
    let mut last = vec!["average".to_string()];
    last.extend(names.iter().map(|n| cell(avg.get(n).copied())));
    rows.push(last);
    csv_bytes(&header, &rows)
}

fn coverage_csv(report: &DatasetReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (population, curve) in [
        ("id", &report.coverage_curve),
        ("id+ood", &report.coverage_curve_with_ood),
    ] {
        for b in curve {
            rows.push(vec![
                population.to_string(),
                format!("{:.6}", b.lo),
                format!("{:.6}", b.hi),
                format!("{:.6}", b.center),
                b.count.to_string(),
                b.gated.to_string(),
                format!("{:.6}", b.recall),
            ]);
        }
    }
    csv_bytes(&["population", "lo", "hi", "center", "count", "gated", "recall"], &rows)
}

pub fn eval(args: &RunArgs) -> Result<Value> {
    let ctx = Ctx::new(args)?;
    let reports = evaluate(&ctx, !args.no_sweep)?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = ctx.out.join(&name);
        write_with_sidecar(&path, &ctx.cfg, &bytes)?;
        files.push(name);
        Ok(())
    };
    let mut gate_rows = Vec::new();
    for r in &reports {
        let ds = &r.dataset;
        put(format!("auroc_{ds}.csv"), auroc_csv(r, false, &ctx.cfg.methods)?)?;
        put(
            format!("auroc_all_task_{ds}.csv"),
            auroc_csv(r, true, &ctx.cfg.methods)?,
        )?;
        put(format!("ablation_{ds}.csv"), grid_csv(&r.ablation, "components")?)?;
        if let Some(g) = &r.metric_sweep {
            put(format!("metric_sweep_{ds}.csv"), grid_csv(g, "metric")?)?;
        }
        put(format!("coverage_{ds}.csv"), coverage_csv(r)?)?;
        for s in &r.subjects {
            gate_rows.push(vec![
                ds.clone(),
                s.subject.clone(),
                cell(s.gate_accuracy),
                cell(s.gate_accuracy_with_ood),
            ]);
        }
        gate_rows.push(vec![
            ds.clone(),
            "average".into(),
            cell(r.gate_accuracy),
            cell(r.gate_accuracy_with_ood),
        ]);
    }
    put(
        "gate_accuracy.csv".into(),
        csv_bytes(&["dataset", "subject", "accuracy", "accuracy_with_ood"], &gate_rows)?,
    )?;
    let report_path = ctx.out.join("report.json");
    write_json(&report_path, &ctx.cfg, serde_json::to_value(&reports)?)?;
    files.insert(0, "report.json".into());
    Ok(json!(files))
}

pub fn ablate(args: &RunArgs) -> Result<Value> {
    let mut ctx = Ctx::new(args)?;
    ctx.cfg.methods = vec![Method::TempDens];
    let reports = evaluate(&ctx, true)?;
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for r in &reports {
        let name = format!("ablation_{}.csv", r.dataset);
        write_with_sidecar(&ctx.out.join(&name), &ctx.cfg, &grid_csv(&r.ablation, "components")?)?;
        files.push(name);
        if let Some(g) = &r.metric_sweep {
            let name = format!("metric_sweep_{}.csv", r.dataset);
            write_with_sidecar(&ctx.out.join(&name), &ctx.cfg, &grid_csv(g, "metric")?)?;
            files.push(name);
        }
        summary.push(json!({"dataset": r.dataset, "ablation": r.ablation, "metric_sweep": r.metric_sweep}));
    }
    write_json(&ctx.out.join("ablation.json"), &ctx.cfg, json!(summary))?;
    files.insert(0, "ablation.json".into());
    Ok(json!(files))
}

pub fn synth(args: &SynthArgs) -> Result<Value> {
    anyhow::ensure!(args.subjects > 0, "at least one subject is required");
    let spec = EegSynthSpec {
        duration_s: args.duration_s,
        ..Default::default()
    };
    let index = write_synthetic_root(&args.out, &spec, args.subjects, args.seed)?;
    let subjects: Vec<&str> = index
        .datasets
        .iter()
        .flat_map(|d| d.subjects.iter().map(|s| s.id.as_str()))
        .collect();
    Ok(json!({"index": pipeline::INDEX_FILE, "subjects": subjects}))
}
