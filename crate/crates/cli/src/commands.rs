//! One function per subcommand. Each writes its outputs, a resolved config
//! snapshot and `summary.json` into the output directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use contig_assoc::{clump_report_tsv, manhattan_svg, run_association, summary_tsv, AssociationResult};
use contig_core::{
    attribution_tsv, baseline_for, baselines, explainer_value, global_attribution, linear_eval,
    modality_attribution_summary, retrieval_top1, trace_tsv, AttributionMetadata, AttributionReport, Dataset,
    LinearEvalReport, LinearTask, ModelParams, Sample,
};
use contig_genetics::io::{
    fmt_f64, read_features, write_burden, write_features, write_genotypes, write_pgs, write_positions,
};
use contig_genetics::{synth_generate, FeatureMatrix, GroundTruth};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::artifacts::{self, *};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn masks_table(ids: &[String], m: &contig_genetics::ModalityMasks) -> Result<FeatureMatrix> {
    let col = |v: &[bool]| v.iter().map(|&b| b as u8 as f64).collect::<Vec<f64>>();
    Ok(FeatureMatrix::from_columns(
        ids.to_vec(),
        vec!["raw".into(), "pgs".into(), "burden".into()],
        &[col(&m.raw), col(&m.pgs), col(&m.burden)],
    )?)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<StageSummary> {
    let s = synth_generate(&cfg.synth, cfg.seed)?;
    let mut w = StageWriter::new(out, cfg)?;
    let prov = w.prov.clone();
    write_features(&w.path(IMAGES), &s.images, &prov)?;
    w.track(IMAGES);
    write_genotypes(&w.path(GENOTYPES), &s.genotypes, &prov)?;
    w.track(GENOTYPES);
    write_positions(&w.path(POSITIONS), &s.genotypes, &prov)?;
    w.track(POSITIONS);
    for p in &s.pgs {
        let name = format!("{PGS_DIR}/{}.tsv", p.score_id);
        write_pgs(&w.path(&name), p, &prov)?;
        w.track(&name);
    }
    write_burden(&w.path(BURDEN), &s.burden, &prov)?;
    w.track(BURDEN);
    write_features(&w.path(COVARIATES), &s.covariates, &prov)?;
    w.track(COVARIATES);
    write_features(&w.path(MASKS), &masks_table(s.genotypes.individuals(), &s.masks)?, &prov)?;
    w.track(MASKS);
    w.write(TRUTH, &to_json(&s.truth))?;
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    let metrics = json!({
        "n_individuals": s.images.n_rows(),
        "n_image_features": s.images.n_cols(),
        "n_snps": s.genotypes.n_snps(),
        "n_pgs_scores": s.pgs.len(),
        "n_burden_variants": s.burden.variants.len(),
        "present": {
            "raw": count(&s.masks.raw),
            "pgs": count(&s.masks.pgs),
            "burden": count(&s.masks.burden),
        },
        "causal_snps": s.truth.causal.iter().map(|c| c.snp_id.clone()).collect::<Vec<_>>(),
    });
    w.finish("synth", BTreeMap::new(), metrics)
}

/// Mean top-1 retrieval over consecutive full batches of `b` rows having
/// modality `m`; `None` when fewer than `b` such rows exist.
fn retrieval(params: &ModelParams, d: &Dataset, rows: &[usize], b: usize) -> Result<BTreeMap<String, Value>> {
    let mut out = BTreeMap::new();
    for (m, md) in d.modalities.iter().enumerate() {
        let have: Vec<usize> = rows.iter().copied().filter(|&i| md.present[i]).collect();
        let accs: Vec<f64> = have
            .chunks_exact(b)
            .map(|c| retrieval_top1(params, d, m, c))
            .collect::<contig_core::Result<_>>()?;
        let v = if accs.is_empty() {
            Value::Null
        } else {
            json!({
                "batch_size": b,
                "n_batches": accs.len(),
                "top1": accs.iter().sum::<f64>() / accs.len() as f64,
                "chance": 1.0 / b as f64,
            })
        };
        out.insert(md.name.clone(), v);
    }
    Ok(out)
}

fn data_inputs(data: &LoadedData) -> BTreeMap<String, String> {
    BTreeMap::from([("data".to_string(), data.fingerprint.clone())])
}

fn model_inputs(data: &LoadedData, model: &LoadedModel) -> BTreeMap<String, String> {
    let mut m = data_inputs(data);
    m.insert("model".into(), model.fingerprint.clone());
    m
}

pub fn pretrain(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<StageSummary> {
    let data = load_data(data_dir, cfg)?;
    let d = &data.dataset;
    let n = d.len();
    let n_hold = (n as f64 * cfg.train.holdout).round() as usize;
    let n_train = n - n_hold;
    if n_train < 2 {
        return Err(CliError::Data(format!(
            "{n} individuals leave {n_train} for training after holding out {n_hold}"
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let holdout: Vec<usize> = (n_train..n).collect();
    let tcfg = cfg.train.to_config(cfg.seed);
    let run = contig_core::pretrain(&d.subset(&train), &cfg.encoder.to_config(), &tcfg)?;

    let mut w = StageWriter::new(out, cfg)?;
    w.write(CHECKPOINT, &run.params.to_json())?;
    let names: Vec<String> = d.modalities.iter().map(|m| m.name.clone()).collect();
    w.write("loss_trace.tsv", &trace_tsv(&run.trace, &names, &w.prov))?;
    let mut split = w.prov.line();
    split.push_str("#iid\tsplit\n");
    for (i, id) in d.ids.iter().enumerate() {
        let part = if i < n_train { "train" } else { "holdout" };
        let _ = writeln!(split, "{id}\t{part}");
    }
    w.write(SPLIT, &split)?;
    let means = run.epoch_means();
    let metrics = json!({
        "n_train": n_train,
        "n_holdout": n_hold,
        "n_params": run.params.n_params(),
        "steps": run.trace.len(),
        "epoch_mean_loss": means,
        "final_epoch_loss": means.last(),
        "skipped_terms": run.warnings.len(),
        "holdout_retrieval": retrieval(&run.params, d, &holdout, cfg.eval.retrieval_batch)?,
    });
    w.finish("pretrain", data_inputs(&data), metrics)
}

/// The run configuration the model was trained with.
fn training_config(model_dir: &Path) -> Result<RunConfig> {
    let path = model_dir.join(CONFIG_SNAPSHOT);
    require(&path)?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Data and model for a downstream stage. The data is featurized the way
/// the model was trained.
fn upstream(data_dir: &Path, model_dir: &Path) -> Result<(LoadedData, LoadedModel, RunConfig)> {
    verify_stage(model_dir, "pretrain")?;
    let trained = training_config(model_dir)?;
    let data = load_data(data_dir, &trained)?;
    let model = load_model(model_dir, &data)?;
    Ok((data, model, trained))
}

fn completeness_tsv(rows: &[(String, f64, f64)], prov: &contig_genetics::io::Provenance) -> String {
    let mut out = prov.line();
    out.push_str("#iid\texplainer_gap\tattribution_sum\tabs_error\n");
    for (id, gap, sum) in rows {
        let _ = writeln!(out, "{id}\t{}\t{}\t{}", fmt_f64(*gap), fmt_f64(*sum), fmt_f64((sum - gap).abs()));
    }
    out
}

fn attribution_sum(reports: &[AttributionReport], id: &str) -> f64 {
    reports
        .iter()
        .filter_map(|r| r.local.get(id))
        .flat_map(|v| v.iter())
        .sum()
}

pub fn explain(cfg: &RunConfig, data_dir: &Path, model_dir: &Path, out: &Path) -> Result<StageSummary> {
    let (data, model, trained) = upstream(data_dir, model_dir)?;
    let d = &data.dataset;
    let holdout = rows_of(d, &model.holdout_ids)?;
    let b_ref = cfg.explain.reference_batch_size;
    if holdout.len() <= b_ref {
        return Err(CliError::Data(format!(
            "{} held-out individuals cannot cover a reference batch of {b_ref} plus individuals to explain",
            holdout.len()
        )));
    }
    let ref_rows = &holdout[..b_ref];
    let rest = &holdout[b_ref..];
    let explained = &rest[..cfg.explain.n_individuals.min(rest.len())];

    let loss = trained.train.to_config(trained.seed).loss();
    let params = &model.params;
    let reference = contig_core::Reference::new(params, d, ref_rows, &loss)?;
    let samples: Vec<Sample> = explained.iter().map(|&i| d.sample(i)).collect();
    let names: Vec<String> = d.modalities.iter().map(|m| m.name.clone()).collect();
    let feature_ids: Vec<Vec<String>> = d.modalities.iter().map(|m| m.feature_ids.clone()).collect();
    let ecfg = cfg.explain.to_config();
    let reports = global_attribution(&samples, &reference, params, &names, &feature_ids, &ecfg)?;

    let baseline = baselines().create(&ecfg.baseline)?;
    let gaps: Vec<f64> = samples
        .par_iter()
        .map(|x| {
            let b = baseline_for(x, &reference, baseline.as_ref());
            let xb = Sample { genetics: b, ..x.clone() };
            Ok(explainer_value(x, &reference, params)? - explainer_value(&xb, &reference, params)?)
        })
        .collect::<contig_core::Result<_>>()?;
    let completeness: Vec<(String, f64, f64)> = samples
        .iter()
        .zip(&gaps)
        .map(|(x, &gap)| (x.id.clone(), gap, attribution_sum(&reports, &x.id)))
        .collect();
    let errors: Vec<f64> = completeness.iter().map(|(_, g, s)| (s - g).abs()).collect();

    let summary = modality_attribution_summary(&reports)?;
    let meta = AttributionMetadata {
        reference_fingerprint: reference.fingerprint.clone(),
        reference_size: reference.len(),
        ig_steps: ecfg.ig_steps,
        baseline: ecfg.baseline.clone(),
        n_individuals: samples.len(),
    };
    let mut w = StageWriter::new(out, cfg)?;
    w.write("attributions.tsv", &attribution_tsv(&reports, &w.prov))?;
    w.write("attribution_metadata.json", &to_json(&meta))?;
    let mut ms = w.prov.line();
    ms.push_str("modality\tn_features\tmean_global\tsum_global\n");
    for s in &summary {
        let _ = writeln!(ms, "{}\t{}\t{}\t{}", s.modality, s.n_features, fmt_f64(s.mean), fmt_f64(s.sum));
    }
    w.write("modality_summary.tsv", &ms)?;
    w.write("completeness.tsv", &completeness_tsv(&completeness, &w.prov))?;
    let top: BTreeMap<String, Value> = reports
        .iter()
        .map(|r| (r.modality.clone(), json!(r.top(10))))
        .collect();
    let metrics = json!({
        "reference_fingerprint": meta.reference_fingerprint,
        "reference_size": meta.reference_size,
        "n_individuals": meta.n_individuals,
        "ig_steps": meta.ig_steps,
        "baseline": meta.baseline,
        "completeness_max_abs_error": errors.iter().cloned().fold(0.0, f64::max),
        "completeness_mean_abs_error": if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 },
        "modality_summary": summary,
        "top_features": top,
    });
    w.finish("explain", model_inputs(&data, &model), metrics)
}

fn planted_recovery(r: &AssociationResult, truth: &GroundTruth, threshold: f64) -> Value {
    let index: BTreeMap<&str, usize> = r.snps.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let planted: Vec<usize> = truth
        .causal
        .iter()
        .filter_map(|c| index.get(c.snp_id.as_str()).copied())
        .collect();
    let significant = r.significant_clumps(threshold);
    let contains = |c: &contig_assoc::Clump, s: usize| c.index == s || c.members.contains(&s);
    let recovered = planted
        .iter()
        .filter(|&&s| significant.iter().any(|c| contains(c, s)))
        .count();
    let spurious = significant
        .iter()
        .filter(|c| !planted.iter().any(|&s| contains(c, s)))
        .count();
    json!({
        "threshold": threshold,
        "n_planted": planted.len(),
        "recovered": recovered,
        "clumps_without_planted_snp": spurious,
    })
}

pub fn assoc(cfg: &RunConfig, data_dir: &Path, model_dir: &Path, out: &Path) -> Result<StageSummary> {
    let (data, model, _) = upstream(data_dir, model_dir)?;
    let d = &data.dataset;
    let all: Vec<usize> = (0..d.len()).collect();
    let h = model.params.image_representations(&d.images_tensor(&all))?;
    let emb = FeatureMatrix::new(
        d.ids.clone(),
        (0..h.cols()).map(|j| format!("emb{j}")).collect(),
        h.into_data(),
    )?;
    let covariates = match (&data.covariates, cfg.assoc.covariates.is_empty()) {
        (Some(c), _) => c.clone(),
        (None, true) => FeatureMatrix::new(d.ids.clone(), Vec::new(), Vec::new())?,
        (None, false) => {
            return Err(CliError::Data(format!(
                "missing input: expected {} for covariates {:?}",
                data_dir.join(COVARIATES).display(),
                cfg.assoc.covariates
            )))
        }
    };
    let r = run_association(&emb, &data.genotypes, &covariates, &cfg.assoc)?;

    let mut w = StageWriter::new(out, cfg)?;
    write_features(&w.path("embeddings.tsv"), &emb, &w.prov)?;
    w.track("embeddings.tsv");
    w.write("summary_stats.tsv", &summary_tsv(&r, &w.prov))?;
    w.write("clumps.tsv", &clump_report_tsv(&r, &w.prov))?;
    w.write("manhattan.svg", &manhattan_svg(&r.snps, &r.p_agg, cfg.assoc.p_genomewide))?;
    let bonferroni = 0.05 / r.n_snps() as f64;
    let clumps: Vec<Value> = r
        .significant_clumps(cfg.assoc.p_genomewide)
        .iter()
        .map(|c| json!({"index_snp": r.snps[c.index].id, "p_agg": r.p_agg[c.index], "size": c.members.len()}))
        .collect();
    let mut metrics = json!({
        "n_individuals": r.n_individuals,
        "n_snps": r.n_snps(),
        "n_components": cfg.assoc.n_components,
        "explained_variance": r.explained_variance,
        "n_clumps": r.clumps.len(),
        "genomewide_clumps": clumps,
        "n_clumps_at_bonferroni": r.significant_clumps(bonferroni).len(),
        "bonferroni_threshold": bonferroni,
    });
    if let Some(truth) = &data.truth {
        metrics["planted_recovery"] = planted_recovery(&r, truth, bonferroni);
    }
    w.finish("assoc", model_inputs(&data, &model), metrics)
}

/// Label columns and their values for each row in `rows` (`None` = unlabeled).
fn labels(cfg: &RunConfig, data: &LoadedData) -> Result<Vec<(String, Vec<Option<f64>>)>> {
    let d = &data.dataset;
    if let Some(path) = &cfg.eval.labels {
        let path = PathBuf::from(path);
        require(&path)?;
        let t = read_features(&path)?;
        let cols: Vec<usize> = match &cfg.eval.label_column {
            Some(c) => vec![t.col_ids.iter().position(|x| x == c).ok_or_else(|| {
                CliError::Data(format!("{}: no column {c:?}", path.display()))
            })?],
            None => (0..t.n_cols()).collect(),
        };
        let index: BTreeMap<&str, usize> = t.row_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        return Ok(cols
            .into_iter()
            .map(|c| {
                let v = d.ids.iter().map(|id| index.get(id.as_str()).map(|&r| t.get(r, c))).collect();
                (t.col_ids[c].clone(), v)
            })
            .collect());
    }
    let Some(truth) = &data.truth else {
        return Err(CliError::Data(
            "no eval.labels table given and the data directory has no truth.json".into(),
        ));
    };
    if cfg.eval.task == LinearTask::Classification {
        return Err(CliError::Config("latent traits are continuous; classification needs eval.labels".into()));
    }
    let index: BTreeMap<&str, usize> = truth.individual_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let all = (0..truth.n_latent)
        .map(|k| {
            let v = d.ids.iter().map(|id| index.get(id.as_str()).map(|&i| truth.latent(i, k))).collect();
            (format!("latent{k}"), v)
        })
        .filter(|(name, _)| cfg.eval.label_column.as_ref().is_none_or(|c| c == name))
        .collect::<Vec<_>>();
    if all.is_empty() {
        return Err(CliError::Data(format!("no latent trait named {:?}", cfg.eval.label_column)));
    }
    Ok(all)
}

fn eval_one(
    params: &ModelParams,
    d: &Dataset,
    y: &[Option<f64>],
    train: &[usize],
    test: &[usize],
    task: LinearTask,
) -> Result<LinearEvalReport> {
    let keep = |rows: &[usize]| rows.iter().copied().filter(|&i| y[i].is_some()).collect::<Vec<_>>();
    let (tr, te) = (keep(train), keep(test));
    let vals = |rows: &[usize]| rows.iter().map(|&i| y[i].unwrap()).collect::<Vec<f64>>();
    Ok(linear_eval(params, &d.images_tensor(&tr), &vals(&tr), &d.images_tensor(&te), &vals(&te), task)?)
}

pub fn eval(cfg: &RunConfig, data_dir: &Path, model_dir: &Path, out: &Path) -> Result<StageSummary> {
    let (data, model, trained) = upstream(data_dir, model_dir)?;
    let d = &data.dataset;
    let train = rows_of(d, &model.train_ids)?;
    let test = rows_of(d, &model.holdout_ids)?;
    if test.is_empty() {
        return Err(CliError::Data("the model has no held-out individuals to evaluate on".into()));
    }
    // the pretraining run started from this initialization
    let random = ModelParams::init(&model.params.config, trained.seed)?;
    let task = cfg.eval.task;
    let mut rows = Vec::new();
    let mut results = BTreeMap::new();
    for (name, y) in labels(cfg, &data)? {
        let trained = eval_one(&model.params, d, &y, &train, &test, task)?;
        let base = eval_one(&random, d, &y, &train, &test, task)?;
        for (which, r) in [("pretrained", &trained), ("random_init", &base)] {
            for (metric, v) in [("mse", r.mse), ("r2", r.r2), ("auc", r.auc)] {
                if let Some(v) = v {
                    rows.push(format!("{name}\t{which}\t{}\t{}\t{metric}\t{}", r.n_train, r.n_test, fmt_f64(v)));
                }
            }
        }
        results.insert(name, json!({"pretrained": trained, "random_init": base}));
    }
    let mut w = StageWriter::new(out, cfg)?;
    let mut tsv = w.prov.line();
    tsv.push_str("label\tencoder\tn_train\tn_test\tmetric\tvalue\n");
    for r in rows {
        tsv.push_str(&r);
        tsv.push('\n');
    }
    w.write("linear_eval.tsv", &tsv)?;
    let metrics = json!({
        "task": task,
        "linear_eval": results,
        "holdout_retrieval": retrieval(&model.params, d, &test, cfg.eval.retrieval_batch)?,
    });
    w.finish("eval", model_inputs(&data, &model), metrics)
}

pub fn report(cfg: &RunConfig, stage_dirs: &[PathBuf], out: &Path) -> Result<StageSummary> {
    if stage_dirs.is_empty() {
        return Err(CliError::Config("report needs at least one stage directory".into()));
    }
    let mut summaries = Vec::new();
    let mut seen = HashSet::new();
    for dir in stage_dirs {
        let s = artifacts::read_summary(dir)?;
        let s = verify_stage(dir, &s.stage)?;
        if !seen.insert(s.fingerprint.clone()) {
            continue;
        }
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        summaries.push((name, s));
    }
    let mut md = String::from("# contig run report\n\n");
    for (dir, s) in &summaries {
        let _ = writeln!(md, "## {} ({dir})\n", s.stage);
        let _ = writeln!(md, "- fingerprint: `{}`", s.fingerprint);
        let _ = writeln!(md, "- seed: {}, config: `{}`", s.seed, s.config_hash);
        for (k, v) in &s.inputs {
            let _ = writeln!(md, "- input {k}: `{v}`");
        }
        let _ = writeln!(md, "\n```json\n{}\n```\n", serde_json::to_string_pretty(&s.metrics).expect("json"));
    }
    let mut w = StageWriter::new(out, cfg)?;
    w.write("report.md", &md)?;
    let all: Vec<&StageSummary> = summaries.iter().map(|(_, s)| s).collect();
    w.write("report.json", &to_json(&all))?;
    let inputs = summaries
        .iter()
        .enumerate()
        .map(|(i, (_, s))| (format!("{i}:{}", s.stage), s.fingerprint.clone()))
        .collect();
    w.finish("report", inputs, json!({"stages": all.iter().map(|s| s.stage.clone()).collect::<Vec<_>>()}))
}
