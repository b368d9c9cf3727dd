//! On-disk layout of stage outputs, fingerprints and stale-input checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use contig_core::{build_modalities, Dataset, ModelParams};
use contig_genetics::io::{
    read_burden, read_features, read_genotypes, read_pgs_dir, short_hash, write_text, Provenance,
};
use contig_genetics::{BurdenAnnotation, FeatureMatrix, GenotypeMatrix, GroundTruth, ModalityMasks};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const SUMMARY: &str = "summary.json";
pub const CONFIG_SNAPSHOT: &str = "config.resolved.toml";

pub const IMAGES: &str = "images.tsv";
pub const GENOTYPES: &str = "genotypes.tsv";
pub const POSITIONS: &str = "positions.tsv";
pub const PGS_DIR: &str = "pgs_weights";
pub const BURDEN: &str = "burden_annotation.tsv";
pub const COVARIATES: &str = "covariates.tsv";
pub const MASKS: &str = "masks.tsv";
pub const TRUTH: &str = "truth.json";

pub const CHECKPOINT: &str = "checkpoint.json";
pub const SPLIT: &str = "split.tsv";

fn io_data(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing input: expected {}", path.display())))
    }
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_data(path, e))?;
    Ok(short_hash(&bytes))
}

/// Relative paths of the files that make up a dataset directory.
fn data_files(dir: &Path) -> Result<Vec<String>> {
    let mut files: Vec<String> = [IMAGES, GENOTYPES, POSITIONS, BURDEN, COVARIATES, MASKS, TRUTH]
        .iter()
        .filter(|f| dir.join(f).exists())
        .map(|f| f.to_string())
        .collect();
    let pgs = dir.join(PGS_DIR);
    if pgs.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&pgs)
            .map_err(|e| io_data(&pgs, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".tsv"))
            .map(|n| format!("{PGS_DIR}/{n}"))
            .collect();
        names.sort();
        files.extend(names);
    }
    Ok(files)
}

/// Per-file content hashes, keyed by relative path.
pub fn hash_files(dir: &Path, files: &[String]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| Ok((f.clone(), file_hash(&dir.join(f))?)))
        .collect()
}

pub fn combine(parts: &[&str]) -> String {
    short_hash(parts.join("\n").as_bytes())
}

fn outputs_fingerprint(hashes: &BTreeMap<String, String>) -> String {
    let lines: Vec<String> = hashes.iter().map(|(k, v)| format!("{k}\t{v}")).collect();
    short_hash(lines.join("\n").as_bytes())
}

pub fn data_fingerprint(dir: &Path) -> Result<String> {
    Ok(outputs_fingerprint(&hash_files(dir, &data_files(dir)?)?))
}

/// What every stage writes to `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Hash of the stage's inputs and configuration.
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub metrics: Value,
}

pub struct StageWriter<'a> {
    pub out: PathBuf,
    pub cfg: &'a RunConfig,
    pub prov: Provenance,
    files: Vec<String>,
}

impl<'a> StageWriter<'a> {
    pub fn new(out: &Path, cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", out.display())))?;
        let writer = Self {
            out: out.to_path_buf(),
            cfg,
            prov: Provenance::new(cfg.seed, cfg.hash()),
            files: Vec::new(),
        };
        writer.write_raw(CONFIG_SNAPSHOT, &cfg.to_toml())?;
        Ok(writer)
    }

    fn write_raw(&self, name: &str, text: &str) -> Result<()> {
        Ok(write_text(&self.out.join(name), text)?)
    }

    /// Writes a stage output and records it for fingerprinting.
    pub fn write(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_raw(name, text)?;
        self.track(name);
        Ok(())
    }

    /// Records a file written by other means.
    pub fn track(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn finish(self, stage: &str, inputs: BTreeMap<String, String>, metrics: Value) -> Result<StageSummary> {
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        let outputs = hash_files(&self.out, &files)?;
        let mut parts = vec![stage.to_string(), self.cfg.hash()];
        parts.extend(inputs.iter().map(|(k, v)| format!("{k}={v}")));
        let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
        let summary = StageSummary {
            stage: stage.to_string(),
            tool_version: contig_genetics::io::TOOL_VERSION.to_string(),
            seed: self.cfg.seed,
            config_hash: self.cfg.hash(),
            fingerprint: combine(&refs),
            inputs,
            outputs,
            metrics,
        };
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        self.write_raw(SUMMARY, &(json + "\n"))?;
        Ok(summary)
    }
}

pub fn read_summary(dir: &Path) -> Result<StageSummary> {
    let path = dir.join(SUMMARY);
    require(&path)?;
    let text = fs::read_to_string(&path).map_err(|e| io_data(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads a stage summary and re-hashes its outputs.
pub fn verify_stage(dir: &Path, stage: &str) -> Result<StageSummary> {
    let s = read_summary(dir)?;
    if s.stage != stage {
        return Err(CliError::Data(format!(
            "{} holds a {} stage, expected {stage}",
            dir.display(),
            s.stage
        )));
    }
    for (file, want) in &s.outputs {
        let path = dir.join(file);
        require(&path)?;
        let got = file_hash(&path)?;
        if &got != want {
            return Err(CliError::Stale(format!(
                "{} changed since the {stage} stage wrote it (hash {got}, recorded {want})",
                path.display()
            )));
        }
    }
    Ok(s)
}

pub struct LoadedData {
    pub dataset: Dataset,
    pub genotypes: GenotypeMatrix,
    pub covariates: Option<FeatureMatrix>,
    pub truth: Option<GroundTruth>,
    pub fingerprint: String,
}

fn read_masks(dir: &Path, g: &GenotypeMatrix) -> Result<ModalityMasks> {
    let n = g.n_individuals();
    let path = dir.join(MASKS);
    if !path.exists() {
        return Ok(ModalityMasks {
            raw: vec![true; n],
            pgs: vec![true; n],
            burden: vec![true; n],
        });
    }
    let table = read_features(&path)?;
    let index: BTreeMap<&str, usize> = table.row_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let column = |name: &str| -> Result<Vec<bool>> {
        let c = table.col_ids.iter().position(|c| c == name);
        g.individuals()
            .iter()
            .map(|id| match (c, index.get(id.as_str())) {
                (None, _) => Ok(true),
                (Some(c), Some(&r)) => Ok(table.get(r, c) != 0.0),
                (Some(_), None) => Err(CliError::Data(format!("{}: no row for individual {id}", path.display()))),
            })
            .collect()
    };
    Ok(ModalityMasks {
        raw: column("raw")?,
        pgs: column("pgs")?,
        burden: column("burden")?,
    })
}

/// Builds the standardized dataset from a data directory.
pub fn load_data(dir: &Path, cfg: &RunConfig) -> Result<LoadedData> {
    for f in [IMAGES, GENOTYPES, POSITIONS] {
        require(&dir.join(f))?;
    }
    let fingerprint = data_fingerprint(dir)?;
    let images = read_features(&dir.join(IMAGES))?;
    let genotypes = read_genotypes(&dir.join(GENOTYPES), &dir.join(POSITIONS))?;
    let wants = |m: &str| cfg.features.modalities.iter().any(|x| x == m);
    let pgs = if wants("pgs") {
        require(&dir.join(PGS_DIR))?;
        read_pgs_dir(&dir.join(PGS_DIR))?
    } else {
        Vec::new()
    };
    let burden = if wants("burden") {
        require(&dir.join(BURDEN))?;
        read_burden(&dir.join(BURDEN))?
    } else {
        BurdenAnnotation::default()
    };
    let masks = read_masks(dir, &genotypes)?;
    let tables = build_modalities(&genotypes, &pgs, &burden, &masks, &cfg.features)?;
    if let Some((name, _)) = tables.iter().find(|(_, t)| t.n_cols() == 0) {
        return Err(CliError::Data(format!("modality {name} has no features in {}", dir.display())));
    }
    let mut dataset = Dataset::from_tables(&images, &tables)?;
    dataset.standardize();
    let covariates = match dir.join(COVARIATES) {
        p if p.exists() => Some(read_features(&p)?),
        _ => None,
    };
    let truth = match dir.join(TRUTH) {
        p if p.exists() => {
            let text = fs::read_to_string(&p).map_err(|e| io_data(&p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?)
        }
        _ => None,
    };
    Ok(LoadedData {
        dataset,
        genotypes,
        covariates,
        truth,
        fingerprint,
    })
}

pub struct LoadedModel {
    pub params: ModelParams,
    pub train_ids: Vec<String>,
    pub holdout_ids: Vec<String>,
    pub fingerprint: String,
    pub summary: StageSummary,
}

/// Loads a pretrain output directory and checks it was built from `data`.
pub fn load_model(dir: &Path, data: &LoadedData) -> Result<LoadedModel> {
    let summary = verify_stage(dir, "pretrain")?;
    match summary.inputs.get("data") {
        Some(fp) if fp == &data.fingerprint => {}
        Some(fp) => {
            return Err(CliError::Stale(format!(
                "model in {} was trained on data {fp}, but the data directory now has fingerprint {}",
                dir.display(),
                data.fingerprint
            )))
        }
        None => return Err(CliError::Data(format!("{} does not record its training data", dir.display()))),
    }
    let params = ModelParams::load(&dir.join(CHECKPOINT))?;
    let split_path = dir.join(SPLIT);
    require(&split_path)?;
    let text = fs::read_to_string(&split_path).map_err(|e| io_data(&split_path, e))?;
    let mut train_ids = Vec::new();
    let mut holdout_ids = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut f = line.split('\t');
        let (Some(id), Some(part)) = (f.next(), f.next()) else {
            return Err(CliError::Data(format!("{}: malformed line {line:?}", split_path.display())));
        };
        match part {
            "train" => train_ids.push(id.to_string()),
            "holdout" => holdout_ids.push(id.to_string()),
            other => return Err(CliError::Data(format!("{}: unknown split {other:?}", split_path.display()))),
        }
    }
    Ok(LoadedModel {
        params,
        train_ids,
        holdout_ids,
        fingerprint: summary.fingerprint.clone(),
        summary,
    })
}

/// Row indices of `ids` in the dataset.
pub fn rows_of(d: &Dataset, ids: &[String]) -> Result<Vec<usize>> {
    let index = d.index_of();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| CliError::Stale(format!("individual {id} from the model split is not in the data")))
        })
        .collect()
}
