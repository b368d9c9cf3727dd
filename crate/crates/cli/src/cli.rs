//! Argument parsing. Every per-stage flag overrides the config field of the
//! same name.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::artifacts::StageSummary;
use crate::commands;
use crate::config::{Override, RunConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "contig", version, about = "Contrastive image-genetics pretraining pipeline")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for this stage.
    #[arg(long, global = true, default_value = "contig-out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted genetic effects.
    Synth(SynthArgs),
    /// Contrastive pretraining of image and genetic encoders.
    Pretrain(PretrainArgs),
    /// Integrated-gradients attribution of genetic features.
    Explain(ExplainArgs),
    /// Association scan of image embeddings against genotypes.
    Assoc(AssocArgs),
    /// Linear probes and retrieval on held-out individuals.
    Eval(EvalArgs),
    /// Collect stage summaries into one report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p_img: Option<usize>,
    #[arg(long)]
    pub n_snps: Option<usize>,
    #[arg(long)]
    pub n_rare_snps: Option<usize>,
    #[arg(long)]
    pub n_genes: Option<usize>,
    #[arg(long)]
    pub n_causal: Option<usize>,
    /// Comma-separated, cycled over the causal SNPs.
    #[arg(long, value_delimiter = ',')]
    pub effect_sizes: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Comma-separated subset of raw, pgs, burden.
    #[arg(long, value_delimiter = ',')]
    pub modalities: Option<Vec<String>>,
    #[arg(long)]
    pub raw_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Data directory written by `synth` (or laid out the same way).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub hidden_variant: Option<String>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub repr_dim: Option<usize>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// standard or exclude_positive.
    #[arg(long)]
    pub denominator: Option<String>,
    /// inner or outer.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory of `pretrain`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub inputs: ModelArgs,
    #[arg(long)]
    pub reference_batch_size: Option<usize>,
    #[arg(long)]
    pub ig_steps: Option<usize>,
    /// zeros or reference-mean.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub n_individuals: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AssocArgs {
    #[command(flatten)]
    pub inputs: ModelArgs,
    #[arg(long)]
    pub n_components: Option<usize>,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub p_genomewide: Option<f64>,
    #[arg(long)]
    pub bonferroni_factor: Option<f64>,
    #[arg(long)]
    pub clump_p1: Option<f64>,
    #[arg(long)]
    pub clump_p2: Option<f64>,
    #[arg(long)]
    pub clump_r2: Option<f64>,
    #[arg(long)]
    pub clump_kb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: ModelArgs,
    /// regression or classification.
    #[arg(long)]
    pub task: Option<String>,
    /// Label table with an `#iid` header.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub retrieval_batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Stage output directories to summarize.
    #[arg(required = true)]
    pub stages: Vec<PathBuf>,
}

struct Overrides(Vec<Override>);

impl Overrides {
    fn int(&mut self, path: &'static str, v: Option<usize>) -> &mut Self {
        if let Some(v) = v {
            self.0.push(Override::new(path, v as i64));
        }
        self
    }

    fn float(&mut self, path: &'static str, v: Option<f64>) -> &mut Self {
        if let Some(v) = v {
            self.0.push(Override::new(path, v));
        }
        self
    }

    fn text(&mut self, path: &'static str, v: Option<&String>) -> &mut Self {
        if let Some(v) = v {
            self.0.push(Override::new(path, v.as_str()));
        }
        self
    }

    fn list<T: Clone + Into<toml::Value>>(&mut self, path: &'static str, v: Option<&Vec<T>>) -> &mut Self {
        if let Some(v) = v {
            self.0.push(Override::new(path, v.clone()));
        }
        self
    }
}

impl Cli {
    pub fn overrides(&self) -> Vec<Override> {
        let mut o = Overrides(Vec::new());
        if let Some(seed) = self.seed {
            o.0.push(Override::new("seed", seed as i64));
        }
        match &self.command {
            Command::Synth(a) => {
                o.int("synth.n", a.n)
                    .int("synth.p_img", a.p_img)
                    .int("synth.n_snps", a.n_snps)
                    .int("synth.n_rare_snps", a.n_rare_snps)
                    .int("synth.n_genes", a.n_genes)
                    .int("synth.n_causal", a.n_causal)
                    .list("synth.effect_sizes", a.effect_sizes.as_ref());
            }
            Command::Pretrain(a) => {
                o.list("features.modalities", a.features.modalities.as_ref())
                    .int("features.raw_stride", a.features.raw_stride)
                    .text("encoder.hidden_variant", a.hidden_variant.as_ref())
                    .int("encoder.hidden_width", a.hidden_width)
                    .int("encoder.repr_dim", a.repr_dim)
                    .int("encoder.proj_dim", a.proj_dim)
                    .int("train.batch_size", a.batch_size)
                    .float("train.lr", a.lr)
                    .float("train.weight_decay", a.weight_decay)
                    .int("train.epochs", a.epochs)
                    .float("train.tau", a.tau)
                    .float("train.lambda", a.lambda)
                    .text("train.denominator", a.denominator.as_ref())
                    .text("train.scheme", a.scheme.as_ref())
                    .float("train.holdout", a.holdout);
            }
            Command::Explain(a) => {
                o.int("explain.reference_batch_size", a.reference_batch_size)
                    .int("explain.ig_steps", a.ig_steps)
                    .text("explain.baseline", a.baseline.as_ref())
                    .int("explain.n_individuals", a.n_individuals);
            }
            Command::Assoc(a) => {
                o.int("assoc.n_components", a.n_components)
                    .list("assoc.covariates", a.covariates.as_ref())
                    .float("assoc.p_genomewide", a.p_genomewide)
                    .float("assoc.bonferroni_factor", a.bonferroni_factor)
                    .float("assoc.clump_p1", a.clump_p1)
                    .float("assoc.clump_p2", a.clump_p2)
                    .float("assoc.clump_r2", a.clump_r2)
                    .float("assoc.clump_kb", a.clump_kb);
            }
            Command::Eval(a) => {
                let labels = a.labels.as_ref().map(|p| p.display().to_string());
                o.text("eval.task", a.task.as_ref())
                    .text("eval.labels", labels.as_ref())
                    .text("eval.label_column", a.label_column.as_ref())
                    .int("eval.retrieval_batch", a.retrieval_batch);
            }
            Command::Report(_) => {}
        }
        o.0
    }

    pub fn run(&self) -> Result<StageSummary> {
        let cfg = RunConfig::resolve(self.config.as_deref(), &self.overrides())?;
        let out = &self.out;
        match &self.command {
            Command::Synth(_) => commands::synth(&cfg, out),
            Command::Pretrain(a) => commands::pretrain(&cfg, &a.data, out),
            Command::Explain(a) => commands::explain(&cfg, &a.inputs.data, &a.inputs.model, out),
            Command::Assoc(a) => commands::assoc(&cfg, &a.inputs.data, &a.inputs.model, out),
            Command::Eval(a) => commands::eval(&cfg, &a.inputs.data, &a.inputs.model, out),
            Command::Report(a) => commands::report(&cfg, &a.stages, out),
        }
    }
}
