//! Planted-signal synthetic cohort.
//!
//! Genotypes are independent per-SNP `Binomial(2, f)` draws. A handful of
//! causal SNPs (plus an optional polygenic background) define latent traits,
//! and the latent traits are rendered into image features through a fixed
//! random nonlinear map together with non-genetic nuisance factors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::burden::{BurdenAnnotation, VariantAnnotation};
use crate::error::{GeneticsError, Result};
use crate::features::FeatureMatrix;
use crate::genotype::{GenotypeMatrix, SnpInfo, MISSING};
use crate::pgs::{PgsEntry, PgsWeightFile};

/// Per-modality probability that an individual lacks the modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Missingness {
    pub raw: f64,
    pub pgs: f64,
    pub burden: f64,
}

impl Default for Missingness {
    fn default() -> Self {
        Self {
            raw: 0.0,
            pgs: 0.1,
            burden: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub p_img: usize,
    /// Common SNPs, allele frequency in [0.05, 0.5].
    pub n_snps: usize,
    /// Rare SNPs used for burden scores, appended to the genotype matrix.
    pub n_rare_snps: usize,
    pub n_genes: usize,
    pub n_chrom: u8,
    pub snp_spacing_bp: u64,
    pub n_causal: usize,
    /// Per-causal-SNP effect on its latent trait (per standard deviation of
    /// the genotype). A single value is broadcast.
    pub effect_sizes: Vec<f64>,
    pub n_latent: usize,
    pub polygenic_snps_per_latent: usize,
    pub polygenic_variance: f64,
    pub latent_noise_sd: f64,
    pub n_nuisance: usize,
    pub image_noise_sd: f64,
    pub covariate_image_effect: f64,
    pub n_extra_pgs: usize,
    pub pgs_weight_noise: f64,
    pub call_missing_rate: f64,
    pub missingness: Missingness,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            p_img: 32,
            n_snps: 2000,
            n_rare_snps: 200,
            n_genes: 40,
            n_chrom: 22,
            snp_spacing_bp: 50_000,
            n_causal: 3,
            effect_sizes: vec![0.8],
            n_latent: 3,
            polygenic_snps_per_latent: 50,
            polygenic_variance: 0.3,
            latent_noise_sd: 0.3,
            n_nuisance: 2,
            image_noise_sd: 0.05,
            covariate_image_effect: 0.3,
            n_extra_pgs: 7,
            pgs_weight_noise: 0.02,
            call_missing_rate: 0.005,
            missingness: Missingness::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeneticsError::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.p_img == 0 || self.n_snps == 0 || self.n_latent == 0 || self.n_chrom == 0 || self.n_chrom > 22 {
            return bad("p_img, n_snps, n_latent must be positive and n_chrom in 1..=22".into());
        }
        if self.n_causal > self.n_snps {
            return bad(format!("n_causal {} exceeds n_snps {}", self.n_causal, self.n_snps));
        }
        if self.n_causal + self.n_latent * self.polygenic_snps_per_latent > self.n_snps {
            return bad("causal plus polygenic SNPs exceed n_snps".into());
        }
        if self.effect_sizes.is_empty() || (self.effect_sizes.len() != 1 && self.effect_sizes.len() != self.n_causal) {
            return bad("effect_sizes needs one value or one per causal SNP".into());
        }
        if self.n_rare_snps > 0 && self.n_genes == 0 {
            return bad("rare SNPs need at least one gene".into());
        }
        let m = &self.missingness;
        for (name, r) in [("raw", m.raw), ("pgs", m.pgs), ("burden", m.burden), ("call", self.call_missing_rate)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} missing rate {r} outside [0, 1)"));
            }
        }
        Ok(())
    }

    fn effect(&self, c: usize) -> f64 {
        if self.effect_sizes.len() == 1 {
            self.effect_sizes[0]
        } else {
            self.effect_sizes[c]
        }
    }
}

/// Random map from latent factors to image features:
/// `tanh(u·A) + 0.5·(u·B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRenderer {
    pub inputs: usize,
    pub p_img: usize,
    pub nonlinear: Vec<f64>,
    pub linear: Vec<f64>,
}

impl ImageRenderer {
    pub fn random(inputs: usize, p_img: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (inputs as f64).sqrt();
        let mut draw = || -> Vec<f64> { (0..inputs * p_img).map(|_| gauss(rng) * scale).collect() };
        let nonlinear = draw();
        let linear = draw();
        Self {
            inputs,
            p_img,
            nonlinear,
            linear,
        }
    }

    pub fn render(&self, u: &[f64]) -> Vec<f64> {
        (0..self.p_img)
            .map(|j| {
                let (mut a, mut b) = (0.0, 0.0);
                for (q, uq) in u.iter().enumerate() {
                    a += uq * self.nonlinear[q * self.p_img + j];
                    b += uq * self.linear[q * self.p_img + j];
                }
                a.tanh() + 0.5 * b
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalSnp {
    pub snp_id: String,
    pub latent: usize,
    pub effect: f64,
    pub allele_frequency: f64,
}

/// What the generator planted, for checking recovery downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub causal: Vec<CausalSnp>,
    pub polygenic_snps: Vec<Vec<String>>,
    /// Signal-carrying PGS ids, one per latent trait.
    pub latent_scores: Vec<String>,
    pub individual_ids: Vec<String>,
    /// Row-major `n × n_latent`.
    pub latent_traits: Vec<f64>,
    pub n_latent: usize,
    pub renderer: ImageRenderer,
}

impl GroundTruth {
    pub fn latent(&self, individual: usize, k: usize) -> f64 {
        self.latent_traits[individual * self.n_latent + k]
    }

    pub fn latent_column(&self, k: usize) -> Vec<f64> {
        (0..self.individual_ids.len()).map(|i| self.latent(i, k)).collect()
    }
}

/// Availability of each genetic modality per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMasks {
    pub raw: Vec<bool>,
    pub pgs: Vec<bool>,
    pub burden: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub images: FeatureMatrix,
    pub genotypes: GenotypeMatrix,
    pub pgs: Vec<PgsWeightFile>,
    pub burden: BurdenAnnotation,
    pub covariates: FeatureMatrix,
    pub masks: ModalityMasks,
    pub truth: GroundTruth,
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn binomial2(rng: &mut impl Rng, f: f64) -> u8 {
    (rng.random::<f64>() < f) as u8 + (rng.random::<f64>() < f) as u8
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n;
    let total = cfg.n_snps + cfg.n_rare_snps;
    let ids: Vec<String> = (0..n).map(|i| format!("ind{:05}", i + 1)).collect();

    // SNP layout: evenly split over chromosomes, rare SNPs at random slots.
    let rare_slots: Vec<bool> = {
        let mut v = vec![false; total];
        for s in sample(&mut rng, total, cfg.n_rare_snps) {
            v[s] = true;
        }
        v
    };
    let per_chrom = total.div_ceil(cfg.n_chrom as usize);
    let mut snps = Vec::with_capacity(total);
    let mut freqs = Vec::with_capacity(total);
    let mut common_idx = Vec::with_capacity(cfg.n_snps);
    let mut rare_idx = Vec::with_capacity(cfg.n_rare_snps);
    for s in 0..total {
        let chrom = (s / per_chrom) as u8 + 1;
        let pos = (s % per_chrom) as u64 * cfg.snp_spacing_bp + 10_000;
        snps.push(SnpInfo {
            id: format!("rs{}", 100_000 + s),
            chrom,
            pos,
        });
        if rare_slots[s] {
            freqs.push(rng.random_range(0.0005..0.02));
            rare_idx.push(s);
        } else {
            freqs.push(rng.random_range(0.05..0.5));
            common_idx.push(s);
        }
    }

    let mut values = Vec::with_capacity(n * total);
    let mut dosages = vec![0u8; n * total];
    for s in 0..total {
        for i in 0..n {
            let d = binomial2(&mut rng, freqs[s]);
            dosages[s * n + i] = d;
            let missing = cfg.call_missing_rate > 0.0 && rng.random::<f64>() < cfg.call_missing_rate;
            values.push(if missing { MISSING } else { d });
        }
    }
    let genotypes = GenotypeMatrix::from_raw(ids.clone(), snps.clone(), values)?;

    // causal + polygenic SNPs, drawn from the common pool
    let chosen: Vec<usize> = sample(
        &mut rng,
        common_idx.len(),
        cfg.n_causal + cfg.n_latent * cfg.polygenic_snps_per_latent,
    )
    .into_iter()
    .map(|k| common_idx[k])
    .collect();
    let (causal_idx, poly_idx) = chosen.split_at(cfg.n_causal);
    let standardized = |s: usize, i: usize| {
        let f = freqs[s];
        (dosages[s * n + i] as f64 - 2.0 * f) / (2.0 * f * (1.0 - f)).sqrt()
    };

    let mut latent = vec![0.0; n * cfg.n_latent];
    let mut causal = Vec::with_capacity(cfg.n_causal);
    let mut score_entries: Vec<Vec<PgsEntry>> = vec![Vec::new(); cfg.n_latent];
    let sd = |s: usize| (2.0 * freqs[s] * (1.0 - freqs[s])).sqrt();
    for (c, &s) in causal_idx.iter().enumerate() {
        let l = c % cfg.n_latent;
        let beta = cfg.effect(c);
        for i in 0..n {
            latent[i * cfg.n_latent + l] += beta * standardized(s, i);
        }
        causal.push(CausalSnp {
            snp_id: snps[s].id.clone(),
            latent: l,
            effect: beta,
            allele_frequency: freqs[s],
        });
        score_entries[l].push(PgsEntry {
            snp_id: snps[s].id.clone(),
            effect_allele: "A".into(),
            weight: beta / sd(s) + cfg.pgs_weight_noise * gauss(&mut rng),
        });
    }
    let mut polygenic_snps = vec![Vec::new(); cfg.n_latent];
    if cfg.polygenic_snps_per_latent > 0 {
        let beta = (cfg.polygenic_variance / cfg.polygenic_snps_per_latent as f64).sqrt();
        for (k, &s) in poly_idx.iter().enumerate() {
            let l = k / cfg.polygenic_snps_per_latent;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for i in 0..n {
                latent[i * cfg.n_latent + l] += sign * beta * standardized(s, i);
            }
            polygenic_snps[l].push(snps[s].id.clone());
            score_entries[l].push(PgsEntry {
                snp_id: snps[s].id.clone(),
                effect_allele: "A".into(),
                weight: sign * beta / sd(s) + cfg.pgs_weight_noise * gauss(&mut rng),
            });
        }
    }
    for v in latent.iter_mut() {
        *v += cfg.latent_noise_sd * gauss(&mut rng);
    }

    let mut pgs = Vec::with_capacity(cfg.n_latent + cfg.n_extra_pgs);
    let mut latent_scores = Vec::with_capacity(cfg.n_latent);
    for (l, entries) in score_entries.into_iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let id = format!("PGS{:06}", l + 1);
        latent_scores.push(id.clone());
        pgs.push(PgsWeightFile::new(id, entries)?);
    }
    for e in 0..cfg.n_extra_pgs {
        let k = 50.min(common_idx.len());
        let entries = sample(&mut rng, common_idx.len(), k)
            .into_iter()
            .map(|j| PgsEntry {
                snp_id: snps[common_idx[j]].id.clone(),
                effect_allele: "A".into(),
                weight: 0.1 * gauss(&mut rng),
            })
            .collect();
        pgs.push(PgsWeightFile::new(format!("PGS{:06}", 100 + e + 1), entries)?);
    }

    let mut burden = BurdenAnnotation::default();
    for &s in &rare_idx {
        let gene = format!("GENE{:04}", rng.random_range(0..cfg.n_genes) + 1);
        let f = genotypes.allele_frequency(s);
        burden.insert(
            snps[s].id.clone(),
            VariantAnnotation {
                gene_id: gene,
                is_damaging: rng.random::<bool>(),
                maf: f.min(1.0 - f),
            },
        )?;
    }

    // covariates: sex (0/1) and age
    let sex: Vec<f64> = (0..n).map(|_| rng.random::<bool>() as u8 as f64).collect();
    let age: Vec<f64> = (0..n).map(|_| 55.0 + 8.0 * gauss(&mut rng)).collect();
    let covariates = FeatureMatrix::from_columns(ids.clone(), vec!["sex".into(), "age".into()], &[sex.clone(), age.clone()])?;

    let q = cfg.n_latent + cfg.n_nuisance + 2;
    let renderer = ImageRenderer::random(q, cfg.p_img, &mut rng);
    let mut img = Vec::with_capacity(n * cfg.p_img);
    for i in 0..n {
        let mut u = Vec::with_capacity(q);
        u.extend_from_slice(&latent[i * cfg.n_latent..(i + 1) * cfg.n_latent]);
        u.extend((0..cfg.n_nuisance).map(|_| gauss(&mut rng)));
        u.push(cfg.covariate_image_effect * (2.0 * sex[i] - 1.0));
        u.push(cfg.covariate_image_effect * (age[i] - 55.0) / 8.0);
        for v in renderer.render(&u) {
            img.push(v + cfg.image_noise_sd * gauss(&mut rng));
        }
    }
    let images = FeatureMatrix::new(ids.clone(), (0..cfg.p_img).map(|j| format!("px{j}")).collect(), img)?;

    let mut mask = |rate: f64| -> Vec<bool> { (0..n).map(|_| rng.random::<f64>() >= rate).collect() };
    let masks = ModalityMasks {
        raw: mask(cfg.missingness.raw),
        pgs: mask(cfg.missingness.pgs),
        burden: mask(cfg.missingness.burden),
    };

    Ok(SynthData {
        images,
        genotypes,
        pgs,
        burden,
        covariates,
        masks,
        truth: GroundTruth {
            seed,
            causal,
            polygenic_snps,
            latent_scores,
            individual_ids: ids,
            latent_traits: latent,
            n_latent: cfg.n_latent,
            renderer,
        },
    })
}

/// Images driven by `n_informative` standard-normal features, paired with
/// those features plus `n_noise` independent standard-normal columns.
#[derive(Debug, Clone)]
pub struct AttributionValidationData {
    pub images: FeatureMatrix,
    /// Informative columns first, then noise columns.
    pub features: FeatureMatrix,
    pub informative: Vec<bool>,
}

pub fn attribution_validation_data(
    n: usize,
    n_informative: usize,
    n_noise: usize,
    p_img: usize,
    seed: u64,
) -> Result<AttributionValidationData> {
    if n == 0 || n_informative == 0 || p_img == 0 {
        return Err(GeneticsError::Config("n, n_informative and p_img must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let renderer = ImageRenderer::random(n_informative, p_img, &mut rng);
    let p = n_informative + n_noise;
    let ids: Vec<String> = (0..n).map(|i| format!("ind{:05}", i + 1)).collect();
    let mut feats = Vec::with_capacity(n * p);
    let mut img = Vec::with_capacity(n * p_img);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| gauss(&mut rng)).collect();
        for v in renderer.render(&row[..n_informative]) {
            img.push(v + 0.05 * gauss(&mut rng));
        }
        feats.extend(row);
    }
    let mut col_ids: Vec<String> = (0..n_informative).map(|j| format!("signal{j}")).collect();
    col_ids.extend((0..n_noise).map(|j| format!("noise{j}")));
    Ok(AttributionValidationData {
        images: FeatureMatrix::new(ids.clone(), (0..p_img).map(|j| format!("px{j}")).collect(), img)?,
        features: FeatureMatrix::new(ids, col_ids, feats)?,
        informative: (0..p).map(|j| j < n_informative).collect(),
    })
}
