//! Tab-separated file formats.
//!
//! Every writer emits a `## ` provenance line first; readers skip any line
//! starting with `##`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::burden::{BurdenAnnotation, VariantAnnotation};
use crate::error::{GeneticsError, Result};
use crate::features::FeatureMatrix;
use crate::genotype::{parse_chrom, GenotypeMatrix, SnpInfo};
use crate::pgs::{PgsEntry, PgsWeightFile};

pub const TOOL_NAME: &str = "contig";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "## {TOOL_NAME} {TOOL_VERSION} seed={} config={}\n",
            self.seed, self.config_hash
        )
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(digest)[..16].to_string()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GeneticsError + '_ {
    move |source| GeneticsError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Non-provenance, non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with("##") && !l.trim().is_empty())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GeneticsError {
    GeneticsError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Shortest round-trip representation of an `f64`.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:?}").unwrap();
    s
}

/// `#iid <col...>` header, one row per individual.
pub fn write_features(path: &Path, m: &FeatureMatrix, prov: &Provenance) -> Result<()> {
    let mut out = prov.line();
    out.push_str("#iid");
    for c in &m.col_ids {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for r in 0..m.n_rows() {
        out.push_str(&m.row_ids[r]);
        for v in m.row(r) {
            out.push('\t');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let text = read_text(path)?;
    let mut lines = data_lines(&text);
    let (ln, header) = lines.next().ok_or_else(|| parse_err(path, 0, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("#iid") {
        return Err(parse_err(path, ln, "header must start with #iid"));
    }
    let col_ids: Vec<String> = cols.map(str::to_string).collect();
    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for (ln, line) in lines {
        let mut f = line.split('\t');
        row_ids.push(f.next().unwrap_or_default().to_string());
        let before = data.len();
        for tok in f {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| parse_err(path, ln, format!("bad number {tok:?}")))?,
            );
        }
        if data.len() - before != col_ids.len() {
            return Err(parse_err(path, ln, format!("expected {} values", col_ids.len())));
        }
    }
    FeatureMatrix::new(row_ids, col_ids, data)
}

pub fn write_genotypes(path: &Path, g: &GenotypeMatrix, prov: &Provenance) -> Result<()> {
    let mut out = prov.line();
    out.push_str("#iid");
    for s in g.snps() {
        out.push('\t');
        out.push_str(&s.id);
    }
    out.push('\n');
    for i in 0..g.n_individuals() {
        out.push_str(&g.individuals()[i]);
        for s in 0..g.n_snps() {
            out.push('\t');
            match g.dosage(i, s) {
                Some(c) => out.push(char::from(b'0' + c)),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_positions(path: &Path, g: &GenotypeMatrix, prov: &Provenance) -> Result<()> {
    let mut out = prov.line();
    out.push_str("snp_id\tchrom\tpos\n");
    for s in g.snps() {
        writeln!(out, "{}\t{}\t{}", s.id, s.chrom, s.pos).unwrap();
    }
    write_text(path, &out)
}

fn read_positions(path: &Path) -> Result<Vec<SnpInfo>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.first() == Some(&"snp_id") {
            continue;
        }
        if f.len() != 3 {
            return Err(parse_err(path, ln, "expected snp_id, chrom, pos"));
        }
        let chrom = parse_chrom(f[1]).ok_or_else(|| parse_err(path, ln, format!("bad chromosome {:?}", f[1])))?;
        let pos = f[2].parse().map_err(|_| parse_err(path, ln, format!("bad position {:?}", f[2])))?;
        out.push(SnpInfo {
            id: f[0].to_string(),
            chrom,
            pos,
        });
    }
    Ok(out)
}

/// Reads a genotype TSV plus its positions companion. SNPs are matched by id;
/// the genotype header order is kept.
pub fn read_genotypes(geno_path: &Path, positions_path: &Path) -> Result<GenotypeMatrix> {
    let positions = read_positions(positions_path)?;
    let by_id: std::collections::HashMap<&str, &SnpInfo> = positions.iter().map(|s| (s.id.as_str(), s)).collect();
    let text = read_text(geno_path)?;
    let mut lines = data_lines(&text);
    let (ln, header) = lines.next().ok_or_else(|| parse_err(geno_path, 0, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("#iid") {
        return Err(parse_err(geno_path, ln, "header must start with #iid"));
    }
    let snps: Vec<SnpInfo> = cols
        .map(|id| {
            by_id
                .get(id)
                .map(|s| (*s).clone())
                .ok_or_else(|| parse_err(geno_path, ln, format!("SNP {id} missing from {}", positions_path.display())))
        })
        .collect::<Result<_>>()?;
    let mut individuals = Vec::new();
    let mut columns: Vec<Vec<Option<u8>>> = vec![Vec::new(); snps.len()];
    for (ln, line) in lines {
        let mut f = line.split('\t');
        individuals.push(f.next().unwrap_or_default().to_string());
        let mut count = 0;
        for (s, tok) in f.enumerate() {
            if s >= snps.len() {
                return Err(parse_err(geno_path, ln, "too many values"));
            }
            let v = match tok {
                "NA" | "." => None,
                "0" => Some(0),
                "1" => Some(1),
                "2" => Some(2),
                other => return Err(parse_err(geno_path, ln, format!("bad genotype code {other:?}"))),
            };
            columns[s].push(v);
            count += 1;
        }
        if count != snps.len() {
            return Err(parse_err(geno_path, ln, format!("expected {} genotype values", snps.len())));
        }
    }
    GenotypeMatrix::from_columns(individuals, snps, columns)
}

pub fn write_pgs(path: &Path, w: &PgsWeightFile, prov: &Provenance) -> Result<()> {
    let mut out = prov.line();
    out.push_str("snp_id\teffect_allele\tweight\n");
    for e in &w.entries {
        writeln!(out, "{}\t{}\t{}", e.snp_id, e.effect_allele, fmt_f64(e.weight)).unwrap();
    }
    write_text(path, &out)
}

/// Score id is the file stem.
pub fn read_pgs(path: &Path) -> Result<PgsWeightFile> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.first() == Some(&"snp_id") {
            continue;
        }
        if f.len() != 3 {
            return Err(parse_err(path, ln, "expected snp_id, effect_allele, weight"));
        }
        entries.push(PgsEntry {
            snp_id: f[0].to_string(),
            effect_allele: f[1].to_string(),
            weight: f[2].parse().map_err(|_| parse_err(path, ln, format!("bad weight {:?}", f[2])))?,
        });
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("score").to_string();
    PgsWeightFile::new(id, entries)
}

/// All `*.tsv` weight files of a directory, sorted by file name.
pub fn read_pgs_dir(dir: &Path) -> Result<Vec<PgsWeightFile>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tsv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_pgs(p)).collect()
}

pub fn write_burden(path: &Path, ann: &BurdenAnnotation, prov: &Provenance) -> Result<()> {
    let mut out = prov.line();
    out.push_str("snp_id\tgene_id\tis_damaging\tmaf\n");
    for (id, a) in &ann.variants {
        writeln!(out, "{id}\t{}\t{}\t{}", a.gene_id, a.is_damaging as u8, fmt_f64(a.maf)).unwrap();
    }
    write_text(path, &out)
}

pub fn read_burden(path: &Path) -> Result<BurdenAnnotation> {
    let text = read_text(path)?;
    let mut ann = BurdenAnnotation::default();
    for (ln, line) in data_lines(&text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.first() == Some(&"snp_id") {
            continue;
        }
        if f.len() != 4 {
            return Err(parse_err(path, ln, "expected snp_id, gene_id, is_damaging, maf"));
        }
        let is_damaging = match f[2] {
            "1" | "true" | "TRUE" => true,
            "0" | "false" | "FALSE" => false,
            other => return Err(parse_err(path, ln, format!("bad is_damaging {other:?}"))),
        };
        let maf = f[3].parse().map_err(|_| parse_err(path, ln, format!("bad maf {:?}", f[3])))?;
        ann.insert(
            f[0],
            VariantAnnotation {
                gene_id: f[1].to_string(),
                is_damaging,
                maf,
            },
        )
        .map_err(|e| parse_err(path, ln, e.to_string()))?;
    }
    Ok(ann)
}
