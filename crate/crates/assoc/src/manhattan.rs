use std::collections::BTreeMap;
use std::fmt::Write;

use contig_genetics::SnpInfo;

/// Display clamp for p-values.
pub const P_DISPLAY_FLOOR: f64 = 1e-99;

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Height of a point in −log10 units, after clamping.
pub fn display_y(p: f64) -> f64 {
    let y = -p.max(P_DISPLAY_FLOOR).log10();
    if y == 0.0 { 0.0 } else { y }
}

/// Manhattan plot as a standalone SVG document.
///
/// Each SNP becomes a `<circle class="snp">` carrying `data-y` (its −log10 p)
/// and `data-id`. Threshold lines are drawn at `p_genomewide` and at
/// `0.05 / n_snps`.
pub fn manhattan_svg(snps: &[SnpInfo], p: &[f64], p_genomewide: f64) -> String {
    assert_eq!(snps.len(), p.len());
    let n = snps.len().max(1);
    let bonf = 0.05 / n as f64;

    // cumulative offsets so chromosomes are laid end to end
    let mut span: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    for s in snps {
        let e = span.entry(s.chrom).or_insert((s.pos, s.pos));
        e.0 = e.0.min(s.pos);
        e.1 = e.1.max(s.pos);
    }
    let mut offset = BTreeMap::new();
    let mut total = 0.0;
    for (c, (lo, hi)) in &span {
        offset.insert(*c, total - *lo as f64);
        total += (hi - lo) as f64 + 1.0;
    }
    let total = total.max(1.0);

    let ys: Vec<f64> = p.iter().map(|&v| display_y(v)).collect();
    let y_max = ys
        .iter()
        .cloned()
        .chain([display_y(p_genomewide), display_y(bonf)])
        .fold(1.0, f64::max)
        * 1.05;
    let sx = |x: f64| MARGIN + x / total * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / y_max * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">genomic position</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">-log10(p)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (s, y)) in snps.iter().zip(&ys).enumerate() {
        let x = offset[&s.chrom] + s.pos as f64;
        let fill = if s.chrom % 2 == 0 { "#7f7f7f" } else { "#1f3b73" };
        let _ = writeln!(
            out,
            r#"<circle class="snp" data-id="{}" data-y="{:?}" cx="{:.2}" cy="{:.2}" r="2" fill="{fill}"/>"#,
            xml_escape(&snps[i].id),
            y,
            sx(x),
            sy(*y)
        );
    }
    for (class, pv, colour) in [("genomewide", p_genomewide, "green"), ("bonferroni", bonf, "red")] {
        let y = sy(display_y(pv));
        let _ = writeln!(
            out,
            r#"<line class="{class}" data-p="{pv:e}" x1="{MARGIN}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="{colour}" stroke-dasharray="4 2"/>"#,
            WIDTH - MARGIN
        );
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
