//! Sign-agreement summaries of grid results, as JSON cells and an SVG matrix.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{HarnessError, ResultRow};
use crate::sem::{InterventionKind, Link, NoiseKind};

/// Absolute slack when comparing a difference with the tolerance, so that a
/// difference of exactly the tolerance is not lost to rounding.
const TOLERANCE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub p: usize,
    pub n_int: usize,
    pub link: Link,
    pub noise: NoiseKind,
    pub kind: InterventionKind,
    pub p_iota: f64,
}

impl CellKey {
    fn of(row: &ResultRow) -> Self {
        Self {
            p: row.p,
            n_int: row.n_int,
            link: row.link,
            noise: row.noise,
            kind: row.kind,
            p_iota: row.p_iota,
        }
    }
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.p, self.n_int, self.link, self.noise, self.kind)
            .cmp(&(other.p, other.n_int, other.link, other.noise, other.kind))
            .then(self.p_iota.total_cmp(&other.p_iota))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAgreementCell {
    pub key: CellKey,
    /// Settings where both learners produced risks.
    pub paired: usize,
    /// Settings whose true risks differ by at least the tolerance.
    pub settings_count: usize,
    pub empty: bool,
    pub median_true_difference: Option<f64>,
    pub sign_agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub first: String,
    pub second: String,
    pub tolerance: f64,
    pub min_per_cell: usize,
    /// Settings missing a result for either learner.
    pub unpaired: usize,
    pub cells: Vec<SignAgreementCell>,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 })
}

/// Compares `first - second` in weighted risk with `first - second` in true
/// (oracle) risk, per setting, and groups the settings into cells.
///
/// Settings whose true difference is below `tolerance` in absolute value are
/// dropped; cells with fewer than `min_per_cell` remaining settings are empty.
pub fn aggregate_report(
    rows: &[ResultRow],
    first: &str,
    second: &str,
    tolerance: f64,
    min_per_cell: usize,
) -> Result<CellReport, HarnessError> {
    if !(tolerance >= 0.0) {
        return Err(HarnessError::Config(format!("tolerance {tolerance} is negative")));
    }
    if min_per_cell == 0 {
        return Err(HarnessError::Config("min_per_cell must be at least 1".into()));
    }
    if !rows.is_empty() {
        for id in [first, second] {
            if !rows.iter().any(|r| r.learner == id) {
                return Err(HarnessError::UnknownLearner(id.to_string()));
            }
        }
    }

    let mut by_setting: BTreeMap<(u64, usize), (Option<&ResultRow>, Option<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let slot = by_setting.entry((r.root_seed, r.setting)).or_default();
        if r.learner == first {
            slot.0 = Some(r);
        }
        if r.learner == second {
            slot.1 = Some(r);
        }
    }

    let mut unpaired = 0;
    let mut cells: BTreeMap<CellKey, (usize, Vec<(f64, f64)>)> = BTreeMap::new();
    for (a, b) in by_setting.into_values() {
        let pair = a.zip(b).and_then(|(a, b)| {
            Some((
                CellKey::of(a),
                a.oracle_hat? - b.oracle_hat?,
                a.weighted? - b.weighted?,
            ))
        });
        let Some((key, true_diff, est_diff)) = pair else {
            unpaired += 1;
            continue;
        };
        let cell = cells.entry(key).or_default();
        cell.0 += 1;
        if true_diff.abs() >= tolerance - TOLERANCE_SLACK && (tolerance == 0.0 || true_diff != 0.0) {
            cell.1.push((true_diff, est_diff));
        }
    }

    let cells = cells
        .into_iter()
        .map(|(key, (paired, kept))| {
            let empty = kept.len() < min_per_cell;
            let agree = kept.iter().filter(|(t, e)| sign(*t) == sign(*e)).count();
            SignAgreementCell {
                key,
                paired,
                settings_count: kept.len(),
                empty,
                median_true_difference: if empty { None } else { median(kept.iter().map(|k| k.0).collect()) },
                sign_agreement: (!empty).then(|| agree as f64 / kept.len() as f64),
            }
        })
        .collect();

    Ok(CellReport {
        first: first.to_string(),
        second: second.to_string(),
        tolerance,
        min_per_cell,
        unpaired,
        cells,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Blue for negative, red for positive, white at zero; differences saturate at 1.
fn diverging(x: f64) -> String {
    let t = x.clamp(-1.0, 1.0).abs();
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if x < 0.0 {
        format!("rgb({fade},{fade},255)")
    } else {
        format!("rgb(255,{fade},{fade})")
    }
}

/// Red at 0 through yellow to green at 1.
fn agreement_colour(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let (r, g) = if f < 0.5 { (255.0, 510.0 * f) } else { (510.0 * (1.0 - f), 200.0) };
    format!("rgb({},{},60)", r.round() as u8, g.round() as u8)
}

/// Two panels over the same cell layout: median true risk difference on top,
/// sign-agreement frequency below. Rows are (link, noise, kind), columns
/// (p, n_int, p_iota). Empty cells are grey.
pub fn render_svg(report: &CellReport) -> String {
    let mut rows: Vec<(Link, NoiseKind, InterventionKind)> =
        report.cells.iter().map(|c| (c.key.link, c.key.noise, c.key.kind)).collect();
    rows.sort();
    rows.dedup();
    let mut cols: Vec<(usize, usize, f64)> = report.cells.iter().map(|c| (c.key.p, c.key.n_int, c.key.p_iota)).collect();
    cols.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    cols.dedup();

    let (cell_w, cell_h, left, top, gap) = (64.0, 28.0, 210.0, 90.0, 70.0);
    let panel_h = rows.len() as f64 * cell_h;
    let width = left + cols.len().max(1) as f64 * cell_w + 20.0;
    let height = top + 2.0 * panel_h + gap + 40.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="20" font-size="14">{} vs {} (tolerance {}, at least {} per cell)</text>"#,
        escape(&report.first),
        escape(&report.second),
        report.tolerance,
        report.min_per_cell
    );
    for (c, (p, n_int, p_iota)) in cols.iter().enumerate() {
        let x = left + c as f64 * cell_w + cell_w / 2.0;
        for (k, label) in [format!("p={p}"), format!("n={n_int}"), format!("P={p_iota}")].iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle">{label}</text>"#,
                top - 42.0 + 13.0 * k as f64
            );
        }
    }

    let panels = [("median true risk difference", 0.0), ("sign agreement", panel_h + gap)];
    for (panel, (title, offset)) in panels.iter().enumerate() {
        let y0 = top + offset;
        let _ = writeln!(svg, r#"<text x="10" y="{}" font-size="12">{title}</text>"#, y0 - 6.0);
        for (r, (link, noise, kind)) in rows.iter().enumerate() {
            let y = y0 + r as f64 * cell_h;
            let _ = writeln!(
                svg,
                r#"<text x="10" y="{}">{link} / {noise} / {kind}</text>"#,
                y + cell_h / 2.0 + 4.0
            );
            for (c, col) in cols.iter().enumerate() {
                let x = left + c as f64 * cell_w;
                let cell = report.cells.iter().find(|cell| {
                    let k = &cell.key;
                    (k.link, k.noise, k.kind) == (*link, *noise, *kind)
                        && (k.p, k.n_int) == (col.0, col.1)
                        && k.p_iota.total_cmp(&col.2).is_eq()
                });
                let value = cell.and_then(|c| {
                    if panel == 0 {
                        c.median_true_difference
                    } else {
                        c.sign_agreement
                    }
                });
                let (fill, text) = match value {
                    Some(v) if panel == 0 => (diverging(v), format!("{v:.2}")),
                    Some(v) => (agreement_colour(v), format!("{v:.2}")),
                    None => ("rgb(200,200,200)".to_string(), String::new()),
                };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="white"/>"#
                );
                if let Some(c) = cell.filter(|_| !text.is_empty()) {
                    let _ = writeln!(
                        svg,
                        r#"<text x="{}" y="{}" text-anchor="middle">{text} ({})</text>"#,
                        x + cell_w / 2.0,
                        y + cell_h / 2.0 + 4.0,
                        c.settings_count
                    );
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
