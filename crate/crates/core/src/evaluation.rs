//! Detection metrics, per-domain reports, ROC export, and report comparison.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ImageRecord, Label};
use crate::error::{Error, Result};
use crate::pad::PadModel;
use crate::pixels::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub domain: String,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl ScoreSet {
    pub fn new(domain: impl Into<String>, scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::Evaluation("score set must be non-empty with one label per score".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Evaluation("scores must be finite".into()));
        }
        Ok(Self { domain: domain.into(), scores, labels })
    }

    fn class(&self, label: Label) -> Vec<f64> {
        self.scores.iter().zip(&self.labels).filter(|(_, &l)| l == label).map(|(&s, _)| s).collect()
    }

    fn both(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (b, a) = (self.class(Label::Bonafide), self.class(Label::Attack));
        if b.is_empty() || a.is_empty() {
            return Err(Error::Evaluation(format!("domain `{}` needs both bonafide and attack scores", self.domain)));
        }
        Ok((b, a))
    }
}

fn fraction_at_or_above(sorted: &[f64], t: f64) -> f64 {
    let below = sorted.partition_point(|&s| s < t);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// TDR (percent) at the smallest observed score whose bonafide false-detection fraction is within `fdr_target`.
///
/// Returns `+inf` as the threshold when no observed score qualifies.
pub fn tdr_at_fdr(set: &ScoreSet, fdr_target: f64) -> Result<(f64, f64)> {
    let (mut bona, mut pa) = set.both()?;
    bona.sort_by(f64::total_cmp);
    pa.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = set.scores.clone();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // The false-detection fraction only falls as the threshold rises.
    let i = candidates.partition_point(|&t| fraction_at_or_above(&bona, t) > fdr_target);
    let threshold = candidates.get(i).copied().unwrap_or(f64::INFINITY);
    Ok((100.0 * fraction_at_or_above(&pa, threshold), threshold))
}

/// APCER, BPCER, HTER in percent; a score at or above `threshold` is classified as PA.
pub fn error_rates(set: &ScoreSet, threshold: f64) -> Result<(f64, f64, f64)> {
    let (bona, pa) = set.both()?;
    let apcer = 100.0 * pa.iter().filter(|&&s| s < threshold).count() as f64 / pa.len() as f64;
    let bpcer = 100.0 * bona.iter().filter(|&&s| s >= threshold).count() as f64 / bona.len() as f64;
    Ok((apcer, bpcer, hter(apcer, bpcer)))
}

pub fn hter(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

/// Round half up to two decimals, tolerant of binary representation error.
pub fn round2(x: f64) -> f64 {
    ((x * 100.0) + 0.5 + 1e-7).floor() / 100.0
}

/// `(false detection rate, true detection rate, threshold)` at every distinct score, descending threshold.
pub fn roc_points(set: &ScoreSet) -> Result<Vec<(f64, f64, f64)>> {
    let (mut bona, mut pa) = set.both()?;
    bona.sort_by(f64::total_cmp);
    pa.sort_by(f64::total_cmp);
    let mut ts = set.scores.clone();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let mut pts = vec![(0.0, 0.0, f64::INFINITY)];
    pts.extend(ts.into_iter().map(|t| (fraction_at_or_above(&bona, t), fraction_at_or_above(&pa, t), t)));
    Ok(pts)
}

pub fn write_roc_csv(set: &ScoreSet, path: &Path) -> Result<()> {
    let mut s = String::from("fdr,tdr,threshold\n");
    for (f, t, th) in roc_points(set)? {
        let _ = writeln!(s, "{f:.6},{t:.6},{th}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// FDR operating points as fractions; the first is the headline column.
    pub fdr_targets: Vec<f64>,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { fdr_targets: vec![0.001, 0.01], threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdrPoint {
    pub fdr: f64,
    pub tdr: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub domain: String,
    pub n_bonafide: usize,
    pub n_attack: usize,
    pub tdr: Vec<TdrPoint>,
    pub apcer: f64,
    pub bpcer: f64,
    pub hter: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub rows: Vec<DomainRow>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn row_for(set: &ScoreSet, cfg: &EvalConfig) -> Result<DomainRow> {
    let (apcer, bpcer, hter) = error_rates(set, cfg.threshold)?;
    let tdr = cfg
        .fdr_targets
        .iter()
        .map(|&fdr| tdr_at_fdr(set, fdr).map(|(tdr, threshold)| TdrPoint { fdr, tdr, threshold }))
        .collect::<Result<_>>()?;
    Ok(DomainRow {
        domain: set.domain.clone(),
        n_bonafide: set.labels.iter().filter(|&&l| l == Label::Bonafide).count(),
        n_attack: set.labels.iter().filter(|&&l| l == Label::Attack).count(),
        tdr,
        apcer,
        bpcer,
        hter,
        threshold: cfg.threshold,
    })
}

/// Scores every test record; returns the report and the per-domain score sets.
pub fn evaluate(
    model: &PadModel,
    model_name: &str,
    domains: &[(String, Vec<ImageRecord>)],
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<ScoreSet>)> {
    let mut report = EvalReport { model: model_name.into(), rows: vec![], warnings: vec![] };
    let mut sets = vec![];
    for (domain, records) in domains {
        if records.is_empty() {
            let w = format!("domain `{domain}` has no test samples; skipped");
            log::warn!("{w}");
            report.warnings.push(w);
            continue;
        }
        let images: Vec<&Image> = records.iter().map(|r| &r.pixels).collect();
        let set = ScoreSet::new(domain.clone(), model.score_images(&images)?, records.iter().map(|r| r.label).collect())?;
        report.rows.push(row_for(&set, cfg)?);
        sets.push(set);
    }
    Ok((report, sets))
}

fn pct(v: f64) -> String {
    format!("{:.2}", round2(v))
}

fn fdr_label(f: f64) -> String {
    format!("TDR@{}%", f * 100.0)
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn render_table(&self) -> String {
        let mut s = format!("model: {}\n", self.model);
        let fdrs: Vec<f64> = self.rows.first().map(|r| r.tdr.iter().map(|p| p.fdr).collect()).unwrap_or_default();
        s.push_str("domain\tn_bf\tn_pa");
        for f in &fdrs {
            let _ = write!(s, "\t{}", fdr_label(*f));
        }
        s.push_str("\tAPCER\tBPCER\tHTER\tthr\n");
        for r in &self.rows {
            let _ = write!(s, "{}\t{}\t{}", r.domain, r.n_bonafide, r.n_attack);
            for p in &r.tdr {
                let _ = write!(s, "\t{}", pct(p.tdr));
            }
            let _ = writeln!(s, "\t{}\t{}\t{}\t{}", pct(r.apcer), pct(r.bpcer), pct(r.hter), r.threshold);
        }
        s
    }

    pub fn headline_tdr(&self, domain: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.domain == domain).and_then(|r| r.tdr.first()).map(|p| p.tdr)
    }

    pub fn tdr_at(&self, domain: &str, fdr: f64) -> Option<f64> {
        let row = self.rows.iter().find(|r| r.domain == domain)?;
        row.tdr.iter().find(|p| (p.fdr - fdr).abs() < 1e-12).map(|p| p.tdr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<String>,
    pub domains: Vec<String>,
    pub fdr: f64,
    /// `tdr[run][domain]`, percent.
    pub tdr: Vec<Vec<f64>>,
    pub hter: Vec<Vec<f64>>,
}

/// Aligns reports over identical domains; rows keep the given order.
pub fn compare(reports: &[(String, EvalReport)]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Comparison("need at least two reports".into()));
    }
    let domains: Vec<String> = reports[0].1.rows.iter().map(|r| r.domain.clone()).collect();
    let fdr = reports[0].1.rows.first().and_then(|r| r.tdr.first()).map(|p| p.fdr).unwrap_or(0.001);
    let mut tdr = vec![];
    let mut hters = vec![];
    for (name, rep) in reports {
        let ds: Vec<&str> = rep.rows.iter().map(|r| r.domain.as_str()).collect();
        let mut want: Vec<&str> = domains.iter().map(String::as_str).collect();
        let mut got = ds.clone();
        want.sort_unstable();
        got.sort_unstable();
        if want != got {
            return Err(Error::Comparison(format!("run `{name}` covers domains {ds:?}, expected {domains:?}")));
        }
        let mut t_row = vec![];
        let mut h_row = vec![];
        for d in &domains {
            t_row.push(
                rep.tdr_at(d, fdr)
                    .ok_or_else(|| Error::Comparison(format!("run `{name}` lacks TDR at FDR {fdr} for `{d}`")))?,
            );
            h_row.push(rep.rows.iter().find(|r| &r.domain == d).map(|r| r.hter).unwrap_or(f64::NAN));
        }
        tdr.push(t_row);
        hters.push(h_row);
    }
    Ok(Comparison { runs: reports.iter().map(|(n, _)| n.clone()).collect(), domains, fdr, tdr, hter: hters })
}

impl Comparison {
    /// Per column, every run whose rounded value ties the best is marked.
    pub fn best_marks(&self) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
        let mark = |grid: &Vec<Vec<f64>>, higher: bool| {
            let mut out = vec![vec![false; self.domains.len()]; self.runs.len()];
            for d in 0..self.domains.len() {
                let vals: Vec<f64> = grid.iter().map(|row| round2(row[d])).collect();
                let best = if higher {
                    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.iter().cloned().fold(f64::INFINITY, f64::min)
                };
                for (r, v) in vals.iter().enumerate() {
                    out[r][d] = *v == best;
                }
            }
            out
        };
        (mark(&self.tdr, true), mark(&self.hter, false))
    }

    pub fn render(&self) -> String {
        let (bt, bh) = self.best_marks();
        let mut s = String::from("run");
        for d in &self.domains {
            let _ = write!(s, "\t{d} {}\t{d} HTER", fdr_label(self.fdr));
        }
        s.push('\n');
        for (r, name) in self.runs.iter().enumerate() {
            s.push_str(name);
            for d in 0..self.domains.len() {
                let star = |b: bool| if b { "*" } else { "" };
                let _ = write!(s, "\t{}{}\t{}{}", pct(self.tdr[r][d]), star(bt[r][d]), pct(self.hter[r][d]), star(bh[r][d]));
            }
            s.push('\n');
        }
        s.push_str("* best in column (ties marked jointly)\n");
        s
    }
}
