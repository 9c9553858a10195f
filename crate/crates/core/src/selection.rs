//! Fidelity/adversarial filtering, MSE histograms, k-means, and nearest-to-centroid picking.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::AdversarialCandidate;
use crate::dataset::Label;
use crate::error::{config, Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub mse_threshold: f64,
    pub k: usize,
    pub s: usize,
    pub iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub histogram_bins: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { mse_threshold: 0.01, k: 10, s: 20, iters: 100, restarts: 5, seed: 0, histogram_bins: 20 }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.s == 0 || !(self.mse_threshold > 0.0) || self.iters == 0 || self.restarts == 0 {
            return Err(config("selection needs k ≥ 1, s ≥ 1, mse_threshold > 0, iters ≥ 1, restarts ≥ 1"));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.k * self.s
    }
}

/// Candidates surviving the filter, split by source label.
#[derive(Debug, Default)]
pub struct Filtered<'a> {
    pub bonafide: Vec<&'a AdversarialCandidate>,
    pub attack: Vec<&'a AdversarialCandidate>,
    pub warnings: Vec<String>,
}

impl<'a> Filtered<'a> {
    pub fn class(&self, label: Label) -> &[&'a AdversarialCandidate] {
        match label {
            Label::Bonafide => &self.bonafide,
            Label::Attack => &self.attack,
        }
    }
}

/// Keeps candidates with `mse < threshold` that fooled the classifier.
pub fn filter<'a>(candidates: &'a [AdversarialCandidate], cfg: &SelectionConfig) -> Filtered<'a> {
    let mut out = Filtered::default();
    for c in candidates.iter().filter(|c| c.mse < cfg.mse_threshold && c.adversarial()) {
        match c.label {
            Label::Bonafide => out.bonafide.push(c),
            Label::Attack => out.attack.push(c),
        }
    }
    for label in Label::BOTH {
        if out.class(label).is_empty() {
            out.warnings.push(format!("no adversarial {label} candidates below mse {}", cfg.mse_threshold));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fraction of all values strictly below each edge.
    pub cumulative_below: Vec<f64>,
    pub total: usize,
}

/// Histogram over explicit ascending edges; values past the last edge land in the last bin.
pub fn histogram_with_edges(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Selection("histogram edges must be ≥ 2 and strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in values {
        let i = edges[1..].iter().position(|&e| v < e).unwrap_or(bins - 1);
        counts[i] += 1;
    }
    let n = values.len().max(1) as f64;
    let cumulative_below = edges.iter().map(|&e| values.iter().filter(|&&v| v < e).count() as f64 / n).collect();
    Ok(Histogram { edges: edges.to_vec(), counts, cumulative_below, total: values.len() })
}

/// Equal-width bins from 0 to the largest MSE.
pub fn mse_histogram(candidates: &[AdversarialCandidate], bins: usize) -> Result<Histogram> {
    if candidates.is_empty() || bins == 0 {
        return Err(Error::Selection("histogram needs at least one candidate and one bin".into()));
    }
    let values: Vec<f64> = candidates.iter().map(|c| c.mse).collect();
    let max = values.iter().cloned().fold(0.0, f64::max);
    let hi = if max > 0.0 { max * (1.0 + 1e-9) } else { 1e-6 };
    let edges: Vec<f64> = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
    histogram_with_edges(&values, &edges)
}

impl Histogram {
    pub fn render_table(&self) -> String {
        let mut s = String::from("bin_lo\tbin_hi\tcount\tcum_below_hi\n");
        for i in 0..self.counts.len() {
            let _ = writeln!(
                s,
                "{:.6}\t{:.6}\t{}\t{:.4}",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.cumulative_below[i + 1]
            );
        }
        s
    }

    /// Bar plot with a dashed marker at `threshold`.
    pub fn write_plot(&self, threshold: Option<f64>, path: &Path) -> Result<()> {
        let lo = self.edges[0];
        let width = self.edges[1] - self.edges[0];
        let marker = threshold.map(|t| (t - lo) / width);
        let values: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        crate::plot::bar_chart(&values, marker, path)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the kept restart.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn inertia(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

fn plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, iters: usize) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = vec![];
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Empty clusters take over the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[assignments[*i]] > 1)
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                    .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                if far != usize::MAX {
                    counts[assignments[far]] -= 1;
                    assignments[far] = j;
                    counts[j] = 1;
                    centroids[j] = points[far].clone();
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignments;
        assignments = next;
        trace.push(inertia(points, &assignments, &centroids));
        if !changed {
            break;
        }
    }
    let inertia = inertia(points, &assignments, &centroids);
    KMeans { assignments, centroids, inertia, trace }
}

/// Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart is kept.
pub fn kmeans(points: &[Vec<f64>], k: usize, iters: usize, restarts: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::Selection(format!(
            "k-means needs at least k points: got {} points for k = {k}; use a smaller k",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Selection("embeddings differ in length".into()));
    }
    let mut best: Option<KMeans> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed::rng(seed, &[seed::tag("kmeans"), r as u64]);
        let run = lloyd(points, plus_plus(points, k, &mut rng), iters.max(1));
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Picked {
    pub id: String,
    pub label: Label,
    pub mse: f64,
    pub f_score: f64,
    /// Absent when the count fell below `k` and the MSE fallback was used.
    pub cluster: Option<usize>,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PickOutcome {
    pub picked: Vec<Picked>,
    pub warnings: Vec<String>,
}

/// Clusters one class's filtered candidates and keeps up to `s` nearest-to-centroid per cluster.
pub fn pick(
    candidates: &[&AdversarialCandidate],
    cfg: &SelectionConfig,
    embed: &(dyn Fn(&AdversarialCandidate) -> Result<Vec<f32>> + Sync),
) -> Result<PickOutcome> {
    cfg.validate()?;
    let mut sorted: Vec<&AdversarialCandidate> = candidates.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Selection("duplicate candidate ids".into()));
    }
    let mut out = PickOutcome::default();
    if sorted.len() < cfg.k {
        if !sorted.is_empty() {
            out.warnings.push(format!(
                "only {} candidates for k = {}; falling back to lowest-mse selection",
                sorted.len(),
                cfg.k
            ));
        }
        sorted.sort_by(|a, b| a.mse.total_cmp(&b.mse).then_with(|| a.id.cmp(&b.id)));
        out.picked = sorted
            .iter()
            .take(cfg.budget())
            .map(|c| Picked { id: c.id.clone(), label: c.label, mse: c.mse, f_score: c.f_score, cluster: None, distance: 0.0 })
            .collect();
        return Ok(out);
    }
    let points: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        sorted
            .par_iter()
            .map(|c| embed(c).map(|e| e.into_iter().map(f64::from).collect()))
            .collect::<Result<_>>()?
    };
    let km = kmeans(&points, cfg.k, cfg.iters, cfg.restarts, cfg.seed)?;
    for j in 0..cfg.k {
        let mut members: Vec<(f64, &AdversarialCandidate)> = sorted
            .iter()
            .zip(&points)
            .zip(&km.assignments)
            .filter(|(_, &a)| a == j)
            .map(|((c, p), _)| (sq_dist(p, &km.centroids[j]).sqrt(), *c))
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        out.picked.extend(members.into_iter().take(cfg.s).map(|(d, c)| Picked {
            id: c.id.clone(),
            label: c.label,
            mse: c.mse,
            f_score: c.f_score,
            cluster: Some(j),
            distance: d,
        }));
    }
    Ok(out)
}

pub const SELECTION_HEADER: &str = "id,class,mse,f_score,cluster,distance";

pub fn write_selection(path: &Path, picked: &[Picked]) -> Result<()> {
    let mut s = String::from(SELECTION_HEADER);
    s.push('\n');
    for p in picked {
        let cluster = p.cluster.map_or(String::from("-1"), |c| c.to_string());
        let _ = writeln!(s, "{},{},{:.9},{:.9},{},{:.9}", p.id, p.label.code(), p.mse, p.f_score, cluster, p.distance);
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_selection(path: &Path) -> Result<Vec<Picked>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |line: usize, reason: String| Error::ManifestParse { path: path.to_path_buf(), line, reason };
    if lines.next().map(str::trim) != Some(SELECTION_HEADER) {
        return Err(bad(1, format!("expected header `{SELECTION_HEADER}`")));
    }
    let mut out = vec![];
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 2;
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n, e.to_string()));
        let cluster: i64 = f[4].parse().map_err(|_| bad(n, format!("bad cluster `{}`", f[4])))?;
        out.push(Picked {
            id: f[0].to_string(),
            label: Label::parse(f[1]).ok_or_else(|| bad(n, format!("bad class `{}`", f[1])))?,
            mse: num(f[2])?,
            f_score: num(f[3])?,
            cluster: (cluster >= 0).then_some(cluster as usize),
            distance: num(f[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::TransformVector;

    fn cand(id: &str, label: Label, mse: f64, f_score: f64) -> AdversarialCandidate {
        AdversarialCandidate {
            id: id.into(),
            source_id: id.into(),
            label,
            t: TransformVector::identity(),
            mse,
            f_score,
            image: None,
            embedding: None,
            selected: false,
        }
    }

    #[test]
    fn filter_examples() {
        let cs = vec![
            cand("a", Label::Bonafide, 0.005, 0.9),
            cand("b", Label::Bonafide, 0.02, 0.9),
            cand("c", Label::Attack, 0.005, 0.9),
        ];
        let f = filter(&cs, &SelectionConfig::default());
        assert_eq!(f.bonafide.len(), 1);
        assert_eq!(f.bonafide[0].id, "a");
        assert!(f.attack.is_empty());
        assert_eq!(f.warnings.len(), 1);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram_with_edges(&[0.001, 0.005, 0.02], &[0.0, 0.01, 0.03]).unwrap();
        assert_eq!(h.counts, vec![2, 1]);
        assert!((h.cumulative_below[1] - 2.0 / 3.0).abs() < 1e-12);
        let cs: Vec<_> = [0.001, 0.005, 0.02].iter().map(|&m| cand("x", Label::Bonafide, m, 0.9)).collect();
        let h = mse_histogram(&cs, 7).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(h, mse_histogram(&cs, 7).unwrap());
        assert_eq!(h.render_table().lines().count(), 8);
    }

    #[test]
    fn kmeans_separates_and_k1_is_mean() {
        let pts: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|&v| vec![v]).collect();
        let km = kmeans(&pts, 2, 100, 5, 0).unwrap();
        assert_eq!(km.assignments[0], km.assignments[1]);
        assert_eq!(km.assignments[2], km.assignments[3]);
        assert_ne!(km.assignments[0], km.assignments[2]);
        let km1 = kmeans(&pts, 1, 100, 1, 0).unwrap();
        assert!((km1.centroids[0][0] - 5.05).abs() < 1e-12);
        assert!(matches!(kmeans(&pts, 5, 10, 1, 0), Err(Error::Selection(_))));
    }

    #[test]
    fn pick_k1_s1_nearest_to_mean() {
        let cs: Vec<_> = (0..5).map(|i| cand(&format!("c{i}"), Label::Attack, 0.001, 0.1)).collect();
        let refs: Vec<_> = cs.iter().collect();
        let cfg = SelectionConfig { k: 1, s: 1, ..Default::default() };
        let embed = |c: &AdversarialCandidate| Ok(vec![c.id[1..].parse::<f32>().unwrap().powi(2)]);
        let out = pick(&refs, &cfg, &embed).unwrap();
        assert_eq!(out.picked.len(), 1);
        assert_eq!(out.picked[0].id, "c2");
    }

    #[test]
    fn small_cluster_contributes_all_and_fallback_by_mse() {
        let cs: Vec<_> = (0..3).map(|i| cand(&format!("c{i}"), Label::Bonafide, 0.003 - i as f64 * 0.001, 0.9)).collect();
        let refs: Vec<_> = cs.iter().collect();
        let cfg = SelectionConfig { k: 1, s: 20, ..Default::default() };
        let embed = |_: &AdversarialCandidate| Ok(vec![0.0f32, 1.0]);
        assert_eq!(pick(&refs, &cfg, &embed).unwrap().picked.len(), 3);
        let cfg = SelectionConfig { k: 5, s: 1, ..Default::default() };
        let out = pick(&refs, &cfg, &embed).unwrap();
        assert_eq!(out.picked.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), vec!["c2", "c1", "c0"]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn selection_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sel.csv");
        let picked = vec![
            Picked { id: "c1".into(), label: Label::Attack, mse: 0.002, f_score: 0.3, cluster: Some(2), distance: 1.5 },
            Picked { id: "c7".into(), label: Label::Bonafide, mse: 0.004, f_score: 0.8, cluster: None, distance: 0.0 },
        ];
        write_selection(&p, &picked).unwrap();
        assert_eq!(read_selection(&p).unwrap(), picked);
    }
}
