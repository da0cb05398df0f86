//! External clustering scores for partitions and covers, and random baselines.

use std::collections::BTreeMap;

use rand::seq::index::sample_weighted;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::rng::{substream, tags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub nmi: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn count<T: Ord + Copy>(xs: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

/// Homogeneity, completeness and their harmonic mean. `H := 1` when the
/// classes have zero entropy and `C := 1` when the clusters do.
pub fn v_measure(pred: &[usize], truth: &[usize]) -> Result<VMeasure> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted and {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let joint = count(pred.iter().copied().zip(truth.iter().copied()));
    let pc = count(pred.iter().copied());
    let tc = count(truth.iter().copied());
    let h_class = entropy(tc.values().copied(), n);
    let h_cluster = entropy(pc.values().copied(), n);
    let h_joint = entropy(joint.values().copied(), n);
    let h_class_given_cluster = (h_joint - h_cluster).max(0.0);
    let h_cluster_given_class = (h_joint - h_class).max(0.0);
    let homogeneity = if h_class == 0.0 {
        1.0
    } else {
        (1.0 - h_class_given_cluster / h_class).clamp(0.0, 1.0)
    };
    let completeness = if h_cluster == 0.0 {
        1.0
    } else {
        (1.0 - h_cluster_given_class / h_cluster).clamp(0.0, 1.0)
    };
    let nmi = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        nmi,
    })
}

/// Sets of a partition, ordered by label.
pub fn labels_to_sets(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sets = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        sets[l].push(i);
    }
    sets.into_iter().filter(|s| !s.is_empty()).collect()
}

fn indicator(set: &[usize], n: usize) -> Vec<bool> {
    let mut v = vec![false; n];
    for &i in set {
        v[i] = true;
    }
    v
}

fn universe_size(a: &[Vec<usize>], b: &[Vec<usize>]) -> usize {
    a.iter()
        .chain(b)
        .flat_map(|s| s.iter())
        .max()
        .map_or(0, |m| m + 1)
}

fn h_term(w: f64, n: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        -w * (w / n).log2()
    }
}

fn set_entropy(x: &[bool], n: f64) -> f64 {
    let ones = x.iter().filter(|&&v| v).count() as f64;
    h_term(ones, n) + h_term(n - ones, n)
}

/// `H(X_i | Y_j)` with the acceptance constraint `h(a) + h(d) ≥ h(b) + h(c)`;
/// `None` when the constraint rejects the pair.
fn conditional_entropy(x: &[bool], y: &[bool], n: f64) -> Option<f64> {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        match (xi, yi) {
            (false, false) => a += 1.0,
            (false, true) => b += 1.0,
            (true, false) => c += 1.0,
            (true, true) => d += 1.0,
        }
    }
    let (ha, hb, hc, hd) = (h_term(a, n), h_term(b, n), h_term(c, n), h_term(d, n));
    if ha + hd < hb + hc {
        return None;
    }
    Some(ha + hb + hc + hd - h_term(b + d, n) - h_term(a + c, n))
}

/// Sum over sets of `X` of the best-match conditional entropy given `Y`.
fn cover_conditional(x: &[Vec<bool>], y: &[Vec<bool>], n: f64) -> f64 {
    x.iter()
        .map(|xi| {
            let fallback = set_entropy(xi, n);
            y.iter()
                .filter_map(|yj| conditional_entropy(xi, yj, n))
                .fold(fallback, f64::min)
        })
        .sum()
}

/// Overlapping NMI with max normalization:
/// `I = ½[H(X) − H(X|Y) + H(Y) − H(Y|X)]`, `oNMI = I / max(H(X), H(Y))`.
pub fn onmi(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument("covers must be nonempty".into()));
    }
    let n = universe_size(pred, truth);
    let nf = n as f64;
    let x: Vec<Vec<bool>> = pred.iter().map(|s| indicator(s, n)).collect();
    let y: Vec<Vec<bool>> = truth.iter().map(|s| indicator(s, n)).collect();
    let hx: f64 = x.iter().map(|s| set_entropy(s, nf)).sum();
    let hy: f64 = y.iter().map(|s| set_entropy(s, nf)).sum();
    let denom = hx.max(hy);
    if denom == 0.0 {
        return Ok(if same_cover(pred, truth) { 1.0 } else { 0.0 });
    }
    let mi = 0.5 * (hx - cover_conditional(&x, &y, nf) + hy - cover_conditional(&y, &x, nf));
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn normalized_cover(c: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = c
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    v.sort();
    v
}

fn same_cover(a: &[Vec<usize>], b: &[Vec<usize>]) -> bool {
    normalized_cover(a) == normalized_cover(b)
}

fn f1(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64;
    let sa = a.iter().filter(|&&v| v).count() as f64;
    let sb = b.iter().filter(|&&v| v).count() as f64;
    if sa + sb == 0.0 {
        0.0
    } else {
        2.0 * inter / (sa + sb)
    }
}

/// Bidirectional best-match F1: the mean over true sets of their best F1
/// against predicted sets, averaged with the same quantity in reverse.
pub fn overlap_f1(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument("covers must be nonempty".into()));
    }
    let n = universe_size(pred, truth);
    let x: Vec<Vec<bool>> = pred.iter().map(|s| indicator(s, n)).collect();
    let y: Vec<Vec<bool>> = truth.iter().map(|s| indicator(s, n)).collect();
    let side = |from: &[Vec<bool>], to: &[Vec<bool>]| {
        from.iter()
            .map(|a| to.iter().map(|b| f1(a, b)).fold(0.0, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (side(&y, &x) + side(&x, &y)))
}

/// Omega index over `n` features: pairwise agreement on the number of shared
/// sets, corrected for chance.
pub fn omega_index(pred: &[Vec<usize>], truth: &[Vec<usize>], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("omega index needs at least two features".into()));
    }
    if universe_size(pred, truth) > n {
        return Err(Error::DimensionMismatch(format!("cover refers to features beyond {n}")));
    }
    let shared = |cover: &[Vec<usize>]| {
        let mut t = vec![0usize; n * n];
        for s in cover {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[a + 1..] {
                    t[i * n + j] += 1;
                }
            }
        }
        t
    };
    let tx = shared(pred);
    let ty = shared(truth);
    let pairs = (n * (n - 1) / 2) as f64;
    let mut agree = 0usize;
    let mut nx: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ny: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (tx[i * n + j], ty[i * n + j]);
            if a == b {
                agree += 1;
            }
            *nx.entry(a).or_insert(0) += 1;
            *ny.entry(b).or_insert(0) += 1;
        }
    }
    let observed = agree as f64 / pairs;
    let expected: f64 = nx
        .iter()
        .map(|(k, &c)| c as f64 * *ny.get(k).unwrap_or(&0) as f64)
        .sum::<f64>()
        / (pairs * pairs);
    if (1.0 - expected).abs() < 1e-15 {
        return Ok(if observed == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Minimum-cost perfect assignment on a square matrix (Hungarian method).
/// Returns `assign[row] = column`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `|Ĝ Δ G| / |G|` per true set.
    pub ratios: Vec<f64>,
    /// Predicted set matched to each true set.
    pub matching: Vec<Option<usize>>,
}

/// One-to-one matching maximizing total intersection, then symmetric
/// difference ratios per true set (unmatched true sets score 1).
pub fn misclassification(pred: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<Misclassification> {
    let uni = |c: &[Vec<usize>]| {
        let mut u: Vec<usize> = c.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    if uni(pred) != uni(truth) {
        return Err(Error::DimensionMismatch("predicted and true covers span different features".into()));
    }
    if truth.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("true sets must be nonempty".into()));
    }
    let n = universe_size(pred, truth);
    // Work in a canonical set order so the matching does not depend on how
    // either cover was listed; ties go to the lower canonical predicted index.
    let order = |c: &[Vec<usize>]| {
        let norm: Vec<Vec<usize>> = c
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&a, &b| norm[a].cmp(&norm[b]).then(a.cmp(&b)));
        idx
    };
    let po = order(pred);
    let to = order(truth);
    let x: Vec<Vec<bool>> = po.iter().map(|&i| indicator(&pred[i], n)).collect();
    let y: Vec<Vec<bool>> = to.iter().map(|&i| indicator(&truth[i], n)).collect();
    let dim = pred.len().max(truth.len());
    let scale = (dim * dim + 1) as i64;
    let cost: Vec<Vec<i64>> = (0..dim)
        .map(|t| {
            (0..dim)
                .map(|p| {
                    if t < y.len() && p < x.len() {
                        let inter = y[t].iter().zip(&x[p]).filter(|(a, b)| **a && **b).count() as i64;
                        -inter * scale + p as i64
                    } else {
                        p as i64
                    }
                })
                .collect()
        })
        .collect();
    let assign = hungarian(&cost);
    let mut ratios = vec![0.0; y.len()];
    let mut matching = vec![None; y.len()];
    for (t, yt) in y.iter().enumerate() {
        let size = yt.iter().filter(|&&v| v).count() as f64;
        let p = assign[t];
        if p < x.len() {
            let sym = yt.iter().zip(&x[p]).filter(|(a, b)| a != b).count() as f64;
            ratios[to[t]] = sym / size;
            matching[to[t]] = Some(po[p]);
        } else {
            ratios[to[t]] = 1.0;
        }
    }
    Ok(Misclassification {
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        matching,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub homogeneity: Option<f64>,
    pub completeness: Option<f64>,
    pub nmi: Option<f64>,
    pub onmi: f64,
    pub f1: f64,
    pub omega: f64,
    pub misclass_min: f64,
    pub misclass_max: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "homogeneity,completeness,nmi,onmi,f1,omega,misclass_min,misclass_max";

    pub fn csv_row(&self) -> String {
        let o = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            o(self.homogeneity),
            o(self.completeness),
            o(self.nmi),
            fmt_f64(self.onmi),
            fmt_f64(self.f1),
            fmt_f64(self.omega),
            fmt_f64(self.misclass_min),
            fmt_f64(self.misclass_max),
        ]
        .join(",")
    }
}

/// Every score for a predicted partition.
pub fn evaluate_partition(pred: &[usize], truth: &[usize]) -> Result<MetricReport> {
    let v = v_measure(pred, truth)?;
    let mut r = evaluate_cover(&labels_to_sets(pred), &labels_to_sets(truth), pred.len())?;
    r.homogeneity = Some(v.homogeneity);
    r.completeness = Some(v.completeness);
    r.nmi = Some(v.nmi);
    Ok(r)
}

/// Cover scores; the partition-only fields stay empty.
pub fn evaluate_cover(pred: &[Vec<usize>], truth: &[Vec<usize>], n: usize) -> Result<MetricReport> {
    let m = misclassification(pred, truth)?;
    Ok(MetricReport {
        homogeneity: None,
        completeness: None,
        nmi: None,
        onmi: onmi(pred, truth)?,
        f1: overlap_f1(pred, truth)?,
        omega: if n >= 2 { omega_index(pred, truth, n)? } else { 1.0 },
        misclass_min: m.min_ratio,
        misclass_max: m.max_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation.
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub trials: usize,
    pub homogeneity: Option<Stat>,
    pub completeness: Option<Stat>,
    pub nmi: Option<Stat>,
    pub onmi: Stat,
    pub f1: Stat,
    pub omega: Stat,
}

fn collect_stats(reports: &[MetricReport], trials: usize) -> BaselineReport {
    let pick = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> Option<Stat> {
        let v: Option<Vec<f64>> = reports.iter().map(f).collect();
        v.map(|v| Stat::of(&v))
    };
    BaselineReport {
        trials,
        homogeneity: pick(&|r| r.homogeneity),
        completeness: pick(&|r| r.completeness),
        nmi: pick(&|r| r.nmi),
        onmi: Stat::of(&reports.iter().map(|r| r.onmi).collect::<Vec<_>>()),
        f1: Stat::of(&reports.iter().map(|r| r.f1).collect::<Vec<_>>()),
        omega: Stat::of(&reports.iter().map(|r| r.omega).collect::<Vec<_>>()),
    }
}

/// Each feature receives the label of a uniformly drawn feature, i.e. labels
/// are i.i.d. from the empirical class distribution.
pub fn random_baseline(truth: &[usize], trials: usize, seed: u64) -> Result<BaselineReport> {
    if trials == 0 || truth.is_empty() {
        return Err(Error::InvalidArgument("baseline needs trials >= 1 and labels".into()));
    }
    let n = truth.len();
    let reports: Vec<MetricReport> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[tags::BASELINE, t as u64]);
            let pred: Vec<usize> = (0..n).map(|_| truth[rng.random_range(0..n)]).collect();
            evaluate_partition(&pred, truth)
        })
        .collect::<Result<_>>()?;
    Ok(collect_stats(&reports, trials))
}

/// Random covers: each feature copies the membership count of a uniformly
/// drawn feature and joins that many distinct sets, chosen with probability
/// proportional to the true set sizes.
pub fn random_cover_baseline(truth: &[Vec<usize>], n: usize, trials: usize, seed: u64) -> Result<BaselineReport> {
    if trials == 0 || truth.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("baseline needs trials >= 1 and a nonempty cover".into()));
    }
    let mut counts = vec![0usize; n];
    for s in truth {
        for &i in s {
            if i >= n {
                return Err(Error::DimensionMismatch(format!("feature {i} outside universe of {n}")));
            }
            counts[i] += 1;
        }
    }
    let sizes: Vec<f64> = truth.iter().map(|s| s.len() as f64).collect();
    let k = truth.len();
    let reports: Vec<MetricReport> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[tags::BASELINE, 1 << 32 | t as u64]);
            let mut pred = vec![Vec::new(); k];
            for i in 0..n {
                let m = counts[rng.random_range(0..n)].clamp(1, k);
                let chosen = sample_weighted(&mut rng, k, |c| sizes[c], m)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for c in chosen.iter() {
                    pred[c].push(i);
                }
            }
            let pred: Vec<Vec<usize>> = pred.into_iter().filter(|s| !s.is_empty()).collect();
            evaluate_cover(&pred, truth, n)
        })
        .collect::<Result<_>>()?;
    Ok(collect_stats(&reports, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Entropy-table route: `H = I/H(class)`, `C = I/H(cluster)`.
    fn oracle_v(pred: &[usize], truth: &[usize]) -> (f64, f64) {
        let kp = pred.iter().max().unwrap() + 1;
        let kt = truth.iter().max().unwrap() + 1;
        let n = pred.len() as f64;
        let mut table = vec![vec![0.0; kt]; kp];
        for (&p, &t) in pred.iter().zip(truth) {
            table[p][t] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..kt).map(|t| table.iter().map(|r| r[t]).sum()).collect();
        let mut mi = 0.0;
        for p in 0..kp {
            for t in 0..kt {
                let v = table[p][t];
                if v > 0.0 {
                    mi += v / n * (n * v / (rows[p] * cols[t])).ln();
                }
            }
        }
        let ent = |xs: &[f64]| -> f64 { xs.iter().filter(|&&v| v > 0.0).map(|v| -(v / n) * (v / n).ln()).sum() };
        let (hc, hk) = (ent(&cols), ent(&rows));
        (if hc == 0.0 { 1.0 } else { mi / hc }, if hk == 0.0 { 1.0 } else { mi / hk })
    }

    #[test]
    fn v_measure_cases() {
        let t = [0, 0, 1, 1, 2, 2];
        let v = v_measure(&t, &t).unwrap();
        assert_eq!((v.homogeneity, v.completeness, v.nmi), (1.0, 1.0, 1.0));
        let truth: Vec<usize> = (0..20).map(|i| i % 5).collect();
        let v = v_measure(&[0; 20], &truth).unwrap();
        assert_eq!((v.homogeneity, v.completeness, v.nmi), (0.0, 1.0, 0.0));
        let pred = [0, 0, 1, 1, 1, 2, 2, 0, 1, 2, 2, 2, 0, 3, 3, 3, 1, 0, 2, 3];
        let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 1, 2, 0, 1, 2, 0, 1, 1, 1];
        let v = v_measure(&pred, &truth).unwrap();
        let (h, c) = oracle_v(&pred, &truth);
        assert!((v.homogeneity - h).abs() < 1e-12);
        assert!((v.completeness - c).abs() < 1e-12);
        assert!((v.nmi - 2.0 * h * c / (h + c)).abs() < 1e-12);
        assert!(v_measure(&[0], &[0, 1]).is_err());
    }

    /// Step-by-step transcription of the overlapping NMI on binary rows.
    fn onmi_oracle(x: &[[u8; 8]], y: &[[u8; 8]]) -> f64 {
        let n = 8.0f64;
        let h = |w: f64| if w == 0.0 { 0.0 } else { -w * (w / n).log2() };
        let ent = |s: &[u8; 8]| {
            let k = s.iter().filter(|&&v| v == 1).count() as f64;
            h(k) + h(n - k)
        };
        let cond = |a: &[u8; 8], b: &[u8; 8]| {
            let mut best = ent(a);
            for_each_pair(a, b, &mut |c00, c01, c10, c11| {
                if h(c00) + h(c11) >= h(c01) + h(c10) {
                    let v = h(c00) + h(c01) + h(c10) + h(c11) - h(c01 + c11) - h(c00 + c10);
                    if v < best {
                        best = v;
                    }
                }
            });
            best
        };
        fn for_each_pair(a: &[u8; 8], b: &[u8; 8], f: &mut dyn FnMut(f64, f64, f64, f64)) {
            let mut c = [0.0; 4];
            for i in 0..8 {
                c[(a[i] * 2 + b[i]) as usize] += 1.0;
            }
            f(c[0], c[1], c[2], c[3]);
        }
        let hxy: f64 = x.iter().map(|a| y.iter().map(|b| cond(a, b)).fold(f64::INFINITY, f64::min)).sum();
        let hyx: f64 = y.iter().map(|b| x.iter().map(|a| cond(b, a)).fold(f64::INFINITY, f64::min)).sum();
        let hx: f64 = x.iter().map(ent).sum();
        let hy: f64 = y.iter().map(ent).sum();
        0.5 * (hx - hxy + hy - hyx) / hx.max(hy)
    }

    fn to_sets(rows: &[[u8; 8]]) -> Vec<Vec<usize>> {
        rows.iter().map(|r| (0..8).filter(|&i| r[i] == 1).collect()).collect()
    }

    #[test]
    fn onmi_cases() {
        let c = vec![vec![0, 1, 2], vec![2, 3, 4], vec![5, 6, 7]];
        assert!((onmi(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        let a = vec![vec![0, 1], vec![2, 3]];
        let b = vec![vec![2, 3], vec![0, 1]];
        assert!((onmi(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let x = [[1, 1, 1, 0, 0, 0, 0, 0], [0, 0, 1, 1, 1, 0, 0, 0], [0, 0, 0, 0, 0, 1, 1, 1]];
        let y = [[1, 1, 0, 0, 0, 0, 0, 0], [0, 0, 1, 1, 1, 1, 0, 0], [0, 0, 0, 0, 1, 1, 1, 1]];
        let v = onmi(&to_sets(&x), &to_sets(&y)).unwrap();
        assert!((v - onmi_oracle(&x, &y)).abs() < 1e-12);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn f1_cases() {
        let c = vec![vec![0, 1], vec![2, 3, 4]];
        assert_eq!(overlap_f1(&c, &c).unwrap(), 1.0);
        let (m, n) = (4usize, 5usize);
        let truth: Vec<Vec<usize>> = (0..m).map(|g| (g * n..(g + 1) * n).collect()).collect();
        let all = vec![(0..m * n).collect::<Vec<_>>()];
        let per = 2.0 * n as f64 / (n + m * n) as f64;
        assert!((overlap_f1(&all, &truth).unwrap() - per).abs() < 1e-12);
        assert_eq!(overlap_f1(&[vec![0, 1]], &[vec![2, 3]]).unwrap(), 0.0);
    }

    #[test]
    fn omega_cases() {
        let c = vec![vec![0, 1, 2], vec![2, 3]];
        assert!((omega_index(&c, &c, 4).unwrap() - 1.0).abs() < 1e-12);
        // Pair-enumeration oracle on 4 features.
        let x = vec![vec![0, 1], vec![1, 2, 3]];
        let y = vec![vec![0, 1, 2], vec![2, 3]];
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let t = |cov: &Vec<Vec<usize>>, (i, j): (usize, usize)| cov.iter().filter(|s| s.contains(&i) && s.contains(&j)).count();
        let tx: Vec<usize> = pairs.iter().map(|&p| t(&x, p)).collect();
        let ty: Vec<usize> = pairs.iter().map(|&p| t(&y, p)).collect();
        let obs = tx.iter().zip(&ty).filter(|(a, b)| a == b).count() as f64 / 6.0;
        let mut exp = 0.0;
        for k in 0..3 {
            let a = tx.iter().filter(|&&v| v == k).count() as f64;
            let b = ty.iter().filter(|&&v| v == k).count() as f64;
            exp += a * b / 36.0;
        }
        let oracle = (obs - exp) / (1.0 - exp);
        assert!((omega_index(&x, &y, 4).unwrap() - oracle).abs() < 1e-12);
        assert!(omega_index(&x, &y, 1).is_err());
    }

    #[test]
    fn misclassification_cases() {
        let t = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let m = misclassification(&t, &t).unwrap();
        assert_eq!(m.ratios, vec![0.0, 0.0]);
        let moved = vec![vec![0, 1], vec![2, 3, 4, 5]];
        let m = misclassification(&moved, &t).unwrap();
        assert_eq!(m.ratios, vec![1.0 / 3.0, 1.0 / 3.0]);
        // Enumeration over both matchings confirms the optimum.
        let one = vec![(0..6).collect::<Vec<_>>()];
        let m = misclassification(&one, &t).unwrap();
        assert_eq!(m.matching.iter().filter(|x| x.is_none()).count(), 1);
        assert!(m.ratios.contains(&1.0));
        assert!(misclassification(&[vec![0, 1]], &[vec![0, 2]]).is_err());
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = substream(1, &[]);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let cost: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-20..20)).collect()).collect();
            let a = hungarian(&cost);
            let got: i64 = (0..n).map(|i| cost[i][a[i]]).sum();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = i64::MAX;
            permute(&mut perm, 0, &mut |p| best = best.min((0..n).map(|i| cost[i][p[i]]).sum()));
            assert_eq!(got, best);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn baseline_cases() {
        let truth: Vec<usize> = (0..60).map(|i| i % 5).collect();
        let a = random_baseline(&truth, 20, 3).unwrap();
        let b = random_baseline(&truth, 20, 3).unwrap();
        assert_eq!(a, b);
        let one = random_baseline(&[0; 12], 10, 1).unwrap();
        assert_eq!(one.nmi.unwrap().mean, 1.0);
        assert_eq!(one.nmi.unwrap().std, 0.0);
        let sets = vec![vec![0, 1, 2, 3], vec![3, 4, 5], vec![6, 7, 8, 9]];
        let c = random_cover_baseline(&sets, 10, 10, 4).unwrap();
        assert!(c.onmi.mean >= 0.0 && c.onmi.mean <= 1.0);
        assert!(c.nmi.is_none());
    }

    #[test]
    fn report_csv_shape() {
        let r = evaluate_partition(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.csv_row().split(',').count(), MetricReport::CSV_HEADER.split(',').count());
        assert_eq!(r.nmi, Some(1.0));
        assert_eq!(r.omega, 1.0);
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (2usize..30).prop_flat_map(|n| (proptest::collection::vec(0usize..5, n), proptest::collection::vec(0usize..4, n)))
    }

    proptest! {
        #[test]
        fn partition_metrics_permutation_invariant((p, t) in labels_strategy(), shift in 1usize..5) {
            let pp: Vec<usize> = p.iter().map(|&l| (l + shift) % 5).collect();
            let tp: Vec<usize> = t.iter().map(|&l| (l + 2 * shift) % 4).collect();
            let a = evaluate_partition(&p, &t).unwrap();
            let b = evaluate_partition(&pp, &tp).unwrap();
            prop_assert!((a.nmi.unwrap() - b.nmi.unwrap()).abs() < 1e-12);
            prop_assert!((a.onmi - b.onmi).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            prop_assert!((a.omega - b.omega).abs() < 1e-12);
            prop_assert!((a.misclass_max - b.misclass_max).abs() < 1e-12);
            prop_assert!((a.misclass_min - b.misclass_min).abs() < 1e-12);
        }

        #[test]
        fn v_measure_symmetry((p, t) in labels_strategy()) {
            let a = v_measure(&p, &t).unwrap();
            let b = v_measure(&t, &p).unwrap();
            prop_assert!((a.nmi - b.nmi).abs() < 1e-12);
            prop_assert!((a.homogeneity - b.completeness).abs() < 1e-12);
            prop_assert!((a.completeness - b.homogeneity).abs() < 1e-12);
            for v in [a.homogeneity, a.completeness, a.nmi] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn misclassification_order_invariant((p, t) in labels_strategy()) {
            let ps = labels_to_sets(&p);
            let ts = labels_to_sets(&t);
            let mut pr = ps.clone();
            pr.reverse();
            let a = misclassification(&ps, &ts).unwrap();
            let b = misclassification(&pr, &ts).unwrap();
            prop_assert_eq!(a.ratios, b.ratios);
        }

        #[test]
        fn omega_of_self_is_one(sets in proptest::collection::vec(proptest::collection::vec(0usize..12, 1..6), 1..5)) {
            prop_assert!((omega_index(&sets, &sets, 12).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
