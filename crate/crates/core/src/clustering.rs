//! From a self-expression matrix to feature clusters.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sorted_eigen, sorted_eigenvalues, MAX_DENSE_DIM};
use crate::rng::{substream, tags};
use crate::structure::canonical_labels;

pub const DEFAULT_RESTARTS: usize = 100;
pub const DEFAULT_KMEANS_ITER: usize = 300;
pub const DEFAULT_TIE_TOL: f64 = 0.2;
pub const NMF_FLOOR: f64 = 1e-12;
pub const ZERO_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityGraph {
    pub a: DMatrix<f64>,
    pub degrees: Vec<f64>,
    pub components: usize,
}

impl AffinityGraph {
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!("affinity is {}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("affinity entries must be finite and nonnegative".into()));
        }
        let degrees = a.row_iter().map(|r| r.sum()).collect();
        let components = component_labels(&a).into_iter().max().map_or(0, |m| m + 1);
        Ok(Self { a, degrees, components })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// Connected components of the support graph of `a`, canonically labelled.
pub fn component_labels(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    canonical_labels(&roots)
}

/// `A = ½(|C| + |C|ᵀ)` with zero diagonal.
pub fn affinity_from_c(c: &DMatrix<f64>) -> Result<AffinityGraph> {
    if c.nrows() != c.ncols() {
        return Err(Error::DimensionMismatch(format!("C is {}x{}", c.nrows(), c.ncols())));
    }
    let abs = c.abs();
    let mut a = (&abs + abs.transpose()) * 0.5;
    a.fill_diagonal(0.0);
    AffinityGraph::from_matrix(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianVariant {
    #[default]
    Unnormalized,
    Symmetric,
}

/// `D − A`, or `I − D^{-1/2} A D^{-1/2}` with identity rows for isolated nodes.
pub fn laplacian(g: &AffinityGraph, variant: LaplacianVariant) -> DMatrix<f64> {
    let n = g.n();
    match variant {
        LaplacianVariant::Unnormalized => {
            let mut l = -g.a.clone();
            for i in 0..n {
                l[(i, i)] += g.degrees[i];
            }
            l
        }
        LaplacianVariant::Symmetric => {
            let inv: Vec<f64> = g
                .degrees
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            let mut l = DMatrix::from_fn(n, n, |i, j| -g.a[(i, j)] * inv[i] * inv[j]);
            for i in 0..n {
                l[(i, i)] += 1.0;
            }
            l
        }
    }
}

pub fn zero_eigen_multiplicity(l: &DMatrix<f64>, tol: f64) -> usize {
    sorted_eigenvalues(l).iter().filter(|v| v.abs() < tol).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigengap {
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub gaps: Vec<f64>,
    pub degenerate: bool,
}

impl Eigengap {
    /// The gap at the selected `k`.
    pub fn selected_gap(&self) -> f64 {
        self.gaps.get(self.k.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, crate::io::fmt_f64(*v)));
        }
        out
    }
}

/// Largest consecutive gap of the ascending spectrum, first index on ties.
pub fn eigengap_k(l: &DMatrix<f64>) -> Result<Eigengap> {
    eigengap_k_bounded(l, l.nrows().saturating_sub(1))
}

/// As [`eigengap_k`] with the search restricted to `k ≤ max_k`.
pub fn eigengap_k_bounded(l: &DMatrix<f64>, max_k: usize) -> Result<Eigengap> {
    if l.nrows() != l.ncols() {
        return Err(Error::DimensionMismatch(format!("Laplacian is {}x{}", l.nrows(), l.ncols())));
    }
    if l.nrows() > MAX_DENSE_DIM {
        return Err(Error::DeskScale(format!("dense eigensolver limited to {MAX_DENSE_DIM} features")));
    }
    let eigenvalues = sorted_eigenvalues(l);
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let spread = eigenvalues.last().copied().unwrap_or(0.0) - eigenvalues.first().copied().unwrap_or(0.0);
    if gaps.is_empty() || spread <= 1e-12 * scale {
        return Ok(Eigengap {
            k: 1,
            eigenvalues,
            gaps,
            degenerate: true,
        });
    }
    let limit = max_k.clamp(1, gaps.len());
    let mut k = 1;
    for i in 1..limit {
        if gaps[i] > gaps[k - 1] {
            k = i + 1;
        }
    }
    Ok(Eigengap {
        k,
        eigenvalues,
        gaps,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    Disjoint,
    Overlapping,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub eigenvalues: Vec<f64>,
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Features whose assignment needed a fallback (e.g. all-zero rows).
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub mode: ClusterMode,
    pub k: usize,
    /// Clusters of each feature, ascending.
    pub assignments: Vec<Vec<usize>>,
    pub diagnostics: ClusterDiagnostics,
}

impl ClusterResult {
    pub fn from_labels(labels: &[usize], k: usize, diagnostics: ClusterDiagnostics) -> Self {
        Self {
            mode: ClusterMode::Disjoint,
            k,
            assignments: labels.iter().map(|&l| vec![l]).collect(),
            diagnostics,
        }
    }

    /// Per-feature labels when every feature has exactly one cluster.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.assignments
            .iter()
            .map(|a| if a.len() == 1 { Some(a[0]) } else { None })
            .collect()
    }

    /// Members of each cluster; clusters that ended up empty are dropped.
    pub fn sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.k];
        for (i, a) in self.assignments.iter().enumerate() {
            for &c in a {
                sets[c].push(i);
            }
        }
        sets.into_iter().filter(|s| !s.is_empty()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn farthest_point_seeds(pts: &[Vec<f64>], k: usize, first: usize) -> Vec<Vec<f64>> {
    let mut centers = vec![pts[first].clone()];
    let mut dmin: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        for i in 1..pts.len() {
            if dmin[i] > dmin[best] {
                best = i;
            }
        }
        let c = pts[best].clone();
        for (d, p) in dmin.iter_mut().zip(pts) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(pts: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64, usize, bool) {
    let k = centers.len();
    let dim = pts[0].len();
    let mut labels = vec![usize::MAX; pts.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let mut best = 0;
            let mut bd = sq_dist(p, &centers[0]);
            for (c, ctr) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, ctr);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in pts.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..pts.len())
                    .max_by(|&a, &b| {
                        sq_dist(&pts[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&pts[b], &centers[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centers[c] = pts[far].clone();
            }
        }
    }
    let inertia = pts.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (labels, inertia, iterations, converged)
}

/// Lloyd's algorithm on the rows of `points`; each restart seeds from a random
/// first point and then farthest points. The lowest inertia wins, lowest
/// restart index on ties.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    let pts = rows(points);
    let restarts = restarts.max(1);
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, &[tags::CLUSTER, r as u64]);
            let first = rng.random_range(0..n);
            let (labels, inertia, iterations, converged) = lloyd(&pts, farthest_point_seeds(&pts, k, first), max_iter);
            KMeansResult {
                labels,
                inertia,
                iterations,
                converged,
                restart: r,
            }
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");
    Ok(KMeansResult {
        labels: canonical_labels(&best.labels),
        ..best
    })
}

/// Bottom-`k` Laplacian eigenvectors as row embeddings, clustered by k-means.
/// Rows are unit-normalized for the symmetric variant.
pub fn spectral_cluster(g: &AffinityGraph, k: usize, variant: LaplacianVariant, seed: u64) -> Result<ClusterResult> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if n > MAX_DENSE_DIM {
        return Err(Error::DeskScale(format!("dense eigensolver limited to {MAX_DENSE_DIM} features")));
    }
    let l = laplacian(g, variant);
    let (vals, vecs) = sorted_eigen(&l);
    let mut emb = vecs.columns(0, k).clone_owned();
    if variant == LaplacianVariant::Symmetric {
        for mut r in emb.row_iter_mut() {
            let nr = r.norm();
            if nr > 0.0 {
                r /= nr;
            }
        }
    }
    let km = kmeans(&emb, k, DEFAULT_RESTARTS, DEFAULT_KMEANS_ITER, seed)?;
    Ok(ClusterResult::from_labels(
        &km.labels,
        k,
        ClusterDiagnostics {
            eigenvalues: vals.iter().copied().collect(),
            objective: vec![km.inertia],
            iterations: km.iterations,
            converged: km.converged,
            flagged: Vec::new(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymNmfResult {
    pub y: DMatrix<f64>,
    /// `‖A − YYᵀ‖²_F` at the start and after each iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn symnmf_objective(a: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (a - y * y.transpose()).norm_squared()
}

/// Random start `U(0,1)·√(mean(A)/k)`, then [`symnmf_from`].
pub fn symnmf(a: &DMatrix<f64>, k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<SymNmfResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = a.nrows();
    let mean = if n == 0 { 0.0 } else { a.sum() / (n * n) as f64 };
    let scale = (mean.max(0.0) / k as f64).sqrt();
    let mut rng = substream(seed, &[tags::CLUSTER, u64::MAX]);
    let y0 = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * scale);
    symnmf_from(a, y0, max_iter, tol)
}

/// Multiplicative updates `Y ← Y ∘ (AY) / (YYᵀY)`. A step that would raise
/// the objective is replaced by the damped update
/// `Y ← Y ∘ (1 − β + β (AY)/(YYᵀY))` with β halved until it descends, so the
/// objective sequence never increases.
pub fn symnmf_from(a: &DMatrix<f64>, y0: DMatrix<f64>, max_iter: usize, tol: f64) -> Result<SymNmfResult> {
    let n = a.nrows();
    if a.ncols() != n || y0.nrows() != n {
        return Err(Error::DimensionMismatch("SymNMF shapes disagree".into()));
    }
    if a.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("SymNMF needs a finite nonnegative matrix".into()));
    }
    if y0.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("SymNMF start must be nonnegative".into()));
    }
    let mut y = y0;
    let mut obj = symnmf_objective(a, &y);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let num = a * &y;
        let den = &y * (y.transpose() * &y);
        let ratio = num.zip_map(&den, |n, d| n / d.max(NMF_FLOOR));
        let mut beta = 1.0;
        let mut accepted = None;
        while beta > 1e-6 {
            let cand = y.zip_map(&ratio, |v, r| v * (1.0 - beta + beta * r));
            let co = symnmf_objective(a, &cand);
            if co <= obj {
                accepted = Some((cand, co));
                break;
            }
            beta *= 0.5;
        }
        let Some((ny, no)) = accepted else {
            converged = true;
            trace.push(obj);
            break;
        };
        let rel = (obj - no) / obj.max(f64::MIN_POSITIVE);
        y = ny;
        obj = no;
        trace.push(obj);
        if obj == 0.0 || rel < tol {
            converged = true;
            break;
        }
    }
    Ok(SymNmfResult {
        y,
        objective: trace,
        iterations,
        converged,
    })
}

/// Simplex-normalizes each row and assigns every cluster within `tie_tol` of
/// the row maximum. All-zero rows copy the assignment of the nearest nonzero
/// row and are flagged.
pub fn round_memberships(y: &DMatrix<f64>, tie_tol: f64) -> Result<ClusterResult> {
    let (n, k) = y.shape();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("membership rows".into()));
    }
    let mut assignments: Vec<Option<Vec<usize>>> = Vec::with_capacity(n);
    for r in y.row_iter() {
        let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let s: f64 = abs.iter().sum();
        if s <= 0.0 {
            assignments.push(None);
            continue;
        }
        let p: Vec<f64> = abs.iter().map(|v| v / s).collect();
        let mx = p.iter().copied().fold(0.0, f64::max);
        assignments.push(Some((0..k).filter(|&c| p[c] >= mx - tie_tol).collect()));
    }
    let mut flagged = Vec::new();
    let nonzero: Vec<usize> = (0..n).filter(|&i| assignments[i].is_some()).collect();
    let resolved: Vec<Vec<usize>> = (0..n)
        .map(|i| match &assignments[i] {
            Some(a) => a.clone(),
            None => {
                flagged.push(i);
                nonzero
                    .iter()
                    .min_by(|&&a, &&b| y.row(a).norm().total_cmp(&y.row(b).norm()).then(a.cmp(&b)))
                    .map(|&j| assignments[j].clone().expect("nonzero row"))
                    .unwrap_or_else(|| vec![0])
            }
        })
        .collect();
    Ok(ClusterResult {
        mode: ClusterMode::Overlapping,
        k,
        assignments: resolved,
        diagnostics: ClusterDiagnostics {
            flagged,
            converged: true,
            ..Default::default()
        },
    })
}

/// How SAAC turns prototype distances into memberships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaacRule {
    /// Nearest prototype, plus every prototype within `(1 + tie_tol)` of the
    /// nearest distance.
    #[default]
    Nearest,
    /// Exact minimiser of `‖Û_i − zX‖` over nonzero binary `z`.
    Additive,
}

pub const MAX_ADDITIVE_K: usize = 16;

fn assign_row(u: &[f64], x: &DMatrix<f64>, rule: SaacRule, tie_tol: f64) -> Vec<usize> {
    let k = x.nrows();
    let proto = |c: usize| -> Vec<f64> { x.row(c).iter().copied().collect() };
    match rule {
        SaacRule::Nearest => {
            let d: Vec<f64> = (0..k).map(|c| sq_dist(u, &proto(c)).sqrt()).collect();
            let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
            (0..k).filter(|&c| d[c] <= dmin * (1.0 + tie_tol)).collect()
        }
        SaacRule::Additive => {
            let mut best = (f64::INFINITY, 0usize);
            for mask in 1usize..(1 << k) {
                let mut v = vec![0.0; u.len()];
                for c in 0..k {
                    if mask & (1 << c) != 0 {
                        for (vi, xi) in v.iter_mut().zip(x.row(c).iter()) {
                            *vi += xi;
                        }
                    }
                }
                let d = sq_dist(u, &v);
                let better = d < best.0 || (d == best.0 && mask.count_ones() < best.1.count_ones());
                if better {
                    best = (d, mask);
                }
            }
            (0..k).filter(|&c| best.1 & (1 << c) != 0).collect()
        }
    }
}

/// Spectral algorithm with additive clustering using the default rule.
pub fn saac(a: &AffinityGraph, k: usize, max_iter: usize, tie_tol: f64, seed: u64) -> Result<ClusterResult> {
    saac_with(a, k, max_iter, tie_tol, SaacRule::default(), seed)
}

/// Top-`k` eigenvectors `Û` of `A`, initialised by k-means on their rows, then
/// alternating `X = (ZᵀZ)⁻¹ZᵀÛ` with per-row membership updates until `Z`
/// stops changing.
pub fn saac_with(a: &AffinityGraph, k: usize, max_iter: usize, tie_tol: f64, rule: SaacRule, seed: u64) -> Result<ClusterResult> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if rule == SaacRule::Additive && k > MAX_ADDITIVE_K {
        return Err(Error::DeskScale(format!("additive assignment enumerates 2^k memberships; k = {k}")));
    }
    let (vals, vecs) = sorted_eigen(&a.a);
    let u = vecs.columns(n - k, k).clone_owned();
    let km = kmeans(&u, k, 20, DEFAULT_KMEANS_ITER, seed)?;
    let mut z: Vec<Vec<usize>> = km.labels.iter().map(|&l| vec![l]).collect();
    let urows = rows(&u);
    let mut iterations = 0;
    let mut converged = false;
    let mut objective = Vec::new();
    while iterations < max_iter {
        iterations += 1;
        let zm = DMatrix::from_fn(n, k, |i, c| if z[i].contains(&c) { 1.0 } else { 0.0 });
        let ztz = zm.transpose() * &zm;
        let ztu = zm.transpose() * &u;
        let x = match ztz.clone().cholesky() {
            Some(ch) => ch.solve(&ztu),
            None => (ztz + DMatrix::identity(k, k) * 1e-8)
                .cholesky()
                .map(|ch| ch.solve(&ztu))
                .ok_or_else(|| Error::InvalidArgument("prototype system is singular".into()))?,
        };
        objective.push((&u - &zm * &x).norm_squared());
        let nz: Vec<Vec<usize>> = urows.iter().map(|r| assign_row(r, &x, rule, tie_tol)).collect();
        if nz == z {
            converged = true;
            break;
        }
        z = nz;
    }
    Ok(ClusterResult {
        mode: ClusterMode::Overlapping,
        k,
        assignments: z,
        diagnostics: ClusterDiagnostics {
            eigenvalues: vals.iter().copied().collect(),
            objective,
            iterations,
            converged,
            flagged: Vec::new(),
        },
    })
}
