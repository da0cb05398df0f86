//! Sparse bipartite latent → feature structure and its ground-truth clusterings.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, tags};

pub const DEFAULT_MIN_PER_SUBSPACE: usize = 2;
pub const DEFAULT_MAX_EXTRA_PARENTS: usize = 3;

/// Binary incidence matrix Γ (rows = observed features, columns = latents).
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralGraph {
    d_x: usize,
    d_z: usize,
    gamma: Vec<u8>,
    pub subspace_sizes: Vec<usize>,
    pub seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub d_x: usize,
    pub m: usize,
    pub min_per_subspace: usize,
    pub overlap_alpha: f64,
    pub max_extra_parents: usize,
    pub seed: u64,
}

impl StructureParams {
    pub fn new(d_x: usize, m: usize, seed: u64) -> Self {
        Self {
            d_x,
            m,
            min_per_subspace: DEFAULT_MIN_PER_SUBSPACE,
            overlap_alpha: 0.0,
            max_extra_parents: DEFAULT_MAX_EXTRA_PARENTS,
            seed,
        }
    }

    pub fn with_overlap(mut self, alpha: f64) -> Self {
        self.overlap_alpha = alpha;
        self
    }

    pub fn with_min_per_subspace(mut self, min: usize) -> Self {
        self.min_per_subspace = min;
        self
    }
}

/// Disjoint labels and overlapping children sets derived from Γ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub disjoint: Vec<usize>,
    pub overlap: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    d_x: usize,
    d_z: usize,
    seed: u64,
    alpha: f64,
    rows: Vec<Vec<u8>>,
    #[serde(default)]
    subspace_sizes: Vec<usize>,
}

impl StructuralGraph {
    /// Builds a graph from explicit 0/1 rows, rejecting orphan features.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d_x = rows.len();
        if d_x == 0 {
            return Err(Error::InvalidArgument("structural matrix has no rows".into()));
        }
        let d_z = rows[0].len();
        let mut gamma = Vec::with_capacity(d_x * d_z);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d_z {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {d_z}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidArgument(format!("row {i} is not binary")));
            }
            gamma.extend_from_slice(row);
        }
        let g = Self {
            d_x,
            d_z,
            gamma,
            subspace_sizes: Vec::new(),
            seed: 0,
            alpha: 0.0,
        };
        g.validate()?;
        let sizes = (0..d_z).map(|k| g.children(k).len()).collect();
        Ok(Self {
            subspace_sizes: sizes,
            ..g
        })
    }

    /// Every feature must have at least one parent.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.d_x {
            if self.row(i).iter().all(|&v| v == 0) {
                return Err(Error::OrphanFeature { feature: i });
            }
        }
        Ok(())
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.gamma[i * self.d_z + k] != 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.gamma[i * self.d_z..(i + 1) * self.d_z]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.d_x).map(|i| self.row(i).to_vec()).collect()
    }

    /// Pa(i): latents with a nonzero entry in row `i`.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.d_z).filter(|&k| self.get(i, k)).collect()
    }

    /// Ch(k): features with a nonzero entry in column `k`.
    pub fn children(&self, k: usize) -> Vec<usize> {
        (0..self.d_x).filter(|&i| self.get(i, k)).collect()
    }

    /// Same graph with rows reordered so that new row `r` is old row `perm[r]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut gamma = Vec::with_capacity(self.gamma.len());
        for &src in perm {
            gamma.extend_from_slice(self.row(src));
        }
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            disjoint: derive_disjoint_clusters(self),
            overlap: derive_overlapping_clusters(self),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.d_x {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let j = GraphJson {
            d_x: self.d_x,
            d_z: self.d_z,
            seed: self.seed,
            alpha: self.alpha,
            rows: self.rows(),
            subspace_sizes: self.subspace_sizes.clone(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: GraphJson = serde_json::from_str(s)?;
        let mut g = Self::from_rows(&j.rows)?;
        if g.d_x != j.d_x || g.d_z != j.d_z {
            return Err(Error::DimensionMismatch(format!(
                "header says {}x{}, rows are {}x{}",
                j.d_x, j.d_z, g.d_x, g.d_z
            )));
        }
        g.seed = j.seed;
        g.alpha = j.alpha;
        if !j.subspace_sizes.is_empty() {
            g.subspace_sizes = j.subspace_sizes;
        }
        Ok(g)
    }
}

/// Subspace sizes from a Dirichlet draw: floor of the leftover share, the
/// remainder handed out one at a time starting at index `1 mod M`, then the
/// per-subspace minimum added.
pub fn sizes_from_draw(raw: &[f64], d_x: usize, min_per_subspace: usize) -> Vec<usize> {
    let m = raw.len();
    let leftover = d_x - m * min_per_subspace;
    let mut n: Vec<usize> = raw
        .iter()
        .map(|&r| (r * leftover as f64).floor() as usize)
        .collect();
    let assigned: usize = n.iter().sum();
    let diff = leftover.saturating_sub(assigned);
    for i in 1..=diff {
        n[i % m] += 1;
    }
    for v in n.iter_mut() {
        *v += min_per_subspace;
    }
    n
}

/// Flat Dirichlet(1, …, 1) draw via normalized unit exponentials.
pub fn dirichlet_ones(m: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Generates Γ: Dirichlet-sized single-parent blocks with a random row
/// permutation, optionally augmented with extra parents when
/// `overlap_alpha > 0` (each other latent joins with probability
/// `alpha / (d_z − 1)`, at most `max_extra_parents` times per feature).
pub fn generate_structure(p: &StructureParams) -> Result<StructuralGraph> {
    if p.m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if p.m > p.d_x {
        return Err(Error::InvalidArgument(format!(
            "M = {} exceeds d_x = {}",
            p.m, p.d_x
        )));
    }
    if p.d_x < p.m * p.min_per_subspace {
        return Err(Error::InfeasibleSizes {
            d_x: p.d_x,
            m: p.m,
            min_per_subspace: p.min_per_subspace,
        });
    }
    if !(p.overlap_alpha >= 0.0 && p.overlap_alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "overlap alpha must be finite and nonnegative, got {}",
            p.overlap_alpha
        )));
    }

    let mut rng = substream(p.seed, &[tags::STRUCTURE]);
    let raw = dirichlet_ones(p.m, &mut rng);
    let sizes = sizes_from_draw(&raw, p.d_x, p.min_per_subspace);

    let d_z = p.m;
    let mut gamma = vec![0u8; p.d_x * d_z];
    let mut i = 0;
    for (m, &n_m) in sizes.iter().enumerate() {
        for _ in 0..n_m {
            gamma[i * d_z + m] = 1;
            i += 1;
        }
    }
    let mut perm: Vec<usize> = (0..p.d_x).collect();
    perm.shuffle(&mut rng);
    let mut permuted = vec![0u8; gamma.len()];
    for (dst, &src) in perm.iter().enumerate() {
        permuted[dst * d_z..(dst + 1) * d_z].copy_from_slice(&gamma[src * d_z..(src + 1) * d_z]);
    }

    if p.overlap_alpha > 0.0 && d_z > 1 {
        let rate = (p.overlap_alpha / (d_z - 1) as f64).min(1.0);
        let mut orng = substream(p.seed, &[tags::OVERLAP]);
        for row in permuted.chunks_mut(d_z) {
            let mut extra = 0;
            for v in row.iter_mut() {
                if *v == 1 {
                    continue;
                }
                let hit = orng.random::<f64>() < rate;
                if hit && extra < p.max_extra_parents {
                    *v = 1;
                    extra += 1;
                }
            }
        }
    }

    Ok(StructuralGraph {
        d_x: p.d_x,
        d_z,
        gamma: permuted,
        subspace_sizes: sizes,
        seed: p.seed,
        alpha: p.overlap_alpha,
    })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the shared-parent feature graph, labelled in
/// order of first feature occurrence.
pub fn derive_disjoint_clusters(g: &StructuralGraph) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..g.d_x).collect();
    for k in 0..g.d_z {
        let ch = g.children(k);
        if let Some((&first, rest)) = ch.split_first() {
            for &i in rest {
                let a = find(&mut parent, first);
                let b = find(&mut parent, i);
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let roots: Vec<usize> = (0..g.d_x).map(|i| find(&mut parent, i)).collect();
    canonical_labels(&roots)
}

/// Children set of every latent, one set per column (possibly empty).
pub fn derive_overlapping_clusters(g: &StructuralGraph) -> Vec<Vec<usize>> {
    (0..g.d_z).map(|k| g.children(k)).collect()
}

/// Relabels arbitrary labels as 0, 1, … in order of first occurrence.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Latent/feature structure of the two-component worked example
    /// (12 features, 5 latents).
    fn figure_graph() -> StructuralGraph {
        let parents: [&[usize]; 12] = [
            &[0],
            &[0],
            &[0, 1],
            &[1],
            &[1, 2],
            &[2],
            &[3],
            &[3],
            &[3, 4],
            &[4],
            &[4],
            &[4],
        ];
        let rows: Vec<Vec<u8>> = parents
            .iter()
            .map(|ps| (0..5).map(|k| ps.contains(&k) as u8).collect())
            .collect();
        StructuralGraph::from_rows(&rows).unwrap()
    }

    fn bfs_components(g: &StructuralGraph) -> Vec<usize> {
        let n = g.d_x();
        let mut adj = vec![vec![]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (0..g.d_z()).any(|k| g.get(i, k) && g.get(j, k)) {
                    adj[i].push(j);
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let mut q = VecDeque::from([s]);
            label[s] = next;
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        q.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    #[test]
    fn base_structure_respects_sizes() {
        let g = generate_structure(&StructureParams::new(12, 5, 3)).unwrap();
        assert_eq!(g.subspace_sizes.iter().sum::<usize>(), 12);
        for k in 0..5 {
            assert!(g.children(k).len() >= 2);
            assert_eq!(g.children(k).len(), g.subspace_sizes[k]);
        }
        for i in 0..12 {
            assert_eq!(g.parents(i).len(), 1);
        }
    }

    #[test]
    fn square_case_is_permuted_identity() {
        let g = generate_structure(&StructureParams::new(6, 6, 11).with_min_per_subspace(1)).unwrap();
        for i in 0..6 {
            assert_eq!(g.parents(i).len(), 1);
        }
        for k in 0..6 {
            assert_eq!(g.children(k).len(), 1);
        }
    }

    #[test]
    fn size_loop_matches_reimplementation() {
        // Independent transcription of the floor/remainder steps on the same draw.
        fn oracle(raw: &[f64], d_x: i64, m: i64) -> Vec<i64> {
            let min = 2;
            let leftover = d_x - m * min;
            let mut n: Vec<i64> = raw.iter().map(|r| (r * leftover as f64) as i64).collect();
            let diff = leftover - n.iter().sum::<i64>();
            let mut i = 1;
            while i <= diff {
                let idx = ((i % m) + 1) - 1;
                n[idx as usize] += 1;
                i += 1;
            }
            n.iter().map(|v| v + min).collect()
        }
        for seed in 0..100u64 {
            let mut rng = substream(seed, &[tags::STRUCTURE]);
            let raw = dirichlet_ones(5, &mut rng);
            let got: Vec<i64> = sizes_from_draw(&raw, 60, 2).iter().map(|&v| v as i64).collect();
            assert_eq!(got, oracle(&raw, 60, 5));
            let g = generate_structure(&StructureParams::new(60, 5, seed)).unwrap();
            let sizes: Vec<i64> = g.subspace_sizes.iter().map(|&v| v as i64).collect();
            assert_eq!(sizes, got);
        }
    }

    #[test]
    fn rejects_infeasible() {
        assert!(matches!(
            generate_structure(&StructureParams::new(9, 5, 0)),
            Err(Error::InfeasibleSizes { .. })
        ));
        assert!(generate_structure(&StructureParams::new(3, 5, 0).with_min_per_subspace(0)).is_err());
        assert!(generate_structure(&StructureParams::new(10, 5, 0).with_overlap(-0.1)).is_err());
    }

    #[test]
    fn figure_clusters() {
        let g = figure_graph();
        assert_eq!(
            derive_disjoint_clusters(&g),
            vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]
        );
        assert_eq!(
            derive_overlapping_clusters(&g),
            vec![
                vec![0, 1, 2],
                vec![2, 3, 4],
                vec![4, 5],
                vec![6, 7, 8],
                vec![8, 9, 10, 11]
            ]
        );
    }

    #[test]
    fn identity_gives_singletons() {
        let rows: Vec<Vec<u8>> = (0..4)
            .map(|i| (0..4).map(|k| (i == k) as u8).collect())
            .collect();
        let g = StructuralGraph::from_rows(&rows).unwrap();
        assert_eq!(derive_disjoint_clusters(&g), vec![0, 1, 2, 3]);
        assert_eq!(
            derive_overlapping_clusters(&g),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );
    }

    #[test]
    fn orphan_row_rejected() {
        let rows = vec![vec![1, 0], vec![0, 0]];
        assert!(matches!(
            StructuralGraph::from_rows(&rows),
            Err(Error::OrphanFeature { feature: 1 })
        ));
    }

    #[test]
    fn json_roundtrip() {
        let g = generate_structure(&StructureParams::new(20, 4, 5).with_overlap(0.5)).unwrap();
        let back = StructuralGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.to_csv().lines().count(), 20);
    }

    #[test]
    fn overlap_adds_parents_up_to_cap() {
        let g = generate_structure(&StructureParams::new(200, 6, 1).with_overlap(5.0)).unwrap();
        assert!((0..200).any(|i| g.parents(i).len() > 1));
        assert!((0..200).all(|i| g.parents(i).len() <= 1 + DEFAULT_MAX_EXTRA_PARENTS));
    }

    #[test]
    fn overlap_rate_monotone_in_alpha() {
        let extra = |alpha: f64| -> usize {
            (0..20)
                .map(|s| {
                    let g = generate_structure(&StructureParams::new(60, 5, s).with_overlap(alpha))
                        .unwrap();
                    (0..60).map(|i| g.parents(i).len() - 1).sum::<usize>()
                })
                .sum()
        };
        assert!(extra(0.2) < extra(0.5));
        assert!(extra(0.5) < extra(1.0));
    }

    proptest! {
        #[test]
        fn components_match_bfs(seed in 0u64..500, alpha in 0.0f64..1.5) {
            let g = generate_structure(&StructureParams::new(40, 8, seed).with_overlap(alpha)).unwrap();
            prop_assert_eq!(derive_disjoint_clusters(&g), canonical_labels(&bfs_components(&g)));
        }

        #[test]
        fn overlap_sets_are_column_supports(seed in 0u64..500, alpha in 0.0f64..2.0) {
            let g = generate_structure(&StructureParams::new(30, 5, seed).with_overlap(alpha)).unwrap();
            let sets = derive_overlapping_clusters(&g);
            for (k, set) in sets.iter().enumerate() {
                let scan: Vec<usize> = (0..30).filter(|&i| g.row(i)[k] == 1).collect();
                prop_assert_eq!(set, &scan);
            }
            let mut covered = [false; 30];
            for s in &sets { for &i in s { covered[i] = true; } }
            prop_assert!(covered.iter().all(|&c| c));
        }

        #[test]
        fn permutation_invariance(seed in 0u64..200, pseed in 0u64..1000) {
            let g = generate_structure(&StructureParams::new(30, 6, seed).with_overlap(0.3)).unwrap();
            let mut perm: Vec<usize> = (0..30).collect();
            perm.shuffle(&mut substream(pseed, &[]));
            let base = derive_disjoint_clusters(&g);
            let permuted = derive_disjoint_clusters(&g.permute_rows(&perm));
            let expected: Vec<usize> = perm.iter().map(|&src| base[src]).collect();
            prop_assert_eq!(permuted, canonical_labels(&expected));
        }

        #[test]
        fn disjoint_hierarchy_without_overlap(seed in 0u64..300) {
            let g = generate_structure(&StructureParams::new(30, 5, seed)).unwrap();
            let gt = g.ground_truth();
            for set in &gt.overlap {
                let labels: std::collections::BTreeSet<usize> = set.iter().map(|&i| gt.disjoint[i]).collect();
                prop_assert!(labels.len() <= 1);
            }
        }

        #[test]
        fn same_seed_same_graph(seed in 0u64..1000, alpha in 0.0f64..1.0) {
            let p = StructureParams::new(25, 4, seed).with_overlap(alpha);
            prop_assert_eq!(generate_structure(&p).unwrap(), generate_structure(&p).unwrap());
        }
    }
}
