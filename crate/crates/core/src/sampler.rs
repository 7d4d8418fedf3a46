//! Wilson's algorithm and Monte-Carlo estimators built on it.
//!
//! The killed continuous-time walk is simulated through its jump chain: from
//! `x` it dies with probability `q / (q + w(x))` and otherwise jumps along an
//! out-edge chosen proportionally to its weight. Branches start from the
//! unvisited vertices in ascending order.
//!
//! Randomness: sample `i` of a run seeded with `s` uses ChaCha8 seeded from
//! `s` on stream `i`, so results do not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::oracle::{self, RootCountLaw};

/// Generator for sample `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A spanning forest oriented towards its roots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootedForest {
    pub q: f64,
    pub absorbing: Vec<usize>,
    /// Successor of each vertex, `None` for roots.
    pub next: Vec<Option<usize>>,
    /// Roots in ascending order.
    pub roots: Vec<usize>,
    /// Block id of each vertex; block `k` is the tree of `roots[k]`.
    pub partition: Vec<usize>,
}

impl RootedForest {
    /// Builds a forest from its successor map, checking acyclicity.
    pub fn from_next(q: f64, absorbing: Vec<usize>, next: Vec<Option<usize>>) -> Result<Self> {
        let n = next.len();
        if let Some(&y) = next.iter().flatten().find(|&&y| y >= n) {
            return Err(Error::VertexOutOfRange { vertex: y, n });
        }
        let roots: Vec<usize> = (0..n).filter(|&x| next[x].is_none()).collect();
        if let Some(&b) = absorbing.iter().find(|&&b| b >= n || next[b].is_some()) {
            return Err(Error::InvalidParameters(format!(
                "absorbing vertex {b} is not a root"
            )));
        }
        let mut block = vec![usize::MAX; n];
        for (k, &r) in roots.iter().enumerate() {
            block[r] = k;
        }
        let mut trail = Vec::new();
        for x in 0..n {
            let mut u = x;
            trail.clear();
            while block[u] == usize::MAX {
                if trail.len() > n {
                    return Err(Error::InvalidParameters("successor map has a cycle".into()));
                }
                trail.push(u);
                u = next[u].expect("non-root has a successor");
            }
            let k = block[u];
            for &t in &trail {
                block[t] = k;
            }
        }
        Ok(RootedForest {
            q,
            absorbing,
            next,
            roots,
            partition: block,
        })
    }

    pub fn n(&self) -> usize {
        self.next.len()
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.next
            .iter()
            .enumerate()
            .filter_map(|(x, s)| s.map(|y| (x, y)))
            .collect()
    }

    pub fn is_root(&self, x: usize) -> bool {
        self.next[x].is_none()
    }

    pub fn root_of(&self, x: usize) -> usize {
        self.roots[self.partition[x]]
    }

    /// Vertex sets of the trees, in the order of `roots`.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.roots.len()];
        for (x, &k) in self.partition.iter().enumerate() {
            out[k].push(x);
        }
        out
    }

    /// Number of edges on the path from `x` to its root.
    pub fn depth(&self, x: usize) -> usize {
        let mut d = 0;
        let mut u = x;
        while let Some(v) = self.next[u] {
            u = v;
            d += 1;
        }
        d
    }
}

fn validate_rate(net: &Network, q: f64, absorbing: &[usize]) -> Result<Vec<usize>> {
    let b = oracle::vertex_set(net, absorbing)?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameters(format!("rate q must be finite and >= 0, got {q}")));
    }
    if q == 0.0 && b.is_empty() {
        return Err(Error::InvalidParameters(
            "need q > 0 or a nonempty absorbing set".into(),
        ));
    }
    Ok(b)
}

/// One step of the jump chain from `x`: `None` if the walk is killed.
#[inline]
fn step<R: Rng + ?Sized>(net: &Network, q: f64, x: usize, rng: &mut R) -> Option<usize> {
    let w = net.exit_rate(x);
    let u: f64 = rng.random::<f64>() * (q + w);
    if u < q || w == 0.0 {
        return None;
    }
    let mut acc = q;
    let out = net.out_edges(x);
    for &(y, wy) in out {
        acc += wy;
        if u < acc {
            return Some(y);
        }
    }
    out.last().map(|&(y, _)| y)
}

/// Wilson's algorithm with a caller-provided generator.
pub fn wilson_with_rng<R: Rng + ?Sized>(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    rng: &mut R,
) -> Result<RootedForest> {
    let b = validate_rate(net, q, absorbing)?;
    let n = net.n();
    let mut in_tree = vec![false; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    for &x in &b {
        in_tree[x] = true;
    }
    for start in 0..n {
        if in_tree[start] {
            continue;
        }
        let mut u = start;
        while !in_tree[u] {
            match step(net, q, u, rng) {
                Some(v) => {
                    next[u] = Some(v);
                    u = v;
                }
                None => {
                    next[u] = None;
                    break;
                }
            }
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            match next[u] {
                Some(v) => u = v,
                None => break,
            }
        }
    }
    RootedForest::from_next(q, b, next)
}

/// Samples `Φ_{q,B}`; sample index 0 of the seeded stream family.
pub fn wilson_sample(net: &Network, q: f64, absorbing: &[usize], seed: u64) -> Result<RootedForest> {
    wilson_with_rng(net, q, absorbing, &mut stream_rng(seed, 0))
}

/// Loop-erased path of the killed walk from `start`, stopped on entering `B`.
pub fn loop_erased_walk<R: Rng + ?Sized>(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    start: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let b = validate_rate(net, q, absorbing)?;
    if start >= net.n() {
        return Err(Error::VertexOutOfRange { vertex: start, n: net.n() });
    }
    let mut stop = vec![false; net.n()];
    for &x in &b {
        stop[x] = true;
    }
    let mut next: Vec<Option<usize>> = vec![None; net.n()];
    let mut u = start;
    while !stop[u] {
        match step(net, q, u, rng) {
            Some(v) => {
                next[u] = Some(v);
                u = v;
            }
            None => {
                next[u] = None;
                break;
            }
        }
    }
    let mut path = vec![start];
    let mut u = start;
    while !stop[u] {
        match next[u] {
            Some(v) => {
                path.push(v);
                u = v;
            }
            None => break,
        }
    }
    Ok(path)
}

/// Result of the prescribed-root-count search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MRootsSample {
    pub forest: RootedForest,
    /// Rate at which `forest` was drawn.
    pub q: f64,
    pub iterations: usize,
    /// Whether the root count landed in `[m - 2√m, m + 2√m]`.
    pub converged: bool,
}

pub const Q_CLAMP_LOW: f64 = 1e-12;
pub const Q_CLAMP_HIGH: f64 = 1e12;

/// Samples forests at rates `q_{i+1} = m q_i / |R(Φ_{q_i})|` starting from
/// `w_max` until the root count is within `2√m` of `m`. On failure the error
/// carries the closest sample seen.
pub fn sample_with_m_roots(net: &Network, m: usize, seed: u64, max_iters: usize) -> Result<MRootsSample> {
    let n = net.n();
    if m == 0 || m > n {
        return Err(Error::InvalidParameters(format!("need 1 <= m <= {n}, got {m}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameters("max_iters must be positive".into()));
    }
    let scale = if net.w_max() > 0.0 { net.w_max() } else { 1.0 };
    let half_width = 2.0 * (m as f64).sqrt();
    let mut rng = stream_rng(seed, 0);
    let mut q = scale;
    let mut best: Option<(f64, MRootsSample)> = None;
    for it in 1..=max_iters {
        let forest = wilson_with_rng(net, q, &[], &mut rng)?;
        let r = forest.root_count();
        let miss = (r as f64 - m as f64).abs();
        let sample = MRootsSample {
            forest,
            q,
            iterations: it,
            converged: miss <= half_width,
        };
        if sample.converged {
            return Ok(sample);
        }
        if best.as_ref().is_none_or(|(d, _)| miss < *d) {
            best = Some((miss, sample));
        }
        q = (m as f64 * q / r as f64).clamp(Q_CLAMP_LOW * scale, Q_CLAMP_HIGH * scale);
    }
    let (_, mut sample) = best.expect("at least one iteration ran");
    sample.iterations = max_iters;
    Err(Error::MaxItersExceeded(Box::new(sample)))
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of `observed` counts against category probabilities. Categories
/// with expected count below 5 are pooled into one.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> ChiSquare {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut cats = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (i, &o) in observed.iter().enumerate() {
        let e = probs.get(i).copied().unwrap_or(0.0).max(0.0) * n;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cats += 1;
        }
    }
    for p in probs.iter().skip(observed.len()) {
        pooled_exp += p.max(0.0) * n;
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cats += 1;
    } else if pooled_obs > 0.0 {
        stat = f64::INFINITY;
    }
    let dof = cats.saturating_sub(1);
    let p_value = if !stat.is_finite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
    };
    ChiSquare {
        statistic: stat,
        dof,
        p_value,
    }
}

/// Counts aggregated over independent forest samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub seed: u64,
    pub q: f64,
    pub samples: u64,
    /// `root_hist[k]` = number of samples with `k` roots.
    pub root_hist: Vec<u64>,
    /// Number of samples in which each vertex is a root.
    pub root_counts: Vec<u64>,
    /// Number of samples containing each edge, indexed like `Network::edges`.
    pub edge_counts: Vec<u64>,
}

impl SampleStats {
    pub fn empty(net: &Network, q: f64, seed: u64) -> Self {
        SampleStats {
            seed,
            q,
            samples: 0,
            root_hist: vec![0; net.n() + 1],
            root_counts: vec![0; net.n()],
            edge_counts: vec![0; net.edges().len()],
        }
    }

    pub fn record(&mut self, net: &Network, forest: &RootedForest) {
        self.samples += 1;
        self.root_hist[forest.root_count()] += 1;
        for &r in &forest.roots {
            self.root_counts[r] += 1;
        }
        for (x, s) in forest.next.iter().enumerate() {
            if let Some(y) = s {
                let e = net.edge_index(x, *y).expect("forest edges are network edges");
                self.edge_counts[e] += 1;
            }
        }
    }

    /// Associative, commutative combination of two runs.
    pub fn merge(mut self, other: &SampleStats) -> Self {
        self.samples += other.samples;
        for (a, b) in self.root_hist.iter_mut().zip(&other.root_hist) {
            *a += b;
        }
        for (a, b) in self.root_counts.iter_mut().zip(&other.root_counts) {
            *a += b;
        }
        for (a, b) in self.edge_counts.iter_mut().zip(&other.edge_counts) {
            *a += b;
        }
        self
    }

    pub fn root_count_freq(&self, k: usize) -> f64 {
        self.root_hist.get(k).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn root_freq(&self, x: usize) -> f64 {
        self.root_counts[x] as f64 / self.samples as f64
    }

    pub fn edge_freq(&self, e: usize) -> f64 {
        self.edge_counts[e] as f64 / self.samples as f64
    }

    pub fn mean_root_count(&self) -> f64 {
        let s: f64 = self
            .root_hist
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 * c as f64)
            .sum();
        s / self.samples as f64
    }

    pub fn chi_square(&self, law: &RootCountLaw) -> ChiSquare {
        chi_square_test(&self.root_hist, &law.pmf)
    }
}

/// Runs `samples` independent Wilson samples in parallel.
pub fn empirical_stats(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    samples: usize,
    seed: u64,
) -> Result<SampleStats> {
    if samples == 0 {
        return Err(Error::InvalidParameters("need at least one sample".into()));
    }
    validate_rate(net, q, absorbing)?;
    (0..samples as u64)
        .into_par_iter()
        .try_fold(
            || SampleStats::empty(net, q, seed),
            |mut acc, i| {
                let f = wilson_with_rng(net, q, absorbing, &mut stream_rng(seed, i))?;
                acc.record(net, &f);
                Ok(acc)
            },
        )
        .try_reduce(|| SampleStats::empty(net, q, seed), |a, b| Ok(a.merge(&b)))
}

/// Draws `samples` forests in parallel and maps each through `f`, in sample order.
pub fn map_samples<T, F>(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    samples: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RootedForest) -> T + Sync,
{
    validate_rate(net, q, absorbing)?;
    (0..samples as u64)
        .into_par_iter()
        .map(|i| wilson_with_rng(net, q, absorbing, &mut stream_rng(seed, i)).map(|fr| f(&fr)))
        .collect()
}

/// Per-partition comparison of root locations with restricted equilibria.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionReport {
    pub blocks: Vec<Vec<usize>>,
    pub count: u64,
    /// Largest total-variation distance over the blocks.
    pub tv: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub samples: usize,
    pub min_count: u64,
    pub partitions: Vec<PartitionReport>,
    pub max_tv: f64,
}

/// Groups samples by partition and, for each partition seen at least
/// `min_count` times, compares the law of the root of each block with the
/// invariant measure of the walk restricted to that block.
pub fn conditional_root_equilibrium_check(
    net: &Network,
    q: f64,
    samples: usize,
    seed: u64,
    min_count: u64,
) -> Result<EquilibriumReport> {
    let draws = map_samples(net, q, &[], samples, seed, |f| (f.blocks(), f.roots.clone()))?;
    let mut grouped: BTreeMap<Vec<Vec<usize>>, BTreeMap<Vec<usize>, u64>> = BTreeMap::new();
    for (blocks, roots) in draws {
        *grouped.entry(blocks).or_default().entry(roots).or_default() += 1;
    }
    let mut partitions = Vec::new();
    for (blocks, outcomes) in grouped {
        let count: u64 = outcomes.values().sum();
        if count < min_count {
            continue;
        }
        let mut tv: f64 = 0.0;
        for (k, block) in blocks.iter().enumerate() {
            let target = oracle::restricted_invariant_measure(net, block)?;
            let mut emp = vec![0.0; block.len()];
            for (roots, &c) in &outcomes {
                let pos = block.binary_search(&roots[k]).expect("root lies in its block");
                emp[pos] += c as f64 / count as f64;
            }
            tv = tv.max(crate::graph::tv_raw(&emp, &target));
        }
        partitions.push(PartitionReport { blocks, count, tv });
    }
    let max_tv = partitions.iter().map(|p| p.tv).fold(0.0, f64::max);
    Ok(EquilibriumReport {
        samples,
        min_count,
        partitions,
        max_tv,
    })
}

/// Monte-Carlo proxies used to choose the forest rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub q: f64,
    /// `q · E[|V\R| / (1 + |R|)]`.
    pub w_tilde: f64,
    /// `(1/w_max) · E[|V\R| / |R|]`.
    pub inv_beta_tilde: f64,
    pub mean_roots: f64,
}

impl TuningRecord {
    /// Product `w̃ · (1/β̃)` minimized by the default selection rule.
    pub fn objective(&self) -> f64 {
        self.w_tilde * self.inv_beta_tilde
    }
}

/// `{w_max · 2^{-k} : k = 0..=6}`.
pub fn default_q_grid(net: &Network) -> Vec<f64> {
    let w = if net.w_max() > 0.0 { net.w_max() } else { 1.0 };
    (0..=6).map(|k| w / f64::from(1u32 << k)).collect()
}

/// Estimates the tuning proxies at every rate of `grid` from independent
/// samples. Grid point `j` uses the stream family of `seed + j`.
pub fn estimate_tuning(net: &Network, grid: &[f64], samples: usize, seed: u64) -> Result<Vec<TuningRecord>> {
    if samples == 0 {
        return Err(Error::InvalidParameters("need at least one sample".into()));
    }
    let n = net.n() as f64;
    let w = if net.w_max() > 0.0 { net.w_max() } else { 1.0 };
    grid.iter()
        .enumerate()
        .map(|(j, &q)| {
            if !(q > 0.0) {
                return Err(Error::InvalidParameters(format!("grid rate {q} must be > 0")));
            }
            let counts = map_samples(net, q, &[], samples, seed.wrapping_add(j as u64), |f| {
                f.root_count() as f64
            })?;
            let m = samples as f64;
            let w_avg = counts.iter().map(|r| (n - r) / (1.0 + r)).sum::<f64>() / m;
            let b_avg = counts.iter().map(|r| (n - r) / r).sum::<f64>() / m;
            Ok(TuningRecord {
                q,
                w_tilde: q * w_avg,
                inv_beta_tilde: b_avg / w,
                mean_roots: counts.iter().sum::<f64>() / m,
            })
        })
        .collect()
}

/// Index of the record with the smallest objective; ties go to the larger rate.
pub fn select_rate(records: &[TuningRecord]) -> Option<usize> {
    (0..records.len()).min_by(|&a, &b| {
        records[a]
            .objective()
            .total_cmp(&records[b].objective())
            .then(records[b].q.total_cmp(&records[a].q))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn two_node() -> Network {
        Network::new(2, vec![Edge::new(0, 1, 2.0), Edge::new(1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn absorbing_everything_gives_empty_forest() {
        let net = Network::cycle(5).unwrap();
        let f = wilson_sample(&net, 0.7, &[0, 1, 2, 3, 4], 1).unwrap();
        assert!(f.edges().is_empty());
        assert_eq!(f.roots, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_zero_rate_without_absorbing_set() {
        assert!(matches!(wilson_sample(&two_node(), 0.0, &[], 1), Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn zero_rate_gives_spanning_tree_rooted_in_b() {
        let net = Network::grid(3, 3).unwrap();
        let f = wilson_sample(&net, 0.0, &[4], 11).unwrap();
        assert_eq!(f.roots, vec![4]);
        assert_eq!(f.edges().len(), 8);
    }

    #[test]
    fn same_seed_same_forest() {
        let net = Network::grid(6, 6).unwrap();
        let a = wilson_sample(&net, 0.3, &[], 42).unwrap();
        let b = wilson_sample(&net, 0.3, &[], 42).unwrap();
        assert_eq!(a, b);
        let s1 = empirical_stats(&net, 0.3, &[], 200, 5).unwrap();
        let s2 = empirical_stats(&net, 0.3, &[], 200, 5).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn forest_structure_is_consistent() {
        let net = Network::grid(5, 4).unwrap();
        for seed in 0..20 {
            let f = wilson_sample(&net, 0.5, &[3], seed).unwrap();
            assert!(f.is_root(3));
            for x in 0..net.n() {
                assert!(f.is_root(f.root_of(x)));
                assert!(f.depth(x) < net.n());
                if let Some(y) = f.next[x] {
                    assert!(net.edge_index(x, y).is_some());
                    assert_eq!(f.partition[x], f.partition[y]);
                }
            }
            let sizes: usize = f.blocks().iter().map(Vec::len).sum();
            assert_eq!(sizes, net.n());
        }
    }

    #[test]
    fn from_next_rejects_cycles() {
        assert!(RootedForest::from_next(1.0, vec![], vec![Some(1), Some(0)]).is_err());
    }

    #[test]
    fn m_roots_trivial_windows() {
        let s = sample_with_m_roots(&two_node(), 1, 3, 10).unwrap();
        assert_eq!(s.iterations, 1);
        let net = Network::cycle(9).unwrap();
        let s = sample_with_m_roots(&net, 9, 3, 50).unwrap();
        assert!(s.forest.root_count() >= 3);
        assert!(sample_with_m_roots(&net, 0, 3, 5).is_err());
    }

    #[test]
    fn m_roots_reports_best_on_failure() {
        let net = Network::cycle(200).unwrap();
        match sample_with_m_roots(&net, 1, 0, 1) {
            Err(Error::MaxItersExceeded(best)) => {
                assert!(!best.converged);
                assert_eq!(best.iterations, 1);
            }
            Ok(s) => assert!(s.converged),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn chi_square_perfect_fit() {
        let c = chi_square_test(&[50, 50], &[0.5, 0.5]);
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        let c = chi_square_test(&[100, 0], &[0.0, 1.0]);
        assert_eq!(c.p_value, 0.0);
    }

    #[test]
    fn stats_merge_adds_counts() {
        let net = two_node();
        let a = empirical_stats(&net, 3.0, &[], 10, 1).unwrap();
        let b = empirical_stats(&net, 3.0, &[], 15, 2).unwrap();
        let m = a.clone().merge(&b);
        assert_eq!(m.samples, 25);
        assert_eq!(m.root_hist.iter().sum::<u64>(), 25);
    }

    #[test]
    fn default_grid_spans_two_octave_range() {
        let g = default_q_grid(&two_node());
        assert_eq!(g.len(), 7);
        assert_eq!(g[0], 2.0);
        assert_eq!(g[6], 2.0 / 64.0);
    }

    #[test]
    fn tuning_vanishes_for_huge_rates() {
        let recs = estimate_tuning(&Network::cycle(6).unwrap(), &[1e9], 200, 1).unwrap();
        assert!(recs[0].w_tilde < 1e-3);
        assert!(recs[0].inv_beta_tilde < 1e-6);
    }
}
