//! Network reduction: trace processes, linking operators built from partitions
//! or killed-walk kernels, and the diagnostics that measure how well a reduced
//! generator is intertwined with its parent.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{tv_raw, Exponent, Measure, Network};
use crate::linalg;
use crate::oracle;
use crate::sampler;

/// Off-diagonal Schur entries down to `-NEGATIVE_CLAMP · scale` are treated as round-off.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
/// Normalized Gram determinants at or below this are reported as singular.
pub const GRAM_SINGULAR: f64 = 1e-14;

/// Where the rows of a linking operator come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LinkSource {
    /// Row `i` is `μ` conditioned on block `i`.
    Partition { blocks: Vec<Vec<usize>> },
    /// Row `i` is `K_{q'}(kept[i], ·)`.
    Kernel { q_prime: f64, kept: Vec<usize> },
}

/// Stochastic matrix whose rows are probability measures on the parent vertices.
#[derive(Clone, Debug)]
pub struct LinkOperator {
    pub rows: DMatrix<f64>,
    pub source: LinkSource,
}

impl LinkOperator {
    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.rows.ncols()
    }

    fn blocks(&self) -> Result<&[Vec<usize>]> {
        match &self.source {
            LinkSource::Partition { blocks } => Ok(blocks),
            LinkSource::Kernel { .. } => Err(Error::WrongLinkSource("needs a partition link")),
        }
    }
}

/// Generator obtained by watching the parent walk on `kept` only.
#[derive(Clone, Debug)]
pub struct ReducedNetwork {
    /// Parent ids of the retained vertices, ascending.
    pub kept: Vec<usize>,
    /// `L̄`, indexed like `kept`.
    pub generator: DMatrix<f64>,
    /// `L̄` as a network on `0..kept.len()`.
    pub network: Network,
    /// Parent `μ` conditioned on `kept`.
    pub mu_bar: Vec<f64>,
    /// `w_max` of the parent, which sets the time scale of the trace chain.
    pub parent_w_max: f64,
}

impl ReducedNetwork {
    /// The parent itself, seen as its own reduction onto every vertex.
    pub fn identity(net: &Network) -> Result<Self> {
        Ok(ReducedNetwork {
            kept: (0..net.n()).collect(),
            generator: net.generator()?.clone(),
            network: net.clone(),
            mu_bar: net.mu().to_vec(),
            parent_w_max: net.w_max(),
        })
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// `P̄ = Id + L̄ / w_max`: landing law of the parent skeleton chain on its
    /// first return to `kept`.
    pub fn trace_kernel(&self) -> DMatrix<f64> {
        let m = self.len();
        let w = if self.parent_w_max > 0.0 { self.parent_w_max } else { 1.0 };
        DMatrix::identity(m, m) + &self.generator / w
    }

    /// Largest `|μ̄(x) L̄(x, y) - μ̄(y) L̄(y, x)|`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let m = self.len();
        let mut worst: f64 = 0.0;
        for x in 0..m {
            for y in x + 1..m {
                let d = self.mu_bar[x] * self.generator[(x, y)] - self.mu_bar[y] * self.generator[(y, x)];
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Number of directed edges of `L̄`.
    pub fn edge_count(&self) -> usize {
        self.network.edges().len()
    }
}

/// Checks `∅ ⊊ keep ⊊ V` and returns it sorted.
pub(crate) fn proper_subset(net: &Network, keep: &[usize]) -> Result<Vec<usize>> {
    let k = oracle::vertex_set(net, keep)?;
    if k.len() != keep.len() {
        return Err(Error::InvalidSubset("repeated vertex".into()));
    }
    if k.is_empty() {
        return Err(Error::InvalidSubset("kept set is empty".into()));
    }
    if k.len() == net.n() {
        return Err(Error::InvalidSubset("kept set is the whole vertex set".into()));
    }
    Ok(k)
}

/// Blocks of the parent generator for a sorted kept set and its complement.
pub(crate) struct Blocks {
    pub rest: Vec<usize>,
    pub kk: DMatrix<f64>,
    pub kr: DMatrix<f64>,
    pub rk: DMatrix<f64>,
    pub rr: DMatrix<f64>,
}

impl Blocks {
    pub fn new(net: &Network, kept: Vec<usize>) -> Result<Self> {
        let l = net.generator()?;
        let rest = oracle::complement(net.n(), &kept);
        Ok(Blocks {
            kk: linalg::submatrix(l, &kept, &kept),
            kr: linalg::submatrix(l, &kept, &rest),
            rk: linalg::submatrix(l, &rest, &kept),
            rr: linalg::submatrix(l, &rest, &rest),
            rest,
        })
    }

    /// `L_{V̄} - L_{V̄,V̆} L_{V̆}^{-1} L_{V̆,V̄}`.
    pub fn schur(&self) -> Result<DMatrix<f64>> {
        let x = linalg::solve_matrix(self.rr.clone(), &self.rk)?;
        Ok(&self.kk - &self.kr * x)
    }
}

/// Zero row sums with clamped round-off negatives.
fn clean_generator(mut l: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = l.nrows();
    let scale = l.amax().max(f64::MIN_POSITIVE);
    for x in 0..m {
        let mut exit = 0.0;
        for y in 0..m {
            if x == y {
                continue;
            }
            let v = l[(x, y)];
            if v < 0.0 {
                if v < -NEGATIVE_CLAMP * scale {
                    return Err(Error::NegativeRate(v));
                }
                l[(x, y)] = 0.0;
            }
            exit += l[(x, y)];
        }
        l[(x, x)] = -exit;
    }
    Ok(l)
}

fn reduced_from_generator(net: &Network, kept: Vec<usize>, generator: DMatrix<f64>) -> Result<ReducedNetwork> {
    let network = Network::from_generator(&generator)?;
    let mu_bar = net.mu_measure().conditioned(&kept).values;
    Ok(ReducedNetwork {
        kept,
        generator,
        network,
        mu_bar,
        parent_w_max: net.w_max(),
    })
}

/// Trace-process generator on `keep`.
pub fn schur_reduce(net: &Network, keep: &[usize]) -> Result<ReducedNetwork> {
    let kept = proper_subset(net, keep)?;
    let generator = clean_generator(Blocks::new(net, kept.clone())?.schur()?)?;
    reduced_from_generator(net, kept, generator)
}

/// Checks that `blocks` partition the vertex set.
fn check_partition(n: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut owner = vec![usize::MAX; n];
    for (i, b) in blocks.iter().enumerate() {
        if b.is_empty() {
            return Err(Error::EmptyBlock(i));
        }
        for &x in b {
            if x >= n {
                return Err(Error::VertexOutOfRange { vertex: x, n });
            }
            if owner[x] != usize::MAX {
                return Err(Error::InvalidPartition(format!("vertex {x} in two blocks")));
            }
            owner[x] = i;
        }
    }
    if let Some(x) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::InvalidPartition(format!("vertex {x} in no block")));
    }
    Ok(())
}

/// Rows `μ(· | A_i)`.
pub fn partition_link(net: &Network, blocks: &[Vec<usize>]) -> Result<LinkOperator> {
    check_partition(net.n(), blocks)?;
    let mu = net.mu_measure();
    let mut rows = DMatrix::zeros(blocks.len(), net.n());
    for (i, b) in blocks.iter().enumerate() {
        let c = mu.conditioned(b);
        for (&x, &v) in b.iter().zip(&c.values) {
            rows[(i, x)] = v;
        }
    }
    Ok(LinkOperator {
        rows,
        source: LinkSource::Partition {
            blocks: blocks.to_vec(),
        },
    })
}

/// `P̄(x̄, ȳ) = Σ_x ν_x̄(x) K_{q'}(x, A_ȳ)`.
pub fn metastable_kernel(net: &Network, link: &LinkOperator, q_prime: f64) -> Result<DMatrix<f64>> {
    let blocks = link.blocks()?;
    let k = oracle::killed_kernel(net, q_prime)?;
    let mut member = DMatrix::zeros(net.n(), blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        for &x in b {
            member[(x, i)] = 1.0;
        }
    }
    Ok(&link.rows * k * member)
}

/// Row-wise `d_TV(ΛK_{q'}(x̄, ·), P̄Λ(x̄, ·))`.
pub fn intertwining_error_tv(
    net: &Network,
    link: &LinkOperator,
    pbar: &DMatrix<f64>,
    q_prime: f64,
) -> Result<Vec<f64>> {
    let m = link.nrows();
    if pbar.nrows() != m || pbar.ncols() != m || link.ncols() != net.n() {
        return Err(Error::ShapeMismatch(format!(
            "link {}x{}, kernel {}x{}, network {}",
            m,
            link.ncols(),
            pbar.nrows(),
            pbar.ncols(),
            net.n()
        )));
    }
    let k = oracle::killed_kernel(net, q_prime)?;
    let lhs = &link.rows * k;
    let rhs = pbar * &link.rows;
    Ok((0..m)
        .map(|i| {
            let a: Vec<f64> = lhs.row(i).iter().copied().collect();
            let b: Vec<f64> = rhs.row(i).iter().copied().collect();
            tv_raw(&a, &b)
        })
        .collect())
}

/// `Ê|Γ^x_{q'}|`: mean number of edges of the loop-erased killed walk from each `x`.
pub fn mean_lerw_lengths(net: &Network, q_prime: f64, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidParameters("need at least one sample".into()));
    }
    (0..net.n())
        .into_par_iter()
        .map(|x| {
            let mut total = 0usize;
            for j in 0..samples {
                let stream = (x * samples + j) as u64;
                let mut rng = sampler::stream_rng(seed, stream);
                total += sampler::loop_erased_walk(net, q_prime, &[], x, &mut rng)?.len() - 1;
            }
            Ok(total as f64 / samples as f64)
        })
        .collect()
}

/// `(E|R(Φ_q)|)^{1/p} · ((q'/q) Σ_x Ê|Γ^x_{q'}|)^{1/p*}`.
pub fn tv_meta_bound(net: &Network, q: f64, q_prime: f64, p: Exponent, samples: usize, seed: u64) -> Result<f64> {
    if !(q > 0.0 && q_prime > 0.0) {
        return Err(Error::InvalidParameters("rates must be positive".into()));
    }
    let mean_roots = oracle::root_count_moments(net, q)?.mean;
    let lengths: f64 = mean_lerw_lengths(net, q_prime, samples, seed)?.iter().sum();
    Ok(mean_roots.powf(p.inv()) * (q_prime / q * lengths).powf(p.inv_conjugate()))
}

/// Rows `K_{q'}(x̄, ·)` for `x̄ ∈ kept`.
pub fn kernel_link(net: &Network, kept: &[usize], q_prime: f64) -> Result<LinkOperator> {
    let k = oracle::vertex_set(net, kept)?;
    if k.is_empty() {
        return Err(Error::InvalidSubset("kept set is empty".into()));
    }
    let kernel = oracle::killed_kernel(net, q_prime)?;
    let all: Vec<usize> = (0..net.n()).collect();
    Ok(LinkOperator {
        rows: linalg::submatrix(&kernel, &k, &all),
        source: LinkSource::Kernel { q_prime, kept: k },
    })
}

/// `Γ = Λ D(1/μ) Λᵗ`.
pub fn gram(link: &LinkOperator, mu: &Measure) -> Result<DMatrix<f64>> {
    if mu.len() != link.ncols() {
        return Err(Error::DimensionMismatch {
            expected: link.ncols(),
            found: mu.len(),
        });
    }
    if mu.values.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParameters("measure must be positive".into()));
    }
    let mut scaled = link.rows.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= mu.values[j];
    }
    Ok(scaled * link.rows.transpose())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Squeezing {
    /// `√trace Γ⁻¹`, or `+∞` when `Γ` is singular.
    pub value: f64,
    pub singular: bool,
}

/// Squeezing `√trace Γ⁻¹` of the link rows.
pub fn squeezing(link: &LinkOperator, mu: &Measure) -> Result<Squeezing> {
    let g = gram(link, mu)?;
    let diag: f64 = g.diagonal().iter().product();
    let ratio = if diag > 0.0 { linalg::det(&g) / diag } else { 0.0 };
    if !(ratio > GRAM_SINGULAR) {
        return Ok(Squeezing {
            value: f64::INFINITY,
            singular: true,
        });
    }
    match linalg::inverse(g) {
        Ok(inv) => Ok(Squeezing {
            value: inv.trace().max(0.0).sqrt(),
            singular: false,
        }),
        Err(_) => Ok(Squeezing {
            value: f64::INFINITY,
            singular: true,
        }),
    }
}

/// Spectral upper bound on `E[S(Λ_{q'}) | |R(Φ_q)| = m]` with `Λ_{q'}` the kernel
/// link on the roots of `Φ_q`.
pub fn squeezing_spectral_bound(net: &Network, q: f64, q_prime: f64, m: usize) -> Result<f64> {
    if !(q > 0.0 && q_prime > 0.0) {
        return Err(Error::InvalidParameters("rates must be positive".into()));
    }
    if m == 0 || m > net.n() {
        return Err(Error::InvalidParameters(format!("need 1 <= m <= {}, got {m}", net.n())));
    }
    let law = oracle::root_count_law(net, q, &[])?;
    let pm = law.prob(m);
    if !(pm > 0.0) {
        return Err(Error::ZeroProbability(m));
    }
    let mut spectrum = oracle::laplacian_spectrum(net, &[])?;
    let zero = (0..spectrum.len())
        .min_by(|&a, &b| spectrum[a].norm().total_cmp(&spectrum[b].norm()))
        .expect("nonempty spectrum");
    spectrum.remove(zero);
    let (mut s, mut t) = (0.0, 0.0);
    let mut v = num_complex::Complex64::new(0.0, 0.0);
    for lambda in spectrum {
        let p = q / (q + lambda);
        let pp = q_prime / (q_prime + lambda);
        s += pp.norm_sqr() * (1.0 - p).norm_sqr();
        t += p.norm_sqr() / pp.norm_sqr();
        v += p * (1.0 - p);
    }
    let v = v.re;
    let ratio = if t == 0.0 { 0.0 } else { (t / s).sqrt() };
    let first = (1.0 + ratio).sqrt() * ((s * t).sqrt() - v).exp();
    let second = (1.0 + t).sqrt() * ((1.0 + s * t) / 2.0 - v).exp();
    Ok(first.min(second) / pm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaGamma {
    pub beta: f64,
    pub gamma: f64,
}

/// `1/β = max_{x̄} Σ_z P(x̄, z) E_z[T_V̄]` and `1/γ = max_{x̆} E_x̆[T_V̄]`.
/// Both are infinite when `kept` is the whole vertex set.
pub fn beta_gamma(net: &Network, kept: &[usize]) -> Result<BetaGamma> {
    let k = oracle::vertex_set(net, kept)?;
    if k.is_empty() {
        return Err(Error::InvalidSubset("kept set is empty".into()));
    }
    if k.len() == net.n() {
        return Ok(BetaGamma {
            beta: f64::INFINITY,
            gamma: f64::INFINITY,
        });
    }
    let h = oracle::hitting_times(net, &k)?;
    let w = net.w_max();
    let inv_beta = k
        .iter()
        .map(|&x| net.out_edges(x).iter().map(|&(z, wz)| wz / w * h[z]).sum::<f64>())
        .fold(0.0, f64::max);
    let inv_gamma = oracle::complement(net.n(), &k)
        .iter()
        .map(|&x| h[x])
        .fold(0.0, f64::max);
    Ok(BetaGamma {
        beta: 1.0 / inv_beta,
        gamma: 1.0 / inv_gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// Largest `‖(L̄Λ - ΛL) f‖_{p, μ̄} / ‖f‖_{p, μ}` over the test functions.
    pub residual: f64,
    /// `2 q' (w_max / β)^{1/p*} μ(V̄)^{-1/p}`.
    pub bound: f64,
    pub beta: f64,
}

/// `L̄Λ - ΛL`, an `|V̄| × |V|` matrix.
pub fn intertwining_defect(net: &Network, reduced: &ReducedNetwork, link: &LinkOperator) -> Result<DMatrix<f64>> {
    if link.nrows() != reduced.len() || link.ncols() != net.n() {
        return Err(Error::ShapeMismatch(format!(
            "link is {}x{}, expected {}x{}",
            link.nrows(),
            link.ncols(),
            reduced.len(),
            net.n()
        )));
    }
    Ok(&reduced.generator * &link.rows - &link.rows * net.generator()?)
}

/// Operator residual of the intertwining relation tested on the indicator
/// functions of `test_sets` (every singleton when `None`).
pub fn operator_intertwining_residual(
    net: &Network,
    reduced: &ReducedNetwork,
    link: &LinkOperator,
    p: Exponent,
    test_sets: Option<&[Vec<usize>]>,
) -> Result<Residual> {
    let q_prime = match &link.source {
        LinkSource::Kernel { q_prime, kept } if *kept == reduced.kept => *q_prime,
        LinkSource::Kernel { .. } => return Err(Error::WrongLinkSource("kernel link on another vertex set")),
        LinkSource::Partition { .. } => return Err(Error::WrongLinkSource("needs a kernel link")),
    };
    let d = intertwining_defect(net, reduced, link)?;
    let mu = net.mu_measure();
    let mu_bar = Measure::new(reduced.mu_bar.clone())?;
    let singletons: Vec<Vec<usize>>;
    let sets = match test_sets {
        Some(s) => s,
        None => {
            singletons = (0..net.n()).map(|x| vec![x]).collect();
            &singletons
        }
    };
    let mut residual: f64 = 0.0;
    for set in sets {
        let set = oracle::vertex_set(net, set)?;
        if set.is_empty() {
            continue;
        }
        let image: Vec<f64> = (0..reduced.len())
            .map(|i| set.iter().map(|&y| d[(i, y)]).sum())
            .collect();
        let num = crate::graph::lp_norm(&image, &mu_bar, p)?;
        let den = mu.mass_of(&set).powf(p.inv());
        residual = residual.max(num / den);
    }
    let bg = beta_gamma(net, &reduced.kept)?;
    let mass = mu.mass_of(&reduced.kept);
    let bound = 2.0 * q_prime * (net.w_max() / bg.beta).powf(p.inv_conjugate()) * mass.powf(-p.inv());
    Ok(Residual {
        residual,
        bound,
        beta: bg.beta,
    })
}

fn row_sup(m: &DMatrix<f64>, i: usize) -> f64 {
    m.row(i).iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn connected(l: &DMatrix<f64>) -> bool {
    let m = l.nrows();
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..m {
            if !seen[y] && y != x && (l[(x, y)] > 0.0 || l[(y, x)] > 0.0) {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Greedily removes symmetric edge pairs of a reversible reduced generator,
/// lightest `μ̄`-weighted flow first, while every row of `ΛL - L̄_sΛ` stays within
/// `(1 + θ)` times its unsparsified sup norm and the network stays connected.
pub fn sparsify(net: &Network, reduced: &ReducedNetwork, link: &LinkOperator, theta: f64) -> Result<ReducedNetwork> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameters(format!("slack must be >= 0, got {theta}")));
    }
    if reduced.detailed_balance_defect() > 1e-9 * reduced.generator.amax().max(1.0) {
        return Err(Error::InvalidParameters("sparsification needs a reversible reduced network".into()));
    }
    let m = reduced.len();
    let defect = intertwining_defect(net, reduced, link)?;
    let budget: Vec<f64> = (0..m).map(|i| (1.0 + theta) * row_sup(&defect, i)).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for x in 0..m {
        for y in x + 1..m {
            let w = reduced.generator[(x, y)];
            if w > 0.0 || reduced.generator[(y, x)] > 0.0 {
                candidates.push((reduced.mu_bar[x] * w, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut l = reduced.generator.clone();
    // residual rows of L̄_sΛ - ΛL, updated as edges are removed
    let mut res = defect;
    let mut changed = false;
    for (_, x, y) in candidates {
        let (wxy, wyx) = (l[(x, y)], l[(y, x)]);
        let diff = link.rows.row(y) - link.rows.row(x);
        let new_x = res.row(x) - &diff * wxy;
        let new_y = res.row(y) + &diff * wyx;
        let sup = |r: &nalgebra::RowDVector<f64>| r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let slack = 1e-12 * budget[x].max(budget[y]).max(f64::MIN_POSITIVE);
        if sup(&new_x) > budget[x] + slack || sup(&new_y) > budget[y] + slack {
            continue;
        }
        l[(x, y)] = 0.0;
        l[(y, x)] = 0.0;
        if !connected(&l) {
            l[(x, y)] = wxy;
            l[(y, x)] = wyx;
            continue;
        }
        l[(x, x)] += wxy;
        l[(y, y)] += wyx;
        res.set_row(x, &new_x);
        res.set_row(y, &new_y);
        changed = true;
    }
    if !changed {
        return Ok(reduced.clone());
    }
    let mut out = reduced.clone();
    out.network = Network::from_generator(&l)?;
    out.generator = l;
    Ok(out)
}
