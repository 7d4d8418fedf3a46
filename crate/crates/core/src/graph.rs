//! Weighted directed networks, their generators and invariant measures,
//! plus the μ-weighted norms used throughout the crate.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tol::Tolerances;

/// Networks up to this many vertices carry a dense generator.
pub const DEFAULT_DENSE_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Edge { src, dst, weight }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NetworkOptions {
    pub dense_threshold: usize,
    pub tolerances: Tolerances,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            tolerances: Tolerances::global(),
        }
    }
}

/// An irreducible weighted directed graph seen as the generator of a
/// continuous-time random walk.
///
/// Immutable after construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    n: usize,
    edges: Vec<Edge>,
    /// Out-neighbours of each vertex, sorted by destination.
    out: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    w_max: f64,
    mu: Vec<f64>,
    reversible: bool,
    generator: Option<DMatrix<f64>>,
    dense_threshold: usize,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;
    fn try_from(r: NetworkRepr) -> Result<Self> {
        let edges = r
            .edges
            .into_iter()
            .map(|(s, d, w)| Edge::new(s, d, w))
            .collect();
        Network::new(r.n, edges)
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            n: net.n,
            edges: net.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect(),
        }
    }
}

impl Network {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        Self::with_options(n, edges, &NetworkOptions::default())
    }

    pub fn with_options(n: usize, mut edges: Vec<Edge>, opts: &NetworkOptions) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyNetwork);
        }
        for e in &edges {
            for v in [e.src, e.dst] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if e.src == e.dst {
                return Err(Error::SelfLoop(e.src));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::NonPositiveWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if let Some(w) = edges
            .windows(2)
            .find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst))
        {
            return Err(Error::DuplicateEdge {
                src: w[0].src,
                dst: w[0].dst,
            });
        }

        let mut out = vec![Vec::new(); n];
        for e in &edges {
            out[e.src].push((e.dst, e.weight));
        }
        if !strongly_connected(n, &out) {
            return Err(Error::NotIrreducible);
        }
        let exit: Vec<f64> = out
            .iter()
            .map(|adj| adj.iter().map(|&(_, w)| w).sum())
            .collect();
        let w_max = exit.iter().copied().fold(0.0, f64::max);

        let generator = (n <= opts.dense_threshold).then(|| {
            let mut l = DMatrix::zeros(n, n);
            for e in &edges {
                l[(e.src, e.dst)] = e.weight;
            }
            for x in 0..n {
                l[(x, x)] = -exit[x];
            }
            l
        });

        let mu = match &generator {
            Some(l) => invariant_measure_dense(l)?,
            None => invariant_measure_iterative(n, &out, &exit, w_max),
        };
        check_invariance(&out, &exit, &mu, opts.tolerances.structural)?;

        let mut net = Network {
            n,
            edges,
            out,
            exit,
            w_max,
            mu,
            reversible: false,
            generator,
            dense_threshold: opts.dense_threshold,
        };
        net.reversible = net.detailed_balance_defect() <= opts.tolerances.structural;
        Ok(net)
    }

    /// Reads off the network of a dense generator: every positive off-diagonal
    /// entry becomes an edge. Diagonal entries are ignored.
    pub fn from_generator(l: &DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: l.ncols(),
            });
        }
        let mut edges = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y && l[(x, y)] > 0.0 {
                    edges.push(Edge::new(x, y, l[(x, y)]));
                }
            }
        }
        Network::new(n, edges)
    }

    /// Duplicates every edge in both directions.
    pub fn undirected(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut all = Vec::with_capacity(2 * edges.len());
        for &(a, b, w) in edges {
            all.push(Edge::new(a, b, w));
            all.push(Edge::new(b, a, w));
        }
        Network::new(n, all)
    }

    /// Unit-weight cycle on `n >= 3` vertices (or the two-vertex edge when `n == 2`).
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 2 {
            return Network::new(n, Vec::new());
        }
        if n == 2 {
            return Network::undirected(2, &[(0, 1, 1.0)]);
        }
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Network::undirected(n, &e)
    }

    pub fn path(n: usize) -> Result<Self> {
        let e: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
        Network::undirected(n, &e)
    }

    /// `height × width` grid with 4-neighbour unit weights and row-major ids.
    pub fn grid(height: usize, width: usize) -> Result<Self> {
        let mut e = Vec::new();
        for r in 0..height {
            for c in 0..width {
                let v = r * width + c;
                if c + 1 < width {
                    e.push((v, v + 1, 1.0));
                }
                if r + 1 < height {
                    e.push((v, v + width, 1.0));
                }
            }
        }
        Network::undirected(height * width, &e)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(src, dst)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, x: usize) -> &[(usize, f64)] {
        &self.out[x]
    }

    /// Total exit rate `w(x) = -L(x, x)`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_measure(&self) -> Measure {
        Measure {
            values: self.mu.clone(),
            normalized: true,
        }
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn dense_threshold(&self) -> usize {
        self.dense_threshold
    }

    /// `w(x, y)`, zero when the edge is absent.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        let adj = &self.out[x];
        adj.binary_search_by_key(&y, |&(d, _)| d)
            .map(|i| adj[i].1)
            .unwrap_or(0.0)
    }

    pub fn edge_index(&self, x: usize, y: usize) -> Option<usize> {
        self.edges
            .binary_search_by_key(&(x, y), |e| (e.src, e.dst))
            .ok()
    }

    /// Dense generator `L`; refused above the dense threshold.
    pub fn generator(&self) -> Result<&DMatrix<f64>> {
        self.generator.as_ref().ok_or(Error::TooLargeForDense {
            n: self.n,
            threshold: self.dense_threshold,
        })
    }

    /// Discrete-time skeleton chain `P = L / w_max + Id`.
    pub fn skeleton(&self) -> Result<DMatrix<f64>> {
        let l = self.generator()?;
        let mut p = if self.w_max > 0.0 {
            l / self.w_max
        } else {
            DMatrix::zeros(self.n, self.n)
        };
        for x in 0..self.n {
            p[(x, x)] += 1.0;
        }
        Ok(p)
    }

    /// Largest violation of detailed balance, relative to `max(1, mu(x) w(x, y))`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for e in &self.edges {
            let a = self.mu[e.src] * e.weight;
            let b = self.mu[e.dst] * self.weight(e.dst, e.src);
            worst = worst.max((a - b).abs() / a.max(1.0));
        }
        worst
    }

    /// `L f` computed from the adjacency lists.
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|x| {
                self.out[x]
                    .iter()
                    .map(|&(y, w)| w * (f[y] - f[x]))
                    .sum::<f64>()
            })
            .collect()
    }
}

fn reach(n: usize, adj: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count
}

/// Forward and backward reachability from vertex 0.
fn strongly_connected(n: usize, out: &[Vec<(usize, f64)>]) -> bool {
    let fwd: Vec<Vec<usize>> = out
        .iter()
        .map(|a| a.iter().map(|&(y, _)| y).collect())
        .collect();
    let mut bwd = vec![Vec::new(); n];
    for (x, a) in out.iter().enumerate() {
        for &(y, _) in a {
            bwd[y].push(x);
        }
    }
    reach(n, &fwd) == n && reach(n, &bwd) == n
}

/// Solves `mu L = 0` with one balance equation replaced by `sum(mu) = 1`.
pub(crate) fn invariant_measure_dense(l: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = l.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = l.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mu = linalg::solve_vector(a, &rhs)?;
    Ok(mu.iter().copied().collect())
}

/// Power iteration on the lazy skeleton chain, for networks without a dense generator.
fn invariant_measure_iterative(
    n: usize,
    out: &[Vec<(usize, f64)>],
    exit: &[f64],
    w_max: f64,
) -> Vec<f64> {
    let mut mu = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        for x in 0..n {
            next[x] = mu[x] * (1.0 - exit[x] / (2.0 * w_max));
        }
        for x in 0..n {
            for &(y, w) in &out[x] {
                next[y] += mu[x] * w / (2.0 * w_max);
            }
        }
        let total: f64 = next.iter().sum();
        let mut delta = 0.0_f64;
        for x in 0..n {
            let v = next[x] / total;
            delta = delta.max((v - mu[x]).abs());
            mu[x] = v;
        }
        if delta < 1e-15 {
            break;
        }
    }
    mu
}

fn check_invariance(out: &[Vec<(usize, f64)>], exit: &[f64], mu: &[f64], tol: f64) -> Result<()> {
    let n = mu.len();
    let mut flux = vec![0.0; n];
    for x in 0..n {
        flux[x] -= mu[x] * exit[x];
        for &(y, w) in &out[x] {
            flux[y] += mu[x] * w;
        }
    }
    let scale = exit.iter().copied().fold(1.0, f64::max);
    if mu.iter().any(|&m| !(m > 0.0)) || flux.iter().any(|f| f.abs() > tol * scale) {
        return Err(Error::SingularSystem);
    }
    Ok(())
}

/// Nonnegative weights on the vertex set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Measure {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameters(format!(
                "measure has negative or NaN mass {v}"
            )));
        }
        let total: f64 = values.iter().sum();
        let normalized = (total - 1.0).abs() <= Tolerances::global().arithmetic * values.len().max(1) as f64;
        Ok(Measure { values, normalized })
    }

    /// Point mass at `x` on `n` points.
    pub fn dirac(n: usize, x: usize) -> Self {
        let mut values = vec![0.0; n];
        values[x] = 1.0;
        Measure {
            values,
            normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `mu(A)`.
    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&x| self.values[x]).sum()
    }

    /// The measure conditioned to `set` and restricted to it, with entries in the
    /// order of `set`.
    pub fn conditioned(&self, set: &[usize]) -> Measure {
        let mass = self.mass_of(set);
        Measure {
            values: set.iter().map(|&x| self.values[x] / mass).collect(),
            normalized: true,
        }
    }
}

/// Norm exponent: finite `p >= 1` or infinity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    /// `1/p`, zero at infinity.
    pub fn inv(self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    /// `1/p*` for the conjugate exponent, i.e. `1 - 1/p`.
    pub fn inv_conjugate(self) -> f64 {
        1.0 - self.inv()
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            t => t
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameters(format!("bad exponent {s:?}")))
                .and_then(Exponent::new),
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `(sum |f|^p mu)^(1/p)`, or the max of `|f|` over the support of `mu`.
pub fn lp_norm(f: &[f64], mu: &Measure, p: Exponent) -> Result<f64> {
    check_len(mu.len(), f.len())?;
    Ok(match p {
        Exponent::Infinity => f
            .iter()
            .zip(&mu.values)
            .filter(|(_, &m)| m > 0.0)
            .fold(0.0, |acc, (v, _)| acc.max(v.abs())),
        Exponent::Finite(p) => {
            let s: f64 = f
                .iter()
                .zip(&mu.values)
                .map(|(v, m)| v.abs().powf(p) * m)
                .sum();
            s.powf(1.0 / p)
        }
    })
}

pub fn mu_inner(f: &[f64], g: &[f64], mu: &Measure) -> Result<f64> {
    check_len(mu.len(), f.len())?;
    check_len(mu.len(), g.len())?;
    Ok(f.iter()
        .zip(g)
        .zip(&mu.values)
        .map(|((a, b), m)| a * b * m)
        .sum())
}

pub fn tv_distance(nu1: &Measure, nu2: &Measure) -> Result<f64> {
    check_len(nu1.len(), nu2.len())?;
    for nu in [nu1, nu2] {
        if !nu.normalized {
            return Err(Error::UnnormalizedMeasure(nu.total()));
        }
    }
    Ok(tv_raw(&nu1.values, &nu2.values))
}

/// Half the ℓ1 distance, without normalization checks.
pub(crate) fn tv_raw(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_node() -> Network {
        Network::new(2, vec![Edge::new(0, 1, 2.0), Edge::new(1, 0, 1.0)]).unwrap()
    }

    fn three_cycle() -> Network {
        Network::new(
            3,
            vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0), Edge::new(2, 0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn two_node_measure_and_reversibility() {
        let net = two_node();
        assert_abs_diff_eq!(net.mu()[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(net.mu()[1], 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(net.w_max(), 2.0);
        assert!(net.is_reversible());
    }

    #[test]
    fn directed_cycle_is_uniform_and_irreversible() {
        let net = three_cycle();
        for &m in net.mu() {
            assert_abs_diff_eq!(m, 1.0 / 3.0, epsilon = 1e-14);
        }
        assert!(!net.is_reversible());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Network::new(2, vec![Edge::new(0, 1, 1.0)]),
            Err(Error::NotIrreducible)
        ));
        assert!(matches!(
            Network::new(2, vec![Edge::new(0, 1, -1.0), Edge::new(1, 0, 1.0)]),
            Err(Error::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            Network::new(
                2,
                vec![Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0), Edge::new(0, 1, 3.0)]
            ),
            Err(Error::DuplicateEdge { src: 0, dst: 1 })
        ));
        assert!(matches!(
            Network::new(2, vec![Edge::new(0, 2, 1.0)]),
            Err(Error::VertexOutOfRange { vertex: 2, n: 2 })
        ));
        assert!(matches!(Network::new(0, vec![]), Err(Error::EmptyNetwork)));
    }

    #[test]
    fn skeleton_examples() {
        let p = two_node().skeleton().unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.0);
        assert_abs_diff_eq!(p[(0, 1)], 1.0);
        assert_abs_diff_eq!(p[(1, 0)], 0.5);
        assert_abs_diff_eq!(p[(1, 1)], 0.5);
        let p = three_cycle().skeleton().unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(p[(i, i)], 0.0);
            assert_abs_diff_eq!(p[(i, (i + 1) % 3)], 1.0);
        }
    }

    #[test]
    fn single_vertex_network() {
        let net = Network::new(1, vec![]).unwrap();
        assert_eq!(net.mu(), &[1.0]);
        assert_eq!(net.w_max(), 0.0);
        assert_eq!(net.skeleton().unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn sparse_mode_refuses_dense_operations() {
        let opts = NetworkOptions {
            dense_threshold: 3,
            ..Default::default()
        };
        let e: Vec<_> = (0..5)
            .flat_map(|i| [Edge::new(i, (i + 1) % 5, 1.0), Edge::new((i + 1) % 5, i, 2.0)])
            .collect();
        let net = Network::with_options(5, e, &opts).unwrap();
        assert!(matches!(net.generator(), Err(Error::TooLargeForDense { .. })));
        for &m in net.mu() {
            assert_abs_diff_eq!(m, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn norms_and_distances() {
        let mu = Measure::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let f = [3.0, 0.0];
        assert_abs_diff_eq!(lp_norm(&f, &mu, Exponent::Finite(1.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(lp_norm(&f, &mu, Exponent::Infinity).unwrap(), 3.0);
        assert!(matches!(Exponent::new(0.5), Err(Error::InvalidExponent(_))));
        assert_abs_diff_eq!(mu_inner(&[1.0, -0.5], &[1.0, 1.0], &mu).unwrap(), 0.0, epsilon = 1e-15);
        assert!(mu_inner(&[1.0], &[1.0, 1.0], &mu).is_err());

        let d = tv_distance(&Measure::dirac(2, 0), &Measure::dirac(2, 1)).unwrap();
        assert_eq!(d, 1.0);
        let a = Measure::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let b = Measure::new(vec![1.0 / 6.0, 5.0 / 6.0]).unwrap();
        assert_abs_diff_eq!(tv_distance(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        let bad = Measure::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(tv_distance(&a, &bad), Err(Error::UnnormalizedMeasure(_))));
    }

    #[test]
    fn constant_signal_norm_is_its_magnitude() {
        let mu = three_cycle().mu_measure();
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.5), Exponent::Infinity] {
            assert_abs_diff_eq!(lp_norm(&[-2.0; 3], &mu, p).unwrap(), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn serde_round_trip_rebuilds_network() {
        let net = two_node();
        let json = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&json).unwrap();
        assert_eq!(back.edges(), net.edges());
        assert_eq!(back.mu(), net.mu());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_network() -> impl Strategy<Value = Network> {
            (3usize..7)
                .prop_flat_map(|n| (Just(n), prop::collection::vec(0.1f64..5.0, 2 * n)))
                .prop_map(|(n, w)| {
                    // ring in both directions with independent weights, plus one chord
                    let mut e = Vec::new();
                    for i in 0..n {
                        e.push(Edge::new(i, (i + 1) % n, w[2 * i]));
                        e.push(Edge::new((i + 1) % n, i, w[2 * i + 1]));
                    }
                    if n > 3 {
                        e.push(Edge::new(0, n / 2, w[0] + w[1]));
                    }
                    Network::new(n, e).unwrap()
                })
        }

        proptest! {
            #[test]
            fn generator_and_skeleton_rows(net in random_network()) {
                let l = net.generator().unwrap();
                let p = net.skeleton().unwrap();
                for x in 0..net.n() {
                    prop_assert!(l.row(x).sum().abs() <= 1e-12);
                    prop_assert!((p.row(x).sum() - 1.0).abs() <= 1e-12);
                    prop_assert!(p.row(x).iter().all(|&v| (-1e-15..=1.0 + 1e-15).contains(&v)));
                }
                let flux = DVector::from_row_slice(net.mu()).transpose() * l;
                prop_assert!(flux.amax() <= 1e-10);
            }

            #[test]
            fn lp_norm_monotone_in_p(net in random_network(), f in prop::collection::vec(-5.0f64..5.0, 7)) {
                let mu = net.mu_measure();
                let f = &f[..net.n()];
                let n1 = lp_norm(f, &mu, Exponent::Finite(1.0)).unwrap();
                let n2 = lp_norm(f, &mu, Exponent::Finite(2.0)).unwrap();
                let ni = lp_norm(f, &mu, Exponent::Infinity).unwrap();
                prop_assert!(n1 <= n2 + 1e-12 && n2 <= ni + 1e-12);
            }

            #[test]
            fn mu_inner_symmetric(f in prop::collection::vec(-5.0f64..5.0, 4), g in prop::collection::vec(-5.0f64..5.0, 4)) {
                let mu = Measure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
                prop_assert_eq!(mu_inner(&f, &g, &mu).unwrap(), mu_inner(&g, &f, &mu).unwrap());
            }
        }
    }
}
