//! Exact, linear-algebra evaluation of random-forest statistics.
//!
//! Everything here is a closed form in terms of the generator `L`: partition
//! functions are characteristic polynomials of restricted generators, root and
//! edge inclusion probabilities are minors of determinantal kernels, and the
//! root count is a sum of independent Bernoulli and three-point variables read
//! off the spectrum. These routines are the ground truth for the Monte-Carlo
//! sampler in [`crate::sampler`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::linalg::{self, PairedSpectrum};

/// Tolerance used to decide that an eigenvalue is real and to pair conjugates.
pub const EIGEN_PAIRING_TOL: f64 = 1e-8;
/// Probabilities this close outside `[0, 1]` are clamped for reporting.
pub const PROBABILITY_SLACK: f64 = 1e-9;

/// Sorted, deduplicated vertex set with range checks.
pub(crate) fn vertex_set(net: &Network, set: &[usize]) -> Result<Vec<usize>> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    if let Some(&v) = s.iter().find(|&&v| v >= net.n()) {
        return Err(Error::VertexOutOfRange { vertex: v, n: net.n() });
    }
    Ok(s)
}

/// `V \ set` for a sorted set.
pub(crate) fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &x in set {
        mask[x] = false;
    }
    (0..n).filter(|&x| mask[x]).collect()
}

fn check_rate(q: f64, b: &[usize]) -> Result<()> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameters(format!("rate q must be finite and >= 0, got {q}")));
    }
    if q == 0.0 && b.is_empty() {
        return Err(Error::InvalidParameters(
            "need q > 0 or a nonempty absorbing set".into(),
        ));
    }
    Ok(())
}

/// `[q Id - L]` restricted to `free`.
fn shifted_block(net: &Network, q: f64, free: &[usize]) -> Result<DMatrix<f64>> {
    let l = net.generator()?;
    let mut m = -linalg::submatrix(l, free, free);
    for i in 0..free.len() {
        m[(i, i)] += q;
    }
    Ok(m)
}

/// Green's function of the walk killed at rate `q` and absorbed in `B`, and the
/// associated kernel `K(x, y) = P_x(X(T_q ∧ T_B) = y)`.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    pub q: f64,
    pub absorbing: Vec<usize>,
    pub free: Vec<usize>,
    /// `[q Id - L]_{V\B}^{-1}` embedded in `V × V`, zero on rows and columns of `B`.
    pub green: DMatrix<f64>,
    /// Full stochastic kernel on `V`: `q G` on `V\B`, landing distribution in `B`
    /// for the columns of `B`, and `δ_x` on the rows of `B`.
    pub kernel: DMatrix<f64>,
}

pub fn green(net: &Network, q: f64, absorbing: &[usize]) -> Result<GreenKernel> {
    let b = vertex_set(net, absorbing)?;
    check_rate(q, &b)?;
    let n = net.n();
    let free = complement(n, &b);
    let l = net.generator()?;
    let inv = linalg::inverse(shifted_block(net, q, &free)?)?;

    let mut g = DMatrix::zeros(n, n);
    for (i, &x) in free.iter().enumerate() {
        for (j, &y) in free.iter().enumerate() {
            g[(x, y)] = inv[(i, j)];
        }
    }
    let mut k = DMatrix::zeros(n, n);
    for &x in &b {
        k[(x, x)] = 1.0;
    }
    for &x in &free {
        for &y in &free {
            k[(x, y)] = q * g[(x, y)];
        }
        for &y in &b {
            k[(x, y)] = free.iter().map(|&z| g[(x, z)] * l[(z, y)]).sum();
        }
    }
    Ok(GreenKernel {
        q,
        absorbing: b,
        free,
        green: g,
        kernel: k,
    })
}

/// Killed-walk kernel `K_q = q (q Id - L)^{-1}` with no absorbing set.
pub fn killed_kernel(net: &Network, q: f64) -> Result<DMatrix<f64>> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameters(format!("q must be > 0, got {q}")));
    }
    let m = shifted_block(net, q, &(0..net.n()).collect::<Vec<_>>())?;
    Ok(linalg::inverse(m)? * q)
}

/// `Z_B(q) = det[q Id - L]_{V\B}`, defined for every real `q`.
pub fn partition_fn(net: &Network, q: f64, absorbing: &[usize]) -> Result<f64> {
    let b = vertex_set(net, absorbing)?;
    let free = complement(net.n(), &b);
    Ok(linalg::det(&shifted_block(net, q, &free)?))
}

/// Eigenvalues of `[-L]_{V\B}`.
pub fn laplacian_spectrum(net: &Network, absorbing: &[usize]) -> Result<Vec<Complex64>> {
    let b = vertex_set(net, absorbing)?;
    let free = complement(net.n(), &b);
    let m = shifted_block(net, 0.0, &free)?;
    Ok(linalg::eigenvalues(&m))
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    if (-PROBABILITY_SLACK..0.0).contains(&p) {
        0.0
    } else if (1.0..=1.0 + PROBABILITY_SLACK).contains(&p) {
        1.0
    } else {
        p
    }
}

/// `P(A ⊂ R(Φ_{q,B})) = det[K_{q,B}]_A`.
pub fn root_inclusion_prob(net: &Network, q: f64, absorbing: &[usize], set: &[usize]) -> Result<f64> {
    let a = vertex_set(net, set)?;
    let gk = green(net, q, absorbing)?;
    Ok(clamp_probability(linalg::det(&linalg::submatrix(&gk.kernel, &a, &a))))
}

fn resolve_edges(net: &Network, edges: &[(usize, usize)]) -> Result<()> {
    for (i, &(s, d)) in edges.iter().enumerate() {
        if net.edge_index(s, d).is_none() {
            return Err(Error::UnknownEdge { src: s, dst: d });
        }
        if edges[..i].contains(&(s, d)) {
            return Err(Error::InvalidParameters(format!("edge ({s}, {d}) listed twice")));
        }
    }
    Ok(())
}

/// Transfer-current matrix `I⁺(e, e') = (G(e₋, e'₋) - G(e₊, e'₋)) w(e')` on the listed edges.
pub fn transfer_current(net: &Network, gk: &GreenKernel, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let g = &gk.green;
    DMatrix::from_fn(edges.len(), edges.len(), |i, j| {
        let (a, b) = edges[i];
        let (c, d) = edges[j];
        (g[(a, c)] - g[(b, c)]) * net.weight(c, d)
    })
}

/// Signed variant `I(e, e') = J(e₋, e') - J(e₊, e')` with the net flow
/// `J(x, e') = G(x, e'₋) w(e') - G(x, e'₊) w(-e')`.
pub fn signed_transfer_current(net: &Network, gk: &GreenKernel, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let g = &gk.green;
    let flow = |x: usize, (c, d): (usize, usize)| g[(x, c)] * net.weight(c, d) - g[(x, d)] * net.weight(d, c);
    DMatrix::from_fn(edges.len(), edges.len(), |i, j| {
        let (a, b) = edges[i];
        flow(a, edges[j]) - flow(b, edges[j])
    })
}

/// `P(e_1, …, e_k ∈ Φ_{q,B}) = det[I⁺]`.
pub fn edge_inclusion_prob(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    edges: &[(usize, usize)],
) -> Result<f64> {
    resolve_edges(net, edges)?;
    let gk = green(net, q, absorbing)?;
    Ok(clamp_probability(linalg::det(&transfer_current(net, &gk, edges))))
}

/// `P(±e_1, …, ±e_k ∈ Φ_{q,B}) = det[I]`: each edge appears in one orientation or the other.
pub fn signed_edge_inclusion_prob(
    net: &Network,
    q: f64,
    absorbing: &[usize],
    edges: &[(usize, usize)],
) -> Result<f64> {
    resolve_edges(net, edges)?;
    let gk = green(net, q, absorbing)?;
    Ok(clamp_probability(linalg::det(&signed_transfer_current(net, &gk, edges))))
}

/// Law of the number of roots of `Φ_{q,B}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RootCountLaw {
    pub q: f64,
    pub absorbing: Vec<usize>,
    /// `pmf[k] = P(|R| = k)` for `k = 0..=n`.
    pub pmf: Vec<f64>,
    /// Eigenvalues of `[-L]_{V\B}` as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
}

impl RootCountLaw {
    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pmf.iter().copied().enumerate().filter(|&(_, p)| p > 0.0)
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn checked_prob(p: f64, what: &str) -> Result<f64> {
    if !(-1e-10..=1.0 + 1e-10).contains(&p) {
        return Err(Error::NonPmf(format!("{what} probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn root_count_law(net: &Network, q: f64, absorbing: &[usize]) -> Result<RootCountLaw> {
    let b = vertex_set(net, absorbing)?;
    check_rate(q, &b)?;
    let spectrum = laplacian_spectrum(net, &b)?;
    let PairedSpectrum { real, upper } = linalg::pair_conjugates(&spectrum, EIGEN_PAIRING_TOL)?;

    let mut law = vec![1.0];
    for lambda in real {
        let p = checked_prob(q / (q + lambda), "Bernoulli")?;
        law = convolve(&law, &[1.0 - p, p]);
    }
    for lambda in upper {
        let p = Complex64::new(q, 0.0) / (q + lambda);
        let two = checked_prob(p.norm_sqr(), "pair")?;
        let one = checked_prob(2.0 * p.re - 2.0 * p.norm_sqr(), "pair")?;
        let zero = checked_prob(1.0 - 2.0 * p.re + p.norm_sqr(), "pair")?;
        law = convolve(&law, &[zero, one, two]);
    }
    let mut pmf = vec![0.0; net.n() + 1];
    for (k, p) in law.into_iter().enumerate() {
        pmf[k + b.len()] = p;
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NonPmf(format!("mass {total}")));
    }
    Ok(RootCountLaw {
        q,
        absorbing: b,
        pmf,
        eigenvalues: spectrum.iter().map(|c| (c.re, c.im)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of `|R(Φ_q)|` from the spectrum of `-L`.
pub fn root_count_moments(net: &Network, q: f64) -> Result<Moments> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameters(format!("q must be > 0, got {q}")));
    }
    let spectrum = laplacian_spectrum(net, &[])?;
    let mut mean = Complex64::new(0.0, 0.0);
    let mut var = Complex64::new(0.0, 0.0);
    for lambda in spectrum {
        let p = q / (q + lambda);
        mean += p;
        var += p - p * p;
    }
    let scale = net.n() as f64;
    if mean.im.abs() > 1e-10 * scale || var.im.abs() > 1e-10 * scale {
        return Err(Error::NonPmf(format!("complex moments {mean}, {var}")));
    }
    Ok(Moments {
        mean: mean.re,
        variance: var.re,
    })
}

/// Probability that the loop-erased walk from `path[0]`, killed at rate `q` and
/// stopped in `B`, is exactly `path`.
pub fn lerw_path_prob(net: &Network, q: f64, absorbing: &[usize], path: &[usize]) -> Result<f64> {
    let b = vertex_set(net, absorbing)?;
    check_rate(q, &b)?;
    let (&last, body) = path
        .split_last()
        .ok_or_else(|| Error::InvalidPath("empty path".into()))?;
    let mut seen = vec![false; net.n()];
    for &x in path {
        if x >= net.n() {
            return Err(Error::VertexOutOfRange { vertex: x, n: net.n() });
        }
        if seen[x] {
            return Err(Error::NotSelfAvoiding);
        }
        seen[x] = true;
    }
    let in_b = |x: usize| b.binary_search(&x).is_ok();
    if in_b(path[0]) {
        return Err(Error::InvalidPath("path starts inside the absorbing set".into()));
    }
    if body.iter().any(|&x| in_b(x)) {
        return Err(Error::InvalidPath("path visits the absorbing set before its end".into()));
    }

    let weight: f64 = path.windows(2).map(|w| net.weight(w[0], w[1])).product();
    let denom = partition_fn(net, q, &b)?;
    let ends_in_b = in_b(last);
    let mut removed = b.clone();
    removed.extend_from_slice(if ends_in_b { body } else { path });
    let numer = partition_fn(net, q, &removed)?;
    let prefactor = if ends_in_b { 1.0 } else { q };
    Ok(prefactor * weight * numer / denom)
}

/// `E_x[T_B]` for every `x`, solving `[-L]_{V\B} h = 1`.
pub fn hitting_times(net: &Network, target: &[usize]) -> Result<Vec<f64>> {
    let b = vertex_set(net, target)?;
    if b.is_empty() {
        return Err(Error::InvalidParameters("target set must be nonempty".into()));
    }
    let free = complement(net.n(), &b);
    let m = shifted_block(net, 0.0, &free)?;
    let h = linalg::solve_vector(m, &DVector::from_element(free.len(), 1.0))?;
    let mut out = vec![0.0; net.n()];
    for (i, &x) in free.iter().enumerate() {
        out[x] = h[i];
    }
    Ok(out)
}

/// Index of the eigenvalue closest to zero.
fn zero_mode(spectrum: &[Complex64]) -> usize {
    (0..spectrum.len())
        .min_by(|&a, &b| spectrum[a].norm().total_cmp(&spectrum[b].norm()))
        .unwrap_or(0)
}

/// `E[E_x[T_{R(Φ_q)}]] = (1/q)(1 - Π_{j>0} λ_j / (q + λ_j))`, independent of `x`.
pub fn mean_root_hitting(net: &Network, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameters(format!("q must be > 0, got {q}")));
    }
    let spectrum = laplacian_spectrum(net, &[])?;
    let skip = zero_mode(&spectrum);
    let prod = spectrum
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .fold(Complex64::new(1.0, 0.0), |acc, (_, &l)| acc * l / (q + l));
    if prod.im.abs() > 1e-8 * prod.norm().max(1.0) {
        return Err(Error::NonPmf(format!("complex product {prod}")));
    }
    Ok((1.0 - prod.re) / q)
}

/// Magnitudes `a_0..=a_n` of the coefficients of `det(x Id - L) = Π (x + λ_j)`.
pub fn char_poly_coefficients(net: &Network) -> Result<Vec<f64>> {
    let spectrum = laplacian_spectrum(net, &[])?;
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for lambda in spectrum {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] += c * lambda;
        }
        coeffs = next;
    }
    let scale = coeffs.iter().fold(1.0_f64, |m, c| m.max(c.norm()));
    coeffs
        .iter()
        .map(|c| {
            if c.im.abs() > 1e-8 * scale {
                Err(Error::NonPmf(format!("characteristic coefficient {c} is not real")))
            } else {
                Ok(c.re.abs())
            }
        })
        .collect()
}

/// `E[E_x[T_R] | |R| = m] = a_{m+1} / a_m`, with `a_{n+1} = 0`.
pub fn mean_root_hitting_conditional(net: &Network, m: usize) -> Result<f64> {
    let n = net.n();
    if m == 0 || m > n {
        return Err(Error::InvalidParameters(format!("need 1 <= m <= {n}, got {m}")));
    }
    let a = char_poly_coefficients(net)?;
    let scale = a.iter().copied().fold(0.0, f64::max);
    if a[m] <= 1e-14 * scale {
        return Err(Error::ZeroCoefficient(m));
    }
    let next = if m == n { 0.0 } else { a[m + 1] };
    Ok(next / a[m])
}

/// Probability of a particular rooted forest under `Φ_{q,B}`, given by its
/// successor map (`None` marks a root).
pub fn forest_probability(net: &Network, q: f64, absorbing: &[usize], next: &[Option<usize>]) -> Result<f64> {
    let b = vertex_set(net, absorbing)?;
    check_rate(q, &b)?;
    if next.len() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: next.len(),
        });
    }
    if b.iter().any(|&x| next[x].is_some()) {
        return Ok(0.0);
    }
    let mut w = 1.0;
    let mut roots = 0;
    for (x, s) in next.iter().enumerate() {
        match s {
            None => roots += 1,
            Some(y) => w *= net.weight(x, *y),
        }
    }
    let z = partition_fn(net, q, &b)?;
    Ok(w * q.powi((roots - b.len()) as i32) / z)
}

/// Invariant measure of the walk restricted to `block` (only edges inside the
/// block), by the Markov chain tree theorem: `μ_A(r) ∝ det[-L_A]_{A \ {r}}`.
/// Entries follow the order of `block`.
pub fn restricted_invariant_measure(net: &Network, block: &[usize]) -> Result<Vec<f64>> {
    let a = vertex_set(net, block)?;
    if a.len() != block.len() {
        return Err(Error::InvalidParameters("block has repeated vertices".into()));
    }
    let k = block.len();
    let mut lap = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let w = net.weight(block[i], block[j]);
                lap[(i, j)] = -w;
                lap[(i, i)] += w;
            }
        }
    }
    let weights: Vec<f64> = (0..k)
        .map(|r| {
            let rest: Vec<usize> = (0..k).filter(|&i| i != r).collect();
            linalg::det(&linalg::submatrix(&lap, &rest, &rest)).max(0.0)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SingularSystem);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}
