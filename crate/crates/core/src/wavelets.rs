//! Intertwining wavelets.
//!
//! One level splits a signal `f` on `V` into an approximation
//! `f̄ = (K_{q'} f)|_{V̄}` and a detail `f̆ = ((K_{q'} - Id) f)|_{V̆}`, and
//! reconstructs it exactly as `R̄ f̄ + R̆ f̆`. The pyramid iterates this on the
//! trace process of the walk on the retained vertices, which are the roots of
//! a random forest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coarse::{self, BetaGamma, Blocks};
use crate::error::{Error, Result};
use crate::graph::{lp_norm, Exponent, Measure, Network};
use crate::linalg;
use crate::oracle;
use crate::sampler::{self, TuningRecord};

pub const PYRAMID_VERSION: u32 = 1;
/// Smallest eigenvalue of the unit-diagonal Gram matrix below which a basis is degenerate.
pub const BASIS_DEGENERACY: f64 = 1e-12;

/// Precomputed analysis and synthesis matrices of one level.
#[derive(Clone, Debug)]
pub struct LevelOperators {
    pub kept: Vec<usize>,
    pub rest: Vec<usize>,
    pub q_prime: f64,
    /// `K_{q'}` on the whole level.
    pub kernel: DMatrix<f64>,
    /// Schur complement `L̄` on `kept`, without clamping.
    pub schur: DMatrix<f64>,
    /// `R̄`, `|V| × |V̄|`, rows in level order.
    pub approx: DMatrix<f64>,
    /// `R̆`, `|V| × |V̆|`, rows in level order.
    pub detail: DMatrix<f64>,
}

impl LevelOperators {
    pub fn new(net: &Network, kept: &[usize], q_prime: f64) -> Result<Self> {
        if !(q_prime > 0.0) || !q_prime.is_finite() {
            return Err(Error::InvalidParameters(format!("q' must be > 0, got {q_prime}")));
        }
        let kept = coarse::proper_subset(net, kept)?;
        let blocks = Blocks::new(net, kept.clone())?;
        let rest = blocks.rest.clone();
        let (m, r) = (kept.len(), rest.len());
        let kernel = oracle::killed_kernel(net, q_prime)?;
        let schur = blocks.schur()?;
        // (-L_{V̆})^{-1}
        let green = linalg::inverse(-blocks.rr.clone())?;

        let top = DMatrix::identity(m, m) - &schur / q_prime;
        let bottom = &green * &blocks.rk;
        let top_d = &blocks.kr * &green;
        let bottom_d = -DMatrix::identity(r, r) - &green * q_prime;

        let n = net.n();
        let mut approx = DMatrix::zeros(n, m);
        let mut detail = DMatrix::zeros(n, r);
        for (i, &x) in kept.iter().enumerate() {
            approx.set_row(x, &top.row(i));
            detail.set_row(x, &top_d.row(i));
        }
        for (i, &x) in rest.iter().enumerate() {
            approx.set_row(x, &bottom.row(i));
            detail.set_row(x, &bottom_d.row(i));
        }
        Ok(LevelOperators {
            kept,
            rest,
            q_prime,
            kernel,
            schur,
            approx,
            detail,
        })
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn analyze(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: f.len(),
            });
        }
        let kf = &self.kernel * DVector::from_column_slice(f);
        let bar = self.kept.iter().map(|&x| kf[x]).collect();
        let breve = self.rest.iter().map(|&x| kf[x] - f[x]).collect();
        Ok((bar, breve))
    }

    pub fn reconstruct(&self, bar: &[f64], breve: &[f64]) -> Result<Vec<f64>> {
        if bar.len() != self.kept.len() || breve.len() != self.rest.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} + {} coefficients, got {} + {}",
                self.kept.len(),
                self.rest.len(),
                bar.len(),
                breve.len()
            )));
        }
        let out = &self.approx * DVector::from_column_slice(bar) + &self.detail * DVector::from_column_slice(breve);
        Ok(out.iter().copied().collect())
    }

    /// `max_x K_{q'}(x, V̆)`.
    pub fn kernel_rest_max(&self) -> f64 {
        (0..self.n())
            .map(|x| self.rest.iter().map(|&y| self.kernel[(x, y)]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest exit rate of `L̄`.
    pub fn schur_w_max(&self) -> f64 {
        (0..self.kept.len()).map(|i| -self.schur[(i, i)]).fold(0.0, f64::max)
    }
}

/// One-level analysis `(f̄, f̆)`.
pub fn analyze_level(net: &Network, kept: &[usize], q_prime: f64, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    LevelOperators::new(net, kept, q_prime)?.analyze(f)
}

/// One-level synthesis `R̄ f̄ + R̆ f̆`.
pub fn reconstruct_level(net: &Network, kept: &[usize], q_prime: f64, bar: &[f64], breve: &[f64]) -> Result<Vec<f64>> {
    LevelOperators::new(net, kept, q_prime)?.reconstruct(bar, breve)
}

/// Scaling functions `φ_x̄` and wavelets `ψ_x̆` as rows, densities with respect to `μ`.
#[derive(Clone, Debug)]
pub struct Basis {
    pub kept: Vec<usize>,
    pub rest: Vec<usize>,
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

impl Basis {
    /// All `n` functions stacked, scaling functions first.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.phi.ncols();
        let mut all = DMatrix::zeros(self.phi.nrows() + self.psi.nrows(), n);
        all.rows_mut(0, self.phi.nrows()).copy_from(&self.phi);
        all.rows_mut(self.phi.nrows(), self.psi.nrows()).copy_from(&self.psi);
        all
    }
}

/// `μ`-weighted Gram matrix of the rows of `b`.
pub fn mu_gram(b: &DMatrix<f64>, mu: &[f64]) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= mu[j];
    }
    scaled * b.transpose()
}

pub fn basis_functions(net: &Network, kept: &[usize], q_prime: f64) -> Result<Basis> {
    let ops = LevelOperators::new(net, kept, q_prime)?;
    let mu = net.mu();
    let n = net.n();
    let phi = DMatrix::from_fn(ops.kept.len(), n, |i, y| ops.kernel[(ops.kept[i], y)] / mu[y]);
    let psi = DMatrix::from_fn(ops.rest.len(), n, |i, y| {
        let x = ops.rest[i];
        let delta = if x == y { 1.0 } else { 0.0 };
        (ops.kernel[(x, y)] - delta) / mu[y]
    });
    let basis = Basis {
        kept: ops.kept,
        rest: ops.rest,
        phi,
        psi,
    };
    let g = mu_gram(&basis.stacked(), mu);
    let d: Vec<f64> = g.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateBasis);
    }
    let unit = DMatrix::from_fn(n, n, |i, j| g[(i, j)] / (d[i] * d[j]));
    let least = unit.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(least > BASIS_DEGENERACY) {
        return Err(Error::DegenerateBasis);
    }
    Ok(basis)
}

/// Settings of the pyramid construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    /// Candidate forest rates; `None` uses `default_q_grid` of each level.
    pub q_grid: Option<Vec<f64>>,
    /// Forest samples per grid point in the rate scan.
    pub tuning_samples: usize,
    /// Slack for sparsifying each reduced network; `None` disables it.
    pub sparsify: Option<f64>,
    /// Retained sets imposed on the first levels instead of sampled roots.
    pub forced_roots: Option<Vec<Vec<usize>>>,
    /// Forest redraws allowed when every vertex comes out a root.
    pub max_retries: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            q_grid: None,
            tuning_samples: 64,
            sparsify: None,
            forced_roots: None,
            max_retries: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PyramidLevel {
    /// Network `L_i` of this level, on `0..vertex_ids.len()`.
    pub network: Network,
    /// Base ids of the level vertices.
    pub vertex_ids: Vec<usize>,
    /// Retained vertices (level ids); they index the next level.
    pub kept: Vec<usize>,
    /// Removed vertices (level ids); `detail` is indexed like this.
    pub rest: Vec<usize>,
    /// Forest rate used for downsampling (0 when the retained set was imposed).
    pub q: f64,
    pub q_prime: f64,
    pub detail: Vec<f64>,
    pub tuning: Vec<TuningRecord>,
    /// Forest draws needed to get a proper subset.
    pub attempts: usize,
    /// Whether the next level's network was sparsified.
    pub sparsified: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pyramid {
    pub version: u32,
    pub seed: u64,
    pub config: PyramidConfig,
    /// Analysed signal on the base network.
    pub signal: Vec<f64>,
    pub levels: Vec<PyramidLevel>,
    /// Final approximation `f_N`, indexed like the last level's `kept`.
    pub approximation: Vec<f64>,
    /// Requested depth.
    pub requested_levels: usize,
    /// Set when fewer levels than requested could be built.
    pub truncated: bool,
    /// Weight used to rank detail coefficients in `compress`.
    pub compression_weight: String,
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Builds an `N`-level pyramid. Each level picks the forest rate minimizing
/// `w̃ · (1/β̃)` over the grid, keeps the roots of one forest draw, sets
/// `q' = 2 w_max |R| / |V \ R|` and passes to the trace process on the roots.
pub fn build_pyramid(net: &Network, f: &[f64], levels: usize, config: &PyramidConfig, seed: u64) -> Result<Pyramid> {
    if levels == 0 {
        return Err(Error::InvalidParameters("need at least one level".into()));
    }
    if f.len() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: f.len(),
        });
    }
    if config.tuning_samples == 0 {
        return Err(Error::InvalidParameters("tuning_samples must be positive".into()));
    }
    let mut current = net.clone();
    let mut ids: Vec<usize> = (0..net.n()).collect();
    let mut signal = f.to_vec();
    let mut out = Vec::new();
    let mut truncated = false;

    for i in 0..levels {
        let n = current.n();
        if n < 2 {
            truncated = true;
            break;
        }
        let lseed = level_seed(seed, i);
        let forced = config.forced_roots.as_ref().and_then(|r| r.get(i));
        let (kept, q, tuning, attempts) = match forced {
            Some(k) => (coarse::proper_subset(&current, k)?, 0.0, Vec::new(), 0),
            None => {
                let grid = config.q_grid.clone().unwrap_or_else(|| sampler::default_q_grid(&current));
                let tuning = sampler::estimate_tuning(&current, &grid, config.tuning_samples, lseed)?;
                let best = sampler::select_rate(&tuning)
                    .ok_or_else(|| Error::InvalidParameters("empty rate grid".into()))?;
                let q = tuning[best].q;
                let mut found = None;
                for attempt in 0..=config.max_retries {
                    let mut rng = sampler::stream_rng(lseed.rotate_left(32), attempt as u64);
                    let forest = sampler::wilson_with_rng(&current, q, &[], &mut rng)?;
                    if forest.root_count() < n {
                        found = Some((forest.roots, attempt + 1));
                        break;
                    }
                }
                match found {
                    Some((roots, attempts)) => (roots, q, tuning, attempts),
                    None => {
                        truncated = true;
                        break;
                    }
                }
            }
        };
        let r = kept.len() as f64;
        let w = if current.w_max() > 0.0 { current.w_max() } else { 1.0 };
        let q_prime = 2.0 * w * r / (n as f64 - r);
        let ops = LevelOperators::new(&current, &kept, q_prime)?;
        let (bar, breve) = ops.analyze(&signal)?;

        let mut reduced = coarse::schur_reduce(&current, &kept)?;
        let mut sparsified = false;
        if let Some(theta) = config.sparsify {
            if reduced.len() > 2 {
                let link = coarse::kernel_link(&current, &kept, q_prime)?;
                let s = coarse::sparsify(&current, &reduced, &link, theta)?;
                sparsified = s.edge_count() < reduced.edge_count();
                reduced = s;
            }
        }
        let next_ids: Vec<usize> = kept.iter().map(|&x| ids[x]).collect();
        out.push(PyramidLevel {
            network: current,
            vertex_ids: ids,
            kept,
            rest: ops.rest,
            q,
            q_prime,
            detail: breve,
            tuning,
            attempts,
            sparsified,
        });
        current = reduced.network;
        ids = next_ids;
        signal = bar;
    }
    if out.is_empty() {
        return Err(Error::InvalidParameters("network too small for a single level".into()));
    }
    Ok(Pyramid {
        version: PYRAMID_VERSION,
        seed,
        config: config.clone(),
        signal: f.to_vec(),
        levels: out,
        approximation: signal,
        requested_levels: levels,
        truncated,
        compression_weight: "abs_coefficient_times_sqrt_base_mu".into(),
    })
}

impl Pyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Number of stored coefficients; equals the base vertex count.
    pub fn coefficient_count(&self) -> usize {
        self.approximation.len() + self.levels.iter().map(|l| l.detail.len()).sum::<usize>()
    }

    /// Synthesis operators of every level, from the unsparsified trace process.
    pub fn operators(&self) -> Result<Vec<LevelOperators>> {
        self.levels
            .iter()
            .map(|l| LevelOperators::new(&l.network, &l.kept, l.q_prime))
            .collect()
    }

    /// Base id of every stored coefficient: the approximation first, then the
    /// details level by level.
    pub fn coefficient_ids(&self) -> Vec<usize> {
        let last = self.levels.last().expect("pyramid has a level");
        let mut ids: Vec<usize> = last.kept.iter().map(|&x| last.vertex_ids[x]).collect();
        for l in &self.levels {
            ids.extend(l.rest.iter().map(|&x| l.vertex_ids[x]));
        }
        ids
    }

    pub fn base(&self) -> &Network {
        &self.levels[0].network
    }

    /// Checks stored shapes against the level structure.
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::ShapeMismatch("pyramid has no levels".into()));
        }
        for (i, l) in self.levels.iter().enumerate() {
            let n = l.network.n();
            if l.vertex_ids.len() != n || l.kept.len() + l.rest.len() != n || l.detail.len() != l.rest.len() {
                return Err(Error::ShapeMismatch(format!("level {i} is inconsistent")));
            }
            let next = self.levels.get(i + 1).map_or(self.approximation.len(), |l| l.network.n());
            if next != l.kept.len() {
                return Err(Error::ShapeMismatch(format!("level {i} does not match its successor")));
            }
        }
        if self.signal.len() != self.base().n() {
            return Err(Error::ShapeMismatch("signal length differs from base network".into()));
        }
        Ok(())
    }
}

fn synthesize(pyr: &Pyramid, ops: &[LevelOperators], with_details: bool) -> Result<Vec<f64>> {
    pyr.validate()?;
    let mut f = pyr.approximation.clone();
    for (l, op) in pyr.levels.iter().zip(ops).rev() {
        let zeros;
        let details = if with_details {
            &l.detail
        } else {
            zeros = vec![0.0; l.detail.len()];
            &zeros
        };
        f = op.reconstruct(&f, details)?;
    }
    Ok(f)
}

/// `f_0 = R̄_0 ⋯ R̄_{N-1} f_N + Σ_j (R̄_0 ⋯ R̄_{j-1}) R̆_j g_{j+1}`.
pub fn reconstruct_pyramid(pyr: &Pyramid) -> Result<Vec<f64>> {
    synthesize(pyr, &pyr.operators()?, true)
}

/// `f̃(N) = R̄_0 ⋯ R̄_{N-1} f_N`.
pub fn approximation_n(pyr: &Pyramid) -> Result<Vec<f64>> {
    synthesize(pyr, &pyr.operators()?, false)
}

/// `‖U_N f‖_p`: coefficients weighted by the base `μ` of their vertices.
pub fn analysis_norm(pyr: &Pyramid, p: Exponent) -> Result<f64> {
    let mu = pyr.base().mu();
    let ids = pyr.coefficient_ids();
    let coeffs = pyr
        .approximation
        .iter()
        .chain(pyr.levels.iter().flat_map(|l| l.detail.iter()));
    let values: Vec<f64> = coeffs.copied().collect();
    let weights: Vec<f64> = ids.iter().map(|&x| mu[x]).collect();
    lp_norm(&values, &Measure::new(weights)?, p)
}

#[derive(Clone, Debug)]
pub struct Compressed {
    pub pyramid: Pyramid,
    pub reconstruction: Vec<f64>,
    /// `‖f - f_c‖_{2,μ} / ‖f‖_{2,μ}` on the base network.
    pub relative_error: f64,
    pub kept_details: usize,
    pub total_details: usize,
}

/// Detail positions `(level, index)` sorted by decreasing `|g| · √μ(x̆)`.
fn ranked_details(pyr: &Pyramid) -> Vec<(usize, usize)> {
    let mu = pyr.base().mu();
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for (i, l) in pyr.levels.iter().enumerate() {
        for (j, (&g, &x)) in l.detail.iter().zip(&l.rest).enumerate() {
            scored.push((g.abs() * mu[l.vertex_ids[x]].sqrt(), i, j));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    scored.into_iter().map(|(_, i, j)| (i, j)).collect()
}

fn relative_l2(f: &[f64], g: &[f64], mu: &Measure) -> Result<f64> {
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
    let num = lp_norm(&diff, mu, Exponent::Finite(2.0))?;
    let den = lp_norm(f, mu, Exponent::Finite(2.0))?;
    Ok(if den > 0.0 { num / den } else { num })
}

fn compress_with(pyr: &Pyramid, ops: &[LevelOperators], ranked: &[(usize, usize)], keep_fraction: f64) -> Result<Compressed> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::InvalidParameters(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let total = ranked.len();
    let keep = ((keep_fraction * total as f64).round() as usize).min(total);
    let mut out = pyr.clone();
    for &(i, j) in &ranked[keep..] {
        out.levels[i].detail[j] = 0.0;
    }
    let reconstruction = synthesize(&out, ops, true)?;
    let relative_error = relative_l2(&pyr.signal, &reconstruction, &pyr.base().mu_measure())?;
    Ok(Compressed {
        pyramid: out,
        reconstruction,
        relative_error,
        kept_details: keep,
        total_details: total,
    })
}

/// Keeps the largest `keep_fraction` of the weighted detail coefficients across
/// all levels and zeroes the rest.
pub fn compress(pyr: &Pyramid, keep_fraction: f64) -> Result<Compressed> {
    compress_with(pyr, &pyr.operators()?, &ranked_details(pyr), keep_fraction)
}

/// `(keep_fraction, relative_error)` for each fraction.
pub fn compression_curve(pyr: &Pyramid, fractions: &[f64]) -> Result<Vec<(f64, f64)>> {
    let ops = pyr.operators()?;
    let ranked = ranked_details(pyr);
    fractions
        .iter()
        .map(|&t| compress_with(pyr, &ops, &ranked, t).map(|c| (t, c.relative_error)))
        .collect()
}

/// Level quantities entering the stability bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelConstants {
    /// `w_max` of the level generator.
    pub w_max: f64,
    /// `w_max` of its trace process `L̄`.
    pub w_bar_max: f64,
    pub beta: f64,
    pub gamma: f64,
    pub q_prime: f64,
    /// `μ(V̄)` and `μ(V̆)` for the level measure.
    pub mass_kept: f64,
    pub mass_rest: f64,
    /// `max_x K_{q'}(x, V̆)`.
    pub kernel_rest_max: f64,
}

impl LevelConstants {
    pub fn new(net: &Network, ops: &LevelOperators) -> Result<Self> {
        let BetaGamma { beta, gamma } = coarse::beta_gamma(net, &ops.kept)?;
        let mu = net.mu_measure();
        Ok(LevelConstants {
            w_max: net.w_max(),
            w_bar_max: ops.schur_w_max(),
            beta,
            gamma,
            q_prime: ops.q_prime,
            mass_kept: mu.mass_of(&ops.kept),
            mass_rest: mu.mass_of(&ops.rest),
            kernel_rest_max: ops.kernel_rest_max(),
        })
    }

    /// `[(1 + 2 w̄/q')^p + w/β]^{1/p}`.
    fn approx_factor(&self, p: Exponent) -> f64 {
        let a = 1.0 + 2.0 * self.w_bar_max / self.q_prime;
        match p {
            Exponent::Infinity => a,
            Exponent::Finite(p) => (a.powf(p) + self.w_max / self.beta).powf(1.0 / p),
        }
    }

    /// `[(w/β)^{p/p*} + (1 + q'/γ)^p]^{1/p}`.
    fn detail_factor(&self, p: Exponent) -> f64 {
        let a = self.w_max / self.beta;
        let b = 1.0 + self.q_prime / self.gamma;
        match p {
            Exponent::Infinity => a.max(b),
            Exponent::Finite(p) => (a.powf(p - 1.0) + b.powf(p)).powf(1.0 / p),
        }
    }

    /// Bound on `‖R̄ f‖_{p,V} / ‖f‖_{p,V̄}`.
    pub fn approx_norm_bound(&self, p: Exponent) -> f64 {
        self.approx_factor(p) * self.mass_kept.powf(p.inv())
    }

    /// Bound on `‖R̆ f‖_{p,V} / ‖f‖_{p,V̆}`.
    pub fn detail_norm_bound(&self, p: Exponent) -> f64 {
        self.detail_factor(p) * self.mass_rest.powf(p.inv())
    }

    /// Bound on `‖f̆‖_{p,V̆}` given `‖Lf‖_{p,V}`.
    pub fn detail_size_bound(&self, p: Exponent, lf_norm: f64) -> f64 {
        self.kernel_rest_max.powf(p.inv()) / (self.q_prime * self.mass_rest.powf(p.inv())) * lf_norm
    }
}

/// `2^{1/p*} (1 + N)^{1/p}`.
pub fn analysis_bound(p: Exponent, levels: usize) -> f64 {
    2f64.powf(p.inv_conjugate()) * (1.0 + levels as f64).powf(p.inv())
}

/// Right-hand side of Jackson's inequality for `‖f - f̃(N)‖_{p,V}`.
pub fn jackson_bound(levels: &[LevelConstants], p: Exponent, lf_norm: f64, f_norm: f64) -> f64 {
    let mut total = 0.0;
    let mut prefix = 1.0;
    let mut drift = 0.0;
    for c in levels {
        let head = prefix * c.detail_factor(p) / c.q_prime;
        total += head * (lf_norm + drift * f_norm);
        prefix *= c.approx_factor(p);
        drift += 2.0 * c.q_prime * (c.w_max / c.beta).powf(p.inv_conjugate());
    }
    total
}

/// Measured quantities and their bounds for one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStability {
    pub constants: LevelConstants,
    pub approx_norm_bound: f64,
    pub detail_norm_bound: f64,
    pub detail_size_bound: f64,
    /// `‖g_{i+1}‖_{p,V̆_i}` of the stored detail.
    pub detail_size: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p: Exponent,
    pub levels: Vec<LevelStability>,
    pub analysis_bound: f64,
    pub analysis_norm: f64,
    pub signal_norm: f64,
    pub jackson_bound: f64,
    pub approximation_error: f64,
}

/// Evaluates every stability bound of a pyramid built on an unmodified signal.
pub fn stability_bounds(pyr: &Pyramid, p: Exponent) -> Result<StabilityReport> {
    let ops = pyr.operators()?;
    let mut levels = Vec::new();
    let mut f = pyr.signal.clone();
    for (l, op) in pyr.levels.iter().zip(&ops) {
        let c = LevelConstants::new(&l.network, op)?;
        let mu = l.network.mu_measure();
        let lf = lp_norm(&l.network.apply_generator(&f), &mu, p)?;
        let rest_mu = mu.conditioned(&op.rest);
        let (bar, breve) = op.analyze(&f)?;
        levels.push(LevelStability {
            constants: c,
            approx_norm_bound: c.approx_norm_bound(p),
            detail_norm_bound: c.detail_norm_bound(p),
            detail_size_bound: c.detail_size_bound(p, lf),
            detail_size: lp_norm(&breve, &rest_mu, p)?,
        });
        f = bar;
    }
    let base = pyr.base();
    let mu = base.mu_measure();
    let signal_norm = lp_norm(&pyr.signal, &mu, p)?;
    let lf0 = lp_norm(&base.apply_generator(&pyr.signal), &mu, p)?;
    let constants: Vec<LevelConstants> = levels.iter().map(|l| l.constants).collect();
    let approx = synthesize(pyr, &ops, false)?;
    let diff: Vec<f64> = pyr.signal.iter().zip(&approx).map(|(a, b)| a - b).collect();
    Ok(StabilityReport {
        p,
        analysis_bound: analysis_bound(p, pyr.depth()) * signal_norm,
        analysis_norm: analysis_norm(pyr, p)?,
        signal_norm,
        jackson_bound: jackson_bound(&constants, p, lf0, signal_norm),
        approximation_error: lp_norm(&diff, &mu, p)?,
        levels,
    })
}

/// Exact `ℓ_p(ν) → ℓ_p(μ)` norm of a matrix for `p ∈ {1, ∞}`; `None` otherwise.
pub fn weighted_operator_norm(m: &DMatrix<f64>, mu_out: &[f64], nu_in: &[f64], p: Exponent) -> Option<f64> {
    match p {
        Exponent::Infinity => Some(
            (0..m.nrows())
                .filter(|&i| mu_out[i] > 0.0)
                .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        ),
        Exponent::Finite(p) if p == 1.0 => Some(
            (0..m.ncols())
                .map(|j| (0..m.nrows()).map(|i| mu_out[i] * m[(i, j)].abs()).sum::<f64>() / nu_in[j])
                .fold(0.0, f64::max),
        ),
        Exponent::Finite(_) => None,
    }
}
