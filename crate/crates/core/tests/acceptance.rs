mod common;

use std::time::Instant;

use common::{enumerate, prob, root_count_pmf, subsets, test_graphs, total};
use forestwave::coarse;
use forestwave::graph::lp_norm;
use forestwave::oracle;
use forestwave::sampler::{self, stream_rng};
use forestwave::wavelets::{self, LevelConstants, LevelOperators, Pyramid, PyramidConfig};
use forestwave::{Edge, Exponent, Measure, Network};
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn two_node() -> Network {
    Network::new(2, vec![Edge::new(0, 1, 2.0), Edge::new(1, 0, 1.0)]).unwrap()
}

fn three_cycle() -> Network {
    Network::new(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0), Edge::new(2, 0, 1.0)]).unwrap()
}

fn random_signal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 7);
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_vs_enumeration() -> Outcome {
    let start = Instant::now();
    let graphs = test_graphs();
    ensure(graphs.len() >= 6, || "fewer than 6 graphs".into())?;
    let mut worst: f64 = 0.0;
    for (name, net) in &graphs {
        let n = net.n();
        for q in [0.25, 1.0, 3.0] {
            for b in [vec![], vec![0], vec![n - 1]] {
                let forests = enumerate(net, q, &b);
                let z = total(&forests);
                let det = oracle::partition_fn(net, q, &b).map_err(|e| e.to_string())?;
                worst = worst.max((z - det).abs() / z.max(1.0));
                for a in subsets(n) {
                    let brute = prob(&forests, |f| a.iter().all(|&x| f.next[x].is_none()));
                    let o = oracle::root_inclusion_prob(net, q, &b, &a).map_err(|e| e.to_string())?;
                    worst = worst.max((brute - o).abs());
                }
                let edges: Vec<(usize, usize)> = net.edges().iter().map(|e| (e.src, e.dst)).collect();
                for i in 0..edges.len() {
                    for j in i..edges.len() {
                        let es = if i == j { vec![edges[i]] } else { vec![edges[i], edges[j]] };
                        let brute = prob(&forests, |f| es.iter().all(|&(x, y)| f.has_edge(x, y)));
                        let o = oracle::edge_inclusion_prob(net, q, &b, &es).map_err(|e| e.to_string())?;
                        worst = worst.max((brute - o).abs());
                    }
                }
                let law = oracle::root_count_law(net, q, &b).map_err(|e| e.to_string())?;
                for (k, p) in root_count_pmf(&forests, n).iter().enumerate() {
                    worst = worst.max((p - law.prob(k)).abs());
                }
                ensure(worst <= 1e-9, || format!("{name} q={q} B={b:?}: error {worst:e}"))?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} graphs, max error {worst:.1e}, {secs:.2}s", graphs.len()))
}

fn sampler_vs_oracle() -> Outcome {
    let start = Instant::now();
    let samples = 100_000;
    let mut notes = Vec::new();
    for (name, net, q, target) in [
        ("two-node", two_node(), 3.0, vec![(1, 0.5), (2, 0.5)]),
        ("3-cycle", three_cycle(), 1.0, vec![(1, 3.0 / 7.0), (2, 3.0 / 7.0), (3, 1.0 / 7.0)]),
    ] {
        let law = oracle::root_count_law(&net, q, &[]).map_err(|e| e.to_string())?;
        let stats = sampler::empirical_stats(&net, q, &[], samples, 7).map_err(|e| e.to_string())?;
        for (k, p) in target {
            ensure((law.prob(k) - p).abs() < 1e-12, || format!("{name}: oracle pmf({k}) = {}", law.prob(k)))?;
            let sigma = (p * (1.0 - p) / samples as f64).sqrt();
            let f = stats.root_count_freq(k);
            ensure((f - p).abs() <= 3.0 * sigma, || format!("{name}: freq({k}) = {f} vs {p}"))?;
        }
        let chi = stats.chi_square(&law);
        ensure(chi.p_value > 1e-3, || format!("{name}: chi-square p = {}", chi.p_value))?;
        notes.push(format!("{name} p={:.3}", chi.p_value));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{}, {secs:.2}s", notes.join(", ")))
}

fn well_distributed_roots() -> Outcome {
    let samples = 40_000;
    let mut notes = Vec::new();
    let square = Network::undirected(4, &[(0, 1, 1.0), (1, 2, 2.5), (2, 3, 0.5), (3, 0, 1.5)]).unwrap();
    for (name, net, q) in [("two-node", two_node(), 3.0), ("3-path", Network::path(3).unwrap(), 1.0), ("4-cycle", square, 0.8)] {
        let n = net.n();
        let formula = oracle::mean_root_hitting(&net, q).map_err(|e| e.to_string())?;
        let draws = sampler::map_samples(&net, q, &[], samples, 31, |f| oracle::hitting_times(&net, &f.roots))
            .map_err(|e| e.to_string())?;
        let h: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let mut grand = 0.0;
        for x in 0..n {
            let mean = h.iter().map(|v| v[x]).sum::<f64>() / samples as f64;
            let var = h.iter().map(|v| (v[x] - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            let sigma = (var / samples as f64).sqrt();
            ensure((mean - formula).abs() <= 3.0 * sigma, || {
                format!("{name} x={x}: {mean} vs {formula} (sigma {sigma:.2e})")
            })?;
            grand += mean / n as f64;
        }
        ensure((grand - formula).abs() <= 0.02 * formula, || format!("{name}: {grand} vs {formula}"))?;
        notes.push(format!("{name} {grand:.4}/{formula:.4}"));
    }

    let net = two_node();
    let target = oracle::mean_root_hitting_conditional(&net, 1).map_err(|e| e.to_string())?;
    let draws = sampler::map_samples(&net, 3.0, &[], 100_000, 32, |f| {
        (f.root_count() == 1).then(|| oracle::hitting_times(&net, &f.roots).unwrap())
    })
    .map_err(|e| e.to_string())?;
    let kept: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    for x in 0..2 {
        let mean = kept.iter().map(|v| v[x]).sum::<f64>() / kept.len() as f64;
        ensure((mean - 1.0 / 3.0).abs() <= 0.01, || format!("conditional x={x}: {mean}"))?;
    }
    ensure((target - 1.0 / 3.0).abs() < 1e-12, || format!("a2/a1 = {target}"))?;
    notes.push(format!("conditional m=1 {target:.4} on {} samples", kept.len()));
    Ok(notes.join(", "))
}

fn restricted_equilibrium_roots() -> Outcome {
    let mut notes = Vec::new();
    for (name, net, q) in [("two-node", two_node(), 3.0), ("3-path", Network::path(3).unwrap(), 1.0)] {
        let r = sampler::conditional_root_equilibrium_check(&net, q, 100_000, 41, 1000).map_err(|e| e.to_string())?;
        ensure(!r.partitions.is_empty(), || format!("{name}: no partitions"))?;
        ensure(r.max_tv <= 0.02, || format!("{name}: max TV {}", r.max_tv))?;
        notes.push(format!("{name} max TV {:.4} over {} partitions", r.max_tv, r.partitions.len()));
    }
    Ok(notes.join(", "))
}

fn schur_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    let cases: Vec<(Network, Vec<usize>, Vec<usize>)> = vec![
        (Network::grid(5, 5).unwrap(), (0..25).step_by(2).collect(), vec![0, 2, 5, 7, 10, 12]),
        (test_graphs().remove(6).1, vec![0, 1, 3, 4], vec![0, 3]),
        (Network::cycle(20).unwrap(), (0..20).filter(|x| x % 4 != 1).collect(), vec![0, 2, 4, 9, 11]),
    ];
    for (net, first, second) in &cases {
        let r1 = coarse::schur_reduce(net, first).map_err(|e| e.to_string())?;
        let r2 = coarse::schur_reduce(&r1.network, second).map_err(|e| e.to_string())?;
        let global: Vec<usize> = second.iter().map(|&i| first[i]).collect();
        let direct = coarse::schur_reduce(net, &global).map_err(|e| e.to_string())?;
        worst = worst.max((&r2.generator - &direct.generator).amax());
        if net.is_reversible() {
            ensure(r1.detailed_balance_defect() <= 1e-9 && r2.detailed_balance_defect() <= 1e-9, || {
                "reversibility lost".into()
            })?;
        }
    }
    ensure(worst <= 1e-9, || format!("transitivity error {worst:e}"))?;

    let net = Network::path(3).unwrap();
    let pbar = coarse::schur_reduce(&net, &[0, 2]).map_err(|e| e.to_string())?.trace_kernel();
    let p = net.skeleton().map_err(|e| e.to_string())?;
    let samples = 200_000u64;
    let mut rng = stream_rng(51, 0);
    let mut far = 0u64;
    for _ in 0..samples {
        let mut x = 0usize;
        loop {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = 2;
            for z in 0..3 {
                acc += p[(x, z)];
                if u < acc {
                    next = z;
                    break;
                }
            }
            x = next;
            if x != 1 {
                break;
            }
        }
        far += (x == 2) as u64;
    }
    let target = pbar[(0, 1)];
    let freq = far as f64 / samples as f64;
    let sigma = (target * (1.0 - target) / samples as f64).sqrt();
    ensure((freq - target).abs() <= 3.0 * sigma, || format!("landing {freq} vs {target}"))?;
    Ok(format!("transitivity {worst:.1e}, landing {freq:.4} vs {target:.4}"))
}

fn exact_delta_intertwining() -> Outcome {
    let mut graphs = test_graphs();
    graphs.push(("6-cycle", Network::cycle(6).unwrap()));
    let mut worst: f64 = 0.0;
    for (name, net) in &graphs {
        let blocks: Vec<Vec<usize>> = (0..net.n()).map(|x| vec![x]).collect();
        let link = coarse::partition_link(net, &blocks).map_err(|e| e.to_string())?;
        for q_prime in [1e-3, 0.3, 1.0, 7.0, 250.0] {
            let p = coarse::metastable_kernel(net, &link, q_prime).map_err(|e| e.to_string())?;
            let tv = coarse::intertwining_error_tv(net, &link, &p, q_prime).map_err(|e| e.to_string())?;
            worst = tv.iter().fold(worst, |a, &t| a.max(t));
            ensure(worst <= 1e-12, || format!("{name} q'={q_prime}: {worst:e}"))?;
        }
    }
    Ok(format!("{} graphs, max TV {worst:.1e}", graphs.len()))
}

fn small_config() -> PyramidConfig {
    PyramidConfig {
        tuning_samples: 32,
        ..Default::default()
    }
}

fn perfect_reconstruction() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_detail: f64 = 0.0;
    for net in [Network::cycle(64).unwrap(), Network::grid(16, 16).unwrap()] {
        let n = net.n();
        let kept: Vec<usize> = (0..n).filter(|x| x % 3 != 1).collect();
        let r = kept.len() as f64;
        let ops = LevelOperators::new(&net, &kept, 2.0 * net.w_max() * r / (n as f64 - r)).map_err(|e| e.to_string())?;
        let f = random_signal(n, 3);
        let (bar, breve) = ops.analyze(&f).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs(&ops.reconstruct(&bar, &breve).map_err(|e| e.to_string())?, &f));
        for levels in 1..=3 {
            let f = random_signal(n, levels as u64);
            let pyr = wavelets::build_pyramid(&net, &f, levels, &small_config(), 60 + levels as u64)
                .map_err(|e| e.to_string())?;
            ensure(pyr.depth() == levels, || format!("only {} levels", pyr.depth()))?;
            worst = worst.max(max_abs(&wavelets::reconstruct_pyramid(&pyr).map_err(|e| e.to_string())?, &f));
            let c = wavelets::build_pyramid(&net, &vec![0.75; n], levels, &small_config(), 70 + levels as u64)
                .map_err(|e| e.to_string())?;
            for l in &c.levels {
                worst_detail = l.detail.iter().fold(worst_detail, |a, g| a.max(g.abs()));
            }
        }
    }
    ensure(worst <= 1e-8, || format!("reconstruction error {worst:e}"))?;
    ensure(worst_detail <= 1e-9, || format!("constant-signal detail {worst_detail:e}"))?;
    Ok(format!("max error {worst:.1e}, constant details {worst_detail:.1e}"))
}

fn l2_operator_norm(m: &DMatrix<f64>, mu_out: &[f64], nu_in: &[f64]) -> f64 {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| mu_out[i].sqrt() * m[(i, j)] / nu_in[j].sqrt())
        .singular_values()
        .max()
}

fn bound_domination() -> Outcome {
    const SLACK: f64 = 1e-9;
    let exps = [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity];
    let mut checks = 0usize;
    let level_cases: Vec<(Network, Vec<usize>, f64)> = vec![
        (two_node(), vec![0], 3.0),
        (Network::path(3).unwrap(), vec![0, 2], 1.0),
        (Network::cycle(16).unwrap(), vec![0, 4, 8, 12], 4.0 / 3.0),
        (Network::grid(5, 5).unwrap(), vec![0, 2, 4, 10, 12, 14, 20, 22, 24], 4.5),
        (test_graphs().remove(5).1, vec![1, 3], 0.8),
    ];
    for (net, kept, q_prime) in &level_cases {
        let ops = LevelOperators::new(net, kept, *q_prime).map_err(|e| e.to_string())?;
        let c = LevelConstants::new(net, &ops).map_err(|e| e.to_string())?;
        let mu = net.mu_measure();
        let bar_mu = mu.conditioned(&ops.kept).values;
        let rest_mu = mu.conditioned(&ops.rest).values;
        for p in exps {
            let norm = |m: &DMatrix<f64>, nu: &[f64]| {
                wavelets::weighted_operator_norm(m, net.mu(), nu, p).unwrap_or_else(|| l2_operator_norm(m, net.mu(), nu))
            };
            let a = norm(&ops.approx, &bar_mu);
            let d = norm(&ops.detail, &rest_mu);
            ensure(a <= c.approx_norm_bound(p) + SLACK, || format!("approx norm {a} > {}", c.approx_norm_bound(p)))?;
            ensure(d <= c.detail_norm_bound(p) + SLACK, || format!("detail norm {d} > {}", c.detail_norm_bound(p)))?;
            for seed in 0..5 {
                let f = random_signal(net.n(), seed);
                let lf = lp_norm(&net.apply_generator(&f), &mu, p).map_err(|e| e.to_string())?;
                let (_, breve) = ops.analyze(&f).map_err(|e| e.to_string())?;
                let size = lp_norm(&breve, &Measure::new(rest_mu.clone()).unwrap(), p).map_err(|e| e.to_string())?;
                ensure(size <= c.detail_size_bound(p, lf) + SLACK, || format!("detail size {size}"))?;
            }
            checks += 7;
        }
    }

    let pyramids: Vec<Pyramid> = vec![
        wavelets::build_pyramid(&Network::cycle(64).unwrap(), &random_signal(64, 1), 3, &small_config(), 81),
        wavelets::build_pyramid(&Network::grid(8, 8).unwrap(), &random_signal(64, 2), 3, &small_config(), 82),
        wavelets::build_pyramid(&Network::grid(16, 16).unwrap(), &random_signal(256, 3), 2, &small_config(), 83),
    ]
    .into_iter()
    .collect::<Result<_, _>>()
    .map_err(|e| e.to_string())?;
    for pyr in &pyramids {
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Finite(4.0), Exponent::Infinity] {
            let r = wavelets::stability_bounds(pyr, p).map_err(|e| e.to_string())?;
            for l in &r.levels {
                ensure(l.detail_size <= l.detail_size_bound + SLACK, || "pyramid detail size".into())?;
            }
            ensure(r.analysis_norm <= r.analysis_bound + SLACK, || {
                format!("analysis {} > {}", r.analysis_norm, r.analysis_bound)
            })?;
            ensure(r.approximation_error <= r.jackson_bound + SLACK, || {
                format!("jackson {} > {}", r.approximation_error, r.jackson_bound)
            })?;
            checks += r.levels.len() + 2;
        }
    }

    let net = two_node();
    let ops = LevelOperators::new(&net, &[0], 3.0).map_err(|e| e.to_string())?;
    let c = LevelConstants::new(&net, &ops).map_err(|e| e.to_string())?;
    let f = [3.0, 0.0];
    let p = Exponent::Finite(1.0);
    let lf = lp_norm(&net.apply_generator(&f), &net.mu_measure(), p).map_err(|e| e.to_string())?;
    let bound = c.detail_size_bound(p, lf);
    let (_, breve) = ops.analyze(&f).map_err(|e| e.to_string())?;
    let actual = lp_norm(&breve, &Measure::new(vec![1.0]).unwrap(), p).map_err(|e| e.to_string())?;
    ensure((bound - 5.0 / 3.0).abs() < 1e-12 && (actual - 0.5).abs() < 1e-12, || {
        format!("two-node hand case gives {bound} vs {actual}")
    })?;
    Ok(format!("{checks} comparisons, two-node detail bound {bound:.6} vs {actual}"))
}

fn compression_behavior() -> Outcome {
    let start = Instant::now();
    let n = 256;
    let net = Network::cycle(n).map_err(|e| e.to_string())?;
    let tau = std::f64::consts::TAU;
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (tau * 3.0 * t).sin() + 0.5 * (tau * 11.0 * t).sin() + if i >= n / 2 { 1.0 } else { 0.0 }
        })
        .collect();
    let pyr = wavelets::build_pyramid(&net, &f, 3, &PyramidConfig::default(), 0).map_err(|e| e.to_string())?;
    let fractions: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
    let curve = wavelets::compression_curve(&pyr, &fractions).map_err(|e| e.to_string())?;
    let full = curve.last().unwrap().1;
    ensure(full <= 1e-8, || format!("error at keep 1: {full:e}"))?;
    for w in curve.windows(2) {
        ensure(w[1].1 <= w[0].1 + 1e-12, || {
            format!("error rises from {} to {} between keep {} and {}", w[0].1, w[1].1, w[0].0, w[1].0)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    let at = |t: f64| curve.iter().find(|(k, _)| (*k - t).abs() < 1e-12).unwrap().1;
    Ok(format!(
        "error {:.3} at keep 0, {:.4} at keep 0.1, {full:.1e} at keep 1, {secs:.2}s",
        at(0.0),
        at(0.1)
    ))
}

fn tuning_sanity() -> Outcome {
    let net = Network::grid(16, 16).unwrap();
    let f = random_signal(256, 0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let (mut rlo, mut rhi) = (f64::INFINITY, 0.0f64);
    for seed in 0..10u64 {
        let pyr = wavelets::build_pyramid(&net, &f, 2, &PyramidConfig::default(), seed).map_err(|e| e.to_string())?;
        ensure(pyr.depth() == 2, || format!("seed {seed}: {} levels", pyr.depth()))?;
        let ops = pyr.operators().map_err(|e| e.to_string())?;
        for (i, (level, op)) in pyr.levels.iter().zip(&ops).enumerate() {
            let chosen = level
                .tuning
                .iter()
                .find(|r| r.q == level.q)
                .ok_or_else(|| format!("seed {seed} level {i}: chosen rate missing from scan"))?;
            let a = level.q_prime / op.schur_w_max();
            let b = level.q_prime * chosen.inv_beta_tilde;
            for v in [a, b] {
                ensure((0.1..=10.0).contains(&v), || format!("seed {seed} level {i}: ratio {v}"))?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let shrink = level.kept.len() as f64 / level.network.n() as f64;
            ensure((0.1..=0.9).contains(&shrink), || format!("seed {seed} level {i}: shrink {shrink}"))?;
            rlo = rlo.min(shrink);
            rhi = rhi.max(shrink);
        }
    }
    Ok(format!("rate ratios in [{lo:.2}, {hi:.2}], shrink factors in [{rlo:.2}, {rhi:.2}] over 10 seeds"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("oracle vs enumeration", oracle_vs_enumeration),
        ("sampler vs oracle", sampler_vs_oracle),
        ("well-distributed roots", well_distributed_roots),
        ("roots at restricted equilibria", restricted_equilibrium_roots),
        ("schur consistency", schur_consistency),
        ("exact intertwining for singleton partitions", exact_delta_intertwining),
        ("perfect reconstruction", perfect_reconstruction),
        ("bound domination", bound_domination),
        ("compression behavior", compression_behavior),
        ("tuning sanity", tuning_sanity),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
