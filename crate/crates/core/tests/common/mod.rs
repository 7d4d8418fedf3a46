//! Brute-force rooted-forest enumeration on tiny networks.

#![allow(dead_code)]

use forestwave::{Edge, Network};

/// A rooted spanning forest as a successor map, with its unnormalized weight.
#[derive(Clone, Debug)]
pub struct Forest {
    pub next: Vec<Option<usize>>,
    pub weight: f64,
}

impl Forest {
    pub fn roots(&self) -> Vec<usize> {
        (0..self.next.len()).filter(|&x| self.next[x].is_none()).collect()
    }

    pub fn root_count(&self) -> usize {
        self.next.iter().filter(|s| s.is_none()).count()
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        self.next[x] == Some(y)
    }

    pub fn branch(&self, x: usize) -> Vec<usize> {
        let mut path = vec![x];
        let mut cur = x;
        while let Some(y) = self.next[cur] {
            path.push(y);
            cur = y;
        }
        path
    }
}

fn acyclic(next: &[Option<usize>]) -> bool {
    let n = next.len();
    (0..n).all(|x| {
        let mut cur = x;
        for _ in 0..=n {
            match next[cur] {
                None => return true,
                Some(y) => cur = y,
            }
        }
        false
    })
}

/// Every forest rooted on a superset of `absorbing`, weighted by w(φ)·q^{|roots ∖ B|}.
pub fn enumerate(net: &Network, q: f64, absorbing: &[usize]) -> Vec<Forest> {
    let n = net.n();
    let choices: Vec<Vec<Option<usize>>> = (0..n)
        .map(|x| {
            let mut c = vec![None];
            if !absorbing.contains(&x) {
                c.extend(net.out_edges(x).iter().map(|&(y, _)| Some(y)));
            }
            c
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let next: Vec<Option<usize>> = (0..n).map(|x| choices[x][idx[x]]).collect();
        if acyclic(&next) {
            let mut weight = 1.0;
            for x in 0..n {
                weight *= match next[x] {
                    Some(y) => net.weight(x, y),
                    None if absorbing.contains(&x) => 1.0,
                    None => q,
                };
            }
            if weight > 0.0 {
                out.push(Forest { next, weight });
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn total(forests: &[Forest]) -> f64 {
    forests.iter().map(|f| f.weight).sum()
}

/// Probability of the event `pred` under the forest law.
pub fn prob(forests: &[Forest], pred: impl Fn(&Forest) -> bool) -> f64 {
    forests.iter().filter(|f| pred(f)).map(|f| f.weight).sum::<f64>() / total(forests)
}

pub fn root_count_pmf(forests: &[Forest], n: usize) -> Vec<f64> {
    let z = total(forests);
    let mut pmf = vec![0.0; n + 1];
    for f in forests {
        pmf[f.root_count()] += f.weight / z;
    }
    pmf
}

/// Law of the branch from `start` to its root, which is the first loop-erased walk of Wilson's algorithm.
pub fn branch_law(forests: &[Forest], start: usize) -> Vec<(Vec<usize>, f64)> {
    let z = total(forests);
    let mut law: Vec<(Vec<usize>, f64)> = Vec::new();
    for f in forests {
        let b = f.branch(start);
        match law.iter_mut().find(|(p, _)| *p == b) {
            Some(entry) => entry.1 += f.weight / z,
            None => law.push((b, f.weight / z)),
        }
    }
    law
}

/// Stored tiny test networks, each with a short label.
pub fn test_graphs() -> Vec<(&'static str, Network)> {
    let e = |s, d, w| Edge::new(s, d, w);
    vec![
        ("two-node", Network::new(2, vec![e(0, 1, 2.0), e(1, 0, 1.0)]).unwrap()),
        (
            "directed 3-cycle",
            Network::new(3, vec![e(0, 1, 1.0), e(1, 2, 1.0), e(2, 0, 1.0)]).unwrap(),
        ),
        ("3-path", Network::path(3).unwrap()),
        (
            "weighted 4-cycle",
            Network::undirected(4, &[(0, 1, 1.0), (1, 2, 2.5), (2, 3, 0.5), (3, 0, 1.5)]).unwrap(),
        ),
        (
            "directed 4 with chord",
            Network::new(
                4,
                vec![e(0, 1, 1.0), e(1, 2, 2.0), e(2, 3, 0.7), e(3, 0, 1.3), e(0, 2, 0.4), e(2, 1, 0.9)],
            )
            .unwrap(),
        ),
        (
            "weighted K4",
            Network::undirected(
                4,
                &[(0, 1, 0.3), (0, 2, 1.1), (0, 3, 2.0), (1, 2, 0.8), (1, 3, 1.7), (2, 3, 0.6)],
            )
            .unwrap(),
        ),
        (
            "directed 5",
            Network::new(
                5,
                vec![
                    e(0, 1, 1.0),
                    e(1, 2, 0.5),
                    e(2, 3, 2.0),
                    e(3, 4, 1.2),
                    e(4, 0, 0.8),
                    e(1, 0, 0.3),
                    e(3, 1, 1.5),
                    e(4, 2, 0.6),
                ],
            )
            .unwrap(),
        ),
        ("5-star", Network::undirected(5, &[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 0.5), (0, 4, 1.5)]).unwrap()),
    ]
}

/// All subsets of `0..n` as sorted vectors.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0..1u32 << n)
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
