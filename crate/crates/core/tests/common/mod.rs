//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use conc_lab::costs::CostKind;
use conc_lab::measures::DiscreteMeasure;
use rand::Rng;

/// Minimum of Σᵢ cost[i][σ(i)] over all permutations (Heap's algorithm).
pub fn brute_force_assignment(n: usize, cost: &[f64]) -> f64 {
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| -> f64 { (0..n).map(|i| cost[i * n + p[i]]).sum() };
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Min-cost perfect matching by successive shortest augmenting paths
/// (dense Dijkstra with reduced costs).
pub fn ssp_assignment(n: usize, cost: &[f64]) -> f64 {
    let mut row_of_col: Vec<Option<usize>> = vec![None; n];
    let mut pot_row = vec![0.0; n];
    let mut pot_col = vec![0.0; n];
    for start in 0..n {
        // Dijkstra over columns from the free row `start`
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_row = vec![usize::MAX; n];
        let mut done = vec![false; n];
        for j in 0..n {
            dist[j] = cost[start * n + j] - pot_row[start] - pot_col[j];
            prev_row[j] = start;
        }
        let end;
        loop {
            let mut j_min = usize::MAX;
            for j in 0..n {
                if !done[j] && (j_min == usize::MAX || dist[j] < dist[j_min]) {
                    j_min = j;
                }
            }
            done[j_min] = true;
            match row_of_col[j_min] {
                None => {
                    end = j_min;
                    break;
                }
                Some(r) => {
                    for j in 0..n {
                        if !done[j] {
                            let nd = dist[j_min] + cost[r * n + j] - pot_row[r] - pot_col[j];
                            if nd < dist[j] {
                                dist[j] = nd;
                                prev_row[j] = r;
                            }
                        }
                    }
                }
            }
        }
        let d_end = dist[end];
        // potential update keeps reduced costs nonnegative
        for j in 0..n {
            if done[j] {
                let delta = d_end - dist[j];
                pot_col[j] -= delta;
                if let Some(r) = row_of_col[j] {
                    pot_row[r] += delta;
                }
            }
        }
        pot_row[start] += d_end;
        // augment along the path
        let mut j = end;
        loop {
            let r = prev_row[j];
            let next = (0..n).find(|&c| row_of_col[c] == Some(r));
            row_of_col[j] = Some(r);
            match next {
                Some(c) if r != start => j = c,
                _ => break,
            }
        }
    }
    (0..n).map(|j| cost[row_of_col[j].unwrap() * n + j]).sum()
}

pub fn cost_matrix(xs: &[f64], ys: &[f64], dim: usize, cost: &CostKind) -> Vec<f64> {
    let n = xs.len() / dim;
    let m = ys.len() / dim;
    let mut c = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            c.push(cost.eval(&xs[i * dim..(i + 1) * dim], &ys[j * dim..(j + 1) * dim]));
        }
    }
    c
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Random measure with `k` atoms in ℝ^dim whose weights are positive multiples of 1/denominator.
pub fn random_rational_measure(k: usize, dim: usize, denominator: usize, rng: &mut impl Rng) -> (DiscreteMeasure, Vec<usize>) {
    assert!(denominator >= k);
    // random composition of `denominator` into k positive parts
    let mut cuts: Vec<usize> = (1..denominator).collect();
    for i in (1..cuts.len()).rev() {
        let j = rng.random_range(0..=i);
        cuts.swap(i, j);
    }
    let mut chosen: Vec<usize> = cuts[..k - 1].to_vec();
    chosen.sort();
    let mut parts = Vec::with_capacity(k);
    let mut last = 0;
    for c in chosen {
        parts.push(c - last);
        last = c;
    }
    parts.push(denominator - last);
    let coords: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let weights: Vec<f64> = parts.iter().map(|&p| p as f64 / denominator as f64).collect();
    (DiscreteMeasure::from_flat(dim, coords, weights).unwrap(), parts)
}

/// Optimal cost between two rational measures by splitting every atom into
/// equal-mass copies and solving the resulting assignment problem.
pub fn atom_splitting_cost(
    a: &DiscreteMeasure,
    a_parts: &[usize],
    a_den: usize,
    b: &DiscreteMeasure,
    b_parts: &[usize],
    b_den: usize,
    cost: &CostKind,
) -> f64 {
    let l = lcm(a_den, b_den);
    let dim = a.dim();
    let expand = |m: &DiscreteMeasure, parts: &[usize], den: usize| -> Vec<f64> {
        let mut out = Vec::new();
        for (i, &p) in parts.iter().enumerate() {
            for _ in 0..p * (l / den) {
                out.extend_from_slice(m.point(i));
            }
        }
        out
    };
    let xs = expand(a, a_parts, a_den);
    let ys = expand(b, b_parts, b_den);
    let c = cost_matrix(&xs, &ys, dim, cost);
    ssp_assignment(l, &c) / l as f64
}

pub fn random_measure(k: usize, dim: usize, rng: &mut impl Rng) -> DiscreteMeasure {
    let coords: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteMeasure::normalized(dim, coords, weights).unwrap()
}

/// KL(Bernoulli(q) ‖ Bernoulli(p)).
pub fn kl_bernoulli(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// Exact P(|Bin(n, 1/2)/n − 1/2| > t), summed in log space.
pub fn binomial_two_sided_tail(n: usize, t: f64) -> f64 {
    let mut lnf = vec![0.0f64; n + 1];
    for k in 1..=n {
        lnf[k] = lnf[k - 1] + (k as f64).ln();
    }
    (0..=n)
        .filter(|&k| {
            // exact rational comparison |2k − n| > 2nt, with t given as a float
            (2.0 * k as f64 - n as f64).abs() > 2.0 * n as f64 * t + 1e-9
        })
        .map(|k| (lnf[n] - lnf[k] - lnf[n - k] - n as f64 * std::f64::consts::LN_2).exp())
        .sum()
}
