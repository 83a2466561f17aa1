//! Exact 2-Wasserstein distance between atomic measures.
//!
//! One-dimensional inputs use the quantile coupling; higher dimensions solve the
//! transportation LP with successive shortest paths on the dense bipartite graph.

use super::EmpiricalMeasure;
use crate::error::{Error, Result};

/// Largest `|supp μ| · |supp ν|` accepted by the LP route (256 × 256).
pub const DEFAULT_SUPPORT_CAP: usize = 256 * 256;

const MASS_EPS: f64 = 1e-15;

pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    wasserstein2_with_cap(mu, nu, DEFAULT_SUPPORT_CAP)
}

/// W₂ with an explicit cap on the product of support sizes for the LP route.
pub fn wasserstein2_with_cap(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cap: usize,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if mu.dim() == 1 {
        return Ok(quantile_cost(mu, nu).max(0.0).sqrt());
    }
    let needed = mu.len() as u128 * nu.len() as u128;
    if needed > cap as u128 {
        return Err(Error::Capacity {
            what: "transport support product",
            needed,
            cap: cap as u128,
        });
    }
    Ok(lp_cost(mu, nu).max(0.0).sqrt())
}

fn is_uniform(m: &EmpiricalMeasure) -> bool {
    let w0 = m.weights()[0];
    m.weights().iter().all(|w| *w == w0)
}

fn sorted_atoms(m: &EmpiricalMeasure) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = m
        .points_flat()
        .iter()
        .copied()
        .zip(m.weights().iter().copied())
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Squared W₂ for one-dimensional measures.
pub(crate) fn quantile_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    if mu.len() == nu.len() && is_uniform(mu) && is_uniform(nu) {
        let mut a = mu.points_flat().to_vec();
        let mut b = nu.points_flat().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        return s / a.len() as f64;
    }
    let a = sorted_atoms(mu);
    let b = sorted_atoms(nu);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        let d = a[i].0 - b[j].0;
        cost += m * d * d;
        ra -= m;
        rb -= m;
        if ra <= MASS_EPS {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= MASS_EPS {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    cost
}

/// Squared W₂ via min-cost flow on the transportation network.
pub(crate) fn lp_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let n = mu.len();
    let m = nu.len();
    let mut cost = vec![0.0; n * m];
    for i in 0..n {
        let p = mu.point(i);
        for j in 0..m {
            cost[i * m + j] = p
                .iter()
                .zip(nu.point(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    transport_lp(mu.weights(), nu.weights(), &cost)
}

/// Optimal value of the transportation LP with supplies `a`, demands `b` and
/// row-major cost matrix `cost` (len a × len b).
pub fn transport_lp(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let n = a.len();
    let m = b.len();
    // Node layout: 0 = source, 1..=n left, n+1..=n+m right, n+m+1 = sink.
    let src = 0;
    let snk = n + m + 1;
    let nv = n + m + 2;
    let left = |i: usize| 1 + i;
    let right = |j: usize| 1 + n + j;

    let mut flow = vec![0.0; n * m];
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let mut pot = vec![0.0; nv];
    pot[snk] = f64::INFINITY;
    for j in 0..m {
        let mut best = f64::INFINITY;
        for i in 0..n {
            best = best.min(cost[i * m + j]);
        }
        pot[right(j)] = best;
        pot[snk] = pot[snk].min(best);
    }

    let mut dist = vec![f64::INFINITY; nv];
    let mut prev = vec![usize::MAX; nv];
    let mut done = vec![false; nv];
    let total: f64 = a.iter().sum::<f64>().min(b.iter().sum());
    let mut shipped = 0.0;

    while shipped < total - 1e-13 {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut du = f64::INFINITY;
            for v in 0..nv {
                if !done[v] && dist[v] < du {
                    du = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut [f64], prev: &mut [usize]| {
                let rc = (c + pot[u] - pot[v]).max(0.0);
                if du + rc < dist[v] {
                    dist[v] = du + rc;
                    prev[v] = u;
                }
            };
            if u == src {
                for i in 0..n {
                    if rem_a[i] > MASS_EPS {
                        relax(left(i), 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    relax(right(j), cost[i * m + j], &mut dist, &mut prev);
                }
                if a[i] - rem_a[i] > MASS_EPS {
                    relax(src, 0.0, &mut dist, &mut prev);
                }
            } else if u < snk {
                let j = u - 1 - n;
                if rem_b[j] > MASS_EPS {
                    relax(snk, 0.0, &mut dist, &mut prev);
                }
                for i in 0..n {
                    if flow[i * m + j] > MASS_EPS {
                        relax(left(i), -cost[i * m + j], &mut dist, &mut prev);
                    }
                }
            } else {
                for j in 0..m {
                    if b[j] - rem_b[j] > MASS_EPS {
                        relax(right(j), 0.0, &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[snk].is_finite() {
            break;
        }
        let dt = dist[snk];
        for v in 0..nv {
            pot[v] += dist[v].min(dt);
        }

        // Bottleneck along the path.
        let mut push = f64::INFINITY;
        let mut v = snk;
        while v != src {
            let u = prev[v];
            let capacity = edge_capacity(u, v, n, m, &rem_a, &rem_b, a, b, &flow);
            push = push.min(capacity);
            v = u;
        }
        if push <= 0.0 || !push.is_finite() {
            break;
        }
        let mut v = snk;
        while v != src {
            let u = prev[v];
            apply_push(u, v, n, m, push, &mut rem_a, &mut rem_b, &mut flow);
            v = u;
        }
        shipped += push;
    }

    flow.iter().zip(cost).map(|(f, c)| f * c).sum()
}

#[allow(clippy::too_many_arguments)]
fn edge_capacity(
    u: usize,
    v: usize,
    n: usize,
    m: usize,
    rem_a: &[f64],
    rem_b: &[f64],
    a: &[f64],
    b: &[f64],
    flow: &[f64],
) -> f64 {
    let snk = n + m + 1;
    match (u, v) {
        (0, v) => rem_a[v - 1],
        (u, 0) => a[u - 1] - rem_a[u - 1],
        (u, v) if v == snk => rem_b[u - 1 - n],
        (u, v) if u == snk => b[v - 1 - n] - rem_b[v - 1 - n],
        (u, v) if u <= n => {
            let _ = v;
            f64::INFINITY
        }
        (u, v) => flow[(v - 1) * m + (u - 1 - n)],
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_push(
    u: usize,
    v: usize,
    n: usize,
    m: usize,
    push: f64,
    rem_a: &mut [f64],
    rem_b: &mut [f64],
    flow: &mut [f64],
) {
    let snk = n + m + 1;
    match (u, v) {
        (0, v) => rem_a[v - 1] -= push,
        (u, 0) => rem_a[u - 1] += push,
        (u, v) if v == snk => rem_b[u - 1 - n] -= push,
        (u, v) if u == snk => rem_b[v - 1 - n] += push,
        (u, v) if u <= n => flow[(u - 1) * m + (v - 1 - n)] += push,
        (u, v) => {
            let f = &mut flow[(v - 1) * m + (u - 1 - n)];
            *f = (*f - push).max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::empirical_from_samples;

    fn emp(v: &[f64]) -> EmpiricalMeasure {
        empirical_from_samples(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let m = emp(&[0.3, -1.0, 2.0]);
        assert_eq!(wasserstein2(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn diracs() {
        let a = EmpiricalMeasure::dirac(&[1.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[4.0, 6.0]).unwrap();
        assert!((wasserstein2(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        let a = EmpiricalMeasure::dirac(&[1.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[-2.0]).unwrap();
        assert!((wasserstein2(&a, &b).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_atoms_against_midpoint() {
        let mu = emp(&[0.0, 2.0]);
        let nu = EmpiricalMeasure::dirac(&[1.0]).unwrap();
        assert!((wasserstein2(&mu, &nu).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_weights_one_dimension() {
        // 0.25 at 0, 0.75 at 4 versus uniform {1, 3}.
        let mu = EmpiricalMeasure::new(vec![vec![0.0], vec![4.0]], vec![0.25, 0.75]).unwrap();
        let nu = emp(&[1.0, 3.0]);
        // Quantile coupling: 0.25 (0→1), 0.25 (4→1), 0.5 (4→3).
        let expected = (0.25 * 1.0 + 0.25 * 9.0 + 0.5 * 1.0f64).sqrt();
        assert!((wasserstein2(&mu, &nu).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmpiricalMeasure::dirac(&[1.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[1.0, 0.0]).unwrap();
        assert!(matches!(wasserstein2(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn capacity_is_enforced_above_one_dimension() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let m = empirical_from_samples(&pts).unwrap();
        assert!(matches!(
            wasserstein2_with_cap(&m, &m, 100),
            Err(Error::Capacity { .. })
        ));
        assert!(wasserstein2_with_cap(&m, &m, 400).is_ok());
    }

    #[test]
    fn lp_handles_fractional_masses() {
        // Supplies (0.5, 0.5), demands (0.2, 0.8), costs favour the diagonal.
        let v = transport_lp(&[0.5, 0.5], &[0.2, 0.8], &[0.0, 1.0, 1.0, 0.0]);
        assert!((v - 0.3).abs() < 1e-15);
    }
}
