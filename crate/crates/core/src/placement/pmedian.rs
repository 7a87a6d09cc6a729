use std::cmp::Ordering;

use super::{compare_pmedian, lex_floor, pmedian_tol, PMedianSpec, PlacementSolution};
use crate::error::Result;
use crate::hexgrid::CellId;

const ROOT_ITERATIONS: usize = 300;
const NODE_ITERATIONS: usize = 25;

/// Exact P-Median placement.
///
/// Lower bounds come from the Lagrangian relaxation of the assignment
/// constraints: for multipliers `lambda_i`,
/// `sum_i lambda_i + sum_j y_j * min(0, sum_i (c_i d_ij - lambda_i))`
/// minimised over selections consistent with the node. Starting the
/// subgradient ascent at `lambda_i = c_i * min_j d_ij` (nearest allowed
/// candidate) makes the first bound the per-cell nearest-candidate bound, so
/// ascent can only tighten it.
pub fn solve_pmedian(spec: &PMedianSpec) -> Result<PlacementSolution> {
    spec.validate()?;
    let allowed = spec.allowed();
    let p = spec.stations;
    if p > allowed.len() {
        return Ok(PlacementSolution::infeasible());
    }
    let rows: Vec<usize> = (0..spec.len()).filter(|&i| spec.counts[i] > 0).collect();
    if rows.is_empty() || p == allowed.len() {
        // Zero demand: every selection costs nothing, so the smallest ids win.
        let pick = allowed[..p].to_vec();
        return Ok(PlacementSolution::pmedian(spec, pick, 0));
    }

    let m = allowed.len();
    let weights: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            let c = spec.counts[i] as f64;
            let row = spec.distances.row(i);
            allowed.iter().map(|&j| c * row[j]).collect()
        })
        .collect();
    let mut search = Search {
        weights,
        cells: allowed,
        p,
        best: (f64::INFINITY, Vec::new()),
        nodes: 0,
    };
    let start = search.local_search(search.greedy());
    search.offer(&start);

    let all: Vec<usize> = (0..m).collect();
    let lambda = search.simple_multipliers(&[], &all);
    search.node(Vec::new(), all, lambda, ROOT_ITERATIONS);

    let best: Vec<CellId> = search.best.1.iter().map(|&c| search.cells[c]).collect();
    Ok(PlacementSolution::pmedian(spec, best, search.nodes))
}

struct Search {
    /// `c_i * d_ij` for demand rows x allowed columns.
    weights: Vec<Vec<f64>>,
    /// Cell id of each column, ascending.
    cells: Vec<CellId>,
    p: usize,
    /// Best cost and its sorted column set.
    best: (f64, Vec<usize>),
    nodes: u64,
}

struct Bound {
    value: f64,
    /// Reduced cost per column, indexed by column.
    reduced: Vec<f64>,
    /// Columns picked by the relaxed problem.
    picked: Vec<usize>,
    lambda: Vec<f64>,
}

impl Search {
    fn cost(&self, cols: &[usize]) -> f64 {
        self.weights
            .iter()
            .map(|w| cols.iter().map(|&j| w[j]).fold(f64::INFINITY, f64::min))
            .sum()
    }

    fn offer(&mut self, cols: &[usize]) {
        let mut sorted = cols.to_vec();
        sorted.sort_unstable();
        let value = self.cost(&sorted);
        if self.best.1.is_empty()
            || compare_pmedian((value, &sorted), (self.best.0, &self.best.1)) == Ordering::Less
        {
            self.best = (value, sorted);
        }
    }

    fn greedy(&self) -> Vec<usize> {
        let m = self.cells.len();
        let mut picked: Vec<usize> = Vec::with_capacity(self.p);
        let mut nearest = vec![f64::INFINITY; self.weights.len()];
        for _ in 0..self.p {
            let mut choice = (f64::INFINITY, usize::MAX);
            for j in (0..m).filter(|j| !picked.contains(j)) {
                let total: f64 = self
                    .weights
                    .iter()
                    .zip(&nearest)
                    .map(|(w, &n)| w[j].min(n))
                    .sum();
                if total < choice.0 {
                    choice = (total, j);
                }
            }
            let j = choice.1;
            for (n, w) in nearest.iter_mut().zip(&self.weights) {
                *n = n.min(w[j]);
            }
            picked.push(j);
        }
        picked
    }

    /// Vertex substitution until no single swap improves the cost.
    fn local_search(&self, mut current: Vec<usize>) -> Vec<usize> {
        let m = self.cells.len();
        let mut cost = self.cost(&current);
        loop {
            let mut improved = false;
            for slot in 0..current.len() {
                for j in 0..m {
                    if current.contains(&j) {
                        continue;
                    }
                    let old = current[slot];
                    current[slot] = j;
                    let c = self.cost(&current);
                    if c < cost - pmedian_tol(cost) {
                        cost = c;
                        improved = true;
                    } else {
                        current[slot] = old;
                    }
                }
            }
            if !improved {
                return current;
            }
        }
    }

    fn simple_multipliers(&self, fixed: &[usize], open: &[usize]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                fixed
                    .iter()
                    .chain(open)
                    .map(|&j| w[j])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn evaluate_bound(&self, fixed: &[usize], open: &[usize], k: usize, lambda: &[f64]) -> Bound {
        let mut reduced = vec![0.0; self.cells.len()];
        for &j in fixed.iter().chain(open) {
            reduced[j] = self
                .weights
                .iter()
                .zip(lambda)
                .map(|(w, &l)| (w[j] - l).min(0.0))
                .sum();
        }
        let mut order: Vec<usize> = open.to_vec();
        order.sort_by(|&a, &b| reduced[a].total_cmp(&reduced[b]).then(a.cmp(&b)));
        let mut picked: Vec<usize> = fixed.to_vec();
        picked.extend(order.into_iter().take(k));
        let value = lambda.iter().sum::<f64>() + picked.iter().map(|&j| reduced[j]).sum::<f64>();
        Bound {
            value,
            reduced,
            picked,
            lambda: lambda.to_vec(),
        }
    }

    fn lagrangian(
        &self,
        fixed: &[usize],
        open: &[usize],
        k: usize,
        start: Vec<f64>,
        iterations: usize,
    ) -> Bound {
        let simple = self.simple_multipliers(fixed, open);
        let a = self.evaluate_bound(fixed, open, k, &start);
        let b = self.evaluate_bound(fixed, open, k, &simple);
        let mut best = if a.value > b.value { a } else { b };
        let mut lambda = best.lambda.clone();
        let mut current = self.evaluate_bound(fixed, open, k, &lambda);
        let mut theta = 2.0;
        let mut stale = 0;
        for _ in 0..iterations {
            let gap = self.best.0 - current.value;
            if gap <= pmedian_tol(self.best.0) {
                break;
            }
            let grad: Vec<f64> = self
                .weights
                .iter()
                .zip(&lambda)
                .map(|(w, &l)| {
                    let served = current.picked.iter().filter(|&&j| w[j] < l).count();
                    1.0 - served as f64
                })
                .collect();
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2 == 0.0 {
                break;
            }
            let step = theta * gap / norm2;
            for (l, g) in lambda.iter_mut().zip(&grad) {
                *l += step * g;
            }
            current = self.evaluate_bound(fixed, open, k, &lambda);
            if current.value > best.value {
                best = Bound {
                    value: current.value,
                    reduced: current.reduced.clone(),
                    picked: current.picked.clone(),
                    lambda: lambda.clone(),
                };
                stale = 0;
            } else {
                stale += 1;
                if stale >= 5 {
                    theta *= 0.5;
                    stale = 0;
                    if theta < 1e-4 {
                        break;
                    }
                }
            }
        }
        best
    }

    fn node(&mut self, fixed: Vec<usize>, open: Vec<usize>, lambda: Vec<f64>, iterations: usize) {
        self.nodes += 1;
        let k = self.p - fixed.len();
        if k == 0 {
            self.offer(&fixed);
            return;
        }
        if open.len() < k {
            return;
        }
        if open.len() == k {
            let all: Vec<usize> = fixed.iter().chain(&open).copied().collect();
            self.offer(&all);
            return;
        }
        let bound = self.lagrangian(&fixed, &open, k, lambda, iterations);
        self.offer(&bound.picked);

        let tol = pmedian_tol(self.best.0);
        let may_improve = if bound.value < self.best.0 - tol {
            true
        } else if bound.value <= self.best.0 + tol {
            lex_floor(&fixed, &open, k) < self.best.1
        } else {
            false
        };
        if !may_improve {
            return;
        }

        let branch = *open
            .iter()
            .min_by(|&&a, &&b| bound.reduced[a].total_cmp(&bound.reduced[b]).then(a.cmp(&b)))
            .expect("open set is non-empty");
        let rest: Vec<usize> = open.into_iter().filter(|&j| j != branch).collect();
        let mut with = fixed.clone();
        with.push(branch);
        self.node(with, rest.clone(), bound.lambda.clone(), NODE_ITERATIONS);
        self.node(fixed, rest, bound.lambda, NODE_ITERATIONS);
    }
}
