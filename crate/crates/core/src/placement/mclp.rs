use std::cmp::Ordering;

use super::{compare_mclp, lex_floor, quantize_coverage, McLpSpec, PlacementSolution, OBJ_EPS};
use crate::error::Result;
use crate::hexgrid::CellId;

/// Exact maximal-covering placement.
///
/// Bound: with coverage relaxed to `min(1, level)` the objective is a
/// monotone submodular function of the selection, so the relaxed value of
/// the current selection plus its `k` largest marginal gains bounds every
/// completion by `k` more stations. Candidates that would break separation
/// are dropped for the whole subtree, since levels only grow.
pub fn solve_mclp(spec: &McLpSpec) -> Result<PlacementSolution> {
    spec.validate()?;
    let mut search = Search::new(spec);
    search.seed_with_greedy();
    let all: Vec<CellId> = (0..spec.len()).collect();
    search.node(all);
    let Search { best, nodes, .. } = search;
    Ok(PlacementSolution::mclp(spec, best.1, nodes))
}

struct Search<'a> {
    spec: &'a McLpSpec,
    influence: Vec<Vec<(CellId, f64)>>,
    level: Vec<f64>,
    selected: Vec<CellId>,
    best: (f64, Vec<CellId>),
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(spec: &'a McLpSpec) -> Self {
        Search {
            spec,
            influence: spec.influence(),
            level: vec![0.0; spec.len()],
            selected: Vec::new(),
            best: (0.0, Vec::new()),
            nodes: 0,
        }
    }

    fn exact_value(&self) -> f64 {
        self.level
            .iter()
            .zip(&self.spec.counts)
            .map(|(&l, &c)| c as f64 * quantize_coverage(l))
            .sum()
    }

    fn relaxed_value(&self) -> f64 {
        self.level
            .iter()
            .zip(&self.spec.counts)
            .map(|(&l, &c)| c as f64 * l.min(1.0))
            .sum()
    }

    fn can_add(&self, j: CellId) -> bool {
        !self.spec.enforce_separation
            || self.influence[j]
                .iter()
                .all(|&(i, w)| self.level[i] + w <= 1.0 + 1e-12)
    }

    fn relaxed_gain(&self, j: CellId) -> f64 {
        self.influence[j]
            .iter()
            .map(|&(i, w)| {
                let l = self.level[i];
                self.spec.counts[i] as f64 * ((l + w).min(1.0) - l.min(1.0))
            })
            .sum()
    }

    fn exact_gain(&self, j: CellId) -> f64 {
        self.influence[j]
            .iter()
            .map(|&(i, w)| {
                let l = self.level[i];
                self.spec.counts[i] as f64 * (quantize_coverage(l + w) - quantize_coverage(l))
            })
            .sum()
    }

    fn push(&mut self, j: CellId) {
        for &(i, w) in &self.influence[j] {
            self.level[i] += w;
        }
        self.selected.push(j);
    }

    fn pop(&mut self) {
        let j = self.selected.pop().expect("pop on empty selection");
        for &(i, w) in &self.influence[j] {
            self.level[i] -= w;
        }
    }

    fn sorted_selection(&self) -> Vec<CellId> {
        let mut s = self.selected.clone();
        s.sort_unstable();
        s
    }

    fn offer(&mut self) {
        let value = self.exact_value();
        let sel = self.sorted_selection();
        if compare_mclp((value, &sel), (self.best.0, &self.best.1)) == Ordering::Less {
            self.best = (value, sel);
        }
    }

    fn seed_with_greedy(&mut self) {
        self.offer();
        for _ in 0..self.spec.max_stations {
            let pick = (0..self.spec.len())
                .filter(|j| !self.selected.contains(j) && self.can_add(*j))
                .map(|j| (self.exact_gain(j), j))
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            match pick {
                Some((_, j)) => {
                    self.push(j);
                    self.offer();
                }
                None => break,
            }
        }
        while !self.selected.is_empty() {
            self.pop();
        }
    }

    fn node(&mut self, allowed: Vec<CellId>) {
        self.nodes += 1;
        self.offer();
        let k = self.spec.max_stations - self.selected.len();
        if k == 0 {
            return;
        }
        let mut scored: Vec<(f64, CellId)> = allowed
            .into_iter()
            .filter(|&j| self.can_add(j))
            .map(|j| (self.relaxed_gain(j), j))
            .collect();
        if scored.is_empty() {
            return;
        }
        // Best gain first, ties to the lower id.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let bound = self.relaxed_value() + scored.iter().take(k).map(|s| s.0).sum::<f64>();
        let max_size = self.selected.len() + k.min(scored.len());
        let (best_value, best_len) = (self.best.0, self.best.1.len());
        let may_improve = if bound > best_value + OBJ_EPS {
            true
        } else if bound >= best_value - OBJ_EPS {
            match max_size.cmp(&best_len) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    let pool: Vec<CellId> = scored.iter().map(|s| s.1).collect();
                    lex_floor(&self.selected, &pool, k) < self.best.1
                }
            }
        } else {
            false
        };
        if !may_improve {
            return;
        }

        let branch = scored[0].1;
        let rest: Vec<CellId> = scored[1..].iter().map(|s| s.1).collect();
        self.push(branch);
        self.node(rest.clone());
        self.pop();
        self.node(rest);
    }
}
