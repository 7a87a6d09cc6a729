//! Exhaustive enumeration, used as the reference for the exact solvers.

use std::cmp::Ordering;

use super::{
    compare_mclp, compare_pmedian, quantize_coverage, PlacementSolution, PlacementSpec,
};
use crate::error::{Error, Result};
use crate::hexgrid::CellId;

/// Maximum number of subsets [`brute_force`] agrees to enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Calls `visit` with every `k`-subset of `items` in lexicographic order.
fn for_each_combination(items: &[CellId], k: usize, mut visit: impl FnMut(&[CellId])) {
    let n = items.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf: Vec<CellId> = Vec::with_capacity(k);
    loop {
        buf.clear();
        buf.extend(idx.iter().map(|&i| items[i]));
        visit(&buf);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

pub fn brute_force(spec: &PlacementSpec) -> Result<PlacementSolution> {
    match spec {
        PlacementSpec::Mclp(s) => {
            s.validate()?;
            let n = s.len();
            let subsets: u128 = (0..=s.max_stations).map(|k| binomial(n, k)).sum();
            if subsets > BRUTE_FORCE_LIMIT {
                return Err(Error::TooLarge {
                    subsets,
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
            let cells: Vec<CellId> = (0..n).collect();
            let mut best: Option<(f64, Vec<CellId>)> = None;
            for k in 0..=s.max_stations {
                for_each_combination(&cells, k, |subset| {
                    // Coverage bounds computed directly from the adjacency.
                    let mut value = 0.0;
                    for i in 0..n {
                        let direct = if subset.contains(&i) { s.w0 } else { 0.0 };
                        let around = s.neighbors[i].iter().filter(|j| subset.contains(j)).count();
                        let level = direct + s.w1 * around as f64;
                        if s.enforce_separation && level > 1.0 + 1e-12 {
                            return;
                        }
                        value += s.counts[i] as f64 * quantize_coverage(level);
                    }
                    let better = match &best {
                        None => true,
                        Some((bv, bs)) => compare_mclp((value, subset), (*bv, bs)) == Ordering::Less,
                    };
                    if better {
                        best = Some((value, subset.to_vec()));
                    }
                });
            }
            let (_, sel) = best.expect("the empty selection is always feasible");
            Ok(PlacementSolution::mclp(s, sel, 0))
        }
        PlacementSpec::PMedian(s) => {
            s.validate()?;
            let allowed = s.allowed();
            if s.stations > allowed.len() {
                return Ok(PlacementSolution::infeasible());
            }
            let subsets = binomial(allowed.len(), s.stations);
            if subsets > BRUTE_FORCE_LIMIT {
                return Err(Error::TooLarge {
                    subsets,
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
            let mut best: Option<(f64, Vec<CellId>)> = None;
            for_each_combination(&allowed, s.stations, |subset| {
                let value: f64 = (0..s.len())
                    .map(|i| {
                        let d = subset
                            .iter()
                            .map(|&j| s.distances.get(i, j))
                            .fold(f64::INFINITY, f64::min);
                        s.counts[i] as f64 * d
                    })
                    .sum();
                let better = match &best {
                    None => true,
                    Some((bv, bs)) => compare_pmedian((value, subset), (*bv, bs)) == Ordering::Less,
                };
                if better {
                    best = Some((value, subset.to_vec()));
                }
            });
            let (_, sel) = best.expect("at least one subset exists");
            Ok(PlacementSolution::pmedian(s, sel, 0))
        }
    }
}
