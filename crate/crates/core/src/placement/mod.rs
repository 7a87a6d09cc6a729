//! Station placement on a hexagonal demand field.
//!
//! Two exact models are provided:
//!
//! * maximal covering ([`McLpSpec`]): choose at most `P` cells maximising
//!   `sum c_i x_i`, where a cell's coverage `x_i in {0, 0.5, 1}` is bounded by
//!   `w0 * y_i + w1 * (selected neighbours)`; an optional separation flag
//!   also bounds that weighted sum by one for every cell;
//! * P-Median ([`PMedianSpec`]): choose exactly `P` candidate cells,
//!   excluding a forbidden set, minimising the count-weighted distance from
//!   every cell to its nearest selected cell.
//!
//! Both solvers are depth-first branch-and-bound searches. Among optimal
//! selections the winner is deterministic: larger selections first (MCLP
//! only), then the lexicographically smallest sorted id list. The
//! brute-force enumerator in [`brute`] applies the same order and serves as
//! the test oracle.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::hexgrid::{CellId, DemandField, DistanceMatrix, HexGrid};

pub mod brute;
mod mclp;
mod pmedian;

pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use mclp::solve_mclp;
pub use pmedian::solve_pmedian;

/// Absolute tolerance when comparing objectives.
pub(crate) const OBJ_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct McLpSpec {
    /// Demand count per cell.
    pub counts: Vec<u64>,
    /// Neighbour lists per cell.
    pub neighbors: Vec<Vec<CellId>>,
    pub max_stations: usize,
    pub w0: f64,
    pub w1: f64,
    pub enforce_separation: bool,
}

impl McLpSpec {
    pub fn new(field: &DemandField, grid: &HexGrid, max_stations: usize) -> Self {
        McLpSpec {
            counts: field.counts().to_vec(),
            neighbors: grid.adjacency().to_vec(),
            max_stations,
            w0: 1.0,
            w1: 0.5,
            enforce_separation: false,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.counts.len();
        if self.neighbors.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} neighbour lists for {n} cells",
                self.neighbors.len()
            )));
        }
        if let Some(bad) = self.neighbors.iter().flatten().find(|&&j| j >= n) {
            return Err(Error::UnknownCell(*bad));
        }
        if self.max_stations == 0 || self.max_stations > n {
            return Err(Error::InvalidInput(format!(
                "station limit must lie in 1..={n}, got {}",
                self.max_stations
            )));
        }
        if !(self.w0 >= self.w1 && self.w1 >= 0.0 && self.w0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weights must satisfy w0 >= w1 >= 0, got w0={} w1={}",
                self.w0, self.w1
            )));
        }
        Ok(())
    }

    /// For every cell `j`, the cells whose coverage bound includes `y_j`,
    /// with the weight it contributes.
    pub(crate) fn influence(&self) -> Vec<Vec<(CellId, f64)>> {
        let mut inf: Vec<Vec<(CellId, f64)>> =
            (0..self.len()).map(|j| vec![(j, self.w0)]).collect();
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                if j != i {
                    inf[j].push((i, self.w1));
                }
            }
        }
        inf
    }

    /// `w0 * y_i + w1 * sum_{j in N_i} y_j` for every cell.
    pub fn coverage_levels(&self, selected: &[CellId]) -> Vec<f64> {
        let inf = self.influence();
        let mut level = vec![0.0; self.len()];
        for &j in selected {
            for &(i, w) in &inf[j] {
                level[i] += w;
            }
        }
        level
    }
}

/// Largest admissible coverage value not above `level`.
pub(crate) fn quantize_coverage(level: f64) -> f64 {
    const TOL: f64 = 1e-12;
    if level >= 1.0 - TOL {
        1.0
    } else if level >= 0.5 - TOL {
        0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PMedianSpec {
    pub counts: Vec<u64>,
    /// Cells that may host a station.
    pub candidates: Vec<CellId>,
    /// Square matrix over all cells, indexed by cell id.
    pub distances: DistanceMatrix,
    pub stations: usize,
    pub forbidden: BTreeSet<CellId>,
}

impl PMedianSpec {
    /// All cells are candidates; no forbidden cells.
    pub fn new(field: &DemandField, distances: DistanceMatrix, stations: usize) -> Self {
        let n = field.counts().len();
        PMedianSpec {
            counts: field.counts().to_vec(),
            candidates: (0..n).collect(),
            distances,
            stations,
            forbidden: BTreeSet::new(),
        }
    }

    pub fn with_forbidden(mut self, forbidden: impl IntoIterator<Item = CellId>) -> Self {
        self.forbidden = forbidden.into_iter().collect();
        self
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Candidates minus forbidden cells, sorted and deduplicated.
    pub fn allowed(&self) -> Vec<CellId> {
        let set: BTreeSet<CellId> = self
            .candidates
            .iter()
            .copied()
            .filter(|c| !self.forbidden.contains(c))
            .collect();
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.counts.len();
        if self.distances.len() != n || self.distances.cells().iter().enumerate().any(|(i, &c)| i != c) {
            return Err(Error::InvalidInput(format!(
                "distance matrix must cover cells 0..{n} in order"
            )));
        }
        if let Some(bad) = self
            .candidates
            .iter()
            .chain(self.forbidden.iter())
            .find(|&&c| c >= n)
        {
            return Err(Error::UnknownCell(*bad));
        }
        if self.stations == 0 {
            return Err(Error::InvalidInput("station count must be positive".into()));
        }
        Ok(())
    }

    /// Nearest selected cell for every cell; ties go to the lower id.
    pub fn assign(&self, selected: &[CellId]) -> Vec<CellId> {
        let mut sorted = selected.to_vec();
        sorted.sort_unstable();
        (0..self.len())
            .map(|i| {
                let row = self.distances.row(i);
                let mut best = (f64::INFINITY, sorted[0]);
                for &j in &sorted {
                    if row[j] < best.0 {
                        best = (row[j], j);
                    }
                }
                best.1
            })
            .collect()
    }

    pub fn cost_of(&self, selected: &[CellId]) -> f64 {
        self.assign(selected)
            .iter()
            .enumerate()
            .map(|(i, &j)| self.counts[i] as f64 * self.distances.get(i, j))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionDetail {
    /// Coverage value per cell.
    Coverage(Vec<f64>),
    /// Serving station per cell.
    Assignment(Vec<CellId>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSolution {
    /// Selected cells, ascending.
    pub selected: Vec<CellId>,
    pub objective: f64,
    pub detail: SolutionDetail,
    pub status: SolveStatus,
    /// Search nodes visited (zero for closed-form or infeasible results).
    pub nodes: u64,
}

impl PlacementSolution {
    pub(crate) fn infeasible() -> Self {
        PlacementSolution {
            selected: Vec::new(),
            objective: f64::NAN,
            detail: SolutionDetail::None,
            status: SolveStatus::Infeasible,
            nodes: 0,
        }
    }

    pub(crate) fn mclp(spec: &McLpSpec, mut selected: Vec<CellId>, nodes: u64) -> Self {
        selected.sort_unstable();
        let coverage: Vec<f64> = spec
            .coverage_levels(&selected)
            .into_iter()
            .map(quantize_coverage)
            .collect();
        let objective = coverage
            .iter()
            .zip(&spec.counts)
            .map(|(x, &c)| c as f64 * x)
            .sum();
        PlacementSolution {
            selected,
            objective,
            detail: SolutionDetail::Coverage(coverage),
            status: SolveStatus::Optimal,
            nodes,
        }
    }

    pub(crate) fn pmedian(spec: &PMedianSpec, mut selected: Vec<CellId>, nodes: u64) -> Self {
        selected.sort_unstable();
        let assignment = spec.assign(&selected);
        let objective = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| spec.counts[i] as f64 * spec.distances.get(i, j))
            .sum();
        PlacementSolution {
            selected,
            objective,
            detail: SolutionDetail::Assignment(assignment),
            status: SolveStatus::Optimal,
            nodes,
        }
    }

    /// Writes `station_id,cell_id,cx_km,cy_km`.
    pub fn write_csv<W: Write>(&self, grid: &HexGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "cell_id", "cx_km", "cy_km"])?;
        for (sid, &cell) in self.selected.iter().enumerate() {
            let c = grid.centroid(cell)?;
            w.write_record([
                sid.to_string(),
                cell.to_string(),
                c.x.to_string(),
                c.y.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Either placement model, for callers that switch on strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum PlacementSpec {
    Mclp(McLpSpec),
    PMedian(PMedianSpec),
}

impl PlacementSpec {
    pub fn solve(&self) -> Result<PlacementSolution> {
        match self {
            PlacementSpec::Mclp(s) => solve_mclp(s),
            PlacementSpec::PMedian(s) => solve_pmedian(s),
        }
    }

    pub fn brute_force(&self) -> Result<PlacementSolution> {
        brute_force(self)
    }

    pub fn evaluate(&self, solution: &PlacementSolution) -> Result<f64> {
        evaluate(solution, self)
    }
}

/// Recomputes the objective of `solution` after checking it against `spec`.
pub fn evaluate(solution: &PlacementSolution, spec: &PlacementSpec) -> Result<f64> {
    if solution.status != SolveStatus::Optimal {
        return Err(Error::Validation("infeasible solutions carry no objective".into()));
    }
    let distinct: BTreeSet<CellId> = solution.selected.iter().copied().collect();
    if distinct.len() != solution.selected.len() {
        return Err(Error::Validation("selected cells repeat".into()));
    }
    match spec {
        PlacementSpec::Mclp(s) => {
            s.validate()?;
            if let Some(&c) = distinct.iter().find(|&&c| c >= s.len()) {
                return Err(Error::UnknownCell(c));
            }
            if distinct.len() > s.max_stations {
                return Err(Error::Validation(format!(
                    "{} stations exceed the limit of {}",
                    distinct.len(),
                    s.max_stations
                )));
            }
            let SolutionDetail::Coverage(x) = &solution.detail else {
                return Err(Error::Validation("covering solution needs coverage values".into()));
            };
            if x.len() != s.len() {
                return Err(Error::Validation("coverage vector has the wrong length".into()));
            }
            let level = s.coverage_levels(&solution.selected);
            for (i, (&xi, &li)) in x.iter().zip(&level).enumerate() {
                if ![0.0, 0.5, 1.0].contains(&xi) {
                    return Err(Error::Validation(format!("coverage of cell {i} is {xi}")));
                }
                if xi > li + 1e-12 {
                    return Err(Error::Validation(format!(
                        "cell {i} claims coverage {xi} above its bound {li}"
                    )));
                }
                if s.enforce_separation && li > 1.0 + 1e-12 {
                    return Err(Error::Validation(format!(
                        "separation violated at cell {i} (level {li})"
                    )));
                }
            }
            Ok(x.iter().zip(&s.counts).map(|(x, &c)| c as f64 * x).sum())
        }
        PlacementSpec::PMedian(s) => {
            s.validate()?;
            if distinct.len() != s.stations {
                return Err(Error::Validation(format!(
                    "{} stations selected, {} required",
                    distinct.len(),
                    s.stations
                )));
            }
            let allowed: BTreeSet<CellId> = s.allowed().into_iter().collect();
            if let Some(c) = distinct.iter().find(|c| !allowed.contains(c)) {
                return Err(Error::Validation(format!("cell {c} is not an allowed candidate")));
            }
            let SolutionDetail::Assignment(a) = &solution.detail else {
                return Err(Error::Validation("median solution needs an assignment".into()));
            };
            if a.len() != s.len() {
                return Err(Error::Validation("assignment has the wrong length".into()));
            }
            let mut total = 0.0;
            for (i, &j) in a.iter().enumerate() {
                if !distinct.contains(&j) {
                    return Err(Error::Validation(format!(
                        "cell {i} assigned to unselected station {j}"
                    )));
                }
                total += s.counts[i] as f64 * s.distances.get(i, j);
            }
            Ok(total)
        }
    }
}

/// Ordering of candidate selections: `Less` means `a` is preferred.
pub(crate) fn compare_mclp(a: (f64, &[CellId]), b: (f64, &[CellId])) -> Ordering {
    if a.0 > b.0 + OBJ_EPS {
        return Ordering::Less;
    }
    if b.0 > a.0 + OBJ_EPS {
        return Ordering::Greater;
    }
    b.1.len().cmp(&a.1.len()).then_with(|| a.1.cmp(b.1))
}

pub(crate) fn pmedian_tol(best: f64) -> f64 {
    OBJ_EPS * best.abs().max(1.0)
}

pub(crate) fn compare_pmedian(a: (f64, &[CellId]), b: (f64, &[CellId])) -> Ordering {
    let tol = pmedian_tol(b.0);
    if a.0 < b.0 - tol {
        return Ordering::Less;
    }
    if a.0 > b.0 + tol {
        return Ordering::Greater;
    }
    a.1.cmp(b.1)
}

/// Lexicographically smallest sorted list obtained by adding the `extra`
/// smallest ids of `pool` to `fixed`.
pub(crate) fn lex_floor(fixed: &[CellId], pool: &[CellId], extra: usize) -> Vec<CellId> {
    let mut smallest: Vec<CellId> = pool.to_vec();
    smallest.sort_unstable();
    smallest.truncate(extra);
    let mut out: Vec<CellId> = fixed.iter().copied().chain(smallest).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn line_mclp() -> McLpSpec {
        McLpSpec {
            counts: vec![5, 1, 3],
            neighbors: vec![vec![1], vec![0, 2], vec![1]],
            max_stations: 1,
            w0: 1.0,
            w1: 0.5,
            enforce_separation: false,
        }
    }

    pub(crate) fn line_pmedian(p: usize) -> PMedianSpec {
        PMedianSpec {
            counts: vec![5, 1, 3],
            candidates: vec![0, 1, 2],
            distances: DistanceMatrix::from_rows(vec![
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 1.0],
                vec![2.0, 1.0, 0.0],
            ])
            .unwrap(),
            stations: p,
            forbidden: BTreeSet::new(),
        }
    }

    #[test]
    fn line_mclp_picks_the_heavy_end() {
        let spec = line_mclp();
        let sol = solve_mclp(&spec).unwrap();
        assert_eq!(sol.selected, vec![0]);
        assert_eq!(sol.objective, 5.5);
        assert_eq!(sol.detail, SolutionDetail::Coverage(vec![1.0, 0.5, 0.0]));
        assert_eq!(evaluate(&sol, &PlacementSpec::Mclp(spec)).unwrap(), 5.5);
    }

    #[test]
    fn line_pmedian_costs() {
        let one = solve_pmedian(&line_pmedian(1)).unwrap();
        assert_eq!((one.selected.clone(), one.objective), (vec![0], 7.0));
        let two = solve_pmedian(&line_pmedian(2)).unwrap();
        assert_eq!((two.selected.clone(), two.objective), (vec![0, 2], 1.0));
        assert_eq!(two.detail, SolutionDetail::Assignment(vec![0, 0, 2]));
    }

    #[test]
    fn zero_demand_selects_the_first_cells() {
        let mut spec = line_mclp();
        spec.counts = vec![0, 0, 0];
        spec.max_stations = 2;
        let sol = solve_mclp(&spec).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.selected, vec![0, 1]);
    }

    #[test]
    fn saturated_mclp_covers_everything() {
        let mut spec = line_mclp();
        spec.max_stations = 3;
        let sol = solve_mclp(&spec).unwrap();
        assert_eq!(sol.objective, 9.0);
        assert_eq!(sol.selected, vec![0, 1, 2]);
    }

    #[test]
    fn saturated_pmedian_costs_nothing() {
        let sol = solve_pmedian(&line_pmedian(3)).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.detail, SolutionDetail::Assignment(vec![0, 1, 2]));
    }

    #[test]
    fn too_many_stations_is_infeasible() {
        let spec = line_pmedian(3).with_forbidden([1]);
        let sol = solve_pmedian(&spec).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn separation_keeps_stations_apart() {
        let mut spec = line_mclp();
        spec.max_stations = 2;
        spec.enforce_separation = true;
        let sol = solve_mclp(&spec).unwrap();
        // {0, 2} is the only pair without adjacent stations; cell 1 then
        // sees two neighbours (level 1.0, allowed).
        assert_eq!(sol.selected, vec![0, 2]);
        assert_eq!(sol.objective, 9.0);
    }

    #[test]
    fn evaluate_rejects_unselected_assignment() {
        let spec = line_pmedian(1);
        let mut sol = solve_pmedian(&spec).unwrap();
        sol.detail = SolutionDetail::Assignment(vec![0, 1, 0]);
        let err = evaluate(&sol, &PlacementSpec::PMedian(spec)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn evaluate_rejects_inflated_coverage() {
        let spec = line_mclp();
        let mut sol = solve_mclp(&spec).unwrap();
        sol.detail = SolutionDetail::Coverage(vec![1.0, 1.0, 0.0]);
        assert!(evaluate(&sol, &PlacementSpec::Mclp(spec)).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = line_mclp();
        spec.max_stations = 0;
        assert!(solve_mclp(&spec).is_err());
        let mut spec = line_mclp();
        spec.w1 = 2.0;
        assert!(solve_mclp(&spec).is_err());
        let mut spec = line_pmedian(1);
        spec.candidates.push(7);
        assert!(solve_pmedian(&spec).is_err());
    }

    #[test]
    fn ordering_helpers() {
        assert_eq!(compare_mclp((2.0, &[3]), (1.5, &[0])), Ordering::Less);
        assert_eq!(compare_mclp((2.0, &[3, 4]), (2.0, &[0])), Ordering::Less);
        assert_eq!(compare_mclp((2.0, &[0, 4]), (2.0, &[1, 2])), Ordering::Less);
        assert_eq!(compare_pmedian((1.0, &[5]), (1.0 + 1e-12, &[6])), Ordering::Less);
        assert_eq!(lex_floor(&[7], &[9, 2, 5], 2), vec![2, 5, 7]);
    }
}
