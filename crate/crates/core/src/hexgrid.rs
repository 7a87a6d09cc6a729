//! Hexagonal tessellation of the service area and per-cell demand counts.
//!
//! Cells are pointy-top hexagons in axial `(q, r)` coordinates. The cell
//! "diameter" is the vertex-to-vertex width, so the circumradius is half of
//! it, neighbouring centroids are `diameter * sqrt(3) / 2` apart and one cell
//! covers `3 * sqrt(3) / 8 * diameter^2` square kilometres.
//!
//! A grid keeps every cell whose hexagon overlaps the region with positive
//! area; cells cut by the region boundary are kept whole. Cell ids follow
//! `(r, q)` row-major order, so the bottom row gets the lowest ids.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{clip_to_rect, polygon_area, Point, Rect};
use crate::network::Network;

pub type CellId = usize;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Axial neighbour offsets, counter-clockwise starting east.
const DIRECTIONS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axial {
    pub q: i32,
    pub r: i32,
}

#[derive(Debug, Clone)]
pub struct HexGrid {
    origin: Point,
    diameter: f64,
    region: Rect,
    cells: Vec<Axial>,
    index: HashMap<Axial, CellId>,
    neighbors: Vec<Vec<CellId>>,
}

impl HexGrid {
    /// Tessellates `region` with hexagons of the given vertex-to-vertex
    /// diameter. The lattice origin sits on the region's minimum corner.
    pub fn tessellate(region: Rect, diameter: f64) -> Result<Self> {
        // Re-validate: the fields of `Rect` are public.
        let region = Rect::new(region.min, region.max)?;
        if !(diameter.is_finite() && diameter > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cell diameter must be positive, got {diameter}"
            )));
        }
        let origin = region.min;
        let radius = 0.5 * diameter;
        let row_step = 1.5 * radius;
        let col_step = SQRT3 * radius;
        let min_area = 1e-9 * hex_area(diameter);

        let r_lo = ((region.min.y - origin.y - radius) / row_step).floor() as i32 - 1;
        let r_hi = ((region.max.y - origin.y + radius) / row_step).ceil() as i32 + 1;
        let mut cells = Vec::new();
        for r in r_lo..=r_hi {
            let shift = 0.5 * f64::from(r) * col_step;
            let q_lo = ((region.min.x - origin.x - shift - col_step) / col_step).floor() as i32 - 1;
            let q_hi = ((region.max.x - origin.x - shift + col_step) / col_step).ceil() as i32 + 1;
            for q in q_lo..=q_hi {
                let center = axial_center(origin, radius, Axial { q, r });
                let clipped = clip_to_rect(&hexagon(center, radius), &region);
                if polygon_area(&clipped) > min_area {
                    cells.push(Axial { q, r });
                }
            }
        }
        // Loop order already yields (r, q) ascending.
        let index: HashMap<Axial, CellId> =
            cells.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let neighbors = cells
            .iter()
            .map(|a| {
                let mut ns: Vec<CellId> = DIRECTIONS
                    .iter()
                    .filter_map(|(dq, dr)| {
                        index
                            .get(&Axial {
                                q: a.q + dq,
                                r: a.r + dr,
                            })
                            .copied()
                    })
                    .collect();
                ns.sort_unstable();
                ns
            })
            .collect();
        Ok(HexGrid {
            origin,
            diameter,
            region,
            cells,
            index,
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn axial(&self, cell: CellId) -> Result<Axial> {
        self.cells.get(cell).copied().ok_or(Error::UnknownCell(cell))
    }

    pub fn cell_at(&self, axial: Axial) -> Option<CellId> {
        self.index.get(&axial).copied()
    }

    pub fn centroid(&self, cell: CellId) -> Result<Point> {
        Ok(axial_center(self.origin, 0.5 * self.diameter, self.axial(cell)?))
    }

    pub fn centroids(&self) -> Vec<Point> {
        self.cells
            .iter()
            .map(|&a| axial_center(self.origin, 0.5 * self.diameter, a))
            .collect()
    }

    /// Neighbours of `cell` inside the grid, sorted by id.
    pub fn neighbors(&self, cell: CellId) -> &[CellId] {
        &self.neighbors[cell]
    }

    pub fn adjacency(&self) -> &[Vec<CellId>] {
        &self.neighbors
    }

    /// Distance between the centroids of two edge-sharing cells.
    pub fn centroid_spacing(&self) -> f64 {
        SQRT3 * 0.5 * self.diameter
    }

    pub fn cell_area(&self) -> f64 {
        hex_area(self.diameter)
    }

    /// Returns the cell containing `p`. Points on a shared edge or vertex go
    /// to the lowest candidate id.
    pub fn locate(&self, p: Point) -> Result<CellId> {
        if !self.region.contains(p) {
            return Err(Error::OutOfRegion { x: p.x, y: p.y });
        }
        Ok(self.nearest_cell(p))
    }

    /// Like [`HexGrid::locate`], but points outside the region are first
    /// clamped onto its boundary.
    pub fn locate_clamped(&self, p: Point) -> CellId {
        self.nearest_cell(self.region.clamp(p))
    }

    fn nearest_cell(&self, p: Point) -> CellId {
        let radius = 0.5 * self.diameter;
        let guess = axial_round(self.origin, radius, p);
        let tie = 1e-9 * radius * radius;
        let mut best: Option<(f64, CellId)> = None;
        let candidates = std::iter::once((0, 0))
            .chain(DIRECTIONS.iter().copied())
            .filter_map(|(dq, dr)| {
                self.cell_at(Axial {
                    q: guess.q + dq,
                    r: guess.r + dr,
                })
            });
        for id in candidates {
            let d2 = axial_center(self.origin, radius, self.cells[id]).dist2(p);
            best = match best {
                None => Some((d2, id)),
                Some((bd, bid)) if d2 < bd - tie || ((d2 - bd).abs() <= tie && id < bid) => {
                    Some((d2, id))
                }
                keep => keep,
            };
        }
        match best {
            Some((_, id)) => id,
            // Only reachable for points far outside every cell, which the
            // region check excludes; fall back to an exhaustive scan.
            None => self.nearest_cell_scan(p),
        }
    }

    fn nearest_cell_scan(&self, p: Point) -> CellId {
        let mut best = (f64::INFINITY, 0);
        for (id, c) in self.centroids().into_iter().enumerate() {
            let d2 = c.dist2(p);
            if d2 < best.0 {
                best = (d2, id);
            }
        }
        best.1
    }
}

fn hex_area(diameter: f64) -> f64 {
    let radius = 0.5 * diameter;
    1.5 * SQRT3 * radius * radius
}

fn axial_center(origin: Point, radius: f64, a: Axial) -> Point {
    Point::new(
        origin.x + radius * SQRT3 * (f64::from(a.q) + 0.5 * f64::from(a.r)),
        origin.y + radius * 1.5 * f64::from(a.r),
    )
}

fn hexagon(center: Point, radius: f64) -> [Point; 6] {
    std::array::from_fn(|k| {
        let angle = (60.0 * k as f64 + 30.0).to_radians();
        Point::new(
            center.x + radius * angle.cos(),
            center.y + radius * angle.sin(),
        )
    })
}

fn axial_round(origin: Point, radius: f64, p: Point) -> Axial {
    let dx = p.x - origin.x;
    let dy = p.y - origin.y;
    let qf = (SQRT3 / 3.0 * dx - dy / 3.0) / radius;
    let rf = (2.0 / 3.0 * dy) / radius;
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    Axial {
        q: q as i32,
        r: r as i32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandPoint {
    pub x_km: f64,
    pub y_km: f64,
    pub kind: PointKind,
}

impl DemandPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x_km, self.y_km)
    }
}

/// What to do with points that fall outside the grid region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Outside {
    #[default]
    Reject,
    Drop,
}

/// Pick-up plus drop-off counts per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandField {
    counts: Vec<u64>,
    dropped: usize,
}

impl DemandField {
    pub fn zeros(grid: &HexGrid) -> Self {
        DemandField {
            counts: vec![0; grid.len()],
            dropped: 0,
        }
    }

    /// Builds a field directly from per-cell counts.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        DemandField { counts, dropped: 0 }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, cell: CellId) -> u64 {
        self.counts[cell]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Points discarded under [`Outside::Drop`].
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn write_csv<W: Write>(&self, grid: &HexGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "q", "r", "cx_km", "cy_km", "count"])?;
        for (id, &count) in self.counts.iter().enumerate() {
            let a = grid.axial(id)?;
            let c = grid.centroid(id)?;
            w.write_record([
                id.to_string(),
                a.q.to_string(),
                a.r.to_string(),
                c.x.to_string(),
                c.y.to_string(),
                count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn aggregate_demand<'a, I>(grid: &HexGrid, points: I, outside: Outside) -> Result<DemandField>
where
    I: IntoIterator<Item = &'a Point>,
{
    let mut field = DemandField::zeros(grid);
    for &p in points {
        match grid.locate(p) {
            Ok(cell) => field.counts[cell] += 1,
            Err(Error::OutOfRegion { .. }) if outside == Outside::Drop => field.dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(field)
}

pub fn read_demand_points<R: Read>(input: R) -> Result<Vec<DemandPoint>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_demand_points<W: Write>(points: &[DemandPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Dense, row-major distance matrix over a subset of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    cells: Vec<CellId>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        if rows.iter().flatten().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidInput(
                "distances must be finite and non-negative".into(),
            ));
        }
        Ok(DistanceMatrix {
            cells: (0..n).collect(),
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Grid cell ids labelling rows and columns.
    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    /// Distance by row/column position (not by cell id).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cells.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cells.len();
        &self.values[i * n..(i + 1) * n]
    }
}

pub enum DistanceMetric<'a> {
    Euclidean,
    /// Shortest road distance between the nodes nearest to each centroid.
    Network(&'a Network),
}

pub fn centroid_distances(
    grid: &HexGrid,
    cells: &[CellId],
    metric: DistanceMetric<'_>,
) -> Result<DistanceMatrix> {
    let centers: Vec<Point> = cells
        .iter()
        .map(|&c| grid.centroid(c))
        .collect::<Result<_>>()?;
    let n = cells.len();
    let mut values = vec![0.0; n * n];
    match metric {
        DistanceMetric::Euclidean => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = centers[i].dist(centers[j]);
                    values[i * n + j] = d;
                    values[j * n + i] = d;
                }
            }
        }
        DistanceMetric::Network(net) => {
            let nodes: Vec<usize> = centers.iter().map(|&c| net.nearest_node(c)).collect();
            for i in 0..n {
                let tree = net.distance_tree_m(nodes[i]);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let m = tree[nodes[j]];
                    if m == u64::MAX {
                        return Err(Error::NoRoute {
                            from: nodes[i],
                            to: nodes[j],
                        });
                    }
                    values[i * n + j] = m as f64 / 1000.0;
                }
            }
        }
    }
    Ok(DistanceMatrix {
        cells: cells.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid10() -> HexGrid {
        HexGrid::tessellate(Rect::with_size(10.0, 10.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn corners_are_covered() {
        let g = grid10();
        for p in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)] {
            g.locate(Point::new(p.0, p.1)).unwrap();
        }
    }

    #[test]
    fn huge_cells_yield_a_single_cell() {
        let g = HexGrid::tessellate(Rect::with_size(1.0, 1.0).unwrap(), 10.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.locate(Point::new(0.5, 0.5)).unwrap(), 0);
    }

    /// Hand count for a 10x10 km square, origin on the corner: rows sit
    /// 0.75 km apart, so rows 0..=13 overlap the square (row 14 touches it
    /// with one vertex only). Even rows hold 13 cells (x = 0 .. 10.39),
    /// odd rows 12 (x = 0.43 .. 9.96; the cell at -0.43 only touches x = 0).
    #[test]
    fn ten_by_ten_count_is_pinned() {
        let g = grid10();
        assert_eq!(g.len(), 7 * 13 + 7 * 12);
        let nominal = 100.0 / g.cell_area();
        assert!((nominal - 153.96).abs() < 0.01);
        let rel = (g.len() as f64 - nominal).abs() / nominal;
        assert!(rel <= 0.15, "relative deviation {rel}");
    }

    #[test]
    fn cell_count_matches_dense_sampling() {
        let g = grid10();
        let mut seen = vec![false; g.len()];
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = Point::new(10.0 * i as f64 / steps as f64, 10.0 * j as f64 / steps as f64);
                seen[g.locate(p).unwrap()] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let r = Rect {
            min: Point::new(0.0, 0.0),
            max: Point::new(0.0, 5.0),
        };
        assert!(matches!(HexGrid::tessellate(r, 1.0), Err(Error::InvalidInput(_))));
        let r = Rect::with_size(2.0, 2.0).unwrap();
        assert!(HexGrid::tessellate(r, 0.0).is_err());
    }

    #[test]
    fn centroid_maps_to_itself() {
        let g = grid10();
        for id in 0..g.len() {
            let c = g.centroid(id).unwrap();
            if g.region().contains(c) {
                assert_eq!(g.locate(c).unwrap(), id);
            }
        }
    }

    #[test]
    fn shared_edge_goes_to_lower_id() {
        let g = grid10();
        let mut checked = 0;
        for a in 0..g.len() {
            for &b in g.neighbors(a) {
                let mid = {
                    let (ca, cb) = (g.centroid(a).unwrap(), g.centroid(b).unwrap());
                    Point::new(0.5 * (ca.x + cb.x), 0.5 * (ca.y + cb.y))
                };
                if g.region().contains(mid) {
                    assert_eq!(g.locate(mid).unwrap(), a.min(b));
                    checked += 1;
                }
            }
        }
        assert!(checked > 300);
    }

    #[test]
    fn outside_point_is_an_error() {
        let g = grid10();
        assert!(matches!(
            g.locate(Point::new(-0.1, 3.0)),
            Err(Error::OutOfRegion { .. })
        ));
    }

    #[test]
    fn locate_agrees_with_nearest_centroid() {
        let g = grid10();
        let centers = g.centroids();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            let brute = centers
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.dist2(p).total_cmp(&b.1.dist2(p)))
                .unwrap()
                .0;
            assert_eq!(g.locate(p).unwrap(), brute);
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_bounded() {
        let g = grid10();
        for i in 0..g.len() {
            assert!(g.neighbors(i).len() <= 6);
            for &j in g.neighbors(i) {
                assert!(g.neighbors(j).contains(&i));
                assert_ne!(i, j);
            }
        }
    }

    #[test]
    fn aggregation_basics() {
        let g = grid10();
        let f = aggregate_demand(&g, &[], Outside::Reject).unwrap();
        assert_eq!(f.total(), 0);
        let c = g.centroid(20).unwrap();
        let pts = vec![c; 5];
        let f = aggregate_demand(&g, &pts, Outside::Reject).unwrap();
        assert_eq!(f.count(20), 5);
        assert_eq!(f.total(), 5);
    }

    #[test]
    fn outside_points_rejected_or_dropped() {
        let g = grid10();
        let pts = [Point::new(1.0, 1.0), Point::new(11.0, 1.0)];
        assert!(aggregate_demand(&g, &pts, Outside::Reject).is_err());
        let f = aggregate_demand(&g, &pts, Outside::Drop).unwrap();
        assert_eq!((f.total(), f.dropped()), (1, 1));
    }

    #[test]
    fn uniform_points_stay_within_binomial_band() {
        // Each fully interior cell has probability area/100 of a point; a
        // clipped cell has less. Bound the deviation for interior cells by
        // six standard deviations of the mean count.
        let g = grid10();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point> = (0..10_000)
            .map(|_| Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let f = aggregate_demand(&g, &pts, Outside::Reject).unwrap();
        assert_eq!(f.total(), 10_000);
        let mean = 10_000.0 * g.cell_area() / 100.0;
        let r = g.region();
        let spacing = g.centroid_spacing();
        for id in 0..g.len() {
            let c = g.centroid(id).unwrap();
            let interior = c.x - 0.5 * spacing >= r.min.x
                && c.x + 0.5 * spacing <= r.max.x
                && c.y - 0.5 * g.diameter() >= r.min.y
                && c.y + 0.5 * g.diameter() <= r.max.y;
            if interior {
                let dev = (f.count(id) as f64 - mean).abs();
                assert!(dev < 6.0 * mean.sqrt(), "cell {id}: {} vs {mean}", f.count(id));
            }
        }
    }

    #[test]
    fn euclidean_distances() {
        let g = grid10();
        let m = centroid_distances(&g, &[5], DistanceMetric::Euclidean).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), 0.0);

        let a = 30;
        let b = g.neighbors(a)[0];
        let m = centroid_distances(&g, &[a, b], DistanceMetric::Euclidean).unwrap();
        assert!((m.get(0, 1) - 0.866_025_403_784_438_6).abs() < 1e-12);

        let subset = [3, 17, 40, 41, 99];
        let m = centroid_distances(&g, &subset, DistanceMetric::Euclidean).unwrap();
        for (i, &ci) in subset.iter().enumerate() {
            for (j, &cj) in subset.iter().enumerate() {
                let (p, q) = (g.centroid(ci).unwrap(), g.centroid(cj).unwrap());
                let brute = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
                assert!((m.get(i, j) - brute).abs() < 1e-12);
            }
        }
        assert!(matches!(
            centroid_distances(&g, &[9999], DistanceMetric::Euclidean),
            Err(Error::UnknownCell(9999))
        ));
    }

    #[test]
    fn demand_csv_has_expected_header() {
        let g = HexGrid::tessellate(Rect::with_size(2.0, 2.0).unwrap(), 1.0).unwrap();
        let f = DemandField::zeros(&g);
        let mut buf = Vec::new();
        f.write_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell_id,q,r,cx_km,cy_km,count\n"));
        assert_eq!(text.lines().count(), g.len() + 1);
    }

    #[test]
    fn demand_points_csv_roundtrip() {
        let pts = vec![
            DemandPoint { x_km: 1.5, y_km: 2.0, kind: PointKind::Pickup },
            DemandPoint { x_km: 3.25, y_km: 0.5, kind: PointKind::Dropoff },
        ];
        let mut buf = Vec::new();
        write_demand_points(&pts, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x_km,y_km,kind\n"));
        assert_eq!(read_demand_points(&buf[..]).unwrap(), pts);
    }
}
