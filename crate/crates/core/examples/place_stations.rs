//! Solve MCLP and P-Median on the same demand field.

use saev::geom::{Point, Rect};
use saev::hexgrid::{aggregate_demand, centroid_distances, DistanceMetric, HexGrid, Outside};
use saev::placement::{McLpSpec, PMedianSpec, PlacementSpec};

fn main() -> saev::Result<()> {
    let grid = HexGrid::tessellate(Rect::with_size(8.0, 8.0)?, 1.0)?;
    // Two demand hot spots and a thin background.
    let mut points = Vec::new();
    for i in 0..400 {
        let a = i as f64 * 0.37;
        points.push(Point::new(2.0 + 0.8 * a.cos(), 2.5 + 0.8 * a.sin()));
        if i % 2 == 0 {
            points.push(Point::new(6.0 + 0.6 * a.sin(), 5.5 + 0.6 * a.cos()));
        }
        if i % 10 == 0 {
            points.push(Point::new((i % 80) as f64 / 10.0, (i / 80) as f64 * 1.5));
        }
    }
    let field = aggregate_demand(&grid, &points, Outside::Drop)?;

    let mclp = PlacementSpec::Mclp(McLpSpec::new(&field, &grid, 2)).solve()?;
    println!("MCLP      cells {:?} covered {:.1}", mclp.selected, mclp.objective);

    let cells: Vec<usize> = (0..grid.len()).collect();
    let d = centroid_distances(&grid, &cells, DistanceMetric::Euclidean)?;
    let pm = PlacementSpec::PMedian(PMedianSpec::new(&field, d, 2)).solve()?;
    println!("P-Median  cells {:?} cost {:.1} ({} B&B nodes)", pm.selected, pm.objective, pm.nodes);
    Ok(())
}
