//! Tessellate a region and count random demand points per cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saev::geom::{Point, Rect};
use saev::hexgrid::{aggregate_demand, HexGrid, Outside};

fn main() -> saev::Result<()> {
    let grid = HexGrid::tessellate(Rect::with_size(10.0, 10.0)?, 1.0)?;
    println!("{} cells of {:.4} km2, centroid spacing {:.4} km", grid.len(), grid.cell_area(), grid.centroid_spacing());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Point> = (0..5000)
        .map(|_| Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
        .collect();
    let field = aggregate_demand(&grid, &points, Outside::Drop)?;
    let busiest = (0..grid.len()).max_by_key(|&c| field.count(c)).unwrap();
    println!("total {}, busiest cell {busiest} with {}", field.total(), field.count(busiest));
    field.write_csv(&grid, std::io::stdout().lock())
}
