//! Build a synthetic road network and query a few routes under congestion.

use saev::geom::{Point, Rect};
use saev::network::{CongestionProfile, Network, TravelTable};

fn main() -> saev::Result<()> {
    let mut hours = [1.0; 24];
    hours[8] = 0.6;
    hours[17] = 0.5;
    let net = Network::build_synthetic(5, 300, Rect::with_size(10.0, 10.0)?)?
        .with_congestion(CongestionProfile::new(hours)?);
    println!("{} nodes, {} edges, strongly connected: {}", net.len(), net.edges().len(), net.is_strongly_connected());

    let a = net.nearest_node(Point::new(1.0, 1.0));
    let b = net.nearest_node(Point::new(9.0, 8.0));
    for hour in [3, 8, 17] {
        let r = net.shortest_path(a, b, hour)?;
        println!("{a} -> {b} at {hour:>2}h: {:.2} km, {:.1} min over {} edges", r.distance_km, r.duration_min, r.edges.len());
    }
    let table = TravelTable::build(&net)?;
    println!("free-flow table: {:.1} min, {} m", table.free_min(a, b), table.route_m(a, b));
    Ok(())
}
