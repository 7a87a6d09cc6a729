#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use saev::geom::{Point, Rect};
use saev::hexgrid::HexGrid;
use saev::network::{CongestionProfile, Edge, Network, TravelTable};

/// Nodes on a line 1 km apart at 60 km/h: one minute per hop.
pub fn line(n: usize) -> (Network, TravelTable) {
    let nodes = (0..n).map(|i| Point::new(i as f64, 0.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        for (a, b) in [(i, i + 1), (i + 1, i)] {
            edges.push(Edge {
                id: edges.len() as u64,
                from: a,
                to: b,
                length_m: 1000,
                speed_kmh: 60.0,
            });
        }
    }
    let net = Network::from_parts(nodes, edges, CongestionProfile::free_flow()).unwrap();
    let table = TravelTable::build(&net).unwrap();
    (net, table)
}

/// Random field on a small hex patch, so adjacency is realistic.
pub fn random_patch(rng: &mut ChaCha8Rng) -> (HexGrid, Vec<u64>) {
    loop {
        let w = rng.random_range(1.5..4.0);
        let h = rng.random_range(1.0..3.0);
        let grid = HexGrid::tessellate(Rect::with_size(w, h).unwrap(), 1.0).unwrap();
        if (2..=12).contains(&grid.len()) {
            let counts = (0..grid.len()).map(|_| rng.random_range(0..=20)).collect();
            return (grid, counts);
        }
    }
}
