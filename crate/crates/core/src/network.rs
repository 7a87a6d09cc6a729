//! Road graph, time-of-day travel times and shortest paths.
//!
//! Speeds are scaled by an exogenous per-hour multiplier that applies to the
//! whole network; a leg keeps the multiplier of its departure hour until it
//! ends. Because the multiplier is uniform, the fastest route between two
//! nodes does not depend on the hour, and [`TravelTable`] can precompute all
//! pairs once at free-flow speed.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::io::Read;
use std::ops::Add;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// External identifier (as read from file); also the tie-break key.
    pub id: u64,
    pub from: NodeId,
    pub to: NodeId,
    /// Length rounded to whole metres, at least 1.
    pub length_m: u64,
    pub speed_kmh: f64,
}

impl Edge {
    pub fn length_km(&self) -> f64 {
        self.length_m as f64 / 1000.0
    }

    pub fn free_minutes(&self) -> f64 {
        60.0 * self.length_km() / self.speed_kmh
    }
}

/// Speed multiplier in (0, 1] for each hour of the day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionProfile([f64; 24]);

impl CongestionProfile {
    pub fn new(multipliers: [f64; 24]) -> Result<Self> {
        if let Some((h, m)) = multipliers
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m > 0.0 && **m <= 1.0))
        {
            return Err(Error::InvalidInput(format!(
                "congestion multiplier for hour {h} must lie in (0, 1], got {m}"
            )));
        }
        Ok(CongestionProfile(multipliers))
    }

    pub fn free_flow() -> Self {
        CongestionProfile([1.0; 24])
    }

    /// Hour of day for a time in minutes since midnight of day zero.
    pub fn hour_of(minutes: f64) -> usize {
        (minutes / 60.0).floor().rem_euclid(24.0) as usize
    }

    pub fn multiplier(&self, hour: usize) -> f64 {
        self.0[hour % 24]
    }

    pub fn as_array(&self) -> &[f64; 24] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

impl Default for CongestionProfile {
    /// Slower traffic during 08:00-10:00 and 16:00-20:00.
    fn default() -> Self {
        let mut m = [1.0; 24];
        for h in (8..10).chain(16..20) {
            m[h] = 0.7;
        }
        CongestionProfile(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    pub distance_km: f64,
    pub duration_min: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Point>,
    edges: Vec<Edge>,
    out: Vec<Vec<EdgeId>>,
    congestion: CongestionProfile,
}

impl Network {
    /// Builds a network from parts. Out-edges are visited in ascending
    /// `Edge::id` order.
    pub fn from_parts(
        nodes: Vec<Point>,
        mut edges: Vec<Edge>,
        congestion: CongestionProfile,
    ) -> Result<Self> {
        edges.sort_by_key(|e| e.id);
        let mut out = vec![Vec::new(); nodes.len()];
        for (idx, e) in edges.iter().enumerate() {
            if e.from >= nodes.len() {
                return Err(Error::UnknownNode(e.from));
            }
            if e.to >= nodes.len() {
                return Err(Error::UnknownNode(e.to));
            }
            if e.length_m == 0 || !(e.speed_kmh > 0.0 && e.speed_kmh.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "edge {} needs positive length and speed",
                    e.id
                )));
            }
            out[e.from].push(idx);
        }
        Ok(Network {
            nodes,
            edges,
            out,
            congestion,
        })
    }

    /// Random geometric graph: uniform nodes, each linked both ways to its
    /// three nearest neighbours, then components joined by their closest
    /// node pairs. Road length is 1.2 times the straight line; speeds are
    /// 30, 40 or 50 km/h.
    pub fn build_synthetic(seed: u64, n_nodes: usize, region: Rect) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidInput(format!(
                "a synthetic network needs at least 2 nodes, got {n_nodes}"
            )));
        }
        const NEAREST: usize = 3;
        const CIRCUITY: f64 = 1.2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<Point> = (0..n_nodes)
            .map(|_| {
                Point::new(
                    rng.random_range(region.min.x..=region.max.x),
                    rng.random_range(region.min.y..=region.max.y),
                )
            })
            .collect();

        let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for i in 0..n_nodes {
            let mut by_dist: Vec<(f64, NodeId)> = (0..n_nodes)
                .filter(|&j| j != i)
                .map(|j| (nodes[i].dist2(nodes[j]), j))
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in by_dist.iter().take(NEAREST) {
                pairs.insert((i.min(j), i.max(j)));
            }
        }

        // Connectivity repair: repeatedly attach the component of node 0 to
        // the closest node outside it.
        loop {
            let comp = undirected_components(n_nodes, &pairs);
            let root = comp[0];
            if comp.iter().all(|&c| c == root) {
                break;
            }
            let mut best: Option<(f64, NodeId, NodeId)> = None;
            for a in (0..n_nodes).filter(|&a| comp[a] == root) {
                for b in (0..n_nodes).filter(|&b| comp[b] != root) {
                    let d = nodes[a].dist2(nodes[b]);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, a, b));
                    }
                }
            }
            let (_, a, b) = best.expect("disconnected graph has a crossing pair");
            pairs.insert((a.min(b), a.max(b)));
        }

        let mut edges = Vec::with_capacity(2 * pairs.len());
        for &(a, b) in &pairs {
            let length_m = ((nodes[a].dist(nodes[b]) * CIRCUITY * 1000.0).round() as u64).max(1);
            let speed_kmh = 30.0 + 10.0 * f64::from(rng.random_range(0..3u8));
            for (from, to) in [(a, b), (b, a)] {
                edges.push(Edge {
                    id: edges.len() as u64,
                    from,
                    to,
                    length_m,
                    speed_kmh,
                });
            }
        }
        Network::from_parts(nodes, edges, CongestionProfile::default())
    }

    /// Reads `node_id,x_km,y_km` and `edge_id,from,to,length_km,speed_kmh`
    /// CSV files. The result must be strongly connected.
    pub fn load(nodes_path: &Path, edges_path: &Path, congestion: CongestionProfile) -> Result<Self> {
        let nodes_file = std::fs::File::open(nodes_path)?;
        let edges_file = std::fs::File::open(edges_path)?;
        Network::load_from(nodes_file, nodes_path, edges_file, edges_path, congestion)
    }

    pub fn load_from<R1: Read, R2: Read>(
        nodes_in: R1,
        nodes_path: &Path,
        edges_in: R2,
        edges_path: &Path,
        congestion: CongestionProfile,
    ) -> Result<Self> {
        #[derive(Deserialize)]
        struct NodeRow {
            node_id: u64,
            x_km: f64,
            y_km: f64,
        }
        #[derive(Deserialize)]
        struct EdgeRow {
            edge_id: u64,
            from: u64,
            to: u64,
            length_km: f64,
            speed_kmh: f64,
        }
        let parse_err = |path: &Path, row: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };

        let mut nodes = Vec::new();
        let mut index: HashMap<u64, NodeId> = HashMap::new();
        let mut node_rows = Vec::new();
        for (i, rec) in csv::Reader::from_reader(nodes_in).deserialize::<NodeRow>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse_err(nodes_path, row, e.to_string()))?;
            if !(rec.x_km.is_finite() && rec.y_km.is_finite()) {
                return Err(parse_err(nodes_path, row, "non-finite coordinate".into()));
            }
            if index.insert(rec.node_id, nodes.len()).is_some() {
                return Err(parse_err(nodes_path, row, format!("duplicate node_id {}", rec.node_id)));
            }
            nodes.push(Point::new(rec.x_km, rec.y_km));
            node_rows.push(row);
        }

        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, rec) in csv::Reader::from_reader(edges_in).deserialize::<EdgeRow>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| parse_err(edges_path, row, e.to_string()))?;
            if !(rec.length_km > 0.0 && rec.length_km.is_finite()) {
                return Err(parse_err(edges_path, row, format!("length_km must be positive, got {}", rec.length_km)));
            }
            if !(rec.speed_kmh > 0.0 && rec.speed_kmh.is_finite()) {
                return Err(parse_err(edges_path, row, format!("speed_kmh must be positive, got {}", rec.speed_kmh)));
            }
            if !seen.insert(rec.edge_id) {
                return Err(parse_err(edges_path, row, format!("duplicate edge_id {}", rec.edge_id)));
            }
            let lookup = |id: u64| {
                index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| parse_err(edges_path, row, format!("unknown node {id}")))
            };
            edges.push(Edge {
                id: rec.edge_id,
                from: lookup(rec.from)?,
                to: lookup(rec.to)?,
                length_m: ((rec.length_km * 1000.0).round() as u64).max(1),
                speed_kmh: rec.speed_kmh,
            });
        }
        if nodes.len() < 2 {
            return Err(parse_err(nodes_path, 1, "network needs at least 2 nodes".into()));
        }
        let net = Network::from_parts(nodes, edges, congestion)?;
        let scc = net.largest_component();
        if let Some(outside) = (0..net.len()).find(|v| !scc[*v]) {
            return Err(parse_err(
                nodes_path,
                node_rows[outside],
                "node is not strongly connected to the rest of the network".into(),
            ));
        }
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Point {
        self.nodes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out[node]
    }

    pub fn congestion(&self) -> &CongestionProfile {
        &self.congestion
    }

    pub fn with_congestion(mut self, congestion: CongestionProfile) -> Self {
        self.congestion = congestion;
        self
    }

    /// Closest node to `p`; ties go to the lower id.
    pub fn nearest_node(&self, p: Point) -> NodeId {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.dist2(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.largest_component().iter().all(|&b| b)
    }

    /// Membership mask of the largest strongly connected component (lowest
    /// node id wins ties).
    pub fn largest_component(&self) -> Vec<bool> {
        let comp = self.strong_components();
        let mut sizes: HashMap<usize, (usize, NodeId)> = HashMap::new();
        for (v, &c) in comp.iter().enumerate() {
            let e = sizes.entry(c).or_insert((0, v));
            e.0 += 1;
        }
        let best = sizes
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(c, _)| *c);
        comp.iter().map(|c| Some(*c) == best).collect()
    }

    /// Kosaraju, iterative.
    fn strong_components(&self) -> Vec<usize> {
        let n = self.len();
        let mut order = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        for s in 0..n {
            if visited[s] {
                continue;
            }
            visited[s] = true;
            let mut stack = vec![(s, 0usize)];
            while let Some((v, i)) = stack.pop() {
                if let Some(&e) = self.out[v].get(i) {
                    stack.push((v, i + 1));
                    let w = self.edges[e].to;
                    if !visited[w] {
                        visited[w] = true;
                        stack.push((w, 0));
                    }
                } else {
                    order.push(v);
                }
            }
        }
        let mut incoming = vec![Vec::new(); n];
        for e in &self.edges {
            incoming[e.to].push(e.from);
        }
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for &s in order.iter().rev() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &u in &incoming[v] {
                    if comp[u] == usize::MAX {
                        comp[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Fastest route departing in `depart_hour`.
    pub fn shortest_path(&self, from: NodeId, to: NodeId, depart_hour: usize) -> Result<Route> {
        for n in [from, to] {
            if n >= self.len() {
                return Err(Error::UnknownNode(n));
            }
        }
        let mult = self.congestion.multiplier(depart_hour);
        let tree = self.dijkstra(from, |e| e.free_minutes() / mult);
        if tree.cost[to].is_none() {
            return Err(Error::NoRoute { from, to });
        }
        let mut edges = Vec::new();
        let mut v = to;
        while let Some(e) = tree.pred[v] {
            edges.push(e);
            v = self.edges[e].from;
        }
        edges.reverse();
        let distance_km = edges.iter().map(|&e| self.edges[e].length_km()).sum();
        let duration_min = edges.iter().map(|&e| self.edges[e].free_minutes() / mult).sum();
        Ok(Route {
            edges,
            distance_km,
            duration_min,
        })
    }

    /// Shortest road distance in metres from `src` to every node
    /// (`u64::MAX` where unreachable).
    pub fn distance_tree_m(&self, src: NodeId) -> Vec<u64> {
        self.dijkstra(src, |e| e.length_m)
            .cost
            .into_iter()
            .map(|c| c.unwrap_or(u64::MAX))
            .collect()
    }

    fn dijkstra<W, F>(&self, src: NodeId, weight: F) -> Tree<W>
    where
        W: Copy + PartialOrd + Add<Output = W> + Default,
        F: Fn(&Edge) -> W,
    {
        let n = self.len();
        let mut cost: Vec<Option<W>> = vec![None; n];
        let mut pred: Vec<Option<EdgeId>> = vec![None; n];
        let mut done = vec![false; n];
        let mut settled = Vec::with_capacity(n);
        let mut heap = BinaryHeap::new();
        cost[src] = Some(W::default());
        heap.push(HeapItem {
            cost: W::default(),
            node: src,
        });
        while let Some(HeapItem { cost: c, node: v }) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            settled.push(v);
            for &e in &self.out[v] {
                let edge = &self.edges[e];
                let w = edge.to;
                if done[w] {
                    continue;
                }
                let nc = c + weight(edge);
                let better = match cost[w] {
                    None => true,
                    Some(old) => {
                        nc < old
                            || (nc == old
                                && pred[w].is_some_and(|p| edge.id < self.edges[p].id))
                    }
                };
                if better {
                    cost[w] = Some(nc);
                    pred[w] = Some(e);
                    heap.push(HeapItem { cost: nc, node: w });
                }
            }
        }
        Tree {
            cost,
            pred,
            settled,
        }
    }
}

struct Tree<W> {
    cost: Vec<Option<W>>,
    pred: Vec<Option<EdgeId>>,
    settled: Vec<NodeId>,
}

struct HeapItem<W> {
    cost: W,
    node: NodeId,
}

impl<W: PartialOrd> PartialEq for HeapItem<W> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<W: PartialOrd> Eq for HeapItem<W> {}

impl<W: PartialOrd> PartialOrd for HeapItem<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<W: PartialOrd> Ord for HeapItem<W> {
    // Min-heap on cost, then node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn undirected_components(n: usize, pairs: &BTreeSet<(NodeId, NodeId)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|v| find(&mut parent, v)).collect()
}

/// All-pairs table of free-flow fastest routes.
#[derive(Debug, Clone)]
pub struct TravelTable {
    n: usize,
    free_min: Vec<f64>,
    route_m: Vec<u64>,
    shortest_m: Vec<u64>,
}

impl TravelTable {
    pub fn build(net: &Network) -> Result<Self> {
        let n = net.len();
        let rows: Vec<(Vec<f64>, Vec<u64>, Vec<u64>)> = (0..n)
            .into_par_iter()
            .map(|src| {
                let tree = net.dijkstra(src, Edge::free_minutes);
                let mut route = vec![u64::MAX; n];
                route[src] = 0;
                for &v in &tree.settled {
                    if let Some(e) = tree.pred[v] {
                        let edge = &net.edges[e];
                        route[v] = route[edge.from] + edge.length_m;
                    }
                }
                let free = tree.cost.iter().map(|c| c.unwrap_or(f64::INFINITY)).collect();
                (free, route, net.distance_tree_m(src))
            })
            .collect();
        let mut table = TravelTable {
            n,
            free_min: Vec::with_capacity(n * n),
            route_m: Vec::with_capacity(n * n),
            shortest_m: Vec::with_capacity(n * n),
        };
        for (src, (free, route, shortest)) in rows.into_iter().enumerate() {
            if let Some(dst) = route.iter().position(|&m| m == u64::MAX) {
                return Err(Error::NoRoute { from: src, to: dst });
            }
            table.free_min.extend(free);
            table.route_m.extend(route);
            table.shortest_m.extend(shortest);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Free-flow minutes along the fastest route.
    pub fn free_min(&self, from: NodeId, to: NodeId) -> f64 {
        self.free_min[from * self.n + to]
    }

    /// Length of the fastest route, metres.
    pub fn route_m(&self, from: NodeId, to: NodeId) -> u64 {
        self.route_m[from * self.n + to]
    }

    /// Length of the shortest route, metres.
    pub fn shortest_m(&self, from: NodeId, to: NodeId) -> u64 {
        self.shortest_m[from * self.n + to]
    }
}
