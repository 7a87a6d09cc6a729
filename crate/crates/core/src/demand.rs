//! Synthetic population, trip chains and wait-sensitive mode choice.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::hexgrid::{CellId, HexGrid};
use crate::network::{CongestionProfile, Network, NodeId, TravelTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Home,
    Work,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub home: NodeId,
    pub work: NodeId,
    pub other: NodeId,
    /// Activities left during the day with their end times in minutes. The
    /// agent returns home after the last one.
    pub chain: Vec<(Activity, f64)>,
    /// Multiplier on waiting-time disutility.
    pub taste: f64,
}

impl Agent {
    pub fn node_of(&self, a: Activity) -> NodeId {
        match a {
            Activity::Home => self.home,
            Activity::Work => self.work,
            Activity::Other => self.other,
        }
    }

    pub fn trip_count(&self) -> usize {
        self.chain.len()
    }

    /// Origin, destination and planned departure of trip `k`.
    pub fn trip(&self, k: usize) -> (NodeId, NodeId, f64) {
        let (from, t) = self.chain[k];
        let to = self.chain.get(k + 1).map_or(Activity::Home, |c| c.0);
        (self.node_of(from), self.node_of(to), t)
    }
}

/// Spatial mixture the anchors are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationParams {
    /// Hub centre, spread (km) and relative weight.
    pub hubs: Vec<(Point, f64, f64)>,
    /// Weight of the uniform background for home anchors.
    pub home_background: f64,
    /// Weight of the uniform background for work and other anchors.
    pub activity_background: f64,
    /// Probability of a chain of 2, 3, 4 and 5 trips.
    pub chain_lengths: [f64; 4],
    pub morning_mean_min: f64,
    pub morning_sd_min: f64,
    pub evening_mean_min: f64,
    pub evening_sd_min: f64,
    pub taste_sigma: f64,
}

impl PopulationParams {
    /// Three hubs placed inside `region`.
    pub fn for_region(region: &Rect) -> Self {
        let at = |fx: f64, fy: f64| {
            Point::new(
                region.min.x + fx * region.width(),
                region.min.y + fy * region.height(),
            )
        };
        let spread = 0.1 * region.width().min(region.height());
        PopulationParams {
            hubs: vec![
                (at(0.32, 0.35), spread, 0.45),
                (at(0.70, 0.30), spread, 0.3),
                (at(0.50, 0.72), spread, 0.25),
            ],
            home_background: 0.25,
            activity_background: 0.1,
            chain_lengths: [0.45, 0.25, 0.2, 0.1],
            morning_mean_min: 8.5 * 60.0,
            morning_sd_min: 45.0,
            evening_mean_min: 17.5 * 60.0,
            evening_sd_min: 60.0,
            taste_sigma: 0.3,
        }
    }

    fn node_weights(&self, net: &Network, region: &Rect, background: f64) -> Vec<f64> {
        let hub_total: f64 = self.hubs.iter().map(|h| h.2).sum();
        net.nodes()
            .iter()
            .map(|&p| {
                let hubs: f64 = self
                    .hubs
                    .iter()
                    .map(|&(c, s, w)| {
                        let z = p.dist2(c) / (2.0 * s * s);
                        (1.0 - background) * w / hub_total * (-z).exp()
                            / (2.0 * std::f64::consts::PI * s * s)
                    })
                    .sum();
                hubs + background / region.area()
            })
            .collect()
    }
}

/// Draws `n_agents` agents; the same seed always gives the same population.
pub fn generate_agents(seed: u64, n_agents: usize, grid: &HexGrid, net: &Network) -> Result<Vec<Agent>> {
    generate_agents_with(
        seed,
        n_agents,
        &PopulationParams::for_region(grid.region()),
        grid.region(),
        net,
    )
}

pub fn generate_agents_with(
    seed: u64,
    n_agents: usize,
    params: &PopulationParams,
    region: &Rect,
    net: &Network,
) -> Result<Vec<Agent>> {
    if n_agents == 0 {
        return Err(Error::InvalidInput("population needs at least one agent".into()));
    }
    if net.len() < 2 {
        return Err(Error::InvalidInput("network needs at least two nodes".into()));
    }
    let weights = |bg| {
        WeightedIndex::new(params.node_weights(net, region, bg))
            .map_err(|e| Error::InvalidInput(format!("anchor weights: {e}")))
    };
    let home_w = weights(params.home_background)?;
    let act_w = weights(params.activity_background)?;
    let length_w = WeightedIndex::new(params.chain_lengths)
        .map_err(|e| Error::InvalidInput(format!("chain length weights: {e}")))?;
    let morning = Normal::new(params.morning_mean_min, params.morning_sd_min)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let evening = Normal::new(params.evening_mean_min, params.evening_sd_min)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let taste = LogNormal::new(0.0, params.taste_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(n_agents);
    for id in 0..n_agents {
        let home = home_w.sample(&mut rng);
        let work = distinct(&mut rng, &act_w, &[home], net.len());
        let other = distinct(&mut rng, &act_w, &[home, work], net.len());
        let trips = 2 + length_w.sample(&mut rng);

        let first = morning.sample(&mut rng).clamp(5.0 * 60.0, 11.0 * 60.0);
        let last = evening
            .sample(&mut rng)
            .clamp(14.0 * 60.0, 22.5 * 60.0)
            .max(first + 30.0 * trips as f64);
        let mut times = vec![first];
        let mut middle: Vec<f64> = (0..trips - 2)
            .map(|_| rng.random_range(first + 15.0..last - 15.0))
            .collect();
        middle.sort_by(f64::total_cmp);
        times.extend(middle);
        times.push(last);
        for k in 1..times.len() {
            if times[k] <= times[k - 1] {
                times[k] = times[k - 1] + 1.0;
            }
        }

        let mut acts = vec![Activity::Home, Activity::Work];
        while acts.len() < trips {
            let next = if acts.last() == Some(&Activity::Work) {
                Activity::Other
            } else {
                Activity::Work
            };
            acts.push(next);
        }
        agents.push(Agent {
            id,
            home,
            work,
            other,
            chain: acts.into_iter().zip(times).collect(),
            taste: taste.sample(&mut rng),
        });
    }
    Ok(agents)
}

fn distinct(rng: &mut ChaCha8Rng, w: &WeightedIndex<f64>, avoid: &[NodeId], n: usize) -> NodeId {
    for _ in 0..32 {
        let v = w.sample(rng);
        if !avoid.contains(&v) {
            return v;
        }
    }
    (0..n).find(|v| !avoid.contains(v)).expect("network has enough nodes")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRequest {
    pub agent: usize,
    pub trip_index: usize,
    /// Planned departure, minutes from midnight.
    pub time_min: f64,
    pub origin: NodeId,
    pub destination: NodeId,
    pub origin_cell: CellId,
    /// Shortest-path distance.
    pub direct_km: f64,
    /// Fastest free-flow time slowed by congestion at the planned hour.
    pub direct_min: f64,
}

/// Every trip of every agent, in agent order then chain order.
pub fn trip_requests(
    agents: &[Agent],
    grid: &HexGrid,
    net: &Network,
    table: &TravelTable,
) -> Vec<TripRequest> {
    let mut out = Vec::new();
    for a in agents {
        for k in 0..a.trip_count() {
            let (o, d, t) = a.trip(k);
            let hour = CongestionProfile::hour_of(t);
            out.push(TripRequest {
                agent: a.id,
                trip_index: k,
                time_min: t,
                origin: o,
                destination: d,
                origin_cell: grid.locate_clamped(net.node(o)),
                direct_km: table.shortest_m(o, d) as f64 / 1000.0,
                direct_min: table.free_min(o, d) / net.congestion().multiplier(hour),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Saev,
    Other,
}

/// Expected SAEV wait per origin cell and hour of day.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitTable {
    values: Vec<[f64; 24]>,
}

impl WaitTable {
    pub fn zeros(cells: usize) -> Self {
        WaitTable {
            values: vec![[0.0; 24]; cells],
        }
    }

    pub fn get(&self, cell: CellId, hour: usize) -> f64 {
        self.values[cell][hour % 24]
    }

    pub fn set(&mut self, cell: CellId, hour: usize, minutes: f64) {
        self.values[cell][hour % 24] = minutes.max(0.0);
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "hour", "expected_wait_min"])?;
        for (c, row) in self.values.iter().enumerate() {
            for (h, v) in row.iter().enumerate() {
                w.write_record([c.to_string(), h.to_string(), format!("{v:.6}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceModel {
    /// Per euro.
    pub beta_cost: f64,
    /// Per minute of waiting.
    pub beta_wait: f64,
    /// Per minute in the vehicle.
    pub beta_ivt: f64,
    pub asc: f64,
    /// Euro per direct km.
    pub fare_per_km: f64,
    pub other_cost_per_km: f64,
    /// Duration of the other mode relative to the direct car time.
    pub other_time_factor: f64,
    pub expected: WaitTable,
}

impl ChoiceModel {
    pub fn new(cells: usize) -> Self {
        ChoiceModel {
            beta_cost: -0.25,
            beta_wait: -0.10,
            beta_ivt: -0.05,
            asc: -2.0,
            fare_per_km: 0.4,
            other_cost_per_km: 0.1,
            other_time_factor: 1.5,
            expected: WaitTable::zeros(cells),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("beta_cost", self.beta_cost),
            ("beta_wait", self.beta_wait),
            ("beta_ivt", self.beta_ivt),
        ] {
            if !(b.is_finite() && b <= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and <= 0, got {b}")));
            }
        }
        if !(self.fare_per_km >= 0.0 && self.other_cost_per_km >= 0.0 && self.other_time_factor > 0.0)
            || !self.asc.is_finite()
        {
            return Err(Error::InvalidInput("choice model cost terms out of range".into()));
        }
        Ok(())
    }

    pub fn saev_utility(&self, direct_km: f64, direct_min: f64, taste: f64, wait_min: f64) -> f64 {
        self.asc
            + self.beta_cost * self.fare_per_km * direct_km
            + self.beta_wait * taste * wait_min
            + self.beta_ivt * direct_min
    }

    pub fn other_utility(&self, direct_km: f64, direct_min: f64) -> f64 {
        self.beta_cost * self.other_cost_per_km * direct_km
            + self.beta_ivt * self.other_time_factor * direct_min
    }

    /// Minutes the trip takes when made with the other mode.
    pub fn other_duration(&self, direct_min: f64) -> f64 {
        self.other_time_factor * direct_min
    }

    pub fn p_saev_given(&self, direct_km: f64, direct_min: f64, taste: f64, wait_min: f64) -> f64 {
        let du = self.other_utility(direct_km, direct_min)
            - self.saev_utility(direct_km, direct_min, taste, wait_min);
        logistic(-du)
    }

    pub fn p_saev(&self, req: &TripRequest, taste: f64) -> f64 {
        let hour = CongestionProfile::hour_of(req.time_min);
        let wait = self.expected.get(req.origin_cell, hour);
        self.p_saev_given(req.direct_km, req.direct_min, taste, wait)
    }
}

/// `1 / (1 + e^-x)` without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Picks SAEV when the uniform draw `u` falls below its probability.
pub fn choose_mode(req: &TripRequest, taste: f64, model: &ChoiceModel, u: f64) -> Mode {
    if u < model.p_saev(req, taste) {
        Mode::Saev
    } else {
        Mode::Other
    }
}

/// Realized wait of one served request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitObservation {
    pub cell: CellId,
    pub hour: usize,
    pub wait_min: f64,
}

/// Successive-averages update after day `day_index` (0-based).
pub fn update_expectations(table: &mut WaitTable, observations: &[WaitObservation], day_index: usize) {
    let step = 1.0 / (day_index as f64 + 1.0);
    let n = table.cells();
    let mut sum = vec![[0.0f64; 24]; n];
    let mut count = vec![[0u32; 24]; n];
    for o in observations {
        sum[o.cell][o.hour % 24] += o.wait_min;
        count[o.cell][o.hour % 24] += 1;
    }
    let global = if observations.is_empty() {
        None
    } else {
        Some(observations.iter().map(|o| o.wait_min).sum::<f64>() / observations.len() as f64)
    };
    for c in 0..n {
        for h in 0..24 {
            let target = if count[c][h] > 0 {
                sum[c][h] / count[c][h] as f64
            } else if let Some(g) = global {
                g
            } else {
                continue;
            };
            let e = table.get(c, h);
            table.set(c, h, e + (target - e) * step);
        }
    }
}

pub fn write_agents_csv<W: Write>(agents: &[Agent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent_id", "home_node", "work_node", "other_node", "taste", "chain"])?;
    for a in agents {
        let chain: Vec<String> = a
            .chain
            .iter()
            .map(|(act, t)| {
                let name = match act {
                    Activity::Home => "home",
                    Activity::Work => "work",
                    Activity::Other => "other",
                };
                format!("{name}@{t:.2}")
            })
            .collect();
        w.write_record([
            a.id.to_string(),
            a.home.to_string(),
            a.work.to_string(),
            a.other.to_string(),
            format!("{:.6}", a.taste),
            chain.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trips_csv<W: Write>(trips: &[TripRequest], modes: Option<&[Mode]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "agent_id",
        "trip_index",
        "planned_min",
        "origin_node",
        "destination_node",
        "origin_cell",
        "direct_km",
        "direct_min",
        "mode",
    ])?;
    for (i, t) in trips.iter().enumerate() {
        let mode = match modes.map(|m| m[i]) {
            Some(Mode::Saev) => "saev",
            Some(Mode::Other) => "other",
            None => "",
        };
        w.write_record([
            t.agent.to_string(),
            t.trip_index.to_string(),
            format!("{:.2}", t.time_min),
            t.origin.to_string(),
            t.destination.to_string(),
            t.origin_cell.to_string(),
            format!("{:.3}", t.direct_km),
            format!("{:.3}", t.direct_min),
            mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> (HexGrid, Network, TravelTable) {
        let region = Rect::with_size(6.0, 6.0).unwrap();
        let grid = HexGrid::tessellate(region, 1.0).unwrap();
        let net = Network::build_synthetic(3, 60, region).unwrap();
        let table = TravelTable::build(&net).unwrap();
        (grid, net, table)
    }

    #[test]
    fn agents_are_deterministic_and_well_formed() {
        let (grid, net, _) = world();
        let a = generate_agents(11, 300, &grid, &net).unwrap();
        assert_eq!(a, generate_agents(11, 300, &grid, &net).unwrap());
        assert_ne!(a, generate_agents(12, 300, &grid, &net).unwrap());
        for ag in &a {
            assert!((2..=5).contains(&ag.trip_count()));
            assert!(ag.chain.windows(2).all(|w| w[0].1 < w[1].1));
            assert!(ag.home < net.len() && ag.work < net.len() && ag.other < net.len());
            assert!(ag.taste > 0.0);
            for k in 0..ag.trip_count() {
                let (o, d, _) = ag.trip(k);
                assert_ne!(o, d);
            }
        }
        assert!(generate_agents(1, 0, &grid, &net).is_err());
    }

    #[test]
    fn departures_peak_at_commute_hours() {
        let (grid, net, _) = world();
        let agents = generate_agents(5, 10_000, &grid, &net).unwrap();
        let (mut peak, mut all) = (0usize, 0usize);
        for a in &agents {
            for &(_, t) in &a.chain {
                let h = (t / 60.0).floor() as i64;
                all += 1;
                if (8..10).contains(&h) || (16..20).contains(&h) {
                    peak += 1;
                }
            }
        }
        let share = peak as f64 / all as f64;
        assert!(share >= 0.4, "peak share {share}");
    }

    fn request(direct_km: f64, direct_min: f64) -> TripRequest {
        TripRequest {
            agent: 0,
            trip_index: 0,
            time_min: 600.0,
            origin: 0,
            destination: 1,
            origin_cell: 0,
            direct_km,
            direct_min,
        }
    }

    #[test]
    fn logit_matches_closed_form() {
        let mut m = ChoiceModel::new(1);
        m.fare_per_km = 1.0;
        m.asc = 0.3;
        m.expected.set(0, 10, 10.0);
        // Fare 12 euro, wait 10, in-vehicle 30.
        let r = request(12.0, 30.0);
        let us: f64 = 0.3 - 0.25 * 12.0 - 0.10 * 10.0 - 0.05 * 30.0;
        let uo = -0.25 * 0.1 * 12.0 - 0.05 * 1.5 * 30.0;
        let expect = 1.0 / (1.0 + (uo - us).exp());
        assert!((m.p_saev(&r, 1.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn logit_limits_and_symmetry() {
        let mut m = ChoiceModel::new(1);
        assert!(m.p_saev_given(5.0, 10.0, 1.0, 1e9) < 1e-300);
        // Zero every term so both utilities vanish.
        m.asc = 0.0;
        m.fare_per_km = 0.0;
        m.other_cost_per_km = 0.0;
        m.beta_ivt = 0.0;
        assert_eq!(m.p_saev_given(5.0, 10.0, 1.0, 0.0), 0.5);
        let r = request(5.0, 10.0);
        assert_eq!(choose_mode(&r, 1.0, &m, 0.49), Mode::Saev);
        assert_eq!(choose_mode(&r, 1.0, &m, 0.5), Mode::Other);
    }

    #[test]
    fn choice_validation() {
        let mut m = ChoiceModel::new(1);
        m.validate().unwrap();
        m.beta_wait = 0.1;
        assert!(m.validate().is_err());
    }

    #[test]
    fn msa_examples() {
        let mut t = WaitTable::zeros(2);
        let obs = |w| WaitObservation {
            cell: 0,
            hour: 8,
            wait_min: w,
        };
        update_expectations(&mut t, &[obs(10.0)], 0);
        assert_eq!(t.get(0, 8), 10.0);
        // Unobserved cells move toward the day's global mean.
        assert_eq!(t.get(1, 3), 10.0);

        let mut t = WaitTable::zeros(1);
        for d in 0..200 {
            update_expectations(&mut t, &[obs(8.0)], d);
        }
        assert!((t.get(0, 8) - 8.0).abs() < 1e-12);

        let mut t = WaitTable::zeros(1);
        for d in 0..20 {
            let w = if d % 2 == 0 { 0.0 } else { 10.0 };
            update_expectations(&mut t, &[obs(w)], d);
        }
        assert!((t.get(0, 8) - 5.0).abs() <= 0.5);
    }

    #[test]
    fn trips_follow_chains() {
        let (grid, net, table) = world();
        let agents = generate_agents(2, 50, &grid, &net).unwrap();
        let trips = trip_requests(&agents, &grid, &net, &table);
        assert_eq!(trips.len(), agents.iter().map(Agent::trip_count).sum::<usize>());
        for t in &trips {
            assert!(t.direct_km > 0.0 && t.direct_min > 0.0);
            let a = &agents[t.agent];
            assert_eq!(t.origin, a.trip(t.trip_index).0);
        }
        let last = trips.iter().filter(|t| t.trip_index + 1 == agents[t.agent].trip_count());
        for t in last {
            assert_eq!(t.destination, agents[t.agent].home);
        }
    }

    #[test]
    fn csv_exports() {
        let (grid, net, table) = world();
        let agents = generate_agents(2, 3, &grid, &net).unwrap();
        let mut buf = Vec::new();
        write_agents_csv(&agents, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("agent_id,home_node"));
        let trips = trip_requests(&agents, &grid, &net, &table);
        let mut buf = Vec::new();
        write_trips_csv(&trips, None, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), trips.len() + 1);
    }
}
