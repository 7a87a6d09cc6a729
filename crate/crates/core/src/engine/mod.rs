//! Discrete-event day simulation and the multi-day iteration loop.

mod log;

pub use log::{
    Audit, BatteryRecord, DayLog, LegPurpose, LegRecord, RequestRecord, StationRecord, VehicleRecord,
    VisitRecord,
};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::demand::{choose_mode, update_expectations, Agent, ChoiceModel, Mode, TripRequest};
use crate::dispatch::{
    direct_ride_ticks, needs_charge, ChargerView, Choice, ChoiceKind, DispatchParams, EnergyRule,
    FleetEntry, Planner, Rider, Stop, StopKind, VehicleView,
};
use crate::energy::{
    charge_duration, consume, Arrival, Battery, ChargingStation, StationKind, StationSpec,
    StockPolicy, SwapStart, SwapStation,
};
use crate::error::{Error, Result};
use crate::hexgrid::HexGrid;
use crate::metrics::{self, MetricsReport};
use crate::network::{Network, NodeId, TravelTable};
use crate::time::{from_minutes, from_minutes_ceil, hour_of, to_minutes, Tick, DAY_TICKS};
use crate::VehicleId;

/// A roster entry placed on the network.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSite {
    pub spec: StationSpec,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub fleet_size: usize,
    pub battery_kwh: f64,
    /// Charge after a dropoff once SoC falls strictly below this fraction.
    pub soc_trigger: f64,
    pub dispatch: DispatchParams,
    pub energy: EnergyRule,
    pub swap_ticks: Tick,
    pub stock: StockPolicy,
    /// Time guard; the run stops with a diagnostic past this point.
    pub max_time: Tick,
    pub other_time_factor: f64,
}

/// Static inputs shared by every day.
#[derive(Debug, Clone, Copy)]
pub struct World<'a> {
    pub network: &'a Network,
    pub table: &'a TravelTable,
    pub grid: &'a HexGrid,
    pub stations: &'a [StationSite],
    pub depots: &'a [NodeId],
}

/// The population's trips for one day and the mode picked for each.
#[derive(Debug, Clone, Copy)]
pub struct DayDemand<'a> {
    pub agents: &'a [Agent],
    /// Agent-major, chain order.
    pub trips: &'a [TripRequest],
    pub modes: &'a [Mode],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Release(usize),
    LegEnd(VehicleId),
    ChargeDone(VehicleId),
    SwapDone(VehicleId),
    BatteryReady(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleMode {
    Idle,
    PickupDrive,
    OccupiedDrive,
    GotoCharge,
    Queued,
    Plugged,
    Swapping,
    ReturningDepot,
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: VehicleId,
    depot: NodeId,
    node: NodeId,
    battery: Battery,
    mode: VehicleMode,
    leg: Option<(LegPurpose, NodeId, Tick)>,
    stops: Vec<Stop>,
    riders: Vec<Rider>,
    onboard: u32,
    odometer_m: u64,
    empty_m: u64,
    initial_soc: f64,
    consumed: f64,
    charged: f64,
    swap_delta: f64,
    swaps: u32,
    site: Option<usize>,
    visit: Option<VisitRecord>,
}

enum Site {
    Charge(ChargingStation),
    Swap(SwapStation),
}

struct Sim<'a> {
    world: World<'a>,
    params: &'a SimParams,
    demand: DayDemand<'a>,
    planner: Planner<'a>,
    first_trip: Vec<usize>,
    now: Tick,
    seq: u64,
    heap: BinaryHeap<Reverse<(Tick, u64, Event)>>,
    vehicles: Vec<Vehicle>,
    sites: Vec<Site>,
    requests: Vec<RequestRecord>,
    ride_start_m: Vec<u64>,
    waiting: VecDeque<usize>,
    outstanding: usize,
    end_phase: bool,
    legs: Vec<LegRecord>,
    visits: Vec<VisitRecord>,
    batteries: Vec<BatteryRecord>,
    open_battery: HashMap<(usize, u32), usize>,
}

/// Simulates one day until every chain is complete and the fleet is home.
pub fn run_day(world: World<'_>, params: &SimParams, demand: DayDemand<'_>) -> Result<DayLog> {
    if demand.trips.len() != demand.modes.len() {
        return Err(Error::InvalidInput("one mode per trip is required".into()));
    }
    if world.depots.is_empty() && params.fleet_size > 0 {
        return Err(Error::InvalidInput("the fleet needs at least one depot".into()));
    }
    if world.stations.is_empty() && !params.energy.unlimited {
        return Err(Error::InvalidInput("limited-range fleets need at least one station".into()));
    }
    let station_nodes: Vec<NodeId> = world.stations.iter().map(|s| s.node).collect();
    let planner = Planner::new(
        world.table,
        world.network.congestion(),
        &params.dispatch,
        &params.energy,
        &station_nodes,
    );
    let mut first_trip = Vec::with_capacity(demand.agents.len() + 1);
    let mut k = 0;
    for a in demand.agents {
        first_trip.push(k);
        k += a.trip_count();
    }
    first_trip.push(k);
    if k != demand.trips.len() {
        return Err(Error::InvalidInput("trips do not match the agents' chains".into()));
    }

    let battery = Battery::full(params.battery_kwh)?;
    let vehicles = (0..params.fleet_size)
        .map(|id| {
            let depot = world.depots[id % world.depots.len()];
            Vehicle {
                id,
                depot,
                node: depot,
                battery,
                mode: VehicleMode::Idle,
                leg: None,
                stops: Vec::new(),
                riders: Vec::new(),
                onboard: 0,
                odometer_m: 0,
                empty_m: 0,
                initial_soc: battery.soc_kwh(),
                consumed: 0.0,
                charged: 0.0,
                swap_delta: 0.0,
                swaps: 0,
                site: None,
                visit: None,
            }
        })
        .collect();

    let mut batteries = Vec::new();
    let mut open_battery = HashMap::new();
    let sites = world
        .stations
        .iter()
        .enumerate()
        .map(|(i, s)| match s.spec.kind {
            StationKind::Charge => {
                Site::Charge(ChargingStation::new(i, s.node, s.spec.outlets_or_bays, s.spec.power_kw))
            }
            StationKind::Swap => {
                let st = SwapStation::new(
                    i,
                    s.node,
                    s.spec.outlets_or_bays,
                    params.swap_ticks,
                    params.stock,
                    params.battery_kwh,
                );
                for b in st.inventory() {
                    open_battery.insert((i, b.battery_id), batteries.len());
                    batteries.push(BatteryRecord {
                        station: i,
                        battery: b.battery_id,
                        capacity_kwh: b.capacity_kwh,
                        detached: 0,
                        ready: 0,
                        reissued: None,
                    });
                }
                Site::Swap(st)
            }
        })
        .collect();

    let outstanding = demand.modes.iter().filter(|m| **m == Mode::Saev).count();
    let sim = Sim {
        world,
        params,
        demand,
        planner,
        first_trip,
        now: 0,
        seq: 0,
        heap: BinaryHeap::new(),
        vehicles,
        sites,
        requests: Vec::new(),
        ride_start_m: Vec::new(),
        waiting: VecDeque::new(),
        outstanding,
        end_phase: false,
        legs: Vec::new(),
        visits: Vec::new(),
        batteries,
        open_battery,
    };
    sim.run()
}

impl<'a> Sim<'a> {
    fn push(&mut self, at: Tick, ev: Event) {
        self.heap.push(Reverse((at, self.seq, ev)));
        self.seq += 1;
    }

    fn run(mut self) -> Result<DayLog> {
        for agent in 0..self.demand.agents.len() {
            self.advance_chain(agent, 0, Tick::MIN);
        }
        self.check_end_phase()?;
        let mut diagnostic = None;
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            if t < self.now {
                return Err(Error::Invariant(format!("event at {t} after clock {}", self.now)));
            }
            if t > self.params.max_time {
                diagnostic = Some(format!(
                    "stopped at the time guard ({} min) with {} requests waiting and {} not yet released",
                    to_minutes(self.params.max_time),
                    self.waiting.len(),
                    self.outstanding
                ));
                break;
            }
            self.now = t;
            match ev {
                Event::Release(trip) => self.release(trip)?,
                Event::LegEnd(v) => self.leg_end(v)?,
                Event::ChargeDone(v) => self.charge_done(v)?,
                Event::SwapDone(v) => self.swap_done(v)?,
                Event::BatteryReady(s) => self.start_swaps(s)?,
            }
            self.check_end_phase()?;
        }
        if diagnostic.is_none() && (!self.waiting.is_empty() || self.outstanding > 0) {
            diagnostic = Some(format!(
                "ran out of events with {} requests waiting",
                self.waiting.len()
            ));
        }
        self.finish(diagnostic)
    }

    fn finish(self, diagnostic: Option<String>) -> Result<DayLog> {
        let vehicles: Vec<VehicleRecord> = self
            .vehicles
            .iter()
            .map(|v| VehicleRecord {
                vehicle: v.id,
                depot: v.depot,
                final_node: v.node,
                capacity_kwh: v.battery.capacity_kwh(),
                initial_soc: v.initial_soc,
                final_soc: v.battery.soc_kwh(),
                consumed_kwh: v.consumed,
                charged_kwh: v.charged,
                swap_delta_kwh: v.swap_delta,
                odometer_m: v.odometer_m,
                empty_m: v.empty_m,
                swaps: v.swaps,
            })
            .collect();
        for v in &vehicles {
            let lhs = v.initial_soc + v.charged_kwh + v.swap_delta_kwh - v.consumed_kwh;
            if (lhs - v.final_soc).abs() > 1e-9 * v.capacity_kwh {
                return Err(Error::Invariant(format!("vehicle {} energy balance broken", v.vehicle)));
            }
        }
        let stations = self
            .world
            .stations
            .iter()
            .enumerate()
            .map(|(i, s)| StationRecord {
                station: i,
                kind: s.spec.kind,
                cell: s.spec.cell_id,
                node: s.node,
                capacity: s.spec.outlets_or_bays,
                power_kw: s.spec.power_kw,
            })
            .collect();
        Ok(DayLog {
            fleet_size: self.params.fleet_size,
            seats: self.params.dispatch.seats,
            trips_total: self.demand.trips.len(),
            saev_chosen: self.demand.modes.iter().filter(|m| **m == Mode::Saev).count(),
            requests: self.requests,
            legs: self.legs,
            visits: self.visits,
            batteries: self.batteries,
            vehicles,
            stations,
            end_time: self.now,
            diagnostic,
        })
    }

    /// Releases the next SAEV trip of `agent`, completing trips by the
    /// other mode on the way.
    fn advance_chain(&mut self, agent: usize, mut k: usize, mut prev_done: Tick) {
        let (start, end) = (self.first_trip[agent], self.first_trip[agent + 1]);
        while start + k < end {
            let idx = start + k;
            let trip = &self.demand.trips[idx];
            let release = from_minutes(trip.time_min).max(prev_done);
            if self.demand.modes[idx] == Mode::Saev {
                self.push(release, Event::Release(idx));
                return;
            }
            prev_done = release + from_minutes(self.params.other_time_factor * trip.direct_min);
            k += 1;
        }
    }

    fn check_end_phase(&mut self) -> Result<()> {
        if self.end_phase || self.outstanding > 0 || !self.waiting.is_empty() {
            return Ok(());
        }
        self.end_phase = true;
        for v in 0..self.vehicles.len() {
            if self.vehicles[v].mode == VehicleMode::Idle {
                self.go_home(v)?;
            }
        }
        Ok(())
    }

    fn fleet_view(&self) -> Vec<FleetEntry<'_>> {
        self.vehicles
            .iter()
            .map(|v| {
                let view = match v.mode {
                    VehicleMode::Idle if !self.end_phase => VehicleView::Idle { node: v.node },
                    VehicleMode::PickupDrive | VehicleMode::OccupiedDrive => VehicleView::EnRoute {
                        arrive: v.leg.map_or(self.now, |l| l.2),
                        onboard: v.onboard,
                        stops: &v.stops,
                        riders: &v.riders,
                    },
                    _ => VehicleView::Unavailable,
                };
                FleetEntry {
                    id: v.id,
                    soc_kwh: v.battery.soc_kwh(),
                    view,
                }
            })
            .collect()
    }

    fn rider_for(&self, id: usize) -> Rider {
        let r = &self.requests[id];
        let trip = &self.demand.trips[self.first_trip[r.agent] + r.trip_index];
        Rider::new(id, r.origin, r.destination, r.ff_direct_min, trip.direct_min)
    }

    fn release(&mut self, trip_idx: usize) -> Result<()> {
        self.outstanding -= 1;
        let trip = &self.demand.trips[trip_idx];
        let id = self.requests.len();
        self.requests.push(RequestRecord {
            request: id,
            agent: trip.agent,
            trip_index: trip.trip_index,
            origin: trip.origin,
            destination: trip.destination,
            origin_cell: trip.origin_cell,
            release: self.now,
            direct_m: self.world.table.shortest_m(trip.origin, trip.destination),
            ff_direct_min: self.world.table.free_min(trip.origin, trip.destination),
            vehicle: None,
            assigned: None,
            pickup: None,
            dropoff: None,
            ride_m: 0,
            direct_ride: 0,
            shared: false,
        });
        self.ride_start_m.push(0);
        let rider = self.rider_for(id);
        let outcome = self.planner.assign(&self.fleet_view(), &rider, self.now);
        match outcome.choice {
            Some(c) => self.apply(id, rider, c)?,
            None => self.waiting.push_back(id),
        }
        if let Some(v) = outcome.nearest_idle_short {
            if !self.params.energy.unlimited && self.vehicles[v].mode == VehicleMode::Idle {
                self.charge_if_useful(v)?;
            }
        }
        Ok(())
    }

    fn apply(&mut self, id: usize, mut rider: Rider, c: Choice) -> Result<()> {
        rider.promised_pickup = c.pickup_tick;
        self.requests[id].vehicle = Some(c.vehicle);
        self.requests[id].assigned = Some(self.now);
        let pickup = Stop {
            kind: StopKind::Pickup,
            request: id,
            node: rider.origin,
        };
        let dropoff = Stop {
            kind: StopKind::Dropoff,
            request: id,
            node: rider.destination,
        };
        let v = &mut self.vehicles[c.vehicle];
        v.riders.push(rider);
        match c.kind {
            ChoiceKind::Idle => {
                v.stops = vec![pickup, dropoff];
                self.start_next(c.vehicle)
            }
            ChoiceKind::Shared {
                pickup_at,
                dropoff_at,
            } => {
                v.stops.insert(pickup_at, pickup);
                v.stops.insert(dropoff_at, dropoff);
                Ok(())
            }
        }
    }

    /// Serves every stop at the current node, then drives to the next one.
    fn start_next(&mut self, vid: VehicleId) -> Result<()> {
        loop {
            let v = &self.vehicles[vid];
            let Some(&stop) = v.stops.first() else {
                return self.free(vid);
            };
            if stop.node != v.node {
                let purpose = if v.onboard > 0 {
                    LegPurpose::Occupied
                } else {
                    LegPurpose::Pickup
                };
                return self.depart(vid, stop.node, purpose);
            }
            self.vehicles[vid].stops.remove(0);
            self.serve_stop(vid, stop)?;
        }
    }

    fn serve_stop(&mut self, vid: VehicleId, stop: Stop) -> Result<()> {
        let now = self.now;
        let v = &mut self.vehicles[vid];
        let pos = v
            .riders
            .iter()
            .position(|r| r.request == stop.request)
            .ok_or_else(|| Error::Invariant(format!("vehicle {vid} has no rider {}", stop.request)))?;
        match stop.kind {
            StopKind::Pickup => {
                v.riders[pos].picked_up = Some(now);
                v.onboard += 1;
                if v.onboard > self.params.dispatch.seats {
                    return Err(Error::Invariant(format!("vehicle {vid} over seat capacity")));
                }
                self.requests[stop.request].pickup = Some(now);
                self.ride_start_m[stop.request] = v.odometer_m;
            }
            StopKind::Dropoff => {
                let rider = v.riders.remove(pos);
                v.onboard = v
                    .onboard
                    .checked_sub(1)
                    .ok_or_else(|| Error::Invariant(format!("vehicle {vid} dropped a ghost")))?;
                let rec = &mut self.requests[stop.request];
                rec.dropoff = Some(now);
                rec.ride_m = v.odometer_m - self.ride_start_m[stop.request];
                rec.direct_ride = direct_ride_ticks(rider.ff_direct_min, rider.max_mult);
                let (agent, k) = (rec.agent, rec.trip_index);
                self.advance_chain(agent, k + 1, now);
            }
        }
        Ok(())
    }

    fn depart(&mut self, vid: VehicleId, to: NodeId, purpose: LegPurpose) -> Result<()> {
        let now = self.now;
        let hour = hour_of(now);
        let from = self.vehicles[vid].node;
        let meters = self.world.table.route_m(from, to);
        let ticks = self.planner.leg_ticks(from, to, now);
        let mult = self.world.network.congestion().multiplier(hour);
        let energy_model = &self.params.energy;
        let v = &mut self.vehicles[vid];
        let mut energy = 0.0;
        if !energy_model.unlimited {
            let before = v.battery.soc_kwh();
            v.battery = consume(&v.battery, meters as f64 / 1000.0, &energy_model.consumption, hour)
                .map_err(|e| Error::Invariant(format!("vehicle {vid} at t={now}: {e}")))?;
            energy = before - v.battery.soc_kwh();
        }
        v.consumed += energy;
        v.odometer_m += meters;
        if v.onboard == 0 {
            v.empty_m += meters;
        }
        let shared = v.onboard >= 2;
        for r in v.riders.iter_mut().filter(|r| r.picked_up.is_some()) {
            r.max_mult = r.max_mult.max(mult);
            if shared {
                self.requests[r.request].shared = true;
            }
        }
        v.mode = match purpose {
            LegPurpose::Pickup => VehicleMode::PickupDrive,
            LegPurpose::Occupied => VehicleMode::OccupiedDrive,
            LegPurpose::Charge => VehicleMode::GotoCharge,
            LegPurpose::Depot => VehicleMode::ReturningDepot,
        };
        v.leg = Some((purpose, to, now + ticks));
        self.legs.push(LegRecord {
            vehicle: vid,
            purpose,
            from,
            to,
            depart: now,
            arrive: now + ticks,
            meters,
            onboard: v.onboard,
            energy_kwh: energy,
        });
        self.push(now + ticks, Event::LegEnd(vid));
        Ok(())
    }

    fn leg_end(&mut self, vid: VehicleId) -> Result<()> {
        let (purpose, to, _) = self.vehicles[vid]
            .leg
            .take()
            .ok_or_else(|| Error::Invariant(format!("vehicle {vid} arrived without a leg")))?;
        self.vehicles[vid].node = to;
        match purpose {
            LegPurpose::Pickup | LegPurpose::Occupied => self.start_next(vid),
            LegPurpose::Charge => self.arrive_site(vid),
            LegPurpose::Depot => {
                self.vehicles[vid].mode = VehicleMode::Idle;
                Ok(())
            }
        }
    }

    /// The vehicle has no stops left.
    fn free(&mut self, vid: VehicleId) -> Result<()> {
        self.vehicles[vid].mode = VehicleMode::Idle;
        if self.end_phase {
            return self.go_home(vid);
        }
        if !self.params.energy.unlimited && needs_charge(&self.vehicles[vid].battery, self.params.soc_trigger) {
            return self.send_to_charge(vid);
        }
        self.serve_waiting(vid)
    }

    /// Gives an idle vehicle the oldest waiting request it can serve.
    fn serve_waiting(&mut self, vid: VehicleId) -> Result<()> {
        let mut short = false;
        for pos in 0..self.waiting.len() {
            let id = self.waiting[pos];
            let rider = self.rider_for(id);
            let v = &self.vehicles[vid];
            let entry = [FleetEntry {
                id: vid,
                soc_kwh: v.battery.soc_kwh(),
                view: VehicleView::Idle { node: v.node },
            }];
            let out = self.planner.assign(&entry, &rider, self.now);
            if let Some(c) = out.choice {
                self.waiting.remove(pos);
                return self.apply(id, rider, c);
            }
            short |= out.nearest_idle_short.is_some();
        }
        if short && !self.params.energy.unlimited {
            self.charge_if_useful(vid)?;
        }
        Ok(())
    }

    fn charger_views(&self) -> Vec<ChargerView> {
        self.sites
            .iter()
            .map(|s| match s {
                Site::Charge(c) => ChargerView {
                    node: c.node,
                    available: c.has_free_outlet(),
                },
                Site::Swap(w) => ChargerView {
                    node: w.node,
                    available: w.busy_bays() < w.bays
                        && w.queue_len() == 0
                        && match self.params.stock {
                            StockPolicy::OnDemand => true,
                            StockPolicy::Fixed(_) => {
                                w.next_ready(self.params.battery_kwh).is_some_and(|t| t <= self.now)
                            }
                        },
                },
            })
            .collect()
    }

    fn site_target(&self, site: usize) -> f64 {
        match &self.sites[site] {
            Site::Charge(c) => c.target_fraction(),
            Site::Swap(_) => 1.0,
        }
    }

    /// Sends an idle vehicle to charge if the chosen station would add energy.
    fn charge_if_useful(&mut self, vid: VehicleId) -> Result<()> {
        let v = &self.vehicles[vid];
        let Some(choice) = self
            .planner
            .choose_charger(v.node, v.battery.soc_kwh(), &self.charger_views(), self.now)
        else {
            return Ok(());
        };
        if v.battery.fraction() < self.site_target(choice.station) {
            self.go_to_site(vid, choice.station)?;
        }
        Ok(())
    }

    fn send_to_charge(&mut self, vid: VehicleId) -> Result<()> {
        let v = &self.vehicles[vid];
        let choice = self
            .planner
            .choose_charger(v.node, v.battery.soc_kwh(), &self.charger_views(), self.now)
            .ok_or_else(|| {
                Error::Invariant(format!(
                    "vehicle {vid} at node {} cannot reach any station with {:.3} kWh",
                    v.node,
                    v.battery.soc_kwh()
                ))
            })?;
        self.go_to_site(vid, choice.station)
    }

    fn go_to_site(&mut self, vid: VehicleId, site: usize) -> Result<()> {
        let node = self.world.stations[site].node;
        self.vehicles[vid].site = Some(site);
        if self.vehicles[vid].node == node {
            self.vehicles[vid].mode = VehicleMode::GotoCharge;
            self.arrive_site(vid)
        } else {
            self.depart(vid, node, LegPurpose::Charge)
        }
    }

    fn arrive_site(&mut self, vid: VehicleId) -> Result<()> {
        let now = self.now;
        let site = self.vehicles[vid]
            .site
            .ok_or_else(|| Error::Invariant(format!("vehicle {vid} at a station it did not pick")))?;
        let v = &mut self.vehicles[vid];
        let kind = self.world.stations[site].spec.kind;
        v.visit = Some(VisitRecord {
            vehicle: vid,
            station: site,
            kind,
            arrive: now,
            start: now,
            end: now,
            soc_in: v.battery.soc_kwh(),
            soc_out: v.battery.soc_kwh(),
            energy_kwh: 0.0,
        });
        v.mode = VehicleMode::Queued;
        let battery = v.battery;
        match &mut self.sites[site] {
            Site::Charge(c) => {
                if c.arrive(vid) == Arrival::Plugged {
                    self.start_charge(vid, site)?;
                }
                Ok(())
            }
            Site::Swap(w) => {
                w.arrive(vid, battery);
                self.start_swaps(site)
            }
        }
    }

    fn start_charge(&mut self, vid: VehicleId, site: usize) -> Result<()> {
        let Site::Charge(c) = &self.sites[site] else {
            return Err(Error::Invariant("charging at a swap station".into()));
        };
        if c.plugged().len() > c.outlets as usize {
            return Err(Error::Invariant(format!("station {site} over outlet capacity")));
        }
        let (target, power) = (c.target_fraction(), c.power_kw);
        let v = &mut self.vehicles[vid];
        let minutes = charge_duration(&v.battery, target, power);
        v.mode = VehicleMode::Plugged;
        if let Some(visit) = v.visit.as_mut() {
            visit.start = self.now;
        }
        let at = self.now + from_minutes_ceil(minutes);
        self.push(at, Event::ChargeDone(vid));
        Ok(())
    }

    fn charge_done(&mut self, vid: VehicleId) -> Result<()> {
        let site = self.vehicles[vid]
            .site
            .ok_or_else(|| Error::Invariant(format!("vehicle {vid} charged nowhere")))?;
        let target = self.site_target(site);
        let v = &mut self.vehicles[vid];
        let added = v.battery.charge_to(target);
        v.charged += added;
        let mut visit = v.visit.take().expect("visit open while plugged");
        visit.end = self.now;
        visit.soc_out = v.battery.soc_kwh();
        visit.energy_kwh = added;
        self.visits.push(visit);
        let Site::Charge(c) = &mut self.sites[site] else {
            return Err(Error::Invariant("charge finished at a swap station".into()));
        };
        if let Some(next) = c.depart(vid)? {
            self.start_charge(next, site)?;
        }
        self.after_service(vid)
    }

    fn start_swaps(&mut self, site: usize) -> Result<()> {
        let Site::Swap(w) = &mut self.sites[site] else {
            return Ok(());
        };
        let starts: Vec<SwapStart> = w.start_ready(self.now);
        let fixed = matches!(self.params.stock, StockPolicy::Fixed(_));
        for s in starts {
            if let Some(i) = self.open_battery.remove(&(site, s.issued)) {
                self.batteries[i].reissued = Some(self.now);
            }
            self.open_battery.insert((site, s.detached.battery_id), self.batteries.len());
            self.batteries.push(BatteryRecord {
                station: site,
                battery: s.detached.battery_id,
                capacity_kwh: s.detached.capacity_kwh,
                detached: self.now,
                ready: s.detached.ready_at,
                reissued: None,
            });
            if fixed {
                self.push(s.detached.ready_at, Event::BatteryReady(site));
            }
            let v = &mut self.vehicles[s.vehicle];
            v.mode = VehicleMode::Swapping;
            if let Some(visit) = v.visit.as_mut() {
                visit.start = self.now;
            }
            self.push(s.done_at, Event::SwapDone(s.vehicle));
        }
        Ok(())
    }

    fn swap_done(&mut self, vid: VehicleId) -> Result<()> {
        let site = self.vehicles[vid]
            .site
            .ok_or_else(|| Error::Invariant(format!("vehicle {vid} swapped nowhere")))?;
        if let Site::Swap(w) = &mut self.sites[site] {
            w.finish()?;
        }
        let v = &mut self.vehicles[vid];
        let delta = v.battery.charge_to(1.0);
        v.swap_delta += delta;
        v.swaps += 1;
        let mut visit = v.visit.take().expect("visit open while swapping");
        visit.end = self.now;
        visit.soc_out = v.battery.soc_kwh();
        visit.energy_kwh = delta;
        self.visits.push(visit);
        self.start_swaps(site)?;
        self.after_service(vid)
    }

    fn after_service(&mut self, vid: VehicleId) -> Result<()> {
        let v = &mut self.vehicles[vid];
        v.site = None;
        v.mode = VehicleMode::Idle;
        if self.end_phase {
            self.go_home(vid)
        } else {
            self.serve_waiting(vid)
        }
    }

    /// Drives back to the depot, charging first if the battery is low or
    /// would not make it.
    fn go_home(&mut self, vid: VehicleId) -> Result<()> {
        let v = &self.vehicles[vid];
        if v.node == v.depot {
            self.vehicles[vid].mode = VehicleMode::Idle;
            return Ok(());
        }
        if !self.params.energy.unlimited {
            let km = self.world.table.route_m(v.node, v.depot) as f64 / 1000.0;
            let need = self.params.energy.consumption.worst_case_kwh(km) + self.params.energy.reserve_kwh;
            if needs_charge(&v.battery, self.params.soc_trigger) || v.battery.soc_kwh() < need {
                return self.send_to_charge(vid);
            }
        }
        let depot = v.depot;
        self.depart(vid, depot, LegPurpose::Depot)
    }
}

/// One day of the iteration loop.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTrace {
    pub day: usize,
    pub saev_trips: usize,
    pub share: f64,
    pub served: usize,
    pub mean_wait_min: f64,
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    pub log: DayLog,
    pub report: MetricsReport,
    pub trace: Vec<DayTrace>,
}

/// Repeats choose modes, simulate, update expectations for `days` days.
pub fn run_iterations(
    world: World<'_>,
    params: &SimParams,
    agents: &[Agent],
    trips: &[TripRequest],
    model: &mut ChoiceModel,
    uniforms: &[f64],
    days: usize,
) -> Result<IterationResult> {
    if days == 0 {
        return Err(Error::InvalidInput("at least one day must be simulated".into()));
    }
    if uniforms.len() < trips.len() {
        return Err(Error::InvalidInput("one uniform draw per trip is required".into()));
    }
    let mut trace = Vec::with_capacity(days);
    let mut last = None;
    for day in 0..days {
        let modes: Vec<Mode> = trips
            .iter()
            .zip(uniforms)
            .map(|(t, &u)| choose_mode(t, agents[t.agent].taste, model, u))
            .collect();
        let log = run_day(world, params, DayDemand { agents, trips, modes: &modes })?;
        let obs = log.wait_observations();
        let mean_wait = if obs.is_empty() {
            0.0
        } else {
            obs.iter().map(|o| o.wait_min).sum::<f64>() / obs.len() as f64
        };
        trace.push(DayTrace {
            day,
            saev_trips: log.saev_trips(),
            share: if trips.is_empty() {
                0.0
            } else {
                log.saev_trips() as f64 / trips.len() as f64
            },
            served: log.requests.iter().filter(|r| r.served()).count(),
            mean_wait_min: mean_wait,
        });
        update_expectations(&mut model.expected, &obs, day);
        last = Some(log);
    }
    let log = last.expect("at least one day");
    let report = metrics::compute(&log);
    Ok(IterationResult { log, report, trace })
}

/// Time window used by the per-day metrics.
pub const WINDOW: (Tick, Tick) = (0, DAY_TICKS);
