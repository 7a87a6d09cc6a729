//! Day log records, the CSV bundle and replay audits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::demand::WaitObservation;
use crate::energy::{required_extra_batteries, StationKind, StockInterval};
use crate::error::Result;
use crate::hexgrid::CellId;
use crate::network::NodeId;
use crate::time::{hour_of, to_minutes, Tick};
use crate::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LegPurpose {
    Pickup,
    Occupied,
    Charge,
    Depot,
}

impl LegPurpose {
    pub fn name(self) -> &'static str {
        match self {
            LegPurpose::Pickup => "pickup",
            LegPurpose::Occupied => "occupied",
            LegPurpose::Charge => "charge",
            LegPurpose::Depot => "depot",
        }
    }

    /// Driving that counts as the vehicle being in use for customers.
    pub fn in_use(self) -> bool {
        matches!(self, LegPurpose::Pickup | LegPurpose::Occupied)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub request: usize,
    pub agent: usize,
    pub trip_index: usize,
    pub origin: NodeId,
    pub destination: NodeId,
    pub origin_cell: CellId,
    pub release: Tick,
    /// Shortest-path distance, metres.
    pub direct_m: u64,
    pub ff_direct_min: f64,
    pub vehicle: Option<VehicleId>,
    pub assigned: Option<Tick>,
    pub pickup: Option<Tick>,
    pub dropoff: Option<Tick>,
    /// Distance driven while this passenger was onboard, metres.
    pub ride_m: u64,
    /// Direct duration under the fastest hour the ride drove in.
    pub direct_ride: Tick,
    pub shared: bool,
}

impl RequestRecord {
    pub fn served(&self) -> bool {
        self.dropoff.is_some()
    }

    pub fn wait(&self) -> Option<Tick> {
        Some(self.pickup? - self.release)
    }

    pub fn in_vehicle(&self) -> Option<Tick> {
        Some(self.dropoff? - self.pickup?)
    }

    pub fn detour(&self) -> Option<Tick> {
        Some(self.in_vehicle()? - self.direct_ride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegRecord {
    pub vehicle: VehicleId,
    pub purpose: LegPurpose,
    pub from: NodeId,
    pub to: NodeId,
    pub depart: Tick,
    pub arrive: Tick,
    pub meters: u64,
    pub onboard: u32,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub vehicle: VehicleId,
    pub station: usize,
    pub kind: StationKind,
    pub arrive: Tick,
    /// Plug-in or swap start.
    pub start: Tick,
    pub end: Tick,
    pub soc_in: f64,
    pub soc_out: f64,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryRecord {
    pub station: usize,
    pub battery: u32,
    pub capacity_kwh: f64,
    pub detached: Tick,
    pub ready: Tick,
    pub reissued: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub vehicle: VehicleId,
    pub depot: NodeId,
    pub final_node: NodeId,
    pub capacity_kwh: f64,
    pub initial_soc: f64,
    pub final_soc: f64,
    pub consumed_kwh: f64,
    pub charged_kwh: f64,
    pub swap_delta_kwh: f64,
    pub odometer_m: u64,
    pub empty_m: u64,
    pub swaps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord {
    pub station: usize,
    pub kind: StationKind,
    pub cell: CellId,
    pub node: NodeId,
    pub capacity: u32,
    pub power_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayLog {
    pub fleet_size: usize,
    pub seats: u32,
    /// All trips planned by the population, any mode.
    pub trips_total: usize,
    /// Trips for which SAEV was chosen.
    pub saev_chosen: usize,
    pub requests: Vec<RequestRecord>,
    pub legs: Vec<LegRecord>,
    pub visits: Vec<VisitRecord>,
    pub batteries: Vec<BatteryRecord>,
    pub vehicles: Vec<VehicleRecord>,
    pub stations: Vec<StationRecord>,
    pub end_time: Tick,
    /// Set when the run stopped at the time guard.
    pub diagnostic: Option<String>,
}

impl DayLog {
    pub fn saev_trips(&self) -> usize {
        self.saev_chosen
    }

    pub fn wait_observations(&self) -> Vec<WaitObservation> {
        self.requests
            .iter()
            .filter_map(|r| {
                Some(WaitObservation {
                    cell: r.origin_cell,
                    hour: hour_of(r.release),
                    wait_min: to_minutes(r.wait()?),
                })
            })
            .collect()
    }

    pub fn stock_intervals(&self) -> Vec<StockInterval> {
        self.batteries
            .iter()
            .map(|b| StockInterval {
                station: b.station,
                capacity_kwh: b.capacity_kwh,
                from: b.detached,
                until: b.reissued,
            })
            .collect()
    }

    pub fn extra_batteries(&self) -> u64 {
        required_extra_batteries(&self.stock_intervals())
    }

    /// Writes one CSV per record family into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        self.write_requests(open("requests.csv")?)?;
        self.write_legs(open("legs.csv")?)?;
        self.write_visits(open("visits.csv")?)?;
        self.write_batteries(open("batteries.csv")?)?;
        self.write_vehicles(open("vehicles.csv")?)?;
        self.write_stations(open("stations.csv")?)?;
        let mut meta = open("run.csv")?;
        writeln!(meta, "key,value")?;
        writeln!(meta, "fleet_size,{}", self.fleet_size)?;
        writeln!(meta, "seats,{}", self.seats)?;
        writeln!(meta, "trips_total,{}", self.trips_total)?;
        writeln!(meta, "saev_trips,{}", self.saev_trips())?;
        writeln!(meta, "end_time_t,{}", self.end_time)?;
        writeln!(meta, "diagnostic,{}", self.diagnostic.as_deref().unwrap_or(""))?;
        meta.flush()?;
        Ok(())
    }

    pub fn write_requests<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "request_id",
            "agent_id",
            "trip_index",
            "origin_node",
            "destination_node",
            "origin_cell",
            "release_t",
            "direct_m",
            "ff_direct_min",
            "vehicle_id",
            "assigned_t",
            "pickup_t",
            "dropoff_t",
            "ride_m",
            "direct_ride_t",
            "shared",
        ])?;
        let opt = |x: Option<i64>| x.map_or(String::new(), |v| v.to_string());
        for r in &self.requests {
            w.write_record([
                r.request.to_string(),
                r.agent.to_string(),
                r.trip_index.to_string(),
                r.origin.to_string(),
                r.destination.to_string(),
                r.origin_cell.to_string(),
                r.release.to_string(),
                r.direct_m.to_string(),
                format!("{:.6}", r.ff_direct_min),
                r.vehicle.map_or(String::new(), |v| v.to_string()),
                opt(r.assigned),
                opt(r.pickup),
                opt(r.dropoff),
                r.ride_m.to_string(),
                r.direct_ride.to_string(),
                (r.shared as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_legs<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "vehicle_id", "purpose", "from_node", "to_node", "depart_t", "arrive_t", "meters", "onboard",
            "energy_kwh",
        ])?;
        for l in &self.legs {
            w.write_record([
                l.vehicle.to_string(),
                l.purpose.name().to_string(),
                l.from.to_string(),
                l.to.to_string(),
                l.depart.to_string(),
                l.arrive.to_string(),
                l.meters.to_string(),
                l.onboard.to_string(),
                format!("{:.9}", l.energy_kwh),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_visits<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "vehicle_id", "station_id", "kind", "arrive_t", "start_t", "end_t", "soc_in_kwh", "soc_out_kwh",
            "energy_kwh",
        ])?;
        for v in &self.visits {
            w.write_record([
                v.vehicle.to_string(),
                v.station.to_string(),
                kind_name(v.kind).to_string(),
                v.arrive.to_string(),
                v.start.to_string(),
                v.end.to_string(),
                format!("{:.9}", v.soc_in),
                format!("{:.9}", v.soc_out),
                format!("{:.9}", v.energy_kwh),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_batteries<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "battery_id", "capacity_kwh", "detached_t", "ready_t", "reissued_t"])?;
        for b in &self.batteries {
            w.write_record([
                b.station.to_string(),
                b.battery.to_string(),
                format!("{}", b.capacity_kwh),
                b.detached.to_string(),
                b.ready.to_string(),
                b.reissued.map_or(String::new(), |t| t.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_vehicles<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "vehicle_id",
            "depot_node",
            "final_node",
            "capacity_kwh",
            "initial_soc_kwh",
            "final_soc_kwh",
            "consumed_kwh",
            "charged_kwh",
            "swap_delta_kwh",
            "odometer_m",
            "empty_m",
            "swaps",
        ])?;
        for v in &self.vehicles {
            w.write_record([
                v.vehicle.to_string(),
                v.depot.to_string(),
                v.final_node.to_string(),
                format!("{}", v.capacity_kwh),
                format!("{:.9}", v.initial_soc),
                format!("{:.9}", v.final_soc),
                format!("{:.9}", v.consumed_kwh),
                format!("{:.9}", v.charged_kwh),
                format!("{:.9}", v.swap_delta_kwh),
                v.odometer_m.to_string(),
                v.empty_m.to_string(),
                v.swaps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_stations<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "kind", "cell_id", "node", "outlets_or_bays", "power_kw"])?;
        for s in &self.stations {
            w.write_record([
                s.station.to_string(),
                kind_name(s.kind).to_string(),
                s.cell.to_string(),
                s.node.to_string(),
                s.capacity.to_string(),
                format!("{}", s.power_kw),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn kind_name(k: StationKind) -> &'static str {
    match k {
        StationKind::Charge => "charge",
        StationKind::Swap => "swap",
    }
}

/// Problems found by replaying a log; empty when everything holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    pub problems: Vec<String>,
}

impl Audit {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }

    fn fail(&mut self, msg: String) {
        if self.problems.len() < 50 {
            self.problems.push(msg);
        }
    }
}

impl DayLog {
    /// Seats, outlets and bays never exceeded; queues served in arrival order.
    pub fn audit_capacity(&self) -> Audit {
        let mut a = Audit::default();
        for l in &self.legs {
            if l.onboard > self.seats {
                a.fail(format!("vehicle {} drove with {} onboard", l.vehicle, l.onboard));
            }
        }
        for s in &self.stations {
            let mut visits: Vec<&VisitRecord> = self.visits.iter().filter(|v| v.station == s.station).collect();
            let mut ev: Vec<(Tick, i32)> = visits.iter().flat_map(|v| [(v.start, 1), (v.end, -1)]).collect();
            ev.sort();
            let mut cur = 0;
            for (t, d) in ev {
                cur += d;
                if cur > s.capacity as i32 {
                    a.fail(format!("station {} had {} in service at t={t}", s.station, cur));
                }
            }
            visits.sort_by_key(|v| (v.arrive, v.start));
            for w in visits.windows(2) {
                if w[1].start < w[0].start {
                    a.fail(format!(
                        "station {}: vehicle {} arrived after {} but started first",
                        s.station, w[1].vehicle, w[0].vehicle
                    ));
                }
            }
        }
        a
    }

    /// Per-vehicle energy balance within `rel_tol` of the capacity.
    pub fn audit_energy(&self, rel_tol: f64) -> Audit {
        let mut a = Audit::default();
        for v in &self.vehicles {
            let lhs = v.initial_soc + v.charged_kwh + v.swap_delta_kwh - v.consumed_kwh;
            if (lhs - v.final_soc).abs() > rel_tol * v.capacity_kwh {
                a.fail(format!(
                    "vehicle {}: balance {lhs:.12} vs final {:.12}",
                    v.vehicle, v.final_soc
                ));
            }
            if v.final_soc < 0.0 || v.final_soc > v.capacity_kwh + 1e-9 {
                a.fail(format!("vehicle {} ends with {} kWh", v.vehicle, v.final_soc));
            }
        }
        a
    }

    /// Leg distances add up to the odometers, and empty distance to the
    /// legs driven without passengers.
    pub fn audit_distance(&self) -> Audit {
        let mut a = Audit::default();
        let n = self.vehicles.len();
        let (mut total, mut empty) = (vec![0u64; n], vec![0u64; n]);
        for l in &self.legs {
            total[l.vehicle] += l.meters;
            if l.onboard == 0 {
                empty[l.vehicle] += l.meters;
            }
        }
        for v in &self.vehicles {
            if total[v.vehicle] != v.odometer_m || empty[v.vehicle] != v.empty_m {
                a.fail(format!("vehicle {}: distance accounting mismatch", v.vehicle));
            }
            if v.empty_m > v.odometer_m {
                a.fail(format!("vehicle {}: empty above total", v.vehicle));
            }
        }
        a
    }

    /// Onboard counts on every leg match boardings minus alightings, and
    /// every vehicle ends empty.
    pub fn audit_passengers(&self) -> Audit {
        let mut a = Audit::default();
        let n = self.vehicles.len();
        // (time, order, delta): alightings before boardings at equal times.
        let mut ev: Vec<Vec<(Tick, i32)>> = vec![Vec::new(); n];
        for r in &self.requests {
            if let (Some(v), Some(p)) = (r.vehicle, r.pickup) {
                ev[v].push((p, 1));
                if let Some(d) = r.dropoff {
                    ev[v].push((d, -1));
                }
            }
        }
        let mut legs: Vec<Vec<&LegRecord>> = vec![Vec::new(); n];
        for l in &self.legs {
            legs[l.vehicle].push(l);
        }
        for v in 0..n {
            ev[v].sort();
            let mut i = 0;
            let mut onboard = 0i32;
            for l in &legs[v] {
                while i < ev[v].len() && ev[v][i].0 <= l.depart {
                    onboard += ev[v][i].1;
                    i += 1;
                }
                if onboard != l.onboard as i32 {
                    a.fail(format!(
                        "vehicle {v}: leg at t={} carries {} but replay gives {onboard}",
                        l.depart, l.onboard
                    ));
                }
            }
            let end: i32 = ev[v].iter().map(|e| e.1).sum();
            if end != 0 {
                a.fail(format!("vehicle {v} ends the day with {end} onboard"));
            }
        }
        a
    }

    /// Wait non-negative, in-vehicle time at least the direct duration
    /// (within rounding) and detours within the allowance.
    pub fn audit_requests(&self, floor_min: f64, fraction: f64) -> Audit {
        let mut a = Audit::default();
        for r in self.requests.iter().filter(|r| r.served()) {
            let (w, ivt, det) = (r.wait().unwrap(), r.in_vehicle().unwrap(), r.detour().unwrap());
            let legs = self
                .legs
                .iter()
                .filter(|l| Some(l.vehicle) == r.vehicle && l.depart >= r.pickup.unwrap() && l.arrive <= r.dropoff.unwrap())
                .count() as i64;
            if w < 0 {
                a.fail(format!("request {} negative wait", r.request));
            }
            if ivt < r.direct_ride - legs {
                a.fail(format!("request {} faster than direct", r.request));
            }
            let allow = floor_min.max(fraction * to_minutes(r.direct_ride));
            if to_minutes(det) > allow + 1e-9 {
                a.fail(format!("request {} detour {} over {allow}", r.request, to_minutes(det)));
            }
            if r.ride_m < r.direct_m {
                a.fail(format!("request {} rode less than the direct distance", r.request));
            }
        }
        a
    }

    /// Every audit at once.
    pub fn audit_all(&self, floor_min: f64, fraction: f64) -> Audit {
        let mut all = Audit::default();
        for part in [
            self.audit_capacity(),
            self.audit_energy(1e-9),
            self.audit_distance(),
            self.audit_passengers(),
            self.audit_requests(floor_min, fraction),
        ] {
            all.problems.extend(part.problems);
        }
        all
    }
}
