//! Batteries, consumption, charging stations and battery-swap stations.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgrid::CellId;
use crate::network::NodeId;
use crate::time::{from_minutes_ceil, Tick};
use crate::VehicleId;

pub const NORMAL_POWER_KW: f64 = 22.0;
pub const RAPID_POWER_KW: f64 = 43.0;
/// Rapid chargers stop at this fraction of capacity.
pub const RAPID_TARGET: f64 = 0.8;
/// Detached batteries recharge at normal power.
pub const SWAP_RECHARGE_KW: f64 = NORMAL_POWER_KW;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    capacity_kwh: f64,
    soc_kwh: f64,
}

impl Battery {
    pub fn full(capacity_kwh: f64) -> Result<Self> {
        Battery::new(capacity_kwh, capacity_kwh)
    }

    pub fn new(capacity_kwh: f64, soc_kwh: f64) -> Result<Self> {
        if !(capacity_kwh.is_finite() && capacity_kwh > 0.0) {
            return Err(Error::InvalidInput(format!(
                "battery capacity must be positive, got {capacity_kwh}"
            )));
        }
        if !(0.0..=capacity_kwh).contains(&soc_kwh) {
            return Err(Error::InvalidInput(format!(
                "state of charge {soc_kwh} outside [0, {capacity_kwh}]"
            )));
        }
        Ok(Battery {
            capacity_kwh,
            soc_kwh,
        })
    }

    pub fn capacity_kwh(&self) -> f64 {
        self.capacity_kwh
    }

    pub fn soc_kwh(&self) -> f64 {
        self.soc_kwh
    }

    pub fn fraction(&self) -> f64 {
        self.soc_kwh / self.capacity_kwh
    }

    /// Sets the charge to `fraction` of capacity, returning the energy added.
    pub(crate) fn charge_to(&mut self, fraction: f64) -> f64 {
        let target = fraction * self.capacity_kwh;
        let added = (target - self.soc_kwh).max(0.0);
        self.soc_kwh = self.soc_kwh.max(target);
        added
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionModel {
    rate_kwh_per_km: f64,
    hourly: Option<[f64; 24]>,
}

impl ConsumptionModel {
    pub fn new(rate_kwh_per_km: f64) -> Result<Self> {
        if !(rate_kwh_per_km.is_finite() && rate_kwh_per_km > 0.0) {
            return Err(Error::InvalidInput(format!(
                "consumption rate must be positive, got {rate_kwh_per_km}"
            )));
        }
        Ok(ConsumptionModel {
            rate_kwh_per_km,
            hourly: None,
        })
    }

    pub fn with_hourly(mut self, multipliers: [f64; 24]) -> Result<Self> {
        if let Some(m) = multipliers.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "consumption multipliers must be positive, got {m}"
            )));
        }
        self.hourly = Some(multipliers);
        Ok(self)
    }

    pub fn rate(&self) -> f64 {
        self.rate_kwh_per_km
    }

    pub fn multiplier(&self, hour: usize) -> f64 {
        self.hourly.map_or(1.0, |m| m[hour % 24])
    }

    pub fn max_multiplier(&self) -> f64 {
        self.hourly
            .map_or(1.0, |m| m.iter().copied().fold(0.0, f64::max))
    }

    pub fn energy_kwh(&self, distance_km: f64, hour: usize) -> f64 {
        self.rate_kwh_per_km * self.multiplier(hour) * distance_km
    }

    /// Energy for `distance_km` in the most expensive hour.
    pub fn worst_case_kwh(&self, distance_km: f64) -> f64 {
        self.rate_kwh_per_km * self.max_multiplier() * distance_km
    }
}

impl Default for ConsumptionModel {
    fn default() -> Self {
        ConsumptionModel {
            rate_kwh_per_km: 0.164,
            hourly: None,
        }
    }
}

pub fn consume(
    battery: &Battery,
    distance_km: f64,
    model: &ConsumptionModel,
    hour: usize,
) -> Result<Battery> {
    let used = model.energy_kwh(distance_km, hour);
    let soc = battery.soc_kwh - used;
    if soc < 0.0 {
        return Err(Error::Invariant(format!(
            "battery would go negative: {:.6} kWh left, {:.6} kWh needed",
            battery.soc_kwh, used
        )));
    }
    Ok(Battery { soc_kwh: soc, ..*battery })
}

/// Minutes to reach `target_fraction` of capacity under constant power.
pub fn charge_duration(battery: &Battery, target_fraction: f64, power_kw: f64) -> f64 {
    let missing = target_fraction * battery.capacity_kwh - battery.soc_kwh;
    if missing <= 0.0 {
        0.0
    } else {
        60.0 * missing / power_kw
    }
}

/// Fraction of capacity a charger of this power stops at.
pub fn charge_target(power_kw: f64) -> f64 {
    if power_kw > NORMAL_POWER_KW {
        RAPID_TARGET
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Charge,
    Swap,
}

/// One row of the station roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub station_id: usize,
    pub kind: StationKind,
    pub cell_id: CellId,
    pub outlets_or_bays: u32,
    pub power_kw: f64,
}

pub fn read_roster<R: Read>(input: R, path: &std::path::Path) -> Result<Vec<StationSpec>> {
    let mut rows = Vec::new();
    for (i, rec) in csv::Reader::from_reader(input).deserialize().enumerate() {
        let row: StationSpec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 2,
            message: e.to_string(),
        })?;
        if row.outlets_or_bays == 0 || !(row.power_kw.is_finite() && row.power_kw > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                message: "outlets_or_bays and power_kw must be positive".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_roster<W: Write>(roster: &[StationSpec], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in roster {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    Plugged,
    /// One-based place in the queue.
    Queued { position: usize },
}

#[derive(Debug, Clone)]
pub struct ChargingStation {
    pub id: usize,
    pub node: NodeId,
    pub outlets: u32,
    pub power_kw: f64,
    plugged: Vec<VehicleId>,
    queue: VecDeque<VehicleId>,
}

impl ChargingStation {
    pub fn new(id: usize, node: NodeId, outlets: u32, power_kw: f64) -> Self {
        ChargingStation {
            id,
            node,
            outlets,
            power_kw,
            plugged: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    pub fn target_fraction(&self) -> f64 {
        charge_target(self.power_kw)
    }

    pub fn has_free_outlet(&self) -> bool {
        self.plugged.len() < self.outlets as usize
    }

    pub fn plugged(&self) -> &[VehicleId] {
        &self.plugged
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn arrive(&mut self, vehicle: VehicleId) -> Arrival {
        if self.has_free_outlet() && self.queue.is_empty() {
            self.plugged.push(vehicle);
            Arrival::Plugged
        } else {
            self.queue.push_back(vehicle);
            Arrival::Queued {
                position: self.queue.len(),
            }
        }
    }

    /// Unplugs `vehicle` and plugs the head of the queue, if any.
    pub fn depart(&mut self, vehicle: VehicleId) -> Result<Option<VehicleId>> {
        let pos = self.plugged.iter().position(|&v| v == vehicle).ok_or_else(|| {
            Error::Invariant(format!("vehicle {vehicle} is not plugged at station {}", self.id))
        })?;
        self.plugged.swap_remove(pos);
        let next = self.queue.pop_front();
        if let Some(v) = next {
            self.plugged.push(v);
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StockPolicy {
    /// A charged battery is bought whenever none is ready.
    OnDemand,
    /// Fixed number of charged batteries at the start of the day.
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredBattery {
    pub battery_id: u32,
    pub capacity_kwh: f64,
    pub ready_at: Tick,
}

/// A battery leaving the station's stock and one joining it.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapStart {
    pub vehicle: VehicleId,
    pub issued: u32,
    pub detached: StoredBattery,
    pub soc_before: f64,
    pub done_at: Tick,
}

#[derive(Debug, Clone)]
pub struct SwapStation {
    pub id: usize,
    pub node: NodeId,
    pub bays: u32,
    pub swap_ticks: Tick,
    policy: StockPolicy,
    busy: u32,
    queue: VecDeque<(VehicleId, Battery)>,
    inventory: Vec<StoredBattery>,
    next_battery: u32,
    peak_inventory: usize,
}

impl SwapStation {
    /// `stock_capacity_kwh` sizes the batteries of a fixed initial stock.
    pub fn new(
        id: usize,
        node: NodeId,
        bays: u32,
        swap_ticks: Tick,
        policy: StockPolicy,
        stock_capacity_kwh: f64,
    ) -> Self {
        let n = match policy {
            StockPolicy::OnDemand => 0,
            StockPolicy::Fixed(n) => n,
        };
        let inventory: Vec<StoredBattery> = (0..n)
            .map(|i| StoredBattery {
                battery_id: i,
                capacity_kwh: stock_capacity_kwh,
                ready_at: 0,
            })
            .collect();
        SwapStation {
            id,
            node,
            bays,
            swap_ticks,
            policy,
            busy: 0,
            queue: VecDeque::new(),
            peak_inventory: inventory.len(),
            next_battery: n,
            inventory,
        }
    }

    pub fn busy_bays(&self) -> u32 {
        self.busy
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn inventory(&self) -> &[StoredBattery] {
        &self.inventory
    }

    pub fn peak_inventory(&self) -> usize {
        self.peak_inventory
    }

    /// Batteries bought so far (initial stock included).
    pub fn batteries_owned(&self) -> u32 {
        self.next_battery
    }

    /// Earliest time a charged battery of this capacity becomes ready, if any is stored.
    pub fn next_ready(&self, capacity_kwh: f64) -> Option<Tick> {
        self.inventory
            .iter()
            .filter(|b| b.capacity_kwh == capacity_kwh)
            .map(|b| b.ready_at)
            .min()
    }

    pub fn arrive(&mut self, vehicle: VehicleId, battery: Battery) {
        self.queue.push_back((vehicle, battery));
    }

    /// Starts every swap that can begin at `now`, strictly in arrival order.
    pub fn start_ready(&mut self, now: Tick) -> Vec<SwapStart> {
        let mut started = Vec::new();
        while self.busy < self.bays {
            let Some(&(vehicle, battery)) = self.queue.front() else { break };
            let cap = battery.capacity_kwh();
            let pick = self
                .inventory
                .iter()
                .enumerate()
                .filter(|(_, b)| b.capacity_kwh == cap && b.ready_at <= now)
                .min_by_key(|(_, b)| (b.ready_at, b.battery_id))
                .map(|(i, _)| i);
            let issued = match (pick, self.policy) {
                (Some(i), _) => self.inventory.remove(i).battery_id,
                (None, StockPolicy::OnDemand) => {
                    self.next_battery += 1;
                    self.next_battery - 1
                }
                (None, StockPolicy::Fixed(_)) => break,
            };
            self.queue.pop_front();
            self.busy += 1;
            let recharge = 60.0 * (cap - battery.soc_kwh()) / SWAP_RECHARGE_KW;
            let detached = StoredBattery {
                battery_id: self.next_battery,
                capacity_kwh: cap,
                ready_at: now + self.swap_ticks + from_minutes_ceil(recharge),
            };
            self.next_battery += 1;
            self.inventory.push(detached.clone());
            self.peak_inventory = self.peak_inventory.max(self.inventory.len());
            started.push(SwapStart {
                vehicle,
                issued,
                detached,
                soc_before: battery.soc_kwh(),
                done_at: now + self.swap_ticks,
            });
        }
        started
    }

    pub fn finish(&mut self) -> Result<()> {
        if self.busy == 0 {
            return Err(Error::Invariant(format!(
                "swap finished at station {} with no bay in use",
                self.id
            )));
        }
        self.busy -= 1;
        Ok(())
    }
}

/// Interval during which a battery sat outside any vehicle at a station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockInterval {
    pub station: usize,
    pub capacity_kwh: f64,
    pub from: Tick,
    /// `None` while still in stock at the end of the run.
    pub until: Option<Tick>,
}

/// Peak number of batteries outside vehicles, per station and capacity, summed.
pub fn required_extra_batteries(intervals: &[StockInterval]) -> u64 {
    let mut groups: Vec<((usize, u64), Vec<(Tick, i32)>)> = Vec::new();
    for s in intervals {
        let key = (s.station, s.capacity_kwh.to_bits());
        let slot = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        groups[slot].1.push((s.from, 1));
        if let Some(u) = s.until {
            groups[slot].1.push((u, -1));
        }
    }
    groups
        .into_iter()
        .map(|(_, mut ev)| {
            // Removals before additions at the same instant.
            ev.sort();
            let (mut cur, mut peak) = (0i64, 0i64);
            for (_, d) in ev {
                cur += d as i64;
                peak = peak.max(cur);
            }
            peak as u64
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consumption_arithmetic() {
        let m = ConsumptionModel::default();
        let b = Battery::full(41.0).unwrap();
        let after = consume(&b, 10.0, &m, 8).unwrap();
        assert!((b.soc_kwh() - after.soc_kwh() - 1.64).abs() < 1e-12);
        assert_eq!(consume(&b, 0.0, &m, 8).unwrap(), b);
        assert!((m.energy_kwh(546.0, 0) - 89.544).abs() < 1e-9);
        assert!(m.energy_kwh(546.0, 0) > 50.0);
        assert!(matches!(consume(&b, 300.0, &m, 0), Err(Error::Invariant(_))));
    }

    #[test]
    fn hourly_consumption() {
        let mut h = [1.0; 24];
        h[8] = 1.25;
        let m = ConsumptionModel::new(0.2).unwrap().with_hourly(h).unwrap();
        assert_eq!(m.energy_kwh(10.0, 8), 2.5);
        assert_eq!(m.worst_case_kwh(4.0), 1.0);
        assert!(ConsumptionModel::new(0.0).is_err());
        assert!(ConsumptionModel::new(0.2).unwrap().with_hourly([0.0; 24]).is_err());
    }

    #[test]
    fn charging_durations() {
        let b = Battery::new(41.0, 0.2 * 41.0).unwrap();
        assert!((charge_duration(&b, 1.0, 22.0) - 89.4545).abs() < 1e-3);
        let b = Battery::new(50.0, 10.0).unwrap();
        assert!((charge_duration(&b, 0.8, 43.0) - 41.860).abs() < 1e-3);
        assert_eq!(charge_duration(&Battery::full(41.0).unwrap(), 1.0, 22.0), 0.0);
        assert_eq!(charge_duration(&b, 0.1, 22.0), 0.0);
        assert_eq!(charge_target(22.0), 1.0);
        assert_eq!(charge_target(43.0), 0.8);
    }

    #[test]
    fn battery_validation() {
        assert!(Battery::new(41.0, 42.0).is_err());
        assert!(Battery::new(-1.0, 0.0).is_err());
        let mut b = Battery::new(50.0, 10.0).unwrap();
        assert_eq!(b.charge_to(0.8), 30.0);
        assert_eq!(b.soc_kwh(), 40.0);
        assert_eq!(b.charge_to(0.5), 0.0);
    }

    #[test]
    fn outlets_and_fifo() {
        let mut s = ChargingStation::new(0, 0, 2, 22.0);
        assert_eq!(s.arrive(10), Arrival::Plugged);
        assert_eq!(s.arrive(11), Arrival::Plugged);
        assert_eq!(s.arrive(12), Arrival::Queued { position: 1 });
        assert_eq!(s.arrive(13), Arrival::Queued { position: 2 });
        assert_eq!(s.depart(11).unwrap(), Some(12));
        assert_eq!(s.depart(10).unwrap(), Some(13));
        assert_eq!(s.depart(12).unwrap(), None);
        assert!(s.depart(99).is_err());
        assert!(s.plugged().len() <= 2);
    }

    #[test]
    fn one_outlet_left_plugs() {
        let mut s = ChargingStation::new(0, 0, 60, 22.0);
        for v in 0..59 {
            s.arrive(v);
        }
        assert_eq!(s.arrive(59), Arrival::Plugged);
        assert_eq!(s.arrive(60), Arrival::Queued { position: 1 });
    }

    #[test]
    fn swap_recharge_timing() {
        let mut s = SwapStation::new(0, 0, 20, 50, StockPolicy::OnDemand, 41.0);
        s.arrive(1, Battery::new(41.0, 0.15 * 41.0).unwrap());
        let started = s.start_ready(1000);
        assert_eq!(started.len(), 1);
        // 5 + 60 * 34.85 / 22 = 100.045 minutes, rounded up to the tick.
        assert_eq!(started[0].detached.ready_at, 1000 + 50 + 951);
        assert_eq!(started[0].done_at, 1050);
        assert_eq!(s.batteries_owned(), 2);
    }

    #[test]
    fn fixed_stock_waits_for_a_battery() {
        let mut s = SwapStation::new(0, 0, 20, 50, StockPolicy::Fixed(1), 41.0);
        s.arrive(1, Battery::new(41.0, 8.0).unwrap());
        s.arrive(2, Battery::new(41.0, 8.0).unwrap());
        let first = s.start_ready(0);
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].issued, 0);
        assert!(s.start_ready(10).is_empty());
        let ready = s.next_ready(41.0).unwrap();
        let second = s.start_ready(ready);
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].vehicle, 2);
        assert_eq!(second[0].issued, first[0].detached.battery_id);
    }

    #[test]
    fn bays_bind() {
        let mut s = SwapStation::new(0, 0, 1, 50, StockPolicy::OnDemand, 41.0);
        s.arrive(1, Battery::new(41.0, 8.0).unwrap());
        s.arrive(2, Battery::new(41.0, 8.0).unwrap());
        assert_eq!(s.start_ready(0).len(), 1);
        assert!(s.start_ready(20).is_empty());
        s.finish().unwrap();
        assert_eq!(s.start_ready(50).len(), 1);
        assert_eq!(s.busy_bays(), 1);
    }

    #[test]
    fn extra_battery_overlap() {
        assert_eq!(required_extra_batteries(&[]), 0);
        let one = StockInterval {
            station: 0,
            capacity_kwh: 41.0,
            from: 10,
            until: None,
        };
        assert_eq!(required_extra_batteries(&[one]), 1);
        // [0,10) [5,15) [10,20) [12,30): peak 3 at t=12.
        let iv = |from, until| StockInterval {
            station: 0,
            capacity_kwh: 41.0,
            from,
            until: Some(until),
        };
        let xs = [iv(0, 10), iv(5, 15), iv(10, 20), iv(12, 30)];
        assert_eq!(required_extra_batteries(&xs), 3);
        let mut other = iv(0, 100);
        other.station = 1;
        assert_eq!(required_extra_batteries(&[xs[0], other]), 2);
    }

    #[test]
    fn roster_roundtrip() {
        let roster = vec![
            StationSpec {
                station_id: 0,
                kind: StationKind::Charge,
                cell_id: 14,
                outlets_or_bays: 8,
                power_kw: 22.0,
            },
            StationSpec {
                station_id: 1,
                kind: StationKind::Swap,
                cell_id: 3,
                outlets_or_bays: 20,
                power_kw: 22.0,
            },
        ];
        let mut buf = Vec::new();
        write_roster(&roster, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("station_id,kind,cell_id,outlets_or_bays,power_kw\n0,charge,14,8,22.0\n"));
        let back = read_roster(&buf[..], std::path::Path::new("r.csv")).unwrap();
        assert_eq!(back, roster);
        let bad = b"station_id,kind,cell_id,outlets_or_bays,power_kw\n0,charge,1,0,22\n";
        assert!(matches!(
            read_roster(&bad[..], std::path::Path::new("r.csv")),
            Err(Error::Parse { row: 2, .. })
        ));
    }
}
