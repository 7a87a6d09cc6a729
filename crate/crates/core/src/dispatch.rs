//! Vehicle assignment, ride-sharing insertion and charger choice.

use crate::energy::{Battery, ConsumptionModel};
use crate::network::{CongestionProfile, NodeId, TravelTable};
use crate::time::{from_minutes, hour_of, to_minutes, Tick};
use crate::VehicleId;

pub type RequestId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stop {
    pub kind: StopKind,
    pub request: RequestId,
    pub node: NodeId,
}

/// A passenger assigned to a vehicle, onboard or still waiting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rider {
    pub request: RequestId,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Free-flow minutes of the fastest direct route.
    pub ff_direct_min: f64,
    /// Direct minutes at the hour the request was made.
    pub direct_min: f64,
    /// Pickup time announced at assignment; `Tick::MAX` before that.
    pub promised_pickup: Tick,
    pub picked_up: Option<Tick>,
    /// Largest speed multiplier among the legs ridden so far.
    pub max_mult: f64,
}

impl Rider {
    pub fn new(
        request: RequestId,
        origin: NodeId,
        destination: NodeId,
        ff_direct_min: f64,
        direct_min: f64,
    ) -> Self {
        Rider {
            request,
            origin,
            destination,
            ff_direct_min,
            direct_min,
            promised_pickup: Tick::MAX,
            picked_up: None,
            max_mult: 0.0,
        }
    }
}

/// Direct duration of a ride whose legs left at the fastest multiplier `max_mult`.
pub fn direct_ride_ticks(ff_direct_min: f64, max_mult: f64) -> Tick {
    from_minutes(ff_direct_min / max_mult)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchParams {
    pub seats: u32,
    /// Detour allowance is the larger of this many minutes...
    pub detour_floor_min: f64,
    /// ...and this fraction of the direct duration.
    pub detour_fraction: f64,
    pub rideshare: bool,
    /// Only plans passing this close (free-flow minutes) take new riders.
    pub rideshare_radius_min: f64,
    /// Longest stop list a shared insertion may create.
    pub max_stops: usize,
}

impl Default for DispatchParams {
    fn default() -> Self {
        DispatchParams {
            seats: 4,
            detour_floor_min: 5.0,
            detour_fraction: 0.4,
            rideshare: true,
            rideshare_radius_min: 5.0,
            max_stops: 8,
        }
    }
}

impl DispatchParams {
    pub fn allowance_min(&self, direct_min: f64) -> f64 {
        self.detour_floor_min.max(self.detour_fraction * direct_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRule {
    pub consumption: ConsumptionModel,
    pub reserve_kwh: f64,
    /// Batteries never limit service.
    pub unlimited: bool,
}

/// Inclusive SoC test over the trip, its approach and the way to a station.
pub fn feasible_soc(
    soc_kwh: f64,
    pickup_km: f64,
    trip_km: f64,
    to_station_km: f64,
    model: &ConsumptionModel,
    reserve_kwh: f64,
) -> bool {
    soc_kwh >= model.worst_case_kwh(pickup_km + trip_km + to_station_km) + reserve_kwh
}

/// Strictly below the trigger fraction.
pub fn needs_charge(battery: &Battery, threshold: f64) -> bool {
    battery.fraction() < threshold
}

/// What dispatch may see of a vehicle.
#[derive(Debug, Clone, Copy)]
pub enum VehicleView<'a> {
    Idle {
        node: NodeId,
    },
    /// Driving to `stops[0]`, arriving at `arrive` with `onboard` riders.
    EnRoute {
        arrive: Tick,
        onboard: u32,
        stops: &'a [Stop],
        riders: &'a [Rider],
    },
    Unavailable,
}

#[derive(Debug, Clone, Copy)]
pub struct FleetEntry<'a> {
    pub id: VehicleId,
    pub soc_kwh: f64,
    pub view: VehicleView<'a>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceKind {
    Idle,
    /// Insert the pickup before index `pickup_at` of the current stops and
    /// the dropoff before `dropoff_at` of the list that results.
    Shared { pickup_at: usize, dropoff_at: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub vehicle: VehicleId,
    pub kind: ChoiceKind,
    pub pickup_tick: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssignOutcome {
    pub choice: Option<Choice>,
    /// Closest idle vehicle when it lacked the charge for this request.
    pub nearest_idle_short: Option<VehicleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Insertion {
    pub pickup_at: usize,
    pub dropoff_at: usize,
    pub pickup_tick: Tick,
    /// Extra vehicle time over the current plan.
    pub cost: Tick,
}

/// Timing of a stop sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub end: Tick,
    pub meters: u64,
    pub times: Vec<Tick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargerView {
    pub node: NodeId,
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargerChoice {
    pub station: usize,
    pub queued: bool,
}

pub struct Planner<'a> {
    pub table: &'a TravelTable,
    pub congestion: &'a CongestionProfile,
    pub params: &'a DispatchParams,
    pub energy: &'a EnergyRule,
    to_station_m: Vec<u64>,
}

impl<'a> Planner<'a> {
    pub fn new(
        table: &'a TravelTable,
        congestion: &'a CongestionProfile,
        params: &'a DispatchParams,
        energy: &'a EnergyRule,
        station_nodes: &[NodeId],
    ) -> Self {
        let to_station_m = (0..table.len())
            .map(|n| {
                station_nodes
                    .iter()
                    .map(|&s| table.route_m(n, s))
                    .min()
                    .unwrap_or(0)
            })
            .collect();
        Planner {
            table,
            congestion,
            params,
            energy,
            to_station_m,
        }
    }

    pub fn leg_ticks(&self, from: NodeId, to: NodeId, depart: Tick) -> Tick {
        if from == to {
            return 0;
        }
        let mult = self.congestion.multiplier(hour_of(depart));
        from_minutes(self.table.free_min(from, to) / mult).max(1)
    }

    pub fn to_station_m(&self, node: NodeId) -> u64 {
        self.to_station_m[node]
    }

    /// Energy needed to drive `meters` and then reach the station nearest `end`.
    pub fn required_kwh(&self, meters: u64, end: NodeId) -> f64 {
        let km = (meters + self.to_station_m(end)) as f64 / 1000.0;
        self.energy.consumption.worst_case_kwh(km) + self.energy.reserve_kwh
    }

    pub fn soc_allows(&self, soc_kwh: f64, meters: u64, end: NodeId) -> bool {
        self.energy.unlimited || soc_kwh >= self.required_kwh(meters, end)
    }

    /// Times a stop sequence that starts at `stops[0]`, reached at `start`
    /// carrying `onboard`. `None` if a seat, pickup-delay or detour rule fails.
    pub fn simulate(&self, start: Tick, onboard: u32, stops: &[Stop], riders: &[Rider]) -> Option<Schedule> {
        let mut state: Vec<(Option<Tick>, f64, bool)> =
            riders.iter().map(|r| (r.picked_up, r.max_mult, false)).collect();
        let find = |req: RequestId| riders.iter().position(|r| r.request == req);
        let mut t = start;
        let mut node = stops.first()?.node;
        let mut onboard = onboard;
        let mut meters = 0u64;
        let mut times = Vec::with_capacity(stops.len());
        for s in stops {
            if s.node != node {
                let mult = self.congestion.multiplier(hour_of(t));
                for st in state.iter_mut().filter(|st| st.0.is_some() && !st.2) {
                    st.1 = st.1.max(mult);
                }
                t += self.leg_ticks(node, s.node, t);
                meters += self.table.route_m(node, s.node);
                node = s.node;
            }
            let r = find(s.request)?;
            let rider = &riders[r];
            match s.kind {
                StopKind::Pickup => {
                    if rider.promised_pickup != Tick::MAX {
                        let allow = from_minutes(self.params.allowance_min(rider.direct_min));
                        if t > rider.promised_pickup.saturating_add(allow) {
                            return None;
                        }
                    }
                    state[r].0 = Some(t);
                    onboard += 1;
                    if onboard > self.params.seats {
                        return None;
                    }
                }
                StopKind::Dropoff => {
                    let picked = state[r].0?;
                    let direct = direct_ride_ticks(rider.ff_direct_min, state[r].1.max(f64::MIN_POSITIVE));
                    let detour = to_minutes(t - picked - direct);
                    if detour > self.params.allowance_min(to_minutes(direct)) + 1e-9 {
                        return None;
                    }
                    state[r].2 = true;
                    onboard = onboard.checked_sub(1)?;
                }
            }
            times.push(t);
        }
        Some(Schedule {
            end: t,
            meters,
            times,
        })
    }

    /// Cheapest feasible way to add `rider` to a vehicle that is on its way
    /// to `stops[0]`; the current leg is never changed.
    pub fn insert_shared(
        &self,
        soc_kwh: f64,
        arrive: Tick,
        onboard: u32,
        stops: &[Stop],
        riders: &[Rider],
        rider: &Rider,
    ) -> Option<Insertion> {
        if stops.is_empty() || stops.len() + 2 > self.params.max_stops {
            return None;
        }
        let mut all = riders.to_vec();
        all.push(*rider);
        let base_end = self
            .simulate(arrive, onboard, stops, riders)
            .map_or(arrive, |s| s.end);
        let pickup = Stop {
            kind: StopKind::Pickup,
            request: rider.request,
            node: rider.origin,
        };
        let dropoff = Stop {
            kind: StopKind::Dropoff,
            request: rider.request,
            node: rider.destination,
        };
        let n = stops.len();
        let mut best: Option<Insertion> = None;
        let mut seq = Vec::with_capacity(n + 2);
        for i in 1..=n {
            for j in i + 1..=n + 1 {
                seq.clear();
                seq.extend_from_slice(&stops[..i]);
                seq.push(pickup);
                seq.extend_from_slice(&stops[i..]);
                seq.insert(j, dropoff);
                let Some(s) = self.simulate(arrive, onboard, &seq, &all) else { continue };
                let last = seq.last().expect("non-empty").node;
                if !self.soc_allows(soc_kwh, s.meters, last) {
                    continue;
                }
                let cand = Insertion {
                    pickup_at: i,
                    dropoff_at: j,
                    pickup_tick: s.times[i],
                    cost: s.end - base_end,
                };
                if best.is_none_or(|b| cand.cost < b.cost) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn near_plan(&self, stops: &[Stop], origin: NodeId) -> bool {
        stops
            .iter()
            .any(|s| self.table.free_min(s.node, origin) <= self.params.rideshare_radius_min)
    }

    /// Vehicle with the shortest pickup among those that can take the rider.
    pub fn assign(&self, fleet: &[FleetEntry<'_>], rider: &Rider, now: Tick) -> AssignOutcome {
        let trip_m = self.table.route_m(rider.origin, rider.destination);
        let mut best: Option<(Tick, VehicleId, Choice)> = None;
        let mut nearest_idle: Option<(Tick, VehicleId, bool)> = None;
        for e in fleet {
            let cand = match e.view {
                VehicleView::Idle { node } => {
                    let pickup = self.leg_ticks(node, rider.origin, now);
                    let meters = self.table.route_m(node, rider.origin) + trip_m;
                    let ok = self.soc_allows(e.soc_kwh, meters, rider.destination);
                    if nearest_idle.is_none_or(|(p, id, _)| (pickup, e.id) < (p, id)) {
                        nearest_idle = Some((pickup, e.id, ok));
                    }
                    ok.then_some(Choice {
                        vehicle: e.id,
                        kind: ChoiceKind::Idle,
                        pickup_tick: now + pickup,
                    })
                }
                VehicleView::EnRoute {
                    arrive,
                    onboard,
                    stops,
                    riders,
                } if self.params.rideshare && self.near_plan(stops, rider.origin) => self
                    .insert_shared(e.soc_kwh, arrive, onboard, stops, riders, rider)
                    .map(|ins| Choice {
                        vehicle: e.id,
                        kind: ChoiceKind::Shared {
                            pickup_at: ins.pickup_at,
                            dropoff_at: ins.dropoff_at,
                        },
                        pickup_tick: ins.pickup_tick,
                    }),
                _ => None,
            };
            if let Some(c) = cand {
                let key = (c.pickup_tick - now, e.id);
                if best.is_none_or(|(p, id, _)| key < (p, id)) {
                    best = Some((key.0, key.1, c));
                }
            }
        }
        AssignOutcome {
            choice: best.map(|b| b.2),
            nearest_idle_short: nearest_idle.and_then(|(_, id, ok)| (!ok).then_some(id)),
        }
    }

    /// Closest reachable station with room; otherwise the closest reachable one, queued.
    pub fn choose_charger(
        &self,
        node: NodeId,
        soc_kwh: f64,
        stations: &[ChargerView],
        now: Tick,
    ) -> Option<ChargerChoice> {
        let reachable = stations.iter().enumerate().filter(|(_, s)| {
            let km = self.table.route_m(node, s.node) as f64 / 1000.0;
            self.energy.unlimited || soc_kwh >= self.energy.consumption.worst_case_kwh(km)
        });
        let mut free: Option<(Tick, usize)> = None;
        let mut any: Option<(Tick, usize)> = None;
        for (i, s) in reachable {
            let key = (self.leg_ticks(node, s.node, now), i);
            if s.available && free.is_none_or(|f| key < f) {
                free = Some(key);
            }
            if any.is_none_or(|a| key < a) {
                any = Some(key);
            }
        }
        match (free, any) {
            (Some((_, i)), _) => Some(ChargerChoice {
                station: i,
                queued: false,
            }),
            (None, Some((_, i))) => Some(ChargerChoice {
                station: i,
                queued: true,
            }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::network::{Edge, Network};

    /// Nodes on a line 1 km apart at 60 km/h, so each hop takes a minute.
    pub(crate) fn line(n: usize) -> (Network, TravelTable) {
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

    fn rule() -> EnergyRule {
        EnergyRule {
            consumption: ConsumptionModel::new(1.0).unwrap(),
            reserve_kwh: 0.0,
            unlimited: false,
        }
    }

    fn rider(id: RequestId, o: NodeId, d: NodeId, table: &TravelTable) -> Rider {
        let ff = table.free_min(o, d);
        Rider::new(id, o, d, ff, ff)
    }

    #[test]
    fn soc_boundary_is_inclusive() {
        let m = ConsumptionModel::new(0.5).unwrap();
        assert!(feasible_soc(6.0, 2.0, 8.0, 2.0, &m, 0.0));
        assert!(!feasible_soc(5.0, 2.0, 8.0, 2.0, &m, 0.0));
        assert!(!feasible_soc(6.0, 2.0, 8.0, 2.0, &m, 0.1));
    }

    #[test]
    fn charge_trigger_is_strict() {
        let b = |f: f64| Battery::new(100.0, f * 100.0).unwrap();
        assert!(needs_charge(&b(0.19), 0.2));
        assert!(!needs_charge(&b(0.2), 0.2));
        assert!(needs_charge(&b(0.25), 0.3));
    }

    #[test]
    fn nearest_feasible_vehicle_wins() {
        let (net, table) = line(12);
        let (params, energy) = (DispatchParams::default(), rule());
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        let r = rider(0, 6, 7, &table);
        let fleet = [
            FleetEntry { id: 0, soc_kwh: 100.0, view: VehicleView::Idle { node: 1 } },
            FleetEntry { id: 1, soc_kwh: 100.0, view: VehicleView::Idle { node: 4 } },
        ];
        let out = p.assign(&fleet, &r, 0);
        assert_eq!(out.choice.unwrap().vehicle, 1);
        assert_eq!(out.choice.unwrap().pickup_tick, 20);
        assert_eq!(out.nearest_idle_short, None);

        // Vehicle 1 needs 2 + 1 + 7 = 10 km; give it 9.
        let fleet = [
            FleetEntry { id: 0, soc_kwh: 100.0, view: VehicleView::Idle { node: 1 } },
            FleetEntry { id: 1, soc_kwh: 9.0, view: VehicleView::Idle { node: 4 } },
        ];
        let out = p.assign(&fleet, &r, 0);
        assert_eq!(out.choice.unwrap().vehicle, 0);
        assert_eq!(out.nearest_idle_short, Some(1));

        let fleet = [FleetEntry { id: 3, soc_kwh: 10.0, view: VehicleView::Idle { node: 4 } }];
        assert_eq!(p.assign(&fleet, &r, 0).choice.unwrap().vehicle, 3);
        let fleet = [FleetEntry { id: 3, soc_kwh: 100.0, view: VehicleView::Unavailable }];
        assert_eq!(p.assign(&fleet, &r, 0), AssignOutcome::default());
    }

    #[test]
    fn coincident_request_shares_for_free() {
        let (net, table) = line(8);
        let (params, energy) = (DispatchParams::default(), rule());
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        let a = rider(0, 2, 6, &table);
        let stops = [
            Stop { kind: StopKind::Pickup, request: 0, node: 2 },
            Stop { kind: StopKind::Dropoff, request: 0, node: 6 },
        ];
        let b = rider(1, 2, 6, &table);
        let ins = p.insert_shared(100.0, 30, 0, &stops, &[a], &b).unwrap();
        assert_eq!(ins.cost, 0);
        assert_eq!(ins.pickup_tick, 30);
        assert_eq!((ins.pickup_at, ins.dropoff_at), (1, 2));
    }

    #[test]
    fn detour_and_seat_limits() {
        let (net, table) = line(30);
        let mut params = DispatchParams::default();
        let energy = rule();
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        // Onboard rider 10 -> 12, arriving at 12 with no detour.
        let mut a = rider(0, 10, 12, &table);
        a.picked_up = Some(100);
        a.max_mult = 1.0;
        let stops = [Stop { kind: StopKind::Dropoff, request: 0, node: 12 }];
        let ins = p.insert_shared(100.0, 120, 1, &stops, &[a], &rider(1, 12, 20, &table)).unwrap();
        assert_eq!((ins.pickup_at, ins.dropoff_at, ins.cost), (1, 2, 80));

        // Waiting rider 10 -> 12; a long ride 10 -> 25 must drop it off first.
        let a = rider(0, 10, 12, &table);
        let stops = [
            Stop { kind: StopKind::Pickup, request: 0, node: 10 },
            Stop { kind: StopKind::Dropoff, request: 0, node: 12 },
        ];
        let ins = p.insert_shared(100.0, 100, 0, &stops, &[a], &rider(1, 10, 25, &table)).unwrap();
        assert_eq!((ins.pickup_at, ins.dropoff_at, ins.cost), (1, 3, 130));

        let b = rider(1, 10, 12, &table);
        let shared = p.insert_shared(100.0, 100, 0, &stops, &[a], &b).unwrap();
        assert_eq!(shared.cost, 0);
        params.seats = 1;
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        let ins = p.insert_shared(100.0, 100, 0, &stops, &[a], &b).unwrap();
        assert_eq!((ins.pickup_at, ins.dropoff_at, ins.cost), (2, 3, 40));
        // Not enough charge for the extra 4 km plus the way back to station 0.
        assert!(p.insert_shared(13.0, 100, 0, &stops, &[a], &b).is_none());
    }

    #[test]
    fn empty_plan_cannot_take_insertions() {
        let (net, table) = line(4);
        let (params, energy) = (DispatchParams::default(), rule());
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        assert!(p.insert_shared(10.0, 0, 0, &[], &[], &rider(0, 1, 2, &table)).is_none());
    }

    #[test]
    fn charger_two_tier_rule() {
        let (net, table) = line(10);
        let (params, energy) = (DispatchParams::default(), rule());
        let p = Planner::new(&table, net.congestion(), &params, &energy, &[0]);
        let st = [
            ChargerView { node: 6, available: false },
            ChargerView { node: 8, available: true },
        ];
        let c = p.choose_charger(5, 50.0, &st, 0).unwrap();
        assert_eq!(c, ChargerChoice { station: 1, queued: false });
        let full = [
            ChargerView { node: 6, available: false },
            ChargerView { node: 8, available: false },
        ];
        assert_eq!(
            p.choose_charger(5, 50.0, &full, 0).unwrap(),
            ChargerChoice { station: 0, queued: true }
        );
        // Only 2 kWh: the free station 3 km away is out of reach.
        assert_eq!(
            p.choose_charger(5, 2.0, &st, 0).unwrap(),
            ChargerChoice { station: 0, queued: true }
        );
        assert!(p.choose_charger(5, 0.5, &st, 0).is_none());
    }
}
