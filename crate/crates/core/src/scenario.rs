//! Scenario configuration, validation and the place / run / sweep / compare workflows.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{generate_agents, trip_requests, Agent, ChoiceModel, TripRequest};
use crate::dispatch::{DispatchParams, EnergyRule};
use crate::energy::{
    read_roster, write_roster, ConsumptionModel, StationKind, StationSpec, StockPolicy, NORMAL_POWER_KW,
    RAPID_POWER_KW, SWAP_RECHARGE_KW,
};
use crate::engine::{run_day, run_iterations, DayDemand, IterationResult, SimParams, StationSite, World};
use crate::error::{ConfigIssue, Error, Result};
use crate::geom::{Point, Rect};
use crate::hexgrid::{
    aggregate_demand, centroid_distances, CellId, DemandField, DistanceMetric, HexGrid, Outside,
};
use crate::metrics::{self, CompareTable, MetricsReport};
use crate::network::{CongestionProfile, Network, NodeId, TravelTable};
use crate::placement::{McLpSpec, PMedianSpec, PlacementSolution, PlacementSpec, SolveStatus};
use crate::rng;
use crate::time::from_minutes;

pub const SCHEMA_VERSION: i64 = 1;
/// Station cap above which validation warns.
pub const DEFAULT_MAX_STATIONS: i64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub schema_version: Option<i64>,
    pub name: String,
    pub seed: u64,
    pub iteration_days: i64,
    pub region: RegionConfig,
    pub network: NetworkConfig,
    pub population: PopulationConfig,
    pub choice: ChoiceConfig,
    pub fleet: FleetConfig,
    pub dispatch: DispatchConfig,
    pub stations: StationsConfig,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionConfig {
    pub width_km: f64,
    pub height_km: f64,
    pub hex_diameter_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Node count of the synthetic network.
    pub nodes: i64,
    pub nodes_file: Option<PathBuf>,
    pub edges_file: Option<PathBuf>,
    /// 24 hourly speed multipliers.
    pub congestion: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationConfig {
    pub agents: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChoiceConfig {
    pub beta_cost: f64,
    pub beta_wait: f64,
    pub beta_ivt: f64,
    pub asc: f64,
    pub fare_per_km: f64,
    pub other_cost_per_km: f64,
    pub other_time_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub size: i64,
    pub seats: i64,
    pub battery_kwh: f64,
    pub consumption_kwh_per_km: f64,
    pub consumption_hourly: Option<Vec<f64>>,
    pub soc_trigger: f64,
    pub reserve_kwh: f64,
    pub unlimited_range: bool,
    /// Depot coordinates in km; quadrant centres when absent.
    pub depots: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispatchConfig {
    pub rideshare: bool,
    pub detour_floor_min: f64,
    pub detour_fraction: f64,
    pub rideshare_radius_min: f64,
    pub max_plan_stops: i64,
    /// Simulated hours after which a day is cut off.
    pub max_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Mclp,
    Pmedian,
    PmedianConstrained,
    Roster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationType {
    Normal,
    Rapid,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationsConfig {
    pub strategy: Strategy,
    pub count: i64,
    pub max_count: i64,
    pub kind: StationType,
    pub outlets: i64,
    /// Overrides 22 kW (normal) or 43 kW (rapid).
    pub power_kw: Option<f64>,
    pub swap_bays: i64,
    pub swap_minutes: f64,
    /// Charged batteries per swap station at the start of the day; bought on demand when absent.
    pub swap_stock: Option<i64>,
    /// CSV with a `cell_id` column.
    pub forbidden_file: Option<PathBuf>,
    /// Rectangles `[x0, y0, x1, y1]` in km; cells whose centre lies inside are forbidden.
    pub forbidden_zones: Vec<[f64; 4]>,
    pub roster_file: Option<PathBuf>,
    pub metric: Metric,
    /// MCLP only: no station may sit next to another.
    pub separation: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: Some(SCHEMA_VERSION),
            name: "scenario".into(),
            seed: 42,
            iteration_days: 10,
            region: RegionConfig::default(),
            network: NetworkConfig::default(),
            population: PopulationConfig::default(),
            choice: ChoiceConfig::default(),
            fleet: FleetConfig::default(),
            dispatch: DispatchConfig::default(),
            stations: StationsConfig::default(),
            base_dir: None,
        }
    }
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            width_km: 15.0,
            height_km: 15.0,
            hex_diameter_km: 1.0,
        }
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            nodes: 550,
            nodes_file: None,
            edges_file: None,
            congestion: None,
        }
    }
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig { agents: 8000 }
    }
}

impl Default for ChoiceConfig {
    fn default() -> Self {
        let m = ChoiceModel::new(0);
        ChoiceConfig {
            beta_cost: m.beta_cost,
            beta_wait: m.beta_wait,
            beta_ivt: m.beta_ivt,
            asc: m.asc,
            fare_per_km: m.fare_per_km,
            other_cost_per_km: m.other_cost_per_km,
            other_time_factor: m.other_time_factor,
        }
    }
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            size: 200,
            seats: 4,
            battery_kwh: 41.0,
            consumption_kwh_per_km: 0.164,
            consumption_hourly: None,
            soc_trigger: 0.2,
            reserve_kwh: 0.0,
            unlimited_range: false,
            depots: None,
        }
    }
}

impl Default for DispatchConfig {
    fn default() -> Self {
        let d = DispatchParams::default();
        DispatchConfig {
            rideshare: d.rideshare,
            detour_floor_min: d.detour_floor_min,
            detour_fraction: d.detour_fraction,
            rideshare_radius_min: d.rideshare_radius_min,
            max_plan_stops: d.max_stops as i64,
            max_hours: 72.0,
        }
    }
}

impl Default for StationsConfig {
    fn default() -> Self {
        StationsConfig {
            strategy: Strategy::Pmedian,
            count: 6,
            max_count: DEFAULT_MAX_STATIONS,
            kind: StationType::Normal,
            outlets: 8,
            power_kw: None,
            swap_bays: 20,
            swap_minutes: 5.0,
            swap_stock: None,
            forbidden_file: None,
            forbidden_zones: Vec::new(),
            roster_file: None,
            metric: Metric::Euclidean,
            separation: false,
        }
    }
}

/// A configuration that passed validation, plus non-fatal remarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            Error::Config(vec![ConfigIssue {
                field: "<file>".into(),
                message: e.to_string().trim().to_string(),
            }])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn power_kw(&self) -> f64 {
        match (self.stations.power_kw, self.stations.kind) {
            (Some(p), _) => p,
            (None, StationType::Normal) => NORMAL_POWER_KW,
            (None, StationType::Rapid) => RAPID_POWER_KW,
            (None, StationType::Swap) => SWAP_RECHARGE_KW,
        }
    }

    /// Vehicles per charging outlet (or swap bay).
    pub fn vehicles_per_outlet(&self) -> f64 {
        let per = match self.stations.kind {
            StationType::Swap => self.stations.swap_bays,
            _ => self.stations.outlets,
        };
        self.fleet.size as f64 / (self.stations.count * per) as f64
    }

    /// Checks every field; all problems are reported together.
    pub fn validate(&self) -> Result<Validated> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        let mut bad = |field: &str, message: String| {
            issues.push(ConfigIssue {
                field: field.into(),
                message,
            })
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;

        match self.schema_version {
            None => bad("schema_version", "is required".into()),
            Some(SCHEMA_VERSION) => {}
            Some(v) => bad("schema_version", format!("{v} is not supported (expected {SCHEMA_VERSION})")),
        }
        if self.iteration_days < 1 {
            bad("iteration_days", format!("must be at least 1, got {}", self.iteration_days));
        }
        for (f, v) in [
            ("region.width_km", self.region.width_km),
            ("region.height_km", self.region.height_km),
            ("region.hex_diameter_km", self.region.hex_diameter_km),
        ] {
            if !positive(v) {
                bad(f, format!("must be positive, got {v}"));
            }
        }
        match (&self.network.nodes_file, &self.network.edges_file) {
            (None, None) if self.network.nodes < 2 => {
                bad("network.nodes", format!("must be at least 2, got {}", self.network.nodes))
            }
            (Some(_), None) => bad("network.edges_file", "is required with network.nodes_file".into()),
            (None, Some(_)) => bad("network.nodes_file", "is required with network.edges_file".into()),
            _ => {}
        }
        if let Some(c) = &self.network.congestion {
            if c.len() != 24 {
                bad("network.congestion", format!("needs 24 values, got {}", c.len()));
            } else if c.iter().any(|m| !(*m > 0.0 && *m <= 1.0)) {
                bad("network.congestion", "multipliers must lie in (0, 1]".into());
            }
        }
        if self.population.agents < 0 {
            bad("population.agents", format!("must not be negative, got {}", self.population.agents));
        }
        let c = &self.choice;
        for (f, v) in [
            ("choice.beta_cost", c.beta_cost),
            ("choice.beta_wait", c.beta_wait),
            ("choice.beta_ivt", c.beta_ivt),
        ] {
            if !(v.is_finite() && v <= 0.0) {
                bad(f, format!("must be zero or negative, got {v}"));
            }
        }
        if !c.asc.is_finite() {
            bad("choice.asc", "must be finite".into());
        }
        for (f, v) in [
            ("choice.fare_per_km", c.fare_per_km),
            ("choice.other_cost_per_km", c.other_cost_per_km),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(f, format!("must not be negative, got {v}"));
            }
        }
        if !positive(c.other_time_factor) {
            bad("choice.other_time_factor", format!("must be positive, got {}", c.other_time_factor));
        }

        let f = &self.fleet;
        if f.size < 1 {
            bad("fleet.size", format!("must be positive, got {}", f.size));
        }
        if f.seats < 1 {
            bad("fleet.seats", format!("must be positive, got {}", f.seats));
        }
        for (name, v) in [
            ("fleet.battery_kwh", f.battery_kwh),
            ("fleet.consumption_kwh_per_km", f.consumption_kwh_per_km),
        ] {
            if !positive(v) {
                bad(name, format!("must be positive, got {v}"));
            }
        }
        if let Some(h) = &f.consumption_hourly {
            if h.len() != 24 || h.iter().any(|m| !positive(*m)) {
                bad("fleet.consumption_hourly", "needs 24 positive multipliers".into());
            }
        }
        if !(0.0..1.0).contains(&f.soc_trigger) {
            bad("fleet.soc_trigger", format!("must lie in [0, 1), got {}", f.soc_trigger));
        }
        if !(f.reserve_kwh.is_finite() && f.reserve_kwh >= 0.0 && f.reserve_kwh < f.battery_kwh) {
            bad("fleet.reserve_kwh", format!("must lie in [0, battery_kwh), got {}", f.reserve_kwh));
        }
        if let Some(d) = &f.depots {
            if d.is_empty() {
                bad("fleet.depots", "needs at least one depot".into());
            }
            if let Ok(region) = Rect::with_size(self.region.width_km, self.region.height_km) {
                for (i, p) in d.iter().enumerate() {
                    if !region.contains(Point::new(p[0], p[1])) {
                        bad(&format!("fleet.depots[{i}]"), "lies outside the region".into());
                    }
                }
            }
        }

        let d = &self.dispatch;
        for (name, v) in [
            ("dispatch.detour_floor_min", d.detour_floor_min),
            ("dispatch.detour_fraction", d.detour_fraction),
            ("dispatch.rideshare_radius_min", d.rideshare_radius_min),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(name, format!("must not be negative, got {v}"));
            }
        }
        if d.max_plan_stops < 2 {
            bad("dispatch.max_plan_stops", format!("must be at least 2, got {}", d.max_plan_stops));
        }
        if !(d.max_hours.is_finite() && d.max_hours >= 24.0) {
            bad("dispatch.max_hours", format!("must be at least 24, got {}", d.max_hours));
        }

        let s = &self.stations;
        if s.strategy != Strategy::Roster {
            if s.count < 1 {
                bad("stations.count", format!("must be positive, got {}", s.count));
            }
            if s.count > s.max_count {
                bad(
                    "stations.count",
                    format!("{} exceeds stations.max_count = {}", s.count, s.max_count),
                );
            }
        } else if s.roster_file.is_none() {
            bad("stations.roster_file", "is required with strategy = \"roster\"".into());
        }
        if s.max_count > DEFAULT_MAX_STATIONS {
            warnings.push(format!(
                "stations.max_count = {} lifts the usual cap of {DEFAULT_MAX_STATIONS} stations",
                s.max_count
            ));
        }
        match s.kind {
            StationType::Swap => {
                if s.swap_bays < 1 {
                    bad("stations.swap_bays", format!("must be positive, got {}", s.swap_bays));
                }
                if !positive(s.swap_minutes) {
                    bad("stations.swap_minutes", format!("must be positive, got {}", s.swap_minutes));
                }
                if let Some(n) = s.swap_stock {
                    if n < 1 {
                        bad("stations.swap_stock", format!("must be positive when given, got {n}"));
                    }
                }
            }
            _ => {
                if s.outlets < 1 {
                    bad("stations.outlets", format!("must be positive, got {}", s.outlets));
                }
            }
        }
        if let Some(p) = s.power_kw {
            if !positive(p) {
                bad("stations.power_kw", format!("must be positive, got {p}"));
            }
        }
        for (i, z) in s.forbidden_zones.iter().enumerate() {
            if !(z[0] < z[2] && z[1] < z[3]) {
                bad(&format!("stations.forbidden_zones[{i}]"), "needs x0 < x1 and y0 < y1".into());
            }
        }
        let has_forbidden = s.forbidden_file.is_some() || !s.forbidden_zones.is_empty();
        if s.strategy == Strategy::PmedianConstrained && !has_forbidden {
            warnings.push("pmedian_constrained without forbidden cells behaves like pmedian".into());
        }
        if s.separation && s.strategy != Strategy::Mclp {
            warnings.push("stations.separation only applies to strategy = \"mclp\"".into());
        }
        if f.unlimited_range && s.kind == StationType::Swap {
            warnings.push("an unlimited-range fleet never swaps".into());
        }

        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let mut config = self.clone();
        config.stations.power_kw = Some(self.power_kw());
        Ok(Validated { config, warnings })
    }

    /// Copy with one dotted key replaced, e.g. `stations.outlets`.
    pub fn with_override(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::InvalidInput(format!("{key} does not name a setting")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value);
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let mut cfg: ScenarioConfig = root.try_into().map_err(|e: toml::de::Error| {
            Error::Config(vec![ConfigIssue {
                field: key.into(),
                message: e.to_string().trim().to_string(),
            }])
        })?;
        cfg.base_dir = self.base_dir.clone();
        Ok(cfg)
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let mut consumption = ConsumptionModel::new(self.fleet.consumption_kwh_per_km)?;
        if let Some(h) = &self.fleet.consumption_hourly {
            let arr: [f64; 24] = h
                .as_slice()
                .try_into()
                .map_err(|_| Error::InvalidInput("fleet.consumption_hourly needs 24 values".into()))?;
            consumption = consumption.with_hourly(arr)?;
        }
        Ok(SimParams {
            fleet_size: self.fleet.size as usize,
            battery_kwh: self.fleet.battery_kwh,
            soc_trigger: self.fleet.soc_trigger,
            dispatch: DispatchParams {
                seats: self.fleet.seats as u32,
                detour_floor_min: self.dispatch.detour_floor_min,
                detour_fraction: self.dispatch.detour_fraction,
                rideshare: self.dispatch.rideshare,
                rideshare_radius_min: self.dispatch.rideshare_radius_min,
                max_stops: self.dispatch.max_plan_stops as usize,
            },
            energy: EnergyRule {
                consumption,
                reserve_kwh: self.fleet.reserve_kwh,
                unlimited: self.fleet.unlimited_range,
            },
            swap_ticks: from_minutes(self.stations.swap_minutes),
            stock: match self.stations.swap_stock {
                None => StockPolicy::OnDemand,
                Some(n) => StockPolicy::Fixed(n as u32),
            },
            max_time: from_minutes(self.dispatch.max_hours * 60.0),
            other_time_factor: self.choice.other_time_factor,
        })
    }

    pub fn choice_model(&self, cells: usize) -> ChoiceModel {
        let mut m = ChoiceModel::new(cells);
        m.beta_cost = self.choice.beta_cost;
        m.beta_wait = self.choice.beta_wait;
        m.beta_ivt = self.choice.beta_ivt;
        m.asc = self.choice.asc;
        m.fare_per_km = self.choice.fare_per_km;
        m.other_cost_per_km = self.choice.other_cost_per_km;
        m.other_time_factor = self.choice.other_time_factor;
        m
    }

    /// Station style for rosters built from this configuration.
    pub fn station_style(&self) -> (StationKind, u32, f64) {
        match self.stations.kind {
            StationType::Swap => (StationKind::Swap, self.stations.swap_bays as u32, self.power_kw()),
            _ => (StationKind::Charge, self.stations.outlets as u32, self.power_kw()),
        }
    }

    /// Roster on `cells` styled by this configuration.
    pub fn roster_for(&self, cells: &[CellId]) -> Vec<StationSpec> {
        let (kind, n, power) = self.station_style();
        cells
            .iter()
            .enumerate()
            .map(|(i, &cell_id)| StationSpec {
                station_id: i,
                kind,
                cell_id,
                outlets_or_bays: n,
                power_kw: power,
            })
            .collect()
    }

    /// Copy whose energy-side settings are reset, so that configurations
    /// differing only in those share a base case and placement.
    fn placement_view(&self) -> Self {
        let mut c = self.clone();
        let d = ScenarioConfig::default();
        c.name = d.name;
        c.fleet.battery_kwh = d.fleet.battery_kwh;
        c.fleet.consumption_kwh_per_km = d.fleet.consumption_kwh_per_km;
        c.fleet.consumption_hourly = None;
        c.fleet.soc_trigger = d.fleet.soc_trigger;
        c.fleet.reserve_kwh = d.fleet.reserve_kwh;
        c.fleet.unlimited_range = false;
        c.stations.kind = d.stations.kind;
        c.stations.outlets = d.stations.outlets;
        c.stations.power_kw = None;
        c.stations.swap_bays = d.stations.swap_bays;
        c.stations.swap_minutes = d.stations.swap_minutes;
        c.stations.swap_stock = None;
        c
    }

    fn preparation_view(&self) -> String {
        let v = (
            self.seed,
            &self.region,
            &self.network,
            &self.population,
            &self.fleet.depots,
        );
        format!("{v:?}")
    }
}

/// Network, population and fixed random draws shared by every run of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: HexGrid,
    pub network: Network,
    pub table: TravelTable,
    pub agents: Vec<Agent>,
    pub trips: Vec<TripRequest>,
    pub uniforms: Vec<f64>,
    pub depots: Vec<NodeId>,
    pub forbidden: BTreeSet<CellId>,
}

impl Prepared {
    pub fn world<'a>(&'a self, stations: &'a [StationSite]) -> World<'a> {
        World {
            network: &self.network,
            table: &self.table,
            grid: &self.grid,
            stations,
            depots: &self.depots,
        }
    }

    /// Roster entries placed on their cell's nearest node.
    pub fn sites(&self, roster: &[StationSpec]) -> Result<Vec<StationSite>> {
        roster
            .iter()
            .map(|s| {
                let c = self.grid.centroid(s.cell_id)?;
                Ok(StationSite {
                    spec: s.clone(),
                    node: self.network.nearest_node(c),
                })
            })
            .collect()
    }
}

fn read_forbidden_file(path: &Path) -> Result<Vec<CellId>> {
    #[derive(Deserialize)]
    struct Row {
        cell_id: CellId,
    }
    let mut out = Vec::new();
    let mut rdr = csv::Reader::from_path(path)?;
    for (i, r) in rdr.deserialize().enumerate() {
        let row: Row = r.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 2,
            message: e.to_string(),
        })?;
        out.push(row.cell_id);
    }
    Ok(out)
}

/// Builds the grid, network, travel table, population and choice draws.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    let cfg = cfg.validate()?.config;
    let region = Rect::with_size(cfg.region.width_km, cfg.region.height_km)?;
    let grid = HexGrid::tessellate(region, cfg.region.hex_diameter_km)?;
    let congestion = match &cfg.network.congestion {
        Some(c) => CongestionProfile::new(
            c.as_slice()
                .try_into()
                .map_err(|_| Error::InvalidInput("network.congestion needs 24 values".into()))?,
        )?,
        None => CongestionProfile::default(),
    };
    let network = match (&cfg.network.nodes_file, &cfg.network.edges_file) {
        (Some(n), Some(e)) => Network::load(&cfg.resolve(n), &cfg.resolve(e), congestion)?,
        _ => Network::build_synthetic(
            rng::sub_seed(cfg.seed, rng::NETWORK),
            cfg.network.nodes as usize,
            region,
        )?
        .with_congestion(congestion),
    };
    if !network.is_strongly_connected() {
        return Err(Error::Config(vec![ConfigIssue {
            field: "network".into(),
            message: "road network is not strongly connected, so some sites are unreachable".into(),
        }]));
    }
    let table = TravelTable::build(&network)?;
    let agents = generate_agents(
        rng::sub_seed(cfg.seed, rng::POPULATION),
        cfg.population.agents as usize,
        &grid,
        &network,
    )?;
    let trips = trip_requests(&agents, &grid, &network, &table);
    let uniforms = rng::choice_uniforms(cfg.seed, trips.len());
    let depot_points: Vec<Point> = match &cfg.fleet.depots {
        Some(d) => d.iter().map(|p| Point::new(p[0], p[1])).collect(),
        None => region.quadrant_centers().to_vec(),
    };
    let depots = depot_points.iter().map(|&p| network.nearest_node(p)).collect();

    let mut forbidden = BTreeSet::new();
    if let Some(f) = &cfg.stations.forbidden_file {
        for c in read_forbidden_file(&cfg.resolve(f))? {
            if c >= grid.len() {
                return Err(Error::Config(vec![ConfigIssue {
                    field: "stations.forbidden_file".into(),
                    message: format!("cell {c} is not on the grid ({} cells)", grid.len()),
                }]));
            }
            forbidden.insert(c);
        }
    }
    for z in &cfg.stations.forbidden_zones {
        for (c, p) in grid.centroids().into_iter().enumerate() {
            if p.x >= z[0] && p.x <= z[2] && p.y >= z[1] && p.y <= z[3] {
                forbidden.insert(c);
            }
        }
    }
    Ok(Prepared {
        grid,
        network,
        table,
        agents,
        trips,
        uniforms,
        depots,
        forbidden,
    })
}

/// Runs the iteration loop for `cfg` with the given station roster.
pub fn simulate(cfg: &ScenarioConfig, prepared: &Prepared, roster: &[StationSpec]) -> Result<IterationResult> {
    let cfg = cfg.validate()?.config;
    let params = cfg.sim_params()?;
    let sites = prepared.sites(roster)?;
    let mut model = cfg.choice_model(prepared.grid.len());
    run_iterations(
        prepared.world(&sites),
        &params,
        &prepared.agents,
        &prepared.trips,
        &mut model,
        &prepared.uniforms,
        cfg.iteration_days as usize,
    )
}

/// Pick-up and drop-off counts per cell from the unlimited-range base case.
pub fn base_case_field(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<(DemandField, IterationResult)> {
    let mut base = cfg.clone();
    base.fleet.unlimited_range = true;
    let result = simulate(&base, prepared, &[])?;
    let mut points = Vec::new();
    for r in result.log.requests.iter().filter(|r| r.served()) {
        points.push(prepared.network.node(r.origin));
        points.push(prepared.network.node(r.destination));
    }
    let field = aggregate_demand(&prepared.grid, &points, Outside::Drop)?;
    Ok((field, result))
}

/// Solved placement and the roster built from it.
#[derive(Debug, Clone)]
pub struct Placement {
    pub field: DemandField,
    pub solution: PlacementSolution,
    pub roster: Vec<StationSpec>,
}

/// Placement model for `cfg` over `field`.
pub fn placement_spec(cfg: &ScenarioConfig, prepared: &Prepared, field: &DemandField) -> Result<PlacementSpec> {
    let p = cfg.stations.count as usize;
    let spec = match cfg.stations.strategy {
        Strategy::Mclp => {
            let mut s = McLpSpec::new(field, &prepared.grid, p);
            s.enforce_separation = cfg.stations.separation;
            PlacementSpec::Mclp(s)
        }
        Strategy::Pmedian | Strategy::PmedianConstrained => {
            let cells: Vec<CellId> = (0..prepared.grid.len()).collect();
            let metric = match cfg.stations.metric {
                Metric::Euclidean => DistanceMetric::Euclidean,
                Metric::Network => DistanceMetric::Network(&prepared.network),
            };
            let d = centroid_distances(&prepared.grid, &cells, metric)?;
            let mut s = PMedianSpec::new(field, d, p);
            if cfg.stations.strategy == Strategy::PmedianConstrained {
                s = s.with_forbidden(prepared.forbidden.iter().copied());
            }
            PlacementSpec::PMedian(s)
        }
        Strategy::Roster => {
            return Err(Error::InvalidInput(
                "strategy = \"roster\" reads stations from a file instead of solving a placement".into(),
            ))
        }
    };
    Ok(spec)
}

pub fn place(cfg: &ScenarioConfig, prepared: &Prepared) -> Result<Placement> {
    let (field, _) = base_case_field(cfg, prepared)?;
    let solution = placement_spec(cfg, prepared, &field)?.solve()?;
    if solution.status != SolveStatus::Optimal {
        return Err(Error::InvalidInput(format!(
            "no feasible placement of {} stations under the {:?} strategy",
            cfg.stations.count, cfg.stations.strategy
        )));
    }
    let roster = cfg.roster_for(&solution.selected);
    Ok(Placement {
        field,
        solution,
        roster,
    })
}

pub fn load_roster(path: &Path) -> Result<Vec<StationSpec>> {
    read_roster(File::open(path)?, path)
}

/// Rejects rosters that name unknown cells or, under the constrained
/// strategy, forbidden ones.
pub fn check_roster(cfg: &ScenarioConfig, prepared: &Prepared, roster: &[StationSpec]) -> Result<()> {
    let mut issues = Vec::new();
    for s in roster {
        if s.cell_id >= prepared.grid.len() {
            issues.push(ConfigIssue {
                field: "stations.roster".into(),
                message: format!("station {} sits on unknown cell {}", s.station_id, s.cell_id),
            });
        } else if cfg.stations.strategy == Strategy::PmedianConstrained && prepared.forbidden.contains(&s.cell_id) {
            issues.push(ConfigIssue {
                field: "stations.roster".into(),
                message: format!("station {} sits on forbidden cell {}", s.station_id, s.cell_id),
            });
        }
    }
    if cfg.fleet.unlimited_range || !roster.is_empty() {
        if issues.is_empty() {
            return Ok(());
        }
    } else {
        issues.push(ConfigIssue {
            field: "stations".into(),
            message: "a limited-range fleet needs at least one station".into(),
        });
    }
    Err(Error::Config(issues))
}

/// Roster from `--roster`, the configured file, or a fresh placement.
pub fn resolve_roster(
    cfg: &ScenarioConfig,
    prepared: &Prepared,
    roster_path: Option<&Path>,
) -> Result<(Vec<StationSpec>, Option<Placement>)> {
    let (roster, placement) = match roster_path {
        Some(p) => (load_roster(p)?, None),
        None => match (&cfg.stations.roster_file, cfg.stations.strategy) {
            (Some(p), Strategy::Roster) => (load_roster(&cfg.resolve(p))?, None),
            _ => {
                let pl = place(cfg, prepared)?;
                (pl.roster.clone(), Some(pl))
            }
        },
    };
    check_roster(cfg, prepared, &roster)?;
    Ok((roster, placement))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_placement(dir: &Path, prepared: &Prepared, placement: &Placement) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_roster(&placement.roster, create(dir, "roster.csv")?)?;
    placement.solution.write_csv(&prepared.grid, create(dir, "placement.csv")?)?;
    placement.field.write_csv(&prepared.grid, create(dir, "demand_field.csv")?)?;
    let mut s = create(dir, "placement_summary.txt")?;
    writeln!(s, "status      {:?}", placement.solution.status)?;
    writeln!(s, "objective   {:.6}", placement.solution.objective)?;
    writeln!(s, "stations    {}", placement.solution.selected.len())?;
    writeln!(s, "cells       {:?}", placement.solution.selected)?;
    writeln!(s, "demand      {}", placement.field.total())?;
    writeln!(s, "bb_nodes    {}", placement.solution.nodes)?;
    s.flush()?;
    Ok(())
}

/// Writes the day bundle, report, profiles and convergence trace.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, roster: &[StationSpec], result: &IterationResult) -> Result<()> {
    result.log.write_bundle(dir)?;
    write_roster(roster, create(dir, "roster.csv")?)?;
    metrics::write_reports_csv(&[(cfg.name.clone(), result.report.clone())], create(dir, "report.csv")?)?;
    result.report.write_hourly_csv(create(dir, "hourly.csv")?)?;
    result.report.write_station_csv(create(dir, "station_visits.csv")?)?;
    let mut t = create(dir, "report.txt")?;
    writeln!(t, "scenario               {}", cfg.name)?;
    writeln!(t, "vehicles_per_outlet    {:>14.3}", cfg.vehicles_per_outlet())?;
    if let Some(d) = &result.log.diagnostic {
        writeln!(t, "diagnostic             {d}")?;
    }
    write!(t, "{}", result.report.to_text())?;
    t.flush()?;
    let mut w = csv::Writer::from_writer(create(dir, "trace.csv")?);
    w.write_record(["day", "saev_trips", "share", "served", "mean_wait_min"])?;
    for d in &result.trace {
        w.write_record([
            d.day.to_string(),
            d.saev_trips.to_string(),
            format!("{:.6}", d.share),
            d.served.to_string(),
            format!("{:.6}", d.mean_wait_min),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn apply_seed(cfg: &ScenarioConfig, seed: Option<u64>) -> ScenarioConfig {
    let mut c = cfg.clone();
    if let Some(s) = seed {
        c.seed = s;
    }
    c
}

fn report_warnings(v: &Validated) {
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn cli_place(cfg: &ScenarioConfig, seed: Option<u64>, out: &Path) -> Result<Placement> {
    let cfg = apply_seed(cfg, seed);
    report_warnings(&cfg.validate()?);
    let prepared = prepare(&cfg)?;
    let placement = place(&cfg, &prepared)?;
    write_placement(out, &prepared, &placement)?;
    Ok(placement)
}

pub fn cli_run(
    cfg: &ScenarioConfig,
    seed: Option<u64>,
    roster: Option<&Path>,
    out: &Path,
) -> Result<IterationResult> {
    let cfg = apply_seed(cfg, seed);
    report_warnings(&cfg.validate()?);
    let prepared = prepare(&cfg)?;
    let (roster, placement) = resolve_roster(&cfg, &prepared, roster)?;
    let result = simulate(&cfg, &prepared, &roster)?;
    std::fs::create_dir_all(out)?;
    if let Some(p) = &placement {
        write_placement(&out.join("placement"), &prepared, p)?;
    }
    write_run(out, &cfg, &roster, &result)?;
    Ok(result)
}

/// Cartesian product of value lists over dotted config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

fn parse_scalar(s: &str) -> toml::Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = s.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(s.to_string())
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepGrid {
    /// Outlets per station from 40 to 120 in steps of 10.
    pub fn default_outlets() -> Self {
        SweepGrid {
            axes: vec![(
                "stations.outlets".into(),
                (4..=12).map(|k| toml::Value::Integer(10 * k)).collect(),
            )],
        }
    }

    /// Parses `key=a,b,c` or `key=start:end:step`, several axes joined by `;`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("grid axis {part:?} lacks '='")))?;
            let key = key.trim().to_string();
            let vals: Vec<toml::Value> = if values.contains(':') {
                let nums: Vec<&str> = values.split(':').collect();
                if nums.len() != 3 {
                    return Err(Error::InvalidInput(format!("range {values:?} must be start:end:step")));
                }
                let parse = |s: &str| {
                    s.trim()
                        .parse::<i64>()
                        .map_err(|_| Error::InvalidInput(format!("range bound {s:?} is not an integer")))
                };
                let (a, b, step) = (parse(nums[0])?, parse(nums[1])?, parse(nums[2])?);
                if step <= 0 || b < a {
                    return Err(Error::InvalidInput(format!("range {values:?} is empty")));
                }
                (a..=b).step_by(step as usize).map(toml::Value::Integer).collect()
            } else {
                values.split(',').map(parse_scalar).collect()
            };
            if vals.is_empty() {
                return Err(Error::InvalidInput(format!("axis {key} has no values")));
            }
            axes.push((key, vals));
        }
        if axes.is_empty() {
            return Err(Error::InvalidInput("grid has no axes".into()));
        }
        Ok(SweepGrid { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.1.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point as (label, overrides), first axis slowest.
    pub fn points(&self) -> Vec<(String, Vec<(String, toml::Value)>)> {
        let mut out = vec![(String::new(), Vec::new())];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for (label, ov) in &out {
                for v in values {
                    let short = key.rsplit('.').next().unwrap_or(key);
                    let l = if label.is_empty() {
                        format!("{short}={}", value_label(v))
                    } else {
                        format!("{label};{short}={}", value_label(v))
                    };
                    let mut o: Vec<(String, toml::Value)> = ov.clone();
                    o.push((key.clone(), v.clone()));
                    next.push((l, o));
                }
            }
            out = next;
        }
        out
    }
}

/// One run per grid point; rows come back in grid order.
pub fn sweep(
    cfg: &ScenarioConfig,
    grid: &SweepGrid,
    roster_path: Option<&Path>,
) -> Result<Vec<(String, ScenarioConfig, IterationResult)>> {
    let mut points = Vec::new();
    for (label, overrides) in grid.points() {
        let mut c = cfg.clone();
        for (k, v) in overrides {
            c = c.with_override(&k, v)?;
        }
        c.validate()?;
        c.name = label.clone();
        points.push((label, c));
    }

    let mut prep_keys: BTreeMap<String, usize> = BTreeMap::new();
    let mut prep_cfgs = Vec::new();
    for (_, c) in &points {
        let k = c.preparation_view();
        if let std::collections::btree_map::Entry::Vacant(e) = prep_keys.entry(k) {
            e.insert(prep_cfgs.len());
            prep_cfgs.push(c.clone());
        }
    }
    let prepared: Vec<Prepared> = prep_cfgs.par_iter().map(prepare).collect::<Result<_>>()?;
    let prep_of = |c: &ScenarioConfig| prep_keys[&c.preparation_view()];

    let explicit = match roster_path {
        Some(p) => Some(load_roster(p)?),
        None => match (&cfg.stations.roster_file, cfg.stations.strategy) {
            (Some(p), Strategy::Roster) => Some(load_roster(&cfg.resolve(p))?),
            _ => None,
        },
    };
    let restyle = grid.axes.iter().any(|(k, _)| k.starts_with("stations."));

    let mut place_keys: BTreeMap<String, usize> = BTreeMap::new();
    let mut place_cfgs = Vec::new();
    if explicit.is_none() {
        for (_, c) in &points {
            let k = format!("{:?}", c.placement_view());
            if let std::collections::btree_map::Entry::Vacant(e) = place_keys.entry(k) {
                e.insert(place_cfgs.len());
                place_cfgs.push(c.clone());
            }
        }
    }
    let placements: Vec<Placement> = place_cfgs
        .par_iter()
        .map(|c| place(c, &prepared[prep_of(c)]))
        .collect::<Result<_>>()?;

    points
        .into_par_iter()
        .map(|(label, c)| {
            let prep = &prepared[prep_of(&c)];
            let roster = match &explicit {
                Some(r) if restyle => {
                    let cells: Vec<CellId> = r.iter().map(|s| s.cell_id).collect();
                    c.roster_for(&cells)
                }
                Some(r) => r.clone(),
                None => {
                    let pl = &placements[place_keys[&format!("{:?}", c.placement_view())]];
                    c.roster_for(&pl.solution.selected)
                }
            };
            check_roster(&c, prep, &roster)?;
            let result = simulate(&c, prep, &roster)?;
            Ok((label, c, result))
        })
        .collect()
}

pub fn cli_sweep(
    cfg: &ScenarioConfig,
    seed: Option<u64>,
    grid: &SweepGrid,
    roster: Option<&Path>,
    out: &Path,
) -> Result<Vec<(String, MetricsReport)>> {
    let cfg = apply_seed(cfg, seed);
    report_warnings(&cfg.validate()?);
    let rows = sweep(&cfg, grid, roster)?;
    std::fs::create_dir_all(out)?;
    let reports: Vec<(String, MetricsReport)> = rows.iter().map(|(l, _, r)| (l.clone(), r.report.clone())).collect();
    metrics::write_reports_csv(&reports, create(out, "sweep.csv")?)?;
    let mut w = csv::Writer::from_writer(create(out, "sweep_summary.csv")?);
    let mut header: Vec<String> = grid.axes.iter().map(|a| a.0.clone()).collect();
    header.extend(["in_vehicle_pkt_km".into(), "total_queue_min".into(), "total_plugged_min".into()]);
    w.write_record(&header)?;
    for ((_, overrides), (_, _, r)) in grid.points().iter().zip(&rows) {
        let mut row: Vec<String> = overrides.iter().map(|(_, v)| value_label(v)).collect();
        row.push(format!("{:.6}", r.report.in_vehicle_pkt_km));
        row.push(format!("{:.6}", r.report.total_queue_min));
        row.push(format!("{:.6}", r.report.total_plugged_min));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(reports)
}

/// Relative changes of every report row against `baseline`.
pub fn cli_compare(reports: &[PathBuf], baseline: &str, out: Option<&Path>) -> Result<CompareTable> {
    let mut rows = Vec::new();
    for p in reports {
        rows.extend(metrics::read_reports_csv(File::open(p)?)?);
    }
    let table = metrics::compare(&rows, baseline)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        table.write_csv(create(dir, "compare.csv")?)?;
        let mut t = create(dir, "compare.txt")?;
        write!(t, "{}", table.to_text())?;
        t.flush()?;
    }
    Ok(table)
}

/// A single day with the modes chosen from zero expected waits.
pub fn cold_start_day(cfg: &ScenarioConfig, prepared: &Prepared, roster: &[StationSpec]) -> Result<crate::engine::DayLog> {
    let cfg = cfg.validate()?.config;
    let params = cfg.sim_params()?;
    let sites = prepared.sites(roster)?;
    let model = cfg.choice_model(prepared.grid.len());
    let modes: Vec<_> = prepared
        .trips
        .iter()
        .zip(&prepared.uniforms)
        .map(|(t, &u)| crate::demand::choose_mode(t, prepared.agents[t.agent].taste, &model, u))
        .collect();
    run_day(
        prepared.world(&sites),
        &params,
        DayDemand {
            agents: &prepared.agents,
            trips: &prepared.trips,
            modes: &modes,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let v = ScenarioConfig::default().validate().unwrap();
        assert!(v.warnings.is_empty());
        assert_eq!(v.config.stations.power_kw, Some(22.0));
    }

    #[test]
    fn negative_fleet_names_the_field() {
        let cfg = ScenarioConfig::from_toml("schema_version = 1\n[fleet]\nsize = -5\n").unwrap();
        match cfg.validate() {
            Err(Error::Config(issues)) => assert!(issues.iter().any(|i| i.field == "fleet.size")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_missing_version_are_rejected() {
        assert!(ScenarioConfig::from_toml("schema_version = 1\n[fleet]\nsizee = 5\n").is_err());
        let cfg = ScenarioConfig::from_toml("[fleet]\nsize = 5\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vehicles_per_outlet_ratio() {
        let mut cfg = ScenarioConfig::default();
        cfg.fleet.size = 3000;
        cfg.stations.count = 12;
        cfg.stations.outlets = 60;
        assert!((cfg.vehicles_per_outlet() - 4.1667).abs() < 1e-3);
    }

    #[test]
    fn station_cap_needs_explicit_override() {
        let mut cfg = ScenarioConfig::default();
        cfg.stations.count = 13;
        assert!(cfg.validate().is_err());
        cfg.stations.max_count = 13;
        let v = cfg.validate().unwrap();
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn overrides_and_grids() {
        let cfg = ScenarioConfig::default();
        let c = cfg.with_override("stations.outlets", toml::Value::Integer(12)).unwrap();
        assert_eq!(c.stations.outlets, 12);
        assert!(cfg.with_override("stations.outletz", toml::Value::Integer(1)).is_err());
        let g = SweepGrid::parse("stations.outlets=4:8:2;stations.kind=normal,rapid").unwrap();
        assert_eq!(g.len(), 6);
        let pts = g.points();
        assert_eq!(pts[0].0, "outlets=4;kind=normal");
        assert_eq!(pts[5].0, "outlets=8;kind=rapid");
        assert_eq!(SweepGrid::default_outlets().len(), 9);
    }
}
