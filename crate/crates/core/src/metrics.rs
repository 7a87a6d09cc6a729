//! Service KPIs, hourly profiles and report comparison.

use std::fmt::Write as _;
use std::io::Write;

use crate::energy::StationKind;
use crate::engine::DayLog;
use crate::error::Result;
use crate::time::{split_by_hour, to_minutes, Tick, DAY_TICKS, TICKS_PER_HOUR};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub trips_total: usize,
    pub saev_trips: usize,
    pub served: usize,
    pub modal_share_pct: f64,
    pub avg_wait_min: f64,
    pub avg_in_vehicle_min: f64,
    pub avg_detour_min: f64,
    pub fleet_usage_pct: f64,
    pub total_km: f64,
    pub empty_km: f64,
    pub loaded_km: f64,
    pub empty_ratio_pct: f64,
    pub in_vehicle_pkt_km: f64,
    pub direct_pkt_km: f64,
    /// Share of loaded km with exactly 1, 2, ... passengers onboard.
    pub pax_pct: Vec<f64>,
    /// False when no loaded km were driven and `pax_pct` is all zero.
    pub pax_defined: bool,
    pub avg_driven_km: f64,
    pub max_driven_km: f64,
    pub total_plugged_min: f64,
    pub total_queue_min: f64,
    pub extra_batteries: u64,
    pub swaps: u64,
    /// Percent of the fleet in pickup or occupied driving, per hour.
    pub hourly_in_service_pct: [f64; 24],
    pub hourly_plugged_min: [f64; 24],
    pub station_visits: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyProfiles {
    /// Vehicle-hours of pickup or occupied driving in each hour.
    pub in_service_vehicle_hours: [f64; 24],
    pub plugged_min: [f64; 24],
}

fn in_window(t: Tick) -> bool {
    (0..DAY_TICKS).contains(&t)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// In-service and plugged time split over the hours of the day window.
pub fn hourly_profiles(log: &DayLog) -> HourlyProfiles {
    let mut busy = [0i64; 24];
    for l in log.legs.iter().filter(|l| l.purpose.in_use()) {
        split_by_hour(l.depart, l.arrive, &mut busy);
    }
    let mut plugged = [0i64; 24];
    for v in log.visits.iter().filter(|v| v.kind == StationKind::Charge) {
        split_by_hour(v.start, v.end, &mut plugged);
    }
    HourlyProfiles {
        in_service_vehicle_hours: busy.map(|t| t as f64 / TICKS_PER_HOUR as f64),
        plugged_min: plugged.map(to_minutes),
    }
}

/// Completed charge or swap visits per station.
pub fn station_occupancy(log: &DayLog) -> Vec<u64> {
    let mut counts = vec![0u64; log.stations.len()];
    for v in &log.visits {
        counts[v.station] += 1;
    }
    counts
}

pub fn compute(log: &DayLog) -> MetricsReport {
    let reqs: Vec<_> = log
        .requests
        .iter()
        .filter(|r| r.served() && in_window(r.release))
        .collect();
    let served = reqs.len();
    let avg_wait_min = mean(reqs.iter().map(|r| to_minutes(r.wait().unwrap())));
    let avg_in_vehicle_min = mean(reqs.iter().map(|r| to_minutes(r.in_vehicle().unwrap())));
    let avg_detour_min = mean(reqs.iter().map(|r| to_minutes(r.detour().unwrap())));
    let in_vehicle_pkt_km = reqs.iter().map(|r| r.ride_m).sum::<u64>() as f64 / 1000.0;
    let direct_pkt_km = reqs.iter().map(|r| r.direct_m).sum::<u64>() as f64 / 1000.0;

    let seats = log.seats.max(1) as usize;
    let mut by_onboard = vec![0u64; seats];
    let (mut total_m, mut empty_m) = (0u64, 0u64);
    for l in &log.legs {
        total_m += l.meters;
        if l.onboard == 0 {
            empty_m += l.meters;
        } else if let Some(slot) = by_onboard.get_mut(l.onboard as usize - 1) {
            *slot += l.meters;
        }
    }
    let loaded_m = total_m - empty_m;
    let pax_defined = loaded_m > 0;
    let pax_pct = by_onboard
        .iter()
        .map(|&m| if pax_defined { 100.0 * m as f64 / loaded_m as f64 } else { 0.0 })
        .collect();

    let profiles = hourly_profiles(log);
    let fleet = log.fleet_size as f64;
    let busy_hours: f64 = profiles.in_service_vehicle_hours.iter().sum();
    let fleet_usage_pct = if log.fleet_size == 0 {
        0.0
    } else {
        100.0 * busy_hours / (fleet * 24.0)
    };
    let hourly_in_service_pct = profiles
        .in_service_vehicle_hours
        .map(|h| if log.fleet_size == 0 { 0.0 } else { 100.0 * h / fleet });

    let driven: Vec<f64> = log.vehicles.iter().map(|v| v.odometer_m as f64 / 1000.0).collect();
    let queue_ticks: Tick = log
        .visits
        .iter()
        .map(|v| v.start.clamp(0, DAY_TICKS) - v.arrive.clamp(0, DAY_TICKS))
        .sum();

    MetricsReport {
        trips_total: log.trips_total,
        saev_trips: log.saev_trips(),
        served,
        modal_share_pct: if log.trips_total == 0 {
            0.0
        } else {
            100.0 * log.saev_trips() as f64 / log.trips_total as f64
        },
        avg_wait_min,
        avg_in_vehicle_min,
        avg_detour_min,
        fleet_usage_pct,
        total_km: total_m as f64 / 1000.0,
        empty_km: empty_m as f64 / 1000.0,
        loaded_km: loaded_m as f64 / 1000.0,
        empty_ratio_pct: if total_m == 0 {
            0.0
        } else {
            100.0 * empty_m as f64 / total_m as f64
        },
        in_vehicle_pkt_km,
        direct_pkt_km,
        pax_pct,
        pax_defined,
        avg_driven_km: mean(driven.iter().copied()),
        max_driven_km: driven.iter().copied().fold(0.0, f64::max),
        total_plugged_min: profiles.plugged_min.iter().sum(),
        total_queue_min: to_minutes(queue_ticks),
        extra_batteries: log.extra_batteries(),
        swaps: log.vehicles.iter().map(|v| v.swaps as u64).sum(),
        hourly_in_service_pct,
        hourly_plugged_min: profiles.plugged_min,
        station_visits: station_occupancy(log),
    }
}

impl MetricsReport {
    /// Named scalar columns in report order.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("trips_total".to_string(), self.trips_total as f64),
            ("saev_trips".into(), self.saev_trips as f64),
            ("served".into(), self.served as f64),
            ("modal_share_pct".into(), self.modal_share_pct),
            ("avg_wait_min".into(), self.avg_wait_min),
            ("avg_in_vehicle_min".into(), self.avg_in_vehicle_min),
            ("avg_detour_min".into(), self.avg_detour_min),
            ("fleet_usage_pct".into(), self.fleet_usage_pct),
            ("empty_ratio_pct".into(), self.empty_ratio_pct),
            ("in_vehicle_pkt_km".into(), self.in_vehicle_pkt_km),
            ("direct_pkt_km".into(), self.direct_pkt_km),
            ("total_vkt_km".into(), self.total_km),
            ("empty_km".into(), self.empty_km),
            ("loaded_km".into(), self.loaded_km),
        ];
        for (k, p) in self.pax_pct.iter().enumerate() {
            out.push((format!("pax{}_pct", k + 1), *p));
        }
        out.extend([
            ("pax_defined".to_string(), self.pax_defined as u8 as f64),
            ("avg_driven_km".into(), self.avg_driven_km),
            ("max_driven_km".into(), self.max_driven_km),
            ("total_plugged_min".into(), self.total_plugged_min),
            ("total_queue_min".into(), self.total_queue_min),
            ("extra_batteries".into(), self.extra_batteries as f64),
            ("swaps".into(), self.swaps as f64),
        ]);
        out
    }

    /// Value of a named scalar column.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.scalars().into_iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.scalars() {
            let _ = writeln!(s, "{k:<22} {v:>14.3}");
        }
        let _ = writeln!(s, "\nhour  in_service_pct  plugged_min");
        for h in 0..24 {
            let _ = writeln!(
                s,
                "{h:>4}  {:>14.2}  {:>11.1}",
                self.hourly_in_service_pct[h], self.hourly_plugged_min[h]
            );
        }
        let _ = writeln!(s, "\nstation  visits");
        for (i, n) in self.station_visits.iter().enumerate() {
            let _ = writeln!(s, "{i:>7}  {n:>6}");
        }
        s
    }

    pub fn write_hourly_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["hour", "in_service_pct", "plugged_min"])?;
        for h in 0..24 {
            w.write_record([
                h.to_string(),
                format!("{:.6}", self.hourly_in_service_pct[h]),
                format!("{:.6}", self.hourly_plugged_min[h]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_station_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "visits"])?;
        for (i, n) in self.station_visits.iter().enumerate() {
            w.write_record([i.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row per named report, scalar columns only.
pub fn write_reports_csv<W: Write>(reports: &[(String, MetricsReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((_, first)) = reports.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["scenario".to_string()];
    header.extend(first.scalars().into_iter().map(|(k, _)| k));
    w.write_record(&header)?;
    for (name, r) in reports {
        let mut row = vec![name.clone()];
        row.extend(r.scalars().into_iter().map(|(_, v)| format!("{v:.6}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_reports_csv`] as (scenario, columns).
pub fn read_reports_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, Vec<(String, f64)>)>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or_default().to_string();
        let mut cols = Vec::new();
        for (k, v) in header.iter().zip(rec.iter()).skip(1) {
            let x: f64 = v
                .parse()
                .map_err(|_| crate::Error::InvalidInput(format!("column {k} holds {v:?}, not a number")))?;
            cols.push((k.clone(), x));
        }
        out.push((name, cols));
    }
    Ok(out)
}

/// Percent change of every column against the baseline row.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub baseline: String,
    pub columns: Vec<String>,
    pub baseline_values: Vec<f64>,
    /// (scenario, values, relative change in percent). Columns the scenario lacks
    /// hold NaN; the change is `None` then and when the baseline is zero.
    pub rows: Vec<(String, Vec<f64>, Vec<Option<f64>>)>,
}

pub fn relative_change(base: f64, value: f64) -> Option<f64> {
    if base == 0.0 {
        (value == 0.0).then_some(0.0)
    } else {
        Some(100.0 * (value - base) / base.abs())
    }
}

pub fn compare(reports: &[(String, Vec<(String, f64)>)], baseline: &str) -> Result<CompareTable> {
    let (_, base) = reports
        .iter()
        .find(|(n, _)| n == baseline)
        .ok_or_else(|| crate::Error::InvalidInput(format!("no report named {baseline:?}")))?;
    let columns: Vec<String> = base.iter().map(|(k, _)| k.clone()).collect();
    let baseline_values: Vec<f64> = base.iter().map(|(_, v)| *v).collect();
    let mut rows = Vec::new();
    for (name, cols) in reports.iter().filter(|(n, _)| n != baseline) {
        let mut values = Vec::with_capacity(columns.len());
        let mut deltas = Vec::with_capacity(columns.len());
        for (k, b) in columns.iter().zip(&baseline_values) {
            // Reports with fewer seats have fewer PAX columns.
            match cols.iter().find(|(c, _)| c == k) {
                Some((_, v)) => {
                    values.push(*v);
                    deltas.push(relative_change(*b, *v));
                }
                None => {
                    values.push(f64::NAN);
                    deltas.push(None);
                }
            }
        }
        rows.push((name.clone(), values, deltas));
    }
    Ok(CompareTable {
        baseline: baseline.to_string(),
        columns,
        baseline_values,
        rows,
    })
}

/// Convenience wrapper comparing in-memory reports.
pub fn compare_reports(reports: &[(String, MetricsReport)], baseline: &str) -> Result<CompareTable> {
    let rows: Vec<_> = reports.iter().map(|(n, r)| (n.clone(), r.scalars())).collect();
    compare(&rows, baseline)
}

impl CompareTable {
    /// Metric rows; per scenario a value column and a relative change column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string(), self.baseline.clone()];
        for (name, _, _) in &self.rows {
            header.push(name.clone());
            header.push(format!("{name}_change_pct"));
        }
        w.write_record(&header)?;
        for (i, col) in self.columns.iter().enumerate() {
            let mut row = vec![col.clone(), format!("{:.3}", self.baseline_values[i])];
            for (_, values, deltas) in &self.rows {
                row.push(format!("{:.3}", values[i]));
                row.push(deltas[i].map_or("n/a".to_string(), |d| format!("{d:.1}")));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<22} {:>14}", "metric", self.baseline);
        for (name, _, _) in &self.rows {
            let _ = write!(s, " {name:>14} {:>9}", "change");
        }
        s.push('\n');
        for (i, col) in self.columns.iter().enumerate() {
            let _ = write!(s, "{col:<22} {:>14.2}", self.baseline_values[i]);
            for (_, values, deltas) in &self.rows {
                let d = deltas[i].map_or("n/a".to_string(), |d| format!("{d:+.1}%"));
                let _ = write!(s, " {:>14.2} {d:>9}", values[i]);
            }
            s.push('\n');
        }
        s
    }
}
