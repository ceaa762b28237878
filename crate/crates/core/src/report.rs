//! Consolidation across events, derived reports and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::{DispatchTrace, TraceRow};
use crate::error::{FlexError, Result};
use crate::experiment::{events_path, run_info_path, traces_path, RunInfo};
use crate::format::sig6;
use crate::fqi::{model_file_name, QFunction};
use crate::mdp::{Action, HouseId, MINUTES_PER_DAY};
use crate::ranker::{advantage_heatmap, default_axes, write_heatmap_csv};
use crate::sim::{SetpointSchedule, COMFORT_BAND};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedRow {
    pub minute: i32,
    pub median_kw: f64,
    pub std_kw: f64,
    pub target_kw: f64,
    pub events: usize,
}

pub const CONSOLIDATED_CSV_HEADER: [&str; 5] = ["minute", "median_achieved_kw", "std_achieved_kw", "target_kw", "events"];

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Per event-relative minute: median and population std of achieved power, median target.
/// Only minutes present in every trace are kept.
pub fn consolidate(traces: &[DispatchTrace]) -> Result<Vec<ConsolidatedRow>> {
    let first = traces
        .first()
        .ok_or_else(|| FlexError::Contract("nothing to consolidate".into()))?;
    if traces.iter().any(|t| t.duration != first.duration) {
        return Err(FlexError::Contract("traces differ in event duration".into()));
    }
    let lo = traces.iter().map(|t| t.rows.first().map_or(0, |r| r.minute)).max().unwrap_or(0);
    let hi = traces.iter().map(|t| t.rows.last().map_or(-1, |r| r.minute)).min().unwrap_or(-1);
    let by_minute: Vec<BTreeMap<i32, &TraceRow>> =
        traces.iter().map(|t| t.rows.iter().map(|r| (r.minute, r)).collect()).collect();
    let mut out = Vec::new();
    for m in lo..=hi {
        let rows: Option<Vec<&TraceRow>> = by_minute.iter().map(|t| t.get(&m).copied()).collect();
        let Some(rows) = rows else { continue };
        let mut achieved: Vec<f64> = rows.iter().map(|r| r.achieved_kw).collect();
        let mut target: Vec<f64> = rows.iter().map(|r| r.target_kw).collect();
        let std_kw = population_std(&achieved);
        out.push(ConsolidatedRow {
            minute: m,
            median_kw: median(&mut achieved),
            std_kw,
            target_kw: median(&mut target),
            events: rows.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub event_id: u32,
    pub day: u32,
    pub start_minute: u64,
    pub minute_of_day: u32,
    pub direction: String,
    pub duration_min: u32,
    pub baseline_kw: f64,
    pub amplitude_kw: f64,
    pub flexible_kw: f64,
    pub mean_flexible_kw: f64,
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<std::result::Result<Vec<EventRow>, _>>()?)
}

#[derive(Debug, Deserialize)]
struct TraceCsvRow {
    event_id: u32,
    minute: i32,
    target_kw: f64,
    achieved_kw: f64,
    house_id: HouseId,
    action: String,
    room_temp: f64,
    #[serde(rename = "override")]
    overridden: u8,
}

/// Reads traces back; setpoints come from the house schedules.
pub fn read_traces(path: &Path, events: &[EventRow], info: &RunInfo) -> Result<Vec<DispatchTrace>> {
    let schedules: BTreeMap<HouseId, SetpointSchedule> = info
        .houses
        .iter()
        .map(|h| Ok((h.id, SetpointSchedule::new(h.setpoints.clone())?)))
        .collect::<Result<_>>()?;
    let mut traces: BTreeMap<u32, DispatchTrace> = events
        .iter()
        .map(|e| {
            (
                e.event_id,
                DispatchTrace {
                    event_id: e.event_id,
                    houses: Vec::new(),
                    duration: e.duration_min,
                    rows: Vec::new(),
                },
            )
        })
        .collect();
    let starts: BTreeMap<u32, u64> = events.iter().map(|e| (e.event_id, e.start_minute)).collect();
    let mut rd = csv::Reader::from_path(path)?;
    for rec in rd.deserialize::<TraceCsvRow>() {
        let r = rec?;
        let trace = traces
            .get_mut(&r.event_id)
            .ok_or_else(|| FlexError::Contract(format!("trace row for unknown event {}", r.event_id)))?;
        let action = Action::parse(&r.action)
            .ok_or_else(|| FlexError::Contract(format!("bad action {:?} in trace", r.action)))?;
        let abs = starts[&r.event_id] as i64 + i64::from(r.minute);
        let mod_day = abs.rem_euclid(i64::from(MINUTES_PER_DAY)) as u32;
        let sp = schedules
            .get(&r.house_id)
            .ok_or_else(|| FlexError::Contract(format!("trace row for unknown house {}", r.house_id)))?
            .at(mod_day);
        if trace.rows.last().is_none_or(|l| l.minute != r.minute) {
            trace.rows.push(TraceRow {
                minute: r.minute,
                target_kw: r.target_kw,
                achieved_kw: r.achieved_kw,
                actions: Vec::new(),
                room_temps: Vec::new(),
                setpoints: Vec::new(),
                overrides: Vec::new(),
            });
        }
        if !trace.houses.contains(&r.house_id) {
            trace.houses.push(r.house_id);
        }
        let row = trace.rows.last_mut().expect("pushed above");
        row.actions.push(action);
        row.room_temps.push(r.room_temp);
        row.setpoints.push(sp);
        row.overrides.push(r.overridden != 0);
    }
    Ok(traces.into_values().collect())
}

/// Largest distance beyond the comfort band over the event minutes of `trace`, °C.
pub fn comfort_excursion(trace: &DispatchTrace) -> f64 {
    trace
        .event_rows()
        .flat_map(|r| r.room_temps.iter().zip(&r.setpoints))
        .map(|(&t, &sp)| (t - (sp + COMFORT_BAND)).max((sp - COMFORT_BAND) - t).max(0.0))
        .fold(0.0, f64::max)
}

pub fn write_consolidated_csv(path: &Path, rows: &[ConsolidatedRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    wr.write_record(CONSOLIDATED_CSV_HEADER)?;
    for r in rows {
        wr.write_record([
            r.minute.to_string(),
            sig6(r.median_kw),
            sig6(r.std_kw),
            sig6(r.target_kw),
            r.events.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub const REQUIRED_ARTIFACTS: [&str; 7] = [
    "config.toml",
    "houses.json",
    "episodes.csv",
    "training_log.csv",
    "events.csv",
    "dispatch_traces.csv",
    "rank_events.csv",
];

pub fn load_run_info(dir: &Path) -> Result<RunInfo> {
    let text = fs::read_to_string(run_info_path(dir))?;
    Ok(serde_json::from_str(&text)?)
}

/// Traces of the most common (direction, duration) pair, which share a target shape.
fn main_group(events: &[EventRow], traces: &[DispatchTrace]) -> Vec<DispatchTrace> {
    let mut groups: BTreeMap<(String, u32), Vec<DispatchTrace>> = BTreeMap::new();
    for (e, t) in events.iter().zip(traces) {
        groups.entry((e.direction.clone(), e.duration_min)).or_default().push(t.clone());
    }
    groups
        .into_iter()
        .max_by_key(|(k, v)| (v.len(), std::cmp::Reverse(k.clone())))
        .map(|(_, v)| v)
        .unwrap_or_default()
}

/// Rewrites `consolidated_response.csv` from the raw traces of a run and returns the
/// number of events it covers.
pub fn consolidate_run(dir: &Path) -> Result<usize> {
    let missing: Vec<String> = ["houses.json", "events.csv", "dispatch_traces.csv"]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(FlexError::MissingArtifacts(missing));
    }
    let info = load_run_info(dir)?;
    let events = read_events(&events_path(dir))?;
    let traces = read_traces(&traces_path(dir), &events, &info)?;
    let main = main_group(&events, &traces);
    write_consolidated_csv(&dir.join("consolidated_response.csv"), &consolidate(&main)?)?;
    Ok(main.len())
}

/// Writes the consolidated response, heatmaps, summary and manifest for a finished run.
pub fn emit_reports(dir: &Path) -> Result<()> {
    let mut missing: Vec<String> = REQUIRED_ARTIFACTS
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(FlexError::MissingArtifacts(missing));
    }
    let info = load_run_info(dir)?;
    if let Some(day) = info.last_model_day {
        for h in &info.houses {
            let rel = format!("models/{}", model_file_name(h.id, day));
            if !dir.join(&rel).is_file() {
                missing.push(rel);
            }
        }
    }
    if !missing.is_empty() {
        return Err(FlexError::MissingArtifacts(missing));
    }

    let events = read_events(&events_path(dir))?;
    let traces = read_traces(&traces_path(dir), &events, &info)?;
    let consolidated_path = dir.join("consolidated_response.csv");
    let mut summary = String::new();
    writeln!(summary, "events: {}", events.len()).expect("string write");
    if traces.is_empty() {
        if consolidated_path.exists() {
            fs::remove_file(&consolidated_path)?;
        }
        writeln!(summary, "no events were run; consolidated_response.csv not written").expect("string write");
    } else {
        write_consolidated_csv(&consolidated_path, &consolidate(&main_group(&events, &traces))?)?;
        writeln!(summary, "event_id,day,direction,amplitude_kw,mae_kw,mae_frac,overrides,max_excursion_c")
            .expect("string write");
        let mut maes = Vec::new();
        let mut overrides = 0;
        let mut worst = 0.0f64;
        for (e, t) in events.iter().zip(&traces) {
            let mae = t.mae();
            let frac = if e.amplitude_kw > 0.0 { mae / e.amplitude_kw } else { f64::NAN };
            let exc = comfort_excursion(t);
            overrides += t.override_count();
            worst = worst.max(exc);
            maes.push(mae);
            writeln!(
                summary,
                "{},{},{},{},{},{},{},{}",
                e.event_id,
                e.day,
                e.direction,
                sig6(e.amplitude_kw),
                sig6(mae),
                sig6(frac),
                t.override_count(),
                sig6(exc)
            )
            .expect("string write");
        }
        writeln!(summary, "mean_mae_kw: {}", sig6(maes.iter().sum::<f64>() / maes.len() as f64)).expect("string write");
        writeln!(summary, "override_count: {overrides}").expect("string write");
        writeln!(summary, "max_comfort_excursion_c: {}", sig6(worst)).expect("string write");
    }

    if let Some(day) = info.last_model_day {
        for h in &info.houses {
            let q = QFunction::load(&dir.join("models").join(model_file_name(h.id, day)))?;
            let schedule = SetpointSchedule::new(h.setpoints.clone())?;
            let (minutes, temps) = default_axes(&schedule);
            let grid = advantage_heatmap(&q, info.history_k, info.heatmap_outdoor_c, &schedule, &minutes, &temps)?;
            write_heatmap_csv(BufWriter::new(File::create(dir.join(format!("heatmap_{}.csv", h.id)))?), &grid)?;
        }
        writeln!(summary, "heatmaps: {} (models of day {day})", info.houses.len()).expect("string write");
    } else {
        writeln!(summary, "heatmaps: 0 (no evaluation days)").expect("string write");
    }
    fs::write(dir.join("summary.txt"), summary)?;
    write_manifest(dir, &info)?;
    Ok(())
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub assumptions: Vec<String>,
    /// Relative path → sha256 hex.
    pub files: BTreeMap<String, String>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root).map(|p| p != Path::new(MANIFEST_FILE)).unwrap_or(false) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn write_manifest(dir: &Path, info: &RunInfo) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect_files(dir, dir, &mut paths)?;
    let mut files = BTreeMap::new();
    for p in paths {
        let rel = p
            .strip_prefix(dir)
            .expect("collected under dir")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.insert(rel, sha256_file(&p)?);
    }
    let manifest = Manifest {
        seed: info.seed,
        assumptions: vec![
            "event amplitude defaults to half the mean flexible capacity over the previous hour".into(),
            "event baseline is the mean aggregate power over the previous hour".into(),
            "default events start 10:00 and 15:00, upward, 40 minutes, 10-minute half period".into(),
            "all simulated days are treated alike (no weekends)".into(),
        ],
        files,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Rebuilds the per-event MAE table straight from the trace CSV.
pub fn mae_from_trace_csv(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut seen: BTreeMap<(u32, i32), (f64, f64)> = BTreeMap::new();
    for rec in rd.deserialize::<TraceCsvRow>() {
        let r = rec?;
        if r.minute >= 0 {
            seen.insert((r.event_id, r.minute), (r.target_kw, r.achieved_kw));
        }
    }
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for ((e, _), (t, a)) in seen {
        let s = acc.entry(e).or_default();
        s.0 += (t - a).abs();
        s.1 += 1;
    }
    Ok(acc.into_iter().map(|(e, (s, n))| (e, s / n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(id: u32, achieved: &[f64]) -> DispatchTrace {
        DispatchTrace {
            event_id: id,
            houses: vec![1],
            duration: achieved.len() as u32,
            rows: achieved
                .iter()
                .enumerate()
                .map(|(m, &a)| TraceRow {
                    minute: m as i32,
                    target_kw: 5.0,
                    achieved_kw: a,
                    actions: vec![Action::On],
                    room_temps: vec![20.0],
                    setpoints: vec![20.0],
                    overrides: vec![false],
                })
                .collect(),
        }
    }

    #[test]
    fn single_trace_is_its_own_median() {
        let c = consolidate(&[trace(0, &[1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(c.iter().map(|r| r.median_kw).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!(c.iter().all(|r| r.std_kw == 0.0 && r.events == 1));
    }

    #[test]
    fn median_and_std_of_three() {
        let c = consolidate(&[trace(0, &[2.0]), trace(1, &[4.0]), trace(2, &[9.0])]).unwrap();
        assert_eq!(c[0].median_kw, 4.0);
        let mean = 5.0f64;
        let std = (((2.0 - mean).powi(2) + (4.0 - mean).powi(2) + (9.0 - mean).powi(2)) / 3.0f64).sqrt();
        assert!((c[0].std_kw - std).abs() < 1e-12);
        assert!((c[0].std_kw - 2.944).abs() < 5e-4);
    }

    #[test]
    fn duplication_keeps_median() {
        let base = [trace(0, &[1.0, 7.0]), trace(1, &[3.0, 2.0]), trace(2, &[8.0, 4.0])];
        let mut doubled = base.to_vec();
        doubled.extend(base.iter().cloned());
        let a = consolidate(&base).unwrap();
        let b = consolidate(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.median_kw, y.median_kw);
        }
    }

    #[test]
    fn empty_or_mismatched_traces_are_rejected() {
        assert!(consolidate(&[]).is_err());
        assert!(consolidate(&[trace(0, &[1.0]), trace(1, &[1.0, 2.0])]).is_err());
    }

    #[test]
    fn missing_artifacts_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), "").unwrap();
        match emit_reports(dir.path()) {
            Err(FlexError::MissingArtifacts(list)) => {
                assert_eq!(list.len(), REQUIRED_ARTIFACTS.len() - 1);
                assert!(list.contains(&"dispatch_traces.csv".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn median_within_range(values in proptest::collection::vec(proptest::collection::vec(0.0f64..20.0, 3), 1..9)) {
            let traces: Vec<DispatchTrace> = values.iter().enumerate().map(|(i, v)| trace(i as u32, v)).collect();
            let c = consolidate(&traces).unwrap();
            for (m, row) in c.iter().enumerate() {
                let lo = values.iter().map(|v| v[m]).fold(f64::INFINITY, f64::min);
                let hi = values.iter().map(|v| v[m]).fold(f64::NEG_INFINITY, f64::max);
                proptest::prop_assert!(row.median_kw >= lo && row.median_kw <= hi);
            }
        }
    }
}
