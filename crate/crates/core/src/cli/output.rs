use std::fmt::Write as _;

use serde::Serialize;

use super::ops::{BrakingRow, Comparison, RunManifest};
use super::Format;
use crate::error::{Error, Result};
use crate::sim::EpisodeReport;

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(manifest: &RunManifest, body: T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&WithManifest { manifest, body })
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Left-aligned first column, right-aligned numbers.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        for (i, c) in cells.enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {c:>w$}", w = widths[i]);
            }
        }
        out.push('\n');
    };
    line(&mut out, &mut header.iter().copied());
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scheduler: &'a str,
    platform: &'a str,
    tasks: usize,
    time: f64,
    makespan: f64,
    energy: f64,
    total_energy: f64,
    r_balance: f64,
    ms: f64,
    gvalue: f64,
    stm_rate: f64,
    utilization: f64,
}

fn summary_cells(r: &SummaryRow<'_>) -> Vec<String> {
    vec![
        format!("{}@{}", r.scheduler, r.platform),
        r.tasks.to_string(),
        format!("{:.4}", r.time),
        format!("{:.4}", r.makespan),
        format!("{:.3}", r.energy),
        format!("{:.3}", r.total_energy),
        format!("{:.6}", r.r_balance),
        format!("{:.2}", r.ms),
        format!("{:.5}", r.stm_rate),
        format!("{:.4}", r.utilization),
    ]
}

const SUMMARY_HEADER: [&str; 10] = [
    "scheduler",
    "tasks",
    "time_s",
    "makespan_s",
    "energy_J",
    "total_J",
    "r_balance",
    "ms",
    "stm_rate",
    "utilization",
];

pub fn run_report(report: &EpisodeReport, manifest: &RunManifest, format: Format) -> Result<String> {
    match format {
        Format::Json => json(manifest, report),
        Format::Csv => csv_rows(&report.records),
        Format::Text => {
            let s = &report.summary;
            let row = SummaryRow {
                scheduler: &report.scheduler,
                platform: &manifest.config.platform.preset,
                tasks: s.tasks,
                time: s.time,
                makespan: s.makespan,
                energy: s.energy,
                total_energy: s.total_energy,
                r_balance: s.r_balance,
                ms: s.ms,
                gvalue: s.gvalue,
                stm_rate: s.stm_rate,
                utilization: s.utilization,
            };
            Ok(table(&SUMMARY_HEADER, &[summary_cells(&row)]))
        }
    }
}

pub fn comparison(cmp: &Comparison, manifest: &RunManifest, format: Format) -> Result<String> {
    let rows: Vec<SummaryRow<'_>> = cmp
        .rows
        .iter()
        .map(|r| SummaryRow {
            scheduler: &r.scheduler,
            platform: &r.platform,
            tasks: r.summary.tasks,
            time: r.summary.time,
            makespan: r.summary.makespan,
            energy: r.summary.energy,
            total_energy: r.summary.total_energy,
            r_balance: r.summary.r_balance,
            ms: r.summary.ms,
            gvalue: r.summary.gvalue,
            stm_rate: r.summary.stm_rate,
            utilization: r.summary.utilization,
        })
        .collect();
    match format {
        Format::Json => json(manifest, cmp),
        Format::Csv => csv_rows(&rows),
        Format::Text => Ok(table(
            &SUMMARY_HEADER,
            &rows.iter().map(summary_cells).collect::<Vec<_>>(),
        )),
    }
}

#[derive(Serialize)]
struct BrakeCsv<'a> {
    scheduler: &'a str,
    trigger_task: u64,
    t_wait: f64,
    t_schedule: f64,
    t_compute: f64,
    t_data: f64,
    t_mech: f64,
    total_braking_time: f64,
    braking_distance: f64,
    camera_range: f64,
    safe: bool,
}

#[derive(Serialize)]
struct BrakeBody<'a> {
    rows: &'a [BrakingRow],
}

pub fn braking(rows: &[BrakingRow], manifest: &RunManifest, format: Format) -> Result<String> {
    match format {
        Format::Json => json(manifest, BrakeBody { rows }),
        Format::Csv => csv_rows(rows.iter().map(|r| BrakeCsv {
            scheduler: &r.scheduler,
            trigger_task: r.report.trigger_task,
            t_wait: r.report.t_wait,
            t_schedule: r.report.t_schedule,
            t_compute: r.report.t_compute,
            t_data: r.report.t_data,
            t_mech: r.report.t_mech,
            total_braking_time: r.report.total_braking_time,
            braking_distance: r.report.braking_distance,
            camera_range: r.camera_range,
            safe: r.safe,
        })),
        Format::Text => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.scheduler.clone(),
                        format!("{:.4}", r.report.t_wait * 1e3),
                        format!("{:.4}", r.report.t_schedule * 1e3),
                        format!("{:.4}", r.report.t_compute * 1e3),
                        format!("{:.1}", (r.report.t_data + r.report.t_mech) * 1e3),
                        format!("{:.4}", r.report.total_braking_time * 1e3),
                        format!("{:.3}", r.report.braking_distance),
                        if r.safe { "safe".into() } else { "UNSAFE".into() },
                    ]
                })
                .collect();
            Ok(table(
                &[
                    "scheduler",
                    "wait_ms",
                    "sched_ms",
                    "compute_ms",
                    "data+mech_ms",
                    "total_ms",
                    "distance_m",
                    "",
                ],
                &cells,
            ))
        }
    }
}
