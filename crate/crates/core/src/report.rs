//! Files written by `run` and `sweep`: metrics.csv, metadata.json, per-node
//! energy, traces and SVG charts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use crate::config::Protocol;
use crate::energy::EnergyMeter;
use crate::error::{Result, SimError};
use crate::metrics::RunMetrics;
use crate::network::TraceRecord;

pub const METRICS_HEADER: [&str; 13] = [
    "protocol",
    "nodes",
    "area_m",
    "duration_s",
    "seed",
    "pdr",
    "ro",
    "throughput_kbps",
    "e_tx_j",
    "e_rx_j",
    "e_idle_j",
    "e_over_j",
    "avg_remaining_j",
];

/// Create `dir`, refusing one that already has contents unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(SimError::Argument(format!("{} exists and is not a directory", dir.display())));
        }
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(SimError::Argument(format!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics<W: Write>(w: W, rows: &[RunMetrics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for r in rows {
        out.write_record([
            r.protocol.name().to_string(),
            r.nodes.to_string(),
            r.area_m.clone(),
            r.duration_s.to_string(),
            r.seed.map_or_else(|| "avg".to_string(), |s| s.to_string()),
            opt(r.pdr),
            opt(r.ro),
            r.throughput_kbps.to_string(),
            r.e_tx_j.to_string(),
            r.e_rx_j.to_string(),
            r.e_idle_j.to_string(),
            r.e_over_j.to_string(),
            r.avg_remaining_j.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[RunMetrics]) -> Result<()> {
    if rows.is_empty() {
        return Err(SimError::Argument("no metrics rows to write".into()));
    }
    write_metrics(fs::File::create(path)?, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn write_energy<W: Write>(w: W, meters: &[EnergyMeter]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "e_tx_j", "e_rx_j", "e_idle_j", "e_over_j", "remaining_j", "busy_s"])?;
    for (i, m) in meters.iter().enumerate() {
        out.write_record([
            i.to_string(),
            m.e_tx.to_string(),
            m.e_rx.to_string(),
            m.e_idle.to_string(),
            m.e_over.to_string(),
            m.remaining().to_string(),
            m.busy_time.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(w: W, trace: &[TraceRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "event", "node", "frame_uid", "kind", "bytes"])?;
    for r in trace {
        out.write_record([
            format!("{:.9}", r.t),
            r.event.as_str().to_string(),
            r.node.to_string(),
            r.frame_uid.to_string(),
            r.kind.as_str().to_string(),
            r.bytes.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One chart per metric: x = node count, one series per protocol.
pub struct PlotSpec {
    pub file: &'static str,
    pub title: &'static str,
    pub y_label: &'static str,
    pub value: fn(&RunMetrics) -> Option<f64>,
}

pub const PLOTS: [PlotSpec; 8] = [
    PlotSpec {
        file: "idle_energy.svg",
        title: "Idle energy per node",
        y_label: "J",
        value: |m| Some(m.e_idle_j),
    },
    PlotSpec {
        file: "tx_energy.svg",
        title: "Transmit energy per node",
        y_label: "J",
        value: |m| Some(m.e_tx_j),
    },
    PlotSpec {
        file: "rx_energy.svg",
        title: "Receive energy per node",
        y_label: "J",
        value: |m| Some(m.e_rx_j),
    },
    PlotSpec {
        file: "overhear_energy.svg",
        title: "Overhearing energy per node",
        y_label: "J",
        value: |m| Some(m.e_over_j),
    },
    PlotSpec {
        file: "remaining_energy.svg",
        title: "Average remaining energy",
        y_label: "J",
        value: |m| Some(m.avg_remaining_j),
    },
    PlotSpec {
        file: "routing_overhead.svg",
        title: "Routing overhead",
        y_label: "control frames per delivered packet",
        value: |m| m.ro,
    },
    PlotSpec {
        file: "pdr.svg",
        title: "Packet delivery ratio",
        y_label: "PDR",
        value: |m| m.pdr,
    },
    PlotSpec {
        file: "throughput.svg",
        title: "Throughput",
        y_label: "kbit/s",
        value: |m| Some(m.throughput_kbps),
    },
];

fn series_color(p: Protocol) -> RGBColor {
    match p {
        Protocol::Aodv => RGBColor(0x1f, 0x77, 0xb4),
        Protocol::Dsdv => RGBColor(0xd6, 0x27, 0x28),
        Protocol::Dsr => RGBColor(0x2c, 0xa0, 0x2c),
    }
}

fn plot_err<E: std::fmt::Display>(e: E) -> SimError {
    SimError::Io(std::io::Error::other(e.to_string()))
}

fn draw_chart(path: &Path, spec: &PlotSpec, averages: &[RunMetrics]) -> Result<()> {
    let mut protocols: Vec<Protocol> = averages.iter().map(|m| m.protocol).collect();
    protocols.dedup();
    let pts: Vec<(Protocol, f64, f64)> = averages
        .iter()
        .filter_map(|m| (spec.value)(m).map(|v| (m.protocol, m.nodes as f64, v)))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(_, x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let xpad = ((x1 - x0) * 0.05).max(1.0);
    let ypad = ((y1 - y0) * 0.1).max(y1.abs() * 1e-6).max(1e-9);

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(spec.title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((x0 - xpad)..(x1 + xpad), (y0 - ypad)..(y1 + ypad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("nodes")
        .y_desc(spec.y_label)
        .draw()
        .map_err(plot_err)?;
    for p in protocols {
        let color = series_color(p);
        let line: Vec<(f64, f64)> = pts.iter().filter(|q| q.0 == p).map(|q| (q.1, q.2)).collect();
        chart
            .draw_series(LineSeries::new(line.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(p.name().to_uppercase())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(line.into_iter().map(|xy| Circle::new(xy, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Write every chart in [`PLOTS`] under `dir/plots`; returns the files written.
pub fn write_plots(dir: &Path, averages: &[RunMetrics]) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    PLOTS
        .iter()
        .map(|spec| {
            let path = plots.join(spec.file);
            draw_chart(&path, spec, averages)?;
            Ok(path)
        })
        .collect()
}
