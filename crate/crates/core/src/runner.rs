//! Executes resolved run configurations: builds the fabric, wires the
//! workload drivers, runs the event loop, and writes one results directory
//! per seed. Every directory embeds the fully-resolved configuration, so a
//! run can be reproduced from its own output.
//!
//! Layout for a preset run under `<out>/<preset>/`:
//!
//! ```text
//! expected.txt                    properties the scenario should exhibit
//! summary.csv                     one row per variant x seed
//! <variant>/seed-<s>/resolved.toml
//! <variant>/seed-<s>/flows.csv
//! <variant>/seed-<s>/counters.csv
//! <variant>/seed-<s>/iterations.csv   (training runs)
//! <variant>/seed-<s>/windows.csv      (drop-sampler runs)
//! plots/*.csv, plots/*.svg        written by `report`, one CSV per curve
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::TensorSpec;
use crate::config::{ConfigError, Preset, RunConfig};
use crate::fabric::Topology;
use crate::metrics::{
    check_conservation, duration_stats, flow_records, port_queue_records, write_flow_csv,
    write_iteration_csv, write_port_queue_csv, FlowRecord, IterationRecord,
};
use crate::net::{run_sim, Net};
use crate::packet::data_queue;
use crate::sim::{EventQueue, RngHub, SimStats, StopWhen};
use crate::transport::bounded::BoundedSpec;
use crate::transport::reliable::ReliableSpec;
use crate::transport::{FlowKind, TagPlan};
use crate::workload::{
    BackgroundGen, Drivers, DropSampler, IncastDriver, TrainDriver, TransportSel,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("packet conservation violated: {0}")]
    Conservation(String),
    #[error("report: {0}")]
    Report(String),
}

/// Everything one seed produced, before anything touches the filesystem.
pub struct SeedRun {
    pub seed: u64,
    pub flows: Vec<FlowRecord>,
    pub iterations: Vec<IterationRecord>,
    /// (drops, sent) per sampler window, when the sampler ran.
    pub windows: Vec<(u64, u64)>,
    pub stats: SimStats,
}

fn write_windows_csv(path: &Path, windows: &[(u64, u64)]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "drops", "sent"])?;
    for (i, (drops, sent)) in windows.iter().enumerate() {
        w.write_record([i.to_string(), drops.to_string(), sent.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one seed's results directory.
pub fn write_seed_dir(cfg: &RunConfig, run: &SeedRun, net: &NetArtifacts, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("resolved.toml"), cfg.to_toml())?;
    write_flow_csv(&dir.join("flows.csv"), &run.flows)?;
    write_port_queue_csv(&dir.join("counters.csv"), &net.ports)?;
    if cfg.workload.mode == "train" {
        write_iteration_csv(&dir.join("iterations.csv"), &run.iterations)?;
    }
    if cfg.sampler.enabled {
        write_windows_csv(&dir.join("windows.csv"), &run.windows)?;
    }
    Ok(())
}

/// Per-port counters captured after the run (kept separate from `SeedRun`
/// so in-memory consumers don't pay for them).
pub struct NetArtifacts {
    pub ports: Vec<crate::metrics::PortQueueRecord>,
}

/// Runs one seed of a configuration: builds the fabric and drivers, drives
/// the event loop to the stop condition, and returns the flow records plus
/// per-port counters. The seed doubles as the path-hash salt, so seeds also
/// steer ECMP placement.
pub fn execute(cfg: &RunConfig, seed: u64) -> Result<(SeedRun, NetArtifacts), RunError> {
    cfg.validate()?;
    let topo = Topology::leaf_spine(cfg.topology.params());
    let mut net = Net::new(topo, cfg.net_config()?, seed);
    let mut q = EventQueue::new();
    let hub = RngHub::new(seed);
    let mut drivers = Drivers::default();
    let mut monitored = Vec::new();

    match cfg.workload.mode.as_str() {
        "none" => {}
        "train" => {
            let spec = cfg.workload.train_spec(&cfg.transport)?;
            let mut train = TrainDriver::new(spec, &net, &hub);
            train.start_iteration(&mut net, &mut q);
            drivers.train = Some(train);
        }
        "incast" => {
            let spec = cfg.workload.incast_spec(&cfg.transport)?;
            let mut incast = IncastDriver::new(spec);
            incast.start(&mut q);
            drivers.incast = Some(incast);
        }
        "pairs" => {
            let hosts = cfg.topology.n_hosts();
            for i in 0..cfg.workload.n_pairs as usize {
                let (src, dst) = (i, hosts / 2 + i);
                let path = net.path_between(src, dst, 1_000 + i as u64);
                let tags =
                    TagPlan::uniform(cfg.workload.tag_class, cfg.workload.tag_important);
                let id = match cfg.transport.selection()? {
                    TransportSel::Bounded => net.open_bounded(
                        &mut q,
                        BoundedSpec {
                            path,
                            tensor: TensorSpec {
                                tensor_id: 1_000 + i as u64,
                                n_gradients: (cfg.workload.pair_bytes as f64
                                    / cfg.workload.bytes_per_gradient as f64)
                                    .ceil() as u32,
                                bytes_per_gradient: cfg.workload.bytes_per_gradient,
                            },
                            bound: cfg.transport.bound,
                            line_rate_bps: net.topo.host_link_bps(src),
                            tags,
                            kind: FlowKind::Bench,
                            rate_cfg: net.cfg.rate,
                        },
                    ),
                    TransportSel::Reliable => net.open_reliable(
                        &mut q,
                        ReliableSpec {
                            path,
                            total_bytes: cfg.workload.pair_bytes,
                            queue: data_queue(cfg.workload.tag_class),
                            kind: FlowKind::Bench,
                            cfg: net.cfg.reliable,
                        },
                    ),
                };
                monitored.push(id);
            }
        }
        other => unreachable!("validate() admits no mode {other:?}"),
    }

    if cfg.background.enabled {
        let mut bg = BackgroundGen::new(cfg.background.spec()?, &net, &hub);
        bg.start(&mut q);
        drivers.background = Some(bg);
    }
    if cfg.sampler.enabled {
        let mut sampler = DropSampler::new(
            crate::sim::SimTime::from_nanos((cfg.sampler.period_us * 1e3).round() as u64),
            crate::sim::SimTime::from_nanos((cfg.sampler.until_us * 1e3).round() as u64),
        );
        sampler.monitored = monitored;
        sampler.start(&mut q);
        drivers.sampler = Some(sampler);
    }

    let stop = cfg.stop();
    let stats = run_sim(&mut net, &mut q, &mut drivers, stop);
    if matches!(stop, StopWhen::Quiet) {
        check_conservation(&net).map_err(RunError::Conservation)?;
    }

    let mut flows = flow_records(&net);
    flows.sort_by_key(|r| r.flow);
    let run = SeedRun {
        seed,
        flows,
        iterations: drivers.train.map(|t| t.iterations_log).unwrap_or_default(),
        windows: drivers.sampler.map(|s| s.windows).unwrap_or_default(),
        stats,
    };
    let arts = NetArtifacts { ports: port_queue_records(&net) };
    Ok((run, arts))
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// One variant x seed line of a run summary. Durations are integer
/// nanoseconds so summaries are byte-stable across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub seed: u64,
    pub flows_total: u64,
    pub flows_done: u64,
    pub timeouts: u64,
    pub drops_selective: u64,
    pub drops_buffer: u64,
    pub retransmit_rounds: u64,
    pub mean_fct_ns: Option<u64>,
    pub p50_fct_ns: Option<u64>,
    pub p95_fct_ns: Option<u64>,
    pub p99_fct_ns: Option<u64>,
    pub max_fct_ns: Option<u64>,
    pub mean_comm_ns: Option<u64>,
    pub end_ns: u64,
}

/// Collapses one seed's records into a summary row. Background flows carry
/// load but are not the measurement, so every aggregate skips them.
pub fn summarize(variant: &str, run: &SeedRun) -> SummaryRow {
    let measured: Vec<&FlowRecord> =
        run.flows.iter().filter(|r| r.kind != "background").collect();
    let fct: Vec<u64> = measured.iter().filter_map(|r| r.fct_ns).collect();
    let stats = duration_stats(&fct);
    let mean_comm = if run.iterations.is_empty() {
        None
    } else {
        Some(run.iterations.iter().map(|r| r.comm_ns).sum::<u64>() / run.iterations.len() as u64)
    };
    SummaryRow {
        variant: variant.to_string(),
        seed: run.seed,
        flows_total: measured.len() as u64,
        flows_done: measured.iter().filter(|r| r.fct_ns.is_some()).count() as u64,
        timeouts: measured.iter().map(|r| r.timeout_count).sum(),
        drops_selective: measured.iter().map(|r| r.drops_selective).sum(),
        drops_buffer: measured.iter().map(|r| r.drops_buffer).sum(),
        retransmit_rounds: measured.iter().map(|r| r.retransmit_rounds).sum(),
        mean_fct_ns: stats.as_ref().map(|s| s.mean_ns),
        p50_fct_ns: stats.as_ref().map(|s| s.p50_ns),
        p95_fct_ns: stats.as_ref().map(|s| s.p95_ns),
        p99_fct_ns: stats.as_ref().map(|s| s.p99_ns),
        max_fct_ns: stats.as_ref().map(|s| s.max_ns),
        mean_comm_ns: mean_comm,
        end_ns: run.stats.end_time.as_nanos(),
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, RunError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Whole runs
// ---------------------------------------------------------------------------

/// Runs every seed of one configuration under `dir` and returns the rows.
pub fn run_variant(cfg: &RunConfig, variant: &str, dir: &Path) -> Result<Vec<SummaryRow>, RunError> {
    let mut rows = Vec::new();
    for &seed in &cfg.run.seeds {
        let (run, arts) = execute(cfg, seed)?;
        write_seed_dir(cfg, &run, &arts, &dir.join(format!("seed-{seed}")))?;
        rows.push(summarize(variant, &run));
    }
    Ok(rows)
}

/// Runs a whole preset under `<out>/<preset>/`, one directory per
/// variant x seed, plus the expected-properties manifest and the summary.
pub fn run_preset(preset: &Preset, out: &Path, seeds: Option<&[u64]>) -> Result<Vec<SummaryRow>, RunError> {
    let root = out.join(preset.name);
    fs::create_dir_all(&root)?;
    fs::write(root.join("expected.txt"), preset.expected.join("\n") + "\n")?;
    let mut rows = Vec::new();
    for (label, cfg) in &preset.variants {
        let mut cfg = cfg.clone();
        if let Some(s) = seeds {
            cfg.run.seeds = s.to_vec();
        }
        rows.extend(run_variant(&cfg, label, &root.join(label))?);
    }
    write_summary_csv(&root.join("summary.csv"), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Reports: plain-text table plus one CSV and one SVG per curve
// ---------------------------------------------------------------------------

/// One named curve: (x, y) points in data coordinates.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e9 {
        format!("{:.2}e9", v / 1e9)
    } else if a >= 1e6 {
        format!("{:.2}e6", v / 1e6)
    } else if a >= 1e3 {
        format!("{:.1}e3", v / 1e3)
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Renders a minimal line chart. No external renderer: the output is a
/// self-contained SVG document.
pub fn render_svg(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<(), RunError> {
    let (w, h) = (720.0, 440.0);
    let (ml, mr, mt, mb) = (80.0, 160.0, 40.0, 60.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(RunError::Report("nothing to plot".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (0.0f64, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        ml + pw / 2.0
    ));
    // Axes and grid.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let gy = mt + ph - f * ph;
        let val = y0 + f * (y1 - y0);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{gy}\" x2=\"{}\" y2=\"{gy}\" stroke=\"#ddd\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            ml + pw,
            ml - 6.0,
            gy + 4.0,
            fmt_tick(val)
        ));
        let gx = ml + f * pw;
        let xv = x0 + f * (x1 - x0);
        svg.push_str(&format!(
            "<text x=\"{gx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            mt + ph + 18.0,
            fmt_tick(xv)
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        ml + pw / 2.0,
        h - 16.0,
        mt + ph / 2.0,
        mt + ph / 2.0
    ));
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let path_d: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(i, (x, y))| {
                format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, sx(*x), sy(*y))
            })
            .collect();
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path_d.join(" ")
        ));
        for (x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(*x),
                sy(*y)
            ));
        }
        let ly = mt + 16.0 * si as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            ml + pw + 10.0,
            ly,
            ml + pw + 26.0,
            ly + 9.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

/// Writes one curve as CSV so readers never need to parse the SVG.
pub fn write_curve_csv(path: &Path, x_name: &str, series: &[Series]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![x_name.to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    w.write_record(&header)?;
    let n = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    for i in 0..n {
        let mut rec = Vec::with_capacity(series.len() + 1);
        let x = series
            .iter()
            .find_map(|s| s.points.get(i).map(|p| p.0))
            .unwrap_or(i as f64);
        rec.push(format!("{x}"));
        for s in series {
            rec.push(s.points.get(i).map(|p| format!("{}", p.1)).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `summary.csv` in `dir`, averages each variant over its seeds,
/// writes `plots/` (paired CSV + SVG per figure), and returns a printable
/// table.
pub fn report(dir: &Path) -> Result<String, RunError> {
    let rows = read_summary_csv(&dir.join("summary.csv"))?;
    if rows.is_empty() {
        return Err(RunError::Report(format!("no rows in {}", dir.join("summary.csv").display())));
    }
    // Preserve first-appearance variant order.
    let mut variants: Vec<String> = Vec::new();
    for r in &rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant.clone());
        }
    }
    struct Agg {
        seeds: u64,
        mean_fct: Option<f64>,
        p99_fct: Option<f64>,
        mean_comm: Option<f64>,
        timeouts: f64,
    }
    let mean_of = |vals: Vec<u64>| -> Option<f64> {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<u64>() as f64 / vals.len() as f64)
        }
    };
    let aggs: Vec<Agg> = variants
        .iter()
        .map(|v| {
            let vr: Vec<&SummaryRow> = rows.iter().filter(|r| &r.variant == v).collect();
            Agg {
                seeds: vr.len() as u64,
                mean_fct: mean_of(vr.iter().filter_map(|r| r.mean_fct_ns).collect()),
                p99_fct: mean_of(vr.iter().filter_map(|r| r.p99_fct_ns).collect()),
                mean_comm: mean_of(vr.iter().filter_map(|r| r.mean_comm_ns).collect()),
                timeouts: vr.iter().map(|r| r.timeouts).sum::<u64>() as f64 / vr.len() as f64,
            }
        })
        .collect();

    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let fct_series = vec![
        Series {
            label: "mean".into(),
            points: aggs
                .iter()
                .enumerate()
                .filter_map(|(i, a)| a.mean_fct.map(|y| (i as f64, y / 1e6)))
                .collect(),
        },
        Series {
            label: "p99".into(),
            points: aggs
                .iter()
                .enumerate()
                .filter_map(|(i, a)| a.p99_fct.map(|y| (i as f64, y / 1e6)))
                .collect(),
        },
    ];
    if fct_series.iter().any(|s| !s.points.is_empty()) {
        write_curve_csv(&plots.join("fct_ms.csv"), "variant_index", &fct_series)?;
        render_svg(
            &plots.join("fct_ms.svg"),
            "Flow completion time by variant",
            "variant index",
            "FCT (ms)",
            &fct_series,
        )?;
    }
    let comm_series = vec![Series {
        label: "mean comm".into(),
        points: aggs
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.mean_comm.map(|y| (i as f64, y / 1e6)))
            .collect(),
    }];
    if !comm_series[0].points.is_empty() {
        write_curve_csv(&plots.join("comm_ms.csv"), "variant_index", &comm_series)?;
        render_svg(
            &plots.join("comm_ms.svg"),
            "Per-iteration communication time",
            "variant index",
            "comm (ms)",
            &comm_series,
        )?;
    }

    let mut table = String::new();
    table.push_str(&format!(
        "{:<28} {:>5} {:>12} {:>12} {:>12} {:>9}\n",
        "variant", "seeds", "mean FCT ms", "p99 FCT ms", "comm ms", "timeouts"
    ));
    let cell = |v: Option<f64>| v.map(|x| format!("{:.3}", x / 1e6)).unwrap_or_else(|| "-".into());
    for (v, a) in variants.iter().zip(&aggs) {
        table.push_str(&format!(
            "{:<28} {:>5} {:>12} {:>12} {:>12} {:>9.1}\n",
            v,
            a.seeds,
            cell(a.mean_fct),
            cell(a.p99_fct),
            cell(a.mean_comm),
            a.timeouts
        ));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn pairs_cfg() -> RunConfig {
        preset("spray-vs-ecmp").unwrap().variants[0].1.clone()
    }

    #[test]
    fn pairs_mode_opens_and_finishes_every_flow() {
        let (run, arts) = execute(&pairs_cfg(), 7).unwrap();
        assert_eq!(run.flows.len(), 4);
        assert!(run.flows.iter().all(|f| f.fct_ns.is_some()), "{:?}", run.flows);
        assert!(!arts.ports.is_empty());
        let row = summarize("spray", &run);
        assert_eq!(row.flows_done, 4);
        assert!(row.mean_fct_ns.unwrap() > 0);
    }

    #[test]
    fn same_seed_gives_byte_identical_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = pairs_cfg();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        run_variant(&cfg, "spray", &a).unwrap();
        run_variant(&cfg, "spray", &b).unwrap();
        for name in ["seed-1/flows.csv", "seed-1/counters.csv", "seed-1/resolved.toml"] {
            let x = std::fs::read(a.join(name)).unwrap();
            let y = std::fs::read(b.join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical runs");
        }
    }

    #[test]
    fn preset_run_writes_summary_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let p = preset("spray-vs-ecmp").unwrap();
        let rows = run_preset(&p, tmp.path(), Some(&[3])).unwrap();
        assert_eq!(rows.len(), 2, "two variants, one seed each");
        let root = tmp.path().join("spray-vs-ecmp");
        assert!(root.join("expected.txt").exists());
        let back = read_summary_csv(&root.join("summary.csv")).unwrap();
        assert_eq!(back, rows);
        assert!(root.join("spray/seed-3/resolved.toml").exists());

        let table = report(&root).unwrap();
        assert!(table.contains("spray"));
        assert!(root.join("plots/fct_ms.csv").exists());
        assert!(root.join("plots/fct_ms.svg").exists());
    }

    #[test]
    fn summary_rows_round_trip_through_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let rows = vec![
            SummaryRow {
                variant: "x".into(),
                seed: 1,
                flows_total: 2,
                flows_done: 2,
                timeouts: 0,
                drops_selective: 3,
                drops_buffer: 4,
                retransmit_rounds: 5,
                mean_fct_ns: Some(10),
                p50_fct_ns: Some(9),
                p95_fct_ns: Some(11),
                p99_fct_ns: Some(12),
                max_fct_ns: Some(13),
                mean_comm_ns: None,
                end_ns: 99,
            },
            SummaryRow {
                variant: "y".into(),
                seed: 2,
                flows_total: 0,
                flows_done: 0,
                timeouts: 0,
                drops_selective: 0,
                drops_buffer: 0,
                retransmit_rounds: 0,
                mean_fct_ns: None,
                p50_fct_ns: None,
                p95_fct_ns: None,
                p99_fct_ns: None,
                max_fct_ns: None,
                mean_comm_ns: Some(7),
                end_ns: 1,
            },
        ];
        let path = tmp.path().join("summary.csv");
        write_summary_csv(&path, &rows).unwrap();
        assert_eq!(read_summary_csv(&path).unwrap(), rows);
    }

    #[test]
    fn svg_rendering_rejects_empty_series_and_writes_files() {
        let tmp = tempfile::tempdir().unwrap();
        let err = render_svg(&tmp.path().join("x.svg"), "t", "x", "y", &[]);
        assert!(err.is_err());
        let s = vec![Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 3.0)] }];
        render_svg(&tmp.path().join("ok.svg"), "t", "x", "y", &s).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("ok.svg")).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("</svg>"));
        write_curve_csv(&tmp.path().join("c.csv"), "x", &s).unwrap();
        let csv_text = std::fs::read_to_string(tmp.path().join("c.csv")).unwrap();
        assert!(csv_text.starts_with("x,a"));
    }
}
