//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use manet_core::config::{FlowSpec, MobilityModel, PowerProfile, ScenarioConfig};
use manet_core::energy::EnergyMeter;
use manet_core::metrics::{average, RunMetrics};
use manet_core::routing::Agent;
use manet_core::sweep::Scenario;
use manet_core::{run_scenario, Protocol, RunOutput, Simulator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn conserved(out: &RunOutput, initial: f64) -> Result<(), String> {
    for (i, m) in out.meters.iter().enumerate() {
        let total = m.remaining() + m.e_tx + m.e_rx + m.e_idle + m.e_over;
        if rel_err(total, initial) > 1e-9 {
            return Err(format!("node {i}: books sum to {total}"));
        }
    }
    Ok(())
}

fn energy_equations() -> Outcome {
    let profile = PowerProfile::default();
    let bytes = 512;
    let bits = 4096.0;
    let want_tx = bits * 330.0 / 2e6 / 1000.0;
    let want_rx = bits * 230.0 / 2e6 / 1000.0;
    let mut m = EnergyMeter::new(&profile);
    let tx = m.charge_tx(bytes, &profile, 2e6).unwrap();
    let rx = m.charge_rx(bytes, &profile, 2e6).unwrap();
    let over = m.charge_overhear(bytes, &profile, 2e6).unwrap();
    let ok = rel_err(tx, 6.7584e-4) <= 1e-12
        && rel_err(tx, want_tx) <= 1e-12
        && rel_err(rx, 4.7104e-4) <= 1e-12
        && rel_err(rx, want_rx) <= 1e-12
        && rel_err(over, 4.7104e-4) <= 1e-12;
    outcome(ok, format!("tx={tx:e} J rx={rx:e} J overhear={over:e} J"))
}

fn conservation(runs: &[RunOutput]) -> Outcome {
    for r in runs {
        if let Err(e) = conserved(r, 1000.0) {
            return outcome(false, format!("{} n={} seed={}: {e}", r.metrics.protocol, r.metrics.nodes, r.seed));
        }
    }
    let nodes: usize = runs.iter().map(|r| r.meters.len()).sum();
    outcome(true, format!("{} runs, {nodes} node ledgers within 1e-9", runs.len()))
}

fn write_config(dir: &Path, name: &str, cfg: &ScenarioConfig) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn manetsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_manetsim")).args(args).output().unwrap()
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = ScenarioConfig::sim2(Protocol::Aodv, 15);
    let c = write_config(d, "aodv.json", &cfg);
    let c = c.to_str().unwrap();
    let mut csvs = Vec::new();
    for out in ["a", "b"] {
        let o = d.join(out);
        let r = manetsim(&["run", "--config", c, "--seed", "7", "--out", o.to_str().unwrap()]);
        if !r.status.success() {
            return outcome(false, format!("run failed: {}", String::from_utf8_lossy(&r.stderr)));
        }
        csvs.push(fs::read(o.join("metrics.csv")).unwrap());
    }
    let same_csv = csvs[0] == csvs[1];

    let mut trajectories = Vec::new();
    for p in Protocol::ALL {
        let mut pc = cfg.clone();
        pc.protocol = p;
        let c = write_config(d, &format!("{p}.json"), &pc);
        let o = d.join(format!("traj-{p}"));
        let r = manetsim(&[
            "run",
            "--config",
            c.to_str().unwrap(),
            "--seed",
            "7",
            "--trajectory",
            "--out",
            o.to_str().unwrap(),
        ]);
        if !r.status.success() {
            return outcome(false, format!("{p} run failed"));
        }
        trajectories.push(fs::read(o.join("trajectory.csv")).unwrap());
    }
    let same_traj = trajectories.windows(2).all(|w| w[0] == w[1]);
    let elapsed = start.elapsed();
    outcome(
        same_csv && same_traj && elapsed < Duration::from_secs(10),
        format!(
            "metrics.csv identical: {same_csv}, trajectories identical across protocols: {same_traj}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn line_config(protocol: Protocol) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::sim2(protocol, 5);
    cfg.duration_s = 62.0;
    cfg.area.width = 1000.0;
    cfg.area.height = 200.0;
    cfg.mobility.model = MobilityModel::Static;
    cfg.mobility.positions = (0..5).map(|i| [100.0 + 200.0 * i as f64, 100.0]).collect();
    cfg.traffic.flows = vec![FlowSpec {
        src: 0,
        sink: 4,
        start_s: 1.0,
        stop_s: Some(61.0),
    }];
    cfg
}

fn bfs_hops(positions: &[[f64; 2]], range: f64, src: usize) -> Vec<Option<u32>> {
    let n = positions.len();
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            let dx = positions[u][0] - positions[v][0];
            let dy = positions[u][1] - positions[v][1];
            if dist[v].is_none() && (dx * dx + dy * dy).sqrt() <= range {
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

fn shortest_paths() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut sim = Simulator::new(line_config(Protocol::Aodv), 1).unwrap();
    sim.run_until(2.0).unwrap();
    let aodv_hops = match sim.agent(0) {
        Agent::Aodv(a) => a.route(4).map(|r| r.hop_count),
        _ => None,
    };
    ok &= aodv_hops == Some(4);
    notes.push(format!("AODV hop_count at A {aodv_hops:?}"));

    let mut sim = Simulator::new(line_config(Protocol::Dsr), 1).unwrap();
    sim.run_until(2.0).unwrap();
    let dsr_route = match sim.agent(0) {
        Agent::Dsr(a) => a.cache().find(4, 2.0),
        _ => None,
    };
    ok &= dsr_route.as_deref() == Some(&[0, 1, 2, 3, 4][..]);
    notes.push(format!("DSR route {dsr_route:?}"));

    let cfg = line_config(Protocol::Dsdv);
    let positions = cfg.mobility.positions.clone();
    let horizon = 2.0 * cfg.dsdv.dump_interval_s;
    let mut sim = Simulator::new(cfg, 1).unwrap();
    sim.run_until(horizon).unwrap();
    let mut dsdv_ok = true;
    for s in 0..5 {
        let oracle = bfs_hops(&positions, 250.0, s);
        let Agent::Dsdv(a) = sim.agent(s) else { unreachable!() };
        for (t, want) in oracle.iter().enumerate() {
            dsdv_ok &= a.entry(t).filter(|e| e.reachable()).map(|e| e.hop_count) == *want;
        }
    }
    ok &= dsdv_ok;
    notes.push(format!("DSDV = BFS at t={horizon}s: {dsdv_ok}"));

    for p in Protocol::ALL {
        let out = run_scenario(&line_config(p), 1).unwrap();
        ok &= out.metrics.pdr == Some(1.0);
        notes.push(format!("{p} pdr {:?}", out.metrics.pdr));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(5);
    notes.push(format!("{:.2}s", elapsed.as_secs_f64()));
    outcome(ok, notes.join(", "))
}

fn loop_freedom(runs: &[RunOutput]) -> Outcome {
    let mut paths = 0usize;
    for r in runs {
        for p in &r.counters.delivered_paths {
            let mut seen = std::collections::HashSet::new();
            if !p.iter().all(|n| seen.insert(*n)) {
                return outcome(false, format!("{} seed {}: path {p:?}", r.metrics.protocol, r.seed));
            }
            paths += 1;
        }
    }
    outcome(true, format!("{} runs, {paths} delivered paths, none revisits a node", runs.len()))
}

/// Mean over node counts of the seed-averaged value.
fn grand_mean(rows: &[RunMetrics], p: Protocol, f: fn(&RunMetrics) -> Option<f64>) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|m| m.protocol == p).filter_map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn rank_orders(runs: &[RunOutput]) -> Outcome {
    let mut averages = Vec::new();
    for p in Protocol::ALL {
        for n in Scenario::Sim2.node_counts() {
            let rows: Vec<RunMetrics> = runs
                .iter()
                .filter(|r| r.metrics.protocol == p && r.metrics.nodes == n)
                .map(|r| r.metrics.clone())
                .collect();
            averages.extend(average(&rows));
        }
    }
    let seeds = runs.iter().filter(|r| r.metrics.protocol == Protocol::Aodv && r.metrics.nodes == 5).count();
    let v = |p, f| grand_mean(&averages, p, f);
    let (a, d, s) = (Protocol::Aodv, Protocol::Dsdv, Protocol::Dsr);

    // (name, metric, expected max, expected min, headline)
    type Metric = fn(&RunMetrics) -> Option<f64>;
    let checks: [(&str, Metric, Protocol, Option<Protocol>, bool); 5] = [
        ("remaining", |m| Some(m.avg_remaining_j), s, Some(d), true),
        ("ro", |m| m.ro, d, Some(s), true),
        ("pdr", |m| m.pdr, s, Some(d), true),
        ("throughput", |m| Some(m.throughput_kbps), s, None, false),
        ("e_tx", |m| Some(m.e_tx_j), a, None, false),
    ];
    let mut headline_ok = true;
    let mut lines = Vec::new();
    for (name, f, max_p, min_p, headline) in checks {
        let vals: Vec<(Protocol, f64)> = Protocol::ALL.iter().map(|&p| (p, v(p, f))).collect();
        let best = vals.iter().copied().fold((a, f64::MIN), |x, y| if y.1 > x.1 { y } else { x });
        let worst = vals.iter().copied().fold((a, f64::MAX), |x, y| if y.1 < x.1 { y } else { x });
        let max_ok = best.0 == max_p;
        let min_ok = min_p.is_none_or(|q| worst.0 == q);
        let held = max_ok && min_ok;
        if headline {
            headline_ok &= held;
        }
        let want_max = vals.iter().find(|x| x.0 == max_p).unwrap().1;
        let mut gap = format!("max {max_p} expected, {} leads by {:.6}", best.0, best.1 - want_max);
        if max_ok {
            gap = format!("max {max_p} as expected");
        }
        if let Some(q) = min_p {
            let want_min = vals.iter().find(|x| x.0 == q).unwrap().1;
            if min_ok {
                gap.push_str(&format!("; min {q} as expected"));
            } else {
                gap.push_str(&format!("; min {q} expected, {} trails by {:.6}", worst.0, want_min - worst.1));
            }
        }
        let shown: Vec<String> = vals.iter().map(|(p, x)| format!("{p}={x:.6}")).collect();
        lines.push(format!(
            "      {} {name}: {} ({})",
            if held { "held  " } else { "broken" },
            shown.join(" "),
            if held { "order as expected".to_string() } else { gap }
        ));
    }
    outcome(
        headline_ok && seeds >= 5,
        format!(
            "{seeds} seeds x {} node counts; remaining/ro/pdr must hold\n{}",
            Scenario::Sim2.node_counts().len(),
            lines.join("\n")
        ),
    )
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn scale() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in Protocol::ALL {
        let cfg = ScenarioConfig::sim1(p, 80);
        let start = Instant::now();
        match run_scenario(&cfg, 1) {
            Ok(out) => {
                let t = start.elapsed();
                ok &= t < Duration::from_secs(60) && conserved(&out, 1000.0).is_ok();
                notes.push(format!("{p} {:.2}s", t.as_secs_f64()));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{p} error {e}"));
            }
        }
    }
    match peak_rss_kib() {
        Some(kib) => {
            ok &= kib < 1024 * 1024;
            notes.push(format!("peak RSS {:.1} MiB", kib as f64 / 1024.0));
        }
        None => {
            ok = false;
            notes.push("peak RSS unavailable".into());
        }
    }
    outcome(ok, format!("80 nodes, 900 s, RPGM: {}", notes.join(", ")))
}

fn silent_baseline() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in Protocol::ALL {
        let mut cfg = ScenarioConfig::sim2(p, 20);
        cfg.traffic.enabled = false;
        let out = run_scenario(&cfg, 1).unwrap();
        let expected = 1000.0 - 0.230 * 300.0;
        let min_rem = out.meters.iter().map(|m| m.remaining()).fold(f64::MAX, f64::min);
        let max_rem = out.meters.iter().map(|m| m.remaining()).fold(f64::MIN, f64::max);
        let control: f64 = out.meters.iter().map(|m| m.e_tx).sum();
        let this_ok = match p {
            Protocol::Dsdv => control > 0.0 && max_rem < expected,
            _ => control == 0.0 && out.meters.iter().all(|m| rel_err(m.remaining(), expected) <= 1e-12),
        };
        ok &= this_ok && conserved(&out, 1000.0).is_ok();
        notes.push(format!("{p} remaining [{min_rem:.9}, {max_rem:.9}] tx {control:.6} J"));
    }
    outcome(ok, notes.join(", "))
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    results.push((1, "energy equations", energy_equations()));
    // before the sweep so the peak RSS reading belongs to the large run
    let c7 = scale();

    let mut sweep_runs = Vec::new();
    let sweep_start = Instant::now();
    for p in Protocol::ALL {
        for n in Scenario::Sim2.node_counts() {
            let cfg = ScenarioConfig::sim2(p, n);
            for seed in 1..=20 {
                sweep_runs.push(run_scenario(&cfg, seed).expect("sim2 run"));
            }
        }
    }
    let sweep_time = sweep_start.elapsed();

    results.push((2, "energy conservation", conservation(&sweep_runs)));
    results.push((3, "determinism", determinism()));
    results.push((4, "shortest-path oracle", shortest_paths()));
    let mut c5 = loop_freedom(&sweep_runs);
    c5.pass &= sweep_time < Duration::from_secs(120);
    c5.detail.push_str(&format!(", {:.1}s", sweep_time.as_secs_f64()));
    results.push((5, "loop freedom", c5));
    results.push((6, "rank orders", rank_orders(&sweep_runs)));
    drop(sweep_runs);
    results.push((7, "scale", c7));
    results.push((8, "no-traffic baseline", silent_baseline()));

    println!();
    let mut failed = 0;
    for (id, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {id} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("\n{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
