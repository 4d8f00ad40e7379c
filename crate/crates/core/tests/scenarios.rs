use std::collections::VecDeque;

use manet_core::config::{FlowSpec, MobilityModel, ScenarioConfig};
use manet_core::network::{run_scenario_traced, TraceEvent};
use manet_core::routing::{Agent, DropReason};
use manet_core::{run_scenario, Protocol, Simulator};

fn static_config(protocol: Protocol, positions: &[[f64; 2]], duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::sim2(protocol, positions.len());
    cfg.duration_s = duration;
    cfg.area.width = 1000.0;
    cfg.area.height = 1000.0;
    cfg.mobility.model = MobilityModel::Static;
    cfg.mobility.positions = positions.to_vec();
    cfg.traffic.flows.clear();
    cfg
}

fn line(protocol: Protocol, duration: f64) -> ScenarioConfig {
    let pos: Vec<[f64; 2]> = (0..5).map(|i| [100.0 + 200.0 * i as f64, 500.0]).collect();
    let mut cfg = static_config(protocol, &pos, duration);
    cfg.traffic.flows = vec![FlowSpec {
        src: 0,
        sink: 4,
        start_s: 1.0,
        stop_s: Some(61.0),
    }];
    cfg
}

/// Hop distances from `src` on the unit-disk graph, by breadth-first search.
fn bfs(positions: &[[f64; 2]], range: f64, src: usize) -> Vec<Option<u32>> {
    let n = positions.len();
    let adj = |a: usize, b: usize| {
        let dx = positions[a][0] - positions[b][0];
        let dy = positions[a][1] - positions[b][1];
        a != b && (dx * dx + dy * dy).sqrt() <= range
    };
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if adj(u, v) && dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

#[test]
fn aodv_line_hop_count() {
    let mut sim = Simulator::new(line(Protocol::Aodv, 62.0), 1).unwrap();
    sim.run_until(2.0).unwrap();
    let Agent::Aodv(a) = sim.agent(0) else { panic!() };
    assert_eq!(a.route(4).unwrap().hop_count, 4);
    assert_eq!(a.route(4).unwrap().next_hop, 1);
}

#[test]
fn dsr_line_route_record() {
    let mut sim = Simulator::new(line(Protocol::Dsr, 62.0), 1).unwrap();
    sim.run_until(2.0).unwrap();
    let Agent::Dsr(a) = sim.agent(0) else { panic!() };
    assert_eq!(a.cache().find(4, 2.0), Some(vec![0, 1, 2, 3, 4]));
}

#[test]
fn dsdv_matches_bfs_within_two_dumps() {
    let cfg = line(Protocol::Dsdv, 62.0);
    let positions = cfg.mobility.positions.clone();
    let horizon = 2.0 * cfg.dsdv.dump_interval_s + cfg.dsdv.first_dump_window_s;
    let mut sim = Simulator::new(cfg, 3).unwrap();
    sim.run_until(horizon).unwrap();
    for src in 0..5 {
        let oracle = bfs(&positions, 250.0, src);
        let Agent::Dsdv(a) = sim.agent(src) else { panic!() };
        for dst in 0..5 {
            let got = a.entry(dst).filter(|e| e.reachable()).map(|e| e.hop_count);
            assert_eq!(got, oracle[dst], "{src} -> {dst}");
        }
    }
}

#[test]
fn line_delivers_everything_on_the_line() {
    for p in Protocol::ALL {
        let out = run_scenario(&line(p, 62.0), 1).unwrap();
        assert_eq!(out.counters.data_originated, 480, "{p}");
        assert_eq!(out.metrics.pdr, Some(1.0), "{p}: {:?}", out.counters.drops_by_reason);
        assert!(out.counters.delivered_paths.iter().all(|path| path == &[0, 1, 2, 3, 4]), "{p}");
    }
}

#[test]
fn two_nodes_in_range() {
    for p in Protocol::ALL {
        let mut cfg = static_config(p, &[[100.0, 100.0], [300.0, 100.0]], 30.0);
        cfg.traffic.flows = vec![FlowSpec {
            src: 0,
            sink: 1,
            start_s: 2.0,
            stop_s: None,
        }];
        let out = run_scenario(&cfg, 1).unwrap();
        assert_eq!(out.metrics.pdr, Some(1.0), "{p}");
        assert_eq!(out.counters.delivered_hops, out.counters.data_delivered, "{p}");
    }
}

#[test]
fn disconnected_pair_delivers_nothing() {
    for p in Protocol::ALL {
        let mut cfg = static_config(p, &[[100.0, 100.0], [900.0, 900.0]], 60.0);
        cfg.traffic.flows = vec![FlowSpec {
            src: 0,
            sink: 1,
            start_s: 1.0,
            stop_s: Some(5.0),
        }];
        let out = run_scenario(&cfg, 1).unwrap();
        assert_eq!(out.metrics.pdr, Some(0.0), "{p}");
        assert_eq!(out.counters.data_dropped, out.counters.data_originated, "{p}");
        let expected = match p {
            Protocol::Dsdv => DropReason::Expired,
            _ => DropReason::DiscoveryFailed,
        };
        assert_eq!(out.counters.drops_by_reason.get(&expected), Some(&32), "{p}");
    }
}

#[test]
fn same_seed_same_run() {
    for p in Protocol::ALL {
        let mut cfg = ScenarioConfig::sim2(p, 15);
        cfg.duration_s = 60.0;
        let a = run_scenario(&cfg, 42).unwrap();
        let b = run_scenario(&cfg, 42).unwrap();
        assert_eq!(a.event_digest, b.event_digest);
        assert_eq!(a.metrics, b.metrics);
        let c = run_scenario(&cfg, 43).unwrap();
        assert_ne!(a.event_digest, c.event_digest);
    }
}

#[test]
fn trajectories_do_not_depend_on_protocol() {
    for (cfg_for, nodes) in [(ScenarioConfig::sim2 as fn(Protocol, usize) -> ScenarioConfig, 10), (ScenarioConfig::sim1, 20)] {
        let dumps: Vec<Vec<u8>> = Protocol::ALL
            .iter()
            .map(|&p| {
                let sim = Simulator::new(cfg_for(p, nodes), 9).unwrap();
                let mut buf = Vec::new();
                sim.mobility().write_csv(&mut buf, 120.0, 1.0).unwrap();
                buf
            })
            .collect();
        assert_eq!(dumps[0], dumps[1]);
        assert_eq!(dumps[1], dumps[2]);
    }
}

#[test]
fn silent_network_only_idles() {
    for p in Protocol::ALL {
        let mut cfg = ScenarioConfig::sim2(p, 10);
        cfg.traffic.enabled = false;
        let out = run_scenario(&cfg, 5).unwrap();
        for m in &out.meters {
            match p {
                Protocol::Dsdv => {
                    assert!(m.e_tx > 0.0);
                    assert!(m.remaining() < 931.0);
                }
                _ => {
                    assert_eq!(m.e_tx + m.e_rx + m.e_over, 0.0);
                    assert!((m.remaining() - 931.0).abs() <= 1e-9 * 931.0);
                }
            }
        }
        assert!(out.metrics.pdr.is_none());
    }
}

#[test]
fn energy_books_balance() {
    for p in Protocol::ALL {
        let out = run_scenario(&ScenarioConfig::sim2(p, 20), 11).unwrap();
        for m in &out.meters {
            let total = m.remaining() + m.e_tx + m.e_rx + m.e_idle + m.e_over;
            assert!((total - 1000.0).abs() <= 1e-9 * 1000.0);
            assert!(m.busy_time <= 300.0);
        }
    }
}

#[test]
fn trace_agrees_with_counters() {
    let mut cfg = ScenarioConfig::sim2(Protocol::Aodv, 10);
    cfg.duration_s = 60.0;
    let out = run_scenario_traced(&cfg, 2).unwrap();
    let trace = out.trace.unwrap();
    let tx = trace.iter().filter(|r| r.event == TraceEvent::Tx).count() as u64;
    let c = &out.counters;
    assert_eq!(tx, c.control_transmissions + c.data_transmissions + c.mac_retries);
    let fails = trace.iter().filter(|r| r.event == TraceEvent::Fail).count() as u64;
    assert_eq!(fails, c.link_failures);
    assert!(trace.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn queue_never_exceeds_capacity() {
    let mut cfg = ScenarioConfig::sim2(Protocol::Dsdv, 25);
    cfg.traffic.rate_pps = 200.0;
    cfg.duration_s = 30.0;
    let mut sim = Simulator::new(cfg, 4).unwrap();
    let mut t = 0.0;
    while t < 30.0 {
        t += 0.5;
        sim.run_until(t).unwrap();
        assert!((0..25).all(|n| sim.queue_len(n) <= 50));
    }
    assert!(sim.counters().queue_drops > 0);
}
