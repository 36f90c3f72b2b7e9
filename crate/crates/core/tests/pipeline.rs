use std::fs;
use std::process::Command;

use noma_mec::association::{blocking_pairs, build_preferences, distance_association, feasible, gale_shapley};
use noma_mec::compute::task_delay;
use noma_mec::harness::{emit_results, run_once, run_sweep, World, AGGREGATE_CSV, BS_LOAD_CSV, RUNS_CSV};
use noma_mec::scenario::{Interval, IovtDevice, MecBs, Position};
use noma_mec::{Arm, ExperimentConfig, Scenario, SicMode, SimParams};

#[test]
fn lone_device_next_to_big_server_gets_everything() {
    let params = SimParams {
        mec_capacity_range_bps: Interval(2e9, 2e9),
        deadline_range_s: Interval(2.0, 2.0),
        area_m: 20.0,
        ..Default::default()
    };
    let m = run_once(&params, 5, 1, Arm::GAME_DEADLINE).unwrap();
    assert_eq!(m.unassociated_fraction, 0.0);
    let alloc = m.devices[0].allocation.unwrap();
    assert!((alloc.mec_rate_bps - 2e9).abs() <= 2e9 * 1e-9);
    assert!(alloc.realized_delay_s <= alloc.planned_delay_s * (1.0 + 1e-12));
    assert!((m.total_delay_s - alloc.realized_delay_s).abs() < 1e-15);
}

#[test]
fn single_device_delay_matches_closed_form() {
    let params = SimParams::default();
    let bs = MecBs {
        id: 0,
        position: Position::new(0.0, 0.0),
        capacity_bps: 1e9,
    };
    let dev = IovtDevice {
        id: 0,
        position: Position::new(60.0, 0.0),
        workload_bits: 8e6,
        deadline_s: 1.5,
        local_rate_bps: 3e6,
        power_cap_w: 0.2,
    };
    let scenario = Scenario::from_parts(params, vec![bs], vec![dev.clone()]).unwrap();
    let channel = noma_mec::ChannelState::draw(&scenario, 0).unwrap();
    let prefs = build_preferences(&scenario, &channel);
    let world = World {
        seed: 0,
        scenario,
        channel,
        prefs,
    };
    let m = world.run(Arm::GAME_DEADLINE).unwrap();
    let alloc = m.devices[0].allocation.unwrap();
    let r = feasible(&world.scenario, &world.channel, SicMode::DeadlineAscending, 0, &[0])
        .unwrap()
        .unwrap()
        .plan
        .rates_bps[0];
    let expected = task_delay(dev.workload_bits, dev.local_rate_bps, r, 1e9).unwrap();
    assert!((alloc.planned_delay_s - expected).abs() <= 1e-9 * expected);
    // alone in the cell the staged rate equals the planned rate
    assert!((alloc.realized_delay_s - expected).abs() <= 1e-9 * expected);
}

#[test]
fn runs_are_deterministic() {
    let p = SimParams::default();
    for arm in Arm::DEFAULTS {
        assert_eq!(run_once(&p, 42, 35, arm).unwrap(), run_once(&p, 42, 35, arm).unwrap());
    }
}

#[test]
fn pipeline_invariants_hold_across_runs() {
    let p = SimParams::default();
    for seed in 0..25u64 {
        let world = World::generate(&p, seed, 45).unwrap();
        for arm in Arm::DEFAULTS {
            let m = world.run(arm).unwrap();
            let unassoc = m.devices.iter().filter(|d| d.bs.is_none()).count();
            assert_eq!(m.bs_load.iter().sum::<usize>() + unassoc, m.n_devices);
            assert!((0.0..=1.0).contains(&m.unassociated_fraction));

            let served: f64 = m.devices.iter().filter_map(|d| d.allocation).map(|a| a.realized_delay_s).sum();
            let expected = served + p.penalty_delay_s * unassoc as f64;
            assert!((m.total_delay_s - expected).abs() <= 1e-9 * expected.max(1.0));

            for d in &m.devices {
                assert_eq!(d.bs.is_some(), d.allocation.is_some());
                if let Some(a) = d.allocation {
                    assert!((0.0..=1.0).contains(&a.alpha));
                    assert!(a.planned_delay_s <= d.deadline_s * (1.0 + 1e-9), "{a:?} vs {}", d.deadline_s);
                    assert!(a.realized_delay_s <= a.planned_delay_s * (1.0 + 1e-9));
                    assert!(a.met_deadline);
                }
            }
            for b in 0..m.bs_load.len() {
                let granted: f64 = m
                    .devices
                    .iter()
                    .filter(|d| d.bs == Some(b))
                    .map(|d| d.allocation.unwrap().mec_rate_bps)
                    .sum();
                assert!(granted <= m.bs_capacity[b] * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn arms_share_the_same_world() {
    let cfg = ExperimentConfig {
        n_devices_sweep: vec![12],
        runs_per_point: 3,
        ..Default::default()
    };
    let t = run_sweep(&cfg).unwrap();
    for r in 0..3 {
        let seeds: Vec<u64> = t.runs.iter().skip(r).step_by(3).map(|m| m.seed).collect();
        assert!(seeds.iter().all(|s| *s == seeds[0]));
        let caps: Vec<&Vec<f64>> = t.runs.iter().skip(r).step_by(3).map(|m| &m.bs_capacity).collect();
        assert!(caps.iter().all(|c| *c == caps[0]));
        let deadlines: Vec<Vec<f64>> = t
            .runs
            .iter()
            .skip(r)
            .step_by(3)
            .map(|m| m.devices.iter().map(|d| d.deadline_s).collect())
            .collect();
        assert!(deadlines.iter().all(|d| *d == deadlines[0]));
    }
}

#[test]
fn game_serves_at_least_as_many_on_average() {
    // Not a theorem under interference coupling; check the aggregate and
    // count per-instance reversals.
    let p = SimParams::default();
    let mut reversals = 0;
    let (mut game, mut dist) = (0usize, 0usize);
    for seed in 0..60u64 {
        let w = World::generate(&p, seed, 40).unwrap();
        let g = gale_shapley(&w.scenario, &w.prefs, &w.channel, SicMode::DeadlineAscending).unwrap();
        let d = distance_association(&w.scenario, &w.prefs, &w.channel, SicMode::DeadlineAscending).unwrap();
        assert!(blocking_pairs(&w.scenario, &w.prefs, &w.channel, SicMode::DeadlineAscending, &g)
            .unwrap()
            .is_empty());
        if g.associated() < d.associated() {
            reversals += 1;
        }
        game += g.associated();
        dist += d.associated();
    }
    eprintln!("game < distance on {reversals}/60 instances");
    assert!(game >= dist);
}

#[test]
fn csv_row_counts_and_headers() {
    let cfg = ExperimentConfig {
        n_devices_sweep: vec![10, 20],
        runs_per_point: 3,
        arms: vec![Arm::GAME_DEADLINE, Arm::DIST_CHANNEL],
        ..Default::default()
    };
    let table = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&table, dir.path()).unwrap();
    let runs = fs::read_to_string(dir.path().join(RUNS_CSV)).unwrap();
    let lines: Vec<&str> = runs.lines().collect();
    assert_eq!(lines[0], "arm,n_devices,seed,total_delay_s,unassociated_fraction");
    assert_eq!(lines.len(), 1 + 12);
    assert!(lines[1].starts_with("game-deadline,10,0,"));
    assert!(!runs.contains('\r'));
    let agg = fs::read_to_string(dir.path().join(AGGREGATE_CSV)).unwrap();
    assert_eq!(
        agg.lines().next().unwrap(),
        "arm,n_devices,mean_total_delay_s,std_total_delay_s,mean_unassoc_frac,std_unassoc_frac"
    );
    assert_eq!(agg.lines().count(), 1 + 4);
    let load = fs::read_to_string(dir.path().join(BS_LOAD_CSV)).unwrap();
    assert_eq!(load.lines().count(), 1 + 12 * 9);

    let first = fs::read(dir.path().join(RUNS_CSV)).unwrap();
    emit_results(&run_sweep(&cfg).unwrap(), dir.path()).unwrap();
    assert_eq!(first, fs::read(dir.path().join(RUNS_CSV)).unwrap());
}

#[test]
fn emit_rejects_empty_and_unwritable() {
    let cfg = ExperimentConfig {
        n_devices_sweep: vec![5],
        runs_per_point: 1,
        ..Default::default()
    };
    let mut table = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = emit_results(&table, &blocker.join("out")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
    table.runs.clear();
    assert!(emit_results(&table, dir.path()).is_err());
}

#[test]
fn cli_writes_csvs_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 3, "power_cap_w": 0.1}"#).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--runs", "2", "--n-sweep", "10:20:5", "--arms", "game-deadline,dist-channel"])
        .status()
        .unwrap();
    assert!(status.success());
    let runs = fs::read_to_string(out.join(RUNS_CSV)).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * 2 * 2);
    assert!(runs.lines().nth(1).unwrap().starts_with("game-deadline,10,3,"));

    fs::write(&cfg, r#"{"sead": 3}"#).unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!res.status.success());
    let msg = String::from_utf8_lossy(&res.stderr);
    assert_eq!(msg.trim().lines().count(), 1, "{msg}");
    assert!(msg.contains("sead"));

    let res = Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(["--config", "/nonexistent/cfg.json", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("/nonexistent/cfg.json"));
}
