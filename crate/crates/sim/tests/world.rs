use proptest::prelude::*;
use ran_sim::config::{HandoverConfig, RadioConfig, ReservationConfig, SchedulerConfig};
use ran_sim::kpm::{feature, KpmRanges, ReportKind};
use ran_sim::mobility::Mobility;
use ran_sim::traffic::{TrafficKind, TrafficProfile};
use ran_sim::{
    A3Config, CellConfig, Direction, EventKind, HandoverOutcome, HoState, SimConfig, SimEvent,
    UeConfig, World,
};

fn cell(x: f64, bg: f64) -> CellConfig {
    CellConfig {
        position: [x, 0.0],
        prb_capacity: 50,
        background_load: bg,
    }
}

fn ue_at(x: f64, traffic: TrafficProfile) -> UeConfig {
    UeConfig {
        mobility: Mobility::fixed([x, 5.0]),
        traffic,
        delay_requirement_ms: 20.0,
        initial_cell: None,
    }
}

fn config(seed: u64, ues: Vec<UeConfig>) -> SimConfig {
    SimConfig {
        seed,
        cells: vec![cell(0.0, 0.1), cell(200.0, 0.1)],
        ues,
        tti_ms: 1.0,
        kpm_radio_period_ms: 120.0,
        kpm_cell_period_ms: 10.0,
        measurement_period_ms: 40.0,
        radio: RadioConfig::default(),
        handover: HandoverConfig::default(),
        scheduler: SchedulerConfig::default(),
        reservation: ReservationConfig::default(),
        kpm_ranges: KpmRanges::default(),
    }
}

fn run(world: &mut World, steps: usize) -> Vec<SimEvent> {
    (0..steps).flat_map(|_| world.step()).collect()
}

fn crossing(seed: u64) -> SimConfig {
    let mut c = config(
        seed,
        vec![UeConfig {
            mobility: Mobility::line([20.0, 5.0], [180.0, 5.0], 10.0),
            traffic: TrafficProfile::persistent(2.0, 4.0, 500),
            delay_requirement_ms: 20.0,
            initial_cell: None,
        }],
    );
    c.radio.shadow_sigma_db = 2.0;
    c
}

#[test]
fn quiescent_world_delivers_and_drops_nothing() {
    let mut w = World::new(config(1, vec![ue_at(10.0, TrafficProfile::idle())])).unwrap();
    let events = run(&mut w, 500);
    assert!(!events.iter().any(|e| matches!(
        e.kind,
        EventKind::PacketDelivered { .. } | EventKind::PacketDropped { .. }
    )));
}

#[test]
fn overload_makes_head_of_line_delay_strictly_increase() {
    // 8 PRBs of at most ~104 bytes serve under 5 of the 50 packets that
    // arrive each TTI, so the head stays in the first batch for 10 TTIs.
    let mut c = config(
        2,
        vec![ue_at(10.0, TrafficProfile::persistent(0.0, 80.0, 200))],
    );
    c.cells[0].background_load = 0.0;
    c.cells[0].prb_capacity = 8;
    let mut w = World::new(c).unwrap();
    let mut last = -1.0;
    for _ in 0..10 {
        w.step();
        let hol = w.ue(0).hol_delay_ms(w.now_us())[1];
        assert!(hol > last, "{hol} after {last}");
        last = hol;
    }
}

#[test]
fn same_seed_same_event_log() {
    let a = run(&mut World::new(crossing(42)).unwrap(), 1000);
    let b = run(&mut World::new(crossing(42)).unwrap(), 1000);
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let (x, y) = (
        World::new(crossing(42)).unwrap(),
        World::new(crossing(43)).unwrap(),
    );
    assert_ne!(x.radio(0), y.radio(0));
}

fn midpoint_world(seed: u64, dl_mbps: f64) -> World {
    let mut c = config(
        seed,
        vec![ue_at(95.0, TrafficProfile::persistent(0.0, dl_mbps, 500))],
    );
    c.radio.shadow_sigma_db = 0.0;
    c.ues[0].initial_cell = Some(0);
    World::new(c).unwrap()
}

#[test]
fn interruption_delays_first_service_by_at_least_its_length() {
    let mut w = midpoint_world(3, 10.0);
    run(&mut w, 200);
    w.execute_handover(0, 1, None).unwrap();
    let mut completed = false;
    loop {
        let before = w.ue(0).hol_delay_ms(w.now_us())[1];
        let events = w.step();
        completed |= events
            .iter()
            .any(|e| e.kind == EventKind::HandoverCompleted);
        let served = events
            .iter()
            .any(|e| matches!(e.kind, EventKind::PacketDelivered { .. }));
        if completed && served {
            assert!(before >= 50.0, "{before}");
            break;
        }
        assert!(w.now_us() < 2_000_000);
    }
}

#[test]
fn strong_target_interruption_is_exactly_nominal() {
    let mut w = midpoint_world(4, 1.0);
    run(&mut w, 50);
    assert!(w.radio(0).rsrp_dbm[1] >= w.config().handover.weak_rsrp_threshold_dbm);
    w.execute_handover(0, 1, None).unwrap();
    let events = run(&mut w, 100);
    let executed: Vec<_> = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::HandoverExecuted { interruption_us } => Some((e.time_us, interruption_us)),
            _ => None,
        })
        .collect();
    assert_eq!(executed.len(), 1);
    assert_eq!(executed[0].1, 50_000);
    let done = events
        .iter()
        .find(|e| e.kind == EventKind::HandoverCompleted)
        .unwrap();
    assert_eq!(done.time_us - executed[0].0, 50_000);
}

#[test]
fn weak_target_extends_interruption() {
    let mut c = config(5, vec![ue_at(10.0, TrafficProfile::idle())]);
    c.radio.shadow_sigma_db = 0.0;
    c.cells[1].position = [900.0, 0.0];
    c.radio.report_threshold_dbm = -200.0;
    let mut w = World::new(c).unwrap();
    let rsrp = w.radio(0).rsrp_dbm[1];
    let h = w.config().handover.clone();
    assert!(rsrp < h.weak_rsrp_threshold_dbm);
    w.execute_handover(0, 1, None).unwrap();
    let events = run(&mut w, 100);
    let got = events
        .iter()
        .find_map(|e| match e.kind {
            EventKind::HandoverExecuted { interruption_us } => Some(interruption_us),
            _ => None,
        })
        .unwrap();
    let penalty = ((h.weak_rsrp_threshold_dbm - rsrp) * h.weak_rsrp_penalty_ms_per_db)
        .min(h.weak_rsrp_penalty_max_ms);
    assert_eq!(got, 50_000 + (penalty * 1000.0).round() as u64);
    assert!(got > 50_000);
}

#[test]
fn handover_during_interruption_is_rejected_without_change() {
    let mut w = midpoint_world(6, 1.0);
    w.execute_handover(0, 1, None).unwrap();
    run(&mut w, 25);
    assert!(matches!(w.ue(0).ho_state, HoState::Interrupted { .. }));
    let before = (w.ue(0).ho_state, w.ue(0).serving);
    assert_eq!(
        w.execute_handover(0, 0, Some(1.0)).unwrap(),
        HandoverOutcome::Rejected
    );
    assert_eq!((w.ue(0).ho_state, w.ue(0).serving), before);
    assert!(w.cells()[0].reserved.is_empty());
    let events = w.step();
    assert!(events
        .iter()
        .any(|e| matches!(e.kind, EventKind::HandoverRejected { .. })));
}

#[test]
fn handover_to_serving_cell_is_an_error() {
    let mut w = midpoint_world(7, 1.0);
    assert!(w.execute_handover(0, 0, None).is_err());
    assert!(w.execute_handover(0, 9, None).is_err());
}

fn peak_after_handover(seed: u64, kappa: Option<f64>) -> f64 {
    let mut c = config(
        seed,
        vec![ue_at(95.0, TrafficProfile::persistent(3.0, 3.0, 400))],
    );
    c.ues[0].initial_cell = Some(0);
    c.cells[1].background_load = 0.6;
    let mut w = World::new(c).unwrap();
    run(&mut w, 300);
    w.execute_handover(0, 1, kappa).unwrap();
    let mut peak: f64 = 0.0;
    for _ in 0..1000 {
        w.step();
        let hol = w.ue(0).hol_delay_ms(w.now_us());
        peak = peak.max(hol[0] + hol[1]);
    }
    peak
}

#[test]
fn reservation_lowers_post_handover_peak_delay() {
    for seed in 0..3 {
        let with = peak_after_handover(seed, Some(1.0));
        let without = peak_after_handover(seed, None);
        assert!(with < without, "seed {seed}: {with} vs {without}");
    }
}

#[test]
fn kpm_grid_classes() {
    let mut w = midpoint_world(8, 0.0);
    let at0 = w.emit_kpm();
    assert!(at0
        .iter()
        .any(|r| matches!(r.kind, ReportKind::Edge { .. })));
    assert!(at0
        .iter()
        .any(|r| matches!(r.kind, ReportKind::Cell { .. })));
    assert!(w.emit_kpm().is_empty());
    run(&mut w, 30);
    let reports = w.take_kpm();
    let at30: Vec<_> = reports
        .iter()
        .filter(|r| r.timestamp_us == 30_000)
        .collect();
    assert!(!at30.is_empty());
    assert!(at30
        .iter()
        .all(|r| !matches!(r.kind, ReportKind::Edge { .. })));
    assert!(at30
        .iter()
        .any(|r| matches!(r.kind, ReportKind::Cell { .. })));
    run(&mut w, 90);
    let at120: Vec<_> = w
        .take_kpm()
        .into_iter()
        .filter(|r| r.timestamp_us == 120_000)
        .collect();
    assert!(at120
        .iter()
        .any(|r| matches!(r.kind, ReportKind::Edge { .. })));
}

#[test]
fn idle_ue_reports_zero_throughput_and_volume() {
    let mut w = midpoint_world(9, 0.0);
    run(&mut w, 100);
    let ue = w
        .take_kpm()
        .into_iter()
        .find(|r| r.kind == ReportKind::Ue { ue: 0 })
        .unwrap();
    for id in [
        feature::UE_UL_THROUGHPUT,
        feature::UE_DL_THROUGHPUT,
        feature::UE_UL_VOLUME,
        feature::UE_DL_VOLUME,
    ] {
        assert_eq!(ue.raw(id), Some(0.0));
        assert_eq!(ue.value(id), Some(0.0));
    }
}

#[test]
fn kpm_counters_are_interval_deltas() {
    let mut w = midpoint_world(10, 8.0);
    run(&mut w, 200);
    let vols: Vec<f64> = w
        .take_kpm()
        .into_iter()
        .filter(|r| r.kind == ReportKind::Ue { ue: 0 })
        .map(|r| r.raw(feature::UE_DL_VOLUME).unwrap())
        .collect();
    // 8 Mbps over 10 ms is 10 kB per interval, every interval.
    assert!(vols.len() >= 19);
    assert!(
        vols.iter().all(|v| (*v - 10_000.0).abs() <= 500.0),
        "{vols:?}"
    );
}

#[test]
fn kpm_values_are_normalized() {
    let mut w = World::new(crossing(11)).unwrap();
    run(&mut w, 2000);
    for r in w.take_kpm() {
        for f in &r.features {
            assert!(
                f.value.is_finite() && (0.0..=1.0).contains(&f.value),
                "{f:?}"
            );
        }
    }
}

#[test]
fn reservation_expires_when_ue_never_arrives() {
    let mut w = midpoint_world(12, 4.0);
    run(&mut w, 100);
    w.execute_handover(0, 1, Some(1.0)).unwrap();
    assert!(w.cells()[1].reserved.contains_key(&0));
    let expiry = w.cells()[1].reserved[&0].expiry_us;
    while w.now_us() <= expiry {
        w.step();
    }
    assert!(w.cells()[1].reserved.is_empty());
}

fn a3_handovers(seed: u64, a3: &A3Config) -> Vec<SimEvent> {
    let mut w = World::new(crossing(seed)).unwrap();
    let mut out = Vec::new();
    for _ in 0..16_000 {
        if w.is_measurement_boundary() && w.ue(0).ho_state == HoState::Idle {
            let elapsed = w.timing().measurement_us;
            if let Some(t) = w.evaluate_a3(0, a3, elapsed) {
                w.execute_handover(0, t, None).unwrap();
            }
        }
        out.extend(
            w.step()
                .into_iter()
                .filter(|e| matches!(e.kind, EventKind::HandoverExecuted { .. })),
        );
    }
    out
}

#[test]
fn a3_crossing_hands_over_and_is_deterministic() {
    let a3 = A3Config {
        hysteresis_db: 3.0,
        time_to_trigger_ms: 120.0,
    };
    let a = a3_handovers(13, &a3);
    assert!(!a.is_empty());
    assert_eq!(a, a3_handovers(13, &a3));
}

#[test]
fn bursty_traffic_round_trips_through_json() {
    let mut c = crossing(14);
    c.ues[0].traffic.kind = TrafficKind::Bursty {
        mean_on_ms: 200.0,
        mean_off_ms: 400.0,
    };
    let text = serde_json::to_string(&c).unwrap();
    assert!(text.contains("\"kind\":\"bursty\""));
    assert_eq!(SimConfig::from_json(&text).unwrap(), c);
}

fn random_world(seed: u64, n_ues: usize, bg: f64, rate: f64) -> SimConfig {
    let ues = (0..n_ues)
        .map(|i| UeConfig {
            mobility: Mobility {
                waypoints: vec![[10.0, 5.0 * i as f64], [190.0, 5.0 * i as f64]],
                speed_mps: 5.0 + 3.0 * i as f64,
                start_offset_m: 30.0 * i as f64,
            },
            traffic: TrafficProfile {
                kind: if i % 2 == 0 {
                    TrafficKind::Persistent
                } else {
                    TrafficKind::Bursty {
                        mean_on_ms: 100.0,
                        mean_off_ms: 100.0,
                    }
                },
                ul_mbps: rate,
                dl_mbps: 2.0 * rate,
                packet_bytes: 300 + 100 * i as u32,
            },
            delay_requirement_ms: 20.0,
            initial_cell: None,
        })
        .collect();
    let mut c = config(seed, ues);
    c.cells[0].background_load = bg;
    c.cells[1].background_load = bg / 2.0;
    c.radio.shadow_sigma_db = 2.0;
    c.scheduler.drop_deadline_ms = 60.0;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_capacity_hold(seed in 0u64..10_000, n in 1usize..4, bg in 0.0f64..0.9, rate in 0.5f64..6.0) {
        let mut w = World::new(random_world(seed, n, bg, rate)).unwrap();
        for step in 0..1500 {
            if step % 300 == 150 {
                let serving = w.ue(0).serving;
                let _ = w.execute_handover(0, 1 - serving, Some(1.0)).unwrap();
            }
            w.step();
            for c in w.cells() {
                let pending: u32 = c
                    .reserved
                    .iter()
                    .filter(|(u, _)| !c.attached.contains(u) || w.ue(**u).is_interrupted())
                    .map(|(_, r)| r.prbs)
                    .sum();
                prop_assert!(c.allocated_prbs() + pending <= c.capacity);
                prop_assert!((0.0..=1.0).contains(&c.load));
            }
            for i in 0..n {
                let a = w.packet_account(i);
                prop_assert_eq!(a.generated, a.delivered + a.dropped + a.queued + a.in_flight);
            }
        }
    }

    #[test]
    fn event_log_is_a_function_of_seed(seed in 0u64..10_000) {
        let a = run(&mut World::new(random_world(seed, 2, 0.5, 3.0)).unwrap(), 400);
        let b = run(&mut World::new(random_world(seed, 2, 0.5, 3.0)).unwrap(), 400);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn no_service_while_interrupted(seed in 0u64..10_000) {
        let mut w = World::new(random_world(seed, 1, 0.3, 4.0)).unwrap();
        for _ in 0..100 { w.step(); }
        let serving = w.ue(0).serving;
        w.execute_handover(0, 1 - serving, None).unwrap();
        for _ in 0..200 {
            let interrupted = w.ue(0).is_interrupted();
            let events = w.step();
            if interrupted && w.ue(0).is_interrupted() {
                let served = events.iter().any(|e| e.ue == Some(0) && matches!(e.kind, EventKind::PacketDelivered { .. }));
                prop_assert!(!served);
            }
        }
    }

    #[test]
    fn interruption_causes_delay_peak(seed in 0u64..10_000) {
        // Every executed handover is followed, within its interruption window
        // plus one TTI, by a head-of-line delay of at least the interruption.
        let mut w = World::new(random_world(seed, 1, 0.1, 2.0)).unwrap();
        for _ in 0..100 { w.step(); }
        let serving = w.ue(0).serving;
        w.execute_handover(0, 1 - serving, None).unwrap();
        let mut exec: Option<(u64, u64)> = None;
        let mut peak = 0.0f64;
        for _ in 0..400 {
            for e in w.step() {
                if let EventKind::HandoverExecuted { interruption_us } = e.kind {
                    exec = Some((e.time_us, interruption_us));
                }
            }
            if let Some((t0, len)) = exec {
                if w.now_us() <= t0 + len + w.timing().tti_us {
                    let hol = w.ue(0).hol_delay_ms(w.now_us());
                    peak = peak.max(hol[0].max(hol[1]));
                }
            }
        }
        let (_, len) = exec.unwrap();
        prop_assert!(peak >= len as f64 / 1000.0, "{} < {}", peak, len);
    }

    #[test]
    fn a3_fires_iff_condition_held_for_ttt(diffs in proptest::collection::vec(-6.0f64..10.0, 1..40), ttt in 0u64..6) {
        let a3 = A3Config { hysteresis_db: 3.0, time_to_trigger_ms: 40.0 * ttt as f64 };
        let w = World::new(config(1, vec![ue_at(10.0, TrafficProfile::idle())])).unwrap();
        let mut ue = w.ue(0).clone();
        let mut s = w.radio(0).clone();
        s.serving = 0;
        let mut run_len = 0u64;
        for d in diffs {
            s.rsrp_dbm = vec![-90.0, -90.0 + d];
            run_len = if d > 3.0 { run_len + 1 } else { 0 };
            let fired = ran_sim::evaluate_a3(&mut ue, &s, &a3, 40_000);
            prop_assert_eq!(fired.is_some(), run_len >= 1 && run_len * 40 >= 40 * ttt);
        }
    }
}

#[test]
fn directions_have_stable_labels() {
    assert_eq!(Direction::Uplink.label(), "ul");
    assert_eq!(Direction::Downlink.index(), 1);
}
