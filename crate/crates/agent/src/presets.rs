//! Built-in scenarios used by the tests and the experiment runner.

use ran_sim::config::{HandoverConfig, RadioConfig, ReservationConfig, SchedulerConfig};
use ran_sim::kpm::KpmRanges;
use ran_sim::mobility::Mobility;
use ran_sim::traffic::TrafficProfile;
use ran_sim::{CellConfig, SimConfig, UeConfig};

use crate::env::Scenario;

fn cell(position: [f64; 2], background_load: f64) -> CellConfig {
    CellConfig {
        position,
        prb_capacity: 50,
        background_load,
    }
}

fn sim(seed: u64, cells: Vec<CellConfig>, ues: Vec<UeConfig>) -> SimConfig {
    SimConfig {
        seed,
        cells,
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

/// One static UE attached to a distant cell with two equally strong
/// candidates nearby; candidate 2 carries almost full background load.
pub fn toy_congested() -> Scenario {
    let ue = UeConfig {
        mobility: Mobility::fixed([260.0, 0.0]),
        traffic: TrafficProfile::persistent(1.0, 1.0, 500),
        delay_requirement_ms: 20.0,
        initial_cell: Some(0),
    };
    let cells = vec![
        cell([0.0, 0.0], 0.1),
        cell([300.0, 30.0], 0.2),
        cell([300.0, -30.0], 0.95),
    ];
    Scenario::new(sim(0, cells, vec![ue]))
}

/// Two cells 200 m apart, one UE driving across under light background
/// load.
pub fn crossing_light() -> Scenario {
    let ue = UeConfig {
        mobility: Mobility::line([20.0, 5.0], [180.0, 5.0], 10.0),
        traffic: TrafficProfile::persistent(2.0, 4.0, 500),
        delay_requirement_ms: 20.0,
        initial_cell: None,
    };
    let mut s = sim(
        0,
        vec![cell([0.0, 0.0], 0.15), cell([200.0, 0.0], 0.15)],
        vec![ue],
    );
    s.radio.shadow_sigma_db = 2.0;
    Scenario::new(s)
}

/// Heavy load: every cell carries about 80% background load and cell 1,
/// slightly stronger than cell 2 along the far end of the route, is close
/// to saturation. Three UEs shuttle between cell 0 and the far pair.
pub fn heavy_three_cell() -> Scenario {
    let ues = (0..3)
        .map(|i| {
            let y = 5.0 * i as f64 - 5.0;
            UeConfig {
                mobility: Mobility {
                    waypoints: vec![[20.0, y], [380.0, y]],
                    speed_mps: 12.0,
                    start_offset_m: 120.0 * i as f64,
                },
                traffic: TrafficProfile::persistent(0.2, 0.2, 500),
                delay_requirement_ms: 20.0,
                initial_cell: None,
            }
        })
        .collect();
    let cells = vec![
        cell([0.0, 0.0], 0.8),
        cell([400.0, 25.0], 0.95),
        cell([400.0, -35.0], 0.8),
    ];
    Scenario::new(sim(0, cells, ues))
}
