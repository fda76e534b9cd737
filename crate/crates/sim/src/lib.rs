//! Seeded, deterministic multi-cell RAN simulator.
//!
//! Time advances in fixed TTIs of integer microseconds. Each [`World::step`]
//! moves UEs, refreshes radio measurements on the measurement grid, runs the
//! handover state machine, generates traffic, discards stale packets,
//! schedules PRBs per cell and emits KPM reports on their grids.

pub mod a3;
pub mod cell;
pub mod config;
mod error;
pub mod event;
pub mod kpm;
pub mod mobility;
pub mod queue;
pub mod radio;
pub mod scheduler;
pub mod traffic;
pub mod ue;
mod world;

pub use a3::{evaluate_a3, A3Config};
pub use cell::{apply_reservation, compute_cell_load, CellState, Reservation, ReservationRequest};
pub use config::{CellConfig, SimConfig, Timing, UeConfig};
pub use error::{Result, SimError};
pub use event::{EventKind, SimEvent};
pub use kpm::{KpmReport, ReportKind};
pub use queue::Direction;
pub use radio::RadioSample;
pub use ue::{HoState, UeState, UeStats};
pub use world::{HandoverOutcome, PacketAccount, World};
