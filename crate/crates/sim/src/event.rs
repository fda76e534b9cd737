use std::io::Write;

use crate::error::Result;
use crate::queue::Direction;

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    PacketDelivered {
        dir: Direction,
        bytes: u32,
        delay_us: u64,
    },
    PacketDropped {
        dir: Direction,
        bytes: u32,
        age_us: u64,
    },
    HandoverTriggered {
        from: usize,
        to: usize,
        reserved_prbs: u32,
    },
    /// Phase 3 starts; the UE is now attached to `cell`.
    HandoverExecuted {
        interruption_us: u64,
    },
    HandoverCompleted,
    HandoverRejected {
        reason: String,
    },
    RadioLinkFailure {
        from: usize,
        to: usize,
    },
    ReservationExpired {
        prbs: u32,
    },
    KpmEmitted {
        reports: usize,
    },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::PacketDelivered { .. } => "packet_delivered",
            EventKind::PacketDropped { .. } => "packet_dropped",
            EventKind::HandoverTriggered { .. } => "handover_triggered",
            EventKind::HandoverExecuted { .. } => "handover_executed",
            EventKind::HandoverCompleted => "handover_completed",
            EventKind::HandoverRejected { .. } => "handover_rejected",
            EventKind::RadioLinkFailure { .. } => "radio_link_failure",
            EventKind::ReservationExpired { .. } => "reservation_expired",
            EventKind::KpmEmitted { .. } => "kpm_emitted",
        }
    }

    /// The single numeric column of the event log.
    pub fn value(&self) -> f64 {
        match self {
            EventKind::PacketDelivered { delay_us, .. } => *delay_us as f64 / 1000.0,
            EventKind::PacketDropped { age_us, .. } => *age_us as f64 / 1000.0,
            EventKind::HandoverTriggered { reserved_prbs, .. } => *reserved_prbs as f64,
            EventKind::HandoverExecuted { interruption_us } => *interruption_us as f64 / 1000.0,
            EventKind::HandoverCompleted | EventKind::HandoverRejected { .. } => 0.0,
            EventKind::RadioLinkFailure { from, .. } => *from as f64,
            EventKind::ReservationExpired { prbs } => *prbs as f64,
            EventKind::KpmEmitted { reports } => *reports as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEvent {
    pub time_us: u64,
    pub ue: Option<usize>,
    pub cell: Option<usize>,
    pub kind: EventKind,
}

/// Writes `timestamp_ms,type,ue_id,cell_id,value`, one row per event.
pub fn write_event_csv<W: Write>(out: W, events: &[SimEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp_ms", "type", "ue_id", "cell_id", "value"])?;
    for e in events {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            format!("{:.3}", e.time_us as f64 / 1000.0),
            e.kind.label().to_string(),
            opt(e.ue),
            opt(e.cell),
            format!("{}", e.kind.value()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
