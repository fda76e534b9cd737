use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Uplink, Direction::Downlink];

    pub fn index(self) -> usize {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub arrival_us: u64,
    /// Earliest time the packet may be scheduled (uplink grant delay).
    pub eligible_us: u64,
    pub size: u32,
    pub sent: u32,
}

impl Packet {
    pub fn remaining(&self) -> u32 {
        self.size - self.sent
    }
}

/// FIFO of packets with age-based discard.
#[derive(Clone, Debug, Default)]
pub struct QueueState {
    packets: VecDeque<Packet>,
    pub drop_count: u64,
    pub drop_deadline_us: u64,
}

impl QueueState {
    pub fn new(drop_deadline_us: u64) -> Self {
        QueueState {
            packets: VecDeque::new(),
            drop_count: 0,
            drop_deadline_us,
        }
    }

    pub fn push(&mut self, p: Packet) {
        debug_assert!(self
            .packets
            .back()
            .is_none_or(|b| b.arrival_us <= p.arrival_us));
        self.packets.push_back(p);
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }

    /// Packets with some bytes already transmitted.
    pub fn in_flight(&self) -> usize {
        self.packets.iter().filter(|p| p.sent > 0).count()
    }

    pub fn head_of_line_delay_us(&self, now_us: u64) -> u64 {
        self.packets
            .front()
            .map_or(0, |p| now_us.saturating_sub(p.arrival_us))
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.packets.iter().map(|p| p.remaining() as u64).sum()
    }

    pub fn eligible_bytes(&self, now_us: u64) -> u64 {
        self.packets
            .iter()
            .take_while(|p| p.eligible_us <= now_us)
            .map(|p| p.remaining() as u64)
            .sum()
    }

    /// Removes packets whose age exceeds the deadline.
    pub fn drop_expired(&mut self, now_us: u64) -> Vec<Packet> {
        let mut dropped = Vec::new();
        while let Some(p) = self.packets.front() {
            if now_us.saturating_sub(p.arrival_us) > self.drop_deadline_us {
                dropped.push(self.packets.pop_front().unwrap());
            } else {
                break;
            }
        }
        self.drop_count += dropped.len() as u64;
        dropped
    }

    /// Sends up to `bytes` from eligible packets in FIFO order and returns
    /// the packets completed.
    pub fn serve(&mut self, mut bytes: u64, now_us: u64) -> Vec<Packet> {
        let mut done = Vec::new();
        while bytes > 0 {
            let Some(p) = self.packets.front_mut() else {
                break;
            };
            if p.eligible_us > now_us {
                break;
            }
            let take = bytes.min(p.remaining() as u64);
            p.sent += take as u32;
            bytes -= take;
            if p.remaining() == 0 {
                done.push(self.packets.pop_front().unwrap());
            }
        }
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(at: u64, size: u32) -> Packet {
        Packet {
            arrival_us: at,
            eligible_us: at,
            size,
            sent: 0,
        }
    }

    #[test]
    fn empty_queue_has_zero_delay() {
        assert_eq!(QueueState::new(100).head_of_line_delay_us(500), 0);
    }

    #[test]
    fn serve_is_fifo_and_partial() {
        let mut q = QueueState::new(1_000_000);
        q.push(pkt(0, 100));
        q.push(pkt(10, 100));
        let done = q.serve(150, 20);
        assert_eq!(done.len(), 1);
        assert_eq!(q.backlog_bytes(), 50);
        assert_eq!(q.in_flight(), 1);
        assert_eq!(q.head_of_line_delay_us(20), 10);
    }

    #[test]
    fn ineligible_packets_wait() {
        let mut q = QueueState::new(1_000_000);
        q.push(Packet {
            arrival_us: 0,
            eligible_us: 4000,
            size: 10,
            sent: 0,
        });
        assert!(q.serve(100, 1000).is_empty());
        assert_eq!(q.eligible_bytes(1000), 0);
        assert_eq!(q.serve(100, 4000).len(), 1);
    }

    #[test]
    fn drops_only_past_deadline() {
        let mut q = QueueState::new(100);
        q.push(pkt(0, 1));
        q.push(pkt(50, 1));
        assert!(q.drop_expired(100).is_empty());
        assert_eq!(q.drop_expired(101).len(), 1);
        assert_eq!(q.drop_count, 1);
        assert_eq!(q.len(), 1);
    }
}
