//! Simulated time is an integer count of picoseconds, so every schedule is exact
//! and reproducible across platforms.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub type Ps = u64;

pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_S: u128 = 1_000_000_000_000;

pub fn us_to_ps(us: f64) -> Ps {
    (us * PS_PER_US as f64).round() as Ps
}

pub fn ps_to_us(ps: Ps) -> f64 {
    ps as f64 / PS_PER_US as f64
}

pub fn ps_to_s(ps: Ps) -> f64 {
    ps as f64 / PS_PER_S as f64
}

/// Time to move `bytes` at `rate` bytes per second, rounded up.
pub fn transfer_ps(bytes: u64, rate: u64) -> Ps {
    assert!(rate > 0, "rate must be positive");
    (bytes as u128 * PS_PER_S).div_ceil(rate as u128) as Ps
}

/// Same as [`transfer_ps`] for rates that come out of a model as floats.
pub fn transfer_ps_f(bytes: u64, rate: f64) -> Ps {
    assert!(rate > 0.0, "rate must be positive");
    (bytes as f64 / rate * PS_PER_S as f64).ceil() as Ps
}

/// Bytes per second achieved when `bytes` take `ps`.
pub fn rate_of(bytes: u64, ps: Ps) -> f64 {
    if ps == 0 {
        return f64::INFINITY;
    }
    bytes as f64 / ps_to_s(ps)
}

/// Min-heap of timestamped events. Events at the same instant pop in
/// insertion order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<(Ps, u64, Slot<E>)>>,
    seq: u64,
}

// Wrapper that opts the payload out of ordering.
#[derive(Debug)]
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at: Ps, event: E) {
        self.heap.push(Reverse((at, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(Ps, E)> {
        self.heap.pop().map(|Reverse((t, _, Slot(e)))| (t, e))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_transfer_at_channel_rate() {
        // 16 KiB at 1.2 GB/s
        assert_eq!(transfer_ps(16384, 1_200_000_000), 13_653_334);
        assert_eq!(transfer_ps(0, 5), 0);
    }

    #[test]
    fn same_instant_pops_fifo() {
        let mut q = EventQueue::new();
        q.schedule(5, 'b');
        q.schedule(1, 'a');
        q.schedule(5, 'c');
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(order, vec![(1, 'a'), (5, 'b'), (5, 'c')]);
    }
}
