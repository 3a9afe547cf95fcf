//! Event-driven sequential read of a placed database.
//!
//! Each channel owns its dies. A channel's page stream is cut into multiplane
//! groups of `planes_per_die` pages that are dealt to the dies in turn. A die
//! senses a whole group in one tR, then holds it in its page registers until
//! the channel has moved every page out; only then can it start its next
//! read. Ready groups queue for the channel in FIFO order, ties broken by die
//! index. Channels share nothing, so each one runs its own event loop.

use std::collections::{HashMap, VecDeque};

use crate::config::SsdConfig;
use crate::error::Result;
use crate::ftl::place_database;
use crate::time::{rate_of, EventQueue, Ps};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Channel(u32),
    /// (channel, die)
    Die(u32, u32),
}

/// One occupancy interval of an exclusive resource.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub resource: Resource,
    pub start: Ps,
    pub end: Ps,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadStats {
    pub bytes: u64,
    pub pages: u64,
    /// Completion time of the last page.
    pub duration: Ps,
    pub channel_finish: Vec<Ps>,
}

impl ReadStats {
    pub fn throughput(&self) -> f64 {
        rate_of(self.bytes, self.duration)
    }
}

pub fn sim_sequential_read(bytes: u64, cfg: &SsdConfig) -> Result<ReadStats> {
    run(bytes, cfg, false).map(|(s, _)| s)
}

/// Like [`sim_sequential_read`] but also returns every die and channel span.
pub fn trace_sequential_read(bytes: u64, cfg: &SsdConfig) -> Result<(ReadStats, Vec<Span>)> {
    run(bytes, cfg, true)
}

fn run(bytes: u64, cfg: &SsdConfig, trace: bool) -> Result<(ReadStats, Vec<Span>)> {
    let mapping = place_database(bytes, cfg)?;
    let per_channel = mapping.pages_per_channel();
    let mut memo: HashMap<u64, (Ps, Vec<Span>)> = HashMap::new();
    let mut spans = Vec::new();
    let mut channel_finish = Vec::with_capacity(per_channel.len());
    for (c, &pages) in per_channel.iter().enumerate() {
        let (finish, local) = memo
            .entry(pages)
            .or_insert_with(|| channel_loop(pages, cfg, trace));
        channel_finish.push(*finish);
        spans.extend(local.iter().map(|s| Span {
            resource: match s.resource {
                Resource::Channel(_) => Resource::Channel(c as u32),
                Resource::Die(_, d) => Resource::Die(c as u32, d),
            },
            ..*s
        }));
    }
    let stats = ReadStats {
        bytes,
        pages: mapping.pages(),
        duration: channel_finish.iter().copied().max().unwrap_or(0),
        channel_finish,
    };
    Ok((stats, spans))
}

enum Ev {
    Sensed { die: u32, pages: u64 },
    Moved { die: u32 },
}

fn channel_loop(pages: u64, cfg: &SsdConfig, trace: bool) -> (Ps, Vec<Span>) {
    let planes = cfg.planes_per_die as u64;
    let dies = cfg.dies_per_channel as u64;
    let groups = pages.div_ceil(planes);
    let group_pages = |g: u64| (pages - g * planes).min(planes);
    let t_r = cfg.t_r();
    let xfer = cfg.page_transfer();

    let mut spans = Vec::new();
    let mut q = EventQueue::new();
    // Next group each die will sense.
    let mut next: Vec<u64> = (0..dies).collect();
    let mut ready: VecDeque<(u32, u64)> = VecDeque::new();
    let mut channel_busy = false;
    let mut finish = 0;

    let sense = |q: &mut EventQueue<Ev>, spans: &mut Vec<Span>, die: u32, now: Ps, next: &mut [u64]| {
        let g = next[die as usize];
        if g < groups {
            next[die as usize] += dies;
            q.schedule(now + t_r, Ev::Sensed { die, pages: group_pages(g) });
            if trace {
                spans.push(Span { resource: Resource::Die(0, die), start: now, end: now + t_r });
            }
        }
    };
    for d in 0..dies as u32 {
        sense(&mut q, &mut spans, d, 0, &mut next);
    }
    while let Some((now, ev)) = q.pop() {
        match ev {
            Ev::Sensed { die, pages } => ready.push_back((die, pages)),
            Ev::Moved { die } => {
                channel_busy = false;
                finish = now;
                sense(&mut q, &mut spans, die, now, &mut next);
            }
        }
        if !channel_busy {
            if let Some((die, n)) = ready.pop_front() {
                channel_busy = true;
                let end = now + n * xfer;
                q.schedule(end, Ev::Moved { die });
                if trace {
                    spans.push(Span { resource: Resource::Channel(0), start: now, end });
                }
            }
        }
    }
    (finish, spans)
}
