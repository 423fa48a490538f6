use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{Horizon, ServiceDistribution, SimConfig};
use crate::model::{BulkSpec, Discipline};

/// External arrivals stop this many window lengths after the window closes;
/// only overloaded runs get that far before the measured jobs finish.
const DRAIN_WINDOWS: f64 = 1.0;

const STREAM_ARRIVALS: u64 = 0;
const STREAM_BULK: u64 = 1;
const STREAM_ENTRY: u64 = 2;

fn service_stream(node: usize) -> u64 {
    3 + 2 * node as u64
}

fn routing_stream(node: usize) -> u64 {
    4 + 2 * node as u64
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, rep: u32, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(u64::from(rep))));
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ClassStats {
    pub visits: u64,
    pub sum_waiting: f64,
    pub sum_response: f64,
    pub window_departures: u64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct NodeStats {
    pub visits: u64,
    pub sum_waiting: f64,
    pub sum_response: f64,
    pub area_number: f64,
    pub area_busy: f64,
    pub window_arrivals: u64,
    pub classes: Vec<ClassStats>,
}

#[derive(Debug, Clone)]
pub(crate) struct ReplicationStats {
    pub nodes: Vec<NodeStats>,
    pub window: f64,
    pub sum_chain: f64,
    pub completed: u64,
    /// `(sum, count)` of chain response by entry class.
    pub class_chain: Vec<(f64, u64)>,
    pub arrivals: u64,
    pub departures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Arrival,
    Departure { node: usize, slot: usize, generation: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// reversed: BinaryHeap is a max-heap
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Tag {
    finish: f64,
    slot: usize,
}

impl PartialEq for Tag {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Tag {}

impl PartialOrd for Tag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tag {
    fn cmp(&self, other: &Self) -> Ordering {
        other.finish.total_cmp(&self.finish).then_with(|| other.slot.cmp(&self.slot))
    }
}

#[derive(Debug, Clone, Default)]
struct Job {
    id: u64,
    class: usize,
    entry_class: usize,
    entered: f64,
    tracked: bool,
    node_arrival: f64,
    start: f64,
    work: f64,
}

enum Station {
    Fcfs { queue: VecDeque<usize>, busy: u32 },
    Ps { active: BinaryHeap<Tag>, vtime: f64, updated: f64, generation: u64 },
}

struct Node {
    servers: u32,
    number: u32,
    last: f64,
    station: Station,
    /// `(capacity-scaled) rate per class` used to turn samples into seconds.
    speed: Vec<f64>,
    law: ServiceDistribution,
    service_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    /// Cumulative routing rows per class over the flattened target index.
    routes: Vec<Vec<(f64, usize)>>,
}

impl Node {
    fn busy(&self) -> u32 {
        match &self.station {
            Station::Fcfs { busy, .. } => *busy,
            Station::Ps { .. } => u32::from(self.number > 0),
        }
    }
}

pub(crate) struct Replication<'a> {
    cfg: &'a SimConfig,
    classes: usize,
    nodes: Vec<Node>,
    jobs: Vec<Job>,
    free: Vec<usize>,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    start: f64,
    end: f64,
    arrival_index: u64,
    next_job: u64,
    outstanding: u64,
    arrivals_open: bool,
    arrival_rng: ChaCha8Rng,
    bulk_rng: ChaCha8Rng,
    entry_rng: ChaCha8Rng,
    class_cdf: Vec<f64>,
    entry_cdf: Vec<f64>,
    stats: ReplicationStats,
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

impl<'a> Replication<'a> {
    pub fn new(cfg: &'a SimConfig, rep: u32) -> Self {
        let spec = &cfg.spec;
        let l = spec.classes.len();
        let flat = spec.routing.flattened(l);
        let nodes = spec
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let station = match n.discipline {
                    Discipline::Fcfs => Station::Fcfs { queue: VecDeque::new(), busy: 0 },
                    Discipline::Ps => Station::Ps {
                        active: BinaryHeap::new(),
                        vtime: 0.0,
                        updated: 0.0,
                        generation: 0,
                    },
                };
                let share = match n.discipline {
                    Discipline::Fcfs => 1.0,
                    Discipline::Ps => f64::from(n.servers),
                };
                let routes = (0..l)
                    .map(|c| {
                        let mut acc = 0.0;
                        flat[i * l + c]
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p > 0.0)
                            .map(|(t, p)| {
                                acc += p;
                                (acc, t)
                            })
                            .collect()
                    })
                    .collect();
                Node {
                    servers: n.servers,
                    number: 0,
                    last: 0.0,
                    station,
                    speed: (0..l).map(|c| spec.rate(i, c) * n.capacity * share).collect(),
                    law: cfg.service_overrides.get(&n.id).cloned().unwrap_or(ServiceDistribution::Exponential),
                    service_rng: stream(cfg.seed, rep, service_stream(i)),
                    routing_rng: stream(cfg.seed, rep, routing_stream(i)),
                    routes,
                }
            })
            .collect();
        let (start, end) = match cfg.horizon {
            Horizon::Time(t) => (cfg.warmup * t, t),
            Horizon::Arrivals(_) => (f64::INFINITY, f64::INFINITY),
        };
        Replication {
            cfg,
            classes: l,
            nodes,
            jobs: Vec::new(),
            free: Vec::new(),
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            start,
            end,
            arrival_index: 0,
            next_job: 0,
            outstanding: 0,
            arrivals_open: true,
            arrival_rng: stream(cfg.seed, rep, STREAM_ARRIVALS),
            bulk_rng: stream(cfg.seed, rep, STREAM_BULK),
            entry_rng: stream(cfg.seed, rep, STREAM_ENTRY),
            class_cdf: cumulative(spec.classes.iter().map(|c| c.entry_probability)),
            entry_cdf: cumulative(spec.routing.entry.iter().copied()),
            stats: ReplicationStats {
                nodes: vec![
                    NodeStats { classes: vec![ClassStats::default(); l], ..Default::default() };
                    spec.nodes.len()
                ],
                window: 0.0,
                sum_chain: 0.0,
                completed: 0,
                class_chain: vec![(0.0, 0); l],
                arrivals: 0,
                departures: 0,
            },
        }
    }

    fn schedule(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    fn window_done(&self) -> bool {
        self.now >= self.end
    }

    /// Integrate node `i`'s population and busy servers up to `now`.
    fn accrue(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        let lo = node.last.max(self.start);
        let hi = self.now.min(self.end);
        if hi > lo {
            let s = &mut self.stats.nodes[i];
            s.area_number += f64::from(node.number) * (hi - lo);
            s.area_busy += f64::from(node.busy()) * (hi - lo);
        }
        node.last = self.now;
    }

    fn service_time(&mut self, i: usize, class: usize) -> f64 {
        let node = &mut self.nodes[i];
        let speed = node.speed[class];
        match &node.law {
            ServiceDistribution::Exponential => node.service_rng.sample::<f64, _>(Exp1) / speed,
            ServiceDistribution::Deterministic => 1.0 / speed,
            ServiceDistribution::Empirical(samples) => {
                let k = node.service_rng.random_range(0..samples.len());
                // samples are seconds at the nominal rate of one server
                let nominal = self.cfg.spec.rate(i, class);
                samples[k] * nominal / speed
            }
        }
    }

    fn alloc(&mut self, job: Job) -> usize {
        match self.free.pop() {
            Some(slot) => {
                self.jobs[slot] = job;
                slot
            }
            None => {
                self.jobs.push(job);
                self.jobs.len() - 1
            }
        }
    }

    fn trace(&self, out: &mut Option<&mut dyn Write>, node: Option<usize>, slot: usize, event: &str) -> io::Result<()> {
        if let Some(w) = out {
            let job = &self.jobs[slot];
            let node = node.map_or("-", |i| self.cfg.spec.nodes[i].id.as_str());
            writeln!(
                w,
                "{},{},{},{},{}",
                self.now, node, job.id, self.cfg.spec.classes[job.class].id, event
            )?;
        }
        Ok(())
    }

    fn external_arrival(&mut self, out: &mut Option<&mut dyn Write>) -> io::Result<()> {
        let k = self.arrival_index;
        self.arrival_index += 1;
        if let Horizon::Arrivals(n) = self.cfg.horizon {
            let first = (self.cfg.warmup * n as f64).floor() as u64;
            if k == first {
                self.start = self.now;
            }
            if k == n {
                self.end = self.now;
            }
        }
        if self.window_done() {
            let cutoff = self.end + DRAIN_WINDOWS * (self.end - self.start);
            if self.now > cutoff || self.outstanding == 0 {
                self.arrivals_open = false;
            }
        }
        let tracked = self.in_window(self.now);
        let size = self.cfg.spec.bulk.as_ref().map_or(1, |b: &BulkSpec| b.sample(&mut self.bulk_rng));
        for _ in 0..size {
            let class = pick(&self.class_cdf, self.entry_rng.random());
            let node = pick(&self.entry_cdf, self.entry_rng.random());
            let job = Job {
                id: self.next_job,
                class,
                entry_class: class,
                entered: self.now,
                tracked,
                ..Default::default()
            };
            self.next_job += 1;
            self.stats.arrivals += 1;
            if tracked {
                self.outstanding += 1;
            }
            let slot = self.alloc(job);
            self.trace(out, None, slot, "arrive")?;
            self.enter(node, slot, out)?;
        }
        if self.arrivals_open {
            let gap = self.arrival_rng.sample::<f64, _>(Exp1) / self.cfg.spec.external_rate;
            self.schedule(self.now + gap, Kind::Arrival);
        }
        Ok(())
    }

    fn enter(&mut self, i: usize, slot: usize, out: &mut Option<&mut dyn Write>) -> io::Result<()> {
        self.accrue(i);
        if self.in_window(self.now) {
            self.stats.nodes[i].window_arrivals += 1;
        }
        let class = self.jobs[slot].class;
        let work = self.service_time(i, class);
        {
            let job = &mut self.jobs[slot];
            job.node_arrival = self.now;
            job.work = work;
        }
        self.trace(out, Some(i), slot, "arrive")?;
        self.nodes[i].number += 1;
        let now = self.now;
        let servers = self.nodes[i].servers;
        let number = self.nodes[i].number;
        // (departure to schedule, whether the arriving job starts now)
        let (next, started) = match &mut self.nodes[i].station {
            Station::Fcfs { queue, busy } => {
                if *busy < servers {
                    *busy += 1;
                    (Some((now + work, slot, 0)), true)
                } else {
                    queue.push_back(slot);
                    (None, false)
                }
            }
            Station::Ps { active, vtime, updated, generation } => {
                let before = number - 1;
                if before > 0 {
                    *vtime += (now - *updated) / f64::from(before);
                }
                *updated = now;
                active.push(Tag { finish: *vtime + work, slot });
                *generation += 1;
                let head = active.peek().expect("just pushed");
                let at = now + (head.finish - *vtime).max(0.0) * f64::from(number);
                (Some((at, head.slot, *generation)), true)
            }
        };
        if started {
            self.jobs[slot].start = now;
            self.trace(out, Some(i), slot, "start")?;
        }
        if let Some((at, s, generation)) = next {
            self.schedule(at, Kind::Departure { node: i, slot: s, generation });
        }
        Ok(())
    }

    fn depart(&mut self, i: usize, slot: usize, generation: u64, out: &mut Option<&mut dyn Write>) -> io::Result<()> {
        let now = self.now;
        if let Station::Ps { generation: g, .. } = &self.nodes[i].station {
            if *g != generation {
                return Ok(());
            }
        }
        self.accrue(i);
        self.nodes[i].number -= 1;
        let number = self.nodes[i].number;
        let next = match &mut self.nodes[i].station {
            Station::Fcfs { queue, busy } => {
                *busy -= 1;
                queue.pop_front().map(|n| {
                    *busy += 1;
                    (now + self.jobs[n].work, n, 0, true)
                })
            }
            Station::Ps { active, vtime, updated, generation: g } => {
                *vtime += (now - *updated) / f64::from(number + 1);
                *updated = now;
                let done = active.pop().expect("departure from empty PS node");
                debug_assert_eq!(done.slot, slot);
                *vtime = vtime.max(done.finish);
                *g += 1;
                let gen = *g;
                active.peek().map(|head| {
                    let at = now + (head.finish - *vtime).max(0.0) * f64::from(number);
                    (at, head.slot, gen, false)
                })
            }
        };
        if let Some((at, s, generation, started)) = next {
            if started {
                self.jobs[s].start = now;
                self.trace(out, Some(i), s, "start")?;
            }
            self.schedule(at, Kind::Departure { node: i, slot: s, generation });
        }

        let job = self.jobs[slot].clone();
        let response = now - job.node_arrival;
        let waiting = match self.nodes[i].station {
            Station::Fcfs { .. } => job.start - job.node_arrival,
            Station::Ps { .. } => (response - job.work).max(0.0),
        };
        let in_window = self.in_window(now);
        let s = &mut self.stats.nodes[i];
        if in_window {
            s.classes[job.class].window_departures += 1;
        }
        if job.tracked {
            s.visits += 1;
            s.sum_waiting += waiting;
            s.sum_response += response;
            let c = &mut s.classes[job.class];
            c.visits += 1;
            c.sum_waiting += waiting;
            c.sum_response += response;
        }
        self.trace(out, Some(i), slot, "depart")?;
        self.route(i, slot, out)
    }

    fn route(&mut self, i: usize, slot: usize, out: &mut Option<&mut dyn Write>) -> io::Result<()> {
        let class = self.jobs[slot].class;
        let u: f64 = self.nodes[i].routing_rng.random();
        let target = self.nodes[i].routes[class].iter().find(|(c, _)| u < *c).map(|&(_, t)| t);
        match target {
            Some(t) => {
                let (node, class) = (t / self.classes, t % self.classes);
                self.jobs[slot].class = class;
                self.enter(node, slot, out)
            }
            None => {
                self.trace(out, None, slot, "exit")?;
                let job = &self.jobs[slot];
                self.stats.departures += 1;
                if job.tracked {
                    let t = self.now - job.entered;
                    self.stats.sum_chain += t;
                    self.stats.completed += 1;
                    let c = &mut self.stats.class_chain[job.entry_class];
                    c.0 += t;
                    c.1 += 1;
                    self.outstanding -= 1;
                }
                self.free.push(slot);
                Ok(())
            }
        }
    }

    pub fn run(mut self, mut out: Option<&mut dyn Write>) -> io::Result<ReplicationStats> {
        let first = self.arrival_rng.sample::<f64, _>(Exp1) / self.cfg.spec.external_rate;
        self.schedule(first, Kind::Arrival);
        while let Some(ev) = self.events.pop() {
            if self.window_done() && self.outstanding == 0 {
                break;
            }
            self.now = ev.time;
            match ev.kind {
                Kind::Arrival => {
                    if self.arrivals_open {
                        self.external_arrival(&mut out)?;
                    }
                }
                Kind::Departure { node, slot, generation } => self.depart(node, slot, generation, &mut out)?,
            }
        }
        // close the time averages at the window end
        if self.end.is_finite() {
            self.now = self.now.max(self.end);
            for i in 0..self.nodes.len() {
                self.accrue(i);
            }
            self.stats.window = self.end - self.start.min(self.end);
        }
        Ok(self.stats)
    }
}
