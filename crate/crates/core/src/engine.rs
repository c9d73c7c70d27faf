//! Discrete-event kernel and the two resource execution models.
//!
//! Events are ordered by `(time, sequence)` where `sequence` is an insertion
//! counter, so a run is fully determined by its inputs. Completion events are
//! invalidated lazily: every change to a resource's rates bumps its version and
//! re-issues completions, and events carrying an old version are dropped when
//! they surface.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{GridletId, Manager, Resource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    GridletCompletion { resource: usize, gridlet: GridletId },
    SchedulingTick,
    AvailabilityChange { resource: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission {
    Started { rate: f64 },
    Queued { position: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningJob {
    pub gridlet: GridletId,
    pub remaining_mi: f64,
    pub rate: f64,
}

/// Execution state of one resource.
#[derive(Debug, Clone)]
pub struct ResourceState {
    pub resource: Resource,
    pub running: Vec<RunningJob>,
    /// FCFS backlog of `(gridlet, length_mi)`; always empty when time-shared.
    pub queue: VecDeque<(GridletId, f64)>,
    pub last_update: f64,
    version: u64,
}

impl ResourceState {
    pub fn new(resource: Resource) -> Self {
        ResourceState {
            resource,
            running: Vec::new(),
            queue: VecDeque::new(),
            last_update: 0.0,
            version: 0,
        }
    }

    fn factor(&self, t: f64) -> f64 {
        self.resource.availability_factor_at(t)
    }

    /// Processor-sharing rates: aggregate capacity split evenly, never more
    /// than one PE per job.
    pub fn time_shared_rates(&self, t: f64) -> Vec<f64> {
        let n = self.running.len();
        if n == 0 {
            return Vec::new();
        }
        let f = self.factor(t);
        let per_pe = self.resource.pe_mips * f;
        let share = self.resource.total_mips() * f / n as f64;
        vec![per_pe.min(share); n]
    }

    pub fn contains(&self, gid: GridletId) -> bool {
        self.running.iter().any(|j| j.gridlet == gid) || self.queue.iter().any(|&(g, _)| g == gid)
    }

    /// Bring every job's remaining work forward to `t` at current rates.
    pub fn advance_to(&mut self, t: f64) {
        let dt = t - self.last_update;
        if dt > 0.0 {
            for job in &mut self.running {
                job.remaining_mi = (job.remaining_mi - job.rate * dt).max(0.0);
            }
        }
        self.last_update = self.last_update.max(t);
    }

    fn recompute_rates(&mut self, t: f64) {
        match self.resource.manager {
            Manager::TimeShared => {
                let rates = self.time_shared_rates(t);
                for (job, rate) in self.running.iter_mut().zip(rates) {
                    job.rate = rate;
                }
            }
            Manager::SpaceShared => {
                let rate = self.resource.pe_mips * self.factor(t);
                for job in &mut self.running {
                    job.rate = rate;
                }
            }
        }
        self.version += 1;
    }

    fn promote_queue(&mut self) {
        while self.running.len() < self.resource.pe_count as usize {
            let Some((gridlet, len)) = self.queue.pop_front() else {
                break;
            };
            self.running.push(RunningJob {
                gridlet,
                remaining_mi: len,
                rate: 0.0,
            });
        }
    }

    pub fn space_shared_admit(&mut self, gid: GridletId, length_mi: f64, t: f64) -> Result<Admission> {
        if self.contains(gid) {
            return Err(Error::DuplicateAdmit(gid, self.resource.id.clone()));
        }
        self.advance_to(t);
        if self.running.len() < self.resource.pe_count as usize {
            self.running.push(RunningJob {
                gridlet: gid,
                remaining_mi: length_mi,
                rate: 0.0,
            });
            self.recompute_rates(t);
            Ok(Admission::Started {
                rate: self.resource.pe_mips * self.factor(t),
            })
        } else {
            self.queue.push_back((gid, length_mi));
            Ok(Admission::Queued {
                position: self.queue.len() - 1,
            })
        }
    }

    pub fn admit(&mut self, gid: GridletId, length_mi: f64, t: f64) -> Result<Admission> {
        match self.resource.manager {
            Manager::SpaceShared => self.space_shared_admit(gid, length_mi, t),
            Manager::TimeShared => {
                if self.contains(gid) {
                    return Err(Error::DuplicateAdmit(gid, self.resource.id.clone()));
                }
                self.advance_to(t);
                self.running.push(RunningJob {
                    gridlet: gid,
                    remaining_mi: length_mi,
                    rate: 0.0,
                });
                self.recompute_rates(t);
                Ok(Admission::Started {
                    rate: self.running.last().map_or(0.0, |j| j.rate),
                })
            }
        }
    }

    /// Rescale running jobs to the availability factor in force at `t`.
    pub fn apply_availability_change(&mut self, t: f64) {
        self.advance_to(t);
        self.recompute_rates(t);
    }

    /// Remove a running or queued job, returning the MI it had left.
    pub fn cancel_gridlet(&mut self, gid: GridletId, t: f64) -> Result<f64> {
        self.advance_to(t);
        if let Some(pos) = self.queue.iter().position(|&(g, _)| g == gid) {
            let (_, len) = self.queue.remove(pos).expect("position is in range");
            return Ok(len);
        }
        let pos = self
            .running
            .iter()
            .position(|j| j.gridlet == gid)
            .ok_or_else(|| Error::UnknownGridlet(gid, self.resource.id.clone()))?;
        let job = self.running.remove(pos);
        self.promote_queue();
        self.recompute_rates(t);
        Ok(job.remaining_mi)
    }

    fn complete(&mut self, gid: GridletId, t: f64) -> Result<()> {
        self.advance_to(t);
        let pos = self
            .running
            .iter()
            .position(|j| j.gridlet == gid)
            .ok_or_else(|| Error::UnknownGridlet(gid, self.resource.id.clone()))?;
        self.running.remove(pos);
        self.promote_queue();
        self.recompute_rates(t);
        Ok(())
    }

    /// Projected finish time of each running job at current rates.
    pub fn completion_times(&self) -> Vec<(GridletId, f64)> {
        self.running
            .iter()
            .map(|j| (j.gridlet, self.last_update + j.remaining_mi / j.rate))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    event: Event,
    stamp: Option<u64>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.event
            .time
            .total_cmp(&other.event.time)
            .then(self.event.sequence.cmp(&other.event.sequence))
    }
}

/// A single simulation instance. Not shared between threads.
#[derive(Debug, Clone)]
pub struct Engine {
    clock: f64,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Pending>>,
    states: Vec<ResourceState>,
}

impl Engine {
    pub fn new(resources: Vec<Resource>) -> Self {
        let mut engine = Engine {
            clock: 0.0,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            states: resources.into_iter().map(ResourceState::new).collect(),
        };
        for idx in 0..engine.states.len() {
            let times: Vec<f64> = engine.states[idx].resource.breakpoints().collect();
            for t in times {
                engine.push(t, EventKind::AvailabilityChange { resource: idx }, None);
            }
        }
        engine
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn states(&self) -> &[ResourceState] {
        &self.states
    }

    pub fn state(&self, resource: usize) -> Result<&ResourceState> {
        self.states.get(resource).ok_or(Error::UnknownResource(resource))
    }

    fn push(&mut self, time: f64, kind: EventKind, stamp: Option<u64>) {
        let event = Event {
            time,
            sequence: self.next_sequence,
            kind,
        };
        self.next_sequence += 1;
        self.queue.push(Reverse(Pending { event, stamp }));
    }

    pub fn schedule_tick(&mut self, time: f64) {
        self.push(time.max(self.clock), EventKind::SchedulingTick, None);
    }

    fn reissue_completions(&mut self, resource: usize) {
        let state = &self.states[resource];
        let version = state.version;
        let pending: Vec<(GridletId, f64)> = state.completion_times();
        for (gridlet, time) in pending {
            self.push(
                time.max(self.clock),
                EventKind::GridletCompletion { resource, gridlet },
                Some(version),
            );
        }
    }

    /// Hand a job to a resource at the current clock.
    pub fn submit(&mut self, resource: usize, gridlet: GridletId, length_mi: f64) -> Result<Admission> {
        let now = self.clock;
        let state = self.states.get_mut(resource).ok_or(Error::UnknownResource(resource))?;
        let admission = state.admit(gridlet, length_mi, now)?;
        if matches!(admission, Admission::Started { .. }) {
            self.reissue_completions(resource);
        }
        Ok(admission)
    }

    pub fn cancel(&mut self, resource: usize, gridlet: GridletId) -> Result<f64> {
        let now = self.clock;
        let state = self.states.get_mut(resource).ok_or(Error::UnknownResource(resource))?;
        let before = state.version;
        let remaining = state.cancel_gridlet(gridlet, now)?;
        if self.states[resource].version != before {
            self.reissue_completions(resource);
        }
        Ok(remaining)
    }

    fn is_stale(&self, pending: &Pending) -> bool {
        match (pending.event.kind, pending.stamp) {
            (EventKind::GridletCompletion { resource, .. }, Some(stamp)) => self.states[resource].version != stamp,
            _ => false,
        }
    }

    fn drop_stale(&mut self) {
        while let Some(Reverse(top)) = self.queue.peek() {
            if self.is_stale(top) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<f64> {
        self.drop_stale();
        self.queue.peek().map(|Reverse(p)| p.event.time)
    }

    /// Process the next live event. `None` means the simulation has finished.
    pub fn advance(&mut self) -> Option<Event> {
        self.drop_stale();
        let Reverse(pending) = self.queue.pop()?;
        let event = pending.event;
        debug_assert!(event.time >= self.clock);
        self.clock = self.clock.max(event.time);
        let now = self.clock;
        for state in &mut self.states {
            state.advance_to(now);
        }
        match event.kind {
            EventKind::GridletCompletion { resource, gridlet } => {
                self.states[resource]
                    .complete(gridlet, now)
                    .expect("live completion event refers to a running job");
                self.reissue_completions(resource);
            }
            EventKind::AvailabilityChange { resource } => {
                self.states[resource].apply_availability_change(now);
                self.reissue_completions(resource);
            }
            EventKind::SchedulingTick => {}
        }
        Some(event)
    }
}
