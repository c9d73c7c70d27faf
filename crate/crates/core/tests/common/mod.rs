#![allow(dead_code)]

use gridsched::engine::{Engine, EventKind};
use gridsched::model::{Manager, Resource};
use gridsched::workload::SplitMix64;

/// A small engine instance: jobs `(resource, length_mi)` all submitted at
/// t=0 in index order.
#[derive(Debug, Clone)]
pub struct Instance {
    pub resources: Vec<Resource>,
    pub jobs: Vec<(usize, f64)>,
}

pub fn random_instance(rng: &mut SplitMix64, with_breakpoint: bool) -> Instance {
    let n_res = 1 + (rng.next_u64() % 3) as usize;
    let mut resources: Vec<Resource> = (0..n_res)
        .map(|i| {
            let pes = 1 + (rng.next_u64() % 4) as u32;
            let mips = 50.0 + 450.0 * rng.next_unit();
            let manager = if rng.next_u64() & 1 == 0 {
                Manager::TimeShared
            } else {
                Manager::SpaceShared
            };
            Resource::new(format!("X{i}"), pes, mips, 1.0 + rng.next_unit(), manager)
        })
        .collect();
    if with_breakpoint {
        let r = (rng.next_u64() % n_res as u64) as usize;
        let at = 0.5 + 20.0 * rng.next_unit();
        let factor = 0.05 + 0.95 * rng.next_unit();
        resources[r].availability = vec![(0.0, 1.0), (at, factor)];
    }
    let n_jobs = 1 + (rng.next_u64() % 6) as usize;
    let jobs = (0..n_jobs)
        .map(|_| {
            let r = (rng.next_u64() % n_res as u64) as usize;
            (r, 100.0 + 4900.0 * rng.next_unit())
        })
        .collect();
    Instance { resources, jobs }
}

/// Completion times reported by the engine, indexed by job.
pub fn engine_completions(inst: &Instance) -> Vec<f64> {
    let mut eng = Engine::new(inst.resources.clone());
    for (gid, &(r, len)) in inst.jobs.iter().enumerate() {
        eng.submit(r, gid, len).unwrap();
    }
    let mut done = vec![f64::NAN; inst.jobs.len()];
    let mut last = 0.0;
    while let Some(ev) = eng.advance() {
        assert!(ev.time >= last, "clock went backwards");
        last = ev.time;
        if let EventKind::GridletCompletion { gridlet, .. } = ev.kind {
            done[gridlet] = ev.time;
        }
    }
    done
}

/// Direct integration of piecewise-constant job rates, one resource at a
/// time, stepping from breakpoint to completion to breakpoint.
pub fn oracle_completions(inst: &Instance) -> Vec<f64> {
    let mut done = vec![f64::NAN; inst.jobs.len()];
    for (r, res) in inst.resources.iter().enumerate() {
        // (job, remaining) in FCFS order
        let mut pending: Vec<(usize, f64)> = inst
            .jobs
            .iter()
            .enumerate()
            .filter(|(_, &(jr, _))| jr == r)
            .map(|(j, &(_, len))| (j, len))
            .collect();
        let pes = res.pe_count as usize;
        let mut t = 0.0_f64;
        while !pending.is_empty() {
            let factor = res
                .availability
                .iter()
                .rfind(|&&(from, _)| from <= t)
                .map(|&(_, f)| f)
                .unwrap();
            let next_break = res
                .availability
                .iter()
                .map(|&(from, _)| from)
                .find(|&from| from > t)
                .unwrap_or(f64::INFINITY);
            let active = match res.manager {
                Manager::TimeShared => pending.len(),
                Manager::SpaceShared => pending.len().min(pes),
            };
            let rate = match res.manager {
                Manager::TimeShared => {
                    (res.pe_mips * factor).min(pes as f64 * res.pe_mips * factor / active as f64)
                }
                Manager::SpaceShared => res.pe_mips * factor,
            };
            let (first, min_rem) = pending[..active]
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, &(_, rem))| (i, rem))
                .unwrap();
            let to_finish = min_rem / rate;
            if next_break - t < to_finish {
                let dt = next_break - t;
                for job in &mut pending[..active] {
                    job.1 -= rate * dt;
                }
                t = next_break;
                continue;
            }
            t += to_finish;
            for (i, job) in pending[..active].iter_mut().enumerate() {
                job.1 = if i == first { 0.0 } else { job.1 - rate * to_finish };
            }
            pending.retain(|&(j, rem)| {
                if rem <= 1e-9 {
                    done[j] = t;
                    false
                } else {
                    true
                }
            });
        }
    }
    done
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
