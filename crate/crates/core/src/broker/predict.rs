//! Measure-and-extrapolate predictor for job consumption rates and
//! completion times.

use crate::model::{peak_rate, BrokerResourceView, Gridlet};

/// MI per time-unit this resource is expected to deliver to the user.
///
/// Theoretical peak until the first job comes back; afterwards the cumulative
/// average of completed work over PE-normalised processing time.
pub fn measure_rate(view: &BrokerResourceView, now: f64) -> f64 {
    if view.completed_count == 0 || view.busy_elapsed <= 0.0 {
        peak_rate(&view.resource, now)
    } else {
        view.completed_mi / view.busy_elapsed
    }
}

/// Estimated MI already committed to a resource: everything assigned plus
/// the unprocessed part of every job in flight.
pub fn backlog_mi(view: &BrokerResourceView, gridlets: &[Gridlet], now: f64) -> f64 {
    let assigned: f64 = view.assigned.iter().map(|&g| gridlets[g].length_mi).sum();
    let per_job = view.measured_rate / f64::from(view.resource.pe_count);
    let in_flight: f64 = view
        .dispatched
        .iter()
        .map(|(&g, &since)| (gridlets[g].length_mi - per_job * (now - since)).max(0.0))
        .sum();
    assigned + in_flight
}

/// When each PE of the resource next becomes free, sorted ascending:
/// in-flight jobs first, then assigned jobs placed in order on the earliest
/// free PE. This is the order the dispatcher will actually run them in.
pub fn pe_release_times(view: &BrokerResourceView, gridlets: &[Gridlet], now: f64) -> Vec<f64> {
    let pes = view.resource.pe_count as usize;
    let per_job = view.measured_rate / pes as f64;
    let mut free: Vec<f64> = view
        .dispatched
        .iter()
        .map(|(&g, &since)| now + (gridlets[g].length_mi - per_job * (now - since)).max(0.0) / per_job)
        .collect();
    free.resize(pes.max(free.len()), now);
    free.sort_by(f64::total_cmp);
    for &g in &view.assigned {
        place_on_pe(&mut free, gridlets[g].length_mi / per_job);
    }
    free
}

/// Occupy the earliest free PE for `duration`, returning the finish time.
/// `free` stays sorted.
pub fn place_on_pe(free: &mut [f64], duration: f64) -> f64 {
    let finish = free[0] + duration;
    let pos = free.partition_point(|&t| t <= finish);
    free[..pos].rotate_left(1);
    free[pos - 1] = finish;
    finish
}

pub fn predict_completion(view: &BrokerResourceView, gridlets: &[Gridlet], length_mi: f64, now: f64) -> f64 {
    now + (backlog_mi(view, gridlets, now) + length_mi) / view.measured_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::wwg_testbed;

    fn view(id: &str) -> BrokerResourceView {
        BrokerResourceView::new(wwg_testbed().into_iter().find(|r| r.id == id).unwrap())
    }

    #[test]
    fn theoretical_rate_before_first_return() {
        assert_eq!(measure_rate(&view("R6"), 0.0), 6560.0);
        assert_eq!(measure_rate(&view("R6"), 1e5), 6560.0);
    }

    #[test]
    fn measured_rate_after_returns() {
        let mut v = view("R6");
        v.completed_mi = 30_000.0;
        v.completed_count = 3;
        v.busy_elapsed = 100.0;
        assert_eq!(measure_rate(&v, 500.0), 300.0);
    }

    #[test]
    fn availability_scales_theoretical_rate() {
        let mut v = view("R4");
        v.resource = v.resource.clone().with_availability(vec![(0.0, 1.0), (5.0, 0.5)]);
        assert_eq!(measure_rate(&v, 4.0), 760.0);
        assert_eq!(measure_rate(&v, 5.0), 380.0);
    }

    #[test]
    fn completion_on_empty_resource() {
        let g = vec![Gridlet::new(0, 10_000.0)];
        let v = view("R4");
        let t = predict_completion(&v, &g, 10_000.0, 0.0);
        assert!((t - 13.16).abs() < 0.01);
        assert_eq!(predict_completion(&v, &g, 760.0, 7.0), 8.0);
    }

    #[test]
    fn completion_with_backlog() {
        let gridlets: Vec<Gridlet> = (0..4).map(|i| Gridlet::new(i, 10_000.0)).collect();
        let mut v = view("R4");
        v.assigned = vec![0, 1, 2];
        let t = predict_completion(&v, &gridlets, 10_000.0, 0.0);
        assert!((t - 52.63).abs() < 0.01);
    }

    #[test]
    fn pe_release_follows_dispatch_order() {
        let gridlets: Vec<Gridlet> = [3800.0, 7600.0, 1900.0, 3800.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| Gridlet::new(i, l))
            .collect();
        let mut v = view("R4");
        v.dispatched.insert(0, 0.0);
        v.assigned = vec![1, 2, 3];
        // PE A: job0 until 10, then job2 (5) -> 15, then job3 (10) -> 25
        // PE B: job1 (20) from 0 -> 20
        let free = pe_release_times(&v, &gridlets, 0.0);
        assert_eq!(free, vec![20.0, 25.0]);
        let mut free = free;
        assert_eq!(place_on_pe(&mut free, 1.0), 21.0);
        assert_eq!(free, vec![21.0, 25.0]);
        assert_eq!(place_on_pe(&mut free, 10.0), 31.0);
        assert_eq!(free, vec![25.0, 31.0]);
    }

    #[test]
    fn in_flight_work_is_discounted_by_elapsed_time() {
        let gridlets: Vec<Gridlet> = (0..2).map(|i| Gridlet::new(i, 3800.0)).collect();
        let mut v = view("R4");
        v.dispatched.insert(0, 0.0);
        v.dispatched.insert(1, 5.0);
        // 380 MI/t per job: job 0 has 3800 - 3800 = 0 left at t=10, job 1 has 1900
        assert!((backlog_mi(&v, &gridlets, 10.0) - 1900.0).abs() < 1e-9);
        // floored at zero once overdue
        assert!((backlog_mi(&v, &gridlets, 100.0)).abs() < 1e-9);
    }
}
