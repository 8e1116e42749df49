//! Deterministic task fan-out.
//!
//! Work is split into fixed-size tasks whose boundaries depend only on the
//! total budget, never on the thread count. Each task owns the random stream
//! `(master, task index)`, and results are reduced in task order.

use rayon::prelude::*;

use crate::estimate::Accumulator;
use crate::rng::SplitMix64;

pub const DEFAULT_TASK_SIZE: u64 = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    pub index: u64,
    pub start: u64,
    pub len: u64,
}

pub fn tasks(total: u64, task_size: u64) -> Vec<Task> {
    let size = task_size.max(1);
    (0..total.div_ceil(size))
        .map(|index| {
            let start = index * size;
            Task {
                index,
                start,
                len: size.min(total - start),
            }
        })
        .collect()
}

/// Runs `f` on every task in parallel; output is in task order.
pub fn map_tasks<R, F>(total: u64, task_size: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Task) -> R + Sync + Send,
{
    tasks(total, task_size).into_par_iter().map(f).collect()
}

/// Monte Carlo mean of `sample` over `total` draws.
pub fn mc_mean<F>(master: u64, total: u64, task_size: u64, sample: F) -> Accumulator
where
    F: Fn(&mut SplitMix64) -> f64 + Sync + Send,
{
    map_tasks(total, task_size, |task| {
        let mut rng = SplitMix64::for_task(master, task.index);
        let mut acc = Accumulator::new();
        for _ in 0..task.len {
            acc.push(sample(&mut rng));
        }
        acc
    })
    .iter()
    .fold(Accumulator::new(), |a, b| a.merge(b))
}

/// Monte Carlo means of several statistics computed from one draw.
pub fn mc_means<const K: usize, F>(master: u64, total: u64, task_size: u64, sample: F) -> [Accumulator; K]
where
    F: Fn(&mut SplitMix64) -> [f64; K] + Sync + Send,
{
    map_tasks(total, task_size, |task| {
        let mut rng = SplitMix64::for_task(master, task.index);
        let mut acc = [Accumulator::new(); K];
        for _ in 0..task.len {
            let xs = sample(&mut rng);
            for (a, x) in acc.iter_mut().zip(xs) {
                a.push(x);
            }
        }
        acc
    })
    .iter()
    .fold([Accumulator::new(); K], |mut total, part| {
        for (t, p) in total.iter_mut().zip(part) {
            *t = t.merge(p);
        }
        total
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tasks_cover_the_budget() {
        let ts = tasks(10, 3);
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.iter().map(|t| t.len).sum::<u64>(), 10);
        assert_eq!(ts[3], Task { index: 3, start: 9, len: 1 });
        assert!(tasks(0, 5).is_empty());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_mean(42, 50_000, 1000, |rng| rng.uniform()))
        };
        assert_eq!(run(1), run(4));
    }
}
