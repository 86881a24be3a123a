//! Enumeration and sampling of interleavings.
//!
//! An interleaving of per-processor step counts is a distinct arrangement of
//! the multiset in which processor `p` appears `counts[p]` times. The
//! enumerator walks them in lexicographic order, so the `k`-th schedule can
//! also be produced directly by [`nth_schedule`] for chunked parallel walks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ids::ProcId;
use crate::sim::Schedule;

/// Default bound on the total number of steps of an enumerated schedule.
pub const DEFAULT_STEP_CAP: usize = 20;

pub type StepCounts = BTreeMap<ProcId, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("{total_steps} total steps exceed the cap of {cap} ({interleavings} interleavings)")]
    CapExceeded {
        total_steps: usize,
        cap: usize,
        interleavings: u128,
    },
    #[error("schedule index {index} out of range ({count} interleavings)")]
    IndexOutOfRange { index: u128, count: u128 },
}

/// Multinomial coefficient `(Σ c)! / Π c!`, saturating at `u128::MAX`.
pub fn interleaving_count(counts: &StepCounts) -> u128 {
    let mut total: u128 = 0;
    let mut acc: u128 = 1;
    for &c in counts.values() {
        for k in 1..=c as u128 {
            total += 1;
            // acc * total / k stays integral: acc is a product of binomials.
            acc = match acc.checked_mul(total) {
                Some(v) => v / k,
                None => return u128::MAX,
            };
        }
    }
    acc
}

fn multiset(counts: &StepCounts) -> Vec<ProcId> {
    counts
        .iter()
        .flat_map(|(&p, &c)| std::iter::repeat_n(p, c))
        .collect()
}

fn check_cap(counts: &StepCounts, cap: usize) -> Result<(), ScheduleError> {
    let total_steps: usize = counts.values().sum();
    if total_steps > cap {
        return Err(ScheduleError::CapExceeded {
            total_steps,
            cap,
            interleavings: interleaving_count(counts),
        });
    }
    Ok(())
}

/// Every interleaving of `counts`, each exactly once, in lexicographic order.
pub fn enumerate_schedules(counts: &StepCounts) -> Result<Interleavings, ScheduleError> {
    enumerate_schedules_capped(counts, DEFAULT_STEP_CAP)
}

pub fn enumerate_schedules_capped(
    counts: &StepCounts,
    cap: usize,
) -> Result<Interleavings, ScheduleError> {
    check_cap(counts, cap)?;
    Ok(Interleavings {
        next: Some(multiset(counts)),
    })
}

/// The interleaving at lexicographic rank `index`.
pub fn nth_schedule(counts: &StepCounts, index: u128) -> Result<Schedule, ScheduleError> {
    let count = interleaving_count(counts);
    if index >= count {
        return Err(ScheduleError::IndexOutOfRange { index, count });
    }
    let mut remaining = counts.clone();
    remaining.retain(|_, c| *c > 0);
    let total: usize = remaining.values().sum();
    let mut idx = index;
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        let procs: Vec<ProcId> = remaining.keys().copied().collect();
        let mut chosen = None;
        for p in procs {
            let c = remaining[&p];
            remaining.insert(p, c - 1);
            let block = interleaving_count(&remaining);
            if idx < block {
                chosen = Some(p);
                break;
            }
            idx -= block;
            remaining.insert(p, c);
        }
        let p = chosen.expect("index below the interleaving count");
        if remaining[&p] == 0 {
            remaining.remove(&p);
        }
        out.push(p);
    }
    Ok(Schedule(out))
}

/// Streaming iterator over interleavings.
#[derive(Clone, Debug)]
pub struct Interleavings {
    next: Option<Vec<ProcId>>,
}

impl Interleavings {
    /// Continues the lexicographic walk from `start` (inclusive).
    pub fn starting_at(start: Schedule) -> Self {
        Interleavings {
            next: Some(start.0),
        }
    }
}

impl Iterator for Interleavings {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(Schedule(current))
    }
}

fn next_permutation(v: &mut [ProcId]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// A uniformly random interleaving of `counts`; identical seeds give
/// identical schedules.
pub fn random_schedule(counts: &StepCounts, seed: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_schedule_with(counts, &mut rng)
}

pub fn random_schedule_with<R: rand::Rng + ?Sized>(counts: &StepCounts, rng: &mut R) -> Schedule {
    let mut steps = multiset(counts);
    steps.shuffle(rng);
    Schedule(steps)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn counts(c: &[usize]) -> StepCounts {
        c.iter().enumerate().map(|(i, &k)| (ProcId(i), k)).collect()
    }

    /// Independent count: number of distinct arrangements by recursion on
    /// the first element.
    fn count_by_recursion(c: &mut Vec<usize>) -> u128 {
        if c.iter().all(|&k| k == 0) {
            return 1;
        }
        let mut total = 0;
        for i in 0..c.len() {
            if c[i] > 0 {
                c[i] -= 1;
                total += count_by_recursion(c);
                c[i] += 1;
            }
        }
        total
    }

    #[test]
    fn two_single_steps_give_two_schedules() {
        assert_eq!(enumerate_schedules(&counts(&[1, 1])).unwrap().count(), 2);
    }

    #[test]
    fn solo_gives_one_schedule() {
        let all: Vec<_> = enumerate_schedules(&counts(&[3])).unwrap().collect();
        assert_eq!(all, vec![Schedule(vec![ProcId(0); 3])]);
    }

    #[test]
    fn four_four_three_gives_11550_distinct() {
        let c = counts(&[4, 4, 3]);
        let all: BTreeSet<_> = enumerate_schedules(&c).unwrap().collect();
        assert_eq!(all.len(), 11_550);
        assert_eq!(interleaving_count(&c), 11_550);
        assert_eq!(count_by_recursion(&mut vec![4, 4, 3]), 11_550);
    }

    #[test]
    fn two_writers_two_readers_count() {
        assert_eq!(interleaving_count(&counts(&[4, 4, 3, 3])), 4_204_200);
        assert_eq!(count_by_recursion(&mut vec![4, 4, 3, 3]), 4_204_200);
    }

    #[test]
    fn cap_is_enforced_with_count() {
        let err = enumerate_schedules(&counts(&[11, 10])).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::CapExceeded {
                total_steps: 21,
                cap: 20,
                interleavings: 352_716
            }
        );
    }

    #[test]
    fn nth_matches_enumeration_order() {
        let c = counts(&[2, 3, 1]);
        for (k, s) in enumerate_schedules(&c).unwrap().enumerate() {
            assert_eq!(nth_schedule(&c, k as u128).unwrap(), s);
        }
        assert!(nth_schedule(&c, 60).is_err());
    }

    #[test]
    fn zero_counts_are_ignored() {
        let c = counts(&[2, 0, 1]);
        assert_eq!(enumerate_schedules(&c).unwrap().count(), 3);
        assert_eq!(nth_schedule(&c, 2).unwrap(), Schedule(vec![ProcId(2), ProcId(0), ProcId(0)]));
    }

    #[test]
    fn random_schedule_is_seed_deterministic() {
        let c = counts(&[2, 2]);
        let a = random_schedule(&c, 42);
        assert_eq!(a.len(), 4);
        assert_eq!(a, random_schedule(&c, 42));
        assert_eq!(random_schedule(&counts(&[1]), 9), Schedule(vec![ProcId(0)]));
    }

    #[test]
    fn distinct_seeds_spread_over_interleavings() {
        let c = counts(&[2, 2]);
        let mut seen = BTreeMap::new();
        for seed in 0..1000u64 {
            *seen.entry(random_schedule(&c, seed)).or_insert(0u32) += 1;
        }
        // all 6 interleavings appear, none dominates
        assert_eq!(seen.len(), 6);
        assert!(seen.values().all(|&n| (100..=240).contains(&n)), "{seen:?}");
    }
}
