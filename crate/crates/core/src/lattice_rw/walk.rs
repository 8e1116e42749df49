//! Trajectory samplers for two and four independent simple random walks.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::point::LatticePoint;
use crate::env_model::MAX_DIM;
use crate::rng::SplitMix64;

/// Moves `pos` one step in direction `dir` (`axis = dir / 2`, sign `+` for
/// even `dir`).
#[inline(always)]
pub fn apply_step(pos: &mut [i32; MAX_DIM], dir: u32) {
    let axis = (dir >> 1) as usize;
    if dir & 1 == 0 {
        pos[axis] += 1;
    } else {
        pos[axis] -= 1;
    }
}

/// Same as [`apply_step`] while tracking `|pos|^2`.
#[inline(always)]
fn apply_step_r2(pos: &mut [i32; MAX_DIM], r2: &mut i64, dir: u32) {
    let axis = (dir >> 1) as usize;
    let p = pos[axis] as i64;
    if dir & 1 == 0 {
        *r2 += 2 * p + 1;
        pos[axis] += 1;
    } else {
        *r2 += 1 - 2 * p;
        pos[axis] -= 1;
    }
}

/// The difference `S - S~` of two independent simple random walks.
///
/// Each step is one of the `(2d)^2` equally likely direction pairs, drawn
/// with a single bounded integer.
#[derive(Clone, Debug)]
pub struct DiffWalk {
    pub pos: [i32; MAX_DIM],
    pub r2: i64,
    two_d: u32,
    combos: u32,
}

impl DiffWalk {
    pub fn new(d: usize) -> Self {
        let two_d = 2 * d as u32;
        Self {
            pos: [0; MAX_DIM],
            r2: 0,
            two_d,
            combos: two_d * two_d,
        }
    }

    #[inline(always)]
    pub fn at_origin(&self) -> bool {
        self.r2 == 0
    }

    #[inline(always)]
    pub fn step(&mut self, rng: &mut SplitMix64) {
        let c = rng.below(self.combos);
        let a = c / self.two_d;
        let b = c % self.two_d;
        if a != b {
            apply_step_r2(&mut self.pos, &mut self.r2, a);
            apply_step_r2(&mut self.pos, &mut self.r2, b ^ 1);
        }
    }

    /// Runs `n` steps and returns the number of visits to the origin at
    /// times `0..n`.
    #[inline]
    pub fn run(&mut self, n: usize, rng: &mut SplitMix64) -> u32 {
        let mut visits = 0;
        for _ in 0..n {
            visits += self.at_origin() as u32;
            self.step(rng);
        }
        visits
    }
}

/// Summary of a pair of walks: intersection count and endpoint difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSummary {
    /// `N_n`, the number of `t < n` with `S_t = S~_t`.
    pub intersections: u32,
    pub diff: [i32; MAX_DIM],
    /// `|S_n - S~_n|^2`.
    pub r2: i64,
}

/// Samples `(N_n, S_n - S~_n)` on the difference walk.
#[inline]
pub fn sample_diff(d: usize, n: usize, rng: &mut SplitMix64) -> PairSummary {
    let mut w = DiffWalk::new(d);
    let intersections = w.run(n, rng);
    PairSummary {
        intersections,
        diff: w.pos,
        r2: w.r2,
    }
}

/// Position of a simple random walk after `m` steps, drawn in O(d) time
/// from the multinomial axis split and binomial signs.
pub fn sample_endpoint(d: usize, m: u64, rng: &mut SplitMix64) -> [i32; MAX_DIM] {
    let mut pos = [0i32; MAX_DIM];
    let mut left = m;
    for (i, p) in pos.iter_mut().enumerate().take(d) {
        let mi = if i + 1 == d {
            left
        } else {
            Binomial::new(left, 1.0 / (d - i) as f64).expect("valid binomial").sample(rng)
        };
        left -= mi;
        let plus = Binomial::new(mi, 0.5).expect("valid binomial").sample(rng);
        *p = (2 * plus as i64 - mi as i64) as i32;
    }
    pos
}

/// Coincidence pattern of four positions at one time slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoincidenceClass {
    /// All four at one site.
    Four,
    /// Exactly three at one site.
    Three,
    /// Two disjoint pairs.
    TwoTwo,
    /// One pair, the other two apart.
    TwoZero,
    /// All distinct.
    None,
}

impl CoincidenceClass {
    /// Classifies by the number of coinciding pairs among the six.
    #[inline]
    pub fn of(pos: &[[i32; MAX_DIM]; 4]) -> Self {
        let mut equal = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                equal += (pos[i] == pos[j]) as u32;
            }
        }
        match equal {
            6 => CoincidenceClass::Four,
            3 => CoincidenceClass::Three,
            2 => CoincidenceClass::TwoTwo,
            1 => CoincidenceClass::TwoZero,
            0 => CoincidenceClass::None,
            _ => unreachable!("coincidence is transitive"),
        }
    }
}

/// Class counts `N^(a)` over a range of time slices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassCounts {
    pub four: u32,
    pub three: u32,
    pub two_two: u32,
    pub two_zero: u32,
}

impl ClassCounts {
    #[inline]
    pub fn record(&mut self, class: CoincidenceClass) {
        match class {
            CoincidenceClass::Four => self.four += 1,
            CoincidenceClass::Three => self.three += 1,
            CoincidenceClass::TwoTwo => self.two_two += 1,
            CoincidenceClass::TwoZero => self.two_zero += 1,
            CoincidenceClass::None => {}
        }
    }

    /// `lambda4 N4 + lambda3 N3 + 2 lambda2 N22 + lambda2 N20`.
    #[inline]
    pub fn exponent(&self, lambda2: f64, lambda3: f64, lambda4: f64) -> f64 {
        lambda4 * self.four as f64
            + lambda3 * self.three as f64
            + lambda2 * (2 * self.two_two + self.two_zero) as f64
    }
}

/// Trajectory summaries of 2 or 4 independent walks from the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSample {
    pub horizon: usize,
    pub endpoints: Vec<LatticePoint>,
    /// `((i, j), N_n(S^i, S^j))` for `i < j`.
    pub pair_intersections: Vec<((usize, usize), u32)>,
    /// Class counts over times `0..n` (four replicas only).
    pub class_counts: Option<ClassCounts>,
}

impl ReplicaSample {
    pub fn replica_count(&self) -> usize {
        self.endpoints.len()
    }

    pub fn intersections(&self, i: usize, j: usize) -> u32 {
        let key = (i.min(j), i.max(j));
        self.pair_intersections
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("pair index in range")
    }
}

/// Two genuine independent walks of `n` steps.
pub fn sample_pair(d: usize, n: usize, rng: &mut SplitMix64) -> ReplicaSample {
    let two_d = 2 * d as u32;
    let mut s = [0i32; MAX_DIM];
    let mut r = [0i32; MAX_DIM];
    let mut count = 0;
    for _ in 0..n {
        count += (s == r) as u32;
        let c = rng.below(two_d * two_d);
        apply_step(&mut s, c / two_d);
        apply_step(&mut r, c % two_d);
    }
    ReplicaSample {
        horizon: n,
        endpoints: vec![LatticePoint::from_array(s, d), LatticePoint::from_array(r, d)],
        pair_intersections: vec![((0, 1), count)],
        class_counts: None,
    }
}

/// Four independent walks of `n` steps with per-slice class counting.
pub fn sample_quad(d: usize, n: usize, rng: &mut SplitMix64) -> ReplicaSample {
    let mut pos = [[0i32; MAX_DIM]; 4];
    let mut pairs = [0u32; 6];
    let mut classes = ClassCounts::default();
    walk_quad(d, n, rng, &mut pos, |p| {
        classes.record(CoincidenceClass::of(p));
        let mut k = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                pairs[k] += (p[i] == p[j]) as u32;
                k += 1;
            }
        }
    });
    let mut pair_intersections = Vec::with_capacity(6);
    let mut k = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            pair_intersections.push(((i, j), pairs[k]));
            k += 1;
        }
    }
    ReplicaSample {
        horizon: n,
        endpoints: pos.iter().map(|p| LatticePoint::from_array(*p, d)).collect(),
        pair_intersections,
        class_counts: Some(classes),
    }
}

/// Advances four walks `n` steps, calling `visit` on the positions at each
/// time `0..n` before stepping.
#[inline]
pub fn walk_quad<F: FnMut(&[[i32; MAX_DIM]; 4])>(
    d: usize,
    n: usize,
    rng: &mut SplitMix64,
    pos: &mut [[i32; MAX_DIM]; 4],
    mut visit: F,
) {
    let two_d = 2 * d as u32;
    let combos = two_d.pow(4);
    for _ in 0..n {
        visit(pos);
        let mut c = rng.below(combos);
        for p in pos.iter_mut() {
            apply_step(p, c % two_d);
            c /= two_d;
        }
    }
}

/// Class counts over `0..n` and the class at time `n`, without storing
/// anything else.
#[inline]
pub fn sample_quad_classes(d: usize, n: usize, rng: &mut SplitMix64) -> (ClassCounts, CoincidenceClass) {
    let mut pos = [[0i32; MAX_DIM]; 4];
    let mut classes = ClassCounts::default();
    walk_quad(d, n, rng, &mut pos, |p| classes.record(CoincidenceClass::of(p)));
    (classes, CoincidenceClass::of(&pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_partition_patterns() {
        let a = [0; MAX_DIM];
        let mut b = [0; MAX_DIM];
        b[0] = 2;
        let mut c = [0; MAX_DIM];
        c[1] = 2;
        let mut e = [0; MAX_DIM];
        e[2] = 2;
        assert_eq!(CoincidenceClass::of(&[a, a, a, a]), CoincidenceClass::Four);
        assert_eq!(CoincidenceClass::of(&[a, b, a, a]), CoincidenceClass::Three);
        assert_eq!(CoincidenceClass::of(&[a, b, b, a]), CoincidenceClass::TwoTwo);
        assert_eq!(CoincidenceClass::of(&[a, b, c, a]), CoincidenceClass::TwoZero);
        assert_eq!(CoincidenceClass::of(&[a, b, c, e]), CoincidenceClass::None);
    }

    #[test]
    fn diff_walk_tracks_norm() {
        let mut rng = SplitMix64::new(3);
        let mut w = DiffWalk::new(4);
        for _ in 0..1000 {
            w.step(&mut rng);
            let r2: i64 = w.pos.iter().map(|&c| c as i64 * c as i64).sum();
            assert_eq!(r2, w.r2);
            assert_eq!(w.pos.iter().map(|c| c.abs()).sum::<i32>() % 2, 0);
        }
    }

    #[test]
    fn endpoint_sampler_matches_walk_law() {
        use crate::lattice_rw::exact::SrwLaw;
        let law = SrwLaw::new(3, 6, 1 << 20).unwrap();
        let mut rng = SplitMix64::new(12);
        let n = 400_000;
        let mut origin = 0;
        let mut axis2 = 0;
        for _ in 0..n {
            let p = sample_endpoint(3, 6, &mut rng);
            assert_eq!(p.iter().map(|c| c.abs()).sum::<i32>() % 2, 0);
            origin += (p[..3] == [0, 0, 0]) as u32;
            axis2 += (p[..3] == [2, 0, 0]) as u32;
        }
        for (count, x) in [(origin, [0, 0, 0]), (axis2, [2, 0, 0])] {
            let p = law.prob(&x);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((count as f64 / n as f64 - p).abs() < 4.0 * se, "{x:?}: {count} vs {p}");
        }
    }

    #[test]
    fn quad_sample_invariants() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..200 {
            let s = sample_quad(3, 10, &mut rng);
            let cc = s.class_counts.unwrap();
            assert!(cc.four >= 1);
            let pair_sum: u32 = s.pair_intersections.iter().map(|(_, v)| v).sum();
            for v in [cc.four, cc.three, cc.two_two, cc.two_zero] {
                assert!(v <= pair_sum);
            }
            assert!(cc.four + cc.three + cc.two_two + cc.two_zero <= 10);
            assert!(s.intersections(2, 0) >= 1);
        }
    }
}
