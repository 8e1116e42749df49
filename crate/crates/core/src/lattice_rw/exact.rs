//! Exact small-horizon laws by dynamic programming and enumeration.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::point::{check_dim, LatticePoint};
use super::walk::{apply_step, ClassCounts, CoincidenceClass};
use crate::env_model::MAX_DIM;
use crate::error::{Error, Result};
use crate::scalar::Weight;

/// Largest horizon accepted by [`enumerate_pair_exact`].
pub const MAX_PAIR_HORIZON: usize = 6;
/// Largest number of enumerated four-walk paths.
pub const MAX_QUAD_PATHS: u64 = 50_000_000;

/// Displacements `e_a - e_b` of the difference walk with multiplicities
/// out of `(2d)^2`.
pub fn difference_kernel(d: usize) -> Vec<([i32; MAX_DIM], u64)> {
    let two_d = 2 * d as u32;
    let mut acc: BTreeMap<[i32; MAX_DIM], u64> = BTreeMap::new();
    for a in 0..two_d {
        for b in 0..two_d {
            let mut z = [0; MAX_DIM];
            apply_step(&mut z, a);
            apply_step(&mut z, b ^ 1);
            *acc.entry(z).or_default() += 1;
        }
    }
    acc.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairLawEntry<T> {
    pub intersections: u32,
    pub diff: LatticePoint,
    pub prob: T,
}

/// Exact joint law of `(N_n, S_n - S~_n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairLawTable<T> {
    pub horizon: usize,
    pub dim: usize,
    pub entries: Vec<PairLawEntry<T>>,
}

/// Dynamic programming over the difference walk with state `(N, z)`.
pub fn enumerate_pair_exact<T: Weight>(n: usize, d: usize) -> Result<PairLawTable<T>> {
    check_dim(d)?;
    if n == 0 || n > MAX_PAIR_HORIZON {
        return Err(Error::Budget {
            what: "exact pair enumeration".into(),
            needed: format!("horizon {n}"),
            limit: format!("1..={MAX_PAIR_HORIZON}"),
        });
    }
    let kernel: Vec<([i32; MAX_DIM], T)> = {
        let total = T::from_count((4 * d * d) as u64);
        difference_kernel(d)
            .into_iter()
            .map(|(z, c)| (z, T::from_count(c) / total.clone()))
            .collect()
    };
    let mut states: HashMap<(u32, [i32; MAX_DIM]), T> = HashMap::new();
    states.insert((0, [0; MAX_DIM]), T::one());
    for _ in 0..n {
        let mut next: HashMap<(u32, [i32; MAX_DIM]), T> = HashMap::with_capacity(states.len() * 4);
        for ((k, z), p) in &states {
            let k2 = k + (*z == [0; MAX_DIM]) as u32;
            for (dz, w) in &kernel {
                let mut y = *z;
                for (a, b) in y.iter_mut().zip(dz) {
                    *a += b;
                }
                let slot = next.entry((k2, y)).or_insert_with(T::zero);
                *slot = slot.clone() + p.clone() * w.clone();
            }
        }
        states = next;
    }
    let mut entries: Vec<PairLawEntry<T>> = states
        .into_iter()
        .map(|((k, z), prob)| PairLawEntry {
            intersections: k,
            diff: LatticePoint::from_array(z, d),
            prob,
        })
        .collect();
    entries.sort_by(|a, b| (a.intersections, a.diff).cmp(&(b.intersections, b.diff)));
    for e in &entries {
        // S - S~ is a sum of even-parity increments, and visits are counted
        // at times 0..n only.
        assert!(e.diff.is_even(), "odd-parity difference in pair table");
        assert!(e.intersections >= 1 && e.intersections as usize <= n);
        assert!(e.diff.l1() <= 2 * n as i64);
    }
    Ok(PairLawTable { horizon: n, dim: d, entries })
}

impl<T: Weight> PairLawTable<T> {
    pub fn total(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, e| acc + e.prob.clone())
    }

    /// Law of `N_n`, indexed by `k` in `0..=n`.
    pub fn intersection_marginal(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.horizon + 1];
        for e in &self.entries {
            let k = e.intersections as usize;
            out[k] = out[k].clone() + e.prob.clone();
        }
        out
    }

    /// `P[f(N_n, S_n - S~_n)]` in floating point.
    pub fn expect<F: Fn(u32, &LatticePoint) -> f64>(&self, f: F) -> f64 {
        self.entries
            .iter()
            .map(|e| e.prob.to_f64_lossy() * f(e.intersections, &e.diff))
            .sum()
    }

    /// `P[e^{lambda2 N_n} f(S_n - S~_n)]`.
    pub fn weighted<F: Fn(&LatticePoint) -> f64>(&self, lambda2: f64, f: F) -> f64 {
        self.expect(|k, z| (lambda2 * k as f64).exp() * f(z))
    }
}

/// Exact joint law of the class counts over times `0..n` and the class at
/// time `n`, for four independent walks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadLawTable<T> {
    pub horizon: usize,
    pub dim: usize,
    pub entries: Vec<(ClassCounts, CoincidenceClass, T)>,
}

pub fn enumerate_quad_exact<T: Weight>(n: usize, d: usize) -> Result<QuadLawTable<T>> {
    check_dim(d)?;
    let two_d = 2 * d as u64;
    let paths = (n as u32)
        .checked_mul(4)
        .and_then(|e| two_d.checked_pow(e))
        .filter(|&p| p <= MAX_QUAD_PATHS);
    let Some(paths) = paths.filter(|_| n >= 1) else {
        return Err(Error::Budget {
            what: "exact four-walk enumeration".into(),
            needed: format!("(2d)^(4n) paths with n = {n}, d = {d}"),
            limit: format!("{MAX_QUAD_PATHS} paths"),
        });
    };
    let mut counts: HashMap<(ClassCounts, CoincidenceClass), u64> = HashMap::new();
    let combos = (two_d as u32).pow(4);
    fn recurse(
        depth: usize,
        n: usize,
        two_d: u32,
        combos: u32,
        pos: [[i32; MAX_DIM]; 4],
        acc: ClassCounts,
        out: &mut HashMap<(ClassCounts, CoincidenceClass), u64>,
    ) {
        let class = CoincidenceClass::of(&pos);
        if depth == n {
            *out.entry((acc, class)).or_default() += 1;
            return;
        }
        let mut acc = acc;
        acc.record(class);
        for c in 0..combos {
            let mut next = pos;
            let mut c = c;
            for p in next.iter_mut() {
                apply_step(p, c % two_d);
                c /= two_d;
            }
            recurse(depth + 1, n, two_d, combos, next, acc, out);
        }
    }
    recurse(0, n, two_d as u32, combos, [[0; MAX_DIM]; 4], ClassCounts::default(), &mut counts);
    let total = T::from_count(paths);
    let mut entries: Vec<(ClassCounts, CoincidenceClass, T)> = counts
        .into_iter()
        .map(|((cc, cl), c)| (cc, cl, T::from_count(c) / total.clone()))
        .collect();
    entries.sort_by(|a, b| (a.0, a.1 as u8).cmp(&(b.0, b.1 as u8)));
    Ok(QuadLawTable { horizon: n, dim: d, entries })
}

impl<T: Weight> QuadLawTable<T> {
    pub fn total(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, e| acc + e.2.clone())
    }

    pub fn expect<F: Fn(&ClassCounts, CoincidenceClass) -> f64>(&self, f: F) -> f64 {
        self.entries
            .iter()
            .map(|(cc, cl, p)| p.to_f64_lossy() * f(cc, *cl))
            .sum()
    }
}

/// Distribution of a simple random walk after `m` steps on a dense box.
#[derive(Clone, Debug)]
pub struct SrwLaw {
    pub dim: usize,
    pub steps: usize,
    half: usize,
    side: usize,
    data: Vec<f64>,
}

impl SrwLaw {
    pub fn new(d: usize, m: usize, max_cells: usize) -> Result<Self> {
        check_dim(d)?;
        let side = 2 * m + 3;
        let cells = side
            .checked_pow(d as u32)
            .filter(|&c| c <= max_cells)
            .ok_or_else(|| Error::Budget {
                what: "walk distribution table".into(),
                needed: format!("{side}^{d} cells"),
                limit: format!("{max_cells} cells"),
            })?;
        let half = m + 1;
        let mut cur = vec![0.0; cells];
        let mut next = vec![0.0; cells];
        let strides: Vec<usize> = (0..d).map(|i| side.pow((d - 1 - i) as u32)).collect();
        let origin: usize = strides.iter().map(|s| s * half).sum();
        cur[origin] = 1.0;
        let inv = 1.0 / (2 * d) as f64;
        for step in 0..m {
            next.iter_mut().for_each(|v| *v = 0.0);
            // only cells within l1 distance `step` of the origin are occupied
            for idx in 0..cells {
                let p = cur[idx];
                if p == 0.0 {
                    continue;
                }
                let q = p * inv;
                for s in &strides {
                    next[idx + s] += q;
                    next[idx - s] += q;
                }
            }
            let _ = step;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Self { dim: d, steps: m, half, side, data: cur })
    }

    fn index(&self, x: &[i32]) -> Option<usize> {
        let mut idx = 0;
        for &c in x {
            let shifted = c as i64 + self.half as i64;
            if shifted < 0 || shifted >= self.side as i64 {
                return None;
            }
            idx = idx * self.side + shifted as usize;
        }
        Some(idx)
    }

    pub fn prob(&self, x: &[i32]) -> f64 {
        self.index(x).map_or(0.0, |i| self.data[i])
    }

    /// Nonzero entries in index order.
    pub fn support(&self) -> Vec<(LatticePoint, f64)> {
        let d = self.dim;
        let mut out = Vec::new();
        for (idx, &p) in self.data.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut c = [0i32; MAX_DIM];
            let mut r = idx;
            for i in (0..d).rev() {
                c[i] = (r % self.side) as i32 - self.half as i32;
                r /= self.side;
            }
            out.push((LatticePoint::from_array(c, d), p));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn kernel_counts() {
        let k = difference_kernel(3);
        assert_eq!(k.iter().map(|(_, c)| c).sum::<u64>(), 36);
        let stay = k.iter().find(|(z, _)| *z == [0; MAX_DIM]).unwrap().1;
        assert_eq!(stay, 6);
        assert_eq!(k.len(), 1 + 6 + 12);
    }

    #[test]
    fn exact_pair_small_horizons() {
        let t1 = enumerate_pair_exact::<BigRational>(1, 3).unwrap();
        assert_eq!(t1.intersection_marginal()[1], ratio(1, 1));
        let t2 = enumerate_pair_exact::<BigRational>(2, 3).unwrap();
        let m = t2.intersection_marginal();
        assert_eq!(m[2], ratio(1, 6));
        assert_eq!(m[1], ratio(5, 6));
        let t6 = enumerate_pair_exact::<f64>(6, 3).unwrap();
        assert_relative_eq!(t6.total(), 1.0, epsilon = 1e-12);
        assert!(enumerate_pair_exact::<f64>(7, 3).is_err());
    }

    #[test]
    fn exact_quad_normalises() {
        let q = enumerate_quad_exact::<BigRational>(1, 3).unwrap();
        assert_eq!(q.total(), ratio(1, 1));
        assert!(q.entries.iter().all(|(cc, _, _)| cc.four == 1));
        let four_at_one: BigRational = q
            .entries
            .iter()
            .filter(|e| e.1 == CoincidenceClass::Four)
            .fold(ratio(0, 1), |a, e| a + e.2.clone());
        assert_eq!(four_at_one, ratio(1, 216));
    }

    #[test]
    fn srw_law_has_parity_support() {
        let law = SrwLaw::new(3, 5, 1 << 20).unwrap();
        let total: f64 = law.support().iter().map(|(_, p)| p).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        assert_eq!(law.prob(&[0, 0, 0]), 0.0);
        assert!(law.support().iter().all(|(x, _)| x.parity() == 1 && x.l1() <= 5));
        let law2 = SrwLaw::new(3, 2, 1 << 20).unwrap();
        assert_relative_eq!(law2.prob(&[0, 0, 0]), 1.0 / 6.0, epsilon = 1e-15);
    }
}
