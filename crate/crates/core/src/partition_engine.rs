//! Per-environment transfer sweep for the point-to-free-end partition
//! function.
//!
//! `W_{k+1}(y) = (2d)^{-1} sum_{x ~ y} W_k(x) e^{beta eta(k, x) - lambda}`,
//! starting from the unit mass at the origin. The profile lives in a dense
//! cube with two ping-pong buffers; at step `k` only the region
//! `{||x||_1 <= k, ||x||_1 = k mod 2, |x| <= rho_k}` is visited, where
//! `rho_k` is an optional Gaussian cut-off. Mass pushed outside the region is
//! dropped and reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::env_model::{CumulantSet, EnvField, EnvFieldSpec, HamiltonianConvention, MAX_DIM};
use crate::error::{domain, Error, Result};
use crate::lattice_rw::{check_dim, LatticePoint};
use crate::rng::{stream_seed, SplitMix64};
use crate::scalar::Scalar;
use crate::estimate::{Accumulator, MomentEstimate};
use crate::par::{mc_mean, DEFAULT_TASK_SIZE};

/// Spatial extent of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Truncation {
    /// The full diamond `||x||_1 <= k`.
    Exact,
    /// Intersect with the ball `|x| <= c sqrt(k / d) + 2`, with `c` the
    /// chi distribution quantile leaving upper tail mass `tail`.
    Gaussian { tail: f64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Gaussian { tail: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub dim: usize,
    pub horizon: usize,
    pub truncation: Truncation,
    /// Times at which the full profile is kept.
    pub checkpoints: Vec<usize>,
    /// Refuse sweeps whose two buffers need more than this many bytes.
    pub max_bytes: usize,
}

impl SweepOptions {
    pub fn new(dim: usize, horizon: usize) -> Self {
        Self {
            dim,
            horizon,
            truncation: Truncation::default(),
            checkpoints: Vec::new(),
            max_bytes: 2 << 30,
        }
    }

    pub fn exact(mut self) -> Self {
        self.truncation = Truncation::Exact;
        self
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: &[usize]) -> Self {
        self.checkpoints = checkpoints.to_vec();
        self
    }

    /// `c` such that `P(chi_d > c) = tail`, or `None` for the exact sweep.
    fn chi_quantile(&self) -> Result<Option<f64>> {
        match self.truncation {
            Truncation::Exact => Ok(None),
            Truncation::Gaussian { tail } => {
                if !(tail > 0.0 && tail < 1.0) {
                    return Err(Error::Config(format!("truncation tail must lie in (0, 1), got {tail}")));
                }
                let a = self.dim as f64 / 2.0;
                // P(chi^2_d > s) = Q(d/2, s/2); bisection on s
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                while gamma_ur(a, hi / 2.0) > tail {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if gamma_ur(a, mid / 2.0) > tail {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(Some(hi.sqrt()))
            }
        }
    }

    fn radius(c: Option<f64>, d: usize, k: usize) -> f64 {
        match c {
            None => f64::INFINITY,
            Some(c) => c * (k as f64 / d as f64).sqrt() + 2.0,
        }
    }

    /// Half width of the cube and its memory footprint in bytes.
    pub fn footprint<T>(&self) -> Result<(usize, usize)> {
        check_dim(self.dim)?;
        let c = self.chi_quantile()?;
        let r = Self::radius(c, self.dim, self.horizon);
        let half = if r.is_finite() {
            (r.floor() as usize).min(self.horizon)
        } else {
            self.horizon
        };
        let side = 2 * half + 3;
        let bytes = side
            .checked_pow(self.dim as u32)
            .and_then(|c| c.checked_mul(2 * std::mem::size_of::<T>()))
            .unwrap_or(usize::MAX);
        Ok((half, bytes))
    }
}

/// `W_n(x)` on its support at one time.
#[derive(Clone, Debug)]
pub struct EndpointProfile<T> {
    pub horizon: usize,
    pub dim: usize,
    half: usize,
    side: usize,
    data: Vec<T>,
    /// `W_n = sum_x W_n(x)`.
    pub total: f64,
    /// `I_n = sum_x W_n(x)^2`.
    pub overlap: f64,
}

impl<T: Scalar> EndpointProfile<T> {
    pub fn get(&self, x: &[i32]) -> T {
        let mut idx = 0;
        for &c in x {
            let s = c as i64 + self.half as i64;
            if s < 0 || s >= self.side as i64 {
                return T::zero();
            }
            idx = idx * self.side + s as usize;
        }
        self.data[idx]
    }

    /// Nonzero entries.
    pub fn support(&self) -> Vec<(LatticePoint, T)> {
        let d = self.dim;
        let mut out = Vec::new();
        for (idx, &v) in self.data.iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            let mut c = [0i32; MAX_DIM];
            let mut r = idx;
            for i in (0..d).rev() {
                c[i] = (r % self.side) as i32 - self.half as i32;
                r /= self.side;
            }
            out.push((LatticePoint::from_array(c, d), v));
        }
        out
    }
}

/// Martingale observables along one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTrace {
    pub spec: EnvFieldSpec,
    pub dim: usize,
    pub horizon: usize,
    /// `W_k`, `k = 0..=K`.
    pub w: Vec<f64>,
    /// `I_k = sum_x W_k(x)^2`, `k = 0..=K`.
    pub overlap: Vec<f64>,
    /// `sum_x W_k(x)^4`, `k = 0..=K`.
    pub quartic: Vec<f64>,
    /// Total mass dropped by the spatial cut-off.
    pub dropped_mass: f64,
}

impl MartingaleTrace {
    /// `D_{k+1} = W_{k+1} - W_k` for `k = 0..K`.
    pub fn increments(&self) -> Vec<f64> {
        self.w.windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// `E_k D_{k+1}^4 = (gamma4 - 3 gamma2) sum_x W_k(x)^4 + 3 gamma2 I_k^2`.
    pub fn conditional_fourth_moment(&self, k: usize, c: &CumulantSet<f64>) -> f64 {
        (c.gamma4 - 3.0 * c.gamma2) * self.quartic[k] + 3.0 * c.gamma2 * self.overlap[k] * self.overlap[k]
    }
}

struct Row {
    /// Cube index of the point with last coordinate 0.
    base: usize,
    /// Packed key words of that point (time excluded).
    lo: u64,
    hi: u64,
    zmax: i32,
}

struct Geometry {
    dim: usize,
    half: usize,
    strides: [usize; MAX_DIM],
    cells: usize,
    chi: Option<f64>,
}

impl Geometry {
    fn rows(&self, k: usize, field: &EnvField) -> Vec<Row> {
        let d = self.dim;
        let r = SweepOptions::radius(self.chi, d, k);
        let r2 = r * r;
        let b = self.half as i64;
        let k = k as i64;
        let mut rows = Vec::new();
        let mut x = [0i32; MAX_DIM];
        // iterate the first d-1 coordinates over [-b, b]
        fn rec(
            g: &Geometry,
            axis: usize,
            l1: i64,
            sq: f64,
            k: i64,
            b: i64,
            r2: f64,
            x: &mut [i32; MAX_DIM],
            field: &EnvField,
            rows: &mut Vec<Row>,
        ) {
            let d = g.dim;
            if axis == d - 1 {
                let by_l1 = k - l1;
                let by_ball = if r2.is_finite() { (r2 - sq).max(-1.0).sqrt().floor() as i64 } else { i64::MAX };
                if r2.is_finite() && r2 - sq < 0.0 {
                    return;
                }
                let mut zmax = by_l1.min(by_ball).min(b);
                if (by_l1 - zmax) % 2 != 0 {
                    zmax -= 1;
                }
                if zmax < 0 {
                    return;
                }
                x[d - 1] = 0;
                let base: usize = (0..d)
                    .map(|i| (x[i] as i64 + b + 1) as usize * g.strides[i])
                    .sum();
                let (lo, hi) = field.pack(&x[..d]);
                rows.push(Row { base, lo, hi, zmax: zmax as i32 });
                return;
            }
            let left = k - l1;
            let lim = left.min(b);
            for v in -lim..=lim {
                let sq2 = sq + (v * v) as f64;
                if sq2 > r2 {
                    continue;
                }
                x[axis] = v as i32;
                rec(g, axis + 1, l1 + v.abs(), sq2, k, b, r2, x, field, rows);
            }
            x[axis] = 0;
        }
        rec(self, 0, 0, 0.0, k, b, r2, &mut x, field, &mut rows);
        rows
    }
}

/// Runs the transfer sweep to `opts.horizon`.
pub fn evolve_profile<T: Scalar>(
    env: &EnvFieldSpec,
    opts: &SweepOptions,
) -> Result<(MartingaleTrace, Vec<EndpointProfile<T>>)> {
    let d = opts.dim;
    check_dim(d)?;
    let big_k = opts.horizon;
    if big_k == 0 {
        return domain("sweep horizon must be at least 1");
    }
    let field = env.field()?;
    let chi = opts.chi_quantile()?;
    let (half, bytes) = opts.footprint::<T>()?;
    if bytes > opts.max_bytes {
        return Err(Error::Budget {
            what: format!("profile buffers for horizon {big_k} in dimension {d}"),
            needed: format!("{bytes} bytes"),
            limit: format!("{} bytes", opts.max_bytes),
        });
    }
    let convention = env.hamiltonian_convention;
    let time_offset = match convention {
        HamiltonianConvention::Departure => 0,
        HamiltonianConvention::Arrival => 1,
    };
    field.check_range(d, half as i64 + 1, big_k as u64 + time_offset)?;

    let side = 2 * half + 3;
    let mut strides = [0usize; MAX_DIM];
    for i in 0..d {
        strides[i] = side.pow((d - 1 - i) as u32);
    }
    let geo = Geometry {
        dim: d,
        half,
        strides,
        cells: side.pow(d as u32),
        chi,
    };
    let mut cur = vec![T::zero(); geo.cells];
    let mut next = vec![T::zero(); geo.cells];
    let origin: usize = (0..d).map(|i| (half + 1) * strides[i]).sum();
    cur[origin] = T::one();

    let (z_shift, z_in_hi) = if d - 1 < 4 { (16 * (d - 1) as u32, false) } else { (0, true) };
    let key_at = |row: &Row, z: i32| -> (u64, u64) {
        let dz = (z as i64) as u64;
        if z_in_hi {
            (row.lo, row.hi.wrapping_add(dz))
        } else {
            (row.lo.wrapping_add(dz << z_shift), row.hi)
        }
    };
    let apply_weights = env.beta != 0.0;
    let inv_2d = T::lit(1.0 / (2 * d) as f64);

    let mut trace = MartingaleTrace {
        spec: *env,
        dim: d,
        horizon: big_k,
        w: Vec::with_capacity(big_k + 1),
        overlap: Vec::with_capacity(big_k + 1),
        quartic: Vec::with_capacity(big_k + 1),
        dropped_mass: 0.0,
    };
    let mut profiles = Vec::new();
    let mut rows = geo.rows(0, &field);

    for k in 0..=big_k {
        // pass 1: observables of W_k, then W_k(x) -> W_k(x) w(k, x) in place
        let weight_now = apply_weights && convention == HamiltonianConvention::Departure && k < big_k;
        let tw = field.time_word(k as u64);
        let snapshot = opts
            .checkpoints
            .contains(&k)
            .then(|| extract_profile::<T>(&cur, &rows, &geo, k));
        let (mut s1, mut s2, mut s4, mut pushed) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for row in &rows {
            let first = row.base - row.zmax as usize;
            for j in 0..=row.zmax as usize {
                let z = 2 * j as i32 - row.zmax;
                let idx = first + 2 * j;
                let v = cur[idx];
                let vf = v.to_f64_lossy();
                s1 += vf;
                let sq = vf * vf;
                s2 += sq;
                s4 += sq * sq;
                if weight_now {
                    let (lo, hi) = key_at(row, z);
                    let w = field.weight_packed(lo, hi | tw);
                    let u = vf * w;
                    pushed += u;
                    cur[idx] = T::lit(u);
                } else {
                    pushed += vf;
                }
            }
        }
        trace.w.push(s1);
        trace.overlap.push(s2);
        trace.quartic.push(s4);
        if let Some(mut p) = snapshot {
            p.total = s1;
            p.overlap = s2;
            profiles.push(p);
        }
        if k == big_k {
            break;
        }
        // pass 2: spread into the region at time k + 1
        let next_rows = geo.rows(k + 1, &field);
        let weight_next = apply_weights && convention == HamiltonianConvention::Arrival;
        let tw_next = field.time_word(k as u64 + 1);
        let mut received = 0.0f64;
        for row in &next_rows {
            let first = row.base - row.zmax as usize;
            for j in 0..=row.zmax as usize {
                let z = 2 * j as i32 - row.zmax;
                let idx = first + 2 * j;
                let mut acc = T::zero();
                for s in &strides[..d] {
                    acc = acc + cur[idx - s] + cur[idx + s];
                }
                let v = acc * inv_2d;
                received += v.to_f64_lossy();
                next[idx] = if weight_next {
                    let (lo, hi) = key_at(row, z);
                    T::lit(v.to_f64_lossy() * field.weight_packed(lo, hi | tw_next))
                } else {
                    v
                };
            }
        }
        trace.dropped_mass += (pushed - received).max(0.0);
        std::mem::swap(&mut cur, &mut next);
        rows = next_rows;
    }
    if !(trace.w[big_k] > 0.0) || !trace.w[big_k].is_finite() {
        return Err(Error::Numerical(format!(
            "partition function underflowed or overflowed at horizon {big_k} (W = {})",
            trace.w[big_k]
        )));
    }
    Ok((trace, profiles))
}

fn extract_profile<T: Scalar>(buf: &[T], rows: &[Row], geo: &Geometry, k: usize) -> EndpointProfile<T> {
    let d = geo.dim;
    let half = k.min(geo.half);
    let side = 2 * half + 1;
    let mut data = vec![T::zero(); side.pow(d as u32)];
    let off = geo.half as i64 + 1;
    for row in rows {
        let start = row.base;
        for z in (-row.zmax..=row.zmax).step_by(2) {
            let idx = (start as i64 + z as i64) as usize;
            // decode the cube index into coordinates
            let mut r = idx;
            let mut out = 0usize;
            let mut coords = [0i64; MAX_DIM];
            for i in (0..d).rev() {
                coords[i] = (r % (2 * geo.half + 3)) as i64 - off;
                r /= 2 * geo.half + 3;
            }
            for c in &coords[..d] {
                out = out * side + (c + half as i64) as usize;
            }
            data[out] = buf[idx];
        }
    }
    let profile = EndpointProfile {
        horizon: k,
        dim: d,
        half,
        side,
        data,
        total: 0.0,
        overlap: 0.0,
    };
    if cfg!(debug_assertions) {
        for (x, v) in profile.support() {
            debug_assert!(v >= T::zero());
            debug_assert!(x.l1() <= k as i64 && (x.l1() - k as i64) % 2 == 0, "W_k(x) nonzero off support at {x:?}");
        }
    }
    profile
}

/// Truncated conditional variance sum and a tail estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondVarSum {
    pub n: usize,
    pub horizon: usize,
    /// `kappa2 n^{(d-2)/2} sum_{k=n}^{K-1} I_k`.
    pub s2: f64,
    /// Fitted exponent `p` of `I_k ~ c k^{-p}` over the second half of the window.
    pub tail_exponent: f64,
    /// Extrapolated `kappa2 n^{(d-2)/2} sum_{k >= K} c k^{-p}` (infinite if `p <= 1`).
    pub tail_estimate: f64,
}

pub fn conditional_variance_sum(trace: &MartingaleTrace, n: usize, big_k: usize, kappa2: f64) -> Result<CondVarSum> {
    if n >= big_k {
        return domain(format!("conditional variance window needs n < K, got n = {n}, K = {big_k}"));
    }
    if big_k > trace.horizon {
        return domain(format!("K = {big_k} exceeds the trace horizon {}", trace.horizon));
    }
    let d = trace.dim as f64;
    let scale = kappa2 * (n as f64).powf((d - 2.0) / 2.0);
    let s2 = scale * trace.overlap[n..big_k].iter().sum::<f64>();
    let lo = (n + big_k) / 2;
    let pts: Vec<(f64, f64)> = (lo.max(1)..big_k)
        .filter(|&k| trace.overlap[k] > 0.0)
        .map(|k| ((k as f64).ln(), trace.overlap[k].ln()))
        .collect();
    let (tail_exponent, tail_estimate) = if pts.len() >= 3 && kappa2 > 0.0 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let c = (my - slope * mx).exp();
        let p = -slope;
        let tail = if p > 1.0 {
            scale * c * (big_k as f64 - 0.5).powf(1.0 - p) / (p - 1.0)
        } else {
            f64::INFINITY
        };
        (p, tail)
    } else {
        (f64::NAN, 0.0)
    };
    Ok(CondVarSum {
        n,
        horizon: big_k,
        s2,
        tail_exponent,
        tail_estimate,
    })
}

/// One environment's window statistic and its ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub env_seed: u64,
    pub n: usize,
    pub r: usize,
    pub w_n: f64,
    pub w_rn: f64,
    /// `n^{(d-2)/4} (W_{Rn} - W_n) / W_n`.
    pub g: f64,
    /// `kappa2 n^{(d-2)/2} sum_{k=n}^{Rn-1} I_k`.
    pub s2_trunc: f64,
    pub dropped_mass: f64,
}

/// Window statistic from a single sweep to `R n`.
pub fn window_statistic<T: Scalar>(
    env: &EnvFieldSpec,
    n: usize,
    r: usize,
    opts: &SweepOptions,
) -> Result<WindowSample> {
    if r < 2 || n == 0 {
        return domain(format!("window needs n >= 1 and R >= 2, got n = {n}, R = {r}"));
    }
    let big = n.checked_mul(r).ok_or_else(|| Error::Domain("window horizon overflows".into()))?;
    let mut o = opts.clone();
    o.horizon = big;
    o.checkpoints.clear();
    let (trace, _) = evolve_profile::<T>(env, &o)?;
    Ok(window_from_trace(&trace, n, r))
}

/// Window statistic from an existing trace with horizon at least `R n`.
pub fn window_from_trace(trace: &MartingaleTrace, n: usize, r: usize) -> WindowSample {
    let d = trace.dim as f64;
    let kappa2 = (trace.spec.law.log_mgf(2.0 * trace.spec.beta) - 2.0 * trace.spec.law.log_mgf(trace.spec.beta)).exp_m1();
    let w_n = trace.w[n];
    let w_rn = trace.w[r * n];
    // without disorder W_k = 1 identically; the swept sums differ from 1 by rounding only
    let g = if trace.spec.beta == 0.0 {
        0.0
    } else {
        (n as f64).powf((d - 2.0) / 4.0) * (w_rn - w_n) / w_n
    };
    WindowSample {
        env_seed: trace.spec.seed,
        n,
        r,
        w_n,
        w_rn,
        g,
        s2_trunc: kappa2 * (n as f64).powf((d - 2.0) / 2.0) * trace.overlap[n..r * n].iter().sum::<f64>(),
        dropped_mass: trace.dropped_mass,
    }
}

/// Environment with index `i` of the ensemble rooted at `master`.
pub fn ensemble_member(base: &EnvFieldSpec, master: u64, i: u64) -> EnvFieldSpec {
    let mut e = *base;
    e.seed = stream_seed(master, i);
    e
}

/// Applies `f` to `count` environments in parallel, results in index order.
pub fn run_ensemble<R, F>(base: &EnvFieldSpec, master: u64, count: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&EnvFieldSpec) -> Result<R> + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(&ensemble_member(base, master, i)))
        .collect()
}

/// Monte Carlo over path pairs in a fixed environment of
/// `kappa2 P[e^{h_k(S) + h_k(S~)} 1{S_k = S~_k}]`, where
/// `h_k(S) = sum_{t<k} (beta eta(t, S_t) - lambda)`.
pub fn overlap_path_pair_mc(
    env: &EnvFieldSpec,
    dim: usize,
    k: usize,
    kappa2: f64,
    samples: u64,
    seed: u64,
) -> Result<MomentEstimate> {
    check_dim(dim)?;
    let field = env.field()?;
    field.check_range(dim, k as i64, k as u64)?;
    let acc: Accumulator = mc_mean(seed, samples, DEFAULT_TASK_SIZE, |rng: &mut SplitMix64| {
        let two_d = 2 * dim as u32;
        let mut s = [0i32; MAX_DIM];
        let mut r = [0i32; MAX_DIM];
        let mut h = 1.0;
        for t in 0..k {
            h *= field.weight(t as u64, &s[..dim]) * field.weight(t as u64, &r[..dim]);
            let c = rng.below(two_d * two_d);
            crate::lattice_rw::walk::apply_step(&mut s, c / two_d);
            crate::lattice_rw::walk::apply_step(&mut r, c % two_d);
        }
        if s == r {
            kappa2 * h
        } else {
            0.0
        }
    });
    Ok(MomentEstimate::from_accumulator(&acc, seed))
}
