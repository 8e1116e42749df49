//! Return probabilities of the simple random walk and renewal identities
//! for the intersection count of two walks.
//!
//! `S - S~` observed at integer times has the law of `(S_{2t})`, so the
//! visits of two walks to each other form a renewal sequence driven by
//! `u_t = P(S_{2t} = 0)`.

use super::point::check_dim;
use crate::env_model::MAX_DIM;
use crate::error::Result;

fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for k in 1..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

/// `u_t = P(S_{2t} = 0)` for `t = 0..=t_max`.
pub fn return_series(d: usize, t_max: usize) -> Result<Vec<f64>> {
    check_dim(d)?;
    transition_series(&[0; MAX_DIM][..d], t_max)
}

/// `P(S_{2t} = x)` for `t = 0..=t_max`.
///
/// The step counts are split one axis at a time with binomial weights,
/// each axis contributing its one-dimensional transition probability.
pub fn transition_series(x: &[i32], t_max: usize) -> Result<Vec<f64>> {
    let d = x.len();
    check_dim(d)?;
    let s_max = 2 * t_max;
    let lf = log_factorials(s_max);
    let ln2 = std::f64::consts::LN_2;
    // one-dimensional probability of displacement `xi` after `m` steps
    let axis = |xi: i32| -> Vec<f64> {
        let a = xi.unsigned_abs() as usize;
        (0..=s_max)
            .map(|m| {
                if m < a || (m - a) % 2 == 1 {
                    0.0
                } else {
                    (lf[m] - lf[(m + a) / 2] - lf[(m - a) / 2] - m as f64 * ln2).exp()
                }
            })
            .collect()
    };
    let mut u = axis(x[0]);
    for (j, &xj) in x.iter().enumerate().skip(1) {
        let q = axis(xj);
        let p = 1.0 / (j + 1) as f64;
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let mut next = vec![0.0; s_max + 1];
        for (s, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in 0..=s {
                if q[m] == 0.0 || u[s - m] == 0.0 {
                    continue;
                }
                let lb = lf[s] - lf[m] - lf[s - m] + m as f64 * lp + (s - m) as f64 * lq;
                acc += lb.exp() * q[m] * u[s - m];
            }
            *out = acc;
        }
        u = next;
    }
    Ok((0..=t_max).map(|t| u[2 * t]).collect())
}

/// First-return law `f_t` (`t >= 1`, `f_0 = 0`) from the return series.
pub fn first_return_series(u: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; u.len()];
    for t in 1..u.len() {
        let mut acc = u[t];
        for s in 1..t {
            acc -= f[s] * u[t - s];
        }
        f[t] = acc;
    }
    f
}

/// First-hitting law of the origin from `x`, `h_t = P_x(tau = t)`, given
/// `ux[t] = P(S_{2t} = x)` and the return series `u`.
pub fn first_hit_series(ux: &[f64], u: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; ux.len()];
    for t in 0..ux.len() {
        let mut acc = ux[t];
        for s in 0..t {
            acc -= h[s] * u[t - s];
        }
        h[t] = acc;
    }
    h
}

/// `P_x[e^{lambda N_k}]` for two walks started at offset `x`, from the
/// first-hitting law `h` and the moments `a` of [`intersection_exp_moments`].
pub fn shifted_exp_moment(h: &[f64], a: &[f64], k: usize) -> f64 {
    let mut hit = 0.0;
    let mut acc = 0.0;
    for s in 0..k {
        hit += h[s];
        acc += h[s] * a[k - s];
    }
    (1.0 - hit) + acc
}

/// `a_k = P[e^{lambda N_k}]` for `k = 0..=n`, where `N_k` counts visits
/// at times `0..k`.
pub fn intersection_exp_moments(lambda: f64, f: &[f64], n: usize) -> Vec<f64> {
    assert!(f.len() > n.saturating_sub(1), "first-return series too short");
    let e = lambda.exp();
    let mut tail = vec![1.0; n + 1]; // P(T >= k)
    for k in 1..=n {
        tail[k] = tail[k - 1] - if k >= 2 { f[k - 1] } else { 0.0 };
    }
    let mut a = vec![0.0; n + 1];
    a[0] = 1.0;
    for k in 1..=n {
        let mut acc = tail[k];
        for s in 1..k {
            acc += f[s] * a[k - s];
        }
        a[k] = e * acc;
    }
    a
}

/// `v_k = P[e^{lambda N_k} 1{S_k = S~_k}]` for `k = 0..=n`.
pub fn intersection_exp_at_meeting(lambda: f64, f: &[f64], n: usize) -> Vec<f64> {
    assert!(f.len() > n, "first-return series too short");
    let e = lambda.exp();
    let mut v = vec![0.0; n + 1];
    v[0] = 1.0;
    for k in 1..=n {
        let mut acc = 0.0;
        for s in 1..=k {
            acc += f[s] * v[k - s];
        }
        v[k] = e * acc;
    }
    v
}

/// Return probability `pi_d` from the partial renewal sum, with the
/// remainder closed by the local limit `u_t ~ c t^{-d/2}`.
pub fn return_probability_renewal(d: usize, t_max: usize) -> Result<f64> {
    let u = return_series(d, t_max)?;
    let partial: f64 = u[1..].iter().sum();
    // tail of sum_{t > T} c t^{-d/2} with c fitted at t = T
    let t = t_max as f64;
    let c = u[t_max] * t.powf(d as f64 / 2.0);
    let a = d as f64 / 2.0 - 1.0;
    let tail = c * (t + 0.5).powf(-a) / a;
    let g0 = 1.0 + partial + tail;
    Ok(1.0 - 1.0 / g0)
}
