use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{green_even, QuadratureSpec};
use super::{constants, GreenConstants};
use crate::error::{Error, Result};
use crate::lattice_rw::check_dim;

const FORMAT: &str = "polylab-green-v1";

/// Largest dense table accepted (entries).
pub const MAX_TABLE_CELLS: usize = 1 << 26;

/// Green function values on `||x||_inf <= r_max`, with the asymptotic form
/// beyond.
#[derive(Clone, Debug)]
pub struct GreenTable {
    dim: usize,
    r_max: usize,
    rel_tol: f64,
    g0: f64,
    pi_d: f64,
    k_d: f64,
    /// Dense over absolute coordinates, `(r_max + 1)^d` entries.
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    dim: usize,
    r_max: usize,
    rel_tol: f64,
    g0: f64,
    pi_d: f64,
    entries: usize,
}

/// Canonical even points `x_1 >= ... >= x_d >= 0` with `x_1 <= r_max`.
fn canonical_points(d: usize, r_max: usize) -> Vec<Vec<i32>> {
    fn rec(d: usize, bound: i32, prefix: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if prefix.len() == d {
            if prefix.iter().sum::<i32>() % 2 == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for v in 0..=bound {
            prefix.push(v);
            rec(d, v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, r_max as i32, &mut Vec::new(), &mut out);
    out
}

impl GreenTable {
    pub fn build(d: usize, r_max: usize, spec: &QuadratureSpec) -> Result<Self> {
        check_dim(d)?;
        spec.validate()?;
        let cells = (r_max + 1)
            .checked_pow(d as u32)
            .filter(|&c| c <= MAX_TABLE_CELLS)
            .ok_or_else(|| Error::Budget {
                what: "Green table".into(),
                needed: format!("{}^{d} entries", r_max + 1),
                limit: format!("{MAX_TABLE_CELLS} entries"),
            })?;
        let points = canonical_points(d, r_max);
        let computed: Vec<f64> = points
            .par_iter()
            .map(|p| green_even(p, spec))
            .collect::<Result<_>>()?;
        let lookup: HashMap<&[i32], f64> = points.iter().map(|p| p.as_slice()).zip(computed).collect();
        let side = r_max + 1;
        let mut values = vec![0.0; cells];
        let mut key = vec![0i32; d];
        for (idx, v) in values.iter_mut().enumerate() {
            let mut r = idx;
            for i in (0..d).rev() {
                key[i] = (r % side) as i32;
                r /= side;
            }
            if key.iter().sum::<i32>() % 2 != 0 {
                continue;
            }
            let mut canon = key.clone();
            canon.sort_unstable_by(|a, b| b.cmp(a));
            *v = lookup[canon.as_slice()];
        }
        let g0 = values[0];
        Ok(Self {
            dim: d,
            r_max,
            rel_tol: spec.rel_tol,
            g0,
            pi_d: 1.0 - 1.0 / g0,
            k_d: constants(d)?.k_d,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn pi_d(&self) -> f64 {
        self.pi_d
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn constants(&self) -> GreenConstants<f64> {
        constants(self.dim).expect("validated dimension")
    }

    pub fn in_table(&self, x: &[i32]) -> bool {
        x.iter().all(|c| c.unsigned_abs() as usize <= self.r_max)
    }

    /// `G(x)`: tabulated inside the cube, `K_d / |x|^{d-2}` outside, zero at
    /// odd sites.
    #[inline]
    pub fn get(&self, x: &[i32]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut idx = 0usize;
        let mut l1 = 0u32;
        let mut inside = true;
        for &c in x {
            let a = c.unsigned_abs();
            l1 += a;
            if a as usize > self.r_max {
                inside = false;
            }
            idx = idx * (self.r_max + 1) + a as usize;
        }
        if l1 % 2 == 1 {
            return 0.0;
        }
        if inside {
            self.values[idx]
        } else {
            let r2: f64 = x.iter().map(|&c| (c as f64) * (c as f64)).sum();
            self.k_d * r2.powf(-(self.dim as f64 - 2.0) / 2.0)
        }
    }

    /// Hitting probability `G(x) / G(0)` of two walks started at `0` and `x`.
    #[inline]
    pub fn hitting(&self, x: &[i32]) -> f64 {
        self.get(x) / self.g0
    }

    fn stem(d: usize, r_max: usize, rel_tol: f64) -> String {
        format!("green_d{d}_r{r_max}_tol{rel_tol:e}")
    }

    pub fn paths(dir: &Path, d: usize, r_max: usize, rel_tol: f64) -> (PathBuf, PathBuf) {
        let stem = Self::stem(d, r_max, rel_tol);
        (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.bin")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (json, bin) = Self::paths(dir, self.dim, self.r_max, self.rel_tol);
        let header = Header {
            format: FORMAT.into(),
            dim: self.dim,
            r_max: self.r_max,
            rel_tol: self.rel_tol,
            g0: self.g0,
            pi_d: self.pi_d,
            entries: self.values.len(),
        };
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&bin, bytes)?;
        fs::write(&json, serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, d: usize, r_max: usize, rel_tol: f64) -> Result<Self> {
        let (json, bin) = Self::paths(dir, d, r_max, rel_tol);
        let header: Header = serde_json::from_slice(&fs::read(&json)?)?;
        if header.format != FORMAT || header.dim != d || header.r_max != r_max || header.rel_tol != rel_tol {
            return Err(Error::Config(format!("Green cache {} does not match the request", json.display())));
        }
        let bytes = fs::read(&bin)?;
        if bytes.len() != 8 * header.entries || header.entries != (r_max + 1).pow(d as u32) {
            return Err(Error::Config(format!("Green cache {} is truncated", bin.display())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            dim: d,
            r_max,
            rel_tol,
            g0: header.g0,
            pi_d: header.pi_d,
            k_d: constants(d)?.k_d,
            values,
        })
    }

    /// Loads a cached table from `dir` if present, otherwise builds and
    /// stores it there.
    pub fn load_or_build(dir: Option<&Path>, d: usize, r_max: usize, spec: &QuadratureSpec) -> Result<Self> {
        if let Some(dir) = dir {
            if let Ok(t) = Self::load(dir, d, r_max, spec.rel_tol) {
                return Ok(t);
            }
            let t = Self::build(d, r_max, spec)?;
            t.save(dir)?;
            Ok(t)
        } else {
            Self::build(d, r_max, spec)
        }
    }
}
