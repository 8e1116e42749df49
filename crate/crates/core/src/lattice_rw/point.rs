use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env_model::MAX_DIM;
use crate::error::{domain, Result};

/// Supported lattice dimensions.
pub const DIMS: std::ops::RangeInclusive<usize> = 3..=MAX_DIM;

pub fn check_dim(d: usize) -> Result<()> {
    if DIMS.contains(&d) {
        Ok(())
    } else {
        domain(format!("dimension must be one of 3, 4, 5, got {d}"))
    }
}

/// A point of `Z^d`, `d` in `3..=5`, stored inline.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    coords: [i32; MAX_DIM],
    dim: u8,
}

impl LatticePoint {
    pub fn new(coords: &[i32]) -> Result<Self> {
        check_dim(coords.len())?;
        Ok(Self::from_slice(coords))
    }

    pub fn origin(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            coords: [0; MAX_DIM],
            dim: d as u8,
        })
    }

    /// Builds a point from an already validated dimension.
    pub(crate) fn from_slice(coords: &[i32]) -> Self {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            coords: c,
            dim: coords.len() as u8,
        }
    }

    pub(crate) fn from_array(coords: [i32; MAX_DIM], dim: usize) -> Self {
        Self {
            coords,
            dim: dim as u8,
        }
    }

    /// Point `k * e_axis`.
    pub fn axis(d: usize, axis: usize, k: i32) -> Result<Self> {
        let mut p = Self::origin(d)?;
        if axis >= d {
            return domain(format!("axis {axis} out of range for dimension {d}"));
        }
        p.coords[axis] = k;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }


    pub fn l1(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64).abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64).abs()).max().unwrap_or(0)
    }

    pub fn norm2(&self) -> i64 {
        self.coords().iter().map(|&c| c as i64 * c as i64).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// `||x||_1 mod 2`.
    pub fn parity(&self) -> u8 {
        (self.l1() & 1) as u8
    }

    pub fn is_even(&self) -> bool {
        self.parity() == 0
    }

    /// Absolute coordinates sorted in decreasing order: a canonical
    /// representative under the hyperoctahedral symmetry group.
    pub fn canonical(&self) -> LatticePoint {
        let mut c = [0i32; MAX_DIM];
        for (o, &x) in c.iter_mut().zip(self.coords()) {
            *o = x.abs();
        }
        c[..self.dim()].sort_unstable_by(|a, b| b.cmp(a));
        Self::from_array(c, self.dim())
    }

    pub fn sub(&self, other: &LatticePoint) -> LatticePoint {
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(other.coords) {
            *a -= b;
        }
        Self::from_array(c, self.dim())
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_and_parity() {
        let p = LatticePoint::new(&[3, -1, 2]).unwrap();
        assert_eq!(p.l1(), 6);
        assert_eq!(p.linf(), 3);
        assert_eq!(p.norm2(), 14);
        assert!(p.is_even());
        assert_eq!(p.canonical().coords(), &[3, 2, 1]);
        assert!(LatticePoint::new(&[1, 2]).is_err());
        assert!(LatticePoint::new(&[0; 6]).is_err());
    }
}
