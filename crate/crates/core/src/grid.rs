//! Uniform rectangular lattices over a box and scalar fields on them.
//!
//! Nodes are numbered with axis 0 varying fastest. `resolution[k]` is the
//! number of nodes along axis `k`, so the spacing is
//! `(upper[k] - lower[k]) / (resolution[k] - 1)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Closed axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Grid(format!(
                "box corners have mismatched dimensions {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Grid(format!(
                    "box has empty interior along axis {}: [{a}, {b}]",
                    k + 1
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        Self::new(vec![-r; n], vec![r; n]).expect("r > 0")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Box with the same center and each side scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        let lower = self
            .lower
            .iter()
            .zip(&c)
            .map(|(a, c)| c + factor * (a - c))
            .collect();
        let upper = self
            .upper
            .iter()
            .zip(&c)
            .map(|(b, c)| c + factor * (b - c))
            .collect();
        BoxDomain { lower, upper }
    }

    /// Closed-set membership with a small relative slack for lattice roundoff.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| {
                let slack = 1e-12 * (b - a);
                *v >= a - slack && *v <= b + slack
            })
    }

    /// Whether `self` lies in the closure of `outer`.
    pub fn is_inside(&self, outer: &BoxDomain) -> bool {
        self.dim() == outer.dim()
            && self
                .lower
                .iter()
                .zip(&outer.lower)
                .all(|(a, b)| a >= b)
            && self
                .upper
                .iter()
                .zip(&outer.upper)
                .all(|(a, b)| a <= b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    resolution: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(domain: BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::Grid(format!(
                "resolution has {} axes but the box has {}",
                resolution.len(),
                domain.dim()
            )));
        }
        if let Some(k) = resolution.iter().position(|&r| r < 3) {
            return Err(Error::Grid(format!(
                "resolution along axis {} is {}; at least 3 nodes are required",
                k + 1,
                resolution[k]
            )));
        }
        let h = (0..domain.dim())
            .map(|k| (domain.upper[k] - domain.lower[k]) / (resolution[k] - 1) as f64)
            .collect();
        let mut strides = Vec::with_capacity(resolution.len());
        let mut len = 1usize;
        for &r in &resolution {
            strides.push(len);
            len *= r;
        }
        Ok(Grid {
            domain,
            resolution,
            h,
            strides,
            len,
        })
    }

    /// Same node count on every axis.
    pub fn uniform(domain: BoxDomain, nodes: usize) -> Result<Self> {
        let n = domain.dim();
        Self::new(domain, vec![nodes; n])
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&r| {
                let i = idx % r;
                idx /= r;
                i
            })
            .collect()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords_into(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for k in 0..self.dim() {
            let i = rest % self.resolution[k];
            rest /= self.resolution[k];
            out[k] = if i == self.resolution[k] - 1 {
                self.domain.upper[k]
            } else {
                self.domain.lower[k] + i as f64 * self.h[k]
            };
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords_into(idx, &mut x);
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut rest = idx;
        self.resolution.iter().any(|&r| {
            let i = rest % r;
            rest /= r;
            i == 0 || i == r - 1
        })
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.is_boundary(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| !self.is_boundary(i)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Interior nodes whose coordinates lie in the closed `sub` box.
    pub fn interior_nodes_in(&self, sub: &BoxDomain) -> Vec<usize> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len)
            .filter(|&i| {
                self.coords_into(i, &mut x);
                !self.is_boundary(i) && sub.contains(&x)
            })
            .collect()
    }
}

/// Scalar field on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at node {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords_into(i, &mut x);
                f(&x)
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        self.grid.boundary_mask()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let mut x = vec![0.0; self.grid.dim()];
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                self.grid.coords_into(i, &mut x);
                f(&x, v)
            })
            .collect();
        GridFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `a * self + b * other` on the same grid.
    pub fn axpby(&self, a: f64, other: &GridFunction, b: f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        GridFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
