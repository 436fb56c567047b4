//! Piecewise-constant control signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which time axis a signal or trajectory lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    /// Physical time `[0, T]`.
    Physical,
    /// Normalized time `[0, r + 1]`.
    Normalized,
}

/// Control held constant on each cell `[breaks[k], breaks[k+1])`.
///
/// Uniform grids are the common case, but cells may have arbitrary widths so
/// that images of uniform grids under the change of time stay exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub domain: TimeDomain,
    pub breaks: Vec<f64>,
    pub m: usize,
    /// Row-major `cells x m`.
    pub values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(domain: TimeDomain, breaks: Vec<f64>, m: usize, values: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::InvalidControl("need at least one cell".into()));
        }
        if m == 0 {
            return Err(Error::InvalidControl("control dimension is zero".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidControl("cell breaks must be strictly increasing".into()));
        }
        if values.len() != (breaks.len() - 1) * m {
            return Err(Error::InvalidControl(format!(
                "expected {} values, got {}",
                (breaks.len() - 1) * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidControl("nonfinite entry".into()));
        }
        Ok(Self {
            domain,
            breaks,
            m,
            values,
        })
    }

    pub fn uniform_breaks(start: f64, end: f64, cells: usize) -> Vec<f64> {
        let mut b: Vec<f64> = (0..=cells)
            .map(|k| start + (end - start) * (k as f64) / (cells as f64))
            .collect();
        b[cells] = end;
        b
    }

    /// Uniform grid with `value(k)` on cell `k`.
    pub fn uniform<F>(domain: TimeDomain, start: f64, end: f64, cells: usize, m: usize, mut value: F) -> Result<Self>
    where
        F: FnMut(usize) -> Vec<f64>,
    {
        if cells == 0 {
            return Err(Error::InvalidControl("need at least one cell".into()));
        }
        let mut values = Vec::with_capacity(cells * m);
        for k in 0..cells {
            let v = value(k);
            if v.len() != m {
                return Err(Error::InvalidControl("cell value has wrong dimension".into()));
            }
            values.extend(v);
        }
        Self::new(domain, Self::uniform_breaks(start, end, cells), m, values)
    }

    pub fn constant(domain: TimeDomain, start: f64, end: f64, cells: usize, value: &[f64]) -> Result<Self> {
        Self::uniform(domain, start, end, cells, value.len(), |_| value.to_vec())
    }

    pub fn n_cells(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        self.breaks[self.breaks.len() - 1]
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn cell_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.m;
        &mut self.values[k * m..(k + 1) * m]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.breaks[k + 1] - self.breaks[k]
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.breaks[k] + self.breaks[k + 1])
    }

    /// Cell `k` with `breaks[k] <= t < breaks[k+1]`; the final break maps to
    /// the last cell and points outside the grid clamp to the end cells.
    pub fn locate(&self, t: f64) -> usize {
        let n = self.n_cells();
        // partition_point gives the first break strictly greater than t
        let idx = self.breaks.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Cell on the left of `t`: `breaks[k] < t <= breaks[k+1]`, where `t`
    /// within `snap` of a break is treated as that break.
    pub fn locate_left(&self, t: f64, snap: f64) -> usize {
        let k = self.locate(t);
        if k > 0 && (t - self.breaks[k]).abs() <= snap {
            k - 1
        } else {
            k
        }
    }

    /// Cell on the right of `t`: `breaks[k] <= t < breaks[k+1]` with the same
    /// snapping rule as [`Self::locate_left`].
    pub fn locate_right(&self, t: f64, snap: f64) -> usize {
        let k = self.locate(t);
        if k + 1 < self.n_cells() && (self.breaks[k + 1] - t).abs() <= snap {
            k + 1
        } else {
            k
        }
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        self.cell(self.locate(t))
    }

    /// L2 norm of the signal over its interval.
    pub fn l2_norm(&self) -> f64 {
        (0..self.n_cells())
            .map(|k| self.width(k) * self.cell(k).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}
