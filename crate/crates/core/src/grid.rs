//! Uniform space-time grids on the periodic box `[-L, L)^n` times `[0, T]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n_dim: usize,
    pub half_width: f64,
    pub n_space: usize,
    pub horizon: f64,
    pub n_time: usize,
    pub time_pad_factor: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_dim: 2,
            half_width: 2.0 * PI,
            n_space: 64,
            horizon: 1.0,
            n_time: 129,
            time_pad_factor: 4,
        }
    }
}

impl GridSpec {
    /// Grid for the physical problem; requires `2 <= n_dim <= 3`.
    pub fn new(
        n_dim: usize,
        half_width: f64,
        n_space: usize,
        horizon: f64,
        n_time: usize,
        time_pad_factor: usize,
    ) -> Result<Self> {
        if !(2..=3).contains(&n_dim) {
            return Err(Error::InvalidInput(format!(
                "n_dim must be 2 or 3, got {n_dim}"
            )));
        }
        Self::reduced(n_dim, half_width, n_space, horizon, n_time, time_pad_factor)
    }

    /// Same checks as [`GridSpec::new`] but admits one spatial axis. Used for
    /// transverse amplitude grids and for the two-variable multiplier.
    pub fn reduced(
        n_dim: usize,
        half_width: f64,
        n_space: usize,
        horizon: f64,
        n_time: usize,
        time_pad_factor: usize,
    ) -> Result<Self> {
        let g = GridSpec {
            n_dim,
            half_width,
            n_space,
            horizon,
            n_time,
            time_pad_factor,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n_dim) {
            return Err(Error::InvalidInput(format!("n_dim {} out of range", self.n_dim)));
        }
        if !self.n_space.is_power_of_two() || self.n_space < 2 {
            return Err(Error::InvalidInput(format!(
                "n_space must be a power of two >= 2, got {}",
                self.n_space
            )));
        }
        if self.n_time < 2 {
            return Err(Error::InvalidInput("n_time must be at least 2".into()));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidInput("half_width must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        if self.time_pad_factor < 1 {
            return Err(Error::InvalidInput("time_pad_factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Same grid with a different number of time samples.
    pub fn with_n_time(&self, n_time: usize) -> Self {
        GridSpec { n_time, ..*self }
    }

    /// Grid over the first `n_dim - 1` axes (the transverse hyperplane).
    pub fn transverse(&self) -> Self {
        GridSpec {
            n_dim: self.n_dim - 1,
            ..*self
        }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_space as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_time - 1) as f64
    }

    /// Volume element `dx^n`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.n_dim as i32)
    }

    pub fn space_len(&self) -> usize {
        self.n_space.pow(self.n_dim as u32)
    }

    pub fn space_shape(&self) -> Vec<usize> {
        vec![self.n_space; self.n_dim]
    }

    pub fn n_ext(&self) -> usize {
        self.time_pad_factor * self.n_time
    }

    /// Index of `t = 0` inside the extended window. The slab sits centred.
    pub fn slab_offset(&self) -> usize {
        (self.time_pad_factor - 1) * self.n_time / 2
    }

    pub fn x_coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Signed integer frequency for FFT index `k` (FFT ordering).
    pub fn freq_index(k: usize, n: usize) -> i64 {
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Angular spatial frequency `pi k / L` for FFT index `k`.
    pub fn xi(&self, k: usize) -> f64 {
        PI * Self::freq_index(k, self.n_space) as f64 / self.half_width
    }

    /// Time of slab node `m`.
    pub fn t_slab(&self, m: usize) -> f64 {
        m as f64 * self.dt()
    }

    /// Time of extended-window node `m`.
    pub fn t_ext(&self, m: usize) -> f64 {
        (m as f64 - self.slab_offset() as f64) * self.dt()
    }

    /// Angular time frequency for FFT index `k` of the extended window.
    pub fn tau(&self, k: usize) -> f64 {
        let n = self.n_ext();
        2.0 * PI * Self::freq_index(k, n) as f64 / (n as f64 * self.dt())
    }

    /// Multi-index of a flat spatial index, axis 0 outermost.
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.n_dim).rev() {
            out[a] = idx % self.n_space;
            idx /= self.n_space;
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut mi = vec![0; self.n_dim];
        self.unravel(idx, &mut mi);
        mi.iter().map(|&j| self.x_coord(j)).collect()
    }

    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        let mut mi = vec![0; self.n_dim];
        self.unravel(idx, &mut mi);
        mi.iter().map(|&k| self.xi(k)).collect()
    }

    /// Flat index of an integer frequency vector (wrapped onto the grid).
    pub fn mode_index(&self, kappa: &[i64]) -> usize {
        let n = self.n_space as i64;
        kappa
            .iter()
            .fold(0usize, |acc, &k| acc * self.n_space + k.rem_euclid(n) as usize)
    }

    /// All spatial coordinates, one `Vec` per axis, in flat order.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        let len = self.space_len();
        let mut out = vec![Vec::with_capacity(len); self.n_dim];
        let mut mi = vec![0; self.n_dim];
        for idx in 0..len {
            self.unravel(idx, &mut mi);
            for a in 0..self.n_dim {
                out[a].push(self.x_coord(mi[a]));
            }
        }
        out
    }

    /// `|xi|^2` for every flat frequency index.
    pub fn xi_squared(&self) -> Vec<f64> {
        let len = self.space_len();
        let mut out = Vec::with_capacity(len);
        let mut mi = vec![0; self.n_dim];
        for idx in 0..len {
            self.unravel(idx, &mut mi);
            out.push(mi.iter().map(|&k| self.xi(k).powi(2)).sum());
        }
        out
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.n_dim == other.n_dim
            && self.n_space == other.n_space
            && self.half_width == other.half_width
    }
}
