//! Strang-split spectral solvers for `i u_t = -Lap u + V u` on the periodic box.
//!
//! One step is `P K P` with `P = exp(-i V(t_{m+1/2}) dt / 2)` and
//! `K = exp(-i |xi|^2 dt)` applied in Fourier space. Final-value problems are
//! solved through `z(s) = conj(v(T - s))`, which turns the backward equation
//! with `conj(V)` into a forward solve with the time-reversed `V`; the result
//! is the exact adjoint of the discrete forward map.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_axis, Direction};
use crate::field::{Domain, SpaceTimeField, SpatialField};
use crate::grid::GridSpec;
use crate::potential::Potential;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SpatialField>,
    pub grid: GridSpec,
    pub potential_id: String,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpatialField {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn to_field(&self) -> SpaceTimeField {
        let mut values = Vec::with_capacity(self.states.len() * self.grid.space_len());
        for s in &self.states {
            values.extend_from_slice(&s.values);
        }
        SpaceTimeField::new(self.grid, values, Domain::Physical, crate::field::Support::Slab)
            .expect("trajectory shape matches grid")
    }
}

/// Unnormalised spatial FFT pair with the `1/N` folded into a multiplier.
struct Kinetic {
    shape: Vec<usize>,
    xi2: Vec<f64>,
    scale: f64,
}

impl Kinetic {
    fn new(grid: &GridSpec) -> Self {
        Kinetic {
            shape: grid.space_shape(),
            xi2: grid.xi_squared(),
            scale: 1.0 / grid.space_len() as f64,
        }
    }

    fn forward(&self, u: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            fft_axis(u, &self.shape, a, Direction::Forward);
        }
    }

    fn inverse(&self, u: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            fft_axis(u, &self.shape, a, Direction::Inverse);
        }
    }

    /// `u <- exp(-i |xi|^2 t) u` in physical space.
    fn apply(&self, u: &mut [Complex64], t: f64) {
        self.forward(u);
        for (v, &k2) in u.iter_mut().zip(&self.xi2) {
            *v *= Complex64::from_polar(self.scale, -k2 * t);
        }
        self.inverse(u);
    }
}

fn check_grid(f: &SpatialField, v: &Potential) -> Result<()> {
    if !f.grid.same_space(&v.grid) {
        return Err(Error::InvalidInput("state and potential grids differ".into()));
    }
    if f.domain != Domain::Physical {
        return Err(Error::InvalidInput("state must be physical-domain".into()));
    }
    Ok(())
}

/// Exact free evolution `exp(i t Lap) f`.
pub fn free_propagate(f: &SpatialField, t: f64) -> Result<SpatialField> {
    if f.domain != Domain::Physical {
        return Err(Error::InvalidInput("state must be physical-domain".into()));
    }
    let mut out = f.clone();
    if t != 0.0 {
        Kinetic::new(&f.grid).apply(&mut out.values, t);
    }
    Ok(out)
}

/// Potential phases for each step: `exp(-i V_mid dt / 2)`, computed lazily.
fn half_phase(v: &Potential, m: usize, dt: f64, buf: &mut [Complex64], out: &mut [Complex64]) {
    v.midpoint(m, buf);
    for (o, &vm) in out.iter_mut().zip(buf.iter()) {
        *o = (Complex64::new(0.0, -0.5 * dt) * vm).exp();
    }
}

fn strang(
    f: &SpatialField,
    v: &Potential,
    step_index: impl Fn(usize) -> usize,
    mut visit: impl FnMut(usize, &[Complex64]),
) -> Result<Vec<Complex64>> {
    check_grid(f, v)?;
    let grid = v.grid;
    let dt = grid.dt();
    let kin = Kinetic::new(&grid);
    let ns = grid.space_len();
    let stationary = !v.time_dependent();
    let mut buf = vec![Complex64::default(); ns];
    let mut phase = vec![Complex64::default(); ns];
    let mut u = f.values.clone();
    visit(0, &u);
    for m in 0..grid.n_time - 1 {
        if m == 0 || !stationary {
            half_phase(v, step_index(m), dt, &mut buf, &mut phase);
        }
        for (a, p) in u.iter_mut().zip(&phase) {
            *a *= p;
        }
        kin.apply(&mut u, dt);
        for (a, p) in u.iter_mut().zip(&phase) {
            *a *= p;
        }
        if !u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Divergence { step: m });
        }
        visit(m + 1, &u);
    }
    Ok(u)
}

/// Forward Strang trajectory on the slab nodes.
pub fn evolve(f: &SpatialField, v: &Potential) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(v.grid.n_time);
    strang(f, v, |m| m, |_, u| {
        states.push(SpatialField {
            grid: v.grid,
            values: u.to_vec(),
            domain: Domain::Physical,
        })
    })?;
    Ok(Trajectory {
        states,
        grid: v.grid,
        potential_id: v.id.clone(),
    })
}

/// `U_T f`.
pub fn initial_to_final(f: &SpatialField, v: &Potential) -> Result<SpatialField> {
    let values = strang(f, v, |m| m, |_, _| {})?;
    Ok(SpatialField {
        grid: v.grid,
        values,
        domain: Domain::Physical,
    })
}

/// Solves `i v_t = -Lap v + conj(V) v` backward from `v(T) = g`.
pub fn solve_final_value(g: &SpatialField, v: &Potential) -> Result<Trajectory> {
    let n = v.grid.n_time;
    let start = g.conj();
    let mut rev: Vec<SpatialField> = Vec::with_capacity(n);
    strang(&start, v, |m| n - 2 - m, |_, z| {
        rev.push(SpatialField {
            grid: v.grid,
            values: z.iter().map(|c| c.conj()).collect(),
            domain: Domain::Physical,
        })
    })?;
    rev.reverse();
    Ok(Trajectory {
        states: rev,
        grid: v.grid,
        potential_id: format!("final-value({})", v.id),
    })
}

/// Zero-data solution of `(i d_t + Lap - V) u = F`.
///
/// Each step adds `-i dt * H_m F(t_{m+1/2})`, where `H_m` is the Strang
/// half step and the source midpoint is the average of its node values.
pub fn solve_duhamel(source: &SpaceTimeField, v: &Potential) -> Result<Trajectory> {
    if source.support != crate::field::Support::Slab || !source.grid.same_space(&v.grid) {
        return Err(Error::InvalidInput("source must be a slab field on the potential grid".into()));
    }
    if source.n_times() != v.grid.n_time {
        return Err(Error::InvalidInput("source and potential time grids differ".into()));
    }
    let grid = v.grid;
    let ns = grid.space_len();
    let dt = grid.dt();
    let kin = Kinetic::new(&grid);
    let mut buf = vec![Complex64::default(); ns];
    let mut phase = vec![Complex64::default(); ns];
    let mut quarter = vec![Complex64::default(); ns];
    let mut u = vec![Complex64::default(); ns];
    let mut states = Vec::with_capacity(grid.n_time);
    states.push(SpatialField::zeros(grid));
    let mut src = vec![Complex64::default(); ns];
    for m in 0..grid.n_time - 1 {
        half_phase(v, m, dt, &mut buf, &mut phase);
        for (q, &vm) in quarter.iter_mut().zip(buf.iter()) {
            *q = (Complex64::new(0.0, -0.25 * dt) * vm).exp();
        }
        let (a, b) = (source.slice(m), source.slice(m + 1));
        for i in 0..ns {
            src[i] = (a[i] + b[i]) * (0.5 * quarter[i]);
        }
        kin.apply(&mut src, 0.5 * dt);
        for (u_i, p) in u.iter_mut().zip(&phase) {
            *u_i *= p;
        }
        kin.apply(&mut u, dt);
        for i in 0..ns {
            u[i] = u[i] * phase[i] + Complex64::new(0.0, -dt) * src[i] * quarter[i];
        }
        if !u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Divergence { step: m });
        }
        states.push(SpatialField {
            grid,
            values: u.clone(),
            domain: Domain::Physical,
        });
    }
    Ok(Trajectory {
        states,
        grid,
        potential_id: format!("duhamel({})", v.id),
    })
}
