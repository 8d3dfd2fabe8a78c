//! Orthogonality identity, Born-type reconstruction of the potential from
//! the initial-to-final-state map, and uniqueness-gap diagnostics.
//!
//! Probes are the grid modes `e_k(x) = exp(i kappa_k . x)`. For the Strang
//! scheme the part of `U_T e_{k1}` linear in `V` has, at mode `k2`,
//!
//! `G = e^{i|k2|^2 T} i <(U_T - e^{iT Lap}) e_{k1}, e_{k2}>
//!    = sum_m (dt/2)(e^{-i tau t_m} + e^{-i tau t_{m+1}}) Vhat(t_{m+1/2}, xi)`
//!
//! with `tau = |k1|^2 - |k2|^2`, `xi = k2 - k1` and `Vhat(t, xi)` the discrete
//! spatial transform `sum_x V(t, x) e^{-i xi . x} dx^n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dyadic::{l2_norm, time_weights};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::field::{Domain, SpaceTimeField, SpatialField, Support};
use crate::grid::GridSpec;
use crate::potential::Potential;
use crate::propagator::{evolve, initial_to_final, solve_final_value};

/// Guards relative comparisons near zero.
pub const EPS_FLOOR: f64 = 1e-12;

/// Anything that can produce `U_T f`.
pub trait StateMap {
    fn grid(&self) -> GridSpec;

    fn apply(&self, f: &SpatialField) -> Result<SpatialField>;

    fn apply_mode(&self, k: &[i64]) -> Result<SpatialField> {
        self.apply(&SpatialField::mode(self.grid(), k))
    }

    /// Mode indices this map can answer, if it is not a solver.
    fn probe_modes(&self) -> Option<Vec<Vec<i64>>> {
        None
    }
}

impl StateMap for Potential {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn apply(&self, f: &SpatialField) -> Result<SpatialField> {
        initial_to_final(f, self)
    }
}

/// `i <(U1 - U2) f, g>`.
pub fn identity_lhs(m1: &dyn StateMap, m2: &dyn StateMap, f: &SpatialField, g: &SpatialField) -> Result<Complex64> {
    if !m1.grid().same_space(&m2.grid()) || m1.grid().n_time != m2.grid().n_time {
        return Err(Error::InvalidInput("maps live on different grids".into()));
    }
    let d = m1.apply(f)?.sub(&m2.apply(f)?);
    Ok(Complex64::i() * d.inner(g))
}

/// `int_Sigma (V1 - V2) u1 conj(v2)` with `u1 = U^1 f` and `v2` the backward
/// solution for `conj(V2)` ending at `g`.
pub fn identity_rhs(v1: &Potential, v2: &Potential, f: &SpatialField, g: &SpatialField) -> Result<Complex64> {
    let v2 = v2.on_grid(v1.grid)?;
    let u1 = evolve(f, v1)?;
    let w2 = solve_final_value(g, &v2)?;
    let d1 = v1.slab_field();
    let d2 = v2.slab_field();
    let w = time_weights(&v1.grid, Support::Slab);
    let mut acc = Complex64::default();
    for m in 0..v1.grid.n_time {
        let s: Complex64 = d1
            .slice(m)
            .iter()
            .zip(d2.slice(m))
            .zip(&u1.states[m].values)
            .zip(&w2.states[m].values)
            .map(|(((a, b), u), v)| (a - b) * u * v.conj())
            .sum();
        acc += s * w[m];
    }
    Ok(acc * v1.grid.cell_volume())
}

/// `c_k = sum_x f(x) e^{-i kappa_k . x} dx^n` for every grid mode, FFT order.
pub fn mode_coefficients(f: &SpatialField) -> Vec<Complex64> {
    let g = f.grid;
    let mut c = f.values.clone();
    fft_nd(&mut c, &g.space_shape(), Direction::Forward);
    let scale = (g.space_len() as f64).sqrt() * g.cell_volume();
    let mut idx = vec![0usize; g.n_dim];
    for (q, v) in c.iter_mut().enumerate() {
        g.unravel(q, &mut idx);
        let parity = idx.iter().sum::<usize>() % 2;
        *v *= if parity == 0 { scale } else { -scale };
    }
    c
}

/// Inverse of [`mode_coefficients`]: `f(x) = |box|^{-1} sum_k c_k e^{i kappa_k . x}`.
pub fn from_mode_coefficients(grid: GridSpec, c: &[Complex64]) -> SpatialField {
    let mut v = c.to_vec();
    let mut idx = vec![0usize; grid.n_dim];
    let area = grid.space_len() as f64 * grid.cell_volume();
    let scale = (grid.space_len() as f64).sqrt() / area;
    for (q, x) in v.iter_mut().enumerate() {
        grid.unravel(q, &mut idx);
        let parity = idx.iter().sum::<usize>() % 2;
        *x *= if parity == 0 { scale } else { -scale };
    }
    fft_nd(&mut v, &grid.space_shape(), Direction::Inverse);
    SpatialField {
        grid,
        values: v,
        domain: Domain::Physical,
    }
}

/// `sum_m (dt/2)(e^{-i tau t_m} + e^{-i tau t_{m+1}}) e^{i omega t_{m+1/2}}`.
pub fn time_factor(grid: &GridSpec, tau: f64, omega: f64) -> Complex64 {
    let dt = grid.dt();
    let n = (grid.n_time - 1) as f64;
    let pre = (1.0 + Complex64::from_polar(1.0, -tau * dt)) * Complex64::from_polar(0.5 * dt, 0.5 * omega * dt);
    let r = Complex64::from_polar(1.0, (omega - tau) * dt);
    let den = 1.0 - r;
    let sum = if den.norm() < 1e-12 {
        Complex64::new(n, 0.0)
    } else {
        (1.0 - Complex64::from_polar(1.0, (omega - tau) * dt * n)) / den
    };
    pre * sum
}

fn signed_index(grid: &GridSpec, q: usize) -> Vec<i64> {
    let mut idx = vec![0usize; grid.n_dim];
    grid.unravel(q, &mut idx);
    idx.iter().map(|&k| GridSpec::freq_index(k, grid.n_space)).collect()
}

fn kappa_of(grid: &GridSpec, k: &[i64]) -> Vec<f64> {
    k.iter().map(|&v| std::f64::consts::PI * v as f64 / grid.half_width).collect()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// Grid index of a wave vector; errors when off the grid or outside the band.
pub fn kappa_index(grid: &GridSpec, kappa: &[f64]) -> Result<Vec<i64>> {
    if kappa.len() != grid.n_dim {
        return Err(Error::InvalidInput("kappa dimension differs from grid".into()));
    }
    let half = (grid.n_space / 2) as i64;
    kappa
        .iter()
        .map(|&k| {
            let s = k * grid.half_width / std::f64::consts::PI;
            let r = s.round();
            if (s - r).abs() > 1e-9 || r < -(half as f64) || r >= half as f64 {
                Err(Error::InvalidInput(format!("kappa component {k} is not a grid mode")))
            } else {
                Ok(r as i64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySample {
    pub tau: f64,
    pub xi: Vec<f64>,
    /// Estimate of the space-time transform of `V` at `(tau, xi)`.
    pub value: Complex64,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    /// `|h(tau)|^2`, the weight of this sample for a time-independent fit.
    pub weight: f64,
}

/// Born data `G` for every `k2` given the response to `e_{k1}`.
fn born_row(grid: &GridSpec, k1: &[i64], response: &SpatialField) -> Vec<Complex64> {
    let t = grid.horizon;
    let c = mode_coefficients(response);
    let q1 = grid.mode_index(k1);
    let kap1 = kappa_of(grid, k1);
    let a1 = sq(&kap1);
    let area = grid.space_len() as f64 * grid.cell_volume();
    c.iter()
        .enumerate()
        .map(|(q, &cq)| {
            let kap2 = grid.frequency(q);
            let free = if q == q1 { Complex64::from_polar(area, -a1 * t) } else { Complex64::default() };
            Complex64::from_polar(1.0, sq(&kap2) * t) * Complex64::i() * (cq - free)
        })
        .collect()
}

pub fn born_sample(map: &dyn StateMap, kappa1: &[f64], kappa2: &[f64]) -> Result<FrequencySample> {
    let grid = map.grid();
    let k1 = kappa_index(&grid, kappa1)?;
    let k2 = kappa_index(&grid, kappa2)?;
    let row = born_row(&grid, &k1, &map.apply_mode(&k1)?);
    Ok(make_sample(&grid, &k1, &k2, row[grid.mode_index(&k2)]))
}

fn make_sample(grid: &GridSpec, k1: &[i64], k2: &[i64], value: Complex64) -> FrequencySample {
    let a = kappa_of(grid, k1);
    let b = kappa_of(grid, k2);
    let tau = sq(&a) - sq(&b);
    FrequencySample {
        tau,
        xi: b.iter().zip(&a).map(|(x, y)| x - y).collect(),
        value,
        weight: time_factor(grid, tau, 0.0).norm_sqr(),
        kappa1: a,
        kappa2: b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Born,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconOptions {
    pub time_dependent: bool,
    /// Time-Fourier modes `-M..=M` per spatial frequency.
    pub time_modes: usize,
    /// Probe modes `k1` with `|k1|_inf <= radius` on a lattice of step `stride`.
    pub kappa_radius: i64,
    pub kappa_stride: i64,
    /// Singular values below `cutoff * sigma_max` are dropped.
    pub svd_cutoff: f64,
}

impl ReconOptions {
    pub fn time_independent() -> Self {
        ReconOptions {
            time_dependent: false,
            time_modes: 0,
            kappa_radius: 2,
            kappa_stride: 1,
            svd_cutoff: 1e-3,
        }
    }

    pub fn time_dependent() -> Self {
        ReconOptions {
            time_dependent: true,
            time_modes: 2,
            kappa_radius: 30,
            kappa_stride: 2,
            svd_cutoff: 1e-3,
        }
    }

    fn omegas(&self, grid: &GridSpec) -> Vec<f64> {
        if !self.time_dependent {
            return vec![0.0];
        }
        let m = self.time_modes as i64;
        (-m..=m).map(|j| 2.0 * std::f64::consts::PI * j as f64 / grid.horizon).collect()
    }

    /// Probe set on the grid, or the modes offered by the map.
    pub fn probes(&self, map: &dyn StateMap) -> Result<Vec<Vec<i64>>> {
        if let Some(m) = map.probe_modes() {
            if m.is_empty() {
                return Err(Error::MissingSample("map offers no mode probes".into()));
            }
            return Ok(m);
        }
        let grid = map.grid();
        let half = (grid.n_space / 2) as i64;
        let r = self.kappa_radius.min(half - 1);
        let s = self.kappa_stride.max(1);
        let axis: Vec<i64> = (-r..=r).filter(|k| k.rem_euclid(s) == 0).collect();
        let mut out: Vec<Vec<i64>> = vec![vec![]];
        for _ in 0..grid.n_dim {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self::time_independent()
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub estimate: Potential,
    pub relative_l2_error: Option<f64>,
    pub samples_used: usize,
    /// Worst `sigma_min / sigma_max` over the full-rank per-frequency systems.
    pub conditioning: f64,
    /// Frequencies whose system lost rank and had coefficients zeroed or filled.
    pub rank_deficient: usize,
    pub method: Method,
    /// Relative data misfit of each iterate, starting with the initial guess.
    pub misfit_history: Vec<f64>,
    pub early_stop: bool,
}

impl ReconstructionReport {
    pub fn score(&mut self, truth: &Potential) -> Result<f64> {
        let e = relative_error(&self.estimate, truth)?;
        self.relative_l2_error = Some(e);
        Ok(e)
    }
}

/// `||a - b|| / ||b||` in `L^2` of the slab.
pub fn relative_error(estimate: &Potential, truth: &Potential) -> Result<f64> {
    let t = truth.on_grid(estimate.grid)?.slab_field();
    let d = estimate.slab_field().sub(&t);
    Ok(l2_norm(&d) / l2_norm(&t).max(EPS_FLOOR))
}

/// Normal equations per spatial frequency.
struct Accumulator {
    p: usize,
    gram: Vec<Complex64>,
    rhs: Vec<Complex64>,
    count: usize,
    data_sq: f64,
}

impl Accumulator {
    fn new(ns: usize, p: usize) -> Self {
        Accumulator {
            p,
            gram: vec![Complex64::default(); ns * p * p],
            rhs: vec![Complex64::default(); ns * p],
            count: 0,
            data_sq: 0.0,
        }
    }

    fn add(&mut self, xi: usize, row: &[Complex64], g: Complex64) {
        let p = self.p;
        let gm = &mut self.gram[xi * p * p..(xi + 1) * p * p];
        for a in 0..p {
            let ca = row[a].conj();
            for b in 0..p {
                gm[a * p + b] += ca * row[b];
            }
            self.rhs[xi * p + a] += ca * g;
        }
        self.count += 1;
        self.data_sq += g.norm_sqr();
    }
}

struct Solved {
    coeffs: Vec<Vec<Complex64>>,
    conditioning: f64,
    rank_deficient: usize,
}

fn solve_normal(acc: &Accumulator, ns: usize, cutoff: f64) -> Solved {
    let p = acc.p;
    let mut coeffs = vec![vec![Complex64::default(); ns]; p];
    let mut cond = f64::INFINITY;
    let mut deficient = 0;
    for xi in 0..ns {
        let g = DMatrix::from_row_slice(p, p, &acc.gram[xi * p * p..(xi + 1) * p * p]);
        let b = DVector::from_row_slice(&acc.rhs[xi * p..(xi + 1) * p]);
        let eig = g.symmetric_eigen();
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let lmax = lam.iter().cloned().fold(0.0, f64::max);
        if lmax == 0.0 {
            deficient += 1;
            continue;
        }
        let mut x = DVector::<Complex64>::zeros(p);
        let mut kept = 0;
        for (i, &l) in lam.iter().enumerate() {
            if l > cutoff * cutoff * lmax {
                let v = eig.eigenvectors.column(i);
                let proj = v.adjoint() * &b;
                x += v * (proj[(0, 0)] / l);
                kept += 1;
            }
        }
        if kept < p {
            deficient += 1;
        } else {
            cond = cond.min((lam.iter().cloned().fold(f64::INFINITY, f64::min) / lmax).sqrt());
        }
        for a in 0..p {
            coeffs[a][xi] = x[a];
        }
    }
    Solved {
        coeffs,
        conditioning: if cond.is_finite() { cond } else { 0.0 },
        rank_deficient: deficient,
    }
}

/// Continuity fill at `xi = 0`: `(4 ring_1 - ring_2) / 3` from the axis
/// neighbours at one and two grid steps.
fn fill_origin(grid: &GridSpec, c: &mut [Complex64]) {
    let ring = |r: i64| {
        let mut s = Complex64::default();
        for a in 0..grid.n_dim {
            for sg in [-1, 1] {
                let mut k = vec![0i64; grid.n_dim];
                k[a] = sg * r;
                s += c[grid.mode_index(&k)];
            }
        }
        s / (2 * grid.n_dim) as f64
    };
    let v = (4.0 * ring(1) - ring(2)) / 3.0;
    c[0] = v;
}

fn assemble_estimate(grid: &GridSpec, opts: &ReconOptions, mut sol: Solved, id: &str) -> Result<(Potential, Solved)> {
    let omegas = opts.omegas(grid);
    if opts.time_dependent {
        for (j, w) in omegas.iter().enumerate() {
            if *w != 0.0 {
                fill_origin(grid, &mut sol.coeffs[j]);
            }
        }
    }
    let profiles: Vec<SpatialField> = sol.coeffs.iter().map(|c| from_mode_coefficients(*grid, c)).collect();
    let est = if !opts.time_dependent {
        Potential::stationary(&profiles[0], id.to_string())?
    } else {
        let mut f = SpaceTimeField::zeros(*grid, Support::Slab);
        let ns = grid.space_len();
        for m in 0..grid.n_time {
            let t = grid.t_slab(m);
            let row = f.slice_mut(m);
            for (prof, w) in profiles.iter().zip(&omegas) {
                let e = Complex64::from_polar(1.0, w * t);
                for i in 0..ns {
                    row[i] += prof.values[i] * e;
                }
            }
        }
        Potential::sampled(&f, id.to_string())?
    };
    Ok((est, sol))
}

/// Born data for every probe, computed once.
fn collect_data(map: &dyn StateMap, probes: &[Vec<i64>]) -> Result<Vec<Vec<Complex64>>> {
    let grid = map.grid();
    probes
        .iter()
        .map(|k1| Ok(born_row(&grid, k1, &map.apply_mode(k1)?)))
        .collect()
}

/// Least-squares fit of `data - model` over all probes.
fn fit(
    grid: &GridSpec,
    opts: &ReconOptions,
    probes: &[Vec<i64>],
    data: &[Vec<Complex64>],
    model: Option<&[Vec<Complex64>]>,
    mut sink: Option<&mut dyn FnMut(&FrequencySample)>,
) -> (Accumulator, f64) {
    let ns = grid.space_len();
    let omegas = opts.omegas(grid);
    let mut acc = Accumulator::new(ns, omegas.len());
    let mut row = vec![Complex64::default(); omegas.len()];
    let mut resid_sq = 0.0;
    let k2s: Vec<Vec<i64>> = (0..ns).map(|q| signed_index(grid, q)).collect();
    for (pi, k1) in probes.iter().enumerate() {
        let a1 = sq(&kappa_of(grid, k1));
        for (q, k2) in k2s.iter().enumerate() {
            let tau = a1 - sq(&grid.frequency(q));
            let d: Vec<i64> = k2.iter().zip(k1).map(|(a, b)| a - b).collect();
            let xi = grid.mode_index(&d);
            let mut g = data[pi][q];
            if let Some(m) = model {
                g -= m[pi][q];
            }
            for (r, w) in row.iter_mut().zip(&omegas) {
                *r = time_factor(grid, tau, *w);
            }
            acc.add(xi, &row, g);
            resid_sq += g.norm_sqr();
            if let Some(s) = sink.as_mut() {
                s(&make_sample(grid, k1, k2, g));
            }
        }
    }
    (acc, resid_sq)
}

pub fn reconstruct_born(map: &dyn StateMap, opts: &ReconOptions) -> Result<ReconstructionReport> {
    reconstruct_born_with(map, opts, None)
}

/// As [`reconstruct_born`], passing every sample to `sink`.
pub fn reconstruct_born_with(
    map: &dyn StateMap,
    opts: &ReconOptions,
    sink: Option<&mut dyn FnMut(&FrequencySample)>,
) -> Result<ReconstructionReport> {
    let grid = map.grid();
    let probes = opts.probes(map)?;
    let data = collect_data(map, &probes)?;
    let (acc, _) = fit(&grid, opts, &probes, &data, None, sink);
    let count = acc.count;
    let sol = solve_normal(&acc, grid.space_len(), opts.svd_cutoff);
    let (est, sol) = assemble_estimate(&grid, opts, sol, "born estimate")?;
    Ok(ReconstructionReport {
        estimate: est,
        relative_l2_error: None,
        samples_used: count,
        conditioning: sol.conditioning,
        rank_deficient: sol.rank_deficient,
        method: Method::Born,
        misfit_history: Vec::new(),
        early_stop: false,
    })
}

/// Distorted-Born refinement `W <- W + B(data - G(W))`, where `G(W)` is the
/// Born data of the simulated map for `W` and `B` the Born fit. Returns the
/// iterate with the smallest data misfit.
pub fn reconstruct_iterative(
    map: &dyn StateMap,
    initial: &Potential,
    iters: usize,
    opts: &ReconOptions,
) -> Result<ReconstructionReport> {
    if iters == 0 {
        return Err(Error::InvalidInput("iters must be at least 1".into()));
    }
    let grid = map.grid();
    let probes = opts.probes(map)?;
    let data = collect_data(map, &probes)?;
    let data_sq: f64 = data.iter().flatten().map(|v| v.norm_sqr()).sum();
    let mut w = initial.on_grid(grid)?;
    let mut best: Option<(f64, Potential)> = None;
    let mut history = Vec::new();
    let mut cond = f64::INFINITY;
    let mut deficient = 0;
    let mut count = 0;
    let mut early = false;
    let mut rises = 0;
    for it in 0..=iters {
        let is_zero = w.max_abs() == 0.0;
        let model = if is_zero { None } else { Some(collect_data(&w, &probes)?) };
        let (acc, r2) = fit(&grid, opts, &probes, &data, model.as_deref(), None);
        let misfit = (r2 / data_sq.max(EPS_FLOOR)).sqrt();
        if let Some(&prev) = history.last() {
            rises = if misfit > prev { rises + 1 } else { 0 };
        }
        history.push(misfit);
        if best.as_ref().map_or(true, |(b, _)| misfit < *b) {
            best = Some((misfit, w.clone()));
        }
        if rises >= 2 {
            early = true;
            break;
        }
        if it == iters {
            break;
        }
        count = acc.count;
        let sol = solve_normal(&acc, grid.space_len(), opts.svd_cutoff);
        let (dv, sol) = assemble_estimate(&grid, opts, sol, "update")?;
        cond = cond.min(sol.conditioning);
        deficient = deficient.max(sol.rank_deficient);
        w = if is_zero { dv } else { w.add(&dv)? };
        w.id = format!("iterate {}", it + 1);
    }
    let (_, est) = best.expect("at least one iterate");
    Ok(ReconstructionReport {
        estimate: est,
        relative_l2_error: None,
        samples_used: count,
        conditioning: cond,
        rank_deficient: deficient,
        method: Method::Iterative,
        misfit_history: history,
        early_stop: early,
    })
}

/// `max_f ||(U1 - U2) f||` over seeded random unit probes.
pub fn uniqueness_gap(v1: &Potential, v2: &Potential, probes: usize, seed: u64) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidInput("probes must be at least 1".into()));
    }
    let v2 = v2.on_grid(v1.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap: f64 = 0.0;
    for _ in 0..probes {
        let mut f = SpatialField::from_fn(v1.grid, |_| {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let n = f.l2_norm();
        f = f.scale(Complex64::new(1.0 / n, 0.0));
        let d = initial_to_final(&f, v1)?.sub(&initial_to_final(&f, &v2)?);
        gap = gap.max(d.l2_norm());
    }
    Ok(gap)
}
