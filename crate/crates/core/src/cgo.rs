//! Complex geometrical optics solutions `u = e^phi (u_sharp + u_flat)` with
//! `phi = i |nu|^2 t + s nu . x`, `s = +-1`.
//!
//! Everything is computed in conjugated variables: the remainder solves
//! `(i d_t + Lap + 2 s nu . grad - V) u_flat = V u_sharp` and is found by the
//! Neumann iteration `u_{k+1} = S(V (u_sharp + u_k))`. Only [`assemble`]
//! exponentiates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{self, norm, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::field::{SpaceTimeField, SpatialField, Support};
use crate::grid::GridSpec;
use crate::multiplier::{apply_forward, apply_s, householder, LatticeShift, ShiftKind, SymbolParams};
use crate::potential::Potential;
use crate::propagator::free_propagate;

#[derive(Debug, Clone, PartialEq)]
pub struct CgoPhase {
    pub nu: Vec<f64>,
    pub sign: i8,
    /// Orthogonal `Q` with `Q e_n = s nu / |nu|`, row-major.
    pub rotation: Vec<Vec<f64>>,
    pub reflection: bool,
}

impl CgoPhase {
    pub fn nu_norm(&self) -> f64 {
        norm(&self.nu)
    }

    /// `s nu`, the direction entering the conjugated operator.
    pub fn direction(&self) -> Vec<f64> {
        self.nu.iter().map(|a| a * self.sign as f64).collect()
    }

    pub fn value(&self, t: f64, x: &[f64]) -> Complex64 {
        let d = self.direction();
        let lin: f64 = d.iter().zip(x).map(|(a, b)| a * b).sum();
        Complex64::new(lin, self.nu_norm().powi(2) * t)
    }
}

/// Phase for `nu` and `sign`. For `sign = -1` the reflection `R e_n = -e_n`
/// is composed into the rotation.
pub fn make_phase(nu: &[f64], sign: i8) -> Result<CgoPhase> {
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidInput("sign must be +1 or -1".into()));
    }
    let nn = norm(nu);
    if !(nn > 0.0) {
        return Err(Error::InvalidInput("nu must be nonzero".into()));
    }
    let n = nu.len();
    let mut q = householder(nu)?;
    if sign < 0 {
        for row in q.iter_mut() {
            row[n - 1] = -row[n - 1];
        }
    }
    // i gamma + zeta . zeta with gamma = i |nu|^2, zeta = s nu
    let gamma = Complex64::new(0.0, nn * nn);
    let zz: f64 = nu.iter().map(|a| a * a).sum();
    let eik = Complex64::new(0.0, 1.0) * gamma + zz;
    if eik.norm() > 1e-12 * zz {
        return Err(Error::InvalidState(format!("eikonal relation fails: {eik}")));
    }
    Ok(CgoPhase {
        nu: nu.to_vec(),
        sign,
        rotation: q,
        reflection: sign < 0,
    })
}

/// Signed axis permutation when `Q` maps coordinate axes onto axes.
fn axis_map(q: &[Vec<f64>]) -> Option<Vec<(usize, f64)>> {
    let n = q.len();
    (0..n)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| q[i][j]).collect();
            let hits: Vec<usize> = (0..n).filter(|&i| col[i].abs() > 1e-12).collect();
            (hits.len() == 1 && (col[hits[0]].abs() - 1.0).abs() < 1e-12).then(|| (hits[0], col[hits[0]].signum()))
        })
        .collect()
}

/// `u_sharp(t, x) = [e^{it Lap'} psi](Q e_1 . x, ..., Q e_{n-1} . x)` on the
/// padded window. Axis-aligned rotations use index maps; other directions
/// use trigonometric interpolation of the transverse field.
pub fn amplitude(psi: &SpatialField, phase: &CgoPhase, grid: &GridSpec) -> Result<SpaceTimeField> {
    let tg = psi.grid;
    if tg.n_dim + 1 != grid.n_dim || tg.n_space != grid.n_space || tg.half_width != grid.half_width {
        return Err(Error::InvalidInput("transverse grid incompatible with space-time grid".into()));
    }
    if phase.nu.len() != grid.n_dim {
        return Err(Error::InvalidInput("phase dimension differs from grid".into()));
    }
    let q = &phase.rotation;
    let n = grid.n_dim;
    let ns = grid.space_len();
    let nt = grid.n_ext();
    let mut out = SpaceTimeField::zeros(*grid, Support::Extended);
    let times: Vec<f64> = (0..nt).map(|m| grid.t_ext(m)).collect();

    if let Some(map) = axis_map(q) {
        // y_j = s_j x_{i_j}; a sign flip sends index k to (N - k) mod N
        let mut idx = vec![0usize; ns];
        let mut mi = vec![0usize; n];
        for s in 0..ns {
            grid.unravel(s, &mut mi);
            let mut t_idx = 0usize;
            for j in 0..n - 1 {
                let (i, sg) = map[j];
                let k = if sg > 0.0 { mi[i] } else { (grid.n_space - mi[i]) % grid.n_space };
                t_idx = t_idx * grid.n_space + k;
            }
            idx[s] = t_idx;
        }
        for (m, &t) in times.iter().enumerate() {
            let w = free_propagate(psi, t)?;
            for (v, &k) in out.slice_mut(m).iter_mut().zip(&idx) {
                *v = w.values[k];
            }
        }
        return Ok(out);
    }

    // general direction: u(t, x) = sum_k c_k e^{-i|k|^2 t} e^{i k . (y(x) + L)}
    let coef = psi.transform(Direction::Forward)?;
    let ntr = tg.space_len();
    let norm_c = 1.0 / (ntr as f64).sqrt();
    let coords = grid.coordinates();
    let kept: Vec<usize> = (0..ntr).filter(|&k| coef.values[k].norm() > 1e-15 * coef.l2_coeffs()).collect();
    let kvecs: Vec<Vec<f64>> = kept.iter().map(|&k| tg.frequency(k)).collect();
    let k2: Vec<f64> = kvecs.iter().map(|v| v.iter().map(|a| a * a).sum()).collect();
    let mut basis = vec![Complex64::default(); kept.len() * ns];
    for s in 0..ns {
        for (b, kv) in kvecs.iter().enumerate() {
            let mut ph = 0.0;
            for j in 0..n - 1 {
                let y: f64 = (0..n).map(|i| q[i][j] * coords[i][s]).sum();
                ph += kv[j] * (y + grid.half_width);
            }
            basis[b * ns + s] = Complex64::from_polar(1.0, ph);
        }
    }
    for (m, &t) in times.iter().enumerate() {
        let row = out.slice_mut(m);
        for (b, &k) in kept.iter().enumerate() {
            let c = coef.values[k] * Complex64::from_polar(norm_c, -k2[b] * t);
            for (v, e) in row.iter_mut().zip(&basis[b * ns..(b + 1) * ns]) {
                *v += c * e;
            }
        }
    }
    Ok(out)
}

/// `sup ||u_sharp||_{L^2(Upsilon_j x Omega_k)} / (2^{(j+k)/2} ||psi||)`.
pub fn strip_bound_constant(u_sharp: &SpaceTimeField, psi: &SpatialField, nu: &[f64]) -> Result<f64> {
    let dec = DyadicDecomposition::new(&u_sharp.grid, nu)?;
    let pn = psi.l2_norm();
    Ok(dec
        .strip_norms(u_sharp)?
        .into_iter()
        .map(|((j, k), v)| v / (2f64.powf((j + k) as f64 / 2.0) * pn))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannOptions {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub delta: f64,
    pub shift: ShiftKind,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions {
            theta: 0.25,
            tol: 1e-8,
            max_iter: 64,
            delta: 1e-8,
            shift: ShiftKind::HalfAlongNu,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub phase: CgoPhase,
    pub psi: SpatialField,
    pub u_sharp: SpaceTimeField,
    pub u_flat: SpaceTimeField,
    pub potential: SpaceTimeField,
    pub options: NeumannOptions,
    pub iterations: usize,
    pub converged: bool,
    /// Y-norm of each increment `u_{k+1} - u_k`.
    pub increment_history: Vec<f64>,
    /// Equation residual after each iteration, relative to `||V u_sharp||`.
    pub residual_history: Vec<f64>,
    pub y_norm_flat: f64,
    pub x_norm_source: f64,
    /// Final `||(L - V) u_flat - V u_sharp|| / ||V u_sharp||`.
    pub residual: f64,
    /// Largest observed ratio of successive increments.
    pub contraction: f64,
    /// `(||S(V u_sharp)||_Y / ||V u_sharp||_X) / (1 - r)`.
    pub c_bench: f64,
    /// `|nu|^{-1/2} sum_alpha 2^{|alpha|/2} ||V||_{L^inf(Pi_alpha)}`.
    pub multiplication_bound: f64,
    /// `sum_j 2^{j(1/2 + theta)} ||V||_{L^inf(Sigma_j)}`.
    pub summability: f64,
}

fn shift_for(phase: &CgoPhase, kind: ShiftKind) -> LatticeShift {
    LatticeShift::of_kind(kind, &phase.direction())
}

/// Neumann iteration for the remainder.
pub fn solve_remainder(
    v: &Potential,
    u_sharp: &SpaceTimeField,
    psi: &SpatialField,
    phase: &CgoPhase,
    opts: &NeumannOptions,
) -> Result<CgoSolution> {
    if !(opts.theta > 0.0 && opts.theta < 0.5) {
        return Err(Error::InvalidInput(format!("theta {} not in (0, 1/2)", opts.theta)));
    }
    if !v.grid.same_space(&u_sharp.grid) || v.grid.n_time != u_sharp.grid.n_time {
        return Err(Error::InvalidInput("potential and amplitude grids differ".into()));
    }
    let grid = u_sharp.grid;
    let dir = phase.direction();
    let dec = DyadicDecomposition::new(&grid, &dir)?;
    let params = SymbolParams::cgo(&dir, opts.delta)?;
    let shift = shift_for(phase, opts.shift);
    let vt = v.extended_field();

    let src = vt.mul(u_sharp);
    let src_l2 = src.l2_coeffs();
    let x_src = dec.x_norm(&src, opts.theta)?;
    let theta_y = 0.5 - opts.theta;

    let mut flat = SpaceTimeField::zeros(grid, Support::Extended);
    let mut incs: Vec<f64> = Vec::new();
    let mut res_hist: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut rising = 0usize;
    let mut first_y = 0.0;
    for it in 0..opts.max_iter {
        let rhs = vt.mul(&u_sharp.add(&flat));
        let next = apply_s(&params, &rhs, &shift)?;
        let inc = next.sub(&flat);
        let inc_y = dec.y_norm(&inc, theta_y)?;
        if it == 0 {
            first_y = inc_y;
        }
        // (L - V) next - V u_sharp = V (flat - next) on unregularised frequencies
        let res = vt.mul(&inc).l2_coeffs() / src_l2.max(f64::MIN_POSITIVE);
        flat = next;
        if let Some(&prev) = incs.last() {
            rising = if inc_y > prev { rising + 1 } else { 0 };
        }
        incs.push(inc_y);
        res_hist.push(res);
        if !flat.is_finite() || rising >= 3 {
            let r = contraction(&incs);
            return Err(Error::NeumannDivergence {
                iterations: incs.len(),
                contraction: r,
            });
        }
        let flat_y = dec.y_norm(&flat, theta_y)?;
        if inc_y == 0.0 || inc_y < opts.tol * flat_y {
            converged = true;
            break;
        }
    }
    let y_flat = dec.y_norm(&flat, theta_y)?;
    let r = contraction(&incs);
    let c_bench = if x_src > 0.0 && r < 1.0 { first_y / x_src / (1.0 - r) } else { f64::INFINITY };

    let lf = apply_forward(&params, &flat, &shift)?;
    let resid = lf.sub(&vt.mul(&flat)).sub(&src).l2_coeffs() / src_l2.max(f64::MIN_POSITIVE);

    let mut summ = 0.0;
    let sup = dec.strip_sup(&vt)?;
    let kmax = dec.max_alpha.1;
    for k in 0..=kmax {
        let m = sup.iter().filter(|((_, kk), _)| *kk == k).map(|(_, s)| *s).fold(0.0, f64::max);
        summ += 2f64.powf(k as f64 * (0.5 + opts.theta)) * m;
    }

    Ok(CgoSolution {
        phase: phase.clone(),
        psi: psi.clone(),
        u_sharp: u_sharp.clone(),
        u_flat: flat,
        potential: vt.clone(),
        options: opts.clone(),
        iterations: incs.len(),
        converged,
        increment_history: incs,
        residual_history: res_hist,
        y_norm_flat: y_flat,
        x_norm_source: x_src,
        residual: if src_l2 > 0.0 { resid } else { 0.0 },
        contraction: r,
        c_bench,
        multiplication_bound: dec.multiplication_bound(&vt)?,
        summability: summ,
    })
}

fn contraction(incs: &[f64]) -> f64 {
    incs.windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Builds phase, amplitude and remainder in one call.
pub fn construct(
    v: &Potential,
    psi: &SpatialField,
    nu: &[f64],
    sign: i8,
    opts: &NeumannOptions,
) -> Result<CgoSolution> {
    let phase = make_phase(nu, sign)?;
    let us = amplitude(psi, &phase, &v.grid)?;
    solve_remainder(v, &us, psi, &phase, opts)
}

/// `(i d_t + Lap + 2 s nu . grad) u_sharp` with the time derivative taken
/// from the transverse evolution and the spatial part spectrally.
pub fn amplitude_residual(sol: &CgoSolution) -> Result<SpaceTimeField> {
    let grid = sol.u_sharp.grid;
    let lap_psi = {
        let tg = sol.psi.grid;
        let k2 = tg.xi_squared();
        let mut h = sol.psi.transform(Direction::Forward)?;
        for (v, k) in h.values.iter_mut().zip(&k2) {
            *v *= -k;
        }
        h.transform(Direction::Inverse)?
    };
    // i d_t u_sharp = -[e^{it Lap'} Lap' psi](y)
    let dt_part = amplitude(&lap_psi, &sol.phase, &grid)?;
    let dir = sol.phase.direction();
    let ns = grid.space_len();
    let freqs: Vec<Vec<f64>> = (0..ns).map(|s| grid.frequency(s)).collect();
    let mult: Vec<Complex64> = freqs
        .iter()
        .map(|xi| {
            let x2: f64 = xi.iter().map(|a| a * a).sum();
            let d: f64 = dir.iter().zip(xi).map(|(a, b)| a * b).sum();
            Complex64::new(-x2, 2.0 * d)
        })
        .collect();
    let shape = grid.space_shape();
    let mut out = SpaceTimeField::zeros(grid, Support::Extended);
    for m in 0..grid.n_ext() {
        let mut row = sol.u_sharp.slice(m).to_vec();
        fft_nd(&mut row, &shape, Direction::Forward);
        for (v, k) in row.iter_mut().zip(&mult) {
            *v *= k;
        }
        fft_nd(&mut row, &shape, Direction::Inverse);
        for ((o, r), d) in out.slice_mut(m).iter_mut().zip(&row).zip(dt_part.slice(m)) {
            *o = r - d;
        }
    }
    Ok(out)
}

/// `||e^{-phi}(i d_t + Lap - V) u|| / ||e^{-phi} u||` on the interior slab
/// nodes, evaluated as `(L - V)(u_sharp + u_flat)` in conjugated variables.
pub fn weighted_residual(sol: &CgoSolution) -> Result<f64> {
    let grid = sol.u_sharp.grid;
    let params = SymbolParams::cgo(&sol.phase.direction(), sol.options.delta)?;
    let shift = shift_for(&sol.phase, sol.options.shift);
    let l_sharp = amplitude_residual(sol)?;
    let l_flat = apply_forward(&params, &sol.u_flat, &shift)?;
    let w = sol.u_sharp.add(&sol.u_flat);
    let r = l_sharp.add(&l_flat).sub(&sol.potential.mul(&w));
    let off = grid.slab_offset();
    let (mut num, mut den) = (0.0, 0.0);
    for m in off + 1..off + grid.n_time - 1 {
        num += r.slice(m).iter().map(|v| v.norm_sqr()).sum::<f64>();
        den += w.slice(m).iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    Ok((num / den).sqrt())
}

/// `e^phi (u_sharp + u_flat)` on the slab nodes.
pub fn assemble(sol: &CgoSolution) -> Result<SpaceTimeField> {
    if !sol.converged {
        return Err(Error::InvalidState("CGO solution did not converge".into()));
    }
    let w = sol.u_sharp.add(&sol.u_flat).restrict()?;
    let coords = w.grid.coordinates();
    let mut x = vec![0.0; w.grid.n_dim];
    let mut out = w.clone();
    for m in 0..w.n_times() {
        let t = w.time(m);
        for (s, v) in out.slice_mut(m).iter_mut().enumerate() {
            for a in 0..x.len() {
                x[a] = coords[a][s];
            }
            *v *= sol.phase.value(t, &x).exp();
        }
    }
    if !out.is_finite() {
        return Err(Error::InvalidState("e^phi overflows on this box; use the weighted fields".into()));
    }
    Ok(out)
}

/// `||u_flat||_{L^2}` over the slab times `{|x . nu_hat| < R}`.
pub fn remainder_local_norm(sol: &CgoSolution, radius: f64) -> Result<f64> {
    let grid = sol.u_flat.grid;
    let slab = sol.u_flat.restrict()?;
    let nu = &sol.phase.nu;
    let nn = norm(nu);
    let coords = grid.coordinates();
    let mask = dyadic::Mask {
        time: vec![true; grid.n_time],
        space: (0..grid.space_len())
            .map(|s| (0..grid.n_dim).map(|a| nu[a] * coords[a][s]).sum::<f64>().abs() / nn < radius)
            .collect(),
    };
    dyadic::region_l2_norm(&slab, &mask)
}

/// Frequencies `(tau, xi)` carried by `u1_sharp * conj(u2_sharp)` for pairs of
/// transverse modes `k1, k2`: `tau = |k2|^2 - |k1|^2`, `xi = Q'(k1 - k2)`.
pub fn product_frequencies(phase: &CgoPhase, modes: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let n = phase.nu.len();
    let q = &phase.rotation;
    let mut out = Vec::new();
    for a in modes {
        for b in modes {
            let tau = b.iter().map(|v| v * v).sum::<f64>() - a.iter().map(|v| v * v).sum::<f64>();
            let xi: Vec<f64> = (0..n)
                .map(|i| (0..n - 1).map(|j| q[i][j] * (a[j] - b[j])).sum())
                .collect();
            out.push((tau, xi));
        }
    }
    out
}

pub fn transverse_gaussian(grid: &GridSpec, width: f64) -> SpatialField {
    SpatialField::from_fn(grid.transverse(), |y| {
        Complex64::new((-y.iter().map(|a| a * a).sum::<f64>() / (2.0 * width * width)).exp(), 0.0)
    })
}
