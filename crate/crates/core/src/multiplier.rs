//! Constant-coefficient inverses on the padded space-time window.
//!
//! The forward operator `i d_t + Lap + 2 zeta . grad + zeta . zeta - lambda`
//! has symbol `p(tau, xi) = -lambda + zeta.zeta - tau - |xi|^2 + 2i zeta.xi`
//! under `u = sum u_hat exp(i(tau t + xi . x))`. `S` divides by `p`.
//!
//! Regularisation is hybrid: frequencies with `|p| > delta * M` (`M` the grid
//! maximum of `|p|`) get the exact `1/p`; the rest get the Tikhonov value
//! `conj(p) / (|p|^2 + (delta M)^2)`. The forward operator therefore inverts
//! `S` exactly on every unregularised frequency.
//!
//! A [`LatticeShift`] evaluates the symbol on a frequency lattice offset by a
//! fraction of the grid spacing, i.e. for twisted-periodic fields. Offsetting
//! by half a step along `nu` keeps the lattice a distance `|nu| pi / L` away
//! from the zero set.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dyadic::{norm, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::field::{Domain, SpaceTimeField, Support};
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolParams {
    pub lambda: f64,
    pub zeta: Vec<Complex64>,
    pub delta: f64,
}

impl SymbolParams {
    pub fn new(lambda: f64, zeta: Vec<Complex64>, delta: f64) -> Result<Self> {
        let re: Vec<f64> = zeta.iter().map(|z| z.re).collect();
        if !(norm(&re) > 0.0) {
            return Err(Error::InvalidInput("Re zeta must be nonzero".into()));
        }
        if !(0.0..=1e-2).contains(&delta) {
            return Err(Error::InvalidInput(format!("delta {delta} not in [0, 1e-2]")));
        }
        Ok(SymbolParams { lambda, zeta, delta })
    }

    /// `(lambda, zeta) = (|nu|^2, nu)`, the CGO multiplier `S_nu`.
    pub fn cgo(nu: &[f64], delta: f64) -> Result<Self> {
        Self::new(
            nu.iter().map(|a| a * a).sum(),
            nu.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
            delta,
        )
    }

    /// `(0, nu)`.
    pub fn shifted(nu: &[f64], delta: f64) -> Result<Self> {
        Self::new(0.0, nu.iter().map(|&a| Complex64::new(a, 0.0)).collect(), delta)
    }
}

pub fn symbol_eval(p: &SymbolParams, tau: f64, xi: &[f64]) -> Complex64 {
    let zz: Complex64 = p.zeta.iter().map(|z| z * z).sum();
    let zx: Complex64 = p.zeta.iter().zip(xi).map(|(z, x)| z * x).sum();
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    -p.lambda + zz - tau - xi2 + Complex64::new(0.0, 2.0) * zx
}

/// `p(tau, xi) = tau - |xi|^2 + i xi_n`.
pub fn normalized_symbol(tau: f64, xi: &[f64]) -> Complex64 {
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    Complex64::new(tau - xi2, *xi.last().expect("xi is nonempty"))
}

/// `q(xi) = xi_1 - xi_2^2 + i xi_2`.
pub fn t_symbol(xi1: f64, xi2: f64) -> Complex64 {
    Complex64::new(xi1 - xi2 * xi2, xi2)
}

/// Offset of the frequency lattice in units of the grid spacing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatticeShift {
    pub time: f64,
    pub space: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    #[default]
    None,
    HalfTime,
    HalfAlongNu,
}

impl LatticeShift {
    pub fn none() -> Self {
        LatticeShift::default()
    }

    pub fn half_time() -> Self {
        LatticeShift {
            time: 0.5,
            space: vec![],
        }
    }

    /// Half a spatial step along `nu / |nu|`.
    pub fn half_along(nu: &[f64]) -> Self {
        let n = norm(nu);
        LatticeShift {
            time: 0.0,
            space: nu.iter().map(|a| 0.5 * a / n).collect(),
        }
    }

    pub fn of_kind(kind: ShiftKind, nu: &[f64]) -> Self {
        match kind {
            ShiftKind::None => Self::none(),
            ShiftKind::HalfTime => Self::half_time(),
            ShiftKind::HalfAlongNu => Self::half_along(nu),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.time == 0.0 && self.space.iter().all(|&s| s == 0.0)
    }

    /// Angular offsets `(w0, q)` on `grid`.
    pub fn offsets(&self, grid: &GridSpec) -> (f64, Vec<f64>) {
        let w0 = self.time * 2.0 * PI / (grid.n_ext() as f64 * grid.dt());
        let q = (0..grid.n_dim)
            .map(|a| self.space.get(a).copied().unwrap_or(0.0) * PI / grid.half_width)
            .collect();
        (w0, q)
    }
}

/// Per-axis frequency tables for the (possibly shifted) lattice.
struct Lattice {
    taus: Vec<f64>,
    xis: Vec<Vec<f64>>,
    w0: f64,
    q: Vec<f64>,
}

impl Lattice {
    fn new(grid: &GridSpec, shift: &LatticeShift) -> Self {
        let (w0, q) = shift.offsets(grid);
        let taus = (0..grid.n_ext()).map(|k| grid.tau(k) + w0).collect();
        let xis = (0..grid.space_len())
            .map(|s| {
                let mut xi = grid.frequency(s);
                for (x, qa) in xi.iter_mut().zip(&q) {
                    *x += qa;
                }
                xi
            })
            .collect();
        Lattice { taus, xis, w0, q }
    }

    fn twist(&self, f: &mut SpaceTimeField, sign: f64) {
        if self.w0 == 0.0 && self.q.iter().all(|&a| a == 0.0) {
            return;
        }
        let coords = f.grid.coordinates();
        let ns = f.grid.space_len();
        let sp: Vec<f64> = (0..ns)
            .map(|s| (0..f.grid.n_dim).map(|a| self.q[a] * coords[a][s]).sum())
            .collect();
        for m in 0..f.n_times() {
            let t = f.time(m);
            for (v, &ph) in f.slice_mut(m).iter_mut().zip(&sp) {
                *v *= Complex64::from_polar(1.0, sign * (self.w0 * t + ph));
            }
        }
    }
}

fn check_extended(f: &SpaceTimeField) -> Result<()> {
    if f.support != Support::Extended {
        return Err(Error::Precondition(
            "multipliers act on extended fields; embed the slab field first".into(),
        ));
    }
    if f.domain != Domain::Physical {
        return Err(Error::InvalidInput("multiplier input must be physical-domain".into()));
    }
    Ok(())
}

/// Multiplies the space-time spectrum of `f` by `mult(tau, xi)`.
pub fn spectral_apply(
    f: &SpaceTimeField,
    shift: &LatticeShift,
    mut mult: impl FnMut(f64, &[f64]) -> Complex64,
) -> Result<SpaceTimeField> {
    check_extended(f)?;
    let lat = Lattice::new(&f.grid, shift);
    let mut g = f.clone();
    lat.twist(&mut g, -1.0);
    let shape = g.shape();
    fft_nd(&mut g.values, &shape, Direction::Forward);
    let ns = f.grid.space_len();
    for (kt, &tau) in lat.taus.iter().enumerate() {
        let row = &mut g.values[kt * ns..(kt + 1) * ns];
        for (v, xi) in row.iter_mut().zip(&lat.xis) {
            *v *= mult(tau, xi);
        }
    }
    fft_nd(&mut g.values, &shape, Direction::Inverse);
    lat.twist(&mut g, 1.0);
    Ok(g)
}

/// Symbol values on the lattice, time-frequency outermost.
fn symbol_table(grid: &GridSpec, shift: &LatticeShift, sym: impl Fn(f64, &[f64]) -> Complex64) -> Vec<Complex64> {
    let lat = Lattice::new(grid, shift);
    let mut out = Vec::with_capacity(lat.taus.len() * lat.xis.len());
    for &tau in &lat.taus {
        for xi in &lat.xis {
            out.push(sym(tau, xi));
        }
    }
    out
}

/// Regularised reciprocal of a symbol table; returns the table and the
/// threshold `delta * M` below which Tikhonov applies.
fn reciprocal(grid: &GridSpec, shift: &LatticeShift, table: Vec<Complex64>, delta: f64) -> Result<(Vec<Complex64>, f64)> {
    let big_m = table.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let thr = delta * big_m;
    let mut out = table;
    for (i, p) in out.iter_mut().enumerate() {
        let a = p.norm();
        if a > thr {
            *p = p.inv();
        } else if delta == 0.0 {
            let ns = grid.space_len();
            let lat = Lattice::new(grid, shift);
            return Err(Error::SingularSymbol {
                index: i,
                tau: lat.taus[i / ns],
                xi: lat.xis[i % ns].clone(),
            });
        } else {
            *p = p.conj() / (a * a + thr * thr);
        }
    }
    Ok((out, thr))
}

fn apply_table(f: &SpaceTimeField, shift: &LatticeShift, table: &[Complex64]) -> Result<SpaceTimeField> {
    let mut idx = 0usize;
    spectral_apply(f, shift, |_, _| {
        let v = table[idx];
        idx += 1;
        v
    })
}

/// `S_{(lambda, zeta)} f` with hybrid regularisation.
pub fn apply_s(p: &SymbolParams, f: &SpaceTimeField, shift: &LatticeShift) -> Result<SpaceTimeField> {
    check_extended(f)?;
    let table = symbol_table(&f.grid, shift, |tau, xi| symbol_eval(p, tau, xi));
    let (inv, _) = reciprocal(&f.grid, shift, table, p.delta)?;
    apply_table(f, shift, &inv)
}

/// The forward operator `i d_t + Lap + 2 zeta.grad + zeta.zeta - lambda`.
pub fn apply_forward(p: &SymbolParams, f: &SpaceTimeField, shift: &LatticeShift) -> Result<SpaceTimeField> {
    spectral_apply(f, shift, |tau, xi| symbol_eval(p, tau, xi))
}

/// Mask of frequencies treated exactly (`|p| > delta M`).
pub fn unregularized_mask(p: &SymbolParams, grid: &GridSpec, shift: &LatticeShift) -> Vec<bool> {
    let table = symbol_table(grid, shift, |tau, xi| symbol_eval(p, tau, xi));
    let big_m = table.iter().map(|v| v.norm()).fold(0.0, f64::max);
    table.iter().map(|v| v.norm() > p.delta * big_m).collect()
}

/// Relative `l^2` error of `forward(S f) - f` on unregularised frequencies.
pub fn inversion_residual(p: &SymbolParams, f: &SpaceTimeField, shift: &LatticeShift) -> Result<f64> {
    let sf = apply_s(p, f, shift)?;
    let back = apply_forward(p, &sf, shift)?;
    let lat = Lattice::new(&f.grid, shift);
    let spec = |u: &SpaceTimeField| -> Vec<Complex64> {
        let mut g = u.clone();
        lat.twist(&mut g, -1.0);
        let shape = g.shape();
        fft_nd(&mut g.values, &shape, Direction::Forward);
        g.values
    };
    let mask = unregularized_mask(p, &f.grid, shift);
    let (a, b) = (spec(&back), spec(f));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        if mask[i] {
            num += (a[i] - b[i]).norm_sqr();
            den += b[i].norm_sqr();
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// Householder reflection `Q` with `Q e_n = nu / |nu|` (identity when
/// `nu` already points along `e_n`). Row-major `n x n`.
pub fn householder(nu: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = nu.len();
    let nn = norm(nu);
    if !(nn > 0.0) {
        return Err(Error::InvalidInput("nu must be nonzero".into()));
    }
    let mut w: Vec<f64> = nu.iter().map(|a| -a / nn).collect();
    w[n - 1] += 1.0;
    let ww: f64 = w.iter().map(|a| a * a).sum();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        q[i][i] = 1.0;
    }
    if ww > 1e-30 {
        for i in 0..n {
            for j in 0..n {
                q[i][j] -= 2.0 * w[i] * w[j] / ww;
            }
        }
    }
    Ok(q)
}

/// `S_{(0, nu)} f` evaluated through the normalised symbol:
/// `p_{(0,nu)}(sigma, eta) = 4 |nu|^2 p(tau, xi)` with
/// `sigma = |nu|^2 (1 - 4 tau)` and `eta = 2 |nu| Q xi`.
pub fn apply_s_via_normalized(nu: &[f64], delta: f64, f: &SpaceTimeField, shift: &LatticeShift) -> Result<SpaceTimeField> {
    check_extended(f)?;
    let q = householder(nu)?;
    let nn = norm(nu);
    let n = nu.len();
    let table = symbol_table(&f.grid, shift, |sigma, eta| {
        let tau = (1.0 - sigma / (nn * nn)) / 4.0;
        // xi = Q^T eta / (2|nu|); Q is symmetric
        let xi: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[j][i] * eta[j]).sum::<f64>() / (2.0 * nn))
            .collect();
        normalized_symbol(tau, &xi) * (4.0 * nn * nn)
    });
    let (inv, _) = reciprocal(&f.grid, shift, table, delta)?;
    apply_table(f, shift, &inv)
}

/// Normalised multiplier on a grid whose coordinates are already `(tau, xi)`.
pub fn apply_normalized_s(f: &SpaceTimeField, delta: f64, shift: &LatticeShift) -> Result<SpaceTimeField> {
    check_extended(f)?;
    let table = symbol_table(&f.grid, shift, normalized_symbol);
    let (inv, _) = reciprocal(&f.grid, shift, table, delta)?;
    apply_table(f, shift, &inv)
}

/// Two-variable multiplier `1/q` on a reduced grid (`n_dim = 1`), the time
/// axis playing `xi_1`.
pub fn apply_t_2d(f: &SpaceTimeField, delta: f64, shift: &LatticeShift) -> Result<SpaceTimeField> {
    if f.grid.n_dim != 1 {
        return Err(Error::InvalidInput("apply_t_2d expects a grid with one spatial axis".into()));
    }
    check_extended(f)?;
    let table = symbol_table(&f.grid, shift, |tau, xi| t_symbol(tau, xi[0]));
    let (inv, _) = reciprocal(&f.grid, shift, table, delta)?;
    apply_table(f, shift, &inv)
}

/// `||T f||_{L^2(E)} / (|E|^theta |F|^{1/2 - theta} ||f||)` for a scaled bump
/// filling the centred square `F = E` of side `side`.
pub fn t_box_ratio(grid: &GridSpec, side: f64, delta: f64) -> Result<f64> {
    let tc = grid.t_ext(grid.n_ext() / 2);
    let half = side / 2.0;
    let f = SpaceTimeField::from_fn(*grid, Support::Extended, |t, x| {
        let r2 = ((t - tc).powi(2) + x[0].powi(2)) / (half * half);
        Complex64::new(if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 }, 0.0)
    });
    let tf = apply_t_2d(&f, delta, &LatticeShift::none())?;
    let dv = grid.dt() * grid.dx();
    let (mut num, mut den) = (0.0, 0.0);
    for m in 0..grid.n_ext() {
        let t = grid.t_ext(m);
        for s in 0..grid.n_space {
            den += f.values[m * grid.n_space + s].norm_sqr();
            if (t - tc).abs() <= half && grid.x_coord(s).abs() <= half {
                num += tf.values[m * grid.n_space + s].norm_sqr();
            }
        }
    }
    // E = F, so |E|^theta |F|^{1/2 - theta} = side for every theta
    Ok((num * dv).sqrt() / (side * (den * dv).sqrt()))
}

/// `e^{-phi} (i d_t + Lap) [e^{phi} w]` with `phi = i |nu|^2 t + nu . x`,
/// evaluated spectrally on the unconjugated product.
pub fn conjugated_free_operator(nu: &[f64], w: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_extended(w)?;
    let nn2: f64 = nu.iter().map(|a| a * a).sum();
    let coords = w.grid.coordinates();
    let ns = w.grid.space_len();
    let lin: Vec<f64> = (0..ns)
        .map(|s| (0..w.grid.n_dim).map(|a| nu[a] * coords[a][s]).sum())
        .collect();
    let mut ew = w.clone();
    for m in 0..w.n_times() {
        let t = w.time(m);
        for (v, &l) in ew.slice_mut(m).iter_mut().zip(&lin) {
            *v *= Complex64::new(l, nn2 * t).exp();
        }
    }
    let free = SymbolParams {
        lambda: 0.0,
        zeta: vec![Complex64::default(); w.grid.n_dim],
        delta: 0.0,
    };
    let mut out = apply_forward(&free, &ew, &LatticeShift::none())?;
    for m in 0..w.n_times() {
        let t = w.time(m);
        for (v, &l) in out.slice_mut(m).iter_mut().zip(&lin) {
            *v *= Complex64::new(-l, -nn2 * t).exp();
        }
    }
    Ok(out)
}

/// `(i d_t + Lap) w` and `nu . grad w`, spectrally.
pub fn free_and_directional(nu: &[f64], w: &SpaceTimeField) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let none = LatticeShift::none();
    let a = spectral_apply(w, &none, |tau, xi| Complex64::new(-tau - xi.iter().map(|x| x * x).sum::<f64>(), 0.0))?;
    let b = spectral_apply(w, &none, |_, xi| {
        Complex64::new(0.0, nu.iter().zip(xi).map(|(n, x)| n * x).sum())
    })?;
    Ok((a, b))
}

/// `|nu| ||w|| / (R ||(i d_t + Lap + 2 nu . grad) w||)`.
pub fn poincare_constant(nu: &[f64], w: &SpaceTimeField, radius: f64) -> Result<f64> {
    let p = SymbolParams::cgo(nu, 0.0)?;
    let lw = apply_forward(&p, w, &LatticeShift::none())?;
    Ok(norm(nu) * w.l2_coeffs() / (radius * lw.l2_coeffs()))
}

/// Random field whose spectrum is a Gaussian of widths `(tau_scale, xi_scale)`.
pub fn smooth_random_field(grid: &GridSpec, tau_scale: f64, xi_scale: f64, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let mut f = SpaceTimeField::zeros(*grid, Support::Extended);
    for v in f.values.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v = Complex64::new(re, im);
    }
    spectral_apply(&f, &LatticeShift::none(), |tau, xi| {
        let x2: f64 = xi.iter().map(|x| x * x).sum();
        Complex64::new((-(tau * tau) / (tau_scale * tau_scale) - x2 / (xi_scale * xi_scale)).exp(), 0.0)
    })
    .expect("extended physical field")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub trial: usize,
    pub nu_norm: f64,
    pub theta: f64,
    pub strip: (usize, usize),
    pub x_norm: f64,
    pub y_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub nu: Vec<f64>,
    pub theta: f64,
    pub rows: Vec<BenchRow>,
    pub max: f64,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("trial,nu,theta,x_norm,y_norm,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                r.trial, r.nu_norm, r.theta, r.x_norm, r.y_norm, r.ratio
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub delta: f64,
    pub shift: ShiftKind,
    pub tau_scale: f64,
    pub xi_scale: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            delta: 1e-8,
            shift: ShiftKind::HalfAlongNu,
            tau_scale: 20.0,
            xi_scale: 3.0,
        }
    }
}

/// Empirical `sup ||S_nu f||_{Y^{1/2-theta}} / ||f||_{X^theta}`.
///
/// Trial `i` draws a smooth random field and restricts it to the `i`-th
/// nonempty strip (cycling), so `trials >= #strips` visits every strip.
pub fn bench_multiplier_norm(
    grid: &GridSpec,
    nu: &[f64],
    theta: f64,
    trials: usize,
    seed: u64,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::InvalidInput(format!("theta {theta} not in (0, 1/2)")));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let dec = DyadicDecomposition::new(grid, nu)?;
    let strips = dec.nonempty();
    let params = SymbolParams::cgo(nu, opts.delta)?;
    let shift = LatticeShift::of_kind(opts.shift, nu);
    let table = symbol_table(grid, &shift, |tau, xi| symbol_eval(&params, tau, xi));
    let (inv, _) = reciprocal(grid, &shift, table, params.delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = grid.space_len();
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let alpha = strips[trial % strips.len()];
        let mut f = smooth_random_field(grid, opts.tau_scale, opts.xi_scale, &mut rng);
        for m in 0..grid.n_ext() {
            let keep_t = dec.time_labels[m] as usize == alpha.0;
            for s in 0..ns {
                if !(keep_t && dec.space_labels[s] as usize == alpha.1) {
                    f.values[m * ns + s] = Complex64::default();
                }
            }
        }
        let sf = apply_table(&f, &shift, &inv)?;
        let x = dec.x_norm(&f, theta)?;
        let y = dec.y_norm(&sf, 0.5 - theta)?;
        rows.push(BenchRow {
            trial,
            nu_norm: norm(nu),
            theta,
            strip: alpha,
            x_norm: x,
            y_norm: y,
            ratio: y / x,
        });
    }
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(BenchReport {
        nu: nu.to_vec(),
        theta,
        rows,
        max,
    })
}
