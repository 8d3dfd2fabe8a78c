//! Dyadic strips `Pi_alpha = Upsilon_{alpha_1} x Omega_{alpha_2}` and the
//! weighted norms built on them.
//!
//! `Upsilon_0 = {|t| <= 1}`, `Upsilon_j = {2^{j-1} < |t| <= 2^j}`, and
//! `Omega_j` is the same partition applied to `|x . nu| / |nu|`. On the
//! truncated box the outermost strips are clipped; only nonempty strips enter
//! the norms, so every norm is an exact finite sum.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{SpaceTimeField, Support};
use crate::grid::GridSpec;

/// Product mask: a time-node selection times a spatial-point selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub time: Vec<bool>,
    pub space: Vec<bool>,
}

impl Mask {
    pub fn full(n_times: usize, n_space: usize) -> Self {
        Mask {
            time: vec![true; n_times],
            space: vec![true; n_space],
        }
    }

    pub fn count(&self) -> usize {
        self.time.iter().filter(|&&b| b).count() * self.space.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, m: usize, s: usize) -> bool {
        self.time[m] && self.space[s]
    }
}

/// Per-node time weights: trapezoid on the slab, uniform on the padded window.
pub fn time_weights(grid: &GridSpec, support: Support) -> Vec<f64> {
    let dt = grid.dt();
    match support {
        Support::Slab => {
            let mut w = vec![dt; grid.n_time];
            w[0] = 0.5 * dt;
            w[grid.n_time - 1] = 0.5 * dt;
            w
        }
        Support::Extended => vec![dt; grid.n_ext()],
    }
}

/// `sqrt(sum_mask |u|^2 w_t dx^n)`.
pub fn region_l2_norm(u: &SpaceTimeField, mask: &Mask) -> Result<f64> {
    let nt = u.n_times();
    let ns = u.grid.space_len();
    if mask.time.len() != nt || mask.space.len() != ns {
        return Err(Error::InvalidInput("mask does not match field grid".into()));
    }
    let w = time_weights(&u.grid, u.support);
    let mut acc = 0.0;
    for m in 0..nt {
        if !mask.time[m] {
            continue;
        }
        let row = u.slice(m);
        let s: f64 = row
            .iter()
            .zip(&mask.space)
            .filter(|(_, &keep)| keep)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        acc += w[m] * s;
    }
    Ok((acc * u.grid.cell_volume()).sqrt())
}

/// Full-field `L^2` norm with the same quadrature.
pub fn l2_norm(u: &SpaceTimeField) -> f64 {
    let w = time_weights(&u.grid, u.support);
    let acc: f64 = (0..u.n_times())
        .map(|m| w[m] * u.slice(m).iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sum();
    (acc * u.grid.cell_volume()).sqrt()
}

/// Quadrature of `sum a * conj(b)` over the whole field.
pub fn integral_product(a: &SpaceTimeField, b: &SpaceTimeField) -> Complex64 {
    let w = time_weights(&a.grid, a.support);
    let mut acc = Complex64::default();
    for m in 0..a.n_times() {
        let s: Complex64 = a.slice(m).iter().zip(b.slice(m)).map(|(x, y)| x * y.conj()).sum();
        acc += s * w[m];
    }
    acc * a.grid.cell_volume()
}

/// Dyadic index of `s >= 0`: 0 for `s <= 1`, else `j` with `2^{j-1} < s <= 2^j`.
pub fn stratum(s: f64) -> u8 {
    let mut j = 0u8;
    let mut bound = 1.0;
    while s > bound {
        j += 1;
        bound *= 2.0;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormParams {
    pub theta: f64,
    pub nu_norm: f64,
}

impl WeightedNormParams {
    pub fn new(theta: f64, nu: &[f64]) -> Result<Self> {
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::InvalidInput(format!("theta {theta} not in (0, 1/2)")));
        }
        let nu_norm = norm(nu);
        if !(nu_norm > 0.0) {
            return Err(Error::InvalidInput("nu must be nonzero".into()));
        }
        Ok(WeightedNormParams { theta, nu_norm })
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    pub nu: Vec<f64>,
    pub grid: GridSpec,
    /// Time stratum per extended-window node.
    pub time_labels: Vec<u8>,
    /// Spatial stratum per grid point.
    pub space_labels: Vec<u8>,
    /// Largest nonempty `(alpha_1, alpha_2)`.
    pub max_alpha: (usize, usize),
}

impl DyadicDecomposition {
    pub fn new(grid: &GridSpec, nu: &[f64]) -> Result<Self> {
        if nu.len() != grid.n_dim {
            return Err(Error::InvalidInput("nu has the wrong dimension".into()));
        }
        let nn = norm(nu);
        if !(nn > 0.0) {
            return Err(Error::InvalidInput("nu must be nonzero".into()));
        }
        let time_labels: Vec<u8> = (0..grid.n_ext()).map(|m| stratum(grid.t_ext(m).abs())).collect();
        let coords = grid.coordinates();
        let space_labels: Vec<u8> = (0..grid.space_len())
            .map(|s| {
                let dot: f64 = (0..grid.n_dim).map(|a| coords[a][s] * nu[a]).sum();
                stratum(dot.abs() / nn)
            })
            .collect();
        let jt = *time_labels.iter().max().unwrap() as usize;
        let ks = *space_labels.iter().max().unwrap() as usize;
        Ok(DyadicDecomposition {
            nu: nu.to_vec(),
            grid: *grid,
            time_labels,
            space_labels,
            max_alpha: (jt, ks),
        })
    }

    pub fn nu_norm(&self) -> f64 {
        norm(&self.nu)
    }

    fn time_labels_for(&self, support: Support) -> &[u8] {
        match support {
            Support::Extended => &self.time_labels,
            Support::Slab => {
                let off = self.grid.slab_offset();
                &self.time_labels[off..off + self.grid.n_time]
            }
        }
    }

    /// Mask of strip `(j, k)` for a field with the given support.
    pub fn mask(&self, alpha: (usize, usize), support: Support) -> Mask {
        Mask {
            time: self
                .time_labels_for(support)
                .iter()
                .map(|&l| l as usize == alpha.0)
                .collect(),
            space: self.space_labels.iter().map(|&l| l as usize == alpha.1).collect(),
        }
    }

    /// Nonempty strips over the extended window, in lexicographic order.
    pub fn strips(&self) -> Vec<((usize, usize), Mask)> {
        self.nonempty()
            .into_iter()
            .map(|a| (a, self.mask(a, Support::Extended)))
            .collect()
    }

    pub fn nonempty(&self) -> Vec<(usize, usize)> {
        let (jt, ks) = self.max_alpha;
        let mut has_t = vec![false; jt + 1];
        let mut has_s = vec![false; ks + 1];
        for &l in &self.time_labels {
            has_t[l as usize] = true;
        }
        for &l in &self.space_labels {
            has_s[l as usize] = true;
        }
        let mut out = Vec::new();
        for j in 0..=jt {
            for k in 0..=ks {
                if has_t[j] && has_s[k] {
                    out.push((j, k));
                }
            }
        }
        out
    }

    fn check(&self, u: &SpaceTimeField) -> Result<()> {
        if !u.grid.same_space(&self.grid) || u.grid.n_time != self.grid.n_time {
            return Err(Error::InvalidInput("field grid differs from decomposition grid".into()));
        }
        Ok(())
    }

    /// `||u||_{L^2(Pi_alpha)}` for every nonempty strip, in one pass.
    pub fn strip_norms(&self, u: &SpaceTimeField) -> Result<Vec<((usize, usize), f64)>> {
        self.check(u)?;
        let (jt, ks) = self.max_alpha;
        let w = time_weights(&u.grid, u.support);
        let tl = self.time_labels_for(u.support);
        let mut acc = vec![0.0; (jt + 1) * (ks + 1)];
        let mut row_acc = vec![0.0; ks + 1];
        for m in 0..u.n_times() {
            row_acc.iter_mut().for_each(|a| *a = 0.0);
            for (v, &l) in u.slice(m).iter().zip(&self.space_labels) {
                row_acc[l as usize] += v.norm_sqr();
            }
            let j = tl[m] as usize;
            for k in 0..=ks {
                acc[j * (ks + 1) + k] += w[m] * row_acc[k];
            }
        }
        let vol = u.grid.cell_volume();
        Ok(self
            .nonempty()
            .into_iter()
            .map(|(j, k)| ((j, k), (acc[j * (ks + 1) + k] * vol).sqrt()))
            .collect())
    }

    /// `sup_{Pi_alpha} |V|` for every nonempty strip.
    pub fn strip_sup(&self, v: &SpaceTimeField) -> Result<Vec<((usize, usize), f64)>> {
        self.check(v)?;
        let (jt, ks) = self.max_alpha;
        let tl = self.time_labels_for(v.support);
        let mut acc = vec![0.0f64; (jt + 1) * (ks + 1)];
        for m in 0..v.n_times() {
            let j = tl[m] as usize;
            for (val, &l) in v.slice(m).iter().zip(&self.space_labels) {
                let e = &mut acc[j * (ks + 1) + l as usize];
                *e = e.max(val.norm());
            }
        }
        Ok(self
            .nonempty()
            .into_iter()
            .map(|(j, k)| ((j, k), acc[j * (ks + 1) + k]))
            .collect())
    }

    pub fn x_norm(&self, f: &SpaceTimeField, theta: f64) -> Result<f64> {
        WeightedNormParams::new(theta, &self.nu)?;
        let s: f64 = self
            .strip_norms(f)?
            .into_iter()
            .map(|((j, k), n)| 2f64.powf((j + k) as f64 * theta) * n)
            .sum();
        Ok(self.nu_norm().powf(-0.25) * s)
    }

    pub fn y_norm(&self, u: &SpaceTimeField, theta: f64) -> Result<f64> {
        WeightedNormParams::new(theta, &self.nu)?;
        let s = self
            .strip_norms(u)?
            .into_iter()
            .map(|((j, k), n)| 2f64.powf(-((j + k) as f64) * theta) * n)
            .fold(0.0, f64::max);
        Ok(self.nu_norm().powf(0.25) * s)
    }

    /// `|nu|^{-1/2} sum_alpha 2^{|alpha|/2} ||V||_{L^inf(Pi_alpha)}`, the
    /// bound on multiplication by `V` from `Y^{1/2-theta}` to `X^theta`.
    pub fn multiplication_bound(&self, v: &SpaceTimeField) -> Result<f64> {
        let s: f64 = self
            .strip_sup(v)?
            .into_iter()
            .map(|((j, k), n)| 2f64.powf((j + k) as f64 * 0.5) * n)
            .sum();
        Ok(s / self.nu_norm().sqrt())
    }
}

pub fn build_dyadic(grid: &GridSpec, nu: &[f64]) -> Result<DyadicDecomposition> {
    DyadicDecomposition::new(grid, nu)
}

pub fn x_norm(f: &SpaceTimeField, nu: &[f64], p: &WeightedNormParams) -> Result<f64> {
    if f.support != Support::Extended {
        return Err(Error::Precondition("x_norm expects an extended field".into()));
    }
    DyadicDecomposition::new(&f.grid, nu)?.x_norm(f, p.theta)
}

pub fn y_norm(u: &SpaceTimeField, nu: &[f64], p: &WeightedNormParams) -> Result<f64> {
    if u.support != Support::Extended {
        return Err(Error::Precondition("y_norm expects an extended field".into()));
    }
    DyadicDecomposition::new(&u.grid, nu)?.y_norm(u, p.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Domain;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(l: f64) -> GridSpec {
        GridSpec::new(2, l, 16, 1.0, 9, 4).unwrap()
    }

    fn random_ext(g: GridSpec, seed: u64) -> SpaceTimeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpaceTimeField::from_fn(g, Support::Extended, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn constant_on_slab() {
        let g = GridSpec::new(2, PI, 16, 1.0, 9, 1).unwrap();
        let u = SpaceTimeField::from_fn(g, Support::Slab, |_, _| Complex64::new(1.0, 0.0));
        let full = Mask::full(9, 256);
        assert!((region_l2_norm(&u, &full).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(region_l2_norm(&SpaceTimeField::zeros(g, Support::Slab), &full).unwrap(), 0.0);

        let coords = g.coordinates();
        let half = Mask {
            time: vec![true; 9],
            space: coords[0].iter().map(|&x| x < 0.0).collect(),
        };
        let direct: f64 = (0..9)
            .map(|m| if m == 0 || m == 8 { 0.5 } else { 1.0 } * g.dt())
            .sum::<f64>()
            * 128.0
            * g.cell_volume();
        let got = region_l2_norm(&u, &half).unwrap();
        assert!((got - direct.sqrt()).abs() < 1e-12);
        assert!((got - 2.0 * PI / 2f64.sqrt()).abs() < 1e-12);
        let empty = Mask {
            time: vec![false; 9],
            space: vec![true; 256],
        };
        assert_eq!(region_l2_norm(&u, &empty).unwrap(), 0.0);
    }

    #[test]
    fn single_spatial_stratum_for_large_nu() {
        // box fits inside |x . nu| <= |nu| when L * |nu_hat . (1,1)| <= 1
        let g = grid(0.5);
        let d = build_dyadic(&g, &[3.0, 0.0]).unwrap();
        assert_eq!(d.max_alpha.1, 0);
    }

    #[test]
    fn strata_for_l4() {
        let g = grid(4.0);
        let d = build_dyadic(&g, &[1.0, 0.0]).unwrap();
        let mut seen = [false; 8];
        for s in 0..g.space_len() {
            let x = g.point(s)[0].abs();
            let want = if x <= 1.0 {
                0
            } else if x <= 2.0 {
                1
            } else if x <= 4.0 {
                2
            } else {
                3
            };
            assert_eq!(d.space_labels[s], want);
            seen[want as usize] = true;
        }
        assert_eq!(seen[..4], [true, true, true, false]);
        assert_eq!(d.max_alpha.1, 2);
    }

    #[test]
    fn masks_partition_grid() {
        let g = grid(2.0 * PI);
        let d = build_dyadic(&g, &[1.0, 2.0]).unwrap();
        let strips = d.strips();
        let total: usize = strips.iter().map(|(_, m)| m.count()).sum();
        assert_eq!(total, g.n_ext() * g.space_len());
        for m in 0..g.n_ext() {
            for s in 0..g.space_len() {
                assert_eq!(strips.iter().filter(|(_, mk)| mk.contains(m, s)).count(), 1);
            }
        }
    }

    #[test]
    fn zero_nu_rejected() {
        assert!(build_dyadic(&grid(1.0), &[0.0, 0.0]).is_err());
        let u = SpaceTimeField::zeros(grid(1.0), Support::Extended);
        assert!(WeightedNormParams::new(0.5, &[1.0, 0.0]).is_err());
        let p = WeightedNormParams::new(0.25, &[1.0, 0.0]).unwrap();
        assert_eq!(x_norm(&u, &[1.0, 0.0], &p).unwrap(), 0.0);
        assert_eq!(y_norm(&u, &[1.0, 0.0], &p).unwrap(), 0.0);
    }

    #[test]
    fn single_strip_norms() {
        let g = grid(2.0 * PI);
        let nu = [4.0, 0.0];
        let d = build_dyadic(&g, &nu).unwrap();
        let mut f = random_ext(g, 1);
        let mask = d.mask((0, 0), Support::Extended);
        for m in 0..g.n_ext() {
            for s in 0..g.space_len() {
                if !mask.contains(m, s) {
                    f.values[m * g.space_len() + s] = Complex64::default();
                }
            }
        }
        let l2 = region_l2_norm(&f, &Mask::full(g.n_ext(), g.space_len())).unwrap();
        let p = WeightedNormParams::new(0.3, &nu).unwrap();
        assert!((x_norm(&f, &nu, &p).unwrap() - 4f64.powf(-0.25) * l2).abs() < 1e-12 * l2);
        assert!((y_norm(&f, &nu, &p).unwrap() - 4f64.powf(0.25) * l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn x_norm_matches_brute_force() {
        let g = grid(2.0 * PI);
        let nu = [1.0, 1.0];
        let f = SpaceTimeField::from_fn(g, Support::Extended, |_, _| Complex64::new(1.0, 0.0));
        let d = build_dyadic(&g, &nu).unwrap();
        let theta = 0.2;
        let brute: f64 = d
            .strips()
            .iter()
            .map(|((j, k), m)| 2f64.powf((j + k) as f64 * theta) * region_l2_norm(&f, m).unwrap())
            .sum::<f64>()
            * 2f64.powf(-0.125);
        assert!((d.x_norm(&f, theta).unwrap() - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn bilinear_bound_on_random_triples() {
        let g = grid(2.0 * PI);
        for seed in 0..5u64 {
            let nu = [2.0 + seed as f64, -1.0];
            let d = build_dyadic(&g, &nu).unwrap();
            let v = random_ext(g, 100 + seed);
            let u = random_ext(g, 200 + seed);
            let w = random_ext(g, 300 + seed);
            let theta = 0.1 + 0.07 * seed as f64;
            let lhs = integral_product(&v.mul(&u), &w).norm();
            let rhs = d.multiplication_bound(&v).unwrap()
                * d.y_norm(&u, 0.5 - theta).unwrap()
                * d.y_norm(&w, theta).unwrap();
            assert!(lhs <= rhs, "{lhs} > {rhs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn x_norm_monotone(seed in 0u64..1000, shrink in 0.0f64..1.0) {
            let g = GridSpec::new(2, PI, 8, 1.0, 5, 2).unwrap();
            let f2 = random_ext(g, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let f1 = f2.map(|v| v * (shrink * rng.random::<f64>()));
            let d = build_dyadic(&g, &[1.0, 0.5]).unwrap();
            prop_assert!(d.x_norm(&f1, 0.25).unwrap() <= d.x_norm(&f2, 0.25).unwrap());
        }

        #[test]
        fn strata_partition(s in 0.0f64..100.0) {
            let j = stratum(s) as i32;
            if j == 0 {
                prop_assert!(s <= 1.0);
            } else {
                prop_assert!(s > 2f64.powi(j - 1) && s <= 2f64.powi(j));
            }
        }
    }

    #[test]
    fn slab_strip_norms_use_trapezoid() {
        let g = grid(2.0 * PI);
        let d = build_dyadic(&g, &[1.0, 0.0]).unwrap();
        let u = SpaceTimeField::from_fn(g, Support::Slab, |_, _| Complex64::new(1.0, 0.0));
        let total: f64 = d.strip_norms(&u).unwrap().iter().map(|(_, n)| n * n).sum();
        let full = region_l2_norm(&u, &Mask::full(g.n_time, g.space_len())).unwrap();
        assert!((total.sqrt() - full).abs() < 1e-12);
        assert_eq!(u.domain, Domain::Physical);
    }
}
