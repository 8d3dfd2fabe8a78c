//! Sampled complex fields on a spatial grid or on the space-time grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Physical,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Slab,
    Extended,
}

fn expect_domain(have: Domain, dir: Direction) -> Result<()> {
    match (have, dir) {
        (Domain::Physical, Direction::Forward) | (Domain::Frequency, Direction::Inverse) => Ok(()),
        _ => Err(Error::Precondition(format!(
            "{dir:?} transform of a field tagged {have:?}"
        ))),
    }
}

fn flip(d: Domain) -> Domain {
    match d {
        Domain::Physical => Domain::Frequency,
        Domain::Frequency => Domain::Physical,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
    pub domain: Domain,
}

impl SpatialField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>, domain: Domain) -> Result<Self> {
        if values.len() != grid.space_len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.space_len(),
                values.len()
            )));
        }
        Ok(SpatialField { grid, values, domain })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        SpatialField {
            grid,
            values: vec![Complex64::default(); grid.space_len()],
            domain: Domain::Physical,
        }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut mi = vec![0; grid.n_dim];
        let mut x = vec![0.0; grid.n_dim];
        let values = (0..grid.space_len())
            .map(|idx| {
                grid.unravel(idx, &mut mi);
                for a in 0..grid.n_dim {
                    x[a] = grid.x_coord(mi[a]);
                }
                f(&x)
            })
            .collect();
        SpatialField {
            grid,
            values,
            domain: Domain::Physical,
        }
    }

    /// Plane wave `exp(i kappa . x)` with `kappa = pi k / L`.
    pub fn mode(grid: GridSpec, k: &[i64]) -> Self {
        let kappa: Vec<f64> = k
            .iter()
            .map(|&ki| std::f64::consts::PI * ki as f64 / grid.half_width)
            .collect();
        Self::from_fn(grid, |x| {
            let ph: f64 = x.iter().zip(&kappa).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, ph)
        })
    }

    pub fn transform(&self, dir: Direction) -> Result<Self> {
        expect_domain(self.domain, dir)?;
        let mut values = self.values.clone();
        fft_nd(&mut values, &self.grid.space_shape(), dir);
        Ok(SpatialField {
            grid: self.grid,
            values,
            domain: flip(self.domain),
        })
    }

    /// Plain Euclidean norm of the sample vector.
    pub fn l2_coeffs(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `L^2` norm with the rectangle rule, `dx^n` per cell.
    pub fn l2_norm(&self) -> f64 {
        self.l2_coeffs() * self.grid.cell_volume().sqrt()
    }

    /// `<self, other> = sum self * conj(other) dx^n`.
    pub fn inner(&self, other: &SpatialField) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * self.grid.cell_volume()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        SpatialField {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &SpatialField) -> Self {
        SpatialField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &SpatialField) -> Self {
        SpatialField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }

    pub fn conj(&self) -> Self {
        SpatialField {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

pub fn transform_spatial(f: &SpatialField, dir: Direction) -> Result<SpatialField> {
    f.transform(dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
    pub domain: Domain,
    pub support: Support,
}

impl SpaceTimeField {
    pub fn n_times_for(grid: &GridSpec, support: Support) -> usize {
        match support {
            Support::Slab => grid.n_time,
            Support::Extended => grid.n_ext(),
        }
    }

    pub fn new(
        grid: GridSpec,
        values: Vec<Complex64>,
        domain: Domain,
        support: Support,
    ) -> Result<Self> {
        let want = Self::n_times_for(&grid, support) * grid.space_len();
        if values.len() != want {
            return Err(Error::InvalidInput(format!(
                "expected {want} values, got {}",
                values.len()
            )));
        }
        Ok(SpaceTimeField {
            grid,
            values,
            domain,
            support,
        })
    }

    pub fn zeros(grid: GridSpec, support: Support) -> Self {
        let len = Self::n_times_for(&grid, support) * grid.space_len();
        SpaceTimeField {
            grid,
            values: vec![Complex64::default(); len],
            domain: Domain::Physical,
            support,
        }
    }

    /// Samples `f(t, x)`; times follow the support tag.
    pub fn from_fn(
        grid: GridSpec,
        support: Support,
        mut f: impl FnMut(f64, &[f64]) -> Complex64,
    ) -> Self {
        let coords = grid.coordinates();
        let ns = grid.space_len();
        let nt = Self::n_times_for(&grid, support);
        let mut values = Vec::with_capacity(nt * ns);
        let mut x = vec![0.0; grid.n_dim];
        for m in 0..nt {
            let t = match support {
                Support::Slab => grid.t_slab(m),
                Support::Extended => grid.t_ext(m),
            };
            for s in 0..ns {
                for a in 0..grid.n_dim {
                    x[a] = coords[a][s];
                }
                values.push(f(t, &x));
            }
        }
        SpaceTimeField {
            grid,
            values,
            domain: Domain::Physical,
            support,
        }
    }

    /// Stacks spatial states as consecutive slab time nodes.
    pub fn from_states(states: &[SpatialField]) -> Result<Self> {
        let grid = states
            .first()
            .ok_or_else(|| Error::InvalidInput("no states".into()))?
            .grid;
        let grid = grid.with_n_time(states.len());
        let mut values = Vec::with_capacity(states.len() * grid.space_len());
        for s in states {
            values.extend_from_slice(&s.values);
        }
        Self::new(grid, values, Domain::Physical, Support::Slab)
    }

    pub fn n_times(&self) -> usize {
        Self::n_times_for(&self.grid, self.support)
    }

    pub fn time(&self, m: usize) -> f64 {
        match self.support {
            Support::Slab => self.grid.t_slab(m),
            Support::Extended => self.grid.t_ext(m),
        }
    }

    pub fn slice(&self, m: usize) -> &[Complex64] {
        let ns = self.grid.space_len();
        &self.values[m * ns..(m + 1) * ns]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [Complex64] {
        let ns = self.grid.space_len();
        &mut self.values[m * ns..(m + 1) * ns]
    }

    pub fn state(&self, m: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.slice(m).to_vec(),
            domain: self.domain,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_times()];
        s.extend(self.grid.space_shape());
        s
    }

    /// Zero-extends a slab field onto the padded window.
    pub fn embed(&self) -> Result<Self> {
        if self.support != Support::Slab {
            return Err(Error::Precondition("embed expects a slab field".into()));
        }
        let ns = self.grid.space_len();
        let mut out = Self::zeros(self.grid, Support::Extended);
        out.domain = self.domain;
        let off = self.grid.slab_offset() * ns;
        out.values[off..off + self.values.len()].copy_from_slice(&self.values);
        Ok(out)
    }

    /// Restricts an extended field back to the slab nodes.
    pub fn restrict(&self) -> Result<Self> {
        if self.support != Support::Extended {
            return Err(Error::Precondition("restrict expects an extended field".into()));
        }
        let ns = self.grid.space_len();
        let off = self.grid.slab_offset() * ns;
        Ok(SpaceTimeField {
            grid: self.grid,
            values: self.values[off..off + self.grid.n_time * ns].to_vec(),
            domain: self.domain,
            support: Support::Slab,
        })
    }

    pub fn transform(&self, dir: Direction) -> Result<Self> {
        if self.support != Support::Extended {
            return Err(Error::Precondition(
                "space-time transforms act on extended fields; embed the slab field first".into(),
            ));
        }
        expect_domain(self.domain, dir)?;
        let mut values = self.values.clone();
        fft_nd(&mut values, &self.shape(), dir);
        Ok(SpaceTimeField {
            grid: self.grid,
            values,
            domain: flip(self.domain),
            support: self.support,
        })
    }

    pub fn l2_coeffs(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        SpaceTimeField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            domain: self.domain,
            support: self.support,
        }
    }

    pub fn zip_map(
        &self,
        other: &SpaceTimeField,
        mut f: impl FnMut(Complex64, Complex64) -> Complex64,
    ) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "field size mismatch");
        SpaceTimeField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            domain: self.domain,
            support: self.support,
        }
    }

    pub fn mul(&self, other: &SpaceTimeField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &SpaceTimeField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

pub fn transform_spacetime(u: &SpaceTimeField, dir: Direction) -> Result<SpaceTimeField> {
    u.transform(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn small() -> GridSpec {
        GridSpec::new(2, PI, 16, 1.0, 9, 2).unwrap()
    }

    fn random_spatial(g: GridSpec, seed: u64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.space_len())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        SpatialField::new(g, v, Domain::Physical).unwrap()
    }

    #[test]
    fn constant_goes_to_zero_frequency() {
        let g = small();
        let f = SpatialField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let h = f.transform(Direction::Forward).unwrap();
        assert_eq!(h.domain, Domain::Frequency);
        assert!((h.values[0] - Complex64::new(16.0, 0.0)).norm() < 1e-12);
        assert!(h.values[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn mode_has_single_coefficient() {
        let g = small();
        let h = SpatialField::mode(g, &[1, 0]).transform(Direction::Forward).unwrap();
        let idx = g.mode_index(&[1, 0]);
        for (i, v) in h.values.iter().enumerate() {
            if i == idx {
                assert!((v.norm() - 16.0).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = small();
        let f = random_spatial(g, 3);
        let h = transform_spatial(&f, Direction::Forward).unwrap();
        assert!((h.l2_coeffs() - f.l2_coeffs()).abs() <= 1e-12 * f.l2_coeffs());
        let back = h.transform(Direction::Inverse).unwrap();
        let err = back.sub(&f).l2_coeffs() / f.l2_coeffs();
        assert!(err <= 1e-12);
    }

    #[test]
    fn wrong_direction_is_rejected() {
        let f = SpatialField::zeros(small());
        assert!(f.transform(Direction::Inverse).is_err());
        let u = SpaceTimeField::zeros(small(), Support::Slab);
        assert!(matches!(
            u.transform(Direction::Forward),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(SpatialField::new(small(), vec![Complex64::default(); 3], Domain::Physical).is_err());
    }

    #[test]
    fn embed_restrict_bit_exact() {
        let g = small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = SpaceTimeField::from_fn(g, Support::Slab, |_, _| {
            Complex64::new(rng.random(), rng.random())
        });
        let back = u.embed().unwrap().restrict().unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn spacetime_mode_and_parseval() {
        let g = small();
        let zero = SpaceTimeField::zeros(g, Support::Extended);
        assert!(zero.transform(Direction::Forward).unwrap().l2_coeffs() == 0.0);

        let (k_t, k_x) = (3usize, 2usize);
        let u = SpaceTimeField::from_fn(g, Support::Extended, |t, x| {
            Complex64::from_polar(1.0, g.tau(k_t) * t + g.xi(k_x) * x[0])
        });
        let h = u.transform(Direction::Forward).unwrap();
        let big: Vec<usize> = (0..h.values.len()).filter(|&i| h.values[i].norm() > 1e-8).collect();
        assert_eq!(big.len(), 1);
        assert!((h.l2_coeffs() - u.l2_coeffs()).abs() <= 1e-12 * u.l2_coeffs());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = SpaceTimeField::from_fn(g, Support::Extended, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let rh = r.transform(Direction::Forward).unwrap();
        assert!((rh.l2_coeffs() - r.l2_coeffs()).abs() <= 1e-12 * r.l2_coeffs());
        let back = transform_spacetime(&rh, Direction::Inverse).unwrap();
        assert!(back.sub(&r).l2_coeffs() <= 1e-12 * r.l2_coeffs());
    }
}
