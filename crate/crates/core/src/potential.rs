//! Potentials `V(t, x)` on the slab.
//!
//! A potential is either separable (a spatial profile times a trigonometric
//! time modulation, evaluable at any `t`) or given by samples at the slab
//! nodes, in which case midpoint values are node averages.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{Domain, SpaceTimeField, SpatialField, Support};
use crate::grid::GridSpec;

/// `g(t) = a0 + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub a0: f64,
    /// `(k, a_k, b_k)`
    pub terms: Vec<(u32, f64, f64)>,
}

impl Modulation {
    pub fn constant() -> Self {
        Modulation { a0: 1.0, terms: vec![] }
    }

    /// `1 + cos(2 pi t / T)`.
    pub fn raised_cosine() -> Self {
        Modulation {
            a0: 1.0,
            terms: vec![(1, 1.0, 0.0)],
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, a, b)| a == 0.0 && b == 0.0)
    }

    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        self.terms.iter().fold(self.a0, |acc, &(k, a, b)| {
            let w = 2.0 * PI * k as f64 * t / horizon;
            acc + a * w.cos() + b * w.sin()
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.a0.abs() + self.terms.iter().map(|&(_, a, b)| a.hypot(b)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialData {
    Separable {
        profile: Vec<Complex64>,
        modulation: Modulation,
    },
    /// Values at the slab nodes, time outermost.
    Sampled(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub grid: GridSpec,
    pub data: PotentialData,
    pub decay_rate: Option<f64>,
    pub conjugated: bool,
    pub id: String,
}

impl Potential {
    pub fn zero(grid: GridSpec) -> Self {
        Potential {
            grid,
            data: PotentialData::Separable {
                profile: vec![Complex64::default(); grid.space_len()],
                modulation: Modulation::constant(),
            },
            decay_rate: None,
            conjugated: false,
            id: "zero".into(),
        }
    }

    /// Time-independent potential from a spatial field.
    pub fn stationary(field: &SpatialField, id: impl Into<String>) -> Result<Self> {
        Self::separable(field, Modulation::constant(), id)
    }

    pub fn separable(field: &SpatialField, modulation: Modulation, id: impl Into<String>) -> Result<Self> {
        if field.domain != Domain::Physical {
            return Err(Error::InvalidInput("potential must be physical-domain".into()));
        }
        let p = Potential {
            grid: field.grid,
            data: PotentialData::Separable {
                profile: field.values.clone(),
                modulation,
            },
            decay_rate: None,
            conjugated: false,
            id: id.into(),
        };
        p.check_finite()?;
        Ok(p)
    }

    /// Potential from slab-node samples.
    pub fn sampled(field: &SpaceTimeField, id: impl Into<String>) -> Result<Self> {
        if field.support != Support::Slab || field.domain != Domain::Physical {
            return Err(Error::InvalidInput("sampled potential must be a physical slab field".into()));
        }
        let p = Potential {
            grid: field.grid,
            data: PotentialData::Sampled(field.values.clone()),
            decay_rate: None,
            conjugated: false,
            id: id.into(),
        };
        p.check_finite()?;
        Ok(p)
    }

    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    pub fn gaussian(grid: GridSpec, amplitude: f64, width: f64, center: &[f64]) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidInput("width must be positive".into()));
        }
        let f = SpatialField::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
            Complex64::new(amplitude * (-r2 / (width * width)).exp(), 0.0)
        });
        let mut p = Self::stationary(&f, format!("gaussian(a={amplitude},w={width},c={center:?})"))?;
        p.declare_decay(0.5, amplitude)?;
        Ok(p)
    }

    /// Compactly supported smooth bump `amplitude * exp(1 - 1/(1 - r^2))`,
    /// `r = |x - center| / radius`, peak value `amplitude`.
    pub fn bump(grid: GridSpec, amplitude: f64, radius: f64, center: &[f64]) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("radius must be positive".into()));
        }
        let f = SpatialField::from_fn(grid, |x| {
            Complex64::new(amplitude * bump_profile(x, center, radius), 0.0)
        });
        let mut p = Self::stationary(&f, format!("bump(a={amplitude},r={radius},c={center:?})"))?;
        p.declare_decay(1.0, amplitude)?;
        Ok(p)
    }

    pub fn with_modulation(mut self, modulation: Modulation) -> Self {
        if let PotentialData::Separable { modulation: m, .. } = &mut self.data {
            *m = modulation;
            self.id = format!("{} x mod", self.id);
        }
        self
    }

    /// Records the decay rate after checking `max_shell |V| e^{c|x|}`
    /// against `1e-6 * max(scale, 1)`.
    pub fn declare_decay(&mut self, rate: f64, scale: f64) -> Result<()> {
        let shell = self.shell_decay(rate);
        let bound = 1e-6 * scale.abs().max(1.0);
        if shell > bound {
            return Err(Error::InvalidInput(format!(
                "potential does not decay at rate {rate} on this box: shell value {shell:.3e} > {bound:.1e}"
            )));
        }
        self.decay_rate = Some(rate);
        Ok(())
    }

    /// `max |V(t, x)| e^{rate |x|}` over the outermost spatial shell.
    pub fn shell_decay(&self, rate: f64) -> f64 {
        let g = self.grid;
        let mut mi = vec![0; g.n_dim];
        let mut best = 0.0f64;
        let peak = self.max_abs_per_point();
        for s in 0..g.space_len() {
            g.unravel(s, &mut mi);
            if mi.iter().all(|&j| j != 0 && j != 1 && j != g.n_space - 1) {
                continue;
            }
            let r = g.point(s).iter().map(|a| a * a).sum::<f64>().sqrt();
            best = best.max(peak[s] * (rate * r).exp());
        }
        best
    }

    fn max_abs_per_point(&self) -> Vec<f64> {
        match &self.data {
            PotentialData::Separable { profile, modulation } => {
                let m = modulation.max_abs();
                profile.iter().map(|v| v.norm() * m).collect()
            }
            PotentialData::Sampled(vals) => {
                let ns = self.grid.space_len();
                let mut out = vec![0.0f64; ns];
                for (i, v) in vals.iter().enumerate() {
                    out[i % ns] = out[i % ns].max(v.norm());
                }
                out
            }
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match &self.data {
            PotentialData::Separable { profile, .. } => profile.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
            PotentialData::Sampled(v) => v.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("potential has non-finite values".into()))
        }
    }

    pub fn time_dependent(&self) -> bool {
        match &self.data {
            PotentialData::Separable { modulation, .. } => !modulation.is_constant(),
            PotentialData::Sampled(_) => true,
        }
    }

    pub fn is_real(&self) -> bool {
        match &self.data {
            PotentialData::Separable { profile, .. } => profile.iter().all(|v| v.im == 0.0),
            PotentialData::Sampled(v) => v.iter().all(|v| v.im == 0.0),
        }
    }

    /// `V` with complex conjugated values.
    pub fn conj(&self) -> Self {
        let data = match &self.data {
            PotentialData::Separable { profile, modulation } => PotentialData::Separable {
                profile: profile.iter().map(|v| v.conj()).collect(),
                modulation: modulation.clone(),
            },
            PotentialData::Sampled(v) => PotentialData::Sampled(v.iter().map(|v| v.conj()).collect()),
        };
        Potential {
            data,
            conjugated: !self.conjugated,
            ..self.clone()
        }
    }

    /// Same potential sampled for a grid with a different time step.
    /// Sampled potentials cannot be resampled.
    pub fn on_grid(&self, grid: GridSpec) -> Result<Self> {
        if !grid.same_space(&self.grid) {
            return Err(Error::InvalidInput("spatial grids differ".into()));
        }
        match &self.data {
            PotentialData::Separable { .. } => Ok(Potential { grid, ..self.clone() }),
            PotentialData::Sampled(_) if grid.n_time == self.grid.n_time => Ok(Potential { grid, ..self.clone() }),
            PotentialData::Sampled(_) => Err(Error::InvalidInput(
                "node-sampled potential cannot be moved to another time grid".into(),
            )),
        }
    }

    /// `V(t, .)` for `t` in `[0, T]`; sampled data is interpolated linearly.
    pub fn at_time(&self, t: f64, out: &mut [Complex64]) {
        match &self.data {
            PotentialData::Separable { profile, modulation } => {
                let g = modulation.eval(t, self.grid.horizon);
                for (o, p) in out.iter_mut().zip(profile) {
                    *o = p * g;
                }
            }
            PotentialData::Sampled(vals) => {
                let ns = self.grid.space_len();
                let s = (t / self.grid.dt()).clamp(0.0, (self.grid.n_time - 1) as f64);
                let m = (s.floor() as usize).min(self.grid.n_time - 2);
                let w = s - m as f64;
                let a = &vals[m * ns..(m + 1) * ns];
                let b = &vals[(m + 1) * ns..(m + 2) * ns];
                for i in 0..ns {
                    out[i] = a[i] * (1.0 - w) + b[i] * w;
                }
            }
        }
    }

    /// Potential at the midpoint of step `m`, i.e. `t = (m + 1/2) dt`.
    pub fn midpoint(&self, m: usize, out: &mut [Complex64]) {
        match &self.data {
            PotentialData::Sampled(vals) => {
                let ns = self.grid.space_len();
                let a = &vals[m * ns..(m + 1) * ns];
                let b = &vals[(m + 1) * ns..(m + 2) * ns];
                for i in 0..ns {
                    out[i] = (a[i] + b[i]) * 0.5;
                }
            }
            _ => self.at_time((m as f64 + 0.5) * self.grid.dt(), out),
        }
    }

    /// Values at the slab nodes.
    pub fn slab_field(&self) -> SpaceTimeField {
        let ns = self.grid.space_len();
        let mut values = vec![Complex64::default(); self.grid.n_time * ns];
        for m in 0..self.grid.n_time {
            self.at_time(self.grid.t_slab(m), &mut values[m * ns..(m + 1) * ns]);
        }
        SpaceTimeField {
            grid: self.grid,
            values,
            domain: Domain::Physical,
            support: Support::Slab,
        }
    }

    /// `V` on the padded window: the slab values, zero outside `[0, T]`.
    pub fn extended_field(&self) -> SpaceTimeField {
        self.slab_field().embed().expect("slab field embeds")
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_per_point().into_iter().fold(0.0, f64::max)
    }

    /// `int |V| dt dx` with the slab quadrature.
    pub fn l1_norm(&self) -> f64 {
        let f = self.slab_field();
        let w = crate::dyadic::time_weights(&self.grid, Support::Slab);
        (0..self.grid.n_time)
            .map(|m| w[m] * f.slice(m).iter().map(|v| v.norm()).sum::<f64>())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn sub(&self, other: &Potential) -> Result<Potential> {
        let a = self.slab_field();
        let b = other.on_grid(self.grid)?.slab_field();
        Potential::sampled(&a.sub(&b), format!("{} - {}", self.id, other.id))
    }

    pub fn add(&self, other: &Potential) -> Result<Potential> {
        if let (
            PotentialData::Separable { profile: p, modulation: m },
            PotentialData::Separable { profile: q, modulation: n },
        ) = (&self.data, &other.data)
        {
            if m == n {
                return Ok(Potential {
                    data: PotentialData::Separable {
                        profile: p.iter().zip(q).map(|(a, b)| a + b).collect(),
                        modulation: m.clone(),
                    },
                    decay_rate: None,
                    id: format!("{} + {}", self.id, other.id),
                    ..self.clone()
                });
            }
        }
        let a = self.slab_field();
        let b = other.on_grid(self.grid)?.slab_field();
        Potential::sampled(&a.add(&b), format!("{} + {}", self.id, other.id))
    }

    pub fn scale(&self, c: f64) -> Potential {
        let data = match &self.data {
            PotentialData::Separable { profile, modulation } => PotentialData::Separable {
                profile: profile.iter().map(|v| v * c).collect(),
                modulation: modulation.clone(),
            },
            PotentialData::Sampled(v) => PotentialData::Sampled(v.iter().map(|v| v * c).collect()),
        };
        Potential {
            data,
            id: format!("{c} * {}", self.id),
            ..self.clone()
        }
    }
}

pub fn bump_profile(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() / (radius * radius);
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_decays_on_default_box() {
        let g = GridSpec::default();
        let v = Potential::gaussian(g, 0.5, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(v.decay_rate, Some(0.5));
        assert!(!v.time_dependent());
        assert!((v.max_abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wide_gaussian_rejected() {
        let g = GridSpec::default();
        assert!(Potential::gaussian(g, 1.0, 4.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn raised_cosine_midpoints() {
        let g = GridSpec::new(2, 3.0, 8, 1.0, 5, 1).unwrap();
        let v = Potential::gaussian(g, 1.0, 0.5, &[0.0, 0.0])
            .unwrap()
            .with_modulation(Modulation::raised_cosine());
        assert!(v.time_dependent());
        let mut out = vec![Complex64::default(); g.space_len()];
        v.midpoint(1, &mut out);
        let centre = g.mode_index(&[4, 4]);
        let want = 1.0 + (2.0 * PI * 0.375).cos();
        assert!((out[centre].re - want).abs() < 1e-12);
    }

    #[test]
    fn sampled_midpoint_is_node_average() {
        let g = GridSpec::new(2, 3.0, 4, 1.0, 3, 1).unwrap();
        let f = SpaceTimeField::from_fn(g, Support::Slab, |t, _| Complex64::new(t * t, 0.0));
        let v = Potential::sampled(&f, "t2").unwrap();
        let mut out = vec![Complex64::default(); g.space_len()];
        v.midpoint(0, &mut out);
        assert!((out[0].re - 0.125).abs() < 1e-15);
    }

    #[test]
    fn nan_rejected() {
        let g = GridSpec::new(2, 3.0, 4, 1.0, 3, 1).unwrap();
        let mut f = SpatialField::zeros(g);
        f.values[2] = Complex64::new(f64::NAN, 0.0);
        assert!(Potential::stationary(&f, "bad").is_err());
    }

    #[test]
    fn bump_support_and_l1() {
        let g = GridSpec::default();
        let v = Potential::bump(g, 1.0, 1.0, &[2.0, 0.0]).unwrap();
        let f = v.slab_field();
        for s in 0..g.space_len() {
            let x = g.point(s);
            if ((x[0] - 2.0).powi(2) + x[1].powi(2)).sqrt() >= 1.0 {
                assert_eq!(f.values[s], Complex64::default());
            }
        }
        assert!(v.l1_norm() > 0.0);
        assert!(v.conj().conjugated);
    }
}
