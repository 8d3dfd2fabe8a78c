//! Binary field container, datasets of `(f, U_T f)` pairs, and run
//! configuration.
//!
//! A container is one UTF-8 JSON manifest line followed by little-endian
//! `f64` pairs `(re, im)`, time outermost, then `x_1 .. x_n` row-major. The
//! manifest carries the SHA-256 of the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Domain, SpaceTimeField, SpatialField, Support};
use crate::grid::GridSpec;
use crate::inverse::StateMap;
use crate::potential::{Modulation, Potential};
use crate::propagator::initial_to_final;

const FIELD_FORMAT: &str = "cgolab-field/1";
const DATASET_FORMAT: &str = "cgolab-dataset/1";

#[derive(Debug, Clone, PartialEq)]
pub enum AnyField {
    Spatial(SpatialField),
    SpaceTime(SpaceTimeField),
}

impl AnyField {
    pub fn grid(&self) -> GridSpec {
        match self {
            AnyField::Spatial(f) => f.grid,
            AnyField::SpaceTime(f) => f.grid,
        }
    }

    fn values(&self) -> &[Complex64] {
        match self {
            AnyField::Spatial(f) => &f.values,
            AnyField::SpaceTime(f) => &f.values,
        }
    }

    fn shape(&self) -> Vec<usize> {
        match self {
            AnyField::Spatial(f) => f.grid.space_shape(),
            AnyField::SpaceTime(f) => f.shape(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldManifest {
    format: String,
    grid: GridSpec,
    shape: Vec<usize>,
    domain_tag: Domain,
    support: Option<Support>,
    digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(values: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 16);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect()
}

fn split_manifest(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corrupt("missing manifest line".into()))?;
    let head = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Corrupt("manifest is not UTF-8".into()))?;
    Ok((head, &bytes[nl + 1..]))
}

pub fn field_to_bytes(field: &AnyField) -> Vec<u8> {
    let payload = encode(field.values());
    let (domain, support) = match field {
        AnyField::Spatial(f) => (f.domain, None),
        AnyField::SpaceTime(f) => (f.domain, Some(f.support)),
    };
    let m = FieldManifest {
        format: FIELD_FORMAT.into(),
        grid: field.grid(),
        shape: field.shape(),
        domain_tag: domain,
        support,
        digest: sha256_hex(&payload),
    };
    let mut out = serde_json::to_vec(&m).expect("manifest serializes");
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<AnyField> {
    let (head, payload) = split_manifest(bytes)?;
    let m: FieldManifest = serde_json::from_str(head).map_err(|e| Error::Corrupt(format!("manifest: {e}")))?;
    if m.format != FIELD_FORMAT {
        return Err(Error::Corrupt(format!("unknown format {}", m.format)));
    }
    m.grid.validate().map_err(|e| Error::Corrupt(format!("manifest grid: {e}")))?;
    let expected = match m.support {
        None => m.grid.space_shape(),
        Some(s) => {
            let mut v = vec![SpaceTimeField::n_times_for(&m.grid, s)];
            v.extend(m.grid.space_shape());
            v
        }
    };
    if m.shape != expected {
        return Err(Error::Corrupt(format!("shape {:?} does not match grid ({expected:?})", m.shape)));
    }
    let len: usize = m.shape.iter().product();
    if payload.len() != 16 * len {
        return Err(Error::Corrupt(format!("payload has {} bytes, expected {}", payload.len(), 16 * len)));
    }
    if sha256_hex(payload) != m.digest {
        return Err(Error::Corrupt("payload digest mismatch".into()));
    }
    let values = decode(payload);
    Ok(match m.support {
        None => AnyField::Spatial(SpatialField::new(m.grid, values, m.domain_tag)?),
        Some(s) => AnyField::SpaceTime(SpaceTimeField::new(m.grid, values, m.domain_tag, s)?),
    })
}

pub fn save_field(path: impl AsRef<Path>, field: &AnyField) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&field_to_bytes(field))?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<AnyField> {
    field_from_bytes(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Fourier,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub grid: GridSpec,
    /// SHA-256 of the hidden potential's slab samples.
    pub potential_digest: String,
    pub basis: Basis,
    pub n: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Mode index of each entry for the Fourier basis.
    pub modes: Option<Vec<Vec<i64>>>,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub entries: Vec<(SpatialField, SpatialField)>,
}

/// All grid modes ordered by `|k|`, then by angle, then lexicographically.
pub fn spiral_modes(grid: &GridSpec) -> Vec<Vec<i64>> {
    let mut idx = vec![0usize; grid.n_dim];
    let mut modes: Vec<Vec<i64>> = (0..grid.space_len())
        .map(|q| {
            grid.unravel(q, &mut idx);
            idx.iter().map(|&k| GridSpec::freq_index(k, grid.n_space)).collect()
        })
        .collect();
    let key = |k: &Vec<i64>| {
        let r2: i64 = k.iter().map(|v| v * v).sum();
        let ang = (*k.get(1).unwrap_or(&0) as f64).atan2(k[0] as f64).rem_euclid(2.0 * std::f64::consts::PI);
        (r2, ang)
    };
    modes.sort_by(|a, b| {
        let (ra, aa) = key(a);
        let (rb, ab) = key(b);
        ra.cmp(&rb).then(aa.total_cmp(&ab)).then(a.cmp(b))
    });
    modes
}

pub fn potential_digest(v: &Potential) -> String {
    sha256_hex(&encode(&v.slab_field().values))
}

/// `N` pairs `(f_i, U_T f_i + noise)` for the hidden potential `v`.
pub fn gen_dataset(v: &Potential, basis: Basis, n: usize, seed: u64, noise_sigma: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
    }
    let grid = v.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inputs, modes): (Vec<SpatialField>, Option<Vec<Vec<i64>>>) = match basis {
        Basis::Fourier => {
            let all = spiral_modes(&grid);
            if n > all.len() {
                return Err(Error::InvalidInput(format!("N = {n} exceeds the {} grid modes", all.len())));
            }
            let modes: Vec<Vec<i64>> = all.into_iter().take(n).collect();
            (modes.iter().map(|k| SpatialField::mode(grid, k)).collect(), Some(modes))
        }
        Basis::Gaussian => {
            let l = grid.half_width;
            let packets = (0..n)
                .map(|_| {
                    let c: Vec<f64> = (0..grid.n_dim).map(|_| rng.random_range(-0.5 * l..0.5 * l)).collect();
                    let k: Vec<f64> = (0..grid.n_dim)
                        .map(|_| rng.random_range(-4i64..=4) as f64 * std::f64::consts::PI / l)
                        .collect();
                    let f = SpatialField::from_fn(grid, |x| {
                        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                        let ph: f64 = x.iter().zip(&k).map(|(a, b)| a * b).sum();
                        Complex64::from_polar((-r2 / 2.0).exp(), ph)
                    });
                    let s = 1.0 / f.l2_norm();
                    f.scale(Complex64::new(s, 0.0))
                })
                .collect();
            (packets, None)
        }
    };
    let normal = Normal::new(0.0, noise_sigma / 2f64.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut entries = Vec::with_capacity(n);
    for f in inputs {
        let mut out = initial_to_final(&f, v)?;
        if noise_sigma > 0.0 {
            for z in out.values.iter_mut() {
                *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        entries.push((f, out));
    }
    let mut ds = Dataset {
        manifest: DatasetManifest {
            format: DATASET_FORMAT.into(),
            grid,
            potential_digest: potential_digest(v),
            basis,
            n,
            seed,
            noise_sigma,
            modes,
            digest: String::new(),
        },
        entries,
    };
    ds.manifest.digest = sha256_hex(&ds.payload());
    Ok(ds)
}

impl Dataset {
    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (f, u) in &self.entries {
            out.extend(encode(&f.values));
            out.extend(encode(&u.values));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        out.push(b'\n');
        out.extend(self.payload());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (head, payload) = split_manifest(bytes)?;
        let m: DatasetManifest = serde_json::from_str(head).map_err(|e| Error::Corrupt(format!("manifest: {e}")))?;
        if m.format != DATASET_FORMAT {
            return Err(Error::Corrupt(format!("unknown format {}", m.format)));
        }
        m.grid.validate().map_err(|e| Error::Corrupt(format!("manifest grid: {e}")))?;
        let ns = m.grid.space_len();
        if payload.len() != 32 * ns * m.n {
            return Err(Error::Corrupt(format!("payload has {} bytes, expected {}", payload.len(), 32 * ns * m.n)));
        }
        if m.modes.as_ref().is_some_and(|k| k.len() != m.n) {
            return Err(Error::Corrupt("mode list length differs from N".into()));
        }
        if sha256_hex(payload) != m.digest {
            return Err(Error::Corrupt("payload digest mismatch".into()));
        }
        let vals = decode(payload);
        let entries = vals
            .chunks_exact(2 * ns)
            .map(|c| {
                let f = SpatialField::new(m.grid, c[..ns].to_vec(), Domain::Physical)?;
                let u = SpatialField::new(m.grid, c[ns..].to_vec(), Domain::Physical)?;
                Ok((f, u))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest: m, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl StateMap for Dataset {
    fn grid(&self) -> GridSpec {
        self.manifest.grid
    }

    fn apply(&self, f: &SpatialField) -> Result<SpatialField> {
        self.entries
            .iter()
            .find(|(g, _)| g.values == f.values)
            .map(|(_, u)| u.clone())
            .ok_or_else(|| Error::MissingSample("probe is not in the dataset".into()))
    }

    fn apply_mode(&self, k: &[i64]) -> Result<SpatialField> {
        let modes = self
            .manifest
            .modes
            .as_ref()
            .ok_or_else(|| Error::MissingSample("dataset has no Fourier modes".into()))?;
        modes
            .iter()
            .position(|m| m == k)
            .map(|i| self.entries[i].1.clone())
            .ok_or_else(|| Error::MissingSample(format!("mode {k:?} is not in the dataset")))
    }

    fn probe_modes(&self) -> Option<Vec<Vec<i64>>> {
        self.manifest.modes.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    #[default]
    Zero,
    Gaussian,
    Bump,
    /// `amplitude * cos(pi x_1 / L)`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationKind {
    #[default]
    Constant,
    RaisedCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub amplitude: f64,
    /// Gaussian width or bump radius.
    pub width: f64,
    pub center: Vec<f64>,
    pub modulation: ModulationKind,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            kind: PotentialKind::Zero,
            amplitude: 0.0,
            width: 1.0,
            center: Vec::new(),
            modulation: ModulationKind::Constant,
        }
    }
}

impl PotentialSpec {
    pub fn build(&self, grid: GridSpec) -> Result<Potential> {
        let mut c = self.center.clone();
        if c.len() > grid.n_dim {
            return Err(Error::Config("potential center has too many components".into()));
        }
        c.resize(grid.n_dim, 0.0);
        let v = match self.kind {
            PotentialKind::Zero => return Ok(Potential::zero(grid)),
            PotentialKind::Gaussian => Potential::gaussian(grid, self.amplitude, self.width, &c)?,
            PotentialKind::Bump => Potential::bump(grid, self.amplitude, self.width, &c)?,
            PotentialKind::Cosine => {
                let a = self.amplitude;
                let f = SpatialField::from_fn(grid, |x| {
                    Complex64::new(a * (std::f64::consts::PI * x[0] / grid.half_width).cos(), 0.0)
                });
                Potential::stationary(&f, format!("cosine(a={a})"))?
            }
        };
        Ok(match self.modulation {
            ModulationKind::Constant => v,
            ModulationKind::RaisedCosine => v.with_modulation(Modulation::raised_cosine()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub delta: f64,
    pub seed: u64,
    pub potential: PotentialSpec,
    /// Second potential for identity checks and uniqueness gaps.
    pub potential2: PotentialSpec,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: Option<String>,
    pub dataset: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec::default(),
            theta: 0.25,
            tol: 1e-8,
            max_iter: 64,
            delta: 1e-8,
            seed: 0,
            potential: PotentialSpec::default(),
            potential2: PotentialSpec::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(Error::Config(format!("theta {} not in (0, 1/2)", self.theta)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
        }
        if !(0.0..=1e-2).contains(&self.delta) {
            return Err(Error::Config(format!("delta {} not in [0, 1e-2]", self.delta)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(2, 2.0 * std::f64::consts::PI, 8, 1.0, 9, 2).unwrap()
    }

    #[test]
    fn zero_field_round_trip() {
        let f = AnyField::Spatial(SpatialField::zeros(grid()));
        let b = field_to_bytes(&f);
        assert_eq!(field_from_bytes(&b).unwrap(), f);
        assert_eq!(field_to_bytes(&field_from_bytes(&b).unwrap()), b);
    }

    proptest! {
        #[test]
        fn random_spacetime_round_trip(seed in any::<u64>(), ext in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = if ext { Support::Extended } else { Support::Slab };
            let f = SpaceTimeField::from_fn(grid(), s, |_, _| Complex64::new(rand::Rng::random(&mut rng), rand::Rng::random::<f64>(&mut rng) * 1e300));
            let b = field_to_bytes(&AnyField::SpaceTime(f.clone()));
            let back = field_from_bytes(&b).unwrap();
            prop_assert_eq!(field_to_bytes(&back), b);
            prop_assert_eq!(back, AnyField::SpaceTime(f));
        }

        #[test]
        fn any_byte_flip_is_detected(pos in 0usize..1024, bit in 0u8..8) {
            let f = SpatialField::from_fn(grid(), |x| Complex64::new(x[0], x[1]));
            let mut b = field_to_bytes(&AnyField::Spatial(f));
            let head = b.iter().position(|&c| c == b'\n').unwrap() + 1;
            let p = head + pos % (b.len() - head);
            b[p] ^= 1 << bit;
            prop_assert!(matches!(field_from_bytes(&b), Err(Error::Corrupt(_))));
        }
    }

    #[test]
    fn edited_shape_and_truncation_are_corrupt() {
        let f = AnyField::Spatial(SpatialField::zeros(grid()));
        let b = field_to_bytes(&f);
        let text = String::from_utf8_lossy(&b).replace("\"shape\":[8,8]", "\"shape\":[8,9]");
        assert!(matches!(field_from_bytes(text.as_bytes()), Err(Error::Corrupt(_))));
        assert!(matches!(field_from_bytes(&b[..b.len() - 3]), Err(Error::Corrupt(_))));
        assert!(matches!(field_from_bytes(b"no newline"), Err(Error::Corrupt(_))));
    }

    #[test]
    fn spiral_starts_at_origin() {
        let m = spiral_modes(&grid());
        assert_eq!(m[0], vec![0, 0]);
        assert_eq!(&m[1..5], &[vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]]);
        assert_eq!(m.len(), 64);
    }

    #[test]
    fn free_dataset_entries_are_phased_modes() {
        let g = grid();
        let ds = gen_dataset(&Potential::zero(g), Basis::Fourier, 9, 0, 0.0).unwrap();
        for ((f, u), k) in ds.entries.iter().zip(ds.manifest.modes.as_ref().unwrap()) {
            let kap2: f64 = k.iter().map(|&v| (std::f64::consts::PI * v as f64 / g.half_width).powi(2)).sum();
            let want = f.scale(Complex64::from_polar(1.0, -kap2 * g.horizon));
            assert!(u.sub(&want).l2_coeffs() < 1e-12 * want.l2_coeffs());
        }
        assert!(gen_dataset(&Potential::zero(g), Basis::Fourier, 65, 0, 0.0).is_err());
    }

    #[test]
    fn dataset_determinism_and_noise_level() {
        let g = grid();
        let g = g.with_n_time(5);
        let v = Potential::gaussian(g, 0.2, 1.0, &[0.0, 0.0]).unwrap();
        for basis in [Basis::Fourier, Basis::Gaussian] {
            let a = gen_dataset(&v, basis, 6, 11, 1e-3).unwrap();
            let b = gen_dataset(&v, basis, 6, 11, 1e-3).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            assert_eq!(Dataset::from_bytes(&a.to_bytes()).unwrap(), a);
        }
        let clean = gen_dataset(&v, Basis::Fourier, 40, 3, 0.0).unwrap();
        let noisy = gen_dataset(&v, Basis::Fourier, 40, 3, 1e-3).unwrap();
        let (mut s, mut n) = (0.0, 0usize);
        for ((_, a), (_, b)) in clean.entries.iter().zip(&noisy.entries) {
            for (x, y) in a.values.iter().zip(&b.values) {
                s += (x - y).norm_sqr();
                n += 1;
            }
        }
        let sd = (s / n as f64).sqrt();
        assert!((sd / 1e-3 - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn dataset_as_map() {
        let g = grid();
        let v = Potential::gaussian(g, 0.2, 1.0, &[0.0, 0.0]).unwrap();
        let ds = gen_dataset(&v, Basis::Fourier, 5, 0, 0.0).unwrap();
        let f = SpatialField::mode(g, &[1, 0]);
        assert_eq!(ds.apply(&f).unwrap(), initial_to_final(&f, &v).unwrap());
        assert_eq!(ds.apply_mode(&[0, 1]).unwrap(), initial_to_final(&SpatialField::mode(g, &[0, 1]), &v).unwrap());
        assert!(matches!(ds.apply(&SpatialField::mode(g, &[3, 3])), Err(Error::MissingSample(_))));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let text = "theta = 0.1\n[grid]\nn_space = 32\n[potential]\nkind = \"bump\"\namplitude = 0.5\nwidth = 2.0\nmodulation = \"raised-cosine\"\n";
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.grid.n_space, 32);
        assert!(c.potential.build(c.grid).unwrap().time_dependent());
        assert!(RunConfig::from_toml("theta = 0.7").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }
}
