//! Synthetic 2-D datasets, min-max scaling and CSV IO.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Generator { name: String, seed: u64 },
    File { path: String },
    Memory,
}

/// Affine min-max map of one dimension onto [a, b].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisMap {
    pub min: f64,
    pub max: f64,
    pub a: f64,
    pub b: f64,
}

impl AxisMap {
    fn degenerate(&self) -> bool {
        self.max <= self.min
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.degenerate() {
            return 0.5 * (self.a + self.b);
        }
        if x == self.max {
            return self.b;
        }
        self.a + (x - self.min) * (self.b - self.a) / (self.max - self.min)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.degenerate() {
            return self.min;
        }
        if y == self.b {
            return self.max;
        }
        self.min + (y - self.a) * (self.max - self.min) / (self.b - self.a)
    }

    /// d(forward)/dx, 0 for a collapsed axis.
    pub fn slope(&self) -> f64 {
        if self.degenerate() {
            0.0
        } else {
            (self.b - self.a) / (self.max - self.min)
        }
    }
}

/// Per-dimension scaling applied to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransform {
    pub axes: Vec<AxisMap>,
}

impl ScaleTransform {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.axes.iter().zip(x).map(|(m, v)| m.forward(*v)).collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        self.axes.iter().zip(y).map(|(m, v)| m.inverse(*v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub d: usize,
    pub provenance: Provenance,
    pub scale: Option<ScaleTransform>,
}

impl Dataset {
    /// Checks that every point is finite and of the same dimension.
    pub fn new(points: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let d = points.first().ok_or(Error::EmptyDataset)?.len();
        if d == 0 {
            return Err(invalid("points must have at least one coordinate"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if let Some(v) = p.iter().find(|v| !v.is_finite()) {
                return Err(invalid(format!("point {i} has non-finite coordinate {v}")));
            }
        }
        Ok(Dataset {
            points,
            d,
            provenance,
            scale: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-dimension (min, max).
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.d)
            .map(|j| {
                self.points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])))
            })
            .collect()
    }
}

fn generated(points: Vec<Vec<f64>>, name: &str, seed: u64) -> Result<Dataset> {
    Dataset::new(
        points,
        Provenance::Generator {
            name: name.to_string(),
            seed,
        },
    )
}

fn noise_source(noise_sd: f64) -> Result<Normal<f64>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid(format!("noise level must be finite and non-negative, got {noise_sd}")));
    }
    Normal::new(0.0, noise_sd).map_err(|e| invalid(e.to_string()))
}

fn linspace(start: f64, stop: f64, n: usize, endpoint: bool) -> impl Iterator<Item = f64> {
    let steps = if endpoint { n.saturating_sub(1).max(1) } else { n.max(1) };
    let step = (stop - start) / steps as f64;
    (0..n).map(move |i| start + step * i as f64)
}

/// Two interleaved unit half-circles, the lower one shifted by (1, 0.5).
/// The first ⌊n/2⌋ points lie on the upper arc.
pub fn two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("two moons needs at least 2 points"));
    }
    let noise = noise_source(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out = n / 2;
    let n_in = n - n_out;
    let mut points = Vec::with_capacity(n);
    points.extend(linspace(0.0, PI, n_out, true).map(|t| vec![t.cos(), t.sin()]));
    points.extend(linspace(0.0, PI, n_in, true).map(|t| vec![1.0 - t.cos(), 0.5 - t.sin()]));
    for p in &mut points {
        for v in p.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    generated(points, "two-moons", seed)
}

/// Radius ratio of the inner circle.
pub const CIRCLE_FACTOR: f64 = 0.5;

/// Unit circle and a concentric circle of radius [`CIRCLE_FACTOR`].
pub fn concentric_circles(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("circles need at least 2 points"));
    }
    let noise = noise_source(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out = n / 2;
    let n_in = n - n_out;
    let mut points = Vec::with_capacity(n);
    points.extend(linspace(0.0, 2.0 * PI, n_out, false).map(|t| vec![t.cos(), t.sin()]));
    points.extend(
        linspace(0.0, 2.0 * PI, n_in, false).map(|t| vec![CIRCLE_FACTOR * t.cos(), CIRCLE_FACTOR * t.sin()]),
    );
    for p in &mut points {
        for v in p.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    generated(points, "circles", seed)
}

/// Isotropic Gaussian clusters; point `i` belongs to center `i mod k`.
pub fn gaussian_blobs(n: usize, centers: &[Vec<f64>], sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = centers.first().ok_or_else(|| invalid("need at least one center"))?.len();
    if centers.iter().any(|c| c.len() != d) {
        return Err(invalid("centers differ in dimension"));
    }
    let noise = noise_source(sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|i| centers[i % centers.len()].iter().map(|c| c + noise.sample(&mut rng)).collect())
        .collect();
    generated(points, "blobs", seed)
}

/// Default cluster centres of [`anisotropic_blobs`].
pub const BLOB_CENTERS: [[f64; 2]; 3] = [[-2.0, 2.0], [2.0, 1.0], [0.0, -2.0]];

/// Three Gaussian clusters sheared by a fixed linear map.
pub fn anisotropic_blobs(n: usize, sd: f64, seed: u64) -> Result<Dataset> {
    let centers: Vec<Vec<f64>> = BLOB_CENTERS.iter().map(|c| c.to_vec()).collect();
    let mut ds = gaussian_blobs(n, &centers, sd, seed)?;
    for p in &mut ds.points {
        let (x, y) = (p[0], p[1]);
        p[0] = 0.6 * x - 0.4 * y;
        p[1] = -0.6 * x + 0.8 * y;
    }
    ds.provenance = Provenance::Generator {
        name: "blobs".into(),
        seed,
    };
    Ok(ds)
}

/// Two interleaved Archimedean spirals, one the point reflection of the
/// other, with radius growing to 1 over one and a half turns.
pub fn spirals(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("spirals need at least 2 points"));
    }
    let noise = noise_source(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_a = n / 2;
    let n_b = n - n_a;
    let turn = 3.0 * PI;
    let arm = |t: f64, sign: f64| {
        let r = 0.1 + 0.9 * t / turn;
        vec![sign * r * t.cos(), sign * r * t.sin()]
    };
    let mut points: Vec<Vec<f64>> = linspace(0.0, turn, n_a, true).map(|t| arm(t, 1.0)).collect();
    points.extend(linspace(0.0, turn, n_b, true).map(|t| arm(t, -1.0)));
    for p in &mut points {
        for v in p.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    generated(points, "spirals", seed)
}

/// Generator names accepted by [`generate`].
pub const GENERATORS: [&str; 4] = ["two-moons", "circles", "blobs", "spirals"];

/// Dispatches to a generator by name.
pub fn generate(name: &str, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    match name {
        "two-moons" => two_moons(n, noise, seed),
        "circles" => concentric_circles(n, noise, seed),
        "blobs" => anisotropic_blobs(n, noise, seed),
        "spirals" => spirals(n, noise, seed),
        other => Err(invalid(format!("unknown dataset {other:?}; expected one of {GENERATORS:?}"))),
    }
}

/// Standard normal draws, mostly for tests and estimator checks.
pub fn normal_samples(n: usize, d: usize, mean: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + z
                })
                .collect()
        })
        .collect()
}

/// Min-max maps every dimension onto [a, b] and records the transform.
/// A dimension without spread maps to the midpoint.
pub fn scale_to_interval(dataset: &Dataset, a: f64, b: f64) -> Result<Dataset> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("interval [{a}, {b}] is empty")));
    }
    let axes: Vec<AxisMap> = dataset
        .bounds()
        .into_iter()
        .enumerate()
        .map(|(j, (min, max))| {
            if max <= min {
                log::warn!("dimension {j} has zero spread; mapping it to the interval midpoint");
            }
            AxisMap { min, max, a, b }
        })
        .collect();
    let transform = ScaleTransform { axes };
    let points = dataset
        .points
        .iter()
        .map(|p| transform.apply(p).into_iter().map(|v| v.clamp(a, b)).collect())
        .collect();
    Ok(Dataset {
        points,
        d: dataset.d,
        provenance: dataset.provenance.clone(),
        scale: Some(transform),
    })
}

fn header_line(ds: &Dataset) -> String {
    match &ds.provenance {
        Provenance::Generator { name, seed } => format!("# d={} generator={} seed={}", ds.d, name, seed),
        _ => format!("# d={}", ds.d),
    }
}

/// CSV text: an optional `# d=… generator=… seed=…` line, then one point per row.
pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = header_line(ds);
    out.push('\n');
    for p in &ds.points {
        for (j, v) in p.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // shortest representation that parses back to the same value
            write!(out, "{v:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(ds))?;
    Ok(())
}

fn parse_header(line: &str) -> Option<(Option<usize>, Option<(String, u64)>)> {
    let body = line.strip_prefix('#')?.trim();
    let mut d = None;
    let mut name = None;
    let mut seed = None;
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("d", v)) => d = v.parse().ok(),
            Some(("generator", v)) => name = Some(v.to_string()),
            Some(("seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    let generator = name.zip(seed);
    Some((d, generator))
}

/// Parses CSV text; `source` is recorded as the file provenance.
pub fn parse_csv(text: &str, source: &str) -> Result<Dataset> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut declared_d = None;
    let mut generator = None;
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if points.is_empty() {
                if let Some((d, g)) = parse_header(line) {
                    declared_d = declared_d.or(d);
                    generator = generator.or(g);
                }
            }
            continue;
        }
        let mut p = Vec::new();
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite value {v}"),
                });
            }
            p.push(v);
        }
        let w = *width.get_or_insert(p.len());
        if p.len() != w {
            return Err(Error::Parse {
                row,
                column: p.len().min(w) + 1,
                message: format!("row has {} fields, expected {w}", p.len()),
            });
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(d) = declared_d {
        if d != points[0].len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: points[0].len(),
            });
        }
    }
    let provenance = match generator {
        Some((name, seed)) => Provenance::Generator { name, seed },
        None => Provenance::File { path: source.to_string() },
    };
    Dataset::new(points, provenance)
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string())
}
