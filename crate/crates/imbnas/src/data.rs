//! Long-tailed dataset construction.
//!
//! Builds exponentially imbalanced datasets from balanced pools: class c
//! keeps max(1, round(n * mu^c)) examples with mu = rho^(-1/(C-1)), so the
//! largest/smallest ratio is rho (up to integer rounding, which the profile
//! reports as `rho_achieved`). Two seeded synthetic generator families
//! ("shapes" and "textures") stand in for a pair of image domains at desk
//! scale. Validation splits are always class-balanced.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::seeded::rng_for;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid profile parameters: {0}")]
    BadParams(String),
    #[error("pool has {have} examples of class {class}, need {need}")]
    InsufficientPool {
        class: usize,
        have: usize,
        need: usize,
    },
    #[error("unknown domain `{0}` (built-ins: shapes, textures)")]
    UnknownDomain(String),
    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: [u8; 4],
    },
    #[error("unsupported dataset format version {0}")]
    BadVersion(u32),
    #[error("truncated dataset file {0}")]
    Truncated(String),
    #[error("label {label} out of declared range {classes}")]
    BadLabel { label: u32, classes: u32 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Exponential long-tail profile: per-class counts, decay, and both the
/// requested and the integer-achieved imbalance ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTailProfile {
    pub counts: Vec<usize>,
    pub mu: f64,
    pub rho_requested: f64,
    pub rho_achieved: f64,
    /// Set when some raw count fell below 1 before clamping.
    pub warning: Option<String>,
}

/// counts[c] = max(1, round_half_up(n * mu^c)) with mu = rho^(-1/(C-1)).
pub fn longtail_profile(
    n: usize,
    num_classes: usize,
    rho: f64,
) -> Result<LongTailProfile, DataError> {
    if n < 1 || num_classes < 2 {
        return Err(DataError::BadParams(format!(
            "need n >= 1 and num_classes >= 2, got n={n}, C={num_classes}"
        )));
    }
    if !(rho >= 1.0) {
        return Err(DataError::BadParams(format!("need rho >= 1, got {rho}")));
    }
    let mu = rho.powf(-1.0 / (num_classes as f64 - 1.0));
    let mut warning = None;
    let counts: Vec<usize> = (0..num_classes)
        .map(|c| {
            let raw = n as f64 * mu.powi(c as i32);
            if raw < 0.5 && warning.is_none() {
                warning = Some(format!(
                    "class {c} raw count {raw:.4} < 1 before clamping; tail is clipped"
                ));
            }
            (raw.round() as usize).max(1)
        })
        .collect();
    let rho_achieved = counts[0] as f64 / counts[num_classes - 1] as f64;
    Ok(LongTailProfile {
        counts,
        mu,
        rho_requested: rho,
        rho_achieved,
        warning,
    })
}

/// Many / Medium / Few class-size bins. The Medium band is the closed
/// interval [lo, hi]; the defaults are (20, 100).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bin {
    Many,
    Medium,
    Few,
}

impl Bin {
    pub fn name(self) -> &'static str {
        match self {
            Bin::Many => "Many",
            Bin::Medium => "Medium",
            Bin::Few => "Few",
        }
    }
}

pub const DEFAULT_BIN_THRESHOLDS: (usize, usize) = (20, 100);

pub fn class_bins(counts: &[usize], thresholds: (usize, usize)) -> Vec<Bin> {
    let (lo, hi) = thresholds;
    counts
        .iter()
        .map(|&n| {
            if n > hi {
                Bin::Many
            } else if n < lo {
                Bin::Few
            } else {
                Bin::Medium
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// An image classification dataset: N x C x H x W pixels plus labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub split: Split,
    pub domain: String,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-class label histogram, length `num_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// True when every class has the same count.
    pub fn is_balanced(&self) -> bool {
        let c = self.class_counts();
        c.iter().all(|&n| n == c[0])
    }

    /// Gather a minibatch by index.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let (_, c, h, w) = self.images.dims4().expect("dataset images are rank 4");
        let plane = c * h * w;
        let mut data = Vec::with_capacity(idx.len() * plane);
        let mut labels = Vec::with_capacity(idx.len());
        let src = self.images.data();
        for &i in idx {
            data.extend_from_slice(&src[i * plane..(i + 1) * plane]);
            labels.push(self.labels[i] as usize);
        }
        (
            Tensor::new(vec![idx.len(), c, h, w], data).expect("batch shape"),
            labels,
        )
    }

    fn image_plane(&self) -> usize {
        let (_, c, h, w) = self.images.dims4().expect("dataset images are rank 4");
        c * h * w
    }
}

/// Draw `profile.counts[j]` examples of each class j from `pool` by seeded
/// shuffle without replacement. Output is ordered class-major.
pub fn subsample(
    pool: &LabeledDataset,
    profile: &LongTailProfile,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); pool.num_classes];
    for (i, &l) in pool.labels.iter().enumerate() {
        per_class[l as usize].push(i);
    }
    let mut chosen = Vec::new();
    for (j, &need) in profile.counts.iter().enumerate() {
        let have = per_class.get(j).map_or(0, |v| v.len());
        if have < need {
            return Err(DataError::InsufficientPool {
                class: j,
                have,
                need,
            });
        }
        let mut rng = rng_for(seed, &format!("subsample/class{j}"));
        let mut idx = per_class[j].clone();
        // partial Fisher-Yates: the first `need` slots are a uniform draw
        for k in 0..need {
            let swap = rng.gen_range(k..idx.len());
            idx.swap(k, swap);
        }
        chosen.extend_from_slice(&idx[..need]);
    }
    let plane = pool.image_plane();
    let (_, c, h, w) = pool.images.dims4().expect("rank 4");
    let mut data = Vec::with_capacity(chosen.len() * plane);
    let mut labels = Vec::with_capacity(chosen.len());
    let src = pool.images.data();
    for &i in &chosen {
        data.extend_from_slice(&src[i * plane..(i + 1) * plane]);
        labels.push(pool.labels[i]);
    }
    Ok(LabeledDataset {
        images: Tensor::new(vec![chosen.len(), c, h, w], data).expect("subsample shape"),
        labels,
        num_classes: pool.num_classes,
        split: Split::Train,
        domain: pool.domain.clone(),
    })
}

/// Default balanced validation size per class at desk scale.
pub const VAL_PER_CLASS: usize = 50;

/// Generate a class-conditional synthetic dataset for one of the two
/// built-in domains, plus a balanced validation split ([`VAL_PER_CLASS`]
/// per class). `counts[c]` examples of class c land in the train split.
pub fn gen_synthetic(
    domain: &str,
    counts: &[usize],
    image_size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    gen_synthetic_with_val(domain, counts, image_size, VAL_PER_CLASS, seed)
}

pub fn gen_synthetic_with_val(
    domain: &str,
    counts: &[usize],
    image_size: usize,
    val_per_class: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    let renderer = Renderer::for_domain(domain)?;
    let num_classes = counts.len();
    let train = render_split(
        &renderer,
        domain,
        "train",
        &counts.to_vec(),
        image_size,
        seed,
        Split::Train,
        num_classes,
    );
    let val_counts = vec![val_per_class; num_classes];
    let val = render_split(
        &renderer,
        domain,
        "val",
        &val_counts,
        image_size,
        seed,
        Split::Val,
        num_classes,
    );
    Ok((train, val))
}

#[allow(clippy::too_many_arguments)]
fn render_split(
    renderer: &Renderer,
    domain: &str,
    split_tag: &str,
    counts: &[usize],
    side: usize,
    seed: u64,
    split: Split,
    num_classes: usize,
) -> LabeledDataset {
    let total: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(total * 3 * side * side);
    let mut labels = Vec::with_capacity(total);
    for (class, &n) in counts.iter().enumerate() {
        for i in 0..n {
            let mut rng = rng_for(seed, &format!("{domain}/{split_tag}/c{class}/i{i}"));
            data.extend(renderer.render(class, side, &mut rng));
            labels.push(class as u32);
        }
    }
    LabeledDataset {
        images: Tensor::new(vec![total, 3, side, side], data).expect("render shape"),
        labels,
        num_classes,
        split,
        domain: domain.to_string(),
    }
}

enum Renderer {
    Shapes,
    Textures,
}

impl Renderer {
    fn for_domain(domain: &str) -> Result<Self, DataError> {
        match domain {
            "shapes" => Ok(Renderer::Shapes),
            "textures" => Ok(Renderer::Textures),
            other => Err(DataError::UnknownDomain(other.to_string())),
        }
    }

    fn render(&self, class: usize, side: usize, rng: &mut impl Rng) -> Vec<f32> {
        match self {
            Renderer::Shapes => render_shape(class, side, rng),
            Renderer::Textures => render_texture(class, side, rng),
        }
    }
}

/// Domain "shapes": one geometric figure per class, jittered in position,
/// scale and intensity, drawn mostly into one color channel.
fn render_shape(class: usize, side: usize, rng: &mut impl Rng) -> Vec<f32> {
    let s = side as f32;
    let cx = s / 2.0 + rng.gen_range(-2.0..2.0);
    let cy = s / 2.0 + rng.gen_range(-2.0..2.0);
    let r = s * 0.30 * rng.gen_range(0.75..1.15);
    let fg = rng.gen_range(0.55..1.0);
    let bg = rng.gen_range(0.05..0.20);
    let noise = 0.12f32;
    let main_ch = class % 3;
    let mut out = vec![0.0f32; 3 * side * side];
    for y in 0..side {
        for x in 0..side {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let inside = shape_predicate(class, dx, dy, r);
            let base = if inside { fg } else { bg };
            for ch in 0..3 {
                let gain = if ch == main_ch { 1.0 } else { 0.35 };
                let v = bg + (base - bg) * gain + rng.gen_range(-noise..noise);
                out[(ch * side + y) * side + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn shape_predicate(class: usize, dx: f32, dy: f32, r: f32) -> bool {
    let d2 = dx * dx + dy * dy;
    let cheb = dx.abs().max(dy.abs());
    match class % 10 {
        0 => d2 <= r * r,
        1 => d2 <= r * r && d2 >= r * r * 0.35,
        2 => dy.abs() <= r * 0.35 && dx.abs() <= r,
        3 => dx.abs() <= r * 0.35 && dy.abs() <= r,
        4 => (dy.abs() <= r * 0.28 && dx.abs() <= r) || (dx.abs() <= r * 0.28 && dy.abs() <= r),
        5 => (dx - dy).abs() <= r * 0.5,
        6 => cheb <= r && cheb >= r * 0.55,
        7 => cheb <= r * 0.8,
        8 => {
            let cell = (r * 0.5).max(2.0);
            cheb <= r && (((dx / cell).floor() + (dy / cell).floor()) as i64).rem_euclid(2) == 0
        }
        _ => (dx - dy).abs() <= r * 0.3 || (dx + dy).abs() <= r * 0.3,
    }
}

/// Domain "textures": one sinusoidal grating per class (orientation and
/// frequency keyed to the class) with a class-specific channel mix.
fn render_texture(class: usize, side: usize, rng: &mut impl Rng) -> Vec<f32> {
    let s = side as f32;
    let theta =
        std::f32::consts::PI * class as f32 / 10.0 + rng.gen_range(-0.08f32..0.08);
    let freq = 1.25 + 0.45 * class as f32 + rng.gen_range(-0.10f32..0.10);
    let phase_base = class as f32 * 0.7;
    let phase = phase_base + rng.gen_range(-0.6f32..0.6);
    let contrast = rng.gen_range(0.30f32..0.45);
    let noise = 0.12f32;
    // class-keyed channel mix, stable across samples
    let mut mix_rng = rng_for(0xC1A55, &format!("texture-mix/{class}"));
    let mix: [f32; 3] = [
        mix_rng.gen_range(0.3..1.0),
        mix_rng.gen_range(0.3..1.0),
        mix_rng.gen_range(0.3..1.0),
    ];
    let (sin_t, cos_t) = theta.sin_cos();
    let two_pi = 2.0 * std::f32::consts::PI;
    let mut out = vec![0.0f32; 3 * side * side];
    for y in 0..side {
        for x in 0..side {
            let u = x as f32 / s;
            let v = y as f32 / s;
            let g = (two_pi * freq * (u * cos_t + v * sin_t) + phase).sin();
            for ch in 0..3 {
                let val = 0.5 + contrast * mix[ch] * g + rng.gen_range(-noise..noise);
                out[(ch * side + y) * side + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    out
}

const DATASET_MAGIC: [u8; 4] = *b"IMBD";
const DATASET_VERSION: u32 = 1;

/// Write the flat binary dataset format: magic "IMBD", u32 version, u32
/// N/C/H/W, labels as u32 little-endian, pixels as f32 little-endian.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    let (n, c, h, w) = ds
        .images
        .dims4()
        .map_err(|e| DataError::BadParams(e.to_string()))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |buf: &[u8]| out.write_all(buf).map_err(|e| io_err(path, e));
    write(&DATASET_MAGIC)?;
    write(&DATASET_VERSION.to_le_bytes())?;
    for dim in [n, c, h, w] {
        write(&(dim as u32).to_le_bytes())?;
    }
    for &l in &ds.labels {
        write(&l.to_le_bytes())?;
    }
    for &p in ds.images.data() {
        write(&p.to_le_bytes())?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Read the "IMBD" flat binary format back. The class count is inferred as
/// max(label)+1 unless `num_classes` is given.
pub fn load_dataset(
    path: &Path,
    num_classes: Option<usize>,
    split: Split,
) -> Result<LabeledDataset, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rd = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut rd, &mut magic, path)?;
    if magic != DATASET_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut rd, path)?;
    if version != DATASET_VERSION {
        return Err(DataError::BadVersion(version));
    }
    let n = read_u32(&mut rd, path)? as usize;
    let c = read_u32(&mut rd, path)? as usize;
    let h = read_u32(&mut rd, path)? as usize;
    let w = read_u32(&mut rd, path)? as usize;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(read_u32(&mut rd, path)?);
    }
    let mut data = vec![0f32; n * c * h * w];
    let mut buf = [0u8; 4];
    for v in data.iter_mut() {
        read_exact(&mut rd, &mut buf, path)?;
        *v = f32::from_le_bytes(buf);
    }
    let classes = match num_classes {
        Some(k) => k,
        None => labels.iter().copied().max().map_or(0, |m| m as usize + 1),
    };
    for &l in &labels {
        if l as usize >= classes {
            return Err(DataError::BadLabel {
                label: l,
                classes: classes as u32,
            });
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string());
    Ok(LabeledDataset {
        images: Tensor::new(vec![n, c, h, w], data)
            .map_err(|e| DataError::BadParams(e.to_string()))?,
        labels,
        num_classes: classes,
        split,
        domain: stem,
    })
}

/// Ingest a CIFAR-10-format binary (3073-byte records: 1 label byte +
/// 32*32*3 channel-major pixels) as an external balanced pool.
pub fn load_cifar_bin(path: &Path) -> Result<LabeledDataset, DataError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;
    const REC: usize = 1 + 3 * 32 * 32;
    if bytes.is_empty() || bytes.len() % REC != 0 {
        return Err(DataError::Truncated(path.display().to_string()));
    }
    let n = bytes.len() / REC;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * 32 * 32);
    for r in 0..n {
        let rec = &bytes[r * REC..(r + 1) * REC];
        labels.push(rec[0] as u32);
        data.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(LabeledDataset {
        images: Tensor::new(vec![n, 3, 32, 32], data)
            .map_err(|e| DataError::BadParams(e.to_string()))?,
        labels,
        num_classes: 10,
        split: Split::Train,
        domain: "cifar".to_string(),
    })
}

fn read_exact(rd: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<(), DataError> {
    rd.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DataError::Truncated(path.display().to_string())
        } else {
            io_err(path, e)
        }
    })
}

fn read_u32(rd: &mut impl Read, path: &Path) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    read_exact(rd, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_limit() {
        let p = longtail_profile(500, 10, 1.0).unwrap();
        assert_eq!(p.counts, vec![500; 10]);
        assert_eq!(p.mu, 1.0);
        assert_eq!(p.rho_achieved, 1.0);
    }

    #[test]
    fn hundredfold_profile() {
        let p = longtail_profile(500, 10, 100.0).unwrap();
        // direct evaluation of n * mu^c, rounded half-up
        let mu = 100.0f64.powf(-1.0 / 9.0);
        assert!((p.mu - mu).abs() < 1e-15);
        let expect: Vec<usize> = (0..10)
            .map(|c| (500.0 * mu.powi(c)).round().max(1.0) as usize)
            .collect();
        assert_eq!(p.counts, expect);
        assert_eq!(p.counts, vec![500, 300, 180, 108, 65, 39, 23, 14, 8, 5]);
        assert_eq!(p.counts[0], 500);
        assert_eq!(p.counts[9], 5);
        assert_eq!(p.rho_achieved, 100.0);
        for w in p.counts.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // strictly nonincreasing is actually strict here since mu < 1
        for w in p.counts.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn higher_rho_dominates_classwise() {
        let p1 = longtail_profile(500, 10, 10.0).unwrap();
        let p2 = longtail_profile(500, 10, 100.0).unwrap();
        assert_eq!(p1.counts[0], p2.counts[0]);
        for (a, b) in p2.counts.iter().zip(&p1.counts) {
            assert!(a <= b);
        }
    }

    #[test]
    fn tail_clipping_sets_warning() {
        let p = longtail_profile(10, 10, 1000.0).unwrap();
        assert!(p.warning.is_some());
        assert!(p.counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn bin_rules() {
        assert_eq!(
            class_bins(&[500, 50, 5], DEFAULT_BIN_THRESHOLDS),
            vec![Bin::Many, Bin::Medium, Bin::Few]
        );
        assert_eq!(
            class_bins(&[100, 100], DEFAULT_BIN_THRESHOLDS),
            vec![Bin::Medium, Bin::Medium]
        );
        assert_eq!(
            class_bins(&[101, 100, 20, 19], DEFAULT_BIN_THRESHOLDS),
            vec![Bin::Many, Bin::Medium, Bin::Medium, Bin::Few]
        );
        assert_eq!(class_bins(&[20, 20], DEFAULT_BIN_THRESHOLDS), vec![Bin::Medium; 2]);
    }

    #[test]
    fn subsample_matches_profile_exactly() {
        let profile = longtail_profile(40, 5, 8.0).unwrap();
        let (pool, _) = gen_synthetic("shapes", &[40; 5], 8, 3).unwrap();
        let ds = subsample(&pool, &profile, 11).unwrap();
        assert_eq!(ds.class_counts(), profile.counts);
    }

    #[test]
    fn subsample_full_take_is_permutation() {
        let (pool, _) = gen_synthetic("textures", &[6, 6, 6], 8, 5).unwrap();
        let profile = longtail_profile(6, 3, 1.0).unwrap();
        let ds = subsample(&pool, &profile, 0).unwrap();
        assert_eq!(ds.len(), pool.len());
        assert_eq!(ds.class_counts(), pool.class_counts());
        // same multiset of images: compare per-class pixel sums
        let sum = |d: &LabeledDataset| -> f64 { d.images.data().iter().map(|&v| v as f64).sum() };
        assert!((sum(&ds) - sum(&pool)).abs() < 1e-3);
    }

    #[test]
    fn subsample_deterministic_and_rejects_deficit() {
        let (pool, _) = gen_synthetic("shapes", &[10, 10], 8, 1).unwrap();
        let profile = longtail_profile(8, 2, 4.0).unwrap();
        let a = subsample(&pool, &profile, 42).unwrap();
        let b = subsample(&pool, &profile, 42).unwrap();
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(a.labels, b.labels);
        let too_big = LongTailProfile {
            counts: vec![10, 11],
            mu: 1.0,
            rho_requested: 1.0,
            rho_achieved: 1.0,
            warning: None,
        };
        match subsample(&pool, &too_big, 0) {
            Err(DataError::InsufficientPool { class, have, need }) => {
                assert_eq!((class, have, need), (1, 10, 11));
            }
            other => panic!("expected InsufficientPool, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_counts_render_single_class() {
        let mut counts = vec![0usize; 10];
        counts[0] = 4;
        let (train, val) = gen_synthetic("shapes", &counts, 16, 9).unwrap();
        assert_eq!(train.len(), 4);
        assert!(train.labels.iter().all(|&l| l == 0));
        assert_eq!(val.len(), 10 * VAL_PER_CLASS);
        assert!(val.is_balanced());
    }

    #[test]
    fn generator_seed_contract() {
        let (a, _) = gen_synthetic("textures", &[3; 4], 16, 7).unwrap();
        let (b, _) = gen_synthetic("textures", &[3; 4], 16, 7).unwrap();
        let (c, _) = gen_synthetic("textures", &[3; 4], 16, 8).unwrap();
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(a.images.shape(), c.images.shape());
        assert_ne!(a.images.data(), c.images.data());
        assert!(matches!(
            gen_synthetic("voxels", &[1], 16, 0),
            Err(DataError::UnknownDomain(_))
        ));
    }

    #[test]
    fn dataset_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.imbd");
        let (ds, _) = gen_synthetic("shapes", &[2, 3], 8, 13).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path, Some(2), Split::Train).unwrap();
        assert_eq!(back.images.shape(), ds.images.shape());
        assert_eq!(back.images.data(), ds.images.data());
        assert_eq!(back.labels, ds.labels);
        // truncation is detected
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_dataset(&path, None, Split::Train),
            Err(DataError::Truncated(_))
        ));
    }

    #[test]
    fn cifar_record_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = Vec::new();
        for label in [3u8, 7u8] {
            bytes.push(label);
            bytes.extend(std::iter::repeat(128u8).take(3 * 32 * 32));
        }
        std::fs::write(&path, &bytes).unwrap();
        let ds = load_cifar_bin(&path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.images.shape(), &[2, 3, 32, 32]);
        assert!((ds.images.data()[0] - 128.0 / 255.0).abs() < 1e-7);
    }
}
