//! Cell search space: a small DAG cell with one operation per edge, repeated
//! through a fixed three-stage skeleton.
//!
//! Architectures are encoded as strings like `|conv3x3~0|+|skip~0|conv1x1~1|`
//! (node groups separated by `+`, each edge as `op~source`). The op alphabet
//! is ordered and fixed because the codec and enumeration order depend on it.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeded::rng_for;

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("malformed architecture string at byte {pos}: {what}")]
    Malformed { pos: usize, what: String },
    #[error("edge op index {index} out of range for {ops} ops")]
    BadOpIndex { index: usize, ops: usize },
    #[error("architecture has {got} edges, space expects {expect}")]
    EdgeCount { got: usize, expect: usize },
    #[error("space size {size} exceeds enumeration cap {cap}")]
    TooLarge { size: u64, cap: u64 },
    #[error("invalid space spec: {0}")]
    BadSpec(String),
}

/// Candidate edge operations, in encoding order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellOp {
    None,
    Skip,
    Conv1x1,
    Conv3x3,
    AvgPool3x3,
}

pub const DEFAULT_OP_SET: [CellOp; 5] = [
    CellOp::None,
    CellOp::Skip,
    CellOp::Conv1x1,
    CellOp::Conv3x3,
    CellOp::AvgPool3x3,
];

impl CellOp {
    pub fn name(self) -> &'static str {
        match self {
            CellOp::None => "none",
            CellOp::Skip => "skip",
            CellOp::Conv1x1 => "conv1x1",
            CellOp::Conv3x3 => "conv3x3",
            CellOp::AvgPool3x3 => "avgpool3x3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DEFAULT_OP_SET.iter().copied().find(|op| op.name() == name)
    }

    /// Whether the op carries trainable parameters (a conv + bn bundle).
    pub fn is_parametric(self) -> bool {
        matches!(self, CellOp::Conv1x1 | CellOp::Conv3x3)
    }

    /// Kernel extent for the conv ops.
    pub fn kernel(self) -> Option<usize> {
        match self {
            CellOp::Conv1x1 => Some(1),
            CellOp::Conv3x3 => Some(3),
            _ => None,
        }
    }
}

/// Fixed macro structure the cells are stacked into: stem conv, three
/// stages separated by stride-2 reduction convs, global average pool,
/// linear classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub input_channels: usize,
    pub image_size: usize,
    pub num_classes: usize,
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    pub cells_per_stage: usize,
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton {
            input_channels: 3,
            image_size: 16,
            num_classes: 10,
            stem_width: 8,
            stage_widths: vec![8, 16, 32],
            cells_per_stage: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceSpec {
    pub num_nodes: usize,
    pub op_set: Vec<CellOp>,
    pub skeleton: Skeleton,
}

impl Default for SearchSpaceSpec {
    fn default() -> Self {
        SearchSpaceSpec {
            num_nodes: 3,
            op_set: DEFAULT_OP_SET.to_vec(),
            skeleton: Skeleton::default(),
        }
    }
}

impl SearchSpaceSpec {
    pub fn validate(&self) -> Result<(), SpaceError> {
        if !(2..=4).contains(&self.num_nodes) {
            return Err(SpaceError::BadSpec(format!(
                "num_nodes must be 2..=4, got {}",
                self.num_nodes
            )));
        }
        if self.op_set.is_empty() {
            return Err(SpaceError::BadSpec("empty op set".into()));
        }
        let sk = &self.skeleton;
        if sk.stage_widths.is_empty() || sk.cells_per_stage == 0 {
            return Err(SpaceError::BadSpec("empty skeleton".into()));
        }
        if sk.stem_width != sk.stage_widths[0] {
            return Err(SpaceError::BadSpec(
                "stem width must match the first stage width".into(),
            ));
        }
        let reductions = sk.stage_widths.len() - 1;
        if sk.image_size >> reductions == 0 {
            return Err(SpaceError::BadSpec(format!(
                "image size {} too small for {} reductions",
                sk.image_size, reductions
            )));
        }
        Ok(())
    }

    /// Number of cell edges: num_nodes * (num_nodes - 1) / 2.
    pub fn num_edges(&self) -> usize {
        self.num_nodes * (self.num_nodes - 1) / 2
    }

    /// Edge list ordered by (target node, source node).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_edges());
        for target in 1..self.num_nodes {
            for source in 0..target {
                edges.push((target, source));
            }
        }
        edges
    }

    pub fn space_size(&self) -> u64 {
        (self.op_set.len() as u64).pow(self.num_edges() as u32)
    }
}

/// One architecture: an op index per cell edge, edges in (target, source)
/// order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellArch {
    pub edge_ops: Vec<u8>,
}

impl CellArch {
    pub fn new(edge_ops: Vec<u8>) -> Self {
        CellArch { edge_ops }
    }

    pub fn op(&self, edge: usize, spec: &SearchSpaceSpec) -> CellOp {
        spec.op_set[self.edge_ops[edge] as usize]
    }

    pub fn validate(&self, spec: &SearchSpaceSpec) -> Result<(), SpaceError> {
        if self.edge_ops.len() != spec.num_edges() {
            return Err(SpaceError::EdgeCount {
                got: self.edge_ops.len(),
                expect: spec.num_edges(),
            });
        }
        for &idx in &self.edge_ops {
            if idx as usize >= spec.op_set.len() {
                return Err(SpaceError::BadOpIndex {
                    index: idx as usize,
                    ops: spec.op_set.len(),
                });
            }
        }
        Ok(())
    }
}

/// NATS-style string encoding, e.g. `|conv3x3~0|+|skip~0|conv1x1~1|`.
pub fn encode_arch(arch: &CellArch, spec: &SearchSpaceSpec) -> String {
    let mut out = String::new();
    let mut edge = 0;
    for target in 1..spec.num_nodes {
        if target > 1 {
            out.push('+');
        }
        out.push('|');
        for source in 0..target {
            out.push_str(spec.op_set[arch.edge_ops[edge] as usize].name());
            out.push('~');
            out.push_str(&source.to_string());
            out.push('|');
            edge += 1;
        }
    }
    out
}

/// Inverse of [`encode_arch`]; malformed input is rejected with the byte
/// position of the first error.
pub fn decode_arch(s: &str, spec: &SearchSpaceSpec) -> Result<CellArch, SpaceError> {
    let bytes = s.as_bytes();
    let mut pos = 0usize;
    let mut edge_ops = Vec::with_capacity(spec.num_edges());
    let err = |pos: usize, what: &str| SpaceError::Malformed {
        pos,
        what: what.to_string(),
    };
    for target in 1..spec.num_nodes {
        if target > 1 {
            if pos >= bytes.len() || bytes[pos] != b'+' {
                return Err(err(pos, "expected `+` between node groups"));
            }
            pos += 1;
        }
        if pos >= bytes.len() || bytes[pos] != b'|' {
            return Err(err(pos, "expected `|` opening a node group"));
        }
        pos += 1;
        for source in 0..target {
            let start = pos;
            while pos < bytes.len() && bytes[pos] != b'~' {
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(err(start, "expected `op~source` token"));
            }
            let name = &s[start..pos];
            let op = spec
                .op_set
                .iter()
                .position(|o| o.name() == name)
                .ok_or_else(|| err(start, &format!("unknown op `{name}`")))?;
            pos += 1; // consume '~'
            let num_start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            let src: usize = s[num_start..pos]
                .parse()
                .map_err(|_| err(num_start, "expected source node index"))?;
            if src != source {
                return Err(err(
                    num_start,
                    &format!("expected source {source}, found {src}"),
                ));
            }
            if pos >= bytes.len() || bytes[pos] != b'|' {
                return Err(err(pos, "expected `|` closing an edge"));
            }
            pos += 1;
            edge_ops.push(op as u8);
        }
    }
    if pos != bytes.len() {
        return Err(err(pos, "trailing characters after architecture"));
    }
    Ok(CellArch::new(edge_ops))
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// All architectures in the space, sorted by encoding string (the canonical
/// enumeration order used for tie-breaking everywhere).
pub fn enumerate_space(spec: &SearchSpaceSpec) -> Result<Vec<CellArch>, SpaceError> {
    enumerate_space_capped(spec, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_space_capped(
    spec: &SearchSpaceSpec,
    cap: u64,
) -> Result<Vec<CellArch>, SpaceError> {
    spec.validate()?;
    let size = spec.space_size();
    if size > cap {
        return Err(SpaceError::TooLarge { size, cap });
    }
    let edges = spec.num_edges();
    let ops = spec.op_set.len();
    let mut all: Vec<(String, CellArch)> = Vec::with_capacity(size as usize);
    let mut current = vec![0u8; edges];
    loop {
        let arch = CellArch::new(current.clone());
        all.push((encode_arch(&arch, spec), arch));
        // odometer increment
        let mut i = edges;
        loop {
            if i == 0 {
                let mut sorted: Vec<_> = std::mem::take(&mut all);
                sorted.sort_by(|a, b| a.0.cmp(&b.0));
                return Ok(sorted.into_iter().map(|(_, a)| a).collect());
            }
            i -= 1;
            current[i] += 1;
            if (current[i] as usize) < ops {
                break;
            }
            current[i] = 0;
        }
    }
}

/// Multiply-accumulate count for an architecture through the full skeleton.
/// Batch norm and relu are ignored; `none`, `skip`, and pooling cost zero.
pub fn count_flops(arch: &CellArch, spec: &SearchSpaceSpec) -> u64 {
    let sk = &spec.skeleton;
    let mut macs: u64 = 0;
    let mut res = sk.image_size as u64;
    // stem: 3x3 conv from input channels to stem width
    macs += 9 * sk.input_channels as u64 * sk.stem_width as u64 * res * res;
    let mut prev_w = sk.stem_width as u64;
    for (si, &w) in sk.stage_widths.iter().enumerate() {
        let w = w as u64;
        if si > 0 {
            res /= 2;
            macs += 9 * prev_w * w * res * res;
        }
        let mut per_cell: u64 = 0;
        for &idx in &arch.edge_ops {
            if let Some(k) = spec.op_set[idx as usize].kernel() {
                per_cell += (k * k) as u64 * w * w * res * res;
            }
        }
        macs += per_cell * sk.cells_per_stage as u64;
        prev_w = w;
    }
    // classifier
    macs += prev_w * sk.num_classes as u64;
    macs
}

/// FLOP histogram over the whole space: cost -> archs (enumeration order).
pub fn flop_histogram(spec: &SearchSpaceSpec) -> Result<BTreeMap<u64, Vec<CellArch>>, SpaceError> {
    let mut hist: BTreeMap<u64, Vec<CellArch>> = BTreeMap::new();
    for arch in enumerate_space(spec)? {
        hist.entry(count_flops(&arch, spec)).or_default().push(arch);
    }
    Ok(hist)
}

/// All archs with |flops - target| <= tolerance, in enumeration order.
/// An empty result is allowed but logged as a warning.
pub fn iso_flop_slice(
    spec: &SearchSpaceSpec,
    target_flops: u64,
    tolerance: u64,
) -> Result<Vec<CellArch>, SpaceError> {
    let out: Vec<CellArch> = enumerate_space(spec)?
        .into_iter()
        .filter(|a| count_flops(a, spec).abs_diff(target_flops) <= tolerance)
        .collect();
    if out.is_empty() {
        log::warn!("iso_flop_slice: no architectures within {tolerance} of {target_flops}");
    }
    Ok(out)
}

/// Default search pool: start from the modal FLOP bucket (ties broken
/// toward higher cost) and widen to the nearest buckets until at least
/// `min_size` architectures are covered. Returned in enumeration order.
pub fn default_pool(spec: &SearchSpaceSpec, min_size: usize) -> Result<Vec<CellArch>, SpaceError> {
    let hist = flop_histogram(spec)?;
    let modal = hist
        .iter()
        .max_by_key(|(cost, archs)| (archs.len(), **cost))
        .map(|(cost, _)| *cost)
        .ok_or_else(|| SpaceError::BadSpec("empty space".into()))?;
    let mut remaining: Vec<(u64, &Vec<CellArch>)> =
        hist.iter().map(|(c, a)| (*c, a)).collect();
    remaining.sort_by_key(|(cost, _)| (cost.abs_diff(modal), u64::MAX - cost));
    let mut picked: Vec<&Vec<CellArch>> = Vec::new();
    let mut total = 0;
    for (_, archs) in remaining {
        picked.push(archs);
        total += archs.len();
        if total >= min_size {
            break;
        }
    }
    let mut pool: Vec<(String, CellArch)> = picked
        .into_iter()
        .flatten()
        .map(|a| (encode_arch(a, spec), a.clone()))
        .collect();
    pool.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(pool.into_iter().map(|(_, a)| a).collect())
}

/// Uniform random architecture.
pub fn random_arch(spec: &SearchSpaceSpec, seed: u64) -> CellArch {
    random_arch_with(spec, &mut rng_for(seed, "random_arch"))
}

pub fn random_arch_with(spec: &SearchSpaceSpec, rng: &mut impl Rng) -> CellArch {
    let ops = spec.op_set.len();
    CellArch::new(
        (0..spec.num_edges())
            .map(|_| rng.gen_range(0..ops) as u8)
            .collect(),
    )
}

/// Resample each edge independently with probability `p_mut`; the resample
/// may pick the same op again.
pub fn mutate(arch: &CellArch, p_mut: f64, seed: u64, spec: &SearchSpaceSpec) -> CellArch {
    mutate_with(arch, p_mut, spec, &mut rng_for(seed, "mutate"))
}

pub fn mutate_with(
    arch: &CellArch,
    p_mut: f64,
    spec: &SearchSpaceSpec,
    rng: &mut impl Rng,
) -> CellArch {
    let ops = spec.op_set.len();
    CellArch::new(
        arch.edge_ops
            .iter()
            .map(|&op| {
                if rng.gen_bool(p_mut) {
                    rng.gen_range(0..ops) as u8
                } else {
                    op
                }
            })
            .collect(),
    )
}

/// Pick each edge from either parent with probability one half.
pub fn crossover(a: &CellArch, b: &CellArch, seed: u64) -> CellArch {
    crossover_with(a, b, &mut rng_for(seed, "crossover"))
}

pub fn crossover_with(a: &CellArch, b: &CellArch, rng: &mut impl Rng) -> CellArch {
    CellArch::new(
        a.edge_ops
            .iter()
            .zip(&b.edge_ops)
            .map(|(&x, &y)| if rng.gen_bool(0.5) { x } else { y })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_n(num_nodes: usize) -> SearchSpaceSpec {
        SearchSpaceSpec {
            num_nodes,
            ..Default::default()
        }
    }

    #[test]
    fn space_sizes() {
        assert_eq!(enumerate_space(&spec_n(2)).unwrap().len(), 5);
        assert_eq!(enumerate_space(&spec_n(3)).unwrap().len(), 125);
        assert_eq!(enumerate_space(&spec_n(4)).unwrap().len(), 15625);
    }

    #[test]
    fn enumeration_sorted_unique() {
        let spec = spec_n(3);
        let all = enumerate_space(&spec).unwrap();
        let strings: Vec<String> = all.iter().map(|a| encode_arch(a, &spec)).collect();
        let mut sorted = strings.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(strings, sorted);
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(
            enumerate_space_capped(&spec_n(4), 1000),
            Err(SpaceError::TooLarge { size: 15625, cap: 1000 })
        ));
    }

    #[test]
    fn codec_roundtrip_whole_space() {
        let spec = spec_n(3);
        for arch in enumerate_space(&spec).unwrap() {
            let s = encode_arch(&arch, &spec);
            assert_eq!(decode_arch(&s, &spec).unwrap(), arch);
        }
    }

    #[test]
    fn codec_smallest_space() {
        let spec = spec_n(2);
        let arch = decode_arch("|skip~0|", &spec).unwrap();
        assert_eq!(arch.edge_ops, vec![1]);
        assert_eq!(encode_arch(&arch, &spec), "|skip~0|");
    }

    #[test]
    fn decode_reports_position() {
        let spec = spec_n(3);
        match decode_arch("|conv7x7~0|+|skip~0|skip~1|", &spec) {
            Err(SpaceError::Malformed { pos, what }) => {
                assert_eq!(pos, 1);
                assert!(what.contains("conv7x7"), "{what}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
        match decode_arch("|skip~0|+|skip~0|skip~1|x", &spec) {
            Err(SpaceError::Malformed { pos, .. }) => assert_eq!(pos, 24),
            other => panic!("expected trailing error, got {other:?}"),
        }
    }

    #[test]
    fn flops_zero_cost_cells() {
        let spec = spec_n(3);
        let all_none = CellArch::new(vec![0, 0, 0]);
        let all_skip = CellArch::new(vec![1, 1, 1]);
        let all_pool = CellArch::new(vec![4, 4, 4]);
        let base = count_flops(&all_none, &spec);
        assert_eq!(base, count_flops(&all_skip, &spec));
        assert_eq!(base, count_flops(&all_pool, &spec));
        // stem + reductions + classifier only
        let expect = 9 * 3 * 8 * 16 * 16 + 9 * 8 * 16 * 8 * 8 + 9 * 16 * 32 * 4 * 4 + 32 * 10;
        assert_eq!(base, expect);
    }

    #[test]
    fn conv_edge_delta() {
        let spec = spec_n(3);
        let base = count_flops(&CellArch::new(vec![0, 0, 0]), &spec);
        let one_conv3 = count_flops(&CellArch::new(vec![3, 0, 0]), &spec);
        // per cell instance at stage 0: 3*3*8*8*16*16; the same edge also
        // exists in stages 1 and 2 where width doubles and resolution halves
        let stage0 = 3 * 3 * 8 * 8 * 16 * 16u64;
        let stage1 = 3 * 3 * 16 * 16 * 8 * 8u64;
        let stage2 = 3 * 3 * 32 * 32 * 4 * 4u64;
        assert_eq!(one_conv3 - base, 2 * (stage0 + stage1 + stage2));
        // conv1x1 costs one ninth of conv3x3
        let one_conv1 = count_flops(&CellArch::new(vec![2, 0, 0]), &spec);
        assert_eq!(9 * (one_conv1 - base), one_conv3 - base);
    }

    #[test]
    fn flops_depend_only_on_op_multiset_positions() {
        let spec = spec_n(3);
        let a = count_flops(&CellArch::new(vec![3, 2, 0]), &spec);
        let b = count_flops(&CellArch::new(vec![0, 3, 2]), &spec);
        let c = count_flops(&CellArch::new(vec![2, 0, 3]), &spec);
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a, count_flops(&CellArch::new(vec![3, 2, 0]), &spec));
    }

    #[test]
    fn iso_slice_and_pool() {
        let spec = spec_n(3);
        let all_none = CellArch::new(vec![0, 0, 0]);
        let zero_cost = count_flops(&all_none, &spec);
        let slice = iso_flop_slice(&spec, zero_cost, 0).unwrap();
        // none, skip, avgpool on each of 3 edges
        assert_eq!(slice.len(), 27);
        assert!(slice.contains(&all_none));
        assert!(slice.contains(&CellArch::new(vec![1, 1, 1])));
        let whole = iso_flop_slice(&spec, 0, u64::MAX).unwrap();
        assert_eq!(whole.len(), 125);

        let pool = default_pool(&spec, 30).unwrap();
        assert!(pool.len() >= 30, "pool has {}", pool.len());
        // pool must be a proper iso-FLOP band: exactly one conv3x3 edge
        for arch in &pool {
            let n3 = arch.edge_ops.iter().filter(|&&o| o == 3).count();
            assert_eq!(n3, 1, "pool arch {:?}", arch.edge_ops);
        }
    }

    #[test]
    fn mutation_identity_and_crossover_of_equal_parents() {
        let spec = spec_n(3);
        let a = random_arch(&spec, 5);
        assert_eq!(mutate(&a, 0.0, 9, &spec), a);
        assert_eq!(crossover(&a, &a, 11), a);
        // determinism
        assert_eq!(mutate(&a, 0.7, 13, &spec), mutate(&a, 0.7, 13, &spec));
    }

    #[test]
    fn mutation_histogram_uniform() {
        // p_mut = 1: each edge resampled uniformly; over 10^4 trials each op
        // count is within 3 sigma of 2000 (sigma = sqrt(1e4 * .2 * .8) = 40)
        let spec = spec_n(3);
        let base = CellArch::new(vec![0, 0, 0]);
        let mut counts = vec![[0u32; 5]; 3];
        let mut rng = rng_for(123, "mutation-histogram");
        for _ in 0..10_000 {
            let m = mutate_with(&base, 1.0, &spec, &mut rng);
            for (e, &op) in m.edge_ops.iter().enumerate() {
                counts[e][op as usize] += 1;
            }
        }
        for edge in &counts {
            for &c in edge {
                assert!((c as f64 - 2000.0).abs() <= 3.0 * 40.0, "count {c}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn codec_bijective_random(ops in proptest::collection::vec(0u8..5, 6)) {
            let spec = spec_n(4);
            let arch = CellArch::new(ops);
            let s = encode_arch(&arch, &spec);
            proptest::prop_assert_eq!(decode_arch(&s, &spec).unwrap(), arch);
        }

        #[test]
        fn mutate_stays_in_space(p in 0.0f64..=1.0, seed in 0u64..1000) {
            let spec = spec_n(3);
            let a = random_arch(&spec, seed);
            let m = mutate(&a, p, seed, &spec);
            proptest::prop_assert!(m.validate(&spec).is_ok());
        }
    }
}
