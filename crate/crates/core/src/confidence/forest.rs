//! Randomized decision forest over Lab patches with angle-binned leaf statistics.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lab::LabImage;
use super::samples::{canonical_order, PatchSample, PATCH_RADIUS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    Value,
    Sum,
    Difference,
    AbsDifference,
}

impl TestKind {
    const ALL: [TestKind; 4] = [
        TestKind::Value,
        TestKind::Sum,
        TestKind::Difference,
        TestKind::AbsDifference,
    ];
}

/// Binary test on one or two patch pixels relative to the patch center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTest {
    pub kind: TestKind,
    pub offsets: [[i8; 2]; 2],
    pub channels: [u8; 2],
    pub threshold: f32,
}

impl SplitTest {
    #[inline]
    pub fn response(&self, img: &LabImage, x: i32, y: i32) -> f32 {
        let [o1, o2] = self.offsets;
        let v1 = img.at_clamped(
            x + o1[0] as i32,
            y + o1[1] as i32,
            self.channels[0] as usize,
        );
        if self.kind == TestKind::Value {
            return v1;
        }
        let v2 = img.at_clamped(
            x + o2[0] as i32,
            y + o2[1] as i32,
            self.channels[1] as usize,
        );
        match self.kind {
            TestKind::Value => v1,
            TestKind::Sum => v1 + v2,
            TestKind::Difference => v1 - v2,
            TestKind::AbsDifference => (v1 - v2).abs(),
        }
    }

    #[inline]
    pub fn goes_left(&self, img: &LabImage, x: i32, y: i32) -> bool {
        self.response(img, x, y) < self.threshold
    }

    fn random(rng: &mut impl Rng) -> Self {
        let r = PATCH_RADIUS;
        let mut off = || {
            [
                rng.random_range(-r..=r) as i8,
                rng.random_range(-r..=r) as i8,
            ]
        };
        let offsets = [off(), off()];
        Self {
            kind: TestKind::ALL[rng.random_range(0..4)],
            offsets,
            channels: [rng.random_range(0..3), rng.random_range(0..3)],
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        test: SplitTest,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

/// Per-bin statistics of one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinStat {
    pub positive: u32,
    pub negative: u32,
    pub confidence: f32,
}

impl BinStat {
    fn finish(&mut self) {
        self.confidence =
            (self.positive as f32 + 1.0) / ((self.positive + self.negative) as f32 + 2.0);
    }

    pub fn total(&self) -> u32 {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub leaf_count: u32,
    /// `leaf_count * bins` entries, leaf-major.
    pub stats: Vec<BinStat>,
}

impl Tree {
    #[inline]
    pub fn leaf_of(&self, img: &LabImage, x: i32, y: i32) -> u32 {
        let mut n = 0usize;
        loop {
            match &self.nodes[n] {
                Node::Leaf { leaf } => return *leaf,
                Node::Split { test, left, right } => {
                    n = if test.goes_left(img, x, y) {
                        *left
                    } else {
                        *right
                    } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    /// Nodes with fewer samples become leaves.
    pub min_leaf: usize,
    pub node_tests: usize,
    pub thresholds: usize,
    pub node_samples: usize,
    /// Fraction of samples drawn without replacement for each tree.
    pub bag_fraction: f64,
    pub bins: usize,
    pub gamma_max_deg: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 20,
            max_depth: 20,
            min_leaf: 50,
            node_tests: 5000,
            thresholds: 100,
            node_samples: 1000,
            bag_fraction: 0.632,
            bins: 9,
            gamma_max_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceForest {
    pub config: ForestConfig,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

/// Angle bin `floor(angle / (gamma_max / bins))`, with the last bin absorbing larger angles.
pub fn angle_bin(angle_deg: f64, bins: usize, gamma_max_deg: f64) -> usize {
    let w = gamma_max_deg / bins as f64;
    ((angle_deg.max(0.0) / w).floor() as usize).min(bins - 1)
}

/// Samples used to grow tree `tree` (the rest are its out-of-bag set).
pub fn tree_bag(n: usize, tree: usize, cfg: &ForestConfig, seed: u64) -> Vec<bool> {
    let mut rng = tree_rng(seed, tree, 1);
    let k = ((n as f64 * cfg.bag_fraction).round() as usize).clamp(1.min(n), n);
    let mut bag = vec![false; n];
    for i in sample(&mut rng, n, k) {
        bag[i] = true;
    }
    bag
}

fn tree_rng(seed: u64, tree: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tree as u64) << 8) | purpose);
    rng
}

fn entropy(pos: usize, n: usize) -> f64 {
    if n == 0 || pos == 0 || pos == n {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

struct Grower<'a> {
    images: &'a [LabImage],
    samples: &'a [PatchSample],
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    leaves: u32,
    responses: Vec<(f32, bool)>,
}

impl Grower<'_> {
    fn at(&self, s: &PatchSample) -> (&LabImage, i32, i32) {
        (&self.images[s.image as usize], s.x as i32, s.y as i32)
    }

    fn leaf(&mut self, slot: usize) {
        self.nodes[slot] = Node::Leaf { leaf: self.leaves };
        self.leaves += 1;
    }

    fn grow(&mut self, slot: usize, idx: Vec<u32>, depth: usize) {
        let n = idx.len();
        let pos = idx
            .iter()
            .filter(|&&i| self.samples[i as usize].positive)
            .count();
        if depth >= self.cfg.max_depth || n < self.cfg.min_leaf || pos == 0 || pos == n {
            return self.leaf(slot);
        }
        let subset: Vec<u32> = if n > self.cfg.node_samples {
            sample(&mut self.rng, n, self.cfg.node_samples)
                .into_iter()
                .map(|k| idx[k])
                .collect()
        } else {
            idx.clone()
        };
        let Some((test, gain)) = self.best_test(&subset) else {
            return self.leaf(slot);
        };
        if gain <= 0.0 {
            return self.leaf(slot);
        }
        let (l, r): (Vec<u32>, Vec<u32>) = idx.into_iter().partition(|&i| {
            let (img, x, y) = self.at(&self.samples[i as usize]);
            test.goes_left(img, x, y)
        });
        if l.is_empty() || r.is_empty() {
            return self.leaf(slot);
        }
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: u32::MAX });
        let right = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: u32::MAX });
        self.nodes[slot] = Node::Split {
            test,
            left: left as u32,
            right: right as u32,
        };
        self.grow(left, l, depth + 1);
        self.grow(right, r, depth + 1);
    }

    /// Best test over random candidates and quantile thresholds by information gain.
    fn best_test(&mut self, subset: &[u32]) -> Option<(SplitTest, f64)> {
        let m = subset.len();
        let total_pos = subset
            .iter()
            .filter(|&&i| self.samples[i as usize].positive)
            .count();
        let parent = entropy(total_pos, m);
        let mut best: Option<(SplitTest, f64)> = None;
        let mut responses = std::mem::take(&mut self.responses);
        for _ in 0..self.cfg.node_tests {
            let mut test = SplitTest::random(&mut self.rng);
            responses.clear();
            responses.extend(subset.iter().map(|&i| {
                let s = &self.samples[i as usize];
                let (img, x, y) = self.at(s);
                (test.response(img, x, y), s.positive)
            }));
            responses.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(m + 1);
            prefix.push(0usize);
            for r in &responses {
                prefix.push(prefix.last().unwrap() + r.1 as usize);
            }
            let mut last_k = 0;
            for j in 1..=self.cfg.thresholds {
                let k = j * m / (self.cfg.thresholds + 1);
                if k == 0 || k == last_k || responses[k - 1].0 == responses[k].0 {
                    continue;
                }
                last_k = k;
                let lp = prefix[k];
                let rp = total_pos - lp;
                let gain = parent
                    - (k as f64 * entropy(lp, k) + (m - k) as f64 * entropy(rp, m - k)) / m as f64;
                if best.as_ref().is_none_or(|b| gain > b.1) {
                    test.threshold = 0.5 * (responses[k - 1].0 + responses[k].0);
                    best = Some((test, gain));
                }
            }
        }
        self.responses = responses;
        best
    }
}

/// Grows the forest on `samples` (patch centers into `images`) and fills the leaf bins
/// with all samples. Training is independent of the order of `samples`.
pub fn train_forest(
    images: &[LabImage],
    samples: &[PatchSample],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<ConfidenceForest> {
    if cfg.trees == 0 || cfg.bins == 0 || !(cfg.gamma_max_deg > 0.0) || cfg.thresholds == 0 {
        return Err(Error::Config(
            "forest needs trees, bins, thresholds and gamma_max > 0".into(),
        ));
    }
    if samples.len() < cfg.min_leaf.max(1) {
        return Err(Error::Config(format!(
            "{} samples, at least min_leaf = {} required",
            samples.len(),
            cfg.min_leaf
        )));
    }
    let mut sorted = samples.to_vec();
    canonical_order(&mut sorted);
    let mut trees = Vec::with_capacity(cfg.trees);
    for t in 0..cfg.trees {
        let bag = tree_bag(sorted.len(), t, cfg, seed);
        let idx: Vec<u32> = (0..sorted.len() as u32)
            .filter(|&i| bag[i as usize])
            .collect();
        let mut g = Grower {
            images,
            samples: &sorted,
            cfg,
            rng: tree_rng(seed, t, 2),
            nodes: vec![Node::Leaf { leaf: u32::MAX }],
            leaves: 0,
            responses: Vec::new(),
        };
        g.grow(0, idx, 0);
        trees.push(Tree {
            nodes: g.nodes,
            leaf_count: g.leaves,
            stats: Vec::new(),
        });
    }
    let forest = ConfidenceForest {
        config: cfg.clone(),
        seed,
        trees,
    };
    Ok(restructure_leaves(
        forest,
        images,
        &sorted,
        cfg.bins,
        cfg.gamma_max_deg,
    ))
}

/// Routes every sample to its leaf in each tree and rebuilds the per-bin statistics with
/// `bins` bins over `[0, gamma_max)`; confidences are `(pos + 1) / (pos + neg + 2)`.
pub fn restructure_leaves(
    mut forest: ConfidenceForest,
    images: &[LabImage],
    samples: &[PatchSample],
    bins: usize,
    gamma_max_deg: f64,
) -> ConfidenceForest {
    forest.config.bins = bins;
    forest.config.gamma_max_deg = gamma_max_deg;
    for tree in &mut forest.trees {
        tree.stats = vec![BinStat::default(); tree.leaf_count as usize * bins];
        for s in samples {
            let leaf = tree.leaf_of(&images[s.image as usize], s.x as i32, s.y as i32) as usize;
            let stat =
                &mut tree.stats[leaf * bins + angle_bin(s.angle as f64, bins, gamma_max_deg)];
            if s.positive {
                stat.positive += 1;
            } else {
                stat.negative += 1;
            }
        }
        tree.stats.iter_mut().for_each(BinStat::finish);
    }
    forest
}

impl ConfidenceForest {
    pub fn bins(&self) -> usize {
        self.config.bins
    }

    pub fn gamma_max_deg(&self) -> f64 {
        self.config.gamma_max_deg
    }

    /// Mean over trees of the per-bin leaf confidence at pixel `(x, y)`.
    pub fn predict_into(&self, img: &LabImage, x: i32, y: i32, out: &mut [f64]) {
        let b = self.bins();
        out.iter_mut().for_each(|v| *v = 0.0);
        for tree in &self.trees {
            let leaf = tree.leaf_of(img, x, y) as usize;
            for (o, s) in out.iter_mut().zip(&tree.stats[leaf * b..(leaf + 1) * b]) {
                *o += s.confidence as f64;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }

    pub fn predict(&self, img: &LabImage, x: i32, y: i32) -> Vec<f64> {
        let mut out = vec![0.0; self.bins()];
        self.predict_into(img, x, y, &mut out);
        out
    }

    /// Angle-independent confidence: mean over trees of the smoothed positive fraction of
    /// the whole leaf. Restrict to a tree subset with `trees`.
    pub fn predict_overall(&self, img: &LabImage, x: i32, y: i32, trees: Option<&[bool]>) -> f64 {
        let b = self.bins();
        let mut sum = 0.0;
        let mut count = 0;
        for (t, tree) in self.trees.iter().enumerate() {
            if trees.is_some_and(|m| !m[t]) {
                continue;
            }
            let leaf = tree.leaf_of(img, x, y) as usize;
            let (p, n) = tree.stats[leaf * b..(leaf + 1) * b]
                .iter()
                .fold((0, 0), |(p, n), s| (p + s.positive, n + s.negative));
            sum += (p as f64 + 1.0) / ((p + n) as f64 + 2.0);
            count += 1;
        }
        if count == 0 {
            0.5
        } else {
            sum / count as f64
        }
    }

    /// Per-bin fraction of the training mass in the leaves reached at `(x, y)`.
    pub fn bin_mass(&self, img: &LabImage, x: i32, y: i32) -> Vec<f64> {
        let b = self.bins();
        let mut mass = vec![0.0; b];
        for tree in &self.trees {
            let leaf = tree.leaf_of(img, x, y) as usize;
            for (m, s) in mass.iter_mut().zip(&tree.stats[leaf * b..(leaf + 1) * b]) {
                *m += s.total() as f64;
            }
        }
        let total: f64 = mass.iter().sum();
        if total > 0.0 {
            mass.iter_mut().for_each(|m| *m /= total);
        }
        mass
    }

    /// Out-of-bag accuracy of the angle-independent prediction at threshold 0.5.
    pub fn oob_accuracy(&self, images: &[LabImage], samples: &[PatchSample]) -> Option<f64> {
        let mut sorted = samples.to_vec();
        canonical_order(&mut sorted);
        let bags: Vec<Vec<bool>> = (0..self.trees.len())
            .map(|t| tree_bag(sorted.len(), t, &self.config, self.seed))
            .collect();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (i, s) in sorted.iter().enumerate() {
            let mask: Vec<bool> = bags.iter().map(|b| !b[i]).collect();
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let p = self.predict_overall(
                &images[s.image as usize],
                s.x as i32,
                s.y as i32,
                Some(&mask),
            );
            total += 1;
            correct += ((p > 0.5) == s.positive) as usize;
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

// ---------------------------------------------------------------- serialization

const MAGIC: &[u8; 8] = b"VFFOREST";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ForestConfig,
    seed: u64,
    bins: usize,
    gamma_max: f64,
    trees: usize,
}

fn kind_code(k: TestKind) -> u8 {
    TestKind::ALL.iter().position(|&x| x == k).unwrap() as u8
}

impl ConfidenceForest {
    /// Magic, version, length-prefixed JSON header, then little-endian node and leaf tables.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            seed: self.seed,
            bins: self.bins(),
            gamma_max: self.gamma_max_deg(),
            trees: self.trees.len(),
        })?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for tree in &self.trees {
            buf.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                match node {
                    Node::Split { test, left, right } => {
                        buf.push(0);
                        buf.push(kind_code(test.kind));
                        for o in test.offsets.iter().flatten() {
                            buf.push(*o as u8);
                        }
                        buf.extend_from_slice(&test.channels);
                        buf.extend_from_slice(&test.threshold.to_le_bytes());
                        buf.extend_from_slice(&left.to_le_bytes());
                        buf.extend_from_slice(&right.to_le_bytes());
                    }
                    Node::Leaf { leaf } => {
                        buf.push(1);
                        buf.extend_from_slice(&leaf.to_le_bytes());
                    }
                }
            }
            buf.extend_from_slice(&tree.leaf_count.to_le_bytes());
            for s in &tree.stats {
                buf.extend_from_slice(&s.positive.to_le_bytes());
                buf.extend_from_slice(&s.negative.to_le_bytes());
                buf.extend_from_slice(&s.confidence.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::parse("forest", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::parse(
                "forest",
                format!("unsupported version {version}"),
            ));
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let mut config = header.config;
        config.bins = header.bins;
        config.gamma_max_deg = header.gamma_max;
        if config.bins == 0 {
            return Err(Error::parse("forest", "zero bins"));
        }
        let mut trees = Vec::with_capacity(header.trees);
        for _ in 0..header.trees {
            let n = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                nodes.push(match r.u8()? {
                    0 => {
                        let kind = *TestKind::ALL
                            .get(r.u8()? as usize)
                            .ok_or_else(|| Error::parse("forest", "bad test kind"))?;
                        let o = r.take(4)?;
                        let offsets = [[o[0] as i8, o[1] as i8], [o[2] as i8, o[3] as i8]];
                        let c = r.take(2)?;
                        let channels = [c[0], c[1]];
                        if channels.iter().any(|&c| c > 2) {
                            return Err(Error::parse("forest", "bad channel"));
                        }
                        let threshold = r.f32()?;
                        let (left, right) = (r.u32()?, r.u32()?);
                        if left as usize >= n || right as usize >= n {
                            return Err(Error::parse("forest", "child index out of range"));
                        }
                        Node::Split {
                            test: SplitTest {
                                kind,
                                offsets,
                                channels,
                                threshold,
                            },
                            left,
                            right,
                        }
                    }
                    1 => Node::Leaf { leaf: r.u32()? },
                    t => return Err(Error::parse("forest", format!("bad node tag {t}"))),
                });
            }
            let leaf_count = r.u32()?;
            if nodes
                .iter()
                .any(|n| matches!(n, Node::Leaf { leaf } if *leaf >= leaf_count))
            {
                return Err(Error::parse("forest", "leaf index out of range"));
            }
            let mut stats = Vec::with_capacity(leaf_count as usize * config.bins);
            for _ in 0..leaf_count as usize * config.bins {
                stats.push(BinStat {
                    positive: r.u32()?,
                    negative: r.u32()?,
                    confidence: r.f32()?,
                });
            }
            trees.push(Tree {
                nodes,
                leaf_count,
                stats,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::parse("forest", "trailing bytes"));
        }
        Ok(Self {
            config,
            seed: header.seed,
            trees,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::parse("forest", "truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
