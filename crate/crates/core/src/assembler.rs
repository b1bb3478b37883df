//! Train/val/test splitting, real:composite mixing of the training split,
//! manifest files, dataset emission and tallies.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::derive_seed;
use crate::formats::{format_decimal, read_labels, FormatError};
use crate::geometry::ImageGeometry;

pub const DEFAULT_CATEGORY: &str = "pollen";
pub const DESCRIPTOR_FILE: &str = "dataset.yaml";
const MANIFEST_MAGIC: &str = "holoforge-manifest";

#[derive(Debug, Error)]
pub enum AssemblerError {
    #[error("need at least 3 items to split, got {0}")]
    TooFewItems(usize),
    #[error("mixing needs {needed} composites but the pool holds {available}")]
    InsufficientSyntheticPool { needed: usize, available: usize },
    #[error("mixing ratio must be finite and non-negative, got {0}")]
    InvalidRatio(f64),
    #[error("missing source file {0}")]
    MissingSource(PathBuf),
    #[error("{0} would be written by more than one item")]
    CollisionAtDestination(PathBuf),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Whether an item is a real slide patch or a synthetic composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Real,
    Composite,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Real => "real",
            ItemKind::Composite => "composite",
        })
    }
}

impl FromStr for ItemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ItemKind::Real),
            "composite" => Ok(ItemKind::Composite),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// An image with its label file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetItem {
    pub image: PathBuf,
    pub label: PathBuf,
}

impl DatasetItem {
    pub fn new(image: impl Into<PathBuf>, label: impl Into<PathBuf>) -> Self {
        Self {
            image: image.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub kind: ItemKind,
    pub item: DatasetItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_real: usize,
    pub train_composite: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn train(&self) -> usize {
        self.train_real + self.train_composite
    }

    pub fn total(&self) -> usize {
        self.train() + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Composites per real training item.
    pub ratio: f64,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn empty(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            ratio: 0.0,
            seed,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for e in &self.entries {
            match (e.split, e.kind) {
                (Split::Train, ItemKind::Real) => c.train_real += 1,
                (Split::Train, ItemKind::Composite) => c.train_composite += 1,
                (Split::Val, _) => c.val += 1,
                (Split::Test, _) => c.test += 1,
            }
        }
        c
    }

    /// `1:<ratio>`, e.g. `1:1.5`.
    pub fn ratio_descriptor(&self) -> String {
        format!("1:{}", format_decimal(self.ratio))
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Item counts for a 70:15:15 split of `n` items: train and validation take
/// the floor of their share, test takes the remainder, and every split keeps
/// at least one item (taken from train) when `n >= 3`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let mut train = n * 7 / 10;
    let mut val = n * 3 / 20;
    let test = n - train - val;
    if n >= 3 && val == 0 {
        val = 1;
        train -= 1;
    }
    if n >= 3 && train == 0 {
        train = 1;
        val -= 1;
    }
    (train, val, test)
}

/// Shuffles the items with `seed` (after sorting, so input order does not
/// matter) and partitions them 70:15:15.
pub fn make_splits(mut items: Vec<DatasetItem>, seed: u64) -> Result<DatasetManifest, AssemblerError> {
    if items.len() < 3 {
        return Err(AssemblerError::TooFewItems(items.len()));
    }
    items.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let (train, val, _) = split_sizes(items.len());
    let entries = items
        .into_iter()
        .enumerate()
        .map(|(i, item)| ManifestEntry {
            split: if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            },
            kind: ItemKind::Real,
            item,
        })
        .collect();
    Ok(DatasetManifest {
        entries,
        ratio: 0.0,
        seed,
    })
}

/// Composites to add for `train_real` real items at `ratio`.
pub fn composite_count(train_real: usize, ratio: f64) -> usize {
    (ratio * train_real as f64).round() as usize
}

/// Replaces the training composites with `round(ratio * train_real)` items
/// drawn from `pool`. Validation and test entries are left untouched.
pub fn mix_training(
    manifest: &DatasetManifest,
    pool: &[DatasetItem],
    ratio: f64,
) -> Result<DatasetManifest, AssemblerError> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(AssemblerError::InvalidRatio(ratio));
    }
    let mut entries: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.kind == ItemKind::Real)
        .cloned()
        .collect();
    let train_real = entries.iter().filter(|e| e.split == Split::Train).count();
    let needed = composite_count(train_real, ratio);
    if needed > pool.len() {
        return Err(AssemblerError::InsufficientSyntheticPool {
            needed,
            available: pool.len(),
        });
    }
    let mut pool: Vec<DatasetItem> = pool.to_vec();
    pool.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(manifest.seed, u64::MAX));
    pool.shuffle(&mut rng);
    entries.extend(pool.into_iter().take(needed).map(|item| ManifestEntry {
        split: Split::Train,
        kind: ItemKind::Composite,
        item,
    }));
    Ok(DatasetManifest {
        entries,
        ratio,
        seed: manifest.seed,
    })
}

pub fn format_manifest(m: &DatasetManifest) -> String {
    let mut out = format!(
        "# {MANIFEST_MAGIC} ratio={} seed={} version={}\n",
        m.ratio_descriptor(),
        m.seed,
        env!("CARGO_PKG_VERSION")
    );
    for e in &m.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.split,
            e.kind,
            e.item.image.display(),
            e.item.label.display()
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest, AssemblerError> {
    let bad = |line: usize, message: String| AssemblerError::Manifest { line, message };
    let mut m = DatasetManifest::empty(0);
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(header) = line.strip_prefix('#') {
            if !header.contains(MANIFEST_MAGIC) {
                continue;
            }
            for kv in header.split_whitespace().filter_map(|t| t.split_once('=')) {
                match kv {
                    ("ratio", v) => {
                        let r = v.strip_prefix("1:").ok_or_else(|| bad(n, format!("bad ratio {v:?}")))?;
                        m.ratio = r.parse().map_err(|_| bad(n, format!("bad ratio {v:?}")))?;
                    }
                    ("seed", v) => m.seed = v.parse().map_err(|_| bad(n, format!("bad seed {v:?}")))?,
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(n, format!("expected 4 tab-separated fields, got {}", f.len())));
        }
        let split: Split = f[0].parse().map_err(|e| bad(n, e))?;
        let kind: ItemKind = f[1].parse().map_err(|e| bad(n, e))?;
        if kind == ItemKind::Composite && split != Split::Train {
            return Err(bad(n, "composites are only allowed in the train split".into()));
        }
        m.entries.push(ManifestEntry {
            split,
            kind,
            item: DatasetItem::new(f[2], f[3]),
        });
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmitMode {
    Copy,
    Symlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmitReport {
    pub written: usize,
    pub unchanged: usize,
}

impl EmitReport {
    pub fn changes(&self) -> usize {
        self.written
    }
}

pub fn format_descriptor(root: &Path, counts: &SplitCounts, categories: &[&str]) -> String {
    let names: Vec<String> = categories.iter().map(|c| format!("'{c}'")).collect();
    format!(
        "path: {}\ntrain: train/images\nval: val/images\ntest: test/images\nnc: {}\nnames: [{}]\ntrain_count: {}\nval_count: {}\ntest_count: {}\n",
        root.display(),
        categories.len(),
        names.join(", "),
        counts.train(),
        counts.val,
        counts.test
    )
}

fn io_err(path: &Path, e: std::io::Error) -> AssemblerError {
    AssemblerError::Format(FormatError::io(path, e))
}

enum SyncOutcome {
    Written,
    Unchanged,
}

fn sync_file(src: &Path, dst: &Path, mode: EmitMode) -> Result<SyncOutcome, AssemblerError> {
    match mode {
        EmitMode::Copy => {
            let data = fs::read(src).map_err(|e| io_err(src, e))?;
            if fs::symlink_metadata(dst).map(|m| m.is_file()).unwrap_or(false)
                && fs::read(dst).map(|d| d == data).unwrap_or(false)
            {
                return Ok(SyncOutcome::Unchanged);
            }
            if fs::symlink_metadata(dst).is_ok() {
                fs::remove_file(dst).map_err(|e| io_err(dst, e))?;
            }
            fs::write(dst, data).map_err(|e| io_err(dst, e))?;
        }
        EmitMode::Symlink => {
            let target = fs::canonicalize(src).map_err(|e| io_err(src, e))?;
            if fs::read_link(dst).map(|t| t == target).unwrap_or(false) {
                return Ok(SyncOutcome::Unchanged);
            }
            if fs::symlink_metadata(dst).is_ok() {
                fs::remove_file(dst).map_err(|e| io_err(dst, e))?;
            }
            make_symlink(&target, dst)?;
        }
    }
    Ok(SyncOutcome::Written)
}

#[cfg(unix)]
fn make_symlink(target: &Path, dst: &Path) -> Result<(), AssemblerError> {
    std::os::unix::fs::symlink(target, dst).map_err(|e| io_err(dst, e))
}

#[cfg(not(unix))]
fn make_symlink(target: &Path, dst: &Path) -> Result<(), AssemblerError> {
    fs::copy(target, dst).map(|_| ()).map_err(|e| io_err(dst, e))
}

fn destination(root: &Path, split: Split, sub: &str, src: &Path) -> Result<PathBuf, AssemblerError> {
    let name = src
        .file_name()
        .ok_or_else(|| AssemblerError::MissingSource(src.to_path_buf()))?;
    Ok(root.join(split.as_str()).join(sub).join(name))
}

/// Materializes the manifest under `<root>/{train,val,test}/{images,labels}`
/// and writes the dataset descriptor. Files already up to date are left
/// alone, so a second run reports no changes.
pub fn emit_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    mode: EmitMode,
    categories: &[&str],
) -> Result<EmitReport, AssemblerError> {
    let mut jobs: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(manifest.entries.len() * 2);
    for e in &manifest.entries {
        for (src, sub) in [(&e.item.image, "images"), (&e.item.label, "labels")] {
            if !src.is_file() {
                return Err(AssemblerError::MissingSource(src.clone()));
            }
            jobs.push((src.clone(), destination(root, e.split, sub, src)?));
        }
    }
    let mut dsts: Vec<&PathBuf> = jobs.iter().map(|(_, d)| d).collect();
    dsts.sort();
    if let Some(w) = dsts.windows(2).find(|w| w[0] == w[1]) {
        return Err(AssemblerError::CollisionAtDestination(w[0].clone()));
    }

    for split in Split::ALL {
        for sub in ["images", "labels"] {
            let dir = root.join(split.as_str()).join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
    }
    let results = jobs
        .par_iter()
        .map(|(src, dst)| sync_file(src, dst, mode))
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = EmitReport::default();
    for r in results {
        match r {
            SyncOutcome::Written => report.written += 1,
            SyncOutcome::Unchanged => report.unchanged += 1,
        }
    }
    let descriptor = format_descriptor(root, &manifest.counts(), categories);
    let path = root.join(DESCRIPTOR_FILE);
    if fs::read_to_string(&path).ok().as_deref() == Some(descriptor.as_str()) {
        report.unchanged += 1;
    } else {
        fs::write(&path, descriptor).map_err(|e| io_err(&path, e))?;
        report.written += 1;
    }
    Ok(report)
}

/// Mean and sample standard deviation (`n - 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.0} ± {:.0}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub counts: SplitCounts,
    pub real: usize,
    pub composite: usize,
    pub labels: usize,
    pub bbox_width_px: MeanStd,
    pub bbox_height_px: MeanStd,
}

/// Accumulates per-item tallies; [`dataset_stats`] feeds it from disk.
#[derive(Debug, Default)]
pub struct StatsAccumulator {
    counts: SplitCounts,
    real: usize,
    composite: usize,
    widths: Vec<f64>,
    heights: Vec<f64>,
}

impl StatsAccumulator {
    pub fn add(&mut self, split: Split, kind: ItemKind, box_sizes_px: &[(f64, f64)]) {
        match (split, kind) {
            (Split::Train, ItemKind::Real) => self.counts.train_real += 1,
            (Split::Train, ItemKind::Composite) => self.counts.train_composite += 1,
            (Split::Val, _) => self.counts.val += 1,
            (Split::Test, _) => self.counts.test += 1,
        }
        match kind {
            ItemKind::Real => self.real += 1,
            ItemKind::Composite => self.composite += 1,
        }
        for &(w, h) in box_sizes_px {
            self.widths.push(w);
            self.heights.push(h);
        }
    }

    pub fn finish(self) -> DatasetStats {
        DatasetStats {
            counts: self.counts,
            real: self.real,
            composite: self.composite,
            labels: self.widths.len(),
            bbox_width_px: MeanStd::of(&self.widths),
            bbox_height_px: MeanStd::of(&self.heights),
        }
    }
}

fn image_geometry(path: &Path) -> Result<ImageGeometry, AssemblerError> {
    let (w, h) = image::image_dimensions(path).map_err(|e| AssemblerError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ImageGeometry::new(w, h).map_err(|e| AssemblerError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Split/provenance counts plus label size statistics in pixels, reading
/// each label file and the header of each image.
pub fn dataset_stats(manifest: &DatasetManifest) -> Result<DatasetStats, AssemblerError> {
    let per_item = manifest
        .entries
        .par_iter()
        .map(|e| {
            let geom = image_geometry(&e.item.image)?;
            let boxes = read_labels::<f64>(&e.item.label)?;
            let sizes: Vec<(f64, f64)> = boxes
                .iter()
                .map(|b| {
                    (
                        b.w * f64::from(geom.width()),
                        b.h * f64::from(geom.height()),
                    )
                })
                .collect();
            Ok((e.split, e.kind, sizes))
        })
        .collect::<Result<Vec<_>, AssemblerError>>()?;
    let mut acc = StatsAccumulator::default();
    for (split, kind, sizes) in &per_item {
        acc.add(*split, *kind, sizes);
    }
    Ok(acc.finish())
}

/// Slide id of a patch stem `<slide>_x<ox>_y<oy>`; other stems are returned
/// unchanged.
pub fn source_slide(stem: &str) -> &str {
    let tail_is_origin = |s: &str, tag: char| {
        s.strip_prefix(tag)
            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
    };
    let Some((rest, y)) = stem.rsplit_once('_') else {
        return stem;
    };
    match rest.rsplit_once('_') {
        Some((slide, x)) if tail_is_origin(x, 'x') && tail_is_origin(y, 'y') => slide,
        _ => stem,
    }
}

/// Slides that contributed real patches to validation or test. Backgrounds
/// cut from these slides leak held-out content into training composites.
pub fn held_out_sources(manifest: &DatasetManifest) -> BTreeSet<String> {
    manifest
        .entries
        .iter()
        .filter(|e| e.split != Split::Train && e.kind == ItemKind::Real)
        .filter_map(|e| e.item.image.file_stem())
        .map(|s| source_slide(&s.to_string_lossy()).to_string())
        .collect()
}

/// Width and height statistics of a set of crop images.
pub fn crop_size_stats(dims: &[(u32, u32)]) -> (MeanStd, MeanStd) {
    let w: Vec<f64> = dims.iter().map(|d| f64::from(d.0)).collect();
    let h: Vec<f64> = dims.iter().map(|d| f64::from(d.1)).collect();
    (MeanStd::of(&w), MeanStd::of(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn items(n: usize) -> Vec<DatasetItem> {
        (0..n)
            .map(|i| DatasetItem::new(format!("img/{i:05}.png"), format!("img/{i:05}.txt")))
            .collect()
    }

    #[test]
    fn slides_behind_held_out_patches() {
        assert_eq!(source_slide("s07_x320_y0"), "s07");
        assert_eq!(source_slide("a_b_x0_y640"), "a_b");
        assert_eq!(source_slide("s07_g00001"), "s07_g00001");
        assert_eq!(source_slide("s_x_y1"), "s_x_y1");
        assert_eq!(source_slide("plain"), "plain");
        let item = |p: &str| DatasetItem::new(format!("{p}.png"), format!("{p}.txt"));
        let entries = [
            (Split::Train, ItemKind::Real, "t/s1_x0_y0"),
            (Split::Val, ItemKind::Real, "v/s2_x0_y320"),
            (Split::Test, ItemKind::Real, "v/s3_x640_y0"),
            (Split::Train, ItemKind::Composite, "c/s4_x0_y0"),
        ]
        .iter()
        .map(|&(split, kind, p)| ManifestEntry { split, kind, item: item(p) })
        .collect();
        let m = DatasetManifest { entries, ratio: 0.0, seed: 0 };
        let held: Vec<String> = held_out_sources(&m).into_iter().collect();
        assert_eq!(held, ["s2", "s3"]);
    }

    fn pool(n: usize) -> Vec<DatasetItem> {
        (0..n)
            .map(|i| DatasetItem::new(format!("syn/{i:05}.png"), format!("syn/{i:05}.txt")))
            .collect()
    }

    #[test]
    fn split_sizes_cases() {
        assert_eq!(split_sizes(4363), (3054, 654, 655));
        assert_eq!(split_sizes(10), (7, 1, 2));
        assert_eq!(split_sizes(3), (1, 1, 1));
        assert_eq!(split_sizes(4), (1, 1, 2));
        assert!(matches!(make_splits(items(2), 0), Err(AssemblerError::TooFewItems(2))));
    }

    #[test]
    fn mixing_follows_ratio_table() {
        let base = make_splits(items(4363), 7).unwrap();
        assert_eq!(base.counts().train_real, 3054);
        let synth = pool(8000);
        for (ratio, total) in [(0.0, 3054), (0.5, 4581), (1.0, 6108), (1.5, 7635), (2.0, 9162), (2.5, 10689)] {
            let m = mix_training(&base, &synth, ratio).unwrap();
            assert_eq!(m.counts().train(), total, "ratio {ratio}");
            assert_eq!(m.counts().val, 654);
            assert_eq!(m.counts().test, 655);
        }
        assert_eq!(mix_training(&base, &synth, 0.0).unwrap().entries, base.entries);
        assert!(matches!(
            mix_training(&base, &pool(100), 1.0),
            Err(AssemblerError::InsufficientSyntheticPool { needed: 3054, available: 100 })
        ));
        assert!(matches!(mix_training(&base, &synth, -1.0), Err(AssemblerError::InvalidRatio(_))));
    }

    #[test]
    fn remixing_replaces_composites() {
        let base = make_splits(items(100), 1).unwrap();
        let synth = pool(500);
        let a = mix_training(&base, &synth, 2.0).unwrap();
        let b = mix_training(&a, &synth, 0.5).unwrap();
        assert_eq!(b.counts().train_composite, 35);
        assert_eq!(b, mix_training(&base, &synth, 0.5).unwrap());
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = mix_training(&make_splits(items(20), 3).unwrap(), &pool(40), 1.5).unwrap();
        let text = format_manifest(&m);
        assert!(text.starts_with("# holoforge-manifest ratio=1:1.5 seed=3 "));
        assert_eq!(parse_manifest(&text).unwrap(), m);
        assert!(parse_manifest("val\tcomposite\ta.png\ta.txt\n").is_err());
        assert!(parse_manifest("train\treal\ta.png\n").is_err());
    }

    #[test]
    fn stats_accumulator() {
        assert_eq!(StatsAccumulator::default().finish(), DatasetStats::default());
        let mut acc = StatsAccumulator::default();
        acc.add(Split::Train, ItemKind::Real, &[(90.0, 100.0), (110.0, 80.0)]);
        acc.add(Split::Train, ItemKind::Composite, &[(100.0, 90.0)]);
        acc.add(Split::Val, ItemKind::Real, &[]);
        let s = acc.finish();
        assert_eq!(s.counts.train(), 2);
        assert_eq!((s.real, s.composite, s.labels), (2, 1, 3));
        assert!((s.bbox_width_px.mean - 100.0).abs() < 1e-12);
        assert!((s.bbox_width_px.std - 10.0).abs() < 1e-12);
        let (w, h) = crop_size_stats(&[(94, 96), (70, 71), (118, 121)]);
        assert_eq!(format!("{w}"), "94 ± 24");
        assert_eq!(format!("{h}"), "96 ± 25");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn splits_partition_and_ignore_input_order(n in 3usize..300, seed in any::<u64>(), rot in 0usize..300) {
            let mut input = items(n);
            let a = make_splits(input.clone(), seed).unwrap();
            input.rotate_left(rot % n);
            input.reverse();
            let b = make_splits(input, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let seen: HashSet<_> = a.entries.iter().map(|e| e.item.clone()).collect();
            prop_assert_eq!(seen.len(), n);
            let c = a.counts();
            let (tr, va, te) = split_sizes(n);
            prop_assert_eq!((c.train_real, c.val, c.test), (tr, va, te));
            prop_assert!(tr >= 1 && va >= 1 && te >= 1);
        }

        #[test]
        fn mixing_leaves_val_and_test_alone(n in 3usize..200, ratio in 0.0f64..3.0, seed in any::<u64>()) {
            let base = make_splits(items(n), seed).unwrap();
            let mixed = mix_training(&base, &pool(700), ratio).unwrap();
            for split in [Split::Val, Split::Test] {
                let before: Vec<_> = base.split_entries(split).collect();
                let after: Vec<_> = mixed.split_entries(split).collect();
                prop_assert_eq!(before, after);
            }
            prop_assert!(mixed.entries.iter().all(|e| e.kind == ItemKind::Real || e.split == Split::Train));
        }
    }
}
