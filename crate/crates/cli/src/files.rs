use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use holoforge_core::assembler::DatasetItem;
use image::GrayImage;

/// `WIDTHxHEIGHT`, e.g. `1920x1080`.
pub fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let dim = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("invalid dimension {v:?}"))
    };
    Ok((dim(w)?, dim(h)?))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if is_png(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// PNG files under `dir` (recursive), sorted by path.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    walk(dir, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Every PNG under `dir` paired with its sibling `.txt` label file.
pub fn labelled_items(dir: &Path) -> Result<Vec<DatasetItem>> {
    list_pngs(dir)?
        .into_iter()
        .map(|image| {
            let label = image.with_extension("txt");
            if !label.is_file() {
                bail!("{} has no label file {}", image.display(), label.display());
            }
            Ok(DatasetItem::new(image, label))
        })
        .collect()
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path)
        .with_context(|| format!("decoding {}", path.display()))?
        .into_luma8())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Directory holding an output file.
pub fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Overwrites `<dir>/<stage>.run` with a single line naming the tool version,
/// the seed and the parameters of this run.
pub fn write_run_meta(dir: &Path, stage: &str, seed: Option<u64>, params: &dyn Debug) -> Result<()> {
    create_dir(dir)?;
    let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    let line = format!(
        "holoforge {} stage={stage} seed={seed} params={params:?}\n",
        env!("CARGO_PKG_VERSION")
    );
    let path = dir.join(format!("{stage}.run"));
    fs::write(&path, line).with_context(|| format!("writing {}", path.display()))
}

/// The given seed, or a fresh random one that the caller records.
pub fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        log::info!("no seed given, using {s}");
        s
    })
}
