use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use holoforge_core::assembler::{
    crop_size_stats, dataset_stats, emit_dataset, format_manifest, held_out_sources, make_splits,
    mix_training, parse_manifest, source_slide, DatasetItem, DatasetManifest, EmitMode, ItemKind, ManifestEntry, Split,
};
use holoforge_core::compositor::{
    composite_patch, dedup_scan, format_ledger, plan_batch, Background, Grain, PlacementPolicy,
};
use holoforge_core::evaluator::{self, evaluate_map, frechet_distance, EmbeddingBlob, ScoredSample};
use holoforge_core::formats::{
    format_decimal, format_labels, format_transform, parse_detections, parse_labels, parse_pairs,
    parse_transform, read_labels, read_text, write_text,
};
use holoforge_core::geometry::{self, expand_bbox_area, transform_bbox, Transferred};
use holoforge_core::tiler::{
    classify_patch, crop_grains, crop_patch, plan_tiles, BlackenedRule, PatchKind, Provenance,
};
use holoforge_core::{BBox, ImageGeometry};
use rayon::prelude::*;

use crate::files::{
    create_dir, labelled_items, list_pngs, load_gray, parent_dir, seed_or_random, stem,
    write_run_meta,
};
use crate::{
    AssembleArgs, CompositeArgs, CriticArgs, EmitArgs, EvalFidArgs, EvalMapArgs, ExpandArgs,
    ExtractArgs, FitAffineArgs, ProvenanceArg, StatsArgs, TileArgs, ToyEmbedArgs, TransferArgs,
};

fn geometry((w, h): (u32, u32)) -> Result<ImageGeometry> {
    Ok(ImageGeometry::new(w, h)?)
}

fn image_id(explicit: &Option<String>, image: &Path) -> String {
    explicit.clone().unwrap_or_else(|| stem(image))
}

/// Prints `text` and, when given, also writes it to `out`.
fn report(text: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = out {
        write_text(path, text)?;
    }
    Ok(())
}

pub fn fit_affine(args: &FitAffineArgs) -> Result<()> {
    let pairs = parse_pairs::<f64>(&read_text(&args.pairs)?)?;
    let t = geometry::fit_affine(&pairs)?;
    let worst = pairs
        .iter()
        .map(|&(s, d)| {
            let p = t.apply(s);
            (p.0 - d.0).hypot(p.1 - d.1)
        })
        .fold(0.0, f64::max);
    log::info!("fitted {} pairs, max residual {worst:e} px", pairs.len());
    write_text(&args.out, &format_transform(&t))?;
    write_run_meta(&parent_dir(&args.out), "fit-affine", None, args)
}

pub fn transfer_labels(args: &TransferArgs) -> Result<()> {
    let labels = read_labels::<f64>(&args.labels)?;
    let t = parse_transform::<f64>(&read_text(&args.transform)?)?;
    let (src, dst) = (geometry(args.src_size)?, geometry(args.dst_size)?);
    if !(0.0..=1.0).contains(&args.min_inside) {
        bail!("--min-inside must lie in [0, 1], got {}", args.min_inside);
    }
    let mut kept = Vec::new();
    for b in &labels {
        match transform_bbox(b, src, &t, dst, args.min_inside) {
            Transferred::Kept(k) => kept.push(k),
            Transferred::Discarded => log::debug!("discarded {b:?}"),
        }
    }
    write_text(&args.out, &format_labels(&kept))?;
    println!("kept={} discarded={}", kept.len(), labels.len() - kept.len());
    write_run_meta(&parent_dir(&args.out), "transfer-labels", None, args)
}

pub fn expand_boxes(args: &ExpandArgs) -> Result<()> {
    if !(args.factor.is_finite() && args.factor > -1.0) {
        bail!("--factor must be finite and greater than -1, got {}", args.factor);
    }
    let labels = read_labels::<f64>(&args.labels)?;
    let grown: Vec<BBox> = labels.iter().map(|b| expand_bbox_area(b, args.factor)).collect();
    write_text(&args.out, &format_labels(&grown))?;
    write_run_meta(&parent_dir(&args.out), "expand-boxes", None, args)
}

pub fn tile(args: &TileArgs) -> Result<()> {
    let image = image::open(&args.image).with_context(|| format!("decoding {}", args.image.display()))?;
    let labels = read_labels::<f64>(&args.labels)?;
    let src = ImageGeometry::new(image.width(), image.height())?;
    let id = image_id(&args.id, &args.image);
    let plans = plan_tiles(&id, src, args.tile, args.step)?;
    for kind in ["annotated", "background"] {
        create_dir(&args.out.join(kind))?;
    }
    let kinds = plans
        .par_iter()
        .map(|plan| {
            let inside = holoforge_core::tiler::tile_labels(&labels, src, plan);
            let kind = classify_patch(&inside);
            let dir = args.out.join(match kind {
                PatchKind::Annotated => "annotated",
                PatchKind::Background => "background",
            });
            let png = dir.join(format!("{}.png", plan.stem()));
            crop_patch(&image, plan)
                .save(&png)
                .with_context(|| format!("writing {}", png.display()))?;
            write_text(&png.with_extension("txt"), &format_labels(&inside))?;
            Ok(kind)
        })
        .collect::<Result<Vec<_>>>()?;
    let annotated = kinds.iter().filter(|k| **k == PatchKind::Annotated).count();
    println!(
        "patches={} annotated={annotated} background={}",
        kinds.len(),
        kinds.len() - annotated
    );
    write_run_meta(&args.out, "tile", None, args)
}

pub fn extract_grains(args: &ExtractArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.zero_fraction) {
        bail!("--zero-fraction must lie in [0, 1], got {}", args.zero_fraction);
    }
    let image = load_gray(&args.image)?;
    let labels = read_labels::<f64>(&args.labels)?;
    let id = image_id(&args.id, &args.image);
    let provenance = match args.provenance {
        ProvenanceArg::Manual => Provenance::Manual,
        ProvenanceArg::Automated => Provenance::Automated,
    };
    let rule = BlackenedRule {
        intensity_floor: args.intensity_floor,
        zero_fraction_threshold: args.zero_fraction,
    };
    let crops = crop_grains(&id, &image, &labels, provenance, &rule);
    create_dir(&args.out)?;
    crops
        .par_iter()
        .filter(|c| c.flags.is_clean())
        .try_for_each(|c| {
            let png = args.out.join(format!("{}.png", c.stem()));
            c.pixels.save(&png).with_context(|| format!("writing {}", png.display()))
        })?;

    let mut ledger = String::from("# stem\tx\ty\twidth\theight\tprovenance\tblackened\tlopsided\tkept\n");
    for c in &crops {
        ledger += &format!(
            "{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{}\t{}\n",
            c.stem(),
            c.rect.x,
            c.rect.y,
            c.rect.width,
            c.rect.height,
            provenance,
            c.flags.blackened,
            c.flags.lopsided,
            c.flags.is_clean()
        );
    }
    write_text(&args.out.join(format!("{id}_grains.tsv")), &ledger)?;
    let kept = crops.iter().filter(|c| c.flags.is_clean()).count();
    let blackened = crops.iter().filter(|c| c.flags.blackened).count();
    let lopsided = crops.iter().filter(|c| c.flags.lopsided).count();
    println!(
        "crops={} kept={kept} blackened={blackened} lopsided={lopsided}",
        crops.len()
    );
    write_run_meta(&args.out, "extract-grains", None, args)
}

pub fn composite(args: &CompositeArgs) -> Result<()> {
    let seed = seed_or_random(args.seed);
    let policy = PlacementPolicy {
        grains_per_patch_mean: args.mean,
        max_pairwise_iou: args.max_iou,
        max_retries_per_grain: args.retries,
        feather_px: args.feather,
        ..Default::default()
    };
    let mut backgrounds = list_pngs(&args.backgrounds)?;
    if let Some(path) = &args.holdout {
        let held = held_out_sources(&parse_manifest(&read_text(path)?)?);
        let before = backgrounds.len();
        backgrounds.retain(|p| !held.contains(source_slide(&stem(p))));
        log::info!(
            "holdout: dropped {} of {before} backgrounds from {} held-out slides",
            before - backgrounds.len(),
            held.len()
        );
    }
    let grain_paths = list_pngs(&args.grains)?;
    let jobs = plan_batch(
        backgrounds.len(),
        grain_paths.len(),
        args.count,
        &policy,
        seed,
        &args.prefix,
    )?;
    let grains = grain_paths
        .par_iter()
        .map(|p| {
            Ok(Grain {
                id: stem(p),
                pixels: load_gray(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(&args.out)?;

    // backgrounds are decoded per job so large pools never sit in memory at once
    let records = jobs
        .par_iter()
        .map(|job| {
            let path = &backgrounds[job.background];
            let background = Background {
                id: stem(path),
                pixels: load_gray(path)?,
            };
            let chosen: Vec<&Grain> = job.grains.iter().map(|&g| &grains[g]).collect();
            let c = composite_patch(&job.composite_id, &background, &chosen, &policy, job.seed)?;
            let png = args.out.join(format!("{}.png", job.composite_id));
            c.pixels.save(&png).with_context(|| format!("writing {}", png.display()))?;
            write_text(&png.with_extension("txt"), &format_labels(&c.record.labels))?;
            Ok(c.record)
        })
        .collect::<Result<Vec<_>>>()?;

    write_text(&args.out.join("batch.tsv"), &format_ledger(&records))?;
    let duplicates = dedup_scan(&records);
    for (i, j) in &duplicates {
        log::warn!(
            "{} and {} have identical content",
            records[*i].composite_id,
            records[*j].composite_id
        );
    }
    let placed: usize = records.iter().map(|r| r.placements.len()).sum();
    let requested: usize = jobs.iter().map(|j| j.grains.len()).sum();
    println!(
        "composites={} grains={placed} skipped={} duplicates={} seed={seed}",
        records.len(),
        requested - placed,
        duplicates.len()
    );
    write_run_meta(&args.out, "composite", Some(seed), args)
}

/// A training split of `n` placeholder items, for checking counts without data.
fn planned_manifest(n: usize, ratio: f64, seed: u64) -> Result<DatasetManifest> {
    let entries = (0..n)
        .map(|i| ManifestEntry {
            split: Split::Train,
            kind: ItemKind::Real,
            item: DatasetItem::new(format!("real/{i:06}.png"), format!("real/{i:06}.txt")),
        })
        .collect();
    let base = DatasetManifest {
        entries,
        ratio: 0.0,
        seed,
    };
    let pool: Vec<DatasetItem> = (0..holoforge_core::assembler::composite_count(n, ratio))
        .map(|i| DatasetItem::new(format!("composite/{i:06}.png"), format!("composite/{i:06}.txt")))
        .collect();
    Ok(mix_training(&base, &pool, ratio)?)
}

pub fn assemble(args: &AssembleArgs) -> Result<()> {
    let seed = seed_or_random(args.seed);
    let manifest = match (&args.real, args.train) {
        (Some(real), _) => {
            let Some(_) = &args.out else {
                bail!("--out is required with --real");
            };
            let base = make_splits(labelled_items(real)?, seed)?;
            let pool = match &args.synthetic {
                Some(dir) => labelled_items(dir)?,
                None => Vec::new(),
            };
            mix_training(&base, &pool, args.ratio)?
        }
        (None, Some(n)) => planned_manifest(n, args.ratio, seed)?,
        (None, None) => unreachable!("clap requires --real or --train"),
    };
    let c = manifest.counts();
    println!(
        "ratio={} train_real={} train_composite={} train={} val={} test={} total={}",
        manifest.ratio_descriptor(),
        c.train_real,
        c.train_composite,
        c.train(),
        c.val,
        c.test,
        c.total()
    );
    if let Some(out) = &args.out {
        write_text(out, &format_manifest(&manifest))?;
        write_run_meta(&parent_dir(out), "assemble", Some(seed), args)?;
    }
    Ok(())
}

pub fn emit(args: &EmitArgs) -> Result<()> {
    let manifest = parse_manifest(&read_text(&args.manifest)?)?;
    let mode = if args.link { EmitMode::Symlink } else { EmitMode::Copy };
    let categories: Vec<&str> = args.categories.iter().map(String::as_str).collect();
    let r = emit_dataset(&manifest, &args.out, mode, &categories)?;
    println!("written={} unchanged={}", r.written, r.unchanged);
    write_run_meta(&args.out, "emit", Some(manifest.seed), args)
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let text = if let Some(path) = &args.manifest {
        let s = dataset_stats(&parse_manifest(&read_text(path)?)?)?;
        if args.json {
            serde_json::to_string_pretty(&s)? + "\n"
        } else {
            let c = &s.counts;
            format!(
                "train_real={}\ntrain_composite={}\ntrain={}\nval={}\ntest={}\ntotal={}\n\
                 real={}\ncomposite={}\nlabels={}\nbbox_width_px={}\nbbox_height_px={}\n",
                c.train_real,
                c.train_composite,
                c.train(),
                c.val,
                c.test,
                c.total(),
                s.real,
                s.composite,
                s.labels,
                s.bbox_width_px,
                s.bbox_height_px
            )
        }
    } else if let Some(dir) = &args.grains {
        let dims = list_pngs(dir)?
            .par_iter()
            .map(|p| image::image_dimensions(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        let (w, h) = crop_size_stats(&dims);
        if args.json {
            serde_json::to_string_pretty(&serde_json::json!({ "crops": dims.len(), "width": w, "height": h }))? + "\n"
        } else {
            format!("crops={}\nwidth_px={w}\nheight_px={h}\n", dims.len())
        }
    } else {
        unreachable!("clap requires --manifest or --grains")
    };
    report(&text, args.out.as_deref())
}

fn read_ground_truth(dir: &Path) -> Result<BTreeMap<String, Vec<BBox>>> {
    let mut gt = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            let boxes = parse_labels::<f64>(&read_text(&path)?)
                .with_context(|| format!("in {}", path.display()))?;
            gt.insert(stem(&path), boxes);
        }
    }
    Ok(gt)
}

pub fn eval_map(args: &EvalMapArgs) -> Result<()> {
    let gt = read_ground_truth(&args.gt)?;
    let dets = parse_detections::<f64>(&read_text(&args.pred)?)
        .with_context(|| format!("in {}", args.pred.display()))?;
    let unknown = dets.iter().filter(|d| !gt.contains_key(&d.image_id)).count();
    if unknown > 0 {
        log::warn!("{unknown} detections refer to images without a ground-truth file");
    }
    let r = evaluate_map(&gt, &dets, args.iou, args.conf)?;
    let text = if args.json {
        serde_json::to_string_pretty(&r)? + "\n"
    } else {
        let mut s = format!(
            "map50={}\nprecision={}\nrecall={}\nconf={}\nground_truth={}\ndetections={}\n",
            format_decimal(r.map50),
            format_decimal(r.precision),
            format_decimal(r.recall),
            format_decimal(r.confidence_cutoff),
            r.ground_truth,
            r.detections
        );
        for (cat, ap) in &r.per_category {
            s += &format!("ap50[{cat}]={}\n", format_decimal(*ap));
        }
        s
    };
    report(&text, args.out.as_deref())
}

fn read_blob(path: &Path) -> Result<EmbeddingBlob> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    EmbeddingBlob::from_bytes(&bytes).with_context(|| format!("in {}", path.display()))
}

pub fn eval_fid(args: &EvalFidArgs) -> Result<()> {
    let a = read_blob(&args.a)?.to_set::<f64>()?;
    let b = read_blob(&args.b)?.to_set::<f64>()?;
    let fid = frechet_distance(&a, &b, args.eps)?;
    let text = if args.json {
        serde_json::to_string_pretty(&serde_json::json!({
            "fid": fid, "n_a": a.n(), "n_b": b.n(), "dim": a.dim(), "epsilon": args.eps
        }))? + "\n"
    } else {
        format!(
            "fid={}\nn_a={}\nn_b={}\ndim={}\n",
            format_decimal(fid),
            a.n(),
            b.n(),
            a.dim()
        )
    };
    report(&text, args.out.as_deref())
}

fn parse_scores(text: &str) -> Result<Vec<ScoredSample<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let [id, score] = f[..] else {
                bail!("line {}: expected `id score`", i + 1);
            };
            let score: f64 = score
                .parse()
                .with_context(|| format!("line {}: bad score {score:?}", i + 1))?;
            Ok(ScoredSample {
                id: id.to_string(),
                score,
            })
        })
        .collect()
}

pub fn critic_filter(args: &CriticArgs) -> Result<()> {
    let samples = parse_scores(&read_text(&args.scores)?)?;
    let kept = evaluator::critic_filter(&samples, args.keep)?;
    let text: String = kept
        .iter()
        .map(|s| format!("{}\t{}\n", s.id, format_decimal(s.score)))
        .collect();
    write_text(&args.out, &text)?;
    println!("kept={} of {}", kept.len(), samples.len());
    write_run_meta(&parent_dir(&args.out), "critic-filter", None, args)
}

pub fn toy_embed(args: &ToyEmbedArgs) -> Result<()> {
    let paths = list_pngs(&args.images)?;
    let rows = paths
        .par_iter()
        .map(|p| Ok(evaluator::toy_embed::<f64>(&load_gray(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let blob = EmbeddingBlob::from_rows(&rows)?;
    let dir = parent_dir(&args.out);
    create_dir(&dir)?;
    fs::write(&args.out, blob.to_bytes()).with_context(|| format!("writing {}", args.out.display()))?;
    println!("embedded={} dim={}", blob.n, blob.d);
    write_run_meta(&dir, "toy-embed", None, args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_lines() {
        let s = parse_scores("# id score\na 0.5\n\nb -1e-3\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].id, "b");
        assert_eq!(s[1].score, -1e-3);
        assert!(parse_scores("a\n").is_err());
        assert!(parse_scores("a x\n").is_err());
    }

    #[test]
    fn planned_counts() {
        let m = planned_manifest(3054, 1.5, 7).unwrap();
        assert_eq!(m.counts().train(), 7635);
    }
}
