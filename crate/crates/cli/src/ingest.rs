//! Manifest ingestion for ADE20K-style and COCO-panoptic-style datasets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use segpipe_core::segdata::{
    load_ade20k_annotation, load_coco_panoptic, ManifestHeader, ManifestWriter, SampleRecord, SegmentId, SegmentInfo,
    ADE20K_CATEGORIES,
};

use crate::{read, repro_header, ENV_DATA_ROOT};

#[derive(Subcommand, Debug)]
pub enum IngestCommand {
    /// Pair `<stem>.png` annotations (0 = unlabeled, v = category v-1) with
    /// same-stem images.
    Ade20k(Ade20kArgs),
    /// Read a COCO panoptic JSON; category ids are remapped to contiguous
    /// indices in ascending id order.
    Coco(CocoArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct Ade20kArgs {
    /// Dataset root; all other paths are relative to it.
    #[arg(long, env = ENV_DATA_ROOT)]
    data_root: PathBuf,
    #[arg(long, default_value = "images/training")]
    images: String,
    #[arg(long, default_value = "annotations/training")]
    annotations: String,
    #[arg(long, default_value = "ade20k")]
    dataset: String,
    /// Output manifest path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CocoArgs {
    #[arg(long, env = ENV_DATA_ROOT)]
    data_root: PathBuf,
    /// Panoptic annotation JSON, relative to the data root.
    #[arg(long, default_value = "annotations/panoptic_train2017.json")]
    panoptic_json: String,
    /// Directory of panoptic PNGs, relative to the data root.
    #[arg(long, default_value = "annotations/panoptic_train2017")]
    panoptic_dir: String,
    #[arg(long, default_value = "train2017")]
    images: String,
    #[arg(long, default_value = "coco-panoptic")]
    dataset: String,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the original-id -> index category table.
    #[arg(long)]
    category_map_out: Option<PathBuf>,
}

pub fn run(cmd: IngestCommand) -> Result<()> {
    let count = match cmd {
        IngestCommand::Ade20k(a) => {
            repro_header("ingest ade20k", &a, json!({}), None);
            ade20k(&a)?
        }
        IngestCommand::Coco(a) => {
            repro_header("ingest coco", &a, json!({}), None);
            coco(&a)?
        }
    };
    crate::emit(json!({"records": count}))
}

fn join_ref(dir: &str, name: &str) -> String {
    let dir = dir.trim_end_matches('/');
    if dir.is_empty() {
        name.to_string()
    } else {
        format!("{dir}/{name}")
    }
}

fn sorted_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

fn stem(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(s, _)| s)
}

fn ade20k(args: &Ade20kArgs) -> Result<u64> {
    let images: BTreeMap<String, String> = sorted_files(&args.data_root.join(&args.images))?
        .into_iter()
        .filter(|n| !n.ends_with(".idx"))
        .map(|n| (stem(&n).to_string(), n))
        .collect();
    let header = ManifestHeader::new(&args.dataset, ADE20K_CATEGORIES as u32);
    let mut writer = ManifestWriter::create(&args.out, header)?;
    for name in sorted_files(&args.data_root.join(&args.annotations))? {
        if !name.ends_with(".png") {
            continue;
        }
        let id = stem(&name);
        let Some(image) = images.get(id) else {
            bail!("annotation {name} has no matching image in {}", args.images);
        };
        let mask_ref = join_ref(&args.annotations, &name);
        load_ade20k_annotation(&read(&args.data_root.join(&mask_ref))?).with_context(|| format!("validating {mask_ref}"))?;
        writer.append(SampleRecord::real(id, join_ref(&args.images, image), mask_ref))?;
    }
    writer.commit()?;
    Ok(writer.len())
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    file_name: String,
    segments_info: Vec<CocoSegment>,
}

#[derive(Deserialize)]
struct CocoSegment {
    id: u32,
    category_id: u32,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u32,
    #[serde(default)]
    isthing: u8,
}

fn coco(args: &CocoArgs) -> Result<u64> {
    let file: CocoFile = serde_json::from_slice(&read(&args.data_root.join(&args.panoptic_json))?)
        .with_context(|| format!("parsing {}", args.panoptic_json))?;
    let mut categories: Vec<&CocoCategory> = file.categories.iter().collect();
    categories.sort_by_key(|c| c.id);
    let index: BTreeMap<u32, (u16, bool)> =
        categories.iter().enumerate().map(|(i, c)| (c.id, (i as u16, c.isthing != 0))).collect();
    if index.len() != categories.len() {
        bail!("duplicate category ids in {}", args.panoptic_json);
    }
    let images: BTreeMap<u64, &str> = file.images.iter().map(|i| (i.id, i.file_name.as_str())).collect();

    let header = ManifestHeader::new(&args.dataset, categories.len() as u32);
    let mut writer = ManifestWriter::create(&args.out, header)?;
    let mut annotations: Vec<&CocoAnnotation> = file.annotations.iter().collect();
    annotations.sort_by_key(|a| a.image_id);
    for ann in annotations {
        let Some(image) = images.get(&ann.image_id) else {
            bail!("annotation {} references unknown image {}", ann.file_name, ann.image_id);
        };
        let segments = ann
            .segments_info
            .iter()
            .map(|s| {
                let &(category_id, isthing) =
                    index.get(&s.category_id).with_context(|| format!("unknown category {}", s.category_id))?;
                Ok(SegmentInfo { id: SegmentId(s.id), category_id, isthing })
            })
            .collect::<Result<Vec<_>>>()?;
        let mask_ref = join_ref(&args.panoptic_dir, &ann.file_name);
        load_coco_panoptic(&read(&args.data_root.join(&mask_ref))?, &segments)
            .with_context(|| format!("validating {mask_ref}"))?;
        let mut rec = SampleRecord::real(stem(image), join_ref(&args.images, image), mask_ref);
        rec.segments_info = Some(segments);
        writer.append(rec)?;
    }
    writer.commit()?;
    if let Some(path) = &args.category_map_out {
        let table: Vec<_> = categories.iter().enumerate().map(|(i, c)| json!({"id": c.id, "index": i})).collect();
        crate::write(path, serde_json::to_string_pretty(&table)?.as_bytes())?;
    }
    Ok(writer.len())
}
