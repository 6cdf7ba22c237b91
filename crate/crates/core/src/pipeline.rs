//! End-to-end runs over a manifest: open-vocabulary segmentation, click-
//! prompted referring segmentation, click-supervision export and offline
//! evaluation.
//!
//! Items run on a bounded worker pool. A failing item is recorded and
//! skipped unless `fail_fast` is set, in which case remaining items are
//! abandoned. Results are assembled in manifest order, so outputs do not
//! depend on scheduling.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clicks::{generate_click_sequence, parse_clicks, ClickExportRecord};
use crate::config::RunConfig;
use crate::contrastive::{compose_multiclass, pixel_argmax, ClassPrompts, ProposalSet};
use crate::error::{Error, Result};
use crate::eval::{
    accumulate, ConfusionMatrix, Conventions, DatasetReport, ItemIssue, ManifestRecord, ProviderProvenance, Report,
    Task,
};
use crate::io::{read_label_map, read_mask, read_rgb, write_label_map, write_mask};
use crate::providers::http::HttpProvider;
use crate::providers::oracle::{
    OracleClickSuggester, OracleProbability, OracleProposals, OracleSegmenter,
};
use crate::providers::{
    Backend, Capability, ClickSuggester, ProbabilityProvider, ProposalProvider, Region, Segmenter,
};
use crate::raster::{BinaryMask, LabelMap, ProbabilityMap};
use crate::tiling::{aggregate_windows, lift_tile_mask, plan_tiles, plan_windows, resample_nearest, scaled_size};

/// Provider factory. HTTP backends are shared across items; oracle backends
/// are built per item from that item's ground truth.
pub struct Backends {
    config: RunConfig,
    http: HashMap<Capability, Arc<HttpProvider>>,
}

impl Backends {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mut http = HashMap::new();
        for cap in Capability::ALL {
            let handle = config.handle(cap);
            handle.validate()?;
            if handle.backend == Backend::Http {
                http.insert(cap, Arc::new(HttpProvider::new(handle)?));
            }
        }
        Ok(Self {
            config: config.clone(),
            http,
        })
    }

    fn probability(&self, gt: &LabelMap) -> Arc<dyn ProbabilityProvider> {
        match self.http.get(&Capability::ProbabilityMap) {
            Some(h) => h.clone(),
            None => Arc::new(OracleProbability::new(gt.clone(), self.config.oracle_noise, self.config.seed)),
        }
    }

    fn proposals(&self, gt: &LabelMap) -> Arc<dyn ProposalProvider> {
        match self.http.get(&Capability::MaskProposals) {
            Some(h) => h.clone(),
            None => Arc::new(OracleProposals::new(
                gt.clone(),
                self.config.oracle_exact_proposals,
                self.config.oracle_distractors,
                self.config.seed,
            )),
        }
    }

    fn segmenter(&self, gt: &BinaryMask) -> Arc<dyn Segmenter> {
        match self.http.get(&Capability::PromptableSegment) {
            Some(h) => h.clone(),
            None => Arc::new(OracleSegmenter::new(gt.clone(), self.config.oracle_behavior)),
        }
    }

    fn suggester(&self, gt: &BinaryMask) -> Arc<dyn ClickSuggester> {
        match self.http.get(&Capability::ClickSuggest) {
            Some(h) => h.clone(),
            None => Arc::new(OracleClickSuggester::new(gt.clone())),
        }
    }

    pub fn provenance(&self, caps: &[Capability]) -> Vec<ProviderProvenance> {
        caps.iter()
            .map(|&cap| {
                let handle = self.config.handle(cap);
                ProviderProvenance {
                    capability: cap,
                    backend: handle.backend,
                    endpoint: handle.endpoint,
                    reported_model: self.http.get(&cap).and_then(|h| h.reported_model()),
                }
            })
            .collect()
    }
}

/// Class probability maps at the image's native resolution.
///
/// The image is brought to the configured long side; when that frame can hold
/// a window, it is covered by sliding windows whose partial maps are averaged.
/// Otherwise the provider receives the whole image and does the resizing
/// itself. Maps are finally resampled (nearest neighbor) to native size.
pub fn probability_for_image(
    image: &RgbImage,
    classes: &[String],
    provider: &dyn ProbabilityProvider,
    config: &RunConfig,
) -> Result<Vec<ProbabilityMap>> {
    let (w, h) = image.dimensions();
    let (fw, fh) = scaled_size(w, h, config.clip_long_side);
    let check_count = |maps: &Vec<ProbabilityMap>| -> Result<()> {
        if maps.len() != classes.len() {
            return Err(Error::CountMismatch {
                what: "probability maps",
                expected: classes.len(),
                actual: maps.len(),
            });
        }
        Ok(())
    };

    let maps = if config.window > 0 && fw >= config.window && fh >= config.window {
        let frame = if (fw, fh) == (w, h) {
            image.clone()
        } else {
            imageops::resize(image, fw, fh, FilterType::Triangle)
        };
        let plan = plan_windows(fw, fh, config.window, config.stride)?;
        let partials = plan
            .rects
            .par_iter()
            .map(|rect| {
                let crop = imageops::crop_imm(&frame, rect.x, rect.y, rect.w, rect.h).to_image();
                let region = Region { rect: *rect, frame_w: fw, frame_h: fh };
                let maps = provider.probability_maps(&crop, classes, 0, Some(&region))?;
                check_count(&maps)?;
                maps.iter().map(|m| resample_nearest(m, rect.w, rect.h)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        (0..classes.len())
            .map(|c| {
                let per_window: Vec<ProbabilityMap> = partials.iter().map(|p| p[c].clone()).collect();
                aggregate_windows(&per_window, &plan)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let maps = provider.probability_maps(image, classes, config.clip_long_side, None)?;
        check_count(&maps)?;
        maps
    };
    maps.iter().map(|m| resample_nearest(m, w, h)).collect()
}

/// Mask proposals over the whole image, tiled when it exceeds the tile cap.
pub fn proposals_for_image(image: &RgbImage, provider: &dyn ProposalProvider, config: &RunConfig) -> Result<ProposalSet> {
    let (w, h) = image.dimensions();
    let plan = plan_tiles(w, h, config.tile_cap)?;
    let mut all = Vec::new();
    if plan.rects.len() == 1 {
        all = provider.proposals(image, config.grid_n, None)?;
    } else {
        let per_tile = plan
            .rects
            .par_iter()
            .map(|rect| {
                let crop = imageops::crop_imm(image, rect.x, rect.y, rect.w, rect.h).to_image();
                let region = Region { rect: *rect, frame_w: w, frame_h: h };
                provider
                    .proposals(&crop, config.grid_n, Some(&region))?
                    .iter()
                    .map(|m| lift_tile_mask(m, *rect, w, h))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        all.extend(per_tile.into_iter().flatten());
    }
    ProposalSet::new(w, h, all, config.grid_n)
}

/// Full contrastive pipeline for one image.
pub fn segment_ovss(
    image: &RgbImage,
    prompts: &ClassPrompts,
    probability: &dyn ProbabilityProvider,
    proposals: &dyn ProposalProvider,
    config: &RunConfig,
) -> Result<LabelMap> {
    let maps = probability_for_image(image, prompts.names(), probability, config)?;
    let labels = pixel_argmax(&maps, prompts)?;
    let set = proposals_for_image(image, proposals, config)?;
    compose_multiclass(&set, &labels, prompts, config.uncovered)
}

/// Result of a manifest run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    /// Failure count per capability, for diagnostics.
    pub provider_failures: Vec<(Capability, usize, String)>,
    pub exit_code: i32,
}

fn error_capability(e: &Error) -> Option<Capability> {
    match e {
        Error::Provider { capability, .. } => Some(*capability),
        Error::SegmenterStep { source, .. } => error_capability(source),
        _ => None,
    }
}

fn dataset_name(rec: &ManifestRecord, default: &str) -> String {
    rec.dataset.clone().unwrap_or_else(|| default.to_string())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "item".into())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs `f` over records on the worker pool, honoring fail-fast.
fn run_items<T: Send>(
    records: &[ManifestRecord],
    config: &RunConfig,
    f: impl Fn(usize, &ManifestRecord) -> Result<T> + Sync,
) -> Result<Vec<Result<T>>> {
    let abort = AtomicBool::new(false);
    let pool = pool(config)?;
    Ok(pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(i, rec)| {
                if abort.load(Ordering::SeqCst) {
                    return Err(Error::InvalidArgument("abandoned after an earlier failure (fail-fast)".into()));
                }
                let r = f(i, rec);
                if let Err(e) = &r {
                    log::warn!("item {i} ({}): {e}", rec.image.display());
                    if config.fail_fast {
                        abort.store(true, Ordering::SeqCst);
                    }
                }
                r
            })
            .collect()
    }))
}

struct Tally {
    failures: Vec<ItemIssue>,
    by_cap: Vec<(Capability, usize, String)>,
}

impl Tally {
    fn new() -> Self {
        Self { failures: Vec::new(), by_cap: Vec::new() }
    }

    fn record(&mut self, index: usize, rec: &ManifestRecord, err: &Error) {
        if let Some(cap) = error_capability(err) {
            match self.by_cap.iter_mut().find(|(c, _, _)| *c == cap) {
                Some(entry) => entry.1 += 1,
                None => self.by_cap.push((cap, 1, err.to_string())),
            }
        }
        self.failures.push(ItemIssue {
            index,
            image: rec.image.display().to_string(),
            reason: err.to_string(),
        });
    }

    fn exit_code(&self, total: usize, config: &RunConfig) -> i32 {
        let any = !self.failures.is_empty();
        if (config.fail_fast && any) || (total > 0 && self.failures.len() == total) {
            1
        } else {
            0
        }
    }
}

fn finish(
    command: &str,
    datasets: Vec<DatasetReport>,
    config: &RunConfig,
    providers: Vec<ProviderProvenance>,
    tally: Tally,
    total: usize,
    started: Instant,
) -> RunOutcome {
    let exit_code = tally.exit_code(total, config);
    let (skipped, failed) = if config.fail_fast {
        (Vec::new(), tally.failures)
    } else {
        (tally.failures, Vec::new())
    };
    RunOutcome {
        report: Report {
            command: command.into(),
            datasets,
            config: config.echo(),
            providers,
            conventions: Conventions::default(),
            skipped,
            failed,
            wall_clock_s: crate::eval::round4(started.elapsed().as_secs_f64()),
        },
        provider_failures: tally.by_cap,
        exit_code,
    }
}

struct DatasetAcc {
    name: String,
    task: Task,
    names: Vec<String>,
    fg: Option<usize>,
    cm: ConfusionMatrix,
    items: usize,
}

fn push_dataset(accs: &mut Vec<DatasetAcc>, name: String, task: Task, names: &[String], fg: Option<usize>, cm: &ConfusionMatrix) -> Result<()> {
    match accs.iter_mut().find(|a| a.name == name) {
        Some(a) => {
            if a.names != names {
                return Err(Error::InvalidArgument(format!("dataset {name:?} mixes class lists")));
            }
            a.cm = a.cm.merge(cm)?;
            a.items += 1;
        }
        None => accs.push(DatasetAcc {
            name,
            task,
            names: names.to_vec(),
            fg,
            cm: cm.clone(),
            items: 1,
        }),
    }
    Ok(())
}

fn into_reports(accs: Vec<DatasetAcc>) -> Result<Vec<DatasetReport>> {
    accs.into_iter()
        .map(|a| DatasetReport::from_confusion(a.name, a.task, a.items, &a.cm, &a.names, a.fg))
        .collect()
}

/// Foreground class of a two-class prompt list.
fn binary_foreground(prompts: &ClassPrompts) -> Option<usize> {
    (prompts.len() == 2).then(|| 1 - prompts.background() as usize)
}

/// Open-vocabulary segmentation over `records`, writing predicted label maps
/// to `<output_dir>/predictions/<stem>.png`.
pub fn cmd_ovss(config: &RunConfig, records: &[ManifestRecord], default_dataset: &str) -> Result<RunOutcome> {
    let started = Instant::now();
    let backends = Backends::new(config)?;
    let pred_dir = config.output_dir.join("predictions");
    ensure_dir(&pred_dir)?;

    let results = run_items(records, config, |_, rec| {
        if rec.task != Task::Ovss {
            return Err(Error::InvalidArgument(format!("{:?} record in an ovss run", rec.task)));
        }
        let prompts = ClassPrompts::load(rec.classes.as_ref().expect("validated on load"))?;
        let image = read_rgb(&rec.image)?;
        let gt = read_label_map(&rec.gt_mask, prompts.len() as u32, prompts.background())?;
        if gt.dims() != image.dimensions() {
            return Err(Error::dims(image.dimensions(), gt.dims()));
        }
        let pred = segment_ovss(&image, &prompts, &*backends.probability(&gt), &*backends.proposals(&gt), config)?;
        write_label_map(pred_dir.join(format!("{}.png", stem(&rec.image))), &pred)?;
        let cm = accumulate(&ConfusionMatrix::new(prompts.len()), &gt, &pred)?;
        Ok((prompts, cm))
    })?;

    let mut tally = Tally::new();
    let mut accs = Vec::new();
    for (i, (rec, r)) in records.iter().zip(results).enumerate() {
        let merged = r.and_then(|(prompts, cm)| {
            push_dataset(&mut accs, dataset_name(rec, default_dataset), Task::Ovss, prompts.names(), binary_foreground(&prompts), &cm)
        });
        if let Err(e) = merged {
            tally.record(i, rec, &e);
        }
    }
    let providers = backends.provenance(&[Capability::ProbabilityMap, Capability::MaskProposals]);
    Ok(finish("ovss", into_reports(accs)?, config, providers, tally, records.len(), started))
}

fn binary_labels(mask: &BinaryMask) -> LabelMap {
    let labels = mask.to_bools().into_iter().map(u32::from).collect();
    LabelMap::new(mask.width(), mask.height(), labels, 2, 0).expect("valid binary labels")
}

fn binary_names() -> Vec<String> {
    vec!["background".into(), "foreground".into()]
}

/// Referring / reasoning segmentation: click suggestion, click parsing,
/// promptable segmentation and optional group-wise voting.
pub fn cmd_refer(config: &RunConfig, records: &[ManifestRecord], default_dataset: &str) -> Result<RunOutcome> {
    let started = Instant::now();
    let backends = Backends::new(config)?;
    let pred_dir = config.output_dir.join("predictions");
    let failed_dir = config.output_dir.join("failed");
    ensure_dir(&pred_dir)?;

    let results = run_items(records, config, |i, rec| {
        if rec.task == Task::Ovss {
            return Err(Error::InvalidArgument("ovss record in a refer run".into()));
        }
        let question = rec.question.as_deref().expect("validated on load");
        let image = read_rgb(&rec.image)?;
        let gt = read_mask(&rec.gt_mask)?;
        if gt.dims() != image.dimensions() {
            return Err(Error::dims(image.dimensions(), gt.dims()));
        }
        let raw = backends.suggester(&gt).suggest(&image, question, config.clicks_max)?;
        let parsed = parse_clicks(&raw, config.click_format).and_then(|c| {
            if config.strict_clicks {
                c.check_budget(config.clicks_max)?;
            }
            c.check_bounds(image.width(), image.height())?;
            Ok(c)
        });
        let clicks = match parsed {
            Ok(c) => c,
            Err(e) => {
                ensure_dir(&failed_dir)?;
                let path = failed_dir.join(format!("{i:05}_{}.txt", stem(&rec.image)));
                std::fs::write(&path, &raw).map_err(|e| Error::file(&path, e))?;
                return Err(e);
            }
        };
        let mask = backends.segmenter(&gt).segment(&image, &clicks)?;
        Ok((mask, gt))
    })?;

    let mut tally = Tally::new();
    // group key -> (first index, masks, gt)
    let mut groups: Vec<(String, usize, Vec<BinaryMask>, BinaryMask)> = Vec::new();
    for (i, (rec, r)) in records.iter().zip(results).enumerate() {
        match r {
            Ok((mask, gt)) => {
                let key = rec.group.clone().map(|g| format!("g:{g}")).unwrap_or_else(|| format!("i:{i}"));
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.2.push(mask),
                    None => groups.push((key, i, vec![mask], gt)),
                }
            }
            Err(e) => tally.record(i, rec, &e),
        }
    }

    let mut accs = Vec::new();
    for (_, first, masks, gt) in groups {
        let rec = &records[first];
        let outcome = voted(&masks, config.vote_ties_foreground).and_then(|pred| {
            write_mask(pred_dir.join(format!("{}.png", stem(&rec.image))), &pred)?;
            let cm = accumulate(&ConfusionMatrix::new(2), &binary_labels(&gt), &binary_labels(&pred))?;
            push_dataset(&mut accs, dataset_name(rec, default_dataset), rec.task, &binary_names(), Some(1), &cm)
        });
        if let Err(e) = outcome {
            tally.record(first, rec, &e);
        }
    }
    let providers = backends.provenance(&[Capability::ClickSuggest, Capability::PromptableSegment]);
    Ok(finish("refer", into_reports(accs)?, config, providers, tally, records.len(), started))
}

fn voted(masks: &[BinaryMask], ties_foreground: bool) -> Result<BinaryMask> {
    if masks.len() == 1 {
        return Ok(masks[0].clone());
    }
    crate::clicks::ensemble_vote_with(masks, ties_foreground)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickgenSummary {
    pub records: usize,
    pub skipped: Vec<ItemIssue>,
    pub mean_clicks: Option<f64>,
    pub mean_final_iou: Option<f64>,
    pub max_steps: usize,
}

fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Converts every record's ground-truth mask into a click sequence and writes
/// one JSON line per record to `out`, in manifest order.
pub fn cmd_clickgen(config: &RunConfig, records: &[ManifestRecord], out: &Path) -> Result<(ClickgenSummary, i32)> {
    let backends = Backends::new(config)?;
    let params = config.click_params();
    let results = run_items(records, config, |i, rec| {
        let gt = read_mask(&rec.gt_mask)?;
        if gt.is_empty() {
            return Err(Error::Empty("ground-truth mask has no foreground"));
        }
        let image = read_rgb(&rec.image)?;
        if gt.dims() != image.dimensions() {
            return Err(Error::dims(image.dimensions(), gt.dims()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed(config.seed, i));
        let (clicks, trace) = generate_click_sequence(&image, &gt, &*backends.segmenter(&gt), &params, &mut rng)?;
        let mut record = ClickExportRecord::new(
            rec.image.display().to_string(),
            rec.question.clone().unwrap_or_default(),
            &clicks,
            &trace,
        );
        record.gt_mask = Some(rec.gt_mask.display().to_string());
        Ok(record)
    })?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let file = std::fs::File::create(out).map_err(|e| Error::file(out, e))?;
    let mut writer = std::io::BufWriter::new(file);
    let mut tally = Tally::new();
    let mut done = Vec::new();
    for (i, (rec, r)) in records.iter().zip(results).enumerate() {
        match r {
            Ok(record) => {
                serde_json::to_writer(&mut writer, &record)?;
                writer.write_all(b"\n")?;
                done.push(record);
            }
            Err(e) => tally.record(i, rec, &e),
        }
    }
    writer.flush()?;

    let n = done.len() as f64;
    let summary = ClickgenSummary {
        records: done.len(),
        mean_clicks: (!done.is_empty()).then(|| done.iter().map(|r| r.steps as f64).sum::<f64>() / n),
        mean_final_iou: (!done.is_empty()).then(|| crate::eval::round4(done.iter().map(|r| r.final_iou).sum::<f64>() / n)),
        max_steps: done.iter().map(|r| r.steps).max().unwrap_or(0),
        skipped: tally.failures.clone(),
    };
    let code = if config.fail_fast && !tally.failures.is_empty() { 1 } else { 0 };
    Ok((summary, code))
}

/// Scores saved predictions (`<predictions>/<image stem>.png`) against the
/// manifest's ground truth.
pub fn cmd_eval(config: &RunConfig, records: &[ManifestRecord], predictions: &Path, default_dataset: &str) -> Result<RunOutcome> {
    let started = Instant::now();
    let results = run_items(records, config, |_, rec| {
        let pred_path: PathBuf = predictions.join(format!("{}.png", stem(&rec.image)));
        match rec.task {
            Task::Ovss => {
                let prompts = ClassPrompts::load(rec.classes.as_ref().expect("validated on load"))?;
                let m = prompts.len() as u32;
                let gt = read_label_map(&rec.gt_mask, m, prompts.background())?;
                let pred = read_label_map(&pred_path, m, prompts.background())?;
                let fg = binary_foreground(&prompts);
                Ok((prompts.names().to_vec(), fg, accumulate(&ConfusionMatrix::new(m as usize), &gt, &pred)?))
            }
            Task::Refer | Task::Reason => {
                let gt = binary_labels(&read_mask(&rec.gt_mask)?);
                let pred = binary_labels(&read_mask(&pred_path)?);
                Ok((binary_names(), Some(1), accumulate(&ConfusionMatrix::new(2), &gt, &pred)?))
            }
        }
    })?;
    let mut tally = Tally::new();
    let mut accs = Vec::new();
    for (i, (rec, r)) in records.iter().zip(results).enumerate() {
        let merged = r.and_then(|(names, fg, cm)| push_dataset(&mut accs, dataset_name(rec, default_dataset), rec.task, &names, fg, &cm));
        if let Err(e) = merged {
            tally.record(i, rec, &e);
        }
    }
    Ok(finish("eval", into_reports(accs)?, config, Vec::new(), tally, records.len(), started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::oracle::{make_scene, SceneSpec};

    #[test]
    fn windowed_probabilities_reproduce_indicators() {
        let scene = make_scene(&SceneSpec::random(4, 96, 64, 3, 3)).unwrap();
        let provider = OracleProbability::new(scene.gt.clone(), 0.0, 0);
        let config = RunConfig::default();
        let names: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        let maps = probability_for_image(&scene.image, &names, &provider, &config).unwrap();
        assert_eq!(maps.len(), 3);
        assert_eq!(maps[0].dims(), (96, 64));
        // 96 -> 448 -> 96 nearest round trip lands on the source pixels
        let labels = pixel_argmax(&maps, &ClassPrompts::new(names, 0).unwrap()).unwrap();
        assert_eq!(labels, scene.gt);
    }

    #[test]
    fn tiled_proposals_match_untiled_when_no_shape_crosses() {
        use crate::providers::oracle::{Geometry, Shape};
        let spec = SceneSpec {
            width: 40,
            height: 20,
            class_count: 3,
            background: 0,
            shapes: vec![
                Shape { class: 1, geometry: Geometry::Rect { x: 2, y: 2, w: 10, h: 8 } },
                Shape { class: 2, geometry: Geometry::Disk { cx: 30, cy: 10, r: 5 } },
            ],
            seed: 1,
            noise: 0.0,
            distractor_count: 0,
        };
        let scene = make_scene(&spec).unwrap();
        let provider = OracleProposals::new(scene.gt.clone(), true, 0, 0);
        let whole = proposals_for_image(&scene.image, &provider, &RunConfig::default()).unwrap();
        let tiled_cfg = RunConfig { tile_cap: 20, ..RunConfig::default() };
        let tiled = proposals_for_image(&scene.image, &provider, &tiled_cfg).unwrap();
        let mut a: Vec<_> = whole.proposals().to_vec();
        let mut b: Vec<_> = tiled.proposals().to_vec();
        a.sort_by_key(|m| m.bounding_rect().map(|r| (r.y, r.x)));
        b.sort_by_key(|m| m.bounding_rect().map(|r| (r.y, r.x)));
        assert_eq!(a, b);
    }
}
