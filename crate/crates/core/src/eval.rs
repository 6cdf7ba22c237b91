//! Confusion-matrix metrics, manifest ingestion and run reports.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::raster::LabelMap;

/// Square pixel-count matrix, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::CountMismatch {
                what: "confusion cells",
                expected: classes * classes,
                actual: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.classes..(i + 1) * self.classes].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    /// Sum of two matrices of the same size.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.classes != other.classes {
            return Err(Error::CountMismatch {
                what: "classes",
                expected: self.classes,
                actual: other.classes,
            });
        }
        Ok(Self {
            classes: self.classes,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        })
    }

    /// IoU per class; `None` for classes absent from both ground truth and
    /// prediction.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| {
                let d = self.get(i, i);
                let denom = self.row_sum(i) + self.col_sum(i) - d;
                (denom > 0).then(|| d as f64 / denom as f64)
            })
            .collect()
    }
}

/// Returns `cm` plus the per-pixel counts of one (gt, pred) pair.
pub fn accumulate(cm: &ConfusionMatrix, gt: &LabelMap, pred: &LabelMap) -> Result<ConfusionMatrix> {
    if gt.dims() != pred.dims() {
        return Err(Error::dims(gt.dims(), pred.dims()));
    }
    if gt.class_count() as usize != cm.classes || pred.class_count() as usize != cm.classes {
        return Err(Error::CountMismatch {
            what: "classes",
            expected: cm.classes,
            actual: if gt.class_count() as usize != cm.classes { gt.class_count() } else { pred.class_count() } as usize,
        });
    }
    let mut out = cm.clone();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        out.counts[g as usize * cm.classes + p as usize] += 1;
    }
    Ok(out)
}

/// Mean IoU over classes present in ground truth or prediction; `None` when
/// nothing was counted.
pub fn miou(cm: &ConfusionMatrix) -> Option<f64> {
    let present: Vec<f64> = cm.per_class_iou().into_iter().flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// IoU of one foreground class. A class absent from both sides scores 1.
pub fn fg_iou(cm: &ConfusionMatrix, fg: usize) -> Result<f64> {
    if fg >= cm.classes {
        return Err(Error::InvalidArgument(format!(
            "foreground class {fg} out of range for {} classes",
            cm.classes
        )));
    }
    Ok(cm.per_class_iou()[fg].unwrap_or(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ovss,
    Refer,
    Reason,
}

fn opt_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    Ok(match Option::<serde_json::Value>::deserialize(d)? {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other) => Some(other.to_string()),
    })
}

/// One manifest line. Relative paths resolve against the manifest's
/// directory at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub gt_mask: PathBuf,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, deserialize_with = "opt_id", skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl ManifestRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        match self.task {
            Task::Ovss if self.classes.is_none() => Err("ovss record needs \"classes\"".into()),
            Task::Refer | Task::Reason if self.question.is_none() => {
                Err(format!("{:?} record needs \"question\"", self.task).to_lowercase())
            }
            _ => Ok(()),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.image);
        join(&mut self.gt_mask);
        if let Some(c) = &mut self.classes {
            join(c);
        }
    }
}

/// Parses JSON-lines manifest text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_manifest(text: impl BufRead, base: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: lineno,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| Error::Manifest { line: lineno, message })?;
        rec.resolve(base);
        out.push(rec);
    }
    Ok(out)
}

/// Loads a manifest. Referenced files are not touched until first use.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(BufReader::new(file), base)
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub name: String,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub task: Task,
    pub items: usize,
    pub miou: Option<f64>,
    pub fg_iou: Option<f64>,
    pub per_class: Vec<ClassIou>,
}

impl DatasetReport {
    /// Summarizes a confusion matrix, rounding metrics to 4 decimals.
    pub fn from_confusion(
        name: impl Into<String>,
        task: Task,
        items: usize,
        cm: &ConfusionMatrix,
        class_names: &[String],
        fg: Option<usize>,
    ) -> Result<Self> {
        if class_names.len() != cm.classes() {
            return Err(Error::CountMismatch {
                what: "class names",
                expected: cm.classes(),
                actual: class_names.len(),
            });
        }
        let per_class = class_names
            .iter()
            .zip(cm.per_class_iou())
            .map(|(name, iou)| ClassIou {
                name: name.clone(),
                iou: iou.map(round4),
            })
            .collect();
        Ok(Self {
            name: name.into(),
            task,
            items,
            miou: miou(cm).map(round4),
            fg_iou: fg.map(|f| fg_iou(cm, f)).transpose()?.map(round4),
            per_class,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProvenance {
    pub capability: crate::providers::Capability,
    pub backend: crate::providers::Backend,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub reported_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemIssue {
    pub index: usize,
    pub image: String,
    pub reason: String,
}

/// Metric conventions, recorded so readers can audit how numbers were formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub background_in_miou: bool,
    pub absent_classes_excluded: bool,
    pub empty_vs_empty_iou: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            background_in_miou: true,
            absent_classes_excluded: true,
            empty_vs_empty_iou: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub datasets: Vec<DatasetReport>,
    pub config: serde_json::Value,
    pub providers: Vec<ProviderProvenance>,
    pub conventions: Conventions,
    pub skipped: Vec<ItemIssue>,
    pub failed: Vec<ItemIssue>,
    pub wall_clock_s: f64,
}

pub fn write_report(path: impl AsRef<Path>, report: &Report) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `dataset,class,iou` rows; absent classes have an empty iou cell.
pub fn per_class_csv(report: &Report) -> String {
    let mut out = String::from("dataset,class,iou\n");
    for d in &report.datasets {
        for c in &d.per_class {
            let iou = c.iou.map(|v| format!("{v:.4}")).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", csv_field(&d.name), csv_field(&c.name), iou));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{iou, BinaryMask};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lm(labels: Vec<u32>, w: u32, classes: u32) -> LabelMap {
        let h = labels.len() as u32 / w;
        LabelMap::new(w, h, labels, classes, 0).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let gt = lm(vec![0, 1], 2, 2);
        let cm = accumulate(&ConfusionMatrix::new(2), &gt, &gt).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(1, 1), cm.get(0, 1), cm.get(1, 0)), (1, 1, 0, 0));

        let pred = lm(vec![1, 1], 2, 2);
        let empty = ConfusionMatrix::new(2);
        let cm = accumulate(&empty, &gt, &pred).unwrap();
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(1, 1), 1);
        assert_eq!(cm.total(), 2);
        assert_eq!(empty.total(), 0);

        assert!(accumulate(&empty, &gt, &lm(vec![0, 1, 1, 0], 2, 2)).is_err());
        assert!(accumulate(&ConfusionMatrix::new(3), &gt, &gt).is_err());
    }

    #[test]
    fn accumulation_is_additive() {
        let a_gt = lm(vec![0, 1, 2, 2], 2, 3);
        let a_pr = lm(vec![0, 2, 2, 1], 2, 3);
        let b_gt = lm(vec![1, 1, 0, 2], 2, 3);
        let b_pr = lm(vec![1, 0, 0, 2], 2, 3);
        let split = accumulate(&accumulate(&ConfusionMatrix::new(3), &a_gt, &a_pr).unwrap(), &b_gt, &b_pr).unwrap();
        let cat_gt = lm([a_gt.labels(), b_gt.labels()].concat(), 2, 3);
        let cat_pr = lm([a_pr.labels(), b_pr.labels()].concat(), 2, 3);
        assert_eq!(split, accumulate(&ConfusionMatrix::new(3), &cat_gt, &cat_pr).unwrap());
    }

    #[test]
    fn metric_examples() {
        let gt = lm(vec![0, 1, 2, 2], 2, 3);
        let cm = accumulate(&ConfusionMatrix::new(3), &gt, &gt).unwrap();
        assert_eq!(miou(&cm), Some(1.0));

        // TP=4, FP=2, FN=2
        let cm = ConfusionMatrix::from_counts(2, vec![10, 2, 2, 4]).unwrap();
        assert_eq!(fg_iou(&cm, 1).unwrap(), 0.5);
        assert!(fg_iou(&cm, 2).is_err());

        let absent = ConfusionMatrix::from_counts(3, vec![5, 0, 0, 0, 5, 0, 0, 0, 0]).unwrap();
        assert_eq!(absent.per_class_iou()[2], None);
        assert_eq!(miou(&absent), Some(1.0));

        let off = ConfusionMatrix::from_counts(2, vec![0, 3, 4, 0]).unwrap();
        assert_eq!(miou(&off), Some(0.0));
        assert_eq!(miou(&ConfusionMatrix::new(2)), None);
    }

    #[test]
    fn manifest_parsing() {
        let base = Path::new("/data");
        assert!(parse_manifest("".as_bytes(), base).unwrap().is_empty());
        let text = r#"{"image": "a.png", "gt_mask": "a_gt.png", "task": "ovss", "classes": "c.txt"}

{"image": "/abs/b.png", "gt_mask": "b_gt.png", "task": "refer", "question": "the road", "group": 3}
"#;
        let recs = parse_manifest(text.as_bytes(), base).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].image, PathBuf::from("/data/a.png"));
        assert_eq!(recs[0].classes.as_deref(), Some(Path::new("/data/c.txt")));
        assert_eq!(recs[1].image, PathBuf::from("/abs/b.png"));
        assert_eq!(recs[1].group.as_deref(), Some("3"));

        let missing = "{\"image\": \"a.png\", \"task\": \"ovss\", \"classes\": \"c\"}\n";
        let ok_then_bad = format!("{}\n{missing}", text.lines().next().unwrap());
        match parse_manifest(ok_then_bad.as_bytes(), base) {
            Err(Error::Manifest { line: 2, message }) => assert!(message.contains("gt_mask")),
            other => panic!("unexpected {other:?}"),
        }
        let no_question = r#"{"image": "a", "gt_mask": "b", "task": "reason"}"#;
        assert!(matches!(parse_manifest(no_question.as_bytes(), base), Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn report_round_trip() {
        let cm = ConfusionMatrix::from_counts(2, vec![7, 1, 2, 5]).unwrap();
        let names = vec!["background".to_string(), "road".to_string()];
        let ds = DatasetReport::from_confusion("toy", Task::Ovss, 3, &cm, &names, Some(1)).unwrap();
        assert_eq!(ds.fg_iou, Some(0.625));
        assert_eq!(ds.per_class[0].iou, Some(0.7));
        let report = Report {
            command: "ovss".into(),
            datasets: vec![ds],
            config: serde_json::json!({"grid_n": 29}),
            providers: vec![],
            conventions: Conventions::default(),
            skipped: vec![],
            failed: vec![],
            wall_clock_s: 0.5,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report(&path, &report).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        assert_eq!(per_class_csv(&report), "dataset,class,iou\ntoy,background,0.7000\ntoy,road,0.6250\n");
    }

    proptest! {
        #[test]
        fn fg_iou_matches_mask_iou(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
            let density = rng.random_range(0.0..1.0);
            let a = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap();
            let b = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap();
            let to_labels = |m: &BinaryMask| lm(m.to_bools().iter().map(|&v| v as u32).collect(), w, 2);
            let cm = accumulate(&ConfusionMatrix::new(2), &to_labels(&a), &to_labels(&b)).unwrap();
            prop_assert!((fg_iou(&cm, 1).unwrap() - iou(&a, &b).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn merge_is_order_independent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parts: Vec<ConfusionMatrix> = (0..4)
                .map(|_| ConfusionMatrix::from_counts(3, (0..9).map(|_| rng.random_range(0..50)).collect()).unwrap())
                .collect();
            let fwd = parts.iter().skip(1).fold(parts[0].clone(), |a, b| a.merge(b).unwrap());
            let rev = parts.iter().rev().skip(1).fold(parts[3].clone(), |a, b| a.merge(b).unwrap());
            prop_assert_eq!(fwd, rev);
        }
    }
}
