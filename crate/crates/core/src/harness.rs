//! Experiment driver: attack, compress, decode and classify over a grid of
//! attacks and rate settings, then aggregate into accuracy cells.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{attack, AttackConfig, AttackKind};
use crate::dataset::{desk_dataset, Dataset};
use crate::error::{Error, Result};
use crate::imagecore::{psnr, write_pnm, Decibels, Image};
use crate::model::{train, Model, TrainConfig};
use crate::ratecontrol::{
    compress_max, compress_to_psnr_dct, truncate_max, truncate_to_psnr, Codec, CompressionResult,
    RateTarget, WaveletConfig,
};

pub const DEFAULT_TARGETS: [f64; 4] = [23.0, 25.0, 28.0, 31.0];

/// Where images come from: a dataset directory or the generated desk set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Dir(PathBuf),
    Desk { seed: u64, per_class: usize },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Dir(p) => Dataset::load(p),
            DataSource::Desk { seed, per_class } => Ok(desk_dataset(*seed, *per_class)),
        }
    }
}

pub fn default_attacks() -> Vec<AttackConfig> {
    vec![
        AttackConfig::fgsm(20.0),
        AttackConfig::fgsm(10.0),
        AttackConfig::fgsm(5.0),
        AttackConfig::bim(15.0),
    ]
}

fn default_codecs() -> Vec<Codec> {
    vec![Codec::Dct, Codec::Wavelet]
}

fn default_targets() -> Vec<f64> {
    DEFAULT_TARGETS.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    /// Evaluation images.
    pub dataset: DataSource,
    /// Pre-trained model; when absent one model is trained per seed.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Training images, required when `model` is absent.
    #[serde(default)]
    pub train_data: Option<DataSource>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackConfig>,
    #[serde(default = "default_codecs")]
    pub codecs: Vec<Codec>,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default = "yes")]
    pub include_max_compression: bool,
    #[serde(default = "yes")]
    pub include_uncompressed_baseline: bool,
    /// Measure PSNR against the clean image instead of the adversarial one.
    #[serde(default)]
    pub clean_reference: bool,
    #[serde(default)]
    pub wavelet: WaveletConfig,
    /// Evaluate only the first `limit` images.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentGrid {
    pub fn new(dataset: DataSource) -> Self {
        ExperimentGrid {
            dataset,
            model: None,
            train_data: None,
            train: TrainConfig::default(),
            seeds: default_seeds(),
            attacks: default_attacks(),
            codecs: default_codecs(),
            targets: default_targets(),
            include_max_compression: true,
            include_uncompressed_baseline: true,
            clean_reference: false,
            wavelet: WaveletConfig::default(),
            limit: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: ExperimentGrid = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(Error::Parameter("no attacks configured".into()));
        }
        if self.codecs.is_empty() {
            return Err(Error::Parameter("no codecs configured".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("no seeds configured".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Parameter(format!("invalid PSNR target {t}")));
        }
        if self.model.is_none() && self.train_data.is_none() {
            return Err(Error::Parameter("need a model or training data".into()));
        }
        for a in &self.attacks {
            a.validate()?;
        }
        Ok(())
    }

    /// Every cell of one run, in report order: per attack, the uncompressed
    /// row, then per codec the targets followed by maximum compression.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for a in &self.attacks {
            if self.include_uncompressed_baseline {
                keys.push(CellKey {
                    attack: *a,
                    codec: None,
                    rate: Rate::None,
                });
            }
            for &c in &self.codecs {
                for &t in &self.targets {
                    keys.push(CellKey {
                        attack: *a,
                        codec: Some(c),
                        rate: Rate::Target(t),
                    });
                }
                if self.include_max_compression {
                    keys.push(CellKey {
                        attack: *a,
                        codec: Some(c),
                        rate: Rate::Max,
                    });
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rate {
    None,
    Target(f64),
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub attack: AttackConfig,
    /// `None` for the uncompressed adversarial images.
    pub codec: Option<Codec>,
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    #[serde(flatten)]
    pub key: CellKey,
    /// `None` when every image was excluded.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub count: usize,
    /// Images dropped because their target was infeasible.
    pub excluded: usize,
    /// Mean achieved PSNR over finite values.
    pub mean_psnr: Option<f64>,
    pub mean_bytes: Option<f64>,
    pub exact_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub model_hash: String,
    pub clean_accuracy: f64,
    pub cells: Vec<AccuracyCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub dataset_hash: String,
    pub image_count: usize,
    pub seeds: Vec<u64>,
    pub clean_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub runs: Vec<RunReport>,
    /// Per-cell medians across runs.
    pub summary: Vec<AccuracyCell>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cell(
        &self,
        attack: &AttackConfig,
        codec: Option<Codec>,
        rate: Rate,
    ) -> Option<&AccuracyCell> {
        self.summary
            .iter()
            .find(|c| c.key.attack == *attack && c.key.codec == codec && c.key.rate == rate)
    }
}

/// Fraction of argmax-correct predictions on 8-bit versions of `images`.
pub fn evaluate_accuracy(model: &Model, images: &[Image], labels: &[usize]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Parameter("accuracy of an empty set".into()));
    }
    if images.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} images, {} labels",
            images.len(),
            labels.len()
        )));
    }
    let correct: usize = images
        .par_iter()
        .zip(labels)
        .map(|(img, &l)| model.predict(&img.quantized()).map(|p| usize::from(p == l)))
        .sum::<Result<usize>>()?;
    Ok(correct as f64 / images.len() as f64)
}

/// One image's classification in one cell.
#[derive(Debug, Clone)]
struct Classified {
    correct: bool,
    psnr: Option<Decibels>,
    bytes: Option<usize>,
    exact_hit: Option<bool>,
}

/// `None` when the image was excluded from the cell.
type Outcome = Option<Classified>;

/// Compressed version of `adv` for one cell, or `None` when the target is
/// infeasible. `stream` caches the wavelet encode across targets.
fn compress_cell(
    key: &CellKey,
    adv: &Image,
    clean: &Image,
    grid: &ExperimentGrid,
    stream: &mut Option<crate::wavelet_codec::EmbeddedStream>,
) -> Result<Option<CompressionResult>> {
    let reference = if grid.clean_reference { clean } else { adv };
    let Some(codec) = key.codec else {
        return Ok(None);
    };
    let result = match (codec, key.rate) {
        (_, Rate::None) => return Err(Error::Invariant("compressed cell without rate".into())),
        (Codec::Dct, Rate::Max) => compress_max(adv, Codec::Dct, Some(reference), &grid.wavelet),
        (Codec::Dct, Rate::Target(t)) => {
            compress_to_psnr_dct(adv, &RateTarget::new(t)?.with_reference(reference))
        }
        (Codec::Wavelet, rate) => {
            if stream.is_none() {
                *stream = Some(grid.wavelet.encode(adv)?);
            }
            let s = stream.as_ref().expect("just encoded");
            match rate {
                Rate::Target(t) => {
                    truncate_to_psnr(s, adv, &RateTarget::new(t)?.with_reference(reference))
                }
                _ => truncate_max(s, reference),
            }
        }
    };
    result.map(Some)
}

/// Outcomes of every cell for one image, in `keys` order.
fn image_outcomes(
    model: &Model,
    clean: &Image,
    label: usize,
    keys: &[CellKey],
    grid: &ExperimentGrid,
) -> Result<Vec<Outcome>> {
    let mut out = Vec::with_capacity(keys.len());
    let mut current: Option<(
        AttackConfig,
        Image,
        Option<crate::wavelet_codec::EmbeddedStream>,
    )> = None;
    for key in keys {
        if current.as_ref().is_none_or(|c| c.0 != key.attack) {
            current = Some((key.attack, attack(model, clean, label, &key.attack)?, None));
        }
        let (_, adv, stream) = current.as_mut().expect("set above");
        if key.codec.is_none() {
            out.push(Some(Classified {
                correct: model.predict(adv)? == label,
                psnr: None,
                bytes: None,
                exact_hit: None,
            }));
            continue;
        }
        out.push(match compress_cell(key, adv, clean, grid, stream) {
            Ok(Some(r)) => Some(Classified {
                correct: model.predict(&r.decoded.quantized())? == label,
                psnr: Some(r.achieved_db),
                bytes: Some(r.byte_size),
                exact_hit: Some(r.exact_hit),
            }),
            Ok(None) => return Err(Error::Invariant("uncompressed cell in codec path".into())),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(key: CellKey, outcomes: &[&Outcome]) -> AccuracyCell {
    let classified: Vec<&Classified> = outcomes.iter().filter_map(|o| o.as_ref()).collect();
    let count = classified.len();
    let correct = classified.iter().filter(|c| c.correct).count();
    AccuracyCell {
        key,
        accuracy: (count > 0).then(|| correct as f64 / count as f64),
        correct,
        count,
        excluded: outcomes.len() - count,
        mean_psnr: mean(
            classified
                .iter()
                .filter_map(|c| c.psnr)
                .filter(|d| !d.is_lossless())
                .map(Decibels::value),
        ),
        mean_bytes: mean(classified.iter().filter_map(|c| c.bytes).map(|b| b as f64)),
        exact_hit_rate: mean(
            classified
                .iter()
                .filter_map(|c| c.exact_hit)
                .map(|h| f64::from(u8::from(h))),
        ),
    }
}

/// Runs every cell for one model. Images are processed in parallel and
/// merged by index.
pub fn run_model(
    model: &Model,
    data: &Dataset,
    grid: &ExperimentGrid,
    seed: u64,
) -> Result<RunReport> {
    let keys = grid.cell_keys();
    let n = grid.limit.unwrap_or(data.len()).min(data.len());
    let per_image: Vec<Vec<Outcome>> = (0..n)
        .into_par_iter()
        .map(|i| image_outcomes(model, &data.images[i], data.labels[i], &keys, grid))
        .collect::<Result<_>>()?;
    let cells = keys
        .iter()
        .enumerate()
        .map(|(k, key)| {
            let col: Vec<&Outcome> = per_image.iter().map(|o| &o[k]).collect();
            aggregate(*key, &col)
        })
        .collect();
    Ok(RunReport {
        seed,
        model_hash: model.hash(),
        clean_accuracy: evaluate_accuracy(model, &data.images[..n], &data.labels[..n])?,
        cells,
    })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Cell-wise medians across runs; counts are summed.
pub fn summarize(runs: &[RunReport]) -> Vec<AccuracyCell> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    (0..first.cells.len())
        .map(|k| {
            let cells: Vec<&AccuracyCell> = runs.iter().map(|r| &r.cells[k]).collect();
            let med = |f: fn(&AccuracyCell) -> Option<f64>| {
                median(cells.iter().filter_map(|c| f(c)).collect())
            };
            AccuracyCell {
                key: cells[0].key,
                accuracy: med(|c| c.accuracy),
                correct: cells.iter().map(|c| c.correct).sum(),
                count: cells.iter().map(|c| c.count).sum(),
                excluded: cells.iter().map(|c| c.excluded).sum(),
                mean_psnr: med(|c| c.mean_psnr),
                mean_bytes: med(|c| c.mean_bytes),
                exact_hit_rate: med(|c| c.exact_hit_rate),
            }
        })
        .collect()
}

pub fn build_report(data: &Dataset, grid: &ExperimentGrid, runs: Vec<RunReport>) -> Report {
    Report {
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_hash: data.hash(),
            image_count: grid.limit.unwrap_or(data.len()).min(data.len()),
            seeds: runs.iter().map(|r| r.seed).collect(),
            clean_reference: grid.clean_reference,
        },
        summary: summarize(&runs),
        runs,
    }
}

/// Loads everything up front (so I/O failures surface before any work),
/// then runs the grid once per seed.
pub fn run_experiment(grid: &ExperimentGrid) -> Result<Report> {
    grid.validate()?;
    let data = grid.dataset.load()?;
    let fixed = grid.model.as_ref().map(Model::load).transpose()?;
    let train_set = match (&fixed, &grid.train_data) {
        (None, Some(src)) => Some(src.load()?),
        _ => None,
    };
    let mut runs = Vec::with_capacity(grid.seeds.len());
    for &seed in &grid.seeds {
        let model = match (&fixed, &train_set) {
            (Some(m), _) => m.clone(),
            (None, Some(t)) => {
                let cfg = TrainConfig {
                    seed,
                    ..grid.train.clone()
                };
                train(t, &cfg)?.0
            }
            (None, None) => return Err(Error::Parameter("need a model or training data".into())),
        };
        runs.push(run_model(&model, &data, grid, seed)?);
    }
    Ok(build_report(&data, grid, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Rows per codec and PSNR target.
    Psnr,
    /// Rows per codec at maximum compression.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    /// Markdown with the best value of each column in bold.
    Markdown,
    MarkdownPlain,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "plain" => Ok(TableFormat::MarkdownPlain),
            _ => Err(Error::Parameter(format!("unknown table format {s:?}"))),
        }
    }
}

/// Row label of a codec in the rendered tables.
pub fn codec_label(codec: Option<Codec>) -> &'static str {
    match codec {
        Some(Codec::Dct) => "JPEG",
        Some(Codec::Wavelet) => "JPEG2000",
        None => "Uncompressed",
    }
}

fn attack_header(a: &AttackConfig) -> String {
    let kind = match a.kind {
        AttackKind::Fgsm => "FGSM",
        AttackKind::Bim => "BIM",
    };
    format!("{kind} (ε={})", a.epsilon)
}

fn unique<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Serializes the summary. Markdown rows are codec and setting, columns are
/// attacks, with the uncompressed row last; CSV lists every cell in full
/// precision. Missing values render as `NA`.
pub fn emit_table(report: &Report, kind: TableKind, format: TableFormat) -> String {
    let cells: Vec<&AccuracyCell> = report
        .summary
        .iter()
        .filter(|c| {
            matches!(
                (kind, c.key.rate),
                (_, Rate::None) | (TableKind::Psnr, Rate::Target(_)) | (TableKind::Max, Rate::Max)
            )
        })
        .collect();
    if format == TableFormat::Csv {
        return emit_csv(&cells);
    }
    let attacks = unique(cells.iter().map(|c| c.key.attack));
    let mut rows: Vec<(Option<Codec>, Rate)> = unique(
        cells
            .iter()
            .filter(|c| c.key.codec.is_some())
            .map(|c| (c.key.codec, c.key.rate)),
    );
    if cells.iter().any(|c| c.key.codec.is_none()) {
        rows.push((None, Rate::None));
    }
    let value = |row: &(Option<Codec>, Rate), a: &AttackConfig| {
        cells
            .iter()
            .find(|c| c.key.codec == row.0 && c.key.rate == row.1 && c.key.attack == *a)
            .and_then(|c| c.accuracy)
    };
    let best: Vec<Option<f64>> = attacks
        .iter()
        .map(|a| rows.iter().filter_map(|r| value(r, a)).reduce(f64::max))
        .collect();
    let mut out = String::new();
    let mut header = vec!["Codec".to_string()];
    if kind == TableKind::Psnr {
        header.push("PSNR (dB)".into());
    }
    header.extend(attacks.iter().map(attack_header));
    out += &format!("| {} |\n", header.join(" | "));
    out += &format!("|{}\n", "---|".repeat(header.len()));
    let mut previous: Option<Option<Codec>> = None;
    for row in &rows {
        let name = if previous == Some(row.0) {
            ""
        } else {
            codec_label(row.0)
        };
        previous = Some(row.0);
        let mut fields = vec![name.to_string()];
        if kind == TableKind::Psnr {
            fields.push(match row.1 {
                Rate::Target(t) => format!("{t}"),
                _ => "NA".into(),
            });
        }
        for (a, b) in attacks.iter().zip(&best) {
            fields.push(match value(row, a) {
                None => "NA".into(),
                Some(v) if format == TableFormat::Markdown && Some(v) == *b => {
                    format!("**{v:.3}**")
                }
                Some(v) => format!("{v:.3}"),
            });
        }
        out += &format!("| {} |\n", fields.join(" | "));
    }
    out
}

fn emit_csv(cells: &[&AccuracyCell]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    w.write_record([
        "codec",
        "setting",
        "attack",
        "epsilon",
        "accuracy",
        "correct",
        "count",
        "excluded",
        "mean_psnr",
        "mean_bytes",
        "exact_hit_rate",
    ])
    .expect("in-memory write");
    for c in cells {
        let setting = match c.key.rate {
            Rate::None => "NA".to_string(),
            Rate::Target(t) => t.to_string(),
            Rate::Max => "max".to_string(),
        };
        let kind = match c.key.attack.kind {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
        };
        w.write_record([
            c.key.codec.map_or("uncompressed", Codec::name).to_string(),
            setting,
            kind.to_string(),
            c.key.attack.epsilon.to_string(),
            na(c.accuracy),
            c.correct.to_string(),
            c.count.to_string(),
            c.excluded.to_string(),
            na(c.mean_psnr),
            na(c.mean_bytes),
            na(c.exact_hit_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image: String,
    pub label: usize,
    #[serde(flatten)]
    pub key: CellKey,
    pub clean: String,
    pub adversarial: String,
    pub compressed: String,
    /// PSNR of the written compressed file against the written adversarial file.
    pub psnr: Decibels,
    pub bytes: usize,
    pub predicted: usize,
}

/// Writes clean / adversarial / compressed triplets of the first `n`
/// images for every compressed cell, plus `manifest.jsonl`.
pub fn dump_samples(
    model: &Model,
    data: &Dataset,
    grid: &ExperimentGrid,
    n: usize,
    dir: impl AsRef<Path>,
) -> Result<Vec<SampleEntry>> {
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = if data.images.first().is_some_and(|i| i.channels() == 3) {
        "ppm"
    } else {
        "pgm"
    };
    let mut entries = Vec::new();
    for (k, key) in grid.cell_keys().iter().enumerate() {
        if key.codec.is_none() {
            continue;
        }
        for i in 0..n.min(data.len()) {
            let clean = &data.images[i];
            let label = data.labels[i];
            let adv = attack(model, clean, label, &key.attack)?;
            let Some(r) = (match compress_cell(key, &adv, clean, grid, &mut None) {
                Err(Error::Infeasible { .. }) => None,
                other => other?,
            }) else {
                continue;
            };
            let decoded = r.decoded.quantized();
            let stem = format!("cell{k:03}_img{i:05}");
            let names = [
                format!("{stem}_clean.{ext}"),
                format!("{stem}_adv.{ext}"),
                format!("{stem}_compressed.{ext}"),
            ];
            for (name, img) in names.iter().zip([clean, &adv, &decoded]) {
                write_pnm(dir.join(name), img)?;
            }
            let [c, a, d] = names;
            entries.push(SampleEntry {
                image: data.names[i].clone(),
                label,
                key: *key,
                clean: c,
                adversarial: a,
                compressed: d,
                psnr: psnr(&adv, &decoded)?,
                bytes: r.byte_size,
                predicted: model.predict(&decoded)?,
            });
        }
    }
    let mut manifest = String::new();
    for e in &entries {
        manifest += &serde_json::to_string(e)?;
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest).map_err(|e| Error::io(path, e))?;
    Ok(entries)
}
