//! Pipeline commands behind the `pgae` binary.
//!
//! Each command reads its inputs from disk and writes its artifacts into an
//! output directory. `cmd_pipeline` calls the same functions in sequence, so
//! a pipeline run and the equivalent manual invocations write identical
//! files.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ae::{
    latent_images, load_network, raw_latent_images, train, write_network, Network, NetworkConfig,
    TrainConfig, TrainReport, DEFAULT_HIDDEN, DEFAULT_LATENT,
};
use crate::error::{Error, Result};
use crate::image::{min_max_normalize, read_pgm, write_mask_pgm, write_pgm16};
use crate::metrics::{connected_components, evaluate, iou, load_mask, MetricReport, Normalization};
use crate::pca::{cap_components, component_image, fit_pca, project_latents, write_pca, PcaModel};
use crate::sequence::{
    load_sequence, reshape_raster, standardize, write_sequence, ThermalSequence,
};
use crate::synth::{generate, GroundTruth, SpecimenSpec};

/// At most this many component or latent images are exported as PGM.
pub const MAX_PREVIEW_IMAGES: usize = 8;

pub const ABLATION_LABEL: &str = "plain-AE ablation";
pub const GUIDED_LABEL: &str = "pca-guided";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportOptions {
    pub component_images: bool,
    pub latent_images: bool,
    pub models: bool,
    pub reports: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            component_images: true,
            latent_images: true,
            models: true,
            reports: true,
        }
    }
}

/// Settings shared by `train` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Existing TSF sequence. When absent, `pipeline` synthesizes one.
    pub input: Option<PathBuf>,
    /// Specimen for the synthesis step; the standard specimen if absent.
    pub specimen: Option<SpecimenSpec>,
    pub output: Option<PathBuf>,
    /// Number of principal components, also the latent size.
    pub d: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub network_seed: u64,
    pub train: TrainConfig,
    /// Defect and sound masks for externally supplied inputs.
    pub defect_mask: Option<PathBuf>,
    pub sound_mask: Option<PathBuf>,
    pub export: ExportOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            specimen: None,
            output: None,
            d: DEFAULT_LATENT,
            hidden: DEFAULT_HIDDEN.to_vec(),
            network_seed: 0,
            train: TrainConfig::default(),
            defect_mask: None,
            sound_mask: None,
            export: ExportOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Sets both the network initialization and the shuffling seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.network_seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidInput("hidden widths must be positive".into()));
        }
        self.train.validate()?;
        if let Some(spec) = &self.specimen {
            spec.validate()?;
        }
        for p in [&self.input, &self.defect_mask, &self.sound_mask]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::MissingFile { path: p.clone() });
            }
        }
        if self.defect_mask.is_some() != self.sound_mask.is_some() {
            return Err(Error::InvalidInput(
                "defect and sound masks must be given together".into(),
            ));
        }
        Ok(())
    }

    pub fn network_config(&self, input_len: usize, latent: usize) -> NetworkConfig {
        NetworkConfig::with_hidden(input_len, &self.hidden, latent, self.network_seed)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn load_specimen(path: &Path) -> Result<SpecimenSpec> {
    read_json(path)
}

/// Paths written by [`cmd_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutputs {
    pub sequence: PathBuf,
    pub defect_masks: Vec<PathBuf>,
    pub defect_union: PathBuf,
    pub sound_mask: PathBuf,
}

pub fn synth_outputs(out_dir: &Path, truth: &GroundTruth) -> SynthOutputs {
    let masks = out_dir.join("masks");
    SynthOutputs {
        sequence: out_dir.join("sequence.tsf"),
        defect_masks: truth
            .defects
            .iter()
            .map(|d| masks.join(format!("{}.pgm", d.label)))
            .collect(),
        defect_union: masks.join("defects.pgm"),
        sound_mask: masks.join("sound.pgm"),
    }
}

/// Renders a specimen and writes the sequence, its masks, the ground truth
/// and the specimen description that produced them.
pub fn cmd_synth(
    spec: &SpecimenSpec,
    out_dir: &Path,
) -> Result<(ThermalSequence, GroundTruth, SynthOutputs)> {
    let (seq, truth) = generate(spec)?;
    let outputs = synth_outputs(out_dir, &truth);
    create_dir(&out_dir.join("masks"))?;
    write_sequence(&seq, &outputs.sequence)?;
    for (d, path) in truth.defects.iter().zip(&outputs.defect_masks) {
        write_mask_pgm(path, &d.mask)?;
    }
    write_mask_pgm(&outputs.defect_union, &truth.defect_mask)?;
    write_mask_pgm(&outputs.sound_mask, &truth.sound_mask)?;
    let mut gt = truth.to_json()?;
    gt.push('\n');
    write_file(&out_dir.join("ground_truth.json"), gt.as_bytes())?;
    write_json(&out_dir.join("specimen.json"), spec)?;
    log::info!(
        "synthesized {}x{}x{} sequence with {} defects",
        seq.n_frames(),
        seq.height(),
        seq.width(),
        truth.defects.len()
    );
    Ok((seq, truth, outputs))
}

#[derive(Serialize)]
struct PcaSummary<'a> {
    n_frames: usize,
    n_pixels: usize,
    d: usize,
    dead_pixels: usize,
    singular_values: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
    exported_components: usize,
    model: Option<&'a str>,
}

fn image_name(prefix: &str, k: usize) -> String {
    format!("{prefix}_{k:02}.pgm")
}

/// Standardizes the sequence, fits `d` components (capped at the frame
/// count) and writes the model plus the leading component images.
pub fn cmd_pca(input: &Path, d: usize, out_dir: &Path, export: &ExportOptions) -> Result<PcaModel> {
    let seq = load_sequence(input)?;
    let m = reshape_raster(&seq);
    let (z, stats) = standardize(&m)?;
    if d == 0 {
        return Err(Error::OutOfRange {
            index: 0,
            max: seq.n_frames(),
        });
    }
    let d = cap_components(d, seq.n_frames());
    let model = fit_pca(&z, d)?;
    create_dir(out_dir)?;

    let n_images = d.min(MAX_PREVIEW_IMAGES);
    if export.component_images {
        let dir = out_dir.join("components");
        create_dir(&dir)?;
        for k in 1..=n_images {
            let img = component_image(&z, &model, k)?;
            write_pgm16(
                &dir.join(image_name("component", k)),
                &min_max_normalize(&img),
            )?;
        }
    }
    if export.models {
        write_pca(&model, &out_dir.join("model.pca"))?;
    }
    if export.reports {
        let summary = PcaSummary {
            n_frames: seq.n_frames(),
            n_pixels: z.n_pixels(),
            d,
            dead_pixels: stats.dead_pixels.len(),
            singular_values: model.singular_values().to_vec(),
            explained_variance_ratio: model.explained_variance_ratio().to_vec(),
            exported_components: if export.component_images { n_images } else { 0 },
            model: export.models.then_some("model.pca"),
        };
        write_json(&out_dir.join("summary.json"), &summary)?;
    }
    Ok(model)
}

/// Report written by [`cmd_train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub label: String,
    pub n_pixels: usize,
    pub n_frames: usize,
    pub d: usize,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub epochs: usize,
    pub report: TrainReport,
}

/// Writes normalized previews of the first latents and every raw latent
/// image as little-endian `f32`, component-major `(d, H, W)`.
fn export_latents(net: &Network, z: &crate::sequence::PixelMatrix, out_dir: &Path) -> Result<()> {
    let dir = out_dir.join("latents");
    create_dir(&dir)?;
    let raw = raw_latent_images(net, z)?;
    for (k, img) in raw.iter().take(MAX_PREVIEW_IMAGES).enumerate() {
        write_pgm16(
            &dir.join(image_name("latent", k + 1)),
            &min_max_normalize(img),
        )?;
    }
    let mut bytes = Vec::with_capacity(raw.len() * z.n_pixels() * 4);
    for img in &raw {
        for &v in img.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_file(&out_dir.join("latents.f32"), &bytes)?;
    let (h, w) = z.image_shape();
    write_json(
        &out_dir.join("latents.json"),
        &serde_json::json!({
            "file": "latents.f32",
            "dtype": "f32le",
            "shape": [raw.len(), h, w],
        }),
    )
}

/// Fits PCA targets for the sequence, trains the autoencoder against them
/// and writes the model, latent images and a training report.
pub fn cmd_train(
    input: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<(Network, TrainSummary)> {
    cfg.validate()?;
    let seq = load_sequence(input)?;
    let m = reshape_raster(&seq);
    let (z, _) = standardize(&m)?;
    let d = cap_components(cfg.d, seq.n_frames());
    let model = fit_pca(&z, d)?;
    let targets = project_latents(&z, &model)?;
    let net_cfg = cfg.network_config(seq.n_frames(), d);
    let label = if cfg.train.alpha == 0.0 {
        ABLATION_LABEL
    } else {
        GUIDED_LABEL
    };
    log::info!(
        "training {label} run: {} pixels, d = {d}, alpha = {}",
        z.n_pixels(),
        cfg.train.alpha
    );
    let (net, report) = train(&z, targets.view(), &net_cfg, &cfg.train)?;
    log::info!(
        "finished after {} epochs in {:.2} s, mean cosine {:.4}",
        report.epochs(),
        report.wall_clock_seconds,
        report.final_mean_cosine
    );

    create_dir(out_dir)?;
    if cfg.export.models {
        write_network(&net, &out_dir.join("model.pgae"))?;
    }
    if cfg.export.latent_images {
        export_latents(&net, &z, out_dir)?;
    }
    let summary = TrainSummary {
        label: label.to_string(),
        n_pixels: z.n_pixels(),
        n_frames: z.n_frames(),
        d,
        network: net_cfg,
        train: cfg.train.clone(),
        epochs: report.epochs(),
        report,
    };
    if cfg.export.reports {
        write_json(&out_dir.join("report.json"), &summary)?;
    }
    Ok((net, summary))
}

/// Encodes a sequence with a trained model and writes its latent images.
pub fn cmd_encode(input: &Path, model: &Path, out_dir: &Path) -> Result<Vec<Array2<f64>>> {
    let net = load_network(model)?;
    let seq = load_sequence(input)?;
    let (z, _) = standardize(&reshape_raster(&seq))?;
    if net.input_len() != z.n_frames() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} frames, sequence has {}",
            net.input_len(),
            z.n_frames()
        )));
    }
    create_dir(out_dir)?;
    export_latents(&net, &z, out_dir)?;
    latent_images(&net, &z)
}

/// Where [`cmd_metrics`] reads the scored image from.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricImage {
    Pgm(PathBuf),
    Frame { sequence: PathBuf, index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRequest {
    pub image: MetricImage,
    /// Each file may hold several defects; each 4-connected region is
    /// scored separately.
    pub defects: Vec<PathBuf>,
    pub sound: PathBuf,
    /// Predicted and reference masks for IoU.
    pub iou: Option<(PathBuf, PathBuf)>,
    pub normalization: Normalization,
}

fn mask_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "defect".into())
}

/// Scores an image against defect and sound masks and writes the JSON
/// report to `output` when given.
pub fn cmd_metrics(req: &MetricsRequest, output: Option<&Path>) -> Result<MetricReport> {
    let img = match &req.image {
        MetricImage::Pgm(path) => read_pgm(path)?.to_unit(),
        MetricImage::Frame { sequence, index } => load_sequence(sequence)?.frame(*index)?,
    };
    let mut regions = Vec::new();
    for path in &req.defects {
        let comps = connected_components(&load_mask(path)?);
        let stem = mask_label(path);
        if comps.is_empty() {
            log::warn!("defect mask {} is empty", path.display());
        }
        let single = comps.len() == 1;
        for (i, c) in comps.into_iter().enumerate() {
            let label = if single {
                stem.clone()
            } else {
                format!("{stem}_{}", i + 1)
            };
            regions.push((label, c));
        }
    }
    let sound = load_mask(&req.sound)?;
    let mut report = evaluate(&img, &regions, &sound, req.normalization)?;
    if let Some((pred, truth)) = &req.iou {
        report.iou = Some(iou(&load_mask(pred)?, &load_mask(truth)?)?);
    }
    if let Some(out) = output {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Artifacts of a full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub pca: PcaModel,
    pub train: TrainSummary,
    pub metrics: Vec<(String, MetricReport)>,
}

/// synth, pca, train and metrics into `out/synth`, `out/pca`, `out/train`
/// and `out/metrics`.
pub fn cmd_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineRun> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let (sequence, defects, sound) = match &cfg.input {
        Some(input) => (
            input.clone(),
            cfg.defect_mask.iter().cloned().collect::<Vec<_>>(),
            cfg.sound_mask.clone(),
        ),
        None => {
            let spec = cfg.specimen.clone().unwrap_or_else(SpecimenSpec::standard);
            let (_, _, outputs) = cmd_synth(&spec, &out_dir.join("synth"))?;
            (
                outputs.sequence,
                outputs.defect_masks,
                Some(outputs.sound_mask),
            )
        }
    };

    let pca = cmd_pca(&sequence, cfg.d, &out_dir.join("pca"), &cfg.export)?;
    let (_, train) = cmd_train(&sequence, cfg, &out_dir.join("train"))?;

    let mut metrics = Vec::new();
    match sound {
        Some(sound) if !defects.is_empty() => {
            let candidates = [
                (
                    "latent_01",
                    out_dir.join("train/latents").join(image_name("latent", 1)),
                ),
                (
                    "component_01",
                    out_dir
                        .join("pca/components")
                        .join(image_name("component", 1)),
                ),
            ];
            for (name, image) in candidates {
                if !image.exists() {
                    continue;
                }
                let req = MetricsRequest {
                    image: MetricImage::Pgm(image),
                    defects: defects.clone(),
                    sound: sound.clone(),
                    iou: None,
                    normalization: Normalization::MinMax,
                };
                let out = cfg
                    .export
                    .reports
                    .then(|| out_dir.join("metrics").join(format!("{name}.json")));
                metrics.push((name.to_string(), cmd_metrics(&req, out.as_deref())?));
            }
        }
        _ => log::warn!("no masks available; skipping metrics"),
    }
    Ok(PipelineRun {
        pca,
        train,
        metrics,
    })
}
