//! Training runs on disk: `config.json`, `losses.jsonl`,
//! `checkpoints/step_N/` and `samples/step_N.png`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use dlgan_core::data::{BatchIterator, Dataset};
use dlgan_core::infer::Manipulator;
use dlgan_core::label::{LabelSchema, LabelVector};
use dlgan_core::loss::LossReport;
use dlgan_core::model::{ModelBundle, ModelConfig};
use dlgan_core::train::{TrainConfig, Trainer};
use dlgan_core::Error as CoreError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, config_hash, Manifest};
use crate::error::{AppError, Result};
use crate::grid::Grid;
use crate::imageio::{unbatch, write_bytes};

/// Training configuration file: the trainer's fields at the top level plus
/// an optional `model` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub model: Option<ModelConfig>,
}

impl RunConfig {
    /// Parses JSON, rejecting keys that name no field.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| AppError::json("run config", e))?;
        let obj = value.as_object().ok_or_else(|| AppError::Usage("run config must be a JSON object".into()))?;
        let known = serde_json::to_value(TrainConfig::default()).expect("serializes");
        let known = known.as_object().expect("object");
        if let Some(k) = obj.keys().find(|k| k.as_str() != "model" && !known.contains_key(k.as_str())) {
            return Err(AppError::Usage(format!("unknown run config field `{k}`")));
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| AppError::json("run config", e))?;
        cfg.train.validate()?;
        if let Some(m) = &cfg.model {
            m.validate()?;
        }
        Ok(cfg)
    }

    /// The model section, or desk widths sized to the data.
    pub fn model_for(&self, data: &Dataset) -> Result<ModelConfig> {
        let m = self.model.clone().unwrap_or_else(|| ModelConfig::desk(data.height, data.width));
        if (m.image_height, m.image_width) != (data.height, data.width) {
            return Err(AppError::Usage(format!(
                "model expects {}x{} images, data has {}x{}",
                m.image_height, m.image_width, data.height, data.width
            )));
        }
        Ok(m)
    }
}

/// One `losses.jsonl` line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossLine {
    pub step: usize,
    #[serde(flatten)]
    pub report: LossReport,
}

#[derive(Clone, Debug, Serialize)]
struct RunRecord<'a> {
    train: &'a TrainConfig,
    model: &'a ModelConfig,
    schema: &'a LabelSchema,
    records: usize,
    config_hash: &'a str,
}

#[derive(Clone, Debug)]
pub struct FitSummary {
    pub generator_steps: usize,
    pub final_checkpoint: PathBuf,
    pub manifest: Manifest,
    pub bundle: ModelBundle<f32>,
}

pub fn checkpoint_dir(out: &Path, step: usize) -> PathBuf {
    out.join("checkpoints").join(format!("step_{step}"))
}

/// Single-group labels, one per value of every group.
pub fn single_group_labels(schema: &LabelSchema) -> Result<Vec<LabelVector>> {
    let mut out = Vec::new();
    for (gi, g) in schema.groups().iter().enumerate() {
        for v in 0..g.values.len() {
            let mut picks = vec![None; schema.num_groups()];
            picks[gi] = Some(v);
            out.push(schema.from_indices(&picks)?);
        }
    }
    Ok(out)
}

/// A grid with one row per input: the input, then each single-group edit.
pub fn sample_grid(bundle: &ModelBundle<f32>, data: &Dataset, rows: usize) -> Result<Grid<f32>> {
    let m = Manipulator::new(bundle);
    let idx: Vec<usize> = (0..rows.min(data.len())).collect();
    let batch = data.batch(&idx)?;
    let labels = single_group_labels(&bundle.schema)?;
    let inputs = unbatch(&batch.images);
    let mut grid_rows: Vec<Vec<_>> = inputs.iter().map(|x| vec![x.clone()]).collect();
    for y in &labels {
        let out = m.label_only(&batch.images, &vec![y.clone(); idx.len()])?;
        for (row, img) in grid_rows.iter_mut().zip(unbatch(&out)) {
            row.push(img);
        }
    }
    let mut header = vec!["input".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    let mut captions = vec![header];
    captions.extend((1..idx.len()).map(|_| Vec::new()));
    Ok(Grid::new(grid_rows).with_captions(captions))
}

/// Trains `bundle` on `data` and writes the run directory `out`.
/// `progress` receives one line per generator step.
pub fn fit(
    bundle: ModelBundle<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    out: &Path,
    mut progress: impl FnMut(&LossLine),
) -> Result<FitSummary> {
    if bundle.schema != data.schema {
        return Err(CoreError::SchemaMismatch("dataset schema differs from the model's".into()).into());
    }
    std::fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let hash = config_hash(&(cfg, &bundle.config));
    let record =
        RunRecord { train: cfg, model: &bundle.config, schema: &bundle.schema, records: data.len(), config_hash: &hash };
    let text = serde_json::to_string_pretty(&record).map_err(|e| AppError::json("config", e))?;
    write_bytes(&out.join("config.json"), text.as_bytes())?;
    let lpath = out.join("losses.jsonl");
    let mut losses = std::fs::File::create(&lpath).map_err(|e| AppError::io(&lpath, e))?;

    let mut batches = BatchIterator::new(data.len(), cfg.batch_size, cfg.seed)?;
    let mut trainer = Trainer::new(bundle, cfg.clone())?;
    let planned = trainer.planned_generator_steps(batches.batches_per_epoch());
    let mut saved = BTreeSet::new();
    let mut last = None;
    for step in 1..=planned {
        let art = match trainer.iteration(data, &mut batches) {
            Ok(a) => a,
            Err(CoreError::NonFinite(msg)) => {
                let dir = out.join("checkpoints").join(format!("step_{}_halted", step - 1));
                checkpoint::save(&dir, &trainer.bundle, step - 1, &hash)?;
                return Err(AppError::Halted { message: msg, checkpoint: dir });
            }
            Err(e) => return Err(e.into()),
        };
        let line = LossLine { step, report: art.report };
        let json = serde_json::to_string(&line).map_err(|e| AppError::json("loss line", e))?;
        writeln!(losses, "{json}").map_err(|e| AppError::io(&lpath, e))?;
        progress(&line);
        let is_last = step == planned;
        if cfg.sample_every > 0 && (step % cfg.sample_every == 0 || is_last) {
            let png = sample_grid(&trainer.bundle, data, 4)?.to_png()?;
            write_bytes(&out.join("samples").join(format!("step_{step}.png")), &png)?;
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) || is_last {
            if !trainer.bundle.params.all_finite() {
                let dir = out.join("checkpoints").join(format!("step_{step}_halted"));
                checkpoint::save(&dir, &trainer.bundle, step, &hash)?;
                return Err(AppError::Halted { message: "non-finite parameters".into(), checkpoint: dir });
            }
            let dir = checkpoint_dir(out, step);
            let manifest = checkpoint::save(&dir, &trainer.bundle, step, &hash)?;
            saved.insert(step);
            last = Some((dir, manifest));
        }
    }
    losses.flush().map_err(|e| AppError::io(&lpath, e))?;
    let (final_checkpoint, manifest) = last.expect("final step always checkpoints");
    let mut bundle = trainer.bundle;
    bundle.checkpoint_id = manifest.checkpoint_id.clone();
    Ok(FitSummary { generator_steps: planned, final_checkpoint, manifest, bundle })
}

/// Fresh weights for `model` seeded by `seed`.
pub fn init_bundle(model: ModelConfig, schema: LabelSchema, seed: u64) -> Result<ModelBundle<f32>> {
    Ok(ModelBundle::new(model, schema, &mut ChaCha8Rng::seed_from_u64(seed))?)
}
