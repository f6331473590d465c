//! Dataset folders on disk.
//!
//! A synthetic folder holds `schema.json`, `labels.jsonl` (one `{id, bits}`
//! per line) and `<id>.png` for every record. An attribute folder holds
//! images plus a `list_attr`-style file mapped onto a schema by a group spec.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use dlgan_core::data::{parse_attribute_file, Dataset, GroupSpec, ParsedAttributes};
use dlgan_core::label::LabelSchema;
use dlgan_core::synth::{synth_dataset, DatasetRecord, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::imageio::{read_png, write_png};

pub const LABELS_FILE: &str = "labels.jsonl";
pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub id: String,
    pub bits: String,
}

/// Renders `n` images with `spec` and writes them to `out`.
pub fn write_synthetic(out: &Path, spec: &SynthSpec, n: usize) -> Result<Vec<DatasetRecord>> {
    spec.validate()?;
    if n == 0 {
        return Err(AppError::Usage("--n must be at least 1".into()));
    }
    let records = synth_dataset(spec, n, &mut ChaCha8Rng::seed_from_u64(spec.seed))?;
    std::fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let schema = LabelSchema::synthetic_shapes();
    let spath = out.join(SCHEMA_FILE);
    let text = serde_json::to_string_pretty(&schema).map_err(|e| AppError::json("schema", e))?;
    std::fs::write(&spath, text).map_err(|e| AppError::io(&spath, e))?;
    let lpath = out.join(LABELS_FILE);
    let mut labels = std::fs::File::create(&lpath).map_err(|e| AppError::io(&lpath, e))?;
    for r in &records {
        write_png(&out.join(format!("{}.png", r.id)), &r.image)?;
        let line = LabelLine { id: r.id.clone(), bits: r.label.to_string() };
        let json = serde_json::to_string(&line).map_err(|e| AppError::json("label line", e))?;
        writeln!(labels, "{json}").map_err(|e| AppError::io(&lpath, e))?;
    }
    Ok(records)
}

/// Reads a folder written by [`write_synthetic`] (or any folder with the
/// same layout), in `labels.jsonl` order.
pub fn load_labeled_folder(dir: &Path) -> Result<Dataset> {
    let spath = dir.join(SCHEMA_FILE);
    let text = std::fs::read_to_string(&spath).map_err(|e| AppError::io(&spath, e))?;
    let schema: LabelSchema = serde_json::from_str(&text).map_err(|e| AppError::json(spath.display().to_string(), e))?;
    let lpath = dir.join(LABELS_FILE);
    let file = std::fs::File::open(&lpath).map_err(|e| AppError::io(&lpath, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(&lpath, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LabelLine =
            serde_json::from_str(&line).map_err(|e| AppError::json(format!("{} line {}", lpath.display(), n + 1), e))?;
        let label = schema.parse_bits(&l.bits)?;
        let image = read_png(&dir.join(format!("{}.png", l.id)))?;
        records.push(DatasetRecord { id: l.id, image, label });
    }
    Ok(Dataset::new(schema, records)?)
}

/// Group spec file: groups in schema order, each value naming its column
/// (`"Col"` when the column is `1`, `"!Col"` when it is `-1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpecFile {
    pub groups: Vec<GroupSpecEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpecEntry {
    pub name: String,
    pub values: Vec<(String, String)>,
}

impl GroupSpecFile {
    pub fn schema(&self) -> Result<LabelSchema> {
        Ok(LabelSchema::new(
            self.groups.iter().map(|g| (g.name.clone(), g.values.iter().map(|(v, _)| v.clone()).collect())),
        )?)
    }

    pub fn spec(&self) -> GroupSpec {
        self.groups.iter().map(|g| (g.name.clone(), g.values.iter().cloned().collect())).collect()
    }
}

/// Reads images named by an attribute file; rows whose groups are
/// contradictory or unmatched are skipped and counted.
pub fn load_attribute_folder(
    dir: &Path,
    attribute_file: &Path,
    groups: &GroupSpecFile,
) -> Result<(Dataset, ParsedAttributes)> {
    let text = std::fs::read_to_string(attribute_file).map_err(|e| AppError::io(attribute_file, e))?;
    let schema = groups.schema()?;
    let parsed = parse_attribute_file(&text, &schema, &groups.spec())?;
    let records = parsed
        .rows
        .iter()
        .map(|(file, label)| {
            let image = read_png(&dir.join(file))?;
            let id = Path::new(file).file_stem().map_or(file.clone(), |s| s.to_string_lossy().into_owned());
            Ok(DatasetRecord { id, image, label: label.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(schema, records)?, parsed))
}
