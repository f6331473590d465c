//! In-memory datasets, epoch-wise batching and parsing of `list_attr`-style
//! attribute files.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::{LabelSchema, LabelVector};
use crate::synth::DatasetRecord;
use crate::tensor::Tensor;

/// Records sharing one schema and one image size.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: LabelSchema,
    pub height: usize,
    pub width: usize,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(schema: LabelSchema, records: Vec<DatasetRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        let s = first.image.shape().to_vec();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::Dataset(format!("record {} has image shape {s:?}, expected [3,H,W]", first.id)));
        }
        for r in &records {
            if r.image.shape() != s.as_slice() {
                return Err(Error::Dataset(format!("record {} has image shape {:?}, expected {s:?}", r.id, r.image.shape())));
            }
            if !r.image.all_finite() {
                return Err(Error::Dataset(format!("record {} has non-finite pixels", r.id)));
            }
            if !schema.is_complete(&r.label)? {
                return Err(Error::Dataset(format!("record {} has an incomplete label {}", r.id, r.label)));
            }
        }
        Ok(Self { schema, height: s[1], width: s[2], records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First `n` records and the rest.
    pub fn split(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Dataset(format!("cannot split {} records at {n}", self.len())));
        }
        let a = Dataset { records: self.records[..n].to_vec(), ..self.clone_empty() };
        let b = Dataset { records: self.records[n..].to_vec(), ..self.clone_empty() };
        Ok((a, b))
    }

    fn clone_empty(&self) -> Dataset {
        Dataset { schema: self.schema.clone(), height: self.height, width: self.width, records: Vec::new() }
    }

    /// Stacks the given records into `[B, 3, H, W]` plus their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let imgs: Vec<&Tensor<f32>> = indices.iter().map(|&i| &self.records[i].image).collect();
        let flat = Tensor::stack_rows(&imgs)?;
        let images = flat.reshape(&[indices.len(), 3, self.height, self.width])?;
        let labels = indices.iter().map(|&i| self.records[i].label.clone()).collect();
        Ok(Batch { images, labels })
    }
}

/// Images `[B, 3, H, W]` with their complete labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<LabelVector>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Endless epoch-wise shuffled index batches; the short remainder of each
/// epoch is dropped.
#[derive(Clone, Debug)]
pub struct BatchIterator {
    len: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, shuffle_seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::Dataset("dataset is empty".into()));
        }
        if batch_size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
        }
        if batch_size > len {
            return Err(Error::Dataset(format!("batch size {batch_size} exceeds dataset size {len}")));
        }
        let mut it = Self {
            len,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
            order: (0..len).collect(),
            cursor: 0,
            epoch: 0,
        };
        it.order.shuffle(&mut it.rng);
        Ok(it)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len / self.batch_size
    }

    /// Completed epochs so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Fractional progress in epochs.
    pub fn progress(&self) -> f64 {
        self.epoch as f64 + (self.cursor / self.batch_size) as f64 / self.batches_per_epoch() as f64
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.len {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let out = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        out
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_indices())
    }
}

/// Maps each value of each schema group to an attribute-file column.
/// `"Black_Hair"` selects the value when the column is `1`; `"!Male"` when it
/// is `-1`.
pub type GroupSpec = BTreeMap<String, BTreeMap<String, String>>;

/// Labels parsed from an attribute file.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedAttributes {
    /// `(file name, complete label)` in file order.
    pub rows: Vec<(String, LabelVector)>,
    /// Rows where a group matched more than one value.
    pub contradictory: usize,
    /// Rows where a group matched no value.
    pub unmatched: usize,
}

impl ParsedAttributes {
    pub fn skipped(&self) -> usize {
        self.contradictory + self.unmatched
    }
}

/// Parses a `list_attr` file: an optional leading count line, a header of
/// column names, then `file v1 v2 ...` rows with `±1` values.
pub fn parse_attribute_file(text: &str, schema: &LabelSchema, spec: &GroupSpec) -> Result<ParsedAttributes> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut header = lines.next().ok_or_else(|| Error::Dataset("attribute file is empty".into()))?;
    if header.trim().parse::<usize>().is_ok() {
        header = lines.next().ok_or_else(|| Error::Dataset("attribute file has no header".into()))?;
    }
    let columns: Vec<&str> = header.split_whitespace().collect();
    let col_index: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut rules: Vec<Vec<(usize, bool)>> = Vec::new();
    for g in schema.groups() {
        let map = spec.get(&g.name).ok_or_else(|| Error::Dataset(format!("group spec has no entry for {}", g.name)))?;
        let mut per_value = Vec::new();
        for v in &g.values {
            let rule = map.get(v).ok_or_else(|| Error::Dataset(format!("group spec has no column for {}={v}", g.name)))?;
            let (col, positive) = match rule.strip_prefix('!') {
                Some(c) => (c, false),
                None => (rule.as_str(), true),
            };
            let idx = *col_index.get(col).ok_or_else(|| Error::Dataset(format!("unknown attribute column {col}")))?;
            per_value.push((idx, positive));
        }
        rules.push(per_value);
    }

    let mut out = ParsedAttributes { rows: Vec::new(), contradictory: 0, unmatched: 0 };
    for (n, line) in lines.enumerate() {
        let mut fields = line.split_whitespace();
        let name = fields.next().ok_or_else(|| Error::Dataset(format!("row {} is empty", n + 1)))?;
        let vals: Vec<i8> = fields
            .map(|f| match f {
                "1" | "+1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(Error::Dataset(format!("row {name}: attribute value {other} is not ±1"))),
            })
            .collect::<Result<_>>()?;
        if vals.len() != columns.len() {
            return Err(Error::Dataset(format!("row {name} has {} values for {} columns", vals.len(), columns.len())));
        }
        let mut picks = Vec::with_capacity(rules.len());
        let mut bad = None;
        for per_value in &rules {
            let hits: Vec<usize> = per_value
                .iter()
                .enumerate()
                .filter(|(_, (c, pos))| (vals[*c] == 1) == *pos)
                .map(|(i, _)| i)
                .collect();
            match hits.len() {
                1 => picks.push(Some(hits[0])),
                0 => bad = bad.or(Some(false)),
                _ => bad = Some(true),
            }
        }
        match bad {
            Some(true) => out.contradictory += 1,
            Some(false) => out.unmatched += 1,
            None => out.rows.push((name.to_string(), schema.from_indices(&picks)?)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn celeba() -> (LabelSchema, GroupSpec) {
        let schema = LabelSchema::new([
            ("hair", alloc::vec!["black", "blond", "brown"]),
            ("gender", alloc::vec!["male", "female"]),
            ("age", alloc::vec!["young", "old"]),
        ])
        .unwrap();
        let mut spec = GroupSpec::new();
        let hair = [("black", "Black_Hair"), ("blond", "Blond_Hair"), ("brown", "Brown_Hair")];
        spec.insert("hair".into(), hair.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
        let gender = [("male", "Male"), ("female", "!Male")];
        spec.insert("gender".into(), gender.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
        let age = [("young", "Young"), ("old", "!Young")];
        spec.insert("age".into(), age.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
        (schema, spec)
    }

    #[test]
    fn parses_celeba_rows() {
        let (schema, spec) = celeba();
        let text = "3\nBlack_Hair Blond_Hair Brown_Hair Male Young\n\
                    img1.jpg 1 -1 -1 1 1\n\
                    img2.jpg 1 1 -1 1 1\n\
                    img3.jpg -1 -1 -1 -1 -1\n";
        let p = parse_attribute_file(text, &schema, &spec).unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].1.to_string(), "1001010");
        assert_eq!((p.contradictory, p.unmatched), (1, 1));
    }

    #[test]
    fn unknown_column_is_an_error() {
        let (schema, mut spec) = celeba();
        spec.get_mut("hair").unwrap().insert("black".into(), "Raven".into());
        let text = "Black_Hair Blond_Hair Brown_Hair Male Young\n";
        assert!(matches!(parse_attribute_file(text, &schema, &spec), Err(Error::Dataset(_))));
    }

    #[test]
    fn batches_drop_remainder() {
        let mut it = BatchIterator::new(100, 32, 4).unwrap();
        assert_eq!(it.batches_per_epoch(), 3);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| it.next_indices()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 96);
        assert_eq!(it.epoch(), 0);
        it.next_indices();
        assert_eq!(it.epoch(), 1);
        let a: Vec<Vec<usize>> = BatchIterator::new(100, 32, 4).unwrap().take(5).collect();
        let b: Vec<Vec<usize>> = BatchIterator::new(100, 32, 4).unwrap().take(5).collect();
        assert_eq!(a, b);
        assert!(BatchIterator::new(0, 2, 0).is_err());
        assert!(BatchIterator::new(10, 1, 0).is_err());
    }
}
