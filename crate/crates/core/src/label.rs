//! Discrete multi-label algebra.
//!
//! A schema is an ordered list of mutually exclusive attribute groups. A
//! label vector concatenates one one-hot segment per group, group-major in
//! schema order; an all-zero segment means the group is missing. From a
//! complete ground-truth label we derive the empty label (all missing), the
//! matching labels (any subset of ground-truth groups kept) and the random
//! labels (every group free or missing). `fill` completes a label's missing
//! groups from a complete one.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Group name → value name, or `None` for a missing group.
pub type Assignment = BTreeMap<String, Option<String>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelGroup {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    groups: Vec<LabelGroup>,
}

/// Ordered attribute groups and their bit layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct LabelSchema {
    groups: Vec<LabelGroup>,
    offsets: Vec<usize>,
    total_bits: usize,
    id: u64,
}

impl TryFrom<SchemaDoc> for LabelSchema {
    type Error = Error;

    fn try_from(doc: SchemaDoc) -> Result<Self> {
        Self::from_groups(doc.groups)
    }
}

impl From<LabelSchema> for SchemaDoc {
    fn from(s: LabelSchema) -> Self {
        SchemaDoc { groups: s.groups }
    }
}

/// The five kinds of label derived from an image's ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    GroundTruth,
    Empty,
    Matching,
    Random,
    Filled,
}

/// FNV-1a over the schema's names; identifies the layout a vector belongs to.
fn fingerprint(groups: &[LabelGroup]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    for g in groups {
        eat(g.name.as_bytes());
        for v in &g.values {
            eat(v.as_bytes());
        }
        eat(b"|");
    }
    h
}

impl LabelSchema {
    /// Builds a schema from `(group, values)` pairs; bit order follows input order.
    pub fn new<G, V>(groups: impl IntoIterator<Item = (G, Vec<V>)>) -> Result<Self>
    where
        G: Into<String>,
        V: Into<String>,
    {
        let groups = groups
            .into_iter()
            .map(|(name, values)| LabelGroup {
                name: name.into(),
                values: values.into_iter().map(Into::into).collect(),
            })
            .collect();
        Self::from_groups(groups)
    }

    pub fn from_groups(groups: Vec<LabelGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Schema("schema has no groups".into()));
        }
        let mut offsets = Vec::with_capacity(groups.len());
        let mut total = 0;
        for (i, g) in groups.iter().enumerate() {
            if g.name.is_empty() {
                return Err(Error::Schema(alloc::format!("group {i} has an empty name")));
            }
            if groups[..i].iter().any(|o| o.name == g.name) {
                return Err(Error::Schema(alloc::format!("duplicate group `{}`", g.name)));
            }
            if g.values.len() < 2 {
                return Err(Error::Schema(alloc::format!(
                    "group `{}` needs at least two values, has {}",
                    g.name,
                    g.values.len()
                )));
            }
            for (j, v) in g.values.iter().enumerate() {
                if g.values[..j].contains(v) {
                    return Err(Error::Schema(alloc::format!(
                        "duplicate value `{v}` in group `{}`",
                        g.name
                    )));
                }
            }
            offsets.push(total);
            total += g.values.len();
        }
        let id = fingerprint(&groups);
        Ok(Self { groups, offsets, total_bits: total, id })
    }

    /// The three-group color/size/shape schema of the synthetic dataset.
    pub fn synthetic_shapes() -> Self {
        Self::new([
            ("color", vec!["red", "green", "blue"]),
            ("size", vec!["small", "large"]),
            ("shape", vec!["circle", "square"]),
        ])
        .expect("static schema")
    }

    pub fn groups(&self) -> &[LabelGroup] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Bit range `[start, start + len)` of group `g`.
    pub fn group_range(&self, g: usize) -> (usize, usize) {
        (self.offsets[g], self.groups[g].values.len())
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    fn check(&self, v: &LabelVector) -> Result<()> {
        if v.schema_id != self.id || v.bits.len() != self.total_bits {
            return Err(Error::SchemaMismatch(alloc::format!(
                "label of {} bits does not belong to this {}-bit schema",
                v.bits.len(),
                self.total_bits
            )));
        }
        self.group_values(v).map(|_| ())
    }

    /// Per-group value index, `None` for missing groups.
    pub fn group_values(&self, v: &LabelVector) -> Result<Vec<Option<usize>>> {
        if v.bits.len() != self.total_bits {
            return Err(Error::SchemaMismatch(alloc::format!(
                "expected {} bits, got {}",
                self.total_bits,
                v.bits.len()
            )));
        }
        self.groups
            .iter()
            .enumerate()
            .map(|(g, group)| {
                let (start, len) = self.group_range(g);
                let mut found = None;
                for (i, &b) in v.bits[start..start + len].iter().enumerate() {
                    if b != 0 {
                        if found.is_some() {
                            return Err(Error::MalformedLabel { group: group.name.clone() });
                        }
                        found = Some(i);
                    }
                }
                Ok(found)
            })
            .collect()
    }

    /// Builds a vector from per-group value indices.
    pub fn from_indices(&self, indices: &[Option<usize>]) -> Result<LabelVector> {
        if indices.len() != self.groups.len() {
            return Err(Error::Encoding(alloc::format!(
                "expected {} groups, got {}",
                self.groups.len(),
                indices.len()
            )));
        }
        let mut bits = vec![0u8; self.total_bits];
        for (g, idx) in indices.iter().enumerate() {
            if let Some(i) = idx {
                let (start, len) = self.group_range(g);
                if *i >= len {
                    return Err(Error::Encoding(alloc::format!(
                        "value index {i} out of range for group `{}`",
                        self.groups[g].name
                    )));
                }
                bits[start + i] = 1;
            }
        }
        Ok(LabelVector { bits, schema_id: self.id })
    }

    pub fn encode(&self, assignment: &Assignment) -> Result<LabelVector> {
        let mut indices = vec![None; self.groups.len()];
        for (name, value) in assignment {
            let g = self
                .group_index(name)
                .ok_or_else(|| Error::Encoding(alloc::format!("unknown group `{name}`")))?;
            if let Some(value) = value {
                let i = self.groups[g].values.iter().position(|v| v == value).ok_or_else(|| {
                    Error::Encoding(alloc::format!("unknown value `{value}` for group `{name}`"))
                })?;
                indices[g] = Some(i);
            }
        }
        self.from_indices(&indices)
    }

    pub fn decode(&self, v: &LabelVector) -> Result<Assignment> {
        self.check(v)?;
        let idx = self.group_values(v)?;
        Ok(self
            .groups
            .iter()
            .zip(idx)
            .map(|(g, i)| (g.name.clone(), i.map(|i| g.values[i].clone())))
            .collect())
    }

    /// Parses a `0`/`1` string such as `"1001010"`.
    pub fn parse_bits(&self, s: &str) -> Result<LabelVector> {
        if s.len() != self.total_bits {
            return Err(Error::Encoding(alloc::format!(
                "label string has {} characters, schema needs {}",
                s.len(),
                self.total_bits
            )));
        }
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::Encoding(alloc::format!("invalid label character `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let v = LabelVector { bits, schema_id: self.id };
        self.check(&v)?;
        Ok(v)
    }

    /// `y_0`: every group missing.
    pub fn empty(&self) -> LabelVector {
        LabelVector { bits: vec![0; self.total_bits], schema_id: self.id }
    }

    pub fn is_complete(&self, v: &LabelVector) -> Result<bool> {
        self.check(v)?;
        Ok(self.group_values(v)?.iter().all(Option::is_some))
    }

    fn require_complete(&self, v: &LabelVector) -> Result<Vec<usize>> {
        self.check(v)?;
        self.group_values(v)?
            .into_iter()
            .enumerate()
            .map(|(g, i)| i.ok_or_else(|| Error::IncompleteLabel { group: self.groups[g].name.clone() }))
            .collect()
    }

    /// True iff every non-missing group of `y` equals that group of `y_gt`.
    pub fn is_matching(&self, y: &LabelVector, y_gt: &LabelVector) -> Result<bool> {
        let gt = self.require_complete(y_gt)?;
        self.check(y)?;
        Ok(self.group_values(y)?.iter().zip(&gt).all(|(v, t)| v.is_none_or(|v| v == *t)))
    }

    /// `a ⊕ b`: groups of `a` where present, otherwise the group of `b`.
    pub fn fill(&self, a: &LabelVector, b: &LabelVector) -> Result<LabelVector> {
        let gb = self.require_complete(b)?;
        self.check(a)?;
        let ga = self.group_values(a)?;
        let merged: Vec<Option<usize>> = ga.iter().zip(&gb).map(|(x, y)| Some(x.unwrap_or(*y))).collect();
        self.from_indices(&merged)
    }

    pub fn sample_matching<R: Rng + ?Sized>(
        &self,
        y_gt: &LabelVector,
        policy: &LabelSampling,
        rng: &mut R,
    ) -> Result<LabelVector> {
        let gt = self.require_complete(y_gt)?;
        let kept: Vec<Option<usize>> =
            gt.iter().map(|&v| rng.gen_bool(policy.keep_probability).then_some(v)).collect();
        self.from_indices(&kept)
    }

    pub fn sample_random<R: Rng + ?Sized>(&self, policy: &LabelSampling, rng: &mut R) -> LabelVector {
        let idx: Vec<Option<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let n = g.values.len();
                match policy.missing_probability {
                    None => {
                        let k = rng.gen_range(0..=n);
                        (k < n).then_some(k)
                    }
                    Some(p) => {
                        if rng.gen_bool(p) {
                            None
                        } else {
                            Some(rng.gen_range(0..n))
                        }
                    }
                }
            })
            .collect();
        self.from_indices(&idx).expect("indices in range")
    }

    /// Every label of the given kind, duplicate-free, in a fixed order.
    ///
    /// Random labels are listed as an odometer over groups (first group most
    /// significant, "missing" before the values); matching labels as keep
    /// masks in binary order with the first group most significant.
    pub fn enumerate(&self, kind: LabelKind, y_gt: Option<&LabelVector>) -> Result<Vec<LabelVector>> {
        let need_gt = || -> Result<Vec<usize>> {
            let gt = y_gt.ok_or_else(|| Error::Encoding(alloc::format!("{kind:?} labels need a ground truth")))?;
            self.require_complete(gt)
        };
        match kind {
            LabelKind::GroundTruth => {
                let gt = need_gt()?;
                Ok(vec![self.from_indices(&gt.into_iter().map(Some).collect::<Vec<_>>())?])
            }
            LabelKind::Empty => Ok(vec![self.empty()]),
            LabelKind::Matching => {
                let gt = need_gt()?;
                let g = gt.len();
                (0..1usize << g)
                    .map(|mask| {
                        let idx: Vec<Option<usize>> = (0..g)
                            .map(|i| ((mask >> (g - 1 - i)) & 1 == 1).then_some(gt[i]))
                            .collect();
                        self.from_indices(&idx)
                    })
                    .collect()
            }
            LabelKind::Random => Ok(self.enumerate_random()),
            LabelKind::Filled => {
                let gt_vec = y_gt.ok_or_else(|| Error::Encoding("Filled labels need a ground truth".into()))?;
                need_gt()?;
                let mut out: Vec<LabelVector> = Vec::new();
                for r in self.enumerate_random() {
                    out.push(self.fill(&r, gt_vec)?);
                }
                Ok(out)
            }
        }
    }

    fn enumerate_random(&self) -> Vec<LabelVector> {
        let radix: Vec<usize> = self.groups.iter().map(|g| g.values.len() + 1).collect();
        let total: usize = radix.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut digits = vec![0usize; radix.len()];
        for _ in 0..total {
            let idx: Vec<Option<usize>> = digits.iter().map(|&d| d.checked_sub(1)).collect();
            out.push(self.from_indices(&idx).expect("in range"));
            for ax in (0..digits.len()).rev() {
                digits[ax] += 1;
                if digits[ax] < radix[ax] {
                    break;
                }
                digits[ax] = 0;
            }
        }
        out
    }

    /// Human readable `group=value` list; missing groups print as `-`.
    pub fn describe(&self, v: &LabelVector) -> Result<String> {
        let a = self.decode(v)?;
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| {
                let val = a.get(&g.name).cloned().flatten().unwrap_or_else(|| "-".to_string());
                alloc::format!("{}={}", g.name, val)
            })
            .collect();
        Ok(parts.join(" "))
    }
}

/// Distribution used when drawing matching and random labels during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSampling {
    /// Chance that a matching label keeps a ground-truth group.
    pub keep_probability: f64,
    /// Chance that a random label leaves a group missing; `None` draws the
    /// group uniformly over its values plus "missing".
    pub missing_probability: Option<f64>,
}

impl Default for LabelSampling {
    fn default() -> Self {
        Self { keep_probability: 0.5, missing_probability: None }
    }
}

/// Bits of one label, tied to the schema that produced it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabelVector {
    bits: Vec<u8>,
    schema_id: u64,
}

impl LabelVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn schema_id(&self) -> u64 {
        self.schema_id
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|b| *b == 0)
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelVector({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn celeb() -> LabelSchema {
        LabelSchema::new([
            ("hair", vec!["black", "blond", "brown"]),
            ("gender", vec!["male", "female"]),
            ("age", vec!["young", "old"]),
        ])
        .unwrap()
    }

    fn assign(pairs: &[(&str, &str)]) -> Assignment {
        pairs.iter().map(|(g, v)| (g.to_string(), Some(v.to_string()))).collect()
    }

    #[test]
    fn seven_bit_layout() {
        let s = celeb();
        assert_eq!(s.total_bits(), 7);
        assert_eq!(LabelSchema::synthetic_shapes().total_bits(), 7);
        let v = s.encode(&assign(&[("hair", "black"), ("gender", "male"), ("age", "young")])).unwrap();
        assert_eq!(v.to_string(), "1001010");
        assert_eq!(s.encode(&Assignment::new()).unwrap().to_string(), "0000000");
        assert_eq!(s.encode(&assign(&[("gender", "female")])).unwrap().to_string(), "0000100");
    }

    #[test]
    fn schema_validation() {
        assert!(matches!(LabelSchema::new([("g", vec!["a"])]), Err(Error::Schema(_))));
        assert!(matches!(LabelSchema::new([("g", Vec::<&str>::new())]), Err(Error::Schema(_))));
        assert!(LabelSchema::new([("g", vec!["a", "b"]), ("g", vec!["c", "d"])]).is_err());
        assert!(LabelSchema::new([("g", vec!["a", "a"])]).is_err());
        assert!(LabelSchema::new(Vec::<(&str, Vec<&str>)>::new()).is_err());
    }

    #[test]
    fn encode_errors() {
        let s = celeb();
        assert!(matches!(s.encode(&assign(&[("eyes", "blue")])), Err(Error::Encoding(_))));
        assert!(matches!(s.encode(&assign(&[("hair", "red")])), Err(Error::Encoding(_))));
    }

    #[test]
    fn decode_and_malformed() {
        let s = celeb();
        let a = s.decode(&s.parse_bits("1001010").unwrap()).unwrap();
        assert_eq!(a["hair"].as_deref(), Some("black"));
        assert_eq!(a["gender"].as_deref(), Some("male"));
        assert_eq!(a["age"].as_deref(), Some("young"));
        assert!(s.decode(&s.empty()).unwrap().values().all(Option::is_none));
        match s.parse_bits("1100000") {
            Err(Error::MalformedLabel { group }) => assert_eq!(group, "hair"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.parse_bits("10010").is_err());
        assert!(s.parse_bits("100101x").is_err());
    }

    #[test]
    fn fill_examples() {
        let s = celeb();
        let gt = s.parse_bits("1001010").unwrap();
        assert_eq!(s.fill(&s.empty(), &gt).unwrap(), gt);
        let a = s.parse_bits("0100000").unwrap();
        let b = s.parse_bits("0011001").unwrap();
        assert_eq!(s.fill(&a, &b).unwrap().to_string(), "0101001");
        assert!(matches!(s.fill(&b, &a), Err(Error::IncompleteLabel { .. })));
        let other = LabelSchema::new([("x", vec!["a", "b", "c", "d", "e", "f", "g"])]).unwrap();
        assert!(matches!(s.fill(&other.empty(), &gt), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn matching_examples() {
        let s = celeb();
        let gt = s.parse_bits("1001010").unwrap();
        assert!(s.is_matching(&s.parse_bits("0001010").unwrap(), &gt).unwrap());
        assert!(!s.is_matching(&s.parse_bits("0100000").unwrap(), &gt).unwrap());
        assert!(s.is_matching(&gt, &gt).unwrap());
    }

    #[test]
    fn enumeration_sizes() {
        let s = celeb();
        let gt = s.parse_bits("0010101").unwrap();
        assert_eq!(s.enumerate(LabelKind::Matching, Some(&gt)).unwrap().len(), 8);
        assert_eq!(s.enumerate(LabelKind::Random, None).unwrap().len(), 36);
        let filled = s.enumerate(LabelKind::Filled, Some(&gt)).unwrap();
        assert_eq!(filled.len(), 36);
        assert!(filled.iter().all(|v| s.is_complete(v).unwrap()));
        assert!(s.enumerate(LabelKind::Matching, None).is_err());
        let single = LabelSchema::new([("g", vec!["a", "b"])]).unwrap();
        let all: Vec<String> =
            single.enumerate(LabelKind::Random, None).unwrap().iter().map(|v| v.to_string()).collect();
        assert_eq!(all, ["00", "10", "01"]);
    }

    #[test]
    fn sampling_extremes() {
        let s = celeb();
        let gt = s.parse_bits("1001010").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let keep_all = LabelSampling { keep_probability: 1.0, ..Default::default() };
        let drop_all = LabelSampling { keep_probability: 0.0, ..Default::default() };
        assert_eq!(s.sample_matching(&gt, &keep_all, &mut rng).unwrap(), gt);
        assert_eq!(s.sample_matching(&gt, &drop_all, &mut rng).unwrap(), s.empty());
        let partial = s.parse_bits("1000000").unwrap();
        assert!(s.sample_matching(&partial, &LabelSampling::default(), &mut rng).is_err());
    }

    #[test]
    fn schema_json_shape() {
        let s = celeb();
        let doc = SchemaDoc::from(s.clone());
        assert_eq!(doc.groups.len(), 3);
        let back = LabelSchema::try_from(doc).unwrap();
        assert_eq!(back, s);
    }
}
