//! Evaluation of a trained bundle on held-out records: image quality
//! (FID/KID on extractor features), oracle accuracies of the applications,
//! interpolation sweeps and a Markdown report.

use dlgan_core::data::{Batch, Dataset};
use dlgan_core::infer::Manipulator;
use dlgan_core::label::{LabelSampling, LabelSchema, LabelVector};
use dlgan_core::metrics::{attribute_accuracy, fid, kid, FeatureExtractor, LabelOracle};
use dlgan_core::model::ModelBundle;
use dlgan_core::synth::{RuleOracle, SynthSpec};
use dlgan_core::{Error as CoreError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Points in an interpolation sweep.
pub const SWEEP_POINTS: usize = 11;
/// Largest tolerated drop between consecutive sweep points.
pub const SWEEP_TOLERANCE: f64 = 0.05;

/// One emitted metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor_id: Option<String>,
    pub n: usize,
}

impl Metric {
    pub fn new(metric: impl Into<String>, value: f64, n: usize) -> Self {
        Self { metric: metric.into(), value, stddev: None, extractor_id: None, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub kid_subsets: usize,
    pub kid_subset_size: usize,
    pub extractor_steps: usize,
    pub extractor_batch: usize,
    pub extractor_seed: u64,
    /// Interpolation sweeps averaged for the monotonicity check.
    pub sweeps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kid_subsets: 100,
            kid_subset_size: 100,
            extractor_steps: 300,
            extractor_batch: 32,
            extractor_seed: 17,
            sweeps: 32,
        }
    }
}

/// Rule oracle for the shapes schema at the given size.
pub fn shapes_oracle(height: usize, width: usize) -> RuleOracle {
    RuleOracle::new(&SynthSpec { height, width, ..SynthSpec::default() })
}

/// Reads labels with a trained extractor's classification head.
pub struct ExtractorOracle<'a>(pub &'a FeatureExtractor);

impl LabelOracle for ExtractorOracle<'_> {
    fn schema(&self) -> &LabelSchema {
        &self.0.schema
    }

    fn read_label(&self, image: &[f32]) -> dlgan_core::Result<LabelVector> {
        let (h, w) = (self.0.height, self.0.width);
        if image.len() != 3 * h * w {
            return Err(CoreError::Shape("image does not match the extractor".into()));
        }
        let t = Tensor::from_vec(&[1, 3, h, w], image.to_vec())?;
        Ok(self.0.classify(&t)?.remove(0))
    }
}

/// Trains the pinned feature extractor on `data`.
pub fn train_extractor(data: &Dataset, cfg: &EvalConfig) -> Result<FeatureExtractor> {
    let mut ex = FeatureExtractor::new(data.schema.clone(), data.height, data.width, cfg.extractor_seed)?;
    ex.fit(data, cfg.extractor_steps, cfg.extractor_batch, cfg.extractor_seed)?;
    Ok(ex)
}

/// Splits `data` into inputs and references of equal size.
pub fn pairs(data: &Dataset) -> Result<(Batch, Batch)> {
    let half = data.len() / 2;
    if half == 0 {
        return Err(CoreError::Dataset("evaluation needs at least two records".into()).into());
    }
    let x = data.batch(&(0..half).collect::<Vec<_>>())?;
    let r = data.batch(&(half..2 * half).collect::<Vec<_>>())?;
    Ok((x, r))
}

fn complete_labels<R: Rng + ?Sized>(schema: &LabelSchema, n: usize, rng: &mut R) -> Vec<LabelVector> {
    let policy = LabelSampling { keep_probability: 0.5, missing_probability: Some(0.0) };
    (0..n).map(|_| schema.sample_random(&policy, rng)).collect()
}

/// Per group, how often a label changing only that group to another value
/// is read back from the output. Each input gets one random group.
pub fn single_group_change<O: LabelOracle + ?Sized, R: Rng + ?Sized>(
    m: &Manipulator<'_, f32>,
    oracle: &O,
    x: &Batch,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let schema = &m.bundle.schema;
    let g_count = schema.num_groups();
    let mut picks = Vec::with_capacity(x.len());
    let mut y_r = Vec::with_capacity(x.len());
    let mut targets = Vec::with_capacity(x.len());
    for l in &x.labels {
        let g = rng.gen_range(0..g_count);
        let mut gt = schema.group_values(l)?;
        let k = schema.groups()[g].values.len();
        let cur = gt[g].ok_or_else(|| CoreError::IncompleteLabel { group: schema.groups()[g].name.clone() })?;
        let new = (cur + rng.gen_range(1..k)) % k;
        let mut only = vec![None; g_count];
        only[g] = Some(new);
        y_r.push(schema.from_indices(&only)?);
        gt[g] = Some(new);
        targets.push(schema.from_indices(&gt)?);
        picks.push(g);
    }
    let out = m.label_only(&x.images, &y_r)?;
    let per = out.len() / x.len();
    let mut hits = vec![(0usize, 0usize); g_count];
    for (i, (g, t)) in picks.iter().zip(&targets).enumerate() {
        let got = schema.group_values(&oracle.read_label(&out.data()[i * per..(i + 1) * per])?)?;
        hits[*g].1 += 1;
        hits[*g].0 += usize::from(got[*g] == schema.group_values(t)?[*g]);
    }
    Ok(hits.iter().map(|(h, n)| *h as f64 / (*n).max(1) as f64).collect())
}

/// Per group accuracy of hybrids with complete random labels against those
/// labels.
pub fn label_priority<O: LabelOracle + ?Sized, R: Rng + ?Sized>(
    m: &Manipulator<'_, f32>,
    oracle: &O,
    x: &Batch,
    x_r: &Batch,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let y_r = complete_labels(&m.bundle.schema, x.len(), rng);
    let out = m.hybrid(&x.images, &x_r.images, &y_r)?;
    Ok(attribute_accuracy(oracle, &out, &y_r)?)
}

/// Per group accuracy of hybrids with an empty label against the
/// reference's labels.
pub fn attribute_transfer<O: LabelOracle + ?Sized>(
    m: &Manipulator<'_, f32>,
    oracle: &O,
    x: &Batch,
    x_r: &Batch,
) -> Result<Vec<f64>> {
    let y0 = vec![m.bundle.schema.empty(); x.len()];
    let out = m.hybrid(&x.images, &x_r.images, &y0)?;
    Ok(attribute_accuracy(oracle, &out, &x_r.labels)?)
}

/// Mean absolute difference between inputs and their empty-label outputs.
pub fn identity_l1(m: &Manipulator<'_, f32>, x: &Batch) -> Result<f64> {
    let out = m.label_only(&x.images, &vec![m.bundle.schema.empty(); x.len()])?;
    let sum: f64 = out.data().iter().zip(x.images.data()).map(|(a, b)| (a - b).abs() as f64).sum();
    Ok(sum / out.len() as f64)
}

/// True when `curve` drops at most once, by at most `tolerance`.
pub fn monotone_within(curve: &[f64], tolerance: f64) -> bool {
    let drops: Vec<f64> = curve.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    drops.len() <= 1 && drops.iter().all(|d| *d <= tolerance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub ts: Vec<f64>,
    /// Oracle probability of the second reference's color, averaged over sweeps.
    pub mean_curve: Vec<f64>,
    pub mean_monotone: bool,
    /// Fraction of individual sweeps that are monotone within tolerance.
    pub monotone_fraction: f64,
    pub sweeps: usize,
}

/// Interpolates between references of different colors with an empty label
/// and reads the probability of the end color along the sweep.
pub fn color_sweep(m: &Manipulator<'_, f32>, oracle: &RuleOracle, data: &Dataset, sweeps: usize) -> Result<SweepReport> {
    let schema = &m.bundle.schema;
    let color = |i: usize| -> Result<usize> {
        Ok(schema.group_values(&data.records[i].label)?[0]
            .ok_or_else(|| CoreError::IncompleteLabel { group: schema.groups()[0].name.clone() })?)
    };
    let mut triples = Vec::new();
    let n = data.len();
    for i in 0..n {
        if triples.len() == sweeps {
            break;
        }
        let (a, b) = ((i + 1) % n, (i + 2) % n);
        if color(a)? != color(b)? {
            triples.push((i, a, b));
        }
    }
    if triples.is_empty() {
        return Err(CoreError::Dataset("no reference pairs with different colors".into()).into());
    }
    let pick = |k: usize| data.batch(&triples.iter().map(|t| [t.0, t.1, t.2][k]).collect::<Vec<_>>());
    let (x, xa, xb) = (pick(0)?, pick(1)?, pick(2)?);
    let ts: Vec<f64> = (0..SWEEP_POINTS).map(|i| i as f64 / (SWEEP_POINTS - 1) as f64).collect();
    let outs = m.interpolate(&x.images, &xa.images, &xb.images, &ts, &vec![schema.empty(); x.len()])?;
    let per = outs[0].len() / x.len();
    let mut curves = vec![vec![0f64; ts.len()]; x.len()];
    for (ti, out) in outs.iter().enumerate() {
        for (j, curve) in curves.iter_mut().enumerate() {
            let target = color(triples[j].2)?;
            curve[ti] = oracle.read(&out.data()[j * per..(j + 1) * per])?.color_probabilities[target];
        }
    }
    let mean_curve: Vec<f64> =
        (0..ts.len()).map(|ti| curves.iter().map(|c| c[ti]).sum::<f64>() / curves.len() as f64).collect();
    let ok = curves.iter().filter(|c| monotone_within(c, SWEEP_TOLERANCE)).count();
    Ok(SweepReport {
        ts,
        mean_monotone: monotone_within(&mean_curve, SWEEP_TOLERANCE),
        mean_curve,
        monotone_fraction: ok as f64 / curves.len() as f64,
        sweeps: curves.len(),
    })
}

/// FID and KID between `real` and label-only outputs for complete random
/// labels on the same inputs.
pub fn image_quality(
    m: &Manipulator<'_, f32>,
    extractor: &FeatureExtractor,
    real: &Batch,
    cfg: &EvalConfig,
) -> Result<Vec<Metric>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y_r = complete_labels(&m.bundle.schema, real.len(), &mut rng);
    let fake = m.label_only(&real.images, &y_r)?;
    let fr = extractor.extract(&real.images)?;
    let ff = extractor.extract(&fake)?;
    let n = real.len();
    let size = cfg.kid_subset_size.min(n);
    let k = kid(&fr, &ff, cfg.kid_subsets, size, &mut rng)?;
    let id = Some(extractor.id.clone());
    Ok(vec![
        Metric { metric: "fid".into(), value: fid(&fr, &ff)?, stddev: None, extractor_id: id.clone(), n },
        Metric { metric: "kid".into(), value: k.mean, stddev: Some(k.stddev), extractor_id: id, n },
    ])
}

fn per_group(out: &mut Vec<Metric>, name: &str, schema: &LabelSchema, values: &[f64], n: usize) {
    for (g, v) in schema.groups().iter().zip(values) {
        out.push(Metric::new(format!("{name}.{}", g.name), *v, n));
    }
}

/// Every metric for `bundle` on held-out `data`.
pub fn evaluate<O: LabelOracle + ?Sized>(
    bundle: &ModelBundle<f32>,
    data: &Dataset,
    extractor: &FeatureExtractor,
    oracle: &O,
    cfg: &EvalConfig,
) -> Result<Vec<Metric>> {
    let m = Manipulator::new(bundle);
    let schema = &bundle.schema;
    let (x, x_r) = pairs(data)?;
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let all = data.batch(&(0..data.len()).collect::<Vec<_>>())?;
    let mut out = image_quality(&m, extractor, &all, cfg)?;
    per_group(&mut out, "change_accuracy", schema, &single_group_change(&m, oracle, &x, &mut rng)?, n);
    per_group(&mut out, "priority_accuracy", schema, &label_priority(&m, oracle, &x, &x_r, &mut rng)?, n);
    let transfer = attribute_transfer(&m, oracle, &x, &x_r)?;
    per_group(&mut out, "transfer_accuracy", schema, &transfer, n);
    out.push(Metric::new("transfer_accuracy", transfer.iter().sum::<f64>() / transfer.len() as f64, n));
    out.push(Metric::new("identity_l1", identity_l1(&m, &x)?, n));
    Ok(out)
}

/// Markdown table of metrics.
pub fn markdown_report(title: &str, metrics: &[Metric]) -> String {
    let mut s = format!("# {title}\n\n| metric | value | stddev | n | extractor |\n|---|---|---|---|---|\n");
    for m in metrics {
        let sd = m.stddev.map(|v| format!("{v:.6}")).unwrap_or_default();
        let ex = m.extractor_id.clone().unwrap_or_default();
        s.push_str(&format!("| {} | {:.6} | {sd} | {} | {ex} |\n", m.metric, m.value, m.n));
    }
    s
}
