//! Distribution distances between feature sets, oracle attribute accuracy,
//! linear probes and the small feature extractor used for FID/KID.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::label::{LabelSchema, LabelVector};
use crate::loss;
use crate::model::ModelBundle;
use crate::nn::{Conv2d, Ctx, Linear, Mode, ParamStore};
use crate::optim::Adam;
use crate::synth::RuleOracle;
use crate::tensor::{Real, Tensor};

/// Regularization added to both covariances before the matrix square root.
pub const FID_EPSILON: f64 = 1e-6;

/// `N × d` features, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub extractor_id: String,
}

impl FeatureSet {
    pub fn new(features: Vec<f64>, n: usize, d: usize, extractor_id: impl Into<String>) -> Result<Self> {
        if features.len() != n * d || d == 0 {
            return Err(Error::Shape(format!("{} features for {n} rows of width {d}", features.len())));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        Ok(Self { features, n, d, extractor_id: extractor_id.into() })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.n {
            for (a, b) in m.iter_mut().zip(self.row(i)) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Unbiased covariance, `d × d` row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.d;
        let mu = self.mean();
        let mut c = vec![0.0; d * d];
        let mut centered = vec![0.0; d];
        for i in 0..self.n {
            for ((x, r), m) in centered.iter_mut().zip(self.row(i)).zip(&mu) {
                *x = r - m;
            }
            for a in 0..d {
                let xa = centered[a];
                for b in a..d {
                    c[a * d + b] += xa * centered[b];
                }
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        for a in 0..d {
            for b in a..d {
                let v = c[a * d + b] / denom;
                c[a * d + b] = v;
                c[b * d + a] = v;
            }
        }
        c
    }
}

fn check_pair(a: &FeatureSet, b: &FeatureSet) -> Result<()> {
    if a.d != b.d {
        return Err(Error::Shape(format!("feature widths differ: {} vs {}", a.d, b.d)));
    }
    Ok(())
}

/// Eigenvalues and column eigenvectors of a symmetric `n × n` matrix by
/// cyclic Jacobi rotations.
pub fn symmetric_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * a[i * n + j]).sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Square root of a symmetric positive semi-definite matrix; negative
/// eigenvalues are clamped to zero.
pub fn symmetric_sqrt(m: &[f64], n: usize) -> Vec<f64> {
    let (vals, vecs) = symmetric_eigen(m, n);
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        for i in 0..n {
            let vik = vecs[i * n + k] * s;
            for j in 0..n {
                out[i * n + j] += vik * vecs[j * n + k];
            }
        }
    }
    out
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Fréchet distance between Gaussian fits of the two feature sets.
pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    check_pair(a, b)?;
    let d = a.d;
    if a.n < 2 || b.n < 2 {
        return Err(Error::Shape("FID needs at least two rows per set".into()));
    }
    let (ma, mb) = (a.mean(), b.mean());
    let (mut ca, mut cb) = (a.covariance(), b.covariance());
    for i in 0..d {
        ca[i * d + i] += FID_EPSILON;
        cb[i * d + i] += FID_EPSILON;
    }
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let trace = |m: &[f64]| (0..d).map(|i| m[i * d + i]).sum::<f64>();
    // tr((Σa Σb)^½) = tr((Σa^½ Σb Σa^½)^½)
    let sa = symmetric_sqrt(&ca, d);
    let inner = matmul(&matmul(&sa, &cb, d), &sa, d);
    let mut sym = inner.clone();
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = 0.5 * (inner[i * d + j] + inner[j * d + i]);
        }
    }
    let (vals, _) = symmetric_eigen(&sym, d);
    let cross: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    let value = mean_term + trace(&ca) + trace(&cb) - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::NonFinite("fid".into()));
    }
    Ok(value.max(0.0))
}

/// `(xᵀy / d + 1)³`.
pub fn polynomial_kernel(x: &[f64], y: &[f64]) -> f64 {
    let d = x.len() as f64;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Float::powi(dot / d + 1.0, 3)
}

/// Unbiased MMD² between the selected rows of `a` and `b`.
pub fn mmd2_unbiased(a: &FeatureSet, ia: &[usize], b: &FeatureSet, ib: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let (m, n) = (ia.len(), ib.len());
    if m < 2 || n < 2 {
        return Err(Error::Shape("MMD needs at least two rows per set".into()));
    }
    let within = |s: &FeatureSet, idx: &[usize]| {
        let mut t = 0.0;
        for (p, &i) in idx.iter().enumerate() {
            for &j in &idx[p + 1..] {
                t += polynomial_kernel(s.row(i), s.row(j));
            }
        }
        2.0 * t / (idx.len() * (idx.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for &i in ia {
        for &j in ib {
            cross += polynomial_kernel(a.row(i), b.row(j));
        }
    }
    Ok(within(a, ia) + within(b, ib) - 2.0 * cross / (m * n) as f64)
}

/// Mean and standard deviation of a metric over random subsets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stddev: f64,
}

/// Kernel distance: unbiased MMD² averaged over `n_subsets` random subsets
/// of `subset_size` rows drawn without replacement from each set.
pub fn kid<R: Rng + ?Sized>(
    a: &FeatureSet,
    b: &FeatureSet,
    n_subsets: usize,
    subset_size: usize,
    rng: &mut R,
) -> Result<Estimate> {
    check_pair(a, b)?;
    if subset_size > a.n.min(b.n) {
        return Err(Error::Config(format!("subset size {subset_size} exceeds set sizes {} and {}", a.n, b.n)));
    }
    if n_subsets == 0 {
        return Err(Error::Config("n_subsets must be at least 1".into()));
    }
    let vals: Vec<f64> = (0..n_subsets)
        .map(|_| {
            let ia = sample(rng, a.n, subset_size).into_vec();
            let ib = sample(rng, b.n, subset_size).into_vec();
            mmd2_unbiased(a, &ia, b, &ib)
        })
        .collect::<Result<_>>()?;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64
    } else {
        0.0
    };
    Ok(Estimate { mean, stddev: var.sqrt() })
}

/// Reads complete labels off images.
pub trait LabelOracle {
    fn schema(&self) -> &LabelSchema;
    fn read_label(&self, image: &[f32]) -> Result<LabelVector>;
}

impl LabelOracle for RuleOracle {
    fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    fn read_label(&self, image: &[f32]) -> Result<LabelVector> {
        RuleOracle::read_label(self, image)
    }
}

/// Per group, the fraction of images `[B, 3, H, W]` whose oracle reading
/// equals the target.
pub fn attribute_accuracy<O: LabelOracle + ?Sized, T: Real>(
    oracle: &O,
    images: &Tensor<T>,
    targets: &[LabelVector],
) -> Result<Vec<f64>> {
    let schema = oracle.schema();
    let b = images.shape().first().copied().unwrap_or(0);
    if b != targets.len() || b == 0 {
        return Err(Error::Shape(format!("{} targets for {b} images", targets.len())));
    }
    let per = images.len() / b;
    let mut hits = vec![0usize; schema.num_groups()];
    let mut buf = vec![0f32; per];
    for (i, t) in targets.iter().enumerate() {
        let want = schema.group_values(t)?;
        if let Some(k) = want.iter().position(|v| v.is_none()) {
            return Err(Error::IncompleteLabel { group: schema.groups()[k].name.clone() });
        }
        for (o, v) in buf.iter_mut().zip(&images.data()[i * per..(i + 1) * per]) {
            *o = v.as_f64() as f32;
        }
        let got = schema.group_values(&oracle.read_label(&buf)?)?;
        for (h, (g, w)) in hits.iter_mut().zip(got.iter().zip(&want)) {
            *h += usize::from(g == w);
        }
    }
    Ok(hits.iter().map(|h| *h as f64 / b as f64).collect())
}

/// Held-out accuracy of a linear probe and the held-out chance level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub accuracy: f64,
    pub chance: f64,
}

/// Multinomial logistic regression on standardized features, fitted on the
/// first `n_train` rows and scored on the rest.
pub fn linear_probe(x: &[f64], d: usize, classes: &[usize], k: usize, n_train: usize) -> Result<ProbeScore> {
    let n = classes.len();
    if x.len() != n * d || k < 2 || n_train == 0 || n_train >= n {
        return Err(Error::Shape(format!("probe on {n} rows of width {d} split at {n_train}")));
    }
    if let Some(c) = classes.iter().find(|c| **c >= k) {
        return Err(Error::Config(format!("class {c} out of range for {k} classes")));
    }
    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for i in 0..n_train {
        for j in 0..d {
            mu[j] += x[i * d + j] / n_train as f64;
        }
    }
    for i in 0..n_train {
        for j in 0..d {
            sd[j] += Float::powi(x[i * d + j] - mu[j], 2) / n_train as f64;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-8)).collect();
    let z: Vec<f64> = (0..n * d).map(|i| (x[i] - mu[i % d]) / sd[i % d]).collect();

    let mut w = vec![0.0; (d + 1) * k];
    let mut m = vec![0.0; w.len()];
    let mut v = vec![0.0; w.len()];
    let logits = |w: &[f64], row: &[f64], out: &mut [f64]| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = w[d * k + c] + row.iter().enumerate().map(|(j, r)| r * w[j * k + c]).sum::<f64>();
        }
    };
    let mut p = vec![0.0; k];
    let l2 = 1e-4;
    for step in 1..=400 {
        let mut g = vec![0.0; w.len()];
        for i in 0..n_train {
            let row = &z[i * d..(i + 1) * d];
            logits(&w, row, &mut p);
            let mx = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = p.iter_mut().map(|v| {
                *v = Float::exp(*v - mx);
                *v
            }).sum();
            for c in 0..k {
                let e = p[c] / s - f64::from(u8::from(classes[i] == c));
                for j in 0..d {
                    g[j * k + c] += e * row[j];
                }
                g[d * k + c] += e;
            }
        }
        for (gi, wi) in g.iter_mut().zip(&w) {
            *gi = *gi / n_train as f64 + l2 * wi;
        }
        let (b1, b2, lr) = (0.9, 0.999, 0.05);
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - Float::powi(b1, step));
            let vh = v[i] / (1.0 - Float::powi(b2, step));
            w[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    let mut correct = 0;
    let mut counts = vec![0usize; k];
    for i in n_train..n {
        logits(&w, &z[i * d..(i + 1) * d], &mut p);
        let pred = (0..k).fold(0, |b, c| if p[c] > p[b] { c } else { b });
        correct += usize::from(pred == classes[i]);
        counts[classes[i]] += 1;
    }
    let held = (n - n_train) as f64;
    Ok(ProbeScore { accuracy: correct as f64 / held, chance: *counts.iter().max().unwrap_or(&0) as f64 / held })
}

/// Minimum records for a probe with a held-out split.
pub const MIN_PROBE_RECORDS: usize = 200;

/// Per-group probe accuracies on attribute codes and on pooled content maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub groups: Vec<String>,
    pub attr_probe_accuracy: Vec<f64>,
    pub content_probe_accuracy: Vec<f64>,
    pub chance_levels: Vec<f64>,
}

/// Fits one probe per group on each feature matrix; the first 80% of rows
/// train, the rest are held out.
pub fn probe_groups(schema: &LabelSchema, features: &[f64], d: usize, labels: &[LabelVector]) -> Result<Vec<ProbeScore>> {
    let n = labels.len();
    if n < MIN_PROBE_RECORDS {
        return Err(Error::Dataset(format!("probes need at least {MIN_PROBE_RECORDS} records, got {n}")));
    }
    let values: Vec<Vec<Option<usize>>> = labels.iter().map(|l| schema.group_values(l)).collect::<Result<_>>()?;
    let n_train = n * 4 / 5;
    (0..schema.num_groups())
        .map(|gi| {
            let classes: Vec<usize> = values
                .iter()
                .map(|v| v[gi].ok_or_else(|| Error::IncompleteLabel { group: schema.groups()[gi].name.clone() }))
                .collect::<Result<_>>()?;
            linear_probe(features, d, &classes, schema.groups()[gi].values.len(), n_train)
        })
        .collect()
}

/// Probes mean attribute codes and spatially averaged content maps of every
/// record in `data`.
pub fn disentanglement_probe<T: Real>(bundle: &ModelBundle<T>, data: &Dataset) -> Result<ProbeReport> {
    if data.len() < MIN_PROBE_RECORDS {
        return Err(Error::Dataset(format!("probes need at least {MIN_PROBE_RECORDS} records, got {}", data.len())));
    }
    let mut codes = Vec::new();
    let mut pooled = Vec::new();
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(64) {
        let batch = data.batch(chunk)?;
        let x: Tensor<T> = batch.images.cast();
        codes.extend(bundle.attribute_encode(&x)?.mean.data().iter().map(|v| v.as_f64()));
        let c = bundle.content_encode(&x)?;
        let s = c.shape().to_vec();
        let hw = s[2] * s[3];
        for v in c.data().chunks(hw) {
            pooled.push(v.iter().map(|t| t.as_f64()).sum::<f64>() / hw as f64);
        }
    }
    let labels: Vec<LabelVector> = data.records.iter().map(|r| r.label.clone()).collect();
    let d_attr = bundle.config.attribute_dim;
    let d_content = bundle.config.content_channels;
    let attr = probe_groups(&bundle.schema, &codes, d_attr, &labels)?;
    let content = probe_groups(&bundle.schema, &pooled, d_content, &labels)?;
    Ok(ProbeReport {
        groups: bundle.schema.groups().iter().map(|g| g.name.clone()).collect(),
        attr_probe_accuracy: attr.iter().map(|s| s.accuracy).collect(),
        content_probe_accuracy: content.iter().map(|s| s.accuracy).collect(),
        chance_levels: attr.iter().map(|s| s.chance).collect(),
    })
}

/// Width of the extractor's feature layer.
pub const FEATURE_DIM: usize = 64;

/// Small convolutional classifier of the dataset's labels; its penultimate
/// activations are the features for FID and KID.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub schema: LabelSchema,
    pub params: ParamStore<f32>,
    pub id: String,
    pub height: usize,
    pub width: usize,
    convs: [Conv2d; 3],
    hidden: Linear,
    head: Linear,
}

impl FeatureExtractor {
    /// Extractor for `height × width` images; both must be multiples of 8.
    pub fn new(schema: LabelSchema, height: usize, width: usize, seed: u64) -> Result<Self> {
        if height % 8 != 0 || width % 8 != 0 || height == 0 || width == 0 {
            return Err(Error::Config(format!("extractor needs sides divisible by 8, got {height}x{width}")));
        }
        let convs = [
            Conv2d::new("extractor.conv1", 3, 16, 4, 2, 1),
            Conv2d::new("extractor.conv2", 16, 32, 4, 2, 1),
            Conv2d::new("extractor.conv3", 32, 32, 4, 2, 1),
        ];
        let hidden = Linear::new("extractor.hidden", 32 * (height / 8) * (width / 8), FEATURE_DIM);
        let head = Linear::new("extractor.head", FEATURE_DIM, schema.total_bits());
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &convs {
            c.init(&mut params, 0.1, &mut rng);
        }
        hidden.init(&mut params, 0.1, &mut rng);
        head.init(&mut params, 0.1, &mut rng);
        let mut fe = Self { schema, params, id: String::new(), height, width, convs, hidden, head };
        fe.id = fe.fingerprint();
        Ok(fe)
    }

    fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in self.params.tensors() {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
            }
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        format!("shapes-cnn-{h:016x}")
    }

    fn forward(&self, ctx: &mut Ctx<'_, f32>, x: crate::graph::Var) -> Result<(crate::graph::Var, crate::graph::Var)> {
        let mut h = x;
        for c in &self.convs {
            h = c.forward(ctx, h)?;
            h = ctx.graph.relu(h);
        }
        let s = ctx.graph.shape(h).to_vec();
        let flat = ctx.graph.reshape(h, &[s[0], s[1] * s[2] * s[3]]);
        let f = self.hidden.forward(ctx, flat)?;
        let f = ctx.graph.relu(f);
        let logits = self.head.forward(ctx, f)?;
        Ok((f, logits))
    }

    /// Trains on the labels of `data` with Adam for `steps` batches.
    pub fn fit(&mut self, data: &Dataset, steps: usize, batch_size: usize, seed: u64) -> Result<()> {
        if data.schema.id() != self.schema.id() {
            return Err(Error::SchemaMismatch("dataset schema differs from the extractor's".into()));
        }
        let mut it = BatchIterator::new(data.len(), batch_size, seed)?;
        let mut adam = Adam::new(0.9, 0.999);
        for _ in 0..steps {
            let batch = data.batch(&it.next_indices())?;
            let mut ctx = Ctx::new(&self.params, Mode::Train, &["extractor."]);
            let x = ctx.input(batch.images.clone());
            let (_, logits) = self.forward(&mut ctx, x)?;
            let l = loss::label_loss(&mut ctx.graph, &self.schema, logits, &batch.labels)?;
            let tracked = ctx.tracked_params();
            let vars: Vec<_> = tracked.iter().map(|(_, v)| *v).collect();
            let grads = ctx.graph.grad(l, &vars);
            let named: Vec<(String, Tensor<f32>)> = tracked
                .iter()
                .zip(grads)
                .filter_map(|((n, _), g)| g.map(|g| (n.clone(), ctx.graph.value(g).clone())))
                .collect();
            adam.update(&mut self.params, &named, 2e-3)?;
        }
        self.id = self.fingerprint();
        Ok(())
    }

    fn run(&self, images: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut ctx = Ctx::inference(&self.params);
        let x = ctx.input(images.clone());
        let (f, l) = self.forward(&mut ctx, x)?;
        Ok((ctx.graph.value(f).clone(), ctx.graph.value(l).clone()))
    }

    /// Features of images `[B, 3, H, W]`, processed in chunks of 64.
    pub fn extract<T: Real>(&self, images: &Tensor<T>) -> Result<FeatureSet> {
        let b = images.shape().first().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(b * FEATURE_DIM);
        let mut start = 0;
        while start < b {
            let n = (b - start).min(64);
            let chunk: Tensor<f32> = images.rows(start, n).cast();
            out.extend(self.run(&chunk)?.0.data().iter().map(|v| *v as f64));
            start += n;
        }
        FeatureSet::new(out, b, FEATURE_DIM, self.id.clone())
    }

    /// Predicted complete labels.
    pub fn classify<T: Real>(&self, images: &Tensor<T>) -> Result<Vec<LabelVector>> {
        let (_, logits) = self.run(&images.cast())?;
        let bits = self.schema.total_bits();
        logits
            .data()
            .chunks(bits)
            .map(|row| {
                let picks: Vec<Option<usize>> = (0..self.schema.num_groups())
                    .map(|gi| {
                        let (s, k) = self.schema.group_range(gi);
                        Some((0..k).fold(0, |b, j| if row[s + j] > row[s + b] { j } else { b }))
                    })
                    .collect();
                self.schema.from_indices(&picks)
            })
            .collect()
    }
}
