use dlgan::checkpoint;
use dlgan::dataset::load_labeled_folder;
use dlgan_core::nn::{Ctx, Mode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (bundle, _) = checkpoint::load(std::path::Path::new(&args[1])).unwrap();
    let data = load_labeled_folder(std::path::Path::new(&args[2])).unwrap();
    let s = &bundle.schema;
    let mut correct = vec![0usize; 3];
    let n = data.len();
    for chunk in (0..n).collect::<Vec<_>>().chunks(50) {
        let b = data.batch(chunk).unwrap();
        let mut ctx = Ctx::new(&bundle.params, Mode::Eval, &[]);
        let v = ctx.input(b.images.clone());
        let o = bundle.critic.forward(&mut ctx, v).unwrap();
        let logits = ctx.graph.value(o.labels).clone();
        let bits = s.total_bits();
        for (i, l) in b.labels.iter().enumerate() {
            let gt = s.group_values(l).unwrap();
            for g in 0..3 {
                let (a, k) = s.group_range(g); let e = a + k;
                let row = &logits.data()[i * bits + a..i * bits + e];
                let arg = row.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0;
                if Some(arg) == gt[g] { correct[g] += 1; }
            }
        }
    }
    recon(&bundle, &data);
    bg(&bundle, &data);
    println!("critic label accuracy {:?}", correct.iter().map(|c| *c as f64 / n as f64).collect::<Vec<_>>());
}

#[allow(dead_code)]
pub fn recon(bundle: &dlgan_core::model::ModelBundle<f32>, data: &dlgan_core::data::Dataset) {
    let b = data.batch(&(0..64).collect::<Vec<_>>()).unwrap();
    let y0 = vec![bundle.schema.empty(); 64];
    let yt = bundle.label_tensor(&y0).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let mut ctx = Ctx::new(&bundle.params, mode, &[]);
        let xv = ctx.input(b.images.clone());
        let c = bundle.content_encoder.forward(&mut ctx, xv).unwrap();
        let code = bundle.attribute_encoder.forward(&mut ctx, xv).unwrap();
        let yv = ctx.input(yt.clone());
        let out = bundle.generator.forward(&mut ctx, c, code.mean, yv).unwrap();
        let o = ctx.graph.value(out);
        let l1: f64 = o.data().iter().zip(b.images.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / o.len() as f64;
        println!("{mode:?} identity L1 {l1:.4}");
    }
}

#[allow(dead_code)]
pub fn bg(bundle: &dlgan_core::model::ModelBundle<f32>, data: &dlgan_core::data::Dataset) {
    let n = 64;
    let b = data.batch(&(0..n).collect::<Vec<_>>()).unwrap();
    let m = dlgan_core::infer::Manipulator::new(bundle);
    let out = m.label_only(&b.images, &vec![bundle.schema.empty(); n]).unwrap();
    let (h, w) = (data.height, data.width);
    let corner = |t: &[f32], i: usize, c: usize| -> f32 {
        // pixel (4, 16): left edge, middle row, inside the marks
        t[i * 3 * h * w + c * h * w + (h / 2) * w + 3]
    };
    for c in 0..3 {
        let xs: Vec<f64> = (0..n).map(|i| corner(b.images.data(), i, c) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|i| corner(out.data(), i, c) as f64).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        println!("channel {c}: corr {:.3} std in {:.3} out {:.3}", cov / (vx * vy).sqrt(), (vx / n as f64).sqrt(), (vy / n as f64).sqrt());
    }
}
