//! Built-in self checks run by `drgrade verify`.
//!
//! Each suite compares a library routine against a deliberately naive
//! reimplementation in this file, or checks a structural property. The
//! oracles share no code with the routines they check.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::grading::{decode_raw, weighted_kappa, ConfusionMatrix};
use crate::imgproc::{clahe, clahe_with_mappings, median_filter, Image8};
use crate::nnet::{mse_loss, Conv2d, Dense, Layer, LayerKind, Mode, Network, Tensor};
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Weight exponent handed to the library kappa. The oracle always uses 2,
    /// so any other value should make the QWK suites fail.
    pub qwk_exponent: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 42, qwk_exponent: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
    #[serde(serialize_with = "secs")]
    pub elapsed: Duration,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

type Suite = fn(&VerifyOptions, &mut Xoshiro256StarStar) -> (usize, Result<(), String>);

pub const SUITES: &[(&str, Suite)] = &[
    ("qwk_oracle", qwk_oracle),
    ("qwk_anchors", qwk_anchors),
    ("median_oracle", median_oracle),
    ("clahe_properties", clahe_properties),
    ("gradient_checks", gradient_checks),
    ("decode_contract", decode_contract),
];

pub fn run_verify(opts: &VerifyOptions) -> Vec<CheckResult> {
    SUITES
        .iter()
        .enumerate()
        .map(|(i, (name, suite))| {
            let mut rng = Xoshiro256StarStar::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let start = Instant::now();
            let (cases, out) = suite(opts, &mut rng);
            CheckResult {
                name,
                passed: out.is_ok(),
                cases,
                detail: out.err().unwrap_or_default(),
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<18} {:<6} {:>7} {:>9}  detail\n", "suite", "result", "cases", "seconds");
    for r in results {
        out.push_str(&format!(
            "{:<18} {:<6} {:>7} {:>9.3}  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.cases,
            r.elapsed.as_secs_f64(),
            r.detail
        ));
    }
    out
}

// ---------------------------------------------------------------- QWK

/// Textbook kappa straight from label lists: observed and expected
/// disagreement as explicit double sums.
fn naive_qwk(truth: &[usize], pred: &[usize], k: usize) -> Option<f64> {
    let n = truth.len() as f64;
    let mut obs = vec![vec![0.0; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        obs[t][p] += 1.0;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64 - j as f64) / (k as f64 - 1.0)).powi(2);
            let row: f64 = truth.iter().filter(|&&t| t == i).count() as f64;
            let col: f64 = pred.iter().filter(|&&p| p == j).count() as f64;
            num += w * obs[i][j];
            den += w * row * col / n;
        }
    }
    (den != 0.0).then(|| 1.0 - num / den)
}

fn library_qwk(truth: &[usize], pred: &[usize], k: usize, exponent: f64) -> Option<f64> {
    let cm = ConfusionMatrix::from_labels(truth, pred, k).ok()?;
    weighted_kappa(&cm, exponent).ok().map(|b| b.qwk)
}

fn random_labels(rng: &mut Xoshiro256StarStar) -> (Vec<usize>, Vec<usize>, usize) {
    let k = 2 + rng.below(5) as usize;
    let n = 2 + rng.below(199) as usize;
    let truth = (0..n).map(|_| rng.below(k as u64) as usize).collect();
    let pred = (0..n).map(|_| rng.below(k as u64) as usize).collect();
    (truth, pred, k)
}

fn qwk_oracle(opts: &VerifyOptions, rng: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let cases = 1000;
    let mut compared = 0;
    for case in 0..cases {
        let (truth, pred, k) = random_labels(rng);
        let want = naive_qwk(&truth, &pred, k);
        let got = library_qwk(&truth, &pred, k, opts.qwk_exponent);
        match (want, got) {
            (None, None) => {}
            (Some(w), Some(g)) if (w - g).abs() <= 1e-12 => compared += 1,
            (w, g) => return (case + 1, Err(format!("case {case} k={k}: oracle {w:?}, library {g:?}"))),
        }
    }
    if compared == 0 {
        return (cases, Err("no defined cases".into()));
    }
    (cases, Ok(()))
}

fn qwk_anchors(opts: &VerifyOptions, rng: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let e = opts.qwk_exponent;
    let labels: Vec<usize> = (0..5).cycle().take(25).collect();
    if library_qwk(&labels, &labels, 5, e) != Some(1.0) {
        return (1, Err("perfect agreement is not exactly 1".into()));
    }
    let anti = library_qwk(&[0, 2], &[2, 0], 3, e);
    if anti != Some(-1.0) || naive_qwk(&[0, 2], &[2, 0], 3) != Some(-1.0) {
        return (2, Err(format!("k=3 [0,2] vs [2,0]: got {anti:?}, want -1")));
    }
    let mut cases = 2;
    for _ in 0..200 {
        cases += 1;
        let (truth, pred, k) = random_labels(rng);
        let base = library_qwk(&truth, &pred, k, e);
        if let Some(oracle) = naive_qwk(&truth, &pred, k) {
            if base.is_none_or(|b| (b - oracle).abs() > 1e-12) {
                return (cases, Err(format!("k={k}: library {base:?} vs oracle {oracle}")));
            }
        }
        let swapped = library_qwk(&pred, &truth, k, e);
        let mut perm: Vec<usize> = (0..truth.len()).collect();
        rng.shuffle(&mut perm);
        let pt: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let pp: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        let permuted = library_qwk(&pt, &pp, k, e);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        if !close(base, swapped) || !close(base, permuted) {
            return (cases, Err(format!("symmetry/permutation broke: {base:?} {swapped:?} {permuted:?}")));
        }
    }
    (cases, Ok(()))
}

// ---------------------------------------------------------------- median

fn naive_median(img: &Image8, k: usize) -> Vec<u8> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut window = Vec::with_capacity(k * k);
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    window.push(img.get(sx, sy));
                }
            }
            window.sort_unstable();
            out.push(window[window.len() / 2]);
        }
    }
    out
}

fn random_image(rng: &mut Xoshiro256StarStar, max_side: u64) -> Image8 {
    let w = 1 + rng.below(max_side) as usize;
    let h = 1 + rng.below(max_side) as usize;
    Image8::from_fn(w, h, |_, _| rng.below(256) as u8).expect("non-empty")
}

fn median_oracle(_: &VerifyOptions, rng: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let mut cases = 0;
    for i in 0..100 {
        let img = random_image(rng, 64);
        for k in [3, 5] {
            cases += 1;
            let got = match median_filter(&img, k) {
                Ok(g) => g,
                Err(e) => return (cases, Err(e.to_string())),
            };
            if got.pixels() != naive_median(&img, k).as_slice() {
                return (cases, Err(format!("image {i} ({}x{}) kernel {k} differs", img.width(), img.height())));
            }
        }
    }
    (cases, Ok(()))
}

// ---------------------------------------------------------------- CLAHE

fn global_equalize(img: &Image8) -> Vec<u8> {
    let n = img.pixels().len() as f64;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let at_or_below = img.pixels().iter().filter(|&&p| p as usize <= v).count() as f64;
        *slot = (255.0 * at_or_below / n).round() as u8;
    }
    img.pixels().iter().map(|&p| lut[p as usize]).collect()
}

fn std_dev(px: &[u8]) -> f64 {
    let n = px.len() as f64;
    let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
    (px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn clahe_properties(_: &VerifyOptions, rng: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let mut cases = 0;
    for v in [0u8, 1, 77, 128, 254, 255] {
        cases += 1;
        let img = Image8::filled(64, 48, v).expect("non-empty");
        // The clip redistribution shifts the level; what must hold is that the
        // output is (nearly) constant itself.
        match clahe(&img, 8, 2.0) {
            Ok(out) => {
                let lo = *out.pixels().iter().min().expect("non-empty");
                let hi = *out.pixels().iter().max().expect("non-empty");
                if hi - lo > 1 {
                    return (cases, Err(format!("constant {v}: output spans {lo}..={hi}")));
                }
            }
            Err(e) => return (cases, Err(e.to_string())),
        }
    }
    for i in 0..50 {
        cases += 1;
        let img = random_image(rng, 80);
        match clahe(&img, 1, f64::INFINITY) {
            Ok(out) if out.pixels() == global_equalize(&img).as_slice() => {}
            Ok(_) => return (cases, Err(format!("image {i}: tiles=1 clip=inf differs from global HE"))),
            Err(e) => return (cases, Err(e.to_string())),
        }
        let tiles = 1 + rng.below(8) as usize;
        let clip = rng.uniform(1.0, 4.0);
        let img = Image8::from_fn(8 + rng.below(90) as usize, 8 + rng.below(90) as usize, |_, _| {
            rng.below(256) as u8
        })
        .expect("non-empty");
        match clahe_with_mappings(&img, tiles, clip) {
            Ok(out) => {
                if let Some(t) = out.mappings.iter().position(|m| m.windows(2).any(|w| w[0] > w[1])) {
                    return (cases, Err(format!("image {i}: tile {t} mapping not monotone")));
                }
            }
            Err(e) => return (cases, Err(e.to_string())),
        }
    }
    cases += 1;
    let low = Image8::from_fn(128, 96, |x, y| 100 + ((x + y) % 41) as u8).expect("non-empty");
    match clahe(&low, 8, 2.0) {
        Ok(out) if std_dev(out.pixels()) > std_dev(low.pixels()) => {}
        Ok(out) => {
            return (cases, Err(format!("std {} -> {}", std_dev(low.pixels()), std_dev(out.pixels()))));
        }
        Err(e) => return (cases, Err(e.to_string())),
    }
    (cases, Ok(()))
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-4;
const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with an absolute floor so that near-zero gradients are not
/// judged on round-off alone.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

struct Probe {
    net: Network<f64>,
    input: Tensor<f64>,
    target: Vec<f64>,
}

impl Probe {
    fn loss(&mut self) -> f64 {
        self.net.reseed_dropout(7);
        let out = self.net.forward(self.input.clone()).expect("forward");
        mse_loss(&out, &self.target).expect("loss").0
    }

    fn check(mut self, label: &str) -> Result<usize, String> {
        self.net.set_mode(Mode::Train);
        self.net.reseed_dropout(7);
        let out = self.net.forward(self.input.clone()).map_err(|e| e.to_string())?;
        let (_, dl) = mse_loss(&out, &self.target).map_err(|e| e.to_string())?;
        let grads = self.net.backward_with(&dl, true).map_err(|e| e.to_string())?;
        let mut checked = 0;

        let analytic_input = grads.input.clone().ok_or("no input gradient")?;
        for i in 0..self.input.len() {
            let orig = self.input.data()[i];
            self.input.data_mut()[i] = orig + FD_STEP;
            let up = self.loss();
            self.input.data_mut()[i] = orig - FD_STEP;
            let down = self.loss();
            self.input.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = rel_error(analytic_input.data()[i], numeric);
            if e > FD_TOLERANCE {
                return Err(format!("{label}: input[{i}] analytic {} numeric {numeric}", analytic_input.data()[i]));
            }
            checked += 1;
        }

        for (li, g) in grads.layers.iter().enumerate() {
            let Some(g) = g else { continue };
            let analytic: Vec<f64> = g.weights.iter().chain(&g.bias).copied().collect();
            let nw = g.weights.len();
            for (pi, &a) in analytic.iter().enumerate() {
                let set = |net: &mut Network<f64>, delta: f64| {
                    let (w, b) = net.layer_mut(li).params_mut().expect("param layer");
                    if pi < nw {
                        w[pi] += delta;
                    } else {
                        b[pi - nw] += delta;
                    }
                };
                set(&mut self.net, FD_STEP);
                let up = self.loss();
                set(&mut self.net, -2.0 * FD_STEP);
                let down = self.loss();
                set(&mut self.net, FD_STEP);
                let numeric = (up - down) / (2.0 * FD_STEP);
                if rel_error(a, numeric) > FD_TOLERANCE {
                    return Err(format!("{label}: layer {li} param {pi} analytic {a} numeric {numeric}"));
                }
                checked += 1;
            }
        }
        Ok(checked)
    }
}

fn randomize(net: &mut Network<f64>, rng: &mut Xoshiro256StarStar) {
    for i in 0..net.layers().len() {
        if let Some((w, b)) = net.layer_mut(i).params_mut() {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
    }
}

fn head(flat: usize) -> Layer<f64> {
    Layer::new(LayerKind::Dense(Dense::zeroed(flat, 1)))
}

/// Values spread far enough from zero, and from each other, that a step of
/// `FD_STEP` never crosses a ReLU kink or changes a max-pool winner.
fn separated_values(rng: &mut Xoshiro256StarStar, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * 0.01 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    rng.shuffle(&mut v);
    v.iter().map(|x| x + rng.uniform(-0.002, 0.002)).collect()
}

fn probe_for(kind: usize, rng: &mut Xoshiro256StarStar) -> Probe {
    let batch = 1 + rng.below(3) as usize;
    let (sample_shape, layers): (Vec<usize>, Vec<Layer<f64>>) = match kind {
        0 => {
            let cin = 1 + rng.below(3) as usize;
            let cout = 1 + rng.below(3) as usize;
            let k = 1 + rng.below(3) as usize;
            let stride = 1 + rng.below(2) as usize;
            let h = k + rng.below(5) as usize;
            let w = k + rng.below(5) as usize;
            let conv = Conv2d::zeroed(cin, cout, k, stride);
            let oh = (h - k) / stride + 1;
            let ow = (w - k) / stride + 1;
            (
                vec![cin, h, w],
                vec![Layer::new(LayerKind::Conv2d(conv)), Layer::new(LayerKind::Flatten), head(cout * oh * ow)],
            )
        }
        1 => {
            let d = 1 + rng.below(12) as usize;
            let m = 1 + rng.below(6) as usize;
            (vec![d], vec![Layer::new(LayerKind::Dense(Dense::zeroed(d, m))), head(m)])
        }
        2 => {
            let d = 1 + rng.below(16) as usize;
            (vec![d], vec![Layer::new(LayerKind::Relu), head(d)])
        }
        3 => {
            let c = 1 + rng.below(3) as usize;
            let window = 1 + rng.below(3) as usize;
            let stride = 1 + rng.below(2) as usize;
            let h = window + rng.below(5) as usize;
            let w = window + rng.below(5) as usize;
            let oh = (h - window) / stride + 1;
            let ow = (w - window) / stride + 1;
            (
                vec![c, h, w],
                vec![
                    Layer::new(LayerKind::MaxPool2d { window, stride }),
                    Layer::new(LayerKind::Flatten),
                    head(c * oh * ow),
                ],
            )
        }
        4 => {
            let c = 1 + rng.below(3) as usize;
            let h = 1 + rng.below(4) as usize;
            let w = 1 + rng.below(4) as usize;
            (vec![c, h, w], vec![Layer::new(LayerKind::Flatten), head(c * h * w)])
        }
        _ => {
            let d = 1 + rng.below(16) as usize;
            let rate = rng.uniform(0.0, 0.7);
            (vec![d], vec![Layer::new(LayerKind::Dropout { rate }), head(d)])
        }
    };
    let per: usize = sample_shape.iter().product();
    let mut net = Network::new(sample_shape.clone(), layers, 1).expect("probe architecture");
    randomize(&mut net, rng);
    let mut shape = vec![batch];
    shape.extend(&sample_shape);
    let input = Tensor::new(shape, separated_values(rng, batch * per)).expect("input");
    let target = (0..batch).map(|_| rng.uniform(0.0, 4.0)).collect();
    Probe { net, input, target }
}

pub const LAYER_KINDS: [&str; 6] = ["conv2d", "dense", "relu", "maxpool2d", "flatten", "dropout"];

fn gradient_checks(_: &VerifyOptions, rng: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let mut cases = 0;
    for (kind, name) in LAYER_KINDS.iter().enumerate() {
        for shape in 0..20 {
            cases += 1;
            if let Err(e) = probe_for(kind, rng).check(&format!("{name} #{shape}")) {
                return (cases, Err(e));
            }
        }
    }
    (cases, Ok(()))
}

// ---------------------------------------------------------------- decode

fn decode_contract(_: &VerifyOptions, _: &mut Xoshiro256StarStar) -> (usize, Result<(), String>) {
    let mut prev = 0u8;
    let mut cases = 0;
    for i in 0..=600 {
        cases += 1;
        let s = -1.0 + i as f64 * 0.01;
        let g = match decode_raw(s) {
            Ok(g) => g.value(),
            Err(e) => return (cases, Err(e.to_string())),
        };
        if g > 4 || g < prev {
            return (cases, Err(format!("score {s:.2} -> {g} after {prev}")));
        }
        prev = g;
    }
    let lo = decode_raw(-1.0).map(|g| g.value());
    let hi = decode_raw(5.0).map(|g| g.value());
    if lo != Ok(0) || hi != Ok(4) {
        return (cases, Err(format!("endpoints {lo:?} {hi:?}")));
    }
    (cases, Ok(()))
}
