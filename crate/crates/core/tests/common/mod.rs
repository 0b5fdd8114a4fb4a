// Independent reference implementations used by the integration tests.
// Nothing here calls into the code under test except for plain data types.
#![allow(dead_code)]

pub mod gradcheck;

use std::path::PathBuf;

use drgrade::data::{synth_samples, SynthConfig};
use drgrade::imgproc::{Image8, ImageRgb8};
use drgrade::nnet::{LayerKind, Network, Scalar};
use drgrade::rng::Xoshiro256StarStar;

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

pub fn random_gray(r: &mut Xoshiro256StarStar, w: usize, h: usize) -> Image8 {
    Image8::from_fn(w, h, |_, _| r.below(256) as u8).unwrap()
}

pub fn random_rgb(r: &mut Xoshiro256StarStar, w: usize, h: usize) -> ImageRgb8 {
    ImageRgb8::from_fn(w, h, |_, _| [r.below(256) as u8, r.below(256) as u8, r.below(256) as u8]).unwrap()
}

/// Kappa from its definition with O, E and W built in separate loops.
pub fn oracle_qwk(truth: &[usize], pred: &[usize], k: usize) -> Option<f64> {
    let n = truth.len() as f64;
    let mut o = vec![vec![0.0f64; k]; k];
    let mut hist_t = vec![0.0f64; k];
    let mut hist_p = vec![0.0f64; k];
    for i in 0..truth.len() {
        o[truth[i]][pred[i]] += 1.0;
        hist_t[truth[i]] += 1.0;
        hist_p[pred[i]] += 1.0;
    }
    let mut w = vec![vec![0.0f64; k]; k];
    let mut e = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            let d = i as f64 - j as f64;
            w[i][j] = d * d / ((k - 1) * (k - 1)) as f64;
            e[i][j] = hist_t[i] * hist_p[j] / n;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            num += w[i][j] * o[i][j];
            den += w[i][j] * e[i][j];
        }
    }
    if den == 0.0 {
        None
    } else {
        Some(1.0 - num / den)
    }
}

pub fn oracle_median(img: &Image8, k: usize) -> Image8 {
    let r = (k / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    Image8::from_fn(img.width(), img.height(), |x, y| {
        let mut win = vec![];
        for yy in y as i64 - r..=y as i64 + r {
            for xx in x as i64 - r..=x as i64 + r {
                win.push(img.get(xx.max(0).min(w - 1) as usize, yy.max(0).min(h - 1) as usize));
            }
        }
        win.sort();
        win[win.len() / 2]
    })
    .unwrap()
}

pub fn oracle_global_he(img: &Image8) -> Vec<u8> {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let n = img.pixels().len() as f64;
    let mut map = [0u8; 256];
    let mut cum = 0u64;
    for v in 0..256 {
        cum += hist[v];
        map[v] = (255.0 * cum as f64 / n).round() as u8;
    }
    img.pixels().iter().map(|&p| map[p as usize]).collect()
}

/// Inclusive bounds (x0, y0, x1, y1) of pixels whose luma exceeds the threshold.
pub fn oracle_bounds(img: &ImageRgb8, threshold: u8) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [r, g, bl] = img.get(x, y);
            let l = (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * bl as f64).round();
            if l > threshold as f64 {
                b = Some(match b {
                    None => (x, y, x, y),
                    Some((a, c, d, e)) => (a.min(x), c.min(y), d.max(x), e.max(y)),
                });
            }
        }
    }
    b
}

pub fn oracle_resize(img: &Image8, side: usize) -> Image8 {
    let sx = img.width() as f64 / side as f64;
    let sy = img.height() as f64 / side as f64;
    Image8::from_fn(side, side, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).max(0.0).min((img.width() - 1) as f64);
        let fy = ((y as f64 + 0.5) * sy - 0.5).max(0.0).min((img.height() - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let p = |x: usize, y: usize| img.get(x, y) as f64;
        let top = p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax;
        let bot = p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax;
        (top * (1.0 - ay) + bot * ay).round() as u8
    })
    .unwrap()
}

/// Eval-mode forward of one sample with plain nested loops, in f64.
pub fn oracle_forward<T: Scalar>(net: &Network<T>, input: &[T]) -> f64 {
    let mut shape: Vec<usize> = net.input_shape().to_vec();
    let mut x: Vec<f64> = input.iter().map(|&v| v.as_f64()).collect();
    for layer in net.layers() {
        match &layer.kind {
            LayerKind::Conv2d(c) => {
                let (h, w) = (shape[1], shape[2]);
                let oh = (h - c.kernel) / c.stride + 1;
                let ow = (w - c.kernel) / c.stride + 1;
                let mut y = vec![0.0; c.out_channels * oh * ow];
                for o in 0..c.out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = c.bias[o].as_f64();
                            for i in 0..c.in_channels {
                                for ky in 0..c.kernel {
                                    for kx in 0..c.kernel {
                                        let wi = ((o * c.in_channels + i) * c.kernel + ky) * c.kernel + kx;
                                        let xi = (i * h + oy * c.stride + ky) * w + ox * c.stride + kx;
                                        s += c.weights[wi].as_f64() * x[xi];
                                    }
                                }
                            }
                            y[(o * oh + oy) * ow + ox] = s;
                        }
                    }
                }
                x = y;
                shape = vec![c.out_channels, oh, ow];
            }
            LayerKind::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            LayerKind::MaxPool2d { window, stride } => {
                let (ch, h, w) = (shape[0], shape[1], shape[2]);
                let oh = (h - window) / stride + 1;
                let ow = (w - window) / stride + 1;
                let mut y = vec![f64::NEG_INFINITY; ch * oh * ow];
                for c in 0..ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ky in 0..*window {
                                for kx in 0..*window {
                                    let v = x[(c * h + oy * stride + ky) * w + ox * stride + kx];
                                    let slot = &mut y[(c * oh + oy) * ow + ox];
                                    *slot = slot.max(v);
                                }
                            }
                        }
                    }
                }
                x = y;
                shape = vec![ch, oh, ow];
            }
            LayerKind::Flatten => shape = vec![x.len()],
            LayerKind::Dense(d) => {
                x = (0..d.out_dim)
                    .map(|o| {
                        d.bias[o].as_f64()
                            + (0..d.in_dim).map(|i| d.weights[o * d.in_dim + i].as_f64() * x[i]).sum::<f64>()
                    })
                    .collect();
                shape = vec![d.out_dim];
            }
            LayerKind::Dropout { .. } => {}
        }
    }
    x[0]
}

/// The golden source is the grade 2 image of a small seeded synthetic set.
pub fn golden_source() -> ImageRgb8 {
    let cfg = SynthConfig { n_per_class: 1, side: 160, noise_sd: 3.0, seed: 2024 };
    synth_samples(&cfg).unwrap().swap_remove(2).image
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
