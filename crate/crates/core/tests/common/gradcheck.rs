// Central finite differences against the analytic backward pass, in f64.

use drgrade::nnet::{mse_loss, Conv2d, Dense, Layer, LayerKind, Mode, Network, Tensor};
use drgrade::rng::Xoshiro256StarStar;

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
pub const KINDS: [&str; 6] = ["conv2d", "dense", "relu", "maxpool2d", "flatten", "dropout"];

pub struct Case {
    pub net: Network<f64>,
    pub x: Tensor<f64>,
    pub y: Vec<f64>,
}

fn loss_at(net: &mut Network<f64>, x: &Tensor<f64>, y: &[f64]) -> f64 {
    net.reseed_dropout(99);
    let out = net.forward(x.clone()).unwrap();
    mse_loss(&out, y).unwrap().0
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Worst relative error over every input element and every parameter.
pub fn max_rel_error(mut c: Case) -> f64 {
    c.net.set_mode(Mode::Train);
    c.net.reseed_dropout(99);
    let out = c.net.forward(c.x.clone()).unwrap();
    let (_, dl) = mse_loss(&out, &c.y).unwrap();
    let g = c.net.backward_with(&dl, true).unwrap();
    let mut worst = 0.0f64;

    let dx = g.input.unwrap();
    for i in 0..c.x.len() {
        let v = c.x.data()[i];
        c.x.data_mut()[i] = v + H;
        let up = loss_at(&mut c.net, &c.x, &c.y);
        c.x.data_mut()[i] = v - H;
        let down = loss_at(&mut c.net, &c.x, &c.y);
        c.x.data_mut()[i] = v;
        worst = worst.max(rel(dx.data()[i], (up - down) / (2.0 * H)));
    }
    for (li, pg) in g.layers.iter().enumerate() {
        let Some(pg) = pg else { continue };
        for (which, analytic) in [(0, &pg.weights), (1, &pg.bias)] {
            for (i, &a) in analytic.iter().enumerate() {
                let nudge = |net: &mut Network<f64>, d: f64| {
                    let (w, b) = net.layer_mut(li).params_mut().unwrap();
                    if which == 0 {
                        w[i] += d
                    } else {
                        b[i] += d
                    }
                };
                nudge(&mut c.net, H);
                let up = loss_at(&mut c.net, &c.x, &c.y);
                nudge(&mut c.net, -2.0 * H);
                let down = loss_at(&mut c.net, &c.x, &c.y);
                nudge(&mut c.net, H);
                worst = worst.max(rel(a, (up - down) / (2.0 * H)));
            }
        }
    }
    worst
}

pub fn fill_params(net: &mut Network<f64>, r: &mut Xoshiro256StarStar) {
    for i in 0..net.layers().len() {
        if let Some((w, b)) = net.layer_mut(i).params_mut() {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = r.uniform(-1.0, 1.0);
            }
        }
    }
}

/// Distinct values at least 0.01 from zero and 0.02 from each other, so a
/// step of H never crosses a ReLU kink or flips a max-pool winner.
fn spaced(r: &mut Xoshiro256StarStar, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * 0.02 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    r.shuffle(&mut v);
    v
}

fn build(r: &mut Xoshiro256StarStar, shape: Vec<usize>, layers: Vec<Layer<f64>>) -> Case {
    let n = 1 + r.below(3) as usize;
    let mut net = Network::new(shape.clone(), layers, 0).unwrap();
    fill_params(&mut net, r);
    let per: usize = shape.iter().product();
    let mut full = vec![n];
    full.extend(&shape);
    let x = Tensor::new(full, spaced(r, n * per)).unwrap();
    let y = (0..n).map(|_| r.below(5) as f64).collect();
    Case { net, x, y }
}

pub fn dense(i: usize, o: usize) -> Layer<f64> {
    Layer::new(LayerKind::Dense(Dense::zeroed(i, o)))
}

/// A random probe network for one layer kind, followed by whatever is
/// needed to reduce it to a scalar score.
pub fn random_case(kind: &str, r: &mut Xoshiro256StarStar) -> Case {
    let mut pick = |lo: u64, span: u64| (lo + r.below(span)) as usize;
    match kind {
        "conv2d" => {
            let (ci, co, k, s) = (pick(1, 3), pick(1, 4), pick(1, 3), pick(1, 2));
            let (h, w) = (k + pick(0, 6), k + pick(0, 6));
            let flat = co * ((h - k) / s + 1) * ((w - k) / s + 1);
            let layers = vec![
                Layer::new(LayerKind::Conv2d(Conv2d::zeroed(ci, co, k, s))),
                Layer::new(LayerKind::Flatten),
                dense(flat, 1),
            ];
            build(r, vec![ci, h, w], layers)
        }
        "dense" => {
            let (i, o) = (pick(1, 10), pick(1, 8));
            build(r, vec![i], vec![dense(i, o), dense(o, 1)])
        }
        "relu" => {
            let d = pick(1, 20);
            build(r, vec![d], vec![Layer::new(LayerKind::Relu), dense(d, 1)])
        }
        "maxpool2d" => {
            let (c, win, s) = (pick(1, 3), pick(1, 3), pick(1, 3));
            let (h, w) = (win + pick(0, 6), win + pick(0, 6));
            let flat = c * ((h - win) / s + 1) * ((w - win) / s + 1);
            let layers = vec![
                Layer::new(LayerKind::MaxPool2d { window: win, stride: s }),
                Layer::new(LayerKind::Flatten),
                dense(flat, 1),
            ];
            build(r, vec![c, h, w], layers)
        }
        "flatten" => {
            let (c, h, w) = (pick(1, 3), pick(1, 5), pick(1, 5));
            build(r, vec![c, h, w], vec![Layer::new(LayerKind::Flatten), dense(c * h * w, 1)])
        }
        "dropout" => {
            let d = pick(1, 20);
            let rate = r.uniform(0.0, 0.9);
            build(r, vec![d], vec![Layer::new(LayerKind::Dropout { rate }), dense(d, 1)])
        }
        other => panic!("unknown layer kind {other}"),
    }
}
