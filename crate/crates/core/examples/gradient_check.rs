//! Compare backprop against central differences on a tiny reference model.

use drgrade::nnet::{build_reference_model_with, mse_loss, Mode, Tensor};
use drgrade::rng::Xoshiro256StarStar;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1e-5;
    let mut rng = Xoshiro256StarStar::seed_from_u64(3);
    let mut net = build_reference_model_with::<f64>(12, 1, 0.0)?;
    net.set_mode(Mode::Train);
    let x = Tensor::new(vec![2, 3, 12, 12], (0..2 * 3 * 144).map(|_| rng.next_f64()).collect())?;
    let y = [1.0, 3.0];

    let out = net.forward(x.clone())?;
    let (loss, dl) = mse_loss(&out, &y)?;
    let grads = net.backward(&dl)?;
    println!("loss {loss:.6}");

    let loss_at = |net: &mut drgrade::nnet::Network<f64>| mse_loss(&net.forward(x.clone()).unwrap(), &y).unwrap().0;
    for (li, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let mut worst = 0.0f64;
        for i in (0..g.weights.len()).step_by(g.weights.len().div_ceil(25)) {
            net.layer_mut(li).params_mut().unwrap().0[i] += h;
            let up = loss_at(&mut net);
            net.layer_mut(li).params_mut().unwrap().0[i] -= 2.0 * h;
            let down = loss_at(&mut net);
            net.layer_mut(li).params_mut().unwrap().0[i] += h;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((numeric - g.weights[i]).abs() / numeric.abs().max(g.weights[i].abs()).max(1e-3));
        }
        println!("layer {li}: {} weights, worst sampled relative error {worst:.2e}", g.weights.len());
    }
    Ok(())
}
