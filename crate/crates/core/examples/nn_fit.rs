//! Fits XOR with a two-layer tanh network and Adam, then checks one
//! gradient against central differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sibre::nn::{optimizer_step, Activation, DenseNet, GradientSet, Head, OptimizerKind, OptimizerState};

fn loss(net: &DenseNet, data: &[([f64; 2], f64)]) -> f64 {
    data.iter().map(|(x, y)| (net.forward(x).expect("dims")[0] - y).powi(2)).sum::<f64>() / data.len() as f64
}

fn main() {
    let data = [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = DenseNet::new(&[2, 8, 1], Activation::Tanh, Head::Linear, &mut rng);
    let mut opt = OptimizerState::new(OptimizerKind::adam(), &net);
    for epoch in 0..=2000 {
        let mut grads = GradientSet::zeros_like(&net);
        for (x, y) in &data {
            let trace = net.forward_trace(x).expect("dims");
            let d = 2.0 * (trace.output()[0] - y) / data.len() as f64;
            net.accumulate(&trace, &[d], &mut grads).expect("dims");
        }
        if epoch % 500 == 0 {
            println!("epoch {epoch:>4}  mse {:.6}", loss(&net, &data));
        }
        optimizer_step(&mut net, &grads, &mut opt, 0.01);
    }
    let g = net.backward(&[1.0, 0.0], &[1.0]).expect("dims").values().next().expect("params");
    let h = 1e-5;
    let mut plus = net.clone();
    *plus.parameters_mut().next().expect("params") += h;
    let mut minus = net.clone();
    *minus.parameters_mut().next().expect("params") -= h;
    let fd = (plus.forward(&[1.0, 0.0]).expect("dims")[0] - minus.forward(&[1.0, 0.0]).expect("dims")[0]) / (2.0 * h);
    println!("d out / d w0: backprop {g:.8}, finite difference {fd:.8}");
}
