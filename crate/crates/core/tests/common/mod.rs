#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sibre::nn::{softmax, Activation, DenseNet, GradientSet, Head};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so partials that are zero up
/// to round-off do not divide by nothing.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

#[derive(Debug, Default)]
pub struct GradientReport {
    pub nets: usize,
    pub per_head: [usize; 3],
    pub max_rel_error: f64,
    pub worst: String,
    /// Largest gap between the generic chain rule and `p - onehot` on the
    /// softmax log-likelihood, relative to the gradient scale.
    pub onehot_max_gap: f64,
}

fn pre_activations(net: &DenseNet, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let mut all = Vec::new();
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let mut z = layer.biases.clone();
        for (i, xi) in x.iter().enumerate() {
            let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
            for (zo, w) in z.iter_mut().zip(row) {
                *zo += w * xi;
            }
        }
        all.extend(&z);
        if l == last {
            break;
        }
        x = z.iter().map(|&v| if net.activation() == Activation::Tanh { v.tanh() } else { v.max(0.0) }).collect();
    }
    all
}

/// Draws an input whose pre-activations all sit at least `margin` away from
/// a kink (ReLU at zero, the Gaussian log-std clamp bounds).
fn smooth_input(net: &DenseNet, rng: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let z = pre_activations(net, &x);
        let hidden_ok = net.activation() == Activation::Tanh || {
            let out = net.output_dim();
            z[..z.len() - out].iter().all(|v| v.abs() > margin)
        };
        let head_ok = match net.head() {
            Head::Gaussian { log_std_min, log_std_max } => {
                let d = net.output_dim() / 2;
                z[z.len() - d..].iter().all(|v| (v - log_std_min).abs() > margin && (v - log_std_max).abs() > margin)
            }
            _ => true,
        };
        if hidden_ok && head_ok {
            return x;
        }
    }
}

fn objective(net: &DenseNet, x: &[f64], upstream: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(upstream).map(|(o, u)| o * u).sum()
}

/// Compares `backward` against central differences of `sum_k u_k out_k` on
/// `count` seeded random nets, cycling through the linear, softmax and
/// Gaussian heads and both activations.
pub fn gradient_suite(count: usize) -> GradientReport {
    let mut report = GradientReport { nets: count, ..Default::default() };
    for n in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + n as u64);
        let activation = if (n / 3) % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let head_id = n % 3;
        let (head, outputs) = match head_id {
            0 => (Head::Linear, rng.gen_range(1..5)),
            1 => (Head::Softmax, rng.gen_range(2..6)),
            _ => (Head::gaussian(), 2 * rng.gen_range(1..3)),
        };
        let mut dims = vec![rng.gen_range(1..6)];
        for _ in 0..rng.gen_range(0..3) {
            dims.push(rng.gen_range(2..9));
        }
        dims.push(outputs);
        let net = DenseNet::new(&dims, activation, head, &mut rng);
        let x = smooth_input(&net, &mut rng, 1e-3);
        let upstream: Vec<f64> = (0..outputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = net.backward(&x, &upstream).unwrap();
        for (k, analytic) in grads.values().enumerate() {
            let mut plus = net.clone();
            *plus.parameters_mut().nth(k).unwrap() += FD_STEP;
            let mut minus = net.clone();
            *minus.parameters_mut().nth(k).unwrap() -= FD_STEP;
            let fd = (objective(&plus, &x, &upstream) - objective(&minus, &x, &upstream)) / (2.0 * FD_STEP);
            let err = relative_error(analytic, fd);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("net {n} {head:?} {activation:?} dims {dims:?} param {k}: {analytic} vs {fd}");
            }
        }
        report.per_head[head_id] += 1;
        if head == Head::Softmax {
            let a = rng.gen_range(0..outputs);
            let trace = net.forward_trace(&x).unwrap();
            let p = trace.output().to_vec();
            let mut generic = GradientSet::zeros_like(&net);
            let mut up = vec![0.0; outputs];
            up[a] = -1.0 / p[a];
            net.accumulate(&trace, &up, &mut generic).unwrap();
            let mut direct = GradientSet::zeros_like(&net);
            let mut d = softmax(trace.logits());
            d[a] -= 1.0;
            net.accumulate_from_logits(&trace, &d, &mut direct);
            let scale = generic.norm().max(1.0);
            let gap = generic.values().zip(direct.values()).map(|(g, h)| (g - h).abs()).fold(0.0, f64::max) / scale;
            report.onehot_max_gap = report.onehot_max_gap.max(gap);
        }
    }
    report
}
