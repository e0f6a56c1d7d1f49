//! Network-level gradient verification against independent oracles:
//! central finite differences for the backward pass, and exact rational
//! arithmetic for the forward pass of ReLU/identity nets.

use anqlab::nnet::{ForwardTrace, GradBuf, Net, NetSpec, OutputActivation};
use anqlab::rng::stream_rng;
use num::BigRational;
use num::FromPrimitive;
use num::ToPrimitive;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Scalar objective: upstream . forward(x).
fn objective(net: &Net, x: &[f64], upstream: &[f64]) -> f64 {
    net.forward(x)
        .unwrap()
        .iter()
        .zip(upstream)
        .map(|(y, u)| y * u)
        .sum()
}

#[test]
fn backward_matches_central_differences_over_100_seeds() {
    for seed in 0..100u64 {
        let mut rng = stream_rng(seed, 0);
        let bounded = seed % 2 == 1;
        let spec = NetSpec::new(
            3,
            &[7, 5],
            2,
            if bounded {
                OutputActivation::Bounded(1.5)
            } else {
                OutputActivation::Identity
            },
        )
        .unwrap();
        let mut net = Net::init(spec, &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut trace = ForwardTrace::new();
        net.forward_trace(&x, &mut trace).unwrap();
        let mut grads = GradBuf::zeros_like(&net);
        let mut d_input = vec![0.0; 3];
        net.backward(&trace, &upstream, &mut grads, Some(&mut d_input))
            .unwrap();

        for p in 0..net.param_count() {
            let orig = net.param(p);
            net.set_param(p, orig + FD_STEP);
            let plus = objective(&net, &x, &upstream);
            net.set_param(p, orig - FD_STEP);
            let minus = objective(&net, &x, &upstream);
            net.set_param(p, orig);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.grad(p);
            assert!(
                rel_err(analytic, numeric) <= REL_TOL,
                "seed {seed} param {p}: analytic {analytic} vs fd {numeric}"
            );
        }
        for (k, analytic) in d_input.iter().enumerate() {
            let mut xp = x.clone();
            xp[k] += FD_STEP;
            let mut xm = x.clone();
            xm[k] -= FD_STEP;
            let numeric =
                (objective(&net, &xp, &upstream) - objective(&net, &xm, &upstream))
                    / (2.0 * FD_STEP);
            assert!(
                rel_err(*analytic, numeric) <= REL_TOL,
                "seed {seed} input {k}: analytic {analytic} vs fd {numeric}"
            );
        }
    }
}

/// Exact re-computation of the ReLU/identity forward pass in arbitrary
/// precision: every f64 is an exact rational, affine maps and ReLU stay
/// exact, so the only error in the f64 path is accumulated rounding.
fn rational_forward(net: &Net, x: &[f64]) -> Vec<f64> {
    let to_q = |v: f64| BigRational::from_f64(v).expect("finite");
    let mut cur: Vec<BigRational> = x.iter().map(|v| to_q(*v)).collect();
    let layers = net.layers();
    for (idx, layer) in layers.iter().enumerate() {
        let in_dim = cur.len();
        let out_dim = layer.b.len();
        let mut next = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let mut sum = to_q(layer.b[o]);
            for i in 0..in_dim {
                sum += to_q(layer.w[o * in_dim + i]) * cur[i].clone();
            }
            if idx + 1 < layers.len() && sum < BigRational::from_f64(0.0).unwrap() {
                sum = BigRational::from_f64(0.0).unwrap();
            }
            next.push(sum);
        }
        cur = next;
    }
    cur.iter().map(|q| q.to_f64().unwrap()).collect()
}

#[test]
fn forward_matches_exact_rational_arithmetic() {
    for seed in 0..25u64 {
        let mut rng = stream_rng(seed, 1);
        let spec = NetSpec::new(4, &[16, 12], 3, OutputActivation::Identity).unwrap();
        let net = Net::init(spec, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fast = net.forward(&x).unwrap();
        let exact = rational_forward(&net, &x);
        for (f, e) in fast.iter().zip(&exact) {
            let scale = e.abs().max(1.0);
            assert!(
                (f - e).abs() / scale < 1e-13,
                "seed {seed}: f64 {f} vs exact {e}"
            );
        }
    }
}
