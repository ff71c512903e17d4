//! Finite-difference checks of both backward passes against the reference
//! forward pass, skipping coordinates whose step crosses a ReLU or max-pool kink.

use super::*;
use camlab::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const REL: f64 = 1e-3;
pub const ABS: f64 = 1e-5;

pub struct CheckStats {
    pub checked: usize,
    pub failures: Vec<String>,
}

/// Checks `want` parameter coordinates of `backward_params`.
pub fn check_param_grads(seed: u64, want: usize) -> CheckStats {
    let (net, x) = random_small_cnn(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let target = rng.gen_range(0..net.num_classes());
    let trace = net.forward(&x).unwrap();
    let grads = net.backward_params(&trace, target).unwrap();
    let base = params_f64(&net);
    let xin = to_f64(&x);
    let sig0 = ref_forward(&net, &base, &xin).kink_signature(&net, 0);

    let mut stats = CheckStats {
        checked: 0,
        failures: Vec::new(),
    };
    let mut attempts = 0;
    while stats.checked < want && attempts < 20 * want {
        attempts += 1;
        let t = rng.gen_range(0..base.len());
        let j = rng.gen_range(0..base[t].len());
        let eval = |delta: f64| {
            let mut p = base.clone();
            p[t][j] += delta;
            let r = ref_forward(&net, &p, &xin);
            (
                cross_entropy_f64(r.logits(), target),
                r.kink_signature(&net, 0),
            )
        };
        let (plus, sp) = eval(H);
        let (minus, sm) = eval(-H);
        if sp != sig0 || sm != sig0 {
            continue;
        }
        let fd = (plus - minus) / (2.0 * H);
        let an = grads[t].data()[j] as f64;
        stats.checked += 1;
        if !close(an, fd, REL, ABS) {
            stats
                .failures
                .push(format!("net {seed} param[{t}][{j}]: analytic {an} fd {fd}"));
        }
    }
    stats
}

/// Checks `want` activation coordinates of `backward_to_activation` under a
/// random seed vector, i.e. the objective `seed · logits`.
pub fn check_activation_grads(seed: u64, want: usize) -> CheckStats {
    let (net, x) = random_small_cnn(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
    let n = net.num_classes();
    let seed_vec: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let seed_t = Tensor::vector(seed_vec.clone());
    let trace = net.forward(&x).unwrap();
    let params = params_f64(&net);
    let layers = net.layers().len();

    let mut stats = CheckStats {
        checked: 0,
        failures: Vec::new(),
    };
    let mut grads = Vec::new();
    for l in 0..layers {
        grads.push(net.backward_to_activation(&trace, &seed_t, l).unwrap());
    }
    let mut attempts = 0;
    while stats.checked < want && attempts < 20 * want {
        attempts += 1;
        let l = rng.gen_range(0..layers - 1);
        let act = to_f64(&trace.activations[l]);
        let j = rng.gen_range(0..act.len());
        let sig0 = ref_forward_from(&net, &params, Some(l), &act).kink_signature(&net, l + 1);
        let eval = |delta: f64| {
            let mut a = act.clone();
            a[j] += delta;
            let r = ref_forward_from(&net, &params, Some(l), &a);
            let obj: f64 = r
                .logits()
                .iter()
                .zip(&seed_vec)
                .map(|(y, &s)| y * s as f64)
                .sum();
            (obj, r.kink_signature(&net, l + 1))
        };
        let (plus, sp) = eval(H);
        let (minus, sm) = eval(-H);
        if sp != sig0 || sm != sig0 {
            continue;
        }
        let fd = (plus - minus) / (2.0 * H);
        let an = grads[l].data()[j] as f64;
        stats.checked += 1;
        if !close(an, fd, REL, ABS) {
            stats
                .failures
                .push(format!("net {seed} act[{l}][{j}]: analytic {an} fd {fd}"));
        }
    }
    stats
}
