//! Central finite-difference checks of every backward kernel and of the
//! tiny end-to-end network, all in f64.

use emoadapt_core::model::{ArchitectureSpec, DomainDescriptor, ModelBundle, StepPlan};
use emoadapt_core::tensor_core::{
    attention_pool, attention_pool_backward, avgpool2d, avgpool2d_backward, batchnorm, batchnorm_backward, conv2d,
    conv2d_backward, dense, dense_backward, pad_channels, pad_channels_backward, relu, relu_backward, softmax_xent,
    AttentionParams, BatchNormState, Mode, Padding, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;
/// Denominator floor so entries whose true gradient is ~0 are compared in
/// absolute terms.
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error between `analytic` and the central difference of
/// `loss` around `x` over the given coordinates.
pub fn check(x: &[f64], analytic: &[f64], coords: impl IntoIterator<Item = usize>, loss: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in coords {
        probe[i] = x[i] + H;
        let up = loss(&probe);
        probe[i] = x[i] - H;
        let down = loss(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn check_all(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    check(x, analytic, 0..x.len(), loss)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn weighted(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn with(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
}

fn conv_case(rng: &mut ChaCha8Rng, x_shape: &[usize], k_shape: &[usize], stride: usize, pad: Padding) -> f64 {
    let x = rand_tensor(rng, x_shape);
    let k = rand_tensor(rng, k_shape);
    let y = conv2d(&x, &k, stride, pad).unwrap();
    let w = rand_tensor(rng, y.shape());
    let (dx, dk) = conv2d_backward(&w, &x, &k, stride, pad).unwrap();
    let ex = check_all(x.data(), dx.data(), |v| weighted(&conv2d(&with(x_shape, v), &k, stride, pad).unwrap(), &w));
    let ek = check_all(k.data(), dk.data(), |v| weighted(&conv2d(&x, &with(k_shape, v), stride, pad).unwrap(), &w));
    ex.max(ek)
}

fn bn_case(rng: &mut ChaCha8Rng, mode: Mode) -> f64 {
    let shape = [3, 2, 2, 5];
    let lengths = [5usize, 3, 2];
    let x = rand_tensor(rng, &shape);
    let mut state = BatchNormState::<f64>::new(2);
    state.gamma = Tensor::from_fn(vec![2], |_| rng.random_range(0.5..1.5));
    state.beta = Tensor::from_fn(vec![2], |_| rng.random_range(-0.5..0.5));
    state.running_mean = vec![0.3, -0.2];
    state.running_var = vec![0.8, 1.7];
    let run = |x: &Tensor<f64>, s: &BatchNormState<f64>| {
        let mut s = s.clone();
        batchnorm(x, &mut s, mode, Some(&lengths)).unwrap()
    };
    let (y, cache) = run(&x, &state);
    let w = rand_tensor(rng, y.shape());
    let (dx, dg, db) = batchnorm_backward(&w, &cache, &state).unwrap();
    let ex = check_all(x.data(), dx.data(), |v| weighted(&run(&with(&shape, v), &state).0, &w));
    let eg = check_all(state.gamma.data(), &dg, |v| {
        let mut s = state.clone();
        s.gamma = with(&[2], v);
        weighted(&run(&x, &s).0, &w)
    });
    let eb = check_all(state.beta.data(), &db, |v| {
        let mut s = state.clone();
        s.beta = with(&[2], v);
        weighted(&run(&x, &s).0, &w)
    });
    ex.max(eg).max(eb)
}

fn relu_case(rng: &mut ChaCha8Rng) -> f64 {
    // keep inputs away from the kink
    let shape = [2, 3, 4];
    let x = Tensor::from_fn(shape.to_vec(), |_| {
        let m: f64 = rng.random_range(0.1..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    });
    let y = relu(&x);
    let w = rand_tensor(rng, &shape);
    let dx = relu_backward(&w, &y).unwrap();
    check_all(x.data(), dx.data(), |v| weighted(&relu(&with(&shape, v)), &w))
}

fn pool_case(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [2, 2, 3, 5];
    let lengths = [5usize, 3];
    let x = rand_tensor(rng, &shape);
    let y = avgpool2d(&x, 2, 2, Some(&lengths)).unwrap();
    let w = rand_tensor(rng, y.shape());
    let dx = avgpool2d_backward(&w, &shape, 2, 2, Some(&lengths)).unwrap();
    check_all(x.data(), dx.data(), |v| weighted(&avgpool2d(&with(&shape, v), 2, 2, Some(&lengths)).unwrap(), &w))
}

fn pad_case(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [2, 2, 2, 3];
    let x = rand_tensor(rng, &shape);
    let w = rand_tensor(rng, &[2, 5, 2, 3]);
    let dx = pad_channels_backward(&w, 2).unwrap();
    check_all(x.data(), dx.data(), |v| weighted(&pad_channels(&with(&shape, v), 5).unwrap(), &w))
}

fn dense_case(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[4, 5]);
    let wt = rand_tensor(rng, &[5, 3]);
    let b = rand_tensor(rng, &[3]);
    let up = rand_tensor(rng, &[4, 3]);
    let (dx, dw, db) = dense_backward(&up, &x, &wt, &b).unwrap();
    let f = |x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>| weighted(&dense(x, wt, b).unwrap(), &up);
    let ex = check_all(x.data(), dx.data(), |v| f(&with(&[4, 5], v), &wt, &b));
    let ew = check_all(wt.data(), dw.data(), |v| f(&x, &with(&[5, 3], v), &b));
    let eb = check_all(b.data(), db.data(), |v| f(&x, &wt, &with(&[3], v)));
    ex.max(ew).max(eb)
}

fn attention_case(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [2, 3, 2, 4];
    let lengths = [4usize, 2];
    let x = rand_tensor(rng, &shape);
    let p = AttentionParams {
        proj_w: rand_tensor(rng, &[3, 3]),
        proj_b: rand_tensor(rng, &[3]),
        score: rand_tensor(rng, &[3]),
    };
    let (y, cache) = attention_pool(&x, &lengths, &p).unwrap();
    let w = rand_tensor(rng, y.shape());
    let g = attention_pool_backward(&w, &cache, &p).unwrap();
    let f = |x: &Tensor<f64>, p: &AttentionParams<f64>| weighted(&attention_pool(x, &lengths, p).unwrap().0, &w);
    let ex = check_all(x.data(), g.features.data(), |v| f(&with(&shape, v), &p));
    let ew = check_all(p.proj_w.data(), &g.proj_w, |v| {
        f(&x, &AttentionParams { proj_w: with(&[3, 3], v), ..p.clone() })
    });
    let eb = check_all(p.proj_b.data(), &g.proj_b, |v| {
        f(&x, &AttentionParams { proj_b: with(&[3], v), ..p.clone() })
    });
    let es = check_all(p.score.data(), &g.score, |v| {
        f(&x, &AttentionParams { score: with(&[3], v), ..p.clone() })
    });
    ex.max(ew).max(eb).max(es)
}

fn xent_case(rng: &mut ChaCha8Rng) -> f64 {
    let logits = rand_tensor(rng, &[4, 3]);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let (_, g) = softmax_xent(&logits, &labels).unwrap();
    check_all(logits.data(), g.data(), |v| softmax_xent(&with(&[4, 3], v), &labels).unwrap().0)
}

/// Worst relative error of every layer kernel for one seed.
pub fn layer_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        ("conv3x3_stride1", conv_case(&mut rng, &[2, 3, 5, 6], &[4, 3, 3, 3], 1, Padding::Same)),
        ("conv3x3_stride2", conv_case(&mut rng, &[2, 2, 7, 5], &[3, 2, 3, 3], 2, Padding::Same)),
        ("conv1x1_stride2", conv_case(&mut rng, &[2, 3, 5, 5], &[2, 3, 1, 1], 2, Padding::Same)),
        ("conv3x3_valid", conv_case(&mut rng, &[1, 2, 5, 6], &[2, 2, 3, 3], 1, Padding::None)),
        ("batchnorm_train_masked", bn_case(&mut rng, Mode::Train)),
        ("batchnorm_eval_masked", bn_case(&mut rng, Mode::Eval)),
        ("relu", relu_case(&mut rng)),
        ("avgpool_masked", pool_case(&mut rng)),
        ("pad_channels", pad_case(&mut rng)),
        ("dense", dense_case(&mut rng)),
        ("attention_pool", attention_case(&mut rng)),
        ("softmax_xent", xent_case(&mut rng)),
    ]
}

/// Worst relative error over sampled coordinates of every parameter tensor
/// of the tiny network, trained end to end with softmax cross-entropy.
pub fn end_to_end_error(seed: u64, attention_shared: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ArchitectureSpec {
        attention_shared,
        ..ArchitectureSpec::tiny()
    };
    let mut m = ModelBundle::<f64>::build(spec, &[DomainDescriptor::new("d", 3)], seed).unwrap();
    // non-zero adapters so their gradient path is exercised
    for (info, t) in m.params_mut() {
        if info.name.contains("adapter") {
            for v in t.data_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
    let (n, h, w) = (3, 8, 12);
    let x = rand_tensor(&mut rng, &[n, 1, h, w]);
    let mut x_data = x.data().to_vec();
    let lengths = [12usize, 9, 5];
    for (i, &l) in lengths.iter().enumerate() {
        for y in 0..h {
            for c in l..w {
                x_data[(i * h + y) * w + c] = 0.0;
            }
        }
    }
    let x = with(&[n, 1, h, w], &x_data);
    let labels = [0usize, 2, 1];
    let plan = StepPlan::full();
    let dropout_seed = seed ^ 0xD0;

    let loss = |m: &mut ModelBundle<f64>| {
        let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (logits, trace) = m.forward_train("d", &x, &lengths, &plan, &mut r).unwrap();
        (softmax_xent(&logits, &labels).unwrap(), trace)
    };
    let ((_, g), trace) = loss(&mut m);
    m.backward(&trace, &g, plan.grads).unwrap();

    let n_params = m.params().len();
    let mut worst = 0.0f64;
    for p in 0..n_params {
        let (analytic, len) = {
            let (_, t) = &m.params()[p];
            (t.grad().expect("every parameter receives a gradient").to_vec(), t.numel())
        };
        let coords: Vec<usize> = (0..len.min(3)).map(|_| rng.random_range(0..len)).collect();
        for i in coords {
            let orig = m.params()[p].1.data()[i];
            m.params_mut()[p].1.data_mut()[i] = orig + H;
            let up = loss(&mut m).0 .0;
            m.params_mut()[p].1.data_mut()[i] = orig - H;
            let down = loss(&mut m).0 .0;
            m.params_mut()[p].1.data_mut()[i] = orig;
            worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
        }
    }
    worst
}
