//! Fast kernels against brute-force reference implementations.

use emoadapt_core::dsp::{hann_window, stft_magnitude, HOP_LENGTH, N_FFT};
use emoadapt_core::tensor_core::{conv2d, conv2d_backward, Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Shape {
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: Padding,
}

impl Shape {
    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.k - 1) / 2,
            Padding::None => 0,
        }
    }

    fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.pad() - self.k) / self.stride + 1
    }
}

/// Calls `f(n, co, oy, ox, ci, ky, kx, input_index)` for every in-bounds tap.
fn for_each_tap(s: &Shape, mut f: impl FnMut(usize, usize, usize, usize, usize, usize, usize, usize)) {
    let (oh, ow) = (s.out_len(s.h), s.out_len(s.w));
    for n in 0..s.n {
        for co in 0..s.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..s.c_in {
                        for ky in 0..s.k {
                            for kx in 0..s.k {
                                let y = (oy * s.stride + ky) as isize - s.pad() as isize;
                                let x = (ox * s.stride + kx) as isize - s.pad() as isize;
                                if y < 0 || x < 0 || y >= s.h as isize || x >= s.w as isize {
                                    continue;
                                }
                                let idx = ((n * s.c_in + ci) * s.h + y as usize) * s.w + x as usize;
                                f(n, co, oy, ox, ci, ky, kx, idx);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    let k = [1, 3, 5][rng.random_range(0..3)];
    let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::None };
    Shape {
        n: rng.random_range(1..=3),
        c_in: rng.random_range(1..=4),
        c_out: rng.random_range(1..=5),
        h: rng.random_range(k..=9),
        w: rng.random_range(k..=11),
        k,
        stride: rng.random_range(1..=2),
        padding,
    }
}

#[test]
fn conv_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..60 {
        let s = random_shape(&mut rng);
        let x = Tensor::<f64>::from_fn(vec![s.n, s.c_in, s.h, s.w], |_| rng.random_range(-1.0..1.0));
        let kern = Tensor::<f64>::from_fn(vec![s.c_out, s.c_in, s.k, s.k], |_| rng.random_range(-1.0..1.0));
        let (oh, ow) = (s.out_len(s.h), s.out_len(s.w));
        let mut want = vec![0.0; s.n * s.c_out * oh * ow];
        for_each_tap(&s, |n, co, oy, ox, ci, ky, kx, idx| {
            want[((n * s.c_out + co) * oh + oy) * ow + ox] += x.data()[idx] * kern.data()[((co * s.c_in + ci) * s.k + ky) * s.k + kx];
        });
        let got = conv2d(&x, &kern, s.stride, s.padding).unwrap();
        assert_eq!(got.shape(), [s.n, s.c_out, oh, ow]);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn conv_backward_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let s = random_shape(&mut rng);
        let x = Tensor::<f64>::from_fn(vec![s.n, s.c_in, s.h, s.w], |_| rng.random_range(-1.0..1.0));
        let kern = Tensor::<f64>::from_fn(vec![s.c_out, s.c_in, s.k, s.k], |_| rng.random_range(-1.0..1.0));
        let (oh, ow) = (s.out_len(s.h), s.out_len(s.w));
        let dy = Tensor::<f64>::from_fn(vec![s.n, s.c_out, oh, ow], |_| rng.random_range(-1.0..1.0));
        let mut gx = vec![0.0; x.numel()];
        let mut gk = vec![0.0; kern.numel()];
        for_each_tap(&s, |n, co, oy, ox, ci, ky, kx, idx| {
            let up = dy.data()[((n * s.c_out + co) * oh + oy) * ow + ox];
            let ki = ((co * s.c_in + ci) * s.k + ky) * s.k + kx;
            gx[idx] += up * kern.data()[ki];
            gk[ki] += up * x.data()[idx];
        });
        let (got_x, got_k) = conv2d_backward(&dy, &x, &kern, s.stride, s.padding).unwrap();
        for (g, w) in got_x.data().iter().zip(&gx).chain(got_k.data().iter().zip(&gk)) {
            assert!((g - w).abs() < 1e-11, "{g} vs {w}");
        }
    }
}

#[test]
fn stft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let signal: Vec<f32> = (0..N_FFT + 4 * HOP_LENGTH + 17).map(|_| rng.random_range(-0.5..0.5)).collect();
    let spec = stft_magnitude(&signal).unwrap();
    assert_eq!(spec.frames, 5);
    assert_eq!(spec.bins, N_FFT / 2 + 1);
    let window = hann_window(N_FFT);
    for t in 0..spec.frames {
        let frame: Vec<f64> = (0..N_FFT).map(|i| signal[t * HOP_LENGTH + i] as f64 * window[i]).collect();
        for k in 0..spec.bins {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in frame.iter().enumerate() {
                let phi = -2.0 * std::f64::consts::PI * (k * i) as f64 / N_FFT as f64;
                re += v * phi.cos();
                im += v * phi.sin();
            }
            let want = re.hypot(im);
            assert!((spec.at(k, t) - want).abs() < 1e-9, "frame {t} bin {k}: {} vs {want}", spec.at(k, t));
        }
    }
}
