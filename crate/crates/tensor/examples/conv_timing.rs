use std::time::Instant;

use gla_tensor::kernels::{avg_pool3_forward, conv2d_backward, conv2d_forward};
use gla_tensor::Tensor;

fn main() {
    for (cin, cout, k) in [(16, 16, 3), (4, 4, 3), (16, 4, 1), (16, 36, 1)] {
        let x = Tensor::<f32>::from_fn(&[2, cin, 60, 120], |i| (i % 7) as f32 * 0.1);
        let w = Tensor::<f32>::from_fn(&[cout, cin, k, k], |i| (i % 5) as f32 * 0.01);
        let t = Instant::now();
        for _ in 0..20 {
            conv2d_forward(&x, &w, None, 1, k / 2).unwrap();
        }
        let f = t.elapsed() / 20;
        let go = conv2d_forward(&x, &w, None, 1, k / 2).unwrap();
        let t = Instant::now();
        for _ in 0..20 {
            conv2d_backward(&x, &w, &go, 1, k / 2, (true, true, false)).unwrap();
        }
        println!("{cin}->{cout} k{k}: fwd {f:?} bwd {:?}", t.elapsed() / 20);
    }
    let x = Tensor::<f32>::from_fn(&[2, 16, 60, 120], |i| (i % 7) as f32);
    let t = Instant::now();
    for _ in 0..20 {
        avg_pool3_forward(&x).unwrap();
    }
    println!("pool {:?}", t.elapsed() / 20);
}
