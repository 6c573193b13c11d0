use chanforge_core::rng::rng_from_seed;
use chanforge_core::tensor::graph::Graph;
use chanforge_core::Tensor;
use std::time::Instant;

#[test]
fn probe_throughput() {
    let mut rng = rng_from_seed(1);
    // matmul 256x512 * 512x512
    let a = Tensor::randn(&[256, 512], &mut rng);
    let b = Tensor::randn(&[512, 512], &mut rng);
    let t0 = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let mut g = Graph::new();
        let av = g.leaf(a.clone(), false);
        let bv = g.leaf(b.clone(), false);
        let _ = g.matmul(av, bv).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * 256.0 * 512.0 * 512.0 * reps as f64;
    println!("matmul: {:.2} GFLOP/s", flops / dt / 1e9);

    // conv workload: (32, 16, 128, 14) with 16->16 3x3
    let x = Tensor::randn(&[32, 16, 128, 14], &mut rng);
    let w = Tensor::randn(&[16, 16, 3, 3], &mut rng);
    let t0 = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone(), false);
        let wv = g.leaf(w.clone(), false);
        let _ = g.conv2d(xv, wv, 1, 1).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * 32.0 * 16.0 * 128.0 * 14.0 * 16.0 * 9.0 * reps as f64;
    println!("conv fwd: {:.2} GFLOP/s", flops / dt / 1e9);

    // conv forward+backward through graph
    let t0 = Instant::now();
    let reps = 5;
    for _ in 0..reps {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone(), true);
        let wv = g.leaf(w.clone(), true);
        let c = g.conv2d(xv, wv, 1, 1).unwrap();
        let l = g.mean_all(c).unwrap();
        let _ = g.backward(l).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 3.0 * 2.0 * 32.0 * 16.0 * 128.0 * 14.0 * 16.0 * 9.0 * reps as f64;
    println!("conv fwd+bwd: {:.2} GFLOP/s", flops / dt / 1e9);
}
