//! Randomized reverse-mode gradients against the central finite-difference
//! oracle: 200 small random graphs, max normalized error below 1e-4.

use driftbench_core::numerics::{finite_diff, grad, Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Leaf values in [-2, 2] staying clear of the abs/relu kink at zero.
fn kink_free_tensor(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let magnitude = rng.random_range(1e-3..2.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * magnitude
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn kink_safe(g: &Graph, id: NodeId) -> bool {
    g.value(id).data().iter().all(|v| v.abs() > 5e-3)
}

/// Build a random graph of depth ≤ 3 over widths ≤ 8 and return
/// (graph, parameter leaves, scalar output).
fn random_graph(seed: u64) -> (Graph, Vec<NodeId>, NodeId) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let mut params = Vec::new();
    let mut pool: Vec<NodeId> = Vec::new();

    for _ in 0..rng.random_range(1..=3usize) {
        let rows = rng.random_range(1..=4usize);
        let cols = rng.random_range(1..=4usize);
        let id = g.leaf(kink_free_tensor(&mut rng, rows, cols));
        params.push(id);
        pool.push(id);
    }

    let depth = rng.random_range(1..=3usize);
    for _ in 0..depth {
        let pick = pool[rng.random_range(0..pool.len())];
        let (rows, cols) = g.value(pick).shape();
        let choice = rng.random_range(0..8u32);
        let new = match choice {
            0 => g.tanh(pick),
            1 if kink_safe(&g, pick) => g.relu(pick),
            2 if kink_safe(&g, pick) => g.abs(pick),
            3 => {
                // Pair with a fresh same-shape parameter.
                let other = g.leaf(kink_free_tensor(&mut rng, rows, cols));
                params.push(other);
                match rng.random_range(0..3u32) {
                    0 => g.add(pick, other).unwrap(),
                    1 => g.sub(pick, other).unwrap(),
                    _ => g.mul(pick, other).unwrap(),
                }
            }
            4 => {
                let out_cols = rng.random_range(1..=4usize);
                let w = g.leaf(kink_free_tensor(&mut rng, cols, out_cols));
                params.push(w);
                g.matmul(pick, w).unwrap()
            }
            5 => {
                // Causal convolution over the rows of the picked node.
                let kernel = rng.random_range(1..=2usize).min(rows);
                let c_out = rng.random_range(1..=3usize);
                let w = g.leaf(kink_free_tensor(&mut rng, c_out, kernel * cols));
                params.push(w);
                g.conv1d(pick, w, kernel, 1).unwrap()
            }
            6 => {
                let s = g.leaf(kink_free_tensor(&mut rng, 1, rows));
                params.push(s);
                g.scale_rows(pick, s).unwrap()
            }
            _ => {
                let b = g.leaf(kink_free_tensor(&mut rng, 1, cols));
                params.push(b);
                g.shift_cols(pick, b).unwrap()
            }
        };
        pool.push(new);
    }

    let last = *pool.last().unwrap();
    let output = g.mean(last);
    (g, params, output)
}

#[test]
fn two_hundred_random_graphs_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for trial in 0..200u64 {
        let (graph, params, output) = random_graph(trial);
        let analytic = grad(&graph, output, &params).unwrap();

        let values: Vec<Tensor> = params.iter().map(|&p| graph.value(p).clone()).collect();
        let mut scratch = graph.clone();
        let numeric = finite_diff(
            |vals: &[Tensor]| {
                for (&p, v) in params.iter().zip(vals) {
                    scratch.set_leaf(p, v.clone())?;
                }
                scratch.forward()?;
                scratch.value(output).as_scalar()
            },
            &values,
            1e-4,
        )
        .unwrap();

        for (a, n) in analytic.iter().zip(&numeric) {
            for (&av, &nv) in a.data().iter().zip(n.data()) {
                let err = (av - nv).abs() / av.abs().max(nv.abs()).max(1.0);
                worst = worst.max(err);
                assert!(
                    err < 1e-4,
                    "trial {trial}: gradient {av} vs finite difference {nv} (err {err})"
                );
            }
        }
    }
    println!("max normalized gradient error over 200 graphs: {worst:.3e}");
}
