#![allow(dead_code)]

use containment_core::topology::Topology;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0))
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
}

/// A follower graph where follower 0 is pinned and every other follower has
/// an in-edge from a lower index, so every follower is reachable.
pub fn reachable_topology(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Topology<f64> {
    build_reachable(rng, n, m, false)
}

/// Same construction with every follower edge mirrored.
pub fn undirected_topology(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Topology<f64> {
    build_reachable(rng, n, m, true)
}

fn build_reachable(rng: &mut ChaCha8Rng, n: usize, m: usize, mirror: bool) -> Topology<f64> {
    let mut fe: Vec<(usize, usize, f64)> = Vec::new();
    for i in 1..n {
        fe.push((rng.gen_range(0..i), i, rng.gen_range(0.2..2.0)));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.25) && !fe.iter().any(|&(a, b, _)| a == j && b == i) {
                fe.push((j, i, rng.gen_range(0.2..2.0)));
            }
        }
    }
    if mirror {
        let mut sym: Vec<(usize, usize, f64)> = Vec::new();
        for &(a, b, w) in &fe {
            if !sym.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a)) {
                sym.push((a, b, w));
                sym.push((b, a, w));
            }
        }
        fe = sym;
    }
    let mut pe = vec![(0, 0, rng.gen_range(0.2..2.0))];
    for k in 0..m {
        for i in 0..n {
            if (k, i) != (0, 0) && rng.gen_bool(0.3) {
                pe.push((k, i, rng.gen_range(0.2..2.0)));
            }
        }
    }
    Topology::from_edges(n, m, &fe, &pe).unwrap()
}
