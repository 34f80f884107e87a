//! k-d tree neighbour search checked against brute force.

use nalgebra::DMatrix;
use nonprob::matching::{brute_force_knn, knn_query, KdTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nonprob::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let donors = DMatrix::from_fn(5000, 3, |_, _| rng.random::<f64>());
    let queries = DMatrix::from_fn(200, 3, |_, _| rng.random::<f64>());

    let tree = KdTree::build(&donors);
    let (idx, dist) = tree.query(&[0.5, 0.5, 0.5], 5, 0.0);
    println!("5 nearest to the centre: {idx:?}");
    println!("distances: {:?}", dist.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>());

    let fast = knn_query(&donors, &queries, 5, 0.0)?;
    let slow = brute_force_knn(&donors, &queries, 5, 0.0)?;
    println!("tree and brute force agree on {} queries: {}", queries.nrows(), fast.indices == slow.indices);
    Ok(())
}
