use crate::blocked::{assemble, multiply_flops};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::{Simulator, TerminationRule, WaveKind, WorkerTask};

use super::{check_budget, reduce_wave, MultiplyOutput, MultiplyPlan};

/// Two-phase blocked multiplication. Worker `(i, j, k)` multiplies
/// `A(i, k) · B(k, j)`; reduction worker `(i, j)` sums the `n/b` partials
/// into `C(i, j)`. With a single inner block the products are the output
/// and there is no reduction wave.
pub fn blocked_multiply(
    a: &DenseMatrix,
    b: &DenseMatrix,
    block: usize,
    sim: &mut Simulator,
) -> Result<MultiplyOutput> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    let plan = MultiplyPlan::blocked(m, n, l, block)?;
    check_budget(sim, 2 * (block * block) as u64)?;

    let first_wave = sim.next_wave_id();
    let ab = sim.upload(a, block, block)?;
    let bb = sim.upload(b, block, block)?;
    let (mb, nb, lb) = (ab.grid_rows, ab.grid_cols, bb.grid_cols);
    let c = sim.declare(block, block, mb, lb);
    let partials: Vec<_> = if nb == 1 {
        vec![c]
    } else {
        (0..nb).map(|_| sim.declare(block, block, mb, lb)).collect()
    };

    let mut tasks = Vec::with_capacity(mb * lb * nb);
    for i in 0..mb {
        for j in 0..lb {
            for (k, partial) in partials.iter().enumerate() {
                tasks.push(
                    WorkerTask::new(
                        vec![ab.key(i, k), bb.key(k, j)],
                        vec![partial.key(i, j)],
                        multiply_flops(block, block, block),
                        |inputs| Ok(vec![inputs[0].matmul(&inputs[1])?]),
                    )
                    .in_group(i * lb + j),
                );
            }
        }
    }
    sim.run_wave("multiply", tasks, WaveKind::Compute, TerminationRule::wait_all())?;

    if nb > 1 {
        let sources: Vec<Vec<_>> = (0..mb * lb).map(|_| partials.iter().collect()).collect();
        reduce_wave(sim, &c, &sources)?;
    }

    let product = assemble(&c, m, l, sim.store())?;
    Ok(MultiplyOutput {
        product,
        plan,
        waves: first_wave..sim.next_wave_id(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiply::naive_multiply;
    use crate::sim::SimConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_by_three_grid_sums_three_partials() {
        let b = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DenseMatrix::random_normal(3 * b, 3 * b, &mut rng);
        let bm = DenseMatrix::random_normal(3 * b, 3 * b, &mut rng);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let out = blocked_multiply(&a, &bm, b, &mut sim).unwrap();

        let mut c11 = DenseMatrix::zeros(b, b);
        for k in 0..3 {
            let p = a.window(0, k * b, b, b).matmul(&bm.window(k * b, 0, b, b)).unwrap();
            c11.add_assign(&p).unwrap();
        }
        assert!(out.product.window(0, 0, b, b).max_abs_diff(&c11).unwrap() < 1e-12);
        let trace = sim.trace();
        assert_eq!(trace.waves.len(), 2);
        assert_eq!(trace.waves[0].tasks, 27);
        assert_eq!(trace.waves[1].tasks, 9);
        assert!(trace.tasks_in_wave(1).all(|t| t.messages == 4));
    }

    #[test]
    fn single_block_column_matches_naive() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::random_normal(10, n, &mut rng);
        let bm = DenseMatrix::random_normal(n, 10, &mut rng);
        let mut s1 = Simulator::new(SimConfig::default()).unwrap();
        let mut s2 = Simulator::new(SimConfig::default()).unwrap();
        let blocked = blocked_multiply(&a, &bm, n, &mut s1).unwrap();
        let naive = naive_multiply(&a, &bm, n, &mut s2).unwrap();
        assert_eq!(blocked.product, naive.product);
        let multiply_bytes = |t: &crate::sim::SimulationTrace| -> Vec<u64> {
            t.tasks_in_wave(0).map(|r| r.bytes_read + r.bytes_written).collect()
        };
        assert_eq!(multiply_bytes(s1.trace()), multiply_bytes(s2.trace()));
    }

    #[test]
    fn random_24_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DenseMatrix::random_normal(24, 24, &mut rng);
        let bm = DenseMatrix::random_normal(24, 24, &mut rng);
        let mut s1 = Simulator::new(SimConfig::default()).unwrap();
        let mut s2 = Simulator::new(SimConfig::default()).unwrap();
        let blocked = blocked_multiply(&a, &bm, 8, &mut s1).unwrap().product;
        let naive = naive_multiply(&a, &bm, 8, &mut s2).unwrap().product;
        let rel = blocked.sub(&naive).unwrap().frobenius_norm() / naive.frobenius_norm();
        assert!(rel <= 1e-10);
    }

    #[test]
    fn padded_shapes_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::random_normal(7, 11, &mut rng);
        let bm = DenseMatrix::random_normal(11, 5, &mut rng);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let got = blocked_multiply(&a, &bm, 4, &mut sim).unwrap().product;
        assert!(got.max_abs_diff(&a.matmul(&bm).unwrap()).unwrap() < 1e-12);
    }
}
