use crate::blocked::{assemble, multiply_flops};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::{Simulator, TerminationRule, WaveKind, WorkerTask};

use super::{check_budget, MultiplyOutput, MultiplyPlan};

/// Row-block times column-block: worker `(i, j)` fetches the `a × n` panel
/// `A(i, :)` and the `n × a` panel `B(:, j)` and writes the `a × a` block
/// `C(i, j)`.
pub fn naive_multiply(
    a: &DenseMatrix,
    b: &DenseMatrix,
    chunk: usize,
    sim: &mut Simulator,
) -> Result<MultiplyOutput> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    let plan = MultiplyPlan::naive(m, n, l, chunk)?;
    check_budget(sim, 2 * (chunk * n) as u64)?;

    let first_wave = sim.next_wave_id();
    let rows = sim.upload(a, chunk, n)?;
    let cols = sim.upload(b, n, chunk)?;
    let c = sim.declare(chunk, chunk, rows.grid_rows, cols.grid_cols);

    let mut tasks = Vec::with_capacity(plan.total_tasks());
    for i in 0..c.grid_rows {
        for j in 0..c.grid_cols {
            tasks.push(
                WorkerTask::new(
                    vec![rows.key(i, 0), cols.key(0, j)],
                    vec![c.key(i, j)],
                    multiply_flops(chunk, n, chunk),
                    |inputs| Ok(vec![inputs[0].matmul(&inputs[1])?]),
                )
                .in_group(i * c.grid_cols + j),
            );
        }
    }
    sim.run_wave("multiply", tasks, WaveKind::Compute, TerminationRule::wait_all())?;
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
    use crate::sim::SimConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eight_cubed_sixteen_tasks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseMatrix::random_normal(8, 8, &mut rng);
        let b = DenseMatrix::random_normal(8, 8, &mut rng);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let out = naive_multiply(&a, &b, 2, &mut sim).unwrap();
        assert_eq!(sim.trace().tasks.len(), 16);
        let exact = a.matmul(&b).unwrap();
        let rel = out.product.sub(&exact).unwrap().frobenius_norm() / exact.frobenius_norm();
        assert!(rel <= 1e-10);
        for t in &sim.trace().tasks {
            assert_eq!(t.bytes_read, 8 * 2 * 2 * 8);
            assert_eq!(t.bytes_written, 8 * 4);
        }
    }

    #[test]
    fn identity_left_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = DenseMatrix::random_normal(6, 5, &mut rng);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let out = naive_multiply(&DenseMatrix::identity(6), &b, 4, &mut sim).unwrap();
        assert_eq!(out.product, b);
    }

    #[test]
    fn zero_chunk_rejected() {
        let a = DenseMatrix::identity(2);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        assert!(matches!(
            naive_multiply(&a, &a, 0, &mut sim),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn budget_violation() {
        let a = DenseMatrix::identity(8);
        let mut config = SimConfig::default();
        config.memory_budget = Some(31);
        let mut sim = Simulator::new(config).unwrap();
        assert!(matches!(
            naive_multiply(&a, &a, 2, &mut sim),
            Err(Error::MemoryBudget { needed: 32, budget: 31 })
        ));
    }
}
