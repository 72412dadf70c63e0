//! Block partitioning and the object-store addressing scheme.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::ObjectStore;

/// Opaque identifier of a distributed matrix inside an object store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatrixId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockKey {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
}

impl BlockKey {
    pub fn new(matrix: MatrixId, row: usize, col: usize) -> Self {
        BlockKey { matrix, row, col }
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}[{},{}]", self.matrix.0, self.row, self.col)
    }
}

/// Metadata of a matrix stored as a grid of equally sized blocks.
///
/// Blocks are usually `b × b`; row- and column-panels (`b × n`, `n × b`) use
/// the same type with rectangular blocks. The logical extent is
/// `grid_rows·block_rows × grid_cols·block_cols`, zero-padded past the
/// original matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedMatrix {
    pub id: MatrixId,
    pub block_rows: usize,
    pub block_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl BlockedMatrix {
    pub fn key(&self, row: usize, col: usize) -> BlockKey {
        debug_assert!(row < self.grid_rows && col < self.grid_cols);
        BlockKey::new(self.id, row, col)
    }

    pub fn keys(&self) -> impl Iterator<Item = BlockKey> + '_ {
        (0..self.grid_rows).flat_map(move |r| (0..self.grid_cols).map(move |c| self.key(r, c)))
    }

    pub fn padded_rows(&self) -> usize {
        self.grid_rows * self.block_rows
    }

    pub fn padded_cols(&self) -> usize {
        self.grid_cols * self.block_cols
    }

    pub fn block_entries(&self) -> usize {
        self.block_rows * self.block_cols
    }
}

pub(crate) fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Splits `a` into `b × b` blocks and uploads them under `id`.
pub fn partition(
    a: &DenseMatrix,
    b: usize,
    id: MatrixId,
    store: &mut ObjectStore,
) -> Result<BlockedMatrix> {
    partition_with(a, b, b, id, store)
}

/// Splits `a` into `block_rows × block_cols` blocks, zero-padding the last
/// block row and column.
pub fn partition_with(
    a: &DenseMatrix,
    block_rows: usize,
    block_cols: usize,
    id: MatrixId,
    store: &mut ObjectStore,
) -> Result<BlockedMatrix> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("cannot partition a matrix with a zero dimension"));
    }
    if block_rows == 0 || block_cols == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let meta = BlockedMatrix {
        id,
        block_rows,
        block_cols,
        grid_rows: ceil_div(a.rows(), block_rows),
        grid_cols: ceil_div(a.cols(), block_cols),
    };
    for r in 0..meta.grid_rows {
        for c in 0..meta.grid_cols {
            let block = a.window(r * block_rows, c * block_cols, block_rows, block_cols);
            store.seed(meta.key(r, c), Arc::new(block))?;
        }
    }
    Ok(meta)
}

/// Reassembles the top-left `rows × cols` region of a blocked matrix.
pub fn assemble(
    m: &BlockedMatrix,
    rows: usize,
    cols: usize,
    store: &ObjectStore,
) -> Result<DenseMatrix> {
    if rows > m.padded_rows() || cols > m.padded_cols() {
        return Err(Error::invalid(format!(
            "requested {rows}x{cols} exceeds the {}x{} grid extent",
            m.padded_rows(),
            m.padded_cols()
        )));
    }
    let mut out = DenseMatrix::zeros(rows, cols);
    for key in m.keys() {
        let block = store.peek(&key).ok_or(Error::IncompleteMatrix(key))?;
        out.set_window(key.row * m.block_rows, key.col * m.block_cols, block);
    }
    Ok(out)
}

/// Dense product of two blocks.
pub fn local_multiply(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    x.matmul(y)
}

/// FLOPs charged for multiplying a `p × q` block by a `q × r` block.
pub fn multiply_flops(p: usize, q: usize, r: usize) -> u64 {
    2 * (p * q * r) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triple_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn four_by_four_into_two_by_two_grid() {
        let mut store = ObjectStore::new();
        let a = DenseMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let m = partition(&a, 2, MatrixId(0), &mut store).unwrap();
        assert_eq!((m.grid_rows, m.grid_cols), (2, 2));
        assert_eq!(store.len(), 4);
        assert_eq!(assemble(&m, 4, 4, &store).unwrap(), a);
    }

    #[test]
    fn five_by_four_pads_bottom_row() {
        let mut store = ObjectStore::new();
        let a = DenseMatrix::from_fn(5, 4, |i, j| 1.0 + (i * 4 + j) as f64);
        let m = partition(&a, 2, MatrixId(0), &mut store).unwrap();
        assert_eq!((m.grid_rows, m.grid_cols), (3, 2));
        let bottom = store.peek(&m.key(2, 0)).unwrap();
        assert_eq!(bottom.row(0), a.row(4)[..2].to_vec().as_slice());
        assert_eq!(bottom.row(1), &[0.0, 0.0]);
        assert_eq!(assemble(&m, 5, 4, &store).unwrap(), a);
    }

    #[test]
    fn reference_shape_at_desk_scale() {
        let b = 16;
        let mut store = ObjectStore::new();
        let a = DenseMatrix::zeros(10 * b, 60 * b);
        let m = partition(&a, b, MatrixId(0), &mut store).unwrap();
        assert_eq!((m.grid_rows, m.grid_cols), (10, 60));
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut store = ObjectStore::new();
        let a = DenseMatrix::zeros(0, 3);
        assert!(matches!(
            partition(&a, 2, MatrixId(0), &mut store),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn round_trip_seven_by_nine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::random_normal(7, 9, &mut rng);
        let mut store = ObjectStore::new();
        let m = partition(&a, 4, MatrixId(1), &mut store).unwrap();
        assert_eq!(assemble(&m, 7, 9, &store).unwrap(), a);
    }

    #[test]
    fn assemble_missing_block_names_key() {
        let mut store = ObjectStore::new();
        let a = DenseMatrix::from_fn(4, 4, |i, j| (i + j) as f64);
        let m = partition(&a, 2, MatrixId(5), &mut store).unwrap();
        store.delete(&m.key(1, 0));
        match assemble(&m, 4, 4, &store) {
            Err(Error::IncompleteMatrix(k)) => assert_eq!(k, m.key(1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assemble_all_zero() {
        let mut store = ObjectStore::new();
        let m = partition(&DenseMatrix::zeros(6, 3), 4, MatrixId(0), &mut store).unwrap();
        assert_eq!(assemble(&m, 6, 3, &store).unwrap(), DenseMatrix::zeros(6, 3));
    }

    #[test]
    fn local_multiply_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = DenseMatrix::random_normal(5, 5, &mut rng);
        assert_eq!(local_multiply(&DenseMatrix::identity(5), &y).unwrap(), y);
    }

    #[test]
    fn local_multiply_two_by_two() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let expected = DenseMatrix::from_rows(&[vec![19.0, 22.0], vec![43.0, 50.0]]).unwrap();
        assert_eq!(local_multiply(&x, &y).unwrap(), expected);
        assert_eq!(multiply_flops(8, 8, 8), 1024);
    }

    #[test]
    fn local_multiply_dimension_mismatch() {
        let x = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            local_multiply(&x, &x),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn local_multiply_random_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DenseMatrix::random_normal(8, 8, &mut rng);
        let y = DenseMatrix::random_normal(8, 8, &mut rng);
        let oracle = triple_loop(&x, &y);
        let got = local_multiply(&x, &y).unwrap();
        let rel = got.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
        assert!(rel <= 1e-12, "{rel}");
    }

    proptest! {
        #[test]
        fn partition_assemble_round_trip(rows in 1usize..20, cols in 1usize..20, b in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DenseMatrix::random_normal(rows, cols, &mut rng);
            let mut store = ObjectStore::new();
            let m = partition(&a, b, MatrixId(0), &mut store).unwrap();
            prop_assert_eq!(store.len(), rows.div_ceil(b) * cols.div_ceil(b));
            prop_assert_eq!(assemble(&m, rows, cols, &store).unwrap(), a);
        }

        #[test]
        fn local_multiply_matches_triple_loop(p in 1usize..64, q in 1usize..64, r in 1usize..64, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DenseMatrix::random_normal(p, q, &mut rng);
            let y = DenseMatrix::random_normal(q, r, &mut rng);
            let oracle = triple_loop(&x, &y);
            let got = local_multiply(&x, &y).unwrap();
            let rel = got.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
            prop_assert!(rel <= 1e-10);
        }

        #[test]
        fn padding_preserves_product(m in 1usize..12, n in 1usize..12, l in 1usize..12, b in 1usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DenseMatrix::random_normal(m, n, &mut rng);
            let bm = DenseMatrix::random_normal(n, l, &mut rng);
            let pm = m.div_ceil(b) * b;
            let pn = n.div_ceil(b) * b;
            let pl = l.div_ceil(b) * b;
            let padded = a.window(0, 0, pm, pn).matmul(&bm.window(0, 0, pn, pl)).unwrap();
            let exact = a.matmul(&bm).unwrap();
            prop_assert!(padded.window(0, 0, m, l).max_abs_diff(&exact).unwrap() < 1e-12);
        }
    }
}
