use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::blocked::{ceil_div, multiply_flops};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::{Simulator, WaveKind, WorkerTask};

use super::{check_budget, MultiplyPlan};

/// Which product-code tasks are treated as lost.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodedStragglers {
    /// Wait for every task.
    #[default]
    None,
    /// These `(row, col)` cells of the `(r+1) × (c+1)` grid never return.
    /// Index `r` (resp. `c`) is the parity row (column).
    Explicit(Vec<(usize, usize)>),
    /// Collect results in order of sampled duration until the data blocks
    /// can be decoded.
    Simulated,
}

#[derive(Clone, Debug)]
pub struct CodedOutput {
    pub product: DenseMatrix,
    pub plan: MultiplyPlan,
    /// Grid cells that were not waited for.
    pub lost: Vec<(usize, usize)>,
    /// Data cells rebuilt by the decoder, in decode order.
    pub recovered: Vec<(usize, usize)>,
    /// Additions spent decoding; not charged to any worker.
    pub decode_flops: u64,
    pub waves: std::ops::Range<usize>,
}

/// Peeling decoder for the `(r+1) × (c+1)` product code. Each row and column
/// of the grid is a parity line: its last cell is the sum of the others, so a
/// line with a single missing cell can be completed. Returns the cells
/// rebuilt in order, or the data cells that stay missing.
pub fn decode_order(
    r: usize,
    c: usize,
    lost: &BTreeSet<(usize, usize)>,
) -> std::result::Result<Vec<(usize, usize)>, Vec<(usize, usize)>> {
    let mut missing = lost.clone();
    let mut order = Vec::new();
    loop {
        let mut progress = false;
        for i in 0..=r {
            let gaps: Vec<_> = (0..=c).filter(|&j| missing.contains(&(i, j))).collect();
            if gaps.len() == 1 {
                missing.remove(&(i, gaps[0]));
                order.push((i, gaps[0]));
                progress = true;
            }
        }
        for j in 0..=c {
            let gaps: Vec<_> = (0..=r).filter(|&i| missing.contains(&(i, j))).collect();
            if gaps.len() == 1 {
                missing.remove(&(gaps[0], j));
                order.push((gaps[0], j));
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    let data_missing: Vec<_> = missing.into_iter().filter(|&(i, j)| i < r && j < c).collect();
    if data_missing.is_empty() {
        Ok(order)
    } else {
        Err(data_missing)
    }
}

fn data_decodable(r: usize, c: usize, lost: &BTreeSet<(usize, usize)>) -> bool {
    decode_order(r, c, lost).is_ok()
}

/// Appends a parity block equal to the sum of the `chunks` blocks of height
/// (`rows = true`) or width `chunk`.
fn with_parity(x: &DenseMatrix, chunk: usize, chunks: usize, rows: bool) -> DenseMatrix {
    if rows {
        let n = x.cols();
        let mut out = DenseMatrix::zeros((chunks + 1) * chunk, n);
        out.set_window(0, 0, x);
        let mut parity = DenseMatrix::zeros(chunk, n);
        for i in 0..chunks {
            parity.add_assign(&x.window(i * chunk, 0, chunk, n)).unwrap();
        }
        out.set_window(chunks * chunk, 0, &parity);
        out
    } else {
        with_parity(&x.transpose(), chunk, chunks, true).transpose()
    }
}

/// Naive scheme protected by one parity row chunk of `A` and one parity
/// column chunk of `B`; worker `(i, j)` multiplies the encoded chunks.
pub fn coded_naive_multiply(
    a: &DenseMatrix,
    b: &DenseMatrix,
    chunk: usize,
    sim: &mut Simulator,
    stragglers: &CodedStragglers,
) -> Result<CodedOutput> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    let plan = MultiplyPlan::coded_naive(m, n, l, chunk)?;
    check_budget(sim, 2 * (chunk * n) as u64)?;
    let (r, c) = (ceil_div(m, chunk), ceil_div(l, chunk));

    let explicit: BTreeSet<(usize, usize)> = match stragglers {
        CodedStragglers::Explicit(cells) => {
            if let Some(bad) = cells.iter().find(|&&(i, j)| i > r || j > c) {
                return Err(Error::invalid(format!(
                    "cell {bad:?} outside the {}x{} coded grid",
                    r + 1,
                    c + 1
                )));
            }
            cells.iter().copied().collect()
        }
        _ => BTreeSet::new(),
    };
    if let Err(lost) = decode_order(r, c, &explicit) {
        return Err(Error::RecoveryFailure { lost });
    }

    let first_wave = sim.next_wave_id();
    let rows = sim.upload(&with_parity(a, chunk, r, true), chunk, n)?;
    let cols = sim.upload(&with_parity(b, chunk, c, false), n, chunk)?;
    let grid = sim.declare(chunk, chunk, r + 1, c + 1);

    let mut tasks = Vec::with_capacity((r + 1) * (c + 1));
    for i in 0..=r {
        for j in 0..=c {
            tasks.push(
                WorkerTask::new(
                    vec![rows.key(i, 0), cols.key(0, j)],
                    vec![grid.key(i, j)],
                    multiply_flops(chunk, n, chunk),
                    |inputs| Ok(vec![inputs[0].matmul(&inputs[1])?]),
                )
                .in_group(i * (c + 1) + j)
                .pre_ignored(explicit.contains(&(i, j))),
            );
        }
    }
    let cell = |t: usize| (t / (c + 1), t % (c + 1));
    let simulated = matches!(stragglers, CodedStragglers::Simulated);
    let outcome = sim.run_wave_until("multiply", tasks, WaveKind::Compute, |tasks, durations| {
        let mut counted: Vec<bool> = tasks.iter().map(|t| !t.pre_ignored).collect();
        if !simulated {
            let time = (0..tasks.len())
                .filter(|&t| counted[t])
                .map(|t| durations[t])
                .fold(0.0, f64::max);
            return Ok((counted, time));
        }
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.sort_by(|&x, &y| durations[x].total_cmp(&durations[y]).then(x.cmp(&y)));
        counted.iter_mut().for_each(|v| *v = false);
        let mut lost: BTreeSet<_> = (0..tasks.len()).map(cell).collect();
        let mut time = 0.0;
        for t in order {
            if data_decodable(r, c, &lost) {
                break;
            }
            counted[t] = true;
            lost.remove(&cell(t));
            time = durations[t];
        }
        Ok((counted, time))
    })?;

    let lost: BTreeSet<_> = outcome.ignored().map(cell).collect();
    let order = decode_order(r, c, &lost).map_err(|lost| Error::RecoveryFailure { lost })?;

    let mut blocks: Vec<Vec<Option<DenseMatrix>>> = (0..=r)
        .map(|i| {
            (0..=c)
                .map(|j| {
                    if lost.contains(&(i, j)) {
                        None
                    } else {
                        sim.store().peek(&grid.key(i, j)).map(|p| (**p).clone())
                    }
                })
                .collect()
        })
        .collect();

    // Rebuild along whichever line has the cell as its only gap.
    let mut decode_flops = 0u64;
    let entries = (chunk * chunk) as u64;
    for &(i, j) in &order {
        let row_ready = (0..=c).all(|k| k == j || blocks[i][k].is_some());
        let line: Vec<(usize, usize)> = if row_ready {
            (0..=c).filter(|&k| k != j).map(|k| (i, k)).collect()
        } else {
            (0..=r).filter(|&k| k != i).map(|k| (k, j)).collect()
        };
        // Parity cell = sum of the data cells; a data cell = parity - others.
        let parity_pos = if row_ready { c } else { r };
        let target_is_parity = if row_ready { j == c } else { i == r };
        let mut acc = DenseMatrix::zeros(chunk, chunk);
        for (p, q) in line {
            let blk = blocks[p][q].as_ref().ok_or(Error::RecoveryFailure {
                lost: vec![(p, q)],
            })?;
            let is_parity = if row_ready { q == parity_pos } else { p == parity_pos };
            if target_is_parity || is_parity {
                acc.add_assign(blk)?;
            } else {
                acc = acc.sub(blk)?;
            }
            decode_flops += entries;
        }
        blocks[i][j] = Some(acc);
    }

    let mut product = DenseMatrix::zeros(r * chunk, c * chunk);
    for (i, row) in blocks.iter().enumerate().take(r) {
        for (j, blk) in row.iter().enumerate().take(c) {
            let blk = blk.as_ref().ok_or(Error::RecoveryFailure { lost: vec![(i, j)] })?;
            product.set_window(i * chunk, j * chunk, blk);
        }
    }
    let recovered = order.into_iter().filter(|&(i, j)| i < r && j < c).collect();
    Ok(CodedOutput {
        product: product.window(0, 0, m, l),
        plan,
        lost: lost.into_iter().collect(),
        recovered,
        decode_flops,
        waves: first_wave..sim.next_wave_id(),
    })
}
