//! The `(α, β, γ)` cost model: closed-form predictions per scheme, the same
//! quantities read back from a simulation trace, and dollar conversion.
//!
//! A worker's time is `T = αQ + βK + γF` with `Q` store calls (reads plus
//! the result write), `K` matrix entries moved and `F` FLOPs. A phase of `W`
//! workers costs `C = W·T` worker-seconds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::blocked::ceil_div;
use crate::error::{Error, Result};
use crate::sim::SimulationTrace;

/// Dollars per running worker per 100 ms on the reference platform.
pub const LAMBDA_PRICE: f64 = 0.000004897;

/// Billing granularity in seconds.
pub const BILLING_QUANTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Seconds per message.
    pub alpha: f64,
    /// Seconds per matrix entry moved.
    pub beta: f64,
    /// Seconds per FLOP.
    pub gamma: f64,
    /// Entries a worker may receive.
    pub memory: u64,
    /// Dollars per worker per billing quantum.
    pub price: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            alpha: 1e-2,
            beta: 1e-8,
            gamma: 1e-10,
            memory: 48_000_000,
            price: LAMBDA_PRICE,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("price", self.price),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfiguration(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.memory == 0 {
            return Err(Error::InvalidConfiguration("memory must be positive".into()));
        }
        if !(self.alpha > self.beta && self.beta > self.gamma) {
            log::warn!(
                "cost parameters do not satisfy alpha >> beta >> gamma ({}, {}, {})",
                self.alpha,
                self.beta,
                self.gamma
            );
        }
        Ok(())
    }

    pub fn with_memory(mut self, memory: u64) -> Self {
        self.memory = memory;
        self
    }

    /// `log_n M`: the exponent δ in `M = n^δ`.
    pub fn effective_delta(&self, n: usize) -> f64 {
        (self.memory as f64).ln() / (n as f64).ln()
    }
}

/// One phase of a scheme; counts are totals over its workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub name: String,
    pub workers: u64,
    pub messages: u64,
    pub entries: u64,
    pub flops: u64,
    /// Mean per-worker time `αQ + βK + γF`.
    pub t_worker: f64,
    /// Worker-seconds.
    pub c_total: f64,
    pub dollars: f64,
}

impl PhaseCost {
    fn from_totals(
        name: &str,
        workers: u64,
        messages: u64,
        entries: u64,
        flops: u64,
        params: &CostParams,
    ) -> Self {
        let c_total = params.alpha * messages as f64
            + params.beta * entries as f64
            + params.gamma * flops as f64;
        let t_worker = if workers == 0 { 0.0 } else { c_total / workers as f64 };
        PhaseCost {
            name: name.to_string(),
            workers,
            messages,
            entries,
            flops,
            t_worker,
            c_total,
            dollars: dollar_cost(workers, t_worker, params.price),
        }
    }

    /// A phase of `workers` identical workers.
    fn uniform(name: &str, workers: u64, q: u64, k: u64, f: u64, params: &CostParams) -> Self {
        Self::from_totals(name, workers, workers * q, workers * k, workers * f, params)
    }

    pub fn messages_per_worker(&self) -> f64 {
        self.per_worker(self.messages)
    }

    pub fn entries_per_worker(&self) -> f64 {
        self.per_worker(self.entries)
    }

    pub fn flops_per_worker(&self) -> f64 {
        self.per_worker(self.flops)
    }

    fn per_worker(&self, total: u64) -> f64 {
        if self.workers == 0 {
            0.0
        } else {
            total as f64 / self.workers as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub scheme: String,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    /// Chunk width `a` or block size `b`; 0 for measured reports.
    pub block: usize,
    pub phases: Vec<PhaseCost>,
}

impl CostReport {
    pub fn workers(&self) -> u64 {
        self.phases.iter().map(|p| p.workers).sum()
    }

    pub fn messages(&self) -> u64 {
        self.phases.iter().map(|p| p.messages).sum()
    }

    pub fn entries(&self) -> u64 {
        self.phases.iter().map(|p| p.entries).sum()
    }

    pub fn flops(&self) -> u64 {
        self.phases.iter().map(|p| p.flops).sum()
    }

    pub fn c_total(&self) -> f64 {
        self.phases.iter().map(|p| p.c_total).sum()
    }

    pub fn dollars(&self) -> f64 {
        self.phases.iter().map(|p| p.dollars).sum()
    }

    /// Mean time per worker over all phases.
    pub fn t_worker(&self) -> f64 {
        match self.workers() {
            0 => 0.0,
            w => self.c_total() / w as f64,
        }
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseCost> {
        self.phases.iter().find(|p| p.name == name)
    }
}

/// `W · ⌈T / 0.1 s⌉ · price`. A relative slack of 1e-9 keeps exact multiples
/// of the quantum from rounding up.
pub fn dollar_cost(workers: u64, t_worker: f64, price: f64) -> f64 {
    if workers == 0 || t_worker <= 0.0 {
        return 0.0;
    }
    let quanta = (t_worker / BILLING_QUANTUM * (1.0 - 1e-9)).ceil();
    workers as f64 * quanta * price
}

fn memory_chunk(m: u64, n: usize) -> Result<usize> {
    let a = m as usize / (2 * n);
    if a == 0 {
        return Err(Error::InfeasibleMemory(format!(
            "memory {m} is below 2n = {}; a row chunk does not fit",
            2 * n
        )));
    }
    Ok(a)
}

fn memory_block(m: u64) -> Result<usize> {
    let b = ((m as f64 / 2.0).sqrt().floor()) as usize;
    // Guard against floating-point rounding of perfect squares.
    let b = (b.saturating_sub(1)..=b + 1)
        .filter(|&b| 2 * (b * b) as u64 <= m)
        .max()
        .unwrap_or(0);
    if b == 0 {
        return Err(Error::InfeasibleMemory(format!(
            "memory {m} cannot hold two 1x1 blocks"
        )));
    }
    Ok(b)
}

fn check_dims(m: usize, n: usize, l: usize) -> Result<()> {
    if m == 0 || n == 0 || l == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    Ok(())
}

/// Naive scheme with `a = ⌊M / 2n⌋`.
pub fn predict_naive(m: usize, n: usize, l: usize, params: &CostParams) -> Result<CostReport> {
    check_dims(m, n, l)?;
    let a = memory_chunk(params.memory, n)?;
    predict_naive_with(m, n, l, a, params)
}

/// Naive scheme with an explicit chunk width.
pub fn predict_naive_with(
    m: usize,
    n: usize,
    l: usize,
    a: usize,
    params: &CostParams,
) -> Result<CostReport> {
    check_dims(m, n, l)?;
    if a == 0 {
        return Err(Error::invalid("chunk width must be at least 1"));
    }
    let w = (ceil_div(m, a) * ceil_div(l, a)) as u64;
    let (a64, n64) = (a as u64, n as u64);
    Ok(CostReport {
        scheme: "naive".into(),
        m,
        n,
        l,
        block: a,
        phases: vec![PhaseCost::uniform(
            "multiply",
            w,
            3,
            2 * a64 * n64 + a64 * a64,
            2 * a64 * a64 * n64,
            params,
        )],
    })
}

/// Blocked scheme with `b = ⌊√(M/2)⌋`.
pub fn predict_blocked(m: usize, n: usize, l: usize, params: &CostParams) -> Result<CostReport> {
    check_dims(m, n, l)?;
    let b = memory_block(params.memory)?;
    predict_blocked_with(m, n, l, b, params)
}

fn blocked_phases(
    mb: u64,
    lb: u64,
    kb: u64,
    b: u64,
    kept: u64,
    params: &CostParams,
) -> [PhaseCost; 2] {
    [
        PhaseCost::uniform("multiply", mb * lb * kb, 3, 3 * b * b, 2 * b * b * b, params),
        PhaseCost::uniform(
            "reduce",
            mb * lb,
            kept + 1,
            (kept + 1) * b * b,
            kept * b * b,
            params,
        ),
    ]
}

pub fn predict_blocked_with(
    m: usize,
    n: usize,
    l: usize,
    b: usize,
    params: &CostParams,
) -> Result<CostReport> {
    check_dims(m, n, l)?;
    if b == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let (mb, nb, lb) = (ceil_div(m, b), ceil_div(n, b), ceil_div(l, b));
    let [multiply, reduce] = blocked_phases(mb as u64, lb as u64, nb as u64, b as u64, nb as u64, params);
    // one inner block: the products are the output, nothing to reduce
    let phases = if nb == 1 { vec![multiply] } else { vec![multiply, reduce] };
    Ok(CostReport {
        scheme: "blocked".into(),
        m,
        n,
        l,
        block: b,
        phases,
    })
}

/// OverSketch with `z = (N+e)b`: two sketch waves, `N+e` products per output
/// block, and a reduction of the `N` kept partials.
pub fn predict_oversketch(
    m: usize,
    n: usize,
    l: usize,
    b: usize,
    n_keep: usize,
    e: usize,
    params: &CostParams,
) -> Result<CostReport> {
    check_dims(m, n, l)?;
    if b == 0 || n_keep == 0 {
        return Err(Error::invalid("block size and N must be at least 1"));
    }
    if 2 * (b * b) as u64 > params.memory {
        return Err(Error::InfeasibleMemory(format!(
            "two {b}x{b} blocks exceed memory {}",
            params.memory
        )));
    }
    let count = (n_keep + e) as u64;
    let (mb, lb) = (ceil_div(m, b) as u64, ceil_div(l, b) as u64);
    let (b64, n64) = (b as u64, n as u64);
    let sketch = |name: &str, panels: u64| {
        PhaseCost::uniform(name, panels * count, 2, b64 * n64 + b64 * b64, b64 * n64, params)
    };
    let mut phases = vec![sketch("sketch-right", mb), sketch("sketch-left", lb)];
    phases.extend(blocked_phases(mb, lb, count, b64, n_keep as u64, params));
    Ok(CostReport {
        scheme: "oversketch".into(),
        m,
        n,
        l,
        block: b,
        phases,
    })
}

/// Largest chunk width with `2an + a² ≤ M`.
pub fn coded_chunk(n: usize, memory: u64) -> Result<usize> {
    let n = n as f64;
    let mem = memory as f64;
    let mut a = ((n * n + mem).sqrt() - n).floor().max(0.0) as u64;
    while a > 0 && 2 * a * n as u64 + a * a > memory {
        a -= 1;
    }
    while 2 * (a + 1) * n as u64 + (a + 1) * (a + 1) <= memory {
        a += 1;
    }
    if a == 0 {
        return Err(Error::InfeasibleMemory(format!(
            "memory {memory} cannot hold a coded chunk pair for n = {n}"
        )));
    }
    Ok(a as usize)
}

/// Product-coded naive scheme: one parity chunk on each side.
pub fn predict_coded(m: usize, n: usize, l: usize, params: &CostParams) -> Result<CostReport> {
    check_dims(m, n, l)?;
    let a = coded_chunk(n, params.memory)?;
    predict_coded_with(m, n, l, a, params)
}

pub fn predict_coded_with(
    m: usize,
    n: usize,
    l: usize,
    a: usize,
    params: &CostParams,
) -> Result<CostReport> {
    let mut report = predict_naive_with(m, n, l, a, params)?;
    let w = ((ceil_div(m, a) + 1) * (ceil_div(l, a) + 1)) as u64;
    let (a64, n64) = (a as u64, n as u64);
    report.scheme = "coded-naive".into();
    report.phases = vec![PhaseCost::uniform(
        "multiply",
        w,
        3,
        2 * a64 * n64 + a64 * a64,
        2 * a64 * a64 * n64,
        params,
    )];
    Ok(report)
}

/// Counts read back from a trace, one phase per distinct wave label in order
/// of first appearance. Waves sharing a label are pooled.
pub fn measure_costs(trace: &SimulationTrace, params: &CostParams) -> CostReport {
    let mut order: Vec<String> = Vec::new();
    let mut label_of = BTreeMap::new();
    for w in &trace.waves {
        if !order.contains(&w.label) {
            order.push(w.label.clone());
        }
        label_of.insert(w.wave_id, w.label.clone());
    }
    let mut sums: BTreeMap<&str, [u64; 4]> = BTreeMap::new();
    for t in &trace.tasks {
        let label = label_of.get(&t.wave_id).map(String::as_str).unwrap_or("");
        let s = sums.entry(label).or_default();
        s[0] += 1;
        s[1] += t.messages;
        s[2] += t.entries_moved();
        s[3] += t.flops;
    }
    let phases = order
        .iter()
        .map(|name| {
            let s = sums.get(name.as_str()).copied().unwrap_or_default();
            PhaseCost::from_totals(name, s[0], s[1], s[2], s[3], params)
        })
        .collect();
    CostReport {
        scheme: "measured".into(),
        phases,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub phase: String,
    pub field: String,
    pub predicted: u64,
    pub measured: u64,
}

/// Integer mismatches between a prediction and a measurement, phase by phase.
/// A phase present on one side only shows up as a `workers` divergence.
pub fn reconcile(predicted: &CostReport, measured: &CostReport) -> Vec<Divergence> {
    let mut out = Vec::new();
    let mut names: Vec<&str> = predicted.phases.iter().map(|p| p.name.as_str()).collect();
    for p in &measured.phases {
        if !names.contains(&p.name.as_str()) {
            names.push(&p.name);
        }
    }
    let zero = |name: &str| PhaseCost::from_totals(name, 0, 0, 0, 0, &CostParams::default());
    for name in names {
        let p = predicted.phase(name).cloned().unwrap_or_else(|| zero(name));
        let m = measured.phase(name).cloned().unwrap_or_else(|| zero(name));
        for (field, a, b) in [
            ("workers", p.workers, m.workers),
            ("messages", p.messages, m.messages),
            ("entries", p.entries, m.entries),
            ("flops", p.flops, m.flops),
        ] {
            if a != b {
                out.push(Divergence {
                    phase: name.to_string(),
                    field: field.to_string(),
                    predicted: a,
                    measured: b,
                });
            }
        }
    }
    out
}

/// Totals with real-valued `a = M/2n` and `b = √(M/2)` and no padding; used
/// for asymptotic slope checks where integer chunk sizes would be infeasible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTotals {
    pub workers: f64,
    pub messages: f64,
    pub entries: f64,
    pub flops: f64,
}

impl ContinuousTotals {
    pub fn c_total(&self, params: &CostParams) -> f64 {
        params.alpha * self.messages + params.beta * self.entries + params.gamma * self.flops
    }
}

pub fn continuous_naive(m: f64, n: f64, l: f64, memory: f64) -> ContinuousTotals {
    let a = memory / (2.0 * n);
    let w = m * l / (a * a);
    ContinuousTotals {
        workers: w,
        messages: 3.0 * w,
        entries: w * (2.0 * a * n + a * a),
        flops: w * 2.0 * a * a * n,
    }
}

pub fn continuous_blocked(m: f64, n: f64, l: f64, memory: f64) -> ContinuousTotals {
    let b = (memory / 2.0).sqrt();
    let w_comp = m * l * n / b.powi(3);
    let w_red = m * l / (b * b);
    let k = n / b;
    ContinuousTotals {
        workers: w_comp + w_red,
        messages: 3.0 * w_comp + w_red * (k + 1.0),
        entries: w_comp * 3.0 * b * b + w_red * (k + 1.0) * b * b,
        flops: w_comp * 2.0 * b.powi(3) + w_red * k * b * b,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// One CSV row per (report, phase) plus a `total` row per report.
pub fn write_reports_csv<W: Write>(reports: &[CostReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "scheme", "m", "n", "l", "block", "phase", "workers", "messages", "entries", "flops",
        "t_worker", "c_total", "dollars",
    ])?;
    for r in reports {
        let head = [
            r.scheme.clone(),
            r.m.to_string(),
            r.n.to_string(),
            r.l.to_string(),
            r.block.to_string(),
        ];
        let rows = r
            .phases
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.workers,
                    p.messages,
                    p.entries,
                    p.flops,
                    p.t_worker,
                    p.c_total,
                    p.dollars,
                )
            })
            .chain(std::iter::once((
                "total".to_string(),
                r.workers(),
                r.messages(),
                r.entries(),
                r.flops(),
                r.t_worker(),
                r.c_total(),
                r.dollars(),
            )));
        for (name, w, q, k, f, t, c, d) in rows {
            let mut rec = head.to_vec();
            rec.extend([
                name,
                w.to_string(),
                q.to_string(),
                k.to_string(),
                f.to_string(),
                format!("{t:.9e}"),
                format!("{c:.9e}"),
                format!("{d:.9e}"),
            ]);
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
