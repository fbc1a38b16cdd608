//! FLOP accounting for the robust precoders, in exact rational arithmetic.
//!
//! Complex `l x m` by `m x n` products cost `8lmn - 2ln` FLOPs and an
//! `m x m` complex inverse costs `4m^3/3`. The aggregate `C_f` is the
//! authoritative figure; the itemized per-step counts are kept alongside it
//! and their disagreement, if any, is reported rather than reconciled.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::Serialize;

pub type Flops = Ratio<i128>;

fn r(n: i128) -> Flops {
    Flops::from_integer(n)
}

pub fn flops_matmul(l: u64, m: u64, n: u64) -> Flops {
    let (l, m, n) = (l as i128, m as i128, n as i128);
    r(8 * l * m * n - 2 * l * n)
}

pub fn flops_inverse(m: u64) -> Flops {
    let m = m as i128;
    Flops::new(4 * m * m * m, 3)
}

/// Cost of one alternating iteration (slope of `C_f` in `i_t`).
pub fn per_iteration_cost(n_t: u64, k: u64) -> Flops {
    let (n, k) = (n_t as i128, k as i128);
    flops_inverse(n_t) + r(24 * n * n * k + 2 * n * n + 13 * n * k + 2 * n + 12)
}

/// Iteration-independent part of `C_f`.
pub fn constant_cost(n_t: u64, k: u64) -> Flops {
    let (n, k) = (n_t as i128, k as i128);
    Flops::new(8 * n * n * n, 3) + r(32 * n * n * k + 21 * n * k - 2 * n * n - 2 * n + 12)
}

/// Total FLOPs `C_f` for `i_t` iterations.
pub fn total_cost(n_t: u64, k: u64, i_t: u64) -> Flops {
    per_iteration_cost(n_t, k) * r(i_t as i128) + constant_cost(n_t, k)
}

/// Itemized step costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepCosts {
    #[serde(serialize_with = "ser_ratio")]
    pub common: Flops,
    #[serde(serialize_with = "ser_ratio")]
    pub init_direction: Flops,
    #[serde(serialize_with = "ser_ratio")]
    pub gain: Flops,
    #[serde(serialize_with = "ser_ratio")]
    pub scaling: Flops,
    #[serde(serialize_with = "ser_ratio")]
    pub multiplier: Flops,
    #[serde(serialize_with = "ser_ratio")]
    pub iter_direction: Flops,
}

fn ser_ratio<S: serde::Serializer>(v: &Flops, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub fn step_costs(n_t: u64, k: u64) -> StepCosts {
    let (n, k) = (n_t as i128, k as i128);
    let inv = flops_inverse(n_t);
    StepCosts {
        common: inv + r(8 * n * n * k + 8 * n * k - 4 * n + 1),
        init_direction: inv + r(16 * n * n * k - 2 * n * n - 2 * n * k + 2 * n + 3),
        gain: r(8 * n * k + 2),
        scaling: r(n * k + 1),
        multiplier: r(8 * n * n * k + 6 * n * k + 6),
        iter_direction: inv + r(16 * n * n * k + 2 * n * n - 2 * n * k + 2 * n + 3),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub n_t: u64,
    pub k: u64,
    pub i_t: u64,
    pub steps: StepCosts,
    /// Sum of the itemized steps.
    #[serde(serialize_with = "ser_ratio")]
    pub itemized_total: Flops,
    /// Closed-form aggregate.
    #[serde(serialize_with = "ser_ratio")]
    pub c_f: Flops,
    /// `itemized_total - c_f`.
    #[serde(serialize_with = "ser_ratio")]
    pub discrepancy: Flops,
}

pub fn cost_report(n_t: u64, k: u64, i_t: u64) -> CostReport {
    let s = step_costs(n_t, k);
    let tail = s.gain + s.scaling + s.multiplier;
    let itemized_total = s.common + s.init_direction + tail + (s.iter_direction + tail) * r(i_t as i128);
    let c_f = total_cost(n_t, k, i_t);
    CostReport { n_t, k, i_t, steps: s, itemized_total, c_f, discrepancy: itemized_total - c_f }
}

impl CostReport {
    pub const CSV_HEADER: &'static str =
        "n_t,k,i_t,common,init_direction,gain,scaling,multiplier,iter_direction,itemized_total,c_f,discrepancy";

    pub fn csv_row(&self) -> String {
        let s = &self.steps;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_t,
            self.k,
            self.i_t,
            s.common,
            s.init_direction,
            s.gain,
            s.scaling,
            s.multiplier,
            s.iter_direction,
            self.itemized_total,
            self.c_f,
            self.discrepancy
        )
    }
}

/// Fixed-width text table of several reports.
pub fn render_table(reports: &[CostReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>4} {:>4} {:>14} {:>14} {:>14} {:>14}",
        "N_t", "K", "i_t", "C_f", "itemized", "discrepancy", "C_f (float)"
    );
    for rep in reports {
        let _ = writeln!(
            out,
            "{:>5} {:>4} {:>4} {:>14} {:>14} {:>14} {:>14.1}",
            rep.n_t,
            rep.k,
            rep.i_t,
            rep.c_f.to_string(),
            rep.itemized_total.to_string(),
            rep.discrepancy.to_string(),
            *rep.c_f.numer() as f64 / *rep.c_f.denom() as f64
        );
    }
    out
}
