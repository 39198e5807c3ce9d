use std::io::Write;

use super::measures::contraction_ratio;
use crate::error::{invalid, Result};

/// Relative slack for comparisons that hold exactly in real arithmetic.
const SLACK: f64 = 1e-12;

fn leq(a: f64, b: f64) -> bool {
    a <= b + SLACK * a.abs().max(b.abs()).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    ExactTabular,
    MonteCarlo { samples: usize },
}

/// Approximation-loss measurements around one improvement step `π_t → π_{t+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    /// `f_{θ_{t-1}}(π_t)`
    pub f_pre: f64,
    /// `f_{θ_t}(π_t)`
    pub f_post: f64,
    /// `f_{θ_t}(π_{t+1})`
    pub f_next_pre: f64,
    pub d: f64,
    /// `‖V^{π_t} − V^{π_{t+1}}‖`, when both true values are known.
    pub value_gap: Option<f64>,
    /// `‖𝕍_{θ_t}(π_t) − V^{π_{t+1}}‖`, when the next true values are known.
    pub cross: Option<f64>,
    pub oracle: OracleKind,
}

impl LossRecord {
    pub fn gamma_t(&self) -> f64 {
        contraction_ratio(self.f_pre, self.f_post).ratio
    }

    /// Realized Lipschitz ratio `|f_{θ_t}(π_{t+1}) − f_{θ_t}(π_t)| / d`;
    /// undefined when `d = 0`.
    pub fn l_t(&self) -> Option<f64> {
        (self.d > 0.0).then(|| (self.f_next_pre - self.f_post).abs() / self.d)
    }

    pub fn m_t(&self) -> Option<f64> {
        self.l_t().map(|l| l * self.d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Row {
    pub iteration: usize,
    /// `None` when the oracle cannot provide both true value vectors.
    pub condition: Option<bool>,
    pub conclusion: Option<bool>,
    pub cross: Option<f64>,
}

impl Theorem1Row {
    /// The premise held but the conclusion did not.
    pub fn violated(&self) -> bool {
        self.condition == Some(true) && self.conclusion == Some(false)
    }
}

/// Premise `f_{θ_t}(π_t) + f_{θ_t}(π_{t+1}) ≤ ‖V^{π_t} − V^{π_{t+1}}‖` and
/// conclusion `f_{θ_t}(π_{t+1}) ≤ ‖𝕍_{θ_t}(π_t) − V^{π_{t+1}}‖` per row.
pub fn theorem1_check(records: &[LossRecord]) -> Vec<Theorem1Row> {
    records
        .iter()
        .map(|r| match (r.value_gap, r.cross) {
            (Some(gap), Some(cross)) => Theorem1Row {
                iteration: r.iteration,
                condition: Some(leq(r.f_post + r.f_next_pre, gap)),
                conclusion: Some(leq(r.f_next_pre, cross)),
                cross: Some(cross),
            },
            _ => Theorem1Row {
                iteration: r.iteration,
                condition: None,
                conclusion: None,
                cross: r.cross,
            },
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub iteration: usize,
    /// `γ_t f_{θ_{t-1}}(π_t) + M_t`; `None` when `d = 0`.
    pub rhs: Option<f64>,
    pub holds: Option<bool>,
    /// Accumulated bound `Πγ·f₀ + Σ(Πγ)·M` on `f_{θ_t}(π_{t+1})`.
    pub accumulated: f64,
}

/// Per-step bound `f_{θ_t}(π_{t+1}) ≤ γ_t f_{θ_{t-1}}(π_t) + M_t` with
/// `M_t = L_t d` and its unrolled form. A `d = 0` step contributes its
/// realized margin `|f_next_pre − f_post|` to the accumulation.
pub fn lemma2_track(records: &[LossRecord], lipschitz: Option<&[f64]>) -> Result<Vec<BoundRow>> {
    if records.len() < 2 {
        return invalid("bound tracking needs at least two records");
    }
    if let Some(l) = lipschitz {
        if l.len() != records.len() {
            return invalid("one Lipschitz estimate per record required");
        }
    }
    let mut acc = records[0].f_pre;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let gamma = r.gamma_t();
        let m = match lipschitz {
            Some(l) => (r.d > 0.0).then(|| l[i] * r.d),
            None => r.m_t(),
        };
        let rhs = m.map(|m| gamma * r.f_pre + m);
        acc = gamma * acc + m.unwrap_or((r.f_next_pre - r.f_post).abs());
        out.push(BoundRow {
            iteration: r.iteration,
            rhs,
            holds: rhs.map(|b| leq(r.f_next_pre, b)),
            accumulated: acc,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |x| x.to_string())
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "unavailable",
    }
}

pub const THEORY_HEADER: &str =
    "iteration,f_pre,f_post,f_next_pre,gamma_t,d,L_t,M_t,value_gap,thm1_condition,thm1_conclusion";

pub fn write_theory_csv(w: &mut impl Write, records: &[LossRecord]) -> Result<()> {
    writeln!(w, "{THEORY_HEADER}")?;
    for (r, t) in records.iter().zip(theorem1_check(records)) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.f_pre,
            r.f_post,
            r.f_next_pre,
            r.gamma_t(),
            r.d,
            opt(r.l_t()),
            opt(r.m_t()),
            opt(r.value_gap),
            flag(t.condition),
            flag(t.conclusion)
        )?;
    }
    Ok(())
}
