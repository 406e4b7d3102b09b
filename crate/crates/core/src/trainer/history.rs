use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::objectives::LossBreakdown;

/// Range checks gathered over one epoch; all values are worst cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    /// Largest `|row sum − 1|` over every probability matrix produced.
    pub max_row_sum_error: f64,
    /// Smallest KL value reported.
    pub min_kl: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// Largest violation of `balance ∈ [−log K, 0]` (0 when satisfied).
    pub balance_violation: f64,
}

impl Default for Validity {
    fn default() -> Self {
        Self {
            max_row_sum_error: 0.0,
            min_kl: f64::INFINITY,
            min_weight: f64::INFINITY,
            max_weight: f64::NEG_INFINITY,
            balance_violation: 0.0,
        }
    }
}

impl Validity {
    pub fn rows(&mut self, m: &crate::diffcore::Tensor) {
        for r in m.row_iter() {
            let e = (r.iter().sum::<f64>() - 1.0).abs();
            self.max_row_sum_error = self.max_row_sum_error.max(e);
        }
    }

    pub fn kl(&mut self, v: f64) {
        self.min_kl = self.min_kl.min(v);
    }

    pub fn weights(&mut self, w: &[f64]) {
        for &x in w {
            self.min_weight = self.min_weight.min(x);
            self.max_weight = self.max_weight.max(x);
        }
    }

    pub fn balance(&mut self, b: f64, classes: usize) {
        let lo = -(classes as f64).ln();
        let v = if b > 0.0 {
            b
        } else if b < lo {
            lo - b
        } else {
            0.0
        };
        self.balance_violation = self.balance_violation.max(v);
    }

    /// True when every check passes at the given row-sum tolerance.
    pub fn holds(&self, row_tol: f64) -> bool {
        self.max_row_sum_error <= row_tol
            && self.min_kl >= 0.0
            && self.min_weight >= 0.0
            && self.max_weight <= 1.0
            && self.balance_violation <= 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Epoch means of the per-batch terms; balance terms over the full target set.
    pub losses: LossBreakdown,
    /// Output- and feature-space KL(Q‖P) over the full target set.
    pub kl_out: f64,
    pub kl_feat: f64,
    pub lr: f64,
    pub src_acc: f64,
    pub tgt_acc: Option<f64>,
    pub validity: Validity,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl EpochRecord {
    /// Output-space clustering objective: KL plus balance term.
    pub fn clustering_objective(&self) -> f64 {
        self.kl_out + self.losses.balance_out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based index of the epoch whose parameters were kept.
    pub selected_epoch: usize,
}

pub const HISTORY_HEADER: &str =
    "epoch,target_out,target_feat,source_out,source_feat,balance_out,balance_feat,lambda,lr,src_acc,tgt_acc";

impl RunHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn selected(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.selected_epoch.checked_sub(1)?)
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One row per epoch; an empty `tgt_acc` cell means the target was unlabeled.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let l = &r.losses;
            let tgt = r.tgt_acc.map(|a| format!("{a:?}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                r.epoch,
                l.target_out,
                l.target_feat,
                l.source_out,
                l.source_feat,
                l.balance_out,
                l.balance_feat,
                l.lambda,
                r.lr,
                r.src_acc,
                tgt
            );
        }
        out
    }

    /// Per-epoch wall-clock milliseconds, kept apart from the deterministic CSV.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,wall_ms\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:.3}", r.epoch, r.wall_ms);
        }
        out
    }
}
