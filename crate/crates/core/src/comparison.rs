//! Baselines: a fusion-gated second-price ("modified VCG") auction, the
//! traditional auction without collaborative sensing, the sensing-merit
//! condition and the OAUSA-vs-VCG throughput bound.
//!
//! The modified VCG format is this crate's own construction: after an idle
//! inference the highest valuation wins and pays `q0` times the second-highest
//! valuation, minus the participation rebate. There is no reserve and ties
//! are split like OAUSA ties.

use crate::auction::{AuctionOutcome, BidProfile, CostModel, Mechanism, Moderator, UtilityReport};
use crate::error::{Error, Result};
use crate::sensing::{ChannelPrior, FusionMode, SensingSetup};
use crate::valuation::ValuationModel;

pub(crate) fn vcg_payments(
    v: &[f64],
    models: &[ValuationModel],
    winners: &[usize],
    q0: f64,
    costs: CostModel,
) -> Vec<f64> {
    let mut b = vec![-costs.c_p; v.len()];
    match winners {
        [] => {}
        [i] => {
            let second = v
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != *i)
                .map(|(_, &x)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let price = if second.is_finite() { second } else { models[*i].lower() };
            b[*i] = q0 * price - costs.c_p;
        }
        tied => {
            let delta = 1.0 / tied.len() as f64;
            for &i in tied {
                b[i] = q0 * delta * v[i] - costs.c_p;
            }
        }
    }
    b
}

/// One modified-VCG round under standard fusion.
pub fn run_modified_vcg(bids: &BidProfile, sensing: SensingSetup, costs: CostModel) -> Result<AuctionOutcome> {
    Moderator::new(sensing, costs, Mechanism::ModifiedVcg, FusionMode::Standard, bids.len())?.run(bids)
}

/// Utilities of the same auction run without collaborative sensing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraditionalUtilities {
    /// Û0 = U0 - (π1 - q1) c_coll + N c_p.
    pub u0_hat: f64,
    /// 1 - q0: a CR's utility changes by at most this times its valuation.
    pub cr_gap_per_value: f64,
}

impl TraditionalUtilities {
    pub fn cr_gap_bound(&self, t_i: f64) -> f64 {
        self.cr_gap_per_value * t_i
    }
}

pub fn traditional_utilities(
    report: &UtilityReport,
    prior: ChannelPrior,
    q1: f64,
    costs: CostModel,
    n: usize,
) -> TraditionalUtilities {
    TraditionalUtilities {
        u0_hat: report.u0 - (prior.pi1 - q1) * costs.c_coll + n as f64 * costs.c_p,
        cr_gap_per_value: 1.0 - report.stats.q0,
    }
}

/// Whether sensing pays for itself: `q1 <= π1 - N c_p / c_coll`.
///
/// With `c_coll = 0` there is nothing to avoid, so sensing is worth its cost
/// only when it is free.
pub fn sensing_merit(prior: ChannelPrior, q1: f64, costs: CostModel, n: usize) -> bool {
    if costs.c_coll == 0.0 {
        return costs.c_p == 0.0;
    }
    q1 <= prior.pi1 - n as f64 * costs.c_p / costs.c_coll
}

/// Throughputs (`x = t / c`) of the OAUSA winner `j` and the
/// highest-valuation CR `k`, with the lower bound `w_k(t_k) / c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputRecord {
    pub x_oausa: f64,
    pub x_vcg: f64,
    pub lower_bound: f64,
    pub j: usize,
    pub k: usize,
}

impl ThroughputRecord {
    pub fn holds(&self) -> bool {
        let tol = 1e-12 * self.x_vcg.abs().max(1.0);
        self.lower_bound <= self.x_oausa + tol && self.x_oausa <= self.x_vcg + tol
    }

    pub fn gap(&self) -> f64 {
        self.x_vcg - self.x_oausa
    }
}

/// Evaluates the throughput bound for one valuation profile `t`.
pub fn throughput_bound_check(models: &[ValuationModel], scales: &[f64], t: &[f64]) -> Result<ThroughputRecord> {
    if t.is_empty() || models.len() != t.len() || scales.len() != t.len() {
        return Err(crate::error::invalid("throughput", "one model, scale and valuation per CR"));
    }
    let c = scales[0];
    if scales.iter().any(|&s| s != c) {
        return Err(Error::HeterogeneousScale(scales.to_vec()));
    }
    if !(c > 0.0) {
        return Err(crate::error::invalid("c", format!("{c} must be positive")));
    }
    let w: Vec<f64> = t
        .iter()
        .zip(models)
        .map(|(&x, m)| m.virtual_valuation(x))
        .collect::<Result<_>>()?;
    let argmax = |xs: &[f64]| {
        (1..xs.len()).fold(0, |best, i| if xs[i] > xs[best] { i } else { best })
    };
    let j = argmax(&w);
    let k = argmax(t);
    Ok(ThroughputRecord {
        x_oausa: t[j] / c,
        x_vcg: t[k] / c,
        lower_bound: w[k] / c,
        j,
        k,
    })
}
