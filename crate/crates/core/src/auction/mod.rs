//! OAUSA: winner determination on virtual valuations with a collision-cost
//! reserve, the four payment cases, fusion-gated allocation and expected
//! utilities.
//!
//! A round has two stages. [`Moderator::clear`] runs the valuation stage
//! (winners, shares, payments) from revealed valuations alone;
//! [`Moderator::run`] then fuses the revealed sensing bits and withholds the
//! band when the inference is "busy".

mod expected;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use expected::{
    closed_form_t, expected_utilities, expected_wmax, feasibility_check, iid_uniform_support,
    SensingDraw, SensingMode, TrialUtility, UtilityReport, WmaxClamp, WmaxEstimate, WmaxMethod,
};
pub(crate) use expected::draw_valuations;

use crate::error::{invalid, Error, Result};
use crate::sensing::{fuse, strategy_proof_fuse, FusionMode, FusionStats, SensingSetup};
use crate::valuation::ValuationModel;

/// Participation and collision costs, in utility units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c_p: f64,
    pub c_coll: f64,
}

impl CostModel {
    pub fn new(c_p: f64, c_coll: f64) -> Result<Self> {
        if !(c_p >= 0.0) || !c_p.is_finite() {
            return Err(invalid("c_p", format!("{c_p} must be finite and >= 0")));
        }
        if !(c_coll >= 0.0) || !c_coll.is_finite() {
            return Err(invalid("c_coll", format!("{c_coll} must be finite and >= 0")));
        }
        Ok(Self { c_p, c_coll })
    }
}

/// Revealed valuations and sensing bits, one entry per CR.
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    pub valuations: Vec<f64>,
    pub decisions: Vec<bool>,
    pub models: Vec<ValuationModel>,
}

impl BidProfile {
    pub fn new(valuations: Vec<f64>, decisions: Vec<bool>, models: Vec<ValuationModel>) -> Result<Self> {
        let n = valuations.len();
        if n == 0 {
            return Err(invalid("bids", "at least one CR is required"));
        }
        if decisions.len() != n || models.len() != n {
            return Err(invalid(
                "bids",
                format!(
                    "length mismatch: {} valuations, {} decisions, {} models",
                    n,
                    decisions.len(),
                    models.len()
                ),
            ));
        }
        check_valuations(&valuations, &models)?;
        Ok(Self {
            valuations,
            decisions,
            models,
        })
    }

    pub fn len(&self) -> usize {
        self.valuations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valuations.is_empty()
    }
}

fn check_valuations(valuations: &[f64], models: &[ValuationModel]) -> Result<()> {
    for (&v, m) in valuations.iter().zip(models) {
        let (lo, hi) = m.support();
        if !(v >= lo && v <= hi) {
            return Err(Error::OutsideSupport { value: v, lo, hi });
        }
    }
    Ok(())
}

/// Single-winner payment rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentRule {
    /// Myerson critical value in the winner's own valuation scale,
    /// `max(a_i, w_i^{-1}(max(w_second, reserve)))`.
    #[default]
    CriticalValue,
    /// `q0 t_*` if `t_* >= a_i`, else `q0 a_i`; ignores the reserve.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OausaRules {
    /// Withhold the band when `max w < (q1/q0) c_coll`.
    pub reserve: bool,
    pub payments: PaymentRule,
}

impl Default for OausaRules {
    fn default() -> Self {
        Self {
            reserve: true,
            payments: PaymentRule::CriticalValue,
        }
    }
}

/// Auction format run by the moderator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    Oausa(OausaRules),
    /// Fusion-gated second price on raw valuations, no reserve.
    ModifiedVcg,
    /// OAUSA allocation, but winners pay their own bid. Not truthful; used
    /// as a negative control.
    FirstPrice,
}

impl Default for Mechanism {
    fn default() -> Self {
        Mechanism::Oausa(OausaRules::default())
    }
}

impl Mechanism {
    fn uses_reserve(&self) -> bool {
        match self {
            Mechanism::Oausa(r) => r.reserve,
            Mechanism::ModifiedVcg => false,
            Mechanism::FirstPrice => true,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Oausa(r) => {
                f.write_str("oausa")?;
                if r.payments == PaymentRule::PaperLiteral {
                    f.write_str("-paper-literal")?;
                }
                if !r.reserve {
                    f.write_str("-no-reserve")?;
                }
                Ok(())
            }
            Mechanism::ModifiedVcg => f.write_str("vcg"),
            Mechanism::FirstPrice => f.write_str("first-price"),
        }
    }
}

impl FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (base, reserve) = match s.strip_suffix("-no-reserve") {
            Some(b) => (b, false),
            None => (s, true),
        };
        let payments = match base {
            "oausa" => PaymentRule::CriticalValue,
            "oausa-paper-literal" => PaymentRule::PaperLiteral,
            "vcg" | "modified-vcg" if reserve => return Ok(Mechanism::ModifiedVcg),
            "first-price" if reserve => return Ok(Mechanism::FirstPrice),
            _ => return Err(format!("unknown mechanism `{s}`")),
        };
        Ok(Mechanism::Oausa(OausaRules { reserve, payments }))
    }
}

/// Result of one full round.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub psi: Vec<f64>,
    pub payments: Vec<f64>,
    /// Valuation-stage winner set M(t).
    pub winners: Vec<usize>,
    pub t_star: Option<f64>,
    /// The inference was "idle" and M(t) was non-empty.
    pub allocated: bool,
    /// The fused inference was "busy".
    pub busy: bool,
    pub reserve_w: f64,
    /// Fusion statistics used for the reserve and payments.
    pub stats: FusionStats,
    /// CRs whose sensing reports were ignored.
    pub excluded: Vec<usize>,
}

/// Valuation stage of a round: what happens if the band turns out idle.
#[derive(Debug, Clone, PartialEq)]
pub struct Clearing {
    pub winners: Vec<usize>,
    /// Allocation if the band is handed out.
    pub shares: Vec<f64>,
    /// Payments `b_i`, already net of the participation rebate.
    pub payments: Vec<f64>,
    pub t_star: Option<f64>,
    pub reserve_w: f64,
    pub stats: FusionStats,
    pub excluded: Vec<usize>,
}

/// `(q1/q0) c_coll`; undefined when the moderator can never allocate.
pub fn reserve_w(q0: f64, q1: f64, c_coll: f64) -> Result<f64> {
    if !(q0 > 0.0) {
        return Err(Error::NoAllocationRegime);
    }
    Ok(q1 / q0 * c_coll)
}

/// Indices sorted by decreasing score; ties keep index order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order
}

fn virtual_valuations(v: &[f64], models: &[ValuationModel]) -> Result<Vec<f64>> {
    v.iter()
        .zip(models)
        .map(|(&t, m)| m.virtual_valuation(t))
        .collect()
}

/// Top set by score and the score-order runner-up.
fn top_set(scores: &[f64]) -> (Vec<usize>, f64, Option<usize>) {
    let order = descending_order(scores);
    let top = scores[order[0]];
    let set = order.iter().copied().take_while(|&i| scores[i] == top).collect();
    (set, top, order.get(1).copied())
}

/// M(t) = argmax_j w_j(v_j) if that maximum clears `reserve_w`, else empty;
/// plus `t_*`, the valuation second in w-order (absent when N = 1).
pub fn winner_set(v: &[f64], models: &[ValuationModel], reserve_w: f64) -> Result<(Vec<usize>, Option<f64>)> {
    if v.is_empty() || v.len() != models.len() {
        return Err(invalid("valuations", "need one model per valuation"));
    }
    if reserve_w.is_nan() || reserve_w == f64::INFINITY {
        return Err(Error::NoAllocationRegime);
    }
    let w = virtual_valuations(v, models)?;
    let (set, top, second) = top_set(&w);
    let winners = if top >= reserve_w { set } else { Vec::new() };
    Ok((winners, second.map(|j| v[j])))
}

/// Shares over `winners`: equal split by default, or custom `delta`
/// (indexed like `winners`) summing to one.
pub fn allocate(winners: &[usize], n: usize, delta: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut psi = vec![0.0; n];
    if winners.is_empty() {
        return Ok(psi);
    }
    if let Some(&i) = winners.iter().find(|&&i| i >= n) {
        return Err(invalid("winners", format!("index {i} out of range for {n} CRs")));
    }
    match delta {
        None => {
            let share = 1.0 / winners.len() as f64;
            winners.iter().for_each(|&i| psi[i] = share);
        }
        Some(d) => {
            if d.len() != winners.len() || d.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(invalid("delta", "one share in [0,1] per winner"));
            }
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidShares(sum));
            }
            winners.iter().zip(d).for_each(|(&i, &x)| psi[i] = x);
        }
    }
    Ok(psi)
}

/// Payment vector for an OAUSA valuation stage.
///
/// Losers pay `-c_p`; tied winners pay `q0 Δ_i v_i - c_p`; a sole winner pays
/// `q0 t_crit - c_p` with `t_crit` set by `rule`. Pass
/// `reserve_w = -inf` when no reserve is in force.
#[allow(clippy::too_many_arguments)]
pub fn payments(
    v: &[f64],
    models: &[ValuationModel],
    winners: &[usize],
    t_star: Option<f64>,
    q0: f64,
    costs: CostModel,
    reserve_w: f64,
    rule: PaymentRule,
) -> Result<Vec<f64>> {
    let n = v.len();
    let mut b = vec![-costs.c_p; n];
    match winners {
        [] => {}
        [i] => {
            let i = *i;
            if n > 1 && t_star.is_none() {
                return Err(Error::Inconsistent(
                    "single winner among several CRs but no t_*".into(),
                ));
            }
            let a_i = models[i].lower();
            let t_crit = match rule {
                PaymentRule::PaperLiteral => match t_star {
                    Some(t) if t >= a_i => t,
                    _ => a_i,
                },
                PaymentRule::CriticalValue => critical_value(i, v, models, reserve_w)?,
            };
            b[i] = q0 * t_crit - costs.c_p;
        }
        tied => {
            let delta = 1.0 / tied.len() as f64;
            for &i in tied {
                b[i] = q0 * delta * v[i] - costs.c_p;
            }
        }
    }
    Ok(b)
}

/// Lowest report with which CR `i` still wins alone.
fn critical_value(i: usize, v: &[f64], models: &[ValuationModel], reserve_w: f64) -> Result<f64> {
    let a_i = models[i].lower();
    let mut runner_up: Option<(usize, f64)> = None;
    for (j, (&t, m)) in v.iter().zip(models).enumerate() {
        if j == i {
            continue;
        }
        let w = m.virtual_valuation(t)?;
        if runner_up.is_none_or(|(_, best)| w > best) {
            runner_up = Some((j, w));
        }
    }
    let t = match runner_up {
        // Same model: w_i^{-1}(w_j(v_j)) = v_j exactly.
        Some((j, w)) if w >= reserve_w && models[j] == models[i] => v[j],
        Some((_, w)) => models[i].inverse_virtual(w.max(reserve_w)).t,
        None if reserve_w.is_finite() => models[i].inverse_virtual(reserve_w).t,
        None => a_i,
    };
    Ok(t.max(a_i))
}

/// The moderator: sensing setup, costs, auction format and fusion mode for
/// a network of `n` CRs.
#[derive(Debug, Clone)]
pub struct Moderator {
    pub sensing: SensingSetup,
    pub costs: CostModel,
    pub mechanism: Mechanism,
    pub fusion_mode: FusionMode,
    n: usize,
    /// Fusion statistics indexed by the number of excluded reports.
    stats: Vec<Result<FusionStats>>,
}

impl Moderator {
    pub fn new(
        sensing: SensingSetup,
        costs: CostModel,
        mechanism: Mechanism,
        fusion_mode: FusionMode,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "at least one CR is required"));
        }
        let stats = (0..=n)
            .map(|e| match (fusion_mode, e) {
                (_, 0) => sensing.stats(n),
                (FusionMode::StrategyProof, e) => sensing.reduced_stats(n, e),
                (FusionMode::Standard, _) => Err(Error::Inconsistent("no exclusions in standard fusion".into())),
            })
            .collect();
        let moderator = Self {
            sensing,
            costs,
            mechanism,
            fusion_mode,
            n,
            stats,
        };
        moderator.nominal_stats()?;
        Ok(moderator)
    }

    /// OAUSA with reserve and critical-value payments.
    pub fn oausa(sensing: SensingSetup, costs: CostModel, fusion_mode: FusionMode, n: usize) -> Result<Self> {
        Self::new(sensing, costs, Mechanism::default(), fusion_mode, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Statistics with one excluded winner in strategy-proof mode (the
    /// almost-sure case under continuous valuations), full otherwise.
    pub fn nominal_stats(&self) -> Result<FusionStats> {
        match self.fusion_mode {
            FusionMode::Standard => self.stats[0].clone(),
            FusionMode::StrategyProof if self.n > 1 => self.stats[1].clone(),
            FusionMode::StrategyProof => Err(Error::NoSensingInput),
        }
    }

    pub fn stats_with_excluded(&self, excluded: usize) -> Result<FusionStats> {
        self.stats
            .get(excluded)
            .cloned()
            .unwrap_or(Err(Error::NoSensingInput))
    }

    /// Valuation stage.
    pub fn clear(&self, v: &[f64], models: &[ValuationModel]) -> Result<Clearing> {
        if v.len() != self.n || models.len() != self.n {
            return Err(invalid(
                "valuations",
                format!("expected {} CRs, got {} valuations / {} models", self.n, v.len(), models.len()),
            ));
        }
        check_valuations(v, models)?;
        let scores = match self.mechanism {
            Mechanism::ModifiedVcg => v.to_vec(),
            _ => virtual_valuations(v, models)?,
        };
        let (top, top_score, second) = top_set(&scores);
        let excluded = match self.fusion_mode {
            FusionMode::Standard => Vec::new(),
            FusionMode::StrategyProof => top.clone(),
        };
        let stats = self.stats_with_excluded(excluded.len())?;
        let reserve = if self.mechanism.uses_reserve() {
            reserve_w(stats.q0, stats.q1, self.costs.c_coll)?
        } else {
            f64::NEG_INFINITY
        };
        let winners = if top_score >= reserve { top } else { Vec::new() };
        let t_star = second.map(|j| v[j]);
        let shares = allocate(&winners, self.n, None)?;
        let payments = match self.mechanism {
            Mechanism::Oausa(rules) => payments(
                v,
                models,
                &winners,
                t_star,
                stats.q0,
                self.costs,
                reserve,
                rules.payments,
            )?,
            Mechanism::ModifiedVcg => {
                crate::comparison::vcg_payments(v, models, &winners, stats.q0, self.costs)
            }
            Mechanism::FirstPrice => {
                let mut b = vec![-self.costs.c_p; self.n];
                for &i in &winners {
                    b[i] = stats.q0 * shares[i] * v[i] - self.costs.c_p;
                }
                b
            }
        };
        Ok(Clearing {
            winners,
            shares,
            payments,
            t_star,
            reserve_w: reserve,
            stats,
            excluded,
        })
    }

    /// Fused inference over `decisions` ("busy" = true).
    pub fn fuse_decisions(&self, decisions: &[bool], clearing: &Clearing) -> Result<bool> {
        match self.fusion_mode {
            FusionMode::Standard => fuse(decisions, clearing.stats.k),
            FusionMode::StrategyProof => strategy_proof_fuse(decisions, &clearing.excluded, clearing.stats.k),
        }
    }

    /// One full round: clear, fuse, allocate or withhold.
    pub fn run(&self, bids: &BidProfile) -> Result<AuctionOutcome> {
        let clearing = self.clear(&bids.valuations, &bids.models)?;
        let busy = self.fuse_decisions(&bids.decisions, &clearing)?;
        let allocated = !busy && !clearing.winners.is_empty();
        let (psi, payments) = if busy {
            (vec![0.0; self.n], vec![-self.costs.c_p; self.n])
        } else {
            (clearing.shares, clearing.payments)
        };
        Ok(AuctionOutcome {
            psi,
            payments,
            winners: clearing.winners,
            t_star: clearing.t_star,
            allocated,
            busy,
            reserve_w: clearing.reserve_w,
            stats: clearing.stats,
            excluded: clearing.excluded,
        })
    }
}

/// One OAUSA round with reserve and critical-value payments.
pub fn run_oausa(
    bids: &BidProfile,
    sensing: SensingSetup,
    costs: CostModel,
    fusion_mode: FusionMode,
) -> Result<AuctionOutcome> {
    Moderator::oausa(sensing, costs, fusion_mode, bids.len())?.run(bids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{ChannelPrior, KChoice, SensorProfile};

    fn uniform01(n: usize) -> Vec<ValuationModel> {
        vec![ValuationModel::uniform(0.0, 1.0).unwrap(); n]
    }

    fn setup() -> SensingSetup {
        SensingSetup::new(
            ChannelPrior::new(0.8).unwrap(),
            SensorProfile::new(0.1, 0.9).unwrap(),
        )
    }

    #[test]
    fn winner_set_examples() {
        let m = uniform01(2);
        let (w, t) = winner_set(&[0.9, 0.4], &m, 0.1).unwrap();
        assert_eq!(w, vec![0]);
        assert_eq!(t, Some(0.4));
        let (w, _) = winner_set(&[0.9, 0.4], &m, 0.9).unwrap();
        assert!(w.is_empty());
        let (w, _) = winner_set(&[0.6, 0.6], &m, 0.1).unwrap();
        assert_eq!(w, vec![0, 1]);
        assert_eq!(winner_set(&[0.9, 0.4], &m, f64::NAN), Err(Error::NoAllocationRegime));
        let (_, t) = winner_set(&[0.7], &uniform01(1), 0.0).unwrap();
        assert_eq!(t, None);
    }

    #[test]
    fn allocate_examples() {
        assert_eq!(allocate(&[2], 5, None).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(allocate(&[0, 1], 3, None).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(allocate(&[], 3, None).unwrap(), vec![0.0; 3]);
        assert_eq!(allocate(&[0, 1], 2, Some(&[0.3, 0.7])).unwrap(), vec![0.3, 0.7]);
        assert_eq!(allocate(&[0, 1], 2, Some(&[0.3, 0.6])), Err(Error::InvalidShares(0.3 + 0.6)));
    }

    #[test]
    fn payment_examples() {
        let m = uniform01(2);
        let c = CostModel::new(0.02, 5.0).unwrap();
        // Reserve below w(t_*) = -0.2, so t_* is the critical value.
        let b = payments(&[0.9, 0.4], &m, &[0], Some(0.4), 0.7, c, -0.5, PaymentRule::CriticalValue).unwrap();
        assert!((b[0] - 0.26).abs() < 1e-15);
        assert_eq!(b[1], -0.02);
        let b = payments(&[0.9, 0.9], &m, &[0, 1], Some(0.9), 0.7, c, 0.1, PaymentRule::CriticalValue).unwrap();
        assert!((b[0] - 0.295).abs() < 1e-15);
        assert!(payments(&[0.9, 0.4], &m, &[0], None, 0.7, c, 0.1, PaymentRule::CriticalValue).is_err());
    }

    #[test]
    fn critical_value_respects_reserve() {
        let m = uniform01(2);
        let c = CostModel::new(0.0, 0.0).unwrap();
        // w(0.4) = -0.2 < reserve 0.4, so the winner's threshold is w^{-1}(0.4) = 0.7.
        let b = payments(&[0.9, 0.4], &m, &[0], Some(0.4), 1.0, c, 0.4, PaymentRule::CriticalValue).unwrap();
        assert!((b[0] - 0.7).abs() < 1e-15);
        let b = payments(&[0.9, 0.4], &m, &[0], Some(0.4), 1.0, c, 0.4, PaymentRule::PaperLiteral).unwrap();
        assert!((b[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn critical_value_heterogeneous_models() {
        let models = vec![
            ValuationModel::uniform(0.0, 1.0).unwrap(),
            ValuationModel::uniform(0.5, 0.8).unwrap(),
        ];
        let c = CostModel::new(0.0, 0.0).unwrap();
        // w0(0.95) = 0.9, w1(0.7) = 0.6; threshold for CR 0 is (0.6 + 1)/2 = 0.8.
        let (w, _) = winner_set(&[0.95, 0.7], &models, f64::NEG_INFINITY).unwrap();
        assert_eq!(w, vec![0]);
        let b = payments(&[0.95, 0.7], &models, &w, Some(0.7), 1.0, c, f64::NEG_INFINITY, PaymentRule::CriticalValue)
            .unwrap();
        assert!((b[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn busy_round_refunds_everyone() {
        let bids = BidProfile::new(vec![0.9, 0.4, 0.7], vec![true; 3], uniform01(3)).unwrap();
        let c = CostModel::new(0.02, 5.0).unwrap();
        let out = run_oausa(&bids, setup(), c, FusionMode::Standard).unwrap();
        assert!(out.busy && !out.allocated);
        assert_eq!(out.psi, vec![0.0; 3]);
        assert_eq!(out.payments, vec![-0.02; 3]);
    }

    #[test]
    fn two_cr_round() {
        let bids = BidProfile::new(vec![0.9, 0.4], vec![false, false], uniform01(2)).unwrap();
        let c = CostModel::new(0.02, 5.0).unwrap();
        let out = run_oausa(&bids, setup(), c, FusionMode::Standard).unwrap();
        let q0 = out.stats.q0;
        assert!(out.allocated);
        assert_eq!(out.psi, vec![1.0, 0.0]);
        assert!(out.reserve_w < 0.1);
        // w(t_*) = -0.2 is below the reserve, so the winner pays the reserve threshold.
        let t_reserve = (out.reserve_w + 1.0) / 2.0;
        assert!((out.payments[0] - (q0 * t_reserve - 0.02)).abs() < 1e-15);
        assert_eq!(out.payments[1], -0.02);

        let literal = Mechanism::Oausa(OausaRules {
            reserve: true,
            payments: PaymentRule::PaperLiteral,
        });
        let out = Moderator::new(setup(), c, literal, FusionMode::Standard, 2).unwrap().run(&bids).unwrap();
        assert!((out.payments[0] - (q0 * 0.4 - 0.02)).abs() < 1e-15);
    }

    #[test]
    fn single_bidder_pays_reserve_threshold() {
        let prior = ChannelPrior::new(0.8).unwrap();
        let sensor = SensorProfile::new(0.1, 0.9).unwrap();
        let st = crate::sensing::FusionStats::new(prior, sensor, 1, 1).unwrap();
        // Choose c_coll so that the reserve is exactly 0.2.
        let c_coll = 0.2 * st.q0 / st.q1;
        let costs = CostModel::new(0.02, c_coll).unwrap();
        let bids = BidProfile::new(vec![0.8], vec![false], uniform01(1)).unwrap();
        let out = run_oausa(&bids, SensingSetup::new(prior, sensor), costs, FusionMode::Standard).unwrap();
        assert!((out.reserve_w - 0.2).abs() < 1e-12);
        assert!((out.payments[0] - (st.q0 * 0.6 - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn strategy_proof_round_ignores_winner_bit() {
        let c = CostModel::new(0.02, 5.0).unwrap();
        for bit in [false, true] {
            let bids = BidProfile::new(vec![0.9, 0.4, 0.5], vec![bit, false, false], uniform01(3)).unwrap();
            let out = run_oausa(&bids, setup(), c, FusionMode::StrategyProof).unwrap();
            assert_eq!(out.excluded, vec![0]);
            assert!(!out.busy);
            assert_eq!(out.stats.n_used, 2);
        }
    }

    #[test]
    fn no_allocation_regime() {
        let mut s = setup();
        s.sensor = SensorProfile::new(1.0, 1.0).unwrap();
        s.k = KChoice::Fixed(1);
        let m = Moderator::oausa(s, CostModel::new(0.0, 1.0).unwrap(), FusionMode::Standard, 2).unwrap();
        assert_eq!(m.clear(&[0.9, 0.4], &uniform01(2)), Err(Error::NoAllocationRegime));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for name in ["oausa", "oausa-paper-literal", "oausa-no-reserve", "vcg", "first-price"] {
            let m: Mechanism = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert!("auction".parse::<Mechanism>().is_err());
    }

    #[test]
    fn bid_profile_validation() {
        assert!(BidProfile::new(vec![], vec![], vec![]).is_err());
        assert!(BidProfile::new(vec![0.5], vec![true, false], uniform01(1)).is_err());
        assert!(BidProfile::new(vec![1.5], vec![true], uniform01(1)).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn moderator(n: usize, c_p: f64, c_coll: f64, rule: PaymentRule) -> Moderator {
            let mech = Mechanism::Oausa(OausaRules { reserve: true, payments: rule });
            Moderator::new(setup(), CostModel::new(c_p, c_coll).unwrap(), mech, FusionMode::Standard, n).unwrap()
        }

        proptest! {
            #[test]
            fn clearing_invariants(v in proptest::collection::vec(0.0f64..=1.0, 1..9), c_p in 0.0f64..0.1, c_coll in 0.0f64..200.0) {
                let n = v.len();
                let m = moderator(n, c_p, c_coll, PaymentRule::CriticalValue);
                let models = uniform01(n);
                let c = m.clear(&v, &models).unwrap();
                let total: f64 = c.shares.iter().sum();
                prop_assert!(c.winners.is_empty() && total == 0.0 || (total - 1.0).abs() < 1e-12);
                let w_max = v.iter().map(|&x| 2.0 * x - 1.0).fold(f64::NEG_INFINITY, f64::max);
                for (i, &vi) in v.iter().enumerate() {
                    if c.winners.contains(&i) {
                        prop_assert!(2.0 * vi - 1.0 >= w_max - 1e-12);
                        prop_assert!(2.0 * vi - 1.0 >= c.reserve_w - 1e-12);
                        // Ex-post individual rationality with idle use weighted by q0.
                        let u = c.stats.q0 * c.shares[i] * vi - c.payments[i] - c_p;
                        prop_assert!(u >= -1e-12, "winner utility {u}");
                    } else {
                        prop_assert_eq!(c.shares[i], 0.0);
                        prop_assert_eq!(c.payments[i], -c_p);
                    }
                }
            }

            #[test]
            fn share_is_monotone_in_own_report(v in proptest::collection::vec(0.0f64..=1.0, 2..7), i in any::<prop::sample::Index>(), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
                let n = v.len();
                let i = i.index(n);
                let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
                let m = moderator(n, 0.02, 5.0, PaymentRule::CriticalValue);
                let models = uniform01(n);
                let mut a = v.clone();
                a[i] = lo;
                let mut b = v;
                b[i] = hi;
                prop_assert!(m.clear(&a, &models).unwrap().shares[i] <= m.clear(&b, &models).unwrap().shares[i] + 1e-12);
            }

            #[test]
            fn winner_payment_is_report_independent(v in proptest::collection::vec(0.0f64..=1.0, 2..7), bump in 0.0f64..=1.0) {
                let n = v.len();
                let m = moderator(n, 0.02, 5.0, PaymentRule::CriticalValue);
                let models = uniform01(n);
                let c = m.clear(&v, &models).unwrap();
                if let [w] = c.winners[..] {
                    let mut raised = v.clone();
                    raised[w] = v[w] + (1.0 - v[w]) * bump;
                    let c2 = m.clear(&raised, &models).unwrap();
                    prop_assert_eq!(&c2.winners, &vec![w]);
                    prop_assert!((c2.payments[w] - c.payments[w]).abs() < 1e-12);
                }
            }
        }
    }
}
