//! Collaborative spectrum sensing: local sensor models, k-out-of-N fusion,
//! the Bayesian threshold, global error probabilities, falsified-report
//! analysis and the winner-excluded (strategy-proof) fusion rule.
//!
//! All closed forms assume identical sensors (one [`SensorProfile`] shared by
//! every CR). The counting rule [`fuse`] itself works for any decisions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Prior over the primary user's activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPrior {
    /// P(H0): the primary user is absent.
    pub pi0: f64,
    /// P(H1): the primary user is present.
    pub pi1: f64,
}

impl ChannelPrior {
    pub fn new(pi0: f64) -> Result<Self> {
        Self::from_pair(pi0, 1.0 - pi0)
    }

    pub fn from_pair(pi0: f64, pi1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0) || !(0.0..=1.0).contains(&pi1) {
            return Err(invalid("prior", format!("({pi0}, {pi1}) not in [0,1]")));
        }
        if (pi0 + pi1 - 1.0).abs() > 1e-12 {
            return Err(invalid("prior", format!("pi0 + pi1 = {}", pi0 + pi1)));
        }
        Ok(Self { pi0, pi1 })
    }
}

/// A CR's local operating point on its ROC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    /// Local false-alarm probability.
    pub pf: f64,
    /// Local detection probability.
    pub pd: f64,
}

impl SensorProfile {
    /// Validates the probabilities. An uninformative sensor (`pd <= pf`) is
    /// accepted with a warning; only [`optimal_k`] rejects it.
    pub fn new(pf: f64, pd: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pf) {
            return Err(invalid("pf", format!("{pf} not in [0,1]")));
        }
        if !(0.0..=1.0).contains(&pd) {
            return Err(invalid("pd", format!("{pd} not in [0,1]")));
        }
        if pd <= pf {
            log::warn!("uninformative sensor: pd={pd} <= pf={pf}");
        }
        Ok(Self { pf, pd })
    }

    pub fn is_informative(&self) -> bool {
        self.pd > self.pf
    }
}

/// Global operating point of a k-out-of-N rule together with the joint
/// probabilities the auction needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStats {
    pub qf: f64,
    pub qd: f64,
    /// P(decide H0, H0 true) = pi0 (1 - Qf).
    pub q0: f64,
    /// P(decide H0, H1 true) = pi1 (1 - Qd).
    pub q1: f64,
    pub k: usize,
    pub n_used: usize,
}

impl FusionStats {
    /// Statistics of the k-out-of-n rule over `n` identical sensors.
    ///
    /// `q0` and `q1` are computed from the lower binomial tails directly, so
    /// they keep full relative precision when `Qd` is close to one.
    pub fn new(prior: ChannelPrior, sensor: SensorProfile, k: usize, n: usize) -> Result<Self> {
        check_threshold(k, n)?;
        let (qf, not_qf) = binomial_tails(k, n, sensor.pf);
        let (qd, not_qd) = binomial_tails(k, n, sensor.pd);
        Ok(Self {
            qf,
            qd,
            q0: prior.pi0 * not_qf,
            q1: prior.pi1 * not_qd,
            k,
            n_used: n,
        })
    }

    /// Residual of q0 + pi0 Qf + q1 + pi1 Qd = 1.
    pub fn total_probability_residual(&self, prior: ChannelPrior) -> f64 {
        self.q0 + prior.pi0 * self.qf + self.q1 + prior.pi1 * self.qd - 1.0
    }
}

/// Stochastic flipping applied by a CR to its own sensing bit before
/// reporting it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPolicy {
    /// Pr(report 1 | true bit 0).
    pub alpha1: f64,
    /// Pr(report 0 | true bit 1).
    pub alpha2: f64,
}

impl DeviationPolicy {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha1) || !(0.0..=1.0).contains(&alpha2) {
            return Err(invalid("policy", format!("({alpha1}, {alpha2}) not in [0,1]^2")));
        }
        Ok(Self { alpha1, alpha2 })
    }

    pub const fn truthful() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
        }
    }

    /// Always report "idle".
    pub const fn always_zero() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 1.0,
        }
    }

    /// Always report "busy".
    pub const fn always_one() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.0,
        }
    }

    /// Reported bit for true bit `bit`, driven by a uniform draw `u` in [0,1).
    pub fn apply(&self, bit: bool, u: f64) -> bool {
        if bit {
            u >= self.alpha2
        } else {
            u < self.alpha1
        }
    }

    /// Probability that the reported bit is 1 when the true bit is 1 with
    /// probability `p`.
    pub fn reported_one_prob(&self, p: f64) -> f64 {
        self.alpha1 + (1.0 - self.alpha1 - self.alpha2) * p
    }
}

/// Which decisions enter the moderator's fusion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// k-out-of-N over every CR's report.
    #[default]
    Standard,
    /// Reports of the highest-virtual-valuation CRs are ignored.
    StrategyProof,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Standard => "standard",
            FusionMode::StrategyProof => "strategy-proof",
        })
    }
}

impl FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(FusionMode::Standard),
            "strategy-proof" | "strategy_proof" => Ok(FusionMode::StrategyProof),
            other => Err(format!("unknown fusion mode `{other}`")),
        }
    }
}

/// How the fusion threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KChoice {
    /// Closed-form Bayesian threshold from [`optimal_k`].
    #[default]
    Optimal,
    Fixed(usize),
}

/// Threshold used once winners' reports are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReducedK {
    /// Re-run [`optimal_k`] over the remaining sensors.
    #[default]
    Recompute,
    /// Keep the full-network threshold (clamped to the remaining count).
    Keep,
}

/// Everything the moderator knows about sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingSetup {
    pub prior: ChannelPrior,
    pub sensor: SensorProfile,
    pub k: KChoice,
    pub reduced_k: ReducedK,
}

impl SensingSetup {
    pub fn new(prior: ChannelPrior, sensor: SensorProfile) -> Self {
        Self {
            prior,
            sensor,
            k: KChoice::Optimal,
            reduced_k: ReducedK::Recompute,
        }
    }

    /// Threshold for a network of `n` sensors.
    pub fn k_for(&self, n: usize) -> Result<usize> {
        match self.k {
            KChoice::Optimal => optimal_k(self.prior, self.sensor, n),
            KChoice::Fixed(k) => {
                check_threshold(k, n)?;
                Ok(k)
            }
        }
    }

    /// Threshold after `excluded` of `n` reports are dropped.
    pub fn reduced_k_for(&self, n: usize, excluded: usize) -> Result<usize> {
        if excluded >= n {
            return Err(Error::NoSensingInput);
        }
        let remaining = n - excluded;
        match self.reduced_k {
            ReducedK::Recompute => optimal_k(self.prior, self.sensor, remaining),
            ReducedK::Keep => Ok(self.k_for(n)?.min(remaining)),
        }
    }

    pub fn stats(&self, n: usize) -> Result<FusionStats> {
        FusionStats::new(self.prior, self.sensor, self.k_for(n)?, n)
    }

    pub fn reduced_stats(&self, n: usize, excluded: usize) -> Result<FusionStats> {
        let k = self.reduced_k_for(n, excluded)?;
        FusionStats::new(self.prior, self.sensor, k, n - excluded)
    }
}

fn check_threshold(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::ThresholdOutOfRange { k, n })
    } else {
        Ok(())
    }
}

/// Bayesian k-out-of-N threshold, clamped to `[1, n]`.
///
/// `ceil((ln(pi1/pi0) + n ln((1-pf)/(1-pd))) / ln(pd(1-pf) / (pf(1-pd))))`
pub fn optimal_k(prior: ChannelPrior, sensor: SensorProfile, n: usize) -> Result<usize> {
    let SensorProfile { pf, pd } = sensor;
    if n == 0 {
        return Err(Error::OptimalKUndefined("no sensors".into()));
    }
    if pf <= 0.0 || pf >= 1.0 || pd <= 0.0 || pd >= 1.0 || pd <= pf {
        return Err(Error::OptimalKUndefined(format!(
            "degenerate sensor pf={pf}, pd={pd}"
        )));
    }
    if prior.pi0 <= 0.0 || prior.pi1 <= 0.0 {
        return Err(Error::OptimalKUndefined(format!(
            "degenerate prior pi0={}",
            prior.pi0
        )));
    }
    let numerator = (prior.pi1 / prior.pi0).ln() + n as f64 * ((1.0 - pf) / (1.0 - pd)).ln();
    let denominator = (pd * (1.0 - pf) / (pf * (1.0 - pd))).ln();
    let raw = numerator / denominator;
    // Analytically integral ratios (e.g. n/2 for a symmetric sensor) must not
    // be pushed over the integer by rounding.
    let nearest = raw.round();
    let raw = if (raw - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        raw
    };
    Ok(raw.ceil().clamp(1.0, n as f64) as usize)
}

/// Global (Qf, Qd) of the k-out-of-n rule with identical sensors.
pub fn global_roc(k: usize, n: usize, sensor: SensorProfile) -> Result<(f64, f64)> {
    check_threshold(k, n)?;
    Ok((
        binomial_tails(k, n, sensor.pf).0,
        binomial_tails(k, n, sensor.pd).0,
    ))
}

/// (q0, q1) = (pi0 (1 - Qf), pi1 (1 - Qd)).
pub fn joint_probs(prior: ChannelPrior, qf: f64, qd: f64) -> (f64, f64) {
    (prior.pi0 * (1.0 - qf), prior.pi1 * (1.0 - qd))
}

/// k-out-of-N counting rule: `true` (H1, busy) iff at least `k` reports are 1.
pub fn fuse(decisions: &[bool], k: usize) -> Result<bool> {
    if decisions.is_empty() {
        return Err(Error::EmptyDecisions);
    }
    check_threshold(k, decisions.len())?;
    Ok(decisions.iter().filter(|&&d| d).count() >= k)
}

/// k-out-of-N over the reports whose indices are not in `excluded`.
pub fn strategy_proof_fuse(decisions: &[bool], excluded: &[usize], k_reduced: usize) -> Result<bool> {
    if decisions.is_empty() {
        return Err(Error::EmptyDecisions);
    }
    if let Some(&bad) = excluded.iter().find(|&&i| i >= decisions.len()) {
        return Err(invalid(
            "excluded",
            format!("index {bad} out of range for {} decisions", decisions.len()),
        ));
    }
    let mut remaining = 0usize;
    let mut ones = 0usize;
    for (i, &d) in decisions.iter().enumerate() {
        if !excluded.contains(&i) {
            remaining += 1;
            ones += d as usize;
        }
    }
    if remaining == 0 {
        return Err(Error::NoSensingInput);
    }
    check_threshold(k_reduced, remaining)?;
    Ok(ones >= k_reduced)
}

/// Global false-alarm probability when one of `n` CRs reports through
/// `policy` and the others report truthfully.
pub fn falsified_qf(sensor: SensorProfile, policy: DeviationPolicy, k: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", "falsified Qf needs at least two sensors"));
    }
    check_threshold(k, n)?;
    let pf = sensor.pf;
    let reported = policy.reported_one_prob(pf);
    let pivotal = binomial_term(n - 1, k - 1, pf, k - 1, n - k);
    let (peers_reach_k, _) = binomial_tails(k, n - 1, pf);
    Ok(reported * pivotal + peers_reach_k)
}

/// Upper bound on |U0 - U0~| when the top CR's report is removed from a
/// k-out-of-n rule.
pub fn utility_gap_bound(
    prior: ChannelPrior,
    sensor: SensorProfile,
    k: usize,
    n: usize,
    expected_wmax: f64,
    c_coll: f64,
) -> Result<f64> {
    check_threshold(k, n)?;
    let SensorProfile { pf, pd } = sensor;
    let ChannelPrior { pi0, pi1 } = prior;
    let nf = n as i32;
    let mut bound = (pi0 * expected_wmax * pf.powi(nf) - pi1 * c_coll * pd.powi(nf)).abs();
    for j in k..n {
        bound += pi1 * c_coll * binomial_term(n - 1, j, pd, j, n - 1 - j)
            + pi0 * expected_wmax * binomial_term(n - 1, j - 1, pf, j, n - 1 - j);
    }
    Ok(bound)
}

/// C(m, r) p^a (1-p)^b, with 0^0 = 1.
fn binomial_term(m: usize, r: usize, p: f64, a: usize, b: usize) -> f64 {
    choose(m, r) * p.powi(a as i32) * (1.0 - p).powi(b as i32)
}

fn choose(m: usize, r: usize) -> f64 {
    if r > m {
        return 0.0;
    }
    let r = r.min(m - r);
    (0..r).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// `(P[X >= k], P[X < k])` for `X ~ Bin(n, p)`.
///
/// Each side is summed separately so neither is obtained by cancellation.
/// Terms come from the ratio recurrence `C(n,i+1)/C(n,i) = (n-i)/(i+1)`
/// carried in log space, which avoids factorial overflow and underflow.
pub fn binomial_tails(k: usize, n: usize, p: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    if k > n {
        return (0.0, 1.0);
    }
    if p <= 0.0 {
        return (0.0, 1.0);
    }
    if p >= 1.0 {
        return (1.0, 0.0);
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut ln_choose = 0.0;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for i in 0..=n {
        let term = (ln_choose + i as f64 * ln_p + (n - i) as f64 * ln_q).exp();
        if i >= k {
            upper += term;
        } else {
            lower += term;
        }
        if i < n {
            ln_choose += ((n - i) as f64 / (i + 1) as f64).ln();
        }
    }
    (upper.min(1.0), lower.min(1.0))
}
