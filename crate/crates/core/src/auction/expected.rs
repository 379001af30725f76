//! Expected utilities by Monte-Carlo, E[w_max] and the feasibility test.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Clearing, CostModel, Moderator};
use crate::error::{Error, Result};
use crate::sensing::{ChannelPrior, DeviationPolicy, FusionStats, SensorProfile};
use crate::sim::{run_trials, trial_rng, Moments};
use crate::valuation::ValuationModel;

/// How the sensing outcome of a trial is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingMode {
    /// Draw the hypothesis and every CR's decision.
    #[default]
    Sampled,
    /// Weight the idle/collision outcomes by q0 and q1.
    Integrated,
}

impl fmt::Display for SensingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensingMode::Sampled => "sampled",
            SensingMode::Integrated => "integrated",
        })
    }
}

impl FromStr for SensingMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sampled" => Ok(SensingMode::Sampled),
            "integrated" => Ok(SensingMode::Integrated),
            other => Err(format!("unknown sensing mode `{other}`")),
        }
    }
}

/// Hypothesis and local decisions for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingDraw {
    pub h1: bool,
    pub decisions: Vec<bool>,
    /// One extra uniform per CR, consumed only by deviation policies.
    pub flips: Vec<f64>,
}

impl SensingDraw {
    pub fn sample<R: Rng + ?Sized>(prior: ChannelPrior, sensor: SensorProfile, n: usize, rng: &mut R) -> Self {
        let h1 = rng.random::<f64>() < prior.pi1;
        let p = if h1 { sensor.pd } else { sensor.pf };
        let decisions = (0..n).map(|_| rng.random::<f64>() < p).collect();
        let flips = (0..n).map(|_| rng.random::<f64>()).collect();
        Self { h1, decisions, flips }
    }

    /// Reports when CR `i` passes its decision through `policy`.
    pub fn reported(&self, i: usize, policy: DeviationPolicy) -> Vec<bool> {
        let mut d = self.decisions.clone();
        d[i] = policy.apply(d[i], self.flips[i]);
        d
    }
}

/// Realized utilities of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialUtility {
    pub u0: f64,
    pub ui: Vec<f64>,
    /// Σψ handed out if the band is allocated.
    pub alloc: f64,
}

/// Monte-Carlo estimate of the moderator's and CRs' expected utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    pub u0: f64,
    pub u0_se: f64,
    pub ci95: f64,
    pub ui: Vec<f64>,
    pub ui_se: Vec<f64>,
    /// q0 E[w_max] - q1 c_coll - N c_p, when E[w_max] has a closed form.
    pub t_term: Option<f64>,
    pub n_trials: usize,
    /// Mean Σψ over trials.
    pub mean_alloc: f64,
    pub stats: FusionStats,
}

pub(crate) fn draw_valuations<R: Rng + ?Sized>(models: &[ValuationModel], rng: &mut R) -> Vec<f64> {
    models.iter().map(|m| m.sample(rng)).collect()
}

impl Moderator {
    /// Settles a cleared round. Payments are charged whatever the sensing
    /// outcome; the band is used only if the inference is idle, and a
    /// collision is charged when it is used while the PU is present.
    ///
    /// `sensing = None` integrates the outcome: idle use with probability
    /// q0, collision with probability q1.
    pub fn settle(&self, clearing: &Clearing, t: &[f64], sensing: Option<(bool, &[bool])>) -> Result<TrialUtility> {
        let (use_idle, use_busy) = match sensing {
            None => (clearing.stats.q0, clearing.stats.q1),
            Some((h1, reports)) => {
                let used = !self.fuse_decisions(reports, clearing)? as u8 as f64;
                if h1 {
                    (0.0, used)
                } else {
                    (used, 0.0)
                }
            }
        };
        let alloc: f64 = clearing.shares.iter().sum();
        let revenue: f64 = clearing.payments.iter().sum();
        let ui = t
            .iter()
            .zip(&clearing.shares)
            .zip(&clearing.payments)
            .map(|((&t, &psi), &b)| use_idle * psi * t - b - self.costs.c_p)
            .collect();
        Ok(TrialUtility {
            u0: revenue - use_busy * self.costs.c_coll * alloc,
            ui,
            alloc,
        })
    }

    /// Utilities when the valuations are `t`; sampled sensing uses stream
    /// `(seed, index, 1)`.
    pub fn utilities_at(
        &self,
        t: &[f64],
        models: &[ValuationModel],
        mode: SensingMode,
        seed: u64,
        index: usize,
    ) -> Result<TrialUtility> {
        let clearing = self.clear(t, models)?;
        match mode {
            SensingMode::Integrated => self.settle(&clearing, t, None),
            SensingMode::Sampled => {
                let mut rng = trial_rng(seed, &[index as u64, 1]);
                let draw = SensingDraw::sample(self.sensing.prior, self.sensing.sensor, self.n(), &mut rng);
                self.settle(&clearing, t, Some((draw.h1, &draw.decisions)))
            }
        }
    }

    /// Truthful trial `index`: valuations from stream `(seed, index, 0)`.
    pub fn trial(&self, models: &[ValuationModel], seed: u64, index: usize, mode: SensingMode) -> Result<TrialUtility> {
        let t = draw_valuations(models, &mut trial_rng(seed, &[index as u64, 0]));
        self.utilities_at(&t, models, mode, seed, index)
    }
}

struct Acc {
    u0: Moments,
    ui: Vec<Moments>,
    alloc: Moments,
    err: Option<Error>,
}

/// Monte-Carlo expected utilities under truthful bidding.
pub fn expected_utilities(
    moderator: &Moderator,
    models: &[ValuationModel],
    n_trials: usize,
    seed: u64,
    mode: SensingMode,
) -> Result<UtilityReport> {
    let n = moderator.n();
    if n_trials == 0 {
        return Err(crate::error::invalid("n_trials", "must be at least 1"));
    }
    if models.len() != n {
        return Err(crate::error::invalid("models", format!("expected {n}, got {}", models.len())));
    }
    let acc = run_trials(
        n_trials,
        || Acc {
            u0: Moments::default(),
            ui: vec![Moments::default(); n],
            alloc: Moments::default(),
            err: None,
        },
        |acc, i| {
            if acc.err.is_some() {
                return;
            }
            match moderator.trial(models, seed, i, mode) {
                Ok(r) => {
                    acc.u0.push(r.u0);
                    acc.alloc.push(r.alloc);
                    acc.ui.iter_mut().zip(&r.ui).for_each(|(m, &x)| m.push(x));
                }
                Err(e) => acc.err = Some(e),
            }
        },
        |into, from| {
            if into.err.is_none() {
                into.err = from.err;
            }
            into.u0.merge(&from.u0);
            into.alloc.merge(&from.alloc);
            into.ui.iter_mut().zip(&from.ui).for_each(|(a, b)| a.merge(b));
        },
    );
    if let Some(e) = acc.err {
        return Err(e);
    }
    let stats = moderator.nominal_stats()?;
    let t_term = expected_wmax(models, WmaxClamp::Zero, WmaxMethod::ClosedForm)
        .ok()
        .map(|e| closed_form_t(&stats, e.mean, moderator.costs, n));
    Ok(UtilityReport {
        u0: acc.u0.mean,
        u0_se: acc.u0.std_error(),
        ci95: acc.u0.ci95(),
        ui: acc.ui.iter().map(|m| m.mean).collect(),
        ui_se: acc.ui.iter().map(|m| m.std_error()).collect(),
        t_term,
        n_trials,
        mean_alloc: acc.alloc.mean,
        stats,
    })
}

/// T = q0 E[w_max] - q1 c_coll - N c_p.
pub fn closed_form_t(stats: &FusionStats, expected_wmax: f64, costs: CostModel, n: usize) -> f64 {
    stats.q0 * expected_wmax - stats.q1 * costs.c_coll - n as f64 * costs.c_p
}

/// Lower cut applied to w_max.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum WmaxClamp {
    /// E[max(w_max, 0)].
    #[default]
    Zero,
    /// E[w_max 1{w_max >= r}].
    Reserve(f64),
}

impl WmaxClamp {
    fn threshold(self) -> f64 {
        match self {
            WmaxClamp::Zero => 0.0,
            WmaxClamp::Reserve(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WmaxMethod {
    /// iid uniform models only.
    ClosedForm,
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmaxEstimate {
    pub mean: f64,
    /// Zero for the closed form.
    pub se: f64,
}

/// `Some((a, z))` when every model is the same uniform distribution.
pub fn iid_uniform_support(models: &[ValuationModel]) -> Option<(f64, f64)> {
    match models.first()? {
        first @ ValuationModel::Uniform { a, z } if models.iter().all(|m| m == first) => Some((*a, *z)),
        _ => None,
    }
}

/// E[w_max 1{w_max >= r}] for N iid uniform[a, z] valuations.
///
/// w_max = 2 t_max - z has cdf G(x) = y(x)^N with y(x) = ((x + z)/2 - a)/L,
/// so the truncated mean is z - r G(r) - 2L/(N+1) (1 - y(r)^{N+1}).
fn uniform_wmax(n: usize, a: f64, z: f64, r: f64) -> f64 {
    let len = z - a;
    let r = r.max(2.0 * a - z);
    if r >= z {
        return 0.0;
    }
    let y = ((r + z) / 2.0 - a) / len;
    let g = y.powi(n as i32);
    z - r * g - 2.0 * len / (n + 1) as f64 * (1.0 - g * y)
}

/// Expected (clamped) maximum virtual valuation.
pub fn expected_wmax(models: &[ValuationModel], clamp: WmaxClamp, method: WmaxMethod) -> Result<WmaxEstimate> {
    if models.is_empty() {
        return Err(crate::error::invalid("models", "empty"));
    }
    let r = clamp.threshold();
    match method {
        WmaxMethod::ClosedForm => {
            let (a, z) = iid_uniform_support(models).ok_or_else(|| {
                Error::Unsupported("closed-form E[w_max] needs identical uniform models".into())
            })?;
            Ok(WmaxEstimate {
                mean: uniform_wmax(models.len(), a, z, r),
                se: 0.0,
            })
        }
        WmaxMethod::MonteCarlo { n_samples, seed } => {
            let m = run_trials(
                n_samples,
                Moments::default,
                |acc, i| {
                    let mut rng = trial_rng(seed, &[i as u64]);
                    let w = models
                        .iter()
                        .map(|m| m.virtual_valuation(m.sample(&mut rng)).unwrap_or(f64::NEG_INFINITY))
                        .fold(f64::NEG_INFINITY, f64::max);
                    acc.push(if w >= r { w } else { 0.0 });
                },
                |a, b| a.merge(&b),
            );
            Ok(WmaxEstimate {
                mean: m.mean,
                se: m.std_error(),
            })
        }
    }
}

/// E[w_max] >= N c_p / q0 + (q1/q0) c_coll; never feasible when q0 = 0.
pub fn feasibility_check(expected_wmax: f64, q0: f64, q1: f64, costs: CostModel, n: usize) -> bool {
    q0 > 0.0 && expected_wmax >= (n as f64 * costs.c_p + q1 * costs.c_coll) / q0
}
