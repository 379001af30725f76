//! Statistical and exhaustive checks of the mechanism's game-theoretic
//! properties.
//!
//! Every Monte-Carlo comparison is paired: the truthful and the deviating
//! strategy see the same peer valuations and the same sensing draws, so
//! identical strategies produce bitwise-identical estimates and the standard
//! error is that of the per-trial difference.
//!
//! A deviation is flagged when its mean gain exceeds three standard errors
//! plus `1e-12` (absorbs rounding when the paired difference is identically
//! zero).

use rand::Rng;

use crate::auction::{Moderator, SensingDraw};
use crate::error::{invalid, Error, Result};
use crate::sensing::DeviationPolicy;
use crate::sim::{linspace, run_trials, trial_rng, Moments};
use crate::valuation::ValuationModel;

const ABS_SLACK: f64 = 1e-12;

fn flagged(gain: f64, se: f64) -> bool {
    gain > 3.0 * se + ABS_SLACK
}

/// Best misreport found for one CR at one true valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub cr_index: usize,
    pub true_value: f64,
    pub best_misreport: f64,
    pub utility_truth: f64,
    pub utility_best_misreport: f64,
    /// Standard error of the paired gain.
    pub standard_error: f64,
    pub violated: bool,
}

/// Per-CR estimates over a true-value grid and a report grid.
struct CrTable {
    /// U_i(t; t) per true value.
    truth: Vec<Moments>,
    /// U_i(v; t) - U_i(t; t), row-major over (t, v).
    diff: Vec<Moments>,
    /// q0 ψ_i(v) per report.
    alloc: Vec<Moments>,
}

fn union_index(grid_t: &[f64], grid_v: &[f64]) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut values: Vec<f64> = Vec::new();
    let mut index_of = |x: f64| match values.iter().position(|&y| y == x) {
        Some(p) => p,
        None => {
            values.push(x);
            values.len() - 1
        }
    };
    let it: Vec<usize> = grid_t.iter().map(|&x| index_of(x)).collect();
    let iv: Vec<usize> = grid_v.iter().map(|&x| index_of(x)).collect();
    (values, it, iv)
}

fn check_inputs(moderator: &Moderator, models: &[ValuationModel], n_trials: usize) -> Result<()> {
    if models.len() != moderator.n() {
        return Err(invalid("models", format!("expected {}, got {}", moderator.n(), models.len())));
    }
    if n_trials == 0 {
        return Err(invalid("n_trials", "must be at least 1"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cr_table(
    moderator: &Moderator,
    models: &[ValuationModel],
    i: usize,
    grid_t: &[f64],
    grid_v: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<CrTable> {
    let (values, it, iv) = union_index(grid_t, grid_v);
    let (nt, nv) = (grid_t.len(), grid_v.len());
    let c_p = moderator.costs.c_p;
    let acc = run_trials(
        n_trials,
        || {
            (
                CrTable {
                    truth: vec![Moments::default(); nt],
                    diff: vec![Moments::default(); nt * nv],
                    alloc: vec![Moments::default(); nv],
                },
                None::<Error>,
            )
        },
        |(table, err), trial| {
            if err.is_some() {
                return;
            }
            let mut rng = trial_rng(seed, &[trial as u64, 0]);
            let mut t: Vec<f64> = models.iter().map(|m| m.sample(&mut rng)).collect();
            let mut outcome = Vec::with_capacity(values.len());
            for &x in &values {
                t[i] = x;
                match moderator.clear(&t, models) {
                    Ok(c) => outcome.push((c.stats.q0 * c.shares[i], c.payments[i])),
                    Err(e) => {
                        *err = Some(e);
                        return;
                    }
                }
            }
            for (a, &ti) in grid_t.iter().enumerate() {
                let (pa, ba) = outcome[it[a]];
                let u_truth = pa * ti - ba - c_p;
                table.truth[a].push(u_truth);
                for b in 0..nv {
                    let (pv, bv) = outcome[iv[b]];
                    table.diff[a * nv + b].push((pv * ti - bv - c_p) - u_truth);
                }
            }
            for b in 0..nv {
                table.alloc[b].push(outcome[iv[b]].0);
            }
        },
        |(into, err), (from, e2)| {
            if err.is_none() {
                *err = e2;
            }
            into.truth.iter_mut().zip(&from.truth).for_each(|(a, b)| a.merge(b));
            into.diff.iter_mut().zip(&from.diff).for_each(|(a, b)| a.merge(b));
            into.alloc.iter_mut().zip(&from.alloc).for_each(|(a, b)| a.merge(b));
        },
    );
    match acc {
        (_, Some(e)) => Err(e),
        (table, None) => Ok(table),
    }
}

/// Evenly spaced grid over a model's support.
pub fn support_grid(model: &ValuationModel, points: usize) -> Vec<f64> {
    let (a, z) = model.support();
    linspace(a, z, points)
}

/// Valuation incentive compatibility: for every CR and every true value on
/// a `grid_t`-point grid, the most profitable of `grid_v` misreports.
pub fn check_ic(
    moderator: &Moderator,
    models: &[ValuationModel],
    grid_t: usize,
    grid_v: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<DeviationReport>> {
    check_inputs(moderator, models, n_trials)?;
    let mut reports = Vec::new();
    for (i, model) in models.iter().enumerate() {
        let gt = support_grid(model, grid_t);
        let gv = support_grid(model, grid_v);
        let table = cr_table(moderator, models, i, &gt, &gv, n_trials, seed)?;
        for (a, &t) in gt.iter().enumerate() {
            let row = &table.diff[a * gv.len()..(a + 1) * gv.len()];
            let best = (0..gv.len())
                .max_by(|&x, &y| row[x].mean.total_cmp(&row[y].mean))
                .unwrap_or(0);
            let gain = row[best].mean;
            let se = row[best].std_error();
            reports.push(DeviationReport {
                cr_index: i,
                true_value: t,
                best_misreport: gv[best],
                utility_truth: table.truth[a].mean,
                utility_best_misreport: table.truth[a].mean + gain,
                standard_error: se,
                violated: flagged(gain, se),
            });
        }
    }
    Ok(reports)
}

/// Individual rationality over a true-value grid, for one CR.
#[derive(Debug, Clone, PartialEq)]
pub struct IrReport {
    pub cr_index: usize,
    pub min_utility: f64,
    pub min_at: f64,
    pub min_se: f64,
    /// U_i at the bottom of the support (zero for an optimal mechanism).
    pub utility_at_lower: f64,
    pub se_at_lower: f64,
    pub utility_at_upper: f64,
    pub violated: bool,
}

pub fn check_ir(
    moderator: &Moderator,
    models: &[ValuationModel],
    grid_t: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<IrReport>> {
    check_inputs(moderator, models, n_trials)?;
    let mut out = Vec::new();
    for (i, model) in models.iter().enumerate() {
        let gt = support_grid(model, grid_t);
        let table = cr_table(moderator, models, i, &gt, &[], n_trials, seed)?;
        let (k, m) = table
            .truth
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
            .ok_or_else(|| invalid("grid_t", "empty"))?;
        let last = table.truth.len() - 1;
        out.push(IrReport {
            cr_index: i,
            min_utility: m.mean,
            min_at: gt[k],
            min_se: m.std_error(),
            utility_at_lower: table.truth[0].mean,
            se_at_lower: table.truth[0].std_error(),
            utility_at_upper: table.truth[last].mean,
            violated: flagged(-m.mean, m.std_error()),
        });
    }
    Ok(out)
}

/// Expected allocation Ψ_i(v) = E[q0 ψ_i(v, t_-i)] and the truthful
/// utility U_i(v) on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationCurve {
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_se: Vec<f64>,
    pub utility: Vec<f64>,
    pub utility_se: Vec<f64>,
}

impl AllocationCurve {
    /// No decrease larger than `k_se` combined standard errors.
    pub fn is_monotone(&self, k_se: f64) -> bool {
        self.psi.windows(2).zip(self.psi_se.windows(2)).all(|(p, s)| {
            p[1] >= p[0] - k_se * (s[0] * s[0] + s[1] * s[1]).sqrt() - ABS_SLACK
        })
    }

    /// max_j |U(v_j) - U(v_0) - trapezoid ∫_{v_0}^{v_j} Ψ|.
    pub fn envelope_residual(&self) -> f64 {
        let mut integral = 0.0;
        let mut worst: f64 = 0.0;
        for j in 1..self.v.len() {
            integral += 0.5 * (self.psi[j - 1] + self.psi[j]) * (self.v[j] - self.v[j - 1]);
            worst = worst.max((self.utility[j] - self.utility[0] - integral).abs());
        }
        worst
    }
}

pub fn expected_allocation(
    moderator: &Moderator,
    models: &[ValuationModel],
    i: usize,
    v_grid: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<AllocationCurve> {
    check_inputs(moderator, models, n_trials)?;
    if i >= models.len() {
        return Err(invalid("i", format!("CR {i} out of range")));
    }
    let table = cr_table(moderator, models, i, v_grid, v_grid, n_trials, seed)?;
    Ok(AllocationCurve {
        v: v_grid.to_vec(),
        psi: table.alloc.iter().map(|m| m.mean).collect(),
        psi_se: table.alloc.iter().map(|m| m.std_error()).collect(),
        utility: table.truth.iter().map(|m| m.mean).collect(),
        utility_se: table.truth.iter().map(|m| m.std_error()).collect(),
    })
}

/// Gain of the top-virtual-valuation CR from filtering its sensing bit
/// through `policy`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingDeviation {
    pub policy: DeviationPolicy,
    pub gain: f64,
    pub se: f64,
    /// Gain beyond three standard errors.
    pub profitable: bool,
    /// Largest |U_j| of any non-winner in any trial, under either strategy.
    pub max_non_winner_utility: f64,
}

/// The (α1, α2) ∈ {0, 0.5, 1}² grid.
pub fn policy_grid() -> Vec<DeviationPolicy> {
    let levels = [0.0, 0.5, 1.0];
    levels
        .iter()
        .flat_map(|&a1| levels.iter().map(move |&a2| DeviationPolicy { alpha1: a1, alpha2: a2 }))
        .collect()
}

fn top_index(models: &[ValuationModel], t: &[f64]) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, (m, &x)) in models.iter().zip(t).enumerate() {
        let w = m.virtual_valuation(x)?;
        if w > best.1 {
            best = (j, w);
        }
    }
    Ok(best.0)
}

pub fn check_sensing_truthfulness(
    moderator: &Moderator,
    models: &[ValuationModel],
    policies: &[DeviationPolicy],
    n_trials: usize,
    seed: u64,
) -> Result<Vec<SensingDeviation>> {
    check_inputs(moderator, models, n_trials)?;
    let np = policies.len();
    let (prior, sensor) = (moderator.sensing.prior, moderator.sensing.sensor);
    let acc = run_trials(
        n_trials,
        || (vec![Moments::default(); np], vec![0.0f64; np], None::<Error>),
        |(gain, non_winner, err), trial| {
            if err.is_some() {
                return;
            }
            let result = (|| -> Result<()> {
                let mut rng = trial_rng(seed, &[trial as u64, 0]);
                let t: Vec<f64> = models.iter().map(|m| m.sample(&mut rng)).collect();
                let clearing = moderator.clear(&t, models)?;
                let dev = top_index(models, &t)?;
                let draw = SensingDraw::sample(prior, sensor, t.len(), &mut trial_rng(seed, &[trial as u64, 1]));
                let truth = moderator.settle(&clearing, &t, Some((draw.h1, &draw.decisions)))?;
                for (p, policy) in policies.iter().enumerate() {
                    let reports = draw.reported(dev, *policy);
                    let lie = moderator.settle(&clearing, &t, Some((draw.h1, &reports)))?;
                    gain[p].push(lie.ui[dev] - truth.ui[dev]);
                    for j in (0..t.len()).filter(|j| !clearing.winners.contains(j)) {
                        non_winner[p] = non_winner[p].max(lie.ui[j].abs()).max(truth.ui[j].abs());
                    }
                }
                Ok(())
            })();
            if let Err(e) = result {
                *err = Some(e);
            }
        },
        |(g, nw, err), (g2, nw2, e2)| {
            if err.is_none() {
                *err = e2;
            }
            g.iter_mut().zip(&g2).for_each(|(a, b)| a.merge(b));
            nw.iter_mut().zip(&nw2).for_each(|(a, b)| *a = a.max(*b));
        },
    );
    if let Some(e) = acc.2 {
        return Err(e);
    }
    Ok(policies
        .iter()
        .zip(acc.0.iter().zip(&acc.1))
        .map(|(&policy, (m, &nw))| SensingDeviation {
            policy,
            gain: m.mean,
            se: m.std_error(),
            profitable: flagged(m.mean, m.std_error()),
            max_non_winner_utility: nw,
        })
        .collect())
}

/// Best joint lie (valuation report and sensing policy) for one CR and one
/// true value. This goes beyond the unilateral checks above, which treat the
/// two kinds of misreport separately.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDeviation {
    pub cr_index: usize,
    pub true_value: f64,
    pub misreport: f64,
    pub policy: DeviationPolicy,
    pub gain: f64,
    pub se: f64,
    pub violated: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_joint_deviation(
    moderator: &Moderator,
    models: &[ValuationModel],
    i: usize,
    grid_t: usize,
    grid_v: usize,
    policies: &[DeviationPolicy],
    n_trials: usize,
    seed: u64,
) -> Result<Vec<JointDeviation>> {
    check_inputs(moderator, models, n_trials)?;
    if i >= models.len() {
        return Err(invalid("i", format!("CR {i} out of range")));
    }
    let gt = support_grid(&models[i], grid_t);
    let gv = support_grid(&models[i], grid_v);
    let (values, it, iv) = union_index(&gt, &gv);
    let (nt, nv, np) = (gt.len(), gv.len(), policies.len());
    let (prior, sensor) = (moderator.sensing.prior, moderator.sensing.sensor);
    let acc = run_trials(
        n_trials,
        || (vec![Moments::default(); nt * nv * np], None::<Error>),
        |(diff, err), trial| {
            if err.is_some() {
                return;
            }
            let result = (|| -> Result<()> {
                let mut rng = trial_rng(seed, &[trial as u64, 0]);
                let mut t: Vec<f64> = models.iter().map(|m| m.sample(&mut rng)).collect();
                let draw = SensingDraw::sample(prior, sensor, t.len(), &mut trial_rng(seed, &[trial as u64, 1]));
                let lies: Vec<Vec<bool>> = policies.iter().map(|p| draw.reported(i, *p)).collect();
                // (q_use ψ_i, b_i) per report value, truthful sensing first.
                let mut outcome = Vec::with_capacity(values.len());
                for &x in &values {
                    t[i] = x;
                    let c = moderator.clear(&t, models)?;
                    let used_truth = !moderator.fuse_decisions(&draw.decisions, &c)?;
                    let used: Vec<bool> = lies
                        .iter()
                        .map(|d| moderator.fuse_decisions(d, &c).map(|busy| !busy))
                        .collect::<Result<_>>()?;
                    outcome.push((c.shares[i], c.payments[i], used_truth, used));
                }
                let h0 = !draw.h1 as u8 as f64;
                for (a, &ti) in gt.iter().enumerate() {
                    let (pa, ba, ua, _) = &outcome[it[a]];
                    let u_truth = h0 * (*ua as u8 as f64) * pa * ti - ba;
                    for (b, &ib) in iv.iter().enumerate() {
                        let (pv, bv, _, used) = &outcome[ib];
                        for p in 0..np {
                            let u = h0 * (used[p] as u8 as f64) * pv * ti - bv;
                            diff[(a * nv + b) * np + p].push(u - u_truth);
                        }
                    }
                }
                Ok(())
            })();
            if let Err(e) = result {
                *err = Some(e);
            }
        },
        |(d, err), (d2, e2)| {
            if err.is_none() {
                *err = e2;
            }
            d.iter_mut().zip(&d2).for_each(|(a, b)| a.merge(b));
        },
    );
    if let Some(e) = acc.1 {
        return Err(e);
    }
    let diff = acc.0;
    Ok(gt
        .iter()
        .enumerate()
        .map(|(a, &t)| {
            let (b, p) = (0..nv)
                .flat_map(|b| (0..np).map(move |p| (b, p)))
                .max_by(|x, y| diff[(a * nv + x.0) * np + x.1].mean.total_cmp(&diff[(a * nv + y.0) * np + y.1].mean))
                .unwrap_or((0, 0));
            let m = &diff[(a * nv + b) * np + p];
            JointDeviation {
                cr_index: i,
                true_value: t,
                misreport: gv[b],
                policy: policies[p],
                gain: m.mean,
                se: m.std_error(),
                violated: flagged(m.mean, m.std_error()),
            }
        })
        .collect())
}

/// Points of the discretised two-CR instance.
pub const TINY_GRID: usize = 8;

/// Midpoint grid of `TINY_GRID` equally likely values on a model's support.
pub fn tiny_grid(model: &ValuationModel) -> Vec<f64> {
    let (a, z) = model.support();
    (0..TINY_GRID)
        .map(|j| a + (z - a) * (j as f64 + 0.5) / TINY_GRID as f64)
        .collect()
}

/// `u[i][t][r]`: CR `i`'s expected utility with true value `grid_i[t]`
/// reporting `grid_i[r]`.
pub type UtilityCube = Vec<Vec<Vec<f64>>>;

/// Exact expected utilities of a two-CR instance whose valuations are
/// uniform on [`tiny_grid`] points, enumerating both hypotheses and all four
/// decision patterns.
pub fn exact_two_cr(moderator: &Moderator, models: &[ValuationModel]) -> Result<UtilityCube> {
    if models.len() != 2 || moderator.n() != 2 {
        return Err(invalid("models", "the exact oracle is defined for two CRs"));
    }
    let grids: Vec<Vec<f64>> = models.iter().map(tiny_grid).collect();
    let (prior, sensor) = (moderator.sensing.prior, moderator.sensing.sensor);
    let c_p = moderator.costs.c_p;
    let mut cube = vec![vec![vec![0.0; TINY_GRID]; TINY_GRID]; 2];
    for i in 0..2 {
        let o = 1 - i;
        for r in 0..TINY_GRID {
            for &other in &grids[o] {
                let mut v = [0.0; 2];
                v[i] = grids[i][r];
                v[o] = other;
                let c = moderator.clear(&v, models)?;
                // Probability that the band is used while idle.
                let mut p_use_idle = 0.0;
                for pattern in 0..4u8 {
                    let d = [pattern & 1 == 1, pattern & 2 == 2];
                    let ones = d.iter().filter(|&&x| x).count() as i32;
                    let p_h0 = prior.pi0 * sensor.pf.powi(ones) * (1.0 - sensor.pf).powi(2 - ones);
                    if !moderator.fuse_decisions(&d, &c)? {
                        p_use_idle += p_h0;
                    }
                }
                for (ti, &t) in grids[i].iter().enumerate() {
                    cube[i][ti][r] += (p_use_idle * c.shares[i] * t - c.payments[i] - c_p) / TINY_GRID as f64;
                }
            }
        }
    }
    Ok(cube)
}

/// Exact vs Monte-Carlo verdicts on the two-CR instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstanceReport {
    pub exact: UtilityCube,
    pub mc_mean: UtilityCube,
    pub mc_se: UtilityCube,
    /// `(i, t, r)` with exact gain above 1e-12.
    pub exact_violations: Vec<(usize, usize, usize)>,
    /// `(i, t, r)` with paired Monte-Carlo gain above three standard errors.
    pub mc_violations: Vec<(usize, usize, usize)>,
    /// Largest |exact - MC| / se over all cells with se > 0.
    pub max_z: f64,
    pub exact_ir: bool,
}

impl TinyInstanceReport {
    /// MC flags only real violations and finds some iff there are some.
    pub fn verdicts_agree(&self) -> bool {
        self.mc_violations.iter().all(|v| self.exact_violations.contains(v))
            && self.exact_violations.is_empty() == self.mc_violations.is_empty()
    }
}

pub fn tiny_instance_check(
    moderator: &Moderator,
    models: &[ValuationModel],
    n_trials: usize,
    seed: u64,
) -> Result<TinyInstanceReport> {
    let exact = exact_two_cr(moderator, models)?;
    let grids: Vec<Vec<f64>> = models.iter().map(tiny_grid).collect();
    let (prior, sensor) = (moderator.sensing.prior, moderator.sensing.sensor);
    let g = TINY_GRID;
    let cells = 2 * g * g;
    let acc = run_trials(
        n_trials,
        || (vec![Moments::default(); cells], vec![Moments::default(); cells], None::<Error>),
        |(util, diff, err), trial| {
            if err.is_some() {
                return;
            }
            let result = (|| -> Result<()> {
                let mut rng = trial_rng(seed, &[trial as u64, 0]);
                let others = [rng.random_range(0..g), rng.random_range(0..g)];
                let draw = SensingDraw::sample(prior, sensor, 2, &mut trial_rng(seed, &[trial as u64, 1]));
                for i in 0..2 {
                    let o = 1 - i;
                    let mut row = Vec::with_capacity(g);
                    for r in 0..g {
                        let mut v = [0.0; 2];
                        v[i] = grids[i][r];
                        v[o] = grids[o][others[o]];
                        let c = moderator.clear(&v, models)?;
                        let used = !moderator.fuse_decisions(&draw.decisions, &c)?;
                        let idle_use = (!draw.h1 && used) as u8 as f64;
                        row.push((idle_use * c.shares[i], c.payments[i]));
                    }
                    for (ti, &t) in grids[i].iter().enumerate() {
                        let truth = row[ti].0 * t - row[ti].1 - moderator.costs.c_p;
                        for (r, &(p, b)) in row.iter().enumerate() {
                            let u = p * t - b - moderator.costs.c_p;
                            let k = (i * g + ti) * g + r;
                            util[k].push(u);
                            diff[k].push(u - truth);
                        }
                    }
                }
                Ok(())
            })();
            if let Err(e) = result {
                *err = Some(e);
            }
        },
        |(u, d, err), (u2, d2, e2)| {
            if err.is_none() {
                *err = e2;
            }
            u.iter_mut().zip(&u2).for_each(|(a, b)| a.merge(b));
            d.iter_mut().zip(&d2).for_each(|(a, b)| a.merge(b));
        },
    );
    if let Some(e) = acc.2 {
        return Err(e);
    }
    let (util, diff) = (acc.0, acc.1);
    let mut mc_mean = vec![vec![vec![0.0; g]; g]; 2];
    let mut mc_se = mc_mean.clone();
    let mut exact_violations = Vec::new();
    let mut mc_violations = Vec::new();
    let mut max_z: f64 = 0.0;
    let mut exact_ir = true;
    for i in 0..2 {
        for t in 0..g {
            exact_ir &= exact[i][t][t] >= -ABS_SLACK;
            for r in 0..g {
                let k = (i * g + t) * g + r;
                mc_mean[i][t][r] = util[k].mean;
                mc_se[i][t][r] = util[k].std_error();
                if mc_se[i][t][r] > 0.0 {
                    max_z = max_z.max((util[k].mean - exact[i][t][r]).abs() / mc_se[i][t][r]);
                }
                if exact[i][t][r] - exact[i][t][t] > ABS_SLACK {
                    exact_violations.push((i, t, r));
                }
                if flagged(diff[k].mean, diff[k].std_error()) {
                    mc_violations.push((i, t, r));
                }
            }
        }
    }
    Ok(TinyInstanceReport {
        exact,
        mc_mean,
        mc_se,
        exact_violations,
        mc_violations,
        max_z,
        exact_ir,
    })
}
