//! Parameter sweeps of the moderator's expected utility, feasibility maps,
//! the throughput experiment and the strategy-proof utility gap.
//!
//! Sweeps use common random numbers: trial `i` draws its valuations (and
//! sampled sensing outcome) once and evaluates every sweep point on them.
//! Adjacent sweep points are therefore compared on paired differences,
//! which is what makes jump detection at `k_opt` change points sharp.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::{
    closed_form_t, expected_wmax, feasibility_check, reserve_w, CostModel, Mechanism, Moderator, OausaRules,
    SensingMode, WmaxClamp, WmaxMethod,
};
use crate::comparison::throughput_bound_check;
use crate::error::{invalid, Error, Result};
use crate::sensing::{
    utility_gap_bound, ChannelPrior, FusionMode, FusionStats, KChoice, ReducedK, SensingSetup, SensorProfile,
};
use crate::sim::{linspace, run_trials, trial_rng, Moments};
use crate::valuation::ValuationModel;

/// Samples used for E[w_max] when no closed form applies.
pub const WMAX_SAMPLES: usize = 200_000;

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Pf,
    Pd,
    CP,
    CColl,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Pf => "pf",
            SweepParam::Pd => "pd",
            SweepParam::CP => "c_p",
            SweepParam::CColl => "c_coll",
        }
    }

    fn domain(self) -> (f64, f64) {
        match self {
            SweepParam::Pf | SweepParam::Pd => (0.0, 1.0),
            SweepParam::CP | SweepParam::CColl => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pf" => Ok(SweepParam::Pf),
            "pd" => Ok(SweepParam::Pd),
            "c_p" | "cp" => Ok(SweepParam::CP),
            "c_coll" | "ccoll" => Ok(SweepParam::CColl),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

/// `steps` evenly spaced values on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepRange {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.steps)
    }

    fn validate(&self, name: &'static str, domain: (f64, f64)) -> Result<()> {
        if self.steps < 2 {
            return Err(invalid(name, "a sweep needs at least 2 steps"));
        }
        if !(self.lo < self.hi) {
            return Err(invalid(name, format!("empty range [{}, {}]", self.lo, self.hi)));
        }
        if self.lo < domain.0 || self.hi > domain.1 {
            return Err(invalid(
                name,
                format!("range [{}, {}] leaves the domain [{}, {}]", self.lo, self.hi, domain.0, domain.1),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_crs: usize,
    pub pi0: f64,
    pub pf: f64,
    pub pd: f64,
    pub c_p: f64,
    pub c_coll: f64,
    pub param: SweepParam,
    pub range: SweepRange,
    pub n_trials: usize,
    pub seed: u64,
    /// Mechanism reported in `u0_mean`.
    pub mechanism: Mechanism,
    /// Also run the modified VCG baseline on the same draws.
    pub include_vcg: bool,
    pub fusion_mode: FusionMode,
    pub sensing_mode: SensingMode,
    pub k: KChoice,
    pub reduced_k: ReducedK,
    /// Shared by every CR.
    pub valuation: ValuationModel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_crs: 10,
            pi0: 0.8,
            pf: 0.1,
            pd: 0.9,
            c_p: 0.02,
            c_coll: 5.0,
            param: SweepParam::Pf,
            range: SweepRange::new(0.01, 0.5, 50),
            n_trials: 10_000,
            seed: 1,
            mechanism: Mechanism::Oausa(OausaRules::default()),
            include_vcg: true,
            fusion_mode: FusionMode::Standard,
            sensing_mode: SensingMode::Integrated,
            k: KChoice::Optimal,
            reduced_k: ReducedK::Recompute,
            valuation: ValuationModel::Uniform { a: 0.0, z: 1.0 },
        }
    }
}

/// Parameters of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointParams {
    pub pf: f64,
    pub pd: f64,
    pub c_p: f64,
    pub c_coll: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_crs == 0 {
            return Err(invalid("n_crs", "at least one CR is required"));
        }
        if self.n_trials == 0 {
            return Err(invalid("n_trials", "must be at least 1"));
        }
        ChannelPrior::new(self.pi0)?;
        for (name, p) in [("pf", self.pf), ("pd", self.pd)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("{p} is not a probability")));
            }
        }
        CostModel::new(self.c_p, self.c_coll)?;
        self.range.validate(self.param.name(), self.param.domain())
    }

    pub fn at(&self, x: f64) -> PointParams {
        let mut p = PointParams {
            pf: self.pf,
            pd: self.pd,
            c_p: self.c_p,
            c_coll: self.c_coll,
        };
        match self.param {
            SweepParam::Pf => p.pf = x,
            SweepParam::Pd => p.pd = x,
            SweepParam::CP => p.c_p = x,
            SweepParam::CColl => p.c_coll = x,
        }
        p
    }

    pub fn models(&self) -> Vec<ValuationModel> {
        vec![self.valuation.clone(); self.n_crs]
    }

    fn setup(&self, p: PointParams) -> Result<(SensingSetup, CostModel)> {
        let mut sensing = SensingSetup::new(ChannelPrior::new(self.pi0)?, SensorProfile::new(p.pf, p.pd)?);
        sensing.k = self.k;
        sensing.reduced_k = self.reduced_k;
        Ok((sensing, CostModel::new(p.c_p, p.c_coll)?))
    }
}

/// One sweep point. Numeric fields are NaN on flagged rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub params: PointParams,
    pub stats: Option<FusionStats>,
    pub u0_mean: f64,
    pub u0_se: f64,
    pub u0_ci95: f64,
    pub u0_vcg: f64,
    pub u0_vcg_ci95: f64,
    /// Paired mean and standard error of U0 - U0_vcg.
    pub vcg_gap: f64,
    pub vcg_gap_se: f64,
    pub u0_traditional: f64,
    /// q0 E[w_max] - q1 c_coll - N c_p.
    pub t_term: f64,
    pub feasible: bool,
    /// Mean Σψ.
    pub mean_alloc: f64,
    /// Why the point could not be evaluated.
    pub flag: Option<String>,
}

impl SweepRow {
    pub fn k_opt(&self) -> Option<usize> {
        self.stats.map(|s| s.k)
    }

    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub n_crs: usize,
    pub expected_wmax: f64,
    pub rows: Vec<SweepRow>,
    /// Per-trial differences U0(x_{i+1}) - U0(x_i); empty moments when
    /// either row is flagged.
    pub adjacent: Vec<Moments>,
    /// Per-trial least-squares slope of U0 against the sweep value.
    pub slope: Moments,
}

struct Point {
    oausa: Moderator,
    vcg: Option<Moderator>,
}

struct SweepAcc {
    u0: Vec<Moments>,
    vcg: Vec<Moments>,
    gap: Vec<Moments>,
    alloc: Vec<Moments>,
    adjacent: Vec<Moments>,
    slope: Moments,
    err: Option<Error>,
}

impl SweepAcc {
    fn new(n: usize) -> Self {
        Self {
            u0: vec![Moments::default(); n],
            vcg: vec![Moments::default(); n],
            gap: vec![Moments::default(); n],
            alloc: vec![Moments::default(); n],
            adjacent: vec![Moments::default(); n.saturating_sub(1)],
            slope: Moments::default(),
            err: None,
        }
    }

    fn merge(&mut self, other: SweepAcc) {
        if self.err.is_none() {
            self.err = other.err;
        }
        for (a, b) in [
            (&mut self.u0, &other.u0),
            (&mut self.vcg, &other.vcg),
            (&mut self.gap, &other.gap),
            (&mut self.alloc, &other.alloc),
            (&mut self.adjacent, &other.adjacent),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        self.slope.merge(&other.slope);
    }
}

/// E[max(w_max, 0)]: closed form for iid uniforms, Monte-Carlo otherwise.
pub fn wmax_for(models: &[ValuationModel], seed: u64) -> Result<f64> {
    match expected_wmax(models, WmaxClamp::Zero, WmaxMethod::ClosedForm) {
        Ok(e) => Ok(e.mean),
        Err(Error::Unsupported(_)) => Ok(expected_wmax(
            models,
            WmaxClamp::Zero,
            WmaxMethod::MonteCarlo {
                n_samples: WMAX_SAMPLES,
                seed: crate::sim::derive_seed(seed, &[u64::MAX]),
            },
        )?
        .mean),
        Err(e) => Err(e),
    }
}

fn build_point(config: &SweepConfig, p: PointParams) -> Result<Point> {
    let (sensing, costs) = config.setup(p)?;
    let n = config.n_crs;
    let oausa = Moderator::new(sensing, costs, config.mechanism, config.fusion_mode, n)?;
    let stats = oausa.nominal_stats()?;
    reserve_w(stats.q0, stats.q1, costs.c_coll)?;
    let vcg = if config.include_vcg {
        Some(Moderator::new(sensing, costs, Mechanism::ModifiedVcg, FusionMode::Standard, n)?)
    } else {
        None
    };
    Ok(Point { oausa, vcg })
}

/// Runs the sweep. Points whose parameters make the auction undefined are
/// flagged, not fatal.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let xs = config.range.values();
    let models = config.models();
    let n = config.n_crs;
    let ewmax = wmax_for(&models, config.seed)?;
    let points: Vec<std::result::Result<Point, Error>> =
        xs.iter().map(|&x| build_point(config, config.at(x))).collect();
    for (x, p) in xs.iter().zip(&points) {
        if let Err(e) = p {
            log::warn!("{} = {x}: point flagged: {e}", config.param);
        }
    }

    // Centred sweep values of the usable points, for per-trial slopes.
    let ok: Vec<usize> = (0..xs.len()).filter(|&i| points[i].is_ok()).collect();
    let x_bar = ok.iter().map(|&i| xs[i]).sum::<f64>() / ok.len().max(1) as f64;
    let sxx: f64 = ok.iter().map(|&i| (xs[i] - x_bar).powi(2)).sum();

    let seed = config.seed;
    let mode = config.sensing_mode;
    let acc = run_trials(
        config.n_trials,
        || SweepAcc::new(xs.len()),
        |acc, trial| {
            if acc.err.is_some() {
                return;
            }
            let t = crate::auction::draw_valuations(&models, &mut trial_rng(seed, &[trial as u64, 0]));
            let mut u = vec![f64::NAN; xs.len()];
            for (j, point) in points.iter().enumerate() {
                let Ok(point) = point else { continue };
                let r = point.oausa.utilities_at(&t, &models, mode, seed, trial).and_then(|r| {
                    let v = match &point.vcg {
                        Some(m) => Some(m.utilities_at(&t, &models, mode, seed, trial)?.u0),
                        None => None,
                    };
                    Ok((r, v))
                });
                match r {
                    Ok((r, v)) => {
                        u[j] = r.u0;
                        acc.u0[j].push(r.u0);
                        acc.alloc[j].push(r.alloc);
                        if let Some(v) = v {
                            acc.vcg[j].push(v);
                            acc.gap[j].push(r.u0 - v);
                        }
                    }
                    Err(e) => {
                        acc.err = Some(e);
                        return;
                    }
                }
            }
            for j in 0..xs.len() - 1 {
                if !u[j].is_nan() && !u[j + 1].is_nan() {
                    acc.adjacent[j].push(u[j + 1] - u[j]);
                }
            }
            if sxx > 0.0 {
                acc.slope.push(ok.iter().map(|&i| (xs[i] - x_bar) * u[i]).sum::<f64>() / sxx);
            }
        },
        |a, b| a.merge(b),
    );
    if let Some(e) = acc.err {
        return Err(e);
    }

    let prior = ChannelPrior::new(config.pi0)?;
    let rows = xs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let params = config.at(x);
            match &points[j] {
                Err(e) => flagged_row(x, params, e.to_string()),
                Ok(point) => {
                    let stats = point.oausa.nominal_stats().expect("checked when the point was built");
                    let costs = point.oausa.costs;
                    let u0 = &acc.u0[j];
                    let (u0_vcg, u0_vcg_ci95, vcg_gap, vcg_gap_se) = if point.vcg.is_some() {
                        (acc.vcg[j].mean, acc.vcg[j].ci95(), acc.gap[j].mean, acc.gap[j].std_error())
                    } else {
                        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
                    };
                    SweepRow {
                        sweep_value: x,
                        params,
                        stats: Some(stats),
                        u0_mean: u0.mean,
                        u0_se: u0.std_error(),
                        u0_ci95: u0.ci95(),
                        u0_vcg,
                        u0_vcg_ci95,
                        vcg_gap,
                        vcg_gap_se,
                        u0_traditional: u0.mean - (prior.pi1 - stats.q1) * costs.c_coll + n as f64 * costs.c_p,
                        t_term: closed_form_t(&stats, ewmax, costs, n),
                        feasible: feasibility_check(ewmax, stats.q0, stats.q1, costs, n),
                        mean_alloc: acc.alloc[j].mean,
                        flag: None,
                    }
                }
            }
        })
        .collect();

    Ok(SweepResult {
        param: config.param,
        n_crs: n,
        expected_wmax: ewmax,
        rows,
        adjacent: acc.adjacent,
        slope: acc.slope,
    })
}

fn flagged_row(x: f64, params: PointParams, reason: String) -> SweepRow {
    SweepRow {
        sweep_value: x,
        params,
        stats: None,
        u0_mean: f64::NAN,
        u0_se: f64::NAN,
        u0_ci95: f64::NAN,
        u0_vcg: f64::NAN,
        u0_vcg_ci95: f64::NAN,
        vcg_gap: f64::NAN,
        vcg_gap_se: f64::NAN,
        u0_traditional: f64::NAN,
        t_term: f64::NAN,
        feasible: false,
        mean_alloc: f64::NAN,
        flag: Some(reason),
    }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros
/// stripped, exponent form outside `[1e-4, 1e12)`.
pub fn fmt_g(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "sweep_param",
    "sweep_value",
    "k_opt",
    "qf",
    "qd",
    "q0",
    "q1",
    "u0_mean",
    "u0_ci95",
    "u0_vcg",
    "u0_traditional",
    "feasible",
];

impl SweepResult {
    fn record(&self, row: &SweepRow) -> Vec<String> {
        let s = row.stats;
        let stat = |f: fn(&FusionStats) -> f64| s.as_ref().map_or(f64::NAN, f);
        vec![
            self.param.name().to_string(),
            fmt_g(row.sweep_value),
            row.k_opt().map_or_else(|| "nan".to_string(), |k| k.to_string()),
            fmt_g(stat(|s| s.qf)),
            fmt_g(stat(|s| s.qd)),
            fmt_g(stat(|s| s.q0)),
            fmt_g(stat(|s| s.q1)),
            fmt_g(row.u0_mean),
            fmt_g(row.u0_ci95),
            fmt_g(row.u0_vcg),
            fmt_g(row.u0_traditional),
            row.feasible.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let io = |e: csv::Error| Error::Inconsistent(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for row in &self.rows {
            w.write_record(self.record(row)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Inconsistent(format!("csv: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ASCII"))
    }

    /// Whitespace-separated columns for gnuplot; the header is a comment.
    pub fn write_dat<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {}", CSV_HEADER[1..].join(" "))?;
        for row in &self.rows {
            writeln!(out, "{}", self.record(row)[1..].join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let io = |e: std::io::Error| Error::Inconsistent(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv"))).map_err(io)?)?;
        self.write_dat(std::fs::File::create(dir.join(format!("{stem}.dat"))).map_err(io)?)
            .map_err(io)
    }

    /// Pair indices `i` (rows `i`, `i+1`) where `k_opt` changes.
    pub fn k_change_points(&self) -> Vec<usize> {
        self.pairs()
            .filter(|&i| self.rows[i].k_opt() != self.rows[i + 1].k_opt())
            .collect()
    }

    /// Pair indices where the threshold decreases.
    pub fn k_decrements(&self) -> Vec<usize> {
        self.pairs()
            .filter(|&i| self.rows[i + 1].k_opt() < self.rows[i].k_opt())
            .collect()
    }

    /// Pairs whose paired difference moves in `direction` by more than
    /// `k_se` standard errors.
    pub fn significant_moves(&self, direction: Direction, k_se: f64) -> Vec<usize> {
        self.pairs()
            .filter(|&i| {
                let d = &self.adjacent[i];
                d.n > 0 && direction.sign() * d.mean > k_se * d.std_error()
            })
            .collect()
    }

    /// Counts pairs outside `skip` that move against `trend` beyond
    /// `k_se` standard errors; returns `(violations, pairs considered)`.
    pub fn trend_violations(&self, trend: Direction, k_se: f64, skip: &[usize]) -> (usize, usize) {
        let against = self.significant_moves(trend.opposite(), k_se);
        let considered: Vec<usize> = self
            .pairs()
            .filter(|i| !skip.contains(i) && self.adjacent[*i].n > 0)
            .collect();
        let violations = considered.iter().filter(|i| against.contains(i)).count();
        (violations, considered.len())
    }

    fn pairs(&self) -> impl Iterator<Item = usize> + '_ {
        0..self.rows.len().saturating_sub(1)
    }

    /// Least-squares line through the unflagged `(sweep_value, u0_mean)`.
    pub fn linear_fit(&self) -> LinearFit {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| !r.is_flagged())
            .map(|r| (r.sweep_value, r.u0_mean))
            .unzip();
        LinearFit::new(&x, &y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
        Self { slope, intercept, r_squared }
    }
}

/// Twelve built-in sweeps: P_f, P_d, c_p and c_coll, each at three values of a second parameter.
pub fn standard_sweeps(n_trials: usize, seed: u64) -> Vec<(String, SweepConfig)> {
    let base = SweepConfig {
        n_trials,
        seed,
        ..SweepConfig::default()
    };
    let mut out = Vec::new();
    for pd in [0.5, 0.7, 0.9] {
        out.push((
            format!("pf_sweep_pd{pd}"),
            SweepConfig {
                pd,
                param: SweepParam::Pf,
                range: SweepRange::new(0.01, 0.5, 50),
                ..base.clone()
            },
        ));
    }
    for pf in [0.05, 0.1, 0.2] {
        out.push((
            format!("pd_sweep_pf{pf}"),
            SweepConfig {
                pf,
                param: SweepParam::Pd,
                range: SweepRange::new(0.5, 0.99, 50),
                ..base.clone()
            },
        ));
    }
    for c_coll in [100.0, 500.0, 1000.0] {
        out.push((
            format!("cp_sweep_ccoll{c_coll}"),
            SweepConfig {
                c_coll,
                param: SweepParam::CP,
                range: SweepRange::new(0.0, 0.1, 21),
                ..base.clone()
            },
        ));
    }
    for c_p in [0.01, 0.02, 0.05] {
        out.push((
            format!("ccoll_sweep_cp{c_p}"),
            SweepConfig {
                c_p,
                param: SweepParam::CColl,
                range: SweepRange::new(100.0, 1000.0, 19),
                ..base.clone()
            },
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityConfig {
    pub n_crs: usize,
    pub pi0: f64,
    pub pf: f64,
    pub pd: f64,
    pub c_p: SweepRange,
    pub c_coll: SweepRange,
    /// Monte-Carlo trials per cell for the cross-check; 0 skips it.
    pub n_trials: usize,
    pub seed: u64,
    pub mechanism: Mechanism,
    pub fusion_mode: FusionMode,
    pub sensing_mode: SensingMode,
    pub valuation: ValuationModel,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        Self {
            n_crs: 10,
            pi0: 0.8,
            pf: 0.1,
            pd: 0.9,
            c_p: SweepRange::new(0.0, 0.1, 20),
            c_coll: SweepRange::new(0.0, 10_000.0, 20),
            n_trials: 0,
            seed: 1,
            mechanism: Mechanism::default(),
            fusion_mode: FusionMode::Standard,
            sensing_mode: SensingMode::Integrated,
            valuation: ValuationModel::Uniform { a: 0.0, z: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityCell {
    pub c_p: f64,
    pub c_coll: f64,
    pub feasible: bool,
    pub t_term: f64,
    /// Monte-Carlo U0 and its 95% half-width; NaN without the cross-check.
    pub u0_mean: f64,
    pub u0_ci95: f64,
}

impl FeasibilityCell {
    /// The simulated utility is significantly of the other sign than the
    /// verdict (beyond `k` half-widths).
    pub fn contradicts(&self, k: f64) -> bool {
        if self.u0_mean.is_nan() {
            return false;
        }
        if self.feasible {
            self.u0_mean < -k * self.u0_ci95
        } else {
            self.u0_mean > k * self.u0_ci95
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityMap {
    pub n_crs: usize,
    pub stats: FusionStats,
    pub expected_wmax: f64,
    /// Row-major: c_coll outer, c_p inner.
    pub cells: Vec<FeasibilityCell>,
}

impl FeasibilityMap {
    /// Largest feasible c_p at `c_coll`: (q0 E[w_max] - q1 c_coll) / N.
    pub fn boundary_cp(&self, c_coll: f64) -> f64 {
        (self.stats.q0 * self.expected_wmax - self.stats.q1 * c_coll) / self.n_crs as f64
    }

    pub fn contradictions(&self, k: f64) -> Vec<FeasibilityCell> {
        self.cells.iter().copied().filter(|c| c.contradicts(k)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let io = |e: csv::Error| Error::Inconsistent(format!("csv: {e}"));
        w.write_record(["c_p", "c_coll", "feasible", "t_term", "u0_mean", "u0_ci95"])
            .map_err(io)?;
        for c in &self.cells {
            w.write_record([
                fmt_g(c.c_p),
                fmt_g(c.c_coll),
                c.feasible.to_string(),
                fmt_g(c.t_term),
                fmt_g(c.u0_mean),
                fmt_g(c.u0_ci95),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Inconsistent(format!("csv: {e}")))
    }
}

/// Feasibility verdicts over a (c_p, c_coll) grid, optionally checked
/// against simulated utilities on common random numbers.
pub fn feasibility_map(config: &FeasibilityConfig) -> Result<FeasibilityMap> {
    config.c_p.validate("c_p", SweepParam::CP.domain())?;
    config.c_coll.validate("c_coll", SweepParam::CColl.domain())?;
    let n = config.n_crs;
    let sensing = SensingSetup::new(ChannelPrior::new(config.pi0)?, SensorProfile::new(config.pf, config.pd)?);
    let stats = sensing.stats(n)?;
    let models = vec![config.valuation.clone(); n];
    let ewmax = wmax_for(&models, config.seed)?;
    let grid: Vec<CostModel> = config
        .c_coll
        .values()
        .into_iter()
        .flat_map(|cc| config.c_p.values().into_iter().map(move |cp| CostModel { c_p: cp, c_coll: cc }))
        .collect();
    let mut cells: Vec<FeasibilityCell> = grid
        .iter()
        .map(|&c| FeasibilityCell {
            c_p: c.c_p,
            c_coll: c.c_coll,
            feasible: feasibility_check(ewmax, stats.q0, stats.q1, c, n),
            t_term: closed_form_t(&stats, ewmax, c, n),
            u0_mean: f64::NAN,
            u0_ci95: f64::NAN,
        })
        .collect();

    if config.n_trials > 0 {
        let moderators: Vec<Moderator> = grid
            .iter()
            .map(|&c| Moderator::new(sensing, c, config.mechanism, config.fusion_mode, n))
            .collect::<Result<_>>()?;
        let (seed, mode) = (config.seed, config.sensing_mode);
        let (acc, err) = run_trials(
            config.n_trials,
            || (vec![Moments::default(); grid.len()], None::<Error>),
            |(acc, err), trial| {
                if err.is_some() {
                    return;
                }
                let t = crate::auction::draw_valuations(&models, &mut trial_rng(seed, &[trial as u64, 0]));
                for (m, mom) in moderators.iter().zip(acc.iter_mut()) {
                    match m.utilities_at(&t, &models, mode, seed, trial) {
                        Ok(r) => mom.push(r.u0),
                        Err(e) => {
                            *err = Some(e);
                            return;
                        }
                    }
                }
            },
            |(a, ea), (b, eb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
                if ea.is_none() {
                    *ea = eb;
                }
            },
        );
        if let Some(e) = err {
            return Err(e);
        }
        for (cell, m) in cells.iter_mut().zip(&acc) {
            cell.u0_mean = m.mean;
            cell.u0_ci95 = m.ci95();
        }
    }
    Ok(FeasibilityMap {
        n_crs: n,
        stats,
        expected_wmax: ewmax,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputConfig {
    /// One model per CR, in valuation units `t = c x`.
    pub models: Vec<ValuationModel>,
    /// The common scale `c`.
    pub scale: f64,
    pub pi0: f64,
    pub pf: f64,
    pub pd: f64,
    pub costs: CostModel,
    pub n_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputSummary {
    pub n_trials: usize,
    pub regular: bool,
    /// Trials where the band is allocated (max w clears the reserve).
    pub eligible: usize,
    /// Eligible trials satisfying `w_k(t_k)/c <= x_oausa <= x_vcg`.
    pub holds: usize,
    /// Trials (all of them) where OAUSA and VCG pick the same CR.
    pub same_choice: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
}

impl ThroughputSummary {
    pub fn fraction_holds(&self) -> f64 {
        if self.eligible == 0 {
            f64::NAN
        } else {
            self.holds as f64 / self.eligible as f64
        }
    }
}

/// Compares OAUSA's and the highest-valuation CR's throughput on
/// simulated valuation profiles.
pub fn throughput_experiment(config: &ThroughputConfig) -> Result<ThroughputSummary> {
    let n = config.models.len();
    if n == 0 {
        return Err(invalid("models", "empty"));
    }
    if config.n_trials == 0 {
        return Err(invalid("n_trials", "must be at least 1"));
    }
    let sensing = SensingSetup::new(ChannelPrior::new(config.pi0)?, SensorProfile::new(config.pf, config.pd)?);
    let stats = sensing.stats(n)?;
    let reserve = reserve_w(stats.q0, stats.q1, config.costs.c_coll)?;
    let regular = config.models.iter().all(|m| m.is_regular());
    let scales = vec![config.scale; n];
    let models = &config.models;
    let seed = config.seed;

    #[derive(Default)]
    struct Acc {
        eligible: usize,
        holds: usize,
        same: usize,
        gap: Moments,
        max_gap: f64,
        err: Option<Error>,
    }
    let acc = run_trials(
        config.n_trials,
        Acc::default,
        |acc, trial| {
            if acc.err.is_some() {
                return;
            }
            let t = crate::auction::draw_valuations(models, &mut trial_rng(seed, &[trial as u64, 0]));
            let rec = match throughput_bound_check(models, &scales, &t) {
                Ok(r) => r,
                Err(e) => {
                    acc.err = Some(e);
                    return;
                }
            };
            acc.same += (rec.j == rec.k) as usize;
            acc.gap.push(rec.gap());
            acc.max_gap = acc.max_gap.max(rec.gap());
            let w_max = t
                .iter()
                .zip(models)
                .map(|(&x, m)| m.virtual_valuation(x).unwrap_or(f64::NEG_INFINITY))
                .fold(f64::NEG_INFINITY, f64::max);
            if regular && w_max >= reserve {
                acc.eligible += 1;
                acc.holds += rec.holds() as usize;
            }
        },
        |a, b| {
            if a.err.is_none() {
                a.err = b.err;
            }
            a.eligible += b.eligible;
            a.holds += b.holds;
            a.same += b.same;
            a.gap.merge(&b.gap);
            a.max_gap = a.max_gap.max(b.max_gap);
        },
    );
    if let Some(e) = acc.err {
        return Err(e);
    }
    Ok(ThroughputSummary {
        n_trials: config.n_trials,
        regular,
        eligible: acc.eligible,
        holds: acc.holds,
        same_choice: acc.same,
        mean_gap: acc.gap.mean,
        max_gap: acc.max_gap,
    })
}

/// Standard vs strategy-proof fusion on the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMeasurement {
    pub n_crs: usize,
    pub u0_standard: f64,
    pub u0_strategy_proof: f64,
    /// Paired mean of U0 - Ũ0 and its standard error.
    pub gap: f64,
    pub gap_se: f64,
    pub bound: f64,
    /// q0 E[w_max] - q1 c_coll minus the same with the reduced statistics.
    pub analytic_gap: f64,
}

pub fn utility_gap(
    sensing: SensingSetup,
    costs: CostModel,
    models: &[ValuationModel],
    n_trials: usize,
    seed: u64,
    mode: SensingMode,
) -> Result<GapMeasurement> {
    let n = models.len();
    let standard = Moderator::new(sensing, costs, Mechanism::default(), FusionMode::Standard, n)?;
    let sp = Moderator::new(sensing, costs, Mechanism::default(), FusionMode::StrategyProof, n)?;
    let full = standard.nominal_stats()?;
    let reduced = sp.nominal_stats()?;
    let ewmax = wmax_for(models, seed)?;
    let bound = utility_gap_bound(sensing.prior, sensing.sensor, full.k, n, ewmax, costs.c_coll)?;
    let analytic_gap = closed_form_t(&full, ewmax, costs, n) - closed_form_t(&reduced, ewmax, costs, n);

    let (acc, err) = run_trials(
        n_trials.max(1),
        || ([Moments::default(); 3], None::<Error>),
        |(acc, err), trial| {
            if err.is_some() {
                return;
            }
            let t = crate::auction::draw_valuations(models, &mut trial_rng(seed, &[trial as u64, 0]));
            let r = standard
                .utilities_at(&t, models, mode, seed, trial)
                .and_then(|a| Ok((a.u0, sp.utilities_at(&t, models, mode, seed, trial)?.u0)));
            match r {
                Ok((a, b)) => {
                    acc[0].push(a);
                    acc[1].push(b);
                    acc[2].push(a - b);
                }
                Err(e) => *err = Some(e),
            }
        },
        |(a, ea), (b, eb)| {
            a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
            if ea.is_none() {
                *ea = eb;
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(GapMeasurement {
        n_crs: n,
        u0_standard: acc[0].mean,
        u0_strategy_proof: acc[1].mean,
        gap: acc[2].mean,
        gap_se: acc[2].std_error(),
        bound,
        analytic_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(param: SweepParam, range: SweepRange) -> SweepConfig {
        SweepConfig {
            param,
            range,
            n_trials: 2000,
            seed: 9,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn fmt_g_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333"),
            (0.798692050315, "0.798692050315"),
            (2.938052e-5, "2.938052e-05"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.9999999999999e-5, "0.0001"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "{x}");
        }
    }

    #[test]
    fn csv_header_and_bytes_are_reproducible() {
        let cfg = small(SweepParam::Pf, SweepRange::new(0.05, 0.2, 4));
        let a = run_sweep(&cfg).unwrap().to_csv_string().unwrap();
        let b = run_sweep(&cfg).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(
            "sweep_param,sweep_value,k_opt,qf,qd,q0,q1,u0_mean,u0_ci95,u0_vcg,u0_traditional,feasible\n"
        ));
        assert!(!a.contains('\r'));
        assert_eq!(a.lines().count(), 5);
    }

    #[test]
    fn rows_satisfy_total_probability() {
        let r = run_sweep(&small(SweepParam::Pd, SweepRange::new(0.5, 0.99, 8))).unwrap();
        let prior = ChannelPrior::new(0.8).unwrap();
        for row in &r.rows {
            let s = row.stats.unwrap();
            assert!(s.total_probability_residual(prior) < 1e-12);
            assert!((1..=10).contains(&s.k));
        }
    }

    #[test]
    fn uninformative_points_are_flagged() {
        let cfg = SweepConfig {
            pd: 0.5,
            ..small(SweepParam::Pf, SweepRange::new(0.3, 0.6, 4))
        };
        let r = run_sweep(&cfg).unwrap();
        assert!(r.rows.iter().any(|row| row.is_flagged()));
        assert!(r.rows.iter().any(|row| !row.is_flagged()));
        let csv = r.to_csv_string().unwrap();
        assert!(csv.contains("nan"));
    }

    #[test]
    fn validation() {
        let bad = small(SweepParam::Pf, SweepRange::new(0.2, 1.5, 5));
        assert!(run_sweep(&bad).is_err());
        let one = small(SweepParam::CP, SweepRange::new(0.0, 0.1, 1));
        assert!(run_sweep(&one).is_err());
    }

    #[test]
    fn c_p_slope_is_minus_n_per_trial() {
        let r = run_sweep(&small(SweepParam::CP, SweepRange::new(0.0, 0.1, 6))).unwrap();
        assert!((r.slope.mean + 10.0).abs() < 1e-9);
        assert!(r.slope.std_error() < 1e-9);
        let fit = r.linear_fit();
        assert!((fit.slope + 10.0).abs() < 1e-9);
    }

    #[test]
    fn linear_fit_exact_line() {
        let f = LinearFit::new(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!((f.r_squared - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_boundary_matches_closed_form() {
        let map = feasibility_map(&FeasibilityConfig::default()).unwrap();
        assert_eq!(map.cells.len(), 400);
        let cp5 = map.boundary_cp(5.0);
        assert!((cp5 - 0.06534).abs() < 1e-4, "{cp5}");
        assert!(map.cells[0].feasible);
        for c in &map.cells {
            assert_eq!(c.feasible, c.c_p <= map.boundary_cp(c.c_coll) + 1e-15);
        }
    }

    #[test]
    fn throughput_iid_has_no_gap() {
        let cfg = ThroughputConfig {
            models: vec![ValuationModel::uniform(0.0, 1.0).unwrap(); 4],
            scale: 2.0,
            pi0: 0.8,
            pf: 0.1,
            pd: 0.9,
            costs: CostModel::new(0.02, 5.0).unwrap(),
            n_trials: 2000,
            seed: 3,
        };
        let s = throughput_experiment(&cfg).unwrap();
        assert_eq!(s.same_choice, 2000);
        assert_eq!(s.max_gap, 0.0);
        assert_eq!(s.fraction_holds(), 1.0);
    }

    #[test]
    fn gap_shrinks_with_n() {
        let sensing = SensingSetup::new(ChannelPrior::new(0.8).unwrap(), SensorProfile::new(0.1, 0.9).unwrap());
        let costs = CostModel::new(0.02, 5.0).unwrap();
        let g5 = utility_gap(
            sensing,
            costs,
            &vec![ValuationModel::uniform(0.0, 1.0).unwrap(); 5],
            4000,
            1,
            SensingMode::Integrated,
        )
        .unwrap();
        let g10 = utility_gap(
            sensing,
            costs,
            &vec![ValuationModel::uniform(0.0, 1.0).unwrap(); 10],
            4000,
            1,
            SensingMode::Integrated,
        )
        .unwrap();
        assert!(g5.gap.abs() <= g5.bound && g10.gap.abs() <= g10.bound);
        assert!(g10.gap.abs() < g5.gap.abs());
        assert!(g10.bound < g5.bound);
    }
}
