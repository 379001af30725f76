//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification found violations, 2 bad usage
//! or configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::auction::{iid_uniform_support, Moderator};
use crate::config::{Config, Overrides};
use crate::error::{Error, Result};
use crate::experiments::{feasibility_map, standard_sweeps, run_sweep, throughput_experiment, SweepResult};
use crate::sensing::FusionMode;
use crate::verifier::{check_ic, check_ir, check_sensing_truthfulness, policy_grid, tiny_instance_check};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "oausa", version, about = "Spectrum auctions under uncertain spectrum availability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear one auction round from `valuations` and `decisions`.
    Run(Common),
    /// Sweep the moderator's expected utility over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Run the twelve built-in sweeps instead of the configured one.
        #[arg(long)]
        paper: bool,
    },
    /// Check incentive compatibility, individual rationality and sensing
    /// truthfulness.
    Verify(Common),
    /// Feasibility verdicts over a (c_p, c_coll) grid.
    Feasibility(Common),
    /// OAUSA vs highest-valuation throughput.
    Throughput(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, short, default_value = "out")]
    pub output_dir: PathBuf,
    #[arg(long, env = "OAUSA_SEED")]
    pub seed: Option<u64>,
    /// Drop the collision-cost reserve.
    #[arg(long)]
    pub no_reserve: bool,
    /// Payments ignore the reserve.
    #[arg(long)]
    pub paper_literal_payments: bool,
    /// standard | strategy-proof
    #[arg(long)]
    pub fusion_mode: Option<String>,
    /// oausa | oausa-paper-literal | vcg | first-price, optionally with -no-reserve
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Monte-Carlo trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            mechanism: self.mechanism.clone(),
            no_reserve: self.no_reserve,
            paper_literal_payments: self.paper_literal_payments,
            fusion_mode: self.fusion_mode.clone(),
            n_trials: self.trials,
        });
        Ok(cfg)
    }

    fn stem(&self, fallback: &str) -> String {
        self.config
            .as_ref()
            .and_then(|p| p.file_stem())
            .map_or_else(|| fallback.to_string(), |s| s.to_string_lossy().into_owned())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let common = match &cli.command {
        Command::Run(c) | Command::Verify(c) | Command::Feasibility(c) | Command::Throughput(c) => c,
        Command::Sweep { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("--threads ignored: {e}");
        }
    }
    match execute(&cli.command) {
        Ok(Outcome { summary, violations }) => {
            print!("{summary}");
            if violations {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

struct Outcome {
    summary: String,
    violations: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Inconsistent(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let err = |e: csv::Error| Error::Inconsistent(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Run(c) => run(c),
        Command::Sweep { common, paper } => sweep(common, *paper),
        Command::Verify(c) => verify(c),
        Command::Feasibility(c) => feasibility(c),
        Command::Throughput(c) => throughput(c),
    }
}

fn run(c: &Common) -> Result<Outcome> {
    let cfg = c.config()?;
    let bids = cfg.bids()?;
    let moderator = Moderator::new(cfg.sensing()?, cfg.costs()?, cfg.mechanism()?, cfg.fusion_mode()?, bids.len())?;
    let out = moderator.run(&bids)?;
    create_dir(&c.output_dir)?;
    let g = crate::experiments::fmt_g;
    let rows: Vec<Vec<String>> = (0..bids.len())
        .map(|i| {
            vec![
                i.to_string(),
                g(bids.valuations[i]),
                (bids.decisions[i] as u8).to_string(),
                g(out.psi[i]),
                g(out.payments[i]),
                out.winners.contains(&i).to_string(),
            ]
        })
        .collect();
    write_csv(
        &c.output_dir.join(format!("{}.csv", c.stem("run"))),
        &["cr", "valuation", "decision", "psi", "payment", "winner"],
        &rows,
    )?;

    let mut s = String::new();
    let st = out.stats;
    let _ = writeln!(s, "mechanism {}  fusion {}", moderator.mechanism, moderator.fusion_mode);
    let _ = writeln!(s, "k = {} of {}  q0 = {}  q1 = {}", st.k, st.n_used, g(st.q0), g(st.q1));
    let _ = writeln!(s, "reserve (virtual) = {}", g(out.reserve_w));
    let verdict = if out.busy {
        "busy: band withheld"
    } else if out.allocated {
        "idle: band allocated"
    } else {
        "idle: no bid clears the reserve"
    };
    let _ = writeln!(s, "inference {verdict}");
    for r in &rows {
        let _ = writeln!(s, "  CR {}  t = {}  d = {}  psi = {}  b = {}", r[0], r[1], r[2], r[3], r[4]);
    }
    Ok(Outcome {
        summary: s,
        violations: false,
    })
}

fn summarize_sweep(name: &str, r: &SweepResult, s: &mut String) {
    let _ = writeln!(s, "{name}: {} over {} points", r.param, r.rows.len());
    let changes = r.k_change_points();
    if !changes.is_empty() {
        let at: Vec<String> = changes
            .iter()
            .map(|&i| format!("{}..{}", r.rows[i].sweep_value, r.rows[i + 1].sweep_value))
            .collect();
        let _ = writeln!(s, "  k_opt changes between {}", at.join(", "));
    }
    let flagged = r.rows.iter().filter(|row| row.is_flagged()).count();
    if flagged > 0 {
        let _ = writeln!(s, "  {flagged} flagged points");
    }
    let fit = r.linear_fit();
    let _ = writeln!(s, "  linear fit slope {:.6e}, R^2 {:.4}", fit.slope, fit.r_squared);
    for row in r.rows.iter().filter(|row| !row.is_flagged()) {
        if row.u0_mean + 3.0 * row.u0_ci95 < row.u0_vcg {
            let _ = writeln!(s, "  VCG above OAUSA at {}", row.sweep_value);
        }
    }
}

fn sweep(c: &Common, paper: bool) -> Result<Outcome> {
    let cfg = c.config()?;
    create_dir(&c.output_dir)?;
    let mut s = String::new();
    let jobs = if paper {
        let base = cfg.sweep()?;
        standard_sweeps(cfg.n_trials, cfg.seed)
            .into_iter()
            .map(|(name, sc)| {
                let sc = crate::experiments::SweepConfig {
                    mechanism: base.mechanism,
                    fusion_mode: base.fusion_mode,
                    sensing_mode: base.sensing_mode,
                    ..sc
                };
                (name, sc)
            })
            .collect()
    } else {
        let sc = cfg.sweep()?;
        vec![(c.stem(&format!("sweep_{}", sc.param)), sc)]
    };
    for (name, sc) in jobs {
        let r = run_sweep(&sc)?;
        r.save(&c.output_dir, &name)?;
        summarize_sweep(&name, &r, &mut s);
    }
    Ok(Outcome {
        summary: s,
        violations: false,
    })
}

fn verify(c: &Common) -> Result<Outcome> {
    let cfg = c.config()?;
    let trials = cfg.verify_trials;
    let sizes = match &cfg.models {
        Some(m) => vec![m.len()],
        None => cfg.verify_sizes.clone(),
    };
    let mechanism = cfg.mechanism()?;
    let fusion = cfg.fusion_mode()?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut s = String::new();
    let mut any = false;
    let g = crate::experiments::fmt_g;
    let _ = writeln!(s, "verify {mechanism} ({fusion} fusion), {trials} trials");
    for n in sizes {
        let models = cfg.models_for(n)?;
        let m = Moderator::new(cfg.sensing()?, cfg.costs()?, mechanism, fusion, n)?;

        let ic = check_ic(&m, &models, cfg.grid_t, cfg.grid_v, trials, cfg.seed)?;
        let ic_bad = ic.iter().filter(|r| r.violated).count();
        for r in &ic {
            rows.push(vec![
                "ic".into(),
                n.to_string(),
                r.cr_index.to_string(),
                g(r.true_value),
                g(r.utility_best_misreport - r.utility_truth),
                g(r.standard_error),
                r.violated.to_string(),
            ]);
        }
        let ir = check_ir(&m, &models, cfg.grid_t, trials, cfg.seed)?;
        let ir_bad = ir.iter().filter(|r| r.violated).count();
        for r in &ir {
            rows.push(vec![
                "ir".into(),
                n.to_string(),
                r.cr_index.to_string(),
                g(r.min_at),
                g(r.min_utility),
                g(r.min_se),
                r.violated.to_string(),
            ]);
        }
        let _ = writeln!(s, "N = {n}: IC violations {ic_bad}/{}, IR violations {ir_bad}/{}", ic.len(), ir.len());
        any |= ic_bad + ir_bad > 0;

        if n == 2 {
            match tiny_instance_check(&m, &models, trials, cfg.seed) {
                Ok(tiny) => {
                    let bad = !tiny.exact_violations.is_empty() || !tiny.exact_ir || !tiny.verdicts_agree();
                    rows.push(vec![
                        "exact-2cr".into(),
                        "2".into(),
                        String::new(),
                        String::new(),
                        tiny.exact_violations.len().to_string(),
                        g(tiny.max_z),
                        bad.to_string(),
                    ]);
                    let _ = writeln!(
                        s,
                        "  exact two-CR oracle: {} violations, MC agrees: {}",
                        tiny.exact_violations.len(),
                        tiny.verdicts_agree()
                    );
                    any |= bad;
                }
                // Grid ties exclude both reports under strategy-proof fusion.
                Err(Error::NoSensingInput) => {
                    let _ = writeln!(s, "  exact two-CR oracle: not applicable (tied CRs leave no sensing input)");
                }
                Err(e) => return Err(e),
            }
        }

        if n >= 2 {
            let dev = check_sensing_truthfulness(&m, &models, &policy_grid(), trials, cfg.seed)?;
            // Standard fusion is known to reward reporting "0"; only the
            // strategy-proof rule is expected to pass.
            let counts = fusion == FusionMode::StrategyProof;
            let profitable = dev.iter().filter(|d| d.profitable).count();
            for d in &dev {
                rows.push(vec![
                    "sensing".into(),
                    n.to_string(),
                    String::new(),
                    format!("{}/{}", d.policy.alpha1, d.policy.alpha2),
                    g(d.gain),
                    g(d.se),
                    (counts && d.profitable).to_string(),
                ]);
            }
            let _ = writeln!(
                s,
                "  sensing deviations with positive gain: {profitable}/{}{}",
                dev.len(),
                if counts { "" } else { " (expected under standard fusion)" }
            );
            any |= counts && profitable > 0;
        }
    }
    create_dir(&c.output_dir)?;
    write_csv(
        &c.output_dir.join(format!("{}.csv", c.stem("verify"))),
        &["check", "n", "cr", "point", "estimate", "se", "violated"],
        &rows,
    )?;
    let _ = writeln!(s, "{}", if any { "VIOLATIONS FOUND" } else { "no violations" });
    Ok(Outcome { summary: s, violations: any })
}

fn feasibility(c: &Common) -> Result<Outcome> {
    let cfg = c.config()?;
    let map = feasibility_map(&cfg.feasibility()?)?;
    create_dir(&c.output_dir)?;
    let path = c.output_dir.join(format!("{}.csv", c.stem("feasibility")));
    map.write_csv(std::fs::File::create(&path).map_err(|e| io_err(&path, e))?)?;
    let bad = map.contradictions(3.0);
    let feasible = map.cells.iter().filter(|c| c.feasible).count();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "q0 = {:.6}  q1 = {:.6e}  E[w_max] = {:.6}",
        map.stats.q0, map.stats.q1, map.expected_wmax
    );
    let _ = writeln!(s, "{feasible}/{} cells feasible", map.cells.len());
    for cc in [cfg.ccoll_lo, 0.5 * (cfg.ccoll_lo + cfg.ccoll_hi), cfg.ccoll_hi] {
        let _ = writeln!(s, "  boundary c_p at c_coll = {cc}: {:.6}", map.boundary_cp(cc));
    }
    let _ = writeln!(s, "cells contradicted by simulation: {}", bad.len());
    Ok(Outcome {
        summary: s,
        violations: !bad.is_empty(),
    })
}

fn throughput(c: &Common) -> Result<Outcome> {
    let cfg = c.config()?;
    let tc = cfg.throughput()?;
    let r = throughput_experiment(&tc)?;
    create_dir(&c.output_dir)?;
    let g = crate::experiments::fmt_g;
    write_csv(
        &c.output_dir.join(format!("{}.csv", c.stem("throughput"))),
        &["n_trials", "regular", "eligible", "holds", "same_choice", "mean_gap", "max_gap"],
        &[vec![
            r.n_trials.to_string(),
            r.regular.to_string(),
            r.eligible.to_string(),
            r.holds.to_string(),
            r.same_choice.to_string(),
            g(r.mean_gap),
            g(r.max_gap),
        ]],
    )?;
    let iid = iid_uniform_support(&tc.models).is_some();
    let mut s = String::new();
    let _ = writeln!(s, "{} trials, models {}", r.n_trials, if iid { "iid uniform" } else { "as configured" });
    let _ = writeln!(s, "same CR chosen: {}/{}", r.same_choice, r.n_trials);
    let _ = writeln!(s, "bound holds on {}/{} eligible trials", r.holds, r.eligible);
    let _ = writeln!(s, "throughput gap: mean {:.6e}, max {:.6e}", r.mean_gap, r.max_gap);
    Ok(Outcome {
        summary: s,
        violations: r.holds < r.eligible,
    })
}
