//! Flat TOML configuration shared by every subcommand.
//!
//! Every key is optional; unknown keys are rejected. See the README for the
//! full schema.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::auction::{BidProfile, CostModel, Mechanism, SensingMode};
use crate::error::{invalid, Error, Result};
use crate::experiments::{FeasibilityConfig, SweepConfig, SweepParam, SweepRange, ThroughputConfig};
use crate::sensing::{ChannelPrior, FusionMode, KChoice, ReducedK, SensingSetup, SensorProfile};
use crate::valuation::ValuationModel;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub n_crs: usize,
    pub pi0: f64,
    pub pf: f64,
    pub pd: f64,
    pub c_p: f64,
    pub c_coll: f64,
    /// Fixed fusion threshold; the optimal one when absent.
    pub k: Option<usize>,
    /// "recompute" or "keep".
    pub reduced_k: String,

    /// "uniform", "truncated-exponential" or "empirical".
    pub valuation: String,
    pub a: f64,
    pub z: f64,
    pub rate: f64,
    /// Two-column (t, pdf) file for the empirical family, relative to the
    /// config file.
    pub empirical_csv: Option<PathBuf>,
    /// Per-CR models overriding the shared family, e.g. "uniform:0.5:0.8".
    pub models: Option<Vec<String>>,

    pub mechanism: String,
    pub fusion_mode: String,
    pub sensing_mode: String,
    pub n_trials: usize,
    pub seed: u64,

    /// `run`: revealed valuations and sensing bits.
    pub valuations: Option<Vec<f64>>,
    pub decisions: Option<Vec<bool>>,

    pub sweep_param: String,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_steps: usize,
    pub include_vcg: bool,

    /// `verify`: network sizes, grid resolution and trial count.
    pub verify_sizes: Vec<usize>,
    pub grid_t: usize,
    pub grid_v: usize,
    pub verify_trials: usize,

    pub cp_lo: f64,
    pub cp_hi: f64,
    pub cp_steps: usize,
    pub ccoll_lo: f64,
    pub ccoll_hi: f64,
    pub ccoll_steps: usize,

    /// `throughput`: common scale c in t = c x.
    pub scale: f64,

    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n_crs: 10,
            pi0: 0.8,
            pf: 0.1,
            pd: 0.9,
            c_p: 0.02,
            c_coll: 5.0,
            k: None,
            reduced_k: "recompute".into(),
            valuation: "uniform".into(),
            a: 0.0,
            z: 1.0,
            rate: 1.0,
            empirical_csv: None,
            models: None,
            mechanism: "oausa".into(),
            fusion_mode: "standard".into(),
            sensing_mode: "integrated".into(),
            n_trials: 10_000,
            seed: 1,
            valuations: None,
            decisions: None,
            sweep_param: "pf".into(),
            sweep_lo: 0.01,
            sweep_hi: 0.5,
            sweep_steps: 50,
            include_vcg: true,
            verify_sizes: vec![2, 3, 5],
            grid_t: 16,
            grid_v: 16,
            verify_trials: 100_000,
            cp_lo: 0.0,
            cp_hi: 0.1,
            cp_steps: 20,
            ccoll_lo: 0.0,
            ccoll_hi: 10_000.0,
            ccoll_steps: 20,
            scale: 1.0,
            base_dir: PathBuf::new(),
        }
    }
}

/// Overrides applied on top of the file, typically from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mechanism: Option<String>,
    pub no_reserve: bool,
    pub paper_literal_payments: bool,
    pub fusion_mode: Option<String>,
    pub n_trials: Option<usize>,
}

fn parse<T: FromStr<Err = String>>(name: &'static str, s: &str) -> Result<T> {
    s.parse().map_err(|e: String| invalid(name, e))
}

/// Parses `family:param:...`: `uniform:a:z`, `exp:a:z:rate` or `csv:path`.
pub fn parse_model(spec: &str, base_dir: &Path) -> Result<ValuationModel> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid("models", format!("`{s}` is not a number in `{spec}`")))
    };
    match parts.as_slice() {
        ["uniform", a, z] => ValuationModel::uniform(num(a)?, num(z)?),
        ["exp" | "truncated-exponential", a, z, rate] => {
            ValuationModel::truncated_exponential(num(a)?, num(z)?, num(rate)?)
        }
        ["csv" | "empirical", path] => ValuationModel::empirical_from_csv(base_dir.join(path)),
        _ => Err(invalid("models", format!("cannot parse model `{spec}`"))),
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = &o.mechanism {
            self.mechanism = m.clone();
        }
        if let Some(f) = &o.fusion_mode {
            self.fusion_mode = f.clone();
        }
        if let Some(n) = o.n_trials {
            self.n_trials = n;
            self.verify_trials = n;
        }
        if o.paper_literal_payments && self.mechanism.starts_with("oausa") && !self.mechanism.contains("paper-literal") {
            self.mechanism = self.mechanism.replacen("oausa", "oausa-paper-literal", 1);
        }
        if o.no_reserve && !self.mechanism.ends_with("-no-reserve") {
            self.mechanism.push_str("-no-reserve");
        }
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        parse("mechanism", &self.mechanism)
    }

    pub fn fusion_mode(&self) -> Result<FusionMode> {
        parse("fusion_mode", &self.fusion_mode)
    }

    pub fn sensing_mode(&self) -> Result<SensingMode> {
        parse("sensing_mode", &self.sensing_mode)
    }

    fn k_choice(&self) -> KChoice {
        self.k.map_or(KChoice::Optimal, KChoice::Fixed)
    }

    fn reduced_k(&self) -> Result<ReducedK> {
        match self.reduced_k.as_str() {
            "recompute" => Ok(ReducedK::Recompute),
            "keep" => Ok(ReducedK::Keep),
            other => Err(invalid("reduced_k", format!("unknown value `{other}`"))),
        }
    }

    pub fn sensing(&self) -> Result<SensingSetup> {
        let mut s = SensingSetup::new(ChannelPrior::new(self.pi0)?, SensorProfile::new(self.pf, self.pd)?);
        s.k = self.k_choice();
        s.reduced_k = self.reduced_k()?;
        Ok(s)
    }

    pub fn costs(&self) -> Result<CostModel> {
        CostModel::new(self.c_p, self.c_coll)
    }

    /// The shared valuation family.
    pub fn valuation(&self) -> Result<ValuationModel> {
        match self.valuation.as_str() {
            "uniform" => ValuationModel::uniform(self.a, self.z),
            "truncated-exponential" | "exp" => ValuationModel::truncated_exponential(self.a, self.z, self.rate),
            "empirical" => {
                let path = self
                    .empirical_csv
                    .as_ref()
                    .ok_or_else(|| invalid("empirical_csv", "required for the empirical family"))?;
                ValuationModel::empirical_from_csv(self.base_dir.join(path))
            }
            other => Err(invalid("valuation", format!("unknown family `{other}`"))),
        }
    }

    /// One model per CR, `n` of them unless `models` overrides.
    pub fn models_for(&self, n: usize) -> Result<Vec<ValuationModel>> {
        match &self.models {
            Some(specs) => {
                if specs.len() != n {
                    return Err(invalid("models", format!("expected {n} entries, got {}", specs.len())));
                }
                specs.iter().map(|s| parse_model(s, &self.base_dir)).collect()
            }
            None => Ok(vec![self.valuation()?; n]),
        }
    }

    /// Network size: `models` or `valuations` length when given.
    pub fn network_size(&self) -> usize {
        self.models
            .as_ref()
            .map(Vec::len)
            .or(self.valuations.as_ref().map(Vec::len))
            .unwrap_or(self.n_crs)
    }

    pub fn bids(&self) -> Result<BidProfile> {
        let v = self
            .valuations
            .clone()
            .ok_or_else(|| invalid("valuations", "required by `run`"))?;
        let n = v.len();
        let d = self.decisions.clone().unwrap_or_else(|| vec![false; n]);
        BidProfile::new(v, d, self.models_for(n)?)
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        if self.models.is_some() {
            return Err(Error::Unsupported("sweeps use one shared valuation family".into()));
        }
        let sensing = self.sensing()?;
        Ok(SweepConfig {
            n_crs: self.n_crs,
            pi0: self.pi0,
            pf: self.pf,
            pd: self.pd,
            c_p: self.c_p,
            c_coll: self.c_coll,
            param: parse::<SweepParam>("sweep_param", &self.sweep_param)?,
            range: SweepRange::new(self.sweep_lo, self.sweep_hi, self.sweep_steps),
            n_trials: self.n_trials,
            seed: self.seed,
            mechanism: self.mechanism()?,
            include_vcg: self.include_vcg,
            fusion_mode: self.fusion_mode()?,
            sensing_mode: self.sensing_mode()?,
            k: sensing.k,
            reduced_k: sensing.reduced_k,
            valuation: self.valuation()?,
        })
    }

    pub fn feasibility(&self) -> Result<FeasibilityConfig> {
        Ok(FeasibilityConfig {
            n_crs: self.n_crs,
            pi0: self.pi0,
            pf: self.pf,
            pd: self.pd,
            c_p: SweepRange::new(self.cp_lo, self.cp_hi, self.cp_steps),
            c_coll: SweepRange::new(self.ccoll_lo, self.ccoll_hi, self.ccoll_steps),
            n_trials: self.n_trials,
            seed: self.seed,
            mechanism: self.mechanism()?,
            fusion_mode: self.fusion_mode()?,
            sensing_mode: self.sensing_mode()?,
            valuation: self.valuation()?,
        })
    }

    pub fn throughput(&self) -> Result<ThroughputConfig> {
        Ok(ThroughputConfig {
            models: self.models_for(self.network_size())?,
            scale: self.scale,
            pi0: self.pi0,
            pf: self.pf,
            pd: self.pd,
            costs: self.costs()?,
            n_trials: self.n_trials,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{OausaRules, PaymentRule};

    #[test]
    fn defaults_parse_from_empty_file() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let s = c.sweep().unwrap();
        assert_eq!(s.n_crs, 10);
        assert_eq!(s.param, SweepParam::Pf);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("n_cr = 3").is_err());
        assert!(Config::from_toml("pf = \"high\"").is_err());
    }

    #[test]
    fn overrides_compose_mechanism_names() {
        let mut c = Config::default();
        c.apply(&Overrides {
            no_reserve: true,
            paper_literal_payments: true,
            seed: Some(7),
            ..Overrides::default()
        });
        assert_eq!(c.mechanism, "oausa-paper-literal-no-reserve");
        assert_eq!(
            c.mechanism().unwrap(),
            Mechanism::Oausa(OausaRules {
                reserve: false,
                payments: PaymentRule::PaperLiteral
            })
        );
        assert_eq!(c.seed, 7);
        let mut v = Config {
            mechanism: "vcg".into(),
            ..Config::default()
        };
        v.apply(&Overrides {
            no_reserve: true,
            ..Overrides::default()
        });
        assert!(v.mechanism().is_err());
    }

    #[test]
    fn per_cr_models() {
        let c = Config::from_toml("models = [\"uniform:0:1\", \"uniform:0.5:0.8\", \"exp:0:1:2\"]").unwrap();
        let m = c.models_for(c.network_size()).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[1], ValuationModel::uniform(0.5, 0.8).unwrap());
        assert!(parse_model("gauss:0:1", Path::new(".")).is_err());
        assert!(c.sweep().is_err());
    }

    #[test]
    fn run_section() {
        let c = Config::from_toml("valuations = [0.9, 0.4]\ndecisions = [true, true]").unwrap();
        let b = c.bids().unwrap();
        assert_eq!(b.len(), 2);
        assert!(Config::default().bids().is_err());
    }
}
