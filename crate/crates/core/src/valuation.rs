//! Private-value distributions over a support `[a, z]`, Myerson virtual
//! valuations and the throughput valuation hook.

use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Default grid used by [`ValuationModel::regularity_check`].
pub const REGULARITY_GRID: usize = 1024;

/// Distribution of a CR's private valuation.
#[derive(Debug, Clone, PartialEq)]
pub enum ValuationModel {
    Uniform {
        a: f64,
        z: f64,
    },
    /// Density proportional to `exp(-rate (t - a))` on `[a, z]`.
    TruncatedExponential {
        a: f64,
        z: f64,
        rate: f64,
    },
    /// Piecewise-linear density through tabulated nodes.
    Empirical(EmpiricalGrid),
}

/// Tabulated density, normalised to unit mass on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGrid {
    t: Vec<f64>,
    density: Vec<f64>,
    /// Mass to the left of each node.
    cum: Vec<f64>,
}

/// Result of [`ValuationModel::inverse_virtual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseVirtual {
    pub t: f64,
    /// The target lay outside `[w(a), w(z)]` and `t` is the nearer endpoint.
    pub clamped: bool,
}

impl EmpiricalGrid {
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::EmpiricalModel("need at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::EmpiricalModel(format!(
                    "node positions must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(t, p)) = nodes.iter().find(|(t, p)| !t.is_finite() || !p.is_finite() || *p < 0.0) {
            return Err(Error::EmpiricalModel(format!("bad node ({t}, {p})")));
        }
        let (t, density): (Vec<f64>, Vec<f64>) = nodes.into_iter().unzip();
        let mut cum = vec![0.0; t.len()];
        for j in 1..t.len() {
            cum[j] = cum[j - 1] + 0.5 * (density[j - 1] + density[j]) * (t[j] - t[j - 1]);
        }
        let mass = cum[cum.len() - 1];
        if mass <= 0.0 {
            return Err(Error::EmpiricalModel("density has zero mass".into()));
        }
        Ok(Self {
            t,
            density: density.iter().map(|p| p / mass).collect(),
            cum: cum.iter().map(|c| c / mass).collect(),
        })
    }

    /// Reads `t,pdf` rows; a non-numeric first row is treated as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::EmpiricalModel(format!("{}: {e}", path.display())))?;
        let mut nodes = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::EmpiricalModel(e.to_string()))?;
            if record.len() != 2 {
                return Err(Error::EmpiricalModel(format!(
                    "row {}: expected 2 columns, got {}",
                    line + 1,
                    record.len()
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(t), Ok(p)) => nodes.push((t, p)),
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::EmpiricalModel(format!(
                        "row {}: not numeric",
                        line + 1
                    )))
                }
            }
        }
        Self::new(nodes)
    }

    fn segment(&self, t: f64) -> usize {
        let j = self.t.partition_point(|&x| x <= t);
        j.clamp(1, self.t.len() - 1) - 1
    }

    fn pdf(&self, t: f64) -> f64 {
        let j = self.segment(t);
        let h = self.t[j + 1] - self.t[j];
        let s = (t - self.t[j]) / h;
        self.density[j] + s * (self.density[j + 1] - self.density[j])
    }

    fn cdf(&self, t: f64) -> f64 {
        let j = self.segment(t);
        let h = self.t[j + 1] - self.t[j];
        let d = t - self.t[j];
        let slope = (self.density[j + 1] - self.density[j]) / h;
        (self.cum[j] + self.density[j] * d + 0.5 * slope * d * d).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        let j = self.cum.partition_point(|&c| c <= u).clamp(1, self.t.len() - 1) - 1;
        let h = self.t[j + 1] - self.t[j];
        let p0 = self.density[j];
        let half_slope = 0.5 * (self.density[j + 1] - p0) / h;
        let r = (u - self.cum[j]).max(0.0);
        // Root of half_slope d^2 + p0 d - r = 0 in cancellation-free form.
        let disc = (p0 * p0 + 4.0 * half_slope * r).max(0.0);
        let denom = p0 + disc.sqrt();
        let d = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.t[j] + d.clamp(0.0, h)
    }
}

impl ValuationModel {
    pub fn uniform(a: f64, z: f64) -> Result<Self> {
        check_support(a, z)?;
        Ok(Self::Uniform { a, z })
    }

    pub fn truncated_exponential(a: f64, z: f64, rate: f64) -> Result<Self> {
        check_support(a, z)?;
        if !rate.is_finite() || rate == 0.0 {
            return Err(invalid("rate", format!("{rate} must be finite and non-zero")));
        }
        Ok(Self::TruncatedExponential { a, z, rate })
    }

    pub fn empirical(nodes: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self::Empirical(EmpiricalGrid::new(nodes)?))
    }

    pub fn empirical_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::Empirical(EmpiricalGrid::from_csv(path)?))
    }

    /// `(a, z)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Uniform { a, z } | Self::TruncatedExponential { a, z, .. } => (*a, *z),
            Self::Empirical(g) => (g.t[0], g.t[g.t.len() - 1]),
        }
    }

    pub fn lower(&self) -> f64 {
        self.support().0
    }

    pub fn upper(&self) -> f64 {
        self.support().1
    }

    fn check(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        let slack = 1e-12 * (hi - lo).max(1.0);
        if t.is_nan() || t < lo - slack || t > hi + slack {
            return Err(Error::OutsideSupport { value: t, lo, hi });
        }
        Ok(t.clamp(lo, hi))
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        let t = self.check(t)?;
        Ok(match self {
            Self::Uniform { a, z } => 1.0 / (z - a),
            Self::TruncatedExponential { a, z, rate } => {
                rate * (-rate * (t - a)).exp() / -(-rate * (z - a)).exp_m1()
            }
            Self::Empirical(g) => g.pdf(t),
        })
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        let t = self.check(t)?;
        Ok(match self {
            Self::Uniform { a, z } => (t - a) / (z - a),
            Self::TruncatedExponential { a, z, rate } => {
                ((-rate * (t - a)).exp_m1() / (-rate * (z - a)).exp_m1()).clamp(0.0, 1.0)
            }
            Self::Empirical(g) => g.cdf(t),
        })
    }

    /// `w(t) = t - (1 - F(t)) / p(t)`.
    pub fn virtual_valuation(&self, t: f64) -> Result<f64> {
        let t = self.check(t)?;
        Ok(match self {
            Self::Uniform { z, .. } => 2.0 * t - z,
            Self::TruncatedExponential { z, rate, .. } => t + (-rate * (z - t)).exp_m1() / rate,
            Self::Empirical(g) => {
                let p = g.pdf(t);
                let tail = 1.0 - g.cdf(t);
                if tail <= 0.0 {
                    t
                } else if p <= 0.0 {
                    return Err(Error::VirtualValuationUndefined(t));
                } else {
                    t - tail / p
                }
            }
        })
    }

    /// Like [`virtual_valuation`](Self::virtual_valuation) but maps a
    /// zero-density point to `-inf`, its limit from a positive density.
    fn w_extended(&self, t: f64) -> f64 {
        self.virtual_valuation(t).unwrap_or(f64::NEG_INFINITY)
    }

    /// Valuation whose virtual valuation equals `w_target`.
    ///
    /// Closed form for the uniform family, bisection otherwise. Meaningful
    /// only for regular models.
    pub fn inverse_virtual(&self, w_target: f64) -> InverseVirtual {
        let (a, z) = self.support();
        if w_target >= z {
            return InverseVirtual {
                t: z,
                clamped: w_target > z,
            };
        }
        if let Self::Uniform { .. } = self {
            let t = 0.5 * (w_target + z);
            return if t < a {
                InverseVirtual { t: a, clamped: true }
            } else {
                InverseVirtual { t, clamped: false }
            };
        }
        if self.w_extended(a) >= w_target {
            return InverseVirtual {
                t: a,
                clamped: self.w_extended(a) > w_target,
            };
        }
        let (mut lo, mut hi) = (a, z);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let w = self.w_extended(mid);
            if (w - w_target).abs() <= 1e-12 {
                return InverseVirtual { t: mid, clamped: false };
            }
            if w < w_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        InverseVirtual {
            t: 0.5 * (lo + hi),
            clamped: false,
        }
    }

    /// True iff `w` is strictly increasing over `grid_size` evenly spaced
    /// points on `[a, z]` (at least 16).
    pub fn regularity_check(&self, grid_size: usize) -> bool {
        let n = grid_size.max(16);
        let (a, z) = self.support();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..n {
            let t = if i + 1 == n {
                z
            } else {
                a + (z - a) * i as f64 / (n - 1) as f64
            };
            let w = self.w_extended(t);
            if i > 0 && !(w > prev) {
                return false;
            }
            prev = w;
        }
        true
    }

    pub fn is_regular(&self) -> bool {
        self.regularity_check(REGULARITY_GRID)
    }

    /// Inverse cdf at `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::Uniform { a, z } => a + u * (z - a),
            Self::TruncatedExponential { a, z, rate } => {
                (a - (u * (-rate * (z - a)).exp_m1()).ln_1p() / rate).clamp(*a, *z)
            }
            Self::Empirical(g) => g.quantile(u),
        }
    }

    /// Inverse-cdf draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

fn check_support(a: f64, z: f64) -> Result<()> {
    if !a.is_finite() || !z.is_finite() || a >= z {
        return Err(invalid("support", format!("[{a}, {z}] is not a proper interval")));
    }
    Ok(())
}

/// Inputs of the throughput valuation `t = c ln(1 + snr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputParams {
    pub c: f64,
    pub snr: f64,
}

impl ThroughputParams {
    pub fn new(c: f64, snr: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid("c", format!("{c} must be positive")));
        }
        if !(snr >= 0.0) {
            return Err(invalid("snr", format!("{snr} must be non-negative")));
        }
        Ok(Self { c, snr })
    }
}

/// `c ln(1 + snr)`.
pub fn throughput_valuation(params: ThroughputParams) -> f64 {
    params.c * params.snr.ln_1p()
}
