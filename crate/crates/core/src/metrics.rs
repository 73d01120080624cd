//! Validation scores: R², relative bias and occurrence scores (POD, FAR, CSI)
//! from a 2×2 contingency table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(est: &[f64], obs: &[f64]) -> Result<()> {
    if est.len() != obs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimates vs {} observations",
            est.len(),
            obs.len()
        )));
    }
    if est.iter().chain(obs).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in metric input".into()));
    }
    Ok(())
}

/// Squared Pearson correlation, written as the mean of standardized products
/// with `n − 1` in both the mean and the standard deviations.
pub fn r2(est: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(est, obs)?;
    let n = est.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (me, mo) = (mean(est), mean(obs));
    let (mut see, mut soo, mut seo) = (0.0, 0.0, 0.0);
    for (&e, &o) in est.iter().zip(obs) {
        let (de, d_o) = (e - me, o - mo);
        see += de * de;
        soo += d_o * d_o;
        seo += de * d_o;
    }
    if see == 0.0 || soo == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "R2",
            cause: "zero variance",
        });
    }
    let denom = (n - 1) as f64;
    let (se, so) = ((see / denom).sqrt(), (soo / denom).sqrt());
    let r = seo / denom / (se * so);
    Ok((r * r).min(1.0))
}

/// `100 · Σ(est − obs) / Σ obs`, in percent.
pub fn rbias(est: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(est, obs)?;
    let total: f64 = obs.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "RBIAS",
            cause: "observations sum to zero",
        });
    }
    let diff: f64 = est.iter().zip(obs).map(|(e, o)| e - o).sum();
    Ok(100.0 * diff / total)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_negatives: u64,
}

impl ContingencyCounts {
    pub fn new(hits: u64, misses: u64, false_alarms: u64, correct_negatives: u64) -> Self {
        Self {
            hits,
            misses,
            false_alarms,
            correct_negatives,
        }
    }

    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_negatives
    }

    pub fn pod(&self) -> Result<f64> {
        ratio(self.hits, self.hits + self.misses, "POD", "no observed events")
    }

    pub fn far(&self) -> Result<f64> {
        ratio(self.false_alarms, self.hits + self.false_alarms, "FAR", "no estimated events")
    }

    pub fn csi(&self) -> Result<f64> {
        ratio(
            self.hits,
            self.hits + self.misses + self.false_alarms,
            "CSI",
            "no observed or estimated events",
        )
    }
}

fn ratio(num: u64, den: u64, metric: &'static str, cause: &'static str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric { metric, cause })
    } else {
        Ok(num as f64 / den as f64)
    }
}

pub fn contingency(est: &[bool], obs: &[bool]) -> Result<ContingencyCounts> {
    if est.len() != obs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimates vs {} observations",
            est.len(),
            obs.len()
        )));
    }
    let mut c = ContingencyCounts::default();
    for (&e, &o) in est.iter().zip(obs) {
        match (e, o) {
            (true, true) => c.hits += 1,
            (false, true) => c.misses += 1,
            (true, false) => c.false_alarms += 1,
            (false, false) => c.correct_negatives += 1,
        }
    }
    Ok(c)
}

pub fn pod(c: &ContingencyCounts) -> Result<f64> {
    c.pod()
}

pub fn far(c: &ContingencyCounts) -> Result<f64> {
    c.far()
}

pub fn csi(c: &ContingencyCounts) -> Result<f64> {
    c.csi()
}

/// All five scores; an undefined score is `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_continuous: usize,
    pub r2: Option<f64>,
    pub rbias_percent: Option<f64>,
    pub n_occurrence: u64,
    pub counts: ContingencyCounts,
    pub pod: Option<f64>,
    pub far: Option<f64>,
    pub csi: Option<f64>,
}

impl ValidationReport {
    /// Scores continuous pairs (`est`, `obs`) and occurrence pairs. Shape
    /// errors propagate; undefined scores become `None`.
    pub fn build(est: &[f64], obs: &[f64], est_occ: &[bool], obs_occ: &[bool]) -> Result<Self> {
        check_pair(est, obs)?;
        let counts = contingency(est_occ, obs_occ)?;
        let opt = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric { .. } | Error::TooFewSamples { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            n_continuous: est.len(),
            r2: opt(r2(est, obs))?,
            rbias_percent: opt(rbias(est, obs))?,
            n_occurrence: counts.total(),
            pod: opt(counts.pod())?,
            far: opt(counts.far())?,
            csi: opt(counts.csi())?,
            counts,
        })
    }
}
