//! Detection metrics: DET operating points, EER, tandem detection cost
//! function (t-DCF) and Pearson correlation.
//!
//! Scores follow the convention "higher means more bona fide". At a
//! threshold θ a spoof trial is a false acceptance when its score is
//! strictly above θ, and a bona fide trial is a false rejection when its
//! score is strictly below θ.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no {0} trials")]
    EmptyClass(&'static str),
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("t-DCF costs are degenerate: C1={c1}, C2={c2}")]
    DegenerateCosts { c1: f64, c2: f64 },
    #[error("ill-posed t-DCF operating point: C1={0} is negative")]
    NegativeC1(f64),
    #[error("invalid t-DCF parameters: {0}")]
    InvalidParams(String),
    #[error("correlation needs equal lengths >= 2 (got {0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
}

/// Labeled detection scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub bonafide: Vec<f64>,
    pub spoof: Vec<f64>,
}

impl ScoreSet {
    pub fn new(bonafide: Vec<f64>, spoof: Vec<f64>) -> Self {
        Self { bonafide, spoof }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.bonafide.is_empty() {
            return Err(MetricsError::EmptyClass("bona fide"));
        }
        if self.spoof.is_empty() {
            return Err(MetricsError::EmptyClass("spoof"));
        }
        if let Some(&bad) = self
            .bonafide
            .iter()
            .chain(&self.spoof)
            .find(|s| !s.is_finite())
        {
            return Err(MetricsError::NonFinite(bad));
        }
        Ok(())
    }

    /// Applies `f` to every score (used for rank-invariance checks).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            bonafide: self.bonafide.iter().map(|&s| f(s)).collect(),
            spoof: self.spoof.iter().map(|&s| f(s)).collect(),
        }
    }
}

/// FAR/FRR operating points. Thresholds are the two infinite sentinels
/// plus the midpoint of every gap between consecutive distinct scores, so
/// the curve visits every distinct decision the scores allow. Tied scores
/// are never split.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
}

impl DetCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

pub fn det_curve(s: &ScoreSet) -> Result<DetCurve, MetricsError> {
    s.validate()?;
    // (score, is_bonafide) in ascending score order.
    let mut trials: Vec<(f64, bool)> = s
        .bonafide
        .iter()
        .map(|&x| (x, true))
        .chain(s.spoof.iter().map(|&x| (x, false)))
        .collect();
    trials.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (nb, ns) = (s.bonafide.len(), s.spoof.len());
    let mut thresholds = vec![f64::NEG_INFINITY];
    let mut far = vec![1.0];
    let mut frr = vec![0.0];
    // Counts of each class at or below the current gap.
    let (mut bona_below, mut spoof_below) = (0usize, 0usize);
    let mut i = 0;
    while i < trials.len() {
        let value = trials[i].0;
        while i < trials.len() && trials[i].0 == value {
            if trials[i].1 {
                bona_below += 1;
            } else {
                spoof_below += 1;
            }
            i += 1;
        }
        if i == trials.len() {
            break;
        }
        let next = trials[i].0;
        thresholds.push(value + (next - value) / 2.0);
        // Strictly above the gap: spoofs accepted. Strictly below: bona fide rejected.
        far.push((ns - spoof_below) as f64 / ns as f64);
        frr.push(bona_below as f64 / nb as f64);
    }
    thresholds.push(f64::INFINITY);
    far.push(0.0);
    frr.push(1.0);
    Ok(DetCurve {
        thresholds,
        far,
        frr,
    })
}

/// Equal error rate and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Crossing of FAR and FRR on a DET curve, linearly interpolated between
/// the two straddling operating points when no point has FAR == FRR.
pub fn eer_from_curve(curve: &DetCurve) -> Eer {
    for i in 0..curve.len() {
        let d = curve.far[i] - curve.frr[i];
        if d == 0.0 {
            return Eer {
                eer: curve.far[i],
                threshold: curve.thresholds[i],
            };
        }
        if d < 0.0 {
            // The first point (θ = -inf) always has FAR - FRR = 1 > 0.
            let (a0, a1) = (curve.far[i - 1], curve.far[i]);
            let d0 = a0 - curve.frr[i - 1];
            let t = d0 / (d0 - d);
            let (t0, t1) = (curve.thresholds[i - 1], curve.thresholds[i]);
            let threshold = if t0.is_finite() && t1.is_finite() {
                t0 + t * (t1 - t0)
            } else if t0.is_finite() {
                t0
            } else {
                t1
            };
            return Eer {
                eer: a0 + t * (a1 - a0),
                threshold,
            };
        }
    }
    unreachable!("FAR - FRR reaches -1 at the +inf sentinel")
}

pub fn compute_eer(s: &ScoreSet) -> Result<Eer, MetricsError> {
    Ok(eer_from_curve(&det_curve(s)?))
}

/// Default operating-point parameters of the ASVspoof 2019 evaluation plan.
/// These are configuration defaults, not measured quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfParams {
    pub prior_target: f64,
    pub prior_nontarget: f64,
    pub prior_spoof: f64,
    pub cost_miss_asv: f64,
    pub cost_fa_asv: f64,
    pub cost_miss_cm: f64,
    pub cost_fa_cm: f64,
    pub pmiss_asv: f64,
    pub pfa_asv: f64,
    pub pmiss_spoof_asv: f64,
}

impl Default for TdcfParams {
    fn default() -> Self {
        Self {
            prior_target: 0.9405,
            prior_nontarget: 0.0095,
            prior_spoof: 0.05,
            cost_miss_asv: 1.0,
            cost_fa_asv: 10.0,
            cost_miss_cm: 1.0,
            cost_fa_cm: 10.0,
            pmiss_asv: 0.0,
            pfa_asv: 0.0,
            pmiss_spoof_asv: 0.0,
        }
    }
}

/// The two weights of t-DCF(θ) = C1 Pmiss_cm(θ) + C2 Pfa_cm(θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfCosts {
    pub c1: f64,
    pub c2: f64,
}

impl TdcfCosts {
    pub fn new(c1: f64, c2: f64) -> Self {
        Self { c1, c2 }
    }
}

pub fn tdcf_constants(p: &TdcfParams) -> Result<TdcfCosts, MetricsError> {
    let priors = p.prior_target + p.prior_nontarget + p.prior_spoof;
    if (priors - 1.0).abs() > 1e-9 {
        return Err(MetricsError::InvalidParams(format!(
            "priors sum to {priors}, not 1"
        )));
    }
    let probs = [p.pmiss_asv, p.pfa_asv, p.pmiss_spoof_asv];
    if probs.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(MetricsError::InvalidParams(
            "ASV error rates must lie in [0, 1]".into(),
        ));
    }
    let c1 = p.prior_target * (p.cost_miss_cm - p.cost_miss_asv * p.pmiss_asv)
        - p.prior_nontarget * p.cost_fa_asv * p.pfa_asv;
    let c2 = p.cost_fa_cm * p.prior_spoof * (1.0 - p.pmiss_spoof_asv);
    if c1 < 0.0 {
        return Err(MetricsError::NegativeC1(c1));
    }
    Ok(TdcfCosts { c1, c2 })
}

fn check_costs(c: &TdcfCosts) -> Result<(), MetricsError> {
    let ok = |v: f64| v.is_finite() && v >= 0.0;
    if !ok(c.c1) || !ok(c.c2) || (c.c1 == 0.0 && c.c2 == 0.0) {
        return Err(MetricsError::DegenerateCosts { c1: c.c1, c2: c.c2 });
    }
    Ok(())
}

/// t-DCF at every DET threshold, with Pmiss = FRR and Pfa = FAR.
pub fn tdcf_curve(s: &ScoreSet, c: &TdcfCosts) -> Result<(DetCurve, Vec<f64>), MetricsError> {
    check_costs(c)?;
    let curve = det_curve(s)?;
    let values = curve
        .frr
        .iter()
        .zip(&curve.far)
        .map(|(&miss, &fa)| c.c1 * miss + c.c2 * fa)
        .collect();
    Ok((curve, values))
}

/// Minimum of t-DCF(θ) / min(C1, C2) over thresholds. The accept-all or
/// reject-all system scores exactly 1.
pub fn min_tdcf_normalized(s: &ScoreSet, c: &TdcfCosts) -> Result<f64, MetricsError> {
    if !(c.c1 > 0.0 && c.c2 > 0.0) {
        return Err(MetricsError::DegenerateCosts { c1: c.c1, c2: c.c2 });
    }
    let (_, values) = tdcf_curve(s, c)?;
    let norm = c.c1.min(c.c2);
    Ok(values
        .iter()
        .map(|v| v / norm)
        .fold(f64::INFINITY, f64::min))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Summary of a scored trial set.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub eer: Eer,
    pub min_tdcf: f64,
    pub costs: TdcfCosts,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

pub fn evaluate(s: &ScoreSet, costs: &TdcfCosts) -> Result<Report, MetricsError> {
    Ok(Report {
        eer: compute_eer(s)?,
        min_tdcf: min_tdcf_normalized(s, costs)?,
        costs: *costs,
        n_bonafide: s.bonafide.len(),
        n_spoof: s.spoof.len(),
    })
}

impl Report {
    /// `key=value` lines in a fixed order; EER in percent.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "eer={:.4}", self.eer.eer * 100.0).unwrap();
        writeln!(out, "min_tdcf={:.6}", self.min_tdcf).unwrap();
        writeln!(out, "threshold={:.6}", self.eer.threshold).unwrap();
        writeln!(out, "c1={:.6}", self.costs.c1).unwrap();
        writeln!(out, "c2={:.6}", self.costs.c2).unwrap();
        writeln!(out, "n_bonafide={}", self.n_bonafide).unwrap();
        writeln!(out, "n_spoof={}", self.n_spoof).unwrap();
        out
    }

    pub fn to_text(&self) -> String {
        format!(
            "trials: {} bona fide, {} spoof\nEER: {:.4}% (threshold {:.6})\nmin normalized t-DCF: {:.6} (C1={:.6}, C2={:.6})\n",
            self.n_bonafide,
            self.n_spoof,
            self.eer.eer * 100.0,
            self.eer.threshold,
            self.min_tdcf,
            self.costs.c1,
            self.costs.c2
        )
    }
}
