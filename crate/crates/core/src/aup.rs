//! Accuracy Under Parallelism (AUP).
//!
//! AUP summarizes an accuracy–parallelism curve as a weighted area. The
//! lowest-parallelism point contributes the plain rectangle `rho_1 * y_1`;
//! every following segment contributes a trapezoid whose heights are
//! down-weighted by `W(y) = min(exp(-alpha * (1 - y / y_max)), 1)`, so that
//! parallelism bought with accuracy loss earns little area.
//!
//! Points whose accuracy falls more than `margin` percentage points below the
//! lowest-parallelism point are dropped before integration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AupError {
    #[error("curve has no points")]
    EmptyCurve,
    #[error("invalid point (rho={rho}, acc={acc}): {reason}")]
    InvalidPoint { rho: f64, acc: f64, reason: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("curve parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// One `(parallelism, accuracy)` observation. Parallelism is tokens per
/// forward; accuracy is a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rho: f64,
    pub acc: f64,
}

impl CurvePoint {
    pub fn new(rho: f64, acc: f64) -> Result<Self, AupError> {
        let p = CurvePoint { rho, acc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AupError> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(AupError::InvalidPoint {
                rho: self.rho,
                acc: self.acc,
                reason: "rho must be finite and > 0",
            });
        }
        if !(0.0..=100.0).contains(&self.acc) {
            return Err(AupError::InvalidPoint {
                rho: self.rho,
                acc: self.acc,
                reason: "acc must lie in [0, 100]",
            });
        }
        Ok(())
    }
}

impl fmt::Display for CurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.rho, self.acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AupConfig {
    /// Penalty factor on accuracy loss.
    pub alpha: f64,
    /// Task-level best accuracy. When absent the curve's own maximum over
    /// included points is used.
    pub y_max_override: Option<f64>,
    /// Points more than `margin` points below the first point are dropped.
    pub margin: f64,
}

impl Default for AupConfig {
    fn default() -> Self {
        AupConfig {
            alpha: 3.0,
            y_max_override: None,
            margin: 5.0,
        }
    }
}

impl AupConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AupConfig {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AupError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(AupError::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(AupError::InvalidParameter(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        if let Some(y) = self.y_max_override {
            if !(y > 0.0 && y <= 100.0) {
                return Err(AupError::InvalidParameter(format!(
                    "y_max override must lie in (0, 100], got {y}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AupResult {
    pub score: f64,
    pub alpha: f64,
    /// Points that entered the integral, sorted by `rho`.
    pub included: Vec<CurvePoint>,
    pub excluded: Vec<CurvePoint>,
    pub y_max_used: f64,
    pub warnings: Vec<String>,
}

impl AupResult {
    /// The JSON document emitted by `aup compute`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "score": self.score,
            "alpha": self.alpha,
            "y_max_used": self.y_max_used,
            "points_included": self.included,
            "points_excluded": self.excluded,
            "warnings": self.warnings,
        })
    }
}

/// `min(exp(-alpha * (1 - y / y_max)), 1)`.
pub fn weight(y: f64, alpha: f64, y_max: f64) -> Result<f64, AupError> {
    if !(y_max > 0.0) {
        return Err(AupError::InvalidParameter(format!(
            "y_max must be > 0, got {y_max}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(AupError::InvalidParameter(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    Ok((-alpha * (1.0 - y / y_max)).exp().min(1.0))
}

/// Splits a rho-sorted curve into points kept and points dropped by the
/// minimum-accuracy rule. The first point is always kept.
pub fn filter_curve(
    points: &[CurvePoint],
    margin: f64,
) -> Result<(Vec<CurvePoint>, Vec<CurvePoint>), AupError> {
    let first = points.first().ok_or(AupError::EmptyCurve)?;
    let y_min = first.acc - margin;
    let (included, excluded): (Vec<_>, Vec<_>) = points
        .iter()
        .enumerate()
        .partition(|(i, p)| *i == 0 || p.acc >= y_min);
    Ok((
        included.into_iter().map(|(_, p)| *p).collect(),
        excluded.into_iter().map(|(_, p)| *p).collect(),
    ))
}

/// Sorts by rho and collapses repeated rho values onto the more accurate
/// point. Returns the cleaned curve and one warning per collapsed point.
fn normalize(points: &[CurvePoint]) -> (Vec<CurvePoint>, Vec<String>) {
    let mut sorted = points.to_vec();
    // Higher accuracy first within equal rho, so dedup keeps it.
    sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(b.acc.total_cmp(&a.acc)));
    let mut warnings = Vec::new();
    let mut out: Vec<CurvePoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        match out.last() {
            Some(last) if last.rho == p.rho => warnings.push(format!(
                "duplicate rho {}: kept acc {}, dropped acc {}",
                p.rho, last.acc, p.acc
            )),
            _ => out.push(p),
        }
    }
    (out, warnings)
}

pub fn compute_aup(points: &[CurvePoint], config: &AupConfig) -> Result<AupResult, AupError> {
    if points.is_empty() {
        return Err(AupError::EmptyCurve);
    }
    config.validate()?;
    for p in points {
        p.validate()?;
    }

    let (curve, warnings) = normalize(points);
    let (included, mut excluded) = filter_curve(&curve, config.margin)?;
    // Collapsed duplicates count as excluded so that included + excluded
    // accounts for every input point.
    if curve.len() < points.len() {
        let mut dropped = points.to_vec();
        for kept in &curve {
            if let Some(i) = dropped.iter().position(|p| p == kept) {
                dropped.swap_remove(i);
            }
        }
        excluded.extend(dropped);
        excluded.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(a.acc.total_cmp(&b.acc)));
    }

    let y_max = config
        .y_max_override
        .unwrap_or_else(|| included.iter().map(|p| p.acc).fold(f64::MIN, f64::max));

    let score = if included.len() == 1 {
        included[0].rho * included[0].acc
    } else {
        if !(y_max > 0.0) {
            // Every included point sits at 0% accuracy: no area is possible
            // past the leading rectangle, which is itself zero.
            0.0
        } else {
            let weighted = included
                .iter()
                .map(|p| Ok(p.acc * weight(p.acc, config.alpha, y_max)?))
                .collect::<Result<Vec<f64>, AupError>>()?;
            let head = included[0].rho * included[0].acc;
            head + included
                .windows(2)
                .zip(weighted.windows(2))
                .map(|(pts, w)| (pts[1].rho - pts[0].rho) * (w[1] + w[0]) / 2.0)
                .sum::<f64>()
        }
    };

    Ok(AupResult {
        score,
        alpha: config.alpha,
        included,
        excluded,
        y_max_used: y_max,
        warnings,
    })
}

/// Scores the same curve under several penalty factors.
pub fn alpha_sweep(
    points: &[CurvePoint],
    alphas: &[f64],
    config: &AupConfig,
) -> Result<Vec<(f64, f64)>, AupError> {
    if alphas.is_empty() {
        return Err(AupError::InvalidParameter("no alpha values given".into()));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let cfg = AupConfig { alpha, ..*config };
            compute_aup(points, &cfg).map(|r| (alpha, r.score))
        })
        .collect()
}

/// Reads a `rho,acc` CSV. Rows come back in file order.
pub fn parse_curve(text: &str) -> Result<Vec<CurvePoint>, AupError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(AupError::Parse {
                line: 1,
                message: e.to_string(),
            })
        }
        None => {
            return Err(AupError::Parse {
                line: 1,
                message: "missing header `rho,acc`".into(),
            })
        }
    };
    if header.len() != 2 || &header[0] != "rho" || &header[1] != "acc" {
        return Err(AupError::Parse {
            line: 1,
            message: "missing header `rho,acc`".into(),
        });
    }

    let mut points = Vec::new();
    for record in records {
        let record = record.map_err(|e| AupError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(AupError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let field = |i: usize| -> Result<f64, AupError> {
            record[i].parse::<f64>().map_err(|_| AupError::Parse {
                line,
                message: format!("non-numeric field `{}`", &record[i]),
            })
        };
        let (rho, acc) = (field(0)?, field(1)?);
        let p = CurvePoint::new(rho, acc).map_err(|e| AupError::Parse {
            line,
            message: e.to_string(),
        })?;
        points.push(p);
    }
    Ok(points)
}

/// Inverse of [`parse_curve`].
pub fn format_curve(points: &[CurvePoint]) -> String {
    let mut out = String::from("rho,acc\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.rho, p.acc));
    }
    out
}
