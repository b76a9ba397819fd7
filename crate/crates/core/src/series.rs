use crate::error::{validation, Error, Result};
use crate::qcore::C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    G1Rot,
    G1Lab,
    G2,
    G2xPar,
    G2xPerp,
    Visibility,
    /// Anything else (fit inputs, phase averages).
    Auxiliary,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::G1Rot => "g1_rot",
            SeriesKind::G1Lab => "g1_lab",
            SeriesKind::G2 => "g2",
            SeriesKind::G2xPar => "g2x_par",
            SeriesKind::G2xPerp => "g2x_perp",
            SeriesKind::Visibility => "visibility",
            SeriesKind::Auxiliary => "auxiliary",
        }
    }

    pub fn is_g1(&self) -> bool {
        matches!(self, SeriesKind::G1Rot | SeriesKind::G1Lab)
    }

    pub fn is_g2(&self) -> bool {
        matches!(self, SeriesKind::G2 | SeriesKind::G2xPar | SeriesKind::G2xPerp)
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "g1_rot" => SeriesKind::G1Rot,
            "g1_lab" => SeriesKind::G1Lab,
            "g2" => SeriesKind::G2,
            "g2x_par" => SeriesKind::G2xPar,
            "g2x_perp" => SeriesKind::G2xPerp,
            "visibility" => SeriesKind::Visibility,
            "auxiliary" => SeriesKind::Auxiliary,
            other => return Err(Error::Format(format!("unknown series kind {other:?}"))),
        })
    }
}

/// Complex samples of a correlation function on an increasing delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub delays: Vec<f64>,
    pub values: Vec<C64>,
    pub kind: SeriesKind,
    pub normalized: bool,
    /// Scale divided out when `normalized` is set.
    pub scale: f64,
    /// Free-form metadata carried into file headers.
    pub attrs: BTreeMap<String, String>,
}

impl CorrelationSeries {
    pub fn new(delays: Vec<f64>, values: Vec<C64>, kind: SeriesKind, normalized: bool) -> Result<Self> {
        if delays.len() != values.len() {
            return Err(validation(format!(
                "series has {} delays but {} values",
                delays.len(),
                values.len()
            )));
        }
        check_increasing(&delays)?;
        Ok(CorrelationSeries { delays, values, kind, normalized, scale: 1.0, attrs: BTreeMap::new() })
    }

    pub fn from_real(delays: Vec<f64>, values: Vec<f64>, kind: SeriesKind, normalized: bool) -> Result<Self> {
        Self::new(delays, values.into_iter().map(|v| C64::new(v, 0.0)).collect(), kind, normalized)
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn with_attr(mut self, key: &str, value: impl ToString) -> Self {
        self.attrs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn attr_f64(&self, key: &str) -> Option<f64> {
        self.attrs.get(key).and_then(|v| v.parse().ok())
    }

    pub fn map(&self, kind: SeriesKind, f: impl Fn(f64, C64) -> C64) -> Self {
        let mut out = self.clone();
        out.kind = kind;
        for (tau, v) in out.delays.iter().zip(out.values.iter_mut()) {
            *v = f(*tau, *v);
        }
        out
    }

    pub fn same_grid(&self, other: &CorrelationSeries) -> bool {
        self.delays.len() == other.delays.len()
            && self.delays.iter().zip(&other.delays).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        match (self.delays.first(), self.delays.last()) {
            (Some(&a), Some(&b)) => a <= lo + 1e-9 && b >= hi - 1e-9,
            _ => false,
        }
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, tau: f64) -> Option<C64> {
        let d = &self.delays;
        if d.is_empty() {
            return None;
        }
        let tol = 1e-9 * (d[d.len() - 1] - d[0]).abs().max(1.0);
        if tau < d[0] - tol || tau > d[d.len() - 1] + tol {
            return None;
        }
        let k = d.partition_point(|&x| x < tau);
        if k < d.len() && (d[k] - tau).abs() <= tol {
            return Some(self.values[k]);
        }
        if k > 0 && (d[k - 1] - tau).abs() <= tol {
            return Some(self.values[k - 1]);
        }
        if k == 0 || k == d.len() {
            return None;
        }
        let w = (tau - d[k - 1]) / (d[k] - d[k - 1]);
        Some(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    /// Index of a grid point equal to `tau` up to rounding.
    pub fn find(&self, tau: f64) -> Option<usize> {
        let tol = 1e-12 * tau.abs().max(1.0);
        let k = self.delays.partition_point(|&x| x < tau - tol);
        (k < self.delays.len() && (self.delays[k] - tau).abs() <= tol).then_some(k)
    }

    /// Checks the kind-specific invariants.
    pub fn check(&self) -> Result<()> {
        check_increasing(&self.delays)?;
        if self.values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(validation(format!("{} series has non-finite values", self.kind)));
        }
        if self.kind.is_g2() {
            for (t, z) in self.delays.iter().zip(&self.values) {
                if z.re < -1e-9 || z.im.abs() > 1e-9 {
                    return Err(validation(format!("{} series not real non-negative at {t}: {z}", self.kind)));
                }
            }
            for (t, z) in self.delays.iter().zip(&self.values) {
                if *t > 0.0 {
                    if let Some(j) = self.find(-t) {
                        if (self.values[j] - z).norm() > 1e-9 {
                            return Err(validation(format!("{} series not even at {t}", self.kind)));
                        }
                    }
                }
            }
        }
        if self.kind.is_g1() && self.normalized {
            if self.values.iter().any(|z| z.norm() > 1.0 + 1e-9) {
                return Err(validation("normalized g1 exceeds unit modulus"));
            }
            if let Some(k) = self.delays.iter().position(|t| *t == 0.0) {
                if (self.values[k] - C64::new(1.0, 0.0)).norm() > 1e-9 {
                    return Err(validation("normalized g1 differs from 1 at zero delay"));
                }
            }
        }
        Ok(())
    }
}

pub fn check_increasing(delays: &[f64]) -> Result<()> {
    if delays.iter().any(|t| !t.is_finite()) {
        return Err(validation("delay grid has non-finite entries"));
    }
    if delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(validation("delay grid must be strictly increasing"));
    }
    Ok(())
}

/// `0, h, 2h, …` up to and including `tau_max` (to rounding).
pub fn uniform_grid(tau_max: f64, step: f64) -> Vec<f64> {
    let n = (tau_max / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// `−n·h, …, 0, …, n·h` with `n·h ≥ tau_max`.
pub fn symmetric_grid(tau_max: f64, step: f64) -> Vec<f64> {
    let n = (tau_max / step - 1e-9).ceil() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_lookup() {
        let s = CorrelationSeries::from_real(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 4.0], SeriesKind::G2, true).unwrap();
        assert_eq!(s.value_at(1.0).unwrap().re, 2.0);
        assert_eq!(s.value_at(1.5).unwrap().re, 3.0);
        assert!(s.value_at(2.5).is_none());
        assert!(s.covers(0.0, 2.0));
        assert!(!s.covers(-1.0, 2.0));
    }

    #[test]
    fn invariant_checks() {
        let bad = CorrelationSeries::from_real(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 0.9], SeriesKind::G2, true).unwrap();
        assert!(bad.check().is_err());
        let neg = CorrelationSeries::from_real(vec![0.0, 1.0], vec![0.0, -0.1], SeriesKind::G2, true).unwrap();
        assert!(neg.check().is_err());
        let g1 = CorrelationSeries::from_real(vec![0.0, 1.0], vec![1.0, 1.2], SeriesKind::G1Rot, true).unwrap();
        assert!(g1.check().is_err());
        assert!(CorrelationSeries::from_real(vec![0.0, 0.0], vec![1.0, 1.0], SeriesKind::G2, true).is_err());
    }

    #[test]
    fn grids() {
        let g = uniform_grid(1.0, 0.1);
        assert_eq!(g.len(), 11);
        let s = symmetric_grid(1.0, 0.25);
        assert_eq!(s.len(), 9);
        assert_eq!(s[4], 0.0);
        assert_eq!(s[0], -1.0);
    }

    #[test]
    fn kind_round_trip() {
        for k in [SeriesKind::G1Rot, SeriesKind::G1Lab, SeriesKind::G2, SeriesKind::G2xPar, SeriesKind::G2xPerp, SeriesKind::Visibility, SeriesKind::Auxiliary] {
            assert_eq!(k.as_str().parse::<SeriesKind>().unwrap(), k);
        }
    }
}
