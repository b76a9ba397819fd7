use crate::averaging::Pchip;
use crate::error::{validation, Error, Result};
use crate::qcore::C64;
use crate::series::{CorrelationSeries, SeriesKind};

/// Values of `g2x_perp` below this are treated as zero.
const PERP_FLOOR: f64 = 1e-9;

/// V(τ) = |g2x∥ − g2x⊥| / g2x⊥. Points where g2x⊥ vanishes are set to 0 and
/// counted in the `flagged` attribute.
pub fn visibility(par: &CorrelationSeries, perp: &CorrelationSeries) -> Result<CorrelationSeries> {
    if !par.same_grid(perp) {
        return Err(validation("visibility needs g2x series on identical grids"));
    }
    let mut flagged = 0usize;
    let values = par
        .values
        .iter()
        .zip(&perp.values)
        .map(|(p, q)| {
            if q.re < PERP_FLOOR {
                flagged += 1;
                C64::new(0.0, 0.0)
            } else {
                C64::new((p.re - q.re).abs() / q.re, 0.0)
            }
        })
        .collect();
    let mut out = CorrelationSeries::new(par.delays.clone(), values, SeriesKind::Visibility, true)?;
    for key in ["delta_t", "gamma_l", "q_inv_sq"] {
        if let Some(v) = par.attrs.get(key) {
            out.attrs.insert(key.into(), v.clone());
        }
    }
    Ok(out.with_attr("flagged", flagged))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtwResult {
    /// ∫V dτ over the window (ns).
    pub ctw: f64,
    pub window: (f64, f64),
    /// Estimated mass of V outside the window (ns).
    pub truncation_residual: f64,
}

fn at(v: &CorrelationSeries, t: f64) -> Result<f64> {
    v.value_at(t).map(|z| z.re).ok_or_else(|| Error::Coverage(format!("visibility undefined at {t} ns")))
}

/// Exponential tail beyond `edge`, from the decay over the outer tenth of
/// the half-window.
fn tail(v: &CorrelationSeries, inner: f64, edge: f64) -> Result<f64> {
    let ve = at(v, edge)?;
    if ve <= 0.0 {
        return Ok(0.0);
    }
    let d = (edge - inner).abs();
    let vi = at(v, inner)?;
    if d > 0.0 && vi > ve {
        Ok(ve * d / (vi / ve).ln())
    } else {
        // no decay visible: bound the tail by one half-window at the edge value
        Ok(ve * (edge.abs()).max(d))
    }
}

/// Coalescence time window: trapezoid integral of the visibility over
/// `window`, by default ±Δt/2 (taken from the series' `delta_t`).
pub fn ctw(v: &CorrelationSeries, window: Option<(f64, f64)>) -> Result<CtwResult> {
    if v.kind != SeriesKind::Visibility {
        return Err(validation(format!("ctw expects a visibility series, got {}", v.kind)));
    }
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let dt = v
                .attr_f64("delta_t")
                .ok_or_else(|| validation("no window given and the series carries no delta_t"))?;
            (-0.5 * dt, 0.5 * dt)
        }
    };
    if !(hi > lo) {
        return Err(validation(format!("empty ctw window [{lo}, {hi}]")));
    }
    if !v.covers(lo, hi) {
        return Err(Error::Coverage(format!("ctw window [{lo}, {hi}] exceeds the visibility grid")));
    }
    let mut pts = vec![(lo, at(v, lo)?)];
    for (t, z) in v.delays.iter().zip(&v.values) {
        if *t > lo && *t < hi {
            pts.push((*t, z.re));
        }
    }
    pts.push((hi, at(v, hi)?));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    let span = 0.1 * (hi - lo) * 0.5;
    let residual = tail(v, lo + span, lo)? + tail(v, hi - span, hi)?;
    Ok(CtwResult { ctw: area, window: (lo, hi), truncation_residual: residual })
}

fn is_uniform(d: &[f64]) -> bool {
    if d.len() < 3 {
        return true;
    }
    let h = d[1] - d[0];
    d.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-12))
}

fn gaussian_smooth(values: &[C64], step: f64, fwhm: f64) -> Vec<C64> {
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let half = (6.0 * sigma / step).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half).map(|k| (-(k as f64 * step).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= norm);
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, w) in kernel.iter().enumerate() {
                let src = i + j as isize - half;
                if (0..n).contains(&src) {
                    acc += values[src as usize] * *w;
                }
            }
            acc
        })
        .collect()
}

/// Gaussian detector response of the given FWHM. Non-uniform grids are
/// resampled with a monotone cubic Hermite interpolant at the smallest
/// spacing, smoothed, and interpolated back.
pub fn convolve_irf(series: &CorrelationSeries, fwhm: f64) -> Result<CorrelationSeries> {
    if !(fwhm >= 0.0 && fwhm.is_finite()) {
        return Err(validation(format!("irf fwhm must be >= 0, got {fwhm}")));
    }
    if fwhm == 0.0 || series.len() < 2 {
        return Ok(series.clone());
    }
    let d = &series.delays;
    let mut out = series.clone();
    if is_uniform(d) {
        out.values = gaussian_smooth(&series.values, d[1] - d[0], fwhm);
    } else {
        let h = d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let n = ((d[d.len() - 1] - d[0]) / h).round() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| d[0] + k as f64 * (d[d.len() - 1] - d[0]) / n as f64).collect();
        let re = Pchip::new(d.clone(), series.real())?;
        let im = Pchip::new(d.clone(), series.values.iter().map(|z| z.im).collect())?;
        let resampled: Vec<C64> = grid.iter().map(|&t| C64::new(re.eval(t), im.eval(t))).collect();
        let smooth = gaussian_smooth(&resampled, grid[1] - grid[0], fwhm);
        let back_re = Pchip::new(grid.clone(), smooth.iter().map(|z| z.re).collect())?;
        let back_im = Pchip::new(grid, smooth.iter().map(|z| z.im).collect())?;
        out.values = d.iter().map(|&t| C64::new(back_re.eval(t), back_im.eval(t))).collect();
    }
    Ok(out.with_attr("irf_fwhm", fwhm))
}
