//! Data-driven starting points for the fit models.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::models::{extent, min_spacing, Bounds, FitModel};
use super::FitData;

/// Oversampling of the frequency scan relative to 1/span.
const OVERSAMPLE: f64 = 4.0;

/// Starting parameters for `model` estimated from `data`, clamped into `bounds`.
///
/// Non-finite estimates fall back to the bounds midpoint.
pub fn initial_guess(model: &FitModel, data: &FitData, bounds: &Bounds) -> Vec<f64> {
    let (x, y) = sorted(data);
    let mut p = match model {
        FitModel::ExpRecovery => guess_recovery(&x, &y),
        FitModel::DampedCosine => {
            let offset = mean(&y);
            let (omega, _, _) = spectral_peak(&x, &y, offset, bounds.upper[1]);
            let amp = y[0] - offset;
            let t2 = envelope_decay(&x, &y, offset, omega);
            vec![amp, omega, t2, offset]
        }
        FitModel::DetunedDampedCosine => {
            let offset = mean(&y);
            let (delta, phase, _) = spectral_peak(&x, &y, offset, bounds.upper[1]);
            let t2 = envelope_decay(&x, &y, offset, delta);
            let amp = first_period_amplitude(&x, &y, offset, delta);
            vec![amp, delta, phase, t2, offset]
        }
        FitModel::GaussianPeak => guess_gaussian(&x, &y),
        FitModel::EchoDecay { t1 } => guess_echo(&x, &y, *t1),
    };
    for (k, v) in p.iter_mut().enumerate() {
        if !v.is_finite() {
            *v = bounds.midpoint(k);
        }
    }
    bounds.clamp(&mut p);
    p
}

fn sorted(data: &FitData) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.x[a].total_cmp(&data.x[b]));
    (
        idx.iter().map(|&i| data.x[i]).collect(),
        idx.iter().map(|&i| data.y[i]).collect(),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn tail_mean(y: &[f64]) -> f64 {
    let k = (y.len() / 5).max(1);
    mean(&y[y.len() - k..])
}

/// First abscissa where the normalized curve crosses `level`, linearly interpolated.
fn crossing(x: &[f64], frac: &[f64], level: f64) -> Option<f64> {
    for i in 1..x.len() {
        if frac[i] >= level && frac[i - 1] < level {
            let w = (level - frac[i - 1]) / (frac[i] - frac[i - 1]);
            return Some(x[i - 1] + w * (x[i] - x[i - 1]));
        }
    }
    None
}

fn guess_recovery(x: &[f64], y: &[f64]) -> Vec<f64> {
    let y_inf = tail_mean(y);
    let y0 = y[0];
    let span = x[x.len() - 1] - x[0];
    let contrast = y_inf - y0;
    let t1 = if contrast != 0.0 {
        let frac: Vec<f64> = y.iter().map(|v| (v - y0) / contrast).collect();
        crossing(x, &frac, 1.0 - (-1.0f64).exp()).map_or(span / 3.0, |t| (t - x[0]).max(span / 100.0))
    } else {
        span / 3.0
    };
    vec![y_inf, y0, t1]
}

/// Peak of |Σ (y − offset)·e^{−iωx}| over ω ∈ (0, ω_max]; returns (ω, phase, power).
pub(crate) fn spectral_peak(x: &[f64], y: &[f64], offset: f64, omega_max: f64) -> (f64, f64, f64) {
    let (lo, hi) = extent(x);
    let span = hi - lo;
    if !(span > 0.0) {
        return (f64::NAN, 0.0, 0.0);
    }
    let nyquist = PI / min_spacing(x).unwrap_or(span);
    let top = nyquist.min(omega_max);
    let step = 2.0 * PI / (OVERSAMPLE * span);
    let n = (top / step).floor() as usize;
    let mut best = (f64::NAN, 0.0, 0.0);
    for k in 1..=n {
        let w = k as f64 * step;
        let s = dft(x, y, offset, w);
        let power = s.norm_sqr();
        if power > best.2 {
            best = (w, s.arg(), power);
        }
    }
    if best.0.is_finite() {
        // Parabolic refinement on the power around the peak.
        let w = best.0;
        let (pm, pp) = (dft(x, y, offset, w - step).norm_sqr(), dft(x, y, offset, w + step).norm_sqr());
        let denom = pm - 2.0 * best.2 + pp;
        if denom < 0.0 {
            let shift = 0.5 * (pm - pp) / denom;
            if shift.abs() < 1.0 {
                let wr = w + shift * step;
                best = (wr, dft(x, y, offset, wr).arg(), best.2);
            }
        }
    }
    best
}

fn dft(x: &[f64], y: &[f64], offset: f64, w: f64) -> Complex64 {
    x.iter()
        .zip(y)
        .map(|(&t, &v)| (v - offset) * Complex64::from_polar(1.0, -w * t))
        .sum()
}

/// Decay time from the slope of log(max |y − offset|) over consecutive periods.
fn envelope_decay(x: &[f64], y: &[f64], offset: f64, omega: f64) -> f64 {
    let (lo, hi) = extent(x);
    let span = hi - lo;
    let period = if omega.is_finite() && omega > 0.0 {
        2.0 * PI / omega
    } else {
        span / 4.0
    };
    let chunks = ((span / period).floor() as usize).max(1);
    let mut pts = Vec::new();
    for c in 0..chunks {
        let a = lo + c as f64 * period;
        let b = a + period;
        let mut m: f64 = 0.0;
        let mut centre = 0.0;
        for (&t, &v) in x.iter().zip(y) {
            if t >= a && t < b && (v - offset).abs() > m {
                m = (v - offset).abs();
                centre = t;
            }
        }
        if m > 0.0 {
            pts.push((centre, m.ln()));
        }
    }
    if pts.len() < 2 {
        return span;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope < 0.0 {
        -1.0 / slope
    } else {
        10.0 * span
    }
}

fn first_period_amplitude(x: &[f64], y: &[f64], offset: f64, omega: f64) -> f64 {
    let period = if omega.is_finite() && omega > 0.0 {
        2.0 * PI / omega
    } else {
        f64::INFINITY
    };
    let start = x[0];
    x.iter()
        .zip(y)
        .filter(|(&t, _)| t - start <= period)
        .map(|(_, &v)| (v - offset).abs())
        .fold(0.0, f64::max)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn guess_gaussian(x: &[f64], y: &[f64]) -> Vec<f64> {
    let offset = median(y);
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let (imin, &ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let (ipk, amp) = if ymax - offset >= offset - ymin {
        (imax, ymax - offset)
    } else {
        (imin, ymin - offset)
    };
    let center = x[ipk];
    let half = 0.5 * amp;
    let above = |i: usize| (y[i] - offset) * amp.signum() >= half.abs();
    let mut l = ipk;
    while l > 0 && above(l - 1) {
        l -= 1;
    }
    let mut r = ipk;
    while r + 1 < y.len() && above(r + 1) {
        r += 1;
    }
    let edge = |inside: usize, outside: Option<usize>| -> f64 {
        match outside {
            Some(o) => {
                let (vi, vo) = (y[inside] - offset, y[o] - offset);
                let w = if vi != vo { (vi - half) / (vi - vo) } else { 0.5 };
                x[inside] + w * (x[o] - x[inside])
            }
            None => x[inside],
        }
    };
    let left = edge(l, l.checked_sub(1));
    let right = edge(r, (r + 1 < y.len()).then_some(r + 1));
    let span = x[x.len() - 1] - x[0];
    let mut fwhm = right - left;
    if !(fwhm > 0.0) {
        fwhm = span / 4.0;
    }
    vec![amp, center, fwhm, offset]
}

fn guess_echo(x: &[f64], y: &[f64], t1: Option<f64>) -> Vec<f64> {
    let f = tail_mean(y);
    let e = y[0] - f;
    let span = x[x.len() - 1] - x[0];
    let tc = if e != 0.0 {
        let frac: Vec<f64> = y.iter().map(|v| 1.0 - (v - f) / e).collect();
        crossing(x, &frac, 1.0 - (-1.0f64).exp()).unwrap_or(span / 2.0)
    } else {
        span / 2.0
    };
    match t1 {
        Some(t1) => {
            let rest = 1.0 - tc / t1;
            let t2 = if rest > 0.05 { tc / rest.sqrt() } else { 10.0 * tc };
            vec![e, t2, f]
        }
        None => vec![e, tc * 2f64.sqrt(), 2.0 * tc, f],
    }
}
