//! Photon-count measurement chain: binning, shot noise, dark counts,
//! smoothing and B/A normalization.

use std::fmt::Write as _;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{rng_for, DOMAIN_COUNTS};

pub const DEFAULT_BIN_WIDTH: f64 = 1.28e-9;

pub const COUNT_TRACE_HEADER: &str = "# nv0 count-trace v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub bin_width: f64,
    pub collection_efficiency: f64,
    /// Background counts per second in the accumulated histogram.
    pub dark_rate: f64,
    /// Number of accumulated repetitions.
    pub shots: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            collection_efficiency: 1e-3,
            dark_rate: 0.0,
            shots: 100_000,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(Error::invalid("bin_width", "must be > 0"));
        }
        if !(self.collection_efficiency > 0.0 && self.collection_efficiency <= 1.0) {
            return Err(Error::invalid("collection_efficiency", "must lie in (0, 1]"));
        }
        if !(self.dark_rate >= 0.0) || !self.dark_rate.is_finite() {
            return Err(Error::invalid("dark_rate", "must be >= 0"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots", "must be >= 1"));
        }
        Ok(())
    }
}

/// Mean excited-state population per time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub bin_width: f64,
    /// Bin centers.
    pub t: Vec<f64>,
    pub p2: Vec<f64>,
}

impl PopulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Integrates piecewise-linear samples (t, v) into fixed-width bins starting at t0.
#[derive(Debug, Clone)]
pub struct BinAccumulator {
    t0: f64,
    width: f64,
    sums: Vec<f64>,
    last: Option<(f64, f64)>,
    weight: f64,
}

impl BinAccumulator {
    pub fn new(t0: f64, t_end: f64, width: f64) -> Self {
        let n = ((t_end - t0) / width).ceil().max(0.0) as usize;
        Self {
            t0,
            width,
            sums: vec![0.0; n],
            last: None,
            weight: 1.0,
        }
    }

    /// Scale applied to subsequently pushed samples.
    pub fn set_weight(&mut self, weight: f64) {
        self.weight = weight;
    }

    /// Forget the previous sample so the next push starts a new polyline.
    pub fn restart(&mut self) {
        self.last = None;
    }

    pub fn push(&mut self, t: f64, v: f64) {
        if let Some((ta, va)) = self.last {
            if t > ta {
                self.add_segment(ta, va, t, v);
            }
        }
        self.last = Some((t, v));
    }

    fn add_segment(&mut self, ta: f64, va: f64, tb: f64, vb: f64) {
        let slope = (vb - va) / (tb - ta);
        let first = (((ta - self.t0) / self.width).floor().max(0.0)) as usize;
        let mut k = first;
        while k < self.sums.len() {
            let lo = self.t0 + k as f64 * self.width;
            let hi = lo + self.width;
            if lo >= tb {
                break;
            }
            let a = ta.max(lo);
            let b = tb.min(hi);
            if b > a {
                let va_ = va + slope * (a - ta);
                let vb_ = va + slope * (b - ta);
                self.sums[k] += self.weight * 0.5 * (va_ + vb_) * (b - a);
            }
            k += 1;
        }
    }

    pub fn finish(self) -> PopulationTrace {
        let w = self.width;
        let t = (0..self.sums.len())
            .map(|k| self.t0 + (k as f64 + 0.5) * w)
            .collect();
        let p2 = self.sums.iter().map(|s| s / w).collect();
        PopulationTrace {
            bin_width: w,
            t,
            p2,
        }
    }
}

/// Time-binned photon counts with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTrace {
    pub bin_width: f64,
    pub t: Vec<f64>,
    pub counts: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl CountTrace {
    pub fn new(bin_width: f64, t: Vec<f64>, counts: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if t.len() != counts.len() || t.len() != sigma.len() {
            return Err(Error::invalid("trace", "t, counts and sigma lengths differ"));
        }
        if !(bin_width > 0.0) {
            return Err(Error::invalid("bin_width", "must be > 0"));
        }
        Ok(Self {
            bin_width,
            t,
            counts,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bin_width: self.bin_width,
            t: self.t.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
            sigma: self.sigma.iter().map(|s| s * factor.abs()).collect(),
        }
    }

    /// CSV with a version comment, a `# bin_width_s=` comment and columns t_s, counts, sigma.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{COUNT_TRACE_HEADER}\n# bin_width_s={:e}\nt_s,counts,sigma\n",
            self.bin_width
        );
        for i in 0..self.len() {
            let _ = writeln!(out, "{:e},{},{}", self.t[i], self.counts[i], self.sigma[i]);
        }
        out
    }

    /// Parse the format written by [`CountTrace::to_csv`]. Without a bin-width
    /// comment the spacing of the first two rows is used.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut bin_width = None;
        let mut header_seen = false;
        let (mut t, mut counts, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let row = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("bin_width_s=") {
                    bin_width = Some(v.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("row {row}: bad bin width: {e}"))
                    })?);
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["t_s", "counts", "sigma"] {
                    return Err(Error::Parse(format!(
                        "row {row}: expected header t_s,counts,sigma, got `{line}`"
                    )));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "row {row}: expected 3 columns, got {}",
                    fields.len()
                )));
            }
            let mut vals = [0.0; 3];
            for (k, f) in fields.iter().enumerate() {
                vals[k] = f
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {row}, column {}: {e}", k + 1)))?;
            }
            t.push(vals[0]);
            counts.push(vals[1]);
            sigma.push(vals[2]);
        }
        if !header_seen {
            return Err(Error::Parse("missing header row".into()));
        }
        if t.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }
        let bin_width = match bin_width {
            Some(w) => w,
            None if t.len() >= 2 => t[1] - t[0],
            None => return Err(Error::Parse("cannot infer bin width from one row".into())),
        };
        Self::new(bin_width, t, counts, sigma)
    }
}

/// Poisson mean per bin: shots·η·γ·p2·bin + dark·bin.
pub fn expected_counts(p2: &PopulationTrace, det: &DetectorModel, gamma: f64) -> Vec<f64> {
    let scale = det.shots as f64 * det.collection_efficiency * gamma * p2.bin_width;
    let dark = det.dark_rate * p2.bin_width;
    p2.p2.iter().map(|&p| scale * p.max(0.0) + dark).collect()
}

/// Poisson photon counts for a binned excited-state population.
///
/// `gamma` is the radiative rate in s⁻¹. Draws come from the counts domain of
/// `(seed, stream)`.
pub fn synthesize_counts(
    p2: &PopulationTrace,
    det: &DetectorModel,
    gamma: f64,
    seed: u64,
    stream: u64,
) -> Result<CountTrace> {
    det.validate()?;
    if (p2.bin_width - det.bin_width).abs() > 1e-9 * det.bin_width {
        return Err(Error::invalid(
            "bin_width",
            "population trace and detector bin widths differ",
        ));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", "must be >= 0"));
    }
    let mut rng = rng_for(seed, DOMAIN_COUNTS, stream);
    let means = expected_counts(p2, det, gamma);
    let mut counts = Vec::with_capacity(means.len());
    for &m in &means {
        let c = if m > 0.0 {
            Poisson::new(m)
                .map_err(|e| Error::invalid("rate", e.to_string()))?
                .sample(&mut rng)
        } else {
            0.0
        };
        counts.push(c);
    }
    let sigma = counts.iter().map(|c: &f64| c.sqrt()).collect();
    CountTrace::new(det.bin_width, p2.t.clone(), counts, sigma)
}

/// counts − dark_rate·bin; sigma unchanged.
pub fn subtract_dark(trace: &CountTrace, dark_rate: f64) -> CountTrace {
    let d = dark_rate * trace.bin_width;
    CountTrace {
        counts: trace.counts.iter().map(|c| c - d).collect(),
        ..trace.clone()
    }
}

/// Centered five-point moving average; edge bins average the available neighbors.
pub fn moving_average_5(trace: &CountTrace) -> Result<CountTrace> {
    let n = trace.len();
    if n < 5 {
        return Err(Error::InsufficientData { needed: 5, got: n });
    }
    let mut counts = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(n - 1);
        let m = (hi - lo + 1) as f64;
        counts.push(trace.counts[lo..=hi].iter().sum::<f64>() / m);
        sigma.push(trace.sigma[lo..=hi].iter().map(|s| s * s).sum::<f64>().sqrt() / m);
    }
    Ok(CountTrace {
        counts,
        sigma,
        ..trace.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub sigma: f64,
}

fn window_max(trace: &CountTrace, window: (f64, f64), label: &str) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for i in 0..trace.len() {
        if trace.t[i] >= window.0 && trace.t[i] < window.1 {
            let c = trace.counts[i];
            if best.is_none_or(|(b, _)| c > b) {
                best = Some((c, trace.sigma[i]));
            }
        }
    }
    best.ok_or_else(|| {
        Error::EmptyWindow(format!(
            "window {label} [{:e}, {:e}) contains no bins",
            window.0, window.1
        ))
    })
}

/// Ratio of the window maxima B/A with first-order error propagation.
///
/// Apply [`subtract_dark`] and [`moving_average_5`] first (or use [`ReadoutChain`]).
pub fn normalize_b_over_a(
    trace: &CountTrace,
    window_a: (f64, f64),
    window_b: (f64, f64),
) -> Result<Ratio> {
    for (w, label) in [(window_a, "A"), (window_b, "B")] {
        if !(w.1 > w.0) {
            return Err(Error::EmptyWindow(format!("window {label} has no width")));
        }
    }
    if window_a.0 < window_b.1 && window_b.0 < window_a.1 {
        return Err(Error::invalid("windows", "A and B overlap"));
    }
    let (a, sa) = window_max(trace, window_a, "A")?;
    let (b, sb) = window_max(trace, window_b, "B")?;
    if a == 0.0 {
        return Err(Error::Degenerate("window A maximum is zero".into()));
    }
    let value = b / a;
    let rel_b = if b != 0.0 { sb / b } else { 0.0 };
    let sigma = if b != 0.0 {
        value.abs() * ((sa / a).powi(2) + rel_b.powi(2)).sqrt()
    } else {
        sb / a.abs()
    };
    Ok(Ratio { value, sigma })
}

/// 1 − ratio/(2·mixed_reference).
pub fn initialization_fidelity(ratio_zero_width: f64, mixed_reference: f64) -> Result<f64> {
    if !(mixed_reference > 0.0) {
        return Err(Error::invalid("mixed_reference", "must be > 0"));
    }
    Ok(1.0 - ratio_zero_width / (2.0 * mixed_reference))
}

/// Dark subtraction, five-point smoothing and B/A normalization in one call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutChain {
    pub dark_rate: f64,
}

impl ReadoutChain {
    pub fn preprocess(&self, raw: &CountTrace) -> Result<CountTrace> {
        moving_average_5(&subtract_dark(raw, self.dark_rate))
    }

    pub fn ratio(&self, raw: &CountTrace, window_a: (f64, f64), window_b: (f64, f64)) -> Result<Ratio> {
        normalize_b_over_a(&self.preprocess(raw)?, window_a, window_b)
    }
}
