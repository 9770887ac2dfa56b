//! Time- and frequency-domain feature extraction from receiver waveforms.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::sigsim::{ChirpSpec, RecordSet, RECEIVERS};

pub const SAMPLES_PER_CHANNEL: usize = 250;
pub const TIME_FEATURES: usize = RECEIVERS * SAMPLES_PER_CHANNEL;
pub const FREQ_BINS_PER_CHANNEL: usize = 49;
pub const FREQ_FEATURES: usize = RECEIVERS * FREQ_BINS_PER_CHANNEL * 2;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("window length {0} is below 2")]
    WindowTooShort(usize),
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("band {f0}-{f1} Hz holds {found} bins at {spacing} Hz spacing, expected {FREQ_BINS_PER_CHANNEL}")]
    BadBinGrid {
        f0: f64,
        f1: f64,
        spacing: f64,
        found: usize,
    },
    #[error("{domain} feature vector needs {expected} values, got {found}")]
    BadLength {
        domain: Domain,
        expected: usize,
        found: usize,
    },
    #[error("feature vector holds a non-finite value at {0}")]
    NonFinite(usize),
    #[error("unknown feature domain '{0}' (expected time or freq)")]
    UnknownDomain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    pub fn feature_len(self) -> usize {
        match self {
            Domain::Time => TIME_FEATURES,
            Domain::Frequency => FREQ_FEATURES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Frequency => "freq",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" => Ok(Domain::Time),
            "freq" | "frequency" => Ok(Domain::Frequency),
            other => Err(DspError::UnknownDomain(other.to_string())),
        }
    }
}

/// Network input: 1000 time samples or 392 spectral values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    domain: Domain,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self, DspError> {
        if values.len() != domain.feature_len() {
            return Err(DspError::BadLength {
                domain,
                expected: domain.feature_len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Symmetric Hann window.
pub fn hann_window(n: usize) -> Result<Vec<f64>, DspError> {
    if n < 2 {
        return Err(DspError::WindowTooShort(n));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / denom).cos()))
        .collect())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT, `X[k] = sum_m x[m] exp(-j 2 pi k m / n)`, for any length.
pub fn dft(x: &[f64]) -> Vec<Complex<f64>> {
    if x.is_empty() {
        return Vec::new();
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(x.len()));
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

fn check_record(record: &RecordSet) -> Result<(), DspError> {
    let (c, s) = record.waveforms.dim();
    if c != RECEIVERS || s != SAMPLES_PER_CHANNEL {
        return Err(DspError::MalformedRecord(format!(
            "expected {RECEIVERS}x{SAMPLES_PER_CHANNEL} waveforms, got {c}x{s}"
        )));
    }
    if record.waveforms.iter().any(|v| !v.is_finite()) {
        return Err(DspError::MalformedRecord("non-finite sample".into()));
    }
    Ok(())
}

/// Receiver channels concatenated in receiver order.
pub fn extract_time_features(record: &RecordSet) -> Result<FeatureVector, DspError> {
    check_record(record)?;
    FeatureVector::new(Domain::Time, record.waveforms.iter().copied().collect())
}

/// DFT bins lying strictly inside `(f0, f1)`.
pub fn band_bins(spec: &ChirpSpec, n: usize) -> Result<std::ops::RangeInclusive<usize>, DspError> {
    let spacing = spec.acquire_rate_hz / n as f64;
    let first = (spec.f0_hz / spacing).floor() as usize + 1;
    let last = (spec.f1_hz / spacing).ceil() as usize - 1;
    let found = (last + 1).saturating_sub(first);
    if found != FREQ_BINS_PER_CHANNEL || last >= n {
        return Err(DspError::BadBinGrid {
            f0: spec.f0_hz,
            f1: spec.f1_hz,
            spacing,
            found,
        });
    }
    Ok(first..=last)
}

/// Per receiver: Hann window, DFT, keep the in-band bins as interleaved
/// `[re, im]` pairs; receiver blocks are concatenated in order.
pub fn extract_freq_features(
    record: &RecordSet,
    spec: &ChirpSpec,
) -> Result<FeatureVector, DspError> {
    check_record(record)?;
    let bins = band_bins(spec, SAMPLES_PER_CHANNEL)?;
    let window = hann_window(SAMPLES_PER_CHANNEL)?;
    let mut values = Vec::with_capacity(FREQ_FEATURES);
    let mut windowed = vec![0.0; SAMPLES_PER_CHANNEL];
    for channel in record.waveforms.rows() {
        for ((dst, x), w) in windowed.iter_mut().zip(channel.iter()).zip(&window) {
            *dst = x * w;
        }
        let spectrum = dft(&windowed);
        for k in bins.clone() {
            values.push(spectrum[k].re);
            values.push(spectrum[k].im);
        }
    }
    FeatureVector::new(Domain::Frequency, values)
}

pub fn extract_features(
    record: &RecordSet,
    domain: Domain,
    spec: &ChirpSpec,
) -> Result<FeatureVector, DspError> {
    match domain {
        Domain::Time => extract_time_features(record),
        Domain::Frequency => extract_freq_features(record, spec),
    }
}
