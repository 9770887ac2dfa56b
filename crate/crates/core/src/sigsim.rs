//! Synthetic receiver waveforms for a single-emitter, four-receiver plate.
//!
//! Each receiver sees the direct emitter path plus one path scattered at the
//! touch point, with cylindrical spreading, a pressure-proportional scatter
//! amplitude and additive white Gaussian noise. Delays are applied by linear
//! interpolation at the emission rate and the result is decimated to the
//! acquisition rate. Every record is a pure function of
//! `(master_seed, event.seed_index)`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};
use crate::Point;

/// Touches closer than this to any transducer are rejected.
pub const MIN_TRANSDUCER_DISTANCE_CM: f64 = 0.1;
/// Margin kept between randomly drawn touches and the plate edges.
pub const EDGE_MARGIN_CM: f64 = 0.5;
pub const PRESSURE_RANGE: (f64, f64) = (0.2, 1.0);
pub const RECEIVERS: usize = 4;
/// Amplitude of the emitted wave at unit distance.
const SOURCE_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid plate configuration: {0}")]
    InvalidPlate(String),
    #[error("invalid chirp specification: {0}")]
    InvalidChirp(String),
    #[error("touch ({x}, {y}) lies outside the {width} x {height} cm plate")]
    OutsidePlate {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    #[error("touch ({x}, {y}) is within {MIN_TRANSDUCER_DISTANCE_CM} cm of a transducer")]
    TooCloseToTransducer { x: f64, y: f64 },
    #[error("invalid touch: {0}")]
    InvalidTouch(String),
    #[error("human perturbation requires a human-finger event")]
    NotHuman,
    #[error("circle of radius {radius} cm around ({cx}, {cy}) crosses the plate boundary")]
    CircleOutsidePlate { cx: f64, cy: f64, radius: f64 },
    #[error("malformed record: {0}")]
    MalformedRecord(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateConfig {
    pub width_cm: f64,
    pub height_cm: f64,
    pub emitter_pos: Point,
    pub receiver_pos: [Point; RECEIVERS],
    pub group_velocity_cm_per_s: f64,
    pub scatter_gain: f64,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Group velocity slope in cm/s per Hz around the band centre. Zero keeps
    /// propagation non-dispersive.
    pub dispersion_slope: f64,
    /// Adds first-order image sources for the four plate edges.
    pub edge_reflections: bool,
    pub reflection_coeff: f64,
}

impl Default for PlateConfig {
    fn default() -> Self {
        Self {
            width_cm: 20.0,
            height_cm: 20.0,
            emitter_pos: [10.0, 1.0],
            receiver_pos: [[1.0, 1.0], [19.0, 1.0], [1.0, 19.0], [19.0, 19.0]],
            group_velocity_cm_per_s: 3.0e5,
            scatter_gain: 0.35,
            snr_db: 30.0,
            dispersion_slope: 0.0,
            edge_reflections: false,
            reflection_coeff: 0.5,
        }
    }
}

impl PlateConfig {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= 0.0 && p[0] <= self.width_cm && p[1] >= 0.0 && p[1] <= self.height_cm
    }

    pub fn transducers(&self) -> impl Iterator<Item = Point> + '_ {
        std::iter::once(self.emitter_pos).chain(self.receiver_pos.iter().copied())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidPlate(m));
        if !(self.width_cm > 0.0 && self.height_cm > 0.0)
            || !self.width_cm.is_finite()
            || !self.height_cm.is_finite()
        {
            return bad(format!(
                "plate dimensions {} x {} must be positive",
                self.width_cm, self.height_cm
            ));
        }
        if !(self.group_velocity_cm_per_s > 0.0) || !self.group_velocity_cm_per_s.is_finite() {
            return bad(format!(
                "group velocity {} must be positive",
                self.group_velocity_cm_per_s
            ));
        }
        if !self.scatter_gain.is_finite() || self.scatter_gain < 0.0 {
            return bad(format!(
                "scatter gain {} must be finite and non-negative",
                self.scatter_gain
            ));
        }
        if self.snr_db.is_nan() {
            return bad("snr_db is NaN".into());
        }
        if !self.dispersion_slope.is_finite() {
            return bad("dispersion slope must be finite".into());
        }
        if !self.reflection_coeff.is_finite() {
            return bad("reflection coefficient must be finite".into());
        }
        if !self.contains(self.emitter_pos) {
            return bad(format!("emitter {:?} outside plate", self.emitter_pos));
        }
        for (r, p) in self.receiver_pos.iter().enumerate() {
            if !self.contains(*p) {
                return bad(format!("receiver {} at {:?} outside plate", r + 1, p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChirpSpec {
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub duration_s: f64,
    pub emit_rate_hz: f64,
    pub acquire_rate_hz: f64,
    pub acquire_samples: usize,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        Self {
            f0_hz: 50e3,
            f1_hz: 100e3,
            duration_s: 1e-3,
            emit_rate_hz: 500e3,
            acquire_rate_hz: 250e3,
            acquire_samples: 250,
        }
    }
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidChirp(m));
        if !(self.f0_hz > 0.0 && self.f1_hz > self.f0_hz) {
            return bad(format!(
                "need 0 < f0 < f1, got f0={} f1={}",
                self.f0_hz, self.f1_hz
            ));
        }
        if !(self.duration_s > 0.0) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if !(self.acquire_rate_hz > 0.0) {
            return bad(format!(
                "acquire rate {} must be positive",
                self.acquire_rate_hz
            ));
        }
        if self.emit_rate_hz < 2.0 * self.f1_hz {
            return bad(format!(
                "emit rate {} below twice f1 ({})",
                self.emit_rate_hz,
                2.0 * self.f1_hz
            ));
        }
        let expected = self.duration_s * self.acquire_rate_hz;
        if (expected - self.acquire_samples as f64).abs() > 1e-6 {
            return bad(format!(
                "acquire_samples {} != duration x acquire_rate = {}",
                self.acquire_samples, expected
            ));
        }
        let ratio = self.emit_rate_hz / self.acquire_rate_hz;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "emit/acquire rate ratio {ratio} is not a positive integer"
            ));
        }
        Ok(())
    }

    pub fn decimation(&self) -> usize {
        (self.emit_rate_hz / self.acquire_rate_hz).round() as usize
    }

    pub fn sweep_rate(&self) -> f64 {
        (self.f1_hz - self.f0_hz) / self.duration_s
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f0_hz + self.sweep_rate() * t
    }
}

/// Linear chirp excitation, zero outside `[0, duration]`.
pub fn chirp(spec: &ChirpSpec, t: f64) -> f64 {
    if !(0.0..=spec.duration_s).contains(&t) {
        return 0.0;
    }
    let phase = spec.f0_hz * t + 0.5 * spec.sweep_rate() * t * t;
    (2.0 * PI * phase).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finger {
    Robot,
    Human,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchEvent {
    pub x_cm: f64,
    pub y_cm: f64,
    pub pressure: f64,
    pub finger: Finger,
    pub seed_index: u64,
}

impl TouchEvent {
    pub fn position(&self) -> Point {
        [self.x_cm, self.y_cm]
    }
}

/// Receiver waveforms for one touch, receiver-major (`channels x samples`).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub event: TouchEvent,
    pub waveforms: Array2<f64>,
}

impl RecordSet {
    pub fn validate(&self, samples: usize) -> Result<(), SimError> {
        let (c, s) = self.waveforms.dim();
        if c != RECEIVERS || s != samples {
            return Err(SimError::MalformedRecord(format!(
                "expected {RECEIVERS}x{samples} waveforms, got {c}x{s}"
            )));
        }
        if self.waveforms.iter().any(|v| !v.is_finite()) {
            return Err(SimError::MalformedRecord("non-finite sample".into()));
        }
        Ok(())
    }
}

/// Robot-vs-human mismatch model.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanPerturbation {
    /// Standard deviation of the multiplicative pressure factor (mean 1).
    pub pressure_sd: f64,
    pub pressure_clamp: (f64, f64),
    /// Standard deviation of the scattered-path delay jitter, in acquisition samples.
    pub jitter_sd_samples: f64,
}

impl Default for HumanPerturbation {
    fn default() -> Self {
        Self {
            pressure_sd: 0.15,
            pressure_clamp: (0.5, 1.5),
            jitter_sd_samples: 0.2,
        }
    }
}

impl HumanPerturbation {
    pub fn none() -> Self {
        Self {
            pressure_sd: 0.0,
            jitter_sd_samples: 0.0,
            ..Self::default()
        }
    }

    /// Per-touch pressure factor and per-receiver delay jitter (samples).
    pub fn draw(&self, rng: &mut impl Rng) -> (f64, [f64; RECEIVERS]) {
        let z: f64 = StandardNormal.sample(rng);
        let (lo, hi) = self.pressure_clamp;
        let factor = (1.0 + self.pressure_sd * z).clamp(lo, hi);
        let mut jitter = [0.0; RECEIVERS];
        for j in jitter.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *j = self.jitter_sd_samples * z;
        }
        (factor, jitter)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Record-generation context: geometry, excitation and master seed.
#[derive(Debug, Clone)]
pub struct Simulator {
    plate: PlateConfig,
    chirp: ChirpSpec,
    human: HumanPerturbation,
    master_seed: u64,
    emitted: Vec<f64>,
}

impl Simulator {
    pub fn new(
        plate: PlateConfig,
        chirp_spec: ChirpSpec,
        master_seed: u64,
    ) -> Result<Self, SimError> {
        plate.validate()?;
        chirp_spec.validate()?;
        let speed_at = |f: f64| {
            plate.group_velocity_cm_per_s
                + plate.dispersion_slope * (f - 0.5 * (chirp_spec.f0_hz + chirp_spec.f1_hz))
        };
        if speed_at(chirp_spec.f0_hz) <= 0.0 || speed_at(chirp_spec.f1_hz) <= 0.0 {
            return Err(SimError::InvalidPlate(
                "dispersion drives group velocity non-positive inside the band".into(),
            ));
        }
        let n_emit = (chirp_spec.duration_s * chirp_spec.emit_rate_hz).round() as usize;
        let emitted = (0..=n_emit)
            .map(|n| chirp(&chirp_spec, n as f64 / chirp_spec.emit_rate_hz))
            .collect();
        Ok(Self {
            plate,
            chirp: chirp_spec,
            human: HumanPerturbation::default(),
            master_seed,
            emitted,
        })
    }

    pub fn with_human(mut self, human: HumanPerturbation) -> Self {
        self.human = human;
        self
    }

    pub fn plate(&self) -> &PlateConfig {
        &self.plate
    }

    pub fn chirp(&self) -> &ChirpSpec {
        &self.chirp
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn check_event(&self, event: &TouchEvent) -> Result<(), SimError> {
        let p = event.position();
        if !p[0].is_finite() || !p[1].is_finite() || !self.plate.contains(p) {
            return Err(SimError::OutsidePlate {
                x: p[0],
                y: p[1],
                width: self.plate.width_cm,
                height: self.plate.height_cm,
            });
        }
        if !event.pressure.is_finite() || event.pressure < 0.0 {
            return Err(SimError::InvalidTouch(format!(
                "pressure {} must be finite and >= 0",
                event.pressure
            )));
        }
        if self
            .plate
            .transducers()
            .any(|t| dist(t, p) < MIN_TRANSDUCER_DISTANCE_CM)
        {
            return Err(SimError::TooCloseToTransducer { x: p[0], y: p[1] });
        }
        Ok(())
    }

    fn emitted_at(&self, i: i64) -> f64 {
        if i < 0 {
            0.0
        } else {
            self.emitted.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    fn group_velocity(&self, f: f64) -> f64 {
        let centre = 0.5 * (self.chirp.f0_hz + self.chirp.f1_hz);
        self.plate.group_velocity_cm_per_s + self.plate.dispersion_slope * (f - centre)
    }

    /// Adds `gain * chirp(t - path/c + extra_delay)` sampled on the acquisition grid.
    fn accumulate_path(&self, out: &mut [f64], path_cm: f64, gain: f64, extra_delay_s: f64) {
        let fe = self.chirp.emit_rate_hz;
        let decim = self.chirp.decimation();
        let c0 = self.plate.group_velocity_cm_per_s;
        let dispersive = self.plate.dispersion_slope != 0.0;
        for (m, y) in out.iter_mut().enumerate() {
            let n = (m * decim) as f64;
            let delay = if dispersive {
                let t = n / fe;
                let f = self
                    .chirp
                    .instantaneous_frequency(t - path_cm / c0)
                    .clamp(self.chirp.f0_hz, self.chirp.f1_hz);
                path_cm / self.group_velocity(f)
            } else {
                path_cm / c0
            } + extra_delay_s;
            let pos = n - delay * fe;
            let i0 = pos.floor();
            let frac = pos - i0;
            let i0 = i0 as i64;
            let v = (1.0 - frac) * self.emitted_at(i0) + frac * self.emitted_at(i0 + 1);
            *y += gain * v;
        }
    }

    /// Receiver positions a wave can arrive from: the receiver itself and,
    /// with edge reflections enabled, its four mirror images.
    fn receiver_images(&self, r: Point) -> Vec<(Point, f64)> {
        let mut images = vec![(r, 1.0)];
        if self.plate.edge_reflections {
            let (w, h, k) = (
                self.plate.width_cm,
                self.plate.height_cm,
                self.plate.reflection_coeff,
            );
            images.extend([
                ([-r[0], r[1]], k),
                ([2.0 * w - r[0], r[1]], k),
                ([r[0], -r[1]], k),
                ([r[0], 2.0 * h - r[1]], k),
            ]);
        }
        images
    }

    fn render(
        &self,
        event: &TouchEvent,
        pressure_scale: f64,
        jitter_samples: [f64; RECEIVERS],
    ) -> Result<RecordSet, SimError> {
        self.check_event(event)?;
        let samples = self.chirp.acquire_samples;
        let touch = event.position();
        let emitter = self.plate.emitter_pos;
        let rho = event.pressure * pressure_scale;
        let mut noise_rng = stream_rng(self.master_seed, event.seed_index, Stream::Noise);
        let mut waveforms = Array2::zeros((RECEIVERS, samples));
        for (r, &receiver) in self.plate.receiver_pos.iter().enumerate() {
            let mut clean = vec![0.0; samples];
            let d_et = dist(emitter, touch);
            for (image, refl) in self.receiver_images(receiver) {
                let d_er = dist(emitter, image);
                self.accumulate_path(&mut clean, d_er, refl * SOURCE_AMPLITUDE / d_er.sqrt(), 0.0);
                let d_tr = dist(touch, image);
                let gain =
                    refl * rho * self.plate.scatter_gain * SOURCE_AMPLITUDE / (d_et * d_tr).sqrt();
                if gain != 0.0 {
                    let jitter_s = jitter_samples[r] / self.chirp.acquire_rate_hz;
                    self.accumulate_path(&mut clean, d_et + d_tr, gain, jitter_s);
                }
            }
            let sigma = noise_sigma(&clean, self.plate.snr_db);
            for (dst, v) in waveforms.row_mut(r).iter_mut().zip(clean) {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *dst = f32_round(v + sigma * z);
            }
        }
        Ok(RecordSet {
            event: event.clone(),
            waveforms,
        })
    }

    /// Waveforms for a touch, with samples quantized to single precision.
    pub fn synth_touch(&self, event: &TouchEvent) -> Result<RecordSet, SimError> {
        self.render(event, 1.0, [0.0; RECEIVERS])
    }

    /// Like [`Simulator::synth_touch`] with a per-touch pressure factor and
    /// scattered-path delay jitter drawn from the human perturbation model.
    pub fn human_perturb(&self, event: &TouchEvent) -> Result<RecordSet, SimError> {
        if event.finger != Finger::Human {
            return Err(SimError::NotHuman);
        }
        let mut rng = stream_rng(self.master_seed, event.seed_index, Stream::Human);
        let (factor, jitter) = self.human.draw(&mut rng);
        self.render(event, factor, jitter)
    }

    /// The `index`-th random robot touch: uniform position inside the edge
    /// margin, uniform pressure. Positions too close to a transducer are
    /// redrawn from the same stream.
    pub fn sample_event(&self, index: u64) -> TouchEvent {
        let mut rng = stream_rng(self.master_seed, index, Stream::Event);
        let (w, h) = (self.plate.width_cm, self.plate.height_cm);
        let mx = EDGE_MARGIN_CM.min(w / 4.0);
        let my = EDGE_MARGIN_CM.min(h / 4.0);
        loop {
            let x = f32_round(rng.random_range(mx..w - mx));
            let y = f32_round(rng.random_range(my..h - my));
            let pressure = f32_round(rng.random_range(PRESSURE_RANGE.0..PRESSURE_RANGE.1));
            if self
                .plate
                .transducers()
                .all(|t| dist(t, [x, y]) >= MIN_TRANSDUCER_DISTANCE_CM)
            {
                return TouchEvent {
                    x_cm: x,
                    y_cm: y,
                    pressure,
                    finger: Finger::Robot,
                    seed_index: index,
                };
            }
        }
    }

    pub fn gen_record(&self, index: u64) -> Result<RecordSet, SimError> {
        self.synth_touch(&self.sample_event(index))
    }

    pub fn gen_dataset(&self, n: usize) -> Result<Vec<RecordSet>, SimError> {
        (0..n as u64).map(|i| self.gen_record(i)).collect()
    }

    /// Human-finger touches at `count` evenly spaced angles on a circle,
    /// starting at angle zero and running counter-clockwise.
    pub fn gen_circle_trajectory(
        &self,
        center: Point,
        radius_cm: f64,
        count: usize,
    ) -> Result<Vec<RecordSet>, SimError> {
        let (w, h) = (self.plate.width_cm, self.plate.height_cm);
        if !(radius_cm >= 0.0)
            || center[0] - radius_cm < 0.0
            || center[0] + radius_cm > w
            || center[1] - radius_cm < 0.0
            || center[1] + radius_cm > h
        {
            return Err(SimError::CircleOutsidePlate {
                cx: center[0],
                cy: center[1],
                radius: radius_cm,
            });
        }
        (0..count)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / count as f64;
                let mut rng = stream_rng(self.master_seed, k as u64, Stream::Event);
                let pressure = f32_round(rng.random_range(PRESSURE_RANGE.0..PRESSURE_RANGE.1));
                let event = TouchEvent {
                    x_cm: center[0] + radius_cm * theta.cos(),
                    y_cm: center[1] + radius_cm * theta.sin(),
                    pressure,
                    finger: Finger::Human,
                    seed_index: k as u64,
                };
                self.human_perturb(&event)
            })
            .collect()
    }
}

/// Draws the clamped pressure factor alone; used to check its moments.
pub fn draw_pressure_factor(human: &HumanPerturbation, rng: &mut impl Rng) -> f64 {
    human.draw(rng).0
}

/// Per-channel noise standard deviation implied by `snr_db` for a clean waveform.
pub fn noise_sigma(clean: &[f64], snr_db: f64) -> f64 {
    if !snr_db.is_finite() || clean.is_empty() {
        return 0.0;
    }
    let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}
