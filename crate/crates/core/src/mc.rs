//! Monte Carlo detector clicks for the dot + laser interference setup.
//!
//! Photons are generated per source, routed through the final splitter
//! with a pair-level interference kernel, blurred by detector jitter and
//! merged with dark counts. Every stochastic step draws from its own
//! ChaCha substream keyed by (segment, purpose), so changing one step (for
//! example the dark rate) leaves all other draws untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{g2_full_curve, hbt_dot_curve, symmetric_grid, CorrelationCurve, Response};
use crate::error::{Error, Result};
use crate::params::{BeamSplitter, SystemParams};
use crate::stream::{Channel, Click, Origin, TimestampStream};

/// Interference is only applied to dot–laser pairs closer than this many
/// coherence times.
pub const PAIR_WINDOW_COHERENCE_TIMES: f64 = 10.0;

/// Guard on the expected number of generated clicks.
pub const MAX_EXPECTED_CLICKS: f64 = 1e9;

/// Default detected rate per source, counts/ps (1 MHz).
pub const DEFAULT_RATE_PER_PS: f64 = 1e-6;

/// Default segment length for splitting long runs.
pub const DEFAULT_SEGMENT_PS: f64 = 1e11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McMode {
    /// Dot only, split onto both detectors.
    HbtDot,
    /// Laser only, split onto both detectors.
    HbtLaser,
    /// Dot and laser entering opposite splitter ports.
    TwoSource,
}

impl McMode {
    pub fn name(self) -> &'static str {
        match self {
            McMode::HbtDot => "hbt_dot",
            McMode::HbtLaser => "hbt_laser",
            McMode::TwoSource => "two_source",
        }
    }
}

impl std::str::FromStr for McMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hbt_dot" | "hbt-dot" => Ok(McMode::HbtDot),
            "hbt_laser" | "hbt-laser" => Ok(McMode::HbtLaser),
            "two_source" | "two-source" => Ok(McMode::TwoSource),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRunConfig {
    pub duration_ps: f64,
    /// Dot-side photons reaching the detectors (signal plus background).
    pub dot_rate_per_ps: f64,
    pub laser_rate_per_ps: f64,
    pub seed: u64,
    pub mode: McMode,
    pub params: SystemParams,
    /// Number of independently seeded time segments.
    pub segments: u32,
    /// Whether background photons on the dot side interfere like signal
    /// photons. When false they are treated as fully distinguishable.
    pub background_interferes: bool,
}

impl McRunConfig {
    /// Rates follow the intensity ratio of `params`: the laser runs at
    /// `rate_per_ps` and the dot at `rate_per_ps · η/α²`. The HBT modes run
    /// their single source at `rate_per_ps`.
    pub fn new(params: SystemParams, mode: McMode, rate_per_ps: f64, duration_ps: f64, seed: u64) -> Result<Self> {
        let (dot, laser) = match mode {
            McMode::HbtDot => (rate_per_ps, 0.0),
            McMode::HbtLaser => (0.0, rate_per_ps),
            McMode::TwoSource => (rate_per_ps * params.intensity_ratio()?, rate_per_ps),
        };
        let cfg = McRunConfig {
            duration_ps,
            dot_rate_per_ps: dot,
            laser_rate_per_ps: laser,
            seed,
            mode,
            params,
            segments: ((duration_ps / DEFAULT_SEGMENT_PS).ceil() as u32).max(1),
            background_interferes: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_segments(mut self, segments: u32) -> Self {
        self.segments = segments;
        self
    }

    fn active_rates(&self) -> (f64, f64) {
        match self.mode {
            McMode::HbtDot => (self.dot_rate_per_ps, 0.0),
            McMode::HbtLaser => (0.0, self.laser_rate_per_ps),
            McMode::TwoSource => (self.dot_rate_per_ps, self.laser_rate_per_ps),
        }
    }

    pub fn expected_clicks(&self) -> f64 {
        let (dot, laser) = self.active_rates();
        (dot + laser + 2.0 * self.params.detector.dark_rate_per_ps()) * self.duration_ps
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ps > 0.0 && self.duration_ps.is_finite()) {
            return Err(Error::invalid("duration_ps", format!("must be finite and > 0, got {}", self.duration_ps)));
        }
        for (name, v) in [("dot_rate", self.dot_rate_per_ps), ("laser_rate", self.laser_rate_per_ps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.segments == 0 {
            return Err(Error::invalid("segments", "must be at least 1"));
        }
        let expected = self.expected_clicks();
        if expected > MAX_EXPECTED_CLICKS {
            return Err(Error::Overflow(expected));
        }
        let q = &self.params.quantum;
        let signal = self.active_rates().0 * (1.0 - q.background_fraction());
        if signal * q.tau_rad_ps() >= 0.25 {
            return Err(Error::invalid(
                "dot_rate",
                format!(
                    "signal rate {signal} counts/ps saturates an emitter with a {} ps lifetime",
                    q.tau_rad_ps()
                ),
            ));
        }
        if self.active_rates().0 * q.tau_rad_ps() > 0.1 {
            log::warn!(
                "dot_rate * tau_rad = {:.3} > 0.1: more than one dot photon in flight is likely",
                self.active_rates().0 * q.tau_rad_ps()
            );
        }
        if self.active_rates().0.max(self.active_rates().1) > 1e-4 {
            log::warn!("rates above 1e-4 counts/ps: detector dead time, which is not modeled, would matter");
        }
        Ok(())
    }

    /// Analytic convolved correlation expected for this run on a grid
    /// covering ±`half_span_ps`. The two-source ratio is taken from the
    /// configured rates.
    pub fn model_curve(&self, half_span_ps: f64) -> Result<CorrelationCurve> {
        let p = &self.params;
        let fwhm = p.detector.pair_fwhm_ps();
        let step = if fwhm > 0.0 {
            fwhm / 32.0
        } else {
            p.interference_coherence_ps().min(p.quantum.tau_rad_ps()) / 64.0
        };
        let grid = symmetric_grid(half_span_ps, step);
        match self.mode {
            McMode::HbtDot => hbt_dot_curve(half_span_ps, Some(step), p, Response::Convolved),
            McMode::HbtLaser => {
                let mut flat = CorrelationCurve::from_fn(grid, |_| 1.0);
                flat.params = Some(*p);
                flat.convolved = true;
                Ok(flat)
            }
            McMode::TwoSource => {
                if self.laser_rate_per_ps <= 0.0 {
                    return Err(Error::DivisionByZero("laser rate is zero"));
                }
                let mut model = p.with_ratio(self.dot_rate_per_ps / self.laser_rate_per_ps)?;
                if !self.background_interferes {
                    // only the signal share of dot photons carries the overlap
                    let gamma = p.interference.gamma() * (1.0 - p.quantum.background_fraction()).sqrt();
                    model = model.with_gamma(gamma)?;
                }
                g2_full_curve(grid, &model, Response::Convolved)
            }
        }
    }

    /// FNV-1a over the debug representation (exact for f64).
    pub fn config_hash(&self) -> u64 {
        let repr = format!("{self:?}");
        repr.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// Relative probability that a dot and a laser photon separated by `dt`
/// leave through different ports: (R² + T²) − 2RT·γ²cos²φ·exp(−|dt|/τ).
pub fn pair_kernel(dt_ps: f64, splitter: &BeamSplitter, depth: f64, tau_coh_ps: f64) -> f64 {
    let (r, t) = (splitter.reflectance(), splitter.transmittance());
    r * r + t * t - 2.0 * r * t * depth * (-dt_ps.abs() / tau_coh_ps).exp()
}

/// [`pair_kernel`] with the depth and coherence time taken from `params`.
pub fn pair_kernel_for(dt_ps: f64, params: &SystemParams) -> f64 {
    pair_kernel(
        dt_ps,
        &params.splitter,
        params.interference.interference_depth(),
        params.interference_coherence_ps(),
    )
}

/// Joint port probabilities for a dot and a laser photon with interference
/// visibility `v`. Ports are named for the dot photon (reflected → D2) and
/// the laser photon (transmitted → D2).
#[derive(Debug, Clone, Copy)]
struct PairJoint {
    /// Dot reflected, laser reflected: D2 + D3.
    rr: f64,
    /// Dot reflected, laser transmitted: both on D2.
    rt: f64,
    /// Dot transmitted, laser reflected: both on D3.
    tr: f64,
    /// Dot transmitted, laser transmitted: D3 + D2.
    tt: f64,
}

impl PairJoint {
    fn new(splitter: &BeamSplitter, v: f64) -> Self {
        let (r, t) = (splitter.reflectance(), splitter.transmittance());
        let distinct = r * r + t * t;
        let coincidence = distinct - 2.0 * r * t * v;
        let scale = if distinct > 0.0 { coincidence / distinct } else { 0.0 };
        PairJoint {
            rr: r * r * scale,
            tt: t * t * scale,
            rt: r * t * (1.0 + v),
            tr: r * t * (1.0 + v),
        }
    }

    fn dot_reflected(&self) -> f64 {
        self.rr + self.rt
    }

    fn laser_reflected_given(&self, dot_reflected: bool) -> f64 {
        let (same, other) = if dot_reflected { (self.rr, self.rt) } else { (self.tr, self.tt) };
        if same + other > 0.0 {
            same / (same + other)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Substream {
    Laser = 0,
    DotSignal = 1,
    DotBackground = 2,
    Routing = 3,
    Jitter = 4,
    DarkD2 = 5,
    DarkD3 = 6,
}

const SUBSTREAMS_PER_SEGMENT: u64 = 8;

fn substream_rng(seed: u64, segment: u32, purpose: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(segment as u64 * SUBSTREAMS_PER_SEGMENT + purpose as u64);
    rng
}

/// Homogeneous Poisson arrivals on `[start, end)`.
fn poisson_times(rate: f64, start: f64, end: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut out = Vec::with_capacity(((end - start) * rate * 1.05) as usize + 16);
    let mut t = start + gap.sample(rng);
    while t < end {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

/// Emission times of a driven two-level emitter: every photon is followed
/// by an exponential wait for re-excitation (rate P) and an exponential
/// radiative decay (rate e), with P + e = 1/τ_rad so that the
/// autocorrelation is exactly 1 − exp(−|τ|/τ_rad), and 1/P + 1/e = 1/rate.
/// The first interval starts in the stationary state.
fn emitter_times(rate: f64, tau_rad: f64, start: f64, end: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let k = 1.0 / tau_rad;
    let disc = (k * k - 4.0 * rate * k).max(0.0).sqrt();
    let pump = 0.5 * (k - disc);
    let emit = k - pump;
    let wait_pump = Exp::new(pump).expect("positive pump rate");
    let wait_emit = Exp::new(emit).expect("positive emission rate");

    let mut out = Vec::with_capacity(((end - start) * rate * 1.05) as usize + 16);
    // stationary probability of being in the ground state is rate/pump
    let mut t = start;
    if rng.random::<f64>() < rate / pump {
        t += wait_pump.sample(rng);
    }
    t += wait_emit.sample(rng);
    while t < end {
        out.push(t);
        t += wait_pump.sample(rng) + wait_emit.sample(rng);
    }
    out
}

struct DotPhoton {
    time: f64,
    background: bool,
}

fn merge_dot(signal: Vec<f64>, background: Vec<f64>) -> Vec<DotPhoton> {
    let mut out = Vec::with_capacity(signal.len() + background.len());
    let (mut i, mut j) = (0, 0);
    while i < signal.len() || j < background.len() {
        let take_signal = j >= background.len() || (i < signal.len() && signal[i] <= background[j]);
        if take_signal {
            out.push(DotPhoton {
                time: signal[i],
                background: false,
            });
            i += 1;
        } else {
            out.push(DotPhoton {
                time: background[j],
                background: true,
            });
            j += 1;
        }
    }
    out
}

/// For each laser photon, the index of the nearest dot photon within
/// `window`, if any.
fn nearest_partners(dots: &[DotPhoton], lasers: &[f64], window: f64) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(lasers.len());
    let mut j = 0;
    for &t in lasers {
        while j + 1 < dots.len() && dots[j + 1].time <= t {
            j += 1;
        }
        let mut best: Option<(usize, f64)> = None;
        for cand in [j, j + 1] {
            if let Some(d) = dots.get(cand) {
                let dist = (d.time - t).abs();
                if dist <= window && best.is_none_or(|(_, b)| dist < b) {
                    best = Some((cand, dist));
                }
            }
        }
        out.push(best.map(|(i, _)| i));
    }
    out
}

fn simulate_segment(cfg: &McRunConfig, segment: u32) -> Vec<Click> {
    let seg_len = cfg.duration_ps / cfg.segments as f64;
    let start = segment as f64 * seg_len;
    let end = if segment + 1 == cfg.segments {
        cfg.duration_ps
    } else {
        (segment + 1) as f64 * seg_len
    };
    let p = &cfg.params;
    let (dot_rate, laser_rate) = cfg.active_rates();
    let b = p.quantum.background_fraction();

    let lasers = poisson_times(laser_rate, start, end, &mut substream_rng(cfg.seed, segment, Substream::Laser));
    let signal = emitter_times(
        dot_rate * (1.0 - b),
        p.quantum.tau_rad_ps(),
        start,
        end,
        &mut substream_rng(cfg.seed, segment, Substream::DotSignal),
    );
    let background = poisson_times(
        dot_rate * b,
        start,
        end,
        &mut substream_rng(cfg.seed, segment, Substream::DotBackground),
    );
    let dots = merge_dot(signal, background);

    // routing
    let tau_int = p.interference_coherence_ps();
    let depth = p.interference.interference_depth();
    let window = PAIR_WINDOW_COHERENCE_TIMES * tau_int;
    let partners = if depth > 0.0 {
        nearest_partners(&dots, &lasers, window)
    } else {
        vec![None; lasers.len()]
    };
    let visibility = |dot: &DotPhoton, laser_t: f64| -> f64 {
        if dot.background && !cfg.background_interferes {
            0.0
        } else {
            depth * (-(dot.time - laser_t).abs() / tau_int).exp()
        }
    };
    let mut dot_v = vec![0.0f64; dots.len()];
    for (l, partner) in partners.iter().enumerate() {
        if let Some(d) = *partner {
            dot_v[d] = dot_v[d].max(visibility(&dots[d], lasers[l]));
        }
    }

    let mut route = substream_rng(cfg.seed, segment, Substream::Routing);
    let mut dot_reflected = Vec::with_capacity(dots.len());
    for v in &dot_v {
        let joint = PairJoint::new(&p.splitter, *v);
        dot_reflected.push(route.random::<f64>() < joint.dot_reflected());
    }
    let mut clicks = Vec::with_capacity(dots.len() + lasers.len());
    for (d, refl) in dots.iter().zip(&dot_reflected) {
        clicks.push(Click {
            time_ps: d.time,
            channel: if *refl { Channel::D2 } else { Channel::D3 },
            origin: Origin::Dot,
        });
    }
    for (l, partner) in partners.iter().enumerate() {
        let p_reflect = match *partner {
            Some(d) => PairJoint::new(&p.splitter, visibility(&dots[d], lasers[l])).laser_reflected_given(dot_reflected[d]),
            None => p.splitter.reflectance(),
        };
        let reflected = route.random::<f64>() < p_reflect;
        clicks.push(Click {
            time_ps: lasers[l],
            channel: if reflected { Channel::D3 } else { Channel::D2 },
            origin: Origin::Laser,
        });
    }

    // detector jitter
    let sigma = p.detector.detector_sigma_ps();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut rng = substream_rng(cfg.seed, segment, Substream::Jitter);
        for c in clicks.iter_mut() {
            c.time_ps += normal.sample(&mut rng);
        }
    }

    let dark = p.detector.dark_rate_per_ps();
    for (ch, purpose) in [(Channel::D2, Substream::DarkD2), (Channel::D3, Substream::DarkD3)] {
        let times = poisson_times(dark, start, end, &mut substream_rng(cfg.seed, segment, purpose));
        clicks.extend(times.into_iter().map(|t| Click {
            time_ps: t,
            channel: ch,
            origin: Origin::Dark,
        }));
    }

    clicks.retain(|c| c.time_ps >= 0.0 && c.time_ps <= cfg.duration_ps);
    clicks
}

/// Runs the simulation. Identical configurations give identical streams.
pub fn simulate(cfg: &McRunConfig) -> Result<TimestampStream> {
    cfg.validate()?;
    let segments: Vec<Vec<Click>> = (0..cfg.segments)
        .into_par_iter()
        .map(|s| simulate_segment(cfg, s))
        .collect();
    let clicks: Vec<Click> = segments.into_iter().flatten().collect();
    let mut stream = TimestampStream::new(clicks, cfg.duration_ps)?;
    stream.metadata.seed = Some(cfg.seed);
    stream.metadata.config_hash = Some(cfg.config_hash());
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::InterferenceConfig;

    fn balanced() -> BeamSplitter {
        BeamSplitter::balanced()
    }

    #[test]
    fn kernel_examples() {
        assert!(pair_kernel(0.0, &balanced(), 1.0, 285.0).abs() < 1e-15);
        let depth = InterferenceConfig::from_degrees(0.91, 0.0).unwrap().interference_depth();
        assert!((pair_kernel(0.0, &balanced(), depth, 285.0) - 0.086).abs() < 1e-4);
        assert!((pair_kernel(0.0, &balanced(), depth, 285.0) - 0.5 * (1.0 - 0.8281)).abs() < 1e-12);
        let orth = InterferenceConfig::from_degrees(0.6, 90.0).unwrap().interference_depth();
        for dt in [0.0, 100.0, -3000.0] {
            assert!((pair_kernel(dt, &balanced(), orth, 285.0) - 0.5).abs() < 1e-15);
        }
        assert_eq!(pair_kernel(0.0, &balanced(), 0.0, 285.0), 0.5);
    }

    #[test]
    fn joint_is_a_distribution() {
        for r in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let s = BeamSplitter::from_reflectance(r).unwrap();
            for v in [0.0, 0.3, 1.0] {
                let j = PairJoint::new(&s, v);
                let total = j.rr + j.rt + j.tr + j.tt;
                assert!((total - 1.0).abs() < 1e-12);
                assert!(j.rr >= 0.0 && j.tt >= 0.0);
                assert!((j.rr + j.tt - pair_kernel(0.0, &s, v, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn balanced_joint_preserves_marginals() {
        for v in [0.0, 0.5, 1.0] {
            let j = PairJoint::new(&balanced(), v);
            assert!((j.dot_reflected() - 0.5).abs() < 1e-15);
            let p_laser_r = 0.5 * j.laser_reflected_given(true) + 0.5 * j.laser_reflected_given(false);
            assert!((p_laser_r - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_emitter_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rate = 2e-5;
        let t = emitter_times(rate, 985.0, 0.0, 1e10, &mut rng);
        let n = t.len() as f64;
        assert!((n - rate * 1e10).abs() < 4.0 * n.sqrt(), "n={n}");
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn partner_search() {
        let dots: Vec<DotPhoton> = [10.0, 100.0]
            .iter()
            .map(|&t| DotPhoton { time: t, background: false })
            .collect();
        let p = nearest_partners(&dots, &[0.0, 50.0, 60.0, 95.0, 500.0], 45.0);
        assert_eq!(p, vec![Some(0), Some(0), Some(1), Some(1), None]);
    }

    #[test]
    fn config_validation() {
        let p = SystemParams::reference();
        assert!(McRunConfig::new(p, McMode::TwoSource, 1e-6, -1.0, 1).is_err());
        assert!(McRunConfig::new(p, McMode::TwoSource, -1e-6, 1e6, 1).is_err());
        assert!(matches!(
            McRunConfig::new(p, McMode::TwoSource, 1e-3, 1e13, 1),
            Err(Error::Overflow(_))
        ));
        assert!(McRunConfig::new(p, McMode::HbtDot, 1e-3, 1e6, 1).is_err());
        let ok = McRunConfig::new(p, McMode::TwoSource, 1e-6, 1e9, 1).unwrap();
        assert_eq!(ok.dot_rate_per_ps, 1e-6);
        assert!(ok.with_segments(0).validate().is_err());
        assert_eq!("two-source".parse::<McMode>().unwrap(), McMode::TwoSource);
        assert!("x".parse::<McMode>().is_err());
    }

    #[test]
    fn dark_counts_do_not_move_photons() {
        let p = SystemParams::reference();
        let cfg = McRunConfig::new(p, McMode::TwoSource, 1e-5, 1e8, 9).unwrap();
        let mut with_dark = cfg;
        with_dark.params.detector = crate::params::DetectorResponse::new(428.0, 1e-6).unwrap();
        let a = simulate(&cfg).unwrap();
        let b = simulate(&with_dark).unwrap();
        let photons = |s: &TimestampStream| -> Vec<Click> {
            s.clicks().iter().copied().filter(|c| c.origin != Origin::Dark).collect()
        };
        assert_eq!(photons(&a), photons(&b));
        assert!(b.filter_origin(Origin::Dark).len() > 100);
    }

    #[test]
    fn deterministic() {
        let cfg = McRunConfig::new(SystemParams::reference(), McMode::TwoSource, 1e-5, 1e9, 42)
            .unwrap()
            .with_segments(3);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&McRunConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.clicks(), c.clicks());
    }

    #[test]
    fn times_within_run() {
        let cfg = McRunConfig::new(SystemParams::reference(), McMode::TwoSource, 1e-5, 1e8, 5).unwrap();
        let s = simulate(&cfg).unwrap();
        assert!(s.clicks().iter().all(|c| (0.0..=1e8).contains(&c.time_ps)));
        for ch in [Channel::D2, Channel::D3] {
            assert!(s.channel_times(ch).windows(2).all(|w| w[1] > w[0]));
        }
    }
}
