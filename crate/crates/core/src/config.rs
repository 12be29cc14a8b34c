//! Flat `key = value` configuration files.
//!
//! Lines starting with `#` are comments, trailing `# ...` is stripped, keys
//! may appear at most once and unknown keys are rejected. Keys that are not
//! present keep the value of the reference profile.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{
    BeamSplitter, CoherentSourceParams, DetectorResponse, InterferenceConfig,
    QuantumSourceParams, SystemParams,
};

/// Version of the key set understood by [`parse`].
pub const SCHEMA_VERSION: u32 = 1;

/// Bundled reference profile (with comments).
pub const PAPER_DEFAULTS: &str = include_str!("../profiles/paper-defaults.cfg");

pub const KEYS: [&str; 11] = [
    "eta",
    "alpha_sq",
    "tau_coh_ps",
    "tau_rad_ps",
    "background_fraction",
    "tau_coh_laser_ps",
    "pair_fwhm_ps",
    "dark_rate_per_ps",
    "gamma",
    "phi_deg",
    "R",
];

pub fn parse(text: &str) -> Result<SystemParams> {
    let base = SystemParams::reference();
    let mut values: [Option<f64>; 11] = [None; 11];

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let slot = KEYS.iter().position(|k| *k == key).ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("unknown key `{key}`"),
        })?;
        if values[slot].is_some() {
            return Err(Error::Config {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        let v: f64 = value.parse().map_err(|_| Error::Config {
            line: line_no,
            message: format!("`{key}`: cannot parse `{value}` as a number"),
        })?;
        values[slot] = Some(v);
    }

    let get = |i: usize, fallback: f64| values[i].unwrap_or(fallback);
    let q = &base.quantum;
    let c = &base.coherent;
    let quantum = QuantumSourceParams::new(
        get(0, q.eta()),
        get(2, q.tau_coh_ps()),
        get(3, q.tau_rad_ps()),
        get(4, q.background_fraction()),
    )?;
    let coherent = CoherentSourceParams::new(get(1, c.alpha_sq()), get(5, c.tau_coh_laser_ps()))?;
    let detector = DetectorResponse::new(
        get(6, base.detector.pair_fwhm_ps()),
        get(7, base.detector.dark_rate_per_ps()),
    )?;
    let interference =
        InterferenceConfig::from_degrees(get(8, base.interference.gamma()), get(9, base.interference.phi_deg()))?;
    let splitter = BeamSplitter::from_reflectance(get(10, base.splitter.reflectance()))?;
    if coherent.outside_weak_regime() {
        log::warn!(
            "alpha_sq = {} is outside the weak-laser regime (> 0.1)",
            coherent.alpha_sq()
        );
    }

    Ok(SystemParams {
        quantum,
        coherent,
        splitter,
        detector,
        interference,
    })
}

pub fn load(path: &Path) -> Result<SystemParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

/// Writes every key; `{}` on f64 is the shortest exactly-round-tripping form.
pub fn format(p: &SystemParams) -> String {
    let mut out = String::new();
    let vals = [
        p.quantum.eta(),
        p.coherent.alpha_sq(),
        p.quantum.tau_coh_ps(),
        p.quantum.tau_rad_ps(),
        p.quantum.background_fraction(),
        p.coherent.tau_coh_laser_ps(),
        p.detector.pair_fwhm_ps(),
        p.detector.dark_rate_per_ps(),
        p.interference.gamma(),
        p.interference.phi_deg(),
        p.splitter.reflectance(),
    ];
    for (k, v) in KEYS.iter().zip(vals) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_profile_is_reference() {
        let p = parse(PAPER_DEFAULTS).unwrap();
        assert_eq!(p, SystemParams::reference());
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse("# header\n\n  gamma = 0.5   # trailing\nphi_deg=90\n").unwrap();
        assert_eq!(p.interference.gamma(), 0.5);
        assert!((p.interference.phi_rad() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_error() {
        let err = parse("eta = 1\nfoo = 2\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed() {
        assert!(matches!(parse("eta = 1\neta = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse("eta 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse("eta = abc"), Err(Error::Config { .. })));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(matches!(
            parse("background_fraction = 1.5"),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(parse("R = 2"), Err(Error::InvalidParameter { .. })));
        assert!(matches!(parse("tau_coh_ps = nan"), Err(Error::InvalidParameter { .. })));
    }

    fn rel_eq(a: f64, b: f64) -> bool {
        a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
    }

    proptest! {
        #[test]
        fn round_trip(
            eta in 0.0..1.0f64,
            alpha in 1e-6..1.0f64,
            tc in 1.0..1e4f64,
            tr in 1.0..1e4f64,
            b in 0.0..0.99f64,
            fwhm in 0.0..2000.0f64,
            gamma in 0.0..=1.0f64,
            phi in -180.0..180.0f64,
            r in 0.0..=1.0f64,
        ) {
            let text = format!(
                "eta={eta}\nalpha_sq={alpha}\ntau_coh_ps={tc}\ntau_rad_ps={tr}\n\
                 background_fraction={b}\npair_fwhm_ps={fwhm}\ngamma={gamma}\nphi_deg={phi}\nR={r}\n"
            );
            let p = parse(&text).unwrap();
            let again = parse(&format(&p)).unwrap();
            prop_assert_eq!(p.quantum, again.quantum);
            prop_assert_eq!(p.coherent, again.coherent);
            prop_assert_eq!(p.detector, again.detector);
            prop_assert_eq!(p.splitter, again.splitter);
            prop_assert_eq!(p.interference, again.interference);
            prop_assert!(rel_eq(again.interference.phi_deg(), phi));
        }
    }
}
