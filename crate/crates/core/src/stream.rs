//! Detector click streams and their file formats.
//!
//! Binary layout (little-endian): magic `PHTS`, `u16` version, then one
//! record per click. Version 1 records are `(u8 channel, f64 time_ps)`;
//! version 2 appends a `u8` origin label. Channels are encoded as 2 and 3.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PHTS";
pub const VERSION_PLAIN: u16 = 1;
pub const VERSION_TAGGED: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    D2,
    D3,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::D2 => 2,
            Channel::D3 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            2 => Ok(Channel::D2),
            3 => Ok(Channel::D3),
            other => Err(Error::Format(format!("unknown channel code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::D2 => "D2",
            Channel::D3 => "D3",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "D2" | "2" => Ok(Channel::D2),
            "D3" | "3" => Ok(Channel::D3),
            other => Err(Error::Format(format!("unknown channel `{other}`"))),
        }
    }
}

/// Where a click came from. Only the simulator knows; external data is
/// `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Dot,
    Laser,
    Dark,
    Unknown,
}

impl Origin {
    fn code(self) -> u8 {
        match self {
            Origin::Dot => 0,
            Origin::Laser => 1,
            Origin::Dark => 2,
            Origin::Unknown => 255,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Origin::Dot),
            1 => Ok(Origin::Laser),
            2 => Ok(Origin::Dark),
            255 => Ok(Origin::Unknown),
            other => Err(Error::Format(format!("unknown origin code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Origin::Dot => "dot",
            Origin::Laser => "laser",
            Origin::Dark => "dark",
            Origin::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Origin::Dot),
            "laser" => Ok(Origin::Laser),
            "dark" => Ok(Origin::Dark),
            "unknown" => Ok(Origin::Unknown),
            other => Err(Error::Format(format!("unknown origin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub time_ps: f64,
    pub channel: Channel,
    pub origin: Origin,
}

impl Click {
    fn sort_key(a: &Click, b: &Click) -> std::cmp::Ordering {
        a.time_ps
            .total_cmp(&b.time_ps)
            .then(a.channel.cmp(&b.channel))
            .then(a.origin.cmp(&b.origin))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub seed: Option<u64>,
    pub config_hash: Option<u64>,
}

/// Time-ordered clicks on the two detectors behind the final splitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampStream {
    clicks: Vec<Click>,
    duration_ps: f64,
    pub metadata: StreamMetadata,
}

impl TimestampStream {
    /// Sorts the clicks and drops exact duplicates on the same channel.
    pub fn new(mut clicks: Vec<Click>, duration_ps: f64) -> Result<Self> {
        if !(duration_ps > 0.0 && duration_ps.is_finite()) {
            return Err(Error::invalid("duration_ps", format!("must be finite and > 0, got {duration_ps}")));
        }
        if let Some(c) = clicks
            .iter()
            .find(|c| !(c.time_ps >= 0.0 && c.time_ps <= duration_ps))
        {
            return Err(Error::invalid(
                "time_ps",
                format!("click at {} outside [0, {duration_ps}]", c.time_ps),
            ));
        }
        clicks.sort_unstable_by(Click::sort_key);
        clicks.dedup_by(|b, a| a.time_ps == b.time_ps && a.channel == b.channel);
        Ok(TimestampStream {
            clicks,
            duration_ps,
            metadata: StreamMetadata::default(),
        })
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn duration_ps(&self) -> f64 {
        self.duration_ps
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn count(&self, ch: Channel) -> usize {
        self.clicks.iter().filter(|c| c.channel == ch).count()
    }

    /// Sorted click times on one channel.
    pub fn channel_times(&self, ch: Channel) -> Vec<f64> {
        self.clicks
            .iter()
            .filter(|c| c.channel == ch)
            .map(|c| c.time_ps)
            .collect()
    }

    /// Keeps only clicks with the given origin.
    pub fn filter_origin(&self, origin: Origin) -> TimestampStream {
        TimestampStream {
            clicks: self.clicks.iter().copied().filter(|c| c.origin == origin).collect(),
            duration_ps: self.duration_ps,
            metadata: self.metadata.clone(),
        }
    }

    /// Same clicks with D2 and D3 exchanged.
    pub fn swap_channels(&self) -> TimestampStream {
        let clicks = self
            .clicks
            .iter()
            .map(|c| Click {
                channel: match c.channel {
                    Channel::D2 => Channel::D3,
                    Channel::D3 => Channel::D2,
                },
                ..*c
            })
            .collect();
        TimestampStream::new(clicks, self.duration_ps).expect("swapping keeps a valid stream")
    }

    pub fn is_tagged(&self) -> bool {
        self.clicks.iter().any(|c| c.origin != Origin::Unknown)
    }

    pub fn write_binary<W: Write>(&self, mut w: W, tagged: bool) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let version = if tagged { VERSION_TAGGED } else { VERSION_PLAIN };
        w.write_all(&version.to_le_bytes())?;
        for c in &self.clicks {
            w.write_all(&[c.channel.code()])?;
            w.write_all(&c.time_ps.to_le_bytes())?;
            if tagged {
                w.write_all(&[c.origin.code()])?;
            }
        }
        w.flush()
    }

    /// Reads the binary format. The file does not record the acquisition
    /// length, so `duration_ps` defaults to the last click time.
    pub fn read_binary<R: Read>(mut r: R, duration_ps: Option<f64>) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("read failed: {e}")))?;
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing PHTS header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        let rec = match version {
            VERSION_PLAIN => 9,
            VERSION_TAGGED => 10,
            v => return Err(Error::Format(format!("unsupported PHTS version {v}"))),
        };
        let body = &bytes[6..];
        if body.len() % rec != 0 {
            return Err(Error::Format("truncated PHTS record".into()));
        }
        let mut clicks = Vec::with_capacity(body.len() / rec);
        for chunk in body.chunks_exact(rec) {
            let channel = Channel::from_code(chunk[0])?;
            let time_ps = f64::from_le_bytes(chunk[1..9].try_into().expect("8 bytes"));
            let origin = if rec == 10 {
                Origin::from_code(chunk[9])?
            } else {
                Origin::Unknown
            };
            clicks.push(Click {
                time_ps,
                channel,
                origin,
            });
        }
        let duration = duration_ps.unwrap_or_else(|| clicks.iter().map(|c| c.time_ps).fold(0.0, f64::max));
        Self::new(clicks, duration)
    }

    /// CSV `time_ps,channel[,origin]`.
    pub fn to_csv(&self, tagged: bool) -> String {
        let mut out = String::with_capacity(self.clicks.len() * 24);
        out.push_str(if tagged { "time_ps,channel,origin\n" } else { "time_ps,channel\n" });
        for c in &self.clicks {
            if tagged {
                let _ = writeln!(out, "{},{},{}", c.time_ps, c.channel.name(), c.origin.name());
            } else {
                let _ = writeln!(out, "{},{}", c.time_ps, c.channel.name());
            }
        }
        out
    }

    pub fn from_csv(text: &str, duration_ps: Option<f64>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty stream file".into()))?;
        let tagged = match header.trim() {
            "time_ps,channel" => false,
            "time_ps,channel,origin" => true,
            other => return Err(Error::Format(format!("unexpected header `{other}`"))),
        };
        let mut clicks = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut f = line.split(',').map(str::trim);
            let bad = || Error::Format(format!("row {}: `{line}`", i + 2));
            let time_ps: f64 = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let channel = Channel::parse(f.next().ok_or_else(bad)?)?;
            let origin = if tagged {
                Origin::parse(f.next().ok_or_else(bad)?)?
            } else {
                Origin::Unknown
            };
            if f.next().is_some() {
                return Err(bad());
            }
            clicks.push(Click {
                time_ps,
                channel,
                origin,
            });
        }
        let duration = duration_ps.unwrap_or_else(|| clicks.iter().map(|c| c.time_ps).fold(0.0, f64::max));
        Self::new(clicks, duration)
    }
}
