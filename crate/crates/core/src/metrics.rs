//! Distortion and bandwidth measurement.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::exec::Execution;
use crate::frameio::{Frame, VideoSequence};
use crate::{Error, Result};

pub const PEAK: f64 = 255.0;
pub const BITS_PER_MBIT: f64 = 1e6;

/// PSNR in decibels. Identical frames give [`PsnrDb::INFINITE`], which
/// orders above every finite value and prints as `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrDb(f64);

impl PsnrDb {
    pub const INFINITE: PsnrDb = PsnrDb(f64::INFINITY);

    pub fn finite(db: f64) -> Result<Self> {
        if !db.is_finite() || db < 0.0 {
            return Err(Error::Domain(format!("PSNR {db} must be finite and >= 0")));
        }
        Ok(PsnrDb(db))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Six-decimal rendering used in CSV output; `inf` for identical inputs.
    pub fn to_fixed(self) -> String {
        if self.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.6}", self.0)
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(PsnrDb::INFINITE);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Invalid(format!("bad PSNR value `{s}`")))?;
        PsnrDb::finite(v)
    }
}

impl Eq for PsnrDb {}

impl PartialOrd for PsnrDb {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PsnrDb {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for PsnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.2}", self.0)
        }
    }
}

/// Finite values serialize as JSON numbers, infinity as the string `"inf"`.
impl Serialize for PsnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

fn check_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn sum_squared_error(a: &Frame, b: &Frame) -> u64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_shape(a, b)?;
    Ok(sum_squared_error(a, b) as f64 / a.pixels().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> PsnrDb {
    if mse == 0.0 {
        PsnrDb::INFINITE
    } else {
        PsnrDb(10.0 * (PEAK * PEAK / mse).log10())
    }
}

pub fn psnr(a: &Frame, b: &Frame) -> Result<PsnrDb> {
    mse(a, b).map(psnr_from_mse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragePsnr {
    pub value: PsnrDb,
    pub frames: usize,
    /// Identical frames left out of the mean because finite values exist.
    pub excluded_infinite: usize,
}

/// Mean of the finite entries; infinite only when every entry is.
pub fn mean_psnr(values: &[PsnrDb]) -> Result<AveragePsnr> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no frames to average"));
    }
    let finite: Vec<f64> = values.iter().filter(|p| !p.is_infinite()).map(|p| p.0).collect();
    let value = if finite.is_empty() {
        PsnrDb::INFINITE
    } else {
        PsnrDb(finite.iter().sum::<f64>() / finite.len() as f64)
    };
    Ok(AveragePsnr {
        value,
        frames: values.len(),
        excluded_infinite: if finite.is_empty() { 0 } else { values.len() - finite.len() },
    })
}

pub fn per_frame_psnr(orig: &VideoSequence, recon: &VideoSequence, exec: Execution) -> Result<Vec<PsnrDb>> {
    if orig.len() != recon.len() {
        return Err(Error::Shape(format!("{} frames vs {} frames", orig.len(), recon.len())));
    }
    let pairs: Vec<(&Frame, &Frame)> = orig.frames().iter().zip(recon.frames()).collect();
    exec.try_map(&pairs, |(a, b)| psnr(a, b))
}

pub fn average_psnr(orig: &VideoSequence, recon: &VideoSequence) -> Result<AveragePsnr> {
    average_psnr_with(orig, recon, Execution::default())
}

pub fn average_psnr_with(orig: &VideoSequence, recon: &VideoSequence, exec: Execution) -> Result<AveragePsnr> {
    if orig.is_empty() && recon.is_empty() {
        return Err(Error::EmptyInput("no frames to average"));
    }
    mean_psnr(&per_frame_psnr(orig, recon, exec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthSample {
    pub size_bits: u64,
    pub duration_s: f64,
    pub bandwidth_mbps: f64,
}

/// `S / T` in Mbit/s with 1 Mbit = 10^6 bits.
pub fn required_bandwidth(size_bits: u64, duration_s: f64) -> Result<BandwidthSample> {
    if duration_s.is_nan() || duration_s <= 0.0 || duration_s.is_infinite() {
        return Err(Error::Domain(format!("duration {duration_s} must be > 0")));
    }
    Ok(BandwidthSample {
        size_bits,
        duration_s,
        // one rounding step: exact when both operands are representable
        bandwidth_mbps: size_bits as f64 / (BITS_PER_MBIT * duration_s),
    })
}
