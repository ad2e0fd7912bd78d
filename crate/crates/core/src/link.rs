//! Discrete-event model of the camera → edge uplink.
//!
//! Frames are produced every `1 / fps` seconds, coded instantly, placed in a
//! FIFO buffer and sent over a link of fixed capacity one at a time. A frame
//! occupies the buffer until its last bit has left. Time is kept in integer
//! nanoseconds so that events which coincide analytically also coincide in
//! the simulation; a completion and a production at the same instant are
//! processed completion first.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use crate::codec::{decode_frame, encode_frame, QualityLevel};
use crate::detector::DetectorProfile;
use crate::exec::Execution;
use crate::frameio::{Frame, VideoSequence};
use crate::metrics::{mean_psnr, psnr, PsnrDb, BITS_PER_MBIT};
use crate::{Error, Result};

pub const DEFAULT_STEP: u8 = 3;

pub const TRACE_CSV_HEADER: &str = "frame,produced_t,delivered_t,latency_s,crf,psnr_db,size_bits,dropped";

const NS_PER_S: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkConfig {
    pub capacity_mbps: f64,
    pub fps: f64,
    pub queue_limit_bits: Option<u64>,
    pub latency_budget_s: f64,
}

impl LinkConfig {
    pub fn new(capacity_mbps: f64, fps: f64, queue_limit_bits: Option<u64>, latency_budget_s: f64) -> Result<Self> {
        let cfg = LinkConfig {
            capacity_mbps,
            fps,
            queue_limit_bits,
            latency_budget_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("capacity_mbps", self.capacity_mbps),
            ("fps", self.fps),
            ("latency_budget_s", self.latency_budget_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn production_ns(&self, k: usize) -> u64 {
        (k as f64 * NS_PER_S / self.fps).round() as u64
    }

    fn transmission_ns(&self, bits: u64) -> u64 {
        (bits as f64 * (NS_PER_S / BITS_PER_MBIT) / self.capacity_mbps).round() as u64
    }
}

/// Smallest capacity (Mbit/s) that keeps the buffer bounded for frames of
/// a fixed size: `fps * bits / 10^6`.
pub fn stability_boundary(fps: f64, frame_size_bits: u64) -> f64 {
    fps * frame_size_bits as f64 / BITS_PER_MBIT
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptivePolicy {
    pub psnr_floor_db: f64,
    /// crf increase when the last latency exceeded the budget.
    pub step_up: u8,
    /// crf decrease when the last latency was under half the budget.
    pub step_down: u8,
    pub start: QualityLevel,
}

impl AdaptivePolicy {
    pub fn with_floor(psnr_floor_db: f64) -> Self {
        AdaptivePolicy {
            psnr_floor_db,
            step_up: DEFAULT_STEP,
            step_down: DEFAULT_STEP,
            start: QualityLevel::MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerPolicy {
    Fixed(QualityLevel),
    Adaptive(AdaptivePolicy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame: usize,
    pub produced_t: f64,
    pub delivered_t: Option<f64>,
    pub latency_s: Option<f64>,
    pub crf: Option<QualityLevel>,
    pub psnr_db: Option<PsnrDb>,
    pub size_bits: u64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamReport {
    pub produced_frames: usize,
    pub delivered_frames: usize,
    pub dropped_frames: usize,
    /// Zero when nothing was delivered.
    pub mean_latency_s: f64,
    pub max_latency_s: f64,
    pub mean_crf_used: f64,
    pub avg_psnr_db: Option<PsnrDb>,
    pub achieved_accuracy_estimate: Option<f64>,
    /// Most frames held in the buffer right after a production event.
    pub max_queue_frames: usize,
    pub max_queue_bits: u64,
    /// Delivered frames below the adaptive floor (only possible when the
    /// floor exceeds what crf 0 achieves).
    pub floor_violations: usize,
    #[serde(skip)]
    pub trace: Vec<FrameTrace>,
}

impl StreamReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for t in &self.trace {
            writeln!(
                out,
                "{},{:.6},{},{},{},{},{},{}",
                t.frame,
                t.produced_t,
                opt(t.delivered_t),
                opt(t.latency_s),
                t.crf.map(|c| c.to_string()).unwrap_or_default(),
                t.psnr_db.map(|p| p.to_fixed()).unwrap_or_default(),
                t.size_bits,
                u8::from(t.dropped),
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// What the encoder hands the link for one frame.
#[derive(Debug, Clone, Copy)]
struct Coded {
    crf: Option<QualityLevel>,
    psnr: Option<PsnrDb>,
    bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    // completions sort first at equal timestamps
    Completion,
    Production,
}

/// Core event loop. `source(k, last_latency)` codes frame `k` given the
/// latency of the most recently delivered frame.
fn run_link<F>(frames: usize, cfg: &LinkConfig, floor: Option<f64>, mut source: F) -> StreamReport
where
    F: FnMut(usize, Option<f64>) -> Coded,
{
    let mut events: BinaryHeap<Reverse<(u64, EventKind, usize)>> = BinaryHeap::new();
    for k in 0..frames {
        events.push(Reverse((cfg.production_ns(k), EventKind::Production, k)));
    }

    let mut trace: Vec<FrameTrace> = Vec::with_capacity(frames);
    let mut waiting: VecDeque<usize> = VecDeque::new();
    let mut in_service: Option<usize> = None;
    let mut buffered_bits = 0u64;
    let mut last_latency: Option<f64> = None;
    let (mut max_queue_frames, mut max_queue_bits) = (0usize, 0u64);

    let start_service = |k: usize, now: u64, trace: &[FrameTrace], events: &mut BinaryHeap<_>| {
        let done = now + cfg.transmission_ns(trace[k].size_bits);
        events.push(Reverse((done, EventKind::Completion, k)));
    };

    while let Some(Reverse((now, kind, k))) = events.pop() {
        match kind {
            EventKind::Production => {
                let coded = source(k, last_latency);
                let dropped = cfg
                    .queue_limit_bits
                    .is_some_and(|limit| buffered_bits + coded.bits > limit);
                trace.push(FrameTrace {
                    frame: k,
                    produced_t: now as f64 / NS_PER_S,
                    delivered_t: None,
                    latency_s: None,
                    crf: coded.crf,
                    psnr_db: coded.psnr,
                    size_bits: coded.bits,
                    dropped,
                });
                if dropped {
                    continue;
                }
                buffered_bits += coded.bits;
                if in_service.is_none() {
                    in_service = Some(k);
                    start_service(k, now, &trace, &mut events);
                } else {
                    waiting.push_back(k);
                }
                max_queue_frames = max_queue_frames.max(waiting.len() + 1);
                max_queue_bits = max_queue_bits.max(buffered_bits);
            }
            EventKind::Completion => {
                let t = &mut trace[k];
                let delivered = now as f64 / NS_PER_S;
                let latency = (now - cfg.production_ns(k)) as f64 / NS_PER_S;
                t.delivered_t = Some(delivered);
                t.latency_s = Some(latency);
                buffered_bits -= t.size_bits;
                last_latency = Some(latency);
                in_service = waiting.pop_front();
                if let Some(next) = in_service {
                    start_service(next, now, &trace, &mut events);
                }
            }
        }
    }

    summarize(trace, floor, max_queue_frames, max_queue_bits)
}

fn summarize(trace: Vec<FrameTrace>, floor: Option<f64>, max_queue_frames: usize, max_queue_bits: u64) -> StreamReport {
    let delivered: Vec<&FrameTrace> = trace.iter().filter(|t| !t.dropped).collect();
    let latencies: Vec<f64> = delivered.iter().filter_map(|t| t.latency_s).collect();
    let n = delivered.len();
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let crfs: Vec<f64> = delivered.iter().filter_map(|t| t.crf.map(|c| c.crf() as f64)).collect();
    let psnrs: Vec<PsnrDb> = delivered.iter().filter_map(|t| t.psnr_db).collect();
    let floor_violations = floor.map_or(0, |f| psnrs.iter().filter(|p| p.db() < f).count());
    StreamReport {
        produced_frames: trace.len(),
        delivered_frames: n,
        dropped_frames: trace.len() - n,
        mean_latency_s: mean(&latencies),
        max_latency_s: latencies.iter().copied().fold(0.0, f64::max),
        mean_crf_used: mean(&crfs),
        avg_psnr_db: mean_psnr(&psnrs).ok().map(|a| a.value),
        achieved_accuracy_estimate: None,
        max_queue_frames,
        max_queue_bits,
        floor_violations,
        trace,
    }
}

/// Link behaviour for pre-sized frames, with no codec in the loop.
pub fn simulate_sizes(sizes_bits: &[u64], cfg: &LinkConfig) -> Result<StreamReport> {
    cfg.validate()?;
    Ok(run_link(sizes_bits.len(), cfg, None, |k, _| Coded {
        crf: None,
        psnr: None,
        bits: sizes_bits[k],
    }))
}

fn code_frame(frame: &Frame, q: QualityLevel) -> Result<Coded> {
    let cf = encode_frame(frame, q);
    let decoded = decode_frame(&cf)?;
    Ok(Coded {
        crf: Some(q),
        psnr: Some(psnr(frame, &decoded)?),
        bits: cf.size_bits(),
    })
}

/// Streams `seq` through the link under `policy`. When a profile is given,
/// the report carries its accuracy at the delivered frames' mean PSNR.
pub fn simulate_stream(
    seq: &VideoSequence,
    cfg: &LinkConfig,
    policy: ControllerPolicy,
    profile: Option<&DetectorProfile>,
) -> Result<StreamReport> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptyInput("cannot stream an empty sequence"));
    }
    let mut report = match policy {
        ControllerPolicy::Fixed(q) => {
            // the choice never depends on link state, so code everything up front
            let coded = Execution::default().try_map(seq.frames(), |f| code_frame(f, q))?;
            run_link(seq.len(), cfg, None, |k, _| coded[k])
        }
        ControllerPolicy::Adaptive(p) => {
            if !p.psnr_floor_db.is_finite() {
                return Err(Error::Config(format!("psnr floor {}", p.psnr_floor_db)));
            }
            let mut current = p.start;
            let mut failure = None;
            let report = run_link(seq.len(), cfg, Some(p.psnr_floor_db), |k, last_latency| {
                if let Some(l) = last_latency {
                    if l > cfg.latency_budget_s {
                        current = current.offset(p.step_up as i32);
                    } else if l < cfg.latency_budget_s / 2.0 {
                        current = current.offset(-(p.step_down as i32));
                    }
                }
                loop {
                    match code_frame(&seq.frames()[k], current) {
                        Ok(c) if c.psnr.is_some_and(|v| v.db() < p.psnr_floor_db) && current.crf() > 0 => {
                            current = current.offset(-1);
                        }
                        Ok(c) => return c,
                        Err(e) => {
                            failure.get_or_insert(e);
                            return Coded { crf: Some(current), psnr: None, bits: 0 };
                        }
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            report
        }
    };
    if let (Some(profile), Some(avg)) = (profile, report.avg_psnr_db) {
        report.achieved_accuracy_estimate = Some(profile.accuracy_at(avg));
    }
    Ok(report)
}
