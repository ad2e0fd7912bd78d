//! Raster and annotation I/O.
//!
//! Supported containers:
//!
//! - YUV4MPEG2 with `Cmono` 8-bit luma. Header params other than `W`, `H`,
//!   `F`, `C` (`I`, `A`, `X`) are accepted and ignored. The writer always
//!   emits `YUV4MPEG2 W<w> H<h> F<num>:<den> Cmono\n`.
//! - Binary PGM (`P5`, maxval 255).
//! - JSON Lines box files, one `{"frame": n, "boxes": [...]}` object per line.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::boxes::BoundingBox;
use crate::{Error, Result};

pub const MAX_DIM: u32 = u16::MAX as u32;

/// Single 8-bit luma plane, row-major. Dimensions are limited to 16 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
            return Err(Error::Invalid(format!("frame dimensions {width}x{height}")));
        }
        if pixels.len() as u64 != width as u64 * height as u64 {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// Frame rate as an unreduced rational, so `F30000:1001` survives a round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Invalid(format!("frame rate {num}:{den}")));
        }
        Ok(Fps { num, den })
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSequence {
    width: u32,
    height: u32,
    fps: Fps,
    frames: Vec<Frame>,
}

impl VideoSequence {
    /// An empty sequence still carries dimensions, since Y4M headers do.
    pub fn new(width: u32, height: u32, fps: Fps, frames: Vec<Frame>) -> Result<Self> {
        if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
            return Err(Error::Invalid(format!("sequence dimensions {width}x{height}")));
        }
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != width || f.height != height)
        {
            return Err(Error::Shape(format!(
                "frame {i} is {}x{}, sequence is {width}x{height}",
                f.width, f.height
            )));
        }
        Ok(VideoSequence {
            width,
            height,
            fps,
            frames,
        })
    }

    pub fn from_frames(fps: Fps, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyInput("no frames"))?;
        let (w, h) = (first.width, first.height);
        VideoSequence::new(w, h, fps, frames)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fps(&self) -> Fps {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Playback time in seconds: frame count / fps.
    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 * self.fps.den as f64 / self.fps.num as f64
    }

    pub fn raw_size_bits(&self) -> u64 {
        self.frames.len() as u64 * self.width as u64 * self.height as u64 * 8
    }
}

const Y4M_SIGNATURE: &str = "YUV4MPEG2";

fn parse_dim(token: &str) -> Result<u32> {
    match token[1..].parse::<u32>() {
        Ok(v) if v > 0 && v <= MAX_DIM => Ok(v),
        _ => Err(Error::Format {
            token: token.to_string(),
        }),
    }
}

pub fn read_y4m(bytes: &[u8]) -> Result<VideoSequence> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or(Error::Format {
        token: "<missing header newline>".into(),
    })?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format {
        token: "<non-utf8 header>".into(),
    })?;
    let mut tokens = header.split(' ');
    match tokens.next() {
        Some(Y4M_SIGNATURE) => {}
        other => {
            return Err(Error::Format {
                token: other.unwrap_or("").to_string(),
            })
        }
    }

    let (mut width, mut height, mut fps, mut colorspace) = (None, None, None, None);
    for token in tokens {
        let Some(tag) = token.chars().next() else {
            return Err(Error::Format {
                token: "<empty parameter>".into(),
            });
        };
        match tag {
            'W' => width = Some(parse_dim(token)?),
            'H' => height = Some(parse_dim(token)?),
            'F' => {
                let bad = || Error::Format {
                    token: token.to_string(),
                };
                let (n, d) = token[1..].split_once(':').ok_or_else(bad)?;
                let n = n.parse::<u32>().map_err(|_| bad())?;
                let d = d.parse::<u32>().map_err(|_| bad())?;
                fps = Some(Fps::new(n, d).map_err(|_| bad())?);
            }
            'C' => colorspace = Some(&token[1..]),
            'I' | 'A' | 'X' => {}
            _ => {
                return Err(Error::Format {
                    token: token.to_string(),
                })
            }
        }
    }
    let missing = |name: &str| Error::Format {
        token: format!("<missing {name}>"),
    };
    let width = width.ok_or_else(|| missing("W"))?;
    let height = height.ok_or_else(|| missing("H"))?;
    let fps = fps.ok_or_else(|| missing("F"))?;
    match colorspace {
        Some("mono") => {}
        // absent C means 4:2:0
        Some(other) => return Err(Error::Unsupported(format!("colorspace C{other}"))),
        None => return Err(Error::Unsupported("colorspace C420 (default)".into())),
    }

    let frame_len = width as usize * height as usize;
    let mut frames = Vec::new();
    let mut pos = nl + 1;
    while pos < bytes.len() {
        let index = frames.len();
        let rest = &bytes[pos..];
        let line_end = rest.iter().position(|&b| b == b'\n').ok_or(Error::Truncated { frame: index })?;
        let marker = &rest[..line_end];
        if !(marker == b"FRAME" || marker.starts_with(b"FRAME ")) {
            return Err(Error::Format {
                token: String::from_utf8_lossy(&marker[..marker.len().min(16)]).into_owned(),
            });
        }
        pos += line_end + 1;
        if bytes.len() - pos < frame_len {
            return Err(Error::Truncated { frame: index });
        }
        frames.push(Frame {
            width,
            height,
            pixels: bytes[pos..pos + frame_len].to_vec(),
        });
        pos += frame_len;
    }
    VideoSequence::new(width, height, fps, frames)
}

pub fn write_y4m(seq: &VideoSequence) -> Vec<u8> {
    let header = format!(
        "{Y4M_SIGNATURE} W{} H{} F{}:{} Cmono\n",
        seq.width, seq.height, seq.fps.num, seq.fps.den
    );
    let frame_len = seq.width as usize * seq.height as usize;
    let mut out = Vec::with_capacity(header.len() + seq.len() * (frame_len + 6));
    out.extend_from_slice(header.as_bytes());
    for f in &seq.frames {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&f.pixels);
    }
    out
}

/// Pulls whitespace-separated header fields out of a PGM, skipping `#` comments.
struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmHeader<'a> {
    fn next_token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format {
                token: "<truncated pgm header>".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Format {
            token: "<non-ascii pgm header>".into(),
        })
    }

    fn next_number(&mut self) -> Result<u32> {
        let t = self.next_token()?;
        t.parse().map_err(|_| Error::Format {
            token: t.to_string(),
        })
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut header = PgmHeader { bytes, pos: 0 };
    match header.next_token()? {
        "P5" => {}
        "P2" => return Err(Error::Unsupported("ascii PGM (P2)".into())),
        other => {
            return Err(Error::Format {
                token: other.to_string(),
            })
        }
    }
    let width = header.next_number()?;
    let height = header.next_number()?;
    let maxval = header.next_number()?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!("PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates maxval from the raster
    let start = header.pos + 1;
    let len = width as usize * height as usize;
    if bytes.len() < start || bytes.len() - start < len {
        return Err(Error::Truncated { frame: 0 });
    }
    Frame::new(width, height, bytes[start..start + len].to_vec())
}

pub fn write_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

/// Box list for one frame, used for both ground truth and detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub boxes: Vec<BoundingBox>,
}

impl FrameAnnotation {
    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        for b in &self.boxes {
            if !b.within(width as f64, height as f64) {
                return Err(Error::Invalid(format!(
                    "frame {}: box ({}, {}, {}, {}) outside {width}x{height}",
                    self.frame_index, b.x, b.y, b.w, b.h
                )));
            }
        }
        Ok(())
    }
}

fn read_jsonl(bytes: &[u8], require_conf: bool) -> Result<Vec<FrameAnnotation>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out: Vec<FrameAnnotation> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.split('\n').enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ann: FrameAnnotation = serde_json::from_str(line).map_err(|e| {
            if e.is_data() {
                Error::Schema {
                    line: line_no,
                    msg: e.to_string(),
                }
            } else {
                Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                }
            }
        })?;
        for (j, b) in ann.boxes.iter().enumerate() {
            if require_conf && b.conf.is_none() {
                return Err(Error::Schema {
                    line: line_no,
                    msg: format!("box {j} has no conf"),
                });
            }
            b.validate().map_err(|e| Error::Schema {
                line: line_no,
                msg: format!("box {j}: {e}"),
            })?;
        }
        if !seen.insert(ann.frame_index) {
            return Err(Error::Duplicate {
                frame: ann.frame_index,
            });
        }
        out.push(ann);
    }
    out.sort_by_key(|a| a.frame_index);
    Ok(out)
}

pub fn read_annotations(bytes: &[u8]) -> Result<Vec<FrameAnnotation>> {
    read_jsonl(bytes, false)
}

/// Same as [`read_annotations`] but every box must carry `conf`.
pub fn read_detections(bytes: &[u8]) -> Result<Vec<FrameAnnotation>> {
    read_jsonl(bytes, true)
}

pub fn write_annotations(annotations: &[FrameAnnotation]) -> Vec<u8> {
    let mut out = Vec::new();
    for a in annotations {
        serde_json::to_writer(&mut out, a).expect("annotation serialization is infallible");
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y4m(header: &str, frames: &[&[u8]]) -> Vec<u8> {
        let mut v = format!("{header}\n").into_bytes();
        for f in frames {
            v.extend_from_slice(b"FRAME\n");
            v.extend_from_slice(f);
        }
        v
    }

    #[test]
    fn reads_minimal_y4m() {
        let data = y4m("YUV4MPEG2 W4 H2 F10:1 Cmono", &[&[1; 8], &[2; 8]]);
        let seq = read_y4m(&data).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!((seq.width(), seq.height()), (4, 2));
        assert_eq!(seq.fps().as_f64(), 10.0);
        assert_eq!(seq.frames()[1].pixels(), &[2; 8]);
    }

    #[test]
    fn rejects_color_y4m() {
        let data = y4m("YUV4MPEG2 W4 H2 F10:1 C420", &[]);
        assert_eq!(read_y4m(&data).unwrap_err().code(), "unsupported");
        let data = y4m("YUV4MPEG2 W4 H2 F10:1", &[]);
        assert_eq!(read_y4m(&data).unwrap_err().code(), "unsupported");
    }

    #[test]
    fn malformed_header_names_token() {
        let data = y4m("YUV4MPEG2 W4 Hx F10:1 Cmono", &[]);
        assert_eq!(read_y4m(&data).unwrap_err(), Error::Format { token: "Hx".into() });
        let data = y4m("YUV4MPEG2 W4 H2 F10:0 Cmono", &[]);
        assert_eq!(read_y4m(&data).unwrap_err(), Error::Format { token: "F10:0".into() });
        let data = y4m("YUV4MPEG W4 H2 F10:1 Cmono", &[]);
        assert_eq!(read_y4m(&data).unwrap_err(), Error::Format { token: "YUV4MPEG".into() });
    }

    #[test]
    fn truncated_frame_reports_index() {
        let mut data = y4m("YUV4MPEG2 W4 H2 F10:1 Cmono", &[&[0; 8], &[0; 8]]);
        data.pop();
        assert_eq!(read_y4m(&data).unwrap_err(), Error::Truncated { frame: 1 });
    }

    #[test]
    fn accepts_interlace_and_aspect_params() {
        let data = y4m("YUV4MPEG2 W2 H1 F30000:1001 Ip A1:1 Cmono XYSCSS=MONO", &[&[5, 6]]);
        let seq = read_y4m(&data).unwrap();
        assert_eq!(seq.fps(), Fps { num: 30000, den: 1001 });
    }

    #[test]
    fn hd_frames_have_full_sample_count() {
        let sample = vec![7u8; 1280 * 720];
        let data = y4m("YUV4MPEG2 W1280 H720 F10:1 Cmono", &[&sample]);
        let seq = read_y4m(&data).unwrap();
        assert_eq!(seq.frames()[0].pixels().len(), 921_600);
    }

    #[test]
    fn writes_header_only_for_empty_sequence() {
        let seq = VideoSequence::new(4, 2, Fps::new(10, 1).unwrap(), vec![]).unwrap();
        assert_eq!(write_y4m(&seq), b"YUV4MPEG2 W4 H2 F10:1 Cmono\n");
        assert_eq!(read_y4m(&write_y4m(&seq)).unwrap(), seq);
    }

    #[test]
    fn writes_single_frame() {
        let f = Frame::new(4, 2, (0..8).collect()).unwrap();
        let seq = VideoSequence::from_frames(Fps::new(10, 1).unwrap(), vec![f]).unwrap();
        let mut expected = b"YUV4MPEG2 W4 H2 F10:1 Cmono\nFRAME\n".to_vec();
        expected.extend(0u8..8);
        assert_eq!(write_y4m(&seq), expected);
    }

    #[test]
    fn pgm_minimal_and_errors() {
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3, 4]);
        let f = read_pgm(&data).unwrap();
        assert_eq!((f.width(), f.height()), (2, 2));
        assert_eq!(f.pixels(), &[1, 2, 3, 4]);

        let wide = b"P5 2 2 65535\n\0\0\0\0\0\0\0\0";
        assert_eq!(read_pgm(wide).unwrap_err().code(), "unsupported");
        assert_eq!(read_pgm(b"P2 2 2 255\n1 2 3 4").unwrap_err().code(), "unsupported");
        assert_eq!(read_pgm(b"P5 2 2 255\n\x01").unwrap_err().code(), "truncated");
    }

    #[test]
    fn pgm_skips_comments() {
        let mut data = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        data.push(9);
        assert_eq!(read_pgm(&data).unwrap().pixels(), &[9]);
    }

    #[test]
    fn annotation_examples() {
        assert!(read_annotations(b"").unwrap().is_empty());
        let one = read_annotations(br#"{"frame":0,"boxes":[{"x":1,"y":2,"w":3,"h":4}]}"#).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].boxes.len(), 1);
        assert_eq!(one[0].boxes[0].class_label, "pedestrian");

        let dup = b"{\"frame\":5,\"boxes\":[]}\n{\"frame\":5,\"boxes\":[]}\n";
        assert_eq!(read_annotations(dup).unwrap_err(), Error::Duplicate { frame: 5 });
    }

    #[test]
    fn annotations_sorted_by_frame() {
        let data = b"{\"frame\":3,\"boxes\":[]}\n{\"frame\":1,\"boxes\":[]}\n";
        let a = read_annotations(data).unwrap();
        assert_eq!(a.iter().map(|a| a.frame_index).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn detections_require_conf() {
        let data = b"{\"frame\":0,\"boxes\":[]}\n{\"frame\":1,\"boxes\":[{\"x\":1,\"y\":2,\"w\":3,\"h\":4}]}\n";
        match read_detections(data).unwrap_err() {
            Error::Schema { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        let ok = br#"{"frame":1,"boxes":[{"x":1,"y":2,"w":3,"h":4,"conf":0.5}]}"#;
        assert_eq!(read_detections(ok).unwrap()[0].boxes[0].conf, Some(0.5));
    }

    #[test]
    fn malformed_json_reports_line() {
        let data = b"{\"frame\":0,\"boxes\":[]}\n{\"frame\":1,\"boxes\":[\n";
        assert!(matches!(read_annotations(data).unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn jsonl_rejects_invalid_boxes() {
        let data = br#"{"frame":0,"boxes":[{"x":1,"y":2,"w":0,"h":4}]}"#;
        assert_eq!(read_annotations(data).unwrap_err().code(), "schema");
        let data = br#"{"frame":0,"boxes":[{"x":1,"y":2,"w":1,"h":4,"conf":2.0}]}"#;
        assert_eq!(read_detections(data).unwrap_err().code(), "schema");
    }

    #[test]
    fn writer_emits_spec_schema() {
        let ann = FrameAnnotation {
            frame_index: 0,
            boxes: vec![BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap()],
        };
        assert_eq!(
            write_annotations(&[ann]),
            b"{\"frame\":0,\"boxes\":[{\"x\":1.0,\"y\":2.0,\"w\":3.0,\"h\":4.0}]}\n"
        );
    }

    #[test]
    fn frame_invariants() {
        assert!(Frame::new(2, 2, vec![0; 3]).is_err());
        assert!(Frame::new(0, 2, vec![]).is_err());
        let a = Frame::filled(2, 2, 0).unwrap();
        let b = Frame::filled(3, 2, 0).unwrap();
        assert!(VideoSequence::from_frames(Fps::new(10, 1).unwrap(), vec![a, b]).is_err());
    }
}
