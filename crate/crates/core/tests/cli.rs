use std::path::{Path, PathBuf};
use std::process::Command;

use pedlink::cli::run;
use pedlink::frameio::{read_y4m, write_y4m, Fps, VideoSequence};
use serde_json::Value;
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn pedlink(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("pedlink").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes a short clip and its ground truth.
fn clip(dir: &TempDir, frames: usize) -> (PathBuf, PathBuf) {
    let (video, gt) = (p(dir, "clip.y4m"), p(dir, "gt.jsonl"));
    let n = frames.to_string();
    let o = pedlink(&["synth", "--frames", &n, "--out", s(&video), "--gt", s(&gt)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    (video, gt)
}

fn json(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn compress_reports_size_quality_and_bandwidth() {
    let dir = TempDir::new().unwrap();
    let (video, _) = clip(&dir, 20);
    let decoded = p(&dir, "dec.y4m");
    let o = pedlink(&["compress", "--in", s(&video), "--crf", "0", "--out", s(&p(&dir, "a.bdc")), "--decoded", s(&decoded)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lossless = json(&o.stdout);
    assert!(lossless["avg_psnr_db"].as_f64().unwrap() >= 48.0);
    let bits = lossless["size_bits"].as_u64().unwrap();
    assert_eq!(std::fs::metadata(p(&dir, "a.bdc")).unwrap().len() * 8, bits);
    // 20 frames at 10 fps last 2 s
    assert!((lossless["bandwidth_mbps"].as_f64().unwrap() - bits as f64 / 2e6).abs() < 1e-12);
    assert_eq!(read_y4m(&std::fs::read(&decoded).unwrap()).unwrap().len(), 20);

    let size = |crf: &str| {
        let o = pedlink(&["compress", "--in", s(&video), "--crf", crf, "--out", s(&p(&dir, "b.bdc"))]);
        json(&o.stdout)["size_bits"].as_u64().unwrap()
    };
    assert!(size("51") < size("10"));
}

#[test]
fn compress_exit_codes() {
    let dir = TempDir::new().unwrap();
    let empty = p(&dir, "empty.y4m");
    let seq = VideoSequence::new(16, 16, Fps::new(10, 1).unwrap(), Vec::new()).unwrap();
    std::fs::write(&empty, write_y4m(&seq)).unwrap();
    let o = pedlink(&["compress", "--in", s(&empty), "--crf", "10", "--out", s(&p(&dir, "x"))]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("error[empty_input]"));
    assert!(o.stdout.is_empty());

    std::fs::write(p(&dir, "bad.y4m"), b"not a video").unwrap();
    let o = pedlink(&["compress", "--in", s(&p(&dir, "bad.y4m")), "--crf", "10", "--out", s(&p(&dir, "x"))]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("error[format]"));

    let (video, _) = clip(&dir, 2);
    let o = pedlink(&["compress", "--in", s(&video), "--crf", "52", "--out", s(&p(&dir, "x"))]);
    assert_eq!(o.code, 2);
}

#[test]
fn sweep_writes_csv_and_one_line_per_level() {
    let dir = TempDir::new().unwrap();
    let (video, gt) = clip(&dir, 100);
    let csv = p(&dir, "sweep.csv");
    let o = pedlink(&[
        "sweep", "--in", s(&video), "--gt", s(&gt), "--profile", "scenario1", "--grid", "0,30,30,51", "--out", s(&csv),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stderr.contains("duplicate"));
    assert_eq!(o.stdout.lines().count(), 3);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), pedlink::eval::SWEEP_CSV_HEADER);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["0", "30", "51"]);
    let bw: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(bw[0] > bw[1] && bw[1] > bw[2]);
}

#[test]
fn sweep_with_replayed_detections() {
    let dir = TempDir::new().unwrap();
    let (video, gt) = clip(&dir, 10);
    // ground truth replayed as detections is always correct
    let dets: String = std::fs::read_to_string(&gt)
        .unwrap()
        .lines()
        .map(|l| format!("{}\n", l.replace("\"h\":", "\"conf\":0.9,\"h\":")))
        .collect();
    std::fs::write(p(&dir, "det.jsonl"), dets).unwrap();
    let csv = p(&dir, "sweep.csv");
    let o = pedlink(&[
        "sweep", "--in", s(&video), "--gt", s(&gt), "--detections", s(&p(&dir, "det.jsonl")), "--grid", "20,40", "--out", s(&csv),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    for row in std::fs::read_to_string(&csv).unwrap().lines().skip(1) {
        assert_eq!(row.split(',').nth(2).unwrap(), "100.000000");
    }
}

#[test]
fn sweep_needs_full_gt_coverage() {
    let dir = TempDir::new().unwrap();
    let (video, gt) = clip(&dir, 5);
    let partial: String = std::fs::read_to_string(&gt).unwrap().lines().take(3).map(|l| format!("{l}\n")).collect();
    std::fs::write(&gt, partial).unwrap();
    let o = pedlink(&["sweep", "--in", s(&video), "--gt", s(&gt), "--profile", "scenario1", "--out", s(&p(&dir, "o.csv"))]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("error[coverage]"), "{}", o.stderr);
    let o = pedlink(&["sweep", "--in", s(&video), "--gt", s(&gt), "--out", s(&p(&dir, "o.csv"))]);
    assert_eq!(o.code, 2, "source is required");
}

const TABLE: &str = "crf,avg_psnr_db,accuracy_percent,correct_frames,total_frames,size_bits,duration_s,bandwidth_mbps
0,inf,98.000000,49,50,98200000,10.000000,9.820000
30,43.000000,98.000000,49,50,3100000,10.000000,0.310000
40,38.000000,80.000000,40,50,1500000,10.000000,0.150000
";

#[test]
fn threshold_floor_edge_cases() {
    let dir = TempDir::new().unwrap();
    let csv = p(&dir, "t.csv");
    std::fs::write(&csv, TABLE).unwrap();
    let o = pedlink(&["threshold", "--sweep", s(&csv), "--floor", "0"]);
    assert_eq!(o.code, 0);
    assert_eq!(json(&o.stdout)["crf"], 40);
    let o = pedlink(&["threshold", "--sweep", s(&csv), "--floor", "98"]);
    let v = json(&o.stdout);
    assert_eq!(v["bandwidth_mbps"], 0.31);
    assert_eq!(v["reference_crf"], 0);
    let o = pedlink(&["threshold", "--sweep", s(&csv), "--floor", "99"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("error[infeasible]"));
    assert!(o.stdout.is_empty());
}

#[test]
fn stream_policies_and_config_errors() {
    let dir = TempDir::new().unwrap();
    let (video, _) = clip(&dir, 40);
    let trace = p(&dir, "trace.csv");
    let o = pedlink(&[
        "stream", "--in", s(&video), "--capacity-mbps", "0.15", "--policy", "adaptive:43", "--budget-s", "0.2", "--trace", s(&trace),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report = json(&o.stdout);
    assert_eq!(report["floor_violations"], 0);
    assert!(report.get("trace").is_none());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 41);
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        if cols[7] == "0" {
            assert!(cols[5].parse::<f64>().unwrap() >= 43.0, "{row}");
        }
    }

    let o = pedlink(&["stream", "--in", s(&video), "--capacity-mbps", "0.0", "--policy", "fixed:30", "--budget-s", "0.2"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("error[config]"));
    let o = pedlink(&["stream", "--in", s(&video), "--capacity-mbps", "1", "--policy", "lazy", "--budget-s", "0.2"]);
    assert_eq!(o.code, 2);
}

#[test]
fn binary_exit_codes_match_library() {
    let bin = env!("CARGO_BIN_EXE_pedlink");
    let status = Command::new(bin).args(["threshold", "--sweep", "/nonexistent.csv", "--floor", "1"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(status.stdout.is_empty());
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
