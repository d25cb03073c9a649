use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segfuse::codec::{read_intensities, read_masks, write_sgm};
use segfuse::overlay::{BLUE, GREEN, RED};
use segfuse::{BinaryMask, IntensityMap, Raster, ScoreMap, Volume};

fn segfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segfuse"))
        .args(args)
        .output()
        .expect("spawn segfuse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_score(dir: &Path, name: &str, w: usize, h: usize, data: Vec<f32>) -> PathBuf {
    let path = dir.join(name);
    write_sgm(&Volume::single(ScoreMap::new(w, h, data).unwrap()), &path).unwrap();
    path
}

fn write_mask(dir: &Path, name: &str, mask: BinaryMask) -> PathBuf {
    let path = dir.join(name);
    write_sgm(&Volume::single(mask), &path).unwrap();
    path
}

/// The three single-pixel maps 0.6, 0.7, 0.1 and a foreground ground truth.
fn worked_example(dir: &Path) -> (PathBuf, Vec<PathBuf>) {
    let models = [0.6, 0.7, 0.1]
        .iter()
        .enumerate()
        .map(|(i, &v)| write_score(dir, &format!("m{i}.sgm"), 1, 1, vec![v]))
        .collect();
    let gt = write_mask(dir, "gt.sgm", BinaryMask::new(1, 1, vec![1]).unwrap());
    (gt, models)
}

#[test]
fn fuse_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let (_, models) = worked_example(dir.path());
    for (method, expected) in [("msm", 0u8), ("mbm", 1u8)] {
        let out = dir.path().join(format!("{method}.sgm"));
        let mut args = vec!["fuse", "--method", method, "--output", p(&out), "--inputs"];
        args.extend(models.iter().map(|m| p(m)));
        let o = segfuse(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let fused = read_masks(&out).unwrap();
        assert_eq!(fused.slices()[0].pixels(), [expected], "{method}");
    }
}

#[test]
fn fuse_shape_mismatch_names_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_score(dir.path(), "alpha.sgm", 2, 2, vec![0.5; 4]);
    let b = write_score(dir.path(), "beta.sgm", 3, 2, vec![0.5; 6]);
    let out = dir.path().join("out.sgm");
    let o = segfuse(&["fuse", "--method", "mbm", "--output", p(&out), "--inputs", p(&a), p(&b)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("alpha.sgm") && err.contains("beta.sgm"), "{err}");
    assert!(!out.exists());
}

#[test]
fn dsc_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_mask(
        dir.path(),
        "gt.sgm",
        BinaryMask::from_fn(4, 4, |x, y| (y == 0 && x < 3) || (x, y) == (3, 3)).unwrap(),
    );
    let seg = write_mask(dir.path(), "seg.sgm", BinaryMask::from_fn(4, 4, |x, y| y < 2 && x < 3).unwrap());
    let o = segfuse(&["dsc", "--gt", p(&gt), "--seg", p(&seg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.6000");
}

#[test]
fn eval_worked_example_subject() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, models) = worked_example(dir.path());
    let names: Vec<&str> = models.iter().map(|m| m.file_name().unwrap().to_str().unwrap()).collect();
    let manifest = dir.path().join("manifest.tsv");
    fs::write(
        &manifest,
        format!("s1\t{}\t{}\n", gt.file_name().unwrap().to_str().unwrap(), names.join(";")),
    )
    .unwrap();
    let csv = dir.path().join("report.csv");
    let o = segfuse(&["eval", "--manifest", p(&manifest), "--out-csv", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(
        rows,
        [
            "subject,method,dsc",
            "s1,model1,1.0000",
            "s1,model2,1.0000",
            "s1,model3,0.0000",
            "s1,msm,0.0000",
            "s1,mbm,1.0000",
        ]
    );
    assert!(text.contains("\nstatistic,method,value\n"));
}

#[test]
fn eval_empty_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.tsv");
    fs::write(&manifest, "# nothing here\n\n").unwrap();
    let csv = dir.path().join("report.csv");
    let o = segfuse(&["eval", "--manifest", p(&manifest), "--out-csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no subjects"), "{}", stderr(&o));
    assert!(!csv.exists());
}

#[test]
fn missing_input_exits_one() {
    let o = segfuse(&["dsc", "--gt", "/nonexistent/gt.sgm", "--seg", "/nonexistent/seg.sgm"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

fn simulate(out: &Path, jobs: &str) -> Output {
    segfuse(&[
        "simulate", "--subjects", "3", "--models", "good,good,bad", "--size", "48", "--seed", "11",
        "--jobs", jobs, "--out", p(out),
    ])
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn simulate_single_subject_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cohort");
    let o = segfuse(&["simulate", "--subjects", "1", "--models", "good", "--size", "32", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = tree(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 3, "{names:?}");
    assert_eq!(names.iter().filter(|n| n.ends_with(".sgm")).count(), 2);
    assert!(names.contains(&"manifest.tsv".to_string()));
}

#[test]
fn simulate_is_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(simulate(&a, "1").status.success());
    assert!(simulate(&b, "4").status.success());
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn simulate_requires_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cohort");
    let o = segfuse(&["simulate", "--subjects", "1", "--models", "", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = segfuse(&["simulate", "--subjects", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_output_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    assert!(simulate(&cohort, "1").status.success());
    let manifest = cohort.join("manifest.tsv");
    let run = |jobs: &str| {
        let csv = dir.path().join(format!("report{jobs}.csv"));
        let o = segfuse(&["eval", "--manifest", p(&manifest), "--out-csv", p(&csv), "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
        (stdout(&o), fs::read(&csv).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn stats_over_report_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    fs::write(&csv, "subject,method,dsc\na,msm,1\nb,msm,2\nc,msm,3\nd,msm,4\ne,mbm,9\n").unwrap();
    let o = segfuse(&["stats", "--input", p(&csv), "--method", "msm"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for line in ["mean 2.5000", "q25 1.7500", "median 2.5000", "q75 3.2500", "min 1.0000", "max 4.0000"] {
        assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>().join(" ") == line), "{line}: {text}");
    }
}

fn overlay_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let bg = dir.join("bg.sgm");
    let data = (0..64).map(|i| i as f32).collect();
    write_sgm(&Volume::single(IntensityMap::new(8, 8, data).unwrap()), &bg).unwrap();
    let gt = write_mask(dir, "gt.sgm", BinaryMask::from_fn(8, 8, |x, y| (2..5).contains(&x) && y < 3).unwrap());
    (bg, gt)
}

#[test]
fn overlay_identical_masks_green_and_gray_only() {
    let dir = tempfile::tempdir().unwrap();
    let (bg, gt) = overlay_inputs(dir.path());
    let ppm = dir.path().join("o.ppm");
    let o = segfuse(&["overlay", "--background", p(&bg), "--gt", p(&gt), "--seg", p(&gt), "--out", p(&ppm)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(&ppm).unwrap();
    let header = b"P6\n8 8\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let pixels: Vec<&[u8]> = bytes[header.len()..].chunks(3).collect();
    assert_eq!(pixels.len(), 64);
    assert_eq!(pixels.iter().filter(|&&c| c == GREEN).count(), 9);
    assert!(pixels.iter().all(|c| *c == GREEN || (c[0] == c[1] && c[1] == c[2])));
    assert!(!pixels.iter().any(|&c| c == RED || c == BLUE));
}

#[test]
fn overlay_bad_zoom_rect() {
    let dir = tempfile::tempdir().unwrap();
    let (bg, gt) = overlay_inputs(dir.path());
    let ppm = dir.path().join("o.ppm");
    let o = segfuse(&[
        "overlay", "--background", p(&bg), "--gt", p(&gt), "--seg", p(&gt), "--zoom", "6,6,4,4", "--out", p(&ppm),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zoom rect out of bounds"), "{}", stderr(&o));
    assert!(!ppm.exists());
}

#[test]
fn preprocess_pads_normalizes_and_moves_label() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("img.sgm");
    let data = (0..24).map(|i| (i * i) as f32).collect();
    write_sgm(&Volume::single(IntensityMap::new(6, 4, data).unwrap()), &input).unwrap();
    let label = write_mask(dir.path(), "lab.sgm", BinaryMask::from_fn(6, 4, |x, _| x == 0).unwrap());
    let (output, label_out) = (dir.path().join("out.sgm"), dir.path().join("lab_out.sgm"));
    let o = segfuse(&[
        "preprocess", "--input", p(&input), "--output", p(&output), "--width", "10", "--height", "8",
        "--label", p(&label), "--label-out", p(&label_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = read_intensities(&output).unwrap();
    let slice = &img.slices()[0];
    assert_eq!((slice.width(), slice.height()), (10, 8));
    let n = slice.pixels().len() as f64;
    let mean: f64 = slice.pixels().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-5, "{mean}");
    let lab = read_masks(&label_out).unwrap();
    let lab = &lab.slices()[0];
    // Padding is two columns on the left and two rows on top.
    let fg: Vec<(usize, usize)> = (0..8)
        .flat_map(|y| (0..10).map(move |x| (x, y)))
        .filter(|&(x, y)| lab.get(x, y) == 1)
        .collect();
    assert_eq!(fg, [(2, 2), (2, 3), (2, 4), (2, 5)]);
}

#[test]
fn preprocess_label_requires_label_out() {
    let o = segfuse(&["preprocess", "--input", "a.sgm", "--output", "b.sgm", "--label", "c.sgm"]);
    assert_eq!(o.status.code(), Some(2));
}
