//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 8, 9 and 11 drive the `imuwave` binary on a generated
//! 3-class x 60-sample dataset; the others call the shared oracles.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use imuwave::oracles::{self, Outcome};
use walkdir::WalkDir;

const SEED: u64 = 2024;
/// Optimizer steps for the translation model (batch 8 over 144 training pairs).
const I2R_STEPS: usize = 2000;
const CLF_EPOCHS: usize = 200;

struct Line {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn from_outcomes(id: usize, title: &'static str, outs: &[Outcome], elapsed: Duration, budget: Option<Duration>) -> Line {
    let within = budget.is_none_or(|b| elapsed <= b);
    let mut detail: Vec<String> = outs.iter().map(|o| format!("{} ({})", o.detail, if o.passed { "ok" } else { "fail" })).collect();
    detail.push(match budget {
        Some(b) => format!("runtime {:.1} s (limit {} s)", elapsed.as_secs_f64(), b.as_secs()),
        None => format!("runtime {:.1} s", elapsed.as_secs_f64()),
    });
    Line { id, title, passed: within && outs.iter().all(|o| o.passed), detail: detail.join("; ") }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn failed(id: usize, title: &'static str, err: impl std::fmt::Display) -> Line {
    Line { id, title, passed: false, detail: format!("error: {err}") }
}

fn oracle_line(
    id: usize,
    title: &'static str,
    budget: Option<Duration>,
    f: impl FnOnce() -> imuwave::error::Result<Vec<Outcome>>,
) -> Line {
    let (res, dt) = timed(f);
    match res {
        Ok(outs) => from_outcomes(id, title, &outs, dt, budget),
        Err(e) => failed(id, title, e),
    }
}

fn imuwave(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_imuwave"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<(PathBuf, Vec<u8>)> = WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap_or_default()))
        .collect();
    v.sort();
    v
}

fn read_report(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn section<'a>(report: &'a serde_json::Value, input: &str) -> Result<&'a serde_json::Value, String> {
    report["sections"]
        .as_array()
        .and_then(|s| s.iter().find(|x| x["input"] == input))
        .ok_or_else(|| format!("report lacks section {input:?}"))
}

fn num(v: &serde_json::Value, key: &str) -> Result<f64, String> {
    v[key].as_f64().ok_or_else(|| format!("report lacks {key}"))
}

/// Mean loss over the first and last 20 of the first 200 logged steps.
fn loss_drop(log: &Path) -> Result<(f64, f64), String> {
    let text = std::fs::read_to_string(log).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = text.lines().skip(1).filter_map(|l| l.split_whitespace().nth(1)?.parse().ok()).collect();
    if losses.len() < 200 {
        return Err(format!("log holds {} steps, need 200", losses.len()));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok((mean(&losses[..20]), mean(&losses[180..200])))
}

struct Shared {
    dir: tempfile::TempDir,
    synth_time: Duration,
    i2r_time: Duration,
}

fn translation(shared: &Result<Shared, String>) -> Line {
    let title = "end-to-end translation";
    let s = match shared {
        Ok(s) => s,
        Err(e) => return failed(8, title, e),
    };
    let d = s.dir.path();
    let run = || -> Result<(f64, f64, f64, Duration), String> {
        let (head, tail) = loss_drop(&d.join("i2r.log"))?;
        let (r, dt) = timed(|| {
            imuwave(
                &["eval", "--clf", "clf.irad", "--i2r", "i2r.irad", "--data", "data", "--report", "test.json", "--split", "test", "--seed", &SEED.to_string()],
                d,
            )
        });
        r?;
        let report = read_report(&d.join("test.json"))?;
        let ssim = num(section(&report, "translated heatmaps")?, "ssim_mean")?;
        Ok((ssim, head, tail, dt))
    };
    match run() {
        Ok((ssim, head, tail, eval_time)) => {
            let total = s.synth_time + s.i2r_time + eval_time;
            let ok = ssim >= 0.6 && tail <= 0.5 * head && total <= Duration::from_secs(30 * 60);
            Line {
                id: 8,
                title,
                passed: ok,
                detail: format!(
                    "held-out mean SSIM {ssim:.4} (>= 0.6); loss {head:.4} -> {tail:.4} by step 200 ({:.0}% drop, need 50%); {I2R_STEPS} steps; runtime {:.0} s (synth {:.0}, train {:.0}, translate+eval {:.0}; limit 1800 s)",
                    100.0 * (1.0 - tail / head),
                    total.as_secs_f64(),
                    s.synth_time.as_secs_f64(),
                    s.i2r_time.as_secs_f64(),
                    eval_time.as_secs_f64()
                ),
            }
        }
        Err(e) => failed(8, title, e),
    }
}

fn recognition(shared: &Result<Shared, String>, clf_time: Result<Duration, String>) -> Line {
    let title = "end-to-end recognition";
    let s = match shared {
        Ok(s) => s,
        Err(e) => return failed(9, title, e),
    };
    let d = s.dir.path();
    let run = || -> Result<Line, String> {
        let clf_time = clf_time?;
        let (r, dt) = timed(|| imuwave(&["eval", "--clf", "clf.irad", "--data", "data", "--report", "train.json", "--split", "train"], d));
        r?;
        let train = read_report(&d.join("train.json"))?;
        let train_top1 = num(section(&train, "real heatmaps")?, "top1")?;
        let test = read_report(&d.join("test.json"))?;
        let real = section(&test, "real heatmaps")?;
        let (top1, top3) = (num(real, "top1")?, num(real, "top3")?);
        let translated = num(section(&test, "translated heatmaps")?, "top1")?;
        let gap = top1 - translated;
        let total = clf_time + dt;
        let passed = train_top1 == 1.0 && top1 >= 0.9 && top3 >= 0.99 && gap <= 0.15 && total <= Duration::from_secs(20 * 60);
        Ok(Line {
            id: 9,
            title,
            passed,
            detail: format!(
                "train top-1 {train_top1:.3} (= 1); held-out top-1 {top1:.3} (>= 0.9), top-3 {top3:.3} (>= 0.99); translated top-1 {translated:.3}, gap {:.1} pp (<= 15); {CLF_EPOCHS} epochs; runtime {:.0} s (limit 1200 s, excludes the translations timed under 8)",
                100.0 * gap,
                total.as_secs_f64()
            ),
        })
    };
    run().unwrap_or_else(|e| failed(9, title, e))
}

fn determinism() -> Line {
    let title = "determinism";
    let run = || -> Result<Line, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        let small = [
            "--seed", "11", "--set", "dataset.per_class=3", "--set", "diffusion.train_steps=6", "--set", "classifier.epochs=4", "--set", "diffusion.eta=0.5",
        ];
        let go = |args: &[&str]| {
            let mut all = args.to_vec();
            all.extend_from_slice(&small);
            imuwave(&all, d)
        };
        let mut checks = Vec::new();
        go(&["synth", "--out", "a"])?;
        go(&["synth", "--out", "b"])?;
        checks.push(("synth", tree(&d.join("a")) == tree(&d.join("b"))));
        let same = |x: &str, y: &str| std::fs::read(d.join(x)).ok().is_some_and(|a| Some(a) == std::fs::read(d.join(y)).ok());
        go(&["train-i2r", "--data", "a", "--out", "i1.irad"])?;
        go(&["train-i2r", "--data", "b", "--out", "i2.irad"])?;
        checks.push(("train-i2r", same("i1.irad", "i2.irad") && same("i1.log", "i2.log")));
        go(&["train-clf", "--data", "a", "--out", "c1.irad"])?;
        go(&["train-clf", "--data", "b", "--out", "c2.irad"])?;
        checks.push(("train-clf", same("c1.irad", "c2.irad") && same("c1.log", "c2.log")));
        let triplet = "a/samples/swipe_left_0001/spectrogram.irad";
        go(&["translate", "--ckpt", "i1.irad", "--in", triplet, "--out", "t1.irad"])?;
        go(&["translate", "--ckpt", "i2.irad", "--in", triplet, "--out", "t2.irad"])?;
        checks.push(("translate", same("t1.irad", "t2.irad")));
        let passed = checks.iter().all(|(_, ok)| *ok);
        let detail = checks.iter().map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "DIFFERS" })).collect::<Vec<_>>().join(", ");
        Ok(Line { id: 11, title, passed, detail })
    };
    run().unwrap_or_else(|e| failed(11, title, e))
}

fn prepare() -> Result<Shared, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let seed = SEED.to_string();
    let (r, synth_time) = timed(|| imuwave(&["synth", "--out", "data", "--per-class", "60", "--seed", &seed], d));
    r?;
    let steps = I2R_STEPS.to_string();
    let (r, i2r_time) =
        timed(|| imuwave(&["train-i2r", "--data", "data", "--out", "i2r.irad", "--T", "200", "--train-steps", &steps, "--seed", &seed], d));
    r?;
    Ok(Shared { dir, synth_time, i2r_time })
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let seed = SEED;
    let mut lines = Vec::new();
    let mut emit = |l: Line| {
        println!("{} criterion {:>2} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.title, l.detail);
        lines.push(l.passed);
    };

    emit(oracle_line(1, "FFT bin oracles", Some(Duration::from_secs(10)), || Ok(vec![oracles::fft_bins(50, seed)?])));
    emit(oracle_line(2, "clutter removal", None, || Ok(vec![oracles::clutter_removal(20, seed)?])));
    emit(oracle_line(3, "static-dominant regime", None, || Ok(vec![oracles::static_dominant_regime(20, seed)?])));
    emit(oracle_line(4, "MODWT identities", None, || Ok(vec![oracles::modwt_identities(&[128, 200, 512], 4, seed)?])));
    emit(oracle_line(5, "morphology and clustering", None, || {
        Ok(vec![oracles::morphology(1000, seed)?, oracles::kmeans_exhaustive(100, seed)?])
    }));
    emit(oracle_line(6, "bridge schedule identities", None, || {
        Ok(vec![oracles::bridge_schedule(200)?, oracles::bridge_moments(200, 10_000, seed)?])
    }));
    emit(oracle_line(7, "gradient integrity", Some(Duration::from_secs(120)), || {
        Ok(vec![oracles::gradient_integrity(1e-4, seed)?.0])
    }));

    let shared = prepare();
    let clf_time = match &shared {
        Ok(s) => {
            let epochs = CLF_EPOCHS.to_string();
            let (r, dt) = timed(|| {
                imuwave(&["train-clf", "--data", "data", "--out", "clf.irad", "--epochs", &epochs, "--seed", &SEED.to_string()], s.dir.path())
            });
            r.map(|_| dt)
        }
        Err(e) => Err(e.clone()),
    };
    emit(translation(&shared));
    emit(recognition(&shared, clf_time));

    emit(oracle_line(10, "metric correctness", None, || Ok(vec![oracles::metric_identities(500, seed)?])));
    emit(determinism());

    let passed = lines.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    if passed == lines.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
