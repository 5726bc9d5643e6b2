//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use imuwave_core::bridge::I2rModel;
use imuwave_core::enhance::enhance;
use imuwave_core::metrics::{pearson, ssim, EvalReport, SsimConfig};
use imuwave_core::radar_dsp::{process_cube, resample_heatmap, TimeVelocityHeatmap};
use imuwave_core::rng::derive_seed;
use imuwave_core::transformer::DopplerClassifier;
use imuwave_core::Grid;

use crate::artifacts;
use crate::config::{Resolved, Settings};
use crate::dataset::{self, DatasetView, GenerationConfig, Split};
use crate::error::{Error, Result};
use crate::irad::{read_container, Array, Container, Kind, Values};
use crate::oracles;
use crate::pgm::write_pgm;
use crate::report::{Report, Section};

pub const COMMANDS: &str = "synth, process, enhance, train-i2r, translate, train-clf, eval, render, selfcheck";

#[derive(Debug, Parser)]
#[command(name = "imuwave", version, about = "Paired IMU / FMCW radar gesture synthesis and IMU-to-radar translation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// key = value config file with [section] headers
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed (dataset.seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a paired dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_class: Option<usize>,
        /// Comma-separated gesture class names
        #[arg(long)]
        classes: Option<String>,
        /// Radar SNR in dB, or "none"
        #[arg(long)]
        snr: Option<String>,
        /// Also store the raw radar cubes
        #[arg(long)]
        cube: bool,
    },
    /// Radar cube to time-velocity heatmap
    Process {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        enhance: bool,
        /// Where to write the enhancement mask (with --enhance)
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Enhance a heatmap
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Train the IMU-to-radar translation model
    TrainI2r {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Diffusion steps
        #[arg(long = "T")]
        steps: Option<usize>,
        /// Passes over the training split (overrides diffusion.train_steps)
        #[arg(long)]
        epochs: Option<usize>,
        /// Optimizer steps
        #[arg(long)]
        train_steps: Option<usize>,
        /// Loss log; defaults to the checkpoint path with a .log extension
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Translate an IMU spectrogram triplet into a heatmap
    Translate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Train the Doppler transformer classifier
    TrainClf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        wd: Option<f64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Classify a dataset split and write a report
    Eval {
        #[arg(long)]
        clf: PathBuf,
        /// Also classify translated heatmaps and score them against the real ones
        #[arg(long)]
        i2r: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
        split: String,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Render a heatmap, mask or spectrogram container to PGM
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suite
    Selfcheck,
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        1
                    } else {
                        0
                    }
                }
                kind => {
                    let _ = e.print();
                    if matches!(kind, ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand) {
                        eprintln!("commands: {COMMANDS}");
                    }
                    1
                }
            };
        }
    };
    let mut out = std::io::stdout().lock();
    match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn settings(global: &Global, command: &Command) -> Result<Settings> {
    let mut s = match &global.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    for a in &global.set {
        s.set_override(a)?;
    }
    let mut set = |k: &str, v: String| s.set_override(&format!("{k}={v}"));
    if let Some(seed) = global.seed {
        set("dataset.seed", seed.to_string())?;
    }
    match command {
        Command::Synth { per_class, classes, snr, cube, .. } => {
            if let Some(n) = per_class {
                set("dataset.per_class", n.to_string())?;
            }
            if let Some(c) = classes {
                set("dataset.classes", c.clone())?;
            }
            if let Some(v) = snr {
                set("radar.snr_db", v.clone())?;
            }
            if *cube {
                set("dataset.write_cube", "true".into())?;
            }
        }
        Command::TrainI2r { steps, epochs, train_steps, .. } => {
            if let Some(t) = steps {
                set("diffusion.steps", t.to_string())?;
            }
            if let Some(e) = epochs {
                set("diffusion.epochs", e.to_string())?;
            }
            if let Some(n) = train_steps {
                set("diffusion.train_steps", n.to_string())?;
            }
        }
        Command::Translate { stride, eta, .. } => {
            if let Some(k) = stride {
                set("diffusion.stride", k.to_string())?;
            }
            if let Some(e) = eta {
                set("diffusion.eta", e.to_string())?;
            }
        }
        Command::Eval { stride, .. } => {
            if let Some(k) = stride {
                set("diffusion.stride", k.to_string())?;
            }
        }
        Command::TrainClf { epochs, lr, wd, .. } => {
            if let Some(e) = epochs {
                set("classifier.epochs", e.to_string())?;
            }
            if let Some(v) = lr {
                set("classifier.lr", v.to_string())?;
            }
            if let Some(v) = wd {
                set("classifier.weight_decay", v.to_string())?;
            }
        }
        _ => {}
    }
    Ok(s)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let s = settings(&cli.global, &cli.command)?;
    let cfg = s.resolve()?;
    let p = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e));
    p(out, format!("config digest: {}", s.digest()))?;
    p(out, format!("master seed: {}", cfg.seed))?;
    match cli.command {
        Command::Synth { out: dir, .. } => {
            let gen = GenerationConfig {
                classes: cfg.classes.clone(),
                per_class: cfg.per_class,
                master_seed: cfg.seed,
                split: cfg.split,
                write_cube: cfg.write_cube,
                pipeline: cfg.pipeline.clone(),
            };
            let total = gen.classes.len() * gen.per_class;
            let mut done = 0;
            let m = dataset::generate(&dir, &gen, &s.digest(), |_| {
                done += 1;
                if done % 10 == 0 || done == total {
                    eprintln!("generated {done}/{total}");
                }
            })?;
            let counts: Vec<usize> = Split::ALL.iter().map(|&sp| m.split(sp).count()).collect();
            p(out, format!("wrote {} samples to {} (train {}, val {}, test {})", m.entries.len(), dir.display(), counts[0], counts[1], counts[2]))?;
        }
        Command::Process { input, out: dst, enhance: do_enhance, mask } => {
            let cube = artifacts::read_cube(&input, &cfg.pipeline.chirp)?;
            let raw = process_cube(&cube, &cfg.pipeline.dsp)?;
            let h = resample_heatmap(&raw, cfg.pipeline.heatmap.0, cfg.pipeline.heatmap.1, cfg.pipeline.keep_bins)?;
            if do_enhance {
                let e = enhance(&h, &cfg.pipeline.enhancement)?;
                artifacts::write_heatmap(&dst, &e.enhanced.map)?;
                if let Some(m) = mask {
                    artifacts::write_mask(m, &e.mask)?;
                }
            } else {
                if mask.is_some() {
                    return Err(Error::Usage("--mask requires --enhance".into()));
                }
                artifacts::write_heatmap(&dst, &h.map)?;
            }
            p(out, format!("wrote {}", dst.display()))?;
        }
        Command::Enhance { input, out: dst, mask } => {
            let map = artifacts::read_heatmap(&input)?;
            let e = enhance(&TimeVelocityHeatmap { map, norm: (0.0, 1.0) }, &cfg.pipeline.enhancement)?;
            artifacts::write_heatmap(&dst, &e.enhanced.map)?;
            if let Some(m) = mask {
                artifacts::write_mask(m, &e.mask)?;
            }
            p(out, format!("wrote {}", dst.display()))?;
        }
        Command::TrainI2r { data, out: ckpt, log, .. } => train_i2r(&cfg, &data, &ckpt, log, out)?,
        Command::Translate { ckpt, input, out: dst, .. } => {
            let model = I2rModel::from_named_tensors(&artifacts::read_checkpoint(&ckpt)?)?;
            let triplet = artifacts::read_spectrogram(&input, cfg.pipeline.stft)?;
            let h = model.translate(&triplet, cfg.sampling, derive_seed(cfg.seed, &[20]))?;
            artifacts::write_heatmap(&dst, &h.map)?;
            p(out, format!("wrote {}", dst.display()))?;
        }
        Command::TrainClf { data, out: ckpt, log, .. } => train_clf(&cfg, &data, &ckpt, log, out)?,
        Command::Eval { clf, i2r, data, report, split, .. } => {
            let r = evaluate(&cfg, &s.digest(), &clf, i2r.as_deref(), &data, &split)?;
            write!(out, "{}", r.to_table()).map_err(|e| Error::io("<stdout>", e))?;
            r.write_json(&report)?;
            p(out, format!("wrote {}", report.display()))?;
        }
        Command::Render { input, out: dst } => {
            render(&input, &dst)?;
            p(out, format!("wrote {}", dst.display()))?;
        }
        Command::Selfcheck => {
            let results = selfcheck(cfg.seed)?;
            let mut all = true;
            for o in &results {
                all &= o.passed;
                p(out, format!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail))?;
            }
            p(out, format!("selfcheck: {}/{} passed", results.iter().filter(|o| o.passed).count(), results.len()))?;
            if !all {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn log_path(ckpt: &Path, log: Option<PathBuf>) -> PathBuf {
    log.unwrap_or_else(|| ckpt.with_extension("log"))
}

fn write_log(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Optimizer steps implied by the settings for `n` training pairs.
pub fn i2r_steps(cfg: &Resolved, n: usize) -> usize {
    if cfg.train_epochs > 0 {
        cfg.train_epochs * n.div_ceil(cfg.i2r.batch)
    } else {
        cfg.train_steps
    }
}

fn train_i2r(cfg: &Resolved, data: &Path, ckpt: &Path, log: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let view = DatasetView::open(data)?;
    let pairs = view.pairs(&[Split::Train], &cfg.pipeline)?;
    if pairs.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    let steps = i2r_steps(cfg, pairs.len());
    let mut model = I2rModel::new(cfg.i2r.clone(), derive_seed(cfg.seed, &[10]))?;
    let mut text = String::from("step loss\n");
    let losses = model.fit(&pairs, steps, derive_seed(cfg.seed, &[11]), |step, loss| {
        text.push_str(&format!("{step} {loss:.6e}\n"));
        if step % 100 == 0 {
            eprintln!("step {step} loss {loss:.5}");
        }
    })?;
    artifacts::write_checkpoint(ckpt, &model.named_tensors())?;
    let log = log_path(ckpt, log);
    write_log(&log, &text)?;
    writeln!(
        out,
        "trained {} steps on {} pairs, final loss {:.5}; wrote {} and {}",
        steps,
        pairs.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        ckpt.display(),
        log.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn train_clf(cfg: &Resolved, data: &Path, ckpt: &Path, log: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let view = DatasetView::open(data)?;
    let train = view.heatmaps(&[Split::Train])?;
    let mut ccfg = cfg.classifier.clone();
    ccfg.classes = view.manifest.classes.len();
    let epochs = ccfg.epochs;
    let mut clf = DopplerClassifier::new(ccfg, derive_seed(cfg.seed, &[30]))?;
    let mut text = String::from("epoch loss accuracy\n");
    let stats = clf.train(&train, epochs, derive_seed(cfg.seed, &[31]), |s| {
        text.push_str(&format!("{} {:.6e} {:.4}\n", s.epoch, s.loss, s.accuracy));
        if s.epoch % 50 == 0 {
            eprintln!("epoch {} loss {:.5} accuracy {:.3}", s.epoch, s.loss, s.accuracy);
        }
    })?;
    artifacts::write_checkpoint(ckpt, &clf.named_tensors())?;
    let log = log_path(ckpt, log);
    write_log(&log, &text)?;
    let last = stats.last();
    writeln!(
        out,
        "trained {epochs} epochs on {} maps, final loss {:.5}, train accuracy {:.3}; wrote {} and {}",
        train.len(),
        last.map_or(f64::NAN, |s| s.loss),
        last.map_or(f64::NAN, |s| s.accuracy),
        ckpt.display(),
        log.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn splits_named(name: &str) -> Vec<Split> {
    match name {
        "train" => vec![Split::Train],
        "val" => vec![Split::Val],
        "all" => Split::ALL.to_vec(),
        _ => vec![Split::Test],
    }
}

/// Classify the chosen split (and, with a translation checkpoint, the
/// translated maps) and assemble the report.
pub fn evaluate(cfg: &Resolved, digest: &str, clf: &Path, i2r: Option<&Path>, data: &Path, split: &str) -> Result<Report> {
    let view = DatasetView::open(data)?;
    let clf = DopplerClassifier::from_named_tensors(&artifacts::read_checkpoint(clf)?)?;
    let i2r = i2r.map(|p| artifacts::read_checkpoint(p).and_then(|t| Ok(I2rModel::from_named_tensors(&t)?))).transpose()?;
    let splits = splits_named(split);
    let k = 3.min(view.manifest.classes.len());
    let entries: Vec<_> = view.manifest.entries.iter().filter(|e| splits.contains(&e.split)).collect();
    if entries.is_empty() {
        return Err(Error::Usage(format!("split {split} is empty")));
    }
    let (mut real, mut translated, mut labels, mut ssims, mut rs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for e in &entries {
        let map = artifacts::read_heatmap(view.root.join(&e.files.heatmap))?;
        real.push(clf.predict_topk(&map, k)?);
        labels.push(e.label);
        if let Some(model) = &i2r {
            let triplet = artifacts::read_spectrogram(view.root.join(&e.files.spectrogram), cfg.pipeline.stft)?;
            let t = model.translate(&triplet, cfg.sampling, derive_seed(cfg.seed, &[21, e.seed]))?;
            translated.push(clf.predict_topk(&t.map, k)?);
            ssims.push(ssim(&t.map, &map, &SsimConfig::default())?);
            if let Ok(r) = pearson(t.map.as_slice(), map.as_slice()) {
                rs.push(r);
            }
        }
    }
    let names = &view.manifest.classes;
    let mut sections = vec![Section::new("real heatmaps", &EvalReport::build(&real, &labels, &[], &[])?, names)];
    if i2r.is_some() {
        sections.push(Section::new("translated heatmaps", &EvalReport::build(&translated, &labels, &ssims, &rs)?, names));
    }
    Ok(Report { config_digest: digest.into(), master_seed: cfg.seed, split: split.into(), sections })
}

fn render(input: &Path, dst: &Path) -> Result<()> {
    let bad = |msg: String| Error::Parse { path: input.into(), msg };
    let map = match read_container(input)? {
        Container::Array { kind: Kind::Heatmap, .. } => artifacts::read_heatmap(input)?,
        Container::Array { kind: Kind::Mask, .. } => artifacts::read_mask(input)?.map(|&b| if b { 1.0 } else { 0.0 }),
        Container::Array { kind: Kind::Spectrogram, array: Array { dims, values: Values::F64(v) } } if dims.len() == 3 => {
            // axes stacked top to bottom, low frequency at the bottom of each
            let (f, t) = (dims[1], dims[2]);
            Grid::from_fn(3 * f, t, |r, c| v[(r / f) * f * t + (f - 1 - r % f) * t + c])
        }
        other => return Err(bad(format!("cannot render a {:?} container", other.kind()))),
    };
    write_pgm(dst, &map)
}

/// Reduced-size oracle suite run by `selfcheck`.
pub fn selfcheck(seed: u64) -> Result<Vec<oracles::Outcome>> {
    Ok(vec![
        oracles::fft_bins(10, seed)?,
        oracles::clutter_removal(3, seed)?,
        oracles::static_dominant_regime(3, seed)?,
        oracles::modwt_identities(&[128, 200], 4, seed)?,
        oracles::morphology(200, seed)?,
        oracles::kmeans_exhaustive(30, seed)?,
        oracles::bridge_schedule(200)?,
        oracles::bridge_moments(200, 10_000, seed)?,
        oracles::gradient_integrity(1e-4, seed)?.0,
        oracles::metric_identities(100, seed)?,
    ])
}
