use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pstl_percept::calibration::{build_axiom_set, LabeledSample};
use pstl_percept::io::{frame_file_name, frame_path, read_jsonl, read_pgm, to_jsonl, write_pgm, DetectionRecord};
use pstl_percept::pstl::{monitor_stream, print_axiom_file, AxiomFormula};
use pstl_percept::sim::{
    axioms_from_calibration, collect_labeled_probes, desired_targets, evaluate, generate_scene, run_closed_loop,
    synthetic_detect, train, training_scene, ExperimentConfig, Method,
};
use pstl_percept::{parse_axiom_file, DesiredTargets, Detection, Error, ProbeRecord, Result, Track};

#[derive(Parser)]
#[command(name = "pstl-percept", version, about = "Perception error monitoring and contrast adaptation")]
struct Cli {
    /// Experiment configuration (TOML); defaults are used for anything left out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `scene.seed`.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene: PGM frames, ground truth, detector output and labeled probes.
    Simulate,
    /// Calibrate axioms from labeled probes, or from a simulated full-contrast scene.
    Train(TrainArgs),
    /// Evaluate axioms over a detection log and its frames.
    Monitor(MonitorArgs),
    /// Run the closed-loop comparison and write reports.
    Run(RunArgs),
    /// Score a detection log against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled probe records (JSON lines). Without it a training scene is simulated.
    #[arg(long, value_name = "PATH")]
    probes: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long, value_name = "PATH")]
    detections: PathBuf,
    /// Directory holding `frame_NNNNNN.pgm`.
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    #[arg(long, value_name = "PATH")]
    axioms: PathBuf,
    /// Number of frames; defaults to one past the last frame with a detection.
    #[arg(long, value_name = "N")]
    frame_count: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated subset of baseline, hist_eq, cogsense.
    #[arg(long, value_delimiter = ',', default_value = "baseline,hist_eq,cogsense")]
    methods: Vec<String>,
    /// Axiom file; trained on the configured training scene when absent.
    #[arg(long, value_name = "PATH", requires = "targets")]
    axioms: Option<PathBuf>,
    /// Desired contrast and entropy (JSON, as written by `train`).
    #[arg(long, value_name = "PATH", requires = "axioms")]
    targets: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    detections: PathBuf,
    /// Ground-truth log with track IDs.
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
}

/// Files are written into a scratch directory next to the destination and moved into
/// place only after everything succeeded.
struct Staging {
    dir: tempfile::TempDir,
    dest: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(dest: &Path) -> Result<Self> {
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?;
        Ok(Self {
            dir,
            dest: dest.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.path().join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    fn commit(self) -> Result<Vec<String>> {
        if !self.dest.exists() {
            let staged = self.dir.keep();
            std::fs::rename(&staged, &self.dest).map_err(|e| Error::io(&self.dest, e))?;
            return Ok(self.files);
        }
        for name in &self.files {
            let to = self.dest.join(name);
            std::fs::rename(self.dir.path().join(name), &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(self.files)
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scene.seed = seed;
    }
    Ok(cfg)
}

fn detection_records(frames: &[Vec<Detection>]) -> Vec<DetectionRecord> {
    frames.iter().flatten().map(DetectionRecord::from_detection).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    frame_count: usize,
    width: usize,
    height: usize,
    frames: Vec<String>,
    gains: &'a [f64],
    object_intensities: &'a [u8],
    config: &'a ExperimentConfig,
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &mut Staging) -> Result<()> {
    let scene = generate_scene(&cfg.scene)?;
    let mut names = Vec::with_capacity(scene.frames.len());
    for (t, frame) in scene.frames.iter().enumerate() {
        let name = frame_file_name(t);
        write_pgm(&out.path(&name), frame)?;
        names.push(name);
    }
    out.write("gt.jsonl", to_jsonl(&detection_records(&scene.gt))?)?;

    let detections = scene
        .frames
        .iter()
        .zip(&scene.gt)
        .enumerate()
        .map(|(t, (f, gt))| synthetic_detect(t, f, gt, &cfg.detector))
        .collect::<Result<Vec<_>>>()?;
    out.write("detections.jsonl", to_jsonl(&detection_records(&detections))?)?;
    let probes = collect_labeled_probes(&scene, &cfg.detector, &cfg.train.monitor, cfg.train.iou_threshold)?;
    out.write("probes.jsonl", to_jsonl(&probes)?)?;

    out.json(
        "manifest.json",
        &Manifest {
            frame_count: scene.frames.len(),
            width: cfg.scene.width,
            height: cfg.scene.height,
            frames: names,
            gains: &scene.gains,
            object_intensities: &scene.intensities,
            config: cfg,
        },
    )
}

fn write_axioms(out: &mut Staging, axioms: &[AxiomFormula<f64>], targets: &DesiredTargets) -> Result<()> {
    let header = format!(
        "calibrated axioms\ndesired contrast {} (tolerance {}), desired entropy {}",
        targets.contrast, targets.contrast_tolerance, targets.entropy
    );
    out.write("axioms.pstl", print_axiom_file(axioms, Some(&header)))?;
    out.json("targets.json", targets)
}

fn cmd_train(cfg: &ExperimentConfig, args: &TrainArgs, out: &mut Staging) -> Result<()> {
    let (calibration, axioms, targets) = match &args.probes {
        Some(path) => {
            let records: Vec<ProbeRecord> = read_jsonl(path)?;
            let samples: Vec<LabeledSample<f64>> = records.iter().filter_map(LabeledSample::from_record).collect();
            if samples.is_empty() {
                return Err(Error::Config(format!("{}: no labeled probe records", path.display())));
            }
            let calibration = build_axiom_set(&samples, &cfg.train.calibration)?;
            let axioms = axioms_from_calibration(&calibration)?;
            let targets = desired_targets(&records, cfg.train.tolerance_sigmas)?;
            (calibration, axioms, targets)
        }
        None => {
            let trained = train(&training_scene(&cfg.scene, &cfg.train), &cfg.detector, &cfg.train)?;
            out.write("probes.jsonl", to_jsonl(&trained.records)?)?;
            (trained.calibration, trained.axioms, trained.targets)
        }
    };
    for s in &calibration.skipped {
        log::warn!("probe {} not calibrated: {}", s.probe, s.reason);
    }
    write_axioms(out, &axioms, &targets)?;
    out.json("calibration.json", &calibration)
}

fn read_axioms(path: &Path) -> Result<Vec<AxiomFormula<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let axioms = parse_axiom_file(&text).map_err(|e| match e {
        Error::Syntax { line, column, message } => Error::Config(format!(
            "{}:{line}:{column}: {message}",
            path.display()
        )),
        other => other,
    })?;
    if axioms.is_empty() {
        return Err(Error::EmptyAxiomSet(format!("{} holds no axioms", path.display())));
    }
    Ok(axioms)
}

fn read_frame(dir: &Path, frame: usize) -> Result<pstl_percept::GrayImage> {
    let path = frame_path(dir, frame);
    if !path.is_file() {
        return Err(Error::MissingImage { frame, path });
    }
    read_pgm(&path)
}

fn cmd_monitor(cfg: &ExperimentConfig, args: &MonitorArgs, out: &mut Staging) -> Result<()> {
    let axioms = read_axioms(&args.axioms)?;
    let records: Vec<DetectionRecord> = read_jsonl(&args.detections)?;
    let frame_count = args
        .frame_count
        .unwrap_or_else(|| records.iter().map(|r| r.frame + 1).max().unwrap_or(0));
    let images = (0..frame_count)
        .map(|t| read_frame(&args.frames, t))
        .collect::<Result<Vec<_>>>()?;
    let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); frame_count];
    for r in &records {
        let img = images.get(r.frame).ok_or_else(|| {
            Error::Misaligned(format!("detection at frame {} beyond frame count {frame_count}", r.frame))
        })?;
        frames[r.frame].push(r.to_detection(img.width(), img.height())?);
    }
    let reports = monitor_stream(&axioms, &frames, &images, &cfg.run.monitor)?;
    let verdicts: Vec<&pstl_percept::DetectionVerdict> = reports.iter().flat_map(|r| &r.verdicts).collect();
    let flagged = verdicts.iter().filter(|v| v.erroneous).count();
    log::info!("{flagged} of {} detections flagged", verdicts.len());
    out.write("verdicts.jsonl", to_jsonl(verdicts)?)
}

fn cmd_run(cfg: &ExperimentConfig, args: &RunArgs, out: &mut Staging) -> Result<()> {
    let mut methods = args
        .methods
        .iter()
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    methods.sort();
    methods.dedup();

    let (axioms, targets) = match (&args.axioms, &args.targets) {
        (Some(a), Some(t)) => {
            let text = std::fs::read_to_string(t).map_err(|e| Error::io(t, e))?;
            (read_axioms(a)?, serde_json::from_str::<DesiredTargets>(&text)?)
        }
        _ => {
            let trained = train(&training_scene(&cfg.scene, &cfg.train), &cfg.detector, &cfg.train)?;
            (trained.axioms, trained.targets)
        }
    };
    write_axioms(out, &axioms, &targets)?;

    let result = run_closed_loop(&cfg.scene, &cfg.detector, &axioms, &targets, &methods, &cfg.run)?;
    out.write("report.json", result.report.to_json()?)?;
    out.write("report.txt", result.report.to_table())?;
    for (method, run) in &result.runs {
        out.write(&format!("curves_{method}.csv"), run.report.curve_csv())?;
        if *method == Method::Cogsense {
            out.write(&format!("adaptation_{method}.jsonl"), to_jsonl(&run.adaptations)?)?;
        }
    }
    print!("{}", result.report.to_table());
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, args: &EvalArgs, out: &mut Staging) -> Result<()> {
    let gt: Vec<DetectionRecord> = read_jsonl(&args.gt)?;
    let dets: Vec<DetectionRecord> = read_jsonl(&args.detections)?;
    let frame_count = gt.iter().chain(&dets).map(|r| r.frame + 1).max().unwrap_or(0);
    let to_det = |r: &DetectionRecord| {
        pstl_percept::BoundingBox::new(r.x, r.y, r.w, r.h).and_then(|b| {
            let d = Detection::new(r.frame, b, r.class, r.conf)?;
            Ok(match r.id {
                Some(id) => d.with_track(id),
                None => d,
            })
        })
    };
    let mut tracks: BTreeMap<u64, Track> = BTreeMap::new();
    for r in &gt {
        let d = to_det(r)?;
        let id = d.track_id.ok_or_else(|| {
            Error::InvalidDetection(format!("ground truth at frame {} has no id", r.frame))
        })?;
        tracks.entry(id).or_insert_with(|| Track::new(id, d.class_id)).push(d)?;
    }
    let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); frame_count];
    for r in &dets {
        frames[r.frame].push(to_det(r)?);
    }
    let tracks: Vec<Track> = tracks.into_values().collect();
    let report = evaluate(&tracks, &frames, &cfg.run.eval);
    out.json("eval.json", &report)?;
    out.write("curve.csv", report.curve_csv())?;
    println!(
        "tp {} fp {} fn {} precision {:.4} recall {:.4}",
        report.tp(),
        report.fp(),
        report.fn_(),
        report.overall.precision,
        report.overall.recall
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = load_config(cli)?;
    let mut out = Staging::new(&cli.out)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &mut out)?,
        Command::Train(args) => cmd_train(&cfg, args, &mut out)?,
        Command::Monitor(args) => cmd_monitor(&cfg, args, &mut out)?,
        Command::Run(args) => cmd_run(&cfg, args, &mut out)?,
        Command::Eval(args) => cmd_eval(&cfg, args, &mut out)?,
    }
    out.commit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(files) => {
            log::info!("wrote {} files to {}", files.len(), cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
