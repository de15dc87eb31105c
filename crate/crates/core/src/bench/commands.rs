use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{artifact_id, BenchError, ExperimentConfig, FigureRow, FigureTable, Profile, RunManifest};
use crate::adapt::{adapt, adaptation_sweep, condition_seed, AdaptConfig, SweepGrid};
use crate::dataset::synth::{write_corpus, write_noise_recordings, SynthConfig, SynthSummary};
use crate::dataset::{
    build_benchmark, derive_seed, plan_noisy_set, read_manifest, sample_shots, scan_default, write_manifest,
    Benchmark, ClipLoader, LabeledSet, NoiseBank, NoiseCondition, NoiseSource, Split, SNR_GRID,
};
use crate::nn::{load_weights, save_weights, Model};
use crate::train::{build_baseline, build_noise_aware, evaluate, EvalReport, NoiseAwareMix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Baseline,
    NoiseAware(f64),
}

impl ModelKind {
    pub fn id(&self) -> String {
        match self {
            ModelKind::Baseline => "baseline".into(),
            ModelKind::NoiseAware(f) => format!("noise_aware_{}", (f * 100.0).round() as u32),
        }
    }

    /// `baseline` or `noise-aware` with a fraction from the allowed set.
    pub fn parse(kind: &str, fraction: Option<f64>) -> Result<Self, BenchError> {
        match (kind, fraction) {
            ("baseline", None) => Ok(ModelKind::Baseline),
            ("baseline", Some(_)) => Err(BenchError::Usage("--fraction only applies to noise-aware".into())),
            ("noise-aware", Some(f)) if NoiseAwareMix::FRACTIONS.contains(&f) => Ok(ModelKind::NoiseAware(f)),
            ("noise-aware", _) => Err(BenchError::Usage(
                "noise-aware needs --fraction one of 0.2, 0.4, 0.6, 0.8, 1.0".into(),
            )),
            (other, _) => Err(BenchError::Usage(format!("unknown model kind '{other}' (baseline|noise-aware)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BenchError> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            other => Err(BenchError::Usage(format!("unknown figure '{other}' (fig3|fig4|fig5|fig6)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalTarget {
    Clean,
    Noisy(NoiseCondition),
}

/// Parses `clean`, `source:snr` and bare `source` (every grid SNR), comma separated.
pub fn parse_conditions(spec: &str) -> Result<Vec<EvalTarget>, BenchError> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "clean" {
            out.push(EvalTarget::Clean);
            continue;
        }
        let (name, snr) = match item.split_once(':') {
            Some((n, s)) => (n, Some(s.parse::<i32>().map_err(|_| BenchError::Usage(format!("bad SNR in '{item}'")))?)),
            None => (item, None),
        };
        let source: NoiseSource = name.parse()?;
        match snr {
            Some(s) => out.push(EvalTarget::Noisy(NoiseCondition::new(source, s)?)),
            None => out.extend(SNR_GRID.iter().map(|&s| EvalTarget::Noisy(NoiseCondition { source, snr_db: s }))),
        }
    }
    if out.is_empty() {
        return Err(BenchError::Usage("no evaluation conditions given".into()));
    }
    Ok(out)
}

/// Paths and configuration shared by every command.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub data_root: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    /// Where trained models and default outputs live.
    pub work_dir: PathBuf,
    /// Use this benchmark manifest instead of building one from the corpus.
    pub manifest: Option<PathBuf>,
    pub quiet: bool,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            cfg,
            data_root: None,
            noise_dir: None,
            work_dir: work_dir.into(),
            manifest: None,
            quiet: false,
        }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn data_root(&self) -> Result<&Path, BenchError> {
        self.data_root
            .as_deref()
            .ok_or_else(|| BenchError::Usage("no data root (--data-root or NOISEKWS_DATA_ROOT)".into()))
    }

    pub fn benchmark(&self) -> Result<Benchmark, BenchError> {
        let root = self.data_root()?;
        match &self.manifest {
            Some(m) => {
                let file = fs::File::open(m).map_err(BenchError::io(m))?;
                Ok(read_manifest(file, root)?)
            }
            None => Ok(build_benchmark(&scan_default(root)?, &self.cfg.benchmark)?),
        }
    }

    pub fn loader(&self) -> Result<ClipLoader, BenchError> {
        Ok(ClipLoader::new(self.data_root()?))
    }

    /// Noise bank able to serve `sources`; recorded sources need `--noise-dir`.
    pub fn bank(&self, sources: &[NoiseSource]) -> Result<NoiseBank, BenchError> {
        let recorded: Vec<NoiseSource> = sources.iter().copied().filter(|s| !s.is_generated()).collect();
        match &self.noise_dir {
            Some(dir) => Ok(NoiseBank::load(dir, &recorded)?),
            None if recorded.is_empty() => Ok(NoiseBank::generated_only()),
            None => Err(BenchError::Usage(format!(
                "noise source '{}' needs recordings (--noise-dir)",
                recorded[0]
            ))),
        }
    }

    fn ensure_dir(&self, dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(dir).map_err(BenchError::io(dir))
    }

    /// Cache path of a model, keyed by everything that determines its weights:
    /// the exact example list, frontend, architecture and training settings.
    pub fn model_path(&self, kind: ModelKind, seed: u64) -> Result<PathBuf, BenchError> {
        let mut train = self.cfg.train;
        train.seed = seed;
        let mut manifest = Vec::new();
        write_manifest(&self.benchmark()?, &mut manifest)?;
        let key = serde_json::json!({
            "kind": kind.id(),
            "frontend": self.cfg.frontend,
            "arch": self.cfg.arch,
            "train": train,
            "examples": artifact_id(&manifest),
        });
        let hash = artifact_id(serde_json::to_string(&key)?.as_bytes());
        Ok(self.work_dir.join("models").join(format!("{}-s{seed}-{}.nkw", kind.id(), &hash[..12])))
    }

    /// Trains `kind` with training seed `seed` and writes weights, log and run manifest to `out`.
    fn train_to(&self, kind: ModelKind, seed: u64, out: &Path) -> Result<Model<f32>, BenchError> {
        let mut cfg = self.cfg.train;
        cfg.seed = seed;
        let bench = self.benchmark()?;
        let mut loader = self.loader()?;
        let id = kind.id();
        self.say(format!("training {id} (seed {seed}, {} epochs)", cfg.max_epochs));
        let progress = |e: &crate::train::EpochLog| {
            self.say(format!(
                "  {id} epoch {:>3}  lr {:.0e}  loss {:.4}  train {:.4}  val {:.4}",
                e.epoch, e.lr, e.train_loss, e.train_acc, e.val_acc
            ))
        };
        let (model, log) = match kind {
            ModelKind::Baseline => {
                build_baseline(&bench, &mut loader, &self.cfg.frontend, &self.cfg.arch, &cfg, progress)?
            }
            ModelKind::NoiseAware(f) => {
                let mix = NoiseAwareMix::new(f)?;
                let bank = self.bank(&NoiseSource::PRETRAINING)?;
                build_noise_aware(&bench, &mut loader, &bank, &self.cfg.frontend, &self.cfg.arch, &mix, &cfg, progress)?
            }
        };
        if let Some(dir) = out.parent() {
            self.ensure_dir(dir)?;
        }
        save_weights(&model, None, out)?;
        let log_path = sibling(out, ".log.csv");
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        fs::write(&log_path, buf).map_err(BenchError::io(&log_path))?;
        let mut run = RunManifest::start("pretrain", &self.cfg, &[seed])?;
        run.output(out)?;
        run.output(&log_path)?;
        run.finish(out)?;
        Ok(model)
    }

    /// Loads the cached model for (`kind`, `seed`) or trains it.
    pub fn ensure_model(&self, kind: ModelKind, seed: u64) -> Result<Model<f32>, BenchError> {
        let path = self.model_path(kind, seed)?;
        if path.is_file() {
            self.say(format!("using cached {}", path.display()));
            return Ok(load_weights(&path)?.model);
        }
        self.train_to(kind, seed, &path)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Noisy copy of the whole test split, mixed with the shared per-condition seed.
fn noisy_test_set(
    ws: &Workspace,
    bench: &Benchmark,
    loader: &mut ClipLoader,
    bank: &NoiseBank,
    cond: NoiseCondition,
    seed: u64,
) -> Result<LabeledSet, BenchError> {
    let plan = plan_noisy_set(bench, Split::Test, &[cond], 1.0, condition_seed(seed, cond))?;
    Ok(bench.featurize_noisy(&plan, loader, bank, &ws.cfg.frontend)?)
}

/// Writes the benchmark manifest; returns its path.
pub fn cmd_prepare(ws: &Workspace, out: Option<&Path>) -> Result<PathBuf, BenchError> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| ws.work_dir.join("manifest.csv"));
    let bench = ws.benchmark()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ws.ensure_dir(dir)?;
    }
    let mut buf = Vec::new();
    write_manifest(&bench, &mut buf)?;
    fs::write(&out, &buf).map_err(BenchError::io(&out))?;
    let mut run = RunManifest::start("prepare", &ws.cfg, &[ws.cfg.benchmark.seed])?;
    run.output(&out)?;
    run.finish(&out)?;
    ws.say(format!("{} examples → {}", bench.examples.len(), out.display()));
    Ok(out)
}

/// Trains one pretrained model and writes it (with `<out>.log.csv`).
pub fn cmd_pretrain(ws: &Workspace, kind: ModelKind, out: Option<&Path>) -> Result<PathBuf, BenchError> {
    let seed = ws.cfg.train.seed;
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => ws.model_path(kind, seed)?,
    };
    ws.train_to(kind, seed, &out)?;
    Ok(out)
}

/// Adapts `weights` to `cond` and writes the provenance-stamped result.
pub fn cmd_adapt(
    ws: &Workspace,
    weights: &Path,
    cond: NoiseCondition,
    cfg: AdaptConfig,
    seed: u64,
    out: &Path,
) -> Result<PathBuf, BenchError> {
    cfg.validate()?;
    let base = Arc::new(load_weights(weights)?.model);
    let bench = ws.benchmark()?;
    let mut loader = ws.loader()?;
    let bank = ws.bank(&[cond.source])?;
    let shots = sample_shots(&bench, &mut loader, &bank, &ws.cfg.frontend, cond, cfg.shots_per_class, derive_seed(seed, 90, 0))?;
    let adapted = adapt(base, &shots, &cfg, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ws.ensure_dir(dir)?;
    }
    adapted.save(out)?;
    let mut run = RunManifest::start("adapt", &serde_json::json!({ "experiment": ws.cfg, "adapt": cfg, "condition": cond }), &[seed])?;
    run.input(weights)?;
    run.output(out)?;
    run.finish(out)?;
    ws.say(format!("{} SGD steps at {cond} → {}", adapted.steps, out.display()));
    Ok(out.to_path_buf())
}

/// Accuracy of `weights` on the test split for each target, one row each.
pub fn cmd_evaluate(
    ws: &Workspace,
    weights: &Path,
    targets: &[EvalTarget],
    out: Option<&Path>,
) -> Result<EvalReport, BenchError> {
    let model = load_weights(weights)?.model;
    let model_id = weights.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    let bench = ws.benchmark()?;
    let mut loader = ws.loader()?;
    let sources: Vec<NoiseSource> = targets
        .iter()
        .filter_map(|t| match t {
            EvalTarget::Noisy(c) => Some(c.source),
            EvalTarget::Clean => None,
        })
        .collect();
    let bank = ws.bank(&sources)?;
    let seed = ws.cfg.train.seed;
    let mut report = EvalReport::default();
    for t in targets {
        let row = match *t {
            EvalTarget::Clean => {
                let set = bench.featurize(Split::Test, &mut loader, &ws.cfg.frontend)?;
                evaluate(&model, &set, &model_id, None)?
            }
            EvalTarget::Noisy(cond) => {
                let set = noisy_test_set(ws, &bench, &mut loader, &bank, cond, seed)?;
                evaluate(&model, &set, &model_id, Some(cond))?
            }
        };
        report.rows.push(row);
    }
    if let Some(out) = out {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::write(out, buf).map_err(BenchError::io(out))?;
        let mut run = RunManifest::start("evaluate", &ws.cfg, &[seed])?;
        run.input(weights)?;
        run.output(out)?;
        run.finish(out)?;
    }
    Ok(report)
}

/// Warning printed before a paper-profile experiment.
pub const PAPER_WARNING: &str = "warning: the paper profile replicates the full-scale study \
(full corpus, 50-epoch pretraining, every grid cell); this is a long-running optional job";

/// Runs the grid behind one figure for every configured seed, building
/// any missing pretrained model on the way.
pub fn cmd_experiment(ws: &Workspace, figure: Figure, out: Option<&Path>) -> Result<FigureTable, BenchError> {
    if ws.cfg.profile == Profile::Paper {
        eprintln!("{PAPER_WARNING}");
    }
    let bench = ws.benchmark()?;
    let mut loader = ws.loader()?;
    let mut table = FigureTable::default();
    for &seed in &ws.cfg.seeds {
        match figure {
            Figure::Fig3 | Figure::Fig4 => {
                let kinds: Vec<ModelKind> = match figure {
                    Figure::Fig3 => NoiseAwareMix::FRACTIONS.iter().map(|&f| ModelKind::NoiseAware(f)).collect(),
                    _ => vec![ModelKind::Baseline, ModelKind::NoiseAware(ws.cfg.selected_fraction)],
                };
                let models = kinds
                    .iter()
                    .map(|&k| Ok((k.id(), ws.ensure_model(k, seed)?)))
                    .collect::<Result<Vec<_>, BenchError>>()?;
                let bank = ws.bank(&NoiseSource::PRETRAINING)?;
                for cond in NoiseCondition::grid(&NoiseSource::PRETRAINING) {
                    ws.say(format!("{} seed {seed}: testing at {cond}", figure.id()));
                    let set = noisy_test_set(ws, &bench, &mut loader, &bank, cond, seed)?;
                    for (id, model) in &models {
                        let row = evaluate(model, &set, id, Some(cond))?;
                        table.rows.push(FigureRow {
                            figure_id: figure.id().into(),
                            model_id: id.clone(),
                            noise_source: cond.source.to_string(),
                            train_snr_db: None,
                            test_snr_db: Some(cond.snr_db),
                            shots: None,
                            epochs: None,
                            seed,
                            accuracy: row.accuracy,
                        });
                    }
                }
            }
            Figure::Fig5 | Figure::Fig6 => {
                let kinds = match figure {
                    Figure::Fig5 => vec![ModelKind::Baseline, ModelKind::NoiseAware(ws.cfg.selected_fraction)],
                    _ => vec![ModelKind::Baseline],
                };
                let grid = match figure {
                    Figure::Fig5 => SweepGrid {
                        sources: NoiseSource::ON_SITE.to_vec(),
                        adapt_snrs: ws.cfg.fig5_adapt_snrs.clone(),
                        test_snrs: Some(SNR_GRID.to_vec()),
                        shots: vec![1],
                        epochs: vec![1],
                        seeds: vec![seed],
                        lr: ws.cfg.adapt_lr,
                        include_before: false,
                    },
                    _ => SweepGrid {
                        sources: NoiseSource::ON_SITE.to_vec(),
                        adapt_snrs: ws.cfg.fig6_snrs.clone(),
                        test_snrs: None,
                        shots: ws.cfg.fig6_shots.clone(),
                        epochs: ws.cfg.fig6_epochs.clone(),
                        seeds: vec![seed],
                        lr: ws.cfg.adapt_lr,
                        include_before: true,
                    },
                };
                let bank = ws.bank(&NoiseSource::ON_SITE)?;
                for kind in kinds {
                    let base = Arc::new(ws.ensure_model(kind, seed)?);
                    ws.say(format!("{} seed {seed}: adapting {}", figure.id(), kind.id()));
                    for r in adaptation_sweep(base, &bench, &mut loader, &bank, &ws.cfg.frontend, &grid)? {
                        let adapted = r.train_snr_db.is_some();
                        table.rows.push(FigureRow {
                            figure_id: figure.id().into(),
                            model_id: kind.id(),
                            noise_source: r.source.to_string(),
                            train_snr_db: r.train_snr_db,
                            test_snr_db: Some(r.test_snr_db),
                            shots: adapted.then_some(r.shots),
                            epochs: Some(r.epochs),
                            seed,
                            accuracy: r.accuracy,
                        });
                    }
                }
            }
        }
    }
    if let Some(out) = out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            ws.ensure_dir(dir)?;
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        fs::write(out, buf).map_err(BenchError::io(out))?;
        let mut run = RunManifest::start(&format!("experiment {}", figure.id()), &ws.cfg, &ws.cfg.seeds)?;
        run.output(out)?;
        run.finish(out)?;
    }
    Ok(table)
}

/// Writes a synthetic corpus to `root` and, if given, recordings for every
/// recorded noise source to `noise_dir`.
pub fn cmd_synth(root: &Path, noise_dir: Option<&Path>, cfg: &SynthConfig) -> Result<SynthSummary, BenchError> {
    let summary = write_corpus(root, cfg)?;
    if let Some(dir) = noise_dir {
        write_noise_recordings(dir, cfg.recording_secs, cfg.seed)?;
    }
    Ok(summary)
}
