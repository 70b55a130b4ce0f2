//! The `jeap` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors
//! (including failed oracle checks).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use jeap_core::eval::attention::{attention_map, QueryToken};
use jeap_core::eval::retrieval::ExclusionRule;
use jeap_core::eval::{
    eval_clips, knn_protocol, motion_protocol, retrieval_protocol, static_baseline, EvalReport, FeatureKind,
};
use jeap_core::io::checkpoint::{load_checkpoint, save_checkpoint};
use jeap_core::io::config::{load_config, serialize_config, RunConfig};
use jeap_core::io::dataset::{write_split, Split};
use jeap_core::io::pgm::{upscale, write_pgm};
use jeap_core::io::write_atomic;
use jeap_core::model::{AgentModel, AgentParams, ModelConfig};
use jeap_core::oracle::full_loss_check;
use jeap_core::train::{TrainState, Trainer, METRICS_HEADER};
use jeap_core::CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Gradient oracle tolerance in 64-bit arithmetic.
pub const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "jeap", version, about = "Joint embedding, action and prediction agent on a synthetic egocentric world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelSource {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to evaluate; without one the untrained initialization is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Feature {
    Embedding,
    Logits,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    KeepCurrent,
    ExcludeCurrent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Token {
    Action,
    State,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic dataset splits and their manifests.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Episodes (one clip each) written for the training split.
        #[arg(long, default_value_t = 64)]
        train_episodes: usize,
    },
    /// Train from scratch; writes metrics.csv, checkpoint.jeap and config.txt.
    Train {
        #[command(flatten)]
        common: Common,
        /// Print a progress line every this many steps (0 disables).
        #[arg(long, default_value_t = 100)]
        log_every: u64,
    },
    /// Next-state feature retrieval on the held-out split.
    EvalRetrieval {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, value_enum)]
        feature: Option<Feature>,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
    },
    /// Scene-class k-NN on observer features.
    EvalKnn {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Autoregressive motion prediction error against the static baseline.
    EvalMotion {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Finite-difference oracles for every primitive and the full objective.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Random coordinates probed per large parameter tensor.
        #[arg(long, default_value_t = 16)]
        probes: usize,
    },
    /// Attention of a query token over the image patches of one step.
    InspectAttn {
        #[command(flatten)]
        source: ModelSource,
        /// Index of the held-out clip.
        #[arg(long, default_value_t = 0)]
        clip: usize,
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        #[arg(long, value_enum, default_value_t = Token::State)]
        token: Token,
    },
    /// Parameter totals of a model preset.
    ParamCount {
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
    }
}

fn resolve_config(common: &Common, fallback: Option<RunConfig>) -> Result<RunConfig, CoreError> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => load_config(path)?,
        (None, Some(cfg)) => cfg,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Configuration, model and both parameter sets to evaluate.
struct Loaded {
    cfg: RunConfig,
    model: AgentModel,
    predictor: AgentParams<f32>,
    observer: AgentParams<f32>,
}

fn load_model(source: &ModelSource) -> Result<Loaded, CoreError> {
    let (cfg, state) = match &source.checkpoint {
        Some(path) => {
            let (saved, state) = load_checkpoint::<f32>(path)?;
            let cfg = resolve_config(&source.common, Some(saved))?;
            (cfg, state)
        }
        None => {
            let cfg = resolve_config(&source.common, None)?;
            let model = AgentModel::new(cfg.train.model.clone())?;
            let state = TrainState::new(&model, &cfg.train)?;
            (cfg, state)
        }
    };
    let model = AgentModel::new(cfg.train.model.clone())?;
    model.check_params(&state.predictor)?;
    Ok(Loaded {
        cfg,
        model,
        predictor: state.predictor,
        observer: state.observer,
    })
}

fn write_report(dir: &Path, name: &str, report: &EvalReport) -> Result<(), CoreError> {
    write_atomic(&dir.join(name), report.to_key_value_text().as_bytes())?;
    print!("{}", report.to_text());
    Ok(())
}

fn dispatch(command: Command) -> Result<i32, CoreError> {
    match command {
        Command::GenData { common, train_episodes } => {
            let cfg = resolve_config(&common, None)?;
            let dir = cfg.out_dir.join("data");
            for split in Split::ALL {
                let (data, manifest) = write_split(&dir, &cfg, split, train_episodes)?;
                println!("{}: {} ({})", split.name(), data.display(), manifest.display());
            }
            Ok(EXIT_OK)
        }
        Command::Train { common, log_every } => train(&common, log_every),
        Command::EvalRetrieval { source, feature, rule } => {
            let l = load_model(&source)?;
            let kind = match feature {
                Some(Feature::Embedding) => FeatureKind::Embedding,
                Some(Feature::Logits) => FeatureKind::Logits,
                None => l.cfg.eval.feature,
            };
            let rule = match rule {
                Some(Rule::KeepCurrent) => ExclusionRule::KeepCurrent,
                Some(Rule::ExcludeCurrent) => ExclusionRule::ExcludeCurrent,
                None => l.cfg.eval.rule,
            };
            let clips = eval_clips(&l.cfg.train.world, l.cfg.seed(), &l.cfg.eval)?;
            let score = retrieval_protocol(&l.model, &l.predictor, &l.observer, &clips, kind, rule)?;
            let gallery: usize = clips.iter().map(|c| c.steps()).sum();
            let excluded = usize::from(rule == ExclusionRule::ExcludeCurrent);
            let report = EvalReport {
                retrieval: Some(score),
                knn: None,
                motion: None,
                static_motion: None,
                gallery_size: gallery - excluded,
                queries: clips.iter().map(|c| c.steps() - 1).sum(),
            };
            write_report(&l.cfg.out_dir, "retrieval.txt", &report)?;
            Ok(EXIT_OK)
        }
        Command::EvalKnn { source } => {
            let l = load_model(&source)?;
            let score = knn_protocol(&l.model, &l.observer, &l.cfg.train.world, l.cfg.seed(), &l.cfg.eval)?;
            let report = EvalReport {
                retrieval: None,
                knn: Some(score),
                motion: None,
                static_motion: None,
                gallery_size: 0,
                queries: 0,
            };
            write_report(&l.cfg.out_dir, "knn.txt", &report)?;
            Ok(EXIT_OK)
        }
        Command::EvalMotion { source } => {
            let l = load_model(&source)?;
            let clips = eval_clips(&l.cfg.train.world, l.cfg.seed(), &l.cfg.eval)?;
            let fps = l.cfg.train.world.fps;
            let mask = l.cfg.eval.mask_invisible;
            let report = EvalReport {
                retrieval: None,
                knn: None,
                motion: Some(motion_protocol(&l.model, &l.predictor, &clips, fps, mask)?),
                static_motion: Some(static_baseline(&clips, fps, mask)?),
                gallery_size: 0,
                queries: 0,
            };
            write_report(&l.cfg.out_dir, "motion.txt", &report)?;
            Ok(EXIT_OK)
        }
        Command::Gradcheck { seed, probes } => gradcheck(seed, probes),
        Command::InspectAttn {
            source,
            clip,
            step,
            layer,
            head,
            token,
        } => inspect_attention(&source, clip, step, layer, head, token),
        Command::ParamCount { preset } => {
            let model = AgentModel::new(ModelConfig::preset(&preset)?)?;
            let b = model.param_breakdown();
            let mut s = String::new();
            let _ = writeln!(s, "preset={preset}");
            let _ = writeln!(s, "total={}", b.without_prototypes());
            let _ = writeln!(s, "total_with_prototypes={}", b.total());
            for (name, n) in [
                ("image_projector", b.image_projector),
                ("action_projector", b.action_projector),
                ("queries", b.queries),
                ("backbone", b.backbone),
                ("rep_head_mlp", b.rep_head_mlp),
                ("state_head_mlp", b.state_head_mlp),
                ("action_head", b.action_head),
                ("prototypes", b.prototypes()),
            ] {
                let _ = writeln!(s, "{name}={n}");
            }
            print!("{s}");
            Ok(EXIT_OK)
        }
    }
}

fn train(common: &Common, log_every: u64) -> Result<i32, CoreError> {
    let cfg = resolve_config(common, None)?;
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir.join("config.txt"), serialize_config(&cfg).as_bytes())?;
    let mut trainer: Trainer<f32> = Trainer::new(cfg.train.clone())?;
    // Rows stream into a side file that replaces metrics.csv once complete.
    let partial = dir.join("metrics.csv.partial");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&partial)?);
    writeln!(out, "{METRICS_HEADER}")?;
    let started = std::time::Instant::now();
    while !trainer.is_done() {
        let row = trainer.step()?;
        writeln!(out, "{}", row.csv_row())?;
        if log_every > 0 && (row.step % log_every == 0 || trainer.is_done()) {
            eprintln!(
                "step {:>6}  loss {:.4}  (rep {:.4} pred {:.4} act {:.4})  lr {:.2e}  {:.0}s",
                row.step,
                row.loss_total,
                row.loss_rep,
                row.loss_pred,
                row.loss_act,
                row.lr,
                started.elapsed().as_secs_f64()
            );
        }
    }
    out.flush()?;
    drop(out);
    std::fs::rename(&partial, dir.join("metrics.csv"))?;
    save_checkpoint(&dir.join("checkpoint.jeap"), &cfg, &trainer.state)?;
    println!("trained {} steps; outputs in {}", trainer.state.step, dir.display());
    Ok(EXIT_OK)
}

fn gradcheck(seed: u64, probes: usize) -> Result<i32, CoreError> {
    let mut failed = 0;
    for report in jeap_tensor::gradcheck::primitive_suite(seed, 1e-6)? {
        let ok = report.max_rel_err < GRADCHECK_TOL;
        failed += usize::from(!ok);
        println!("{} {:<24} rel_err {:.3e}", if ok { "PASS" } else { "FAIL" }, report.name, report.max_rel_err);
    }
    let check = full_loss_check(seed, 1e-5, probes)?;
    let ok = check.rel_err < GRADCHECK_TOL;
    failed += usize::from(!ok);
    println!(
        "{} {:<24} rel_err {:.3e}  ({} of {} coordinates; worst tensor {} at {:.3e})",
        if ok { "PASS" } else { "FAIL" },
        "full_objective",
        check.rel_err,
        check.probed,
        check.params,
        check.worst.0,
        check.worst.1
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_RUNTIME })
}

fn inspect_attention(source: &ModelSource, clip: usize, step: usize, layer: usize, head: usize, token: Token) -> Result<i32, CoreError> {
    let l = load_model(source)?;
    let clips = eval_clips(&l.cfg.train.world, l.cfg.seed(), &l.cfg.eval)?;
    let item = clips
        .get(clip)
        .ok_or_else(|| CoreError::Input(format!("clip {clip} outside the {} held-out clips", clips.len())))?;
    let token = match token {
        Token::Action => QueryToken::Action,
        Token::State => QueryToken::State,
    };
    let map = attention_map(&l.model, &l.predictor, item.as_clip(), layer, head, step, token)?;
    let dir = l.cfg.out_dir.join("attention");
    let stem = format!(
        "clip{clip}_step{step}_layer{layer}_head{head}_{}",
        if token == QueryToken::Action { "action" } else { "state" }
    );
    let (w, h) = map.grid;
    let factor = l.cfg.train.model.patch_size;
    write_pgm(&dir.join(format!("{stem}_patches.pgm")), &upscale(&map.patch_weights, w, h, factor), w * factor, h * factor)?;
    write_pgm(&dir.join(format!("{stem}_matrix.pgm")), &map.matrix, map.len, map.len)?;
    let mut text = String::new();
    for r in 0..map.len {
        let row: Vec<String> = map.matrix[r * map.len..(r + 1) * map.len].iter().map(|v| format!("{v:.6e}")).collect();
        let _ = writeln!(text, "{}", row.join(" "));
    }
    write_atomic(&dir.join(format!("{stem}_matrix.txt")), text.as_bytes())?;
    let frame = &item.frames[step];
    let pixels: Vec<f64> = (0..frame.height() * frame.width())
        .map(|i| (0..frame.channels()).map(|c| frame.pixels()[c * frame.height() * frame.width() + i] as f64).sum::<f64>() / frame.channels() as f64)
        .collect();
    write_pgm(&dir.join(format!("{stem}_frame.pgm")), &pixels, frame.width(), frame.height())?;
    let mass: f64 = map.patch_weights.iter().sum();
    println!(
        "query token {} attends {:.4} of its weight to the {} patches of step {step}; files in {}",
        map.query_index,
        mass,
        map.patch_weights.len(),
        dir.display()
    );
    Ok(EXIT_OK)
}
