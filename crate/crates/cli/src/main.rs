//! `longtail`: synthetic data, attributes, augmentation, training, evaluation
//! and pseudo-label audits. Every output goes to a path given on the command
//! line; nothing is read from the environment.
//!
//! Exit status is 0 on success, 1 when inputs fail validation and 2 on a
//! usage error.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use longtail_core::attributes::{
    compute_dataset_attributes, jaccard_overlap, stratify_topk, AttributeConfig, AttributeVector,
};
use longtail_core::augment::{apply_policy, apply_strategy, AugmentationPolicy, Strategy};
use longtail_core::contrastive::adjusted_rand_index;
use longtail_core::eval::{stratified_report, write_report, MISS_THRESHOLD};
use longtail_core::nn::{read_checkpoint, write_checkpoint};
use longtail_core::trainer::{run_training, training_policies, write_log, TrainConfig, TrainOutcome, TrainedModel};
use longtail_core::trajdata::{generate_synthetic_dataset, parse_scene_file, write_scene_file, Scene, SceneRecord, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "longtail", version, about = "Long-tail trajectory analysis and contrastive training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene file.
    Gen(GenArgs),
    /// Compute the attribute table, Top-k% strata and pairwise overlaps.
    Attrs(AttrsArgs),
    /// Dump one augmented view per scene.
    Augment(AugmentArgs),
    /// Train a model and write its checkpoint and loss log.
    Train(TrainArgs),
    /// Stratified minADE/minFDE/miss-rate tables for a checkpoint.
    Eval(EvalArgs),
    /// Train, then dump every clustering round's pseudo-labels and ARI series.
    ClusterAudit(AuditArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Class probabilities of the five maneuvers, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 5, default_values_t = [0.8, 0.05, 0.05, 0.05, 0.05])]
    weights: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttrsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Top-k% thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0])]
    top: Vec<f64>,
    /// Attribute table.
    #[arg(long)]
    out: PathBuf,
    /// Subset membership per attribute and threshold.
    #[arg(long)]
    strata_out: Option<PathBuf>,
    /// Jaccard overlap per attribute pair and threshold.
    #[arg(long)]
    jaccard_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Simplify,
    Shift,
    Mask,
    Subset,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Simplify => Strategy::Simplify,
            StrategyArg::Shift => Strategy::Shift,
            StrategyArg::Mask => Strategy::Mask,
            StrategyArg::Subset => Strategy::Subset,
        }
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Apply this strategy instead of the generator's choice; intensities
    /// still come from the generator.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
}

#[derive(Args)]
struct TrainSetup {
    #[arg(long = "in")]
    input: PathBuf,
    /// TOML training config; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    setup: TrainSetup,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttributeArg {
    Error,
    Risk,
    Complexity,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Attribute used to rank scenes into Top-k% subsets.
    #[arg(long, value_enum, default_value = "error")]
    attribute: AttributeArg,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0])]
    top: Vec<f64>,
    /// Horizons in seconds; defaults to the full prediction window.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<f64>,
    #[arg(long, default_value_t = MISS_THRESHOLD)]
    miss_threshold: f64,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    setup: TrainSetup,
    /// One row per scene and clustering round.
    #[arg(long)]
    labels_out: PathBuf,
    /// ARI of each round against the previous one and the true maneuvers.
    #[arg(long)]
    ari_out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load(path: &Path) -> Result<Vec<Scene>> {
    parse_scene_file(path).with_context(|| format!("reading {}", path.display()))
}

fn attributes(scenes: &[Scene]) -> Result<Vec<AttributeVector>> {
    Ok(compute_dataset_attributes(scenes, &AttributeConfig::default())?)
}

const ATTR_NAMES: [&str; 3] = ["y_e", "y_r", "y_s"];

fn gen(a: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        seed: a.seed,
        class_weights: a.weights.try_into().expect("clap enforces five weights"),
        ..SynthConfig::default()
    };
    let scenes = generate_synthetic_dataset(&cfg)?;
    write_scene_file(&a.out, &scenes)?;
    Ok(())
}

fn attrs(a: AttrsArgs) -> Result<()> {
    let scenes = load(&a.input)?;
    let attrs = attributes(&scenes)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record(["scene_id", "y_e", "y_r", "y_s", "maneuver_label"])?;
    for (s, v) in scenes.iter().zip(&attrs) {
        let label = s.maneuver_label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([s.scene_id.clone(), v.y_e.to_string(), v.y_r.to_string(), v.y_s.to_string(), label])?;
    }
    w.flush()?;

    let strata = (0..3)
        .map(|k| {
            let vals: Vec<(String, f64)> =
                scenes.iter().zip(&attrs).map(|(s, v)| (s.scene_id.clone(), v.as_array()[k])).collect();
            stratify_topk(&vals, &a.top)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &a.strata_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["attribute", "percent", "rank", "scene_id", "threshold"])?;
        for (&name, st) in ATTR_NAMES.iter().zip(&strata) {
            for sub in &st.subsets {
                for (rank, id) in sub.ids.iter().enumerate() {
                    w.write_record([name, &sub.percent.to_string(), &(rank + 1).to_string(), id.as_str(), &sub.threshold.to_string()])?;
                }
            }
        }
        w.flush()?;
    }
    if let Some(path) = &a.jaccard_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["percent", "attribute_a", "attribute_b", "jaccard"])?;
        for (i, sub) in strata[0].subsets.iter().enumerate() {
            for x in 0..3 {
                for y in 0..3 {
                    let ids = |k: usize| strata[k].subsets[i].ids.iter().map(String::as_str);
                    let j = jaccard_overlap(ids(x), ids(y));
                    w.write_record([&sub.percent.to_string(), ATTR_NAMES[x], ATTR_NAMES[y], &j.to_string()])?;
                }
            }
        }
        w.flush()?;
    }
    Ok(())
}

/// A scene record whose target observation is replaced by the view. Masked
/// steps keep zeroed positions and are flagged in `valid`.
#[derive(Serialize)]
struct ViewRecord {
    #[serde(flatten)]
    scene: SceneRecord,
    strategy: Strategy,
    intensity: f64,
    valid: Vec<bool>,
}

fn augment(a: AugmentArgs) -> Result<()> {
    let scenes = load(&a.input)?;
    let attrs = attributes(&scenes)?;
    let cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    let policies: Vec<AugmentationPolicy> = training_policies(&attrs, &cfg);
    let mut out = create(&a.out)?;
    for (i, (scene, policy)) in scenes.iter().zip(&policies).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(i as u64);
        let view = match a.strategy {
            Some(s) => apply_strategy(scene, s.into(), policy, &mut rng),
            None => apply_policy(scene, policy, &mut rng),
        };
        let mut record = SceneRecord::from(scene);
        let track = record
            .tracks
            .iter_mut()
            .find(|t| t.agent_id == scene.target_id)
            .expect("parsed scenes contain their target");
        for (st, p) in track.states.iter_mut().zip(&view.slice.positions) {
            st.x = p.x;
            st.y = p.y;
            st.vx = None;
            st.vy = None;
            st.heading = None;
        }
        let rec = ViewRecord {
            scene: record,
            strategy: view.strategy,
            intensity: view.intensity,
            valid: view.slice.valid,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn train_from(setup: &TrainSetup) -> Result<(Vec<Scene>, TrainOutcome)> {
    let mut cfg = match &setup.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(e) = setup.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = setup.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let scenes = load(&setup.input)?;
    let attrs = attributes(&scenes)?;
    let out = run_training(&scenes, &attrs, &cfg)?;
    Ok((scenes, out))
}

fn train(a: TrainArgs) -> Result<()> {
    let (_, out) = train_from(&a.setup)?;
    write_checkpoint(&a.out, &out.checkpoint())?;
    if let Some(path) = &a.log {
        let mut w = create(path)?;
        write_log(&out.log, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let scenes = load(&a.input)?;
    let tm = TrainedModel::from_checkpoint(&read_checkpoint(&a.checkpoint)?)?;
    let first = &scenes[0];
    if let Some(s) = scenes.iter().find(|s| s.t_o != tm.meta.obs_len || s.t_p != tm.meta.horizon) {
        bail!(
            "scene {} has window {}+{}, the checkpoint expects {}+{}",
            s.scene_id,
            s.t_o,
            s.t_p,
            tm.meta.obs_len,
            tm.meta.horizon
        );
    }
    let attrs = attributes(&scenes)?;
    let k = a.attribute as usize;
    let ids: Vec<String> = scenes.iter().map(|s| s.scene_id.clone()).collect();
    let vals: Vec<(String, f64)> = ids.iter().cloned().zip(attrs.iter().map(|v| v.as_array()[k])).collect();
    let strata = stratify_topk(&vals, &a.top)?;
    let preds: Vec<_> = scenes.iter().map(|s| tm.model.predict(&tm.params, &tm.input(s))).collect();
    let truths: Vec<_> = scenes.iter().map(Scene::future_positions).collect();
    let horizons = if a.horizons.is_empty() {
        vec![first.t_p as f64 * first.dt]
    } else {
        a.horizons.clone()
    };
    let rows = stratified_report(&ids, &preds, &truths, &strata, &horizons, first.dt, a.miss_threshold)?;
    let mut w = create(&a.out)?;
    write_report(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cluster_audit(a: AuditArgs) -> Result<()> {
    let (scenes, out) = train_from(&a.setup)?;
    let mut w = csv::Writer::from_writer(create(&a.labels_out)?);
    w.write_record(["epoch", "scene_id", "label"])?;
    for round in &out.rounds {
        for (s, l) in scenes.iter().zip(&round.labels) {
            w.write_record([round.epoch.to_string(), s.scene_id.clone(), l.to_string()])?;
        }
    }
    w.flush()?;

    let truth: Option<Vec<usize>> = scenes.iter().map(|s| s.maneuver_label.map(usize::from)).collect();
    let mut w = csv::Writer::from_writer(create(&a.ari_out)?);
    w.write_record(["epoch", "ari_prev", "ari_truth"])?;
    for (i, round) in out.rounds.iter().enumerate() {
        let prev = match i {
            0 => String::new(),
            _ => adjusted_rand_index(&out.rounds[i - 1].labels, &round.labels)?.to_string(),
        };
        let vs_truth = match &truth {
            Some(t) => adjusted_rand_index(t, &round.labels)?.to_string(),
            None => String::new(),
        };
        w.write_record([round.epoch.to_string(), prev, vs_truth])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Attrs(a) => attrs(a),
        Command::Augment(a) => augment(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::ClusterAudit(a) => cluster_audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
