//! `exbody` command-line front end.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use exbody::env::{Backend, CommandSource, Env};
use exbody::kinematics::RobotModel;
use exbody::mocap::{curate, default_exclude_keywords, default_include_keywords, Clip};
use exbody::mocap::synth::{generate, SynthConfig};
use exbody::retarget::{retarget_clip, JointMapping};
use exbody::rl::{evaluate, Checkpoint, Trainer, Variant};
use exbody::stats::{
    clip_samples, compute_metrics, distribution_report, hand_position_report, hand_position_report_records,
    record_samples, EpisodeRecord, Field, StepRecord,
};

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "exbody", version, about = "Motion curation, retargeting, training and reports for a 19-DoF humanoid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline stage.
#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML settings file with optional [curate], [retarget], [stats] and [train] tables.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random draw of the command.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic skeleton/motion corpus with an index.toml.
    Synth(SynthArgs),
    /// Filter a corpus by description keywords and write the kept clips.
    Curate(CurateArgs),
    /// Map clips onto the robot and write canonical clips plus joint-limit reports.
    Retarget(RetargetArgs),
    /// Distribution and hand-position reports for clips or recorded rollouts.
    Stats(StatsArgs),
    /// Train a policy for one baseline variant.
    Train(TrainArgs),
    /// Roll out a checkpoint and write the episode metrics.
    Eval(EvalArgs),
    /// Drive the kinematic replay backend with clip-following actions.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for the corpus.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shortest clip length in seconds.
    #[arg(long, default_value_t = 4.0)]
    min_duration: f64,
    /// Longest clip length in seconds.
    #[arg(long, default_value_t = 8.0)]
    max_duration: f64,
    /// Frames per second of the written motion files.
    #[arg(long, default_value_t = 60.0)]
    frame_rate: f64,
}

#[derive(Args, Debug)]
struct CurateArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus directory (index.toml) or directory of canonical clips.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Include keywords, one per line; replaces the default list.
    #[arg(long, value_name = "FILE")]
    include_file: Option<PathBuf>,
    /// Exclude keywords, one per line; replaces the default list.
    #[arg(long, value_name = "FILE")]
    exclude_file: Option<PathBuf>,
    /// Curation report path [default: <out>/curation.json].
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetargetArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus directory (index.toml) or directory of canonical raw clips.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Joint mapping TOML [default: built-in CMU-to-H1 mapping].
    #[arg(long, value_name = "FILE")]
    mapping: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of retargeted canonical clips.
    #[arg(long, value_name = "DIR", conflicts_with = "records", required_unless_present = "records")]
    clips: Option<PathBuf>,
    /// Episode records written by `eval --records` or `replay`.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Comma-separated fields: velocity, roll-pitch, height, yaw-rate [default: all].
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<Field>>,
    /// Clip sampling interval in seconds [default: 1].
    #[arg(long)]
    interval: Option<f64>,
    /// Number of hand-position samples [default: 10000].
    #[arg(long)]
    hands: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// exbody, exbody+amp, exbody+amp-noreg, no-rsi, random-sample or full-body-tracking.
    #[arg(long, default_value = "exbody")]
    variant: Variant,
    /// Directory of retargeted canonical clips.
    #[arg(long, value_name = "DIR")]
    clips: Option<PathBuf>,
    /// Training iterations [default: from config, else 200].
    #[arg(long)]
    iterations: Option<usize>,
    /// Parallel environments [default: from config, else 64].
    #[arg(long)]
    envs: Option<usize>,
    /// Environment stepping threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Write a numbered checkpoint every N iterations [default: only the final one].
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Directory of retargeted canonical clips, if the environment needs them.
    #[arg(long, value_name = "DIR")]
    clips: Option<PathBuf>,
    /// Number of complete episodes.
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    /// Metrics report path [default: <out>/metrics.json].
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Use the mean action instead of sampling.
    #[arg(long)]
    deterministic: bool,
    /// Also write per-step episode records [default: <out>/records.json].
    #[arg(long)]
    records: bool,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of retargeted canonical clips.
    #[arg(long, value_name = "DIR")]
    clips: PathBuf,
    /// Number of episodes.
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    /// Step cap per episode [default: the episode length].
    #[arg(long)]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Curate(a) => curate_cmd(a),
        Command::Retarget(a) => retarget(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let corpus = generate(&SynthConfig {
        seed: a.seed,
        frame_rate: a.frame_rate,
        min_duration: a.min_duration,
        max_duration: a.max_duration,
    });
    corpus.write(&a.out)?;
    println!("wrote {} clips to {}", corpus.clips.len(), a.out.display());
    Ok(())
}

fn curate_cmd(a: CurateArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let include = match &a.include_file {
        Some(p) => io::read_keywords(p)?,
        None => cfg.curate.include.unwrap_or_else(default_include_keywords),
    };
    let exclude = match &a.exclude_file {
        Some(p) => io::read_keywords(p)?,
        None => cfg.curate.exclude.unwrap_or_else(default_exclude_keywords),
    };
    let lib = curate(io::load_library(&a.input)?, &include, &exclude);
    for clip in lib.clips() {
        io::write_clip(&a.common.out, clip)?;
    }
    let report = a.report.unwrap_or_else(|| a.common.out.join("curation.json"));
    io::write_json(&report, &lib.report)?;
    println!("kept {} of {} clips", lib.len(), lib.report.decisions.len());
    Ok(())
}

fn retarget(a: RetargetArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let model = RobotModel::h1();
    let mapping = match a.mapping.or(cfg.retarget.mapping) {
        Some(p) => JointMapping::load(&p, &model)?,
        None => JointMapping::cmu_h1(&model),
    };
    let lib = io::load_library(&a.input)?;
    let mut summary = Vec::new();
    for clip in lib.clips() {
        let Clip::Raw(raw) = clip else {
            bail!("clip `{}` is already retargeted", clip.meta().id);
        };
        let r = retarget_clip(raw, &mapping, &model)?;
        io::write_json(&a.common.out.join(format!("{}.limits.json", r.meta.id)), &r.limit_report)?;
        summary.push(serde_json::json!({
            "id": r.meta.id,
            "frames": r.frames.len(),
            "violations": r.limit_report.violations.len(),
        }));
        io::write_clip(&a.common.out, &Clip::Retargeted(r))?;
    }
    io::write_json(&a.common.out.join("violations.json"), &summary)?;
    println!("retargeted {} clips", summary.len());
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?.stats;
    let fields = a.fields.unwrap_or(cfg.fields);
    let interval = a.interval.unwrap_or(cfg.interval);
    let hands = a.hands.unwrap_or(cfg.hand_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let model = RobotModel::h1();
    let (report, hand) = match (&a.clips, &a.records) {
        (Some(dir), _) => {
            let set = io::load_motions(dir)?;
            let samples = clip_samples(set.clips(), interval)?;
            let report = distribution_report("clips", &samples, &fields)?;
            (report, hand_position_report(&set, &model, hands, &mut rng)?)
        }
        (None, Some(path)) => {
            let records: Vec<EpisodeRecord> = io::read_json(path)?;
            let report = distribution_report("rollouts", &record_samples(&records), &fields)?;
            (report, hand_position_report_records(&records, hands, &mut rng)?)
        }
        (None, None) => bail!("either --clips or --records is required"),
    };
    report.write(&a.common.out)?;
    hand.write(&a.common.out)?;
    println!(
        "{} samples, mean v = [{:.3}, {:.3}, {:.3}]",
        report.samples, report.mean_v[0], report.mean_v[1], report.mean_v[2]
    );
    Ok(())
}

fn motions_for(clips: Option<&Path>) -> Result<Option<Arc<exbody::goals::MotionSet>>> {
    clips.map(|d| io::load_motions(d).map(Arc::new)).transpose()
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?.train;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(n) = a.envs {
        cfg.ppo.num_envs = n;
    }
    if let Some(n) = a.threads {
        cfg.threads = n;
    }
    let every = a.checkpoint_every.unwrap_or(cfg.iterations).max(1);
    let motions = motions_for(a.clips.as_deref())?;
    let model = Arc::new(RobotModel::h1());
    let mut trainer = Trainer::for_variant(a.variant, cfg.clone(), model, motions, a.common.seed)?;
    let out = &a.common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut curves = String::new();
    for _ in 0..cfg.iterations {
        let log = trainer.iterate()?;
        curves.push_str(&serde_json::to_string(&log)?);
        curves.push('\n');
        if log.iteration % every == 0 {
            trainer.checkpoint().save(&out.join(format!("checkpoint-{:06}.json", log.iteration)))?;
        }
        if let Some(m) = &log.metrics {
            eprintln!(
                "iter {:>4}  reward/step {:.3}  MEL {:.2} s  MELV {:.1}  MERP {:.1}  MEK {:.1}",
                log.iteration, log.mean_step_reward, m.mel, m.melv, m.merp, m.mek
            );
        }
    }
    std::fs::write(out.join("curves.jsonl"), curves)?;
    trainer.checkpoint().save(&out.join("checkpoint.json"))?;
    println!("trained {} for {} iterations", a.variant, cfg.iterations);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let env_cfg = match &a.common.config {
        Some(p) => FileConfig::load(Some(p))?.train.env,
        None => ckpt.config.env.clone(),
    };
    let motions = motions_for(a.clips.as_deref())?;
    let model = Arc::new(RobotModel::h1());
    let records = evaluate(&ckpt.policy, &env_cfg, model, motions, a.episodes, a.common.seed, a.deterministic)?;
    let label = ckpt.variant.map_or("custom", Variant::name);
    let metrics = compute_metrics(&records, label)?;
    let report = a.report.unwrap_or_else(|| a.common.out.join("metrics.json"));
    io::write_json(&report, &metrics)?;
    if a.records {
        io::write_json(&a.common.out.join("records.json"), &records)?;
    }
    println!(
        "{label}: MEL {:.2} s  MELV {:.2}  MERP {:.2}  MEK {:.2}  over {} episodes",
        metrics.mel, metrics.melv, metrics.merp, metrics.mek, metrics.episodes
    );
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?.train.env;
    cfg.backend = Backend::KinematicReplay;
    cfg.rsi = true;
    cfg.commands = CommandSource::Dataset;
    let cap = a.steps.unwrap_or(cfg.max_steps());
    let motions = Arc::new(io::load_motions(&a.clips)?);
    let mut env = Env::new(cfg.clone(), Arc::new(RobotModel::h1()), Some(motions), a.common.seed)?;
    let max_expression = cfg.weights.dof_position + cfg.weights.keypoint;
    let mut records = Vec::with_capacity(a.episodes);
    let mut expression = (0.0, 0usize);
    for _ in 0..a.episodes {
        env.reset()?;
        let mut rec = EpisodeRecord::new(cfg.control_dt());
        for _ in 0..cap {
            let action = env.oracle_action().context("replay needs a goal clip")?;
            let s = env.step(&action)?;
            expression.0 += s.reward.expression;
            expression.1 += 1;
            rec.steps.push(StepRecord::from_step(&s, true));
            if s.done {
                rec.reason = s.reason.map(|r| r.as_str().to_string());
                break;
            }
        }
        records.push(rec);
    }
    let metrics = compute_metrics(&records, "replay")?;
    io::write_json(&a.common.out.join("records.json"), &records)?;
    io::write_json(&a.common.out.join("metrics.json"), &metrics)?;
    println!(
        "mean expression reward {:.3} of {:.1}, MEL {:.2} s",
        expression.0 / expression.1.max(1) as f64,
        max_expression,
        metrics.mel
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        for sub in Cli::command().get_subcommands() {
            assert!(sub.get_about().is_some(), "{}", sub.get_name());
            for arg in sub.get_arguments() {
                if arg.get_id() == "help" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{}", sub.get_name(), arg.get_id());
            }
        }
    }
}
