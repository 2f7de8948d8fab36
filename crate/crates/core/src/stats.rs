//! Episode metrics, state-distribution histograms and hand-position clouds.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Step;
use crate::goals::{heading_keypoints, state_at, to_heading, GoalScope, MotionSet};
use crate::kinematics::RobotModel;
use crate::retarget::RetargetedClip;
use crate::{Error, Result};

/// Keypoint slots of the two hands in the expression keypoint vector.
const HAND_SLOTS: [usize; 2] = [4, 5];

/// One control step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub reward: f64,
    /// Weighted tracking terms.
    pub linear_velocity: f64,
    pub roll_pitch: f64,
    pub keypoint: f64,
    /// Heading-frame linear velocity.
    pub v: [f64; 3],
    pub rpy: [f64; 3],
    pub height: f64,
    /// Body-frame angular velocity.
    pub omega: [f64; 3],
    /// Heading-frame keypoints; may be empty when not recorded.
    pub keypoints: Vec<f64>,
}

impl StepRecord {
    pub fn from_step(step: &Step, keep_keypoints: bool) -> Self {
        let s = &step.info.snapshot;
        StepRecord {
            reward: step.reward.total,
            linear_velocity: step.reward.weighted("linear_velocity"),
            roll_pitch: step.reward.weighted("roll_pitch"),
            keypoint: step.reward.weighted("keypoint"),
            v: s.v,
            rpy: s.rpy,
            height: s.height,
            omega: s.omega,
            keypoints: if keep_keypoints { s.keypoints.clone() } else { Vec::new() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub control_dt: f64,
    pub reason: Option<String>,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn new(control_dt: f64) -> Self {
        EpisodeRecord {
            control_dt,
            reason: None,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.steps.len() as f64 * self.control_dt
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    fn sum(&self, f: impl Fn(&StepRecord) -> f64) -> f64 {
        self.steps.iter().map(f).sum()
    }
}

/// Means over a batch of completed episodes. The tracking metrics are
/// given both as per-episode cumulative sums and as per-step means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub episodes: usize,
    /// Mean episode length in seconds.
    pub mel: f64,
    pub mel_steps: f64,
    pub melv: f64,
    pub merp: f64,
    pub mek: f64,
    pub melv_per_step: f64,
    pub merp_per_step: f64,
    pub mek_per_step: f64,
    pub mean_return: f64,
}

pub fn compute_metrics(records: &[EpisodeRecord], variant: &str) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::EmptyBatch("episode records"));
    }
    // sort each column so the result does not depend on episode order
    let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let per_step = |f: fn(&StepRecord) -> f64| {
        move |r: &EpisodeRecord| if r.is_empty() { 0.0 } else { r.sum(f) / r.len() as f64 }
    };
    Ok(MetricsReport {
        variant: variant.to_string(),
        episodes: records.len(),
        mel: mean(&|r| r.seconds()),
        mel_steps: mean(&|r| r.len() as f64),
        melv: mean(&|r| r.sum(|s| s.linear_velocity)),
        merp: mean(&|r| r.sum(|s| s.roll_pitch)),
        mek: mean(&|r| r.sum(|s| s.keypoint)),
        melv_per_step: mean(&per_step(|s| s.linear_velocity)),
        merp_per_step: mean(&per_step(|s| s.roll_pitch)),
        mek_per_step: mean(&per_step(|s| s.keypoint)),
        mean_return: mean(&|r| r.total_reward()),
    })
}

/// Root state used by the distribution reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub v: [f64; 3],
    pub rpy: [f64; 3],
    pub height: f64,
    pub yaw_rate: f64,
}

/// Clip states every `interval` seconds, velocities in the heading frame.
pub fn clip_samples(clips: &[RetargetedClip], interval: f64) -> Result<Vec<StateSample>> {
    let mut out = Vec::new();
    for clip in clips {
        let d = clip.duration();
        let mut k = 0usize;
        loop {
            let t = k as f64 * interval;
            if t > d + 1e-9 {
                break;
            }
            let s = state_at(clip, t.min(d))?;
            let rpy = s.root.orientation.to_rpy();
            out.push(StateSample {
                v: to_heading(&s.v, rpy[2]),
                rpy,
                height: s.root.height(),
                yaw_rate: s.omega[2],
            });
            k += 1;
        }
    }
    Ok(out)
}

pub fn record_samples(records: &[EpisodeRecord]) -> Vec<StateSample> {
    records
        .iter()
        .flat_map(|r| &r.steps)
        .map(|s| StateSample {
            v: s.v,
            rpy: s.rpy,
            height: s.height,
            yaw_rate: s.omega[2],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    Velocity,
    RollPitch,
    Height,
    YawRate,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Velocity, Field::RollPitch, Field::Height, Field::YawRate];

    pub fn name(self) -> &'static str {
        match self {
            Field::Velocity => "velocity",
            Field::RollPitch => "roll-pitch",
            Field::Height => "height",
            Field::YawRate => "yaw-rate",
        }
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownField(s.to_string()))
    }
}

/// Fixed-range histogram; out-of-range samples land in the edge bins so
/// the counts always sum to the number of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub label: String,
    pub range: [f64; 2],
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(label: &str, range: [f64; 2], bins: usize) -> Self {
        Histogram {
            label: label.to_string(),
            range,
            bins,
            counts: vec![0; bins],
        }
    }

    fn bin(range: [f64; 2], bins: usize, x: f64) -> usize {
        let u = (x - range[0]) / (range[1] - range[0]);
        ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }

    pub fn add(&mut self, x: f64) {
        self.counts[Self::bin(self.range, self.bins, x)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Row-major `bins × bins` histogram over two variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2 {
    pub labels: [String; 2],
    pub range: [[f64; 2]; 2],
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram2 {
    pub fn new(labels: [&str; 2], range: [[f64; 2]; 2], bins: usize) -> Self {
        Histogram2 {
            labels: labels.map(String::from),
            range,
            bins,
            counts: vec![0; bins * bins],
        }
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let i = Histogram::bin(self.range[0], self.bins, x);
        let j = Histogram::bin(self.range[1], self.bins, y);
        self.counts[j * self.bins + i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub source: String,
    pub samples: usize,
    pub mean_v: [f64; 3],
    pub mean_rpy: [f64; 3],
    pub mean_height: f64,
    pub mean_yaw_rate: f64,
    pub velocity: Option<Histogram2>,
    pub roll_pitch: Option<Histogram2>,
    pub height: Option<Histogram>,
    pub yaw_rate: Option<Histogram>,
}

pub fn distribution_report(source: &str, samples: &[StateSample], fields: &[Field]) -> Result<DistributionReport> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch("distribution samples"));
    }
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&StateSample) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let want = |f: Field| fields.contains(&f);
    let mut rep = DistributionReport {
        source: source.to_string(),
        samples: samples.len(),
        mean_v: std::array::from_fn(|k| mean(&|s| s.v[k])),
        mean_rpy: std::array::from_fn(|k| mean(&|s| s.rpy[k])),
        mean_height: mean(&|s| s.height),
        mean_yaw_rate: mean(&|s| s.yaw_rate),
        velocity: want(Field::Velocity).then(|| Histogram2::new(["v_x", "v_y"], [[-2.0, 2.0], [-2.0, 2.0]], 40)),
        roll_pitch: want(Field::RollPitch)
            .then(|| Histogram2::new(["roll", "pitch"], [[-0.6, 0.6], [-0.6, 0.6]], 40)),
        height: want(Field::Height).then(|| Histogram::new("height", [0.4, 1.4], 50)),
        yaw_rate: want(Field::YawRate).then(|| Histogram::new("yaw_rate", [-2.0, 2.0], 50)),
    };
    for s in samples {
        if let Some(h) = &mut rep.velocity {
            h.add(s.v[0], s.v[1]);
        }
        if let Some(h) = &mut rep.roll_pitch {
            h.add(s.rpy[0], s.rpy[1]);
        }
        if let Some(h) = &mut rep.height {
            h.add(s.height);
        }
        if let Some(h) = &mut rep.yaw_rate {
            h.add(s.yaw_rate);
        }
    }
    Ok(rep)
}

impl DistributionReport {
    /// Writes `distribution.json` plus one SVG per histogram into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::error::write_string(&dir.join("distribution.json"), &serde_json::to_string_pretty(self)?)?;
        if let Some(h) = &self.velocity {
            crate::error::write_string(&dir.join("velocity.svg"), &svg_heatmap(h))?;
        }
        if let Some(h) = &self.roll_pitch {
            crate::error::write_string(&dir.join("roll_pitch.svg"), &svg_heatmap(h))?;
        }
        if let Some(h) = &self.height {
            crate::error::write_string(&dir.join("height.svg"), &svg_bars(h))?;
        }
        if let Some(h) = &self.yaw_rate {
            crate::error::write_string(&dir.join("yaw_rate.svg"), &svg_bars(h))?;
        }
        Ok(())
    }
}

const PLOT: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn svg_open(title: &str) -> String {
    let size = PLOT + 2.0 * MARGIN;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        MARGIN * 0.6
    )
}

fn svg_axes(s: &mut String, x: (&str, [f64; 2]), y: Option<(&str, [f64; 2])>) {
    let b = MARGIN + PLOT;
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{PLOT}\" height=\"{PLOT}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"11\">{}</text><text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
        b + 14.0,
        x.1[0],
        b,
        b + 14.0,
        x.1[1]
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        MARGIN + PLOT / 2.0,
        b + 30.0,
        x.0
    );
    if let Some((label, r)) = y {
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"{b}\" font-size=\"11\">{}</text><text x=\"4\" y=\"{}\" font-size=\"11\">{}</text>\
             <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">{label}</text>",
            r[0],
            MARGIN + 10.0,
            r[1],
            MARGIN + PLOT / 2.0,
            MARGIN + PLOT / 2.0
        );
    }
}

pub fn svg_heatmap(h: &Histogram2) -> String {
    let mut s = svg_open(&format!("{} vs {} ({} samples)", h.labels[0], h.labels[1], h.total()));
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let cell = PLOT / h.bins as f64;
    for j in 0..h.bins {
        for i in 0..h.bins {
            let c = h.counts[j * h.bins + i];
            if c == 0 {
                continue;
            }
            let shade = 255.0 * (1.0 - (c as f64 / max).sqrt());
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"rgb({:.0},{:.0},255)\"/>",
                MARGIN + i as f64 * cell,
                MARGIN + PLOT - (j + 1) as f64 * cell,
                shade,
                shade
            );
        }
    }
    svg_axes(&mut s, (&h.labels[0], h.range[0]), Some((&h.labels[1], h.range[1])));
    s.push_str("</svg>\n");
    s
}

pub fn svg_bars(h: &Histogram) -> String {
    let mut s = svg_open(&format!("{} ({} samples)", h.label, h.total()));
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let w = PLOT / h.bins as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let height = PLOT * c as f64 / max;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{w:.2}\" height=\"{height:.2}\" fill=\"steelblue\"/>",
            MARGIN + i as f64 * w,
            MARGIN + PLOT - height
        );
    }
    svg_axes(&mut s, (&h.label, h.range), None);
    s.push_str("</svg>\n");
    s
}

pub const DEFAULT_HAND_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub mean: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl PointSummary {
    pub fn of(points: &[[f64; 3]]) -> Self {
        let n = points.len().max(1) as f64;
        let mut s = PointSummary {
            mean: [0.0; 3],
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for p in points {
            for k in 0..3 {
                s.mean[k] += p[k] / n;
                s.min[k] = s.min[k].min(p[k]);
                s.max[k] = s.max[k].max(p[k]);
            }
        }
        s
    }
}

/// Root-relative hand positions, `n` samples per hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandReport {
    pub source: String,
    pub left: Vec<[f64; 3]>,
    pub right: Vec<[f64; 3]>,
    pub left_summary: PointSummary,
    pub right_summary: PointSummary,
}

impl HandReport {
    fn new(source: &str, left: Vec<[f64; 3]>, right: Vec<[f64; 3]>) -> Self {
        HandReport {
            source: source.to_string(),
            left_summary: PointSummary::of(&left),
            right_summary: PointSummary::of(&right),
            left,
            right,
        }
    }

    /// `hand,x,y,z` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("hand,x,y,z\n");
        for (name, pts) in [("left", &self.left), ("right", &self.right)] {
            for p in pts {
                let _ = writeln!(s, "{name},{},{},{}", p[0], p[1], p[2]);
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::error::write_string(&dir.join("hands.csv"), &self.to_csv())?;
        let summary = serde_json::json!({
            "source": self.source,
            "samples_per_hand": self.left.len(),
            "left": self.left_summary,
            "right": self.right_summary,
        });
        crate::error::write_string(&dir.join("hands.json"), &serde_json::to_string_pretty(&summary)?)
    }
}

fn hands(kp: &[f64]) -> [[f64; 3]; 2] {
    HAND_SLOTS.map(|i| [kp[3 * i], kp[3 * i + 1], kp[3 * i + 2]])
}

/// Hand positions at `n` duration-weighted random clip times.
pub fn hand_position_report<R: Rng + ?Sized>(
    set: &MotionSet,
    model: &RobotModel,
    n: usize,
    rng: &mut R,
) -> Result<HandReport> {
    let (mut left, mut right) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (c, t) = set.sample_time(rng);
        let s = state_at(set.get(c), t)?;
        let [l, r] = hands(&heading_keypoints(model, &s.root, &s.q, GoalScope::Upper));
        left.push(l);
        right.push(r);
    }
    Ok(HandReport::new("clips", left, right))
}

/// Hand positions at `n` uniformly drawn recorded steps.
pub fn hand_position_report_records<R: Rng + ?Sized>(
    records: &[EpisodeRecord],
    n: usize,
    rng: &mut R,
) -> Result<HandReport> {
    let steps: Vec<&StepRecord> = records.iter().flat_map(|r| &r.steps).filter(|s| !s.keypoints.is_empty()).collect();
    if steps.is_empty() {
        return Err(Error::EmptyBatch("recorded keypoints"));
    }
    let (mut left, mut right) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let [l, r] = hands(&steps[rng.random_range(0..steps.len())].keypoints);
        left.push(l);
        right.push(r);
    }
    Ok(HandReport::new("rollouts", left, right))
}
