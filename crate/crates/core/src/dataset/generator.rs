//! Synthetic pen-sensor recordings with a structured left/right-hand shift.
//!
//! Each class owns a fixed piecewise-linear stroke template. A writer applies
//! a style (scale, slant, speed, pressure) and the pen traverses each template
//! edge with an ease-in/ease-out profile, so velocity vanishes at every
//! control point. Raw channels at the writer's sampling of the trajectory:
//!
//! | channels  | content                                                      |
//! |-----------|--------------------------------------------------------------|
//! | c0..c2    | accelerometer A: second differences x `ACCEL_GAIN` + gravity |
//! | c3..c5    | accelerometer B: same with an extra fixed gain               |
//! | c6..c8    | gyroscope: heading change per step under fixed axis gains    |
//! | c9..c11   | magnetometer: heading unit vector with a vertical component, |
//! |           | rotated by a per-hand fixed rotation                         |
//! | c12       | force: writer pressure while the pen is down, 0 on lifts     |
//!
//! Left-handed recordings mirror the sensor x axis (c0, c3 negated, the gyro
//! pseudovector's y/z components negated), additionally negate gyro c6, and
//! rotate the magnetometer. The series is resampled to 64 steps and Gaussian
//! noise is added afterwards (force only while the pen is down).
//!
//! A confusable pair `(a, b)` gives `b` the template of `a` scaled by
//! `CONFUSABLE_SCALE`. Edge durations do not depend on geometry, so the two
//! differ only in the accelerometer magnitudes.

use serde::{Deserialize, Serialize};

use super::{Dataset, Hand, MultivariateTimeSeries, CHANNELS, STEPS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prob::resample_linear;
use crate::rng::{seeded_stream, RngStream};

pub const CONFUSABLE_SCALE: f64 = 0.6;
pub const ACCEL_GAIN: f64 = 60.0;
pub const GRAVITY: f64 = 1.0;
const ACCEL_B_GAIN: f64 = 0.8;
const GYRO_GAINS: [f64; 3] = [0.2, 0.35, 0.5];
const MAG_VERTICAL: f64 = 0.5;
const EDGE_STEPS: f64 = 12.0;
const LIFT_STEPS: f64 = 8.0;
const TEMPLATE_SEED: u64 = 0x0A11_CE5E_ED00_0001;
/// Left-hand magnetometer rotation: angle about the (1, 1, 1) axis.
const LEFT_MAG_ROTATION_DEG: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub class_count: usize,
    pub confusable_pairs: Vec<(usize, usize)>,
    pub writers_right: usize,
    pub writers_left: usize,
    pub samples_per_writer_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            class_count: 10,
            confusable_pairs: vec![(0, 5), (1, 6)],
            writers_right: 20,
            writers_left: 4,
            samples_per_writer_per_class: 6,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::invalid("class_count must be at least 2"));
        }
        if self.writers_right + self.writers_left == 0 {
            return Err(Error::invalid("at least one writer is required"));
        }
        if self.samples_per_writer_per_class == 0 {
            return Err(Error::invalid("samples_per_writer_per_class must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be finite and non-negative"));
        }
        let mut used = vec![false; self.class_count];
        for &(a, b) in &self.confusable_pairs {
            if a == b || a >= self.class_count || b >= self.class_count {
                return Err(Error::invalid(format!("invalid confusable pair ({a}, {b})")));
            }
            if used[a] || used[b] {
                return Err(Error::invalid(format!(
                    "class appears in more than one confusable pair: ({a}, {b})"
                )));
            }
            used[a] = true;
            used[b] = true;
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.writers_right + self.writers_left) * self.class_count * self.samples_per_writer_per_class
    }
}

/// Class names whose lexicographic order equals index order.
pub fn class_names(k: usize) -> Vec<String> {
    if k <= 26 {
        (0..k).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    } else if k <= 52 {
        (0..k)
            .map(|i| {
                let c = if i < 26 { b'A' + i as u8 } else { b'a' + (i - 26) as u8 };
                (c as char).to_string()
            })
            .collect()
    } else {
        let width = (k - 1).to_string().len();
        (0..k).map(|i| format!("k{i:0width$}")).collect()
    }
}

/// Pen-down strokes of one character in a unit box.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeTemplate {
    pub strokes: Vec<Vec<[f64; 2]>>,
}

impl StrokeTemplate {
    /// Fixed template for `class`; independent of any dataset seed.
    pub fn for_class(class: usize) -> Self {
        let mut rng = seeded_stream(TEMPLATE_SEED).split(class as u64);
        let stroke_count = if rng.next_uniform() < 0.35 { 2 } else { 1 };
        let mut strokes = Vec::with_capacity(stroke_count);
        for _ in 0..stroke_count {
            let points = 3 + rng.below(3);
            let mut stroke: Vec<[f64; 2]> = Vec::with_capacity(points);
            while stroke.len() < points {
                let p = [rng.next_uniform(), rng.next_uniform()];
                if stroke.last().is_none_or(|q| dist(*q, p) >= 0.3) {
                    stroke.push(p);
                }
            }
            strokes.push(stroke);
        }
        Self { strokes }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            strokes: self
                .strokes
                .iter()
                .map(|s| s.iter().map(|p| [p[0] * factor, p[1] * factor]).collect())
                .collect(),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Per-writer handwriting style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriterStyle {
    pub scale: f64,
    /// Radians, within +-15 degrees.
    pub slant: f64,
    pub speed: f64,
    pub pressure: f64,
}

impl WriterStyle {
    pub fn draw(rng: &mut RngStream) -> Self {
        Self {
            scale: rng.uniform_in(0.8, 1.2),
            slant: rng.uniform_in(-15.0, 15.0).to_radians(),
            speed: rng.uniform_in(0.8, 1.2),
            pressure: rng.uniform_in(0.8, 1.2),
        }
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.scale * (p[0] + self.slant.tan() * p[1]), self.scale * p[1]]
    }
}

fn templates(config: &GeneratorConfig) -> Vec<StrokeTemplate> {
    let mut out: Vec<StrokeTemplate> = (0..config.class_count).map(StrokeTemplate::for_class).collect();
    for &(a, b) in &config.confusable_pairs {
        out[b] = out[a].scaled(CONFUSABLE_SCALE);
    }
    out
}

/// Generates the full synthetic dataset. Right-handed writers take ids
/// `0..writers_right`, left-handed ones follow.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let templates = templates(config);
    let root = seeded_stream(config.seed);
    let spw = config.samples_per_writer_per_class;
    let writers = (0..config.writers_right)
        .map(|_| Hand::Right)
        .chain((0..config.writers_left).map(|_| Hand::Left));
    let mut samples = Vec::with_capacity(config.sample_count());
    for (writer, hand) in writers.enumerate() {
        let writer_stream = root.split(writer as u64);
        let style = WriterStyle::draw(&mut writer_stream.split(0));
        for (label, template) in templates.iter().enumerate() {
            for rep in 0..spw {
                let mut noise = writer_stream.split(1 + (label * spw + rep) as u64);
                let values = render_sample(template, &style, hand, config.noise_sigma, &mut noise);
                samples.push(MultivariateTimeSeries {
                    values,
                    label,
                    writer_id: writer as u32,
                    hand,
                });
            }
        }
    }
    Dataset::new(samples, class_names(config.class_count))
}

struct RawPoint {
    pos: [f64; 2],
    pen_down: bool,
}

/// Writer trajectory sampled at the raw sensor rate.
fn trajectory(template: &StrokeTemplate, style: &WriterStyle) -> Vec<RawPoint> {
    let edge_steps = ((EDGE_STEPS / style.speed).round() as usize).max(2);
    let lift_steps = ((LIFT_STEPS / style.speed).round() as usize).max(2);
    let mut out = Vec::new();
    let push_edge = |from: [f64; 2], to: [f64; 2], n: usize, pen_down: bool, out: &mut Vec<RawPoint>| {
        for j in 0..n {
            let u = j as f64 / n as f64;
            let s = u - (std::f64::consts::TAU * u).sin() / std::f64::consts::TAU;
            let pos = [from[0] + (to[0] - from[0]) * s, from[1] + (to[1] - from[1]) * s];
            out.push(RawPoint { pos, pen_down });
        }
    };
    let strokes: Vec<Vec<[f64; 2]>> = template
        .strokes
        .iter()
        .map(|s| s.iter().map(|&p| style.apply(p)).collect())
        .collect();
    for (si, stroke) in strokes.iter().enumerate() {
        if si > 0 {
            let prev = *strokes[si - 1].last().expect("strokes are non-empty");
            push_edge(prev, stroke[0], lift_steps, false, &mut out);
        }
        for w in stroke.windows(2) {
            push_edge(w[0], w[1], edge_steps, true, &mut out);
        }
    }
    let last = *strokes.last().and_then(|s| s.last()).expect("template is non-empty");
    out.push(RawPoint {
        pos: last,
        pen_down: true,
    });
    out
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut a = a % tau;
    if a > std::f64::consts::PI {
        a -= tau;
    } else if a <= -std::f64::consts::PI {
        a += tau;
    }
    a
}

/// Rodrigues rotation matrix about the unit (1, 1, 1) axis.
fn left_mag_rotation() -> [[f64; 3]; 3] {
    let theta = LEFT_MAG_ROTATION_DEG.to_radians();
    let k = 1.0 / 3f64.sqrt();
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    let a = t * k * k;
    [
        [c + a, a - s * k, a + s * k],
        [a + s * k, c + a, a - s * k],
        [a - s * k, a + s * k, c + a],
    ]
}

/// Renders one 64x13 recording of `template` in `style` and `hand`.
pub fn render_sample(
    template: &StrokeTemplate,
    style: &WriterStyle,
    hand: Hand,
    noise_sigma: f64,
    noise: &mut RngStream,
) -> Matrix<f64> {
    let traj = trajectory(template, style);
    let n = traj.len();
    let at = |i: isize| traj[i.clamp(0, n as isize - 1) as usize].pos;

    let mut headings = Vec::with_capacity(n);
    let mut last_heading = None;
    for i in 0..n as isize {
        let (a, b) = (at(i - 2), at(i + 2));
        let v = [b[0] - a[0], b[1] - a[1]];
        if v[0].hypot(v[1]) > 1e-12 {
            last_heading = Some(v[1].atan2(v[0]));
        }
        headings.push(last_heading);
    }
    let first = headings.iter().flatten().next().copied().unwrap_or(0.0);
    let headings: Vec<f64> = headings
        .into_iter()
        .scan(first, |state, h| {
            if let Some(h) = h {
                *state = h;
            }
            Some(*state)
        })
        .collect();

    let rot = left_mag_rotation();
    let mut raw = Matrix::filled(n, CHANNELS, 0.0);
    for i in 0..n {
        let ii = i as isize;
        let (prev, cur, next) = (at(ii - 1), at(ii), at(ii + 1));
        let acc = if i == 0 || i == n - 1 {
            [0.0, 0.0]
        } else {
            [next[0] - 2.0 * cur[0] + prev[0], next[1] - 2.0 * cur[1] + prev[1]]
        };
        let omega = if i == 0 { 0.0 } else { wrap_angle(headings[i] - headings[i - 1]) };
        let mut row = [0.0; CHANNELS];
        for axis in 0..2 {
            row[axis] = ACCEL_GAIN * acc[axis];
            row[3 + axis] = ACCEL_B_GAIN * ACCEL_GAIN * acc[axis];
        }
        row[2] = GRAVITY;
        row[5] = GRAVITY;
        for (g, gain) in GYRO_GAINS.iter().enumerate() {
            row[6 + g] = gain * omega;
        }
        let mag = [headings[i].cos(), headings[i].sin(), MAG_VERTICAL];
        row[9..12].copy_from_slice(&mag);
        row[12] = if traj[i].pen_down { style.pressure } else { 0.0 };

        if hand == Hand::Left {
            row[0] = -row[0];
            row[3] = -row[3];
            for g in 6..9 {
                row[g] = -row[g];
            }
            for (r, out) in rot.iter().zip(9..12) {
                row[out] = r[0] * mag[0] + r[1] * mag[1] + r[2] * mag[2];
            }
        }
        raw.row_mut(i).copy_from_slice(&row);
    }

    let mut out = resample_linear(&raw, STEPS).expect("trajectory has at least one row");
    if noise_sigma > 0.0 {
        for t in 0..STEPS {
            let row = out.row_mut(t);
            for v in row.iter_mut().take(12) {
                *v += noise_sigma * noise.next_normal();
            }
            if row[12] > 0.0 {
                row[12] = (row[12] + noise_sigma * noise.next_normal()).max(0.0);
            }
        }
    }
    out
}
