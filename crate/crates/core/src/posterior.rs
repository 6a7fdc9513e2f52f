//! Weight samples from a SWAG posterior and per-input softmax draw matrices
//! for SWAG and ensemble predictors. All predictive forward passes run in
//! eval mode.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Architecture, Decoder, Encoder, Mode, Network, ParamVector};
use crate::prob::{softmax_unchecked, validate, ProbVector};
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::training::SwagStats;

pub const POSTERIOR_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SwagPosterior<T> {
    mean: ParamVector<T>,
    diag_var: ParamVector<T>,
    /// Deviation columns in snapshot order, each of length P.
    columns: Vec<ParamVector<T>>,
    scale: T,
}

impl<T: Real> SwagPosterior<T> {
    pub fn new(mean: ParamVector<T>, diag_var: ParamVector<T>, columns: Vec<ParamVector<T>>, scale: T) -> Result<Self> {
        if columns.len() < 2 {
            return Err(Error::state(format!("posterior rank {} is below 2", columns.len())));
        }
        let p = mean.len();
        if diag_var.len() != p || columns.iter().any(|c| c.len() != p) {
            return Err(Error::invalid("posterior components have mismatched lengths"));
        }
        if diag_var.as_slice().iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("diagonal variance must be finite and non-negative"));
        }
        if !(scale >= T::zero()) || !scale.is_finite() {
            return Err(Error::invalid("scale must be finite and non-negative"));
        }
        Ok(Self {
            mean,
            diag_var,
            columns,
            scale,
        })
    }

    pub fn mean(&self) -> &ParamVector<T> {
        &self.mean
    }

    pub fn diag_var(&self) -> &ParamVector<T> {
        &self.diag_var
    }

    pub fn columns(&self) -> &[ParamVector<T>] {
        &self.columns
    }

    /// P x K_dev deviation matrix.
    pub fn deviation(&self) -> Matrix<T> {
        let (p, k) = (self.mean.len(), self.columns.len());
        let mut m = Matrix::filled(p, k, T::zero());
        for (c, col) in self.columns.iter().enumerate() {
            for (r, &v) in col.as_slice().iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn with_scale(mut self, scale: T) -> Result<Self> {
        if !(scale >= T::zero()) || !scale.is_finite() {
            return Err(Error::invalid("scale must be finite and non-negative"));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.mean.len()
    }
}

pub fn build_posterior<T: Real>(stats: &SwagStats<T>, scale: T) -> Result<SwagPosterior<T>> {
    if stats.n_snapshots < 2 {
        return Err(Error::state(format!("{} snapshot(s) collected; at least 2 are required", stats.n_snapshots)));
    }
    let diag = stats.raw_variance().into_iter().map(|v| v.max(T::zero())).collect();
    SwagPosterior::new(
        stats.first_moment.clone(),
        ParamVector::new(diag),
        stats.deviation_columns.iter().cloned().collect(),
        scale,
    )
}

/// `mean + scale * (sqrt(diag/2) * z1 + D z2 / sqrt(2 (K_dev - 1)))`, with
/// `z1` (length P) drawn before `z2` (length K_dev).
pub fn sample_weights<T: Real>(post: &SwagPosterior<T>, rng: &mut RngStream) -> ParamVector<T> {
    let p = post.param_count();
    let k = post.rank();
    let z1: Vec<T> = (0..p).map(|_| T::lit(rng.next_normal())).collect();
    let z2: Vec<T> = (0..k).map(|_| T::lit(rng.next_normal())).collect();
    let half = T::lit(0.5);
    let low_rank = T::one() / (T::lit(2.0) * T::from_usize_lossy(k - 1)).sqrt();
    let mut delta: Vec<T> = post
        .diag_var
        .as_slice()
        .iter()
        .zip(&z1)
        .map(|(&v, &z)| (v * half).sqrt() * z)
        .collect();
    for (col, &z) in post.columns.iter().zip(&z2) {
        let w = low_rank * z;
        for (d, &c) in delta.iter_mut().zip(col.as_slice()) {
            *d += w * c;
        }
    }
    let values = post
        .mean
        .as_slice()
        .iter()
        .zip(delta)
        .map(|(&m, d)| {
            let step = post.scale * d;
            // keeps the mean bit-exact (including signed zeros) when nothing is added
            if step == T::zero() {
                m
            } else {
                m + step
            }
        })
        .collect();
    ParamVector::new(values)
}

/// S x K matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxDraws<T> {
    draws: Matrix<T>,
}

impl<T: Real> SoftmaxDraws<T> {
    pub fn new(draws: Matrix<T>) -> Result<Self> {
        if draws.rows() == 0 {
            return Err(Error::invalid("at least one draw is required"));
        }
        for r in draws.row_iter() {
            validate(r)?;
        }
        Ok(Self { draws })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn from_probs(rows: &[ProbVector<T>]) -> Result<Self> {
        let rows: Vec<Vec<T>> = rows.iter().map(|p| p.values().to_vec()).collect();
        Self::from_rows(&rows)
    }

    pub fn draw_count(&self) -> usize {
        self.draws.rows()
    }

    pub fn class_count(&self) -> usize {
        self.draws.cols()
    }

    pub fn row(&self, s: usize) -> &[T] {
        self.draws.row(s)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.draws.row_iter()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.draws
    }
}

fn collect_draws<T: Real>(k: usize, rows: Vec<Vec<T>>) -> Result<SoftmaxDraws<T>> {
    let s = rows.len();
    SoftmaxDraws::new(Matrix::from_vec(s, k, rows.concat())?)
}

pub(crate) fn swag_draws_with<T: Real>(
    net: &Network,
    post: &SwagPosterior<T>,
    x: &Matrix<T>,
    draws: usize,
    rng: &mut RngStream,
) -> Result<SoftmaxDraws<T>> {
    if draws == 0 {
        return Err(Error::invalid("draw count must be at least 1"));
    }
    net.check_params(post.mean())?;
    let rows = (0..draws)
        .map(|_| {
            let theta = sample_weights(post, rng);
            let out = net.forward(&theta, x, Mode::Eval)?;
            Ok(softmax_unchecked(&out.logits))
        })
        .collect::<Result<Vec<_>>>()?;
    collect_draws(net.arch().class_count, rows)
}

pub(crate) fn ensemble_draws_with<T: Real>(net: &Network, members: &[ParamVector<T>], x: &Matrix<T>) -> Result<SoftmaxDraws<T>> {
    if members.is_empty() {
        return Err(Error::invalid("ensemble has no members"));
    }
    let rows = members
        .iter()
        .map(|theta| {
            net.check_params(theta)?;
            let out = net.forward(theta, x, Mode::Eval)?;
            Ok(softmax_unchecked(&out.logits))
        })
        .collect::<Result<Vec<_>>>()?;
    collect_draws(net.arch().class_count, rows)
}

/// `draws` weight samples, each pushed through an eval-mode forward pass.
pub fn predictive_draws_swag<T: Real>(
    arch: &Architecture,
    post: &SwagPosterior<T>,
    x: &Matrix<T>,
    draws: usize,
    rng: &mut RngStream,
) -> Result<SoftmaxDraws<T>> {
    swag_draws_with(&Network::new(arch)?, post, x, draws, rng)
}

/// One row per member, in member order.
pub fn predictive_draws_ensemble<T: Real>(arch: &Architecture, members: &[ParamVector<T>], x: &Matrix<T>) -> Result<SoftmaxDraws<T>> {
    ensemble_draws_with(&Network::new(arch)?, members, x)
}

/// Checkpoint container, version 2: after the architecture come sections for
/// the mean, the diagonal variance, one f64 scale, the column count, then each
/// deviation column as its own length-prefixed section.
pub fn encode_posterior<T: Real>(post: &SwagPosterior<T>, arch: &Architecture) -> Result<Vec<u8>> {
    let p = arch.param_count()?;
    if post.param_count() != p {
        return Err(Error::invalid(format!(
            "posterior has {} parameters, architecture needs {p}",
            post.param_count()
        )));
    }
    let mut enc = Encoder::new(POSTERIOR_VERSION, arch)?;
    enc.section(post.mean.as_slice());
    enc.section(post.diag_var.as_slice());
    enc.f64(post.scale.as_f64());
    enc.u64(post.columns.len() as u64);
    for col in &post.columns {
        enc.section(col.as_slice());
    }
    Ok(enc.finish())
}

pub fn decode_posterior<T: Real>(bytes: &[u8]) -> Result<(Architecture, SwagPosterior<T>)> {
    let (mut dec, arch) = Decoder::open(bytes, POSTERIOR_VERSION)?;
    let p = arch.param_count()?;
    let mean = ParamVector::new(dec.section(Some(p))?);
    let diag = ParamVector::new(dec.section(Some(p))?);
    let scale = T::lit(dec.f64()?);
    let k = dec.u64()? as usize;
    if k > bytes.len() / 8 {
        return Err(Error::format(format!("implausible deviation column count {k}")));
    }
    let columns = (0..k)
        .map(|_| dec.section(Some(p)).map(ParamVector::new))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    let post = SwagPosterior::new(mean, diag, columns, scale).map_err(|e| Error::format(format!("posterior contents: {e}")))?;
    Ok((arch, post))
}

pub fn save_posterior<T: Real>(post: &SwagPosterior<T>, arch: &Architecture, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_posterior(post, arch)?).map_err(|e| Error::io(path, e))
}

pub fn load_posterior<T: Real>(path: impl AsRef<Path>) -> Result<(Architecture, SwagPosterior<T>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_posterior(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Architecture, ConvBlock, TcnConfig};
    use crate::prob::softmax;
    use crate::rng::seeded_stream;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::new(v.to_vec())
    }

    fn tiny() -> Architecture {
        Architecture {
            input_steps: 8,
            input_channels: 2,
            conv_blocks: vec![ConvBlock {
                filters: 3,
                kernel_size: 3,
                dropout_rate: 0.5,
            }],
            tcn: TcnConfig {
                channels: 3,
                kernel_size: 2,
                dilations: vec![1],
            },
            class_count: 3,
        }
    }

    fn input(seed: u64) -> Matrix<f64> {
        let mut rng = seeded_stream(seed);
        Matrix::from_vec(8, 2, (0..16).map(|_| rng.next_normal()).collect()).unwrap()
    }

    fn random_posterior(arch: &Architecture, scale: f64) -> SwagPosterior<f64> {
        let mut rng = seeded_stream(4);
        let mut stats = SwagStats::new(arch.param_count().unwrap(), 4).unwrap();
        let base: ParamVector<f64> = init_params(arch, &mut rng).unwrap();
        for _ in 0..6 {
            let v = base.as_slice().iter().map(|&b| b + 0.05 * rng.next_normal()).collect();
            stats.collect(&ParamVector::new(v)).unwrap();
        }
        build_posterior(&stats, scale).unwrap()
    }

    #[test]
    fn frozen_stats_give_degenerate_posterior() {
        let mut stats = SwagStats::new(3, 5).unwrap();
        for _ in 0..4 {
            stats.collect(&pv(&[0.3, -1.7, 2.0])).unwrap();
        }
        let post = build_posterior(&stats, 1.0).unwrap();
        assert_eq!(post.mean(), &pv(&[0.3, -1.7, 2.0]));
        assert!(post.diag_var().as_slice().iter().all(|&v| v == 0.0));
        assert!(post.deviation().as_slice().iter().all(|&v| v == 0.0));
        let s = sample_weights(&post, &mut seeded_stream(1));
        assert_eq!(&s, post.mean());
    }

    #[test]
    fn two_snapshot_variance_and_clamp() {
        let mut stats = SwagStats::new(2, 5).unwrap();
        stats.collect(&pv(&[0.0, 0.0])).unwrap();
        stats.collect(&pv(&[2.0, 2.0])).unwrap();
        assert_eq!(build_posterior(&stats, 1.0).unwrap().diag_var(), &pv(&[1.0, 1.0]));
        stats.second_moment = pv(&[1.0 - 1e-15, 1.0]);
        assert_eq!(build_posterior(&stats, 1.0).unwrap().diag_var(), &pv(&[0.0, 0.0]));
    }

    #[test]
    fn rank_below_two_is_invalid_state() {
        let mut stats = SwagStats::new(2, 5).unwrap();
        stats.collect(&pv(&[1.0, 1.0])).unwrap();
        assert!(matches!(build_posterior(&stats, 1.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn zero_scale_returns_mean_bitwise() {
        let arch = tiny();
        let post = random_posterior(&arch, 0.0);
        let mut rng = seeded_stream(8);
        for _ in 0..3 {
            assert_eq!(&sample_weights(&post, &mut rng), post.mean());
        }
    }

    #[test]
    fn monte_carlo_mean_and_variance() {
        let post = SwagPosterior::new(
            pv(&[1.0, -2.0]),
            pv(&[0.5, 2.0]),
            vec![pv(&[0.0, 0.0]), pv(&[0.0, 0.0])],
            1.0,
        )
        .unwrap();
        let mut rng = seeded_stream(11);
        let n = 10_000;
        let samples: Vec<ParamVector<f64>> = (0..n).map(|_| sample_weights(&post, &mut rng)).collect();
        for c in 0..2 {
            let xs: Vec<f64> = samples.iter().map(|s| s.as_slice()[c]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let target_mean = post.mean().as_slice()[c];
            assert!((mean - target_mean).abs() < 3.0 * (var / n as f64).sqrt(), "coord {c}: {mean}");
            let target_var = post.diag_var().as_slice()[c] / 2.0;
            // standard error of a Gaussian sample variance
            let se = target_var * (2.0 / (n - 1) as f64).sqrt();
            assert!((var - target_var).abs() < 5.0 * se, "coord {c}: {var} vs {target_var}");
        }
    }

    #[test]
    fn low_rank_term_scales_with_rank() {
        // one nonzero column among two: variance of D z2 / sqrt(2) is c^2 / 2
        let post = SwagPosterior::new(pv(&[0.0]), pv(&[0.0]), vec![pv(&[2.0]), pv(&[0.0])], 1.0).unwrap();
        let mut rng = seeded_stream(12);
        let n = 20_000;
        let var = (0..n)
            .map(|_| sample_weights(&post, &mut rng).as_slice()[0].powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var - 2.0).abs() < 5.0 * 2.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn swag_draws_shape_and_degeneracy() {
        let arch = tiny();
        let x = input(2);
        let post = random_posterior(&arch, 0.0);
        let d = predictive_draws_swag(&arch, &post, &x, 5, &mut seeded_stream(0)).unwrap();
        assert_eq!((d.draw_count(), d.class_count()), (5, 3));
        for s in 1..5 {
            assert_eq!(d.row(s), d.row(0));
        }
        let one = predictive_draws_swag(&arch, &post, &x, 1, &mut seeded_stream(0)).unwrap();
        let direct = Network::new(&arch).unwrap().forward(post.mean(), &x, Mode::Eval).unwrap();
        assert_eq!(one.row(0), softmax(&direct.logits).unwrap().values());
        assert!(predictive_draws_swag(&arch, &post, &x, 0, &mut seeded_stream(0)).is_err());
    }

    #[test]
    fn swag_draws_are_reproducible_and_vary() {
        let arch = tiny();
        let x = input(3);
        let post = random_posterior(&arch, 1.0);
        let a = predictive_draws_swag(&arch, &post, &x, 4, &mut seeded_stream(5)).unwrap();
        let b = predictive_draws_swag(&arch, &post, &x, 4, &mut seeded_stream(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.row(0), a.row(1));
    }

    #[test]
    fn ensemble_draws_follow_member_order() {
        let arch = tiny();
        let x = input(4);
        let mut rng = seeded_stream(6);
        let a: ParamVector<f64> = init_params(&arch, &mut rng).unwrap();
        let b: ParamVector<f64> = init_params(&arch, &mut rng).unwrap();
        let single = predictive_draws_ensemble(&arch, &[a.clone()], &x).unwrap();
        assert_eq!(single.row(0), Network::new(&arch).unwrap().predict_proba(&a, &x).unwrap().values());
        let dup = predictive_draws_ensemble(&arch, &[a.clone(), a.clone()], &x).unwrap();
        assert_eq!(dup.row(0), dup.row(1));
        let ab = predictive_draws_ensemble(&arch, &[a.clone(), b.clone()], &x).unwrap();
        let ba = predictive_draws_ensemble(&arch, &[b, a], &x).unwrap();
        assert_eq!(ab.row(0), ba.row(1));
        assert_eq!(ab.row(1), ba.row(0));
        assert!(predictive_draws_ensemble(&arch, &[pv(&[1.0])], &x).is_err());
        assert!(predictive_draws_ensemble::<f64>(&arch, &[], &x).is_err());
    }

    #[test]
    fn posterior_file_round_trip() {
        let arch = tiny();
        let post = random_posterior(&arch, 0.7);
        let bytes = encode_posterior(&post, &arch).unwrap();
        let (arch2, back) = decode_posterior::<f64>(&bytes).unwrap();
        assert_eq!(arch2, arch);
        assert_eq!(back, post);
        assert!(decode_posterior::<f64>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_posterior::<f64>(&bad), Err(Error::Format(_))));
        // weight checkpoints are a different version of the same container
        let ckpt = crate::model::encode_checkpoint(post.mean(), &arch).unwrap();
        assert!(matches!(decode_posterior::<f64>(&ckpt), Err(Error::Format(_))));
    }

    #[test]
    fn draws_validate_rows() {
        assert!(SoftmaxDraws::from_rows(&[vec![0.6, 0.6]]).is_err());
        assert!(SoftmaxDraws::<f64>::from_rows(&[]).is_err());
        assert!(SoftmaxDraws::from_rows(&[vec![0.25, 0.75]]).is_ok());
    }
}
