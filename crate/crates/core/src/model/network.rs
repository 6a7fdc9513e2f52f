use super::{Architecture, LayerSlot, Layout, ParamVector};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prob::{softmax_unchecked, ProbVector};
use crate::rng::RngStream;
use crate::scalar::Real;

#[derive(Debug, Clone)]
struct ConvSpec {
    weight: usize,
    bias: usize,
    cin: usize,
    cout: usize,
    kernel: usize,
    dilation: usize,
    pad_left: usize,
}

impl ConvSpec {
    fn weight_len(&self) -> usize {
        self.cout * self.kernel * self.cin
    }

    fn end(&self) -> usize {
        self.bias + self.cout
    }

    /// `y[t][o] = b[o] + sum_j sum_c w[o][j][c] x[t + j d - pad][c]`,
    /// out-of-range taps read zero. Output has the input's length.
    fn forward<T: Real>(&self, params: &[T], x: &[T], steps: usize, y: &mut [T]) {
        let w = &params[self.weight..self.weight + self.weight_len()];
        let b = &params[self.bias..self.bias + self.cout];
        for t in 0..steps {
            let out = &mut y[t * self.cout..(t + 1) * self.cout];
            out.copy_from_slice(b);
            for j in 0..self.kernel {
                let Some(s) = self.source(t, j, steps) else { continue };
                let xs = &x[s * self.cin..(s + 1) * self.cin];
                for (o, acc) in out.iter_mut().enumerate() {
                    let wo = &w[(o * self.kernel + j) * self.cin..(o * self.kernel + j + 1) * self.cin];
                    *acc += dot(wo, xs);
                }
            }
        }
    }

    /// Accumulates weight/bias gradients and, if requested, the input gradient.
    fn backward<T: Real>(
        &self,
        params: &[T],
        x: &[T],
        steps: usize,
        dy: &[T],
        grad: &mut [T],
        mut dx: Option<&mut [T]>,
    ) {
        let w = &params[self.weight..self.weight + self.weight_len()];
        for t in 0..steps {
            for o in 0..self.cout {
                let g = dy[t * self.cout + o];
                if g == T::zero() {
                    continue;
                }
                grad[self.bias + o] += g;
                for j in 0..self.kernel {
                    let Some(s) = self.source(t, j, steps) else { continue };
                    let xs = &x[s * self.cin..(s + 1) * self.cin];
                    let off = self.weight + (o * self.kernel + j) * self.cin;
                    axpy(g, xs, &mut grad[off..off + self.cin]);
                    if let Some(dx) = dx.as_deref_mut() {
                        let wo = &w[(o * self.kernel + j) * self.cin..(o * self.kernel + j + 1) * self.cin];
                        axpy(g, wo, &mut dx[s * self.cin..(s + 1) * self.cin]);
                    }
                }
            }
        }
    }

    #[inline]
    fn source(&self, t: usize, tap: usize, steps: usize) -> Option<usize> {
        let s = (t + tap * self.dilation).checked_sub(self.pad_left)?;
        (s < steps).then_some(s)
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[derive(Debug, Clone)]
struct ConvStage {
    conv: ConvSpec,
    steps: usize,
    dropout: f64,
}

#[derive(Debug, Clone)]
struct TcnStage {
    conv: ConvSpec,
    proj: Option<ConvSpec>,
}

/// Offsets and lengths for one architecture.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    input_steps: usize,
    input_channels: usize,
    conv: Vec<ConvStage>,
    tcn: Vec<TcnStage>,
    tcn_steps: usize,
    dense_weight: usize,
    dense_bias: usize,
    dense_in: usize,
    classes: usize,
    pub(crate) param_count: usize,
}

impl Plan {
    pub(crate) fn new(arch: &Architecture) -> Result<Self> {
        if arch.input_steps == 0 || arch.input_channels == 0 {
            return Err(Error::invalid("input shape must be non-empty"));
        }
        if arch.class_count < 2 {
            return Err(Error::invalid("class_count must be at least 2"));
        }
        let mut offset = 0;
        let mut alloc = |cin: usize, cout: usize, kernel: usize, dilation: usize, pad_left: usize| {
            let spec = ConvSpec {
                weight: offset,
                bias: offset + cout * kernel * cin,
                cin,
                cout,
                kernel,
                dilation,
                pad_left,
            };
            offset = spec.end();
            spec
        };

        let mut steps = arch.input_steps;
        let mut channels = arch.input_channels;
        let mut conv = Vec::new();
        for (i, block) in arch.conv_blocks.iter().enumerate() {
            if block.kernel_size == 0 || block.filters == 0 {
                return Err(Error::invalid(format!("conv block {i} has zero kernel size or filters")));
            }
            if !(0.0..1.0).contains(&block.dropout_rate) {
                return Err(Error::invalid(format!("conv block {i} dropout must lie in [0, 1)")));
            }
            if steps < 2 {
                return Err(Error::invalid(format!("conv block {i} has fewer than 2 steps to pool")));
            }
            let spec = alloc(channels, block.filters, block.kernel_size, 1, (block.kernel_size - 1) / 2);
            conv.push(ConvStage {
                conv: spec,
                steps,
                dropout: block.dropout_rate,
            });
            steps /= 2;
            channels = block.filters;
        }

        let tcn_cfg = &arch.tcn;
        if tcn_cfg.kernel_size == 0 || tcn_cfg.channels == 0 {
            return Err(Error::invalid("temporal unit has zero kernel size or channels"));
        }
        if tcn_cfg.dilations.is_empty() {
            return Err(Error::invalid("temporal unit needs at least one dilation"));
        }
        if tcn_cfg.dilations[0] == 0 || tcn_cfg.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("dilations must be strictly increasing positive integers"));
        }
        let mut tcn = Vec::new();
        for &d in &tcn_cfg.dilations {
            let k = tcn_cfg.kernel_size;
            let conv = alloc(channels, tcn_cfg.channels, k, d, (k - 1) * d);
            let proj = (channels != tcn_cfg.channels).then(|| alloc(channels, tcn_cfg.channels, 1, 1, 0));
            tcn.push(TcnStage { conv, proj });
            channels = tcn_cfg.channels;
        }
        let dense_weight = offset;
        let dense_bias = dense_weight + arch.class_count * channels;
        let param_count = dense_bias + arch.class_count;
        Ok(Self {
            input_steps: arch.input_steps,
            input_channels: arch.input_channels,
            conv,
            tcn,
            tcn_steps: steps,
            dense_weight,
            dense_bias,
            dense_in: channels,
            classes: arch.class_count,
            param_count,
        })
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut slots = Vec::new();
        let conv_slots = |name: String, spec: &ConvSpec, slots: &mut Vec<LayerSlot>| {
            let shape = if spec.kernel == 1 && name.ends_with("proj") {
                vec![spec.cout, spec.cin]
            } else {
                vec![spec.cout, spec.kernel, spec.cin]
            };
            slots.push(LayerSlot {
                name: format!("{name}.weight"),
                shape,
                offset: spec.weight,
            });
            slots.push(LayerSlot {
                name: format!("{name}.bias"),
                shape: vec![spec.cout],
                offset: spec.bias,
            });
        };
        for (i, stage) in self.conv.iter().enumerate() {
            conv_slots(format!("conv{i}"), &stage.conv, &mut slots);
        }
        for (j, stage) in self.tcn.iter().enumerate() {
            conv_slots(format!("tcn{j}"), &stage.conv, &mut slots);
            if let Some(p) = &stage.proj {
                conv_slots(format!("tcn{j}.proj"), p, &mut slots);
            }
        }
        slots.push(LayerSlot {
            name: "dense.weight".into(),
            shape: vec![self.classes, self.dense_in],
            offset: self.dense_weight,
        });
        slots.push(LayerSlot {
            name: "dense.bias".into(),
            shape: vec![self.classes],
            offset: self.dense_bias,
        });
        Layout { slots }
    }
}

/// Forward-pass mode. Dropout is active only in `Train`.
pub enum Mode<'a> {
    Train(&'a mut RngStream),
    Eval,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    argmax: Vec<u32>,
    mask: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct TcnCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub logits: Vec<T>,
    conv: Vec<ConvCache<T>>,
    tcn: Vec<TcnCache<T>>,
    /// Output of the last temporal block, `tcn_steps x channels`.
    temporal: Vec<T>,
    pooled: Vec<T>,
}

impl<T: Real> ForwardOutput<T> {
    /// Activations of temporal block `block` (pre-ReLU), `steps x channels`.
    pub fn temporal_preactivation(&self, block: usize) -> &[T] {
        &self.tcn[block].pre
    }

    pub fn temporal_output(&self) -> &[T] {
        &self.temporal
    }
}

/// Architecture with precomputed offsets.
#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    plan: Plan,
}

impl Network {
    pub fn new(arch: &Architecture) -> Result<Self> {
        Ok(Self {
            arch: arch.clone(),
            plan: Plan::new(arch)?,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.plan.param_count
    }

    pub fn check_params<T: Real>(&self, params: &ParamVector<T>) -> Result<()> {
        if params.len() != self.plan.param_count {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, architecture needs {}",
                params.len(),
                self.plan.param_count
            )));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, params: &ParamVector<T>, x: &Matrix<T>, mode: Mode<'_>) -> Result<ForwardOutput<T>> {
        self.check_params(params)?;
        if x.rows() != self.plan.input_steps || x.cols() != self.plan.input_channels {
            return Err(Error::invalid(format!(
                "input is {}x{}, architecture expects {}x{}",
                x.rows(),
                x.cols(),
                self.plan.input_steps,
                self.plan.input_channels
            )));
        }
        Ok(self.forward_unchecked(params.as_slice(), x.as_slice(), mode))
    }

    fn forward_unchecked<T: Real>(&self, p: &[T], x: &[T], mut mode: Mode<'_>) -> ForwardOutput<T> {
        let plan = &self.plan;
        let mut cur = x.to_vec();
        let mut conv_cache = Vec::with_capacity(plan.conv.len());
        for stage in &plan.conv {
            let cout = stage.conv.cout;
            let mut pre = vec![T::zero(); stage.steps * cout];
            stage.conv.forward(p, &cur, stage.steps, &mut pre);
            let half = stage.steps / 2;
            let mut out = vec![T::zero(); half * cout];
            let mut argmax = vec![0u32; half * cout];
            for t in 0..half {
                for o in 0..cout {
                    let a = pre[2 * t * cout + o].max(T::zero());
                    let b = pre[(2 * t + 1) * cout + o].max(T::zero());
                    let (v, at) = if a >= b { (a, 2 * t) } else { (b, 2 * t + 1) };
                    out[t * cout + o] = v;
                    argmax[t * cout + o] = at as u32;
                }
            }
            let mask = match &mut mode {
                Mode::Train(rng) if stage.dropout > 0.0 => {
                    let keep = T::lit(1.0 / (1.0 - stage.dropout));
                    let mask: Vec<T> = (0..out.len())
                        .map(|_| if rng.next_uniform() < stage.dropout { T::zero() } else { keep })
                        .collect();
                    for (v, m) in out.iter_mut().zip(&mask) {
                        *v *= *m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            conv_cache.push(ConvCache {
                input: std::mem::replace(&mut cur, out),
                pre,
                argmax,
                mask,
            });
        }

        let steps = plan.tcn_steps;
        let mut tcn_cache = Vec::with_capacity(plan.tcn.len());
        for stage in &plan.tcn {
            let cout = stage.conv.cout;
            let mut pre = vec![T::zero(); steps * cout];
            stage.conv.forward(p, &cur, steps, &mut pre);
            let mut out = match &stage.proj {
                Some(proj) => {
                    let mut skip = vec![T::zero(); steps * cout];
                    proj.forward(p, &cur, steps, &mut skip);
                    skip
                }
                None => cur.clone(),
            };
            for (o, &z) in out.iter_mut().zip(&pre) {
                *o += z.max(T::zero());
            }
            tcn_cache.push(TcnCache {
                input: std::mem::replace(&mut cur, out),
                pre,
            });
        }

        let width = plan.dense_in;
        let inv = T::one() / T::from_usize_lossy(steps);
        let mut pooled = vec![T::zero(); width];
        for t in 0..steps {
            for (g, &v) in pooled.iter_mut().zip(&cur[t * width..(t + 1) * width]) {
                *g += v;
            }
        }
        for g in &mut pooled {
            *g *= inv;
        }
        let logits = (0..plan.classes)
            .map(|k| {
                let w = &p[plan.dense_weight + k * width..plan.dense_weight + (k + 1) * width];
                p[plan.dense_bias + k] + dot(w, &pooled)
            })
            .collect();
        ForwardOutput {
            logits,
            conv: conv_cache,
            tcn: tcn_cache,
            temporal: cur,
            pooled,
        }
    }

    /// Softmax cross-entropy (nats) and its exact gradient at the cached point.
    pub fn backward<T: Real>(&self, params: &ParamVector<T>, output: &ForwardOutput<T>, target: usize) -> Result<(T, ParamVector<T>)> {
        self.check_params(params)?;
        let plan = &self.plan;
        if target >= plan.classes {
            return Err(Error::invalid(format!("target {target} out of range for {} classes", plan.classes)));
        }
        if output.logits.len() != plan.classes || output.conv.len() != plan.conv.len() || output.tcn.len() != plan.tcn.len() {
            return Err(Error::invalid("forward cache does not match architecture"));
        }
        let p = params.as_slice();
        let mut grad = vec![T::zero(); plan.param_count];

        let z = &output.logits;
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let loss = lse - z[target];
        let mut dlogits = softmax_unchecked(z);
        dlogits[target] -= T::one();

        let width = plan.dense_in;
        let mut dpooled = vec![T::zero(); width];
        for (k, &g) in dlogits.iter().enumerate() {
            grad[plan.dense_bias + k] += g;
            let off = plan.dense_weight + k * width;
            axpy(g, &output.pooled, &mut grad[off..off + width]);
            axpy(g, &p[off..off + width], &mut dpooled);
        }

        let steps = plan.tcn_steps;
        let inv = T::one() / T::from_usize_lossy(steps);
        let mut dcur: Vec<T> = (0..steps).flat_map(|_| dpooled.iter().map(|&g| g * inv)).collect();
        for (stage, cache) in plan.tcn.iter().zip(&output.tcn).rev() {
            let cin = stage.conv.cin;
            let mut dpre: Vec<T> = dcur
                .iter()
                .zip(&cache.pre)
                .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
                .collect();
            let mut dx = vec![T::zero(); steps * cin];
            stage.conv.backward(p, &cache.input, steps, &dpre, &mut grad, Some(&mut dx));
            match &stage.proj {
                Some(proj) => proj.backward(p, &cache.input, steps, &dcur, &mut grad, Some(&mut dx)),
                None => axpy(T::one(), &dcur, &mut dx),
            }
            dpre.clear();
            dcur = dx;
        }

        for (i, (stage, cache)) in plan.conv.iter().zip(&output.conv).enumerate().rev() {
            let cout = stage.conv.cout;
            if let Some(mask) = &cache.mask {
                for (g, m) in dcur.iter_mut().zip(mask) {
                    *g *= *m;
                }
            }
            let mut dpre = vec![T::zero(); stage.steps * cout];
            for (idx, &g) in dcur.iter().enumerate() {
                let o = idx % cout;
                let src = cache.argmax[idx] as usize * cout + o;
                if cache.pre[src] > T::zero() {
                    dpre[src] += g;
                }
            }
            if i == 0 {
                stage.conv.backward(p, &cache.input, stage.steps, &dpre, &mut grad, None);
            } else {
                let mut dx = vec![T::zero(); stage.steps * stage.conv.cin];
                stage.conv.backward(p, &cache.input, stage.steps, &dpre, &mut grad, Some(&mut dx));
                dcur = dx;
            }
        }
        Ok((loss, ParamVector::new(grad)))
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba<T: Real>(&self, params: &ParamVector<T>, x: &Matrix<T>) -> Result<ProbVector<T>> {
        let out = self.forward(params, x, Mode::Eval)?;
        ProbVector::new(softmax_unchecked(&out.logits))
    }
}

pub fn forward<T: Real>(arch: &Architecture, params: &ParamVector<T>, x: &Matrix<T>, mode: Mode<'_>) -> Result<ForwardOutput<T>> {
    Network::new(arch)?.forward(params, x, mode)
}

pub fn backward<T: Real>(
    arch: &Architecture,
    params: &ParamVector<T>,
    output: &ForwardOutput<T>,
    target: usize,
) -> Result<(T, ParamVector<T>)> {
    Network::new(arch)?.backward(params, output, target)
}

/// Eval-mode logits for each input; samples never interact.
pub fn forward_batch<T: Real>(arch: &Architecture, params: &ParamVector<T>, xs: &[Matrix<T>]) -> Result<Vec<Vec<T>>> {
    let net = Network::new(arch)?;
    xs.iter()
        .map(|x| net.forward(params, x, Mode::Eval).map(|o| o.logits))
        .collect()
}

pub fn predict_proba<T: Real>(arch: &Architecture, params: &ParamVector<T>, x: &Matrix<T>) -> Result<ProbVector<T>> {
    Network::new(arch)?.predict_proba(params, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ConvBlock, TcnConfig};
    use crate::rng::seeded_stream;

    pub(crate) fn tiny(dropout: f64) -> Architecture {
        Architecture {
            input_steps: 8,
            input_channels: 3,
            conv_blocks: vec![ConvBlock {
                filters: 4,
                kernel_size: 3,
                dropout_rate: dropout,
            }],
            tcn: TcnConfig {
                channels: 5,
                kernel_size: 2,
                dilations: vec![1, 2],
            },
            class_count: 3,
        }
    }

    fn random_input(arch: &Architecture, seed: u64) -> Matrix<f64> {
        let mut rng = seeded_stream(seed);
        let data = (0..arch.input_steps * arch.input_channels).map(|_| rng.next_normal()).collect();
        Matrix::from_vec(arch.input_steps, arch.input_channels, data).unwrap()
    }

    #[test]
    fn zero_params_give_equal_logits() {
        let arch = Architecture::desk(10);
        let p = ParamVector::<f64>::zeros(arch.param_count().unwrap());
        let out = forward(&arch, &p, &random_input(&arch, 1), Mode::Eval).unwrap();
        assert!(out.logits.iter().all(|&z| z == out.logits[0]));
    }

    #[test]
    fn eval_is_deterministic_and_batch_independent() {
        let arch = Architecture::desk(10);
        let p: ParamVector<f64> = init_params(&arch, &mut seeded_stream(4)).unwrap();
        let x = random_input(&arch, 2);
        let a = forward(&arch, &p, &x, Mode::Eval).unwrap().logits;
        let b = forward(&arch, &p, &x, Mode::Eval).unwrap().logits;
        assert_eq!(a, b);
        let batch = forward_batch(&arch, &p, &[x.clone(), random_input(&arch, 3), x]).unwrap();
        assert_eq!(batch[0], batch[2]);
        assert_eq!(batch[0], a);
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let arch = tiny(0.0);
        let p = ParamVector::<f64>::zeros(arch.param_count().unwrap());
        let out = forward(&arch, &p, &random_input(&arch, 1), Mode::Eval).unwrap();
        let (loss, _) = backward(&arch, &p, &out, 1).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!(backward(&arch, &p, &out, 3).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let arch = tiny(0.0);
        let p = ParamVector::<f64>::zeros(arch.param_count().unwrap());
        let bad = Matrix::filled(7, 3, 0.0);
        assert!(forward(&arch, &p, &bad, Mode::Eval).is_err());
        let short = ParamVector::<f64>::zeros(10);
        assert!(forward(&arch, &short, &random_input(&arch, 0), Mode::Eval).is_err());
    }

    #[test]
    fn train_mode_dropout_uses_rng() {
        let arch = tiny(0.5);
        let p: ParamVector<f64> = init_params(&arch, &mut seeded_stream(4)).unwrap();
        let x = random_input(&arch, 2);
        let a = forward(&arch, &p, &x, Mode::Train(&mut seeded_stream(1))).unwrap().logits;
        let b = forward(&arch, &p, &x, Mode::Train(&mut seeded_stream(1))).unwrap().logits;
        assert_eq!(a, b);
        let e = forward(&arch, &p, &x, Mode::Eval).unwrap().logits;
        assert_ne!(a, e);
    }

    /// Taps that always land before the first time step never see data.
    #[test]
    fn dead_taps_have_exactly_zero_gradient() {
        let mut arch = tiny(0.0);
        arch.tcn.kernel_size = 3;
        arch.tcn.dilations = vec![1, 8];
        let net = Network::new(&arch).unwrap();
        let p: ParamVector<f64> = init_params(&arch, &mut seeded_stream(9)).unwrap();
        let out = net.forward(&p, &random_input(&arch, 5), Mode::Eval).unwrap();
        let (_, grad) = net.backward(&p, &out, 0).unwrap();
        let slot = arch.layout().unwrap().slot("tcn1.weight").unwrap().clone();
        let (cout, k, cin) = (slot.shape[0], slot.shape[1], slot.shape[2]);
        let g = &grad.as_slice()[slot.range()];
        for o in 0..cout {
            for j in 0..k - 1 {
                for c in 0..cin {
                    assert_eq!(g[(o * k + j) * cin + c], 0.0);
                }
            }
        }
        // the current-step tap is live
        assert!((0..cout * cin).any(|i| g[(i / cin * k + k - 1) * cin + i % cin] != 0.0));
    }

    #[test]
    fn f32_forward_tracks_f64() {
        let arch = tiny(0.0);
        let p: ParamVector<f64> = init_params(&arch, &mut seeded_stream(4)).unwrap();
        let x = random_input(&arch, 2);
        let a = forward(&arch, &p, &x, Mode::Eval).unwrap().logits;
        let b = forward(&arch, &p.cast::<f32>(), &x.map(|v| v as f32), Mode::Eval).unwrap().logits;
        for (u, v) in a.iter().zip(&b) {
            assert!((u - *v as f64).abs() < 1e-4);
        }
    }
}
