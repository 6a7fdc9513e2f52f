//! CNN feature extractor followed by a temporal convolution unit and a dense
//! classifier, evaluated over a flat parameter vector.
//!
//! Pipeline for one `steps x channels` input:
//!
//! 1. per conv block: 1D convolution with same padding (`pad_left = (k-1)/2`,
//!    output length unchanged) -> ReLU -> max-pool (size 2, stride 2, output
//!    length `floor(T/2)`) -> inverted dropout in training mode only;
//! 2. per dilation `d`: causal convolution (`x[t - (k-1-j) d]` for tap `j`,
//!    zero before the start) -> ReLU -> residual add of the block input,
//!    through a 1x1 projection when channel counts differ;
//! 3. global average pool over time -> dense layer to `K` logits.
//!
//! Parameter layout, in order: for each conv block `conv{i}.weight`
//! `[filters, kernel, in_channels]` then `conv{i}.bias` `[filters]`; for each
//! temporal block `tcn{j}.weight` `[channels, kernel, in_channels]`,
//! `tcn{j}.bias`, and when the block changes width `tcn{j}.proj.weight`
//! `[channels, in_channels]` and `tcn{j}.proj.bias`; finally `dense.weight`
//! `[K, channels]` and `dense.bias` `[K]`.
//!
//! For the desk preset with `K = 10` this gives
//! `3392 + 16448 + 12336 + 3120 + 9264 + 490 = 45050` parameters.

mod checkpoint;
mod network;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint,
    CHECKPOINT_VERSION, MAGIC,
};
pub(crate) use checkpoint::{Decoder, Encoder};
pub use network::{backward, forward, forward_batch, predict_proba, ForwardOutput, Mode, Network};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub input_steps: usize,
    pub input_channels: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub tcn: TcnConfig,
    pub class_count: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::desk(10)
    }
}

impl Architecture {
    fn preset(filters: usize, tcn_channels: usize, class_count: usize) -> Self {
        let block = ConvBlock {
            filters,
            kernel_size: 4,
            dropout_rate: 0.2,
        };
        Self {
            input_steps: 64,
            input_channels: 13,
            conv_blocks: vec![block.clone(), block],
            tcn: TcnConfig {
                channels: tcn_channels,
                kernel_size: 4,
                dilations: vec![1, 2],
            },
            class_count,
        }
    }

    /// 200 filters, 120 temporal channels.
    pub fn paper(class_count: usize) -> Self {
        Self::preset(200, 120, class_count)
    }

    /// 64 filters, 48 temporal channels; about 45k parameters at `K = 10`.
    pub fn desk(class_count: usize) -> Self {
        Self::preset(64, 48, class_count)
    }

    pub fn validate(&self) -> Result<()> {
        network::Plan::new(self).map(|_| ())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(network::Plan::new(self)?.param_count)
    }

    pub fn layout(&self) -> Result<Layout> {
        Ok(network::Plan::new(self)?.layout())
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayerSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn is_bias(&self) -> bool {
        self.name.ends_with(".bias")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub slots: Vec<LayerSlot>,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.slots.iter().map(LayerSlot::len).sum()
    }

    pub fn slot(&self, name: &str) -> Option<&LayerSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
}

impl<T: Real> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// Splits into per-slot tensors following `layout`.
    pub fn unflatten(&self, layout: &Layout) -> Result<Vec<(String, Vec<T>)>> {
        if layout.total() != self.len() {
            return Err(Error::invalid(format!(
                "layout covers {} parameters, vector has {}",
                layout.total(),
                self.len()
            )));
        }
        Ok(layout
            .slots
            .iter()
            .map(|s| (s.name.clone(), self.values[s.range()].to_vec()))
            .collect())
    }

    /// Inverse of [`ParamVector::unflatten`].
    pub fn flatten(layout: &Layout, parts: &[(String, Vec<T>)]) -> Result<Self> {
        if parts.len() != layout.slots.len() {
            return Err(Error::invalid("part count does not match layout"));
        }
        let mut values = vec![T::zero(); layout.total()];
        for (slot, (name, data)) in layout.slots.iter().zip(parts) {
            if *name != slot.name || data.len() != slot.len() {
                return Err(Error::invalid(format!("part `{name}` does not match slot `{}`", slot.name)));
            }
            values[slot.range()].copy_from_slice(data);
        }
        Ok(Self { values })
    }

    pub fn cast<U: Real>(&self) -> ParamVector<U> {
        ParamVector {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// He-uniform weights (`bound = sqrt(6 / fan_in)`) for convolutions and
/// projections, LeCun-uniform (`sqrt(3 / fan_in)`) for the dense layer,
/// zero biases. Slots are filled in layout order from `rng`.
pub fn init_params<T: Real>(arch: &Architecture, rng: &mut RngStream) -> Result<ParamVector<T>> {
    let layout = arch.layout()?;
    let mut values = vec![T::zero(); layout.total()];
    for slot in &layout.slots {
        if slot.is_bias() {
            continue;
        }
        let fan_in: usize = slot.shape[1..].iter().product();
        let gain = if slot.name.starts_with("dense") { 3.0 } else { 6.0 };
        let bound = (gain / fan_in as f64).sqrt();
        for v in &mut values[slot.range()] {
            *v = T::lit(rng.uniform_in(-bound, bound));
        }
    }
    Ok(ParamVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_stream;

    #[test]
    fn desk_param_count_matches_hand_sum() {
        let arch = Architecture::desk(10);
        let conv1 = 64 * 4 * 13 + 64;
        let conv2 = 64 * 4 * 64 + 64;
        let tcn1 = 48 * 4 * 64 + 48 + 48 * 64 + 48;
        let tcn2 = 48 * 4 * 48 + 48;
        let dense = 10 * 48 + 10;
        assert_eq!(conv1 + conv2 + tcn1 + tcn2 + dense, 45050);
        assert_eq!(arch.param_count().unwrap(), 45050);
        assert_eq!(arch.layout().unwrap().total(), 45050);
    }

    #[test]
    fn layout_is_contiguous() {
        let layout = Architecture::paper(52).layout().unwrap();
        let mut next = 0;
        for s in &layout.slots {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert!(layout.slot("tcn0.proj.weight").is_some());
        assert!(layout.slot("tcn1.proj.weight").is_none());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let arch = Architecture::desk(10);
        let a: ParamVector<f64> = init_params(&arch, &mut seeded_stream(1)).unwrap();
        let b: ParamVector<f64> = init_params(&arch, &mut seeded_stream(1)).unwrap();
        let c: ParamVector<f64> = init_params(&arch, &mut seeded_stream(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let layout = arch.layout().unwrap();
        let bias = layout.slot("conv0.bias").unwrap();
        assert!(a.as_slice()[bias.range()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_inverts_unflatten() {
        let arch = Architecture::desk(4);
        let layout = arch.layout().unwrap();
        let v: ParamVector<f64> = init_params(&arch, &mut seeded_stream(3)).unwrap();
        let parts = v.unflatten(&layout).unwrap();
        assert_eq!(ParamVector::flatten(&layout, &parts).unwrap(), v);
    }

    #[test]
    fn invalid_architectures() {
        let mut arch = Architecture::desk(10);
        arch.tcn.dilations = vec![2, 1];
        assert!(arch.validate().is_err());
        let mut arch = Architecture::desk(10);
        arch.conv_blocks[0].kernel_size = 0;
        assert!(arch.validate().is_err());
        let mut arch = Architecture::desk(10);
        arch.input_steps = 2;
        assert!(arch.validate().is_err());
        let mut arch = Architecture::desk(10);
        arch.class_count = 1;
        assert!(arch.validate().is_err());
    }
}
