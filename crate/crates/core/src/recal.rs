//! Squeeze-and-excitation recalibration of per-layer features.
//!
//! The channel weights are recomputed for every patch: only the two MLP
//! matrices are fixed parameters. One block serves both the exemplar and
//! the search branch of its layer.

use crate::backbone::{BackboneSpec, FeatureSet, Layer, Model};
use crate::error::{shape_err, Result};
use crate::numkit::{dense_sigmoid_mlp, global_avg_pool};
use crate::tensor::{Matrix, Tensor3};
use crate::weights::{se_name, WeightStore};

/// Channel reduction factor of the excitation MLP.
pub const REDUCTION: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SeBlock {
    channels: usize,
    reduction: usize,
    w1: Matrix,
    w2: Matrix,
}

impl SeBlock {
    /// `w1` is `(C/b) x C`, `w2` is `C x (C/b)`.
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        let channels = w1.cols();
        let hidden = w1.rows();
        if w2.rows() != channels || w2.cols() != hidden {
            return Err(shape_err(format!(
                "SE block: w1 is {}x{}, w2 must be {channels}x{hidden} but is {}x{}",
                hidden,
                channels,
                w2.rows(),
                w2.cols()
            )));
        }
        if channels % hidden != 0 {
            return Err(shape_err(format!(
                "SE block: {channels} channels not divisible by hidden width {hidden}"
            )));
        }
        Ok(Self {
            channels,
            reduction: channels / hidden,
            w1,
            w2,
        })
    }

    pub fn from_store(store: &WeightStore, model: Model, layer: Layer) -> Result<Self> {
        let c = BackboneSpec::canonical().layer_channels(layer);
        let hidden = c / REDUCTION;
        let w1 = store.expect(&se_name(model, layer, "w1"), &[hidden, c])?;
        let w2 = store.expect(&se_name(model, layer, "w2"), &[c, hidden])?;
        Self::new(
            Matrix::new(hidden, c, w1.data.clone())?,
            Matrix::new(c, hidden, w2.data.clone())?,
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// Excitation weights, each in `(0, 1)`.
    pub fn channel_weights(&self, features: &Tensor3) -> Result<Vec<f64>> {
        self.check(features)?;
        let squeezed = global_avg_pool(features);
        dense_sigmoid_mlp(&squeezed, &self.w1, &self.w2)
    }

    pub fn recalibrate(&self, features: &Tensor3) -> Result<Tensor3> {
        let omega = self.channel_weights(features)?;
        apply_channel_weights(features, &omega)
    }

    fn check(&self, features: &Tensor3) -> Result<()> {
        if features.channels() != self.channels {
            return Err(shape_err(format!(
                "SE block expects {} channels, features have {}",
                self.channels,
                features.channels()
            )));
        }
        Ok(())
    }
}

/// Multiplies channel `c` of `features` by `weights[c]`.
pub fn apply_channel_weights(features: &Tensor3, weights: &[f64]) -> Result<Tensor3> {
    if weights.len() != features.channels() {
        return Err(shape_err(format!(
            "{} channel weights for {} channels",
            weights.len(),
            features.channels()
        )));
    }
    let mut out = features.clone();
    for px in out.data_mut().chunks_exact_mut(weights.len()) {
        for (v, &w) in px.iter_mut().zip(weights) {
            *v = (*v as f64 * w) as f32;
        }
    }
    Ok(out)
}

/// The three SE blocks of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SeBlocks {
    blocks: [SeBlock; 3],
}

impl SeBlocks {
    pub fn new(c3: SeBlock, c4: SeBlock, c5: SeBlock) -> Result<Self> {
        let spec = BackboneSpec::canonical();
        for (layer, b) in Layer::ALL.iter().zip([&c3, &c4, &c5]) {
            if b.channels() != spec.layer_channels(*layer) {
                return Err(shape_err(format!(
                    "SE block for {layer} has {} channels, expected {}",
                    b.channels(),
                    spec.layer_channels(*layer)
                )));
            }
        }
        Ok(Self { blocks: [c3, c4, c5] })
    }

    pub fn from_store(store: &WeightStore, model: Model) -> Result<Self> {
        Self::new(
            SeBlock::from_store(store, model, Layer::C3)?,
            SeBlock::from_store(store, model, Layer::C4)?,
            SeBlock::from_store(store, model, Layer::C5)?,
        )
    }

    pub fn get(&self, layer: Layer) -> &SeBlock {
        &self.blocks[layer.index()]
    }

    pub fn recalibrate_set(&self, features: &FeatureSet) -> Result<FeatureSet> {
        Ok(FeatureSet {
            c3: self.get(Layer::C3).recalibrate(&features.c3)?,
            c4: self.get(Layer::C4).recalibrate(&features.c4)?,
            c5: self.get(Layer::C5).recalibrate(&features.c5)?,
        })
    }
}
