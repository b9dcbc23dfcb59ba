//! Five-layer convolutional feature extractors.
//!
//! Both models share one geometry and differ only in their weights:
//!
//! | stage | kernel | stride | out | after        |
//! |-------|--------|--------|-----|--------------|
//! | conv1 | 11x11  | 2      | 96  | ReLU, pool 3/2 |
//! | conv2 | 5x5    | 1      | 256 | ReLU, pool 3/2 |
//! | conv3 | 3x3    | 1      | 384 | ReLU         |
//! | conv4 | 3x3    | 1      | 384 | ReLU         |
//! | conv5 | 3x3    | 1      | 256 | none         |
//!
//! A 127x127 exemplar yields 10x10x384, 8x8x384 and 6x6x256 features; a
//! 255x255 search region yields 26x26x384, 24x24x384 and 22x22x256.

use std::fmt;

use crate::error::{shape_err, Result};
use crate::numkit::{conv2d, conv2d_winograd, max_pool, output_dim, relu_in_place, WinogradKernels};
use crate::tensor::{KernelBank, Tensor3};
use crate::weights::{conv_bias_name, conv_weight_name, WeightStore};

/// Smallest square patch that still produces a conv5 output.
pub const MIN_PATCH_SIZE: usize = 87;

/// Cumulative downsampling from input pixels to feature cells.
pub const TOTAL_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    /// Similarity network trained for tracking.
    S,
    /// Classification network with matching geometry.
    A,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::S, Model::A];

    pub fn name(self) -> &'static str {
        match self {
            Model::S => "S",
            Model::A => "A",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    C3,
    C4,
    C5,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::C3, Layer::C4, Layer::C5];

    pub fn name(self) -> &'static str {
        match self {
            Layer::C3 => "c3",
            Layer::C4 => "c4",
            Layer::C5 => "c5",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStage {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub relu: bool,
    /// `(size, stride)` of a max pool applied after the activation.
    pub pool: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneSpec {
    stages: Vec<ConvStage>,
}

impl BackboneSpec {
    pub fn canonical() -> Self {
        let stage = |kernel, stride, in_channels, out_channels, relu, pool| ConvStage {
            kernel,
            stride,
            in_channels,
            out_channels,
            relu,
            pool,
        };
        Self {
            stages: vec![
                stage(11, 2, 3, 96, true, Some((3, 2))),
                stage(5, 1, 96, 256, true, Some((3, 2))),
                stage(3, 1, 256, 384, true, None),
                stage(3, 1, 384, 384, true, None),
                stage(3, 1, 384, 256, false, None),
            ],
        }
    }

    pub fn stages(&self) -> &[ConvStage] {
        &self.stages
    }

    /// Output channels of a feature layer.
    pub fn layer_channels(&self, layer: Layer) -> usize {
        self.stages[2 + layer.index()].out_channels
    }

    /// Closed-form `(height, width, channels)` of c3, c4 and c5 for an
    /// input of the given spatial size, or `None` if the input is too small.
    pub fn feature_shapes(&self, height: usize, width: usize) -> Option<[(usize, usize, usize); 3]> {
        let (mut h, mut w) = (height, width);
        let mut shapes = [(0, 0, 0); 3];
        for (i, s) in self.stages.iter().enumerate() {
            h = output_dim(h, s.kernel, s.stride)?;
            w = output_dim(w, s.kernel, s.stride)?;
            if let Some((size, stride)) = s.pool {
                h = output_dim(h, size, stride)?;
                w = output_dim(w, size, stride)?;
            }
            if i >= 2 {
                shapes[i - 2] = (h, w, s.out_channels);
            }
        }
        Some(shapes)
    }
}

/// conv3, conv4 and conv5 activations of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub c3: Tensor3,
    pub c4: Tensor3,
    pub c5: Tensor3,
}

impl FeatureSet {
    pub fn get(&self, layer: Layer) -> &Tensor3 {
        match layer {
            Layer::C3 => &self.c3,
            Layer::C4 => &self.c4,
            Layer::C5 => &self.c5,
        }
    }

    pub fn shapes(&self) -> [(usize, usize, usize); 3] {
        [self.c3.shape(), self.c4.shape(), self.c5.shape()]
    }
}

/// One feature extractor with its weights resolved.
#[derive(Debug, Clone)]
pub struct Backbone {
    model: Model,
    spec: BackboneSpec,
    kernels: Vec<KernelBank>,
    // Pre-transformed copies for the stride-1 stages.
    winograd: Vec<Option<WinogradKernels>>,
}

impl Backbone {
    pub fn from_store(store: &WeightStore, model: Model) -> Result<Self> {
        let spec = BackboneSpec::canonical();
        let kernels = spec
            .stages()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let wname = conv_weight_name(model, i + 1);
                let bname = conv_bias_name(model, i + 1);
                let w = store.expect(&wname, &[s.kernel, s.kernel, s.in_channels, s.out_channels])?;
                let b = store.expect(&bname, &[s.out_channels])?;
                KernelBank::new(
                    s.kernel,
                    s.kernel,
                    s.in_channels,
                    s.out_channels,
                    w.data.clone(),
                    b.data.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let winograd = spec
            .stages()
            .iter()
            .zip(&kernels)
            .map(|(s, k)| match s.stride {
                1 => WinogradKernels::new(k).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            spec,
            kernels,
            winograd,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    /// Raw (pre-recalibration) conv3/conv4/conv5 features.
    pub fn forward(&self, patch: &Tensor3) -> Result<FeatureSet> {
        if patch.channels() != 3 {
            return Err(shape_err(format!("backbone expects 3 channels, got {}", patch.channels())));
        }
        if self.spec.feature_shapes(patch.height(), patch.width()).is_none() {
            return Err(shape_err(format!(
                "patch {}x{} is smaller than the {MIN_PATCH_SIZE}x{MIN_PATCH_SIZE} minimum",
                patch.height(),
                patch.width()
            )));
        }
        let mut x = patch.clone();
        let mut taps = Vec::with_capacity(3);
        for (i, stage) in self.spec.stages().iter().enumerate() {
            x = match &self.winograd[i] {
                Some(wk) => conv2d_winograd(&x, wk)?,
                None => conv2d(&x, &self.kernels[i], stage.stride)?,
            };
            if stage.relu {
                relu_in_place(&mut x);
            }
            if let Some((size, stride)) = stage.pool {
                x = max_pool(&x, size, stride)?;
            }
            if i >= 2 {
                taps.push(x.clone());
            }
        }
        let c5 = taps.pop().expect("three taps");
        let c4 = taps.pop().expect("three taps");
        let c3 = taps.pop().expect("three taps");
        Ok(FeatureSet { c3, c4, c5 })
    }
}

/// Builds the requested backbone from `weights` and runs it on `patch`.
pub fn forward_features(patch: &Tensor3, model: Model, weights: &WeightStore) -> Result<FeatureSet> {
    Backbone::from_store(weights, model)?.forward(patch)
}
