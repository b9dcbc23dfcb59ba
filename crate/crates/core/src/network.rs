//! Both feature extractors with their SE blocks, and the six per-layer
//! correlations of one exemplar/search pair.

use crate::backbone::{Backbone, FeatureSet, Layer, Model};
use crate::error::Result;
use crate::recal::SeBlocks;
use crate::response::{cross_correlate, hierarchical_fuse, FusionPlan, Provenance, ResponseMap};
use crate::tensor::Tensor3;
use crate::weights::WeightStore;

#[derive(Debug, Clone)]
struct Branch {
    backbone: Backbone,
    se: SeBlocks,
}

/// Immutable after construction; share it behind an `Arc` across trackers.
#[derive(Debug, Clone)]
pub struct SiameseNetwork {
    branches: [Branch; 2],
}

impl SiameseNetwork {
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let branch = |model| -> Result<Branch> {
            Ok(Branch {
                backbone: Backbone::from_store(store, model)?,
                se: SeBlocks::from_store(store, model)?,
            })
        };
        Ok(Self {
            branches: [branch(Model::S)?, branch(Model::A)?],
        })
    }

    pub fn backbone(&self, model: Model) -> &Backbone {
        &self.branches[model.index()].backbone
    }

    pub fn se_blocks(&self, model: Model) -> &SeBlocks {
        &self.branches[model.index()].se
    }

    /// Recalibrated features of `patch` under `model`.
    pub fn features(&self, model: Model, patch: &Tensor3) -> Result<FeatureSet> {
        let branch = &self.branches[model.index()];
        let raw = branch.backbone.forward(patch)?;
        branch.se.recalibrate_set(&raw)
    }

    /// Recalibrated features under both models, indexed by `Model::index`.
    pub fn all_features(&self, patch: &Tensor3) -> Result<[FeatureSet; 2]> {
        Ok([self.features(Model::S, patch)?, self.features(Model::A, patch)?])
    }
}

/// The six per-layer response maps, indexed `[model][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerResponses {
    pub maps: [[ResponseMap; 3]; 2],
}

impl LayerResponses {
    pub fn get(&self, model: Model, layer: Layer) -> &ResponseMap {
        &self.maps[model.index()][layer.index()]
    }

    pub fn fuse(&self, plan: &FusionPlan) -> Result<ResponseMap> {
        hierarchical_fuse(&self.maps[0], &self.maps[1], plan)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResponseMap> {
        self.maps.iter().flatten()
    }
}

/// Correlates each exemplar layer with the matching search layer.
pub fn correlate_layers(exemplar: &[FeatureSet; 2], search: &[FeatureSet; 2]) -> Result<LayerResponses> {
    let one = |model: Model, layer: Layer| -> Result<ResponseMap> {
        let z = exemplar[model.index()].get(layer);
        let x = search[model.index()].get(layer);
        Ok(cross_correlate(z, x)?.with_provenance(Provenance::Layer(model, layer)))
    };
    let per_model = |model: Model| -> Result<[ResponseMap; 3]> {
        Ok([one(model, Layer::C3)?, one(model, Layer::C4)?, one(model, Layer::C5)?])
    };
    Ok(LayerResponses {
        maps: [per_model(Model::S)?, per_model(Model::A)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::seeded_random_weights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn six_maps_are_17x17() {
        let net = SiameseNetwork::from_store(&seeded_random_weights(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor3::from_fn(127, 127, 3, |_, _, _| rng.random());
        let x = Tensor3::from_fn(255, 255, 3, |_, _, _| rng.random());
        let ez = net.all_features(&z).unwrap();
        assert_eq!(ez[0].shapes(), [(10, 10, 384), (8, 8, 384), (6, 6, 256)]);
        let ex = net.all_features(&x).unwrap();
        assert_eq!(ex[1].shapes(), [(26, 26, 384), (24, 24, 384), (22, 22, 256)]);
        let r = correlate_layers(&ez, &ex).unwrap();
        assert_eq!(r.iter().count(), 6);
        for m in r.iter() {
            assert_eq!(m.shape(), (17, 17));
        }
        assert_eq!(r.get(Model::A, Layer::C4).provenance, Provenance::Layer(Model::A, Layer::C4));
    }
}
