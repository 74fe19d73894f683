//! Copy-and-grow: build the next round's network from the previous round's
//! trained network by inserting one layer and transferring every existing
//! parameter tensor.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{init_layer, EngineRng, LayerSpec, Network, NetworkSpec, NnError, Tensor};

/// Treatment of the layers above the insertion point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AboveInsertion {
    /// Copy every layer whose parameter shapes still match; re-initialize the rest.
    #[default]
    Copy,
    /// Re-initialize every parameterized layer above the insertion point.
    Reinitialize,
}

/// Where and what to insert each round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthPolicy {
    pub layer: LayerSpec,
    /// Index the new layer takes in the current spec.
    pub position: usize,
    /// Maximum number of insertions; later rounds only copy weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default)]
    pub above: AboveInsertion,
    /// Permit layers that change the activation shape at the insertion point.
    /// Layers above whose parameter shapes change are then re-initialized.
    #[serde(default)]
    pub allow_reshape: bool,
}

impl GrowthPolicy {
    pub fn new(layer: LayerSpec, position: usize) -> Self {
        GrowthPolicy { layer, position, cap: None, above: AboveInsertion::Copy, allow_reshape: false }
    }

    /// Whether round `round` (1-based growth rounds) inserts a layer.
    pub fn inserts_in_round(&self, round: usize) -> bool {
        round >= 1 && self.cap.is_none_or(|cap| round <= cap)
    }

    /// Layers added by the end of round `round`.
    pub fn insertions_by(&self, round: usize) -> usize {
        self.cap.map_or(round, |cap| round.min(cap))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("insertion position {position} is not before the softmax of a {layers}-layer network")]
    Position { position: usize, layers: usize },

    #[error("inserting at position {position} (input {input:?}) breaks the network: {detail}")]
    Incompatible { position: usize, input: Vec<usize>, detail: String },

    #[error(
        "layer inserted at position {position} maps {input:?} to {output:?}; shape-changing insertions are disabled"
    )]
    ShapeChange { position: usize, input: Vec<usize>, output: Vec<usize> },

    #[error("growth round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<SurgeryError>,
    },

    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `spec` with the policy's layer inserted, after all shape checks.
pub fn grow_spec(spec: &NetworkSpec, policy: &GrowthPolicy) -> Result<NetworkSpec, SurgeryError> {
    let layers = spec.layers.len();
    if policy.position >= layers {
        return Err(SurgeryError::Position { position: policy.position, layers });
    }
    let before = spec.shapes()?;
    let input = before[policy.position].clone();
    let output = policy.layer.output_shape(&input).map_err(|detail| SurgeryError::Incompatible {
        position: policy.position,
        input: input.clone(),
        detail,
    })?;
    if !policy.allow_reshape && output != input {
        return Err(SurgeryError::ShapeChange { position: policy.position, input, output });
    }
    let mut grown = spec.clone();
    grown.layers.insert(policy.position, policy.layer.clone());
    grown.shapes().map_err(|e| SurgeryError::Incompatible {
        position: policy.position,
        input,
        detail: e.to_string(),
    })?;
    Ok(grown)
}

/// Builds round `round`'s starting network from the previous round's trained
/// one. When the policy inserts in this round, the new layer is initialized
/// from `seed`; every other layer keeps its parameters bit-for-bit (subject to
/// [`AboveInsertion`] and shape changes). Otherwise the result is an exact
/// copy. The input network is never modified.
pub fn grow(trained: &Network, policy: &GrowthPolicy, round: usize, seed: u64) -> Result<Network, SurgeryError> {
    if !policy.inserts_in_round(round) {
        return Ok(Network::from_params(trained.spec().clone(), trained.params().to_vec(), seed)?);
    }
    let spec = grow_spec(trained.spec(), policy)?;
    let shapes = spec.shapes()?;
    let pos = policy.position;
    let mut rng = EngineRng::seed_from_u64(seed);
    let mut params: Vec<Vec<Tensor<f32>>> = Vec::with_capacity(spec.layers.len());
    for (j, layer) in spec.layers.iter().enumerate() {
        let p = if j < pos {
            trained.layer_params(j).to_vec()
        } else if j == pos {
            init_layer(layer, &shapes[j], &mut rng)
        } else {
            let old = trained.layer_params(j - 1);
            let expected = layer.param_shapes(&shapes[j]);
            let matches =
                old.len() == expected.len() && old.iter().zip(&expected).all(|(t, s)| t.shape() == s.as_slice());
            if matches && (policy.above == AboveInsertion::Copy || old.is_empty()) {
                old.to_vec()
            } else {
                log::debug!("re-initializing layer {j} ({}) after insertion", layer.name());
                init_layer(layer, &shapes[j], &mut rng)
            }
        };
        params.push(p);
    }
    Ok(Network::from_params(spec, params, seed)?)
}

/// Simulates the insertions of rounds `1..rounds` and reports the first
/// round whose spec would be invalid.
pub fn validate_policy(spec: &NetworkSpec, policy: &GrowthPolicy, rounds: usize) -> Result<(), SurgeryError> {
    spec.shapes()?;
    let mut current = spec.clone();
    for round in 1..rounds {
        if !policy.inserts_in_round(round) {
            continue;
        }
        current = grow_spec(&current, policy).map_err(|e| SurgeryError::Round { round, source: Box::new(e) })?;
    }
    Ok(())
}
