//! JSON model files.
//!
//! ```text
//! { "format": "linboost-model", "version": 1, "mode": "linear",
//!   "n_features": 2, "centering_means": [..], "base_prediction": 0.4,
//!   "params": {..}, "feature_names": [..], "target_name": "y",
//!   "trees": [ <node>, .. ] }
//!
//! internal node: { "feature": 0, "threshold": 0.5, "gain": 1.2,
//!                  "left": <node>, "right": <node>,
//!                  "leaf_weights": [..], "objective": -3.1, "count": 40 }
//! leaf:          { "leaf_weights": [..], "objective": -1.0, "count": 12 }
//! ```
//!
//! `leaf_weights` has one entry for a constant leaf and `d + 1` entries
//! (bias last) for a linear leaf. Internal nodes carry the model they would
//! have as a leaf. Floats are written in shortest round-trip form, so a
//! loaded model predicts bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoostParams, Ensemble};
use crate::data::{self, CenteringTransform};
use crate::error::{Error, Result};
use crate::leafsolve::LeafModel;
use crate::tree::{LeafMode, Split, TreeNode};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "linboost-model";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    mode: LeafMode,
    n_features: usize,
    centering_means: Vec<f64>,
    base_prediction: f64,
    params: BoostParams,
    feature_names: Option<Vec<String>>,
    target_name: Option<String>,
    trees: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<Box<NodeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<Box<NodeRecord>>,
    leaf_weights: Vec<f64>,
    objective: f64,
    count: usize,
}

fn model_record(model: &LeafModel) -> Vec<f64> {
    model.weights().to_vec()
}

impl NodeRecord {
    fn from_node(node: &TreeNode) -> Self {
        match node {
            TreeNode::Internal {
                split,
                left,
                right,
                own_model,
                own_term,
                count,
            } => NodeRecord {
                feature: Some(split.feature),
                threshold: Some(split.threshold),
                gain: Some(split.gain),
                left: Some(Box::new(Self::from_node(left))),
                right: Some(Box::new(Self::from_node(right))),
                leaf_weights: model_record(own_model),
                objective: *own_term,
                count: *count,
            },
            TreeNode::Leaf { model, term, count } => NodeRecord {
                feature: None,
                threshold: None,
                gain: None,
                left: None,
                right: None,
                leaf_weights: model_record(model),
                objective: *term,
                count: *count,
            },
        }
    }

    fn into_node(self, d: usize) -> Result<TreeNode> {
        let model = match self.leaf_weights.len() {
            1 => LeafModel::Constant(self.leaf_weights[0]),
            n if n == d + 1 => LeafModel::Linear(self.leaf_weights),
            n => {
                return Err(Error::ModelFormat(format!(
                    "leaf_weights has {n} entries; expected 1 or {}",
                    d + 1
                )))
            }
        };
        if !model.is_finite() {
            return Err(Error::ModelFormat("non-finite leaf weight".into()));
        }
        match (self.feature, self.threshold, self.left, self.right) {
            (None, None, None, None) => Ok(TreeNode::Leaf {
                model,
                term: self.objective,
                count: self.count,
            }),
            (Some(feature), Some(threshold), Some(left), Some(right)) => {
                if feature >= d {
                    return Err(Error::ModelFormat(format!("split feature {feature} out of range for {d} features")));
                }
                if threshold.is_nan() {
                    return Err(Error::ModelFormat("NaN split threshold".into()));
                }
                Ok(TreeNode::Internal {
                    split: Split {
                        feature,
                        threshold,
                        gain: self.gain.unwrap_or(0.0),
                    },
                    left: Box::new(left.into_node(d)?),
                    right: Box::new(right.into_node(d)?),
                    own_model: model,
                    own_term: self.objective,
                    count: self.count,
                })
            }
            _ => Err(Error::ModelFormat(
                "node must have all of feature/threshold/left/right or none of them".into(),
            )),
        }
    }
}

pub fn to_json(model: &Ensemble) -> Result<String> {
    let file = ModelFile {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        mode: model.params.mode,
        n_features: model.n_features(),
        centering_means: model.centering.means.clone(),
        base_prediction: model.base_prediction,
        params: model.params,
        feature_names: model.feature_names.clone(),
        target_name: model.target_name.clone(),
        trees: model.trees.iter().map(NodeRecord::from_node).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFormat(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn parse<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de).map_err(|e| Error::ModelFormat(e.to_string()))?;
    de.end().map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(value)
}

pub fn from_json(text: &str) -> Result<Ensemble> {
    #[derive(Deserialize)]
    struct Header {
        version: Option<serde_json::Value>,
    }
    let header: Header = parse(text)?;
    match header.version {
        None => return Err(Error::ModelFormat("missing version field".into())),
        Some(v) if v.as_u64() == Some(u64::from(FORMAT_VERSION)) => {}
        Some(v) => {
            return Err(Error::UnsupportedVersion {
                found: v.to_string(),
                supported: FORMAT_VERSION,
            })
        }
    }

    let file: ModelFile = parse(text)?;
    if file.format != FORMAT_NAME {
        return Err(Error::ModelFormat(format!("unexpected format tag {:?}", file.format)));
    }
    let d = file.n_features;
    if d == 0 || file.centering_means.len() != d {
        return Err(Error::ModelFormat(format!(
            "centering_means has {} entries for {d} features",
            file.centering_means.len()
        )));
    }
    if file.params.mode != file.mode {
        return Err(Error::ModelFormat("mode disagrees with params.mode".into()));
    }
    if file.feature_names.as_ref().is_some_and(|n| n.len() != d) {
        return Err(Error::ModelFormat("feature_names length differs from n_features".into()));
    }
    if !file.base_prediction.is_finite() || file.centering_means.iter().any(|m| !m.is_finite()) {
        return Err(Error::ModelFormat("non-finite base prediction or centering mean".into()));
    }
    let trees = file
        .trees
        .into_iter()
        .map(|t| t.into_node(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        trees,
        centering: CenteringTransform {
            means: file.centering_means,
        },
        base_prediction: file.base_prediction,
        params: file.params,
        feature_names: file.feature_names,
        target_name: file.target_name,
    })
}

pub fn save_model(model: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    data::write_atomic(path, to_json(model)?.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
