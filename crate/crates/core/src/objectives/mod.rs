//! Deformation energies over program parameters, the localization weights
//! they use, and the composition with the edit term.

mod arap;
mod energy;
mod weights;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EditError;

pub use arap::{arap_energy, arap_local_step, arap_weights};
pub use energy::{compose, EnergyContext, EnergyScratch, EnergyValue};
pub use weights::{compute_weights, LocalizationWeights};

/// Identifier of one energy. The declaration order is the gallery's
/// deterministic gathering order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveId {
    Edit,
    Vtx,
    Edg,
    Par,
    Bh,
    Arap,
    Vol,
    Cm,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 8] = [
        ObjectiveId::Edit,
        ObjectiveId::Vtx,
        ObjectiveId::Edg,
        ObjectiveId::Par,
        ObjectiveId::Bh,
        ObjectiveId::Arap,
        ObjectiveId::Vol,
        ObjectiveId::Cm,
    ];

    /// Objectives enabled unless the caller chooses otherwise.
    pub const DEFAULT: [ObjectiveId; 6] = [
        ObjectiveId::Edit,
        ObjectiveId::Vtx,
        ObjectiveId::Edg,
        ObjectiveId::Par,
        ObjectiveId::Bh,
        ObjectiveId::Vol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::Edit => "edit",
            ObjectiveId::Vtx => "vtx",
            ObjectiveId::Edg => "edg",
            ObjectiveId::Par => "par",
            ObjectiveId::Bh => "bh",
            ObjectiveId::Arap => "arap",
            ObjectiveId::Vol => "vol",
            ObjectiveId::Cm => "cm",
        }
    }

    /// Default weight of the objective relative to the edit term.
    ///
    /// These are small on purpose: each composed solve should still meet
    /// the edit wherever the program can, with the objective only choosing
    /// among parameter settings that do so. The values are scaled to each
    /// energy's typical gradient so the edit residual they cause stays near
    /// 1e-5 in parameter space on unit-sized models. Larger values trade
    /// edit accuracy for the objective.
    pub fn default_gamma(self) -> f64 {
        match self {
            ObjectiveId::Edit => 0.0,
            ObjectiveId::Vtx | ObjectiveId::Par | ObjectiveId::Cm => 1e-5,
            ObjectiveId::Edg | ObjectiveId::Vol => 1e-6,
            ObjectiveId::Bh | ObjectiveId::Arap => 1e-7,
        }
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ObjectiveId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown objective `{s}` (expected one of edit, vtx, edg, par, bh, arap, vol, cm)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub enabled: Vec<ObjectiveId>,
    /// Per-objective weights; missing entries use [`ObjectiveId::default_gamma`].
    pub gamma: BTreeMap<ObjectiveId, f64>,
    /// Weight of the vertex term inside the center-of-mass energy.
    pub k_v: f64,
    /// Smoothing scale of the L1 terms: |x| becomes sqrt(x² + δ²) − δ.
    pub delta: f64,
    pub arap_max_alternations: usize,
    pub arap_tol: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            enabled: ObjectiveId::DEFAULT.to_vec(),
            gamma: BTreeMap::new(),
            k_v: 0.01,
            delta: 1e-6,
            arap_max_alternations: 10,
            arap_tol: 1e-6,
        }
    }
}

impl ObjectiveConfig {
    pub fn gamma(&self, id: ObjectiveId) -> f64 {
        self.gamma
            .get(&id)
            .copied()
            .unwrap_or_else(|| id.default_gamma())
    }

    pub fn with_objectives(mut self, ids: &[ObjectiveId]) -> Self {
        self.enabled = ids.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.enabled.is_empty() {
            return Err("no objectives enabled".into());
        }
        for (id, g) in &self.gamma {
            if !(g.is_finite() && *g > 0.0) && *id != ObjectiveId::Edit {
                return Err(format!("gamma for `{id}` must be positive, got {g}"));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.k_v.is_finite() && self.k_v >= 0.0) {
            return Err(format!("k_v must be non-negative, got {}", self.k_v));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovedVertex {
    pub vid: usize,
    pub target: [f64; 3],
}

/// A partial specification of the desired geometry: some vertices dragged to
/// targets, some pinned where they are.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    #[serde(default)]
    pub moved: Vec<MovedVertex>,
    #[serde(default)]
    pub fixed: Vec<usize>,
}

impl EditSpec {
    pub fn new(
        moved: impl IntoIterator<Item = (usize, [f64; 3])>,
        fixed: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self {
            moved: moved
                .into_iter()
                .map(|(vid, target)| MovedVertex { vid, target })
                .collect(),
            fixed: fixed.into_iter().collect(),
        }
    }

    /// Every vertex the edit constrains, moved first.
    pub fn vids(&self) -> Vec<usize> {
        self.moved
            .iter()
            .map(|m| m.vid)
            .chain(self.fixed.iter().copied())
            .collect()
    }

    /// Checks the edit against a mesh of `n` vertices.
    pub fn validate(&self, n: usize) -> Result<(), EditError> {
        if self.moved.is_empty() && self.fixed.is_empty() {
            return Err(EditError::Empty);
        }
        let mut seen = vec![false; n];
        for vid in self.vids() {
            if vid >= n {
                return Err(EditError::VertexOutOfRange { vid, n });
            }
            if std::mem::replace(&mut seen[vid], true) {
                return Err(EditError::Duplicate { vid });
            }
        }
        if let Some(m) = self
            .moved
            .iter()
            .find(|m| !m.target.iter().all(|x| x.is_finite()))
        {
            return Err(EditError::NonFiniteTarget { vid: m.vid });
        }
        Ok(())
    }

    /// `(vid, target)` for every constrained vertex; pinned vertices target
    /// their position in `rest`.
    pub fn targets(&self, rest: &[f64]) -> Vec<(usize, [f64; 3])> {
        self.moved
            .iter()
            .map(|m| (m.vid, m.target))
            .chain(
                self.fixed
                    .iter()
                    .map(|&v| (v, [rest[3 * v], rest[3 * v + 1], rest[3 * v + 2]])),
            )
            .collect()
    }
}

/// The on-disk edit document: an edit plus optional objective settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditDocument {
    #[serde(flatten)]
    pub edit: EditSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectives: Option<Vec<ObjectiveId>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gamma: BTreeMap<ObjectiveId, f64>,
}

impl EditDocument {
    /// Objective settings from the document layered over `base`.
    pub fn config(&self, base: &ObjectiveConfig) -> ObjectiveConfig {
        let mut c = base.clone();
        if let Some(ids) = &self.objectives {
            c.enabled = ids.clone();
        }
        c.gamma.extend(self.gamma.iter().map(|(k, v)| (*k, *v)));
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_validation() {
        assert_eq!(EditSpec::default().validate(8), Err(EditError::Empty));
        let e = EditSpec::new([(9, [0.0; 3])], []);
        assert_eq!(
            e.validate(8),
            Err(EditError::VertexOutOfRange { vid: 9, n: 8 })
        );
        let e = EditSpec::new([(1, [0.0; 3])], [1]);
        assert_eq!(e.validate(8), Err(EditError::Duplicate { vid: 1 }));
        let e = EditSpec::new([(1, [f64::NAN, 0.0, 0.0])], []);
        assert_eq!(e.validate(8), Err(EditError::NonFiniteTarget { vid: 1 }));
        assert!(EditSpec::new([(1, [0.0; 3])], [2, 3]).validate(8).is_ok());
    }

    #[test]
    fn document_round_trip() {
        let text = r#"{"moved":[{"vid":7,"target":[1.5,0.5,0.5]}],"fixed":[0],"objectives":["edit","bh"],"gamma":{"bh":0.5}}"#;
        let doc: EditDocument = serde_json::from_str(text).unwrap();
        assert_eq!(doc.edit.moved[0].vid, 7);
        assert_eq!(doc.edit.fixed, vec![0]);
        let c = doc.config(&ObjectiveConfig::default());
        assert_eq!(c.enabled, vec![ObjectiveId::Edit, ObjectiveId::Bh]);
        assert_eq!(c.gamma(ObjectiveId::Bh), 0.5);
        assert_eq!(c.gamma(ObjectiveId::Par), ObjectiveId::Par.default_gamma());
        let back: EditDocument =
            serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn objective_names_parse() {
        for id in ObjectiveId::ALL {
            assert_eq!(id.name().parse::<ObjectiveId>().unwrap(), id);
        }
        assert!("foo".parse::<ObjectiveId>().is_err());
    }
}
