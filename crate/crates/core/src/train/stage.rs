//! Training stages and the parameter groups each one may update.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compensation::MASK_GROUP;
use crate::error::{Error, Result};
use crate::model::se_block_group;
use crate::pitch::PITCH_GROUP;
use crate::system::Enhancer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pl,
    Pitch,
    Hc,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Pl, Stage::Pitch, Stage::Hc];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Pl => "pl",
            Stage::Pitch => "pitch",
            Stage::Hc => "hc",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    /// Stages whose weights must exist before this one starts.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Pl => &[],
            Stage::Pitch => &[Stage::Pl],
            Stage::Hc => &[Stage::Pl, Stage::Pitch],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidConfig(format!("unknown stage `{s}` (expected pl, pitch or hc)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub learnable_groups: BTreeSet<String>,
    pub epochs: u64,
    pub steps_per_epoch: u64,
}

impl StageConfig {
    /// Learnable set of `stage` for this model: the SE model, the pitch estimator, or the mask
    /// module with the last SE block.
    pub fn new(stage: Stage, model: &Enhancer, epochs: u64, steps_per_epoch: u64) -> Result<Self> {
        if stage != Stage::Pl && model.cfg.no_hc {
            return Err(Error::InvalidConfig(format!(
                "stage {stage} needs harmonic compensation enabled"
            )));
        }
        let learnable_groups = match stage {
            Stage::Pl => model.se_groups(),
            Stage::Pitch => [PITCH_GROUP.to_string()].into(),
            Stage::Hc => [MASK_GROUP.to_string(), se_block_group(model.cfg.k)].into(),
        };
        Ok(Self {
            stage,
            learnable_groups,
            epochs,
            steps_per_epoch,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.epochs * self.steps_per_epoch
    }
}

/// `true` exactly on the stage's learnable groups; every learnable group must exist.
pub fn trainable_mask(
    stage: &StageConfig,
    groups: &BTreeSet<String>,
) -> Result<BTreeMap<String, bool>> {
    if let Some(g) = stage.learnable_groups.iter().find(|g| !groups.contains(*g)) {
        return Err(Error::UnknownGroup(g.clone()));
    }
    Ok(groups
        .iter()
        .map(|g| (g.clone(), stage.learnable_groups.contains(g)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::signal::StftConfig;
    use crate::synth::PitchBins;

    fn model() -> Enhancer {
        Enhancer::new(
            &ModelConfig::toy(),
            &StftConfig::default(),
            &PitchBins::default(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn masks_per_stage() {
        let m = model();
        let groups = m.groups();
        let pl = trainable_mask(&StageConfig::new(Stage::Pl, &m, 1, 1).unwrap(), &groups).unwrap();
        assert!(pl
            .iter()
            .all(|(g, on)| *on == (g != PITCH_GROUP && g != MASK_GROUP)));
        let pitch =
            trainable_mask(&StageConfig::new(Stage::Pitch, &m, 1, 1).unwrap(), &groups).unwrap();
        assert_eq!(
            pitch
                .iter()
                .filter(|(_, on)| **on)
                .map(|(g, _)| g.as_str())
                .collect::<Vec<_>>(),
            vec![PITCH_GROUP]
        );
        let hc = trainable_mask(&StageConfig::new(Stage::Hc, &m, 1, 1).unwrap(), &groups).unwrap();
        let on: BTreeSet<&str> = hc
            .iter()
            .filter(|(_, on)| **on)
            .map(|(g, _)| g.as_str())
            .collect();
        assert_eq!(on, [MASK_GROUP, "se_block[2]"].into());
    }

    #[test]
    fn unknown_group_is_an_error() {
        let m = model();
        let mut st = StageConfig::new(Stage::Pl, &m, 1, 1).unwrap();
        st.learnable_groups.insert("se_block[9]".into());
        assert!(
            matches!(trainable_mask(&st, &m.groups()), Err(Error::UnknownGroup(g)) if g == "se_block[9]")
        );
    }

    #[test]
    fn parse_names() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("warmup".parse::<Stage>().is_err());
    }
}
