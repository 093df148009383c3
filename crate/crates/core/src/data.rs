//! Trajectory datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::InputModel;
use crate::error::{Error, Result};

/// One discrete trajectory: the simulator evaluated with a fixed latent
/// event at the points of its own experimental design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub input_model: InputModel,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn dims(&self) -> usize {
        self.input_model.dims()
    }

    /// Smallest design size over all trajectories.
    pub fn min_design_size(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).min().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        for t in &self.trajectories {
            if t.x.len() != t.y.len() {
                return Err(Error::Schema(format!("trajectory {}: {} points but {} values", t.id, t.x.len(), t.y.len())));
            }
            if t.x.iter().any(|p| p.len() != d) {
                return Err(Error::Schema(format!("trajectory {}: point dimension differs from {d}", t.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Writes one CSV per trajectory (`traj_<id>.csv`, columns x1..xd,y) into `dir`.
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header: Vec<String> = (1..=self.dims()).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
        for t in &self.trajectories {
            let mut out = header.join(",");
            out.push('\n');
            for (p, y) in t.x.iter().zip(&t.y) {
                for v in p {
                    out.push_str(&format!("{v},"));
                }
                out.push_str(&format!("{y}\n"));
            }
            std::fs::write(dir.join(format!("traj_{}.csv", t.id)), out)?;
        }
        Ok(())
    }
}
