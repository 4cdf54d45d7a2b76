//! Trajectory ingestion, scene windowing, the synthetic toy set and the
//! leave-one-out split.

mod scene;
mod split;
mod table;
mod toy;

use serde::{Deserialize, Serialize};

pub use scene::{build_observation_scenes, build_scenes, normalize_scene, Scene, Translation, Window};
pub use split::{split_leave_one_out, Split, SplitSpec, ETH_UCY};
pub use table::{
    agent_spans, compute_velocities, load_trajectory_file, parse_eth_obsmat, parse_trajectory_text, Tracklet,
    TrajectoryRow, TrajectoryTable, DEFAULT_FRAME_RATE,
};
pub use toy::{generate_toy_dataset, ModeLabelTable, ToyConfig, ToyDataset};

/// Position (m) and velocity (m/s) of one agent at one timestep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl AgentState {
    pub fn new(pos: [f64; 2], vel: [f64; 2]) -> Self {
        Self { pos, vel }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}
