use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::table::{compute_velocities, TrajectoryTable};
use super::AgentState;
use crate::error::{Error, Result};

/// Window lengths and stride used to cut scenes out of a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub obs_len: usize,
    pub pred_len: usize,
    pub stride: usize,
}

impl Default for Window {
    fn default() -> Self {
        Self { obs_len: 8, pred_len: 12, stride: 1 }
    }
}

impl Window {
    pub fn validate(&self) -> Result<()> {
        if self.obs_len < 2 {
            return Err(Error::Config(format!("obs_len must be >= 2, got {}", self.obs_len)));
        }
        if self.pred_len < 1 {
            return Err(Error::Config("pred_len must be >= 1".into()));
        }
        if self.stride < 1 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// A target agent's observation window together with its neighbors'.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub source: String,
    pub start_frame: i64,
    pub agent_ids: Vec<i64>,
    pub target_index: usize,
    /// `[agent][t]`, all agents observed over the full window.
    pub observed: Vec<Vec<AgentState>>,
    /// Target ground truth after the window; `None` for pure inference.
    pub future: Option<Vec<AgentState>>,
    pub dt: f64,
}

impl Scene {
    pub fn obs_len(&self) -> usize {
        self.observed[self.target_index].len()
    }

    pub fn pred_len(&self) -> Option<usize> {
        self.future.as_ref().map(|f| f.len())
    }

    pub fn num_agents(&self) -> usize {
        self.observed.len()
    }

    pub fn target_id(&self) -> i64 {
        self.agent_ids[self.target_index]
    }

    pub fn target_observed(&self) -> &[AgentState] {
        &self.observed[self.target_index]
    }

    pub fn target_last(&self) -> AgentState {
        *self.target_observed().last().expect("non-empty observation")
    }

    pub fn neighbor_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.observed.len()).filter(move |&j| j != self.target_index)
    }

    pub fn future_positions(&self) -> Option<Vec<[f64; 2]>> {
        self.future.as_ref().map(|f| f.iter().map(|s| s.pos).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.observed.len();
        if n == 0 || self.target_index >= n || self.agent_ids.len() != n {
            return Err(Error::Validation("scene agents are inconsistent".into()));
        }
        let obs = self.obs_len();
        if obs < 2 || self.observed.iter().any(|o| o.len() != obs) {
            return Err(Error::Validation("every agent must be observed over the whole window".into()));
        }
        let finite = |s: &AgentState| s.pos.iter().chain(&s.vel).all(|v| v.is_finite());
        if !self.observed.iter().flatten().all(finite) || !self.future.iter().flatten().all(finite) {
            return Err(Error::Validation("scene contains non-finite states".into()));
        }
        Ok(())
    }
}

/// Per-agent lookup of states keyed by frame.
struct StateIndex {
    by_agent: BTreeMap<i64, HashMap<i64, AgentState>>,
    spans: Vec<(i64, i64, i64)>,
}

impl StateIndex {
    fn build(table: &TrajectoryTable) -> Self {
        let dt = table.dt();
        let step = table.frame_step();
        let mut by_agent: BTreeMap<i64, HashMap<i64, AgentState>> = BTreeMap::new();
        for tr in table.tracklets() {
            // A lone sample has no velocity; it can never fill a window of two or more frames.
            let Ok(vel) = compute_velocities(&tr.positions, dt) else { continue };
            let map = by_agent.entry(tr.agent).or_default();
            for (k, (p, v)) in tr.positions.iter().zip(vel).enumerate() {
                map.insert(tr.first_frame + k as i64 * step, AgentState { pos: *p, vel: v });
            }
        }
        let spans = by_agent
            .iter()
            .map(|(&a, m)| (a, *m.keys().min().unwrap_or(&0), *m.keys().max().unwrap_or(&0)))
            .collect();
        Self { by_agent, spans }
    }

    fn window(&self, agent: i64, start: i64, len: usize, step: i64) -> Option<Vec<AgentState>> {
        let map = self.by_agent.get(&agent)?;
        (0..len).map(|k| map.get(&(start + k as i64 * step)).copied()).collect()
    }
}

fn window_starts(table: &TrajectoryTable, total_len: usize, stride: usize) -> Vec<i64> {
    let Some((first, last)) = table.frame_span() else { return Vec::new() };
    let step = table.frame_step();
    let mut out = Vec::new();
    let mut s = first;
    while s + (total_len as i64 - 1) * step <= last {
        out.push(s);
        s += stride as i64 * step;
    }
    out
}

fn cut(table: &TrajectoryTable, window: Window, with_future: bool) -> Vec<Scene> {
    let index = StateIndex::build(table);
    let step = table.frame_step();
    let target_len = window.obs_len + if with_future { window.pred_len } else { 0 };
    let mut scenes = Vec::new();
    for start in window_starts(table, target_len, window.stride) {
        let obs_end = start + (window.obs_len as i64 - 1) * step;
        let observed: Vec<(i64, Vec<AgentState>)> = index
            .spans
            .iter()
            .filter(|&&(_, lo, hi)| lo <= start && hi >= obs_end)
            .filter_map(|&(a, _, _)| index.window(a, start, window.obs_len, step).map(|w| (a, w)))
            .collect();
        if observed.is_empty() {
            continue;
        }
        let agent_ids: Vec<i64> = observed.iter().map(|(a, _)| *a).collect();
        let states: Vec<Vec<AgentState>> = observed.into_iter().map(|(_, w)| w).collect();
        for (ti, &target) in agent_ids.iter().enumerate() {
            let future = if with_future {
                let fstart = start + window.obs_len as i64 * step;
                match index.window(target, fstart, window.pred_len, step) {
                    Some(f) => Some(f),
                    None => continue,
                }
            } else {
                None
            };
            scenes.push(Scene {
                source: table.source_name().to_string(),
                start_frame: start,
                agent_ids: agent_ids.clone(),
                target_index: ti,
                observed: states.clone(),
                future,
                dt: table.dt(),
            });
        }
    }
    scenes
}

/// One scene per `(window start, target)` where the target is present for the
/// whole observed-plus-predicted span. Neighbors must be present over the
/// observed span; anyone else is left out of the scene.
pub fn build_scenes(table: &TrajectoryTable, window: Window) -> Result<Vec<Scene>> {
    window.validate()?;
    Ok(cut(table, window, true))
}

/// Observation-only windows, for inference where no future exists.
pub fn build_observation_scenes(table: &TrajectoryTable, window: Window) -> Result<Vec<Scene>> {
    window.validate()?;
    Ok(cut(table, window, false))
}

/// Translation applied by [`normalize_scene`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub offset: [f64; 2],
}

impl Translation {
    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] - self.offset[0], p[1] - self.offset[1]]
    }

    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] + self.offset[0], p[1] + self.offset[1]]
    }

    pub fn invert_scene(&self, scene: &Scene) -> Scene {
        map_positions(scene, |p| self.inverse(p))
    }
}

fn map_positions(scene: &Scene, f: impl Fn([f64; 2]) -> [f64; 2]) -> Scene {
    let mut out = scene.clone();
    for s in out.observed.iter_mut().flatten().chain(out.future.iter_mut().flatten()) {
        s.pos = f(s.pos);
    }
    out
}

/// Shift every position so the target's last observed position is the origin.
pub fn normalize_scene(scene: &Scene) -> (Scene, Translation) {
    let t = Translation { offset: scene.target_last().pos };
    (map_positions(scene, |p| t.forward(p)), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::table::{parse_trajectory_text, TrajectoryRow};

    fn straight(agent: i64, frames: std::ops::Range<i64>, y: f64) -> Vec<TrajectoryRow> {
        frames.map(|f| TrajectoryRow { frame: f, agent, x: f as f64 * 0.5, y }).collect()
    }

    fn table(rows: Vec<TrajectoryRow>) -> TrajectoryTable {
        TrajectoryTable::new(rows, 2.5, "t").unwrap()
    }

    #[test]
    fn exactly_twenty_frames_give_one_scene() {
        let scenes = build_scenes(&table(straight(1, 0..20, 0.0)), Window::default()).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].obs_len(), 8);
        assert_eq!(scenes[0].pred_len(), Some(12));
    }

    #[test]
    fn nineteen_frames_give_nothing() {
        assert!(build_scenes(&table(straight(1, 0..19, 0.0)), Window::default()).unwrap().is_empty());
    }

    #[test]
    fn two_agents_over_twenty_one_frames_give_four_scenes() {
        let mut rows = straight(1, 0..21, 0.0);
        rows.extend(straight(2, 0..21, 1.0));
        let scenes = build_scenes(&table(rows), Window::default()).unwrap();
        assert_eq!(scenes.len(), 4);
        assert!(scenes.iter().all(|s| s.num_agents() == 2));
    }

    #[test]
    fn partial_neighbors_are_dropped() {
        let mut rows = straight(1, 0..20, 0.0);
        rows.extend(straight(2, 3..20, 1.0)); // misses the first three observed frames
        rows.extend(straight(3, 0..8, 2.0)); // observed only
        let scenes = build_scenes(&table(rows), Window::default()).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].agent_ids, vec![1, 3]);
        assert_eq!(scenes[0].target_id(), 1);
    }

    #[test]
    fn gaps_break_windows() {
        let mut rows = straight(1, 0..10, 0.0);
        rows.extend(straight(1, 11..25, 0.0));
        assert!(build_scenes(&table(rows), Window::default()).unwrap().is_empty());
    }

    #[test]
    fn frame_step_of_ten_is_respected() {
        let text: String = (0..20).map(|k| format!("{} 4 {} 0\n", 100 + 10 * k, k as f64 * 0.4)).collect();
        let t = parse_trajectory_text(&text, 2.5, "t").unwrap();
        let scenes = build_scenes(&t, Window::default()).unwrap();
        assert_eq!(scenes.len(), 1);
        assert!((scenes[0].target_last().vel[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stride_thins_window_starts() {
        let w = Window { stride: 2, ..Window::default() };
        assert_eq!(build_scenes(&table(straight(1, 0..25, 0.0)), w).unwrap().len(), 3);
    }

    #[test]
    fn observation_scenes_have_no_future() {
        let s = build_observation_scenes(&table(straight(1, 0..8, 0.0)), Window::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].future.is_none());
    }

    fn two_agent_scene() -> Scene {
        let st = |x: f64, y: f64| AgentState { pos: [x, y], vel: [0.5, 0.25] };
        Scene {
            source: "t".into(),
            start_frame: 0,
            agent_ids: vec![1, 2],
            target_index: 0,
            observed: vec![vec![st(1.5, 0.75), st(2.0, 1.0)], vec![st(4.5, 2.5), st(5.0, 3.0)]],
            future: Some(vec![st(2.5, 1.25)]),
            dt: 0.4,
        }
    }

    #[test]
    fn normalization_centres_the_target_and_translates_neighbors() {
        let scene = two_agent_scene();
        let (n, t) = normalize_scene(&scene);
        assert_eq!(n.target_last().pos, [0.0, 0.0]);
        assert_eq!(n.observed[1][1].pos, [3.0, 2.0]);
        assert_eq!(n.observed[1][1].vel, scene.observed[1][1].vel);
        assert_eq!(t.invert_scene(&n), scene);
    }
}
