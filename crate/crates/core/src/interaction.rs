//! Pairwise geometric features between two agents: distance, bearing and
//! distance of closest approach. These feed the attention scores.

use serde::{Deserialize, Serialize};

use crate::datasets::AgentState;

/// Speeds and relative speeds below this (m/s) are treated as zero.
pub const EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialFeatures {
    pub distance: f64,
    /// Unsigned angle in `[0, π]` between `i`'s velocity and the line to `j`.
    pub bearing: f64,
    /// Distance of closest approach under constant velocities, `t >= 0`.
    pub dca: f64,
}

impl SocialFeatures {
    pub fn to_array(self) -> [f64; 3] {
        [self.distance, self.bearing, self.dca]
    }
}

#[inline]
fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn euclidean_distance(p_i: [f64; 2], p_j: [f64; 2]) -> f64 {
    norm(sub(p_j, p_i))
}

/// Angle between `i`'s heading and the direction to `p_j`. Returns 0 when `i`
/// is standing still or the two positions coincide.
pub fn bearing_angle(state_i: &AgentState, p_j: [f64; 2]) -> f64 {
    let d = sub(p_j, state_i.pos);
    let (nv, nd) = (norm(state_i.vel), norm(d));
    if nv < EPS || nd == 0.0 {
        return 0.0;
    }
    (dot(state_i.vel, d) / (nv * nd)).clamp(-1.0, 1.0).acos()
}

pub fn distance_of_closest_approach(state_i: &AgentState, state_j: &AgentState) -> f64 {
    let dp = sub(state_j.pos, state_i.pos);
    let dv = sub(state_j.vel, state_i.vel);
    let vv = dot(dv, dv);
    if vv.sqrt() < EPS {
        return norm(dp);
    }
    let t = (-dot(dp, dv) / vv).max(0.0);
    norm([dp[0] + t * dv[0], dp[1] + t * dv[1]])
}

pub fn social_features(state_i: &AgentState, state_j: &AgentState) -> SocialFeatures {
    SocialFeatures {
        distance: euclidean_distance(state_i.pos, state_j.pos),
        bearing: bearing_angle(state_i, state_j.pos),
        dca: distance_of_closest_approach(state_i, state_j),
    }
}

/// Affine standardization of the three features, fitted on training pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for FeatureScaler {
    fn default() -> Self {
        Self::identity()
    }
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }

    /// Falls back to the identity when there are no pairs to fit on.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a SocialFeatures>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for f in features {
            for (k, v) in f.to_array().into_iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity();
        }
        let nf = n as f64;
        let mut out = Self::identity();
        for k in 0..3 {
            out.mean[k] = sum[k] / nf;
            let var = (sq[k] / nf - out.mean[k] * out.mean[k]).max(0.0);
            out.std[k] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        out
    }

    pub fn apply(&self, f: SocialFeatures) -> [f64; 3] {
        let a = f.to_array();
        [
            (a[0] - self.mean[0]) / self.std[0],
            (a[1] - self.mean[1]) / self.std[1],
            (a[2] - self.mean[2]) / self.std[2],
        ]
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;

    fn st(p: [f64; 2], v: [f64; 2]) -> AgentState {
        AgentState::new(p, v)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance([0.0, 0.0], [3.0, 4.0]), 5.0);
        assert_eq!(euclidean_distance([1.5, 1.5], [1.5, 1.5]), 0.0);
        assert_eq!(euclidean_distance([1.0, 2.0], [-2.0, 6.0]), 5.0);
    }

    #[test]
    fn bearing_examples() {
        let i = st([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(bearing_angle(&i, [2.0, 0.0]), 0.0);
        assert!((bearing_angle(&i, [0.0, 3.0]) - FRAC_PI_2).abs() < 1e-15);
        let diag = st([0.0, 0.0], [1.0, 1.0]);
        assert!((bearing_angle(&diag, [-1.0, 0.0]) - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn bearing_degenerate_cases_are_zero() {
        assert_eq!(bearing_angle(&st([0.0, 0.0], [0.0, 0.0]), [1.0, 1.0]), 0.0);
        assert_eq!(bearing_angle(&st([1.0, 1.0], [1.0, 0.0]), [1.0, 1.0]), 0.0);
    }

    #[test]
    fn dca_examples() {
        let i = st([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(distance_of_closest_approach(&i, &st([4.0, 0.0], [-1.0, 0.0])), 0.0);
        assert_eq!(distance_of_closest_approach(&i, &st([3.0, 4.0], [1.0, 0.0])), 5.0);
        assert!((distance_of_closest_approach(&i, &st([3.0, 1.0], [0.0, 0.0])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diverging_agents_report_current_distance() {
        let i = st([0.0, 0.0], [-1.0, 0.0]);
        let j = st([3.0, 4.0], [1.0, 0.0]);
        assert_eq!(distance_of_closest_approach(&i, &j), 5.0);
    }

    #[test]
    fn composed_feature_examples() {
        let f = social_features(&st([0.0, 0.0], [1.0, 0.0]), &st([0.0, 2.0], [1.0, 0.0]));
        assert_eq!(f.distance, 2.0);
        assert!((f.bearing - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(f.dca, 2.0);

        let f = social_features(&st([0.0, 0.0], [1.0, 0.0]), &st([4.0, 0.0], [-1.0, 0.0]));
        assert_eq!(f.to_array(), [4.0, 0.0, 0.0]);

        let f = social_features(&st([0.0, 0.0], [1.0, 0.0]), &st([3.0, 1.0], [0.0, 0.0]));
        assert!((f.distance - 10f64.sqrt()).abs() < 1e-15);
        assert!((f.bearing - (1.0f64 / 3.0).atan()).abs() < 1e-15);
        assert!((f.dca - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaler_standardizes_training_pairs() {
        let feats: Vec<SocialFeatures> = (0..10)
            .map(|k| SocialFeatures { distance: k as f64, bearing: 1.0, dca: 2.0 * k as f64 })
            .collect();
        let s = FeatureScaler::fit(&feats);
        assert!((s.mean[0] - 4.5).abs() < 1e-12);
        assert_eq!(s.std[1], 1.0);
        let z: Vec<[f64; 3]> = feats.iter().map(|f| s.apply(*f)).collect();
        let m: f64 = z.iter().map(|v| v[2]).sum::<f64>() / 10.0;
        let v: f64 = z.iter().map(|v| v[2] * v[2]).sum::<f64>() / 10.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert_eq!(FeatureScaler::fit(&[]), FeatureScaler::identity());
    }

    fn coord() -> impl Strategy<Value = f64> {
        -10.0..10.0f64
    }

    fn agent() -> impl Strategy<Value = AgentState> {
        (coord(), coord(), -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, vx, vy)| st([x, y], [vx, vy]))
    }

    proptest! {
        #[test]
        fn features_are_translation_invariant(i in agent(), j in agent(), tx in coord(), ty in coord()) {
            let shift = |a: &AgentState| st([a.pos[0] + tx, a.pos[1] + ty], a.vel);
            let (f, g) = (social_features(&i, &j), social_features(&shift(&i), &shift(&j)));
            prop_assert!((f.distance - g.distance).abs() < 1e-9);
            prop_assert!((f.bearing - g.bearing).abs() < 1e-6);
            prop_assert!((f.dca - g.dca).abs() < 1e-9);
        }

        #[test]
        fn features_are_rotation_invariant(i in agent(), j in agent(), theta in 0.0..std::f64::consts::TAU) {
            let (s, c) = theta.sin_cos();
            let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
            let turn = |a: &AgentState| st(rot(a.pos), rot(a.vel));
            let (f, g) = (social_features(&i, &j), social_features(&turn(&i), &turn(&j)));
            prop_assert!((f.distance - g.distance).abs() < 1e-9);
            prop_assert!((f.bearing - g.bearing).abs() < 1e-6);
            prop_assert!((f.dca - g.dca).abs() < 1e-9);
        }

        #[test]
        fn dca_never_exceeds_distance(i in agent(), j in agent()) {
            let f = social_features(&i, &j);
            prop_assert!(f.dca <= f.distance + 1e-12);
            prop_assert!((0.0..=PI).contains(&f.bearing));
            prop_assert!(f.distance.is_finite() && f.dca.is_finite());
        }
    }
}
