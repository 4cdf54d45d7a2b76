use super::*;
use crate::datasets::AgentState;

fn small_dims() -> ModelDims {
    ModelDims {
        embed_dim: 8,
        hidden_dim: 8,
        pool_dim: 4,
        noise_dim: 3,
        code_dim: 1,
        decoder_head_dims: vec![6, 2],
        disc_proj_dim: 4,
        obs_len: 4,
        pred_len: 2,
        ..ModelDims::default()
    }
}

fn walker(y: f64, vx: f64, len: usize) -> Vec<AgentState> {
    (0..len).map(|t| AgentState::new([t as f64 * vx * 0.4, y], [vx, 0.0])).collect()
}

fn scene(neighbors: &[(f64, f64)], obs_len: usize) -> Scene {
    let mut observed = vec![walker(0.0, 1.0, obs_len)];
    observed.extend(neighbors.iter().map(|&(y, vx)| walker(y, vx, obs_len)));
    Scene {
        source: "t".into(),
        start_frame: 0,
        agent_ids: (0..observed.len() as i64).collect(),
        target_index: 0,
        observed,
        future: None,
        dt: 0.4,
    }
}

fn model(seed: u64) -> Model<f64> {
    Model::init(small_dims(), FeatureScaler::identity(), seed).unwrap()
}

#[test]
fn zero_state_with_zero_bias_embeds_to_zero() {
    let m = model(1);
    let e = m.embed_state(&AgentState::default());
    assert_eq!(e.len(), 8);
    assert!(e.iter().all(|&v| v == 0.0));
}

#[test]
fn embedding_matches_hand_matrix_multiply() {
    let m = model(2);
    let x = AgentState::new([0.3, -1.2], [0.7, 0.05]);
    let w = m.params.generator.get(m.nets.generator.embed.w);
    let b = m.params.generator.get(m.nets.generator.embed.b.unwrap());
    let got = m.embed_state(&x);
    for (k, &v) in got.iter().enumerate() {
        let pre: f64 = (0..4).map(|i| x.to_array()[i] * w.get(i, k)).sum::<f64>() + b.get(0, k);
        let want = if pre > 0.0 { pre } else { 0.1 * pre };
        assert!((v - want).abs() < 1e-12);
    }
}

#[test]
fn embedding_pre_activation_is_homogeneous() {
    let m = model(3);
    let x = AgentState::new([0.5, 0.25], [-1.0, 2.0]);
    let y = AgentState::new([1.0, 0.5], [-2.0, 4.0]);
    let (ex, ey) = (m.embed_state(&x), m.embed_state(&y));
    for (a, b) in ex.iter().zip(&ey) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}

#[test]
fn encoder_output_shape_and_determinism() {
    let m = model(4);
    let states = walker(0.0, 1.0, 4);
    let h = m.encode_history(&states);
    assert_eq!(h.len(), 4);
    assert!(h.iter().all(|r| r.len() == 8));
    assert_eq!(h, m.encode_history(&states));
}

#[test]
fn attention_examples() {
    let m = model(5);
    assert_eq!(m.attention_weights(&scene(&[(1.0, 1.0)], 4)).unwrap(), vec![1.0]);
    assert!(m.attention_weights(&scene(&[], 4)).unwrap().is_empty());
    let a = m.attention_weights(&scene(&[(2.0, 0.5), (2.0, 0.5), (2.0, 0.5)], 4)).unwrap();
    for w in a {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    let a = m.attention_weights(&scene(&[(1.0, 0.5), (-3.0, 2.0), (4.0, -1.0)], 4)).unwrap();
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(a.iter().all(|&w| w >= 0.0));
}

#[test]
fn softmax_of_zero_and_ln2_is_one_third_two_thirds() {
    let mut g = Graph::<f64>::new();
    let s = g.constant(Matrix::from_vec(2, 1, vec![0.0, std::f64::consts::LN_2]));
    let a = g.segment_softmax(s, vec![0, 2]);
    let v = g.value(a).data();
    assert!((v[0] - 1.0 / 3.0).abs() < 1e-15 && (v[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn pooling_examples() {
    let m = model(6);
    assert_eq!(m.pool_neighbors(&scene(&[], 4)).unwrap(), vec![0.0; 4]);

    // One neighbor: exactly W_σ h of that neighbor at the last observed frame.
    let sc = scene(&[(1.0, 0.5)], 4);
    let pooled = m.pool_neighbors(&sc).unwrap();
    let prep = PreparedScene::new(&sc).unwrap();
    let neighbor: Vec<AgentState> =
        prep.observed[1].iter().map(|s| AgentState::new([s[0], s[1]], [s[2], s[3]])).collect();
    let h = m.encode_history(&neighbor).pop().unwrap();
    let ws = m.params.generator.get(m.nets.generator.sigma.w);
    for (k, &v) in pooled.iter().enumerate() {
        let want: f64 = (0..8).map(|i| h[i] * ws.get(i, k)).sum();
        assert!((v - want).abs() < 1e-12);
    }

    // Hand convex combination with d_σ = 2.
    let mut g = Graph::<f64>::new();
    let w = g.constant(Matrix::from_vec(2, 1, vec![1.0 / 3.0, 2.0 / 3.0]));
    let vals = g.constant(Matrix::from_vec(2, 2, vec![3.0, -3.0, 6.0, 0.0]));
    let p = g.segment_weighted_sum(w, vals, vec![0, 2]);
    let got = g.value(p).data();
    assert!((got[0] - 5.0).abs() < 1e-15 && (got[1] + 1.0).abs() < 1e-15);
}

#[test]
fn generate_shape_determinism_and_noise_sensitivity() {
    let m = model(7);
    let sc = scene(&[(1.5, 0.8)], 4);
    let a = m.generate(&sc, &[0.1, -0.2, 0.3], &[0.5]).unwrap();
    assert_eq!(a.positions.len(), 2);
    assert_eq!(a.velocities.len(), 2);
    let b = m.generate(&sc, &[0.1, -0.2, 0.3], &[0.5]).unwrap();
    assert_eq!(a, b);
    let c = m.generate(&sc, &[-1.1, 0.9, 0.0], &[0.5]).unwrap();
    let diff = a.positions.iter().zip(&c.positions).map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()));
    assert!(diff.fold(0.0, f64::max) > 0.0);
    assert!(m.generate(&sc, &[0.0; 2], &[0.0]).is_err());
}

#[test]
fn generated_velocity_is_displacement_over_dt() {
    let m = model(8);
    let sc = scene(&[], 4);
    let s = m.generate(&sc, &[0.3, 0.3, -0.3], &[-0.7]).unwrap();
    let last = sc.target_last().pos;
    let d0 = [s.positions[0][0] - last[0], s.positions[0][1] - last[1]];
    assert!((s.velocities[0][0] - d0[0] / 0.4).abs() < 1e-12);
    let d1 = [s.positions[1][0] - s.positions[0][0], s.positions[1][1] - s.positions[0][1]];
    assert!((s.velocities[1][1] - d1[1] / 0.4).abs() < 1e-12);
}

#[test]
fn output_is_translation_equivariant() {
    let m = model(9);
    let sc = scene(&[(1.0, 0.3)], 4);
    let mut moved = sc.clone();
    for s in moved.observed.iter_mut().flatten() {
        s.pos[0] += 10.0;
        s.pos[1] -= 4.0;
    }
    let (a, b) = (m.generate(&sc, &[0.2; 3], &[0.1]).unwrap(), m.generate(&moved, &[0.2; 3], &[0.1]).unwrap());
    for (p, q) in a.positions.iter().zip(&b.positions) {
        assert!((p[0] + 10.0 - q[0]).abs() < 1e-12 && (p[1] - 4.0 - q[1]).abs() < 1e-12);
    }
}

#[test]
fn neighbor_order_does_not_matter() {
    let m = model(10);
    let a = scene(&[(1.0, 0.5), (-2.0, 1.5), (3.0, -0.5)], 4);
    let mut b = a.clone();
    b.observed.swap(1, 3);
    b.agent_ids.swap(1, 3);
    let (pa, pb) = (m.pool_neighbors(&a).unwrap(), m.pool_neighbors(&b).unwrap());
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x - y).abs() < 1e-12);
    }
    let (wa, mut wb) = (m.attention_weights(&a).unwrap(), m.attention_weights(&b).unwrap());
    wb.swap(0, 2);
    for (x, y) in wa.iter().zip(&wb) {
        assert!((x - y).abs() < 1e-12);
    }
    let ga = m.generate(&a, &[0.4, 0.0, -0.4], &[0.9]).unwrap();
    let gb = m.generate(&b, &[0.4, 0.0, -0.4], &[0.9]).unwrap();
    for (p, q) in ga.positions.iter().zip(&gb.positions) {
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }
}

#[test]
fn discriminator_and_q_behave() {
    let m = model(11);
    let obs = walker(0.0, 1.0, 4);
    let pred: Vec<AgentState> = (4..6).map(|t| AgentState::new([t as f64 * 0.4, 0.0], [1.0, 0.0])).collect();
    let other: Vec<AgentState> = (4..6).map(|t| AgentState::new([1.2, t as f64 * 0.5], [0.0, 1.25])).collect();
    let p = m.discriminate(&obs, &pred).unwrap();
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(p, m.discriminate(&obs, &pred).unwrap());
    assert_ne!(p, m.discriminate(&obs, &other).unwrap());
    let c = m.reconstruct_code(&obs, &pred).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c, m.reconstruct_code(&obs, &pred).unwrap());
    assert!(m.discriminate(&obs[..3], &pred).is_err());
}

#[test]
fn reconstructed_code_is_finite_for_large_inputs() {
    let m = Model::<f64>::init(ModelDims::default(), FeatureScaler::identity(), 12).unwrap();
    let mut rng = crate::rng::stream(0, "q");
    let mut draw = |len: usize| -> Vec<AgentState> {
        (0..len)
            .map(|_| {
                let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
                AgentState::new([v[0], v[1]], [v[2], v[3]])
            })
            .collect()
    };
    let (obs, pred) = (draw(8), draw(12));
    let c = m.reconstruct_code(&obs, &pred).unwrap();
    assert_eq!(c.len(), 2);
    assert!(c.iter().all(|v| v.is_finite()));
}

#[test]
fn default_model_emits_twelve_positions() {
    let m = Model::<f32>::init(ModelDims::default(), FeatureScaler::identity(), 13).unwrap();
    let samples = m.sample(&scene(&[(1.0, 1.0)], 8), 3, &mut crate::rng::stream(0, "s")).unwrap();
    assert_eq!(samples.len(), 3);
    assert!(samples.iter().all(|s| s.positions.len() == 12 && s.z.len() == 62 && s.c.len() == 2));
    assert!(samples.iter().flat_map(|s| &s.c).all(|c| (-1.0..1.0).contains(c)));
    assert_ne!(samples[0].positions, samples[1].positions);
}

#[test]
fn checkpoint_round_trip_restores_the_model() {
    let m = model(14);
    let bytes = m.to_checkpoint(serde_json::json!({})).to_bytes().unwrap();
    let back = Model::<f64>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back.params, m.params);
    let other = Model::<f64>::init(ModelDims { hidden_dim: 6, ..small_dims() }, FeatureScaler::identity(), 0).unwrap();
    let mut ck = other.to_checkpoint(serde_json::json!({}));
    ck.dims = small_dims();
    assert!(Model::<f64>::from_checkpoint(&ck).is_err());
}

#[test]
fn same_seed_same_initialization() {
    assert_eq!(model(15).params, model(15).params);
    assert_ne!(model(15).params.generator.digest(), model(16).params.generator.digest());
}
