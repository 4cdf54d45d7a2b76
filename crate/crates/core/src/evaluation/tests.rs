use rand::Rng as _;

use super::*;
use crate::datasets::{generate_toy_dataset, ToyConfig};

fn line(offset: [f64; 2], len: usize) -> Vec<[f64; 2]> {
    (0..len).map(|t| [t as f64 + offset[0], offset[1]]).collect()
}

#[test]
fn ade_examples() {
    let gt = line([0.0, 0.0], 5);
    assert_eq!(ade(&gt, &gt).unwrap(), 0.0);
    assert!((ade(&line([0.3, 0.4], 5), &gt).unwrap() - 0.5).abs() < 1e-12);
    let pred = [[1.0, 0.0], [0.0, 3.0]];
    assert_eq!(ade(&pred, &[[0.0, 0.0], [0.0, 0.0]]).unwrap(), 2.0);
    assert!(matches!(ade(&gt[..2], &gt), Err(Error::LengthMismatch { .. })));
}

#[test]
fn fde_examples() {
    let gt = line([0.0, 0.0], 3);
    assert_eq!(fde(&gt, &gt).unwrap(), 0.0);
    let mut pred = gt.clone();
    pred[2] = [pred[2][0] + 6.0, pred[2][1] + 8.0];
    assert_eq!(fde(&pred, &gt).unwrap(), 10.0);
    assert!(fde(&gt, &gt[..1]).is_err());
}

#[test]
fn best_of_k_examples() {
    let gt = vec![[0.0, 0.0]];
    let s = vec![vec![[0.8, 0.0]], vec![[0.0, 0.3]], vec![[1.1, 0.0]]];
    assert!((best_of_k(&s, &gt, ade).unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(best_of_k(&s[..1], &gt, fde).unwrap(), 0.8);
    let with_exact = vec![vec![[5.0, 5.0]], gt.clone()];
    assert_eq!(best_of_k(&with_exact, &gt, ade).unwrap(), 0.0);
    assert!(best_of_k::<Vec<[f64; 2]>>(&[], &gt, ade).is_err());
}

#[test]
fn metrics_are_translation_invariant_and_scale_linearly() {
    let gt = vec![[0.0, 1.0], [1.0, 3.0], [2.5, 2.0]];
    let pred = vec![[0.5, 1.0], [1.0, 2.0], [2.0, 2.0]];
    let shift = |t: &[[f64; 2]]| t.iter().map(|p| [p[0] + 7.0, p[1] - 3.0]).collect::<Vec<_>>();
    let scale = |t: &[[f64; 2]]| t.iter().map(|p| [p[0] * 2.0, p[1] * 2.0]).collect::<Vec<_>>();
    let a = ade(&pred, &gt).unwrap();
    assert!((ade(&shift(&pred), &shift(&gt)).unwrap() - a).abs() < 1e-12);
    assert!((ade(&scale(&pred), &scale(&gt)).unwrap() - 2.0 * a).abs() < 1e-12);
    assert!((fde(&scale(&pred), &scale(&gt)).unwrap() - 2.0 * fde(&pred, &gt).unwrap()).abs() < 1e-12);
}

fn random_set(rng: &mut crate::rng::Rng, n: usize, len: usize, label: SampleLabel) -> SampleSet {
    let t = (0..n).map(|_| (0..len).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect());
    SampleSet::new(t.collect(), label).unwrap()
}

#[test]
fn emd_is_symmetric_zero_on_self_and_a_triangle_metric() {
    let mut rng = crate::rng::stream(4, "emd");
    for _ in 0..20 {
        let a = random_set(&mut rng, 5, 3, SampleLabel::Real);
        let b = random_set(&mut rng, 5, 3, SampleLabel::Generated);
        let c = random_set(&mut rng, 5, 3, SampleLabel::Generated);
        assert!(emd(&a, &a).unwrap().abs() < 1e-12);
        let (ab, ba) = (emd(&a, &b).unwrap(), emd(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        assert!(emd(&a, &c).unwrap() <= ab + emd(&b, &c).unwrap() + 1e-12);
    }
}

#[test]
fn emd_singletons_give_ade() {
    let a = SampleSet::new(vec![line([0.0, 0.0], 4)], SampleLabel::Real).unwrap();
    let b = SampleSet::new(vec![line([3.0, 4.0], 4)], SampleLabel::Generated).unwrap();
    assert!((emd(&a, &b).unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn emd_unequal_sizes_match_replication() {
    let mut rng = crate::rng::stream(5, "emd");
    for (n, m) in [(2, 3), (4, 6), (3, 5), (1, 4)] {
        let a = random_set(&mut rng, n, 2, SampleLabel::Real);
        let b = random_set(&mut rng, m, 2, SampleLabel::Generated);
        let l = n * m / gcd(n, m);
        let rep = |s: &SampleSet, times: usize| {
            SampleSet::new(s.trajectories.iter().flat_map(|t| std::iter::repeat_n(t.clone(), times)).collect(), s.label)
                .unwrap()
        };
        let want = emd(&rep(&a, l / n), &rep(&b, l / m)).unwrap();
        let got = emd(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-9, "{n}x{m}: {got} vs {want}");
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn one_nn_edge_cases() {
    let mut rng = crate::rng::stream(6, "nn");
    let a = random_set(&mut rng, 10, 4, SampleLabel::Real);
    let copy = SampleSet { label: SampleLabel::Generated, ..a.clone() };
    assert_eq!(one_nn_accuracy(&a, &copy).unwrap(), 0.0);
    let far = SampleSet::new(
        a.trajectories.iter().map(|t| t.iter().map(|p| [p[0] + 100.0, p[1]]).collect()).collect(),
        SampleLabel::Generated,
    )
    .unwrap();
    assert_eq!(one_nn_accuracy(&a, &far).unwrap(), 1.0);
    let short = random_set(&mut rng, 9, 4, SampleLabel::Generated);
    assert!(matches!(one_nn_accuracy(&a, &short), Err(Error::LengthMismatch { .. })));
}

#[test]
fn one_nn_ties_go_to_real() {
    // The real point at 0 has a real and a generated neighbor at distance 1.
    let r = SampleSet::new(vec![vec![[0.0, 0.0]], vec![[1.0, 0.0]]], SampleLabel::Real).unwrap();
    let g = SampleSet::new(vec![vec![[-1.0, 0.0]], vec![[100.0, 0.0]]], SampleLabel::Generated).unwrap();
    assert_eq!(one_nn_accuracy(&r, &g).unwrap(), 0.5);
    let acc = one_nn_accuracy(&random_set(&mut crate::rng::stream(1, "x"), 7, 2, SampleLabel::Real), &{
        random_set(&mut crate::rng::stream(2, "x"), 7, 2, SampleLabel::Generated)
    })
    .unwrap();
    assert!((acc * 14.0 - (acc * 14.0).round()).abs() < 1e-12);
}

#[test]
fn real_toy_samples_cover_every_mode() {
    let toy = generate_toy_dataset(&ToyConfig { samples_per_branch: 16, ..ToyConfig::default() }, 8, 12).unwrap();
    let clusters = ModeClusters::from_toy(&toy).unwrap();
    assert_eq!(clusters.len(), 18);
    let all: Vec<Vec<[f64; 2]>> = toy.table.tracklets().into_iter().map(|t| t.positions).collect();
    let set = SampleSet::new(all.clone(), SampleLabel::Generated).unwrap();
    assert_eq!(mode_coverage(&[set], &clusters), 1.0);

    // One branch per condition: 6 of 18.
    let one_branch: Vec<Vec<[f64; 2]>> = toy
        .table
        .tracklets()
        .into_iter()
        .filter(|t| toy.labels.get(t.agent).unwrap().1 == 1)
        .map(|t| t.positions)
        .collect();
    let set = SampleSet::new(one_branch, SampleLabel::Generated).unwrap();
    assert!((mode_coverage(&[set], &clusters) - 6.0 / 18.0).abs() < 1e-15);

    // Far-away endpoints hit nothing.
    let set = SampleSet::new(vec![vec![[50.0, 50.0]]], SampleLabel::Generated).unwrap();
    assert_eq!(mode_coverage(&[set], &clusters), 0.0);
}
