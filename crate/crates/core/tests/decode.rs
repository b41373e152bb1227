mod common;

use common::oracles::{exhaustive_best, rescore};
use common::*;
use rand::Rng;
use titlecomp::decode::{beam_search, greedy_decode, DecodeOptions};
use titlecomp::model::ModelDims;

fn small_dims() -> ModelDims {
    ModelDims {
        vocab_size: 10,
        embed_dim: 4,
        enc_hidden: 3,
        attn_dim: 4,
        max_source_len: 16,
    }
}

fn random_source(r: &mut rand_chacha::ChaCha8Rng, max_len: usize) -> Vec<usize> {
    let m = r.gen_range(1..=max_len);
    (0..m).map(|_| r.gen_range(4..10)).collect()
}


fn opts(beam: usize, max_steps: usize) -> DecodeOptions {
    DecodeOptions {
        beam,
        max_steps,
        ..DecodeOptions::default()
    }
}


#[test]
fn wide_beam_equals_exhaustive_optimum() {
    let mut r = rng(1);
    for i in 0..100 {
        let model = random_frozen_model(small_dims(), 1000 + i, 1.5);
        let src = random_source(&mut r, 8);
        let steps = r.gen_range(1..=4);
        let width = (src.len() + 1).pow(steps as u32);
        let h = beam_search(&model, &src, &opts(width, steps)).unwrap();
        let best = exhaustive_best(&model, &src, steps);
        assert!((h.log_prob - best).abs() <= 1e-9, "model {i}: beam {} vs oracle {best}", h.log_prob);
        assert!((rescore(&model, &src, &h) - h.log_prob).abs() <= 1e-9);
    }
}

#[test]
fn beam_of_ten_is_at_least_greedy() {
    let mut r = rng(2);
    for i in 0..100 {
        let model = random_frozen_model(small_dims(), 2000 + i, 1.5);
        let src = random_source(&mut r, 8);
        let g = greedy_decode(&model, &src, 4).unwrap();
        let b = beam_search(&model, &src, &opts(10, 4)).unwrap();
        assert!(b.log_prob >= g.log_prob - 1e-12, "model {i}: beam {} < greedy {}", b.log_prob, g.log_prob);
        let best = exhaustive_best(&model, &src, 4);
        assert!(b.log_prob <= best + 1e-9);
    }
}

#[test]
fn beam_of_one_is_greedy() {
    let mut r = rng(3);
    for i in 0..100 {
        let model = random_frozen_model(small_dims(), 3000 + i, 1.5);
        let src = random_source(&mut r, 12);
        let g = greedy_decode(&model, &src, 12).unwrap();
        let b = beam_search(&model, &src, &opts(1, 12)).unwrap();
        assert_eq!(g, b, "model {i}");
    }
}

#[test]
fn widening_the_beam_never_hurts() {
    let mut r = rng(4);
    for i in 0..40 {
        let model = random_frozen_model(small_dims(), 4000 + i, 1.5);
        let src = random_source(&mut r, 8);
        let mut prev = f64::NEG_INFINITY;
        for width in [1, 2, 3, 5, 10, 20, 50] {
            let h = beam_search(&model, &src, &opts(width, 5)).unwrap();
            assert!(h.log_prob >= prev - 1e-12, "model {i} width {width}: {} < {prev}", h.log_prob);
            prev = h.log_prob;
        }
    }
}

#[test]
fn length_cap_and_position_range_hold() {
    let mut r = rng(5);
    for i in 0..50 {
        let model = random_frozen_model(small_dims(), 5000 + i, 1.5);
        let src = random_source(&mut r, 15);
        for steps in [1, 3, 12] {
            for h in [
                greedy_decode(&model, &src, steps).unwrap(),
                beam_search(&model, &src, &opts(10, steps)).unwrap(),
            ] {
                assert!(h.positions.len() <= steps);
                assert!(h.positions.len() + usize::from(h.finished) <= steps);
                assert!(h.positions.iter().all(|&p| p < src.len()));
            }
        }
    }
}

#[test]
fn single_character_source() {
    let model = random_frozen_model(small_dims(), 6000, 1.5);
    for opts in [opts(1, 12), opts(10, 12)] {
        let h = beam_search(&model, &[7], &opts).unwrap();
        assert!(h.positions.iter().all(|&p| p == 0));
        assert_eq!(h.text(&['x']).chars().filter(|&c| c != 'x').count(), 0);
    }
}

#[test]
fn greedy_is_deterministic_and_errors_on_empty() {
    let model = random_frozen_model(small_dims(), 6001, 1.5);
    let src = [4, 5, 6, 7];
    assert_eq!(greedy_decode(&model, &src, 12).unwrap(), greedy_decode(&model, &src, 12).unwrap());
    assert!(greedy_decode(&model, &[], 12).is_err());
    assert!(beam_search(&model, &[], &opts(10, 12)).is_err());
    assert!(beam_search(&model, &src, &opts(0, 12)).is_err());
}

#[test]
fn no_repeat_never_reuses_a_position() {
    let mut r = rng(7);
    for i in 0..30 {
        let model = random_frozen_model(small_dims(), 7000 + i, 2.0);
        let src = random_source(&mut r, 8);
        let o = DecodeOptions { no_repeat: true, ..opts(5, 12) };
        let h = beam_search(&model, &src, &o).unwrap();
        let mut seen = h.positions.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), h.positions.len());
    }
}

#[test]
fn length_penalty_keeps_outputs_extractive() {
    let model = random_frozen_model(small_dims(), 8000, 1.5);
    let src = [4, 5, 6, 7, 8, 9];
    let o = DecodeOptions { length_penalty: Some(1.0), ..opts(5, 12) };
    let h = beam_search(&model, &src, &o).unwrap();
    assert!(h.positions.iter().all(|&p| p < src.len()));
}
