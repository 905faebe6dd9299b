//! Contrastive losses against nested-loop reference implementations.

mod support;

use coguiding::autodiff::Tape;
use coguiding::objectives::{multi_intent_scl, mu_weights, SampleQueues};
use coguiding::tensor::{ModelParams, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::scl_ref::{case, check_lambda_zero, check_mu, check_references, TAU};

#[test]
fn four_terms_match_nested_loop_references() {
    check_references(100).unwrap();
}

#[test]
fn lambda_zero_degenerates_to_single_task_terms() {
    check_lambda_zero(100).unwrap();
}

#[test]
fn mu_sums_to_one_with_positives() {
    check_mu(200).unwrap();
    assert_eq!(mu_weights(&[2.0, 2.0, 0.0]), vec![0.5, 0.5, 0.0]);
}

#[test]
fn empty_queue_contributes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = case(&mut rng);
    let params = ModelParams::new();
    let mut tape = Tape::new(&params);
    let q = SampleQueues::new(4);
    let u = tape.constant(Tensor::row_vector(c.anchors[0].clone()));
    let mi = multi_intent_scl(&mut tape, u, &c.cur.intent, &q, TAU).unwrap();
    assert_eq!(tape.scalar(mi), 0.0);
}
