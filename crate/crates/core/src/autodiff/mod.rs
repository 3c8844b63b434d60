//! Dense reverse-mode autodiff over row-major matrices.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] pushes gradients
//! into a [`ParamStore`], which owns the Adam state and an EMA shadow of the
//! parameters. Everything is generic over [`Scalar`] so the same model code
//! runs in `f32` for training and `f64` for gradient checks.

mod params;
mod scalar;
mod tape;
mod tensor;

pub use params::{
    config_hash, lr_schedule, AdamConfig, Checkpoint, ParamId, ParamStore, DEFAULT_EMA_BETA, DEFAULT_ETA_MIN,
    DEFAULT_LR,
};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{log_sum_exp, sigmoid, softmax_in_place};

/// Denominator guard for row normalization.
pub const L2_EPS: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn l2_normalize_3_4_5() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[3.0, 4.0]]));
        let y = tape.l2_normalize(x, L2_EPS);
        let v = tape.value(y);
        assert!((v.get(0, 0) - 0.6).abs() < 1e-12 && (v.get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_zero_row_is_finite() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[&[0.0, 0.0], &[1.0, 1.0]]));
        let y = tape.l2_normalize(x, L2_EPS);
        let s = tape.sum(y);
        assert!(tape.value(y).data().iter().all(|v| v.is_finite()));
        let g = tape.gradients(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn segment_sum_single_segment_is_sum() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let y = tape.segment_sum(x, Arc::from(vec![0, 0, 0]), 1).unwrap();
        assert_eq!(tape.value(y).data(), &[9.0, 12.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.gather(a, Arc::from(vec![2])).is_err());
        assert!(tape.segment_sum(a, Arc::from(vec![0]), 1).is_err());
        assert!(tape.gradients(a).is_err());
    }

    #[test]
    fn bce_identity_and_half() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(t(&[&[1.0], &[0.0], &[0.5]]));
        let l = tape
            .bce(p, Arc::from(vec![1.0, 0.0, 1.0]), Arc::from(vec![1.0, 1.0, 0.0]))
            .unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let l = tape
            .bce(p, Arc::from(vec![1.0, 0.0, 1.0]), Arc::from(vec![0.0, 0.0, 1.0]))
            .unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    fn quadratic_store(w0: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w0)).unwrap();
        (s, id)
    }

    fn grad_of_square(s: &mut ParamStore<f64>, id: ParamId) {
        let mut tape = Tape::new();
        let w = tape.param(s, id);
        let y = tape.mul(w, w).unwrap();
        tape.backward(y, s).unwrap();
    }

    #[test]
    fn adam_descends_on_square() {
        let (mut s, id) = quadratic_store(1.0);
        grad_of_square(&mut s, id);
        s.adam_step(0.1).unwrap();
        assert!(s.value(id).item().abs() < 1.0);
        assert!(s.grad(id).is_none());
    }

    #[test]
    fn adam_zero_gradient_keeps_value() {
        let (mut s, id) = quadratic_store(0.0);
        grad_of_square(&mut s, id);
        s.adam_step(0.1).unwrap();
        assert_eq!(s.value(id).item(), 0.0);
    }

    #[test]
    fn adam_requires_gradients() {
        let (mut s, _) = quadratic_store(1.0);
        assert!(matches!(s.adam_step(0.1), Err(crate::Error::MissingGradient(_))));
        s.set_trainable("w", false);
        assert!(s.adam_step(0.1).is_ok());
    }

    #[test]
    fn ema_limits() {
        let (mut s, id) = quadratic_store(1.0);
        *s.shadow_mut(id) = Tensor::scalar(0.0);
        s.ema_update(0.999);
        assert!((s.shadow(id).item() - 0.001).abs() < 1e-15);
        s.ema_update(0.0);
        assert_eq!(s.shadow(id).item(), 1.0);
    }

    #[test]
    fn ema_is_isolated_from_forward_backward() {
        let (mut s, id) = quadratic_store(0.7);
        let before = s.shadow(id).clone();
        grad_of_square(&mut s, id);
        assert_eq!(s.shadow(id), &before);
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = quadratic_store(1.0);
        assert!(s.add("w", Tensor::scalar(0.0)).is_err());
    }

    #[test]
    fn lr_schedule_points() {
        let (e0, emin) = (2e-4, 1e-5);
        assert_eq!(lr_schedule(0, 100, e0, emin), e0);
        assert!((lr_schedule(50, 100, e0, emin) - emin).abs() < 1e-18);
        assert!((lr_schedule(25, 100, e0, emin) - (e0 + emin) / 2.0).abs() < 1e-15);
        assert_eq!(lr_schedule(90, 100, e0, emin), emin);
    }

    #[test]
    fn checkpoint_round_trip_and_hash_check() {
        let (mut s, id) = quadratic_store(1.5);
        grad_of_square(&mut s, id);
        s.adam_step(0.1).unwrap();
        s.ema_update(0.5);
        let cfg = serde_json::json!({"d": 4});
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::capture(&s, &cfg).unwrap().save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        ck.check_config(&cfg).unwrap();
        assert!(ck.check_config(&serde_json::json!({"d": 5})).is_err());
        let (mut r, rid) = quadratic_store(0.0);
        ck.restore_into(&mut r).unwrap();
        assert_eq!(r.value(rid), s.value(id));
        assert_eq!(r.shadow(rid), s.shadow(id));
        assert_eq!(r.steps_taken(), 1);
    }
}
