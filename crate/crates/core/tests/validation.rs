mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulesteer::validation::{
    delta, gate, parse_observations, predict_pn_delta, train_validation_model, write_observations, FlightObservation,
    Gate, ValidationError, ValidationModel,
};

fn obs(day: u32, r: f64, w: f64, pn: f64) -> FlightObservation {
    FlightObservation {
        date: common::date(day),
        template_id: format!("T{day}"),
        job_id: format!("J{day}-{r}"),
        d_read: r,
        d_write: w,
        d_pn: pn,
    }
}

fn model(w0: f64, w_read: f64, w_write: f64) -> ValidationModel {
    ValidationModel {
        w0,
        w_read,
        w_write,
        train_start: common::date(1),
        train_end: common::date(7),
    }
}

fn planted(n: usize, seed: u64) -> Vec<FlightObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let r: f64 = rng.random_range(-0.9..0.5);
            let w: f64 = rng.random_range(-0.9..0.5);
            obs(1 + (i % 14) as u32, r, w, 0.1 + 0.5 * r + 0.4 * w)
        })
        .collect()
}

#[test]
fn exact_recovery() {
    let (m, held) = train_validation_model(&planted(200, 1)).unwrap();
    assert!((m.w0 - 0.1).abs() < 1e-6);
    assert!((m.w_read - 0.5).abs() < 1e-6);
    assert!((m.w_write - 0.4).abs() < 1e-6);
    assert_eq!(m.train_start, common::date(1));
    assert_eq!(m.train_end, common::date(7));
    assert!(held.n > 0);
    assert!(held.r2 > 0.999_999);
    assert!((predict_pn_delta(&m, -0.4, 0.0) - -0.1).abs() < 1e-6);
}

#[test]
fn zero_deltas_predict_zero() {
    let history: Vec<_> = (1..=6).flat_map(|d| (0..3).map(move |_| obs(d, 0.0, 0.0, 0.0))).collect();
    let (m, _) = train_validation_model(&history).unwrap();
    assert!(m.w0.abs() < 1e-12);
    assert!(predict_pn_delta(&m, 0.0, 0.0).abs() < 1e-12);
}

#[test]
fn needs_two_dates() {
    let one_day: Vec<_> = (0..5).map(|i| obs(1, i as f64 * 0.1, 0.0, 0.0)).collect();
    assert!(matches!(train_validation_model(&one_day), Err(ValidationError::InsufficientDates(_))));
    assert!(train_validation_model(&[]).is_err());
}

#[test]
fn prediction_and_gate_examples() {
    assert_eq!(predict_pn_delta(&model(0.0, 1.0, 0.0), -0.2, 0.7), -0.2);
    assert!((predict_pn_delta(&model(0.05, 0.5, 0.5), -0.3, -0.3) - -0.25).abs() < 1e-12);
    assert_eq!(gate(-0.15, -0.1), Gate::Accept);
    assert_eq!(gate(-0.05, -0.1), Gate::Reject);
    assert_eq!(gate(-0.1, -0.1), Gate::Accept);
}

#[test]
fn delta_convention() {
    assert_eq!(delta(100.0, 50.0), -0.5);
    assert_eq!(delta(100.0, 0.0), -1.0);
    assert_eq!(delta(4.0, 5.0), 0.25);
}

#[test]
fn model_and_history_files_round_trip() {
    let (m, _) = train_validation_model(&planted(100, 3)).unwrap();
    let text = m.to_text();
    assert!(text.contains("w_read"));
    let back = ValidationModel::load(text.as_bytes()).unwrap();
    assert_eq!(back, m);
    let mut buf = Vec::new();
    back.save(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
    assert!(ValidationModel::load("w0\t1\n".as_bytes()).is_err());

    let history = planted(50, 4);
    let t = write_observations(&history);
    assert_eq!(parse_observations(&t).unwrap(), history);
    assert_eq!(write_observations(&parse_observations(&t).unwrap()), t);
}

proptest! {
    #[test]
    fn gate_is_monotone(pred in -2.0f64..2.0, t in -2.0f64..2.0, lower in 0.0f64..2.0) {
        if gate(pred, t - lower) == Gate::Accept {
            prop_assert_eq!(gate(pred, t), Gate::Accept);
        }
    }

    #[test]
    fn prediction_is_affine(w0 in -1.0f64..1.0, a in -2.0f64..2.0, b in -2.0f64..2.0, r in -1.0f64..1.0, w in -1.0f64..1.0) {
        let m = model(w0, a, b);
        let p = predict_pn_delta(&m, r, w);
        prop_assert!((p - (w0 + a * r + b * w)).abs() < 1e-12);
    }
}
