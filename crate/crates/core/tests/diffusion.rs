use satgnn::cnf::CnfFormula;
use satgnn::diffusion::{
    build_schedule, diffusion_solve, forward_corrupt, periodic_rounding_solve, posterior_jump, posterior_step,
    rounding_trajectory, up_guided_solve, DiffusionRun, NoiseSchedule, PosteriorMode,
};
use satgnn::generate::{generate, DatasetSpec};
use satgnn::graph::GraphKind;
use satgnn::model::{Cell, Model, ModelConfig};

type M2 = [[f64; 2]; 2];

fn matmul(a: M2, b: M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Product of one-step matrices `Q_{from+1} ... Q_to` (identity when empty).
fn chain(s: &NoiseSchedule, from: usize, to: usize) -> M2 {
    (from + 1..=to).fold([[1.0, 0.0], [0.0, 1.0]], |acc, t| matmul(acc, s.q(t)))
}

/// `P(x_s = 1 | x_t, p)` by explicit Bayes over the joint of (x0, x_s).
fn brute_posterior(s: &NoiseSchedule, x_t: usize, p: f64, t: usize, to: usize) -> f64 {
    let prior = [1.0 - p, p];
    let (a, b) = (chain(s, 0, to), chain(s, to, t));
    let mut joint = [0.0; 2];
    for x0 in 0..2 {
        // x0 weighting follows the network's x0 estimate: condition on x_t
        // with x0 fixed, then mix with the predicted probabilities
        let mut cond = [0.0; 2];
        for xs in 0..2 {
            cond[xs] = a[x0][xs] * b[xs][x_t];
        }
        let z = cond[0] + cond[1];
        for xs in 0..2 {
            joint[xs] += prior[x0] * cond[xs] / z;
        }
    }
    joint[1] / (joint[0] + joint[1])
}

#[test]
fn cumulative_matrices_are_products_of_steps() {
    let s = build_schedule(12, 0.03, 0.3).unwrap();
    for t in 1..=12 {
        let expect = chain(&s, 0, t);
        let got = s.q_bar(t);
        for i in 0..2 {
            for j in 0..2 {
                assert!((expect[i][j] - got[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn posterior_matches_bayes_for_every_jump() {
    for (steps, lo, hi) in [(4, 0.05, 0.3), (9, 0.02, 0.45), (20, 0.1, 0.1)] {
        let s = build_schedule(steps, lo, hi).unwrap();
        for t in 1..=steps {
            for to in 0..t {
                for &p in &[0.0, 0.13, 0.5, 0.77, 1.0] {
                    for x_t in [false, true] {
                        let got = posterior_jump(&[x_t], &[p], t, to, &s).unwrap()[0];
                        let want = brute_posterior(&s, x_t as usize, p, t, to);
                        assert!(
                            (got - want).abs() < 1e-9,
                            "T={steps} t={t} s={to} p={p}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn posterior_modes() {
    let s = build_schedule(4, 0.05, 0.3).unwrap();
    let mut r = satgnn::rng::rng(0);
    let x = [true, false, true];
    let p = [0.9, 0.2, 0.5];
    let arg = posterior_step(&x, &p, 3, &s, PosteriorMode::Argmax, &mut r).unwrap();
    let probs = posterior_jump(&x, &p, 3, 2, &s).unwrap();
    assert_eq!(arg, probs.iter().map(|&q| q >= 0.5).collect::<Vec<_>>());
    // rounding ignores x_t entirely
    let round = posterior_step(&[false, true, false], &p, 3, &s, PosteriorMode::Rounding, &mut r).unwrap();
    assert_eq!(round, vec![true, false, true]);
    // to t = 0 the posterior is the prediction itself
    let last = posterior_jump(&x, &p, 1, 0, &s).unwrap();
    for (a, b) in last.iter().zip(&p) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(posterior_jump(&x, &p, 5, 4, &s).is_err());
    assert!(posterior_jump(&x, &p, 2, 2, &s).is_err());
}

#[test]
fn forward_process_flip_rate_and_uniform_limit() {
    let s = build_schedule(50, 0.02, 0.35).unwrap();
    let x0 = vec![true; 10_000];
    for t in [1, 5, 20, 50] {
        let xt = forward_corrupt(&x0, t, &s, t as u64).unwrap();
        let flipped = xt.iter().filter(|&&v| !v).count() as f64 / x0.len() as f64;
        assert!((flipped - s.flip_prob(t)).abs() < 0.02, "t={t}");
    }
    let xt = forward_corrupt(&x0, 50, &s, 99).unwrap();
    let p1 = xt.iter().filter(|&&v| v).count() as f64 / 1e4;
    assert!((p1 - 0.5).abs() < 0.01 * 2.0);
}

#[test]
fn inference_timesteps_span_the_schedule() {
    let s = build_schedule(50, 0.02, 0.35).unwrap();
    for k in [1, 7, 10, 50] {
        let taus = s.inference_timesteps(k).unwrap();
        assert_eq!(taus.len(), k + 1);
        assert_eq!((taus[0], taus[k]), (50, 0));
        assert!(taus.windows(2).all(|w| w[0] > w[1]));
    }
    assert!(s.inference_timesteps(51).is_err());
}

#[test]
fn rounding_diffusion_equals_periodic_rounding() {
    let ds = generate(&DatasetSpec::sr(3, 9, 16, 21)).unwrap();
    for (kind, cell) in [(GraphKind::Vcg, Cell::Rnn), (GraphKind::Lcg, Cell::Lstm)] {
        let m: Model<f32> = Model::new(ModelConfig::new(kind, cell, 12), 5).unwrap();
        for (i, inst) in ds.instances.iter().enumerate() {
            let a = rounding_trajectory(&m, &inst.formula, 4, 3, i as u64).unwrap();
            let b = periodic_rounding_solve(&m, &inst.formula, 12, 4, i as u64).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn diffusion_solve_is_seeded_and_consistent() {
    let f = generate(&DatasetSpec::sr(8, 8, 2, 4))
        .unwrap()
        .instances
        .remove(1)
        .formula;
    let m: Model<f32> = Model::new(ModelConfig::new(GraphKind::Vcg, Cell::Rnn, 12), 1).unwrap();
    let run = DiffusionRun {
        gnn_steps: 3,
        diffusion_steps: 5,
        ..Default::default()
    };
    let a = diffusion_solve(&m, &f, &run, 8).unwrap();
    assert_eq!(a, diffusion_solve(&m, &f, &run, 8).unwrap());
    assert_eq!(f.gap(a.assignment.values()), a.best_gap);
    assert!(a.steps_used <= 5);
}

#[test]
fn up_search_respects_budget_and_reports_true_gap() {
    let m: Model<f32> = Model::new(ModelConfig::new(GraphKind::Vcg, Cell::Rnn, 12), 2).unwrap();
    let run = DiffusionRun {
        gnn_steps: 2,
        diffusion_steps: 4,
        ..Default::default()
    };
    let ds = generate(&DatasetSpec::sr(6, 10, 10, 8)).unwrap();
    for (i, inst) in ds.instances.iter().enumerate() {
        let r = up_guided_solve(&m, &inst.formula, &run, i as u64).unwrap();
        assert_eq!(inst.formula.gap(r.result.assignment.values()), r.result.best_gap);
        assert!(r.calls >= 1 && r.calls <= run.max_calls);
        assert_eq!(r.result.gap_trajectory.iter().min().copied(), Some(r.result.best_gap));
        if !inst.sat {
            assert!(r.result.best_gap >= 1);
        }
    }
    let capped = DiffusionRun { max_calls: 1, ..run };
    let r = up_guided_solve(&m, &ds.instances[0].formula, &capped, 3).unwrap();
    assert_eq!(r.calls, 1);
}

#[test]
fn trivial_formula_is_solved_on_the_first_decode() {
    // tautologies only: the very first decode is a witness
    let f = CnfFormula::from_dimacs_clauses(3, &[&[1, -1], &[2, 3, -2]]).unwrap();
    let m: Model<f32> = Model::new(ModelConfig::new(GraphKind::Lcg, Cell::Rnn, 8), 2).unwrap();
    let r = up_guided_solve(&m, &f, &DiffusionRun::default(), 0).unwrap();
    assert_eq!((r.calls, r.result.best_gap), (1, 0));
}
