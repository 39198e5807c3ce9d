use super::*;
use crate::autodiff::ParamSet;
use crate::seeding::Rng as ChaRng;
use rand::SeedableRng;

fn rng(seed: u64) -> ChaRng {
    ChaRng::seed_from_u64(seed)
}

#[test]
fn walker_step_examples() {
    let mut w = PointWalker::new();
    let (f, r) = w.step(&[1.0, 0.0]).unwrap();
    assert_eq!((w.x, w.y), (1.0, 0.0));
    assert!((r - 0.1).abs() < 1e-15);
    assert_eq!(f.len(), 6);

    let mut w = PointWalker::new();
    let (_, r) = w.step(&[0.0, 1.0]).unwrap();
    assert_eq!((w.x, w.y), (0.0, 1.0));
    assert!((r + 0.1).abs() < 1e-15);

    let mut w = PointWalker::new();
    w.step(&[5.0, -3.0]).unwrap();
    assert_eq!((w.x, w.y), (1.0, -1.0), "actions are clamped");
    assert!(w.step(&[f64::NAN, 0.0]).is_err());
    assert!(w.step(&[0.0]).is_err());
}

#[test]
fn walker_features_are_consistent() {
    assert_eq!(walker_features(0.0, 0.0), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    for &(x, y) in &[(1.0, 2.0), (-3.0, 0.5), (0.0, -2.0), (4.0, -4.0)] {
        let f = walker_features(x, y);
        assert!((f[2] * f[2] + f[3] * f[3] - 1.0).abs() < 1e-12);
        assert!((f[3] * (x * x + y * y as f64).sqrt() - x).abs() < 1e-12);
    }
}

#[test]
fn point_mass_examples() {
    let mut m = PointMass::at(GOAL, [0.0, 0.0]);
    let (_, r) = m.step(&[0.0, 0.0]).unwrap();
    assert_eq!(r, 0.0);

    let mut m = PointMass::at([0.0, 0.0], [0.0, 0.0]);
    let (f, r) = m.step(&[0.0, 0.0]).unwrap();
    assert_eq!(m.pos, [0.0, 0.0]);
    assert!((r + 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(f, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);

    let mut m = PointMass::at([0.0, 0.0], [0.95, 0.0]);
    m.step(&[1.0, 0.0]).unwrap();
    assert_eq!(m.vel[0], 1.0, "velocity is clipped");
    assert!((m.pos[0] - 0.1).abs() < 1e-15);
    assert!(m.step(&[f64::INFINITY, 0.0]).is_err());
}

struct Controller;

impl Actor for Controller {
    fn obs_dim(&self) -> usize {
        6
    }
    fn act_dim(&self) -> usize {
        2
    }
    fn act(&self, obs: &[f64], _rng: &mut dyn rand::RngCore) -> Result<ActionSample> {
        // PD law on (goal − pos) with velocity damping.
        let a = (0..2)
            .map(|i| (3.0 * obs[4 + i] - 4.0 * obs[2 + i]).clamp(-1.0, 1.0))
            .collect();
        Ok(ActionSample { action: a, log_prob: 0.0 })
    }
}

struct Uniform;

impl Actor for Uniform {
    fn obs_dim(&self) -> usize {
        6
    }
    fn act_dim(&self) -> usize {
        2
    }
    fn act(&self, _obs: &[f64], rng: &mut dyn rand::RngCore) -> Result<ActionSample> {
        let a = (0..2).map(|_| rand::Rng::random_range(rng, -1.0..1.0)).collect();
        Ok(ActionSample { action: a, log_prob: 0.0 })
    }
}

#[test]
fn proportional_controller_beats_random_actions() {
    let cfg = EnvConfig::new(EnvKind::PointMass);
    let mut greedy = 0.0;
    let mut random = 0.0;
    for seed in 0..20 {
        let g = rollout(&cfg, &Controller, 1, cfg.horizon, &mut rng(seed)).unwrap();
        let r = rollout(&cfg, &Uniform, 1, cfg.horizon, &mut rng(seed)).unwrap();
        greedy += g[0].undiscounted_return();
        random += r[0].undiscounted_return();
    }
    assert!(greedy > random, "{greedy} vs {random}");
}

#[test]
fn synthetic_population_support_and_size() {
    let pop = synth_policy_population(200, &mut rng(1)).unwrap();
    for p in &pop {
        assert_eq!(p.num_params(), 26);
        for l in p.layers() {
            assert!(l.weight.data().iter().all(|w| w.abs() < 1.0));
            assert!(l.bias.data().iter().all(|b| b.abs() < 0.2));
        }
    }
    assert!(synth_policy_population(0, &mut rng(1)).is_err());
}

#[test]
fn synthetic_population_depends_on_seed() {
    let differing = (0..100)
        .filter(|&k| {
            let a = synth_policy_population(1, &mut rng(2 * k)).unwrap();
            let b = synth_policy_population(1, &mut rng(2 * k + 1)).unwrap();
            a != b
        })
        .count();
    assert_eq!(differing, 100);
}

#[test]
fn synthetic_population_is_behaviourally_diverse() {
    let pop = synth_policy_population(100, &mut rng(3)).unwrap();
    let cfg = EnvConfig::new(EnvKind::PointWalker);
    let finals: Vec<Vec<f64>> = pop
        .iter()
        .map(|p| rollout(&cfg, p, 1, 10, &mut rng(0)).unwrap()[0].final_state.clone())
        .collect();
    let mut max_gap: f64 = 0.0;
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            let d = ((finals[i][0] - finals[j][0]).powi(2) + (finals[i][1] - finals[j][1]).powi(2)).sqrt();
            max_gap = max_gap.max(d);
        }
    }
    assert!(max_gap > 1.0, "{max_gap}");
}

#[test]
fn rollout_shape_determinism_and_telescoping() {
    let pop = synth_policy_population(3, &mut rng(4)).unwrap();
    let cfg = EnvConfig::new(EnvKind::PointWalker);
    for p in &pop {
        let a = rollout(&cfg, p, 50, 10, &mut rng(9)).unwrap();
        let b = rollout(&cfg, p, 50, 10, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for t in &a {
            assert_eq!(t.len(), 10);
            assert_eq!(t.states.len(), 10);
            assert_eq!(t.actions.len(), 10);
            let u0 = utility(t.states[0][0], t.states[0][1]);
            let uh = utility(t.final_state[0], t.final_state[1]);
            assert!((t.undiscounted_return() - (uh - u0) / 10.0).abs() < 1e-12);
        }
    }
}

#[test]
fn gaussian_rollouts_are_reproducible_for_every_env() {
    for kind in [EnvKind::PointWalker, EnvKind::PointMass] {
        let cfg = EnvConfig::new(kind);
        let policy = GaussianPolicy::init(6, &[8, 8], 2, &mut rng(5)).unwrap();
        let a = rollout(&cfg, &policy, 4, cfg.horizon, &mut rng(6)).unwrap();
        let b = rollout(&cfg, &policy, 4, cfg.horizon, &mut rng(6)).unwrap();
        assert_eq!(a, b);
        let c = rollout(&cfg, &policy, 4, cfg.horizon, &mut rng(7)).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn rollout_rejects_dimension_mismatch() {
    let cfg = EnvConfig::new(EnvKind::PointMass);
    let policy = GaussianPolicy::init(4, &[8], 2, &mut rng(5)).unwrap();
    assert!(rollout(&cfg, &policy, 1, 5, &mut rng(0)).is_err());
}

#[test]
fn trajectory_csv_layout() {
    let pop = synth_policy_population(1, &mut rng(6)).unwrap();
    let cfg = EnvConfig::new(EnvKind::PointWalker);
    let trajs = rollout(&cfg, &pop[0], 2, 3, &mut rng(0)).unwrap();
    let mut buf = Vec::new();
    write_trajectories_csv(&mut buf, &trajs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "episode,step,state_0,state_1,state_2,state_3,state_4,state_5,action_0,action_1,reward"
    );
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[4].starts_with("1,0,"));
    assert_eq!(lines[1].split(',').count(), 11);
}

fn absorbing_mdp(gamma: f64) -> TabularMdp {
    TabularMdp::new(1, 1, vec![1.0], vec![1.0], gamma).unwrap()
}

#[test]
fn geometric_series_value() {
    let v = absorbing_mdp(0.5).true_values(&vec![vec![1.0]]).unwrap();
    assert!((v[0] - 2.0).abs() < 1e-14);
}

#[test]
fn two_state_chain_values() {
    // s0 -> s1 -> s1 ..., r(s0) = 0, r(s1) = 1.
    let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0], 0.5).unwrap();
    let v = mdp.true_values(&vec![vec![1.0], vec![1.0]]).unwrap();
    assert!((v[1] - 2.0).abs() < 1e-14);
    assert!((v[0] - 1.0).abs() < 1e-14);
}

#[test]
fn solve_agrees_with_iterated_backups() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let mdp = TabularMdp::random(5, 3, 0.9, &mut r).unwrap();
        let logits: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)).collect())
            .collect();
        let pi = softmax_policy(&logits);
        let exact = mdp.true_values(&pi).unwrap();
        let mut v = vec![0.0; 5];
        for _ in 0..10_000 {
            v = mdp.bellman_backup(&pi, &v).unwrap();
        }
        for (a, b) in exact.iter().zip(&v) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let backed = mdp.bellman_backup(&pi, &exact).unwrap();
        let residual = backed
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(residual < 1e-10);
    }
}

#[test]
fn malformed_mdps_are_rejected() {
    assert!(TabularMdp::new(1, 1, vec![0.9], vec![1.0], 0.5).is_err());
    assert!(TabularMdp::new(1, 1, vec![1.0], vec![1.0], 1.0).is_err());
    assert!(TabularMdp::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![0.0, 0.0], 0.5).is_err());
    let mdp = absorbing_mdp(0.5);
    assert!(mdp.true_values(&vec![vec![0.7]]).is_err());
}
