use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Task;

/// Episodes averaged per anchor.
pub const ANCHOR_EPISODES: usize = 200;
const ANCHOR_SEED: u64 = 0x5eed_a9c0;

/// Mean episode returns of a uniform-random policy and of a scripted
/// reference controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchors {
    pub random: f64,
    pub reference: f64,
}

/// Frozen anchors; `measure_anchor` reproduces them.
pub fn anchors(task: Task) -> Anchors {
    match task {
        Task::Pendulum => Anchors {
            random: -1165.0363609116023,
            reference: -138.06118284654673,
        },
        Task::DoubleIntegrator => Anchors {
            random: -1832.8649807388324,
            reference: -14.265808075297391,
        },
        Task::Reacher2 => Anchors {
            random: -339.78738604964326,
            reference: -21.299270311592487,
        },
    }
}

/// Scripted controller used as the reference anchor.
pub fn reference_action(task: Task, obs: &[f64]) -> Vec<f64> {
    match task {
        Task::Pendulum => {
            let phi = obs[1].atan2(obs[0]);
            let w = obs[2];
            if phi.abs() < 0.4 {
                vec![(-(25.0 * phi + 7.0 * w) / 6.0).clamp(-1.0, 1.0)]
            } else {
                // energy pumping towards the upright rest energy
                let e = 0.5 * w * w + 15.0 * phi.cos();
                let gap = 15.0 - e;
                let dir = if w.abs() < 1e-3 { 1.0 } else { w.signum() };
                vec![(dir * gap).clamp(-1.0, 1.0)]
            }
        }
        Task::DoubleIntegrator => vec![(-(2.0 * obs[0] + 2.5 * obs[1])).clamp(-1.0, 1.0)],
        Task::Reacher2 => {
            let (c1, s1, c2, s2) = (obs[0], obs[1], obs[2], obs[3]);
            let (c12, s12) = (c1 * c2 - s1 * s2, s1 * c2 + c1 * s2);
            let (dx, dy) = (obs[4], obs[5]);
            let g0 = (-s1 - s12) * dx + (c1 + c12) * dy;
            let g1 = -s12 * dx + c12 * dy;
            vec![(3.0 * g0).clamp(-1.0, 1.0), (3.0 * g1).clamp(-1.0, 1.0)]
        }
    }
}

/// Mean return over [`ANCHOR_EPISODES`] fixed-seed episodes of either the
/// random (`reference = false`) or the scripted policy.
pub fn measure_anchor(task: Task, reference: bool) -> f64 {
    let mut env = task.make();
    let mut rng = ChaCha8Rng::seed_from_u64(ANCHOR_SEED);
    let mut total = 0.0;
    for ep in 0..ANCHOR_EPISODES {
        let mut obs = env.reset(ANCHOR_SEED + ep as u64);
        let mut ret = 0.0;
        loop {
            let a = if reference {
                reference_action(task, &obs)
            } else {
                (0..env.act_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect()
            };
            let st = env.step(&a).expect("scripted actions are finite");
            ret += st.reward;
            obs = st.obs;
            if st.terminated || st.truncated {
                break;
            }
        }
        total += ret;
    }
    total / ANCHOR_EPISODES as f64
}
