use crate::{Error, Result};

/// Generalized advantage estimation over one trajectory segment.
///
/// `dones[t]` marks that the episode ended after step `t`, which cuts both
/// the bootstrap and the trace. `bootstrap` is the value of the state after
/// the last step. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Dimension {
            what: "GAE inputs",
            expected: n,
            got: if values.len() != n { values.len() } else { dones.len() },
        });
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[false], 2.0, 0.9, 0.95).unwrap();
        assert!((a[0] - (1.0 + 0.9 * 2.0 - 0.5)).abs() < 1e-15);
        assert!((r[0] - (a[0] + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_is_td() {
        let r = [1.0, -0.5, 2.0, 0.3];
        let v = [0.1, 0.2, -0.3, 0.4];
        let d = [false, true, false, false];
        let (a, _) = compute_gae(&r, &v, &d, 0.7, 0.99, 0.0).unwrap();
        let next = [0.2, 0.0, 0.4, 0.7];
        for t in 0..4 {
            let live = if d[t] { 0.0 } else { 1.0 };
            assert!((a[t] - (r[t] + 0.99 * next[t] * live - v[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.99, 0.95).is_err());
    }
}
