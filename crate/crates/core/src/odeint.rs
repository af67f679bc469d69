//! Fixed-step classical RK4.
//!
//! The integrators are generic over the scalar type: with `f64` they are a
//! plain simulator, with tape variables every stage is recorded and the whole
//! unroll can be differentiated. Both paths perform the same floating-point
//! operations in the same order, so primal trajectories agree bit for bit.

use crate::diffcore::Scalar;
use crate::error::{Error, Result};

/// One step `s + (dt/6)(k₁ + 2k₂ + 2k₃ + k₄)`.
pub fn rk4_step<S, F>(field: &mut F, s: &[S], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<Vec<S>>,
{
    let stage = |k: usize, r: Result<Vec<S>>| {
        r.map_err(|e| Error::Stage { stage: k, source: Box::new(e) }).and_then(|v| {
            if v.len() == s.len() {
                Ok(v)
            } else {
                Err(Error::Shape(format!("field returned {} components for a state of {}", v.len(), s.len())))
            }
        })
    };
    let shift = |k: &[S], h: f64| -> Vec<S> { s.iter().zip(k).map(|(&a, &b)| a + b * h).collect() };
    let k1 = stage(1, field(s))?;
    let k2 = stage(2, field(&shift(&k1, 0.5 * dt)))?;
    let k3 = stage(3, field(&shift(&k2, 0.5 * dt)))?;
    let k4 = stage(4, field(&shift(&k3, dt)))?;
    let h6 = dt / 6.0;
    Ok((0..s.len())
        .map(|i| s[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * h6)
        .collect())
}

/// `steps` successive RK4 steps from `s0`; returns `ŝ₁ … ŝ_T` (not `s0`).
pub fn rollout<S, F>(mut field: F, s0: &[S], dt: f64, steps: usize) -> Result<Vec<Vec<S>>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<Vec<S>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::Config("rollout needs at least one step".into()));
    }
    let mut out: Vec<Vec<S>> = Vec::with_capacity(steps);
    let mut s = s0.to_vec();
    for step in 1..=steps {
        s = rk4_step(&mut field, &s, dt)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        out.push(s.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Tape, Var};

    fn oscillator<S: Scalar>(s: &[S]) -> Result<Vec<S>> {
        Ok(vec![s[1], -s[0]])
    }

    #[test]
    fn zero_field_is_fixed() {
        let s = rk4_step(&mut |_: &[f64]| Ok(vec![0.0, 0.0]), &[1.5, -2.0], 0.1).unwrap();
        assert_eq!(s, vec![1.5, -2.0]);
    }

    #[test]
    fn exponential_growth() {
        let s = rk4_step(&mut |s: &[f64]| Ok(s.to_vec()), &[1.0], 0.1).unwrap();
        // 1 + h + h²/2 + h³/6 + h⁴/24
        let taylor = 1.0 + 0.1 + 0.005 + 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((s[0] - taylor).abs() < 1e-15);
        assert!((s[0] - 0.1f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn one_period_returns_home() {
        let dt = 2.0 * std::f64::consts::PI / 100.0;
        let traj = rollout(oscillator::<f64>, &[1.0, 0.0], dt, 100).unwrap();
        let end = traj.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-5 && end[1].abs() < 1e-5);
    }

    #[test]
    fn oscillator_energy_loss_per_step() {
        // |R(ih)|² for the RK4 stability polynomial R(z) = Σ_{k≤4} z^k/k!.
        let h: f64 = 0.3;
        let s = rk4_step(&mut oscillator::<f64>, &[1.0, 0.0], h).unwrap();
        let exact = 1.0 - h.powi(6) / 72.0 + h.powi(8) / 576.0;
        assert!((s[0] * s[0] + s[1] * s[1] - exact).abs() < 1e-15);
    }

    #[test]
    fn single_step_rollout_equals_step() {
        let a = rollout(oscillator::<f64>, &[0.3, 0.7], 0.05, 1).unwrap();
        let b = rk4_step(&mut oscillator::<f64>, &[0.3, 0.7], 0.05).unwrap();
        assert_eq!(a, vec![b]);
    }

    #[test]
    fn linear_rollout_equals_matrix_power() {
        // ṡ = A s, the RK4 transition is T = I + hA + (hA)²/2 + (hA)³/6 + (hA)⁴/24.
        let a = [[-0.3, 1.2], [-0.8, 0.1]];
        let h = 0.07;
        let mut t = [[1.0, 0.0], [0.0, 1.0]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        for k in 1..=4 {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = (0..2).map(|m| term[i][m] * a[m][j] * h).sum::<f64>() / k as f64;
                }
            }
            term = next;
            for i in 0..2 {
                for j in 0..2 {
                    t[i][j] += term[i][j];
                }
            }
        }
        let field = |s: &[f64]| Ok(vec![a[0][0] * s[0] + a[0][1] * s[1], a[1][0] * s[0] + a[1][1] * s[1]]);
        let traj = rollout(field, &[1.0, -0.5], h, 25).unwrap();
        let mut s = [1.0, -0.5];
        for step in &traj {
            s = [t[0][0] * s[0] + t[0][1] * s[1], t[1][0] * s[0] + t[1][1] * s[1]];
            assert!((step[0] - s[0]).abs() < 1e-13 && (step[1] - s[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let end_err = |n: usize| {
            let t_end = 2.0;
            let traj = rollout(oscillator::<f64>, &[1.0, 0.0], t_end / n as f64, n).unwrap();
            let e = traj.last().unwrap();
            ((e[0] - t_end.cos()).powi(2) + (e[1] + t_end.sin()).powi(2)).sqrt()
        };
        let ratio = end_err(20) / end_err(40);
        assert!((13.0..=19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn divergence_reports_step() {
        let mut calls = 0;
        let field = |s: &[f64]| {
            calls += 1;
            Ok(vec![if calls > 8 { f64::INFINITY } else { s[0] }])
        };
        match rollout(field, &[1.0], 0.1, 5) {
            Err(Error::Divergence { step }) => assert_eq!(step, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stage_index_is_attached() {
        let mut calls = 0;
        let mut field = |s: &[f64]| {
            calls += 1;
            if calls == 3 {
                Err(Error::SingularDynamics { reason: "test".into(), state: s.to_vec() })
            } else {
                Ok(vec![1.0])
            }
        };
        match rk4_step(&mut field, &[0.0], 0.1) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, 3);
                assert!(matches!(*source, Error::SingularDynamics { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn differentiable_rollout_matches_plain_and_finite_differences() {
        // ṡ = (v, −k q) with k a parameter; loss ‖ŝ₃‖².
        let k = 1.7;
        let s0 = [0.4, -0.2];
        let loss = |k: f64| {
            let traj = rollout(|s: &[f64]| Ok(vec![s[1], -s[0] * k]), &s0, 0.1, 3).unwrap();
            traj[2].iter().map(|v| v * v).sum::<f64>()
        };
        let tape = Tape::new();
        let kv = tape.var(k);
        let s0v: Vec<Var> = s0.iter().map(|&v| Var::constant(v)).collect();
        let traj = rollout(|s: &[Var]| Ok(vec![s[1], -(s[0] * kv)]), &s0v, 0.1, 3).unwrap();
        let plain = rollout(|s: &[f64]| Ok(vec![s[1], -(s[0] * k)]), &s0, 0.1, 3).unwrap();
        for (a, b) in traj.iter().zip(&plain) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.value().to_bits(), y.to_bits());
            }
        }
        let l = traj[2][0] * traj[2][0] + traj[2][1] * traj[2][1];
        let g = tape.backward(&l).wrt(&kv);
        let fd = (loss(k + 1e-5) - loss(k - 1e-5)) / 2e-5;
        assert!(((g - fd) / fd).abs() < 1e-3, "{g} vs {fd}");
    }
}
