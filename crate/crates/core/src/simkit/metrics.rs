//! Estimation error metrics against ground truth.
//!
//! Per step: `r_e = q ⊖ q̂` (rotation-vector attitude error), `p_e = p - p̂`,
//! `v_e = v - v̂`. The summary aggregates RMSE of the norms, the final errors
//! and the convergence time (first instant after which the position error
//! norm stays below a threshold for the rest of the run).

use crate::kinematics::NavState;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("timestamp mismatch at index {index}: truth {truth_t} vs estimate {estimate_t}")]
    TimestampMismatch {
        index: usize,
        truth_t: f64,
        estimate_t: f64,
    },
    #[error("length mismatch: truth {truth} records vs estimates {estimates}")]
    LengthMismatch { truth: usize, estimates: usize },
}

/// Per-step estimation errors.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRecord {
    pub t: f64,
    pub r_e: Vector3<f64>,
    pub p_e: Vector3<f64>,
    pub v_e: Vector3<f64>,
    pub r_norm: f64,
    pub p_norm: f64,
    pub v_norm: f64,
}

/// Aggregate statistics over one run.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSummary {
    pub rmse_rot: f64,
    pub rmse_pos: f64,
    pub rmse_vel: f64,
    pub final_rot: f64,
    pub final_pos: f64,
    pub final_vel: f64,
    /// First time after which `‖p_e‖` stays below the threshold; `None` when
    /// the run never settles.
    pub convergence_time: Option<f64>,
    pub convergence_threshold: f64,
}

/// Computes per-step errors and the summary. Streams must be aligned sample
/// by sample (same length, timestamps within 1e-9 s).
pub fn compute_errors(
    truth: &[(f64, NavState)],
    estimates: &[(f64, NavState)],
    convergence_threshold: f64,
) -> Result<(Vec<ErrorRecord>, ErrorSummary), MetricsError> {
    if truth.len() != estimates.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            estimates: estimates.len(),
        });
    }
    let mut records = Vec::with_capacity(truth.len());
    for (i, ((tt, ts), (te, es))) in truth.iter().zip(estimates).enumerate() {
        if (tt - te).abs() > 1e-9 {
            return Err(MetricsError::TimestampMismatch {
                index: i,
                truth_t: *tt,
                estimate_t: *te,
            });
        }
        let r_e = ts.q.boxminus(&es.q).0;
        let p_e = ts.p - es.p;
        let v_e = ts.v - es.v;
        records.push(ErrorRecord {
            t: *tt,
            r_e,
            p_e,
            v_e,
            r_norm: r_e.norm(),
            p_norm: p_e.norm(),
            v_norm: v_e.norm(),
        });
    }

    let n = records.len().max(1) as f64;
    let rmse = |f: fn(&ErrorRecord) -> f64| -> f64 {
        (records.iter().map(|r| f(r) * f(r)).sum::<f64>() / n).sqrt()
    };
    let last = records.last();
    let mut convergence_time = None;
    for r in records.iter().rev() {
        if r.p_norm < convergence_threshold {
            convergence_time = Some(r.t);
        } else {
            break;
        }
    }
    let summary = ErrorSummary {
        rmse_rot: rmse(|r| r.r_norm),
        rmse_pos: rmse(|r| r.p_norm),
        rmse_vel: rmse(|r| r.v_norm),
        final_rot: last.map(|r| r.r_norm).unwrap_or(0.0),
        final_pos: last.map(|r| r.p_norm).unwrap_or(0.0),
        final_vel: last.map(|r| r.v_norm).unwrap_or(0.0),
        convergence_time,
        convergence_threshold,
    };
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quaternion, RotationVector};
    use approx::assert_abs_diff_eq;

    fn pose(p: Vector3<f64>) -> NavState {
        NavState {
            p,
            ..NavState::identity()
        }
    }

    #[test]
    fn identical_streams_have_zero_errors() {
        let truth: Vec<(f64, NavState)> = (0..5)
            .map(|k| (k as f64 * 0.1, pose(Vector3::new(k as f64, 0.0, 0.0))))
            .collect();
        let (records, summary) = compute_errors(&truth, &truth, 0.1).unwrap();
        for r in &records {
            assert_eq!(r.r_norm, 0.0);
            assert_eq!(r.p_norm, 0.0);
            assert_eq!(r.v_norm, 0.0);
        }
        assert_eq!(summary.rmse_pos, 0.0);
        assert_eq!(summary.convergence_time, Some(0.0));
    }

    #[test]
    fn attitude_offset_measures_its_angle() {
        let truth = vec![(0.0, NavState::identity())];
        let mut est = NavState::identity();
        est.q = Quaternion::IDENTITY.boxplus(&RotationVector(Vector3::new(0.1, 0.0, 0.0)));
        // Estimate = truth ⊕ [0.1,0,0]  =>  ‖r_e‖ = 0.1 rad.
        let (records, _) = compute_errors(&truth, &[(0.0, est)], 0.1).unwrap();
        assert_abs_diff_eq!(records[0].r_norm, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn position_offset_is_pythagorean() {
        let truth = vec![(0.0, pose(Vector3::zeros()))];
        let est = vec![(0.0, pose(Vector3::new(0.3, 0.4, 0.0)))];
        let (records, summary) = compute_errors(&truth, &est, 0.1).unwrap();
        assert_abs_diff_eq!(records[0].p_norm, 0.5, epsilon = 1e-15);
        assert_eq!(summary.convergence_time, None);
    }

    #[test]
    fn rigid_world_transform_leaves_norms_unchanged() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(70);
        let make = |rng: &mut rand_chacha::ChaCha12Rng| NavState {
            q: RotationVector(Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).to_quat(),
            p: Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
            v: Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
            b_omega: Vector3::zeros(),
            b_acc: Vector3::zeros(),
        };
        let truth: Vec<(f64, NavState)> = (0..20).map(|k| (k as f64, make(&mut rng))).collect();
        let est: Vec<(f64, NavState)> = truth
            .iter()
            .map(|(t, s)| {
                let mut e = *s;
                e.p += Vector3::new(0.05, -0.02, 0.01);
                e.q = e
                    .q
                    .boxplus(&RotationVector(Vector3::new(0.01, 0.02, -0.01)));
                (*t, e)
            })
            .collect();
        let (base, _) = compute_errors(&truth, &est, 0.1).unwrap();

        let q0 = RotationVector(Vector3::new(0.4, -0.3, 0.8)).to_quat();
        let r0 = q0.to_rotmat();
        let p0 = Vector3::new(2.0, -1.0, 3.0);
        let xform = |s: &NavState| NavState {
            q: q0 * s.q,
            p: r0 * s.p + p0,
            v: r0 * s.v,
            b_omega: s.b_omega,
            b_acc: s.b_acc,
        };
        let truth2: Vec<(f64, NavState)> = truth.iter().map(|(t, s)| (*t, xform(s))).collect();
        let est2: Vec<(f64, NavState)> = est.iter().map(|(t, s)| (*t, xform(s))).collect();
        let (moved, _) = compute_errors(&truth2, &est2, 0.1).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert_abs_diff_eq!(a.r_norm, b.r_norm, epsilon = 1e-9);
            assert_abs_diff_eq!(a.p_norm, b.p_norm, epsilon = 1e-9);
            assert_abs_diff_eq!(a.v_norm, b.v_norm, epsilon = 1e-9);
        }
    }

    #[test]
    fn convergence_time_requires_staying_below() {
        let mk = |k: usize, d: f64| (k as f64, pose(Vector3::new(d, 0.0, 0.0)));
        let truth: Vec<_> = (0..6).map(|k| mk(k, 0.0)).collect();
        // Dips below 0.1 at k=2, pops back out at k=3, settles from k=4.
        let est = vec![
            mk(0, 1.0),
            mk(1, 0.5),
            mk(2, 0.05),
            mk(3, 0.2),
            mk(4, 0.01),
            mk(5, 0.02),
        ];
        let (_, summary) = compute_errors(&truth, &est, 0.1).unwrap();
        assert_eq!(summary.convergence_time, Some(4.0));
    }

    #[test]
    fn mismatches_are_reported() {
        let truth = vec![(0.0, NavState::identity())];
        let est = vec![(0.5, NavState::identity())];
        assert!(matches!(
            compute_errors(&truth, &est, 0.1),
            Err(MetricsError::TimestampMismatch { .. })
        ));
        assert!(matches!(
            compute_errors(&truth, &[], 0.1),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }
}
