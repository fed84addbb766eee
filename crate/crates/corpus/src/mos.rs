//! Deterministic quality oracle: mos = 1 + 4 * prod_k (1 - penalty_k * s_k),
//! monotone decreasing in every severity, 5 for clean videos, bounded in
//! [1, 5].

use crate::degrade::{DegradationKind, DegradationSpec};

/// Per-kind penalty constants; chosen to spread scores over [1, 5].
pub fn penalty(kind: DegradationKind) -> f64 {
    match kind {
        DegradationKind::GaussianBlur => 0.9,
        DegradationKind::GaussianNoise => 0.85,
        DegradationKind::Blockiness => 0.8,
        DegradationKind::TemporalFlicker => 0.7,
        DegradationKind::MotionBlur => 0.75,
        DegradationKind::ExposureShift => 0.6,
    }
}

/// The oracle formula over explicit (penalty, severity) pairs.
pub fn mos_from_penalties(pairs: &[(f64, f64)]) -> f64 {
    let prod: f64 = pairs.iter().map(|&(p, s)| 1.0 - p * s).product();
    1.0 + 4.0 * prod
}

/// Ground-truth score for a degradation plan (at most two simultaneous
/// degradations).
pub fn synth_mos(specs: &[DegradationSpec]) -> f64 {
    assert!(specs.len() <= 2, "at most two simultaneous degradations");
    let pairs: Vec<(f64, f64)> = specs
        .iter()
        .map(|d| (penalty(d.kind), d.severity))
        .collect();
    mos_from_penalties(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_video_scores_five() {
        assert_eq!(synth_mos(&[]), 5.0);
    }

    #[test]
    fn full_penalty_at_full_severity_scores_one() {
        assert_eq!(mos_from_penalties(&[(1.0, 1.0)]), 1.0);
    }

    #[test]
    fn monotone_decreasing_in_severity() {
        for kind in DegradationKind::ALL {
            let hi = synth_mos(&[DegradationSpec { kind, severity: 0.7 }]);
            let lo = synth_mos(&[DegradationSpec { kind, severity: 0.3 }]);
            assert!(hi < lo, "{kind:?}: mos(0.7) = {hi} !< mos(0.3) = {lo}");
        }
    }

    #[test]
    fn bounded_in_range() {
        for kind in DegradationKind::ALL {
            for sev in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let m = synth_mos(&[DegradationSpec { kind, severity: sev }]);
                assert!((1.0..=5.0).contains(&m));
            }
        }
    }
}
