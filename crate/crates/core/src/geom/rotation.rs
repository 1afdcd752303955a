use nalgebra::Matrix3;

use super::{Angle2D, Rot3};
use crate::error::{Error, Result};

/// In-plane rotation about z closest to `r` in chordal distance.
///
/// Only the upper-left 2x2 block matters: the best `Rz(a)` maximizes
/// `(r11 + r22) cos a + (r21 - r12) sin a`.
pub fn closest_z_rotation(r: &Rot3) -> Result<Angle2D> {
    let m = r.matrix();
    let c = m[(0, 0)] + m[(1, 1)];
    let s = m[(1, 0)] - m[(0, 1)];
    if c.abs() < 1e-12 && s.abs() < 1e-12 {
        return Err(Error::DegenerateRotation);
    }
    Ok(Angle2D::new(s.atan2(c)))
}

/// Rotation minimizing `sum_i |D - V_i|_F^2` over proper rotations `D`.
pub fn procrustes_fit(targets: &[Matrix3<f64>]) -> Result<Rot3> {
    if targets.is_empty() {
        return Err(Error::RankDeficient);
    }
    let sum: Matrix3<f64> = targets.iter().sum();
    let svd = sum.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::RankDeficient);
    }
    Rot3::nearest(&sum)
}

/// `sum_i |D - V_i|_F^2` for a candidate `D`.
pub fn frobenius_residual(d: &Rot3, targets: &[Matrix3<f64>]) -> f64 {
    targets
        .iter()
        .map(|t| (d.matrix() - t).norm_squared())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_has_zero_roll() {
        assert_eq!(closest_z_rotation(&Rot3::identity()).unwrap().radians(), 0.0);
    }

    #[test]
    fn pure_z_rotation() {
        let a = closest_z_rotation(&Rot3::rz(30f64.to_radians())).unwrap();
        assert!((a.degrees() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn x_tilt_cancels() {
        // Rz(a) Rx(b): upper block is [[ca, -sa cb], [sa, ca cb]], so
        // r11 + r22 = ca (1 + cb) and r21 - r12 = sa (1 + cb).
        let (a, b) = (10f64.to_radians(), 5f64.to_radians());
        let r = Rot3::rz(a) * Rot3::rx(b);
        let m = r.matrix();
        assert!((m[(0, 0)] + m[(1, 1)] - a.cos() * (1.0 + b.cos())).abs() < 1e-15);
        assert!((m[(1, 0)] - m[(0, 1)] - a.sin() * (1.0 + b.cos())).abs() < 1e-15);
        let got = closest_z_rotation(&r).unwrap();
        assert!((got.degrees() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn half_turn_pitch_is_degenerate() {
        let r = Rot3::rx(std::f64::consts::PI);
        assert!(matches!(closest_z_rotation(&r), Err(Error::DegenerateRotation)));
    }

    proptest! {
        #[test]
        fn tilt_never_leaks_into_roll(theta in -3.1f64..3.1, tilt in -80f64..80.0, about_x in any::<bool>(), left in any::<bool>()) {
            let t = tilt.to_radians();
            let tilt_rot = if about_x { Rot3::rx(t) } else { Rot3::ry(t) };
            let r = if left { Rot3::rz(theta) * tilt_rot } else { tilt_rot * Rot3::rz(theta) };
            let got = closest_z_rotation(&r).unwrap();
            prop_assert!((got - Angle2D::new(theta)).radians().abs() < 1e-9);
        }
    }

    #[test]
    fn procrustes_identity_cases() {
        let d = procrustes_fit(&[Matrix3::identity()]).unwrap();
        assert!((d.matrix() - Matrix3::identity()).norm() < 1e-12);
        let a = 5f64.to_radians();
        let d = procrustes_fit(&[*Rot3::rz(a).matrix(), *Rot3::rz(-a).matrix()]).unwrap();
        assert!((d.matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn procrustes_rank_deficient() {
        assert!(matches!(procrustes_fit(&[]), Err(Error::RankDeficient)));
        let a = *Rot3::identity().matrix();
        assert!(matches!(procrustes_fit(&[a, -a]), Err(Error::RankDeficient)));
    }

    fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rot3 {
        loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 && v.norm() > 1e-6 {
                let angle = rng.random_range(0.0..max_angle);
                return Rot3::from_axis_angle(&(v.normalize() * angle));
            }
        }
    }

    #[test]
    fn procrustes_matches_local_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = random_rotation(&mut rng, std::f64::consts::PI);
        let targets: Vec<Matrix3<f64>> = (0..20)
            .map(|_| *(truth * random_rotation(&mut rng, 2f64.to_radians())).matrix())
            .collect();
        let fit = procrustes_fit(&targets).unwrap();
        assert!(fit.angle_to(&truth).to_degrees() < 0.5);

        // oracle: grid over axis-angle perturbations of the truth, 0.1 degree steps
        let step = 0.1f64.to_radians();
        let mut best = (f64::INFINITY, Rot3::identity());
        for i in -15..=15 {
            for j in -15..=15 {
                for k in -15..=15 {
                    let w = Vector3::new(i as f64, j as f64, k as f64) * step;
                    let cand = truth * Rot3::from_axis_angle(&w);
                    let e = frobenius_residual(&cand, &targets);
                    if e < best.0 {
                        best = (e, cand);
                    }
                }
            }
        }
        assert!(frobenius_residual(&fit, &targets) <= best.0 + 1e-12);
        assert!(fit.angle_to(&best.1).to_degrees() < 0.1);
    }

    #[test]
    fn procrustes_beats_sampled_covering() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let targets: Vec<Matrix3<f64>> = (0..5)
                .map(|_| *random_rotation(&mut rng, std::f64::consts::PI).matrix())
                .collect();
            let fit = procrustes_fit(&targets).unwrap();
            let e = frobenius_residual(&fit, &targets);
            for _ in 0..10_000 {
                let cand = random_rotation(&mut rng, std::f64::consts::PI);
                assert!(e <= frobenius_residual(&cand, &targets) + 1e-12);
            }
        }
    }
}
