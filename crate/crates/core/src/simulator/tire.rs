use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{ManeuverKind, OperatingCondition};

/// Physical parameters of the simulated tire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    /// Unloaded outer radius, m.
    pub unloaded_radius: f64,
    /// Effective rolling radius, m.
    pub effective_rolling_radius: f64,
    /// Radial stiffness, N/m.
    pub vertical_stiffness: f64,
    /// Cornering stiffness, N/rad.
    pub cornering_stiffness: f64,
    /// Longitudinal slip stiffness, N per unit slip.
    pub longitudinal_stiffness: f64,
    pub friction_coefficient: f64,
    /// Radius at which the accelerometer sits, m.
    pub inner_liner_radius: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            unloaded_radius: 0.30,
            effective_rolling_radius: 0.29,
            vertical_stiffness: 600_000.0,
            // Full sliding at tan(a) = 3 mu Fz / C; puts onset at 5 deg for 2080 N.
            cornering_stiffness: 3.0 * 1.1 * 2080.0 / 5f64.to_radians().tan(),
            longitudinal_stiffness: 80_000.0,
            friction_coefficient: 1.1,
            inner_liner_radius: 0.28,
        }
    }
}

impl TireParams {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("unloaded_radius", self.unloaded_radius),
            ("effective_rolling_radius", self.effective_rolling_radius),
            ("inner_liner_radius", self.inner_liner_radius),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.effective_rolling_radius > self.unloaded_radius {
            return Err(Error::invalid(
                "effective_rolling_radius must not exceed unloaded_radius",
            ));
        }
        let positives = [
            ("vertical_stiffness", self.vertical_stiffness),
            ("cornering_stiffness", self.cornering_stiffness),
            ("longitudinal_stiffness", self.longitudinal_stiffness),
            ("friction_coefficient", self.friction_coefficient),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Ground-truth force triple for one revolution, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceLabel {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

/// Cubic brush lateral force, saturating at mu*Fz. Odd in `slip_rad`.
pub fn brush_lateral_force(slip_rad: f64, fz: f64, tire: &TireParams) -> f64 {
    let mu_fz = tire.friction_coefficient * fz;
    let stiff = tire.cornering_stiffness * slip_rad.tan();
    if stiff.abs() >= 3.0 * mu_fz {
        return -stiff.signum() * mu_fz;
    }
    let ratio = stiff.abs() / (3.0 * mu_fz);
    -stiff * (1.0 - ratio + ratio * ratio / 3.0)
}

/// Forces acting on the tire for a steady operating condition.
pub fn ground_truth_forces(cond: &OperatingCondition, tire: &TireParams) -> Result<ForceLabel> {
    cond.validate()?;
    tire.validate()?;
    let fz = cond.vertical_load;
    let mu_fz = tire.friction_coefficient * fz;
    let (fx, fy) = match cond.maneuver {
        ManeuverKind::FreeRolling => (0.0, 0.0),
        ManeuverKind::Cornering => (
            0.0,
            brush_lateral_force(cond.slip_angle.to_radians(), fz, tire),
        ),
        ManeuverKind::Driving => {
            let fx = cond.drive_torque / tire.effective_rolling_radius;
            (fx.clamp(-mu_fz, mu_fz), 0.0)
        }
    };
    Ok(ForceLabel { fx, fy, fz })
}

/// Half of the contact-patch angle seen from the wheel center, degrees.
pub fn contact_half_angle(fz: f64, tire: &TireParams) -> Result<f64> {
    if !(fz.is_finite() && fz > 0.0) {
        return Err(Error::invalid(format!("vertical load must be > 0, got {fz}")));
    }
    let radius = tire.unloaded_radius;
    let deflection = fz / tire.vertical_stiffness;
    if deflection >= radius {
        return Err(Error::UnphysicalLoad {
            deflection_m: deflection,
            radius_m: radius,
        });
    }
    let half_length = (2.0 * radius * deflection - deflection * deflection).sqrt();
    Ok((half_length / radius).asin().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cornering(slip: f64, fz: f64) -> OperatingCondition {
        OperatingCondition {
            velocity: 30.0,
            inflation_pressure: 220.0,
            vertical_load: fz,
            slip_angle: slip,
            drive_torque: 0.0,
            maneuver: ManeuverKind::Cornering,
        }
    }

    #[test]
    fn free_rolling_has_no_in_plane_force() {
        let cond = OperatingCondition::free_rolling(30.0, 4160.0);
        let f = ground_truth_forces(&cond, &TireParams::default()).unwrap();
        assert_eq!((f.fx, f.fy, f.fz), (0.0, 0.0, 4160.0));
    }

    #[test]
    fn lateral_force_saturates_at_mu_fz() {
        let tire = TireParams {
            cornering_stiffness: 1.0e7,
            ..TireParams::default()
        };
        let f = ground_truth_forces(&cornering(6.0, 2080.0), &tire).unwrap();
        assert!((f.fy.abs() - 2288.0).abs() < 1e-9, "fy = {}", f.fy);
        assert!(f.fy < 0.0);
        // Default tire: onset at 5 deg, so 6 deg is saturated too.
        let f = ground_truth_forces(&cornering(6.0, 2080.0), &TireParams::default()).unwrap();
        assert!((f.fy.abs() - 2288.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_law_is_continuous_at_full_sliding() {
        let tire = TireParams::default();
        let fz = 4160.0;
        let onset = (3.0 * tire.friction_coefficient * fz / tire.cornering_stiffness).atan();
        let below = brush_lateral_force(onset - 1e-9, fz, &tire);
        let above = brush_lateral_force(onset + 1e-9, fz, &tire);
        assert!((below - above).abs() < 1e-3);
    }

    #[test]
    fn drive_torque_maps_through_rolling_radius() {
        let tire = TireParams {
            unloaded_radius: 0.32,
            effective_rolling_radius: 0.31,
            ..TireParams::default()
        };
        let cond = OperatingCondition::driving(30.0, 2080.0, 343.0);
        let f = ground_truth_forces(&cond, &tire).unwrap();
        assert!((f.fx - 343.0 / 0.31).abs() < 1e-9);
        assert!((f.fx - 1106.45).abs() < 0.01);
        assert!(f.fx < 1.1 * 2080.0);
    }

    #[test]
    fn half_angle_matches_hand_evaluation() {
        // R = 0.3 m, deflection 0.01 m: a = sqrt(0.0059) = 0.07681 m.
        let tire = TireParams {
            vertical_stiffness: 100_000.0,
            ..TireParams::default()
        };
        let angle = contact_half_angle(1000.0, &tire).unwrap();
        let expected = (0.0059f64.sqrt() / 0.3).asin().to_degrees();
        assert!((angle - expected).abs() < 1e-12);
        assert!((angle - 14.84).abs() < 0.01);
    }

    #[test]
    fn half_angle_limits_and_monotonicity() {
        let tire = TireParams::default();
        assert!(contact_half_angle(1e-6, &tire).unwrap() < 0.01);
        let a = contact_half_angle(2080.0, &tire).unwrap();
        let b = contact_half_angle(4160.0, &tire).unwrap();
        assert!(b > a);
        assert!(matches!(
            contact_half_angle(1e6, &tire),
            Err(Error::UnphysicalLoad { .. })
        ));
        assert!(contact_half_angle(0.0, &tire).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        let tire = TireParams {
            effective_rolling_radius: 0.31,
            ..TireParams::default()
        };
        assert!(tire.validate().is_err());
        let mut cond = cornering(2.0, 2080.0);
        cond.vertical_load = 0.0;
        assert!(ground_truth_forces(&cond, &TireParams::default()).is_err());
    }
}
