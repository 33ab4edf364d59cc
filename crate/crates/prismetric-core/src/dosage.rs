//! Water-dosage bookkeeping and the three water-to-cement ratio
//! estimators.
//!
//! Dosages are recorded per nozzle opening time: mean and spread of the
//! droplet mass released per voxel, and the voxel count of the printed
//! part. From those follow the total water mass per part, the theoretical
//! w/c ratio (every droplet hydrates exactly one voxel of powder), the
//! mass-based ratio (from weighing the finished part) and the
//! volume-corrected ratio γ·(w/c)_theo that accounts for the real printed
//! volume.
//!
//! Note: with the default powder (bulk density 1695 kg/m³, cement fraction
//! 0.25) and 5.7 mm voxels, the theoretical ratio at the largest tabulated
//! droplet mass (63.94 mg) evaluates to ≈ 0.815 — the equation is
//! implemented verbatim, without tuning constants.

use thiserror::Error;

/// Errors from dosage arithmetic.
#[derive(Debug, Error, PartialEq)]
pub enum DosageError {
    #[error("total water mass must be positive, got {0} g")]
    NonPositiveWater(f64),
    #[error("solid mass is non-positive: total {total_g} g minus water {water_g} g")]
    NonPositiveSolidMass { total_g: f64, water_g: f64 },
    #[error("bulk density must be positive, got {0} kg/m³")]
    InvalidDensity(f64),
    #[error("cement fraction must lie strictly between 0 and 1, got {0}")]
    InvalidCementFraction(f64),
}

/// Dry powder properties needed for the theoretical w/c ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowderSpec {
    /// Bulk density of the packed powder bed, kg/m³.
    pub bulk_density_kg_m3: f64,
    /// Cement share of the powder by mass (0, 1).
    pub cement_fraction: f64,
}

impl PowderSpec {
    pub fn new(bulk_density_kg_m3: f64, cement_fraction: f64) -> Result<Self, DosageError> {
        if !(bulk_density_kg_m3 > 0.0) {
            return Err(DosageError::InvalidDensity(bulk_density_kg_m3));
        }
        if !(cement_fraction > 0.0 && cement_fraction < 1.0) {
            return Err(DosageError::InvalidCementFraction(cement_fraction));
        }
        Ok(PowderSpec {
            bulk_density_kg_m3,
            cement_fraction,
        })
    }

    /// Mass of one cubic voxel of powder in mg.
    ///
    /// 1 kg/m³ = 10⁻³ mg/mm³, so `m = ϱ · 10⁻³ · pitch³`.
    pub fn voxel_mass_mg(&self, voxel_pitch_mm: f64) -> f64 {
        self.bulk_density_kg_m3 * 1e-3 * voxel_pitch_mm * voxel_pitch_mm * voxel_pitch_mm
    }
}

impl Default for PowderSpec {
    /// Standard mixture: 1695 kg/m³ bulk density, 25 % cement by mass.
    fn default() -> Self {
        PowderSpec {
            bulk_density_kg_m3: 1695.0,
            cement_fraction: 0.25,
        }
    }
}

/// One dosage-table row: droplet statistics for a nozzle opening time and
/// the voxel count of the part printed with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosageRecord {
    pub nozzle_time_ms: f64,
    pub droplet_mass_mg: f64,
    pub droplet_mass_std_mg: f64,
    pub voxel_count: u32,
    /// Specimens of this dosage retained for testing.
    pub retained: u32,
}

impl DosageRecord {
    /// Total water mass per printed part in grams.
    pub fn water_mass_g(&self) -> f64 {
        water_mass_per_part(self.droplet_mass_mg, self.voxel_count)
    }

    /// Linear propagation of the droplet-mass spread to the part, grams.
    pub fn water_mass_std_g(&self) -> f64 {
        water_mass_per_part(self.droplet_mass_std_mg, self.voxel_count)
    }

    /// Mean mass flow while the nozzle is open, mg/ms.
    pub fn flow_rate_mg_per_ms(&self) -> f64 {
        self.droplet_mass_mg / self.nozzle_time_ms
    }
}

/// Water mass for a whole part in grams: `droplet_mass · voxel_count /
/// 1000`. Inputs are assumed positive.
pub fn water_mass_per_part(droplet_mass_mg: f64, voxel_count: u32) -> f64 {
    droplet_mass_mg * voxel_count as f64 / 1000.0
}

/// Theoretical w/c ratio: all discharged water hydrates the cement share
/// of exactly one voxel of powder.
pub fn wc_theoretical(droplet_mass_mg: f64, voxel_pitch_mm: f64, powder: &PowderSpec) -> f64 {
    droplet_mass_mg / (powder.cement_fraction * powder.voxel_mass_mg(voxel_pitch_mm))
}

/// Mass-based w/c ratio from the weighed part: water over the cement share
/// of the remaining solid mass.
pub fn wc_mass_based(
    total_mass_g: f64,
    total_water_g: f64,
    cement_fraction: f64,
) -> Result<f64, DosageError> {
    if !(total_water_g > 0.0) {
        return Err(DosageError::NonPositiveWater(total_water_g));
    }
    let solid = total_mass_g - total_water_g;
    if !(solid > 0.0) {
        return Err(DosageError::NonPositiveSolidMass {
            total_g: total_mass_g,
            water_g: total_water_g,
        });
    }
    Ok(total_water_g / (cement_fraction * solid))
}

/// Volume correction: `γ = v_real/v_ref` and `corrected = γ · theo`.
/// Volumes are assumed positive. The returned pair satisfies
/// `corrected == gamma * theo` bit-exactly.
pub fn wc_volume_corrected(theo: f64, v_real_mm3: f64, v_ref_mm3: f64) -> (f64, f64) {
    let gamma = v_real_mm3 / v_ref_mm3;
    (gamma, gamma * theo)
}

/// Full w/c estimate for one dosage record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcEstimate {
    /// Theoretical ratio from the droplet mass.
    pub theo: f64,
    /// Linearly propagated spread of `theo`.
    pub theo_std: f64,
    /// Mass-based ratio; `None` when the part was not weighed.
    pub mass_based: Option<f64>,
    /// Real-to-reference volume ratio.
    pub gamma: f64,
    /// `gamma * theo`, bit-exact.
    pub corrected: f64,
}

impl WcEstimate {
    /// Builds the estimate for a record; `total_mass_g` enables the
    /// mass-based ratio, `v_real_mm3`/`v_ref_mm3` the volume correction
    /// (pass equal volumes for γ = 1).
    pub fn for_record(
        record: &DosageRecord,
        voxel_pitch_mm: f64,
        powder: &PowderSpec,
        total_mass_g: Option<f64>,
        v_real_mm3: f64,
        v_ref_mm3: f64,
    ) -> Result<WcEstimate, DosageError> {
        let theo = wc_theoretical(record.droplet_mass_mg, voxel_pitch_mm, powder);
        let theo_std = wc_theoretical(record.droplet_mass_std_mg, voxel_pitch_mm, powder);
        let mass_based = match total_mass_g {
            Some(total) => Some(wc_mass_based(
                total,
                record.water_mass_g(),
                powder.cement_fraction,
            )?),
            None => None,
        };
        let (gamma, corrected) = wc_volume_corrected(theo, v_real_mm3, v_ref_mm3);
        Ok(WcEstimate {
            theo,
            theo_std,
            mass_based,
            gamma,
            corrected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const PITCH: f64 = 5.7;

    #[test]
    fn water_mass_matches_tabulated_examples() {
        assert!((water_mass_per_part(29.52, 1372) - 40.50).abs() < 0.01);
        assert!((water_mass_per_part(63.94, 1372) - 87.73).abs() < 0.01);
        assert_relative_eq!(water_mass_per_part(1.0, 1000), 1.0);
    }

    #[test]
    fn voxel_mass_matches_hand_evaluation() {
        let powder = PowderSpec::default();
        // 185.193 mm³ × 1.695 mg/mm³ = 313.9 mg.
        assert!((powder.voxel_mass_mg(PITCH) - 313.9).abs() < 0.05);
    }

    #[test]
    fn theoretical_ratio_matches_hand_evaluation() {
        let powder = PowderSpec::default();
        assert!((wc_theoretical(29.52, PITCH, &powder) - 0.376).abs() < 0.001);
        // Droplet equal to the cement mass of a voxel gives exactly 1.
        let droplet = powder.cement_fraction * powder.voxel_mass_mg(PITCH);
        assert_relative_eq!(wc_theoretical(droplet, PITCH, &powder), 1.0, epsilon = 1e-15);
        // Strictly monotone in droplet mass.
        assert!(
            wc_theoretical(63.94, PITCH, &powder) > wc_theoretical(29.52, PITCH, &powder)
        );
    }

    #[test]
    fn theoretical_ratio_is_linear_in_droplet_mass() {
        let powder = PowderSpec::default();
        let one = wc_theoretical(1.0, PITCH, &powder);
        for m in [0.5, 2.0, 29.52, 63.94, 100.0] {
            assert_relative_eq!(wc_theoretical(m, PITCH, &powder), one * m, epsilon = 1e-12);
        }
    }

    #[test]
    fn mass_based_ratio_and_errors() {
        let r = wc_mass_based(850.0, 40.5, 0.25).unwrap();
        assert!((r - 0.2001).abs() < 0.0001);
        // Ratio vanishes with the water mass.
        assert!(wc_mass_based(850.0, 1e-9, 0.25).unwrap() < 1e-11);
        assert_eq!(
            wc_mass_based(850.0, 0.0, 0.25),
            Err(DosageError::NonPositiveWater(0.0))
        );
        assert!(matches!(
            wc_mass_based(40.0, 40.5, 0.25),
            Err(DosageError::NonPositiveSolidMass { .. })
        ));
    }

    #[test]
    fn volume_correction_is_bit_exact() {
        let (gamma, corrected) = wc_volume_corrected(0.376, 254084.796, 254084.796);
        assert_eq!(gamma, 1.0);
        assert_eq!(corrected, 0.376);
        let (gamma, corrected) = wc_volume_corrected(0.376, 1.3 * 254084.796, 254084.796);
        assert!((corrected - 0.489).abs() < 0.001);
        assert_eq!(corrected, gamma * 0.376);
        // Inflated-prism volume ratio.
        let v_ref = 159.6 * 39.9 * 39.9;
        let v_real = 161.6 * 41.9 * 41.9;
        let (gamma, _) = wc_volume_corrected(0.376, v_real, v_ref);
        assert!((gamma - 1.116).abs() < 0.001);
    }

    #[test]
    fn record_derives_water_mass_and_flow_rate() {
        let record = DosageRecord {
            nozzle_time_ms: 11.0,
            droplet_mass_mg: 29.52,
            droplet_mass_std_mg: 0.06,
            voxel_count: 1372,
            retained: 2,
        };
        assert!((record.water_mass_g() - 40.50).abs() < 0.01);
        assert!((record.flow_rate_mg_per_ms() - 2.684).abs() < 0.02);
        assert_relative_eq!(record.water_mass_std_g(), 0.06 * 1.372, epsilon = 1e-12);
    }

    #[test]
    fn powder_spec_is_validated() {
        assert!(PowderSpec::new(1695.0, 0.25).is_ok());
        assert_eq!(
            PowderSpec::new(0.0, 0.25),
            Err(DosageError::InvalidDensity(0.0))
        );
        assert_eq!(
            PowderSpec::new(1695.0, 1.0),
            Err(DosageError::InvalidCementFraction(1.0))
        );
    }

    #[test]
    fn estimate_ties_the_parts_together() {
        let record = DosageRecord {
            nozzle_time_ms: 30.0,
            droplet_mass_mg: 63.94,
            droplet_mass_std_mg: 0.55,
            voxel_count: 1372,
            retained: 3,
        };
        let est = WcEstimate::for_record(
            &record,
            PITCH,
            &PowderSpec::default(),
            None,
            254084.796,
            254084.796,
        )
        .unwrap();
        assert!((est.theo - 0.815).abs() < 0.005);
        assert_eq!(est.mass_based, None);
        assert_eq!(est.gamma, 1.0);
        assert_eq!(est.corrected, est.gamma * est.theo);
        // With a weighed part the mass-based path engages.
        let est = WcEstimate::for_record(
            &record,
            PITCH,
            &PowderSpec::default(),
            Some(900.0),
            1.05 * 254084.796,
            254084.796,
        )
        .unwrap();
        let expected = wc_mass_based(900.0, record.water_mass_g(), 0.25).unwrap();
        assert_eq!(est.mass_based, Some(expected));
        assert_eq!(est.corrected, est.gamma * est.theo);
    }
}
