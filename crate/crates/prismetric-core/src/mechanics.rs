//! Load-displacement mechanics: stress-strain conversion for three-point
//! bending and compression, windowed Young's-modulus extraction, and the
//! moving average used for group trends.
//!
//! The bending formulas assume linear elastic behaviour and small
//! deflections; they are applied pointwise without correction. Young's
//! modulus comes from the best of all length-`window_len` regression
//! windows ending at or before the peak stress, with a slope floor that
//! keeps flat preload segments from winning on R² alone.

use alloc::vec::Vec;
use thiserror::Error;

/// Errors from mechanics processing.
#[derive(Debug, Error, PartialEq)]
pub enum MechanicsError {
    #[error("load record keeps only {kept} samples after preprocessing; need at least 2")]
    TooFewSamples { kept: usize },
    #[error("{name} must be positive, got {value}")]
    NonPositiveDimension { name: &'static str, value: f64 },
    #[error("curve has {len} points, shorter than the {window} point window")]
    CurveTooShort { len: usize, window: usize },
    #[error("peak stress at index {peak_index} leaves no room for a {window} point window")]
    PeakBeforeWindow { peak_index: usize, window: usize },
    #[error("stress is constant in every window; R² is undefined")]
    DegenerateStress,
    #[error("no window shows a positive slope; modulus would not be positive")]
    NoRisingSegment,
}

/// Preprocessed machine record: ordered `(displacement mm, force N)`
/// samples, shifted so the first sample is `(0, 0)` and filtered to
/// non-decreasing displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadRecord {
    samples: Vec<(f64, f64)>,
}

impl LoadRecord {
    /// Builds a record from raw machine samples.
    ///
    /// The first raw sample becomes the origin (fixture slack shows up as
    /// offset, not slope); samples whose displacement falls below the
    /// running maximum are dropped. Fewer than two surviving samples is an
    /// error.
    pub fn new(raw: &[(f64, f64)]) -> Result<Self, MechanicsError> {
        let mut samples = Vec::with_capacity(raw.len());
        if let Some(&(d0, f0)) = raw.first() {
            let mut last = f64::NEG_INFINITY;
            for &(d, f) in raw {
                let d = d - d0;
                if d >= last {
                    samples.push((d, f - f0));
                    last = d;
                }
            }
        }
        if samples.len() < 2 {
            return Err(MechanicsError::TooFewSamples {
                kept: samples.len(),
            });
        }
        Ok(LoadRecord { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Three-point bending geometry. Width and height are the measured
/// per-specimen dimensions, not nominal constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendingSetup {
    pub span_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl BendingSetup {
    /// Standard support span.
    pub const DEFAULT_SPAN_MM: f64 = 120.0;

    pub fn new(span_mm: f64, width_mm: f64, height_mm: f64) -> Result<Self, MechanicsError> {
        for (name, value) in [
            ("span", span_mm),
            ("width", width_mm),
            ("height", height_mm),
        ] {
            if !(value > 0.0) {
                return Err(MechanicsError::NonPositiveDimension { name, value });
            }
        }
        Ok(BendingSetup {
            span_mm,
            width_mm,
            height_mm,
        })
    }

    /// Setup with the default 120 mm span.
    pub fn with_default_span(width_mm: f64, height_mm: f64) -> Result<Self, MechanicsError> {
        Self::new(Self::DEFAULT_SPAN_MM, width_mm, height_mm)
    }
}

/// Compression geometry: loaded cross-section and specimen height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionSetup {
    pub area_mm2: f64,
    pub height_mm: f64,
}

impl CompressionSetup {
    pub fn new(area_mm2: f64, height_mm: f64) -> Result<Self, MechanicsError> {
        for (name, value) in [("area", area_mm2), ("height", height_mm)] {
            if !(value > 0.0) {
                return Err(MechanicsError::NonPositiveDimension { name, value });
            }
        }
        Ok(CompressionSetup { area_mm2, height_mm })
    }
}

/// Stress-strain curve: strain is dimensionless, stress in MPa, same
/// ordering as the source record.
#[derive(Debug, Clone, PartialEq)]
pub struct StressStrainCurve {
    pub strain: Vec<f64>,
    pub stress_mpa: Vec<f64>,
}

impl StressStrainCurve {
    pub fn len(&self) -> usize {
        self.strain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strain.is_empty()
    }
}

/// Outer-fibre bending stress and strain:
/// `σ = 3FL/(2bh²)`, `ε = 6hδ/L²`.
pub fn bending_stress_strain(record: &LoadRecord, setup: &BendingSetup) -> StressStrainCurve {
    let l = setup.span_mm;
    let stress_per_n = 3.0 * l / (2.0 * setup.width_mm * setup.height_mm * setup.height_mm);
    let strain_per_mm = 6.0 * setup.height_mm / (l * l);
    let (strain, stress_mpa) = record
        .samples()
        .iter()
        .map(|&(d, f)| (d * strain_per_mm, f * stress_per_n))
        .unzip();
    StressStrainCurve { strain, stress_mpa }
}

/// Uniaxial compression stress and strain: `σ = F/A`, `ε = δ/h`.
pub fn compression_stress_strain(
    record: &LoadRecord,
    setup: &CompressionSetup,
) -> StressStrainCurve {
    let (strain, stress_mpa) = record
        .samples()
        .iter()
        .map(|&(d, f)| (d / setup.height_mm, f / setup.area_mm2))
        .unzip();
    StressStrainCurve { strain, stress_mpa }
}

/// Parameters of the windowed modulus fit; every knob is a declared
/// default, not a measured constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Points per regression window.
    pub window_len: usize,
    /// Window step.
    pub stride: usize,
    /// Winner's slope must reach this fraction of the steepest windowed
    /// slope (excludes flat preload segments with deceptively high R²).
    pub slope_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            window_len: 100,
            stride: 1,
            slope_floor: 0.5,
        }
    }
}

/// Result of the windowed elastic fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticFit {
    pub young_modulus_mpa: f64,
    pub r_squared: f64,
    pub window_start: usize,
    pub window_len: usize,
    pub peak_stress_mpa: f64,
}

struct WindowFit {
    start: usize,
    slope: f64,
    r_squared: f64,
}

fn ols_window(strain: &[f64], stress: &[f64]) -> Option<(f64, f64)> {
    let n = strain.len() as f64;
    let mx = strain.iter().sum::<f64>() / n;
    let my = stress.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in strain.iter().zip(stress) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None; // constant strain or stress: slope or R² undefined
    }
    let slope = sxy / sxx;
    let r2 = ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0);
    Some((slope, r2))
}

/// Young's modulus by sliding-window regression.
///
/// Windows of `window_len` points slide with `stride` over the curve, the
/// last window ending at the peak-stress index. The winner maximises R²
/// among windows whose slope reaches `slope_floor` of the steepest window.
pub fn fit_young_modulus(
    curve: &StressStrainCurve,
    config: &FitConfig,
) -> Result<ElasticFit, MechanicsError> {
    let n = curve.len();
    let window = config.window_len;
    if n < window || window < 2 {
        return Err(MechanicsError::CurveTooShort { len: n, window });
    }
    let peak_index = curve
        .stress_mpa
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty curve");
    let peak_stress_mpa = curve.stress_mpa[peak_index];
    if peak_index + 1 < window {
        return Err(MechanicsError::PeakBeforeWindow { peak_index, window });
    }

    let last_start = peak_index + 1 - window;
    let stride = config.stride.max(1);
    let mut fits: Vec<WindowFit> = Vec::new();
    let mut start = 0;
    while start <= last_start {
        let strain = &curve.strain[start..start + window];
        let stress = &curve.stress_mpa[start..start + window];
        if let Some((slope, r_squared)) = ols_window(strain, stress) {
            fits.push(WindowFit {
                start,
                slope,
                r_squared,
            });
        }
        start += stride;
    }
    if fits.is_empty() {
        return Err(MechanicsError::DegenerateStress);
    }
    let max_slope = fits.iter().map(|f| f.slope).fold(f64::NEG_INFINITY, f64::max);
    if !(max_slope > 0.0) {
        return Err(MechanicsError::NoRisingSegment);
    }
    let floor = config.slope_floor * max_slope;
    let winner = fits
        .iter()
        .filter(|f| f.slope >= floor)
        .max_by(|a, b| a.r_squared.total_cmp(&b.r_squared).then(b.start.cmp(&a.start)))
        .expect("the max-slope window passes its own floor");
    Ok(ElasticFit {
        young_modulus_mpa: winner.slope,
        r_squared: winner.r_squared,
        window_start: winner.start,
        window_len: window,
        peak_stress_mpa,
    })
}

/// Centred moving average with shrinking windows at the boundaries.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let n = values.len();
    let before = (window - 1) / 2;
    let after = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n.saturating_sub(1));
            let slice = &values[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}
