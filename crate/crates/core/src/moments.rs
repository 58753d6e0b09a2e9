//! Power-moment absorbance summaries along view rays.
//!
//! Every sample on a ray contributes its absorbance `A` weighted by powers of
//! its warped depth `z` to a five-component vector `b`, so `b[i] = sum(z^i * A)`
//! and `b[0]` is the total absorbance of the ray. Because the vectors add
//! componentwise, partial sums taken over any disjoint split of the samples
//! combine into the full-ray summary by plain addition, which is what makes
//! the two-stage compositing pipeline work over arbitrary data partitions.
//!
//! Reconstruction goes the other way: given a moment vector and a query depth
//! it estimates how much absorbance lies in front of that depth and returns
//! the corresponding transmittance. The estimate comes from the canonical
//! three-point measure representation anchored at the query depth, obtained
//! by an LDL^T factorization of the 3x3 Hankel matrix of the normalized
//! moments and a quadratic root solve.

use crate::error::{Error, Result};

pub const MOMENT_COUNT: usize = 5;

/// Default fraction of the smoothing measure mixed into the normalized
/// moments before factorization.
pub const DEFAULT_MOMENT_BIAS: f64 = 6.0e-4;
/// Default weight given to absorbance sitting exactly at the query depth.
pub const DEFAULT_OVERESTIMATION: f64 = 0.3;
/// Default cap applied to any single sample's absorbance.
pub const DEFAULT_ABSORBANCE_MAX: f64 = 10.0;
/// Normalized moments of the smoothing measure used for biasing. This is the
/// maximum-entropy choice for four power moments on [-1, 1]: zero odd moments
/// and flat even ones.
pub const DEFAULT_BIAS_VECTOR: [f64; 4] = [0.0, 0.375, 0.0, 0.375];

// Pivots this far below zero cannot be rounding noise of O(1) normalized
// moments; the input is treated as invalid rather than clamped.
const PIVOT_NEGATIVE_TOL: f64 = -1.0e-7;
// Pivots between the negative tolerance and this floor are noise around a
// rank-deficient matrix; clamping keeps the solve on the boundary limit.
const PIVOT_FLOOR: f64 = 1.0e-15;
// Below this magnitude the quadratic's leading coefficient is treated as
// zero and the root solve degrades to the linear case.
const QUADRATIC_COEFF_EPS: f64 = 1.0e-100;
// Canonical nodes closer than this to the query depth (or to each other)
// collapse onto it; the divided differences would otherwise divide by
// near-zero separations.
const NODE_MERGE_EPS: f64 = 1.0e-9;
// Raw far-plane absorbance fractions below this are not used for
// renormalization; they only occur when essentially all mass sits at the
// far plane itself.
const FAR_FRACTION_MIN: f64 = 1.0e-12;

/// Power moments of absorbance over warped depth, `b[i] = sum(z^i * A)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentVector(pub [f64; MOMENT_COUNT]);

impl MomentVector {
    pub const ZERO: MomentVector = MomentVector([0.0; MOMENT_COUNT]);

    /// Total absorbance along the ray.
    pub fn total_absorbance(&self) -> f64 {
        self.0[0]
    }

    pub fn is_zero(&self) -> bool {
        self.0[0] == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Folds one sample into the summary. `transmittance` is the sample's own
    /// transparency in [0, 1] (zero is allowed and saturates at
    /// `absorbance_max`); `warped_depth` must already lie in [-1, 1].
    pub fn add_sample(&mut self, warped_depth: f64, transmittance: f64, absorbance_max: f64) {
        assert!(
            (-1.0..=1.0).contains(&warped_depth),
            "warped depth {warped_depth} outside [-1, 1]"
        );
        assert!(
            (0.0..=1.0).contains(&transmittance),
            "sample transmittance {transmittance} outside [0, 1]"
        );
        let absorbance = (-transmittance.ln()).min(absorbance_max);
        let mut weight = absorbance;
        for b in &mut self.0 {
            *b += weight;
            weight *= warped_depth;
        }
    }
}

impl std::ops::Add for MomentVector {
    type Output = MomentVector;
    fn add(self, o: MomentVector) -> MomentVector {
        let mut out = self;
        out += o;
        out
    }
}

impl std::ops::AddAssign for MomentVector {
    fn add_assign(&mut self, o: MomentVector) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

/// Logarithmic depth warp mapping camera distances in [near, far] onto
/// [-1, 1]. Distances outside the range clamp to the endpoints, and the
/// endpoints map exactly so downstream range checks never trip.
#[derive(Clone, Copy, Debug)]
pub struct DepthBounds {
    near: f64,
    far: f64,
    ln_near: f64,
    ln_span: f64,
}

impl DepthBounds {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !near.is_finite() || !far.is_finite() || near <= 0.0 || far <= near {
            return Err(Error::InvalidDepthBounds { near, far });
        }
        let ln_near = near.ln();
        Ok(DepthBounds {
            near,
            far,
            ln_near,
            ln_span: far.ln() - ln_near,
        })
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn warp(&self, distance: f64) -> f64 {
        let d = distance.clamp(self.near, self.far);
        2.0 * ((d.ln() - self.ln_near) / self.ln_span) - 1.0
    }
}

/// Knobs of the reconstruction. All fields are validated on construction.
#[derive(Clone, Copy, Debug)]
pub struct ReconstructionParams {
    moment_bias: f64,
    overestimation: f64,
    absorbance_max: f64,
    bias_vector: [f64; 4],
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        ReconstructionParams {
            moment_bias: DEFAULT_MOMENT_BIAS,
            overestimation: DEFAULT_OVERESTIMATION,
            absorbance_max: DEFAULT_ABSORBANCE_MAX,
            bias_vector: DEFAULT_BIAS_VECTOR,
        }
    }
}

impl ReconstructionParams {
    pub fn new(moment_bias: f64, overestimation: f64, absorbance_max: f64) -> Result<Self> {
        if !moment_bias.is_finite() || !(0.0..1.0).contains(&moment_bias) {
            return Err(Error::InvalidParameter(format!(
                "moment bias {moment_bias} outside [0, 1)"
            )));
        }
        if !overestimation.is_finite() || !(0.0..=1.0).contains(&overestimation) {
            return Err(Error::InvalidParameter(format!(
                "overestimation {overestimation} outside [0, 1]"
            )));
        }
        if !absorbance_max.is_finite() || absorbance_max <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "absorbance max {absorbance_max} must be positive and finite"
            )));
        }
        Ok(ReconstructionParams {
            moment_bias,
            overestimation,
            absorbance_max,
            bias_vector: DEFAULT_BIAS_VECTOR,
        })
    }

    pub fn with_bias_vector(mut self, bias_vector: [f64; 4]) -> Result<Self> {
        if bias_vector.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "bias vector entries must lie in [0, 1]".into(),
            ));
        }
        self.bias_vector = bias_vector;
        Ok(self)
    }

    pub fn moment_bias(&self) -> f64 {
        self.moment_bias
    }

    pub fn overestimation(&self) -> f64 {
        self.overestimation
    }

    pub fn absorbance_max(&self) -> f64 {
        self.absorbance_max
    }

    pub fn bias_vector(&self) -> [f64; 4] {
        self.bias_vector
    }
}

/// Normalizes `b1..b4` by the total absorbance and blends them toward the
/// smoothing measure. Requires `b0 > 0`.
pub fn bias_moments(moments: &MomentVector, params: &ReconstructionParams) -> [f64; 4] {
    biased_normalized(moments, params.bias_vector, params.moment_bias)
}

fn biased_normalized(moments: &MomentVector, bias_vector: [f64; 4], bias: f64) -> [f64; 4] {
    let b0 = moments.0[0];
    assert!(b0 > 0.0, "cannot normalize moments with b0 = {b0}");
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (1.0 - bias) * (moments.0[i + 1] / b0) + bias * bias_vector[i];
    }
    out
}

/// Reconstructs the transmittance a single time. Callers that evaluate many
/// depths against one moment vector should build a [`TransmittanceResolver`]
/// instead and reuse it; the factorization does not depend on the query.
pub fn reconstruct_transmittance(
    moments: &MomentVector,
    warped_depth: f64,
    params: &ReconstructionParams,
) -> Result<f64> {
    Ok(TransmittanceResolver::new(moments, params)?.transmittance_at(warped_depth))
}

/// Factorized per-pixel reconstruction state.
///
/// Construction normalizes and biases the moments, factorizes the Hankel
/// matrix, and evaluates the raw absorbance fraction at the far plane. Query
/// evaluations then cost one forward/backward substitution and a quadratic
/// root solve. Fractions are renormalized by the far-plane value so that the
/// reconstruction returns exactly `exp(-b0)` behind all mass; the raw
/// canonical representation deliberately parks some weight on the query
/// anchor and would otherwise under-report absorbance there.
#[derive(Clone, Copy, Debug)]
pub struct TransmittanceResolver {
    total: f64,
    b1: f64,
    b2: f64,
    l21: f64,
    d11: f64,
    d22: f64,
    overestimation: f64,
    far_fraction: f64,
}

impl TransmittanceResolver {
    pub fn new(moments: &MomentVector, params: &ReconstructionParams) -> Result<Self> {
        if !moments.is_finite() {
            return Err(Error::NonFiniteMoments);
        }
        let total = moments.0[0];
        assert!(total >= 0.0, "total absorbance {total} is negative");
        if total == 0.0 {
            return Ok(TransmittanceResolver {
                total: 0.0,
                b1: 0.0,
                b2: 0.0,
                l21: 0.0,
                d11: 1.0,
                d22: 1.0,
                overestimation: params.overestimation,
                far_fraction: 1.0,
            });
        }
        Self::factorize(moments, params, params.moment_bias).or_else(|_| {
            let retry = (params.moment_bias * 4.0).min(1.0);
            Self::factorize(moments, params, retry)
        })
    }

    fn factorize(
        moments: &MomentVector,
        params: &ReconstructionParams,
        bias: f64,
    ) -> Result<Self> {
        let [b1, b2, b3, b4] = biased_normalized(moments, params.bias_vector, bias);
        let d11 = b2 - b1 * b1;
        if d11 < PIVOT_NEGATIVE_TOL {
            return Err(Error::DegenerateMoments);
        }
        let d11 = d11.max(PIVOT_FLOOR);
        let l21_num = b3 - b1 * b2;
        let l21 = l21_num / d11;
        let d22 = (b4 - b2 * b2) - l21 * l21_num;
        if d22 < PIVOT_NEGATIVE_TOL {
            return Err(Error::DegenerateMoments);
        }
        let d22 = d22.max(PIVOT_FLOOR);
        let mut resolver = TransmittanceResolver {
            total: moments.0[0],
            b1,
            b2,
            l21,
            d11,
            d22,
            overestimation: params.overestimation,
            far_fraction: 1.0,
        };
        let far = resolver.raw_fraction(1.0);
        if far > FAR_FRACTION_MIN {
            resolver.far_fraction = far;
        }
        Ok(resolver)
    }

    pub fn total_absorbance(&self) -> f64 {
        self.total
    }

    /// Transmittance at a warped depth in [-1, 1]. Always within [0, 1];
    /// empty pixels return exactly 1.
    pub fn transmittance_at(&self, warped_depth: f64) -> f64 {
        assert!(
            (-1.0..=1.0).contains(&warped_depth),
            "warped depth {warped_depth} outside [-1, 1]"
        );
        if self.total == 0.0 {
            return 1.0;
        }
        let fraction = (self.raw_fraction(warped_depth) / self.far_fraction).clamp(0.0, 1.0);
        (-(self.total * fraction)).exp().clamp(0.0, 1.0)
    }

    /// Fraction of the total absorbance in front of `z`, before far-plane
    /// renormalization.
    fn raw_fraction(&self, z: f64) -> f64 {
        // Solve B c = (1, z, z^2)^T with the cached LDL^T factors; the roots
        // of c2 x^2 + c1 x + c0 are the canonical support points besides z.
        let mut c1 = z - self.b1;
        let mut c2 = z * z - self.b2 - self.l21 * c1;
        c1 /= self.d11;
        c2 /= self.d22;
        c1 -= self.l21 * c2;
        let c0 = 1.0 - self.b1 * c1 - self.b2 * c2;

        if c2.abs() < QUADRATIC_COEFF_EPS {
            if c1.abs() < QUADRATIC_COEFF_EPS {
                // Constant polynomial: the representation collapses onto the
                // query depth itself.
                return self.overestimation;
            }
            return self.two_point_fraction(z, -c0 / c1);
        }

        let p = c1 / c2;
        let q = c0 / c2;
        let disc = (0.25 * p * p - q).max(0.0);
        let root = disc.sqrt();
        let z1 = -0.5 * p - root;
        let z2 = -0.5 * p + root;

        let near1 = (z1 - z).abs() < NODE_MERGE_EPS;
        let near2 = (z2 - z).abs() < NODE_MERGE_EPS;
        if near1 && near2 {
            return self.overestimation;
        }
        if near1 {
            return self.two_point_fraction(z, z2);
        }
        if near2 {
            return self.two_point_fraction(z, z1);
        }
        if (z2 - z1).abs() < NODE_MERGE_EPS {
            return self.two_point_fraction(z, 0.5 * (z1 + z2));
        }

        // Quadratic Newton interpolation of the step weights over {z, z1, z2},
        // then integration against the measure via its first three moments.
        let f0 = self.overestimation;
        let f1 = if z1 < z { 1.0 } else { 0.0 };
        let f2 = if z2 < z { 1.0 } else { 0.0 };
        let f01 = (f1 - f0) / (z1 - z);
        let f12 = (f2 - f1) / (z2 - z1);
        let f012 = (f12 - f01) / (z2 - z);
        let poly2 = f012;
        let poly1 = f01 - f012 * (z1 + z);
        let poly0 = f0 - (f01 - f012 * z1) * z;
        (poly0 + poly1 * self.b1 + poly2 * self.b2).clamp(0.0, 1.0)
    }

    /// Degenerate two-node representation {z, other} with weights matched to
    /// the zeroth and first moments.
    fn two_point_fraction(&self, z: f64, other: f64) -> f64 {
        let denom = other - z;
        if denom.abs() < NODE_MERGE_EPS {
            return self.overestimation;
        }
        let w_other = ((self.b1 - z) / denom).clamp(0.0, 1.0);
        let w_anchor = 1.0 - w_other;
        let below = if other < z { w_other } else { 0.0 };
        (below + self.overestimation * w_anchor).clamp(0.0, 1.0)
    }
}
