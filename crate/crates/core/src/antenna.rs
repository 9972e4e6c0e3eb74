//! Rectangular microstrip patch: transmission-line design equations,
//! far-field pattern and gain normalization.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::quadrature::GaussLegendre;
use crate::units::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstrateSpec {
    /// Relative permittivity of the substrate.
    pub eps_r: f64,
    /// Resonant frequency in Hz.
    pub frequency: f64,
    /// Substrate height in meters.
    pub height: f64,
}

impl Default for SubstrateSpec {
    fn default() -> Self {
        SubstrateSpec {
            eps_r: 10.2,
            frequency: 2.0e9,
            height: 1.588e-3,
        }
    }
}

impl SubstrateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 1.0 && self.eps_r.is_finite()) {
            return Err(Error::Config(format!(
                "eps_r must be >= 1, got {}",
                self.eps_r
            )));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::Config(format!(
                "frequency must be positive, got {}",
                self.frequency
            )));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Config(format!(
                "substrate height must be positive, got {}",
                self.height
            )));
        }
        Ok(())
    }
}

/// Which patch dimension enters the `X` argument of the pattern.
///
/// `SubstrateHeight` is the default; `PatchLength` is the common textbook
/// variant and is kept only for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApertureAxis {
    #[default]
    SubstrateHeight,
    PatchLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchDims {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub eps_reff: f64,
    pub delta_l: f64,
    pub lambda: f64,
    /// Amplitude normalization; `alpha^2` is the gain scale.
    pub alpha: f64,
    pub aperture: ApertureAxis,
}

impl PatchDims {
    fn x_dimension(&self) -> f64 {
        match self.aperture {
            ApertureAxis::SubstrateHeight => self.height,
            ApertureAxis::PatchLength => self.length,
        }
    }

    /// `(pi a / lambda, pi W / lambda)`, the scales of the X and Z arguments.
    pub fn pattern_scales(&self) -> (f64, f64) {
        (
            PI * self.x_dimension() / self.lambda,
            PI * self.width / self.lambda,
        )
    }

    pub fn alpha_squared(&self) -> f64 {
        self.alpha * self.alpha
    }
}

/// `sin(t) / t` with the removable singularity filled in.
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1.0 {
        sinc_series(t)
    } else {
        t.sin() / t
    }
}

/// Taylor series of `sin(t) / t` through t^18; truncation error below 3e-20
/// on |t| < 1.
#[inline(always)]
fn sinc_series(t: f64) -> f64 {
    const INV: [f64; 9] = [
        1.0 / 6.0,
        1.0 / 20.0,
        1.0 / 42.0,
        1.0 / 72.0,
        1.0 / 110.0,
        1.0 / 156.0,
        1.0 / 210.0,
        1.0 / 272.0,
        1.0 / 342.0,
    ];
    let t2 = t * t;
    INV.iter().rev().fold(1.0, |acc, c| 1.0 - t2 * c * acc)
}

pub fn design_patch(spec: &SubstrateSpec) -> Result<PatchDims> {
    design_patch_with(spec, ApertureAxis::default())
}

pub fn design_patch_with(spec: &SubstrateSpec, aperture: ApertureAxis) -> Result<PatchDims> {
    spec.validate()?;
    let SubstrateSpec {
        eps_r,
        frequency: f,
        height: h,
    } = *spec;
    let c = SPEED_OF_LIGHT;

    let width = c / (2.0 * f) * (2.0 / (eps_r + 1.0)).sqrt();
    let eps_reff = (eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 * (1.0 + 12.0 * h / width).powf(-0.5);
    let wh = width / h;
    let delta_l = h * 0.412 * (eps_reff + 0.3) * (wh + 0.264) / ((eps_reff - 0.258) * (wh + 0.8));
    let length = c / (2.0 * f * eps_reff.sqrt()) - 2.0 * delta_l;
    if !(length > 0.0) {
        return Err(Error::Design(format!(
            "substrate {spec:?} yields non-positive patch length {length:.3e} m"
        )));
    }

    let mut dims = PatchDims {
        width,
        length,
        height: h,
        eps_reff,
        delta_l,
        lambda: c / f,
        alpha: 1.0,
        aperture,
    };
    dims.alpha = normalization_alpha(&dims)?;
    Ok(dims)
}

/// `sin(theta) sinc(X) sinc(Z)` in the front hemisphere, zero behind the patch.
pub fn pattern_factor(theta: f64, phi: f64, dims: &PatchDims) -> f64 {
    if phi.abs() > FRAC_PI_2 {
        return 0.0;
    }
    let (ax, az) = dims.pattern_scales();
    let (st, ct) = theta.sin_cos();
    st * sinc(ax * st * phi.cos()) * sinc(az * ct)
}

/// Power gain `alpha^2 * pattern_factor^2`.
pub fn gain(theta: f64, phi: f64, dims: &PatchDims) -> f64 {
    let p = pattern_factor(theta, phi, dims);
    dims.alpha_squared() * p * p
}

/// Number of Gauss-Legendre nodes per axis for the normalization integral.
pub const NORMALIZATION_ORDER: usize = 256;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// `integral of amplitude(theta, phi)^2 sin(theta)` over the front hemisphere
/// `theta in [0, pi]`, `phi in [-pi/2, pi/2]`, on an `order x order` rule.
pub fn front_hemisphere_power(order: usize, amplitude: impl Fn(f64, f64) -> f64) -> f64 {
    GaussLegendre::new(order).integrate_2d((0.0, PI), (-FRAC_PI_2, FRAC_PI_2), |t, p| {
        let a = amplitude(t, p);
        a * a * t.sin()
    })
}

/// Integral of the squared pattern factor times `sin(theta)`, evaluated at
/// the default order and checked against twice that order.
pub fn pattern_power_integral(dims: &PatchDims) -> Result<f64> {
    let amp = |t: f64, p: f64| pattern_factor(t, p, dims);
    let coarse = front_hemisphere_power(NORMALIZATION_ORDER, amp);
    let fine = front_hemisphere_power(2 * NORMALIZATION_ORDER, amp);
    let change = ((fine - coarse) / fine).abs();
    if !(change <= NORMALIZATION_TOLERANCE) {
        return Err(Error::Quadrature {
            achieved: change,
            tolerance: NORMALIZATION_TOLERANCE,
        });
    }
    Ok(fine)
}

/// `alpha = sqrt(4 pi / I)` with `I` the pattern power integral.
pub fn normalization_alpha(dims: &PatchDims) -> Result<f64> {
    Ok((4.0 * PI / pattern_power_integral(dims)?).sqrt())
}

/// Far-field amplitude model of a transmit element.
pub trait Radiator: Sync {
    fn wavelength(&self) -> f64;

    /// `sqrt(G)` toward a point at local coordinates `local` and distance `r`
    /// (local +x is the boresight, +z the up axis).
    fn field_amplitude(&self, local: Vec3, r: f64) -> f64;

    /// `field_amplitude` over many points given as coordinate planes.
    fn field_amplitudes(&self, x: &[f64], y: &[f64], z: &[f64], r: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = self.field_amplitude(Vec3::new(x[i], y[i], z[i]), r[i]);
        }
    }
}

impl Radiator for PatchDims {
    fn wavelength(&self) -> f64 {
        self.lambda
    }

    fn field_amplitude(&self, local: Vec3, r: f64) -> f64 {
        if local.x < 0.0 {
            return 0.0;
        }
        let (ax, az) = self.pattern_scales();
        let sin_theta = (local.x * local.x + local.y * local.y).sqrt() / r;
        // sin(theta) cos(phi) = x / r, cos(theta) = z / r
        self.alpha * sin_theta * sinc(ax * local.x / r) * sinc(az * local.z / r)
    }

    fn field_amplitudes(&self, x: &[f64], y: &[f64], z: &[f64], r: &[f64], out: &mut [f64]) {
        let (ax, az) = self.pattern_scales();
        if ax >= 1.0 || az >= 1.0 {
            for i in 0..out.len() {
                out[i] = self.field_amplitude(Vec3::new(x[i], y[i], z[i]), r[i]);
            }
            return;
        }
        // Both sinc arguments stay inside the series range, so the loop is
        // branch-free and vectorizes.
        let n = out.len();
        let (x, y, z, r) = (&x[..n], &y[..n], &z[..n], &r[..n]);
        for i in 0..n {
            let inv = 1.0 / r[i];
            let sin_theta = (x[i] * x[i] + y[i] * y[i]).sqrt() * inv;
            let a = self.alpha
                * sin_theta
                * sinc_series(ax * x[i] * inv)
                * sinc_series(az * z[i] * inv);
            out[i] = if x[i] < 0.0 { 0.0 } else { a };
        }
    }
}

/// Unit-gain element radiating equally in all directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isotropic {
    pub lambda: f64,
}

impl Radiator for Isotropic {
    fn wavelength(&self) -> f64 {
        self.lambda
    }

    fn field_amplitude(&self, _local: Vec3, _r: f64) -> f64 {
        1.0
    }
}
