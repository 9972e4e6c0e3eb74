//! Line-of-sight channel matrices and least-squares pilot estimates.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::antenna::Radiator;
use crate::error::{Error, Result};
use crate::geometry::{AntennaPose, Topology, Vec3};

/// `M x K` complex gains, stored column-major so that each user's channel
/// vector is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    m: usize,
    k: usize,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn zeros(m: usize, k: usize) -> Self {
        ChannelMatrix {
            m,
            k,
            data: vec![Complex64::new(0.0, 0.0); m * k],
        }
    }

    /// Builds from column-major data.
    pub fn from_columns(m: usize, k: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * k {
            return Err(Error::Config(format!(
                "{} entries do not form a {m}x{k} matrix",
                data.len()
            )));
        }
        Ok(ChannelMatrix { m, k, data })
    }

    pub fn from_fn(m: usize, k: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(m * k);
        for user in 0..k {
            for ant in 0..m {
                data.push(f(ant, user));
            }
        }
        ChannelMatrix { m, k, data }
    }

    pub fn m_count(&self) -> usize {
        self.m
    }

    pub fn k_count(&self) -> usize {
        self.k
    }

    pub fn get(&self, m: usize, k: usize) -> Complex64 {
        self.data[k * self.m + m]
    }

    pub fn set(&mut self, m: usize, k: usize, v: Complex64) {
        self.data[k * self.m + m] = v;
    }

    /// Channel vector of user `k` (column `k`).
    pub fn user(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn scaled(&self, s: f64) -> ChannelMatrix {
        ChannelMatrix {
            m: self.m,
            k: self.k,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// CSV with a `M,K` header line pair followed by `m,k,re,im` rows at 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "M,K")?;
        writeln!(out, "{},{}", self.m, self.k)?;
        writeln!(out, "m,k,re,im")?;
        for m in 0..self.m {
            for k in 0..self.k {
                let v = self.get(m, k);
                writeln!(out, "{m},{k},{:.16e},{:.16e}", v.re, v.im)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse(format!("channel CSV ended before {what}")))
        };
        if next("the header")?.trim() != "M,K" {
            return Err(Error::Parse("channel CSV must start with 'M,K'".into()));
        }
        let dims = next("the dimensions")?;
        let (m, k) = dims
            .trim()
            .split_once(',')
            .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::Parse(format!("bad dimension line '{dims}'")))?;
        if next("the column header")?.trim() != "m,k,re,im" {
            return Err(Error::Parse("expected column header 'm,k,re,im'".into()));
        }
        let mut g = ChannelMatrix::zeros(m, k);
        let mut seen = vec![false; m * k];
        for (n, line) in std::iter::from_fn(|| next("").ok()).enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("bad channel row {}: '{line}'", n + 4));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let (i, j): (usize, usize) = (
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
            );
            let (re, im): (f64, f64) = (
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            );
            if i >= m || j >= k || seen[j * m + i] {
                return Err(bad());
            }
            seen[j * m + i] = true;
            g.set(i, j, Complex64::new(re, im));
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse(format!(
                "channel CSV is missing entries of the {m}x{k} matrix"
            )));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Pilot length in symbols.
    pub tau_p: usize,
    /// Coherence block length in symbols.
    pub tau_c: usize,
    /// Per-user uplink pilot power scale, watts.
    pub rho_ul: f64,
    /// Receiver noise power, watts.
    pub sigma2: f64,
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_p == 0 || self.tau_c <= self.tau_p {
            return Err(Error::Config(format!(
                "need 0 < tau_p < tau_c, got tau_p = {}, tau_c = {}",
                self.tau_p, self.tau_c
            )));
        }
        if !(self.rho_ul > 0.0 && self.rho_ul.is_finite()) {
            return Err(Error::Config(format!(
                "rho_ul must be positive, got {}",
                self.rho_ul
            )));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!(
                "noise power must be non-negative, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, k: usize) -> Result<()> {
        self.validate()?;
        if self.tau_p < k {
            return Err(Error::Config(format!(
                "{k} users need orthogonal pilots of length >= {k}, got tau_p = {}",
                self.tau_p
            )));
        }
        Ok(())
    }

    /// Per-entry variance of the LS estimation error, `sigma^2 / (rho_ul tau_p)`.
    pub fn error_variance(&self) -> f64 {
        self.sigma2 / (self.rho_ul * self.tau_p as f64)
    }

    /// Fraction of the block left for data, `1 - tau_p / tau_c`.
    pub fn prelog(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_c as f64
    }
}

/// Free-space gain from one element to a receiver position:
/// `(lambda / 4 pi r) * exp(-j 2 pi r / lambda) * sqrt(G)`.
pub fn los_gain<R: Radiator + ?Sized>(
    pose: &AntennaPose,
    user: Vec3,
    element: &R,
) -> Result<Complex64> {
    gain_from_local(pose.to_local(user), element.wavelength(), element)
}

#[inline]
fn gain_from_local<R: Radiator + ?Sized>(
    local: Vec3,
    lambda: f64,
    element: &R,
) -> Result<Complex64> {
    let r = local.norm();
    if !(r > 0.0) {
        return Err(Error::Geometry("user coincides with an antenna".into()));
    }
    let amp = element.field_amplitude(local, r);
    if amp == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let magnitude = lambda / (4.0 * PI * r) * amp;
    let (s, c) = sin_cos_turns(-(r / lambda).fract());
    Ok(Complex64::new(magnitude * c, magnitude * s))
}

/// `(sin, cos)` of `2 pi t`: reduced to the nearest quarter turn, then Taylor
/// series on `[-pi/4, pi/4]` (truncation error below 1e-19). Branch-free so
/// that loops over it vectorize.
#[inline(always)]
pub fn sin_cos_turns(t: f64) -> (f64, f64) {
    let quarter = (4.0 * t).round();
    let a = TAU * (t - quarter / 4.0);
    let a2 = a * a;
    let mut s = 1.0;
    let mut c = 1.0;
    // sin a = a (1 - a^2/(2*3) (1 - a^2/(4*5) ...)), cos a = 1 - a^2/(1*2) (1 - ...)
    for i in (0..9).rev() {
        s = 1.0 - a2 * s * INV_SIN[i];
        c = 1.0 - a2 * c * INV_COS[i];
    }
    let s = a * s;
    // quadrant q: (sin, cos) = (s, c), (c, -s), (-s, -c), (-c, s)
    let q = (quarter as i64) & 3;
    let (s, c) = if q & 1 == 1 { (c, s) } else { (s, c) };
    let s = if q & 2 != 0 { -s } else { s };
    let c = if (q + 1) & 2 != 0 { -c } else { c };
    (s, c)
}

const INV_SIN: [f64; 9] = [
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

const INV_COS: [f64; 9] = [
    1.0 / 2.0,
    1.0 / 12.0,
    1.0 / 30.0,
    1.0 / 56.0,
    1.0 / 90.0,
    1.0 / 132.0,
    1.0 / 182.0,
    1.0 / 240.0,
    1.0 / 306.0,
];

pub fn channel_matrix<R: Radiator + ?Sized>(
    topology: &Topology,
    users: &[Vec3],
    element: &R,
) -> Result<ChannelMatrix> {
    if users.is_empty() {
        return Err(Error::Config("at least one user is required".into()));
    }
    let m = topology.poses.len();
    let lambda = element.wavelength();
    // Element frames as coordinate planes so the per-user loops vectorize.
    let plane =
        |f: &dyn Fn(&AntennaPose) -> f64| -> Vec<f64> { topology.poses.iter().map(f).collect() };
    let pos = [
        plane(&|p| p.position.x),
        plane(&|p| p.position.y),
        plane(&|p| p.position.z),
    ];
    let axes: Vec<[Vec<f64>; 3]> = [
        |p: &AntennaPose| p.boresight,
        |p: &AntennaPose| p.lateral(),
        |p: &AntennaPose| p.up,
    ]
    .iter()
    .map(|axis| {
        [
            plane(&|p| axis(p).x),
            plane(&|p| axis(p).y),
            plane(&|p| axis(p).z),
        ]
    })
    .collect();

    let mut local = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    let mut r = vec![0.0; m];
    let mut amp = vec![0.0; m];
    let mut data = Vec::with_capacity(m * users.len());
    for (k, &u) in users.iter().enumerate() {
        let d = [u.x, u.y, u.z];
        for (out, axis) in local.iter_mut().zip(&axes) {
            for i in 0..m {
                out[i] = (d[0] - pos[0][i]) * axis[0][i]
                    + (d[1] - pos[1][i]) * axis[1][i]
                    + (d[2] - pos[2][i]) * axis[2][i];
            }
        }
        let [x, y, z] = &local;
        for i in 0..m {
            r[i] = (x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt();
        }
        if let Some(i) = r.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::ChannelEntry {
                m: i,
                k,
                source: Box::new(Error::Geometry("user coincides with an antenna".into())),
            });
        }
        element.field_amplitudes(x, y, z, &r, &mut amp);
        data.extend(r.iter().zip(&amp).map(|(&r, &a)| {
            let magnitude = lambda / (4.0 * PI * r) * a;
            let (s, c) = sin_cos_turns(-(r / lambda).fract());
            Complex64::new(magnitude * c, magnitude * s)
        }));
    }
    ChannelMatrix::from_columns(m, users.len(), data)
}

/// One `CN(0, variance)` sample.
pub fn complex_gaussian<G: Rng + ?Sized>(rng: &mut G, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// De-spread pilot noise `W' = W_p Phi`: i.i.d. `CN(0, sigma^2)` entries,
/// drawn column-major.
pub fn despread_noise<G: Rng + ?Sized>(
    m: usize,
    k: usize,
    sigma2: f64,
    rng: &mut G,
) -> ChannelMatrix {
    ChannelMatrix::from_fn(m, k, |_, _| complex_gaussian(rng, sigma2))
}

/// LS estimate from a given de-spread noise matrix:
/// `G_hat = G + W' / sqrt(rho_ul tau_p)`.
pub fn estimate_from_despread(
    g: &ChannelMatrix,
    cfg: &PilotConfig,
    noise: &ChannelMatrix,
) -> Result<ChannelMatrix> {
    cfg.validate_for(g.k)?;
    assert_eq!((noise.m, noise.k), (g.m, g.k));
    let scale = 1.0 / (cfg.rho_ul * cfg.tau_p as f64).sqrt();
    let data = g
        .data
        .iter()
        .zip(&noise.data)
        .map(|(a, w)| a + w * scale)
        .collect();
    Ok(ChannelMatrix {
        m: g.m,
        k: g.k,
        data,
    })
}

/// LS channel estimate with freshly drawn pilot noise.
///
/// Because the pilot matrix has orthonormal columns, de-spread noise is
/// again i.i.d. `CN(0, sigma^2)`, so the pilot matrix is never formed here.
pub fn estimate_channel<G: Rng + ?Sized>(
    g: &ChannelMatrix,
    cfg: &PilotConfig,
    rng: &mut G,
) -> Result<ChannelMatrix> {
    cfg.validate_for(g.k)?;
    if cfg.sigma2 == 0.0 {
        return Ok(g.clone());
    }
    let noise = despread_noise(g.m, g.k, cfg.sigma2, rng);
    estimate_from_despread(g, cfg, &noise)
}

/// `tau_p x K` pilot matrix built from normalized DFT columns; its columns
/// are orthonormal whenever `K <= tau_p`. Row-major.
pub fn dft_pilot_matrix(tau_p: usize, k: usize) -> Vec<Complex64> {
    let norm = 1.0 / (tau_p as f64).sqrt();
    let mut phi = Vec::with_capacity(tau_p * k);
    for t in 0..tau_p {
        for u in 0..k {
            let ang = -TAU * ((t * u) % tau_p) as f64 / tau_p as f64;
            phi.push(Complex64::from_polar(norm, ang));
        }
    }
    phi
}

/// Reference pilot phase: forms `Y_p = sqrt(rho tau) G Phi^H + W_p`,
/// de-spreads with `Phi` and scales. `phi` is row-major `tau_p x K`,
/// `w_p` row-major `M x tau_p`.
pub fn estimate_with_pilots(
    g: &ChannelMatrix,
    cfg: &PilotConfig,
    phi: &[Complex64],
    w_p: &[Complex64],
) -> Result<ChannelMatrix> {
    cfg.validate_for(g.k)?;
    let (m, k, tp) = (g.m, g.k, cfg.tau_p);
    assert_eq!(phi.len(), tp * k);
    assert_eq!(w_p.len(), m * tp);
    let amp = (cfg.rho_ul * tp as f64).sqrt();

    let mut y = vec![Complex64::new(0.0, 0.0); m * tp];
    for i in 0..m {
        for t in 0..tp {
            let s: Complex64 = (0..k).map(|u| g.get(i, u) * phi[t * k + u].conj()).sum();
            y[i * tp + t] = amp * s + w_p[i * tp + t];
        }
    }
    Ok(ChannelMatrix::from_fn(m, k, |i, u| {
        let despread: Complex64 = (0..tp).map(|t| y[i * tp + t] * phi[t * k + u]).sum();
        despread / amp
    }))
}
