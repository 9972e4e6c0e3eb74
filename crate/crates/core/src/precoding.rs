//! Zero-forcing precoding: required transmit power, Monte Carlo SINR under
//! channel estimation errors, and per-user rates.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_channel, ChannelMatrix, PilotConfig};
use crate::error::{Error, Result};
use crate::linalg::{cross_transpose_conj, factor_guarded, gram_transpose_conj};
use crate::par::{map_indexed, stable_sum, Execution};
use crate::rng::{self, Stream};

/// Normalized ZF precoder `A = G_hat^* (G_hat^T G_hat^*)^{-1} / sqrt(trace)`.
#[derive(Debug, Clone)]
pub struct Precoder {
    m: usize,
    k: usize,
    /// Column-major `M x K`.
    columns: Vec<Complex64>,
    /// `Tr((G_hat^T G_hat^*)^{-1})`, the unnormalized transmit power.
    pub trace: f64,
    /// 1-norm condition estimate of the Gram matrix.
    pub condition: f64,
}

impl Precoder {
    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.columns[k * self.m..(k + 1) * self.m]
    }

    pub fn m_count(&self) -> usize {
        self.m
    }

    pub fn k_count(&self) -> usize {
        self.k
    }

    /// `sum_k ||a_k||^2`, one by construction.
    pub fn total_power(&self) -> f64 {
        self.columns.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Total downlink power, watts.
    pub rho_dl: f64,
    /// Noise power at each user, watts.
    pub sigma2: f64,
    /// Per-user spectral efficiency target, bit/s/Hz.
    pub target_se: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.rho_dl) && ok(self.sigma2) && ok(self.target_se)) {
            return Err(Error::Config(format!(
                "link budget values must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// SINR needed for the target: `2^se - 1`, or `2^(se / prelog) - 1` when
    /// the target is meant to include the pilot overhead.
    pub fn sinr_threshold(&self, prelog: Option<f64>) -> f64 {
        let se = match prelog {
            Some(p) => self.target_se / p,
            None => self.target_se,
        };
        se.exp2() - 1.0
    }
}

fn check_dims(g: &ChannelMatrix) -> Result<()> {
    if g.k_count() == 0 || g.m_count() < g.k_count() {
        return Err(Error::Config(format!(
            "zero forcing needs M >= K >= 1, got M = {}, K = {}",
            g.m_count(),
            g.k_count()
        )));
    }
    if !g.is_finite() {
        return Err(Error::Singular {
            condition: f64::NAN,
        });
    }
    Ok(())
}

/// `Tr((G^T G^*)^{-1})` and the Gram condition estimate, without forming
/// the precoder.
pub fn zf_trace(g: &ChannelMatrix) -> Result<(f64, f64)> {
    check_dims(g)?;
    let k = g.k_count();
    let gram = gram_transpose_conj(g.as_slice(), g.m_count(), k);
    let (chol, condition) = factor_guarded(&gram, k)?;
    Ok((chol.trace_inverse(), condition))
}

pub fn zf_precoder(g_hat: &ChannelMatrix) -> Result<Precoder> {
    check_dims(g_hat)?;
    let (m, k) = (g_hat.m_count(), g_hat.k_count());
    let gram = gram_transpose_conj(g_hat.as_slice(), m, k);
    let (chol, condition) = factor_guarded(&gram, k)?;
    let inv = chol.inverse();
    let trace: f64 = (0..k).map(|j| inv[j * k + j].re).sum();
    let scale = 1.0 / trace.sqrt();

    let mut columns = vec![Complex64::new(0.0, 0.0); m * k];
    for j in 0..k {
        let g_j = g_hat.user(j);
        for col in 0..k {
            let w = inv[j * k + col] * scale;
            let a = &mut columns[col * m..(col + 1) * m];
            for (dst, gv) in a.iter_mut().zip(g_j) {
                *dst += gv.conj() * w;
            }
        }
    }
    Ok(Precoder {
        m,
        k,
        columns,
        trace,
        condition,
    })
}

/// Downlink power that gives every user SINR `2^target_se - 1` under
/// perfect-CSI zero forcing: `(2^se - 1) sigma^2 Tr((G^T G^*)^{-1})`.
pub fn zf_required_power(g: &ChannelMatrix, budget: &LinkBudget) -> Result<f64> {
    zf_required_power_with(g, budget, None)
}

/// As [`zf_required_power`], optionally treating the target as including
/// the prelog factor.
pub fn zf_required_power_with(
    g: &ChannelMatrix,
    budget: &LinkBudget,
    prelog: Option<f64>,
) -> Result<f64> {
    budget.validate()?;
    let (trace, _) = zf_trace(g)?;
    Ok(budget.sinr_threshold(prelog) * budget.sigma2 * trace)
}

/// Monte Carlo moments of the effective gains `g_k^T a_i` over pilot-noise
/// realizations. They do not depend on the downlink power, so one set of
/// statistics serves a whole `rho_dl` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrStatistics {
    /// Sample mean of `g_k^T a_k`.
    pub signal_mean: Vec<Complex64>,
    /// Unbiased sample variance of `g_k^T a_k`.
    pub signal_var: Vec<f64>,
    /// Sample mean of `sum_{i != k} |g_k^T a_i|^2`.
    pub interference: Vec<f64>,
    pub realizations: usize,
    pub discarded: usize,
}

/// Largest tolerated share of singular draws.
pub const MAX_DISCARD_FRACTION: f64 = 0.10;

/// Per-realization diagonal gains and interference, or `None` when the
/// estimated Gram matrix was singular.
fn effective_gains(
    g_true: &ChannelMatrix,
    g_hat: &ChannelMatrix,
) -> Option<(Vec<Complex64>, Vec<f64>)> {
    let (m, k) = (g_true.m_count(), g_true.k_count());
    let gram = gram_transpose_conj(g_hat.as_slice(), m, k);
    let (chol, _) = factor_guarded(&gram, k).ok()?;
    let inv = chol.inverse();
    let trace: f64 = (0..k).map(|j| inv[j * k + j].re).sum();
    let scale = 1.0 / trace.sqrt();
    // G^T A = (G^T G_hat^*) inv / sqrt(trace)
    let cross = cross_transpose_conj(g_true.as_slice(), g_hat.as_slice(), m, k, k);
    let mut diag = Vec::with_capacity(k);
    let mut interference = Vec::with_capacity(k);
    for row in 0..k {
        let mut leak = 0.0;
        let mut own = Complex64::new(0.0, 0.0);
        for col in 0..k {
            let b: Complex64 = (0..k)
                .map(|j| cross[row * k + j] * inv[j * k + col])
                .sum::<Complex64>()
                * scale;
            if col == row {
                own = b;
            } else {
                leak += b.norm_sqr();
            }
        }
        diag.push(own);
        interference.push(leak);
    }
    Some((diag, interference))
}

/// Estimates the moments entering the SINR from `n_realizations`
/// independent pilot-noise draws. Draw `i` uses a stream derived from
/// `seed` and `i`, so the result is identical for every execution mode.
pub fn sinr_statistics(
    g_true: &ChannelMatrix,
    cfg: &PilotConfig,
    n_realizations: usize,
    seed: u64,
    exec: Execution,
) -> Result<SinrStatistics> {
    check_dims(g_true)?;
    cfg.validate_for(g_true.k_count())?;
    if n_realizations < 2 {
        return Err(Error::Config(format!(
            "need at least 2 realizations, got {n_realizations}"
        )));
    }
    let k = g_true.k_count();
    let draws = map_indexed(exec, n_realizations, |i| -> Result<_> {
        let mut r = rng::stream(seed, Stream::Realization, &[i as u64]);
        let g_hat = estimate_channel(g_true, cfg, &mut r)?;
        Ok(effective_gains(g_true, &g_hat))
    });
    let mut kept = Vec::with_capacity(n_realizations);
    for d in draws {
        if let Some(v) = d? {
            kept.push(v);
        }
    }
    let discarded = n_realizations - kept.len();
    if discarded as f64 > MAX_DISCARD_FRACTION * n_realizations as f64 || kept.len() < 2 {
        return Err(Error::StatisticalValidity {
            discarded,
            total: n_realizations,
            limit_percent: MAX_DISCARD_FRACTION * 100.0,
        });
    }

    let n = kept.len() as f64;
    let mut signal_mean = Vec::with_capacity(k);
    let mut signal_var = Vec::with_capacity(k);
    let mut interference = Vec::with_capacity(k);
    for u in 0..k {
        let mean = Complex64::new(
            stable_sum(kept.iter().map(|(d, _)| d[u].re)) / n,
            stable_sum(kept.iter().map(|(d, _)| d[u].im)) / n,
        );
        let var = stable_sum(kept.iter().map(|(d, _)| (d[u] - mean).norm_sqr())) / (n - 1.0);
        signal_mean.push(mean);
        signal_var.push(var);
        interference.push(stable_sum(kept.iter().map(|(_, i)| i[u])) / n);
    }
    Ok(SinrStatistics {
        signal_mean,
        signal_var,
        interference,
        realizations: kept.len(),
        discarded,
    })
}

impl SinrStatistics {
    /// `rho |E{b_kk}|^2 / (sigma^2 + rho sum_{i != k} E|b_ki|^2 + rho var{b_kk})`.
    pub fn sinr(&self, rho_dl: f64, sigma2: f64) -> Vec<f64> {
        self.signal_mean
            .iter()
            .zip(&self.signal_var)
            .zip(&self.interference)
            .map(|((mean, var), leak)| {
                let signal = rho_dl * mean.norm_sqr();
                if signal == 0.0 {
                    return 0.0;
                }
                signal / (sigma2 + rho_dl * leak + rho_dl * var)
            })
            .collect()
    }
}

/// Per-user SINR with zero forcing on LS channel estimates.
pub fn sinr_per_user<G: Rng + ?Sized>(
    g_true: &ChannelMatrix,
    cfg: &PilotConfig,
    budget: &LinkBudget,
    n_realizations: usize,
    rng: &mut G,
) -> Result<Vec<f64>> {
    budget.validate()?;
    let stats = sinr_statistics(
        g_true,
        cfg,
        n_realizations,
        rng.random(),
        Execution::Parallel,
    )?;
    Ok(stats.sinr(budget.rho_dl, budget.sigma2))
}

/// `R_k = (1 - tau_p / tau_c) log2(1 + SINR_k)` in bit/s/Hz.
pub fn rate_per_user(sinr: &[f64], cfg: &PilotConfig) -> Result<Vec<f64>> {
    let prelog = cfg.prelog();
    sinr.iter()
        .map(|&s| {
            if s >= 0.0 {
                Ok(prelog * s.ln_1p() / std::f64::consts::LN_2)
            } else {
                Err(Error::Config(format!("SINR must be non-negative, got {s}")))
            }
        })
        .collect()
}
