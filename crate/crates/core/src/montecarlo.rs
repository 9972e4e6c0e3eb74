//! User drops and the two simulation campaigns: the required-power CCDF and
//! the percentile-rate surface over uplink/downlink power grids.
//!
//! Drops are independent work items. Each draws from streams derived from
//! the campaign seed and its drop index, and results are assembled in drop
//! order, so outputs are bit-identical for any worker count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::antenna::PatchDims;
use crate::channel::{channel_matrix, estimate_channel, PilotConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    build_topology_with, AntennaPose, CandelabrumLayout, Room, Topology, TopologyKind, Vec3,
};
use crate::par::{map_indexed, Execution};
use crate::precoding::{rate_per_user, sinr_statistics, zf_trace, LinkBudget};
use crate::rng::{self, Stream};
use crate::units::watts_to_dbm;

/// Largest tolerated share of drops lost to singular channels.
pub const MAX_FAILED_DROP_FRACTION: f64 = 0.01;

/// Consecutive rejections after which a drop region is declared infeasible.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropSpec {
    pub k_count: usize,
    /// Height of every user above the floor, meters.
    pub user_height: f64,
    /// Minimum horizontal distance from the walls, meters.
    pub margin: f64,
    /// Minimum distance from any antenna element, meters.
    pub exclusion: f64,
    pub n_drops: usize,
    pub seed: u64,
}

impl Default for DropSpec {
    fn default() -> Self {
        DropSpec {
            k_count: 200,
            user_height: 1.5,
            margin: 1.0,
            exclusion: 0.5,
            n_drops: 10_000,
            seed: 1,
        }
    }
}

impl DropSpec {
    pub fn validate(&self, room: &Room) -> Result<()> {
        if self.k_count == 0 {
            return Err(Error::Config(
                "at least one user per drop is required".into(),
            ));
        }
        if self.n_drops == 0 {
            return Err(Error::Config("at least one drop is required".into()));
        }
        if !(self.margin >= 0.0) || !(self.exclusion >= 0.0) {
            return Err(Error::Config(
                "margin and exclusion must be non-negative".into(),
            ));
        }
        if !(self.user_height > 0.0 && self.user_height < room.lz) {
            return Err(Error::Config(format!(
                "user height {} m must lie strictly inside the {} m tall room",
                self.user_height, room.lz
            )));
        }
        if 2.0 * self.margin >= room.lx || 2.0 * self.margin >= room.ly {
            return Err(Error::Infeasible(format!(
                "margin {} m leaves no floor area in a {} x {} m room",
                self.margin, room.lx, room.ly
            )));
        }
        Ok(())
    }
}

/// Draws `spec.k_count` users uniformly over the floor rectangle inset by
/// the margin, at the fixed user height, resampling any position closer
/// than the exclusion distance to an antenna.
pub fn drop_users<G: Rng + ?Sized>(
    room: &Room,
    spec: &DropSpec,
    antennas: &[AntennaPose],
    rng: &mut G,
) -> Result<Vec<Vec3>> {
    spec.validate(room)?;
    let (x0, x1) = (spec.margin, room.lx - spec.margin);
    let (y0, y1) = (spec.margin, room.ly - spec.margin);
    let ex2 = spec.exclusion * spec.exclusion;
    let mut users = Vec::with_capacity(spec.k_count);
    while users.len() < spec.k_count {
        let mut rejected = 0;
        loop {
            let p = Vec3::new(
                rng.random_range(x0..x1),
                rng.random_range(y0..y1),
                spec.user_height,
            );
            let blocked = ex2 > 0.0
                && antennas.iter().any(|a| {
                    let d = p - a.position;
                    d.dot(d) < ex2
                });
            if !blocked {
                users.push(p);
                break;
            }
            rejected += 1;
            if rejected >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::Infeasible(format!(
                    "{rejected} consecutive positions fell inside the {} m antenna exclusion zone",
                    spec.exclusion
                )));
            }
        }
    }
    Ok(users)
}

/// Everything that stays fixed across drops.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub room: Room,
    pub m: usize,
    pub element: PatchDims,
    pub candelabrum: CandelabrumLayout,
}

impl Scenario {
    pub fn topology(&self, kind: TopologyKind) -> Result<Topology> {
        build_topology_with(
            kind,
            &self.room,
            self.m,
            self.element.lambda,
            &self.candelabrum,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCampaign {
    pub drops: DropSpec,
    pub budget: LinkBudget,
    /// Pilot phase used to estimate the channel before precoding; `None`
    /// precodes on the true channel.
    pub pilots: Option<PilotConfig>,
    /// Treat the spectral-efficiency target as including the prelog factor.
    pub include_prelog: bool,
    /// CCDF grid spacing in dB.
    pub ccdf_step_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropPower {
    pub drop: usize,
    /// `None` when the drop's Gram matrix was singular.
    pub power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCampaignResult {
    pub kind: TopologyKind,
    pub per_drop: Vec<DropPower>,
    pub failures: usize,
    /// Required powers of successful drops in dBm, ascending.
    pub sorted_dbm: Vec<f64>,
    /// `(power_dBm, Pr{P >= power})` on a uniform dB grid.
    pub ccdf: Vec<(f64, f64)>,
}

/// Lower empirical quantile of ascending data: the smallest sample `x` with
/// empirical CDF `F(x) >= q`.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    // the relative slack absorbs representation error in q (e.g. 1 - 0.999)
    let rank = (q * n as f64 * (1.0 - 1e-12)).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Empirical survival function `Pr{X >= x}` of ascending data on a grid of
/// multiples of `step` that starts below the minimum and ends above the
/// maximum.
pub fn survival_curve(sorted: &[f64], step: f64) -> Vec<(f64, f64)> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let n = sorted.len() as f64;
    let lo = (sorted[0] / step).floor() as i64 - 1;
    let hi = (sorted[sorted.len() - 1] / step).ceil() as i64 + 1;
    (lo..=hi)
        .map(|i| {
            let x = i as f64 * step;
            let below = sorted.partition_point(|&v| v < x);
            (x, (sorted.len() - below) as f64 / n)
        })
        .collect()
}

impl PowerCampaignResult {
    pub fn median_dbm(&self) -> f64 {
        lower_quantile(&self.sorted_dbm, 0.5)
    }

    /// Distribution-free 95% confidence interval for the median, from
    /// binomial order statistics.
    pub fn median_ci95_dbm(&self) -> (f64, f64) {
        let n = self.sorted_dbm.len();
        let half = 1.96 * (n as f64).sqrt() / 2.0;
        let lo = ((n as f64 / 2.0 - half).floor().max(1.0) as usize).min(n) - 1;
        let hi = ((n as f64 / 2.0 + half).ceil() as usize).clamp(1, n) - 1;
        (self.sorted_dbm[lo], self.sorted_dbm[hi])
    }

    pub fn write_ccdf_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "power_dBm,prob")?;
        for (p, prob) in &self.ccdf {
            writeln!(out, "{p:.4},{prob:.6}")?;
        }
        Ok(())
    }
}

fn is_drop_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Singular { .. } | Error::StatisticalValidity { .. }
    )
}

fn check_failures(failures: usize, total: usize) -> Result<()> {
    if failures as f64 > MAX_FAILED_DROP_FRACTION * total as f64 {
        return Err(Error::StatisticalValidity {
            discarded: failures,
            total,
            limit_percent: MAX_FAILED_DROP_FRACTION * 100.0,
        });
    }
    Ok(())
}

pub fn run_power_campaign(
    scenario: &Scenario,
    kind: TopologyKind,
    campaign: &PowerCampaign,
    exec: Execution,
) -> Result<PowerCampaignResult> {
    let spec = &campaign.drops;
    spec.validate(&scenario.room)?;
    campaign.budget.validate()?;
    if !(campaign.ccdf_step_db > 0.0) {
        return Err(Error::Config("CCDF step must be positive".into()));
    }
    if let Some(p) = &campaign.pilots {
        p.validate_for(spec.k_count)?;
    }
    let prelog = match (campaign.include_prelog, &campaign.pilots) {
        (true, Some(p)) => Some(p.prelog()),
        (true, None) => {
            return Err(Error::Config(
                "the prelog option needs a pilot configuration".into(),
            ))
        }
        (false, _) => None,
    };
    let threshold = campaign.budget.sinr_threshold(prelog);
    let topology = scenario.topology(kind)?;

    let outcomes = map_indexed(exec, spec.n_drops, |drop| -> Result<DropPower> {
        let mut user_rng = rng::stream(spec.seed, Stream::Users, &[drop as u64]);
        let users = drop_users(&scenario.room, spec, &topology.poses, &mut user_rng)?;
        let g = channel_matrix(&topology, &users, &scenario.element)?;
        let g = match &campaign.pilots {
            Some(p) => estimate_channel(
                &g,
                p,
                &mut rng::stream(spec.seed, Stream::PilotNoise, &[drop as u64]),
            )?,
            None => g,
        };
        match zf_trace(&g) {
            Ok((trace, _)) => Ok(DropPower {
                drop,
                power_w: Some(threshold * campaign.budget.sigma2 * trace),
            }),
            Err(e) if is_drop_failure(&e) => Ok(DropPower {
                drop,
                power_w: None,
            }),
            Err(e) => Err(e),
        }
    });
    let per_drop = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let failures = per_drop.iter().filter(|d| d.power_w.is_none()).count();
    check_failures(failures, spec.n_drops)?;

    let mut sorted_dbm: Vec<f64> = per_drop
        .iter()
        .filter_map(|d| d.power_w)
        .map(watts_to_dbm)
        .collect();
    sorted_dbm.sort_by(f64::total_cmp);
    let ccdf = survival_curve(&sorted_dbm, campaign.ccdf_step_db);
    Ok(PowerCampaignResult {
        kind,
        per_drop,
        failures,
        sorted_dbm,
        ccdf,
    })
}

/// How per-user rates are pooled before taking the percentile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateStatistic {
    /// Every user of every drop is one sample.
    #[default]
    PooledUsers,
    /// The worst user of each drop is one sample.
    PerDropMinimum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCampaign {
    pub drops: DropSpec,
    /// Pilot lengths and noise power; `rho_ul` is taken from the grid.
    pub pilots: PilotConfig,
    pub rho_ul_grid_w: Vec<f64>,
    pub rho_dl_grid_w: Vec<f64>,
    /// Reliability level: the reported rate is exceeded with this probability.
    pub percentile: f64,
    pub n_realizations: usize,
    pub statistic: RateStatistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCampaignResult {
    pub kind: TopologyKind,
    pub rho_ul_grid_w: Vec<f64>,
    pub rho_dl_grid_w: Vec<f64>,
    /// `surface[u][d]`: rate at `rho_ul_grid_w[u]`, `rho_dl_grid_w[d]`.
    pub surface: Vec<Vec<f64>>,
    pub failures: usize,
    /// Pilot-noise realizations discarded for singular estimates, all drops.
    pub discarded_realizations: usize,
}

impl RateCampaignResult {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rho_ul_dBm,rho_dl_dBm,rate_bit_per_s_per_Hz")?;
        for (u, row) in self.surface.iter().enumerate() {
            for (d, rate) in row.iter().enumerate() {
                let (ul, dl) = (
                    watts_to_dbm(self.rho_ul_grid_w[u]),
                    watts_to_dbm(self.rho_dl_grid_w[d]),
                );
                writeln!(out, "{ul:.4},{dl:.4},{rate:.6}")?;
            }
        }
        Ok(())
    }
}

/// Rates of one drop, `[ul][dl][user]`, plus discarded realizations.
type DropRates = (Vec<Vec<Vec<f64>>>, usize);

pub fn run_rate_campaign(
    scenario: &Scenario,
    kind: TopologyKind,
    campaign: &RateCampaign,
    exec: Execution,
) -> Result<RateCampaignResult> {
    let spec = &campaign.drops;
    spec.validate(&scenario.room)?;
    if campaign.rho_ul_grid_w.is_empty() || campaign.rho_dl_grid_w.is_empty() {
        return Err(Error::Config("power grids must be non-empty".into()));
    }
    if campaign
        .rho_dl_grid_w
        .iter()
        .any(|&p| !(p >= 0.0 && p.is_finite()))
    {
        return Err(Error::Config("downlink powers must be non-negative".into()));
    }
    if !(campaign.percentile > 0.0 && campaign.percentile < 1.0) {
        return Err(Error::Config(format!(
            "percentile must lie in (0, 1), got {}",
            campaign.percentile
        )));
    }
    for &rho_ul in &campaign.rho_ul_grid_w {
        PilotConfig {
            rho_ul,
            ..campaign.pilots
        }
        .validate_for(spec.k_count)?;
    }
    let topology = scenario.topology(kind)?;
    let sigma2 = campaign.pilots.sigma2;

    let outcomes = map_indexed(exec, spec.n_drops, |drop| -> Result<Option<DropRates>> {
        let mut user_rng = rng::stream(spec.seed, Stream::Users, &[drop as u64]);
        let users = drop_users(&scenario.room, spec, &topology.poses, &mut user_rng)?;
        let g = channel_matrix(&topology, &users, &scenario.element)?;
        // Same noise realizations for every uplink power of this drop.
        let noise_seed = rng::derive_seed(spec.seed, &[Stream::PilotNoise as u64, drop as u64]);
        let mut rows = Vec::with_capacity(campaign.rho_ul_grid_w.len());
        let mut discarded = 0;
        for &rho_ul in &campaign.rho_ul_grid_w {
            let cfg = PilotConfig {
                rho_ul,
                ..campaign.pilots
            };
            let stats = match sinr_statistics(
                &g,
                &cfg,
                campaign.n_realizations,
                noise_seed,
                Execution::Sequential,
            ) {
                Ok(s) => s,
                Err(e) if is_drop_failure(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            discarded += stats.discarded;
            let row = campaign
                .rho_dl_grid_w
                .iter()
                .map(|&rho_dl| rate_per_user(&stats.sinr(rho_dl, sigma2), &cfg))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Some((rows, discarded)))
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    check_failures(failures, spec.n_drops)?;
    let kept: Vec<&DropRates> = outcomes.iter().flatten().collect();
    let discarded_realizations = kept.iter().map(|(_, d)| d).sum();

    let q = 1.0 - campaign.percentile;
    let surface = (0..campaign.rho_ul_grid_w.len())
        .map(|u| {
            (0..campaign.rho_dl_grid_w.len())
                .map(|d| {
                    let mut sample: Vec<f64> = match campaign.statistic {
                        RateStatistic::PooledUsers => kept
                            .iter()
                            .flat_map(|(r, _)| r[u][d].iter().copied())
                            .collect(),
                        RateStatistic::PerDropMinimum => kept
                            .iter()
                            .map(|(r, _)| r[u][d].iter().copied().fold(f64::INFINITY, f64::min))
                            .collect(),
                    };
                    sample.sort_by(f64::total_cmp);
                    lower_quantile(&sample, q)
                })
                .collect()
        })
        .collect();
    Ok(RateCampaignResult {
        kind,
        rho_ul_grid_w: campaign.rho_ul_grid_w.clone(),
        rho_dl_grid_w: campaign.rho_dl_grid_w.clone(),
        surface,
        failures,
        discarded_realizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::{design_patch, SubstrateSpec};
    use crate::rng::from_seed;
    use crate::units::dbm_to_watts;

    fn scenario(m: usize) -> Scenario {
        Scenario {
            room: Room::default(),
            m,
            element: design_patch(&SubstrateSpec::default()).unwrap(),
            candelabrum: CandelabrumLayout::default(),
        }
    }

    fn power_campaign(k: usize, n_drops: usize, seed: u64) -> PowerCampaign {
        PowerCampaign {
            drops: DropSpec {
                k_count: k,
                n_drops,
                seed,
                ..Default::default()
            },
            budget: LinkBudget {
                rho_dl: 1.0,
                sigma2: dbm_to_watts(-92.0),
                target_se: 4.0,
            },
            pilots: Some(PilotConfig {
                tau_p: k,
                tau_c: 10 * k,
                rho_ul: 1e-3,
                sigma2: dbm_to_watts(-92.0),
            }),
            include_prelog: false,
            ccdf_step_db: 0.1,
        }
    }

    #[test]
    fn tight_margin_confines_users() {
        let spec = DropSpec {
            k_count: 50,
            margin: 19.99,
            ..Default::default()
        };
        let users = drop_users(&Room::default(), &spec, &[], &mut from_seed(1)).unwrap();
        assert_eq!(users.len(), 50);
        for u in users {
            assert!((19.99..=20.01).contains(&u.x) && (19.99..=20.01).contains(&u.y));
            assert_eq!(u.z, 1.5);
        }
    }

    #[test]
    fn drops_are_seed_deterministic() {
        let spec = DropSpec {
            k_count: 10,
            ..Default::default()
        };
        let a = drop_users(&Room::default(), &spec, &[], &mut from_seed(4)).unwrap();
        let b = drop_users(&Room::default(), &spec, &[], &mut from_seed(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exclusion_zone_is_respected_and_infeasibility_detected() {
        let room = Room::default();
        let antenna = AntennaPose::new(Vec3::new(20.0, 20.0, 1.5), Vec3::X, Vec3::Z).unwrap();
        let spec = DropSpec {
            k_count: 20,
            margin: 19.0,
            exclusion: 0.7,
            ..Default::default()
        };
        let users = drop_users(&room, &spec, &[antenna], &mut from_seed(2)).unwrap();
        assert!(users.iter().all(|u| (*u - antenna.position).norm() >= 0.7));

        let spec = DropSpec {
            margin: 19.9,
            exclusion: 1.0,
            ..spec
        };
        assert!(matches!(
            drop_users(&room, &spec, &[antenna], &mut from_seed(2)),
            Err(Error::Infeasible(_))
        ));
        let spec = DropSpec {
            margin: 20.0,
            ..Default::default()
        };
        assert!(drop_users(&room, &spec, &[], &mut from_seed(2)).is_err());
    }

    #[test]
    fn quantile_conventions() {
        let v: Vec<f64> = (1..=10_000).map(f64::from).collect();
        assert_eq!(lower_quantile(&v, 1.0 - 0.999), 10.0);
        assert_eq!(lower_quantile(&v, 0.5), 5000.0);
        assert_eq!(lower_quantile(&[3.0], 0.001), 3.0);
        assert_eq!(lower_quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }

    #[test]
    fn survival_curve_is_valid() {
        let data = vec![-20.03, -19.5, -19.5, -18.0];
        let c = survival_curve(&data, 0.1);
        assert_eq!(c[0].1, 1.0);
        assert_eq!(c.last().unwrap().1, 0.0);
        assert!(c.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 > w[0].0));
        assert!(c[0].0 < -20.03 && c.last().unwrap().0 > -18.0);
        let at = |x: f64| c.iter().find(|(p, _)| (p - x).abs() < 1e-9).unwrap().1;
        assert_eq!(at(-19.5), 0.75);
        assert_eq!(at(-19.4), 0.25);
    }

    #[test]
    fn single_drop_ccdf_is_a_unit_step() {
        let r = run_power_campaign(
            &scenario(512),
            TopologyKind::QuadStrip4Walls,
            &power_campaign(8, 1, 3),
            Execution::Sequential,
        )
        .unwrap();
        let p = r.sorted_dbm[0];
        for &(x, prob) in &r.ccdf {
            assert_eq!(prob, if x <= p { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn power_campaign_is_parallelism_invariant() {
        let s = scenario(512);
        let c = power_campaign(10, 12, 5);
        let a =
            run_power_campaign(&s, TopologyKind::Candelabrum, &c, Execution::Sequential).unwrap();
        let b = run_power_campaign(
            &s,
            TopologyKind::Candelabrum,
            &c,
            Execution::ParallelWith(3),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
    }

    #[test]
    fn zero_downlink_power_gives_zero_rate() {
        let s = scenario(64);
        let c = RateCampaign {
            drops: DropSpec {
                k_count: 4,
                n_drops: 3,
                seed: 2,
                ..Default::default()
            },
            pilots: PilotConfig {
                tau_p: 4,
                tau_c: 40,
                rho_ul: 1.0,
                sigma2: dbm_to_watts(-92.0),
            },
            rho_ul_grid_w: vec![dbm_to_watts(-20.0)],
            rho_dl_grid_w: vec![0.0, dbm_to_watts(-30.0)],
            percentile: 0.9,
            n_realizations: 8,
            statistic: RateStatistic::PooledUsers,
        };
        let r = run_rate_campaign(&s, TopologyKind::QuadStrip4Walls, &c, Execution::Sequential)
            .unwrap();
        assert_eq!(r.surface[0][0], 0.0);
        assert!(r.surface[0][1] > 0.0);
        let worst = run_rate_campaign(
            &s,
            TopologyKind::QuadStrip4Walls,
            &RateCampaign {
                statistic: RateStatistic::PerDropMinimum,
                ..c
            },
            Execution::Sequential,
        )
        .unwrap();
        assert!(worst.surface[0][1] <= r.surface[0][1]);
    }
}
