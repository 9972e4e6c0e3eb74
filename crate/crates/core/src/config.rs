//! Run configuration: a JSON document whose omitted keys fall back to the
//! indoor reference scenario (2 GHz, 40 x 40 x 10 m hall, 512 antennas, 200
//! users). Powers are given in dBm here and converted to watts once.

use serde::{Deserialize, Serialize};

use crate::antenna::{design_patch_with, ApertureAxis, PatchDims, SubstrateSpec};
use crate::channel::PilotConfig;
use crate::geometry::{CandelabrumLayout, Room, TopologyKind};
use crate::montecarlo::{DropSpec, PowerCampaign, RateCampaign, RateStatistic, Scenario};
use crate::par::Execution;
use crate::precoding::LinkBudget;
use crate::units::{dbm_to_watts, thermal_noise_dbm, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// Largest tolerated gap between the configured noise power and the thermal
/// noise implied by bandwidth and noise figure before a warning is raised.
pub const NOISE_CONSISTENCY_DB: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frequency_hz: f64,
    /// Optional cross-check; must agree with `c / f` when given.
    pub wavelength_m: Option<f64>,
    pub room: Room,
    /// Number of antennas M.
    pub antennas: usize,
    /// Users per drop K.
    pub users: usize,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub noise_power_dbm: f64,
    pub substrate: SubstrateConfig,
    pub candelabrum: CandelabrumLayout,
    pub pilots: PilotSettings,
    /// Spectral efficiency every user must reach, bit/s/Hz.
    pub target_se: f64,
    pub drops: DropSettings,
    pub seed: u64,
    pub power_ccdf: PowerCcdfSettings,
    pub rate_map: RateMapSettings,
    /// Worker count; `None` uses every available core, 1 runs sequentially.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubstrateConfig {
    pub eps_r: f64,
    pub height_m: f64,
    pub aperture_axis: ApertureAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSettings {
    /// Pilot length; defaults to K.
    pub tau_p: Option<usize>,
    /// Coherence block length; defaults to 10 K.
    pub tau_c: Option<usize>,
    /// Per-user uplink pilot power.
    pub rho_ul_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropSettings {
    pub user_height_m: f64,
    pub margin_m: f64,
    pub exclusion_m: f64,
    pub n_drops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerCcdfSettings {
    /// Precode on channels estimated at `pilots.rho_ul_dbm` instead of the
    /// true channels.
    pub estimate_channels: bool,
    /// Let the target include the pilot overhead factor.
    pub include_prelog: bool,
    pub ccdf_step_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateMapSettings {
    pub topology: TopologyKind,
    pub rho_ul_dbm: Vec<f64>,
    pub rho_dl_dbm: Vec<f64>,
    pub percentile: f64,
    pub n_realizations: usize,
    pub statistic: RateStatistic,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            frequency_hz: 2e9,
            wavelength_m: None,
            room: Room::default(),
            antennas: 512,
            users: 200,
            noise_figure_db: 9.0,
            bandwidth_hz: 20e6,
            noise_power_dbm: -92.0,
            substrate: SubstrateConfig::default(),
            candelabrum: CandelabrumLayout::default(),
            pilots: PilotSettings::default(),
            target_se: 4.0,
            drops: DropSettings::default(),
            seed: 1,
            power_ccdf: PowerCcdfSettings::default(),
            rate_map: RateMapSettings::default(),
            threads: None,
        }
    }
}

impl Default for SubstrateConfig {
    fn default() -> Self {
        SubstrateConfig {
            eps_r: 10.2,
            height_m: 1.588e-3,
            aperture_axis: ApertureAxis::default(),
        }
    }
}

impl Default for PilotSettings {
    fn default() -> Self {
        PilotSettings {
            tau_p: None,
            tau_c: None,
            rho_ul_dbm: 0.0,
        }
    }
}

impl Default for DropSettings {
    fn default() -> Self {
        let d = DropSpec::default();
        DropSettings {
            user_height_m: d.user_height,
            margin_m: d.margin,
            exclusion_m: d.exclusion,
            n_drops: d.n_drops,
        }
    }
}

impl Default for PowerCcdfSettings {
    fn default() -> Self {
        PowerCcdfSettings {
            estimate_channels: true,
            include_prelog: false,
            ccdf_step_db: 0.1,
        }
    }
}

impl Default for RateMapSettings {
    fn default() -> Self {
        RateMapSettings {
            topology: TopologyKind::DoubleStrip4Walls,
            rho_ul_dbm: vec![-30.0, -20.0, -10.0, 0.0],
            rho_dl_dbm: vec![-40.0, -30.0, -20.0, -10.0],
            percentile: 0.999,
            n_realizations: 200,
            statistic: RateStatistic::default(),
        }
    }
}

/// Parses and validates a JSON document. An empty document (or `{}`) gives
/// the defaults. Errors name the offending key path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = if text.trim().is_empty() {
        RunConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?
    };
    config.validate()?;
    Ok(config)
}

fn check(ok: bool, key: &str, msg: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: {msg}")))
    }
}

/// Re-labels an error from a nested validator with the key it belongs to.
fn scoped(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(msg) => Error::Config(format!("{key}: {msg}")),
        other => Error::Config(format!("{key}: {other}")),
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            positive(self.frequency_hz),
            "frequency_hz",
            "must be positive",
        )?;
        if let Some(lambda) = self.wavelength_m {
            let expected = SPEED_OF_LIGHT / self.frequency_hz;
            check(
                ((lambda - expected) / expected).abs() < 1e-6,
                "wavelength_m",
                format!("{lambda} m disagrees with c / f = {expected} m"),
            )?;
        }
        self.room.validate().map_err(scoped("room"))?;
        check(self.users >= 1, "users", "at least one user is required")?;
        check(
            self.antennas >= self.users,
            "antennas",
            format!(
                "{} antennas cannot serve {} users",
                self.antennas, self.users
            ),
        )?;
        check(
            positive(self.bandwidth_hz),
            "bandwidth_hz",
            "must be positive",
        )?;
        check(
            self.noise_figure_db.is_finite(),
            "noise_figure_db",
            "must be finite",
        )?;
        check(
            self.noise_power_dbm.is_finite(),
            "noise_power_dbm",
            "must be finite",
        )?;
        check(
            self.substrate.eps_r >= 1.0,
            "substrate.eps_r",
            "must be at least 1",
        )?;
        check(
            positive(self.substrate.height_m),
            "substrate.height_m",
            "must be positive",
        )?;
        check(positive(self.target_se), "target_se", "must be positive")?;
        self.pilot_config(self.pilots.rho_ul_dbm)
            .validate_for(self.users)
            .map_err(scoped("pilots"))?;
        self.drop_spec()
            .validate(&self.room)
            .map_err(scoped("drops"))?;
        check(
            positive(self.power_ccdf.ccdf_step_db),
            "power_ccdf.ccdf_step_db",
            "must be positive",
        )?;
        let r = &self.rate_map;
        check(
            !r.rho_ul_dbm.is_empty(),
            "rate_map.rho_ul_dbm",
            "grid is empty",
        )?;
        check(
            !r.rho_dl_dbm.is_empty(),
            "rate_map.rho_dl_dbm",
            "grid is empty",
        )?;
        check(
            r.rho_ul_dbm
                .iter()
                .chain(&r.rho_dl_dbm)
                .all(|p| p.is_finite()),
            "rate_map",
            "grid powers must be finite",
        )?;
        check(
            r.percentile > 0.0 && r.percentile < 1.0,
            "rate_map.percentile",
            "must lie in (0, 1)",
        )?;
        check(
            r.n_realizations >= 2,
            "rate_map.n_realizations",
            "at least 2 realizations are required",
        )?;
        check(self.threads != Some(0), "threads", "must be at least 1")?;
        Ok(())
    }

    /// Non-fatal inconsistencies worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let thermal = thermal_noise_dbm(self.bandwidth_hz, self.noise_figure_db);
        if (thermal - self.noise_power_dbm).abs() > NOISE_CONSISTENCY_DB {
            out.push(format!(
                "noise_power_dbm = {} dBm differs from -174 + 10 log10(B) + F = {thermal:.2} dBm",
                self.noise_power_dbm
            ));
        }
        out
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn substrate_spec(&self) -> SubstrateSpec {
        SubstrateSpec {
            eps_r: self.substrate.eps_r,
            frequency: self.frequency_hz,
            height: self.substrate.height_m,
        }
    }

    pub fn element(&self) -> Result<PatchDims> {
        design_patch_with(&self.substrate_spec(), self.substrate.aperture_axis)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            room: self.room,
            m: self.antennas,
            element: self.element()?,
            candelabrum: self.candelabrum,
        })
    }

    pub fn execution(&self) -> Execution {
        match self.threads {
            None => Execution::Parallel,
            Some(n) => Execution::threads(n),
        }
    }

    pub fn drop_spec(&self) -> DropSpec {
        DropSpec {
            k_count: self.users,
            user_height: self.drops.user_height_m,
            margin: self.drops.margin_m,
            exclusion: self.drops.exclusion_m,
            n_drops: self.drops.n_drops,
            seed: self.seed,
        }
    }

    pub fn pilot_config(&self, rho_ul_dbm: f64) -> PilotConfig {
        PilotConfig {
            tau_p: self.pilots.tau_p.unwrap_or(self.users),
            tau_c: self.pilots.tau_c.unwrap_or(10 * self.users),
            rho_ul: dbm_to_watts(rho_ul_dbm),
            sigma2: self.sigma2(),
        }
    }

    pub fn power_campaign(&self) -> PowerCampaign {
        let pilots = self.pilot_config(self.pilots.rho_ul_dbm);
        PowerCampaign {
            drops: self.drop_spec(),
            budget: LinkBudget {
                rho_dl: 1.0,
                sigma2: self.sigma2(),
                target_se: self.target_se,
            },
            pilots: if self.power_ccdf.estimate_channels {
                Some(pilots)
            } else {
                None
            },
            include_prelog: self.power_ccdf.include_prelog,
            ccdf_step_db: self.power_ccdf.ccdf_step_db,
        }
    }

    pub fn rate_campaign(&self) -> RateCampaign {
        let r = &self.rate_map;
        RateCampaign {
            drops: self.drop_spec(),
            pilots: self.pilot_config(self.pilots.rho_ul_dbm),
            rho_ul_grid_w: r.rho_ul_dbm.iter().copied().map(dbm_to_watts).collect(),
            rho_dl_grid_w: r.rho_dl_dbm.iter().copied().map(dbm_to_watts).collect(),
            percentile: r.percentile,
            n_realizations: r.n_realizations,
            statistic: r.statistic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        for text in ["", "{}", "  \n"] {
            let c = parse_config(text).unwrap();
            assert_eq!(c, RunConfig::default());
            assert_eq!(c.antennas, 512);
            assert_eq!(c.users, 200);
            assert_eq!(c.noise_power_dbm, -92.0);
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = parse_config(r#"{"drops": {"n_drop": 3}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("drops") && e.contains("n_drop"), "{e}");
        let e = parse_config(r#"{"antenas": 3}"#).unwrap_err().to_string();
        assert!(e.contains("antenas"), "{e}");
    }

    #[test]
    fn wrong_type_names_key_path() {
        let e = parse_config(r#"{"rate_map": {"rho_dl_dbm": [1, "x"]}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("rate_map.rho_dl_dbm[1]"), "{e}");
    }

    #[test]
    fn zero_users_is_rejected() {
        let e = parse_config(r#"{"users": 0}"#).unwrap_err();
        assert!(e.is_config());
        assert!(
            e.to_string().starts_with("configuration error: users"),
            "{e}"
        );
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(parse_config("{").unwrap_err().is_config());
    }

    #[test]
    fn table_noise_is_consistent() {
        let c = parse_config(r#"{"bandwidth_hz": 20e6, "noise_figure_db": 9}"#).unwrap();
        assert!(c.warnings().is_empty());
        let c = parse_config(r#"{"noise_power_dbm": -90}"#).unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn wavelength_cross_check() {
        assert!(parse_config(r#"{"wavelength_m": 0.15}"#).is_ok());
        assert!(parse_config(r#"{"wavelength_m": 0.2}"#).is_err());
    }

    #[test]
    fn pilot_defaults_follow_user_count() {
        let c = parse_config(r#"{"users": 20, "antennas": 128}"#).unwrap();
        let p = c.pilot_config(0.0);
        assert_eq!((p.tau_p, p.tau_c), (20, 200));
        assert!((p.rho_ul - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn short_pilots_are_rejected() {
        assert!(parse_config(r#"{"pilots": {"tau_p": 10}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig {
            seed: 99,
            threads: Some(4),
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
