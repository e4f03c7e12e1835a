//! Default seasons: Surrey-like weather and double-peak demand shapes.

use super::io::{read_profile_rows, ProfileRow};
use super::SeasonProfile;

const DEFAULT_PROFILES: &str = include_str!("../../data/profiles.csv");

/// (id, days, electricity scale, heat scale). Winter scales are 1 so the
/// winter maximum equals the dwelling's peak.
pub const DEFAULT_SEASONS: [(&str, u32, f64, f64); 4] = [
    ("winter", 91, 1.0, 1.0),
    ("spring", 91, 0.9, 0.6),
    ("summer", 91, 0.8, 0.2),
    ("autumn", 92, 0.9, 0.6),
];

pub(super) fn default_rows() -> Vec<ProfileRow> {
    read_profile_rows(DEFAULT_PROFILES.as_bytes(), "<default profiles>").expect("default profiles parse")
}

/// Hourly default season, or `None` for ids without shipped data.
pub fn default_season(id: &str) -> Option<SeasonProfile> {
    let &(_, n_days, elec_scale, heat_scale) = DEFAULT_SEASONS.iter().find(|s| s.0 == id)?;
    let rows: Vec<_> = default_rows().into_iter().filter(|r| r.season == id).collect();
    Some(SeasonProfile {
        id: id.to_string(),
        n_days,
        timestep_h: 1.0,
        elec_scale,
        heat_scale,
        t_air: rows.iter().map(|r| r.t_air_c).collect(),
        irradiance: rows.iter().map(|r| r.irradiance_kw_m2).collect(),
        elec_shape: rows.iter().map(|r| r.elec_shape.expect("default shape")).collect(),
        heat_shape: rows.iter().map(|r| r.heat_shape.expect("default shape")).collect(),
    })
}
