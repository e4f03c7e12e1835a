//! Scenario bundle: a TOML manifest naming CSV and TOML files in one directory.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::profiles::{default_rows, DEFAULT_SEASONS};
use super::{format_phases, parse_phases, Bus, Dwelling, Line, LineCode, NetworkBase, Scenario, SeasonProfile};
use crate::catalog::{load_builtin_catalog, EconomicScalars, TechnologyCatalog};
use crate::error::{Error, Result};
use crate::settings::AlgorithmSettings;

const DEFAULT_V_MIN: f64 = 0.94;
const DEFAULT_V_MAX: f64 = 1.10;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    buses: PathBuf,
    lines: PathBuf,
    linecodes: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transformers: Option<PathBuf>,
    dwellings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seasons: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profiles: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    catalog: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tariffs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    settings: Option<PathBuf>,
    #[serde(default)]
    network: NetworkBase,
}

#[derive(Debug, Serialize, Deserialize)]
struct BusRow {
    id: String,
    phases: String,
    v_min_pu: Option<f64>,
    v_max_pu: Option<f64>,
    slack: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineRow {
    id: String,
    from_bus: String,
    to_bus: String,
    phases: String,
    linecode: String,
    length_m: f64,
    /// Overrides the line code's shunt susceptance.
    b_us_per_km: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeasonRow {
    id: String,
    n_days: u32,
    timestep_h: Option<f64>,
    elec_scale: Option<f64>,
    heat_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct ProfileRow {
    pub season: String,
    pub step: usize,
    pub t_air_c: f64,
    pub irradiance_kw_m2: f64,
    pub elec_shape: Option<f64>,
    pub heat_shape: Option<f64>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Rows with their 1-based line numbers.
fn read_csv_from<T: DeserializeOwned>(reader: impl std::io::Read, file: &str) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::schema(file, Some(1), "header", e.to_string()))?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::schema(file, line, "record", e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: T = rec.deserialize(Some(&headers)).map_err(|e| {
            let field = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err
                    .field()
                    .and_then(|i| headers.get(i as usize))
                    .unwrap_or("record")
                    .to_string(),
                _ => "record".to_string(),
            };
            Error::schema(file, Some(line), field, e.to_string())
        })?;
        out.push((line, row));
    }
    Ok(out)
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(f, &path.display().to_string())
}

pub(super) fn read_profile_rows(reader: impl std::io::Read, file: &str) -> Result<Vec<ProfileRow>> {
    Ok(read_csv_from(reader, file)?.into_iter().map(|(_, r)| r).collect())
}

/// Parses and validates the bundle described by the manifest at `path`.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        Error::schema(&file, line, "manifest", e.message().to_string())
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let at = |p: &Path| dir.join(p);

    let buses = read_csv::<BusRow>(&at(&manifest.buses))?
        .into_iter()
        .map(|(line, r)| {
            let phases = parse_phases(&r.phases).ok_or_else(|| {
                Error::schema(manifest.buses.display().to_string(), Some(line), "phases", "expected letters from `abc`")
            })?;
            Ok(Bus {
                id: r.id,
                phases,
                v_min: r.v_min_pu.unwrap_or(DEFAULT_V_MIN),
                v_max: r.v_max_pu.unwrap_or(DEFAULT_V_MAX),
                is_slack: r.slack.unwrap_or(false),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let linecodes: Vec<LineCode> = read_csv(&at(&manifest.linecodes))?.into_iter().map(|(_, r)| r).collect();
    let lines_file = manifest.lines.display().to_string();
    let lines = read_csv::<LineRow>(&at(&manifest.lines))?
        .into_iter()
        .map(|(line, r)| {
            let phases = parse_phases(&r.phases)
                .ok_or_else(|| Error::schema(&lines_file, Some(line), "phases", "expected letters from `abc`"))?;
            let code = linecodes.iter().find(|c| c.id == r.linecode).ok_or_else(|| Error::DanglingReference {
                kind: "line code",
                id: r.linecode.clone(),
                referenced_by: format!("line `{}` ({lines_file}:{line})", r.id),
            })?;
            if !(r.length_m > 0.0) {
                return Err(Error::schema(&lines_file, Some(line), "length_m", "must be > 0"));
            }
            Ok(build_line(r, phases, code))
        })
        .collect::<Result<Vec<_>>>()?;

    let transformers = match &manifest.transformers {
        Some(p) => read_csv(&at(p))?.into_iter().map(|(_, r)| r).collect(),
        None => Vec::new(),
    };
    let dwellings: Vec<Dwelling> = read_csv(&at(&manifest.dwellings))?.into_iter().map(|(_, r)| r).collect();

    let season_rows: Vec<SeasonRow> = match &manifest.seasons {
        Some(p) => read_csv(&at(p))?.into_iter().map(|(_, r)| r).collect(),
        None => DEFAULT_SEASONS
            .iter()
            .map(|&(id, n, _, _)| SeasonRow {
                id: id.into(),
                n_days: n,
                timestep_h: None,
                elec_scale: None,
                heat_scale: None,
            })
            .collect(),
    };
    let (profile_file, profile_rows) = match &manifest.profiles {
        Some(p) => {
            let full = at(p);
            let f = fs::File::open(&full).map_err(|e| Error::io(&full, e))?;
            (p.display().to_string(), read_profile_rows(f, &p.display().to_string())?)
        }
        None => ("<default profiles>".to_string(), default_rows()),
    };
    let seasons = season_rows
        .into_iter()
        .map(|r| build_season(r, &profile_rows, &profile_file))
        .collect::<Result<Vec<_>>>()?;

    let catalog = match &manifest.catalog {
        Some(p) => TechnologyCatalog::from_path(at(p))?,
        None => load_builtin_catalog(),
    };
    let tariffs = match &manifest.tariffs {
        Some(p) => overlay_tariffs(&catalog.economics, &at(p))?,
        None => catalog.economics,
    };
    let settings = match &manifest.settings {
        Some(p) => {
            let full = at(p);
            let text = read_to_string(&full)?;
            let s: AlgorithmSettings = toml::from_str(&text).map_err(|e| {
                let line = e.span().map(|s| text[..s.start].lines().count().max(1));
                Error::schema(p.display().to_string(), line, "settings", e.message().to_string())
            })?;
            s.validate()?;
            s
        }
        None => AlgorithmSettings::default(),
    };

    Scenario::new(
        manifest.name,
        manifest.network,
        buses,
        linecodes,
        lines,
        transformers,
        dwellings,
        seasons,
        catalog,
        tariffs,
        settings,
    )
}

fn build_line(r: LineRow, phases: Vec<super::Phase>, code: &LineCode) -> Line {
    let km = r.length_m / 1000.0;
    let (zs, zm) = code.phase_impedance_per_km();
    let n = phases.len();
    let impedance = (0..n * n)
        .map(|idx| if idx / n == idx % n { zs * km } else { zm * km })
        .collect::<Vec<Complex64>>();
    Line {
        id: r.id,
        from_bus: r.from_bus,
        to_bus: r.to_bus,
        phases,
        linecode: r.linecode,
        length_m: r.length_m,
        impedance,
        shunt_susceptance_s: r.b_us_per_km.unwrap_or(code.b1_us_per_km) * 1e-6 * km,
    }
}

fn build_season(r: SeasonRow, rows: &[ProfileRow], file: &str) -> Result<SeasonProfile> {
    let defaults = DEFAULT_SEASONS.iter().find(|d| d.0 == r.id);
    let mut mine: Vec<&ProfileRow> = rows.iter().filter(|p| p.season == r.id).collect();
    if mine.is_empty() {
        return Err(Error::schema(file, None, "season", format!("no profile rows for season `{}`", r.id)));
    }
    mine.sort_by_key(|p| p.step);
    if mine.iter().enumerate().any(|(i, p)| p.step != i + 1) {
        return Err(Error::schema(file, None, "step", format!("season `{}` steps must run 1..T", r.id)));
    }
    let shape = |pick: fn(&ProfileRow) -> Option<f64>, name: &str| -> Result<Vec<f64>> {
        if mine.iter().all(|p| pick(p).is_some()) {
            return Ok(mine.iter().map(|p| pick(p).unwrap()).collect());
        }
        // Missing shapes fall back to the shipped hourly defaults.
        let def: Vec<f64> = default_rows().iter().filter(|p| p.season == "winter").map(|p| pick(p).unwrap()).collect();
        if mine.iter().any(|p| pick(p).is_some()) || def.len() != mine.len() {
            return Err(Error::schema(
                file,
                None,
                name,
                format!("season `{}` must give {name} on every row or on none with 24 hourly steps", r.id),
            ));
        }
        Ok(def)
    };
    Ok(SeasonProfile {
        id: r.id.clone(),
        n_days: r.n_days,
        timestep_h: r.timestep_h.unwrap_or(1.0),
        elec_scale: r.elec_scale.or(defaults.map(|d| d.2)).unwrap_or(1.0),
        heat_scale: r.heat_scale.or(defaults.map(|d| d.3)).unwrap_or(1.0),
        t_air: mine.iter().map(|p| p.t_air_c).collect(),
        irradiance: mine.iter().map(|p| p.irradiance_kw_m2).collect(),
        elec_shape: shape(|p| p.elec_shape, "elec_shape")?,
        heat_shape: shape(|p| p.heat_shape, "heat_shape")?,
    })
}

fn overlay_tariffs(base: &EconomicScalars, path: &Path) -> Result<EconomicScalars> {
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let over: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::schema(&file, None, "tariffs", e.message().to_string()))?;
    let mut merged = toml::Table::try_from(base).expect("economics serialise");
    for (k, v) in over {
        if !merged.contains_key(&k) {
            return Err(Error::schema(&file, None, k, "unknown tariff field"));
        }
        merged.insert(k, v);
    }
    let eco: EconomicScalars = merged
        .try_into()
        .map_err(|e: toml::de::Error| Error::schema(&file, None, "tariffs", e.message().to_string()))?;
    Ok(eco)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Report(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the scenario as a bundle in `dir`, returning the manifest path.
pub fn write_scenario(s: &Scenario, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join("buses.csv"),
        s.buses.iter().map(|b| BusRow {
            id: b.id.clone(),
            phases: format_phases(&b.phases),
            v_min_pu: Some(b.v_min),
            v_max_pu: Some(b.v_max),
            slack: Some(b.is_slack),
        }),
    )?;
    write_csv(&dir.join("linecodes.csv"), &s.linecodes)?;
    write_csv(
        &dir.join("lines.csv"),
        s.lines.iter().map(|l| LineRow {
            id: l.id.clone(),
            from_bus: l.from_bus.clone(),
            to_bus: l.to_bus.clone(),
            phases: format_phases(&l.phases),
            linecode: l.linecode.clone(),
            length_m: l.length_m,
            b_us_per_km: {
                let code = s.linecodes.iter().find(|c| c.id == l.linecode);
                let from_code = code.map(|c| c.b1_us_per_km * 1e-6 * l.length_m / 1000.0);
                (from_code != Some(l.shunt_susceptance_s))
                    .then(|| l.shunt_susceptance_s * 1e6 / (l.length_m / 1000.0))
            },
        }),
    )?;
    write_csv(&dir.join("transformers.csv"), &s.transformers)?;
    write_csv(&dir.join("dwellings.csv"), &s.dwellings)?;
    write_csv(
        &dir.join("seasons.csv"),
        s.seasons.iter().map(|p| SeasonRow {
            id: p.id.clone(),
            n_days: p.n_days,
            timestep_h: Some(p.timestep_h),
            elec_scale: Some(p.elec_scale),
            heat_scale: Some(p.heat_scale),
        }),
    )?;
    write_csv(
        &dir.join("profiles.csv"),
        s.seasons.iter().flat_map(|p| {
            (0..p.len()).map(move |t| ProfileRow {
                season: p.id.clone(),
                step: t + 1,
                t_air_c: p.t_air[t],
                irradiance_kw_m2: p.irradiance[t],
                elec_shape: Some(p.elec_shape[t]),
                heat_shape: Some(p.heat_shape[t]),
            })
        }),
    )?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    put("catalog.toml", s.catalog.to_toml_string())?;
    put("tariffs.toml", toml::to_string(&s.tariffs).expect("tariffs serialise"))?;
    put("settings.toml", toml::to_string(&s.settings).expect("settings serialise"))?;
    let manifest = Manifest {
        name: s.name.clone(),
        buses: "buses.csv".into(),
        lines: "lines.csv".into(),
        linecodes: "linecodes.csv".into(),
        transformers: Some("transformers.csv".into()),
        dwellings: "dwellings.csv".into(),
        seasons: Some("seasons.csv".into()),
        profiles: Some("profiles.csv".into()),
        catalog: Some("catalog.toml".into()),
        tariffs: Some("tariffs.toml".into()),
        settings: Some("settings.toml".into()),
        network: s.base,
    };
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest).expect("manifest serialises")).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
