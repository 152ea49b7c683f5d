//! Flat key-value text records for episode settings, one block per
//! setting, so evaluation suites stay diffable.

use std::fmt::Write as _;
use std::path::Path;

use super::{EnvError, EnvKind, EpisodeSetting, SystemParams};

fn param_fields(params: &SystemParams) -> Vec<(&'static str, f64)> {
    match params {
        SystemParams::Msd { mass, spring, damping } => {
            vec![("mass", *mass), ("spring", *spring), ("damping", *damping)]
        }
        SystemParams::Dmsd { mass, spring, damping } => vec![
            ("m1", mass[0]),
            ("m2", mass[1]),
            ("k1", spring[0]),
            ("k2", spring[1]),
            ("k3", spring[2]),
            ("c1", damping[0]),
            ("c2", damping[1]),
            ("c3", damping[2]),
        ],
        SystemParams::Navigation { mass, friction, static_prop } => vec![
            ("mass", *mass),
            ("friction", *friction),
            ("static_prop", *static_prop),
        ],
        SystemParams::Tokamak { minor_radius, current, field } => vec![
            ("minor_radius", *minor_radius),
            ("current", *current),
            ("field", *field),
        ],
    }
}

fn params_from_fields(kind: EnvKind, get: impl Fn(&str) -> Result<f64, EnvError>) -> Result<SystemParams, EnvError> {
    Ok(match kind {
        EnvKind::Msd => SystemParams::Msd {
            mass: get("mass")?,
            spring: get("spring")?,
            damping: get("damping")?,
        },
        EnvKind::Dmsd => SystemParams::Dmsd {
            mass: [get("m1")?, get("m2")?],
            spring: [get("k1")?, get("k2")?, get("k3")?],
            damping: [get("c1")?, get("c2")?, get("c3")?],
        },
        EnvKind::Navigation => SystemParams::Navigation {
            mass: get("mass")?,
            friction: get("friction")?,
            static_prop: get("static_prop")?,
        },
        EnvKind::Tokamak => SystemParams::Tokamak {
            minor_radius: get("minor_radius")?,
            current: get("current")?,
            field: get("field")?,
        },
    })
}

pub fn setting_to_block(s: &EpisodeSetting) -> String {
    let mut out = String::new();
    writeln!(out, "kind {}", s.kind.name()).unwrap();
    writeln!(out, "seed {}", s.rng_seed).unwrap();
    for (k, v) in param_fields(&s.params) {
        writeln!(out, "param.{k} {v}").unwrap();
    }
    for t in &s.targets {
        writeln!(out, "target {t}").unwrap();
    }
    for i in &s.initial_state {
        writeln!(out, "init {i}").unwrap();
    }
    out
}

pub fn setting_from_block(block: &str) -> Result<EpisodeSetting, EnvError> {
    let mut kind = None;
    let mut seed = None;
    let mut params: Vec<(String, f64)> = Vec::new();
    let mut targets = Vec::new();
    let mut init = Vec::new();
    for line in block.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line
            .split_once(' ')
            .ok_or_else(|| EnvError::Parse(format!("malformed line: {line}")))?;
        match key {
            "kind" => {
                kind = Some(
                    EnvKind::parse(val)
                        .ok_or_else(|| EnvError::Parse(format!("unknown env kind: {val}")))?,
                )
            }
            "seed" => {
                seed = Some(
                    val.parse::<u64>()
                        .map_err(|_| EnvError::Parse(format!("bad seed: {val}")))?,
                )
            }
            "target" | "init" => {
                let v: f64 = val
                    .parse()
                    .map_err(|_| EnvError::Parse(format!("bad number: {val}")))?;
                if key == "target" {
                    targets.push(v);
                } else {
                    init.push(v);
                }
            }
            _ => {
                let name = key
                    .strip_prefix("param.")
                    .ok_or_else(|| EnvError::Parse(format!("unknown key: {key}")))?;
                let v: f64 = val
                    .parse()
                    .map_err(|_| EnvError::Parse(format!("bad number: {val}")))?;
                params.push((name.to_string(), v));
            }
        }
    }
    let kind = kind.ok_or_else(|| EnvError::Parse("missing kind".into()))?;
    let rng_seed = seed.ok_or_else(|| EnvError::Parse("missing seed".into()))?;
    let get = |name: &str| -> Result<f64, EnvError> {
        params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| EnvError::Parse(format!("missing param.{name}")))
    };
    let params = params_from_fields(kind, get)?;
    Ok(EpisodeSetting { kind, params, targets, initial_state: init, rng_seed })
}

pub fn write_settings(path: &Path, settings: &[EpisodeSetting]) -> Result<(), EnvError> {
    let mut out = String::new();
    for s in settings {
        out.push_str(&setting_to_block(s));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_settings(path: &Path) -> Result<Vec<EpisodeSetting>, EnvError> {
    let text = std::fs::read_to_string(path)?;
    text.split("\n\n")
        .filter(|b| !b.trim().is_empty())
        .map(setting_from_block)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{sample_setting, Variation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn settings_round_trip_through_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.txt");
        let settings: Vec<_> = [
            (EnvKind::Msd, Variation::Large),
            (EnvKind::Dmsd, Variation::Small),
            (EnvKind::Navigation, Variation::Friction),
            (EnvKind::Tokamak, Variation::Sim),
        ]
        .iter()
        .map(|&(k, v)| sample_setting(k, v, &mut rng))
        .collect();
        write_settings(&path, &settings).unwrap();
        let loaded = read_settings(&path).unwrap();
        assert_eq!(loaded, settings);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = setting_from_block("kind msd\nseed 1\nbogus 3").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
