//! Line-based `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::entropy::{default_s_list, EntropyIndex};
use crate::error::{Error, Result};
use crate::solver::{Scenario, SchemeConfig, DEFAULT_CFL, DEFAULT_N_OUTPUTS, DEFAULT_OUTPUT_GRADING, SCENARIO_NAMES};
use crate::state::{Parameters, DEFAULT_RHO_FLOOR};

/// A recognised key: `(name, default, unit, description)`.
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub unit: &'static str,
    pub description: &'static str,
}

const fn key(key: &'static str, default: &'static str, unit: &'static str, description: &'static str) -> KeySpec {
    KeySpec {
        key,
        default,
        unit,
        description,
    }
}

pub const KEYS: &[KeySpec] = &[
    key("nu", "2", "-", "mobility ratio of n (nu = 1 is the equal-mobility case)"),
    key("epsilon", "0.004", "length^2/time", "viscosity (coarsest rung for ladders)"),
    key("n_cells", "128", "cells", "grid size (coarsest rung for ladders)"),
    key("t_final", "0.25", "time", "final time"),
    key("cfl", "0.4", "-", "CFL factor in (0, 1)"),
    key("rho_floor", "1e-10", "density", "vacuum threshold for the activity"),
    key("scenario", "mixed_oscillatory", "-", "initial data preset"),
    key("scenario.*", "per preset", "-", "preset parameters, see below"),
    key("s_list", "auto", "-", "comma-separated entropy indices; auto = {1.1,1.25,1.5,1.75} within (1, beta/alpha)"),
    key("ladder_rungs", "3", "rungs", "number of ladder rungs (>= 3), eps and h halve per rung"),
    key("window_t", "8", "snapshots", "macro-cell length in output times"),
    key("window_x", "8", "cells", "macro-cell width in cells of the coarsest rung"),
    key("xi_threshold", "auto", "density/length", "collapse mask on mean |dx rho|; auto = 0.1 RMS on the finest rung"),
    key("snapshot_every", "100", "steps", "snapshot stride of `simulate`"),
    key("output_dir", ".", "path", "directory receiving the CSV files"),
    key("emit_phi_table", "false", "bool", "also write phi_table.csv for s_list"),
    key("n_outputs", "200", "times", "number of shared output times of a ladder"),
    key("output_grading", "3", "-", "output times are t_final (j/n_outputs)^grading"),
];

/// `--help` text listing every key with its default and unit.
pub fn help_text() -> String {
    let mut s = String::from("CONFIG KEYS (key = value, '#' starts a comment):\n");
    for k in KEYS {
        s.push_str(&format!(
            "  {:<16} default {:<18} unit {:<15} {}\n",
            k.key, k.default, k.unit, k.description
        ));
    }
    for name in SCENARIO_NAMES {
        s.push_str(&format!("\nscenario = {name}:\n"));
        for (k, default, desc) in Scenario::param_specs(name).unwrap_or(&[]) {
            s.push_str(&format!("  scenario.{:<14} default {:<18} {}\n", k, default, desc));
        }
    }
    s
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// unknown and repeated keys are errors.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        let known = KEYS.iter().any(|s| s.key == k) || (k.starts_with("scenario.") && k.len() > 9);
        if !known {
            return Err(Error::config(format!("line {}: unknown key `{k}`", no + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(format!("line {}: key `{k}` given twice", no + 1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: Parameters,
    pub scheme: SchemeConfig,
    pub s_list: Vec<EntropyIndex>,
    pub ladder_rungs: usize,
    pub window_t: usize,
    pub window_x: usize,
    pub xi_threshold: Option<f64>,
    pub output_dir: PathBuf,
    pub emit_phi_table: bool,
}

fn number<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::config(format!("`{key}` = `{v}` is not a valid number"))),
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&parse_config(text)?)
    }

    /// Validates every value; all failures are config errors.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let nu: f64 = number(map, "nu", 2.0)?;
        let params = if nu == 1.0 {
            Parameters::equal_mobility()
        } else {
            Parameters::new(nu).map_err(as_config)?
        };
        let params = params
            .with_rho_floor(number(map, "rho_floor", DEFAULT_RHO_FLOOR)?)
            .map_err(as_config)?;
        let name = map.get("scenario").map(String::as_str).unwrap_or("mixed_oscillatory");
        let overrides = map
            .keys()
            .filter_map(|k| k.strip_prefix("scenario."))
            .map(|k| Ok((k.to_string(), number(map, &format!("scenario.{k}"), 0.0)?)))
            .collect::<Result<BTreeMap<String, f64>>>()?;
        let scenario = Scenario::from_params(name, &overrides)?;
        let scheme = SchemeConfig {
            epsilon: number(map, "epsilon", 4e-3)?,
            cfl: number(map, "cfl", DEFAULT_CFL)?,
            t_final: number(map, "t_final", 0.25)?,
            n_cells: number(map, "n_cells", 128)?,
            snapshot_every: number(map, "snapshot_every", 100)?,
            scenario,
            n_outputs: number(map, "n_outputs", DEFAULT_N_OUTPUTS)?,
            output_grading: number(map, "output_grading", DEFAULT_OUTPUT_GRADING)?,
        };
        scheme.validate()?;
        let s_list = match map.get("s_list").map(|s| s.trim()) {
            None | Some("auto") => {
                if params.is_equal_mobility() {
                    vec![]
                } else {
                    default_s_list(&params).map_err(as_config)?
                }
            }
            Some(list) => list
                .split(',')
                .map(|v| {
                    let s: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::config(format!("s_list entry `{}` is not a number", v.trim())))?;
                    EntropyIndex::new(s, &params).map_err(as_config)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let emit_phi_table = match map.get("emit_phi_table").map(String::as_str) {
            None | Some("false") => false,
            Some("true") => true,
            Some(v) => return Err(Error::config(format!("emit_phi_table must be true or false, got `{v}`"))),
        };
        if emit_phi_table && s_list.is_empty() {
            return Err(Error::config("emit_phi_table needs nu != 1 and a non-empty s_list"));
        }
        let ladder_rungs = number(map, "ladder_rungs", 3usize)?;
        let window_t = number(map, "window_t", 8usize)?;
        let window_x = number(map, "window_x", 8usize)?;
        if ladder_rungs == 0 {
            return Err(Error::config("ladder_rungs must be >= 1"));
        }
        if window_t < 4 || window_x < 4 {
            return Err(Error::config("window_t and window_x must be >= 4"));
        }
        let xi_threshold = match map.get("xi_threshold").map(|s| s.trim()) {
            None | Some("auto") => None,
            Some(_) => {
                let v: f64 = number(map, "xi_threshold", 0.0)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("xi_threshold must be >= 0, got {v}")));
                }
                Some(v)
            }
        };
        // Remaining scenario preconditions are checked on the initial data.
        if let Scenario::Segregated { split, width, .. } = scheme.scenario {
            if !(width > 0.0 && split > 2.0 * width && split < 1.0 - 2.0 * width) {
                return Err(Error::config(format!("segregated needs 0 < 2 width < split < 1 - 2 width, got {split}, {width}")));
            }
        }
        Ok(Self {
            params,
            scheme,
            s_list,
            ladder_rungs,
            window_t,
            window_x,
            xi_threshold,
            output_dir: PathBuf::from(map.get("output_dir").map(String::as_str).unwrap_or(".")),
            emit_phi_table,
        })
    }
}
