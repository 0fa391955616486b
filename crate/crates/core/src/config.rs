//! Flat `key = value` experiment configuration with line-precise errors.
//!
//! A config either names a generator (`variant = ...` plus its shape keys)
//! or points at an explicit instance file (`instance_file = ...`). Algorithm
//! knobs set at the top level apply to every algorithm; `<algo>.<knob>` keys
//! override one algorithm. Unknown and duplicate keys are errors, so typos
//! fail loudly instead of silently running the default.

use crate::env::{EnvError, Environment, FeatureMap, FeatureSchedule, GroundTruth, InstanceSpec, VariantSpec};
use crate::harness::{ExperimentConfig, InstanceSource, KappaMode, OptimumMode};
use crate::numeric::Vector;
use crate::policy::{AlgoConfig, AlgorithmKind, ProjectionMode};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("could not read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Ordered `key = value` entries with usage tracking; anything left unused
/// at the end of parsing is an unknown key.
struct Entries {
    items: Vec<(usize, String, String)>,
    used: Vec<bool>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut items: Vec<(usize, String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Line { line, msg: "empty key".into() });
            }
            if value.is_empty() {
                return Err(ConfigError::Line { line, msg: format!("empty value for `{key}`") });
            }
            if let Some((first, _, _)) = items.iter().find(|(_, pk, _)| *pk == key) {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            items.push((line, key, value));
        }
        let used = vec![false; items.len()];
        Ok(Entries { items, used })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let pos = self.items.iter().position(|(_, k, _)| k == key)?;
        self.used[pos] = true;
        let (line, _, value) = &self.items[pos];
        Some((*line, value.clone()))
    }

    /// Takes every key of the form `<prefix>.<knob>`, returning
    /// `(line, knob, value)` triples in file order.
    fn take_prefixed(&mut self, prefix: &str) -> Vec<(usize, String, String)> {
        let mut out = Vec::new();
        for (pos, (line, key, value)) in self.items.iter().enumerate() {
            if let Some(knob) = key.strip_prefix(prefix) {
                if let Some(knob) = knob.strip_prefix('.') {
                    self.used[pos] = true;
                    out.push((*line, knob.to_string(), value.clone()));
                }
            }
        }
        out
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, value)) => parse_typed(line, key, &value).map(Some),
        }
    }

    fn opt_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    fn require_raw(&mut self, key: &str) -> Result<(usize, String), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing(key.into()))
    }

    fn reject_unused(&self) -> Result<(), ConfigError> {
        for (pos, (line, key, _)) in self.items.iter().enumerate() {
            if !self.used[pos] {
                return Err(ConfigError::Line { line: *line, msg: format!("unknown key `{key}`") });
            }
        }
        Ok(())
    }
}

fn parse_typed<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Line {
        line,
        msg: format!("bad value `{value}` for `{key}`: {e}"),
    })
}

/// Parses `a-b,c-d,...` into index pairs.
fn parse_pairs(line: usize, key: &str, value: &str) -> Result<Vec<(usize, usize)>, ConfigError> {
    let bad = |msg: String| ConfigError::Line { line, msg };
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| bad(format!("`{key}` entries look like `3-7`, got `{tok}`")))?;
            let a = a.trim().parse::<usize>().map_err(|e| bad(format!("bad index in `{tok}`: {e}")))?;
            let b = b.trim().parse::<usize>().map_err(|e| bad(format!("bad index in `{tok}`: {e}")))?;
            Ok((a, b))
        })
        .collect()
}

fn parse_floats(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|e| ConfigError::Line {
                line,
                msg: format!("bad number `{}` in `{key}`: {e}", tok.trim()),
            })
        })
        .collect()
}

fn parse_projection(line: usize, value: &str) -> Result<ProjectionMode, ConfigError> {
    match value {
        "skip" => Ok(ProjectionMode::Skip),
        "heuristic" => Ok(ProjectionMode::Heuristic),
        other => Err(ConfigError::Line {
            line,
            msg: format!("projection_mode is `skip` or `heuristic`, got `{other}`"),
        }),
    }
}

fn parse_kappa_mode(line: usize, value: &str) -> Result<KappaMode, ConfigError> {
    match value {
        "exact" => Ok(KappaMode::Exact),
        "bound" => Ok(KappaMode::Bound),
        other => Err(ConfigError::Line {
            line,
            msg: format!("kappa_mode is `exact` or `bound`, got `{other}`"),
        }),
    }
}

fn parse_optimum_mode(line: usize, value: &str) -> Result<OptimumMode, ConfigError> {
    match value {
        "auto" => Ok(OptimumMode::Auto),
        "brute_force" => Ok(OptimumMode::BruteForce),
        "oracle_proxy" => Ok(OptimumMode::OracleProxy),
        other => Err(ConfigError::Line {
            line,
            msg: format!("optimum_mode is `auto`, `brute_force`, or `oracle_proxy`, got `{other}`"),
        }),
    }
}

const KNOB_KEYS: [&str; 8] = [
    "delta",
    "projection_mode",
    "agnostic_bonus_scale",
    "mle_tol",
    "mle_max_iter",
    "epsilon",
    "t0_scale",
    "radius_scale",
];

fn apply_knob(cfg: &mut AlgoConfig, line: usize, knob: &str, value: &str) -> Result<(), ConfigError> {
    match knob {
        "delta" => cfg.delta = parse_typed(line, knob, value)?,
        "projection_mode" => cfg.projection_mode = parse_projection(line, value)?,
        "agnostic_bonus_scale" => cfg.agnostic_bonus_scale = parse_typed(line, knob, value)?,
        "mle_tol" => cfg.mle_tol = parse_typed(line, knob, value)?,
        "mle_max_iter" => cfg.mle_max_iter = parse_typed(line, knob, value)?,
        "epsilon" => cfg.epsilon = parse_typed(line, knob, value)?,
        "t0_scale" => cfg.t0_scale = parse_typed(line, knob, value)?,
        "radius_scale" => cfg.radius_scale = parse_typed(line, knob, value)?,
        other => {
            return Err(ConfigError::Line {
                line,
                msg: format!("unknown algorithm knob `{other}`"),
            })
        }
    }
    Ok(())
}

/// Parses an experiment config. `base_dir`, when given, anchors a relative
/// `instance_file` path.
pub fn parse_experiment(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let mut e = Entries::parse(text)?;

    let horizon: usize = e.require("horizon")?;
    if horizon == 0 {
        return Err(ConfigError::Invalid("horizon must be positive".into()));
    }
    let trials: usize = e.opt_or("trials", 1)?;
    let master_seed: u64 = e.opt_or("master_seed", 0)?;

    let (algos_line, algos_raw) = e.require_raw("algorithms")?;
    let mut kinds: Vec<AlgorithmKind> = Vec::new();
    for tok in algos_raw.split(',') {
        let tok = tok.trim();
        let kind = tok.parse::<AlgorithmKind>().map_err(|err| ConfigError::Line {
            line: algos_line,
            msg: err.to_string(),
        })?;
        if kinds.contains(&kind) {
            return Err(ConfigError::Line {
                line: algos_line,
                msg: format!("algorithm `{tok}` listed twice"),
            });
        }
        kinds.push(kind);
    }

    let kappa_mode = match e.take("kappa_mode") {
        Some((line, v)) => parse_kappa_mode(line, &v)?,
        None => KappaMode::Exact,
    };
    let optimum_mode = match e.take("optimum_mode") {
        Some((line, v)) => parse_optimum_mode(line, &v)?,
        None => OptimumMode::Auto,
    };

    let mut base_cfg = AlgoConfig::for_horizon(horizon);
    for knob in KNOB_KEYS {
        if let Some((line, value)) = e.take(knob) {
            apply_knob(&mut base_cfg, line, knob, &value)?;
        }
    }
    let mut algorithms = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut cfg = base_cfg.clone();
        for (line, knob, value) in e.take_prefixed(kind.name()) {
            apply_knob(&mut cfg, line, &knob, &value)?;
        }
        cfg.validate()
            .map_err(|err| ConfigError::Invalid(format!("algorithm `{kind}`: {err}")))?;
        algorithms.push((kind, cfg));
    }

    let (instance, l) = if let Some((_, path)) = e.take("instance_file") {
        let full = match base_dir {
            Some(dir) => dir.join(&path),
            None => std::path::PathBuf::from(&path),
        };
        let contents = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
            path: full.display().to_string(),
            source,
        })?;
        let (truth, env, l) = parse_instance(&contents)?;
        (InstanceSource::Explicit { truth, env }, l)
    } else {
        let (variant_line, variant) = e.require_raw("variant")?;
        let spec_variant = match variant.as_str() {
            "cascading" => VariantSpec::Cascading { m: e.require("m")?, k: e.require("k")? },
            "pmc" => VariantSpec::Pmc {
                servers: e.require("servers")?,
                users: e.require("users")?,
                budget: e.require("budget")?,
                user_triggering: e.opt_or("user_triggering", false)?,
                edges: match e.take("edges") {
                    Some((line, v)) => Some(parse_pairs(line, "edges", &v)?),
                    None => None,
                },
            },
            "matching" => VariantSpec::Matching {
                users: e.require("users")?,
                channels: e.require("channels")?,
                pairs: match e.take("pairs") {
                    Some((line, v)) => Some(parse_pairs(line, "pairs", &v)?),
                    None => None,
                },
            },
            "routing" => {
                let nodes: usize = e.require("nodes")?;
                VariantSpec::Routing {
                    nodes,
                    source: e.opt_or("source", 0)?,
                    dest: e.opt_or("dest", nodes.saturating_sub(1))?,
                    edges: match e.take("edges") {
                        Some((line, v)) => Some(parse_pairs(line, "edges", &v)?),
                        None => None,
                    },
                }
            }
            other => {
                return Err(ConfigError::Line {
                    line: variant_line,
                    msg: format!(
                        "variant is `cascading`, `pmc`, `matching`, or `routing`, got `{other}`"
                    ),
                })
            }
        };
        let l: f64 = e.opt_or("l", 1.0)?;
        let spec = InstanceSpec {
            variant: spec_variant,
            d: e.require("d")?,
            l,
            seed: e.opt_or("instance_seed", master_seed)?,
            time_varying: e.opt_or("time_varying", false)?,
        };
        (InstanceSource::Spec(spec), l)
    };

    e.reject_unused()?;
    Ok(ExperimentConfig {
        instance,
        horizon,
        trials,
        master_seed,
        l,
        kappa_mode,
        optimum_mode,
        algorithms,
    })
}

/// Parses an explicit instance: the graph, the true parameter, and one
/// feature row per base arm (`feature.<i> = x,y,...`). Returns the ground
/// truth, the environment, and the parameter bound `l` (defaulting to
/// `max(1, |theta_star|)`).
pub fn parse_instance(text: &str) -> Result<(GroundTruth, Environment, f64), ConfigError> {
    let mut e = Entries::parse(text)?;
    let (variant_line, variant) = e.require_raw("variant")?;
    let env = match variant.as_str() {
        "cascading" => Environment::cascading(e.require("m")?, e.require("k")?)?,
        "pmc" => {
            let (line, v) = e.require_raw("edges")?;
            Environment::pmc(
                e.require("servers")?,
                e.require("users")?,
                parse_pairs(line, "edges", &v)?,
                e.require("budget")?,
                e.opt_or("user_triggering", false)?,
            )?
        }
        "matching" => {
            let (line, v) = e.require_raw("pairs")?;
            Environment::matching(
                e.require("users")?,
                e.require("channels")?,
                parse_pairs(line, "pairs", &v)?,
            )?
        }
        "routing" => {
            let (line, v) = e.require_raw("edges")?;
            Environment::routing(
                e.require("nodes")?,
                parse_pairs(line, "edges", &v)?,
                e.require("source")?,
                e.require("dest")?,
            )?
        }
        other => {
            return Err(ConfigError::Line {
                line: variant_line,
                msg: format!(
                    "variant is `cascading`, `pmc`, `matching`, or `routing`, got `{other}`"
                ),
            })
        }
    };

    let d: usize = e.require("d")?;
    if d == 0 {
        return Err(ConfigError::Invalid("d must be positive".into()));
    }
    let (theta_line, theta_raw) = e.require_raw("theta_star")?;
    let theta = parse_floats(theta_line, "theta_star", &theta_raw)?;
    if theta.len() != d {
        return Err(ConfigError::Line {
            line: theta_line,
            msg: format!("theta_star has {} entries, d = {d}", theta.len()),
        });
    }
    let theta_star = Vector::from_vec(theta);
    let l: f64 = e.opt_or("l", theta_star.norm2().max(1.0))?;
    if theta_star.norm2() > l + 1e-9 {
        return Err(ConfigError::Invalid(format!(
            "|theta_star| = {} exceeds l = {l}",
            theta_star.norm2()
        )));
    }

    let mut features = Vec::with_capacity(env.num_arms());
    for i in 0..env.num_arms() {
        let key = format!("feature.{i}");
        let (line, raw) = e.require_raw(&key)?;
        let row = parse_floats(line, &key, &raw)?;
        if row.len() != d {
            return Err(ConfigError::Line {
                line,
                msg: format!("`{key}` has {} entries, d = {d}", row.len()),
            });
        }
        let phi = Vector::from_vec(row);
        if phi.norm2() > 1.0 + 1e-9 {
            return Err(ConfigError::Line {
                line,
                msg: format!("`{key}` lies outside the unit ball: |phi| = {}", phi.norm2()),
            });
        }
        features.push(phi);
    }
    e.reject_unused()?;
    let truth = GroundTruth {
        theta_star,
        schedule: FeatureSchedule::Static(FeatureMap::new(features)),
    };
    Ok((truth, env, l))
}
