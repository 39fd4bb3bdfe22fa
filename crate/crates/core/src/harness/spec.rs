use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    RefineStudy,
    UniquenessProbe,
    ClusterSim,
    GibbsSample,
    Reversibility,
    Diagnostics,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::RefineStudy,
        Command::UniquenessProbe,
        Command::ClusterSim,
        Command::GibbsSample,
        Command::Reversibility,
        Command::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::RefineStudy => "refine-study",
            Command::UniquenessProbe => "uniqueness-probe",
            Command::ClusterSim => "cluster-sim",
            Command::GibbsSample => "gibbs-sample",
            Command::Reversibility => "reversibility",
            Command::Diagnostics => "diagnostics",
        }
    }

    fn dynamic(self) -> bool {
        !matches!(self, Command::GibbsSample)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Input(format!("unknown command `{s}`")))
    }
}

use Command::*;

/// `(key, default, commands)`; an empty command list means every command.
const KEYS: &[(&str, &str, &[Command])] = &[
    ("seed", "0", &[]),
    ("dim", "2", &[]),
    ("radius", "1", &[]),
    ("n_balls", "2", &[]),
    ("box", "free", &[]),
    ("potential", "hard_core", &[]),
    ("beta", "1", &[]),
    ("riesz_a", "4", &[]),
    ("cutoff", "none", &[]),
    ("free", "zero", &[]),
    ("stiffness", "0", &[]),
    ("init", "line", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Diagnostics]),
    ("config", "none", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Diagnostics]),
    ("spacing", "1.5", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Diagnostics]),
    ("level", "8", &[Simulate, UniquenessProbe, ClusterSim, Reversibility, Diagnostics]),
    ("horizon", "1", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Reversibility, Diagnostics]),
    ("tol_proj", "1e-10", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Reversibility, Diagnostics]),
    ("max_iter", "10000", &[Simulate, RefineStudy, UniquenessProbe, ClusterSim, Reversibility, Diagnostics]),
    ("level_min", "6", &[RefineStudy]),
    ("level_max", "10", &[RefineStudy]),
    ("perturbation", "1e-6", &[UniquenessProbe]),
    ("perturb_ball", "0", &[UniquenessProbe]),
    ("perturb_coord", "0", &[UniquenessProbe]),
    ("eps", "0.5", &[ClusterSim]),
    ("eps_guard", "auto", &[ClusterSim]),
    ("windows", "auto", &[ClusterSim]),
    ("packing_fraction", "none", &[GibbsSample, Reversibility]),
    ("sweeps", "200", &[GibbsSample, Reversibility]),
    ("proposal_scale", "0.5", &[GibbsSample, Reversibility]),
    ("replicas", "100", &[Reversibility]),
    ("start", "gibbs", &[Reversibility]),
    ("ell", "2", &[Diagnostics]),
    ("delta", "0.0625", &[Diagnostics]),
    ("fcp_eps", "none", &[Diagnostics]),
    ("fcp_p", "1", &[Diagnostics]),
    ("fcp_a", "1", &[Diagnostics]),
    ("fcp_windows", "4", &[Diagnostics]),
];

fn applies(cmds: &[Command], c: Command) -> bool {
    cmds.is_empty() || cmds.contains(&c)
}

/// A fully resolved experiment: every key known to the command carries a value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub params: BTreeMap<String, String>,
}

impl ExperimentSpec {
    /// Parses `key = value` lines. `command` may appear in the text; if both it
    /// and `command_hint` are given they must agree. Relative `config` paths
    /// are resolved against `base`.
    pub fn parse(text: &str, command_hint: Option<Command>, base: Option<&Path>) -> Result<Self> {
        let mut raw: Vec<(usize, String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("line {ln}: expected `key = value`, got `{body}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Input(format!("line {ln}: empty key or value")));
            }
            if raw.iter().any(|(_, seen, _)| seen == k) {
                return Err(Error::Input(format!("line {ln}: duplicate key `{k}`")));
            }
            raw.push((ln, k.to_string(), v.to_string()));
        }

        let in_text = raw
            .iter()
            .find(|(_, k, _)| k == "command")
            .map(|(ln, _, v)| v.parse::<Command>().map_err(|e| Error::Input(format!("line {ln}: {e}"))))
            .transpose()?;
        let command = match (in_text, command_hint) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Input(format!("spec is for `{a}` but `{b}` was requested")));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Input("no command given".into())),
        };

        let mut params: BTreeMap<String, String> = KEYS
            .iter()
            .filter(|(_, _, cmds)| applies(cmds, command))
            .map(|(k, d, _)| (k.to_string(), d.to_string()))
            .collect();
        for (ln, k, v) in raw {
            if k == "command" {
                continue;
            }
            match params.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(Error::Input(format!("line {ln}: unknown key `{k}` for command `{command}`"))),
            }
        }
        if let (Some(base), Some(cfg)) = (base, params.get_mut("config")) {
            if cfg != "none" && Path::new(cfg.as_str()).is_relative() {
                *cfg = base.join(&*cfg).to_string_lossy().into_owned();
            }
        }
        Ok(Self { command, params })
    }

    /// Spec text that re-parses to `self`.
    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for (k, v) in &self.params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        match self.params.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Input(format!("unknown key `{key}` for command `{}`", self.command))),
        }
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Input(format!("key `{key}` does not apply to `{}`", self.command)))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| Error::Input(format!("key `{key}`: cannot parse `{v}`")))
    }

    /// `None` for the literal `none` or `auto`.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key)? {
            "none" | "auto" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn config_path(&self) -> Result<Option<PathBuf>> {
        Ok(self.get_opt::<String>("config")?.map(PathBuf::from))
    }

    pub fn is_dynamic(&self) -> bool {
        self.command.dynamic()
    }
}
