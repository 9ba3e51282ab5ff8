//! Command-line grammar:
//!
//! ```text
//! modrl [--single|--sync|--async|--eval] [--config <ref>] [--<table>.<key> <value>]...
//! ```
//!
//! `<ref>` is a dotted path to a JSON document, `config.ppo.cartpole` being
//! `config/ppo/cartpole.json`; a path to an existing `.json` file also works.
//! Overrides apply in order, so the last one for a key wins.

use std::path::PathBuf;

use thiserror::Error;

use crate::config::{load_config, resolve_config_ref, ConfigError, ConfigTree, OverrideSpec, TABLES};
use crate::runtime::{self, RunMode, RunOptions, RunSummary, RuntimeError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("runtime: {0}")]
    Runtime(#[from] RuntimeError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchCommand {
    pub mode: RunMode,
    pub config_ref: Option<String>,
    pub overrides: Vec<OverrideSpec>,
    pub help: bool,
}

impl Default for LaunchCommand {
    fn default() -> Self {
        Self {
            mode: RunMode::Single,
            config_ref: None,
            overrides: Vec::new(),
            help: false,
        }
    }
}

const FLAGS: [&str; 7] = ["--single", "--sync", "--async", "--eval", "--config", "--help", "-h"];

pub fn parse_args<I, S>(args: I) -> Result<LaunchCommand, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let mut cmd = LaunchCommand::default();
    let mut mode_flag: Option<String> = None;
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        i += 1;
        if arg == "--help" || arg == "-h" {
            cmd.help = true;
            continue;
        }
        if let Some(mode) = arg.strip_prefix("--").and_then(RunMode::from_flag) {
            if let Some(prev) = &mode_flag {
                return Err(CliError::Usage(format!("{prev} and {arg} both select a mode; pick one")));
            }
            mode_flag = Some(arg.clone());
            cmd.mode = mode;
            continue;
        }
        let Some(body) = arg.strip_prefix("--") else {
            if arg.starts_with('-') {
                return Err(CliError::Usage(format!("unknown flag '{arg}'\n\n{}", help_text())));
            }
            return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        if name != "config" && !name.contains('.') {
            let hint = FLAGS
                .iter()
                .map(|f| (f, strsim::levenshtein(f, arg)))
                .filter(|(_, d)| *d <= 3)
                .min_by_key(|(_, d)| *d)
                .map(|(f, _)| format!(" (did you mean {f}?)"))
                .unwrap_or_default();
            return Err(CliError::Usage(format!("unknown flag '{arg}'{hint}")));
        }
        let value = match inline {
            Some(v) => v,
            None => match args.get(i) {
                Some(v) if !v.starts_with("--") => {
                    i += 1;
                    v.clone()
                }
                _ => return Err(CliError::Usage(format!("--{name} needs a value"))),
            },
        };
        if name == "config" {
            cmd.config_ref = Some(value);
        } else {
            let spec = OverrideSpec::parse(name, &value).map_err(|e| CliError::Usage(e.to_string()))?;
            cmd.overrides.push(spec);
        }
    }
    Ok(cmd)
}

/// Directories searched for config references: the working directory, then
/// the source tree this binary was built from.
pub fn config_roots() -> Vec<PathBuf> {
    let mut roots = vec![PathBuf::from(".")];
    let source = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    if let Ok(p) = source.canonicalize() {
        roots.push(p);
    }
    roots
}

/// The config `cmd` describes, after every override.
pub fn resolve_tree(cmd: &LaunchCommand, roots: &[PathBuf]) -> Result<ConfigTree, CliError> {
    let mut tree = match &cmd.config_ref {
        Some(r) => load_config(&resolve_config_ref(r, roots)?)?,
        None => ConfigTree::default_config(),
    };
    for o in &cmd.overrides {
        tree.apply_override_in_place(o)?;
    }
    tree.check_registries()?;
    Ok(tree)
}

pub fn dispatch(cmd: &LaunchCommand, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let tree = resolve_tree(cmd, &config_roots())?;
    log::info!(
        "{} run: agent {} on {} (logs under {})",
        cmd.mode.name(),
        tree.agent_name(),
        tree.env_name(),
        opts.logs_root.display()
    );
    Ok(runtime::run(&tree, cmd.mode, opts)?)
}

/// Parses, runs, reports, and returns the process exit code.
pub fn main_with<I, S>(args: I, opts: &RunOptions) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let cmd = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if cmd.help {
        println!("{}", help_text());
        return 0;
    }
    match dispatch(&cmd, opts) {
        Ok(summary) => {
            let best = summary.best_score().map_or("none".to_string(), |s| format!("{s:.2}"));
            println!(
                "finished: {} steps, {} updates, best score {best}, logs in {}",
                summary.steps,
                summary.learner_updates,
                summary.run_dir.root.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn help_text() -> String {
    let agents: Vec<String> = crate::agents::agent_registry()
        .iter()
        .map(|(n, d)| format!("    {n:<12} {d}"))
        .collect();
    format!(
        "modrl: modular deep reinforcement learning\n\
         \n\
         USAGE:\n    modrl [MODE] [--config <ref>] [--<table>.<key> <value>]...\n\
         \n\
         MODES (at most one, default --single):\n\
         \x20   --single     one actor interleaved with the learner\n\
         \x20   --sync       actor rounds behind a barrier (train.num_workers, train.update_period)\n\
         \x20   --async      actor batches collected in time windows (train.window_ms)\n\
         \x20   --eval       score the checkpoint at train.load_path\n\
         \n\
         CONFIG:\n\
         \x20   --config a.b.c          loads a/b/c.json; without it the DQN CartPole defaults are used\n\
         \x20   --<table>.<key> <v>     overrides one value; tables are {}\n\
         \x20                           values keep the existing key's type; later overrides win\n\
         \n\
         AGENTS:\n{}\n\
         \n\
         ENVIRONMENTS:\n    {}\n\
         \n\
         NETWORKS:\n    {}\n\
         \n\
         OPTIMIZERS:\n    {}\n\
         \n\
         EXIT CODES: 0 success, 1 runtime failure, 2 usage error",
        TABLES.join(", "),
        agents.join("\n"),
        crate::envs::env_names().join(", "),
        crate::networks::network_names().join(", "),
        crate::nn::OptimizerKind::NAMES.join(", "),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_command_lines() {
        let c = parse_args(["--config", "config.dqn.cartpole"]).unwrap();
        assert_eq!(c.mode, RunMode::Single);
        assert_eq!(c.config_ref.as_deref(), Some("config.dqn.cartpole"));
        let c = parse_args(["--sync", "--config", "config.ppo.cartpole", "--train.num_workers", "8"]).unwrap();
        assert_eq!(c.mode, RunMode::Sync);
        assert_eq!(c.overrides.len(), 1);
        assert_eq!(c.overrides[0].key_path(), "train.num_workers");
    }

    #[test]
    fn usage_errors_exit_two() {
        for argv in [
            vec!["--sync", "--async"],
            vec!["--train.run_step"],
            vec!["--train.run_step", "--sync"],
            vec!["-x"],
            vec!["--bogus"],
            vec!["stray"],
            vec!["--config"],
            vec!["--nope.key", "1"],
        ] {
            let e = parse_args(argv.clone()).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{argv:?}");
        }
    }

    #[test]
    fn negative_values_are_values() {
        let c = parse_args(["--env.seed_offset", "-3"]).unwrap();
        assert_eq!(c.overrides.len(), 1);
    }

    #[test]
    fn later_override_wins() {
        let c = parse_args(["--train.run_step", "5", "--train.run_step=7"]).unwrap();
        let tree = resolve_tree(&c, &[]).unwrap();
        assert_eq!(tree.train.u64_or("run_step", 0).unwrap(), 7);
    }

    #[test]
    fn help_lists_registries() {
        let h = help_text();
        for name in ["--eval", "rainbow", "pendulum", "noisy_dueling", "adam"] {
            assert!(h.contains(name), "{name}");
        }
    }

    #[test]
    fn bad_registry_name_names_the_registry() {
        let c = parse_args(["--agent.name", "dqm"]).unwrap();
        let e = resolve_tree(&c, &[]).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("agent"), "{e}");
    }
}
