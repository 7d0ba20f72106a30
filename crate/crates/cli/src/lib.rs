//! Batch driver for the hole-spin qubit simulator.

pub mod config;
pub mod run;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use config::{Command, ConfigError, RunConfig};
use log::info;

/// Exit status of a failed run.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] holekp_core::Error),
    #[error("cannot write output: {0}")]
    Output(#[source] std::io::Error),
}

impl RunError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for output I/O.
    pub fn exit_code(&self) -> i32 {
        use holekp_core::Error as E;
        match self {
            RunError::Config(_) => 2,
            RunError::Output(_) => 1,
            RunError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::UnsupportedOperator(_)
                | E::Parse { .. }
                | E::IncompatibleFields(_)
                | E::UnknownRegion(_)
                | E::Io(_) => 2,
                _ => 3,
            },
        }
    }
}

/// Resolves the output directory: `--out` wins over `[output] dir`, then `.`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn create(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(RunError::Output)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Output(e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(RunError::Output)
}

/// Runs one command and writes its files; returns the paths written.
pub fn execute(command: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PathBuf>, RunError> {
    cfg.validate(command)?;
    let dir = output_dir(cfg, out);
    let mut written = Vec::new();
    let mut table = |name: &str, t: &table::Table| -> Result<(), RunError> {
        run::write_table(&dir, name, t).map_err(RunError::Output)?;
        written.push(dir.join(name));
        Ok(())
    };
    match command {
        Command::Solve => {
            let r = run::solve(cfg)?;
            create(&dir)?;
            table("solve_states.csv", &r.states)?;
            write_json(&dir.join("solve_summary.json"), &r.summary)?;
            written.push(dir.join("solve_summary.json"));
        }
        Command::Sweep => {
            let rows = run::sweep(cfg)?;
            let sw = cfg.sweep.as_ref().expect("validated sweep section");
            create(&dir)?;
            table(&format!("sweep_{}.csv", sw.axis.name()), &run::sweep_table(cfg, &rows))?;
        }
        Command::GMatrix => {
            let r = run::gmatrix(cfg)?;
            create(&dir)?;
            table("gmatrix.csv", &r.gmatrix)?;
            table("angular_map.csv", &r.angular_map)?;
            if let Some(c) = &r.comparison {
                table("comparison.csv", c)?;
            }
            if let Some(m) = r.comparison_max_deviation {
                info!("direct vs g-matrix: max relative deviation {:.3}%", 100.0 * m);
            }
        }
    }
    for p in &written {
        info!("wrote {}", p.display());
    }
    Ok(written)
}

/// Worker count: `--threads`, then `HOLEKP_THREADS`, then all cores (None).
pub fn thread_count(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, ConfigError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(ConfigError::new("--threads", "must be at least 1"));
        }
        return Ok(Some(n));
    }
    match env {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError::new(
                "HOLEKP_THREADS",
                format!("expected a positive integer, got `{s}`"),
            )),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_environment() {
        assert_eq!(thread_count(Some(3), Some("8")).unwrap(), Some(3));
        assert_eq!(thread_count(None, Some("8")).unwrap(), Some(8));
        assert_eq!(thread_count(None, None).unwrap(), None);
        assert!(thread_count(None, Some("many")).is_err());
        assert!(thread_count(Some(0), None).is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        use holekp_core::Error as E;
        assert_eq!(RunError::from(ConfigError::new("a", "b")).exit_code(), 2);
        assert_eq!(RunError::from(E::UnknownRegion("moat".into())).exit_code(), 2);
        assert_eq!(
            RunError::from(E::NonConvergence {
                iterations: 1,
                residual: 1.0
            })
            .exit_code(),
            3
        );
        assert_eq!(RunError::from(E::DegenerateTensor([0.0; 3])).exit_code(), 3);
    }
}
