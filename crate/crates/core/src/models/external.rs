//! Simulator backed by an external executable.
//!
//! Protocol: one process invocation per draw. The parameter vector is written
//! to the child's standard input as a single line of space-separated decimal
//! numbers; the child writes the statistic vector to standard output as
//! whitespace-separated decimal numbers and exits with status 0. Any nonzero
//! exit, malformed output, or wrong arity counts as a simulation failure
//! (and is retried by the table builder).

use std::io::Write;
use std::process::{Command, Stdio};

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::models::Simulator;

#[derive(Debug, Clone)]
pub struct ExternalSimulator {
    command: String,
    param_dim: usize,
    stat_dim: usize,
}

impl ExternalSimulator {
    pub fn new(command: String, param_dim: usize, stat_dim: usize) -> Self {
        Self {
            command,
            param_dim,
            stat_dim,
        }
    }
}

impl Simulator for ExternalSimulator {
    fn id(&self) -> String {
        format!("external({})", self.command)
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn stat_dim(&self) -> usize {
        self.stat_dim
    }

    fn draw(&self, theta: &DVector<f64>, _rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        if theta.len() != self.param_dim {
            return Err(Error::invalid("external draw: theta dimension mismatch"));
        }
        let line = theta
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");

        let mut child = Command::new(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Numerical(format!("spawning '{}': {e}", self.command)))?;
        child
            .stdin
            .as_mut()
            .expect("stdin was piped")
            .write_all(format!("{line}\n").as_bytes())
            .map_err(|e| Error::Numerical(format!("writing to '{}': {e}", self.command)))?;
        let output = child
            .wait_with_output()
            .map_err(|e| Error::Numerical(format!("waiting for '{}': {e}", self.command)))?;
        if !output.status.success() {
            return Err(Error::Numerical(format!(
                "'{}' exited with {}",
                self.command, output.status
            )));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Numerical(format!("'{}' produced non-numeric '{tok}'", self.command))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != self.stat_dim {
            return Err(Error::Numerical(format!(
                "'{}' produced {} values, expected {}",
                self.command,
                values.len(),
                self.stat_dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("output of '{}'", self.command)));
        }
        Ok(DVector::from_vec(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::row_rng;
    use std::fs;
    use std::os::unix::fs::PermissionsExt;

    fn script(dir: &std::path::Path, name: &str, body: &str) -> String {
        let path = dir.join(name);
        fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[test]
    fn identity_script_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = script(dir.path(), "identity.sh", "read line; echo \"$line\"");
        let sim = ExternalSimulator::new(cmd, 2, 2);
        let theta = DVector::from_column_slice(&[1.5, -0.25]);
        let mut rng = row_rng(0, 0);
        let s = sim.draw(&theta, &mut rng).unwrap();
        assert_eq!(s, theta);
    }

    #[test]
    fn failing_script_reports_error() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = script(dir.path(), "fail.sh", "exit 3");
        let sim = ExternalSimulator::new(cmd, 1, 1);
        let mut rng = row_rng(0, 0);
        assert!(sim.draw(&DVector::from_element(1, 0.0), &mut rng).is_err());
    }

    #[test]
    fn wrong_arity_reports_error() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = script(dir.path(), "short.sh", "read line; echo 1.0");
        let sim = ExternalSimulator::new(cmd, 1, 2);
        let mut rng = row_rng(0, 0);
        assert!(sim.draw(&DVector::from_element(1, 0.0), &mut rng).is_err());
    }
}
