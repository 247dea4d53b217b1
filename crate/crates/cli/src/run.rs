use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fastdecomp::{io, Error};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA },
            message: e.to_string(),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Output directory plus everything that goes into the provenance record.
pub struct RunContext {
    dir: PathBuf,
    command: String,
    argv: Vec<String>,
    started: Instant,
    started_unix: u64,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    pub config: Map<String, Value>,
    pub seeds: Map<String, Value>,
    /// Run-dependent details such as timings; never written to data files.
    pub diagnostics: Map<String, Value>,
}

impl RunContext {
    pub fn create(dir: &Path, command: &str, argv: Vec<String>) -> CmdResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            argv,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            inputs: vec![],
            outputs: vec![],
            config: Map::new(),
            seeds: Map::new(),
            diagnostics: Map::new(),
        })
    }

    /// Records the SHA-256 digest of an input file.
    pub fn input(&mut self, path: &Path) -> CmdResult<()> {
        let bytes = fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    /// Path for output `name` inside the run directory.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn set_config(&mut self, key: &str, value: impl Serialize) {
        self.config
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CmdResult<()> {
        let path = self.output(name);
        io::write_json(value, path)?;
        Ok(())
    }

    /// Writes `provenance.json`.
    pub fn finish(mut self, outcome: &CmdResult<()>) -> CmdResult<()> {
        let status = match outcome {
            Ok(()) => Value::from("ok"),
            Err(f) => serde_json::json!({ "exit_code": f.code, "error": f.message }),
        };
        let record = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seeds": self.seeds,
            "rng": fastdecomp::synth::RNG_ALGORITHM,
            "threads": rayon::current_num_threads(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_unix_seconds": self.started_unix,
            "runtime_seconds": self.started.elapsed().as_secs_f64(),
            "diagnostics": self.diagnostics,
            "status": status,
        });
        let path = self.output("provenance.json");
        io::write_json(&record, path)?;
        Ok(())
    }
}
