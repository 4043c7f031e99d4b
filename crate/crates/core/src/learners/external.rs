//! Runs a structure learner as a child process.
//!
//! The program is called as `command... data.csv specs.json out.adj` in a
//! scratch directory and must write a `p x p` adjacency matrix to `out.adj`.

use std::fs::File;
use std::io::BufReader;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{Learner, LearnerError};
use crate::dataset::MultiRegimeDataset;
use crate::graph::MixedGraph;
use crate::scalar::Scalar;

const POLL: Duration = Duration::from_millis(10);
const STDERR_LIMIT: usize = 4000;

#[derive(Clone, Debug)]
pub struct ExternalLearner {
    command: Vec<String>,
    timeout: Duration,
}

impl ExternalLearner {
    pub fn new(command: Vec<String>, timeout: Duration) -> Self {
        assert!(!command.is_empty(), "external learner needs a command");
        Self { command, timeout }
    }
}

fn tail(text: String) -> String {
    let text = text.trim_end().to_string();
    if text.len() <= STDERR_LIMIT {
        return text;
    }
    let mut start = text.len() - STDERR_LIMIT;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    format!("...{}", &text[start..])
}

impl<T: Scalar> Learner<T> for ExternalLearner {
    fn id(&self) -> String {
        format!("external:{}", self.command.join(" "))
    }

    fn fit(&self, data: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError> {
        let dir = tempfile::tempdir()?;
        let data_path = dir.path().join("data.csv");
        let specs_path = dir.path().join("specs.json");
        let out_path = dir.path().join("out.adj");
        let err_path = dir.path().join("stderr.txt");
        data.write_files(&data_path, &specs_path)?;

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&data_path)
            .arg(&specs_path)
            .arg(&out_path)
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(File::create(&err_path)?)
            .spawn()
            .map_err(|source| LearnerError::Spawn {
                command: self.command.join(" "),
                source,
            })?;

        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(LearnerError::Timeout {
                    secs: self.timeout.as_secs_f64(),
                    stderr: tail(std::fs::read_to_string(&err_path).unwrap_or_default()),
                });
            }
            thread::sleep(POLL);
        };
        let stderr = || tail(std::fs::read_to_string(&err_path).unwrap_or_default());
        if !status.success() {
            return Err(LearnerError::NonZeroExit {
                status: status.to_string(),
                stderr: stderr(),
            });
        }
        let file = File::open(&out_path).map_err(|e| LearnerError::Malformed {
            source: crate::graph::GraphError::Parse {
                line: 0,
                msg: format!("cannot open output: {e}"),
            },
            stderr: stderr(),
        })?;
        MixedGraph::read_adjacency(BufReader::new(file), Some(data.p())).map_err(|source| {
            LearnerError::Malformed {
                source,
                stderr: stderr(),
            }
        })
    }
}
