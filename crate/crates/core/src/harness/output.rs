//! Result files.
//!
//! * `adoption.csv`: `run,t,gamma`
//! * `policy.csv`: `run,t,agent,u`
//! * `heatmap.csv`: one row per agent, one column per step, no header
//! * `summary.json`: aggregates, seeds and the full config
//!
//! Floats are written with 17 significant digits so they read back exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::ExperimentResult;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const ADOPTION_FILE: &str = "adoption.csv";
pub const POLICY_FILE: &str = "policy.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub n_agents: usize,
    pub base_seed: u64,
    pub parameter_seed: u64,
    pub run_seeds: Vec<u64>,
    pub heatmap_run: usize,
    pub gamma_mean: Vec<f64>,
    pub gamma_std: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub policy_dispersion: Vec<f64>,
    pub rho_dispersion: Vec<Option<f64>>,
    pub final_gamma: Vec<f64>,
    pub solver_warnings: Vec<usize>,
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Self {
        Self {
            label: result.config.label(),
            n_agents: result.params.len(),
            base_seed: result.config.base_seed,
            parameter_seed: result.parameter_seed,
            run_seeds: result.runs.iter().map(|r| r.seed).collect(),
            heatmap_run: result.heatmap_run,
            gamma_mean: result.gamma_mean.clone(),
            gamma_std: result.gamma_std.clone(),
            u_bar: result.u_bar.clone(),
            policy_dispersion: result.policy_dispersion.clone(),
            rho_dispersion: result.rho_dispersion.clone(),
            final_gamma: result.runs.iter().map(|r| r.final_gamma()).collect(),
            solver_warnings: result.runs.iter().map(|r| r.solver_warnings).collect(),
            config: result.config.clone(),
        }
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with every float in 17-significant-digit scientific form.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn summary_to_json(summary: &Summary) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    summary.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), io::Error::other(e))
}

/// Writes the four result files into `out_dir`, creating it if needed.
pub fn write_results(result: &ExperimentResult, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let path = dir.join(ADOPTION_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["run", "t", "gamma"]).map_err(csv_err(&path))?;
    for (i, run) in result.runs.iter().enumerate() {
        for (t, g) in run.gamma.iter().enumerate() {
            w.write_record([i.to_string(), t.to_string(), fmt_f64(*g)])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let path = dir.join(POLICY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["run", "t", "agent", "u"]).map_err(csv_err(&path))?;
    for (i, run) in result.runs.iter().enumerate() {
        for (t, row) in run.policy_matrix.iter().enumerate() {
            for (v, u) in row.iter().enumerate() {
                w.write_record([i.to_string(), t.to_string(), v.to_string(), fmt_f64(*u)])
                    .map_err(csv_err(&path))?;
            }
        }
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let path = dir.join(HEATMAP_FILE);
    let mut w = csv_writer(&path)?;
    let run = &result.runs[result.heatmap_run];
    for v in 0..result.params.len() {
        w.write_record(run.policy_matrix.iter().map(|row| fmt_f64(row[v])))
            .map_err(csv_err(&path))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let path = dir.join(SUMMARY_FILE);
    let json = summary_to_json(&Summary::from_result(result))?;
    std::fs::write(&path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}
