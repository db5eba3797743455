//! Per-agent parameters and initial state.
//!
//! Reliability is drawn from an education-dependent uniform band, credibility
//! is obtained by halving reliability once per discriminated group the agent
//! belongs to, and the deficit [`Scenario`] decides which of the two deficits
//! (credibility, receptivity) is switched on.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("agent record {id}: {message}")]
    InvalidRecord { id: usize, message: String },
    #[error("seed set is empty: at least one agent must start as an adopter")]
    EmptySeedSet,
    #[error("agent records: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid synthetic population: {0}")]
    InvalidSynthetic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EducationLevel {
    Low,
    Medium,
    High,
}

impl EducationLevel {
    /// Support of the reliability distribution for this level.
    pub fn reliability_band(self) -> (f64, f64) {
        match self {
            EducationLevel::Low => (0.0, 0.4),
            EducationLevel::Medium => (0.4, 0.7),
            EducationLevel::High => (0.7, 1.0),
        }
    }

    /// Reliability at quantile `p` of the level's uniform band.
    pub fn reliability_quantile(self, p: f64) -> f64 {
        let (lo, hi) = self.reliability_band();
        lo + (hi - lo) * p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupFlags {
    pub gender_discriminated: bool,
    pub age_discriminated: bool,
    pub income_discriminated: bool,
}

impl GroupFlags {
    pub fn new(gender: bool, age: bool, income: bool) -> Self {
        Self {
            gender_discriminated: gender,
            age_discriminated: age,
            income_discriminated: income,
        }
    }

    pub fn count(&self) -> u32 {
        [
            self.gender_discriminated,
            self.age_discriminated,
            self.income_discriminated,
        ]
        .iter()
        .filter(|&&f| f)
        .count() as u32
    }
}

/// Deficit scenario: which of credibility and receptivity deficits are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// No deficit: `b = -1`, credibility equals reliability.
    Nd,
    /// Credibility deficit only.
    Cd,
    /// Receptivity deficit only.
    Rd,
    /// Both deficits.
    Crd,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Nd, Scenario::Cd, Scenario::Rd, Scenario::Crd];

    pub fn credibility_deficit(self) -> bool {
        matches!(self, Scenario::Cd | Scenario::Crd)
    }

    pub fn receptivity_deficit(self) -> bool {
        matches!(self, Scenario::Rd | Scenario::Crd)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Nd => "nd",
            Scenario::Cd => "cd",
            Scenario::Rd => "rd",
            Scenario::Crd => "crd",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nd" => Ok(Scenario::Nd),
            "cd" => Ok(Scenario::Cd),
            "rd" => Ok(Scenario::Rd),
            "crd" => Ok(Scenario::Crd),
            other => Err(format!("unknown scenario `{other}` (expected nd, cd, rd or crd)")),
        }
    }
}

/// One row of the agent record file.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub id: usize,
    pub rho0: f64,
    pub education: EducationLevel,
    pub flags: GroupFlags,
    pub is_seed: bool,
}

impl AgentRecord {
    fn validate(&self) -> Result<(), PopulationError> {
        if !(0.0..=1.0).contains(&self.rho0) {
            return Err(PopulationError::InvalidRecord {
                id: self.id,
                message: format!("rho0 = {} outside [0, 1]", self.rho0),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: usize,
    rho0: f64,
    education: EducationLevel,
    gender_flag: u8,
    age_flag: u8,
    income_flag: u8,
    is_seed: u8,
}

fn flag(id: usize, column: &str, value: u8) -> Result<bool, PopulationError> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(PopulationError::InvalidRecord {
            id,
            message: format!("{column} = {other}, expected 0 or 1"),
        }),
    }
}

/// Reads agent records from CSV with header
/// `id,rho0,education,gender_flag,age_flag,income_flag,is_seed`.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<AgentRecord>, PopulationError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for row in csv_reader.deserialize::<CsvRow>() {
        let row = row?;
        let record = AgentRecord {
            id: row.id,
            rho0: row.rho0,
            education: row.education,
            flags: GroupFlags::new(
                flag(row.id, "gender_flag", row.gender_flag)?,
                flag(row.id, "age_flag", row.age_flag)?,
                flag(row.id, "income_flag", row.income_flag)?,
            ),
            is_seed: flag(row.id, "is_seed", row.is_seed)?,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AgentRecord>, PopulationError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PopulationError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_records(file)
}

pub fn write_records<W: std::io::Write>(records: &[AgentRecord], writer: W) -> Result<(), PopulationError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(CsvRow {
            id: r.id,
            rho0: r.rho0,
            education: r.education,
            gender_flag: r.flags.gender_discriminated as u8,
            age_flag: r.flags.age_discriminated as u8,
            income_flag: r.flags.income_discriminated as u8,
            is_seed: r.is_seed as u8,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Settings for a synthetic survey-like population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPopulation {
    pub n: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_rho_range")]
    pub rho0_range: (f64, f64),
    /// Probability of belonging to each discriminated group.
    #[serde(default = "default_flag_probability")]
    pub flag_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_seeds() -> usize {
    3
}
fn default_rho_range() -> (f64, f64) {
    (0.3, 0.9)
}
fn default_flag_probability() -> f64 {
    0.4
}

impl SyntheticPopulation {
    pub fn new(n: usize, seeds: usize, seed: u64) -> Self {
        Self {
            n,
            seeds,
            rho0_range: default_rho_range(),
            flag_probability: default_flag_probability(),
            seed,
        }
    }

    /// Education levels cycle low/medium/high; reluctance, group membership
    /// and the seed set are drawn from `seed`.
    pub fn generate(&self) -> Result<Vec<AgentRecord>, PopulationError> {
        let (lo, hi) = self.rho0_range;
        if self.n == 0 || self.seeds == 0 || self.seeds > self.n {
            return Err(PopulationError::InvalidSynthetic(format!(
                "need 1 <= seeds <= n, got n={}, seeds={}",
                self.n, self.seeds
            )));
        }
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(PopulationError::InvalidSynthetic(format!(
                "bad rho0 range ({lo}, {hi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.flag_probability) {
            return Err(PopulationError::InvalidSynthetic(
                "flag probability outside [0, 1]".into(),
            ));
        }
        let mut rng = seeds::stream(self.seed, seeds::TAG_RECORDS, 0);
        let levels = [EducationLevel::Low, EducationLevel::Medium, EducationLevel::High];
        let mut records: Vec<AgentRecord> = (0..self.n)
            .map(|id| {
                let rho0 = lo + (hi - lo) * rng.random::<f64>();
                let p = self.flag_probability;
                AgentRecord {
                    id,
                    rho0,
                    education: levels[id % 3],
                    flags: GroupFlags::new(rng.random_bool(p), rng.random_bool(p), rng.random_bool(p)),
                    is_seed: false,
                }
            })
            .collect();
        let mut seed_rng = seeds::stream(self.seed, seeds::TAG_RECORDS, 1);
        for i in sample(&mut seed_rng, self.n, self.seeds) {
            records[i].is_seed = true;
        }
        Ok(records)
    }
}

/// Immutable per-agent model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Initial reluctance.
    pub rho0: f64,
    /// Receptivity to policy, in `[-1, 0]`.
    pub b: f64,
    /// Reliability.
    pub zeta: f64,
    /// Credibility, in `[0, zeta]`.
    pub gamma: f64,
    pub education: EducationLevel,
    pub flags: GroupFlags,
    pub is_seed: bool,
}

impl AgentParams {
    /// Parameters for `record` under `scenario`, given its reliability draw
    /// and the receptivity it would have if the receptivity deficit is active.
    pub fn from_record(record: &AgentRecord, scenario: Scenario, zeta: f64, random_b: f64) -> Self {
        let gamma = if scenario.credibility_deficit() {
            apply_credibility_halving(zeta, record.flags)
        } else {
            zeta
        };
        let b = if scenario.receptivity_deficit() { random_b } else { -1.0 };
        Self {
            rho0: record.rho0,
            b,
            zeta,
            gamma,
            education: record.education,
            flags: record.flags,
            is_seed: record.is_seed,
        }
    }

    /// Initial predisposition toward the technology, `1 - rho0`.
    pub fn predisposition(&self) -> f64 {
        1.0 - self.rho0
    }

    pub fn credibility_deficit(&self) -> f64 {
        self.zeta - self.gamma
    }
}

pub fn sample_reliability<R: Rng + ?Sized>(education: EducationLevel, rng: &mut R) -> f64 {
    education.reliability_quantile(rng.random::<f64>())
}

/// Halves reliability once for every discriminated group.
pub fn apply_credibility_halving(zeta: f64, flags: GroupFlags) -> f64 {
    zeta * 0.5f64.powi(flags.count() as i32)
}

/// Builds agent parameters for `scenario`.
///
/// Reliability and receptivity come from separate streams of `parameter_seed`
/// and are drawn for every scenario, so two scenarios built from the same
/// seed share their draws and differ only in which deficits are applied.
pub fn build_population(
    records: &[AgentRecord],
    scenario: Scenario,
    parameter_seed: u64,
) -> Result<Vec<AgentParams>, PopulationError> {
    let mut zeta_rng = seeds::stream(parameter_seed, seeds::TAG_RELIABILITY, 0);
    let mut b_rng = seeds::stream(parameter_seed, seeds::TAG_RECEPTIVITY, 0);
    records
        .iter()
        .map(|record| {
            record.validate()?;
            let zeta = sample_reliability(record.education, &mut zeta_rng);
            let random_b = b_rng.random_range(-1.0..=0.0);
            Ok(AgentParams::from_record(record, scenario, zeta, random_b))
        })
        .collect()
}

/// Mutable adoption state of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    /// Adoption bits.
    pub x: Vec<bool>,
    /// Current reluctances.
    pub rho: Vec<f64>,
    pub t: usize,
}

impl PopulationState {
    pub fn n_agents(&self) -> usize {
        self.x.len()
    }

    pub fn n_adopters(&self) -> usize {
        self.x.iter().filter(|&&a| a).count()
    }

    /// Fraction of adopters.
    pub fn adoption_rate(&self) -> f64 {
        self.n_adopters() as f64 / self.n_agents() as f64
    }

    pub fn non_adopters(&self) -> Vec<usize> {
        (0..self.n_agents()).filter(|&v| !self.x[v]).collect()
    }
}

pub fn init_state(params: &[AgentParams]) -> Result<PopulationState, PopulationError> {
    if !params.iter().any(|p| p.is_seed) {
        return Err(PopulationError::EmptySeedSet);
    }
    Ok(PopulationState {
        x: params.iter().map(|p| p.is_seed).collect(),
        rho: params.iter().map(|p| p.rho0).collect(),
        t: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    /// Stream that always yields the same word.
    struct ConstRng(u64);

    impl RngCore for ConstRng {
        fn next_u32(&mut self) -> u32 {
            (self.0 >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            self.0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0);
        }
    }

    fn record(flags: GroupFlags, is_seed: bool) -> AgentRecord {
        AgentRecord {
            id: 0,
            rho0: 0.5,
            education: EducationLevel::High,
            flags,
            is_seed,
        }
    }

    #[test]
    fn reliability_bands() {
        let mut rng = seeds::stream(3, 0, 0);
        for _ in 0..1000 {
            let z = sample_reliability(EducationLevel::High, &mut rng);
            assert!((0.7..=1.0).contains(&z));
            let z = sample_reliability(EducationLevel::Low, &mut rng);
            assert!((0.0..=0.4).contains(&z));
            let z = sample_reliability(EducationLevel::Medium, &mut rng);
            assert!((0.4..=0.7).contains(&z));
        }
        assert!((EducationLevel::Medium.reliability_quantile(0.5) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn reliability_from_degenerate_stream() {
        // a constant stream of 2^63 maps to the 0.5 quantile
        let mut rng = ConstRng(1 << 63);
        assert!((sample_reliability(EducationLevel::Medium, &mut rng) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn halving_rows() {
        assert_eq!(apply_credibility_halving(0.8, GroupFlags::new(true, false, true)), 0.2);
        assert_eq!(apply_credibility_halving(0.6, GroupFlags::new(false, true, false)), 0.3);
        assert_eq!(
            apply_credibility_halving(0.3, GroupFlags::new(true, true, true)),
            0.0375
        );
    }

    #[test]
    fn scenario_parameters() {
        let r = record(GroupFlags::new(true, false, true), false);
        let nd = AgentParams::from_record(&r, Scenario::Nd, 0.8, -0.3);
        assert_eq!((nd.b, nd.gamma), (-1.0, 0.8));
        let cd = AgentParams::from_record(&r, Scenario::Cd, 0.8, -0.3);
        assert_eq!((cd.b, cd.gamma), (-1.0, 0.2));
        assert!((cd.credibility_deficit() - 0.6).abs() < 1e-15);
        let rd = AgentParams::from_record(&r, Scenario::Rd, 0.8, -0.3);
        assert_eq!((rd.b, rd.gamma), (-0.3, 0.8));
        let crd = AgentParams::from_record(&r, Scenario::Crd, 0.8, -0.3);
        assert_eq!((crd.b, crd.gamma), (-0.3, 0.2));
    }

    #[test]
    fn scenarios_share_draws() {
        let records = SyntheticPopulation::new(50, 3, 9).generate().unwrap();
        let nd = build_population(&records, Scenario::Nd, 5).unwrap();
        let crd = build_population(&records, Scenario::Crd, 5).unwrap();
        let rd = build_population(&records, Scenario::Rd, 5).unwrap();
        for ((a, b), c) in nd.iter().zip(&crd).zip(&rd) {
            assert_eq!(a.zeta, b.zeta);
            assert_eq!(a.gamma, a.zeta);
            assert_eq!(c.gamma, c.zeta);
            assert_eq!(b.b, c.b);
            assert!((-1.0..=0.0).contains(&c.b));
            let ratio = b.gamma / b.zeta;
            assert!([1.0, 0.5, 0.25, 0.125].contains(&ratio) || b.zeta == 0.0);
        }
        assert_eq!(build_population(&records, Scenario::Crd, 5).unwrap(), crd);
    }

    #[test]
    fn init_state_seed_set() {
        let mut records = SyntheticPopulation::new(112, 3, 1).generate().unwrap();
        let params = build_population(&records, Scenario::Nd, 0).unwrap();
        let state = init_state(&params).unwrap();
        assert!((state.adoption_rate() - 3.0 / 112.0).abs() < 1e-15);
        assert_eq!(state.t, 0);
        assert_eq!(state.rho[5], params[5].rho0);

        for r in &mut records {
            r.is_seed = false;
        }
        let params = build_population(&records, Scenario::Nd, 0).unwrap();
        assert!(matches!(init_state(&params), Err(PopulationError::EmptySeedSet)));

        for r in &mut records {
            r.is_seed = true;
        }
        let params = build_population(&records, Scenario::Nd, 0).unwrap();
        assert_eq!(init_state(&params).unwrap().adoption_rate(), 1.0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let records = SyntheticPopulation::new(12, 2, 4).generate().unwrap();
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,rho0,education,gender_flag,age_flag,income_flag,is_seed\n"));
        assert_eq!(read_records(text.as_bytes()).unwrap(), records);

        let bad_rho = "id,rho0,education,gender_flag,age_flag,income_flag,is_seed\n0,1.5,low,0,0,0,1\n";
        assert!(matches!(
            read_records(bad_rho.as_bytes()),
            Err(PopulationError::InvalidRecord { .. })
        ));
        let bad_flag = "id,rho0,education,gender_flag,age_flag,income_flag,is_seed\n0,0.5,low,2,0,0,1\n";
        assert!(matches!(
            read_records(bad_flag.as_bytes()),
            Err(PopulationError::InvalidRecord { .. })
        ));
        let bad_level = "id,rho0,education,gender_flag,age_flag,income_flag,is_seed\n0,0.5,phd,0,0,0,1\n";
        assert!(matches!(
            read_records(bad_level.as_bytes()),
            Err(PopulationError::Csv(_))
        ));
    }
}
