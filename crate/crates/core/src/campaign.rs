//! Stability campaigns: configuration, report files and exit codes.
//!
//! A campaign writes three files into its output directory:
//! `trials.jsonl` (one JSON object per trial, in trial order),
//! `summary.csv` (one row per node) and `config.json` (the resolved
//! configuration, which reruns the campaign byte for byte).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl;
use crate::families::{builtin_family, FamilyRequest};
use crate::field::PrimeContext;
use crate::perturb::{Abort, GremlinAssignment, GremlinConfig, Mode, RunEvent};
use crate::recurrence::{solve_exact, RecurrenceSpec, Solution};
use crate::stability::{
    replay_trial, run_trials, summarize, BorderlinePolicy, NodeSummary, StabilityVerdict, TrialOutcome,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Load(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CampaignError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
        move |source| CampaignError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    File(PathBuf),
    Family(FamilyRequest),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub input: Input,
    pub p: u64,
    #[serde(rename = "N")]
    pub precision: u32,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub depth: u32,
    #[serde(default)]
    pub pairwise: bool,
    #[serde(default)]
    pub borderline: BorderlinePolicy,
    /// Exact-mode star assignment run as one extra trial.
    #[serde(default)]
    pub replay: Option<PathBuf>,
    pub out: PathBuf,
}

impl CampaignConfig {
    pub fn gremlin(&self) -> Result<GremlinConfig, CampaignError> {
        let ctx = PrimeContext::new(self.p).map_err(|e| CampaignError::Config(e.to_string()))?;
        if self.trials == 0 {
            return Err(CampaignError::Config("trials must be at least 1".into()));
        }
        GremlinConfig::new(ctx, self.precision, self.depth, self.seed, self.mode)
            .map_err(|e| CampaignError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        serde_json::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }
}

/// Loads a `.rec` file or builds a family under `ctx`.
pub fn load_input(input: &Input, ctx: &PrimeContext) -> Result<RecurrenceSpec, CampaignError> {
    match input {
        Input::File(path) => {
            let text = fs::read_to_string(path).map_err(CampaignError::io(path))?;
            dsl::load(&text, ctx).map_err(|e| CampaignError::Load(format!("{}:{e}", path.display())))
        }
        Input::Family(req) => builtin_family(req, ctx).map_err(|e| CampaignError::Load(e.to_string())),
    }
}

/// One line of `trials.jsonl`.
#[derive(Debug, Serialize)]
pub struct TrialRecord<'a> {
    pub trial: u64,
    pub seeds: &'a [u64],
    pub mode: Mode,
    pub pairwise: bool,
    pub replay: bool,
    pub nodes: &'a [StabilityVerdict],
    pub abort: Option<&'a Abort>,
    pub events: &'a [RunEvent],
}

impl<'a> TrialRecord<'a> {
    pub fn new(o: &'a TrialOutcome, mode: Mode) -> Self {
        TrialRecord {
            trial: o.trial,
            seeds: &o.seeds,
            mode: if o.replay { Mode::Exact } else { mode },
            pairwise: o.pairwise,
            replay: o.replay,
            nodes: &o.verdicts,
            abort: o.abort.as_ref(),
            events: &o.events,
        }
    }
}

#[derive(Debug)]
pub struct CampaignReport {
    pub outcomes: Vec<TrialOutcome>,
    pub summary: Vec<NodeSummary>,
    /// Whether the exact solution existed (solo trials) or not (pairwise).
    pub solved: bool,
}

impl CampaignReport {
    pub fn violations(&self) -> u64 {
        self.summary.iter().map(|r| r.violations).sum()
    }

    pub fn exit_code(&self) -> i32 {
        if self.violations() > 0 {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        }
    }
}

/// Runs the trials without touching the file system.
pub fn execute(cfg: &CampaignConfig, spec: &RecurrenceSpec) -> Result<CampaignReport, CampaignError> {
    let gremlin = cfg.gremlin()?;
    let g: Option<Solution> = solve_exact(spec).ok();
    let mut outcomes =
        run_trials(spec, g.as_ref(), &gremlin, cfg.trials, cfg.pairwise).map_err(|e| CampaignError::Load(e.to_string()))?;
    if let Some(path) = &cfg.replay {
        let g = g
            .as_ref()
            .ok_or_else(|| CampaignError::Config("replay needs an exact solution".into()))?;
        let text = fs::read_to_string(path).map_err(CampaignError::io(path))?;
        let stars = GremlinAssignment::from_json(&text).map_err(|e| CampaignError::Config(e.to_string()))?;
        let outcome = replay_trial(spec, g, cfg.precision, &stars, cfg.trials)
            .map_err(|e| CampaignError::Config(e.to_string()))?;
        outcomes.push(outcome);
    }
    let summary = summarize(spec, &outcomes, cfg.borderline);
    Ok(CampaignReport { outcomes, summary, solved: g.is_some() })
}

pub fn trials_jsonl(report: &CampaignReport, mode: Mode) -> String {
    let mut out = String::new();
    for o in &report.outcomes {
        out.push_str(&serde_json::to_string(&TrialRecord::new(o, mode)).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn summary_csv(summary: &[NodeSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in summary {
        w.serialize(row).expect("summary rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Loads the input, runs the campaign and writes the three report files.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    let gremlin = cfg.gremlin()?;
    let spec = load_input(&cfg.input, &gremlin.ctx)?;
    let report = execute(cfg, &spec)?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(CampaignError::io(out))?;
    let write = |name: &str, body: String| {
        let path = out.join(name);
        fs::write(&path, body).map_err(CampaignError::io(&path))
    };
    write("trials.jsonl", trials_jsonl(&report, cfg.mode))?;
    write("summary.csv", summary_csv(&report.summary))?;
    write("config.json", serde_json::to_string_pretty(cfg).expect("config serializes") + "\n")?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(input: Input, p: u64, n: u32, trials: u64) -> CampaignConfig {
        CampaignConfig {
            input,
            p,
            precision: n,
            mode: Mode::Exact,
            trials,
            seed: 3,
            depth: 8,
            pairwise: false,
            borderline: BorderlinePolicy::Separate,
            replay: None,
            out: PathBuf::from("unused"),
        }
    }

    #[test]
    fn zero_trials_is_a_config_error() {
        let cfg = config(Input::Family(FamilyRequest::Counterexample), 2, 6, 0);
        assert!(matches!(cfg.gremlin(), Err(CampaignError::Config(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = config(Input::Family(FamilyRequest::frieze_ints(&[2, 3])), 3, 5, 10);
        cfg.replay = Some(PathBuf::from("stars.json"));
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains(r#""input":{"family":{"family":"frieze","c":["2/1","3/1"]}}"#));
        assert_eq!(CampaignConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn summary_header_and_quoting() {
        let cfg = config(Input::Family(FamilyRequest::frieze_ints(&[2, 2])), 3, 5, 4);
        let spec = load_input(&cfg.input, &PrimeContext::new(3).unwrap()).unwrap();
        let report = execute(&cfg, &spec).unwrap();
        let csv = summary_csv(&report.summary);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("node,trials,violations,borderlines,no_claims,min_margin,aborts"));
        assert!(csv.contains("\"f[2,0]\",4,0,0,0,"));
        assert_eq!(report.exit_code(), EXIT_OK);
    }

    #[test]
    fn jsonl_has_one_line_per_trial() {
        let cfg = config(Input::Family(FamilyRequest::Counterexample), 2, 6, 5);
        let spec = load_input(&cfg.input, &PrimeContext::new(2).unwrap()).unwrap();
        let report = execute(&cfg, &spec).unwrap();
        let text = trials_jsonl(&report, cfg.mode);
        assert_eq!(text.lines().count(), 5);
        for (i, line) in text.lines().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["trial"], i as u64);
            assert_eq!(v["nodes"].as_array().unwrap().len(), 8);
            assert_eq!(v["nodes"][0]["node"], "x[0]");
        }
    }
}
