use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::determinant::{
    deformation_sweep, det_pm, det_phase_hat, gamma_for, is_nonincreasing, prepare_blocks,
    DeformationSweep, DetPhaseReport, FirstOrderOperator, OdeOptions, RouteOptions,
    TheoremOptions, default_steps, theorem_verify,
};
use crate::error::{Error, Result};
use crate::hamiltonians::{build_family, PeriodicHamiltonian};
use crate::linalg::circular_distance;
use crate::transport::{berry_phases, max_pairwise_spread, BerryOptions, BerryPhase, KatoOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Berry,
    Det,
    Verify,
    Sweep,
    Demo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Berry => "berry",
            Command::Det => "det",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Demo => "demo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: DetPhaseReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub config_hash: String,
    pub family: String,
    pub phases: Vec<BerryPhase>,
    pub rows: Vec<ReportRow>,
    pub sweeps: Vec<DeformationSweep>,
    pub checks: Vec<CheckResult>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} on {}", self.command.name(), self.family);
        let _ = writeln!(out, "config {}", &self.config_hash[..16]);
        for p in &self.phases {
            let _ = writeln!(out, "  gamma[{}] = {:.12}", p.method.name(), p.gamma);
        }
        for row in &self.rows {
            let r = &row.report;
            let _ = write!(
                out,
                "  m = {}: Im log det+ = {:.9}, Im log det- = {:.9}, gap+ = {:.3e}, gap- = {:.3e}",
                r.m, r.imlogdet_plus, r.imlogdet_minus, r.gap_plus, r.gap_minus
            );
            if let Some(full) = &r.full {
                let _ = write!(out, " (D_m: gap+ = {:.3e}, gap- = {:.3e})", full.gap_plus, full.gap_minus);
            }
            out.push('\n');
        }
        for sweep in &self.sweeps {
            let values: Vec<String> = sweep
                .rows
                .iter()
                .map(|r| format!("s={}: {:.9}", r.s, r.imlogdet_plus))
                .collect();
            let _ = writeln!(out, "  m = {}: {} (delta = {:.3e})", sweep.m, values.join(", "), sweep.delta());
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  [{verdict}] {}: {}", c.name, c.detail);
        }
        for t in &self.timings {
            let _ = writeln!(out, "  {}: {:.2}s", t.stage, t.seconds);
        }
        out
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    family: PeriodicHamiltonian,
    report: RunReport,
}

impl Runner<'_> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.report.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.report.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn require_zero_level(&self) -> Result<()> {
        if self.cfg.level_is_zero() {
            Ok(())
        } else {
            Err(Error::ConfigError(
                "determinant commands compare against the level 0; set level to the constant 0".into(),
            ))
        }
    }

    fn kato(&self, m_max: f64) -> KatoOptions {
        KatoOptions {
            steps: self.cfg.steps.unwrap_or(2 * default_steps(m_max)),
            tol: self.cfg.tolerances,
            ..Default::default()
        }
    }

    fn berry(&mut self) -> Result<()> {
        let opts = BerryOptions {
            kato: KatoOptions {
                steps: self.cfg.steps.unwrap_or(crate::transport::DEFAULT_KATO_STEPS),
                tol: self.cfg.tolerances,
                ..Default::default()
            },
            wilson_points: self.cfg.wilson_points,
            methods: self.cfg.methods.clone(),
        };
        let phases = self.timed("berry phases", |r| {
            berry_phases(&r.family, &r.cfg.level, &opts)
        })?;
        let spread = max_pairwise_spread(&phases);
        let limit = self.cfg.checks.method_agreement;
        self.check(
            "methods agree",
            spread <= limit,
            format!("max pairwise distance {spread:.3e} (limit {limit:.1e})"),
        );
        self.report.phases = phases;
        Ok(())
    }

    fn push_rows(&mut self, rows: Vec<DetPhaseReport>) {
        let hash = self.report.config_hash.clone();
        self.report.rows.extend(rows.into_iter().map(|report| ReportRow {
            config_hash: hash.clone(),
            report,
        }));
    }

    fn det(&mut self) -> Result<()> {
        self.require_zero_level()?;
        if self.cfg.m.len() != 1 {
            return Err(Error::ConfigError(format!(
                "det evaluates a single m, got {} values; pass --m",
                self.cfg.m.len()
            )));
        }
        let m = self.cfg.m[0];
        let kato = self.kato(m);
        let row = self.timed("determinant", |r| {
            let (path, blocks) = prepare_blocks(&r.family, kato.steps, kato.derivative, kato.tol)?;
            let coarse = KatoOptions {
                steps: kato.steps.min(4096),
                ..kato
            };
            let gamma = gamma_for(&r.family, &path, r.cfg.gamma_method, r.cfg.wilson_points, &coarse)?;
            let pair = det_phase_hat(&blocks, m)?;
            let mut row = DetPhaseReport::new(m, &pair, gamma, blocks.n_plus, blocks.n_minus);
            if r.cfg.full_route {
                let op = FirstOrderOperator::d_m(&r.family, m)?;
                let full = det_pm(&op, m, &route_options(r.cfg, m))?;
                row = row.with_full(&full);
            }
            Ok(row)
        })?;
        // the two Agmon branches differ by Nπ for D_m
        let n = self.family.dim() as f64;
        let branch = circular_distance(row.imlogdet_minus - row.imlogdet_plus, n * std::f64::consts::PI);
        self.check(
            "branch difference is N·pi",
            branch <= 1e-9,
            format!("deviation {branch:.3e}"),
        );
        self.push_rows(vec![row]);
        Ok(())
    }

    fn verify(&mut self) -> Result<()> {
        self.require_zero_level()?;
        let opts = TheoremOptions {
            gauge_steps: self.cfg.steps,
            gamma_method: self.cfg.gamma_method,
            wilson_points: self.cfg.wilson_points,
            full_route: self.cfg.full_route,
            slack: self.cfg.checks.monotone_slack,
            floor: self.cfg.checks.monotone_floor,
            tol: self.cfg.tolerances,
            ..Default::default()
        };
        let theorem = self.timed("theorem sweep", |r| theorem_verify(&r.family, &r.cfg.m, &opts))?;
        let last = theorem.rows.last().expect("validated m-list");
        let limit = self.cfg.checks.final_gap;
        self.check(
            "gaps non-increasing in m",
            theorem.nonincreasing(),
            format!(
                "plus {}, minus {}",
                theorem.nonincreasing_plus, theorem.nonincreasing_minus
            ),
        );
        self.check(
            "final gap",
            last.gap_plus <= limit && last.gap_minus <= limit,
            format!("m = {}: {:.3e} / {:.3e} (limit {limit:.1e})", last.m, last.gap_plus, last.gap_minus),
        );
        if self.cfg.full_route {
            let plus: Vec<f64> = theorem.rows.iter().filter_map(|r| r.full.map(|f| f.gap_plus)).collect();
            let minus: Vec<f64> = theorem.rows.iter().filter_map(|r| r.full.map(|f| f.gap_minus)).collect();
            let (slack, floor) = (self.cfg.checks.monotone_slack, self.cfg.checks.monotone_floor);
            let last_full = plus.last().copied().unwrap_or(0.0).max(minus.last().copied().unwrap_or(0.0));
            self.check(
                "full-operator gaps non-increasing in m",
                is_nonincreasing(&plus, slack, floor) && is_nonincreasing(&minus, slack, floor),
                format!("final {last_full:.3e}"),
            );
            self.check(
                "full-operator final gap",
                last_full <= limit,
                format!("{last_full:.3e} (limit {limit:.1e})"),
            );
        }
        self.push_rows(theorem.rows);
        Ok(())
    }

    fn sweep(&mut self) -> Result<()> {
        self.require_zero_level()?;
        let m_max = *self.cfg.m.last().expect("validated m-list");
        let kato = self.kato(m_max);
        let sweeps = self.timed("deformation sweep", |r| {
            let (_, blocks) = prepare_blocks(&r.family, kato.steps, kato.derivative, kato.tol)?;
            r.cfg
                .m
                .iter()
                .map(|&m| {
                    deformation_sweep(&blocks, m, &r.cfg.s, &route_options(r.cfg, m))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        if sweeps.len() > 1 {
            let first = sweeps[0].delta();
            let last = sweeps.last().expect("non-empty").delta();
            self.check(
                "deformation shrinks with m",
                last < first || last <= self.cfg.checks.monotone_floor,
                format!("delta(m = {}) = {first:.3e}, delta(m = {}) = {last:.3e}", sweeps[0].m, m_max),
            );
        }
        self.report.sweeps = sweeps;
        Ok(())
    }
}

fn route_options(cfg: &RunConfig, m: f64) -> RouteOptions {
    RouteOptions {
        route: cfg.route,
        ode: OdeOptions {
            steps: Some(default_steps(m)),
            tol: cfg.tolerances,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Runs the pipeline of `command`. Deterministic for a fixed config.
pub fn run_config(cfg: &RunConfig, command: Command) -> Result<RunReport> {
    cfg.validate()?;
    let family = build_family(&cfg.family)?;
    let label = family.label();
    let mut runner = Runner {
        cfg,
        family,
        report: RunReport {
            command,
            config_hash: cfg.hash()?,
            family: label.clone(),
            phases: Vec::new(),
            rows: Vec::new(),
            sweeps: Vec::new(),
            checks: Vec::new(),
            timings: Vec::new(),
        },
    };
    let outcome = match command {
        Command::Berry => runner.berry(),
        Command::Det => runner.det(),
        Command::Verify => runner.verify(),
        Command::Sweep => runner.sweep(),
        Command::Demo => runner.berry().and_then(|_| runner.verify()),
    };
    outcome.map_err(|e| match e {
        e @ Error::ConfigError(_) => e,
        e => e.context(label),
    })?;
    Ok(runner.report)
}
