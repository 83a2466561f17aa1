//! The runner pipelines behind each subcommand.

use crate::artifacts::{num, OutputDir};
use crate::config::ExperimentConfig;
use crate::record::{build_id, Residual, RouteResult, RunRecord, Timing};
use mkv_core::bsde::{dpp_check, dual_check, minimal_solution, solve_penalized, DppInner, JumpHistoryTree, MinimalSolution};
use mkv_core::control_opt::{joint_mkv_value, value_direct, value_mkv, ControlCatalog};
use mkv_core::forward_sim::{flow_check, gain_estimate, simulate_coupled};
use mkv_core::randomized::value_randomized;
use mkv_core::stats::combined_ci;
use mkv_core::{BenchmarkProblem, EmpiricalMeasure, Error, Result, SimConfig, XiSampler};
use rayon::prelude::*;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Tolerance of the flow check.
pub const FLOW_TOL: f64 = 1e-10;
/// Tolerance of the dual check (relative).
pub const DUAL_TOL: f64 = 1e-6;
/// Relative tolerance floors of the route comparisons.
pub const ROUTE_REL_TOL: f64 = 0.02;
pub const DPP_REL_TOL: f64 = 0.03;
pub const ANALYTIC_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ValueDirect,
    ValueMkv,
    ValueRandomized,
    Bsde,
    Verify,
    Bench,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::ValueDirect,
        Command::ValueMkv,
        Command::ValueRandomized,
        Command::Bsde,
        Command::Verify,
        Command::Bench,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ValueDirect => "value-direct",
            Command::ValueMkv => "value-mkv",
            Command::ValueRandomized => "value-randomized",
            Command::Bsde => "bsde",
            Command::Verify => "verify",
            Command::Bench => "bench",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    problem: BenchmarkProblem,
    catalog: ControlCatalog,
    out: OutputDir,
    hash: String,
    routes: Vec<RouteResult>,
    residuals: Vec<Residual>,
    timings: Vec<Timing>,
}

impl Run<'_> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let v = f(self)?;
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(v)
    }

    fn repeats(&self) -> Vec<SimConfig> {
        (0..self.cfg.sim.repeats).map(|r| self.cfg.sim_config(r)).collect()
    }

    fn per_seed<T: Send>(&self, f: impl Fn(&SimConfig) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        self.repeats().par_iter().map(f).collect()
    }

    fn direct(&self) -> Result<Vec<f64>> {
        let x = self.cfg.x()?;
        self.per_seed(|c| Ok(value_direct(&self.problem, self.cfg.t, x, &self.cfg.pi, &self.catalog, c)?.value))
    }

    fn randomized(&self) -> Result<Vec<f64>> {
        let x = self.cfg.x()?;
        let lam = self.cfg.lambda(&self.catalog)?;
        let rcfg = self.cfg.randomized_config()?;
        self.per_seed(|c| {
            Ok(value_randomized(&self.problem, self.cfg.t, x, &self.cfg.pi, &lam, &self.catalog, &rcfg, c)?.value)
        })
    }

    fn tree(&self, c: &SimConfig) -> Result<JumpHistoryTree> {
        JumpHistoryTree::build(
            &self.problem,
            self.cfg.t,
            self.cfg.x()?,
            &self.cfg.pi,
            &self.cfg.lambda(&self.catalog)?,
            &self.catalog,
            &self.cfg.randomized_config()?,
            c,
        )
    }

    /// Minimal solution and worst dual discrepancy per seed.
    fn bsde(&self) -> Result<Vec<(MinimalSolution, f64)>> {
        let r = self.cfg.randomized()?;
        self.per_seed(|c| {
            let tree = self.tree(c)?;
            let sol = minimal_solution(&tree, &r.schedule, r.tol)?;
            let mut dual: f64 = 0.0;
            for row in &sol.trace {
                dual = dual.max(dual_check(row.n, &tree)?.rel);
            }
            Ok((sol, dual))
        })
    }

    fn write_value_vs_n(&self, sols: &[(MinimalSolution, f64)]) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .repeats()
            .iter()
            .zip(sols)
            .flat_map(|(c, (s, _))| {
                s.trace
                    .iter()
                    .map(|t| vec![c.seed.to_string(), num(t.n), num(t.root), num(t.max_u_plus), num(t.max_k)])
                    .collect::<Vec<_>>()
            })
            .collect();
        self.out
            .write_csv("value_vs_n.csv", &["seed", "n", "y_root", "max_u_plus", "max_k"], &rows)
    }

    fn finish(self, command: Command) -> Result<RunRecord> {
        let seeds = self.repeats().iter().map(|c| c.seed).collect();
        let record = RunRecord {
            command: command.name().into(),
            problem: self.problem.name.clone(),
            config_hash: self.hash,
            build: build_id(),
            seeds,
            routes: self.routes,
            residuals: self.residuals,
            timings: self.timings,
        };
        self.out.write_json("results.json", &record)?;
        Ok(record)
    }
}

/// Executes `command`, writing `config.json`, `results.json` and the command's
/// CSV tables into the configured output directory.
///
/// `bench` times a single repeat of each configured route.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunRecord> {
    let single;
    let cfg = if command == Command::Bench {
        single = ExperimentConfig {
            sim: crate::config::SimSection {
                repeats: 1,
                ..cfg.sim.clone()
            },
            ..cfg.clone()
        };
        &single
    } else {
        cfg
    };
    cfg.validate()?;
    let problem = cfg.problem()?;
    let catalog = cfg.catalog(&problem)?;
    let canonical = cfg.to_canonical_json();
    let hash = crate::config::hash_bytes(canonical.as_bytes());
    let out = OutputDir::create(Path::new(&cfg.output), cfg.sim.seed, &hash)?;
    out.write_bytes("config.json", canonical.as_bytes())?;
    let mut run = Run {
        cfg,
        problem,
        catalog,
        out,
        hash,
        routes: Vec::new(),
        residuals: Vec::new(),
        timings: Vec::new(),
    };
    match command {
        Command::Simulate => simulate(&mut run)?,
        Command::ValueDirect => {
            let values = run.timed("direct", |r| r.direct())?;
            run.routes.push(RouteResult::new("direct", values));
            direct_table(&run)?;
        }
        Command::ValueMkv => mkv(&mut run)?,
        Command::ValueRandomized => randomized(&mut run)?,
        Command::Bsde => {
            let sols = run.timed("bsde", |r| r.bsde())?;
            bsde_artifacts(&mut run, &sols)?;
        }
        Command::Verify => verify(&mut run)?,
        Command::Bench => bench(&mut run)?,
    }
    run.finish(command)
}

fn control_index(run: &Run<'_>) -> Result<usize> {
    let i = run.cfg.catalog.control;
    if i >= run.catalog.len() {
        return Err(Error::Config {
            pointer: "/catalog/control".into(),
            message: format!("catalog has {} entries", run.catalog.len()),
        });
    }
    Ok(i)
}

fn simulate(run: &mut Run<'_>) -> Result<()> {
    let ctrl = run.catalog.get(control_index(run)?).clone();
    let x = run.cfg.x()?.to_vec();
    let values = run.timed("gain", |r| {
        r.per_seed(|c| Ok(gain_estimate(&r.problem, r.cfg.t, &x, &r.cfg.pi, &ctrl, c)?.mean))
    })?;
    run.routes.push(RouteResult::new("gain", values));
    let first = run.cfg.sim_config(0);
    let tr = simulate_coupled(&run.problem, run.cfg.t, &x, &run.cfg.pi, &ctrl, &first)?;
    let mut buf = Vec::new();
    tr.write_csv(&mut buf, first.seed, &run.hash)?;
    run.out.write_bytes("trajectory.csv", &buf)
}

fn direct_table(run: &Run<'_>) -> Result<()> {
    let x = run.cfg.x()?;
    let c = run.cfg.sim_config(0);
    let d = value_direct(&run.problem, run.cfg.t, x, &run.cfg.pi, &run.catalog, &c)?;
    let rows: Vec<Vec<String>> = d
        .table
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let actions: Vec<String> = run.catalog.get(i).table().iter().map(|a| a.to_string()).collect();
            vec![i.to_string(), actions.join(" "), num(e.mean), num(e.std_error)]
        })
        .collect();
    run.out.write_csv("direct_table.csv", &["control", "actions", "gain", "std_error"], &rows)
}

fn atomic_pi(cfg: &ExperimentConfig) -> Result<EmpiricalMeasure> {
    cfg.pi.atomic_law().ok_or_else(|| Error::Config {
        pointer: "/pi".into(),
        message: "value-mkv needs an atomic initial law".into(),
    })
}

fn mkv(run: &mut Run<'_>) -> Result<()> {
    let law = atomic_pi(run.cfg)?;
    let per_seed = run.timed("mkv", |r| {
        r.per_seed(|c| value_mkv(&r.problem, r.cfg.t, &r.cfg.pi, &r.catalog, c))
    })?;
    let joint = run.timed("joint", |r| {
        r.per_seed(|c| Ok(joint_mkv_value(&r.problem, r.cfg.t, &r.cfg.pi, &r.catalog, c, Some(r.cfg.catalog.cap))?.value))
    })?;
    run.routes.push(RouteResult::new("mkv", per_seed.iter().map(|m| m.value).collect()));
    run.routes.push(RouteResult::new("joint", joint));
    let mut rows = Vec::new();
    for (c, m) in run.repeats().iter().zip(&per_seed) {
        for (k, (p, w)) in law.points().zip(law.weights()).enumerate() {
            let coords: Vec<String> = p.iter().map(|v| num(*v)).collect();
            rows.push(vec![
                c.seed.to_string(),
                k.to_string(),
                coords.join(" "),
                num(*w),
                num(m.per_atom[k].value),
                m.per_atom[k].argmax.to_string(),
            ]);
        }
    }
    run.out
        .write_csv("mkv_atoms.csv", &["seed", "atom", "point", "weight", "value", "argmax"], &rows)
}

fn randomized(run: &mut Run<'_>) -> Result<()> {
    let values = run.timed("randomized", |r| r.randomized())?;
    run.routes.push(RouteResult::new("randomized", values));
    let lam = run.cfg.lambda(&run.catalog)?;
    let rcfg = run.cfg.randomized_config()?;
    let c = run.cfg.sim_config(0);
    let v = value_randomized(&run.problem, run.cfg.t, run.cfg.x()?, &run.cfg.pi, &lam, &run.catalog, &rcfg, &c)?;
    run.out.write_json("nu_table.json", &v.policy.table())?;
    let s = v.stats;
    run.out.write_csv(
        "lattice.csv",
        &["nodes", "states", "steps", "marks", "k_max"],
        &[vec![s.nodes.to_string(), s.states.to_string(), s.steps.to_string(), s.marks.to_string(), s.k_max.to_string()]],
    )
}

fn u_plus_tolerance(run: &Run<'_>) -> Result<f64> {
    let last = *run.cfg.randomized()?.schedule.last().expect("validated schedule");
    Ok(if last > 0.0 { 10.0 / last } else { f64::INFINITY })
}

fn bsde_artifacts(run: &mut Run<'_>, sols: &[(MinimalSolution, f64)]) -> Result<()> {
    run.routes.push(RouteResult::new("bsde", sols.iter().map(|s| s.0.value).collect()));
    let worst_u = sols.iter().map(|s| s.0.trace.last().map_or(0.0, |t| t.max_u_plus)).fold(0.0, f64::max);
    let worst_dual = sols.iter().map(|s| s.1).fold(0.0, f64::max);
    run.residuals.push(Residual::new("dual_rel", worst_dual, DUAL_TOL));
    run.residuals.push(Residual::new("max_u_plus", worst_u, u_plus_tolerance(run)?));
    run.write_value_vs_n(sols)?;
    let c = run.cfg.sim_config(0);
    let tree = run.tree(&c)?;
    let last = sols[0].0.trace.last().expect("non-empty trace").n;
    let pen = solve_penalized(last, &tree)?;
    run.out.write_with("bsde_trace.csv", |buf| {
        buf.extend_from_slice(b"n,id,t,y,k,u\n");
        pen.write_trace(&tree, buf)
    })
}

fn route_residual(name: &str, a: &RouteResult, b: &RouteResult, rel: f64) -> Residual {
    let diff = (a.value - b.value).abs();
    let tol = (rel * a.value.abs()).max(2.0 * combined_ci(a.ci, b.ci));
    Residual::new(name, diff, tol)
}

/// π for the analytic oracles. The shipped oracles depend on π at most through
/// its mean, so a Gaussian law is represented by the Dirac mass at its mean.
fn oracle_law(pi: &XiSampler) -> Result<EmpiricalMeasure> {
    match pi {
        XiSampler::Gaussian { mean, .. } => EmpiricalMeasure::dirac(mean),
        other => other
            .atomic_law()
            .ok_or_else(|| Error::UnsupportedInput("law without an oracle representation".into())),
    }
}

fn analytic_gap(run: &Run<'_>, value: f64) -> Option<Result<f64>> {
    let x = run.cfg.x().ok()?;
    let law = match oracle_law(&run.cfg.pi) {
        Ok(l) => l,
        Err(e) => return Some(Err(e)),
    };
    let oracle = run.problem.analytic_value(run.cfg.t, x, &law)?;
    Some(oracle.map(|o| (value - o).abs() / o.abs().max(1e-12)))
}

fn verify(run: &mut Run<'_>) -> Result<()> {
    let v = run.cfg.verify.clone().unwrap_or_default();
    let ctrl = run.catalog.get(control_index(run)?).clone();
    let x = run.cfg.x()?.to_vec();
    let flows = run.timed("flow", |r| {
        let c = r.cfg.sim_config(0);
        v.flow_fractions
            .iter()
            .map(|f| {
                // Snap to the nearest grid node.
                let span = r.problem.horizon - r.cfg.t;
                let s = r.cfg.t + (f * c.n_steps as f64).round() * span / c.n_steps as f64;
                Ok((*f, flow_check(&r.problem, r.cfg.t, s, &x, &r.cfg.pi, &ctrl, &c)?.max()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (f, d) in flows {
        run.residuals.push(Residual::new(format!("flow@{f}"), d, FLOW_TOL));
    }

    let direct = RouteResult::new("direct", run.timed("direct", |r| r.direct())?);
    if let Some(gap) = analytic_gap(run, direct.value) {
        run.residuals.push(Residual::new("analytic_rel", gap?, ANALYTIC_REL_TOL));
    }
    if run.cfg.randomized.is_some() {
        let rand = RouteResult::new("randomized", run.timed("randomized", |r| r.randomized())?);
        run.residuals.push(route_residual("equivalence", &direct, &rand, ROUTE_REL_TOL));
        let sols = run.timed("bsde", |r| r.bsde())?;
        let bsde = RouteResult::new("bsde", sols.iter().map(|s| s.0.value).collect());
        run.residuals.push(route_residual("feynman_kac", &direct, &bsde, ROUTE_REL_TOL));
        let worst_dual = sols.iter().map(|s| s.1).fold(0.0, f64::max);
        run.residuals.push(Residual::new("dual_rel", worst_dual, DUAL_TOL));
        let worst_u = sols.iter().map(|s| s.0.trace.last().map_or(0.0, |t| t.max_u_plus)).fold(0.0, f64::max);
        run.residuals.push(Residual::new("max_u_plus", worst_u, u_plus_tolerance(run)?));
        run.write_value_vs_n(&sols)?;
        if let Some(frac) = v.dpp_fraction {
            let reports = run.timed("dpp", |r| {
                let lam = r.cfg.lambda(&r.catalog)?;
                let rcfg = r.cfg.randomized_config()?;
                let s = r.cfg.t + frac * (r.problem.horizon - r.cfg.t);
                r.per_seed(|c| {
                    dpp_check(&r.problem, r.cfg.t, s, &x, &r.cfg.pi, &lam, &r.catalog, &rcfg, DppInner::default(), c)
                })
            })?;
            let lhs = RouteResult::new("dpp_lhs", reports.iter().map(|d| d.lhs).collect());
            let rhs = RouteResult::new("dpp_rhs", reports.iter().map(|d| d.rhs).collect());
            run.residuals.push(route_residual("dpp", &lhs, &rhs, DPP_REL_TOL));
        }
        run.routes.extend([direct, rand, bsde]);
    } else {
        run.routes.push(direct);
    }
    residual_vs_dt(run, &v.dt_levels)?;
    let rows: Vec<Vec<String>> = run
        .residuals
        .iter()
        .map(|r| vec![r.name.clone(), num(r.value), num(r.tolerance), r.pass.to_string()])
        .collect();
    run.out.write_csv("residuals.csv", &["name", "value", "tolerance", "pass"], &rows)
}

/// Route and oracle gaps on the first seed at each requested step count.
fn residual_vs_dt(run: &mut Run<'_>, levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Ok(());
    }
    let x = run.cfg.x()?.to_vec();
    let rows = run.timed("residual_vs_dt", |r| {
        let mut rows = Vec::new();
        for &n in levels {
            let c = SimConfig {
                n_steps: n,
                ..r.cfg.sim_config(0)
            };
            let dt = (r.problem.horizon - r.cfg.t) / n as f64;
            let d = value_direct(&r.problem, r.cfg.t, &x, &r.cfg.pi, &r.catalog, &c)?.value;
            if let Some(gap) = analytic_gap(r, d) {
                rows.push(vec![n.to_string(), num(dt), "analytic_rel".into(), num(gap?)]);
            }
            if r.cfg.randomized.is_some() {
                let lam = r.cfg.lambda(&r.catalog)?;
                let rcfg = r.cfg.randomized_config()?;
                let v = value_randomized(&r.problem, r.cfg.t, &x, &r.cfg.pi, &lam, &r.catalog, &rcfg, &c)?.value;
                rows.push(vec![n.to_string(), num(dt), "equivalence".into(), num((d - v).abs())]);
            }
        }
        Ok(rows)
    })?;
    run.out.write_csv("residual_vs_dt.csv", &["n_steps", "dt", "residual", "value"], &rows)
}

fn bench(run: &mut Run<'_>) -> Result<()> {
    let d = run.timed("direct", |r| r.direct())?;
    run.routes.push(RouteResult::new("direct", d));
    if run.cfg.randomized.is_some() {
        let v = run.timed("randomized", |r| r.randomized())?;
        run.routes.push(RouteResult::new("randomized", v));
        let s = run.timed("bsde", |r| r.bsde())?;
        run.routes.push(RouteResult::new("bsde", s.iter().map(|s| s.0.value).collect()));
    }
    let rows: Vec<Vec<String>> = run.timings.iter().map(|t| vec![t.stage.clone(), num(t.seconds)]).collect();
    run.out.write_csv("timings.csv", &["stage", "seconds"], &rows)
}
