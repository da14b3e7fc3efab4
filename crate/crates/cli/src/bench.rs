//! The benchmark commands. Each writes its CSV/SVG files into its own output
//! directory and returns the list of asserted properties.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use smoothflow::dro::{make_dro_benchmark, DroEvaluator};
use smoothflow::dynamics::{
    accelerated_rate_bound, diagnostics, energy_derivative_check, gradflow_raw_gap_bound, integrate_gradflow,
    integrate_inertial, schedule_check, window_max, DiagnosticsRecord, EnergyCheck, FlowKind, Integrator,
    OdeOptions, Reference, Sampler, Schedule, SmoothedObjective, Trajectory,
};
use smoothflow::smoothing::FnFamily;
use smoothflow::{FeasibleSet, Matrix, Penalty, QuadraticFamily, SupProblem, Vector};

use crate::config::{BuiltProblem, IntegratorChoice, PenaltySpec, ProblemSpec, RunConfig, SetSpec};
use crate::reference::{cached_reference, ReferenceSolution};
use crate::report::{cell, render_report, slope_guide, write_svg, write_table, TrajectoryTable};
use crate::seeds;
use crate::svg::{Plot, Series};

/// Energy-derivative slack relative to `1 + |E|`.
pub const ENERGY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandReport {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl CommandReport {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            files: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Writes `summary.json` and, if any check failed, `failures.json`.
    pub fn finish(&mut self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let summary = dir.join("summary.json");
        let failures = dir.join("failures.json");
        let _ = std::fs::remove_file(&failures);
        if !self.passed() {
            std::fs::write(&failures, serde_json::to_string_pretty(&self.failures())?)
                .with_context(|| format!("writing {}", failures.display()))?;
            self.files.push(failures);
        }
        self.files.push(summary.clone());
        std::fs::write(&summary, serde_json::to_string_pretty(&*self)?)
            .with_context(|| format!("writing {}", summary.display()))?;
        Ok(())
    }
}

/// The two-objective quadratic benchmark: `M₁ = diag(2, 1)`, `M₂ = diag(1, 2)`,
/// `x¹ = (1, 0)`, `x² = (0, 1)`, max scalarization with entropic smoothing.
pub fn moo_family() -> QuadraticFamily {
    QuadraticFamily::new(
        vec![
            Matrix::from_diagonal(&Vector::from_column_slice(&[2.0, 1.0])),
            Matrix::from_diagonal(&Vector::from_column_slice(&[1.0, 2.0])),
        ],
        vec![Vector::from_column_slice(&[1.0, 0.0]), Vector::from_column_slice(&[0.0, 1.0])],
        Vector::zeros(2),
    )
    .expect("benchmark matrices are symmetric positive definite")
}

pub fn moo_problem() -> smoothflow::Result<SupProblem> {
    SupProblem::new(Arc::new(moo_family()), FeasibleSet::simplex(2)?, Penalty::kl_uniform(2)?)
}

/// `ρ ↦ (2ρ/(ρ+1), 2(1−ρ)/(2−ρ))` on `[0, 1]`.
pub fn pareto_curve(points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|k| {
            let rho = k as f64 / (points - 1) as f64;
            (2.0 * rho / (rho + 1.0), 2.0 * (1.0 - rho) / (2.0 - rho))
        })
        .collect()
}

fn r_label(r: f64) -> String {
    format!("r{r}")
}

/// A completed trajectory with its diagnostics.
#[derive(Debug, Clone)]
pub struct Cell {
    pub r: f64,
    pub schedule: Schedule,
    pub trajectory: Trajectory,
    pub records: Vec<DiagnosticsRecord>,
}

pub struct InertialRun<'a> {
    pub problem: &'a BuiltProblem,
    pub reference: &'a ReferenceSolution,
    pub alpha: f64,
    pub c: f64,
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vector,
    pub v0: Vector,
    pub samples: usize,
    pub opts: OdeOptions,
}

fn reference_of(sol: &ReferenceSolution) -> Reference {
    Reference {
        inf_phi: sol.inf_phi,
        x_star: Some(sol.x_star()),
    }
}

impl InertialRun<'_> {
    pub fn run(&self, r: f64) -> anyhow::Result<Cell> {
        let schedule = Schedule::power(self.c, r)?;
        let mut obj = self.problem.clone();
        let trajectory = integrate_inertial(
            &mut obj,
            &schedule,
            self.alpha,
            self.t0,
            self.t_end,
            &self.x0,
            &self.v0,
            &Sampler::LogSpaced(self.samples),
            &self.opts,
        )
        .with_context(|| format!("inertial run with r = {r}"))?;
        let records = diagnostics(&mut obj, &trajectory, &schedule, &reference_of(self.reference))?;
        Ok(Cell {
            r,
            schedule,
            trajectory,
            records,
        })
    }

    pub fn run_all(&self, rs: &[f64]) -> anyhow::Result<Vec<Cell>> {
        rs.par_iter().map(|&r| self.run(r)).collect()
    }
}

/// Gradient-flow run of one schedule.
pub fn gradflow_cell(
    problem: &BuiltProblem,
    reference: &ReferenceSolution,
    c: f64,
    r: f64,
    t0: f64,
    t_end: f64,
    x0: &Vector,
    samples: usize,
    opts: &OdeOptions,
) -> anyhow::Result<Cell> {
    let schedule = Schedule::power(c, r)?;
    let mut obj = problem.clone();
    let trajectory = integrate_gradflow(&mut obj, &schedule, t0, t_end, x0, &Sampler::LogSpaced(samples), opts)
        .with_context(|| format!("gradient flow with r = {r}"))?;
    let records = diagnostics(&mut obj, &trajectory, &schedule, &reference_of(reference))?;
    Ok(Cell {
        r,
        schedule,
        trajectory,
        records,
    })
}

/// Least-squares slope of `log y` against `log t` over `t ∈ [a, b]`.
pub fn loglog_slope(points: &[(f64, f64)], a: f64, b: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, y)| *t >= a && *t <= b && *y > 0.0)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Running supremum from the right: `S(t) = sup_{s ≥ t} y(s)`.
pub fn tail_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); points.len()];
    let mut m = f64::NEG_INFINITY;
    for (i, &(t, y)) in points.iter().enumerate().rev() {
        m = m.max(y);
        out[i] = (t, m);
    }
    out
}

/// Decay exponent of the window maxima of `f` between `[b/20, b/10]` and
/// `[b/2, b]`, i.e. over the final decade.
pub fn final_decade_slope(records: &[DiagnosticsRecord], b: f64, f: impl Fn(&DiagnosticsRecord) -> f64) -> Option<f64> {
    let early = window_max(records, b / 20.0, b / 10.0, &f)?;
    let late = window_max(records, b / 2.0, b, &f)?;
    (early > 0.0 && late > 0.0).then(|| (late / early).log10())
}

/// `max over [a0, b0]` divided by `max over [a1, b1]`.
pub fn envelope_ratio(
    records: &[DiagnosticsRecord],
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    f: impl Fn(&DiagnosticsRecord) -> f64,
) -> Option<f64> {
    let early = window_max(records, a0, b0, &f)?;
    let late = window_max(records, a1, b1, &f)?;
    Some(early / late)
}

/// Sample-wise invariants shared by every inertial run.
pub fn invariant_checks(cell: &Cell, alpha: f64, c: f64, slack: f64, label: &str) -> Vec<Check> {
    let recs = &cell.records;
    let w_bad = recs.iter().filter(|r| r.w < -slack).count();
    let e_bad = recs
        .iter()
        .filter(|r| {
            let k = r.t * r.t / ((alpha - 1.0) * (alpha - 1.0));
            r.energy_e.is_some_and(|e| e < -c * k * r.mu - k * slack)
        })
        .count();
    let w_min = recs.iter().map(|r| r.w).fold(f64::INFINITY, f64::min);
    vec![
        Check::new(
            format!("{label}: W >= 0"),
            w_bad == 0,
            format!("{w_bad} of {} samples below -{slack:.1e}; min W = {w_min:.3e}", recs.len()),
        ),
        Check::new(
            format!("{label}: E >= -C t^2 mu/(alpha-1)^2"),
            e_bad == 0,
            format!("{e_bad} of {} samples violate the lower bound", recs.len()),
        ),
    ]
}

pub fn energy_check(cell: &Cell, alpha: f64, c: f64) -> EnergyCheck {
    energy_derivative_check(&cell.records, &cell.schedule, alpha, c, ENERGY_TOL)
}

fn energy_checks(cell: &Cell, alpha: f64, c: f64, label: &str) -> Vec<Check> {
    let ec = energy_check(cell, alpha, c);
    vec![
        Check::new(
            format!("{label}: energy derivative bound at >= 99% of midpoints"),
            ec.fraction() >= 0.99,
            format!(
                "{} of {} midpoints within 1e-6 (1+|E|); worst excess {:.3e}",
                ec.within, ec.midpoints, ec.worst_excess
            ),
        ),
        Check::new(
            format!("{label}: energy derivative bound at all midpoints with 10x slack"),
            ec.within_relaxed == ec.midpoints,
            format!("{} of {} midpoints", ec.within_relaxed, ec.midpoints),
        ),
    ]
}

/// `sup t²|ζ|` over `[a, b]` against the energy-estimate bound.
fn rate_check(cell: &Cell, alpha: f64, c: f64, a: f64, b: f64, slack: f64, label: &str) -> Check {
    let sup = window_max(&cell.records, a, b, |r| r.t2_abs_residual);
    let e0 = cell.records.first().and_then(|r| r.energy_e);
    let bound = e0.and_then(|e0| accelerated_rate_bound(&cell.schedule, alpha, c, cell.trajectory.t0, e0 + slack));
    let bound = bound.map(|bd| bd + b * b * slack);
    match (sup, bound) {
        (Some(s), Some(bd)) => Check::new(
            format!("{label}: sup t^2|zeta| on [{a}, {b}] bounded"),
            s.is_finite() && s <= bd,
            format!("sup = {s:.6e}, energy bound = {bd:.6e}"),
        ),
        (Some(s), None) => Check::new(
            format!("{label}: sup t^2|zeta| on [{a}, {b}] finite"),
            s.is_finite(),
            format!("sup = {s:.6e} (no closed-form bound for this schedule)"),
        ),
        _ => Check::new(format!("{label}: sup t^2|zeta| on [{a}, {b}]"), false, "no samples in window"),
    }
}

fn residual_points(cell: &Cell) -> Vec<(f64, f64)> {
    cell.records.iter().map(|r| (r.t, r.residual.abs())).collect()
}

fn residual_plot(title: &str, cells: &[Cell], t0: f64, t_end: f64) -> Plot {
    let mut plot = Plot::new(title, "t", "|phi_mu(x(t)) - inf phi|").log_log();
    for cl in cells {
        plot = plot.with(Series::new(format!("r = {}", cl.r), residual_points(cl)));
    }
    let y_ref = cells
        .iter()
        .filter_map(|cl| cl.records.first().map(|r| r.residual.abs()))
        .fold(0.0, f64::max)
        .max(1e-12);
    plot.with(Series::new("slope -2", slope_guide(t0, t_end, t0, y_ref, -2.0)).dashed().color("#555555"))
}

fn alpha_banner(alpha: f64) -> Option<String> {
    (alpha < 3.0).then(|| format!("alpha = {alpha} < 3: outside the range covered by the rate theory"))
}

fn out_dir(cfg: &RunConfig, base: &Path, command: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| base.to_path_buf()).join(command)
}

fn reference_dir(cfg: &RunConfig, base: &Path) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| base.to_path_buf()).join("reference")
}

fn tables(cells: &[Cell], prefix: &str) -> Vec<(String, usize)> {
    cells.iter().enumerate().map(|(i, c)| (format!("{prefix}_{}", r_label(c.r)), i)).collect()
}

fn write_cells(dir: &Path, cells: &[Cell], prefix: &str, plots: &[(&str, &Plot)]) -> anyhow::Result<Vec<PathBuf>> {
    let names = tables(cells, prefix);
    let t: Vec<TrajectoryTable<'_>> = names
        .iter()
        .map(|(name, i)| TrajectoryTable {
            name,
            trajectory: &cells[*i].trajectory,
            records: &cells[*i].records,
        })
        .collect();
    Ok(render_report(dir, &t, plots)?)
}

/// The multiobjective quadratic benchmark.
pub fn bench_moo(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("bench-moo");
    let dir = out_dir(cfg, base, "bench-moo");
    let problem = BuiltProblem::Sup(moo_problem()?);
    let reference = cached_reference(&ProblemSpec::Moo, cfg.seed, &problem, &reference_dir(cfg, base))?;
    let x_star = reference.x_star();
    let target = Vector::from_element(2, 2.0 / 3.0);
    report.checks.push(Check::new(
        "reference x* = (2/3, 2/3)",
        (&x_star - &target).amax() <= 1e-6,
        format!("x* = ({:.10}, {:.10}) by {}", x_star[0], x_star[1], reference.method),
    ));
    report.checks.push(Check::new(
        "reference inf phi = 1/3",
        (reference.inf_phi - 1.0 / 3.0).abs() <= 1e-8,
        format!("inf phi = {:.12}, bracket width {:.2e}", reference.inf_phi, reference.width()),
    ));

    let spec = &cfg.moo;
    report.warnings.extend(alpha_banner(spec.alpha));
    let run = InertialRun {
        problem: &problem,
        reference: &reference,
        alpha: spec.alpha,
        c: spec.c,
        t0: cfg.t0,
        t_end: spec.t_end,
        x0: Vector::zeros(2),
        v0: Vector::zeros(2),
        samples: cfg.samples,
        opts: cfg.ode_options(IntegratorChoice::DormandPrince, Integrator::DormandPrince),
    };
    let cells = run.run_all(&spec.r)?;
    let c = problem.sup_constant();
    let slack = reference.width();
    let mut phi_problem = problem.clone();
    for cl in &cells {
        let label = format!("r = {}", cl.r);
        let end = cl.trajectory.last();
        let dist = (&end.x - &x_star).amax();
        report.checks.push(Check::new(
            format!("{label}: endpoint within 1e-2 of x*"),
            dist <= 1e-2,
            format!("x(T) = ({:.6}, {:.6}), distance {dist:.3e}", end.x[0], end.x[1]),
        ));
        let phi_end = phi_problem.raw_value(&end.x)?;
        report.checks.push(Check::new(
            format!("{label}: |phi(x(T)) - inf phi| <= 1e-2"),
            (phi_end - reference.inf_phi).abs() <= 1e-2,
            format!("phi(x(T)) = {phi_end:.8}"),
        ));
        report.checks.push(rate_check(cl, spec.alpha, c, 5.0_f64.max(cfg.t0), spec.t_end, slack, &label));
        let slope = final_decade_slope(&cl.records, spec.t_end, |r| r.residual.abs());
        report.checks.push(Check::new(
            format!("{label}: |zeta| decays with slope <= -2 over the final decade"),
            slope.is_some_and(|s| s <= -2.0),
            format!("window-max slope {}", slope.map_or("undefined".into(), |s| format!("{s:.4}"))),
        ));
        report.checks.extend(invariant_checks(cl, spec.alpha, c, slack, &label));
        report.checks.extend(energy_checks(cl, spec.alpha, c, &label));
        report.warnings.extend(cl.trajectory.warnings.iter().cloned());
    }

    let residuals = residual_plot("Residuals, multiobjective benchmark", &cells, cfg.t0, spec.t_end);
    let mut traj = Plot::new("Trajectories, multiobjective benchmark", "x_1", "x_2")
        .with(Series::new("Pareto set", pareto_curve(101)).dashed().color("#555555"));
    for cl in &cells {
        traj = traj.with(Series::new(
            format!("r = {}", cl.r),
            cl.trajectory.states.iter().map(|s| (s.x[0], s.x[1])).collect(),
        ));
    }
    if let Some(b) = alpha_banner(spec.alpha) {
        traj.title = format!("{} ({b})", traj.title);
    }
    report.files = write_cells(&dir, &cells, "moo", &[("moo_residuals", &residuals), ("moo_trajectories", &traj)])?;
    report.finish(&dir)?;
    Ok(report)
}

/// Writes the DRO instance in the config format.
fn dro_instance_spec(bench: &smoothflow::dro::DroBenchmark) -> ProblemSpec {
    let a = bench.set.moment_matrix();
    ProblemSpec::Quadratic {
        matrices: bench
            .s_diag
            .iter()
            .map(|s| {
                (0..s.len())
                    .map(|i| (0..s.len()).map(|j| if i == j { s[i] } else { 0.0 }).collect())
                    .collect()
            })
            .collect(),
        anchors: bench.d.iter().map(|d| d.iter().copied().collect()).collect(),
        offsets: Some(bench.e.iter().copied().collect()),
        set: SetSpec::MomentPolytope {
            a: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
            b: bench.set.moment_rhs().iter().copied().collect(),
        },
        penalty: PenaltySpec::Kl { prior: None },
    }
}

#[derive(Serialize)]
struct InstanceFile {
    problem: ProblemSpec,
}

/// The moment-constrained DRO benchmark.
pub fn bench_dro(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("bench-dro");
    let dir = out_dir(cfg, base, "bench-dro");
    let spec = &cfg.dro;
    let inst = make_dro_benchmark(seeds::stream(cfg.seed, "dro-instance"), spec.n, spec.m)?;
    std::fs::create_dir_all(&dir)?;
    let inst_path = dir.join("dro_instance.toml");
    std::fs::write(&inst_path, toml::to_string(&InstanceFile { problem: dro_instance_spec(&inst) })?)?;
    let problem = BuiltProblem::Dro(DroEvaluator::uniform(Arc::new(inst.costs.clone()), inst.set.clone())?);
    let pspec = ProblemSpec::Dro { n: spec.n, m: spec.m };
    let reference = cached_reference(&pspec, cfg.seed, &problem, &reference_dir(cfg, base))?;
    report.checks.push(Check::new(
        "reference bracket certified",
        reference.width() <= crate::reference::BRACKET_TOL * (1.0 + reference.inf_phi.abs()),
        format!(
            "inf phi = {:.12}, bracket [{:.12}, {:.12}] by {}",
            reference.inf_phi, reference.certified_bracket[0], reference.certified_bracket[1], reference.method
        ),
    ));
    report.warnings.extend(alpha_banner(spec.alpha));
    let run = InertialRun {
        problem: &problem,
        reference: &reference,
        alpha: spec.alpha,
        c: spec.c,
        t0: cfg.t0,
        t_end: spec.t_end,
        x0: Vector::zeros(spec.n),
        v0: Vector::zeros(spec.n),
        samples: cfg.samples,
        opts: cfg.ode_options(IntegratorChoice::DormandPrince, Integrator::DormandPrince),
    };
    let cells = run.run_all(&spec.r)?;
    let c = problem.sup_constant();
    let slack = reference.width();
    for cl in &cells {
        let label = format!("r = {}", cl.r);
        report.checks.push(rate_check(cl, spec.alpha, c, 5.0_f64.max(cfg.t0), spec.t_end, slack, &label));
        report.checks.extend(invariant_checks(cl, spec.alpha, c, slack, &label));
    }

    // worst-case distributions along each run
    let mut eval = DroEvaluator::uniform(Arc::new(inst.costs.clone()), inst.set.clone())?;
    for cl in &cells {
        let n = spec.n;
        let m = spec.m;
        let d = inst.set.moment_matrix().nrows();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("p_{i}")));
        header.extend((1..=d).map(|i| format!("theta_{i}")));
        header.push("value".into());
        let mut rows = Vec::new();
        eval.reset_warm_start();
        for st in &cl.trajectory.states {
            let e = eval.evaluate(&st.x, cl.schedule.mu(st.t))?;
            let mut row = vec![cell(st.t)];
            row.extend(st.x.iter().map(|&v| cell(v)));
            row.extend(e.tilting.p.iter().map(|&v| cell(v)));
            row.extend(e.tilting.theta.iter().map(|&v| cell(v)));
            row.push(cell(e.value));
            rows.push(row);
        }
        let path = dir.join(format!("dro_tilting_{}.csv", r_label(cl.r)));
        write_table(&path, &header, &rows)?;
        report.files.push(path);
    }

    let residuals = residual_plot("Residuals, DRO benchmark", &cells, cfg.t0, spec.t_end);
    let mut files = write_cells(&dir, &cells, "dro", &[("dro_residuals", &residuals)])?;
    files.push(inst_path);
    report.files.extend(files);
    report.finish(&dir)?;
    Ok(report)
}

fn flow_initial(cfg: &RunConfig, n: usize) -> anyhow::Result<(Vector, Vector)> {
    let get = |v: &Option<Vec<f64>>, name: &str| -> anyhow::Result<Vector> {
        match v {
            None => Ok(Vector::zeros(n)),
            Some(v) if v.len() == n => Ok(Vector::from_column_slice(v)),
            Some(v) => anyhow::bail!("flow.{name} has length {}, the problem has n = {n}", v.len()),
        }
    };
    Ok((get(&cfg.flow.x0, "x0")?, get(&cfg.flow.v0, "v0")?))
}

/// Inertial runs of the configured problem.
pub fn run_inertial(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("run-inertial");
    let dir = out_dir(cfg, base, "run-inertial");
    let problem = cfg.problem.build(cfg.seed)?;
    let reference = cached_reference(&cfg.problem, cfg.seed, &problem, &reference_dir(cfg, base))?;
    let (x0, v0) = flow_initial(cfg, problem.dim())?;
    let spec = &cfg.flow;
    report.warnings.extend(alpha_banner(spec.alpha));
    let run = InertialRun {
        problem: &problem,
        reference: &reference,
        alpha: spec.alpha,
        c: spec.c,
        t0: cfg.t0,
        t_end: spec.t_end,
        x0,
        v0,
        samples: cfg.samples,
        opts: cfg.ode_options(spec.integrator, Integrator::DormandPrince),
    };
    let cells = run.run_all(&spec.r)?;
    let c = problem.sup_constant();
    let slack = reference.width();
    for cl in &cells {
        let label = format!("r = {}", cl.r);
        report.checks.extend(invariant_checks(cl, spec.alpha, c, slack, &label));
        if spec.alpha >= 3.0 {
            report.checks.extend(energy_checks(cl, spec.alpha, c, &label));
        }
        report.warnings.extend(cl.trajectory.warnings.iter().cloned());
    }
    let mut residuals = residual_plot("Residuals", &cells, cfg.t0, spec.t_end);
    if let Some(b) = alpha_banner(spec.alpha) {
        residuals.title = format!("Residuals ({b})");
    }
    report.files = write_cells(&dir, &cells, "inertial", &[("inertial_residuals", &residuals)])?;
    report.finish(&dir)?;
    Ok(report)
}

/// `sup t (φ(x(t)) − inf φ)` over `[a, b]`.
pub fn tail_scaled_gap(cell: &Cell, inf_phi: f64, a: f64, b: f64) -> Option<f64> {
    window_max(&cell.records, a, b, |r| r.t * (r.value_raw - inf_phi))
}

/// Gradient-flow runs of the configured problem.
pub fn run_gradflow(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("run-gradflow");
    let dir = out_dir(cfg, base, "run-gradflow");
    let problem = cfg.problem.build(cfg.seed)?;
    let reference = cached_reference(&cfg.problem, cfg.seed, &problem, &reference_dir(cfg, base))?;
    let (x0, _) = flow_initial(cfg, problem.dim())?;
    let spec = &cfg.gradflow;
    let opts = cfg.ode_options(cfg.flow.integrator, Integrator::Rosenbrock);
    let cells: Vec<Cell> = spec
        .r
        .par_iter()
        .map(|&r| gradflow_cell(&problem, &reference, spec.c, r, cfg.t0, spec.t_end, &x0, cfg.samples, &opts))
        .collect::<anyhow::Result<_>>()?;
    let c = problem.sup_constant();
    let slack = reference.width();
    let d0 = (&x0 - reference.x_star()).norm();
    let tail = (spec.t_end / 10.0).max(cfg.t0);
    let mut tails = Vec::new();
    for cl in &cells {
        let label = format!("r = {}", cl.r);
        let mut bad = 0;
        for r in cl.records.iter().filter(|r| r.t > cfg.t0) {
            if let Some(b) = gradflow_raw_gap_bound(&cl.schedule, c, d0, cfg.t0, r.t) {
                if r.value_raw - reference.inf_phi > b + slack {
                    bad += 1;
                }
            }
        }
        report.checks.push(Check::new(
            format!("{label}: raw gap within the gradient-flow bound"),
            bad == 0,
            format!("{bad} samples above d0^2/(2(t-t0)) + C mu(t) + C/(t-t0) int mu"),
        ));
        let f_vals: Vec<f64> = cl.records.iter().map(|r| r.residual + c * r.mu).collect();
        let rises = f_vals
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-9 * (1.0 + w[0].abs()))
            .count();
        report.checks.push(Check::new(
            format!("{label}: phi_mu(x) + C mu nonincreasing"),
            rises == 0,
            format!("{rises} increases between samples"),
        ));
        let sup = tail_scaled_gap(cl, reference.inf_phi, tail, spec.t_end).unwrap_or(f64::NAN);
        let bound = cl
            .records
            .iter()
            .filter(|r| r.t >= tail && r.t <= spec.t_end)
            .map(|r| gradflow_raw_gap_bound(&cl.schedule, c, d0, cfg.t0, r.t).map(|b| r.t * (b + slack)))
            .try_fold(f64::NEG_INFINITY, |m, b| b.map(|b| m.max(b)));
        let pass = match bound {
            Some(b) => sup.is_finite() && sup <= b,
            None => sup.is_finite(),
        };
        report.checks.push(Check::new(
            format!("{label}: t (phi(x(t)) - inf phi) bounded on [{tail}, {}]", spec.t_end),
            pass,
            format!("sup = {sup:.6e}, bound = {}", bound.map_or("none".into(), |b| format!("{b:.6e}"))),
        ));
        tails.push((cl.r, sup));
    }
    tails.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite exponents"));
    for w in tails.windows(2) {
        report.checks.push(Check::new(
            format!("tail constant for r = {} at most that for r = {}", w[1].0, w[0].0),
            w[1].1 <= w[0].1 * (1.0 + 1e-9),
            format!("{:.6e} vs {:.6e}", w[1].1, w[0].1),
        ));
    }
    let mut plot = Plot::new("Gradient flow: t (phi(x(t)) - inf phi)", "t", "t * raw gap").log_log();
    for cl in &cells {
        plot = plot.with(Series::new(
            format!("r = {}", cl.r),
            cl.records.iter().map(|r| (r.t, r.t * (r.value_raw - reference.inf_phi))).collect(),
        ));
    }
    report.files = write_cells(&dir, &cells, "gradflow", &[("gradflow_scaled_gap", &plot)])?;
    report.finish(&dir)?;
    Ok(report)
}

#[derive(Serialize)]
struct ScheduleRow {
    c: f64,
    r: f64,
    tmu_integrable: bool,
    t2mudot_integrable: bool,
    l1_integrable: bool,
    t2mu_probe: Vec<(f64, f64)>,
    t2mu_decreasing: bool,
}

/// Assumption flags for each configured exponent.
pub fn check_schedule(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("check-schedule");
    let dir = out_dir(cfg, base, "check-schedule");
    let mut rows = Vec::new();
    for &r in &cfg.schedule.r {
        let s = Schedule::power(cfg.schedule.c, r)?;
        let rep = schedule_check(&s, cfg.t0)?;
        if rep.flags.accelerated() {
            report.checks.push(Check::new(
                format!("r = {r}: t^2 mu(t) decreasing at 1e2, 1e4, 1e6"),
                rep.t2mu_decreasing,
                format!("{:?}", rep.t2mu_probe),
            ));
        }
        rows.push(ScheduleRow {
            c: cfg.schedule.c,
            r,
            tmu_integrable: rep.flags.tmu_integrable,
            t2mudot_integrable: rep.flags.t2mudot_integrable,
            l1_integrable: rep.flags.l1_integrable,
            t2mu_probe: rep.t2mu_probe,
            t2mu_decreasing: rep.t2mu_decreasing,
        });
    }
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("schedules.json");
    std::fs::write(&path, serde_json::to_string_pretty(&rows)?)?;
    report.files.push(path);
    report.finish(&dir)?;
    Ok(report)
}

/// Solves for and caches the reference of the configured problem.
pub fn reference_solve_cmd(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("reference-solve");
    let dir = out_dir(cfg, base, "reference-solve");
    let problem = cfg.problem.build(cfg.seed)?;
    let sol = cached_reference(&cfg.problem, cfg.seed, &problem, &reference_dir(cfg, base))?;
    report.checks.push(Check::new(
        "bracket certified",
        sol.width() <= crate::reference::BRACKET_TOL * (1.0 + sol.inf_phi.abs()),
        format!("inf phi = {:.12}, width {:.2e}, {}", sol.inf_phi, sol.width(), sol.method),
    ));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("reference.json");
    std::fs::write(&path, serde_json::to_string_pretty(&sol)?)?;
    report.files.push(path);
    report.finish(&dir)?;
    Ok(report)
}

/// The 1-D smoothing instances drawn by `smooth-profile`.
pub fn profile_problems() -> smoothflow::Result<Vec<(&'static str, SupProblem)>> {
    let curved = || {
        Arc::new(
            FnFamily::new(
                1,
                2,
                |x| Vector::from_column_slice(&[x[0] * x[0] + 1.0, x[0].exp()]),
                |x| Matrix::from_column_slice(2, 1, &[2.0 * x[0], x[0].exp()]),
            ),
        )
    };
    let affine = Arc::new(FnFamily::new(
        1,
        2,
        |x| Vector::from_column_slice(&[x[0] - 1.0, -0.5 * x[0] + 0.2]),
        |_| Matrix::from_column_slice(2, 1, &[1.0, -0.5]),
    ));
    Ok(vec![
        (
            "entropic",
            SupProblem::new(curved(), FeasibleSet::simplex(2)?, Penalty::kl_uniform(2)?)?,
        ),
        (
            "proximal",
            SupProblem::new(
                curved(),
                FeasibleSet::simplex(2)?,
                Penalty::quadratic(Vector::from_element(2, 0.5))?,
            )?,
        ),
        (
            "box",
            SupProblem::new(
                affine,
                FeasibleSet::bounded_box(Vector::from_column_slice(&[0.0, 0.2]), Vector::from_column_slice(&[2.0, 1.5]))?,
                Penalty::quadratic(Vector::from_column_slice(&[1.0, 0.25]))?,
            )?,
        ),
    ])
}

/// Tabulates `φ` and `φ_μ` on a 1-D grid.
pub fn smooth_profile(cfg: &RunConfig, base: &Path) -> anyhow::Result<CommandReport> {
    let mut report = CommandReport::new("smooth-profile");
    let dir = out_dir(cfg, base, "smooth-profile");
    let spec = &cfg.profile;
    let mut mus = spec.mu.clone();
    mus.sort_by(|a, b| b.partial_cmp(a).expect("validated"));
    mus.dedup();
    let xs: Vec<f64> = (0..spec.points)
        .map(|i| spec.x_min + (spec.x_max - spec.x_min) * i as f64 / (spec.points - 1) as f64)
        .collect();
    for (name, p) in profile_problems()? {
        let c = p.sup_constant();
        let mut header = vec!["x".to_string(), "phi".to_string()];
        header.extend(mus.iter().map(|m| format!("phi_mu={m}")));
        let mut rows = Vec::new();
        let mut sandwich_bad = 0;
        let mut order_bad = 0;
        let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); mus.len() + 1];
        for &x in &xs {
            let xv = Vector::from_element(1, x);
            let phi = p.sup_value(&xv)?;
            let mut row = vec![cell(x), cell(phi)];
            series[0].push((x, phi));
            let mut prev = f64::NEG_INFINITY;
            for (k, &mu) in mus.iter().enumerate() {
                let v = p.reg_value(&xv, mu)?;
                let gap = phi - v;
                if gap < -1e-9 || gap > c * mu + 1e-9 {
                    sandwich_bad += 1;
                }
                if v < prev - 1e-12 * (1.0 + prev.abs()) {
                    order_bad += 1;
                }
                prev = v;
                row.push(cell(v));
                series[k + 1].push((x, v));
            }
            if prev > phi + 1e-12 * (1.0 + phi.abs()) {
                order_bad += 1;
            }
            rows.push(row);
        }
        report.checks.push(Check::new(
            format!("{name}: 0 <= phi - phi_mu <= C mu on the grid"),
            sandwich_bad == 0,
            format!("{sandwich_bad} violations, C = {c:.6}"),
        ));
        report.checks.push(Check::new(
            format!("{name}: phi_mu increases as mu decreases"),
            order_bad == 0,
            format!("{order_bad} violations"),
        ));
        let path = dir.join(format!("profile_{name}.csv"));
        write_table(&path, &header, &rows)?;
        report.files.push(path);
        let mut plot = Plot::new(format!("phi and phi_mu ({name})"), "x", "value")
            .with(Series::new("phi", series[0].clone()).color("#000000"));
        for (k, mu) in mus.iter().enumerate() {
            plot = plot.with(Series::new(format!("mu = {mu}"), series[k + 1].clone()).dashed());
        }
        let path = dir.join(format!("profile_{name}.svg"));
        write_svg(&path, &plot)?;
        report.files.push(path);
    }
    report.finish(&dir)?;
    Ok(report)
}

/// Kind of flow a cell came from.
pub fn is_inertial(cell: &Cell) -> bool {
    matches!(cell.trajectory.kind, FlowKind::Inertial { .. })
}
