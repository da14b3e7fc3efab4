//! Run configuration, loaded from TOML. Every table rejects unknown keys.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use smoothflow::dro::DroEvaluator;
use smoothflow::dynamics::{Integrator, OdeOptions, Schedule, SmoothPoint, SmoothedObjective};
use smoothflow::{FeasibleSet, Matrix, ObjectiveFamily, Penalty, QuadraticFamily, SupProblem, Vector};

use crate::bench;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; components draw from label-derived streams.
    pub seed: u64,
    pub t0: f64,
    /// Log-spaced samples per trajectory.
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Output directory (overridden by `--out`).
    pub out: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub flow: FlowSpec,
    pub moo: BenchSpec,
    pub dro: DroSpec,
    pub gradflow: GradflowSpec,
    pub profile: ProfileSpec,
    pub schedule: ScheduleSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2,
            t0: 1.0,
            samples: 400,
            rtol: 1e-8,
            atol: 1e-10,
            out: None,
            problem: ProblemSpec::Moo,
            flow: FlowSpec::default(),
            moo: BenchSpec::default(),
            dro: DroSpec::default(),
            gradflow: GradflowSpec::default(),
            profile: ProfileSpec::default(),
            schedule: ScheduleSpec::default(),
        }
    }
}

/// The problem used by `run-inertial`, `run-gradflow` and `reference-solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// The two-objective quadratic benchmark with max scalarization.
    Moo,
    /// The random moment-constrained DRO instance.
    Dro { n: usize, m: usize },
    /// `gᵢ(x) = ½ (x − xⁱ)ᵀ Mᵢ (x − xⁱ) + eᵢ` over a catalogued `(Q, D)`.
    Quadratic {
        /// Row-major `Mᵢ`.
        matrices: Vec<Vec<Vec<f64>>>,
        anchors: Vec<Vec<f64>>,
        #[serde(default)]
        offsets: Option<Vec<f64>>,
        set: SetSpec,
        penalty: PenaltySpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Simplex,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    LpBall { p: f64 },
    VertexPolytope { vertices: Vec<Vec<f64>> },
    MomentPolytope { a: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltySpec {
    Kl {
        #[serde(default)]
        prior: Option<Vec<f64>>,
    },
    Quadratic { center: Vec<f64> },
    PushforwardKl {
        #[serde(default)]
        prior: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub alpha: f64,
    pub t_end: f64,
    /// Schedule `μ(t) = c t^{−r}` for each listed `r`.
    pub c: f64,
    pub r: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub integrator: IntegratorChoice,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            alpha: 3.1,
            t_end: 50.0,
            c: 1.0,
            r: vec![3.0],
            x0: None,
            v0: None,
            integrator: IntegratorChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorChoice {
    /// Dormand–Prince for the inertial system, Rosenbrock for the gradient flow.
    Auto,
    DormandPrince,
    Rosenbrock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub alpha: f64,
    pub t_end: f64,
    pub c: f64,
    pub r: Vec<f64>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            alpha: 3.1,
            t_end: 50.0,
            c: 1.0,
            r: vec![2.1, 3.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroSpec {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub t_end: f64,
    pub c: f64,
    pub r: Vec<f64>,
}

impl Default for DroSpec {
    fn default() -> Self {
        Self {
            n: 5,
            m: 6,
            alpha: 3.1,
            t_end: 20.0,
            c: 1.0,
            r: vec![2.1, 3.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradflowSpec {
    pub t_end: f64,
    pub c: f64,
    pub r: Vec<f64>,
}

impl Default for GradflowSpec {
    fn default() -> Self {
        Self {
            t_end: 500.0,
            c: 1.0,
            r: vec![1.5, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub mu: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            mu: vec![1.0, 0.5, 0.1],
            x_min: -2.0,
            x_max: 3.0,
            points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub c: f64,
    pub r: Vec<f64>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            c: 1.0,
            r: vec![2.1, 2.0, 1.5],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.t0 > 0.0) {
            bail!("t0 must be positive");
        }
        if self.samples < 2 {
            bail!("samples must be at least 2");
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            bail!("rtol and atol must be positive");
        }
        for (name, t_end) in [
            ("flow", self.flow.t_end),
            ("moo", self.moo.t_end),
            ("dro", self.dro.t_end),
            ("gradflow", self.gradflow.t_end),
        ] {
            if !(t_end > self.t0) {
                bail!("{name}.t_end must exceed t0");
            }
        }
        for (name, c, rs) in [
            ("flow", self.flow.c, &self.flow.r),
            ("moo", self.moo.c, &self.moo.r),
            ("dro", self.dro.c, &self.dro.r),
            ("gradflow", self.gradflow.c, &self.gradflow.r),
            ("schedule", self.schedule.c, &self.schedule.r),
        ] {
            if rs.is_empty() {
                bail!("{name}.r must list at least one exponent");
            }
            for &r in rs {
                Schedule::power(c, r).with_context(|| format!("{name} schedule"))?;
            }
        }
        if self.profile.points < 2 || !(self.profile.x_max > self.profile.x_min) {
            bail!("profile needs points >= 2 and x_min < x_max");
        }
        if self.profile.mu.iter().any(|&m| !(m > 0.0)) {
            bail!("profile.mu entries must be positive");
        }
        Ok(())
    }

    /// Integrator options; `default` applies when the choice is `auto`.
    pub fn ode_options(&self, choice: IntegratorChoice, default: Integrator) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            integrator: match choice {
                IntegratorChoice::Auto => default,
                IntegratorChoice::DormandPrince => Integrator::DormandPrince,
                IntegratorChoice::Rosenbrock => Integrator::Rosenbrock,
            },
            ..OdeOptions::default()
        }
    }
}

/// A problem ready for integration.
#[derive(Debug, Clone)]
pub enum BuiltProblem {
    Sup(SupProblem),
    Dro(DroEvaluator),
}

impl BuiltProblem {
    pub fn dim(&self) -> usize {
        match self {
            BuiltProblem::Sup(p) => p.dim(),
            BuiltProblem::Dro(d) => d.costs().dim(),
        }
    }

    pub fn family(&self) -> &Arc<dyn ObjectiveFamily> {
        match self {
            BuiltProblem::Sup(p) => p.objectives(),
            BuiltProblem::Dro(d) => d.costs(),
        }
    }

    /// `Q` as a feasible set.
    pub fn feasible_set(&self) -> FeasibleSet {
        match self {
            BuiltProblem::Sup(p) => p.set().clone(),
            BuiltProblem::Dro(d) => FeasibleSet::MomentPolytope(d.set().clone()),
        }
    }

    /// `λ^μ(x)`.
    pub fn dual_maximizer(&mut self, x: &Vector, mu: f64) -> smoothflow::Result<Vector> {
        match self {
            BuiltProblem::Sup(p) => Ok(p.reg_maximizer(x, mu)?.maximizer),
            BuiltProblem::Dro(d) => Ok(d.evaluate(x, mu)?.tilting.p),
        }
    }

    fn inner(&mut self) -> &mut dyn SmoothedObjective {
        match self {
            BuiltProblem::Sup(p) => p,
            BuiltProblem::Dro(d) => d,
        }
    }
}

impl SmoothedObjective for BuiltProblem {
    fn dim(&self) -> usize {
        BuiltProblem::dim(self)
    }

    fn sup_constant(&self) -> f64 {
        match self {
            BuiltProblem::Sup(p) => p.sup_constant(),
            BuiltProblem::Dro(d) => d.sup_constant(),
        }
    }

    fn smoothed(&mut self, x: &Vector, mu: f64) -> smoothflow::Result<SmoothPoint> {
        self.inner().smoothed(x, mu)
    }

    fn raw_value(&mut self, x: &Vector) -> smoothflow::Result<f64> {
        self.inner().raw_value(x)
    }

    fn lipschitz_estimate(&self, x: &Vector, mu: f64) -> Option<f64> {
        match self {
            BuiltProblem::Sup(p) => p.lipschitz_estimate(x, mu),
            BuiltProblem::Dro(d) => d.lipschitz_estimate(x, mu),
        }
    }

    fn gradient_scale(&self, x: &Vector) -> f64 {
        match self {
            BuiltProblem::Sup(p) => SmoothedObjective::gradient_scale(p, x),
            BuiltProblem::Dro(d) => SmoothedObjective::gradient_scale(d, x),
        }
    }
}

fn vector(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> anyhow::Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what}: rows have different lengths");
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SetSpec {
    pub fn build(&self, m: usize) -> anyhow::Result<FeasibleSet> {
        Ok(match self {
            SetSpec::Simplex => FeasibleSet::simplex(m)?,
            SetSpec::Box { lower, upper } => FeasibleSet::bounded_box(vector(lower), vector(upper))?,
            SetSpec::LpBall { p } => FeasibleSet::lp_ball(m, *p)?,
            SetSpec::VertexPolytope { vertices } => {
                FeasibleSet::vertex_polytope(vertices.iter().map(|v| vector(v)).collect())?
            }
            SetSpec::MomentPolytope { a, b } => {
                let a = if a.is_empty() { Matrix::zeros(0, m) } else { matrix(a, "set.a")? };
                FeasibleSet::moment_polytope(a, vector(b))?
            }
        })
    }
}

impl PenaltySpec {
    pub fn build(&self, set: &FeasibleSet) -> anyhow::Result<Penalty> {
        Ok(match self {
            PenaltySpec::Kl { prior: Some(p) } => Penalty::kl(vector(p))?,
            PenaltySpec::Kl { prior: None } => Penalty::kl_uniform(set.dim())?,
            PenaltySpec::Quadratic { center } => Penalty::quadratic(vector(center))?,
            PenaltySpec::PushforwardKl { prior: Some(p) } => Penalty::pushforward_kl(vector(p))?,
            PenaltySpec::PushforwardKl { prior: None } => match set {
                FeasibleSet::VertexPolytope { vertices } => {
                    Penalty::pushforward_kl_uniform(vertices.len())?
                }
                _ => bail!("the pushforward KL penalty needs a vertex polytope"),
            },
        })
    }
}

impl ProblemSpec {
    /// Builds the problem; the DRO instance draws from the `dro-instance` stream.
    pub fn build(&self, seed: u64) -> anyhow::Result<BuiltProblem> {
        Ok(match self {
            ProblemSpec::Moo => BuiltProblem::Sup(bench::moo_problem()?),
            ProblemSpec::Dro { n, m } => {
                let inst = smoothflow::dro::make_dro_benchmark(seeds::stream(seed, "dro-instance"), *n, *m)?;
                BuiltProblem::Dro(DroEvaluator::uniform(Arc::new(inst.costs), inst.set)?)
            }
            ProblemSpec::Quadratic {
                matrices,
                anchors,
                offsets,
                set,
                penalty,
            } => {
                let ms = matrices
                    .iter()
                    .map(|m| matrix(m, "problem.matrices"))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                let xs: Vec<Vector> = anchors.iter().map(|a| vector(a)).collect();
                let e = offsets.as_deref().map_or_else(|| Vector::zeros(ms.len()), vector);
                let fam = QuadraticFamily::new(ms, xs, e)?;
                let set = set.build(fam.count())?;
                let penalty = penalty.build(&set)?;
                BuiltProblem::Sup(SupProblem::new(Arc::new(fam), set, penalty)?)
            }
        })
    }
}
