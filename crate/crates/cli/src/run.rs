//! Command implementations: each produces the JSON report body plus a
//! plot-ready CSV table.

use driftfem::error::Error as CoreError;
use driftfem::fields::DriftSpec;
use driftfem::pipeline::{construct_rho_with, solve_problem_with, Discretization, ProblemSpec};
use driftfem::verify::{
    annulus_validation, blowup_contrast_study, blowup_study, convergence_study,
    mollifier_stability_study, presets, standard_suite, CheckReport,
};

use crate::config::{RunConfig, StudyConfig};
use crate::report::{number, Cell, CsvTable, Report, TransformSummary, WeightSummary};

/// Failure carrying the process exit code: 3 for input errors, 4 for
/// numerical failures.
pub struct AppError {
    pub exit_code: i32,
    pub message: String,
}

impl AppError {
    pub fn input(message: impl Into<String>) -> AppError {
        AppError {
            exit_code: 3,
            message: message.into(),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(err: CoreError) -> AppError {
        let exit_code = match &err {
            CoreError::InvalidInput(_)
            | CoreError::MisalignedHole { .. }
            | CoreError::Resource(_) => 3,
            CoreError::NonFiniteSample { .. }
            | CoreError::PositivityFailure { .. }
            | CoreError::SingularMatrix { .. }
            | CoreError::SolverStagnation { .. } => 4,
        };
        AppError {
            exit_code,
            message: format!("{err}"),
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;

fn require_problem(config: &RunConfig) -> AppResult<ProblemSpec> {
    let pc = config
        .problem
        .as_ref()
        .ok_or_else(|| AppError::input("this command requires a 'problem' section"))?;
    pc.build().map_err(AppError::input)
}

fn check_rows(table: &mut CsvTable, checks: &[CheckReport], h: f64, n: usize) {
    for c in checks {
        table.push(vec![
            number(h),
            Cell::Integer(n as i64),
            number(c.measured),
            number(c.bound),
            Cell::Flag(c.passed),
            Cell::Text(c.name.clone()),
        ]);
    }
}

pub fn run_solve(config: &RunConfig) -> AppResult<(Report, CsvTable)> {
    let problem = require_problem(config)?;
    let disc = Discretization::build(&problem)?;
    let out = solve_problem_with(&problem, &disc)?;
    let mut report = Report::new("solve");
    report.mark_regime(problem.domain.dim);
    report.constants = Some(out.constants);
    report.solution_norms = Some(out.solution.norms.clone());
    report.solve_stats = Some(out.solution.stats.clone());
    report.weight = Some(WeightSummary::from_weight(&out.weight, problem.domain.dim));
    report.transform = Some(TransformSummary::from_transform(&out.transform));
    report.warnings = out.solution.warnings.clone();
    let mut table = CsvTable::new(&[
        "h",
        "n",
        "measured",
        "bound",
        "passed",
        "harnack_ratio",
        "h10_seminorm",
        "l2",
        "linf",
    ]);
    table.push(vec![
        number(disc.inner.h()),
        Cell::Integer(problem.mesh_n as i64),
        number(out.transform.divfree_residual),
        number(10.0 * problem.solver.rel_tol),
        Cell::Flag(out.transform.divfree_residual <= 10.0 * problem.solver.rel_tol),
        number(out.weight.harnack_ratio),
        number(out.solution.norms.h10_seminorm),
        number(out.solution.norms.l2),
        number(out.solution.norms.linf),
    ]);
    Ok((report, table))
}

pub fn run_rho(config: &RunConfig) -> AppResult<(Report, CsvTable)> {
    let problem = require_problem(config)?;
    let disc = Discretization::build(&problem)?;
    let weight = construct_rho_with(&problem, &disc)?;
    let mut report = Report::new("rho");
    report.mark_regime(problem.domain.dim);
    report.weight = Some(WeightSummary::from_weight(&weight, problem.domain.dim));
    let mut table = CsvTable::new(&[
        "h",
        "n",
        "measured",
        "bound",
        "passed",
        "min_rho",
        "max_rho",
    ]);
    table.push(vec![
        number(disc.inner.h()),
        Cell::Integer(problem.mesh_n as i64),
        number(weight.harnack_ratio),
        number(0.0),
        Cell::Flag(true),
        number(weight.min_rho),
        number(weight.max_rho),
    ]);
    Ok((report, table))
}

pub fn run_verify(config: &RunConfig, seed: u64) -> AppResult<(Report, CsvTable)> {
    let problem = require_problem(config)?;
    let disc = Discretization::build(&problem)?;
    let checks = standard_suite(&problem, seed)?;
    let mut report = Report::new("verify");
    report.mark_regime(problem.domain.dim);
    report.checks = checks;
    let mut table = CsvTable::new(&["h", "n", "measured", "bound", "passed", "check"]);
    check_rows(&mut table, &report.checks, disc.inner.h(), problem.mesh_n);
    Ok((report, table))
}

fn study_params(config: &RunConfig) -> StudyConfig {
    config.study.clone().unwrap_or_default()
}

pub fn run_study_blowup(
    config: &RunConfig,
    levels_flag: &[usize],
) -> AppResult<(Report, CsvTable)> {
    let params = study_params(config);
    let dim = params.dim.unwrap_or(2);
    let levels: Vec<usize> = if !levels_flag.is_empty() {
        levels_flag.to_vec()
    } else if !params.levels.is_empty() {
        params.levels.clone()
    } else {
        vec![8, 16, 32]
    };
    let growth = blowup_study(dim, &levels)?;
    let contrast = blowup_contrast_study(dim, &levels)?;
    let mut table = CsvTable::new(&[
        "h", "n", "measured", "bound", "passed", "study", "level",
    ]);
    for (h, max_rho) in &growth.refinement_trend {
        let n = (2.0 / h).round() as i64;
        table.push(vec![
            number(*h),
            Cell::Integer(n),
            number(*max_rho),
            number(growth.bound),
            Cell::Flag(growth.passed),
            Cell::Text("blowup_unpunctured".to_string()),
            Cell::Integer(n),
        ]);
    }
    for (h, ratio) in &contrast.refinement_trend {
        let n = (2.0 / h).round() as i64;
        table.push(vec![
            number(*h),
            Cell::Integer(n),
            number(*ratio),
            number(contrast.bound),
            Cell::Flag(contrast.passed),
            Cell::Text("blowup_punctured_contrast".to_string()),
            Cell::Integer(n),
        ]);
    }
    let mut report = Report::new("study blowup");
    report.mark_regime(dim);
    report.checks = vec![growth, contrast];
    Ok((report, table))
}

pub fn run_study_annulus(
    config: &RunConfig,
    epsilons_flag: &[f64],
    jobs: usize,
) -> AppResult<(Report, CsvTable)> {
    let params = study_params(config);
    let dim = params.dim.unwrap_or(2);
    let resolution = params.resolution.unwrap_or(64);
    let epsilons: Vec<f64> = if !epsilons_flag.is_empty() {
        epsilons_flag.to_vec()
    } else if !params.epsilons.is_empty() {
        params.epsilons.clone()
    } else {
        vec![1.0 / 3.0, 1.0 / 7.0, 1.0 / 15.0]
    };
    // epsilon runs are independent; fan them out across the job budget
    let mut checks = Vec::with_capacity(epsilons.len());
    if jobs <= 1 {
        for &eps in &epsilons {
            checks.push(annulus_validation(dim, eps, resolution)?);
        }
    } else {
        std::thread::scope(|scope| -> AppResult<()> {
            let handles: Vec<_> = epsilons
                .iter()
                .map(|&eps| scope.spawn(move || annulus_validation(dim, eps, resolution)))
                .collect();
            for handle in handles {
                checks.push(handle.join().expect("annulus worker panicked")?);
            }
            Ok(())
        })?;
    }
    let mut table = CsvTable::new(&[
        "h",
        "n",
        "measured",
        "bound",
        "passed",
        "epsilon",
        "face_ratio",
        "anchor",
    ]);
    for (check, &eps) in checks.iter().zip(&epsilons) {
        let get = |name: &str| {
            check
                .aux
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN)
        };
        let (h, _) = *check.refinement_trend.last().unwrap();
        table.push(vec![
            number(h),
            Cell::Integer(get("snapped_n") as i64),
            number(check.measured),
            number(check.bound),
            Cell::Flag(check.passed),
            number(eps),
            number(get("measured_face_ratio")),
            number(get("radial_anchor")),
        ]);
    }
    let mut report = Report::new("study annulus");
    report.mark_regime(dim);
    report.checks = checks;
    Ok((report, table))
}

pub fn run_study_mollifier(
    config: &RunConfig,
    levels_flag: &[usize],
) -> AppResult<(Report, CsvTable)> {
    let params = study_params(config);
    let levels: Vec<u32> = if !levels_flag.is_empty() {
        levels_flag.iter().map(|&l| l as u32).collect()
    } else if !params.levels.is_empty() {
        params.levels.iter().map(|&l| l as u32).collect()
    } else {
        vec![2, 4, 8]
    };
    let problem = match &config.problem {
        Some(pc) => pc.build().map_err(AppError::input)?,
        None => {
            let mut p = presets::unit_box_problem(2, 16);
            p.drift = presets::standard_bump_drift(2);
            p
        }
    };
    let check = mollifier_stability_study(&problem, &levels)?;
    let mut table = CsvTable::new(&["h", "n", "measured", "bound", "passed", "level"]);
    for ((inv_level, diff), &level) in check.refinement_trend.iter().zip(&levels) {
        let _ = inv_level;
        table.push(vec![
            number(1.0 / level as f64),
            Cell::Integer(problem.mesh_n as i64),
            number(*diff),
            number(check.bound),
            Cell::Flag(check.passed),
            Cell::Integer(level as i64),
        ]);
    }
    let mut report = Report::new("study mollifier");
    report.mark_regime(problem.domain.dim);
    report.checks = vec![check];
    Ok((report, table))
}

pub fn run_study_convergence(
    config: &RunConfig,
    jobs: usize,
) -> AppResult<(Report, CsvTable)> {
    let params = study_params(config);
    let dim = params.dim.unwrap_or(2);
    let base = params.resolution.unwrap_or(8);
    let cases: Vec<(&str, [f64; 3])> = vec![
        ("no_drift", [0.0; 3]),
        ("constant_drift", [1.0, 0.0, 0.0]),
    ];
    let mut checks: Vec<CheckReport> = Vec::new();
    if jobs <= 1 {
        for (_, drift) in &cases {
            checks.push(convergence_study(dim, *drift, 0.0, base, 3)?);
        }
    } else {
        std::thread::scope(|scope| -> AppResult<()> {
            let mut handles = Vec::new();
            for (_, drift) in &cases {
                let drift = *drift;
                handles.push(scope.spawn(move || convergence_study(dim, drift, 0.0, base, 3)));
            }
            for handle in handles {
                checks.push(handle.join().expect("convergence worker panicked")?);
            }
            Ok(())
        })?;
    }
    let mut table = CsvTable::new(&[
        "h", "n", "measured", "bound", "passed", "case", "l2_rate", "h1_rate",
    ]);
    for (check, (name, _)) in checks.iter().zip(&cases) {
        let get = |key: &str| {
            check
                .aux
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN)
        };
        for (k, (h, l2)) in check.refinement_trend.iter().enumerate() {
            table.push(vec![
                number(*h),
                Cell::Integer((base << k) as i64),
                number(*l2),
                number(check.bound),
                Cell::Flag(check.passed),
                Cell::Text(name.to_string()),
                number(get("l2_rate")),
                number(get("h1_rate")),
            ]);
        }
    }
    let mut report = Report::new("study convergence");
    report.mark_regime(dim);
    report.checks = checks;
    Ok((report, table))
}
