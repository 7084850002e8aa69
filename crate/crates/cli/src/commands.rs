use crate::config::{invalid, validate_gammas, DomainSpec, RunConfig};
use crate::output::{num, Outputs};
use mtlab_core::asymptotics_reporter::*;
use mtlab_core::fem_solver::{solution_csv, solve_2d_branch, spectrum_2d, FemOptions};
use mtlab_core::geometry_green::{Domain, GreenOracle};
use mtlab_core::kirchhoff_routh::find_critical_points;
use mtlab_core::liouville_core::{moment, scalar_integral_quarter, MomentTag, QuarterKind};
use mtlab_core::pohozaev::{p_form, q_form, radius_independence_check, solution_identity_check, RadialSolution};
use mtlab_core::radial_hierarchy::{expansion_constants, hierarchy_profiles, ExpansionConstants};
use mtlab_core::radial_solver::{mode_eigenvalues_with_error, solve_branch, solve_branch_point};
use mtlab_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MOMENT_TOL: f64 = 1e-8;
const PRIMARY_MOMENTS: [MomentTag; 5] =
    [MomentTag::E2u, MomentTag::E2uPhi0, MomentTag::E2uR2Ratio, MomentTag::UE2uPhi0, MomentTag::U2E2uPhi0];
const DERIVED_MOMENTS: [MomentTag; 3] = [MomentTag::E2uXGradU, MomentTag::TwoE2uXGradUSq, MomentTag::TwoE2uDx1USq];

/// On-disk form of the expansion constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ConstantsFile {
    pub A1: f64,
    pub A2: f64,
    pub A3: f64,
    pub A4: f64,
    pub A5: f64,
    pub A6: f64,
    pub B1: f64,
    pub B2: f64,
    pub B3: f64,
    pub c0: f64,
    pub errors: BTreeMap<String, f64>,
}

impl From<&ExpansionConstants> for ConstantsFile {
    fn from(c: &ExpansionConstants) -> Self {
        let errors = (0..6).map(|i| (format!("A{}", i + 1), c.a_errors[i])).collect();
        ConstantsFile {
            A1: c.a[0],
            A2: c.a[1],
            A3: c.a[2],
            A4: c.a[3],
            A5: c.a[4],
            A6: c.a[5],
            B1: c.b[0],
            B2: c.b[1],
            B3: c.b[2],
            c0: c.c0,
            errors,
        }
    }
}

impl ConstantsFile {
    fn to_constants(&self) -> ExpansionConstants {
        let e = |k: &str| self.errors.get(k).copied().unwrap_or(0.0);
        ExpansionConstants {
            a: [self.A1, self.A2, self.A3, self.A4, self.A5, self.A6],
            b: [self.B1, self.B2, self.B3],
            c0: self.c0,
            a_errors: [e("A1"), e("A2"), e("A3"), e("A4"), e("A5"), e("A6")],
            robin_at_peak: 0.0,
        }
    }
}

pub fn constants(out: &mut Outputs, moments: bool, full: bool) -> Result<()> {
    let (moments, full) = if !moments && !full { (true, true) } else { (moments, full) };
    if moments {
        let mut rows = Vec::new();
        for (group, tags) in [("primary", &PRIMARY_MOMENTS[..]), ("derived", &DERIVED_MOMENTS[..])] {
            for &t in tags {
                let m = moment(t, 1e-11)?;
                let exact = t.exact().expect("catalog moments have closed forms");
                let err = (m.value - exact).abs();
                let pass = err <= MOMENT_TOL;
                out.check(format!("moment_{}", t.name()), pass);
                rows.push(vec![t.name().into(), group.into(), num(m.value), num(exact), num(err), pass.to_string()]);
            }
        }
        out.write_csv("moments.csv", &["tag", "group", "value", "exact", "abs_error", "pass"], &rows)?;
    }
    if full {
        let h = hierarchy_profiles()?;
        let c = expansion_constants(0.0, &h);
        let q1 = scalar_integral_quarter(QuarterKind::Log)?;
        let q2 = scalar_integral_quarter(QuarterKind::Log2)?;
        out.check("c0", (c.c0 - 4.0 * PI).abs() <= 1e-4);
        out.check("quarter_log", (q1 - 0.25).abs() <= 1e-10);
        out.check("quarter_log2", (q2 - 0.75).abs() <= 1e-10);
        let mut v = serde_json::to_value(ConstantsFile::from(&c)).expect("serializable");
        v["quarter"] = json!({ "log": q1, "log2": q2 });
        out.write_json("constants.json", &v)?;
        out.write("v0.csv", h.v0.to_csv().as_bytes())?;
        out.write("k0.csv", h.k0.to_csv().as_bytes())?;
        out.write("s0.csv", h.s0.to_csv().as_bytes())?;
    }
    Ok(())
}

pub const BRANCH_HEADER: [&str; 11] =
    ["gamma", "lambda", "theta", "energy", "C_lambda", "mu1", "mu2_m1", "mu2_m0", "mu1_err", "mu2_m1_err", "mu2_m0_err"];

pub fn radial_branch(out: &mut Outputs, gammas: &[f64], tol: f64) -> Result<()> {
    validate_gammas(gammas)?;
    let mut rows = Vec::new();
    for bp in solve_branch(gammas, tol) {
        let bp = bp?;
        let e = EigenSample::compute(&bp)?;
        out.check(format!("residual_gamma_{}", bp.gamma), bp.residual_norm <= 1e-9);
        rows.push(vec![
            num(bp.gamma),
            num(bp.lambda),
            num(bp.theta),
            num(bp.energy),
            num(bp.c_lambda_gamma / bp.gamma),
            num(e.mu1),
            num(e.mu2),
            num(e.mu4),
            num(e.mu1_err),
            num(e.mu2_err),
            num(e.mu4_err),
        ]);
    }
    out.write_csv("branch.csv", &BRANCH_HEADER, &rows)?;
    Ok(())
}

pub fn spectrum(out: &mut Outputs, gamma: f64, mode: u32, count: usize, tol: f64) -> Result<()> {
    if count == 0 || count > 6 {
        return Err(invalid("count", format!("must be in 1..=6, got {count}")));
    }
    let bp = solve_branch_point(gamma, tol)?;
    let vals = mode_eigenvalues_with_error(&bp, mode, count)?;
    let rows: Vec<Vec<String>> =
        vals.iter().enumerate().map(|(i, (mu, err))| vec![mode.to_string(), i.to_string(), num(*mu), num(*err)]).collect();
    out.check("mu_positive", vals.iter().all(|v| v.0 > 0.0));
    out.write_csv("spectrum.csv", &["mode", "index", "mu", "error"], &rows)?;
    Ok(())
}

pub fn fem_solve(out: &mut Outputs, spec: &DomainSpec, gamma: f64, cfg: &RunConfig) -> Result<()> {
    let domain = spec.domain()?;
    let mut opts = FemOptions::default();
    if let Some(r) = cfg.resolution {
        opts.resolution = r;
    }
    let steps = cfg.steps.unwrap_or(1).max(1);
    let state = solve_2d_branch(&domain, spec.x0, gamma, steps, &opts)?.pop().expect("at least one step");
    let sp = spectrum_2d(&state, cfg.count.unwrap_or(4), cfg.gap_tol.unwrap_or(1e-8))?;
    out.check("newton_converged", state.residual_norm <= opts.newton_tol);
    let rows: Vec<Vec<String>> = state.mesh.elements.iter().map(|t| t.iter().map(|i| i.to_string()).collect()).collect();
    out.write_csv("mesh.csv", &["a", "b", "c"], &rows)?;
    out.write("solution.csv", solution_csv(&state).as_bytes())?;
    let report = json!({
        "lambda": state.lambda,
        "gamma": state.gamma,
        "x0": state.x0,
        "x_lambda": state.x_lambda,
        "theta": state.theta,
        "energy": state.energy,
        "residual_norm": state.residual_norm,
        "n_nodes": state.n_nodes,
        "morse_index": sp.report.morse_index,
        "mu": sp.report.entries.iter().map(|e| e.mu).collect::<Vec<_>>(),
        "ritz_residual": sp.ritz_residual,
    });
    out.write_json("fem_report.json", &report)?;
    Ok(())
}

struct Row {
    id: String,
    lhs: f64,
    rhs: f64,
    gap: f64,
    tol: f64,
}

/// Fixed catalog of form identities on the unit disk.
pub fn pohozaev(out: &mut Outputs) -> Result<()> {
    let d = Domain::unit_disk();
    let g = GreenOracle::new(d.clone())?;
    let mut rows = Vec::new();
    for (tag, c) in [("origin", [0.0, 0.0]), ("off", [0.2, 0.1])] {
        let u = |x: [f64; 2]| g.green_grad(x, c).unwrap_or([f64::NAN; 2]);
        let p = p_form(&d, &u, &u, c, 0.2)?.value;
        let target = -0.5 / PI;
        rows.push(Row { id: format!("pgg_{tag}"), lhs: p, rhs: target, gap: (p - target).abs(), tol: 1e-6 });
        let gr = g.robin_grad(c)?;
        for axis in 0..2 {
            let q = q_form(&d, &u, &u, c, 0.2, axis)?.value;
            rows.push(Row { id: format!("qgg_{tag}_{}", axis + 1), lhs: q, rhs: -gr[axis], gap: (q + gr[axis]).abs(), tol: 1e-5 });
        }
        let rep = radius_independence_check(&d, &u, &u, c, &[0.1, 0.15, 0.2])?;
        let dev = rep.p_deviation.max(rep.q_deviation);
        rows.push(Row { id: format!("indep_{tag}"), lhs: dev, rhs: 0.0, gap: dev, tol: 1e-8 });
    }
    let bp = solve_branch_point(5.0, DEFAULT_TOL)?;
    for c in solution_identity_check(&RadialSolution::new(&bp), 0.3)? {
        if c.id == "puu" {
            rows.push(Row { id: "puu_radial".into(), lhs: c.lhs, rhs: c.rhs, gap: c.gap, tol: 1e-6 });
        } else {
            let size = c.lhs.abs().max(c.rhs.abs());
            rows.push(Row { id: format!("{}_radial", c.id), lhs: c.lhs, rhs: c.rhs, gap: size, tol: 1e-10 });
        }
    }
    let mut csv = Vec::new();
    for r in rows {
        let pass = r.gap <= r.tol;
        out.check(r.id.clone(), pass);
        csv.push(vec![r.id, num(r.lhs), num(r.rhs), num(r.gap), num(r.tol), pass.to_string()]);
    }
    out.write_csv("pohozaev.csv", &["id", "lhs", "rhs", "gap", "tol", "pass"], &csv)?;
    Ok(())
}

pub fn kr(out: &mut Outputs, spec: &DomainSpec, k: usize, seeds: usize, rng_seed: u64) -> Result<()> {
    if !(1..=2).contains(&k) {
        return Err(invalid("k", format!("must be 1 or 2, got {k}")));
    }
    if seeds < mtlab_core::kirchhoff_routh::MIN_SEEDS {
        return Err(invalid("seeds", format!("need at least {}, got {seeds}", mtlab_core::kirchhoff_routh::MIN_SEEDS)));
    }
    let domain = spec.domain()?;
    let set = find_critical_points(&GreenOracle::new(domain)?, k, seeds, rng_seed)?;
    out.check("gradient_tolerance", set.points.iter().all(|p| p.grad_norm <= 1e-8));
    out.write_json("kr.json", &set)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct BranchRow {
    gamma: f64,
    lambda: f64,
    theta: f64,
    #[serde(rename = "C_lambda")]
    c_lambda: f64,
    mu1: Option<f64>,
    mu2_m1: Option<f64>,
    mu2_m0: Option<f64>,
    mu1_err: Option<f64>,
    mu2_m1_err: Option<f64>,
    mu2_m0_err: Option<f64>,
}

pub fn report(out: &mut Outputs, branch_file: &Path, constants_file: &Path) -> Result<()> {
    let mut rdr = csv::Reader::from_path(branch_file).map_err(|e| invalid("branch", e.to_string()))?;
    let rows: Vec<BranchRow> =
        rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| invalid("branch", e.to_string()))?;
    let text = std::fs::read_to_string(constants_file).map_err(|e| invalid("constants", e.to_string()))?;
    let cf: ConstantsFile = serde_json::from_str(&text).map_err(|e| invalid("constants", e.to_string()))?;
    let consts = cf.to_constants();
    let samples: Vec<BranchSample> =
        rows.iter().map(|r| BranchSample { gamma: r.gamma, lambda: r.lambda, c_lambda_gamma: r.c_lambda * r.gamma }).collect();
    let mut reports = vec![fit_c_lambda(&samples)?, fit_lambda_gamma(&samples, &consts)?];
    let eig: Option<Vec<EigenSample>> = rows
        .iter()
        .map(|r| {
            Some(EigenSample {
                gamma: r.gamma,
                theta: r.theta,
                mu1: r.mu1?,
                mu2: r.mu2_m1?,
                mu4: r.mu2_m0?,
                mu1_err: r.mu1_err?,
                mu2_err: r.mu2_m1_err?,
                mu4_err: r.mu2_m0_err?,
            })
        })
        .collect();
    if let Some(e) = eig {
        reports.extend(eigenvalue_trends(&e, &TrendTargets::default())?);
    }
    for r in &reports {
        out.checks.push(crate::output::Check { id: r.id.clone(), verdict: r.verdict });
    }
    out.write_json("report.json", &reports)?;
    out.write("report.txt", render_table(&reports).as_bytes())?;
    Ok(())
}

pub fn require<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::ConfigInvalid { field: field.into(), reason: "missing".into() })
}
