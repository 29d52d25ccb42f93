//! One function per subcommand; each returns a [`Report`] that can be
//! rendered as CSV or JSON.

use cellavg::asymptotics::{
    epsilon_schedule, miller_limit_study, modified_domain, verify_proposition, Proposition, PropositionScene,
};
use cellavg::energy::{cell_avg_energy, DensityTable};
use cellavg::lattice::{count_shifted, BoundaryRule};
use cellavg::oracle::{translate_average_count, translate_average_energy};
use cellavg::Vec3;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::scene::{DensityRequest, Resolved, Scene};

/// A table plus its JSON rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub json: Value,
}

impl Report {
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }

    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let mut out = serde_json::to_vec_pretty(&self.json).map_err(|e| CliError::Output(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Output(e.to_string()))
}

fn invalid(msg: &str) -> CliError {
    CliError::Validation(msg.to_string())
}

pub fn density(scene: &Scene, r: &Resolved) -> Result<Report, CliError> {
    let requests = if scene.densities.is_empty() {
        let mut v = vec![DensityRequest::W];
        if r.normal.is_some() {
            v.push(DensityRequest::Gamma);
        }
        if r.miller.is_some() {
            v.push(DensityRequest::GammaDiamond);
        }
        if let Some(p) = &r.phases {
            v.push(DensityRequest::Sigma);
            if p.plane.miller.is_some() {
                v.push(DensityRequest::Tau);
            }
        }
        v
    } else {
        scene.densities.clone()
    };
    let gradients = match &r.phases {
        Some(p) => vec![p.f_minus, p.f_plus()],
        None => vec![r.gradient],
    };
    let (phi, lattice) = (&r.potential, &r.lattice);
    let mut table = DensityTable::default();
    for req in requests {
        match req {
            DensityRequest::W => {
                for f in &gradients {
                    table.push_w(phi, lattice, f)?;
                }
            }
            DensityRequest::Gamma => {
                let n = r.normal.ok_or_else(|| invalid("gamma needs `normal`"))?;
                for f in &gradients {
                    table.push_gamma(phi, lattice, f, &n)?;
                }
            }
            DensityRequest::GammaDiamond => {
                let m = r.miller.ok_or_else(|| invalid("gamma_diamond needs `miller`"))?;
                for f in &gradients {
                    table.push_gamma_diamond(phi, lattice, f, &m)?;
                }
            }
            DensityRequest::Sigma => {
                let p = r.phases.as_ref().ok_or_else(|| invalid("sigma needs an `interface`"))?;
                table.push_sigma(phi, lattice, &p.f_plus(), &p.f_minus, &p.plane.unit_normal, scene.quadrature.gauss_order)?;
            }
            DensityRequest::Tau => {
                let p = r.phases.as_ref().ok_or_else(|| invalid("tau needs an `interface`"))?;
                let m = p.plane.miller.ok_or_else(|| invalid("tau needs a Miller interface"))?;
                table.push_tau(phi, lattice, &p.f_plus(), &p.f_minus, &m)?;
            }
        }
    }
    Ok(Report {
        header: vec!["label", "F", "normal", "value"],
        rows: table.rows.iter().map(|row| row.csv_fields().to_vec()).collect(),
        json: json!({ "command": "density", "scene": to_value(scene)?, "table": to_value(&table)? }),
    })
}

/// Fitted and predicted coefficients of an expansion run.
pub fn expand_summary(report: &cellavg::asymptotics::ExpansionReport) -> Value {
    json!({
        "proposition": report.proposition,
        "fitted_bulk": report.fitted_bulk,
        "fitted_surface": report.fitted_surface,
        "fitted_quadratic": report.fitted_quadratic,
        "target_bulk": report.target_bulk,
        "target_surface": report.target_surface,
        "fit_order": report.fit_order,
        "fit_points": report.fit_points,
        "convergence_order_estimate": report.convergence_order_estimate,
        "claim_holds": report.claim_holds,
    })
}

pub fn expand(scene: &Scene, r: &Resolved, prop: Proposition) -> Result<(Report, Value), CliError> {
    let ps = PropositionScene {
        omega: r.domain()?.clone(),
        lattice: r.lattice.clone(),
        deformation: r.deformation.clone(),
        potential: r.potential.clone(),
        schedule: r.schedule,
        k_min: scene.schedule.k_min,
        k_max: scene.schedule.k_max,
        rule: scene.boundary_rule.clone(),
        quadrature: scene.quadrature,
        fit: scene.fit,
    };
    let report = verify_proposition(prop, &ps)?;
    let rows = report
        .schedule
        .iter()
        .enumerate()
        .map(|(i, &(k, eps))| {
            vec![
                k.to_string(),
                num(eps),
                num(report.energies[i]),
                num(report.predictions[i]),
                num(report.residuals[i]),
            ]
        })
        .collect();
    let summary = expand_summary(&report);
    let json = json!({
        "command": "expand",
        "scene": to_value(scene)?,
        "summary": summary,
        "report": to_value(&report)?,
    });
    Ok((
        Report {
            header: vec!["k", "eps", "energy", "prediction", "scaled_residual"],
            rows,
            json,
        },
        summary,
    ))
}

pub fn miller(scene: &Scene, r: &Resolved, j_max: u32) -> Result<Report, CliError> {
    let a = r.phases.as_ref().map(|p| p.a).unwrap_or_else(Vec3::zeros);
    let study = miller_limit_study(
        &r.potential,
        &r.lattice,
        &r.gradient,
        &a,
        &r.miller_target()?,
        j_max,
        &scene.quadrature,
    )?;
    let rows = study
        .rows
        .iter()
        .map(|row| {
            vec![
                row.j.to_string(),
                row.miller.to_string(),
                num(row.norm),
                num(row.gamma_diamond_gap),
                num(row.w_over_2n),
                num(row.tau_gap),
            ]
        })
        .collect();
    Ok(Report {
        header: vec!["j", "miller", "norm", "gamma_diamond_gap", "w_over_2n", "tau_gap"],
        rows,
        json: json!({ "command": "miller", "scene": to_value(scene)?, "study": to_value(&study)? }),
    })
}

pub fn remainder(scene: &Scene, r: &Resolved) -> Result<Report, CliError> {
    let omega = r.domain()?;
    let lattice = &r.lattice;
    let schedule = epsilon_schedule(&r.schedule, scene.schedule.k_min, scene.schedule.k_max)?;
    let modified = omega.is_lattice_polyhedron(lattice);
    let closed = BoundaryRule::Closed;
    let cell = lattice.cell_volume();
    let zero = Vec3::zeros();
    let rows = schedule
        .par_iter()
        .map(|&(k, eps)| {
            let count = count_shifted(lattice, eps, &zero, omega, &scene.boundary_rule)?;
            let rem = omega.volume() - eps.powi(3) * cell * count as f64;
            let mut row = vec![k.to_string(), num(eps), count.to_string(), num(rem), num(rem / eps)];
            if modified {
                let omega_k = modified_domain(omega, lattice, eps)?;
                let count_k = count_shifted(lattice, eps, &zero, &omega_k, &closed)?;
                let base = count_shifted(lattice, eps, &zero, omega, &closed)?;
                row.push(num(omega_k.volume() - eps.powi(3) * cell * count_k as f64));
                row.push((count_k as i64 - base as i64).to_string());
            } else {
                row.extend([String::new(), String::new()]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let header = vec![
        "k",
        "eps",
        "count",
        "remainder",
        "scaled_remainder",
        "modified_remainder",
        "count_difference",
    ];
    let records: Vec<Value> = rows
        .iter()
        .map(|row| Value::Object(header.iter().zip(row).map(|(h, v)| (h.to_string(), json!(v))).collect()))
        .collect();
    Ok(Report {
        json: json!({ "command": "remainder", "scene": to_value(scene)?, "rows": records }),
        header,
        rows,
    })
}

pub fn oracle(scene: &Scene, r: &Resolved, grid_n: usize, eps: Option<f64>) -> Result<Report, CliError> {
    let omega = r.domain()?;
    let eps = match eps {
        Some(e) => e,
        None => r.schedule.epsilon(scene.schedule.k_min),
    };
    let count = translate_average_count(omega, &r.lattice, eps, grid_n, &scene.boundary_rule)?;
    let energy = translate_average_energy(
        omega,
        &r.lattice,
        eps,
        &r.deformation,
        &r.potential,
        grid_n,
        &scene.boundary_rule,
    )?;
    let exact = cell_avg_energy(omega, &r.lattice, eps, &r.deformation, &r.potential, &scene.quadrature)?;
    let gap = |o: f64, e: f64| if e == 0.0 { (o - e).abs() } else { (o - e).abs() / e.abs() };
    let entries = [("count", count, omega.volume()), ("energy", energy, exact)];
    let rows = entries
        .iter()
        .map(|&(q, o, e)| vec![q.to_string(), num(eps), grid_n.to_string(), num(o), num(e), num(gap(o, e))])
        .collect();
    let records: Vec<Value> = entries
        .iter()
        .map(|&(q, o, e)| json!({ "quantity": q, "oracle": o, "exact": e, "relative_gap": gap(o, e) }))
        .collect();
    Ok(Report {
        header: vec!["quantity", "eps", "grid_n", "oracle", "exact", "relative_gap"],
        rows,
        json: json!({
            "command": "oracle",
            "scene": to_value(scene)?,
            "eps": eps,
            "grid_n": grid_n,
            "rows": records,
        }),
    })
}
