//! Coefficient files, estimation reports, and table/matrix/field writers.

use std::fs;
use std::path::Path;

use super::{fmt_sig6, read_table, IoError};
use crate::analysis::{EngagementTable, SubstitutabilityMatrix};
use crate::choice::{CoefficientSet, CONTEXT_NAMES, FEATURE_NAMES, N_CONTEXT, N_FEATURES};
use crate::estimation::EstimationResult;
use crate::scenario::ProbabilityField;

/// A coefficient file's content: the point estimates plus, for mixed-logit
/// results, the random-coefficient standard deviations.
#[derive(Clone, Debug)]
pub struct LoadedCoefficients {
    pub coefficients: CoefficientSet,
    pub random_sd: Option<[f64; N_FEATURES]>,
}

/// Writes a machine-readable coefficient file:
/// `block  strategy  name  value` rows for betas, alphas and (for mixed)
/// random-effect standard deviations.
pub fn save_coefficients(
    coeffs: &CoefficientSet,
    random_sd: Option<&[f64; N_FEATURES]>,
    path: &Path,
) -> Result<(), IoError> {
    let mut text = String::from("block\tstrategy\tname\tvalue\n");
    for (s, beta) in coeffs.betas().iter().enumerate() {
        for (name, value) in FEATURE_NAMES.iter().zip(beta.iter()) {
            text.push_str(&format!("beta\t{s}\t{name}\t{}\n", fmt_sig6(*value)));
        }
    }
    for (s, alpha) in coeffs.alphas().iter().enumerate() {
        for (name, value) in CONTEXT_NAMES.iter().zip(alpha.iter()) {
            text.push_str(&format!("alpha\t{}\t{name}\t{}\n", s + 1, fmt_sig6(*value)));
        }
    }
    if let Some(sd) = random_sd {
        for (name, value) in FEATURE_NAMES.iter().zip(sd.iter()) {
            text.push_str(&format!("random_sd\t0\t{name}\t{}\n", fmt_sig6(*value)));
        }
    }
    fs::write(path, text)?;
    Ok(())
}

/// Loads a coefficient file written by [`save_coefficients`].
pub fn load_coefficients(path: &Path) -> Result<LoadedCoefficients, IoError> {
    let table = read_table(path)?;
    let block = table.column("block")?;
    let strategy = table.column("strategy")?;
    let name = table.column("name")?;
    let value = table.column("value")?;

    let feature_slot = |n: &str| FEATURE_NAMES.iter().position(|f| *f == n);
    let context_slot = |n: &str| CONTEXT_NAMES.iter().position(|c| *c == n);

    let mut betas: Vec<[Option<f64>; N_FEATURES]> = Vec::new();
    let mut alphas: Vec<[Option<f64>; N_CONTEXT]> = Vec::new();
    let mut random_sd: Option<[Option<f64>; N_FEATURES]> = None;

    for (line, cells) in &table.rows {
        let parse_err = |message: String| IoError::Parse {
            path: table.path.clone(),
            line: *line,
            message,
        };
        let s: usize = cells[strategy]
            .parse()
            .map_err(|_| parse_err(format!("bad strategy index {:?}", cells[strategy])))?;
        let v = table.parse_f64(*line, cells, value)?;
        match cells[block].as_str() {
            "beta" => {
                let slot = feature_slot(&cells[name])
                    .ok_or_else(|| parse_err(format!("unknown feature {:?}", cells[name])))?;
                if betas.len() <= s {
                    betas.resize(s + 1, [None; N_FEATURES]);
                }
                betas[s][slot] = Some(v);
            }
            "alpha" => {
                if s == 0 {
                    return Err(parse_err("alpha rows start at strategy 1".into()));
                }
                let slot = context_slot(&cells[name])
                    .ok_or_else(|| parse_err(format!("unknown context term {:?}", cells[name])))?;
                if alphas.len() < s {
                    alphas.resize(s, [None; N_CONTEXT]);
                }
                alphas[s - 1][slot] = Some(v);
            }
            "random_sd" => {
                let slot = feature_slot(&cells[name])
                    .ok_or_else(|| parse_err(format!("unknown feature {:?}", cells[name])))?;
                let sd = random_sd.get_or_insert([None; N_FEATURES]);
                sd[slot] = Some(v);
            }
            other => return Err(parse_err(format!("unknown block {other:?}"))),
        }
    }

    let incomplete = || IoError::Invalid {
        reason: format!("{}: incomplete coefficient file", table.path),
    };
    let betas: Vec<[f64; N_FEATURES]> = betas
        .into_iter()
        .map(|b| b.iter().map(|v| v.ok_or_else(incomplete)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|v| {
            let mut arr = [0.0; N_FEATURES];
            arr.copy_from_slice(&v);
            arr
        })
        .collect();
    let alphas: Vec<[f64; N_CONTEXT]> = alphas
        .into_iter()
        .map(|a| a.iter().map(|v| v.ok_or_else(incomplete)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|v| {
            let mut arr = [0.0; N_CONTEXT];
            arr.copy_from_slice(&v);
            arr
        })
        .collect();
    let random_sd = match random_sd {
        None => None,
        Some(sd) => {
            let mut arr = [0.0; N_FEATURES];
            for (slot, v) in arr.iter_mut().zip(sd.iter()) {
                *slot = v.ok_or_else(incomplete)?;
            }
            Some(arr)
        }
    };
    let coefficients = CoefficientSet::new(betas, alphas)?;
    Ok(LoadedCoefficients { coefficients, random_sd })
}

/// Writes the human-readable estimation report and the machine-readable
/// coefficient file; returns their paths.
pub fn write_estimation_report(
    result: &EstimationResult,
    dir: &Path,
    stem: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf), IoError> {
    fs::create_dir_all(dir)?;
    let report_path = dir.join(format!("{stem}_report.txt"));
    let coeffs_path = dir.join(format!("{stem}_coefficients.tsv"));

    let mut text = String::new();
    text.push_str(&format!("family: {}\n", result.family.label()));
    text.push_str(&format!("observations: {}\n", result.n_obs));
    text.push_str(&format!("parameters: {}\n", result.k_params));
    text.push_str(&format!("log_likelihood: {}\n", fmt_sig6(result.loglik)));
    text.push_str(&format!("aic: {}\n", fmt_sig6(result.aic)));
    text.push_str(&format!("bic: {}\n", fmt_sig6(result.bic)));
    text.push_str(&format!("converged: {}\n", result.converged));
    text.push_str(&format!("gradient_norm: {}\n", fmt_sig6(result.grad_norm)));
    text.push_str(&format!("starts_used: {}\n", result.starts_used));
    if let Some(diag) = &result.se_diagnostic {
        text.push_str(&format!("std_error_note: {diag}\n"));
    }
    text.push('\n');
    text.push_str("parameter\testimate\tstd_error\n");
    let names = result.parameter_names();
    let estimates = result.parameters();
    for (i, (name, est)) in names.iter().zip(estimates.iter()).enumerate() {
        let se = result
            .std_errors
            .as_ref()
            .map(|se| fmt_sig6(se[i]))
            .unwrap_or_else(|| "NA".to_string());
        text.push_str(&format!("{name}\t{}\t{se}\n", fmt_sig6(*est)));
    }
    fs::write(&report_path, text)?;

    save_coefficients(&result.coefficients, result.random_sd.as_ref(), &coeffs_path)?;
    Ok((report_path, coeffs_path))
}

/// Writes the family-comparison table.
pub fn write_comparison_table(
    results: &[EstimationResult],
    path: &Path,
) -> Result<(), IoError> {
    let mut text = String::from("family\tk_params\tlog_likelihood\taic\tbic\tconverged\n");
    for r in results {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.family.label(),
            r.k_params,
            fmt_sig6(r.loglik),
            fmt_sig6(r.aic),
            fmt_sig6(r.bic),
            r.converged
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes the eight-row engagement table.
pub fn write_engagement_table(table: &EngagementTable, path: &Path) -> Result<(), IoError> {
    let mut text = String::from("regular\taware_before\tmorning\tdestination_probability\n");
    for row in &table.rows {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.regular as u8,
            row.aware_before as u8,
            row.morning as u8,
            fmt_sig6(row.destination_probability)
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes a substitutability matrix with a header row of outlet ids; the
/// diagonal is left empty.
pub fn write_substitutability_matrix(
    matrix: &SubstitutabilityMatrix,
    path: &Path,
) -> Result<(), IoError> {
    let mut text = String::from("id");
    for id in &matrix.outlet_ids {
        text.push('\t');
        text.push_str(id);
    }
    text.push('\n');
    for (a, id) in matrix.outlet_ids.iter().enumerate() {
        text.push_str(id);
        for b in 0..matrix.outlet_ids.len() {
            text.push('\t');
            if a != b {
                text.push_str(&fmt_sig6(matrix.value(a, b)));
            }
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes a probability field as a dense matrix (row = y, column = x) plus a
/// one-line summary file with the argmax cell.
pub fn write_probability_field(
    field: &ProbabilityField,
    dir: &Path,
    stem: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf), IoError> {
    fs::create_dir_all(dir)?;
    let field_path = dir.join(format!("{stem}_field.tsv"));
    let summary_path = dir.join(format!("{stem}_summary.tsv"));

    let mut text = String::from("y");
    for x in 0..field.width {
        text.push_str(&format!("\t{x}"));
    }
    text.push('\n');
    for y in 0..field.height {
        text.push_str(&y.to_string());
        for x in 0..field.width {
            text.push('\t');
            text.push_str(&fmt_sig6(field.value(x, y)));
        }
        text.push('\n');
    }
    fs::write(&field_path, text)?;

    let summary = format!(
        "argmax_x\targmax_y\tvalue\n{}\t{}\t{}\n",
        field.argmax.x,
        field.argmax.y,
        fmt_sig6(field.argmax_value)
    );
    fs::write(&summary_path, summary)?;
    Ok((field_path, summary_path))
}
