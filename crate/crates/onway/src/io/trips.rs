//! Trip table loading and saving.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{fmt_sig6, parse_flag01, read_table, IoError};
use crate::estimation::Observation;
use crate::spatial::{Market, Point};

const CORE_COLUMNS: [&str; 8] = [
    "id",
    "origin_id",
    "destination_id",
    "chosen_outlet_id",
    "aware_before",
    "minutes_aware",
    "regular",
    "morning",
];
const AWARE_POINT_COLUMNS: [&str; 2] = ["aware_x_km", "aware_y_km"];

#[derive(Clone, Debug)]
pub struct RejectedRow {
    pub id: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct TripLoad {
    pub observations: Vec<Observation>,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

/// Loads a trip table against a market. Structural problems (bad header,
/// ragged rows) are errors; rows violating invariants are rejected and
/// collected. Columns beyond the core schema and the optional awareness
/// point are carried as covariates.
pub fn load_trips(path: &Path, market: &Market) -> Result<TripLoad, IoError> {
    let text = fs::read_to_string(path)?;
    let mut warnings = Vec::new();
    if text.trim().is_empty() {
        warnings.push(format!("{}: empty trip file", path.display()));
        return Ok(TripLoad { observations: Vec::new(), rejected: Vec::new(), warnings });
    }
    let table = read_table(path)?;
    if table.rows.is_empty() {
        warnings.push(format!("{}: no data rows", table.path));
    }

    let id = table.column("id")?;
    let origin = table.column("origin_id")?;
    let destination = table.column("destination_id")?;
    let chosen = table.column("chosen_outlet_id")?;
    let aware = table.column("aware_before")?;
    let minutes = table.column("minutes_aware")?;
    let regular = table.column("regular")?;
    let morning = table.column("morning")?;
    let aware_x = table.header.iter().position(|h| h == "aware_x_km");
    let aware_y = table.header.iter().position(|h| h == "aware_y_km");
    let covariate_cols: Vec<usize> = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            !CORE_COLUMNS.contains(&h.as_str()) && !AWARE_POINT_COLUMNS.contains(&h.as_str())
        })
        .map(|(i, _)| i)
        .collect();

    let matrix_mode = market.distances.is_matrix();
    let mut observations = Vec::with_capacity(table.rows.len());
    let mut rejected = Vec::new();

    'rows: for (line, cells) in &table.rows {
        let row_id = cells[id].clone();
        let reject = |reason: String| RejectedRow { id: row_id.clone(), line: *line, reason };

        let Some(aware_before) = parse_flag01(&cells[aware]) else {
            rejected.push(reject(format!("aware_before must be 0 or 1, got {:?}", cells[aware])));
            continue;
        };
        let Some(regular_flag) = parse_flag01(&cells[regular]) else {
            rejected.push(reject(format!("regular must be 0 or 1, got {:?}", cells[regular])));
            continue;
        };
        let Some(morning_flag) = parse_flag01(&cells[morning]) else {
            rejected.push(reject(format!("morning must be 0 or 1, got {:?}", cells[morning])));
            continue;
        };
        let Ok(minutes_aware) = cells[minutes].parse::<f64>() else {
            rejected.push(reject(format!("minutes_aware {:?} is not a number", cells[minutes])));
            continue;
        };
        if minutes_aware < 0.0 {
            rejected.push(reject(format!("minutes_aware must be >= 0, got {minutes_aware}")));
            continue;
        }
        if aware_before && minutes_aware != 0.0 {
            rejected.push(reject(
                "contradictory row: aware_before = 1 with nonzero minutes_aware".into(),
            ));
            continue;
        }
        if market.zone_index(&cells[origin]).is_none() {
            rejected.push(reject(format!("unknown origin zone {:?}", cells[origin])));
            continue;
        }
        if market.zone_index(&cells[destination]).is_none() {
            rejected.push(reject(format!("unknown destination zone {:?}", cells[destination])));
            continue;
        }
        if cells[origin] == cells[destination] {
            rejected.push(reject("degenerate trip: origin equals destination".into()));
            continue;
        }
        if market.outlet_index(&cells[chosen]).is_none() {
            rejected.push(reject(format!("unknown chosen outlet {:?}", cells[chosen])));
            continue;
        }
        if matrix_mode && !aware_before {
            rejected.push(reject(
                "matrix-mode distances cannot place an en-route awareness point".into(),
            ));
            continue;
        }

        let awareness_point = match (aware_x, aware_y) {
            (Some(xc), Some(yc)) if !cells[xc].is_empty() || !cells[yc].is_empty() => {
                if aware_before {
                    rejected.push(reject(
                        "contradictory row: aware_before = 1 with an awareness point".into(),
                    ));
                    continue 'rows;
                }
                let (Ok(x), Ok(y)) = (cells[xc].parse::<f64>(), cells[yc].parse::<f64>()) else {
                    rejected.push(reject("awareness point is not numeric".into()));
                    continue 'rows;
                };
                Some(Point::new(x, y))
            }
            _ => None,
        };

        let covariates: BTreeMap<String, String> = covariate_cols
            .iter()
            .filter(|&&c| !cells[c].is_empty())
            .map(|&c| (table.header[c].clone(), cells[c].clone()))
            .collect();

        observations.push(Observation {
            id: row_id,
            origin: cells[origin].clone(),
            destination: cells[destination].clone(),
            chosen: cells[chosen].clone(),
            aware_before,
            minutes_aware,
            regular: regular_flag,
            morning: morning_flag,
            awareness_point,
            covariates,
        });
    }

    Ok(TripLoad { observations, rejected, warnings })
}

/// Writes observations in canonical form (rows sorted by id, union of
/// covariate columns in sorted order).
pub fn save_trips(observations: &[Observation], path: &Path) -> Result<(), IoError> {
    let covariate_keys: BTreeSet<&str> = observations
        .iter()
        .flat_map(|o| o.covariates.keys().map(|k| k.as_str()))
        .collect();
    let mut header: Vec<&str> = CORE_COLUMNS.to_vec();
    header.extend(AWARE_POINT_COLUMNS);
    header.extend(covariate_keys.iter());

    let mut rows: Vec<&Observation> = observations.iter().collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let mut text = header.join("\t");
    text.push('\n');
    for o in rows {
        let (ax, ay) = match o.awareness_point {
            Some(p) => (fmt_sig6(p.x), fmt_sig6(p.y)),
            None => (String::new(), String::new()),
        };
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            o.id,
            o.origin,
            o.destination,
            o.chosen,
            o.aware_before as u8,
            fmt_sig6(o.minutes_aware),
            o.regular as u8,
            o.morning as u8,
            ax,
            ay
        ));
        for key in &covariate_keys {
            text.push('\t');
            if let Some(v) = o.covariates.get(*key) {
                text.push_str(v);
            }
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate_synthetic, synthetic_market, ContextMix};

    fn write(path: &Path, content: &str) {
        fs::write(path, content).unwrap();
    }

    #[test]
    fn contradictory_minutes_rejected() {
        let market = synthetic_market(3, 10, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.tsv");
        let o = &market.outlets[0].id;
        write(
            &path,
            &format!(
                "id\torigin_id\tdestination_id\tchosen_outlet_id\taware_before\tminutes_aware\tregular\tmorning\n\
                 t1\tz01\tz02\t{o}\t1\t12\t1\t0\n\
                 t2\tz01\tz02\t{o}\t1\t0\t1\t0\n"
            ),
        );
        let load = load_trips(&path, &market).unwrap();
        assert_eq!(load.observations.len(), 1);
        assert_eq!(load.rejected.len(), 1);
        assert_eq!(load.rejected[0].id, "t1");
        assert!(load.rejected[0].reason.contains("contradictory"));
    }

    #[test]
    fn empty_file_warns_not_errors() {
        let market = synthetic_market(3, 10, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.tsv");
        write(&path, "");
        let load = load_trips(&path, &market).unwrap();
        assert!(load.observations.is_empty());
        assert_eq!(load.warnings.len(), 1);
    }

    #[test]
    fn unknown_ids_rejected_with_reasons() {
        let market = synthetic_market(3, 10, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.tsv");
        let o = &market.outlets[0].id;
        write(
            &path,
            &format!(
                "id\torigin_id\tdestination_id\tchosen_outlet_id\taware_before\tminutes_aware\tregular\tmorning\n\
                 t1\tnope\tz02\t{o}\t1\t0\t1\t0\n\
                 t2\tz01\tz01\t{o}\t1\t0\t1\t0\n\
                 t3\tz01\tz02\tmissing\t1\t0\t1\t0\n"
            ),
        );
        let load = load_trips(&path, &market).unwrap();
        assert!(load.observations.is_empty());
        assert_eq!(load.rejected.len(), 3);
        assert!(load.rejected[0].reason.contains("origin"));
        assert!(load.rejected[1].reason.contains("degenerate"));
        assert!(load.rejected[2].reason.contains("chosen"));
    }

    #[test]
    fn synthetic_round_trip_loads_clean() {
        let market = synthetic_market(5, 30, 2).unwrap();
        let coeffs = crate::demo::two_strategy_coefficients();
        let obs = generate_synthetic(&coeffs, &market, 200, &ContextMix::default(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.tsv");
        save_trips(&obs, &path).unwrap();
        let load = load_trips(&path, &market).unwrap();
        assert_eq!(load.observations.len(), 200);
        assert!(load.rejected.is_empty(), "rejects: {:?}", load.rejected);

        // canonical save round-trips byte-identically
        let path2 = dir.path().join("trips2.tsv");
        save_trips(&load.observations, &path2).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            fs::read_to_string(&path2).unwrap()
        );
    }

    #[test]
    fn covariate_columns_carried_through() {
        let market = synthetic_market(3, 10, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.tsv");
        let o = &market.outlets[0].id;
        write(
            &path,
            &format!(
                "id\torigin_id\tdestination_id\tchosen_outlet_id\taware_before\tminutes_aware\tregular\tmorning\ttank_level\n\
                 t1\tz01\tz02\t{o}\t1\t0\t1\t0\tlow\n"
            ),
        );
        let load = load_trips(&path, &market).unwrap();
        assert_eq!(load.observations[0].covariates["tank_level"], "low");
    }
}
