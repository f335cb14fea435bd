//! Market file set: outlets, zones, optional distance matrix, market config.

use std::fs;
use std::path::Path;

use super::{fmt_sig6, read_config, read_table, IoError, DELIMITER};
use crate::spatial::{
    DistanceMatrix, DistanceProvider, Market, Metric, Outlet, Point, Zone,
};

#[derive(Debug)]
pub struct MarketLoad {
    pub market: Market,
    pub warnings: Vec<String>,
}

const OUTLET_COLUMNS: [&str; 4] = ["id", "x_km", "y_km", "quality"];
const ZONE_COLUMNS: [&str; 4] = ["id", "x_km", "y_km", "opportunities"];

/// Loads a market directory: `market.cfg`, `outlets.tsv`, `zones.tsv` and,
/// in matrix mode, `distances.tsv`. With `strict`, unknown columns are
/// errors instead of warnings.
pub fn load_market(dir: &Path, strict: bool) -> Result<MarketLoad, IoError> {
    let mut warnings = Vec::new();

    let cfg = read_config(&dir.join("market.cfg"))?;
    let mut comp_radius = 0.5;
    let mut t_star: Option<f64> = None;
    let mut speed: Option<f64> = None;
    let mut metric = "euclidean".to_string();
    let mut scale = 1.0;
    for (key, value) in &cfg {
        let bad = |k: &str| IoError::Invalid { reason: format!("market.cfg: bad value for {k}: {value:?}") };
        match key.as_str() {
            "comp_radius" => comp_radius = value.parse().map_err(|_| bad(key))?,
            "t_star" => t_star = Some(value.parse().map_err(|_| bad(key))?),
            "speed" => speed = Some(value.parse().map_err(|_| bad(key))?),
            "metric" => metric = value.clone(),
            "scale" => scale = value.parse().map_err(|_| bad(key))?,
            other => {
                let msg = format!("market.cfg: unknown key {other:?}");
                if strict {
                    return Err(IoError::Invalid { reason: msg });
                }
                warnings.push(msg);
            }
        }
    }
    let t_star = t_star.ok_or_else(|| IoError::Invalid { reason: "market.cfg: missing t_star".into() })?;
    let speed = speed.ok_or_else(|| IoError::Invalid { reason: "market.cfg: missing speed".into() })?;

    let outlets = load_outlets(&dir.join("outlets.tsv"), strict, &mut warnings)?;
    let zones = load_zones(&dir.join("zones.tsv"), strict, &mut warnings)?;

    let distances = match metric.as_str() {
        "euclidean" => DistanceProvider::Metric { metric: Metric::Euclidean, scale },
        "rectilinear" => DistanceProvider::Metric { metric: Metric::Rectilinear, scale },
        "matrix" => {
            let matrix = load_distance_matrix(&dir.join("distances.tsv"))?;
            for o in &outlets {
                if !matrix.ids().contains(&o.id) {
                    return Err(IoError::Reference {
                        id: o.id.clone(),
                        context: "outlet missing from distance matrix".into(),
                    });
                }
            }
            for z in &zones {
                if !matrix.ids().contains(&z.id) {
                    return Err(IoError::Reference {
                        id: z.id.clone(),
                        context: "zone missing from distance matrix".into(),
                    });
                }
            }
            if matrix.asymmetric_pairs > 0 {
                warnings.push(format!(
                    "distances.tsv: {} asymmetric pair(s); kept as given (one-way streets exist)",
                    matrix.asymmetric_pairs
                ));
            }
            DistanceProvider::Matrix(matrix)
        }
        other => {
            return Err(IoError::Invalid { reason: format!("market.cfg: unknown metric {other:?}") })
        }
    };

    let market = Market::new(outlets, zones, distances, comp_radius, t_star, speed)?;
    Ok(MarketLoad { market, warnings })
}

fn check_unknown_columns(
    table: &super::Table,
    known: &[&str],
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<(), IoError> {
    for col in &table.header {
        if !known.contains(&col.as_str()) {
            let msg = format!("{}: unknown column {col:?}", table.path);
            if strict {
                return Err(IoError::Invalid { reason: msg });
            }
            warnings.push(msg);
        }
    }
    Ok(())
}

fn load_outlets(path: &Path, strict: bool, warnings: &mut Vec<String>) -> Result<Vec<Outlet>, IoError> {
    let table = read_table(path)?;
    check_unknown_columns(&table, &OUTLET_COLUMNS, strict, warnings)?;
    let id = table.column("id")?;
    let x = table.column("x_km")?;
    let y = table.column("y_km")?;
    let quality = table.column("quality")?;
    let mut outlets = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        outlets.push(Outlet {
            id: cells[id].clone(),
            location: Point::new(
                table.parse_f64(*line, cells, x)?,
                table.parse_f64(*line, cells, y)?,
            ),
            quality: table.parse_f64(*line, cells, quality)?,
        });
    }
    Ok(outlets)
}

fn load_zones(path: &Path, strict: bool, warnings: &mut Vec<String>) -> Result<Vec<Zone>, IoError> {
    let table = read_table(path)?;
    check_unknown_columns(&table, &ZONE_COLUMNS, strict, warnings)?;
    let id = table.column("id")?;
    let x = table.column("x_km")?;
    let y = table.column("y_km")?;
    let opp = table.column("opportunities")?;
    let mut zones = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        let raw = table.parse_f64(*line, cells, opp)?;
        if raw < 0.0 || raw.fract() != 0.0 {
            return Err(IoError::Parse {
                path: table.path.clone(),
                line: *line,
                message: format!("opportunities must be a nonnegative count, got {raw}"),
            });
        }
        zones.push(Zone {
            id: cells[id].clone(),
            centroid: Point::new(
                table.parse_f64(*line, cells, x)?,
                table.parse_f64(*line, cells, y)?,
            ),
            opportunities: raw as u32,
        });
    }
    Ok(zones)
}

fn load_distance_matrix(path: &Path) -> Result<DistanceMatrix, IoError> {
    let table = read_table(path)?;
    if table.header.len() < 2 || table.header[0] != "id" {
        return Err(IoError::Matrix {
            message: format!("{}: header must be 'id' followed by location ids", table.path),
        });
    }
    let ids: Vec<String> = table.header[1..].to_vec();
    let n = ids.len();
    if table.rows.len() != n {
        return Err(IoError::Matrix {
            message: format!("{}: {} ids but {} rows", table.path, n, table.rows.len()),
        });
    }
    let mut km = vec![0.0; n * n];
    for (line, cells) in &table.rows {
        let row_id = &cells[0];
        let i = ids.iter().position(|id| id == row_id).ok_or_else(|| IoError::Reference {
            id: row_id.clone(),
            context: "matrix row id not present in header".into(),
        })?;
        for j in 0..n {
            km[i * n + j] = table.parse_f64(*line, cells, j + 1)?;
        }
    }
    DistanceMatrix::new(ids, km).map_err(|e| IoError::Matrix { message: e.to_string() })
}

/// Writes the market back out in canonical form: ids sorted, numbers in
/// six-significant-digit format.
pub fn save_market(market: &Market, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;

    let mut outlets: Vec<&Outlet> = market.outlets.iter().collect();
    outlets.sort_by(|a, b| a.id.cmp(&b.id));
    let mut text = OUTLET_COLUMNS.join(&DELIMITER.to_string());
    text.push('\n');
    for o in outlets {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            o.id,
            fmt_sig6(o.location.x),
            fmt_sig6(o.location.y),
            fmt_sig6(o.quality)
        ));
    }
    fs::write(dir.join("outlets.tsv"), text)?;

    let mut zones: Vec<&Zone> = market.zones.iter().collect();
    zones.sort_by(|a, b| a.id.cmp(&b.id));
    let mut text = ZONE_COLUMNS.join(&DELIMITER.to_string());
    text.push('\n');
    for z in zones {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            z.id,
            fmt_sig6(z.centroid.x),
            fmt_sig6(z.centroid.y),
            z.opportunities
        ));
    }
    fs::write(dir.join("zones.tsv"), text)?;

    let mut cfg = String::new();
    cfg.push_str(&format!("comp_radius = {}\n", fmt_sig6(market.comp_radius)));
    cfg.push_str(&format!("t_star = {}\n", fmt_sig6(market.t_star)));
    cfg.push_str(&format!("speed = {}\n", fmt_sig6(market.speed)));
    match &market.distances {
        DistanceProvider::Metric { metric, scale } => {
            let name = match metric {
                Metric::Euclidean => "euclidean",
                Metric::Rectilinear => "rectilinear",
            };
            cfg.push_str(&format!("metric = {name}\n"));
            cfg.push_str(&format!("scale = {}\n", fmt_sig6(*scale)));
        }
        DistanceProvider::Matrix(matrix) => {
            cfg.push_str("metric = matrix\n");
            let ids = matrix.ids();
            let mut text = String::from("id");
            for id in ids {
                text.push(DELIMITER);
                text.push_str(id);
            }
            text.push('\n');
            for a in ids {
                text.push_str(a);
                for b in ids {
                    text.push(DELIMITER);
                    let site_a = crate::spatial::Site::named(a, Point::new(0.0, 0.0));
                    let site_b = crate::spatial::Site::named(b, Point::new(0.0, 0.0));
                    let d = market.distances.between(site_a, site_b)?;
                    text.push_str(&fmt_sig6(d));
                }
                text.push('\n');
            }
            fs::write(dir.join("distances.tsv"), text)?;
        }
    }
    fs::write(dir.join("market.cfg"), cfg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synthetic_market;

    #[test]
    fn round_trip_is_byte_identical() {
        let market = synthetic_market(12, 40, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_market(&market, dir.path()).unwrap();
        let first = std::fs::read_to_string(dir.path().join("outlets.tsv")).unwrap();

        let loaded = load_market(dir.path(), true).unwrap();
        assert!(loaded.warnings.is_empty());
        let dir2 = tempfile::tempdir().unwrap();
        save_market(&loaded.market, dir2.path()).unwrap();
        for name in ["outlets.tsv", "zones.tsv", "market.cfg"] {
            let a = std::fs::read_to_string(dir.path().join(name)).unwrap();
            let b = std::fs::read_to_string(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs after round trip");
        }
        assert_eq!(first, std::fs::read_to_string(dir2.path().join("outlets.tsv")).unwrap());
    }

    #[test]
    fn missing_matrix_entry_is_reference_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("market.cfg"),
            "comp_radius = 0.5\nt_star = 12\nspeed = 0.3\nmetric = matrix\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("outlets.tsv"), "id\tx_km\ty_km\tquality\no1\t1\t1\t85\n")
            .unwrap();
        std::fs::write(dir.path().join("zones.tsv"), "id\tx_km\ty_km\topportunities\nz1\t0\t0\t1\n")
            .unwrap();
        std::fs::write(dir.path().join("distances.tsv"), "id\tz1\nz1\t0\n").unwrap();
        let err = load_market(dir.path(), false);
        match err {
            Err(IoError::Reference { id, .. }) => assert_eq!(id, "o1"),
            other => panic!("expected reference error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_warns() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("market.cfg"),
            "comp_radius = 0.5\nt_star = 12\nspeed = 0.3\nmetric = matrix\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("outlets.tsv"), "id\tx_km\ty_km\tquality\no1\t1\t1\t85\n")
            .unwrap();
        std::fs::write(dir.path().join("zones.tsv"), "id\tx_km\ty_km\topportunities\nz1\t0\t0\t1\n")
            .unwrap();
        std::fs::write(
            dir.path().join("distances.tsv"),
            "id\to1\tz1\no1\t0\t1.5\nz1\t1.2\t0\n",
        )
        .unwrap();
        let loaded = load_market(dir.path(), false).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("asymmetric"));
    }

    #[test]
    fn unknown_column_warns_or_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("market.cfg"),
            "comp_radius = 0.5\nt_star = 12\nspeed = 0.3\nmetric = euclidean\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("outlets.tsv"),
            "id\tx_km\ty_km\tquality\tbrand\no1\t1\t1\t85\tacme\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("zones.tsv"), "id\tx_km\ty_km\topportunities\nz1\t0\t0\t1\n")
            .unwrap();
        let loaded = load_market(dir.path(), false).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(load_market(dir.path(), true).is_err());
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("market.cfg"),
            "comp_radius = 0.5\nt_star = 12\nspeed = 0.3\nmetric = euclidean\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("outlets.tsv"),
            "id\tx_km\ty_km\tquality\no1\t1\t1\t85\no2\t2\tbogus\t84\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("zones.tsv"), "id\tx_km\ty_km\topportunities\nz1\t0\t0\t1\n")
            .unwrap();
        match load_market(dir.path(), false) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
