//! Unit-level CSV files.
//!
//! Required columns: `id`, `z` (0/1) and either `lon,lat` (great-circle
//! distance in km) or `x,y` (Euclidean). Covariates are the columns prefixed
//! `x_`; the prefix is dropped from the covariate name. The outcome column is
//! `outcome`, or `y` when the coordinates are `lon,lat`.

use std::io::{Read, Write};

use dapsm::geometry::{Location, Metric};
use dapsm::Dataset;

use crate::error::CliError;

pub const COVARIATE_PREFIX: &str = "x_";

struct Layout {
    id: usize,
    coords: (usize, usize),
    metric: Metric,
    z: usize,
    outcome: Option<usize>,
    covariates: Vec<(String, usize)>,
}

fn layout(headers: &csv::StringRecord) -> Result<Layout, CliError> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| CliError::Schema(format!("missing required column `{name}`")));

    let geo = (find("lon"), find("lat"));
    let plane = (find("x"), find("y"));
    let (coords, metric) = match geo {
        (Some(a), Some(b)) => {
            if plane.0.is_some() {
                return Err(CliError::Schema("both lon/lat and x columns present".into()));
            }
            ((a, b), Metric::Geodesic)
        }
        (None, None) => match plane {
            (Some(a), Some(b)) => ((a, b), Metric::Euclidean),
            (None, _) => return Err(CliError::Schema("missing coordinate columns: need lon,lat or x,y".into())),
            (Some(_), None) => return Err(CliError::Schema("missing required column `y`".into())),
        },
        (Some(_), None) => return Err(CliError::Schema("missing required column `lat`".into())),
        (None, Some(_)) => return Err(CliError::Schema("missing required column `lon`".into())),
    };
    let outcome = match metric {
        Metric::Geodesic => match (find("y"), find("outcome")) {
            (Some(_), Some(_)) => return Err(CliError::Schema("both `y` and `outcome` columns present".into())),
            (a, b) => a.or(b),
        },
        Metric::Euclidean => find("outcome"),
    };
    let covariates: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(k, h)| h.strip_prefix(COVARIATE_PREFIX).map(|name| (name.to_string(), k)))
        .collect();
    if let Some((name, _)) = covariates.iter().find(|(n, _)| n.is_empty()) {
        return Err(CliError::Schema(format!("covariate column `{COVARIATE_PREFIX}{name}` has no name")));
    }
    Ok(Layout { id: require("id")?, coords, metric, z: require("z")?, outcome, covariates })
}

fn number(record: &csv::StringRecord, col: usize, name: &str, row: u64) -> Result<f64, CliError> {
    let raw = record.get(col).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(CliError::Schema(format!("row {row}: missing value in column `{name}`")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::Schema(format!("row {row}: column `{name}` has non-numeric value `{raw}`")))?;
    if !v.is_finite() {
        return Err(CliError::Schema(format!("row {row}: column `{name}` is not finite")));
    }
    Ok(v)
}

/// Reads a dataset. Row numbers in errors are file line numbers, the header
/// being line 1.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let lay = layout(&headers)?;
    let name = |k: usize| headers.get(k).unwrap_or("").to_string();

    let mut ids = Vec::new();
    let mut locations = Vec::new();
    let mut z = Vec::new();
    let mut outcome = lay.outcome.map(|_| Vec::new());
    let mut covariates = vec![Vec::new(); lay.covariates.len()];
    let mut seen = std::collections::HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let id = record.get(lay.id).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(CliError::Schema(format!("row {row}: empty id")));
        }
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(CliError::Schema(format!("row {row}: id `{id}` already used on row {first}")));
        }
        let lx = number(&record, lay.coords.0, &name(lay.coords.0), row)?;
        let ly = number(&record, lay.coords.1, &name(lay.coords.1), row)?;
        if lay.metric == Metric::Geodesic && (!(-180.0..=180.0).contains(&lx) || !(-90.0..=90.0).contains(&ly)) {
            return Err(CliError::Schema(format!("row {row}: lon/lat ({lx}, {ly}) out of range")));
        }
        let treat = match record.get(lay.z).unwrap_or("").trim() {
            "1" => true,
            "0" => false,
            other => return Err(CliError::Schema(format!("row {row}: column `z` must be 0 or 1, got `{other}`"))),
        };
        if let (Some(col), Some(ys)) = (lay.outcome, outcome.as_mut()) {
            ys.push(number(&record, col, &name(col), row)?);
        }
        for ((cov_name, col), values) in lay.covariates.iter().zip(&mut covariates) {
            values.push(number(&record, *col, &format!("{COVARIATE_PREFIX}{cov_name}"), row)?);
        }
        ids.push(id);
        locations.push(Location::new(lx, ly));
        z.push(treat);
    }
    if ids.is_empty() {
        return Err(CliError::Schema("input has no data rows".into()));
    }
    let names = lay.covariates.into_iter().map(|(n, _)| n).collect();
    Ok(Dataset::new(ids, locations, lay.metric, names, covariates, z, outcome)?)
}

/// Writes a dataset in the layout `read_dataset` accepts. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let (cx, cy, out) = match dataset.metric {
        Metric::Geodesic => ("lon", "lat", "y"),
        Metric::Euclidean => ("x", "y", "outcome"),
    };
    let mut header = vec!["id".to_string(), cx.into(), cy.into(), "z".into()];
    if dataset.outcome.is_some() {
        header.push(out.into());
    }
    header.extend(dataset.covariate_names.iter().map(|n| format!("{COVARIATE_PREFIX}{n}")));
    w.write_record(&header)?;
    for i in 0..dataset.n_units() {
        let loc = dataset.locations[i];
        let mut row = vec![
            dataset.ids[i].clone(),
            loc.x.to_string(),
            loc.y.to_string(),
            if dataset.treatment[i] { "1" } else { "0" }.to_string(),
        ];
        if let Some(y) = &dataset.outcome {
            row.push(y[i].to_string());
        }
        row.extend(dataset.covariates.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Coordinates only, for simulation location files.
pub fn read_locations<R: Read>(reader: R) -> Result<(Vec<Location>, Metric), CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let ((a, b), metric) = match (find("lon"), find("lat"), find("x"), find("y")) {
        (Some(a), Some(b), _, _) => ((a, b), Metric::Geodesic),
        (_, _, Some(a), Some(b)) => ((a, b), Metric::Euclidean),
        _ => return Err(CliError::Schema("location file needs lon,lat or x,y columns".into())),
    };
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        points.push(Location::new(
            number(&record, a, &headers[a], row)?,
            number(&record, b, &headers[b], row)?,
        ));
    }
    Ok((points, metric))
}
