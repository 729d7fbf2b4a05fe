//! Dataset loading, simulation and CSV input/output.

use super::config::{DataConfig, Scenario};
use super::presets;
use crate::error::{Error, Result};
use crate::math::{sample_normal, sample_poisson};
use crate::model::{ClusterModel, Model};
use crate::prior::DistanceMatrix;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// A ChaCha stream derived from the run seed and a stream name, so that
/// data, each chain and prediction draw from independent sources.
pub fn substream(seed: u64, name: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    rand_chacha::ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub distances: DistanceMatrix,
    /// Generating group of each point, for simulated data only.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Observations and optional covariate from CSV with a header row. Other
/// columns are ignored.
pub fn read_observations<R: Read>(reader: R) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let yi = col("y").ok_or_else(|| Error::Data("data CSV has no 'y' column".into()))?;
    let xi = col("x");
    let mut y = Vec::new();
    let mut x = xi.map(|_| Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize, what: &str| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("row {}: {what} value '{s}' is not a finite number", row + 1)))
        };
        y.push(parse(yi, "y")?);
        if let (Some(i), Some(x)) = (xi, x.as_mut()) {
            x.push(parse(i, "x")?);
        }
    }
    if y.is_empty() {
        return Err(Error::Data("data CSV has no rows".into()));
    }
    Ok((y, x))
}

/// Headerless square distance matrix.
pub fn read_distances<R: Read>(reader: R) -> Result<DistanceMatrix> {
    let rows = read_rows(reader)?;
    DistanceMatrix::from_rows(&rows).map_err(|e| Error::Data(e.to_string()))
}

/// Headerless numeric rows (not necessarily square).
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("distance row {}: '{s}' is not a number", r + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Draw a scenario dataset. Group sizes differ by at most one.
pub fn simulate_poisson_dataset<R: Rng>(sc: &Scenario, rng: &mut R) -> Result<Dataset> {
    sc.validate()?;
    let k = sc.means.len();
    let labels: Vec<usize> = (0..sc.n).map(|i| i * k / sc.n).collect();
    let mut x = Vec::with_capacity(sc.n);
    let mut y = Vec::with_capacity(sc.n);
    for &z in &labels {
        x.push(sample_normal(sc.means[z], sc.sd, rng));
        y.push(sample_poisson(sc.rates[z], rng));
    }
    let distances = DistanceMatrix::from_covariate(&x)?;
    Ok(Dataset {
        y,
        x: Some(x),
        distances,
        labels: Some(labels),
    })
}

/// Write `y,x[,label]` with a header row.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y"];
    if ds.x.is_some() {
        header.push("x");
    }
    if ds.labels.is_some() {
        header.push("label");
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![ds.y[i].to_string()];
        if let Some(x) = &ds.x {
            rec.push(x[i].to_string());
        }
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn assemble(y: Vec<f64>, x: Option<Vec<f64>>, distances: Option<DistanceMatrix>) -> Result<Dataset> {
    let distances = match (&x, distances) {
        (Some(_), Some(_)) => {
            return Err(Error::Data(
                "give either an 'x' column or a distance matrix, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Data(
                "no distance source: add an 'x' column or a distance matrix".into(),
            ))
        }
        (Some(x), None) => DistanceMatrix::from_covariate(x).map_err(|e| Error::Data(e.to_string()))?,
        (None, Some(d)) => d,
    };
    if distances.n() != y.len() {
        return Err(Error::Data(format!(
            "{} observations but a {}-point distance matrix",
            y.len(),
            distances.n()
        )));
    }
    Ok(Dataset {
        y,
        x,
        distances,
        labels: None,
    })
}

/// Load or simulate the configured dataset and check it against the model.
pub fn load_dataset(cfg: &DataConfig, model: &Model, seed: u64) -> Result<Dataset> {
    let ds = match cfg {
        DataConfig::Csv { path, distances } => {
            let (y, x) = read_observations(open(path)?)?;
            let d = distances.as_ref().map(|p| read_distances(open(p)?)).transpose()?;
            assemble(y, x, d)?
        }
        DataConfig::Bundled { name } => {
            let text = presets::dataset(name)
                .ok_or_else(|| Error::Config(format!("unknown bundled dataset '{name}'")))?;
            let (y, x) = read_observations(text.as_bytes())?;
            assemble(y, x, None)?
        }
        DataConfig::Simulate(sc) => simulate_poisson_dataset(sc, &mut substream(seed, "data"))?,
    };
    model
        .validate_observations(&ds.y)
        .map_err(|e| Error::Data(e.to_string()))?;
    Ok(ds)
}
