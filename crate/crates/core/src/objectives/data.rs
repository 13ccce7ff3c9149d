use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dot, l1_norm};
use crate::error::{invalid, Error, Result};
use crate::privacy::{fmt_f64, RngStream};

/// Generation metadata, stored as a JSON sidecar next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    /// Declared bound on every `‖u_i‖₁`.
    pub u_max: f64,
    pub seed: Option<u64>,
    pub true_parameter: Option<Vec<f64>>,
}

/// Labelled records `(u_i, z_i)` with `z_i ∈ {-1, +1}` and `‖u_i‖₁ ≤ u_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    meta: DatasetMeta,
}

impl Dataset {
    /// Builds a dataset from row-major features (`n×d`) and labels.
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<f64>, u_max: f64) -> Result<Self> {
        Self::with_meta(
            features,
            labels,
            DatasetMeta {
                n: 0,
                d,
                u_max,
                seed: None,
                true_parameter: None,
            },
        )
    }

    fn with_meta(features: Vec<f64>, labels: Vec<f64>, mut meta: DatasetMeta) -> Result<Self> {
        let d = meta.d;
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if features.len() != labels.len() * d {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * d,
                got: features.len(),
            });
        }
        if let Some(z) = labels.iter().find(|z| **z != 1.0 && **z != -1.0) {
            return Err(invalid(format!("labels must be -1 or +1, got {z}")));
        }
        for (i, row) in features.chunks(d).enumerate() {
            let norm = l1_norm(row);
            if norm > meta.u_max * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "record {i} has L1 norm {norm} above the declared bound {}",
                    meta.u_max
                )));
            }
        }
        meta.n = labels.len();
        Ok(Self { features, labels, meta })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.meta.d
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn features(&self, i: usize) -> &[f64] {
        let d = self.meta.d;
        &self.features[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// `(1/n) UᵀU + shift·I`, row-major `d×d`.
    pub fn gram_matrix(&self, shift: f64) -> Vec<f64> {
        let d = self.meta.d;
        let mut g = vec![0.0; d * d];
        for row in self.features.chunks(d) {
            for i in 0..d {
                for j in 0..d {
                    g[i * d + j] += row[i] * row[j];
                }
            }
        }
        let inv = 1.0 / self.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        for i in 0..d {
            g[i * d + i] += shift;
        }
        g
    }

    /// Fraction of records labelled `+1`.
    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().filter(|z| **z > 0.0).count() as f64 / self.len() as f64
    }

    /// Writes `z,u_1,...,u_d` rows to `csv_path` and the metadata to `<csv_path>.json`.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
        let mut header = vec!["z".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("u_{j}")));
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![fmt_f64(self.label(i))];
            record.extend(self.features(i).iter().map(|v| fmt_f64(*v)));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        serde_json::to_writer_pretty(File::create(sidecar_path(csv_path))?, &self.meta)?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::save`]. The JSON sidecar is required
    /// because it carries the declared L1 bound.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_reader(BufReader::new(File::open(sidecar_path(csv_path))?))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
        let d = reader.headers()?.len().saturating_sub(1);
        if d != meta.d {
            return Err(Error::DimensionMismatch { expected: meta.d, got: d });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("bad number {f:?}: {e}")))
            });
            labels.push(fields.next().ok_or_else(|| invalid("empty row"))??);
            for value in fields {
                features.push(value?);
            }
        }
        Self::with_meta(features, labels, meta)
    }
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Synthetic logistic-regression data.
///
/// Each covariate vector has i.i.d. uniform(-1, 1) entries and is rescaled to
/// an L1 norm of `u_max·β` with `β ~ uniform(0.5, 1)`. The true parameter has
/// entries `±1`, and labels are drawn from the logistic model at that parameter.
pub fn generate_synthetic(d: usize, n: usize, u_max: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || n == 0 {
        return Err(invalid("d and n must be at least 1"));
    }
    if !(u_max > 0.0) {
        return Err(invalid(format!("u_max must be positive, got {u_max}")));
    }
    let mut rng = RngStream::new(seed);
    let truth: Vec<f64> = (0..d)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for _ in 0..n {
        row.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let norm = l1_norm(&row);
        let target = u_max * rng.gen_range(0.5..1.0);
        let scale = if norm > 0.0 { target / norm } else { 0.0 };
        row.iter_mut().for_each(|v| *v *= scale);
        // Guard against rounding pushing the norm a hair past the bound.
        let overshoot = l1_norm(&row) / u_max;
        if overshoot > 1.0 {
            row.iter_mut().for_each(|v| *v /= overshoot);
        }
        let p = 1.0 / (1.0 + (-dot(&row, &truth)).exp());
        labels.push(if rng.gen::<f64>() < p { 1.0 } else { -1.0 });
        features.extend_from_slice(&row);
    }
    Dataset::with_meta(
        features,
        labels,
        DatasetMeta {
            n,
            d,
            u_max,
            seed: Some(seed),
            true_parameter: Some(truth),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariates_respect_l1_bound() {
        let data = generate_synthetic(20, 10_000, 20.0, 11).unwrap();
        assert_eq!(data.len(), 10_000);
        for i in 0..data.len() {
            let norm = l1_norm(data.features(i));
            assert!(norm <= 20.0 && norm >= 10.0 * (1.0 - 1e-12), "{norm}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            generate_synthetic(4, 50, 3.0, 5).unwrap(),
            generate_synthetic(4, 50, 3.0, 5).unwrap()
        );
        assert_ne!(
            generate_synthetic(4, 50, 3.0, 5).unwrap(),
            generate_synthetic(4, 50, 3.0, 6).unwrap()
        );
    }

    #[test]
    fn labels_are_balanced() {
        let data = generate_synthetic(20, 10_000, 20.0, 2).unwrap();
        let rate = data.positive_rate();
        assert!((0.3..=0.7).contains(&rate), "{rate}");
    }

    #[test]
    fn rejects_out_of_bound_rows() {
        assert!(Dataset::new(2, vec![1.0, 1.5], vec![1.0], 2.0).is_err());
        assert!(Dataset::new(2, vec![1.0, 0.5], vec![0.0], 2.0).is_err());
        assert!(Dataset::new(2, vec![1.0], vec![1.0], 2.0).is_err());
        assert!(generate_synthetic(0, 5, 1.0, 0).is_err());
        assert!(generate_synthetic(2, 5, 0.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let data = generate_synthetic(3, 40, 2.5, 9).unwrap();
        data.save(&path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("z,u_1,u_2,u_3\n"));
        assert_eq!(Dataset::load(&path).unwrap(), data);
    }
}
