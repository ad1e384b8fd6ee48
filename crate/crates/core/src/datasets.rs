//! CSV ingestion, feature scaling, splits and synthetic stand-ins for the
//! thermal-power and star-age datasets.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Bounds, ColumnScaling, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Feature,
    Target,
    LowerBound,
    UpperBound,
    Ignored,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    /// `(v − mean) / std`
    Standardize,
    /// `v / std`
    StdDivide,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub scaling: Scaling,
}

impl ColumnSpec {
    pub fn feature(name: &str, scaling: Scaling) -> Self {
        Self {
            name: name.to_string(),
            role: Role::Feature,
            scaling,
        }
    }

    pub fn with_role(name: &str, role: Role) -> Self {
        Self {
            name: name.to_string(),
            role,
            scaling: Scaling::None,
        }
    }
}

/// Checks that `specs` name exactly one target, bounds in pairs, at least
/// one feature, and scaling only on features.
pub fn validate_specs(specs: &[ColumnSpec]) -> Result<()> {
    let count = |role| specs.iter().filter(|s| s.role == role).count();
    if count(Role::Target) != 1 {
        return Err(Error::Config("exactly one target column is required".into()));
    }
    if count(Role::Feature) == 0 {
        return Err(Error::Config("at least one feature column is required".into()));
    }
    let (lo, hi) = (count(Role::LowerBound), count(Role::UpperBound));
    if lo > 1 || hi > 1 || lo != hi {
        return Err(Error::Config(
            "lower_bound and upper_bound must both be present or both absent".into(),
        ));
    }
    if let Some(s) = specs
        .iter()
        .find(|s| s.role != Role::Feature && s.scaling != Scaling::None)
    {
        return Err(Error::Config(format!(
            "column `{}`: scaling applies to feature columns only",
            s.name
        )));
    }
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|o| o.name == s.name) {
            return Err(Error::Config(format!("column `{}` listed twice", s.name)));
        }
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, specs: &[ColumnSpec]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, specs)
}

/// Reads a headed, comma-separated table. Feature columns keep the order in
/// which they appear in `specs`. Rows are numbered from 1 (first data row)
/// in error messages.
pub fn read_csv<R: Read>(reader: R, specs: &[ColumnSpec]) -> Result<Dataset> {
    validate_specs(specs)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let index_of = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let used: Vec<(usize, &ColumnSpec)> = specs
        .iter()
        .filter(|s| s.role != Role::Ignored)
        .map(|s| Ok((index_of(&s.name)?, s)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let mut features = Vec::new();
        for &(col, spec) in &used {
            let raw = record.get(col).unwrap_or("");
            let value = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row: i + 1,
                    column: spec.name.clone(),
                    value: raw.to_string(),
                })?;
            match spec.role {
                Role::Feature => features.push(value),
                Role::Target => targets.push(value),
                Role::LowerBound => lower.push(value),
                Role::UpperBound => upper.push(value),
                Role::Ignored => {}
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    let names = specs
        .iter()
        .filter(|s| s.role == Role::Feature)
        .map(|s| s.name.clone())
        .collect();
    let bounds = (!lower.is_empty()).then_some(Bounds { lower, upper });
    Dataset::new(rows, targets, bounds, Some(names))
}

/// Writes a dataset (features, target and bounds if any) as CSV.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset, target: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push(target.to_string());
    if data.bounds().is_some() {
        header.push(format!("{target}_lower"));
        header.push(format!("{target}_upper"));
    }
    w.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{:?}", data.targets()[i]));
        if let Some(b) = data.bounds() {
            rec.push(format!("{:?}", b.lower[i]));
            rec.push(format!("{:?}", b.upper[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scaling parameters computed on the training data, one entry per feature
/// (in dataset order).
pub fn fit_scaling(train: &Dataset, specs: &[ColumnSpec]) -> Result<Vec<ColumnScaling>> {
    let features: Vec<&ColumnSpec> = specs.iter().filter(|s| s.role == Role::Feature).collect();
    if features.len() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            got: features.len(),
        });
    }
    features
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            if spec.scaling == Scaling::None {
                return Ok(ColumnScaling::None);
            }
            let (mean, std) = mean_std(&train.column(j));
            if !(std > 0.0) {
                return Err(Error::ZeroVariance(spec.name.clone()));
            }
            Ok(match spec.scaling {
                Scaling::Standardize => ColumnScaling::ZScore { mean, std },
                _ => ColumnScaling::StdDivide { std },
            })
        })
        .collect()
}

pub fn apply_scaling(data: &Dataset, state: &[ColumnScaling]) -> Result<Dataset> {
    data.scaled(state)
}

/// Seeded random 80/20 train/test split.
pub fn split_80_20(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (data.len() * 4).div_ceil(5);
    let (train, test) = idx.split_at(n_train);
    (data.select(train), data.select(test))
}

/// Column names of the thermal-power schema.
pub const MEX_FEATURES: [&str; 6] = ["LVAH", "SH", "D_ecl", "TX", "FO", "NS"];
/// Column names of the star-age schema.
pub const STAR_FEATURES: [&str; 7] = ["M", "R", "Teff", "L", "FeH", "logg", "Prot"];

/// Synthetic thermal-power data: six contributors and a power target built
/// from a linear reference model plus a mild interaction term and noise.
/// `shift` moves the operating range of the contributors.
pub fn synthetic_mex(n: usize, seed: u64, shift: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 4.0).expect("valid normal");
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let lvah = rng.gen_range(0.0..1.0) * (1.0 + shift);
        let sh = rng.gen_range(50.0..300.0) + 50.0 * shift;
        let d_ecl = rng.gen_range(0.0..4000.0) * (1.0 + shift);
        let tx = rng.gen_range(0.0..1.0);
        let fo = f64::from(rng.gen_bool(0.1));
        let ns = f64::from(rng.gen_bool(0.5));
        let p = -76.66 * lvah - 0.1764 * sh - 3.387e-3 * d_ecl - 6.898 * tx
            + 11.07 * fo
            + 6.820 * ns
            + 226.7
            + 2.0e-4 * sh * sh * (1.0 - 0.5 * lvah)
            + noise.sample(&mut rng);
        rows.push(vec![lvah, sh, d_ecl, tx, fo, ns]);
        targets.push(p);
    }
    let names = MEX_FEATURES.iter().map(|s| s.to_string()).collect();
    Dataset::new(rows, targets, None, Some(names)).expect("synthetic data is valid")
}

/// Synthetic star-age data: seven observables, an age target and a
/// confidence interval around it.
pub fn synthetic_star(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("valid normal");
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for _ in 0..n {
        let mass: f64 = rng.gen_range(0.7..1.4);
        let radius = mass.powf(0.8) * rng.gen_range(0.9..1.2);
        let teff = 5772.0 * mass.powf(0.5) + rng.gen_range(-150.0..150.0);
        let lum = radius * radius * (teff / 5772.0).powi(4);
        let feh = rng.gen_range(-0.5..0.4);
        let logg = 4.44 + (mass / (radius * radius)).log10();
        let prot = rng.gen_range(2.0..40.0);
        let age = (0.25 * prot - (radius - feh).sin() + 2.0 * (1.2 - mass) + noise.sample(&mut rng))
            .max(0.1);
        let lo = (age - rng.gen_range(0.2..1.5)).max(0.0);
        let hi = age + rng.gen_range(0.2..1.5);
        rows.push(vec![mass, radius, teff, lum, feh, logg, prot]);
        targets.push(age);
        lower.push(lo);
        upper.push(hi);
    }
    let names = STAR_FEATURES.iter().map(|s| s.to_string()).collect();
    Dataset::new(rows, targets, Some(Bounds { lower, upper }), Some(names))
        .expect("synthetic data is valid")
}

/// `y = f(x0)` sampled uniformly on `[lo, hi]`.
pub fn synthetic_univariate(
    n: usize,
    seed: u64,
    (lo, hi): (f64, f64),
    f: impl Fn(f64) -> f64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let ys = xs.iter().map(|&x| f(x)).collect();
    Dataset::new(xs.into_iter().map(|x| vec![x]).collect(), ys, None, None)
        .expect("synthetic data is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::feature("x0", Scaling::None),
            ColumnSpec::feature("x1", Scaling::None),
            ColumnSpec::with_role("y", Role::Target),
        ]
    }

    #[test]
    fn reads_simple_table() {
        let csv = "x0,x1,y\n1,2,3\n4,5,6\n7,8.5e-1,9\n";
        let d = read_csv(csv.as_bytes(), &specs()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.row(2), &[7.0, 0.85]);
        assert_eq!(d.targets(), &[3.0, 6.0, 9.0]);
        assert!(d.bounds().is_none());
    }

    #[test]
    fn nan_cell_names_row() {
        let csv = "x0,x1,y\n1,2,3\n4,NaN,6\n";
        match read_csv(csv.as_bytes(), &specs()) {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("expected BadCell, got {other:?}"),
        }
        let csv = "x0,x1,y\n1,,3\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &specs()),
            Err(Error::BadCell { row: 1, .. })
        ));
    }

    #[test]
    fn missing_column_and_empty_file() {
        let csv = "x0,y\n1,2\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &specs()),
            Err(Error::MissingColumn(c)) if c == "x1"
        ));
        assert!(read_csv("x0,x1,y\n".as_bytes(), &specs()).is_err());
    }

    #[test]
    fn bounds_and_ignored_columns() {
        let mut s = specs();
        s.push(ColumnSpec::with_role("lo", Role::LowerBound));
        s.push(ColumnSpec::with_role("hi", Role::UpperBound));
        s.push(ColumnSpec::with_role("id", Role::Ignored));
        let csv = "id,x0,x1,y,lo,hi\nstar-a,1,2,3,2.5,4\nstar-b,4,5,6,5,6\n";
        let d = read_csv(csv.as_bytes(), &s).unwrap();
        let b = d.bounds().unwrap();
        assert_eq!(b.lower, vec![2.5, 5.0]);
        assert_eq!(b.upper, vec![4.0, 6.0]);
    }

    #[test]
    fn spec_validation() {
        let mut s = specs();
        s.push(ColumnSpec::with_role("lo", Role::LowerBound));
        assert!(validate_specs(&s).is_err());
        let mut s = specs();
        s[2].scaling = Scaling::Standardize;
        assert!(validate_specs(&s).is_err());
        let s = vec![ColumnSpec::feature("x0", Scaling::None)];
        assert!(validate_specs(&s).is_err());
    }

    #[test]
    fn standardize_and_std_divide() {
        let d = Dataset::new(
            vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 9.0]],
            vec![0.0; 3],
            None,
            None,
        )
        .unwrap();
        let s = vec![
            ColumnSpec::feature("x0", Scaling::Standardize),
            ColumnSpec::feature("x1", Scaling::StdDivide),
            ColumnSpec::with_role("y", Role::Target),
        ];
        let state = fit_scaling(&d, &s).unwrap();
        match state[0] {
            ColumnScaling::ZScore { mean, std } => {
                assert_eq!(mean, 2.0);
                assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let t = apply_scaling(&d, &state).unwrap();
        let (m0, s0) = mean_std(&t.column(0));
        assert!(m0.abs() < 1e-15 && (s0 - 1.0).abs() < 1e-12);
        let (_, s1) = mean_std(&t.column(1));
        assert!((s1 - 1.0).abs() < 1e-12);

        // test data transformed with training statistics
        let test = Dataset::new(vec![vec![5.0, 1.0], vec![6.0, 1.0]], vec![0.0; 2], None, None)
            .unwrap();
        let tt = apply_scaling(&test, &state).unwrap();
        assert!(mean_std(&tt.column(0)).0.abs() > 1.0);
    }

    #[test]
    fn zero_variance_is_rejected() {
        let d = Dataset::new(vec![vec![1.0], vec![1.0]], vec![0.0, 1.0], None, None).unwrap();
        let s = vec![
            ColumnSpec::feature("x0", Scaling::StdDivide),
            ColumnSpec::with_role("y", Role::Target),
        ];
        assert!(matches!(fit_scaling(&d, &s), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = synthetic_star(101, 1);
        let (a, b) = split_80_20(&d, 7);
        assert_eq!(a.len() + b.len(), 101);
        assert_eq!(a.len(), 81);
        let (a2, _) = split_80_20(&d, 7);
        assert_eq!(a, a2);
    }

    #[test]
    fn synthetic_schemas() {
        let m = synthetic_mex(50, 0, 0.0);
        assert_eq!(m.n_features(), 6);
        assert!(m.bounds().is_none());
        let s = synthetic_star(50, 0);
        assert_eq!(s.n_features(), 7);
        assert!(s.bounds().is_some());
    }
}
