//! Run-off triangle panels: storage, CSV ingestion and value transforms.
//!
//! Indices are zero-based internally. Cell `(i, j)` of a triangle is in the
//! calibration (upper) triangle when `i + j <= n - 1`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub divisor: f64,
    pub power: f64,
    pub enabled: bool,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            divisor: 1000.0,
            power: 0.5,
            enabled: false,
        }
    }
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec {
            divisor: 1.0,
            power: 1.0,
            enabled: false,
        }
    }

    /// Divide by 1000, then take the square root.
    pub fn sqrt_thousands() -> Self {
        TransformSpec {
            divisor: 1000.0,
            power: 0.5,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.divisor > 0.0 && self.divisor.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "transform divisor must be positive, got {}",
                self.divisor
            )));
        }
        if !(self.power > 0.0 && self.power <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "transform power must lie in (0, 1], got {}",
                self.power
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeValue {
                value: x,
                location: "transform input".into(),
            });
        }
        if !self.enabled {
            return Ok(x);
        }
        Ok((x / self.divisor).powf(self.power))
    }

    /// Maps a model-scale value back to the money scale.
    pub fn invert(&self, y: f64) -> f64 {
        if !self.enabled {
            return y;
        }
        y.max(0.0).powf(1.0 / self.power) * self.divisor
    }
}

/// Maps a model-scale value back to the money scale.
pub fn invert_transform(value: f64, t: &TransformSpec) -> f64 {
    t.invert(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub business: String,
    pub origin: String,
    pub dev: String,
    pub value: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            business: "business_id".into(),
            origin: "origin_year".into(),
            dev: "dev_year".into(),
            value: "value".into(),
        }
    }
}

impl ColumnSchema {
    /// Column names used by the NAIC Schedule P extracts.
    pub fn naic() -> Self {
        ColumnSchema {
            business: "GRCODE".into(),
            origin: "AccidentYear".into(),
            dev: "DevelopmentLag".into(),
            value: "IncrLoss".into(),
        }
    }
}

/// `K` run-off triangles of incremental claims sharing the same depth `n`.
///
/// Every cell slot exists; `present` marks slots that carry a value and
/// `observed` the subset visible to inference. Present-but-unobserved cells
/// are held-out truth used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrianglePanel {
    n: usize,
    businesses: usize,
    values: Vec<f64>,
    present: Vec<bool>,
    observed: Vec<bool>,
    pub business_ids: Vec<String>,
    pub origin_labels: Vec<i64>,
    pub dev_labels: Vec<i64>,
    /// Transform applied to the stored values, if any.
    pub transform: Option<TransformSpec>,
}

impl TrianglePanel {
    /// Builds a panel from a full `n x n x K` square (index `[k][i][j]`),
    /// observing the upper triangle and holding out the rest as truth.
    pub fn from_square(square: &[Vec<Vec<f64>>]) -> Result<Self> {
        let businesses = square.len();
        if businesses == 0 {
            return Err(Error::InvalidSpec("panel needs at least one business".into()));
        }
        let n = square[0].len();
        if n == 0 {
            return Err(Error::InvalidSpec("triangle depth must be positive".into()));
        }
        let mut panel = Self::empty(n, businesses);
        for (k, tri) in square.iter().enumerate() {
            if tri.len() != n || tri.iter().any(|row| row.len() != n) {
                return Err(Error::RaggedPanel(format!("business {} is not {n}x{n}", k + 1)));
            }
            for (i, row) in tri.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(Error::NegativeValue {
                            value: x,
                            location: format!("cell ({}, {}, {})", i + 1, j + 1, k + 1),
                        });
                    }
                    let idx = panel.idx(i, j, k);
                    panel.values[idx] = x;
                    panel.present[idx] = true;
                    panel.observed[idx] = i + j < n;
                }
            }
        }
        Ok(panel)
    }

    /// Builds a calibration-only panel from upper triangles (`[k][i]` has
    /// `n - i` entries).
    pub fn from_upper(triangles: &[Vec<Vec<f64>>]) -> Result<Self> {
        let businesses = triangles.len();
        if businesses == 0 {
            return Err(Error::InvalidSpec("panel needs at least one business".into()));
        }
        let n = triangles[0].len();
        let mut panel = Self::empty(n, businesses);
        for (k, tri) in triangles.iter().enumerate() {
            if tri.len() != n {
                return Err(Error::RaggedPanel(format!(
                    "business {} has {} origin years, expected {n}",
                    k + 1,
                    tri.len()
                )));
            }
            for (i, row) in tri.iter().enumerate() {
                if row.len() != n - i {
                    return Err(Error::RaggedPanel(format!(
                        "business {} origin {} has {} cells, expected {}",
                        k + 1,
                        i + 1,
                        row.len(),
                        n - i
                    )));
                }
                for (j, &x) in row.iter().enumerate() {
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(Error::NegativeValue {
                            value: x,
                            location: format!("cell ({}, {}, {})", i + 1, j + 1, k + 1),
                        });
                    }
                    let idx = panel.idx(i, j, k);
                    panel.values[idx] = x;
                    panel.present[idx] = true;
                    panel.observed[idx] = true;
                }
            }
        }
        Ok(panel)
    }

    fn empty(n: usize, businesses: usize) -> Self {
        let len = n * n * businesses;
        TrianglePanel {
            n,
            businesses,
            values: vec![0.0; len],
            present: vec![false; len],
            observed: vec![false; len],
            business_ids: (1..=businesses).map(|k| k.to_string()).collect(),
            origin_labels: (1..=n as i64).collect(),
            dev_labels: (1..=n as i64).collect(),
            transform: None,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + i) * self.n + j
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn businesses(&self) -> usize {
        self.businesses
    }

    /// Value stored at `(i, j, k)`; zero when the slot is empty.
    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.idx(i, j, k)]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.observed[self.idx(i, j, k)]
    }

    #[inline]
    pub fn is_present(&self, i: usize, j: usize, k: usize) -> bool {
        self.present[self.idx(i, j, k)]
    }

    /// Held-out truth at an unobserved cell.
    pub fn truth(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let idx = self.idx(i, j, k);
        (self.present[idx] && !self.observed[idx]).then(|| self.values[idx])
    }

    pub fn observed_count(&self, k: usize) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_observed(i, j, k))
            .count()
    }

    /// True when exactly the upper triangle is observed in every business.
    pub fn is_calibration(&self) -> bool {
        (0..self.businesses).all(|k| {
            (0..self.n).all(|i| (0..self.n).all(|j| self.is_observed(i, j, k) == (i + j < self.n)))
        })
    }

    /// True when every lower-triangle cell carries held-out truth.
    pub fn has_full_truth(&self) -> bool {
        (0..self.businesses).all(|k| {
            (0..self.n).all(|i| (0..self.n).all(|j| i + j < self.n || self.truth(i, j, k).is_some()))
        })
    }

    /// One business as rows of optional observed values (`None` outside the
    /// calibration mask).
    pub fn observed_triangle(&self, k: usize) -> Vec<Vec<Option<f64>>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.is_observed(i, j, k).then(|| self.value(i, j, k)))
                    .collect()
            })
            .collect()
    }

    /// Hides held-out truth so the panel carries only calibration data.
    pub fn without_truth(&self) -> Self {
        let mut out = self.clone();
        for idx in 0..out.values.len() {
            if !out.observed[idx] {
                out.present[idx] = false;
                out.values[idx] = 0.0;
            }
        }
        out
    }

    /// Keeps only the listed businesses, in the given order.
    pub fn select_businesses(&self, ks: &[usize]) -> Result<Self> {
        let mut out = Self::empty(self.n, ks.len());
        out.origin_labels = self.origin_labels.clone();
        out.dev_labels = self.dev_labels.clone();
        out.transform = self.transform;
        out.business_ids.clear();
        for (new_k, &k) in ks.iter().enumerate() {
            if k >= self.businesses {
                return Err(Error::DimensionMismatch(format!("business index {k} out of range")));
            }
            out.business_ids.push(self.business_ids[k].clone());
            for i in 0..self.n {
                for j in 0..self.n {
                    let src = self.idx(i, j, k);
                    let dst = out.idx(i, j, new_k);
                    out.values[dst] = self.values[src];
                    out.present[dst] = self.present[src];
                    out.observed[dst] = self.observed[src];
                }
            }
        }
        Ok(out)
    }

    /// Writes the present cells in long format with the original labels.
    pub fn write_csv(&self, path: &Path, include_unobserved: bool) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(w, "business_id,origin_year,dev_year,value")?;
            for k in 0..self.businesses {
                for i in 0..self.n {
                    for j in 0..self.n {
                        let idx = self.idx(i, j, k);
                        if self.present[idx] && (include_unobserved || self.observed[idx]) {
                            writeln!(
                                w,
                                "{},{},{},{}",
                                self.business_ids[k],
                                self.origin_labels[i],
                                self.dev_labels[j],
                                self.values[idx]
                            )?;
                        }
                    }
                }
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }
}

/// Reads a long-format panel. Lower-triangle rows, when present, are kept as
/// held-out truth.
pub fn load_panel(path: &Path, schema: &ColumnSchema) -> Result<TrianglePanel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

pub fn read_panel<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<TrianglePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column '{name}'"),
            })
    };
    let (cb, co, cd, cv) = (
        col(&schema.business)?,
        col(&schema.origin)?,
        col(&schema.dev)?,
        col(&schema.value)?,
    );

    struct Row {
        business: String,
        origin: i64,
        dev: i64,
        value: f64,
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let int = |c: usize, what: &str| -> Result<i64> {
            field(c).parse::<i64>().map_err(|_| Error::Parse {
                line,
                msg: format!("unparseable {what} '{}'", field(c)),
            })
        };
        let value: f64 = field(cv).parse().map_err(|_| Error::Parse {
            line,
            msg: format!("unparseable value '{}'", field(cv)),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite value '{}'", field(cv)),
            });
        }
        let row = Row {
            business: field(cb).to_string(),
            origin: int(co, "origin year")?,
            dev: int(cd, "development year")?,
            value,
        };
        if row.value < 0.0 {
            return Err(Error::NegativeValue {
                value: row.value,
                location: format!(
                    "line {line} (business {}, origin {}, dev {})",
                    row.business, row.origin, row.dev
                ),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidSpec("panel file has no data rows".into()));
    }

    let mut business_ids: Vec<String> = Vec::new();
    for r in &rows {
        if !business_ids.contains(&r.business) {
            business_ids.push(r.business.clone());
        }
    }
    let labels = |get: &dyn Fn(&Row) -> i64, of: Option<&str>| -> Vec<i64> {
        let mut v: Vec<i64> = rows
            .iter()
            .filter(|r| of.is_none_or(|b| r.business == b))
            .map(get)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let origins = labels(&|r| r.origin, None);
    let devs = labels(&|r| r.dev, None);
    for b in &business_ids {
        let (bo, bd) = (labels(&|r| r.origin, Some(b)), labels(&|r| r.dev, Some(b)));
        if bo.len() != origins.len() || bd.len() != devs.len() {
            return Err(Error::RaggedPanel(format!(
                "business {b} spans {} origin and {} development years, the panel spans {} and {}",
                bo.len(),
                bd.len(),
                origins.len(),
                devs.len()
            )));
        }
    }
    let contiguous = |v: &[i64]| v.windows(2).all(|w| w[1] == w[0] + 1);
    if !contiguous(&origins) || !contiguous(&devs) {
        return Err(Error::InvalidSpec(
            "origin and development years must be contiguous".into(),
        ));
    }
    if origins.len() != devs.len() {
        return Err(Error::RaggedPanel(format!(
            "{} origin years but {} development years",
            origins.len(),
            devs.len()
        )));
    }

    let n = origins.len();
    let mut panel = TrianglePanel::empty(n, business_ids.len());
    let kpos: HashMap<&str, usize> = business_ids
        .iter()
        .enumerate()
        .map(|(k, b)| (b.as_str(), k))
        .collect();
    for r in &rows {
        let i = (r.origin - origins[0]) as usize;
        let j = (r.dev - devs[0]) as usize;
        let k = kpos[r.business.as_str()];
        let idx = panel.idx(i, j, k);
        if panel.present[idx] {
            return Err(Error::DuplicateCell {
                business: r.business.clone(),
                origin: r.origin,
                dev: r.dev,
            });
        }
        panel.present[idx] = true;
        panel.observed[idx] = i + j < n;
        panel.values[idx] = r.value;
    }
    for k in 0..panel.businesses {
        for i in 0..n {
            for j in 0..n - i {
                if !panel.present[panel.idx(i, j, k)] {
                    return Err(Error::MissingCell {
                        business: business_ids[k].clone(),
                        origin: origins[i],
                        dev: devs[j],
                    });
                }
            }
        }
    }
    panel.business_ids = business_ids;
    panel.origin_labels = origins;
    panel.dev_labels = devs;
    Ok(panel)
}

/// Replaces every present value `x` by `(x / divisor)^power`.
pub fn apply_transform(panel: &TrianglePanel, t: &TransformSpec) -> Result<TrianglePanel> {
    if !t.enabled {
        return Ok(panel.clone());
    }
    t.validate()?;
    if panel.transform.is_some() {
        return Err(Error::InvalidSpec("panel is already transformed".into()));
    }
    let mut out = panel.clone();
    for idx in 0..out.values.len() {
        if out.present[idx] {
            out.values[idx] = t.forward(out.values[idx])?;
        }
    }
    out.transform = Some(*t);
    Ok(out)
}

/// Lifts observed zeros to `floor`; returns the number of cells changed.
pub fn floor_zeros(panel: &mut TrianglePanel, floor: f64) -> usize {
    let mut changed = 0;
    for idx in 0..panel.values.len() {
        if panel.observed[idx] && panel.values[idx] <= 0.0 {
            panel.values[idx] = floor;
            changed += 1;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<TrianglePanel> {
        read_panel(text.as_bytes(), &ColumnSchema::default())
    }

    #[test]
    fn minimal_triangle() {
        let p = read("business_id,origin_year,dev_year,value\nA,1,1,5\nA,1,2,3\nA,2,1,4\n").unwrap();
        assert_eq!((p.n(), p.businesses()), (2, 1));
        assert!(p.is_observed(0, 0, 0) && p.is_observed(0, 1, 0) && p.is_observed(1, 0, 0));
        assert!(!p.is_present(1, 1, 0));
        assert!(p.is_calibration());
        assert_eq!(p.value(1, 0, 0), 4.0);
    }

    #[test]
    fn duplicate_cell() {
        let e = read("business_id,origin_year,dev_year,value\nA,1,1,5\nA,1,1,6\nA,1,2,3\nA,2,1,4\n")
            .unwrap_err();
        assert!(matches!(e, Error::DuplicateCell { .. }));
        assert!(e.to_string().contains("duplicate cell"));
    }

    #[test]
    fn full_square_keeps_held_out_cell() {
        let p = read("business_id,origin_year,dev_year,value\nA,1,1,5\nA,1,2,3\nA,2,1,4\nA,2,2,7\n")
            .unwrap();
        assert!(p.is_present(1, 1, 0));
        assert!(!p.is_observed(1, 1, 0));
        assert_eq!(p.truth(1, 1, 0), Some(7.0));
        assert!(p.has_full_truth());
    }

    #[test]
    fn malformed_inputs() {
        let neg = read("business_id,origin_year,dev_year,value\nA,1,1,-5\nA,1,2,3\nA,2,1,4\n");
        assert!(matches!(neg, Err(Error::NegativeValue { .. })));
        let bad = read("business_id,origin_year,dev_year,value\nA,1,1,x\n");
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
        let ragged = read(
            "business_id,origin_year,dev_year,value\nA,1,1,5\nA,1,2,3\nA,2,1,4\nB,1,1,1\n",
        );
        assert!(matches!(ragged, Err(Error::RaggedPanel(_))));
        let missing = read("business_id,origin_year,dev_year,value\nA,1,1,5\nA,2,1,4\nA,2,2,1\n");
        assert!(matches!(missing, Err(Error::MissingCell { .. })));
    }

    #[test]
    fn naic_schema_and_relabelling() {
        let text = "GRCODE,AccidentYear,DevelopmentLag,IncrLoss\n\
                    1767,1996,1,10\n1767,1996,2,4\n1767,1997,1,12\n";
        let p = read_panel(text.as_bytes(), &ColumnSchema::naic()).unwrap();
        assert_eq!(p.origin_labels, vec![1996, 1997]);
        assert_eq!(p.business_ids, vec!["1767".to_string()]);
        assert_eq!(p.value(1, 0, 0), 12.0);
    }

    #[test]
    fn transform_examples() {
        let t = TransformSpec::sqrt_thousands();
        assert_eq!(t.forward(4000.0).unwrap(), 2.0);
        assert_eq!(t.forward(0.0).unwrap(), 0.0);
        assert_eq!(t.invert(2.0), 4000.0);
        assert_eq!(t.invert(0.0), 0.0);
        let id = TransformSpec {
            divisor: 1.0,
            power: 1.0,
            enabled: true,
        };
        assert_eq!(id.invert(3.25), 3.25);
        assert!(t.forward(-1.0).is_err());
    }

    #[test]
    fn disabled_transform_is_identity() {
        let p = TrianglePanel::from_upper(&[vec![vec![1.0, 2.0], vec![3.0]]]).unwrap();
        let q = apply_transform(&p, &TransformSpec::default()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn observed_count_is_triangular() {
        let sq = vec![vec![vec![1.0; 5]; 5]; 3];
        let p = TrianglePanel::from_square(&sq).unwrap();
        for k in 0..3 {
            assert_eq!(p.observed_count(k), 15);
        }
        assert!(p.is_calibration());
    }

    #[test]
    fn zero_floor() {
        let mut p = TrianglePanel::from_upper(&[vec![vec![0.0, 2.0], vec![3.0]]]).unwrap();
        assert_eq!(floor_zeros(&mut p, 1e-6), 1);
        assert_eq!(p.value(0, 0, 0), 1e-6);
    }

    #[test]
    fn csv_write_then_read_is_lossless() {
        let sq = vec![vec![vec![1.5, 2.25], vec![0.1 + 0.2, 7.0]]];
        let p = TrianglePanel::from_square(&sq).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write_csv(&path, true).unwrap();
        let q = load_panel(&path, &ColumnSchema::default()).unwrap();
        assert_eq!(p, q);
    }
}
