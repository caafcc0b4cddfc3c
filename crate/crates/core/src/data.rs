//! Tabular datasets over integer-coded attributes, with a sensitive /
//! non-sensitive partition of the attribute set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError { row: usize, column: String, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    #[default]
    IntegerRanged,
    CategoricalCoded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub sensitive: bool,
    #[serde(default)]
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, min: f64, max: f64, sensitive: bool) -> Self {
        Self { name: name.into(), min, max, sensitive, kind: AttributeKind::IntegerRanged }
    }

    /// Integer codes in the domain, ascending.
    pub fn codes(&self) -> impl Iterator<Item = f64> {
        let lo = self.min.ceil() as i64;
        let hi = self.max.floor() as i64;
        (lo..=hi).map(|v| v as f64)
    }

    pub fn domain_size(&self) -> usize {
        (self.max.floor() - self.min.ceil()) as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    pub classes: usize,
}

/// Attribute set with its sensitive partition. Indices into `attributes`
/// are the positions in every instance vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDocument", into = "SchemaDocument")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    label: Option<LabelSpec>,
    sensitive: Vec<usize>,
    non_sensitive: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDocument {
    attributes: Vec<Attribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<LabelSpec>,
}

impl TryFrom<SchemaDocument> for AttributeSchema {
    type Error = DataError;

    fn try_from(doc: SchemaDocument) -> Result<Self, DataError> {
        AttributeSchema::new(doc.attributes, doc.label)
    }
}

impl From<AttributeSchema> for SchemaDocument {
    fn from(s: AttributeSchema) -> Self {
        SchemaDocument { attributes: s.attributes, label: s.label }
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>, label: Option<LabelSpec>) -> Result<Self, DataError> {
        if attributes.is_empty() {
            return Err(DataError::InvalidSchema("no attributes".into()));
        }
        let mut names = HashSet::new();
        for a in &attributes {
            if !names.insert(a.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate attribute {}", a.name)));
            }
            if !(a.min.is_finite() && a.max.is_finite()) || a.min > a.max {
                return Err(DataError::InvalidSchema(format!("attribute {} has min > max", a.name)));
            }
            if a.sensitive && a.domain_size() < 2 {
                return Err(DataError::InvalidSchema(format!(
                    "sensitive attribute {} needs at least two codes",
                    a.name
                )));
            }
        }
        if let Some(l) = &label {
            if names.contains(l.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("label {} is also an attribute", l.name)));
            }
            if l.classes < 2 {
                return Err(DataError::InvalidSchema("label needs at least two classes".into()));
            }
        }
        let sensitive: Vec<usize> = (0..attributes.len()).filter(|&i| attributes[i].sensitive).collect();
        if sensitive.is_empty() {
            return Err(DataError::InvalidSchema("at least one sensitive attribute is required".into()));
        }
        let non_sensitive = (0..attributes.len()).filter(|&i| !attributes[i].sensitive).collect();
        Ok(Self { attributes, label, sensitive, non_sensitive })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn label(&self) -> Option<&LabelSpec> {
        self.label.as_ref()
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn non_sensitive(&self) -> &[usize] {
        &self.non_sensitive
    }

    pub fn is_sensitive(&self, index: usize) -> bool {
        self.attributes[index].sensitive
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.attributes.iter().map(|a| (a.min, a.max)).collect()
    }

    /// Same attributes with a different sensitive set.
    pub fn with_sensitive(&self, names: &[&str]) -> Result<Self, DataError> {
        let mut attrs = self.attributes.clone();
        for a in attrs.iter_mut() {
            a.sensitive = names.contains(&a.name.as_str());
        }
        for n in names {
            if self.index_of(n).is_none() {
                return Err(DataError::SchemaMismatch(format!("unknown attribute {n}")));
            }
        }
        Self::new(attrs, self.label.clone())
    }

    /// Number of flip variants of any instance.
    pub fn variant_count(&self) -> usize {
        self.sensitive.iter().map(|&i| self.attributes[i].domain_size()).product::<usize>() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: Option<usize>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, label: None }
    }

    pub fn labeled(values: Vec<f64>, label: usize) -> Self {
        Self { values, label: Some(label) }
    }

    /// Hashable identity of the attribute vector.
    pub fn key(&self) -> Vec<u64> {
        value_key(&self.values)
    }
}

pub(crate) fn value_key(values: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must collide.
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Two instances that differ only in sensitive attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePair {
    pub a: Instance,
    pub b: Instance,
}

impl InstancePair {
    /// Builds a pair after checking the sensitive-only difference constraint.
    pub fn new(a: Instance, b: Instance, schema: &AttributeSchema) -> Result<Self, DataError> {
        let pair = Self { a, b };
        pair.validate(schema)?;
        Ok(pair)
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), DataError> {
        let (a, b) = (&self.a.values, &self.b.values);
        if a.len() != schema.len() || b.len() != schema.len() {
            return Err(DataError::InvalidPair("length differs from schema".into()));
        }
        if let Some(&i) = schema.non_sensitive().iter().find(|&&i| a[i] != b[i]) {
            return Err(DataError::InvalidPair(format!(
                "non-sensitive attribute {} differs",
                schema.attributes()[i].name
            )));
        }
        if schema.sensitive().iter().all(|&i| a[i] == b[i]) {
            return Err(DataError::InvalidPair("sensitive attributes are identical".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub schema: AttributeSchema,
    pub instances: Vec<Instance>,
}

impl TabularDataset {
    pub fn new(schema: AttributeSchema, instances: Vec<Instance>) -> Self {
        Self { schema, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.instances.iter().map(|i| i.values.clone()).collect()
    }

    /// Labels of every instance; fails if any row is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>, DataError> {
        self.instances
            .iter()
            .enumerate()
            .map(|(row, i)| {
                i.label.ok_or_else(|| DataError::ParseError {
                    row: row + 1,
                    column: "label".into(),
                    message: "missing label".into(),
                })
            })
            .collect()
    }

    /// Seeded 70/10/20 train/validation/test split.
    pub fn split(&self, seed: u64) -> DatasetSplit {
        self.split_fractions(0.7, 0.1, seed)
    }

    pub fn split_fractions(&self, train: f64, validation: f64, seed: u64) -> DatasetSplit {
        let mut order: Vec<usize> = (0..self.instances.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = order.len();
        let n_train = (n as f64 * train).round() as usize;
        let n_val = ((n as f64 * validation).round() as usize).min(n - n_train);
        let take = |idx: &[usize]| {
            TabularDataset::new(self.schema.clone(), idx.iter().map(|&i| self.instances[i].clone()).collect())
        };
        DatasetSplit {
            train: take(&order[..n_train]),
            validation: take(&order[n_train..n_train + n_val]),
            test: take(&order[n_train + n_val..]),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.schema.attributes().iter().map(|a| a.name.clone()).collect();
        let label = self.schema.label().map(|l| l.name.clone());
        if let Some(l) = &label {
            header.push(l.clone());
        }
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut row: Vec<String> = inst.values.iter().map(|v| format_value(*v)).collect();
            if label.is_some() {
                row.push(inst.label.map(|l| l.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integral values print without a fractional part.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: TabularDataset,
    pub validation: TabularDataset,
    pub test: TabularDataset,
}

/// Reads a headered CSV. Columns are matched by name; the label column is
/// optional. Every value is clipped into its attribute's domain.
pub fn load_csv(path: &Path, schema: &AttributeSchema) -> Result<TabularDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &AttributeSchema) -> Result<TabularDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let label_name = schema.label().map(|l| l.name.as_str());
    let mut columns = vec![usize::MAX; schema.len()];
    let mut label_col = None;
    for (c, name) in header.iter().enumerate() {
        if let Some(i) = schema.index_of(name) {
            if columns[i] != usize::MAX {
                return Err(DataError::SchemaMismatch(format!("column {name} appears twice")));
            }
            columns[i] = c;
        } else if Some(name) == label_name {
            label_col = Some(c);
        } else {
            return Err(DataError::SchemaMismatch(format!("unexpected column {name}")));
        }
    }
    if let Some(i) = columns.iter().position(|&c| c == usize::MAX) {
        return Err(DataError::SchemaMismatch(format!(
            "missing column {}",
            schema.attributes()[i].name
        )));
    }

    let mut instances = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let mut values = Vec::with_capacity(schema.len());
        for (i, &c) in columns.iter().enumerate() {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DataError::ParseError {
                row,
                column: schema.attributes()[i].name.clone(),
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::ParseError {
                    row,
                    column: schema.attributes()[i].name.clone(),
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        let label = match label_col {
            Some(c) => {
                let cell = record.get(c).unwrap_or("");
                let column = label_name.unwrap_or("label").to_string();
                let y: usize = cell.parse().map_err(|_| DataError::ParseError {
                    row,
                    column: column.clone(),
                    message: format!("not a class index: {cell:?}"),
                })?;
                let classes = schema.label().map(|l| l.classes).unwrap_or(usize::MAX);
                if y >= classes {
                    return Err(DataError::ParseError { row, column, message: format!("class {y} out of range") });
                }
                Some(y)
            }
            None => None,
        };
        instances.push(Instance { values: clip_values(&values, schema), label });
    }
    log::info!("loaded {} rows", instances.len());
    Ok(TabularDataset::new(schema.clone(), instances))
}

/// Clamps each value into its domain and rounds to the nearest integer code
/// (ties to even).
pub fn clip(x: &Instance, schema: &AttributeSchema) -> Instance {
    Instance { values: clip_values(&x.values, schema), label: x.label }
}

pub fn clip_values(values: &[f64], schema: &AttributeSchema) -> Vec<f64> {
    values
        .iter()
        .zip(schema.attributes())
        .map(|(&v, a)| v.round_ties_even().clamp(a.min.ceil(), a.max.floor()))
        .collect()
}

pub fn clip_in_place(values: &mut [f64], schema: &AttributeSchema) {
    for (v, a) in values.iter_mut().zip(schema.attributes()) {
        *v = v.round_ties_even().clamp(a.min.ceil(), a.max.floor());
    }
}

/// Every instance reachable by changing only sensitive attributes to other
/// in-domain codes, in lexicographic order over the sensitive attributes.
/// The original combination is excluded.
pub fn flip_variants(x: &Instance, schema: &AttributeSchema) -> Vec<Instance> {
    let mut out = Vec::with_capacity(schema.variant_count());
    for_each_variant(&x.values, schema, |v| out.push(Instance::new(v.to_vec())));
    out
}

/// Calls `f` on each flip variant in the same order as [`flip_variants`],
/// reusing one buffer.
pub fn for_each_variant(values: &[f64], schema: &AttributeSchema, mut f: impl FnMut(&[f64])) {
    let sens = schema.sensitive();
    let attrs = schema.attributes();
    let lows: Vec<f64> = sens.iter().map(|&i| attrs[i].min.ceil()).collect();
    let highs: Vec<f64> = sens.iter().map(|&i| attrs[i].max.floor()).collect();
    let mut buf = values.to_vec();
    let mut digits = lows.clone();
    loop {
        for (d, &i) in digits.iter().zip(sens) {
            buf[i] = *d;
        }
        if sens.iter().any(|&i| buf[i] != values[i]) {
            f(&buf);
        }
        // Odometer increment, last sensitive attribute fastest.
        let mut k = digits.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if digits[k] < highs[k] {
                digits[k] += 1.0;
                break;
            }
            digits[k] = lows[k];
        }
    }
}

/// First flip variant (the lexicographically smallest differing code).
pub fn first_variant(values: &[f64], schema: &AttributeSchema) -> Vec<f64> {
    let mut first = None;
    let sens = schema.sensitive();
    let attrs = schema.attributes();
    // Fast path: one sensitive attribute.
    if sens.len() == 1 {
        let i = sens[0];
        let lo = attrs[i].min.ceil();
        let mut v = values.to_vec();
        v[i] = if values[i] == lo { lo + 1.0 } else { lo };
        return v;
    }
    for_each_variant(values, schema, |v| {
        if first.is_none() {
            first = Some(v.to_vec());
        }
    });
    first.expect("sensitive domains have at least two codes")
}

/// Lloyd's k-means with k-means++ initialisation. Returns the cluster index
/// of each point.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>, DataError> {
    if points.is_empty() || k == 0 || points.len() < k {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = dist2(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        dist2(&points[i], &centroids[assign[i]])
                            .total_cmp(&dist2(&points[j], &centroids[assign[j]]))
                    })
                    .expect("non-empty");
                centroids[c] = points[far].clone();
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(assign)
}

/// Clusters `points` into `n_clusters` groups and draws up to `num_seeds`
/// indices round-robin across clusters, each cluster visited in a seeded
/// random order. Exhausted clusters are skipped.
pub fn kmeans_seeds(
    points: &[Vec<f64>],
    n_clusters: usize,
    num_seeds: usize,
    seed: u64,
) -> Result<Vec<usize>, DataError> {
    let assign = kmeans(points, n_clusters, seed, 100)?;
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &c) in assign.iter().enumerate() {
        clusters[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    for c in clusters.iter_mut() {
        c.shuffle(&mut rng);
    }
    let mut out = Vec::with_capacity(num_seeds.min(points.len()));
    let mut cursor = 0;
    while out.len() < num_seeds {
        let mut any = false;
        for c in &clusters {
            if out.len() == num_seeds {
                break;
            }
            if let Some(&i) = c.get(cursor) {
                out.push(i);
                any = true;
            }
        }
        if !any {
            break;
        }
        cursor += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_two_sensitive() -> AttributeSchema {
        AttributeSchema::new(
            vec![
                Attribute::new("a", 0.0, 1.0, true),
                Attribute::new("b", 0.0, 1.0, true),
                Attribute::new("c", 0.0, 9.0, false),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn clip_rounds_and_clamps() {
        let s = AttributeSchema::new(
            vec![Attribute::new("age", 17.0, 90.0, false), Attribute::new("x", 0.0, 9.0, true)],
            None,
        )
        .unwrap();
        assert_eq!(clip_values(&[150.0, 3.4], &s), vec![90.0, 3.0]);
        assert_eq!(clip_values(&[5.0, 2.5], &s), vec![17.0, 2.0]);
        assert_eq!(clip_values(&[40.0, 3.5], &s), vec![40.0, 4.0]);
        assert_eq!(clip_values(&[40.0, 5.0], &s), vec![40.0, 5.0]);
    }

    #[test]
    fn variants_enumerate_all_differing_combinations() {
        let s = schema_two_sensitive();
        let v = flip_variants(&Instance::new(vec![0.0, 0.0, 4.0]), &s);
        let got: Vec<_> = v.iter().map(|i| i.values.clone()).collect();
        assert_eq!(got, vec![vec![0.0, 1.0, 4.0], vec![1.0, 0.0, 4.0], vec![1.0, 1.0, 4.0]]);
        assert_eq!(first_variant(&[0.0, 0.0, 4.0], &s), vec![0.0, 1.0, 4.0]);
        assert_eq!(s.variant_count(), 3);
    }

    #[test]
    fn binary_and_ranged_variants() {
        let s = AttributeSchema::new(
            vec![Attribute::new("g", 0.0, 1.0, true), Attribute::new("z", 0.0, 3.0, false)],
            None,
        )
        .unwrap();
        let v = flip_variants(&Instance::new(vec![0.0, 2.0]), &s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].values, vec![1.0, 2.0]);
        assert_eq!(first_variant(&[1.0, 2.0], &s), vec![0.0, 2.0]);

        let s = AttributeSchema::new(
            vec![Attribute::new("age", 1.0, 9.0, true), Attribute::new("z", 0.0, 3.0, false)],
            None,
        )
        .unwrap();
        let v = flip_variants(&Instance::new(vec![3.0, 2.0]), &s);
        assert_eq!(v.len(), 8);
        assert!(v.iter().all(|i| i.values[0] != 3.0 && i.values[1] == 2.0));
        assert_eq!(first_variant(&[1.0, 0.0], &s), vec![2.0, 0.0]);
    }

    #[test]
    fn schema_validation() {
        let no_sensitive = AttributeSchema::new(vec![Attribute::new("a", 0.0, 1.0, false)], None);
        assert!(matches!(no_sensitive, Err(DataError::InvalidSchema(_))));
        let inverted = AttributeSchema::new(vec![Attribute::new("a", 3.0, 1.0, true)], None);
        assert!(inverted.is_err());
        let single_code = AttributeSchema::new(vec![Attribute::new("a", 1.0, 1.0, true)], None);
        assert!(single_code.is_err());
        let json = r#"{"attributes":[{"name":"sex","min":0,"max":1,"sensitive":true},
            {"name":"age","min":1,"max":9}],"label":{"name":"income","classes":2}}"#;
        let s: AttributeSchema = serde_json::from_str(json).unwrap();
        assert_eq!(s.sensitive(), &[0]);
        assert_eq!(s.non_sensitive(), &[1]);
    }

    #[test]
    fn pair_validation() {
        let s = schema_two_sensitive();
        let ok = InstancePair::new(Instance::new(vec![0.0, 0.0, 4.0]), Instance::new(vec![1.0, 0.0, 4.0]), &s);
        assert!(ok.is_ok());
        let same = InstancePair::new(Instance::new(vec![0.0, 0.0, 4.0]), Instance::new(vec![0.0, 0.0, 4.0]), &s);
        assert!(same.is_err());
        let ns = InstancePair::new(Instance::new(vec![0.0, 0.0, 4.0]), Instance::new(vec![1.0, 0.0, 5.0]), &s);
        assert!(ns.is_err());
    }

    #[test]
    fn csv_loading_clips_and_reports_locations() {
        let s = AttributeSchema::new(
            vec![Attribute::new("age", 17.0, 90.0, false), Attribute::new("sex", 0.0, 1.0, true)],
            Some(LabelSpec { name: "y".into(), classes: 2 }),
        )
        .unwrap();
        let ds = read_csv("sex,age,y\n1,30,0\n0,10,1\n1,45,1\n".as_bytes(), &s).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.instances[0].values, vec![30.0, 1.0]);
        assert_eq!(ds.instances[1].values, vec![17.0, 0.0]);
        assert_eq!(ds.labels().unwrap(), vec![0, 1, 1]);

        let err = read_csv("sex,age,y\n1,30,0\n0,abc,1\n".as_bytes(), &s).unwrap_err();
        match err {
            DataError::ParseError { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(read_csv("sex,y\n1,0\n".as_bytes(), &s), Err(DataError::SchemaMismatch(_))));
        assert!(matches!(read_csv("sex,age,zz\n1,3,0\n".as_bytes(), &s), Err(DataError::SchemaMismatch(_))));
    }

    #[test]
    fn split_is_70_10_20_and_seeded() {
        let s = schema_two_sensitive();
        let ds = TabularDataset::new(s, (0..100).map(|i| Instance::new(vec![0.0, 0.0, (i % 10) as f64])).collect());
        let a = ds.split(7);
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (70, 10, 20));
        let b = ds.split(7);
        assert_eq!(a.test.instances, b.test.instances);
    }

    #[test]
    fn kmeans_single_cluster_is_seeded_order() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let a = kmeans_seeds(&pts, 1, 5, 3).unwrap();
        let b = kmeans_seeds(&pts, 1, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let uniq: HashSet<_> = a.iter().collect();
        assert_eq!(uniq.len(), 5);
        assert!(matches!(kmeans_seeds(&[], 1, 5, 3), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn kmeans_blobs_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for i in 0..60 {
            let (cx, cy) = if i % 3 == 0 { (10.0, 10.0) } else { (-10.0, -10.0) };
            pts.push(vec![cx + rng.gen_range(-1.0..1.0), cy + rng.gen_range(-1.0..1.0)]);
        }
        let seeds = kmeans_seeds(&pts, 2, 30, 5).unwrap();
        assert_eq!(seeds.len(), 30);
        let blob = |i: usize| pts[i][0] > 0.0;
        // 20 points in the small blob: first 40 draws alternate; we take 30.
        for w in seeds.windows(2) {
            assert_ne!(blob(w[0]), blob(w[1]));
        }
    }
}
