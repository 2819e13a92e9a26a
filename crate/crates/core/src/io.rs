//! Dataset loading, preprocessing and result serialization.
//!
//! CSV input is comma separated with a header row. Column kinds come from a
//! JSON schema when given, otherwise a column is continuous when every value
//! parses as a number and categorical when not. Label columns are never
//! inferred.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::engine::{HierarchyNode, HierarchyTree};
use crate::error::{Error, Result};
use crate::{DataMatrix, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Label,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Explicit column kinds. Columns of the file not listed here are inferred.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
}

impl DatasetSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Marks `name` as the label column, replacing any earlier entry for it.
    pub fn with_label(mut self, name: &str) -> Self {
        self.columns.retain(|c| c.name != name);
        self.columns.push(ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Label,
        });
        self
    }

    fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: DataMatrix,
    pub labels: Option<Partition>,
    /// One name per output column; one-hot columns read `column=value`.
    pub feature_names: Vec<String>,
    /// Which output columns came from continuous inputs.
    pub continuous: Vec<bool>,
}

impl LoadedDataset {
    /// Standardizes the continuous columns in place; one-hot columns stay 0/1.
    pub fn standardize(&mut self) {
        self.data = standardize(self.data.view(), &self.continuous);
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

fn load_err(row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Load {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Parses CSV text. Reported row numbers are file lines (the header is
/// line 1).
pub fn read_csv(reader: impl Read, schema: &DatasetSchema) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| load_err(1, "*", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    for spec in &schema.columns {
        if !header.contains(&spec.name) {
            return Err(load_err(
                1,
                spec.name.clone(),
                "schema names a column missing from the file",
            ));
        }
    }

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => load_err(
                line,
                "*",
                format!("expected {expected_len} fields, found {len}"),
            ),
            _ => load_err(line, "*", e.to_string()),
        })?;
        records.push(rec.iter().map(|v| v.trim().to_string()).collect());
    }
    if records.is_empty() {
        return Err(load_err(2, "*", "file holds no data rows"));
    }

    let kinds: Vec<ColumnKind> = header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            schema.kind_of(name).unwrap_or_else(|| {
                if records.iter().all(|r| r[j].parse::<f64>().is_ok()) {
                    ColumnKind::Continuous
                } else {
                    ColumnKind::Categorical
                }
            })
        })
        .collect();

    let label_cols: Vec<usize> = (0..header.len())
        .filter(|&j| kinds[j] == ColumnKind::Label)
        .collect();
    if label_cols.len() > 1 {
        return Err(load_err(
            1,
            header[label_cols[1]].clone(),
            "more than one label column",
        ));
    }

    // output layout: one column per continuous input, one per category
    enum Out {
        Value(usize),
        OneHot(usize, HashMap<String, usize>, Vec<String>),
    }
    let mut outputs = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            ColumnKind::Continuous => outputs.push(Out::Value(j)),
            ColumnKind::Categorical => {
                let mut index = HashMap::new();
                let mut values = Vec::new();
                for r in &records {
                    if !index.contains_key(&r[j]) {
                        index.insert(r[j].clone(), values.len());
                        values.push(r[j].clone());
                    }
                }
                outputs.push(Out::OneHot(j, index, values));
            }
            ColumnKind::Label | ColumnKind::Ignore => {}
        }
    }

    let mut feature_names = Vec::new();
    let mut continuous = Vec::new();
    for out in &outputs {
        match out {
            Out::Value(j) => {
                feature_names.push(header[*j].clone());
                continuous.push(true);
            }
            Out::OneHot(j, _, values) => {
                for v in values {
                    feature_names.push(format!("{}={}", header[*j], v));
                    continuous.push(false);
                }
            }
        }
    }
    if feature_names.is_empty() {
        return Err(load_err(1, "*", "no feature columns"));
    }

    let mut data = Array2::zeros((records.len(), feature_names.len()));
    for (i, r) in records.iter().enumerate() {
        let mut col = 0;
        for out in &outputs {
            match out {
                Out::Value(j) => {
                    let v: f64 = r[*j].parse().map_err(|_| {
                        load_err(
                            i + 2,
                            header[*j].clone(),
                            format!("cannot parse {:?} as a number", r[*j]),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(load_err(i + 2, header[*j].clone(), "non-finite value"));
                    }
                    data[[i, col]] = v;
                    col += 1;
                }
                Out::OneHot(j, index, values) => {
                    data[[i, col + index[&r[*j]]]] = 1.0;
                    col += values.len();
                }
            }
        }
    }

    let labels = label_cols.first().map(|&j| {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        records
            .iter()
            .map(|r| {
                let next = ids.len();
                *ids.entry(r[j].as_str()).or_insert(next)
            })
            .collect()
    });

    Ok(LoadedDataset {
        data,
        labels,
        feature_names,
        continuous,
    })
}

/// Centers and scales the flagged columns to mean 0 and population standard
/// deviation 1. Constant columns become all zeros.
pub fn standardize(x: ArrayView2<'_, f64>, columns: &[bool]) -> DataMatrix {
    let mut out = x.to_owned();
    let n = x.nrows() as f64;
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        if !columns.get(j).copied().unwrap_or(false) {
            continue;
        }
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Writes `sample_id,label` rows.
pub fn write_labels_csv(mut w: impl Write, labels: &[usize]) -> Result<()> {
    let mut buf = String::with_capacity(labels.len() * 8 + 16);
    buf.push_str("sample_id,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(buf, "{i},{l}").expect("writing to a String");
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

/// Writes a data matrix (and optional labels) as CSV with a header.
pub fn write_dataset_csv(
    mut w: impl Write,
    data: ArrayView2<'_, f64>,
    labels: Option<&[usize]>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    let mut header: Vec<String> = (0..data.ncols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".to_string());
    }
    out.write_record(&header)?;
    for (i, row) in data.outer_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyFormat {
    Dot,
    Json,
}

#[derive(Debug, Serialize, Deserialize)]
struct NestedNode {
    id: usize,
    step: usize,
    medoid: usize,
    size: usize,
    children: Vec<NestedNode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NestedTree {
    n_samples: usize,
    roots: Vec<NestedNode>,
}

fn nest(tree: &HierarchyTree, id: usize) -> NestedNode {
    let node = tree.node(id);
    NestedNode {
        id,
        step: node.step,
        medoid: node.medoid,
        size: node.size,
        children: node.children.iter().map(|&c| nest(tree, c)).collect(),
    }
}

pub fn export_hierarchy(tree: &HierarchyTree, format: HierarchyFormat) -> Vec<u8> {
    match format {
        HierarchyFormat::Json => {
            let nested = NestedTree {
                n_samples: tree.n_leaves(),
                roots: tree.roots().iter().map(|&r| nest(tree, r)).collect(),
            };
            serde_json::to_vec_pretty(&nested).expect("hierarchy serializes")
        }
        HierarchyFormat::Dot => {
            let mut s = String::from("digraph cohirf {\n  node [shape=box];\n");
            for (id, node) in tree.nodes().iter().enumerate() {
                writeln!(
                    s,
                    "  n{id} [label=\"step {}\\nsize {}\\nmedoid {}\"];",
                    node.step, node.size, node.medoid
                )
                .unwrap();
            }
            for (id, node) in tree.nodes().iter().enumerate() {
                for c in &node.children {
                    writeln!(s, "  n{c} -> n{id};").unwrap();
                }
            }
            s.push_str("}\n");
            s.into_bytes()
        }
    }
}

/// Reads back a JSON hierarchy written by [`export_hierarchy`].
pub fn import_hierarchy_json(bytes: &[u8]) -> Result<HierarchyTree> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    de.disable_recursion_limit();
    let nested = NestedTree::deserialize(&mut de)?;
    de.end()?;

    let mut slots: Vec<Option<HierarchyNode>> = Vec::new();
    let mut stack: Vec<NestedNode> = Vec::new();
    let roots: Vec<usize> = nested.roots.iter().map(|r| r.id).collect();
    stack.extend(nested.roots);
    while let Some(node) = stack.pop() {
        if node.id >= slots.len() {
            slots.resize_with(node.id + 1, || None);
        }
        if slots[node.id].is_some() {
            return Err(Error::Internal(format!(
                "node id {} appears twice",
                node.id
            )));
        }
        slots[node.id] = Some(HierarchyNode {
            step: node.step,
            medoid: node.medoid,
            children: node.children.iter().map(|c| c.id).collect(),
            size: node.size,
        });
        stack.extend(node.children);
    }
    let nodes = slots
        .into_iter()
        .enumerate()
        .map(|(id, n)| n.ok_or_else(|| Error::Internal(format!("node id {id} is missing"))))
        .collect::<Result<Vec<_>>>()?;
    HierarchyTree::from_parts(nodes, nested.n_samples, roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn schema(cols: &[(&str, ColumnKind)]) -> DatasetSchema {
        DatasetSchema {
            columns: cols
                .iter()
                .map(|(n, k)| ColumnSpec {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        }
    }

    #[test]
    fn single_continuous_column() {
        let ds = read_csv("v\n1.5\n-2\n3e1\n".as_bytes(), &DatasetSchema::default()).unwrap();
        assert_eq!(ds.data, array![[1.5], [-2.0], [30.0]]);
        assert_eq!(ds.labels, None);
        assert_eq!(ds.continuous, vec![true]);
    }

    #[test]
    fn categorical_column_is_one_hot_encoded() {
        let ds = read_csv("c\na\nb\na\n".as_bytes(), &DatasetSchema::default()).unwrap();
        assert_eq!(ds.data, array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(ds.feature_names, vec!["c=a", "c=b"]);
        assert_eq!(ds.continuous, vec![false, false]);
    }

    #[test]
    fn label_column_maps_by_first_appearance() {
        let s = schema(&[("y", ColumnKind::Label)]);
        let ds = read_csv("x,y\n1,x\n2,y\n3,x\n".as_bytes(), &s).unwrap();
        assert_eq!(ds.labels, Some(vec![0, 1, 0]));
        assert_eq!(ds.data.ncols(), 1);
    }

    #[test]
    fn schema_overrides_inference() {
        let s = schema(&[
            ("code", ColumnKind::Categorical),
            ("skip", ColumnKind::Ignore),
        ]);
        let ds = read_csv("code,skip,v\n1,9,0.5\n2,9,0.7\n1,9,0.1\n".as_bytes(), &s).unwrap();
        assert_eq!(ds.feature_names, vec!["code=1", "code=2", "v"]);
        assert_eq!(ds.data.row(1).to_vec(), vec![0.0, 1.0, 0.7]);
    }

    #[test]
    fn load_errors_carry_their_location() {
        let ragged = read_csv("a,b\n1,2\n3\n".as_bytes(), &DatasetSchema::default());
        assert!(
            matches!(ragged, Err(Error::Load { row: 3, .. })),
            "{ragged:?}"
        );

        let s = schema(&[("a", ColumnKind::Continuous)]);
        let bad = read_csv("a\n1\nfoo\n".as_bytes(), &s);
        assert!(
            matches!(bad, Err(Error::Load { row: 3, ref column, .. }) if column == "a"),
            "{bad:?}"
        );

        let unknown = read_csv("a\n1\n".as_bytes(), &schema(&[("zzz", ColumnKind::Label)]));
        assert!(matches!(unknown, Err(Error::Load { ref column, .. }) if column == "zzz"));

        let two_labels = schema(&[("a", ColumnKind::Label), ("b", ColumnKind::Label)]);
        assert!(read_csv("a,b,c\n1,2,3\n".as_bytes(), &two_labels).is_err());

        let only_label = schema(&[("a", ColumnKind::Label)]);
        assert!(read_csv("a\n1\n".as_bytes(), &only_label).is_err());
    }

    #[test]
    fn standardize_known_column() {
        let x = array![[1.0, 5.0, 7.0], [2.0, 5.0, 8.0], [3.0, 5.0, 9.0]];
        let s = standardize(x.view(), &[true, true, false]);
        let z = 1.5f64.sqrt(); // 1 / sqrt(2/3)
        assert!((s[[0, 0]] + z).abs() < 1e-12);
        assert!(s[[1, 0]].abs() < 1e-12);
        assert!((s[[2, 0]] - z).abs() < 1e-12);
        assert!(s.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(s.column(2).to_vec(), vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 13 + j * 7) % 17) as f64 * 0.3 - 1.0);
        let flags = [true; 3];
        let once = standardize(x.view(), &flags);
        let twice = standardize(once.view(), &flags);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn small_tree() -> HierarchyTree {
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.2]];
        crate::engine::cohirf_fit(
            x.view(),
            &crate::engine::CohirfConfig::new(2, 1, 2).with_full_features(true),
        )
        .unwrap()
        .hierarchy
    }

    #[test]
    fn dot_has_one_line_per_node_and_edge() {
        let mut t = HierarchyTree::with_leaves(3);
        let nodes = vec![
            t.node(0).clone(),
            t.node(1).clone(),
            t.node(2).clone(),
            HierarchyNode {
                step: 1,
                medoid: 1,
                children: vec![0, 1, 2],
                size: 3,
            },
        ];
        t = HierarchyTree::from_parts(nodes, 3, vec![3]).unwrap();
        let dot = String::from_utf8(export_hierarchy(&t, HierarchyFormat::Dot)).unwrap();
        assert_eq!(dot.matches("[label=").count(), 4);
        assert_eq!(dot.matches(" -> ").count(), 3);
        assert!(dot.contains("n0 -> n3;"));
    }

    #[test]
    fn json_round_trip() {
        let t = small_tree();
        let bytes = export_hierarchy(&t, HierarchyFormat::Json);
        let back = import_hierarchy_json(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.n_leaves(), 3);
    }

    #[test]
    fn labels_csv_format() {
        let mut out = Vec::new();
        write_labels_csv(&mut out, &[2, 0, 1]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "sample_id,label\n0,2\n1,0\n2,1\n"
        );
    }

    #[test]
    fn dataset_csv_round_trip() {
        let x = array![[0.25, -1.0], [3.0, 1e-3]];
        let mut out = Vec::new();
        write_dataset_csv(&mut out, x.view(), Some(&[1, 0])).unwrap();
        let s = schema(&[("label", ColumnKind::Label)]);
        let ds = read_csv(out.as_slice(), &s).unwrap();
        assert_eq!(ds.data, x);
        assert_eq!(ds.labels, Some(vec![0, 1]));
    }
}
