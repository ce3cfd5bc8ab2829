//! Reading and writing populations.
//!
//! Two on-disk formats are supported:
//!
//! * **dense JSON**, a single file
//!   `{"directed": bool, "vertices": [...], "graphs": [{"id": .., "adjacency": [[0/1, ..], ..]}], "covariates": {..}}`
//!   where `covariates` may hold `monadic`, `dyadic` (flattened `v*v`,
//!   row-major) and `graph_level` objects mapping a column name to its values;
//! * **edge-list CSV**, a directory with `vertices.csv` (`vertex,<covariates..>`),
//!   `graphs.csv` (`graph,<graph-level covariates..>`), `edges.csv`
//!   (`graph,from,to`) and an optional `meta.json` (`{"directed": bool}`,
//!   directed when absent). Dyadic covariates are JSON-only.
//!
//! Missing covariate values (`null`, empty cells, `NA`) are rejected.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{NetmixError, Result};
use crate::population::{default_labels, Column, CovariateSet, GraphPopulation};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    EdgeListCsv,
    DenseJson,
}

impl Format {
    /// A directory is read as edge-list CSV unless it contains
    /// `population.json`; a file is read as dense JSON.
    pub fn detect(path: &Path) -> Format {
        if path.is_dir() && !path.join("population.json").exists() {
            Format::EdgeListCsv
        } else {
            Format::DenseJson
        }
    }
}

/// Resolves the file actually read for `path` (a directory holding
/// `population.json` resolves to that file).
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.is_dir() && path.join("population.json").exists() {
        path.join("population.json")
    } else {
        path.to_path_buf()
    }
}

pub fn load_population(path: &Path, format: Format) -> Result<(GraphPopulation, CovariateSet)> {
    if !path.exists() {
        return Err(NetmixError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    let (pop, cov) = match format {
        Format::DenseJson => load_dense_json(&resolve_input(path))?,
        Format::EdgeListCsv => load_edge_list(path)?,
    };
    pop.ensure_valid()?;
    cov.check(&pop)?;
    Ok((pop, cov))
}

pub fn save_population(
    path: &Path,
    format: Format,
    pop: &GraphPopulation,
    cov: &CovariateSet,
) -> Result<()> {
    match format {
        Format::DenseJson => {
            let text = serde_json::to_string_pretty(&to_dense_json(pop, cov))
                .map_err(|e| NetmixError::Numerical(e.to_string()))?;
            fs::write(path, text + "\n").map_err(|e| NetmixError::io(path, e))
        }
        Format::EdgeListCsv => save_edge_list(path, pop, cov),
    }
}

#[derive(Serialize, Deserialize)]
struct DenseGraph {
    id: Value,
    adjacency: Vec<Vec<u8>>,
}

fn to_dense_json(pop: &GraphPopulation, cov: &CovariateSet) -> Value {
    let v = pop.n_vertices();
    let graphs: Vec<Value> = (0..pop.n_graphs())
        .map(|k| {
            let rows: Vec<Vec<u8>> = pop.adjacency(k).chunks(v).map(<[u8]>::to_vec).collect();
            serde_json::json!({ "id": pop.graph_ids()[k], "adjacency": rows })
        })
        .collect();
    let mut covariates = Map::new();
    for (key, columns) in [
        ("monadic", &cov.monadic),
        ("dyadic", &cov.dyadic),
        ("graph_level", &cov.graph_level),
    ] {
        if !columns.is_empty() {
            let obj: Map<String, Value> = columns
                .iter()
                .map(|c| (c.name.clone(), serde_json::json!(c.values)))
                .collect();
            covariates.insert(key.to_string(), Value::Object(obj));
        }
    }
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "directed": pop.directed(),
        "vertices": pop.vertex_labels(),
        "graphs": graphs,
        "covariates": covariates,
    })
}

fn label_of(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn load_dense_json(path: &Path) -> Result<(GraphPopulation, CovariateSet)> {
    let text = fs::read_to_string(path).map_err(|e| NetmixError::io(path, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| NetmixError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let parse_err = |message: String| NetmixError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    let directed = root
        .get("directed")
        .and_then(Value::as_bool)
        .ok_or_else(|| parse_err("missing boolean field `directed`".into()))?;
    let graphs: Vec<DenseGraph> = serde_json::from_value(
        root.get("graphs")
            .cloned()
            .ok_or_else(|| parse_err("missing field `graphs`".into()))?,
    )
    .map_err(|e| parse_err(format!("bad `graphs`: {e}")))?;
    let n_vertices = match root.get("vertices") {
        Some(Value::Array(labels)) => labels.len(),
        _ => graphs.first().map_or(0, |g| g.adjacency.len()),
    };
    let labels = match root.get("vertices") {
        Some(Value::Array(labels)) => labels.iter().map(label_of).collect(),
        _ => default_labels(n_vertices),
    };
    let mut adjacency = Vec::with_capacity(graphs.len());
    let mut ids = Vec::with_capacity(graphs.len());
    for (k, g) in graphs.iter().enumerate() {
        if g.adjacency.len() != n_vertices || g.adjacency.iter().any(|r| r.len() != n_vertices) {
            return Err(NetmixError::Dimension(format!(
                "graph {} is not {n_vertices}x{n_vertices}",
                k + 1
            )));
        }
        adjacency.push(g.adjacency.concat());
        ids.push(label_of(&g.id));
    }
    let pop = GraphPopulation::from_raw(n_vertices, directed, adjacency, ids, labels);

    let mut cov = CovariateSet::default();
    if let Some(Value::Object(groups)) = root.get("covariates") {
        for (group, columns) in groups {
            let target = match group.as_str() {
                "monadic" => &mut cov.monadic,
                "dyadic" => &mut cov.dyadic,
                "graph_level" => &mut cov.graph_level,
                other => return Err(parse_err(format!("unknown covariate group `{other}`"))),
            };
            let Value::Object(columns) = columns else {
                return Err(parse_err(format!("covariate group `{group}` must be an object")));
            };
            for (name, values) in columns {
                let values: Vec<Option<f64>> = serde_json::from_value(values.clone())
                    .map_err(|e| parse_err(format!("covariate `{name}`: {e}")))?;
                let mut out = Vec::with_capacity(values.len());
                for (row, x) in values.into_iter().enumerate() {
                    out.push(x.ok_or_else(|| NetmixError::MissingCovariate {
                        path: path.to_path_buf(),
                        column: name.clone(),
                        line: row + 1,
                    })?);
                }
                target.push(Column {
                    name: name.clone(),
                    values: out,
                });
            }
        }
    }
    Ok((pop, cov))
}

#[derive(Deserialize, Serialize)]
struct Meta {
    directed: bool,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> NetmixError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => NetmixError::io(path, source),
        kind => NetmixError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads a table whose first column is a key, returning the keys and the
/// remaining numeric columns.
fn read_keyed_table(path: &Path, key: &str) -> Result<(Vec<String>, Vec<Column>)> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some(key) {
        return Err(NetmixError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("first column must be `{key}`"),
        });
    }
    let mut keys = Vec::new();
    let mut columns: Vec<Column> = headers
        .iter()
        .skip(1)
        .map(|h| Column {
            name: h.to_string(),
            values: Vec::new(),
        })
        .collect();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        keys.push(record[0].to_string());
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = record.get(c + 1).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(NetmixError::MissingCovariate {
                    path: path.to_path_buf(),
                    column: col.name.clone(),
                    line,
                });
            }
            let x: f64 = cell.parse().map_err(|_| NetmixError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{cell}` is not a number in column `{}`", col.name),
            })?;
            col.values.push(x);
        }
    }
    Ok((keys, columns))
}

fn load_edge_list(dir: &Path) -> Result<(GraphPopulation, CovariateSet)> {
    let meta_path = dir.join("meta.json");
    let directed = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| NetmixError::io(&meta_path, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| NetmixError::Parse {
            path: meta_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        meta.directed
    } else {
        true
    };
    let (labels, monadic) = read_keyed_table(&dir.join("vertices.csv"), "vertex")?;
    let (graph_ids, graph_level) = read_keyed_table(&dir.join("graphs.csv"), "graph")?;
    let v = labels.len();
    let vertex_index: HashMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let graph_index: HashMap<&str, usize> =
        graph_ids.iter().enumerate().map(|(k, g)| (g.as_str(), k)).collect();
    let mut adjacency = vec![vec![0u8; v * v]; graph_ids.len()];

    let edges_path = dir.join("edges.csv");
    let mut reader = csv_reader(&edges_path)?;
    let headers = reader.headers().map_err(|e| csv_error(&edges_path, e))?.clone();
    if headers.iter().take(3).collect::<Vec<_>>() != ["graph", "from", "to"] {
        return Err(NetmixError::Parse {
            path: edges_path,
            line: 1,
            message: "header must be `graph,from,to`".into(),
        });
    }
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&edges_path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let k = *graph_index.get(&record[0]).ok_or_else(|| NetmixError::Parse {
            path: edges_path.clone(),
            line,
            message: format!("unknown graph `{}`", &record[0]),
        })?;
        let lookup = |label: &str| {
            vertex_index
                .get(label)
                .copied()
                .ok_or_else(|| NetmixError::UnknownVertex {
                    path: edges_path.clone(),
                    line,
                    label: label.to_string(),
                })
        };
        let i = lookup(&record[1])?;
        let j = lookup(&record[2])?;
        adjacency[k][i * v + j] = 1;
        if !directed {
            adjacency[k][j * v + i] = 1;
        }
    }
    let pop = GraphPopulation::from_raw(v, directed, adjacency, graph_ids, labels);
    let cov = CovariateSet {
        monadic,
        dyadic: Vec::new(),
        graph_level,
    };
    Ok((pop, cov))
}

fn save_edge_list(dir: &Path, pop: &GraphPopulation, cov: &CovariateSet) -> Result<()> {
    if !cov.dyadic.is_empty() {
        return Err(NetmixError::InvalidArgument(
            "dyadic covariates can only be saved as dense JSON".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| NetmixError::io(dir, e))?;
    let meta = serde_json::to_string(&Meta {
        directed: pop.directed(),
    })
    .expect("meta serializes");
    fs::write(dir.join("meta.json"), meta + "\n").map_err(|e| NetmixError::io(dir, e))?;

    let write_table = |file: &str, key: &str, keys: &[String], columns: &[Column]| -> Result<()> {
        let path = dir.join(file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut header = vec![key.to_string()];
        header.extend(columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(|e| csv_error(&path, e))?;
        for (r, k) in keys.iter().enumerate() {
            let mut row = vec![k.clone()];
            row.extend(columns.iter().map(|c| c.values[r].to_string()));
            w.write_record(&row).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| NetmixError::io(&path, e))
    };
    write_table("vertices.csv", "vertex", pop.vertex_labels(), &cov.monadic)?;
    write_table("graphs.csv", "graph", pop.graph_ids(), &cov.graph_level)?;

    let path = dir.join("edges.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["graph", "from", "to"])
        .map_err(|e| csv_error(&path, e))?;
    let labels = pop.vertex_labels();
    for k in 0..pop.n_graphs() {
        for (i, j) in pop.dyad_positions() {
            if pop.edge(k, i, j) != 0 {
                w.write_record([&pop.graph_ids()[k], &labels[i], &labels[j]])
                    .map_err(|e| csv_error(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| NetmixError::io(&path, e))
}

/// Parses `K` stacked `v × v` 0/1 matrices from whitespace separated text,
/// the layout used by UCINET full-matrix DL files. Header lines up to and
/// including a line starting with `data:` are skipped when present; `v` is
/// taken from the first data row.
pub fn parse_stacked_matrices(text: &str) -> Result<Vec<Vec<u8>>> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.trim().to_ascii_lowercase().starts_with("data:"))
        .map_or(0, |p| p + 1);
    let mut rows: Vec<(usize, Vec<u8>)> = Vec::new();
    for (offset, line) in lines[start..].iter().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let row = tokens
            .iter()
            .map(|t| t.parse::<u8>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| NetmixError::Parse {
                path: PathBuf::from("<stacked>"),
                line: start + offset + 1,
                message: "expected integer cells".into(),
            })?;
        rows.push((start + offset + 1, row));
    }
    let v = rows.first().map_or(0, |r| r.1.len());
    if v == 0 || rows.len() % v != 0 {
        return Err(NetmixError::Dimension(format!(
            "{} rows cannot be split into square {v}x{v} matrices",
            rows.len()
        )));
    }
    if let Some((line, row)) = rows.iter().find(|r| r.1.len() != v) {
        return Err(NetmixError::Parse {
            path: PathBuf::from("<stacked>"),
            line: *line,
            message: format!("row has {} cells, expected {v}", row.len()),
        });
    }
    Ok(rows
        .chunks(v)
        .map(|block| block.iter().flat_map(|r| r.1.iter().copied()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (GraphPopulation, CovariateSet) {
        let pop = GraphPopulation::from_edge_lists(
            4,
            true,
            &[vec![(0, 1), (2, 3)], vec![], vec![(3, 0)]],
        )
        .unwrap();
        let mut cov = CovariateSet::default();
        cov.push_monadic("age", vec![30.0, 41.5, 22.0, 60.0]);
        cov.push_monadic("dept", vec![1.0, 2.0, 1.0, 2.0]);
        cov.push_graph_level("perceiver", vec![1.0, 2.0, 3.0]);
        (pop, cov)
    }

    #[test]
    fn round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let (pop, cov) = sample();
        let json = dir.path().join("pop.json");
        save_population(&json, Format::DenseJson, &pop, &cov).unwrap();
        assert_eq!(load_population(&json, Format::DenseJson).unwrap(), (pop.clone(), cov.clone()));

        let csv_dir = dir.path().join("csv");
        save_population(&csv_dir, Format::EdgeListCsv, &pop, &cov).unwrap();
        assert_eq!(load_population(&csv_dir, Format::EdgeListCsv).unwrap(), (pop, cov));
    }

    #[test]
    fn empty_graph_is_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let (pop, cov) = sample();
        save_population(dir.path(), Format::EdgeListCsv, &pop, &cov).unwrap();
        let (loaded, _) = load_population(dir.path(), Format::EdgeListCsv).unwrap();
        assert_eq!(loaded.edge_count(1), 0);
    }

    #[test]
    fn unknown_vertex_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let (pop, cov) = sample();
        save_population(dir.path(), Format::EdgeListCsv, &pop, &cov).unwrap();
        let edges = dir.path().join("edges.csv");
        let mut text = fs::read_to_string(&edges).unwrap();
        text.push_str("1,22,1\n");
        fs::write(&edges, text).unwrap();
        match load_population(dir.path(), Format::EdgeListCsv) {
            Err(NetmixError::UnknownVertex { label, line, .. }) => {
                assert_eq!(label, "22");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_covariate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (pop, cov) = sample();
        save_population(dir.path(), Format::EdgeListCsv, &pop, &cov).unwrap();
        fs::write(dir.path().join("vertices.csv"), "vertex,age\n1,3\n2,NA\n3,1\n4,2\n").unwrap();
        assert!(matches!(
            load_population(dir.path(), Format::EdgeListCsv),
            Err(NetmixError::MissingCovariate { line: 3, .. })
        ));
    }

    #[test]
    fn json_parse_error_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n\"directed\": true,\n oops }").unwrap();
        assert!(matches!(
            load_population(&path, Format::DenseJson),
            Err(NetmixError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn stacked_matrices_skip_dl_header() {
        let text = "dl n=2 nm=2 format=fullmatrix\ndata:\n0 1\n0 0\n0 0\n1 0\n";
        let mats = parse_stacked_matrices(text).unwrap();
        assert_eq!(mats, vec![vec![0, 1, 0, 0], vec![0, 0, 1, 0]]);
        assert!(parse_stacked_matrices("0 1\n0 0\n0 0\n").is_err());
    }
}
