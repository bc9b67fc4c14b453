//! Plain-text graph and dataset files.
//!
//! Format per graph: a header line `n d [c]` (node count, feature width,
//! optional class count), then `n` lines of `d` space-separated reals, then
//! an optional `labels:` line followed by `n` integers (node labels) or one
//! integer (graph label), then an `edges:` line followed by one `i j` pair
//! per line with `i < j`, 0-indexed. A dataset file starts with the graph
//! count and holds that many blocks, each preceded by `graph k`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};
use crate::numkit::{DenseMatrix, SparseSymmetric};

/// Writes a file atomically: the content lands in a sibling temp file that
/// is renamed over the target, so interrupted runs never leave partial
/// artifacts.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("invalid output path {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_graph(g: &Graph) -> String {
    let mut out = String::new();
    encode_graph_into(g, &mut out);
    out
}

fn encode_graph_into(g: &Graph, out: &mut String) {
    match g.num_classes() {
        Some(c) => writeln!(out, "{} {} {}", g.n(), g.feature_dim(), c).unwrap(),
        None => writeln!(out, "{} {}", g.n(), g.feature_dim()).unwrap(),
    }
    for i in 0..g.n() {
        let row: Vec<String> = g.features().row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    match g.labels() {
        Some(Labels::Node(l)) => {
            let row: Vec<String> = l.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "labels:").unwrap();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        Some(Labels::Graph(l)) => {
            writeln!(out, "labels:").unwrap();
            writeln!(out, "{l}").unwrap();
        }
        None => {}
    }
    writeln!(out, "edges:").unwrap();
    for (i, j) in g.edges() {
        writeln!(out, "{i} {j}").unwrap();
    }
}

pub fn encode_dataset(graphs: &[Graph]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", graphs.len()).unwrap();
    for (k, g) in graphs.iter().enumerate() {
        writeln!(out, "graph {k}").unwrap();
        encode_graph_into(g, &mut out);
    }
    out
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { lines: text.lines().collect(), pos: 0 }
    }

    /// Next non-empty line as (1-based line number, trimmed content).
    fn next(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos].trim();
            self.pos += 1;
            if !line.is_empty() {
                return Some((self.pos, line));
            }
        }
        None
    }

    fn peek(&self) -> Option<&'a str> {
        let mut p = self.pos;
        while p < self.lines.len() {
            let line = self.lines[p].trim();
            if !line.is_empty() {
                return Some(line);
            }
            p += 1;
        }
        None
    }
}

fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("expected integer, got {token:?}") })
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("expected real, got {token:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value {token:?}") });
    }
    Ok(v)
}

fn parse_graph_block(cursor: &mut Cursor) -> Result<Graph> {
    let (line, header) = cursor
        .next()
        .ok_or_else(|| Error::Parse { line: cursor.pos, msg: "missing graph header".into() })?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 2 && tokens.len() != 3 {
        return Err(Error::Parse {
            line,
            msg: format!("header must be `n d [c]`, got {header:?}"),
        });
    }
    let n = parse_usize(tokens[0], line)?;
    let d = parse_usize(tokens[1], line)?;
    let num_classes = if tokens.len() == 3 { Some(parse_usize(tokens[2], line)?) } else { None };

    let mut features = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let (line, row) = cursor.next().ok_or_else(|| Error::Parse {
            line: cursor.pos,
            msg: format!("missing feature row {i}"),
        })?;
        let values: Vec<&str> = row.split_whitespace().collect();
        if values.len() != d {
            return Err(Error::Parse {
                line,
                msg: format!("feature row has {} values, expected {d}", values.len()),
            });
        }
        for (j, token) in values.iter().enumerate() {
            features.set(i, j, parse_f64(token, line)?);
        }
    }

    let (line, section) = cursor.next().ok_or_else(|| Error::Parse {
        line: cursor.pos,
        msg: "missing `edges:` section".into(),
    })?;
    let mut labels = None;
    if section == "labels:" {
        let mut values = Vec::new();
        loop {
            let (line, content) = cursor.next().ok_or_else(|| Error::Parse {
                line: cursor.pos,
                msg: "labels section not followed by `edges:`".into(),
            })?;
            if content == "edges:" {
                break;
            }
            for token in content.split_whitespace() {
                values.push(parse_usize(token, line)?);
            }
        }
        labels = Some(if values.len() == n {
            Labels::Node(values)
        } else if values.len() == 1 {
            Labels::Graph(values[0])
        } else {
            return Err(Error::Parse {
                line,
                msg: format!("{} labels for {n} nodes (need n or 1)", values.len()),
            });
        });
    } else if section != "edges:" {
        return Err(Error::Parse {
            line,
            msg: format!("expected `labels:` or `edges:`, got {section:?}"),
        });
    }

    let mut edges = Vec::new();
    loop {
        match cursor.peek() {
            None => break,
            Some(next) if next.starts_with("graph ") => break,
            Some(_) => {}
        }
        let (line, pair) = cursor.next().unwrap();
        let tokens: Vec<&str> = pair.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse { line, msg: format!("edge line must be `i j`, got {pair:?}") });
        }
        let i = parse_usize(tokens[0], line)?;
        let j = parse_usize(tokens[1], line)?;
        if i == j {
            return Err(Error::Validation(format!("line {line}: self-loop edge {i} {j}")));
        }
        if i > j {
            return Err(Error::Validation(format!(
                "line {line}: edge {i} {j} not in upper-triangle order"
            )));
        }
        edges.push((i, j, 1.0));
    }

    let adjacency = SparseSymmetric::new(n, edges)?;
    Graph::new(adjacency, features, labels, num_classes)
}

pub fn decode_graph(text: &str) -> Result<Graph> {
    let mut cursor = Cursor::new(text);
    let g = parse_graph_block(&mut cursor)?;
    if let Some((line, content)) = cursor.next() {
        return Err(Error::Parse { line, msg: format!("trailing content {content:?}") });
    }
    Ok(g)
}

pub fn decode_dataset(text: &str) -> Result<Vec<Graph>> {
    let mut cursor = Cursor::new(text);
    let (line, count_line) = cursor
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty dataset file".into() })?;
    let count = parse_usize(count_line, line)?;
    let mut graphs = Vec::with_capacity(count);
    for k in 0..count {
        let (line, marker) = cursor.next().ok_or_else(|| Error::Parse {
            line: cursor.pos,
            msg: format!("missing `graph {k}` marker"),
        })?;
        if marker != format!("graph {k}") {
            return Err(Error::Parse {
                line,
                msg: format!("expected `graph {k}`, got {marker:?}"),
            });
        }
        graphs.push(parse_graph_block(&mut cursor)?);
    }
    if let Some((line, content)) = cursor.next() {
        return Err(Error::Parse { line, msg: format!("trailing content {content:?}") });
    }
    Ok(graphs)
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    decode_graph(&std::fs::read_to_string(path)?)
}

pub fn load_graph_dataset(path: &Path) -> Result<Vec<Graph>> {
    decode_dataset(&std::fs::read_to_string(path)?)
}

pub fn save_graph(path: &Path, g: &Graph) -> Result<()> {
    write_atomic(path, &encode_graph(g))
}

pub fn save_graph_dataset(path: &Path, graphs: &[Graph]) -> Result<()> {
    write_atomic(path, &encode_dataset(graphs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::{generate_ring, generate_sbm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_two_node_file() {
        let g = decode_graph("2 1\n0.5\n-1.5\nedges:\n0 1\n").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.features().at(1, 0), -1.5);
    }

    #[test]
    fn self_loop_line_is_a_validation_error() {
        let err = decode_graph("2 1\n0\n0\nedges:\n0 0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn lower_triangle_edge_rejected() {
        let err = decode_graph("2 1\n0\n0\nedges:\n1 0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_feature_row_reports_line() {
        let err = decode_graph("2 2\n0.5 oops\n0 0\nedges:\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn round_trip_random_graphs() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_sbm(&[4, 5], 0.6, 0.1, 3, 0.5, &mut rng).unwrap();
            let text = encode_graph(&g);
            let back = decode_graph(&text).unwrap();
            assert_eq!(back, g);
            assert_eq!(encode_graph(&back), text);
        }
    }

    #[test]
    fn round_trip_dataset_with_graph_labels() {
        let graphs = vec![
            generate_ring(4, 2, 1).unwrap(),
            generate_ring(5, 2, 0).unwrap(),
        ];
        let text = encode_dataset(&graphs);
        let back = decode_dataset(&text).unwrap();
        assert_eq!(back, graphs);
        assert_eq!(back[0].graph_label(), Some(1));
        assert_eq!(encode_dataset(&back), text);
    }

    #[test]
    fn files_round_trip_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.graph");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = generate_sbm(&[3, 3], 0.7, 0.2, 2, 0.3, &mut rng).unwrap();
        save_graph(&path, &g).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let loaded = load_graph(&path).unwrap();
        save_graph(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn dataset_marker_mismatch_is_parse_error() {
        let err = decode_dataset("1\ngraph 4\n2 1\n0\n0\nedges:\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }
}
