//! Plain-text model checkpoints: a versioned header, the training mode,
//! encoder flags, then every tensor by name with explicit shape. Values
//! print in shortest round-tripping form so save followed by load is
//! bit-exact.

use std::collections::HashMap;
use std::path::Path;

use crate::encoders::{Activation, GcnParams, GinLayer, GinParams, ProjectionHead};
use crate::error::{Error, Result};
use crate::graph::io::write_atomic;
use crate::numkit::{BnState, DenseMatrix};

pub const CHECKPOINT_HEADER: &str = "advgcl-checkpoint v1";

/// A trained model of either level.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Node { gcn: GcnParams, head: ProjectionHead },
    Graph { gin: GinParams, head: ProjectionHead },
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn parse_activation(s: &str, line: usize) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(Error::Parse { line, msg: format!("unknown activation '{other}'") }),
    }
}

fn push_tensor(out: &mut String, name: &str, m: &DenseMatrix) {
    out.push_str(&format!("tensor {} {} {}\n", name, m.rows(), m.cols()));
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn push_head(out: &mut String, head: &ProjectionHead) {
    push_tensor(out, "head.w1", &head.w1);
    push_tensor(out, "head.b1", &head.b1);
    push_tensor(out, "head.w2", &head.w2);
    push_tensor(out, "head.b2", &head.b2);
}

fn vec_as_row(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

impl Checkpoint {
    pub fn mode(&self) -> &'static str {
        match self {
            Checkpoint::Node { .. } => "node",
            Checkpoint::Graph { .. } => "graph",
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_HEADER);
        out.push('\n');
        out.push_str(&format!("mode {}\n", self.mode()));
        match self {
            Checkpoint::Node { gcn, head } => {
                out.push_str(&format!("activation {}\n", activation_name(gcn.activation)));
                push_tensor(&mut out, "gcn.w1", &gcn.w1);
                push_tensor(&mut out, "gcn.w2", &gcn.w2);
                push_head(&mut out, head);
            }
            Checkpoint::Graph { gin, head } => {
                out.push_str(&format!("activation {}\n", activation_name(gin.activation)));
                out.push_str(&format!("batch_norm {}\n", gin.use_batch_norm));
                out.push_str(&format!("layers {}\n", gin.layers.len()));
                for (k, layer) in gin.layers.iter().enumerate() {
                    out.push_str(&format!("momentum {} {:?}\n", k, layer.bn_state.momentum));
                    push_tensor(&mut out, &format!("gin.{k}.w1"), &layer.w1);
                    push_tensor(&mut out, &format!("gin.{k}.b1"), &layer.b1);
                    push_tensor(&mut out, &format!("gin.{k}.w2"), &layer.w2);
                    push_tensor(&mut out, &format!("gin.{k}.b2"), &layer.b2);
                    push_tensor(&mut out, &format!("gin.{k}.bn_scale"), &layer.bn_scale);
                    push_tensor(&mut out, &format!("gin.{k}.bn_shift"), &layer.bn_shift);
                    push_tensor(
                        &mut out,
                        &format!("gin.{k}.running_mean"),
                        &vec_as_row(&layer.bn_state.running_mean),
                    );
                    push_tensor(
                        &mut out,
                        &format!("gin.{k}.running_var"),
                        &vec_as_row(&layer.bn_state.running_var),
                    );
                }
                push_head(&mut out, head);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Checkpoint> {
        let mut parser = Parser::new(text);
        parser.expect_line(CHECKPOINT_HEADER)?;
        let mode = parser.keyed_value("mode")?;
        let activation_line = parser.line_no();
        let activation = parse_activation(&parser.keyed_value("activation")?, activation_line)?;
        match mode.as_str() {
            "node" => {
                let tensors = parser.read_tensors()?;
                let mut t = TensorSet::new(tensors, parser.line_no());
                let gcn = GcnParams {
                    w1: t.take("gcn.w1")?,
                    w2: t.take("gcn.w2")?,
                    activation,
                };
                let head = t.take_head()?;
                t.finish()?;
                Ok(Checkpoint::Node { gcn, head })
            }
            "graph" => {
                let use_batch_norm = {
                    let line = parser.line_no();
                    let v = parser.keyed_value("batch_norm")?;
                    v.parse::<bool>().map_err(|_| Error::Parse {
                        line,
                        msg: format!("expected true/false, got '{v}'"),
                    })?
                };
                let layer_count = {
                    let line = parser.line_no();
                    let v = parser.keyed_value("layers")?;
                    v.parse::<usize>().map_err(|_| Error::Parse {
                        line,
                        msg: format!("expected a layer count, got '{v}'"),
                    })?
                };
                let mut momenta = Vec::with_capacity(layer_count);
                let mut tensor_lines = Vec::new();
                // Momentum lines are interleaved with tensors; collect both.
                let raw = parser.rest();
                for (offset, line) in raw {
                    if let Some(rest) = line.strip_prefix("momentum ") {
                        let mut it = rest.split_whitespace();
                        let idx: usize = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse {
                                line: offset,
                                msg: "momentum needs a layer index".into(),
                            })?;
                        let val: f64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse {
                                line: offset,
                                msg: "momentum needs a value".into(),
                            })?;
                        momenta.push((idx, val));
                    } else {
                        tensor_lines.push((offset, line));
                    }
                }
                let tensors = parse_tensor_lines(&tensor_lines)?;
                let mut t = TensorSet::new(tensors, 0);
                let mut layers = Vec::with_capacity(layer_count);
                for k in 0..layer_count {
                    let momentum = momenta
                        .iter()
                        .find(|(i, _)| *i == k)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::Parse {
                            line: 0,
                            msg: format!("missing momentum for layer {k}"),
                        })?;
                    let running_mean = t.take(&format!("gin.{k}.running_mean"))?;
                    let running_var = t.take(&format!("gin.{k}.running_var"))?;
                    layers.push(GinLayer {
                        w1: t.take(&format!("gin.{k}.w1"))?,
                        b1: t.take(&format!("gin.{k}.b1"))?,
                        w2: t.take(&format!("gin.{k}.w2"))?,
                        b2: t.take(&format!("gin.{k}.b2"))?,
                        bn_scale: t.take(&format!("gin.{k}.bn_scale"))?,
                        bn_shift: t.take(&format!("gin.{k}.bn_shift"))?,
                        bn_state: BnState {
                            running_mean: running_mean.values().to_vec(),
                            running_var: running_var.values().to_vec(),
                            momentum,
                        },
                    });
                }
                let head = t.take_head()?;
                t.finish()?;
                Ok(Checkpoint::Graph {
                    gin: GinParams { layers, activation, use_batch_norm },
                    head,
                })
            }
            other => Err(Error::Parse {
                line: 2,
                msg: format!("unknown checkpoint mode '{other}'"),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Checkpoint::from_text(&text)
    }
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { lines: text.lines().collect(), pos: 0 }
    }

    fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self.lines.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.line_no(),
            msg: "unexpected end of checkpoint".into(),
        })?;
        self.pos += 1;
        Ok(line)
    }

    fn expect_line(&mut self, want: &str) -> Result<()> {
        let line_no = self.line_no();
        let got = self.next_line()?;
        if got != want {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected '{want}', got '{got}'"),
            });
        }
        Ok(())
    }

    fn keyed_value(&mut self, key: &str) -> Result<String> {
        let line_no = self.line_no();
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|v| v.to_string())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected '{key} <value>', got '{line}'"),
            })
    }

    /// Remaining lines with their 1-based numbers.
    fn rest(&mut self) -> Vec<(usize, &'a str)> {
        let out = self.lines[self.pos..]
            .iter()
            .enumerate()
            .map(|(k, &l)| (self.pos + k + 1, l))
            .collect();
        self.pos = self.lines.len();
        out
    }

    fn read_tensors(&mut self) -> Result<Vec<(String, DenseMatrix)>> {
        let lines = self.rest();
        parse_tensor_lines(&lines)
    }
}

fn parse_tensor_lines(lines: &[(usize, &str)]) -> Result<Vec<(String, DenseMatrix)>> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        let (line_no, line) = lines[k];
        if line.trim().is_empty() {
            k += 1;
            continue;
        }
        let rest = line.strip_prefix("tensor ").ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected a tensor declaration, got '{line}'"),
        })?;
        let mut it = rest.split_whitespace();
        let name = it
            .next()
            .ok_or_else(|| Error::Parse { line: line_no, msg: "tensor needs a name".into() })?
            .to_string();
        let rows: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { line: line_no, msg: "bad tensor row count".into() })?;
        let cols: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { line: line_no, msg: "bad tensor column count".into() })?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (row_no, row_line) = *lines.get(k + 1 + r).ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("tensor {name} truncated"),
            })?;
            for tok in row_line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: row_no,
                    msg: format!("bad number '{tok}'"),
                })?;
                data.push(v);
            }
            if data.len() != (r + 1) * cols {
                return Err(Error::Parse {
                    line: row_no,
                    msg: format!("tensor {name} row {r} has wrong width"),
                });
            }
        }
        out.push((name, DenseMatrix::from_vec(rows, cols, data)?));
        k += 1 + rows;
    }
    Ok(out)
}

struct TensorSet {
    map: HashMap<String, DenseMatrix>,
    line: usize,
}

impl TensorSet {
    fn new(tensors: Vec<(String, DenseMatrix)>, line: usize) -> Self {
        TensorSet { map: tensors.into_iter().collect(), line }
    }

    fn take(&mut self, name: &str) -> Result<DenseMatrix> {
        self.map.remove(name).ok_or_else(|| Error::Parse {
            line: self.line,
            msg: format!("checkpoint is missing tensor '{name}'"),
        })
    }

    fn take_head(&mut self) -> Result<ProjectionHead> {
        Ok(ProjectionHead {
            w1: self.take("head.w1")?,
            b1: self.take("head.b1")?,
            w2: self.take("head.w2")?,
            b2: self.take("head.b2")?,
        })
    }

    fn finish(self) -> Result<()> {
        if let Some(name) = self.map.keys().next() {
            return Err(Error::Parse {
                line: self.line,
                msg: format!("checkpoint has unexpected tensor '{name}'"),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_gcn, init_gin, init_head};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node_checkpoint(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gcn = init_gcn(3, 8, 4, &mut rng).unwrap();
        let head = init_head(4, &mut rng).unwrap();
        Checkpoint::Node { gcn, head }
    }

    fn graph_checkpoint(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gin = init_gin(3, 4, &mut rng).unwrap();
        gin.layers[1].bn_state.running_mean = vec![0.25, -1.5, 0.0, 3.0];
        gin.layers[1].bn_state.running_var = vec![1.25, 0.5, 2.0, 0.125];
        let head = init_head(12, &mut rng).unwrap();
        Checkpoint::Graph { gin, head }
    }

    #[test]
    fn node_round_trip_is_exact() {
        let ckpt = node_checkpoint(0);
        let loaded = Checkpoint::from_text(&ckpt.to_text()).unwrap();
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn graph_round_trip_is_exact() {
        let ckpt = graph_checkpoint(1);
        let loaded = Checkpoint::from_text(&ckpt.to_text()).unwrap();
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn serialized_text_round_trips_byte_for_byte() {
        let ckpt = graph_checkpoint(2);
        let text = ckpt.to_text();
        let again = Checkpoint::from_text(&text).unwrap().to_text();
        assert_eq!(text, again);
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = node_checkpoint(3);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn header_mismatch_is_a_parse_error() {
        let text = node_checkpoint(4).to_text().replace("v1", "v9");
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_tensor_is_a_parse_error() {
        let ckpt = node_checkpoint(5);
        let text = ckpt.to_text();
        let cut = text.replace("tensor gcn.w2", "tensor gcn.other");
        assert!(matches!(Checkpoint::from_text(&cut), Err(Error::Parse { .. })));
    }

    #[test]
    fn corrupt_number_is_a_parse_error() {
        let text = node_checkpoint(6).to_text();
        let first_value_line = text.lines().nth(3).unwrap().to_string();
        let broken = text.replacen(&first_value_line, "0.5 not-a-number 0.5", 1);
        assert!(matches!(Checkpoint::from_text(&broken), Err(Error::Parse { .. })));
    }

    #[test]
    fn mode_line_decides_the_variant() {
        match Checkpoint::from_text(&graph_checkpoint(7).to_text()).unwrap() {
            Checkpoint::Graph { gin, .. } => {
                assert_eq!(gin.layers.len(), 3);
                assert_eq!(gin.layers[1].bn_state.running_mean, vec![0.25, -1.5, 0.0, 3.0]);
            }
            Checkpoint::Node { .. } => panic!("expected graph mode"),
        }
    }
}
