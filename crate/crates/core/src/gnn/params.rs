//! Named parameter groups and their on-disk checkpoint format.
//!
//! A checkpoint is plain text:
//!
//! ```text
//! gib-checkpoint v1
//! <count>
//! <name> <rows> <cols>
//! <rows*cols values, space separated>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{GibError, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

const MAGIC: &str = "gib-checkpoint v1";

/// An ordered, named list of trainable tensors updated together.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.names.push(name.into());
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Records every tensor as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.values.iter().map(|v| tape.var(v.clone())).collect()
    }

    /// Records every tensor as a constant.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.values.iter().map(|v| tape.constant(v.clone())).collect()
    }

    /// Gradients for vars previously returned by [`ParamSet::bind`].
    pub fn gradients(&self, vars: &[Var<'_>], grads: &Gradients) -> Vec<Tensor> {
        vars.iter().map(|&v| grads.wrt(v)).collect()
    }

    /// Overwrites values from `named`, looked up as `<prefix>.<name>`.
    pub fn assign(&mut self, prefix: &str, named: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let key = format!("{prefix}.{name}");
            let loaded = named
                .get(&key)
                .ok_or_else(|| GibError::contract(format!("checkpoint lacks parameter {key}")))?;
            if loaded.shape() != value.shape() {
                return Err(GibError::Dimension {
                    op: "checkpoint assign",
                    lhs: value.shape(),
                    rhs: loaded.shape(),
                });
            }
            *value = loaded.clone();
        }
        Ok(())
    }
}

/// Writes the given groups; parameter `p` of group `g` is stored as `g.p`.
pub fn save_checkpoint(path: impl AsRef<Path>, groups: &[(&str, &ParamSet)]) -> Result<()> {
    let path = path.as_ref();
    let count: usize = groups.iter().map(|(_, s)| s.len()).sum();
    let mut out = format!("{MAGIC}\n{count}\n");
    for (prefix, set) in groups {
        for (name, t) in set.names.iter().zip(&set.values) {
            let _ = writeln!(out, "{prefix}.{name} {} {}", t.rows(), t.cols());
            let cells: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    fs::write(path, out).map_err(|e| GibError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BTreeMap<String, Tensor>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GibError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, detail: String| GibError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        detail,
    };
    match lines.next() {
        Some((_, MAGIC)) => {}
        other => {
            return Err(parse_err(0, format!("bad header {:?}", other.map(|(_, l)| l))));
        }
    }
    let (ln, count) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing count".into()))?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| parse_err(ln, format!("bad count {count:?}")))?;

    let mut out = BTreeMap::new();
    for _ in 0..count {
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(ln, "truncated checkpoint".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(parse_err(hl, format!("bad entry header {header:?}")));
        };
        let rows: usize = rows.parse().map_err(|_| parse_err(hl, "bad rows".into()))?;
        let cols: usize = cols.parse().map_err(|_| parse_err(hl, "bad cols".into()))?;
        let (vl, values) = lines
            .next()
            .ok_or_else(|| parse_err(hl, "missing values".into()))?;
        let data = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(vl, format!("bad value {v:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let t = Tensor::new(rows, cols, data).map_err(|e| parse_err(vl, e.to_string()))?;
        out.insert(name.to_string(), t);
    }
    Ok(out)
}
