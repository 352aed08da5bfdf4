//! Plain-text embedding and match files.
//!
//! An embedding file starts with a `n d` header followed by `n` lines of a
//! token and `d` whitespace-separated decimals. A match file holds one
//! `source<TAB>target` token pair per line.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Labeled vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    tokens: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingFile {
    pub fn new(tokens: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if tokens.len() != vectors.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens for {} vectors",
                tokens.len(),
                vectors.nrows()
            )));
        }
        if let Some(t) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidParameter(format!(
                "token {t:?} is empty or contains whitespace"
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vectors".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate token '{t}'")));
            }
        }
        Ok(Self {
            tokens,
            vectors,
            index,
        })
    }

    /// Rows labeled `{prefix}{i}`.
    pub fn numbered(prefix: &str, vectors: Array2<f64>) -> Result<Self> {
        let tokens = (0..vectors.nrows())
            .map(|i| format!("{prefix}{i}"))
            .collect();
        Self::new(tokens, vectors)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Errors if any vector does not lie strictly inside `ball`.
    pub fn check_ball(&self, ball: &PoincareBall) -> Result<()> {
        for (i, v) in self.vectors.rows().into_iter().enumerate() {
            let norm = v.dot(&v).sqrt();
            if !(norm < ball.radius()) {
                return Err(Error::OutsideBall {
                    index: i,
                    norm,
                    radius: ball.radius(),
                });
            }
        }
        Ok(())
    }

    /// The vectors as a uniformly weighted cloud.
    pub fn to_cloud(&self) -> Result<PointCloud> {
        PointCloud::uniform(self.vectors.clone())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (n, d) = loop {
            let Some((no, line)) = lines.next() else {
                return Err(parse_err(1, "missing header"));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [n, d] = fields.as_slice() else {
                return Err(parse_err(no + 1, "header must be 'count dim'"));
            };
            let n: usize = n
                .parse()
                .map_err(|_| parse_err(no + 1, format!("bad count '{n}'")))?;
            let d: usize = d
                .parse()
                .map_err(|_| parse_err(no + 1, format!("bad dimension '{d}'")))?;
            break (n, d);
        };
        let mut tokens = Vec::with_capacity(n);
        let mut vectors = Array2::zeros((n, d));
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line has a field");
            let i = tokens.len();
            if i == n {
                return Err(parse_err(no + 1, format!("more than {n} rows")));
            }
            let mut k = 0;
            for f in fields {
                if k == d {
                    return Err(parse_err(no + 1, format!("more than {d} values")));
                }
                let v: f64 = f
                    .parse()
                    .map_err(|_| parse_err(no + 1, format!("bad value '{f}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(no + 1, format!("non-finite value '{f}'")));
                }
                vectors[[i, k]] = v;
                k += 1;
            }
            if k != d {
                return Err(parse_err(no + 1, format!("expected {d} values, found {k}")));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() != n {
            return Err(parse_err(
                0,
                format!("header announces {n} rows, found {}", tokens.len()),
            ));
        }
        Self::new(tokens, vectors)
    }

    /// Writes every value with 17 significant digits so that reading back is exact.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (t, v) in self.tokens.iter().zip(self.vectors.rows()) {
            write!(out, "{t}")?;
            for x in v {
                write!(out, " {x:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Reads `source<TAB>target` pairs; blank lines are skipped.
pub fn read_matches<R: BufRead>(input: R) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => {
                pairs.push((s.to_string(), t.to_string()))
            }
            _ => return Err(parse_err(no + 1, "expected 'source<TAB>target'")),
        }
    }
    Ok(pairs)
}

pub fn write_matches<W: Write>(pairs: &[(String, String)], mut out: W) -> Result<()> {
    for (s, t) in pairs {
        writeln!(out, "{s}\t{t}")?;
    }
    Ok(())
}

/// Row indices of every pair; source tokens must be unique.
pub fn resolve_matches(
    pairs: &[(String, String)],
    src: &EmbeddingFile,
    tgt: &EmbeddingFile,
) -> Result<Vec<(usize, usize)>> {
    let mut seen = vec![false; src.len()];
    pairs
        .iter()
        .map(|(s, t)| {
            let i = src
                .index_of(s)
                .ok_or_else(|| Error::IndexOutOfRange(format!("unknown source token '{s}'")))?;
            let j = tgt
                .index_of(t)
                .ok_or_else(|| Error::IndexOutOfRange(format!("unknown target token '{t}'")))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate source token '{s}'"
                )));
            }
            Ok((i, j))
        })
        .collect()
}
