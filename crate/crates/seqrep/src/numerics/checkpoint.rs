//! Self-describing parameter checkpoints.
//!
//! A checkpoint is a plain-text file: a header naming the model kind,
//! free-form metadata, then one block per tensor with its shape and the raw
//! IEEE-754 bit patterns of its entries as hex words. Writing bits rather
//! than decimals makes the round trip bit-exact by construction.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "seqrep-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Checkpoint {
        Checkpoint {
            kind: kind.into(),
            meta: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Invalid(format!("checkpoint missing meta key {key}")))?
            .parse()
            .map_err(|_| Error::Invalid(format!("checkpoint meta {key} is not an integer")))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("checkpoint missing tensor {name}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind {}", self.kind);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "tensor {name} {} {}", t.rank(), dims.join(" "));
            for chunk in t.data().chunks(8) {
                let words: Vec<String> =
                    chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                let _ = writeln!(out, "{}", words.join(" "));
            }
        }
        let _ = writeln!(out, "end");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(text: &str, source: &str) -> Result<Checkpoint> {
        let fail = |line: usize, msg: &str| Error::Parse {
            path: source.to_string(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (n, first) = lines
            .next()
            .ok_or_else(|| fail(1, "empty checkpoint"))?;
        if first.trim() != MAGIC {
            return Err(fail(n + 1, "bad magic line"));
        }
        let mut ckpt = Checkpoint::new("");
        let mut saw_end = false;
        while let Some((n, line)) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("kind") => {
                    ckpt.kind = parts.collect::<Vec<_>>().join(" ");
                }
                Some("meta") => {
                    let key = parts
                        .next()
                        .ok_or_else(|| fail(n + 1, "meta needs a key"))?;
                    let value = parts.collect::<Vec<_>>().join(" ");
                    ckpt.meta.insert(key.to_string(), value);
                }
                Some("tensor") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| fail(n + 1, "tensor needs a name"))?
                        .to_string();
                    let rank: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail(n + 1, "tensor needs a rank"))?;
                    let mut shape = Vec::with_capacity(rank);
                    for _ in 0..rank {
                        let d: usize = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| fail(n + 1, "bad tensor dims"))?;
                        shape.push(d);
                    }
                    let count: usize = shape.iter().product();
                    let mut data = Vec::with_capacity(count);
                    while data.len() < count {
                        let (dn, dline) = lines
                            .next()
                            .ok_or_else(|| fail(n + 1, "truncated tensor data"))?;
                        for word in dline.split_whitespace() {
                            let bits = u64::from_str_radix(word, 16)
                                .map_err(|_| fail(dn + 1, "bad hex word"))?;
                            data.push(f64::from_bits(bits));
                        }
                    }
                    if data.len() != count {
                        return Err(fail(n + 1, "tensor data length mismatch"));
                    }
                    ckpt.tensors.insert(name, Tensor::raw(shape, data));
                }
                Some("end") => {
                    saw_end = true;
                    break;
                }
                _ => return Err(fail(n + 1, "unrecognized directive")),
            }
        }
        if !saw_end {
            return Err(fail(0, "missing end marker"));
        }
        if ckpt.kind.is_empty() {
            return Err(fail(0, "missing kind"));
        }
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Checkpoint::from_text(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bit_exactly() {
        let mut ckpt = Checkpoint::new("demo");
        ckpt.set_meta("m", 4);
        ckpt.set_meta("note", "two words");
        // Values chosen to stress the decimal-unfriendly corners.
        let t = Tensor::from_vec(
            &[2, 3],
            vec![0.1, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -2.5e-308],
        )
        .unwrap();
        ckpt.insert("w", t.clone());
        let text = ckpt.to_text();
        let back = Checkpoint::from_text(&text, "mem").unwrap();
        assert_eq!(back.kind, "demo");
        assert_eq!(back.meta_usize("m").unwrap(), 4);
        assert_eq!(back.meta["note"], "two words");
        let w = back.tensor("w").unwrap();
        assert_eq!(w.shape(), t.shape());
        for (a, b) in w.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reports_parse_errors_with_line_numbers() {
        let text = "seqrep-checkpoint v1\nkind x\ntensor w 1 2\nzzzz zzzz\nend\n";
        let err = Checkpoint::from_text(text, "bad.ckpt").unwrap_err().to_string();
        assert!(err.contains("bad.ckpt:4"), "{err}");
    }

    #[test]
    fn rejects_wrong_magic() {
        assert!(Checkpoint::from_text("nope\n", "m").is_err());
    }
}
