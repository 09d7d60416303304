//! On-disk model state: a text manifest plus one binary blob.
//!
//! A checkpoint is a directory holding
//!
//! * `manifest.txt`: a format line, `meta <key> <value>` lines for
//!   hyperparameters and counters, then one `tensor <name> <d0>x<d1>...` line
//!   per tensor;
//! * `tensors.bin`: every tensor's values as little-endian `f64`, concatenated
//!   in manifest order.
//!
//! Floats in the manifest use Rust's shortest round-trip formatting, so a
//! save/load cycle is bitwise lossless.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::adam::AdamState;
use super::network::Parameterized;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TENSOR_FILE: &str = "tensors.bin";
const FORMAT_LINE: &str = "liftgan-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.is_empty() && !key.contains(char::is_whitespace) && !value.contains('\n'),
            "invalid manifest entry {key:?}"
        );
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::config(format!("checkpoint is missing '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::config(format!("checkpoint entry '{key}' has bad value '{raw}'")))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape");
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    /// Appends every parameter and buffer of `net` under `prefix.`.
    pub fn push_params<P: Parameterized + ?Sized>(&mut self, prefix: &str, net: &mut P) {
        net.visit_params(&mut |name, shape, v, _| {
            self.push_tensor(format!("{prefix}.{name}"), shape.to_vec(), v.to_vec());
        });
        net.visit_buffers(&mut |name, shape, v| {
            self.push_tensor(format!("{prefix}.{name}"), shape.to_vec(), v.to_vec());
        });
    }

    /// Copies tensors stored under `prefix.` back into `net`; every tensor of
    /// `net` must be present with a matching shape.
    pub fn restore_params<P: Parameterized + ?Sized>(&self, prefix: &str, net: &mut P) -> Result<()> {
        let mut err = None;
        let mut copy = |name: &str, shape: &[usize], v: &mut [f64]| {
            let key = format!("{prefix}.{name}");
            match self.tensor(&key) {
                Some(t) if t.shape == shape => v.copy_from_slice(&t.data),
                Some(t) => {
                    err.get_or_insert(Error::shape(format!(
                        "checkpoint tensor {key} has shape {:?}, network expects {shape:?}",
                        t.shape
                    )));
                }
                None => {
                    err.get_or_insert(Error::config(format!("checkpoint has no tensor {key}")));
                }
            }
        };
        net.visit_params(&mut |name, shape, v, _| copy(name, shape, v));
        net.visit_buffers(&mut |name, shape, v| copy(name, shape, v));
        err.map_or(Ok(()), Err)
    }

    pub fn push_adam<P: Parameterized + ?Sized>(&mut self, prefix: &str, adam: &AdamState, net: &mut P) {
        self.set_meta(&format!("{prefix}.step"), adam.step);
        let mut names = Vec::new();
        net.visit_params(&mut |name, shape, _, _| names.push((name.to_string(), shape.to_vec())));
        for (i, (name, shape)) in names.into_iter().enumerate() {
            self.push_tensor(
                format!("{prefix}.m.{name}"),
                shape.clone(),
                adam.first_moment[i].clone(),
            );
            self.push_tensor(format!("{prefix}.v.{name}"), shape, adam.second_moment[i].clone());
        }
    }

    pub fn restore_adam<P: Parameterized + ?Sized>(
        &self,
        prefix: &str,
        adam: &mut AdamState,
        net: &mut P,
    ) -> Result<()> {
        adam.step = self.meta_parsed(&format!("{prefix}.step"))?;
        let mut names = Vec::new();
        net.visit_params(&mut |name, _, v, _| names.push((name.to_string(), v.len())));
        for (i, (name, len)) in names.into_iter().enumerate() {
            for (kind, dst) in [("m", &mut adam.first_moment[i]), ("v", &mut adam.second_moment[i])] {
                let key = format!("{prefix}.{kind}.{name}");
                let t = self
                    .tensor(&key)
                    .ok_or_else(|| Error::config(format!("checkpoint has no tensor {key}")))?;
                if t.data.len() != len {
                    return Err(Error::shape(format!("optimizer tensor {key} has wrong length")));
                }
                dst.copy_from_slice(&t.data);
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(FORMAT_LINE);
        manifest.push('\n');
        for (k, v) in &self.meta {
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("tensor {} {}\n", t.name, dims.join("x")));
        }
        fs::write(dir.join(MANIFEST_FILE), manifest)?;

        let mut out = BufWriter::new(fs::File::create(dir.join(TENSOR_FILE))?);
        for t in &self.tensors {
            for v in &t.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)?;
        let source_name = manifest_path.display().to_string();
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.clone(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == FORMAT_LINE => {}
            _ => return Err(parse_err(1, format!("expected '{FORMAT_LINE}'"))),
        }
        let mut ck = Checkpoint::default();
        let mut shapes = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("meta"), Some(k), Some(v)) => ck.meta.push((k.to_string(), v.to_string())),
                (Some("tensor"), Some(name), Some(dims)) => {
                    let shape = dims
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(lineno, format!("bad shape '{dims}'")))?;
                    shapes.push((name.to_string(), shape));
                }
                _ => return Err(parse_err(lineno, format!("unrecognized line '{line}'"))),
            }
        }
        let bytes = fs::read(dir.join(TENSOR_FILE))?;
        let total: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if bytes.len() != total * 8 {
            return Err(Error::shape(format!(
                "{TENSOR_FILE} holds {} bytes, manifest describes {}",
                bytes.len(),
                total * 8
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for (name, shape) in shapes {
            let n = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            ck.tensors.push(Tensor { name, shape, data });
        }
        Ok(ck)
    }
}
