//! Checkpoint files: a text header (format version, configuration echo,
//! parameter manifest) followed by little-endian `f64` payloads in manifest
//! order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "pga-grasp checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Configuration echo as `(key, value)` pairs.
    pub config: Vec<(String, String)>,
    pub params: ParamStore,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{MAGIC}")?;
    for (k, v) in &ckpt.config {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::Format(format!("config entry {k:?} cannot be stored in a header line")));
        }
        writeln!(out, "config {k} = {v}")?;
    }
    for (name, t) in ckpt.params.names().iter().zip(ckpt.params.tensors()) {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "param {name} {}", dims.join("x"))?;
    }
    writeln!(out, "end")?;
    for t in ckpt.params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<std::fs::File>| -> Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("checkpoint header ended early".into()));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic line)".into()));
    }
    let mut config = Vec::new();
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let l = next_line(&mut reader)?;
        if l == "end" {
            break;
        }
        if let Some(rest) = l.strip_prefix("config ") {
            let (k, v) = rest.split_once(" = ").ok_or_else(|| Error::Format(format!("bad config line {l:?}")))?;
            config.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = l.strip_prefix("param ") {
            let (name, dims) = rest.rsplit_once(' ').ok_or_else(|| Error::Format(format!("bad param line {l:?}")))?;
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| Error::Format(format!("bad shape in {l:?}"))))
                .collect::<Result<Vec<_>>>()?;
            manifest.push((name.to_string(), shape));
        } else {
            return Err(Error::Format(format!("unexpected header line {l:?}")));
        }
    }
    let mut params = ParamStore::new();
    let mut buf = [0u8; 8];
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            reader.read_exact(&mut buf).map_err(|_| Error::Format(format!("payload truncated in {name}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        params.push(name, Tensor::new(shape, data)?);
    }
    if reader.read(&mut buf)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(Checkpoint { config, params })
}
