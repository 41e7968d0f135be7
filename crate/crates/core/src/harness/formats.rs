//! On-disk records. Clouds are little-endian binary; grasps are one text
//! line each with labeled fields.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::hand::Grasp;

pub const CLOUD_MAGIC: &[u8; 8] = b"PGACLD01";

/// A labeled point cloud in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudRecord {
    pub label: String,
    pub points: Vec<Vector3<f64>>,
}

impl CloudRecord {
    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len().max(1) as f64
    }

    /// Layout: magic, `N: u64`, label length `u64`, label bytes, `3N` f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.label.len() + 24 * self.points.len());
        out.extend_from_slice(CLOUD_MAGIC);
        out.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.label.len() as u64).to_le_bytes());
        out.extend_from_slice(self.label.as_bytes());
        for p in &self.points {
            for v in p.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("cloud record: {m}"));
        if bytes.len() < 24 || &bytes[..8] != CLOUD_MAGIC {
            return Err(bad("bad magic"));
        }
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let n = usize::try_from(word(8)).map_err(|_| bad("point count overflows"))?;
        let l = usize::try_from(word(16)).map_err(|_| bad("label length overflows"))?;
        let body = 24usize.checked_add(l).ok_or_else(|| bad("label length overflows"))?;
        let expected = n.checked_mul(24).and_then(|v| v.checked_add(body)).ok_or_else(|| bad("size overflows"))?;
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let label = String::from_utf8(bytes[24..body].to_vec()).map_err(|_| bad("label is not UTF-8"))?;
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let points = (0..n).map(|i| {
            let at = body + 24 * i;
            Vector3::new(f(at), f(at + 8), f(at + 16))
        });
        Ok(Self { label, points: points.collect() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// A grasp with optional metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspRecord {
    pub grasp: Grasp,
    pub seed: Option<u64>,
    pub phys_loss: Option<f64>,
    pub success: Option<bool>,
}

impl GraspRecord {
    pub fn new(grasp: Grasp) -> Self {
        Self { grasp, seed: None, phys_loss: None, success: None }
    }

    /// `r=… p=… q=… [seed=…] [lphys=…] [success=0|1]`; floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_line(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = format!("r={} p={} q={}", join(&self.grasp.r), join(&self.grasp.p), join(&self.grasp.q));
        if let Some(seed) = self.seed {
            write!(s, " seed={seed}").unwrap();
        }
        if let Some(l) = self.phys_loss {
            write!(s, " lphys={l:?}").unwrap();
        }
        if let Some(ok) = self.success {
            write!(s, " success={}", u8::from(ok)).unwrap();
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("grasp record: {m}"));
        let floats = |v: &str| -> Result<Vec<f64>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| x.parse::<f64>().map_err(|_| bad(format!("bad number `{x}`")))).collect()
        };
        let (mut r, mut p, mut q) = (None, None, None);
        let mut rec = GraspRecord::new(Grasp::new([0.0; 6], [0.0; 3], Vec::new()));
        for field in line.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("field `{field}` has no `=`")))?;
            match k {
                "r" => r = Some(floats(v)?),
                "p" => p = Some(floats(v)?),
                "q" => q = Some(floats(v)?),
                "seed" => rec.seed = Some(v.parse().map_err(|_| bad(format!("bad seed `{v}`")))?),
                "lphys" => rec.phys_loss = Some(v.parse().map_err(|_| bad(format!("bad lphys `{v}`")))?),
                "success" => {
                    rec.success = Some(match v {
                        "1" => true,
                        "0" => false,
                        _ => return Err(bad(format!("bad success flag `{v}`"))),
                    })
                }
                _ => return Err(bad(format!("unknown field `{k}`"))),
            }
        }
        let r = r.ok_or_else(|| bad("missing r".into()))?;
        let p = p.ok_or_else(|| bad("missing p".into()))?;
        let q = q.ok_or_else(|| bad("missing q".into()))?;
        if r.len() != 6 || p.len() != 3 {
            return Err(bad(format!("r has {} and p {} entries", r.len(), p.len())));
        }
        rec.grasp = Grasp::new(std::array::from_fn(|i| r[i]), [p[0], p[1], p[2]], q);
        Ok(rec)
    }
}

/// Writes records one per line under an optional comment header.
pub fn write_grasps(path: &Path, header: &str, records: &[GraspRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header.lines() {
        writeln!(f, "# {line}")?;
    }
    for r in records {
        writeln!(f, "{}", r.to_line())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads records, skipping blank and `#` lines. All records must share one
/// joint count.
pub fn read_grasps(path: &Path) -> Result<Vec<GraspRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out: Vec<GraspRecord> = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let rec = GraspRecord::parse_line(t).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if let Some(first) = out.first() {
            if first.grasp.dof() != rec.grasp.dof() {
                return Err(Error::Format(format!("{}:{}: joint count changes", path.display(), i + 1)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cloud_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = CloudRecord {
            label: "sphere r=0.031".into(),
            points: (0..50).map(|_| Vector3::new(rng.gen(), rng.gen::<f64>() * 1e-7, -rng.gen::<f64>())).collect(),
        };
        let bytes = rec.to_bytes();
        assert_eq!(CloudRecord::from_bytes(&bytes).unwrap(), rec);
        assert!(CloudRecord::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut tampered = bytes.clone();
        tampered[0] = b'X';
        assert!(CloudRecord::from_bytes(&tampered).is_err());
    }

    #[test]
    fn grasp_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let recs: Vec<GraspRecord> = (0..20)
            .map(|i| GraspRecord {
                grasp: Grasp::new(
                    std::array::from_fn(|_| rng.gen::<f64>() - 0.5),
                    [rng.gen(), 1e-300, -rng.gen::<f64>()],
                    (0..4).map(|_| rng.gen::<f64>() * 1.5).collect(),
                ),
                seed: (i % 2 == 0).then_some(i as u64),
                phys_loss: (i % 3 == 0).then(|| rng.gen()),
                success: (i % 4 == 0).then_some(i % 8 == 0),
            })
            .collect();
        write_grasps(&path, "test file\nsecond line", &recs).unwrap();
        assert_eq!(read_grasps(&path).unwrap(), recs);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(GraspRecord::parse_line("r=1,0,0,0,1,0 p=0,0,0").is_err());
        assert!(GraspRecord::parse_line("r=1,0,0,0,1 p=0,0,0 q=").is_err());
        assert!(GraspRecord::parse_line("r=1,0,0,0,1,0 p=0,0,0 q= foo=1").is_err());
        assert!(GraspRecord::parse_line("r=1,0,0,0,1,0 p=0,0,0 q= success=2").is_err());
        let empty_q = GraspRecord::parse_line("r=1,0,0,0,1,0 p=0,0,0 q=").unwrap();
        assert_eq!(empty_q.grasp.dof(), 0);
    }
}
