//! Parameter checkpoints.
//!
//! A checkpoint is a UTF-8 text header followed by a flat binary blob:
//!
//! ```text
//! afbc-checkpoint 1
//! float_width 32
//! byte_order little
//! meta <key> <value>            (zero or more)
//! net <name> <w0>,<w1>,...,<wn> (one per network, in blob order)
//! end
//! <blob>
//! ```
//!
//! The blob holds, for every network in header order and every layer in
//! order, the weight matrix row-major with shape `(fan_in, fan_out)` followed
//! by the bias vector, each entry an IEEE-754 binary32 in little-endian byte
//! order. Nothing follows the blob.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::mlp::MlpNet;
use crate::error::{Error, LoadError, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "afbc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: BTreeMap<String, String>,
    pub nets: Vec<(String, MlpNet<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn net(&self, name: &str) -> Option<&MlpNet<T>> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }
}

pub fn encode<T: Scalar>(meta: &BTreeMap<String, String>, nets: &[(&str, &MlpNet<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(out, "float_width 32")?;
    writeln!(out, "byte_order little")?;
    for (k, v) in meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::usage(format!("checkpoint meta entry {k:?} is not header-safe")));
        }
        writeln!(out, "meta {k} {v}")?;
    }
    for (name, net) in nets {
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(Error::usage(format!("checkpoint net name {name:?} is not header-safe")));
        }
        let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
        writeln!(out, "net {name} {}", sizes.join(","))?;
    }
    writeln!(out, "end")?;
    for (_, net) in nets {
        for x in net.to_flat() {
            out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save<T: Scalar>(
    path: &Path,
    meta: &BTreeMap<String, String>,
    nets: &[(&str, &MlpNet<T>)],
) -> Result<()> {
    let bytes = encode(meta, nets)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> std::result::Result<Checkpoint<T>, LoadError> {
    let mut pos = 0usize;
    let mut next_line = || -> std::result::Result<&str, LoadError> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LoadError::Header("unterminated header".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| LoadError::Header("header is not UTF-8".into()))?;
        pos += nl + 1;
        Ok(line)
    };

    let first = next_line()?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(LoadError::Header(format!("bad magic line {first:?}")));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LoadError::Header("missing version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(LoadError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }

    let mut meta = BTreeMap::new();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let line = next_line()?;
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "end" => break,
            "float_width" if rest == "32" => {}
            "byte_order" if rest == "little" => {}
            "float_width" | "byte_order" => {
                return Err(LoadError::Header(format!("unsupported {key} {rest}")));
            }
            "meta" => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            }
            "net" => {
                let (name, sizes) = rest
                    .split_once(' ')
                    .ok_or_else(|| LoadError::Header(format!("bad net line {line:?}")))?;
                let sizes = sizes
                    .split(',')
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| LoadError::Header(format!("bad layer sizes in {line:?}")))?;
                shapes.push((name.to_string(), sizes));
            }
            other => return Err(LoadError::Header(format!("unknown header key {other:?}"))),
        }
    }

    let mut nets = Vec::with_capacity(shapes.len());
    let mut expected_bytes = 0usize;
    let mut built = Vec::new();
    for (name, sizes) in shapes {
        let net = MlpNet::<T>::zeros(&sizes).map_err(|e| LoadError::Header(e.to_string()))?;
        expected_bytes += net.param_count() * 4;
        built.push((name, net));
    }
    let blob = &bytes[pos..];
    if blob.len() != expected_bytes {
        return Err(LoadError::Truncated {
            expected: expected_bytes,
            actual: blob.len(),
        });
    }
    let mut cursor = 0usize;
    for (name, mut net) in built {
        let n = net.param_count();
        let params: Vec<T> = blob[cursor..cursor + 4 * n]
            .chunks_exact(4)
            .map(|c| T::from_f32_lossless(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        cursor += 4 * n;
        net.set_flat(&params).expect("sizes derived from header");
        nets.push((name, net));
    }
    Ok(Checkpoint { meta, nets })
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        source: LoadError::Io(e),
    })?;
    decode(&bytes).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_f32_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = MlpNet::<f32>::new(&[3, 5, 2], &mut rng).unwrap();
        let b = MlpNet::<f32>::new(&[2, 4, 4, 1], &mut rng).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("env".to_string(), "pendulum".to_string());
        let bytes = encode(&meta, &[("actor", &a), ("critic0", &b)]).unwrap();
        let ck: Checkpoint<f32> = decode(&bytes).unwrap();
        assert_eq!(ck.meta, meta);
        assert_eq!(ck.net("actor").unwrap(), &a);
        assert_eq!(ck.net("critic0").unwrap(), &b);
    }

    #[test]
    fn header_is_readable_text() {
        let net = MlpNet::<f64>::zeros(&[1, 2]).unwrap();
        let bytes = encode(&BTreeMap::new(), &[("v", &net)]).unwrap();
        let text = std::str::from_utf8(&bytes[..bytes.len() - 16]).unwrap();
        assert_eq!(text, "afbc-checkpoint 1\nfloat_width 32\nbyte_order little\nnet v 1,2\nend\n");
    }

    #[test]
    fn truncated_blob_is_reported() {
        let net = MlpNet::<f64>::zeros(&[2, 2]).unwrap();
        let bytes = encode(&BTreeMap::new(), &[("v", &net)]).unwrap();
        let err = decode::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, LoadError::Truncated { .. }));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let net = MlpNet::<f64>::zeros(&[2, 2]).unwrap();
        let mut bytes = encode(&BTreeMap::new(), &[("v", &net)]).unwrap();
        bytes[16] = b'9';
        let err = decode::<f64>(&bytes).unwrap_err();
        assert!(matches!(err, LoadError::Version { found: 9, .. }));
    }
}
