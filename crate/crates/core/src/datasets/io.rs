//! On-disk dataset format.
//!
//! The payload is a headerless little-endian file of columns, each covering
//! all `n` rows: `s` (n x state_dim f32), `a` (n x action_dim f32), `r`
//! (n f32), `s'` (n x state_dim f32), `done` (n u8), `tag` (n u8), and, when
//! present, return-to-go (n f32). A TOML manifest sits next to it at
//! `<payload>.manifest.toml` and carries the shape, counts and a 64-bit
//! FNV-1a checksum of the payload bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::collect::BlockMeta;
use super::{Dataset, Tag, Tier, Transition};
use crate::envlab::EnvId;
use crate::error::{Error, LoadError, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub recipe: String,
    pub env: EnvId,
    pub seed: u64,
    pub total: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub has_returns_to_go: bool,
    /// Hex-encoded FNV-1a 64 of the payload.
    pub checksum: String,
    pub counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<BlockMeta>,
}

impl DatasetManifest {
    /// Builds a manifest that matches `data` exactly.
    pub fn describe(data: &Dataset, recipe: &str, env: EnvId, seed: u64) -> Result<Self> {
        data.validate()?;
        Ok(DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            recipe: recipe.to_string(),
            env,
            seed,
            total: data.len(),
            state_dim: data.state_dim(),
            action_dim: data.action_dim(),
            has_returns_to_go: data.has_returns(),
            checksum: format!("{:016x}", fnv1a64(&encode_payload(data))),
            counts: tally(data),
            blocks: Vec::new(),
        })
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.counts.get(tag.as_str()).copied().unwrap_or(0)
    }

    fn checksum_value(&self) -> std::result::Result<u64, LoadError> {
        u64::from_str_radix(&self.checksum, 16)
            .map_err(|_| LoadError::Header(format!("checksum {:?} is not a hex u64", self.checksum)))
    }

    fn payload_len(&self) -> usize {
        let n = self.total;
        let floats = n * (2 * self.state_dim + self.action_dim + 1) + if self.has_returns_to_go { n } else { 0 };
        floats * 4 + 2 * n
    }
}

fn tally(data: &Dataset) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = Tier::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
    for t in data.tags() {
        *counts.entry(t.as_str().to_string()).or_default() += 1;
    }
    counts
}

pub fn manifest_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

fn encode_payload(data: &Dataset) -> Vec<u8> {
    let n = data.len();
    let mut out = Vec::new();
    let mut put = |xs: &mut dyn Iterator<Item = f32>| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(&mut (0..n).flat_map(|i| data.state(i).iter().copied()));
    put(&mut (0..n).flat_map(|i| data.action(i).iter().copied()));
    put(&mut (0..n).map(|i| data.reward(i)));
    put(&mut (0..n).flat_map(|i| data.next_state(i).iter().copied()));
    out.extend((0..n).map(|i| u8::from(data.done(i))));
    out.extend(data.tags().iter().map(|t| t.code()));
    if data.has_returns() {
        for i in 0..n {
            out.extend_from_slice(&data.return_to_go(i).unwrap_or_default().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn f32s(&mut self, n: usize) -> Vec<f32> {
        let out = self.bytes[self.pos..self.pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        self.pos += 4 * n;
        out
    }

    fn u8s(&mut self, n: usize) -> &[u8] {
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        out
    }
}

fn decode_payload(bytes: &[u8], m: &DatasetManifest) -> Result<Dataset> {
    let (n, sd, ad) = (m.total, m.state_dim, m.action_dim);
    let mut r = Reader { bytes, pos: 0 };
    let s = r.f32s(n * sd);
    let a = r.f32s(n * ad);
    let rew = r.f32s(n);
    let s2 = r.f32s(n * sd);
    let done = r.u8s(n).to_vec();
    let tags = r.u8s(n).to_vec();
    let rtg = m.has_returns_to_go.then(|| r.f32s(n));
    let mut out = Dataset::new(sd, ad, m.has_returns_to_go);
    for i in 0..n {
        let tag = Tag::from_code(tags[i]).ok_or_else(|| Error::data(format!("row {i} has unknown tag code {}", tags[i])))?;
        let t = Transition {
            s: s[i * sd..(i + 1) * sd].to_vec(),
            a: a[i * ad..(i + 1) * ad].to_vec(),
            r: rew[i],
            s_next: s2[i * sd..(i + 1) * sd].to_vec(),
            done: done[i] != 0,
        };
        out.push(&t, tag, rtg.as_ref().map(|g| g[i]))?;
    }
    Ok(out)
}

/// Writes the payload and its manifest. The manifest's shape, counts and
/// checksum must describe `data`.
pub fn save(data: &Dataset, manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let fresh = DatasetManifest::describe(data, &manifest.recipe, manifest.env, manifest.seed)?;
    if fresh.total != manifest.total
        || fresh.counts != manifest.counts
        || fresh.checksum != manifest.checksum
        || fresh.state_dim != manifest.state_dim
        || fresh.action_dim != manifest.action_dim
        || fresh.has_returns_to_go != manifest.has_returns_to_go
    {
        return Err(Error::data("manifest does not describe the dataset being saved"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_payload(data))?;
    let text = toml::to_string(manifest).map_err(|e| Error::data(format!("cannot serialize manifest: {e}")))?;
    fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Dataset, DatasetManifest)> {
    let wrap = |source: LoadError| Error::Load {
        path: path.to_path_buf(),
        source,
    };
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| wrap(LoadError::Io(e)))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| wrap(LoadError::Header(e.to_string())))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(wrap(LoadError::Version {
            found: manifest.format_version,
            supported: DATASET_FORMAT_VERSION,
        }));
    }
    let bytes = fs::read(path).map_err(|e| wrap(LoadError::Io(e)))?;
    let expected = manifest.payload_len();
    if bytes.len() != expected {
        return Err(wrap(LoadError::Truncated {
            expected,
            actual: bytes.len(),
        }));
    }
    let want = manifest.checksum_value().map_err(wrap)?;
    let got = fnv1a64(&bytes);
    if want != got {
        return Err(wrap(LoadError::Checksum {
            expected: want,
            actual: got,
        }));
    }
    let data = decode_payload(&bytes, &manifest)?;
    data.validate()?;
    if tally(&data) != manifest.counts {
        return Err(Error::data(format!(
            "{}: manifest counts {:?} disagree with payload",
            path.display(),
            manifest.counts
        )));
    }
    Ok((data, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let mut d = Dataset::new(2, 1, true);
        for i in 0..5 {
            let x = i as f32 * 0.1 + 1e-7;
            let t = Transition {
                s: vec![x, -x],
                a: vec![0.5 - x],
                r: x * 3.0,
                s_next: vec![x + 0.1, f32::MIN_POSITIVE],
                done: i == 4,
            };
            let tag = if i < 2 { Tag::Tier(Tier::Expert) } else { Tag::Random };
            d.push(&t, tag, Some(x * 7.0)).unwrap();
        }
        d
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let d = sample();
        let m = DatasetManifest::describe(&d, "test", EnvId::MountainCar, 9).unwrap();
        save(&d, &m, &path).unwrap();
        let (back, m2) = load(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(m2, m);
        assert_eq!(m2.count(Tag::Random), 3);
        assert_eq!(m2.count(Tag::Tier(Tier::Expert)), 2);
    }

    #[test]
    fn payload_size_matches_layout() {
        let d = sample();
        let m = DatasetManifest::describe(&d, "test", EnvId::MountainCar, 0).unwrap();
        assert_eq!(encode_payload(&d).len(), m.payload_len());
        assert_eq!(m.payload_len(), 5 * (2 + 1 + 1 + 2 + 1) * 4 + 10);
    }

    #[test]
    fn corruption_truncation_and_version_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let d = sample();
        let m = DatasetManifest::describe(&d, "test", EnvId::MountainCar, 0).unwrap();
        save(&d, &m, &path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, Error::Load { source: LoadError::Checksum { .. }, .. }), "{err}");

        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, Error::Load { source: LoadError::Truncated { .. }, .. }), "{err}");

        let text = fs::read_to_string(manifest_path(&path)).unwrap();
        fs::write(manifest_path(&path), text.replace("format_version = 1", "format_version = 7")).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, Error::Load { source: LoadError::Version { found: 7, .. }, .. }), "{err}");
    }

    #[test]
    fn save_rejects_stale_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample();
        let mut m = DatasetManifest::describe(&d, "test", EnvId::MountainCar, 0).unwrap();
        m.total += 1;
        assert!(save(&d, &m, &dir.path().join("x")).is_err());
    }
}
