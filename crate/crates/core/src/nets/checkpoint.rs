use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NetError;

const MAGIC: &[u8; 4] = b"LCK1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// One named tensor in an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named-tensor archive: a manifest of groups and entry shapes followed by
/// raw f32 payloads in entry order. Deterministic byte layout; saving a
/// loaded snapshot reproduces the file exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub version: u32,
    pub step: u64,
    pub alpha_log: f64,
    /// Group name (extractor, actor, critics, targets, optimizer) to the
    /// entry names it owns, in entry order.
    pub groups: BTreeMap<String, Vec<String>>,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    step: u64,
    alpha_log: f64,
    groups: BTreeMap<String, Vec<String>>,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

impl Snapshot {
    pub fn entry(&self, name: &str) -> Option<&SnapshotEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            version: self.version,
            step: self.step,
            alpha_log: self.alpha_log,
            groups: self.groups.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                })
                .collect(),
        };
        let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
        let payload: usize = self.entries.iter().map(|e| e.data.len() * 4).sum();
        let mut out = Vec::with_capacity(8 + manifest.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for e in &self.entries {
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Snapshot, NetError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(NetError::MalformedCheckpoint("bad magic"));
        }
        let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() < mlen {
            return Err(NetError::MalformedCheckpoint("truncated manifest"));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..mlen])
            .map_err(|_| NetError::MalformedCheckpoint("unreadable manifest"))?;
        let mut at = mlen;
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for me in manifest.entries {
            let n: usize = me.shape.iter().product();
            let end = at + n * 4;
            if body.len() < end {
                return Err(NetError::MalformedCheckpoint("truncated payload"));
            }
            let data = body[at..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push(SnapshotEntry {
                name: me.name,
                shape: me.shape,
                data,
            });
            at = end;
        }
        if at != body.len() {
            return Err(NetError::MalformedCheckpoint("trailing bytes"));
        }
        Ok(Snapshot {
            version: manifest.version,
            step: manifest.step,
            alpha_log: manifest.alpha_log,
            groups: manifest.groups,
            entries,
        })
    }
}

pub fn save_snapshot(path: &Path, snapshot: &Snapshot) -> Result<(), NetError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&snapshot.to_bytes())?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, NetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes)
}
