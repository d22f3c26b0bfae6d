//! Checkpoints: a JSON manifest next to a raw little-endian `f32` payload.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{sha256_hex, write_atomic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest<M> {
    #[serde(flatten)]
    pub meta: M,
    pub param_count: usize,
    pub payload: String,
    pub payload_sha256: String,
}

pub fn manifest_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.json"))
}

pub fn payload_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.f32"))
}

pub fn encode_f32(params: &[f64]) -> Vec<u8> {
    params
        .iter()
        .flat_map(|&p| (p as f32).to_le_bytes())
        .collect()
}

/// Writes `<stem>.f32` and `<stem>.json`; returns the payload digest.
pub fn write<M: Serialize>(dir: &Path, stem: &str, meta: M, params: &[f64]) -> Result<String> {
    let bytes = encode_f32(params);
    let digest = sha256_hex(&bytes);
    write_atomic(&payload_path(dir, stem), &bytes)?;
    let manifest = Manifest {
        meta,
        param_count: params.len(),
        payload: format!("{stem}.f32"),
        payload_sha256: digest.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("serializable");
    json.push(b'\n');
    write_atomic(&manifest_path(dir, stem), &json)?;
    Ok(digest)
}

/// Loads a checkpoint, checking digest and that the payload holds `expected_count` floats
/// (as derived by the caller from the manifest metadata).
pub fn read<M: DeserializeOwned>(
    dir: &Path,
    stem: &str,
    expected_count: impl FnOnce(&M) -> Result<usize>,
) -> Result<(Manifest<M>, Vec<f64>)> {
    let mpath = manifest_path(dir, stem);
    if !mpath.exists() {
        return Err(Error::MissingArtifact(format!(
            "checkpoint manifest {}",
            mpath.display()
        )));
    }
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest<M> = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let bad = |reason: String| Error::Checkpoint {
        path: mpath.clone(),
        reason,
    };

    let expected = expected_count(&manifest.meta)?;
    if manifest.param_count != expected {
        return Err(bad(format!(
            "manifest declares {} parameters, architecture needs {expected}",
            manifest.param_count
        )));
    }
    let ppath = dir.join(&manifest.payload);
    let bytes = std::fs::read(&ppath).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::MissingArtifact(format!("checkpoint payload {}", ppath.display()))
        }
        _ => Error::io(&ppath, e),
    })?;
    if bytes.len() != expected * 4 {
        return Err(bad(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            expected * 4
        )));
    }
    if sha256_hex(&bytes) != manifest.payload_sha256 {
        return Err(bad("payload digest mismatch".into()));
    }
    let params = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((manifest, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    struct Meta {
        n: usize,
    }

    #[test]
    fn roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let params = vec![0.5, -1.25, 3.0];
        let digest = write(dir.path(), "m", Meta { n: 3 }, &params).unwrap();
        let (m, p) = read::<Meta>(dir.path(), "m", |m| Ok(m.n)).unwrap();
        assert_eq!(p, params);
        assert_eq!(m.payload_sha256, digest);
        assert!(matches!(
            read::<Meta>(dir.path(), "m", |_| Ok(4)),
            Err(Error::Checkpoint { .. })
        ));
        assert!(matches!(
            read::<Meta>(dir.path(), "other", |m| Ok(m.n)),
            Err(Error::MissingArtifact(_))
        ));

        std::fs::write(
            payload_path(dir.path(), "m"),
            encode_f32(&[0.5, -1.25, 2.0]),
        )
        .unwrap();
        assert!(matches!(
            read::<Meta>(dir.path(), "m", |m| Ok(m.n)),
            Err(Error::Checkpoint { .. })
        ));
    }
}
