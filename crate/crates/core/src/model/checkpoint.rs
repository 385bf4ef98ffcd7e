//! Checkpoint layout:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `EMOADPT\0` |
//! | 4 | format version, u32 LE |
//! | 8 | header length, u64 LE |
//! | n | JSON header: spec, domains, tensor index |
//! | … | tensors as contiguous f32 LE, in index order |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, DomainDescriptor, ModelBundle, ModelError};
use crate::tensor_core::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EMOADPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ArchitectureSpec,
    domains: Vec<DomainDescriptor>,
    tensors: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
}

fn tensor_index<T: Real>(bundle: &ModelBundle<T>) -> Vec<(String, Vec<usize>, Vec<T>)> {
    let mut out: Vec<_> = bundle
        .params()
        .into_iter()
        .map(|(i, t)| (i.name, t.shape().to_vec(), t.data().to_vec()))
        .collect();
    out.extend(
        bundle
            .buffers()
            .into_iter()
            .map(|(name, _, v)| (name, vec![v.len()], v.to_vec())),
    );
    out
}

pub fn save<T: Real>(bundle: &ModelBundle<T>, path: &Path) -> Result<(), ModelError> {
    let index = tensor_index(bundle);
    let header = Header {
        spec: bundle.spec.clone(),
        domains: bundle.descriptors(),
        tensors: index
            .iter()
            .map(|(name, shape, _)| IndexEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let values: usize = index.iter().map(|(_, _, v)| v.len()).sum();
    let mut bytes = Vec::with_capacity(20 + json.len() + 4 * values);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, _, data) in &index {
        for v in data {
            bytes.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load<T: Real>(path: &Path) -> Result<ModelBundle<T>, ModelError> {
    let fail = |message: String| ModelError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
    if bytes.len() < 20 {
        return Err(fail("truncated header".into()));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint (bad magic bytes)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body_start = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[20..body_start]).map_err(|e| fail(format!("bad header: {e}")))?;

    let mut bundle = ModelBundle::<T>::build(header.spec, &header.domains, 0)?;
    let expected = tensor_index(&bundle);
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((name, shape, _), e)| *name != e.name || *shape != e.shape)
    {
        return Err(fail("tensor index does not match the declared architecture".into()));
    }
    let total: usize = expected.iter().map(|(_, _, v)| v.len()).sum();
    let body = &bytes[body_start..];
    if body.len() < 4 * total {
        return Err(fail(format!("truncated: {} of {} parameter bytes", body.len(), 4 * total)));
    }
    if body.len() > 4 * total {
        return Err(fail(format!("{} trailing bytes", body.len() - 4 * total)));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64));
    for (_, t) in bundle.params_mut() {
        for v in t.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    for buf in bundle.buffers_mut() {
        for v in buf.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::Tensor;

    fn trained_bundle() -> ModelBundle<f32> {
        let mut m = ModelBundle::build(
            ArchitectureSpec::tiny(),
            &[DomainDescriptor::new("x", 3), DomainDescriptor::new("y", 2)],
            9,
        )
        .unwrap();
        for (i, (_, t)) in m.params_mut().into_iter().enumerate() {
            t.data_mut()[0] += 0.01 * i as f32;
        }
        m.domains.get_mut("y").unwrap().bns[3].running_var[1] = 2.5;
        m
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let m = trained_bundle();
        save(&m, &a).unwrap();
        let loaded: ModelBundle<f32> = load(&a).unwrap();
        assert_eq!(loaded, m);
        save(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let x = Tensor::from_fn(vec![2, 1, 8, 10], |i| (i as f32 * 0.37).sin());
        assert_eq!(
            m.forward("x", &x, &[10, 6]).unwrap().data(),
            loaded.forward("x", &x, &[10, 6]).unwrap().data()
        );
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save(&trained_bundle(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load::<f32>(&p), Err(ModelError::Checkpoint { message, .. }) if message.contains("truncated")));
        fs::write(&p, &bytes[..30]).unwrap();
        assert!(load::<f32>(&p).is_err());
        let mut other = bytes.clone();
        other[8] = 7;
        fs::write(&p, &other).unwrap();
        assert!(matches!(load::<f32>(&p), Err(ModelError::Version { found: 7, .. })));
        fs::write(&p, b"hello").unwrap();
        assert!(load::<f32>(&p).is_err());
    }
}
