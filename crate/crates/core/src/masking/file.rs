use std::fs;
use std::path::Path;

use crate::codebook::TokenId;
use crate::error::{Error, Result};
use crate::sampler::ImageRole;

use super::sequence::TokenSequence;
use super::strategy::TrainingPair;

pub const TOKEN_FILE_MAGIC: &[u8; 4] = b"TFTS";
const PLAIN_VERSION: u32 = 1;
const TARGET_VERSION: u32 = 2;
const KIND: &str = "token file";

/// One sequence, optionally with masking targets. When targets are present
/// `ids` holds the corrupted input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRecord {
    pub image_roles: Vec<ImageRole>,
    pub ids: Vec<TokenId>,
    pub targets: Option<Vec<(usize, TokenId)>>,
}

impl TokenRecord {
    pub fn plain(seq: &TokenSequence) -> Self {
        Self {
            image_roles: seq.image_roles().to_vec(),
            ids: seq.ids().to_vec(),
            targets: None,
        }
    }

    pub fn masked(seq: &TokenSequence, pair: &TrainingPair) -> Self {
        Self {
            image_roles: seq.image_roles().to_vec(),
            ids: pair.input.clone(),
            targets: Some(pair.targets.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenFile {
    /// Content vocabulary; the file header stores `N + 2`.
    pub vocab: u32,
    pub q: usize,
    pub k: usize,
    pub records: Vec<TokenRecord>,
}

impl TokenFile {
    pub fn sequences(&self) -> Result<Vec<TokenSequence>> {
        self.records
            .iter()
            .map(|r| TokenSequence::from_flat(&r.image_roles, r.ids.clone(), self.vocab, self.q, self.k))
            .collect()
    }
}

fn encode_role(role: ImageRole) -> (u8, u32) {
    match role {
        ImageRole::Context(i) => (0, i as u32),
        ImageRole::Query => (1, 0),
        ImageRole::Output => (2, 0),
    }
}

fn put(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Layout, all integers little-endian u32: header `TFTS, version, N + 2, q,
/// k, ⟨i-END⟩, ⟨c-END⟩`; then per record the image count, one
/// `(u8 role tag, u32 context index)` pair per image, the id count and the
/// ids. Version 2 appends to each record a target count and
/// `(position, true id)` pairs.
pub fn write_token_file(path: &Path, file: &TokenFile) -> Result<()> {
    let with_targets = file.records.iter().any(|r| r.targets.is_some());
    if with_targets && file.records.iter().any(|r| r.targets.is_none()) {
        return Err(Error::format(KIND, "records must all carry targets or none"));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(TOKEN_FILE_MAGIC);
    for v in [
        if with_targets { TARGET_VERSION } else { PLAIN_VERSION },
        file.vocab + 2,
        file.q as u32,
        file.k as u32,
        file.vocab,
        file.vocab + 1,
    ] {
        put(&mut buf, v);
    }
    for r in &file.records {
        TokenSequence::from_flat(&r.image_roles, r.ids.clone(), file.vocab, file.q, file.k)?;
        put(&mut buf, r.image_roles.len() as u32);
        for role in &r.image_roles {
            let (tag, idx) = encode_role(*role);
            buf.push(tag);
            put(&mut buf, idx);
        }
        put(&mut buf, r.ids.len() as u32);
        for id in &r.ids {
            put(&mut buf, *id);
        }
        if let Some(targets) = &r.targets {
            put(&mut buf, targets.len() as u32);
            for &(p, id) in targets {
                put(&mut buf, p as u32);
                put(&mut buf, id);
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(KIND, format!("truncated at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

pub fn read_token_file(path: &Path) -> Result<TokenFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(4).ok() != Some(TOKEN_FILE_MAGIC.as_slice()) {
        return Err(Error::format(KIND, "missing TFTS header"));
    }
    let version = c.u32()?;
    if version != PLAIN_VERSION && version != TARGET_VERSION {
        return Err(Error::format(KIND, format!("unsupported version {version}")));
    }
    let (total, q, k, i_end, c_end) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    if total < 3 || i_end != total - 2 || c_end != total - 1 {
        return Err(Error::format(KIND, format!("inconsistent special ids {i_end}/{c_end} for {total} tokens")));
    }
    let vocab = total - 2;
    let mut records = Vec::new();
    while !c.done() {
        let n_images = c.u32()? as usize;
        let mut image_roles = Vec::with_capacity(n_images.min(1024));
        for _ in 0..n_images {
            let tag = c.take(1)?[0];
            let idx = c.u32()? as usize;
            image_roles.push(match tag {
                0 => ImageRole::Context(idx),
                1 => ImageRole::Query,
                2 => ImageRole::Output,
                other => return Err(Error::format(KIND, format!("unknown role tag {other}"))),
            });
        }
        let n_ids = c.u32()? as usize;
        let ids = (0..n_ids).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let targets = if version == TARGET_VERSION {
            let n = c.u32()? as usize;
            Some((0..n).map(|_| Ok((c.u32()? as usize, c.u32()?))).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        TokenSequence::from_flat(&image_roles, ids.clone(), vocab, q as usize, k as usize)
            .map_err(|e| Error::format(KIND, format!("record {}: {e}", records.len())))?;
        records.push(TokenRecord {
            image_roles,
            ids,
            targets,
        });
    }
    Ok(TokenFile {
        vocab,
        q: q as usize,
        k: k as usize,
        records,
    })
}
