//! Append-only binary embedding store and the scorer that fronts it.
//!
//! Layout (little-endian): `"CPIE"`, version u32, dim u32, count u64, then
//! `count` records of key length u16, UTF-8 key, `dim` f32 values. The
//! sidecar `<path>.idx` maps keys to record offsets; it is rebuilt by a
//! scan when missing or stale. Bytes past the last counted record are the
//! remains of an interrupted append and are truncated on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::{Embedding, Scorer, ScoringError};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CPIE";
const INDEX_MAGIC: &[u8; 4] = b"CPIX";
const HEADER_LEN: u64 = 20;
const COUNT_OFFSET: u64 = 12;

pub struct EmbeddingStore {
    path: PathBuf,
    dim: usize,
    index: RwLock<HashMap<String, u64>>,
    file: Mutex<File>,
}

impl std::fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("path", &self.path)
            .field("dim", &self.dim)
            .field("len", &self.len())
            .finish()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScoringError + '_ {
    move |source| ScoringError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn index_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".idx");
    PathBuf::from(p)
}

/// Store key for `prefix` + `text`; overlong texts are keyed by their digest.
pub(crate) fn store_key(prefix: &str, text: &str) -> String {
    if prefix.len() + text.len() <= usize::from(u16::MAX) {
        format!("{prefix}{text}")
    } else {
        format!("{prefix}sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
    }
}

impl EmbeddingStore {
    /// Opens `path`, creating an empty store of dimension `dim` if absent.
    /// `dim = None` accepts whatever dimension an existing file declares.
    pub fn open(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Self, ScoringError> {
        let path = path.as_ref().to_path_buf();
        let exists = path.exists();
        if !exists {
            let dim = dim.ok_or_else(|| ScoringError::CacheFormat {
                path: path.clone(),
                reason: "new store needs a dimension".into(),
            })?;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io_err(&path))?;
            }
            let mut f = File::create(&path).map_err(io_err(&path))?;
            f.write_all(MAGIC).map_err(io_err(&path))?;
            f.write_all(&CACHE_FORMAT_VERSION.to_le_bytes()).map_err(io_err(&path))?;
            f.write_all(&(dim as u32).to_le_bytes()).map_err(io_err(&path))?;
            f.write_all(&0u64.to_le_bytes()).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
            let _ = std::fs::remove_file(index_path(&path));
        }
        let mut file = OpenOptions::new().read(true).write(true).open(&path).map_err(io_err(&path))?;
        let (file_dim, count) = read_header(&mut file, &path)?;
        if let Some(d) = dim {
            if d != file_dim {
                return Err(ScoringError::DimMismatch { left: d, right: file_dim });
            }
        }
        let record_len = |key_len: usize| 2 + key_len as u64 + 4 * file_dim as u64;
        let index = match read_index(&index_path(&path), count) {
            Some(index) => index,
            None => {
                let index = scan(&mut file, &path, file_dim, count)?;
                write_index(&index_path(&path), &index).map_err(io_err(&path))?;
                index
            }
        };
        let end = index
            .iter()
            .map(|(k, &off)| off + record_len(k.len()))
            .max()
            .unwrap_or(HEADER_LEN);
        file.set_len(end).map_err(io_err(&path))?;
        Ok(Self {
            path,
            dim: file_dim,
            index: RwLock::new(index),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.read().expect("index lock").contains_key(key)
    }

    pub fn get(&self, key: &str) -> Result<Option<Embedding>, ScoringError> {
        let Some(offset) = self.index.read().expect("index lock").get(key).copied() else {
            return Ok(None);
        };
        let mut file = self.file.lock().expect("file lock");
        let data_at = offset + 2 + key.len() as u64;
        file.seek(SeekFrom::Start(data_at)).map_err(io_err(&self.path))?;
        let mut buf = vec![0u8; 4 * self.dim];
        file.read_exact(&mut buf).map_err(io_err(&self.path))?;
        let v = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Some(Embedding::from_unit(v)))
    }

    /// Appends `key` unless already present; the first write of a key wins.
    pub fn put(&self, key: &str, emb: &Embedding) -> Result<(), ScoringError> {
        if emb.dim() != self.dim {
            return Err(ScoringError::DimMismatch {
                left: emb.dim(),
                right: self.dim,
            });
        }
        let key_len = u16::try_from(key.len()).map_err(|_| ScoringError::CacheFormat {
            path: self.path.clone(),
            reason: format!("key of {} bytes exceeds u16", key.len()),
        })?;
        let mut index = self.index.write().expect("index lock");
        if index.contains_key(key) {
            return Ok(());
        }
        let mut file = self.file.lock().expect("file lock");
        let offset = file.seek(SeekFrom::End(0)).map_err(io_err(&self.path))?;
        let mut rec = Vec::with_capacity(2 + key.len() + 4 * self.dim);
        rec.extend_from_slice(&key_len.to_le_bytes());
        rec.extend_from_slice(key.as_bytes());
        for x in emb.as_slice() {
            rec.extend_from_slice(&x.to_le_bytes());
        }
        file.write_all(&rec).map_err(io_err(&self.path))?;
        file.seek(SeekFrom::Start(COUNT_OFFSET)).map_err(io_err(&self.path))?;
        file.write_all(&(index.len() as u64 + 1).to_le_bytes()).map_err(io_err(&self.path))?;
        index.insert(key.to_string(), offset);
        append_index(&index_path(&self.path), key, offset, index.len() as u64).map_err(io_err(&self.path))?;
        Ok(())
    }
}

fn read_header(file: &mut File, path: &Path) -> Result<(usize, u64), ScoringError> {
    let mut h = [0u8; HEADER_LEN as usize];
    file.read_exact(&mut h).map_err(|_| ScoringError::CacheFormat {
        path: path.to_path_buf(),
        reason: "truncated header".into(),
    })?;
    if &h[0..4] != MAGIC {
        return Err(ScoringError::CacheFormat {
            path: path.to_path_buf(),
            reason: "bad magic".into(),
        });
    }
    let version = u32::from_le_bytes(h[4..8].try_into().expect("4 bytes"));
    if version != CACHE_FORMAT_VERSION {
        return Err(ScoringError::CacheFormat {
            path: path.to_path_buf(),
            reason: format!("unsupported version {version}"),
        });
    }
    let dim = u32::from_le_bytes(h[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(h[12..20].try_into().expect("8 bytes"));
    Ok((dim, count))
}

fn scan(file: &mut File, path: &Path, dim: usize, count: u64) -> Result<HashMap<String, u64>, ScoringError> {
    let bad = |reason: String| ScoringError::CacheFormat {
        path: path.to_path_buf(),
        reason,
    };
    file.seek(SeekFrom::Start(HEADER_LEN)).map_err(io_err(path))?;
    let mut r = BufReader::new(&mut *file);
    let mut index = HashMap::with_capacity(count as usize);
    let mut offset = HEADER_LEN;
    let mut body = vec![0u8; 4 * dim];
    for i in 0..count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(|_| bad(format!("record {i} truncated")))?;
        let mut key = vec![0u8; usize::from(u16::from_le_bytes(len))];
        r.read_exact(&mut key).map_err(|_| bad(format!("record {i} truncated")))?;
        r.read_exact(&mut body).map_err(|_| bad(format!("record {i} truncated")))?;
        let key = String::from_utf8(key).map_err(|_| bad(format!("record {i} key is not UTF-8")))?;
        let rec_len = 2 + key.len() as u64 + body.len() as u64;
        index.entry(key).or_insert(offset);
        offset += rec_len;
    }
    Ok(index)
}

fn read_index(path: &Path, expected: u64) -> Option<HashMap<String, u64>> {
    let mut r = BufReader::new(File::open(path).ok()?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).ok()?;
    if &magic != INDEX_MAGIC {
        return None;
    }
    let mut index = HashMap::new();
    loop {
        let mut len = [0u8; 2];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(_) => return None,
        }
        let mut key = vec![0u8; usize::from(u16::from_le_bytes(len))];
        r.read_exact(&mut key).ok()?;
        let mut off = [0u8; 8];
        r.read_exact(&mut off).ok()?;
        index.insert(String::from_utf8(key).ok()?, u64::from_le_bytes(off));
    }
    (index.len() as u64 == expected).then_some(index)
}

fn write_index(path: &Path, index: &HashMap<String, u64>) -> std::io::Result<()> {
    let mut entries: Vec<(&String, &u64)> = index.iter().collect();
    entries.sort_by_key(|(_, &off)| off);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(INDEX_MAGIC)?;
    for (k, off) in entries {
        w.write_all(&(k.len() as u16).to_le_bytes())?;
        w.write_all(k.as_bytes())?;
        w.write_all(&off.to_le_bytes())?;
    }
    w.flush()
}

fn append_index(path: &Path, key: &str, offset: u64, new_len: u64) -> std::io::Result<()> {
    if new_len == 1 && !path.exists() {
        File::create(path)?.write_all(INDEX_MAGIC)?;
    }
    let mut f = OpenOptions::new().append(true).open(path)?;
    let mut rec = Vec::with_capacity(10 + key.len());
    rec.extend_from_slice(&(key.len() as u16).to_le_bytes());
    rec.extend_from_slice(key.as_bytes());
    rec.extend_from_slice(&offset.to_le_bytes());
    f.write_all(&rec)
}

/// Serves embeddings from a store, delegating misses to `inner` and
/// recording the results. In strict mode a miss is an error.
pub struct CachedScorer {
    store: EmbeddingStore,
    inner: Option<Box<dyn Scorer>>,
    strict: bool,
}

impl CachedScorer {
    pub fn new(store: EmbeddingStore, inner: Option<Box<dyn Scorer>>, strict: bool) -> Self {
        Self { store, inner, strict }
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    fn lookup(
        &self,
        prefix: &str,
        items: &[String],
        embed: impl Fn(&dyn Scorer, &[String]) -> Result<Vec<Embedding>, ScoringError>,
    ) -> Result<Vec<Embedding>, ScoringError> {
        let keys: Vec<String> = items.iter().map(|t| store_key(prefix, t)).collect();
        let mut out: Vec<Option<Embedding>> = Vec::with_capacity(items.len());
        let mut misses: Vec<usize> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            let hit = self.store.get(k)?;
            if hit.is_none() {
                misses.push(i);
            }
            out.push(hit);
        }
        if !misses.is_empty() {
            let inner = match (&self.inner, self.strict) {
                (Some(inner), false) => inner,
                _ => return Err(ScoringError::CacheMiss(keys[misses[0]].clone())),
            };
            let batch: Vec<String> = misses.iter().map(|&i| items[i].clone()).collect();
            let fresh = embed(inner.as_ref(), &batch)?;
            for (&i, e) in misses.iter().zip(fresh) {
                self.store.put(&keys[i], &e)?;
                // Read back so hits and misses are bit-identical.
                out[i] = Some(self.store.get(&keys[i])?.unwrap_or(e));
            }
        }
        Ok(out.into_iter().map(|e| e.expect("filled")).collect())
    }
}

impl Scorer for CachedScorer {
    fn backend_id(&self) -> String {
        match &self.inner {
            Some(inner) => format!("cached(d={}):{}", self.store.dim(), inner.backend_id()),
            None => format!("cached(d={})", self.store.dim()),
        }
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.lookup("txt:", texts, |s, b| s.embed_texts(b))
    }

    fn embed_images(&self, images: &[String]) -> Result<Vec<Embedding>, ScoringError> {
        self.lookup("img:", images, |s, b| s.embed_images(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::SyntheticScorer;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::normalized(v.to_vec())
    }

    #[test]
    fn put_get_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.cpie");
        {
            let s = EmbeddingStore::open(&path, Some(3)).unwrap();
            s.put("txt:a", &emb(&[1.0, 2.0, 2.0])).unwrap();
            s.put("img:b", &emb(&[0.0, 1.0, 0.0])).unwrap();
            s.put("txt:a", &emb(&[0.0, 0.0, 1.0])).unwrap();
            assert_eq!(s.len(), 2);
        }
        let s = EmbeddingStore::open(&path, None).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.get("txt:a").unwrap().unwrap(), emb(&[1.0, 2.0, 2.0]));
        assert!(s.get("txt:zz").unwrap().is_none());
    }

    #[test]
    fn index_rebuilt_when_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.cpie");
        {
            let s = EmbeddingStore::open(&path, Some(2)).unwrap();
            for i in 0..10 {
                s.put(&format!("k{i}"), &emb(&[i as f32, 1.0])).unwrap();
            }
        }
        std::fs::remove_file(index_path(&path)).unwrap();
        let s = EmbeddingStore::open(&path, Some(2)).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.get("k7").unwrap().unwrap(), emb(&[7.0, 1.0]));
        assert!(index_path(&path).exists());
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.cpie");
        let s = EmbeddingStore::open(&path, Some(2)).unwrap();
        s.put("ab", &emb(&[1.0, 0.0])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"CPIE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        assert_eq!(&bytes[20..24], &[2, 0, b'a', b'b']);
        assert_eq!(bytes.len(), 20 + 2 + 2 + 8);
    }

    #[test]
    fn rejects_foreign_files_and_wrong_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a cache at all!!!").unwrap();
        assert!(matches!(EmbeddingStore::open(&path, None), Err(ScoringError::CacheFormat { .. })));
        let path = dir.path().join("e.cpie");
        EmbeddingStore::open(&path, Some(4)).unwrap();
        assert!(matches!(EmbeddingStore::open(&path, Some(8)), Err(ScoringError::DimMismatch { .. })));
    }

    #[test]
    fn cached_scorer_is_coherent_and_strict_mode_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.cpie");
        let inner = SyntheticScorer::new(16);
        let store = EmbeddingStore::open(&path, Some(16)).unwrap();
        let cached = CachedScorer::new(store, Some(Box::new(inner)), false);
        let texts = vec!["a cat".to_string(), "a dog".to_string(), "a cat".to_string()];
        let first = cached.embed_texts(&texts).unwrap();
        let second = cached.embed_texts(&texts).unwrap();
        assert_eq!(first, second);
        assert_eq!(first[0], first[2]);
        drop(cached);
        let strict = CachedScorer::new(EmbeddingStore::open(&path, None).unwrap(), None, true);
        assert_eq!(strict.embed_texts(&texts[..1]).unwrap()[0], first[0]);
        assert!(matches!(strict.embed_images(&["x".into()]), Err(ScoringError::CacheMiss(k)) if k == "img:x"));
        assert!(strict.embed_images(&[]).unwrap().is_empty());
    }

    #[test]
    fn overlong_keys_are_digested() {
        let long = "x".repeat(70_000);
        let k = store_key("txt:", &long);
        assert!(k.starts_with("txt:sha256:") && k.len() == 4 + 7 + 64);
        assert_eq!(store_key("txt:", "cat"), "txt:cat");
    }
}
