//! Single-file durable store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header : b"MNEMOEP\0" (8 bytes) | version: u16 | reserved: u16
//! record : payload_len: u32 | kind: u8 | payload: [u8; payload_len]
//! ```
//!
//! `kind = 1` carries a JSON-encoded [`Episode`]; `kind = 2` carries a
//! JSON-encoded [`MemoryScope`] whose session was deleted. Readers skip
//! unknown kinds so newer writers stay readable. A torn trailing record is
//! truncated away on open.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};

use super::{check_range, EpisodeStore, NewEpisode, StoreError, Table};
use crate::types::{Episode, EpisodeId, MemoryScope, Timestamp};

const MAGIC: &[u8; 8] = b"MNEMOEP\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: u64 = 12;

const KIND_EPISODE: u8 = 1;
const KIND_DELETE_SESSION: u8 = 2;

/// Durable store backed by an append-only log file with an in-memory index.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    table: RwLock<Table>,
    log: Mutex<BufWriter<File>>,
}

impl FileStore {
    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        let mut table = Table::default();

        if file.metadata()?.len() == 0 {
            file.write_all(MAGIC)?;
            file.write_all(&FORMAT_VERSION.to_le_bytes())?;
            file.write_all(&0u16.to_le_bytes())?;
            file.sync_data()?;
        } else {
            let good_len = replay(&mut file, &mut table)?;
            if good_len < file.metadata()?.len() {
                tracing::warn!(path = %path.display(), good_len, "truncating torn tail record");
                file.set_len(good_len)?;
            }
        }
        file.seek(SeekFrom::End(0))?;

        Ok(Self {
            path,
            table: RwLock::new(table),
            log: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_record(&self, kind: u8, payload: &[u8]) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        let len = u32::try_from(payload.len())
            .map_err(|_| StoreError::Corrupt("record exceeds 4 GiB".into()))?;
        log.write_all(&len.to_le_bytes())?;
        log.write_all(&[kind])?;
        log.write_all(payload)?;
        log.flush()?;
        Ok(())
    }
}

fn replay(file: &mut File, table: &mut Table) -> Result<u64, StoreError> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN as usize];
    reader
        .read_exact(&mut header)
        .map_err(|_| StoreError::Corrupt("short header".into()))?;
    if &header[..8] != MAGIC {
        return Err(StoreError::Corrupt("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version > FORMAT_VERSION {
        return Err(StoreError::Corrupt(format!(
            "format version {version} is newer than supported {FORMAT_VERSION}"
        )));
    }

    let mut offset = HEADER_LEN;
    loop {
        let mut prefix = [0u8; 5];
        match read_full(&mut reader, &mut prefix)? {
            0 => break,
            5 => {}
            _ => break,
        }
        let len = u32::from_le_bytes([prefix[0], prefix[1], prefix[2], prefix[3]]) as usize;
        let mut payload = vec![0u8; len];
        if read_full(&mut reader, &mut payload)? < len {
            break;
        }
        match prefix[4] {
            KIND_EPISODE => {
                let ep: Episode = serde_json::from_slice(&payload)
                    .map_err(|e| StoreError::Corrupt(format!("episode at offset {offset}: {e}")))?;
                table.commit(ep);
            }
            KIND_DELETE_SESSION => {
                let scope: MemoryScope = serde_json::from_slice(&payload)
                    .map_err(|e| StoreError::Corrupt(format!("delete at offset {offset}: {e}")))?;
                table.remove(&scope);
            }
            other => tracing::debug!(kind = other, offset, "skipping unknown record kind"),
        }
        offset += 5 + len as u64;
    }
    Ok(offset)
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

impl EpisodeStore for FileStore {
    fn append(&self, episode: NewEpisode) -> Result<Episode, StoreError> {
        let mut table = self.table.write();
        let episode = table.prepare(episode)?;
        let payload = serde_json::to_vec(&episode)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        self.write_record(KIND_EPISODE, &payload)?;
        table.commit(episode.clone());
        Ok(episode)
    }

    fn get_range(&self, scope: &MemoryScope, lo: u64, hi: u64) -> Result<Vec<Episode>, StoreError> {
        if let Some(field) = scope.invalid_field() {
            return Err(StoreError::ScopeInvalid(field));
        }
        check_range(lo, hi)?;
        Ok(self.table.read().range(scope, lo..=hi))
    }

    fn get(&self, id: EpisodeId) -> Option<Episode> {
        self.table.read().get(id)
    }

    fn session_len(&self, scope: &MemoryScope) -> u64 {
        self.table.read().len(scope)
    }

    fn last_timestamp(&self, scope: &MemoryScope) -> Option<Timestamp> {
        self.table.read().last_timestamp(scope)
    }

    fn delete_session(&self, scope: &MemoryScope) -> Result<usize, StoreError> {
        let mut table = self.table.write();
        if table.len(scope) == 0 {
            return Ok(0);
        }
        let payload = serde_json::to_vec(scope).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        self.write_record(KIND_DELETE_SESSION, &payload)?;
        Ok(table.remove(scope))
    }

    fn sessions(&self) -> Vec<MemoryScope> {
        self.table.read().sessions()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Metadata, Producer};

    fn new(scope: &MemoryScope, content: &str, ms: i64) -> NewEpisode {
        let mut metadata = Metadata::new();
        metadata.insert("topic".into(), format!("t{ms}"));
        NewEpisode {
            scope: scope.clone(),
            content: content.into(),
            producer: Producer::Agent,
            timestamp: Timestamp::from_millis(ms),
            metadata,
        }
    }

    #[test]
    fn survives_reopen_including_deletes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.log");
        let a = MemoryScope::new("o", "p", "u", "a", "s1");
        let b = a.with_session("s2");
        let written: Vec<Episode> = {
            let store = FileStore::open(&path).unwrap();
            let mut out = Vec::new();
            for i in 0..4 {
                out.push(store.append(new(&a, &format!("line {i}\nwith break"), i)).unwrap());
            }
            store.append(new(&b, "gone soon", 0)).unwrap();
            store.delete_session(&b).unwrap();
            out
        };
        let store = FileStore::open(&path).unwrap();
        assert_eq!(store.get_range(&a, 0, 10).unwrap(), written);
        assert_eq!(store.session_len(&b), 0);
        // next id continues after the deleted episode
        let ep = store.append(new(&a, "after reopen", 10)).unwrap();
        assert_eq!(ep.id, EpisodeId(5));
        assert_eq!(ep.sequence, 4);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.log");
        let s = MemoryScope::new("o", "p", "u", "a", "s");
        {
            let store = FileStore::open(&path).unwrap();
            store.append(new(&s, "kept", 1)).unwrap();
        }
        let full = std::fs::metadata(&path).unwrap().len();
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(&[200, 0, 0, 0, 1, b'{']).unwrap();
        }
        let store = FileStore::open(&path).unwrap();
        assert_eq!(store.session_len(&s), 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), full);
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"definitely not a log").unwrap();
        assert!(matches!(FileStore::open(&path), Err(StoreError::Corrupt(_))));
    }
}
