//! Write-ahead log (NDJSON mutations) and snapshot files.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use amvl_core::snapshot::{self, SnapshotError};
use amvl_core::store::Mutation;
use amvl_core::MemoryStore;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("wal line {line}: {message}")]
    Wal { line: usize, message: String },
}

impl From<SnapshotError> for PersistError {
    fn from(e: SnapshotError) -> Self {
        PersistError::CorruptSnapshot(e.to_string())
    }
}

pub struct WalWriter {
    out: BufWriter<File>,
}

impl WalWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(WalWriter { out: BufWriter::new(File::create(path)?) })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(WalWriter { out: BufWriter::new(f) })
    }

    pub fn append(&mut self, muts: &[Mutation]) -> io::Result<()> {
        for m in muts {
            serde_json::to_writer(&mut self.out, m)?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn read_wal(path: &Path) -> Result<Vec<Mutation>, PersistError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m = serde_json::from_str(&line).map_err(|e| PersistError::Wal { line: i + 1, message: e.to_string() })?;
        out.push(m);
    }
    Ok(out)
}

/// Applies every WAL record to `store` in order.
pub fn replay_wal(store: &mut MemoryStore, path: &Path) -> Result<usize, PersistError> {
    let muts = read_wal(path)?;
    for (i, m) in muts.iter().enumerate() {
        store.apply_mutation(m).map_err(|e| PersistError::Wal { line: i + 1, message: e.to_string() })?;
    }
    Ok(muts.len())
}

/// Writes to a temporary sibling first, then renames over `path`.
pub fn write_snapshot(store: &MemoryStore, path: &Path) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&snapshot::encode(store))?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

pub fn read_snapshot(path: &Path) -> Result<MemoryStore, PersistError> {
    let bytes = std::fs::read(path)?;
    Ok(snapshot::decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use amvl_core::store::StoreOptions;
    use amvl_core::{LifecycleThresholds, ValueParams};

    fn store() -> MemoryStore {
        let opts = StoreOptions { track_lru: true, ..Default::default() };
        MemoryStore::new(2, ValueParams::default(), LifecycleThresholds::default(), opts)
    }

    #[test]
    fn wal_replay_rebuilds_state() {
        let dir = tempfile::tempdir().unwrap();
        let wal = dir.path().join("m.wal");
        let mut s = store();
        s.enable_journal();
        s.put("a", "one", vec![1.0, 0.0], 0.5, 0.0).unwrap();
        s.put("a", "two", vec![0.0, 1.0], 0.9, 1.0).unwrap();
        s.touch(1, 2.0).unwrap();
        let mut w = WalWriter::create(&wal).unwrap();
        w.append(&s.take_journal()).unwrap();
        w.flush().unwrap();

        let mut r = store();
        // The touch journals an update plus a touch record.
        assert_eq!(replay_wal(&mut r, &wal).unwrap(), 4);
        assert_eq!(r.items().cloned().collect::<Vec<_>>(), s.items().cloned().collect::<Vec<_>>());
        assert_eq!(r.lru_most_recent(5), s.lru_most_recent(5));
    }

    #[test]
    fn snapshot_file_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.snap");
        let mut s = store();
        s.put("a", "one", vec![1.0, 0.0], 0.5, 0.0).unwrap();
        write_snapshot(&s, &p).unwrap();
        let r = read_snapshot(&p).unwrap();
        assert_eq!(snapshot::encode(&r), snapshot::encode(&s));

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(PersistError::CorruptSnapshot(_))));
    }

    #[test]
    fn bad_wal_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wal");
        std::fs::write(&p, "{\"op\":\"touch\",\"id\":1}\nnot json\n").unwrap();
        match read_wal(&p) {
            Err(PersistError::Wal { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
