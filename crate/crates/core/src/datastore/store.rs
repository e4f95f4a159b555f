use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv_io::{write_csv, CsvError};
use super::row::LogRow;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsyncPolicy {
    /// Leave durability to the OS.
    #[default]
    Never,
    /// Sync when a segment is closed.
    OnRotate,
    /// Sync after every append.
    EveryRow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoreConfig {
    pub dir: PathBuf,
    pub segment_rows: usize,
    /// Oldest segments are deleted beyond this many. `None` keeps all.
    pub max_segments: Option<usize>,
    pub fsync: FsyncPolicy,
}

impl StoreConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), segment_rows: 10_000, max_segments: None, fsync: FsyncPolicy::Never }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("timestamp {got} is not after {last}")]
    Order { last: f64, got: f64 },
    #[error("corrupt segment {path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Segment {
    path: PathBuf,
    rows: usize,
}

/// Append-only NDJSON segments with an in-memory index.
pub struct DataStore {
    cfg: StoreConfig,
    rows: VecDeque<LogRow>,
    segments: VecDeque<Segment>,
    writer: Option<BufWriter<File>>,
    next_segment: u64,
    bytes: u64,
    dropped_rows: u64,
}

fn segment_name(n: u64) -> String {
    format!("segment-{n:06}.ndjson")
}

impl DataStore {
    /// Opens `cfg.dir`, loading any existing segments.
    pub fn open(cfg: StoreConfig) -> Result<Self, StoreError> {
        fs::create_dir_all(&cfg.dir)?;
        let mut found: Vec<(u64, PathBuf)> = fs::read_dir(&cfg.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let n = name.strip_prefix("segment-")?.strip_suffix(".ndjson")?.parse().ok()?;
                Some((n, e.path()))
            })
            .collect();
        found.sort();
        let mut store = Self {
            next_segment: found.last().map_or(0, |(n, _)| n + 1),
            cfg,
            rows: VecDeque::new(),
            segments: VecDeque::new(),
            writer: None,
            bytes: 0,
            dropped_rows: 0,
        };
        for (_, path) in found {
            let f = BufReader::new(File::open(&path)?);
            let mut count = 0;
            for (i, line) in f.lines().enumerate() {
                let line = line?;
                store.bytes += line.len() as u64 + 1;
                let row: LogRow = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if let Some(last) = store.rows.back() {
                    if row.timestamp <= last.timestamp {
                        return Err(StoreError::Corrupt { path, line: i + 1, message: "timestamps not increasing".into() });
                    }
                }
                store.rows.push_back(row);
                count += 1;
            }
            store.segments.push_back(Segment { path, rows: count });
        }
        Ok(store)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.cfg
    }

    /// Appends a row; timestamps must strictly increase.
    pub fn append(&mut self, row: LogRow) -> Result<(), StoreError> {
        let row = row.quantized();
        if let Some(last) = self.rows.back() {
            if !(row.timestamp > last.timestamp) {
                return Err(StoreError::Order { last: last.timestamp, got: row.timestamp });
            }
        }
        let full = self.segments.back().is_none_or(|s| s.rows >= self.cfg.segment_rows);
        if self.writer.is_none() || full {
            self.rotate()?;
        }
        let mut line = serde_json::to_vec(&row).expect("plain struct serializes");
        line.push(b'\n');
        let w = self.writer.as_mut().expect("rotate opened a segment");
        w.write_all(&line)?;
        if self.cfg.fsync == FsyncPolicy::EveryRow {
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        self.bytes += line.len() as u64;
        self.segments.back_mut().expect("open segment").rows += 1;
        self.rows.push_back(row);
        Ok(())
    }

    fn rotate(&mut self) -> Result<(), StoreError> {
        if let Some(mut w) = self.writer.take() {
            w.flush()?;
            if self.cfg.fsync != FsyncPolicy::Never {
                w.get_ref().sync_all()?;
            }
        }
        let path = self.cfg.dir.join(segment_name(self.next_segment));
        self.next_segment += 1;
        let f = OpenOptions::new().create(true).append(true).open(&path)?;
        self.writer = Some(BufWriter::new(f));
        self.segments.push_back(Segment { path, rows: 0 });
        if let Some(max) = self.cfg.max_segments {
            while self.segments.len() > max.max(1) {
                let old = self.segments.pop_front().expect("non-empty");
                self.bytes = self.bytes.saturating_sub(fs::metadata(&old.path).map(|m| m.len()).unwrap_or(0));
                fs::remove_file(&old.path)?;
                self.rows.drain(..old.rows.min(self.rows.len()));
                self.dropped_rows += old.rows as u64;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            if self.cfg.fsync != FsyncPolicy::Never {
                w.get_ref().sync_all()?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Bytes of NDJSON currently on disk.
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn dropped_rows(&self) -> u64 {
        self.dropped_rows
    }

    pub fn rows(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter()
    }

    /// Rows with `t0 <= timestamp <= t1`, ascending.
    pub fn query(&self, t0: f64, t1: f64) -> Vec<LogRow> {
        if !(t0 <= t1) {
            return Vec::new();
        }
        let start = self.rows.partition_point(|r| r.timestamp < t0);
        let end = self.rows.partition_point(|r| r.timestamp <= t1);
        self.rows.range(start..end).copied().collect()
    }

    pub fn export_csv(&self, path: &Path) -> Result<u64, CsvError> {
        let f = BufWriter::new(File::create(path)?);
        write_csv(f, self.rows.iter())?;
        Ok(fs::metadata(path)?.len())
    }
}
