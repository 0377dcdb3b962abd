//! Line-delimited JSON storage.
//!
//! Session records carry the keys `id`, `seed`, `params`, `events` and
//! `frames`; clip records carry `session_id`, `start` and `frames`. Frames
//! are flat arrays of 10 numbers in feature-column order (object position
//! XYZ, hand position XYZ, object rotation XYZW); the frame index is the
//! array position (plus `start` for clips).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::trajectory::{Clip, FeatureRow, Frame, Session};

#[derive(Serialize)]
struct SessionOut<'a> {
    id: &'a str,
    seed: u64,
    params: &'a crate::sim::SessionParams,
    events: &'a [crate::trajectory::PrimitiveEvent],
    frames: Vec<FeatureRow>,
}

#[derive(Serialize, Deserialize)]
struct ClipRecord {
    session_id: String,
    start: usize,
    frames: Vec<FeatureRow>,
}

/// Writes to `<path>.tmp` and renames into place on [`AtomicWriter::commit`],
/// so readers never observe a half-written file.
pub struct AtomicWriter {
    path: PathBuf,
    tmp: PathBuf,
    out: BufWriter<File>,
}

impl AtomicWriter {
    pub fn create(path: &Path) -> Result<AtomicWriter> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(AtomicWriter {
            path: path.to_path_buf(),
            tmp,
            out: BufWriter::new(file),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(&self.tmp, e))
    }

    pub fn write_record<T: Serialize + ?Sized>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)?;
        self.write_line(&line)
    }

    pub fn commit(self) -> Result<()> {
        let AtomicWriter { path, tmp, out } = self;
        let file = out.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(file);
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Writes `text` to `path` atomically.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut w = AtomicWriter::create(path)?;
    w.out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.commit()
}

fn parse_error(record: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        record,
        field: field.to_string(),
        message: message.into(),
    }
}

fn take_field<T: DeserializeOwned>(obj: &mut Map<String, Value>, record: usize, field: &str) -> Result<T> {
    let v = obj
        .remove(field)
        .ok_or_else(|| parse_error(record, field, "missing field"))?;
    serde_json::from_value(v).map_err(|e| parse_error(record, field, e.to_string()))
}

fn parse_object(line: &str, record: usize) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(parse_error(record, "<record>", "expected a JSON object")),
        Err(e) => Err(parse_error(record, "<record>", e.to_string())),
    }
}

fn frames_from_rows(rows: Vec<FeatureRow>, start: usize) -> Vec<Frame> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| Frame::from_features(start + i, r))
        .collect()
}

pub fn session_to_json(s: &Session) -> Result<String> {
    let out = SessionOut {
        id: &s.id,
        seed: s.seed,
        params: &s.params,
        events: &s.events,
        frames: s.frames.iter().map(Frame::features).collect(),
    };
    Ok(serde_json::to_string(&out)?)
}

/// Parses and validates one session record; `record` is its 0-based line
/// number, used in error messages.
pub fn session_from_json(line: &str, record: usize) -> Result<Session> {
    let mut obj = parse_object(line, record)?;
    let id: String = take_field(&mut obj, record, "id")?;
    let seed = take_field(&mut obj, record, "seed")?;
    let params = take_field(&mut obj, record, "params")?;
    let events = take_field(&mut obj, record, "events")?;
    let rows: Vec<FeatureRow> = take_field(&mut obj, record, "frames")?;
    if let Some(extra) = obj.keys().next() {
        return Err(parse_error(record, extra, "unknown field"));
    }
    let session = Session {
        id,
        seed,
        params,
        events,
        frames: frames_from_rows(rows, 0),
    };
    session.validate()?;
    Ok(session)
}

/// Streams sessions to a file, one per line.
pub struct SessionWriter {
    inner: AtomicWriter,
}

impl SessionWriter {
    pub fn create(path: &Path) -> Result<SessionWriter> {
        Ok(SessionWriter {
            inner: AtomicWriter::create(path)?,
        })
    }

    pub fn write(&mut self, s: &Session) -> Result<()> {
        let line = session_to_json(s)?;
        self.inner.write_line(&line)
    }

    pub fn finish(self) -> Result<()> {
        self.inner.commit()
    }
}

pub fn save_sessions(path: &Path, sessions: &[Session]) -> Result<()> {
    let mut w = SessionWriter::create(path)?;
    for s in sessions {
        w.write(s)?;
    }
    w.finish()
}

/// Iterates over the non-blank lines of a JSONL file as `(record, line)`.
pub struct Lines {
    path: PathBuf,
    inner: std::io::Lines<BufReader<File>>,
    record: usize,
}

impl Lines {
    pub fn open(path: &Path) -> Result<Lines> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Lines {
            path: path.to_path_buf(),
            inner: BufReader::new(file).lines(),
            record: 0,
        })
    }
}

impl Iterator for Lines {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.inner.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            let r = self.record;
            self.record += 1;
            return Some(Ok((r, line)));
        }
    }
}

/// Streaming session reader.
pub fn read_sessions(path: &Path) -> Result<impl Iterator<Item = Result<Session>>> {
    Ok(Lines::open(path)?.map(|l| l.and_then(|(r, line)| session_from_json(&line, r))))
}

pub fn load_sessions(path: &Path) -> Result<Vec<Session>> {
    read_sessions(path)?.collect()
}

pub fn clip_to_json(c: &Clip) -> Result<String> {
    let rec = ClipRecord {
        session_id: c.session_id().to_string(),
        start: c.start(),
        frames: c.frames().iter().map(Frame::features).collect(),
    };
    Ok(serde_json::to_string(&rec)?)
}

pub fn clip_from_json(line: &str, record: usize) -> Result<Clip> {
    let mut obj = parse_object(line, record)?;
    let session_id = take_field(&mut obj, record, "session_id")?;
    let start = take_field(&mut obj, record, "start")?;
    let rows: Vec<FeatureRow> = take_field(&mut obj, record, "frames")?;
    if let Some(extra) = obj.keys().next() {
        return Err(parse_error(record, extra, "unknown field"));
    }
    Clip::new(session_id, start, frames_from_rows(rows, start))
        .map_err(|e| parse_error(record, "frames", e.to_string()))
}

pub fn save_clips(path: &Path, clips: &[Clip]) -> Result<()> {
    let mut w = AtomicWriter::create(path)?;
    for c in clips {
        w.write_line(&clip_to_json(c)?)?;
    }
    w.commit()
}

pub fn load_clips(path: &Path) -> Result<Vec<Clip>> {
    Lines::open(path)?
        .map(|l| l.and_then(|(r, line)| clip_from_json(&line, r)))
        .collect()
}

/// Writes any serializable records, one per line.
pub fn save_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = AtomicWriter::create(path)?;
    for r in records {
        w.write_record(r)?;
    }
    w.commit()
}

/// Reads records of one type, one per line.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Lines::open(path)?
        .map(|l| {
            l.and_then(|(r, line)| serde_json::from_str(&line).map_err(|e| parse_error(r, "<record>", e.to_string())))
        })
        .collect()
}
