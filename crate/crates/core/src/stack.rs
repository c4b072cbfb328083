//! The frame-stack file: a recorded measurement run on disk.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size            | field                                   |
//! |--------|-----------------|-----------------------------------------|
//! | 0      | 4               | magic `GIFS`                            |
//! | 4      | 2               | version, currently 1                    |
//! | 6      | 4               | rows                                    |
//! | 10     | 4               | cols                                    |
//! | 14     | 4               | count                                   |
//! | 18     | count*rows*cols*4 | frames, f32 row-major                 |
//! | ...    | count*8         | bucket values, f64                      |
//!
//! Total size is exactly `18 + count*(rows*cols*4 + 8)` bytes; anything else
//! is rejected, no partial runs are ever returned.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::speckle::{MeasurementRun, ReferenceFrame};

pub const STACK_MAGIC: [u8; 4] = *b"GIFS";
pub const STACK_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

/// Incremental stack writer for callers that stream frames once (the
/// experiment loop writes the stack while also accumulating). Frames must
/// arrive in index order; `finish` fails if the count is short.
pub struct StackWriter {
    out: BufWriter<File>,
    path: PathBuf,
    rows: usize,
    cols: usize,
    expected: u32,
    written: u32,
    buckets: Vec<f64>,
}

impl StackWriter {
    pub fn create(path: &Path, rows: usize, cols: usize, count: u32) -> Result<Self> {
        if rows == 0 || cols == 0 || count == 0 {
            return Err(Error::Parameter(
                "stack dimensions and count must be positive".into(),
            ));
        }
        if u32::try_from(rows).is_err() || u32::try_from(cols).is_err() {
            return Err(Error::Parameter(
                "stack dimensions exceed the 32-bit header fields".into(),
            ));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        out.write_all(&STACK_MAGIC).map_err(io)?;
        out.write_all(&STACK_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(rows as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&(cols as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&count.to_le_bytes()).map_err(io)?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            rows,
            cols,
            expected: count,
            written: 0,
            buckets: Vec::with_capacity(count as usize),
        })
    }

    /// Append one frame (stored at f32 precision) and queue its bucket value.
    pub fn append(&mut self, frame: &ReferenceFrame, bucket: f64) -> Result<()> {
        if frame.dim() != (self.rows, self.cols) {
            return Err(Error::Dimension {
                expected: (self.rows, self.cols),
                got: frame.dim(),
            });
        }
        if self.written == self.expected {
            return Err(Error::Parameter(format!(
                "stack already holds the declared {} frames",
                self.expected
            )));
        }
        let mut bytes = Vec::with_capacity(self.rows * self.cols * 4);
        for &v in frame.intensity() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.out
            .write_all(&bytes)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        self.buckets.push(bucket);
        Ok(())
    }

    /// Write the bucket section and flush.
    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::Parameter(format!(
                "stack declared {} frames but only {} were appended",
                self.expected, self.written
            )));
        }
        let mut bytes = Vec::with_capacity(self.buckets.len() * 8);
        for b in &self.buckets {
            bytes.extend_from_slice(&b.to_le_bytes());
        }
        self.out
            .write_all(&bytes)
            .map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Record a whole run to disk.
pub fn write_stack(run: &MeasurementRun, path: &Path) -> Result<()> {
    let mut writer = StackWriter::create(path, run.rows(), run.cols(), run.count())?;
    for pair in run.pairs()? {
        let (frame, bucket) = pair?;
        writer.append(&frame, bucket.value)?;
    }
    writer.finish()
}

/// Open a stack file as a measurement run. The header and bucket section are
/// validated here; frame payloads are validated as they are streamed.
pub fn read_stack(path: &Path) -> Result<MeasurementRun> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();

    let mut header = [0u8; HEADER_LEN];
    if file_len < HEADER_LEN as u64 {
        return Err(Error::format(
            path,
            file_len,
            format!("file ends inside the {HEADER_LEN}-byte header"),
        ));
    }
    file.read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    if header[0..4] != STACK_MAGIC {
        return Err(Error::format(path, 0, "bad magic (want GIFS)"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != STACK_VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {version} (want {STACK_VERSION})"),
        ));
    }
    let rows = u32::from_le_bytes(header[6..10].try_into().unwrap());
    let cols = u32::from_le_bytes(header[10..14].try_into().unwrap());
    let count = u32::from_le_bytes(header[14..18].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::format(
            path,
            6,
            format!("zero frame dimension {rows}x{cols}"),
        ));
    }
    if count == 0 {
        return Err(Error::format(path, 14, "stack declares zero frames"));
    }
    let frame_bytes = u64::from(rows) * u64::from(cols) * 4;
    let expected_len = HEADER_LEN as u64 + u64::from(count) * (frame_bytes + 8);
    if file_len != expected_len {
        return Err(Error::format(
            path,
            file_len.min(expected_len),
            format!(
                "payload length mismatch: file is {file_len} bytes, layout needs {expected_len}"
            ),
        ));
    }

    let bucket_offset = HEADER_LEN as u64 + u64::from(count) * frame_bytes;
    file.seek(SeekFrom::Start(bucket_offset))
        .map_err(|e| Error::io(path, e))?;
    let mut bucket_bytes = vec![0u8; count as usize * 8];
    file.read_exact(&mut bucket_bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut buckets = Vec::with_capacity(count as usize);
    for (i, chunk) in bucket_bytes.chunks_exact(8).enumerate() {
        let b = f64::from_le_bytes(chunk.try_into().unwrap());
        if !b.is_finite() || b < 0.0 {
            return Err(Error::format(
                path,
                bucket_offset + (i * 8) as u64,
                format!("bucket {i} is not a finite non-negative reading ({b})"),
            ));
        }
        buckets.push(b);
    }

    let mut hasher = Sha256::new();
    hasher.update(header);
    hasher.update(&bucket_bytes);

    Ok(MeasurementRun::stored(
        rows as usize,
        cols as usize,
        count,
        hasher.finalize().into(),
        path.to_path_buf(),
        buckets,
    ))
}
