//! Sample records and manifests.
//!
//! A sample record is little-endian:
//!
//! ```text
//! "PITMIX1\0"  u32 S  u32 T  u32 D  u32 L  f32 snr_db
//! S x u32 speaker ids   S x f32 gains
//! T*D f32 mixed features (row-major)
//! S blocks of T*D f32 source features
//! S blocks of T u32 labels
//! ```
//!
//! Records are stored back to back in one file per split. The manifest is a
//! text file whose first line is the config fingerprint and whose remaining
//! lines are tab-separated `file  offset  S  T  snr_db  ids` with the
//! speaker ids comma-joined.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;

use super::MixtureSample;
use crate::dsp::FeatureSequence;
use crate::error::{Error, Result};

pub const SAMPLE_MAGIC: &[u8; 8] = b"PITMIX1\0";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Serializes one record. Values are narrowed to f32.
pub fn write_sample(out: &mut Vec<u8>, s: &MixtureSample) -> Result<()> {
    s.validate()?;
    out.extend_from_slice(SAMPLE_MAGIC);
    put_u32(out, s.num_sources() as u32);
    put_u32(out, s.num_frames() as u32);
    put_u32(out, s.feature_dim() as u32);
    put_u32(out, s.num_labels as u32);
    put_f32(out, s.snr_db);
    for &id in &s.speaker_ids {
        put_u32(out, id);
    }
    for &g in &s.gains {
        put_f32(out, g);
    }
    for v in &s.mixed_features.data {
        put_f32(out, *v);
    }
    for f in &s.source_features {
        for v in &f.data {
            put_f32(out, *v);
        }
    }
    for l in &s.source_labels {
        for &y in l {
            put_u32(out, y as u32);
        }
    }
    Ok(())
}

struct Cursor<'a, R: Read> {
    r: &'a mut R,
}

impl<R: Read> Cursor<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::format(format!("truncated sample record: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.bytes()?) as f64)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 4];
        self.r
            .read_exact(&mut buf)
            .map_err(|e| Error::format(format!("truncated sample record: {e}")))?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Reads one record; features are tagged with `frame_hop` and marked normalized.
pub fn read_sample(r: &mut impl Read, frame_hop: f64) -> Result<MixtureSample> {
    let mut c = Cursor { r };
    if &c.bytes::<8>()? != SAMPLE_MAGIC {
        return Err(Error::format("bad sample magic"));
    }
    let s = c.u32()? as usize;
    let t = c.u32()? as usize;
    let d = c.u32()? as usize;
    let l = c.u32()? as usize;
    if s == 0 || t == 0 || d == 0 || l == 0 {
        return Err(Error::format(format!("degenerate record S={s} T={t} D={d} L={l}")));
    }
    let snr_db = c.f32()?;
    let speaker_ids = (0..s).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let gains = (0..s).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
    let features = |c: &mut Cursor<_>| -> Result<FeatureSequence> {
        let mut f = FeatureSequence::new(c.f32s(t * d)?, t, d, frame_hop)?;
        f.normalized = true;
        Ok(f)
    };
    let mixed_features = features(&mut c)?;
    let source_features = (0..s).map(|_| features(&mut c)).collect::<Result<Vec<_>>>()?;
    let source_labels = (0..s)
        .map(|_| (0..t).map(|_| c.u32().map(|y| y as usize)).collect())
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let sample = MixtureSample {
        mixed_features,
        source_features,
        source_labels,
        snr_db,
        speaker_ids,
        gains,
        num_labels: l,
    };
    sample.validate()?;
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub file: String,
    pub offset: u64,
    pub num_sources: usize,
    pub num_frames: usize,
    pub snr_db: f32,
    pub speaker_ids: Vec<u32>,
}

impl fmt::Display for ManifestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.speaker_ids.iter().map(u32::to_string).collect();
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.file,
            self.offset,
            self.num_sources,
            self.num_frames,
            self.snr_db,
            ids.join(",")
        )
    }
}

impl FromStr for ManifestRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::format(format!("manifest line has {} fields", fields.len())));
        }
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::format(format!("bad number {s:?} in manifest")))
        };
        let speaker_ids = fields[5]
            .split(',')
            .map(|s| num(s).map(|v| v as u32))
            .collect::<Result<Vec<_>>>()?;
        let rec = ManifestRecord {
            file: fields[0].to_string(),
            offset: num(fields[1])?,
            num_sources: num(fields[2])? as usize,
            num_frames: num(fields[3])? as usize,
            snr_db: fields[4]
                .parse()
                .map_err(|_| Error::format(format!("bad SNR {:?}", fields[4])))?,
            speaker_ids,
        };
        if rec.speaker_ids.len() != rec.num_sources {
            return Err(Error::format("speaker id count differs from S"));
        }
        Ok(rec)
    }
}

/// Manifest text: fingerprint line, then one record per line.
pub fn write_manifest(path: &Path, fingerprint: &str, records: &[ManifestRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{fingerprint}")?;
    for r in records {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<(String, Vec<ManifestRecord>)> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut lines = f.lines();
    let fingerprint = lines
        .next()
        .ok_or_else(|| Error::format("empty manifest"))??
        .trim()
        .to_string();
    if fingerprint.is_empty() || !fingerprint.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::format("manifest fingerprint line is not a hex digest"));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(line.parse()?);
        }
    }
    Ok((fingerprint, records))
}

/// Loads the sample a record points at, relative to `dir`.
pub fn load_record(dir: &Path, rec: &ManifestRecord, frame_hop: f64) -> Result<MixtureSample> {
    let mut f = fs::File::open(dir.join(&rec.file))?;
    f.seek(SeekFrom::Start(rec.offset))?;
    let sample = read_sample(&mut BufReader::new(f), frame_hop)?;
    if sample.num_sources() != rec.num_sources || sample.num_frames() != rec.num_frames {
        return Err(Error::format(format!(
            "record at {}:{} disagrees with its manifest line",
            rec.file, rec.offset
        )));
    }
    Ok(sample)
}
