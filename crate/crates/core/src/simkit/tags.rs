//! Time-tag records and their on-disk formats.
//!
//! Binary layout: the magic `ETT1`, a little-endian `u32` byte length followed
//! by that many bytes of UTF-8 JSON metadata, then 9-byte records of
//! `{channel: u8, t_ps: u64 LE}` until end of file.
//!
//! CSV layout: an optional first line `# <metadata JSON>`, the header
//! `channel,t_ps`, then one record per row.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ETT1";
const RECORD_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Ordered by time first, then channel.
    pub t_ps: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(channel: u8, t_ps: u64) -> Self {
        Self { t_ps, channel }
    }
}

/// Run metadata carried with every stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub seed: u64,
    pub duration_s: f64,
    /// Hex digest of the configuration that produced the stream.
    pub config_hash: String,
    /// Channels the run configured, whether or not they recorded any tag.
    pub channels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub header: StreamHeader,
    pub tags: Vec<TimeTag>,
}

#[derive(Debug, Error)]
pub enum TagFormatError {
    #[error("bad magic: expected ETT1")]
    BadMagic,
    #[error("truncated tag file: {0}")]
    Truncated(&'static str),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("metadata is not UTF-8")]
    MetadataEncoding,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("tags out of order at index {0}")]
    Unsorted(usize),
    #[error("tag at index {index} uses unconfigured channel {channel}")]
    UnknownChannel { index: usize, channel: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// On-disk encodings of a [`TagStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TagFormat {
    Csv,
    #[default]
    Bin,
}

impl TagFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TagFormat::Csv => "csv",
            TagFormat::Bin => "ett",
        }
    }
}

impl TagStream {
    pub fn new(header: StreamHeader, tags: Vec<TimeTag>) -> Self {
        Self { header, tags }
    }

    /// Sorted timestamps of one channel.
    pub fn channel(&self, channel: u8) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.t_ps)
            .collect()
    }

    pub fn count(&self, channel: u8) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Checks ordering and that every tag's channel is declared in the header.
    pub fn validate(&self) -> Result<(), TagFormatError> {
        if let Some(i) = self.tags.windows(2).position(|w| w[1] < w[0]) {
            return Err(TagFormatError::Unsorted(i + 1));
        }
        for (index, t) in self.tags.iter().enumerate() {
            if !self.header.channels.contains(&t.channel) {
                return Err(TagFormatError::UnknownChannel {
                    index,
                    channel: t.channel,
                });
            }
        }
        Ok(())
    }

    pub fn write_bin<W: Write>(&self, out: W) -> Result<(), TagFormatError> {
        let mut out = BufWriter::new(out);
        let meta = serde_json::to_vec(&self.header)?;
        out.write_all(MAGIC)?;
        out.write_all(&(meta.len() as u32).to_le_bytes())?;
        out.write_all(&meta)?;
        for t in &self.tags {
            out.write_all(&[t.channel])?;
            out.write_all(&t.t_ps.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_bin<R: Read>(input: R) -> Result<Self, TagFormatError> {
        let mut input = BufReader::new(input);
        let mut magic = [0u8; 4];
        read_exact_or(&mut input, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(TagFormatError::BadMagic);
        }
        let mut len = [0u8; 4];
        read_exact_or(&mut input, &mut len, "metadata length")?;
        let mut meta = vec![0u8; u32::from_le_bytes(len) as usize];
        read_exact_or(&mut input, &mut meta, "metadata")?;
        let meta = std::str::from_utf8(&meta).map_err(|_| TagFormatError::MetadataEncoding)?;
        let header: StreamHeader = serde_json::from_str(meta)?;

        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() % RECORD_LEN != 0 {
            return Err(TagFormatError::Truncated("partial record"));
        }
        let tags = body
            .chunks_exact(RECORD_LEN)
            .map(|r| {
                let mut t = [0u8; 8];
                t.copy_from_slice(&r[1..]);
                TimeTag::new(r[0], u64::from_le_bytes(t))
            })
            .collect();
        Ok(Self { header, tags })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TagFormatError> {
        let mut out = BufWriter::new(out);
        writeln!(out, "# {}", serde_json::to_string(&self.header)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["channel", "t_ps"])?;
        for t in &self.tags {
            w.serialize((t.channel, t.t_ps))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TagFormatError> {
        let mut input = BufReader::new(input);
        let mut header = StreamHeader::default();
        let mut first = String::new();
        let peeked = input.fill_buf()?;
        if peeked.first() == Some(&b'#') {
            input.read_line(&mut first)?;
            header = serde_json::from_str(first.trim_start_matches('#').trim())?;
        }
        let mut reader = csv::Reader::from_reader(input);
        let mut tags = Vec::new();
        for row in reader.deserialize::<(u8, u64)>() {
            let (channel, t_ps) = row?;
            tags.push(TimeTag::new(channel, t_ps));
        }
        if header.channels.is_empty() {
            let mut chans: Vec<u8> = tags.iter().map(|t| t.channel).collect();
            chans.sort_unstable();
            chans.dedup();
            header.channels = chans;
        }
        Ok(Self { header, tags })
    }

    pub fn write_to(&self, path: &Path, format: TagFormat) -> Result<(), TagFormatError> {
        let f = std::fs::File::create(path)?;
        match format {
            TagFormat::Bin => self.write_bin(f),
            TagFormat::Csv => self.write_csv(f),
        }
    }

    /// Reads either format, deciding by the leading magic bytes: files that do
    /// not start with `ETT1` are parsed as CSV only if they carry a `.csv`
    /// extension, otherwise they are rejected as a bad binary file.
    pub fn read_from(path: &Path) -> Result<Self, TagFormatError> {
        let bytes = std::fs::read(path)?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if bytes.starts_with(MAGIC) || !is_csv {
            Self::read_bin(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), TagFormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TagFormatError::Truncated(what),
        _ => TagFormatError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TagStream {
        TagStream::new(
            StreamHeader {
                seed: 7,
                duration_s: 1.5,
                config_hash: "abc".into(),
                channels: vec![1, 2, 3],
                phase: Some("grating".into()),
            },
            vec![
                TimeTag::new(1, 0),
                TimeTag::new(2, 0),
                TimeTag::new(1, 10),
                TimeTag::new(3, u64::MAX),
            ],
        )
    }

    #[test]
    fn binary_layout() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_bin(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"ETT1");
        let len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let meta: StreamHeader = serde_json::from_slice(&buf[8..8 + len]).unwrap();
        assert_eq!(meta, s.header);
        let body = &buf[8 + len..];
        assert_eq!(body.len(), 4 * 9);
        assert_eq!(body[9], 2);
        assert_eq!(&body[19..27], &10u64.to_le_bytes());
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(
            TagStream::read_bin(&b"XXXX\0\0\0\0"[..]),
            Err(TagFormatError::BadMagic)
        ));
        let mut buf = Vec::new();
        sample().write_bin(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(
            TagStream::read_bin(buf.as_slice()),
            Err(TagFormatError::Truncated(_))
        ));
        assert!(matches!(
            TagStream::read_bin(&b"ET"[..]),
            Err(TagFormatError::Truncated("magic"))
        ));
    }

    #[test]
    fn csv_header_line() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), "channel,t_ps");
        assert_eq!(lines.next().unwrap(), "1,0");
    }

    #[test]
    fn csv_without_metadata_infers_channels() {
        let s = TagStream::read_csv(&b"channel,t_ps\n2,5\n4,9\n"[..]).unwrap();
        assert_eq!(s.header.channels, vec![2, 4]);
        assert_eq!(s.channel(4), vec![9]);
    }

    #[test]
    fn validation_catches_disorder_and_unknown_channels() {
        let mut s = sample();
        assert!(s.validate().is_ok());
        s.tags.swap(0, 2);
        assert!(matches!(s.validate(), Err(TagFormatError::Unsorted(_))));
        let mut s = sample();
        s.tags.push(TimeTag::new(9, u64::MAX));
        assert!(matches!(s.validate(), Err(TagFormatError::UnknownChannel { channel: 9, .. })));
    }

    proptest! {
        #[test]
        fn csv_and_binary_convert_losslessly(raw in proptest::collection::vec((0u8..4, any::<u64>()), 0..200)) {
            let mut tags: Vec<TimeTag> = raw.into_iter().map(|(c, t)| TimeTag::new(c, t)).collect();
            tags.sort();
            let s = TagStream::new(StreamHeader { channels: vec![0, 1, 2, 3], ..StreamHeader::default() }, tags);
            let mut bin = Vec::new();
            s.write_bin(&mut bin).unwrap();
            let from_bin = TagStream::read_bin(bin.as_slice()).unwrap();
            let mut csv = Vec::new();
            from_bin.write_csv(&mut csv).unwrap();
            let from_csv = TagStream::read_csv(csv.as_slice()).unwrap();
            prop_assert_eq!(&from_csv, &s);
            let mut bin2 = Vec::new();
            from_csv.write_bin(&mut bin2).unwrap();
            prop_assert_eq!(bin, bin2);
        }
    }
}
