//! FASTA/FASTQ ingestion. Sequences are upper-cased; quality lines are dropped.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use needletail::errors::ParseErrorKind;
use needletail::parse_fastx_reader;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqRecord {
    pub id: String,
    pub seq: Vec<u8>,
}

/// Reads every record from a FASTA or FASTQ stream. An empty stream yields no
/// records.
pub fn read_records<R: Read + Send>(reader: R) -> Result<Vec<SeqRecord>> {
    let mut parser = match parse_fastx_reader(reader) {
        Ok(p) => p,
        Err(e) if e.kind == ParseErrorKind::EmptyFile => return Ok(Vec::new()),
        Err(e) => return Err(Error::Format(e.to_string())),
    };
    let mut out = Vec::new();
    while let Some(rec) = parser.next() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let id = String::from_utf8_lossy(rec.id()).into_owned();
        let mut seq = rec.seq().into_owned();
        seq.make_ascii_uppercase();
        out.push(SeqRecord { id, seq });
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<SeqRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fasta_multiline_and_lowercase() {
        let data = b">g1 desc\nACGT\nacgt\n>g2\nNNAC\n";
        let recs = read_records(&data[..]).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "g1 desc");
        assert_eq!(recs[0].seq, b"ACGTACGT");
        assert_eq!(recs[1].seq, b"NNAC");
    }

    #[test]
    fn fastq_quality_ignored() {
        let data = b"@r1\nACGTA\n+\nIIIII\n@r2\nGG\n+\n##\n";
        let recs = read_records(&data[..]).unwrap();
        let seqs: Vec<_> = recs.iter().map(|r| r.seq.clone()).collect();
        assert_eq!(seqs, vec![b"ACGTA".to_vec(), b"GG".to_vec()]);
    }

    #[test]
    fn empty_input_is_not_an_error() {
        assert!(read_records(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(
            read_records(&b"hello\n"[..]),
            Err(Error::Format(_))
        ));
    }
}
