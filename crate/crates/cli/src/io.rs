//! Row and coreset files.
//!
//! CSV: one row per line, comma-separated decimal floats, optional
//! `#dim=<d>;rows=<n>` header. Coreset CSV starts with `#coreset;p=<p>` and appends the
//! `sample_prob` and `weight` columns to each (rescaled) row.
//!
//! Binary: `MCRS1`, little-endian `u64` n and d, then `n·d` f64 row-major;
//! a coreset file appends n f64 weights.

use std::io::{self, BufRead, BufReader, Read, Write};

use coreset::linalg::DenseVector;
use coreset::{Coreset, WeightedRow};

use crate::error::CliError;

pub const MAGIC: &[u8; 5] = b"MCRS1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

/// What a file header said about its contents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    pub dim: Option<usize>,
    pub rows: Option<usize>,
    /// Set for coreset files (CSV header or binary weight block).
    pub coreset_p: Option<f64>,
    pub coreset: bool,
}

/// One parsed record: the row plus the coreset columns when present.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub row: DenseVector,
    pub sample_prob: Option<f64>,
}

/// Streaming reader over either format, detected from the first bytes.
pub struct RowReader {
    inner: Inner,
    pub header: Header,
    /// Binary weight block, available once every row has been read.
    weights: Option<Vec<f64>>,
    count: usize,
}

enum Inner {
    Csv {
        lines: io::Lines<BufReader<Box<dyn Read>>>,
        line_no: usize,
        pending: Option<(usize, String)>,
    },
    Bin {
        reader: BufReader<Box<dyn Read>>,
        rows: usize,
        dim: usize,
        read: usize,
    },
}

fn input_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("line {line}: {msg}"))
}

fn parse_header(line: &str, header: &mut Header, line_no: usize) -> Result<(), CliError> {
    let body = line.trim_start_matches('#');
    for part in body.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('=') {
            Some(("dim", v)) => {
                header.dim = Some(v.trim().parse().map_err(|_| input_err(line_no, format!("bad dim `{v}`")))?)
            }
            Some(("rows", v)) => {
                header.rows = Some(v.trim().parse().map_err(|_| input_err(line_no, format!("bad rows `{v}`")))?)
            }
            Some(("p", v)) => {
                header.coreset_p = Some(v.trim().parse().map_err(|_| input_err(line_no, format!("bad p `{v}`")))?)
            }
            None if part == "coreset" => header.coreset = true,
            _ => {}
        }
    }
    Ok(())
}

fn parse_fields(line: &str, line_no: usize) -> Result<Vec<f64>, CliError> {
    line.split(',')
        .map(|f| {
            let f = f.trim();
            let v: f64 = f
                .parse()
                .map_err(|_| input_err(line_no, format!("cannot parse `{f}` as a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(input_err(line_no, format!("non-finite value `{f}`")))
            }
        })
        .collect()
}

fn read_u64(r: &mut impl Read) -> Result<u64, CliError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| CliError::Input("binary file truncated in header".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| CliError::Input(format!("binary file truncated in {what}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl RowReader {
    pub fn new(source: Box<dyn Read>) -> Result<Self, CliError> {
        let mut reader = BufReader::new(source);
        let starts_binary = reader.fill_buf()?.starts_with(MAGIC);
        if starts_binary {
            return Self::binary(reader);
        }
        let mut header = Header::default();
        let mut lines = reader.lines();
        let mut line_no = 0;
        let mut pending = None;
        for line in lines.by_ref() {
            line_no += 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                parse_header(t, &mut header, line_no)?;
                continue;
            }
            pending = Some((line_no, line));
            break;
        }
        Ok(RowReader {
            inner: Inner::Csv {
                lines,
                line_no,
                pending,
            },
            header,
            weights: None,
            count: 0,
        })
    }

    fn binary(mut reader: BufReader<Box<dyn Read>>) -> Result<Self, CliError> {
        let mut magic = [0u8; 5];
        reader.read_exact(&mut magic)?;
        let n = read_u64(&mut reader)? as usize;
        let d = read_u64(&mut reader)? as usize;
        if n > 0 && d == 0 {
            return Err(CliError::Input("binary header has d = 0".into()));
        }
        Ok(RowReader {
            header: Header {
                dim: Some(d),
                rows: Some(n),
                ..Header::default()
            },
            inner: Inner::Bin {
                reader,
                rows: n,
                dim: d,
                read: 0,
            },
            weights: None,
            count: 0,
        })
    }

    /// The weight block that may follow the rows of a binary file.
    fn binary_tail(reader: &mut BufReader<Box<dyn Read>>, n: usize) -> Result<Option<Vec<f64>>, CliError> {
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if rest.is_empty() {
            return Ok(None);
        }
        if rest.len() != 8 * n {
            return Err(CliError::Input(format!(
                "binary file has {} trailing bytes; expected 0 or {} (weights)",
                rest.len(),
                8 * n
            )));
        }
        let w: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = w.iter().position(|&x| !(x.is_finite() && x >= 1.0)) {
            return Err(CliError::Input(format!("weight {i} is {}; weights must be >= 1", w[i])));
        }
        Ok(Some(w))
    }

    /// Columns of the row itself (without the coreset columns).
    fn split_record(&mut self, fields: Vec<f64>, line_no: usize) -> Result<Record, CliError> {
        let extra = if self.header.coreset { 2 } else { 0 };
        if fields.len() <= extra {
            return Err(input_err(line_no, format!("expected more than {extra} columns")));
        }
        let d = fields.len() - extra;
        match self.header.dim {
            Some(expected) if expected != d => {
                return Err(input_err(line_no, format!("expected {expected} values, found {d}")));
            }
            None => self.header.dim = Some(d),
            _ => {}
        }
        let sample_prob = if self.header.coreset {
            let q = fields[d];
            let w = fields[d + 1];
            if !(q > 0.0 && q <= 1.0) {
                return Err(input_err(line_no, format!("sample_prob {q} outside (0, 1]")));
            }
            if (w * q - 1.0).abs() > 1e-9 {
                return Err(input_err(line_no, format!("weight {w} is not 1/sample_prob")));
            }
            Some(q)
        } else {
            None
        };
        let mut fields = fields;
        fields.truncate(d);
        Ok(Record {
            row: DenseVector::from_vec(fields),
            sample_prob,
        })
    }

    pub fn next_record(&mut self) -> Result<Option<Record>, CliError> {
        match &mut self.inner {
            Inner::Bin { reader, rows, dim, read } => {
                if *read >= *rows {
                    if *read == *rows {
                        *read += 1;
                        self.weights = Self::binary_tail(reader, *rows)?;
                        self.header.coreset = self.weights.is_some();
                    }
                    return Ok(None);
                }
                let i = *read;
                let v = read_f64s(reader, *dim, &format!("row {i}"))?;
                if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                    return Err(CliError::Input(format!("row {i}, column {j}: non-finite value")));
                }
                *read += 1;
                Ok(Some(Record {
                    row: DenseVector::from_vec(v),
                    sample_prob: None,
                }))
            }
            Inner::Csv {
                lines,
                line_no,
                pending,
            } => {
                let next = match pending.take() {
                    Some(p) => Some(p),
                    None => loop {
                        match lines.next() {
                            None => break None,
                            Some(line) => {
                                *line_no += 1;
                                let line = line?;
                                let t = line.trim();
                                if t.is_empty() {
                                    continue;
                                }
                                if t.starts_with('#') {
                                    return Err(input_err(*line_no, "header lines must precede the data"));
                                }
                                break Some((*line_no, line));
                            }
                        }
                    },
                };
                match next {
                    None => match self.header.rows {
                        Some(n) if n != self.count => Err(CliError::Input(format!(
                            "header declares {n} rows, file has {}",
                            self.count
                        ))),
                        _ => Ok(None),
                    },
                    Some((no, line)) => {
                        let fields = parse_fields(line.trim(), no)?;
                        self.count += 1;
                        self.split_record(fields, no).map(Some)
                    }
                }
            }
        }
    }

    /// Iterator over rows; stops at the first error.
    pub fn rows(self) -> Rows {
        Rows { reader: self, failed: None }
    }

    /// Reads everything into memory.
    pub fn read_all(mut self) -> Result<(Header, Vec<Record>), CliError> {
        let mut out = Vec::new();
        while let Some(r) = self.next_record()? {
            out.push(r);
        }
        if let Some(w) = &self.weights {
            for (r, w) in out.iter_mut().zip(w) {
                r.sample_prob = Some(1.0 / w);
            }
        }
        Ok((self.header, out))
    }
}

/// Row iterator that records the first error instead of yielding it, so it
/// can feed APIs that take `IntoIterator<Item = DenseVector>`.
pub struct Rows {
    reader: RowReader,
    failed: Option<CliError>,
}

impl Rows {
    pub fn header(&self) -> &Header {
        &self.reader.header
    }

    pub fn take_error(&mut self) -> Option<CliError> {
        self.failed.take()
    }
}

impl Iterator for Rows {
    type Item = DenseVector;

    fn next(&mut self) -> Option<DenseVector> {
        if self.failed.is_some() {
            return None;
        }
        match self.reader.next_record() {
            Ok(r) => r.map(|r| r.row),
            Err(e) => {
                self.failed = Some(e);
                None
            }
        }
    }
}

/// Shortest round-trip decimal form.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_rows(out: &mut impl Write, rows: &[DenseVector], format: Format) -> io::Result<()> {
    let d = rows.first().map_or(0, |r| r.len());
    match format {
        Format::Csv => {
            writeln!(out, "#dim={d};rows={}", rows.len())?;
            for r in rows {
                let line: Vec<String> = r.iter().map(|&v| fmt(v)).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        Format::Bin => {
            out.write_all(MAGIC)?;
            out.write_all(&(rows.len() as u64).to_le_bytes())?;
            out.write_all(&(d as u64).to_le_bytes())?;
            for r in rows {
                for v in r.iter() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_coreset(out: &mut impl Write, coreset: &Coreset, dim: usize, format: Format) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "#coreset;p={};dim={dim};rows={}", fmt(coreset.p), coreset.len())?;
            for e in &coreset.elements {
                let mut line: Vec<String> = e.row.iter().map(|&v| fmt(v)).collect();
                line.push(fmt(e.sample_prob));
                line.push(fmt(e.weight()));
                writeln!(out, "{}", line.join(","))?;
            }
        }
        Format::Bin => {
            out.write_all(MAGIC)?;
            out.write_all(&(coreset.len() as u64).to_le_bytes())?;
            out.write_all(&(dim as u64).to_le_bytes())?;
            for e in &coreset.elements {
                for v in e.row.iter() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            for e in &coreset.elements {
                out.write_all(&e.weight().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a coreset file back. Plain row files load at weight one.
pub fn read_coreset(source: Box<dyn Read>, p: Option<f64>) -> Result<(Coreset, usize), CliError> {
    let reader = RowReader::new(source)?;
    let (header, records) = reader.read_all()?;
    let p = p.or(header.coreset_p).ok_or_else(|| {
        CliError::Config("coreset power unknown: pass --p (binary files do not record it)".into())
    })?;
    let dim = header.dim.unwrap_or(0);
    let records_len = records.len();
    let elements = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| WeightedRow {
            row: r.row,
            raw_index: i,
            sample_prob: r.sample_prob.unwrap_or(1.0),
        })
        .collect();
    let cs = Coreset::new(elements, p, records_len, "file");
    Ok((cs, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reader(text: &str) -> RowReader {
        RowReader::new(Box::new(io::Cursor::new(text.as_bytes().to_vec()))).unwrap()
    }

    #[test]
    fn csv_with_header_and_blank_lines() {
        let (h, rows) = reader("#dim=2\n1,2\n\n3.5, -4e-1\n").read_all().unwrap();
        assert_eq!(h.dim, Some(2));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].row.as_slice(), &[3.5, -0.4]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = reader("1,2\n3,4\n5,x\n").read_all().unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = reader("#dim=3\n1,2,3\n1,2\n").read_all().unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = reader("1,2\nnan,1\n").read_all().unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = reader("#dim=2;rows=3\n1,2\n3,4\n").read_all().unwrap_err();
        assert!(err.to_string().contains("declares 3 rows"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            DenseVector::from_vec(vec![0.1, 1.0 / 3.0, -2.5e-300]),
            DenseVector::from_vec(vec![1e300, 0.0, -0.0]),
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows, Format::Csv).unwrap();
        let (_, back) = reader(std::str::from_utf8(&buf).unwrap()).read_all().unwrap();
        assert_eq!(back.iter().map(|r| r.row.clone()).collect::<Vec<_>>(), rows);
    }

    #[test]
    fn binary_round_trip_with_weights() {
        let elements = vec![
            WeightedRow {
                row: DenseVector::from_vec(vec![1.0, 2.0]),
                raw_index: 0,
                sample_prob: 0.25,
            },
            WeightedRow::raw(DenseVector::from_vec(vec![3.0, 4.0]), 1),
        ];
        let cs = Coreset::new(elements, 3.0, 2, "t");
        let mut buf = Vec::new();
        write_coreset(&mut buf, &cs, 2, Format::Bin).unwrap();
        assert_eq!(buf.len(), 5 + 16 + 2 * 2 * 8 + 2 * 8);
        let (back, dim) = read_coreset(Box::new(io::Cursor::new(buf)), Some(3.0)).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(back.elements[0].sample_prob, 0.25);
        assert_eq!(back.elements[1].row.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn coreset_csv_round_trip() {
        let cs = Coreset::new(
            vec![WeightedRow {
                row: DenseVector::from_vec(vec![1.5, -2.0]),
                raw_index: 7,
                sample_prob: 0.125,
            }],
            4.0,
            10,
            "t",
        );
        let mut buf = Vec::new();
        write_coreset(&mut buf, &cs, 2, Format::Csv).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#coreset;p=4.0"));
        assert!(text.contains("1.5,-2.0,0.125,8.0"));
        let (back, _) = read_coreset(Box::new(io::Cursor::new(buf)), None).unwrap();
        assert_eq!(back.p, 4.0);
        assert_eq!(back.elements[0].sample_prob, 0.125);
    }

    #[test]
    fn truncated_binary_is_an_input_error() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[DenseVector::from_vec(vec![1.0, 2.0])], Format::Bin).unwrap();
        buf.pop();
        let err = RowReader::new(Box::new(io::Cursor::new(buf.clone()))).unwrap().read_all().unwrap_err();
        assert!(matches!(err, CliError::Input(_)));
        buf.extend_from_slice(&[0; 5]);
        let err = RowReader::new(Box::new(io::Cursor::new(buf))).unwrap().read_all().unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }
}
