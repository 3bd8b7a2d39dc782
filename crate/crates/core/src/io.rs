//! Image and curve files.
//!
//! * Plain-text matrices: a `P-TXT W H` header line followed by `W × H`
//!   whitespace-separated reals in row-major order. Values are written with
//!   17 significant digits, so a save/load round trip is exact.
//! * Binary PGM (`P5`) for integer count images, 16-bit big-endian samples
//!   on write; 8-bit and 16-bit files are accepted on read.
//! * Curve CSV: `k,d_kl,paukl,pukla,rekl,pdp[,pe,err_kl,err_l2]`.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::image::{Dims, Image};
use crate::metrics::{OracleSample, RiskCurve};
use crate::risk::RiskSample;
use crate::{Error, Result};

const TXT_MAGIC: &str = "P-TXT";

const CURVE_COLUMNS: [&str; 6] = ["k", "d_kl", "paukl", "pukla", "rekl", "pdp"];
const ORACLE_COLUMNS: [&str; 3] = ["pe", "err_kl", "err_l2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Text,
    Pgm,
}

impl ImageFormat {
    /// PGM for `.pgm` paths, plain text otherwise.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => ImageFormat::Pgm,
            _ => ImageFormat::Text,
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Formats a real with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text_image(path: &Path, image: &Image) -> Result<()> {
    let mut out = String::with_capacity(image.len() * 24 + 32);
    out.push_str(&format!("{TXT_MAGIC} {} {}\n", image.width(), image.height()));
    for row in image.values().chunks(image.width()) {
        let line: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_text_image(path: &Path, text: &str) -> Result<Image> {
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some(TXT_MAGIC) {
        return Err(parse_err(path, format!("missing {TXT_MAGIC} header")));
    }
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .filter(|&d: &usize| d > 0)
            .ok_or_else(|| parse_err(path, format!("bad {name} in header")))
    };
    let dims = Dims::new(dim("width")?, dim("height")?);
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(path, format!("bad value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != dims.len() {
        return Err(parse_err(
            path,
            format!("expected {} values for {dims}, found {}", dims.len(), values.len()),
        ));
    }
    Image::new(dims, values).map_err(|e| parse_err(path, e.to_string()))
}

/// Writes integer counts in `[0, 65535]` as a 16-bit PGM.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    if !image.is_u16_counts() {
        return Err(Error::domain(
            "PGM output needs integer values in [0, 65535]",
        ));
    }
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    out.reserve(image.len() * 2);
    for &v in image.values() {
        out.extend_from_slice(&(v as u16).to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    // Header: magic, width, height, maxval, separated by whitespace and
    // `#` comments, then exactly one whitespace byte before the raster.
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(parse_err(path, "not a binary PGM (P5)"));
    }
    let num = |s: &str, name: &str| -> Result<usize> {
        s.parse()
            .ok()
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| parse_err(path, format!("bad {name} {s:?}")))
    };
    let dims = Dims::new(num(&fields[1], "width")?, num(&fields[2], "height")?);
    let maxval = num(&fields[3], "maxval")?;
    if maxval > 65535 {
        return Err(parse_err(path, format!("maxval {maxval} exceeds 65535")));
    }
    let width = if maxval < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() < dims.len() * width {
        return Err(parse_err(path, "truncated PGM raster"));
    }
    let values = raster[..dims.len() * width]
        .chunks_exact(width)
        .map(|c| match c {
            [b] => f64::from(*b),
            [hi, lo] => f64::from(u16::from_be_bytes([*hi, *lo])),
            _ => unreachable!(),
        })
        .collect();
    Image::new(dims, values)
}

/// Loads an image in either format, detected from the file contents.
pub fn read_image(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(b"P5") {
        parse_pgm(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| parse_err(path, "not UTF-8 text"))?;
        parse_text_image(path, text)
    }
}

pub fn write_image(path: &Path, image: &Image, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Text => write_text_image(path, image),
        ImageFormat::Pgm => write_pgm(path, image),
    }
}

/// Writes a risk curve, including the oracle columns when present.
pub fn write_curve_csv(writer: impl Write, curve: &RiskCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CURVE_COLUMNS.to_vec();
    if curve.has_oracle() {
        header.extend(ORACLE_COLUMNS);
    }
    w.write_record(&header).map_err(csv_io)?;
    for (i, s) in curve.samples().iter().enumerate() {
        let mut row = vec![
            s.k.to_string(),
            format_real(s.d_kl),
            format_real(s.paukl),
            format_real(s.pukla),
            format_real(s.rekl),
            format_real(s.pdp),
        ];
        if let Some(o) = curve.oracle() {
            row.extend([o[i].pe, o[i].err_kl, o[i].err_l2].map(format_real));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_curve_csv(path: &Path, curve: &RiskCurve) -> Result<()> {
    write_curve_csv(fs::File::create(path)?, curve)
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("CSV error: {other:?}")),
    }
}

/// Reads a curve written by [`write_curve_csv`]. `m` is the data length the
/// curve was computed for.
pub fn read_curve_csv(path: &Path, m: usize) -> Result<RiskCurve> {
    let file = fs::File::open(path)?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let with_oracle = if header == CURVE_COLUMNS {
        false
    } else if header.len() == 9
        && header[..6] == CURVE_COLUMNS
        && header[6..] == ORACLE_COLUMNS
    {
        true
    } else {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    };
    let mut curve = RiskCurve::new(with_oracle);
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let bad = |what: &str| parse_err(path, format!("row {}: bad {what}", line + 1));
        let k: usize = record.get(0).and_then(|t| t.parse().ok()).ok_or_else(|| bad("k"))?;
        let mut reals = record.iter().skip(1).map(|t| t.parse::<f64>().ok());
        let mut next = |name: &str| reals.next().flatten().ok_or_else(|| bad(name));
        let sample = RiskSample {
            k,
            d_kl: next("d_kl")?,
            paukl: next("paukl")?,
            pukla: next("pukla")?,
            rekl: next("rekl")?,
            pdp: next("pdp")?,
            m,
        };
        let oracle = if with_oracle {
            Some(OracleSample {
                pe: next("pe")?,
                err_kl: next("err_kl")?,
                err_l2: next("err_l2")?,
            })
        } else {
            None
        };
        curve
            .push(sample, oracle)
            .map_err(|e| parse_err(path, e.to_string()))?;
    }
    Ok(curve)
}

/// Dumps iterates to `dir/x_{k:06}.txt` every `stride` iterations.
#[derive(Debug, Clone)]
pub struct CheckpointWriter {
    dir: PathBuf,
    stride: usize,
    written: Vec<PathBuf>,
}

impl CheckpointWriter {
    pub fn new(dir: impl Into<PathBuf>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("checkpoint stride must be >= 1".into()));
        }
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CheckpointWriter {
            dir,
            stride,
            written: Vec::new(),
        })
    }

    /// Writes `x` if `k` is a multiple of the stride.
    pub fn observe(&mut self, k: usize, x: &Image) -> Result<()> {
        if k.is_multiple_of(self.stride) {
            let path = self.dir.join(format!("x_{k:06}.txt"));
            write_text_image(&path, x)?;
            self.written.push(path);
        }
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
