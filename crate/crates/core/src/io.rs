//! Plain-text CSV exchange for vectors, dense matrices and problem instances.
//!
//! Numbers are written with 17 significant digits so every value survives a
//! write/read round trip bit for bit. Blur instances are stored as a small
//! `# key=value` header followed by the image as one CSV row per image row.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{invalid, Error, Result};
use crate::linops::{DenseMatrix, KroneckerBlur};

/// Round-trip formatting: 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let t = tok.trim();
    match t {
        "inf" | "+inf" | "Inf" => Ok(f64::INFINITY),
        "-inf" | "-Inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|e| Error::Parse {
            line,
            reason: format!("cannot parse {t:?} as a number: {e}"),
        }),
    }
}

fn data_lines<R: Read>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

/// One value per line.
pub fn write_vector_csv<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{}", fmt_f64(*x))?;
    }
    Ok(())
}

/// Accepts one value per line or a single comma-separated row.
pub fn read_vector_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for (line, text) in data_lines(r)? {
        for tok in text.split(',') {
            v.push(parse_f64(tok, line)?);
        }
    }
    Ok(v)
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in data_lines(r)? {
        let row = text
            .split(',')
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(invalid("matrix", "no data rows"));
    }
    DenseMatrix::from_rows(&rows)
}

/// Column-major image `x[i + j·n] = X[i, j]` written as `n` CSV rows.
pub fn write_image_csv<W: Write>(mut w: W, n: usize, x: &[f64]) -> Result<()> {
    crate::error::check_len("write_image_csv", n * n, x.len())?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| fmt_f64(x[i + j * n])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads an `n × n` CSV image into column-major order.
pub fn read_image_csv<R: Read>(r: R) -> Result<(usize, Vec<f64>)> {
    let m = read_matrix_csv(r)?;
    if m.rows() != m.cols() {
        return Err(invalid(
            "image",
            format!("must be square, got {}x{}", m.rows(), m.cols()),
        ));
    }
    let n = m.rows();
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            x[i + j * n] = m.get(i, j);
        }
    }
    Ok((n, x))
}

/// Blur operator parameters plus the ground-truth image.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurRecord {
    pub n: usize,
    pub band: usize,
    pub sigma: f64,
    pub image: Vec<f64>,
}

pub fn write_blur_record<W: Write>(mut w: W, rec: &BlurRecord) -> Result<()> {
    writeln!(w, "# kind=blur")?;
    writeln!(w, "# n={}", rec.n)?;
    writeln!(w, "# band={}", rec.band)?;
    writeln!(w, "# sigma={}", fmt_f64(rec.sigma))?;
    write_image_csv(w, rec.n, &rec.image)
}

pub fn read_blur_record<R: Read>(r: R) -> Result<BlurRecord> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let (mut n, mut band, mut sigma) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.trim().strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = rest.split_once('=') else {
            continue;
        };
        let value = value.trim();
        let bad = |what: &str| Error::Parse {
            line: i + 1,
            reason: format!("invalid {what}: {value:?}"),
        };
        match key.trim() {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("n"))?),
            "band" => band = Some(value.parse::<usize>().map_err(|_| bad("band"))?),
            "sigma" => sigma = Some(parse_f64(value, i + 1)?),
            _ => {}
        }
    }
    let missing = |k: &str| invalid("header", format!("missing `# {k}=` line"));
    let n = n.ok_or_else(|| missing("n"))?;
    let band = band.ok_or_else(|| missing("band"))?;
    let sigma = sigma.ok_or_else(|| missing("sigma"))?;
    let (side, image) = read_image_csv(text.as_bytes())?;
    if side != n {
        return Err(invalid(
            "image",
            format!("header says n={n} but payload is {side}x{side}"),
        ));
    }
    // Validate the parameters now rather than at first use.
    KroneckerBlur::new(n, band, sigma)?;
    Ok(BlurRecord {
        n,
        band,
        sigma,
        image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn vector_round_trip() {
        let v = vec![1.5, -2.25e-7, std::f64::consts::PI];
        let mut buf = Vec::new();
        write_vector_csv(&mut buf, &v).unwrap();
        assert_eq!(read_vector_csv(buf.as_slice()).unwrap(), v);
        assert_eq!(read_vector_csv("1,2,3\n".as_bytes()).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ragged_matrix_reports_line() {
        let err = read_matrix_csv("1,2\n# note\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn bad_number_reports_line() {
        let err = read_vector_csv("1\nx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn blur_record_round_trip() {
        let rec = BlurRecord {
            n: 3,
            band: 2,
            sigma: 0.7,
            image: (0..9).map(|i| i as f64 * 0.5).collect(),
        };
        let mut buf = Vec::new();
        write_blur_record(&mut buf, &rec).unwrap();
        assert_eq!(read_blur_record(buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn blur_record_requires_header() {
        assert!(read_blur_record("# n=2\n1,2\n3,4\n".as_bytes()).is_err());
        assert!(read_blur_record("# n=3\n# band=1\n# sigma=1\n1,2\n3,4\n".as_bytes()).is_err());
    }
}
