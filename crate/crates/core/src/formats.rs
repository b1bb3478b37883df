//! Plain-text file layouts: label files, transform files, correspondence
//! lists and detection files.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::evaluator::Detection;
use crate::geometry::{AffineTransform, BBox};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}

fn fields<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty() && !f[0].starts_with('#'))
}

fn num<V: FromStr>(line: usize, s: &str) -> Result<V, FormatError> {
    s.parse()
        .map_err(|_| FormatError::parse(line, format!("cannot parse number {s:?}")))
}

fn real<T: Real>(line: usize, s: &str) -> Result<T, FormatError> {
    let v: f64 = num(line, s)?;
    if !v.is_finite() {
        return Err(FormatError::parse(line, format!("non-finite value {s:?}")));
    }
    Ok(T::lit(v))
}

/// Shortest decimal for `v` after rounding to 12 places; `-0` prints as `0`.
pub fn format_decimal(v: f64) -> String {
    let mut s = format!("{:.12}", v);
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Parses `category_id cx cy w h` lines.
pub fn parse_labels<T: Real>(text: &str) -> Result<Vec<BBox<T>>, FormatError> {
    fields(text)
        .map(|(line, f)| {
            if f.len() != 5 {
                return Err(FormatError::parse(line, format!("expected 5 fields, got {}", f.len())));
            }
            let cat: u32 = num(line, f[0])?;
            BBox::new(
                cat,
                real(line, f[1])?,
                real(line, f[2])?,
                real(line, f[3])?,
                real(line, f[4])?,
            )
            .map_err(|e| FormatError::parse(line, e.to_string()))
        })
        .collect()
}

pub fn format_labels<T: Real>(boxes: &[BBox<T>]) -> String {
    boxes
        .iter()
        .map(|b| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6}\n",
                b.category_id,
                b.cx.as_f64(),
                b.cy.as_f64(),
                b.w.as_f64(),
                b.h.as_f64()
            )
        })
        .collect()
}

/// Parses a transform file: six decimals `a b tx c d ty` on one line.
pub fn parse_transform<T: Real>(text: &str) -> Result<AffineTransform<T>, FormatError> {
    let mut lines = fields(text);
    let (line, f) = lines
        .next()
        .ok_or_else(|| FormatError::parse(1, "empty transform file"))?;
    if f.len() != 6 {
        return Err(FormatError::parse(line, format!("expected 6 coefficients, got {}", f.len())));
    }
    let c: Vec<T> = f.iter().map(|s| real(line, s)).collect::<Result<_, _>>()?;
    AffineTransform::new(c[0], c[1], c[2], c[3], c[4], c[5])
        .map_err(|e| FormatError::parse(line, e.to_string()))
}

pub fn format_transform<T: Real>(t: &AffineTransform<T>) -> String {
    let parts: Vec<String> = t
        .coefficients()
        .iter()
        .map(|v| format_decimal(v.as_f64()))
        .collect();
    format!("{}\n", parts.join(" "))
}

/// Parses correspondence lines `src_x src_y dst_x dst_y`.
#[allow(clippy::type_complexity)]
pub fn parse_pairs<T: Real>(text: &str) -> Result<Vec<((T, T), (T, T))>, FormatError> {
    fields(text)
        .map(|(line, f)| {
            if f.len() != 4 {
                return Err(FormatError::parse(line, format!("expected 4 fields, got {}", f.len())));
            }
            Ok((
                (real(line, f[0])?, real(line, f[1])?),
                (real(line, f[2])?, real(line, f[3])?),
            ))
        })
        .collect()
}

/// Parses detection lines `image_id category_id cx cy w h confidence`.
pub fn parse_detections<T: Real>(text: &str) -> Result<Vec<Detection<T>>, FormatError> {
    fields(text)
        .map(|(line, f)| {
            if f.len() != 7 {
                return Err(FormatError::parse(line, format!("expected 7 fields, got {}", f.len())));
            }
            let cat: u32 = num(line, f[1])?;
            let bbox = BBox::new(
                cat,
                real(line, f[2])?,
                real(line, f[3])?,
                real(line, f[4])?,
                real(line, f[5])?,
            )
            .map_err(|e| FormatError::parse(line, e.to_string()))?;
            Detection::new(f[0], bbox, real(line, f[6])?)
                .map_err(|e| FormatError::parse(line, e.to_string()))
        })
        .collect()
}

pub fn format_detections<T: Real>(dets: &[Detection<T>]) -> String {
    dets.iter()
        .map(|d| {
            format!(
                "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
                d.image_id,
                d.bbox.category_id,
                d.bbox.cx.as_f64(),
                d.bbox.cy.as_f64(),
                d.bbox.w.as_f64(),
                d.bbox.h.as_f64(),
                d.confidence.as_f64()
            )
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn read_labels<T: Real>(path: &Path) -> Result<Vec<BBox<T>>, FormatError> {
    parse_labels(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_at_six_decimals() {
        let text = "0 0.500000 0.250000 0.100000 0.200000\n3 0.1 0.9 0.05 0.05\n";
        let boxes: Vec<BBox<f64>> = parse_labels(text).unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[1].category_id, 3);
        let again: Vec<BBox<f64>> = parse_labels(&format_labels(&boxes)).unwrap();
        assert_eq!(boxes, again);
    }

    #[test]
    fn label_errors_carry_line_numbers() {
        let err = parse_labels::<f64>("0 0.5 0.5 0.1 0.1\n0 0.5 0.5 0.1\n").unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 2, .. }));
        assert!(parse_labels::<f64>("0 1.5 0.5 0.1 0.1").is_err());
        assert!(parse_labels::<f64>("x 0.5 0.5 0.1 0.1").is_err());
        assert!(parse_labels::<f64>("0 nan 0.5 0.1 0.1").is_err());
    }

    #[test]
    fn transform_file_layout() {
        let t = AffineTransform::<f64>::identity();
        assert_eq!(format_transform(&t), "1 0 0 0 1 0\n");
        let t = AffineTransform::new(1.2, 0.1, 33.0, -0.05, 0.9, -7.0).unwrap();
        assert_eq!(format_transform(&t), "1.2 0.1 33 -0.05 0.9 -7\n");
        assert_eq!(parse_transform::<f64>(&format_transform(&t)).unwrap(), t);
        assert!(parse_transform::<f64>("1 0 0 0 1").is_err());
        assert!(parse_transform::<f64>("1 2 0 2 4 0").is_err());
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(-0.0), "0");
        assert_eq!(format_decimal(1.0000000000000002), "1");
        assert_eq!(format_decimal(-1e-15), "0");
        assert_eq!(format_decimal(2.5), "2.5");
    }

    #[test]
    fn detections_parse() {
        let dets: Vec<Detection<f64>> =
            parse_detections("img1 0 0.5 0.5 0.1 0.1 0.9\n# comment\nimg2 0 0.2 0.2 0.1 0.1 0.3\n").unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[1].image_id, "img2");
        assert!(parse_detections::<f64>("img1 0 0.5 0.5 0.1 0.1 1.5").is_err());
        let again: Vec<Detection<f64>> = parse_detections(&format_detections(&dets)).unwrap();
        assert_eq!(again, dets);
    }

    #[test]
    fn pairs_parse() {
        let p: Vec<((f64, f64), (f64, f64))> = parse_pairs("0 0 10 20\n1 0 11 20\n").unwrap();
        assert_eq!(p[1], ((1.0, 0.0), (11.0, 20.0)));
        assert!(parse_pairs::<f64>("0 0 10").is_err());
    }
}
