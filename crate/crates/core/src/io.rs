//! Cloud and configuration files: PCD (ASCII and binary), CSV, the label
//! sidecar, and JSON configs.
//!
//! The PCD subset is deliberately small: fields `x y z intensity`, each a
//! little-endian 32-bit float, data section `ascii` or `binary`. ASCII
//! values are printed with however many digits reconstruct the exact f32,
//! so both PCD variants round-trip losslessly at f32 precision. CSV keeps
//! full f64 precision and is the format of choice for synthetic data.
//! Label sidecars are plain CSV (`index,label`) so cloud files stay
//! viewable in standard tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::eval::PointLabel;
use crate::pipeline::{FilterReport, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PcdAscii,
    PcdBinary,
    Csv,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn frame_id_from(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".to_string())
}

/// Reads a cloud in the stated format. Point order is preserved; the
/// frame id is taken from the file stem and no timestamp is assigned.
pub fn read_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    match format {
        CloudFormat::Csv => read_csv(path),
        CloudFormat::PcdAscii | CloudFormat::PcdBinary => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            let (header, offset) = parse_pcd_header(path, &bytes)?;
            let want_binary = format == CloudFormat::PcdBinary;
            if header.binary != want_binary {
                return Err(parse_err(
                    path,
                    header.data_line,
                    format!(
                        "expected DATA {}, file declares {}",
                        if want_binary { "binary" } else { "ascii" },
                        if header.binary { "binary" } else { "ascii" }
                    ),
                ));
            }
            read_pcd_body(path, &bytes, &header, offset)
        }
    }
}

/// Reads a cloud, deciding the format from the file itself: `.csv`
/// extension means CSV, anything else is parsed as PCD with the `DATA`
/// header line picking ASCII or binary.
pub fn read_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        return read_csv(path);
    }
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (header, offset) = parse_pcd_header(path, &bytes)?;
    read_pcd_body(path, &bytes, &header, offset)
}

/// Writes a cloud in the requested format. The output reads back
/// bit-exactly for binary PCD and CSV, and at f32 precision for ASCII PCD.
pub fn write_cloud(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: CloudFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        CloudFormat::Csv => write_csv(cloud, path),
        CloudFormat::PcdAscii => {
            let mut out = pcd_header(cloud.len(), false);
            for p in &cloud.points {
                let _ = writeln!(
                    out,
                    "{} {} {} {}",
                    p.x as f32, p.y as f32, p.z as f32, p.intensity as f32
                );
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        CloudFormat::PcdBinary => {
            let mut out = pcd_header(cloud.len(), true).into_bytes();
            out.reserve(cloud.len() * 16);
            for p in &cloud.points {
                for v in [p.x, p.y, p.z, p.intensity] {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
    }
}

fn pcd_header(n: usize, binary: bool) -> String {
    format!(
        "# .PCD v0.7 - Point Cloud Data file format\n\
         VERSION 0.7\n\
         FIELDS x y z intensity\n\
         SIZE 4 4 4 4\n\
         TYPE F F F F\n\
         COUNT 1 1 1 1\n\
         WIDTH {n}\n\
         HEIGHT 1\n\
         VIEWPOINT 0 0 0 1 0 0 0\n\
         POINTS {n}\n\
         DATA {}\n",
        if binary { "binary" } else { "ascii" }
    )
}

struct PcdHeader {
    /// Column positions of x, y, z, intensity within a data row.
    columns: [usize; 4],
    field_count: usize,
    points: usize,
    binary: bool,
    /// Line number of the DATA declaration, for error reporting.
    data_line: usize,
    /// Line number right after the header.
    next_line: usize,
}

/// Parses the textual header, returning it plus the byte offset of the
/// first data byte.
fn parse_pcd_header(path: &Path, bytes: &[u8]) -> Result<(PcdHeader, usize)> {
    let mut fields: Option<Vec<String>> = None;
    let mut sizes: Option<Vec<String>> = None;
    let mut types: Option<Vec<String>> = None;
    let mut points: Option<usize> = None;
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut offset = 0usize;
    let mut line_no = 0usize;

    while offset < bytes.len() {
        let rel_end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .unwrap_or(bytes.len() - offset);
        let raw = &bytes[offset..offset + rel_end];
        let next_offset = (offset + rel_end + 1).min(bytes.len());
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(path, line_no, "header is not valid UTF-8"))?
            .trim();
        offset = next_offset;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key.to_ascii_uppercase().as_str() {
            "VERSION" | "VIEWPOINT" | "COUNT" => {}
            "FIELDS" => fields = Some(rest.split_whitespace().map(str::to_string).collect()),
            "SIZE" => sizes = Some(rest.split_whitespace().map(str::to_string).collect()),
            "TYPE" => types = Some(rest.split_whitespace().map(str::to_string).collect()),
            "WIDTH" => {
                width = Some(rest.parse().map_err(|_| {
                    parse_err(path, line_no, format!("WIDTH is not a count: {rest:?}"))
                })?)
            }
            "HEIGHT" => {
                height = Some(rest.parse().map_err(|_| {
                    parse_err(path, line_no, format!("HEIGHT is not a count: {rest:?}"))
                })?)
            }
            "POINTS" => {
                points = Some(rest.parse().map_err(|_| {
                    parse_err(path, line_no, format!("POINTS is not a count: {rest:?}"))
                })?)
            }
            "DATA" => {
                let binary = match rest {
                    "ascii" => false,
                    "binary" => true,
                    other => {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("unsupported DATA kind {other:?}"),
                        ))
                    }
                };
                let fields = fields
                    .ok_or_else(|| parse_err(path, line_no, "header ends without FIELDS"))?;
                let mut columns = [usize::MAX; 4];
                for (i, name) in ["x", "y", "z", "intensity"].iter().enumerate() {
                    columns[i] = fields.iter().position(|f| f == name).ok_or_else(|| {
                        parse_err(
                            path,
                            line_no,
                            format!("FIELDS is missing {name:?} (got {fields:?})"),
                        )
                    })?;
                }
                for (label, list) in [("SIZE", &sizes), ("TYPE", &types)] {
                    if let Some(list) = list {
                        if list.len() != fields.len() {
                            return Err(parse_err(
                                path,
                                line_no,
                                format!("{label} lists {} entries for {} fields", list.len(), fields.len()),
                            ));
                        }
                        for &c in &columns {
                            let want = if label == "SIZE" { "4" } else { "F" };
                            if list[c] != want {
                                return Err(parse_err(
                                    path,
                                    line_no,
                                    format!(
                                        "{label} {:?} unsupported, only 32-bit floats are accepted",
                                        list[c]
                                    ),
                                ));
                            }
                        }
                    }
                }
                let points = points
                    .or_else(|| width.zip(height).map(|(w, h)| w * h))
                    .ok_or_else(|| parse_err(path, line_no, "header declares no POINTS"))?;
                if let (Some(w), Some(h)) = (width, height) {
                    if w * h != points {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("WIDTH {w} x HEIGHT {h} disagrees with POINTS {points}"),
                        ));
                    }
                }
                return Ok((
                    PcdHeader {
                        columns,
                        field_count: fields.len(),
                        points,
                        binary,
                        data_line: line_no,
                        next_line: line_no + 1,
                    },
                    offset,
                ));
            }
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unrecognized header key {other:?}"),
                ));
            }
        }
    }
    Err(parse_err(path, line_no, "file ends before a DATA line"))
}

fn finite_component(
    path: &Path,
    line: usize,
    name: &str,
    value: f64,
) -> Result<f64> {
    if !value.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("{name} is not finite ({value})"),
        ));
    }
    Ok(value)
}

fn read_pcd_body(
    path: &Path,
    bytes: &[u8],
    header: &PcdHeader,
    offset: usize,
) -> Result<PointCloud> {
    let mut points = Vec::with_capacity(header.points);
    if header.binary {
        let body = &bytes[offset..];
        let want = header.points * header.field_count * 4;
        if body.len() != want {
            return Err(parse_err(
                path,
                header.data_line,
                format!(
                    "binary body holds {} bytes, POINTS {} needs exactly {want}",
                    body.len(),
                    header.points
                ),
            ));
        }
        for i in 0..header.points {
            let row = &body[i * header.field_count * 4..];
            let get = |c: usize| {
                let b: [u8; 4] = row[c * 4..c * 4 + 4].try_into().unwrap();
                f32::from_le_bytes(b) as f64
            };
            let line = header.next_line + i;
            let p = Point::new(
                finite_component(path, line, "x", get(header.columns[0]))?,
                finite_component(path, line, "y", get(header.columns[1]))?,
                finite_component(path, line, "z", get(header.columns[2]))?,
                finite_component(path, line, "intensity", get(header.columns[3]))?,
            );
            points.push(p);
        }
    } else {
        let text = std::str::from_utf8(&bytes[offset..])
            .map_err(|_| parse_err(path, header.next_line, "data section is not valid UTF-8"))?;
        let mut line_no = header.data_line;
        for line in text.lines() {
            line_no += 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if points.len() == header.points {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("more data rows than the declared POINTS {}", header.points),
                ));
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != header.field_count {
                return Err(parse_err(
                    path,
                    line_no,
                    format!(
                        "row has {} values, header declares {} fields",
                        tokens.len(),
                        header.field_count
                    ),
                ));
            }
            let get = |c: usize, name: &str| -> Result<f64> {
                let v: f32 = tokens[c].parse().map_err(|_| {
                    parse_err(path, line_no, format!("{name} is not a number: {:?}", tokens[c]))
                })?;
                finite_component(path, line_no, name, v as f64)
            };
            let p = Point::new(
                get(header.columns[0], "x")?,
                get(header.columns[1], "y")?,
                get(header.columns[2], "z")?,
                get(header.columns[3], "intensity")?,
            );
            points.push(p);
        }
        if points.len() != header.points {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "data section holds {} rows, header declares POINTS {}",
                    points.len(),
                    header.points
                ),
            ));
        }
    }
    let mut cloud = PointCloud::new(points);
    cloud.frame_id = frame_id_from(path);
    Ok(cloud)
}

fn read_csv(path: &Path) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let mut columns = [usize::MAX; 4];
    for (i, name) in ["x", "y", "z", "intensity"].iter().enumerate() {
        columns[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| {
                parse_err(
                    path,
                    1,
                    format!("CSV header is missing the {name:?} column (got {headers:?})"),
                )
            })?;
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(points.len() + 2);
        let get = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).ok_or_else(|| {
                parse_err(path, line, format!("row is missing the {name} column"))
            })?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(path, line, format!("{name} is not a number: {raw:?}")))?;
            finite_component(path, line, name, v)
        };
        points.push(Point::new(
            get(columns[0], "x")?,
            get(columns[1], "y")?,
            get(columns[2], "z")?,
            get(columns[3], "intensity")?,
        ));
    }
    let mut cloud = PointCloud::new(points);
    cloud.frame_id = frame_id_from(path);
    Ok(cloud)
}

fn write_csv(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::from("x,y,z,intensity\n");
    for p in &cloud.points {
        let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.z, p.intensity);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes the `index,label` sidecar next to a cloud file.
pub fn write_labels(labels: &[PointLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,label\n");
    for (i, label) in labels.iter().enumerate() {
        let name = match label {
            PointLabel::Environment => "environment",
            PointLabel::Aerosol => "aerosol",
        };
        let _ = writeln!(out, "{i},{name}");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a label sidecar. Every index from 0 to the row count minus one
/// must appear exactly once.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<PointLabel>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<(usize, PointLabel, usize)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let index: usize = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| parse_err(path, line, "label row needs a point index"))?;
        let label = match record.get(1).unwrap_or("") {
            "environment" => PointLabel::Environment,
            "aerosol" => PointLabel::Aerosol,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("unknown label {other:?}, expected environment or aerosol"),
                ))
            }
        };
        rows.push((index, label, line));
    }
    let n = rows.len();
    let mut labels = vec![None; n];
    for (index, label, line) in rows {
        if index >= n {
            return Err(parse_err(
                path,
                line,
                format!("index {index} out of range for {n} labels"),
            ));
        }
        if labels[index].is_some() {
            return Err(parse_err(path, line, format!("index {index} appears twice")));
        }
        labels[index] = Some(label);
    }
    Ok(labels.into_iter().map(|l| l.unwrap()).collect())
}

/// Loads, defaults, and validates a pipeline configuration. A missing or
/// whitespace-only file yields the default configuration; unknown keys and
/// out-of-range values are rejected with the parameter named.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let trimmed = text.trim();
    let cfg: PipelineConfig = if trimmed.is_empty() {
        PipelineConfig::default()
    } else {
        serde_json::from_str(trimmed)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a frame report as pretty JSON.
pub fn write_report(report: &FilterReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    /// Random cloud whose coordinates are exact f32 values, so PCD round
    /// trips must be bit-exact.
    fn f32_cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                Point::new(
                    rng.gen_range(-100.0f32..100.0) as f64,
                    rng.gen_range(-100.0f32..100.0) as f64,
                    rng.gen_range(-100.0f32..100.0) as f64,
                    rng.gen_range(0.0f32..255.0) as f64,
                )
            })
            .collect();
        PointCloud::new(points)
    }

    #[test]
    fn golden_three_point_ascii_file_parses_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("three.pcd");
        let text = "# .PCD v0.7 - Point Cloud Data file format\n\
                    VERSION 0.7\n\
                    FIELDS x y z intensity\n\
                    SIZE 4 4 4 4\n\
                    TYPE F F F F\n\
                    COUNT 1 1 1 1\n\
                    WIDTH 3\n\
                    HEIGHT 1\n\
                    VIEWPOINT 0 0 0 1 0 0 0\n\
                    POINTS 3\n\
                    DATA ascii\n\
                    1.5 -2.25 0.5 2\n\
                    0 0 0 0\n\
                    -7.125 3.75 -0.5 19.5\n";
        fs::write(&path, text).unwrap();
        let cloud = read_cloud(&path, CloudFormat::PcdAscii).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(
            cloud.points[0],
            Point::new(1.5, -2.25, 0.5, 2.0),
            "negative and fractional values must come through exactly"
        );
        assert_eq!(cloud.points[1], Point::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(cloud.points[2], Point::new(-7.125, 3.75, -0.5, 19.5));
        assert_eq!(cloud.frame_id, "three");
    }

    #[test]
    fn ascii_round_trip_is_exact_at_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.pcd");
        let cloud = f32_cloud(1, 500);
        write_cloud(&cloud, &path, CloudFormat::PcdAscii).unwrap();
        let back = read_cloud(&path, CloudFormat::PcdAscii).unwrap();
        assert_eq!(cloud.points, back.points);
    }

    #[test]
    fn binary_round_trip_is_bit_exact_for_ten_thousand_points() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.pcd");
        let cloud = f32_cloud(2, 10_000);
        write_cloud(&cloud, &path, CloudFormat::PcdBinary).unwrap();
        let back = read_cloud(&path, CloudFormat::PcdBinary).unwrap();
        assert_eq!(cloud.points, back.points);

        // Writing the parsed cloud again must reproduce the bytes.
        let second = dir.path().join("cloud2.pcd");
        write_cloud(&back, &second, CloudFormat::PcdBinary).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&second).unwrap());
    }

    #[test]
    fn empty_cloud_round_trips_in_every_format() {
        let dir = tempdir().unwrap();
        let empty = PointCloud::new(Vec::new());
        for (name, format) in [
            ("e.pcd", CloudFormat::PcdAscii),
            ("eb.pcd", CloudFormat::PcdBinary),
            ("e.csv", CloudFormat::Csv),
        ] {
            let path = dir.path().join(name);
            write_cloud(&empty, &path, format).unwrap();
            let back = read_cloud(&path, format).unwrap();
            assert!(back.is_empty(), "{name}");
        }
    }

    #[test]
    fn csv_parse_agrees_with_a_naive_line_splitter() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = PointCloud::new(
            (0..1000)
                .map(|_| {
                    Point::new(
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(0.0..100.0),
                    )
                })
                .collect(),
        );
        write_cloud(&cloud, &path, CloudFormat::Csv).unwrap();
        let parsed = read_cloud(&path, CloudFormat::Csv).unwrap();
        assert_eq!(parsed.len(), 1000);

        // Independent parser: split on commas, parse as f64.
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,z,intensity"));
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(vals.len(), 4, "row {i}");
            let p = parsed.points[i];
            assert_eq!([p.x, p.y, p.z, p.intensity], vals[..], "row {i}");
        }
        // CSV keeps f64 exactly (shortest round-trip formatting).
        assert_eq!(cloud.points, parsed.points);
    }

    #[test]
    fn count_mismatches_are_reported_with_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.pcd");
        let text = pcd_header(5, false) + "1 2 3 4\n1 2 3 4\n";
        fs::write(&path, text).unwrap();
        let err = read_cloud(&path, CloudFormat::PcdAscii).unwrap_err().to_string();
        assert!(err.contains("POINTS 5"), "{err}");
        assert!(err.contains(":13:"), "last data line is file line 13: {err}");

        let path = dir.path().join("long.pcd");
        let text = pcd_header(1, false) + "1 2 3 4\n5 6 7 8\n";
        fs::write(&path, text).unwrap();
        let err = read_cloud(&path, CloudFormat::PcdAscii).unwrap_err().to_string();
        assert!(err.contains("more data rows"), "{err}");

        let path = dir.path().join("trunc.pcd");
        let mut bytes = pcd_header(2, true).into_bytes();
        bytes.extend_from_slice(&[0u8; 16]);
        fs::write(&path, bytes).unwrap();
        let err = read_cloud(&path, CloudFormat::PcdBinary).unwrap_err().to_string();
        assert!(err.contains("16 bytes"), "{err}");
    }

    #[test]
    fn non_finite_values_are_rejected_with_their_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.pcd");
        let text = pcd_header(2, false) + "1 2 3 4\n1 nan 3 4\n";
        fs::write(&path, text).unwrap();
        let err = read_cloud(&path, CloudFormat::PcdAscii).unwrap_err().to_string();
        assert!(err.contains("y is not finite"), "{err}");
        assert!(err.contains(":13:"), "offending row is file line 13: {err}");
    }

    #[test]
    fn missing_intensity_is_an_explicit_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("no_i.csv");
        fs::write(&path, "x,y,z\n1,2,3\n").unwrap();
        let err = read_cloud(&path, CloudFormat::Csv).unwrap_err().to_string();
        assert!(err.contains("intensity"), "{err}");

        let path = dir.path().join("no_i.pcd");
        let text = "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\n\
                    WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 2 3\n";
        fs::write(&path, text).unwrap();
        let err = read_cloud(&path, CloudFormat::PcdAscii).unwrap_err().to_string();
        assert!(err.contains("intensity"), "{err}");
    }

    #[test]
    fn auto_detection_follows_extension_and_data_kind() {
        let dir = tempdir().unwrap();
        let cloud = f32_cloud(4, 20);
        let ascii = dir.path().join("a.pcd");
        let binary = dir.path().join("b.pcd");
        let csv = dir.path().join("c.csv");
        write_cloud(&cloud, &ascii, CloudFormat::PcdAscii).unwrap();
        write_cloud(&cloud, &binary, CloudFormat::PcdBinary).unwrap();
        write_cloud(&cloud, &csv, CloudFormat::Csv).unwrap();
        assert_eq!(read_cloud_auto(&ascii).unwrap().points, cloud.points);
        assert_eq!(read_cloud_auto(&binary).unwrap().points, cloud.points);
        assert_eq!(read_cloud_auto(&csv).unwrap().points, cloud.points);

        // Explicit format disagreeing with the file is an error.
        let err = read_cloud(&ascii, CloudFormat::PcdBinary).unwrap_err().to_string();
        assert!(err.contains("DATA"), "{err}");
    }

    #[test]
    fn label_sidecar_round_trips_and_validates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![
            PointLabel::Environment,
            PointLabel::Aerosol,
            PointLabel::Aerosol,
        ];
        write_labels(&labels, &path).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);

        fs::write(&path, "index,label\n0,environment\n0,aerosol\n").unwrap();
        let err = read_labels(&path).unwrap_err().to_string();
        assert!(err.contains("twice"), "{err}");

        fs::write(&path, "index,label\n0,fog\n").unwrap();
        let err = read_labels(&path).unwrap_err().to_string();
        assert!(err.contains("fog"), "{err}");
    }

    #[test]
    fn config_defaults_match_the_documented_initial_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.json");
        fs::write(&path, "{}").unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.r_max, 30.0);
        assert_eq!(cfg.r_min, 5.0);
        assert_eq!(cfg.i_th, 2.0);
        assert_eq!(cfg.r_d, (4.0, 20.0));
        assert_eq!(cfg.k_nn, 6);
        assert_eq!(cfg.r_th, 0.45);
        assert_eq!(cfg.c_th, 0.4);
        assert_eq!(cfg.r_nn, 0.15);

        // Whitespace-only behaves like an absent config.
        fs::write(&path, "  \n").unwrap();
        assert_eq!(load_config(&path).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn config_range_violations_name_the_parameter_and_interval() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, r#"{"r_th": 0.7}"#).unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains("r_th"), "{err}");
        assert!(err.contains("[0.2, 0.6]"), "{err}");

        fs::write(&path, r#"{"K_nn": 3}"#).unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.k_nn, 3);

        fs::write(&path, r#"{"r_maximum": 20}"#).unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains("r_maximum"), "{err}");

        fs::write(&path, "not json").unwrap();
        assert!(load_config(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Any f32-valued cloud survives every format unchanged.
        #[test]
        fn all_formats_round_trip(values in proptest::collection::vec((-1e4f32..1e4, -1e4f32..1e4, -1e4f32..1e4, 0f32..1e3), 0..40)) {
            let cloud = PointCloud::new(
                values
                    .iter()
                    .map(|&(x, y, z, i)| Point::new(x as f64, y as f64, z as f64, i as f64))
                    .collect(),
            );
            let dir = tempdir().unwrap();
            for (name, format) in [
                ("p.pcd", CloudFormat::PcdAscii),
                ("b.pcd", CloudFormat::PcdBinary),
                ("c.csv", CloudFormat::Csv),
            ] {
                let path = dir.path().join(name);
                write_cloud(&cloud, &path, format).unwrap();
                let back = read_cloud(&path, format).unwrap();
                prop_assert_eq!(&cloud.points, &back.points);
            }
        }
    }
}
