//! ASCII PLY input/output for Lidar scans and colorized clouds.
//!
//! Input clouds need `x y z` vertex properties and may carry `intensity`.
//! Two optional header comments are understood: `comment frame <id>` and
//! `comment timestamp_ns <n>`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::colorize::{ColoredPointCloud, LidarPoint, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Frame assigned to clouds whose header does not name one.
pub const DEFAULT_LIDAR_FRAME: &str = "lidar";

fn ply_err(line: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        line,
        message: message.into(),
    }
}

struct Header {
    frame: Option<String>,
    timestamp_ns: Option<u64>,
    vertex_count: usize,
    props: Vec<String>,
}

fn read_header(lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>) -> Result<Header> {
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((n, Err(e))) => Err(ply_err(n + 1, e.to_string())),
            None => Err(ply_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("`ply`")?;
    if magic.trim() != "ply" {
        return Err(ply_err(n, "missing `ply` magic"));
    }
    let mut header = Header {
        frame: None,
        timestamp_ns: None,
        vertex_count: 0,
        props: Vec::new(),
    };
    let mut saw_format = false;
    let mut in_vertex = false;
    let mut seen_vertex = false;
    loop {
        let (n, line) = next("`end_header`")?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(ply_err(n, "only ASCII PLY is supported"));
                }
                saw_format = true;
            }
            Some("comment") => match (tok.next(), tok.next()) {
                (Some("frame"), Some(f)) => header.frame = Some(f.to_owned()),
                (Some("timestamp_ns"), Some(t)) => {
                    header.timestamp_ns = Some(t.parse().map_err(|_| ply_err(n, "bad timestamp_ns"))?);
                }
                _ => {}
            },
            Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().unwrap_or_default();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| ply_err(n, "bad element count"))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    if seen_vertex {
                        return Err(ply_err(n, "duplicate vertex element"));
                    }
                    seen_vertex = true;
                    header.vertex_count = count;
                } else if !seen_vertex && count > 0 {
                    return Err(ply_err(n, "elements before `vertex` are not supported"));
                }
            }
            Some("property") => {
                if in_vertex {
                    let rest: Vec<&str> = tok.collect();
                    if rest.first() == Some(&"list") {
                        return Err(ply_err(n, "list properties on vertices are not supported"));
                    }
                    let name = rest.last().ok_or_else(|| ply_err(n, "property without name"))?;
                    header.props.push((*name).to_owned());
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(ply_err(n, format!("unknown header keyword `{other}`"))),
        }
    }
    if !saw_format {
        return Err(ply_err(0, "missing format line"));
    }
    if !seen_vertex {
        return Err(ply_err(0, "missing vertex element"));
    }
    Ok(header)
}

/// Reads an ASCII PLY point cloud.
pub fn read_cloud(reader: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header = read_header(&mut lines)?;
    let find = |name: &str| header.props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(ply_err(0, "vertex element needs x, y and z")),
    };
    let ii = find("intensity");
    let mut points = Vec::with_capacity(header.vertex_count);
    let mut values = Vec::with_capacity(header.props.len());
    while points.len() < header.vertex_count {
        let (n, line) = match lines.next() {
            Some((n, Ok(l))) => (n + 1, l),
            Some((n, Err(e))) => return Err(ply_err(n + 1, e.to_string())),
            None => return Err(ply_err(0, "fewer vertices than declared")),
        };
        if line.trim().is_empty() {
            continue;
        }
        values.clear();
        for t in line.split_whitespace() {
            values.push(t.parse::<f64>().map_err(|_| ply_err(n, format!("bad number `{t}`")))?);
        }
        if values.len() != header.props.len() {
            return Err(ply_err(
                n,
                format!("expected {} values, found {}", header.props.len(), values.len()),
            ));
        }
        let position = Point3::new(values[ix], values[iy], values[iz]);
        if !position.iter().all(|v| v.is_finite()) {
            return Err(ply_err(n, "non-finite coordinate"));
        }
        points.push(LidarPoint {
            position,
            intensity: ii.map(|i| values[i] as f32),
        });
    }
    Ok(PointCloud {
        frame: header.frame.unwrap_or_else(|| DEFAULT_LIDAR_FRAME.to_owned()),
        timestamp_ns: header.timestamp_ns.unwrap_or(0),
        points,
    })
}

fn write_preamble(w: &mut impl Write, frame: &str, timestamp_ns: u64, count: usize) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment frame {frame}")?;
    writeln!(w, "comment timestamp_ns {timestamp_ns}")?;
    writeln!(w, "element vertex {count}")?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")
}

pub fn write_cloud(mut w: impl Write, cloud: &PointCloud) -> std::io::Result<()> {
    let has_intensity = cloud.points.iter().any(|p| p.intensity.is_some());
    write_preamble(&mut w, &cloud.frame, cloud.timestamp_ns, cloud.points.len())?;
    if has_intensity {
        writeln!(w, "property float intensity")?;
    }
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        let q = p.position;
        if has_intensity {
            writeln!(w, "{} {} {} {}", q.x, q.y, q.z, p.intensity.unwrap_or(0.0))?;
        } else {
            writeln!(w, "{} {} {}", q.x, q.y, q.z)?;
        }
    }
    w.flush()
}

/// Writes a colorized cloud: `x y z [intensity] red green blue source_camera`,
/// with `source_camera = -1` for uncolored points.
pub fn write_colored_cloud(mut w: impl Write, cloud: &ColoredPointCloud) -> std::io::Result<()> {
    let has_intensity = cloud.points.iter().any(|p| p.intensity.is_some());
    write_preamble(&mut w, &cloud.frame, cloud.timestamp_ns, cloud.points.len())?;
    if has_intensity {
        writeln!(w, "property float intensity")?;
    }
    writeln!(w, "property uchar red")?;
    writeln!(w, "property uchar green")?;
    writeln!(w, "property uchar blue")?;
    writeln!(w, "property int source_camera")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        let q = p.position;
        let [r, g, b] = p.color;
        let src = p.source_camera.map_or(-1, i32::from);
        if has_intensity {
            writeln!(w, "{} {} {} {} {r} {g} {b} {src}", q.x, q.y, q.z, p.intensity.unwrap_or(0.0))?;
        } else {
            writeln!(w, "{} {} {} {r} {g} {b} {src}", q.x, q.y, q.z)?;
        }
    }
    w.flush()
}

/// Parses a colorized cloud written by [`write_colored_cloud`].
pub fn read_colored_cloud(reader: impl Read) -> Result<ColoredPointCloud> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header = read_header(&mut lines)?;
    let find = |name: &str| {
        header
            .props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| ply_err(0, format!("missing property `{name}`")))
    };
    let idx = [
        find("x")?,
        find("y")?,
        find("z")?,
        find("red")?,
        find("green")?,
        find("blue")?,
        find("source_camera")?,
    ];
    let ii = header.props.iter().position(|p| p == "intensity");
    let mut points = Vec::with_capacity(header.vertex_count);
    for (n, line) in lines.take(header.vertex_count) {
        let line = line.map_err(|e| ply_err(n + 1, e.to_string()))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| ply_err(n + 1, format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if values.len() != header.props.len() {
            return Err(ply_err(n + 1, "wrong number of values"));
        }
        let src = values[idx[6]];
        points.push(crate::colorize::ColoredPoint {
            position: Point3::new(values[idx[0]], values[idx[1]], values[idx[2]]),
            intensity: ii.map(|i| values[i] as f32),
            color: [values[idx[3]] as u8, values[idx[4]] as u8, values[idx[5]] as u8],
            source_camera: (src >= 0.0).then_some(src as u16),
        });
    }
    if points.len() != header.vertex_count {
        return Err(ply_err(0, "fewer vertices than declared"));
    }
    Ok(ColoredPointCloud {
        frame: header.frame.unwrap_or_else(|| DEFAULT_LIDAR_FRAME.to_owned()),
        timestamp_ns: header.timestamp_ns.unwrap_or(0),
        points,
        stale_frames: 0,
    })
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(f)
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cloud(std::io::BufWriter::new(f), cloud).map_err(|e| Error::io(path, e))
}

pub fn save_colored_cloud(path: impl AsRef<Path>, cloud: &ColoredPointCloud) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_colored_cloud(std::io::BufWriter::new(f), cloud).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorize::ColoredPoint;
    use proptest::prelude::*;

    #[test]
    fn reads_minimal_cloud_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nproperty float intensity\nproperty uchar ring\nend_header\n\
                    1 2 3 0.5 7\n-1 -2 -3 0.25 8\n";
        let c = read_cloud(text.as_bytes()).unwrap();
        assert_eq!(c.frame, DEFAULT_LIDAR_FRAME);
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.points[1].position, Point3::new(-1.0, -2.0, -3.0));
        assert_eq!(c.points[0].intensity, Some(0.5));
    }

    #[test]
    fn rejects_binary_and_short_files() {
        let bin = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(read_cloud(bin.as_bytes()).is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                     property float z\nend_header\n1 2 3\n";
        assert!(read_cloud(short.as_bytes()).is_err());
        let no_z = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nend_header\n";
        assert!(read_cloud(no_z.as_bytes()).is_err());
    }

    #[test]
    fn colored_output_layout() {
        let cloud = ColoredPointCloud {
            frame: "L".into(),
            timestamp_ns: 9,
            points: vec![
                ColoredPoint {
                    position: Point3::new(1.0, 2.0, 3.0),
                    intensity: None,
                    color: [255, 0, 0],
                    source_camera: Some(1),
                },
                ColoredPoint {
                    position: Point3::new(0.5, 0.0, -1.0),
                    intensity: None,
                    color: [128, 128, 128],
                    source_camera: None,
                },
            ],
            stale_frames: 0,
        };
        let mut buf = Vec::new();
        write_colored_cloud(&mut buf, &cloud).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("property uchar red\nproperty uchar green\nproperty uchar blue\nproperty int source_camera\n"));
        assert!(text.ends_with("1 2 3 255 0 0 1\n0.5 0 -1 128 128 128 -1\n"));
        assert_eq!(read_colored_cloud(buf.as_slice()).unwrap(), cloud);
        // The colorized file is still a valid input cloud.
        assert_eq!(read_cloud(buf.as_slice()).unwrap().points.len(), 2);
    }

    proptest! {
        #[test]
        fn cloud_round_trip(pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64, prop::option::of(0.0..255.0f32)), 0..50)) {
            let any_i = pts.iter().any(|p| p.3.is_some());
            let cloud = PointCloud {
                frame: "velodyne".into(),
                timestamp_ns: 123,
                points: pts.iter().map(|&(x, y, z, i)| LidarPoint {
                    position: Point3::new(x, y, z),
                    intensity: if any_i { Some(i.unwrap_or(0.0)) } else { None },
                }).collect(),
            };
            let mut buf = Vec::new();
            write_cloud(&mut buf, &cloud).unwrap();
            prop_assert_eq!(read_cloud(buf.as_slice()).unwrap(), cloud);
        }
    }
}
