//! LAS 1.2, point data format 2 (XYZ, intensity, RGB), little-endian.

use crate::cloud::{CloudPoint, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;

pub const HEADER_SIZE: usize = 227;
pub const RECORD_LENGTH: usize = 26;
pub const POINT_FORMAT: u8 = 2;

/// Written into the system identifier field: the format has no alpha channel.
pub const SYSTEM_IDENTIFIER: &str = "coastcam; RGBA alpha dropped";
pub const GENERATING_SOFTWARE: &str = concat!("coastcam ", env!("CARGO_PKG_VERSION"));

/// Default quantum: one millimeter.
pub const DEFAULT_SCALE: [f64; 3] = [0.001; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct LasHeader {
    pub version: (u8, u8),
    pub system_identifier: String,
    pub generating_software: String,
    pub header_size: u16,
    pub offset_to_points: u32,
    pub point_data_format: u8,
    pub point_record_length: u16,
    pub point_count: u32,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Offset that keeps stored integers small: the floor of the minimum per axis.
pub fn auto_offset(cloud: &PointCloud) -> [f64; 3] {
    match cloud.bounds() {
        Some((lo, _)) => [lo.x.floor(), lo.y.floor(), lo.z.floor()],
        None => [0.0; 3],
    }
}

fn quantize(value: f64, scale: f64, offset: f64) -> Result<i32> {
    let q = ((value - offset) / scale).round();
    if !(q.is_finite() && q >= i32::MIN as f64 && q <= i32::MAX as f64) {
        return Err(Error::CoordinateOverflow { value, scale, offset });
    }
    Ok(q as i32)
}

fn put_text(buf: &mut Vec<u8>, s: &str, len: usize) {
    let mut field = s.as_bytes()[..s.len().min(len)].to_vec();
    field.resize(len, 0);
    buf.extend_from_slice(&field);
}

/// Serializes the cloud. Colors are widened to 16 bits by ×257; alpha is lost.
pub fn write_las(cloud: &PointCloud, scale: [f64; 3], offset: [f64; 3]) -> Result<Vec<u8>> {
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::MalformedHeader(format!("scale factors must be positive, got {scale:?}")));
    }
    if offset.iter().any(|o| !o.is_finite()) {
        return Err(Error::NonFinite);
    }
    let count = u32::try_from(cloud.len())
        .map_err(|_| Error::MalformedHeader(format!("{} points exceed the LAS 1.2 count field", cloud.len())))?;
    let mut records = Vec::with_capacity(cloud.len() * RECORD_LENGTH);
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in &cloud.points {
        let v = [p.position.x, p.position.y, p.position.z];
        for axis in 0..3 {
            let q = quantize(v[axis], scale[axis], offset[axis])?;
            records.extend_from_slice(&q.to_le_bytes());
            let stored = q as f64 * scale[axis] + offset[axis];
            min[axis] = min[axis].min(stored);
            max[axis] = max[axis].max(stored);
        }
        records.extend_from_slice(&0u16.to_le_bytes()); // intensity
        records.push(0b0000_1001); // return 1 of 1
        records.push(0); // classification: never classified
        records.push(0); // scan angle rank
        records.push(0); // user data
        records.extend_from_slice(&0u16.to_le_bytes()); // point source id
        for c in &p.color[..3] {
            records.extend_from_slice(&(*c as u16 * 257).to_le_bytes());
        }
    }
    if cloud.is_empty() {
        min = [0.0; 3];
        max = [0.0; 3];
    }

    let mut buf = Vec::with_capacity(HEADER_SIZE + records.len());
    buf.extend_from_slice(b"LASF");
    buf.extend_from_slice(&0u16.to_le_bytes()); // file source id
    buf.extend_from_slice(&0u16.to_le_bytes()); // global encoding
    buf.extend_from_slice(&[0u8; 16]); // project GUID
    buf.push(1);
    buf.push(2);
    put_text(&mut buf, SYSTEM_IDENTIFIER, 32);
    put_text(&mut buf, GENERATING_SOFTWARE, 32);
    // Creation date left at zero so identical inputs give identical files.
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(HEADER_SIZE as u16).to_le_bytes());
    buf.extend_from_slice(&(HEADER_SIZE as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes()); // VLR count
    buf.push(POINT_FORMAT);
    buf.extend_from_slice(&(RECORD_LENGTH as u16).to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&[0u8; 16]);
    for v in scale.iter().chain(&offset) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for axis in 0..3 {
        buf.extend_from_slice(&max[axis].to_le_bytes());
        buf.extend_from_slice(&min[axis].to_le_bytes());
    }
    debug_assert_eq!(buf.len(), HEADER_SIZE);
    buf.extend_from_slice(&records);
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    fn text(&mut self, len: usize) -> String {
        let raw = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(len);
        String::from_utf8_lossy(&raw[..end]).into_owned()
    }
}

fn parse_header(bytes: &[u8]) -> Result<LasHeader> {
    if bytes.len() < 4 || &bytes[..4] != b"LASF" {
        return Err(Error::BadSignature);
    }
    if bytes.len() < HEADER_SIZE {
        return Err(Error::TruncatedFile(format!(
            "header needs {HEADER_SIZE} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut c = Cursor { bytes, pos: 24 };
    let version = (c.u8(), c.u8());
    let system_identifier = c.text(32);
    let generating_software = c.text(32);
    c.pos += 4; // creation date
    let header_size = c.u16();
    let offset_to_points = c.u32();
    let _vlr_count = c.u32();
    let point_data_format = c.u8();
    let point_record_length = c.u16();
    let point_count = c.u32();
    c.pos += 20; // points by return
    let mut scale = [0.0; 3];
    let mut offset = [0.0; 3];
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for s in &mut scale {
        *s = c.f64();
    }
    for o in &mut offset {
        *o = c.f64();
    }
    for axis in 0..3 {
        max[axis] = c.f64();
        min[axis] = c.f64();
    }
    if version != (1, 2) || point_data_format != POINT_FORMAT {
        return Err(Error::UnsupportedVersionOrFormat {
            major: version.0,
            minor: version.1,
            format: point_data_format,
        });
    }
    if (header_size as usize) < HEADER_SIZE || (offset_to_points as usize) < header_size as usize {
        return Err(Error::MalformedHeader(format!(
            "header size {header_size}, point offset {offset_to_points}"
        )));
    }
    if (point_record_length as usize) < RECORD_LENGTH {
        return Err(Error::MalformedHeader(format!(
            "record length {point_record_length} is shorter than {RECORD_LENGTH}"
        )));
    }
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || offset.iter().any(|o| !o.is_finite()) {
        return Err(Error::MalformedHeader(format!("scale {scale:?}, offset {offset:?}")));
    }
    Ok(LasHeader {
        version,
        system_identifier,
        generating_software,
        header_size,
        offset_to_points,
        point_data_format,
        point_record_length,
        point_count,
        scale,
        offset,
        min,
        max,
    })
}

/// Parses a LAS 1.2 / format 2 file. Colors are narrowed to 8 bits by ÷257
/// with rounding; alpha is set to 255.
pub fn read_las(bytes: &[u8]) -> Result<(LasHeader, PointCloud)> {
    let h = parse_header(bytes)?;
    let start = h.offset_to_points as u64;
    let need = start + h.point_count as u64 * h.point_record_length as u64;
    if (bytes.len() as u64) < need {
        let len = h.point_record_length as u64;
        let have = (bytes.len() as u64).saturating_sub(start) / len;
        return Err(Error::TruncatedFile(format!(
            "header announces {} points, file holds {have}",
            h.point_count
        )));
    }
    let mut points = Vec::with_capacity(h.point_count as usize);
    for k in 0..h.point_count as usize {
        let mut c = Cursor {
            bytes,
            pos: start as usize + k * h.point_record_length as usize,
        };
        let q = [c.i32(), c.i32(), c.i32()];
        c.pos += 8;
        let rgb = [c.u16(), c.u16(), c.u16()];
        let v: [f64; 3] = std::array::from_fn(|a| q[a] as f64 * h.scale[a] + h.offset[a]);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let narrow = |c: u16| (c as f64 / 257.0).round() as u8;
        points.push(CloudPoint {
            position: Point3::new(v[0], v[1], v[2]),
            color: [narrow(rgb[0]), narrow(rgb[1]), narrow(rgb[2]), 255],
        });
    }
    Ok((h, PointCloud { points }))
}
