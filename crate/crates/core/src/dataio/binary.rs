//! KITTI-style packed point clouds: consecutive little-endian `f32`
//! records of `x y z` followed by the schema's channels.

use std::fs;
use std::path::Path;

use crate::cloud::{ChannelSchema, PointCloud};
use crate::error::{Error, Result};

pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let width = cloud.schema().record_width();
    let mut buf = Vec::with_capacity(cloud.len() * width * 4);
    for i in 0..cloud.len() {
        for v in cloud.point(i).iter().chain(cloud.channels(i)) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: &Path, schema: ChannelSchema) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, schema)
}

fn decode(bytes: &[u8], schema: ChannelSchema) -> Result<PointCloud> {
    let record = schema.record_width() * 4;
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::SizeMismatch { len: bytes.len(), record });
    }
    let mut cloud = PointCloud::with_capacity(schema, bytes.len() / record);
    let mut vals = Vec::with_capacity(schema.record_width());
    for rec in bytes.chunks_exact(record) {
        vals.clear();
        vals.extend(rec.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64));
        cloud.push([vals[0], vals[1], vals[2]], &vals[3..]);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_misaligned() {
        assert!(decode(&[], ChannelSchema::Radar).unwrap().is_empty());
        let err = decode(&[0u8; 13 * 4], ChannelSchema::Lidar).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch { len: 52, record: 16 }));
    }

    #[test]
    fn little_endian_layout() {
        let mut c = PointCloud::new(ChannelSchema::Lidar);
        c.push([1.0, -2.0, 0.5], &[0.25]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        save_cloud(&c, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0.25f32.to_le_bytes());
    }
}
