//! IDX files (the MNIST distribution format): a big-endian header with a
//! magic number and dimension sizes, followed by raw unsigned bytes. Files
//! may be gzip-compressed.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A stack of `count` greyscale images of `rows × cols` bytes each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| Error::Format {
            path: path.into(),
            offset: 0,
            message: format!("gzip stream: {e}"),
        })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.into(),
            offset: self.offset as u64,
            message: message.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        let b = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| self.error(format!("truncated header reading {what}")))?;
        let v = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
        self.offset = end;
        Ok(v)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32("magic number")?;
        if got != expected {
            self.offset -= 4;
            return Err(self.error(format!("bad magic number 0x{got:08x}, expected 0x{expected:08x}")));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<Vec<u8>> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            self.offset = self.bytes.len();
            return Err(self.error(format!("truncated payload: expected {len} bytes, found {available}")));
        }
        if available > len {
            self.offset += len;
            return Err(self.error(format!("{} trailing bytes after payload", available - len)));
        }
        let out = self.bytes[self.offset..].to_vec();
        self.offset += len;
        Ok(out)
    }
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(IMAGES_MAGIC)?;
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let pixels = cur.payload(count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(LABELS_MAGIC)?;
    let count = cur.u32("label count")? as usize;
    cur.payload(count)
}

pub fn write_idx_images(mut w: impl Write, images: &IdxImages) -> Result<()> {
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels(mut w: impl Write, labels: &[u8]) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}

/// MNIST images with their digit labels.
#[derive(Clone, Debug)]
pub struct MnistRaw {
    pub images: IdxImages,
    pub digits: Vec<u8>,
}

impl MnistRaw {
    /// Pixel values of image `i` scaled to `[0, 1]`.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.images.image(i).iter().map(|&p| p as f64 / 255.0).collect()
    }
}

pub fn mnist_load(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistRaw> {
    let images = read_idx_images(&images_path)?;
    let digits = read_idx_labels(&labels_path)?;
    if images.count != digits.len() {
        return Err(Error::Format {
            path: labels_path.as_ref().into(),
            offset: 4,
            message: format!("{} labels for {} images", digits.len(), images.count),
        });
    }
    if let Some(pos) = digits.iter().position(|&d| d > 9) {
        return Err(Error::Format {
            path: labels_path.as_ref().into(),
            offset: 8 + pos as u64,
            message: format!("digit label {} out of range", digits[pos]),
        });
    }
    Ok(MnistRaw { images, digits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;

    fn sample() -> IdxImages {
        IdxImages {
            count: 3,
            rows: 2,
            cols: 2,
            pixels: (0..12).map(|v| (v * 21) as u8).collect(),
        }
    }

    #[test]
    fn round_trip_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        let plain = dir.path().join("img");
        write_idx_images(File::create(&plain).unwrap(), &img).unwrap();
        assert_eq!(read_idx_images(&plain).unwrap(), img);

        let gz = dir.path().join("img.gz");
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), Compression::default());
        write_idx_images(&mut enc, &img).unwrap();
        enc.finish().unwrap();
        assert_eq!(read_idx_images(&gz).unwrap(), img);

        let lab = dir.path().join("lab");
        write_idx_labels(File::create(&lab).unwrap(), &[0, 7, 9]).unwrap();
        let raw = mnist_load(&plain, &lab).unwrap();
        assert_eq!(raw.digits, vec![0, 7, 9]);
        assert_eq!(raw.vector(0)[0], 0.0);
        assert_eq!(raw.vector(2)[3], 231.0 / 255.0);
    }

    #[test]
    fn format_errors_name_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        write_idx_images(&mut bytes, &sample()).unwrap();

        let p = dir.path().join("trunc");
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        match read_idx_images(&p) {
            Err(Error::Format { offset, message, .. }) => {
                assert_eq!(offset, bytes.len() as u64 - 1);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }

        let p = dir.path().join("magic");
        let mut bad = bytes.clone();
        bad[3] = 0x01;
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_idx_images(&p), Err(Error::Format { offset: 0, .. })));

        let p = dir.path().join("header");
        std::fs::write(&p, &bytes[..6]).unwrap();
        assert!(matches!(read_idx_images(&p), Err(Error::Format { offset: 4, .. })));

        let img = dir.path().join("img");
        std::fs::write(&img, &bytes).unwrap();
        let lab = dir.path().join("lab");
        write_idx_labels(File::create(&lab).unwrap(), &[1, 2]).unwrap();
        assert!(matches!(mnist_load(&img, &lab), Err(Error::Format { .. })));
    }
}
