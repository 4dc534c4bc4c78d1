//! IDX image/label files as distributed with MNIST and Fashion-MNIST.
//!
//! Images: big-endian magic `0x00000803`, then item count, rows and columns as
//! big-endian `u32`, then one `u8` per pixel. Labels: magic `0x00000801`, item
//! count, then one `u8` per label.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::dataset::LabeledDataset;
use crate::io::write_file;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImagesHeader {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ImagesHeader {
    pub const LEN: usize = 16;

    pub fn payload_len(&self) -> Option<usize> {
        self.count.checked_mul(self.rows)?.checked_mul(self.cols)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Validates an image-file header against the total file length. Only the
/// first 16 bytes are inspected.
pub fn parse_images_header(header: &[u8], file_len: u64) -> Result<ImagesHeader> {
    if header.len() < ImagesHeader::LEN {
        return Err(Error::Idx(format!("image header needs {} bytes, found {}", ImagesHeader::LEN, header.len())));
    }
    let magic = be_u32(header, 0);
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic { expected: IMAGES_MAGIC, found: magic });
    }
    let h = ImagesHeader {
        count: be_u32(header, 4) as usize,
        rows: be_u32(header, 8) as usize,
        cols: be_u32(header, 12) as usize,
    };
    if h.count == 0 || h.rows == 0 || h.cols == 0 {
        return Err(Error::Idx(format!("zero dimension in {}x{}x{}", h.count, h.rows, h.cols)));
    }
    let payload = h.payload_len().ok_or_else(|| Error::Idx("dimension product overflows".into()))?;
    let expected = ImagesHeader::LEN as u64 + payload as u64;
    if expected != file_len {
        return Err(Error::Idx(format!(
            "header declares {}x{}x{} pixels ({expected} bytes) but the file has {file_len} bytes",
            h.count, h.rows, h.cols
        )));
    }
    Ok(h)
}

/// Validates a label-file header; returns the label count.
pub fn parse_labels_header(header: &[u8], file_len: u64) -> Result<usize> {
    if header.len() < 8 {
        return Err(Error::Idx(format!("label header needs 8 bytes, found {}", header.len())));
    }
    let magic = be_u32(header, 0);
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic { expected: LABELS_MAGIC, found: magic });
    }
    let count = be_u32(header, 4) as usize;
    if 8 + count as u64 != file_len {
        return Err(Error::Idx(format!("header declares {count} labels but the file has {file_len} bytes")));
    }
    Ok(count)
}

/// Parses an in-memory image file into its header and pixel payload.
pub fn parse_images(bytes: &[u8]) -> Result<(ImagesHeader, &[u8])> {
    let h = parse_images_header(bytes, bytes.len() as u64)?;
    Ok((h, &bytes[ImagesHeader::LEN..]))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    parse_labels_header(bytes, bytes.len() as u64)?;
    Ok(&bytes[8..])
}

fn read_validated<H>(path: &Path, header_len: usize, parse: impl Fn(&[u8], u64) -> Result<H>) -> Result<(H, Vec<u8>)> {
    let mut file = File::open(path).map_err(|e| Error::file(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::file(path, e))?.len();
    let mut header = vec![0u8; header_len];
    file.read_exact(&mut header)
        .map_err(|_| Error::Idx(format!("{}: shorter than the {header_len}-byte header", path.display())))?;
    let parsed = parse(&header, file_len)?;
    let mut payload = Vec::with_capacity((file_len as usize).saturating_sub(header_len));
    file.read_to_end(&mut payload).map_err(|e| Error::file(path, e))?;
    Ok((parsed, payload))
}

/// Loads an IDX image/label pair as a single-channel dataset with pixels
/// scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (h, pixels) = read_validated(images_path.as_ref(), ImagesHeader::LEN, parse_images_header)?;
    let (count, labels) = read_validated(labels_path.as_ref(), 8, parse_labels_header)?;
    if count != h.count {
        return Err(Error::Idx(format!("{} images but {count} labels", h.count)));
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let images = Tensor::new(vec![h.count, 1, h.rows, h.cols], data)?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    LabeledDataset::new(images, labels, classes)
}

pub fn encode_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ImagesHeader::LEN + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn quantize_pixel(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a single-channel dataset, quantizing pixels to `u8`.
pub fn write_idx(dataset: &LabeledDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let shape = dataset.image_shape();
    if shape[0] != 1 {
        return Err(Error::InvalidShape(format!("IDX stores single-channel images, got {shape:?}")));
    }
    let pixels: Vec<u8> = dataset.images().data().iter().map(|&v| quantize_pixel(v)).collect();
    let labels: Vec<u8> = dataset
        .labels()
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::InvalidParameter(format!("label {l} does not fit in a byte"))))
        .collect::<Result<_>>()?;
    write_file(images_path.as_ref(), &encode_images(dataset.len(), shape[1], shape[2], &pixels))?;
    write_file(labels_path.as_ref(), &encode_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture_dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn two_image_fixture() {
        let dir = fixture_dir();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        std::fs::write(&img, encode_images(2, 2, 2, &[0, 255, 255, 0, 255, 255, 0, 0])).unwrap();
        std::fs::write(&lbl, encode_labels(&[1, 0])).unwrap();
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 2, 2]);
        assert_eq!(ds.images().data(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn three_labels() {
        assert_eq!(parse_labels(&encode_labels(&[1, 0, 2])).unwrap(), &[1, 0, 2]);
    }

    #[test]
    fn mnist_test_header() {
        // header of the official t10k-images file, with a zero payload of the right size
        let bytes = encode_images(10_000, 28, 28, &vec![0u8; 10_000 * 784]);
        assert_eq!(&bytes[..16], &[0, 0, 8, 3, 0, 0, 0x27, 0x10, 0, 0, 0, 28, 0, 0, 0, 28]);
        let (h, payload) = parse_images(&bytes).unwrap();
        assert_eq!((h.count, h.rows, h.cols), (10_000, 28, 28));
        assert_eq!(payload.len(), 7_840_000);
    }

    #[test]
    fn rejects_bad_magic_and_lengths() {
        let mut bytes = encode_images(1, 2, 2, &[0; 4]);
        assert!(parse_images(&bytes[..19]).is_err());
        bytes[3] = 0x01;
        assert!(matches!(parse_images(&bytes), Err(Error::BadMagic { found: 0x801, .. })));
        assert!(matches!(parse_labels(&encode_images(1, 1, 1, &[0])), Err(Error::BadMagic { .. })));
        let mut labels = encode_labels(&[1, 2]);
        labels.push(0);
        assert!(parse_labels(&labels).is_err());
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = fixture_dir();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        std::fs::write(&img, encode_images(2, 1, 1, &[0, 0])).unwrap();
        std::fs::write(&lbl, encode_labels(&[0, 0, 0])).unwrap();
        assert!(load_idx(&img, &lbl).is_err());
    }

    #[test]
    fn fuzzed_headers_are_rejected() {
        let original = encode_images(3, 4, 5, &[7u8; 60]);
        let mut rng = ChaCha8Rng::seed_from_u64(0x1d8);
        for _ in 0..200 {
            let mut bytes = original.clone();
            let flips = rng.gen_range(1..=3);
            for _ in 0..flips {
                let at = rng.gen_range(0..16);
                bytes[at] ^= rng.gen_range(1..=255u8);
            }
            if bytes[..16] == original[..16] {
                continue;
            }
            let parsed = parse_images_header(&bytes[..16], bytes.len() as u64);
            if let Ok(h) = parsed {
                // a multi-byte flip may preserve the pixel count; those are valid files
                assert_eq!(h.payload_len(), Some(60));
            }
        }
    }

    #[test]
    fn write_then_load_round_trips_quantized_pixels() {
        let dir = fixture_dir();
        let images = Tensor::new(vec![2, 1, 1, 3], vec![0.0, 0.5, 1.0, 0.2, 0.4, 0.6]).unwrap();
        let ds = LabeledDataset::new(images, vec![3, 1], 4).unwrap();
        write_idx(&ds, dir.path().join("i"), dir.path().join("l")).unwrap();
        let back = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.images().data().iter().zip(ds.images().data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
