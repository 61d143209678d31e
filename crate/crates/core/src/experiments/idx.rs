use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown IDX magic {0:#010x}")]
    BadMagic(u32),
    #[error("IDX payload is truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
}

/// Contents of an unsigned-byte IDX file.
#[derive(Clone, Debug, PartialEq)]
pub enum Idx {
    Labels(Vec<usize>),
    /// `n × (rows · cols)` pixels scaled to `[0, 1]`.
    Images {
        data: Tensor,
        rows: usize,
        cols: usize,
    },
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::TruncatedFile {
            expected: at + 4,
            found: bytes.len(),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<Idx, IdxError> {
    let magic = be_u32(bytes, 0)?;
    let rank = match magic {
        LABELS_MAGIC => 1,
        IMAGES_MAGIC => 3,
        m => return Err(IdxError::BadMagic(m)),
    };
    let dims = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let start = 4 + 4 * rank;
    let len: usize = dims.iter().product();
    let payload = bytes.get(start..start + len).ok_or(IdxError::TruncatedFile {
        expected: start + len,
        found: bytes.len(),
    })?;
    Ok(match rank {
        1 => Idx::Labels(payload.iter().map(|&b| b as usize).collect()),
        _ => {
            let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
            Idx::Images {
                data: Tensor::new(vec![dims[0], dims[1] * dims[2]], data).expect("sized payload"),
                rows: dims[1],
                cols: dims[2],
            }
        }
    })
}

pub fn load_idx(path: &Path) -> Result<Idx, IdxError> {
    let bytes = fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_idx(&bytes)
}

/// IDX bytes of a label file.
pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// IDX bytes of an image file with `n` images of `rows × cols` pixels.
pub fn encode_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [n, rows, cols] {
        out.extend((d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_fixture() {
        let bytes = encode_labels(&[7, 2, 1]);
        assert_eq!(&bytes[..8], &[0, 0, 8, 1, 0, 0, 0, 3]);
        assert_eq!(parse_idx(&bytes).unwrap(), Idx::Labels(vec![7, 2, 1]));
    }

    #[test]
    fn image_fixture() {
        let bytes = encode_images(&[0, 1, 2, 3, 4, 5, 6, 7], 2, 2, 2);
        let Idx::Images { data, rows, cols } = parse_idx(&bytes).unwrap() else {
            panic!()
        };
        assert_eq!((rows, cols), (2, 2));
        assert_eq!(data.shape(), &[2, 4]);
        assert_eq!(data.data()[1], 1.0 / 255.0);
        assert_eq!(data.data()[7], 7.0 / 255.0);
    }

    #[test]
    fn errors() {
        let mut bytes = encode_labels(&[1]);
        bytes[3] = 5;
        assert!(matches!(parse_idx(&bytes), Err(IdxError::BadMagic(0x805))));
        let short = encode_images(&[0; 3], 1, 2, 2);
        assert!(matches!(parse_idx(&short), Err(IdxError::TruncatedFile { .. })));
    }
}
