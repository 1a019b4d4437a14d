//! Ingestion of the two public corpora in their standard binary formats:
//! MNIST IDX files (optionally gzip-compressed) and the SVHN cropped-digit
//! MATLAB 5 files. Payloads are flattened to f64 in [0,1]; SVHN label 10
//! is remapped to digit 0.

use flate2::read::GzDecoder;
use ndarray::Array1;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::data::LabeledCorpus;
use crate::error::MemeError;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, MemeError> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Parse an IDX file of unsigned bytes: magic 0x00000803 (3-D images) or
/// 0x00000801 (1-D labels).
pub fn parse_idx_u8(bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>), MemeError> {
    if bytes.len() < 4 {
        return Err(MemeError::Data("IDX file truncated".into()));
    }
    let magic = be_u32(&bytes[0..4]);
    if magic >> 8 != 0x08 {
        return Err(MemeError::Data(format!("unsupported IDX magic {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(MemeError::Data("IDX header truncated".into()));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| be_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect();
    let total: usize = dims.iter().product();
    if bytes.len() < header + total {
        return Err(MemeError::Data(format!(
            "IDX payload short: want {total} bytes, have {}",
            bytes.len() - header
        )));
    }
    Ok((dims, bytes[header..header + total].to_vec()))
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<LabeledCorpus, MemeError> {
    let (idim, ibytes) = parse_idx_u8(&read_maybe_gz(images_path)?)?;
    let (ldim, lbytes) = parse_idx_u8(&read_maybe_gz(labels_path)?)?;
    if idim.len() != 3 || ldim.len() != 1 || idim[0] != ldim[0] {
        return Err(MemeError::Data(format!(
            "MNIST shape mismatch: images {idim:?}, labels {ldim:?}"
        )));
    }
    let n = idim[0];
    let pix = idim[1] * idim[2];
    let mut payloads = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let chunk = &ibytes[i * pix..(i + 1) * pix];
        payloads.push(Array1::from_iter(chunk.iter().map(|&b| b as f64 / 255.0)));
        labels.push(lbytes[i] as u32);
    }
    Ok(LabeledCorpus { payloads, labels, payload_shape: vec![idim[1], idim[2]] })
}

// --- minimal MATLAB level-5 reader, enough for SVHN's X and y arrays ---

const MI_UINT8: u32 = 2;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_COMPRESSED: u32 = 15;
const MI_MATRIX: u32 = 14;

struct MatElement {
    dtype: u32,
    data: Vec<u8>,
}

fn mat_elements(mut body: &[u8]) -> Result<Vec<MatElement>, MemeError> {
    let mut out = Vec::new();
    while body.len() >= 8 {
        let (dtype, size, header);
        let t = u32::from_le_bytes([body[0], body[1], body[2], body[3]]);
        if t & 0xffff0000 != 0 {
            // small data element: type and byte count packed into one word
            dtype = t & 0xffff;
            size = (t >> 16) as usize;
            header = 4;
            if size > 4 {
                return Err(MemeError::Data("bad MAT small element".into()));
            }
        } else {
            dtype = t;
            size = u32::from_le_bytes([body[4], body[5], body[6], body[7]]) as usize;
            header = 8;
        }
        if body.len() < header + size {
            return Err(MemeError::Data("MAT element truncated".into()));
        }
        let data = body[header..header + size].to_vec();
        // elements are padded to 8-byte boundaries (small elements to 8 total)
        let advance = if header == 4 {
            8
        } else {
            header + size + ((8 - size % 8) % 8)
        };
        out.push(MatElement { dtype, data });
        body = &body[advance.min(body.len())..];
    }
    Ok(out)
}

struct MatArray {
    name: String,
    dims: Vec<usize>,
    /// numeric payload widened to u32 (SVHN stores uint8)
    values: Vec<u32>,
}

fn parse_matrix(data: &[u8]) -> Result<MatArray, MemeError> {
    let sub = mat_elements(data)?;
    if sub.len() < 4 {
        return Err(MemeError::Data("miMATRIX with too few subelements".into()));
    }
    let dims_el = &sub[1];
    if dims_el.dtype != MI_INT32 {
        return Err(MemeError::Data("unexpected dimensions subelement type".into()));
    }
    let dims: Vec<usize> = dims_el
        .data
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let name = String::from_utf8_lossy(&sub[2].data).trim_end_matches('\0').to_string();
    let real = &sub[3];
    let values: Vec<u32> = match real.dtype {
        MI_UINT8 => real.data.iter().map(|&b| b as u32).collect(),
        MI_INT32 | MI_UINT32 => real
            .data
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        9 => real
            .data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]) as u32)
            .collect(),
        other => {
            return Err(MemeError::Data(format!(
                "unsupported MAT numeric type {other} for array '{name}'"
            )))
        }
    };
    Ok(MatArray { name, dims, values })
}

fn parse_mat5(bytes: &[u8]) -> Result<Vec<MatArray>, MemeError> {
    if bytes.len() < 128 {
        return Err(MemeError::Data("MAT file truncated".into()));
    }
    let version = u16::from_le_bytes([bytes[124], bytes[125]]);
    if version != 0x0100 {
        return Err(MemeError::Data(format!("not a little-endian MAT 5 file (version {version:#06x})")));
    }
    let mut arrays = Vec::new();
    for el in mat_elements(&bytes[128..])? {
        match el.dtype {
            MI_COMPRESSED => {
                let mut out = Vec::new();
                flate2::read::ZlibDecoder::new(&el.data[..]).read_to_end(&mut out)?;
                for inner in mat_elements(&out)? {
                    if inner.dtype == MI_MATRIX {
                        arrays.push(parse_matrix(&inner.data)?);
                    }
                }
            }
            MI_MATRIX => arrays.push(parse_matrix(&el.data)?),
            _ => {}
        }
    }
    Ok(arrays)
}

/// Load SVHN cropped digits from a `*_32x32.mat` file. X is H×W×C×N in
/// column-major order; the output payload is flattened channel-major
/// (c, h, w) per image.
pub fn load_svhn(path: &Path) -> Result<LabeledCorpus, MemeError> {
    let arrays = parse_mat5(&std::fs::read(path)?)?;
    let x = arrays
        .iter()
        .find(|a| a.name == "X")
        .ok_or_else(|| MemeError::Data("SVHN file lacks array 'X'".into()))?;
    let y = arrays
        .iter()
        .find(|a| a.name == "y")
        .ok_or_else(|| MemeError::Data("SVHN file lacks array 'y'".into()))?;
    if x.dims.len() != 4 {
        return Err(MemeError::Data(format!("SVHN X must be 4-D, got {:?}", x.dims)));
    }
    let (h, w, c, n) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    if y.values.len() != n {
        return Err(MemeError::Data(format!(
            "SVHN label count {} != image count {n}",
            y.values.len()
        )));
    }
    let mut payloads = Vec::with_capacity(n);
    for img in 0..n {
        let mut v = Vec::with_capacity(h * w * c);
        for ch in 0..c {
            for row in 0..h {
                for col in 0..w {
                    // column-major: index = row + h*(col + w*(ch + c*img))
                    let idx = row + h * (col + w * (ch + c * img));
                    v.push(x.values[idx] as f64 / 255.0);
                }
            }
        }
        payloads.push(Array1::from_vec(v));
    }
    let labels = y.values.iter().map(|&l| if l == 10 { 0 } else { l }).collect();
    Ok(LabeledCorpus { payloads, labels, payload_shape: vec![c, h, w] })
}

/// Standard file names searched under a data directory.
pub struct DatasetPaths {
    pub mnist_images: PathBuf,
    pub mnist_labels: PathBuf,
    pub svhn: PathBuf,
}

pub fn locate(dir: &Path) -> Result<DatasetPaths, MemeError> {
    let pick = |names: &[&str]| -> Result<PathBuf, MemeError> {
        for n in names {
            let p = dir.join(n);
            if p.exists() {
                return Ok(p);
            }
        }
        Err(MemeError::Data(format!(
            "none of {names:?} found under {}",
            dir.display()
        )))
    };
    Ok(DatasetPaths {
        mnist_images: pick(&["train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"])?,
        mnist_labels: pick(&["train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"])?,
        svhn: pick(&["train_32x32.mat"])?,
    })
}

/// Load both corpora truncated to at most `subset` items each.
pub fn load_subset(dir: &Path, subset: usize) -> Result<(LabeledCorpus, LabeledCorpus), MemeError> {
    let paths = locate(dir)?;
    let mut mnist = load_mnist(&paths.mnist_images, &paths.mnist_labels)?;
    let mut svhn = load_svhn(&paths.svhn)?;
    mnist.payloads.truncate(subset);
    mnist.labels.truncate(subset);
    svhn.payloads.truncate(subset);
    svhn.labels.truncate(subset);
    Ok((mnist, svhn))
}
