//! NWTF weight container and network manifest.
//!
//! NWTF is a deliberately small little-endian container for the 4-D filter
//! banks of convolutional layers. It was designed for this crate; there is no
//! upstream standard. Layout:
//!
//! ```text
//! header (16 bytes)
//!   magic      b"NWTF"
//!   version    u32 = 1
//!   count      u32   number of tensors
//!   reserved   u32 = 0
//! per tensor
//!   name_len   u32, then name_len bytes of UTF-8
//!   ndim       u32 = 4
//!   dims       4 x u64  (n, w, h, c)
//!   dtype      u8  (1 = f32)
//!   payload    n*w*h*c little-endian f32, row-major (filter, width, height, channel)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};

pub const MAGIC: &[u8; 4] = b"NWTF";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const DTYPE_F32: u8 = 1;

/// Weight tensors keyed by layer name, in file order.
pub type WeightMap = IndexMap<String, FilterTensor>;

/// Filter bank of one convolutional layer: `n` filters of `w x h x c` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTensor {
    name: String,
    n: usize,
    w: usize,
    h: usize,
    c: usize,
    data: Vec<f32>,
}

impl FilterTensor {
    pub fn new(
        name: impl Into<String>,
        [n, w, h, c]: [usize; 4],
        data: Vec<f32>,
    ) -> Result<Self> {
        let t = FilterTensor {
            name: name.into(),
            n,
            w,
            h,
            c,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| PruneError::InvalidTensor {
            tensor: self.name.clone(),
            reason,
        };
        if self.name.is_empty() {
            return Err(invalid("empty tensor name".into()));
        }
        if [self.n, self.w, self.h, self.c].contains(&0) {
            return Err(invalid(format!(
                "all dimensions must be >= 1, got [{}, {}, {}, {}]",
                self.n, self.w, self.h, self.c
            )));
        }
        let expected = self
            .n
            .checked_mul(self.w)
            .and_then(|x| x.checked_mul(self.h))
            .and_then(|x| x.checked_mul(self.c))
            .ok_or_else(|| invalid("dimension product overflows".into()))?;
        if self.data.len() != expected {
            return Err(invalid(format!(
                "{} values for dims [{}, {}, {}, {}] ({} expected)",
                self.data.len(),
                self.n,
                self.w,
                self.h,
                self.c,
                expected
            )));
        }
        if let Some(index) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(PruneError::NonFinite {
                tensor: self.name.clone(),
                index,
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of filters.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.w, self.h, self.c]
    }

    /// Spatial size of one filter, `w * h`.
    pub fn d(&self) -> usize {
        self.w * self.h
    }

    pub fn filter_len(&self) -> usize {
        self.w * self.h * self.c
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Weights of filter `l` (0-based), ordered (width, height, channel).
    pub fn filter(&self, l: usize) -> &[f32] {
        let len = self.filter_len();
        &self.data[l * len..(l + 1) * len]
    }

    pub fn filters(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.filter_len())
    }
}

pub fn encode_weights(weights: &WeightMap) -> Result<Vec<u8>> {
    let count = u32::try_from(weights.len())
        .map_err(|_| PruneError::InvalidArgument("too many tensors".into()))?;
    let payload: usize = weights
        .values()
        .map(|t| 4 + t.name.len() + 4 + 32 + 1 + 4 * t.data.len())
        .sum();
    let mut buf = Vec::with_capacity(HEADER_LEN + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for (key, t) in weights {
        t.validate()?;
        if key != &t.name {
            return Err(PruneError::InvalidTensor {
                tensor: t.name.clone(),
                reason: format!("stored under mismatched key '{key}'"),
            });
        }
        let name_len = u32::try_from(t.name.len()).map_err(|_| PruneError::InvalidTensor {
            tensor: t.name.clone(),
            reason: "name too long".into(),
        })?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&4u32.to_le_bytes());
        for dim in t.dims() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        buf.push(DTYPE_F32);
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: u64, tensor: &str) -> Result<&'a [u8]> {
        let available = (self.bytes.len() - self.pos) as u64;
        if len > available {
            return Err(PruneError::Truncated {
                tensor: tensor.to_string(),
                needed: len,
                available,
            });
        }
        let len = len as usize;
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, tensor: &str) -> Result<u32> {
        let b = self.take(4, tensor)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, tensor: &str) -> Result<u64> {
        let b = self.take(8, tensor)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<WeightMap> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(PruneError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let header = "<header>";
    let version = cur.u32(header)?;
    if version != FORMAT_VERSION {
        return Err(PruneError::UnsupportedVersion(version));
    }
    let count = cur.u32(header)?;
    let _reserved = cur.u32(header)?;

    let mut out = WeightMap::new();
    for i in 0..count {
        let placeholder = format!("<tensor #{i}>");
        let name_len = cur.u32(&placeholder)?;
        let name_bytes = cur.take(name_len as u64, &placeholder)?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| {
            PruneError::InvalidTensor {
                tensor: placeholder.clone(),
                reason: "name is not valid UTF-8".into(),
            }
        })?;
        let ndim = cur.u32(&name)?;
        if ndim != 4 {
            return Err(PruneError::UnsupportedRank { tensor: name, ndim });
        }
        let mut dims = [0u64; 4];
        for d in &mut dims {
            *d = cur.u64(&name)?;
        }
        let dtype = cur.take(1, &name)?[0];
        if dtype != DTYPE_F32 {
            return Err(PruneError::UnsupportedDtype { tensor: name, code: dtype });
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| PruneError::InvalidTensor {
                tensor: name.clone(),
                reason: "dimension product overflows".into(),
            })?;
        let payload = cur.take(count, &name)?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let dims = dims.map(|d| d as usize);
        let tensor = FilterTensor::new(name.clone(), dims, data)?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(PruneError::DuplicateTensor(name));
        }
    }
    if cur.pos != bytes.len() {
        return Err(PruneError::InvalidArgument(format!(
            "{}: {} trailing bytes after the last tensor",
            path.display(),
            bytes.len() - cur.pos
        )));
    }
    Ok(out)
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PruneError::io(path, e))?;
    decode_weights(&bytes, path)
}

pub fn write_weights(weights: &WeightMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_weights(weights)?;
    fs::write(path, bytes).map_err(|e| PruneError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv2d,
    Dense,
    /// Layers without weights that keep the channel count (pooling,
    /// activations, normalization without learned per-channel terms).
    #[serde(alias = "other-passthrough", alias = "passthrough")]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKind,
    /// Kernel `[w, h]`; optional for dense and passthrough layers.
    #[serde(default)]
    pub kernel: Option<[usize; 2]>,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Output spatial size `[H_out, W_out]`; `null` when unknown.
    #[serde(default)]
    pub out_spatial: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub bias: bool,
    /// Marks an intentional channel-count change relative to the previous
    /// conv layer (e.g. a reshape the manifest cannot describe).
    #[serde(default, skip_serializing_if = "is_false")]
    pub channel_change: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl LayerEntry {
    pub fn conv2d(
        name: impl Into<String>,
        kernel: [usize; 2],
        in_channels: usize,
        out_channels: usize,
        out_spatial: Option<[usize; 2]>,
    ) -> Self {
        LayerEntry {
            name: name.into(),
            kind: LayerKind::Conv2d,
            kernel: Some(kernel),
            in_channels,
            out_channels,
            out_spatial,
            bias: false,
            channel_change: false,
        }
    }

    pub fn dense(name: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        LayerEntry {
            name: name.into(),
            kind: LayerKind::Dense,
            kernel: None,
            in_channels: in_features,
            out_channels: out_features,
            out_spatial: None,
            bias: false,
            channel_change: false,
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }
}

/// Sequential layer list of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetworkManifest {
    pub layers: Vec<LayerEntry>,
}

impl NetworkManifest {
    pub fn new(layers: Vec<LayerEntry>) -> Result<Self> {
        let m = NetworkManifest { layers };
        m.validate()?;
        Ok(m)
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerEntry> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Conv2d)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if layer.name.is_empty() {
                return Err(PruneError::Manifest("layer with empty name".into()));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(PruneError::Manifest(format!(
                    "duplicate layer name '{}'",
                    layer.name
                )));
            }
            if layer.kind != LayerKind::Other && (layer.in_channels == 0 || layer.out_channels == 0)
            {
                return Err(PruneError::Manifest(format!(
                    "layer '{}' must have non-zero in/out channels",
                    layer.name
                )));
            }
            if layer.kind == LayerKind::Conv2d {
                match layer.kernel {
                    Some([w, h]) if w > 0 && h > 0 => {}
                    _ => {
                        return Err(PruneError::Manifest(format!(
                            "conv2d layer '{}' needs a positive kernel [w, h]",
                            layer.name
                        )))
                    }
                }
            }
        }

        let mut prev_conv: Option<&LayerEntry> = None;
        for layer in &self.layers {
            match layer.kind {
                LayerKind::Conv2d => {
                    if let Some(prev) = prev_conv {
                        if !layer.channel_change && layer.in_channels != prev.out_channels {
                            return Err(PruneError::ChannelMismatch {
                                prev: prev.name.clone(),
                                next: layer.name.clone(),
                                prev_out: prev.out_channels,
                                next_in: layer.in_channels,
                            });
                        }
                    }
                    prev_conv = Some(layer);
                }
                LayerKind::Dense => prev_conv = None,
                LayerKind::Other => {}
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(json: &str) -> Result<NetworkManifest> {
    let manifest: NetworkManifest =
        serde_json::from_str(json).map_err(|e| PruneError::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<NetworkManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PruneError::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_manifest(manifest: &NetworkManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| PruneError::io(path, e))
}
