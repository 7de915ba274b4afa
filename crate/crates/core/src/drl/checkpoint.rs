//! Flat binary policy checkpoints.
//!
//! ```text
//! magic        b"APPC"
//! version      u32 (= 1)
//! input_dim    u32
//! hidden_width u32
//! price_low    f64
//! price_high   f64
//! param_count  u64
//! params       param_count × f64
//! ```
//! All fields little-endian.

use super::policy::{PolicyParams, PriceRange};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"APPC";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 8;

pub fn encode_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(params.hidden_width() as u32).to_le_bytes());
    out.extend_from_slice(&params.range.low.to_le_bytes());
    out.extend_from_slice(&params.range.high.to_le_bytes());
    out.extend_from_slice(&(params.param_count() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn field<const N: usize>(data: &[u8], at: usize) -> [u8; N] {
    data[at..at + N].try_into().expect("header length checked")
}

pub fn decode_checkpoint(data: &[u8]) -> Result<PolicyParams> {
    if data.len() < HEADER_LEN {
        return Err(Error::Decode("checkpoint header truncated".to_string()));
    }
    if &data[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Decode("bad checkpoint magic".to_string()));
    }
    let version = u32::from_le_bytes(field(data, 4));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Decode(format!("unsupported checkpoint version {version}")));
    }
    let input_dim = u32::from_le_bytes(field(data, 8)) as usize;
    let width = u32::from_le_bytes(field(data, 12)) as usize;
    let low = f64::from_le_bytes(field(data, 16));
    let high = f64::from_le_bytes(field(data, 24));
    let count = u64::from_le_bytes(field(data, 32));
    let body = &data[HEADER_LEN..];
    if (body.len() as u64) != count.saturating_mul(8) {
        return Err(Error::Decode(format!(
            "header declares {count} parameters but {} bytes follow",
            body.len()
        )));
    }
    if input_dim == 0 || width == 0 || input_dim > 1 << 16 || width > 1 << 16 {
        return Err(Error::Decode("implausible network shape".to_string()));
    }
    if !(low.is_finite() && high.is_finite()) {
        return Err(Error::Decode("non-finite price range".to_string()));
    }
    let range = PriceRange::new(low, high).map_err(|e| Error::Decode(e.to_string()))?;
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decode("non-finite parameter".to_string()));
    }
    PolicyParams::from_values(input_dim, width, range, values).map_err(|e| Error::Decode(e.to_string()))
}
