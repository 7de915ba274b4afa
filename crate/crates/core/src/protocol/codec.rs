//! Binary and hex-text encodings of pseudonym sets.
//!
//! Binary layout, integers little-endian:
//!
//! ```text
//! magic    b"APSS"
//! version  u8 (= 1)
//! owner    u32
//! epoch    u64
//! count    u32
//! count × { attribute_part [32]  random_len u8  random_part [random_len]  tag [16] }
//! ```
//!
//! Text layout: a header line `APSS1 owner=<u32> epoch=<u64> count=<n>`
//! followed by one `<attribute hex>:<random part>:<tag hex>` line per pseudonym.

use super::{AttributeDigest, Pseudonym, PseudonymSet, DIGEST_LEN, TAG_LEN};
use crate::error::{Error, Result};
use crate::market::FollowerId;

pub const SET_MAGIC: &[u8; 4] = b"APSS";
pub const SET_VERSION: u8 = 1;

pub fn encode_set(set: &PseudonymSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + set.len() * (DIGEST_LEN + TAG_LEN + 8));
    out.extend_from_slice(SET_MAGIC);
    out.push(SET_VERSION);
    out.extend_from_slice(&set.owner.0.to_le_bytes());
    out.extend_from_slice(&set.epoch.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for p in &set.pseudonyms {
        out.extend_from_slice(&p.attribute_part.0);
        out.push(p.random_part.len() as u8);
        out.extend_from_slice(p.random_part.as_bytes());
        out.extend_from_slice(&p.tag);
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.data.len())
            .ok_or_else(|| Error::Decode(format!("truncated input at byte {}", self.pos)))?;
        let bytes = &self.data[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_set(data: &[u8]) -> Result<PseudonymSet> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != SET_MAGIC {
        return Err(Error::Decode("bad magic".to_string()));
    }
    let version = r.array::<1>()?[0];
    if version != SET_VERSION {
        return Err(Error::Decode(format!("unsupported version {version}")));
    }
    let owner = FollowerId(u32::from_le_bytes(r.array()?));
    let epoch = u64::from_le_bytes(r.array()?);
    let count = u32::from_le_bytes(r.array()?) as usize;
    // Each record needs at least DIGEST_LEN + 1 + TAG_LEN bytes.
    if count > (data.len() - r.pos) / (DIGEST_LEN + 1 + TAG_LEN) {
        return Err(Error::Decode(format!("count {count} exceeds input length")));
    }
    let mut pseudonyms = Vec::with_capacity(count);
    for _ in 0..count {
        let attribute_part = AttributeDigest(r.array()?);
        let len = r.array::<1>()?[0] as usize;
        let random_part = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Decode("random part is not UTF-8".to_string()))?
            .to_string();
        let tag = r.array()?;
        pseudonyms.push(Pseudonym {
            attribute_part,
            random_part,
            tag,
        });
    }
    if r.pos != data.len() {
        return Err(Error::Decode(format!("{} trailing bytes", data.len() - r.pos)));
    }
    Ok(PseudonymSet { owner, epoch, pseudonyms })
}

pub fn encode_set_text(set: &PseudonymSet) -> String {
    let mut out = format!(
        "APSS{SET_VERSION} owner={} epoch={} count={}\n",
        set.owner,
        set.epoch,
        set.len()
    );
    for p in &set.pseudonyms {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

fn header_field<'a>(token: Option<&'a str>, name: &str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(name))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::Decode(format!("header: expected `{name}=`")))
}

pub fn decode_set_text(text: &str) -> Result<PseudonymSet> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Decode("empty input".to_string()))?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some("APSS1") {
        return Err(Error::Decode("bad header".to_string()));
    }
    let owner = header_field(tokens.next(), "owner")?
        .parse()
        .map(FollowerId)
        .map_err(|e| Error::Decode(format!("owner: {e}")))?;
    let epoch = header_field(tokens.next(), "epoch")?
        .parse()
        .map_err(|e| Error::Decode(format!("epoch: {e}")))?;
    let count: usize = header_field(tokens.next(), "count")?
        .parse()
        .map_err(|e| Error::Decode(format!("count: {e}")))?;
    if tokens.next().is_some() {
        return Err(Error::Decode("trailing header fields".to_string()));
    }
    let mut pseudonyms = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut parts = line.split(':');
        let (Some(attr), Some(random), Some(tag), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Decode(format!("line {}: expected three fields", i + 2)));
        };
        if random.len() > u8::MAX as usize {
            return Err(Error::Decode(format!("line {}: random part too long", i + 2)));
        }
        let mut tag_bytes = [0u8; TAG_LEN];
        hex::decode_to_slice(tag, &mut tag_bytes).map_err(|e| Error::Decode(format!("line {}: tag: {e}", i + 2)))?;
        pseudonyms.push(Pseudonym {
            attribute_part: AttributeDigest::from_hex(attr)?,
            random_part: random.to_string(),
            tag: tag_bytes,
        });
    }
    if pseudonyms.len() != count {
        return Err(Error::Decode(format!("header says {count} pseudonyms, found {}", pseudonyms.len())));
    }
    Ok(PseudonymSet { owner, epoch, pseudonyms })
}
