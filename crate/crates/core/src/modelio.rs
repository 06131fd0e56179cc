//! Binary model files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        b"SSRN"
//! version      u32 (= 1)
//! preset name  u32 byte length, UTF-8 bytes
//! stage layer counts, stage channels, pool strides, fcn channels
//!              each: u32 count, then u32 values
//! dropout rate f64
//! final act.   u32 (0 = linear-with-clamp, 1 = relu)
//! per conv/fcn layer in network order:
//!   weights    u64 count, f32 values
//!   bias       u64 count, f32 values
//! crc32        u32 (IEEE) over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{FinalActivation, Network, NetworkConfig};

pub const MAGIC: [u8; 4] = *b"SSRN";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32_array(out: &mut Vec<u8>, values: &[usize]) {
    put_u32(out, values.len() as u32);
    for &v in values {
        put_u32(out, v as u32);
    }
}

fn put_f32_array(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_model(net: &Network) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, cfg.name.len() as u32);
    out.extend_from_slice(cfg.name.as_bytes());
    put_u32_array(&mut out, &cfg.stage_layer_counts);
    put_u32_array(&mut out, &cfg.stage_channels);
    put_u32_array(&mut out, &cfg.pool_strides);
    put_u32_array(&mut out, &cfg.fcn_channels);
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    put_u32(
        &mut out,
        match cfg.final_activation {
            FinalActivation::LinearClamp => 0,
            FinalActivation::Relu => 1,
        },
    );
    for p in net.conv_params() {
        put_f32_array(&mut out, p.weights.data());
        put_f32_array(&mut out, &p.bias);
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::LayoutMismatch(format!(
                    "file truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u32_array(&mut self, what: &str) -> Result<Vec<usize>> {
        let n = self.u32(what)? as usize;
        if n > 1024 {
            return Err(Error::LayoutMismatch(format!("{what} has {n} entries")));
        }
        (0..n).map(|_| Ok(self.u32(what)? as usize)).collect()
    }

    fn f32_array_into(&mut self, dst: &mut [f64], what: &str) -> Result<()> {
        let n = self.u64(what)?;
        if n != dst.len() as u64 {
            return Err(Error::LayoutMismatch(format!(
                "{what} stores {n} values, configuration implies {}",
                dst.len()
            )));
        }
        let raw = self.take(dst.len() * 4, what)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f64::from(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = match bytes.get(..4) {
        Some(m) => m.try_into().unwrap(),
        None => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(Error::BadMagic(m));
        }
    };
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    r.pos = 4;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let name_len = r.u32("preset name length")? as usize;
    let name = String::from_utf8(r.take(name_len, "preset name")?.to_vec())
        .map_err(|_| Error::LayoutMismatch("preset name is not UTF-8".into()))?;
    let stage_layer_counts = r.u32_array("stage layer counts")?;
    let stage_channels = r.u32_array("stage channels")?;
    let pool_strides = r.u32_array("pool strides")?;
    let fcn_channels = r.u32_array("fcn channels")?;
    let dropout_rate = r.f64("dropout rate")?;
    let final_activation = match r.u32("final activation")? {
        0 => FinalActivation::LinearClamp,
        1 => FinalActivation::Relu,
        other => {
            return Err(Error::LayoutMismatch(format!(
                "unknown final activation code {other}"
            )))
        }
    };
    let config = NetworkConfig {
        name,
        stage_layer_counts,
        stage_channels,
        pool_strides,
        fcn_channels,
        dropout_rate,
        final_activation,
    };
    let mut net = Network::zeros(config).map_err(|e| match e {
        Error::InvalidConfig(m) => Error::LayoutMismatch(format!("stored configuration: {m}")),
        e => e,
    })?;
    for (i, p) in net.conv_params_mut().enumerate() {
        r.f32_array_into(p.weights.data_mut(), &format!("layer {i} weights"))?;
        r.f32_array_into(&mut p.bias, &format!("layer {i} bias"))?;
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(net)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidArgument("empty model path".into()));
    }
    fs::write(path, encode_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| e.at_path(path))
}

/// Encoded size for a configuration: header, prefixed f32 arrays and CRC.
pub fn encoded_len(config: &NetworkConfig) -> usize {
    let arrays = [
        &config.stage_layer_counts,
        &config.stage_channels,
        &config.pool_strides,
        &config.fcn_channels,
    ];
    let header = 4
        + 4
        + 4
        + config.name.len()
        + arrays.iter().map(|a| 4 + 4 * a.len()).sum::<usize>()
        + 8
        + 4;
    let n_layers = config.conv_shapes().len();
    header + 4 * config.num_parameters() + 2 * 8 * n_layers + 4
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoded_size_matches_layout() {
        let net = Network::build(NetworkConfig::micro(), 2).unwrap();
        let bytes = encode_model(&net);
        assert_eq!(bytes.len(), encoded_len(net.config()));
        // magic, version, "micro", four 2-entry arrays, dropout, activation
        let header = 4 + 4 + (4 + 5) + 4 * (4 + 8) + 8 + 4;
        // four layers, each with two u64-prefixed arrays, then the CRC
        assert_eq!(bytes.len(), header + 4 * 1969 + 4 * 2 * 8 + 4);
    }

    #[test]
    fn distinct_errors() {
        let net = Network::build(NetworkConfig::micro(), 2).unwrap();
        let good = encode_model(&net);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_model(&bad),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));

        let mut bad = good.clone();
        let mid = good.len() - 100;
        bad[mid] ^= 0x40;
        assert!(matches!(
            decode_model(&bad),
            Err(Error::ChecksumMismatch { .. })
        ));

        let truncated = &good[..good.len() - 10];
        assert!(matches!(
            decode_model(truncated),
            Err(Error::LayoutMismatch(_))
        ));

        assert!(matches!(decode_model(b"SS"), Err(Error::BadMagic(_))));
    }

    #[test]
    fn empty_path_is_rejected() {
        let net = Network::zeros(NetworkConfig::micro()).unwrap();
        assert!(save_model(&net, Path::new("")).is_err());
    }
}
