//! Binary model files: `model_k.bin`.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, `u64` payload
//! length, the payload, then the SHA-256 of the payload. All numbers in the
//! payload are little-endian.

use std::path::Path;

use lsing::diffnet::Dense;
use lsing::quadmap::cc_rule;
use lsing::{MapComponent, PositiveMlp};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 8] = *b"LSNGMAP\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

/// A trained component and the penalty it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub lambda: f64,
    pub map: MapComponent<PositiveMlp>,
}

pub fn model_file_name(k: usize) -> String {
    format!("model_{k}.bin")
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> CliResult<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("payload truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> CliResult<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| corrupt("size out of range"))
    }
    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> CliResult<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(corrupt("array length exceeds payload"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn corrupt(msg: &str) -> CliError {
    CliError::Data(format!("corrupt model file: {msg}"))
}

pub fn encode(model: &StoredModel) -> Vec<u8> {
    let map = &model.map;
    let net = map.integrand();
    let mut p = Writer(Vec::new());
    p.u64(map.target());
    p.u64(map.dim());
    p.u64(map.rule().len());
    p.f64(model.lambda);
    p.f64(net.floor());
    p.f64(map.beta());
    p.u64(net.layers().len());
    for layer in net.layers() {
        p.u64(layer.fan_out());
        p.u64(layer.fan_in());
        layer.weight.iter().for_each(|v| p.f64(*v));
        layer.bias.iter().for_each(|v| p.f64(*v));
    }
    match map.shift() {
        Some(s) => {
            p.0.push(1);
            s.iter().for_each(|v| p.f64(*v));
        }
        None => p.0.push(0),
    }
    let payload = p.0;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn decode(bytes: &[u8]) -> CliResult<StoredModel> {
    if bytes.len() < HEADER_LEN + DIGEST_LEN || bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "model file version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if len != (bytes.len() - HEADER_LEN - DIGEST_LEN) as u64 {
        return Err(corrupt("length mismatch"));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - DIGEST_LEN];
    if Sha256::digest(payload).as_slice() != &bytes[bytes.len() - DIGEST_LEN..] {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let k = r.u64()?;
    let d = r.u64()?;
    let nodes = r.u64()?;
    let lambda = r.f64()?;
    let floor = r.f64()?;
    let beta = r.f64()?;
    let n_layers = r.u64()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let out = r.u64()?;
        let inp = r.u64()?;
        let n = out.checked_mul(inp).ok_or_else(|| corrupt("layer size overflow"))?;
        let weight = Array2::from_shape_vec((out, inp), r.f64s(n)?).map_err(|e| corrupt(&e.to_string()))?;
        let bias = Array1::from(r.f64s(out)?);
        layers.push(Dense { weight, bias });
    }
    let shift = match r.u8()? {
        0 => None,
        1 => Some(r.f64s(d)?),
        _ => return Err(corrupt("bad shift flag")),
    };
    if r.pos != payload.len() {
        return Err(corrupt("trailing bytes"));
    }
    let bad = |e: lsing::Error| corrupt(&e.to_string());
    let net = PositiveMlp::new(layers, floor).map_err(bad)?;
    if net.input_dim() != d {
        return Err(corrupt("network input width does not match dimension"));
    }
    let mut map = MapComponent::new(k, net, beta, cc_rule(nodes).map_err(bad)?).map_err(bad)?;
    map.set_shift(shift).map_err(bad)?;
    Ok(StoredModel { lambda, map })
}

pub fn read_model(path: &Path) -> CliResult<StoredModel> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsing::training::init_component;
    use lsing::TrainConfig;

    fn sample(shift: bool) -> StoredModel {
        let cfg = TrainConfig {
            hidden: vec![4, 3],
            quad_nodes: 9,
            linear_shift: shift,
            seed: 11,
            ..Default::default()
        };
        let mut map = init_component(1, 3, &cfg).unwrap();
        let mut p = map.flat_params();
        p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * i as f64);
        map.set_flat_params(&p).unwrap();
        StoredModel { lambda: 0.01, map }
    }

    #[test]
    fn round_trip_preserves_every_parameter() {
        for shift in [true, false] {
            let m = sample(shift);
            let back = decode(&encode(&m)).unwrap();
            assert_eq!(back, m);
            let x = [0.3, -0.7, 1.1];
            assert_eq!(back.map.eval_map(&x).unwrap(), m.map.eval_map(&x).unwrap());
        }
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = encode(&sample(true));
        for i in (0..bytes.len()).step_by(7) {
            let mut b = bytes.clone();
            b[i] ^= 0x5a;
            assert!(decode(&b).is_err(), "flip at {i} accepted");
        }
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn checksum_failure_is_reported() {
        let mut bytes = encode(&sample(false));
        bytes[HEADER_LEN + 3] ^= 1;
        let msg = decode(&bytes).unwrap_err().to_string();
        assert!(msg.contains("checksum"), "{msg}");
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = encode(&sample(false));
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(decode(&bytes).unwrap_err().to_string().contains("version 2"));
    }
}
