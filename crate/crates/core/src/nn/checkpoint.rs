//! Binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes  "NGCK"
//! version   u32      1
//! hdr_len   u32      length of the header text in bytes
//! header    UTF-8    "input=<d0>x<d1>..\n" followed by one layer spec per line
//! for every layer with parameters, in order:
//!   n_weight u32, n_weight × f32
//!   n_bias   u32, n_bias × f32
//! ```
//!
//! Optimizer state uses the same framing with magic "NGAD", a header line
//! `step=<n>` plus the four hyperparameters, then one (u32 count, f32 payload)
//! block per first-moment tensor followed by the same for second moments.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::layer::{Layer, LayerSpec};
use super::network::Network;
use super::tensor::Scalar;
use super::NnError;

const NET_MAGIC: &[u8; 4] = b"NGCK";
const ADAM_MAGIC: &[u8; 4] = b"NGAD";
pub const FORMAT_VERSION: u32 = 1;

fn put_block<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn block<T: Scalar>(&mut self) -> Result<Vec<T>, NnError> {
        let n = self.u32()? as usize;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<&'a str, NnError> {
        if self.take(4)? != magic {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = self.u32()? as usize;
        std::str::from_utf8(self.take(len)?).map_err(|_| NnError::Format("header is not UTF-8".into()))
    }
}

fn framed(magic: &[u8; 4], header: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out
}

pub fn encode_network<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let dims: Vec<String> = net.input_shape().iter().map(|d| d.to_string()).collect();
    let mut header = format!("input={}\n", dims.join("x"));
    for l in &net.layers {
        header.push_str(&l.spec.to_string());
        header.push('\n');
    }
    let mut out = framed(NET_MAGIC, &header);
    for l in net.layers.iter().filter(|l| l.has_params()) {
        put_block(&mut out, &l.weight);
        put_block(&mut out, &l.bias);
    }
    out
}

pub fn decode_network<T: Scalar>(bytes: &[u8]) -> Result<Network<T>, NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = r.header(NET_MAGIC)?;
    let mut lines = header.lines();
    let input = lines
        .next()
        .and_then(|l| l.strip_prefix("input="))
        .ok_or_else(|| NnError::Format("missing input shape".into()))?;
    let input_shape = input
        .split('x')
        .map(|d| d.parse::<usize>().map_err(|_| NnError::Format("bad input shape".into())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut layers = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let spec: LayerSpec = line.parse()?;
        let (nw, _) = spec.param_counts();
        let (weight, bias) = if nw > 0 { (r.block()?, r.block()?) } else { (Vec::new(), Vec::new()) };
        layers.push(Layer::with_params(spec, weight, bias));
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format("trailing bytes after parameters".into()));
    }
    Network::from_layers(input_shape, layers)
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: &Path) -> Result<(), NnError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_network(net))?;
    Ok(())
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<Network<T>, NnError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_network(&bytes)
}

pub fn encode_adam<T: Scalar>(state: &AdamState<T>) -> Vec<u8> {
    let c = state.config;
    let header = format!(
        "step={}\nlr={:?}\nbeta1={:?}\nbeta2={:?}\neps={:?}\ntensors={}\n",
        state.step,
        c.lr,
        c.beta1,
        c.beta2,
        c.eps,
        state.m.len()
    );
    let mut out = framed(ADAM_MAGIC, &header);
    for m in &state.m {
        put_block(&mut out, m);
    }
    for v in &state.v {
        put_block(&mut out, v);
    }
    out
}

pub fn decode_adam<T: Scalar>(bytes: &[u8]) -> Result<AdamState<T>, NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = r.header(ADAM_MAGIC)?;
    let mut kv = std::collections::BTreeMap::new();
    for line in header.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k, v);
        }
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| NnError::Format(format!("missing {k}")));
    let f = |k: &str| -> Result<f64, NnError> { get(k)?.parse().map_err(|_| NnError::Format(format!("bad {k}"))) };
    let config = AdamConfig {
        lr: f("lr")?,
        beta1: f("beta1")?,
        beta2: f("beta2")?,
        eps: f("eps")?,
    };
    let step = get("step")?.parse().map_err(|_| NnError::Format("bad step".into()))?;
    let n: usize = get("tensors")?.parse().map_err(|_| NnError::Format("bad tensors".into()))?;
    let m = (0..n).map(|_| r.block()).collect::<Result<Vec<_>, _>>()?;
    let v = (0..n).map(|_| r.block()).collect::<Result<Vec<_>, _>>()?;
    Ok(AdamState { config, step, m, v })
}

pub fn save_adam<T: Scalar>(state: &AdamState<T>, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode_adam(state))?;
    Ok(())
}

pub fn load_adam<T: Scalar>(path: &Path) -> Result<AdamState<T>, NnError> {
    decode_adam(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_roundtrip_preserves_f32_parameters() {
        let specs = vec![
            LayerSpec::Reshape { shape: vec![1, 16] },
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 2,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::PhaseShuffle { radius: 1 },
            LayerSpec::Reshape { shape: vec![16] },
            LayerSpec::Dense { inputs: 16, outputs: 3 },
            LayerSpec::Tanh,
        ];
        let net = Network::<f32>::new(vec![16], specs, 42).unwrap();
        let bytes = encode_network(&net);
        let back: Network<f32> = decode_network(&bytes).unwrap();
        assert_eq!(back.specs(), net.specs());
        assert_eq!(back.params(), net.params());
        assert_eq!(encode_network(&back), bytes);
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let net = Network::<f32>::new(vec![2], vec![LayerSpec::Dense { inputs: 2, outputs: 1 }], 1).unwrap();
        let mut bytes = encode_network(&net);
        bytes.pop();
        assert!(decode_network::<f32>(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode_network::<f32>(&bytes).is_err());
    }

    #[test]
    fn adam_roundtrip() {
        let net = Network::<f32>::new(vec![2], vec![LayerSpec::Dense { inputs: 2, outputs: 1 }], 1).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &net);
        st.step = 12;
        st.m[0][1] = 0.25;
        st.v[1][0] = 3.5;
        let back: AdamState<f32> = decode_adam(&encode_adam(&st)).unwrap();
        assert_eq!(back, st);
    }
}
