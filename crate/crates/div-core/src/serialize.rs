//! Self-describing model file format.
//!
//! Layout: the ASCII header line `DIVMODEL/1`, one line of JSON metadata
//! (dims, noise config, layer dims, flags, standardizer column counts), then
//! a raw little-endian f64 payload holding the standardizer statistics and
//! all parameter arrays in a fixed order. Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{ColStats, Standardizer};
use crate::error::{DivError, Result};
use crate::model::{DivModel, ModelDims, NoiseConfig, OutcomeHead};
use crate::nn::{Activation, Mlp};

pub const MODEL_HEADER: &str = "DIVMODEL/1";

#[derive(Serialize, Deserialize)]
struct NetMeta {
    layer_dims: Vec<usize>,
    activation: Activation,
    use_bias: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    dims: ModelDims,
    noise: NoiseConfig,
    outcome_head: OutcomeHead,
    binary_treatment: bool,
    g_net: NetMeta,
    f_net: NetMeta,
    has_w: bool,
}

struct PayloadWriter {
    buf: Vec<f64>,
}

impl PayloadWriter {
    fn stats(&mut self, s: &ColStats) {
        self.buf.extend_from_slice(&s.mean);
        self.buf.extend_from_slice(&s.sd);
    }

    fn net(&mut self, m: &Mlp) {
        for (w, b) in m.weights().iter().zip(m.biases()) {
            self.buf.extend(w.iter());
            self.buf.extend(b.iter());
        }
    }
}

struct PayloadReader<'a> {
    buf: &'a [f64],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [f64]> {
        if self.pos + n > self.buf.len() {
            return Err(DivError::Serialization("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn stats(&mut self, k: usize) -> Result<ColStats> {
        Ok(ColStats {
            mean: self.take(k)?.to_vec(),
            sd: self.take(k)?.to_vec(),
        })
    }

    fn net(&mut self, meta: &NetMeta) -> Result<Mlp> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in meta.layer_dims.windows(2) {
            let (fin, fout) = (pair[0], pair[1]);
            let w = Array2::from_shape_vec((fout, fin), self.take(fin * fout)?.to_vec())
                .map_err(|e| DivError::Serialization(e.to_string()))?;
            let b = Array1::from_vec(self.take(fout)?.to_vec());
            weights.push(w);
            biases.push(b);
        }
        Mlp::from_parts(weights, biases, meta.activation, meta.use_bias)
    }
}

fn net_meta(m: &Mlp) -> NetMeta {
    NetMeta {
        layer_dims: m.layer_dims().to_vec(),
        activation: m.activation(),
        use_bias: m.use_bias(),
    }
}

pub fn write_model<W: Write>(model: &DivModel, out: &mut W) -> Result<()> {
    let meta = ModelMeta {
        dims: model.dims(),
        noise: model.noise(),
        outcome_head: model.outcome_head(),
        binary_treatment: model.binary_treatment(),
        g_net: net_meta(model.g_net()),
        f_net: net_meta(model.f_net()),
        has_w: model.standardizer().w.is_some(),
    };
    let mut pw = PayloadWriter { buf: Vec::new() };
    let st = model.standardizer();
    pw.stats(&st.z);
    pw.stats(&st.x);
    pw.stats(&st.y);
    if let Some(w) = &st.w {
        pw.stats(w);
    }
    pw.net(model.g_net());
    pw.net(model.f_net());

    writeln!(out, "{MODEL_HEADER}")?;
    let json =
        serde_json::to_string(&meta).map_err(|e| DivError::Serialization(e.to_string()))?;
    writeln!(out, "{json}")?;
    for v in &pw.buf {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(input: &mut R) -> Result<DivModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DivError::Serialization("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|e| DivError::Serialization(e.to_string()))?;
    if header != MODEL_HEADER {
        return Err(DivError::Serialization(format!(
            "version mismatch: expected {MODEL_HEADER}, found {header}"
        )));
    }
    let rest = &bytes[header_end + 1..];
    let meta_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DivError::Serialization("missing metadata line".into()))?;
    let meta: ModelMeta = serde_json::from_slice(&rest[..meta_end])
        .map_err(|e| DivError::Serialization(e.to_string()))?;
    let payload_bytes = &rest[meta_end + 1..];
    if payload_bytes.len() % 8 != 0 {
        return Err(DivError::Serialization(
            "payload is not a whole number of f64 values".into(),
        ));
    }
    let payload: Vec<f64> = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut pr = PayloadReader {
        buf: &payload,
        pos: 0,
    };
    let standardizer = Standardizer {
        z: pr.stats(meta.dims.q)?,
        x: pr.stats(meta.dims.d)?,
        y: pr.stats(meta.dims.p)?,
        w: if meta.has_w {
            Some(pr.stats(meta.dims.l)?)
        } else {
            None
        },
    };
    let g_net = pr.net(&meta.g_net)?;
    let f_net = pr.net(&meta.f_net)?;
    if pr.pos != payload.len() {
        return Err(DivError::Serialization("trailing payload data".into()));
    }
    DivModel::from_parts(
        g_net,
        f_net,
        meta.noise,
        standardizer,
        meta.outcome_head,
        meta.binary_treatment,
        meta.dims,
    )
}

pub fn save_model(model: &DivModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_model(model, &mut f)
}

pub fn load_model(path: &Path) -> Result<DivModel> {
    let mut f = std::fs::File::open(path)?;
    read_model(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::model::{fit_div, FitConfig};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tiny_model() -> DivModel {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 80;
        let z = Array2::from_shape_fn((n, 1), |_| -> f64 { StandardNormal.sample(&mut rng) });
        let x = &z + &Array2::from_shape_fn((n, 1), |_| -> f64 { StandardNormal.sample(&mut rng) });
        let y = &x * 2.0 + &Array2::from_shape_fn((n, 1), |_| -> f64 { StandardNormal.sample(&mut rng) });
        let data = Dataset::new(z, x, y, None).unwrap();
        let config = FitConfig {
            hidden_layers: 2,
            hidden_width: 8,
            epochs: 5,
            noise: crate::model::NoiseConfig {
                dim_eps_x: 3,
                dim_eps_y: 3,
                dim_eps_h: 3,
            },
            ..FitConfig::default()
        };
        fit_div(&data, &config).unwrap().0
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = tiny_model();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let restored = read_model(&mut buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        write_model(&restored, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert_eq!(model.g_net(), restored.g_net());
        assert_eq!(model.f_net(), restored.f_net());
        assert_eq!(model.standardizer(), restored.standardizer());
    }

    #[test]
    fn wrong_header_is_a_version_mismatch() {
        let bad = b"DIVMODEL/9\n{}\n".to_vec();
        let err = read_model(&mut bad.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version mismatch"));
    }
}
