//! CSIM model files: `"CSIM"` | version u16 | n_dims u32 | dims u32 × n_dims |
//! leaky slope f64 | batch-norm epsilon f64 | batch-norm momentum f64 |
//! step counter u64 | tensors as f64. Little-endian throughout.
//!
//! Tensor order: for each hidden layer `weight`, `bn_scale`, `bn_shift`,
//! `running_mean`, `running_var`; then output `weight`, `bias`. Weights are
//! row-major `fan_in × fan_out`.

use std::io::{Read, Write};

use super::{HiddenLayer, Matrix, MlpArchitecture, MlpError, MlpModel, OutputLayer};

pub const MODEL_MAGIC: [u8; 4] = *b"CSIM";
pub const MODEL_VERSION: u16 = 1;

pub fn save_model<W: Write>(model: &MlpModel, out: &mut W) -> Result<(), MlpError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let dims = model.arch.dims();
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| MlpError::InvalidArchitecture(format!("layer size {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in [
        model.arch.leaky_slope,
        model.arch.batchnorm_epsilon,
        model.arch.batchnorm_momentum,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.steps.to_le_bytes());
    let mut put = |t: &[f64]| {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for h in &model.hidden {
        put(h.weight.as_slice());
        put(&h.bn_scale);
        put(&h.bn_shift);
        put(&h.running_mean);
        put(&h.running_var);
    }
    put(model.output.weight.as_slice());
    put(&model.output.bias);
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MlpError> {
        if self.data.len() - self.pos < n {
            return Err(MlpError::Truncated(what.to_string()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, MlpError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, MlpError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, MlpError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, MlpError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, len: usize, what: &str) -> Result<Vec<f64>, MlpError> {
        let bytes = len
            .checked_mul(8)
            .ok_or_else(|| MlpError::Truncated(what.to_string()))?;
        let raw = self.take(bytes, what)?;
        let t: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !t.iter().all(|v| v.is_finite()) {
            return Err(MlpError::NonFinite(what.to_string()));
        }
        Ok(t)
    }
}

pub fn load_model<R: Read>(input: &mut R) -> Result<MlpModel, MlpError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };

    let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(MlpError::BadMagic(magic));
    }
    let version = c.u16("version")?;
    if version != MODEL_VERSION {
        return Err(MlpError::UnsupportedVersion(version));
    }
    let n_dims = c.u32("architecture")?;
    if n_dims != 4 {
        return Err(MlpError::ShapeMismatch(format!(
            "expected 4 layer sizes, header lists {n_dims}"
        )));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = c.u32("architecture")? as usize;
    }
    let arch = MlpArchitecture {
        input_dim: dims[0],
        hidden_dims: [dims[1], dims[2]],
        n_classes: dims[3],
        leaky_slope: c.f64("hyperparameters")?,
        batchnorm_epsilon: c.f64("hyperparameters")?,
        batchnorm_momentum: c.f64("hyperparameters")?,
    };
    arch.validate()?;
    let steps = c.u64("step counter")?;

    let mut hidden = Vec::with_capacity(2);
    for l in 0..2 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let name = |t: &str| format!("hidden{l}.{t}");
        let weight = c.tensor(fan_in * fan_out, &name("weight"))?;
        let bn_scale = c.tensor(fan_out, &name("bn_scale"))?;
        let bn_shift = c.tensor(fan_out, &name("bn_shift"))?;
        let running_mean = c.tensor(fan_out, &name("running_mean"))?;
        let running_var = c.tensor(fan_out, &name("running_var"))?;
        if running_var.iter().any(|v| *v < 0.0) {
            return Err(MlpError::ShapeMismatch(format!(
                "{} has negative entries",
                name("running_var")
            )));
        }
        hidden.push(HiddenLayer {
            weight: Matrix::from_vec(fan_in, fan_out, weight),
            bn_scale,
            bn_shift,
            running_mean,
            running_var,
        });
    }
    let output = OutputLayer {
        weight: Matrix::from_vec(
            dims[2],
            dims[3],
            c.tensor(dims[2] * dims[3], "output.weight")?,
        ),
        bias: c.tensor(dims[3], "output.bias")?,
    };
    let rest = data.len() - c.pos;
    if rest != 0 {
        return Err(MlpError::TrailingData(rest));
    }
    Ok(MlpModel {
        arch,
        hidden,
        output,
        steps,
    })
}
