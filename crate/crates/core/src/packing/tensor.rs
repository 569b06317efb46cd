use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PackingError;

/// Dense (B, C, T, J) tensor, row-major in (b, c, t, j).
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTensor {
    dims: [usize; 4],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    dims: [usize; 4],
    dtype: String,
    order: String,
}

impl GraphTensor {
    pub fn zeros(dims: [usize; 4]) -> Result<Self, PackingError> {
        check_dims(dims)?;
        Ok(GraphTensor {
            dims,
            data: vec![0.0; dims.iter().product()],
        })
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self, PackingError> {
        check_dims(dims)?;
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(PackingError::Shape(format!(
                "expected {n} values for dims {dims:?}, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(PackingError::Shape(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(GraphTensor { dims, data })
    }

    /// Uniform values in [-1, 1) from a seeded ChaCha8 stream.
    pub fn random(dims: [usize; 4], seed: u64) -> Result<Self, PackingError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::from_vec(dims, data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn batch(&self) -> usize {
        self.dims[0]
    }
    pub fn channels(&self) -> usize {
        self.dims[1]
    }
    pub fn frames(&self) -> usize {
        self.dims[2]
    }
    pub fn joints(&self) -> usize {
        self.dims[3]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, t: usize, j: usize) -> usize {
        let [_, cc, tt, jj] = self.dims;
        ((b * cc + c) * tt + t) * jj + j
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize, j: usize) -> f64 {
        self.data[self.index(b, c, t, j)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, j: usize, v: f64) {
        let i = self.index(b, c, t, j);
        self.data[i] = v;
    }

    pub fn max_abs_diff(&self, other: &GraphTensor) -> f64 {
        assert_eq!(self.dims, other.dims, "dims differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// One-line JSON header, newline, then little-endian f64 values.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PackingError> {
        let header = TensorHeader {
            dims: self.dims,
            dtype: "f64".into(),
            order: "bctj".into(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| PackingError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, PackingError> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        let header: TensorHeader = serde_json::from_slice(&line)
            .map_err(|e| PackingError::Format(format!("header: {e}")))?;
        if header.dtype != "f64" || header.order != "bctj" {
            return Err(PackingError::Format(format!(
                "unsupported dtype/order {}/{}",
                header.dtype, header.order
            )));
        }
        check_dims(header.dims)?;
        let n: usize = header.dims.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| PackingError::Format(format!("payload: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(header.dims, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), PackingError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PackingError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn check_dims(dims: [usize; 4]) -> Result<(), PackingError> {
    if dims.contains(&0) {
        return Err(PackingError::Shape(format!(
            "all dims must be >= 1, got {dims:?}"
        )));
    }
    Ok(())
}
