//! Denoiser wire protocol, version 1.
//!
//! All fields little-endian. A request is
//!
//! ```text
//! "DNR1" | u32 n_dims | u32 dims[n_dims] | f64 sigma_t | f32 payload[prod(dims)]
//! ```
//!
//! and a response repeats the same header followed by the denoised payload.
//! Complex source stacks travel as `[sources, 2, bins, frames]` with the real
//! part at index 0 of the second axis. Servers that need an integer timestep
//! must map `sigma_t` onto their own schedule.

use std::io::{self, Read, Write};
use std::time::Duration;

use ndarray::Array3;
use num_complex::Complex64;

use crate::degradation::Tensor;

pub const MAGIC: [u8; 4] = *b"DNR1";
/// Upper bound on `n_dims`; anything larger is treated as a corrupt header.
pub const MAX_DIMS: u32 = 8;
/// Upper bound on payload elements (1 GiB of f32).
pub const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}, expected \"DNR1\"")]
    BadMagic([u8; 4]),
    #[error("frame declares {0} dimensions (max {MAX_DIMS})")]
    TooManyDims(u32),
    #[error("frame payload of {0} elements exceeds limit")]
    PayloadTooLarge(u64),
    #[error("short read in {0}")]
    ShortRead(&'static str),
    #[error("response shape mismatch: sent {sent:?}, received {received:?}")]
    ShapeMismatch { sent: Vec<u32>, received: Vec<u32> },
    #[error("response contains non-finite values")]
    NonFinite,
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("denoiser process exited: {0}")]
    ProcessExited(String),
    #[error("denoiser disabled after an earlier protocol failure")]
    Poisoned,
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub dims: Vec<u32>,
    pub sigma: f64,
    pub payload: Vec<f32>,
}

impl Frame {
    pub fn element_count(dims: &[u32]) -> Option<u64> {
        dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 4 * self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.sigma.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Packs a complex `[sources, bins, frames]` tensor as `[sources, 2, bins, frames]`.
    pub fn from_tensor(x: &Tensor, sigma: f64) -> Self {
        let (n, k, l) = x.dim();
        let mut payload = Vec::with_capacity(n * 2 * k * l);
        for src in x.outer_iter() {
            payload.extend(src.iter().map(|c| c.re as f32));
            payload.extend(src.iter().map(|c| c.im as f32));
        }
        Self {
            dims: vec![n as u32, 2, k as u32, l as u32],
            sigma,
            payload,
        }
    }

    /// Inverse of [`Frame::from_tensor`]; `None` if the dims are not `[n, 2, k, l]`.
    pub fn to_tensor(&self) -> Option<Tensor> {
        let [n, 2, k, l] = self.dims[..] else {
            return None;
        };
        let (n, k, l) = (n as usize, k as usize, l as usize);
        let plane = k * l;
        Some(Array3::from_shape_fn((n, k, l), |(s, f, t)| {
            let base = s * 2 * plane + f * l + t;
            Complex64::new(self.payload[base] as f64, self.payload[base + plane] as f64)
        }))
    }
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), ProtocolError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::ShortRead(what),
        _ => ProtocolError::Io(e),
    })
}

/// Reads one frame. `Ok(None)` means the stream ended cleanly before a frame began.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, ProtocolError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::ShortRead("magic")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let mut word = [0u8; 4];
    read_exact_or(r, &mut word, "dimension count")?;
    let n_dims = u32::from_le_bytes(word);
    if n_dims > MAX_DIMS {
        return Err(ProtocolError::TooManyDims(n_dims));
    }
    let mut dims = Vec::with_capacity(n_dims as usize);
    for _ in 0..n_dims {
        read_exact_or(r, &mut word, "dimensions")?;
        dims.push(u32::from_le_bytes(word));
    }
    let count = Frame::element_count(&dims)
        .filter(|&c| c <= MAX_ELEMENTS)
        .ok_or_else(|| ProtocolError::PayloadTooLarge(Frame::element_count(&dims).unwrap_or(u64::MAX)))?;
    let mut sigma = [0u8; 8];
    read_exact_or(r, &mut sigma, "sigma")?;
    let mut bytes = vec![0u8; count as usize * 4];
    read_exact_or(r, &mut bytes, "payload")?;
    let payload = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Some(Frame {
        dims,
        sigma: f64::from_le_bytes(sigma),
        payload,
    }))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

/// Misbehaviours a test server can be told to exhibit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Responds with a wrong magic.
    BadMagic,
    /// Sends half a header and closes.
    Truncate,
    /// Drops the last dimension from the response header.
    Shape,
    /// Reads requests but never answers.
    Silent,
    /// Exits without answering.
    Exit,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Fault::None,
            "bad-magic" => Fault::BadMagic,
            "truncate" => Fault::Truncate,
            "shape" => Fault::Shape,
            "silent" => Fault::Silent,
            "exit" => Fault::Exit,
            _ => return Err(format!("unknown fault `{s}`")),
        })
    }
}

/// Answers frames from `reader` on `writer` with `handler` until the input
/// closes. Returns the number of requests read.
pub fn serve(
    mut reader: impl Read,
    mut writer: impl Write,
    fault: Fault,
    mut handler: impl FnMut(Frame) -> Frame,
) -> Result<u64, ProtocolError> {
    let mut count = 0;
    while let Some(request) = read_frame(&mut reader)? {
        count += 1;
        let mut response = handler(request);
        match fault {
            Fault::None => write_frame(&mut writer, &response)?,
            Fault::BadMagic => {
                let mut bytes = response.encode();
                bytes[..4].copy_from_slice(b"XXXX");
                writer.write_all(&bytes)?;
                writer.flush()?;
            }
            Fault::Truncate => {
                let bytes = response.encode();
                writer.write_all(&bytes[..6.min(bytes.len())])?;
                writer.flush()?;
                return Ok(count);
            }
            Fault::Shape => {
                response.dims.pop();
                let keep = Frame::element_count(&response.dims).unwrap_or(0) as usize;
                response.payload.truncate(keep);
                write_frame(&mut writer, &response)?;
            }
            Fault::Silent => {}
            Fault::Exit => return Ok(count),
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Frame {
        Frame {
            dims: vec![2, 2, 3, 1],
            sigma: 0.75,
            payload: (0..12).map(|i| i as f32 * 0.5 - 2.0).collect(),
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let f = Frame {
            dims: vec![1, 2],
            sigma: 1.5,
            payload: vec![1.0, -2.0],
        };
        let bytes = f.encode();
        let mut expect = b"DNR1".to_vec();
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1.5f64.to_le_bytes());
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let back = read_frame(&mut f.encode().as_slice()).unwrap().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn malformed_frames() {
        let bytes = sample().encode();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(read_frame(&mut wrong.as_slice()), Err(ProtocolError::BadMagic(_))));
        for cut in [2, 6, 10, 25, bytes.len() - 1] {
            assert!(
                matches!(read_frame(&mut &bytes[..cut]), Err(ProtocolError::ShortRead(_))),
                "cut at {cut}"
            );
        }
        assert!(read_frame(&mut &b""[..]).unwrap().is_none());
        let mut huge = b"DNR1".to_vec();
        huge.extend_from_slice(&2u32.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(read_frame(&mut huge.as_slice()), Err(ProtocolError::PayloadTooLarge(_))));
        let mut many = b"DNR1".to_vec();
        many.extend_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(read_frame(&mut many.as_slice()), Err(ProtocolError::TooManyDims(1000))));
    }

    #[test]
    fn tensor_layout() {
        let x = Array3::from_shape_fn((2, 3, 2), |(a, b, c)| {
            Complex64::new((a * 100 + b * 10 + c) as f64, -((a * 100 + b * 10 + c) as f64))
        });
        let f = Frame::from_tensor(&x, 0.1);
        assert_eq!(f.dims, vec![2, 2, 3, 2]);
        // Source 1, imaginary plane, bin 2, frame 1.
        assert_eq!(f.payload[12 + 6 + 2 * 2 + 1], -121.0);
        assert_eq!(f.to_tensor().unwrap(), x);
    }

    #[test]
    fn serve_echoes_and_counts() {
        let mut input = Vec::new();
        for _ in 0..3 {
            input.extend(sample().encode());
        }
        let mut out = Vec::new();
        let n = serve(input.as_slice(), &mut out, Fault::None, |f| f).unwrap();
        assert_eq!(n, 3);
        let mut r = out.as_slice();
        for _ in 0..3 {
            assert_eq!(read_frame(&mut r).unwrap().unwrap(), sample());
        }
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256), prefix in any::<bool>()) {
            let mut data = if prefix { b"DNR1".to_vec() } else { Vec::new() };
            data.extend(bytes);
            let _ = read_frame(&mut data.as_slice());
        }

        #[test]
        fn encode_decode(dims in prop::collection::vec(0u32..5, 0..5), sigma in any::<f64>()) {
            let count = Frame::element_count(&dims).unwrap() as usize;
            let f = Frame { dims, sigma, payload: (0..count).map(|i| i as f32).collect() };
            let back = read_frame(&mut f.encode().as_slice()).unwrap().unwrap();
            prop_assert_eq!(back.encode(), f.encode());
        }
    }
}
