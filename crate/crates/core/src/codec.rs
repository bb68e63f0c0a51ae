//! Base64-packed little-endian `f32` blocks used by the JSON artifacts.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

pub fn pack_f32(values: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn unpack_f32(text: &str, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Serde(format!("bad base64 block: {e}")))?;
    if bytes.len() != expected_len * 4 {
        return Err(Error::Shape(format!(
            "packed block holds {} bytes, expected {}",
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn f32_values_round_trip(values in proptest::collection::vec(-1e6f32..1e6, 0..64)) {
            let packed = pack_f32(values.iter().map(|&v| f64::from(v)));
            let back = unpack_f32(&packed, values.len()).unwrap();
            for (a, b) in values.iter().zip(&back) {
                prop_assert_eq!(f64::from(*a).to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let packed = pack_f32([1.0, 2.0]);
        assert!(matches!(unpack_f32(&packed, 3), Err(Error::Shape(_))));
    }
}
