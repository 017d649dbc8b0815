//! Binary (P5) PGM rendering of a square matrix.

use ndarray::ArrayView2;

use crate::error::{CliError, CliResult};

/// One byte per entry, row-major, `round(255·v/max)`. Entries at or below
/// zero map to black; an all-zero matrix renders black.
pub fn pgm_bytes(m: ArrayView2<f64>) -> CliResult<Vec<u8>> {
    let (rows, cols) = m.dim();
    if rows != cols || rows == 0 {
        return Err(CliError::Data(format!("heatmap needs a non-empty square matrix, got {rows}x{cols}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Data("heatmap input has non-finite entries".into()));
    }
    let max = m.iter().copied().fold(0.0_f64, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(m.iter().map(|&v| {
        if max > 0.0 {
            (255.0 * v.max(0.0) / max).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, array};
    use proptest::prelude::*;

    fn pixels(bytes: &[u8], n: usize) -> &[u8] {
        &bytes[bytes.len() - n * n..]
    }

    #[test]
    fn identity_lights_the_diagonal() {
        let b = pgm_bytes(Array2::<f64>::eye(3).view()).unwrap();
        assert!(b.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(pixels(&b, 3), &[255, 0, 0, 0, 255, 0, 0, 0, 255]);
    }

    #[test]
    fn constant_matrix_is_white() {
        let b = pgm_bytes(Array2::from_elem((2, 2), 0.4).view()).unwrap();
        assert_eq!(pixels(&b, 2), &[255; 4]);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(pgm_bytes(array![[1.0, 2.0]].view()).is_err());
    }

    proptest! {
        #[test]
        fn pixel_equals_scaled_entry(vals in prop::collection::vec(0.0f64..10.0, 16)) {
            let m = Array2::from_shape_vec((4, 4), vals.clone()).unwrap();
            let b = pgm_bytes(m.view()).unwrap();
            let max = vals.iter().cloned().fold(0.0, f64::max);
            for (p, v) in pixels(&b, 4).iter().zip(&vals) {
                let want = if max > 0.0 { (255.0 * v / max).round() } else { 0.0 };
                prop_assert_eq!(*p as f64, want);
            }
        }
    }
}
