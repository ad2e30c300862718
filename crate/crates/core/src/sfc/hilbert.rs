//! Hilbert curve over a d-dimensional grid of side `2^order`, in Skilling's
//! transpose formulation. Axis 0 contributes the most significant bit of
//! each d-bit group of the index; index 0 is the origin cell.

use super::{KeywordSpacePoint, SfcError, SfcIndex};

/// Converts axis coordinates to the transposed Hilbert form, in place.
fn axes_to_transpose(x: &mut [u64], order: u32) {
    let n = x.len();
    let m: u64 = 1 << (order - 1);

    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }

    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

fn transpose_to_axes(x: &mut [u64], order: u32) {
    let n = x.len();
    let top: u128 = 2u128 << (order - 1);

    let t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;

    let mut q: u128 = 2;
    while q != top {
        let qq = q as u64;
        let p = qq - 1;
        for i in (0..n).rev() {
            if x[i] & qq != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}

fn interleave(x: &[u64], order: u32) -> u128 {
    let mut index: u128 = 0;
    for bit in (0..order).rev() {
        for v in x {
            index = (index << 1) | ((v >> bit) & 1) as u128;
        }
    }
    index
}

fn deinterleave(index: u128, dims: usize, order: u32) -> Vec<u64> {
    let mut x = vec![0u64; dims];
    let mut pos = dims as u32 * order;
    for bit in (0..order).rev() {
        for v in x.iter_mut() {
            pos -= 1;
            *v |= (((index >> pos) & 1) as u64) << bit;
        }
    }
    x
}

/// Hilbert index of a grid cell. One-dimensional spaces map identically.
pub fn hilbert_encode(point: &KeywordSpacePoint) -> SfcIndex {
    let order = point.order();
    let mut x = point.coords().to_vec();
    if x.len() == 1 {
        return SfcIndex(x[0] as u128);
    }
    axes_to_transpose(&mut x, order);
    SfcIndex(interleave(&x, order))
}

/// Inverse of [`hilbert_encode`].
pub fn hilbert_decode(
    index: SfcIndex,
    dims: u32,
    order: u32,
) -> Result<KeywordSpacePoint, SfcError> {
    let bits = dims * order;
    if bits < 128 && index.0 >> bits != 0 {
        return Err(SfcError::InvalidIndex(index.0));
    }
    if dims == 1 {
        return KeywordSpacePoint::new(vec![index.0 as u64], order);
    }
    let mut x = deinterleave(index.0, dims as usize, order);
    transpose_to_axes(&mut x, order);
    KeywordSpacePoint::new(x, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(coords: &[u64], order: u32) -> u128 {
        hilbert_encode(&KeywordSpacePoint::new(coords.to_vec(), order).unwrap()).0
    }

    #[test]
    fn order_one_square() {
        assert_eq!(enc(&[0, 0], 1), 0);
        assert_eq!(enc(&[0, 1], 1), 1);
        assert_eq!(enc(&[1, 1], 1), 2);
        assert_eq!(enc(&[1, 0], 1), 3);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        assert!(matches!(
            hilbert_decode(SfcIndex(16), 2, 2),
            Err(SfcError::InvalidIndex(16))
        ));
    }

    #[test]
    fn origin_is_first() {
        let p = hilbert_decode(SfcIndex(0), 2, 8).unwrap();
        assert_eq!(p.coords(), &[0, 0]);
    }

    #[test]
    fn one_dimension_is_identity() {
        assert_eq!(enc(&[77], 8), 77);
        let p = hilbert_decode(SfcIndex(77), 1, 8).unwrap();
        assert_eq!(p.coords(), &[77]);
    }

    #[test]
    fn wide_orders_round_trip() {
        let p = KeywordSpacePoint::new(vec![u64::MAX, 12345, 1 << 63], 40).unwrap_err();
        let _ = p;
        let p = KeywordSpacePoint::new(vec![(1 << 40) - 1, 12345, 1 << 39], 40).unwrap();
        let i = hilbert_encode(&p);
        assert_eq!(hilbert_decode(i, 3, 40).unwrap(), p);
        let p = KeywordSpacePoint::new(vec![u64::MAX, 7], 64).unwrap();
        let i = hilbert_encode(&p);
        assert_eq!(hilbert_decode(i, 2, 64).unwrap(), p);
    }
}
