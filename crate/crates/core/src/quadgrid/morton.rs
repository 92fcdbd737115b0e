use crate::error::{Error, Result};

#[inline]
fn spread(x: u32) -> u64 {
    let mut v = x as u64;
    v = (v | (v << 16)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v << 8)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    v = (v | (v << 1)) & 0x5555_5555_5555_5555;
    v
}

#[inline]
fn compact(v: u64) -> u32 {
    let mut v = v & 0x5555_5555_5555_5555;
    v = (v | (v >> 1)) & 0x3333_3333_3333_3333;
    v = (v | (v >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    v = (v | (v >> 4)) & 0x00FF_00FF_00FF_00FF;
    v = (v | (v >> 8)) & 0x0000_FFFF_0000_FFFF;
    v = (v | (v >> 16)) & 0x0000_0000_FFFF_FFFF;
    v as u32
}

/// Bit-interleaved code of `(i, j)`; `i` takes the even bits.
#[inline]
pub fn morton(i: u32, j: u32) -> u64 {
    spread(i) | (spread(j) << 1)
}

#[inline]
pub fn demorton(code: u64) -> (u32, u32) {
    (compact(code), compact(code >> 1))
}

/// Morton code with a bounds check against a level's index range.
pub fn morton_checked(i: u32, j: u32, nx: u32, ny: u32) -> Result<u64> {
    if i >= nx || j >= ny {
        return Err(Error::Domain(format!("index ({i}, {j}) outside {nx}x{ny}")));
    }
    Ok(morton(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn origin_is_zero() {
        assert_eq!(morton(0, 0), 0);
        assert_eq!(morton(1, 0), 1);
        assert_eq!(morton(0, 1), 2);
        assert_eq!(morton(3, 3), 15);
    }

    #[test]
    fn inverse_sweep() {
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(demorton(morton(i, j)), (i, j));
            }
        }
        assert_eq!(demorton(morton(u32::MAX, 12345)), (u32::MAX, 12345));
    }

    #[test]
    fn injective_on_small_levels() {
        for level in 0..5 {
            let n = 1u32 << level;
            let codes: HashSet<u64> = (0..n).flat_map(|i| (0..n).map(move |j| morton(i, j))).collect();
            assert_eq!(codes.len(), (n * n) as usize);
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(morton_checked(4, 0, 4, 4).is_err());
        assert!(morton_checked(3, 3, 4, 4).is_ok());
    }
}
