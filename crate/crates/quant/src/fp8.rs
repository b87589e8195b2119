//! 8-bit floating point, E4M3 variant: sign + 4-bit exponent (bias 7) +
//! 3-bit mantissa. No infinities; exponent 1111 with mantissa 111 is NaN,
//! so the largest finite value is 448. Encoding rounds to nearest with
//! ties to even and saturates at the format maximum.

/// Largest finite E4M3 value.
pub const E4M3_MAX: f64 = 448.0;

const NAN_CODE: u8 = 0x7F;

/// Decode one E4M3 byte.
pub fn e4m3_decode(code: u8) -> f64 {
    let sign = if code & 0x80 != 0 { -1.0 } else { 1.0 };
    let exp = (code >> 3) & 0x0F;
    let man = (code & 0x07) as f64;
    if exp == 0x0F && (code & 0x07) == 0x07 {
        return f64::NAN;
    }
    let magnitude = if exp == 0 {
        // subnormal: no implicit leading one
        (man / 8.0) * 2f64.powi(-6)
    } else {
        (1.0 + man / 8.0) * 2f64.powi(exp as i32 - 7)
    };
    sign * magnitude
}

fn finite_magnitudes() -> &'static [f64; 127] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; 127]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 127];
        for (code, slot) in t.iter_mut().enumerate() {
            *slot = e4m3_decode(code as u8);
        }
        t
    })
}

/// Encode with round-to-nearest-even, saturating at ±448.
pub fn e4m3_encode(value: f64) -> u8 {
    if value.is_nan() {
        return NAN_CODE;
    }
    let sign_bit = if value.is_sign_negative() { 0x80 } else { 0x00 };
    let magnitude = value.abs();
    if magnitude >= E4M3_MAX {
        return sign_bit | 0x7E; // saturate at the format maximum
    }
    // nearest finite magnitude; on a tie prefer the even mantissa
    let table = finite_magnitudes();
    let mut best: u8 = 0;
    let mut best_dist = f64::INFINITY;
    for (code, &mag) in table.iter().enumerate() {
        let dist = (magnitude - mag).abs();
        if dist < best_dist || (dist == best_dist && code as u8 & 1 == 0) {
            best_dist = dist;
            best = code as u8;
        }
    }
    if best == 0 {
        // avoid the -0.0 byte for a zero result
        return 0;
    }
    sign_bit | best
}
