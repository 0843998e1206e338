//! Deterministic seed derivation, so replicate seeds never depend on
//! execution order.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two values into a well-mixed seed. Not commutative.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17).wrapping_add(0x632B_E59B_D9B4_E019))
}

/// Hash of a list of floats by bit pattern.
pub fn hash_f64s(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0xCBF2_9CE4_8422_2325, |h, v| mix(h, v.to_bits()))
}

/// Hash of a string label.
pub fn hash_str(s: &str) -> u64 {
    s.bytes()
        .fold(0x8422_2325_CBF2_9CE4, |h, b| mix(h, b as u64))
}
