//! Derivation of independent per-component seeds from one master seed.

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64) -> u64 {
    mix(master ^ mix(stream))
}

pub fn port_seed(master: u64, port_index: u64) -> u64 {
    derive(master, 0x1000 + port_index)
}

pub const TRAIN_REQUESTS: u64 = 1;
pub const ALLOCATOR: u64 = 2;
pub const TRAIN_LASERS: u64 = 3;
pub const OPERATE_LASERS: u64 = 4;
pub const OPERATE_REQUESTS: u64 = 5;
