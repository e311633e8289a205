//! Embedded wavelet codec: 5/3 or 9/7 Mallat pyramid, bit-plane coding in
//! subband order with run-length significance coding, and a table of
//! truncation points so one encode serves every rate.

mod coder;
mod lifting;
mod pyramid;
mod stream;

pub use lifting::{dwt53_1d, dwt97_1d, idwt53_1d, idwt97_1d, ALPHA, BETA, DELTA, GAMMA, K};
pub use pyramid::{
    decompose, default_levels, energy_weights, max_levels, reconstruct, reconstruct_planes,
    subbands, Filter, Orientation, Subband, SubbandPyramid, LEVEL_SHIFT,
};
pub use stream::{
    decode_embedded, decode_embedded_full, encode_embedded, wavelet_quantize_only, EmbeddedStream,
    TruncationPoint, DEFAULT_BASE_STEP, MAGIC,
};
