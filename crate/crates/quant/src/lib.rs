//! Block quantization and low-rank adapter math: an E4M3 8-bit float
//! codec, 4-bit NormalFloat quantization with double-quantized block
//! constants, and the forward/gradient algebra for rank-r adapters over a
//! quantized base matrix.

pub mod fp8;
pub mod nf4;
pub mod probit;
pub mod qlora;
pub mod selfcheck;

pub use fp8::{e4m3_decode, e4m3_encode, E4M3_MAX};
pub use nf4::{
    double_dequant, nf4_codebook, quantize_nf4, Nf4Codebook, QuantError, QuantizedTensor,
    SerdeError, BLOCK_SIZE, GROUP_SIZE,
};
pub use probit::probit;
pub use qlora::{adapter_gradients, qlora_forward, LoraAdapter, QloraError};
pub use selfcheck::{run_selfcheck, Fault, SelfcheckReport};
