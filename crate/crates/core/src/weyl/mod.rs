//! Weyl calculus: Cayley transform, metaplectic symbols, grid quantization,
//! Moyal product and Wigner transforms.

pub mod cayley;
pub mod grid;
pub mod monomial;
pub mod quantize;
pub mod star;
pub mod wigner;

pub use cayley::{
    cayley_inverse, cayley_transform, conley_zehnder_nu, free_particle_symbols, metaplectic_symbol,
    product_index, CayleyMatrix, FreeParticleSymbols, GaussianSymbol, SymbolKind,
};
pub use grid::{OperatorMatrix, PhaseSpaceGrid, Symbol};
pub use monomial::{monomial_quantize, normal_order, weyl_minus_born_jordan, NormalPoly, Rule, Word};
pub use quantize::{
    born_jordan_quantize, symbol_from_kernel, symbol_from_kernel_on, tau_quantize, tau_quantize_fn,
    weyl_quantize, weyl_quantize_gaussian, weyl_quantize_with, NyquistCheck,
};
pub use star::{moyal_star, moyal_star_with, symplectic_fourier, twisted_convolution};
pub use wigner::{cross_wigner, first_moment, wigner, wigner_norm};
