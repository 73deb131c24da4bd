//! Guest code generation: lowering, offload stubs, linking and the image
//! container.

pub mod image;
pub mod isa;
pub mod link;
pub mod lower;
pub mod stub;

pub use image::{GuestImage, ImageError};
pub use link::{link, LinkMode};
pub use lower::{lower_function, LoweringError};
pub use stub::emit_stub;
