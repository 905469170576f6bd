//! C ABI surface. Placeholder while the core crate is under construction.

#[no_mangle]
pub extern "C" fn vcgp_ffi_version() -> u32 {
    1
}
