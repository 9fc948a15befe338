//! Version tags carried by every file the crate writes.

use crate::error::{Error, Result};

/// Major version read and written by this build.
pub const MAJOR: u32 = 1;
pub const VERSION: &str = "1.0";

/// Accepts `"<major>.<minor>"` (or a bare major) with a supported major.
pub fn check(found: &str) -> Result<()> {
    let major = found
        .split('.')
        .next()
        .and_then(|m| m.trim().parse::<u32>().ok());
    if major == Some(MAJOR) {
        Ok(())
    } else {
        Err(Error::Schema {
            found: found.to_string(),
            supported: MAJOR,
        })
    }
}
