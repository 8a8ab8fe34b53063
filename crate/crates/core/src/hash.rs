//! Stable 64-bit fingerprints for token windows.
//!
//! FNV-1a over the space-joined lexemes. The value is identical across
//! platforms and runs, which is what the dedup index and the mined n-gram
//! sidecar rely on. Collisions only make dedup slightly more aggressive.

use core::hash::Hasher;

use fnv::FnvHasher;

/// Fingerprint of a window of lexemes, joined with single spaces.
pub fn fingerprint<'a, I>(lexemes: I) -> u64
where
    I: IntoIterator<Item = &'a str>,
{
    let mut hasher = FnvHasher::default();
    for (i, lexeme) in lexemes.into_iter().enumerate() {
        if i > 0 {
            hasher.write(b" ");
        }
        hasher.write(lexeme.as_bytes());
    }
    hasher.finish()
}

/// Fingerprint of raw bytes.
pub fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}
