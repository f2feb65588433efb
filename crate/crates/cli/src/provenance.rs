//! Header block written at the top of every output file.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    /// Resolved flags in a fixed order, defaults included.
    pub flags: String,
    pub input_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, flags: String, input: &[u8], seed: u64) -> Self {
        Provenance {
            tool: format!("dapsm {VERSION}"),
            command: command.to_string(),
            flags,
            input_sha256: sha256_hex(input),
            seed,
        }
    }

    /// `#`-prefixed lines, one field each.
    pub fn header(&self) -> String {
        format!(
            "# {}\n# command: {}\n# flags: {}\n# input_sha256: {}\n# seed: {}\n",
            self.tool, self.command, self.flags, self.input_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn header_lines_are_comments() {
        let p = Provenance::new("match", "--w auto".into(), b"", 3);
        let h = p.header();
        assert_eq!(h.lines().count(), 5);
        assert!(h.lines().all(|l| l.starts_with("# ")));
        assert!(h.contains("# seed: 3"));
    }
}
