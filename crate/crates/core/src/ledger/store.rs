//! Ledger file framing: each block is a 4-byte big-endian length followed
//! by its canonical bytes. Genesis is frame 0.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::codec::Canonical;

use super::block::Block;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("frame {height}: {message}")]
pub struct FrameError {
    /// Index of the frame that failed, which is also its block height.
    pub height: u64,
    pub message: String,
}

pub fn encode_ledger(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in blocks {
        let bytes = b.to_canonical_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn write_ledger(path: &Path, blocks: &[Block]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_ledger(blocks))?;
    f.sync_all()
}

/// Decodes frames until the end of input or the first bad frame. Blocks
/// before a bad frame are still returned.
pub fn decode_ledger(bytes: &[u8]) -> (Vec<Block>, Option<FrameError>) {
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let height = blocks.len() as u64;
        let fail = |message: String| Some(FrameError { height, message });
        if bytes.len() - pos < 4 {
            return (blocks, fail("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() - pos < len {
            return (
                blocks,
                fail(format!("frame declares {len} bytes, {} remain", bytes.len() - pos)),
            );
        }
        match Block::from_canonical_bytes(&bytes[pos..pos + len]) {
            Ok(b) if b.height() == height => blocks.push(b),
            Ok(b) => return (blocks, fail(format!("frame holds height {}", b.height()))),
            Err(e) => return (blocks, fail(e.to_string())),
        }
        pos += len;
    }
    (blocks, None)
}

pub fn read_ledger(path: &Path) -> std::io::Result<(Vec<Block>, Option<FrameError>)> {
    Ok(decode_ledger(&std::fs::read(path)?))
}
