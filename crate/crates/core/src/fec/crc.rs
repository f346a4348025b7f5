//! CRC-32 (reflected 0x04C11DB7, init and final xor 0xFFFFFFFF), appended
//! little-endian.

pub const CRC_LEN: usize = 4;

pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

/// Returns `payload ‖ crc32(payload)` with the CRC in little-endian order.
pub fn crc_attach(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + CRC_LEN);
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32(payload).to_le_bytes());
    out
}

/// True when the trailing four bytes match the CRC of the rest.
pub fn crc_check(frame: &[u8]) -> bool {
    if frame.len() < CRC_LEN {
        return false;
    }
    let (payload, tail) = frame.split_at(frame.len() - CRC_LEN);
    crc32(payload).to_le_bytes() == tail
}
