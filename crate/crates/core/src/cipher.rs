//! ChaCha20 keystream (RFC 8439 layout: 256-bit key, 32-bit block counter,
//! 96-bit nonce).

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const BLOCK_LEN: usize = 64;

/// Block counter used for the first keystream block of every embed.
pub const INITIAL_COUNTER: u32 = 0;

const SIGMA: [u32; 4] = [0x6170_7865, 0x3320_646e, 0x7962_2d32, 0x6b20_6574];

#[inline(always)]
fn quarter_round(s: &mut [u32; 16], a: usize, b: usize, c: usize, d: usize) {
    s[a] = s[a].wrapping_add(s[b]);
    s[d] = (s[d] ^ s[a]).rotate_left(16);
    s[c] = s[c].wrapping_add(s[d]);
    s[b] = (s[b] ^ s[c]).rotate_left(12);
    s[a] = s[a].wrapping_add(s[b]);
    s[d] = (s[d] ^ s[a]).rotate_left(8);
    s[c] = s[c].wrapping_add(s[d]);
    s[b] = (s[b] ^ s[c]).rotate_left(7);
}

fn init_state(key: &[u8; KEY_LEN], counter: u32, nonce: &[u8; NONCE_LEN]) -> [u32; 16] {
    let mut s = [0u32; 16];
    s[..4].copy_from_slice(&SIGMA);
    for (i, chunk) in key.chunks_exact(4).enumerate() {
        s[4 + i] = u32::from_le_bytes(chunk.try_into().unwrap());
    }
    s[12] = counter;
    for (i, chunk) in nonce.chunks_exact(4).enumerate() {
        s[13 + i] = u32::from_le_bytes(chunk.try_into().unwrap());
    }
    s
}

/// The ChaCha20 block function: 20 rounds plus the feed-forward addition.
pub fn block(key: &[u8; KEY_LEN], counter: u32, nonce: &[u8; NONCE_LEN]) -> [u8; BLOCK_LEN] {
    let input = init_state(key, counter, nonce);
    let mut s = input;
    for _ in 0..10 {
        quarter_round(&mut s, 0, 4, 8, 12);
        quarter_round(&mut s, 1, 5, 9, 13);
        quarter_round(&mut s, 2, 6, 10, 14);
        quarter_round(&mut s, 3, 7, 11, 15);
        quarter_round(&mut s, 0, 5, 10, 15);
        quarter_round(&mut s, 1, 6, 11, 12);
        quarter_round(&mut s, 2, 7, 8, 13);
        quarter_round(&mut s, 3, 4, 9, 14);
    }
    let mut out = [0u8; BLOCK_LEN];
    for (i, word) in s.iter().enumerate() {
        let v = word.wrapping_add(input[i]);
        out[4 * i..4 * i + 4].copy_from_slice(&v.to_le_bytes());
    }
    out
}

/// `len` keystream bytes starting at block `counter`.
///
/// Panics if the request would wrap the 32-bit block counter.
pub fn keystream(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], counter: u32, len: usize) -> Vec<u8> {
    let blocks = len.div_ceil(BLOCK_LEN);
    assert!(
        (counter as u64) + (blocks as u64) <= (u32::MAX as u64) + 1,
        "keystream request exceeds the ChaCha20 block counter"
    );
    let mut out = Vec::with_capacity(blocks * BLOCK_LEN);
    for b in 0..blocks as u32 {
        out.extend_from_slice(&block(key, counter + b, nonce));
    }
    out.truncate(len);
    out
}

/// XOR `data` in place with the keystream starting at block `counter`.
pub fn apply_keystream(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], counter: u32, data: &mut [u8]) {
    let ks = keystream(key, nonce, counter, data.len());
    data.iter_mut().zip(ks).for_each(|(d, k)| *d ^= k);
}
