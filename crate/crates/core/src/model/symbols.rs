//! Output alphabet of the decoder: ten digits, the list separator, EOS and a
//! BOS symbol that is only ever fed back as the first previous symbol.

use crate::error::{contract, Result};

pub const N_SYMBOLS: usize = 13;
pub const COMMA: u8 = 10;
pub const EOS: u8 = 11;
pub const BOS: u8 = 12;

pub fn is_digit(s: u8) -> bool {
    s < 10
}

/// Symbols of a docid or comma-joined list, EOS appended.
pub fn encode_target(target: &str) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(target.len() + 1);
    for ch in target.chars() {
        match ch {
            '0'..='9' => out.push(ch as u8 - b'0'),
            ',' => out.push(COMMA),
            other => return Err(contract(format!("symbol {other:?} outside the docid alphabet"))),
        }
    }
    out.push(EOS);
    Ok(out)
}

/// Inverse of [`encode_target`] up to the first EOS.
pub fn decode_symbols(symbols: &[u8]) -> String {
    symbols
        .iter()
        .take_while(|&&s| s != EOS)
        .map(|&s| match s {
            COMMA => ',',
            BOS => '^',
            d => char::from(b'0' + d),
        })
        .collect()
}
