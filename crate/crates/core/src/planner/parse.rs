use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::network::{NodeId, Path};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ParseError {
    #[error("no JSON array in reply")]
    NoArrayFound,
    #[error("array element {0} is not a non-negative integer")]
    NonIntegerElement(String),
    #[error("array is empty")]
    EmptyArray,
}

/// Extracts the last top-level JSON array from free text and reads it as a
/// node sequence.
///
/// Replies may carry reasoning before the answer, so earlier arrays are
/// ignored. Bracketed prose that is not valid JSON is skipped. Only the
/// structure is checked here; whether the hops exist is the caller's
/// concern.
pub fn parse_path_from_text(text: &str) -> Result<Path, ParseError> {
    let mut last: Option<Vec<Value>> = None;
    let mut i = 0;
    while let Some(offset) = text[i..].find('[') {
        let start = i + offset;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => {
                last = Some(items);
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    let items = last.ok_or(ParseError::NoArrayFound)?;
    if items.is_empty() {
        return Err(ParseError::EmptyArray);
    }
    items
        .iter()
        .map(|v| {
            v.as_u64()
                .and_then(|n| usize::try_from(n).ok())
                .map(NodeId)
                .ok_or_else(|| ParseError::NonIntegerElement(v.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Path::new)
}
