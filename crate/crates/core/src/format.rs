//! Versioned JSON envelope shared by every saved tree.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_NAME: &str = "triplet-nn-tree";
pub const FORMAT_VERSION: u32 = 1;

pub const METHOD_COMPTREE: &str = "comptree";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed tree file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a {FORMAT_NAME} file (found format {0:?})")]
    WrongFormat(String),
    #[error("unsupported tree file version {0}")]
    Version(u32),
    #[error("tree file holds a {found} tree, expected {expected}")]
    Method { expected: String, found: String },
    #[error("tree file fails validation: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeFile<T> {
    pub format: String,
    pub version: u32,
    pub method: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    method: String,
}

pub fn to_json<T: Serialize>(method: &str, body: &T) -> String {
    #[derive(Serialize)]
    struct Out<'a, T> {
        format: &'a str,
        version: u32,
        method: &'a str,
        #[serde(flatten)]
        body: &'a T,
    }
    serde_json::to_string(&Out { format: FORMAT_NAME, version: FORMAT_VERSION, method, body })
        .expect("tree serialization cannot fail")
}

/// Reads the method tag without decoding the body.
pub fn peek_method(text: &str) -> Result<String, FormatError> {
    let h: Header = serde_json::from_str(text)?;
    check_header(&h)?;
    Ok(h.method)
}

fn check_header(h: &Header) -> Result<(), FormatError> {
    if h.format != FORMAT_NAME {
        return Err(FormatError::WrongFormat(h.format.clone()));
    }
    if h.version != FORMAT_VERSION {
        return Err(FormatError::Version(h.version));
    }
    Ok(())
}

pub fn from_json<T: DeserializeOwned>(text: &str, method: &str) -> Result<TreeFile<T>, FormatError> {
    let h: Header = serde_json::from_str(text)?;
    check_header(&h)?;
    if h.method != method {
        return Err(FormatError::Method { expected: method.into(), found: h.method });
    }
    Ok(serde_json::from_str(text)?)
}
