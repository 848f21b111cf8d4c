//! Full-precision JSON form of a document, for exact round trips.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::VectorDocument;

pub fn document_to_string(doc: &VectorDocument) -> String {
    serde_json::to_string_pretty(doc).expect("documents always serialize") + "\n"
}

pub fn document_from_str(text: &str) -> std::result::Result<VectorDocument, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn write_document(path: &Path, doc: &VectorDocument) -> Result<()> {
    std::fs::write(path, document_to_string(doc)).map_err(|e| Error::io(path, e))
}

pub fn read_document(path: &Path) -> Result<VectorDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    document_from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
