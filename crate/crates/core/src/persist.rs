//! JSON documents for networks, certificates and property sets.
//!
//! Floating-point values are written in shortest round-trip form, so a
//! save/load cycle reproduces every bound bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Certificate, Property};
use crate::nn::Network;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub certificates: Vec<Certificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedProperty {
    pub id: String,
    pub property: Property,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertySet {
    pub properties: Vec<NamedProperty>,
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    read_json(path)
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    write_json(path, net)
}

pub fn load_certificates(path: impl AsRef<Path>) -> Result<Vec<Certificate>> {
    Ok(read_json::<CertificateFile>(path)?.certificates)
}

pub fn save_certificates(path: impl AsRef<Path>, certs: &[Certificate]) -> Result<()> {
    write_json(
        path,
        &CertificateFile {
            certificates: certs.to_vec(),
        },
    )
}
