//! Run manifests: resolved configuration, seed and content hashes of every
//! input and output. No wall-clock data, so reruns produce identical bytes.

use std::io::{self, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes everything read through it.
pub struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    pub fn new(inner: R) -> Self {
        HashingReader { inner, hasher: Sha256::new() }
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Keys match the long flag names, so the section doubles as a config file.
    pub config: Map<String, Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &'static str, config: Map<String, Value>, seed: Option<u64>) -> Self {
        Manifest {
            tool: "mapinfer",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path, sha256: String) {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256 });
    }

    /// Outputs are recorded by file name only so the manifest does not depend
    /// on where the run wrote them.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(FileDigest { path: name, sha256: sha256_hex(bytes) });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let mut r = HashingReader::new(&b"abc"[..]);
        let mut sink = Vec::new();
        r.read_to_end(&mut sink).unwrap();
        assert_eq!(r.finish(), sha256_hex(b"abc"));
    }

    #[test]
    fn outputs_drop_directories() {
        let mut m = Manifest::new("synth", Map::new(), Some(7));
        m.output(Path::new("/tmp/x/world.truth.edges"), b"");
        let v: Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["outputs"][0]["path"], "world.truth.edges");
        assert_eq!(v["seed"], 7);
    }
}
