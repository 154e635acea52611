//! Named-tensor container: a text index followed by a little-endian `f64` payload.
//!
//! ```text
//! NAMED-TENSORS 1
//! meta <key> <json string>
//! tensor <name> <d0>x<d1>... <byte offset> <element count>
//! end
//! <payload>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "NAMED-TENSORS 1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensors<S> {
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Default for NamedTensors<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl<S: Scalar> NamedTensors<S> {
    pub fn new() -> Self {
        Self {
            meta: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !valid_name(key) {
            return Err(Error::contract(format!("invalid meta key {key:?}")));
        }
        self.meta.push((key.to_string(), value.into()));
        Ok(())
    }

    pub fn push(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if !valid_name(name) {
            return Err(Error::contract(format!("invalid tensor name {name:?}")));
        }
        if self.get(name).is_some() {
            return Err(Error::Integrity(format!("duplicate tensor name {name}")));
        }
        self.tensors.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> &[(String, Tensor<S>)] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<(String, Tensor<S>)> {
        self.tensors
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut index = String::new();
        index.push_str(MAGIC);
        index.push('\n');
        for (k, v) in &self.meta {
            let encoded = serde_json::to_string(v).expect("strings always serialize");
            index.push_str(&format!("meta {k} {encoded}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
            index.push_str(&format!("tensor {name} {} {offset} {}\n", dims.join("x"), t.len()));
            offset += t.len() * 8;
        }
        index.push_str("end\n");
        w.write_all(index.as_bytes())?;
        for (_, t) in &self.tensors {
            let mut buf = Vec::with_capacity(t.len() * 8);
            for x in t.data() {
                buf.extend_from_slice(&x.as_f64().to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut line = String::new();
        let mut line_no = 0usize;
        let mut next_line = |reader: &mut BufReader<_>, line: &mut String| -> Result<usize> {
            line.clear();
            line_no += 1;
            let n = reader.read_line(line).map_err(|e| Error::Checkpoint(e.to_string()))?;
            if n == 0 {
                return Err(Error::Checkpoint("unexpected end of index".into()));
            }
            Ok(line_no)
        };
        let ln = next_line(&mut reader, &mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::Parse {
                line: ln,
                message: "missing NAMED-TENSORS header".into(),
            });
        }
        let mut out = Self::new();
        let mut entries: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
        loop {
            let ln = next_line(&mut reader, &mut line)?;
            let text = line.trim_end_matches('\n');
            if text == "end" {
                break;
            }
            let bad = |m: &str| Error::Parse {
                line: ln,
                message: m.to_string(),
            };
            if let Some(rest) = text.strip_prefix("meta ") {
                let (key, value) = rest.split_once(' ').ok_or_else(|| bad("meta needs a value"))?;
                let value: String = serde_json::from_str(value).map_err(|e| bad(&e.to_string()))?;
                out.push_meta(key, value)?;
            } else if let Some(rest) = text.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, dims, offset, count] = parts[..] else {
                    return Err(bad("tensor line needs name, shape, offset and count"));
                };
                let shape = dims
                    .split('x')
                    .map(str::parse)
                    .collect::<Result<Vec<usize>, _>>()
                    .map_err(|_| bad("bad shape"))?;
                let offset = offset.parse().map_err(|_| bad("bad offset"))?;
                let count = count.parse().map_err(|_| bad("bad element count"))?;
                entries.push((name.to_string(), shape, offset, count));
            } else {
                return Err(bad("unknown index line"));
            }
        }
        let mut payload = Vec::new();
        reader
            .read_to_end(&mut payload)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        for (name, shape, offset, count) in entries {
            let end = offset + count * 8;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!("tensor {name} runs past the payload")));
            }
            let data = payload[offset..end]
                .chunks_exact(8)
                .map(|b| S::of(f64::from_le_bytes(b.try_into().expect("chunk of 8"))))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            out.push(&name, t)?;
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = NamedTensors::<f64>::new();
        c.push_meta("config", "{\"d\": 4}").unwrap();
        c.push("w", Tensor::new(vec![2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap())
            .unwrap();
        c.push("b", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let bytes = c.to_bytes();
        let back = NamedTensors::<f64>::read_from(&bytes[..]).unwrap();
        assert_eq!(back.meta("config"), Some("{\"d\": 4}"));
        for ((n1, t1), (n2, t2)) in c.tensors().iter().zip(back.tensors()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_duplicate_and_bad_names() {
        let mut c = NamedTensors::<f64>::new();
        c.push("a", Tensor::scalar(1.0)).unwrap();
        assert!(c.push("a", Tensor::scalar(1.0)).is_err());
        assert!(c.push("has space", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut c = NamedTensors::<f64>::new();
        c.push("a", Tensor::new(vec![4], vec![1.0; 4]).unwrap()).unwrap();
        let bytes = c.to_bytes();
        assert!(NamedTensors::<f64>::read_from(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_f64_payloads_round_trip(values in prop::collection::vec(any::<f64>(), 1..40)) {
            let mut c = NamedTensors::<f64>::new();
            c.push("x", Tensor::new(vec![values.len()], values.clone()).unwrap()).unwrap();
            let back = NamedTensors::<f64>::read_from(&c.to_bytes()[..]).unwrap();
            let got: Vec<u64> = back.get("x").unwrap().data().iter().map(|x| x.to_bits()).collect();
            let want: Vec<u64> = values.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
