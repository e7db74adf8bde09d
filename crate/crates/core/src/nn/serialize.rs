//! Binary container for a network spec plus its weights.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "RGCN"
//! version u32      currently 1
//! name    u32 length + UTF-8 bytes
//! input   u32 x 3  (channels, height, width)
//! nodes   u32 count, then per node:
//!           opcode u8, inputs (u32 count + u32 ids), opcode parameters
//! outputs u32 seg_output, u32 cls_output
//! blocks  per node: tag u8 (0 none, 1 conv, 2 batch-norm, 3 dense),
//!           then raw f64 arrays, each prefixed by a u64 length
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::conv::{ConvKernel, Padding};
use super::{LayerSpec, Network, NetworkSpec, Node, ParamBlock, Weights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RGCN";
pub const VERSION: u32 = 1;

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.out.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.out.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        self.u64(vs.len() as u64)?;
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> std::io::Result<u8> {
        let mut b = [0u8; 1];
        self.inp.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.inp.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self) -> std::io::Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn write_layer<W: Write>(w: &mut Writer<W>, layer: &LayerSpec) -> std::io::Result<()> {
    match *layer {
        LayerSpec::Input => w.u8(0),
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel,
            dilation,
            padding,
        } => {
            w.u8(1)?;
            w.u32(in_ch as u32)?;
            w.u32(out_ch as u32)?;
            w.u32(kernel as u32)?;
            w.u32(dilation as u32)?;
            w.u8(match padding {
                Padding::Same => 0,
                Padding::Valid => 1,
            })
        }
        LayerSpec::MaxPool { size, stride } => {
            w.u8(2)?;
            w.u32(size as u32)?;
            w.u32(stride as u32)
        }
        LayerSpec::AvgPool { size, stride } => {
            w.u8(3)?;
            w.u32(size as u32)?;
            w.u32(stride as u32)
        }
        LayerSpec::BatchNorm { channels } => {
            w.u8(4)?;
            w.u32(channels as u32)
        }
        LayerSpec::Relu => w.u8(5),
        LayerSpec::Softmax => w.u8(6),
        LayerSpec::ZeroPad {
            top,
            bottom,
            left,
            right,
        } => {
            w.u8(7)?;
            w.u32(top as u32)?;
            w.u32(bottom as u32)?;
            w.u32(left as u32)?;
            w.u32(right as u32)
        }
        LayerSpec::Upsample { factor } => {
            w.u8(8)?;
            w.u32(factor as u32)
        }
        LayerSpec::Scale { factor } => {
            w.u8(9)?;
            w.f64(factor)
        }
        LayerSpec::Concat => w.u8(10),
        LayerSpec::Reshape {
            channels,
            height,
            width,
        } => {
            w.u8(11)?;
            w.u32(channels as u32)?;
            w.u32(height as u32)?;
            w.u32(width as u32)
        }
        LayerSpec::Flatten => w.u8(12),
        LayerSpec::FullyConnected {
            in_features,
            out_features,
        } => {
            w.u8(13)?;
            w.u32(in_features as u32)?;
            w.u32(out_features as u32)
        }
    }
}

fn read_layer<R: Read>(
    r: &mut Reader<R>,
) -> std::io::Result<std::result::Result<LayerSpec, String>> {
    let code = r.u8()?;
    let layer = match code {
        0 => LayerSpec::Input,
        1 => {
            let in_ch = r.u32()? as usize;
            let out_ch = r.u32()? as usize;
            let kernel = r.u32()? as usize;
            let dilation = r.u32()? as usize;
            let padding = match r.u8()? {
                0 => Padding::Same,
                1 => Padding::Valid,
                p => return Ok(Err(format!("unknown padding code {p}"))),
            };
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                dilation,
                padding,
            }
        }
        2 => LayerSpec::MaxPool {
            size: r.u32()? as usize,
            stride: r.u32()? as usize,
        },
        3 => LayerSpec::AvgPool {
            size: r.u32()? as usize,
            stride: r.u32()? as usize,
        },
        4 => LayerSpec::BatchNorm {
            channels: r.u32()? as usize,
        },
        5 => LayerSpec::Relu,
        6 => LayerSpec::Softmax,
        7 => LayerSpec::ZeroPad {
            top: r.u32()? as usize,
            bottom: r.u32()? as usize,
            left: r.u32()? as usize,
            right: r.u32()? as usize,
        },
        8 => LayerSpec::Upsample {
            factor: r.u32()? as usize,
        },
        9 => LayerSpec::Scale { factor: r.f64()? },
        10 => LayerSpec::Concat,
        11 => LayerSpec::Reshape {
            channels: r.u32()? as usize,
            height: r.u32()? as usize,
            width: r.u32()? as usize,
        },
        12 => LayerSpec::Flatten,
        13 => LayerSpec::FullyConnected {
            in_features: r.u32()? as usize,
            out_features: r.u32()? as usize,
        },
        c => return Ok(Err(format!("unknown layer opcode {c}"))),
    };
    Ok(Ok(layer))
}

/// Serialize a network (spec + weights) to the binary container.
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer {
        out: std::io::BufWriter::new(file),
    };
    (|| -> std::io::Result<()> {
        w.out.write_all(MAGIC)?;
        w.u32(VERSION)?;
        let name = net.spec.name.as_bytes();
        w.u32(name.len() as u32)?;
        w.out.write_all(name)?;
        let (c, h, wd) = net.spec.input_shape;
        w.u32(c as u32)?;
        w.u32(h as u32)?;
        w.u32(wd as u32)?;
        w.u32(net.spec.nodes.len() as u32)?;
        for node in &net.spec.nodes {
            write_layer(&mut w, &node.layer)?;
            w.u32(node.inputs.len() as u32)?;
            for &i in &node.inputs {
                w.u32(i as u32)?;
            }
        }
        w.u32(net.spec.seg_output as u32)?;
        w.u32(net.spec.cls_output as u32)?;
        for block in &net.weights.blocks {
            match block {
                ParamBlock::None => w.u8(0)?,
                ParamBlock::Conv(k) => {
                    w.u8(1)?;
                    w.u32(k.out_ch as u32)?;
                    w.u32(k.in_ch as u32)?;
                    w.u32(k.kh as u32)?;
                    w.u32(k.kw as u32)?;
                    w.u32(k.dilation as u32)?;
                    w.f64s(k.weight())?;
                    w.f64s(k.bias())?;
                }
                ParamBlock::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    w.u8(2)?;
                    w.f64s(gamma)?;
                    w.f64s(beta)?;
                    w.f64s(running_mean)?;
                    w.f64s(running_var)?;
                }
                ParamBlock::Dense { weight, bias } => {
                    w.u8(3)?;
                    w.f64s(weight)?;
                    w.f64s(bias)?;
                }
            }
        }
        w.out.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Load a network from the binary container and shape-check it.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inp: std::io::BufReader::new(file),
    };
    let bad = |reason: String| Error::format(path, reason);

    let mut magic = [0u8; 4];
    r.inp
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(bad("not a network container (bad magic)".into()));
    }
    (|| -> std::io::Result<std::result::Result<Network, Error>> {
        let version = r.u32()?;
        if version != VERSION {
            return Ok(Err(bad(format!("unsupported container version {version}"))));
        }
        let name_len = r.u32()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.inp.read_exact(&mut name_bytes)?;
        let name = match String::from_utf8(name_bytes) {
            Ok(n) => n,
            Err(_) => return Ok(Err(bad("network name is not UTF-8".into()))),
        };
        let input_shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let node_count = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let layer = match read_layer(&mut r)? {
                Ok(l) => l,
                Err(reason) => return Ok(Err(bad(reason))),
            };
            let n_inputs = r.u32()? as usize;
            let mut inputs = Vec::with_capacity(n_inputs);
            for _ in 0..n_inputs {
                inputs.push(r.u32()? as usize);
            }
            nodes.push(Node { layer, inputs });
        }
        let seg_output = r.u32()? as usize;
        let cls_output = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let tag = r.u8()?;
            let block = match tag {
                0 => ParamBlock::None,
                1 => {
                    let out_ch = r.u32()? as usize;
                    let in_ch = r.u32()? as usize;
                    let kh = r.u32()? as usize;
                    let kw = r.u32()? as usize;
                    let dilation = r.u32()? as usize;
                    let weight = r.f64s()?;
                    let bias = r.f64s()?;
                    match ConvKernel::new(out_ch, in_ch, kh, kw, dilation, weight, bias) {
                        Ok(k) => ParamBlock::Conv(k),
                        Err(e) => return Ok(Err(e)),
                    }
                }
                2 => ParamBlock::BatchNorm {
                    gamma: r.f64s()?,
                    beta: r.f64s()?,
                    running_mean: r.f64s()?,
                    running_var: r.f64s()?,
                },
                3 => ParamBlock::Dense {
                    weight: r.f64s()?,
                    bias: r.f64s()?,
                },
                t => return Ok(Err(bad(format!("unknown parameter block tag {t}")))),
            };
            blocks.push(block);
        }
        let spec = NetworkSpec {
            name,
            input_shape,
            nodes,
            seg_output,
            cls_output,
        };
        Ok(Network::new(spec, Weights { blocks }))
    })()
    .map_err(|e| Error::io(path, e))?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::toy_hybrid_spec;

    #[test]
    fn container_round_trips_spec_and_weights() {
        let dir = std::env::temp_dir().join(format!("rgc-oct-net-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.bin");
        let net = Network::init(toy_hybrid_spec(32, 32).unwrap(), 77).unwrap();
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back.spec, net.spec);
        assert_eq!(back.weights, net.weights);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join(format!("rgc-oct-net-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.bin");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        let err = load_network(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }
}
