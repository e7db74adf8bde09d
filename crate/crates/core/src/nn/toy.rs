//! The compact hybrid network used throughout this crate.
//!
//! An encoder-decoder for per-pixel RNFL/GC-IPL segmentation with a
//! scan-level classification head hanging off the encoder end. The context
//! block in the encoder stacks three dilated convolutions whose rates follow
//! the variable ladder for a nominal rate of 3 ([2, 3, 4]), widening the
//! receptive field without gridding holes. Every layer family supported by
//! the engine appears at least once.

use super::dilation::make_schedule;
use super::{LayerSpec, NetworkSpec, Node, Padding};
use crate::error::{Error, Result};

struct Builder {
    nodes: Vec<Node>,
}

impl Builder {
    fn push(&mut self, layer: LayerSpec, inputs: Vec<usize>) -> usize {
        self.nodes.push(Node { layer, inputs });
        self.nodes.len() - 1
    }

    fn conv(
        &mut self,
        from: usize,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
    ) -> usize {
        self.push(
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                dilation,
                padding: Padding::Same,
            },
            vec![from],
        )
    }

    /// conv + batch norm + relu
    fn conv_bn_relu(
        &mut self,
        from: usize,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
    ) -> usize {
        let c = self.conv(from, in_ch, out_ch, kernel, dilation);
        let b = self.push(LayerSpec::BatchNorm { channels: out_ch }, vec![c]);
        self.push(LayerSpec::Relu, vec![b])
    }
}

/// Build the hybrid spec for a fixed input size. Height and width must be
/// divisible by 16 (three encoder pools plus one pooling step in the
/// classification head).
pub fn toy_hybrid_spec(input_h: usize, input_w: usize) -> Result<NetworkSpec> {
    if !input_h.is_multiple_of(16) || !input_w.is_multiple_of(16) {
        return Err(Error::invalid(format!(
            "hybrid spec needs input dimensions divisible by 16, got {input_h}x{input_w}"
        )));
    }
    let ctx_rates = make_schedule(3, 3)?.rates;

    let mut b = Builder { nodes: Vec::new() };
    let input = b.push(LayerSpec::Input, vec![]);

    // Stem at full resolution; explicit padding + valid convolution.
    let pad = b.push(
        LayerSpec::ZeroPad {
            top: 1,
            bottom: 1,
            left: 1,
            right: 1,
        },
        vec![input],
    );
    let stem_conv = b.push(
        LayerSpec::Conv {
            in_ch: 1,
            out_ch: 8,
            kernel: 3,
            dilation: 1,
            padding: Padding::Valid,
        },
        vec![pad],
    );
    let stem_bn = b.push(LayerSpec::BatchNorm { channels: 8 }, vec![stem_conv]);
    let stem = b.push(LayerSpec::Relu, vec![stem_bn]);
    let down1 = b.push(LayerSpec::MaxPool { size: 2, stride: 2 }, vec![stem]);

    let enc2 = b.conv_bn_relu(down1, 8, 16, 3, 1);
    let down2 = b.push(LayerSpec::MaxPool { size: 2, stride: 2 }, vec![enc2]);

    // Variable-dilation context block at quarter resolution.
    let mut ctx = down2;
    for &rate in &ctx_rates {
        ctx = b.conv_bn_relu(ctx, 16, 16, 3, rate);
    }
    let down3 = b.push(LayerSpec::AvgPool { size: 2, stride: 2 }, vec![ctx]);

    // Encoder end shared by both heads.
    let encoder = b.conv_bn_relu(down3, 16, 32, 3, 1);

    // Decoder: upsample, refine, merge the scaled context skip, refine, and
    // project to the three segmentation classes.
    let up1 = b.push(LayerSpec::Upsample { factor: 2 }, vec![encoder]);
    let dec1 = b.conv_bn_relu(up1, 32, 16, 3, 1);
    let skip = b.push(LayerSpec::Scale { factor: 0.5 }, vec![ctx]);
    let merged = b.push(LayerSpec::Concat, vec![dec1, skip]);
    let dec2 = b.conv_bn_relu(merged, 32, 16, 3, 1);
    let up2 = b.push(LayerSpec::Upsample { factor: 2 }, vec![dec2]);
    let dec3 = b.conv_bn_relu(up2, 16, 8, 3, 1);
    let up3 = b.push(LayerSpec::Upsample { factor: 2 }, vec![dec3]);
    let seg_logits = b.conv(up3, 8, 3, 1, 1);
    let seg_output = b.push(LayerSpec::Softmax, vec![seg_logits]);

    // Classification head from the encoder end.
    let cls_pool = b.push(LayerSpec::AvgPool { size: 2, stride: 2 }, vec![encoder]);
    let squeeze = b.conv(cls_pool, 32, 8, 1, 1);
    let squeeze_act = b.push(LayerSpec::Relu, vec![squeeze]);
    let (fh, fw) = (input_h / 16, input_w / 16);
    let folded = b.push(
        LayerSpec::Reshape {
            channels: 1,
            height: 8 * fh,
            width: fw,
        },
        vec![squeeze_act],
    );
    let flat = b.push(LayerSpec::Flatten, vec![folded]);
    let hidden = b.push(
        LayerSpec::FullyConnected {
            in_features: 8 * fh * fw,
            out_features: 24,
        },
        vec![flat],
    );
    let hidden_act = b.push(LayerSpec::Relu, vec![hidden]);
    let cls_logits = b.push(
        LayerSpec::FullyConnected {
            in_features: 24,
            out_features: 2,
        },
        vec![hidden_act],
    );
    let cls_output = b.push(LayerSpec::Softmax, vec![cls_logits]);

    let spec = NetworkSpec {
        name: "hybrid-toy".into(),
        input_shape: (1, input_h, input_w),
        nodes: b.nodes,
        seg_output,
        cls_output,
    };
    spec.validate()?;
    Ok(spec)
}
