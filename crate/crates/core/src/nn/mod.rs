//! A small deterministic CNN engine: forward, backprop, SGD.
//!
//! There is no batch normalization and no residual path. Reductions run in
//! a fixed order so a seed plus a data order determines every bit of the
//! trained weights.

mod layer;
mod model;
mod optim;
mod train;

pub use layer::{Layer, LayerKind, LayerSpec};
pub use model::{
    argmax, evaluate, forward, loss_and_gradients, predict, BatchOutput, Gradients, ModelState, Shape3,
};
pub use optim::{backward_and_step, LrSchedule, Sgd};
pub use train::{train, SgdTrainer, TrainOptions};

use alloc::format;
use alloc::vec::Vec;

/// Two 3x3 conv blocks (conv, relu, 2x2 max pool) and a dense classifier.
/// `image_size` must be divisible by 4.
pub fn toy_cnn(channels: usize, classes: usize, width: usize, image_size: usize) -> Vec<LayerSpec> {
    let side = image_size / 4;
    alloc::vec![
        LayerSpec::new("conv1", LayerKind::conv(3, channels, width, 1, 1, true)),
        LayerSpec::new("relu1", LayerKind::Relu),
        LayerSpec::new("pool1", LayerKind::MaxPool { k: 2 }),
        LayerSpec::new("conv2", LayerKind::conv(3, width, width, 1, 1, true)),
        LayerSpec::new("relu2", LayerKind::Relu),
        LayerSpec::new("pool2", LayerKind::MaxPool { k: 2 }),
        LayerSpec::new(
            "fc",
            LayerKind::Dense {
                inputs: width * side * side,
                outputs: classes,
                bias: true,
            },
        ),
        LayerSpec::new("xent", LayerKind::SoftmaxXent),
    ]
}

/// Conv stack ending in global average pooling; `depth` convs of `width`
/// channels after the stem.
pub fn gap_cnn(channels: usize, classes: usize, width: usize, depth: usize) -> Vec<LayerSpec> {
    let mut specs = alloc::vec![
        LayerSpec::new("conv0", LayerKind::conv(3, channels, width, 1, 1, true)),
        LayerSpec::new("relu0", LayerKind::Relu),
    ];
    for i in 1..=depth {
        specs.push(LayerSpec::new(format!("conv{i}"), LayerKind::conv(3, width, width, 1, 1, true)));
        specs.push(LayerSpec::new(format!("relu{i}"), LayerKind::Relu));
    }
    specs.push(LayerSpec::new("gap", LayerKind::GlobalAvgPool));
    specs.push(LayerSpec::new(
        "fc",
        LayerKind::Dense {
            inputs: width,
            outputs: classes,
            bias: true,
        },
    ));
    specs.push(LayerSpec::new("xent", LayerKind::SoftmaxXent));
    specs
}
