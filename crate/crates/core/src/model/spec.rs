use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape of the residual-adapter network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureSpec {
    pub initial_filters: usize,
    pub stack_filters: Vec<usize>,
    pub blocks_per_stack: usize,
    pub kernel: usize,
    pub adapter_kernel: usize,
    pub attention_shared: bool,
    pub head_hidden_width: usize,
    pub head_dropout_rate: f64,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            initial_filters: 32,
            stack_filters: vec![64, 128, 256],
            blocks_per_stack: 2,
            kernel: 3,
            adapter_kernel: 1,
            attention_shared: false,
            head_hidden_width: 64,
            head_dropout_rate: 0.5,
        }
    }
}

/// One 3×3 convolution of the backbone (each has a parallel 1×1 adapter).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ArchitectureSpec {
    /// Desk-scale variant: 8 initial filters, stacks of 8/16/32.
    pub fn tiny() -> Self {
        Self {
            initial_filters: 8,
            stack_filters: vec![8, 16, 32],
            head_hidden_width: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSpec(msg));
        if self.kernel != 3 || self.adapter_kernel != 1 {
            return bad(format!(
                "kernel {}x{} / adapter {}x{} unsupported; expected 3x3 and 1x1",
                self.kernel, self.kernel, self.adapter_kernel, self.adapter_kernel
            ));
        }
        if self.initial_filters == 0 || self.stack_filters.is_empty() || self.blocks_per_stack == 0 {
            return bad("filters, stacks and blocks must be non-empty".into());
        }
        if self.stack_filters.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad(format!("stack filters {:?} must double per stack", self.stack_filters));
        }
        if self.stack_filters[0] < self.initial_filters {
            return bad("first stack cannot have fewer filters than the initial convolution".into());
        }
        if self.head_hidden_width == 0 {
            return bad("head_hidden_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.head_dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.head_dropout_rate));
        }
        Ok(())
    }

    /// All backbone convolutions in forward order: the initial convolution,
    /// then two per residual block.
    pub fn conv_layers(&self) -> Vec<ConvLayer> {
        let mut layers = vec![ConvLayer {
            in_channels: 1,
            out_channels: self.initial_filters,
            stride: 1,
        }];
        let mut prev = self.initial_filters;
        for &filters in &self.stack_filters {
            for block in 0..self.blocks_per_stack {
                layers.push(ConvLayer {
                    in_channels: prev,
                    out_channels: filters,
                    stride: if block == 0 { 2 } else { 1 },
                });
                layers.push(ConvLayer {
                    in_channels: filters,
                    out_channels: filters,
                    stride: 1,
                });
                prev = filters;
            }
        }
        layers
    }

    /// Channels at the attention layer.
    pub fn feature_channels(&self) -> usize {
        *self.stack_filters.last().expect("validated")
    }

    /// Cumulative time/frequency downsampling of the backbone.
    pub fn downsample_factor(&self) -> usize {
        1 << self.stack_filters.len()
    }

    pub fn shared_conv_params(&self) -> usize {
        self.conv_layers()
            .iter()
            .map(|l| self.kernel * self.kernel * l.in_channels * l.out_channels)
            .sum()
    }

    pub fn adapter_params(&self) -> usize {
        self.conv_layers().iter().map(|l| l.in_channels * l.out_channels).sum()
    }

    /// Channel widths of every backbone batch-norm layer (one per
    /// convolution plus the final one).
    pub fn backbone_bn_channels(&self) -> Vec<usize> {
        let mut ch: Vec<usize> = self.conv_layers().iter().map(|l| l.out_channels).collect();
        ch.push(self.feature_channels());
        ch
    }

    pub fn attention_params(&self) -> usize {
        let c = self.feature_channels();
        c * c + 2 * c
    }

    pub fn head_params(&self, n_classes: usize) -> usize {
        let (c, h) = (self.feature_channels(), self.head_hidden_width);
        c * h + h + 2 * h + h * n_classes + n_classes
    }

    /// Trainable parameters private to one domain.
    pub fn domain_params(&self, n_classes: usize) -> usize {
        let bn: usize = self.backbone_bn_channels().iter().map(|c| 2 * c).sum();
        let attention = if self.attention_shared { 0 } else { self.attention_params() };
        self.adapter_params() + bn + attention + self.head_params(n_classes)
    }

    pub fn shared_params(&self) -> usize {
        self.shared_conv_params() + if self.attention_shared { self.attention_params() } else { 0 }
    }
}
