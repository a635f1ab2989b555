use serde::{Deserialize, Serialize};

use crate::dsp::GRID_SIZE;
use crate::error::{Error, Result};

/// Architecture hyper-parameters. The spatial kernel always spans the full
/// electrode grid, so every embedding is spatially 1×1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrnConfig {
    pub n_groups: usize,
    pub channels_per_group: usize,
    pub input_samples: usize,
    /// Temporal kernel of encoder layers 1 and 3.
    pub temporal_kernel: usize,
    /// Temporal stride of encoder layer 3.
    pub temporal_stride3: usize,
    pub depth_multiplier: usize,
    pub relation_conv_kernel: usize,
    pub relation_channels_per_group: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub fc_hidden: usize,
    pub n_classes: usize,
    /// Batch norm + ELU after each relation convolution.
    pub relation_bn: bool,
}

impl Default for GrnConfig {
    fn default() -> Self {
        GrnConfig {
            n_groups: 9,
            channels_per_group: 4,
            input_samples: 750,
            temporal_kernel: 65,
            temporal_stride3: 10,
            depth_multiplier: 2,
            relation_conv_kernel: 10,
            relation_channels_per_group: 32,
            pool_window: 2,
            pool_stride: 2,
            fc_hidden: 8,
            n_classes: 3,
            relation_bn: true,
        }
    }
}

/// Every intermediate extent implied by a [`GrnConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub layer1_filters: usize,
    pub layer1_time: usize,
    pub spatial_channels: usize,
    pub embedding_groups: usize,
    pub embedding_channels: usize,
    pub embedding_time: usize,
    pub relation_channels: usize,
    pub relation1_time: usize,
    pub pooled_time: usize,
    pub relation2_time: usize,
}

impl Shapes {
    pub fn embedding_shape(&self) -> [usize; 3] {
        [self.embedding_groups, self.embedding_channels, self.embedding_time]
    }
}

fn shrink(stage: &str, len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if len < kernel {
        return Err(Error::dim(stage, "time", kernel, len));
    }
    Ok((len - kernel) / stride + 1)
}

impl GrnConfig {
    /// Narrower variant with the same layer structure: three groups and
    /// eight relation filters per group. Used where the full width is too
    /// expensive to train repeatedly on one CPU core.
    pub fn compact() -> Self {
        GrnConfig {
            n_groups: 3,
            relation_channels_per_group: 8,
            ..GrnConfig::default()
        }
    }

    pub fn shapes(&self) -> Result<Shapes> {
        let positive = [
            ("n_groups", self.n_groups),
            ("channels_per_group", self.channels_per_group),
            ("input_samples", self.input_samples),
            ("temporal_kernel", self.temporal_kernel),
            ("temporal_stride3", self.temporal_stride3),
            ("depth_multiplier", self.depth_multiplier),
            ("relation_conv_kernel", self.relation_conv_kernel),
            ("relation_channels_per_group", self.relation_channels_per_group),
            ("pool_window", self.pool_window),
            ("pool_stride", self.pool_stride),
            ("fc_hidden", self.fc_hidden),
            ("n_classes", self.n_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Parameter(format!("{name} must be positive")));
        }
        let layer1_filters = self.n_groups * self.channels_per_group;
        let layer1_time = shrink("encoder layer 1", self.input_samples, self.temporal_kernel, 1)?;
        let embedding_time = shrink("encoder layer 3", layer1_time, self.temporal_kernel, self.temporal_stride3)?;
        let relation1_time = shrink("relation layer 1", embedding_time, self.relation_conv_kernel, 1)?;
        let pooled_time = shrink("relation pooling", relation1_time, self.pool_window, self.pool_stride)?;
        let relation2_time = shrink("relation layer 2", pooled_time, self.relation_conv_kernel, 1)?;
        Ok(Shapes {
            layer1_filters,
            layer1_time,
            spatial_channels: layer1_filters * self.depth_multiplier,
            embedding_groups: self.n_groups,
            embedding_channels: self.channels_per_group * self.depth_multiplier,
            embedding_time,
            relation_channels: self.n_groups * self.relation_channels_per_group,
            relation1_time,
            pooled_time,
            relation2_time,
        })
    }

    pub fn grid(&self) -> usize {
        GRID_SIZE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_matches_published_extents() {
        let s = GrnConfig::default().shapes().unwrap();
        assert_eq!(s.layer1_filters, 36);
        assert_eq!(s.layer1_time, 686);
        assert_eq!(s.spatial_channels, 72);
        assert_eq!(s.embedding_shape(), [9, 8, 63]);
        assert_eq!(s.relation_channels, 288);
        assert_eq!(s.relation1_time, 54);
        assert_eq!(s.pooled_time, 27);
        assert_eq!(s.relation2_time, 18);
    }

    #[test]
    fn group_scaling() {
        for g in 1..12 {
            let cfg = GrnConfig { n_groups: g, ..GrnConfig::default() };
            let s = cfg.shapes().unwrap();
            assert_eq!(s.layer1_filters, 4 * g);
            assert_eq!(s.spatial_channels, 8 * g);
            assert_eq!(s.embedding_shape(), [g, 8, 63]);
            assert_eq!((s.relation_channels, s.relation2_time), (32 * g, 18));
        }
    }

    #[test]
    fn too_short_input_names_stage() {
        let cfg = GrnConfig { input_samples: 100, ..GrnConfig::default() };
        let err = cfg.shapes().unwrap_err().to_string();
        assert!(err.contains("encoder layer 3"), "{err}");
        assert!(GrnConfig { fc_hidden: 0, ..GrnConfig::default() }.shapes().is_err());
    }
}
