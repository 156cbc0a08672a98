//! Placement of each latent component in the stacked latent vector.

use std::fmt;

use super::spec::{Interaction, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Intercept,
    FixedEffects,
    SpatialStructured,
    SpatialIid,
    TemporalSeasonal,
    TemporalIid,
    Interaction,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Intercept => "intercept",
            BlockKind::FixedEffects => "fixed_effects",
            BlockKind::SpatialStructured => "spatial_structured",
            BlockKind::SpatialIid => "spatial_iid",
            BlockKind::TemporalSeasonal => "temporal_seasonal",
            BlockKind::TemporalIid => "temporal_iid",
            BlockKind::Interaction => "interaction",
        }
    }

    /// True for blocks whose precision is a hyperparameter.
    pub fn is_random(self) -> bool {
        !matches!(self, BlockKind::Intercept | BlockKind::FixedEffects)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentLayout {
    blocks: Vec<Block>,
    n_sites: usize,
    n_times: usize,
}

impl LatentLayout {
    /// Blocks in the fixed order intercept, fixed effects, spatial ICAR,
    /// spatial iid, seasonal, temporal iid, interaction.
    pub fn new(spec: &ModelSpec, n_sites: usize, n_times: usize) -> Self {
        let mut wanted = Vec::new();
        if spec.intercept {
            wanted.push((BlockKind::Intercept, 1));
        }
        if !spec.fixed_effects.is_empty() {
            wanted.push((BlockKind::FixedEffects, spec.fixed_effects.len()));
        }
        if spec.spatial {
            wanted.push((BlockKind::SpatialStructured, n_sites));
            wanted.push((BlockKind::SpatialIid, n_sites));
        }
        if spec.seasonal {
            wanted.push((BlockKind::TemporalSeasonal, n_times));
        }
        if spec.temporal_iid {
            wanted.push((BlockKind::TemporalIid, n_times));
        }
        if spec.interaction == Interaction::TypeI {
            wanted.push((BlockKind::Interaction, n_sites * n_times));
        }
        let mut offset = 0;
        let blocks = wanted
            .into_iter()
            .map(|(kind, len)| {
                let b = Block { kind, offset, len };
                offset += len;
                b
            })
            .collect();
        Self {
            blocks,
            n_sites,
            n_times,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Blocks carrying a precision hyperparameter, in layout order.
    pub fn random_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind.is_random())
    }

    /// Latent index of site `site` (1-based) within a per-site block.
    pub fn site_index(&self, kind: BlockKind, site: usize) -> Option<usize> {
        self.block(kind).map(|b| b.offset + site - 1)
    }

    pub fn time_index(&self, kind: BlockKind, t: usize) -> Option<usize> {
        self.block(kind).map(|b| b.offset + t)
    }

    /// Interaction entries are site-major: `(site - 1) * n_times + t`.
    pub fn interaction_index(&self, site: usize, t: usize) -> Option<usize> {
        self.block(BlockKind::Interaction)
            .map(|b| b.offset + (site - 1) * self.n_times + t)
    }
}
