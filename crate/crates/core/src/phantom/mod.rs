//! Synthetic vessels, trees, volumes and feature tables with known answers.
//!
//! Every generator is a pure function of its spec, seed included.

pub mod case;
pub mod dataset;
pub mod profile;
pub mod tree;
pub mod volume;

pub use case::{gen_case, write_case, CaseLesionTruth, CaseSpec, CaseTruth, PhantomCase};
pub use dataset::{gen_feature_dataset, DatasetSpec, DatasetTruth, Rule};
pub use profile::{
    gen_radius_profile, Baseline, LesionShape, LesionSpec, LesionTruth, ProfileSpec, ProfileTruth, Ripple,
};
pub use tree::{gen_coronary_tree, BifurcationTruth, TreeSpec, TreeTemplate, TreeTruth};
pub use volume::{gen_pcat_volume, paint_volume, GridSpec, HuSampler, PaintTube, VolumeSpec, VolumeTruth};
