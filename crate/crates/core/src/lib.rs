//! Product re-identification: color-histogram descriptors over nine image
//! planes, an in-memory gallery with a sharded exact k-NN search plane,
//! open-set decisions and confusion-matrix evaluation.

pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod index;
pub mod reid;
pub mod search_plane;
pub mod service;

pub use evaluation::{ConfusionMatrix, EvalError, Mislabel};
pub use features::{Descriptor, ExtractorConfig, FeatureError, FeatureVector};
pub use imaging::{AugmentedImage, ImageRGB, ImagingError, Mask};
pub use index::{GallerySnapshot, IndexError, IndexPartition, IndexStore, SearchHit};
pub use reid::{NoveltyThreshold, ReIDDecision, ReidError, Verdict};
pub use search_plane::{PlaneError, PlaneTopology, SearchRequest, SearchResponse};
